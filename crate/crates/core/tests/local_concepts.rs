use std::collections::BTreeSet;

use hnd_core::activations::UnitSummary;
use hnd_core::dictionary::{
    ConceptDictionary, ConceptKind, ConceptMask, GlobalCategory, ImageRecord, LocalConcept,
};
use hnd_core::local::{local_probabilities, select_region_maps, RegionImage, RegionSelection};
use hnd_core::parts::{ConceptIou, IouTable};
use hnd_core::raster::BinaryRaster;
use proptest::prelude::*;

fn table(ious: &[f64], names: &[String]) -> IouTable {
    IouTable {
        scores: names
            .iter()
            .zip(ious)
            .map(|(c, &iou)| ConceptIou { concept: c.clone(), iou, images: 1 })
            .collect(),
        ..IouTable::empty(0)
    }
}

#[derive(Debug, Clone)]
struct Case {
    concepts: Vec<String>,
    ms: Vec<f32>,
    membership: Vec<Vec<usize>>,
    ious: Vec<f64>,
}

impl Case {
    fn ids(&self) -> Vec<String> {
        (0..self.ms.len()).map(|i| format!("img{i:03}")).collect()
    }

    fn selection(&self) -> RegionSelection {
        RegionSelection {
            region: "R".into(),
            concepts: self.concepts.clone(),
            images: self
                .membership
                .iter()
                .enumerate()
                .map(|(image, c)| RegionImage { image, concepts: c.clone() })
                .collect(),
        }
    }

    fn summary(&self) -> UnitSummary {
        UnitSummary {
            unit_index: 0,
            max_scores: self.ms.clone(),
            layer_max: self.ms.iter().copied().fold(0.0, f32::max),
        }
    }
}

fn arb_case() -> impl Strategy<Value = Case> {
    (2usize..7, 1usize..20).prop_flat_map(|(k, n)| {
        (
            proptest::collection::vec(0.01f32..10.0, n),
            proptest::collection::vec(proptest::collection::btree_set(0..k, 1..=k), n),
            proptest::collection::vec(0.001f64..0.5, k),
        )
            .prop_map(move |(ms, membership, ious)| Case {
                concepts: (0..k).map(|c| format!("c{c}")).collect(),
                ms,
                membership: membership.into_iter().map(|s| s.into_iter().collect()).collect(),
                ious,
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn iou_scaling_cancels(case in arb_case(), c in 0.01f64..50.0) {
        let base = local_probabilities(&case.summary(), &case.selection(), &case.ids(), &table(&case.ious, &case.concepts), 1.5).unwrap();
        let scaled: Vec<f64> = case.ious.iter().map(|v| v * c).collect();
        let other = local_probabilities(&case.summary(), &case.selection(), &case.ids(), &table(&scaled, &case.concepts), 1.5).unwrap();
        for (a, b) in base.concepts.iter().zip(&other.concepts) {
            prop_assert!((a.probability - b.probability).abs() < 1e-12);
        }
        let near_threshold = base.concepts.iter().any(|x| (x.probability - base.threshold).abs() < 1e-9);
        if !near_threshold {
            prop_assert_eq!(base.paired_concepts, other.paired_concepts);
        }
    }

    #[test]
    fn pairings_are_bounded(case in arb_case()) {
        let p = local_probabilities(&case.summary(), &case.selection(), &case.ids(), &table(&case.ious, &case.concepts), 1.5).unwrap();
        let total: f64 = p.concepts.iter().map(|c| c.probability).sum();
        prop_assert!((total - 1.0).abs() < 1e-9);
        let k = case.concepts.len();
        prop_assert!(p.paired_concepts.len() <= (k as f64 / 1.5).floor() as usize);
        for c in &p.paired_concepts {
            prop_assert!(case.concepts.contains(c));
        }
    }

    #[test]
    fn ties_split_evenly_and_never_pair(k in 2usize..8, n in 1usize..10, ms in 0.1f32..5.0) {
        let case = Case {
            concepts: (0..k).map(|c| format!("c{c}")).collect(),
            ms: vec![ms; n],
            membership: vec![(0..k).collect(); n],
            ious: vec![0.2; k],
        };
        let p = local_probabilities(&case.summary(), &case.selection(), &case.ids(), &table(&case.ious, &case.concepts), 1.5).unwrap();
        for c in &p.concepts {
            prop_assert!((c.probability - 1.0 / k as f64).abs() < 1e-12);
        }
        prop_assert!(p.paired_concepts.is_empty());
    }

    #[test]
    fn removing_a_non_supporting_image_changes_nothing(
        labels in proptest::collection::vec(proptest::collection::btree_set(0usize..4, 0..3), 4..16),
        ms in proptest::collection::vec(0.1f32..10.0, 16),
    ) {
        // concepts 0..3 belong to R, concept 3 to Q
        let names = ["r0", "r1", "r2", "q0"];
        let concepts = vec![
            LocalConcept::new("r0", ConceptKind::Attribute, "R"),
            LocalConcept::new("r1", ConceptKind::ActionUnit, "R"),
            LocalConcept::new("r2", ConceptKind::FacialPart, "R"),
            LocalConcept::new("q0", ConceptKind::Attribute, "Q"),
        ];
        let n = labels.len();
        let ids: Vec<String> = (0..n).map(|i| format!("im{i:02}")).collect();
        let mut images = Vec::new();
        let mut masks = Vec::new();
        for (i, set) in labels.iter().enumerate() {
            let mut rec = ImageRecord::new(ids[i].clone(), 2, 2);
            rec.local_labels = set.iter().map(|&c| names[c].to_string()).collect::<BTreeSet<_>>();
            for c in &rec.local_labels {
                masks.push(ConceptMask { image_id: ids[i].clone(), concept_name: c.clone(), raster: BinaryRaster::filled(2, 2) });
            }
            images.push(rec);
        }
        let dict = ConceptDictionary::new(
            vec![GlobalCategory::new("G", &["a", "b"])],
            concepts,
            vec!["R".into(), "Q".into()],
            images,
            masks,
        ).unwrap();
        let victim = labels.iter().position(|s| s.iter().all(|&c| c == 3));
        prop_assume!(victim.is_some());
        let victim = victim.unwrap();
        let ms = &ms[..n];
        let layer_max = ms.iter().copied().fold(0.0, f32::max);
        // keep the layer maximum so normalized scores stay put
        prop_assume!(ms[victim] < layer_max);
        prop_assume!(select_region_maps(&dict, &ids, "R").is_ok());

        let region_names: Vec<String> = names[..3].iter().map(|s| s.to_string()).collect();
        let ious = table(&[0.1, 0.2, 0.05], &region_names);
        let summary = UnitSummary { unit_index: 0, max_scores: ms.to_vec(), layer_max };
        let full = local_probabilities(&summary, &select_region_maps(&dict, &ids, "R").unwrap(), &ids, &ious, 1.5).unwrap();

        let kept: Vec<usize> = (0..n).filter(|&i| i != victim).collect();
        let ids2: Vec<String> = kept.iter().map(|&i| ids[i].clone()).collect();
        let summary2 = UnitSummary { unit_index: 0, max_scores: kept.iter().map(|&i| ms[i]).collect(), layer_max };
        let reduced = local_probabilities(&summary2, &select_region_maps(&dict, &ids2, "R").unwrap(), &ids2, &ious, 1.5).unwrap();
        prop_assert_eq!(full, reduced);
    }
}

#[test]
fn worked_three_concept_example() {
    let case = Case {
        concepts: vec!["c1".into(), "c2".into(), "c3".into()],
        ms: vec![0.2, 0.4, 0.6, 0.8],
        membership: vec![vec![0], vec![0, 1], vec![1], vec![2]],
        ious: vec![0.10, 0.05, 0.20],
    };
    let mut summary = case.summary();
    summary.layer_max = 1.0;
    let p = local_probabilities(&summary, &case.selection(), &case.ids(), &table(&case.ious, &case.concepts), 1.5)
        .unwrap();
    let expected = [0.066_225_165_562_913_91, 0.086_092_715_231_788_08, 0.847_682_119_205_298];
    for (c, e) in p.concepts.iter().zip(expected) {
        assert!((c.probability - e).abs() < 1e-3);
    }
    assert_eq!(p.paired_concepts, vec!["c3".to_string()]);
}
