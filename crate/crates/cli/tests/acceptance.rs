//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use hnd_core::activations::{activation_quantile, read_activations, unit_summaries, ActivationSet, UnitSummary};
use hnd_core::dictionary::{
    synthesize_mask, ConceptDictionary, ConceptKind, ConceptMask, GlobalCategory, ImageRecord,
    LocalConcept,
};
use hnd_core::global::{score_unit, Selected};
use hnd_core::local::{local_probabilities, RegionImage, RegionSelection};
use hnd_core::par::Jobs;
use hnd_core::parts::{iou, ConceptIou, IouTable};
use hnd_core::raster::BinaryRaster;
use hnd_core::report::{curve_max_slope, sorted_probability_curve};
use hnd_core::synthetic::{generate, score_recovery, Plant, PlantTarget, PlantedSpec, Skew, LAYOUT};
use hnd_core::{dissect_layer, DissectConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok { Ok(()) } else { Err(msg()) }
}

fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

/// Runs the committed brute-force script and returns its `label -> {name: value}` lines.
fn oracle_output() -> Result<BTreeMap<String, BTreeMap<String, f64>>, String> {
    let script = workspace_root().join("scripts").join("brute_force_oracle.py");
    let out = Command::new("python3")
        .arg(&script)
        .output()
        .map_err(|e| format!("cannot run {}: {e}", script.display()))?;
    ensure(out.status.success(), || String::from_utf8_lossy(&out.stderr).into_owned())?;
    let text = String::from_utf8_lossy(&out.stdout).into_owned();
    let mut parsed = BTreeMap::new();
    for line in text.lines() {
        let Some(brace) = line.find('{') else { continue };
        let json = line[brace..].replace('\'', "\"");
        let Ok(map) = serde_json::from_str::<BTreeMap<String, serde_json::Value>>(&json) else { continue };
        let values = map
            .into_iter()
            .filter_map(|(k, v)| {
                let f = v.as_f64().or_else(|| v.as_str().and_then(|s| s.parse().ok()))?;
                Some((k, f))
            })
            .collect();
        parsed.insert(line[..brace].trim().to_string(), values);
    }
    Ok(parsed)
}

fn stage_one_example() -> Outcome {
    let summary = UnitSummary { unit_index: 0, max_scores: vec![0.25, 1.0, 0.5, 0.75], layer_max: 1.0 };
    let ids: Vec<String> = ["i1", "i2", "i3", "i4"].iter().map(|s| s.to_string()).collect();
    let sel: Vec<Selected> = [0, 0, 1, 1]
        .iter()
        .enumerate()
        .map(|(image, &subgroup)| Selected { image, subgroup })
        .collect();
    let cat = GlobalCategory::new("Cat", &["A", "B"]);
    ensure(cat.bias_threshold == 0.55, || format!("threshold {}", cat.bias_threshold))?;
    let p = score_unit(&summary, &sel, &ids, &cat).map_err(|e| e.to_string())?;
    let pa = p.probability("A").unwrap();
    ensure((pa - 0.5667).abs() <= 1e-4 && (pa - 17.0 / 30.0).abs() <= 1e-6, || format!("P_A = {pa}"))?;
    ensure(p.biased_subgroup.as_deref() == Some("A"), || format!("biased {:?}", p.biased_subgroup))?;
    let oracle = oracle_output()?;
    let op = oracle.get("global P").ok_or("oracle printed no global P")?;
    for s in ["A", "B"] {
        let (mine, theirs) = (p.probability(s).unwrap(), op[s]);
        ensure((mine - theirs).abs() <= 1e-6, || format!("{s}: engine {mine} oracle {theirs}"))?;
    }
    Ok(format!("P_A = {pa:.6}, biased A, oracle agrees"))
}

fn stage_three_example() -> Outcome {
    let concepts: Vec<String> = ["c1", "c2", "c3"].iter().map(|s| s.to_string()).collect();
    let selection = RegionSelection {
        region: "R".into(),
        concepts: concepts.clone(),
        images: [vec![0], vec![0, 1], vec![1], vec![2]]
            .into_iter()
            .enumerate()
            .map(|(image, concepts)| RegionImage { image, concepts })
            .collect(),
    };
    let table = IouTable {
        scores: concepts
            .iter()
            .zip([0.10, 0.05, 0.20])
            .map(|(c, iou)| ConceptIou { concept: c.clone(), iou, images: 1 })
            .collect(),
        ..IouTable::empty(0)
    };
    let summary = UnitSummary { unit_index: 0, max_scores: vec![0.2, 0.4, 0.6, 0.8], layer_max: 1.0 };
    let ids: Vec<String> = ["i1", "i2", "i3", "i4"].iter().map(|s| s.to_string()).collect();
    let p = local_probabilities(&summary, &selection, &ids, &table, 1.5).map_err(|e| e.to_string())?;
    let oracle = oracle_output()?;
    let op = oracle.get("local P").ok_or("oracle printed no local P")?;
    for (c, want) in concepts.iter().zip([0.066, 0.086, 0.848]) {
        let got = p.probability(c).unwrap();
        ensure((got - want).abs() <= 1e-3, || format!("{c}: {got} vs {want}"))?;
        ensure((got - op[c]).abs() <= 1e-3, || format!("{c}: engine {got} oracle {}", op[c]))?;
    }
    ensure(p.paired_concepts == vec!["c3".to_string()], || format!("paired {:?}", p.paired_concepts))?;
    Ok(format!(
        "P = [{:.4}, {:.4}, {:.4}], paired {{c3}}, oracle agrees",
        p.concepts[0].probability, p.concepts[1].probability, p.concepts[2].probability
    ))
}

fn iou_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x10);
    for trial in 0..1000 {
        let density_a: f64 = rng.random();
        let density_b: f64 = rng.random();
        let a: Vec<bool> = (0..64).map(|_| rng.random_bool(density_a)).collect();
        let b: Vec<bool> = (0..64).map(|_| rng.random_bool(density_b)).collect();
        let (inter, union) = a.iter().zip(&b).fold((0u32, 0u32), |(i, u), (&x, &y)| {
            (i + (x && y) as u32, u + (x || y) as u32)
        });
        let ra = BinaryRaster::from_fn(8, 8, |x, y| a[y * 8 + x]);
        let rb = BinaryRaster::from_fn(8, 8, |x, y| b[y * 8 + x]);
        let got = iou(std::iter::once((&ra, &rb)));
        // two empty masks score 0
        let want = Some(if union == 0 { 0.0 } else { inter as f64 / union as f64 });
        ensure(got == want, || format!("pair {trial}: {got:?} vs {want:?}"))?;
    }
    Ok("1000/1000 exact".into())
}

fn random_set(rng: &mut ChaCha8Rng, units: usize, images: usize, map: (usize, usize), dyadic: bool) -> ActivationSet {
    let ids: Vec<String> = (0..images).map(|i| format!("img{i:04}")).collect();
    let data: Vec<f32> = (0..units * images * map.0 * map.1)
        .map(|_| {
            if dyadic {
                // multiples of 125/1024: scaling by 1e3 or 1e-3 stays exact in f32
                rng.random_range(0u32..1024) as f32 * 125.0 / 1024.0
            } else {
                let v: f32 = rng.random_range(-1.0f32..4.0);
                v.max(0.0)
            }
        })
        .collect();
    ActivationSet::new("acc", units, ids, map, data).unwrap()
}

fn random_category(rng: &mut ChaCha8Rng, images: usize) -> (GlobalCategory, Vec<Selected>) {
    let k = rng.random_range(2usize..5);
    let names: Vec<String> = (0..k).map(|i| format!("s{i}")).collect();
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let sel = (0..images)
        .map(|image| Selected { image, subgroup: if image < k { image } else { rng.random_range(0..k) } })
        .collect();
    (GlobalCategory::new("Cat", &refs), sel)
}

fn probabilities(set: &ActivationSet, cat: &GlobalCategory, sel: &[Selected]) -> Vec<Vec<f64>> {
    unit_summaries(set, Jobs::SERIAL)
        .unwrap()
        .iter()
        .map(|s| {
            score_unit(s, sel, set.image_ids(), cat)
                .unwrap()
                .subgroups
                .iter()
                .map(|g| g.probability)
                .collect()
        })
        .collect()
}

fn scaled(set: &ActivationSet, c: f64) -> ActivationSet {
    let data = (0..set.unit_count())
        .flat_map(|u| set.unit_values(u).unwrap().iter().map(|&v| (f64::from(v) * c) as f32).collect::<Vec<_>>())
        .collect();
    ActivationSet::new(set.layer_name(), set.unit_count(), set.image_ids().to_vec(), set.map_dims(), data).unwrap()
}

fn invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x200);
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (mut normalization, mut scale, mut permutation, mut quantile, mut round_trip) = (0, 0, 0, 0, 0);
    let mut drift: f64 = 0.0;
    for instance in 0..200 {
        let images = rng.random_range(4usize..40);
        let units = rng.random_range(1usize..4);
        let map = (rng.random_range(1usize..4), rng.random_range(1usize..4));
        let set = random_set(&mut rng, units, images, map, instance % 2 == 0);
        let (cat, sel) = random_category(&mut rng, images);
        let base = probabilities(&set, &cat, &sel);

        for p in &base {
            let total: f64 = p.iter().sum();
            ensure((total - 1.0).abs() <= 1e-9, || format!("instance {instance}: sum {total}"))?;
        }
        normalization += 1;

        let grid = random_set(&mut rng, units, images, map, true);
        let grid_base = probabilities(&grid, &cat, &sel);
        for c in [1e-3, 1.0, 1e3] {
            let other = probabilities(&scaled(&grid, c), &cat, &sel);
            for (a, b) in grid_base.iter().flatten().zip(other.iter().flatten()) {
                ensure((a - b).abs() <= 1e-9, || format!("instance {instance}, c = {c}: {a} vs {b}"))?;
            }
        }
        // arbitrary f32 data: scaled inputs round on storage, so only report the drift
        for c in [1e-3, 1e3] {
            let other = probabilities(&scaled(&set, c), &cat, &sel);
            for (a, b) in base.iter().flatten().zip(other.iter().flatten()) {
                drift = drift.max((a - b).abs());
            }
        }
        scale += 1;

        let mut order: Vec<usize> = (0..images).collect();
        for i in (1..images).rev() {
            order.swap(i, rng.random_range(0..=i));
        }
        let permuted = set.select_images(&order).unwrap();
        let psel: Vec<Selected> = order
            .iter()
            .enumerate()
            .map(|(image, &old)| Selected { image, subgroup: sel[old].subgroup })
            .collect();
        ensure(probabilities(&permuted, &cat, &psel) == base, || format!("instance {instance}: permutation changed P"))?;
        permutation += 1;

        for u in 0..units {
            let mut last = f32::INFINITY;
            for q in [0.0001, 0.001, 0.005, 0.01, 0.05, 0.1, 0.25, 0.5, 0.9, 0.99] {
                let t = activation_quantile(&set, u, q).unwrap();
                ensure(t <= last, || format!("instance {instance}: quantile rose at q = {q}"))?;
                last = t;
            }
        }
        quantile += 1;

        let path = dir.path().join(format!("i{instance}.hnda"));
        set.write(&path).map_err(|e| e.to_string())?;
        let back = read_activations(&path).map_err(|e| e.to_string())?;
        ensure(
            back.image_ids() == set.image_ids() && back.map_dims() == set.map_dims() && back.unit_count() == units,
            || format!("instance {instance}: header changed"),
        )?;
        for u in 0..units {
            let (a, b) = (set.unit_values(u).unwrap(), back.unit_values(u).unwrap());
            ensure(a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits()), || {
                format!("instance {instance}: unit {u} not bit-exact")
            })?;
        }
        round_trip += 1;
    }
    Ok(format!(
        "normalization {normalization}, scale {scale}, permutation {permutation}, quantile {quantile}, round trip {round_trip}; \
         unrepresentable scalings drift {drift:.1e}"
    ))
}

fn planted_layer(seed: u64) -> PlantedSpec {
    let effects = [0.0, 0.5, 1.0, 2.0];
    let subgroups = [("Gender", "Female"), ("Age", "40-60"), ("ColorScheme", "gray"), ("Gender", "Male")];
    let mut spec = PlantedSpec::new(64, 200, seed);
    for u in 0..64 {
        let target = if (u / 4) % 2 == 0 {
            PlantTarget::Concept { concept: LAYOUT[(u / 8) % LAYOUT.len()].0.into() }
        } else {
            let (c, s) = subgroups[(u / 8) % subgroups.len()];
            PlantTarget::Subgroup { category: c.into(), subgroup: s.into() }
        };
        spec.plants.push(Plant { unit: u, target, effect: effects[u % 4] });
    }
    spec
}

/// Every seed must pass on its own, and so must the pooled counts.
fn planted_recovery() -> Outcome {
    let effects = [0.0, 0.5, 1.0, 2.0];
    let mut pooled = [(0usize, 0usize); 4];
    let (mut null_flagged, mut null_units) = (0usize, 0usize);
    let check = |recall: &[f64], rate: f64, who: &str| -> Result<(), String> {
        ensure(recall.windows(2).all(|w| w[0] <= w[1]), || format!("{who}: recall not monotone {recall:?}"))?;
        ensure(recall[3] >= 0.9, || format!("{who}: recall at 2 = {}", recall[3]))?;
        ensure(rate <= 0.10, || format!("{who}: flagged rate at 0 = {rate}"))
    };
    for seed in 0..8u64 {
        let g = generate(&planted_layer(seed)).map_err(|e| e.to_string())?;
        let report = dissect_layer(&g.dictionary, &g.activations, &DissectConfig::default(), "bench")
            .map_err(|e| e.to_string())?;
        let scores = score_recovery(&g.ground_truth, &report).map_err(|e| e.to_string())?;
        let mut recall = Vec::new();
        for (i, &d) in effects.iter().enumerate() {
            // at zero effect, recall is how often the unplanted target shows up anyway
            let e = scores.at(d).ok_or(format!("seed {seed}: no group at {d}"))?;
            recall.push(e.recall.unwrap_or(0.0));
            pooled[i].0 += e.recovered;
            pooled[i].1 += e.planted;
        }
        let null = scores.at(0.0).unwrap();
        null_flagged += null.flagged_units;
        null_units += null.planted;
        check(&recall, null.flagged_rate.unwrap_or(0.0), &format!("seed {seed}"))?;
    }
    let recall: Vec<f64> = pooled.iter().map(|&(r, n)| r as f64 / n as f64).collect();
    let rate = null_flagged as f64 / null_units as f64;
    check(&recall, rate, "pooled")?;
    Ok(format!(
        "8 seeds; pooled recall over delta 0/0.5/1/2 = [{:.3}, {:.3}, {:.3}, {:.3}], flagged rate at 0 = {rate:.3}",
        recall[0], recall[1], recall[2], recall[3]
    ))
}

fn grayscale_sweep() -> Outcome {
    let mut lines = Vec::new();
    for (layer, units, seed) in [("layer1", 64, 1u64), ("layer2", 128, 2), ("layer3", 256, 3)] {
        let mut at = Vec::new();
        for percent in [50.0, 100.0] {
            let mut spec = PlantedSpec::new(units, 200, seed);
            spec.layer_name = layer.into();
            spec.skew = Some(Skew { category: "ColorScheme".into(), subgroup: "gray".into(), percent, max_effect: 2.0 });
            let g = generate(&spec).map_err(|e| e.to_string())?;
            let r = dissect_layer(&g.dictionary, &g.activations, &DissectConfig::default(), "sweep")
                .map_err(|e| e.to_string())?;
            let color: Vec<_> = r
                .units
                .iter()
                .map(|u| u.global.iter().find(|p| p.category == "ColorScheme").unwrap())
                .collect();
            let biased = color.iter().filter(|p| p.biased_subgroup.is_some()).count();
            let gray: Vec<f64> = color.iter().map(|p| p.probability("gray").unwrap()).collect();
            let slope = curve_max_slope(&sorted_probability_curve(&gray), (units / 16).max(1));
            at.push((biased, slope));
        }
        let ((b50, s50), (b100, s100)) = (at[0], at[1]);
        ensure(b100 > b50, || format!("{layer}: biased {b50} -> {b100}"))?;
        ensure(s100 > s50, || format!("{layer}: slope {s50} -> {s100}"))?;
        lines.push(format!("{layer} biased {b50}->{b100} slope {s50:.3}->{s100:.3}"));
    }
    Ok(lines.join("; "))
}

/// Concept A hugs the unit's firing pattern on weakly activating images while
/// B sits inside a broader, much stronger response.
fn iou_winner_vs_probability_winner() -> Outcome {
    let (n_a, n_b, n_rest) = (21usize, 5usize, 974usize);
    let (w, h) = (4usize, 4usize);
    let a_mask = BinaryRaster::from_fn(w, h, |x, y| y == 0 && x < 2);
    let b_mask = BinaryRaster::from_fn(w, h, |x, y| x >= 2 && y >= 2);
    let b_fire = BinaryRaster::from_fn(w, h, |x, _| x >= 2);

    let mut images = Vec::new();
    let mut masks = Vec::new();
    let mut data = Vec::new();
    for i in 0..n_a + n_b + n_rest {
        let id = format!("img{i:04}");
        let mut rec = ImageRecord::new(id.clone(), w, h);
        rec.global_labels.insert("G".into(), if i % 2 == 0 { "x".into() } else { "y".into() });
        let (concept, fire, value) = if i < n_a {
            (Some(("A", &a_mask)), &a_mask, 0.2f32)
        } else if i < n_a + n_b {
            (Some(("B", &b_mask)), &b_fire, 1.0)
        } else {
            (None, &a_mask, 0.0)
        };
        if let Some((name, mask)) = concept {
            rec.local_labels.insert(name.into());
            masks.push(ConceptMask { image_id: id.clone(), concept_name: name.into(), raster: mask.clone() });
        }
        data.extend((0..w * h).map(|p| if fire.get(p % w, p / w) { value } else { 0.0 }));
        images.push(rec);
    }
    let ids: Vec<String> = images.iter().map(|r| r.image_id.clone()).collect();
    let dict = ConceptDictionary::new(
        vec![GlobalCategory::new("G", &["x", "y"])],
        vec![
            LocalConcept::new("A", ConceptKind::Attribute, "R"),
            LocalConcept::new("B", ConceptKind::FacialPart, "R"),
        ],
        vec!["R".into()],
        images,
        masks,
    )
    .map_err(|e| e.to_string())?;
    let set = ActivationSet::new("constructed", 1, ids, (h, w), data).map_err(|e| e.to_string())?;
    let report = dissect_layer(&dict, &set, &DissectConfig::default(), "constructed").map_err(|e| e.to_string())?;
    let u = &report.units[0];

    let (iou_a, iou_b) = (u.stage2.iou_of("A"), u.stage2.iou_of("B"));
    ensure(iou_a == Some(1.0) && iou_b == Some(0.5), || format!("IoU A {iou_a:?}, B {iou_b:?}"))?;
    ensure(u.stage2.top_concept.as_deref() == Some("A"), || format!("top {:?}", u.stage2.top_concept))?;
    ensure(u.stage2.assigned_region.as_deref() == Some("R"), || format!("region {:?}", u.stage2.assigned_region))?;
    ensure(u.baseline.top_concept.as_deref() == Some("A"), || format!("baseline {:?}", u.baseline.top_concept))?;
    let p = u.stage3.as_ref().ok_or("no stage III result")?;
    // ranks 1..21 at 0.2 for A, 22..26 at 1.0 for B
    let (cs_a, cs_b) = (0.2 * 11.0 * 1.0, 24.0 * 0.5);
    let want_b = cs_b / (cs_a + cs_b);
    let got_b = p.probability("B").unwrap();
    ensure((got_b - want_b).abs() <= 1e-6, || format!("P_B {got_b} vs {want_b}"))?;
    ensure(u.paired_concepts() == ["B".to_string()], || format!("paired {:?}", u.paired_concepts()))?;
    Ok(format!(
        "baseline A (IoU 1.0) vs hierarchy B (IoU 0.5, P {got_b:.4} > {:.2})",
        p.threshold
    ))
}

fn mask_area() -> Outcome {
    let q = 5.991;
    let mut worst: f64 = 0.0;
    for sigma in [8.0, 12.0, 16.0, 24.0] {
        let c = 64.0;
        // sample variance of each set equals sigma^2 along every axis
        let cross = sigma * 1.5f64.sqrt();
        let sets = [
            vec![(c - cross, c), (c + cross, c), (c, c - cross), (c, c + cross)],
            (0..12)
                .map(|k| {
                    let t = k as f64 * std::f64::consts::PI / 6.0;
                    let r = sigma * (2.0 * 11.0 / 12.0f64).sqrt();
                    (c + r * t.cos(), c + r * t.sin())
                })
                .collect(),
        ];
        for pts in &sets {
            let m = synthesize_mask(pts, (128, 128), 0.95).map_err(|e| e.to_string())?;
            let expected = std::f64::consts::PI * sigma * sigma * q;
            let rel = (m.count() as f64 - expected).abs() / expected;
            worst = worst.max(rel);
            ensure(rel <= 0.05, || format!("sigma {sigma}, {} points: area {} vs {expected:.1}", pts.len(), m.count()))?;
        }
    }
    Ok(format!("worst relative error {:.2}%", worst * 100.0))
}

fn determinism() -> Outcome {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests").join("fixtures");
    let golden = std::fs::read(fixtures.join("toy_report.json")).map_err(|e| e.to_string())?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let n = std::thread::available_parallelism().map_or(4, |n| n.get()).max(2).to_string();
    for (i, jobs) in ["1", n.as_str(), "1", n.as_str()].iter().enumerate() {
        let out = dir.path().join(format!("run{i}"));
        let status = Command::new(env!("CARGO_BIN_EXE_hnd"))
            .arg("dissect")
            .arg("--manifest")
            .arg(fixtures.join("toy").join("manifest.json"))
            .arg("--activations")
            .arg(format!("toy={}", fixtures.join("toy").join("toy.hnda").display()))
            .args(["--model-name", "toy", "--jobs", jobs, "--out"])
            .arg(&out)
            .env("HND_LOG", "error")
            .output()
            .map_err(|e| e.to_string())?;
        ensure(status.status.success(), || String::from_utf8_lossy(&status.stderr).into_owned())?;
        let bytes = std::fs::read(out.join("report.json")).map_err(|e| e.to_string())?;
        ensure(bytes == golden, || format!("run {i} with --jobs {jobs} differs from golden"))?;
    }
    Ok(format!("4 runs (--jobs 1 and {n}) byte-identical to golden"))
}

type Check = fn() -> Outcome;

fn main() -> ExitCode {
    let checks: [(&str, Check, Option<Duration>); 9] = [
        ("stage I worked example", stage_one_example, Some(Duration::from_secs(1))),
        ("stage III worked example", stage_three_example, Some(Duration::from_secs(1))),
        ("IoU oracle equivalence", iou_oracle, Some(Duration::from_secs(5))),
        ("invariant suite", invariants, Some(Duration::from_secs(60))),
        ("planted-bias recovery", planted_recovery, Some(Duration::from_secs(120))),
        ("grayscale sweep", grayscale_sweep, Some(Duration::from_secs(120))),
        ("IoU winner vs probability winner", iou_winner_vs_probability_winner, None),
        ("mask synthesis area", mask_area, None),
        ("full-pipeline determinism", determinism, None),
    ];
    let mut failed = 0;
    for (name, check, budget) in checks {
        let start = Instant::now();
        let result = check();
        let took = start.elapsed();
        let result = match (result, budget) {
            (Ok(_), Some(b)) if took > b => Err(format!("took {took:?}, budget {b:?}")),
            (r, _) => r,
        };
        match result {
            Ok(detail) => println!("PASS  {name}: {detail} ({took:.2?})"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why} ({took:.2?})");
            }
        }
    }
    println!("{} passed, {failed} failed", 9 - failed);
    if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE }
}
