//! Stage II: IoU between thresholded unit maps and local-concept masks, and
//! assignment of each unit to the facial region of its best concept.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::activations::ActivationSet;
use crate::dictionary::ConceptDictionary;
use crate::error::{Error, Result};
use crate::raster::BinaryRaster;

/// Units whose best IoU falls below this are uninterpretable.
pub const DEFAULT_IOU_CUTOFF: f64 = 0.04;

#[derive(Debug, Clone, Copy)]
struct Tap {
    lo: usize,
    hi: usize,
    frac: f64,
}

fn taps(input: usize, output: usize) -> Vec<Tap> {
    let scale = input as f64 / output as f64;
    (0..output)
        .map(|o| {
            let pos = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (input - 1) as f64);
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(input - 1);
            Tap {
                lo,
                hi,
                frac: pos - lo as f64,
            }
        })
        .collect()
}

#[inline]
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + t * (b - a)
}

/// Bilinearly upsamples a row-major `map_h x map_w` map to `width x height`
/// with center-aligned sampling and edge clamping, keeping pixels `>= threshold`.
pub fn threshold_and_upsample(
    map: &[f32],
    (map_h, map_w): (usize, usize),
    threshold: f32,
    (width, height): (usize, usize),
) -> BinaryRaster {
    debug_assert_eq!(map.len(), map_h * map_w);
    let xs = taps(map_w, width);
    let ys = taps(map_h, height);
    let t = f64::from(threshold);
    let at = |r: usize, c: usize| f64::from(map[r * map_w + c]);
    let mut out = BinaryRaster::new(width, height);
    let mut row_lo = vec![0.0f64; map_w];
    let mut row_hi = vec![0.0f64; map_w];
    for (y, ty) in ys.iter().enumerate() {
        // interpolate vertically once per source column
        for c in 0..map_w {
            row_lo[c] = at(ty.lo, c);
            row_hi[c] = at(ty.hi, c);
        }
        let col: Vec<f64> = (0..map_w)
            .map(|c| lerp(row_lo[c], row_hi[c], ty.frac))
            .collect();
        for (x, tx) in xs.iter().enumerate() {
            if lerp(col[tx.lo], col[tx.hi], tx.frac) >= t {
                out.set(x, y, true);
            }
        }
    }
    out
}

/// Running intersection and union pixel counts for one concept.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IouCounts {
    pub intersection: u64,
    pub union: u64,
    pub images: usize,
}

impl IouCounts {
    pub fn add(&mut self, unit_mask: &BinaryRaster, concept_mask: &BinaryRaster) {
        let inter = unit_mask.intersection_count(concept_mask);
        self.intersection += inter;
        self.union += unit_mask.count() + concept_mask.count() - inter;
        self.images += 1;
    }

    /// `None` when no labeled image contributed.
    pub fn iou(&self) -> Option<f64> {
        if self.images == 0 {
            None
        } else if self.union == 0 {
            Some(0.0)
        } else {
            Some(self.intersection as f64 / self.union as f64)
        }
    }
}

/// Dataset-level IoU over `(unit mask, concept mask)` pairs, one per labeled image.
pub fn iou<'a>(pairs: impl IntoIterator<Item = (&'a BinaryRaster, &'a BinaryRaster)>) -> Option<f64> {
    let mut acc = IouCounts::default();
    for (m, l) in pairs {
        if m.dims() != l.dims() {
            return None;
        }
        acc.add(m, l);
    }
    acc.iou()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptIou {
    pub concept: String,
    pub iou: f64,
    pub images: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IouTable {
    pub unit_index: usize,
    /// Activation threshold used to binarize this unit's maps.
    pub activation_threshold: f32,
    /// Concepts with at least one labeled image, in dictionary order.
    pub scores: Vec<ConceptIou>,
    pub top_concept: Option<String>,
    pub top_iou: f64,
    pub assigned_region: Option<String>,
}

impl IouTable {
    pub fn empty(unit_index: usize) -> Self {
        Self {
            unit_index,
            activation_threshold: 0.0,
            scores: Vec::new(),
            top_concept: None,
            top_iou: 0.0,
            assigned_region: None,
        }
    }

    pub fn iou_of(&self, concept: &str) -> Option<f64> {
        self.scores.iter().find(|s| s.concept == concept).map(|s| s.iou)
    }
}

/// Picks the top concept (ties to the smaller name) and its region when the
/// top IoU reaches `cutoff`.
pub fn assign_region(mut table: IouTable, dict: &ConceptDictionary, cutoff: f64) -> IouTable {
    let top = table.scores.iter().fold(None::<&ConceptIou>, |best, s| match best {
        Some(b) if b.iou > s.iou || (b.iou == s.iou && b.concept <= s.concept) => Some(b),
        _ => Some(s),
    });
    match top {
        Some(t) => {
            table.top_concept = Some(t.concept.clone());
            table.top_iou = t.iou;
            table.assigned_region = (t.iou >= cutoff)
                .then(|| dict.concept(&t.concept).map(|c| c.region.clone()))
                .flatten();
        }
        None => {
            table.top_concept = None;
            table.top_iou = 0.0;
            table.assigned_region = None;
        }
    }
    table
}

/// Masks of every locally labeled image in an activation set, resolved ahead
/// of the per-unit fan-out.
/// `(width, height)` of a labeled image and its `(concept index, mask)` pairs.
type LabeledImage = ((usize, usize), Vec<(usize, Arc<BinaryRaster>)>);

#[derive(Debug)]
pub struct LocalIndex {
    /// One entry per activation-set image.
    images: Vec<Option<LabeledImage>>,
    concept_names: Vec<String>,
    labeled_images: Vec<usize>,
}

impl LocalIndex {
    pub fn build(dict: &ConceptDictionary, image_ids: &[String]) -> Result<Self> {
        let mut images = Vec::with_capacity(image_ids.len());
        let mut labeled_images = vec![0usize; dict.concepts.len()];
        for id in image_ids {
            let img = dict
                .image(id)
                .ok_or_else(|| Error::UnknownImage(id.clone()))?;
            if img.local_labels.is_empty() {
                images.push(None);
                continue;
            }
            let mut masks = Vec::with_capacity(img.local_labels.len());
            for concept in &img.local_labels {
                let idx = dict
                    .concept_index(concept)
                    .ok_or_else(|| Error::UnknownConcept(concept.clone()))?;
                let mask = dict.mask(id, concept)?;
                if mask.dims() != (img.width, img.height) {
                    return Err(Error::DimensionMismatch {
                        what: format!("mask ({id}, {concept})"),
                        expected: (img.width, img.height),
                        found: mask.dims(),
                    });
                }
                labeled_images[idx] += 1;
                masks.push((idx, mask));
            }
            images.push(Some(((img.width, img.height), masks)));
        }
        Ok(Self {
            images,
            concept_names: dict.concepts.iter().map(|c| c.name.clone()).collect(),
            labeled_images,
        })
    }

    /// Concepts with no labeled image in this activation set.
    pub fn unlabeled_concepts(&self) -> Vec<&str> {
        self.concept_names
            .iter()
            .zip(&self.labeled_images)
            .filter(|(_, &n)| n == 0)
            .map(|(c, _)| c.as_str())
            .collect()
    }

    /// Accumulates IoU counts for every concept given a unit's `N * h * w` values.
    pub fn accumulate(
        &self,
        values: &[f32],
        map_dims: (usize, usize),
        threshold: f32,
    ) -> Vec<IouCounts> {
        let map_len = map_dims.0 * map_dims.1;
        let mut counts = vec![IouCounts::default(); self.concept_names.len()];
        for (n, entry) in self.images.iter().enumerate() {
            let Some((dims, masks)) = entry else { continue };
            let map = &values[n * map_len..(n + 1) * map_len];
            let unit_mask = threshold_and_upsample(map, map_dims, threshold, *dims);
            for (concept, mask) in masks {
                counts[*concept].add(&unit_mask, mask);
            }
        }
        counts
    }

    /// Builds the (unassigned) IoU table from accumulated counts.
    pub fn table(&self, unit_index: usize, threshold: f32, counts: &[IouCounts]) -> IouTable {
        let scores = self
            .concept_names
            .iter()
            .zip(counts)
            .filter_map(|(name, c)| {
                c.iou().map(|iou| ConceptIou {
                    concept: name.clone(),
                    iou,
                    images: c.images,
                })
            })
            .collect();
        IouTable {
            unit_index,
            activation_threshold: threshold,
            scores,
            top_concept: None,
            top_iou: 0.0,
            assigned_region: None,
        }
    }
}

/// Stage II for a single unit with a precomputed activation threshold.
pub fn unit_iou_table(
    set: &ActivationSet,
    unit: usize,
    threshold: f32,
    index: &LocalIndex,
    dict: &ConceptDictionary,
    cutoff: f64,
) -> Result<IouTable> {
    let values = set.unit_values(unit)?;
    let counts = index.accumulate(&values, set.map_dims(), threshold);
    Ok(assign_region(index.table(unit, threshold, &counts), dict, cutoff))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dictionary::{ConceptKind, GlobalCategory, LocalConcept};

    #[test]
    fn constant_map_binarizes_with_ge() {
        let map = [5.0f32; 9];
        assert_eq!(threshold_and_upsample(&map, (3, 3), 5.0, (7, 5)).count(), 35);
        assert_eq!(threshold_and_upsample(&map, (3, 3), 6.0, (7, 5)).count(), 0);
    }

    #[test]
    fn corner_peak_stays_in_its_quadrant() {
        let r = threshold_and_upsample(&[1.0, 0.0, 0.0, 0.0], (2, 2), 0.75, (4, 4));
        let fg: Vec<_> = r.iter_foreground().collect();
        assert_eq!(fg, vec![(0, 0), (1, 0), (0, 1)]);
    }

    #[test]
    fn identity_rows_when_sizes_match() {
        let map: Vec<f32> = (0..12).map(|v| v as f32).collect();
        let r = threshold_and_upsample(&map, (3, 4), 6.0, (4, 3));
        for y in 0..3 {
            for x in 0..4 {
                assert_eq!(r.get(x, y), map[y * 4 + x] >= 6.0);
            }
        }
    }

    #[test]
    fn iou_cases() {
        let m = BinaryRaster::from_fn(2, 2, |_, y| y == 0);
        let l = BinaryRaster::from_fn(2, 2, |x, y| x == 0 && y == 0);
        assert_eq!(iou([(&m, &l)]), Some(0.5));
        assert_eq!(iou([(&m, &m)]), Some(1.0));
        let d = BinaryRaster::from_fn(2, 2, |_, y| y == 1);
        assert_eq!(iou([(&m, &d)]), Some(0.0));
        assert_eq!(iou(std::iter::empty()), None);
    }

    fn dict() -> ConceptDictionary {
        ConceptDictionary::new(
            vec![GlobalCategory::new("G", &["a", "b"])],
            vec![
                LocalConcept::new("Eyeglasses", ConceptKind::Attribute, "EyeRegion"),
                LocalConcept::new("Bags", ConceptKind::Attribute, "EyeRegion"),
                LocalConcept::new("Smiling", ConceptKind::Attribute, "MouthRegion"),
            ],
            vec!["EyeRegion".into(), "MouthRegion".into()],
            vec![],
            vec![],
        )
        .unwrap()
    }

    fn table(scores: &[(&str, f64)]) -> IouTable {
        IouTable {
            scores: scores
                .iter()
                .map(|&(c, iou)| ConceptIou {
                    concept: c.into(),
                    iou,
                    images: 1,
                })
                .collect(),
            ..IouTable::empty(0)
        }
    }

    #[test]
    fn region_follows_top_concept() {
        let t = assign_region(table(&[("Eyeglasses", 0.12), ("Smiling", 0.05)]), &dict(), 0.04);
        assert_eq!(t.assigned_region.as_deref(), Some("EyeRegion"));
        assert_eq!(t.top_concept.as_deref(), Some("Eyeglasses"));
    }

    #[test]
    fn below_cutoff_is_unassigned() {
        let t = assign_region(table(&[("Eyeglasses", 0.03)]), &dict(), 0.04);
        assert_eq!(t.assigned_region, None);
        assert_eq!(t.top_iou, 0.03);
    }

    #[test]
    fn ties_go_to_smaller_name() {
        let t = assign_region(table(&[("Smiling", 0.1), ("Bags", 0.1), ("Eyeglasses", 0.1)]), &dict(), 0.04);
        assert_eq!(t.top_concept.as_deref(), Some("Bags"));
    }
}
