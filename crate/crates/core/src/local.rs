//! Stage III: IoU-scaled rank-weighted probabilities over the concepts of a
//! unit's assigned region.

use serde::{Deserialize, Serialize};

use crate::activations::UnitSummary;
use crate::dictionary::ConceptDictionary;
use crate::error::{Error, Result};
use crate::global::{normalized_score, rank_order};
use crate::parts::IouTable;

pub const DEFAULT_LOCAL_FACTOR: f64 = 1.5;

/// An image supporting at least one concept of the region.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegionImage {
    /// Index into the activation set's image list.
    pub image: usize,
    /// Positions (into the region's concept list) of the concepts present.
    pub concepts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionSelection {
    pub region: String,
    /// All concepts of the region, in dictionary order.
    pub concepts: Vec<String>,
    pub images: Vec<RegionImage>,
}

/// Images of the activation set labeled with at least one concept of `region`.
pub fn select_region_maps(
    dict: &ConceptDictionary,
    image_ids: &[String],
    region: &str,
) -> Result<RegionSelection> {
    if dict.region(region).is_none() {
        return Err(Error::UnknownRegion(region.to_string()));
    }
    let concepts: Vec<String> = dict
        .region_concepts(region)
        .into_iter()
        .map(|i| dict.concepts[i].name.clone())
        .collect();
    let mut images = Vec::new();
    for (n, id) in image_ids.iter().enumerate() {
        let img = dict
            .image(id)
            .ok_or_else(|| Error::UnknownImage(id.clone()))?;
        let present: Vec<usize> = concepts
            .iter()
            .enumerate()
            .filter(|(_, c)| img.local_labels.contains(*c))
            .map(|(k, _)| k)
            .collect();
        if !present.is_empty() {
            images.push(RegionImage {
                image: n,
                concepts: present,
            });
        }
    }
    if images.is_empty() {
        return Err(Error::EmptyRegionSupport(region.to_string()));
    }
    Ok(RegionSelection {
        region: region.to_string(),
        concepts,
        images,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalConceptProbability {
    pub concept: String,
    /// Supporting images in the selection.
    pub support: usize,
    /// Rank-weighted score before IoU scaling.
    pub raw_score: f64,
    pub iou: f64,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalPairing {
    pub unit_index: usize,
    pub region: String,
    /// Number of concepts in the region.
    pub k: usize,
    pub threshold: f64,
    pub concepts: Vec<LocalConceptProbability>,
    pub paired_concepts: Vec<String>,
    /// Every scaled score was zero; the unit stays region-only.
    pub all_zero: bool,
}

impl LocalPairing {
    pub fn probability(&self, concept: &str) -> Option<f64> {
        self.concepts
            .iter()
            .find(|c| c.concept == concept)
            .map(|c| c.probability)
    }
}

pub fn local_probabilities(
    summary: &UnitSummary,
    selection: &RegionSelection,
    image_ids: &[String],
    iou: &IouTable,
    local_factor: f64,
) -> Result<LocalPairing> {
    if selection.images.is_empty() {
        return Err(Error::EmptyRegionSupport(selection.region.clone()));
    }
    let k = selection.concepts.len();
    let keys: Vec<(f64, &str)> = selection
        .images
        .iter()
        .map(|ri| {
            (
                normalized_score(summary.max_scores[ri.image], summary.layer_max),
                image_ids[ri.image].as_str(),
            )
        })
        .collect();

    let mut sums = vec![0.0f64; k];
    let mut support = vec![0usize; k];
    for (pos, i) in rank_order(&keys).into_iter().enumerate() {
        let weighted = (pos + 1) as f64 * keys[i].0;
        for &c in &selection.images[i].concepts {
            sums[c] += weighted;
            support[c] += 1;
        }
    }

    let mut concepts: Vec<LocalConceptProbability> = selection
        .concepts
        .iter()
        .enumerate()
        .map(|(c, name)| LocalConceptProbability {
            concept: name.clone(),
            support: support[c],
            raw_score: if support[c] > 0 {
                sums[c] / support[c] as f64
            } else {
                0.0
            },
            iou: iou.iou_of(name).unwrap_or(0.0),
            probability: 0.0,
        })
        .collect();
    let scaled: Vec<f64> = concepts.iter().map(|c| c.raw_score * c.iou).collect();
    let total: f64 = scaled.iter().sum();
    let threshold = local_factor / k as f64;
    let all_zero = total <= 0.0;
    let mut paired_concepts = Vec::new();
    if !all_zero {
        for (c, s) in concepts.iter_mut().zip(&scaled) {
            c.probability = s / total;
            if c.probability > threshold {
                paired_concepts.push(c.concept.clone());
            }
        }
    }
    Ok(LocalPairing {
        unit_index: summary.unit_index,
        region: selection.region.clone(),
        k,
        threshold,
        concepts,
        paired_concepts,
        all_zero,
    })
}
