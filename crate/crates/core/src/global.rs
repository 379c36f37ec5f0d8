//! Stage I: rank-weighted scoring of global-concept subgroups.
//!
//! Every selected map is ranked by its maximum activation (lowest = 1). A
//! subgroup's concept score is the mean of `rank * max_score` over its images,
//! and probabilities are the scores normalized to sum to one.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::activations::{ActivationSet, UnitSummary};
use crate::dictionary::{ConceptDictionary, GlobalCategory};
use crate::error::{Error, Result};
use crate::par::{self, Jobs};

/// One image taking part in a ranking.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Selected {
    /// Index into the activation set's image list.
    pub image: usize,
    /// Subgroup index within the category.
    pub subgroup: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedEntry {
    pub image: usize,
    pub subgroup: usize,
    /// Maximum activation divided by the layer maximum.
    pub score: f64,
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedMaps {
    pub category: String,
    /// Entries in ascending rank order.
    pub entries: Vec<RankedEntry>,
}

/// Scales a raw map maximum into `[0, 1]` by the layer maximum.
///
/// Negative maxima contribute nothing; a non-positive layer maximum disables
/// the scaling (the layer is treated as inactive upstream).
pub fn normalized_score(max_score: f32, layer_max: f32) -> f64 {
    let v = f64::from(max_score.max(0.0));
    if layer_max > 0.0 {
        v / f64::from(layer_max)
    } else {
        v
    }
}

/// Ranks `(score, image_id)` pairs: 1 for the smallest score, ties broken by
/// ascending image id. Returns the entry indices in ascending rank order.
pub fn rank_order(keys: &[(f64, &str)]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..keys.len()).collect();
    order.sort_by(|&a, &b| {
        keys[a]
            .0
            .total_cmp(&keys[b].0)
            .then_with(|| keys[a].1.cmp(keys[b].1))
    });
    order
}

pub fn rank_maps(
    summary: &UnitSummary,
    selection: &[Selected],
    image_ids: &[String],
    category: &str,
) -> Result<RankedMaps> {
    if selection.is_empty() {
        return Err(Error::EmptySelection(category.to_string()));
    }
    let keys: Vec<(f64, &str)> = selection
        .iter()
        .map(|s| {
            (
                normalized_score(summary.max_scores[s.image], summary.layer_max),
                image_ids[s.image].as_str(),
            )
        })
        .collect();
    let entries = rank_order(&keys)
        .into_iter()
        .enumerate()
        .map(|(pos, i)| RankedEntry {
            image: selection[i].image,
            subgroup: selection[i].subgroup,
            score: keys[i].0,
            rank: pos + 1,
        })
        .collect();
    Ok(RankedMaps {
        category: category.to_string(),
        entries,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubgroupScore {
    /// Number of ranked images in the subgroup.
    pub images: usize,
    /// Mean of `rank * score` over those images; `None` when `images == 0`.
    pub score: Option<f64>,
}

/// Concept score per subgroup. Summation follows rank order so the result does
/// not depend on the order of the selection.
pub fn concept_scores(ranked: &RankedMaps, subgroup_count: usize) -> Vec<SubgroupScore> {
    let mut sums = vec![0.0f64; subgroup_count];
    let mut counts = vec![0usize; subgroup_count];
    for e in &ranked.entries {
        sums[e.subgroup] += e.rank as f64 * e.score;
        counts[e.subgroup] += 1;
    }
    sums.into_iter()
        .zip(counts)
        .map(|(sum, images)| SubgroupScore {
            images,
            score: (images > 0).then(|| sum / images as f64),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupProbability {
    pub subgroup: String,
    pub images: usize,
    pub raw_score: f64,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalProbabilities {
    pub unit_index: usize,
    pub category: String,
    pub threshold: f64,
    /// Subgroups with at least one image, in declaration order.
    pub subgroups: Vec<SubgroupProbability>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dropped_subgroups: Vec<String>,
    pub biased_subgroup: Option<String>,
    pub inactive: bool,
}

impl GlobalProbabilities {
    pub fn probability(&self, subgroup: &str) -> Option<f64> {
        self.subgroups
            .iter()
            .find(|s| s.subgroup == subgroup)
            .map(|s| s.probability)
    }
}

pub fn global_probabilities(
    unit_index: usize,
    category: &GlobalCategory,
    scores: &[SubgroupScore],
) -> Result<GlobalProbabilities> {
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for (name, s) in category.subgroups.iter().zip(scores) {
        match s.score {
            Some(v) => kept.push((name.clone(), s.images, v)),
            None => dropped.push(name.clone()),
        }
    }
    if kept.len() < 2 {
        return Err(Error::InsufficientSubgroups(category.name.clone()));
    }
    let total: f64 = kept.iter().map(|k| k.2).sum();
    let inactive = total <= 0.0;
    let uniform = 1.0 / kept.len() as f64;
    let subgroups: Vec<SubgroupProbability> = kept
        .into_iter()
        .map(|(subgroup, images, raw)| SubgroupProbability {
            subgroup,
            images,
            raw_score: raw,
            probability: if inactive { uniform } else { raw / total },
        })
        .collect();
    let biased_subgroup = if inactive {
        None
    } else {
        // first maximum in declaration order
        let best = subgroups.iter().fold(None::<&SubgroupProbability>, |best, s| match best {
            Some(b) if b.probability >= s.probability => Some(b),
            _ => Some(s),
        });
        best.filter(|b| b.probability > category.bias_threshold)
            .map(|b| b.subgroup.clone())
    };
    Ok(GlobalProbabilities {
        unit_index,
        category: category.name.clone(),
        threshold: category.bias_threshold,
        subgroups,
        dropped_subgroups: dropped,
        biased_subgroup,
        inactive,
    })
}

/// Ranks, scores and normalizes one unit for one category.
pub fn score_unit(
    summary: &UnitSummary,
    selection: &[Selected],
    image_ids: &[String],
    category: &GlobalCategory,
) -> Result<GlobalProbabilities> {
    let ranked = rank_maps(summary, selection, image_ids, &category.name)?;
    let scores = concept_scores(&ranked, category.subgroups.len());
    global_probabilities(summary.unit_index, category, &scores)
}

/// Images of the activation set labeled for `category`, in activation order.
pub fn category_selection(
    dict: &ConceptDictionary,
    image_ids: &[String],
    category: &str,
) -> Result<Vec<Selected>> {
    let cat = dict.category(category)?;
    let mut out = Vec::new();
    for (n, id) in image_ids.iter().enumerate() {
        let img = dict
            .image(id)
            .ok_or_else(|| Error::UnknownImage(id.clone()))?;
        if let Some(sub) = img.global_labels.get(category) {
            let subgroup = cat.subgroup_index(sub).ok_or_else(|| Error::UnknownSubgroup {
                category: category.to_string(),
                subgroup: sub.clone(),
            })?;
            out.push(Selected { image: n, subgroup });
        }
    }
    Ok(out)
}

/// Selection from an explicit `image_id -> subgroup` labelling.
pub fn selection_from_labels(
    image_ids: &[String],
    labels: &BTreeMap<String, String>,
    category: &GlobalCategory,
) -> Result<Vec<Selected>> {
    image_ids
        .iter()
        .enumerate()
        .filter_map(|(n, id)| labels.get(id).map(|l| (n, id, l)))
        .map(|(n, id, label)| {
            category
                .subgroup_index(label)
                .map(|subgroup| Selected { image: n, subgroup })
                .ok_or_else(|| Error::UnknownClassLabel {
                    image_id: id.clone(),
                    label: label.clone(),
                })
        })
        .collect()
}

/// Reads an `image_id,label` CSV; a leading `image_id,label` header is optional.
pub fn read_class_labels(path: &Path) -> Result<BTreeMap<String, String>> {
    let ctx = || path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::parse(ctx(), format!("{other:?}")),
        })?;
    let mut out = BTreeMap::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::parse(ctx(), e))?;
        if record.len() != 2 {
            return Err(Error::parse(
                format!("{}:{}", ctx(), line + 1),
                format!("expected 2 fields, found {}", record.len()),
            ));
        }
        if line == 0 && &record[0] == "image_id" {
            continue;
        }
        if out.insert(record[0].to_string(), record[1].to_string()).is_some() {
            return Err(Error::parse(
                format!("{}:{}", ctx(), line + 1),
                format!("image `{}` labeled twice", &record[0]),
            ));
        }
    }
    Ok(out)
}

pub const COLOR: &str = "color";
pub const GRAY: &str = "gray";

/// Color-scheme affinity of one unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColorSchemeProbability {
    pub unit_index: usize,
    pub color: f64,
    pub gray: f64,
    pub biased: bool,
}

/// Stage I applied to the two-subgroup `{color, gray}` category.
pub fn color_scheme_probabilities(
    set: &ActivationSet,
    summaries: &[UnitSummary],
    labels: &BTreeMap<String, String>,
    jobs: Jobs,
) -> Result<Vec<ColorSchemeProbability>> {
    let category = GlobalCategory::new("ColorScheme", &[COLOR, GRAY]);
    let selection = selection_from_labels(set.image_ids(), labels, &category)?;
    let per_unit = par::try_map_indexed(summaries.len(), jobs, |u| {
        score_unit(&summaries[u], &selection, set.image_ids(), &category)
    })?;
    Ok(per_unit
        .into_iter()
        .map(|p| ColorSchemeProbability {
            unit_index: p.unit_index,
            color: p.probability(COLOR).unwrap_or(0.0),
            gray: p.probability(GRAY).unwrap_or(0.0),
            biased: p.biased_subgroup.is_some(),
        })
        .collect())
}
