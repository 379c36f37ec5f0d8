//! Synthetic dictionaries and activation sets with planted unit-concept
//! affinities, used as ground truth for recovery measurements.
//!
//! Masks are axis-aligned rectangles laid out on an 8x8 face grid. Every map
//! value is `max(0, noise + signal)` with unit-variance Gaussian noise; plants
//! add their effect size to the signal.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::activations::ActivationSet;
use crate::dictionary::{
    save_manifest, ConceptDictionary, ConceptKind, ConceptMask, GlobalCategory, ImageRecord,
    LocalConcept,
};
use crate::error::{Error, Result};
use crate::global::{COLOR, GRAY};
use crate::raster::BinaryRaster;
use crate::report::DissectionReport;

pub const GRID: f64 = 8.0;

/// `(name, kind, region, x0, y0, x1, y1)` with corners on the 8x8 face grid.
pub const LAYOUT: &[(&str, ConceptKind, &str, u8, u8, u8, u8)] = &[
    ("Wearing Hat", ConceptKind::Attribute, "HeadRegion", 0, 0, 8, 1),
    ("Bangs", ConceptKind::Attribute, "HeadRegion", 1, 1, 4, 2),
    ("Hair", ConceptKind::FacialPart, "HeadRegion", 5, 1, 8, 2),
    ("Arched Eyebrows", ConceptKind::Attribute, "EyeRegion", 1, 2, 7, 3),
    ("Eyeglasses", ConceptKind::Attribute, "EyeRegion", 1, 3, 4, 4),
    ("AU07 Lid Tightener", ConceptKind::ActionUnit, "EyeRegion", 4, 3, 7, 4),
    ("Big Nose", ConceptKind::Attribute, "NoseRegion", 3, 4, 5, 5),
    ("Nose", ConceptKind::FacialPart, "NoseRegion", 3, 5, 5, 6),
    ("Rosy Cheeks", ConceptKind::Attribute, "CheekRegion", 0, 4, 2, 6),
    ("AU06 Cheek Raiser", ConceptKind::ActionUnit, "CheekRegion", 6, 4, 8, 6),
    ("5 o Clock Shadow", ConceptKind::Attribute, "CheekRegion", 0, 6, 2, 8),
    ("Smiling", ConceptKind::Attribute, "MouthRegion", 2, 6, 6, 7),
    ("Wearing Lipstick", ConceptKind::Attribute, "MouthRegion", 3, 7, 5, 8),
    ("AU20 Lip Stretcher", ConceptKind::ActionUnit, "MouthRegion", 6, 6, 8, 8),
];

pub const REGIONS: &[&str] = &["HeadRegion", "EyeRegion", "NoseRegion", "CheekRegion", "MouthRegion"];

pub fn synthetic_categories() -> Vec<GlobalCategory> {
    vec![
        GlobalCategory::new("Gender", &["Male", "Female"]),
        GlobalCategory::new("Age", &["0-20", "20-40", "40-60", "60+"]),
        GlobalCategory::new("ColorScheme", &[COLOR, GRAY]),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PlantTarget {
    Concept { concept: String },
    Subgroup { category: String, subgroup: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plant {
    pub unit: usize,
    pub target: PlantTarget,
    /// Added activation, in units of the noise standard deviation.
    pub effect: f64,
}

/// Dataset-wide skew toward one subgroup, mimicking a model trained on data in
/// which `percent` of samples belong to that subgroup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skew {
    pub category: String,
    pub subgroup: String,
    /// In `[50, 100]`; 50 is balanced.
    pub percent: f64,
    /// Effect reached by the most susceptible unit at `percent = 100`.
    #[serde(default = "default_max_effect")]
    pub max_effect: f64,
}

fn default_max_effect() -> f64 {
    2.0
}

fn default_layer_name() -> String {
    "synthetic".into()
}

fn default_map_dims() -> (usize, usize) {
    (16, 16)
}

fn default_image_dims() -> (usize, usize) {
    (16, 16)
}

fn default_label_rate() -> f64 {
    0.3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedSpec {
    #[serde(default = "default_layer_name")]
    pub layer_name: String,
    pub unit_count: usize,
    pub image_count: usize,
    /// `(h, w)` of the activation maps.
    #[serde(default = "default_map_dims")]
    pub map_dims: (usize, usize),
    /// `(width, height)` of the images and masks.
    #[serde(default = "default_image_dims")]
    pub image_dims: (usize, usize),
    /// Probability that an image carries any given local concept.
    #[serde(default = "default_label_rate")]
    pub label_rate: f64,
    #[serde(default)]
    pub plants: Vec<Plant>,
    #[serde(default)]
    pub skew: Option<Skew>,
    pub seed: u64,
}

impl PlantedSpec {
    pub fn new(unit_count: usize, image_count: usize, seed: u64) -> Self {
        Self {
            layer_name: default_layer_name(),
            unit_count,
            image_count,
            map_dims: default_map_dims(),
            image_dims: default_image_dims(),
            label_rate: default_label_rate(),
            plants: Vec::new(),
            skew: None,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::SpecInvalid(m));
        if self.unit_count == 0 || self.image_count == 0 {
            return bad("unit_count and image_count must be positive".into());
        }
        let (h, w) = self.map_dims;
        let (iw, ih) = self.image_dims;
        if h == 0 || w == 0 || iw == 0 || ih == 0 {
            return bad("map and image dimensions must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.label_rate) {
            return bad(format!("label_rate {} outside [0, 1]", self.label_rate));
        }
        let categories = synthetic_categories();
        let check_subgroup = |category: &str, subgroup: &str| -> Result<()> {
            let cat = categories
                .iter()
                .find(|c| c.name == category)
                .ok_or_else(|| Error::SpecInvalid(format!("unknown category `{category}`")))?;
            if cat.subgroup_index(subgroup).is_none() {
                return Err(Error::SpecInvalid(format!("unknown subgroup `{subgroup}`")));
            }
            Ok(())
        };
        for p in &self.plants {
            if p.unit >= self.unit_count {
                return bad(format!("plant on unit {} of {}", p.unit, self.unit_count));
            }
            if !(p.effect >= 0.0 && p.effect.is_finite()) {
                return bad(format!("effect {} must be finite and >= 0", p.effect));
            }
            match &p.target {
                PlantTarget::Concept { concept } => {
                    if !LAYOUT.iter().any(|l| l.0 == concept) {
                        return bad(format!("unknown concept `{concept}`"));
                    }
                }
                PlantTarget::Subgroup { category, subgroup } => check_subgroup(category, subgroup)?,
            }
        }
        if let Some(s) = &self.skew {
            check_subgroup(&s.category, &s.subgroup)?;
            if !(50.0..=100.0).contains(&s.percent) {
                return bad(format!("skew percent {} outside [50, 100]", s.percent));
            }
            if !(s.max_effect >= 0.0 && s.max_effect.is_finite()) {
                return bad("skew max_effect must be finite and >= 0".into());
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub layer_name: String,
    pub unit_count: usize,
    pub image_count: usize,
    pub seed: u64,
    /// Plants with a nonzero effect.
    pub plants: Vec<Plant>,
    /// Target assignments with zero effect; their recall is the chance level.
    pub null_plants: Vec<Plant>,
    /// Skew effect applied to each unit (all zero without a skew).
    pub skew_effects: Vec<f64>,
}

pub struct Generated {
    pub dictionary: ConceptDictionary,
    pub activations: ActivationSet,
    pub ground_truth: GroundTruth,
}

fn in_rect(nx: f64, ny: f64, r: &(&str, ConceptKind, &str, u8, u8, u8, u8)) -> bool {
    let (x0, y0, x1, y1) = (r.3 as f64 / GRID, r.4 as f64 / GRID, r.5 as f64 / GRID, r.6 as f64 / GRID);
    nx >= x0 && nx < x1 && ny >= y0 && ny < y1
}

/// Raster of a layout rectangle at `(width, height)`, sampled at pixel centers.
pub fn concept_rect_mask(concept: &str, (width, height): (usize, usize)) -> Option<BinaryRaster> {
    let r = LAYOUT.iter().find(|l| l.0 == concept)?;
    let mut m = BinaryRaster::from_fn(width, height, |x, y| {
        in_rect((x as f64 + 0.5) / width as f64, (y as f64 + 0.5) / height as f64, r)
    });
    if m.count() == 0 {
        // rectangle thinner than a pixel: keep the pixel under its center
        let cx = ((r.3 as f64 + r.5 as f64) / 2.0 / GRID * width as f64) as usize;
        let cy = ((r.4 as f64 + r.6 as f64) / 2.0 / GRID * height as f64) as usize;
        m.set(cx.min(width - 1), cy.min(height - 1), true);
    }
    Some(m)
}

/// Map cells (row-major offsets) whose centers fall in the concept rectangle.
fn concept_cells(concept: &str, (h, w): (usize, usize)) -> Vec<usize> {
    let r = LAYOUT.iter().find(|l| l.0 == concept).expect("validated concept");
    let mut cells: Vec<usize> = (0..h * w)
        .filter(|i| in_rect((i % w) as f64 / w as f64 + 0.5 / w as f64, (i / w) as f64 / h as f64 + 0.5 / h as f64, r))
        .collect();
    if cells.is_empty() {
        let cx = (((r.3 as f64 + r.5 as f64) / 2.0 / GRID) * w as f64) as usize;
        let cy = (((r.4 as f64 + r.6 as f64) / 2.0 / GRID) * h as f64) as usize;
        cells.push(cy.min(h - 1) * w + cx.min(w - 1));
    }
    cells
}

pub fn generate(spec: &PlantedSpec) -> Result<Generated> {
    spec.validate()?;
    let categories = synthetic_categories();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.image_count;
    let width = n.to_string().len();
    let ids: Vec<String> = (0..n).map(|i| format!("img{i:0width$}")).collect();

    // balanced global labels
    let mut global: Vec<BTreeMap<String, String>> = vec![BTreeMap::new(); n];
    for cat in &categories {
        let mut labels: Vec<usize> = (0..n).map(|i| i % cat.subgroups.len()).collect();
        labels.shuffle(&mut rng);
        for (g, s) in global.iter_mut().zip(labels) {
            g.insert(cat.name.clone(), cat.subgroups[s].clone());
        }
    }
    let local: Vec<BTreeSet<String>> = (0..n)
        .map(|_| {
            LAYOUT
                .iter()
                .filter(|_| rng.random_bool(spec.label_rate))
                .map(|l| l.0.to_string())
                .collect()
        })
        .collect();

    let (iw, ih) = spec.image_dims;
    let rects: BTreeMap<&str, BinaryRaster> = LAYOUT
        .iter()
        .map(|l| (l.0, concept_rect_mask(l.0, (iw, ih)).expect("layout concept")))
        .collect();
    let mut images = Vec::with_capacity(n);
    let mut masks = Vec::new();
    for (i, id) in ids.iter().enumerate() {
        let mut rec = ImageRecord::new(id.clone(), iw, ih);
        rec.global_labels = global[i].clone();
        rec.local_labels = local[i].clone();
        for c in &rec.local_labels {
            masks.push(ConceptMask {
                image_id: id.clone(),
                concept_name: c.clone(),
                raster: rects[c.as_str()].clone(),
            });
        }
        images.push(rec);
    }
    let dictionary = ConceptDictionary::new(
        categories.clone(),
        LAYOUT
            .iter()
            .map(|l| LocalConcept::new(l.0, l.1, l.2))
            .collect(),
        REGIONS.iter().map(|r| r.to_string()).collect(),
        images,
        masks,
    )?;

    // susceptibilities come from their own stream so a sweep over `percent`
    // sees the same units and the same noise
    let mut skew_rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x5EED_5EED_5EED_5EED);
    let susceptibility: Vec<f64> = (0..spec.unit_count).map(|_| skew_rng.random::<f64>()).collect();
    let skew_effects: Vec<f64> = match &spec.skew {
        Some(s) => susceptibility
            .iter()
            .map(|v| v * s.max_effect * (s.percent - 50.0) / 50.0)
            .collect(),
        None => vec![0.0; spec.unit_count],
    };

    let (h, w) = spec.map_dims;
    let map_len = h * w;
    let mut signal_noise_rng = ChaCha8Rng::seed_from_u64(spec.seed.wrapping_add(1));
    let mut data = vec![0.0f32; spec.unit_count * n * map_len];
    let mut signal = vec![0.0f64; map_len];
    for (u, &skew) in skew_effects.iter().enumerate() {
        let plants: Vec<&Plant> = spec.plants.iter().filter(|p| p.unit == u).collect();
        for img in 0..n {
            signal.iter_mut().for_each(|s| *s = 0.0);
            for p in &plants {
                match &p.target {
                    PlantTarget::Concept { concept } => {
                        if local[img].contains(concept) {
                            for c in concept_cells(concept, (h, w)) {
                                signal[c] += p.effect;
                            }
                        }
                    }
                    PlantTarget::Subgroup { category, subgroup } => {
                        if global[img].get(category) == Some(subgroup) {
                            signal.iter_mut().for_each(|s| *s += p.effect);
                        }
                    }
                }
            }
            if let Some(s) = &spec.skew {
                if global[img].get(&s.category) == Some(&s.subgroup) {
                    signal.iter_mut().for_each(|v| *v += skew);
                }
            }
            let base = (u * n + img) * map_len;
            for (cell, sig) in signal.iter().enumerate() {
                let noise: f64 = signal_noise_rng.sample(StandardNormal);
                data[base + cell] = (noise + sig).max(0.0) as f32;
            }
        }
    }
    let activations = ActivationSet::new(spec.layer_name.clone(), spec.unit_count, ids, spec.map_dims, data)?;

    let (plants, null_plants) = spec.plants.iter().cloned().partition(|p| p.effect > 0.0);
    Ok(Generated {
        dictionary,
        activations,
        ground_truth: GroundTruth {
            layer_name: spec.layer_name.clone(),
            unit_count: spec.unit_count,
            image_count: n,
            seed: spec.seed,
            plants,
            null_plants,
            skew_effects,
        },
    })
}

/// Writes `manifest.json`, `masks/`, `<layer>.hnda` and `ground_truth.json`.
pub fn write_bench(generated: &Generated, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    save_manifest(&generated.dictionary, dir.join("manifest.json"))?;
    generated
        .activations
        .write(dir.join(format!("{}.hnda", generated.activations.layer_name())))?;
    crate::report::write_json(&generated.ground_truth, &dir.join("ground_truth.json"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectRecovery {
    pub effect: f64,
    pub planted: usize,
    pub recovered: usize,
    /// `None` when nothing was planted at this effect size.
    pub recall: Option<f64>,
    /// Units in this group flagged for any target of the planted kind.
    pub flagged_units: usize,
    pub flagged_rate: Option<f64>,
    /// Correct flags over all flags of the planted kind; `None` with no flags.
    pub precision: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryScores {
    pub layer_name: String,
    pub per_effect: Vec<EffectRecovery>,
    pub overall_recall: Option<f64>,
    pub overall_precision: Option<f64>,
}

impl RecoveryScores {
    pub fn at(&self, effect: f64) -> Option<&EffectRecovery> {
        self.per_effect.iter().find(|e| e.effect == effect)
    }
}

/// Flags a unit carries that are of the same kind as `target`.
fn flags_of_kind(report: &DissectionReport, unit: usize, target: &PlantTarget) -> Vec<PlantTarget> {
    let Some(u) = report.units.get(unit) else { return Vec::new() };
    match target {
        PlantTarget::Concept { .. } => u
            .paired_concepts()
            .iter()
            .map(|c| PlantTarget::Concept { concept: c.clone() })
            .collect(),
        PlantTarget::Subgroup { category, .. } => u
            .global
            .iter()
            .filter(|g| &g.category == category)
            .filter_map(|g| {
                g.biased_subgroup.as_ref().map(|s| PlantTarget::Subgroup {
                    category: category.clone(),
                    subgroup: s.clone(),
                })
            })
            .collect(),
    }
}

fn kind_key(target: &PlantTarget) -> Option<&str> {
    match target {
        PlantTarget::Concept { .. } => None,
        PlantTarget::Subgroup { category, .. } => Some(category),
    }
}

pub fn score_recovery(truth: &GroundTruth, report: &DissectionReport) -> Result<RecoveryScores> {
    if truth.layer_name != report.layer_name || truth.unit_count != report.unit_count {
        return Err(Error::MismatchedRun(format!(
            "truth {}x{} vs report {}x{}",
            truth.layer_name, truth.unit_count, report.layer_name, report.unit_count
        )));
    }
    let mut groups: BTreeMap<u64, Vec<&Plant>> = BTreeMap::new();
    for p in truth.plants.iter().chain(&truth.null_plants) {
        groups.entry(p.effect.to_bits()).or_default().push(p);
    }
    let ratio = |a: usize, b: usize| (b > 0).then(|| a as f64 / b as f64);
    let mut per_effect = Vec::new();
    let (mut all_planted, mut all_recovered, mut all_flags, mut all_true) = (0, 0, 0, 0);
    for (bits, plants) in groups {
        let effect = f64::from_bits(bits);
        let mut recovered = 0;
        let mut flagged_units = BTreeSet::new();
        let mut flags = 0;
        let mut true_flags = 0;
        let mut units_seen = BTreeSet::new();
        for p in &plants {
            let unit_flags = flags_of_kind(report, p.unit, &p.target);
            if unit_flags.contains(&p.target) {
                recovered += 1;
            }
            if !unit_flags.is_empty() {
                flagged_units.insert(p.unit);
            }
            // count each unit's flags once even if it carries several plants
            if units_seen.insert((p.unit, kind_key(&p.target))) {
                let targets: Vec<&PlantTarget> = plants
                    .iter()
                    .filter(|q| q.unit == p.unit && kind_key(&q.target) == kind_key(&p.target))
                    .map(|q| &q.target)
                    .collect();
                flags += unit_flags.len();
                true_flags += unit_flags.iter().filter(|f| targets.contains(f)).count();
            }
        }
        let unit_count = plants.iter().map(|p| p.unit).collect::<BTreeSet<_>>().len();
        if effect > 0.0 {
            all_planted += plants.len();
            all_recovered += recovered;
            all_flags += flags;
            all_true += true_flags;
        }
        per_effect.push(EffectRecovery {
            effect,
            planted: plants.len(),
            recovered,
            recall: ratio(recovered, plants.len()),
            flagged_units: flagged_units.len(),
            flagged_rate: ratio(flagged_units.len(), unit_count),
            precision: ratio(true_flags, flags),
        });
    }
    per_effect.sort_by(|a, b| a.effect.total_cmp(&b.effect));
    Ok(RecoveryScores {
        layer_name: truth.layer_name.clone(),
        per_effect,
        overall_recall: ratio(all_recovered, all_planted),
        overall_precision: ratio(all_true, all_flags),
    })
}
