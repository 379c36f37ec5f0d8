//! Layer-level aggregation of per-unit results and the report file writers.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::activations::{ActivationSet, UnitSummary};
use crate::baseline::BaselinePairing;
use crate::dictionary::{ConceptDictionary, ConceptKind};
use crate::error::{Error, Result};
use crate::global::GlobalProbabilities;
use crate::local::LocalPairing;
use crate::parts::IouTable;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitInterpretation {
    pub unit_index: usize,
    pub inactive: bool,
    pub global: Vec<GlobalProbabilities>,
    pub stage2: IouTable,
    pub stage3: Option<LocalPairing>,
    pub baseline: BaselinePairing,
    pub interpretable: bool,
}

impl UnitInterpretation {
    pub fn new(
        unit_index: usize,
        inactive: bool,
        global: Vec<GlobalProbabilities>,
        stage2: IouTable,
        stage3: Option<LocalPairing>,
        baseline: BaselinePairing,
    ) -> Self {
        let interpretable = global.iter().any(|g| g.biased_subgroup.is_some())
            || stage2.assigned_region.is_some();
        Self {
            unit_index,
            inactive,
            global,
            stage2,
            stage3,
            baseline,
            interpretable,
        }
    }

    pub fn paired_concepts(&self) -> &[String] {
        self.stage3.as_ref().map_or(&[], |p| &p.paired_concepts)
    }

    pub fn biased(&self) -> impl Iterator<Item = (&str, &str)> {
        self.global.iter().filter_map(|g| {
            g.biased_subgroup
                .as_deref()
                .map(|s| (g.category.as_str(), s))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Settings {
    pub quantile: f64,
    pub iou_cutoff: f64,
    pub local_factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptCount {
    pub concept: String,
    pub kind: ConceptKind,
    pub region: String,
    pub units: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupCount {
    pub category: String,
    pub subgroup: String,
    pub units: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedCount {
    pub name: String,
    pub units: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapCell {
    pub concept: String,
    pub category: String,
    pub subgroup: String,
    pub units: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RatioScope {
    Category,
    Region,
}

/// Mean of `P / mean(P)` over every probability that exceeds its mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioStat {
    pub scope: RatioScope,
    pub name: String,
    pub mean_ratio: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DissectionReport {
    pub model_name: String,
    pub layer_name: String,
    pub unit_count: usize,
    pub settings: Settings,
    pub inactive_layer: bool,
    pub interpretable_units: usize,
    pub coverage: f64,
    /// IoU-only accounting, reported next to the hierarchical one.
    pub baseline_interpretable_units: usize,
    pub baseline_coverage: f64,
    pub region_only_units: usize,
    pub local_concept_counts: Vec<ConceptCount>,
    pub global_subgroup_counts: Vec<SubgroupCount>,
    pub region_counts: Vec<NamedCount>,
    pub concept_type_counts: Vec<NamedCount>,
    pub baseline_histogram: Vec<NamedCount>,
    pub overlap: Vec<OverlapCell>,
    pub biased_unit_counts: Vec<NamedCount>,
    pub probability_ratio_stats: Vec<RatioStat>,
    pub warnings: Vec<String>,
    pub units: Vec<UnitInterpretation>,
}

/// Model-level wrapper written as `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub model_name: String,
    pub layers: Vec<DissectionReport>,
}

pub fn aggregate(
    model_name: &str,
    layer_name: &str,
    units: Vec<UnitInterpretation>,
    dict: &ConceptDictionary,
    settings: Settings,
    mut warnings: Vec<String>,
) -> DissectionReport {
    let unit_count = units.len();
    let mut concept_units = vec![0usize; dict.concepts.len()];
    let mut kind_units: BTreeMap<ConceptKind, usize> = BTreeMap::new();
    let mut region_units: Vec<usize> = vec![0; dict.regions.len()];
    let mut baseline_units = vec![0usize; dict.concepts.len()];
    let mut subgroup_units: BTreeMap<(String, String), usize> = BTreeMap::new();
    let mut overlap: BTreeMap<(usize, String, String), usize> = BTreeMap::new();
    let mut biased_per_category: BTreeMap<&str, usize> = BTreeMap::new();
    let mut region_only = 0;

    for u in &units {
        for (cat, sub) in u.biased() {
            *subgroup_units
                .entry((cat.to_string(), sub.to_string()))
                .or_default() += 1;
        }
        for g in &u.global {
            if g.biased_subgroup.is_some() {
                *biased_per_category.entry(g.category.as_str()).or_default() += 1;
            }
        }
        if let Some(region) = &u.stage2.assigned_region {
            if let Some(i) = dict.regions.iter().position(|r| &r.name == region) {
                region_units[i] += 1;
            }
            if u.paired_concepts().is_empty() {
                region_only += 1;
            }
        }
        for concept in u.paired_concepts() {
            if let Some(ci) = dict.concept_index(concept) {
                concept_units[ci] += 1;
                *kind_units.entry(dict.concepts[ci].kind).or_default() += 1;
                for (cat, sub) in u.biased() {
                    *overlap
                        .entry((ci, cat.to_string(), sub.to_string()))
                        .or_default() += 1;
                }
            }
        }
        if let Some(top) = &u.baseline.top_concept {
            if let Some(ci) = dict.concept_index(top) {
                baseline_units[ci] += 1;
            }
        }
    }

    let interpretable_units = units.iter().filter(|u| u.interpretable).count();
    let baseline_interpretable_units = units
        .iter()
        .filter(|u| u.baseline.top_concept.is_some())
        .count();
    let frac = |n: usize| if unit_count == 0 { 0.0 } else { n as f64 / unit_count as f64 };

    let local_concept_counts = dict
        .concepts
        .iter()
        .zip(&concept_units)
        .map(|(c, &units)| ConceptCount {
            concept: c.name.clone(),
            kind: c.kind,
            region: c.region.clone(),
            units,
        })
        .collect();
    let global_subgroup_counts = dict
        .categories
        .iter()
        .flat_map(|c| {
            c.subgroups.iter().map(|s| SubgroupCount {
                category: c.name.clone(),
                subgroup: s.clone(),
                units: subgroup_units
                    .get(&(c.name.clone(), s.clone()))
                    .copied()
                    .unwrap_or(0),
            })
        })
        .collect();
    let region_counts = dict
        .regions
        .iter()
        .zip(&region_units)
        .map(|(r, &units)| NamedCount {
            name: r.name.clone(),
            units,
        })
        .collect();
    let concept_type_counts = ConceptKind::ALL
        .iter()
        .map(|k| NamedCount {
            name: k.as_str().to_string(),
            units: kind_units.get(k).copied().unwrap_or(0),
        })
        .collect();
    let baseline_histogram = dict
        .concepts
        .iter()
        .zip(&baseline_units)
        .map(|(c, &units)| NamedCount {
            name: c.name.clone(),
            units,
        })
        .collect();
    let overlap = overlap
        .into_iter()
        .map(|((ci, category, subgroup), units)| OverlapCell {
            concept: dict.concepts[ci].name.clone(),
            category,
            subgroup,
            units,
        })
        .collect();
    let biased_unit_counts = dict
        .categories
        .iter()
        .map(|c| NamedCount {
            name: c.name.clone(),
            units: biased_per_category.get(c.name.as_str()).copied().unwrap_or(0),
        })
        .collect();

    let inactive_layer = unit_count > 0 && units.iter().all(|u| u.inactive);
    if inactive_layer {
        warnings.push(format!("layer `{layer_name}` has no nonzero activations"));
    }
    let probability_ratio_stats = probability_ratio_stats(&units, dict);

    DissectionReport {
        model_name: model_name.to_string(),
        layer_name: layer_name.to_string(),
        unit_count,
        settings,
        inactive_layer,
        interpretable_units,
        coverage: frac(interpretable_units),
        baseline_interpretable_units,
        baseline_coverage: frac(baseline_interpretable_units),
        region_only_units: region_only,
        local_concept_counts,
        global_subgroup_counts,
        region_counts,
        concept_type_counts,
        baseline_histogram,
        overlap,
        biased_unit_counts,
        probability_ratio_stats,
        warnings,
        units,
    }
}

fn probability_ratio_stats(units: &[UnitInterpretation], dict: &ConceptDictionary) -> Vec<RatioStat> {
    let mut out = Vec::new();
    for cat in &dict.categories {
        let mut ratios = Vec::new();
        for g in units.iter().flat_map(|u| &u.global).filter(|g| g.category == cat.name && !g.inactive) {
            let mean = 1.0 / g.subgroups.len() as f64;
            ratios.extend(
                g.subgroups
                    .iter()
                    .filter(|s| s.probability > mean)
                    .map(|s| s.probability / mean),
            );
        }
        if !ratios.is_empty() {
            out.push(RatioStat {
                scope: RatioScope::Category,
                name: cat.name.clone(),
                mean_ratio: ratios.iter().sum::<f64>() / ratios.len() as f64,
                samples: ratios.len(),
            });
        }
    }
    for region in &dict.regions {
        let mut ratios = Vec::new();
        for p in units
            .iter()
            .filter_map(|u| u.stage3.as_ref())
            .filter(|p| p.region == region.name && !p.all_zero)
        {
            let mean = 1.0 / p.k as f64;
            ratios.extend(
                p.concepts
                    .iter()
                    .filter(|c| c.probability > mean)
                    .map(|c| c.probability / mean),
            );
        }
        if !ratios.is_empty() {
            out.push(RatioStat {
                scope: RatioScope::Region,
                name: region.name.clone(),
                mean_ratio: ratios.iter().sum::<f64>() / ratios.len() as f64,
                samples: ratios.len(),
            });
        }
    }
    out
}

/// Number of units per layer with any probability above `threshold`.
///
/// `layers` pairs a layer name with one probability vector per unit.
pub fn biased_unit_counts(layers: &[(String, Vec<Vec<f64>>)], threshold: f64) -> Vec<(String, usize)> {
    layers
        .iter()
        .map(|(name, units)| {
            (
                name.clone(),
                units
                    .iter()
                    .filter(|p| p.iter().any(|&v| v > threshold))
                    .count(),
            )
        })
        .collect()
}

/// Probabilities sorted in descending order.
pub fn sorted_probability_curve(probabilities: &[f64]) -> Vec<f64> {
    let mut v = probabilities.to_vec();
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

/// Steepest descent of a sorted curve drawn over unit fraction `[0, 1]`,
/// measured across `window` consecutive steps.
pub fn curve_max_slope(sorted: &[f64], window: usize) -> f64 {
    let n = sorted.len();
    if n < 2 {
        return 0.0;
    }
    let w = window.clamp(1, n - 1);
    let dx = w as f64 / (n - 1) as f64;
    (0..n - w)
        .map(|i| (sorted[i] - sorted[i + w]) / dx)
        .fold(0.0, f64::max)
}

/// Which maximum ranks images in [`top_activated_images`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActivationSource {
    Unit(usize),
    /// The maximum over all units of the layer.
    LayerMax,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedImage {
    pub image_id: String,
    pub score: f32,
}

/// Per class, the `k` images with the highest maximum activation (descending,
/// ties by ascending image id).
pub fn top_activated_images(
    set: &ActivationSet,
    summaries: &[UnitSummary],
    classes: &[String],
    labels: &BTreeMap<String, String>,
    k: usize,
    source: ActivationSource,
) -> Result<BTreeMap<String, Vec<RankedImage>>> {
    if k == 0 {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    let position: BTreeMap<&str, usize> = set
        .image_ids()
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    let score_of = |n: usize| -> Result<f32> {
        match source {
            ActivationSource::Unit(u) => summaries
                .get(u)
                .map(|s| s.max_scores[n])
                .ok_or_else(|| Error::OutOfRange(format!("unit {u}"))),
            ActivationSource::LayerMax => Ok(summaries
                .iter()
                .map(|s| s.max_scores[n])
                .fold(f32::NEG_INFINITY, f32::max)),
        }
    };
    let mut out: BTreeMap<String, Vec<RankedImage>> =
        classes.iter().map(|c| (c.clone(), Vec::new())).collect();
    for (image_id, class) in labels {
        let list = out.get_mut(class).ok_or_else(|| Error::UnknownClassLabel {
            image_id: image_id.clone(),
            label: class.clone(),
        })?;
        let &n = position
            .get(image_id.as_str())
            .ok_or_else(|| Error::UnknownImage(image_id.clone()))?;
        list.push(RankedImage {
            image_id: image_id.clone(),
            score: score_of(n)?,
        });
    }
    for list in out.values_mut() {
        list.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.image_id.cmp(&b.image_id)));
        list.truncate(k);
    }
    Ok(out)
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |e| Error::io(path, e)
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    csv::Writer::from_path(path).map_err(|e| Error::parse(path.display().to_string(), e))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::parse(path.display().to_string(), e)
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let f = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(f);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::parse(path.display().to_string(), e))?;
    w.write_all(b"\n").map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

pub fn read_report(path: &Path) -> Result<ModelReport> {
    let f = File::open(path).map_err(io_err(path))?;
    serde_json::from_reader(std::io::BufReader::new(f)).map_err(|e| Error::parse(path.display().to_string(), e))
}

/// Writes `report.json` and every CSV side table into `dir`.
pub fn write_report_files(report: &ModelReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    write_json(report, &dir.join("report.json"))?;

    let path = dir.join("histogram_local.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(["layer", "concept", "kind", "region", "units"]).map_err(csv_err(&path))?;
    for l in &report.layers {
        for c in &l.local_concept_counts {
            w.write_record([
                l.layer_name.as_str(),
                &c.concept,
                c.kind.as_str(),
                &c.region,
                &c.units.to_string(),
            ])
            .map_err(csv_err(&path))?;
        }
    }
    w.flush().map_err(io_err(&path))?;

    let path = dir.join("histogram_global.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(["layer", "category", "subgroup", "units"]).map_err(csv_err(&path))?;
    for l in &report.layers {
        for c in &l.global_subgroup_counts {
            w.write_record([l.layer_name.as_str(), &c.category, &c.subgroup, &c.units.to_string()])
                .map_err(csv_err(&path))?;
        }
    }
    w.flush().map_err(io_err(&path))?;

    let path = dir.join("overlap.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(["layer", "concept", "category", "subgroup", "units"]).map_err(csv_err(&path))?;
    for l in &report.layers {
        for c in &l.overlap {
            w.write_record([
                l.layer_name.as_str(),
                &c.concept,
                &c.category,
                &c.subgroup,
                &c.units.to_string(),
            ])
            .map_err(csv_err(&path))?;
        }
    }
    w.flush().map_err(io_err(&path))?;

    let path = dir.join("coverage.csv");
    let mut w = csv_writer(&path)?;
    w.write_record([
        "layer",
        "unit_count",
        "interpretable",
        "coverage",
        "iou_only_interpretable",
        "iou_only_coverage",
    ])
    .map_err(csv_err(&path))?;
    for l in &report.layers {
        w.write_record([
            l.layer_name.clone(),
            l.unit_count.to_string(),
            l.interpretable_units.to_string(),
            l.coverage.to_string(),
            l.baseline_interpretable_units.to_string(),
            l.baseline_coverage.to_string(),
        ])
        .map_err(csv_err(&path))?;
    }
    w.flush().map_err(io_err(&path))?;

    write_baseline_histogram(report, dir)?;

    let path = dir.join("bias_curves.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(["layer", "category", "subgroup", "position", "unit", "probability"])
        .map_err(csv_err(&path))?;
    for l in &report.layers {
        for (category, subgroup, curve) in bias_curves(l) {
            for (pos, (unit, p)) in curve.iter().enumerate() {
                w.write_record([
                    l.layer_name.clone(),
                    category.clone(),
                    subgroup.clone(),
                    pos.to_string(),
                    unit.to_string(),
                    p.to_string(),
                ])
                .map_err(csv_err(&path))?;
            }
        }
    }
    w.flush().map_err(io_err(&path))
}

pub fn write_baseline_histogram(report: &ModelReport, dir: &Path) -> Result<()> {
    let path = dir.join("baseline_histogram.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(["layer", "concept", "units"]).map_err(csv_err(&path))?;
    for l in &report.layers {
        for c in &l.baseline_histogram {
            w.write_record([l.layer_name.as_str(), &c.name, &c.units.to_string()])
                .map_err(csv_err(&path))?;
        }
    }
    w.flush().map_err(io_err(&path))
}

/// Optional `unit,concept,iou` dump of every Stage II score.
pub fn write_iou_csv(report: &DissectionReport, path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["unit", "concept", "iou"]).map_err(csv_err(path))?;
    for u in &report.units {
        for s in &u.stage2.scores {
            w.write_record([u.unit_index.to_string(), s.concept.clone(), s.iou.to_string()])
                .map_err(csv_err(path))?;
        }
    }
    w.flush().map_err(io_err(path))
}

/// `(category, subgroup, curve)`.
pub type BiasCurve = (String, String, Vec<(usize, f64)>);

/// Per (category, subgroup): `(unit, probability)` sorted by descending
/// probability, ties by unit index.
pub fn bias_curves(layer: &DissectionReport) -> Vec<BiasCurve> {
    let mut curves: BTreeMap<(usize, usize), BiasCurve> = BTreeMap::new();
    for u in &layer.units {
        for (ci, g) in u.global.iter().enumerate() {
            for (si, s) in g.subgroups.iter().enumerate() {
                curves
                    .entry((ci, si))
                    .or_insert_with(|| (g.category.clone(), s.subgroup.clone(), Vec::new()))
                    .2
                    .push((u.unit_index, s.probability));
            }
        }
    }
    curves
        .into_values()
        .map(|(c, s, mut v)| {
            v.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            (c, s, v)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn biased_counts() {
        let layers = vec![
            ("l1".to_string(), vec![vec![0.5, 0.5]; 4]),
            ("l2".to_string(), vec![vec![0.0, 1.0]; 3]),
        ];
        assert_eq!(
            biased_unit_counts(&layers, 0.55),
            vec![("l1".to_string(), 0), ("l2".to_string(), 3)]
        );
    }

    #[test]
    fn slope_of_flat_and_step_curves() {
        assert_eq!(curve_max_slope(&[0.5; 10], 2), 0.0);
        let step = sorted_probability_curve(&[0.1, 0.9, 0.1, 0.9]);
        assert_eq!(step, vec![0.9, 0.9, 0.1, 0.1]);
        assert!((curve_max_slope(&step, 1) - 0.8 * 3.0).abs() < 1e-12);
    }
}
