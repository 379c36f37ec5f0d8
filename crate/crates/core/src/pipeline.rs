//! Runs all three stages plus the IoU-only baseline over one layer.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::activations::{quantile_with, unit_summaries, ActivationSet, QuantileMethod, DEFAULT_QUANTILE};
use crate::baseline::baseline_pair;
use crate::dictionary::{ConceptDictionary, GlobalCategory};
use crate::error::{Error, Result};
use crate::global::{self, GlobalProbabilities, Selected};
use crate::local::{self, RegionSelection, DEFAULT_LOCAL_FACTOR};
use crate::par::{self, Jobs};
use crate::parts::{self, IouTable, LocalIndex, DEFAULT_IOU_CUTOFF};
use crate::report::{self, DissectionReport, Settings, UnitInterpretation};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DissectConfig {
    pub quantile: f64,
    pub quantile_method: QuantileMethod,
    pub iou_cutoff: f64,
    pub local_factor: f64,
    /// Per-category bias threshold overrides.
    pub thresholds: BTreeMap<String, f64>,
    #[serde(skip)]
    pub jobs: Jobs,
}

impl Default for DissectConfig {
    fn default() -> Self {
        Self {
            quantile: DEFAULT_QUANTILE,
            quantile_method: QuantileMethod::Exact,
            iou_cutoff: DEFAULT_IOU_CUTOFF,
            local_factor: DEFAULT_LOCAL_FACTOR,
            thresholds: BTreeMap::new(),
            jobs: Jobs::default(),
        }
    }
}

impl DissectConfig {
    pub fn validate(&self) -> Result<()> {
        let in_unit = |v: f64| v > 0.0 && v < 1.0;
        if !in_unit(self.quantile) {
            return Err(Error::InvalidConfig(format!("quantile {} outside (0, 1)", self.quantile)));
        }
        if !in_unit(self.iou_cutoff) {
            return Err(Error::InvalidConfig(format!("IoU cutoff {} outside (0, 1)", self.iou_cutoff)));
        }
        if !(self.local_factor > 0.0 && self.local_factor.is_finite()) {
            return Err(Error::InvalidConfig(format!("local factor {} must be positive", self.local_factor)));
        }
        for (cat, t) in &self.thresholds {
            if !in_unit(*t) {
                return Err(Error::InvalidConfig(format!("threshold {t} for `{cat}` outside (0, 1)")));
            }
        }
        Ok(())
    }

    fn settings(&self) -> Settings {
        Settings {
            quantile: self.quantile,
            iou_cutoff: self.iou_cutoff,
            local_factor: self.local_factor,
        }
    }
}

/// Dissects one layer.
pub fn dissect_layer(
    dict: &ConceptDictionary,
    set: &ActivationSet,
    config: &DissectConfig,
    model_name: &str,
) -> Result<DissectionReport> {
    config.validate()?;
    for cat in config.thresholds.keys() {
        dict.category(cat)?;
    }
    let image_ids = set.image_ids();
    let mut warnings = Vec::new();

    let summaries = unit_summaries(set, config.jobs)?;
    let layer_max = summaries.first().map_or(0.0, |s| s.layer_max);
    let layer_active = layer_max > 0.0;

    // Stage I inputs
    let mut categories: Vec<(GlobalCategory, Vec<Selected>)> = Vec::new();
    for cat in &dict.categories {
        let mut cat = cat.clone();
        if let Some(&t) = config.thresholds.get(&cat.name) {
            cat.bias_threshold = t;
        }
        let selection = global::category_selection(dict, image_ids, &cat.name)?;
        let populated = cat
            .subgroups
            .iter()
            .enumerate()
            .filter(|(s, _)| selection.iter().any(|e| e.subgroup == *s))
            .count();
        if populated < 2 {
            warnings.push(format!(
                "category `{}` skipped: fewer than two subgroups have images in layer `{}`",
                cat.name,
                set.layer_name()
            ));
            continue;
        }
        for (s, name) in cat.subgroups.iter().enumerate() {
            if !selection.iter().any(|e| e.subgroup == s) {
                warnings.push(format!(
                    "subgroup `{}` of `{}` has no images and is excluded",
                    name, cat.name
                ));
            }
        }
        categories.push((cat, selection));
    }

    // Stage II/III inputs, resolved before the fan-out so workers only read
    let local_index = LocalIndex::build(dict, image_ids)?;
    for concept in local_index.unlabeled_concepts() {
        warnings.push(format!("concept `{concept}` has no labeled images; omitted from IoU tables"));
    }
    let mut regions: BTreeMap<String, Option<RegionSelection>> = BTreeMap::new();
    for r in &dict.regions {
        let sel = match local::select_region_maps(dict, image_ids, &r.name) {
            Ok(sel) => Some(sel),
            Err(Error::EmptyRegionSupport(_)) => None,
            Err(e) => return Err(e),
        };
        regions.insert(r.name.clone(), sel);
    }

    let units = par::try_map_indexed(set.unit_count(), config.jobs, |u| {
        let summary = &summaries[u];
        let inactive = !layer_active || summary.is_inactive();

        let global = categories
            .iter()
            .map(|(cat, selection)| global::score_unit(summary, selection, image_ids, cat))
            .collect::<Result<Vec<GlobalProbabilities>>>()?;

        let stage2 = if inactive || local_index.unlabeled_concepts().len() == dict.concepts.len() {
            IouTable::empty(u)
        } else {
            let values = set.unit_values(u)?;
            let threshold = quantile_with(&values, config.quantile, config.quantile_method, u);
            let counts = local_index.accumulate(&values, set.map_dims(), threshold);
            parts::assign_region(local_index.table(u, threshold, &counts), dict, config.iou_cutoff)
        };

        let stage3 = match stage2
            .assigned_region
            .as_ref()
            .and_then(|r| regions.get(r))
        {
            Some(Some(selection)) => Some(local::local_probabilities(
                summary,
                selection,
                image_ids,
                &stage2,
                config.local_factor,
            )?),
            _ => None,
        };
        let baseline = baseline_pair(&stage2, config.iou_cutoff);
        Ok::<_, Error>(UnitInterpretation::new(u, inactive, global, stage2, stage3, baseline))
    })?;

    Ok(report::aggregate(
        model_name,
        set.layer_name(),
        units,
        dict,
        config.settings(),
        warnings,
    ))
}
