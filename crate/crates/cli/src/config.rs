//! Run configuration: a TOML file merged with command-line flags, flags winning.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use hnd_core::activations::{QuantileMethod, RESERVOIR_SIZE};
use hnd_core::par::Jobs;
use hnd_core::{DissectConfig, Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

/// Every field mirrors a flag of the same name (dashes become underscores).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub manifest: Option<PathBuf>,
    /// `layer=path` entries, in processing order.
    #[serde(default)]
    pub activations: Vec<String>,
    pub quantile: Option<f64>,
    pub reservoir: Option<bool>,
    pub iou_cutoff: Option<f64>,
    pub local_factor: Option<f64>,
    #[serde(default)]
    pub thresholds: BTreeMap<String, f64>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub format: Option<Format>,
    pub model_name: Option<String>,
    pub dump_iou: Option<bool>,
    pub confidence: Option<f64>,
    pub labels: Option<PathBuf>,
    pub category: Option<String>,
    #[serde(default)]
    pub classes: Vec<String>,
    pub top_k: Option<usize>,
    pub spec: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e))?;
        // relative paths in a config file are relative to the file
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        for p in [&mut cfg.manifest, &mut cfg.out, &mut cfg.labels, &mut cfg.spec]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        for a in cfg.activations.iter_mut() {
            if let Some((layer, p)) = a.split_once('=') {
                if Path::new(p).is_relative() {
                    *a = format!("{layer}={}", base.join(p).display());
                }
            }
        }
        Ok(cfg)
    }

    /// `self` overridden by every value set in `flags`.
    pub fn merged(mut self, flags: RunConfig) -> RunConfig {
        macro_rules! take {
            ($($f:ident),*) => { $( if flags.$f.is_some() { self.$f = flags.$f; } )* };
        }
        take!(
            manifest, quantile, reservoir, iou_cutoff, local_factor, out, seed, jobs, format,
            model_name, dump_iou, confidence, labels, category, top_k, spec
        );
        if !flags.activations.is_empty() {
            self.activations = flags.activations;
        }
        if !flags.classes.is_empty() {
            self.classes = flags.classes;
        }
        self.thresholds.extend(flags.thresholds);
        self
    }

    pub fn jobs(&self) -> Result<Jobs> {
        match self.jobs {
            Some(0) => Err(Error::InvalidConfig("--jobs must be at least 1".into())),
            j => Ok(Jobs(j)),
        }
    }

    pub fn dissect_config(&self) -> Result<DissectConfig> {
        let defaults = DissectConfig::default();
        let local_factor = self.local_factor.unwrap_or(defaults.local_factor);
        if local_factor != defaults.local_factor {
            log::warn!(
                "local factor changed from {} to {local_factor}",
                defaults.local_factor
            );
        }
        let quantile_method = if self.reservoir.unwrap_or(false) {
            QuantileMethod::Reservoir {
                sample_size: RESERVOIR_SIZE,
                seed: self.seed.unwrap_or(0),
            }
        } else {
            QuantileMethod::Exact
        };
        let config = DissectConfig {
            quantile: self.quantile.unwrap_or(defaults.quantile),
            quantile_method,
            iou_cutoff: self.iou_cutoff.unwrap_or(defaults.iou_cutoff),
            local_factor,
            thresholds: self.thresholds.clone(),
            jobs: self.jobs()?,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn require_manifest(&self) -> Result<&Path> {
        self.manifest
            .as_deref()
            .ok_or_else(|| Error::InvalidConfig("--manifest is required".into()))
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("hnd_out"))
    }

    /// Parsed `(layer, path)` pairs; at least one is required.
    pub fn layers(&self) -> Result<Vec<(String, PathBuf)>> {
        if self.activations.is_empty() {
            return Err(Error::InvalidConfig("at least one --activations layer=path is required".into()));
        }
        let mut out: Vec<(String, PathBuf)> = Vec::new();
        for a in &self.activations {
            let (layer, path) = a
                .split_once('=')
                .filter(|(l, p)| !l.is_empty() && !p.is_empty())
                .ok_or_else(|| Error::InvalidConfig(format!("expected layer=path, got `{a}`")))?;
            if out.iter().any(|(l, _)| l == layer) {
                return Err(Error::InvalidConfig(format!("layer `{layer}` given twice")));
            }
            out.push((layer.to_string(), PathBuf::from(path)));
        }
        Ok(out)
    }
}

/// Parses `name=value` into a threshold entry.
pub fn parse_threshold(s: &str) -> std::result::Result<(String, f64), String> {
    let (name, value) = s
        .split_once('=')
        .ok_or_else(|| format!("expected Category=value, got `{s}`"))?;
    let v: f64 = value.parse().map_err(|e| format!("bad threshold `{value}`: {e}"))?;
    Ok((name.to_string(), v))
}
