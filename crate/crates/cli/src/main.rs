mod config;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hnd_core::activations::{read_activations, unit_summaries, ActivationSet};
use hnd_core::dictionary::{
    dictionary_from_manifest, load_manifest, mask_file_name, read_manifest_document,
    synthesize_mask, write_mask, ConceptDictionary, GlobalCategory, MaskCheck, DEFAULT_CONFIDENCE,
    DEFAULT_MASKS_DIR,
};
use hnd_core::global::{read_class_labels, score_unit, selection_from_labels, COLOR, GRAY};
use hnd_core::par;
use hnd_core::report::{
    curve_max_slope, sorted_probability_curve, top_activated_images, write_baseline_histogram,
    write_iou_csv, write_json, write_report_files, ActivationSource, DissectionReport, ModelReport,
};
use hnd_core::synthetic::{generate, score_recovery, write_bench, PlantedSpec, RecoveryScores};
use hnd_core::{dissect_layer, DissectConfig, Error, ErrorClass, Result};
use serde::Serialize;

use config::{parse_threshold, Format, RunConfig};

#[derive(Parser)]
#[command(name = "hnd", version, about = "Hierarchical network dissection of face-model layers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run Stages I-III and the IoU-only baseline, writing every report file.
    Dissect(Flags),
    /// Synthesize landmark masks for every labeled (image, concept) pair.
    Masks(Flags),
    /// Two-subgroup bias analysis: probability curves, counts and top-k images.
    Bias(Flags),
    /// Generate a planted benchmark, dissect it and score recovery.
    Bench(Flags),
    /// IoU-only pairing and its histogram.
    Baseline(Flags),
}

#[derive(Args, Default)]
struct Flags {
    /// TOML file with any of the flags below; flags win.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// `layer=path` of an HNDA file; repeatable.
    #[arg(long = "activations", value_name = "LAYER=PATH")]
    activations: Vec<String>,
    /// Upper activation quantile for Stage II.
    #[arg(long)]
    quantile: Option<f64>,
    /// Estimate the quantile from a seeded reservoir sample.
    #[arg(long)]
    reservoir: bool,
    #[arg(long)]
    iou_cutoff: Option<f64>,
    #[arg(long)]
    local_factor: Option<f64>,
    /// Per-category bias threshold, `Category=value`; repeatable.
    #[arg(long = "threshold", value_name = "CATEGORY=VALUE", value_parser = parse_threshold)]
    thresholds: Vec<(String, f64)>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker count; 1 runs serially.
    #[arg(long)]
    jobs: Option<usize>,
    /// Format of the summary printed on stdout.
    #[arg(long, value_enum)]
    format: Option<Format>,
    #[arg(long)]
    model_name: Option<String>,
    /// Also write every Stage II IoU to `iou_<layer>.csv`.
    #[arg(long)]
    dump_iou: bool,
    /// Confidence level of synthesized masks.
    #[arg(long)]
    confidence: Option<f64>,
    /// `image_id,label` CSV for `bias`.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Category name used by `bias`.
    #[arg(long)]
    category: Option<String>,
    /// Subgroups for `bias`, comma separated.
    #[arg(long, value_delimiter = ',')]
    classes: Vec<String>,
    #[arg(long)]
    top_k: Option<usize>,
    /// Planted spec (TOML or JSON) for `bench`.
    #[arg(long)]
    spec: Option<PathBuf>,
}

impl Flags {
    fn resolve(self) -> Result<RunConfig> {
        let flags = RunConfig {
            manifest: self.manifest,
            activations: self.activations,
            quantile: self.quantile,
            reservoir: self.reservoir.then_some(true),
            iou_cutoff: self.iou_cutoff,
            local_factor: self.local_factor,
            thresholds: self.thresholds.into_iter().collect(),
            out: self.out,
            seed: self.seed,
            jobs: self.jobs,
            format: self.format,
            model_name: self.model_name,
            dump_iou: self.dump_iou.then_some(true),
            confidence: self.confidence,
            labels: self.labels,
            category: self.category,
            classes: self.classes,
            top_k: self.top_k,
            spec: self.spec,
        };
        match &self.config {
            Some(path) => Ok(RunConfig::from_file(path)?.merged(flags)),
            None => Ok(flags),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("HND_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(3) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Dissect(f) => f.resolve().and_then(|c| cmd_dissect(&c)),
        Command::Masks(f) => f.resolve().and_then(|c| cmd_masks(&c)),
        Command::Bias(f) => f.resolve().and_then(|c| cmd_bias(&c)),
        Command::Bench(f) => f.resolve().and_then(|c| cmd_bench(&c)),
        Command::Baseline(f) => f.resolve().and_then(|c| cmd_baseline(&c)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.class() {
                ErrorClass::Io => 2,
                ErrorClass::Validation => 3,
                ErrorClass::Internal => 4,
            })
        }
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn emit<T: Serialize>(format: Format, json: &T, header: &[&str], rows: Vec<Vec<String>>) -> Result<()> {
    match format {
        Format::Json => {
            let text = serde_json::to_string_pretty(json).map_err(|e| Error::Internal(e.to_string()))?;
            println!("{text}");
        }
        Format::Csv => {
            println!("{}", header.join(","));
            for r in rows {
                println!("{}", r.join(","));
            }
        }
    }
    Ok(())
}

fn dissect_all(cfg: &RunConfig, dict: &ConceptDictionary, config: &DissectConfig) -> Result<ModelReport> {
    let model_name = cfg.model_name.clone().unwrap_or_else(|| "model".into());
    let mut layers = Vec::new();
    for (layer, path) in cfg.layers()? {
        let set = read_activations(&path)?;
        if set.layer_name() != layer {
            log::info!("{}: stored layer name `{}` replaced by `{layer}`", path.display(), set.layer_name());
        }
        log::info!(
            "dissecting {layer}: {} units x {} images",
            set.unit_count(),
            set.image_count()
        );
        let mut report = dissect_layer(dict, &set, config, &model_name)?;
        report.layer_name = layer;
        for w in &report.warnings {
            log::warn!("{}: {w}", report.layer_name);
        }
        layers.push(report);
    }
    Ok(ModelReport { model_name, layers })
}

#[derive(Serialize)]
struct CoverageLine<'a> {
    layer: &'a str,
    unit_count: usize,
    interpretable_units: usize,
    coverage: f64,
    region_only_units: usize,
    iou_only_interpretable_units: usize,
    iou_only_coverage: f64,
}

fn coverage_lines(report: &ModelReport) -> Vec<CoverageLine<'_>> {
    report
        .layers
        .iter()
        .map(|l: &DissectionReport| CoverageLine {
            layer: &l.layer_name,
            unit_count: l.unit_count,
            interpretable_units: l.interpretable_units,
            coverage: l.coverage,
            region_only_units: l.region_only_units,
            iou_only_interpretable_units: l.baseline_interpretable_units,
            iou_only_coverage: l.baseline_coverage,
        })
        .collect()
}

fn cmd_dissect(cfg: &RunConfig) -> Result<()> {
    let config = cfg.dissect_config()?;
    let dict = load_manifest(cfg.require_manifest()?)?;
    let report = dissect_all(cfg, &dict, &config)?;
    let out = cfg.out_dir();
    write_report_files(&report, &out)?;
    if cfg.dump_iou.unwrap_or(false) {
        for l in &report.layers {
            write_iou_csv(l, &out.join(format!("iou_{}.csv", l.layer_name)))?;
        }
    }
    let lines = coverage_lines(&report);
    let rows = lines
        .iter()
        .map(|c| {
            vec![
                c.layer.to_string(),
                c.unit_count.to_string(),
                c.interpretable_units.to_string(),
                c.coverage.to_string(),
                c.region_only_units.to_string(),
                c.iou_only_interpretable_units.to_string(),
                c.iou_only_coverage.to_string(),
            ]
        })
        .collect();
    emit(
        cfg.format.unwrap_or_default(),
        &lines,
        &[
            "layer",
            "unit_count",
            "interpretable_units",
            "coverage",
            "region_only_units",
            "iou_only_interpretable_units",
            "iou_only_coverage",
        ],
        rows,
    )
}

fn cmd_baseline(cfg: &RunConfig) -> Result<()> {
    let config = cfg.dissect_config()?;
    let dict = load_manifest(cfg.require_manifest()?)?;
    let report = dissect_all(cfg, &dict, &config)?;
    let out = cfg.out_dir();
    create_dir(&out)?;
    write_baseline_histogram(&report, &out)?;
    let pairings: BTreeMap<&str, Vec<_>> = report
        .layers
        .iter()
        .map(|l| (l.layer_name.as_str(), l.units.iter().map(|u| &u.baseline).collect()))
        .collect();
    write_json(&pairings, &out.join("baseline.json"))?;
    let rows = report
        .layers
        .iter()
        .flat_map(|l| {
            l.units.iter().map(move |u| {
                vec![
                    l.layer_name.clone(),
                    u.unit_index.to_string(),
                    u.baseline.top_concept.clone().unwrap_or_default(),
                    u.baseline.top_iou.to_string(),
                ]
            })
        })
        .collect();
    emit(cfg.format.unwrap_or_default(), &pairings, &["layer", "unit", "concept", "iou"], rows)
}

#[derive(Serialize, Default)]
struct MaskSummary {
    written: usize,
    skipped_existing: usize,
    without_landmarks: usize,
}

fn cmd_masks(cfg: &RunConfig) -> Result<()> {
    let manifest = cfg.require_manifest()?;
    let confidence = cfg.confidence.unwrap_or(DEFAULT_CONFIDENCE);
    let doc = read_manifest_document(manifest)?;
    let base = manifest.parent().unwrap_or_else(|| Path::new("."));
    let masks_dir = base.join(doc.masks_dir.as_deref().unwrap_or(DEFAULT_MASKS_DIR));
    let dict = dictionary_from_manifest(doc, base, MaskCheck::Skip)?;
    create_dir(&masks_dir)?;
    let mut summary = MaskSummary::default();
    for img in &dict.images {
        for concept in &img.local_labels {
            let file = masks_dir.join(mask_file_name(&img.image_id, concept));
            if file.exists() {
                log::warn!("{} exists; skipped", file.display());
                summary.skipped_existing += 1;
                continue;
            }
            let Some(points) = dict.concept_landmarks(img, concept) else {
                log::warn!("no landmarks for `{concept}` in `{}`", img.image_id);
                summary.without_landmarks += 1;
                continue;
            };
            let raster = synthesize_mask(&points, (img.width, img.height), confidence)
                .map_err(|e| match e {
                    Error::DegenerateLandmarks(m) => {
                        Error::DegenerateLandmarks(format!("{} / {concept}: {m}", img.image_id))
                    }
                    other => other,
                })?;
            if raster.count() == 0 {
                return Err(Error::EmptyMask {
                    image_id: img.image_id.clone(),
                    concept: concept.clone(),
                });
            }
            write_mask(&file, &raster)?;
            summary.written += 1;
        }
    }
    emit(
        cfg.format.unwrap_or_default(),
        &summary,
        &["written", "skipped_existing", "without_landmarks"],
        vec![vec![
            summary.written.to_string(),
            summary.skipped_existing.to_string(),
            summary.without_landmarks.to_string(),
        ]],
    )
}

#[derive(Serialize)]
struct SubgroupCurve {
    subgroup: String,
    biased_units: usize,
    max_slope: f64,
    /// `(unit, probability)`, descending.
    curve: Vec<(usize, f64)>,
}

#[derive(Serialize)]
struct LayerBias {
    layer: String,
    unit_count: usize,
    biased_units: usize,
    subgroups: Vec<SubgroupCurve>,
    top_images: BTreeMap<String, Vec<hnd_core::report::RankedImage>>,
}

fn slope_window(units: usize) -> usize {
    (units / 16).max(1)
}

fn layer_bias(
    layer: &str,
    set: &ActivationSet,
    category: &GlobalCategory,
    labels: &BTreeMap<String, String>,
    top_k: usize,
    jobs: par::Jobs,
) -> Result<LayerBias> {
    let summaries = unit_summaries(set, jobs)?;
    let selection = selection_from_labels(set.image_ids(), labels, category)?;
    let probs = par::try_map_indexed(summaries.len(), jobs, |u| {
        score_unit(&summaries[u], &selection, set.image_ids(), category)
    })?;
    let subgroups = category
        .subgroups
        .iter()
        .map(|s| {
            let p: Vec<f64> = probs.iter().map(|g| g.probability(s).unwrap_or(0.0)).collect();
            let mut curve: Vec<(usize, f64)> = p.iter().copied().enumerate().collect();
            curve.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            SubgroupCurve {
                subgroup: s.clone(),
                biased_units: probs
                    .iter()
                    .filter(|g| g.biased_subgroup.as_deref() == Some(s))
                    .count(),
                max_slope: curve_max_slope(&sorted_probability_curve(&p), slope_window(p.len())),
                curve,
            }
        })
        .collect();
    Ok(LayerBias {
        layer: layer.to_string(),
        unit_count: set.unit_count(),
        biased_units: probs.iter().filter(|g| g.biased_subgroup.is_some()).count(),
        subgroups,
        top_images: top_activated_images(
            set,
            &summaries,
            &category.subgroups,
            labels,
            top_k,
            ActivationSource::LayerMax,
        )?,
    })
}

fn cmd_bias(cfg: &RunConfig) -> Result<()> {
    let labels_path = cfg
        .labels
        .as_deref()
        .ok_or_else(|| Error::InvalidConfig("--labels is required".into()))?;
    let labels = read_class_labels(labels_path)?;
    let name = cfg.category.clone().unwrap_or_else(|| "ColorScheme".into());
    let classes: Vec<String> = if cfg.classes.is_empty() {
        vec![COLOR.into(), GRAY.into()]
    } else {
        cfg.classes.clone()
    };
    let refs: Vec<&str> = classes.iter().map(String::as_str).collect();
    let mut category = GlobalCategory::new(name.clone(), &refs);
    if category.subgroups.len() < 2 {
        return Err(Error::InsufficientSubgroups(name));
    }
    if let Some(&t) = cfg.thresholds.get(&name) {
        if !(t > 0.0 && t < 1.0) {
            return Err(Error::InvalidConfig(format!("threshold {t} outside (0, 1)")));
        }
        category.bias_threshold = t;
    }
    let top_k = cfg.top_k.unwrap_or(10);
    let jobs = cfg.jobs()?;
    let mut layers = Vec::new();
    for (layer, path) in cfg.layers()? {
        let set = read_activations(&path)?;
        layers.push(layer_bias(&layer, &set, &category, &labels, top_k, jobs)?);
    }

    let out = cfg.out_dir();
    create_dir(&out)?;
    write_json(&layers, &out.join("bias.json"))?;
    let mut curves = vec![["layer", "subgroup", "position", "unit", "probability"].join(",")];
    let mut counts = vec![["layer", "subgroup", "biased_units", "unit_count", "max_slope"].join(",")];
    let mut top = vec![["layer", "class", "rank", "image_id", "score"].join(",")];
    for l in &layers {
        for s in &l.subgroups {
            for (pos, (unit, p)) in s.curve.iter().enumerate() {
                curves.push(format!("{},{},{pos},{unit},{p}", l.layer, s.subgroup));
            }
            counts.push(format!(
                "{},{},{},{},{}",
                l.layer, s.subgroup, s.biased_units, l.unit_count, s.max_slope
            ));
        }
        for (class, images) in &l.top_images {
            for (rank, img) in images.iter().enumerate() {
                top.push(format!("{},{class},{},{},{}", l.layer, rank + 1, img.image_id, img.score));
            }
        }
    }
    for (file, lines) in [("bias_curves.csv", curves), ("bias_counts.csv", counts.clone()), ("top_k.csv", top)] {
        let path = out.join(file);
        std::fs::write(&path, lines.join("\n") + "\n").map_err(|e| Error::io(&path, e))?;
    }

    #[derive(Serialize)]
    struct Count<'a> {
        layer: &'a str,
        subgroup: &'a str,
        biased_units: usize,
        unit_count: usize,
        max_slope: f64,
    }
    let summary: Vec<Count> = layers
        .iter()
        .flat_map(|l| {
            l.subgroups.iter().map(move |s| Count {
                layer: &l.layer,
                subgroup: &s.subgroup,
                biased_units: s.biased_units,
                unit_count: l.unit_count,
                max_slope: s.max_slope,
            })
        })
        .collect();
    let rows = counts[1..]
        .iter()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect();
    emit(
        cfg.format.unwrap_or_default(),
        &summary,
        &["layer", "subgroup", "biased_units", "unit_count", "max_slope"],
        rows,
    )
}

fn read_spec(path: &Path) -> Result<PlantedSpec> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let ctx = path.display().to_string();
    if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| Error::parse(ctx, e))
    } else {
        toml::from_str(&text).map_err(|e| Error::parse(ctx, e))
    }
}

fn cmd_bench(cfg: &RunConfig) -> Result<()> {
    let spec_path = cfg
        .spec
        .as_deref()
        .ok_or_else(|| Error::InvalidConfig("--spec is required".into()))?;
    let mut spec = read_spec(spec_path)?;
    if let Some(seed) = cfg.seed {
        spec.seed = seed;
    }
    let config = cfg.dissect_config()?;
    let generated = generate(&spec)?;
    let out = cfg.out_dir();
    let bench_dir = out.join("bench");
    write_bench(&generated, &bench_dir)?;

    // dissect what was written, not the in-memory copy
    let dict = load_manifest(bench_dir.join("manifest.json"))?;
    let set = read_activations(bench_dir.join(format!("{}.hnda", spec.layer_name)))?;
    let model_name = cfg.model_name.clone().unwrap_or_else(|| "synthetic".into());
    let report = dissect_layer(&dict, &set, &config, &model_name)?;
    let scores: RecoveryScores = score_recovery(&generated.ground_truth, &report)?;
    write_report_files(
        &ModelReport {
            model_name,
            layers: vec![report],
        },
        &out,
    )?;
    write_json(&scores, &out.join("recovery.json"))?;

    let na = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |v| v.to_string());
    let rows = scores
        .per_effect
        .iter()
        .map(|e| {
            vec![
                e.effect.to_string(),
                e.planted.to_string(),
                e.recovered.to_string(),
                na(e.recall),
                na(e.precision),
                na(e.flagged_rate),
            ]
        })
        .collect();
    emit(
        cfg.format.unwrap_or_default(),
        &scores,
        &["effect", "planted", "recovered", "recall", "precision", "flagged_rate"],
        rows,
    )
}
