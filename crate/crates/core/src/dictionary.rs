//! The face-concept dictionary: global categories, local concepts grouped by
//! facial region, labeled image records, and their concept masks.
//!
//! A dictionary is read from a JSON manifest whose paths are relative to the
//! manifest's directory. Masks live in `<masks_dir>/<image_id>__<concept>.pgm`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read};
use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{parse_pgm_header, BinaryRaster};

pub const DEFAULT_MASKS_DIR: &str = "masks";
pub const DEFAULT_CONFIDENCE: f64 = 0.95;

/// Bias threshold for a category: the uniform probability plus 0.05.
pub fn default_bias_threshold(subgroups: usize) -> f64 {
    1.0 / subgroups as f64 + 0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalCategory {
    pub name: String,
    pub subgroups: Vec<String>,
    pub bias_threshold: f64,
}

impl GlobalCategory {
    pub fn new(name: impl Into<String>, subgroups: &[&str]) -> Self {
        Self {
            name: name.into(),
            subgroups: subgroups.iter().map(|s| s.to_string()).collect(),
            bias_threshold: default_bias_threshold(subgroups.len()),
        }
    }

    pub fn subgroup_index(&self, name: &str) -> Option<usize> {
        self.subgroups.iter().position(|s| s == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ConceptKind {
    ActionUnit,
    Attribute,
    FacialPart,
}

impl ConceptKind {
    pub const ALL: [ConceptKind; 3] = [
        ConceptKind::ActionUnit,
        ConceptKind::Attribute,
        ConceptKind::FacialPart,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ConceptKind::ActionUnit => "ActionUnit",
            ConceptKind::Attribute => "Attribute",
            ConceptKind::FacialPart => "FacialPart",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalConcept {
    pub name: String,
    pub kind: ConceptKind,
    pub region: String,
    /// Indices into an image's landmark list that outline this concept.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub landmarks: Vec<usize>,
}

impl LocalConcept {
    pub fn new(name: impl Into<String>, kind: ConceptKind, region: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind,
            region: region.into(),
            landmarks: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Region {
    pub name: String,
    /// Number of local concepts in this region (`K` in the local threshold).
    pub concept_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    #[serde(rename = "id")]
    pub image_id: String,
    #[serde(rename = "path")]
    pub source_path: String,
    pub width: usize,
    pub height: usize,
    #[serde(rename = "global", default, skip_serializing_if = "BTreeMap::is_empty")]
    pub global_labels: BTreeMap<String, String>,
    #[serde(rename = "local", default, skip_serializing_if = "BTreeSet::is_empty")]
    pub local_labels: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub landmarks: Option<Vec<(f64, f64)>>,
}

impl ImageRecord {
    pub fn new(image_id: impl Into<String>, width: usize, height: usize) -> Self {
        let image_id = image_id.into();
        Self {
            source_path: format!("images/{image_id}.png"),
            image_id,
            width,
            height,
            global_labels: BTreeMap::new(),
            local_labels: BTreeSet::new(),
            landmarks: None,
        }
    }
}

/// One concept's location in one image.
#[derive(Debug, Clone, PartialEq)]
pub struct ConceptMask {
    pub image_id: String,
    pub concept_name: String,
    pub raster: BinaryRaster,
}

pub fn mask_file_name(image_id: &str, concept: &str) -> String {
    format!("{image_id}__{concept}.pgm")
}

#[derive(Debug)]
enum MaskSource {
    File(PathBuf),
    Memory,
}

#[derive(Debug)]
struct MaskEntry {
    source: MaskSource,
    cache: OnceLock<Arc<BinaryRaster>>,
}

/// Mask validation performed by [`load_manifest_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MaskCheck {
    /// Decode every mask: dimensions and nonempty foreground.
    #[default]
    Full,
    /// Check that every mask exists and its header dimensions match.
    HeaderOnly,
    /// Do not require masks at all (used before masks are synthesized).
    Skip,
}

/// On-disk manifest document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub categories: Vec<ManifestCategory>,
    pub concepts: Vec<LocalConcept>,
    pub regions: Vec<String>,
    pub images: Vec<ImageRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub masks_dir: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub landmarks_csv: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestCategory {
    pub name: String,
    pub subgroups: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bias_threshold: Option<f64>,
}

#[derive(Debug)]
pub struct ConceptDictionary {
    pub categories: Vec<GlobalCategory>,
    pub concepts: Vec<LocalConcept>,
    pub regions: Vec<Region>,
    pub images: Vec<ImageRecord>,
    masks: BTreeMap<(String, String), MaskEntry>,
    concept_lookup: HashMap<String, usize>,
    image_lookup: HashMap<String, usize>,
}

impl PartialEq for ConceptDictionary {
    fn eq(&self, other: &Self) -> bool {
        self.categories == other.categories
            && self.concepts == other.concepts
            && self.regions == other.regions
            && self.images == other.images
            && self.masks.keys().eq(other.masks.keys())
    }
}

impl ConceptDictionary {
    /// Builds and validates a dictionary whose masks are held in memory.
    pub fn new(
        categories: Vec<GlobalCategory>,
        concepts: Vec<LocalConcept>,
        regions: Vec<String>,
        images: Vec<ImageRecord>,
        masks: Vec<ConceptMask>,
    ) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for m in masks {
            let cache = OnceLock::new();
            let _ = cache.set(Arc::new(m.raster));
            entries.insert(
                (m.image_id, m.concept_name),
                MaskEntry {
                    source: MaskSource::Memory,
                    cache,
                },
            );
        }
        let dict = Self::assemble(categories, concepts, regions, images, entries)?;
        dict.validate_masks(MaskCheck::Full)?;
        Ok(dict)
    }

    fn assemble(
        categories: Vec<GlobalCategory>,
        concepts: Vec<LocalConcept>,
        region_names: Vec<String>,
        images: Vec<ImageRecord>,
        masks: BTreeMap<(String, String), MaskEntry>,
    ) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for c in &categories {
            if !seen.insert(c.name.as_str()) {
                return Err(Error::InvalidDictionary(format!("duplicate category `{}`", c.name)));
            }
            if c.subgroups.len() < 2 {
                return Err(Error::InvalidDictionary(format!(
                    "category `{}` needs at least two subgroups",
                    c.name
                )));
            }
            let unique: BTreeSet<_> = c.subgroups.iter().collect();
            if unique.len() != c.subgroups.len() {
                return Err(Error::InvalidDictionary(format!(
                    "duplicate subgroup in category `{}`",
                    c.name
                )));
            }
            if !(c.bias_threshold > 0.0 && c.bias_threshold <= 1.0) {
                return Err(Error::InvalidDictionary(format!(
                    "bias threshold of `{}` must lie in (0, 1]",
                    c.name
                )));
            }
        }

        let mut regions: Vec<Region> = Vec::with_capacity(region_names.len());
        for name in region_names {
            if regions.iter().any(|r| r.name == name) {
                return Err(Error::InvalidDictionary(format!("duplicate region `{name}`")));
            }
            regions.push(Region {
                name,
                concept_count: 0,
            });
        }
        let mut concept_lookup = HashMap::new();
        for (i, c) in concepts.iter().enumerate() {
            if concept_lookup.insert(c.name.clone(), i).is_some() {
                return Err(Error::InvalidDictionary(format!("duplicate concept `{}`", c.name)));
            }
            let region = regions
                .iter_mut()
                .find(|r| r.name == c.region)
                .ok_or_else(|| Error::UnknownRegion(c.region.clone()))?;
            region.concept_count += 1;
        }
        if let Some(r) = regions.iter().find(|r| r.concept_count == 0) {
            return Err(Error::InvalidDictionary(format!(
                "region `{}` has no concepts",
                r.name
            )));
        }

        let mut image_lookup = HashMap::new();
        for (i, img) in images.iter().enumerate() {
            if image_lookup.insert(img.image_id.clone(), i).is_some() {
                return Err(Error::InvalidDictionary(format!(
                    "duplicate image `{}`",
                    img.image_id
                )));
            }
            for (cat, sub) in &img.global_labels {
                let category = categories
                    .iter()
                    .find(|c| &c.name == cat)
                    .ok_or_else(|| Error::UnknownCategory(cat.clone()))?;
                if category.subgroup_index(sub).is_none() {
                    return Err(Error::UnknownSubgroup {
                        category: cat.clone(),
                        subgroup: sub.clone(),
                    });
                }
            }
            for label in &img.local_labels {
                if !concept_lookup.contains_key(label) {
                    return Err(Error::UnknownConcept(label.clone()));
                }
            }
            if let Some(points) = &img.landmarks {
                for &(x, y) in points {
                    if !(x >= 0.0 && x < img.width as f64 && y >= 0.0 && y < img.height as f64) {
                        return Err(Error::InvalidDictionary(format!(
                            "landmark ({x}, {y}) outside image `{}`",
                            img.image_id
                        )));
                    }
                }
            }
        }
        for (image_id, concept) in masks.keys() {
            let img = image_lookup
                .get(image_id)
                .map(|&i| &images[i])
                .ok_or_else(|| Error::UnknownImage(image_id.clone()))?;
            if !img.local_labels.contains(concept) {
                return Err(Error::InvalidDictionary(format!(
                    "mask for unlabeled pair ({image_id}, {concept})"
                )));
            }
        }

        Ok(Self {
            categories,
            concepts,
            regions,
            images,
            masks,
            concept_lookup,
            image_lookup,
        })
    }

    fn validate_masks(&self, check: MaskCheck) -> Result<()> {
        if check == MaskCheck::Skip {
            return Ok(());
        }
        for img in &self.images {
            for concept in &img.local_labels {
                let key = (img.image_id.clone(), concept.clone());
                let entry = self.masks.get(&key).ok_or_else(|| Error::MissingMask {
                    image_id: img.image_id.clone(),
                    concept: concept.clone(),
                })?;
                let dims = match (&entry.source, check) {
                    (MaskSource::File(path), MaskCheck::HeaderOnly) => {
                        let mut head = [0u8; 256];
                        let mut f = File::open(path).map_err(|e| Error::io(path, e))?;
                        let n = read_up_to(&mut f, &mut head).map_err(|e| Error::io(path, e))?;
                        let (h, _) = parse_pgm_header(&head[..n], &path.display().to_string())?;
                        (h.width, h.height)
                    }
                    _ => {
                        let raster = match entry.cache.get() {
                            Some(r) => r.clone(),
                            None => Arc::new(load_mask_file(entry)?),
                        };
                        if raster.count() == 0 {
                            return Err(Error::EmptyMask {
                                image_id: img.image_id.clone(),
                                concept: concept.clone(),
                            });
                        }
                        raster.dims()
                    }
                };
                if dims != (img.width, img.height) {
                    return Err(Error::DimensionMismatch {
                        what: format!("mask {}", mask_file_name(&img.image_id, concept)),
                        expected: (img.width, img.height),
                        found: dims,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn concept(&self, name: &str) -> Option<&LocalConcept> {
        self.concept_lookup.get(name).map(|&i| &self.concepts[i])
    }

    pub fn concept_index(&self, name: &str) -> Option<usize> {
        self.concept_lookup.get(name).copied()
    }

    pub fn category(&self, name: &str) -> Result<&GlobalCategory> {
        self.categories
            .iter()
            .find(|c| c.name == name)
            .ok_or_else(|| Error::UnknownCategory(name.to_string()))
    }

    pub fn region(&self, name: &str) -> Option<&Region> {
        self.regions.iter().find(|r| r.name == name)
    }

    /// Concept indices belonging to `region`, in declaration order.
    pub fn region_concepts(&self, region: &str) -> Vec<usize> {
        self.concepts
            .iter()
            .enumerate()
            .filter(|(_, c)| c.region == region)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn image(&self, image_id: &str) -> Option<&ImageRecord> {
        self.image_lookup.get(image_id).map(|&i| &self.images[i])
    }

    pub fn has_mask(&self, image_id: &str, concept: &str) -> bool {
        self.masks
            .contains_key(&(image_id.to_string(), concept.to_string()))
    }

    /// Returns the mask raster, loading and caching it on first access.
    pub fn mask(&self, image_id: &str, concept: &str) -> Result<Arc<BinaryRaster>> {
        let entry = self
            .masks
            .get(&(image_id.to_string(), concept.to_string()))
            .ok_or_else(|| Error::MissingMask {
                image_id: image_id.to_string(),
                concept: concept.to_string(),
            })?;
        if let Some(r) = entry.cache.get() {
            return Ok(r.clone());
        }
        let raster = Arc::new(load_mask_file(entry)?);
        Ok(entry.cache.get_or_init(|| raster).clone())
    }

    /// Every labeled image carrying a label for `category`, ordered by image id.
    pub fn images_for_category(&self, category: &str) -> Result<Vec<(&ImageRecord, usize)>> {
        let cat = self.category(category)?;
        let mut out: Vec<_> = self
            .images
            .iter()
            .filter_map(|img| {
                img.global_labels
                    .get(category)
                    .and_then(|s| cat.subgroup_index(s))
                    .map(|s| (img, s))
            })
            .collect();
        out.sort_by(|a, b| a.0.image_id.cmp(&b.0.image_id));
        Ok(out)
    }

    /// Landmarks that outline `concept` in `image`, if both are available.
    pub fn concept_landmarks(&self, image: &ImageRecord, concept: &str) -> Option<Vec<(f64, f64)>> {
        let c = self.concept(concept)?;
        let points = image.landmarks.as_ref()?;
        if c.landmarks.is_empty() {
            return None;
        }
        c.landmarks.iter().map(|&i| points.get(i).copied()).collect()
    }

    pub fn to_manifest(&self) -> Manifest {
        Manifest {
            categories: self
                .categories
                .iter()
                .map(|c| ManifestCategory {
                    name: c.name.clone(),
                    subgroups: c.subgroups.clone(),
                    bias_threshold: Some(c.bias_threshold),
                })
                .collect(),
            concepts: self.concepts.clone(),
            regions: self.regions.iter().map(|r| r.name.clone()).collect(),
            images: self.images.clone(),
            masks_dir: None,
            landmarks_csv: None,
        }
    }
}

fn read_up_to(f: &mut File, buf: &mut [u8]) -> std::io::Result<usize> {
    let mut n = 0;
    while n < buf.len() {
        match f.read(&mut buf[n..])? {
            0 => break,
            k => n += k,
        }
    }
    Ok(n)
}

fn load_mask_file(entry: &MaskEntry) -> Result<BinaryRaster> {
    match &entry.source {
        MaskSource::File(path) => {
            let f = File::open(path).map_err(|e| Error::io(path, e))?;
            BinaryRaster::read_pgm(BufReader::new(f), &path.display().to_string())
        }
        MaskSource::Memory => Err(Error::Internal("in-memory mask without raster".into())),
    }
}

/// Loads and fully validates a manifest.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<ConceptDictionary> {
    load_manifest_with(path, MaskCheck::Full)
}

pub fn read_manifest_document(path: &Path) -> Result<Manifest> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_reader(BufReader::new(f))
        .map_err(|e| Error::parse(path.display().to_string(), e))
}

pub fn load_manifest_with(path: impl AsRef<Path>, check: MaskCheck) -> Result<ConceptDictionary> {
    let path = path.as_ref();
    let doc = read_manifest_document(path)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    dictionary_from_manifest(doc, base, check)
}

/// Resolves a manifest document against `base` (the manifest directory).
pub fn dictionary_from_manifest(
    mut doc: Manifest,
    base: &Path,
    check: MaskCheck,
) -> Result<ConceptDictionary> {
    if let Some(csv_name) = &doc.landmarks_csv {
        let sidecar = read_landmarks_csv(&base.join(csv_name))?;
        for img in doc.images.iter_mut() {
            if let Some(points) = sidecar.get(&img.image_id) {
                img.landmarks = Some(points.clone());
            }
        }
    }
    let categories = doc
        .categories
        .into_iter()
        .map(|c| GlobalCategory {
            bias_threshold: c
                .bias_threshold
                .unwrap_or_else(|| default_bias_threshold(c.subgroups.len())),
            name: c.name,
            subgroups: c.subgroups,
        })
        .collect();
    let masks_dir = base.join(doc.masks_dir.as_deref().unwrap_or(DEFAULT_MASKS_DIR));
    let mut masks = BTreeMap::new();
    for img in &doc.images {
        for concept in &img.local_labels {
            let file = masks_dir.join(mask_file_name(&img.image_id, concept));
            if file.is_file() {
                masks.insert(
                    (img.image_id.clone(), concept.clone()),
                    MaskEntry {
                        source: MaskSource::File(file),
                        cache: OnceLock::new(),
                    },
                );
            }
        }
    }
    let dict = ConceptDictionary::assemble(categories, doc.concepts, doc.regions, doc.images, masks)?;
    dict.validate_masks(check)?;
    Ok(dict)
}

/// Writes the manifest to `path` and every mask into `<dir>/masks/`.
///
/// Masks already stored at their destination are left untouched.
pub fn save_manifest(dict: &ConceptDictionary, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let masks_dir = base.join(DEFAULT_MASKS_DIR);
    if !dict.masks.is_empty() {
        std::fs::create_dir_all(&masks_dir).map_err(|e| Error::io(&masks_dir, e))?;
    }
    for ((image_id, concept), entry) in &dict.masks {
        let dest = masks_dir.join(mask_file_name(image_id, concept));
        if let MaskSource::File(src) = &entry.source {
            if same_file(src, &dest) {
                continue;
            }
        }
        let raster = dict.mask(image_id, concept)?;
        write_mask(&dest, &raster)?;
    }
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    serde_json::to_writer_pretty(&mut w, &dict.to_manifest())
        .map_err(|e| Error::parse(path.display().to_string(), e))?;
    use std::io::Write;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn same_file(a: &Path, b: &Path) -> bool {
    match (a.canonicalize(), b.canonicalize()) {
        (Ok(a), Ok(b)) => a == b,
        _ => false,
    }
}

pub fn write_mask(path: &Path, raster: &BinaryRaster) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    raster.write_pgm(&mut w).map_err(|e| Error::io(path, e))
}

/// Reads the `image_id,x0,y0,x1,y1,...` landmark sidecar.
pub fn read_landmarks_csv(path: &Path) -> Result<BTreeMap<String, Vec<(f64, f64)>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::parse(path.display().to_string(), e))?;
    let mut out = BTreeMap::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::parse(path.display().to_string(), e))?;
        let Some(id) = record.get(0) else { continue };
        if line == 0 && id == "image_id" {
            continue;
        }
        let coords: Vec<f64> = record
            .iter()
            .skip(1)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::parse(format!("{}:{}", path.display(), line + 1), e))?;
        if !coords.len().is_multiple_of(2) {
            return Err(Error::parse(
                format!("{}:{}", path.display(), line + 1),
                "odd number of landmark coordinates",
            ));
        }
        out.insert(
            id.to_string(),
            coords.chunks_exact(2).map(|p| (p[0], p[1])).collect(),
        );
    }
    Ok(out)
}

/// Upper `confidence` quantile of the chi-square distribution with two degrees
/// of freedom.
pub fn chi_square_2dof_quantile(confidence: f64) -> f64 {
    -2.0 * (1.0 - confidence).ln()
}

/// Rasterizes the Gaussian confidence ellipse fitted to `landmarks`.
///
/// A pixel is foreground when its center `(x + 0.5, y + 0.5)` satisfies
/// `(p - mu)^T S^-1 (p - mu) <= q`, where `S` is the sample covariance plus
/// `(0.01 * min(w, h))^2 * I`.
pub fn synthesize_mask(
    landmarks: &[(f64, f64)],
    (width, height): (usize, usize),
    confidence: f64,
) -> Result<BinaryRaster> {
    if landmarks.len() < 2 {
        return Err(Error::DegenerateLandmarks(format!(
            "need at least 2 landmarks, got {}",
            landmarks.len()
        )));
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "confidence must lie in (0, 1), got {confidence}"
        )));
    }
    if width == 0 || height == 0 {
        return Err(Error::InvalidConfig("image dimensions must be positive".into()));
    }
    let n = landmarks.len() as f64;
    let (mx, my) = landmarks
        .iter()
        .fold((0.0, 0.0), |(sx, sy), &(x, y)| (sx + x, sy + y));
    let (mx, my) = (mx / n, my / n);
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for &(x, y) in landmarks {
        let (dx, dy) = (x - mx, y - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    let eps = (0.01 * width.min(height) as f64).powi(2);
    let sxx = sxx / (n - 1.0) + eps;
    let syy = syy / (n - 1.0) + eps;
    let sxy = sxy / (n - 1.0);
    let det = sxx * syy - sxy * sxy;
    let (ixx, ixy, iyy) = (syy / det, -sxy / det, sxx / det);
    let q = chi_square_2dof_quantile(confidence);

    let half_w = (q * sxx).sqrt();
    let half_h = (q * syy).sqrt();
    let x0 = ((mx - half_w - 0.5).floor().max(0.0)) as usize;
    let y0 = ((my - half_h - 0.5).floor().max(0.0)) as usize;
    let x1 = ((mx + half_w).ceil().max(0.0) as usize).min(width);
    let y1 = ((my + half_h).ceil().max(0.0) as usize).min(height);

    let mut raster = BinaryRaster::new(width, height);
    for y in y0..y1 {
        let dy = y as f64 + 0.5 - my;
        for x in x0..x1 {
            let dx = x as f64 + 0.5 - mx;
            if ixx * dx * dx + 2.0 * ixy * dx * dy + iyy * dy * dy <= q {
                raster.set(x, y, true);
            }
        }
    }
    Ok(raster)
}
