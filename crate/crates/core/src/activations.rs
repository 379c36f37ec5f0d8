//! Per-layer activation tensors in the HNDA v1 format.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "HNDA" | version u32 = 1 | U u32 | N u32 | h u32 | w u32
//! | layer_name_len u32 | layer_name UTF-8
//! | N x (id_len u32 | image id UTF-8)
//! | U*N*h*w f32 LE, index order (unit, image, row, col)
//! ```
//!
//! Files are validated once on open and then read lazily one unit slice at a
//! time, so a layer never has to fit in memory.

use std::borrow::Cow;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::{self, Jobs};

pub const HNDA_MAGIC: [u8; 4] = *b"HNDA";
pub const HNDA_VERSION: u32 = 1;

/// Top fraction of activations kept when thresholding unit maps.
pub const DEFAULT_QUANTILE: f64 = 0.005;
pub const RESERVOIR_SIZE: usize = 1 << 16;

enum Storage {
    Memory(Vec<f32>),
    File {
        path: PathBuf,
        file: Mutex<File>,
        payload_offset: u64,
    },
}

pub struct ActivationSet {
    layer_name: String,
    unit_count: usize,
    image_ids: Vec<String>,
    map_dims: (usize, usize),
    storage: Storage,
}

impl std::fmt::Debug for ActivationSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ActivationSet")
            .field("layer_name", &self.layer_name)
            .field("unit_count", &self.unit_count)
            .field("images", &self.image_ids.len())
            .field("map_dims", &self.map_dims)
            .field(
                "backing",
                &match &self.storage {
                    Storage::Memory(_) => "memory".to_string(),
                    Storage::File { path, .. } => path.display().to_string(),
                },
            )
            .finish()
    }
}

impl ActivationSet {
    /// Builds an in-memory set. `data` is indexed `(unit, image, row, col)`.
    pub fn new(
        layer_name: impl Into<String>,
        unit_count: usize,
        image_ids: Vec<String>,
        map_dims: (usize, usize),
        data: Vec<f32>,
    ) -> Result<Self> {
        let (h, w) = map_dims;
        let expected = unit_count * image_ids.len() * h * w;
        if data.len() != expected {
            return Err(Error::DimensionMismatch {
                what: "activation payload".into(),
                expected: (expected, 1),
                found: (data.len(), 1),
            });
        }
        if unit_count == 0 || h == 0 || w == 0 {
            return Err(Error::InvalidConfig("activation set needs U, h, w > 0".into()));
        }
        let set = Self {
            layer_name: layer_name.into(),
            unit_count,
            image_ids,
            map_dims,
            storage: Storage::Memory(data),
        };
        if let Storage::Memory(data) = &set.storage {
            set.check_finite(data, 0)?;
        }
        Ok(set)
    }

    pub fn layer_name(&self) -> &str {
        &self.layer_name
    }

    pub fn unit_count(&self) -> usize {
        self.unit_count
    }

    pub fn image_count(&self) -> usize {
        self.image_ids.len()
    }

    pub fn image_ids(&self) -> &[String] {
        &self.image_ids
    }

    /// `(h, w)` of every activation map.
    pub fn map_dims(&self) -> (usize, usize) {
        self.map_dims
    }

    pub fn map_len(&self) -> usize {
        self.map_dims.0 * self.map_dims.1
    }

    fn unit_len(&self) -> usize {
        self.image_ids.len() * self.map_len()
    }

    fn check_finite(&self, values: &[f32], start: usize) -> Result<()> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            let flat = start + i;
            let per_unit = self.unit_len().max(1);
            let map_len = self.map_len().max(1);
            return Err(Error::NonFiniteValue {
                unit: flat / per_unit,
                image: (flat % per_unit) / map_len,
                offset: flat % map_len,
            });
        }
        Ok(())
    }

    fn read_range(&self, start: usize, len: usize) -> Result<Cow<'_, [f32]>> {
        match &self.storage {
            Storage::Memory(data) => Ok(Cow::Borrowed(&data[start..start + len])),
            Storage::File {
                path,
                file,
                payload_offset,
            } => {
                let mut bytes = vec![0u8; len * 4];
                {
                    let mut f = file
                        .lock()
                        .map_err(|_| Error::Internal("activation file lock poisoned".into()))?;
                    f.seek(SeekFrom::Start(payload_offset + start as u64 * 4))
                        .map_err(|e| Error::io(path, e))?;
                    f.read_exact(&mut bytes).map_err(|e| Error::io(path, e))?;
                }
                Ok(Cow::Owned(
                    bytes
                        .chunks_exact(4)
                        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                        .collect(),
                ))
            }
        }
    }

    /// All `N * h * w` values of one unit, image-major.
    pub fn unit_values(&self, unit: usize) -> Result<Cow<'_, [f32]>> {
        if unit >= self.unit_count {
            return Err(Error::OutOfRange(format!(
                "unit {unit} of {}",
                self.unit_count
            )));
        }
        self.read_range(unit * self.unit_len(), self.unit_len())
    }

    /// The `h * w` map of `unit` on `image`, row-major.
    pub fn map(&self, unit: usize, image: usize) -> Result<Cow<'_, [f32]>> {
        if unit >= self.unit_count || image >= self.image_ids.len() {
            return Err(Error::OutOfRange(format!("map ({unit}, {image})")));
        }
        self.read_range(unit * self.unit_len() + image * self.map_len(), self.map_len())
    }

    /// Copies the full tensor into memory.
    pub fn to_memory(&self) -> Result<ActivationSet> {
        let data = self
            .read_range(0, self.unit_count * self.unit_len())?
            .into_owned();
        Ok(ActivationSet {
            layer_name: self.layer_name.clone(),
            unit_count: self.unit_count,
            image_ids: self.image_ids.clone(),
            map_dims: self.map_dims,
            storage: Storage::Memory(data),
        })
    }

    /// A new in-memory set holding the images at `order` (indices into this set).
    pub fn select_images(&self, order: &[usize]) -> Result<ActivationSet> {
        let ml = self.map_len();
        let mut data = Vec::with_capacity(self.unit_count * order.len() * ml);
        for u in 0..self.unit_count {
            let values = self.unit_values(u)?;
            for &n in order {
                if n >= self.image_ids.len() {
                    return Err(Error::OutOfRange(format!("image {n}")));
                }
                data.extend_from_slice(&values[n * ml..(n + 1) * ml]);
            }
        }
        ActivationSet::new(
            self.layer_name.clone(),
            self.unit_count,
            order.iter().map(|&n| self.image_ids[n].clone()).collect(),
            self.map_dims,
            data,
        )
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let (h, w) = self.map_dims;
        out.write_all(&HNDA_MAGIC)?;
        for v in [
            HNDA_VERSION,
            self.unit_count as u32,
            self.image_ids.len() as u32,
            h as u32,
            w as u32,
            self.layer_name.len() as u32,
        ] {
            out.write_all(&v.to_le_bytes())?;
        }
        out.write_all(self.layer_name.as_bytes())?;
        for id in &self.image_ids {
            out.write_all(&(id.len() as u32).to_le_bytes())?;
            out.write_all(id.as_bytes())?;
        }
        for u in 0..self.unit_count {
            let values = self
                .unit_values(u)
                .map_err(|e| std::io::Error::other(e.to_string()))?;
            let mut buf = Vec::with_capacity(values.len() * 4);
            for v in values.iter() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            out.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        self.write_to(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }
}

fn read_u32<R: Read>(r: &mut R, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(|_| truncated(what))?;
    Ok(u32::from_le_bytes(b))
}

fn read_string<R: Read>(r: &mut R, len: usize, what: &str) -> Result<String> {
    let mut b = vec![0u8; len];
    r.read_exact(&mut b).map_err(|_| truncated(what))?;
    String::from_utf8(b).map_err(|e| Error::parse(what, e))
}

fn truncated(what: &str) -> Error {
    Error::TruncatedFile(format!("ended inside {what}"))
}

/// Opens and validates an HNDA v1 file.
///
/// The payload is scanned once for length and finiteness; afterwards maps are
/// read from disk on demand.
pub fn read_activations(path: impl AsRef<Path>) -> Result<ActivationSet> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let file_len = file.metadata().map_err(|e| Error::io(path, e))?.len();
    let mut r = BufReader::new(file);

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| truncated("magic"))?;
    if magic != HNDA_MAGIC {
        return Err(Error::BadMagic);
    }
    let version = read_u32(&mut r, "version")?;
    if version != HNDA_VERSION {
        return Err(Error::VersionUnsupported(version));
    }
    let units = read_u32(&mut r, "header")? as usize;
    let images = read_u32(&mut r, "header")? as usize;
    let h = read_u32(&mut r, "header")? as usize;
    let w = read_u32(&mut r, "header")? as usize;
    if units == 0 || h == 0 || w == 0 {
        return Err(Error::parse(path.display().to_string(), "U, h and w must be positive"));
    }
    let name_len = read_u32(&mut r, "layer name length")? as usize;
    let layer_name = read_string(&mut r, name_len, "layer name")?;
    let mut image_ids = Vec::with_capacity(images.min(1 << 20));
    for _ in 0..images {
        let len = read_u32(&mut r, "image id length")? as usize;
        image_ids.push(read_string(&mut r, len, "image id")?);
    }
    let payload_offset = r.stream_position().map_err(|e| Error::io(path, e))?;
    let payload_len = (units * images * h * w) as u64 * 4;
    if file_len < payload_offset + payload_len {
        return Err(Error::TruncatedFile(format!(
            "payload has {} of {payload_len} bytes",
            file_len - payload_offset
        )));
    }
    if file_len > payload_offset + payload_len {
        return Err(Error::parse(
            path.display().to_string(),
            format!("{} trailing bytes", file_len - payload_offset - payload_len),
        ));
    }

    let mut set = ActivationSet {
        layer_name,
        unit_count: units,
        image_ids,
        map_dims: (h, w),
        storage: Storage::Memory(Vec::new()),
    };
    const CHUNK: usize = 1 << 16;
    let total = units * images * h * w;
    let mut buf = vec![0u8; CHUNK * 4];
    let mut values = Vec::with_capacity(CHUNK);
    let mut start = 0;
    while start < total {
        let n = CHUNK.min(total - start);
        r.read_exact(&mut buf[..n * 4])
            .map_err(|_| truncated("payload"))?;
        values.clear();
        values.extend(
            buf[..n * 4]
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])),
        );
        set.check_finite(&values, start)?;
        start += n;
    }
    let file = r.into_inner();
    set.storage = Storage::File {
        path: path.to_path_buf(),
        file: Mutex::new(file),
        payload_offset,
    };
    Ok(set)
}

/// Per-image maximum activations of one unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitSummary {
    pub unit_index: usize,
    /// `max_scores[n]` is the maximum of the unit's map on image `n`.
    pub max_scores: Vec<f32>,
    /// Maximum activation over the whole layer.
    pub layer_max: f32,
}

impl UnitSummary {
    pub fn is_inactive(&self) -> bool {
        self.max_scores.iter().all(|&v| v == 0.0)
    }
}

pub fn unit_summaries(set: &ActivationSet, jobs: Jobs) -> Result<Vec<UnitSummary>> {
    let ml = set.map_len();
    let maxima = par::try_map_indexed(set.unit_count(), jobs, |u| {
        let values = set.unit_values(u)?;
        Ok::<_, Error>(
            values
                .chunks_exact(ml)
                .map(|m| m.iter().copied().fold(f32::NEG_INFINITY, f32::max))
                .collect::<Vec<f32>>(),
        )
    })?;
    let layer_max = maxima
        .iter()
        .flatten()
        .copied()
        .fold(f32::NEG_INFINITY, f32::max);
    Ok(maxima
        .into_iter()
        .enumerate()
        .map(|(unit_index, max_scores)| UnitSummary {
            unit_index,
            max_scores,
            layer_max,
        })
        .collect())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum QuantileMethod {
    #[default]
    Exact,
    /// Estimate from a seeded uniform reservoir sample.
    Reservoir { sample_size: usize, seed: u64 },
}

/// Upper empirical quantile: the smallest sample value `t` such that at most a
/// `q` fraction of `values` lies strictly above `t`.
pub fn upper_quantile(values: &[f32], q: f64) -> f32 {
    assert!(!values.is_empty(), "quantile of an empty sample");
    let m = values.len();
    let allowed = ((q * m as f64) * (1.0 + 1e-12)).floor() as usize;
    let k = allowed.min(m - 1);
    let mut scratch = values.to_vec();
    let (_, t, _) = scratch.select_nth_unstable_by(k, |a, b| b.total_cmp(a));
    *t
}

fn reservoir(values: &[f32], size: usize, seed: u64) -> Vec<f32> {
    if values.len() <= size {
        return values.to_vec();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sample = values[..size].to_vec();
    for (i, &v) in values.iter().enumerate().skip(size) {
        let j = rng.random_range(0..=i);
        if j < size {
            sample[j] = v;
        }
    }
    sample
}

pub fn quantile_with(values: &[f32], q: f64, method: QuantileMethod, unit: usize) -> f32 {
    match method {
        QuantileMethod::Exact => upper_quantile(values, q),
        QuantileMethod::Reservoir { sample_size, seed } => {
            let sample = reservoir(values, sample_size.max(1), seed ^ unit as u64);
            upper_quantile(&sample, q)
        }
    }
}

/// Activation threshold for `unit` over all of its `N * h * w` values.
pub fn activation_quantile(set: &ActivationSet, unit: usize, q: f64) -> Result<f32> {
    activation_quantile_with(set, unit, q, QuantileMethod::Exact)
}

pub fn activation_quantile_with(
    set: &ActivationSet,
    unit: usize,
    q: f64,
    method: QuantileMethod,
) -> Result<f32> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::InvalidConfig(format!("quantile must lie in (0, 1), got {q}")));
    }
    let values = set.unit_values(unit)?;
    if values.is_empty() {
        return Err(Error::EmptySelection(format!("unit {unit} has no images")));
    }
    Ok(quantile_with(&values, q, method, unit))
}
