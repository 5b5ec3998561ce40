//! Image classification datasets: IDX ingestion (raw or gzip), 28×28 → 8×8
//! resampling, normalization to `[-0.5, 0.5]`, and a versioned binary cache.

use std::fmt;
use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::exec::Execution;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;
pub const CACHE_MAGIC: &[u8; 4] = b"TNDS";
pub const CACHE_VERSION: u32 = 1;

/// Published per-class counts of the MNIST test split.
pub const MNIST_TEST_CLASS_COUNTS: [usize; 10] = [980, 1135, 1032, 1010, 982, 892, 958, 1028, 974, 1009];
/// Published per-class counts of the MNIST training split.
pub const MNIST_TRAIN_CLASS_COUNTS: [usize; 10] =
    [5923, 6742, 5958, 6131, 5842, 5421, 5918, 6265, 5851, 5949];

#[derive(Error, Debug)]
pub enum DataError {
    #[error("bad IDX magic 0x{found:08x} (expected 0x{expected:08x})")]
    BadMagic { found: u32, expected: u32 },
    #[error("unrecognized IDX magic 0x{0:08x}")]
    UnknownMagic(u32),
    #[error("truncated IDX data: expected {expected} bytes, found {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error("IDX dimensions {0:?} overflow")]
    DimensionOverflow(Vec<u32>),
    #[error("corrupted gzip stream in {path} near compressed offset {offset}: {message}")]
    Gzip {
        path: String,
        offset: u64,
        message: String,
    },
    #[error("{path}: {source}")]
    File {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("image count {images} does not match label count {labels}")]
    CountMismatch { images: usize, labels: usize },
    #[error("pixel value {0} outside [0, 255]")]
    OutOfRange(f64),
    #[error("dataset is empty")]
    Empty,
    #[error("label {label} outside 0..{classes}")]
    BadLabel { label: u8, classes: usize },
    #[error("malformed dataset cache: {0}")]
    Cache(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, DataError>;

/// Decoded IDX payload.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Idx {
    Images {
        count: usize,
        rows: usize,
        cols: usize,
        pixels: Vec<u8>,
    },
    Labels(Vec<u8>),
}

fn be_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or(DataError::Truncated {
            expected: at + 4,
            actual: bytes.len(),
        })
}

/// Parses an uncompressed IDX image (`0x803`) or label (`0x801`) file.
pub fn parse_idx(bytes: &[u8]) -> Result<Idx> {
    let magic = be_u32(bytes, 0)?;
    match magic {
        IMAGE_MAGIC => {
            let dims = [be_u32(bytes, 4)?, be_u32(bytes, 8)?, be_u32(bytes, 12)?];
            let payload = dims
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d as usize))
                .and_then(|p| p.checked_add(16))
                .ok_or_else(|| DataError::DimensionOverflow(dims.to_vec()))?;
            if bytes.len() < payload {
                return Err(DataError::Truncated {
                    expected: payload,
                    actual: bytes.len(),
                });
            }
            Ok(Idx::Images {
                count: dims[0] as usize,
                rows: dims[1] as usize,
                cols: dims[2] as usize,
                pixels: bytes[16..payload].to_vec(),
            })
        }
        LABEL_MAGIC => {
            let count = be_u32(bytes, 4)? as usize;
            let expected = count + 8;
            if bytes.len() < expected {
                return Err(DataError::Truncated {
                    expected,
                    actual: bytes.len(),
                });
            }
            Ok(Idx::Labels(bytes[8..expected].to_vec()))
        }
        other => Err(DataError::UnknownMagic(other)),
    }
}

struct CountingReader<'a> {
    inner: &'a [u8],
    consumed: u64,
}

impl Read for CountingReader<'_> {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        let n = self.inner.read(buf)?;
        self.consumed += n as u64;
        Ok(n)
    }
}

/// Reads a file, transparently inflating gzip content. Returns the raw
/// on-disk bytes (for digests) and the decoded bytes.
pub fn read_maybe_gzip(path: &Path) -> Result<(Vec<u8>, Vec<u8>)> {
    let raw = fs::read(path).map_err(|source| DataError::File {
        path: path.display().to_string(),
        source,
    })?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut counter = CountingReader {
            inner: &raw,
            consumed: 0,
        };
        let mut out = Vec::new();
        let res = GzDecoder::new(&mut counter).read_to_end(&mut out);
        if let Err(e) = res {
            return Err(DataError::Gzip {
                path: path.display().to_string(),
                offset: counter.consumed,
                message: e.to_string(),
            });
        }
        Ok((raw, out))
    } else {
        Ok((raw.clone(), raw))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ResizeFilter {
    /// Area-weighted box average with fractional pixel overlaps.
    #[default]
    Box,
    /// Bilinear interpolation at output-cell centers.
    Bilinear,
}

impl ResizeFilter {
    fn tag(self) -> u8 {
        match self {
            ResizeFilter::Box => 0,
            ResizeFilter::Bilinear => 1,
        }
    }

    fn from_tag(t: u8) -> Result<Self> {
        match t {
            0 => Ok(ResizeFilter::Box),
            1 => Ok(ResizeFilter::Bilinear),
            _ => Err(DataError::Cache(format!("unknown filter tag {t}"))),
        }
    }
}

impl fmt::Display for ResizeFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ResizeFilter::Box => "box",
            ResizeFilter::Bilinear => "bilinear",
        })
    }
}

impl std::str::FromStr for ResizeFilter {
    type Err = DataError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "box" => Ok(ResizeFilter::Box),
            "bilinear" => Ok(ResizeFilter::Bilinear),
            _ => Err(DataError::Cache(format!("unknown resize filter {s:?}"))),
        }
    }
}

/// Overlap of the unit pixel `[p, p+1)` with `[lo, hi)`.
fn overlap(p: usize, lo: f64, hi: f64) -> f64 {
    let (a, b) = (p as f64, p as f64 + 1.0);
    (b.min(hi) - a.max(lo)).max(0.0)
}

/// Resamples a square `src_side`² image to `dst_side`² using `filter`.
/// Output values stay within the input's intensity range.
pub fn resize(image: &[u8], src_side: usize, dst_side: usize, filter: ResizeFilter) -> Vec<f64> {
    assert_eq!(image.len(), src_side * src_side, "image is not {src_side}x{src_side}");
    let scale = src_side as f64 / dst_side as f64;
    let mut out = vec![0.0; dst_side * dst_side];
    match filter {
        ResizeFilter::Box => {
            for i in 0..dst_side {
                let (r0, r1) = (scale * i as f64, scale * (i + 1) as f64);
                for j in 0..dst_side {
                    let (c0, c1) = (scale * j as f64, scale * (j + 1) as f64);
                    let mut acc = 0.0;
                    for p in (r0.floor() as usize)..(r1.ceil() as usize).min(src_side) {
                        let wr = overlap(p, r0, r1);
                        for q in (c0.floor() as usize)..(c1.ceil() as usize).min(src_side) {
                            acc += wr * overlap(q, c0, c1) * image[p * src_side + q] as f64;
                        }
                    }
                    out[i * dst_side + j] = acc / (scale * scale);
                }
            }
        }
        ResizeFilter::Bilinear => {
            let coord = |i: usize| {
                let c = (i as f64 + 0.5) * scale - 0.5;
                let c = c.clamp(0.0, (src_side - 1) as f64);
                let lo = c.floor() as usize;
                let hi = (lo + 1).min(src_side - 1);
                (lo, hi, c - lo as f64)
            };
            for i in 0..dst_side {
                let (p0, p1, tr) = coord(i);
                for j in 0..dst_side {
                    let (q0, q1, tc) = coord(j);
                    let px = |p: usize, q: usize| image[p * src_side + q] as f64;
                    let top = px(p0, q0) * (1.0 - tc) + px(p0, q1) * tc;
                    let bottom = px(p1, q0) * (1.0 - tc) + px(p1, q1) * tc;
                    out[i * dst_side + j] = top * (1.0 - tr) + bottom * tr;
                }
            }
        }
    }
    out
}

/// 28×28 → 8×8 box resampling.
pub fn downsample(image: &[u8]) -> Vec<f64> {
    resize(image, 28, 8, ResizeFilter::Box)
}

/// Maps a pixel intensity in `[0, 255]` to `[-0.5, 0.5]`.
pub fn normalize(pixel: f64) -> Result<f64> {
    if !(0.0..=255.0).contains(&pixel) {
        return Err(DataError::OutOfRange(pixel));
    }
    Ok(pixel / 255.0 - 0.5)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    /// SHA-256 over the on-disk image file bytes followed by the label
    /// file bytes, hex encoded.
    pub source_digest: String,
    pub filter: ResizeFilter,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    labels: Vec<u8>,
    n_features: usize,
    classes: usize,
    split: Split,
    provenance: Provenance,
}

impl Dataset {
    pub fn new(
        features: Vec<f64>,
        labels: Vec<u8>,
        n_features: usize,
        classes: usize,
        split: Split,
        provenance: Provenance,
    ) -> Result<Self> {
        if labels.is_empty() || n_features == 0 {
            return Err(DataError::Empty);
        }
        if features.len() != labels.len() * n_features {
            return Err(DataError::CountMismatch {
                images: features.len() / n_features,
                labels: labels.len(),
            });
        }
        if let Some(&label) = labels.iter().find(|&&l| l as usize >= classes) {
            return Err(DataError::BadLabel { label, classes });
        }
        Ok(Self {
            features,
            labels,
            n_features,
            classes,
            split,
            provenance,
        })
    }

    /// Small in-memory dataset without file provenance (tests, toys).
    pub fn in_memory(features: Vec<f64>, labels: Vec<u8>, n_features: usize, classes: usize) -> Result<Self> {
        Self::new(
            features,
            labels,
            n_features,
            classes,
            Split::Train,
            Provenance {
                source_digest: String::new(),
                filter: ResizeFilter::Box,
            },
        )
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i] as usize
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    /// The first `n` samples (all of them if `n` exceeds the length).
    pub fn head(&self, n: usize) -> Dataset {
        let n = n.min(self.len());
        Dataset {
            features: self.features[..n * self.n_features].to_vec(),
            labels: self.labels[..n].to_vec(),
            ..self.clone_meta()
        }
    }

    fn clone_meta(&self) -> Dataset {
        Dataset {
            features: Vec::new(),
            labels: Vec::new(),
            n_features: self.n_features,
            classes: self.classes,
            split: self.split,
            provenance: self.provenance.clone(),
        }
    }

    pub fn class_histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.classes];
        for &l in &self.labels {
            h[l as usize] += 1;
        }
        h
    }

    pub fn write_cache<W: Write>(&self, w: &mut W) -> io::Result<()> {
        w.write_all(CACHE_MAGIC)?;
        w.write_all(&CACHE_VERSION.to_le_bytes())?;
        w.write_all(&(self.n_features as u32).to_le_bytes())?;
        w.write_all(&(self.len() as u32).to_le_bytes())?;
        w.write_all(&[self.provenance.filter.tag()])?;
        let digest = decode_digest(&self.provenance.source_digest);
        w.write_all(&digest)?;
        w.write_all(&[match self.split {
            Split::Train => 0,
            Split::Test => 1,
        }])?;
        w.write_all(&(self.classes as u32).to_le_bytes())?;
        w.write_all(&self.labels)?;
        for v in &self.features {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_cache<R: Read>(r: &mut R) -> Result<Self> {
        let header = CacheHeader::read(r)?;
        let mut b4 = [0u8; 4];
        let mut b1 = [0u8; 1];
        r.read_exact(&mut b1)?;
        let split = match b1[0] {
            0 => Split::Train,
            1 => Split::Test,
            s => return Err(DataError::Cache(format!("unknown split tag {s}"))),
        };
        r.read_exact(&mut b4)?;
        let classes = u32::from_le_bytes(b4) as usize;
        let mut labels = vec![0u8; header.count];
        r.read_exact(&mut labels)?;
        let mut raw = vec![0u8; header.count * header.n_features * 8];
        r.read_exact(&mut raw)?;
        let features = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        Dataset::new(
            features,
            labels,
            header.n_features,
            classes,
            split,
            Provenance {
                source_digest: header.source_digest,
                filter: header.filter,
            },
        )
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_cache(&mut buf)?;
        fs::write(path, buf).map_err(|source| DataError::File {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|source| DataError::File {
            path: path.display().to_string(),
            source,
        })?;
        Self::read_cache(&mut bytes.as_slice())
    }
}

fn decode_digest(hex_digest: &str) -> [u8; 32] {
    let mut out = [0u8; 32];
    if let Ok(bytes) = hex::decode(hex_digest) {
        let n = bytes.len().min(32);
        out[..n].copy_from_slice(&bytes[..n]);
    }
    out
}

/// Fixed leading fields of a dataset cache file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CacheHeader {
    pub version: u32,
    pub n_features: usize,
    pub count: usize,
    pub filter: ResizeFilter,
    pub source_digest: String,
}

impl CacheHeader {
    pub fn read<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != CACHE_MAGIC {
            return Err(DataError::Cache(format!("bad magic {magic:?}")));
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        let version = u32::from_le_bytes(b4);
        if version != CACHE_VERSION {
            return Err(DataError::Cache(format!("unsupported version {version}")));
        }
        r.read_exact(&mut b4)?;
        let n_features = u32::from_le_bytes(b4) as usize;
        r.read_exact(&mut b4)?;
        let count = u32::from_le_bytes(b4) as usize;
        let mut b1 = [0u8; 1];
        r.read_exact(&mut b1)?;
        let filter = ResizeFilter::from_tag(b1[0])?;
        let mut digest = [0u8; 32];
        r.read_exact(&mut digest)?;
        Ok(Self {
            version,
            n_features,
            count,
            filter,
            source_digest: hex::encode(digest),
        })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let mut f = fs::File::open(path).map_err(|source| DataError::File {
            path: path.display().to_string(),
            source,
        })?;
        Self::read(&mut f)
    }
}

/// SHA-256 of the concatenated source files, hex encoded.
pub fn source_digest(images_raw: &[u8], labels_raw: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(images_raw);
    h.update(labels_raw);
    hex::encode(h.finalize())
}

/// Locations of one split's IDX files.
#[derive(Clone, Debug)]
pub struct IdxSource {
    pub images: PathBuf,
    pub labels: PathBuf,
}

impl IdxSource {
    /// Looks for the conventional MNIST file names (optionally `.gz`) in
    /// `dir`: `train-images-idx3-ubyte` / `t10k-images-idx3-ubyte` etc.
    pub fn in_dir(dir: &Path, split: Split) -> Result<Self> {
        let prefix = match split {
            Split::Train => "train",
            Split::Test => "t10k",
        };
        let find = |stem: String| -> Result<PathBuf> {
            for name in [stem.clone(), format!("{stem}.gz")] {
                let p = dir.join(&name);
                if p.is_file() {
                    return Ok(p);
                }
            }
            Err(DataError::File {
                path: dir.join(&stem).display().to_string(),
                source: io::Error::new(io::ErrorKind::NotFound, "IDX file not found"),
            })
        };
        Ok(Self {
            images: find(format!("{prefix}-images-idx3-ubyte"))?,
            labels: find(format!("{prefix}-labels-idx1-ubyte"))?,
        })
    }

    /// Digest of the source files without decoding them.
    pub fn digest(&self) -> Result<String> {
        let read = |p: &Path| {
            fs::read(p).map_err(|source| DataError::File {
                path: p.display().to_string(),
                source,
            })
        };
        Ok(source_digest(&read(&self.images)?, &read(&self.labels)?))
    }
}

/// Full pipeline for one split: parse, resample to `side`², normalize.
pub fn prepare_split(
    source: &IdxSource,
    split: Split,
    filter: ResizeFilter,
    side: usize,
    exec: Execution,
) -> Result<Dataset> {
    let (img_raw, img) = read_maybe_gzip(&source.images)?;
    let (lab_raw, lab) = read_maybe_gzip(&source.labels)?;
    let (count, rows, cols, pixels) = match parse_idx(&img)? {
        Idx::Images {
            count,
            rows,
            cols,
            pixels,
        } => (count, rows, cols, pixels),
        Idx::Labels(_) => {
            return Err(DataError::BadMagic {
                found: LABEL_MAGIC,
                expected: IMAGE_MAGIC,
            })
        }
    };
    let labels = match parse_idx(&lab)? {
        Idx::Labels(l) => l,
        Idx::Images { .. } => {
            return Err(DataError::BadMagic {
                found: IMAGE_MAGIC,
                expected: LABEL_MAGIC,
            })
        }
    };
    if labels.len() != count {
        return Err(DataError::CountMismatch {
            images: count,
            labels: labels.len(),
        });
    }
    if rows != cols {
        return Err(DataError::Cache(format!("non-square images {rows}x{cols}")));
    }
    let per = rows * cols;
    let resized = exec.try_map(count, |i| {
        resize(&pixels[i * per..(i + 1) * per], rows, side, filter)
            .into_iter()
            .map(normalize)
            .collect::<Result<Vec<f64>>>()
    })?;
    let features = resized.into_iter().flatten().collect();
    Dataset::new(
        features,
        labels,
        side * side,
        10,
        split,
        Provenance {
            source_digest: source_digest(&img_raw, &lab_raw),
            filter,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn idx_images(count: u32, side: u32, pixels: &[u8]) -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
        b.extend_from_slice(&count.to_be_bytes());
        b.extend_from_slice(&side.to_be_bytes());
        b.extend_from_slice(&side.to_be_bytes());
        b.extend_from_slice(pixels);
        b
    }

    #[test]
    fn single_zero_image() {
        let bytes = idx_images(1, 28, &[0u8; 784]);
        match parse_idx(&bytes).unwrap() {
            Idx::Images {
                count,
                rows,
                cols,
                pixels,
            } => {
                assert_eq!((count, rows, cols), (1, 28, 28));
                assert!(pixels.iter().all(|&p| p == 0));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn truncated_payload_reports_sizes() {
        let bytes = idx_images(2, 28, &[0u8; 1000]);
        match parse_idx(&bytes) {
            Err(DataError::Truncated { expected, actual }) => {
                assert_eq!(expected, 16 + 2 * 784);
                assert_eq!(actual, 16 + 1000);
            }
            other => panic!("unexpected {other:?}"),
        }
        let labels = [0, 0, 8, 1, 0, 0, 0, 5, 1, 2];
        assert!(matches!(
            parse_idx(&labels),
            Err(DataError::Truncated { expected: 13, actual: 10 })
        ));
    }

    #[test]
    fn bad_magic_and_overflow() {
        assert!(matches!(
            parse_idx(&[0, 0, 8, 9, 0, 0, 0, 0]),
            Err(DataError::UnknownMagic(0x809))
        ));
        let mut b = Vec::new();
        b.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
        for _ in 0..3 {
            b.extend_from_slice(&u32::MAX.to_be_bytes());
        }
        if usize::BITS == 64 {
            // 2^96 overflows usize
            assert!(matches!(parse_idx(&b), Err(DataError::DimensionOverflow(_))));
        }
    }

    #[test]
    fn constant_image_stays_constant() {
        for filter in [ResizeFilter::Box, ResizeFilter::Bilinear] {
            let out = resize(&[77u8; 784], 28, 8, filter);
            assert!(out.iter().all(|&v| (v - 77.0).abs() < 1e-12));
        }
    }

    #[test]
    fn quadrant_image() {
        let mut img = [0u8; 784];
        for p in 0..14 {
            for q in 0..14 {
                img[p * 28 + q] = 255;
            }
        }
        let out = downsample(&img);
        for i in 0..8 {
            for j in 0..8 {
                let v = out[i * 8 + j];
                if i < 4 && j < 4 {
                    assert!((v - 255.0).abs() < 1e-12);
                } else if i >= 4 && j >= 4 {
                    assert_eq!(v, 0.0);
                }
            }
        }
    }

    #[test]
    fn normalization_endpoints() {
        assert_eq!(normalize(0.0).unwrap(), -0.5);
        assert_eq!(normalize(255.0).unwrap(), 0.5);
        assert_eq!(normalize(127.5).unwrap(), 0.0);
        assert!(matches!(normalize(256.0), Err(DataError::OutOfRange(_))));
        assert!(normalize(-1.0).is_err());
    }

    #[test]
    fn gzip_transparency_and_corruption() {
        use flate2::write::GzEncoder;
        use flate2::Compression;
        let dir = tempfile::tempdir().unwrap();
        let bytes = idx_images(1, 28, &[9u8; 784]);
        let mut enc = GzEncoder::new(Vec::new(), Compression::default());
        enc.write_all(&bytes).unwrap();
        let gz = enc.finish().unwrap();
        let good = dir.path().join("good.gz");
        fs::write(&good, &gz).unwrap();
        let (_, decoded) = read_maybe_gzip(&good).unwrap();
        assert_eq!(decoded, bytes);

        let mut bad = gz.clone();
        let mid = bad.len() / 2;
        for b in &mut bad[12..mid] {
            *b ^= 0x5a;
        }
        let badp = dir.path().join("bad.gz");
        fs::write(&badp, &bad).unwrap();
        match read_maybe_gzip(&badp) {
            Err(DataError::Gzip { path, offset, .. }) => {
                assert!(path.ends_with("bad.gz"));
                assert!(offset <= bad.len() as u64);
            }
            other => panic!("expected gzip error, got {other:?}"),
        }
    }

    #[test]
    fn cache_round_trip() {
        let ds = Dataset::new(
            vec![0.1, -0.2, 0.3, 0.4, 0.5, -0.5],
            vec![1, 0, 2],
            2,
            3,
            Split::Test,
            Provenance {
                source_digest: hex::encode([7u8; 32]),
                filter: ResizeFilter::Bilinear,
            },
        )
        .unwrap();
        let mut buf = Vec::new();
        ds.write_cache(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"TNDS");
        let back = Dataset::read_cache(&mut buf.as_slice()).unwrap();
        assert_eq!(back, ds);
        let header = CacheHeader::read(&mut buf.as_slice()).unwrap();
        assert_eq!(header.count, 3);
        assert_eq!(header.filter, ResizeFilter::Bilinear);
    }

    #[test]
    fn dataset_validation() {
        assert!(matches!(Dataset::in_memory(vec![], vec![], 2, 2), Err(DataError::Empty)));
        assert!(matches!(
            Dataset::in_memory(vec![0.0; 4], vec![0, 5], 2, 3),
            Err(DataError::BadLabel { label: 5, classes: 3 })
        ));
    }
}
