//! Labeled datasets: MNIST IDX and CIFAR-10 binary readers, a synthetic
//! correlated-input generator, splitting, and training-set augmentation.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SnrError};
use crate::rng::SeededRng;
use crate::tensor::Matrix;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;
pub const CIFAR_RECORD_BYTES: usize = 3073;
const CIFAR_PIXELS: usize = 3072;

/// Channel-planar image geometry (all of channel 0, then channel 1, ...).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageShape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl ImageShape {
    pub fn features(&self) -> usize {
        self.channels * self.height * self.width
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    inputs: Matrix,
    labels: Vec<usize>,
    class_count: usize,
    image: Option<ImageShape>,
}

impl LabeledDataset {
    pub fn new(
        inputs: Matrix,
        labels: Vec<usize>,
        class_count: usize,
        image: Option<ImageShape>,
    ) -> Result<Self> {
        if labels.len() != inputs.rows() {
            return Err(SnrError::shape(
                "LabeledDataset::new",
                format!("{} labels for {} samples", labels.len(), inputs.rows()),
            ));
        }
        if let Some(bad) = labels.iter().find(|&&l| l >= class_count) {
            return Err(SnrError::Data(format!(
                "label {bad} out of range for {class_count} classes"
            )));
        }
        if inputs.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(SnrError::Data("input values must lie in [0, 1]".into()));
        }
        if let Some(shape) = image {
            if shape.features() != inputs.cols() {
                return Err(SnrError::shape(
                    "LabeledDataset::new",
                    format!("image shape {shape:?} vs {} features", inputs.cols()),
                ));
            }
        }
        Ok(LabeledDataset {
            inputs,
            labels,
            class_count,
            image,
        })
    }

    pub fn inputs(&self) -> &Matrix {
        &self.inputs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn image_shape(&self) -> Option<ImageShape> {
        self.image
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn features(&self) -> usize {
        self.inputs.cols()
    }

    pub fn subset(&self, idx: &[usize]) -> LabeledDataset {
        LabeledDataset {
            inputs: self.inputs.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            class_count: self.class_count,
            image: self.image,
        }
    }

    /// Concatenate datasets with identical geometry.
    pub fn concat(parts: &[LabeledDataset]) -> Result<LabeledDataset> {
        let first = parts
            .first()
            .ok_or_else(|| SnrError::InvalidArgument("nothing to concatenate".into()))?;
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for p in parts {
            if p.features() != first.features() || p.image != first.image {
                return Err(SnrError::shape("concat", "datasets differ in geometry"));
            }
            data.extend_from_slice(p.inputs.data());
            labels.extend_from_slice(&p.labels);
        }
        let class_count = parts.iter().map(|p| p.class_count).max().unwrap_or(0);
        let inputs = Matrix::from_vec_unchecked(labels.len(), first.features(), data);
        Ok(LabeledDataset {
            inputs,
            labels,
            class_count,
            image: first.image,
        })
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path).map_err(|e| SnrError::io(path, e))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| SnrError::io(path, e))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn be_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    let slice = bytes.get(offset..offset + 4).ok_or(SnrError::Truncated {
        expected: offset + 4,
        found: bytes.len(),
    })?;
    Ok(u32::from_be_bytes(slice.try_into().unwrap()))
}

/// Raw IDX image payload: `(count, rows, cols, pixel bytes)`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<(usize, usize, usize, &[u8])> {
    let magic = be_u32(bytes, 0)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(SnrError::BadMagic {
            expected: IDX_IMAGES_MAGIC,
            found: magic,
        });
    }
    let count = be_u32(bytes, 4)? as usize;
    let rows = be_u32(bytes, 8)? as usize;
    let cols = be_u32(bytes, 12)? as usize;
    let expected = 16 + count * rows * cols;
    if bytes.len() < expected {
        return Err(SnrError::Truncated {
            expected,
            found: bytes.len(),
        });
    }
    Ok((count, rows, cols, &bytes[16..expected]))
}

/// Raw IDX label payload.
pub fn parse_idx_labels(bytes: &[u8]) -> Result<&[u8]> {
    let magic = be_u32(bytes, 0)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(SnrError::BadMagic {
            expected: IDX_LABELS_MAGIC,
            found: magic,
        });
    }
    let count = be_u32(bytes, 4)? as usize;
    let expected = 8 + count;
    if bytes.len() < expected {
        return Err(SnrError::Truncated {
            expected,
            found: bytes.len(),
        });
    }
    Ok(&bytes[8..expected])
}

/// Decode an in-memory IDX image/label pair.
pub fn decode_mnist(images: &[u8], labels: &[u8]) -> Result<LabeledDataset> {
    let (count, rows, cols, pixels) = parse_idx_images(images)?;
    let label_bytes = parse_idx_labels(labels)?;
    if label_bytes.len() != count {
        return Err(SnrError::CountMismatch {
            images: count,
            labels: label_bytes.len(),
        });
    }
    if let Some(&bad) = label_bytes.iter().find(|&&l| l > 9) {
        return Err(SnrError::Data(format!("MNIST label byte {bad} exceeds 9")));
    }
    let data = pixels.iter().map(|&p| p as f64 / 255.0).collect();
    let inputs = Matrix::from_vec_unchecked(count, rows * cols, data);
    Ok(LabeledDataset {
        inputs,
        labels: label_bytes.iter().map(|&l| l as usize).collect(),
        class_count: 10,
        image: Some(ImageShape {
            channels: 1,
            height: rows,
            width: cols,
        }),
    })
}

/// Load an MNIST image/label file pair (plain or gzip-compressed).
pub fn load_mnist_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<LabeledDataset> {
    let images = read_file(images_path.as_ref())?;
    let labels = read_file(labels_path.as_ref())?;
    decode_mnist(&images, &labels)
}

/// Decode CIFAR-10 binary records (1 label byte + 3072 planar pixel bytes).
pub fn decode_cifar10(bytes: &[u8]) -> Result<LabeledDataset> {
    if !bytes.len().is_multiple_of(CIFAR_RECORD_BYTES) {
        return Err(SnrError::Format(format!(
            "length {} is not a multiple of {CIFAR_RECORD_BYTES}",
            bytes.len()
        )));
    }
    let count = bytes.len() / CIFAR_RECORD_BYTES;
    let mut labels = Vec::with_capacity(count);
    let mut data = Vec::with_capacity(count * CIFAR_PIXELS);
    for (i, rec) in bytes.chunks_exact(CIFAR_RECORD_BYTES).enumerate() {
        if rec[0] > 9 {
            return Err(SnrError::Data(format!("record {i}: label byte {} exceeds 9", rec[0])));
        }
        labels.push(rec[0] as usize);
        data.extend(rec[1..].iter().map(|&p| p as f64 / 255.0));
    }
    Ok(LabeledDataset {
        inputs: Matrix::from_vec_unchecked(count, CIFAR_PIXELS, data),
        labels,
        class_count: 10,
        image: Some(ImageShape {
            channels: 3,
            height: 32,
            width: 32,
        }),
    })
}

pub fn load_cifar10_bin<P: AsRef<Path>>(batch_paths: &[P]) -> Result<LabeledDataset> {
    let parts = batch_paths
        .iter()
        .map(|p| read_file(p.as_ref()).and_then(|b| decode_cifar10(&b)))
        .collect::<Result<Vec<_>>>()?;
    LabeledDataset::concat(&parts)
}

/// Disjoint seeded train/test selection from one pool of samples.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_count: usize,
    pub test_count: usize,
    pub seed: u64,
}

impl SplitSpec {
    pub fn indices(&self, source_len: usize) -> Result<(Vec<usize>, Vec<usize>)> {
        if self.train_count + self.test_count > source_len {
            return Err(SnrError::InvalidArgument(format!(
                "split of {} + {} exceeds {source_len} samples",
                self.train_count, self.test_count
            )));
        }
        let perm = SeededRng::new(self.seed).permutation(source_len);
        let train = perm[..self.train_count].to_vec();
        let test = perm[self.train_count..self.train_count + self.test_count].to_vec();
        Ok((train, test))
    }

    pub fn split(&self, data: &LabeledDataset) -> Result<(LabeledDataset, LabeledDataset)> {
        let (train, test) = self.indices(data.len())?;
        Ok((data.subset(&train), data.subset(&test)))
    }
}

/// Groups of features driven by shared latent variables.
///
/// Each group has one latent driver drawn uniformly from [-0.5, 1]; every
/// feature in the group is the driver plus independent Gaussian noise,
/// clamped to [0, 1], so roughly a third of samples leave a group inactive.
/// The label is the index of the largest driver.
pub fn synthetic_correlated(
    groups: usize,
    group_size: usize,
    samples: usize,
    noise_sigma: f64,
    rng: &mut SeededRng,
) -> Result<LabeledDataset> {
    if groups == 0 || group_size == 0 || samples == 0 {
        return Err(SnrError::InvalidArgument(
            "groups, group_size and samples must all be at least 1".into(),
        ));
    }
    if noise_sigma.is_nan() || noise_sigma < 0.0 {
        return Err(SnrError::InvalidArgument(format!("noise sigma {noise_sigma} < 0")));
    }
    let features = groups * group_size;
    let mut data = Vec::with_capacity(samples * features);
    let mut labels = Vec::with_capacity(samples);
    let mut latent = vec![0.0; groups];
    for _ in 0..samples {
        for z in latent.iter_mut() {
            *z = rng.uniform_range(-0.5, 1.0);
        }
        let mut best = 0;
        for (g, &z) in latent.iter().enumerate() {
            if z > latent[best] {
                best = g;
            }
        }
        labels.push(best);
        for &z in &latent {
            for _ in 0..group_size {
                let noise = if noise_sigma > 0.0 { noise_sigma * rng.normal() } else { 0.0 };
                data.push((z + noise).clamp(0.0, 1.0));
            }
        }
    }
    Ok(LabeledDataset {
        inputs: Matrix::from_vec_unchecked(samples, features, data),
        labels,
        class_count: groups,
        image: None,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentSpec {
    /// Maximum random translation in pixels along each axis (zero fill).
    pub shift_pixels: usize,
    pub flip_horizontal: bool,
    /// Additive Gaussian pixel noise, applied before clamping.
    pub noise_sigma: f64,
}

impl AugmentSpec {
    pub fn is_identity(&self) -> bool {
        self.shift_pixels == 0 && !self.flip_horizontal && self.noise_sigma == 0.0
    }
}

/// Transformed copy of `data`: every image is mirrored when
/// `flip_horizontal` is set, shifted by a random offset in
/// `[-shift_pixels, shift_pixels]` per axis, then perturbed by pixel noise.
pub fn augment(data: &LabeledDataset, spec: &AugmentSpec, rng: &mut SeededRng) -> Result<LabeledDataset> {
    augment_with_flip_probability(data, spec, 1.0, rng)
}

/// As [`augment`], but each image is mirrored only with probability
/// `flip_probability`; the training loop uses one half.
pub fn augment_with_flip_probability(
    data: &LabeledDataset,
    spec: &AugmentSpec,
    flip_probability: f64,
    rng: &mut SeededRng,
) -> Result<LabeledDataset> {
    if spec.noise_sigma.is_nan() || spec.noise_sigma < 0.0 {
        return Err(SnrError::InvalidArgument("augmentation noise sigma < 0".into()));
    }
    if spec.is_identity() {
        return Ok(data.clone());
    }
    let needs_image = spec.flip_horizontal || spec.shift_pixels > 0;
    let shape = match (data.image, needs_image) {
        (Some(s), _) => Some(s),
        (None, false) => None,
        (None, true) => {
            return Err(SnrError::InvalidArgument(
                "flips and shifts need image-shaped data".into(),
            ))
        }
    };
    if let Some(s) = shape {
        if spec.shift_pixels >= s.height.min(s.width) && spec.shift_pixels > 0 {
            return Err(SnrError::InvalidArgument(format!(
                "shift of {} pixels exceeds {}x{} image",
                spec.shift_pixels, s.height, s.width
            )));
        }
    }
    let mut inputs = data.inputs.clone();
    for r in 0..inputs.rows() {
        let row = inputs.row_mut(r);
        if let Some(s) = shape {
            if spec.flip_horizontal && rng.bernoulli(flip_probability) {
                flip_row(row, s);
            }
            if spec.shift_pixels > 0 {
                let span = 2 * spec.shift_pixels + 1;
                let dy = rng.below(span) as isize - spec.shift_pixels as isize;
                let dx = rng.below(span) as isize - spec.shift_pixels as isize;
                shift_row(row, s, dy, dx);
            }
        }
        if spec.noise_sigma > 0.0 {
            for v in row.iter_mut() {
                *v = (*v + spec.noise_sigma * rng.normal()).clamp(0.0, 1.0);
            }
        }
    }
    Ok(LabeledDataset { inputs, ..data.clone() })
}

/// Mirror every image left-to-right.
pub fn flip_horizontal(data: &LabeledDataset) -> Result<LabeledDataset> {
    let shape = data
        .image
        .ok_or_else(|| SnrError::InvalidArgument("flip needs image-shaped data".into()))?;
    let mut inputs = data.inputs.clone();
    for r in 0..inputs.rows() {
        flip_row(inputs.row_mut(r), shape);
    }
    Ok(LabeledDataset { inputs, ..data.clone() })
}

fn flip_row(row: &mut [f64], s: ImageShape) {
    for plane in row.chunks_exact_mut(s.height * s.width) {
        for line in plane.chunks_exact_mut(s.width) {
            line.reverse();
        }
    }
}

fn shift_row(row: &mut [f64], s: ImageShape, dy: isize, dx: isize) {
    if dy == 0 && dx == 0 {
        return;
    }
    let (h, w) = (s.height as isize, s.width as isize);
    for plane in row.chunks_exact_mut(s.height * s.width) {
        let src = plane.to_vec();
        for y in 0..h {
            for x in 0..w {
                let (sy, sx) = (y - dy, x - dx);
                plane[(y * w + x) as usize] = if sy >= 0 && sy < h && sx >= 0 && sx < w {
                    src[(sy * w + sx) as usize]
                } else {
                    0.0
                };
            }
        }
    }
}

/// Little-endian container for exchanging datasets:
/// `u64 feature_count, u64 sample_count, u64 class_count`, then one `u32`
/// label per sample, then `f64` features in row-major order.
pub fn write_container(data: &LabeledDataset, mut out: impl Write) -> std::io::Result<()> {
    out.write_all(&(data.features() as u64).to_le_bytes())?;
    out.write_all(&(data.len() as u64).to_le_bytes())?;
    out.write_all(&(data.class_count as u64).to_le_bytes())?;
    for &l in &data.labels {
        out.write_all(&(l as u32).to_le_bytes())?;
    }
    for &v in data.inputs.data() {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_container(bytes: &[u8]) -> Result<LabeledDataset> {
    let header = |i: usize| -> Result<usize> {
        let s = bytes.get(i * 8..i * 8 + 8).ok_or(SnrError::Truncated {
            expected: 24,
            found: bytes.len(),
        })?;
        Ok(u64::from_le_bytes(s.try_into().unwrap()) as usize)
    };
    let (features, samples, classes) = (header(0)?, header(1)?, header(2)?);
    let expected = 24 + samples * 4 + samples * features * 8;
    if bytes.len() != expected {
        return Err(SnrError::Truncated {
            expected,
            found: bytes.len(),
        });
    }
    let labels = bytes[24..24 + samples * 4]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()) as usize)
        .collect();
    let values = bytes[24 + samples * 4..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    LabeledDataset::new(Matrix::new(samples, features, values)?, labels, classes, None)
}
