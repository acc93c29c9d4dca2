//! Data generators and loaders: synthetic 2D bimodal Gaussian, uniform
//! hemisphere samples, MNIST IDX ingestion, and CSV point-matrix I/O.

use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use byteorder::{BigEndian, ReadBytesExt};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::diffeo::{Diffeomorphism, ModeledDoubleGaussian};
use crate::error::{Error, Result};

pub const BIMODAL_LATENT_OFFSET: f64 = 2.0;
pub const BIMODAL_SIGMA_1: f64 = 0.6;
pub const BIMODAL_SIGMA_2: f64 = 0.1;

const MNIST_IMAGE_MAGIC: u32 = 2051;
const MNIST_LABEL_MAGIC: u32 = 2049;

/// Mixture of two equal-weight Gaussians living on the modeled
/// double-Gaussian manifold (the preimage of the second latent axis). The
/// arc-length-like coordinate along the manifold is the pre-`tanh` variable
/// `y2`; modes sit at `y2 = +-2` with along-manifold spread `sigma_1 = 0.6`
/// and transverse latent spread `sigma_2 = 0.1`. The second latent coordinate
/// `tanh(y2 / 2)` is always inside the image strip, so no rejection is
/// needed.
pub fn sample_bimodal_gaussian(n: usize, seed: u64) -> Vec<Vec<f64>> {
    assert!(n >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = ModeledDoubleGaussian;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let sign = if i % 2 == 0 { -1.0 } else { 1.0 };
        let y2 = sign * BIMODAL_LATENT_OFFSET
            + BIMODAL_SIGMA_1 * rng.sample::<f64, _>(StandardNormal);
        let z1 = BIMODAL_SIGMA_2 * rng.sample::<f64, _>(StandardNormal);
        let z2 = (y2 * 0.5).tanh();
        out.push(m.inverse_slice(&[z1, z2]).expect("latent is in image"));
    }
    out
}

/// Uniform samples on the upper unit hemisphere `{||x|| = 1, x_3 >= 0}`
/// (normalized Gaussian triples with the sign of `x_3` flipped up), plus
/// optional ambient Gaussian noise.
pub fn sample_hemisphere(n: usize, seed: u64, noise_sigma: f64) -> Vec<Vec<f64>> {
    assert!(n >= 1);
    assert!(noise_sigma >= 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let mut x: [f64; 3] = [
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        ];
        let norm = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
        // a Gaussian triple is zero with probability zero, but stay safe
        if norm == 0.0 {
            x = [0.0, 0.0, 1.0];
        } else {
            for v in x.iter_mut() {
                *v /= norm;
            }
        }
        x[2] = x[2].abs();
        if noise_sigma > 0.0 {
            for v in x.iter_mut() {
                *v += noise_sigma * rng.sample::<f64, _>(StandardNormal);
            }
        }
        out.push(x.to_vec());
    }
    out
}

fn read_idx_header(r: &mut impl Read, expect_magic: u32, path: &Path) -> Result<u32> {
    let magic = r.read_u32::<BigEndian>().map_err(|_| {
        Error::Format(format!("{}: truncated IDX header", path.display()))
    })?;
    if magic != expect_magic {
        return Err(Error::Format(format!(
            "{}: bad IDX magic {magic}, expected {expect_magic}",
            path.display()
        )));
    }
    r.read_u32::<BigEndian>()
        .map_err(|_| Error::Format(format!("{}: truncated IDX header", path.display())))
}

/// Load MNIST from a pair of IDX files: up to `limit` flattened 28x28 images
/// scaled to `[0, 1]`, with their labels.
pub fn load_mnist_idx(
    images_path: &Path,
    labels_path: &Path,
    limit: usize,
) -> Result<(Vec<Vec<f64>>, Vec<u8>)> {
    let mut img = BufReader::new(File::open(images_path)?);
    let n_images = read_idx_header(&mut img, MNIST_IMAGE_MAGIC, images_path)?;
    let rows = img.read_u32::<BigEndian>().map_err(|_| {
        Error::Format(format!("{}: truncated IDX header", images_path.display()))
    })?;
    let cols = img.read_u32::<BigEndian>().map_err(|_| {
        Error::Format(format!("{}: truncated IDX header", images_path.display()))
    })?;
    if rows != 28 || cols != 28 {
        return Err(Error::Format(format!(
            "{}: expected 28x28 images, got {rows}x{cols}",
            images_path.display()
        )));
    }

    let mut lbl = BufReader::new(File::open(labels_path)?);
    let n_labels = read_idx_header(&mut lbl, MNIST_LABEL_MAGIC, labels_path)?;
    if n_images != n_labels {
        return Err(Error::Format(format!(
            "image count {n_images} does not match label count {n_labels}"
        )));
    }

    let count = (n_images as usize).min(limit);
    let mut images = Vec::with_capacity(count);
    let mut buf = vec![0u8; 784];
    for _ in 0..count {
        img.read_exact(&mut buf).map_err(|_| {
            Error::Format(format!("{}: truncated image data", images_path.display()))
        })?;
        images.push(buf.iter().map(|&p| f64::from(p) / 255.0).collect());
    }
    let mut labels = vec![0u8; count];
    lbl.read_exact(&mut labels).map_err(|_| {
        Error::Format(format!("{}: truncated label data", labels_path.display()))
    })?;
    Ok((images, labels))
}

/// Seeded train/validation split: a shuffled permutation cut at
/// `floor(train_fraction * n)`.
pub fn train_validation_split(
    data: &[Vec<f64>],
    train_fraction: f64,
    seed: u64,
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    assert!((0.0..=1.0).contains(&train_fraction));
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let cut = (train_fraction * data.len() as f64).floor() as usize;
    let train = order[..cut].iter().map(|&i| data[i].clone()).collect();
    let valid = order[cut..].iter().map(|&i| data[i].clone()).collect();
    (train, valid)
}

/// Write a point matrix as CSV with header `dim_0..dim_{d-1}`.
pub fn write_points_csv(path: &Path, points: &[Vec<f64>]) -> Result<()> {
    assert!(!points.is_empty(), "refusing to write an empty point matrix");
    let dim = points[0].len();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record((0..dim).map(|j| format!("dim_{j}")))?;
    for p in points {
        w.write_record(p.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Read a point matrix written by [`write_points_csv`].
pub fn read_points_csv(path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut r = csv::Reader::from_path(path)?;
    let dim = r.headers()?.len();
    let mut out = Vec::new();
    for record in r.records() {
        let record = record?;
        if record.len() != dim {
            return Err(Error::Format(format!(
                "{}: row {} has {} fields, header has {dim}",
                path.display(),
                out.len() + 1,
                record.len()
            )));
        }
        let row: std::result::Result<Vec<f64>, _> =
            record.iter().map(|f| f.trim().parse::<f64>()).collect();
        out.push(row.map_err(|e| {
            Error::Format(format!("{}: non-numeric field: {e}", path.display()))
        })?);
    }
    Ok(out)
}

/// Write synthetic MNIST-format IDX files (used by tests and the smoke
/// pipeline when no real MNIST files are supplied).
pub fn write_mnist_idx(
    images_path: &Path,
    labels_path: &Path,
    images: &[Vec<u8>],
    labels: &[u8],
) -> Result<()> {
    assert_eq!(images.len(), labels.len());
    let mut img = File::create(images_path)?;
    img.write_all(&MNIST_IMAGE_MAGIC.to_be_bytes())?;
    img.write_all(&(images.len() as u32).to_be_bytes())?;
    img.write_all(&28u32.to_be_bytes())?;
    img.write_all(&28u32.to_be_bytes())?;
    for im in images {
        assert_eq!(im.len(), 784);
        img.write_all(im)?;
    }
    let mut lbl = File::create(labels_path)?;
    lbl.write_all(&MNIST_LABEL_MAGIC.to_be_bytes())?;
    lbl.write_all(&(labels.len() as u32).to_be_bytes())?;
    lbl.write_all(labels)?;
    Ok(())
}

/// Deterministic synthetic digit-like images: blurred strokes per "class",
/// enough structure for smoke-testing the image pipeline end to end.
pub fn synthetic_digits(n: usize, seed: u64) -> (Vec<Vec<u8>>, Vec<u8>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut images = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = (i % 10) as u8;
        let cx = 14.0 + 3.0 * rng.sample::<f64, _>(StandardNormal);
        let cy = 14.0 + 3.0 * rng.sample::<f64, _>(StandardNormal);
        let angle = class as f64 * std::f64::consts::PI / 10.0
            + 0.2 * rng.sample::<f64, _>(StandardNormal);
        let (s, c) = angle.sin_cos();
        let mut px = vec![0u8; 784];
        for r in 0..28 {
            for q in 0..28 {
                // intensity of an oriented Gaussian ridge through (cx, cy)
                let dx = q as f64 - cx;
                let dy = r as f64 - cy;
                let along = dx * c + dy * s;
                let across = -dx * s + dy * c;
                let v = (-across * across / 3.0 - along * along / 80.0).exp();
                px[r * 28 + q] = (255.0 * v).round().clamp(0.0, 255.0) as u8;
            }
        }
        images.push(px);
        labels.push(class);
    }
    (images, labels)
}
