use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// Labeled images `[N, 3, S, S]` with values in `[0, 1]`.
#[derive(Debug, Clone)]
pub struct ToyDataset {
    pub images: Tensor,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    pub class_names: Vec<String>,
    pub split: Split,
}

impl ToyDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn side(&self) -> usize {
        self.images.shape()[2]
    }

    /// Filled circles (label 0) and filled squares (label 1) of random size,
    /// position, and colour over a dark background, plus Gaussian noise.
    /// Classes alternate so every prefix is balanced.
    pub fn shapes(samples: usize, side: usize, noise: f64, seed: u64, split: Split) -> Result<Self> {
        if samples == 0 || side < 8 {
            return Err(Error::Dataset(format!("need at least one sample and side >= 8, got {samples} and {side}")));
        }
        let stream = match split {
            Split::Train => 0,
            Split::Test => 1,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let gauss = Normal::new(0.0, noise.max(0.0)).map_err(|e| Error::Dataset(e.to_string()))?;
        let plane = side * side;
        let mut data = Vec::with_capacity(samples * 3 * plane);
        let mut labels = Vec::with_capacity(samples);
        let s = side as f64;
        for i in 0..samples {
            let label = i % 2;
            let size = rng.random_range(0.18 * s..0.32 * s);
            let cy = rng.random_range(size..s - size);
            let cx = rng.random_range(size..s - size);
            let fg: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.55..1.0));
            let bg: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.0..0.3));
            for c in 0..3 {
                for p in 0..plane {
                    let (y, x) = ((p / side) as f64 + 0.5, (p % side) as f64 + 0.5);
                    let (dy, dx) = (y - cy, x - cx);
                    let inside = match label {
                        0 => dy * dy + dx * dx <= size * size,
                        _ => dy.abs() <= size && dx.abs() <= size,
                    };
                    let base = if inside { fg[c] } else { bg[c] };
                    let v = if noise > 0.0 { base + gauss.sample(&mut rng) } else { base };
                    data.push(v.clamp(0.0, 1.0));
                }
            }
            labels.push(label);
        }
        Ok(Self {
            images: Tensor::new(vec![samples, 3, side, side], data)?,
            labels,
            num_classes: 2,
            class_names: vec!["circle".into(), "square".into()],
            split,
        })
    }

    /// Reads `root/<class>/*.{pgm,ppm}`; classes are the sorted sub-directory
    /// names. Every image must be `side×side`.
    pub fn from_directory(root: &Path, side: usize, split: Split) -> Result<Self> {
        let mut classes: Vec<_> = fs::read_dir(root)?
            .filter_map(|e| e.ok())
            .filter(|e| e.path().is_dir())
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .collect();
        classes.sort();
        if classes.is_empty() {
            return Err(Error::Dataset(format!("{}: no class sub-directories", root.display())));
        }
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for (label, class) in classes.iter().enumerate() {
            let mut files: Vec<_> = fs::read_dir(root.join(class))?
                .filter_map(|e| e.ok())
                .map(|e| e.path())
                .filter(|p| matches!(p.extension().and_then(|x| x.to_str()), Some("pgm" | "ppm")))
                .collect();
            files.sort();
            for f in files {
                let img = Image::read(&f)?;
                if img.width != side || img.height != side {
                    return Err(Error::Dataset(format!("{}: {}x{} image, expected {side}x{side}", f.display(), img.width, img.height)));
                }
                data.extend_from_slice(img.to_tensor().data());
                labels.push(label);
            }
        }
        if labels.is_empty() {
            return Err(Error::Dataset(format!("{}: no PGM/PPM images found", root.display())));
        }
        Ok(Self {
            images: Tensor::new(vec![labels.len(), 3, side, side], data)?,
            labels,
            num_classes: classes.len(),
            class_names: classes,
            split,
        })
    }

    /// Images and labels at `indices`, stacked in order.
    pub fn batch(&self, indices: &[usize]) -> Result<(Tensor, Vec<usize>)> {
        let shape = self.images.shape();
        let per = shape[1] * shape[2] * shape[3];
        let src = self.images.data();
        let mut data = Vec::with_capacity(indices.len() * per);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::Index(format!("sample {i} out of range for {} samples", self.len())));
            }
            data.extend_from_slice(&src[i * per..(i + 1) * per]);
            labels.push(self.labels[i]);
        }
        Ok((Tensor::new(vec![indices.len(), shape[1], shape[2], shape[3]], data)?, labels))
    }
}
