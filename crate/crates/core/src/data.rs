//! Seeded synthetic domain-shift datasets and minibatch sampling.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Independent random streams derived from one master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Generation = 1,
    SourceSampling = 2,
    TargetSampling = 3,
    TeacherInit = 4,
    StudentInit = 5,
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetKind {
    /// Two interleaved half circles; the target is rotated by `shift` degrees
    /// about the centre of the moons.
    TwoMoonsRotation,
    /// `K` isotropic Gaussian blobs on a circle; the target is translated by
    /// `shift` along the diagonal.
    GaussianBlobsShift,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSpec {
    pub kind: DatasetKind,
    pub n_source: usize,
    pub n_target: usize,
    pub shift: f64,
    pub noise: f64,
    pub classes: usize,
    pub seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            kind: DatasetKind::TwoMoonsRotation,
            n_source: 500,
            n_target: 500,
            shift: 35.0,
            noise: 0.1,
            classes: 2,
            seed: 0,
        }
    }
}

const MOONS_CENTER: (f64, f64) = (0.5, 0.25);
const BLOB_RADIUS: f64 = 2.0;

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::config("dataset.classes", "an integer >= 2"));
        }
        if self.kind == DatasetKind::TwoMoonsRotation && self.classes != 2 {
            return Err(Error::config("dataset.classes", "2 for two-moons-rotation"));
        }
        if self.n_source < self.classes {
            return Err(Error::config(
                "dataset.n_source",
                "at least one sample per class",
            ));
        }
        if self.n_target < self.classes {
            return Err(Error::config(
                "dataset.n_target",
                "at least one sample per class",
            ));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::config("dataset.noise", "a finite number >= 0"));
        }
        if !self.shift.is_finite() {
            return Err(Error::config("dataset.shift", "a finite number"));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        2
    }
}

/// Labeled samples of one domain.
#[derive(Debug, Clone, PartialEq)]
pub struct Domain<T> {
    pub name: String,
    xs: Tensor<T>,
    ys: Vec<usize>,
    classes: usize,
}

impl<T: Scalar> Domain<T> {
    pub fn new(
        name: impl Into<String>,
        xs: Tensor<T>,
        ys: Vec<usize>,
        classes: usize,
    ) -> Result<Self> {
        let (n, _) = xs.dims2("domain")?;
        if ys.len() != n {
            return Err(Error::Dimension {
                op: "domain",
                lhs: xs.shape().to_vec(),
                rhs: vec![ys.len()],
            });
        }
        if let Some(&bad) = ys.iter().find(|&&y| y >= classes) {
            return Err(Error::contract(format!(
                "label {bad} outside [0, {classes})"
            )));
        }
        if (0..classes).any(|c| !ys.contains(&c)) {
            return Err(Error::contract("every class must appear at least once"));
        }
        Ok(Self {
            name: name.into(),
            xs,
            ys,
            classes,
        })
    }

    pub fn len(&self) -> usize {
        self.ys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ys.is_empty()
    }

    pub fn features(&self) -> &Tensor<T> {
        &self.xs
    }

    pub fn labels(&self) -> &[usize] {
        &self.ys
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn input_dim(&self) -> usize {
        self.xs.shape()[1]
    }

    /// Feature-only view handed to training code.
    pub fn unlabeled(&self) -> UnlabeledDomain<T> {
        UnlabeledDomain {
            name: self.name.clone(),
            xs: self.xs.clone(),
        }
    }

    pub fn batch(&self, indices: &[usize]) -> Result<Batch<T>> {
        Ok(Batch {
            xs: self.xs.gather_rows(indices)?,
            ys: Some(indices.iter().map(|&i| self.ys[i]).collect()),
            indices: indices.to_vec(),
        })
    }
}

/// Target features without labels.
#[derive(Debug, Clone, PartialEq)]
pub struct UnlabeledDomain<T> {
    pub name: String,
    xs: Tensor<T>,
}

impl<T: Scalar> UnlabeledDomain<T> {
    pub fn features(&self) -> &Tensor<T> {
        &self.xs
    }

    pub fn len(&self) -> usize {
        self.xs.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn batch(&self, indices: &[usize]) -> Result<Batch<T>> {
        Ok(Batch {
            xs: self.xs.gather_rows(indices)?,
            ys: None,
            indices: indices.to_vec(),
        })
    }
}

/// Minibatch with the original sample indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch<T> {
    pub indices: Vec<usize>,
    pub xs: Tensor<T>,
    pub ys: Option<Vec<usize>>,
}

/// Draws `(source, target)` domains; a pure function of the spec.
pub fn generate<T: Scalar>(spec: &DatasetSpec) -> Result<(Domain<T>, Domain<T>)> {
    spec.validate()?;
    let mut rng = stream_rng(spec.seed, Stream::Generation);
    let source = draw(spec, spec.n_source, false, &mut rng);
    let target = draw(spec, spec.n_target, true, &mut rng);
    let build = |name: &str, (rows, ys): (Vec<f64>, Vec<usize>)| {
        let xs = Tensor::from_f64(vec![ys.len(), 2], &rows)?;
        Domain::new(name, xs, ys, spec.classes)
    };
    Ok((build("source", source)?, build("target", target)?))
}

fn draw(
    spec: &DatasetSpec,
    n: usize,
    shifted: bool,
    rng: &mut ChaCha8Rng,
) -> (Vec<f64>, Vec<usize>) {
    let noise = Normal::new(0.0, spec.noise).expect("validated noise");
    let mut xs = Vec::with_capacity(2 * n);
    let mut ys = Vec::with_capacity(n);
    let angle = spec.shift.to_radians();
    // libm keeps the draw bit-identical across optimisation levels, which
    // may otherwise fuse sin/cos pairs into a differently rounded sincos
    let (sin, cos) = (libm::sin(angle), libm::cos(angle));
    let offset = spec.shift / 2f64.sqrt();
    for i in 0..n {
        let class = i % spec.classes;
        let (mut x, mut y) = match spec.kind {
            DatasetKind::TwoMoonsRotation => {
                let t = rng.random_range(0.0..=PI);
                let (ct, st) = (libm::cos(t), libm::sin(t));
                if class == 0 {
                    (ct, st)
                } else {
                    (1.0 - ct, 0.5 - st)
                }
            }
            DatasetKind::GaussianBlobsShift => {
                let a = 2.0 * PI * class as f64 / spec.classes as f64;
                (BLOB_RADIUS * libm::cos(a), BLOB_RADIUS * libm::sin(a))
            }
        };
        x += noise.sample(rng);
        y += noise.sample(rng);
        if shifted {
            match spec.kind {
                DatasetKind::TwoMoonsRotation => {
                    let (dx, dy) = (x - MOONS_CENTER.0, y - MOONS_CENTER.1);
                    x = MOONS_CENTER.0 + cos * dx - sin * dy;
                    y = MOONS_CENTER.1 + sin * dx + cos * dy;
                }
                DatasetKind::GaussianBlobsShift => {
                    x += offset;
                    y += offset;
                }
            }
        }
        xs.extend([x, y]);
        ys.push(class);
    }
    (xs, ys)
}

/// Epoch-based sampling without replacement.
///
/// Each epoch visits a fresh permutation of `0..n` in consecutive chunks of
/// `batch_size`; the last chunk of an epoch may be shorter.
#[derive(Debug, Clone)]
pub struct BatchSampler {
    order: Vec<usize>,
    cursor: usize,
    batch_size: usize,
    rng: ChaCha8Rng,
}

impl BatchSampler {
    pub fn new(n: usize, batch_size: usize, mut rng: ChaCha8Rng) -> Result<Self> {
        if batch_size == 0 || batch_size > n {
            return Err(Error::config(
                "batch_size",
                format!("an integer in [1, {n}]"),
            ));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        Ok(Self {
            order,
            cursor: 0,
            batch_size,
            rng,
        })
    }

    pub fn next_indices(&mut self) -> Vec<usize> {
        if self.cursor == self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.cursor = 0;
        }
        let end = (self.cursor + self.batch_size).min(self.order.len());
        let out = self.order[self.cursor..end].to_vec();
        self.cursor = end;
        out
    }

    pub fn batches_per_epoch(&self) -> usize {
        self.order.len().div_ceil(self.batch_size)
    }
}
