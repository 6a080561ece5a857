//! Feature extractor, classifier and discriminator networks, wired into the
//! adversarial teacher and the target-only student.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{softmax_rows, Graph, Tensor, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Relu,
    Tanh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FinalActivation {
    None,
    Sigmoid,
}

/// Adversarial wiring of the teacher's discriminator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Discriminator sees features `f`.
    Dann,
    /// Discriminator sees the multilinear map `f ⊗ softmax(logits)`.
    Cdan,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub output_dim: usize,
    pub activation: Activation,
    pub final_activation: FinalActivation,
}

impl MlpSpec {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden_dims.contains(&0) {
            return Err(Error::config(
                "mlp",
                format!("positive layer widths, got {self:?}"),
            ));
        }
        Ok(())
    }

    fn widths(&self) -> Vec<usize> {
        let mut w = Vec::with_capacity(self.hidden_dims.len() + 2);
        w.push(self.input_dim);
        w.extend_from_slice(&self.hidden_dims);
        w.push(self.output_dim);
        w
    }
}

/// Widths and activation shared by teacher and student.
///
/// The feature extractor maps `input → feature_hidden… → feature_dim`, the
/// classifier `feature_dim → classifier_hidden… → K`, and the discriminator
/// `(feature_dim | feature_dim·K) → discriminator_hidden… → 1` with a sigmoid.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Architecture {
    pub feature_hidden: Vec<usize>,
    pub feature_dim: usize,
    pub classifier_hidden: Vec<usize>,
    pub discriminator_hidden: Vec<usize>,
    pub activation: Activation,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            feature_hidden: vec![64],
            feature_dim: 32,
            classifier_hidden: vec![],
            discriminator_hidden: vec![32],
            activation: Activation::Relu,
        }
    }
}

impl Architecture {
    pub fn feature_spec(&self, input_dim: usize) -> MlpSpec {
        MlpSpec {
            input_dim,
            hidden_dims: self.feature_hidden.clone(),
            output_dim: self.feature_dim,
            activation: self.activation,
            final_activation: FinalActivation::None,
        }
    }

    pub fn classifier_spec(&self, classes: usize) -> MlpSpec {
        MlpSpec {
            input_dim: self.feature_dim,
            hidden_dims: self.classifier_hidden.clone(),
            output_dim: classes,
            activation: self.activation,
            final_activation: FinalActivation::None,
        }
    }

    pub fn discriminator_spec(&self, variant: Variant, classes: usize) -> MlpSpec {
        let input_dim = match variant {
            Variant::Dann => self.feature_dim,
            Variant::Cdan => self.feature_dim * classes,
        };
        MlpSpec {
            input_dim,
            hidden_dims: self.discriminator_hidden.clone(),
            output_dim: 1,
            activation: self.activation,
            final_activation: FinalActivation::Sigmoid,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.feature_dim == 0 {
            return Err(Error::config(
                "architecture.feature_dim",
                "a positive integer",
            ));
        }
        for (field, dims) in [
            ("architecture.feature_hidden", &self.feature_hidden),
            ("architecture.classifier_hidden", &self.classifier_hidden),
            (
                "architecture.discriminator_hidden",
                &self.discriminator_hidden,
            ),
        ] {
            if dims.contains(&0) {
                return Err(Error::config(field, "a list of positive integers"));
            }
        }
        Ok(())
    }
}

/// Fully connected layer computing `x · W + b` with `W: in × out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T> {
    spec: MlpSpec,
    layers: Vec<Linear<T>>,
}

impl<T: Scalar> Mlp<T> {
    /// Glorot-uniform weights, zero biases.
    pub fn new<R: Rng + ?Sized>(spec: MlpSpec, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let layers = spec
            .widths()
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let data = (0..fan_in * fan_out)
                    .map(|_| T::lit(rng.random_range(-limit..=limit)))
                    .collect();
                Linear {
                    weight: Tensor::new(vec![fan_in, fan_out], data).expect("weight shape"),
                    bias: Tensor::zeros(&[fan_out]),
                }
            })
            .collect();
        Ok(Self { spec, layers })
    }

    pub fn zeros(spec: MlpSpec) -> Result<Self> {
        spec.validate()?;
        let layers = spec
            .widths()
            .windows(2)
            .map(|w| Linear {
                weight: Tensor::zeros(&[w[0], w[1]]),
                bias: Tensor::zeros(&[w[1]]),
            })
            .collect();
        Ok(Self { spec, layers })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Linear<T>] {
        &self.layers
    }

    /// Parameters in `[w0, b0, w1, b1, …]` order.
    pub fn params(&self) -> Vec<&Tensor<T>> {
        self.layers
            .iter()
            .flat_map(|l| [&l.weight, &l.bias])
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }

    /// Records the forward pass; parameter leaves are appended to `bound`
    /// in [`Mlp::params`] order.
    pub fn forward(&self, g: &mut Graph<T>, x: Var, bound: &mut Vec<Var>) -> Result<Var> {
        let width = g.value(x).dims2("mlp")?.1;
        if width != self.spec.input_dim {
            return Err(Error::Dimension {
                op: "mlp",
                lhs: g.value(x).shape().to_vec(),
                rhs: vec![self.spec.input_dim],
            });
        }
        let last = self.layers.len() - 1;
        let mut h = x;
        for (i, layer) in self.layers.iter().enumerate() {
            let w = g.param(layer.weight.clone());
            let b = g.param(layer.bias.clone());
            bound.extend([w, b]);
            let z = g.matmul(h, w)?;
            h = g.add_row(z, b)?;
            h = if i < last {
                match self.spec.activation {
                    Activation::Relu => g.relu(h),
                    Activation::Tanh => g.tanh(h),
                }
            } else {
                match self.spec.final_activation {
                    FinalActivation::None => h,
                    FinalActivation::Sigmoid => g.sigmoid(h),
                }
            };
        }
        Ok(h)
    }

    /// Forward pass without gradient bookkeeping.
    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let xv = g.input(x.clone());
        let mut bound = Vec::new();
        let out = self.forward(&mut g, xv, &mut bound)?;
        Ok(g.value(out).clone())
    }
}

/// Row-wise multilinear conditioning `f ⊗ g`, flattened to `d_f · K` columns.
pub fn multilinear<T: Scalar>(g: &mut Graph<T>, features: Var, probs: Var) -> Result<Var> {
    g.outer_rows(features, probs)
}

/// Graph handles produced by [`TeacherNet::forward`].
#[derive(Debug, Clone)]
pub struct TeacherForward {
    pub source_logits: Var,
    pub target_logits: Var,
    /// `b_s × 1` discriminator outputs in (0, 1).
    pub source_domain: Var,
    pub target_domain: Var,
    /// Parameter leaves in [`TeacherNet::params`] order.
    pub params: Vec<Var>,
}

/// Teacher: feature extractor, classifier and domain discriminator.
#[derive(Debug, Clone, PartialEq)]
pub struct TeacherNet<T> {
    pub feature: Mlp<T>,
    pub classifier: Mlp<T>,
    pub discriminator: Mlp<T>,
    pub variant: Variant,
}

impl<T: Scalar> TeacherNet<T> {
    pub fn new<R: Rng + ?Sized>(
        arch: &Architecture,
        input_dim: usize,
        classes: usize,
        variant: Variant,
        rng: &mut R,
    ) -> Result<Self> {
        Self::from_parts(
            Mlp::new(arch.feature_spec(input_dim), rng)?,
            Mlp::new(arch.classifier_spec(classes), rng)?,
            Mlp::new(arch.discriminator_spec(variant, classes), rng)?,
            variant,
        )
    }

    pub fn zeros(
        arch: &Architecture,
        input_dim: usize,
        classes: usize,
        variant: Variant,
    ) -> Result<Self> {
        Self::from_parts(
            Mlp::zeros(arch.feature_spec(input_dim))?,
            Mlp::zeros(arch.classifier_spec(classes))?,
            Mlp::zeros(arch.discriminator_spec(variant, classes))?,
            variant,
        )
    }

    /// Checks the discriminator input width against the wiring.
    pub fn from_parts(
        feature: Mlp<T>,
        classifier: Mlp<T>,
        discriminator: Mlp<T>,
        variant: Variant,
    ) -> Result<Self> {
        let feature_dim = feature.spec().output_dim;
        let classes = classifier.spec().output_dim;
        let expected = match variant {
            Variant::Dann => feature_dim,
            Variant::Cdan => feature_dim * classes,
        };
        let d = discriminator.spec();
        if classifier.spec().input_dim != feature_dim
            || d.input_dim != expected
            || d.output_dim != 1
        {
            return Err(Error::Dimension {
                op: "teacher",
                lhs: vec![feature_dim, classifier.spec().input_dim, classes],
                rhs: vec![d.input_dim, d.output_dim],
            });
        }
        Ok(Self {
            feature,
            classifier,
            discriminator,
            variant,
        })
    }

    pub fn classes(&self) -> usize {
        self.classifier.spec().output_dim
    }

    pub fn params(&self) -> Vec<&Tensor<T>> {
        let mut p = self.feature.params();
        p.extend(self.classifier.params());
        p.extend(self.discriminator.params());
        p
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut p = self.feature.params_mut();
        p.extend(self.classifier.params_mut());
        p.extend(self.discriminator.params_mut());
        p
    }

    /// Records the teacher on a source and a target batch.
    ///
    /// Both batches go through the feature extractor as one stacked matrix.
    /// The discriminator sees the features (or their multilinear map with the
    /// class probabilities) through a gradient reversal layer.
    pub fn forward(
        &self,
        g: &mut Graph<T>,
        xs: &Tensor<T>,
        xt: &Tensor<T>,
        grl_coeff: T,
    ) -> Result<TeacherForward> {
        let bs = xs.dims2("teacher_forward")?.0;
        let bt = xt.dims2("teacher_forward")?.0;
        let x = g.input(xs.concat_rows(xt)?);
        let mut params = Vec::new();
        let f = self.feature.forward(g, x, &mut params)?;
        let logits = self.classifier.forward(g, f, &mut params)?;
        let h = match self.variant {
            Variant::Dann => f,
            Variant::Cdan => {
                let probs = g.softmax(logits)?;
                multilinear(g, f, probs)?
            }
        };
        let reversed = g.grl(h, grl_coeff)?;
        let domain = self.discriminator.forward(g, reversed, &mut params)?;
        Ok(TeacherForward {
            source_logits: g.slice_rows(logits, 0, bs)?,
            target_logits: g.slice_rows(logits, bs, bs + bt)?,
            source_domain: g.slice_rows(domain, 0, bs)?,
            target_domain: g.slice_rows(domain, bs, bs + bt)?,
            params,
        })
    }

    pub fn logits(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.classifier.infer(&self.feature.infer(x)?)
    }
}

#[derive(Debug, Clone)]
pub struct StudentForward {
    pub logits: Var,
    pub params: Vec<Var>,
}

/// Student: feature extractor and classifier trained on target data only.
#[derive(Debug, Clone, PartialEq)]
pub struct StudentNet<T> {
    pub feature: Mlp<T>,
    pub classifier: Mlp<T>,
}

impl<T: Scalar> StudentNet<T> {
    pub fn new<R: Rng + ?Sized>(
        arch: &Architecture,
        input_dim: usize,
        classes: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(Self {
            feature: Mlp::new(arch.feature_spec(input_dim), rng)?,
            classifier: Mlp::new(arch.classifier_spec(classes), rng)?,
        })
    }

    pub fn zeros(arch: &Architecture, input_dim: usize, classes: usize) -> Result<Self> {
        Ok(Self {
            feature: Mlp::zeros(arch.feature_spec(input_dim))?,
            classifier: Mlp::zeros(arch.classifier_spec(classes))?,
        })
    }

    /// Whether this student mirrors the teacher's extractor and classifier.
    pub fn matches(&self, teacher: &TeacherNet<T>) -> bool {
        self.feature.spec() == teacher.feature.spec()
            && self.classifier.spec() == teacher.classifier.spec()
    }

    pub fn params(&self) -> Vec<&Tensor<T>> {
        let mut p = self.feature.params();
        p.extend(self.classifier.params());
        p
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut p = self.feature.params_mut();
        p.extend(self.classifier.params_mut());
        p
    }

    pub fn forward(&self, g: &mut Graph<T>, xt: &Tensor<T>) -> Result<StudentForward> {
        let x = g.input(xt.clone());
        let mut params = Vec::new();
        let f = self.feature.forward(g, x, &mut params)?;
        let logits = self.classifier.forward(g, f, &mut params)?;
        Ok(StudentForward { logits, params })
    }

    pub fn logits(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.classifier.infer(&self.feature.infer(x)?)
    }
}

/// Predicted class and its softmax probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PseudoLabel<T> {
    pub class: usize,
    pub confidence: T,
}

/// Arg-max class and max softmax probability per row; ties go to the lowest index.
pub fn predict<T: Scalar>(logits: &Tensor<T>) -> Result<Vec<PseudoLabel<T>>> {
    let probs = softmax_rows(logits)?;
    let rows = probs.dims2("predict")?.0;
    Ok((0..rows)
        .map(|i| {
            let mut best = PseudoLabel {
                class: 0,
                confidence: probs.row(i)[0],
            };
            for (c, &p) in probs.row(i).iter().enumerate().skip(1) {
                if p > best.confidence {
                    best = PseudoLabel {
                        class: c,
                        confidence: p,
                    };
                }
            }
            best
        })
        .collect())
}
