//! Classification, domain-adversarial and pseudo-label losses, plus the
//! overall objective.
//!
//! All reductions are batch means. Logarithms of probabilities are taken
//! after clamping into `[LOG_FLOOR, 1]`.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Lower clamp applied to probabilities before taking their log.
pub const LOG_FLOOR: f64 = 1e-12;

/// Trade-offs of the adversarial term (`lambda`) and the student term (`beta`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub lambda: f64,
    pub beta: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            beta: 0.3,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::config("loss.lambda", "a finite number >= 0"));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::config("loss.beta", "a finite number >= 0"));
        }
        Ok(())
    }
}

/// Mean cross-entropy `-log softmax(logits)[label]`.
pub fn cross_entropy<T: Scalar>(g: &mut Graph<T>, logits: Var, labels: &[usize]) -> Result<Var> {
    let log_probs = g.log_softmax(logits)?;
    let picked = g.pick(log_probs, labels)?;
    let mean = g.mean(picked);
    Ok(g.scale(mean, -T::one()))
}

/// Source classification loss on labeled source logits.
pub fn source_cls_loss<T: Scalar>(g: &mut Graph<T>, logits: Var, labels: &[usize]) -> Result<Var> {
    cross_entropy(g, logits, labels)
}

/// Pseudo-label loss of the student against the competition winners.
pub fn student_loss<T: Scalar>(
    g: &mut Graph<T>,
    logits: Var,
    pseudo_labels: &[usize],
) -> Result<Var> {
    cross_entropy(g, logits, pseudo_labels)
}

fn clamped_log<T: Scalar>(g: &mut Graph<T>, p: Var) -> Result<Var> {
    let c = g.clamp(p, T::lit(LOG_FLOOR), T::one());
    g.log(c)
}

/// `-mean(log d_s) - mean(log(1 - d_t))` over discriminator outputs.
pub fn dann_domain_loss<T: Scalar>(
    g: &mut Graph<T>,
    source_scores: Var,
    target_scores: Var,
) -> Result<Var> {
    let log_s = clamped_log(g, source_scores)?;
    let neg_t = g.scale(target_scores, -T::one());
    let comp_t = g.add_scalar(neg_t, T::one());
    let log_t = clamped_log(g, comp_t)?;
    let ms = g.mean(log_s);
    let mt = g.mean(log_t);
    let both = g.add(ms, mt)?;
    Ok(g.scale(both, -T::one()))
}

/// Same form as [`dann_domain_loss`], applied to scores of the multilinear map.
pub fn cdan_domain_loss<T: Scalar>(
    g: &mut Graph<T>,
    source_scores: Var,
    target_scores: Var,
) -> Result<Var> {
    dann_domain_loss(g, source_scores, target_scores)
}

/// Differentiated objective `lg1 + λ·ld1 + β·lg2`.
///
/// The gradient reversal layer in front of the discriminator flips the sign
/// of `λ·ld1` for the feature extractor, so the discriminator descends on
/// `ld1` while the extractor ascends on it.
pub fn total_loss<T: Scalar>(
    g: &mut Graph<T>,
    lg1: Var,
    ld1: Var,
    lg2: Option<Var>,
    w: &LossWeights,
) -> Result<Var> {
    let adv = g.scale(ld1, T::lit(w.lambda));
    let teacher = g.add(lg1, adv)?;
    match lg2 {
        Some(lg2) => {
            let student = g.scale(lg2, T::lit(w.beta));
            g.add(teacher, student)
        }
        None => Ok(teacher),
    }
}

/// Logged value of the overall objective, `lg1 - λ·ld1 + β·lg2`.
pub fn reported_total(lg1: f64, ld1: f64, lg2: f64, w: &LossWeights) -> f64 {
    lg1 - w.lambda * ld1 + w.beta * lg2
}
