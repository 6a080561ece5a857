//! Declarative description of one experiment run.

use serde::{Deserialize, Serialize};

use crate::data::DatasetSpec;
use crate::error::{Error, Result};
use crate::losses::LossWeights;
use crate::networks::{Architecture, Variant};

/// Whether the student and the competition take part in training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Teacher, student and competition.
    Tsc,
    /// Teacher alone; with `lambda = 0` this is the source-only baseline.
    TeacherOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    /// Rate of the feature extractors.
    pub learning_rate: f64,
    /// Classifier and discriminator layers train at
    /// `learning_rate * head_lr_multiplier`.
    pub head_lr_multiplier: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            head_lr_multiplier: 1.0,
            momentum: 0.95,
            weight_decay: 0.0005,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config(
                "optimizer.learning_rate",
                "a finite number > 0",
            ));
        }
        if !(self.head_lr_multiplier > 0.0 && self.head_lr_multiplier.is_finite()) {
            return Err(Error::config(
                "optimizer.head_lr_multiplier",
                "a finite number > 0",
            ));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config("optimizer.momentum", "a number in [0, 1)"));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::config(
                "optimizer.weight_decay",
                "a finite number >= 0",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleConfig {
    pub delta: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self { delta: 10.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BatchConfig {
    pub source: usize,
    pub target: usize,
}

impl Default for BatchConfig {
    fn default() -> Self {
        Self {
            source: 36,
            target: 36,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub total_steps: usize,
    pub eval_interval: usize,
    pub mode: Mode,
    pub variant: Variant,
    pub output_dir: String,
    pub dataset: DatasetSpec,
    pub architecture: Architecture,
    pub loss: LossWeights,
    pub optimizer: OptimizerConfig,
    pub schedule: ScheduleConfig,
    pub batch: BatchConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            total_steps: 3000,
            eval_interval: 100,
            mode: Mode::Tsc,
            variant: Variant::Dann,
            output_dir: "runs".into(),
            dataset: DatasetSpec::default(),
            architecture: Architecture::default(),
            loss: LossWeights::default(),
            optimizer: OptimizerConfig::default(),
            schedule: ScheduleConfig::default(),
            batch: BatchConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.dataset.validate()?;
        self.architecture.validate()?;
        self.loss.validate()?;
        self.optimizer.validate()?;
        if !(self.schedule.delta > 0.0 && self.schedule.delta.is_finite()) {
            return Err(Error::config("schedule.delta", "a finite number > 0"));
        }
        if self.eval_interval == 0 {
            return Err(Error::config("eval_interval", "an integer >= 1"));
        }
        if self.batch.source == 0 || self.batch.source > self.dataset.n_source {
            return Err(Error::config(
                "batch.source",
                "an integer in [1, dataset.n_source]",
            ));
        }
        if self.batch.target == 0 || self.batch.target > self.dataset.n_target {
            return Err(Error::config(
                "batch.target",
                "an integer in [1, dataset.n_target]",
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = ExperimentConfig::default();
        c.validate().unwrap();
        assert_eq!(c.loss.lambda, 1.0);
        assert_eq!(c.loss.beta, 0.3);
        assert_eq!(c.optimizer.momentum, 0.95);
        assert_eq!(c.optimizer.weight_decay, 0.0005);
        assert_eq!(c.schedule.delta, 10.0);
    }

    #[test]
    fn invalid_fields_are_named() {
        let field = |c: ExperimentConfig| match c.validate() {
            Err(Error::Config { field, .. }) => field,
            other => panic!("expected config error, got {other:?}"),
        };
        let mut c = ExperimentConfig::default();
        c.loss.beta = -1.0;
        assert_eq!(field(c), "loss.beta");
        let mut c = ExperimentConfig::default();
        c.optimizer.momentum = 1.0;
        assert_eq!(field(c), "optimizer.momentum");
        let mut c = ExperimentConfig::default();
        c.batch.target = 501;
        assert_eq!(field(c), "batch.target");
        let c = ExperimentConfig {
            eval_interval: 0,
            ..Default::default()
        };
        assert_eq!(field(c), "eval_interval");
    }
}
