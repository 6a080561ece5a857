//! Joint per-batch optimisation of teacher and student.
//!
//! One [`Trainer::train_step`] records the teacher on a source and a target
//! batch, reads teacher and student pseudo-labels off the target logits,
//! runs the competition at the current threshold, adds the student's
//! pseudo-label loss and performs a single backward pass over the combined
//! objective. The teacher and student parameter sets are disjoint, so that
//! one backward pass yields exactly the per-network gradients.

use std::time::Instant;

use crate::autodiff::{Graph, Tensor, Var};
use crate::competition::{compete, CompetitionDecision, DecisionCounts, Schedule};
use crate::config::{ExperimentConfig, Mode, OptimizerConfig};
use crate::data::{generate, stream_rng, Batch, BatchSampler, Domain, Stream, UnlabeledDomain};
use crate::error::{Error, Result};
use crate::losses::{self, LossWeights};
use crate::networks::{predict, PseudoLabel, StudentNet, TeacherNet, Variant};
use crate::scalar::Scalar;

/// Coefficient of the gradient reversal layer in front of the discriminator.
///
/// The objective already weights the domain loss by `lambda`, so the reversal
/// itself only flips the sign.
pub const GRL_COEFF: f64 = 1.0;

/// SGD with momentum and L2 weight decay:
/// `v ← μ·v + g + wd·θ`, `θ ← θ − lr·v`.
#[derive(Debug, Clone)]
pub struct Sgd<T> {
    config: OptimizerConfig,
    velocity: Vec<Tensor<T>>,
}

impl<T: Scalar> Sgd<T> {
    pub fn new(config: OptimizerConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            velocity: Vec::new(),
        })
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    pub fn velocity(&self) -> &[Tensor<T>] {
        &self.velocity
    }

    /// Updates every parameter once from its gradient.
    pub fn step(&mut self, params: Vec<&mut Tensor<T>>, grads: &[Tensor<T>]) -> Result<()> {
        let ones = vec![1.0; params.len()];
        self.step_scaled(params, grads, &ones)
    }

    /// [`Sgd::step`] with the learning rate multiplied per parameter.
    pub fn step_scaled(
        &mut self,
        params: Vec<&mut Tensor<T>>,
        grads: &[Tensor<T>],
        lr_scales: &[f64],
    ) -> Result<()> {
        if params.len() != grads.len() || params.len() != lr_scales.len() {
            return Err(Error::contract(format!(
                "sgd: {} parameters vs {} gradients and {} rate scales",
                params.len(),
                grads.len(),
                lr_scales.len()
            )));
        }
        if self.velocity.is_empty() {
            self.velocity = params.iter().map(|p| Tensor::zeros(p.shape())).collect();
        }
        if self.velocity.len() != params.len() {
            return Err(Error::contract("sgd: parameter list changed between steps"));
        }
        let mu = T::lit(self.config.momentum);
        let wd = T::lit(self.config.weight_decay);
        for (((param, grad), vel), &scale) in params
            .into_iter()
            .zip(grads)
            .zip(&mut self.velocity)
            .zip(lr_scales)
        {
            let lr = T::lit(self.config.learning_rate * scale);
            if param.shape() != grad.shape() || param.shape() != vel.shape() {
                return Err(Error::Dimension {
                    op: "sgd",
                    lhs: param.shape().to_vec(),
                    rhs: grad.shape().to_vec(),
                });
            }
            for ((p, &g), v) in param
                .data_mut()
                .iter_mut()
                .zip(grad.data())
                .zip(vel.data_mut())
            {
                *v = mu * *v + g + wd * *p;
                *p -= lr * *v;
            }
        }
        Ok(())
    }
}

/// What one training step did.
#[derive(Debug, Clone, PartialEq)]
pub struct StepMetrics {
    /// Step index the update was computed at (before incrementing).
    pub step: usize,
    pub threshold: f64,
    pub source_cls_loss: f64,
    pub domain_loss: f64,
    /// `lg1 − λ·ld1`.
    pub teacher_loss: f64,
    pub student_loss: Option<f64>,
    /// `lg1 − λ·ld1 + β·lg2`.
    pub total_loss: f64,
    pub decisions: DecisionCounts,
    pub teacher_mean_conf: f64,
    pub student_mean_conf: Option<f64>,
}

/// Loop state: networks, optimisers and samplers.
#[derive(Debug, Clone)]
pub struct Trainer<T> {
    step: usize,
    total_steps: usize,
    teacher: TeacherNet<T>,
    student: Option<StudentNet<T>>,
    weights: LossWeights,
    schedule: Schedule,
    teacher_opt: Sgd<T>,
    student_opt: Sgd<T>,
    source_sampler: BatchSampler,
    target_sampler: BatchSampler,
}

impl<T: Scalar> Trainer<T> {
    /// Builds fresh networks from the config's seed streams.
    pub fn new(
        config: &ExperimentConfig,
        source: &Domain<T>,
        target: &UnlabeledDomain<T>,
    ) -> Result<Self> {
        config.validate()?;
        let classes = source.classes();
        let input_dim = source.input_dim();
        let teacher = TeacherNet::new(
            &config.architecture,
            input_dim,
            classes,
            config.variant,
            &mut stream_rng(config.seed, Stream::TeacherInit),
        )?;
        let student = match config.mode {
            Mode::Tsc => Some(StudentNet::new(
                &config.architecture,
                input_dim,
                classes,
                &mut stream_rng(config.seed, Stream::StudentInit),
            )?),
            Mode::TeacherOnly => None,
        };
        Self::with_networks(config, teacher, student, source, target)
    }

    /// Uses the given networks instead of seeded initialisation.
    pub fn with_networks(
        config: &ExperimentConfig,
        teacher: TeacherNet<T>,
        student: Option<StudentNet<T>>,
        source: &Domain<T>,
        target: &UnlabeledDomain<T>,
    ) -> Result<Self> {
        config.validate()?;
        if let Some(s) = &student {
            if !s.matches(&teacher) {
                return Err(Error::contract(
                    "student must mirror the teacher's extractor and classifier",
                ));
            }
        }
        Ok(Self {
            step: 0,
            total_steps: config.total_steps,
            teacher,
            student,
            weights: config.loss,
            schedule: Schedule::new(config.schedule.delta, config.total_steps.max(1))?,
            teacher_opt: Sgd::new(config.optimizer)?,
            student_opt: Sgd::new(config.optimizer)?,
            source_sampler: BatchSampler::new(
                source.len(),
                config.batch.source,
                stream_rng(config.seed, Stream::SourceSampling),
            )?,
            target_sampler: BatchSampler::new(
                target.len(),
                config.batch.target,
                stream_rng(config.seed, Stream::TargetSampling),
            )?,
        })
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn total_steps(&self) -> usize {
        self.total_steps
    }

    pub fn teacher(&self) -> &TeacherNet<T> {
        &self.teacher
    }

    pub fn student(&self) -> Option<&StudentNet<T>> {
        self.student.as_ref()
    }

    pub fn schedule(&self) -> &Schedule {
        &self.schedule
    }

    pub fn threshold(&self) -> Result<f64> {
        self.schedule.threshold(self.step)
    }

    /// Samples the next source and target minibatches and trains on them.
    pub fn train_step(
        &mut self,
        source: &Domain<T>,
        target: &UnlabeledDomain<T>,
    ) -> Result<StepMetrics> {
        let sb = source.batch(&self.source_sampler.next_indices())?;
        let tb = target.batch(&self.target_sampler.next_indices())?;
        self.train_step_on(&sb, &tb)
    }

    /// One joint update on explicit batches.
    pub fn train_step_on(&mut self, source: &Batch<T>, target: &Batch<T>) -> Result<StepMetrics> {
        if self.step >= self.total_steps {
            return Err(Error::contract(format!(
                "step budget of {} exhausted",
                self.total_steps
            )));
        }
        let labels = source
            .ys
            .as_deref()
            .ok_or_else(|| Error::contract("source batch carries no labels"))?;
        let step = self.step;
        let non_finite = |component: &str| Error::NonFinite {
            component: component.to_string(),
            step,
        };

        let mut g = Graph::new();
        let tf = self
            .teacher
            .forward(&mut g, &source.xs, &target.xs, T::lit(GRL_COEFF))?;
        let lg1 = losses::source_cls_loss(&mut g, tf.source_logits, labels)?;
        let ld1 = match self.teacher.variant {
            Variant::Dann => losses::dann_domain_loss(&mut g, tf.source_domain, tf.target_domain)?,
            Variant::Cdan => losses::cdan_domain_loss(&mut g, tf.source_domain, tf.target_domain)?,
        };
        let teacher_labels = predict(g.value(tf.target_logits))?;

        let threshold = self.schedule.threshold(step)?;
        let mut decisions = DecisionCounts::default();
        let mut student_mean_conf = None;
        let student_part = match &self.student {
            Some(student) => {
                let sf = student.forward(&mut g, &target.xs)?;
                let student_labels = predict(g.value(sf.logits))?;
                let outcome = compete(&teacher_labels, &student_labels, T::lit(threshold))?;
                decisions = DecisionCounts::from_decisions(&outcome);
                student_mean_conf = Some(mean_conf(&student_labels));
                let chosen: Vec<usize> = outcome.iter().map(|d| d.chosen_label).collect();
                let lg2 = losses::student_loss(&mut g, sf.logits, &chosen)?;
                Some((lg2, sf.params))
            }
            None => None,
        };
        let lg2 = student_part.as_ref().map(|(v, _)| *v);
        let total = losses::total_loss(&mut g, lg1, ld1, lg2, &self.weights)?;

        let value = |v: Var| g.value(v).data()[0].to_f64_lossy();
        let (lg1_v, ld1_v) = (value(lg1), value(ld1));
        let lg2_v = lg2.map(value);
        if !lg1_v.is_finite() {
            return Err(non_finite("source classification loss"));
        }
        if !ld1_v.is_finite() {
            return Err(non_finite("domain loss"));
        }
        if lg2_v.is_some_and(|v| !v.is_finite()) {
            return Err(non_finite("student loss"));
        }

        g.backward(total).map_err(|_| non_finite("gradient"))?;
        let teacher_grads = collect_grads(&g, &tf.params);
        let scales = head_scales(
            self.teacher.feature.params().len(),
            teacher_grads.len(),
            &self.teacher_opt,
        );
        self.teacher_opt
            .step_scaled(self.teacher.params_mut(), &teacher_grads, &scales)?;
        if self.teacher.params().iter().any(|p| !p.is_finite()) {
            return Err(non_finite("teacher parameters"));
        }
        if let (Some(student), Some((_, params))) = (self.student.as_mut(), student_part.as_ref()) {
            let grads = collect_grads(&g, params);
            let scales = head_scales(
                student.feature.params().len(),
                grads.len(),
                &self.student_opt,
            );
            self.student_opt
                .step_scaled(student.params_mut(), &grads, &scales)?;
            if student.params().iter().any(|p| !p.is_finite()) {
                return Err(non_finite("student parameters"));
            }
        }
        self.step += 1;

        let teacher_loss = lg1_v - self.weights.lambda * ld1_v;
        Ok(StepMetrics {
            step,
            threshold,
            source_cls_loss: lg1_v,
            domain_loss: ld1_v,
            teacher_loss,
            student_loss: lg2_v,
            total_loss: losses::reported_total(lg1_v, ld1_v, lg2_v.unwrap_or(0.0), &self.weights),
            decisions,
            teacher_mean_conf: mean_conf(&teacher_labels),
            student_mean_conf,
        })
    }

    /// Accuracies and the competition outcome on a full labeled target set
    /// at the current threshold.
    pub fn evaluate(&self, target: &Domain<T>) -> Result<Evaluation> {
        evaluate(
            &self.teacher,
            self.student.as_ref(),
            target,
            self.threshold()?,
        )
    }
}

/// Rate multipliers: 1 for the feature extractor, the head multiplier for
/// the layers after it.
fn head_scales<T: Scalar>(backbone: usize, total: usize, opt: &Sgd<T>) -> Vec<f64> {
    let head = opt.config().head_lr_multiplier;
    (0..total)
        .map(|i| if i < backbone { 1.0 } else { head })
        .collect()
}

fn collect_grads<T: Scalar>(g: &Graph<T>, params: &[Var]) -> Vec<Tensor<T>> {
    params
        .iter()
        .map(|&p| {
            g.grad(p)
                .cloned()
                .unwrap_or_else(|| Tensor::zeros(g.value(p).shape()))
        })
        .collect()
}

fn mean_conf<T: Scalar>(labels: &[PseudoLabel<T>]) -> f64 {
    labels
        .iter()
        .map(|l| l.confidence.to_f64_lossy())
        .sum::<f64>()
        / labels.len().max(1) as f64
}

/// Full-target-set snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub threshold: f64,
    pub teacher_acc: f64,
    pub student_acc: Option<f64>,
    /// Accuracy of the teacher's pseudo-labels.
    pub pl_teacher_acc: f64,
    pub pl_student_acc: Option<f64>,
    /// Accuracy of the labels chosen by the competition.
    pub pl_winner_acc: f64,
    pub decisions: DecisionCounts,
}

fn accuracy(predicted: impl Iterator<Item = usize>, truth: &[usize]) -> f64 {
    let correct = predicted.zip(truth).filter(|(p, t)| p == *t).count();
    correct as f64 / truth.len().max(1) as f64
}

/// Evaluates both networks on the whole target set and runs the competition
/// there. Without a student every sample goes to the teacher.
pub fn evaluate<T: Scalar>(
    teacher: &TeacherNet<T>,
    student: Option<&StudentNet<T>>,
    target: &Domain<T>,
    threshold: f64,
) -> Result<Evaluation> {
    let truth = target.labels();
    let teacher_labels = predict(&teacher.logits(target.features())?)?;
    let student_labels = match student {
        Some(s) => Some(predict(&s.logits(target.features())?)?),
        None => None,
    };
    let rival = student_labels.clone().unwrap_or_else(|| {
        vec![
            PseudoLabel {
                class: 0,
                confidence: T::zero(),
            };
            teacher_labels.len()
        ]
    });
    let outcome: Vec<CompetitionDecision<T>> = compete(&teacher_labels, &rival, T::lit(threshold))?;
    let teacher_acc = accuracy(teacher_labels.iter().map(|l| l.class), truth);
    let student_acc = student_labels
        .as_ref()
        .map(|s| accuracy(s.iter().map(|l| l.class), truth));
    Ok(Evaluation {
        threshold,
        teacher_acc,
        student_acc,
        pl_teacher_acc: teacher_acc,
        pl_student_acc: student_acc,
        pl_winner_acc: accuracy(outcome.iter().map(|d| d.chosen_label), truth),
        decisions: DecisionCounts::from_decisions(&outcome),
    })
}

/// One logged row of the run history.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub step: usize,
    pub threshold: f64,
    /// Mean `lg1 − λ·ld1` over the steps since the previous row.
    pub teacher_loss: Option<f64>,
    /// Mean student pseudo-label loss over the steps since the previous row.
    pub student_loss: Option<f64>,
    pub teacher_acc: f64,
    pub student_acc: Option<f64>,
    pub pl_teacher_acc: f64,
    pub pl_student_acc: Option<f64>,
    pub pl_winner_acc: f64,
    pub frac_teacher_over_threshold: f64,
    pub frac_teacher_higher_conf: f64,
    pub frac_student_wins: f64,
}

impl MetricRow {
    fn new(step: usize, eval: &Evaluation, losses: &LossWindow) -> Self {
        let [over, higher, student] = eval.decisions.fractions();
        Self {
            step,
            threshold: eval.threshold,
            teacher_loss: losses.teacher_mean(),
            student_loss: losses.student_mean(),
            teacher_acc: eval.teacher_acc,
            student_acc: eval.student_acc,
            pl_teacher_acc: eval.pl_teacher_acc,
            pl_student_acc: eval.pl_student_acc,
            pl_winner_acc: eval.pl_winner_acc,
            frac_teacher_over_threshold: over,
            frac_teacher_higher_conf: higher,
            frac_student_wins: student,
        }
    }
}

#[derive(Debug, Default)]
struct LossWindow {
    teacher: f64,
    student: f64,
    steps: usize,
    student_steps: usize,
}

impl LossWindow {
    fn push(&mut self, m: &StepMetrics) {
        self.teacher += m.teacher_loss;
        self.steps += 1;
        if let Some(s) = m.student_loss {
            self.student += s;
            self.student_steps += 1;
        }
    }

    fn teacher_mean(&self) -> Option<f64> {
        (self.steps > 0).then(|| self.teacher / self.steps as f64)
    }

    fn student_mean(&self) -> Option<f64> {
        (self.student_steps > 0).then(|| self.student / self.student_steps as f64)
    }
}

/// Everything a finished run produced.
#[derive(Debug, Clone)]
pub struct RunResult<T> {
    pub config: ExperimentConfig,
    pub history: Vec<MetricRow>,
    pub final_teacher_acc: f64,
    pub final_student_acc: Option<f64>,
    pub wallclock_s: f64,
    pub teacher: TeacherNet<T>,
    pub student: Option<StudentNet<T>>,
}

/// Runs the full step budget, logging a row at step 0, every
/// `eval_interval` steps and at the last step.
pub fn run<T: Scalar>(config: &ExperimentConfig) -> Result<RunResult<T>> {
    run_with(config, |_, _| {})
}

/// [`run`] with a hook called after every training step.
pub fn run_with<T: Scalar>(
    config: &ExperimentConfig,
    on_step: impl FnMut(&Trainer<T>, &StepMetrics),
) -> Result<RunResult<T>> {
    config.validate()?;
    let (source, target) = generate::<T>(&config.dataset)?;
    run_on(config, &source, &target, on_step)
}

/// [`run_with`] on explicit datasets. Target labels are only read by the
/// evaluation; training sees the unlabeled view.
pub fn run_on<T: Scalar>(
    config: &ExperimentConfig,
    source: &Domain<T>,
    target: &Domain<T>,
    mut on_step: impl FnMut(&Trainer<T>, &StepMetrics),
) -> Result<RunResult<T>> {
    let started = Instant::now();
    if source.classes() != target.classes() || source.input_dim() != target.input_dim() {
        return Err(Error::contract(
            "source and target must share classes and input width",
        ));
    }
    let unlabeled = target.unlabeled();
    let mut trainer = Trainer::new(config, source, &unlabeled)?;

    let mut history = vec![MetricRow::new(
        0,
        &trainer.evaluate(target)?,
        &LossWindow::default(),
    )];
    let mut window = LossWindow::default();
    while trainer.step() < config.total_steps {
        let metrics = trainer.train_step(source, &unlabeled)?;
        on_step(&trainer, &metrics);
        window.push(&metrics);
        let step = trainer.step();
        if step % config.eval_interval == 0 || step == config.total_steps {
            history.push(MetricRow::new(step, &trainer.evaluate(target)?, &window));
            window = LossWindow::default();
        }
    }

    let last = history.last().expect("history has the initial row");
    Ok(RunResult {
        config: config.clone(),
        final_teacher_acc: last.teacher_acc,
        final_student_acc: last.student_acc,
        history,
        wallclock_s: started.elapsed().as_secs_f64(),
        teacher: trainer.teacher,
        student: trainer.student,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::DatasetSpec;
    use crate::networks::Mlp;

    fn small_config() -> ExperimentConfig {
        ExperimentConfig {
            total_steps: 40,
            eval_interval: 10,
            dataset: DatasetSpec {
                n_source: 60,
                n_target: 60,
                ..Default::default()
            },
            batch: crate::config::BatchConfig {
                source: 8,
                target: 8,
            },
            ..Default::default()
        }
    }

    #[test]
    fn sgd_degenerate_cases() {
        let cfg = OptimizerConfig {
            learning_rate: 0.1,
            momentum: 0.0,
            weight_decay: 0.0,
            ..Default::default()
        };
        let mut sgd = Sgd::<f64>::new(cfg).unwrap();
        let mut p = Tensor::vector(vec![1.0, -2.0]).unwrap();
        let g = Tensor::vector(vec![0.5, 1.0]).unwrap();
        sgd.step(vec![&mut p], &[g]).unwrap();
        assert_eq!(p.data(), &[1.0 - 0.1 * 0.5, -2.0 - 0.1 * 1.0]);

        let mut sgd = Sgd::<f64>::new(OptimizerConfig {
            weight_decay: 0.0,
            ..Default::default()
        })
        .unwrap();
        let mut p = Tensor::vector(vec![1.0, -2.0]).unwrap();
        sgd.step(vec![&mut p], &[Tensor::zeros(&[2])]).unwrap();
        assert_eq!(p.data(), &[1.0, -2.0]);
    }

    #[test]
    fn sgd_matches_unrolled_recurrence() {
        let cfg = OptimizerConfig {
            learning_rate: 0.01,
            momentum: 0.95,
            weight_decay: 0.0005,
            ..Default::default()
        };
        let mut sgd = Sgd::<f64>::new(cfg).unwrap();
        let mut p = Tensor::vector(vec![0.7]).unwrap();
        let (g1, g2) = (0.3, -0.8);
        sgd.step(vec![&mut p], &[Tensor::vector(vec![g1]).unwrap()])
            .unwrap();
        sgd.step(vec![&mut p], &[Tensor::vector(vec![g2]).unwrap()])
            .unwrap();

        let (lr, mu, wd) = (0.01, 0.95, 0.0005);
        let p0 = 0.7;
        let v1 = g1 + wd * p0;
        let p1 = p0 - lr * v1;
        let v2 = mu * v1 + g2 + wd * p1;
        let p2 = p1 - lr * v2;
        assert!((p.data()[0] - p2).abs() < 1e-12);
        assert!((sgd.velocity()[0].data()[0] - v2).abs() < 1e-12);
    }

    #[test]
    fn head_multiplier_scales_only_layers_after_the_extractor() {
        let base = small_config();
        let mut fast = base.clone();
        fast.optimizer.head_lr_multiplier = 8.0;
        let (s, t) = generate::<f64>(&base.dataset).unwrap();
        let u = t.unlabeled();
        let deltas = |cfg: &ExperimentConfig| {
            let mut tr = Trainer::new(cfg, &s, &u).unwrap();
            let before: Vec<Tensor<f64>> = tr.teacher().params().into_iter().cloned().collect();
            tr.train_step(&s, &u).unwrap();
            let n_feature = tr.teacher().feature.params().len();
            let d: Vec<Vec<f64>> = tr
                .teacher()
                .params()
                .iter()
                .zip(&before)
                .map(|(a, b)| a.data().iter().zip(b.data()).map(|(x, y)| x - y).collect())
                .collect();
            (d, n_feature)
        };
        let (d1, n_feature) = deltas(&base);
        let (d8, _) = deltas(&fast);
        for (k, (a, b)) in d1.iter().zip(&d8).enumerate() {
            let factor = if k < n_feature { 1.0 } else { 8.0 };
            for (x, y) in a.iter().zip(b) {
                assert!(
                    (y - factor * x).abs() <= 1e-12 * (1.0 + x.abs()),
                    "param {k}: {y} vs {factor} * {x}"
                );
            }
        }
    }

    #[test]
    fn sgd_rejects_mismatched_lists() {
        let mut sgd = Sgd::<f64>::new(OptimizerConfig::default()).unwrap();
        let mut p = Tensor::vector(vec![1.0]).unwrap();
        assert!(sgd.step(vec![&mut p], &[]).is_err());
    }

    #[test]
    fn fresh_nets_at_step_zero_never_fire_threshold_branch() {
        let config = ExperimentConfig {
            dataset: DatasetSpec {
                kind: crate::data::DatasetKind::GaussianBlobsShift,
                classes: 3,
                shift: 1.0,
                n_source: 60,
                n_target: 60,
                ..Default::default()
            },
            ..small_config()
        };
        let (s, t) = generate::<f64>(&config.dataset).unwrap();
        let arch = &config.architecture;
        let teacher = TeacherNet::zeros(arch, 2, 3, Variant::Dann).unwrap();
        let student = StudentNet::zeros(arch, 2, 3).unwrap();
        let mut trainer =
            Trainer::with_networks(&config, teacher, Some(student), &s, &t.unlabeled()).unwrap();
        assert_eq!(trainer.threshold().unwrap(), 0.5);
        let m = trainer.train_step(&s, &t.unlabeled()).unwrap();
        assert_eq!(m.threshold, 0.5);
        assert_eq!(m.decisions.teacher_over_threshold, 0);
        assert!((m.teacher_mean_conf - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(trainer.step(), 1);
    }

    #[test]
    fn source_only_step_equals_plain_classifier_step() {
        let mut config = small_config();
        config.loss = LossWeights {
            lambda: 0.0,
            beta: 0.0,
        };
        let (s, t) = generate::<f64>(&config.dataset).unwrap();
        let u = t.unlabeled();
        let mut trainer = Trainer::new(&config, &s, &u).unwrap();
        let initial = trainer.teacher().clone();
        let sb = s.batch(&[0, 5, 9, 13]).unwrap();
        let tb = u.batch(&[1, 2, 3]).unwrap();
        trainer.train_step_on(&sb, &tb).unwrap();

        // standalone cross-entropy trainer on the same extractor + classifier
        let mut feature: Mlp<f64> = initial.feature.clone();
        let mut classifier: Mlp<f64> = initial.classifier.clone();
        let mut g = Graph::new();
        let x = g.input(sb.xs.clone());
        let mut vars = Vec::new();
        let f = feature.forward(&mut g, x, &mut vars).unwrap();
        let logits = classifier.forward(&mut g, f, &mut vars).unwrap();
        let loss = losses::cross_entropy(&mut g, logits, sb.ys.as_ref().unwrap()).unwrap();
        g.backward(loss).unwrap();
        let grads = collect_grads(&g, &vars);
        let mut params = feature.params_mut();
        params.extend(classifier.params_mut());
        Sgd::new(config.optimizer)
            .unwrap()
            .step(params, &grads)
            .unwrap();

        let trained = trainer.teacher();
        for (a, b) in trained
            .feature
            .params()
            .into_iter()
            .chain(trained.classifier.params())
            .zip(feature.params().into_iter().chain(classifier.params()))
        {
            for (x, y) in a.data().iter().zip(b.data()) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn student_update_leaves_teacher_untouched_and_vice_versa() {
        let config = small_config();
        let (s, t) = generate::<f64>(&config.dataset).unwrap();
        let u = t.unlabeled();
        let teacher = TeacherNet::new(
            &config.architecture,
            2,
            2,
            Variant::Dann,
            &mut stream_rng(1, Stream::TeacherInit),
        )
        .unwrap();
        let student = StudentNet::new(
            &config.architecture,
            2,
            2,
            &mut stream_rng(1, Stream::StudentInit),
        )
        .unwrap();

        let mut g = Graph::new();
        let sb = s.batch(&[0, 1, 2, 3]).unwrap();
        let tb = u.batch(&[4, 5, 6]).unwrap();
        let tf = teacher.forward(&mut g, &sb.xs, &tb.xs, 1.0).unwrap();
        let sf = student.forward(&mut g, &tb.xs).unwrap();
        let lg2 = losses::student_loss(&mut g, sf.logits, &[0, 1, 0]).unwrap();
        let lg1 =
            losses::source_cls_loss(&mut g, tf.source_logits, sb.ys.as_ref().unwrap()).unwrap();
        let ld1 = losses::dann_domain_loss(&mut g, tf.source_domain, tf.target_domain).unwrap();
        let teacher_obj =
            losses::total_loss(&mut g, lg1, ld1, None, &LossWeights::default()).unwrap();
        for &p in &tf.params {
            assert!(!g.depends_on(lg2, p));
        }
        for &p in &sf.params {
            assert!(!g.depends_on(teacher_obj, p));
        }
    }

    #[test]
    fn run_logs_rows_and_is_deterministic() {
        let config = small_config();
        let a = run::<f64>(&config).unwrap();
        let b = run::<f64>(&config).unwrap();
        assert_eq!(a.history, b.history);
        let steps: Vec<_> = a.history.iter().map(|r| r.step).collect();
        assert_eq!(steps, vec![0, 10, 20, 30, 40]);
        for r in &a.history {
            let sum =
                r.frac_teacher_over_threshold + r.frac_teacher_higher_conf + r.frac_student_wins;
            assert!((sum - 1.0).abs() < 1e-9);
            let expected = 1.0 / (1.0 + (-10.0 * r.step as f64 / 40.0).exp());
            assert_eq!(r.threshold, expected);
        }
        assert!(a.history[0].teacher_loss.is_none());
        assert!(a.history[1].student_loss.is_some());
    }

    #[test]
    fn uneven_interval_still_logs_last_step() {
        let config = ExperimentConfig {
            total_steps: 25,
            ..small_config()
        };
        let r = run::<f64>(&config).unwrap();
        let steps: Vec<_> = r.history.iter().map(|r| r.step).collect();
        assert_eq!(steps, vec![0, 10, 20, 25]);
    }

    #[test]
    fn empty_run_has_initial_row_only() {
        let config = ExperimentConfig {
            total_steps: 0,
            ..small_config()
        };
        let r = run::<f64>(&config).unwrap();
        assert_eq!(r.history.len(), 1);
        assert_eq!(r.history[0].step, 0);
        assert_eq!(r.history[0].threshold, 0.5);
    }

    #[test]
    fn teacher_only_run_has_no_student_columns() {
        let config = ExperimentConfig {
            mode: Mode::TeacherOnly,
            ..small_config()
        };
        let r = run::<f64>(&config).unwrap();
        assert!(r.student.is_none());
        for row in &r.history {
            assert!(row.student_acc.is_none() && row.student_loss.is_none());
            assert_eq!(row.pl_winner_acc, row.pl_teacher_acc);
            assert_eq!(row.frac_student_wins, 0.0);
        }
    }

    #[test]
    fn step_budget_is_enforced() {
        let config = ExperimentConfig {
            total_steps: 1,
            ..small_config()
        };
        let (s, t) = generate::<f64>(&config.dataset).unwrap();
        let u = t.unlabeled();
        let mut trainer = Trainer::new(&config, &s, &u).unwrap();
        trainer.train_step(&s, &u).unwrap();
        assert!(trainer.train_step(&s, &u).is_err());
    }

    #[test]
    fn runs_in_single_precision() {
        let r = run::<f32>(&small_config()).unwrap();
        assert!(r.final_teacher_acc > 0.0);
    }
}
