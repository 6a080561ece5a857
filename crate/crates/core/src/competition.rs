//! Pseudo-label competition between teacher and student.
//!
//! The teacher keeps priority whenever its confidence exceeds a sigmoid
//! threshold that rises from 0.5 towards 1 over the run; otherwise the more
//! confident network wins and the student takes ties.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::networks::PseudoLabel;
use crate::scalar::Scalar;

const BELOW_ONE: f64 = 1.0 - f64::EPSILON / 2.0;

/// Sigmoid schedule of the teacher-priority threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedule {
    delta: f64,
    total_steps: usize,
}

impl Schedule {
    pub fn new(delta: f64, total_steps: usize) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::config("schedule.delta", "a finite number > 0"));
        }
        if total_steps == 0 {
            return Err(Error::config("total_steps", "an integer >= 1"));
        }
        Ok(Self { delta, total_steps })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn total_steps(&self) -> usize {
        self.total_steps
    }

    /// `1 / (1 + exp(-δ · step / total_steps))`, capped just below 1 for
    /// steep schedules where the sigmoid rounds up.
    pub fn threshold(&self, step: usize) -> Result<f64> {
        if step > self.total_steps {
            return Err(Error::contract(format!(
                "threshold step {step} outside [0, {}]",
                self.total_steps
            )));
        }
        let progress = step as f64 / self.total_steps as f64;
        Ok((1.0 / (1.0 + (-self.delta * progress).exp())).min(BELOW_ONE))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Winner {
    Teacher,
    Student,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Reason {
    TeacherOverThreshold,
    TeacherHigherConfidence,
    StudentWins,
}

impl Reason {
    pub fn winner(self) -> Winner {
        match self {
            Reason::TeacherOverThreshold | Reason::TeacherHigherConfidence => Winner::Teacher,
            Reason::StudentWins => Winner::Student,
        }
    }
}

/// Outcome of the competition for one target sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompetitionDecision<T> {
    pub sample_index: usize,
    pub winner: Winner,
    pub reason: Reason,
    pub chosen_label: usize,
    pub teacher_conf: T,
    pub student_conf: T,
    pub threshold: T,
}

/// Decision for a single sample; the threshold branch is tested first.
pub fn decide<T: Scalar>(teacher_conf: T, student_conf: T, threshold: T) -> Reason {
    if teacher_conf > threshold {
        Reason::TeacherOverThreshold
    } else if teacher_conf > student_conf {
        Reason::TeacherHigherConfidence
    } else {
        Reason::StudentWins
    }
}

/// Selects one pseudo-label per sample.
pub fn compete<T: Scalar>(
    teacher: &[PseudoLabel<T>],
    student: &[PseudoLabel<T>],
    threshold: T,
) -> Result<Vec<CompetitionDecision<T>>> {
    if teacher.len() != student.len() {
        return Err(Error::contract(format!(
            "compete: {} teacher labels vs {} student labels",
            teacher.len(),
            student.len()
        )));
    }
    Ok(teacher
        .iter()
        .zip(student)
        .enumerate()
        .map(|(j, (t, s))| {
            let reason = decide(t.confidence, s.confidence, threshold);
            let winner = reason.winner();
            CompetitionDecision {
                sample_index: j,
                winner,
                reason,
                chosen_label: match winner {
                    Winner::Teacher => t.class,
                    Winner::Student => s.class,
                },
                teacher_conf: t.confidence,
                student_conf: s.confidence,
                threshold,
            }
        })
        .collect())
}

/// Histogram of decision reasons.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DecisionCounts {
    pub teacher_over_threshold: usize,
    pub teacher_higher_conf: usize,
    pub student_wins: usize,
}

impl DecisionCounts {
    pub fn from_decisions<T>(decisions: &[CompetitionDecision<T>]) -> Self {
        let mut c = Self::default();
        for d in decisions {
            c.record(d.reason);
        }
        c
    }

    pub fn record(&mut self, reason: Reason) {
        match reason {
            Reason::TeacherOverThreshold => self.teacher_over_threshold += 1,
            Reason::TeacherHigherConfidence => self.teacher_higher_conf += 1,
            Reason::StudentWins => self.student_wins += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.teacher_over_threshold + self.teacher_higher_conf + self.student_wins
    }

    /// Fractions in reason order; all zero when empty.
    pub fn fractions(&self) -> [f64; 3] {
        let n = self.total();
        if n == 0 {
            return [0.0; 3];
        }
        let n = n as f64;
        [
            self.teacher_over_threshold as f64 / n,
            self.teacher_higher_conf as f64 / n,
            self.student_wins as f64 / n,
        ]
    }
}

impl std::ops::AddAssign for DecisionCounts {
    fn add_assign(&mut self, rhs: Self) {
        self.teacher_over_threshold += rhs.teacher_over_threshold;
        self.teacher_higher_conf += rhs.teacher_higher_conf;
        self.student_wins += rhs.student_wins;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pl(class: usize, confidence: f64) -> PseudoLabel<f64> {
        PseudoLabel { class, confidence }
    }

    fn one(p1: f64, p2: f64, tp: f64) -> CompetitionDecision<f64> {
        compete(&[pl(0, p1)], &[pl(1, p2)], tp).unwrap()[0]
    }

    #[test]
    fn threshold_values() {
        let s = Schedule::new(10.0, 1000).unwrap();
        assert_eq!(s.threshold(0).unwrap(), 0.5);
        assert!((s.threshold(1000).unwrap() - 0.999_954_602_131_297_6).abs() < 1e-12);
        assert!((s.threshold(500).unwrap() - 0.993_307_149_075_715_2).abs() < 1e-12);
        assert!(s.threshold(1001).is_err());
        assert!(Schedule::new(0.0, 10).is_err());
        assert!(Schedule::new(10.0, 0).is_err());
    }

    #[test]
    fn rule_branches() {
        let d = one(0.95, 0.99, 0.9);
        assert_eq!(
            (d.winner, d.reason, d.chosen_label),
            (Winner::Teacher, Reason::TeacherOverThreshold, 0)
        );
        let d = one(0.6, 0.5, 0.9);
        assert_eq!(
            (d.winner, d.reason),
            (Winner::Teacher, Reason::TeacherHigherConfidence)
        );
        let d = one(0.6, 0.7, 0.9);
        assert_eq!(
            (d.winner, d.reason, d.chosen_label),
            (Winner::Student, Reason::StudentWins, 1)
        );
        let d = one(0.6, 0.6, 0.9);
        assert_eq!(d.winner, Winner::Student);
        let d = one(0.9, 0.95, 0.9);
        assert_eq!(d.winner, Winner::Student);
    }

    #[test]
    fn length_mismatch_is_error() {
        assert!(compete(&[pl(0, 0.5)], &[], 0.5).is_err());
    }

    #[test]
    fn counts_partition() {
        let t = [pl(0, 0.95), pl(0, 0.6), pl(0, 0.6)];
        let s = [pl(1, 0.99), pl(1, 0.5), pl(1, 0.7)];
        let c = DecisionCounts::from_decisions(&compete(&t, &s, 0.9).unwrap());
        assert_eq!(
            c,
            DecisionCounts {
                teacher_over_threshold: 1,
                teacher_higher_conf: 1,
                student_wins: 1
            }
        );
        assert!((c.fractions().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(DecisionCounts::default().fractions(), [0.0; 3]);
    }

    proptest! {
        #[test]
        fn threshold_is_monotone_and_bounded(delta in 0.1f64..50.0, total in 1usize..5000, a in 0usize..5000, b in 0usize..5000) {
            let s = Schedule::new(delta, total).unwrap();
            let (lo, hi) = (a.min(b).min(total), a.max(b).min(total));
            let (tl, th) = (s.threshold(lo).unwrap(), s.threshold(hi).unwrap());
            prop_assert!(tl <= th);
            prop_assert!(tl >= 0.5 && th < 1.0);
        }

        #[test]
        fn winner_flips_once_as_threshold_drops(p1 in 0.2f64..1.0, p2 in 0.2f64..1.0, t1 in 0.5f64..1.0, t2 in 0.5f64..1.0) {
            let (lo, hi) = (t1.min(t2), t1.max(t2));
            let at_hi = one(p1, p2, hi).winner;
            let at_lo = one(p1, p2, lo).winner;
            // lowering the threshold can only hand samples to the teacher
            prop_assert!(!(at_hi == Winner::Teacher && at_lo == Winner::Student));
        }

        #[test]
        fn confident_teacher_always_wins(confs in proptest::collection::vec((0.91f64..1.0, 0.0f64..1.0), 1..50)) {
            let t: Vec<_> = confs.iter().map(|&(a, _)| pl(0, a)).collect();
            let s: Vec<_> = confs.iter().map(|&(_, b)| pl(1, b)).collect();
            let d = compete(&t, &s, 0.9).unwrap();
            prop_assert!(d.iter().all(|d| d.winner == Winner::Teacher));
        }
    }
}
