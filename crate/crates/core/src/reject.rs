//! The reject option: accept/reject rules over posteriors and the
//! accuracy/risk bookkeeping used to compare methods.
//!
//! A classifier with a reject option may output a third decision, "reject",
//! instead of a label. Rejection costs `d` while an error costs 1 and a
//! correct decision 0; restricting `d` to [0, 1/2] keeps rejection
//! potentially useful (beyond 1/2 guessing is always at least as cheap).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learners::Posteriors;

/// Accept a concrete label or withhold judgment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    Accept(usize),
    Reject,
}

impl Decision {
    pub fn is_accept(&self) -> bool {
        matches!(self, Decision::Accept(_))
    }

    pub fn label(&self) -> Option<usize> {
        match self {
            Decision::Accept(l) => Some(*l),
            Decision::Reject => None,
        }
    }
}

/// Thresholds for the two standard reject rules.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RejectParams {
    /// Posterior threshold: accept when max posterior exceeds tau.
    pub tau: f64,
    /// Reject cost in [0, 1/2].
    pub d: f64,
}

impl Default for RejectParams {
    fn default() -> Self {
        RejectParams { tau: 0.5, d: 0.2 }
    }
}

impl RejectParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.tau) {
            return Err(Error::invalid_argument("tau must be in [0, 1)"));
        }
        check_cost(self.d)
    }
}

/// Validate a rejection cost: the reject option only makes sense for
/// d ∈ [0, 1/2]; above 1/2 guessing is always cheaper than rejecting.
pub fn check_cost(d: f64) -> Result<()> {
    if !(0.0..=0.5).contains(&d) {
        return Err(Error::invalid_argument(
            "reject cost d must be in [0, 1/2]; beyond 1/2 rejection is never optimal",
        ));
    }
    Ok(())
}

/// Counts of the three possible outcomes over an evaluation set.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeCounts {
    pub n_correct: usize,
    pub n_error: usize,
    pub n_rejected: usize,
}

impl OutcomeCounts {
    pub fn total(&self) -> usize {
        self.n_correct + self.n_error + self.n_rejected
    }

    pub fn n_accepted(&self) -> usize {
        self.n_correct + self.n_error
    }

    /// Fold one decision into the counts.
    pub fn record(&mut self, decision: Decision, truth: usize) {
        match decision {
            Decision::Accept(label) if label == truth => self.n_correct += 1,
            Decision::Accept(_) => self.n_error += 1,
            Decision::Reject => self.n_rejected += 1,
        }
    }

    /// Tally a batch of decisions against truth labels.
    pub fn tally(decisions: &[Decision], truth: &[usize]) -> Result<Self> {
        if decisions.len() != truth.len() {
            return Err(Error::invalid_argument("decision/truth length mismatch"));
        }
        let mut c = OutcomeCounts::default();
        for (&d, &t) in decisions.iter().zip(truth) {
            c.record(d, t);
        }
        Ok(c)
    }
}

/// Plain Bayes decision: the class with the largest posterior, ties to the
/// lowest index.
pub fn bayes_decide(p: &Posteriors) -> usize {
    p.argmax()
}

/// Posterior-threshold rule: accept the argmax class when its posterior
/// strictly exceeds `tau`, otherwise reject. With tau = 0 everything is
/// accepted (a max posterior is always at least 1/N > 0).
pub fn chow_decide(p: &Posteriors, tau: f64) -> Result<Decision> {
    if !(0.0..1.0).contains(&tau) {
        return Err(Error::invalid_argument("tau must be in [0, 1)"));
    }
    if p.max_value() > tau {
        Ok(Decision::Accept(p.argmax()))
    } else {
        Ok(Decision::Reject)
    }
}

/// Cost-based rule: accept when the max posterior reaches 1 - d. At
/// d = 1/2 this accepts every binary input (the largest of two posteriors
/// is at least 1/2), recovering the classifier without a reject option.
pub fn cost_decide(p: &Posteriors, d: f64) -> Result<Decision> {
    check_cost(d)?;
    if p.max_value() >= 1.0 - d {
        Ok(Decision::Accept(p.argmax()))
    } else {
        Ok(Decision::Reject)
    }
}

/// Compatibility variant that applies the threshold on the other side,
/// accepting whenever the max posterior exceeds `d` itself. For small `d`
/// this accepts nearly everything, so it is not useful as a reject rule;
/// it exists only so the behavior difference against [`cost_decide`] is
/// documented and testable rather than silently dropped.
pub fn cost_decide_literal(p: &Posteriors, d: f64) -> Result<Decision> {
    check_cost(d)?;
    if p.max_value() > d {
        Ok(Decision::Accept(p.argmax()))
    } else {
        Ok(Decision::Reject)
    }
}

/// Accuracy among accepted samples only.
pub fn conditional_accuracy(c: &OutcomeCounts) -> Result<f64> {
    let accepted = c.n_accepted();
    if accepted == 0 {
        return Err(Error::NoCoverage);
    }
    Ok(c.n_correct as f64 / accepted as f64)
}

/// Empirical risk with error cost 1 and reject cost d:
/// (n_error + d * n_rejected) / total.
pub fn empirical_risk(c: &OutcomeCounts, d: f64) -> Result<f64> {
    check_cost(d)?;
    let total = c.total();
    if total == 0 {
        return Err(Error::invalid_argument("empirical risk undefined on empty counts"));
    }
    Ok((c.n_error as f64 + d * c.n_rejected as f64) / total as f64)
}

/// Pointwise binary risk min(f, 1-f, d): error the cheaper class or pay
/// the reject cost, whichever is least.
pub fn pointwise_risk_binary(f: f64, d: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&f) {
        return Err(Error::invalid_argument("f must be in [0, 1]"));
    }
    check_cost(d)?;
    Ok(f.min(1.0 - f).min(d))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn p(values: &[f64]) -> Posteriors {
        Posteriors::new(values.to_vec()).unwrap()
    }

    fn random_posteriors(rng: &mut ChaCha8Rng, n_classes: usize) -> Posteriors {
        let raw: Vec<f64> = (0..n_classes).map(|_| rng.random_range(0.01..1.0)).collect();
        let sum: f64 = raw.iter().sum();
        Posteriors::new(raw.into_iter().map(|v| v / sum).collect()).unwrap()
    }

    #[test]
    fn bayes_picks_argmax_with_low_tie() {
        assert_eq!(bayes_decide(&p(&[0.7, 0.3])), 0);
        assert_eq!(bayes_decide(&p(&[0.3, 0.7])), 1);
        assert_eq!(bayes_decide(&p(&[0.5, 0.5])), 0);
        assert_eq!(bayes_decide(&p(&vec![0.1; 10])), 0);
    }

    #[test]
    fn chow_thresholds_on_max_posterior() {
        assert_eq!(chow_decide(&p(&[0.9, 0.1]), 0.7).unwrap(), Decision::Accept(0));
        assert_eq!(chow_decide(&p(&[0.55, 0.45]), 0.7).unwrap(), Decision::Reject);
        // Exactly at the threshold: strict comparison rejects.
        assert_eq!(chow_decide(&p(&[0.7, 0.3]), 0.7).unwrap(), Decision::Reject);
    }

    #[test]
    fn chow_tau_zero_accepts_everything() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let post = random_posteriors(&mut rng, 10);
            assert!(chow_decide(&post, 0.0).unwrap().is_accept());
        }
    }

    #[test]
    fn chow_rejections_monotone_in_tau() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let posteriors: Vec<Posteriors> =
            (0..1000).map(|_| random_posteriors(&mut rng, 5)).collect();
        let taus: Vec<f64> = (0..20).map(|i| i as f64 / 20.0).collect();
        let mut last_rejected = 0usize;
        for &tau in &taus {
            let rejected = posteriors
                .iter()
                .filter(|post| !chow_decide(post, tau).unwrap().is_accept())
                .count();
            assert!(
                rejected >= last_rejected,
                "rejections fell from {last_rejected} to {rejected} at tau {tau}"
            );
            last_rejected = rejected;
        }
    }

    #[test]
    fn cost_rule_threshold_examples() {
        assert_eq!(cost_decide(&p(&[0.8, 0.2]), 0.3).unwrap(), Decision::Accept(0));
        assert_eq!(cost_decide(&p(&[0.65, 0.35]), 0.3).unwrap(), Decision::Reject);
        // Exactly at 1 - d: non-strict comparison accepts.
        assert_eq!(cost_decide(&p(&[0.7, 0.3]), 0.3).unwrap(), Decision::Accept(0));
        // d = 0 accepts only certainty.
        assert_eq!(cost_decide(&p(&[1.0, 0.0]), 0.0).unwrap(), Decision::Accept(0));
        assert_eq!(cost_decide(&p(&[0.999, 0.001]), 0.0).unwrap(), Decision::Reject);
    }

    #[test]
    fn cost_rule_at_half_accepts_all_binary_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let post = random_posteriors(&mut rng, 2);
            assert!(cost_decide(&post, 0.5).unwrap().is_accept());
        }
    }

    #[test]
    fn cost_rule_rejects_out_of_range_d() {
        assert!(cost_decide(&p(&[0.6, 0.4]), 0.6).is_err());
        assert!(cost_decide(&p(&[0.6, 0.4]), -0.1).is_err());
    }

    #[test]
    fn literal_variant_accepts_almost_everything_at_small_d() {
        // The documented inconsistency: thresholding max posterior against d
        // itself never rejects once d < 1/N.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let post = random_posteriors(&mut rng, 4);
            assert!(cost_decide_literal(&post, 0.1).unwrap().is_accept());
        }
        // Its rejections at larger d differ from cost_decide: an input with
        // max posterior 0.45 rejects under cost_decide(d=0.4) (0.45 < 0.6)
        // but accepts under the literal reading (0.45 > 0.4).
        let post = p(&[0.45, 0.3, 0.25]);
        assert_eq!(cost_decide(&post, 0.4).unwrap(), Decision::Reject);
        assert_eq!(cost_decide_literal(&post, 0.4).unwrap(), Decision::Accept(0));
    }

    #[test]
    fn conditional_accuracy_formula() {
        let c = OutcomeCounts { n_correct: 80, n_error: 10, n_rejected: 10 };
        assert!((conditional_accuracy(&c).unwrap() - 80.0 / 90.0).abs() < 1e-15);
        let all_wrong = OutcomeCounts { n_correct: 0, n_error: 5, n_rejected: 0 };
        assert_eq!(conditional_accuracy(&all_wrong).unwrap(), 0.0);
        let none_wrong = OutcomeCounts { n_correct: 7, n_error: 0, n_rejected: 3 };
        assert_eq!(conditional_accuracy(&none_wrong).unwrap(), 1.0);
    }

    #[test]
    fn conditional_accuracy_undefined_without_coverage() {
        let c = OutcomeCounts { n_correct: 0, n_error: 0, n_rejected: 12 };
        assert!(matches!(conditional_accuracy(&c), Err(Error::NoCoverage)));
    }

    #[test]
    fn empirical_risk_formula() {
        let c = OutcomeCounts { n_correct: 80, n_error: 10, n_rejected: 10 };
        assert!((empirical_risk(&c, 0.2).unwrap() - 0.12).abs() < 1e-15);
        // d = 0: plain error rate over all samples.
        assert!((empirical_risk(&c, 0.0).unwrap() - 0.10).abs() < 1e-15);
        // No rejects: error rate regardless of d.
        let nr = OutcomeCounts { n_correct: 9, n_error: 1, n_rejected: 0 };
        assert_eq!(empirical_risk(&nr, 0.0).unwrap(), empirical_risk(&nr, 0.5).unwrap());
    }

    #[test]
    fn empirical_risk_affine_in_d_with_reject_slope() {
        let c = OutcomeCounts { n_correct: 50, n_error: 20, n_rejected: 30 };
        let r0 = empirical_risk(&c, 0.1).unwrap();
        let r1 = empirical_risk(&c, 0.3).unwrap();
        let slope = (r1 - r0) / 0.2;
        assert!((slope - 0.30).abs() < 1e-12);
        assert!(r1 >= r0);
    }

    #[test]
    fn pointwise_risk_is_min_of_three() {
        assert_eq!(pointwise_risk_binary(0.5, 0.3).unwrap(), 0.3);
        assert_eq!(pointwise_risk_binary(0.1, 0.3).unwrap(), 0.1);
        // d = 1/2: reject is never strictly optimal.
        for i in 0..=100 {
            let f = i as f64 / 100.0;
            let r = pointwise_risk_binary(f, 0.5).unwrap();
            assert_eq!(r, f.min(1.0 - f));
        }
        assert!(pointwise_risk_binary(1.5, 0.3).is_err());
    }

    #[test]
    fn outcome_identity_links_conditional_and_overall_accuracy() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let c = OutcomeCounts {
                n_correct: rng.random_range(1..50),
                n_error: rng.random_range(0..50),
                n_rejected: rng.random_range(0..50),
            };
            let total = c.total() as f64;
            let cond = conditional_accuracy(&c).unwrap();
            let accepted_frac = c.n_accepted() as f64 / total;
            // cond_acc * coverage recovers the overall correct share.
            assert!((cond * accepted_frac - c.n_correct as f64 / total).abs() < 1e-12);
        }
    }

    #[test]
    fn tally_counts_each_outcome() {
        let decisions = vec![
            Decision::Accept(1),
            Decision::Accept(0),
            Decision::Reject,
            Decision::Accept(2),
        ];
        let truth = vec![1, 1, 1, 2];
        let c = OutcomeCounts::tally(&decisions, &truth).unwrap();
        assert_eq!(c, OutcomeCounts { n_correct: 2, n_error: 1, n_rejected: 1 });
        assert!(OutcomeCounts::tally(&decisions, &[1]).is_err());
    }
}
