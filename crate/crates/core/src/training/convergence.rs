//! Loss normalization, the three-condition convergence test, and the
//! bounded convergence measure.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Constants of the convergence test and measure.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergenceCriteria {
    /// Recent normalized losses must average below this; also the slope of
    /// the neutral reference trace in the measure.
    pub cutoff: f64,
    /// Required drop from the early mean to the recent mean.
    pub drop: f64,
    pub var_threshold: f64,
    /// Fraction of steps in each of the early and recent windows.
    pub window_frac: f64,
    /// Ceiling for normalized losses; NaN and ±∞ map here.
    pub max_loss: f64,
}

impl Default for ConvergenceCriteria {
    fn default() -> Self {
        ConvergenceCriteria {
            cutoff: 0.4,
            drop: 0.1,
            var_threshold: 0.01,
            window_frac: 0.05,
            max_loss: 10.0,
        }
    }
}

impl ConvergenceCriteria {
    pub fn validate(&self) -> Result<()> {
        if !(self.window_frac > 0.0 && self.window_frac < 0.5) {
            return Err(Error::Config(format!(
                "window_frac must lie in (0, 0.5), got {}",
                self.window_frac
            )));
        }
        if !(self.cutoff > 0.0) || !(self.max_loss > self.cutoff) || !self.max_loss.is_finite() {
            return Err(Error::Config(format!(
                "need 0 < cutoff < max_loss, got cutoff {} and max_loss {}",
                self.cutoff, self.max_loss
            )));
        }
        if !(self.drop >= 0.0) || !(self.var_threshold >= 0.0) {
            return Err(Error::Config(
                "drop and var_threshold must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Divides every loss by the first, clamps to `[0, max_loss]`, and maps
/// non-finite values (or a non-finite or non-positive first loss) to
/// `max_loss`. The output has `n_steps` entries; missing steps are `max_loss`.
pub fn normalize_losses(raw: &[f64], n_steps: usize, max_loss: f64) -> Vec<f64> {
    let first = raw.first().copied().unwrap_or(f64::NAN);
    let usable_first = first.is_finite() && first > 0.0;
    (0..n_steps)
        .map(|i| match raw.get(i) {
            Some(&l) if usable_first && l.is_finite() => (l / first).clamp(0.0, max_loss),
            _ => max_loss,
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceCheck {
    pub converged: bool,
    pub early_mean: f64,
    pub recent_mean: f64,
    pub recent_variance: f64,
}

/// Smallest trace the three-condition test accepts.
pub const MIN_TRACE_LEN: usize = 20;

/// Applies the three conditions to a normalized trace: recent mean below the
/// cutoff, at least `drop` below the early mean, and recent (population)
/// variance below the threshold.
pub fn check_convergence(
    normalized: &[f64],
    criteria: &ConvergenceCriteria,
) -> Result<ConvergenceCheck> {
    let n = normalized.len();
    if n < MIN_TRACE_LEN {
        return Err(Error::Config(format!(
            "convergence check needs at least {MIN_TRACE_LEN} steps, got {n}"
        )));
    }
    let w = ((criteria.window_frac * n as f64).floor() as usize).max(1);
    let early = &normalized[..w];
    let recent = &normalized[n - w..];
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let early_mean = mean(early);
    let recent_mean = mean(recent);
    let recent_variance = recent
        .iter()
        .map(|x| (x - recent_mean) * (x - recent_mean))
        .sum::<f64>()
        / w as f64;
    let converged = recent_mean < criteria.cutoff
        && early_mean - recent_mean >= criteria.drop
        && recent_variance < criteria.var_threshold;
    Ok(ConvergenceCheck {
        converged,
        early_mean,
        recent_mean,
        recent_variance,
    })
}

/// Signed square-root distance of the trace's area from the neutral trace
/// `1 + (N−1)·cutoff`, scaled so the ideal trace `[1, 0, 0, …]` scores 1 and
/// the all-`max_loss` tail approaches −1. Clamped to `[−1, 1]`.
pub fn convergence_measure(
    normalized: &[f64],
    converged: bool,
    cutoff: f64,
    max_loss: f64,
) -> Result<f64> {
    let n = normalized.len();
    if n < 2 {
        return Err(Error::Config(format!(
            "convergence measure needs at least 2 steps, got {n}"
        )));
    }
    let steps = (n - 1) as f64;
    // Area minus the neutral area 1 + (N−1)·cutoff. The leading 1 is taken
    // off the first entry rather than added to the sum, so the anchor traces
    // [1, cutoff, …] and [1, 0, …] land exactly on 0 and 1.
    let tail: f64 = normalized[1..].iter().sum();
    let excess = (normalized[0] - 1.0) + (tail - steps * cutoff);
    let mu = if converged && excess <= 0.0 {
        (-excess / (steps * cutoff)).sqrt()
    } else {
        // A non-converged trace below the neutral area has no divergence to
        // report; it scores 0 rather than the square root of a negative.
        -(excess.max(0.0) / (1.0 + steps * (max_loss - cutoff))).sqrt()
    };
    let mu = mu.clamp(-1.0, 1.0);
    Ok(if mu == 0.0 { 0.0 } else { mu })
}

/// Outcome of one training run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub converged: bool,
    pub mu: f64,
    pub early_mean: f64,
    pub recent_mean: f64,
    pub recent_variance: f64,
}

pub fn evaluate(normalized: &[f64], criteria: &ConvergenceCriteria) -> Result<ConvergenceReport> {
    let check = check_convergence(normalized, criteria)?;
    let mu = convergence_measure(
        normalized,
        check.converged,
        criteria.cutoff,
        criteria.max_loss,
    )?;
    Ok(ConvergenceReport {
        converged: check.converged,
        mu,
        early_mean: check.early_mean,
        recent_mean: check.recent_mean,
        recent_variance: check.recent_variance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn crit() -> ConvergenceCriteria {
        ConvergenceCriteria::default()
    }

    #[test]
    fn normalization_starts_at_one_and_clamps() {
        let l = normalize_losses(&[4.0, 2.0, 80.0, f64::NAN, f64::INFINITY], 7, 10.0);
        assert_eq!(l, vec![1.0, 0.5, 10.0, 10.0, 10.0, 10.0, 10.0]);
        assert_eq!(
            normalize_losses(&[f64::NAN, 1.0], 2, 10.0),
            vec![10.0, 10.0]
        );
    }

    #[test]
    fn constant_trace_not_converged() {
        let c = check_convergence(&[1.0; 100], &crit()).unwrap();
        assert!(!c.converged);
        assert_eq!(c.recent_mean, 1.0);
    }

    #[test]
    fn clean_drop_converges() {
        let mut l = vec![1.0; 20];
        l[10..].fill(0.2);
        let c = check_convergence(&l, &crit()).unwrap();
        assert!(c.converged);
        assert_eq!(
            (c.early_mean, c.recent_mean, c.recent_variance),
            (1.0, 0.2, 0.0)
        );
    }

    #[test]
    fn small_drop_fails() {
        let mut l = vec![0.40; 20];
        l[19] = 0.35;
        let c = check_convergence(&l, &crit()).unwrap();
        assert!((c.early_mean - c.recent_mean - 0.05).abs() < 1e-12);
        assert!(!c.converged);
    }

    #[test]
    fn noisy_tail_fails_variance() {
        let mut l = vec![1.0; 40];
        l[38] = 0.0;
        l[39] = 0.3;
        // window 2: mean 0.15, variance 0.0225
        assert!(!check_convergence(&l, &crit()).unwrap().converged);
    }

    #[test]
    fn window_size_floor_with_minimum_one() {
        let mut l = vec![1.0; 39];
        l[38] = 0.1;
        // floor(0.05 · 39) = 1, so only the last entry is recent.
        let c = check_convergence(&l, &crit()).unwrap();
        assert_eq!(c.recent_mean, 0.1);
        assert!(c.converged);
    }

    #[test]
    fn short_trace_is_config_error() {
        assert!(matches!(
            check_convergence(&[1.0; 19], &crit()),
            Err(Error::Config(_))
        ));
        assert!(convergence_measure(&[1.0], true, 0.4, 10.0).is_err());
    }

    #[test]
    fn measure_hand_examples() {
        let mu = convergence_measure(&[1.0, 0.5, 0.1], true, 0.4, 10.0).unwrap();
        assert!((mu - 0.5).abs() < 1e-12);
        let mu = convergence_measure(&[1.0, 0.4, 0.4], true, 0.4, 10.0).unwrap();
        assert_eq!(mu, 0.0);
        let mu = convergence_measure(&[1.0, 2.0, 3.0], false, 0.4, 5.0).unwrap();
        assert!((mu + (4.2f64 / 10.2).sqrt()).abs() < 1e-12);
        assert!((mu + 0.64169).abs() < 1e-5);
    }

    #[test]
    fn ideal_trace_is_one() {
        let mut l = vec![0.0; 50];
        l[0] = 1.0;
        assert_eq!(convergence_measure(&l, true, 0.4, 10.0).unwrap(), 1.0);
    }

    #[test]
    fn fully_diverged_trace_near_minus_one() {
        let l = normalize_losses(&[4.6, f64::NAN], 2000, 10.0);
        let mu = convergence_measure(&l, false, 0.4, 10.0).unwrap();
        assert!((-1.0..-0.99).contains(&mu), "{mu}");
    }

    #[test]
    fn quiet_nonconverged_trace_scores_zero() {
        let mu = convergence_measure(&[1.0, 0.1, 0.1], false, 0.4, 10.0).unwrap();
        assert_eq!(mu, 0.0);
        assert!(mu.is_sign_positive());
    }

    #[test]
    fn criteria_validation() {
        assert!(crit().validate().is_ok());
        for bad in [
            ConvergenceCriteria {
                window_frac: 0.5,
                ..crit()
            },
            ConvergenceCriteria {
                window_frac: 0.0,
                ..crit()
            },
            ConvergenceCriteria {
                max_loss: 0.3,
                ..crit()
            },
        ] {
            assert!(bad.validate().is_err());
        }
    }
}
