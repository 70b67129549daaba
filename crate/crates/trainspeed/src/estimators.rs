//! Training-speed estimators, baseline estimators, the PAC-Bayes bound
//! estimate, and the effective-training-budget procedure.
//!
//! All formulas index epochs from 1. Scores for the TSE family, SoVL and
//! TLmini are lower-is-better; VAccES is higher-is-better. Reports carry the
//! raw score plus its [`Orientation`] rather than a negated value.

use serde::Serialize;

use crate::curves::LearningCurve;
use crate::error::{Error, Result};
use crate::stats::Orientation;

/// Recommended defaults: window E=1, decay gamma=0.999, overfit threshold 0.1.
pub const DEFAULT_WINDOW: usize = 1;
pub const DEFAULT_GAMMA: f64 = 0.999;
pub const DEFAULT_OVERFIT_THRESHOLD: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EstimatorKind {
    Tse,
    TseE { e: usize },
    TseEma { gamma: f64 },
    Sovl,
    VaccEs,
    TlMini,
    PacBayes { a: f64, b: f64, delta: f64 },
}

/// An estimator plus the training budget T it is evaluated at.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimatorSpec {
    pub kind: EstimatorKind,
    pub t: usize,
}

/// TLmini scores one architecture with a vector (one entry per minibatch
/// index); every other estimator is scalar.
#[derive(Debug, Clone, PartialEq)]
pub enum Score {
    Scalar(f64),
    PerMinibatch(Vec<f64>),
}

impl Score {
    pub fn scalar(&self) -> f64 {
        match self {
            Score::Scalar(v) => *v,
            Score::PerMinibatch(v) => v.iter().sum::<f64>() / v.len() as f64,
        }
    }
}

impl EstimatorSpec {
    pub fn new(kind: EstimatorKind, t: usize) -> Result<Self> {
        let spec = EstimatorSpec { kind, t };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.t == 0 {
            return Err(Error::invalid("T must be >= 1"));
        }
        match &self.kind {
            EstimatorKind::TseE { e } => {
                if *e == 0 || *e > self.t {
                    return Err(Error::invalid(format!(
                        "E={e} must satisfy 1 <= E <= T={}",
                        self.t
                    )));
                }
            }
            EstimatorKind::TseEma { gamma } => {
                if !(*gamma > 0.0 && *gamma <= 1.0) {
                    return Err(Error::invalid(format!("gamma={gamma} outside (0,1]")));
                }
            }
            EstimatorKind::PacBayes { a, b, delta } => {
                if a >= b {
                    return Err(Error::invalid(format!("need a < b, got a={a}, b={b}")));
                }
                if !(*delta > 0.0 && *delta <= 1.0) {
                    return Err(Error::invalid(format!("delta={delta} outside (0,1]")));
                }
            }
            _ => {}
        }
        Ok(())
    }

    pub fn orientation(&self) -> Orientation {
        match self.kind {
            EstimatorKind::VaccEs => Orientation::HigherIsBetter,
            _ => Orientation::LowerIsBetter,
        }
    }

    pub fn name(&self) -> String {
        match &self.kind {
            EstimatorKind::Tse => format!("tse@T={}", self.t),
            EstimatorKind::TseE { e } => format!("tse-e@T={},E={e}", self.t),
            EstimatorKind::TseEma { gamma } => format!("tse-ema@T={},g={gamma}", self.t),
            EstimatorKind::Sovl => format!("sovl@T={}", self.t),
            EstimatorKind::VaccEs => format!("vacc-es@T={}", self.t),
            EstimatorKind::TlMini => format!("tlmini@T={}", self.t),
            EstimatorKind::PacBayes { a, b, delta } => {
                format!("pacbayes@T={},a={a},b={b},d={delta}", self.t)
            }
        }
    }

    /// Same estimator evaluated at a different budget.
    pub fn with_t(&self, t: usize) -> Result<EstimatorSpec> {
        EstimatorSpec::new(self.kind.clone(), t)
    }

    /// Parses CLI strings such as `tse@T=10`, `tse-e@T=10,E=1`,
    /// `tse-ema@T=10,g=0.999`, `sovl@T=10`, `vacc-es@T=10`, `tlmini@T=1`,
    /// `pacbayes@a=0,b=1,d=0.1`.
    pub fn parse(s: &str) -> Result<EstimatorSpec> {
        let (head, args) = match s.split_once('@') {
            Some((h, a)) => (h, a),
            None => (s, ""),
        };
        let mut t: Option<usize> = None;
        let mut e: Option<usize> = None;
        let mut gamma: Option<f64> = None;
        let mut a: Option<f64> = None;
        let mut b: Option<f64> = None;
        let mut delta: Option<f64> = None;
        for pair in args.split(',').filter(|p| !p.is_empty()) {
            let (key, value) = pair
                .split_once('=')
                .ok_or_else(|| Error::invalid(format!("bad estimator argument '{pair}'")))?;
            let bad = |what: &str| Error::invalid(format!("bad {what} value '{value}'"));
            match key {
                "T" => t = Some(value.parse().map_err(|_| bad("T"))?),
                "E" => e = Some(value.parse().map_err(|_| bad("E"))?),
                "g" | "gamma" => gamma = Some(value.parse().map_err(|_| bad("gamma"))?),
                "a" => a = Some(value.parse().map_err(|_| bad("a"))?),
                "b" => b = Some(value.parse().map_err(|_| bad("b"))?),
                "d" | "delta" => delta = Some(value.parse().map_err(|_| bad("delta"))?),
                other => return Err(Error::invalid(format!("unknown estimator key '{other}'"))),
            }
        }
        // default budget: the smallest feasible T (covers "tse-e@E=5" used
        // as a grid template, where every concrete T comes from with_t)
        let t = t.unwrap_or_else(|| e.unwrap_or(1).max(1));
        let kind = match head {
            "tse" => EstimatorKind::Tse,
            "tse-e" => EstimatorKind::TseE {
                e: e.unwrap_or(DEFAULT_WINDOW),
            },
            "tse-ema" => EstimatorKind::TseEma {
                gamma: gamma.unwrap_or(DEFAULT_GAMMA),
            },
            "sovl" => EstimatorKind::Sovl,
            "vacc-es" => EstimatorKind::VaccEs,
            "tlmini" => EstimatorKind::TlMini,
            "pacbayes" => EstimatorKind::PacBayes {
                a: a.unwrap_or(0.0),
                b: b.ok_or_else(|| Error::invalid("pacbayes requires b=<upper>"))?,
                delta: delta.unwrap_or(0.1),
            },
            other => {
                return Err(Error::invalid(format!(
                    "unknown estimator '{other}' (expected tse, tse-e, tse-ema, sovl, vacc-es, tlmini, pacbayes)"
                )))
            }
        };
        EstimatorSpec::new(kind, t)
    }

    pub fn score(&self, curve: &LearningCurve) -> Result<Score> {
        match &self.kind {
            EstimatorKind::Tse => tse(curve, self.t).map(Score::Scalar),
            EstimatorKind::TseE { e } => tse_e(curve, self.t, *e).map(Score::Scalar),
            EstimatorKind::TseEma { gamma } => tse_ema(curve, self.t, *gamma).map(Score::Scalar),
            EstimatorKind::Sovl => sovl(curve, self.t).map(Score::Scalar),
            EstimatorKind::VaccEs => vacc_es(curve, self.t).map(Score::Scalar),
            EstimatorKind::TlMini => tlmini_scores(curve, self.t).map(Score::PerMinibatch),
            EstimatorKind::PacBayes { a, b, delta } => {
                let b_count = curve.batches_per_epoch();
                let sum_nll: f64 = curve.minibatch_train_losses[..check_t(curve, self.t)?]
                    .iter()
                    .flatten()
                    .sum();
                let n = self.t * b_count;
                pac_bayes_bound(sum_nll, n, *a, *b, *delta).map(Score::Scalar)
            }
        }
    }
}

fn check_t(curve: &LearningCurve, t: usize) -> Result<usize> {
    if t < 1 || t > curve.t_end() {
        return Err(Error::invalid(format!(
            "T={t} out of range [1, {}]",
            curve.t_end()
        )));
    }
    Ok(t)
}

/// TSE: sum over the first T epochs of the mean minibatch training loss.
pub fn tse(curve: &LearningCurve, t: usize) -> Result<f64> {
    let t = check_t(curve, t)?;
    Ok(curve.epoch_sums()[..t].iter().sum())
}

/// TSE-E: the same sum restricted to the last E epochs before T.
pub fn tse_e(curve: &LearningCurve, t: usize, e: usize) -> Result<f64> {
    let t = check_t(curve, t)?;
    if e < 1 || e > t {
        return Err(Error::invalid(format!("E={e} out of range [1, {t}]")));
    }
    Ok(curve.epoch_sums()[t - e..t].iter().sum())
}

/// TSE-EMA: exponentially decayed sum, weight gamma^(T-t) on epoch t.
pub fn tse_ema(curve: &LearningCurve, t: usize, gamma: f64) -> Result<f64> {
    let t = check_t(curve, t)?;
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::invalid(format!("gamma={gamma} outside (0,1]")));
    }
    let sums = curve.epoch_sums();
    let mut total = 0.0;
    for (idx, &s) in sums[..t].iter().enumerate() {
        // epoch index is idx+1, weight gamma^(T - epoch)
        total += gamma.powi((t - idx - 1) as i32) * s;
    }
    Ok(total)
}

/// Sum of per-epoch validation losses up to T.
pub fn sovl(curve: &LearningCurve, t: usize) -> Result<f64> {
    let t = check_t(curve, t)?;
    let val_loss = curve
        .epoch_val_loss
        .as_ref()
        .ok_or(Error::ValidationLossesUnavailable)?;
    Ok(val_loss[..t].iter().sum())
}

/// Validation accuracy at epoch T (early stopping baseline).
pub fn vacc_es(curve: &LearningCurve, t: usize) -> Result<f64> {
    let t = check_t(curve, t)?;
    Ok(curve.epoch_val_acc[t - 1])
}

/// The B minibatch losses of epoch T, verbatim. The evaluation layer computes
/// one rank correlation per minibatch index and averages the B values.
pub fn tlmini_scores(curve: &LearningCurve, t: usize) -> Result<Vec<f64>> {
    let t = check_t(curve, t)?;
    Ok(curve.minibatch_train_losses[t - 1].clone())
}

/// PAC-Bayes bound estimate `a + c[1 - e^a (e^{-sum_nll} delta)^{1/n}]`
/// with `c = (b-a)/(1 - e^{a-b})`, for losses in [a, b].
pub fn pac_bayes_bound(sum_nll: f64, n: usize, a: f64, b: f64, delta: f64) -> Result<f64> {
    if a >= b {
        return Err(Error::invalid(format!("need a < b, got a={a}, b={b}")));
    }
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::invalid(format!("delta={delta} outside (0,1]")));
    }
    if n == 0 {
        return Err(Error::invalid("n must be positive"));
    }
    if sum_nll < n as f64 * a {
        return Err(Error::invalid(format!(
            "sum_nll={sum_nll} below n*a={}",
            n as f64 * a
        )));
    }
    let c = (b - a) / (1.0 - (a - b).exp());
    // (e^{-sum_nll} delta)^{1/n} computed in log space to avoid underflow
    let root = ((delta.ln() - sum_nll) / n as f64).exp();
    Ok(a + c * (1.0 - a.exp() * root))
}

/// Effective training budget: 0.9 times the earliest epoch at which any
/// curve's mean epoch loss crosses the overfit threshold, floored and
/// clamped to at least 1. Curves that never cross count as t_end.
pub fn effective_budget(
    curves: &[&LearningCurve],
    threshold: f64,
    t_end: usize,
) -> Result<usize> {
    if curves.is_empty() {
        return Err(Error::invalid("effective_budget needs at least one curve"));
    }
    if threshold <= 0.0 {
        return Err(Error::invalid(format!("threshold={threshold} must be > 0")));
    }
    let mut min_t_o = usize::MAX;
    for curve in curves {
        let sums = curve.epoch_sums();
        let t_o = sums
            .iter()
            .position(|&s| s < threshold)
            .map(|idx| idx + 1)
            .unwrap_or(t_end);
        min_t_o = min_t_o.min(t_o);
    }
    Ok(((0.9 * min_t_o as f64).floor() as usize).max(1))
}
