//! Univariate exponential families used as node-conditional distributions.
//!
//! Every family is written in the canonical form
//! `p(x | eta) = exp(eta * B(x) + M(x) - D(eta))` with a scalar natural
//! parameter `eta`. The Gaussian uses a known scale `sigma`, so that
//! `B(x) = x / sigma` and `M(x) = -x^2 / (2 sigma^2)` with Lebesgue base
//! measure. Bernoulli variables live on `{-1, +1}`.

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::OnceLock;

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bound applied to natural parameters inside samplers and the Poisson
/// log-partition.
pub const ETA_CLAMP: f64 = 30.0;

/// Exponential conditionals with `eta` at or above this value are treated as
/// non-normalizable by the sampler.
pub const EXPONENTIAL_ETA_GUARD: f64 = -1e-8;

static CLAMP_EVENTS: AtomicU64 = AtomicU64::new(0);

/// Number of times a natural parameter has been clamped in this process.
pub fn clamp_events() -> u64 {
    CLAMP_EVENTS.load(Ordering::Relaxed)
}

fn clamp_eta(eta: f64) -> f64 {
    if eta.abs() > ETA_CLAMP {
        CLAMP_EVENTS.fetch_add(1, Ordering::Relaxed);
        eta.clamp(-ETA_CLAMP, ETA_CLAMP)
    } else {
        eta
    }
}

/// Node-conditional natural parameter `E_s(neighbors)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct NaturalParam(pub f64);

impl From<f64> for NaturalParam {
    fn from(eta: f64) -> Self {
        NaturalParam(eta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FamilyKind {
    Gaussian {
        sigma: f64,
    },
    BernoulliPm,
    Poisson,
    Exponential,
    #[serde(rename = "tpoisson")]
    TruncatedPoisson {
        r: u32,
    },
}

impl fmt::Display for FamilyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FamilyKind::Gaussian { sigma } => write!(f, "gaussian(sigma={sigma})"),
            FamilyKind::BernoulliPm => f.write_str("bernoulli_pm"),
            FamilyKind::Poisson => f.write_str("poisson"),
            FamilyKind::Exponential => f.write_str("exponential"),
            FamilyKind::TruncatedPoisson { r } => write!(f, "tpoisson(r={r})"),
        }
    }
}

impl FamilyKind {
    pub const STANDARD_GAUSSIAN: FamilyKind = FamilyKind::Gaussian { sigma: 1.0 };

    /// Short tag used in dataset headers.
    pub fn tag(&self) -> &'static str {
        match self {
            FamilyKind::Gaussian { .. } => "gaussian",
            FamilyKind::BernoulliPm => "bernoulli_pm",
            FamilyKind::Poisson => "poisson",
            FamilyKind::Exponential => "exponential",
            FamilyKind::TruncatedPoisson { .. } => "tpoisson",
        }
    }

    /// Checks the family's own parameters.
    pub fn validate(&self) -> Result<()> {
        match *self {
            FamilyKind::Gaussian { sigma } if !(sigma.is_finite() && sigma > 0.0) => Err(
                Error::Config(format!("gaussian sigma must be positive, got {sigma}")),
            ),
            FamilyKind::TruncatedPoisson { r } if r < 1 => Err(Error::Config(
                "tpoisson truncation level must be at least 1".into(),
            )),
            _ => Ok(()),
        }
    }

    pub fn domain_check(&self, x: f64) -> bool {
        match *self {
            FamilyKind::Gaussian { .. } => x.is_finite(),
            FamilyKind::BernoulliPm => x == 1.0 || x == -1.0,
            FamilyKind::Poisson => x.is_finite() && x >= 0.0 && x.fract() == 0.0,
            FamilyKind::Exponential => x.is_finite() && x >= 0.0,
            FamilyKind::TruncatedPoisson { r } => x >= 0.0 && x <= f64::from(r) && x.fract() == 0.0,
        }
    }

    pub fn check_domain(&self, x: f64) -> Result<()> {
        if self.domain_check(x) {
            Ok(())
        } else {
            Err(Error::Domain {
                family: *self,
                value: x,
            })
        }
    }

    /// True for families with a finite support.
    pub fn is_finite_domain(&self) -> bool {
        matches!(
            self,
            FamilyKind::BernoulliPm | FamilyKind::TruncatedPoisson { .. }
        )
    }

    /// Support of a finite-domain family, in increasing order.
    pub fn support(&self) -> Option<Vec<f64>> {
        match *self {
            FamilyKind::BernoulliPm => Some(vec![-1.0, 1.0]),
            FamilyKind::TruncatedPoisson { r } => Some((0..=r).map(f64::from).collect()),
            _ => None,
        }
    }

    /// Infimum and supremum of the sufficient statistic over the domain.
    pub fn stat_range(&self) -> (f64, f64) {
        match *self {
            FamilyKind::Gaussian { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            FamilyKind::BernoulliPm => (-1.0, 1.0),
            FamilyKind::Poisson | FamilyKind::Exponential => (0.0, f64::INFINITY),
            FamilyKind::TruncatedPoisson { r } => (0.0, f64::from(r)),
        }
    }

    /// Value used to start a Gibbs chain.
    pub fn initial_value(&self) -> f64 {
        match self {
            FamilyKind::BernoulliPm => -1.0,
            FamilyKind::Exponential => 1.0,
            _ => 0.0,
        }
    }

    /// `B(x)` without a domain check.
    #[inline]
    pub fn stat(&self, x: f64) -> f64 {
        match *self {
            FamilyKind::Gaussian { sigma } => x / sigma,
            _ => x,
        }
    }

    pub fn sufficient_stat(&self, x: f64) -> Result<f64> {
        self.check_domain(x)?;
        Ok(self.stat(x))
    }

    pub fn base_measure(&self, x: f64) -> Result<f64> {
        self.check_domain(x)?;
        Ok(self.base(x))
    }

    #[inline]
    pub(crate) fn base(&self, x: f64) -> f64 {
        match *self {
            FamilyKind::Gaussian { sigma } => -x * x / (2.0 * sigma * sigma),
            FamilyKind::BernoulliPm | FamilyKind::Exponential => 0.0,
            FamilyKind::Poisson | FamilyKind::TruncatedPoisson { .. } => -ln_factorial(x),
        }
    }

    fn require_normalizable(&self, eta: f64) -> Result<()> {
        let ok = eta.is_finite() && !(matches!(self, FamilyKind::Exponential) && eta >= 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::NonNormalizableConditional { family: *self, eta })
        }
    }

    /// Log-partition `D(eta)`.
    ///
    /// Above `ETA_CLAMP` the Poisson log-partition continues as its tangent
    /// line, which keeps it finite, convex and continuously differentiable.
    pub fn log_partition(&self, eta: NaturalParam) -> Result<f64> {
        let eta = eta.0;
        self.require_normalizable(eta)?;
        Ok(match *self {
            FamilyKind::Gaussian { .. } => 0.5 * eta * eta,
            FamilyKind::BernoulliPm => {
                let a = eta.abs();
                a + (-2.0 * a).exp().ln_1p()
            }
            FamilyKind::Poisson => {
                if eta > ETA_CLAMP {
                    CLAMP_EVENTS.fetch_add(1, Ordering::Relaxed);
                    ETA_CLAMP.exp() * (1.0 + eta - ETA_CLAMP)
                } else {
                    eta.exp()
                }
            }
            FamilyKind::Exponential => -(-eta).ln(),
            FamilyKind::TruncatedPoisson { r } => {
                let (log_z, _) = truncated_poisson_moments(r, eta);
                log_z
            }
        })
    }

    /// Mean of the sufficient statistic, `D'(eta)`.
    pub fn mean(&self, eta: NaturalParam) -> Result<f64> {
        let eta = eta.0;
        self.require_normalizable(eta)?;
        Ok(match *self {
            FamilyKind::Gaussian { .. } => eta,
            FamilyKind::BernoulliPm => eta.tanh(),
            FamilyKind::Poisson => eta.min(ETA_CLAMP).exp(),
            FamilyKind::Exponential => -1.0 / eta,
            FamilyKind::TruncatedPoisson { r } => truncated_poisson_moments(r, eta).1,
        })
    }

    /// `(D(eta), D'(eta))`, or `None` where the family is not normalizable.
    #[inline]
    pub(crate) fn partition_and_mean(&self, eta: f64) -> Option<(f64, f64)> {
        if !eta.is_finite() {
            return None;
        }
        Some(match *self {
            FamilyKind::Gaussian { .. } => (0.5 * eta * eta, eta),
            FamilyKind::BernoulliPm => {
                let a = eta.abs();
                (a + (-2.0 * a).exp().ln_1p(), eta.tanh())
            }
            FamilyKind::Poisson => {
                if eta > ETA_CLAMP {
                    CLAMP_EVENTS.fetch_add(1, Ordering::Relaxed);
                    let e = ETA_CLAMP.exp();
                    (e * (1.0 + eta - ETA_CLAMP), e)
                } else {
                    let e = eta.exp();
                    (e, e)
                }
            }
            FamilyKind::Exponential => {
                if eta >= 0.0 {
                    return None;
                }
                (-(-eta).ln(), -1.0 / eta)
            }
            FamilyKind::TruncatedPoisson { r } => truncated_poisson_moments(r, eta),
        })
    }

    /// Natural parameter whose mean statistic equals `m`, clamped to the range
    /// the samplers accept. Used for intercept-only fits.
    pub fn mean_to_natural(&self, m: f64) -> f64 {
        match *self {
            FamilyKind::Gaussian { .. } => m,
            FamilyKind::BernoulliPm => {
                if m >= 1.0 {
                    ETA_CLAMP
                } else if m <= -1.0 {
                    -ETA_CLAMP
                } else {
                    m.atanh().clamp(-ETA_CLAMP, ETA_CLAMP)
                }
            }
            FamilyKind::Poisson => {
                if m <= 0.0 {
                    -ETA_CLAMP
                } else {
                    m.ln().clamp(-ETA_CLAMP, ETA_CLAMP)
                }
            }
            FamilyKind::Exponential => {
                if m <= 0.0 {
                    -1e8
                } else {
                    (-1.0 / m).clamp(-1e8, -1e-8)
                }
            }
            FamilyKind::TruncatedPoisson { r } => {
                if m <= 0.0 {
                    return -ETA_CLAMP;
                }
                if m >= f64::from(r) {
                    return ETA_CLAMP;
                }
                let (mut lo, mut hi) = (-ETA_CLAMP, ETA_CLAMP);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if truncated_poisson_moments(r, mid).1 < m {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                0.5 * (lo + hi)
            }
        }
    }

    /// Negative log-likelihood of `x` and its derivative in `eta`.
    pub fn nll_grad(&self, eta: NaturalParam, x: f64) -> Result<(f64, f64)> {
        self.check_domain(x)?;
        let d = self.log_partition(eta)?;
        let dprime = self.mean(eta)?;
        let b = self.stat(x);
        Ok((d - eta.0 * b - self.base(x), dprime - b))
    }

    /// Draws one value from the family at natural parameter `eta`.
    pub fn sample<R: Rng + ?Sized>(&self, eta: NaturalParam, rng: &mut R) -> Result<f64> {
        let eta = eta.0;
        if !eta.is_finite() {
            return Err(Error::NonNormalizableConditional { family: *self, eta });
        }
        match *self {
            FamilyKind::Exponential => {
                if eta >= EXPONENTIAL_ETA_GUARD {
                    return Err(Error::NonNormalizableConditional { family: *self, eta });
                }
                let e: f64 = rng.sample(Exp1);
                Ok(e / -eta)
            }
            FamilyKind::Gaussian { sigma } => {
                let z: f64 = rng.sample(StandardNormal);
                Ok(sigma * clamp_eta(eta) + sigma * z)
            }
            FamilyKind::BernoulliPm => {
                let eta = clamp_eta(eta);
                let p_plus = 1.0 / (1.0 + (-2.0 * eta).exp());
                Ok(if rng.random::<f64>() < p_plus {
                    1.0
                } else {
                    -1.0
                })
            }
            FamilyKind::Poisson => Ok(sample_poisson(clamp_eta(eta).exp(), rng)),
            FamilyKind::TruncatedPoisson { r } => {
                let eta = clamp_eta(eta);
                let log_w: Vec<f64> = (0..=r)
                    .map(|k| eta * f64::from(k) - ln_factorial(f64::from(k)))
                    .collect();
                let max = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let w: Vec<f64> = log_w.iter().map(|l| (l - max).exp()).collect();
                let total: f64 = w.iter().sum();
                let u = rng.random::<f64>() * total;
                let mut acc = 0.0;
                for (k, wk) in w.iter().enumerate() {
                    acc += wk;
                    if u < acc {
                        return Ok(k as f64);
                    }
                }
                Ok(f64::from(r))
            }
        }
    }

    /// Log-density of `x` under the family at `eta`.
    pub fn log_density(&self, eta: NaturalParam, x: f64) -> Result<f64> {
        self.check_domain(x)?;
        Ok(eta.0 * self.stat(x) + self.base(x) - self.log_partition(eta)?)
    }
}

/// Log-normalizer and mean of the truncated Poisson on `{0..r}`.
fn truncated_poisson_moments(r: u32, eta: f64) -> (f64, f64) {
    let mut max = f64::NEG_INFINITY;
    let logs: Vec<f64> = (0..=r)
        .map(|k| {
            let l = eta * f64::from(k) - ln_factorial(f64::from(k));
            max = max.max(l);
            l
        })
        .collect();
    let mut z = 0.0;
    let mut m = 0.0;
    for (k, l) in logs.iter().enumerate() {
        let w = (l - max).exp();
        z += w;
        m += k as f64 * w;
    }
    (max + z.ln(), m / z)
}

const LN_FACT_TABLE: usize = 256;

/// `ln(x!)` for a nonnegative integer-valued `x`.
pub fn ln_factorial(x: f64) -> f64 {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    let table = TABLE.get_or_init(|| {
        let mut t = Vec::with_capacity(LN_FACT_TABLE);
        let mut acc = 0.0f64;
        t.push(0.0);
        for k in 1..LN_FACT_TABLE {
            acc += (k as f64).ln();
            t.push(acc);
        }
        t
    });
    if x < LN_FACT_TABLE as f64 {
        return table[x as usize];
    }
    // Stirling series for ln Gamma(x + 1).
    let n = x + 1.0;
    let inv = 1.0 / n;
    let inv2 = inv * inv;
    (n - 0.5) * n.ln() - n
        + 0.5 * (2.0 * std::f64::consts::PI).ln()
        + inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 * (1.0 / 1260.0 - inv2 / 1680.0)))
}

/// Poisson draw: inversion below rate 30, transformed rejection (PTRS) above.
fn sample_poisson<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> f64 {
    if rate < 30.0 {
        let u: f64 = rng.random();
        let mut p = (-rate).exp();
        let mut cdf = p;
        let mut k = 0.0;
        while u > cdf && k < 1000.0 {
            k += 1.0;
            p *= rate / k;
            cdf += p;
        }
        return k;
    }
    let smu = rate.sqrt();
    let b = 0.931 + 2.53 * smu;
    let a = -0.059 + 0.02483 * b;
    let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    let vr = 0.9277 - 3.6224 / (b - 2.0);
    let log_rate = rate.ln();
    loop {
        let u = rng.random::<f64>() - 0.5;
        let v: f64 = rng.random();
        let us = 0.5 - u.abs();
        let k = ((2.0 * a / us + b) * u + rate + 0.43).floor();
        if us >= 0.07 && v <= vr {
            return k;
        }
        if k < 0.0 || (us < 0.013 && v > us) {
            continue;
        }
        if v.ln() + inv_alpha.ln() - (a / (us * us) + b).ln()
            <= -rate + k * log_rate - ln_factorial(k)
        {
            return k;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const ALL: [FamilyKind; 5] = [
        FamilyKind::Gaussian { sigma: 1.5 },
        FamilyKind::BernoulliPm,
        FamilyKind::Poisson,
        FamilyKind::Exponential,
        FamilyKind::TruncatedPoisson { r: 4 },
    ];

    fn eta_grid(f: &FamilyKind) -> Vec<f64> {
        match f {
            FamilyKind::Exponential => vec![-3.0, -1.0, -0.5, -0.1],
            _ => vec![-2.0, -1.0, -0.5, 0.0, 0.3, 1.0, 2.5],
        }
    }

    #[test]
    fn sufficient_stat_examples() {
        assert_eq!(
            FamilyKind::Gaussian { sigma: 2.0 }
                .sufficient_stat(3.0)
                .unwrap(),
            1.5
        );
        assert_eq!(FamilyKind::BernoulliPm.sufficient_stat(-1.0).unwrap(), -1.0);
        assert_eq!(FamilyKind::Poisson.sufficient_stat(4.0).unwrap(), 4.0);
        assert!(FamilyKind::Poisson.sufficient_stat(-1.0).is_err());
        assert!(FamilyKind::BernoulliPm.sufficient_stat(0.0).is_err());
        assert!(FamilyKind::TruncatedPoisson { r: 3 }
            .sufficient_stat(4.0)
            .is_err());
        assert!(FamilyKind::Poisson.sufficient_stat(2.5).is_err());
    }

    #[test]
    fn base_measure_examples() {
        assert_eq!(
            FamilyKind::STANDARD_GAUSSIAN.base_measure(2.0).unwrap(),
            -2.0
        );
        let m = FamilyKind::Poisson.base_measure(3.0).unwrap();
        assert!((m + 6f64.ln()).abs() < 1e-12);
        assert_eq!(FamilyKind::BernoulliPm.base_measure(1.0).unwrap(), 0.0);
        assert_eq!(FamilyKind::Exponential.base_measure(2.0).unwrap(), 0.0);
    }

    #[test]
    fn log_partition_examples() {
        let d = FamilyKind::BernoulliPm
            .log_partition(NaturalParam(0.0))
            .unwrap();
        assert!((d - 2f64.ln()).abs() < 1e-15);
        assert_eq!(
            FamilyKind::Exponential
                .log_partition(NaturalParam(-1.0))
                .unwrap(),
            0.0
        );
        let d = FamilyKind::TruncatedPoisson { r: 2 }
            .log_partition(NaturalParam(0.0))
            .unwrap();
        assert!((d - 2.5f64.ln()).abs() < 1e-14);
        assert!(matches!(
            FamilyKind::Exponential.log_partition(NaturalParam(0.0)),
            Err(Error::NonNormalizableConditional { .. })
        ));
    }

    #[test]
    fn nll_grad_examples() {
        let (v, g) = FamilyKind::BernoulliPm
            .nll_grad(NaturalParam(0.0), 1.0)
            .unwrap();
        assert!((v - 2f64.ln()).abs() < 1e-15 && (g + 1.0).abs() < 1e-15);
        let (v, g) = FamilyKind::Poisson
            .nll_grad(NaturalParam(0.0), 2.0)
            .unwrap();
        assert!((v - (1.0 + 2f64.ln())).abs() < 1e-14 && (g + 1.0).abs() < 1e-15);
        let (v, g) = FamilyKind::STANDARD_GAUSSIAN
            .nll_grad(NaturalParam(1.0), 1.0)
            .unwrap();
        assert!(v.abs() < 1e-15 && g.abs() < 1e-15);
    }

    #[test]
    fn mean_matches_finite_difference_of_log_partition() {
        let h = 1e-5;
        for f in ALL {
            for eta in eta_grid(&f) {
                let up = f.log_partition(NaturalParam(eta + h)).unwrap();
                let dn = f.log_partition(NaturalParam(eta - h)).unwrap();
                let fd = (up - dn) / (2.0 * h);
                let an = f.mean(NaturalParam(eta)).unwrap();
                let rel = (fd - an).abs() / an.abs().max(1e-8);
                assert!(
                    rel < 1e-6 || (fd - an).abs() < 1e-9,
                    "{f} eta={eta}: {fd} vs {an}"
                );
            }
        }
    }

    #[test]
    fn nll_derivative_matches_finite_difference() {
        let h = 1e-5;
        for f in ALL {
            let xs: Vec<f64> = match f {
                FamilyKind::BernoulliPm => vec![-1.0, 1.0],
                FamilyKind::Gaussian { .. } => vec![-1.3, 0.0, 2.2],
                FamilyKind::Exponential => vec![0.0, 0.7, 3.0],
                _ => vec![0.0, 1.0, 3.0],
            };
            for eta in eta_grid(&f) {
                for &x in &xs {
                    let (_, g) = f.nll_grad(NaturalParam(eta), x).unwrap();
                    let up = f.nll_grad(NaturalParam(eta + h), x).unwrap().0;
                    let dn = f.nll_grad(NaturalParam(eta - h), x).unwrap().0;
                    let fd = (up - dn) / (2.0 * h);
                    let err = (fd - g).abs() / g.abs().max(1.0);
                    assert!(err < 1e-5, "{f} eta={eta} x={x}: {fd} vs {g}");
                }
            }
        }
    }

    #[test]
    fn discrete_pmfs_sum_to_one() {
        for eta in [-2.0, -0.5, 0.0, 1.0, 2.0] {
            for f in [
                FamilyKind::BernoulliPm,
                FamilyKind::TruncatedPoisson { r: 6 },
            ] {
                let total: f64 = f
                    .support()
                    .unwrap()
                    .iter()
                    .map(|&x| f.log_density(NaturalParam(eta), x).unwrap().exp())
                    .sum();
                assert!((total - 1.0).abs() < 1e-9);
            }
            // Poisson: sum until the remaining tail is negligible.
            let f = FamilyKind::Poisson;
            let mut total = 0.0;
            let mut k = 0.0;
            loop {
                let p = f.log_density(NaturalParam(eta), k).unwrap().exp();
                total += p;
                k += 1.0;
                if k > eta.exp() + 5.0 && p < 1e-14 {
                    break;
                }
            }
            assert!((total - 1.0).abs() < 1e-9, "eta={eta} total={total}");
        }
    }

    #[test]
    fn bernoulli_saturates_under_clamp() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let before = clamp_events();
        for _ in 0..1000 {
            let x = FamilyKind::BernoulliPm
                .sample(NaturalParam(1e6), &mut rng)
                .unwrap();
            assert_eq!(x, 1.0);
        }
        assert!(clamp_events() >= before + 1000);
    }

    #[test]
    fn gaussian_sample_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 100_000;
        let f = FamilyKind::STANDARD_GAUSSIAN;
        let mean: f64 = (0..n)
            .map(|_| f.sample(NaturalParam(0.0), &mut rng).unwrap())
            .sum::<f64>()
            / n as f64;
        assert!(mean.abs() < 0.02);
    }

    #[test]
    fn truncated_poisson_empirical_pmf() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 100_000;
        let f = FamilyKind::TruncatedPoisson { r: 2 };
        let mut counts = [0usize; 3];
        for _ in 0..n {
            counts[f.sample(NaturalParam(0.0), &mut rng).unwrap() as usize] += 1;
        }
        for (c, p) in counts.iter().zip([0.4, 0.4, 0.2]) {
            assert!((*c as f64 / n as f64 - p).abs() < 0.01);
        }
    }

    #[test]
    fn sample_means_match_mean_function() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 100_000;
        for f in ALL {
            for eta in [-1.0, 0.0, -0.5] {
                if matches!(f, FamilyKind::Exponential) && eta >= 0.0 {
                    continue;
                }
                let draws: Vec<f64> = (0..n)
                    .map(|_| f.stat(f.sample(NaturalParam(eta), &mut rng).unwrap()))
                    .collect();
                let m = draws.iter().sum::<f64>() / n as f64;
                let var = draws.iter().map(|d| (d - m).powi(2)).sum::<f64>() / (n - 1) as f64;
                let se = (var / n as f64).sqrt();
                let target = f.mean(NaturalParam(eta)).unwrap();
                assert!(
                    (m - target).abs() < 4.0 * se,
                    "{f} eta={eta}: {m} vs {target}"
                );
            }
        }
    }

    #[test]
    fn large_rate_poisson_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 50_000;
        let rate: f64 = 200.0;
        let draws: Vec<f64> = (0..n)
            .map(|_| {
                FamilyKind::Poisson
                    .sample(NaturalParam(rate.ln()), &mut rng)
                    .unwrap()
            })
            .collect();
        let m = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|d| (d - m).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((m - rate).abs() < 4.0 * (rate / n as f64).sqrt());
        assert!((var / rate - 1.0).abs() < 0.05);
    }

    #[test]
    fn exponential_guard_aborts() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        assert!(FamilyKind::Exponential
            .sample(NaturalParam(0.0), &mut rng)
            .is_err());
        assert!(FamilyKind::Exponential
            .sample(NaturalParam(-1e-9), &mut rng)
            .is_err());
    }

    #[test]
    fn mean_to_natural_inverts_mean() {
        for f in ALL {
            for eta in eta_grid(&f) {
                let m = f.mean(NaturalParam(eta)).unwrap();
                let back = f.mean_to_natural(m);
                assert!((back - eta).abs() < 1e-6, "{f} eta={eta} back={back}");
            }
        }
    }

    #[test]
    fn ln_factorial_stirling_branch_is_continuous() {
        let mut exact = 0.0;
        for k in 1..400 {
            exact += (k as f64).ln();
            assert!((ln_factorial(k as f64) - exact).abs() < 1e-9 * exact.max(1.0));
        }
    }

    #[test]
    fn family_params_validated() {
        assert!(FamilyKind::Gaussian { sigma: 0.0 }.validate().is_err());
        assert!(FamilyKind::TruncatedPoisson { r: 0 }.validate().is_err());
        assert!(FamilyKind::Gaussian { sigma: 2.0 }.validate().is_ok());
    }
}
