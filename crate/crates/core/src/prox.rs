//! Proximal maps `prox_{ρg}(x) = argmin_y g(y) + ‖y − x‖² / (2ρ)` for the
//! nonsmooth terms: separable `ℓ_p^p` (`0 < p ≤ 1`) and a box indicator.

use crate::error::{LbsError, Result};
use crate::numerics::DenseVector;

pub trait ProxFn: Send + Sync {
    fn name(&self) -> String;

    /// Extended-real value; `+∞` outside the domain.
    fn value(&self, x: &DenseVector) -> f64;

    fn prox(&self, x: &DenseVector, rho: f64) -> Result<DenseVector>;

    /// An element of `∂g(u)` at `u = prox_{ρg}(x)`, taken as the prox
    /// residual `(x − u) / ρ`.
    fn subgrad_at_prox(&self, x: &DenseVector, rho: f64, u: &DenseVector) -> Result<DenseVector> {
        check_rho(rho)?;
        x.zip_map(u, |xi, ui| (xi - ui) / rho)
    }
}

fn check_rho(rho: f64) -> Result<()> {
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(LbsError::Domain(format!(
            "prox step must be positive and finite, got {rho}"
        )));
    }
    Ok(())
}

fn check_p(p: f64) -> Result<()> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(LbsError::Domain(format!("exponent p must lie in (0, 1], got {p}")));
    }
    Ok(())
}

/// Magnitude below which `prox_lp_scalar` returns exactly zero (`p < 1`):
/// `β + ρ p β^{p−1}` with `β = (2ρ(1−p))^{1/(2−p)}`. For `p = 1` this is `ρ`.
pub fn lp_threshold(rho: f64, p: f64) -> f64 {
    if p >= 1.0 {
        return rho;
    }
    let beta = lp_nonzero_floor(rho, p);
    beta + rho * p * beta.powf(p - 1.0)
}

/// Lower bound `(2ρ(1−p))^{1/(2−p)}` on the magnitude of any nonzero output.
pub fn lp_nonzero_floor(rho: f64, p: f64) -> f64 {
    (2.0 * rho * (1.0 - p)).powf(1.0 / (2.0 - p))
}

const NEWTON_TOL: f64 = 1e-15;
const NEWTON_MAX_ITERS: usize = 100;

fn scalar_objective(y: f64, x: f64, rho: f64, p: f64) -> f64 {
    y.abs().powf(p) + (y - x) * (y - x) / (2.0 * rho)
}

fn lp_prox_unchecked(x: f64, rho: f64, p: f64, tol: f64, max_iters: usize) -> f64 {
    let a = x.abs();
    if p >= 1.0 {
        return x.signum() * (a - rho).max(0.0);
    }
    // Ties at the threshold resolve to zero.
    if a <= lp_threshold(rho, p) {
        return 0.0;
    }
    // Stationarity on (β, a]: φ(y) = y − a + ρ p y^{p−1} = 0. φ is increasing
    // and convex there, so Newton from y = a descends monotonically onto the
    // root; the bracket catches rounding trouble.
    let (mut lo, mut hi) = (lp_nonzero_floor(rho, p), a);
    let mut y = a;
    for _ in 0..max_iters {
        let phi = y - a + rho * p * y.powf(p - 1.0);
        if phi > 0.0 {
            hi = y;
        } else {
            lo = y;
        }
        let dphi = 1.0 - rho * p * (1.0 - p) * y.powf(p - 2.0);
        let mut next = y - phi / dphi;
        if !(dphi > 0.0) || !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        let step = (next - y).abs();
        y = next;
        if step <= tol * y || hi - lo <= tol * hi {
            break;
        }
    }
    if scalar_objective(y, a, rho, p) < scalar_objective(0.0, a, rho, p) {
        x.signum() * y
    } else {
        0.0
    }
}

/// Global minimizer of `|y|^p + (y − x)² / (2ρ)`.
pub fn prox_lp_scalar(x: f64, rho: f64, p: f64) -> Result<f64> {
    check_rho(rho)?;
    check_p(p)?;
    Ok(lp_prox_unchecked(x, rho, p, NEWTON_TOL, NEWTON_MAX_ITERS))
}

/// Elementwise [`prox_lp_scalar`].
pub fn prox_lp(x: &DenseVector, rho: f64, p: f64) -> Result<DenseVector> {
    check_rho(rho)?;
    check_p(p)?;
    Ok(x.map(|v| lp_prox_unchecked(v, rho, p, NEWTON_TOL, NEWTON_MAX_ITERS)))
}

/// Componentwise clamp to `[0, 1]`.
pub fn project_box(x: &DenseVector) -> DenseVector {
    x.map(|v| v.clamp(0.0, 1.0))
}

/// `(x − u) / ρ`.
pub fn subgrad_at_prox(x: &DenseVector, rho: f64, u: &DenseVector) -> Result<DenseVector> {
    check_rho(rho)?;
    x.zip_map(u, |xi, ui| (xi - ui) / rho)
}

/// `g(x) = weight · Σ |x_i|^p`.
#[derive(Debug, Clone, PartialEq)]
pub struct LpPower {
    p: f64,
    weight: f64,
    newton_tol: f64,
    max_newton_iters: usize,
}

impl LpPower {
    pub fn new(p: f64) -> Result<Self> {
        check_p(p)?;
        Ok(Self {
            p,
            weight: 1.0,
            newton_tol: NEWTON_TOL,
            max_newton_iters: NEWTON_MAX_ITERS,
        })
    }

    pub fn with_weight(mut self, weight: f64) -> Result<Self> {
        if !(weight > 0.0) || !weight.is_finite() {
            return Err(LbsError::Domain(format!(
                "regularizer weight must be positive, got {weight}"
            )));
        }
        self.weight = weight;
        Ok(self)
    }

    pub fn with_newton(mut self, tol: f64, max_iters: usize) -> Self {
        self.newton_tol = tol;
        self.max_newton_iters = max_iters;
        self
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }
}

impl ProxFn for LpPower {
    fn name(&self) -> String {
        format!("l{}", self.p)
    }

    fn value(&self, x: &DenseVector) -> f64 {
        let s: f64 = if self.p == 1.0 {
            x.data().iter().map(|v| v.abs()).sum()
        } else {
            x.data().iter().map(|v| v.abs().powf(self.p)).sum()
        };
        self.weight * s
    }

    fn prox(&self, x: &DenseVector, rho: f64) -> Result<DenseVector> {
        check_rho(rho)?;
        let r = rho * self.weight;
        Ok(x.map(|v| lp_prox_unchecked(v, r, self.p, self.newton_tol, self.max_newton_iters)))
    }
}

/// Indicator of `{x : lo ≤ x_i ≤ hi}`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxIndicator {
    pub lo: f64,
    pub hi: f64,
}

impl BoxIndicator {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo <= hi) {
            return Err(LbsError::Domain(format!("empty box [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi })
    }

    pub fn unit() -> Self {
        Self { lo: 0.0, hi: 1.0 }
    }
}

impl ProxFn for BoxIndicator {
    fn name(&self) -> String {
        format!("box[{}, {}]", self.lo, self.hi)
    }

    fn value(&self, x: &DenseVector) -> f64 {
        if x.data().iter().all(|v| (self.lo..=self.hi).contains(v)) {
            0.0
        } else {
            f64::INFINITY
        }
    }

    fn prox(&self, x: &DenseVector, rho: f64) -> Result<DenseVector> {
        check_rho(rho)?;
        Ok(x.map(|v| v.clamp(self.lo, self.hi)))
    }
}

/// `g ≡ 0`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Zero;

impl ProxFn for Zero {
    fn name(&self) -> String {
        "zero".into()
    }

    fn value(&self, _x: &DenseVector) -> f64 {
        0.0
    }

    fn prox(&self, x: &DenseVector, rho: f64) -> Result<DenseVector> {
        check_rho(rho)?;
        Ok(x.clone())
    }
}
