//! Singular (fast diffusion) nonlinearities: strictly increasing `φ` with
//! `φ(0) = 0`, a concavity parameter `A` such that `φ^{1+A}` is concave, and
//! a two-sided power envelope `c s^{m−1} ≤ φ′(s) ≤ C s^{m−1}` with
//! `0 < m < 1`.
//!
//! The inverse `β = φ⁻¹` and its derivative are computed by monotone
//! bracketing plus Newton polish, so perturbed families need no analytic
//! inverse.

use crate::error::Error;
use crate::Result;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "family")]
pub enum NonlinearityFamily {
    /// `φ(s) = s^m`.
    PurePower,
    /// `φ(s) = s^m (1 + ε s / (1 + s))`: same power behaviour near zero,
    /// amplitude `(1+ε)` at infinity. The concrete general-nonlinearity
    /// witness.
    PerturbedPower { epsilon: f64 },
}

/// C¹-matched linear continuation above a threshold, produced by
/// [`NonlinearitySpec::modify_for_boundedness`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearContinuation {
    pub threshold: f64,
    pub value: f64,
    pub slope: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NonlinearitySpec {
    family: NonlinearityFamily,
    m: f64,
    /// Concavity parameter `A`.
    concavity_a: f64,
    /// Envelope constants `(c, C)` for `φ′`.
    envelope: (f64, f64),
    /// `c₂ = lim_{s→0⁺} φ(s)/s^m`, the power coefficient entering the limit
    /// equation of the asymptotic analysis.
    small_s_coefficient: f64,
    /// Accumulated rescale `λ = k^α`: the spec evaluates
    /// `φ_λ(s) = λ^m φ_fam(s/λ)`.
    scale: f64,
    linear_above: Option<LinearContinuation>,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct HphiReport {
    pub increasing_ok: bool,
    pub concavity_ok: bool,
    pub envelope_ok: bool,
}

impl HphiReport {
    pub fn all_ok(&self) -> bool {
        self.increasing_ok && self.concavity_ok && self.envelope_ok
    }
}

fn check_m(m: f64) -> Result<()> {
    if !(m > 0.0 && m < 1.0) {
        return Err(Error::InvalidNonlinearity(format!(
            "exponent m must lie in (0, 1): the fast-diffusion hypotheses fail outside, got {m}"
        )));
    }
    Ok(())
}

impl NonlinearitySpec {
    /// Pure power with the maximal admissible concavity parameter
    /// `A = (1−m)/m`.
    pub fn pure_power(m: f64) -> Result<Self> {
        check_m(m)?;
        Ok(NonlinearitySpec {
            family: NonlinearityFamily::PurePower,
            m,
            concavity_a: (1.0 - m) / m,
            envelope: (m, m),
            small_s_coefficient: 1.0,
            scale: 1.0,
            linear_above: None,
        })
    }

    pub fn perturbed_power(m: f64, epsilon: f64) -> Result<Self> {
        check_m(m)?;
        if !(0.0..1.0).contains(&epsilon) {
            return Err(Error::InvalidNonlinearity(format!(
                "perturbation amplitude must lie in [0, 1), got {epsilon}"
            )));
        }
        // sup of s((m+1)+ms)/(1+s)² over s ≥ 0 is (1+m)²/4, attained at
        // s = (1+m)/(1−m); this makes the upper envelope constant exact.
        let upper = m + epsilon * (1.0 + m) * (1.0 + m) / 4.0;
        Ok(NonlinearitySpec {
            family: NonlinearityFamily::PerturbedPower { epsilon },
            m,
            // conservative default, inside the admissible region established
            // numerically by validate_hphi
            concavity_a: 0.6 * (1.0 - m) / m,
            envelope: (m, upper),
            small_s_coefficient: 1.0,
            scale: 1.0,
            linear_above: None,
        })
    }

    /// Override the concavity parameter. Any positive value is accepted;
    /// whether `φ^{1+A}` is actually concave is the business of
    /// [`NonlinearitySpec::validate_hphi`].
    pub fn with_concavity(mut self, a: f64) -> Result<Self> {
        if !(a > 0.0) {
            return Err(Error::InvalidNonlinearity(format!(
                "concavity parameter A must be positive, got {a}"
            )));
        }
        self.concavity_a = a;
        Ok(self)
    }

    pub fn family(&self) -> NonlinearityFamily {
        self.family
    }

    pub fn m(&self) -> f64 {
        self.m
    }

    pub fn concavity_a(&self) -> f64 {
        self.concavity_a
    }

    /// Envelope constants `(c, C)` with `c s^{m−1} ≤ φ′(s) ≤ C s^{m−1}`.
    pub fn envelope(&self) -> (f64, f64) {
        self.envelope
    }

    /// `lim_{s→0⁺} φ(s)/s^m`.
    pub fn small_s_coefficient(&self) -> f64 {
        self.small_s_coefficient
    }

    pub fn linear_above(&self) -> Option<LinearContinuation> {
        self.linear_above
    }

    fn family_phi(&self, s: f64) -> f64 {
        match self.family {
            NonlinearityFamily::PurePower => s.powf(self.m),
            NonlinearityFamily::PerturbedPower { epsilon } => {
                s.powf(self.m) * (1.0 + epsilon * s / (1.0 + s))
            }
        }
    }

    fn family_phi_prime(&self, s: f64) -> f64 {
        let m = self.m;
        match self.family {
            NonlinearityFamily::PurePower => m * s.powf(m - 1.0),
            NonlinearityFamily::PerturbedPower { epsilon } => {
                let denom = (1.0 + s) * (1.0 + s);
                m * s.powf(m - 1.0) + epsilon * s.powf(m) * ((m + 1.0) + m * s) / denom
            }
        }
    }

    /// `φ(s)` for `s ≥ 0`.
    pub fn phi(&self, s: f64) -> Result<f64> {
        if !(s >= 0.0) {
            return Err(Error::InvalidNonlinearity(format!(
                "phi requires a nonnegative argument, got {s}"
            )));
        }
        Ok(self.phi_unchecked(s))
    }

    fn phi_unchecked(&self, s: f64) -> f64 {
        if let Some(lc) = self.linear_above {
            if s > lc.threshold {
                return lc.value + lc.slope * (s - lc.threshold);
            }
        }
        if s == 0.0 {
            return 0.0;
        }
        self.scale.powf(self.m) * self.family_phi(s / self.scale)
    }

    /// `φ′(s)` for `s ≥ 0`; returns `+∞` at `s = 0` (singular diffusion).
    pub fn phi_prime(&self, s: f64) -> Result<f64> {
        if !(s >= 0.0) {
            return Err(Error::InvalidNonlinearity(format!(
                "phi_prime requires a nonnegative argument, got {s}"
            )));
        }
        Ok(self.phi_prime_unchecked(s))
    }

    fn phi_prime_unchecked(&self, s: f64) -> f64 {
        if let Some(lc) = self.linear_above {
            if s > lc.threshold {
                return lc.slope;
            }
        }
        if s == 0.0 {
            return f64::INFINITY;
        }
        self.scale.powf(self.m - 1.0) * self.family_phi_prime(s / self.scale)
    }

    /// `β(w) = φ⁻¹(w)` for `w ≥ 0`, to relative accuracy 1e−12.
    pub fn beta(&self, w: f64) -> Result<f64> {
        if !(w >= 0.0) {
            return Err(Error::InvalidNonlinearity(format!(
                "beta requires a nonnegative argument, got {w}"
            )));
        }
        Ok(self.beta_unchecked(w))
    }

    fn beta_unchecked(&self, w: f64) -> f64 {
        if w == 0.0 {
            return 0.0;
        }
        if let Some(lc) = self.linear_above {
            if w > lc.value {
                return lc.threshold + (w - lc.value) / lc.slope;
            }
        }
        // The pure-power inverse is an excellent starting point for every
        // family (exact for pure powers, within O(ε) otherwise).
        let mut s = (w / self.small_s_coefficient).powf(1.0 / self.m);
        if !s.is_finite() || s <= 0.0 {
            s = w;
        }
        let tol = 1e-13 * w;
        // establish a bracket [lo, hi] with φ(lo) ≤ w ≤ φ(hi)
        let mut lo = 0.0f64;
        let mut hi = s.max(f64::MIN_POSITIVE);
        let mut guard = 0;
        while self.phi_unchecked(hi) < w {
            lo = hi;
            hi *= 2.0;
            guard += 1;
            if guard > 1100 {
                break;
            }
        }
        let mut s = 0.5 * (lo + hi).min(2.0 * s.max(lo));
        if !(s > lo && s < hi) {
            s = 0.5 * (lo + hi);
        }
        for _ in 0..200 {
            let f = self.phi_unchecked(s) - w;
            if f.abs() <= tol {
                return s;
            }
            if f > 0.0 {
                hi = s;
            } else {
                lo = s;
            }
            let d = self.phi_prime_unchecked(s);
            let mut next = s - f / d;
            if !(next > lo && next < hi) || !next.is_finite() {
                next = 0.5 * (lo + hi); // bisection fallback keeps the bracket
            }
            if next == s {
                return s;
            }
            s = next;
        }
        s
    }

    /// `β′(w) = 1/φ′(β(w))`; zero at `w = 0`.
    pub fn beta_prime(&self, w: f64) -> Result<f64> {
        if !(w >= 0.0) {
            return Err(Error::InvalidNonlinearity(format!(
                "beta_prime requires a nonnegative argument, got {w}"
            )));
        }
        Ok(self.beta_prime_unchecked(w))
    }

    fn beta_prime_unchecked(&self, w: f64) -> f64 {
        if w == 0.0 {
            return 0.0;
        }
        1.0 / self.phi_prime_unchecked(self.beta_unchecked(w))
    }

    // Odd extensions used internally by the implicit solver, which may probe
    // slightly negative iterates: |φ(s)| = φ(|s|) sign(s).

    pub(crate) fn phi_signed(&self, s: f64) -> f64 {
        if s >= 0.0 {
            self.phi_unchecked(s)
        } else {
            -self.phi_unchecked(-s)
        }
    }

    pub(crate) fn beta_signed(&self, w: f64) -> f64 {
        if w >= 0.0 {
            self.beta_unchecked(w)
        } else {
            -self.beta_unchecked(-w)
        }
    }

    pub(crate) fn beta_prime_signed(&self, w: f64) -> f64 {
        self.beta_prime_unchecked(w.abs())
    }

    /// Rescaled nonlinearity `φ_k(s) = k^{mα} φ(s / k^α)`. Shares the
    /// envelope constants of the original, independently of `k`.
    pub fn rescale(&self, k: f64, alpha: f64) -> Result<NonlinearitySpec> {
        if !(k >= 1.0) {
            return Err(Error::InvalidNonlinearity(format!(
                "rescale factor k must be ≥ 1, got {k}"
            )));
        }
        let lambda = k.powf(alpha);
        let mut out = *self;
        out.scale = self.scale * lambda;
        out.linear_above = self.linear_above.map(|lc| LinearContinuation {
            threshold: lc.threshold * lambda,
            value: lc.value * lambda.powf(self.m),
            slope: lc.slope * lambda.powf(self.m - 1.0),
        });
        Ok(out)
    }

    /// Replace `φ` above `u_max` by its tangent line at `u_max`, keeping the
    /// function C¹. Used to treat bounded solutions as if the envelope held
    /// globally.
    pub fn modify_for_boundedness(&self, u_max: f64) -> Result<NonlinearitySpec> {
        if !(u_max > 0.0) {
            return Err(Error::InvalidNonlinearity(format!(
                "u_max must be positive, got {u_max}"
            )));
        }
        let mut out = *self;
        out.linear_above = Some(LinearContinuation {
            threshold: u_max,
            value: self.phi_unchecked(u_max),
            slope: self.phi_prime_unchecked(u_max),
        });
        Ok(out)
    }

    /// Sampled validation of the standing nonlinearity hypotheses on a
    /// log-spaced grid of `s ∈ [1e−8, 1e8]` (truncated at the linear
    /// continuation threshold, where the power hypotheses intentionally stop
    /// holding).
    pub fn validate_hphi(&self, sample_budget: usize) -> HphiReport {
        let count = sample_budget.max(200);
        let (mut s_min, mut s_max) = (1e-8f64, 1e8f64);
        if let Some(lc) = self.linear_above {
            s_max = s_max.min(lc.threshold);
            s_min = s_min.min(s_max * 1e-16);
        }
        let log_min = s_min.ln();
        let log_max = s_max.ln();
        let grid: Vec<f64> = (0..count)
            .map(|i| (log_min + (log_max - log_min) * i as f64 / (count - 1) as f64).exp())
            .collect();

        let mut increasing_ok = true;
        let mut prev = 0.0f64;
        for &s in &grid {
            let v = self.phi_unchecked(s);
            if v <= prev {
                increasing_ok = false;
            }
            prev = v;
        }

        let one_plus_a = 1.0 + self.concavity_a;
        let g = |s: f64| self.phi_unchecked(s).powf(one_plus_a);
        let mut concavity_ok = true;
        for &s in &grid {
            let delta = 1e-3 * s;
            let second = g(s - delta) + g(s + delta) - 2.0 * g(s);
            if second > 1e-11 * g(s).abs() {
                concavity_ok = false;
                break;
            }
        }

        let (c_lo, c_hi) = self.envelope;
        let mut envelope_ok = true;
        for &s in &grid {
            let v = self.phi_prime_unchecked(s) * s.powf(1.0 - self.m);
            if v < c_lo * (1.0 - 1e-9) || v > c_hi * (1.0 + 1e-9) {
                envelope_ok = false;
                break;
            }
        }

        HphiReport {
            increasing_ok,
            concavity_ok,
            envelope_ok,
        }
    }
}
