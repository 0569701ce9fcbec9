//! Kernel families `J(x, y)` for the stable-like operator, their validation,
//! and the rescaled kernels used in the self-similar asymptotics.
//!
//! Every family is comparable to the fractional-Laplacian kernel
//! `μ_{N,σ} |x−y|^{−(N+σ)}`: the ellipticity constant Λ of the two-sided
//! envelope is derived from the family parameters rather than user supplied,
//! so a spec can never be inconsistent.

use crate::error::Error;
use crate::Result;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Normalization constant `μ_{N,σ} = 2^{σ−1} σ Γ((N+σ)/2) / (π^{N/2} Γ(1−σ/2))`
/// for which the pure power kernel realizes the fractional Laplacian
/// `(−Δ)^{σ/2}` with Fourier symbol `|ξ|^σ`.
pub fn fractional_laplacian_constant(dim: usize, sigma: f64) -> f64 {
    let n = dim as f64;
    2.0f64.powf(sigma - 1.0) * sigma * libm::tgamma(0.5 * (n + sigma))
        / (std::f64::consts::PI.powf(0.5 * n) * libm::tgamma(1.0 - 0.5 * sigma))
}

/// Modulation profile for the convolution-type family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modulation {
    /// `cos(|z|) / (1 + |z|²)`: even in `z`, vanishes at infinity, so the
    /// far-field limit of `|z|^{N+σ} J` exists and equals `μ_{N,σ}`.
    DampedCosine,
    /// `cos(|z|)`: even in `z` but with no far-field limit; useful for
    /// exercising the envelope without the asymptotics hypotheses.
    Cosine,
}

impl Modulation {
    fn eval(&self, r: f64) -> f64 {
        match self {
            Modulation::DampedCosine => r.cos() / (1.0 + r * r),
            Modulation::Cosine => r.cos(),
        }
    }

    fn has_far_field_limit(&self) -> bool {
        matches!(self, Modulation::DampedCosine)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "family")]
pub enum KernelFamily {
    /// `J = μ_{N,σ} |x−y|^{−(N+σ)}`, the fractional Laplacian kernel.
    FractionalPower,
    /// `J = μ_{N,σ} |x−y|^{−(N+σ)} (1 + ε g(x−y))` with an even modulation
    /// `g`; convolution type, so valid for every σ ∈ (0, 2).
    ConvolutionModulated { epsilon: f64, modulation: Modulation },
    /// `J = μ_{N,σ} |x−y|^{−(N+σ)} (1 + ε q(x) q(y))` with
    /// `q(x) = Π_d sin(x_d)`: swap symmetric but not even in `z = y − x`,
    /// hence admissible only for σ < 1.
    MidpointGeneral { epsilon: f64 },
}

/// A validated kernel specification.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    dim: usize,
    sigma: f64,
    family: KernelFamily,
    /// Accumulated spatial rescale factor `s = k^{α/N}`; the rescaled kernel
    /// is `J_k(x, y) = s^{N+σ} J(s x, s y)`.
    scale: f64,
}

/// Report of the sampled hypothesis validation.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct HjReport {
    pub swap_symmetry_ok: bool,
    pub z_evenness_ok: bool,
    pub envelope_ok: bool,
    /// max over samples of `J |z|^{N+σ} / μ_{N,σ}` and of its reciprocal.
    pub worst_ratio: f64,
}

impl HjReport {
    /// Whether the sampled kernel satisfies the standing hypotheses for the
    /// given order: evenness in `z` is only required when σ ≥ 1.
    pub fn admissible(&self, sigma: f64) -> bool {
        self.swap_symmetry_ok && self.envelope_ok && (sigma < 1.0 || self.z_evenness_ok)
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma > 0.0 && sigma < 2.0) {
        return Err(Error::InvalidKernel(format!(
            "sigma must lie in the open interval (0, 2), got {sigma}"
        )));
    }
    Ok(())
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(0.0..1.0).contains(&epsilon) {
        return Err(Error::InvalidKernel(format!(
            "modulation amplitude must lie in [0, 1), got {epsilon}"
        )));
    }
    Ok(())
}

impl KernelSpec {
    pub fn fractional_power(dim: usize, sigma: f64) -> Result<Self> {
        check_sigma(sigma)?;
        Ok(KernelSpec {
            dim,
            sigma,
            family: KernelFamily::FractionalPower,
            scale: 1.0,
        })
    }

    pub fn convolution_modulated(
        dim: usize,
        sigma: f64,
        epsilon: f64,
        modulation: Modulation,
    ) -> Result<Self> {
        check_sigma(sigma)?;
        check_epsilon(epsilon)?;
        Ok(KernelSpec {
            dim,
            sigma,
            family: KernelFamily::ConvolutionModulated {
                epsilon,
                modulation,
            },
            scale: 1.0,
        })
    }

    pub fn midpoint_general(dim: usize, sigma: f64, epsilon: f64) -> Result<Self> {
        check_sigma(sigma)?;
        check_epsilon(epsilon)?;
        if sigma >= 1.0 {
            // Constructing non-convolution kernels that are even in z jointly
            // with swap symmetry is too restrictive; only convolution-type
            // families are offered for σ ≥ 1.
            return Err(Error::InvalidKernel(format!(
                "the midpoint_general family requires sigma < 1, got {sigma}"
            )));
        }
        Ok(KernelSpec {
            dim,
            sigma,
            family: KernelFamily::MidpointGeneral { epsilon },
            scale: 1.0,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn mu(&self) -> f64 {
        fractional_laplacian_constant(self.dim, self.sigma)
    }

    /// Ellipticity constant of the envelope, derived from the family.
    pub fn lambda(&self) -> f64 {
        match self.family {
            KernelFamily::FractionalPower => 1.0,
            KernelFamily::ConvolutionModulated { epsilon, .. }
            | KernelFamily::MidpointGeneral { epsilon } => 1.0 / (1.0 - epsilon),
        }
    }

    /// Far-field limit `c₁ = lim_{|x−y|→∞} |x−y|^{N+σ} J(x, y)` when it
    /// exists for the family.
    pub fn c1(&self) -> Option<f64> {
        match self.family {
            KernelFamily::FractionalPower => Some(self.mu()),
            KernelFamily::ConvolutionModulated { modulation, .. } => {
                modulation.has_far_field_limit().then(|| self.mu())
            }
            KernelFamily::MidpointGeneral { .. } => None,
        }
    }

    /// Whether `J(x, y)` depends on `x − y` only.
    pub fn is_convolution(&self) -> bool {
        !matches!(self.family, KernelFamily::MidpointGeneral { .. })
    }

    fn q(&self, x: [f64; 2]) -> f64 {
        match self.dim {
            1 => x[0].sin(),
            _ => x[0].sin() * x[1].sin(),
        }
    }

    /// The bounded modulation factor `J / (μ |z|^{−(N+σ)})` at the (already
    /// rescaled) points. Lies in `[1 − ε, 1 + ε]`.
    fn factor(&self, xs: [f64; 2], ys: [f64; 2], r_scaled: f64) -> f64 {
        match self.family {
            KernelFamily::FractionalPower => 1.0,
            KernelFamily::ConvolutionModulated {
                epsilon,
                modulation,
            } => 1.0 + epsilon * modulation.eval(r_scaled),
            KernelFamily::MidpointGeneral { epsilon } => {
                1.0 + epsilon * self.q(xs) * self.q(ys)
            }
        }
    }

    /// Evaluate the kernel. Errors at coincident points, where the kernel is
    /// singular.
    pub fn eval(&self, x: [f64; 2], y: [f64; 2]) -> Result<f64> {
        let r = match self.dim {
            1 => (x[0] - y[0]).abs(),
            _ => (x[0] - y[0]).hypot(x[1] - y[1]),
        };
        if r == 0.0 {
            return Err(Error::SingularKernelPoint);
        }
        Ok(self.eval_at_distance(x, y, r))
    }

    /// Same as [`KernelSpec::eval`] with the Euclidean (or torus) distance
    /// supplied by the caller. `r` must be positive.
    pub fn eval_at_distance(&self, x: [f64; 2], y: [f64; 2], r: f64) -> f64 {
        debug_assert!(r > 0.0);
        let s = self.scale;
        let base = self.mu() * r.powf(-(self.dim as f64 + self.sigma));
        let xs = [s * x[0], s * x[1]];
        let ys = [s * y[0], s * y[1]];
        base * self.factor(xs, ys, s * r)
    }

    /// Rescaled kernel `J_k(x,y) = k^{α(N+σ)/N} J(k^{α/N} x, k^{α/N} y)`.
    /// Composes exactly: rescaling by `k₁` then `k₂` equals rescaling by
    /// `k₁ k₂`.
    pub fn rescale(&self, k: f64, alpha: f64) -> Result<KernelSpec> {
        if !(k >= 1.0) {
            return Err(Error::InvalidKernel(format!(
                "rescale factor k must be ≥ 1, got {k}"
            )));
        }
        let mut out = *self;
        out.scale = self.scale * k.powf(alpha / self.dim as f64);
        Ok(out)
    }

    /// Sampled validation of the standing kernel hypotheses: swap symmetry,
    /// evenness in `z`, and the two-sided Λ-envelope. Deterministic for a
    /// fixed seed.
    pub fn validate_hj(&self, sample_budget: usize, seed: u64) -> HjReport {
        let budget = sample_budget.max(1000);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mu = self.mu();
        let lambda = self.lambda();
        let tol = 1e-12;

        let mut swap_ok = true;
        let mut even_ok = true;
        let mut worst_ratio = 1.0f64;
        for _ in 0..budget {
            let x = self.sample_point(&mut rng);
            let z = self.sample_offset(&mut rng);
            let y = [x[0] + z[0], x[1] + z[1]];
            let y_neg = [x[0] - z[0], x[1] - z[1]];
            let j_xy = self.eval(x, y).expect("offset is nonzero");
            let j_yx = self.eval(y, x).expect("offset is nonzero");
            let j_neg = self.eval(x, y_neg).expect("offset is nonzero");
            if (j_xy - j_yx).abs() > tol * j_xy.abs().max(j_yx.abs()) {
                swap_ok = false;
            }
            if (j_xy - j_neg).abs() > tol * j_xy.abs().max(j_neg.abs()) {
                even_ok = false;
            }
            let r = match self.dim {
                1 => z[0].abs(),
                _ => z[0].hypot(z[1]),
            };
            let ratio = j_xy * r.powf(self.dim as f64 + self.sigma) / mu;
            worst_ratio = worst_ratio.max(ratio).max(1.0 / ratio);
        }
        HjReport {
            swap_symmetry_ok: swap_ok,
            z_evenness_ok: even_ok,
            envelope_ok: worst_ratio <= lambda * (1.0 + 1e-12),
            worst_ratio,
        }
    }

    fn sample_point(&self, rng: &mut ChaCha8Rng) -> [f64; 2] {
        let mut p = [0.0; 2];
        for v in p.iter_mut().take(self.dim) {
            *v = rng.random_range(-3.0..3.0);
        }
        p
    }

    fn sample_offset(&self, rng: &mut ChaCha8Rng) -> [f64; 2] {
        // log-uniform radius over six decades, uniform direction
        let r = 10f64.powf(rng.random_range(-3.0..3.0));
        match self.dim {
            1 => {
                let sign = if rng.random_range(0..2) == 0 { -1.0 } else { 1.0 };
                [sign * r, 0.0]
            }
            _ => {
                let theta = rng.random_range(0.0..std::f64::consts::TAU);
                [r * theta.cos(), r * theta.sin()]
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn normalization_constant_known_values() {
        // N = 1, σ = 1 reduces to 1/π.
        assert_relative_eq!(
            fractional_laplacian_constant(1, 1.0),
            std::f64::consts::FRAC_1_PI,
            max_relative = 1e-14
        );
        // σ → symmetric sanity: constant is positive throughout (0,2)
        for sigma in [0.1, 0.5, 1.0, 1.5, 1.9] {
            assert!(fractional_laplacian_constant(1, sigma) > 0.0);
            assert!(fractional_laplacian_constant(2, sigma) > 0.0);
        }
    }

    #[test]
    fn eval_pure_power_unit_distance() {
        let k = KernelSpec::fractional_power(1, 1.0).unwrap();
        let v = k.eval([0.0, 0.0], [1.0, 0.0]).unwrap();
        assert_relative_eq!(v, 0.3183098861837907, max_relative = 1e-12);
    }

    #[test]
    fn modulated_with_zero_amplitude_degenerates_to_pure_power() {
        let a = KernelSpec::fractional_power(1, 0.7).unwrap();
        let b = KernelSpec::convolution_modulated(1, 0.7, 0.0, Modulation::Cosine).unwrap();
        for t in [0.01, 0.5, 3.0, 40.0] {
            let x = [0.3, 0.0];
            let y = [0.3 + t, 0.0];
            assert_eq!(a.eval(x, y).unwrap(), b.eval(x, y).unwrap());
        }
    }

    #[test]
    fn coincident_points_error() {
        let k = KernelSpec::fractional_power(2, 0.5).unwrap();
        assert!(matches!(
            k.eval([1.0, 2.0], [1.0, 2.0]),
            Err(Error::SingularKernelPoint)
        ));
    }

    #[test]
    fn sigma_and_epsilon_are_validated() {
        assert!(KernelSpec::fractional_power(1, 2.0).is_err());
        assert!(KernelSpec::fractional_power(1, 0.0).is_err());
        assert!(KernelSpec::convolution_modulated(1, 1.0, 1.0, Modulation::Cosine).is_err());
        // non-convolution kernels are only offered below σ = 1
        assert!(KernelSpec::midpoint_general(1, 1.2, 0.5).is_err());
        assert!(KernelSpec::midpoint_general(1, 0.5, 0.5).is_ok());
    }

    #[test]
    fn validate_pure_power() {
        let k = KernelSpec::fractional_power(1, 1.0).unwrap();
        let r = k.validate_hj(2000, 7);
        assert!(r.swap_symmetry_ok && r.z_evenness_ok && r.envelope_ok);
        assert_relative_eq!(r.worst_ratio, 1.0, max_relative = 1e-12);
        assert!(r.admissible(1.0));
    }

    #[test]
    fn validate_modulated_half() {
        let k =
            KernelSpec::convolution_modulated(1, 1.3, 0.5, Modulation::DampedCosine).unwrap();
        let r = k.validate_hj(4000, 11);
        assert!(r.swap_symmetry_ok && r.z_evenness_ok && r.envelope_ok);
        assert!(r.worst_ratio <= k.lambda() + 1e-9, "worst {}", r.worst_ratio);
        assert!(r.admissible(1.3));
    }

    #[test]
    fn validate_midpoint_general() {
        let k = KernelSpec::midpoint_general(1, 0.5, 0.3).unwrap();
        let r = k.validate_hj(4000, 13);
        assert!(r.swap_symmetry_ok);
        assert!(!r.z_evenness_ok);
        assert!(r.envelope_ok);
        // accepted because σ < 1
        assert!(r.admissible(0.5));
        assert!(!r.admissible(1.5));
    }

    #[test]
    fn rescale_identity_and_invariance() {
        let k = KernelSpec::fractional_power(1, 0.8).unwrap();
        let k1 = k.rescale(1.0, 1.6).unwrap();
        let k9 = k.rescale(9.0, 1.6).unwrap();
        let x = [0.2, 0.0];
        let y = [1.7, 0.0];
        // k = 1 is the identity; the pure power is exactly scale invariant
        assert_eq!(k.eval(x, y).unwrap(), k1.eval(x, y).unwrap());
        assert_relative_eq!(
            k.eval(x, y).unwrap(),
            k9.eval(x, y).unwrap(),
            max_relative = 1e-13
        );
        assert!(k.rescale(0.5, 1.6).is_err());
    }

    #[test]
    fn rescale_composes() {
        let k =
            KernelSpec::convolution_modulated(1, 0.9, 0.4, Modulation::DampedCosine).unwrap();
        let alpha = 1.3;
        let a = k.rescale(3.0, alpha).unwrap().rescale(5.0, alpha).unwrap();
        let b = k.rescale(15.0, alpha).unwrap();
        for t in [0.3, 1.0, 7.0] {
            let x = [0.1, 0.0];
            let y = [0.1 + t, 0.0];
            assert_relative_eq!(a.eval(x, y).unwrap(), b.eval(x, y).unwrap(), max_relative = 1e-12);
        }
    }

    #[test]
    fn rescaled_modulated_kernel_approaches_far_field_limit() {
        let k =
            KernelSpec::convolution_modulated(1, 1.0, 0.5, Modulation::DampedCosine).unwrap();
        let alpha = 4.0 / 3.0;
        let kk = k.rescale(1e6, alpha).unwrap();
        let c1 = k.c1().unwrap();
        let v = kk.eval([0.0, 0.0], [1.0, 0.0]).unwrap();
        assert!(
            (v - c1).abs() / c1 < 1e-3,
            "rescaled value {v} vs c1 {c1}"
        );
    }

    #[test]
    fn far_field_deviation_decreases_along_k() {
        let k =
            KernelSpec::convolution_modulated(1, 1.0, 0.5, Modulation::DampedCosine).unwrap();
        let alpha = 4.0 / 3.0;
        let c1 = k.c1().unwrap();
        let sup_dev = |spec: &KernelSpec| -> f64 {
            let mut worst = 0.0f64;
            for i in 1..200 {
                let z = 1.0 + 0.37 * i as f64; // |z| ≥ K = 1
                let x = [0.13, 0.0];
                let j = spec.eval(x, [x[0] + z, 0.0]).unwrap();
                worst = worst.max((j * z.powf(1.0 + 1.0) - c1).abs());
            }
            worst
        };
        let d10 = sup_dev(&k.rescale(10.0, alpha).unwrap());
        let d1k = sup_dev(&k.rescale(1e3, alpha).unwrap());
        let d1m = sup_dev(&k.rescale(1e6, alpha).unwrap());
        assert!(d1k < d10 && d1m < d1k, "{d10} {d1k} {d1m}");
    }
}
