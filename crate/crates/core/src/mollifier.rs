//! The compact polynomial mollifier ρ(x) ∝ (1 − |x|²)³ on the closed unit ball
//! and its rescalings ρ_r(x) = r^{-d} ρ(x / r).
//!
//! The normalizing constant is π^{d/2} B(d/2, 4) / Γ(d/2) = 6 π^{d/2} / Γ(d/2 + 4).
//! Draws are `r · √B · θ` with `B ~ Beta(d/2, 4)` and `θ` uniform on the sphere:
//! in polar form the radial density is ∝ s^{d-1}(1 − s²)³, and substituting
//! `s = √t` turns it into the Beta(d/2, 4) density in `t`.

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::error::{ensure_finite, invalid, Result};

/// ρ_r on ℝ^d.
#[derive(Clone, Debug)]
pub struct Mollifier {
    dim: usize,
    radius: f64,
    /// 1 / (π^{d/2} B(d/2,4) / Γ(d/2)), the value of ρ at the origin.
    peak: f64,
    shape_gamma: Gamma<f64>,
    tail_gamma: Gamma<f64>,
}

impl Mollifier {
    pub fn new(dim: usize, radius: f64) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("mollifier dimension must be positive"));
        }
        if !(radius > 0.0 && radius <= 1.0) {
            return Err(invalid(format!("mollifier radius {radius} not in (0, 1]")));
        }
        let half = dim as f64 / 2.0;
        Ok(Self {
            dim,
            radius,
            peak: (-log_normalizer(dim)).exp(),
            shape_gamma: Gamma::new(half, 1.0).expect("positive shape"),
            tail_gamma: Gamma::new(4.0, 1.0).expect("positive shape"),
        })
    }

    /// The unit-radius mollifier ρ.
    pub fn unit(dim: usize) -> Result<Self> {
        Self::new(dim, 1.0)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// ρ(0) for the unit-radius kernel.
    pub fn peak(&self) -> f64 {
        self.peak
    }

    pub fn density(&self, x: &[f64]) -> Result<f64> {
        self.check(x)?;
        let s = self.scaled_norm_sq(x);
        if s >= 1.0 {
            return Ok(0.0);
        }
        let q = 1.0 - s;
        Ok(self.peak * q * q * q * self.radius.powi(-(self.dim as i32)))
    }

    pub fn grad_density(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check(x)?;
        let s = self.scaled_norm_sq(x);
        if s >= 1.0 {
            return Ok(vec![0.0; self.dim]);
        }
        let q = 1.0 - s;
        // d/dx [c r^{-d} (1 - |x/r|^2)^3] = c r^{-d-1} (-6)(1 - |x/r|^2)^2 (x/r)
        let scale = -6.0 * self.peak * q * q * self.radius.powi(-(self.dim as i32) - 1);
        Ok(x.iter().map(|xi| scale * xi / self.radius).collect())
    }

    /// One draw with density ρ_r, written into `out`.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.dim);
        unit_sphere_into(rng, out);
        let g1 = self.shape_gamma.sample(rng);
        let g2 = self.tail_gamma.sample(rng);
        let radial = self.radius * (g1 / (g1 + g2)).sqrt();
        out.iter_mut().for_each(|v| *v *= radial);
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.sample_into(rng, &mut out);
        out
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(crate::Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        ensure_finite(x)
    }

    fn scaled_norm_sq(&self, x: &[f64]) -> f64 {
        x.iter().map(|v| v * v).sum::<f64>() / (self.radius * self.radius)
    }
}

/// log(π^{d/2} B(d/2, 4) / Γ(d/2)) = log 6 + (d/2) log π − log Γ(d/2 + 4).
fn log_normalizer(dim: usize) -> f64 {
    let half = dim as f64 / 2.0;
    6f64.ln() + half * std::f64::consts::PI.ln() - ln_gamma_half_integer(half + 4.0)
}

/// log Γ(x) for x a positive integer or half-integer, by the recursion
/// Γ(x + 1) = x Γ(x) from Γ(1) = 1 or Γ(1/2) = √π.
fn ln_gamma_half_integer(x: f64) -> f64 {
    let twice = (2.0 * x).round() as u64;
    debug_assert!((2.0 * x - twice as f64).abs() < 1e-12 && twice >= 1);
    let (mut acc, mut t) = if twice.is_multiple_of(2) {
        (0.0, 1.0)
    } else {
        (0.5 * std::f64::consts::PI.ln(), 0.5)
    };
    while t + 0.5 < x {
        acc += t.ln();
        t += 1.0;
    }
    acc
}

/// ∫|∇ρ| = (d+6)(d+4)(d+2)d / ((d+5)(d+3)(d+1)).
pub fn grad_l1_norm(dim: usize) -> Result<f64> {
    if dim == 0 {
        return Err(invalid("dimension must be positive"));
    }
    let d = dim as f64;
    Ok((d + 6.0) * (d + 4.0) * (d + 2.0) * d / ((d + 5.0) * (d + 3.0) * (d + 1.0)))
}

/// A uniform point on the unit sphere S^{d-1}: a normalized standard Gaussian
/// vector, redrawn if its norm is zero.
pub fn unit_sphere_into<R: Rng + ?Sized>(rng: &mut R, out: &mut [f64]) {
    loop {
        let mut norm_sq = 0.0;
        for v in out.iter_mut() {
            *v = StandardNormal.sample(rng);
            norm_sq += *v * *v;
        }
        if norm_sq > 0.0 {
            let inv = norm_sq.sqrt().recip();
            out.iter_mut().for_each(|v| *v *= inv);
            return;
        }
    }
}
