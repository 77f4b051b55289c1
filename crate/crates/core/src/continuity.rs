//! Moduli of continuity ω(r) = sup_{|x−y|≤r} |φ(x) − φ(y)| and the growth,
//! local-Lipschitz and smoothing bounds they induce.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// A declared upper bound on a modulus of continuity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Modulus {
    /// ω(r) = M (r^α ∨ r): Hölder at small scales, linear beyond r = 1.
    Hoelder { m: f64, alpha: f64 },
    /// ω(r) = K r.
    Lipschitz { k: f64 },
    /// Piecewise-linear interpolation of knots `(r, ω(r))`.
    Table { knots: TableModulus },
}

/// Knots of a tabulated modulus, sorted by radius with nondecreasing values.
///
/// Below the first knot the first value is used; beyond the last knot the
/// bound ω(t r) ≤ ⌈t⌉ ω(r) extends the table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(f64, f64)>", into = "Vec<(f64, f64)>")]
pub struct TableModulus {
    knots: Vec<(f64, f64)>,
}

impl TableModulus {
    pub fn new(mut knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.is_empty() {
            return Err(invalid("modulus table needs at least one knot"));
        }
        if knots
            .iter()
            .any(|&(r, w)| !(r > 0.0 && r.is_finite() && w >= 0.0 && w.is_finite()))
        {
            return Err(invalid("modulus knots need r > 0 and finite omega >= 0"));
        }
        knots.sort_by(|a, b| a.0.total_cmp(&b.0));
        if knots.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(invalid("duplicate radius in modulus table"));
        }
        if knots.windows(2).any(|w| w[1].1 < w[0].1) {
            return Err(invalid("modulus table must be nondecreasing"));
        }
        Ok(Self { knots })
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }

    fn eval(&self, r: f64) -> f64 {
        let first = self.knots[0];
        let last = *self.knots.last().unwrap();
        if r <= first.0 {
            return first.1;
        }
        if r > last.0 {
            return (r / last.0).ceil() * last.1;
        }
        let i = self.knots.partition_point(|k| k.0 < r);
        let (r0, w0) = self.knots[i - 1];
        let (r1, w1) = self.knots[i];
        w0 + (w1 - w0) * (r - r0) / (r1 - r0)
    }
}

impl TryFrom<Vec<(f64, f64)>> for TableModulus {
    type Error = Error;
    fn try_from(knots: Vec<(f64, f64)>) -> Result<Self> {
        Self::new(knots)
    }
}

impl From<TableModulus> for Vec<(f64, f64)> {
    fn from(t: TableModulus) -> Self {
        t.knots
    }
}

impl Modulus {
    pub fn hoelder(m: f64, alpha: f64) -> Result<Self> {
        if !(m > 0.0 && m.is_finite()) {
            return Err(invalid(format!("Hoelder constant {m} must be positive")));
        }
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(invalid(format!("Hoelder exponent {alpha} not in (0, 1]")));
        }
        Ok(Modulus::Hoelder { m, alpha })
    }

    pub fn lipschitz(k: f64) -> Result<Self> {
        if !(k > 0.0 && k.is_finite()) {
            return Err(invalid(format!("Lipschitz constant {k} must be positive")));
        }
        Ok(Modulus::Lipschitz { k })
    }

    pub fn table(knots: Vec<(f64, f64)>) -> Result<Self> {
        TableModulus::new(knots).map(|knots| Modulus::Table { knots })
    }

    /// ω(r) for r > 0.
    pub fn eval(&self, r: f64) -> Result<f64> {
        if !(r > 0.0) || r.is_nan() {
            return Err(invalid(format!("modulus radius {r} must be positive")));
        }
        Ok(match self {
            Modulus::Hoelder { m, alpha } => m * r.powf(*alpha).max(r),
            Modulus::Lipschitz { k } => k * r,
            Modulus::Table { knots } => knots.eval(r),
        })
    }

    /// ω(1).
    pub fn at_one(&self) -> f64 {
        self.eval(1.0).expect("r = 1 is valid")
    }
}

/// The pair (|φ(0)|, ω_φ(1)) whose sum is ‖φ‖_𝕄.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MNorm {
    pub grad_at_zero: f64,
    pub omega_one: f64,
}

impl MNorm {
    pub fn new(grad_at_zero: f64, omega_one: f64) -> Self {
        Self {
            grad_at_zero,
            omega_one,
        }
    }

    pub fn norm(&self) -> f64 {
        self.grad_at_zero + self.omega_one
    }
}

/// |φ(x)| ≤ |φ(0)| + ω(1) + ω(1)|x|.
pub fn linear_growth_bound(n: MNorm, x_norm: f64) -> f64 {
    n.grad_at_zero + n.omega_one + n.omega_one * x_norm
}

fn check_radius(r: f64) -> Result<()> {
    if r > 0.0 && r <= 1.0 {
        Ok(())
    } else {
        Err(invalid(format!("smoothing radius {r} not in (0, 1]")))
    }
}

/// (d + 4) ω(r) / r: Lipschitz constant of ∇(φ ∗ ρ_r).
pub fn convolved_grad_lipschitz(m: &Modulus, d: usize, r: f64) -> Result<f64> {
    check_radius(r)?;
    if d == 0 {
        return Err(invalid("dimension must be positive"));
    }
    Ok((d as f64 + 4.0) * m.eval(r)? / r)
}

/// ω(r) ≥ sup_x |φ ∗ ρ_r(x) − φ(x)|.
pub fn sup_deviation_bound(m: &Modulus, r: f64) -> Result<f64> {
    check_radius(r)?;
    m.eval(r)
}

/// |Φ(x) − Φ(y)| ≤ L(|x|, |y|) |x − y| where `n` describes ∇Φ; returns L.
pub fn local_lipschitz_factor(n: MNorm, x_norm: f64, y_norm: f64) -> f64 {
    n.grad_at_zero + n.omega_one * (1.0 + 0.5 * (x_norm + y_norm))
}

/// Upper bound on Φ(x) (or on Φ ∗ ρ_r(x) when `mollified`) from the
/// quadratic growth induced by ∇Φ ∈ 𝕄; `sup_unit_ball` is ‖Φ‖_{L∞(B₁)}.
pub fn quadratic_growth_bound(n: MNorm, x_norm: f64, sup_unit_ball: f64, mollified: bool) -> f64 {
    let lin = if mollified { 2.5 } else { 1.5 };
    0.5 * n.omega_one * x_norm * x_norm
        + (n.grad_at_zero + lin * n.omega_one) * x_norm
        + sup_unit_ball
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn eval_examples() {
        let h = Modulus::hoelder(2.0, 0.5).unwrap();
        assert_eq!(h.eval(0.25).unwrap(), 1.0);
        assert_eq!(h.eval(4.0).unwrap(), 8.0);
        let l = Modulus::lipschitz(3.0).unwrap();
        assert!((l.eval(0.1).unwrap() - 0.3).abs() < 1e-15);
        assert!(h.eval(0.0).is_err());
        assert!(h.eval(-1.0).is_err());
    }

    #[test]
    fn growth_examples() {
        assert_eq!(linear_growth_bound(MNorm::new(0.0, 1.0), 0.0), 1.0);
        assert_eq!(linear_growth_bound(MNorm::new(1.0, 2.0), 3.0), 9.0);
        assert!(linear_growth_bound(MNorm::new(0.0, 1.0), 5.0) >= 5.0);
    }

    #[test]
    fn convolved_examples() {
        let l = Modulus::lipschitz(1.0).unwrap();
        assert!((convolved_grad_lipschitz(&l, 1, 0.5).unwrap() - 5.0).abs() < 1e-12);
        let h = Modulus::hoelder(1.0, 1.0).unwrap();
        assert!((convolved_grad_lipschitz(&h, 2, 1.0).unwrap() - 6.0).abs() < 1e-12);
        let t = Modulus::table(vec![(1.0, 1.0)]).unwrap();
        assert!((convolved_grad_lipschitz(&t, 1, 0.1).unwrap() - 50.0).abs() < 1e-12);
        assert!(convolved_grad_lipschitz(&l, 1, 1.5).is_err());
        assert!(convolved_grad_lipschitz(&l, 1, 0.0).is_err());
    }

    #[test]
    fn sup_deviation_examples() {
        let h = Modulus::hoelder(1.0, 0.5).unwrap();
        assert!((sup_deviation_bound(&h, 0.04).unwrap() - 0.2).abs() < 1e-15);
        let l = Modulus::lipschitz(2.0).unwrap();
        assert_eq!(sup_deviation_bound(&l, 1.0).unwrap(), 2.0);
        assert!(sup_deviation_bound(&l, 2.0).is_err());
    }

    #[test]
    fn table_rules() {
        assert!(Modulus::table(vec![]).is_err());
        assert!(Modulus::table(vec![(0.5, 2.0), (1.0, 1.0)]).is_err());
        let t = Modulus::table(vec![(1.0, 2.0), (0.5, 1.0)]).unwrap();
        assert_eq!(t.eval(0.1).unwrap(), 1.0);
        assert!((t.eval(0.75).unwrap() - 1.5).abs() < 1e-15);
        assert_eq!(t.eval(2.5).unwrap(), 6.0);
    }

    #[test]
    fn table_serde_validates() {
        let bad = serde_json::from_str::<Modulus>(r#"{"kind":"table","knots":[[0.5,2.0],[1.0,1.0]]}"#);
        assert!(bad.is_err());
        let json = serde_json::to_string(&Modulus::table(vec![(0.5, 1.0)]).unwrap()).unwrap();
        let back: Modulus = serde_json::from_str(&json).unwrap();
        assert_eq!(back.eval(0.5).unwrap(), 1.0);
    }

    #[test]
    fn ceil_scaling_on_log_grid() {
        let mods = [
            Modulus::hoelder(1.3, 0.4).unwrap(),
            Modulus::hoelder(0.7, 1.0).unwrap(),
            Modulus::lipschitz(2.0).unwrap(),
        ];
        for m in &mods {
            for &r in &[0.1, 0.5, 1.0] {
                for i in 0..=80 {
                    let t = 10f64.powf(-2.0 + 4.0 * i as f64 / 80.0);
                    let lhs = m.eval(t * r).unwrap();
                    let rhs = t.ceil() * m.eval(r).unwrap();
                    assert!(lhs <= rhs * (1.0 + 1e-12), "{m:?} t={t} r={r}");
                }
            }
        }
    }

    #[test]
    fn lipschitz_of_sin_is_dominated() {
        // sin has |∇ sin(0)| = 1 and ω_{sin}(1) ≤ 1
        let n = MNorm::new(1.0, 1.0);
        for i in 0..200 {
            let x = -20.0 + 0.2 * i as f64;
            for j in 0..50 {
                let y = x + 0.3 * j as f64 - 7.0;
                let lhs = (x.sin() - y.sin()).abs();
                // Φ = sin, ∇Φ = cos: |cos 0| = 1, ω_cos(1) ≤ 1
                let rhs = local_lipschitz_factor(n, x.abs(), y.abs()) * (x - y).abs();
                assert!(lhs <= rhs + 1e-12);
            }
        }
    }

    proptest! {
        #[test]
        fn hoelder_is_monotone(m in 0.01f64..10.0, alpha in 0.01f64..1.0, r in 1e-4f64..50.0, s in 1e-4f64..50.0) {
            let h = Modulus::hoelder(m, alpha).unwrap();
            let (lo, hi) = if r < s { (r, s) } else { (s, r) };
            prop_assert!(h.eval(lo).unwrap() <= h.eval(hi).unwrap());
        }
    }
}
