//! Gauss–Legendre rules and nested integration over balls in d ≤ 3.

use std::f64::consts::PI;

/// An n-point Gauss–Legendre rule on [-1, 1].
#[derive(Clone, Debug)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            // Tricomi initial guess, then Newton on P_n.
            let mut x = ((i as f64 + 0.75) / (nf + 0.5) * PI).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    /// ∫_a^b f.
    pub fn integrate(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (b + a);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(mid + half * x))
            .sum::<f64>()
            * half
    }

    /// ∫_a^b f split into `panels` equal sub-intervals.
    pub fn integrate_composite(
        &self,
        a: f64,
        b: f64,
        panels: usize,
        mut f: impl FnMut(f64) -> f64,
    ) -> f64 {
        let h = (b - a) / panels as f64;
        (0..panels)
            .map(|i| {
                let lo = a + h * i as f64;
                self.integrate(lo, lo + h, &mut f)
            })
            .sum()
    }
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let dp = n as f64 * (x * p - p0) / (x * x - 1.0);
    (p, dp)
}

/// ∫ f over the closed ball of radius `radius` at the origin of ℝ^d, d ∈ {1,2,3},
/// by iterated Gauss–Legendre with the limits of each axis adapted to the ball.
/// The outer axes are split at 0 so an integrand with a cusp at the origin is
/// handled on panel boundaries.
pub fn integrate_ball(
    d: usize,
    radius: f64,
    n: usize,
    mut f: impl FnMut(&[f64]) -> f64,
) -> f64 {
    assert!((1..=3).contains(&d), "ball quadrature supports d <= 3");
    let gl = GaussLegendre::new(n);
    let mut x = [0.0; 3];
    let r2 = radius * radius;
    let split = |a: f64, b: f64, g: &mut dyn FnMut(f64) -> f64| {
        gl.integrate(a, 0.0, &mut *g) + gl.integrate(0.0, b, &mut *g)
    };
    match d {
        1 => split(-radius, radius, &mut |t| {
            x[0] = t;
            f(&x[..1])
        }),
        2 => split(-radius, radius, &mut |t0| {
            let h = (r2 - t0 * t0).max(0.0).sqrt();
            split(-h, h, &mut |t1| {
                x[0] = t0;
                x[1] = t1;
                f(&x[..2])
            })
        }),
        _ => split(-radius, radius, &mut |t0| {
            let h0 = (r2 - t0 * t0).max(0.0).sqrt();
            split(-h0, h0, &mut |t1| {
                let h1 = (r2 - t0 * t0 - t1 * t1).max(0.0).sqrt();
                split(-h1, h1, &mut |t2| {
                    x[0] = t0;
                    x[1] = t1;
                    x[2] = t2;
                    f(&x[..3])
                })
            })
        }),
    }
}
