//! Empirical W₂ estimators, moment diagnostics and goodness-of-fit helpers.

use std::io::BufRead;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::mollifier::unit_sphere_into;
use crate::samplers::Trace;

/// n points in ℝ^d with uniform weights, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleSet {
    dim: usize,
    data: Vec<f64>,
}

impl SampleSet {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || data.is_empty() || !data.len().is_multiple_of(dim) {
            return Err(invalid(format!("{} values do not form points of dimension {dim}", data.len())));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(invalid("sample points must be finite"));
        }
        Ok(Self { dim, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(invalid("rows have different lengths"));
        }
        Self::new(dim, rows.concat())
    }

    /// Scalar samples as points of ℝ¹.
    pub fn from_scalars(values: &[f64]) -> Result<Self> {
        Self::new(1, values.to_vec())
    }

    /// Recorded iterates of `trace` from index `burn_in` on.
    pub fn from_trace(trace: &Trace, burn_in: usize) -> Result<Self> {
        if burn_in >= trace.len() {
            return Err(invalid(format!("burn-in {burn_in} leaves no points of {}", trace.len())));
        }
        let data: Vec<f64> = trace.points().skip(burn_in).flatten().copied().collect();
        Self::new(trace.dim(), data)
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn map(&self, f: impl Fn(&[f64], &mut [f64])) -> Self {
        let mut data = vec![0.0; self.data.len()];
        for (src, dst) in self.data.chunks_exact(self.dim).zip(data.chunks_exact_mut(self.dim)) {
            f(src, dst);
        }
        Self { dim: self.dim, data }
    }

    /// ⟨x_i, u⟩ for every point.
    pub fn project(&self, u: &[f64]) -> Vec<f64> {
        self.points().map(|p| p.iter().zip(u).map(|(a, b)| a * b).sum()).collect()
    }
}

/// Reads a CSV trace (comment lines start with `#`) into step indices and points.
pub fn read_csv_trace<R: BufRead>(reader: R) -> Result<(Vec<u64>, SampleSet)> {
    let mut lines = reader.lines();
    let mut header = None;
    for line in lines.by_ref() {
        let line = line?;
        if !line.starts_with('#') && !line.trim().is_empty() {
            header = Some(line);
            break;
        }
    }
    let header = header.ok_or_else(|| invalid("CSV trace has no header"))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.first() != Some(&"step") || cols.len() < 2 {
        return Err(invalid(format!("unexpected CSV header `{header}`")));
    }
    let dim = cols.len() - 1;
    let mut steps = Vec::new();
    let mut data = Vec::new();
    for line in lines {
        let line = line?;
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let step = fields
            .next()
            .and_then(|s| s.parse::<u64>().ok())
            .ok_or_else(|| invalid(format!("bad step in `{line}`")))?;
        steps.push(step);
        let before = data.len();
        for f in fields {
            data.push(f.parse::<f64>().map_err(|e| invalid(format!("bad value `{f}`: {e}")))?);
        }
        if data.len() - before != dim {
            return Err(invalid(format!("row `{line}` has the wrong number of fields")));
        }
    }
    Ok((steps, SampleSet::new(dim, data)?))
}

fn same_shape(a: &SampleSet, b: &SampleSet) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::SizeMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.dim != b.dim {
        return Err(Error::DimensionMismatch {
            expected: a.dim,
            got: b.dim,
        });
    }
    Ok(())
}

fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Largest sample size accepted by [`w2_exact`].
pub const W2_EXACT_MAX: usize = 512;

/// Minimum-cost perfect matching for a square cost matrix (row-major),
/// by shortest augmenting paths with potentials. Returns the column assigned
/// to each row.
pub fn assignment(n: usize, cost: &[f64]) -> Vec<usize> {
    assert_eq!(cost.len(), n * n);
    // 1-based arrays with a virtual column 0
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut col_of = vec![0usize; n];
    for j in 1..=n {
        col_of[row_of[j] - 1] = j - 1;
    }
    col_of
}

/// Exact W₂ between two empirical measures of equal size n ≤ 512.
pub fn w2_exact(a: &SampleSet, b: &SampleSet) -> Result<f64> {
    same_shape(a, b)?;
    let n = a.len();
    if n > W2_EXACT_MAX {
        return Err(invalid(format!("w2_exact supports at most {W2_EXACT_MAX} points, got {n}")));
    }
    let mut cost = Vec::with_capacity(n * n);
    for p in a.points() {
        for q in b.points() {
            cost.push(sq_dist(p, q));
        }
    }
    let sigma = assignment(n, &cost);
    let total: f64 = sigma.iter().enumerate().map(|(i, &j)| cost[i * n + j]).sum();
    Ok((total / n as f64).max(0.0).sqrt())
}

/// W₂ by enumerating all n! couplings; for n ≤ 8 only.
pub fn w2_enumerate(a: &SampleSet, b: &SampleSet) -> Result<f64> {
    same_shape(a, b)?;
    let n = a.len();
    if n > 8 {
        return Err(invalid("enumeration supports at most 8 points"));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = f64::INFINITY;
    // Heap's algorithm
    let mut c = vec![0usize; n];
    let eval = |perm: &[usize]| -> f64 { perm.iter().enumerate().map(|(i, &j)| sq_dist(a.point(i), b.point(j))).sum() };
    best = best.min(eval(&perm));
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            best = best.min(eval(&perm));
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    Ok((best / n as f64).sqrt())
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

fn w2_sq_sorted(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / x.len() as f64
}

/// W₂ in one dimension by matching order statistics.
pub fn w2_1d(a: &SampleSet, b: &SampleSet) -> Result<f64> {
    same_shape(a, b)?;
    if a.dim != 1 {
        return Err(invalid(format!("w2_1d needs d = 1, got {}", a.dim)));
    }
    Ok(w2_sq_sorted(&sorted(a.data.clone()), &sorted(b.data.clone())).sqrt())
}

/// Squared 1-D W₂ distances of the projections onto `n_proj` uniform directions.
pub fn sliced_projections<R: Rng + ?Sized>(a: &SampleSet, b: &SampleSet, n_proj: usize, rng: &mut R) -> Result<Vec<f64>> {
    same_shape(a, b)?;
    if n_proj == 0 {
        return Err(invalid("n_proj must be at least 1"));
    }
    let mut u = vec![0.0; a.dim];
    Ok((0..n_proj)
        .map(|_| {
            unit_sphere_into(rng, &mut u);
            w2_sq_sorted(&sorted(a.project(&u)), &sorted(b.project(&u)))
        })
        .collect())
}

/// Root-mean-square of 1-D W₂ over random projections. A proxy that never
/// exceeds W₂ in expectation, not W₂ itself.
pub fn w2_sliced<R: Rng + ?Sized>(a: &SampleSet, b: &SampleSet, n_proj: usize, rng: &mut R) -> Result<f64> {
    let sq = sliced_projections(a, b, n_proj, rng)?;
    Ok((sq.iter().sum::<f64>() / sq.len() as f64).sqrt())
}

/// Mean and batch-means standard error of a (possibly autocorrelated) series.
pub fn mean_and_se(x: &[f64]) -> (f64, f64) {
    let n = x.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    if n < 4 {
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n.max(2) - 1) as f64;
        return (mean, (var / n as f64).sqrt());
    }
    let batches = (n as f64).sqrt().floor() as usize;
    let size = n / batches;
    let means: Vec<f64> = (0..batches)
        .map(|b| x[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64)
        .collect();
    let bm = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|m| (m - bm).powi(2)).sum::<f64>() / (batches - 1) as f64;
    (mean, (var / batches as f64).sqrt())
}

/// Mean and i.i.d. standard error.
pub fn mean_and_iid_se(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, (var / n).sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub n: usize,
    pub burn_in: usize,
    pub mean: Vec<f64>,
    pub mean_se: Vec<f64>,
    /// Per-coordinate variance.
    pub variance: Vec<f64>,
    /// E|Y|² over the kept iterates.
    pub second_moment: f64,
    pub second_moment_se: f64,
    /// Largest running mean of |Y|² over all recorded iterates.
    pub max_running_second_moment: f64,
    pub max_norm: f64,
    pub exp_alpha: f64,
    /// E e^{α|Y|²}.
    pub exp_moment: f64,
    pub exp_moment_se: f64,
}

/// Moment diagnostics of the iterates after `burn_in` recorded points.
/// Standard errors use batch means. `exp_alpha` is the exponent of the
/// exponential moment, normally 1 ∧ βm/4.
pub fn moment_report(trace: &Trace, burn_in: usize, exp_alpha: f64) -> Result<MomentReport> {
    if burn_in >= trace.len() {
        return Err(invalid(format!("burn-in {burn_in} leaves no points of {}", trace.len())));
    }
    let d = trace.dim();
    let kept: Vec<&[f64]> = trace.points().skip(burn_in).collect();
    let n = kept.len();
    let mut mean = Vec::with_capacity(d);
    let mut mean_se = Vec::with_capacity(d);
    let mut variance = Vec::with_capacity(d);
    for j in 0..d {
        let col: Vec<f64> = kept.iter().map(|p| p[j]).collect();
        let (m, se) = mean_and_se(&col);
        mean.push(m);
        mean_se.push(se);
        variance.push(col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n as f64);
    }
    let sq: Vec<f64> = kept.iter().map(|p| p.iter().map(|v| v * v).sum()).collect();
    let (second_moment, second_moment_se) = mean_and_se(&sq);
    let ex: Vec<f64> = sq.iter().map(|s| (exp_alpha * s).exp()).collect();
    let (exp_moment, exp_moment_se) = mean_and_se(&ex);
    let mut running = 0.0;
    let mut max_running: f64 = 0.0;
    let mut max_norm: f64 = 0.0;
    for (i, p) in trace.points().enumerate() {
        let s: f64 = p.iter().map(|v| v * v).sum();
        running += (s - running) / (i + 1) as f64;
        max_running = max_running.max(running);
        max_norm = max_norm.max(s.sqrt());
    }
    Ok(MomentReport {
        n,
        burn_in,
        mean,
        mean_se,
        variance,
        second_moment,
        second_moment_se,
        max_running_second_moment: max_running,
        max_norm,
        exp_alpha,
        exp_moment,
        exp_moment_se,
    })
}

/// Default burn-in: the first half of the recorded points.
pub fn default_burn_in(len: usize) -> usize {
    len / 2
}

/// Kolmogorov–Smirnov statistic sup|F_n − F| of `samples` against `cdf`.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let x = sorted(samples.to_vec());
    let n = x.len() as f64;
    x.iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = cdf(v);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic p-value of the one-sample KS test with the small-sample
/// correction λ = (√n + 0.12 + 0.11/√n)·D.
pub fn ks_p_value(n: usize, stat: f64) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * stat;
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=200 {
        let kf = k as f64;
        let term = 2.0 * (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    sum.clamp(0.0, 1.0)
}

/// n draws from N(0, β⁻¹I_d), the Gibbs measure of |x|²/2.
pub fn gaussian_reference<R: Rng + ?Sized>(d: usize, beta: f64, n: usize, rng: &mut R) -> Result<SampleSet> {
    if !(beta > 0.0) {
        return Err(invalid("beta must be positive"));
    }
    let s = beta.recip().sqrt();
    SampleSet::new(d, (0..n * d).map(|_| s * rng.sample::<f64, _>(StandardNormal)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn set(d: usize, v: &[f64]) -> SampleSet {
        SampleSet::new(d, v.to_vec()).unwrap()
    }

    fn random_set(d: usize, n: usize, rng: &mut impl Rng) -> SampleSet {
        set(d, &(0..n * d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect::<Vec<_>>())
    }

    #[test]
    fn small_examples() {
        let a = set(1, &[0.0, 1.0]);
        let b = set(1, &[1.0, 2.0]);
        assert!((w2_exact(&a, &b).unwrap() - 1.0).abs() < 1e-15);
        assert!((w2_1d(&a, &b).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(w2_exact(&a, &a).unwrap(), 0.0);
        assert_eq!(w2_1d(&set(1, &[3.0, 1.0, 2.0]), &set(1, &[1.0, 2.0, 3.0])).unwrap(), 0.0);
    }

    #[test]
    fn errors() {
        let a = set(1, &[0.0, 1.0]);
        assert!(matches!(w2_exact(&a, &set(1, &[0.0])), Err(Error::SizeMismatch { .. })));
        assert!(w2_1d(&set(2, &[0.0, 1.0]), &set(2, &[0.0, 1.0])).is_err());
        assert!(SampleSet::new(2, vec![1.0]).is_err());
        assert!(SampleSet::new(1, vec![f64::NAN]).is_err());
        let big = set(1, &vec![0.0; 513]);
        assert!(w2_exact(&big, &big).is_err());
    }

    #[test]
    fn assignment_matches_enumeration() {
        let mut rng = stream(3, 0);
        for n in 1..=7 {
            for d in [1, 2, 3] {
                let a = random_set(d, n, &mut rng);
                let b = random_set(d, n, &mut rng);
                let e = w2_enumerate(&a, &b).unwrap();
                let h = w2_exact(&a, &b).unwrap();
                assert!((e - h).abs() < 1e-12, "n={n} d={d}: {e} vs {h}");
            }
        }
    }

    #[test]
    fn translation_and_scale() {
        let mut rng = stream(4, 0);
        let a = random_set(2, 4, &mut rng);
        for c in [[0.5, 0.0], [1.0, -2.0], [-3.0, 4.0]] {
            let b = a.map(|p, q| {
                q[0] = p[0] + c[0];
                q[1] = p[1] + c[1];
            });
            let norm = (c[0] * c[0] + c[1] * c[1]).sqrt();
            assert!((w2_exact(&a, &b).unwrap() - norm).abs() < 1e-12);
            assert!((w2_enumerate(&a, &b).unwrap() - norm).abs() < 1e-12);
        }
        let b = random_set(2, 4, &mut rng);
        let base = w2_exact(&a, &b).unwrap();
        let scale = |s: &SampleSet| s.map(|p, q| q.iter_mut().zip(p).for_each(|(o, v)| *o = 2.5 * v));
        assert!((w2_exact(&scale(&a), &scale(&b)).unwrap() - 2.5 * base).abs() < 1e-12);
    }

    #[test]
    fn sliced_in_one_dimension_is_exact() {
        let mut rng = stream(5, 0);
        let a = random_set(1, 50, &mut rng);
        let b = random_set(1, 50, &mut rng);
        let s = w2_sliced(&a, &b, 1, &mut rng).unwrap();
        assert!((s - w2_1d(&a, &b).unwrap()).abs() < 1e-12);
        assert_eq!(w2_sliced(&a, &a, 3, &mut rng).unwrap(), 0.0);
    }

    #[test]
    fn sliced_gaussian_scale() {
        let mut rng = stream(6, 0);
        let a = random_set(2, 10_000, &mut rng);
        let b = random_set(2, 10_000, &mut rng).map(|p, q| q.iter_mut().zip(p).for_each(|(o, v)| *o = 2.0 * v));
        let s = w2_sliced(&a, &b, 50, &mut rng).unwrap();
        assert!((s - 1.0).abs() < 0.1, "{s}");
    }

    #[test]
    fn csv_reader() {
        let text = "# config_sha256=abc seed=1\nstep,x0,x1\n0,1.0,2.0\n5,-1.5e0,3\n# diverged_at_step=6\n";
        let (steps, s) = read_csv_trace(text.as_bytes()).unwrap();
        assert_eq!(steps, vec![0, 5]);
        assert_eq!(s.point(1), &[-1.5, 3.0]);
        assert!(read_csv_trace("x,y\n1,2\n".as_bytes()).is_err());
        assert!(read_csv_trace("step,x0\n0,1,2\n".as_bytes()).is_err());
    }

    #[test]
    fn ks_helpers() {
        let mut rng = stream(7, 0);
        let u: Vec<f64> = (0..5000).map(|_| rng.random::<f64>()).collect();
        let d = ks_statistic(&u, |x| x.clamp(0.0, 1.0));
        assert!(ks_p_value(u.len(), d) > 0.01);
        let d_bad = ks_statistic(&u, |x| x.clamp(0.0, 1.0).powi(2));
        assert!(ks_p_value(u.len(), d_bad) < 1e-6);
        // tabulated Kolmogorov quantile: P(K > 1.3581) = 0.05
        let p = ks_p_value(1_000_000_000, 1.358_1 / (1e9f64).sqrt());
        assert!((p - 0.05).abs() < 1e-3, "{p}");
    }

    #[test]
    fn batch_means_se_is_sane() {
        let mut rng = stream(8, 0);
        let x: Vec<f64> = (0..10_000).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let (m, se) = mean_and_se(&x);
        assert!(m.abs() < 0.05);
        assert!((se - 0.01).abs() < 0.004, "{se}");
    }
}
