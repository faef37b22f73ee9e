//! Design-matrix diagnostics: numeric rank, correlations, Hessian conditioning,
//! exponential time-constant fits and partition arithmetic.

use std::io::Write;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// `n x p` matrix whose row `s` is the feature vector of sample `s`.
#[derive(Clone, Debug, PartialEq)]
pub struct DesignMatrix {
    pub v: DMatrix<f64>,
}

impl DesignMatrix {
    pub fn n(&self) -> usize {
        self.v.nrows()
    }

    pub fn p(&self) -> usize {
        self.v.ncols()
    }
}

pub fn build_design_matrix(rows: &[Vec<f64>]) -> Result<DesignMatrix> {
    let first = rows.first().ok_or_else(|| Error::invalid("design matrix needs at least one sample"))?;
    let p = first.len();
    if p == 0 {
        return Err(Error::invalid("design matrix needs at least one feature"));
    }
    for r in rows {
        if r.len() != p {
            return Err(Error::Dimension { expected: p, actual: r.len() });
        }
        if r.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite design matrix entry"));
        }
    }
    Ok(DesignMatrix { v: DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j]) })
}

/// Sample correlation with empirical means removed.
pub fn correlation(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension { expected: a.len(), actual: b.len() });
    }
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 {
        return Err(Error::ZeroVariance(0));
    }
    if sbb == 0.0 {
        return Err(Error::ZeroVariance(1));
    }
    Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

pub fn pairwise_correlation(v: &DesignMatrix, i: usize, j: usize) -> Result<f64> {
    let p = v.p();
    if i >= p || j >= p {
        return Err(Error::invalid(format!("column index out of range for {p} columns")));
    }
    let a: Vec<f64> = v.v.column(i).iter().copied().collect();
    let b: Vec<f64> = v.v.column(j).iter().copied().collect();
    correlation(&a, &b).map_err(|e| match e {
        Error::ZeroVariance(0) => Error::ZeroVariance(i),
        Error::ZeroVariance(_) => Error::ZeroVariance(j),
        other => other,
    })
}

pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    let mut s: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Singular values after rescaling every nonzero column to unit l2 norm.
/// Zero columns stay zero.
pub fn normalized_singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    let mut scaled = m.clone();
    for mut c in scaled.column_iter_mut() {
        let norm = c.norm();
        if norm > 0.0 {
            c /= norm;
        }
    }
    singular_values(&scaled)
}

/// Number of normalized singular values at or above `cutoff`.
pub fn numeric_rank(m: &DMatrix<f64>, cutoff: f64) -> usize {
    normalized_singular_values(m).iter().filter(|&&s| s >= cutoff).count()
}

pub const RANK_CUTOFF: f64 = 0.1;

/// Algebraic rank: singular values above `sigma_max * max(n, p) * eps`.
pub fn exact_rank(m: &DMatrix<f64>) -> usize {
    let s = singular_values(m);
    let smax = s.first().copied().unwrap_or(0.0);
    let tol = smax * m.nrows().max(m.ncols()) as f64 * f64::EPSILON;
    s.iter().filter(|&&x| x > tol && x > 0.0).count()
}

/// `lambda_max / lambda_min` of the Hessian `2 V'V`, with `lambda_min` the
/// smallest eigenvalue above the usual numerical-rank tolerance.
pub fn hessian_condition(v: &DesignMatrix) -> Result<f64> {
    let s = singular_values(&v.v);
    let smax = s.first().copied().unwrap_or(0.0);
    if smax == 0.0 {
        return Err(Error::invalid("Hessian of a zero design matrix"));
    }
    let tol = smax * v.n().max(v.p()) as f64 * f64::EPSILON;
    let smin = s.iter().copied().filter(|&x| x > tol).fold(f64::INFINITY, f64::min);
    Ok((2.0 * smax * smax) / (2.0 * smin * smin))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeConstantFit {
    /// `-1 / slope` of `ln e` against `t`; `None` when the trace does not decay.
    pub delta: Option<f64>,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Least-squares line through `(t, ln e)`.
pub fn fit_time_constant(trace: &[(f64, f64)]) -> Result<TimeConstantFit> {
    if trace.len() < 3 {
        return Err(Error::invalid(format!("need at least 3 points, got {}", trace.len())));
    }
    if let Some((t, e)) = trace.iter().find(|(t, e)| !(*e > 0.0 && e.is_finite() && t.is_finite())) {
        return Err(Error::invalid(format!("error {e} at t={t} must be positive and finite")));
    }
    let n = trace.len() as f64;
    let mt = trace.iter().map(|p| p.0).sum::<f64>() / n;
    let my = trace.iter().map(|p| p.1.ln()).sum::<f64>() / n;
    let (mut stt, mut sty, mut syy) = (0.0, 0.0, 0.0);
    for &(t, e) in trace {
        let (dt, dy) = (t - mt, e.ln() - my);
        stt += dt * dt;
        sty += dt * dy;
        syy += dy * dy;
    }
    if stt == 0.0 {
        return Err(Error::invalid("all points share one iteration"));
    }
    let slope = sty / stt;
    let intercept = my - slope * mt;
    let r_squared = if syy == 0.0 { 0.0 } else { sty * sty / (stt * syy) };
    let delta = (slope < 0.0).then(|| -1.0 / slope);
    Ok(TimeConstantFit { delta, slope, intercept, r_squared })
}

/// `floor(q * overcompleteness / p_per_task)`.
pub fn max_partitions(q: usize, p_per_task: usize, overcompleteness: f64) -> Result<usize> {
    if q == 0 || p_per_task == 0 || !(overcompleteness > 0.0 && overcompleteness.is_finite()) {
        return Err(Error::invalid("partition arithmetic needs positive inputs"));
    }
    Ok((q as f64 * overcompleteness / p_per_task as f64).floor() as usize)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CapacityPoint {
    pub n_max: usize,
    /// Smallest feature length reaching `n_max` normalized singular values
    /// above the cutoff, or `None` if no candidate did.
    pub p: Option<usize>,
}

/// For each `n_max` (ascending), scans `p_values` upward from the previous
/// answer and records the first `p` whose `n_max`-sample design matrix has
/// numeric rank at least `n_max`.
pub fn capacity_curve<F>(n_max_values: &[usize], p_values: &[usize], cutoff: f64, mut design: F) -> Result<Vec<CapacityPoint>>
where
    F: FnMut(usize, usize) -> Result<DesignMatrix>,
{
    let mut out = Vec::with_capacity(n_max_values.len());
    let mut start = 0;
    for &n_max in n_max_values {
        let mut found = None;
        for (idx, &p) in p_values.iter().enumerate().skip(start) {
            if p < n_max {
                continue;
            }
            let v = design(n_max, p)?;
            if numeric_rank(&v.v, cutoff) >= n_max {
                found = Some(p);
                start = idx;
                break;
            }
        }
        if found.is_none() {
            start = p_values.len();
        }
        out.push(CapacityPoint { n_max, p: found });
    }
    Ok(out)
}

pub fn write_capacity_csv<W: Write>(out: W, kind: &str, curve: &[CapacityPoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| Error::invalid(format!("csv: {e}"));
    w.write_record(["n_max", "p", "kind"]).map_err(err)?;
    for c in curve {
        let p = c.p.map_or_else(|| "saturated".to_string(), |p| p.to_string());
        w.write_record([c.n_max.to_string(), p, kind.to_string()]).map_err(err)?;
    }
    w.flush().map_err(|e| Error::io("csv output", e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_rows(n: usize, p: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| (0..p).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
    }

    #[test]
    fn design_matrix_shapes() {
        let v = build_design_matrix(&[vec![1.0, 2.0, 3.0]]).unwrap();
        assert_eq!((v.n(), v.p()), (1, 3));
        assert_eq!(v.v.row(0).iter().copied().collect::<Vec<_>>(), vec![1.0, 2.0, 3.0]);
        let dup = build_design_matrix(&[vec![0.2, 0.5, 0.9], vec![0.2, 0.5, 0.9], vec![0.2, 0.5, 0.9]]).unwrap();
        assert_eq!(numeric_rank(&dup.v, RANK_CUTOFF), 1);
        assert!(build_design_matrix(&[vec![1.0], vec![1.0, 2.0]]).is_err());
        assert!(build_design_matrix(&[]).is_err());
    }

    #[test]
    fn rank_examples() {
        for n in [1, 5, 40, 300] {
            assert_eq!(numeric_rank(&DMatrix::identity(n, n), RANK_CUTOFF), n);
        }
        let u = nalgebra::DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let w = nalgebra::DVector::from_vec(vec![0.5, -1.0]);
        assert_eq!(numeric_rank(&(u * w.transpose()), RANK_CUTOFF), 1);
        assert_eq!(numeric_rank(&DMatrix::zeros(4, 3), RANK_CUTOFF), 0);
    }

    #[test]
    fn correlation_examples() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| {
            let x = (i as f64 * 0.9).sin();
            vec![x, x, -x, 1.0]
        }).collect();
        let v = build_design_matrix(&rows).unwrap();
        assert!((pairwise_correlation(&v, 0, 1).unwrap() - 1.0).abs() < 1e-12);
        assert!((pairwise_correlation(&v, 0, 2).unwrap() + 1.0).abs() < 1e-12);
        assert!(matches!(pairwise_correlation(&v, 0, 3), Err(Error::ZeroVariance(3))));
    }

    #[test]
    fn condition_examples() {
        let v = DesignMatrix { v: DMatrix::identity(5, 3) * 3.0 };
        assert!((hessian_condition(&v).unwrap() - 1.0).abs() < 1e-12);
        let v = DesignMatrix { v: DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 10.0]) };
        assert!((hessian_condition(&v).unwrap() - 100.0).abs() < 1e-9);
        // Rank-deficient: the numerically zero eigenvalue is skipped.
        let v = DesignMatrix { v: DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]) };
        assert!((hessian_condition(&v).unwrap() - 1.0).abs() < 1e-9);
        assert!(hessian_condition(&DesignMatrix { v: DMatrix::zeros(2, 2) }).is_err());
    }

    #[test]
    fn time_constant_examples() {
        let trace: Vec<(f64, f64)> = (0..100).map(|t| (t as f64, (-(t as f64) / 50.0).exp())).collect();
        let fit = fit_time_constant(&trace).unwrap();
        assert!((fit.delta.unwrap() - 50.0).abs() < 1e-9);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);

        let flat: Vec<(f64, f64)> = (0..10).map(|t| (t as f64, 0.3)).collect();
        assert_eq!(fit_time_constant(&flat).unwrap().delta, None);
        assert!(fit_time_constant(&trace[..2]).is_err());
        assert!(fit_time_constant(&[(0.0, 1.0), (1.0, 0.0), (2.0, 1.0)]).is_err());
    }

    #[test]
    fn partition_counts() {
        assert_eq!(max_partitions(12100, 1200, 1.0).unwrap(), 10);
        assert_eq!(max_partitions(12100, 30, 1.0).unwrap(), 403);
        assert_eq!(max_partitions(12100, 30, 2.25).unwrap(), 907);
        assert!(max_partitions(0, 30, 1.0).is_err());
    }

    #[test]
    fn capacity_curve_on_identity_features() {
        // Identity rows: any n distinct unit vectors have full rank once p >= n.
        let curve = capacity_curve(&[2, 4, 8], &[1, 2, 3, 4, 5, 6, 7, 8, 9], RANK_CUTOFF, |n, p| {
            Ok(DesignMatrix { v: DMatrix::identity(n, p) })
        })
        .unwrap();
        assert_eq!(curve.iter().map(|c| c.p).collect::<Vec<_>>(), vec![Some(2), Some(4), Some(8)]);
        let saturated = capacity_curve(&[20], &[1, 2], RANK_CUTOFF, |n, p| Ok(DesignMatrix { v: DMatrix::identity(n, p) })).unwrap();
        assert_eq!(saturated[0].p, None);

        let mut buf = Vec::new();
        write_capacity_csv(&mut buf, "pixels", &curve).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("n_max,p,kind\n2,2,pixels\n"));
    }

    proptest! {
        #[test]
        fn rank_bounded_by_shape(n in 1usize..8, p in 1usize..8, seed in any::<u64>()) {
            let v = build_design_matrix(&random_rows(n, p, seed)).unwrap();
            prop_assert!(numeric_rank(&v.v, RANK_CUTOFF) <= n.min(p));
        }

        #[test]
        fn correlation_symmetric(seed in any::<u64>()) {
            let v = build_design_matrix(&random_rows(12, 4, seed)).unwrap();
            let (a, b) = (pairwise_correlation(&v, 1, 3).unwrap(), pairwise_correlation(&v, 3, 1).unwrap());
            prop_assert!((a - b).abs() < 1e-15);
            prop_assert!((pairwise_correlation(&v, 2, 2).unwrap() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn condition_at_least_one_and_permutation_invariant(seed in any::<u64>()) {
            let rows = random_rows(9, 5, seed);
            let c = hessian_condition(&build_design_matrix(&rows).unwrap()).unwrap();
            let mut shuffled = rows.clone();
            shuffled.reverse();
            shuffled.swap(0, 4);
            let c2 = hessian_condition(&build_design_matrix(&shuffled).unwrap()).unwrap();
            prop_assert!(c >= 1.0 - 1e-12);
            prop_assert!((c - c2).abs() <= 1e-8 * c);
        }

        #[test]
        fn singular_values_scale_with_matrix(seed in any::<u64>(), c in -5.0f64..5.0) {
            let m = build_design_matrix(&random_rows(6, 4, seed)).unwrap().v;
            let s = singular_values(&m);
            let sc = singular_values(&(m.clone() * c));
            for (a, b) in s.iter().zip(&sc) {
                prop_assert!((a * c.abs() - b).abs() < 1e-10 * (1.0 + a));
            }
            // The normalization makes the rank criterion scale-free.
            prop_assume!(c.abs() > 1e-3);
            prop_assert_eq!(numeric_rank(&m, RANK_CUTOFF), numeric_rank(&(m * c), RANK_CUTOFF));
        }

        #[test]
        fn duplicate_row_never_raises_exact_rank(n in 1usize..10, p in 1usize..10, seed in any::<u64>(), pick in any::<prop::sample::Index>()) {
            let mut rows = random_rows(n, p, seed);
            let before = exact_rank(&build_design_matrix(&rows).unwrap().v);
            rows.push(rows[pick.index(n)].clone());
            let after = exact_rank(&build_design_matrix(&rows).unwrap().v);
            prop_assert_eq!(after, before);
        }
    }

    #[test]
    fn duplicate_row_can_lift_a_cutoff_count() {
        // Rows (1,0),(1,d): normalized columns meet at 45 degrees, so the
        // smaller singular value is sqrt(1 - 1/sqrt 2) = 0.541. Repeating
        // (1,0) widens the angle and lifts it to sqrt(1 - 1/sqrt 3) = 0.650.
        let v = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 0.3]);
        let w = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 1.0, 0.3, 1.0, 0.0]);
        let sv = normalized_singular_values(&v);
        let sw = normalized_singular_values(&w);
        assert!((sv[1] - (1.0 - 0.5f64.sqrt()).sqrt()).abs() < 1e-12);
        assert!((sw[1] - (1.0 - (1.0f64 / 3.0).sqrt()).sqrt()).abs() < 1e-12);
        assert_eq!((numeric_rank(&v, 0.6), numeric_rank(&w, 0.6)), (1, 2));
        assert_eq!((exact_rank(&v), exact_rank(&w)), (2, 2));
    }
}
