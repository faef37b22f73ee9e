//! Patch encoders over a dictionary matrix: minimum-norm least squares and the
//! l1-regularized QP in split form, plus whitening, quantization and entropy.

use std::collections::BTreeMap;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::gabor::GaborDictionary;
use crate::image::Region;
use crate::spectral::{fft2, radial_frequencies};

fn check_len(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::Dimension { expected, actual })
    }
}

/// Minimum-norm least squares via a cached SVD pseudo-inverse.
#[derive(Clone, Debug)]
pub struct LeastSquaresCoder {
    pinv: DMatrix<f64>,
}

impl LeastSquaresCoder {
    pub fn new(g: &DMatrix<f64>) -> Result<Self> {
        if g.is_empty() {
            return Err(Error::invalid("empty dictionary"));
        }
        let svd = g.clone().svd(true, true);
        let smax = svd.singular_values.max();
        let eps = smax * g.nrows().max(g.ncols()) as f64 * f64::EPSILON;
        let pinv = svd.pseudo_inverse(eps).map_err(|e| Error::invalid(e.to_string()))?;
        Ok(LeastSquaresCoder { pinv })
    }

    pub fn encode(&self, patch: &[f64]) -> Result<Vec<f64>> {
        check_len(self.pinv.ncols(), patch.len())?;
        Ok((&self.pinv * DVector::from_column_slice(patch)).data.into())
    }
}

pub fn encode_least_squares(g: &DMatrix<f64>, patch: &[f64]) -> Result<Vec<f64>> {
    check_len(g.nrows(), patch.len())?;
    LeastSquaresCoder::new(g)?.encode(patch)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct L1Config {
    pub lambda: f64,
    pub max_iter: usize,
    /// Stop once the componentwise KKT residual of the split QP is at most this.
    pub tol: f64,
    /// Use momentum with function-value restarts. Every accepted step still
    /// lowers the objective.
    pub accelerated: bool,
}

impl Default for L1Config {
    fn default() -> Self {
        L1Config { lambda: 0.0, max_iter: 10_000, tol: 1e-6, accelerated: false }
    }
}

#[derive(Clone, Debug)]
pub struct L1Solution {
    pub coeffs: Vec<f64>,
    /// Split variables `(a+, a-)`.
    pub split: Vec<f64>,
    /// QP objective `0.5 y'Py + q'y` after every accepted iteration, starting at `y = 0`.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// `max_i |min(y_i, (Py + q)_i)|`.
    pub kkt_residual: f64,
}

/// Projected gradient on the split QP. `H = G'G` and the step size are cached
/// so many patches share the setup cost.
#[derive(Clone, Debug)]
pub struct L1Coder {
    gt: DMatrix<f64>,
    h: DMatrix<f64>,
    lipschitz: f64,
    config: L1Config,
}

impl L1Coder {
    pub fn new(g: &DMatrix<f64>, config: L1Config) -> Result<Self> {
        if !(config.lambda >= 0.0 && config.lambda.is_finite()) {
            return Err(Error::invalid(format!("lambda must be a finite value >= 0, got {}", config.lambda)));
        }
        if g.is_empty() {
            return Err(Error::invalid("empty dictionary"));
        }
        let gt = g.transpose();
        let h = &gt * g;
        let lipschitz = power_iteration_split(&h, 50);
        Ok(L1Coder { gt, h, lipschitz, config })
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn solve(&self, patch: &[f64]) -> Result<L1Solution> {
        check_len(self.gt.ncols(), patch.len())?;
        let m = self.h.nrows();
        let lambda = self.config.lambda;
        let b = &self.gt * DVector::from_column_slice(patch);
        let step = if self.lipschitz > 0.0 { 1.0 / self.lipschitz } else { 0.0 };
        let diff = |y: &[f64]| DVector::from_iterator(m, (0..m).map(|i| y[i] - y[m + i]));
        // Projected gradient step from `y`, given `H a(y)`.
        let project_step = |y: &[f64], hy: &DVector<f64>| -> Vec<f64> {
            let r = 2.0 * (hy - &b);
            let mut z = Vec::with_capacity(2 * m);
            z.extend((0..m).map(|i| (y[i] - step * (r[i] + lambda)).max(0.0)));
            z.extend((0..m).map(|i| (y[m + i] - step * (-r[i] + lambda)).max(0.0)));
            z
        };
        // Exact change of the quadratic objective from `x` to `z`, written in
        // terms of the step so it keeps precision near the optimum:
        // grad(x)'d + 0.5 d'Pd = 2 (Hx - b)'da + da'H da + lambda sum(d).
        let change = |x: &[f64], hx: &DVector<f64>, z: &[f64]| -> (f64, DVector<f64>) {
            let d: Vec<f64> = z.iter().zip(x).map(|(a, c)| a - c).collect();
            let da = diff(&d);
            let hda = &self.h * &da;
            let delta = 2.0 * (hx - &b).dot(&da) + da.dot(&hda) + lambda * d.iter().sum::<f64>();
            (delta, hda)
        };

        let kkt = |x: &[f64], hx: &DVector<f64>| -> f64 {
            (0..m)
                .map(|i| {
                    let r = 2.0 * (hx[i] - b[i]);
                    x[i].min(r + lambda).abs().max(x[m + i].min(lambda - r).abs())
                })
                .fold(0.0, f64::max)
        };

        let mut x = vec![0.0; 2 * m];
        let mut hx = DVector::zeros(m);
        let mut fx = 0.0;
        let mut trace = vec![fx];
        // Extrapolated point and its `H a`, which is linear in the two iterates.
        let mut extrapolated: Option<(Vec<f64>, DVector<f64>)> = None;
        let mut t = 1.0f64;
        let mut iterations = 0;
        while iterations < self.config.max_iter && kkt(&x, &hx) > self.config.tol {
            iterations += 1;
            let mut z = match &extrapolated {
                Some((y, hy)) => project_step(y, hy),
                None => project_step(&x, &hx),
            };
            let (mut delta, mut hda) = change(&x, &hx, &z);
            if delta > 0.0 && extrapolated.is_some() {
                t = 1.0;
                z = project_step(&x, &hx);
                (delta, hda) = change(&x, &hx, &z);
            }
            if delta > 0.0 {
                // Rounding floor: no projected step lowers the objective.
                break;
            }
            let previous = std::mem::replace(&mut x, z);
            let h_previous = hx.clone();
            hx += hda;
            if iterations % 64 == 0 {
                hx = &self.h * diff(&x);
            }
            fx += delta;
            trace.push(fx);
            if self.config.accelerated {
                let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
                let beta = (t - 1.0) / t_next;
                let y = x.iter().zip(&previous).map(|(a, p)| a + beta * (a - p)).collect();
                let hy = &hx * (1.0 + beta) - h_previous * beta;
                extrapolated = Some((y, hy));
                t = t_next;
            }
        }

        let kkt_residual = kkt(&x, &(&self.h * diff(&x)));
        Ok(L1Solution {
            coeffs: (0..m).map(|i| x[i] - x[m + i]).collect(),
            split: x,
            objective_trace: trace,
            iterations,
            converged: kkt_residual <= self.config.tol,
            kkt_residual,
        })
    }
}

/// Largest eigenvalue of `P = 2 [[H, -H], [-H, H]]` by power iteration.
fn power_iteration_split(h: &DMatrix<f64>, iterations: usize) -> f64 {
    let m = h.nrows();
    let apply = |v: &[f64]| -> Vec<f64> {
        let d = DVector::from_iterator(m, (0..m).map(|i| v[i] - v[m + i]));
        let hd = 2.0 * (h * d);
        hd.iter().copied().chain(hd.iter().map(|x| -x)).collect()
    };
    let mut v: Vec<f64> = (0..2 * m).map(|i| 1.0 + 0.1 * ((i as f64) * 0.7).sin() - if i >= m { 1.0 } else { 0.0 }).collect();
    let mut estimate = 0.0;
    for _ in 0..iterations {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        let pv = apply(&v);
        estimate = v.iter().zip(&pv).map(|(a, b)| a * b).sum();
        v = pv;
    }
    estimate
}

pub fn encode_l1(g: &DMatrix<f64>, patch: &[f64], config: L1Config) -> Result<L1Solution> {
    L1Coder::new(g, config)?.solve(patch)
}

/// Squared reconstruction error `|Ga - I|^2`.
pub fn reconstruction_error(g: &DMatrix<f64>, coeffs: &[f64], patch: &[f64]) -> f64 {
    let r = g * DVector::from_column_slice(coeffs) - DVector::from_column_slice(patch);
    r.norm_squared()
}

/// Either encoder, chosen once per dictionary. `lambda = 0` selects least squares.
#[derive(Clone, Debug)]
pub enum PatchCoder {
    LeastSquares(LeastSquaresCoder),
    L1(L1Coder),
}

impl PatchCoder {
    pub fn new(dict: &GaborDictionary, config: L1Config) -> Result<Self> {
        if config.lambda == 0.0 {
            Ok(PatchCoder::LeastSquares(LeastSquaresCoder::new(&dict.matrix)?))
        } else {
            Ok(PatchCoder::L1(L1Coder::new(&dict.matrix, config)?))
        }
    }

    pub fn encode(&self, patch: &[f64]) -> Result<Vec<f64>> {
        match self {
            PatchCoder::LeastSquares(c) => c.encode(patch),
            PatchCoder::L1(c) => Ok(c.solve(patch)?.coeffs),
        }
    }
}

/// Concatenated codes of the region's `patch_side` tiles in row-major tile order.
pub fn encode_region(coder: &PatchCoder, region: &Region, patch_side: usize) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for tile in region.tiles(patch_side)? {
        out.extend(coder.encode(&tile)?);
    }
    Ok(out)
}

/// Applies `W(f) = |f| exp(-(|f|/f0)^4)` in the frequency domain. The zero
/// frequency gets weight zero. Returns a row-major grid of the input's size.
pub fn whiten_image(pixels: &[f64], width: usize, height: usize, cutoff: f64) -> Result<Vec<f64>> {
    if width == 0 || height == 0 {
        return Err(Error::invalid("cannot whiten an empty image"));
    }
    check_len(width * height, pixels.len())?;
    let mut data: Vec<Complex64> = pixels.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft2(&mut data, width, height, false);
    for (c, f) in data.iter_mut().zip(radial_frequencies(width, height)) {
        *c *= f * (-(f / cutoff).powi(4)).exp();
    }
    fft2(&mut data, width, height, true);
    Ok(data.iter().map(|c| c.re).collect())
}

pub const DEFAULT_WHITENING_CUTOFF: f64 = 0.4;

/// Integer levels in `[-128, 127]` with unit bin width.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QuantizedCode {
    pub levels: Vec<i32>,
    pub bin_width: u32,
}

pub fn quantize_value(v: f64) -> i32 {
    v.round().clamp(-128.0, 127.0) as i32
}

pub fn quantize_uniform(coeffs: &[f64]) -> QuantizedCode {
    QuantizedCode { levels: coeffs.iter().map(|&v| quantize_value(v)).collect(), bin_width: 1 }
}

/// 8-bit gray levels of `[0, 1]` intensities.
pub fn quantize_pixels(pixels: &[f64]) -> Vec<i32> {
    pixels.iter().map(|v| (v * 255.0).round().clamp(0.0, 255.0) as i32).collect()
}

/// Plug-in entropy of the empirical histogram in bits per symbol.
pub fn estimate_entropy(values: &[i32], bin_count: usize) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::invalid("entropy of an empty sample"));
    }
    let mut counts: BTreeMap<i32, usize> = BTreeMap::new();
    for &v in values {
        *counts.entry(v).or_default() += 1;
    }
    if counts.len() > bin_count {
        return Err(Error::invalid(format!("{} distinct values exceed {bin_count} bins", counts.len())));
    }
    let n = values.len() as f64;
    let h: f64 = counts
        .values()
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum();
    Ok(h.max(0.0))
}

/// `log2` of the typical-set size `2^(N H)`.
pub fn typical_count_exponent(entropy_bits: f64, n: usize) -> f64 {
    entropy_bits * n as f64
}

/// One CSV row per patch: `patch,c0,c1,...`.
pub fn write_codes_csv<W: Write>(out: W, codes: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let width = codes.first().map_or(0, Vec::len);
    let mut header = vec!["patch".to_string()];
    header.extend((0..width).map(|i| format!("c{i}")));
    let csv_err = |e: csv::Error| Error::invalid(format!("csv: {e}"));
    w.write_record(&header).map_err(csv_err)?;
    for (i, code) in codes.iter().enumerate() {
        check_len(width, code.len())?;
        let mut row = vec![i.to_string()];
        row.extend(code.iter().map(|v| format!("{v:e}")));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io("csv output", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    fn random_vec(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn identity_dictionary_returns_patch() {
        let patch = random_vec(6, 1);
        let a = encode_least_squares(&DMatrix::identity(6, 6), &patch).unwrap();
        for (x, y) in a.iter().zip(&patch) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn orthonormal_columns_project() {
        let q = random_matrix(8, 5, 2).qr().q();
        let patch = random_vec(8, 3);
        let a = encode_least_squares(&q, &patch).unwrap();
        let expected = q.transpose() * DVector::from_column_slice(&patch);
        for (x, y) in a.iter().zip(expected.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn residual_is_orthogonal_to_columns() {
        let g = random_matrix(20, 30, 4);
        let patch = random_vec(20, 5);
        let a = encode_least_squares(&g, &patch).unwrap();
        let r = &g * DVector::from_column_slice(&a) - DVector::from_column_slice(&patch);
        let normal = g.transpose() * r;
        assert!(normal.amax() < 1e-8);

        // Minimum norm: the dual formula a = G'(GG')^-1 I gives the same vector.
        let gg = &g * g.transpose();
        let dual = g.transpose() * gg.lu().solve(&DVector::from_column_slice(&patch)).unwrap();
        for (x, y) in a.iter().zip(dual.iter()) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let g = random_matrix(4, 4, 6);
        assert!(matches!(encode_least_squares(&g, &[0.0; 3]), Err(Error::Dimension { expected: 4, actual: 3 })));
        assert!(encode_l1(&g, &[0.0; 5], L1Config::default()).is_err());
    }

    #[test]
    fn zero_lambda_matches_least_squares_objective() {
        let g = random_matrix(12, 8, 7);
        let patch = random_vec(12, 8);
        let ls = encode_least_squares(&g, &patch).unwrap();
        let cfg = L1Config { lambda: 0.0, max_iter: 200_000, tol: 1e-16, accelerated: true };
        let l1 = encode_l1(&g, &patch, cfg).unwrap();
        let (e_ls, e_l1) = (reconstruction_error(&g, &ls, &patch), reconstruction_error(&g, &l1.coeffs, &patch));
        assert!((e_ls - e_l1).abs() < 1e-6, "{e_ls} vs {e_l1}");
    }

    #[test]
    fn large_lambda_gives_zero_code() {
        let g = random_matrix(10, 15, 9);
        let patch = random_vec(10, 10);
        let gti = g.transpose() * DVector::from_column_slice(&patch);
        let lambda = 2.0 * gti.amax();
        let sol = encode_l1(&g, &patch, L1Config { lambda, ..Default::default() }).unwrap();
        assert!(sol.coeffs.iter().all(|&a| a == 0.0));
        assert!(sol.converged);
        // KKT at zero: the gradient q = (lambda - 2G'I, lambda + 2G'I) is nonnegative.
        assert!(gti.iter().all(|v| lambda - 2.0 * v >= 0.0 && lambda + 2.0 * v >= 0.0));
        assert_eq!(sol.kkt_residual, 0.0);
    }

    #[test]
    fn scalar_soft_threshold() {
        let g = DMatrix::from_element(1, 1, 1.0);
        for accelerated in [false, true] {
            let cfg = L1Config { lambda: 1.0, max_iter: 10_000, tol: 1e-20, accelerated };
            let sol = encode_l1(&g, &[1.0], cfg).unwrap();
            assert!((sol.coeffs[0] - 0.5).abs() < 1e-9, "{}", sol.coeffs[0]);
        }
    }

    #[test]
    fn power_iteration_matches_eigenvalue() {
        let g = random_matrix(9, 6, 11);
        let coder = L1Coder::new(&g, L1Config::default()).unwrap();
        let h = g.transpose() * &g;
        let top = h.symmetric_eigen().eigenvalues.max();
        assert!((coder.lipschitz() - 4.0 * top).abs() < 1e-6 * top);
    }

    #[test]
    fn whitening_constant_image_is_zero() {
        let out = whiten_image(&[0.3; 48], 8, 6, 0.4).unwrap();
        assert!(out.iter().all(|v| v.abs() < 1e-14));
        assert_eq!(out.len(), 48);
    }

    fn sample_adjacent_corr(grid: &[f64], width: usize, height: usize, pairs: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut a, mut b) = (Vec::new(), Vec::new());
        for _ in 0..pairs {
            let x = rng.random_range(0..width - 1);
            let y = rng.random_range(0..height);
            a.push(grid[y * width + x]);
            b.push(grid[y * width + x + 1]);
        }
        crate::analysis::correlation(&a, &b).unwrap()
    }

    /// Lag-one autocorrelation of a stationary field with power spectrum `s`
    /// on an `n x n` torus, by direct summation over frequencies.
    fn spectral_lag_one(n: usize, s: impl Fn(f64) -> f64) -> f64 {
        let freq = |i: usize| if i < n.div_ceil(2) { i as f64 / n as f64 } else { i as f64 / n as f64 - 1.0 };
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                let (fx, fy) = (freq(j), freq(i));
                let f = (fx * fx + fy * fy).sqrt();
                let p = if f == 0.0 { 0.0 } else { s(f) };
                num += p * (2.0 * std::f64::consts::PI * fx).cos();
                den += p;
            }
        }
        num / den
    }

    #[test]
    fn whitening_white_noise_matches_spectral_oracle() {
        let n = 128;
        let w2 = |f: f64| (f * (-(f / 0.4f64).powi(4)).exp()).powi(2);
        let expected = spectral_lag_one(n, w2);
        // The band-limiting corner of the filter leaves a mild positive correlation.
        assert!((expected - 0.2767).abs() < 5e-3, "oracle {expected}");

        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let noise: Vec<f64> = (0..n * n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let out = whiten_image(&noise, n, n, 0.4).unwrap();
        let c = sample_adjacent_corr(&out, n, n, 10_000, 14);
        assert!((c - expected).abs() < 0.05, "sampled {c} vs oracle {expected}");
    }

    #[test]
    fn whitening_reduces_pink_correlation() {
        let n = 128;
        let before_oracle = spectral_lag_one(n, |f| f.powi(-2));
        let after_oracle = spectral_lag_one(n, |f| f.powi(-2) * (f * (-(f / 0.4f64).powi(4)).exp()).powi(2));
        assert!((after_oracle - 0.506).abs() < 5e-3, "oracle {after_oracle}");
        assert!(after_oracle < before_oracle);

        let seq = crate::image::generate_synthetic_sequence(&crate::image::SyntheticParams {
            width: n,
            height: n,
            frames: 1,
            seed: 17,
            ..Default::default()
        })
        .unwrap();
        let px = seq.frame(0).pixels();
        let before = sample_adjacent_corr(px, n, n, 10_000, 18);
        let after = sample_adjacent_corr(&whiten_image(px, n, n, 0.4).unwrap(), n, n, 10_000, 18);
        assert!(after < before, "{after} vs {before}");
        assert!((after - after_oracle).abs() < 0.1, "sampled {after} vs oracle {after_oracle}");
    }

    #[test]
    fn quantization_examples() {
        assert_eq!(quantize_value(0.4), 0);
        assert_eq!(quantize_value(-137.2), -128);
        assert_eq!(quantize_value(140.8), 127);
        assert_eq!(quantize_value(127.49), 127);
        assert_eq!(quantize_value(-0.6), -1);
        assert_eq!(quantize_uniform(&[1.2, -3.7]).levels, vec![1, -4]);
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(estimate_entropy(&[5; 100], 256).unwrap(), 0.0);
        let uniform: Vec<i32> = (-128..128).flat_map(|v| [v, v, v]).collect();
        assert_eq!(estimate_entropy(&uniform, 256).unwrap(), 8.0);
        assert_eq!(estimate_entropy(&[0, 1, 0, 1], 256).unwrap(), 1.0);
        assert!(estimate_entropy(&[], 256).is_err());
    }

    #[test]
    fn typical_counts() {
        assert_eq!(typical_count_exponent(8.0, 1), 8.0);
        assert_eq!(typical_count_exponent(2.5, 100), 250.0);
        assert_eq!(typical_count_exponent(0.0, 100), 0.0);
        // 2^250 is about 10^75.3, the order of 6^100 = 10^77.8.
        assert!((250.0 * 2f64.log10() - 75.26).abs() < 0.01);
    }

    #[test]
    fn csv_rows() {
        let mut buf = Vec::new();
        write_codes_csv(&mut buf, &[vec![1.0, -0.5], vec![0.0, 2.0]]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next(), Some("patch,c0,c1"));
        assert_eq!(text.lines().count(), 3);
    }

    proptest! {
        #[test]
        fn l1_objective_never_increases(seed in any::<u64>(), lambda in 0.0f64..2.0, accelerated in any::<bool>()) {
            let g = random_matrix(6, 9, seed);
            let patch = random_vec(6, seed ^ 1);
            let cfg = L1Config { lambda, max_iter: 300, tol: 0.0, accelerated };
            let sol = encode_l1(&g, &patch, cfg).unwrap();
            for w in sol.objective_trace.windows(2) {
                prop_assert!(w[1] <= w[0]);
            }
        }

        #[test]
        fn ls_beats_perturbations(seed in any::<u64>(), scale in 1e-4f64..1.0) {
            let g = random_matrix(7, 5, seed);
            let patch = random_vec(7, seed ^ 2);
            let a = encode_least_squares(&g, &patch).unwrap();
            let best = reconstruction_error(&g, &a, &patch);
            let delta = random_vec(5, seed ^ 3);
            let moved: Vec<f64> = a.iter().zip(&delta).map(|(x, d)| x + scale * d).collect();
            prop_assert!(reconstruction_error(&g, &moved, &patch) >= best - 1e-12);
        }

        #[test]
        fn full_row_rank_reconstructs(seed in any::<u64>()) {
            let g = random_matrix(6, 10, seed);
            let patch = random_vec(6, seed ^ 4);
            let a = encode_least_squares(&g, &patch).unwrap();
            let norm = patch.iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assert!(reconstruction_error(&g, &a, &patch).sqrt() < 1e-6 * norm);
        }

        #[test]
        fn quantization_error_is_at_most_half(v in -128.0f64..127.0) {
            prop_assert!((quantize_value(v) as f64 - v).abs() <= 0.5);
        }

        #[test]
        fn entropy_within_bounds(values in proptest::collection::vec(-4i32..4, 1..200)) {
            let h = estimate_entropy(&values, 8).unwrap();
            prop_assert!((0.0..=3.0 + 1e-12).contains(&h));
        }
    }
}
