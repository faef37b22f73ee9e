//! Scale-invariant 2D Gabor atoms: Gaussian-copula sampling of the spatial
//! parameters through Pareto marginals, rendering, and dictionary assembly.

use std::f64::consts::{PI, SQRT_2};

use nalgebra::DMatrix;
use rand::{Rng, RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Parameters of the copula-plus-Pareto scheme for `(sigma_x, sigma_y, lambda)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CopulaModel {
    /// Loading of the shared normal draw onto the wavelength.
    pub rho: f64,
    pub alpha: [f64; 3],
    pub beta: [f64; 3],
}

impl Default for CopulaModel {
    fn default() -> Self {
        CopulaModel { rho: 0.9, alpha: [2.0, 2.0, 2.0], beta: [1.0, 1.0, 2.0] }
    }
}

impl CopulaModel {
    pub fn validate(&self) -> Result<()> {
        if !self.rho.is_finite() {
            return Err(Error::invalid("rho must be finite"));
        }
        for i in 0..3 {
            let (a, b) = (self.alpha[i], self.beta[i]);
            if !(a.is_finite() && a > 0.0 && b.is_finite() && b > 0.0) {
                return Err(Error::invalid(format!("alpha{} and beta{} must be positive, got {a}, {b}", i + 1, i + 1)));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaborParams {
    /// Orientation in `[0, pi)`.
    pub phi: f64,
    /// Phase in `[0, 2 pi)`.
    pub varphi: f64,
    pub sigma_x: f64,
    pub sigma_y: f64,
    pub lambda: f64,
    pub x0: f64,
    pub y0: f64,
    pub amplitude: f64,
}

impl GaborParams {
    const FIELDS: usize = 8;

    fn to_array(self) -> [f64; Self::FIELDS] {
        [self.phi, self.varphi, self.sigma_x, self.sigma_y, self.lambda, self.x0, self.y0, self.amplitude]
    }

    fn from_array(a: [f64; Self::FIELDS]) -> Self {
        GaborParams {
            phi: a[0],
            varphi: a[1],
            sigma_x: a[2],
            sigma_y: a[3],
            lambda: a[4],
            x0: a[5],
            y0: a[6],
            amplitude: a[7],
        }
    }

    fn is_valid(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
            && self.sigma_x > 0.0
            && self.sigma_y > 0.0
            && self.lambda > 0.0
    }
}

/// Pareto quantile `beta / (1 - x)^(1/alpha)`.
pub fn pareto_icdf(x: f64, alpha: f64, beta: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&x) {
        return Err(Error::invalid(format!("pareto quantile needs 0 <= x < 1, got {x}")));
    }
    if !(alpha > 0.0 && beta > 0.0) {
        return Err(Error::invalid("pareto alpha and beta must be positive"));
    }
    Ok(beta / (1.0 - x).powf(1.0 / alpha))
}

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / SQRT_2)
}

/// Pareto quantile at `NCDF(z)`, computed from the upper tail `1 - NCDF(z)` so
/// large `z` keeps full precision instead of rounding the probability to 1.
fn pareto_of_normal(z: f64, alpha: f64, beta: f64) -> f64 {
    let tail = 0.5 * libm::erfc(z / SQRT_2);
    beta / tail.max(f64::MIN_POSITIVE).powf(1.0 / alpha)
}

/// Spatial triple for a given shared normal draw `z`.
pub fn spatial_params_from_normal(model: &CopulaModel, z: f64) -> (f64, f64, f64) {
    let latent = [z, z, model.rho * z];
    let out: Vec<f64> = (0..3).map(|i| pareto_of_normal(latent[i], model.alpha[i], model.beta[i])).collect();
    (out[0], out[1], out[2])
}

pub fn sample_spatial_params<R: Rng + ?Sized>(model: &CopulaModel, rng: &mut R) -> (f64, f64, f64) {
    let z: f64 = StandardNormal.sample(rng);
    spatial_params_from_normal(model, z)
}

pub fn sample_gabor<R: Rng + ?Sized>(model: &CopulaModel, patch_side: usize, rng: &mut R) -> GaborParams {
    let (sigma_x, sigma_y, lambda) = sample_spatial_params(model, rng);
    let side = patch_side as f64;
    GaborParams {
        phi: rng.random_range(0.0..PI),
        varphi: rng.random_range(0.0..2.0 * PI),
        sigma_x,
        sigma_y,
        lambda,
        x0: rng.random_range(0.0..side),
        y0: rng.random_range(0.0..side),
        amplitude: 1.0,
    }
}

/// Renders an atom on a `patch_side x patch_side` grid, flattened row-major
/// with `i` the row and `j` the column.
pub fn render_gabor(p: &GaborParams, patch_side: usize) -> Vec<f64> {
    let (s, c) = p.phi.sin_cos();
    let k = 2.0 * PI / p.lambda;
    let mut out = Vec::with_capacity(patch_side * patch_side);
    for i in 0..patch_side {
        let di = i as f64 - p.x0;
        for j in 0..patch_side {
            let dj = j as f64 - p.y0;
            let ti = c * di - s * dj;
            let tj = s * di + c * dj;
            let envelope = (-0.5 * (ti * ti / (p.sigma_x * p.sigma_x) + tj * tj / (p.sigma_y * p.sigma_y))).exp();
            out.push(p.amplitude * envelope * (k * tj + p.varphi).cos());
        }
    }
    out
}

/// A `d x m` matrix of rendered atoms and the parameters that produced them.
#[derive(Clone, Debug, PartialEq)]
pub struct GaborDictionary {
    pub patch_side: usize,
    pub seed: u64,
    pub model: CopulaModel,
    /// Columns were scaled to unit l2 norm after rendering.
    pub normalized: bool,
    pub params: Vec<GaborParams>,
    pub matrix: DMatrix<f64>,
}

impl GaborDictionary {
    pub fn d(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn m(&self) -> usize {
        self.matrix.ncols()
    }
}

/// Samples and renders `m` atoms. Atom `j` draws from its own ChaCha stream
/// `j` under `seed`, so any subset can be regenerated independently.
pub fn build_dictionary(
    model: &CopulaModel,
    patch_side: usize,
    m: usize,
    seed: u64,
    normalize: bool,
) -> Result<GaborDictionary> {
    model.validate()?;
    if patch_side == 0 || m == 0 {
        return Err(Error::invalid("patch side and atom count must be positive"));
    }
    let d = patch_side * patch_side;
    let mut params = Vec::with_capacity(m);
    let mut matrix = DMatrix::zeros(d, m);
    for j in 0..m {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(j as u64);
        let p = sample_gabor(model, patch_side, &mut rng);
        let mut atom = render_gabor(&p, patch_side);
        if normalize {
            let norm = atom.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                atom.iter_mut().for_each(|v| *v /= norm);
            }
        }
        matrix.column_mut(j).copy_from_slice(&atom);
        params.push(p);
    }
    Ok(GaborDictionary { patch_side, seed, model: *model, normalized: normalize, params, matrix })
}

const MAGIC: &str = "GABORDICT1";

/// One text header line, then `m` parameter records of 8 little-endian f64,
/// then the matrix column-major as little-endian f64.
pub fn encode_dictionary(dict: &GaborDictionary) -> Vec<u8> {
    let m = &dict.model;
    let header = format!(
        "{MAGIC} d={} m={} seed={} side={} normalized={} rho={:e} alpha={:e},{:e},{:e} beta={:e},{:e},{:e}\n",
        dict.d(),
        dict.m(),
        dict.seed,
        dict.patch_side,
        u8::from(dict.normalized),
        m.rho,
        m.alpha[0],
        m.alpha[1],
        m.alpha[2],
        m.beta[0],
        m.beta[1],
        m.beta[2],
    );
    let mut out = header.into_bytes();
    for p in &dict.params {
        for v in p.to_array() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    for v in dict.matrix.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn header_value<'a>(fields: &[(&'a str, &'a str)], key: &str) -> Result<&'a str> {
    fields
        .iter()
        .find(|(k, _)| *k == key)
        .map(|(_, v)| *v)
        .ok_or_else(|| Error::parse(0, format!("dictionary header is missing `{key}`")))
}

fn parse_num<T: std::str::FromStr>(s: &str, key: &str) -> Result<T> {
    s.parse().map_err(|_| Error::parse(0, format!("invalid `{key}` value `{s}`")))
}

fn parse_triple(s: &str, key: &str) -> Result<[f64; 3]> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(Error::parse(0, format!("`{key}` needs three values")));
    }
    Ok([parse_num(parts[0], key)?, parse_num(parts[1], key)?, parse_num(parts[2], key)?])
}

pub fn decode_dictionary(bytes: &[u8]) -> Result<GaborDictionary> {
    let newline = bytes
        .iter()
        .take(4096)
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::parse(0, "missing dictionary header line"))?;
    let header = std::str::from_utf8(&bytes[..newline]).map_err(|_| Error::parse(0, "header is not UTF-8"))?;
    let mut words = header.split_whitespace();
    if words.next() != Some(MAGIC) {
        return Err(Error::parse(0, "bad dictionary magic"));
    }
    let fields: Vec<(&str, &str)> = words
        .map(|w| w.split_once('=').ok_or_else(|| Error::parse(0, format!("malformed header field `{w}`"))))
        .collect::<Result<_>>()?;

    let d: usize = parse_num(header_value(&fields, "d")?, "d")?;
    let m: usize = parse_num(header_value(&fields, "m")?, "m")?;
    let seed: u64 = parse_num(header_value(&fields, "seed")?, "seed")?;
    let side: usize = parse_num(header_value(&fields, "side")?, "side")?;
    let normalized = match header_value(&fields, "normalized")? {
        "0" => false,
        "1" => true,
        other => return Err(Error::parse(0, format!("invalid `normalized` value `{other}`"))),
    };
    let model = CopulaModel {
        rho: parse_num(header_value(&fields, "rho")?, "rho")?,
        alpha: parse_triple(header_value(&fields, "alpha")?, "alpha")?,
        beta: parse_triple(header_value(&fields, "beta")?, "beta")?,
    };
    model.validate()?;
    if m == 0 || side == 0 || side.checked_mul(side) != Some(d) {
        return Err(Error::parse(0, format!("inconsistent shape d={d} m={m} side={side}")));
    }

    let body = &bytes[newline + 1..];
    let values = m
        .checked_mul(GaborParams::FIELDS)
        .and_then(|a| d.checked_mul(m).and_then(|b| a.checked_add(b)))
        .ok_or_else(|| Error::parse(newline + 1, "dictionary size overflows"))?;
    if values.checked_mul(8) != Some(body.len()) {
        return Err(Error::parse(
            newline + 1,
            format!("expected {values} f64 values after header, found {} bytes", body.len()),
        ));
    }
    let mut floats = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")));

    let mut params = Vec::with_capacity(m);
    for j in 0..m {
        let mut a = [0.0; GaborParams::FIELDS];
        a.iter_mut().for_each(|v| *v = floats.next().expect("length checked"));
        let p = GaborParams::from_array(a);
        if !p.is_valid() {
            return Err(Error::parse(newline + 1 + j * GaborParams::FIELDS * 8, format!("invalid parameters for atom {j}")));
        }
        params.push(p);
    }
    let data: Vec<f64> = floats.collect();
    if let Some(i) = data.iter().position(|v| !v.is_finite()) {
        return Err(Error::parse(newline + 1 + (m * GaborParams::FIELDS + i) * 8, "non-finite matrix entry"));
    }
    let matrix = DMatrix::from_vec(d, m, data);
    Ok(GaborDictionary { patch_side: side, seed, model, normalized, params, matrix })
}
