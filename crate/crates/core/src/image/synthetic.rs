//! Seeded synthetic sequences: a power-law Gaussian random field advected by a
//! fixed drift, plus a random-walk target trajectory.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;

use super::{Frame, ImageSequence, Point};
use crate::error::{Error, Result};
use crate::spectral::{fft2, radial_frequencies};

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticParams {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub seed: u64,
    /// Power spectrum falls off as `|f|^-spectral_exponent`.
    pub spectral_exponent: f64,
    /// Maximum Euclidean target displacement per frame, in pixels.
    pub target_speed: f64,
    /// Per-frame shift `(dx, dy)` of the underlying field.
    pub drift: (i64, i64),
}

impl Default for SyntheticParams {
    fn default() -> Self {
        SyntheticParams {
            width: 64,
            height: 64,
            frames: 5,
            seed: 0,
            spectral_exponent: 2.0,
            target_speed: 8.0,
            drift: (1, 1),
        }
    }
}

/// Periodic Gaussian field with the requested spectrum, rescaled to `[0, 1]`.
pub(crate) fn power_law_field(width: usize, height: usize, exponent: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut data: Vec<Complex64> = (0..width * height)
        .map(|_| Complex64::new(StandardNormal.sample(rng), 0.0))
        .collect();
    fft2(&mut data, width, height, false);
    for (c, f) in data.iter_mut().zip(radial_frequencies(width, height)) {
        *c *= if f == 0.0 { 0.0 } else { f.powf(-exponent / 2.0) };
    }
    fft2(&mut data, width, height, true);

    let field: Vec<f64> = data.iter().map(|c| c.re).collect();
    let lo = field.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = field.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    if span > 0.0 {
        field.iter().map(|v| ((v - lo) / span).clamp(0.0, 1.0)).collect()
    } else {
        vec![0.5; field.len()]
    }
}

fn roll(field: &[f64], width: usize, height: usize, dx: i64, dy: i64) -> Vec<f64> {
    let (w, h) = (width as i64, height as i64);
    let mut out = vec![0.0; field.len()];
    for y in 0..h {
        let sy = (y - dy).rem_euclid(h);
        for x in 0..w {
            let sx = (x - dx).rem_euclid(w);
            out[(y * w + x) as usize] = field[(sy * w + sx) as usize];
        }
    }
    out
}

fn random_walk(params: &SyntheticParams, rng: &mut ChaCha8Rng) -> Vec<Point> {
    let (w, h) = (params.width as i64, params.height as i64);
    let r = params.target_speed.max(0.0).floor() as i64;
    let steps: Vec<Point> = (-r..=r)
        .flat_map(|dy| (-r..=r).map(move |dx| Point::new(dx, dy)))
        .filter(|s| (s.x * s.x + s.y * s.y) as f64 <= params.target_speed * params.target_speed)
        .collect();
    let mut p = Point::new(rng.random_range(0..w), rng.random_range(0..h));
    let mut out = Vec::with_capacity(params.frames);
    out.push(p);
    for _ in 1..params.frames {
        let s = steps[rng.random_range(0..steps.len())];
        p = Point::new((p.x + s.x).clamp(0, w - 1), (p.y + s.y).clamp(0, h - 1));
        out.push(p);
    }
    out
}

/// Builds a reproducible sequence; the same parameters always give identical bits.
pub fn generate_synthetic_sequence(params: &SyntheticParams) -> Result<ImageSequence> {
    if params.width == 0 || params.height == 0 {
        return Err(Error::invalid(format!(
            "frame dimensions must be positive, got {}x{}",
            params.width, params.height
        )));
    }
    if params.frames == 0 {
        return Err(Error::EmptySequence);
    }
    if !params.spectral_exponent.is_finite() || !params.target_speed.is_finite() {
        return Err(Error::invalid("spectral exponent and target speed must be finite"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let field = power_law_field(params.width, params.height, params.spectral_exponent, &mut rng);
    let frames = (0..params.frames as i64)
        .map(|k| {
            let pixels = roll(&field, params.width, params.height, k * params.drift.0, k * params.drift.1);
            Frame::new(params.width, params.height, pixels)
        })
        .collect::<Result<Vec<_>>>()?;
    let targets = random_walk(params, &mut rng);
    ImageSequence::new(frames, targets)
}
