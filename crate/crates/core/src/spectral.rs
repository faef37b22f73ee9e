//! Small 2D FFT helpers over row-major grids.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

/// In-place 2D DFT of a `width x height` row-major grid. The inverse transform
/// is normalized by `1 / (width * height)`.
pub(crate) fn fft2(data: &mut [Complex64], width: usize, height: usize, inverse: bool) {
    debug_assert_eq!(data.len(), width * height);
    let mut planner = FftPlanner::<f64>::new();
    let (row_fft, col_fft) = if inverse {
        (planner.plan_fft_inverse(width), planner.plan_fft_inverse(height))
    } else {
        (planner.plan_fft_forward(width), planner.plan_fft_forward(height))
    };

    for row in data.chunks_exact_mut(width) {
        row_fft.process(row);
    }

    let mut column = vec![Complex64::default(); height];
    for x in 0..width {
        for (y, c) in column.iter_mut().enumerate() {
            *c = data[y * width + x];
        }
        col_fft.process(&mut column);
        for (y, c) in column.iter().enumerate() {
            data[y * width + x] = *c;
        }
    }

    if inverse {
        let scale = 1.0 / (width * height) as f64;
        for c in data.iter_mut() {
            *c *= scale;
        }
    }
}

/// Signed DFT frequency (cycles/sample) of bin `i` out of `n`, numpy `fftfreq` convention.
pub(crate) fn fftfreq(i: usize, n: usize) -> f64 {
    let half = n.div_ceil(2);
    let signed = if i < half { i as f64 } else { i as f64 - n as f64 };
    signed / n as f64
}

/// Radial frequency magnitude for every bin of a `width x height` grid.
pub(crate) fn radial_frequencies(width: usize, height: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(width * height);
    for y in 0..height {
        let fy = fftfreq(y, height);
        for x in 0..width {
            let fx = fftfreq(x, width);
            out.push((fx * fx + fy * fy).sqrt());
        }
    }
    out
}
