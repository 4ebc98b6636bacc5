use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{FitError, ResonatorModel};
use crate::trace_io::ComplexTrace;

/// `n` equally spaced frequencies covering `span` Hz centered on `center`.
pub fn linear_grid(center: f64, span: f64, n: usize) -> Vec<f64> {
    let start = center - 0.5 * span;
    let step = span / (n.max(2) - 1) as f64;
    (0..n).map(|i| start + step * i as f64).collect()
}

/// Grid of `n` points covering `bandwidths` loaded bandwidths around the resonance.
pub fn bandwidth_grid(model: &ResonatorModel, bandwidths: f64, n: usize) -> Vec<f64> {
    linear_grid(model.f_res, bandwidths * model.bandwidth(), n)
}

/// Evaluates the one-pole model on `grid` and adds complex Gaussian noise.
///
/// `noise_sigma` is the standard deviation of each of the real and imaginary
/// parts. The output is a deterministic function of `seed`.
pub fn synth_s21(
    model: &ResonatorModel,
    grid: &[f64],
    noise_sigma: f64,
    seed: u64,
) -> Result<ComplexTrace, FitError> {
    let invalid = || FitError::InvalidInput(format!("noise sigma must be finite and ≥ 0, got {noise_sigma}"));
    if !(noise_sigma >= 0.0) {
        return Err(invalid());
    }
    let normal = Normal::new(0.0, noise_sigma).map_err(|_| invalid())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = grid
        .iter()
        .map(|&f| {
            let noise = Complex64::new(normal.sample(&mut rng), normal.sample(&mut rng));
            model.evaluate(f) + noise
        })
        .collect();
    Ok(ComplexTrace::new(grid.to_vec(), values, "S21")?)
}
