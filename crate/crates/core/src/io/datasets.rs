use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// Points on noisy concentric circles with their 1-based circle index.
#[derive(Debug, Clone, PartialEq)]
pub struct Circles {
    /// `(|radii|·n_per) × 2`, grouped by circle.
    pub points: DMatrix<f64>,
    pub labels: Vec<usize>,
}

/// Samples `n_per` points per circle: uniform angle, radius `rᵢ + N(0, noise²)`.
pub fn gen_circles(seed: u64, n_per: usize, radii: &[f64], noise: f64) -> Result<Circles> {
    if radii.iter().any(|&r| !(r > 0.0)) {
        return Err(Error::Invalid("radii must be positive".into()));
    }
    for (i, a) in radii.iter().enumerate() {
        if radii[..i].contains(a) {
            return Err(Error::Invalid(format!("radius {a} repeated")));
        }
    }
    if !(noise >= 0.0) {
        return Err(Error::Invalid(format!("noise must be nonnegative, got {noise}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, noise).map_err(|e| Error::Invalid(e.to_string()))?;
    let total = radii.len() * n_per;
    let mut points = DMatrix::zeros(total, 2);
    let mut labels = Vec::with_capacity(total);
    for (c, &r) in radii.iter().enumerate() {
        for i in 0..n_per {
            let theta = rng.random_range(0.0..std::f64::consts::TAU);
            let rho = r + normal.sample(&mut rng);
            let row = c * n_per + i;
            points[(row, 0)] = rho * theta.cos();
            points[(row, 1)] = rho * theta.sin();
            labels.push(c + 1);
        }
    }
    Ok(Circles { points, labels })
}
