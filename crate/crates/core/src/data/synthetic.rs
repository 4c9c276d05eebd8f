//! Two-dimensional toy generators: interleaved half moons and a two-arm spiral.
//! The first half of the rows is normal, the second half abnormal.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::dataset::{Label, LabeledDataset};
use crate::error::{Error, Result};
use crate::numcore::Matrix;

/// Default noise level of [`generate_moons`].
pub const MOONS_NOISE: f64 = 0.1;
/// Default noise level of [`generate_spiral`].
pub const SPIRAL_NOISE: f64 = 0.1;
/// Default number of turns of each spiral arm.
pub const SPIRAL_TURNS: f64 = 0.75;

fn noise(std: f64) -> Result<Option<Normal<f64>>> {
    if !(std >= 0.0) || !std.is_finite() {
        return Err(Error::Domain(format!("noise_std must be >= 0, got {std}")));
    }
    if std == 0.0 {
        return Ok(None);
    }
    Normal::new(0.0, std)
        .map(Some)
        .map_err(|e| Error::Domain(e.to_string()))
}

fn assemble(name: &str, points: Vec<[f64; 2]>, n_normal: usize) -> Result<LabeledDataset> {
    let n = points.len();
    let data = points.into_iter().flatten().collect();
    let y = (0..n)
        .map(|i| {
            if i < n_normal {
                Label::Normal
            } else {
                Label::Abnormal
            }
        })
        .collect();
    LabeledDataset::new(name, Matrix::from_vec(n, 2, data)?, y)
}

/// Two interleaved half circles.
///
/// Normal points lie on the upper unit semicircle; abnormal points on the
/// flipped semicircle `(1 − cos t, 0.5 − sin t)`. Angles are evenly spaced,
/// Gaussian noise is added per coordinate.
pub fn generate_moons(n: usize, noise_std: f64, seed: u64) -> Result<LabeledDataset> {
    if n < 2 {
        return Err(Error::Domain(format!("moons need n >= 2, got {n}")));
    }
    let dist = noise(noise_std)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_normal = n / 2;
    let n_abnormal = n - n_normal;
    let angle = |i: usize, m: usize| {
        if m <= 1 {
            PI / 2.0
        } else {
            PI * i as f64 / (m - 1) as f64
        }
    };
    let mut points = Vec::with_capacity(n);
    for i in 0..n_normal {
        let t = angle(i, n_normal);
        points.push([t.cos(), t.sin()]);
    }
    for i in 0..n_abnormal {
        let t = angle(i, n_abnormal);
        points.push([1.0 - t.cos(), 0.5 - t.sin()]);
    }
    if let Some(d) = dist {
        for p in &mut points {
            p[0] += d.sample(&mut rng);
            p[1] += d.sample(&mut rng);
        }
    }
    assemble("moons", points, n_normal)
}

/// Two interleaved Archimedean arms `r = a·θ`, `θ ∈ (0, 2π·turns]`, the second
/// rotated by `π`. `a` is chosen so that the outermost radius is 1. Angles are
/// taken at cell midpoints so no point sits on the shared origin.
pub fn generate_spiral(n: usize, noise_std: f64, turns: f64, seed: u64) -> Result<LabeledDataset> {
    if n < 2 {
        return Err(Error::Domain(format!("spiral needs n >= 2, got {n}")));
    }
    if !(turns > 0.0) || !turns.is_finite() {
        return Err(Error::Domain(format!("turns must be > 0, got {turns}")));
    }
    let dist = noise(noise_std)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let theta_max = 2.0 * PI * turns;
    let a = spiral_pitch(turns);
    let n_normal = n / 2;
    let n_abnormal = n - n_normal;
    let mut points = Vec::with_capacity(n);
    for (count, phase) in [(n_normal, 0.0), (n_abnormal, PI)] {
        for i in 0..count {
            let theta = theta_max * (i as f64 + 0.5) / count as f64;
            let r = a * theta;
            points.push([r * (theta + phase).cos(), r * (theta + phase).sin()]);
        }
    }
    if let Some(d) = dist {
        for p in &mut points {
            p[0] += d.sample(&mut rng);
            p[1] += d.sample(&mut rng);
        }
    }
    assemble("spiral", points, n_normal)
}

/// Arm pitch `a` of [`generate_spiral`] for a given number of turns.
pub fn spiral_pitch(turns: f64) -> f64 {
    1.0 / (2.0 * PI * turns)
}
