//! Cone-shaped revision templates.

use ndarray::Array2;

/// A d' x d' weight window that falls off linearly with distance from the
/// center. Distance is normalised by the window half-width, so lambda = 1
/// reaches zero exactly at the window border.
pub fn cone_template(d_prime: usize, lambda: f64) -> Array2<f64> {
    assert!(d_prime % 2 == 1, "template needs a center cell");
    assert!(lambda > 0.0, "lambda must be positive");
    let half = (d_prime / 2) as f64;
    let mut template = Array2::zeros((d_prime, d_prime));
    for i in 0..d_prime {
        for j in 0..d_prime {
            let dy = i as f64 - half;
            let dx = j as f64 - half;
            let dist = (dy * dy + dx * dx).sqrt() / half.max(1.0);
            template[(i, j)] = (1.0 - lambda * dist).max(0.0);
        }
    }
    template
}
