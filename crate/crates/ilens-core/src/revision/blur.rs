//! Separable Gaussian blur with reflected borders.

use ndarray::Array3;

/// Normalised 1-D Gaussian taps for an odd kernel size.
pub fn gaussian_kernel(kernel_size: usize, sigma: f64) -> Vec<f64> {
    assert!(kernel_size % 2 == 1, "kernel size must be odd");
    assert!(sigma > 0.0, "sigma must be positive");
    let radius = (kernel_size / 2) as i64;
    let mut taps: Vec<f64> = (-radius..=radius)
        .map(|k| (-((k * k) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = taps.iter().sum();
    for t in &mut taps {
        *t /= total;
    }
    taps
}

/// Mirror an index into 0..n without repeating the border sample.
fn reflect(idx: i64, n: usize) -> usize {
    let n = n as i64;
    let mut i = idx;
    // one reflection suffices while the kernel radius is below the image size
    if i < 0 {
        i = -i;
    }
    if i >= n {
        i = 2 * n - 2 - i;
    }
    i.clamp(0, n - 1) as usize
}

/// Per-channel separable convolution; a constant image passes through
/// unchanged because the taps sum to one.
pub fn gaussian_blur(image: &Array3<f64>, kernel_size: usize, sigma: f64) -> Array3<f64> {
    let taps = gaussian_kernel(kernel_size, sigma);
    let radius = (kernel_size / 2) as i64;
    let (h, w, c) = image.dim();

    let mut horizontal = Array3::zeros((h, w, c));
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                let mut acc = 0.0;
                for (t, &tap) in taps.iter().enumerate() {
                    let sx = reflect(x as i64 + t as i64 - radius, w);
                    acc += tap * image[(y, sx, ch)];
                }
                horizontal[(y, x, ch)] = acc;
            }
        }
    }
    let mut out = Array3::zeros((h, w, c));
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                let mut acc = 0.0;
                for (t, &tap) in taps.iter().enumerate() {
                    let sy = reflect(y as i64 + t as i64 - radius, h);
                    acc += tap * horizontal[(sy, x, ch)];
                }
                out[(y, x, ch)] = acc;
            }
        }
    }
    out
}
