//! Smooth, edge-preserving image revision.
//!
//! Four operators (hue, saturation, brightness, blur/sharpen) share one
//! mechanism: per-center coefficients spread through a cone template, gated
//! by an edge mask, squashed by tanh into per-pixel delta fields, then
//! applied in their natural color spaces. Revision therefore cannot create
//! new edges (the fields are spatially Lipschitz) and cannot leak across
//! existing ones (blocked cells contribute exactly zero).

mod blur;
mod color;
mod edges;
mod template;

pub use blur::{gaussian_blur, gaussian_kernel};
pub use color::{hsv_to_rgb, rgb_to_hsv};
pub use edges::{edge_map, edge_mask, reachable_cells, DEFAULT_EDGE_HIGH, DEFAULT_EDGE_LOW};
pub use template::cone_template;

use crate::scorer::GridImage;
use ndarray::{Array2, Array3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RevisionOp {
    Hue,
    Sat,
    Bright,
    BlurSharp,
}

impl RevisionOp {
    pub const ALL: [RevisionOp; 4] = [
        RevisionOp::Hue,
        RevisionOp::Sat,
        RevisionOp::Bright,
        RevisionOp::BlurSharp,
    ];

    pub fn index(self) -> usize {
        match self {
            RevisionOp::Hue => 0,
            RevisionOp::Sat => 1,
            RevisionOp::Bright => 2,
            RevisionOp::BlurSharp => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            RevisionOp::Hue => "hue",
            RevisionOp::Sat => "sat",
            RevisionOp::Bright => "bright",
            RevisionOp::BlurSharp => "blursharp",
        }
    }
}

#[derive(Debug, Clone)]
pub struct RevisionConfig {
    /// Template side length; `None` spans a 3-cell neighbourhood each way.
    pub d_prime: Option<usize>,
    pub lambda: f64,
    pub beta_hue: f64,
    pub beta_sat: f64,
    pub beta_bright: f64,
    pub blur_kernel: usize,
    pub blur_sigma: f64,
    /// Center placement: every `center_stride`-th cell in both directions.
    pub center_stride: usize,
    /// Keeps the logit away from its singularities at 0 and 1.
    pub logit_epsilon: f64,
}

impl Default for RevisionConfig {
    fn default() -> Self {
        RevisionConfig {
            d_prime: None,
            lambda: 1.0,
            beta_hue: 0.35,
            beta_sat: 3.0,
            beta_bright: 1.5,
            blur_kernel: 5,
            blur_sigma: 1.0,
            center_stride: 1,
            logit_epsilon: 1e-4,
        }
    }
}

impl RevisionConfig {
    pub fn beta(&self, op: RevisionOp) -> f64 {
        match op {
            RevisionOp::Hue => self.beta_hue,
            RevisionOp::Sat => self.beta_sat,
            RevisionOp::Bright => self.beta_bright,
            RevisionOp::BlurSharp => 1.0,
        }
    }
}

#[derive(Debug, Clone)]
struct Center {
    pixel: (usize, usize),
    /// Revisable cells for this center: flood-reachable non-edge cells
    /// within the window (or just the center's own cell if it sits on an
    /// edge). Computed once from the original image's edges.
    revisable: Array2<bool>,
}

/// The learnable revision: one coefficient per (center, operator) pair plus
/// the template/mask geometry shared by all operators.
#[derive(Debug, Clone)]
pub struct RevisionField {
    centers: Vec<Center>,
    coeffs: Vec<[f64; 4]>,
    template: Array2<f64>,
    d_prime: usize,
    config: RevisionConfig,
    height: usize,
    width: usize,
}

impl RevisionField {
    /// Build the zero field for an image: centers at every
    /// `center_stride`-th cell's center pixel, masks from the image's edge
    /// cells.
    pub fn for_image(image: &GridImage, config: RevisionConfig) -> Self {
        let d_prime = config
            .d_prime
            .unwrap_or(2 * image.cell_height() * 3 + 1)
            | 1; // keep it odd
        let template = cone_template(d_prime, config.lambda);
        let edge_cells = image.edge_cells();
        let stride = config.center_stride.max(1);
        let mut centers = Vec::new();
        for row in (0..image.rows()).step_by(stride) {
            for col in (0..image.cols()).step_by(stride) {
                let pixel = (
                    row * image.cell_height() + image.cell_height() / 2,
                    col * image.cell_width() + image.cell_width() / 2,
                );
                let bounds = edges::window_cell_bounds(image, pixel, d_prime);
                let reachable = reachable_cells(edge_cells, (row, col), bounds);
                let mut revisable = Array2::from_elem(edge_cells.dim(), false);
                for ((r, c), &reach) in reachable.indexed_iter() {
                    revisable[(r, c)] = if edge_cells[(row, col)] {
                        (r, c) == (row, col)
                    } else {
                        reach && !edge_cells[(r, c)]
                    };
                }
                centers.push(Center { pixel, revisable });
            }
        }
        let count = centers.len();
        RevisionField {
            centers,
            coeffs: vec![[0.0; 4]; count],
            template,
            d_prime,
            config,
            height: image.height(),
            width: image.width(),
        }
    }

    pub fn num_centers(&self) -> usize {
        self.centers.len()
    }

    pub fn num_coefficients(&self) -> usize {
        self.centers.len() * 4
    }

    pub fn center_pixel(&self, idx: usize) -> (usize, usize) {
        self.centers[idx].pixel
    }

    pub fn d_prime(&self) -> usize {
        self.d_prime
    }

    pub fn config(&self) -> &RevisionConfig {
        &self.config
    }

    pub fn coefficient(&self, center: usize, op: RevisionOp) -> f64 {
        self.coeffs[center][op.index()]
    }

    pub fn set_coefficient(&mut self, center: usize, op: RevisionOp, value: f64) {
        self.coeffs[center][op.index()] = value;
    }

    /// Coefficients flattened center-major, operator-minor.
    pub fn coeffs_flat(&self) -> Vec<f64> {
        self.coeffs.iter().flatten().copied().collect()
    }

    pub fn set_coeffs_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.num_coefficients());
        for (i, chunk) in flat.chunks_exact(4).enumerate() {
            self.coeffs[i].copy_from_slice(chunk);
        }
    }

    pub fn max_abs_coefficient(&self) -> f64 {
        self.coeffs
            .iter()
            .flatten()
            .fold(0.0f64, |m, k| m.max(k.abs()))
    }

    /// Pre-tanh accumulation z of one operator over the whole image, given
    /// a cell lookup for the mask (pixels resolve through their cell).
    fn pretanh(&self, op: RevisionOp, cell_h: usize, cell_w: usize, cols: usize) -> Array2<f64> {
        let mut z = Array2::zeros((self.height, self.width));
        let half = (self.d_prime / 2) as i64;
        for (center, coeff) in self.centers.iter().zip(&self.coeffs) {
            let k = coeff[op.index()];
            if k == 0.0 {
                continue;
            }
            let (cy, cx) = (center.pixel.0 as i64, center.pixel.1 as i64);
            for i in 0..self.d_prime {
                let y = cy - half + i as i64;
                if y < 0 || y >= self.height as i64 {
                    continue;
                }
                for j in 0..self.d_prime {
                    let x = cx - half + j as i64;
                    if x < 0 || x >= self.width as i64 {
                        continue;
                    }
                    let g = self.template[(i, j)];
                    if g == 0.0 {
                        continue;
                    }
                    let cell = (y as usize / cell_h, x as usize / cell_w);
                    debug_assert!(cell.1 < cols || cols == 0);
                    if center.revisable[cell] {
                        z[(y as usize, x as usize)] += k * g;
                    }
                }
            }
        }
        z
    }

    /// Scatter per-pixel z-gradients back onto the coefficients of one
    /// operator: the adjoint of [`pretanh`].
    fn accumulate_coeff_grads(
        &self,
        gz: &Array2<f64>,
        cell_h: usize,
        cell_w: usize,
        op: RevisionOp,
        out: &mut [[f64; 4]],
    ) {
        let half = (self.d_prime / 2) as i64;
        for (idx, center) in self.centers.iter().enumerate() {
            let (cy, cx) = (center.pixel.0 as i64, center.pixel.1 as i64);
            let mut acc = 0.0;
            for i in 0..self.d_prime {
                let y = cy - half + i as i64;
                if y < 0 || y >= self.height as i64 {
                    continue;
                }
                for j in 0..self.d_prime {
                    let x = cx - half + j as i64;
                    if x < 0 || x >= self.width as i64 {
                        continue;
                    }
                    let g = self.template[(i, j)];
                    if g == 0.0 {
                        continue;
                    }
                    let cell = (y as usize / cell_h, x as usize / cell_w);
                    if center.revisable[cell] {
                        acc += gz[(y as usize, x as usize)] * g;
                    }
                }
            }
            out[idx][op.index()] += acc;
        }
    }
}

/// The four per-pixel delta fields of a revision, tanh-squashed to [-1, 1].
#[derive(Debug, Clone)]
pub struct RevisionHeatmaps {
    pub hue: Array2<f64>,
    pub sat: Array2<f64>,
    pub bright: Array2<f64>,
    pub blur_sharp: Array2<f64>,
}

impl RevisionHeatmaps {
    pub fn get(&self, op: RevisionOp) -> &Array2<f64> {
        match op {
            RevisionOp::Hue => &self.hue,
            RevisionOp::Sat => &self.sat,
            RevisionOp::Bright => &self.bright,
            RevisionOp::BlurSharp => &self.blur_sharp,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RevisionResult {
    pub revised: GridImage,
    pub heatmaps: RevisionHeatmaps,
}

/// Everything the reverse sweep needs from a forward composition.
pub(crate) struct ComposeTape {
    z: [Array2<f64>; 4],
    delta: [Array2<f64>; 4],
    /// blurred original minus original, the blur/sharpen direction
    blur_diff: Array3<f64>,
    y1_pre: Array3<f64>,
    y1: Array3<f64>,
    hsv: Array3<f64>,
    hsv_post: Array3<f64>,
}

/// The per-pixel delta field of one operator: tanh of the masked, templated
/// coefficient sum.
pub fn field_delta(field: &RevisionField, op: RevisionOp, image: &GridImage) -> Array2<f64> {
    field
        .pretanh(op, image.cell_height(), image.cell_width(), image.cols())
        .mapv(f64::tanh)
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn logit(x: f64) -> f64 {
    (x / (1.0 - x)).ln()
}

/// Hue shift with wrap-around: values leaving [0, 1) re-enter from the
/// other side (1.2 becomes 0.2).
pub fn wrap_hue(hue: f64, beta: f64, delta: f64) -> f64 {
    (hue + beta * delta).rem_euclid(1.0)
}

/// Saturation/brightness shift through the sigmoid, which keeps the output
/// strictly inside (0, 1); the input is pre-clamped away from the logit's
/// singularities.
pub fn shift_sigmoid(value: f64, beta: f64, delta: f64, eps: f64) -> f64 {
    sigmoid(beta * delta + logit(value.clamp(eps, 1.0 - eps)))
}

/// Standalone hue revision of an RGB image.
pub fn apply_hue(image: &Array3<f64>, delta: &Array2<f64>, beta: f64) -> Array3<f64> {
    let mut out = image.clone();
    let (h, w, _) = image.dim();
    for y in 0..h {
        for x in 0..w {
            let d = delta[(y, x)];
            if d == 0.0 {
                continue;
            }
            let rgb = [image[(y, x, 0)], image[(y, x, 1)], image[(y, x, 2)]];
            let [hue, s, v] = rgb_to_hsv(rgb);
            let new = hsv_to_rgb([wrap_hue(hue, beta, d), s, v]);
            for ch in 0..3 {
                out[(y, x, ch)] = new[ch];
            }
        }
    }
    out
}

fn apply_sigmoid_channel(
    image: &Array3<f64>,
    delta: &Array2<f64>,
    beta: f64,
    eps: f64,
    channel: usize,
) -> Array3<f64> {
    let mut out = image.clone();
    let (h, w, _) = image.dim();
    for y in 0..h {
        for x in 0..w {
            let rgb = [image[(y, x, 0)], image[(y, x, 1)], image[(y, x, 2)]];
            let mut hsv = rgb_to_hsv(rgb);
            hsv[channel] = shift_sigmoid(hsv[channel], beta, delta[(y, x)], eps);
            let new = hsv_to_rgb(hsv);
            for ch in 0..3 {
                out[(y, x, ch)] = new[ch];
            }
        }
    }
    out
}

/// Standalone saturation revision of an RGB image.
pub fn apply_sat(image: &Array3<f64>, delta: &Array2<f64>, beta: f64, eps: f64) -> Array3<f64> {
    apply_sigmoid_channel(image, delta, beta, eps, 1)
}

/// Standalone brightness revision of an RGB image.
pub fn apply_bright(image: &Array3<f64>, delta: &Array2<f64>, beta: f64, eps: f64) -> Array3<f64> {
    apply_sigmoid_channel(image, delta, beta, eps, 2)
}

/// Blend each pixel towards (delta > 0) or away from (delta < 0) its
/// Gaussian-blurred value, clamped to [0, 1].
pub fn apply_blursharp(
    image: &Array3<f64>,
    delta: &Array2<f64>,
    kernel_size: usize,
    sigma: f64,
) -> Array3<f64> {
    let blurred = gaussian_blur(image, kernel_size, sigma);
    let mut out = image.clone();
    let (h, w, _) = image.dim();
    for y in 0..h {
        for x in 0..w {
            let d = delta[(y, x)];
            if d == 0.0 {
                continue;
            }
            for ch in 0..3 {
                let x0 = image[(y, x, ch)];
                out[(y, x, ch)] = (d * (blurred[(y, x, ch)] - x0) + x0).clamp(0.0, 1.0);
            }
        }
    }
    out
}

/// Full revision: blur/sharpen in RGB, then hue, saturation and brightness
/// in HSV. A zero field is a bitwise no-op; pixels whose deltas are all zero
/// pass through untouched.
pub fn compose_revision(image: &GridImage, field: &RevisionField) -> RevisionResult {
    compose_with_tape(image, field).0
}

pub(crate) fn compose_with_tape(
    image: &GridImage,
    field: &RevisionField,
) -> (RevisionResult, ComposeTape) {
    let config = field.config();
    let (h, w) = (image.height(), image.width());
    let (cell_h, cell_w) = (image.cell_height(), image.cell_width());
    let x0 = image.pixels();

    let z: [Array2<f64>; 4] =
        RevisionOp::ALL.map(|op| field.pretanh(op, cell_h, cell_w, image.cols()));
    let delta: [Array2<f64>; 4] = [
        z[0].mapv(f64::tanh),
        z[1].mapv(f64::tanh),
        z[2].mapv(f64::tanh),
        z[3].mapv(f64::tanh),
    ];

    let blurred = gaussian_blur(x0, config.blur_kernel, config.blur_sigma);
    let mut blur_diff = blurred;
    blur_diff -= x0;

    let mut y1_pre = x0.clone();
    let mut y1 = x0.clone();
    for y in 0..h {
        for x in 0..w {
            let d = delta[3][(y, x)];
            if d == 0.0 {
                continue;
            }
            for ch in 0..3 {
                let pre = d * blur_diff[(y, x, ch)] + x0[(y, x, ch)];
                y1_pre[(y, x, ch)] = pre;
                y1[(y, x, ch)] = pre.clamp(0.0, 1.0);
            }
        }
    }

    let eps = config.logit_epsilon;
    let mut out = y1.clone();
    let mut hsv = Array3::zeros((h, w, 3));
    let mut hsv_post = Array3::zeros((h, w, 3));
    for y in 0..h {
        for x in 0..w {
            let (dh, ds, dv) = (delta[0][(y, x)], delta[1][(y, x)], delta[2][(y, x)]);
            let rgb = [y1[(y, x, 0)], y1[(y, x, 1)], y1[(y, x, 2)]];
            let [hue, s, v] = rgb_to_hsv(rgb);
            hsv[(y, x, 0)] = hue;
            hsv[(y, x, 1)] = s;
            hsv[(y, x, 2)] = v;
            let hue2 = if dh == 0.0 {
                hue
            } else {
                wrap_hue(hue, config.beta_hue, dh)
            };
            let s2 = if ds == 0.0 {
                s
            } else {
                shift_sigmoid(s, config.beta_sat, ds, eps)
            };
            let v2 = if dv == 0.0 {
                v
            } else {
                shift_sigmoid(v, config.beta_bright, dv, eps)
            };
            hsv_post[(y, x, 0)] = hue2;
            hsv_post[(y, x, 1)] = s2;
            hsv_post[(y, x, 2)] = v2;
            if dh != 0.0 || ds != 0.0 || dv != 0.0 {
                let rgb2 = hsv_to_rgb([hue2, s2, v2]);
                for ch in 0..3 {
                    out[(y, x, ch)] = rgb2[ch];
                }
            }
        }
    }

    let revised = image
        .with_pixels(out)
        .expect("composition preserves image dimensions");
    let heatmaps = RevisionHeatmaps {
        hue: delta[0].clone(),
        sat: delta[1].clone(),
        bright: delta[2].clone(),
        blur_sharp: delta[3].clone(),
    };
    (
        RevisionResult { revised, heatmaps },
        ComposeTape {
            z,
            delta,
            blur_diff,
            y1_pre,
            y1,
            hsv,
            hsv_post,
        },
    )
}

/// Reverse sweep of [`compose_with_tape`]: pull a gradient over the revised
/// pixels back to every coefficient. Returns one [hue, sat, bright,
/// blur/sharp] gradient per center.
pub(crate) fn compose_backward(
    field: &RevisionField,
    tape: &ComposeTape,
    image: &GridImage,
    grad_out: &Array3<f64>,
) -> Vec<[f64; 4]> {
    let config = field.config();
    let (h, w) = (image.height(), image.width());
    let eps = config.logit_epsilon;

    let mut gz: [Array2<f64>; 4] = [
        Array2::zeros((h, w)),
        Array2::zeros((h, w)),
        Array2::zeros((h, w)),
        Array2::zeros((h, w)),
    ];

    for y in 0..h {
        for x in 0..w {
            let g_out = [
                grad_out[(y, x, 0)],
                grad_out[(y, x, 1)],
                grad_out[(y, x, 2)],
            ];
            if g_out == [0.0; 3] {
                continue;
            }
            let post = [
                tape.hsv_post[(y, x, 0)],
                tape.hsv_post[(y, x, 1)],
                tape.hsv_post[(y, x, 2)],
            ];
            let (_, j_out) = color::hsv_to_rgb_jacobian(post);
            // rows of j_out are d rgb / d (h', s', v')
            let mut g_post = [0.0; 3];
            for ch in 0..3 {
                for comp in 0..3 {
                    g_post[comp] += g_out[ch] * j_out[ch][comp];
                }
            }

            let (dh, ds, dv) = (
                tape.delta[0][(y, x)],
                tape.delta[1][(y, x)],
                tape.delta[2][(y, x)],
            );
            let (s, v) = (tape.hsv[(y, x, 1)], tape.hsv[(y, x, 2)]);

            // hue: wrap has unit slope
            let g_hue = g_post[0];
            gz[0][(y, x)] = g_post[0] * config.beta_hue * (1.0 - dh * dh);

            // saturation and brightness share the sigmoid-shift rule
            let mut channel = |g_p: f64, raw: f64, d: f64, post_val: f64, beta: f64| -> (f64, f64) {
                let clamped_raw = raw.clamp(eps, 1.0 - eps);
                let sig = if d == 0.0 { clamped_raw } else { post_val };
                let slope = sig * (1.0 - sig);
                let g_delta = g_p * beta * slope;
                let pass = if (eps..=1.0 - eps).contains(&raw) {
                    slope / (clamped_raw * (1.0 - clamped_raw))
                } else {
                    0.0
                };
                (g_delta, g_p * pass)
            };
            let (g_dsat, g_s) = channel(g_post[1], s, ds, post[1], config.beta_sat);
            let (g_dbright, g_v) = channel(g_post[2], v, dv, post[2], config.beta_bright);
            gz[1][(y, x)] = g_dsat * (1.0 - ds * ds);
            gz[2][(y, x)] = g_dbright * (1.0 - dv * dv);

            // back through the RGB -> HSV conversion of y1
            let rgb1 = [tape.y1[(y, x, 0)], tape.y1[(y, x, 1)], tape.y1[(y, x, 2)]];
            let (_, j_in) = color::rgb_to_hsv_jacobian(rgb1);
            let g_hsv = [g_hue, g_s, g_v];
            let mut g_y1 = [0.0; 3];
            for ch in 0..3 {
                for comp in 0..3 {
                    g_y1[ch] += g_hsv[comp] * j_in[comp][ch];
                }
            }

            // blur/sharpen mix: gradient blocked where the clamp is active
            let dbs = tape.delta[3][(y, x)];
            let mut g_dbs = 0.0;
            for ch in 0..3 {
                let pre = tape.y1_pre[(y, x, ch)];
                if (0.0..=1.0).contains(&pre) {
                    g_dbs += g_y1[ch] * tape.blur_diff[(y, x, ch)];
                }
            }
            gz[3][(y, x)] = g_dbs * (1.0 - dbs * dbs);
        }
    }

    let mut grads = vec![[0.0; 4]; field.num_centers()];
    for op in RevisionOp::ALL {
        field.accumulate_coeff_grads(
            &gz[op.index()],
            image.cell_height(),
            image.cell_width(),
            op,
            &mut grads,
        );
    }
    grads
}
