//! Edge detection and the per-center edge masks that stop revision from
//! leaking across object contours.

use crate::scorer::GridImage;
use ndarray::Array2;
use std::collections::VecDeque;

/// Default hysteresis thresholds on raw Sobel magnitude (luminance in [0,1],
/// unnormalised kernels, so a full black/white step measures 4).
pub const DEFAULT_EDGE_LOW: f64 = 0.4;
pub const DEFAULT_EDGE_HIGH: f64 = 0.8;

/// Sobel gradient magnitude of the luminance channel, replicate borders.
fn sobel_magnitude(image: &GridImage) -> Array2<f64> {
    let (h, w) = (image.height(), image.width());
    let px = image.pixels();
    let luma = |y: usize, x: usize| -> f64 {
        0.299 * px[(y, x, 0)] + 0.587 * px[(y, x, 1)] + 0.114 * px[(y, x, 2)]
    };
    let clamp = |v: i64, hi: usize| -> usize { v.clamp(0, hi as i64 - 1) as usize };
    let mut magnitude = Array2::zeros((h, w));
    for y in 0..h {
        for x in 0..w {
            let at = |dy: i64, dx: i64| luma(clamp(y as i64 + dy, h), clamp(x as i64 + dx, w));
            let gx = (at(-1, 1) + 2.0 * at(0, 1) + at(1, 1))
                - (at(-1, -1) + 2.0 * at(0, -1) + at(1, -1));
            let gy = (at(1, -1) + 2.0 * at(1, 0) + at(1, 1))
                - (at(-1, -1) + 2.0 * at(-1, 0) + at(-1, 1));
            magnitude[(y, x)] = gx.hypot(gy);
        }
    }
    magnitude
}

/// Hysteresis thresholding: pixels at or above `high` seed the edge set and
/// grow 8-connected through pixels at or above `low`.
fn hysteresis(magnitude: &Array2<f64>, low: f64, high: f64) -> Array2<bool> {
    let (h, w) = magnitude.dim();
    let mut edges = Array2::from_elem((h, w), false);
    let mut queue = VecDeque::new();
    for y in 0..h {
        for x in 0..w {
            if magnitude[(y, x)] >= high && !edges[(y, x)] {
                edges[(y, x)] = true;
                queue.push_back((y, x));
                while let Some((cy, cx)) = queue.pop_front() {
                    for dy in -1i64..=1 {
                        for dx in -1i64..=1 {
                            let (ny, nx) = (cy as i64 + dy, cx as i64 + dx);
                            if ny < 0 || nx < 0 || ny >= h as i64 || nx >= w as i64 {
                                continue;
                            }
                            let (ny, nx) = (ny as usize, nx as usize);
                            if !edges[(ny, nx)] && magnitude[(ny, nx)] >= low {
                                edges[(ny, nx)] = true;
                                queue.push_back((ny, nx));
                            }
                        }
                    }
                }
            }
        }
    }
    edges
}

/// Boolean cell grid: a cell is an edge cell when any of its pixels survives
/// Sobel-plus-hysteresis edge detection.
pub fn edge_map(image: &GridImage, low: f64, high: f64) -> Array2<bool> {
    let magnitude = sobel_magnitude(image);
    let pixel_edges = hysteresis(&magnitude, low, high);
    let mut cells = Array2::from_elem((image.rows(), image.cols()), false);
    for ((y, x), &is_edge) in pixel_edges.indexed_iter() {
        if is_edge {
            let cell = image.cell_of_pixel(y, x);
            cells[(cell / image.cols(), cell % image.cols())] = true;
        }
    }
    cells
}

/// Cells reachable from `center` by 4-connected flood fill, moving only
/// through non-edge cells inside the given cell rectangle (rows r0..r1,
/// cols c0..c1). If the center itself is an edge cell the revision stays
/// confined to that single cell.
pub fn reachable_cells(
    edges: &Array2<bool>,
    center: (usize, usize),
    bounds: (usize, usize, usize, usize),
) -> Array2<bool> {
    let (rows, cols) = edges.dim();
    let (r0, r1, c0, c1) = bounds;
    let mut reachable = Array2::from_elem((rows, cols), false);
    reachable[center] = true;
    if edges[center] {
        return reachable;
    }
    let mut queue = VecDeque::from([center]);
    while let Some((r, c)) = queue.pop_front() {
        let neighbors = [
            (r.wrapping_sub(1), c),
            (r + 1, c),
            (r, c.wrapping_sub(1)),
            (r, c + 1),
        ];
        for (nr, nc) in neighbors {
            if nr < r0 || nr >= r1 || nc < c0 || nc >= c1 {
                continue;
            }
            if !reachable[(nr, nc)] && !edges[(nr, nc)] {
                reachable[(nr, nc)] = true;
                queue.push_back((nr, nc));
            }
        }
    }
    reachable
}

/// The d' x d' binary pixel mask for a center pixel: a pixel is revisable
/// when its cell is flood-reachable from the center's cell within the window
/// and is not an edge cell. Pixels outside the image are 0.
pub fn edge_mask(image: &GridImage, center_pixel: (usize, usize), d_prime: usize) -> Array2<f64> {
    let half = (d_prime / 2) as i64;
    let (cy, cx) = (center_pixel.0 as i64, center_pixel.1 as i64);
    let (h, w) = (image.height() as i64, image.width() as i64);
    let edges = image.edge_cells();

    let center_cell = image.cell_of_pixel(center_pixel.0, center_pixel.1);
    let center = (center_cell / image.cols(), center_cell % image.cols());
    let bounds = window_cell_bounds(image, center_pixel, d_prime);
    let reachable = reachable_cells(edges, center, bounds);

    let mut mask = Array2::zeros((d_prime, d_prime));
    for i in 0..d_prime {
        for j in 0..d_prime {
            let (y, x) = (cy - half + i as i64, cx - half + j as i64);
            if y < 0 || x < 0 || y >= h || x >= w {
                continue;
            }
            let cell = image.cell_of_pixel(y as usize, x as usize);
            let rc = (cell / image.cols(), cell % image.cols());
            if reachable[rc] && !edges[rc] {
                mask[(i, j)] = 1.0;
            } else if rc == center && edges[center] {
                // an on-edge center keeps exactly its own cell
                mask[(i, j)] = 1.0;
            }
        }
    }
    mask
}

/// Cell rectangle (r0, r1, c0, c1) covered by the d' x d' pixel window
/// around a center pixel, clipped to the grid.
pub(crate) fn window_cell_bounds(
    image: &GridImage,
    center_pixel: (usize, usize),
    d_prime: usize,
) -> (usize, usize, usize, usize) {
    let half = (d_prime / 2) as i64;
    let (cy, cx) = (center_pixel.0 as i64, center_pixel.1 as i64);
    let y0 = (cy - half).max(0) as usize;
    let y1 = ((cy + half) as usize).min(image.height() - 1);
    let x0 = (cx - half).max(0) as usize;
    let x1 = ((cx + half) as usize).min(image.width() - 1);
    let r0 = y0 / image.cell_height();
    let r1 = y1 / image.cell_height() + 1;
    let c0 = x0 / image.cell_width();
    let c1 = x1 / image.cell_width() + 1;
    (r0, r1, c0, c1)
}
