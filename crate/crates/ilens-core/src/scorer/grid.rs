//! Grid images: an RGB pixel array plus the cell partition that turns it
//! into game players, the baseline color used for masking, and the edge
//! cells that constrain revision.

use crate::subset::Subset;
use ndarray::{Array2, Array3};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("image is {h}x{w}x{c}, expected 3 channels and a nonzero area")]
    BadImage { h: usize, w: usize, c: usize },
    #[error("{h}x{w} pixels cannot be partitioned into {rows}x{cols} cells")]
    BadPartition {
        h: usize,
        w: usize,
        rows: usize,
        cols: usize,
    },
    #[error("channel value {value} at ({y}, {x}) outside [0, 1]")]
    OutOfRange { y: usize, x: usize, value: f64 },
    #[error("cell {cell} outside the {cells}-cell grid")]
    CellOutOfRange { cell: usize, cells: usize },
    #[error("edge grid is {got_rows}x{got_cols}, expected {rows}x{cols}")]
    EdgeShapeMismatch {
        rows: usize,
        cols: usize,
        got_rows: usize,
        got_cols: usize,
    },
}

/// An RGB image in [0,1] with a rows x cols cell partition. Cells are
/// indexed row-major: cell = row * cols + col.
#[derive(Debug, Clone)]
pub struct GridImage {
    pixels: Array3<f64>,
    rows: usize,
    cols: usize,
    baseline: [f64; 3],
    edge_cells: Array2<bool>,
}

impl GridImage {
    /// Baseline defaults to the per-image mean color; no edge cells marked.
    pub fn new(pixels: Array3<f64>, rows: usize, cols: usize) -> Result<Self, GridError> {
        let (h, w, c) = pixels.dim();
        if c != 3 || h == 0 || w == 0 {
            return Err(GridError::BadImage { h, w, c });
        }
        if rows == 0 || cols == 0 || h % rows != 0 || w % cols != 0 {
            return Err(GridError::BadPartition { h, w, rows, cols });
        }
        for ((y, x, _), &v) in pixels.indexed_iter() {
            if !(0.0..=1.0).contains(&v) {
                return Err(GridError::OutOfRange { y, x, value: v });
            }
        }
        let mut baseline = [0.0; 3];
        for ch in 0..3 {
            let mut acc = 0.0;
            for y in 0..h {
                for x in 0..w {
                    acc += pixels[(y, x, ch)];
                }
            }
            baseline[ch] = acc / (h * w) as f64;
        }
        Ok(GridImage {
            pixels,
            rows,
            cols,
            baseline,
            edge_cells: Array2::from_elem((rows, cols), false),
        })
    }

    pub fn with_baseline(mut self, baseline: [f64; 3]) -> Self {
        self.baseline = baseline;
        self
    }

    pub fn set_edge_cells(&mut self, edges: Array2<bool>) -> Result<(), GridError> {
        let (r, c) = edges.dim();
        if (r, c) != (self.rows, self.cols) {
            return Err(GridError::EdgeShapeMismatch {
                rows: self.rows,
                cols: self.cols,
                got_rows: r,
                got_cols: c,
            });
        }
        self.edge_cells = edges;
        Ok(())
    }

    /// Replace the pixel data, keeping grid, baseline and edges. The revised
    /// image of an optimisation step keeps the original's masking metadata.
    pub fn with_pixels(&self, pixels: Array3<f64>) -> Result<Self, GridError> {
        let (h, w, c) = pixels.dim();
        if pixels.dim() != self.pixels.dim() {
            return Err(GridError::BadImage { h, w, c });
        }
        Ok(GridImage {
            pixels,
            rows: self.rows,
            cols: self.cols,
            baseline: self.baseline,
            edge_cells: self.edge_cells.clone(),
        })
    }

    pub fn pixels(&self) -> &Array3<f64> {
        &self.pixels
    }

    pub fn height(&self) -> usize {
        self.pixels.dim().0
    }

    pub fn width(&self) -> usize {
        self.pixels.dim().1
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn cell_count(&self) -> usize {
        self.rows * self.cols
    }

    pub fn cell_height(&self) -> usize {
        self.height() / self.rows
    }

    pub fn cell_width(&self) -> usize {
        self.width() / self.cols
    }

    pub fn baseline(&self) -> [f64; 3] {
        self.baseline
    }

    pub fn edge_cells(&self) -> &Array2<bool> {
        &self.edge_cells
    }

    /// Pixel bounds (y0..y1, x0..x1) of a cell.
    pub fn cell_bounds(&self, cell: usize) -> (usize, usize, usize, usize) {
        let (ch, cw) = (self.cell_height(), self.cell_width());
        let (row, col) = (cell / self.cols, cell % self.cols);
        (row * ch, (row + 1) * ch, col * cw, (col + 1) * cw)
    }

    /// Cell index containing pixel (y, x).
    pub fn cell_of_pixel(&self, y: usize, x: usize) -> usize {
        (y / self.cell_height()) * self.cols + x / self.cell_width()
    }

    /// A copy with every cell outside `keep` replaced by the baseline color.
    pub fn masked_input(&self, keep: &Subset) -> Result<Array3<f64>, GridError> {
        if let Some(max) = keep.max_player() {
            if max >= self.cell_count() {
                return Err(GridError::CellOutOfRange {
                    cell: max,
                    cells: self.cell_count(),
                });
            }
        }
        let mut out = self.pixels.clone();
        for cell in 0..self.cell_count() {
            if keep.contains(cell) {
                continue;
            }
            let (y0, y1, x0, x1) = self.cell_bounds(cell);
            for y in y0..y1 {
                for x in x0..x1 {
                    for ch in 0..3 {
                        out[(y, x, ch)] = self.baseline[ch];
                    }
                }
            }
        }
        Ok(out)
    }
}
