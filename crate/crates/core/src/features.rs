//! Panchromatic band synthesis and patch features.
//!
//! Pixels are flattened row-major: pixel `(row, col)` becomes column
//! `row * width + col` of every `bands x P` or `d2 x P` matrix. Patch
//! features are vectorized row-major inside the window, so a column of a
//! learned dictionary reshapes directly into a `w x w` thumbnail.

use ndarray::Axis;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Hyperspectral cube stored as the `bands x P` data matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageCube {
    pub height: usize,
    pub width: usize,
    pub data: Matrix,
}

impl ImageCube {
    pub fn new(height: usize, width: usize, data: Matrix) -> Result<Self> {
        if height * width != data.ncols() || height == 0 || width == 0 {
            return Err(Error::dims(
                "height x width",
                "cube",
                format!("{height} x {width} does not match {} pixels", data.ncols()),
            ));
        }
        if data.nrows() == 0 {
            return Err(Error::InvalidArgument("cube has no bands".into()));
        }
        Ok(ImageCube {
            height,
            width,
            data,
        })
    }

    pub fn bands(&self) -> usize {
        self.data.nrows()
    }

    pub fn pixels(&self) -> usize {
        self.data.ncols()
    }
}

/// Single grayscale band with values stretched to `[0, 255]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PanchromaticImage {
    pub height: usize,
    pub width: usize,
    /// Row-major pixel values.
    pub values: Vec<f64>,
}

impl PanchromaticImage {
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    /// `1 x P` row vector.
    pub fn to_row(&self) -> Matrix {
        Matrix::from_shape_vec((1, self.values.len()), self.values.clone())
            .expect("length matches")
    }
}

/// Divides every band by its mean over the pixels, sums the normalized bands
/// and stretches the result affinely to `[0, 255]`.
///
/// A constant sum cannot be stretched and maps to an all-zero image.
pub fn synthesize_panchromatic(cube: &ImageCube) -> Result<PanchromaticImage> {
    let means = cube
        .data
        .mean_axis(Axis(1))
        .ok_or_else(|| Error::InvalidArgument("cube has no pixels".into()))?;
    if let Some(band) = means.iter().position(|&m| m == 0.0) {
        return Err(Error::ZeroMeanBand(band));
    }
    let mut sum = vec![0.0; cube.pixels()];
    for (band, mean) in cube.data.rows().into_iter().zip(means.iter()) {
        for (s, v) in sum.iter_mut().zip(band.iter()) {
            *s += v / mean;
        }
    }
    let lo = sum.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = sum.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let values = if hi > lo {
        sum.iter().map(|v| 255.0 * (v - lo) / (hi - lo)).collect()
    } else {
        log::warn!("panchromatic band is constant; contrast stretch maps it to zero");
        vec![0.0; sum.len()]
    };
    Ok(PanchromaticImage {
        height: cube.height,
        width: cube.width,
        values,
    })
}

/// Symmetric (edge-repeating) reflection of `i` into `0..n`.
fn reflect(i: isize, n: usize) -> usize {
    let period = 2 * n as isize;
    let m = i.rem_euclid(period) as usize;
    if m < n {
        m
    } else {
        2 * n - 1 - m
    }
}

/// `w^2 x P` matrix whose column `p` is the `w x w` window centred on pixel
/// `p`, with symmetric reflection at the borders.
pub fn extract_patches(pan: &PanchromaticImage, w: usize) -> Result<Matrix> {
    if w == 0 || w % 2 == 0 {
        return Err(Error::InvalidArgument(format!("patch width must be odd, got {w}")));
    }
    let (h, wd) = (pan.height, pan.width);
    let half = (w / 2) as isize;
    let mut s = Matrix::zeros((w * w, h * wd));
    for row in 0..h {
        for col in 0..wd {
            let p = row * wd + col;
            let mut feature = s.column_mut(p);
            for dr in -half..=half {
                let r = reflect(row as isize + dr, h);
                for dc in -half..=half {
                    let c = reflect(col as isize + dc, wd);
                    let idx = ((dr + half) as usize) * w + (dc + half) as usize;
                    feature[idx] = pan.get(r, c);
                }
            }
        }
    }
    Ok(s)
}
