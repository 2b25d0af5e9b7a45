//! Synthetic benchmark scenes.
//!
//! A Potts-Markov label map splits the image into regions. Inside region `j`
//! the abundance of pixel `p` is `t_p psi_1 + (1 - t_p) psi_2`, where `t` is
//! a grayscale texture and `psi_1`, `psi_2` are two extreme abundance
//! vectors of that region. Spectra follow the noiseless linear model
//! `y_p = M a_p`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use crate::error::{Error, Result};
use crate::features::{synthesize_panchromatic, ImageCube, PanchromaticImage};
use crate::linalg::{project_simplex, Matrix};

pub const TEXTURE_MIN: f64 = 0.05;
pub const TEXTURE_MAX: f64 = 0.95;

const SIMPLEX_TOL: f64 = 1e-12;

/// Gibbs sampler for a Potts model on the 4-neighbour lattice.
///
/// Sites are visited in checkerboard order (all even sites, then all odd
/// sites) during each sweep. Labels are row-major.
pub fn sample_potts(
    height: usize,
    width: usize,
    classes: usize,
    beta: f64,
    sweeps: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    if classes == 0 || sweeps == 0 || !(beta >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "Potts sampler needs J >= 1, sweeps >= 1, beta >= 0 (got {classes}, {sweeps}, {beta})"
        )));
    }
    let n = height * width;
    if classes == 1 {
        return Ok(vec![0; n]);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..classes)).collect();
    let mut counts = vec![0usize; classes];
    let mut weights = vec![0.0; classes];
    for _ in 0..sweeps {
        for parity in 0..2 {
            for r in 0..height {
                for c in (0..width).filter(|c| (r + c) % 2 == parity) {
                    counts.iter_mut().for_each(|k| *k = 0);
                    if r > 0 {
                        counts[labels[(r - 1) * width + c]] += 1;
                    }
                    if r + 1 < height {
                        counts[labels[(r + 1) * width + c]] += 1;
                    }
                    if c > 0 {
                        counts[labels[r * width + c - 1]] += 1;
                    }
                    if c + 1 < width {
                        counts[labels[r * width + c + 1]] += 1;
                    }
                    let max = *counts.iter().max().expect("classes >= 2") as f64;
                    let mut total = 0.0;
                    for (w, &k) in weights.iter_mut().zip(&counts) {
                        *w = (beta * (k as f64 - max)).exp();
                        total += *w;
                    }
                    let mut u = rng.random_range(0.0..total);
                    let mut pick = classes - 1;
                    for (j, &w) in weights.iter().enumerate() {
                        if u < w {
                            pick = j;
                            break;
                        }
                        u -= w;
                    }
                    labels[r * width + c] = pick;
                }
            }
        }
    }
    Ok(labels)
}

/// Procedural texture families standing in for real panchromatic crops.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TextureKind {
    /// White noise blurred by a Gaussian of the given standard deviation (pixels).
    SmoothNoise { radius: f64 },
    /// Vertical sinusoidal grating; values depend on the column only.
    Stripes { period: f64 },
    /// Checkerboard of the given cell size, softened by a Gaussian blur.
    CheckerBlur { cell: usize },
}

impl TextureKind {
    pub const NAMES: [&'static str; 3] = ["smooth-noise", "stripes", "checker-blur"];

    pub fn name(&self) -> &'static str {
        match self {
            TextureKind::SmoothNoise { .. } => "smooth-noise",
            TextureKind::Stripes { .. } => "stripes",
            TextureKind::CheckerBlur { .. } => "checker-blur",
        }
    }
}

impl fmt::Display for TextureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TextureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "smooth-noise" => Ok(TextureKind::SmoothNoise { radius: 5.0 }),
            "stripes" => Ok(TextureKind::Stripes { period: 12.0 }),
            "checker-blur" => Ok(TextureKind::CheckerBlur { cell: 8 }),
            other => Err(Error::UnknownTexture(other.to_string())),
        }
    }
}

/// Grayscale texture with row-major values.
#[derive(Debug, Clone, PartialEq)]
pub struct Texture {
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
}

impl Texture {
    /// Value at `(row, col)`, tiling the texture periodically.
    pub fn tiled(&self, row: usize, col: usize) -> f64 {
        self.values[(row % self.height) * self.width + col % self.width]
    }

    pub fn constant(height: usize, width: usize, value: f64) -> Self {
        Texture {
            height,
            width,
            values: vec![value; height * width],
        }
    }
}

fn reflect(i: isize, n: usize) -> usize {
    let m = i.rem_euclid(2 * n as isize) as usize;
    if m < n {
        m
    } else {
        2 * n - 1 - m
    }
}

fn gaussian_blur(values: &[f64], height: usize, width: usize, sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return values.to_vec();
    }
    let half = (3.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-half..=half)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let norm: f64 = kernel.iter().sum();
    let kernel: Vec<f64> = kernel.iter().map(|k| k / norm).collect();

    let mut horizontal = vec![0.0; values.len()];
    for r in 0..height {
        for c in 0..width {
            horizontal[r * width + c] = kernel
                .iter()
                .enumerate()
                .map(|(i, k)| k * values[r * width + reflect(c as isize + i as isize - half, width)])
                .sum();
        }
    }
    let mut out = vec![0.0; values.len()];
    for r in 0..height {
        for c in 0..width {
            out[r * width + c] = kernel
                .iter()
                .enumerate()
                .map(|(i, k)| k * horizontal[reflect(r as isize + i as isize - half, height) * width + c])
                .sum();
        }
    }
    out
}

/// Affine map of the value range onto `[TEXTURE_MIN, TEXTURE_MAX]`.
fn stretch_to_texture_range(values: &mut [f64]) {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    for v in values.iter_mut() {
        let unit = if hi > lo { (*v - lo) / (hi - lo) } else { 0.5 };
        *v = (TEXTURE_MIN + (TEXTURE_MAX - TEXTURE_MIN) * unit).clamp(TEXTURE_MIN, TEXTURE_MAX);
    }
}

/// Generates a texture with values in `[0.05, 0.95]`.
pub fn make_texture(height: usize, width: usize, kind: TextureKind, seed: u64) -> Result<Texture> {
    if height == 0 || width == 0 {
        return Err(Error::InvalidArgument("texture must be non-empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values: Vec<f64> = match kind {
        TextureKind::SmoothNoise { radius } => {
            let noise: Vec<f64> = (0..height * width)
                .map(|_| StandardNormal.sample(&mut rng))
                .collect();
            gaussian_blur(&noise, height, width, radius)
        }
        TextureKind::Stripes { period } => {
            if !(period > 0.0) {
                return Err(Error::InvalidArgument(format!("stripe period must be positive, got {period}")));
            }
            let phase = rng.random_range(0.0..2.0 * PI);
            (0..height * width)
                .map(|i| (2.0 * PI * (i % width) as f64 / period + phase).sin())
                .collect()
        }
        TextureKind::CheckerBlur { cell } => {
            if cell == 0 {
                return Err(Error::InvalidArgument("checker cell size must be positive".into()));
            }
            let (dr, dc) = (rng.random_range(0..cell), rng.random_range(0..cell));
            let board: Vec<f64> = (0..height * width)
                .map(|i| (((i / width + dr) / cell + (i % width + dc) / cell) % 2) as f64)
                .collect();
            gaussian_blur(&board, height, width, cell as f64 / 3.0)
        }
    };
    stretch_to_texture_range(&mut values);
    Ok(Texture {
        height,
        width,
        values,
    })
}

/// Two extreme abundance vectors of one region.
#[derive(Debug, Clone, PartialEq)]
pub struct PsiPair {
    pub first: Vec<f64>,
    pub second: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SyntheticSceneSpec {
    pub height: usize,
    pub width: usize,
    pub regions: usize,
    pub potts_beta: f64,
    pub potts_sweeps: usize,
    /// `d1 x R1` endmember library.
    pub endmembers: Matrix,
    /// One pair per region.
    pub psi: Vec<PsiPair>,
    /// One texture per region.
    pub textures: Vec<Texture>,
    pub seed: u64,
}

impl SyntheticSceneSpec {
    /// Scene with procedural endmembers, textures and extreme abundances.
    ///
    /// `psi_mix` is the weight of a random simplex point mixed into every
    /// extreme abundance vector; any value in `(0, 1]` keeps pure pixels out
    /// of the scene.
    pub fn standard(
        height: usize,
        width: usize,
        regions: usize,
        bands: usize,
        r1: usize,
        psi_mix: f64,
        seed: u64,
    ) -> Result<Self> {
        if regions == 0 || r1 == 0 {
            return Err(Error::InvalidArgument("need at least one region and one endmember".into()));
        }
        let endmembers = endmember_library(bands, r1, seed)?;
        let psi = default_psi(r1, regions, psi_mix, seed)?;
        let textures = (0..regions)
            .map(|j| {
                let name = TextureKind::NAMES[j % TextureKind::NAMES.len()];
                let kind: TextureKind = name.parse()?;
                make_texture(height, width, kind, seed.wrapping_mul(31).wrapping_add(j as u64))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SyntheticSceneSpec {
            height,
            width,
            regions,
            potts_beta: 1.0,
            potts_sweeps: 200,
            endmembers,
            psi,
            textures,
            seed,
        })
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticScene {
    /// Region label of every pixel, row-major.
    pub labels: Vec<usize>,
    /// Ground-truth `R1 x P` abundances.
    pub abundances: Matrix,
    pub cube: ImageCube,
    pub pan: PanchromaticImage,
}

fn on_simplex(v: &[f64]) -> bool {
    v.iter().all(|&x| x >= 0.0) && (v.iter().sum::<f64>() - 1.0).abs() <= SIMPLEX_TOL
}

/// Generates labels, abundances, the noiseless cube and its panchromatic band.
pub fn synthesize_scene(spec: &SyntheticSceneSpec) -> Result<SyntheticScene> {
    let r1 = spec.endmembers.ncols();
    if spec.psi.len() != spec.regions || spec.textures.len() != spec.regions {
        return Err(Error::InvalidArgument(format!(
            "{} regions need as many psi pairs and textures (got {} and {})",
            spec.regions,
            spec.psi.len(),
            spec.textures.len()
        )));
    }
    for (j, pair) in spec.psi.iter().enumerate() {
        for v in [&pair.first, &pair.second] {
            if v.len() != r1 || !on_simplex(v) {
                return Err(Error::InvalidArgument(format!(
                    "psi of region {j} is not a point of the {r1}-simplex"
                )));
            }
        }
    }
    for (j, t) in spec.textures.iter().enumerate() {
        if t.values.iter().any(|v| !(0.0..=1.0).contains(v)) || t.values.is_empty() {
            return Err(Error::InvalidArgument(format!("texture {j} leaves [0, 1]")));
        }
    }
    if spec.endmembers.iter().any(|&v| v < 0.0 || !v.is_finite()) {
        return Err(Error::InvalidArgument("endmembers must be finite and non-negative".into()));
    }

    let (h, w) = (spec.height, spec.width);
    let labels = sample_potts(h, w, spec.regions, spec.potts_beta, spec.potts_sweeps, spec.seed)?;
    let mut abundances = Matrix::zeros((r1, h * w));
    for (p, &j) in labels.iter().enumerate() {
        let t = spec.textures[j].tiled(p / w, p % w);
        let pair = &spec.psi[j];
        for r in 0..r1 {
            abundances[[r, p]] = t * pair.first[r] + (1.0 - t) * pair.second[r];
        }
    }
    let data = spec.endmembers.dot(&abundances);
    let cube = ImageCube::new(h, w, data)?;
    let pan = synthesize_panchromatic(&cube)?;
    Ok(SyntheticScene {
        labels,
        abundances,
        cube,
        pan,
    })
}

/// Smooth reflectance-like spectra over 400-2500 nm: a baseline plus a few
/// Gaussian bumps per endmember, scaled into `[0.05, 1]`.
pub fn endmember_library(bands: usize, r1: usize, seed: u64) -> Result<Matrix> {
    if bands < 2 || r1 == 0 {
        return Err(Error::InvalidArgument(format!(
            "endmember library needs >= 2 bands and >= 1 endmember, got {bands} and {r1}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xe4d_3e3b);
    let wavelengths: Vec<f64> = (0..bands)
        .map(|b| 400.0 + 2100.0 * b as f64 / (bands - 1) as f64)
        .collect();
    let mut m = Matrix::zeros((bands, r1));
    for r in 0..r1 {
        let baseline = rng.random_range(0.05..0.3);
        let slope = rng.random_range(-0.1..0.1);
        let bumps: Vec<(f64, f64, f64)> = (0..rng.random_range(3..6))
            .map(|_| {
                (
                    rng.random_range(400.0..2500.0),
                    rng.random_range(80.0..400.0),
                    rng.random_range(-0.2..0.7),
                )
            })
            .collect();
        for (b, &lambda) in wavelengths.iter().enumerate() {
            let x = (lambda - 400.0) / 2100.0;
            let mut v = baseline + slope * x;
            for &(centre, width, amp) in &bumps {
                v += amp * (-0.5 * ((lambda - centre) / width).powi(2)).exp();
            }
            m[[b, r]] = v;
        }
        let col = m.column(r);
        let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let top = rng.random_range(0.6..1.0);
        for b in 0..bands {
            let unit = if hi > lo { (m[[b, r]] - lo) / (hi - lo) } else { 0.5 };
            m[[b, r]] = 0.05 + (top - 0.05) * unit;
        }
    }
    Ok(m)
}

/// Extreme abundance pairs: the endpoints of region `j` lean toward
/// endmembers `2j` and `2j + 1` (mod `R1`), blended with weight `mix` with a
/// random simplex point.
pub fn default_psi(r1: usize, regions: usize, mix: f64, seed: u64) -> Result<Vec<PsiPair>> {
    if !(0.0..=1.0).contains(&mix) {
        return Err(Error::InvalidArgument(format!("psi mix must lie in [0, 1], got {mix}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9510);
    let mut endpoint = |vertex: usize| -> Vec<f64> {
        let raw: Vec<f64> = (0..r1).map(|_| Exp1.sample(&mut rng)).collect();
        let total: f64 = raw.iter().sum();
        let v: Vec<f64> = raw
            .iter()
            .enumerate()
            .map(|(r, x)| mix * x / total + if r == vertex { 1.0 - mix } else { 0.0 })
            .collect();
        project_simplex(&v)
    };
    Ok((0..regions)
        .map(|j| {
            let a = (2 * j) % r1;
            let mut b = (2 * j + 1) % r1;
            if b == a && r1 > 1 {
                b = (a + 1) % r1;
            }
            PsiPair {
                first: endpoint(a),
                second: endpoint(b),
            }
        })
        .collect())
}
