//! Pure numeric kernels shared by the autodiff tape and the standalone API.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Matrix;
use crate::{Error, Result};

/// Probabilities below this are clamped before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

pub const RRELU_LOWER: f64 = 1.0 / 8.0;
pub const RRELU_UPPER: f64 = 1.0 / 3.0;

/// Deterministic generator used for every random draw in the crate.
pub type SeededRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives an independent stream seed from a base seed and a tag path.
pub fn derive_seed(seed: u64, tags: &[u64]) -> u64 {
    let mut h = seed ^ 0x9E37_79B9_7F4A_7C15;
    for &t in tags {
        h = splitmix(h ^ splitmix(t.wrapping_add(0x632B_E59B_D9B4_E019)));
    }
    h
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform Xavier/Glorot initialisation in `±sqrt(6 / (rows + cols))`.
pub fn xavier_init(rows: usize, cols: usize, seed: u64) -> Result<Matrix> {
    xavier_init_from(rows, cols, &mut seeded_rng(seed))
}

pub fn xavier_init_from(rows: usize, cols: usize, rng: &mut impl Rng) -> Result<Matrix> {
    if rows == 0 || cols == 0 {
        return Err(Error::validation(format!(
            "xavier_init needs non-zero dimensions, got {rows}x{cols}"
        )));
    }
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| rng.random_range(-bound..=bound))
        .collect();
    Matrix::from_vec(rows, cols, data)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RreluMode {
    /// Random per-entry negative slope.
    Train,
    /// Fixed negative slope `(lower + upper) / 2`.
    Eval,
}

pub(crate) fn check_rrelu_bounds(lower: f64, upper: f64) -> Result<()> {
    if !(lower > 0.0 && lower <= upper && upper < 1.0) {
        return Err(Error::validation(format!(
            "rrelu bounds must satisfy 0 < lower <= upper < 1, got ({lower}, {upper})"
        )));
    }
    Ok(())
}

/// Per-entry multipliers applied by RReLU: 1 for non-negative inputs, the
/// sampled (or mean) slope for negative ones.
pub(crate) fn rrelu_multipliers(
    x: &Matrix,
    lower: f64,
    upper: f64,
    rng: Option<&mut SeededRng>,
) -> Matrix {
    match rng {
        Some(rng) => x.map(|v| {
            // draw for every entry so the stream position is data independent
            let slope = if lower == upper {
                lower
            } else {
                rng.random_range(lower..=upper)
            };
            if v >= 0.0 {
                1.0
            } else {
                slope
            }
        }),
        None => {
            let slope = 0.5 * (lower + upper);
            x.map(|v| if v >= 0.0 { 1.0 } else { slope })
        }
    }
}

/// Randomised leaky ReLU.
pub fn rrelu(x: &Matrix, lower: f64, upper: f64, mode: RreluMode, seed: u64) -> Result<Matrix> {
    check_rrelu_bounds(lower, upper)?;
    let mut rng = seeded_rng(seed);
    let mult = match mode {
        RreluMode::Train => rrelu_multipliers(x, lower, upper, Some(&mut rng)),
        RreluMode::Eval => rrelu_multipliers(x, lower, upper, None),
    };
    Ok(x.zip_map(&mult, |a, m| a * m))
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(logits: &Matrix) -> Result<Matrix> {
    if !logits.is_finite() {
        return Err(Error::Numeric("softmax over non-finite logits".into()));
    }
    let mut out = logits.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    Ok(out)
}

/// Mean negative log-likelihood of `targets` under row distributions.
pub fn cross_entropy(probabilities: &Matrix, targets: &[usize]) -> Result<f64> {
    Ok(nll_sum(probabilities, targets)? / targets.len() as f64)
}

pub(crate) fn nll_sum(probabilities: &Matrix, targets: &[usize]) -> Result<f64> {
    if targets.len() != probabilities.rows() {
        return Err(Error::validation(format!(
            "{} targets for {} probability rows",
            targets.len(),
            probabilities.rows()
        )));
    }
    if targets.is_empty() {
        return Err(Error::validation("cross entropy over zero rows"));
    }
    let mut total = 0.0;
    for (r, &t) in targets.iter().enumerate() {
        if t >= probabilities.cols() {
            return Err(Error::validation(format!(
                "target {t} out of range for {} classes",
                probabilities.cols()
            )));
        }
        total -= probabilities[(r, t)].max(PROB_FLOOR).ln();
    }
    Ok(total)
}
