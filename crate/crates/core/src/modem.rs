//! Gray-coded square M-QAM mapping, Eb/N0 conversion, and symbol-wise ML
//! detection.

use crate::error::{Error, Result};
use crate::fading::ComplexSample;
use num_complex::Complex64;

/// A unit-energy square QAM constellation with per-axis Gray bit labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    pub m: usize,
    pub points: Vec<ComplexSample>,
    /// Bit label of each point, `bits_per_symbol` bits packed LSB-last
    /// (first half of the bits select the I level, second half the Q level).
    pub bit_map: Vec<u32>,
}

impl Constellation {
    pub fn bits_per_symbol(&self) -> usize {
        self.m.trailing_zeros() as usize
    }

    /// The fixed pilot symbol: first point of the 4-QAM constellation,
    /// same power as data symbols.
    pub fn pilot() -> ComplexSample {
        gray_qam(4).expect("4-QAM always valid").points[0]
    }
}

fn gray_code(i: usize) -> usize {
    i ^ (i >> 1)
}

/// Builds a Gray-coded square QAM constellation with unit average symbol
/// energy. Supported orders: 4, 16, 64.
pub fn gray_qam(m: usize) -> Result<Constellation> {
    if !matches!(m, 4 | 16 | 64) {
        return Err(Error::Domain(format!("unsupported constellation order {m}")));
    }
    let side = (m as f64).sqrt() as usize;
    let bits_per_axis = side.trailing_zeros() as usize;

    // Levels -(side-1), ..., -1, 1, ..., side-1 (odd integers), scaled to
    // unit mean symbol energy: E = 2 * mean(level^2) = 2(side^2 - 1)/3.
    let norm = (2.0 * (side * side - 1) as f64 / 3.0).sqrt();
    let level = |idx: usize| (2.0 * idx as f64 - (side as f64 - 1.0)) / norm;

    let mut points = Vec::with_capacity(m);
    let mut bit_map = Vec::with_capacity(m);
    for qi in 0..side {
        for ii in 0..side {
            points.push(Complex64::new(level(ii), level(qi)));
            let label = (gray_code(ii) << bits_per_axis) | gray_code(qi);
            bit_map.push(label as u32);
        }
    }
    Ok(Constellation { m, points, bit_map })
}

/// Noise variance for a target Eb/N0 in dB at unit symbol energy:
/// sigma^2 = 1 / (log2(m) * 10^(ebn0/10)).
pub fn ebn0_to_sigma2(ebn0_db: f64, m: usize) -> f64 {
    let bits = (m as f64).log2();
    1.0 / (bits * 10f64.powf(ebn0_db / 10.0))
}

/// Symbol-wise maximum-likelihood detection given a channel estimate:
/// argmin over constellation points of |y - h_hat s|^2. Ties go to the
/// lowest point index.
pub fn ml_detect(
    y: ComplexSample,
    h_hat: ComplexSample,
    c: &Constellation,
) -> Result<(usize, u32)> {
    if h_hat.norm_sqr() == 0.0 {
        return Err(Error::Domain("degenerate channel estimate (zero)".into()));
    }
    let mut best = 0usize;
    let mut best_cost = f64::INFINITY;
    for (idx, s) in c.points.iter().enumerate() {
        let cost = (y - h_hat * s).norm_sqr();
        if cost < best_cost {
            best_cost = cost;
            best = idx;
        }
    }
    Ok((best, c.bit_map[best]))
}

/// Maps a bit slice (multiple of log2(m) bits) to symbol indices.
pub fn bits_to_indices(bits: &[u8], c: &Constellation) -> Result<Vec<usize>> {
    let k = c.bits_per_symbol();
    if bits.len() % k != 0 {
        return Err(Error::Domain(format!(
            "bit count {} not divisible by bits/symbol {k}",
            bits.len()
        )));
    }
    let mut lookup = vec![0usize; c.m];
    for (idx, &label) in c.bit_map.iter().enumerate() {
        lookup[label as usize] = idx;
    }
    Ok(bits
        .chunks(k)
        .map(|chunk| {
            let mut label = 0usize;
            for &b in chunk {
                label = (label << 1) | (b as usize & 1);
            }
            lookup[label]
        })
        .collect())
}

/// Maps bits to constellation symbols.
pub fn modulate(bits: &[u8], c: &Constellation) -> Result<Vec<ComplexSample>> {
    Ok(bits_to_indices(bits, c)?.into_iter().map(|i| c.points[i]).collect())
}

/// Inverse of `bits_to_indices`: symbol indices back to bits.
pub fn demap(indices: &[usize], c: &Constellation) -> Result<Vec<u8>> {
    let k = c.bits_per_symbol();
    let mut bits = Vec::with_capacity(indices.len() * k);
    for &idx in indices {
        if idx >= c.m {
            return Err(Error::Domain(format!("symbol index {idx} out of range")));
        }
        let label = c.bit_map[idx];
        for b in (0..k).rev() {
            bits.push(((label >> b) & 1) as u8);
        }
    }
    Ok(bits)
}

/// Hamming distance between two equal-length bit slices.
pub fn count_bit_errors(a: &[u8], b: &[u8]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x != y).count()
}

/// Closed-form bit error rate of Gray-coded 4-QAM over Rayleigh fading
/// with perfect CSI: 0.5 (1 - sqrt(g / (1 + g))), g = Eb/N0 (linear).
pub fn rayleigh_qpsk_ber(ebn0_linear: f64) -> f64 {
    0.5 * (1.0 - (ebn0_linear / (1.0 + ebn0_linear)).sqrt())
}
