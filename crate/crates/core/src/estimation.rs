//! Pilot-based LMMSE channel estimation and MSE metrics.

use crate::error::{Error, Result};
use crate::fading::ComplexSample;

/// Where a channel estimate came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimateSource {
    PilotLmmse,
    Predicted,
    DataRefined,
}

/// One channel coefficient estimate with provenance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelEstimate {
    pub value: ComplexSample,
    pub source: EstimateSource,
    pub time_index: usize,
}

/// LMMSE estimate of the channel from one received pilot:
/// h_hat = y_p |p|^2 / (p (|p|^2 + sigma^2)).
pub fn lmmse(y_p: ComplexSample, p: ComplexSample, sigma2: f64) -> Result<ComplexSample> {
    if p.norm_sqr() == 0.0 {
        return Err(Error::Domain("zero pilot symbol".into()));
    }
    if sigma2 < 0.0 {
        return Err(Error::Domain(format!("negative noise variance {sigma2}")));
    }
    let p2 = p.norm_sqr();
    Ok(y_p * p2 / (p * (p2 + sigma2)))
}

/// Analytic MSE of the LMMSE estimate under h ~ CN(0,1):
/// sigma^2 / (|p|^2 + sigma^2).
pub fn lmmse_target_mse(sigma2: f64, p: ComplexSample) -> Result<f64> {
    if p.norm_sqr() == 0.0 {
        return Err(Error::Domain("zero pilot symbol".into()));
    }
    Ok(sigma2 / (p.norm_sqr() + sigma2))
}

/// Mean of |pred - truth|^2 over two equal-length complex sequences.
pub fn mse(pred: &[ComplexSample], truth: &[ComplexSample]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::Domain(format!(
            "length mismatch: {} vs {}",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::Domain("empty sequences".into()));
    }
    Ok(pred
        .iter()
        .zip(truth)
        .map(|(a, b)| (a - b).norm_sqr())
        .sum::<f64>()
        / pred.len() as f64)
}

/// Mean squared difference of two equal-length real sequences.
pub fn mse_real(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::Domain(format!(
            "length mismatch: {} vs {}",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::Domain("empty sequences".into()));
    }
    Ok(pred
        .iter()
        .zip(truth)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / pred.len() as f64)
}

/// Per-tap LMMSE estimation from guarded pilot sequences.
///
/// Each pilot sequence occupies `2l - 1` samples: the pilot surrounded by
/// `l - 1` zeros on both sides, so each tap's contribution arrives in its
/// own received sample. `starts[i]` is the index of the first sample of
/// pilot sequence `i` within `received`. Returns `l` lists of estimates,
/// one list per tap, each with one estimate per pilot sequence.
pub fn estimate_multipath(
    received: &[ComplexSample],
    starts: &[usize],
    pilot: ComplexSample,
    l: usize,
    sigma2: f64,
) -> Result<Vec<Vec<ChannelEstimate>>> {
    if l == 0 {
        return Err(Error::Domain("need at least one tap".into()));
    }
    if starts.is_empty() {
        return Err(Error::Domain("no pilot sequences in layout".into()));
    }
    let seq_len = 2 * l - 1;
    let mut per_tap: Vec<Vec<ChannelEstimate>> = vec![Vec::with_capacity(starts.len()); l];
    for &start in starts {
        if start + seq_len > received.len() {
            return Err(Error::Domain(format!(
                "pilot sequence at {start} overruns received length {}",
                received.len()
            )));
        }
        // The pilot sits at offset l-1; tap l' echoes it at offset l-1+l'.
        for (tap, estimates) in per_tap.iter_mut().enumerate() {
            let idx = start + l - 1 + tap;
            estimates.push(ChannelEstimate {
                value: lmmse(received[idx], pilot, sigma2)?,
                source: EstimateSource::PilotLmmse,
                time_index: idx,
            });
        }
    }
    Ok(per_tap)
}
