//! End-to-end flat-fading receivers: fixed-horizon, adaptive, and
//! data-decision-driven 1:k, plus bandwidth-efficiency accounting.
//!
//! All receivers share the same per-trial skeleton: one symbol per
//! coherence block, a pilot block of `window_n` pilots feeding LMMSE
//! estimation, predicted coefficients for the data blocks, symbol-wise ML
//! detection. Trials are independent and seeded per index, so reports are
//! reproducible and mergeable.

use crate::adaptive::{select_n, MseLookupTable};
use crate::error::{Error, Result};
use crate::estimation::{lmmse, lmmse_target_mse, ChannelEstimate, EstimateSource};
use crate::fading::{coherence_block_length, generate_fading, ComplexSample, DEFAULT_SYMBOL_PERIOD_S};
use crate::math::{derive_seed, SeededRng};
use crate::modem::{demap, ebn0_to_sigma2, ml_detect, Constellation};
use crate::predictor::{predict, PredictorNet};
use num_complex::Complex64;
use rayon::prelude::*;

/// Pilot/data frame geometry of the 1:k transmission scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameLayout {
    /// Pilot symbols per pilot block.
    pub n_p: usize,
    /// Data symbols (prediction horizon) per data block.
    pub n_c: usize,
    /// Data blocks per pilot block; 1 is the purely pilot-driven scheme.
    pub k: usize,
}

/// Fraction of channel uses that carry data: k n_c / (n_p + k n_c).
pub fn efficiency(layout: &FrameLayout) -> f64 {
    let data = (layout.k * layout.n_c) as f64;
    data / (layout.n_p as f64 + data)
}

/// Aggregated outcome of one receiver experiment point.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceiverReport {
    pub ber: f64,
    pub ber_stderr: f64,
    /// Mean squared error of the channel coefficients used for detection
    /// (predictions or interpolations) against the true channel.
    pub prediction_mse: f64,
    pub mse_stderr: f64,
    pub efficiency: f64,
    pub bits_sent: u64,
    pub bit_errors: u64,
    /// Refinement iterations that hit the cap (data-driven), or discarded
    /// fit failures (AR(2) baseline).
    pub convergence_failures: u64,
    pub trials_run: usize,
    pub mean_n_c: f64,
}

/// Whether detection uses predicted coefficients or the true channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsiMode {
    Predicted,
    Perfect,
}

/// Monte-Carlo stopping rule: run until `min_bit_errors` are collected or
/// the trial cap is reached, whichever happens first.
#[derive(Debug, Clone, Copy)]
pub struct McStop {
    pub min_bit_errors: u64,
}

impl Default for McStop {
    fn default() -> Self {
        Self { min_bit_errors: 100 }
    }
}

pub(crate) struct TrialOut {
    pub bits: u64,
    pub errors: u64,
    pub sq_err_sum: f64,
    pub coef_count: u64,
    pub conv_failures: u64,
    pub n_c: usize,
}

// Runs trials in deterministic chunks, early-stopping once the error
// budget is met. The closure must be pure in the trial index.
pub(crate) fn run_trials<F>(trials: usize, stop: McStop, f: F) -> Result<Vec<TrialOut>>
where
    F: Fn(usize) -> Result<TrialOut> + Sync,
{
    const CHUNK: usize = 64;
    let mut outs: Vec<TrialOut> = Vec::new();
    let mut errors = 0u64;
    let mut start = 0usize;
    while start < trials {
        let end = (start + CHUNK).min(trials);
        let chunk: Vec<Result<TrialOut>> =
            (start..end).into_par_iter().map(&f).collect();
        for t in chunk {
            let t = t?;
            errors += t.errors;
            outs.push(t);
        }
        start = end;
        if errors >= stop.min_bit_errors {
            break;
        }
    }
    Ok(outs)
}

pub(crate) fn summarize(outs: Vec<TrialOut>, efficiency: f64) -> ReceiverReport {
    let trials_run = outs.len();
    let bits_sent: u64 = outs.iter().map(|t| t.bits).sum();
    let bit_errors: u64 = outs.iter().map(|t| t.errors).sum();
    let conv: u64 = outs.iter().map(|t| t.conv_failures).sum();
    let coefs: u64 = outs.iter().map(|t| t.coef_count).sum();
    let sq: f64 = outs.iter().map(|t| t.sq_err_sum).sum();
    let ber = if bits_sent > 0 { bit_errors as f64 / bits_sent as f64 } else { 0.0 };
    let mse = if coefs > 0 { sq / coefs as f64 } else { 0.0 };
    let mean_n_c =
        if trials_run > 0 { outs.iter().map(|t| t.n_c as f64).sum::<f64>() / trials_run as f64 } else { 0.0 };

    // Per-trial spread drives the standard errors.
    let (mut ber_var, mut mse_var) = (0.0, 0.0);
    if trials_run > 1 {
        let mean_trial_ber: Vec<f64> = outs
            .iter()
            .map(|t| if t.bits > 0 { t.errors as f64 / t.bits as f64 } else { 0.0 })
            .collect();
        let mb = mean_trial_ber.iter().sum::<f64>() / trials_run as f64;
        ber_var = mean_trial_ber.iter().map(|b| (b - mb) * (b - mb)).sum::<f64>()
            / (trials_run as f64 - 1.0)
            / trials_run as f64;
        let trial_mse: Vec<f64> = outs
            .iter()
            .map(|t| if t.coef_count > 0 { t.sq_err_sum / t.coef_count as f64 } else { 0.0 })
            .collect();
        let mm = trial_mse.iter().sum::<f64>() / trials_run as f64;
        mse_var = trial_mse.iter().map(|m| (m - mm) * (m - mm)).sum::<f64>()
            / (trials_run as f64 - 1.0)
            / trials_run as f64;
    }

    ReceiverReport {
        ber,
        ber_stderr: ber_var.sqrt(),
        prediction_mse: mse,
        mse_stderr: mse_var.sqrt(),
        efficiency,
        bits_sent,
        bit_errors,
        convergence_failures: conv,
        trials_run,
        mean_n_c,
    }
}

pub(crate) fn random_bits(rng: &mut SeededRng, count: usize) -> Vec<u8> {
    (0..count).map(|_| u8::from(rng.gen_bool(0.5))).collect()
}

/// Per-symbol LMMSE refinement treating decoded symbols as pilots.
pub fn refine_estimates(
    y_data: &[ComplexSample],
    decoded_symbols: &[ComplexSample],
    sigma2: f64,
) -> Result<Vec<ChannelEstimate>> {
    if y_data.len() != decoded_symbols.len() {
        return Err(Error::Domain(format!(
            "refine lengths {} vs {}",
            y_data.len(),
            decoded_symbols.len()
        )));
    }
    y_data
        .iter()
        .zip(decoded_symbols)
        .enumerate()
        .map(|(i, (&y, &s))| {
            Ok(ChannelEstimate {
                value: lmmse(y, s, sigma2)?,
                source: EstimateSource::DataRefined,
                time_index: i,
            })
        })
        .collect()
}

/// Fixed-horizon predictor-aided receiver: pilot block, `n_preds`
/// predictions, `n_preds` data symbols, symbol-wise ML detection.
pub fn run_fixed(
    net: &PredictorNet,
    c: &Constellation,
    f_d: f64,
    ebn0_db: f64,
    n_preds: usize,
    trials: usize,
    seed: u64,
) -> Result<ReceiverReport> {
    run_fixed_with(net, c, f_d, ebn0_db, n_preds, trials, seed, CsiMode::Predicted, McStop::default())
}

#[allow(clippy::too_many_arguments)]
pub fn run_fixed_with(
    net: &PredictorNet,
    c: &Constellation,
    f_d: f64,
    ebn0_db: f64,
    n_preds: usize,
    trials: usize,
    seed: u64,
    csi: CsiMode,
    stop: McStop,
) -> Result<ReceiverReport> {
    if n_preds == 0 {
        return Err(Error::Domain("n_preds must be positive".into()));
    }
    let sigma2 = ebn0_to_sigma2(ebn0_db, c.m);
    let block_s = coherence_block_length(f_d)? as f64 * DEFAULT_SYMBOL_PERIOD_S;
    let window = net.window_n;
    let pilot = Constellation::pilot();
    let bits_per_sym = c.bits_per_symbol();

    let outs = run_trials(trials, stop, |trial| {
        let trial_seed = derive_seed(seed, trial as u64);
        let h = generate_fading(window + n_preds, f_d, block_s, trial_seed)?;
        let mut rng = SeededRng::new(derive_seed(trial_seed, 1));

        let mut ests = Vec::with_capacity(window);
        for t in 0..window {
            let y = h.gains[t] * pilot + rng.complex_gaussian_var(sigma2);
            ests.push(lmmse(y, pilot, sigma2)?);
        }
        let coefs: Vec<Complex64> = match csi {
            CsiMode::Predicted => predict(net, &ests, n_preds)?,
            CsiMode::Perfect => h.gains[window..].to_vec(),
        };

        let bits = random_bits(&mut rng, n_preds * bits_per_sym);
        let symbols = crate::modem::modulate(&bits, c)?;
        let mut errors = 0u64;
        let mut sq = 0.0;
        for t in 0..n_preds {
            let truth = h.gains[window + t];
            let y = truth * symbols[t] + rng.complex_gaussian_var(sigma2);
            let (idx, _) = ml_detect(y, coefs[t], c)?;
            let got = demap(&[idx], c)?;
            errors += got
                .iter()
                .zip(&bits[t * bits_per_sym..(t + 1) * bits_per_sym])
                .filter(|(a, b)| a != b)
                .count() as u64;
            sq += (coefs[t] - truth).norm_sqr();
        }
        Ok(TrialOut {
            bits: (n_preds * bits_per_sym) as u64,
            errors,
            sq_err_sum: sq,
            coef_count: n_preds as u64,
            conv_failures: 0,
            n_c: n_preds,
        })
    })?;

    Ok(summarize(outs, efficiency(&FrameLayout { n_p: window, n_c: n_preds, k: 1 })))
}

fn check_fingerprint(net: &PredictorNet, lut: &MseLookupTable) -> Result<()> {
    let actual = net.fingerprint();
    if lut.fingerprint != actual {
        return Err(Error::FingerprintMismatch { expected: lut.fingerprint, actual });
    }
    Ok(())
}

/// Operating-point SNR (Es/N0, dB) for lookup and target-MSE evaluation.
fn operating_snr_db(sigma2: f64) -> f64 {
    -10.0 * sigma2.log10()
}

/// Adaptive receiver: the horizon comes from the lookup table at the
/// operating SNR/Doppler with the analytic LMMSE MSE as target. Identical
/// to the 1:1 data-driven scheme.
pub fn run_adaptive(
    net: &PredictorNet,
    lut: &MseLookupTable,
    c: &Constellation,
    f_d: f64,
    ebn0_db: f64,
    trials: usize,
    seed: u64,
) -> Result<ReceiverReport> {
    run_data_driven(net, lut, c, f_d, ebn0_db, 1, trials, seed)
}

/// Refinement cap taken from the architecture description.
pub const REFINE_ITERATION_CAP: usize = 200;

/// 1:k data-decision-driven receiver. One pilot block is followed by `k`
/// data blocks; from the second block on, the predictor window is built
/// from LMMSE re-estimates computed off decoded symbols. Within each data
/// block (for k > 1) decoding and refinement iterate until two consecutive
/// decision vectors match, capped at `REFINE_ITERATION_CAP` iterations.
#[allow(clippy::too_many_arguments)]
pub fn run_data_driven(
    net: &PredictorNet,
    lut: &MseLookupTable,
    c: &Constellation,
    f_d: f64,
    ebn0_db: f64,
    k: usize,
    trials: usize,
    seed: u64,
) -> Result<ReceiverReport> {
    run_data_driven_with(net, lut, c, f_d, ebn0_db, k, trials, seed, McStop::default())
}

#[allow(clippy::too_many_arguments)]
pub fn run_data_driven_with(
    net: &PredictorNet,
    lut: &MseLookupTable,
    c: &Constellation,
    f_d: f64,
    ebn0_db: f64,
    k: usize,
    trials: usize,
    seed: u64,
    stop: McStop,
) -> Result<ReceiverReport> {
    if k == 0 {
        return Err(Error::Domain("k must be at least 1".into()));
    }
    check_fingerprint(net, lut)?;
    let sigma2 = ebn0_to_sigma2(ebn0_db, c.m);
    let snr_db = operating_snr_db(sigma2);
    let pilot = Constellation::pilot();
    let target = lmmse_target_mse(sigma2, pilot)?;
    let n_c = select_n(lut, snr_db, f_d, target)?;
    let block_s = coherence_block_length(f_d)? as f64 * DEFAULT_SYMBOL_PERIOD_S;
    let window = net.window_n;
    let bits_per_sym = c.bits_per_symbol();

    let outs = run_trials(trials, stop, |trial| {
        let trial_seed = derive_seed(seed, trial as u64);
        let h = generate_fading(window + k * n_c, f_d, block_s, trial_seed)?;
        let mut rng = SeededRng::new(derive_seed(trial_seed, 1));

        let mut window_est: Vec<Complex64> = Vec::with_capacity(window);
        for t in 0..window {
            let y = h.gains[t] * pilot + rng.complex_gaussian_var(sigma2);
            window_est.push(lmmse(y, pilot, sigma2)?);
        }

        let mut errors = 0u64;
        let mut sq = 0.0;
        let mut conv_failures = 0u64;
        let mut bits_total = 0u64;

        for block in 0..k {
            let base = window + block * n_c;
            let preds = predict(net, &window_est, n_c)?;
            for (t, p) in preds.iter().enumerate() {
                sq += (p - h.gains[base + t]).norm_sqr();
            }

            let bits = random_bits(&mut rng, n_c * bits_per_sym);
            let symbols = crate::modem::modulate(&bits, c)?;
            let mut y_block = Vec::with_capacity(n_c);
            for t in 0..n_c {
                y_block.push(h.gains[base + t] * symbols[t] + rng.complex_gaussian_var(sigma2));
            }

            let mut decisions: Vec<usize> = y_block
                .iter()
                .zip(&preds)
                .map(|(&y, &p)| ml_detect(y, p, c).map(|(i, _)| i))
                .collect::<Result<_>>()?;

            if k > 1 {
                // Decision-directed refinement until the decisions settle.
                let mut refined: Vec<Complex64> = Vec::new();
                let mut converged = false;
                for _ in 0..REFINE_ITERATION_CAP {
                    let dec_syms: Vec<Complex64> =
                        decisions.iter().map(|&i| c.points[i]).collect();
                    let ests = refine_estimates(&y_block, &dec_syms, sigma2)?;
                    refined = ests.iter().map(|e| e.value).collect();
                    let next: Vec<usize> = y_block
                        .iter()
                        .zip(&refined)
                        .map(|(&y, &e)| ml_detect(y, e, c).map(|(i, _)| i))
                        .collect::<Result<_>>()?;
                    if next == decisions {
                        converged = true;
                        break;
                    }
                    decisions = next;
                }
                if !converged {
                    conv_failures += 1;
                }
                // The refined estimates roll the predictor window forward.
                for &e in &refined {
                    window_est.push(e);
                }
                let cut = window_est.len() - window;
                window_est.drain(..cut);
            }

            for (t, &idx) in decisions.iter().enumerate() {
                let got = demap(&[idx], c)?;
                errors += got
                    .iter()
                    .zip(&bits[t * bits_per_sym..(t + 1) * bits_per_sym])
                    .filter(|(a, b)| a != b)
                    .count() as u64;
            }
            bits_total += (n_c * bits_per_sym) as u64;
        }

        Ok(TrialOut {
            bits: bits_total,
            errors,
            sq_err_sum: sq,
            coef_count: (k * n_c) as u64,
            conv_failures,
            n_c,
        })
    })?;

    Ok(summarize(outs, efficiency(&FrameLayout { n_p: window, n_c, k })))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adaptive::build_lut;
    use crate::math::SeededRng;
    use crate::modem::{gray_qam, rayleigh_qpsk_ber};
    use crate::nn::Network;

    fn toy_net(seed: u64) -> PredictorNet {
        let mut rng = SeededRng::new(seed);
        PredictorNet {
            real_net: Network::init(1, 6, 1, &mut rng),
            imag_net: Network::init(1, 6, 1, &mut rng),
            window_n: 10,
            trained_doppler_hz: 10.0,
        }
    }

    #[test]
    fn efficiency_values() {
        assert!((efficiency(&FrameLayout { n_p: 10, n_c: 100, k: 1 }) - 100.0 / 110.0).abs() < 1e-12);
        assert!((efficiency(&FrameLayout { n_p: 10, n_c: 100, k: 10 }) - 1000.0 / 1010.0).abs() < 1e-12);
        assert!((efficiency(&FrameLayout { n_p: 10, n_c: 5, k: 1 }) - 5.0 / 15.0).abs() < 1e-12);
    }

    #[test]
    fn perfect_csi_matches_rayleigh_closed_form() {
        let net = toy_net(1);
        let c = gray_qam(4).unwrap();
        // One trial is essentially one fade state on this grid, so the
        // stderr is set by the trial count, not the bit count.
        let report = run_fixed_with(
            &net,
            &c,
            50.0,
            10.0,
            100,
            16000,
            77,
            CsiMode::Perfect,
            McStop { min_bit_errors: u64::MAX },
        )
        .unwrap();
        let want = rayleigh_qpsk_ber(10.0);
        let rel = (report.ber - want).abs() / want;
        assert!(
            rel < 0.05,
            "perfect-CSI BER {} vs closed form {want} (rel {rel})",
            report.ber
        );
        assert_eq!(report.prediction_mse, 0.0);
    }

    #[test]
    fn bit_accounting_invariants() {
        let net = toy_net(2);
        let c = gray_qam(16).unwrap();
        let report = run_fixed(&net, &c, 50.0, 5.0, 20, 50, 3).unwrap();
        assert_eq!(report.bits_sent, report.trials_run as u64 * 20 * 4);
        assert!(report.bit_errors <= report.bits_sent);
        assert!(report.ber >= 0.0 && report.ber <= 1.0);
        assert!(report.efficiency > 0.0 && report.efficiency < 1.0);
    }

    #[test]
    fn reports_reproducible() {
        let net = toy_net(3);
        let c = gray_qam(4).unwrap();
        let a = run_fixed(&net, &c, 50.0, 8.0, 10, 40, 11).unwrap();
        let b = run_fixed(&net, &c, 50.0, 8.0, 10, 40, 11).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn refine_estimates_basics() {
        let truth = Complex64::new(0.4, -0.9);
        let syms = vec![Complex64::new(std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2); 3];
        let y: Vec<Complex64> = syms.iter().map(|s| truth * s).collect();
        let ests = refine_estimates(&y, &syms, 0.0).unwrap();
        for e in &ests {
            assert!((e.value - truth).norm() < 1e-14);
            assert_eq!(e.source, EstimateSource::DataRefined);
        }
        assert!(refine_estimates(&y, &syms[..2], 0.0).is_err());
    }

    #[test]
    fn refine_with_wrong_decision_is_biased() {
        // Forced wrong decision s' != s biases the estimate by s/s'.
        let c = gray_qam(4).unwrap();
        let mut rng = SeededRng::new(9);
        let sigma2 = 0.05;
        let (mut mse_correct, mut mse_wrong) = (0.0, 0.0);
        let trials = 20_000;
        for _ in 0..trials {
            let h = rng.complex_gaussian();
            let s = c.points[0];
            let y = h * s + rng.complex_gaussian_var(sigma2);
            let right = refine_estimates(&[y], &[s], sigma2).unwrap()[0].value;
            let wrong = refine_estimates(&[y], &[c.points[3]], sigma2).unwrap()[0].value;
            mse_correct += (right - h).norm_sqr();
            mse_wrong += (wrong - h).norm_sqr();
        }
        mse_correct /= trials as f64;
        mse_wrong /= trials as f64;
        let analytic = lmmse_target_mse(sigma2, c.points[0]).unwrap();
        assert!((mse_correct - analytic).abs() / analytic < 0.05);
        assert!(mse_wrong > 2.0 * mse_correct, "{mse_wrong} vs {mse_correct}");
    }

    #[test]
    fn data_driven_k1_equals_adaptive_bit_for_bit() {
        let net = toy_net(4);
        let c = gray_qam(4).unwrap();
        let lut = build_lut(&net, &[5, 10], &[50.0], &[10.0], 30, 5).unwrap();
        let a = run_adaptive(&net, &lut, &c, 50.0, 10.0, 30, 21).unwrap();
        let b = run_data_driven(&net, &lut, &c, 50.0, 10.0, 1, 30, 21).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn fingerprint_mismatch_is_fatal() {
        let net = toy_net(5);
        let other = toy_net(6);
        let c = gray_qam(4).unwrap();
        let lut = build_lut(&other, &[5], &[50.0], &[10.0], 10, 5).unwrap();
        match run_adaptive(&net, &lut, &c, 50.0, 10.0, 10, 1) {
            Err(Error::FingerprintMismatch { .. }) => {}
            other => panic!("expected fingerprint mismatch, got {other:?}"),
        }
    }
}
