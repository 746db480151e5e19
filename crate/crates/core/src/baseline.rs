//! Non-neural comparison receivers: AR(2) linear prediction fit by
//! least squares on the Yule-Walker regression system, and the
//! LMMSE + linear-interpolation benchmark.

use crate::adaptive::{select_n, MseLookupTable};
use crate::error::{Error, Result};
use crate::estimation::{lmmse, lmmse_target_mse};
use crate::fading::{coherence_block_length, generate_fading, ComplexSample, DEFAULT_SYMBOL_PERIOD_S};
use crate::math::{derive_seed, SeededRng};
use crate::modem::{demap, ebn0_to_sigma2, ml_detect, Constellation};
use crate::receiver::{
    efficiency, random_bits, run_trials, summarize, FrameLayout, McStop, ReceiverReport, TrialOut,
};
use num_complex::Complex64;

/// Second-order autoregressive channel model h(t) = r1 h(t-1) + r2 h(t-2).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ar2Model {
    pub rho1: Complex64,
    pub rho2: Complex64,
}

/// Fits the AR(2) coefficients by complex least squares over the stacked
/// regression equations for t = 2..n-1, with a tiny relative ridge for
/// conditioning (constant inputs resolve to the minimum-norm solution).
pub fn fit_ar2_yw(estimates: &[ComplexSample]) -> Result<Ar2Model> {
    let n = estimates.len();
    if n < 4 {
        return Err(Error::Domain(format!("need at least 4 estimates, got {n}")));
    }
    let (mut a11, mut a22) = (0.0f64, 0.0f64);
    let mut a12 = Complex64::new(0.0, 0.0);
    let mut b1 = Complex64::new(0.0, 0.0);
    let mut b2 = Complex64::new(0.0, 0.0);
    for t in 2..n {
        let h1 = estimates[t - 1];
        let h2 = estimates[t - 2];
        let y = estimates[t];
        a11 += h1.norm_sqr();
        a22 += h2.norm_sqr();
        a12 += h1.conj() * h2;
        b1 += h1.conj() * y;
        b2 += h2.conj() * y;
    }
    let scale = 0.5 * (a11 + a22);
    if scale == 0.0 {
        return Err(Error::FitFailed("all-zero regressors in AR(2) system".into()));
    }
    // Well-conditioned systems solve exactly; near-singular ones (constant
    // or collinear inputs) take a relative ridge and resolve to the
    // minimum-norm solution. Both branches are scale-equivariant.
    let det_raw = a11 * a22 - a12.norm_sqr();
    let lambda = if det_raw.abs() > 1e-10 * scale * scale { 0.0 } else { 1e-8 * scale };
    let a11 = a11 + lambda;
    let a22 = a22 + lambda;
    let det = Complex64::new(a11 * a22, 0.0) - a12 * a12.conj();
    if det.norm() == 0.0 {
        return Err(Error::FitFailed("singular AR(2) normal equations".into()));
    }
    let rho1 = (b1 * a22 - a12 * b2) / det;
    let rho2 = (b2 * a11 - a12.conj() * b1) / det;
    if !rho1.re.is_finite() || !rho1.im.is_finite() || !rho2.re.is_finite() || !rho2.im.is_finite()
    {
        return Err(Error::FitFailed("non-finite AR(2) solution".into()));
    }
    Ok(Ar2Model { rho1, rho2 })
}

/// Recursively extrapolates the AR(2) recursion from the last two values.
pub fn ar2_predict(
    model: &Ar2Model,
    h_prev1: ComplexSample,
    h_prev2: ComplexSample,
    n_preds: usize,
) -> Vec<ComplexSample> {
    let mut out = Vec::with_capacity(n_preds);
    let (mut p1, mut p2) = (h_prev1, h_prev2);
    for _ in 0..n_preds {
        let next = model.rho1 * p1 + model.rho2 * p2;
        out.push(next);
        p2 = p1;
        p1 = next;
    }
    out
}

/// AR(2) linear-prediction receiver: 10 pilot LMMSE estimates fit the
/// model, the horizon comes from the same adaptive lookup table as the
/// predictor receiver, detection is symbol-wise ML on the extrapolated
/// coefficients. Fit failures discard the trial and are counted.
#[allow(clippy::too_many_arguments)]
pub fn run_ar2_receiver(
    c: &Constellation,
    f_d: f64,
    ebn0_db: f64,
    lut: &MseLookupTable,
    window: usize,
    trials: usize,
    seed: u64,
    stop: McStop,
) -> Result<ReceiverReport> {
    if window < 4 {
        return Err(Error::Domain("AR(2) receiver needs at least 4 pilots".into()));
    }
    let sigma2 = ebn0_to_sigma2(ebn0_db, c.m);
    let snr_db = -10.0 * sigma2.log10();
    let pilot = Constellation::pilot();
    let target = lmmse_target_mse(sigma2, pilot)?;
    let n_c = select_n(lut, snr_db, f_d, target)?;
    let block_s = coherence_block_length(f_d)? as f64 * DEFAULT_SYMBOL_PERIOD_S;
    let bits_per_sym = c.bits_per_symbol();

    let outs = run_trials(trials, stop, |trial| {
        let trial_seed = derive_seed(seed, trial as u64);
        let h = generate_fading(window + n_c, f_d, block_s, trial_seed)?;
        let mut rng = SeededRng::new(derive_seed(trial_seed, 1));

        let mut ests = Vec::with_capacity(window);
        for t in 0..window {
            let y = h.gains[t] * pilot + rng.complex_gaussian_var(sigma2);
            ests.push(lmmse(y, pilot, sigma2)?);
        }
        let model = match fit_ar2_yw(&ests) {
            Ok(m) => m,
            Err(_) => {
                // Discarded trial: no bits at stake, failure recorded.
                return Ok(TrialOut {
                    bits: 0,
                    errors: 0,
                    sq_err_sum: 0.0,
                    coef_count: 0,
                    conv_failures: 1,
                    n_c,
                });
            }
        };
        let preds = ar2_predict(&model, ests[window - 1], ests[window - 2], n_c);

        let bits = random_bits(&mut rng, n_c * bits_per_sym);
        let symbols = crate::modem::modulate(&bits, c)?;
        let mut errors = 0u64;
        let mut sq = 0.0;
        for t in 0..n_c {
            let truth = h.gains[window + t];
            let y = truth * symbols[t] + rng.complex_gaussian_var(sigma2);
            // A collapsed AR extrapolation can hit exactly zero; fall back
            // to the last pilot estimate for detection in that case.
            let coef = if preds[t].norm_sqr() > 0.0 { preds[t] } else { ests[window - 1] };
            let (idx, _) = ml_detect(y, coef, c)?;
            let got = demap(&[idx], c)?;
            errors += got
                .iter()
                .zip(&bits[t * bits_per_sym..(t + 1) * bits_per_sym])
                .filter(|(a, b)| a != b)
                .count() as u64;
            sq += (preds[t] - truth).norm_sqr();
        }
        Ok(TrialOut {
            bits: (n_c * bits_per_sym) as u64,
            errors,
            sq_err_sum: sq,
            coef_count: n_c as u64,
            conv_failures: 0,
            n_c,
        })
    })?;

    Ok(summarize(outs, efficiency(&FrameLayout { n_p: window, n_c, k: 1 })))
}

/// LMMSE + linear-interpolation benchmark. The frame interleaves one pilot
/// with `n_d / n_p` data symbols, repeated `n_p` times; channel estimates
/// at data positions are linear interpolations between neighboring pilot
/// estimates, and the tail past the last pilot extrapolates the last
/// slope (or holds the last estimate when only one pilot exists).
#[allow(clippy::too_many_arguments)]
pub fn run_lmmse_li_receiver(
    c: &Constellation,
    f_d: f64,
    ebn0_db: f64,
    n_p: usize,
    n_d: usize,
    trials: usize,
    seed: u64,
    stop: McStop,
) -> Result<ReceiverReport> {
    if n_p == 0 {
        return Err(Error::Domain("need at least one pilot".into()));
    }
    if n_d % n_p != 0 {
        return Err(Error::Domain(format!(
            "data count {n_d} must divide evenly over {n_p} pilots"
        )));
    }
    let gap = n_d / n_p;
    let frame = n_p + n_d;
    let sigma2 = ebn0_to_sigma2(ebn0_db, c.m);
    let pilot = Constellation::pilot();
    let block_s = coherence_block_length(f_d)? as f64 * DEFAULT_SYMBOL_PERIOD_S;
    let bits_per_sym = c.bits_per_symbol();

    // Pilot at the head of each (1 + gap) segment.
    let pilot_pos: Vec<usize> = (0..n_p).map(|i| i * (gap + 1)).collect();

    let outs = run_trials(trials, stop, |trial| {
        let trial_seed = derive_seed(seed, trial as u64);
        let h = generate_fading(frame, f_d, block_s, trial_seed)?;
        let mut rng = SeededRng::new(derive_seed(trial_seed, 1));

        let bits = random_bits(&mut rng, n_d * bits_per_sym);
        let symbols = crate::modem::modulate(&bits, c)?;

        // Transmit the interleaved frame.
        let mut tx = vec![Complex64::new(0.0, 0.0); frame];
        for &p in &pilot_pos {
            tx[p] = pilot;
        }
        let mut di = 0usize;
        for slot in tx.iter_mut() {
            if slot.norm_sqr() == 0.0 {
                *slot = symbols[di];
                di += 1;
            }
        }
        let mut y = Vec::with_capacity(frame);
        for t in 0..frame {
            y.push(h.gains[t] * tx[t] + rng.complex_gaussian_var(sigma2));
        }

        // Pilot estimates, then interpolation across each gap.
        let p_est: Vec<Complex64> = pilot_pos
            .iter()
            .map(|&p| lmmse(y[p], pilot, sigma2))
            .collect::<Result<_>>()?;
        let mut coef = vec![Complex64::new(0.0, 0.0); frame];
        for (i, &p) in pilot_pos.iter().enumerate() {
            coef[p] = p_est[i];
        }
        for t in 0..frame {
            if pilot_pos.binary_search(&t).is_ok() {
                continue;
            }
            let seg = (t / (gap + 1)).min(n_p - 1);
            let is_tail = seg + 1 >= n_p;
            coef[t] = if !is_tail {
                let (p0, p1) = (pilot_pos[seg], pilot_pos[seg + 1]);
                let alpha = (t - p0) as f64 / (p1 - p0) as f64;
                p_est[seg] * (1.0 - alpha) + p_est[seg + 1] * alpha
            } else if n_p >= 2 {
                let (p0, p1) = (pilot_pos[n_p - 2], pilot_pos[n_p - 1]);
                let slope = (p_est[n_p - 1] - p_est[n_p - 2]) / (p1 - p0) as f64;
                p_est[n_p - 1] + slope * (t - p1) as f64
            } else {
                p_est[0]
            };
        }

        let mut errors = 0u64;
        let mut sq = 0.0;
        let mut di = 0usize;
        for t in 0..frame {
            if pilot_pos.binary_search(&t).is_ok() {
                continue;
            }
            let guess = if coef[t].norm_sqr() > 0.0 { coef[t] } else { p_est[n_p - 1] };
            let (idx, _) = ml_detect(y[t], guess, c)?;
            let got = demap(&[idx], c)?;
            errors += got
                .iter()
                .zip(&bits[di * bits_per_sym..(di + 1) * bits_per_sym])
                .filter(|(a, b)| a != b)
                .count() as u64;
            sq += (coef[t] - h.gains[t]).norm_sqr();
            di += 1;
        }
        Ok(TrialOut {
            bits: (n_d * bits_per_sym) as u64,
            errors,
            sq_err_sum: sq,
            coef_count: n_d as u64,
            conv_failures: 0,
            n_c: n_d,
        })
    })?;

    Ok(summarize(outs, efficiency(&FrameLayout { n_p, n_c: n_d, k: 1 })))
}
