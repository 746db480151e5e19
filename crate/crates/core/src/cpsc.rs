//! Cyclic-prefix single-carrier block transmission over a doubly-selective
//! channel: frame construction, time-varying multipath application, exact
//! (tail-biting) Viterbi sequence detection, and the per-tap
//! predict-and-detect receiver.

use crate::error::{Error, Result};
use crate::estimation::estimate_multipath;
use crate::fading::{
    coherence_block_length, generate_fading, ComplexSample, FadingProcess,
    DEFAULT_SYMBOL_PERIOD_S,
};
use crate::math::{derive_seed, SeededRng};
use crate::modem::{demap, Constellation};
use crate::predictor::{predict, PredictorNet};
use crate::receiver::{random_bits, run_trials, summarize, CsiMode, McStop, ReceiverReport, TrialOut};
use num_complex::Complex64;

/// One CPSC frame: `n_p` guarded pilot sequences, data payload, and a
/// cyclic prefix copying the body tail.
#[derive(Debug, Clone, PartialEq)]
pub struct CpscFrame {
    /// Body length (frame length excluding the cyclic prefix).
    pub n: usize,
    pub l_taps: usize,
    pub n_p: usize,
    /// The n body symbols: pilot sequences first, then data.
    pub body: Vec<ComplexSample>,
    /// Cyclic prefix followed by the body (length n + l_taps - 1).
    pub transmitted: Vec<ComplexSample>,
    /// Body indices carrying data symbols.
    pub data_positions: Vec<usize>,
    /// Body index of the first sample of each pilot sequence.
    pub pilot_starts: Vec<usize>,
}

/// Data symbols a frame of this geometry can carry: n - n_p (2l - 1).
pub fn cpsc_capacity(n: usize, l: usize, n_p: usize) -> Result<usize> {
    if l == 0 {
        return Err(Error::Domain("need at least one tap".into()));
    }
    let overhead = n_p * (2 * l - 1);
    if overhead >= n {
        return Err(Error::Domain(format!(
            "pilot overhead {overhead} leaves no room in frame of {n}"
        )));
    }
    Ok(n - overhead)
}

/// Assembles a frame: each pilot sequence is the pilot symbol padded by
/// l-1 zeros on both sides; data follows; the cyclic prefix copies the
/// last l-1 body symbols.
pub fn build_frame(
    n: usize,
    l: usize,
    n_p: usize,
    data_symbols: &[ComplexSample],
) -> Result<CpscFrame> {
    let capacity = cpsc_capacity(n, l, n_p)?;
    if data_symbols.len() != capacity {
        return Err(Error::Domain(format!(
            "frame takes exactly {capacity} data symbols, got {}",
            data_symbols.len()
        )));
    }
    let pilot = Constellation::pilot();
    let seq_len = 2 * l - 1;
    let mut body = Vec::with_capacity(n);
    let mut pilot_starts = Vec::with_capacity(n_p);
    for i in 0..n_p {
        pilot_starts.push(i * seq_len);
        for _ in 0..l - 1 {
            body.push(Complex64::new(0.0, 0.0));
        }
        body.push(pilot);
        for _ in 0..l - 1 {
            body.push(Complex64::new(0.0, 0.0));
        }
    }
    let data_start = body.len();
    body.extend_from_slice(data_symbols);
    let data_positions: Vec<usize> = (data_start..n).collect();

    let mut transmitted = Vec::with_capacity(n + l - 1);
    transmitted.extend_from_slice(&body[n - (l - 1)..]);
    transmitted.extend_from_slice(&body);

    Ok(CpscFrame { n, l_taps: l, n_p, body, transmitted, data_positions, pilot_starts })
}

/// Passes the transmitted stream through an L-tap time-varying channel:
/// y(t) = sum_l h_l(t) x(t - l) + n(t). Tap processes are indexed per
/// transmitted sample and must cover the stream.
pub fn apply_doubly_selective(
    transmitted: &[ComplexSample],
    taps: &[FadingProcess],
    sigma2: f64,
    seed: u64,
) -> Result<Vec<ComplexSample>> {
    if taps.is_empty() {
        return Err(Error::Domain("need at least one tap".into()));
    }
    for tap in taps {
        if tap.gains.len() < transmitted.len() {
            return Err(Error::Domain(format!(
                "tap process {} shorter than stream {}",
                tap.gains.len(),
                transmitted.len()
            )));
        }
    }
    if sigma2 < 0.0 {
        return Err(Error::Domain("negative noise variance".into()));
    }
    let mut rng = SeededRng::new(seed);
    let mut y = Vec::with_capacity(transmitted.len());
    for t in 0..transmitted.len() {
        let mut acc = Complex64::new(0.0, 0.0);
        for (l, tap) in taps.iter().enumerate() {
            if t >= l {
                acc += tap.gains[t] * transmitted[t - l];
            }
        }
        if sigma2 > 0.0 {
            acc += rng.complex_gaussian_var(sigma2);
        }
        y.push(acc);
    }
    Ok(y)
}

/// Branch likelihood interface for the sequence detector. `symbols[0]` is
/// the symbol at time t, `symbols[j]` the symbol at time t-j. A neural
/// likelihood module can implement this in place of the Euclidean metric.
pub trait LikelihoodModel: Sync {
    fn branch_cost(&self, t: usize, y: ComplexSample, symbols: &[ComplexSample]) -> f64;
}

/// Conventional metric on predicted (or perfect) CSI:
/// |y(t) - sum_l h_l(t) x(t-l)|^2.
pub struct EuclideanCsiMetric<'a> {
    /// Per body time index, the L tap coefficients.
    pub taps_per_time: &'a [Vec<ComplexSample>],
}

impl LikelihoodModel for EuclideanCsiMetric<'_> {
    fn branch_cost(&self, t: usize, y: ComplexSample, symbols: &[ComplexSample]) -> f64 {
        let taps = &self.taps_per_time[t];
        let mut acc = Complex64::new(0.0, 0.0);
        for (l, h) in taps.iter().enumerate() {
            acc += h * symbols[l];
        }
        (y - acc).norm_sqr()
    }
}

/// Per-position symbol hypothesis set.
#[derive(Debug, Clone)]
pub enum SymbolSlot {
    /// A known transmitted value (pilot or guard zero).
    Known(ComplexSample),
    /// Unknown data symbol drawn from the constellation.
    Data,
}

fn slot_candidates<'a>(
    slot: &SymbolSlot,
    points: &'a [ComplexSample],
) -> (Vec<ComplexSample>, Option<&'a [ComplexSample]>) {
    match slot {
        SymbolSlot::Known(v) => (vec![*v], None),
        SymbolSlot::Data => (points.to_vec(), Some(points)),
    }
}

/// Exact ML sequence detection over the circular (cyclic-prefix) model via
/// tail-biting Viterbi: the trellis is run once per boundary hypothesis
/// (the last l-1 symbol choices) and the consistent path with the minimum
/// total metric wins. Ties resolve to the lowest candidate indices.
///
/// Returns the chosen candidate index per body position (an index into
/// `c.points` for data slots, 0 for known slots).
pub fn viterbi_detect_slots(
    y_body: &[ComplexSample],
    slots: &[SymbolSlot],
    l: usize,
    c: &Constellation,
    metric: &impl LikelihoodModel,
) -> Result<Vec<usize>> {
    let n = y_body.len();
    if n == 0 || slots.len() != n {
        return Err(Error::Domain("body/slot length mismatch".into()));
    }
    if l == 0 || l > n {
        return Err(Error::Domain(format!("tap count {l} invalid for body {n}")));
    }
    let cands: Vec<Vec<ComplexSample>> =
        slots.iter().map(|s| slot_candidates(s, &c.points).0).collect();
    let mem = l - 1;

    if mem == 0 {
        // Memoryless channel: per-symbol minimization.
        let mut out = Vec::with_capacity(n);
        for t in 0..n {
            let mut best = 0;
            let mut best_cost = f64::INFINITY;
            for (i, &s) in cands[t].iter().enumerate() {
                let cost = metric.branch_cost(t, y_body[t], &[s]);
                if cost < best_cost {
                    best_cost = cost;
                    best = i;
                }
            }
            out.push(best);
        }
        return Ok(out);
    }

    // Boundary hypothesis: choices at the last `mem` positions (these are
    // the "previous symbols" wrapped into time 0 by the cyclic prefix).
    let boundary_positions: Vec<usize> = (n - mem..n).collect();
    let boundary_space: usize = boundary_positions.iter().map(|&p| cands[p].len()).product();

    let mut global_best: Option<(f64, Vec<usize>)> = None;

    for b in 0..boundary_space {
        // Decode the boundary combo into per-position candidate indices.
        let mut rem = b;
        let mut boundary = Vec::with_capacity(mem);
        for &p in &boundary_positions {
            boundary.push(rem % cands[p].len());
            rem /= cands[p].len();
        }

        // State: indices of the previous `mem` symbols (most recent first),
        // encoded mixed-radix against the candidate counts of those
        // positions (which vary along the frame).
        // dp[state] = (cost, backpointer chain)
        // Position of "previous j-th" symbol at time t is (t-1-j) mod n.
        let prev_pos = |t: usize, j: usize| (t + n - 1 - j) % n;

        let state_space = |t: usize| -> usize {
            (0..mem).map(|j| cands[prev_pos(t, j)].len()).product()
        };
        let decode_state = |t: usize, mut s: usize| -> Vec<usize> {
            (0..mem)
                .map(|j| {
                    let m = cands[prev_pos(t, j)].len();
                    let v = s % m;
                    s /= m;
                    v
                })
                .collect()
        };

        // Initial state at t = 0 is exactly the boundary combo (previous
        // symbols are the frame tail), so there is a single start state.
        let init_state: usize = {
            let mut s = 0;
            let mut mult = 1;
            for j in 0..mem {
                let p = prev_pos(0, j);
                let bi = boundary_positions.iter().position(|&q| q == p).unwrap();
                s += boundary[bi] * mult;
                mult *= cands[p].len();
            }
            s
        };

        let mut cost = vec![f64::INFINITY; state_space(0)];
        cost[init_state] = 0.0;
        let mut back: Vec<Vec<usize>> = Vec::with_capacity(n);

        for t in 0..n {
            let next_space = state_space((t + 1) % n);
            let mut next_cost = vec![f64::INFINITY; next_space];
            let mut bp = vec![usize::MAX; next_space];
            for (s, &sc) in cost.iter().enumerate() {
                if !sc.is_finite() {
                    continue;
                }
                let prev_syms = decode_state(t, s);
                // Candidate choices at t; boundary positions are pinned.
                let choices: Vec<usize> =
                    if let Some(bi) = boundary_positions.iter().position(|&q| q == t) {
                        vec![boundary[bi]]
                    } else {
                        (0..cands[t].len()).collect()
                    };
                for &ci in &choices {
                    let mut window = Vec::with_capacity(l);
                    window.push(cands[t][ci]);
                    for (j, &pi) in prev_syms.iter().enumerate() {
                        window.push(cands[prev_pos(t, j)][pi]);
                    }
                    let branch = metric.branch_cost(t, y_body[t], &window);
                    let total = sc + branch;
                    // Next state: (x_t, x_{t-1}, ..., x_{t-mem+1}).
                    let mut ns = ci;
                    let mut mult = cands[t].len();
                    for j in 0..mem - 1 {
                        ns += prev_syms[j] * mult;
                        mult *= cands[prev_pos(t, j)].len();
                    }
                    if total < next_cost[ns] {
                        next_cost[ns] = total;
                        bp[ns] = s * cands[t].len() + ci;
                    }
                }
            }
            back.push(bp);
            cost = next_cost;
        }

        // After n steps the state again encodes the boundary choices; the
        // consistent end state equals the start state.
        let end_state = init_state;
        if !cost[end_state].is_finite() {
            continue;
        }
        let total = cost[end_state];
        let better = match &global_best {
            None => true,
            Some((best, _)) => total < *best,
        };
        if better {
            // Trace back the choices.
            let mut choices = vec![0usize; n];
            let mut s = end_state;
            for t in (0..n).rev() {
                let packed = back[t][s];
                s = packed / cands[t].len();
                choices[t] = packed % cands[t].len();
            }
            global_best = Some((total, choices));
        }
    }

    global_best
        .map(|(_, c)| c)
        .ok_or_else(|| Error::Domain("no consistent trellis path".into()))
}

/// ML sequence detection of an all-data body with per-time CSI, the
/// operation used by the oracle tests.
pub fn viterbi_detect(
    y_body: &[ComplexSample],
    taps_per_time: &[Vec<ComplexSample>],
    c: &Constellation,
) -> Result<Vec<usize>> {
    if taps_per_time.len() != y_body.len() {
        return Err(Error::Domain("need tap coefficients for every time index".into()));
    }
    let l = taps_per_time.first().map(Vec::len).unwrap_or(0);
    if l == 0 || taps_per_time.iter().any(|t| t.len() != l) {
        return Err(Error::Domain("inconsistent tap count across time".into()));
    }
    let slots = vec![SymbolSlot::Data; y_body.len()];
    let metric = EuclideanCsiMetric { taps_per_time };
    viterbi_detect_slots(y_body, &slots, l, c, &metric)
}

/// CPSC receiver: per-tap LMMSE estimation from the guarded pilot
/// sequences, per-tap channel prediction across the payload's coherence
/// blocks, and tail-biting Viterbi detection of the data.
#[allow(clippy::too_many_arguments)]
pub fn run_cpsc(
    net: &PredictorNet,
    c: &Constellation,
    f_d: f64,
    snr_db: f64,
    n_p: usize,
    trials: usize,
    seed: u64,
) -> Result<ReceiverReport> {
    run_cpsc_with(net, c, f_d, snr_db, 128, 2, n_p, trials, seed, CsiMode::Predicted, McStop::default())
}

#[allow(clippy::too_many_arguments)]
pub fn run_cpsc_with(
    net: &PredictorNet,
    c: &Constellation,
    f_d: f64,
    snr_db: f64,
    n: usize,
    l: usize,
    n_p: usize,
    trials: usize,
    seed: u64,
    csi: CsiMode,
    stop: McStop,
) -> Result<ReceiverReport> {
    if n_p == 0 {
        return Err(Error::Domain("receiver needs at least one pilot sequence".into()));
    }
    let n_c = cpsc_capacity(n, l, n_p)?;
    let sigma2 = 10f64.powf(-snr_db / 10.0);
    let block = coherence_block_length(f_d)?;
    let block_s = block as f64 * DEFAULT_SYMBOL_PERIOD_S;
    let stream_len = n + l - 1;
    let n_blocks = stream_len.div_ceil(block);
    let bits_per_sym = c.bits_per_symbol();
    let pilot = Constellation::pilot();
    let window = net.window_n;
    let tap_power = 1.0 / l as f64;

    let outs = run_trials(trials, stop, |trial| {
        let trial_seed = derive_seed(seed, trial as u64);
        let mut rng = SeededRng::new(derive_seed(trial_seed, 1));

        // Equal-power taps, constant within each coherence block.
        let mut taps = Vec::with_capacity(l);
        for tap_idx in 0..l {
            let blocks =
                generate_fading(n_blocks, f_d, block_s, derive_seed(trial_seed, 2 + tap_idx as u64))?;
            let gains: Vec<Complex64> = (0..stream_len)
                .map(|t| blocks.gains[t / block] * tap_power.sqrt())
                .collect();
            taps.push(FadingProcess {
                gains,
                doppler_hz: f_d,
                sample_period_s: DEFAULT_SYMBOL_PERIOD_S,
                seed: trial_seed,
            })
        }

        let bits = random_bits(&mut rng, n_c * bits_per_sym);
        let data = crate::modem::modulate(&bits, c)?;
        let frame = build_frame(n, l, n_p, &data)?;
        let received =
            apply_doubly_selective(&frame.transmitted, &taps, sigma2, derive_seed(trial_seed, 99))?;
        let y_body = &received[l - 1..];

        // Body-time tap coefficients (truth, for MSE and perfect CSI).
        let truth_taps: Vec<Vec<Complex64>> = (0..n)
            .map(|t| taps.iter().map(|tap| tap.gains[t + l - 1]).collect())
            .collect();

        let used_taps: Vec<Vec<Complex64>> = match csi {
            CsiMode::Perfect => truth_taps.clone(),
            CsiMode::Predicted => {
                let per_tap =
                    estimate_multipath(y_body, &frame.pilot_starts, pilot, l, sigma2)?;
                // Body block index of each pilot estimate and of each body
                // symbol; block b of the body starts at stream index l-1.
                let body_block = |t: usize| (t + l - 1) / block;
                let payload_blocks = body_block(n - 1) + 1;
                let mut per_tap_block: Vec<Vec<Complex64>> = Vec::with_capacity(l);
                for estimates in &per_tap {
                    // Mean estimate per observed block.
                    let mut sums: Vec<(Complex64, usize)> =
                        vec![(Complex64::new(0.0, 0.0), 0); payload_blocks];
                    for e in estimates {
                        let b = body_block(e.time_index);
                        sums[b].0 += e.value;
                        sums[b].1 += 1;
                    }
                    let observed: Vec<(usize, Complex64)> = sums
                        .iter()
                        .enumerate()
                        .filter(|(_, (_, n))| *n > 0)
                        .map(|(b, (s, n))| (b, s / *n as f64))
                        .collect();
                    let last_observed = observed.last().expect("n_p >= 1").0;

                    // Predictor window: the raw estimates, left-padded by
                    // repeating the earliest one.
                    let raw: Vec<Complex64> = estimates.iter().map(|e| e.value).collect();
                    let mut win = vec![raw[0]; window.saturating_sub(raw.len())];
                    win.extend(raw.iter().copied().take(window));
                    let remaining = payload_blocks - 1 - last_observed;
                    let preds = if remaining > 0 {
                        predict(net, &win, remaining)?
                    } else {
                        Vec::new()
                    };

                    let mut per_block = vec![Complex64::new(0.0, 0.0); payload_blocks];
                    for &(b, v) in &observed {
                        per_block[b] = v;
                    }
                    // Blocks between observations inherit the nearest
                    // earlier observation; blocks beyond the last take the
                    // predictions.
                    let mut last = observed[0].1;
                    for (b, slot) in per_block.iter_mut().enumerate().take(last_observed + 1) {
                        if slot.norm_sqr() == 0.0 && observed.iter().all(|&(ob, _)| ob != b) {
                            *slot = last;
                        } else {
                            last = *slot;
                        }
                    }
                    for (j, p) in preds.iter().enumerate() {
                        per_block[last_observed + 1 + j] = *p;
                    }
                    per_tap_block.push(per_block);
                }
                (0..n)
                    .map(|t| {
                        let b = body_block(t);
                        per_tap_block.iter().map(|pb| pb[b]).collect()
                    })
                    .collect()
            }
        };

        // Detection: pilots and guards are known symbols.
        let mut slots: Vec<SymbolSlot> = frame.body.iter().map(|&v| SymbolSlot::Known(v)).collect();
        for &p in &frame.data_positions {
            slots[p] = SymbolSlot::Data;
        }
        let metric = EuclideanCsiMetric { taps_per_time: &used_taps };
        let choices = viterbi_detect_slots(y_body, &slots, l, c, &metric)?;

        let mut errors = 0u64;
        for (di, &pos) in frame.data_positions.iter().enumerate() {
            let got = demap(&[choices[pos]], c)?;
            errors += got
                .iter()
                .zip(&bits[di * bits_per_sym..(di + 1) * bits_per_sym])
                .filter(|(a, b)| a != b)
                .count() as u64;
        }
        // Coefficient MSE over data positions, averaged across taps.
        let mut sq = 0.0;
        for &pos in &frame.data_positions {
            for tap in 0..l {
                sq += (used_taps[pos][tap] - truth_taps[pos][tap]).norm_sqr();
            }
        }
        Ok(TrialOut {
            bits: (n_c * bits_per_sym) as u64,
            errors,
            sq_err_sum: sq,
            coef_count: (frame.data_positions.len() * l) as u64,
            conv_failures: 0,
            n_c,
        })
    })?;

    Ok(summarize(
        outs,
        n_c as f64 / n as f64,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modem::{gray_qam, ml_detect};
    use crate::nn::Network;
    use rustfft::FftPlanner;

    #[test]
    fn capacity_formula() {
        assert_eq!(cpsc_capacity(128, 2, 2).unwrap(), 122);
        assert_eq!(cpsc_capacity(128, 2, 4).unwrap(), 116);
        assert_eq!(cpsc_capacity(16, 1, 0).unwrap(), 16);
        assert!(cpsc_capacity(8, 2, 3).is_err());
    }

    #[test]
    fn frame_layout_and_cp() {
        let c = gray_qam(4).unwrap();
        let data: Vec<Complex64> = (0..122).map(|i| c.points[i % 4]).collect();
        let f = build_frame(128, 2, 2, &data).unwrap();
        assert_eq!(f.body.len(), 128);
        assert_eq!(f.transmitted.len(), 129);
        // CP copies the body tail.
        assert_eq!(f.transmitted[0], f.body[127]);
        assert_eq!(&f.transmitted[1..], &f.body[..]);
        // Pilot sequences: [0, p, 0] twice.
        let p = Constellation::pilot();
        assert_eq!(f.body[0], Complex64::new(0.0, 0.0));
        assert_eq!(f.body[1], p);
        assert_eq!(f.body[2], Complex64::new(0.0, 0.0));
        assert_eq!(f.body[4], p);
        assert_eq!(f.pilot_starts, vec![0, 3]);
        assert_eq!(f.data_positions.len(), 122);

        // Pure data frame, single tap: no CP, no pilots.
        let data: Vec<Complex64> = (0..16).map(|i| c.points[i % 4]).collect();
        let f = build_frame(16, 1, 0, &data).unwrap();
        assert_eq!(f.transmitted.len(), 16);
        assert_eq!(f.body, data);
    }

    fn static_tap(value: Complex64, len: usize) -> FadingProcess {
        FadingProcess {
            gains: vec![value; len],
            doppler_hz: 0.0,
            sample_period_s: 1.0,
            seed: 0,
        }
    }

    #[test]
    fn single_tap_reduces_to_flat_channel() {
        let c = gray_qam(4).unwrap();
        let data: Vec<Complex64> = (0..8).map(|i| c.points[i % 4]).collect();
        let f = build_frame(8, 1, 0, &data).unwrap();
        let h = Complex64::new(0.6, -0.4);
        let taps = vec![static_tap(h, 8)];
        let y = apply_doubly_selective(&f.transmitted, &taps, 0.0, 3).unwrap();
        for t in 0..8 {
            assert!((y[t] - h * data[t]).norm() < 1e-14);
        }
    }

    #[test]
    fn circular_model_matches_fft_equalization() {
        // Time-invariant 2-tap channel, noiseless: after CP removal the
        // body is the circular convolution of body and taps, so one-tap
        // frequency-domain equalization recovers the symbols exactly.
        let c = gray_qam(4).unwrap();
        let n = 16;
        let data: Vec<Complex64> = (0..13).map(|i| c.points[(i * 3) % 4]).collect();
        let f = build_frame(n, 2, 1, &data).unwrap();
        let h = [Complex64::new(0.8, 0.1), Complex64::new(-0.3, 0.25)];
        let taps = vec![static_tap(h[0], 17), static_tap(h[1], 17)];
        let y = apply_doubly_selective(&f.transmitted, &taps, 0.0, 1).unwrap();
        let mut y_body: Vec<Complex64> = y[1..].to_vec();

        let mut h_fd = vec![Complex64::new(0.0, 0.0); n];
        h_fd[0] = h[0];
        h_fd[1] = h[1];
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(n);
        fft.process(&mut y_body);
        fft.process(&mut h_fd);
        for k in 0..n {
            y_body[k] /= h_fd[k];
        }
        let ifft = planner.plan_fft_inverse(n);
        ifft.process(&mut y_body);
        for (t, v) in y_body.iter().enumerate() {
            let rec = v / n as f64;
            assert!((rec - f.body[t]).norm() < 1e-10, "t={t}: {rec} vs {}", f.body[t]);
        }
    }

    #[test]
    fn noise_variance_in_doubly_selective() {
        let n = 1 << 14;
        let tx = vec![Complex64::new(1.0, 0.0); n];
        let taps = vec![static_tap(Complex64::new(1.0, 0.0), n)];
        let y = apply_doubly_selective(&tx, &taps, 0.25, 5).unwrap();
        let var: f64 =
            y.iter().map(|v| (v - Complex64::new(1.0, 0.0)).norm_sqr()).sum::<f64>() / n as f64;
        assert!((var - 0.25).abs() < 0.02, "variance {var}");
    }

    #[test]
    fn viterbi_single_tap_equals_symbolwise_ml() {
        let c = gray_qam(4).unwrap();
        let mut rng = SeededRng::new(12);
        let n = 24;
        let taps: Vec<Vec<Complex64>> = (0..n).map(|_| vec![rng.complex_gaussian()]).collect();
        let y: Vec<Complex64> = (0..n).map(|_| rng.complex_gaussian()).collect();
        let seq = viterbi_detect(&y, &taps, &c).unwrap();
        for t in 0..n {
            let (want, _) = ml_detect(y[t], taps[t][0], &c).unwrap();
            assert_eq!(seq[t], want);
        }
    }

    // Exhaustive ML over all data sequences of the circular model.
    fn brute_force_ml(
        y: &[Complex64],
        taps: &[Vec<Complex64>],
        c: &Constellation,
    ) -> Vec<usize> {
        let n = y.len();
        let l = taps[0].len();
        let m = c.m;
        let total = m.pow(n as u32);
        let mut best = (f64::INFINITY, vec![0usize; n]);
        for combo in 0..total {
            let mut rem = combo;
            let idx: Vec<usize> = (0..n)
                .map(|_| {
                    let v = rem % m;
                    rem /= m;
                    v
                })
                .collect();
            let mut cost = 0.0;
            for t in 0..n {
                let mut acc = Complex64::new(0.0, 0.0);
                for j in 0..l {
                    acc += taps[t][j] * c.points[idx[(t + n - j) % n]];
                }
                cost += (y[t] - acc).norm_sqr();
            }
            if cost < best.0 {
                best = (cost, idx);
            }
        }
        best.1
    }

    #[test]
    fn viterbi_matches_exhaustive_search() {
        let c = gray_qam(4).unwrap();
        for seed in 0..12u64 {
            let mut rng = SeededRng::new(seed);
            let n = 6;
            let taps: Vec<Vec<Complex64>> = (0..n)
                .map(|_| vec![rng.complex_gaussian(), rng.complex_gaussian() * 0.6])
                .collect();
            // Random transmitted data + noise.
            let data: Vec<usize> = (0..n).map(|_| rng.gen_range_usize(4)).collect();
            let y: Vec<Complex64> = (0..n)
                .map(|t| {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for j in 0..2 {
                        acc += taps[t][j] * c.points[data[(t + n - j) % n]];
                    }
                    acc + rng.complex_gaussian_var(0.1)
                })
                .collect();
            let fast = viterbi_detect(&y, &taps, &c).unwrap();
            let brute = brute_force_ml(&y, &taps, &c);
            assert_eq!(fast, brute, "seed {seed}");
        }
    }

    #[test]
    fn viterbi_respects_known_slots() {
        let c = gray_qam(4).unwrap();
        let mut rng = SeededRng::new(77);
        let n = 8;
        let taps: Vec<Vec<Complex64>> = (0..n)
            .map(|_| vec![rng.complex_gaussian(), rng.complex_gaussian() * 0.5])
            .collect();
        let pilot = Constellation::pilot();
        let mut slots = vec![SymbolSlot::Data; n];
        slots[0] = SymbolSlot::Known(Complex64::new(0.0, 0.0));
        slots[1] = SymbolSlot::Known(pilot);
        slots[2] = SymbolSlot::Known(Complex64::new(0.0, 0.0));
        let y: Vec<Complex64> = (0..n).map(|_| rng.complex_gaussian()).collect();
        let metric = EuclideanCsiMetric { taps_per_time: &taps };
        let choices = viterbi_detect_slots(&y, &slots, 2, &c, &metric).unwrap();
        assert_eq!(choices.len(), n);
        // Known slots always pick their singleton candidate.
        assert_eq!(choices[0], 0);
        assert_eq!(choices[1], 0);
        assert_eq!(choices[2], 0);
    }

    #[test]
    fn run_cpsc_perfect_csi_high_snr_is_clean() {
        let mut rng = SeededRng::new(4);
        let net = PredictorNet {
            real_net: Network::init(1, 6, 1, &mut rng),
            imag_net: Network::init(1, 6, 1, &mut rng),
            window_n: 10,
            trained_doppler_hz: 10.0,
        };
        let c = gray_qam(4).unwrap();
        let report = run_cpsc_with(
            &net, &c, 50.0, 30.0, 32, 2, 2, 20, 9, CsiMode::Perfect, McStop { min_bit_errors: u64::MAX },
        )
        .unwrap();
        assert_eq!(report.trials_run, 20);
        assert!(report.ber < 1e-2, "perfect-CSI BER {}", report.ber);
        assert_eq!(report.prediction_mse, 0.0);
    }
}
