//! Achieved-MSE lookup table over (horizon, Doppler, SNR) and the adaptive
//! horizon selection rule.

use crate::error::{Error, Result};
use crate::estimation::lmmse;
use crate::fading::{coherence_block_length, generate_fading, DEFAULT_SYMBOL_PERIOD_S};
use crate::math::{derive_seed, SeededRng};
use crate::modem::Constellation;
use crate::predictor::{predict, PredictorNet};
use rayon::prelude::*;

/// Grid of achieved prediction MSE, bound to one trained model.
#[derive(Debug, Clone, PartialEq)]
pub struct MseLookupTable {
    pub n_grid: Vec<usize>,
    pub d_grid: Vec<f64>,
    pub snr_grid: Vec<f64>,
    /// Row-major over [n][doppler][snr].
    pub mse: Vec<f64>,
    pub stderr: Vec<f64>,
    pub trials_per_cell: usize,
    pub fingerprint: u64,
}

impl MseLookupTable {
    fn idx(&self, ni: usize, di: usize, si: usize) -> usize {
        (ni * self.d_grid.len() + di) * self.snr_grid.len() + si
    }

    pub fn get(&self, ni: usize, di: usize, si: usize) -> f64 {
        self.mse[self.idx(ni, di, si)]
    }

    pub fn get_stderr(&self, ni: usize, di: usize, si: usize) -> f64 {
        self.stderr[self.idx(ni, di, si)]
    }

    /// Default grids: horizons 5..=100 step 5, Dopplers 5..=100 Hz step 5.
    pub fn default_n_grid() -> Vec<usize> {
        (1..=20).map(|k| k * 5).collect()
    }

    pub fn default_d_grid() -> Vec<f64> {
        (1..=20).map(|k| (k * 5) as f64).collect()
    }

    /// Serializes as CSV with provenance comments; `from_csv` restores it.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("# fingerprint={:016x}\n", self.fingerprint));
        out.push_str(&format!("# trials_per_cell={}\n", self.trials_per_cell));
        out.push_str("n,doppler_hz,snr_db,mse,stderr\n");
        for (ni, &n) in self.n_grid.iter().enumerate() {
            for (di, &d) in self.d_grid.iter().enumerate() {
                for (si, &s) in self.snr_grid.iter().enumerate() {
                    out.push_str(&format!(
                        "{n},{d},{s},{:.12e},{:.12e}\n",
                        self.get(ni, di, si),
                        self.get_stderr(ni, di, si)
                    ));
                }
            }
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut fingerprint = None;
        let mut trials = 0usize;
        let mut rows: Vec<(usize, f64, f64, f64, f64)> = Vec::new();
        let mut saw_header = false;
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let rest = rest.trim();
                if let Some(v) = rest.strip_prefix("fingerprint=") {
                    fingerprint = Some(
                        u64::from_str_radix(v.trim(), 16)
                            .map_err(|_| Error::Format("bad fingerprint comment".into()))?,
                    );
                } else if let Some(v) = rest.strip_prefix("trials_per_cell=") {
                    trials = v
                        .trim()
                        .parse()
                        .map_err(|_| Error::Format("bad trials comment".into()))?;
                }
                continue;
            }
            if !saw_header {
                if line != "n,doppler_hz,snr_db,mse,stderr" {
                    return Err(Error::Format(format!("unexpected lut header `{line}`")));
                }
                saw_header = true;
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 5 {
                return Err(Error::Format(format!("bad lut row `{line}`")));
            }
            let parse =
                |s: &str| -> Result<f64> { s.parse().map_err(|_| Error::Format(format!("bad number `{s}`"))) };
            rows.push((
                f[0].parse().map_err(|_| Error::Format(format!("bad n `{}`", f[0])))?,
                parse(f[1])?,
                parse(f[2])?,
                parse(f[3])?,
                parse(f[4])?,
            ));
        }
        let fingerprint =
            fingerprint.ok_or_else(|| Error::Format("lut missing fingerprint comment".into()))?;
        if rows.is_empty() {
            return Err(Error::Format("empty lookup table".into()));
        }
        let mut n_grid: Vec<usize> = rows.iter().map(|r| r.0).collect();
        n_grid.sort_unstable();
        n_grid.dedup();
        let mut d_grid: Vec<f64> = rows.iter().map(|r| r.1).collect();
        d_grid.sort_by(f64::total_cmp);
        d_grid.dedup();
        let mut snr_grid: Vec<f64> = rows.iter().map(|r| r.2).collect();
        snr_grid.sort_by(f64::total_cmp);
        snr_grid.dedup();
        let cells = n_grid.len() * d_grid.len() * snr_grid.len();
        if rows.len() != cells {
            return Err(Error::Format(format!(
                "lut is not a full grid: {} rows vs {} cells",
                rows.len(),
                cells
            )));
        }
        let mut lut = MseLookupTable {
            n_grid,
            d_grid,
            snr_grid,
            mse: vec![0.0; cells],
            stderr: vec![0.0; cells],
            trials_per_cell: trials,
            fingerprint,
        };
        for (n, d, s, m, e) in rows {
            let ni = lut.n_grid.iter().position(|&v| v == n).unwrap();
            let di = lut.d_grid.iter().position(|&v| v == d).unwrap();
            let si = lut.snr_grid.iter().position(|&v| v == s).unwrap();
            let idx = lut.idx(ni, di, si);
            lut.mse[idx] = m;
            lut.stderr[idx] = e;
        }
        Ok(lut)
    }
}

/// Builds the lookup table: for every (Doppler, SNR) cell, `trials`
/// independent pilot-estimate-predict runs; the per-horizon MSE is the
/// running mean over each horizon prefix of one full-length rollout, so a
/// single rollout populates every `n` in the grid.
pub fn build_lut(
    net: &PredictorNet,
    n_grid: &[usize],
    d_grid: &[f64],
    snr_grid: &[f64],
    trials: usize,
    seed: u64,
) -> Result<MseLookupTable> {
    if n_grid.is_empty() || d_grid.is_empty() || snr_grid.is_empty() {
        return Err(Error::Config("empty lookup grid".into()));
    }
    if trials == 0 {
        return Err(Error::Config("need at least one trial per cell".into()));
    }
    let mut n_sorted = n_grid.to_vec();
    n_sorted.sort_unstable();
    n_sorted.dedup();
    if n_sorted[0] == 0 {
        return Err(Error::Config("horizon 0 is not meaningful".into()));
    }
    let n_max = *n_sorted.last().unwrap();
    let window = net.window_n;
    let pilot = Constellation::pilot();

    let groups: Vec<(usize, usize)> = (0..d_grid.len())
        .flat_map(|di| (0..snr_grid.len()).map(move |si| (di, si)))
        .collect();

    let per_group: Vec<Result<Vec<(f64, f64)>>> = groups
        .par_iter()
        .map(|&(di, si)| {
            let d = d_grid[di];
            let snr_db = snr_grid[si];
            let sigma2 = 10f64.powf(-snr_db / 10.0);
            let block_s = coherence_block_length(d)? as f64 * DEFAULT_SYMBOL_PERIOD_S;
            let group_id = (di * snr_grid.len() + si) as u64;

            // Accumulate sum and sum of squares of the per-trial MSE at
            // each grid horizon.
            let mut acc = vec![(0.0f64, 0.0f64); n_sorted.len()];
            for t in 0..trials {
                let trial_seed = derive_seed(seed, (group_id << 32) | t as u64);
                let h = generate_fading(window + n_max, d, block_s, trial_seed)?;
                let mut noise = SeededRng::new(derive_seed(trial_seed, 1));
                let mut ests = Vec::with_capacity(window);
                for k in 0..window {
                    let y = h.gains[k] * pilot + noise.complex_gaussian_var(sigma2);
                    ests.push(lmmse(y, pilot, sigma2)?);
                }
                let preds = predict(net, &ests, n_max)?;
                // Prefix MSEs at each grid horizon.
                let mut cum = 0.0;
                let mut gi = 0;
                for (k, p) in preds.iter().enumerate() {
                    cum += (p - h.gains[window + k]).norm_sqr();
                    if gi < n_sorted.len() && k + 1 == n_sorted[gi] {
                        let m = cum / (k + 1) as f64;
                        acc[gi].0 += m;
                        acc[gi].1 += m * m;
                        gi += 1;
                    }
                }
            }
            Ok(acc
                .into_iter()
                .map(|(s1, s2)| {
                    let mean = s1 / trials as f64;
                    let var = (s2 / trials as f64 - mean * mean).max(0.0);
                    (mean, (var / trials as f64).sqrt())
                })
                .collect())
        })
        .collect();

    let cells = n_sorted.len() * d_grid.len() * snr_grid.len();
    let mut lut = MseLookupTable {
        n_grid: n_sorted.clone(),
        d_grid: d_grid.to_vec(),
        snr_grid: snr_grid.to_vec(),
        mse: vec![0.0; cells],
        stderr: vec![0.0; cells],
        trials_per_cell: trials,
        fingerprint: net.fingerprint(),
    };
    for (g, result) in groups.iter().zip(per_group) {
        let (di, si) = *g;
        let values = result?;
        for (ni, (m, e)) in values.into_iter().enumerate() {
            let idx = lut.idx(ni, di, si);
            lut.mse[idx] = m;
            lut.stderr[idx] = e;
        }
    }
    Ok(lut)
}

fn nearest_index(grid: &[f64], value: f64) -> usize {
    let mut best = 0;
    let mut best_dist = f64::INFINITY;
    for (i, &g) in grid.iter().enumerate() {
        let d = (g - value).abs();
        if d < best_dist {
            best_dist = d;
            best = i;
        }
    }
    best
}

/// Picks the largest grid horizon whose achieved MSE at the (nearest-grid)
/// operating point is below `target_mse`; falls back to the smallest grid
/// horizon when nothing qualifies.
pub fn select_n(
    lut: &MseLookupTable,
    snr_db: f64,
    f_d: f64,
    target_mse: f64,
) -> Result<usize> {
    if lut.n_grid.is_empty() {
        return Err(Error::Domain("empty lookup table".into()));
    }
    let di = nearest_index(&lut.d_grid, f_d);
    let si = nearest_index(&lut.snr_grid, snr_db);
    let mut chosen = None;
    for ni in 0..lut.n_grid.len() {
        if lut.get(ni, di, si) < target_mse {
            chosen = Some(lut.n_grid[ni]);
        }
    }
    Ok(chosen.unwrap_or(lut.n_grid[0]))
}

/// True when the sequence rises to a single coarse peak and then falls
/// (plateaus allowed on both flanks).
pub fn is_unimodal(values: &[usize]) -> bool {
    if values.len() < 2 {
        return true;
    }
    let peak = values.iter().copied().max().unwrap();
    let first_peak = values.iter().position(|&v| v == peak).unwrap();
    let last_peak = values.iter().rposition(|&v| v == peak).unwrap();
    values[..first_peak].windows(2).all(|w| w[0] <= w[1])
        && values[last_peak..].windows(2).all(|w| w[0] >= w[1])
        && values[first_peak..=last_peak].iter().all(|&v| v == peak)
}

/// Buckets `(x, value)` pairs into `bucket_width`-sized bins and returns
/// the per-bin maxima in ascending x order. Used for the coarse
/// bell-shape check of the selected horizon over an SNR sweep.
pub fn bucket_max(points: &[(f64, usize)], bucket_width: f64) -> Vec<usize> {
    if points.is_empty() {
        return Vec::new();
    }
    let x0 = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let mut bins: Vec<(i64, usize)> = Vec::new();
    for &(x, v) in points {
        let b = ((x - x0) / bucket_width).floor() as i64;
        match bins.iter_mut().find(|(bb, _)| *bb == b) {
            Some((_, m)) => *m = (*m).max(v),
            None => bins.push((b, v)),
        }
    }
    bins.sort_by_key(|&(b, _)| b);
    bins.into_iter().map(|(_, m)| m).collect()
}
