//! The deep channel predictor: paired real/imaginary LSTM + dense networks,
//! the coherence-grid dataset builder, the inference feedback loop, and the
//! training methodology (teacher forcing, reduce-LR-on-plateau, early stop).

use crate::error::{Error, Result};
use crate::estimation::mse_real;
use crate::fading::{
    coherence_block_length, generate_fading, ComplexSample, DEFAULT_SYMBOL_PERIOD_S,
};
use crate::math::{derive_seed, fnv1a64, SeededRng};
use crate::nn::{adam_step, bptt, AdamState, NetGrads, Network};
use num_complex::Complex64;
use rayon::prelude::*;

/// Paired real/imaginary prediction networks with shared architecture.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictorNet {
    pub real_net: Network,
    pub imag_net: Network,
    pub window_n: usize,
    pub trained_doppler_hz: f64,
}

impl PredictorNet {
    /// Stable 64-bit fingerprint of dimensions and all parameters; lookup
    /// tables are bound to this value.
    pub fn fingerprint(&self) -> u64 {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&(self.window_n as u64).to_le_bytes());
        bytes.extend_from_slice(&(self.real_net.lstm.hidden_size as u64).to_le_bytes());
        bytes.extend_from_slice(&(self.real_net.lstm.num_layers() as u64).to_le_bytes());
        for net in [&self.real_net, &self.imag_net] {
            for p in net.flatten() {
                bytes.extend_from_slice(&p.to_le_bytes());
            }
        }
        fnv1a64(&bytes)
    }
}

/// Runs the inference feedback loop: the `window_n` estimates are consumed
/// chronologically, then each prediction is fed back as the next input
/// until `n_preds` predictions are collected. Real and imaginary parts run
/// through their own networks.
pub fn predict(
    net: &PredictorNet,
    estimates: &[ComplexSample],
    n_preds: usize,
) -> Result<Vec<ComplexSample>> {
    if estimates.len() != net.window_n {
        return Err(Error::Domain(format!(
            "predictor expects a window of {} estimates, got {}",
            net.window_n,
            estimates.len()
        )));
    }
    if n_preds == 0 {
        return Err(Error::Domain("n_preds must be at least 1".into()));
    }
    let re_window: Vec<f64> = estimates.iter().map(|e| e.re).collect();
    let im_window: Vec<f64> = estimates.iter().map(|e| e.im).collect();
    let re = net.real_net.rollout(&re_window, n_preds)?;
    let im = net.imag_net.rollout(&im_window, n_preds)?;
    Ok(re
        .into_iter()
        .zip(im)
        .map(|(r, i)| Complex64::new(r, i))
        .collect())
}

/// Training/validation corpus: real and imaginary coefficient sequences on
/// the coherence-block grid, each `window + horizon` long, chronological.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub real_seqs: Vec<Vec<f64>>,
    pub imag_seqs: Vec<Vec<f64>>,
    pub window: usize,
    pub horizon: usize,
    pub doppler_hz: f64,
    /// Time between consecutive dataset samples (one coherence block).
    pub block_period_s: f64,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.real_seqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.real_seqs.is_empty()
    }
}

/// Builds `count` sequences of length 110 (10-entry window + 100-entry
/// target) sampled at one coefficient per coherence block, chopped from a
/// single long fading realization.
pub fn make_dataset(f_d: f64, count: usize, seed: u64) -> Result<Dataset> {
    make_dataset_with(f_d, count, seed, DEFAULT_SYMBOL_PERIOD_S, 10, 100)
}

pub fn make_dataset_with(
    f_d: f64,
    count: usize,
    seed: u64,
    symbol_period_s: f64,
    window: usize,
    horizon: usize,
) -> Result<Dataset> {
    if count == 0 {
        return Err(Error::Domain("dataset needs at least one sequence".into()));
    }
    let block_period_s = coherence_block_length(f_d)? as f64 * symbol_period_s;
    let seq_len = window + horizon;
    let process = generate_fading(count * seq_len, f_d, block_period_s, seed)?;
    let mut real_seqs = Vec::with_capacity(count);
    let mut imag_seqs = Vec::with_capacity(count);
    for chunk in process.gains.chunks_exact(seq_len) {
        real_seqs.push(chunk.iter().map(|g| g.re).collect());
        imag_seqs.push(chunk.iter().map(|g| g.im).collect());
    }
    Ok(Dataset { real_seqs, imag_seqs, window, horizon, doppler_hz: f_d, block_period_s })
}

/// Granularity of the teacher-forcing draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TeacherForceUnit {
    /// Independent draw at every feedback step.
    Step,
    /// One draw per sequence: the whole rollout is either teacher-forced
    /// or free-running.
    Sequence,
}

/// Training hyperparameters. `paper()` carries the published values;
/// `desk()` is the scaled-down preset for interactive runs.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingConfig {
    pub start_lr: f64,
    pub min_lr: f64,
    pub min_epochs: usize,
    pub max_epochs: usize,
    /// Sequences visited per epoch, processed in `batch_size` minibatches.
    pub batches_per_epoch: usize,
    pub batch_size: usize,
    pub teacher_force_p: f64,
    pub teacher_force_unit: TeacherForceUnit,
    pub plateau_patience: usize,
    pub plateau_factor: f64,
    pub early_stop_patience: usize,
    /// Relative training-loss improvement below which an epoch does not
    /// count as significant for early stopping.
    pub early_stop_min_rel_improvement: f64,
    /// During the LR-decrease phase, a training-loss jump above
    /// `previous * (1 + margin)` resets the learning rate to `start_lr`.
    pub lr_reset_margin: f64,
    pub horizon: usize,
    pub window: usize,
    pub hidden: usize,
    pub num_layers: usize,
    pub val_fraction: f64,
    pub seed: u64,
    pub enable_teacher_forcing: bool,
    pub enable_lr_schedule: bool,
    pub enable_early_stop: bool,
    /// Optional complex noise variance added to training input windows.
    pub noise_augment_sigma2: Option<f64>,
}

impl TrainingConfig {
    /// Published hyperparameters (long-running mode).
    pub fn paper(seed: u64) -> Self {
        Self {
            start_lr: 0.01,
            min_lr: 1e-8,
            min_epochs: 200,
            max_epochs: 1000,
            batches_per_epoch: 4500,
            batch_size: 32,
            teacher_force_p: 0.2,
            teacher_force_unit: TeacherForceUnit::Sequence,
            plateau_patience: 10,
            plateau_factor: 10.0,
            early_stop_patience: 50,
            early_stop_min_rel_improvement: 1e-3,
            lr_reset_margin: 0.5,
            horizon: 100,
            window: 10,
            hidden: 100,
            num_layers: 1,
            val_fraction: 0.1,
            seed,
            enable_teacher_forcing: true,
            enable_lr_schedule: true,
            enable_early_stop: true,
            noise_augment_sigma2: None,
        }
    }

    /// Desk-scale preset: same methodology, fewer sequence visits.
    pub fn desk(seed: u64) -> Self {
        Self {
            batches_per_epoch: 500,
            min_epochs: 50,
            max_epochs: 250,
            ..Self::paper(seed)
        }
    }

    /// Same schedule budget with every enhancement switched off:
    /// no teacher forcing, fixed learning rate, no early stop.
    pub fn without_enhancements(mut self) -> Self {
        self.enable_teacher_forcing = false;
        self.enable_lr_schedule = false;
        self.enable_early_stop = false;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.teacher_force_p) {
            return Err(Error::Config(format!(
                "teacher_force_p must be in [0,1], got {}",
                self.teacher_force_p
            )));
        }
        if self.min_lr > self.start_lr {
            return Err(Error::Config("min_lr must not exceed start_lr".into()));
        }
        if self.min_epochs > self.max_epochs {
            return Err(Error::Config("min_epochs must not exceed max_epochs".into()));
        }
        if self.batch_size == 0 || self.batches_per_epoch == 0 {
            return Err(Error::Config("batch sizes must be positive".into()));
        }
        if self.window == 0 || self.horizon == 0 {
            return Err(Error::Config("window and horizon must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.val_fraction) || self.val_fraction == 0.0 {
            return Err(Error::Config("val_fraction must be in (0,1)".into()));
        }
        Ok(())
    }
}

/// Why training stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    EarlyStop,
    MaxEpochs,
}

/// Per-epoch trajectories of one training run.
#[derive(Debug, Clone)]
pub struct TrainingReport {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub lr_trace: Vec<f64>,
    pub stop_reason: StopReason,
}

impl TrainingReport {
    pub fn epochs_run(&self) -> usize {
        self.train_loss.len()
    }
}

/// Mean free-running prediction loss of both networks over held-out
/// sequences (no teacher forcing anywhere on this path).
pub fn validate(net: &PredictorNet, held_out: &Dataset) -> Result<f64> {
    if held_out.is_empty() {
        return Err(Error::Domain("empty validation set".into()));
    }
    let w = held_out.window;
    let mut total = 0.0;
    for (re, im) in held_out.real_seqs.iter().zip(&held_out.imag_seqs) {
        let pr = net.real_net.rollout(&re[..w], held_out.horizon)?;
        let pi = net.imag_net.rollout(&im[..w], held_out.horizon)?;
        total += 0.5 * (mse_real(&pr, &re[w..])? + mse_real(&pi, &im[w..])?);
    }
    Ok(total / held_out.len() as f64)
}

// Work item for one sequence in one minibatch: pre-drawn mask plus optional
// pre-drawn window noise, so parallel execution stays deterministic.
struct SeqJob {
    seq_idx: usize,
    mask: Vec<bool>,
    window_noise: Option<Vec<Complex64>>,
}

/// Trains a fresh predictor on the dataset. Returns the trained pair and
/// the per-epoch report. Aborts with a divergence error if the loss goes
/// non-finite.
pub fn train(config: &TrainingConfig, dataset: &Dataset) -> Result<(PredictorNet, TrainingReport)> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::Domain("empty dataset".into()));
    }
    if dataset.window != config.window || dataset.horizon != config.horizon {
        return Err(Error::Config(format!(
            "dataset geometry {}+{} does not match config {}+{}",
            dataset.window, dataset.horizon, config.window, config.horizon
        )));
    }

    // Deterministic validation split.
    let n = dataset.len();
    let mut indices: Vec<usize> = (0..n).collect();
    let mut split_rng = SeededRng::new(derive_seed(config.seed, 0xDA7A));
    for i in (1..n).rev() {
        let j = split_rng.gen_range_usize(i + 1);
        indices.swap(i, j);
    }
    let n_val = ((n as f64 * config.val_fraction).ceil() as usize).clamp(1, n - 1);
    let (train_idx, val_idx) = indices.split_at(n - n_val);
    let val_set = Dataset {
        real_seqs: val_idx.iter().map(|&i| dataset.real_seqs[i].clone()).collect(),
        imag_seqs: val_idx.iter().map(|&i| dataset.imag_seqs[i].clone()).collect(),
        ..dataset.clone()
    };

    let mut init_rng = SeededRng::new(derive_seed(config.seed, 0x1417));
    let mut real_net = Network::init(1, config.hidden, config.num_layers, &mut init_rng);
    let mut imag_net = Network::init(1, config.hidden, config.num_layers, &mut init_rng);
    let mut adam_re = AdamState::new(real_net.param_count());
    let mut adam_im = AdamState::new(imag_net.param_count());

    let mut lr = config.start_lr;
    let mut report = TrainingReport {
        train_loss: Vec::new(),
        val_loss: Vec::new(),
        lr_trace: Vec::new(),
        stop_reason: StopReason::MaxEpochs,
    };

    let mut best_loss = f64::INFINITY;
    let mut plateau_counter = 0usize;
    let mut best_significant = f64::INFINITY;
    let mut stall = 0usize;
    let mut prev_loss = f64::INFINITY;

    for epoch in 0..config.max_epochs {
        let mut epoch_rng = SeededRng::new(derive_seed(config.seed, 0xE000 + epoch as u64));

        // Shuffled visit order, cycling through the pool if an epoch asks
        // for more sequences than the pool holds.
        let mut order: Vec<usize> = train_idx.to_vec();
        for i in (1..order.len()).rev() {
            let j = epoch_rng.gen_range_usize(i + 1);
            order.swap(i, j);
        }
        let visits: Vec<usize> =
            (0..config.batches_per_epoch).map(|k| order[k % order.len()]).collect();

        let mut epoch_loss = 0.0;
        for batch in visits.chunks(config.batch_size) {
            let jobs: Vec<SeqJob> = batch
                .iter()
                .map(|&seq_idx| {
                    let mask = if config.enable_teacher_forcing {
                        match config.teacher_force_unit {
                            TeacherForceUnit::Step => (0..config.horizon - 1)
                                .map(|_| epoch_rng.gen_bool(config.teacher_force_p))
                                .collect(),
                            TeacherForceUnit::Sequence => {
                                let forced = epoch_rng.gen_bool(config.teacher_force_p);
                                vec![forced; config.horizon - 1]
                            }
                        }
                    } else {
                        vec![false; config.horizon.saturating_sub(1)]
                    };
                    let window_noise = config.noise_augment_sigma2.map(|s2| {
                        (0..config.window)
                            .map(|_| epoch_rng.complex_gaussian_var(s2))
                            .collect()
                    });
                    SeqJob { seq_idx, mask, window_noise }
                })
                .collect();

            // Per-sequence losses and gradients, computed independently and
            // reduced in deterministic order.
            let results: Vec<Result<(f64, NetGrads, f64, NetGrads)>> = jobs
                .par_iter()
                .map(|job| {
                    let re = &dataset.real_seqs[job.seq_idx];
                    let im = &dataset.imag_seqs[job.seq_idx];
                    let w = config.window;
                    let (re_win, im_win): (Vec<f64>, Vec<f64>) = match &job.window_noise {
                        Some(noise) => (
                            re[..w].iter().zip(noise).map(|(v, n)| v + n.re).collect(),
                            im[..w].iter().zip(noise).map(|(v, n)| v + n.im).collect(),
                        ),
                        None => (re[..w].to_vec(), im[..w].to_vec()),
                    };
                    let (re_loss, g_re) = bptt(&real_net, &re_win, &re[w..], &job.mask)?;
                    let (im_loss, g_im) = bptt(&imag_net, &im_win, &im[w..], &job.mask)?;
                    Ok((re_loss, g_re, im_loss, g_im))
                })
                .collect();

            let inv_b = 1.0 / batch.len() as f64;
            let mut grad_re = NetGrads::zeros(&real_net);
            let mut grad_im = NetGrads::zeros(&imag_net);
            for r in results {
                let (l_re, g_re, l_im, g_im) = r?;
                epoch_loss += 0.5 * (l_re + l_im);
                grad_re.add_scaled(&g_re, inv_b);
                grad_im.add_scaled(&g_im, inv_b);
            }

            let mut p_re = real_net.flatten();
            adam_step(&mut p_re, &grad_re.flat, &mut adam_re, lr)?;
            real_net.assign(&p_re)?;
            let mut p_im = imag_net.flatten();
            adam_step(&mut p_im, &grad_im.flat, &mut adam_im, lr)?;
            imag_net.assign(&p_im)?;
        }
        let epoch_loss = epoch_loss / visits.len() as f64;
        if !epoch_loss.is_finite() {
            return Err(Error::Divergence(format!(
                "training loss became non-finite at epoch {epoch} (lr {lr:.3e})"
            )));
        }

        let candidate = PredictorNet {
            real_net: real_net.clone(),
            imag_net: imag_net.clone(),
            window_n: config.window,
            trained_doppler_hz: dataset.doppler_hz,
        };
        let val = validate(&candidate, &val_set)?;

        report.train_loss.push(epoch_loss);
        report.val_loss.push(val);
        report.lr_trace.push(lr);

        if config.enable_lr_schedule {
            if epoch_loss < best_loss {
                best_loss = epoch_loss;
                plateau_counter = 0;
            } else {
                plateau_counter += 1;
                if plateau_counter >= config.plateau_patience {
                    lr = (lr / config.plateau_factor).max(config.min_lr);
                    plateau_counter = 0;
                }
            }
            // A genuine loss increase during the decrease phase restarts
            // the schedule from the top.
            if lr < config.start_lr
                && prev_loss.is_finite()
                && epoch_loss > prev_loss * (1.0 + config.lr_reset_margin)
            {
                lr = config.start_lr;
                plateau_counter = 0;
            }
        }

        if epoch_loss < best_significant * (1.0 - config.early_stop_min_rel_improvement) {
            best_significant = epoch_loss;
            stall = 0;
        } else {
            stall += 1;
        }
        prev_loss = epoch_loss;

        if config.enable_early_stop
            && epoch + 1 >= config.min_epochs
            && lr <= config.min_lr * (1.0 + 1e-12)
            && stall >= config.early_stop_patience
        {
            report.stop_reason = StopReason::EarlyStop;
            break;
        }
    }

    let net = PredictorNet {
        real_net,
        imag_net,
        window_n: config.window,
        trained_doppler_hz: dataset.doppler_hz,
    };
    Ok((net, report))
}

// ---------------------------------------------------------------------
// Model serialization
// ---------------------------------------------------------------------

const MODEL_MAGIC: &[u8; 4] = b"FCPM";
const MODEL_VERSION: u32 = 1;

/// Serializes the predictor (and a config echo) into the versioned model
/// format. Load followed by save is byte-identical.
pub fn save_model(net: &PredictorNet, config_echo: &str) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    out.extend_from_slice(&(net.window_n as u32).to_le_bytes());
    out.extend_from_slice(&net.trained_doppler_hz.to_le_bytes());
    out.extend_from_slice(&(net.real_net.lstm.hidden_size as u32).to_le_bytes());
    out.extend_from_slice(&(net.real_net.lstm.num_layers() as u32).to_le_bytes());
    for n in [&net.real_net, &net.imag_net] {
        let flat = n.flatten();
        out.extend_from_slice(&(flat.len() as u64).to_le_bytes());
        for v in flat {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let cfg = config_echo.as_bytes();
    out.extend_from_slice(&(cfg.len() as u64).to_le_bytes());
    out.extend_from_slice(cfg);
    out
}

/// Parses the versioned model format; returns the predictor and the stored
/// config echo.
pub fn load_model(bytes: &[u8]) -> Result<(PredictorNet, String)> {
    let mut pos = 0usize;
    let take = |pos: &mut usize, n: usize| -> Result<&[u8]> {
        if *pos + n > bytes.len() {
            return Err(Error::Format("model file truncated".into()));
        }
        let s = &bytes[*pos..*pos + n];
        *pos += n;
        Ok(s)
    };
    let magic = take(&mut pos, 4)?;
    if magic != MODEL_MAGIC {
        return Err(Error::Format("not a model file (bad magic)".into()));
    }
    let version = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap());
    if version != MODEL_VERSION {
        return Err(Error::Format(format!("unsupported model version {version}")));
    }
    let window_n = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
    let doppler = f64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap());
    let hidden = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
    let layers = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
    if hidden == 0 || layers == 0 {
        return Err(Error::Format("degenerate model dimensions".into()));
    }

    let read_net = |pos: &mut usize| -> Result<Network> {
        let len = u64::from_le_bytes(take(pos, 8)?.try_into().unwrap()) as usize;
        let mut flat = Vec::with_capacity(len);
        for _ in 0..len {
            flat.push(f64::from_le_bytes(take(pos, 8)?.try_into().unwrap()));
        }
        let mut rng = SeededRng::new(0);
        let mut net = Network::init(1, hidden, layers, &mut rng);
        net.assign(&flat)?;
        Ok(net)
    };
    let real_net = read_net(&mut pos)?;
    let imag_net = read_net(&mut pos)?;

    let cfg_len = u64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap()) as usize;
    let cfg = String::from_utf8(take(&mut pos, cfg_len)?.to_vec())
        .map_err(|_| Error::Format("config echo is not UTF-8".into()))?;

    Ok((PredictorNet { real_net, imag_net, window_n, trained_doppler_hz: doppler }, cfg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fading::jakes_acf;

    fn toy_net(seed: u64, window: usize) -> PredictorNet {
        let mut rng = SeededRng::new(seed);
        PredictorNet {
            real_net: Network::init(1, 6, 1, &mut rng),
            imag_net: Network::init(1, 6, 1, &mut rng),
            window_n: window,
            trained_doppler_hz: 10.0,
        }
    }

    #[test]
    fn dataset_slices_are_contiguous() {
        let ds = make_dataset(10.0, 8, 3).unwrap();
        assert_eq!(ds.len(), 8);
        for seq in &ds.real_seqs {
            assert_eq!(seq.len(), 110);
        }
        let block = coherence_block_length(10.0).unwrap() as f64 * DEFAULT_SYMBOL_PERIOD_S;
        let raw = generate_fading(8 * 110, 10.0, block, 3).unwrap();
        for (i, seq) in ds.real_seqs.iter().enumerate() {
            for (j, v) in seq.iter().enumerate() {
                assert_eq!(*v, raw.gains[i * 110 + j].re);
            }
        }
    }

    #[test]
    fn dataset_static_limit_constant_targets() {
        let ds = make_dataset_with(1e-4, 4, 9, 1e-9, 10, 100).unwrap();
        for (re, im) in ds.real_seqs.iter().zip(&ds.imag_seqs) {
            let mean_re: f64 = re[..10].iter().sum::<f64>() / 10.0;
            let mean_im: f64 = im[..10].iter().sum::<f64>() / 10.0;
            let mag = (mean_re * mean_re + mean_im * mean_im).sqrt();
            for k in 10..110 {
                let dev =
                    ((re[k] - mean_re).powi(2) + (im[k] - mean_im).powi(2)).sqrt();
                assert!(dev < 0.01 * mag, "dev {dev} vs scale {mag}");
            }
        }
    }

    #[test]
    fn dataset_lag1_correlation_matches_jakes() {
        let ds = make_dataset(10.0, 2000, 77).unwrap();
        let mut num = 0.0;
        let mut den = 0.0;
        for (re, im) in ds.real_seqs.iter().zip(&ds.imag_seqs) {
            for k in 0..109 {
                num += re[k + 1] * re[k] + im[k + 1] * im[k];
                den += re[k] * re[k] + im[k] * im[k];
            }
        }
        let emp = num / den;
        let want = jakes_acf(ds.block_period_s, 10.0);
        assert!((emp - want).abs() < 0.02, "lag-1 {emp} vs J0 {want}");
    }

    #[test]
    fn predict_shape_and_determinism() {
        let net = toy_net(4, 10);
        let ests: Vec<Complex64> =
            (0..10).map(|i| Complex64::new(0.1 * i as f64, -0.05 * i as f64)).collect();
        let one = predict(&net, &ests, 1).unwrap();
        assert_eq!(one.len(), 1);
        for n in [2usize, 57, 1000] {
            let p = predict(&net, &ests, n).unwrap();
            assert_eq!(p.len(), n);
            let q = predict(&net, &ests, n).unwrap();
            assert_eq!(p, q);
        }
        assert!(predict(&net, &ests[..9], 5).is_err());
        assert!(predict(&net, &ests, 0).is_err());
    }

    #[test]
    fn config_validation() {
        let mut c = TrainingConfig::desk(1);
        c.teacher_force_p = 1.5;
        assert!(c.validate().is_err());
        let mut c = TrainingConfig::desk(1);
        c.min_epochs = 300;
        assert!(c.validate().is_err());
        let mut c = TrainingConfig::desk(1);
        c.min_lr = 1.0;
        assert!(c.validate().is_err());
        assert!(TrainingConfig::paper(0).validate().is_ok());
    }

    #[test]
    fn one_step_supervised_training_trends_down() {
        // teacher_force_p = 1 with horizon 1 degenerates to supervised
        // one-step regression; the loss trend over 20 epochs must fall.
        let ds = make_dataset_with(10.0, 60, 5, DEFAULT_SYMBOL_PERIOD_S, 10, 1).unwrap();
        let mut cfg = TrainingConfig::desk(11);
        cfg.window = 10;
        cfg.horizon = 1;
        cfg.hidden = 8;
        cfg.teacher_force_p = 1.0;
        cfg.batches_per_epoch = 40;
        cfg.batch_size = 8;
        cfg.min_epochs = 20;
        cfg.max_epochs = 20;
        cfg.enable_early_stop = false;
        let (_, report) = train(&cfg, &ds).unwrap();
        let head: f64 = report.train_loss[..5].iter().sum::<f64>() / 5.0;
        let tail: f64 = report.train_loss[15..].iter().sum::<f64>() / 5.0;
        assert!(
            tail < head,
            "loss did not trend down: first {head:.3e}, last {tail:.3e}"
        );
    }

    #[test]
    fn training_is_deterministic() {
        let ds = make_dataset_with(10.0, 30, 5, DEFAULT_SYMBOL_PERIOD_S, 6, 4).unwrap();
        let mut cfg = TrainingConfig::desk(21);
        cfg.window = 6;
        cfg.horizon = 4;
        cfg.hidden = 5;
        cfg.batches_per_epoch = 16;
        cfg.batch_size = 4;
        cfg.min_epochs = 3;
        cfg.max_epochs = 3;
        let (net_a, rep_a) = train(&cfg, &ds).unwrap();
        let (net_b, rep_b) = train(&cfg, &ds).unwrap();
        assert_eq!(net_a, net_b);
        assert_eq!(rep_a.train_loss, rep_b.train_loss);
        assert_eq!(rep_a.val_loss, rep_b.val_loss);
    }

    #[test]
    fn validate_basics() {
        let ds = make_dataset_with(10.0, 5, 2, DEFAULT_SYMBOL_PERIOD_S, 10, 20).unwrap();
        let net = toy_net(8, 10);
        let v = validate(&net, &ds).unwrap();
        assert!(v >= 0.0);
        let empty = Dataset { real_seqs: vec![], imag_seqs: vec![], ..ds.clone() };
        assert!(validate(&net, &empty).is_err());
    }

    #[test]
    fn model_roundtrip_byte_identical() {
        let net = toy_net(123, 10);
        let bytes = save_model(&net, "seed=123\npreset=desk\n");
        let (loaded, cfg) = load_model(&bytes).unwrap();
        assert_eq!(loaded, net);
        assert_eq!(cfg, "seed=123\npreset=desk\n");
        let again = save_model(&loaded, &cfg);
        assert_eq!(bytes, again);
        assert_eq!(loaded.fingerprint(), net.fingerprint());
        assert!(load_model(b"nope").is_err());
    }

    #[test]
    fn fingerprint_tracks_parameters() {
        let a = toy_net(1, 10);
        let mut b = a.clone();
        assert_eq!(a.fingerprint(), b.fingerprint());
        b.real_net.head.bias[0] += 1e-9;
        assert_ne!(a.fingerprint(), b.fingerprint());
    }
}
