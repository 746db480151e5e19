//! Subcommand implementations.

use crate::config::{apply_config_text, config_to_text};
use crate::sweep::{parse_f64_sweep, parse_usize_sweep};
use crate::Command;
use anyhow::{anyhow, bail, Context, Result};
use fadecast_core::adaptive::{build_lut, MseLookupTable};
use fadecast_core::baseline::{run_ar2_receiver, run_lmmse_li_receiver};
use fadecast_core::cpsc::run_cpsc_with;
use fadecast_core::fading::generate_fading;
use fadecast_core::modem::gray_qam;
use fadecast_core::predictor::{
    load_model, make_dataset_with, predict, save_model, train, PredictorNet, StopReason,
    TrainingConfig,
};
use fadecast_core::receiver::{
    run_data_driven_with, run_fixed_with, CsiMode, McStop, ReceiverReport,
};
use fadecast_core::Error as CoreError;
use num_complex::Complex64;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

const VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn exit_code_for(err: &anyhow::Error) -> u8 {
    if let Some(core) = err.downcast_ref::<CoreError>() {
        return match core {
            CoreError::FingerprintMismatch { .. } => 5,
            CoreError::Divergence(_) => 6,
            CoreError::Format(_) => 4,
            _ => 4,
        };
    }
    if err.downcast_ref::<std::io::Error>().is_some() {
        return 3;
    }
    1
}

/// `FADECAST_SEED` overrides any configured seed, for CI determinism.
fn effective_seed(cli_seed: u64) -> Result<u64> {
    match std::env::var("FADECAST_SEED") {
        Ok(v) => v
            .trim()
            .parse::<u64>()
            .map_err(|_| anyhow!("FADECAST_SEED must be a u64, got `{v}`")),
        Err(_) => Ok(cli_seed),
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).with_context(|| format!("reading {}", path.display()))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn load_model_file(path: &Path) -> Result<(PredictorNet, String)> {
    let bytes = read_file(path)?;
    Ok(load_model(&bytes)?)
}

fn load_lut_file(path: &Path) -> Result<MseLookupTable> {
    let text = read_text(path)?;
    Ok(MseLookupTable::from_csv(&text)?)
}

// Header comments carried by every CSV output. No timestamps: reruns with
// the same config must be byte-identical.
fn header(subcommand: &str, seed: u64, extra: &[(&str, String)]) -> String {
    let mut h = String::new();
    let _ = writeln!(h, "# tool=fadecast {VERSION}");
    let _ = writeln!(h, "# subcommand={subcommand}");
    let _ = writeln!(h, "# seed={seed}");
    for (k, v) in extra {
        let _ = writeln!(h, "# {k}={v}");
    }
    h
}

fn parse_modulation(spec: &str) -> Result<usize> {
    match spec.to_ascii_lowercase().as_str() {
        "4qam" | "qpsk" => Ok(4),
        "16qam" => Ok(16),
        "64qam" => Ok(64),
        other => bail!("unknown modulation `{other}` (use 4qam, 16qam, 64qam)"),
    }
}

pub fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::GenChannel { fd, ts, n, seed, out, format } => {
            let seed = effective_seed(seed)?;
            let process = generate_fading(n, fd, ts, seed)?;
            match format.as_str() {
                "csv" => {
                    let mut body = header(
                        "gen-channel",
                        seed,
                        &[
                            ("fd_hz", fd.to_string()),
                            ("ts_s", ts.to_string()),
                            ("n", n.to_string()),
                        ],
                    );
                    body.push_str("idx,re,im\n");
                    for (i, g) in process.gains.iter().enumerate() {
                        let _ = writeln!(body, "{i},{},{}", g.re, g.im);
                    }
                    write_file(&out, body.as_bytes())?;
                }
                "bin" => {
                    let mut bytes = Vec::with_capacity(process.gains.len() * 16);
                    for g in &process.gains {
                        bytes.extend_from_slice(&g.re.to_le_bytes());
                        bytes.extend_from_slice(&g.im.to_le_bytes());
                    }
                    write_file(&out, &bytes)?;
                }
                other => bail!("unknown format `{other}` (use csv or bin)"),
            }
            Ok(())
        }

        Command::Train { config, preset, fd, dataset_count, seed, out, report } => {
            let mut cfg = match preset.as_str() {
                "paper" => TrainingConfig::paper(0),
                "desk" => TrainingConfig::desk(0),
                other => bail!("unknown preset `{other}` (use paper or desk)"),
            };
            if let Some(path) = &config {
                cfg = apply_config_text(cfg, &read_text(path)?)?;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            cfg.seed = effective_seed(cfg.seed)?;
            let count = dataset_count.unwrap_or(cfg.batches_per_epoch * 2);
            let dataset = make_dataset_with(
                fd,
                count,
                fadecast_core::math::derive_seed(cfg.seed, 0xD5),
                fadecast_core::fading::DEFAULT_SYMBOL_PERIOD_S,
                cfg.window,
                cfg.horizon,
            )?;
            eprintln!(
                "training: preset={preset} fd={fd} Hz, {count} sequences, up to {} epochs",
                cfg.max_epochs
            );
            let (net, train_report) = train(&cfg, &dataset)?;
            let echo = format!(
                "{}preset={preset}\ntraining_doppler_hz={fd}\ndataset_count={count}\n",
                config_to_text(&cfg)
            );
            write_file(&out, &save_model(&net, &echo))?;
            eprintln!(
                "trained: {} epochs, stop={:?}, final val loss {:.3e}, fingerprint {:016x}",
                train_report.epochs_run(),
                train_report.stop_reason,
                train_report.val_loss.last().copied().unwrap_or(f64::NAN),
                net.fingerprint()
            );
            if let Some(path) = report {
                let stop = match train_report.stop_reason {
                    StopReason::EarlyStop => "early_stop",
                    StopReason::MaxEpochs => "max_epochs",
                };
                let mut body = header(
                    "train",
                    cfg.seed,
                    &[
                        ("preset", preset.clone()),
                        ("stop_reason", stop.to_string()),
                        ("fingerprint", format!("{:016x}", net.fingerprint())),
                    ],
                );
                body.push_str("epoch,train_loss,val_loss,lr\n");
                for e in 0..train_report.epochs_run() {
                    let _ = writeln!(
                        body,
                        "{e},{},{},{}",
                        train_report.train_loss[e],
                        train_report.val_loss[e],
                        train_report.lr_trace[e]
                    );
                }
                write_file(&path, body.as_bytes())?;
            }
            Ok(())
        }

        Command::Predict { model, input, n_preds, out } => {
            let (net, _) = load_model_file(&model)?;
            let text = read_text(&input)?;
            let mut estimates = Vec::new();
            for line in text.lines() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') || line.starts_with("idx") {
                    continue;
                }
                let f: Vec<&str> = line.split(',').collect();
                if f.len() != 3 {
                    bail!("bad estimate row `{line}` (expected idx,re,im)");
                }
                estimates.push(Complex64::new(f[1].trim().parse()?, f[2].trim().parse()?));
            }
            if estimates.len() != net.window_n {
                bail!(
                    "model expects exactly {} estimates, input has {}",
                    net.window_n,
                    estimates.len()
                );
            }
            let preds = predict(&net, &estimates, n_preds)?;
            let mut body = header(
                "predict",
                0,
                &[
                    ("fingerprint", format!("{:016x}", net.fingerprint())),
                    ("n_preds", n_preds.to_string()),
                ],
            );
            body.push_str("idx,re,im\n");
            for (i, p) in preds.iter().enumerate() {
                let _ = writeln!(body, "{i},{},{}", p.re, p.im);
            }
            write_file(&out, body.as_bytes())
        }

        Command::BuildLut { model, trials, n_grid, d_grid, snr_grid, seed, out } => {
            let seed = effective_seed(seed)?;
            let (net, _) = load_model_file(&model)?;
            let n = parse_usize_sweep(&n_grid)?;
            let d = parse_f64_sweep(&d_grid)?;
            let snr = parse_f64_sweep(&snr_grid)?;
            eprintln!(
                "building lut: {} x {} x {} cells, {trials} trials each",
                n.len(),
                d.len(),
                snr.len()
            );
            let lut = build_lut(&net, &n, &d, &snr, trials, seed)?;
            let mut body = header(
                "build-lut",
                seed,
                &[
                    ("n_grid", n_grid.clone()),
                    ("d_grid", d_grid.clone()),
                    ("snr_grid", snr_grid.clone()),
                ],
            );
            body.push_str(&lut.to_csv());
            write_file(&out, body.as_bytes())
        }

        Command::RunBer {
            model,
            lut,
            modulation,
            fd,
            ebn0,
            scheme,
            n_preds,
            k,
            trials,
            seed,
            out,
        } => {
            let seed = effective_seed(seed)?;
            let (net, _) = load_model_file(&model)?;
            let m = parse_modulation(&modulation)?;
            let constellation = gray_qam(m)?;
            let points = parse_f64_sweep(&ebn0)?;
            let lut_table = lut.as_ref().map(|p| load_lut_file(p)).transpose()?;
            let need_lut = || -> Result<&MseLookupTable> {
                lut_table
                    .as_ref()
                    .ok_or_else(|| anyhow!("scheme `{scheme}` requires --lut"))
            };
            let stop = McStop::default();

            let mut rows: Vec<(f64, ReceiverReport)> = Vec::new();
            for (i, &point) in points.iter().enumerate() {
                let point_seed = fadecast_core::math::derive_seed(seed, i as u64);
                let report = match scheme.as_str() {
                    "fixed" => {
                        let n_preds =
                            n_preds.ok_or_else(|| anyhow!("scheme `fixed` requires --n-preds"))?;
                        run_fixed_with(
                            &net, &constellation, fd, point, n_preds, trials, point_seed,
                            CsiMode::Predicted, stop,
                        )?
                    }
                    "perfect" => {
                        let n_preds = n_preds
                            .ok_or_else(|| anyhow!("scheme `perfect` requires --n-preds"))?;
                        run_fixed_with(
                            &net, &constellation, fd, point, n_preds, trials, point_seed,
                            CsiMode::Perfect, stop,
                        )?
                    }
                    "adaptive" => run_data_driven_with(
                        &net, need_lut()?, &constellation, fd, point, 1, trials, point_seed, stop,
                    )?,
                    "datadriven" => {
                        let k = k.ok_or_else(|| anyhow!("scheme `datadriven` requires --k"))?;
                        run_data_driven_with(
                            &net, need_lut()?, &constellation, fd, point, k, trials, point_seed,
                            stop,
                        )?
                    }
                    "ar2" => run_ar2_receiver(
                        &constellation, fd, point, need_lut()?, net.window_n, trials, point_seed,
                        stop,
                    )?,
                    "lmmse-li" => {
                        let n_d = n_preds
                            .ok_or_else(|| anyhow!("scheme `lmmse-li` requires --n-preds"))?;
                        run_lmmse_li_receiver(
                            &constellation, fd, point, net.window_n, n_d, trials, point_seed,
                            stop,
                        )?
                    }
                    other => bail!(
                        "unknown scheme `{other}` (fixed, adaptive, datadriven, ar2, lmmse-li, perfect)"
                    ),
                };
                eprintln!(
                    "ebn0 {point:5.1} dB: ber {:.3e} mse {:.3e} n_c {:.1} ({} trials)",
                    report.ber, report.prediction_mse, report.mean_n_c, report.trials_run
                );
                rows.push((point, report));
            }

            let mut body = header(
                "run-ber",
                seed,
                &[
                    ("scheme", scheme.clone()),
                    ("mod", modulation.clone()),
                    ("fd_hz", fd.to_string()),
                    ("trials_cap", trials.to_string()),
                    ("fingerprint", format!("{:016x}", net.fingerprint())),
                ],
            );
            body.push_str("ebn0_db,scheme,fd_hz,mod,n_c_mean,efficiency,ber,mse,trials\n");
            for (point, r) in rows {
                let _ = writeln!(
                    body,
                    "{point},{scheme},{fd},{modulation},{},{},{},{},{}",
                    r.mean_n_c, r.efficiency, r.ber, r.prediction_mse, r.trials_run
                );
            }
            write_file(&out, body.as_bytes())
        }

        Command::RunCpsc { model, n, l, n_p, fd, snr, perfect_csi, trials, seed, out } => {
            let seed = effective_seed(seed)?;
            let (net, _) = load_model_file(&model)?;
            let constellation = gray_qam(4)?;
            let points = parse_f64_sweep(&snr)?;
            let csi = if perfect_csi { CsiMode::Perfect } else { CsiMode::Predicted };
            let scheme = if perfect_csi { "cpsc-perfect" } else { "cpsc-viterbi" };
            let mut body = header(
                "run-cpsc",
                seed,
                &[
                    ("scheme", scheme.to_string()),
                    ("n", n.to_string()),
                    ("l", l.to_string()),
                    ("np", n_p.to_string()),
                    ("fd_hz", fd.to_string()),
                    ("fingerprint", format!("{:016x}", net.fingerprint())),
                ],
            );
            body.push_str("snr_db,scheme,fd_hz,mod,n_c_mean,efficiency,ber,mse,trials\n");
            for (i, &point) in points.iter().enumerate() {
                let point_seed = fadecast_core::math::derive_seed(seed, i as u64);
                let r = run_cpsc_with(
                    &net,
                    &constellation,
                    fd,
                    point,
                    n,
                    l,
                    n_p,
                    trials,
                    point_seed,
                    csi,
                    McStop::default(),
                )?;
                eprintln!(
                    "snr {point:5.1} dB: ber {:.3e} mse {:.3e} ({} trials)",
                    r.ber, r.prediction_mse, r.trials_run
                );
                let _ = writeln!(
                    body,
                    "{point},{scheme},{fd},4qam,{},{},{},{},{}",
                    r.mean_n_c, r.efficiency, r.ber, r.prediction_mse, r.trials_run
                );
            }
            write_file(&out, body.as_bytes())
        }

        Command::Report { inputs, out } => {
            if inputs.is_empty() {
                bail!("report needs at least one input CSV");
            }
            let mut merged_header: Option<String> = None;
            let mut rows: Vec<String> = Vec::new();
            let mut sources: Vec<PathBuf> = Vec::new();
            for path in &inputs {
                let text = read_text(path)?;
                let mut header_line = None;
                for line in text.lines() {
                    let line = line.trim_end();
                    if line.is_empty() || line.starts_with('#') {
                        continue;
                    }
                    if header_line.is_none() {
                        header_line = Some(line.to_string());
                        continue;
                    }
                    rows.push(line.to_string());
                }
                let header_line = header_line
                    .ok_or_else(|| anyhow!("{}: no header row found", path.display()))?;
                match &merged_header {
                    None => merged_header = Some(header_line),
                    Some(expected) if *expected == header_line => {}
                    Some(expected) => {
                        let want: Vec<&str> = expected.split(',').collect();
                        let got: Vec<&str> = header_line.split(',').collect();
                        let off: Vec<String> = want
                            .iter()
                            .zip(got.iter().chain(std::iter::repeat(&"<missing>")))
                            .filter(|(a, b)| a != b)
                            .map(|(a, b)| format!("{a} vs {b}"))
                            .collect();
                        bail!(
                            "{}: schema mismatch, offending columns: {}",
                            path.display(),
                            off.join(", ")
                        );
                    }
                }
                sources.push(path.clone());
            }
            let mut body = String::new();
            let _ = writeln!(body, "# tool=fadecast {VERSION}");
            let _ = writeln!(body, "# subcommand=report");
            for s in &sources {
                let _ = writeln!(body, "# source={}", s.display());
            }
            let _ = writeln!(body, "{}", merged_header.unwrap());
            for r in rows {
                let _ = writeln!(body, "{r}");
            }
            write_file(&out, body.as_bytes())
        }
    }
}
