//! Flat key=value (de)serialization of the training configuration.

use anyhow::{bail, Context, Result};
use fadecast_core::predictor::{TeacherForceUnit, TrainingConfig};

/// Canonical textual form, one `key=value` per line in fixed order; this
/// is what gets echoed into model files and report headers.
pub fn config_to_text(c: &TrainingConfig) -> String {
    let unit = match c.teacher_force_unit {
        TeacherForceUnit::Step => "step",
        TeacherForceUnit::Sequence => "sequence",
    };
    let noise = match c.noise_augment_sigma2 {
        Some(v) => format!("{v}"),
        None => "none".to_string(),
    };
    format!(
        "start_lr={}\nmin_lr={}\nmin_epochs={}\nmax_epochs={}\nbatches_per_epoch={}\n\
         batch_size={}\nteacher_force_p={}\nteacher_force_unit={unit}\nplateau_patience={}\n\
         plateau_factor={}\nearly_stop_patience={}\nearly_stop_min_rel_improvement={}\n\
         lr_reset_margin={}\nhorizon={}\nwindow={}\nhidden={}\nnum_layers={}\n\
         val_fraction={}\nseed={}\nenable_teacher_forcing={}\nenable_lr_schedule={}\n\
         enable_early_stop={}\nnoise_augment_sigma2={noise}\n",
        c.start_lr,
        c.min_lr,
        c.min_epochs,
        c.max_epochs,
        c.batches_per_epoch,
        c.batch_size,
        c.teacher_force_p,
        c.plateau_patience,
        c.plateau_factor,
        c.early_stop_patience,
        c.early_stop_min_rel_improvement,
        c.lr_reset_margin,
        c.horizon,
        c.window,
        c.hidden,
        c.num_layers,
        c.val_fraction,
        c.seed,
        c.enable_teacher_forcing,
        c.enable_lr_schedule,
        c.enable_early_stop,
    )
}

/// Applies `key=value` lines over a base configuration. Unknown keys are
/// rejected; blank lines and `#` comments are skipped.
pub fn apply_config_text(base: TrainingConfig, text: &str) -> Result<TrainingConfig> {
    let mut c = base;
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .with_context(|| format!("line {}: expected key=value", ln + 1))?;
        let (key, value) = (key.trim(), value.trim());
        let ctx = || format!("line {}: bad value `{value}` for {key}", ln + 1);
        match key {
            "start_lr" => c.start_lr = value.parse().with_context(ctx)?,
            "min_lr" => c.min_lr = value.parse().with_context(ctx)?,
            "min_epochs" => c.min_epochs = value.parse().with_context(ctx)?,
            "max_epochs" => c.max_epochs = value.parse().with_context(ctx)?,
            "batches_per_epoch" => c.batches_per_epoch = value.parse().with_context(ctx)?,
            "batch_size" => c.batch_size = value.parse().with_context(ctx)?,
            "teacher_force_p" => c.teacher_force_p = value.parse().with_context(ctx)?,
            "teacher_force_unit" => {
                c.teacher_force_unit = match value {
                    "step" => TeacherForceUnit::Step,
                    "sequence" => TeacherForceUnit::Sequence,
                    other => bail!("line {}: unknown teacher_force_unit `{other}`", ln + 1),
                }
            }
            "plateau_patience" => c.plateau_patience = value.parse().with_context(ctx)?,
            "plateau_factor" => c.plateau_factor = value.parse().with_context(ctx)?,
            "early_stop_patience" => c.early_stop_patience = value.parse().with_context(ctx)?,
            "early_stop_min_rel_improvement" => {
                c.early_stop_min_rel_improvement = value.parse().with_context(ctx)?
            }
            "lr_reset_margin" => c.lr_reset_margin = value.parse().with_context(ctx)?,
            "horizon" => c.horizon = value.parse().with_context(ctx)?,
            "window" => c.window = value.parse().with_context(ctx)?,
            "hidden" => c.hidden = value.parse().with_context(ctx)?,
            "num_layers" => c.num_layers = value.parse().with_context(ctx)?,
            "val_fraction" => c.val_fraction = value.parse().with_context(ctx)?,
            "seed" => c.seed = value.parse().with_context(ctx)?,
            "enable_teacher_forcing" => {
                c.enable_teacher_forcing = value.parse().with_context(ctx)?
            }
            "enable_lr_schedule" => c.enable_lr_schedule = value.parse().with_context(ctx)?,
            "enable_early_stop" => c.enable_early_stop = value.parse().with_context(ctx)?,
            "noise_augment_sigma2" => {
                c.noise_augment_sigma2 = if value == "none" {
                    None
                } else {
                    Some(value.parse().with_context(ctx)?)
                }
            }
            other => bail!("line {}: unknown config key `{other}`", ln + 1),
        }
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_roundtrip() {
        let c = TrainingConfig::desk(42);
        let text = config_to_text(&c);
        let back = apply_config_text(TrainingConfig::paper(0), &text).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn overrides_and_errors() {
        let base = TrainingConfig::desk(1);
        let c = apply_config_text(base.clone(), "hidden=8\n# comment\n\nseed=9\n").unwrap();
        assert_eq!(c.hidden, 8);
        assert_eq!(c.seed, 9);
        assert!(apply_config_text(base.clone(), "nope=1").is_err());
        assert!(apply_config_text(base, "hidden").is_err());
    }
}
