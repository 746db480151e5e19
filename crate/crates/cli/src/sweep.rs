//! Sweep-range parsing: `a:step:b` (inclusive) or a comma list.

use anyhow::{bail, Result};

pub fn parse_f64_sweep(spec: &str) -> Result<Vec<f64>> {
    let spec = spec.trim();
    if spec.contains(':') {
        let parts: Vec<&str> = spec.split(':').collect();
        if parts.len() != 3 {
            bail!("range must be start:step:end, got `{spec}`");
        }
        let start: f64 = parts[0].trim().parse()?;
        let step: f64 = parts[1].trim().parse()?;
        let end: f64 = parts[2].trim().parse()?;
        if step <= 0.0 {
            bail!("range step must be positive, got {step}");
        }
        let mut out = Vec::new();
        let mut v = start;
        // Tolerate rounding at the inclusive end point.
        while v <= end + step * 1e-9 {
            out.push(v);
            v = start + step * (out.len() as f64);
        }
        if out.is_empty() {
            bail!("empty range `{spec}`");
        }
        Ok(out)
    } else {
        spec.split(',')
            .map(|s| s.trim().parse::<f64>().map_err(Into::into))
            .collect()
    }
}

pub fn parse_usize_sweep(spec: &str) -> Result<Vec<usize>> {
    let vals = parse_f64_sweep(spec)?;
    vals.into_iter()
        .map(|v| {
            if v.fract() != 0.0 || v < 0.0 {
                bail!("expected non-negative integers, got {v}");
            }
            Ok(v as usize)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges_and_lists() {
        assert_eq!(parse_f64_sweep("0:2:6").unwrap(), vec![0.0, 2.0, 4.0, 6.0]);
        assert_eq!(parse_f64_sweep("5,1.5").unwrap(), vec![5.0, 1.5]);
        assert_eq!(parse_usize_sweep("5:5:20").unwrap(), vec![5, 10, 15, 20]);
        assert!(parse_f64_sweep("1:0:5").is_err());
        assert!(parse_usize_sweep("1.5,2").is_err());
        assert!(parse_f64_sweep("1:2").is_err());
    }
}
