//! Plot-ready CSV output. Every file starts with `#` comment lines carrying
//! the config hash and master seed, so a file identifies its inputs.

use std::io::{self, Write};

use super::experiment::{RmseReport, RoundResult};
use crate::mobility::Trajectory;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct OutputHeader {
    pub config_hash: String,
    pub seed: u64,
    /// `key=value` overrides as given.
    pub overrides: Vec<String>,
}

impl OutputHeader {
    pub fn write_to<W: Write>(&self, out: &mut W) -> io::Result<()> {
        writeln!(out, "# config_hash: {}", self.config_hash)?;
        writeln!(out, "# seed: {}", self.seed)?;
        if !self.overrides.is_empty() {
            writeln!(out, "# overrides: {}", self.overrides.join(" "))?;
        }
        Ok(())
    }
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

pub fn write_trajectory<W: Write>(
    out: &mut W,
    header: &OutputHeader,
    trajectory: &Trajectory,
) -> io::Result<()> {
    header.write_to(out)?;
    trajectory.write_csv(out)
}

pub fn write_trace<W: Write>(
    out: &mut W,
    header: &OutputHeader,
    round: &RoundResult,
) -> io::Result<()> {
    header.write_to(out)?;
    writeln!(out, "# filter: {}", round.filter)?;
    writeln!(
        out,
        "step,true_x,true_y,est_x,est_y,error,n_eff,resampled,degenerate"
    )?;
    for r in &round.trace {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.step,
            r.truth.x,
            r.truth.y,
            r.estimate.x,
            r.estimate.y,
            r.error,
            opt(r.n_eff),
            opt(r.resampled),
            r.degenerate
        )?;
    }
    Ok(())
}

/// One row per (filter, round).
pub fn write_rounds<W: Write>(
    out: &mut W,
    header: &OutputHeader,
    reports: &[RmseReport],
) -> io::Result<()> {
    header.write_to(out)?;
    writeln!(out, "filter,round,seed,rmse")?;
    for rep in reports {
        for (i, (seed, rmse)) in rep.round_seeds.iter().zip(&rep.rmse).enumerate() {
            writeln!(out, "{},{i},{seed},{rmse}", rep.filter)?;
        }
    }
    Ok(())
}

/// One row per report with a 95% interval for the mean.
pub fn write_summary<W: Write>(
    out: &mut W,
    header: &OutputHeader,
    reports: &[RmseReport],
) -> io::Result<()> {
    header.write_to(out)?;
    writeln!(out, "filter,mean,variance,rounds,ci95_low,ci95_high,variance_degenerate,degenerate_rounds,config_hash")?;
    for r in reports {
        let (lo, hi) = r.confidence_interval(0.95);
        writeln!(
            out,
            "{},{},{},{},{lo},{hi},{},{},{}",
            r.filter,
            r.mean,
            r.variance,
            r.rounds,
            r.variance_degenerate,
            r.degenerate_rounds,
            r.config_hash
        )?;
    }
    Ok(())
}

/// Sweep summary, one row per value.
pub fn write_sweep_summary<W: Write>(
    out: &mut W,
    header: &OutputHeader,
    parameter: &str,
    values: &[usize],
    reports: &[RmseReport],
) -> io::Result<()> {
    header.write_to(out)?;
    writeln!(out, "# parameter: {parameter}")?;
    writeln!(
        out,
        "parameter_value,filter,mean,variance,rounds,ci95_low,ci95_high,config_hash"
    )?;
    for (v, r) in values.iter().zip(reports) {
        let (lo, hi) = r.confidence_interval(0.95);
        writeln!(
            out,
            "{v},{},{},{},{},{lo},{hi},{}",
            r.filter, r.mean, r.variance, r.rounds, r.config_hash
        )?;
    }
    Ok(())
}

/// Long format: one row per (value, round).
pub fn write_sweep_long<W: Write>(
    out: &mut W,
    header: &OutputHeader,
    parameter: &str,
    values: &[usize],
    reports: &[RmseReport],
) -> io::Result<()> {
    header.write_to(out)?;
    writeln!(out, "# parameter: {parameter}")?;
    writeln!(out, "parameter_value,round,rmse")?;
    for (v, r) in values.iter().zip(reports) {
        for (i, rmse) in r.rmse.iter().enumerate() {
            writeln!(out, "{v},{i},{rmse}")?;
        }
    }
    Ok(())
}

/// Fixed-width comparison table.
pub fn format_table(reports: &[RmseReport]) -> String {
    let mut s = format!(
        "{:<8} {:>10} {:>10} {:>7} {:>21}\n",
        "filter", "mean", "variance", "rounds", "95% CI"
    );
    for r in reports {
        let (lo, hi) = r.confidence_interval(0.95);
        let flag = if r.variance_degenerate {
            " (single round)"
        } else {
            ""
        };
        s.push_str(&format!(
            "{:<8} {:>10.4} {:>10.4} {:>7} {:>21}{flag}\n",
            r.filter.label(),
            r.mean,
            r.variance,
            r.rounds,
            format!("[{lo:.4}, {hi:.4}]")
        ));
    }
    s
}
