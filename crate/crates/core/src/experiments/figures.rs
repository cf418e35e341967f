use std::io::Write;
use std::str::FromStr;

use super::convergence::ConvergenceReport;
use super::sweep::{summarize, Axis, TrialRow};
use crate::error::{Error, Result};

/// Plot-ready data products, one per figure.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FigureId {
    /// Residual traces per density.
    Fig5,
    /// Median and interquartile band of the residual over iterations.
    Fig6,
    /// Median iterations-to-threshold per layer and density.
    Fig7,
    /// Rate versus SNR.
    Fig8,
    /// Rate versus training overhead.
    Fig9,
    /// Energy efficiency versus SNR.
    Fig10,
    /// Overhead and energy efficiency versus blockage density.
    Fig11,
}

impl FromStr for FigureId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "fig5" => FigureId::Fig5,
            "fig6" => FigureId::Fig6,
            "fig7" => FigureId::Fig7,
            "fig8" => FigureId::Fig8,
            "fig9" => FigureId::Fig9,
            "fig10" => FigureId::Fig10,
            "fig11" => FigureId::Fig11,
            other => return Err(Error::Config(format!("figure_id: unknown figure {other:?}"))),
        })
    }
}

impl FigureId {
    /// Whether the figure is built from convergence traces rather than sweep rows.
    pub fn uses_convergence(self) -> bool {
        matches!(self, FigureId::Fig5 | FigureId::Fig6 | FigureId::Fig7)
    }

    pub fn header(self) -> &'static [&'static str] {
        match self {
            FigureId::Fig5 => &["density", "t", "residual_median"],
            FigureId::Fig6 => &["t", "residual_median", "residual_q25", "residual_q75"],
            FigureId::Fig7 => &["layer", "density", "iterations_median"],
            FigureId::Fig8 => &["snr_db", "method", "rate_gbps_mean", "rate_gbps_ci"],
            FigureId::Fig9 => &["evaluations", "method", "rate_gbps_mean"],
            FigureId::Fig10 => &["snr_db", "method", "ee_mbits_per_joule_mean"],
            FigureId::Fig11 => &["density", "method", "overhead_mean", "ee_mbits_per_joule_mean"],
        }
    }
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (i, frac) = (pos.floor() as usize, pos.fract());
    if i + 1 < sorted.len() {
        sorted[i] * (1.0 - frac) + sorted[i + 1] * frac
    } else {
        sorted[i]
    }
}

fn distinct(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// Writes the CSV of `figure` from sweep rows or convergence traces. Empty input yields a
/// header-only file.
pub fn emit_figure_data<W: Write>(
    figure: FigureId,
    rows: &[TrialRow],
    convergence: Option<&ConvergenceReport>,
    out: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(figure.header())?;
    let empty = ConvergenceReport::default();
    let conv = convergence.unwrap_or(&empty);
    match figure {
        FigureId::Fig5 => {
            for d in distinct(conv.residuals.iter().map(|r| r.density).collect()) {
                for t in distinct(conv.residuals.iter().map(|r| r.t as f64).collect()) {
                    let v = sorted(
                        conv.residuals
                            .iter()
                            .filter(|r| r.density == d && r.t as f64 == t)
                            .map(|r| r.residual)
                            .collect(),
                    );
                    w.write_record([d.to_string(), t.to_string(), quantile(&v, 0.5).to_string()])?;
                }
            }
        }
        FigureId::Fig6 => {
            for t in distinct(conv.residuals.iter().map(|r| r.t as f64).collect()) {
                let v = sorted(conv.residuals_at(t as usize, None));
                w.write_record([
                    t.to_string(),
                    quantile(&v, 0.5).to_string(),
                    quantile(&v, 0.25).to_string(),
                    quantile(&v, 0.75).to_string(),
                ])?;
            }
        }
        FigureId::Fig7 => {
            let cap = conv.residuals.iter().map(|r| r.t).max().unwrap_or(0) + 1;
            for layer in distinct(conv.iterations.iter().map(|r| r.layer as f64).collect()) {
                for d in distinct(conv.iterations.iter().map(|r| r.density).collect()) {
                    // Runs that never meet the threshold count as one past the budget.
                    let v = sorted(
                        conv.iterations
                            .iter()
                            .filter(|r| r.layer as f64 == layer && r.density == d)
                            .map(|r| r.iterations.unwrap_or(cap) as f64)
                            .collect(),
                    );
                    if !v.is_empty() {
                        w.write_record([layer.to_string(), d.to_string(), quantile(&v, 0.5).to_string()])?;
                    }
                }
            }
        }
        FigureId::Fig8 | FigureId::Fig9 | FigureId::Fig10 | FigureId::Fig11 => {
            for s in summarize(rows) {
                // The x axis is the swept value, except for energy efficiency over a power sweep.
                let x = match (figure, s.axis) {
                    (FigureId::Fig10, Axis::TxPowerDbm) => s.snr_db_mean,
                    _ => s.axis_value,
                };
                let mut record = vec![x.to_string(), s.method.as_str().to_string()];
                match figure {
                    FigureId::Fig8 => {
                        record.push(s.rate_gbps_mean.to_string());
                        record.push(s.rate_gbps_ci95.to_string());
                    }
                    FigureId::Fig9 => record.push(s.rate_gbps_mean.to_string()),
                    FigureId::Fig10 => record.push((s.ee_mean / 1e6).to_string()),
                    _ => {
                        record.push(s.overhead_mean.to_string());
                        record.push((s.ee_mean / 1e6).to_string());
                    }
                }
                w.write_record(record)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}
