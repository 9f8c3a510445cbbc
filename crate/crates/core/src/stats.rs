//! Population statistics over many drillings: boxplots of per-run errors
//! and max-normalized radar values of error and wrench per axis.

use std::io;
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::io::{fmt_f64, write_atomic};
use crate::metrics::{drilling_phase, ErrorSample};
use crate::streams::{resample_wrenches, StreamError, WrenchSample};

pub const REPORT_FILE: &str = "report.json";
pub const BOXPLOT_POSITION_FILE: &str = "boxplot_position.csv";
pub const BOXPLOT_ORIENTATION_FILE: &str = "boxplot_orientation.csv";
pub const RADAR_FILE: &str = "radar.csv";

pub const BOXPLOT_HEADER: &str = "axis,median,q1,q3,whisker_low,whisker_high,outliers";
pub const RADAR_HEADER: &str = "family,x,y,z";

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("no input values")]
    EmptyInput,
    #[error("non-finite input value {0}")]
    NonFinite(f64),
    #[error("wrench stream does not cover the error series: {0}")]
    Wrench(#[from] StreamError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Five-number summary with 1.5·IQR whiskers.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxplotSummary {
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub whisker_low: f64,
    pub whisker_high: f64,
    /// Values beyond the whisker fences, ascending.
    pub outliers: Vec<f64>,
}

/// Quantile of sorted data by linear interpolation between order
/// statistics at position `p · (n − 1)` (Hyndman–Fan type 7).
pub fn quantile_type7(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = p * (n - 1) as f64;
    let lo = h.floor() as usize;
    if lo + 1 >= n {
        return sorted[n - 1];
    }
    let frac = h - lo as f64;
    sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
}

pub fn boxplot_summary(values: &[f64]) -> Result<BoxplotSummary, StatsError> {
    if values.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite(*v));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q1 = quantile_type7(&sorted, 0.25);
    let median = quantile_type7(&sorted, 0.5);
    let q3 = quantile_type7(&sorted, 0.75);
    let iqr = q3 - q1;
    let (lo_fence, hi_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let inside = sorted.iter().filter(|&&v| v >= lo_fence && v <= hi_fence);
    let whisker_low = inside.clone().next().copied().unwrap_or(q1);
    let whisker_high = inside.clone().next_back().copied().unwrap_or(q3);
    let outliers = sorted
        .iter()
        .filter(|&&v| v < lo_fence || v > hi_fence)
        .copied()
        .collect();
    Ok(BoxplotSummary {
        median,
        q1,
        q3,
        whisker_low,
        whisker_high,
        outliers,
    })
}

/// How a run's error series is reduced to one scalar per axis for the boxplots.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReduceMode {
    #[default]
    Mean,
    /// Value of largest magnitude (signed for position).
    Max,
    /// Last retained sample.
    Final,
}

impl ReduceMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ReduceMode::Mean => "mean",
            ReduceMode::Max => "max",
            ReduceMode::Final => "final",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AggregateOptions {
    /// Keep only samples with `depth >= 0`.
    pub phase_gating: bool,
    pub reduce: ReduceMode,
}

/// Per-axis reductions of one drilling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunAggregate {
    /// Mean signed deviation, mm.
    pub mean_deviation: Vector3<f64>,
    /// Mean |e_o| per axis, degrees.
    pub mean_abs_orientation: Vector3<f64>,
    /// Mean |force| per axis, N.
    pub mean_abs_force: Vector3<f64>,
    /// Mean |torque| per axis, N·m.
    pub mean_abs_torque: Vector3<f64>,
    /// Boxplot scalar for position under the chosen reduce mode, mm.
    pub position_scalar: Vector3<f64>,
    /// Boxplot scalar for orientation under the chosen reduce mode, degrees.
    pub orientation_scalar: Vector3<f64>,
    pub sample_count: usize,
}

fn mean_of(values: impl Iterator<Item = Vector3<f64>>, n: usize) -> Vector3<f64> {
    values.fold(Vector3::zeros(), |acc, v| acc + v) / n as f64
}

fn signed_peak(values: impl Iterator<Item = Vector3<f64>>) -> Vector3<f64> {
    values.fold(Vector3::zeros(), |acc: Vector3<f64>, v| {
        Vector3::from_fn(|i, _| if v[i].abs() > acc[i].abs() { v[i] } else { acc[i] })
    })
}

/// Reduces one error series (and its wrench stream) to per-axis aggregates.
///
/// Wrenches are interpolated onto the series timestamps first; an empty
/// wrench slice counts as zero wrench.
pub fn aggregate_run(
    samples: &[ErrorSample],
    wrenches: &[WrenchSample],
    opts: &AggregateOptions,
) -> Result<RunAggregate, StatsError> {
    let kept = drilling_phase(samples, opts.phase_gating);
    if kept.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    let n = kept.len();
    let times: Vec<f64> = kept.iter().map(|s| s.t).collect();
    let wrench = if wrenches.is_empty() {
        times.iter().map(|&t| WrenchSample::zero(t)).collect()
    } else {
        resample_wrenches(wrenches, &times)?
    };

    let mean_deviation = mean_of(kept.iter().map(|s| s.deviation), n);
    let mean_abs_orientation = mean_of(kept.iter().map(|s| s.e_o.abs()), n);
    let mean_abs_force = mean_of(wrench.iter().map(|w| w.force.abs()), n);
    let mean_abs_torque = mean_of(wrench.iter().map(|w| w.torque.abs()), n);
    let last = kept[n - 1];
    let (position_scalar, orientation_scalar) = match opts.reduce {
        ReduceMode::Mean => (mean_deviation, mean_abs_orientation),
        ReduceMode::Max => (
            signed_peak(kept.iter().map(|s| s.deviation)),
            signed_peak(kept.iter().map(|s| s.e_o.abs())),
        ),
        ReduceMode::Final => (last.deviation, last.e_o.abs()),
    };
    let agg = RunAggregate {
        mean_deviation,
        mean_abs_orientation,
        mean_abs_force,
        mean_abs_torque,
        position_scalar,
        orientation_scalar,
        sample_count: n,
    };
    let all = [
        agg.mean_deviation,
        agg.mean_abs_orientation,
        agg.mean_abs_force,
        agg.mean_abs_torque,
        agg.position_scalar,
        agg.orientation_scalar,
    ];
    if let Some(v) = all.iter().flat_map(|v| v.iter()).find(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite(*v));
    }
    Ok(agg)
}

/// Max-normalized per-axis values of each quantity family, in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RadarSummary {
    pub position: [f64; 3],
    pub force: [f64; 3],
    pub orientation: [f64; 3],
    pub torque: [f64; 3],
}

/// Divides by the largest component; an all-zero family stays zero.
pub fn max_normalize(v: &Vector3<f64>) -> [f64; 3] {
    let m = v.amax();
    if m == 0.0 {
        [0.0; 3]
    } else {
        [v.x.abs() / m, v.y.abs() / m, v.z.abs() / m]
    }
}

pub fn radar_summary(aggregates: &[RunAggregate]) -> Result<RadarSummary, StatsError> {
    if aggregates.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    let n = aggregates.len();
    let family =
        |f: fn(&RunAggregate) -> Vector3<f64>| max_normalize(&mean_of(aggregates.iter().map(|a| f(a).abs()), n));
    Ok(RadarSummary {
        position: family(|a| a.mean_deviation),
        force: family(|a| a.mean_abs_force),
        orientation: family(|a| a.mean_abs_orientation),
        torque: family(|a| a.mean_abs_torque),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoxplotEntry {
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub whiskers: [f64; 2],
    pub outliers: Vec<f64>,
}

impl From<&BoxplotSummary> for BoxplotEntry {
    fn from(b: &BoxplotSummary) -> Self {
        BoxplotEntry {
            median: b.median,
            q1: b.q1,
            q3: b.q3,
            whiskers: [b.whisker_low, b.whisker_high],
            outliers: b.outliers.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AxisBoxplots {
    pub x: BoxplotEntry,
    pub y: BoxplotEntry,
    pub z: BoxplotEntry,
}

/// Population report; field order is the serialized key order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub run_count: usize,
    pub reduce_mode: ReduceMode,
    pub position: AxisBoxplots,
    pub orientation: AxisBoxplots,
    pub radar: RadarSummary,
    pub config_hash: String,
}

fn axis_boxplots(values: &[Vector3<f64>]) -> Result<(AxisBoxplots, [BoxplotSummary; 3]), StatsError> {
    let per_axis = |i: usize| boxplot_summary(&values.iter().map(|v| v[i]).collect::<Vec<_>>());
    let s = [per_axis(0)?, per_axis(1)?, per_axis(2)?];
    Ok((
        AxisBoxplots {
            x: (&s[0]).into(),
            y: (&s[1]).into(),
            z: (&s[2]).into(),
        },
        s,
    ))
}

/// Report plus the summaries behind its boxplots.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationReport {
    pub report: Report,
    pub position: [BoxplotSummary; 3],
    pub orientation: [BoxplotSummary; 3],
}

pub fn population_report(
    aggregates: &[RunAggregate],
    reduce: ReduceMode,
    config_hash: &str,
) -> Result<PopulationReport, StatsError> {
    if aggregates.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    let pos: Vec<_> = aggregates.iter().map(|a| a.position_scalar).collect();
    let ori: Vec<_> = aggregates.iter().map(|a| a.orientation_scalar).collect();
    let (position_json, position) = axis_boxplots(&pos)?;
    let (orientation_json, orientation) = axis_boxplots(&ori)?;
    Ok(PopulationReport {
        report: Report {
            run_count: aggregates.len(),
            reduce_mode: reduce,
            position: position_json,
            orientation: orientation_json,
            radar: radar_summary(aggregates)?,
            config_hash: config_hash.to_string(),
        },
        position,
        orientation,
    })
}

impl PopulationReport {
    pub fn json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.report).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn boxplot_csv(summaries: &[BoxplotSummary; 3]) -> String {
        let mut out = format!("{BOXPLOT_HEADER}\n");
        for (axis, b) in ["x", "y", "z"].iter().zip(summaries) {
            let outliers: Vec<String> = b.outliers.iter().map(|v| fmt_f64(*v)).collect();
            out.push_str(&format!(
                "{axis},{},{},{},{},{},{}\n",
                fmt_f64(b.median),
                fmt_f64(b.q1),
                fmt_f64(b.q3),
                fmt_f64(b.whisker_low),
                fmt_f64(b.whisker_high),
                outliers.join(";")
            ));
        }
        out
    }

    pub fn radar_csv(&self) -> String {
        let r = &self.report.radar;
        let mut out = format!("{RADAR_HEADER}\n");
        for (name, v) in [
            ("position", r.position),
            ("force", r.force),
            ("orientation", r.orientation),
            ("torque", r.torque),
        ] {
            out.push_str(&format!(
                "{name},{},{},{}\n",
                fmt_f64(v[0]),
                fmt_f64(v[1]),
                fmt_f64(v[2])
            ));
        }
        out
    }

    /// Writes the JSON report and the three plot CSVs into `dir`.
    pub fn write(&self, dir: &Path) -> io::Result<()> {
        write_atomic(&dir.join(REPORT_FILE), self.json().as_bytes())?;
        write_atomic(
            &dir.join(BOXPLOT_POSITION_FILE),
            Self::boxplot_csv(&self.position).as_bytes(),
        )?;
        write_atomic(
            &dir.join(BOXPLOT_ORIENTATION_FILE),
            Self::boxplot_csv(&self.orientation).as_bytes(),
        )?;
        write_atomic(&dir.join(RADAR_FILE), self.radar_csv().as_bytes())
    }
}
