//! Multi-seed batches, aggregate statistics and report files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::sim::{metrics, run_episode, Metrics, Scenario, SimError};

/// One episode of a batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRow {
    pub index: usize,
    pub seed: u64,
    pub success: bool,
    pub collided: bool,
    pub timed_out: bool,
    pub steps: u32,
    pub replans: u32,
    pub waits: u32,
    pub wait_count_aware: usize,
    pub wait_sum_aware: f64,
    pub wait_count_nonaware: usize,
    pub wait_sum_nonaware: f64,
    pub min_distance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub scenario: String,
    pub seed_base: u64,
    pub n_episodes: usize,
    pub n_success: usize,
    pub n_collided: usize,
    pub n_timed_out: usize,
    pub success_rate: f64,
    /// Over successful episodes only.
    pub mean_steps: Option<f64>,
    pub std_steps: Option<f64>,
    pub mean_wait_dist_aware: Option<f64>,
    pub mean_wait_dist_nonaware: Option<f64>,
    pub rows: Vec<EpisodeRow>,
    pub wait_samples_aware: Vec<f64>,
    pub wait_samples_nonaware: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Json,
    Csv,
    Plotdata,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(Self::Json),
            "csv" => Ok(Self::Csv),
            "plotdata" => Ok(Self::Plotdata),
            other => Err(format!("unknown format {other:?} (expected json, csv or plotdata)")),
        }
    }
}

fn row(index: usize, seed: u64, m: &Metrics) -> EpisodeRow {
    EpisodeRow {
        index,
        seed,
        success: m.success,
        collided: m.collided,
        timed_out: m.timed_out,
        steps: m.ticks,
        replans: m.replans,
        waits: m.waits,
        wait_count_aware: m.wait_distances_aware.len(),
        wait_sum_aware: m.wait_distances_aware.iter().fold(0.0, |a, x| a + x),
        wait_count_nonaware: m.wait_distances_nonaware.len(),
        wait_sum_nonaware: m.wait_distances_nonaware.iter().fold(0.0, |a, x| a + x),
        min_distance: m.min_distance,
    }
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().fold(0.0, |a, x| a + x) / xs.len() as f64)
}

/// Sample standard deviation; 0 for a single value.
fn std_dev(xs: &[f64]) -> Option<f64> {
    let m = mean(xs)?;
    if xs.len() < 2 {
        return Some(0.0);
    }
    let ss: f64 = xs.iter().map(|x| (x - m).powi(2)).sum();
    Some((ss / (xs.len() - 1) as f64).sqrt())
}

/// Aggregates per-episode metrics, given in episode order.
pub fn aggregate(scenario: &str, seed_base: u64, episodes: &[Metrics]) -> BatchReport {
    let rows: Vec<EpisodeRow> = episodes
        .iter()
        .enumerate()
        .map(|(k, m)| row(k, seed_base.wrapping_add(k as u64), m))
        .collect();
    let ok: Vec<&Metrics> = episodes.iter().filter(|m| m.success).collect();
    let steps: Vec<f64> = ok.iter().map(|m| f64::from(m.ticks)).collect();
    let wait_samples_aware: Vec<f64> = ok.iter().flat_map(|m| m.wait_distances_aware.iter().copied()).collect();
    let wait_samples_nonaware: Vec<f64> = ok.iter().flat_map(|m| m.wait_distances_nonaware.iter().copied()).collect();
    let n = episodes.len();
    BatchReport {
        scenario: scenario.to_string(),
        seed_base,
        n_episodes: n,
        n_success: ok.len(),
        n_collided: episodes.iter().filter(|m| m.collided).count(),
        n_timed_out: episodes.iter().filter(|m| m.timed_out).count(),
        success_rate: if n == 0 { 0.0 } else { ok.len() as f64 / n as f64 },
        mean_steps: mean(&steps),
        std_steps: std_dev(&steps),
        mean_wait_dist_aware: mean(&wait_samples_aware),
        mean_wait_dist_nonaware: mean(&wait_samples_nonaware),
        rows,
        wait_samples_aware,
        wait_samples_nonaware,
    }
}

/// Runs episodes with seeds `seed_base..seed_base + n` in parallel.
pub fn run_batch(scenario: &Arc<Scenario>, n: usize, seed_base: u64) -> Result<BatchReport, SimError> {
    let episodes: Vec<Metrics> = (0..n)
        .into_par_iter()
        .map(|k| run_episode(scenario, seed_base.wrapping_add(k as u64)).map(|log| metrics(&log)))
        .collect::<Result<_, _>>()?;
    Ok(aggregate(&scenario.config.name, seed_base, &episodes))
}

/// Loads a scenario file and runs a batch on it.
pub fn run_batch_file(path: &Path, n: usize, seed_base: u64) -> Result<BatchReport, SimError> {
    let scenario = Arc::new(Scenario::load(path)?);
    run_batch(&scenario, n, seed_base)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_width: f64,
    /// Left edge of each bin.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

/// Bins `xs` into `[k·w, (k+1)·w)` from 0 up to the largest sample.
pub fn histogram(xs: &[f64], bin_width: f64) -> Histogram {
    let top = xs.iter().fold(0.0f64, |a, &x| a.max(x));
    let n_bins = if xs.is_empty() { 0 } else { (top / bin_width).floor() as usize + 1 };
    let mut counts = vec![0; n_bins];
    for &x in xs {
        counts[((x.max(0.0) / bin_width).floor() as usize).min(n_bins - 1)] += 1;
    }
    Histogram {
        bin_width,
        edges: (0..n_bins).map(|k| k as f64 * bin_width).collect(),
        counts,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotData {
    pub steps: Histogram,
    pub wait_dist_aware: Histogram,
    pub wait_dist_nonaware: Histogram,
}

pub const DISTANCE_BIN_M: f64 = 0.25;

pub fn plot_data(report: &BatchReport) -> PlotData {
    let steps: Vec<f64> = report.rows.iter().filter(|r| r.success).map(|r| f64::from(r.steps)).collect();
    PlotData {
        steps: histogram(&steps, 1.0),
        wait_dist_aware: histogram(&report.wait_samples_aware, DISTANCE_BIN_M),
        wait_dist_nonaware: histogram(&report.wait_samples_nonaware, DISTANCE_BIN_M),
    }
}

pub fn write_csv<W: Write>(report: &BatchReport, w: W) -> Result<(), SimError> {
    let io = |e: csv::Error| SimError::Io(e.to_string());
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    out.write_record([
        "index",
        "seed",
        "success",
        "collided",
        "timed_out",
        "steps",
        "replans",
        "waits",
        "wait_count_aware",
        "wait_sum_aware",
        "wait_count_nonaware",
        "wait_sum_nonaware",
        "min_distance",
    ])
    .map_err(io)?;
    for r in &report.rows {
        out.serialize(r).map_err(io)?;
    }
    out.flush().map_err(|e| SimError::Io(e.to_string()))
}

pub fn read_csv_rows<R: std::io::Read>(r: R) -> Result<Vec<EpisodeRow>, SimError> {
    csv::Reader::from_reader(r)
        .deserialize()
        .collect::<Result<_, _>>()
        .map_err(|e| SimError::Io(e.to_string()))
}

/// Writes `report` in the given format.
pub fn write_report<W: Write>(report: &BatchReport, format: ReportFormat, mut w: W) -> Result<(), SimError> {
    let json = |e: serde_json::Error| SimError::Io(e.to_string());
    match format {
        ReportFormat::Json => serde_json::to_writer_pretty(&mut w, report).map_err(json)?,
        ReportFormat::Csv => return write_csv(report, w),
        ReportFormat::Plotdata => serde_json::to_writer_pretty(&mut w, &plot_data(report)).map_err(json)?,
    }
    w.write_all(b"\n").map_err(|e| SimError::Io(e.to_string()))
}

/// Writes `report` to the file `out`.
pub fn emit_report(report: &BatchReport, format: ReportFormat, out: &Path) -> Result<(), SimError> {
    let io = |e: std::io::Error| SimError::Io(format!("{}: {e}", out.display()));
    let mut w = BufWriter::new(File::create(out).map_err(io)?);
    write_report(report, format, &mut w)?;
    w.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{MapSource, ScenarioConfig};
    use proptest::prelude::*;

    fn m(success: bool, ticks: u32, aware: &[f64], nonaware: &[f64]) -> Metrics {
        Metrics {
            ticks,
            steps_to_goal: success.then_some(ticks),
            success,
            collided: !success,
            wait_distances_aware: aware.to_vec(),
            wait_distances_nonaware: nonaware.to_vec(),
            ..Metrics::default()
        }
    }

    fn empty_scenario() -> Arc<Scenario> {
        let cfg = ScenarioConfig {
            name: "empty".into(),
            ..ScenarioConfig::from_json(r#"{"map":{"empty":{"width":10,"height":10}},"start":[0,0],"goal":[7,0]}"#).unwrap()
        };
        assert!(matches!(cfg.map, MapSource::Empty { .. }));
        Arc::new(Scenario::from_config(cfg, Path::new(".")).unwrap())
    }

    #[test]
    fn single_empty_episode() {
        let r = run_batch(&empty_scenario(), 1, 0).unwrap();
        assert_eq!(r.mean_steps, Some(7.0));
        assert_eq!(r.std_steps, Some(0.0));
        assert_eq!(r.success_rate, 1.0);
    }

    #[test]
    fn failures_are_excluded_from_means() {
        let r = aggregate("x", 0, &[m(true, 10, &[1.0], &[2.0]), m(false, 3, &[0.1], &[])]);
        assert_eq!(r.mean_steps, Some(10.0));
        assert_eq!(r.mean_wait_dist_aware, Some(1.0));
        assert_eq!(r.success_rate, 0.5);
        assert_eq!(r.n_collided, 1);
    }

    #[test]
    fn empty_batch_files_are_valid() {
        let r = aggregate("x", 0, &[]);
        let dir = tempfile::tempdir().unwrap();
        for f in [ReportFormat::Json, ReportFormat::Csv, ReportFormat::Plotdata] {
            let p = dir.path().join(format!("{f:?}"));
            emit_report(&r, f, &p).unwrap();
        }
        let rows = read_csv_rows(File::open(dir.path().join("Csv")).unwrap()).unwrap();
        assert!(rows.is_empty());
        let text = std::fs::read_to_string(dir.path().join("Csv")).unwrap();
        assert!(text.starts_with("index,seed,"));
        let back: BatchReport = serde_json::from_str(&std::fs::read_to_string(dir.path().join("Json")).unwrap()).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn three_row_csv() {
        let r = aggregate("x", 5, &[m(true, 9, &[], &[]), m(true, 11, &[1.5], &[]), m(false, 2, &[], &[])]);
        let mut buf = Vec::new();
        write_csv(&r, &mut buf).unwrap();
        let rows = read_csv_rows(buf.as_slice()).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows, r.rows);
        assert_eq!(rows[2].seed, 7);
    }

    #[test]
    fn unwritable_destination() {
        let r = aggregate("x", 0, &[]);
        let e = emit_report(&r, ReportFormat::Json, Path::new("/nonexistent-dir/report.json"));
        assert!(matches!(e, Err(SimError::Io(_))));
    }

    fn arb_metrics() -> impl Strategy<Value = Metrics> {
        (
            any::<bool>(),
            1u32..60,
            prop::collection::vec(0.0f64..6.0, 0..5),
            prop::collection::vec(0.0f64..6.0, 0..5),
        )
            .prop_map(|(s, t, a, n)| m(s, t, &a, &n))
    }

    proptest! {
        #[test]
        fn aggregates_recompute_from_rows(eps in prop::collection::vec(arb_metrics(), 0..12)) {
            let r = aggregate("p", 3, &eps);
            let mut buf = Vec::new();
            write_csv(&r, &mut buf).unwrap();
            let rows = read_csv_rows(buf.as_slice()).unwrap();
            let ok: Vec<&EpisodeRow> = rows.iter().filter(|r| r.success).collect();
            let steps: Vec<f64> = ok.iter().map(|r| f64::from(r.steps)).collect();
            let close = |a: Option<f64>, b: Option<f64>| match (a, b) {
                (Some(x), Some(y)) => (x - y).abs() <= 1e-9,
                (None, None) => true,
                _ => false,
            };
            prop_assert!(close(r.mean_steps, mean(&steps)));
            prop_assert!(r.std_steps.is_none_or(|s| s >= 0.0));
            let (ca, sa) = ok.iter().fold((0, 0.0), |(c, s), r| (c + r.wait_count_aware, s + r.wait_sum_aware));
            let (cn, sn) = ok.iter().fold((0, 0.0), |(c, s), r| (c + r.wait_count_nonaware, s + r.wait_sum_nonaware));
            prop_assert!(close(r.mean_wait_dist_aware, (ca > 0).then(|| sa / ca as f64)));
            prop_assert!(close(r.mean_wait_dist_nonaware, (cn > 0).then(|| sn / cn as f64)));
            if !rows.is_empty() {
                prop_assert!((r.success_rate - ok.len() as f64 / rows.len() as f64).abs() <= 1e-12);
            }
        }

        #[test]
        fn histogram_counts_sum_to_samples(xs in prop::collection::vec(0.0f64..10.0, 0..50), w in 0.1f64..2.0) {
            let h = histogram(&xs, w);
            prop_assert_eq!(h.counts.iter().sum::<usize>(), xs.len());
            for (k, &e) in h.edges.iter().enumerate() {
                let n = xs.iter().filter(|&&x| x >= e && (x < e + w || k + 1 == h.edges.len())).count();
                prop_assert_eq!(n, h.counts[k]);
            }
        }
    }
}
