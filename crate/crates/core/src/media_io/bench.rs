use std::fmt;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{load_frames_parallel, DatasetManifest, Frame, LoaderConfig};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub threads: usize,
    pub latency_ms: f64,
    pub median_ms: f64,
    /// Baseline (first row) median divided by this row's median.
    pub speedup: f64,
}

impl fmt::Display for BenchRow {
    /// `"<median> (<speedup>x)"`, e.g. `86.0 (2.70x)`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.1} ({:.2}x)", self.median_ms, self.speedup)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub configs: Vec<BenchRow>,
}

impl BenchReport {
    /// Plain-text table, one line per configuration.
    pub fn table(&self) -> String {
        let mut out = String::from("threads  latency_ms  median_ms (speedup)\n");
        for row in &self.configs {
            out.push_str(&format!(
                "{:>7}  {:>10.3}  {row}\n",
                row.threads, row.latency_ms
            ));
        }
        out
    }
}

fn median(samples: &mut [f64]) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len();
    if n % 2 == 1 {
        samples[n / 2]
    } else {
        (samples[n / 2 - 1] + samples[n / 2]) / 2.0
    }
}

/// Times loading every frame of every video once per repetition, for each
/// loader configuration. The first configuration is the speedup baseline.
///
/// Every configuration must produce the same frames as the baseline; a
/// difference is reported as an [`Error::InvariantViolation`].
pub fn bench_loader(
    manifest: &DatasetManifest,
    configs: &[LoaderConfig],
    repetitions: usize,
) -> Result<BenchReport> {
    if repetitions == 0 {
        return Err(Error::Config("repetitions must be at least 1".into()));
    }
    if configs.is_empty() {
        return Err(Error::Config(
            "at least one loader configuration is required".into(),
        ));
    }
    let paths: Vec<_> = manifest
        .videos()
        .flat_map(|v| manifest.frame_paths(v))
        .collect();

    let mut reference: Option<Vec<Frame>> = None;
    let mut rows = Vec::with_capacity(configs.len());
    for cfg in configs {
        cfg.validate()?;
        let mut samples = Vec::with_capacity(repetitions);
        for _ in 0..repetitions {
            let start = Instant::now();
            let frames = load_frames_parallel(&paths, cfg)?;
            samples.push(start.elapsed().as_secs_f64() * 1000.0);
            match &reference {
                None => reference = Some(frames),
                Some(r) if *r != frames => {
                    return Err(Error::InvariantViolation(format!(
                        "loader with {} threads returned different frames",
                        cfg.num_threads
                    )))
                }
                Some(_) => {}
            }
        }
        rows.push(BenchRow {
            threads: cfg.num_threads,
            latency_ms: cfg.injected_latency.as_secs_f64() * 1000.0,
            median_ms: median(&mut samples),
            speedup: 1.0,
        });
    }
    let baseline = rows[0].median_ms;
    for row in &mut rows {
        row.speedup = if row.median_ms > 0.0 {
            baseline / row.median_ms
        } else {
            1.0
        };
    }
    Ok(BenchReport { configs: rows })
}
