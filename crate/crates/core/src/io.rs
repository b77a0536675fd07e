//! File formats: sample CSV (`x0..x{d-1}` header, one row per particle),
//! tidy metrics CSV (`iteration,metric,value`) and run metadata JSON.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use nalgebra::DVector;
use serde::Serialize;

use crate::ensemble::ParticleEnsemble;
use crate::error::{Error, Result};
use crate::metrics::MetricSeries;
use crate::samplers::{RunRecord, RNG_ALGORITHM};

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn write_samples_to<W: Write>(out: W, samples: &ParticleEnsemble) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record((0..samples.dim()).map(|k| format!("x{k}")))?;
    for p in samples.iter() {
        w.write_record(p.iter().map(|v| v.to_string()))?;
    }
    w.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}

pub fn write_samples(path: &Path, samples: &ParticleEnsemble) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    write_samples_to(file, samples)
}

pub fn read_samples_from<R: std::io::Read>(input: R) -> Result<ParticleEnsemble> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers()?.clone();
    let dim = headers.len();
    for (k, h) in headers.iter().enumerate() {
        if h.trim() != format!("x{k}") {
            return Err(Error::InvalidConfig(format!(
                "sample header column {k} is '{h}', expected 'x{k}'"
            )));
        }
    }
    let mut points = Vec::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec?;
        if rec.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: rec.len(),
            });
        }
        let values = rec
            .iter()
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::InvalidConfig(format!("row {}: '{s}': {e}", row + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        points.push(DVector::from_vec(values));
    }
    ParticleEnsemble::new(points)
}

pub fn read_samples(path: &Path) -> Result<ParticleEnsemble> {
    let file = File::open(path).map_err(io_err(path))?;
    read_samples_from(file)
}

pub fn write_metrics_to<W: Write>(out: W, series: &[MetricSeries]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["iteration", "metric", "value"])?;
    let mut rows: Vec<(usize, usize, f64)> = series
        .iter()
        .enumerate()
        .flat_map(|(k, s)| s.values.iter().map(move |&(it, v)| (it, k, v)))
        .collect();
    rows.sort_by_key(|&(it, k, _)| (it, k));
    for (it, k, v) in rows {
        w.write_record([it.to_string(), series[k].name.clone(), v.to_string()])?;
    }
    w.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}

pub fn write_metrics(path: &Path, series: &[MetricSeries]) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    write_metrics_to(file, series)
}

#[derive(Serialize)]
pub struct RunMetadata<'a, C: Serialize> {
    pub method: &'a str,
    pub eta: f64,
    pub alpha: f64,
    pub beta: f64,
    pub n_particles: usize,
    pub n_iters: usize,
    pub seed: u64,
    pub rng_algorithm: &'a str,
    pub wall_time_s: f64,
    pub metric_series: &'a [MetricSeries],
    pub warnings: &'a [String],
    /// The fully resolved configuration that produced the run.
    pub config: &'a C,
}

impl<'a, C: Serialize> RunMetadata<'a, C> {
    pub fn new(record: &'a RunRecord, metric_series: &'a [MetricSeries], config: &'a C) -> Self {
        let cfg = &record.config;
        Self {
            method: cfg.method.name(),
            eta: cfg.eta,
            alpha: cfg.psi.alpha,
            beta: cfg.psi.beta,
            n_particles: cfg.n_particles,
            n_iters: cfg.n_iters,
            seed: cfg.seed,
            rng_algorithm: RNG_ALGORITHM,
            wall_time_s: record.wall_time_secs,
            metric_series,
            warnings: &record.warnings,
            config,
        }
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    serde_json::to_writer_pretty(file, value)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::targets::synthetic_ground_truth;

    #[test]
    fn samples_csv_roundtrip_is_exact() {
        let e = synthetic_ground_truth(25, 3).unwrap();
        let mut buf = Vec::new();
        write_samples_to(&mut buf, &e).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("x0,x1\n"));
        assert_eq!(text.lines().count(), 26);
        let back = read_samples_from(buf.as_slice()).unwrap();
        assert_eq!(back, e);
    }

    #[test]
    fn bad_headers_and_rows_are_rejected() {
        assert!(read_samples_from("a,b\n1,2\n".as_bytes()).is_err());
        assert!(read_samples_from("x0,x1\n1,zz\n".as_bytes()).is_err());
        assert!(read_samples_from("x0,x1\n".as_bytes()).is_err());
    }

    #[test]
    fn metrics_csv_is_tidy() {
        let mut a = MetricSeries::new("mae");
        a.push(0, 1.0).unwrap();
        a.push(10, 0.5).unwrap();
        let mut b = MetricSeries::new("energy_distance");
        b.push(0, 2.0).unwrap();
        b.push(10, 0.25).unwrap();
        let mut buf = Vec::new();
        write_metrics_to(&mut buf, &[a, b]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "iteration,metric,value\n0,mae,1\n0,energy_distance,2\n10,mae,0.5\n10,energy_distance,0.25\n"
        );
    }
}
