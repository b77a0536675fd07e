//! Experiment orchestration behind the `ograd` command line.

mod config;
mod verify;

use std::path::Path;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

pub use config::{ExperimentConfig, InitSpec, TargetKind, SCHEMA_VERSION};
pub use verify::{run_verify, CheckRow, Fault, VerifyOptions, VerifyReport};

use crate::ensemble::ParticleEnsemble;
use crate::error::{Error, Result};
use crate::geometry::SyntheticConstraint;
use crate::io;
use crate::metrics::{energy_distance_with, MetricSeries};
use crate::samplers::{run_sampler, RunRecord};
use crate::targets::{synthetic_ground_truth, SyntheticTarget};

/// Gaussian cloud `center + scale · N(0, I)`.
pub fn gaussian_cloud(n: usize, center: &[f64], scale: f64, seed: u64) -> Result<ParticleEnsemble> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    ParticleEnsemble::new(
        (0..n)
            .map(|_| {
                DVector::from_fn(center.len(), |k, _| {
                    center[k] + scale * rng.sample::<f64, _>(StandardNormal)
                })
            })
            .collect(),
    )
}

pub fn initial_ensemble(cfg: &ExperimentConfig) -> Result<ParticleEnsemble> {
    let n = cfg.sampler.n_particles;
    match &cfg.init {
        InitSpec::OnManifold => synthetic_ground_truth(n, cfg.init_seed()),
        InitSpec::OffManifold { center, scale } => {
            gaussian_cloud(n, center, *scale, cfg.init_seed())
        }
    }
}

pub struct ExperimentOutcome {
    pub record: RunRecord,
    pub ground_truth: ParticleEnsemble,
    /// `mae` from the run plus `energy_distance` to the ground-truth set.
    pub metrics: Vec<MetricSeries>,
}

/// Runs the configured experiment without touching the filesystem.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let TargetKind::Synthetic = cfg.target;
    let init = initial_ensemble(cfg)?;
    let record = run_sampler(&cfg.sampler, &SyntheticTarget, &SyntheticConstraint, &init)?;
    let ground_truth = synthetic_ground_truth(cfg.ground_truth_n, cfg.ground_truth_seed())?;
    let mut ed = MetricSeries::new("energy_distance");
    for snap in &record.snapshots {
        ed.push(
            snap.iteration,
            energy_distance_with(&snap.ensemble, &ground_truth, cfg.sampler.execution)?,
        )?;
    }
    let mut metrics = record.metric_series.clone();
    metrics.push(ed);
    Ok(ExperimentOutcome {
        record,
        ground_truth,
        metrics,
    })
}

/// Writes `samples.csv`, `metrics.csv` and `run.json` into `dir`.
pub fn write_outputs(
    dir: &Path,
    cfg: &ExperimentConfig,
    outcome: &ExperimentOutcome,
) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.display().to_string(),
        source,
    })?;
    io::write_samples(&dir.join("samples.csv"), outcome.record.final_ensemble())?;
    io::write_metrics(&dir.join("metrics.csv"), &outcome.metrics)?;
    let resolved = cfg.resolved();
    let meta = io::RunMetadata::new(&outcome.record, &outcome.metrics, &resolved);
    io::write_json(&dir.join("run.json"), &meta)
}
