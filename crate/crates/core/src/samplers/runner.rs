use std::time::Instant;

use super::{
    annealed_mh_with_stats, langevin_step, o_langevin_step, o_svgd_step, svgd_step, Method,
    SamplerConfig,
};
use crate::ensemble::ParticleEnsemble;
use crate::error::{Error, Result};
use crate::geometry::Constraint;
use crate::metrics::{mae, MetricSeries};
use crate::par;
use crate::targets::Target;
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

/// Identifier written into run metadata so outputs can be re-derived.
pub const RNG_ALGORITHM: &str =
    "ChaCha20Rng(rand_chacha 0.9, seed_from_u64) + StandardNormal ziggurat (rand_distr 0.5)";

#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub iteration: usize,
    pub ensemble: ParticleEnsemble,
}

#[derive(Clone, Debug)]
pub struct RunRecord {
    pub config: SamplerConfig,
    pub snapshots: Vec<Snapshot>,
    pub metric_series: Vec<MetricSeries>,
    pub warnings: Vec<String>,
    pub wall_time_secs: f64,
}

impl RunRecord {
    pub fn final_ensemble(&self) -> &ParticleEnsemble {
        &self
            .snapshots
            .last()
            .expect("a run record always holds a final snapshot")
            .ensemble
    }

    pub fn metric(&self, name: &str) -> Option<&MetricSeries> {
        self.metric_series.iter().find(|m| m.name == name)
    }

    /// Equality of everything the seed determines, ignoring wall time.
    pub fn same_outcome(&self, other: &RunRecord) -> bool {
        self.config == other.config
            && self.snapshots == other.snapshots
            && self.metric_series == other.metric_series
            && self.warnings == other.warnings
    }
}

struct Recorder<'a, C: ?Sized> {
    constraint: &'a C,
    every: usize,
    snapshots: Vec<Snapshot>,
    mae: MetricSeries,
}

impl<'a, C: Constraint + ?Sized> Recorder<'a, C> {
    fn record(&mut self, iteration: usize, ensemble: &ParticleEnsemble) -> Result<()> {
        self.mae.push(iteration, mae(ensemble, self.constraint))?;
        self.snapshots.push(Snapshot {
            iteration,
            ensemble: ensemble.clone(),
        });
        Ok(())
    }

    fn maybe_record(
        &mut self,
        iteration: usize,
        last: usize,
        ensemble: &ParticleEnsemble,
    ) -> Result<()> {
        if iteration.is_multiple_of(self.every) || iteration == last {
            self.record(iteration, ensemble)?;
        }
        Ok(())
    }
}

/// Draws one standard-normal `d`-vector per particle, in particle order.
fn draw_noise(rng: &mut ChaCha20Rng, n: usize, d: usize) -> Vec<DVector<f64>> {
    (0..n)
        .map(|_| DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal)))
        .collect()
}

/// Runs the configured sampler from `init`.
///
/// Snapshots (and the `mae` metric) are taken at iteration 0, every
/// `record_every` iterations and at the last iteration. The annealed
/// Metropolis reference records once per temperature rung instead, with
/// iterations counted in Metropolis steps.
pub fn run_sampler<T, C>(
    cfg: &SamplerConfig,
    target: &T,
    c: &C,
    init: &ParticleEnsemble,
) -> Result<RunRecord>
where
    T: Target + ?Sized,
    C: Constraint + ?Sized,
{
    let warnings = cfg.validate()?;
    init.check_dim(target.dim())?;
    init.check_dim(c.dim())?;
    if init.len() != cfg.n_particles {
        return Err(Error::InvalidConfig(format!(
            "initial ensemble has {} particles, config expects {}",
            init.len(),
            cfg.n_particles
        )));
    }
    let start = Instant::now();
    let mut rec = Recorder {
        constraint: c,
        every: cfg.record_every,
        snapshots: Vec::new(),
        mae: MetricSeries::new("mae"),
    };
    rec.record(0, init)?;

    let exec = cfg.execution;
    let n = init.len();
    let d = init.dim();
    let last = cfg.n_iters;
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let mut current = init.clone();

    match cfg.method {
        Method::Langevin | Method::OLangevin => {
            for it in 1..=last {
                let noise = draw_noise(&mut rng, n, d);
                let pts = current.points();
                let moved = par::try_map_indexed(exec, n, |i| match cfg.method {
                    Method::Langevin => Ok(langevin_step(&pts[i], target, cfg.eta, &noise[i])),
                    _ => o_langevin_step(
                        &pts[i],
                        target,
                        c,
                        cfg.eta,
                        cfg.psi,
                        cfg.second_order_free,
                        &noise[i],
                    ),
                })
                .map_err(|e| e.at_iteration(it))?;
                current = ParticleEnsemble::new(moved).map_err(|e| e.at_iteration(it))?;
                rec.maybe_record(it, last, &current)?;
            }
        }
        Method::Svgd | Method::OSvgd => {
            for it in 1..=last {
                current = match cfg.method {
                    Method::Svgd => svgd_step(&current, target, cfg.eta, &cfg.kernel, exec),
                    _ => o_svgd_step(
                        &current,
                        target,
                        c,
                        cfg.eta,
                        cfg.psi,
                        &cfg.kernel,
                        cfg.second_order_free,
                        exec,
                    ),
                }
                .map_err(|e| e.at_iteration(it))?;
                rec.maybe_record(it, last, &current)?;
            }
        }
        Method::AnnealedMh => {
            let out = annealed_mh_with_stats(target, c, &cfg.mh, init, cfg.seed, exec)?;
            let mut acc = MetricSeries::new("acceptance");
            for (k, (rung, rate)) in out.rungs.iter().zip(&out.acceptance).enumerate() {
                let it = (k + 1) * cfg.mh.steps_per_eta.max(1);
                rec.record(it, rung)?;
                acc.push(it, *rate)?;
            }
            return Ok(RunRecord {
                config: cfg.clone(),
                snapshots: rec.snapshots,
                metric_series: vec![rec.mae, acc],
                warnings,
                wall_time_secs: start.elapsed().as_secs_f64(),
            });
        }
    }

    Ok(RunRecord {
        config: cfg.clone(),
        snapshots: rec.snapshots,
        metric_series: vec![rec.mae],
        warnings,
        wall_time_secs: start.elapsed().as_secs_f64(),
    })
}
