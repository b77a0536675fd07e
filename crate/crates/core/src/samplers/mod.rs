//! Particle and chain update rules and the run loop that drives them.

mod langevin;
mod mh;
mod runner;
mod svgd;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::PsiParams;
use crate::kernels::KernelSpec;
use crate::par::Execution;

pub use langevin::{langevin_step, o_langevin_step};
pub use mh::{
    annealed_mh_reference, annealed_mh_with_stats, mh_acceptance_probability, MhConfig, MhOutcome,
};
pub use runner::{run_sampler, RunRecord, Snapshot, RNG_ALGORITHM};
pub use svgd::{o_svgd_step, o_svgd_velocities, svgd_step, svgd_velocities};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Langevin,
    OLangevin,
    Svgd,
    OSvgd,
    AnnealedMh,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Langevin => "langevin",
            Method::OLangevin => "o_langevin",
            Method::Svgd => "svgd",
            Method::OSvgd => "o_svgd",
            Method::AnnealedMh => "annealed_mh",
        }
    }

    /// Whether the update uses the drift `ψ`.
    pub fn is_constrained(self) -> bool {
        matches!(self, Method::OLangevin | Method::OSvgd)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub method: Method,
    /// Step size.
    pub eta: f64,
    #[serde(default)]
    pub psi: PsiParams,
    pub n_particles: usize,
    pub n_iters: usize,
    pub seed: u64,
    #[serde(default)]
    pub kernel: KernelSpec,
    #[serde(default)]
    pub second_order_free: bool,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
    #[serde(default)]
    pub execution: Execution,
    #[serde(default)]
    pub mh: MhConfig,
}

fn default_record_every() -> usize {
    100
}

impl SamplerConfig {
    /// Step size and drift used for the synthetic task: `α = 100`, `β = 0`,
    /// `η = 0.01` for O-Langevin and `η = 0.5` for O-SVGD.
    pub fn synthetic_defaults(method: Method) -> Self {
        let eta = match method {
            Method::OSvgd | Method::Svgd => 0.5,
            _ => 0.01,
        };
        Self {
            method,
            eta,
            psi: PsiParams::default(),
            n_particles: 50,
            n_iters: 5000,
            seed: 0,
            kernel: KernelSpec::default(),
            second_order_free: false,
            record_every: default_record_every(),
            execution: Execution::default(),
            mh: MhConfig::default(),
        }
    }

    /// Checks the configuration and returns any stability warnings.
    ///
    /// For `β = 0` the noiseless constraint recursion is `g ← (1 - ηα) g`:
    /// `ηα > 1` overshoots the level set (warning), `ηα > 2` diverges (error).
    pub fn validate(&self) -> Result<Vec<String>> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "step size eta must be positive, got {}",
                self.eta
            )));
        }
        if self.n_particles == 0 {
            return Err(Error::InvalidConfig("n_particles must be >= 1".into()));
        }
        if self.record_every == 0 {
            return Err(Error::InvalidConfig("record_every must be >= 1".into()));
        }
        self.psi.validate()?;
        self.kernel.validate()?;
        if self.method == Method::AnnealedMh {
            self.mh.validate()?;
        }
        let mut warnings = Vec::new();
        if self.method.is_constrained() && self.psi.beta == 0.0 {
            let product = self.eta * self.psi.alpha;
            if product > 2.0 {
                return Err(Error::UnstableStepSize { product });
            }
            if product > 1.0 {
                warnings.push(format!(
                    "eta*alpha = {product} > 1: the constraint recursion overshoots the level set"
                ));
            }
        }
        Ok(warnings)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stability_rule() {
        let mut cfg = SamplerConfig::synthetic_defaults(Method::OLangevin);
        assert!(cfg.validate().unwrap().is_empty());
        cfg.eta = 0.015;
        assert_eq!(cfg.validate().unwrap().len(), 1);
        cfg.eta = 0.03;
        assert!(matches!(
            cfg.validate(),
            Err(Error::UnstableStepSize { .. })
        ));
        cfg.psi.beta = 0.5;
        assert!(cfg.validate().unwrap().is_empty());

        let svgd = SamplerConfig::synthetic_defaults(Method::Svgd);
        assert!(svgd.validate().unwrap().is_empty());
    }

    #[test]
    fn rejects_bad_fields() {
        let base = SamplerConfig::synthetic_defaults(Method::OLangevin);
        let mut c = base.clone();
        c.eta = 0.0;
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.record_every = 0;
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.psi.alpha = -1.0;
        assert!(c.validate().is_err());
        let mut c = base;
        c.method = Method::AnnealedMh;
        c.mh.eta_schedule = vec![0.1, 0.2];
        assert!(matches!(c.validate(), Err(Error::BadSchedule(_))));
    }

    #[test]
    fn config_json_roundtrip() {
        let cfg = SamplerConfig::synthetic_defaults(Method::OSvgd);
        let text = serde_json::to_string(&cfg).unwrap();
        let back: SamplerConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(cfg, back);
    }
}
