//! Flat JSON experiment configuration and its translation into core types.
//!
//! Every key is optional at parse time so that requiredness checks can name the
//! missing key instead of surfacing a generic deserialization error; unknown keys
//! are rejected by serde (the error message names the offender).

use std::path::Path;

use serde::Deserialize;

use kinetic_coupler_core::bundle::{BundleOptions, DriftSpec, ModelBundle};
use kinetic_coupler_core::coupling::CouplingMode;
use kinetic_coupler_core::mc::{EnsembleConfig, InitCoupling, DEFAULT_STEP_BUDGET};
use kinetic_coupler_core::model::{
    make_potential, ModelParams, PhaseState, Potential, PotentialSpec,
};
use kinetic_coupler_core::{Error, Result};

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// One of "quadratic", "intro_double_well", "piecewise_double_well", "triple_well".
    pub potential: Option<String>,
    #[serde(rename = "L")]
    pub l: Option<f64>,
    /// Well separation of the double-well family.
    pub a: Option<f64>,
    /// Outward-drift radius 𝓡 (also the well scale of the piecewise/triple wells).
    #[serde(rename = "R")]
    pub r: Option<f64>,
    /// Outward-drift strength β; paired with `R`, exclusive with `A`/`lambda`.
    pub beta: Option<f64>,
    /// Drift offset A, supplied directly; paired with `lambda`.
    #[serde(rename = "A")]
    pub big_a: Option<f64>,
    pub lambda: Option<f64>,
    pub d: Option<usize>,
    pub u: Option<f64>,
    pub gamma: Option<f64>,
    pub use_optimized: Option<bool>,
    pub n_grid: Option<usize>,
    /// Nonconvexity parameter ℓ of the explicit lower-bound rate.
    pub ell: Option<f64>,
    pub n_pairs: Option<usize>,
    pub dt: Option<f64>,
    #[serde(rename = "T")]
    pub t_end: Option<f64>,
    pub xi: Option<f64>,
    pub seed: Option<u64>,
    /// One of "point_vs_stationary" (default), "two_points", "offset".
    pub init: Option<String>,
    pub init_x: Option<Vec<f64>>,
    pub init_v: Option<Vec<f64>>,
    pub init_x2: Option<Vec<f64>>,
    pub init_v2: Option<Vec<f64>>,
    pub init_dx: Option<Vec<f64>>,
    pub init_dv: Option<Vec<f64>>,
    pub record_every: Option<usize>,
    pub step_budget: Option<u64>,
    /// Discretization-slack multiplier for the contraction audit.
    pub kappa: Option<f64>,
    pub out_dir: Option<String>,
    /// Subset of ["text", "csv"]; defaults to both.
    pub formats: Option<Vec<String>>,
    /// Make `scan` fit an empirical rate per row (runs one ensemble per value).
    pub scan_empirical: Option<bool>,
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read config file {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("invalid config {}: {e}", path.display())))
}

fn require<T: Copy>(value: Option<T>, key: &str) -> Result<T> {
    value.ok_or_else(|| Error::Config(format!("missing required key `{key}`")))
}

impl ExperimentConfig {
    pub fn model_params(&self) -> Result<ModelParams> {
        ModelParams::new(
            require(self.d, "d")?,
            require(self.u, "u")?,
            require(self.gamma, "gamma")?,
        )
    }

    pub fn potential(&self) -> Result<Potential> {
        let name = self
            .potential
            .as_deref()
            .ok_or_else(|| Error::Config("missing required key `potential`".into()))?;
        let spec = match name {
            "quadratic" => PotentialSpec::Quadratic { l: require(self.l, "L")?, r: self.r },
            "intro_double_well" => PotentialSpec::IntroDoubleWell { a: require(self.a, "a")? },
            "piecewise_double_well" => PotentialSpec::PiecewiseDoubleWell {
                l: require(self.l, "L")?,
                r: require(self.r, "R")?,
            },
            "triple_well" => {
                PotentialSpec::TripleWell { l: require(self.l, "L")?, r: require(self.r, "R")? }
            }
            other => {
                return Err(Error::Config(format!(
                    "unknown `potential` {other:?}; expected quadratic, intro_double_well, \
                     piecewise_double_well, or triple_well"
                )))
            }
        };
        make_potential(spec)
    }

    /// Exactly one of {R, beta} / {A, lambda} selects the drift constants; with
    /// neither, the potential's own (𝓡, β) are used.
    pub fn drift_spec(&self) -> Result<DriftSpec> {
        let direct = self.big_a.is_some() || self.lambda.is_some();
        if direct && self.beta.is_some() {
            return Err(Error::Config(
                "keys `beta` and `A`/`lambda` are mutually exclusive: supply (R, beta) \
                 or (A, lambda), not both"
                    .into(),
            ));
        }
        if direct {
            return Ok(DriftSpec::Direct {
                a: require(self.big_a, "A")?,
                lambda: require(self.lambda, "lambda")?,
            });
        }
        match (self.r, self.beta) {
            (Some(r), Some(beta)) => Ok(DriftSpec::Simplified { r, beta }),
            (None, Some(_)) => Err(Error::Config("`beta` given without `R`".into())),
            _ => Ok(DriftSpec::FromPotential),
        }
    }

    /// ℓ defaults to the natural value of the chosen family: 2 for the double well
    /// (β = L𝓡²/2), 1 otherwise.
    pub fn ell_value(&self) -> f64 {
        self.ell.unwrap_or(match self.potential.as_deref() {
            Some("intro_double_well") => 2.0,
            _ => 1.0,
        })
    }

    pub fn bundle_options(&self) -> Result<BundleOptions> {
        Ok(BundleOptions {
            use_optimized: self.use_optimized.unwrap_or(false),
            n_grid: self.n_grid.unwrap_or(4096),
            xi: self.xi,
            ell: Some(self.ell_value()),
            drift: self.drift_spec()?,
            mode: CouplingMode::Adaptive,
        })
    }

    pub fn build_bundle(&self) -> Result<ModelBundle> {
        ModelBundle::build(self.potential()?, self.model_params()?, &self.bundle_options()?)
    }

    /// `seed_override` comes from `--seed`; it wins over the config key, which in
    /// turn defaults to 0 — never wall-clock entropy.
    pub fn ensemble_config(
        &self,
        bundle: &ModelBundle,
        seed_override: Option<u64>,
    ) -> Result<EnsembleConfig> {
        Ok(EnsembleConfig {
            n_pairs: self.n_pairs.unwrap_or(2000),
            dt: self.dt.unwrap_or(1e-3),
            t_end: self.t_end.unwrap_or(20.0),
            xi: bundle.controls.xi,
            seed: seed_override.or(self.seed).unwrap_or(0),
            init: self.init_coupling(bundle.params.d)?,
            record_every: self.record_every.unwrap_or(500),
            step_budget: self.step_budget.unwrap_or(DEFAULT_STEP_BUDGET),
        })
    }

    fn vec_key(key: &str, given: &Option<Vec<f64>>, d: usize, default: Vec<f64>) -> Result<Vec<f64>> {
        match given {
            None => Ok(default),
            Some(v) if v.len() == d => Ok(v.clone()),
            Some(v) => {
                Err(Error::Config(format!("`{key}` must have length d = {d}, got {}", v.len())))
            }
        }
    }

    fn init_coupling(&self, d: usize) -> Result<InitCoupling> {
        let zeros = vec![0.0; d];
        let spike = |s: f64| {
            let mut x = vec![0.0; d];
            x[0] = s;
            x
        };
        match self.init.as_deref().unwrap_or("point_vs_stationary") {
            "point_vs_stationary" => Ok(InitCoupling::PointVsStationary {
                x: Self::vec_key("init_x", &self.init_x, d, spike(5.0))?,
                v: Self::vec_key("init_v", &self.init_v, d, zeros)?,
            }),
            "two_points" => Ok(InitCoupling::TwoPoints {
                first: PhaseState::new(
                    Self::vec_key("init_x", &self.init_x, d, spike(5.0))?,
                    Self::vec_key("init_v", &self.init_v, d, zeros.clone())?,
                )?,
                second: PhaseState::new(
                    Self::vec_key("init_x2", &self.init_x2, d, zeros.clone())?,
                    Self::vec_key("init_v2", &self.init_v2, d, zeros)?,
                )?,
            }),
            "offset" => Ok(InitCoupling::Offset {
                dx: Self::vec_key("init_dx", &self.init_dx, d, spike(1.0))?,
                dv: Self::vec_key("init_dv", &self.init_dv, d, zeros)?,
            }),
            other => Err(Error::Config(format!(
                "unknown `init` {other:?}; expected point_vs_stationary, two_points, or offset"
            ))),
        }
    }

    /// Returns (emit text, emit csv).
    pub fn formats(&self) -> Result<(bool, bool)> {
        match &self.formats {
            None => Ok((true, true)),
            Some(list) => {
                let (mut text, mut csv) = (false, false);
                for entry in list {
                    match entry.as_str() {
                        "text" => text = true,
                        "csv" => csv = true,
                        other => {
                            return Err(Error::Config(format!(
                                "unknown `formats` entry {other:?}; expected \"text\" or \"csv\""
                            )))
                        }
                    }
                }
                Ok((text, csv))
            }
        }
    }
}
