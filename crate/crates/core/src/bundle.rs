//! End-to-end assembly: potential → drift constants → coupling geometry → rate →
//! metric table → coupling controls, plus the kinetic-scaling parameter scan.

use crate::coupling::{CouplingContext, CouplingControls, CouplingMode};
use crate::drift::{simplified_to_general, DriftConstants};
use crate::error::{Error, Result};
use crate::mc::{run_ensemble, fit_decay_rate, EnsembleConfig, InitCoupling};
use crate::metric::{
    build_metric_table, closed_form_rate, corollary_rate, optimize_rate, solve_geometry,
    CouplingGeometry, MetricTable, RateConstants,
};
use crate::model::{make_potential, ModelParams, PhaseState, Potential, PotentialKind, PotentialSpec};

/// Where the drift constants (A, λ) come from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DriftSpec {
    /// Derive from the potential's stored (𝓡, β).
    FromPotential,
    /// Derive from explicitly supplied (𝓡, β).
    Simplified { r: f64, beta: f64 },
    /// Take (A, λ) as given (custom potentials satisfying the drift condition directly).
    Direct { a: f64, lambda: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BundleOptions {
    /// Use the bisection-refined rate instead of the closed-form one.
    pub use_optimized: bool,
    pub n_grid: usize,
    /// Coupling switch width; defaults to 1e−3·R₁.
    pub xi: Option<f64>,
    /// Nonconvexity parameter for the explicit lower-bound rate; populated on the
    /// rate constants when the regime admits it.
    pub ell: Option<f64>,
    pub drift: DriftSpec,
    pub mode: CouplingMode,
}

impl Default for BundleOptions {
    fn default() -> Self {
        Self {
            use_optimized: false,
            n_grid: 4096,
            xi: None,
            ell: None,
            drift: DriftSpec::FromPotential,
            mode: CouplingMode::Adaptive,
        }
    }
}

/// Everything needed to simulate and audit one model.
#[derive(Debug, Clone)]
pub struct ModelBundle {
    pub pot: Potential,
    pub params: ModelParams,
    pub consts: DriftConstants,
    pub geometry: CouplingGeometry,
    pub rates: RateConstants,
    pub table: MetricTable,
    pub controls: CouplingControls,
}

impl ModelBundle {
    pub fn build(pot: Potential, params: ModelParams, opts: &BundleOptions) -> Result<Self> {
        let consts = match opts.drift {
            DriftSpec::FromPotential => {
                let (r, beta) = match (pot.drift_r, pot.drift_beta) {
                    (Some(r), Some(b)) => (r, b),
                    _ => {
                        return Err(Error::Config(
                            "potential carries no (R, beta); supply drift constants explicitly"
                                .into(),
                        ))
                    }
                };
                simplified_to_general(pot.lipschitz_l, r, beta, &params)?
            }
            DriftSpec::Simplified { r, beta } => {
                simplified_to_general(pot.lipschitz_l, r, beta, &params)?
            }
            DriftSpec::Direct { a, lambda } => {
                DriftConstants::new(pot.lipschitz_l, a, lambda, &params)?
            }
        };
        let geometry = solve_geometry(&consts, &params)?;
        let c = if opts.use_optimized {
            optimize_rate(&geometry, &consts, &params)?
        } else {
            closed_form_rate(&geometry, &consts, &params)
        };
        let mut rates = RateConstants::from_rate(c, &geometry, &consts, &params)?;
        if let (Some(ell), Some(r), Some(beta)) = (opts.ell, pot.drift_r, pot.drift_beta) {
            if let Ok(cr) = corollary_rate(pot.lipschitz_l, r, beta, ell, &params) {
                rates.ell = Some(ell);
                rates.lambda1 = Some(cr.lambda1);
            }
        }
        let table = build_metric_table(&geometry, c, &consts, &params, opts.n_grid)?;
        let mut controls = CouplingControls::from_geometry(&geometry, opts.xi)?;
        controls.mode = opts.mode;
        Ok(Self { pot, params, consts, geometry, rates, table, controls })
    }

    pub fn context(&self) -> CouplingContext<'_> {
        CouplingContext {
            pot: &self.pot,
            params: &self.params,
            consts: &self.consts,
            geometry: &self.geometry,
            rates: &self.rates,
            table: &self.table,
            controls: &self.controls,
        }
    }
}

/// One row of the kinetic-scaling scan at well separation a.
#[derive(Debug, Clone)]
pub struct ScanRow {
    pub a: f64,
    pub gamma: f64,
    pub c_closed: f64,
    /// Explicit lower-bound rate in its friction-free normalization; NaN when the
    /// regime preconditions fail (see `note`).
    pub c_corollary: f64,
    pub c_times_a: f64,
    /// Fitted ensemble decay rate; NaN when no empirical run was requested.
    pub empirical_rate: f64,
    pub note: Option<String>,
}

#[derive(Debug, Clone)]
pub struct ScanTable {
    pub rows: Vec<ScanRow>,
    /// The product γ·a held fixed across rows.
    pub gamma_a: f64,
}

/// Kinetic scaling of the double-well family: for each a, set L = a⁻², 𝓡 = 4a and
/// γ = (γ_base·a_base)/a, so Luγ⁻², λ, and Λ are a-invariant and the closed-form
/// rate scales as a⁻¹. The optional empirical run rescales time (dt, T), the
/// x-offsets of the initial coupling, and ξ with a, so every row resolves the same
/// dimensionless dynamics.
pub fn scaling_scan(
    base: &ModelBundle,
    a_values: &[f64],
    empirical: Option<&EnsembleConfig>,
) -> Result<ScanTable> {
    let a_base = match base.pot.kind {
        PotentialKind::IntroDoubleWell { a } => a,
        _ => {
            return Err(Error::Config(
                "scaling scan requires the double-well family with well separation a".into(),
            ))
        }
    };
    if a_values.is_empty() {
        return Err(Error::Config("scan needs at least one a value".into()));
    }
    let gamma_a = base.params.gamma * a_base;
    let ell = 2.0;
    let mut rows = Vec::with_capacity(a_values.len());
    for &a in a_values {
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::Config(format!("a must be a positive real, got {a}")));
        }
        let scale = a / a_base;
        let params = ModelParams::new(base.params.d, base.params.u, gamma_a / a)?;
        let pot = make_potential(PotentialSpec::IntroDoubleWell { a })?;
        let opts = BundleOptions { xi: None, ell: Some(ell), ..BundleOptions::default() };
        let bundle = ModelBundle::build(pot, params, &opts)?;
        let c_closed = bundle.rates.c;
        let (c_corollary, mut note) =
            match corollary_rate(1.0 / (a * a), 4.0 * a, 8.0, ell, &params) {
                Ok(cr) => (cr.scaled_form, None),
                Err(e) => (f64::NAN, Some(e.to_string())),
            };
        let empirical_rate = match empirical {
            None => f64::NAN,
            Some(cfg) => {
                let scaled_init = match &cfg.init {
                    InitCoupling::PointVsStationary { x, v } => InitCoupling::PointVsStationary {
                        x: x.iter().map(|t| t * scale).collect(),
                        v: v.clone(),
                    },
                    InitCoupling::TwoPoints { first, second } => InitCoupling::TwoPoints {
                        first: PhaseState::new(
                            first.x.iter().map(|t| t * scale).collect(),
                            first.v.clone(),
                        )?,
                        second: PhaseState::new(
                            second.x.iter().map(|t| t * scale).collect(),
                            second.v.clone(),
                        )?,
                    },
                    InitCoupling::Offset { dx, dv } => InitCoupling::Offset {
                        dx: dx.iter().map(|t| t * scale).collect(),
                        dv: dv.clone(),
                    },
                };
                let row_cfg = EnsembleConfig {
                    dt: cfg.dt * scale,
                    t_end: cfg.t_end * scale,
                    xi: bundle.controls.xi,
                    init: scaled_init,
                    ..cfg.clone()
                };
                let series = run_ensemble(&row_cfg, &bundle.context())?;
                match fit_decay_rate(&series, (0.25 * row_cfg.t_end, 0.75 * row_cfg.t_end)) {
                    Ok((rate, _)) => rate,
                    Err(e) => {
                        note = Some(match note {
                            Some(prev) => format!("{prev}; fit: {e}"),
                            None => format!("fit: {e}"),
                        });
                        f64::NAN
                    }
                }
            }
        };
        rows.push(ScanRow {
            a,
            gamma: gamma_a / a,
            c_closed,
            c_corollary,
            c_times_a: c_closed * a,
            empirical_rate,
            note,
        });
    }
    Ok(ScanTable { rows, gamma_a })
}
