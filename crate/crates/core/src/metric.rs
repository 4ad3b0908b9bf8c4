//! Coupling geometry (α, η, R₁, Λ), contraction rates, and the concave metric f.
//!
//! The semimetric contracted by the coupled dynamics is
//!   ρ((x,v),(x′,v′)) = f(r)·(1 + εH(x,v) + εH(x′,v′)),
//! with r = α|x−x′| + |x−x′+γ⁻¹(v−v′)| and f a concave distortion built from
//!   φ(s) = exp(−((1+η)L/8 + γ²u⁻¹ε·max(1,(2α)⁻¹)/2)·s²),
//!   Φ(s) = ∫₀ˢφ,   g(r) = 1 − (9/4)cγu⁻¹∫₀ʳΦ/φ,   f(r) = ∫₀^{r∧R₁}φg.

use crate::drift::{lyapunov_h, DriftConstants};
use crate::error::{Error, Result};
use crate::model::{ModelParams, PhaseState, Potential};

/// Relative slack on regime preconditions: thresholds like Luγ⁻² ≤ 1/30 are meant
/// to admit parameter sets that hit them exactly, and γ = √30 in floating point
/// lands one ulp off the threshold.
pub(crate) const REL_SLACK: f64 = 1e-10;

const DEFAULT_N_GRID: usize = 4096;

/// Solution of the coupled fixed point for the distance weight α and ball radius R₁:
/// α = (1+η)Luγ⁻², η = 8/(LR₁²) = Λ⁻¹, R₁ = √((1+α)²+α²)·R₀.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingGeometry {
    pub alpha: f64,
    pub eta: f64,
    pub r1: f64,
    pub big_lambda: f64,
    pub r0: f64,
}

/// Contraction rate c with its companion constants: ε couples the metric to the
/// Lyapunov function via ε(d+A) = 4c/γ; `c_wass2` is the prefactor turning
/// ρ-contraction into an L²-Wasserstein bound. `ell`/`lambda1` are populated when
/// the rate came from the explicit lower-bound formula.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateConstants {
    pub c: f64,
    pub epsilon: f64,
    pub c_wass2: f64,
    pub ell: Option<f64>,
    pub lambda1: Option<f64>,
}

impl RateConstants {
    pub fn from_rate(
        c: f64,
        geometry: &CouplingGeometry,
        consts: &DriftConstants,
        params: &ModelParams,
    ) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::Config(format!("contraction rate must be positive, got {c}")));
        }
        let epsilon = 4.0 * c / (params.gamma * (params.d as f64 + consts.a));
        Ok(Self { c, epsilon, c_wass2: wass2_formula(geometry, c, consts, params), ell: None, lambda1: None })
    }
}

fn r0_squared(consts: &DriftConstants, params: &ModelParams) -> f64 {
    let da = params.d as f64 + consts.a;
    96.0 * da * params.u / (5.0 * consts.lambda * (1.0 - 2.0 * consts.lambda) * params.gamma * params.gamma)
}

/// Damped fixed-point iteration for α. The map α ↦ (L + 8R₁(α)⁻²)uγ⁻² is monotone
/// decreasing and bounded within [Luγ⁻², (11/6)Luγ⁻²]; averaging with the identity
/// makes the iteration contractive without derivative information.
pub fn solve_geometry(consts: &DriftConstants, params: &ModelParams) -> Result<CouplingGeometry> {
    let m = params.damping_group(consts.l);
    let r0sq = r0_squared(consts, params);
    let map = |alpha: f64| -> f64 {
        let r1sq = ((1.0 + alpha) * (1.0 + alpha) + alpha * alpha) * r0sq;
        (consts.l + 8.0 / r1sq) * params.u / (params.gamma * params.gamma)
    };
    let mut alpha = m;
    let mut residual = f64::INFINITY;
    for _ in 1..=200 {
        let next = map(alpha);
        residual = (alpha - next).abs();
        if residual <= 1e-14 * alpha {
            // Finalize so the stored fields satisfy the defining identities exactly:
            // r1 from the converged α, then η = 8/(L·r1²) and α = (1+η)·m bitwise.
            alpha = next;
            let r1 = (((1.0 + alpha) * (1.0 + alpha) + alpha * alpha) * r0sq).sqrt();
            let eta = 8.0 / (consts.l * r1 * r1);
            alpha = (1.0 + eta) * m;
            return Ok(CouplingGeometry { alpha, eta, r1, big_lambda: 1.0 / eta, r0: r0sq.sqrt() });
        }
        alpha = 0.5 * (alpha + next);
    }
    Err(Error::NonConvergence { iterations: 200, residual })
}

/// Closed-form admissible rate from the contraction proof:
/// c★ = (γ/384)·min(λLuγ⁻², Λ^{1/2}e^{−Λ}Luγ⁻², Λ^{−1/2}e^{−Λ}).
pub fn closed_form_rate(geometry: &CouplingGeometry, consts: &DriftConstants, params: &ModelParams) -> f64 {
    let m = params.damping_group(consts.l);
    let lam = geometry.big_lambda;
    let decay = (-lam).exp();
    let terms = [
        consts.lambda * m,
        lam.sqrt() * decay * m,
        decay / lam.sqrt(),
    ];
    params.gamma / 384.0 * terms.iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Cumulative composite Simpson over a uniform grid with an even number of panels.
/// Odd nodes use the half-panel rule ∫₀ʰ = h(5f₀ + 8f₁ − f₂)/12 through three nodes.
fn cumulative_simpson(values: &[f64], h: f64) -> Vec<f64> {
    let n = values.len() - 1;
    debug_assert!(n >= 2 && n % 2 == 0);
    let mut out = vec![0.0; values.len()];
    let mut i = 2;
    while i <= n {
        out[i] = out[i - 2] + h / 3.0 * (values[i - 2] + 4.0 * values[i - 1] + values[i]);
        i += 2;
    }
    let mut i = 1;
    while i < n {
        out[i] = out[i - 1] + h / 12.0 * (5.0 * values[i - 1] + 8.0 * values[i] - values[i + 1]);
        i += 2;
    }
    out
}

struct MetricArrays {
    grid: Vec<f64>,
    phi: Vec<f64>,
    big_phi: Vec<f64>,
    g: Vec<f64>,
    f: Vec<f64>,
    f_prime: Vec<f64>,
    f_second: Vec<f64>,
}

fn metric_arrays(
    geometry: &CouplingGeometry,
    c: f64,
    consts: &DriftConstants,
    params: &ModelParams,
    n_grid: usize,
) -> MetricArrays {
    let epsilon = 4.0 * c / (params.gamma * (params.d as f64 + consts.a));
    let gsq_over_u = params.gamma * params.gamma / params.u;
    let big_m = 1.0f64.max(1.0 / (2.0 * geometry.alpha));
    let c_phi = (1.0 + geometry.eta) * consts.l / 8.0 + gsq_over_u * epsilon * big_m / 2.0;
    let h = geometry.r1 / n_grid as f64;
    let grid: Vec<f64> = (0..=n_grid).map(|i| i as f64 * h).collect();
    let phi: Vec<f64> = grid.iter().map(|s| (-c_phi * s * s).exp()).collect();
    let big_phi = cumulative_simpson(&phi, h);
    let ratio: Vec<f64> = big_phi.iter().zip(&phi).map(|(p, q)| p / q).collect();
    let ratio_integral = cumulative_simpson(&ratio, h);
    let g_slope = 2.25 * c * params.gamma / params.u;
    let g: Vec<f64> = ratio_integral.iter().map(|i| 1.0 - g_slope * i).collect();
    let f_prime: Vec<f64> = phi.iter().zip(&g).map(|(p, w)| p * w).collect();
    let f = cumulative_simpson(&f_prime, h);
    let f_second: Vec<f64> = grid
        .iter()
        .zip(phi.iter().zip(&g).zip(&big_phi))
        .map(|(s, ((p, w), bp))| -2.0 * c_phi * s * p * w - g_slope * bp)
        .collect();
    MetricArrays { grid, phi, big_phi, g, f, f_prime, f_second }
}

/// Tabulated metric on [0, R₁]: φ, Φ, g, f and the analytic derivatives of f.
#[derive(Debug, Clone)]
pub struct MetricTable {
    pub grid: Vec<f64>,
    pub phi: Vec<f64>,
    pub big_phi: Vec<f64>,
    pub g: Vec<f64>,
    pub f: Vec<f64>,
    pub f_prime: Vec<f64>,
    pub f_second: Vec<f64>,
    /// |f(R₁) at n_grid − f(R₁) at n_grid/2|: quadrature error estimate.
    pub quad_error: f64,
    pub alpha: f64,
    pub c: f64,
    pub epsilon: f64,
}

impl MetricTable {
    pub fn r1(&self) -> f64 {
        *self.grid.last().unwrap()
    }

    pub fn f_r1(&self) -> f64 {
        *self.f.last().unwrap()
    }

    fn interp(&self, values: &[f64], r: f64) -> f64 {
        let h = self.grid[1];
        let n = self.grid.len() - 1;
        let pos = r / h;
        let i = (pos.floor() as usize).min(n - 1);
        let t = pos - i as f64;
        values[i] * (1.0 - t) + values[i + 1] * t
    }

    /// f(r), extended constant beyond R₁; linear interpolation preserves
    /// monotonicity and underestimates the concave f between nodes.
    pub fn f_at(&self, r: f64) -> f64 {
        if r <= 0.0 {
            0.0
        } else if r >= self.r1() {
            self.f_r1()
        } else {
            self.interp(&self.f, r)
        }
    }

    /// Left derivative of f: φ·g on [0, R₁], zero beyond (f is constant there).
    pub fn f_prime_minus_at(&self, r: f64) -> f64 {
        if r <= 0.0 {
            1.0
        } else if r > self.r1() {
            0.0
        } else {
            self.interp(&self.f_prime, r)
        }
    }

    /// Second derivative (φg)′ = −2C_φ·sφg − (9/4)cγu⁻¹Φ on [0, R₁], zero beyond.
    pub fn f_second_at(&self, r: f64) -> f64 {
        if r <= 0.0 {
            0.0
        } else if r > self.r1() {
            0.0
        } else {
            self.interp(&self.f_second, r)
        }
    }
}

/// Build the metric table by cumulative Simpson quadrature on n_grid+1 nodes.
pub fn build_metric_table(
    geometry: &CouplingGeometry,
    c: f64,
    consts: &DriftConstants,
    params: &ModelParams,
    n_grid: usize,
) -> Result<MetricTable> {
    if n_grid < 256 || n_grid % 2 != 0 {
        return Err(Error::Config(format!("n_grid must be an even integer ≥ 256, got {n_grid}")));
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::Config(format!("contraction rate must be positive, got {c}")));
    }
    let fine = metric_arrays(geometry, c, consts, params, n_grid);
    if let Some((idx, bad)) = fine.g.iter().enumerate().find(|(_, w)| **w < 0.5) {
        return Err(Error::InadmissibleRate {
            c,
            reason: format!("g({:.6}) = {bad} drops below 1/2", fine.grid[idx]),
        });
    }
    let coarse = metric_arrays(geometry, c, consts, params, n_grid / 2);
    let f_r1 = *fine.f.last().unwrap();
    let quad_error = (f_r1 - coarse.f.last().unwrap()).abs();
    if quad_error > 1e-8 * f_r1 {
        return Err(Error::Numeric(format!(
            "metric quadrature error {quad_error:.3e} exceeds 1e-8·f(R₁) = {:.3e}; increase n_grid",
            1e-8 * f_r1
        )));
    }
    let epsilon = 4.0 * c / (params.gamma * (params.d as f64 + consts.a));
    Ok(MetricTable {
        grid: fine.grid,
        phi: fine.phi,
        big_phi: fine.big_phi,
        g: fine.g,
        f: fine.f,
        f_prime: fine.f_prime,
        f_second: fine.f_second,
        quad_error,
        alpha: geometry.alpha,
        c,
        epsilon,
    })
}

/// The four thresholds a contraction rate must stay below, with margins.
#[derive(Debug, Clone, Copy)]
pub struct AdmissibilityReport {
    pub c: f64,
    /// [ (2/9)uγ⁻¹/∫₀^{R₁}Φ/φ,  (γ/18)(η/(1+η))·inf sφ/Φ,  γλ/16,
    ///   (5/192)·min(1,2α)/((1+α)²+α²)·γλ(1−2λ) ]
    pub bounds: [f64; 4],
    /// bounds[i] − c; admissible iff all margins ≥ 0.
    pub margins: [f64; 4],
    pub admissible: bool,
}

/// Evaluate all four admissibility bounds at the trial rate c. φ depends on c
/// through ε, so the quadrature-based bounds are recomputed for every trial.
pub fn check_rate_admissible(
    c: f64,
    geometry: &CouplingGeometry,
    consts: &DriftConstants,
    params: &ModelParams,
) -> Result<AdmissibilityReport> {
    if !(c >= 0.0 && c.is_finite()) {
        return Err(Error::Config(format!("trial rate must be a nonnegative real, got {c}")));
    }
    let arrays = metric_arrays(geometry, c, consts, params, DEFAULT_N_GRID);
    let ratio_at_r1 = {
        let ratio: Vec<f64> = arrays.big_phi.iter().zip(&arrays.phi).map(|(p, q)| p / q).collect();
        *cumulative_simpson(&ratio, arrays.grid[1]).last().unwrap()
    };
    let b1 = 2.0 / 9.0 * params.u / params.gamma / ratio_at_r1;
    // s φ(s)/Φ(s) extends continuously to 1 at s = 0 and only decreases from there.
    let mut inf_ratio = 1.0f64;
    for i in 1..arrays.grid.len() {
        inf_ratio = inf_ratio.min(arrays.grid[i] * arrays.phi[i] / arrays.big_phi[i]);
    }
    let b2 = params.gamma / 18.0 * geometry.eta / (1.0 + geometry.eta) * inf_ratio;
    let b3 = params.gamma * consts.lambda / 16.0;
    let alpha = geometry.alpha;
    let b4 = 5.0 / 192.0 * 1.0f64.min(2.0 * alpha) / ((1.0 + alpha) * (1.0 + alpha) + alpha * alpha)
        * params.gamma
        * consts.lambda
        * (1.0 - 2.0 * consts.lambda);
    let bounds = [b1, b2, b3, b4];
    let margins = [b1 - c, b2 - c, b3 - c, b4 - c];
    Ok(AdmissibilityReport { c, bounds, margins, admissible: margins.iter().all(|m| *m >= 0.0) })
}

/// Largest admissible rate, by bisection between the proven closed-form rate and
/// the hard ceiling γλ/16, to relative precision 1e−6.
pub fn optimize_rate(geometry: &CouplingGeometry, consts: &DriftConstants, params: &ModelParams) -> Result<f64> {
    let c_star = closed_form_rate(geometry, consts, params);
    if !check_rate_admissible(c_star, geometry, consts, params)?.admissible {
        return Err(Error::InadmissibleRate {
            c: c_star,
            reason: "closed-form rate failed its own admissibility check".into(),
        });
    }
    let mut lo = c_star;
    let mut hi = params.gamma * consts.lambda / 16.0 * (1.0 + 1e-6);
    if check_rate_admissible(hi, geometry, consts, params)?.admissible {
        return Ok(hi);
    }
    while hi - lo > 1e-6 * lo {
        let mid = 0.5 * (lo + hi);
        if check_rate_admissible(mid, geometry, consts, params)?.admissible {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// The coupling distance r((x,v),(x′,v′)) = α|x−x′| + |x−x′+γ⁻¹(v−v′)|.
pub fn r_distance(alpha: f64, params: &ModelParams, p: &PhaseState, q: &PhaseState) -> Result<f64> {
    if p.dim() != q.dim() {
        return Err(Error::DimensionMismatch { expected: p.dim(), got: q.dim() });
    }
    let mut z_sq = 0.0;
    let mut q_sq = 0.0;
    for i in 0..p.dim() {
        let z = p.x[i] - q.x[i];
        let qq = z + (p.v[i] - q.v[i]) / params.gamma;
        z_sq += z * z;
        q_sq += qq * qq;
    }
    Ok(alpha * z_sq.sqrt() + q_sq.sqrt())
}

/// The contracted semimetric ρ = f(r)·(1 + εH(x,v) + εH(x′,v′)).
pub fn rho_semimetric(
    table: &MetricTable,
    rates: &RateConstants,
    consts: &DriftConstants,
    pot: &Potential,
    params: &ModelParams,
    p: &PhaseState,
    q: &PhaseState,
) -> Result<f64> {
    let r = r_distance(table.alpha, params, p, q)?;
    let h = lyapunov_h(pot, consts, params, p)?;
    let h_prime = lyapunov_h(pot, consts, params, q)?;
    Ok(table.f_at(r) * (1.0 + rates.epsilon * h + rates.epsilon * h_prime))
}

/// Explicit lower-bound rates for potentials with outward drift x·∇U ≥ β(|x|/𝓡)²
/// beyond 𝓡 ≥ follows, in both normalizations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorollaryRates {
    /// (γ/205)·min(ℓ⁻¹m², ½min(√d·m, Λ₁^{−1/2})e^{−Λ₁}), m = Luγ⁻².
    pub gamma_form: f64,
    /// (√(βu)/38)·min(…)·𝓡⁻¹: same min factor, friction eliminated via β.
    pub scaled_form: f64,
    pub lambda1: f64,
    pub ell: f64,
}

/// Evaluate the explicit rate lower bound. Requires the mildly-nonconvex regime
/// β ≥ L𝓡²/ℓ with ℓ ≥ 1 and sufficient friction Luγ⁻² ≤ 1/30.
pub fn corollary_rate(l: f64, r: f64, beta: f64, ell: f64, params: &ModelParams) -> Result<CorollaryRates> {
    if !(ell >= 1.0 && ell.is_finite()) {
        return Err(Error::Config(format!("ell must be ≥ 1, got {ell}")));
    }
    if !(l > 0.0 && r > 0.0 && beta > 0.0) {
        return Err(Error::Config("L, R, beta must all be positive".into()));
    }
    let lr2 = l * r * r;
    if beta < lr2 / ell * (1.0 - REL_SLACK) {
        return Err(Error::OutOfRegime(format!(
            "nonconvexity bound violated: beta = {beta} < L·R²/ell = {}",
            lr2 / ell
        )));
    }
    let m = params.damping_group(l);
    if m > (1.0 / 30.0) * (1.0 + REL_SLACK) {
        return Err(Error::OutOfRegime(format!(
            "friction bound violated: L·u·γ⁻² = {m} > 1/30"
        )));
    }
    let d = params.d as f64;
    let lambda1 = (ell - 1.0) * lr2 / 4.0 + 2.0 * ell * d;
    let min_factor = (m * m / ell).min(0.5 * (d.sqrt() * m).min(1.0 / lambda1.sqrt()) * (-lambda1).exp());
    Ok(CorollaryRates {
        gamma_form: params.gamma / 205.0 * min_factor,
        scaled_form: (beta * params.u).sqrt() / 38.0 * min_factor / r,
        lambda1,
        ell,
    })
}

fn wass2_formula(geometry: &CouplingGeometry, c: f64, consts: &DriftConstants, params: &ModelParams) -> f64 {
    let alpha = geometry.alpha;
    let da = params.d as f64 + consts.a;
    let quad = 1.0 + 2.0 * alpha + 2.0 * alpha * alpha;
    2.0 * (2.0 + geometry.big_lambda).exp() * (1.0 + params.gamma).powi(2) / 1.0f64.min(alpha).powi(2)
        * 1.0f64.max(4.0 * quad * da * params.u / (params.gamma * c * 1.0f64.min(geometry.r1)))
}

/// Prefactor C in the L²-Wasserstein bound W₂(law, stationary) ≤ C·e^{−ct}·(initial ρ-cost):
/// C = 2e^{2+Λ}(1+γ)²/min(1,α)²·max(1, 4(1+2α+2α²)(d+A)uγ⁻¹c⁻¹/min(1,R₁)).
pub fn wasserstein2_constant(
    geometry: &CouplingGeometry,
    rates: &RateConstants,
    consts: &DriftConstants,
    params: &ModelParams,
) -> f64 {
    wass2_formula(geometry, rates.c, consts, params)
}

/// L² spectral gap of the dynamics with U(x) = L|x|²/2:
/// c_gap = (1 − √((1 − 4Luγ⁻²)⁺))·γ/2.
pub fn gaussian_spectral_gap(l: f64, params: &ModelParams) -> Result<f64> {
    if !(l > 0.0 && l.is_finite()) {
        return Err(Error::Config(format!("L must be a positive real, got {l}")));
    }
    let m = params.damping_group(l);
    Ok((1.0 - (1.0 - 4.0 * m).max(0.0).sqrt()) * params.gamma / 2.0)
}
