//! The coupled SDE: two copies of the dynamics driven by reflection/synchronous
//! blended noise, its Euler–Maruyama transition, and the pathwise drift quantity K
//! controlling the supermartingale property of e^{ct}ρ.

use crate::drift::{lyapunov_h, DriftConstants};
use crate::error::{Error, Result};
use crate::metric::{r_distance, CouplingGeometry, MetricTable, RateConstants};
use crate::model::{dot, norm, potential_eval, ModelParams, PhaseState, Potential};
use crate::noise::{noise_increment, NoiseIncrement};

/// Two copies of the dynamics at a common time.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledState {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub x2: Vec<f64>,
    pub v2: Vec<f64>,
    pub t: f64,
}

impl CoupledState {
    pub fn new(first: PhaseState, second: PhaseState) -> Result<Self> {
        if first.dim() != second.dim() {
            return Err(Error::DimensionMismatch { expected: first.dim(), got: second.dim() });
        }
        Ok(Self { x: first.x, v: first.v, x2: second.x, v2: second.v, t: 0.0 })
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    pub fn first(&self) -> PhaseState {
        PhaseState { x: self.x.clone(), v: self.v.clone() }
    }

    pub fn second(&self) -> PhaseState {
        PhaseState { x: self.x2.clone(), v: self.v2.clone() }
    }

    /// Z = x − x′.
    pub fn z(&self) -> Vec<f64> {
        self.x.iter().zip(&self.x2).map(|(a, b)| a - b).collect()
    }

    /// W = v − v′.
    pub fn w(&self) -> Vec<f64> {
        self.v.iter().zip(&self.v2).map(|(a, b)| a - b).collect()
    }

    /// Q = Z + γ⁻¹W.
    pub fn q(&self, gamma: f64) -> Vec<f64> {
        (0..self.dim())
            .map(|i| self.x[i] - self.x2[i] + (self.v[i] - self.v2[i]) / gamma)
            .collect()
    }
}

/// How the reflection weight rc is chosen at each step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CouplingMode {
    /// rc from the clamp construction (the coupling actually analysed).
    Adaptive,
    /// rc ≡ 1: pure reflection coupling, for marginal-law checks.
    ForcedReflection,
    /// rc ≡ 0: pure synchronous coupling.
    ForcedSynchronous,
}

/// Runtime knobs of the coupling: switching width ξ, the ball radius R₁ and weight α
/// of the distance r, and the zero test for |Q|.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingControls {
    pub xi: f64,
    pub r1: f64,
    pub alpha: f64,
    pub q_floor: f64,
    pub mode: CouplingMode,
}

impl CouplingControls {
    pub fn new(xi: f64, r1: f64, alpha: f64) -> Result<Self> {
        if !(xi > 0.0 && xi.is_finite()) {
            return Err(Error::Config(format!("xi must be a positive real, got {xi}")));
        }
        if !(r1 > 0.0 && alpha > 0.0) {
            return Err(Error::Config("R1 and alpha must be positive".into()));
        }
        Ok(Self { xi, r1, alpha, q_floor: 1e-300, mode: CouplingMode::Adaptive })
    }

    /// Controls matching a solved geometry; ξ defaults to 1e−3·R₁.
    pub fn from_geometry(geometry: &CouplingGeometry, xi: Option<f64>) -> Result<Self> {
        Self::new(xi.unwrap_or(1e-3 * geometry.r1), geometry.r1, geometry.alpha)
    }
}

/// The reflection/synchronous blend (rc, sc) with rc² + sc² = 1:
/// rc = clamp(|q|/ξ, 0, 1)·clamp((R₁+ξ−r)/ξ, 0, 1), where q = z + γ⁻¹w and
/// r = α|z| + |q|. rc vanishes when q = 0 or r ≥ R₁+ξ and equals 1 when
/// |q| ≥ ξ and r ≤ R₁.
pub fn rc_sc(z: &[f64], w: &[f64], controls: &CouplingControls, params: &ModelParams) -> Result<(f64, f64)> {
    if z.len() != w.len() {
        return Err(Error::DimensionMismatch { expected: z.len(), got: w.len() });
    }
    match controls.mode {
        CouplingMode::ForcedReflection => return Ok((1.0, 0.0)),
        CouplingMode::ForcedSynchronous => return Ok((0.0, 1.0)),
        CouplingMode::Adaptive => {}
    }
    let q: Vec<f64> = z.iter().zip(w).map(|(zi, wi)| zi + wi / params.gamma).collect();
    let abs_q = norm(&q);
    let r = controls.alpha * norm(z) + abs_q;
    let rc = (abs_q / controls.xi).clamp(0.0, 1.0)
        * ((controls.r1 + controls.xi - r) / controls.xi).clamp(0.0, 1.0);
    Ok((rc, (1.0 - rc * rc).sqrt()))
}

/// v − 2e(e·v): Householder reflection across the hyperplane orthogonal to e.
pub(crate) fn householder_reflect(e: &[f64], v: &[f64]) -> Vec<f64> {
    let proj = 2.0 * dot(e, v);
    v.iter().zip(e).map(|(vi, ei)| vi - proj * ei).collect()
}

/// One explicit Euler–Maruyama step of the coupled SDE. Drift terms and the
/// coupling weights are evaluated at the pre-step state; the second copy's
/// reflection noise is dB_rc reflected across e = Q/|Q| (e = 0 when |Q| ≤ q_floor).
pub fn coupled_step(
    state: &CoupledState,
    pot: &Potential,
    params: &ModelParams,
    controls: &CouplingControls,
    dt: f64,
    noise: &NoiseIncrement,
) -> Result<CoupledState> {
    let d = state.dim();
    if noise.d_b_rc.len() != d || noise.d_b_sc.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: noise.d_b_rc.len() });
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Config(format!("dt must be a positive real, got {dt}")));
    }
    let z = state.z();
    let w = state.w();
    let (rc, sc) = rc_sc(&z, &w, controls, params)?;
    let q = state.q(params.gamma);
    let abs_q = norm(&q);
    let reflected = if abs_q <= controls.q_floor {
        noise.d_b_rc.clone()
    } else {
        let e: Vec<f64> = q.iter().map(|qi| qi / abs_q).collect();
        householder_reflect(&e, &noise.d_b_rc)
    };
    let (_, grad1) = potential_eval(pot, &state.x)?;
    let (_, grad2) = potential_eval(pot, &state.x2)?;
    let scale = (2.0 * params.gamma * params.u).sqrt();
    let gamma = params.gamma;
    let u = params.u;
    let mut next = CoupledState {
        x: vec![0.0; d],
        v: vec![0.0; d],
        x2: vec![0.0; d],
        v2: vec![0.0; d],
        t: state.t + dt,
    };
    for i in 0..d {
        next.x[i] = state.x[i] + state.v[i] * dt;
        next.v[i] = state.v[i] - (gamma * state.v[i] + u * grad1[i]) * dt
            + scale * (rc * noise.d_b_rc[i] + sc * noise.d_b_sc[i]);
        next.x2[i] = state.x2[i] + state.v2[i] * dt;
        next.v2[i] = state.v2[i] - (gamma * state.v2[i] + u * grad2[i]) * dt
            + scale * (rc * reflected[i] + sc * noise.d_b_sc[i]);
    }
    let finite = next.x.iter().chain(&next.v).chain(&next.x2).chain(&next.v2).all(|t| t.is_finite());
    if !finite {
        return Err(Error::BlowUp { step: (next.t / dt).round() as u64 });
    }
    Ok(next)
}

/// Immutable context shared by the pair simulation and diagnostics.
#[derive(Clone, Copy)]
pub struct CouplingContext<'a> {
    pub pot: &'a Potential,
    pub params: &'a ModelParams,
    pub consts: &'a DriftConstants,
    pub geometry: &'a CouplingGeometry,
    pub rates: &'a RateConstants,
    pub table: &'a MetricTable,
    pub controls: &'a CouplingControls,
}

/// The drift bound of the coupled semimetric process: d(e^{ct}ρ) ≤ e^{ct}K dt + dM
/// with
///   K = 4uγ⁻²rc²f″(r)G + (α|Q| − (η/(1+η))α|Z|)f′₋(r)G
///       + 4ε·max(1,(2α)⁻¹)rc²·r·f′₋(r) + (2(d+A) − λH − λH′)εf(r) + γ⁻¹c·f(r)G,
/// where G = 1 + εH(x,v) + εH(x′,v′) and f′₋, f″ are taken as 0 for r ≥ R₁.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_k(
    state: &CoupledState,
    table: &MetricTable,
    geometry: &CouplingGeometry,
    rates: &RateConstants,
    consts: &DriftConstants,
    pot: &Potential,
    params: &ModelParams,
    controls: &CouplingControls,
) -> Result<f64> {
    let z = state.z();
    let w = state.w();
    let q = state.q(params.gamma);
    let abs_z = norm(&z);
    let abs_q = norm(&q);
    let r = geometry.alpha * abs_z + abs_q;
    let (rc, _) = rc_sc(&z, &w, controls, params)?;
    let (f, fp, fpp) = if r >= table.r1() {
        (table.f_r1(), 0.0, 0.0)
    } else {
        (table.f_at(r), table.f_prime_minus_at(r), table.f_second_at(r))
    };
    let h = lyapunov_h(pot, consts, params, &state.first())?;
    let h2 = lyapunov_h(pot, consts, params, &state.second())?;
    let eps = rates.epsilon;
    let g_weight = 1.0 + eps * h + eps * h2;
    let gamma = params.gamma;
    let alpha = geometry.alpha;
    let da = params.d as f64 + consts.a;
    let k = 4.0 * params.u / (gamma * gamma) * rc * rc * fpp * g_weight
        + (alpha * abs_q - geometry.eta / (1.0 + geometry.eta) * alpha * abs_z) * fp * g_weight
        + 4.0 * eps * 1.0f64.max(1.0 / (2.0 * alpha)) * rc * rc * r * fp
        + (2.0 * da - consts.lambda * h - consts.lambda * h2) * eps * f
        + rates.c / gamma * f * g_weight;
    Ok(k)
}

/// Diagnostics recorded along a coupled trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairRecord {
    pub t: f64,
    pub rho: f64,
    pub r: f64,
    pub g_weight: f64,
    pub abs_q: f64,
    pub abs_z: f64,
    pub rc: f64,
    pub k: f64,
}

#[derive(Debug, Clone)]
pub struct PairTrajectory {
    pub records: Vec<PairRecord>,
    pub final_state: CoupledState,
    /// Largest |x| reached by either copy at any step (excursion monitoring).
    pub max_abs_x: f64,
}

pub(crate) fn pair_diagnostics(state: &CoupledState, ctx: &CouplingContext<'_>) -> Result<PairRecord> {
    let z = state.z();
    let w = state.w();
    let abs_z = norm(&z);
    let abs_q = norm(&state.q(ctx.params.gamma));
    let r = r_distance(ctx.geometry.alpha, ctx.params, &state.first(), &state.second())?;
    let (rc, _) = rc_sc(&z, &w, ctx.controls, ctx.params)?;
    let h = lyapunov_h(ctx.pot, ctx.consts, ctx.params, &state.first())?;
    let h2 = lyapunov_h(ctx.pot, ctx.consts, ctx.params, &state.second())?;
    let g_weight = 1.0 + ctx.rates.epsilon * (h + h2);
    let rho = ctx.table.f_at(r) * g_weight;
    let k = evaluate_k(state, ctx.table, ctx.geometry, ctx.rates, ctx.consts, ctx.pot, ctx.params, ctx.controls)?;
    Ok(PairRecord { t: state.t, rho, r, g_weight, abs_q, abs_z, rc, k })
}

pub(crate) fn simulate_pair_member(
    init: &CoupledState,
    ctx: &CouplingContext<'_>,
    dt: f64,
    t_end: f64,
    seed: u64,
    member: u64,
    record_every: usize,
) -> Result<PairTrajectory> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Config(format!("dt must be a positive real, got {dt}")));
    }
    if !(t_end >= 0.0 && t_end.is_finite()) {
        return Err(Error::Config(format!("T must be a nonnegative real, got {t_end}")));
    }
    if record_every == 0 {
        return Err(Error::Config("record_every must be ≥ 1".into()));
    }
    let d = init.dim();
    let n_steps = (t_end / dt).ceil() as u64;
    let mut state = init.clone();
    state.t = 0.0;
    let mut records = vec![pair_diagnostics(&state, ctx)?];
    let mut max_x_sq = norm(&state.x).powi(2).max(norm(&state.x2).powi(2));
    for step in 0..n_steps {
        let noise = noise_increment(seed, member, step, d, dt);
        state = coupled_step(&state, ctx.pot, ctx.params, ctx.controls, dt, &noise)?;
        // pin t to the step index to keep record times exact across resolutions
        state.t = (step + 1) as f64 * dt;
        let x_sq: f64 = state.x.iter().map(|t| t * t).sum();
        let x2_sq: f64 = state.x2.iter().map(|t| t * t).sum();
        max_x_sq = max_x_sq.max(x_sq).max(x2_sq);
        if (step + 1) % record_every as u64 == 0 || step + 1 == n_steps {
            records.push(pair_diagnostics(&state, ctx)?);
        }
    }
    Ok(PairTrajectory { records, final_state: state, max_abs_x: max_x_sq.sqrt() })
}

/// Simulate one coupled pair, recording diagnostics every `record_every` steps
/// (the initial and final states are always recorded). Deterministic in `seed`.
pub fn simulate_pair(
    init: &CoupledState,
    ctx: &CouplingContext<'_>,
    dt: f64,
    t_end: f64,
    seed: u64,
    record_every: usize,
) -> Result<PairTrajectory> {
    simulate_pair_member(init, ctx, dt, t_end, seed, 0, record_every)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::NoiseStream;

    fn params() -> ModelParams {
        ModelParams::new(2, 1.0, 30f64.sqrt()).unwrap()
    }

    fn controls() -> CouplingControls {
        CouplingControls::new(0.01, 3.6, 0.05).unwrap()
    }

    #[test]
    fn rc_vanishes_when_q_vanishes() {
        let p = params();
        let c = controls();
        // w = −γz makes q = 0 with z ≠ 0
        let z = vec![1.0, -0.5];
        let w: Vec<f64> = z.iter().map(|t| -t * p.gamma).collect();
        let (rc, sc) = rc_sc(&z, &w, &c, &p).unwrap();
        assert_eq!(rc, 0.0);
        assert_eq!(sc, 1.0);
    }

    #[test]
    fn rc_saturates_inside_the_ball() {
        let p = params();
        let c = controls();
        let z = vec![0.1, 0.0];
        let w = vec![0.0, 0.0];
        // |q| = 0.1 ≥ ξ and r = 0.105 ≤ R₁
        let (rc, sc) = rc_sc(&z, &w, &c, &p).unwrap();
        assert_eq!(rc, 1.0);
        assert_eq!(sc, 0.0);
    }

    #[test]
    fn rc_vanishes_far_outside_the_ball() {
        let p = params();
        let c = controls();
        let z = vec![100.0, 0.0];
        let (rc, _) = rc_sc(&z, &[0.0, 0.0], &c, &p).unwrap();
        assert_eq!(rc, 0.0);
    }

    #[test]
    fn blend_is_a_rotation_on_random_inputs() {
        let p = params();
        let c = controls();
        let mut stream = NoiseStream::new(3, 7);
        for _ in 0..1000 {
            let z: Vec<f64> = (0..2).map(|_| 4.0 * stream.gaussian()).collect();
            let w: Vec<f64> = (0..2).map(|_| 4.0 * stream.gaussian()).collect();
            let (rc, sc) = rc_sc(&z, &w, &c, &p).unwrap();
            assert!((0.0..=1.0).contains(&rc));
            assert!((rc * rc + sc * sc - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn forced_modes_override_the_clamp() {
        let p = params();
        let mut c = controls();
        c.mode = CouplingMode::ForcedReflection;
        assert_eq!(rc_sc(&[0.0, 0.0], &[0.0, 0.0], &c, &p).unwrap(), (1.0, 0.0));
        c.mode = CouplingMode::ForcedSynchronous;
        assert_eq!(rc_sc(&[5.0, 0.0], &[0.0, 0.0], &c, &p).unwrap(), (0.0, 1.0));
    }

    #[test]
    fn householder_reflection_is_an_isometry() {
        let mut stream = NoiseStream::new(11, 0);
        for _ in 0..200 {
            let v: Vec<f64> = (0..3).map(|_| stream.gaussian()).collect();
            let mut e: Vec<f64> = (0..3).map(|_| stream.gaussian()).collect();
            let n = norm(&e);
            e.iter_mut().for_each(|t| *t /= n);
            let r = householder_reflect(&e, &v);
            assert!((norm(&r) - norm(&v)).abs() < 1e-12);
            // reflecting twice restores the vector
            let rr = householder_reflect(&e, &r);
            for (a, b) in rr.iter().zip(&v) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn identical_pairs_stay_identical() {
        let p = params();
        let pot = crate::model::make_potential(crate::model::PotentialSpec::IntroDoubleWell { a: 1.0 }).unwrap();
        let c = controls();
        let mut state = CoupledState {
            x: vec![0.7, -0.2],
            v: vec![0.1, 0.4],
            x2: vec![0.7, -0.2],
            v2: vec![0.1, 0.4],
            t: 0.0,
        };
        for step in 0..500 {
            let noise = noise_increment(42, 0, step, 2, 1e-3);
            state = coupled_step(&state, &pot, &p, &c, 1e-3, &noise).unwrap();
            assert_eq!(state.x, state.x2);
            assert_eq!(state.v, state.v2);
        }
    }
}
