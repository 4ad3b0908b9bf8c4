//! Drift-condition constants, the Lyapunov function H, and the drift inequality check.

use crate::error::{Error, Result};
use crate::model::{dot, norm_sq, potential_eval, ModelParams, PhaseState, Potential};

/// Constants (L, A, λ) of the drift condition
///   x·∇U(x)/2 ≥ λ(U(x) + u⁻¹γ²|x|²/4) − A.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftConstants {
    pub l: f64,
    pub a: f64,
    pub lambda: f64,
}

impl DriftConstants {
    /// λ must lie in (0, 1/4] and cannot exceed 2Luγ⁻²: plugging the quadratic
    /// growth of the |x|²-term into the condition forces λ ≤ 2Luγ⁻² at |x| → ∞.
    pub fn new(l: f64, a: f64, lambda: f64, params: &ModelParams) -> Result<Self> {
        if !(l > 0.0 && l.is_finite()) {
            return Err(Error::Config(format!("L must be a positive real, got {l}")));
        }
        if !(a >= 0.0 && a.is_finite()) {
            return Err(Error::Config(format!("A must be a nonnegative real, got {a}")));
        }
        if !(lambda > 0.0 && lambda <= 0.25) {
            return Err(Error::Config(format!("lambda must lie in (0, 1/4], got {lambda}")));
        }
        let cap = 2.0 * params.damping_group(l);
        if lambda > cap * (1.0 + 1e-12) {
            return Err(Error::InconsistentParameters(format!(
                "lambda = {lambda} exceeds 2·L·u·γ⁻² = {cap}"
            )));
        }
        Ok(Self { l, a, lambda })
    }
}

/// Constants for the general drift condition from the outward-drift data (𝓡, β):
/// A = (L𝓡² − β)/8 and λ = min(1/4, (β/L𝓡²)·2Luγ⁻²/(1 + 2Luγ⁻²)).
pub fn simplified_to_general(l: f64, r: f64, beta: f64, params: &ModelParams) -> Result<DriftConstants> {
    if !(l > 0.0 && l.is_finite()) {
        return Err(Error::Config(format!("L must be a positive real, got {l}")));
    }
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::Config(format!("R must be a positive real, got {r}")));
    }
    let lr2 = l * r * r;
    if !(beta > 0.0) {
        return Err(Error::Config(format!("beta must be a positive real, got {beta}")));
    }
    if beta > lr2 * (1.0 + 1e-12) {
        return Err(Error::InconsistentParameters(format!(
            "beta = {beta} exceeds L·R² = {lr2}"
        )));
    }
    // β may exceed L𝓡² by round-off only; clamp so A stays nonnegative.
    let a = ((lr2 - beta) / 8.0).max(0.0);
    let m = params.damping_group(l);
    let lambda = 0.25f64.min(beta / lr2 * 2.0 * m / (1.0 + 2.0 * m));
    DriftConstants::new(l, a, lambda, params)
}

/// H(x, v) = U(x) + ¼u⁻¹γ²(|x + γ⁻¹v|² + |γ⁻¹v|² − λ|x|²).
pub fn lyapunov_h(
    pot: &Potential,
    consts: &DriftConstants,
    params: &ModelParams,
    s: &PhaseState,
) -> Result<f64> {
    if s.dim() != params.d {
        return Err(Error::DimensionMismatch { expected: params.d, got: s.dim() });
    }
    let (energy, _) = potential_eval(pot, &s.x)?;
    let gamma = params.gamma;
    let xv: Vec<f64> = s.x.iter().zip(&s.v).map(|(x, v)| x + v / gamma).collect();
    Ok(energy
        + 0.25 * gamma * gamma / params.u
            * (norm_sq(&xv) + norm_sq(&s.v) / (gamma * gamma) - consts.lambda * norm_sq(&s.x)))
}

/// The generator applied to H in closed form:
/// 𝓛H(x, v) = ½γ(2d − x·∇U(x) − u⁻¹|v|² − λu⁻¹γ·x·v).
pub fn generator_apply_h(
    pot: &Potential,
    consts: &DriftConstants,
    params: &ModelParams,
    s: &PhaseState,
) -> Result<f64> {
    if s.dim() != params.d {
        return Err(Error::DimensionMismatch { expected: params.d, got: s.dim() });
    }
    let (_, grad) = potential_eval(pot, &s.x)?;
    let gamma = params.gamma;
    Ok(0.5
        * gamma
        * (2.0 * params.d as f64
            - dot(&s.x, &grad)
            - norm_sq(&s.v) / params.u
            - consts.lambda * gamma * dot(&s.x, &s.v) / params.u))
}

/// Worst violation of 𝓛H ≤ γ(d + A − λH) over a set of states.
#[derive(Debug, Clone)]
pub struct DriftReport {
    pub n_points: usize,
    /// max over the grid of 𝓛H − γ(d + A − λH); ≤ 0 certifies the inequality there.
    pub max_excess: f64,
    /// State attaining the maximum.
    pub worst: PhaseState,
}

impl DriftReport {
    pub fn ok(&self, tol: f64) -> bool {
        self.max_excess <= tol
    }
}

pub fn verify_lyapunov_drift(
    pot: &Potential,
    consts: &DriftConstants,
    params: &ModelParams,
    grid: &[PhaseState],
) -> Result<DriftReport> {
    if grid.is_empty() {
        return Err(Error::Config("drift verification needs a nonempty grid".into()));
    }
    let mut max_excess = f64::NEG_INFINITY;
    let mut worst = grid[0].clone();
    for s in grid {
        let lh = generator_apply_h(pot, consts, params, s)?;
        let h = lyapunov_h(pot, consts, params, s)?;
        let excess = lh - params.gamma * (params.d as f64 + consts.a - consts.lambda * h);
        if excess > max_excess {
            max_excess = excess;
            worst = s.clone();
        }
    }
    Ok(DriftReport { n_points: grid.len(), max_excess, worst })
}

/// Tensor grid on [−5𝓡, 5𝓡]^d × [−5√u·γ𝓡, 5√u·γ𝓡]^d with at most 10⁶ points.
///
/// The drift condition can only fail near the origin (where U may be concave), so a
/// modest grid extent suffices; per-axis resolution shrinks with d to respect the cap.
pub fn default_drift_grid(pot: &Potential, params: &ModelParams) -> Vec<PhaseState> {
    let r_cal = pot.drift_r.unwrap_or(1.0 / pot.lipschitz_l.sqrt());
    let x_half = 5.0 * r_cal;
    let v_half = 5.0 * params.u.sqrt() * params.gamma * r_cal;
    let d = params.d;
    // Largest odd per-axis count n with n^(2d) ≤ 10⁶, capped at 101.
    let mut n = (1e6f64.powf(1.0 / (2.0 * d as f64)).floor() as usize).min(101);
    if n % 2 == 0 {
        n -= 1;
    }
    let n = n.max(3);
    let axis = |half: f64| -> Vec<f64> {
        (0..n).map(|i| -half + 2.0 * half * i as f64 / (n - 1) as f64).collect()
    };
    let xs = axis(x_half);
    let vs = axis(v_half);
    let mut states = Vec::with_capacity(n.pow(2 * d as u32));
    let mut idx = vec![0usize; 2 * d];
    loop {
        let x: Vec<f64> = (0..d).map(|k| xs[idx[k]]).collect();
        let v: Vec<f64> = (0..d).map(|k| vs[idx[d + k]]).collect();
        states.push(PhaseState { x, v });
        // odometer increment over the 2d index axes
        let mut k = 0;
        loop {
            if k == 2 * d {
                return states;
            }
            idx[k] += 1;
            if idx[k] < n {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_potential, PotentialSpec};

    fn params() -> ModelParams {
        ModelParams::new(1, 1.0, 30f64.sqrt()).unwrap()
    }

    #[test]
    fn linear_drift_constants() {
        let p = params();
        let c = simplified_to_general(1.0, 1.0, 1.0, &p).unwrap();
        assert_eq!(c.a, 0.0);
        // (β/L𝓡²)·2m/(1+2m) with m = 1/30 gives (2/30)/(32/30) = 1/16
        assert!((c.lambda - 1.0 / 16.0).abs() < 1e-15);
    }

    #[test]
    fn halving_the_drift_strength_halves_lambda_and_pays_in_a() {
        let p = params();
        let c = simplified_to_general(1.0, 2.0, 2.0, &p).unwrap();
        assert!((c.a - 0.25).abs() < 1e-15);
        assert!((c.lambda - 1.0 / 32.0).abs() < 1e-15);
    }

    #[test]
    fn beta_above_l_r_squared_is_rejected() {
        let err = simplified_to_general(1.0, 1.0, 1.5, &params()).unwrap_err();
        assert!(matches!(err, Error::InconsistentParameters(_)));
    }

    #[test]
    fn h_at_origin_vanishes_and_at_x_zero_reduces_to_kinetic_energy() {
        let p = params();
        let pot = make_potential(PotentialSpec::Quadratic { l: 1.0, r: Some(1.0) }).unwrap();
        let c = simplified_to_general(1.0, 1.0, 1.0, &p).unwrap();
        let origin = PhaseState::zero(1);
        assert_eq!(lyapunov_h(&pot, &c, &p, &origin).unwrap(), 0.0);
        // x = 0, u = 1: the two |γ⁻¹v|² terms collapse to |v|²/2 independent of γ, λ
        for v in [0.5, -2.0, 7.0] {
            let s = PhaseState::new(vec![0.0], vec![v]).unwrap();
            assert!((lyapunov_h(&pot, &c, &p, &s).unwrap() - v * v / 2.0).abs() < 1e-14);
        }
    }

    #[test]
    fn generator_closed_form_spot_values() {
        let p = ModelParams::new(1, 1.0, 1.0).unwrap();
        let pot = make_potential(PotentialSpec::Quadratic { l: 1.0, r: Some(1.0) }).unwrap();
        let c = DriftConstants::new(1.0, 0.0, 0.25, &p).unwrap();
        let origin = PhaseState::zero(1);
        assert_eq!(generator_apply_h(&pot, &c, &p, &origin).unwrap(), 1.0);
        let s = PhaseState::new(vec![1.0], vec![1.0]).unwrap();
        assert!((generator_apply_h(&pot, &c, &p, &s).unwrap() - (-0.125)).abs() < 1e-15);
        // v = 0 leaves only ½γ(2d − x·∇U)
        let s = PhaseState::new(vec![3.0], vec![0.0]).unwrap();
        assert!((generator_apply_h(&pot, &c, &p, &s).unwrap() - 0.5 * (2.0 - 9.0)).abs() < 1e-15);
    }

    #[test]
    fn quadratic_satisfies_the_drift_inequality_on_a_grid() {
        let p = params();
        let pot = make_potential(PotentialSpec::Quadratic { l: 1.0, r: Some(1.0) }).unwrap();
        let c = simplified_to_general(1.0, 1.0, 1.0, &p).unwrap();
        let mut grid = Vec::new();
        for i in 0..100 {
            for j in 0..100 {
                let x = -10.0 + 20.0 * i as f64 / 99.0;
                let v = -10.0 + 20.0 * j as f64 / 99.0;
                grid.push(PhaseState::new(vec![x], vec![v]).unwrap());
            }
        }
        let report = verify_lyapunov_drift(&pot, &c, &p, &grid).unwrap();
        assert_eq!(report.n_points, 10_000);
        assert!(report.ok(1e-9), "max excess {}", report.max_excess);
    }

    #[test]
    fn drift_inequality_at_rest_reduces_to_a_nonnegative() {
        let p = params();
        let pot = make_potential(PotentialSpec::IntroDoubleWell { a: 1.0 }).unwrap();
        let c = simplified_to_general(1.0, 4.0, 8.0, &p).unwrap();
        let origin = PhaseState::zero(1);
        let lh = generator_apply_h(&pot, &c, &p, &origin).unwrap();
        let h = lyapunov_h(&pot, &c, &p, &origin).unwrap();
        assert_eq!(h, 0.25);
        assert!(lh <= p.gamma * (1.0 + c.a - c.lambda * h));
    }

    #[test]
    fn default_grid_respects_the_point_cap() {
        let pot = make_potential(PotentialSpec::IntroDoubleWell { a: 1.0 }).unwrap();
        for d in 1..=3 {
            let p = ModelParams::new(d, 1.0, 30f64.sqrt()).unwrap();
            let grid = default_drift_grid(&pot, &p);
            assert!(grid.len() <= 1_000_000);
            assert!(grid.iter().any(|s| s.x.iter().all(|t| *t == 0.0)));
        }
    }
}
