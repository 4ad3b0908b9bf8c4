//! Potentials, model parameters, the stationary measure, and assumption checks.

use std::fmt;
use std::sync::Arc;

use crate::drift::DriftConstants;
use crate::error::{Error, Result};
use crate::noise::NoiseStream;

/// Parameters of the dynamics: dimension d, inverse mass u, friction γ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub d: usize,
    pub u: f64,
    pub gamma: f64,
}

impl ModelParams {
    pub fn new(d: usize, u: f64, gamma: f64) -> Result<Self> {
        if d == 0 {
            return Err(Error::Config("d must be ≥ 1".into()));
        }
        if !(u > 0.0 && u.is_finite()) {
            return Err(Error::Config(format!("u must be a positive real, got {u}")));
        }
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::Config(format!("gamma must be a positive real, got {gamma}")));
        }
        Ok(Self { d, u, gamma })
    }

    /// Dimensionless damping group Luγ⁻²; every rate formula is driven by it.
    pub fn damping_group(&self, l: f64) -> f64 {
        l * self.u / (self.gamma * self.gamma)
    }
}

/// A point (x, v) in phase space.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseState {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
}

impl PhaseState {
    pub fn new(x: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if x.len() != v.len() {
            return Err(Error::DimensionMismatch { expected: x.len(), got: v.len() });
        }
        if !x.iter().chain(v.iter()).all(|t| t.is_finite()) {
            return Err(Error::Config("phase-state entries must be finite".into()));
        }
        Ok(Self { x, v })
    }

    pub fn zero(d: usize) -> Self {
        Self { x: vec![0.0; d], v: vec![0.0; d] }
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }
}

pub(crate) fn norm_sq(x: &[f64]) -> f64 {
    x.iter().map(|t| t * t).sum()
}

pub(crate) fn norm(x: &[f64]) -> f64 {
    norm_sq(x).sqrt()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(s, t)| s * t).sum()
}

pub type EnergyFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type GradientFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

#[derive(Clone)]
pub enum PotentialKind {
    /// U(x) = L|x|²/2.
    Quadratic { l: f64 },
    /// Rescaled C¹ double well: U(x) = 1/4 − |x|²/(2a²) for |x| ≤ a/2, and
    /// (|x|−a)²/(2a²) beyond; wells at |x| = a, |U″| = a⁻² on both branches.
    IntroDoubleWell { a: f64 },
    /// One-dimensional piecewise-quadratic double well with wells at ±R/2 and a
    /// barrier of height LR²/64 at ±R/4; |U″| = L on every branch.
    PiecewiseDoubleWell { l: f64, r: f64 },
    /// Radial extension U(|x|) of the piecewise double-well profile; for d ≥ 2 the
    /// landscape has a central well plus a well ring at |x| = R/2, and any 1-D slice
    /// through the origin shows three wells.
    TripleWell { l: f64, r: f64 },
    Custom { energy: EnergyFn, gradient: GradientFn },
}

impl fmt::Debug for PotentialKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Quadratic { l } => write!(f, "Quadratic {{ l: {l} }}"),
            Self::IntroDoubleWell { a } => write!(f, "IntroDoubleWell {{ a: {a} }}"),
            Self::PiecewiseDoubleWell { l, r } => write!(f, "PiecewiseDoubleWell {{ l: {l}, r: {r} }}"),
            Self::TripleWell { l, r } => write!(f, "TripleWell {{ l: {l}, r: {r} }}"),
            Self::Custom { .. } => f.write_str("Custom { .. }"),
        }
    }
}

/// A potential U together with the constants the contraction machinery reads off it:
/// the Lipschitz constant of ∇U, and (when available) the radius 𝓡 and strength β of
/// the outward-drift condition x·∇U(x) ≥ β(|x|/𝓡)² for |x| ≥ 𝓡.
#[derive(Debug, Clone)]
pub struct Potential {
    pub kind: PotentialKind,
    pub lipschitz_l: f64,
    pub drift_r: Option<f64>,
    pub drift_beta: Option<f64>,
}

/// Construction recipe for [`Potential`].
#[derive(Clone)]
pub enum PotentialSpec {
    /// `r` is the drift radius 𝓡; β is then L𝓡².
    Quadratic { l: f64, r: Option<f64> },
    /// Populates L = a⁻², 𝓡 = 4a, β = 8.
    IntroDoubleWell { a: f64 },
    /// Populates 𝓡 = R, β = LR²/2.
    PiecewiseDoubleWell { l: f64, r: f64 },
    /// Populates 𝓡 = R, β = LR²/2 (the radial profile satisfies the same bounds).
    TripleWell { l: f64, r: f64 },
    Custom {
        energy: EnergyFn,
        gradient: GradientFn,
        lipschitz_l: f64,
        drift_r: Option<f64>,
        drift_beta: Option<f64>,
    },
}

fn positive(name: &str, value: f64) -> Result<f64> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Config(format!("{name} must be a positive real, got {value}")))
    }
}

pub fn make_potential(spec: PotentialSpec) -> Result<Potential> {
    let pot = match spec {
        PotentialSpec::Quadratic { l, r } => {
            let l = positive("L", l)?;
            let r = r.map(|r| positive("R", r)).transpose()?;
            Potential {
                kind: PotentialKind::Quadratic { l },
                lipschitz_l: l,
                drift_r: r,
                drift_beta: r.map(|r| l * r * r),
            }
        }
        PotentialSpec::IntroDoubleWell { a } => {
            let a = positive("a", a)?;
            Potential {
                kind: PotentialKind::IntroDoubleWell { a },
                lipschitz_l: 1.0 / (a * a),
                drift_r: Some(4.0 * a),
                drift_beta: Some(8.0),
            }
        }
        PotentialSpec::PiecewiseDoubleWell { l, r } => {
            let l = positive("L", l)?;
            let r = positive("R", r)?;
            Potential {
                kind: PotentialKind::PiecewiseDoubleWell { l, r },
                lipschitz_l: l,
                drift_r: Some(r),
                drift_beta: Some(l * r * r / 2.0),
            }
        }
        PotentialSpec::TripleWell { l, r } => {
            let l = positive("L", l)?;
            let r = positive("R", r)?;
            Potential {
                kind: PotentialKind::TripleWell { l, r },
                lipschitz_l: l,
                drift_r: Some(r),
                drift_beta: Some(l * r * r / 2.0),
            }
        }
        PotentialSpec::Custom { energy, gradient, lipschitz_l, drift_r, drift_beta } => {
            let l = positive("L (Lipschitz constant, required for custom potentials)", lipschitz_l)?;
            if let (Some(r), Some(b)) = (drift_r, drift_beta) {
                if b > l * r * r * (1.0 + 1e-12) {
                    return Err(Error::InconsistentParameters(format!(
                        "beta = {b} exceeds L·R² = {}",
                        l * r * r
                    )));
                }
            }
            Potential { kind: PotentialKind::Custom { energy, gradient }, lipschitz_l: l, drift_r, drift_beta }
        }
    };
    Ok(pot)
}

/// Double-well profile at radius s ≥ 0 → (value, radial derivative).
fn double_well_profile(l: f64, r: f64, s: f64) -> (f64, f64) {
    if s <= r / 8.0 {
        (l * s * s / 2.0, l * s)
    } else if s <= 3.0 * r / 8.0 {
        let t = s - r / 4.0;
        (l * r * r / 64.0 - l * t * t / 2.0, -l * t)
    } else {
        let t = s - r / 2.0;
        (l * t * t / 2.0, l * t)
    }
}

/// Rescaled intro double-well profile: barrier 1/4 at the origin, wells at s = a.
fn intro_profile(a: f64, s: f64) -> (f64, f64) {
    if s <= a / 2.0 {
        (0.25 - s * s / (2.0 * a * a), -s / (a * a))
    } else {
        let t = s - a;
        (t * t / (2.0 * a * a), t / (a * a))
    }
}

/// U(x) = profile(|x|) with ∇U = profile′(|x|)·x/|x|, extended by 0 at x = 0 (all
/// builtin profiles have vanishing derivative there).
fn radial_eval(x: &[f64], profile: impl Fn(f64) -> (f64, f64)) -> (f64, Vec<f64>) {
    let s = norm(x);
    let (energy, slope) = profile(s);
    let grad = if s == 0.0 {
        vec![0.0; x.len()]
    } else {
        x.iter().map(|xi| slope * xi / s).collect()
    };
    (energy, grad)
}

/// Evaluate U(x) and ∇U(x).
pub fn potential_eval(pot: &Potential, x: &[f64]) -> Result<(f64, Vec<f64>)> {
    match &pot.kind {
        PotentialKind::Quadratic { l } => {
            Ok((0.5 * l * norm_sq(x), x.iter().map(|t| l * t).collect()))
        }
        PotentialKind::IntroDoubleWell { a } => Ok(radial_eval(x, |s| intro_profile(*a, s))),
        PotentialKind::PiecewiseDoubleWell { l, r } => {
            if x.len() != 1 {
                return Err(Error::DimensionMismatch { expected: 1, got: x.len() });
            }
            Ok(radial_eval(x, |s| double_well_profile(*l, *r, s)))
        }
        PotentialKind::TripleWell { l, r } => Ok(radial_eval(x, |s| double_well_profile(*l, *r, s))),
        PotentialKind::Custom { energy, gradient } => Ok((energy(x), gradient(x))),
    }
}

/// log μ*(x, v) up to the normalizing constant: −U(x) − |v|²/(2u).
pub fn stationary_log_density(pot: &Potential, params: &ModelParams, s: &PhaseState) -> Result<f64> {
    if s.dim() != params.d {
        return Err(Error::DimensionMismatch { expected: params.d, got: s.dim() });
    }
    let (energy, _) = potential_eval(pot, &s.x)?;
    Ok(-energy - norm_sq(&s.v) / (2.0 * params.u))
}

/// Radial profile of the builtin families; `None` for custom potentials.
fn builtin_profile(pot: &Potential) -> Option<Box<dyn Fn(f64) -> f64 + '_>> {
    match &pot.kind {
        PotentialKind::Quadratic { l } => {
            let l = *l;
            Some(Box::new(move |s| 0.5 * l * s * s))
        }
        PotentialKind::IntroDoubleWell { a } => {
            let a = *a;
            Some(Box::new(move |s| intro_profile(a, s).0))
        }
        PotentialKind::PiecewiseDoubleWell { l, r } | PotentialKind::TripleWell { l, r } => {
            let (l, r) = (*l, *r);
            Some(Box::new(move |s| double_well_profile(l, r, s).0))
        }
        PotentialKind::Custom { .. } => None,
    }
}

/// log of the rejection constant M: sup of |x|²/(2σ²) − U(x).
///
/// The outward-drift condition makes that difference nonincreasing beyond 𝓡, so for
/// builtins a grid supremum over [0, 𝓡] (plus a curvature pad for maxima between
/// nodes) dominates globally. Custom potentials fall back to β/2, which bounds the
/// supremum on [0, 𝓡] because U ≥ 0 there.
fn envelope_log_sup(pot: &Potential, sigma: f64, r_cal: f64, beta: f64) -> f64 {
    match builtin_profile(pot) {
        None => beta / 2.0,
        Some(profile) => {
            let n = 4096;
            let step = r_cal / n as f64;
            let mut sup = f64::NEG_INFINITY;
            for i in 0..=n {
                let s = i as f64 * step;
                sup = sup.max(s * s / (2.0 * sigma * sigma) - profile(s));
            }
            let curvature = beta / (r_cal * r_cal) + pot.lipschitz_l;
            sup + curvature * step * step / 8.0
        }
    }
}

/// Draw one state from the stationary measure ∝ exp(−U(x) − |v|²/(2u)).
///
/// The velocity marginal is N(0, u·I). The position marginal is produced by
/// rejection from N(0, (𝓡²/β)·I); restricted to d ≤ 3 because the acceptance
/// probability of a fixed envelope degrades exponentially in dimension.
pub fn sample_stationary(pot: &Potential, params: &ModelParams, stream: &mut NoiseStream) -> Result<PhaseState> {
    if params.d > 3 {
        return Err(Error::Config(format!(
            "builtin rejection sampling supports d ≤ 3, got d = {}; supply a custom sampler",
            params.d
        )));
    }
    let (r_cal, beta) = match (pot.drift_r, pot.drift_beta) {
        (Some(r), Some(b)) => (r, b),
        _ => {
            return Err(Error::Config(
                "stationary sampling needs drift_R and drift_beta on the potential".into(),
            ))
        }
    };
    let sigma = r_cal / beta.sqrt();
    let log_m = envelope_log_sup(pot, sigma, r_cal, beta);
    let mut proposals: u64 = 0;
    loop {
        proposals += 1;
        let x: Vec<f64> = (0..params.d).map(|_| sigma * stream.gaussian()).collect();
        let (energy, _) = potential_eval(pot, &x)?;
        let log_accept = norm_sq(&x) / (2.0 * sigma * sigma) - energy - log_m;
        if stream.uniform() <= log_accept.exp() {
            let v = (0..params.d).map(|_| params.u.sqrt() * stream.gaussian()).collect();
            return PhaseState::new(x, v);
        }
        if proposals >= 10_000 {
            return Err(Error::EnvelopeFailure { rate: 1.0 / proposals as f64 });
        }
    }
}

/// Worst observed violation margins of the structural assumptions; every margin
/// ≤ 0 means "no violation found on these samples". Violations are data, not errors.
#[derive(Debug, Clone)]
pub struct AssumptionReport {
    pub n_samples: usize,
    /// max −U(x): nonnegativity of the potential.
    pub a0_margin: f64,
    /// max |∇U(x)−∇U(y)| − L|x−y| over sample pairs.
    pub a1_margin: f64,
    /// max β(|x|/𝓡)² − x·∇U(x) over samples with |x| ≥ 𝓡
    /// (−∞ when 𝓡, β are unset or no sample reached the region).
    pub a2prime_margin: f64,
    /// max λ(U + u⁻¹γ²|x|²/4) − A − x·∇U/2: the general drift condition.
    pub a2_margin: f64,
}

impl AssumptionReport {
    pub fn ok(&self, tol: f64) -> bool {
        self.a0_margin <= tol
            && self.a1_margin <= tol
            && self.a2prime_margin <= tol
            && self.a2_margin <= tol
    }
}

/// Sample-based assumption check over a box of side 10·scale centred at the origin,
/// where scale is 𝓡 when available and L^{-1/2} otherwise.
pub fn check_assumptions(
    pot: &Potential,
    params: &ModelParams,
    consts: &DriftConstants,
    n_samples: usize,
    seed: u64,
) -> Result<AssumptionReport> {
    if n_samples == 0 {
        return Err(Error::Config("n_samples must be ≥ 1".into()));
    }
    let scale = pot.drift_r.unwrap_or_else(|| 1.0 / pot.lipschitz_l.sqrt());
    let mut stream = NoiseStream::new(seed, 0x5eed_a55e);
    let mut a0: f64 = f64::NEG_INFINITY;
    let mut a1: f64 = f64::NEG_INFINITY;
    let mut a2p: f64 = f64::NEG_INFINITY;
    let mut a2: f64 = f64::NEG_INFINITY;
    let mut prev: Option<(Vec<f64>, Vec<f64>)> = None;
    for _ in 0..n_samples {
        let x: Vec<f64> = (0..params.d)
            .map(|_| 5.0 * scale * (2.0 * stream.uniform() - 1.0))
            .collect();
        let (energy, grad) = potential_eval(pot, &x)?;
        a0 = a0.max(-energy);
        let xg = dot(&x, &grad);
        a2 = a2.max(
            consts.lambda * (energy + norm_sq(&x) * params.gamma * params.gamma / (4.0 * params.u))
                - consts.a
                - xg / 2.0,
        );
        if let (Some(r_cal), Some(beta)) = (pot.drift_r, pot.drift_beta) {
            let radius = norm(&x);
            if radius >= r_cal {
                a2p = a2p.max(beta * (radius / r_cal).powi(2) - xg);
            }
        }
        if let Some((px, pg)) = prev.take() {
            let grad_gap: f64 = norm(&grad.iter().zip(&pg).map(|(a, b)| a - b).collect::<Vec<_>>());
            let x_gap: f64 = norm(&x.iter().zip(&px).map(|(a, b)| a - b).collect::<Vec<_>>());
            a1 = a1.max(grad_gap - pot.lipschitz_l * x_gap * (1.0 + 1e-12));
        }
        prev = Some((x, grad));
    }
    Ok(AssumptionReport {
        n_samples,
        a0_margin: a0,
        a1_margin: a1,
        a2prime_margin: a2p,
        a2_margin: a2,
    })
}
