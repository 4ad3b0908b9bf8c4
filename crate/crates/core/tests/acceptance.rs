//! Acceptance gate: one test per headline guarantee, each ending in a single
//! PASS line. Tolerances and sample counts are part of the contract.

use kinetic_coupler_core::bundle::{BundleOptions, ModelBundle};
use kinetic_coupler_core::coupling::{evaluate_k, simulate_pair, CoupledState, CouplingMode};
use kinetic_coupler_core::drift::{
    default_drift_grid, lyapunov_h, simplified_to_general, verify_lyapunov_drift, DriftConstants,
};
use kinetic_coupler_core::mc::{
    contraction_audit, fit_decay_rate, run_ensemble, scaling_scan, EnsembleConfig, InitCoupling,
    DEFAULT_STEP_BUDGET,
};
use kinetic_coupler_core::metric::{
    build_metric_table, closed_form_rate, corollary_rate, gaussian_spectral_gap, solve_geometry,
};
use kinetic_coupler_core::model::{make_potential, ModelParams, PhaseState, PotentialSpec};
use kinetic_coupler_core::noise::NoiseStream;

fn linear_bundle(opts: &BundleOptions) -> ModelBundle {
    let pot = make_potential(PotentialSpec::Quadratic { l: 1.0, r: Some(1.0) }).unwrap();
    let params = ModelParams::new(1, 1.0, 30f64.sqrt()).unwrap();
    ModelBundle::build(pot, params, opts).unwrap()
}

#[test]
fn criterion_01_linear_corollary_rate() {
    let params = ModelParams::new(1, 1.0, 30f64.sqrt()).unwrap();
    let rates = corollary_rate(1.0, 1.0, 1.0, 1.0, &params).unwrap();
    let expected = params.gamma / 184_500.0;
    let rel = (rates.gamma_form - expected).abs() / expected;
    assert!(rel <= 1e-9, "γ/184500 missed: relative error {rel}");
    println!("criterion 1 (linear corollary rate = γ/184500): PASS");
}

#[test]
fn criterion_02_spectral_gap_value_and_sandwich() {
    let params = ModelParams::new(1, 1.0, 30f64.sqrt()).unwrap();
    let gap = gaussian_spectral_gap(1.0, &params).unwrap();
    assert_eq!(gap, (1.0 - (13.0f64 / 15.0).sqrt()) * params.gamma / 2.0);
    let mut stream = NoiseStream::new(101, 0);
    for _ in 0..1_000 {
        let l = 0.05 + 20.0 * stream.uniform();
        let u = 0.05 + 20.0 * stream.uniform();
        let gamma = 0.1 + 20.0 * stream.uniform();
        let p = ModelParams::new(1, u, gamma).unwrap();
        let m = p.damping_group(l);
        let g = gaussian_spectral_gap(l, &p).unwrap();
        assert!(g >= gamma * 0.25f64.min(m) * (1.0 - 1e-12));
        assert!(g <= gamma * 0.5f64.min(2.0 * m) * (1.0 + 1e-12));
    }
    println!("criterion 2 (spectral gap exact value and sandwich): PASS");
}

#[test]
fn criterion_03_double_well_prefactor() {
    let params = ModelParams::new(1, 1.0, 30f64.sqrt()).unwrap();
    let (a, u) = (1.0f64, 1.0f64);
    let rates = corollary_rate(1.0 / (a * a), 4.0 * a, 8.0, 2.0, &params).unwrap();
    let ga = params.gamma * a;
    let reference = u.sqrt() / 107.0
        * (u * u / ga.powi(4))
            .min(((-8.0f64).exp() * u / (ga * ga)).min(2.0f64.powf(-1.5) * (-8.0f64).exp()))
        / a;
    let rel = (rates.scaled_form - reference).abs() / reference;
    assert!(rel <= 0.01, "double-well prefactor off by {rel}");
    println!("criterion 3 (double-well corollary prefactor within 1%): PASS");
}

#[test]
fn criterion_04_lyapunov_inequality_on_builtins() {
    let params = ModelParams::new(1, 1.0, 30f64.sqrt()).unwrap();
    let pots = [
        make_potential(PotentialSpec::Quadratic { l: 1.0, r: Some(1.0) }).unwrap(),
        make_potential(PotentialSpec::PiecewiseDoubleWell { l: 1.0, r: 8.0 }).unwrap(),
        make_potential(PotentialSpec::IntroDoubleWell { a: 1.0 }).unwrap(),
    ];
    for pot in &pots {
        let consts = simplified_to_general(
            pot.lipschitz_l,
            pot.drift_r.unwrap(),
            pot.drift_beta.unwrap(),
            &params,
        )
        .unwrap();
        let grid = default_drift_grid(pot, &params);
        assert!(grid.len() >= 10_000, "grid has only {} points", grid.len());
        let report = verify_lyapunov_drift(pot, &consts, &params, &grid).unwrap();
        assert!(
            report.max_excess <= 1e-9,
            "{:?}: max excess {} at {:?}",
            pot.kind,
            report.max_excess,
            report.worst
        );
    }
    println!("criterion 4 (Lyapunov drift inequality on three builtins): PASS");
}

#[test]
fn criterion_05_metric_bounds() {
    let params = ModelParams::new(1, 1.0, 30f64.sqrt()).unwrap();
    let consts = simplified_to_general(1.0, 1.0, 1.0, &params).unwrap();
    let geometry = solve_geometry(&consts, &params).unwrap();
    let c = closed_form_rate(&geometry, &consts, &params);
    let table = build_metric_table(&geometry, c, &consts, &params, 4096).unwrap();
    assert!(table.quad_error <= 1e-8 * table.f_r1());
    let n = table.grid.len() - 1;
    for i in 0..=n {
        let s = table.grid[i];
        let gauss = (-consts.l * s * s / 8.0).exp();
        assert!(table.f_prime[i] <= gauss * (1.0 + 1e-12));
        assert!(table.f_prime[i] >= 0.5 * (-2.0f64).exp() * gauss * (1.0 - 1e-12));
        assert!(table.g[i] >= 0.5);
        assert!(table.f_second[i] <= 0.0);
        if i > 0 {
            assert!(table.f[i] >= table.f[i - 1]);
            assert!(table.f_prime[i] <= table.f_prime[i - 1] * (1.0 + 1e-15));
        }
    }
    let mut stream = NoiseStream::new(105, 0);
    for _ in 0..1_000 {
        let r = 1.2 * table.r1() * stream.uniform();
        let f = table.f_at(r);
        assert!(f >= r.min(table.r1()) * table.f_prime[n] * (1.0 - 1e-12));
        assert!(f <= r.min(table.f_r1()) * (1.0 + 1e-12));
    }
    println!("criterion 5 (metric envelope, concavity, and chord bounds): PASS");
}

#[test]
fn criterion_06_fixed_point_residual_and_lambda_bounds() {
    let mut stream = NoiseStream::new(106, 0);
    for _ in 0..1_000 {
        let d = 1 + (stream.uniform() * 3.0).floor() as usize % 3;
        let l = 0.1 + 9.9 * stream.uniform();
        let u = 0.1 + 9.9 * stream.uniform();
        let gamma = 0.5 + 9.5 * stream.uniform();
        let params = ModelParams::new(d, u, gamma).unwrap();
        let m = params.damping_group(l);
        let lambda = (2.0 * m).min(0.25) * (0.05 + 0.95 * stream.uniform());
        let a = 5.0 * stream.uniform();
        let consts = DriftConstants::new(l, a, lambda, &params).unwrap();
        let g = solve_geometry(&consts, &params).unwrap();
        let residual =
            (g.alpha - (l + 8.0 / (g.r1 * g.r1)) * u / (gamma * gamma)).abs();
        assert!(residual <= 1e-12 * g.alpha.max(1.0), "residual {residual}");
        assert!(g.big_lambda >= 1.2 * (d as f64 + a) * (1.0 - 1e-12));
    }
    // moderate-damping window for the simplified constants
    for _ in 0..1_000 {
        let d = 1 + (stream.uniform() * 3.0).floor() as usize % 3;
        let l = 0.1 + 9.9 * stream.uniform();
        let u = 0.1 + 9.9 * stream.uniform();
        let m = 0.005 + 0.12 * stream.uniform();
        let gamma = (l * u / m).sqrt();
        let params = ModelParams::new(d, u, gamma).unwrap();
        let r_cal = 0.5 + 4.5 * stream.uniform();
        let beta = l * r_cal * r_cal * (0.05 + 0.95 * stream.uniform());
        let consts = simplified_to_general(l, r_cal, beta, &params).unwrap();
        let g = solve_geometry(&consts, &params).unwrap();
        let da = params.d as f64 + consts.a;
        let lr2 = l * r_cal * r_cal;
        assert!(g.big_lambda >= 1.2 * da * lr2 / beta * (1.0 - 1e-12));
        assert!(g.big_lambda <= 1.2 * da * (1.0 + 20.0 * m) * lr2 / beta * (1.0 + 1e-12));
    }
    println!("criterion 6 (fixed-point residual and Λ window): PASS");
}

#[test]
fn criterion_07_pointwise_k_inequality() {
    let bundle = linear_bundle(&BundleOptions::default());
    let ctx = bundle.context();
    let xi = bundle.controls.xi;
    let r1 = bundle.geometry.r1;
    let alpha = bundle.geometry.alpha;
    let mut stream = NoiseStream::new(107, 0);
    for trial in 0..100_000u32 {
        let offset_scale = match trial % 3 {
            0 => 0.3 * xi,
            1 => 0.5 * r1,
            _ => 3.0 * r1,
        };
        let x = 6.0 * (2.0 * stream.uniform() - 1.0);
        let v = 8.0 * (2.0 * stream.uniform() - 1.0);
        let dx = offset_scale * (2.0 * stream.uniform() - 1.0);
        let dv = offset_scale * (2.0 * stream.uniform() - 1.0);
        let state = CoupledState::new(
            PhaseState::new(vec![x], vec![v]).unwrap(),
            PhaseState::new(vec![x + dx], vec![v + dv]).unwrap(),
        )
        .unwrap();
        let k = evaluate_k(
            &state, ctx.table, ctx.geometry, ctx.rates, ctx.consts, ctx.pot, ctx.params,
            ctx.controls,
        )
        .unwrap();
        let g = 1.0
            + ctx.rates.epsilon
                * (lyapunov_h(ctx.pot, ctx.consts, ctx.params, &state.first()).unwrap()
                    + lyapunov_h(ctx.pot, ctx.consts, ctx.params, &state.second()).unwrap());
        assert!(k <= (1.0 + alpha) * xi * g + 1e-9, "K = {k} exceeds the ceiling");
    }
    println!("criterion 7 (pointwise drift ceiling on 1e5 states): PASS");
}

#[test]
fn criterion_08_contraction_audit_default_config() {
    let bundle = linear_bundle(&BundleOptions::default());
    let ctx = bundle.context();
    let cfg = EnsembleConfig {
        n_pairs: 2000,
        dt: 1e-3,
        t_end: 20.0,
        xi: bundle.controls.xi,
        seed: 0,
        init: InitCoupling::PointVsStationary { x: vec![5.0], v: vec![0.0] },
        record_every: 500,
        step_budget: DEFAULT_STEP_BUDGET,
    };
    let series = run_ensemble(&cfg, &ctx).unwrap();
    let report =
        contraction_audit(&series, &bundle.rates, &bundle.geometry, &bundle.params, &cfg).unwrap();
    assert!(report.margins.iter().all(|m| *m <= 0.0), "worst margin {}", report.worst_margin);
    assert!(report.passed);
    let (rate, _) = fit_decay_rate(&series, (5.0, 20.0)).unwrap();
    let gap = gaussian_spectral_gap(1.0, &bundle.params).unwrap();
    assert!(
        rate >= bundle.rates.c && rate <= 1.1 * gap,
        "fitted rate {rate} outside [{}, {}]",
        bundle.rates.c,
        1.1 * gap
    );
    println!("criterion 8 (ensemble contraction audit on the default config): PASS");
}

#[test]
fn criterion_09_kinetic_scaling() {
    let pot = make_potential(PotentialSpec::IntroDoubleWell { a: 1.0 }).unwrap();
    let params = ModelParams::new(1, 1.0, 30f64.sqrt()).unwrap();
    let base = ModelBundle::build(pot, params, &BundleOptions::default()).unwrap();
    let table = scaling_scan(&base, &[1.0, 2.0, 4.0, 8.0], None).unwrap();
    let reference = table.rows[0].c_times_a;
    for row in &table.rows {
        assert!(
            (row.c_times_a - reference).abs() <= 0.01 * reference,
            "c·a at a={} drifted to {}",
            row.a,
            row.c_times_a
        );
    }
    println!("criterion 9 (closed-form rate scales as 1/a at fixed γa): PASS");
}

#[test]
fn criterion_10_propagator_oracle() {
    let opts = BundleOptions { mode: CouplingMode::ForcedSynchronous, ..BundleOptions::default() };
    let bundle = linear_bundle(&opts);
    let ctx = bundle.context();
    let (ul, gamma) = (1.0, bundle.params.gamma);
    let t_end = 2.0;
    let (z0, w0) = (1.0, 0.5);
    let disc = (gamma * gamma - 4.0 * ul).sqrt();
    let (l1, l2) = ((-gamma + disc) / 2.0, (-gamma - disc) / 2.0);
    let (e1, e2) = ((l1 * t_end).exp(), (l2 * t_end).exp());
    let m = [[0.0, 1.0], [-ul, -gamma]];
    let mut expm = [[0.0f64; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            let id = if i == j { 1.0 } else { 0.0 };
            expm[i][j] = (e1 * (m[i][j] - l2 * id) - e2 * (m[i][j] - l1 * id)) / (l1 - l2);
        }
    }
    let z_exact = expm[0][0] * z0 + expm[0][1] * w0;
    let w_exact = expm[1][0] * z0 + expm[1][1] * w0;
    let endpoint_error = |dt: f64| -> f64 {
        let init = CoupledState::new(
            PhaseState::new(vec![z0 / 2.0], vec![w0 / 2.0]).unwrap(),
            PhaseState::new(vec![-z0 / 2.0], vec![-w0 / 2.0]).unwrap(),
        )
        .unwrap();
        let traj = simulate_pair(&init, &ctx, dt, t_end, 9, usize::MAX).unwrap();
        let fz = traj.final_state.x[0] - traj.final_state.x2[0];
        let fw = traj.final_state.v[0] - traj.final_state.v2[0];
        ((fz - z_exact).powi(2) + (fw - w_exact).powi(2)).sqrt()
    };
    let ratio = endpoint_error(1e-3) / endpoint_error(5e-4);
    assert!((1.8..=2.2).contains(&ratio), "error ratio {ratio} should be ≈ 2");
    println!("criterion 10 (synchronous difference dynamics vs matrix exponential): PASS");
}
