//! Subcommand implementations: each loads the shared config, drives the core
//! pipeline, and emits text to stdout and/or CSV files.
//!
//! CSV conventions: `\n` line endings, `.` decimal separator, floats printed with
//! 17 significant digits so a re-parse reproduces the exact values.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use kinetic_coupler_core::bundle::{scaling_scan, DriftSpec, ModelBundle};
use kinetic_coupler_core::coupling::{evaluate_k, CoupledState, PairTrajectory};
use kinetic_coupler_core::drift::{default_drift_grid, lyapunov_h, verify_lyapunov_drift};
use kinetic_coupler_core::mc::{
    contraction_audit_with_kappa, fit_decay_rate, run_ensemble, sample_pair_trajectory,
    DecaySeries, DEFAULT_AUDIT_KAPPA,
};
use kinetic_coupler_core::metric::{
    check_rate_admissible, closed_form_rate, corollary_rate, gaussian_spectral_gap,
    wasserstein2_constant,
};
use kinetic_coupler_core::model::{check_assumptions, PhaseState, PotentialKind};
use kinetic_coupler_core::noise::NoiseStream;
use kinetic_coupler_core::{Error, Result};

use crate::config::load_config;
use crate::{CliError, Suite};

type CmdResult = std::result::Result<bool, CliError>;

/// 17 significant digits: enough for a bit-exact f64 round-trip.
fn sig(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_file(path: &Path, contents: &str) -> std::result::Result<(), CliError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)
                .map_err(|e| CliError::Io(format!("cannot create {}: {e}", parent.display())))?;
        }
    }
    fs::write(path, contents)
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

// ---------------------------------------------------------------------------
// rates

pub fn rates(config_path: &Path, optimized: bool, out: Option<&Path>) -> CmdResult {
    let cfg = load_config(config_path)?;
    let mut opts = cfg.bundle_options()?;
    opts.use_optimized = opts.use_optimized || optimized;
    let bundle = ModelBundle::build(cfg.potential()?, cfg.model_params()?, &opts)?;
    let params = &bundle.params;
    let consts = &bundle.consts;
    let geo = &bundle.geometry;

    let mut rows: Vec<(&str, f64)> = vec![
        ("d", params.d as f64),
        ("u", params.u),
        ("gamma", params.gamma),
        ("L", consts.l),
    ];
    let (r_used, beta_used) = match opts.drift {
        DriftSpec::Simplified { r, beta } => (Some(r), Some(beta)),
        DriftSpec::FromPotential => (bundle.pot.drift_r, bundle.pot.drift_beta),
        DriftSpec::Direct { .. } => (None, None),
    };
    if let Some(r) = r_used {
        rows.push(("R", r));
    }
    if let Some(beta) = beta_used {
        rows.push(("beta", beta));
    }
    rows.push(("A", consts.a));
    rows.push(("lambda", consts.lambda));
    rows.push(("alpha", geo.alpha));
    rows.push(("eta", geo.eta));
    rows.push(("R1", geo.r1));
    rows.push(("Lambda", geo.big_lambda));
    rows.push(("c_star", closed_form_rate(geo, consts, params)));
    if opts.use_optimized {
        rows.push(("c_opt", bundle.rates.c));
    }
    rows.push(("epsilon", bundle.rates.epsilon));
    rows.push(("C_wass2", wasserstein2_constant(geo, &bundle.rates, consts, params)));
    rows.push(("xi", bundle.controls.xi));
    if let PotentialKind::Quadratic { l } = bundle.pot.kind {
        rows.push(("c_gap", gaussian_spectral_gap(l, params)?));
    }
    let mut regime_note = None;
    if let (Some(r), Some(beta)) = (r_used, beta_used) {
        let ell = cfg.ell_value();
        match corollary_rate(consts.l, r, beta, ell, params) {
            Ok(cr) => {
                rows.push(("ell", cr.ell));
                rows.push(("Lambda1", cr.lambda1));
                rows.push(("corollary_gamma_form", cr.gamma_form));
                rows.push(("corollary_scaled_form", cr.scaled_form));
            }
            Err(e) => regime_note = Some(e.to_string()),
        }
    }

    let (emit_text, emit_csv) = cfg.formats()?;
    if emit_text {
        let width = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(0);
        for (name, value) in &rows {
            println!("{name:<width$}  {}", sig(*value));
        }
        if let Some(note) = &regime_note {
            println!("corollary unavailable: {note}");
        }
    }
    let csv_dest = out.map(PathBuf::from).or_else(|| {
        cfg.out_dir.as_ref().filter(|_| emit_csv).map(|d| Path::new(d).join("rates.csv"))
    });
    if let Some(dest) = csv_dest {
        let mut csv = String::from("name,value\n");
        for (name, value) in &rows {
            let _ = writeln!(csv, "{name},{}", sig(*value));
        }
        write_file(&dest, &csv)?;
    }
    Ok(true)
}

// ---------------------------------------------------------------------------
// metric

pub fn metric(config_path: &Path, out: &Path) -> CmdResult {
    let cfg = load_config(config_path)?;
    let bundle = cfg.build_bundle()?;
    let t = &bundle.table;
    let mut csv = String::from("s,phi,Phi,g,f,f_prime,f_second\n");
    for i in 0..t.grid.len() {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            sig(t.grid[i]),
            sig(t.phi[i]),
            sig(t.big_phi[i]),
            sig(t.g[i]),
            sig(t.f[i]),
            sig(t.f_prime[i]),
            sig(t.f_second[i]),
        );
    }
    write_file(out, &csv)?;
    println!(
        "metric table: {} nodes on [0, {}], f(R1) = {}, quadrature error ≤ {:.3e}",
        t.grid.len(),
        sig(t.r1()),
        sig(t.f_r1()),
        t.quad_error
    );
    Ok(true)
}

// ---------------------------------------------------------------------------
// simulate

pub fn simulate(
    config_path: &Path,
    out: &Path,
    pair_out: Option<&Path>,
    seed: Option<u64>,
) -> CmdResult {
    let cfg = load_config(config_path)?;
    let bundle = cfg.build_bundle()?;
    let ctx = bundle.context();
    let ens = cfg.ensemble_config(&bundle, seed)?;
    let series = run_ensemble(&ens, &ctx)?;
    write_file(out, &decay_csv(&series))?;
    if series.far_excursions > 0 {
        eprintln!(
            "warning: {} of {} pairs wandered past 1e3 times the drift radius; \
             the stated bounds do not cover such excursions",
            series.far_excursions, series.n_pairs
        );
    }
    let kappa = cfg.kappa.unwrap_or(DEFAULT_AUDIT_KAPPA);
    let audit =
        contraction_audit_with_kappa(&series, &bundle.rates, &bundle.geometry, &bundle.params, &ens, kappa)?;
    println!("audit: {}", if audit.passed { "PASS" } else { "FAIL" });
    println!("  rate c        = {}", sig(bundle.rates.c));
    println!("  worst margin  = {:.6e} at t = {}", audit.worst_margin, audit.worst_time);
    println!("  kappa         = {}", audit.kappa);
    println!("  note          : {}", audit.note);
    match fit_decay_rate(&series, (0.25 * ens.t_end, ens.t_end)) {
        Ok((rate, r2)) => {
            println!("  fitted rate   = {:.6e} (r^2 = {:.4}) over t in [{}, {}]",
                rate, r2, 0.25 * ens.t_end, ens.t_end);
        }
        Err(e) => println!("  fitted rate unavailable: {e}"),
    }
    if let Some(path) = pair_out {
        let traj = sample_pair_trajectory(&ens, &ctx, 0)?;
        write_file(path, &pair_csv(&traj))?;
    }
    Ok(audit.passed)
}

fn decay_csv(series: &DecaySeries) -> String {
    let mut csv = String::from("t,mean_rho,stderr_rho,mean_r,mean_G,mean_H_sum\n");
    for i in 0..series.times.len() {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            sig(series.times[i]),
            sig(series.mean_rho[i]),
            sig(series.stderr_rho[i]),
            sig(series.mean_r[i]),
            sig(series.mean_g[i]),
            sig(series.mean_h_sum[i]),
        );
    }
    csv
}

fn pair_csv(traj: &PairTrajectory) -> String {
    let mut csv = String::from("t,rho,r,G,absQ,absZ,rc,K\n");
    for rec in &traj.records {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{}",
            sig(rec.t),
            sig(rec.rho),
            sig(rec.r),
            sig(rec.g_weight),
            sig(rec.abs_q),
            sig(rec.abs_z),
            sig(rec.rc),
            sig(rec.k),
        );
    }
    csv
}

// ---------------------------------------------------------------------------
// verify

pub fn verify(config_path: &Path, suite: Suite, seed: Option<u64>) -> CmdResult {
    let cfg = load_config(config_path)?;
    let bundle = cfg.build_bundle()?;
    let seed = seed.or(cfg.seed).unwrap_or(0);
    let mut pass = true;
    if matches!(suite, Suite::Lyapunov | Suite::All) {
        pass &= verify_lyapunov(&bundle)?;
    }
    if matches!(suite, Suite::Metric | Suite::All) {
        pass &= verify_metric(&bundle)?;
    }
    if matches!(suite, Suite::Kcheck | Suite::All) {
        pass &= verify_kcheck(&bundle, seed)?;
    }
    if matches!(suite, Suite::Assumptions | Suite::All) {
        pass &= verify_assumptions(&bundle, seed)?;
    }
    println!("verify: {}", if pass { "PASS" } else { "FAIL" });
    Ok(pass)
}

fn status(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

/// 𝓛H ≤ γ(d + A − λH) on the default grid, up to 1e−9 absolute slack.
fn verify_lyapunov(bundle: &ModelBundle) -> Result<bool> {
    let grid = default_drift_grid(&bundle.pot, &bundle.params);
    let report = verify_lyapunov_drift(&bundle.pot, &bundle.consts, &bundle.params, &grid)?;
    let ok = report.ok(1e-9);
    println!(
        "lyapunov: max excess {:.3e} over {} grid points -> {}",
        report.max_excess,
        report.n_points,
        status(ok)
    );
    Ok(ok)
}

/// Table invariants (envelope, monotonicity, concavity, weight window, quadrature
/// error) plus admissibility of the rate the table was built with.
fn verify_metric(bundle: &ModelBundle) -> Result<bool> {
    let t = &bundle.table;
    let l = bundle.consts.l;
    let mut ok = true;
    let mut check = |name: &str, cond: bool| {
        if !cond {
            ok = false;
            println!("metric: {name} violated");
        }
    };
    let n = t.grid.len();
    check("f(0) = 0", t.f[0] == 0.0);
    check("phi(0) = 1", t.phi[0] == 1.0);
    for i in 0..n {
        let s = t.grid[i];
        let gauss = (-l * s * s / 8.0).exp();
        check("g in [1/2, 1]", t.g[i] >= 0.5 - 1e-12 && t.g[i] <= 1.0 + 1e-12);
        check("f'' <= 0", t.f_second[i] <= 0.0);
        check("f' = phi*g", (t.f_prime[i] - t.phi[i] * t.g[i]).abs() <= 1e-12 * t.f_prime[i]);
        check(
            "f' envelope",
            t.f_prime[i] <= gauss * (1.0 + 1e-12)
                && t.f_prime[i] >= 0.5 * (-2.0f64).exp() * gauss * (1.0 - 1e-12),
        );
        check("Phi cap", t.big_phi[i] <= (2.0 * std::f64::consts::PI / l).sqrt() * (1.0 + 1e-12));
        if i > 0 {
            check("f nondecreasing", t.f[i] >= t.f[i - 1]);
            check("f' nonincreasing", t.f_prime[i] <= t.f_prime[i - 1] * (1.0 + 1e-15));
            check("g nonincreasing", t.g[i] <= t.g[i - 1] * (1.0 + 1e-15));
        }
    }
    check("quadrature error", t.quad_error <= 1e-8 * t.f_r1());
    let report =
        check_rate_admissible(t.c, &bundle.geometry, &bundle.consts, &bundle.params)?;
    check("rate admissible", report.admissible);
    println!(
        "metric: {} nodes, quadrature error {:.3e}, admissibility margins {:?} -> {}",
        n,
        t.quad_error,
        report.margins,
        status(ok)
    );
    Ok(ok)
}

/// K(x, v, x′, v′) ≤ (1 + α)ξG on random pairs stratified over the coupling bands.
fn verify_kcheck(bundle: &ModelBundle, seed: u64) -> Result<bool> {
    let params = &bundle.params;
    let d = params.d;
    let xi = bundle.controls.xi;
    let r1 = bundle.geometry.r1;
    let eps = bundle.rates.epsilon;
    let ceiling_coeff = (1.0 + bundle.geometry.alpha) * xi;
    let mut stream = NoiseStream::new(seed, 0x6b63_6865_636b);
    let n_trials = 100_000usize;
    let mut worst = f64::NEG_INFINITY;
    for trial in 0..n_trials {
        let scale = match trial % 3 {
            0 => 0.3 * xi,
            1 => 0.5 * r1,
            _ => 3.0 * r1,
        } / (d as f64).sqrt();
        let x: Vec<f64> = (0..d).map(|_| 12.0 * (stream.uniform() - 0.5)).collect();
        let v: Vec<f64> = (0..d).map(|_| 16.0 * (stream.uniform() - 0.5)).collect();
        let x2: Vec<f64> = x.iter().map(|t| t + scale * stream.gaussian()).collect();
        let v2: Vec<f64> = v.iter().map(|t| t + scale * stream.gaussian()).collect();
        let state = CoupledState::new(PhaseState::new(x, v)?, PhaseState::new(x2, v2)?)?;
        let k = evaluate_k(
            &state,
            &bundle.table,
            &bundle.geometry,
            &bundle.rates,
            &bundle.consts,
            &bundle.pot,
            params,
            &bundle.controls,
        )?;
        let h = lyapunov_h(&bundle.pot, &bundle.consts, params, &state.first())?;
        let h2 = lyapunov_h(&bundle.pot, &bundle.consts, params, &state.second())?;
        let g_weight = 1.0 + eps * h + eps * h2;
        worst = worst.max(k - ceiling_coeff * g_weight);
    }
    let ok = worst <= 1e-9;
    println!("kcheck: worst K excess {worst:.3e} over {n_trials} pairs -> {}", status(ok));
    Ok(ok)
}

/// Sampled margins of the curvature/growth conditions the rate theory assumes.
fn verify_assumptions(bundle: &ModelBundle, seed: u64) -> Result<bool> {
    let report = check_assumptions(&bundle.pot, &bundle.params, &bundle.consts, 5000, seed)?;
    let ok = report.ok(1e-9);
    println!(
        "assumptions: margins a0 {:.3e}, a1 {:.3e}, a2' {:.3e}, a2 {:.3e} over {} samples -> {}",
        report.a0_margin,
        report.a1_margin,
        report.a2prime_margin,
        report.a2_margin,
        report.n_samples,
        status(ok)
    );
    Ok(ok)
}

// ---------------------------------------------------------------------------
// scan

pub fn scan(
    config_path: &Path,
    param: &str,
    values_raw: &str,
    out: &Path,
    seed: Option<u64>,
) -> CmdResult {
    if param != "a" {
        return Err(Error::Config(format!(
            "unknown scan parameter `{param}`; only `a` is supported"
        ))
        .into());
    }
    let values = values_raw
        .split(',')
        .map(|tok| {
            let tok = tok.trim();
            tok.parse::<f64>()
                .map_err(|_| Error::Config(format!("`--values` entry {tok:?} is not a number")))
        })
        .collect::<Result<Vec<f64>>>()?;
    let cfg = load_config(config_path)?;
    let bundle = cfg.build_bundle()?;
    let empirical = if cfg.scan_empirical.unwrap_or(false) {
        Some(cfg.ensemble_config(&bundle, seed)?)
    } else {
        None
    };
    let table = scaling_scan(&bundle, &values, empirical.as_ref())?;
    let mut csv = String::from("a,gamma,c_closed,c_corollary,c_times_a,empirical_rate\n");
    for row in &table.rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            sig(row.a),
            sig(row.gamma),
            sig(row.c_closed),
            sig(row.c_corollary),
            sig(row.c_times_a),
            sig(row.empirical_rate),
        );
        if let Some(note) = &row.note {
            eprintln!("note (a = {}): {note}", row.a);
        }
    }
    write_file(out, &csv)?;
    println!("scan: {} rows at gamma*a = {}", table.rows.len(), sig(table.gamma_a));
    Ok(true)
}
