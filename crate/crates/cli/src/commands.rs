//! The five subcommands. Every output file starts with a comment line
//! recording the tool version and the hash of the fully-resolved
//! configuration, so results can always be traced back to their inputs.

use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use stemflow_core::analysis::{
    classify_regime, equilibria, estimate_persistence, positive_equilibrium, Regime,
};
use stemflow_core::delay_kernel::solve_maturation;
use stemflow_core::ingredients::{check_hypotheses, HypEntry, Verdict};
use stemflow_core::integrator::{integrate, make_admissible, verify_voc, verify_w_closed_form};

use crate::config::{build, BuiltModel, ConfigError, ScenarioConfig, SweepSpec};
use crate::ensembles;

#[derive(Debug)]
pub enum CliError {
    /// Bad configuration or overrides: exit code 2.
    Config(ConfigError),
    /// A module reported a fatal error at runtime: exit code 1.
    Runtime(String),
    /// `verify` ran to completion but at least one check failed: exit code 1.
    ChecksFailed,
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) | CliError::ChecksFailed => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "{e}"),
            CliError::Runtime(msg) => write!(f, "{msg}"),
            CliError::ChecksFailed => write!(f, "verification failed"),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

fn rt(e: impl fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

/// Round-trip float formatting (17 significant digits).
fn fx(v: f64) -> String {
    format!("{v:.16e}")
}

/// Display formatting matching the documented summary lines (16 digits).
fn fd(v: f64) -> String {
    format!("{v:.15e}")
}

fn create_output(dir: &Path, name: &str, hash: &str) -> Result<BufWriter<File>, CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    let file = File::create(&path)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
    let mut out = BufWriter::new(file);
    writeln!(out, "# stemflow {} config sha256={}", env!("CARGO_PKG_VERSION"), hash)
        .map_err(rt)?;
    Ok(out)
}

pub fn regime_label(regime: Regime) -> &'static str {
    match regime {
        Regime::ZeroGas => "ZeroGAS",
        Regime::PersistentStrong => "PersistentStrong",
        Regime::OpenCase => "OpenCase",
        Regime::PersistentWeakOnly => "PersistentWeakOnly",
        Regime::Indeterminate => "Indeterminate",
    }
}

fn verdict_label(verdict: Verdict) -> &'static str {
    match verdict {
        Verdict::HoldsOnGrid => "holds_on_grid",
        Verdict::Fails => "fails",
        Verdict::NotApplicable => "not_applicable",
    }
}

fn hypothesis_row(entry: &HypEntry) -> String {
    let (wy, wz, wv) = match &entry.witness {
        Some(w) => (
            w.y.map_or_else(|| "-".to_string(), fx),
            fx(w.z),
            fx(w.value),
        ),
        None => ("-".to_string(), "-".to_string(), "-".to_string()),
    };
    let consts = entry
        .constants
        .iter()
        .map(|(name, v)| format!("{name}={}", fx(*v)))
        .collect::<Vec<_>>()
        .join(";");
    format!(
        "{},{},{},{},{},{}",
        entry.id.name(),
        verdict_label(entry.verdict),
        wy,
        wz,
        wv,
        consts
    )
}

// ---------------------------------------------------------------------------
// run
// ---------------------------------------------------------------------------

pub fn cmd_run(cfg: &ScenarioConfig, built: &BuiltModel, hash: &str) -> Result<(), CliError> {
    let BuiltModel { set, solver, kernel, .. } = built;
    let h = set.geometry().h;
    let pair =
        ensembles::constant_pair(cfg.ic_w, cfg.ic_v, h, cfg.ic_knots).map_err(CliError::Runtime)?;
    let ic = make_admissible(set, pair, kernel).map_err(rt)?;
    let traj = integrate(set, &ic, cfg.horizon, solver).map_err(rt)?;

    let mut out = create_output(&cfg.dir, "trajectory.csv", hash)?;
    writeln!(out, "t,w,v,dw,dv,tau,j").map_err(rt)?;
    let times = traj.times();
    for (i, &t) in times.iter().enumerate() {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            fx(t),
            fx(traj.w()[i]),
            fx(traj.v()[i]),
            fx(traj.dw()[i]),
            fx(traj.dv()[i]),
            fx(traj.tau()[i]),
            fx(traj.j()[i]),
        )
        .map_err(rt)?;
    }
    out.flush().map_err(rt)?;

    let defect_w = verify_w_closed_form(&traj, set).map_err(rt)?;
    let defect_voc = verify_voc(&traj, set).map_err(rt)?;
    let tau_lo = traj.tau().iter().copied().fold(f64::INFINITY, f64::min);
    let tau_hi = traj.tau().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let final_w = *traj.w().last().expect("nonempty trajectory");
    let final_v = *traj.v().last().expect("nonempty trajectory");

    let mut sum = create_output(&cfg.dir, "summary.txt", hash)?;
    for (key, value) in [
        ("horizon", fx(cfg.horizon)),
        ("dt", fx(solver.dt())),
        ("passes", cfg.passes.to_string()),
        ("substeps", cfg.substeps.to_string()),
        ("grid_points", times.len().to_string()),
        ("final_w", fx(final_w)),
        ("final_v", fx(final_v)),
        ("tau_min_observed", fx(tau_lo)),
        ("tau_max_observed", fx(tau_hi)),
        ("tau_min_certified", fx(set.geometry().tau_min())),
        ("tau_max_certified", fx(set.geometry().tau_max())),
        ("defect_stem_closed_form", fx(defect_w)),
        ("defect_variation_of_constants", fx(defect_voc)),
        ("max_corrector_delta", fx(traj.corrector_delta())),
        ("compat_residual", fx(ic.compat_residual())),
    ] {
        writeln!(sum, "{key} = {value}").map_err(rt)?;
    }
    sum.flush().map_err(rt)?;

    if let Some(seed) = cfg.seed {
        if cfg.ensemble > 0 {
            let members = ensembles::generate(
                set,
                cfg.ensemble,
                seed,
                cfg.ic_lo,
                cfg.ic_hi,
                cfg.ic_knots,
                kernel,
            )
            .map_err(CliError::Runtime)?;
            let rows: Result<Vec<String>, CliError> = members
                .par_iter()
                .map(|member| {
                    let traj = integrate(set, &member.ic, cfg.horizon, solver).map_err(rt)?;
                    let w0 = member.ic.pair().w().eval(0.0).map_err(rt)?.0;
                    let v0 = member.ic.pair().v().eval(0.0).map_err(rt)?.0;
                    Ok(format!(
                        "{},{},{},{},{}",
                        member.seed,
                        fx(w0),
                        fx(v0),
                        fx(*traj.w().last().expect("nonempty")),
                        fx(*traj.v().last().expect("nonempty")),
                    ))
                })
                .collect();
            let mut ens = create_output(&cfg.dir, "ensemble.csv", hash)?;
            writeln!(ens, "seed,w0,v0,final_w,final_v").map_err(rt)?;
            for row in rows? {
                writeln!(ens, "{row}").map_err(rt)?;
            }
            ens.flush().map_err(rt)?;
        }
    }

    println!(
        "run: {} grid points to t={}, final (w, v) = ({}, {}), defects stem={:.3e} voc={:.3e}",
        times.len(),
        fd(cfg.horizon),
        fd(final_w),
        fd(final_v),
        defect_w,
        defect_voc,
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// classify
// ---------------------------------------------------------------------------

pub fn cmd_classify(cfg: &ScenarioConfig, built: &BuiltModel, hash: &str) -> Result<(), CliError> {
    let report = check_hypotheses(&built.set, &built.grid).map_err(rt)?;
    let cls = classify_regime(&built.set, &report, &built.grid).map_err(rt)?;

    let mut out = create_output(&cfg.dir, "classify.txt", hash)?;
    writeln!(out, "hypothesis,verdict,witness_y,witness_z,witness_value,constants").map_err(rt)?;
    for entry in &report.entries {
        writeln!(out, "{}", hypothesis_row(entry)).map_err(rt)?;
    }
    let mut summary = format!(
        "regime={} q0={:.1e} gamma0={:.1e} dissipative={}",
        regime_label(cls.regime),
        cls.q0,
        cls.gamma0,
        cls.dissipative
    );
    if let Some(root) = cls.first_root {
        summary.push_str(&format!(" z_bar={:.6e}", root));
    }
    writeln!(out).map_err(rt)?;
    writeln!(out, "{summary}").map_err(rt)?;
    writeln!(out, "justification: {}", cls.justification).map_err(rt)?;
    out.flush().map_err(rt)?;

    println!("{summary}");
    Ok(())
}

// ---------------------------------------------------------------------------
// equilibria
// ---------------------------------------------------------------------------

pub fn cmd_equilibria(
    cfg: &ScenarioConfig,
    built: &BuiltModel,
    hash: &str,
) -> Result<(), CliError> {
    let eqs = equilibria(&built.set, &built.grid, &built.kernel).map_err(rt)?;

    let mut out = create_output(&cfg.dir, "equilibria.csv", hash)?;
    writeln!(out, "kind,v,w,tau").map_err(rt)?;
    writeln!(
        out,
        "trivial,{},{},{}",
        fx(eqs.trivial.v),
        fx(eqs.trivial.w),
        fx(eqs.trivial.tau)
    )
    .map_err(rt)?;
    if let Some(pos) = &eqs.positive {
        writeln!(out, "positive,{},{},{}", fx(pos.v), fx(pos.w), fx(pos.tau)).map_err(rt)?;
    }
    out.flush().map_err(rt)?;

    match &eqs.positive {
        Some(pos) => println!("v={}, w={}", fd(pos.v), fd(pos.w)),
        None => println!("no positive equilibrium"),
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

struct Check {
    name: &'static str,
    value: f64,
    tolerance: f64,
    /// true when the check wants `value >= tolerance` instead of `<=`.
    lower_bound: bool,
}

impl Check {
    fn passed(&self) -> bool {
        let ok = if self.lower_bound {
            self.value >= self.tolerance
        } else {
            self.value <= self.tolerance
        };
        ok && self.value.is_finite()
    }
}

pub fn cmd_verify(cfg: &ScenarioConfig, built: &BuiltModel, hash: &str) -> Result<(), CliError> {
    let BuiltModel { set, solver, kernel, .. } = built;
    let geom = *set.geometry();
    let mut checks = Vec::new();

    // Residuals of the two integrated forms along the scenario trajectory.
    let pair = ensembles::constant_pair(cfg.ic_w, cfg.ic_v, geom.h, cfg.ic_knots)
        .map_err(CliError::Runtime)?;
    let ic = make_admissible(set, pair, kernel).map_err(rt)?;
    let traj = integrate(set, &ic, cfg.horizon, solver).map_err(rt)?;
    checks.push(Check {
        name: "stem_closed_form",
        value: verify_w_closed_form(&traj, set).map_err(rt)?,
        tolerance: 1e-6,
        lower_bound: false,
    });
    checks.push(Check {
        name: "variation_of_constants",
        value: verify_voc(&traj, set).map_err(rt)?,
        tolerance: 1e-5,
        lower_bound: false,
    });

    // Step-halving study against a fine reference; fourth-order scheme, so
    // the observed order should stay clearly above three.
    let t_conv = cfg.horizon.min(10.0);
    let dt0 = geom.tau_min() / 4.0;
    let reference = integrate(set, &ic, t_conv, &solver.with_dt(&geom, dt0 / 8.0).map_err(rt)?)
        .map_err(rt)?;
    let (w_ref, _) = reference.eval_w(t_conv).map_err(rt)?;
    let (v_ref, _) = reference.eval_v(t_conv).map_err(rt)?;
    let mut errs = Vec::new();
    for div in [1.0, 2.0, 4.0] {
        let run = integrate(set, &ic, t_conv, &solver.with_dt(&geom, dt0 / div).map_err(rt)?)
            .map_err(rt)?;
        let ew = (run.eval_w(t_conv).map_err(rt)?.0 - w_ref).abs();
        let ev = (run.eval_v(t_conv).map_err(rt)?.0 - v_ref).abs();
        errs.push(ew.max(ev));
    }
    let orders = [(errs[0] / errs[1]).log2(), (errs[1] / errs[2]).log2()];
    checks.push(Check {
        name: "convergence_order",
        value: orders.iter().copied().fold(f64::INFINITY, f64::min),
        tolerance: 3.0,
        lower_bound: true,
    });

    // Certified delay window over a seeded batch of histories.
    let members = ensembles::generate(
        set,
        200,
        cfg.seed.unwrap_or(0),
        cfg.ic_lo,
        cfg.ic_hi,
        cfg.ic_knots,
        kernel,
    )
    .map_err(CliError::Runtime)?;
    let mut excess = 0.0_f64;
    for member in &members {
        let sol = solve_maturation(set, member.ic.pair().v(), kernel).map_err(rt)?;
        excess = excess.max(geom.tau_min() - sol.tau).max(sol.tau - geom.tau_max());
    }
    checks.push(Check {
        name: "delay_window",
        value: excess.max(0.0),
        tolerance: cfg.atol,
        lower_bound: false,
    });

    let mut out = create_output(&cfg.dir, "verify.txt", hash)?;
    writeln!(out, "check,value,tolerance,verdict").map_err(rt)?;
    let mut all_ok = true;
    for check in &checks {
        let ok = check.passed();
        all_ok &= ok;
        let verdict = if ok { "pass" } else { "fail" };
        let line = format!(
            "{},{},{},{}",
            check.name,
            fx(check.value),
            fx(check.tolerance),
            verdict
        );
        writeln!(out, "{line}").map_err(rt)?;
        println!(
            "verify {}: value={:.3e} tolerance={:.3e} {}",
            check.name,
            check.value,
            check.tolerance,
            if ok { "PASS" } else { "FAIL" }
        );
    }
    writeln!(out, "overall,{}", if all_ok { "pass" } else { "fail" }).map_err(rt)?;
    out.flush().map_err(rt)?;

    if all_ok {
        println!("verify: PASS");
        Ok(())
    } else {
        println!("verify: FAIL");
        Err(CliError::ChecksFailed)
    }
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

struct CellResult {
    regime: &'static str,
    q0: f64,
    z_bar: Option<f64>,
    w_bar: Option<f64>,
    eps_hat: Option<f64>,
}

fn apply_sweep_value(
    cfg: &mut ScenarioConfig,
    param: &str,
    value: f64,
) -> Result<(), CliError> {
    let dot = param.find('.').ok_or_else(|| {
        CliError::Config(ConfigError::Validation {
            msg: format!("sweep parameter `{param}` must look like section.key"),
        })
    })?;
    cfg.set_value(&param[..dot], &param[dot + 1..], &fx(value), 0)
        .map_err(CliError::Config)
}

fn eval_cell(
    base: &ScenarioConfig,
    spec: &SweepSpec,
    index: usize,
    v1: f64,
    v2: Option<f64>,
) -> Result<CellResult, CliError> {
    let mut cfg = base.clone();
    apply_sweep_value(&mut cfg, &spec.param, v1)?;
    if let Some(v2) = v2 {
        let param2 = spec.param2.as_deref().expect("value implies param2");
        apply_sweep_value(&mut cfg, param2, v2)?;
    }
    let built = build(&cfg)?;
    let report = check_hypotheses(&built.set, &built.grid).map_err(rt)?;
    let cls = classify_regime(&built.set, &report, &built.grid).map_err(rt)?;
    let eq = positive_equilibrium(&built.set, &built.grid, &built.kernel).map_err(rt)?;

    let eps_hat = match cfg.seed {
        Some(seed) if cfg.ensemble > 0 && cfg.window > 0.0 && cfg.window < cfg.horizon => {
            let cell_seed = seed.wrapping_add(index as u64 * 10007);
            let members = ensembles::generate(
                &built.set,
                cfg.ensemble,
                cell_seed,
                cfg.ic_lo,
                cfg.ic_hi,
                cfg.ic_knots,
                &built.kernel,
            )
            .map_err(CliError::Runtime)?;
            let persist = estimate_persistence(
                &built.set,
                &members,
                cfg.measure.to_core(),
                cfg.horizon,
                cfg.window,
                &built.solver,
            )
            .map_err(rt)?;
            Some(persist.eps_hat)
        }
        _ => None,
    };

    Ok(CellResult {
        regime: regime_label(cls.regime),
        q0: cls.q0,
        z_bar: eq.as_ref().map(|e| e.v),
        w_bar: eq.as_ref().map(|e| e.w),
        eps_hat,
    })
}

pub fn cmd_sweep(cfg: &ScenarioConfig, hash: &str) -> Result<(), CliError> {
    let spec = cfg.sweep()?.ok_or_else(|| {
        CliError::Config(ConfigError::Validation {
            msg: "sweep requires a [sweep] section with param and values".to_string(),
        })
    })?;

    let cells: Vec<(f64, Option<f64>)> = if spec.param2.is_some() {
        spec.values
            .iter()
            .flat_map(|&v1| spec.values2.iter().map(move |&v2| (v1, Some(v2))))
            .collect()
    } else {
        spec.values.iter().map(|&v| (v, None)).collect()
    };

    let fmt_opt = |v: Option<f64>| v.map_or_else(|| "NaN".to_string(), fx);
    let rows: Vec<String> = cells
        .par_iter()
        .enumerate()
        .map(|(index, &(v1, v2))| {
            let head = match v2 {
                None => format!("{},{}", spec.param, fx(v1)),
                Some(v2) => format!(
                    "{},{},{},{}",
                    spec.param,
                    fx(v1),
                    spec.param2.as_deref().expect("value implies param2"),
                    fx(v2)
                ),
            };
            match eval_cell(cfg, &spec, index, v1, v2) {
                Ok(cell) => format!(
                    "{head},{},{},{},{},{}",
                    cell.regime,
                    fx(cell.q0),
                    fmt_opt(cell.z_bar),
                    fmt_opt(cell.w_bar),
                    fmt_opt(cell.eps_hat)
                ),
                Err(e) => {
                    eprintln!("sweep cell {index} ({head}): {e}");
                    format!("{head},error,NaN,NaN,NaN,NaN")
                }
            }
        })
        .collect();

    let mut out = create_output(&cfg.dir, "sweep.csv", hash)?;
    if spec.param2.is_some() {
        writeln!(out, "param,value,param2,value2,regime,q0,z_bar,w_bar,eps_hat").map_err(rt)?;
    } else {
        writeln!(out, "param,value,regime,q0,z_bar,w_bar,eps_hat").map_err(rt)?;
    }
    for row in &rows {
        writeln!(out, "{row}").map_err(rt)?;
    }
    out.flush().map_err(rt)?;

    println!("sweep: {} cells -> {}", rows.len(), cfg.dir.join("sweep.csv").display());
    Ok(())
}
