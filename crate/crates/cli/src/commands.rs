use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde_json::{json, Value};
use wavecert::certificates::{diagnose, Certificate, DecisionVars, DEFAULT_MARGIN};
use wavecert::observer::{recover as run_recovery, RecoveryConfig, DEFAULT_THRESHOLD};
use wavecert::pde::{run_with, snapshot_csv, trajectory_header, trajectory_row, Grid, Mode};
use wavecert::search::{complete_vars, find_feasible_vars, maximize_regional_radius, minimal_observability_time, sweep_each};
use wavecert::{to_json, Error};

use crate::config::{self, ProblemSpec, RunConfig};
use crate::trace;
use crate::Outcome;

fn load(path: &Path, subcommand: &str) -> Result<RunConfig> {
    let cfg = config::load(path)?;
    cfg.check_mode(subcommand)?;
    Ok(cfg)
}

fn emit(value: &Value) {
    // A closed pipe (e.g. `| head`) is not worth a panic.
    let _ = writeln!(std::io::stdout().lock(), "{}", to_json(value));
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("cannot write {}", path.display()))
}

/// Maps infeasibility to a negative outcome with a JSON report; other
/// library errors stay errors.
fn negative(err: Error) -> Result<Outcome> {
    match err {
        Error::Infeasible { reason, best_margin } => {
            let mut v = json!({"feasible": false, "reason": reason});
            if let Some(m) = best_margin {
                v["best_margin"] = json!(m);
            }
            emit(&v);
            Ok(Outcome::Negative)
        }
        other => Err(other.into()),
    }
}

fn rejection(failing: &str, margins: &wavecert::certificates::Margins) -> Outcome {
    emit(&json!({"feasible": false, "failing": failing, "margins": margins}));
    Outcome::Negative
}

enum VarsDoc {
    Vars(DecisionVars),
    Certificate(Box<Certificate>),
}

fn read_vars(path: &Path) -> Result<VarsDoc> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let value: Value =
        serde_json::from_str(&text).map_err(|e| anyhow::anyhow!("{}:{}:{}: {e}", path.display(), e.line(), e.column()))?;
    let cert = match value.get("certificate") {
        Some(c) => Some(c.clone()),
        None if value.get("params").is_some() => Some(value),
        None => {
            let vars: DecisionVars = serde_json::from_value(value).with_context(|| format!("{}: decision variables", path.display()))?;
            return Ok(VarsDoc::Vars(vars));
        }
    };
    let cert: Certificate = serde_json::from_value(cert.expect("set above")).with_context(|| format!("{}: certificate", path.display()))?;
    Ok(VarsDoc::Certificate(Box::new(cert)))
}

pub fn certify(config_path: &Path, vars_path: Option<&Path>, margin: Option<f64>) -> Result<Outcome> {
    let cfg = load(config_path, "certify")?;
    let spec = cfg.problem()?;
    let margin = margin.unwrap_or(DEFAULT_MARGIN);
    let doc = match vars_path {
        Some(p) => Some(read_vars(p)?),
        None => cfg.vars.map(VarsDoc::Vars),
    };
    let (params, vars) = match doc {
        Some(VarsDoc::Certificate(cert)) => {
            let p = cert.params;
            if p.n != spec.n || p.k != spec.k || p.g1 != spec.g1 {
                bail!("certificate parameters (n, k, g1) do not match the config problem");
            }
            match Certificate::issue(cert.params, cert.vars, margin)? {
                Ok(_) => {
                    cert.verify(margin)?;
                    emit(&serde_json::to_value(&*cert)?);
                    return Ok(Outcome::Success);
                }
                Err(rej) => return Ok(rejection(rej.failing, &rej.margins)),
            }
        }
        Some(VarsDoc::Vars(v)) => {
            let params = spec.params_with_delta()?;
            let mut search = cfg.search_for(spec);
            search.margin = margin;
            (params, complete_vars(&params, v, &search)?)
        }
        None => {
            let params = spec.params_with_delta()?;
            let mut search = cfg.search_for(spec);
            search.margin = margin;
            match find_feasible_vars(&params, &search) {
                Ok(v) => (params, v),
                Err(e) => return negative(e),
            }
        }
    };
    match Certificate::issue(params, vars, margin)? {
        Ok(cert) => {
            emit(&serde_json::to_value(&cert)?);
            Ok(Outcome::Success)
        }
        Err(rej) => {
            let (_, margins) = diagnose(&params, &vars, margin)?;
            Ok(rejection(rej.failing, &margins))
        }
    }
}

pub fn min_time(config_path: &Path, tol: Option<f64>, out: Option<&Path>) -> Result<Outcome> {
    let cfg = load(config_path, "min-time")?;
    let spec = cfg.problem()?;
    let mut search = cfg.search_for(spec);
    if let Some(t) = tol {
        search.tstar_tol = t;
    }
    let mt = match minimal_observability_time(&spec.params(), &search) {
        Ok(mt) => mt,
        Err(e) => return negative(e),
    };
    if let Some(path) = out {
        write_file(path, &mt.certificate.to_json())?;
    }
    emit(&json!({
        "t_star": mt.t_star,
        "delta": mt.delta,
        "certificate": mt.certificate,
    }));
    Ok(Outcome::Success)
}

pub fn regional(config_path: &Path, out: Option<&Path>) -> Result<Outcome> {
    let cfg = load(config_path, "regional")?;
    let spec = cfg.problem()?;
    if spec.d.is_none() {
        bail!("regional needs problem.d (local Lipschitz radius)");
    }
    let search = cfg.search_for(spec);
    let best = match maximize_regional_radius(&spec.params(), &search) {
        Ok(b) => b,
        Err(e) => return negative(e),
    };
    if let Some(path) = out {
        write_file(path, &best.certificate.to_json())?;
    }
    let mut v = json!({"d0": best.d0, "certificate": best.certificate});
    if let Some(t) = best.t_max {
        v["t_max"] = json!(t);
    }
    emit(&v);
    Ok(Outcome::Success)
}

pub fn simulate(config_path: &Path, out: &Path) -> Result<Outcome> {
    let cfg = load(config_path, "simulate")?;
    let sim = cfg.sim()?;
    let horizon = sim.horizon.context("sim.horizon is required")?;
    let grid = sim.grid(horizon, Mode::Plant)?;
    let initial = sim.initial.as_ref().context("sim.initial is required")?.field(&grid)?;
    let nl = sim.nonlinearity.build();
    let chi = sim.chi.unwrap_or(0.0);
    let k = cfg.problem.map_or(0.0, |p| p.k);

    let file = fs::File::create(out).with_context(|| format!("cannot write {}", out.display()))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "{}", trajectory_header(&grid))?;
    let result = run_with(&initial, horizon, &grid, &nl, None, |f| {
        writeln!(w, "{}", trajectory_row(f, &grid, chi, k)).map_err(|e| Error::Config(format!("write failed: {e}")))
    })?;
    w.flush()?;
    if let Some(path) = &sim.snapshot {
        write_file(path, &snapshot_csv(&result.field, &grid))?;
    }
    Ok(Outcome::Success)
}

pub fn recover(config_path: &Path, trace_path: &Path, iterations: usize, out: &Path) -> Result<Outcome> {
    let cfg = load(config_path, "recover")?;
    let spec: &ProblemSpec = cfg.problem()?;
    let sim = cfg.sim()?;
    let table = trace::read(trace_path)?;
    let horizon = table.horizon();
    if let Some(h) = sim.horizon {
        if (h - horizon).abs() > 1e-9 * h.max(1.0) {
            bail!("sim.horizon = {h} but the trace spans {horizon}");
        }
    }
    let dt = sim.dt.unwrap_or(table.dt()?);
    let grid = Grid::new(sim.dim, sim.points(), dt, Mode::Plant)?;
    let t0 = table.t0();
    let measurements = table.into_trace(&grid)?;

    let mut rc = RecoveryConfig::new(spec.k, horizon, iterations, grid.clone(), sim.nonlinearity.build())
        .with_threshold(sim.threshold.unwrap_or(DEFAULT_THRESHOLD));
    if let Some(init) = &sim.initial {
        rc = rc.with_truth(init.field(&grid)?.at_time(t0));
    }
    if let (Some(vars), Some(_)) = (cfg.vars, spec.delta) {
        if let Ok(cert) = Certificate::issue(spec.params(), vars, DEFAULT_MARGIN)? {
            rc = rc.with_certificate(cert);
        }
    }
    let run = run_recovery(&measurements, &rc)?;
    write_file(out, &run.to_json())?;
    if let Some(path) = &sim.snapshot {
        write_file(path, &snapshot_csv(&run.recovered, &grid))?;
    }
    eprintln!(
        "{} after {} iterations{}",
        if run.converged { "converged" } else { "not converged" },
        run.iterations.len(),
        run.final_error_vs_truth
            .map(|e| format!(", relative error vs truth {e:.3e}"))
            .unwrap_or_default()
    );
    Ok(if run.converged { Outcome::Success } else { Outcome::Negative })
}

pub fn sweep(config_path: &Path, jobs: usize, out: &Path) -> Result<Outcome> {
    let cfg = load(config_path, "sweep")?;
    let problems = cfg
        .problems
        .as_ref()
        .filter(|p| !p.is_empty())
        .context("sweep needs a non-empty \"problems\" list")?;
    if jobs == 0 {
        bail!("--jobs must be at least 1");
    }
    let work: Vec<_> = problems.iter().map(|p| (p.params(), cfg.search_for(p))).collect();
    let result = sweep_each(&work, jobs)?;
    write_file(out, &result.to_csv())?;
    Ok(Outcome::Success)
}
