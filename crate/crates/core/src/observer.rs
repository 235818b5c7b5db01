//! Iterative forward/backward observer recovering the initial state of
//! the wave equation from Γ_N velocity measurements over `[t₀, t₀ + T]`.
//!
//! Iteration `m` runs the forward observer from the previous backward
//! estimate at `t₀` (zero at `m = 1`), then the backward observer from the
//! forward terminal state down to `t₀`.

use serde::Serialize;

use crate::certificates::{compute_alpha_beta, compute_iss_gain, contraction_rate, AlphaBetaMode, Certificate};
use crate::error::{Error, Result};
use crate::pde::{energy, lyapunov, run_with, step, BoundaryTrace, Grid, Mode, Nonlinearity, WaveField};

pub const DEFAULT_THRESHOLD: f64 = 1e-3;
pub const CONTRACTION_SLACK: f64 = 0.1;
/// `V_b(m)/V_b(0)` below this is roundoff; ratios of such values carry no
/// information about contraction.
pub const ROUNDOFF_FLOOR: f64 = 1e-20;
const DIVERGENCE_FACTOR: f64 = 1e6;

#[derive(Debug, Clone)]
pub struct RecoveryConfig {
    pub k: f64,
    pub horizon: f64,
    pub iterations: usize,
    pub grid: Grid,
    pub nonlinearity: Nonlinearity,
    pub convergence_threshold: f64,
    pub certificate: Option<Certificate>,
    /// Known initial state. When present, convergence is judged by the
    /// error against it and the per-iteration error records are filled in.
    pub truth: Option<WaveField>,
}

impl RecoveryConfig {
    pub fn new(k: f64, horizon: f64, iterations: usize, grid: Grid, nonlinearity: Nonlinearity) -> Self {
        RecoveryConfig {
            k,
            horizon,
            iterations,
            grid,
            nonlinearity,
            convergence_threshold: DEFAULT_THRESHOLD,
            certificate: None,
            truth: None,
        }
    }

    pub fn with_certificate(mut self, c: Certificate) -> Self {
        self.certificate = Some(c);
        self
    }

    pub fn with_truth(mut self, truth: WaveField) -> Self {
        self.truth = Some(truth);
        self
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.convergence_threshold = threshold;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations < 1 {
            return Err(Error::invalid("iterations must be >= 1"));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::invalid("horizon must be positive"));
        }
        if !(self.convergence_threshold > 0.0) {
            return Err(Error::invalid("convergence threshold must be positive"));
        }
        if !(self.k >= 0.0 && self.k.is_finite()) {
            return Err(Error::invalid("injection gain k must be finite and >= 0"));
        }
        if let Some(t) = &self.truth {
            t.validate(&self.grid)?;
        }
        self.grid.steps_for(self.horizon)?;
        Ok(())
    }

    fn chi(&self) -> f64 {
        self.certificate.as_ref().and_then(|c| c.vars.chi).unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub m: usize,
    /// Energy of the backward error at t₀ (needs the true initial state).
    #[serde(rename = "E_b_t0", skip_serializing_if = "Option::is_none")]
    pub e_b_t0: Option<f64>,
    #[serde(rename = "V_b_t0", skip_serializing_if = "Option::is_none")]
    pub v_b_t0: Option<f64>,
    /// `E_b(m)/E_b(m−1)`; without the true state, the ratio of successive
    /// increment energies from `m = 2` on.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ratio: Option<f64>,
    /// Relative energy-norm change from the previous estimate.
    #[serde(skip)]
    pub change: f64,
    /// Largest forward/backward error energy seen during the iteration.
    #[serde(skip)]
    pub max_error_energy: Option<f64>,
    /// Largest `|ẑ|` over both passes (and `|z|` when the truth is known).
    #[serde(skip)]
    pub max_abs_state: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecoveryRun {
    pub iterations: Vec<IterationRecord>,
    pub converged: bool,
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub diverged: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_error_vs_truth: Option<f64>,
    #[serde(skip)]
    pub recovered: WaveField,
    #[serde(skip)]
    pub k: f64,
    #[serde(skip)]
    pub horizon: f64,
    /// `E` and `V` of the zero-guess error, i.e. of the true state.
    #[serde(skip)]
    pub e_b_initial: Option<f64>,
    #[serde(skip)]
    pub v_b_initial: Option<f64>,
}

impl RecoveryRun {
    pub fn to_json(&self) -> String {
        crate::to_json(self)
    }

    /// Regional guard `max|z + (θ−1)e| ≤ d` at θ ∈ {0, 1} over every
    /// recorded level.
    pub fn within_radius(&self, d: f64) -> bool {
        self.iterations.iter().all(|r| r.max_abs_state <= d)
    }
}

/// State of the plant advanced in lockstep with an observer pass.
struct Shadow<'a> {
    field: WaveField,
    grid: Grid,
    zeros: Vec<f64>,
    nl: &'a Nonlinearity,
}

impl<'a> Shadow<'a> {
    fn new(field: WaveField, grid: Grid, nl: &'a Nonlinearity) -> Self {
        let zeros = vec![0.0; grid.neumann_nodes().len()];
        Shadow { field, grid, zeros, nl }
    }

    fn advance(&mut self) -> Result<()> {
        let input = match self.grid.mode() {
            Mode::Plant => None,
            _ => Some((&self.zeros[..], &self.zeros[..])),
        };
        self.field = step(&self.field, &self.grid, self.nl, input)?;
        Ok(())
    }
}

struct PassStats {
    field: WaveField,
    max_energy: f64,
    max_abs: f64,
    max_error_energy: Option<f64>,
    shadow_end: Option<WaveField>,
}

fn pass(
    start: &WaveField,
    cfg: &RecoveryConfig,
    grid: &Grid,
    trace: &BoundaryTrace,
    shadow: Option<Shadow<'_>>,
) -> Result<PassStats> {
    let mut shadow = shadow;
    let mut max_abs = 0.0f64;
    let mut max_err: Option<f64> = None;
    let mut first = true;
    let out = run_with(start, cfg.horizon, grid, &cfg.nonlinearity, Some(trace), |f| {
        max_abs = max_abs.max(f.max_abs());
        if let Some(s) = shadow.as_mut() {
            if !first {
                s.advance()?;
            }
            max_abs = max_abs.max(s.field.max_abs());
            let e = energy(&f.diff(&s.field), grid);
            max_err = Some(max_err.map_or(e, |m| m.max(e)));
        }
        first = false;
        Ok(())
    })?;
    Ok(PassStats {
        max_energy: out.energy.iter().copied().fold(0.0, f64::max),
        field: out.field,
        max_abs,
        max_error_energy: max_err,
        shadow_end: shadow.map(|s| s.field),
    })
}

fn relative(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        (num / den).sqrt()
    } else if num == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Runs up to `config.iterations` forward/backward sweeps.
///
/// Divergence (solver blow-up, or energy above 1e6 times the first
/// iteration's peak) ends the run with `diverged` set instead of an error.
pub fn recover(measurements: &BoundaryTrace, config: &RecoveryConfig) -> Result<RecoveryRun> {
    config.validate()?;
    let grid = &config.grid;
    measurements.check_grid(grid)?;
    let t0 = measurements.t0;
    let t_end = t0 + config.horizon;
    if (measurements.t_end() - t_end).abs() > 1e-9 * t_end.abs().max(1.0) {
        return Err(Error::invalid(format!(
            "measurements span [{}, {}], expected [{t0}, {t_end}]",
            measurements.t0,
            measurements.t_end()
        )));
    }
    let k = config.k;
    let fwd = grid.with_mode(Mode::ObserverForward { k })?;
    let bwd = grid.with_mode(Mode::ObserverBackward { k })?;
    let plant_fwd = grid.with_mode(Mode::Plant)?;
    let plant_bwd = grid.with_mode(Mode::ObserverBackward { k: 0.0 })?;
    let chi = config.chi();
    let truth = config.truth.as_ref().map(|t| t.clone().at_time(t0));

    let e_truth = truth.as_ref().map(|t| energy(t, grid));
    let v_truth = truth.as_ref().map(|t| lyapunov(t, grid, chi, k));

    let mut estimate = WaveField::zeros(grid).at_time(t0);
    let mut prev_increment: Option<f64> = None;
    let mut prev_error = e_truth;
    let mut records = Vec::with_capacity(config.iterations);
    let mut reference: Option<f64> = None;
    let mut diverged = false;

    for m in 1..=config.iterations {
        let sweep = (|| -> Result<(PassStats, PassStats)> {
            let shadow = truth.clone().map(|t| Shadow::new(t, plant_fwd.clone(), &config.nonlinearity));
            let f = pass(&estimate, config, &fwd, measurements, shadow)?;
            let shadow = f
                .shadow_end
                .clone()
                .map(|p| Shadow::new(p, plant_bwd.clone(), &config.nonlinearity));
            let b = pass(&f.field, config, &bwd, measurements, shadow)?;
            Ok((f, b))
        })();
        let (f, b) = match sweep {
            Ok(x) => x,
            Err(Error::Divergence { .. }) => {
                diverged = true;
                break;
            }
            Err(e) => return Err(e),
        };
        let peak = f.max_energy.max(b.max_energy);
        match reference {
            None => reference = Some(peak),
            Some(r) if r > 0.0 && peak > DIVERGENCE_FACTOR * r => {
                diverged = true;
                break;
            }
            Some(_) => {}
        }

        let mut next = b.field;
        next.t = t0;
        let increment = energy(&next.diff(&estimate), grid);
        let change = relative(increment, energy(&next, grid));
        let (e_b, v_b, ratio) = match &truth {
            Some(t) => {
                let err = next.diff(t);
                let e = energy(&err, grid);
                let ratio = prev_error.map(|p| e / p);
                prev_error = Some(e);
                (Some(e), Some(lyapunov(&err, grid, chi, k)), ratio)
            }
            None => (None, None, prev_increment.map(|p| increment / p)),
        };
        prev_increment = Some(increment);
        let max_error_energy = match (f.max_error_energy, b.max_error_energy) {
            (Some(a), Some(c)) => Some(a.max(c)),
            _ => None,
        };
        records.push(IterationRecord {
            m,
            e_b_t0: e_b,
            v_b_t0: v_b,
            ratio,
            change,
            max_error_energy,
            max_abs_state: f.max_abs.max(b.max_abs),
        });
        estimate = next;
    }

    let final_error_vs_truth = match (&truth, records.is_empty()) {
        (Some(t), false) => Some(relative(energy(&estimate.diff(t), grid), energy(t, grid))),
        _ => None,
    };
    let converged = !diverged
        && match (final_error_vs_truth, records.last()) {
            (Some(err), _) => err < config.convergence_threshold,
            (None, Some(r)) => r.change < config.convergence_threshold,
            (None, None) => false,
        };
    Ok(RecoveryRun {
        iterations: records,
        converged,
        diverged,
        final_error_vs_truth,
        recovered: estimate,
        k,
        horizon: config.horizon,
        e_b_initial: e_truth,
        v_b_initial: v_truth,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContractionRow {
    pub m: usize,
    /// `V_b(m)/V_b(m−1)`, with `V_b(0)` the Lyapunov value of the true state.
    pub observed: f64,
    pub q: f64,
    /// `V_b(m)` is indistinguishable from zero.
    pub at_floor: bool,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContractionReport {
    pub applicable: bool,
    pub note: Option<String>,
    pub q: f64,
    pub rows: Vec<ContractionRow>,
    /// Peak forward/backward error energy and its certified bound.
    pub uniform: Option<(f64, f64)>,
}

impl ContractionReport {
    pub fn passed_from(&self, m: usize) -> bool {
        self.applicable && self.rows.iter().filter(|r| r.m >= m).all(|r| r.ok)
    }

    pub fn uniform_ok(&self) -> bool {
        self.uniform.map_or(false, |(seen, bound)| seen <= bound)
    }
}

/// Compares observed contraction with `q = e^{−4δ(T−T*)}` and checks the
/// uniform error bound `(β/α) e^{2δT*} E(t₀)`, both with slack 0.1.
pub fn contraction_report(run: &RecoveryRun, certificate: Option<&Certificate>) -> Result<ContractionReport> {
    let cert = certificate.ok_or_else(|| Error::invalid("contraction report needs a certificate"))?;
    let t_star = cert
        .params
        .t_star
        .ok_or_else(|| Error::invalid("certificate has no observability time T*"))?;
    if run.k == 0.0 {
        return Ok(ContractionReport {
            applicable: false,
            note: Some("k = 0: Psi1 = chi > 0, no contraction guarantee".into()),
            q: 1.0,
            rows: Vec::new(),
            uniform: None,
        });
    }
    if (cert.params.k - run.k).abs() > 1e-12 * run.k {
        return Err(Error::invalid(format!(
            "certificate gain k = {} differs from the run's k = {}",
            cert.params.k, run.k
        )));
    }
    if run.horizon <= t_star {
        return Err(Error::invalid(format!(
            "horizon T = {} must exceed T* = {t_star}",
            run.horizon
        )));
    }
    let v0 = run
        .v_b_initial
        .ok_or_else(|| Error::invalid("contraction report needs a run with known initial state"))?;
    let delta = cert.params.delta;
    let q = contraction_rate(delta, run.horizon, t_star);
    let mut prev = v0;
    let mut rows = Vec::with_capacity(run.iterations.len());
    for r in &run.iterations {
        let v = r.v_b_t0.ok_or_else(|| Error::invalid("run lacks V_b records"))?;
        let observed = v / prev;
        let at_floor = v <= ROUNDOFF_FLOOR * v0;
        rows.push(ContractionRow {
            m: r.m,
            observed,
            q,
            at_floor,
            ok: at_floor || observed <= q * (1.0 + CONTRACTION_SLACK),
        });
        prev = v;
    }
    let seen = run
        .iterations
        .iter()
        .filter_map(|r| r.max_error_energy)
        .fold(None, |m: Option<f64>, e| Some(m.map_or(e, |x| x.max(e))));
    let uniform = match (seen, run.e_b_initial) {
        (Some(s), Some(e0)) => {
            let bound = cert.beta / cert.alpha * (2.0 * delta * t_star).exp() * e0 * (1.0 + CONTRACTION_SLACK);
            Some((s, bound))
        }
        _ => None,
    };
    Ok(ContractionReport {
        applicable: true,
        note: None,
        q,
        rows,
        uniform,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct IssReport {
    /// `∫|∇Δ|² + Δ_t²` for the gap Δ between noisy and clean recoveries.
    pub gap_sq: f64,
    /// `∫∫ w² dΓ dt` with `w = k·noise`.
    pub input_sq: f64,
    pub constant: f64,
    pub bound: f64,
    pub holds: bool,
}

/// Recovery from `measurements + noise`, compared with the noise-free
/// recovery through the ISS constant `C = γ/(α(1 − e^{−2δT*}))`.
pub fn perturbed_recover(
    measurements: &BoundaryTrace,
    noise: &BoundaryTrace,
    config: &RecoveryConfig,
) -> Result<(RecoveryRun, IssReport)> {
    let cert = config
        .certificate
        .as_ref()
        .ok_or_else(|| Error::invalid("ISS report needs a certificate"))?;
    let t_star = cert
        .params
        .t_star
        .ok_or_else(|| Error::invalid("certificate has no observability time T*"))?;
    let noisy = measurements.added(noise)?;
    let clean = recover(measurements, config)?;
    let run = recover(&noisy, config)?;

    let gamma = match cert.vars.gamma {
        Some(g) => g,
        None => compute_iss_gain(&cert.params, &cert.vars, crate::certificates::DEFAULT_MARGIN)?.gamma,
    };
    let (alpha, _) = compute_alpha_beta(&cert.params, &cert.vars, AlphaBetaMode::General)?;
    let delta = cert.params.delta;
    let constant = gamma / (alpha * (1.0 - (-2.0 * delta * t_star).exp()));
    let input_sq = config.k * config.k * noise.l2_squared(&config.grid)?;
    let gap_sq = 2.0 * energy(&run.recovered.diff(&clean.recovered), &config.grid);
    let bound = constant * input_sq;
    Ok((
        run,
        IssReport {
            gap_sq,
            input_sq,
            constant,
            bound,
            holds: gap_sq <= bound,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pde::run;
    use std::f64::consts::PI;

    fn setup(n: usize, horizon: f64) -> (Grid, WaveField, BoundaryTrace) {
        let grid = Grid::for_horizon(1, n, horizon, Mode::Plant).unwrap();
        let truth = WaveField::from_fn(&grid, |x| (PI * x[0] / 2.0).sin(), |_| 0.0).unwrap();
        let out = run(&truth, horizon, &grid, &Nonlinearity::zero(), None).unwrap();
        (grid, truth, out.trace)
    }

    #[test]
    fn zero_measurements_give_zero_iterates() {
        let grid = Grid::for_horizon(1, 64, 2.5, Mode::Plant).unwrap();
        let trace = BoundaryTrace::zeros(&grid, 0.0, grid.steps_for(2.5).unwrap());
        let cfg = RecoveryConfig::new(1.0, 2.5, 3, grid.clone(), Nonlinearity::zero()).with_truth(WaveField::zeros(&grid));
        let run = recover(&trace, &cfg).unwrap();
        assert!(run.recovered.z.iter().chain(&run.recovered.zt).all(|&v| v == 0.0));
        assert!(run.converged);
        assert_eq!(run.final_error_vs_truth, Some(0.0));
    }

    #[test]
    fn linear_recovery_within_two_percent() {
        let (grid, truth, trace) = setup(201, 3.0);
        let cfg = RecoveryConfig::new(1.0, 3.0, 10, grid, Nonlinearity::zero()).with_truth(truth);
        let run = recover(&trace, &cfg).unwrap();
        assert!(run.final_error_vs_truth.unwrap() < 0.02, "{:?}", run.final_error_vs_truth);
        assert_eq!(run.iterations.len(), 10);
    }

    #[test]
    fn span_mismatch_is_rejected() {
        let (grid, _, trace) = setup(64, 3.0);
        let cfg = RecoveryConfig::new(1.0, 2.0, 2, grid, Nonlinearity::zero());
        assert!(matches!(recover(&trace, &cfg), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn json_shape_without_truth() {
        let (grid, _, trace) = setup(64, 3.0);
        let cfg = RecoveryConfig::new(1.0, 3.0, 3, grid, Nonlinearity::zero());
        let run = recover(&trace, &cfg).unwrap();
        let v: serde_json::Value = serde_json::from_str(&run.to_json()).unwrap();
        let it = v["iterations"].as_array().unwrap();
        assert_eq!(it.len(), 3);
        assert!(it[0].get("ratio").is_none());
        assert!(it[1]["ratio"].as_f64().is_some());
        assert!(it[0].get("E_b_t0").is_none());
        assert!(v.get("final_error_vs_truth").is_none());
        assert!(v["converged"].is_boolean());
    }

    #[test]
    fn report_needs_certificate() {
        let (grid, truth, trace) = setup(64, 3.0);
        let cfg = RecoveryConfig::new(0.0, 3.0, 1, grid, Nonlinearity::zero()).with_truth(truth);
        let run = recover(&trace, &cfg).unwrap();
        assert!(matches!(contraction_report(&run, None), Err(Error::InvalidInput(_))));
    }
}
