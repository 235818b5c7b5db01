//! Feasibility search over the scalar decision variables, minimal
//! observability time, regional radius maximisation and batch sweeps.
//!
//! For fixed `(δ, T*)` every LMI is affine in `(χ, λᵢ)`, so the best
//! spectral value over each `λᵢ` is a convex function of `χ` and the
//! combined violation `h(χ)` is convex as well. The χ search is a
//! log-spaced grid refined around its best cell; each `λᵢ` is found by a
//! golden-section search on `log λᵢ`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::certificates::{
    compute_regional_radius, golden_section_min, phi0_matrix, phi_obs_matrix, psi1_value, psi2_matrix,
    Certificate, DecisionVars, ProblemParams, DEFAULT_LAMBDA0_1D, DEFAULT_MARGIN,
};
use crate::error::{Error, Result};
use crate::fmt_f64;

/// Log-spaced grid `lo, ..., hi` with `count` points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

impl GridSpec {
    pub fn new(lo: f64, hi: f64, count: usize) -> Self {
        GridSpec { lo, hi, count }
    }

    /// A single point.
    pub fn single(value: f64) -> Self {
        GridSpec {
            lo: value,
            hi: value,
            count: 1,
        }
    }

    pub fn validate(&self, name: &str) -> Result<()> {
        if !(self.lo > 0.0 && self.hi.is_finite()) {
            return Err(Error::invalid(format!("{name}: bounds must be positive and finite")));
        }
        let single = self.count == 1 && self.lo == self.hi;
        if !single && !(self.lo < self.hi && self.count >= 2) {
            return Err(Error::invalid(format!(
                "{name}: need lo < hi and count >= 2 (or count = 1 with lo = hi)"
            )));
        }
        Ok(())
    }

    pub fn points(&self) -> Vec<f64> {
        log_points(self.lo, self.hi, self.count)
    }
}

fn log_points(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| {
            if i == 0 {
                lo
            } else if i + 1 == count {
                hi
            } else {
                (a + (b - a) * i as f64 / (count - 1) as f64).exp()
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchConfig {
    /// χ grid; the upper end is clipped to the Ψ₁ cut `k/(1+k²n)`.
    pub chi_grid: GridSpec,
    /// Tolerance of the golden-section searches on `log λ`.
    pub lambda_bisection_tol: f64,
    /// Absolute tolerance of the T* bisection.
    pub tstar_tol: f64,
    /// δ grid; `None` pins δ to the problem's own value.
    pub delta_grid: Option<GridSpec>,
    pub refinement_rounds: usize,
    pub margin: f64,
    /// Upper end of the T* bracket.
    pub tstar_max: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            chi_grid: GridSpec::new(1e-4, 1.0, 400),
            lambda_bisection_tol: 1e-9,
            tstar_tol: 1e-3,
            delta_grid: Some(GridSpec::new(1e-4, 0.5, 30)),
            refinement_rounds: 3,
            margin: DEFAULT_MARGIN,
            tstar_max: 200.0,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        self.chi_grid.validate("chi_grid")?;
        if let Some(g) = &self.delta_grid {
            g.validate("delta_grid")?;
        }
        if !(self.lambda_bisection_tol > 0.0) || !(self.tstar_tol > 0.0) {
            return Err(Error::invalid("search tolerances must be > 0"));
        }
        if !(self.margin >= 0.0 && self.margin.is_finite()) {
            return Err(Error::invalid("margin must be finite and >= 0"));
        }
        if !(self.tstar_max > self.tstar_tol) {
            return Err(Error::invalid("tstar_max must exceed tstar_tol"));
        }
        Ok(())
    }

    /// Same configuration with δ pinned to the problem's value.
    pub fn with_fixed_delta(mut self) -> Self {
        self.delta_grid = None;
        self
    }

    fn deltas(&self, params: &ProblemParams) -> Vec<f64> {
        match &self.delta_grid {
            Some(g) => g.points(),
            None => vec![params.delta],
        }
    }
}

const LOG_LAMBDA_RANGE: (f64, f64) = (-27.6, 9.2); // [1e-12, 1e4]

/// Best decision variables found for one χ, with the combined violation
/// `h` (negative means every LMI holds with room to spare).
#[derive(Debug, Clone, Copy)]
struct Score {
    h: f64,
    vars: DecisionVars,
}

/// Evaluates LMI violations for one `(δ, T*)` configuration.
struct Evaluator<'a> {
    params: ProblemParams,
    cfg: &'a SearchConfig,
}

impl<'a> Evaluator<'a> {
    fn new(params: ProblemParams, cfg: &'a SearchConfig) -> Self {
        Evaluator { params, cfg }
    }

    fn minimize_log<F>(&self, f: F) -> Result<(f64, f64)>
    where
        F: FnMut(f64) -> Result<f64>,
    {
        let mut f = f;
        let (s, v) = golden_section_min(
            LOG_LAMBDA_RANGE.0,
            LOG_LAMBDA_RANGE.1,
            self.cfg.lambda_bisection_tol,
            |s| f(s.exp()),
        )?;
        Ok((s.exp(), v))
    }

    /// λ₀ maximising `λ_min(Φ₀)`; the fixed default in one dimension.
    fn phi0(&self, chi: f64) -> Result<(f64, f64)> {
        let n = self.params.n as f64;
        if self.params.n == 1 {
            let m = phi0_matrix(n, chi, DEFAULT_LAMBDA0_1D)?.leading_block(2)?;
            return Ok((DEFAULT_LAMBDA0_1D, m.min_eigenvalue()?));
        }
        let (l0, neg) = self.minimize_log(|l0| Ok(-phi0_matrix(n, chi, l0)?.min_eigenvalue()?))?;
        Ok((l0, -neg))
    }

    fn psi2(&self, chi: f64) -> Result<(f64, f64)> {
        self.minimize_log(|l1| psi2_matrix(&self.params, chi, l1)?.max_eigenvalue())
    }

    fn phi_obs(&self, chi: f64, t_star: f64) -> Result<(f64, f64)> {
        let n = self.params.n as f64;
        let delta = self.params.delta;
        self.minimize_log(|l2| phi_obs_matrix(n, delta, t_star, chi, l2)?.max_eigenvalue())
    }

    fn score(&self, chi: f64) -> Result<Score> {
        let m = self.cfg.margin;
        let (l0, phi0_min) = self.phi0(chi)?;
        let (l1, psi2_max) = self.psi2(chi)?;
        let mut h = (m - phi0_min)
            .max(psi1_value(&self.params, chi) - m)
            .max(psi2_max - m);
        let mut vars = DecisionVars {
            chi: Some(chi),
            lambda0: Some(l0),
            lambda1: Some(l1),
            ..Default::default()
        };
        if let Some(ts) = self.params.t_star {
            let (l2, phi_max) = self.phi_obs(chi, ts)?;
            h = h.max(phi_max + m);
            vars.lambda2 = Some(l2);
        }
        Ok(Score { h, vars })
    }

    fn chi_range(&self) -> Result<(f64, f64)> {
        let g = &self.cfg.chi_grid;
        let cut = self.params.chi_upper_bound();
        let hi = g.hi.min(cut);
        if g.lo >= hi && !(g.count == 1 && g.lo <= cut) {
            return Err(Error::infeasible(
                format!("empty chi range: lower end {} is not below the Psi1 cut k/(1+k^2 n) = {cut}", g.lo),
                None,
            ));
        }
        Ok((g.lo, hi.max(g.lo)))
    }

    /// Grid search with refinement. Stops at the first verified feasible point.
    fn search(&self) -> Result<std::result::Result<DecisionVars, f64>> {
        let (lo, hi) = self.chi_range()?;
        let count = self.cfg.chi_grid.count;
        let mut grid = log_points(lo, hi, count);
        let mut best = f64::INFINITY;
        for round in 0..=self.cfg.refinement_rounds {
            let mut scores = Vec::with_capacity(grid.len());
            for &chi in &grid {
                let s = self.score(chi)?;
                if s.h < 0.0 && self.verified(&s.vars)? {
                    return Ok(Ok(s.vars));
                }
                scores.push(s.h);
            }
            let (ib, hb) = scores
                .iter()
                .copied()
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .expect("non-empty grid");
            best = best.min(hb);
            if round == self.cfg.refinement_rounds || grid.len() < 2 {
                break;
            }
            let a = grid[ib.saturating_sub(1)];
            let b = grid[(ib + 1).min(grid.len() - 1)];
            grid = log_points(a, b, count.max(3));
        }
        Ok(Err(best))
    }

    fn verified(&self, vars: &DecisionVars) -> Result<bool> {
        Ok(matches!(Certificate::issue(self.params, *vars, self.cfg.margin)?, Ok(_)))
    }

    /// Smallest χ in the feasible interval below `chi_feasible`, by bisection.
    fn smallest_feasible_chi(&self, chi_feasible: DecisionVars) -> Result<DecisionVars> {
        let (lo, _) = self.chi_range()?;
        let mut good = chi_feasible;
        let mut hi = chi_feasible.chi()?;
        let first = self.score(lo)?;
        if first.h < 0.0 && self.verified(&first.vars)? {
            return Ok(first.vars);
        }
        let mut lo = lo;
        while (hi - lo) > 1e-12 * hi {
            let mid = 0.5 * (lo + hi);
            let s = self.score(mid)?;
            if s.h < 0.0 && self.verified(&s.vars)? {
                hi = mid;
                good = s.vars;
            } else {
                lo = mid;
            }
        }
        Ok(good)
    }
}

/// Decision variables that pass every applicable LMI, or `Infeasible`.
///
/// Observability LMIs are included iff `params.t_star` is set.
pub fn find_feasible_vars(params: &ProblemParams, config: &SearchConfig) -> Result<DecisionVars> {
    params.validate()?;
    config.validate()?;
    match Evaluator::new(*params, config).search()? {
        Ok(vars) => Ok(vars),
        Err(best) => Err(Error::infeasible(
            format!(
                "no chi in the grid satisfies the LMIs (delta = {}, t_star = {:?})",
                params.delta, params.t_star
            ),
            Some(best),
        )),
    }
}

/// Fills unset multipliers by line search at the given χ; provided values
/// are kept. Without χ this is [`find_feasible_vars`].
pub fn complete_vars(params: &ProblemParams, partial: DecisionVars, config: &SearchConfig) -> Result<DecisionVars> {
    params.validate()?;
    config.validate()?;
    let Some(chi) = partial.chi else {
        return find_feasible_vars(params, config);
    };
    let found = Evaluator::new(*params, config).score(chi)?.vars;
    Ok(DecisionVars {
        chi: Some(chi),
        lambda0: partial.lambda0.or(found.lambda0),
        lambda1: partial.lambda1.or(found.lambda1),
        lambda2: partial.lambda2.or(found.lambda2),
        ..partial
    })
}

/// Result of a minimal observability time search.
#[derive(Debug, Clone, PartialEq)]
pub struct MinTime {
    pub t_star: f64,
    pub delta: f64,
    pub certificate: Certificate,
}

fn min_time_for_delta(params: &ProblemParams, config: &SearchConfig) -> Result<std::result::Result<(f64, DecisionVars), f64>> {
    let at = |t: f64| -> Result<std::result::Result<DecisionVars, f64>> {
        let p = ProblemParams {
            t_star: Some(t),
            t_total: None,
            ..*params
        };
        match Evaluator::new(p, config).chi_range() {
            Err(Error::Infeasible { .. }) => return Ok(Err(f64::INFINITY)),
            Err(e) => return Err(e),
            Ok(_) => {}
        }
        Evaluator::new(p, config).search()
    };

    let mut hi = config.tstar_max;
    let mut hi_vars = match at(hi)? {
        Ok(v) => v,
        Err(best) => return Ok(Err(best)),
    };
    let mut lo = config.tstar_tol;
    if let Ok(v) = at(lo)? {
        return Ok(Ok((lo, v)));
    }
    while hi - lo > config.tstar_tol {
        let mid = 0.5 * (lo + hi);
        match at(mid)? {
            Ok(v) => {
                hi = mid;
                hi_vars = v;
            }
            Err(_) => lo = mid,
        }
    }
    Ok(Ok((hi, hi_vars)))
}

/// Smallest certified T* over the δ grid (or at the pinned δ).
///
/// Φ feasibility is monotone in T* at fixed `(δ, χ)`, which makes the
/// per-δ bisection valid. Ties keep the largest δ.
pub fn minimal_observability_time(params: &ProblemParams, config: &SearchConfig) -> Result<MinTime> {
    config.validate()?;
    let base = ProblemParams {
        t_star: None,
        ..*params
    };
    base.validate()?;
    let mut best: Option<(f64, f64, DecisionVars)> = None;
    let mut least_violation = f64::INFINITY;
    for delta in config.deltas(&base) {
        let p = ProblemParams { delta, ..base };
        match min_time_for_delta(&p, config)? {
            Ok((t, vars)) => {
                if best.as_ref().map_or(true, |(bt, _, _)| t <= *bt) {
                    best = Some((t, delta, vars));
                }
            }
            Err(v) => least_violation = least_violation.min(v),
        }
    }
    let (t_star, delta, vars) = best.ok_or_else(|| {
        Error::infeasible(
            format!("no delta admits a certified T* <= {}", config.tstar_max),
            Some(least_violation).filter(|v| v.is_finite()),
        )
    })?;
    let mut p = ProblemParams {
        delta,
        t_star: Some(t_star),
        ..base
    };
    if let Some(t) = params.t_total.filter(|&t| t >= t_star) {
        p.t_total = Some(t);
    } else {
        p.t_total = None;
    }
    let certificate = issue_or_fail(p, vars, config.margin)?;
    Ok(MinTime {
        t_star,
        delta,
        certificate,
    })
}

fn issue_or_fail(params: ProblemParams, vars: DecisionVars, margin: f64) -> Result<Certificate> {
    match Certificate::issue(params, vars, margin)? {
        Ok(c) => Ok(c),
        Err(rej) => Err(Error::CertificateInvalid(format!(
            "search result fails LMI {} on re-check",
            rej.failing
        ))),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionalBest {
    pub d0: f64,
    pub t_max: Option<f64>,
    pub certificate: Certificate,
}

/// Joint search over `(δ, T*, χ)` for the largest regional radius `d₀`.
///
/// Per δ, T* is the minimal certified time and χ the smallest feasible
/// value there; `d₀` decreases in both χ and δT*.
pub fn maximize_regional_radius(params: &ProblemParams, config: &SearchConfig) -> Result<RegionalBest> {
    config.validate()?;
    if params.n != 1 {
        return Err(Error::Unsupported("regional radius search is one-dimensional".into()));
    }
    if params.d.is_none() {
        return Err(Error::invalid("local Lipschitz radius d is required"));
    }
    let base = ProblemParams {
        t_star: None,
        ..*params
    };
    base.validate()?;

    let rows: Vec<Result<Option<RegionalBest>>> = config
        .deltas(&base)
        .into_iter()
        .map(|delta| {
            let p = ProblemParams { delta, ..base };
            let (t_star, vars) = match min_time_for_delta(&p, config)? {
                Ok(x) => x,
                Err(_) => return Ok(None),
            };
            let mut p = ProblemParams {
                t_star: Some(t_star),
                t_total: None,
                ..p
            };
            if let Some(t) = params.t_total {
                if t < t_star {
                    return Ok(None);
                }
                p.t_total = Some(t);
            }
            let vars = Evaluator::new(p, config).smallest_feasible_chi(vars)?;
            let cert = issue_or_fail(p, vars, config.margin)?;
            let radius = compute_regional_radius(&p, &vars)?;
            Ok(Some(RegionalBest {
                d0: radius.d0,
                t_max: radius.t_max,
                certificate: cert,
            }))
        })
        .collect();

    let mut best: Option<RegionalBest> = None;
    for row in rows {
        if let Some(r) = row? {
            if best.as_ref().map_or(true, |b| r.d0 >= b.d0) {
                best = Some(r);
            }
        }
    }
    best.ok_or_else(|| Error::infeasible("no delta admits a regional certificate", None))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub params: ProblemParams,
    pub feasible: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certificate: Option<Certificate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

pub const SWEEP_CSV_HEADER: &str = "n,k,g1,delta,t_star,chi,lambda0,lambda1,lambda2,alpha,beta,d0,feasible";

/// Minimal observability time for every problem, evaluated by
/// `worker_count` threads. Rows keep input order and do not depend on the
/// number of workers.
pub fn sweep(problems: &[ProblemParams], config: &SearchConfig, worker_count: usize) -> Result<SweepResult> {
    let jobs: Vec<(ProblemParams, SearchConfig)> = problems.iter().map(|p| (*p, *config)).collect();
    sweep_each(&jobs, worker_count)
}

/// [`sweep`] with a search configuration per problem.
pub fn sweep_each(jobs: &[(ProblemParams, SearchConfig)], worker_count: usize) -> Result<SweepResult> {
    if jobs.is_empty() {
        return Err(Error::invalid("sweep needs at least one problem"));
    }
    for (_, c) in jobs {
        c.validate()?;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_count.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let rows = pool.install(|| {
        jobs.par_iter()
            .map(|(p, config)| match minimal_observability_time(p, config) {
                Ok(mt) => SweepRow {
                    params: mt.certificate.params,
                    feasible: true,
                    certificate: Some(mt.certificate),
                    error: None,
                },
                Err(e) => SweepRow {
                    params: *p,
                    feasible: false,
                    certificate: None,
                    error: Some(e.to_string()),
                },
            })
            .collect()
    });
    Ok(SweepResult { rows })
}

fn cell(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

impl SweepResult {
    pub fn to_json(&self) -> String {
        crate::to_json(self)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(SWEEP_CSV_HEADER);
        out.push('\n');
        for row in &self.rows {
            let p = &row.params;
            let c = row.certificate.as_ref();
            let v = c.map(|c| c.vars).unwrap_or_default();
            let fields = [
                p.n.to_string(),
                fmt_f64(p.k),
                fmt_f64(p.g1),
                fmt_f64(p.delta),
                cell(p.t_star),
                cell(v.chi),
                cell(v.lambda0),
                cell(v.lambda1),
                cell(v.lambda2),
                cell(c.map(|c| c.alpha)),
                cell(c.map(|c| c.beta)),
                cell(c.and_then(|c| c.d0)),
                row.feasible.to_string(),
            ];
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        out
    }
}

/// Closed-form lower limit of the one-dimensional linear observability
/// time at decay rate δ: `atanh(2χ)/δ` with `χ = δ/(1−2δ)`.
pub fn linear_1d_time_limit(delta: f64) -> f64 {
    (2.0 * delta / (1.0 - 2.0 * delta)).atanh() / delta
}
