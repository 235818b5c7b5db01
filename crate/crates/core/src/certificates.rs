//! LMI assembly and certificate construction.
//!
//! Every matrix here acts on the vector of magnitudes
//! `(|∇e|, |e_t|, |e|)` of the estimation error, so all of them are 3×3.
//! Feasibility is decided spectrally with a single margin `ε`: strict
//! inequalities need `ε` of room, non-strict ones are allowed `ε` of slack.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::smallmat::SymMatrix;

pub const DEFAULT_MARGIN: f64 = 1e-9;

/// λ₀ used for `n = 1` when the caller leaves it unset.
pub const DEFAULT_LAMBDA0_1D: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemParams {
    pub n: usize,
    pub k: f64,
    pub g1: f64,
    pub delta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_star: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_total: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<f64>,
}

impl ProblemParams {
    pub fn new(n: usize, k: f64, g1: f64, delta: f64) -> Self {
        ProblemParams {
            n,
            k,
            g1,
            delta,
            t_star: None,
            t_total: None,
            d: None,
        }
    }

    pub fn with_t_star(mut self, t_star: f64) -> Self {
        self.t_star = Some(t_star);
        self
    }

    pub fn with_t_total(mut self, t_total: f64) -> Self {
        self.t_total = Some(t_total);
        self
    }

    pub fn with_radius(mut self, d: f64) -> Self {
        self.d = Some(d);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 1 {
            return Err(Error::invalid("spatial dimension n must be >= 1"));
        }
        if !(self.k > 0.0 && self.k.is_finite()) {
            return Err(Error::invalid("injection gain k must be > 0"));
        }
        if !(self.g1 >= 0.0 && self.g1.is_finite()) {
            return Err(Error::invalid("Lipschitz bound g1 must be >= 0"));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::invalid("decay rate delta must be > 0"));
        }
        if let Some(ts) = self.t_star {
            if !(ts > 0.0 && ts.is_finite()) {
                return Err(Error::invalid("t_star must be > 0"));
            }
        }
        if let Some(t) = self.t_total {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::invalid("t_total must be > 0"));
            }
            if let Some(ts) = self.t_star {
                if t < ts {
                    return Err(Error::invalid(format!(
                        "t_total = {t} must not be smaller than t_star = {ts}"
                    )));
                }
            }
        }
        if let Some(d) = self.d {
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::invalid("local Lipschitz radius d must be > 0"));
            }
        }
        Ok(())
    }

    fn nf(&self) -> f64 {
        self.n as f64
    }

    /// Upper end of the admissible χ range imposed by Ψ₁ ≤ 0.
    pub fn chi_upper_bound(&self) -> f64 {
        self.k / (1.0 + self.k * self.k * self.nf())
    }

    fn require_t_star(&self) -> Result<f64> {
        self.t_star
            .ok_or_else(|| Error::invalid("t_star is required for the observability LMI"))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecisionVars {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
}

fn present(value: Option<f64>, name: &str) -> Result<f64> {
    match value {
        Some(v) if v.is_finite() && v >= 0.0 => Ok(v),
        Some(v) => Err(Error::invalid(format!("{name} = {v} must be finite and >= 0"))),
        None => Err(Error::invalid(format!("decision variable {name} is not set"))),
    }
}

impl DecisionVars {
    pub fn with_chi(chi: f64) -> Self {
        DecisionVars {
            chi: Some(chi),
            ..Default::default()
        }
    }

    /// All present values must be strictly positive.
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("chi", self.chi),
            ("lambda0", self.lambda0),
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("r", self.r),
            ("gamma", self.gamma),
        ];
        for (name, v) in fields {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(Error::invalid(format!("{name} = {v} must be > 0")));
                }
            }
        }
        Ok(())
    }

    pub fn chi(&self) -> Result<f64> {
        present(self.chi, "chi")
    }

    /// λ₀, falling back to [`DEFAULT_LAMBDA0_1D`] in one dimension.
    pub fn lambda0_for(&self, n: usize) -> Result<f64> {
        match (self.lambda0, n) {
            (None, 1) => Ok(DEFAULT_LAMBDA0_1D),
            (v, _) => present(v, "lambda0"),
        }
    }
}

/// Φ₀: positivity of the Lyapunov functional.
pub fn build_phi0(params: &ProblemParams, vars: &DecisionVars) -> Result<SymMatrix> {
    params.validate()?;
    let chi = vars.chi()?;
    let l0 = vars.lambda0_for(params.n)?;
    phi0_matrix(params.nf(), chi, l0)
}

pub(crate) fn phi0_matrix(n: f64, chi: f64, lambda0: f64) -> Result<SymMatrix> {
    let w = 4.0 / (PI * PI * n);
    SymMatrix::from_upper(
        3,
        &[
            0.5 - lambda0 * w,
            n.sqrt() * chi,
            0.0,
            0.5,
            (n - 1.0) * chi / 2.0,
            lambda0,
        ],
    )
}

/// Ψ₁ = −k + (1 + k²n)χ.
pub fn build_psi1(params: &ProblemParams, vars: &DecisionVars) -> Result<f64> {
    params.validate()?;
    Ok(psi1_value(params, vars.chi()?))
}

pub(crate) fn psi1_value(params: &ProblemParams, chi: f64) -> f64 {
    -params.k + (1.0 + params.k * params.k * params.nf()) * chi
}

/// Ψ₂: decay of `V + 2δV` along the error dynamics.
pub fn build_psi2(params: &ProblemParams, vars: &DecisionVars) -> Result<SymMatrix> {
    params.validate()?;
    let chi = vars.chi()?;
    let l1 = present(vars.lambda1, "lambda1")?;
    psi2_matrix(params, chi, l1)
}

pub(crate) fn psi2_matrix(params: &ProblemParams, chi: f64, lambda1: f64) -> Result<SymMatrix> {
    let n = params.nf();
    let (k, g1, delta) = (params.k, params.g1, params.delta);
    let psi11 = -chi + delta * (1.0 + chi * k * (n - 1.0)) + lambda1 * 4.0 / (PI * PI * n);
    SymMatrix::from_upper(
        3,
        &[
            psi11,
            2.0 * delta * n.sqrt() * chi,
            n.sqrt() * g1 * chi,
            -chi + delta,
            g1 / 2.0 + delta * (n - 1.0) * chi,
            -lambda1 + g1 * (n - 1.0) * chi,
        ],
    )
}

/// Φ: the observability-time LMI, with `E* = exp(−2δT*)`.
pub fn build_phi_obs(params: &ProblemParams, vars: &DecisionVars) -> Result<SymMatrix> {
    params.validate()?;
    let t_star = params.require_t_star()?;
    let chi = vars.chi()?;
    let l2 = present(vars.lambda2, "lambda2")?;
    phi_obs_matrix(params.nf(), params.delta, t_star, chi, l2)
}

pub(crate) fn phi_obs_matrix(n: f64, delta: f64, t_star: f64, chi: f64, lambda2: f64) -> Result<SymMatrix> {
    let e = (-2.0 * delta * t_star).exp();
    let diag = -(1.0 - e) / 2.0;
    SymMatrix::from_upper(
        3,
        &[
            diag + lambda2 * 4.0 / (PI * PI * n),
            n.sqrt() * (1.0 + e) * chi,
            0.0,
            diag,
            (n - 1.0) / 2.0 * (1.0 + e) * chi,
            -lambda2,
        ],
    )
}

/// For `n = 1` the third row and column of Φ₀ are decoupled (every coupling
/// carries a factor `n − 1`) and only carry the optional λ₀|e|² term, so the
/// energy bounds are read off the leading 2×2 block.
fn energy_block(params: &ProblemParams, m: SymMatrix) -> Result<SymMatrix> {
    if params.n == 1 {
        m.leading_block(2)
    } else {
        Ok(m)
    }
}

/// Spectral values of each LMI at one point.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Margins {
    /// λ_min(Φ₀)
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi0: Option<f64>,
    /// Ψ₁ itself (a scalar LMI)
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psi1: Option<f64>,
    /// λ_max(Ψ₂)
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psi2: Option<f64>,
    /// λ_max(Φ)
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi_obs: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityReport {
    pub phi0_ok: bool,
    pub psi1_ok: bool,
    pub psi2_ok: bool,
    pub phi0_min_eig: f64,
    pub phi0_max_eig: f64,
    pub psi1: f64,
    pub psi2_min_eig: f64,
    pub psi2_max_eig: f64,
}

impl StabilityReport {
    pub fn passed(&self) -> bool {
        self.phi0_ok && self.psi1_ok && self.psi2_ok
    }

    /// Name of the first failing LMI, if any.
    pub fn first_failure(&self) -> Option<&'static str> {
        if !self.phi0_ok {
            Some("phi0")
        } else if !self.psi1_ok {
            Some("psi1")
        } else if !self.psi2_ok {
            Some("psi2")
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservabilityReport {
    pub stability: StabilityReport,
    pub phi_obs_ok: bool,
    pub phi_obs_min_eig: f64,
    pub phi_obs_max_eig: f64,
}

impl ObservabilityReport {
    pub fn passed(&self) -> bool {
        self.stability.passed() && self.phi_obs_ok
    }

    pub fn first_failure(&self) -> Option<&'static str> {
        self.stability
            .first_failure()
            .or(if self.phi_obs_ok { None } else { Some("phi_obs") })
    }
}

fn check_margin(margin: f64) -> Result<()> {
    if margin >= 0.0 && margin.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid("margin must be finite and >= 0"))
    }
}

/// Φ₀ > 0, Ψ₁ ≤ 0, Ψ₂ ≤ 0.
pub fn check_stability(params: &ProblemParams, vars: &DecisionVars, margin: f64) -> Result<StabilityReport> {
    check_margin(margin)?;
    let phi0 = energy_block(params, build_phi0(params, vars)?)?.eigenvalues()?;
    let psi1 = build_psi1(params, vars)?;
    let psi2 = build_psi2(params, vars)?.eigenvalues()?;
    let phi0_min = phi0[0];
    let psi2_max = psi2[2];
    Ok(StabilityReport {
        phi0_ok: phi0_min > margin,
        psi1_ok: psi1 <= margin,
        psi2_ok: psi2_max <= margin,
        phi0_min_eig: phi0_min,
        phi0_max_eig: *phi0.last().unwrap(),
        psi1,
        psi2_min_eig: psi2[0],
        psi2_max_eig: psi2_max,
    })
}

/// Stability LMIs plus Φ < 0.
pub fn check_observability(params: &ProblemParams, vars: &DecisionVars, margin: f64) -> Result<ObservabilityReport> {
    let stability = check_stability(params, vars, margin)?;
    let phi = build_phi_obs(params, vars)?.eigenvalues()?;
    Ok(ObservabilityReport {
        stability,
        phi_obs_ok: phi[2] < -margin,
        phi_obs_min_eig: phi[0],
        phi_obs_max_eig: phi[2],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlphaBetaMode {
    /// `α = 2λ_min(Φ₀)`, `β = 2(1 + 2/(π²n))λ_max(Φ₁) + χk(n−1)`.
    General,
    /// One-dimensional closed form `(1 − 2χ, 1 + 2χ)`.
    Sharp1D,
}

/// Constants of the equivalence `αE ≤ V ≤ βE`.
pub fn compute_alpha_beta(params: &ProblemParams, vars: &DecisionVars, mode: AlphaBetaMode) -> Result<(f64, f64)> {
    params.validate()?;
    let chi = vars.chi()?;
    match mode {
        AlphaBetaMode::Sharp1D => {
            if params.n != 1 {
                return Err(Error::Unsupported("sharp alpha/beta pair exists only for n = 1".into()));
            }
            let alpha = 1.0 - 2.0 * chi;
            if alpha <= 0.0 {
                return Err(Error::CertificateInvalid(format!(
                    "1 - 2 chi = {alpha} is not positive"
                )));
            }
            Ok((alpha, 1.0 + 2.0 * chi))
        }
        AlphaBetaMode::General => {
            let n = params.nf();
            let l0 = vars.lambda0_for(params.n)?;
            let phi0 = phi0_matrix(n, chi, l0)?;
            let lmin = energy_block(params, phi0)?.min_eigenvalue()?;
            if lmin <= 0.0 {
                return Err(Error::CertificateInvalid(format!(
                    "Phi0 is not positive definite (lambda_min = {lmin:e})"
                )));
            }
            let mut phi1 = phi0;
            phi1.set(0, 0, phi0.get(0, 0) + l0 * 4.0 / (PI * PI * n));
            let lmax = energy_block(params, phi1)?.max_eigenvalue()?;
            let alpha = 2.0 * lmin;
            let beta = 2.0 * (1.0 + 2.0 / (PI * PI * n)) * lmax + chi * params.k * (n - 1.0);
            Ok((alpha, beta))
        }
    }
}

/// Perturbation gain pair `(r, γ)` for the input-to-state bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IssGain {
    pub r: f64,
    pub gamma: f64,
}

const LOG_R_RANGE: (f64, f64) = (-6.0, 6.0);

/// Smallest ISS gain γ over Young's parameter `r`, plus `margin`.
///
/// γ grows linearly in `r` while the first block only becomes feasible for
/// `r` large enough, so the optimum sits at the smallest admissible `r`.
/// The search is a golden-section on `log r` over a unimodal objective that
/// charges infeasible `r` by their spectral violation.
pub fn compute_iss_gain(params: &ProblemParams, vars: &DecisionVars, margin: f64) -> Result<IssGain> {
    check_margin(margin)?;
    params.validate()?;
    let chi = vars.chi()?;
    let psi1 = build_psi1(params, vars)?;
    let psi2 = build_psi2(params, vars)?;
    if !(psi1 < 0.0) {
        return Err(Error::NotStrictlyFeasible(format!("Psi1 = {psi1:e} is not negative")));
    }
    if psi2.max_eigenvalue()? >= -margin {
        return Err(Error::NotStrictlyFeasible(
            "Psi2 is not negative definite with the requested margin".into(),
        ));
    }
    let n = params.nf();
    let k = params.k;
    let coupling = chi * (0.5 + k * k * n);
    // Schur complement of the 2×2 block in its (2,2) entry
    let gamma_inf = |r: f64| chi * k * k * n + chi * (n - 1.0) * r / 2.0 + coupling * coupling / (-psi1);

    let block1_violation = |r: f64| -> Result<f64> {
        let mut m = psi2;
        m.set(0, 0, m.get(0, 0) + chi * (n - 1.0) / (2.0 * r));
        Ok(m.max_eigenvalue()? + margin)
    };

    const PENALTY: f64 = 1e12;
    let objective = |s: f64| -> Result<f64> {
        let r = s.exp();
        let v = block1_violation(r)?;
        Ok(if v < 0.0 { gamma_inf(r) } else { PENALTY * (1.0 + v) })
    };

    let (s_best, _) = golden_section_min(LOG_R_RANGE.0, LOG_R_RANGE.1, 1e-10, objective)?;
    let mut r = s_best.exp();
    if block1_violation(r)? >= 0.0 {
        // golden section may stop on the infeasible side of the jump
        r = LOG_R_RANGE.1.exp().min(r * (1.0 + 1e-8));
        if block1_violation(r)? >= 0.0 {
            return Err(Error::NotStrictlyFeasible(
                "no Young parameter r in [e^-6, e^6] makes the perturbed Psi2 negative definite".into(),
            ));
        }
    }
    Ok(IssGain {
        r,
        gamma: gamma_inf(r) + margin,
    })
}

/// Golden-section minimisation of a unimodal function on `[lo, hi]`.
/// Returns the best evaluated point and its value.
pub(crate) fn golden_section_min<F>(lo: f64, hi: f64, tol: f64, mut f: F) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    let (mut best_x, mut best_f) = if fc <= fd { (c, fc) } else { (d, fd) };
    while (b - a).abs() > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c)?;
            if fc < best_f {
                best_x = c;
                best_f = fc;
            }
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d)?;
            if fd < best_f {
                best_x = d;
                best_f = fd;
            }
        }
    }
    Ok((best_x, best_f))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BindingTerm {
    /// `exp(−g₁T/π)`: open-loop energy growth of the plant.
    PlantGrowth,
    /// `√((1−2χ)/(1+2χ))·exp(−δT*)`: observer error bound.
    ObserverError,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionalRadius {
    pub d0: f64,
    /// Largest horizon for which the observer term still binds; `None` when
    /// `g₁ = 0` (the growth term never binds).
    pub t_max: Option<f64>,
    pub binding: BindingTerm,
    /// Horizon at which `d0` was evaluated.
    pub horizon: f64,
}

/// Radius `d₀` of the ball of initial data that is guaranteed recoverable
/// when `|f_z| ≤ g₁` only holds for `|z| ≤ d`. One-dimensional only.
pub fn compute_regional_radius(params: &ProblemParams, vars: &DecisionVars) -> Result<RegionalRadius> {
    params.validate()?;
    if params.n != 1 {
        return Err(Error::Unsupported(
            "regional observability radius is available for n = 1 only".into(),
        ));
    }
    let chi = vars.chi()?;
    if chi >= 0.5 {
        return Err(Error::invalid(format!("chi = {chi} >= 1/2 leaves alpha = 1 - 2 chi <= 0")));
    }
    let t_star = params.require_t_star()?;
    let d = params
        .d
        .ok_or_else(|| Error::invalid("local Lipschitz radius d is required"))?;
    let horizon = params.t_total.unwrap_or(t_star);

    let observer = ((1.0 - 2.0 * chi) / (1.0 + 2.0 * chi)).sqrt() * (-params.delta * t_star).exp();
    let growth = (-(params.g1 / PI) * horizon).exp();
    let binding = if growth < observer {
        BindingTerm::PlantGrowth
    } else {
        BindingTerm::ObserverError
    };
    let t_max = if params.g1 > 0.0 {
        Some(-observer.ln() * PI / params.g1)
    } else {
        None
    };
    Ok(RegionalRadius {
        d0: d / 2.0 * growth.min(observer),
        t_max,
        binding,
        horizon,
    })
}

/// A verified feasibility record with its derived constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Certificate {
    pub params: ProblemParams,
    pub vars: DecisionVars,
    pub alpha: f64,
    pub beta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d0: Option<f64>,
    pub margins: Margins,
}

/// Why a candidate certificate was rejected.
#[derive(Debug, Clone, PartialEq)]
pub struct Rejection {
    pub failing: &'static str,
    pub margins: Margins,
}

/// Convergence rate of the forward/backward iteration, `exp(−4δ(T − T*))`.
pub fn contraction_rate(delta: f64, t_total: f64, t_star: f64) -> f64 {
    (-4.0 * delta * (t_total - t_star)).exp()
}

impl Certificate {
    /// Checks the LMIs for `(params, vars)` and, when all pass, returns the
    /// certificate. Observability is checked iff `params.t_star` is set.
    pub fn issue(params: ProblemParams, vars: DecisionVars, margin: f64) -> Result<std::result::Result<Certificate, Rejection>> {
        params.validate()?;
        vars.validate()?;
        let (failing, margins) = evaluate(&params, &vars, margin)?;
        if let Some(failing) = failing {
            return Ok(Err(Rejection { failing, margins }));
        }
        let (alpha, beta) = compute_alpha_beta(&params, &vars, AlphaBetaMode::General)?;
        let q = match (params.t_star, params.t_total) {
            (Some(ts), Some(t)) => Some(contraction_rate(params.delta, t, ts)),
            _ => None,
        };
        let d0 = if params.n == 1 && params.d.is_some() && params.t_star.is_some() {
            Some(compute_regional_radius(&params, &vars)?.d0)
        } else {
            None
        };
        Ok(Ok(Certificate {
            params,
            vars,
            alpha,
            beta,
            q,
            d0,
            margins,
        }))
    }

    /// Re-derives every recorded quantity and checks it against the stored one.
    pub fn verify(&self, margin: f64) -> Result<()> {
        let reissued = match Certificate::issue(self.params, self.vars, margin)? {
            Ok(c) => c,
            Err(rej) => {
                return Err(Error::CertificateInvalid(format!("LMI {} fails on re-check", rej.failing)));
            }
        };
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * (1.0 + a.abs().max(b.abs()));
        let close_opt = |a: Option<f64>, b: Option<f64>| match (a, b) {
            (Some(a), Some(b)) => close(a, b),
            (None, None) => true,
            _ => false,
        };
        let m = &self.margins;
        let r = &reissued.margins;
        let ok = close(self.alpha, reissued.alpha)
            && close(self.beta, reissued.beta)
            && close_opt(self.q, reissued.q)
            && close_opt(self.d0, reissued.d0)
            && close_opt(m.phi0, r.phi0)
            && close_opt(m.psi1, r.psi1)
            && close_opt(m.psi2, r.psi2)
            && close_opt(m.phi_obs, r.phi_obs);
        if ok {
            Ok(())
        } else {
            Err(Error::CertificateInvalid(
                "recorded constants disagree with re-derived ones".into(),
            ))
        }
    }

    pub fn to_json(&self) -> String {
        crate::to_json(self)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::invalid(format!("certificate JSON: {e}")))
    }
}

fn evaluate(params: &ProblemParams, vars: &DecisionVars, margin: f64) -> Result<(Option<&'static str>, Margins)> {
    if params.t_star.is_some() {
        let rep = check_observability(params, vars, margin)?;
        let margins = Margins {
            phi0: Some(rep.stability.phi0_min_eig),
            psi1: Some(rep.stability.psi1),
            psi2: Some(rep.stability.psi2_max_eig),
            phi_obs: Some(rep.phi_obs_max_eig),
        };
        Ok((rep.first_failure(), margins))
    } else {
        let rep = check_stability(params, vars, margin)?;
        let margins = Margins {
            phi0: Some(rep.phi0_min_eig),
            psi1: Some(rep.psi1),
            psi2: Some(rep.psi2_max_eig),
            phi_obs: None,
        };
        Ok((rep.first_failure(), margins))
    }
}

/// Margins and the first failing LMI for an arbitrary candidate.
pub fn diagnose(params: &ProblemParams, vars: &DecisionVars, margin: f64) -> Result<(Option<&'static str>, Margins)> {
    check_margin(margin)?;
    params.validate()?;
    evaluate(params, vars, margin)
}
