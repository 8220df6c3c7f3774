//! Pressure laws, their derivatives, and the energy potentials.
//!
//! Every law is written as a function `π(r)` of the congestion ratio
//! `r = ρ/ρ*`. Two potentials enter the energy balance:
//!
//! * `Q(r) = ∫₀^r π'(s)/s ds`, the pressure-work potential, so that
//!   `ρ*∇π(ρ/ρ*) = ρ∇Q(ρ/ρ*)` for any positive `ρ*(x)`;
//! * `Γ(r) = ∫₀^r π(s)/s² ds`, the stored-energy potential, which satisfies
//!   `Γ + rΓ' = Q` and makes `ρΓ(ρ/ρ*)` the congestion part of the energy.
//!
//! Both vanish at `r = 0`. For integer exponents they reduce to finite sums of
//! `I(m, n; r) = ∫₀^r s^m (1-s)^{-n} ds`, which is evaluated in closed form;
//! otherwise `I` is integrated numerically (see [`PowerRatioIntegral`]).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature;

/// Relative accuracy of every numerically integrated potential.
pub const POTENTIAL_REL_TOL: f64 = 1e-10;

fn default_phi_star() -> f64 {
    0.64
}

fn default_p_scale() -> f64 {
    1.0
}

/// A congestion pressure law `π(r)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PressureLaw {
    /// `ε r^α / (1-r)^β`, singular at `r = 1`.
    Singular { eps: f64, alpha: f64, beta: f64 },
    /// `a r^{γ_n}`; no density bound at finite `γ_n`.
    Barotropic { a: f64, gamma_n: f64 },
    /// `κ s^K` plus the singular law, capped to `ε s^α / δ^β` for `s ≥ 1-δ`.
    Truncated {
        eps: f64,
        alpha: f64,
        beta: f64,
        kappa: f64,
        #[serde(rename = "cap_K")]
        cap_k: f64,
        delta: f64,
    },
    /// `C₀ φ^s / (φ* - φ)` with `r` read as the solid volume fraction `φ`.
    Sedimentation {
        c0: f64,
        s_exp: f64,
        #[serde(default = "default_phi_star")]
        phi_star: f64,
    },
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::param(name, format!("must be finite and > 0, got {v}")))
    }
}

impl PressureLaw {
    pub fn kind(&self) -> &'static str {
        match self {
            PressureLaw::Singular { .. } => "singular",
            PressureLaw::Barotropic { .. } => "barotropic",
            PressureLaw::Truncated { .. } => "truncated",
            PressureLaw::Sedimentation { .. } => "sedimentation",
        }
    }

    /// Checks parameter invariants, returning the first offending key.
    pub fn validate(&self) -> Result<()> {
        self.issues().into_iter().next().map_or(Ok(()), Err)
    }

    /// All parameter violations, one per offending key.
    pub fn issues(&self) -> Vec<Error> {
        let mut out = Vec::new();
        let mut check = |name: &str, v: f64| {
            if let Err(e) = positive(name, v) {
                out.push(e);
            }
        };
        match *self {
            PressureLaw::Singular { eps, alpha, beta } => {
                check("eps", eps);
                check("alpha", alpha);
                check("beta", beta);
            }
            PressureLaw::Barotropic { a, gamma_n } => {
                check("a", a);
                if !(gamma_n.is_finite() && gamma_n > 1.0) {
                    out.push(Error::param("gamma_n", format!("must be > 1, got {gamma_n}")));
                }
            }
            PressureLaw::Truncated {
                eps,
                alpha,
                beta,
                kappa,
                cap_k,
                delta,
            } => {
                check("eps", eps);
                check("alpha", alpha);
                check("beta", beta);
                check("kappa", kappa);
                if !(cap_k.is_finite() && cap_k > 4.0) {
                    out.push(Error::param("cap_K", format!("must be > 4, got {cap_k}")));
                }
                if !(delta > 0.0 && delta < 1.0) {
                    out.push(Error::param("delta", format!("must lie in (0, 1), got {delta}")));
                }
            }
            PressureLaw::Sedimentation { c0, s_exp, phi_star } => {
                check("c0", c0);
                if !(2.0..=5.0).contains(&s_exp) {
                    out.push(Error::param("s_exp", format!("must lie in [2, 5], got {s_exp}")));
                }
                if !(phi_star > 0.0 && phi_star <= 1.0) {
                    out.push(Error::param("phi_star", format!("must lie in (0, 1], got {phi_star}")));
                }
            }
        }
        out
    }

    /// Non-fatal remarks: exponents below the range covered by the
    /// compactness analysis (α, β ≥ 3), and α ≤ 1 where Q and Γ diverge.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let PressureLaw::Singular { alpha, beta, .. } | PressureLaw::Truncated { alpha, beta, .. } = *self {
            if alpha < 3.0 {
                out.push(format!("alpha = {alpha} is below the analysed range alpha >= 3"));
            }
            if beta < 3.0 {
                out.push(format!("beta = {beta} is below the analysed range beta >= 3"));
            }
            if alpha <= 1.0 {
                out.push(format!("alpha = {alpha} <= 1: potentials Q and Gamma are not finite"));
            }
        }
        out
    }

    /// True when the law blows up at a finite ratio and therefore enforces a
    /// hard density bound.
    pub fn has_barrier(&self) -> bool {
        matches!(
            self,
            PressureLaw::Singular { .. } | PressureLaw::Sedimentation { .. }
        )
    }

    /// Ratio at which the law becomes singular (`1` or `φ*`), if any.
    pub fn ratio_limit(&self) -> Option<f64> {
        match *self {
            PressureLaw::Singular { .. } => Some(1.0),
            PressureLaw::Sedimentation { phi_star, .. } => Some(phi_star),
            _ => None,
        }
    }

    fn check_domain(&self, r: f64) -> Result<()> {
        if !(r >= 0.0) || !r.is_finite() {
            return Err(Error::param("r", format!("ratio must be finite and >= 0, got {r}")));
        }
        if let Some(limit) = self.ratio_limit() {
            if r >= limit {
                return Err(Error::BarrierViolation { ratio: r, cell: 0 });
            }
        }
        Ok(())
    }

    /// Pressure without domain checks; callers guarantee `0 <= r < limit`.
    pub fn pi_unchecked(&self, r: f64) -> f64 {
        match *self {
            PressureLaw::Singular { eps, alpha, beta } => eps * r.powf(alpha) / (1.0 - r).powf(beta),
            PressureLaw::Barotropic { a, gamma_n } => a * r.powf(gamma_n),
            PressureLaw::Truncated {
                eps,
                alpha,
                beta,
                kappa,
                cap_k,
                delta,
            } => {
                let capped = if r < 1.0 - delta {
                    eps * r.powf(alpha) / (1.0 - r).powf(beta)
                } else {
                    eps * r.powf(alpha) / delta.powf(beta)
                };
                kappa * r.powf(cap_k) + capped
            }
            PressureLaw::Sedimentation { c0, s_exp, phi_star } => c0 * r.powf(s_exp) / (phi_star - r),
        }
    }

    /// Exact derivative `dπ/dr`; right derivative at the truncation point.
    pub fn dpi_unchecked(&self, r: f64) -> f64 {
        match *self {
            PressureLaw::Singular { eps, alpha, beta } => singular_dpi(eps, alpha, beta, r),
            PressureLaw::Barotropic { a, gamma_n } => a * gamma_n * r.powf(gamma_n - 1.0),
            PressureLaw::Truncated {
                eps,
                alpha,
                beta,
                kappa,
                cap_k,
                delta,
            } => {
                let capped = if r < 1.0 - delta {
                    singular_dpi(eps, alpha, beta, r)
                } else {
                    eps * alpha * r.powf(alpha - 1.0) / delta.powf(beta)
                };
                kappa * cap_k * r.powf(cap_k - 1.0) + capped
            }
            PressureLaw::Sedimentation { c0, s_exp, phi_star } => {
                let gap = phi_star - r;
                c0 * (s_exp * r.powf(s_exp - 1.0) / gap + r.powf(s_exp) / (gap * gap))
            }
        }
    }
}

fn singular_dpi(eps: f64, alpha: f64, beta: f64, r: f64) -> f64 {
    let gap = 1.0 - r;
    eps * (alpha * r.powf(alpha - 1.0) / gap.powf(beta) + beta * r.powf(alpha) / gap.powf(beta + 1.0))
}

/// Viscosities and internal pressure `p(ρ) = p_scale · ρ^γ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FluidParams {
    pub mu: f64,
    pub lambda: f64,
    pub gamma: f64,
    #[serde(default = "default_p_scale")]
    pub p_scale: f64,
}

impl FluidParams {
    pub fn new(mu: f64, lambda: f64, gamma: f64) -> Self {
        Self {
            mu,
            lambda,
            gamma,
            p_scale: 1.0,
        }
    }

    pub fn issues(&self) -> Vec<Error> {
        let mut out = Vec::new();
        if !(self.mu.is_finite() && self.mu > 0.0) {
            out.push(Error::param("mu", format!("must be > 0, got {}", self.mu)));
        }
        if !(self.lambda.is_finite() && 2.0 * self.mu + self.lambda > 0.0) {
            out.push(Error::param("lambda", format!("2 mu + lambda must be > 0, got lambda = {}", self.lambda)));
        }
        if !(self.gamma.is_finite() && self.gamma > 1.0) {
            out.push(Error::param("gamma", format!("must be > 1, got {}", self.gamma)));
        }
        if !(self.p_scale.is_finite() && self.p_scale >= 0.0) {
            out.push(Error::param("p_scale", format!("must be >= 0, got {}", self.p_scale)));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        self.issues().into_iter().next().map_or(Ok(()), Err)
    }

    /// Bulk coefficient `2μ + λ`.
    pub fn bulk(&self) -> f64 {
        2.0 * self.mu + self.lambda
    }

    /// Internal energy density `p_scale ρ^γ / (γ-1)`.
    pub fn internal_energy_density(&self, rho: f64) -> f64 {
        self.p_scale * rho.powf(self.gamma) / (self.gamma - 1.0)
    }

    /// `dp/dρ`.
    pub fn dp(&self, rho: f64) -> f64 {
        self.p_scale * self.gamma * rho.powf(self.gamma - 1.0)
    }
}

/// Internal pressure `p = ρ^γ` and its enthalpy `H = γ/(γ-1) ρ^{γ-1}`, so
/// that `ρ∇H = ∇p` (both scaled by `p_scale`).
pub fn eval_internal(params: &FluidParams, rho: f64) -> (f64, f64) {
    let g = params.gamma;
    let p = params.p_scale * rho.powf(g);
    let h = params.p_scale * g / (g - 1.0) * rho.powf(g - 1.0);
    (p, h)
}

/// Nonnegative integer value of `x`, if it has one.
fn as_index(x: f64) -> Option<u32> {
    (x >= 0.0 && x.fract() == 0.0 && x < 4096.0).then_some(x as u32)
}

/// Closed form of `I(m, n; r) = ∫₀^r s^m (1-s)^{-n} ds` for integers.
///
/// Uses the binomial expansion in `t = 1 - s`; for `m ≥ 1` and small `r` the
/// alternating sum cancels, so the equivalent power series in `r` is summed
/// instead.
pub fn power_ratio_integral_int(m: u32, n: u32, r: f64) -> f64 {
    if r == 0.0 {
        return 0.0;
    }
    if m >= 1 && r <= 0.5 {
        // Σ_k C(n+k-1, k) r^{m+k+1} / (m+k+1)
        let mut coeff = 1.0;
        let mut rp = r.powi(m as i32 + 1);
        let mut sum = 0.0;
        for k in 0..10_000u32 {
            let term = coeff * rp / f64::from(m + k + 1);
            sum += term;
            if term.abs() <= 1e-17 * sum.abs() {
                break;
            }
            coeff *= f64::from(n + k) / f64::from(k + 1);
            if coeff == 0.0 {
                break;
            }
            rp *= r;
        }
        return sum;
    }
    let log_gap = (-r).ln_1p();
    let mut sum = 0.0;
    let mut binom = 1.0;
    for k in 0..=m {
        let j = i64::from(k) - i64::from(n);
        // ∫_{1-r}^1 t^j dt
        let piece = if j == -1 {
            -log_gap
        } else {
            let e = (j + 1) as f64;
            -((e * log_gap).exp_m1()) / e
        };
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        sum += sign * binom * piece;
        binom = binom * f64::from(m - k) / f64::from(k + 1);
    }
    sum
}

/// `I(m, n; r)` for real `m > -1`, `n >= 0`, with an optional cache of
/// cumulative values at fixed nodes for the non-integer case.
#[derive(Debug, Clone)]
pub struct PowerRatioIntegral {
    m: f64,
    n: f64,
    int: Option<(u32, u32)>,
    table: Option<Vec<(f64, f64)>>,
}

const TABLE_NODES: usize = 160;
const TABLE_SPAN: f64 = 18.420_680_743_952_367; // ln(1e8)

impl PowerRatioIntegral {
    pub fn new(m: f64, n: f64) -> Self {
        let int = match (as_index(m), as_index(n)) {
            (Some(mi), Some(ni)) => Some((mi, ni)),
            _ => None,
        };
        Self {
            m,
            n,
            int,
            table: None,
        }
    }

    /// Same integral with node samples precomputed for repeated evaluation.
    pub fn cached(m: f64, n: f64) -> Result<Self> {
        let mut me = Self::new(m, n);
        if me.int.is_none() {
            let h = TABLE_SPAN / TABLE_NODES as f64;
            let mut table = Vec::with_capacity(TABLE_NODES + 1);
            table.push((0.0, 0.0));
            let mut acc = 0.0;
            for j in 1..=TABLE_NODES {
                let a = table[j - 1].0;
                let b = -(-(j as f64) * h).exp_m1();
                acc += if j == 1 { me.from_zero(b)? } else { me.between(a, b)? };
                table.push((b, acc));
            }
            me.table = Some(table);
        }
        Ok(me)
    }

    pub fn is_closed_form(&self) -> bool {
        self.int.is_some()
    }

    fn integrand(&self, s: f64) -> f64 {
        s.powf(self.m) * (1.0 - s).powf(-self.n)
    }

    fn between(&self, a: f64, b: f64) -> Result<f64> {
        quadrature::integrate(|s| self.integrand(s), a, b, POTENTIAL_REL_TOL * 1e-2, 0.0)
    }

    fn from_zero(&self, r: f64) -> Result<f64> {
        if self.m < 0.0 {
            // s = r w^p removes the integrable endpoint singularity s^m.
            let p = 2.0 / (self.m + 1.0);
            let f = |w: f64| {
                let s = r * w.powf(p);
                r.powf(self.m + 1.0) * p * w.powf(p * (self.m + 1.0) - 1.0) * (1.0 - s).powf(-self.n)
            };
            quadrature::integrate(f, 0.0, 1.0, POTENTIAL_REL_TOL * 1e-2, 0.0)
        } else {
            self.between(0.0, r)
        }
    }

    pub fn eval(&self, r: f64) -> Result<f64> {
        if r <= 0.0 {
            return Ok(0.0);
        }
        if let Some((m, n)) = self.int {
            return Ok(power_ratio_integral_int(m, n, r));
        }
        match &self.table {
            Some(table) => {
                let h = TABLE_SPAN / TABLE_NODES as f64;
                let j = ((-(-r).ln_1p() / h).floor() as usize).min(TABLE_NODES);
                let (node, cum) = table[j];
                if j == 0 {
                    return self.from_zero(r);
                }
                Ok(cum + self.between(node, r)?)
            }
            None => self.from_zero(r),
        }
    }
}

/// A pressure law bundled with the integrals its potentials need, cached
/// when the exponents are not integers. Pure and shareable across threads.
#[derive(Debug, Clone)]
pub struct PressureModel {
    law: PressureLaw,
    // Integrals in the order used by `q`/`gamma` for each variant.
    gamma_part: Option<PowerRatioIntegral>,
    q_part: Option<PowerRatioIntegral>,
}

impl PressureModel {
    /// Validates the law and precomputes quadrature caches.
    pub fn new(law: PressureLaw) -> Result<Self> {
        Self::build(law, true)
    }

    fn build(law: PressureLaw, cache: bool) -> Result<Self> {
        law.validate()?;
        let make = |m: f64, n: f64| -> Result<PowerRatioIntegral> {
            if cache {
                PowerRatioIntegral::cached(m, n)
            } else {
                Ok(PowerRatioIntegral::new(m, n))
            }
        };
        let (gamma_part, q_part) = match law {
            PressureLaw::Singular { alpha, beta, .. } | PressureLaw::Truncated { alpha, beta, .. } => {
                if alpha <= 1.0 {
                    (None, None)
                } else {
                    (Some(make(alpha - 2.0, beta)?), Some(make(alpha - 1.0, beta + 1.0)?))
                }
            }
            PressureLaw::Sedimentation { s_exp, .. } => (Some(make(s_exp - 2.0, 1.0)?), Some(make(s_exp - 1.0, 2.0)?)),
            PressureLaw::Barotropic { .. } => (None, None),
        };
        Ok(Self {
            law,
            gamma_part,
            q_part,
        })
    }

    pub fn law(&self) -> &PressureLaw {
        &self.law
    }

    pub fn pi(&self, r: f64) -> Result<f64> {
        self.law.check_domain(r)?;
        Ok(self.law.pi_unchecked(r))
    }

    pub fn dpi(&self, r: f64) -> Result<f64> {
        self.law.check_domain(r)?;
        Ok(self.law.dpi_unchecked(r))
    }

    fn parts(&self) -> Result<(&PowerRatioIntegral, &PowerRatioIntegral)> {
        match (&self.gamma_part, &self.q_part) {
            (Some(g), Some(q)) => Ok((g, q)),
            _ => Err(Error::param("alpha", "potentials require alpha > 1")),
        }
    }

    /// `Γ(r) = ∫₀^r π(s)/s² ds`.
    pub fn gamma(&self, r: f64) -> Result<f64> {
        self.law.check_domain(r)?;
        if r == 0.0 {
            return Ok(0.0);
        }
        match self.law {
            PressureLaw::Barotropic { a, gamma_n } => Ok(a * r.powf(gamma_n - 1.0) / (gamma_n - 1.0)),
            PressureLaw::Singular { eps, .. } => Ok(eps * self.parts()?.0.eval(r)?),
            PressureLaw::Truncated {
                eps,
                alpha,
                beta,
                kappa,
                cap_k,
                delta,
            } => {
                let (ig, _) = self.parts()?;
                let stiff = kappa * r.powf(cap_k - 1.0) / (cap_k - 1.0);
                let knee = 1.0 - delta;
                let capped = if r < knee {
                    eps * ig.eval(r)?
                } else {
                    eps * ig.eval(knee)?
                        + eps / delta.powf(beta) * (r.powf(alpha - 1.0) - knee.powf(alpha - 1.0)) / (alpha - 1.0)
                };
                Ok(stiff + capped)
            }
            PressureLaw::Sedimentation { c0, s_exp, phi_star } => {
                Ok(c0 * phi_star.powf(s_exp - 2.0) * self.parts()?.0.eval(r / phi_star)?)
            }
        }
    }

    /// `Q(r) = ∫₀^r π'(s)/s ds`.
    pub fn q(&self, r: f64) -> Result<f64> {
        self.law.check_domain(r)?;
        if r == 0.0 {
            return Ok(0.0);
        }
        match self.law {
            PressureLaw::Barotropic { a, gamma_n } => Ok(a * gamma_n / (gamma_n - 1.0) * r.powf(gamma_n - 1.0)),
            PressureLaw::Singular { eps, alpha, beta } => {
                let (ig, iq) = self.parts()?;
                Ok(eps * (alpha * ig.eval(r)? + beta * iq.eval(r)?))
            }
            PressureLaw::Truncated {
                eps,
                alpha,
                beta,
                kappa,
                cap_k,
                delta,
            } => {
                let (ig, iq) = self.parts()?;
                let stiff = kappa * cap_k / (cap_k - 1.0) * r.powf(cap_k - 1.0);
                let knee = 1.0 - delta;
                let upto = r.min(knee);
                let mut capped = eps * (alpha * ig.eval(upto)? + beta * iq.eval(upto)?);
                if r > knee {
                    capped += eps * alpha / (delta.powf(beta) * (alpha - 1.0))
                        * (r.powf(alpha - 1.0) - knee.powf(alpha - 1.0));
                }
                Ok(stiff + capped)
            }
            PressureLaw::Sedimentation { c0, s_exp, phi_star } => {
                let (ig, iq) = self.parts()?;
                let t = r / phi_star;
                Ok(c0 * phi_star.powf(s_exp - 2.0) * (s_exp * ig.eval(t)? + iq.eval(t)?))
            }
        }
    }

    /// True when Q and Γ are evaluated by closed form.
    pub fn closed_form(&self) -> bool {
        match (&self.gamma_part, &self.q_part) {
            (Some(g), Some(q)) => g.is_closed_form() && q.is_closed_form(),
            _ => matches!(self.law, PressureLaw::Barotropic { .. }),
        }
    }
}

/// `π(r)` for the given law.
pub fn eval_pi(law: &PressureLaw, r: f64) -> Result<f64> {
    law.validate()?;
    law.check_domain(r)?;
    Ok(law.pi_unchecked(r))
}

/// `dπ/dr` for the given law.
pub fn eval_dpi(law: &PressureLaw, r: f64) -> Result<f64> {
    law.validate()?;
    law.check_domain(r)?;
    Ok(law.dpi_unchecked(r))
}

/// `Q(r)`; closed form for integer exponents, adaptive quadrature otherwise.
pub fn eval_q(law: &PressureLaw, r: f64) -> Result<f64> {
    PressureModel::build(*law, false)?.q(r)
}

/// `Γ(r)`; closed form for integer exponents, adaptive quadrature otherwise.
pub fn eval_gamma(law: &PressureLaw, r: f64) -> Result<f64> {
    PressureModel::build(*law, false)?.gamma(r)
}

/// Result of comparing `Γ(r)` against `C₁ ε (1-r)^{-(β-1)} - C₂`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LowerBoundCheck {
    pub holds: bool,
    /// `Γ(r) - (C₁ ε (1-r)^{1-β} - C₂)`.
    pub slack: f64,
    pub c1: f64,
    pub c2: f64,
}

/// Lower bound `Γ(r) ≥ C₁ ε (1-r)^{-(β-1)} - C₂` for the singular law, with
/// `C₁ = 1/(2(β-1))` and `C₂` the maximum of the remainder over `[0, 0.999]`.
#[derive(Debug, Clone)]
pub struct GammaLowerBound {
    model: PressureModel,
    eps: f64,
    beta: f64,
    pub c1: f64,
    pub c2: f64,
}

impl GammaLowerBound {
    pub const SCAN_END: f64 = 0.999;

    pub fn new(law: &PressureLaw) -> Result<Self> {
        let PressureLaw::Singular { eps, alpha, beta } = *law else {
            return Err(Error::param("kind", "lower bound applies to the singular law only"));
        };
        if as_index(alpha).is_none() || as_index(beta).is_none() || alpha < 2.0 || beta <= 1.0 {
            return Err(Error::param(
                "alpha/beta",
                format!("lower bound needs integer alpha >= 2 and beta >= 2, got ({alpha}, {beta})"),
            ));
        }
        let model = PressureModel::new(*law)?;
        let c1 = 1.0 / (2.0 * (beta - 1.0));
        let remainder = |r: f64| -> Result<f64> { Ok(c1 * eps * (1.0 - r).powf(1.0 - beta) - model.gamma(r)?) };
        let samples = 20_000;
        let mut best = (0.0, remainder(0.0)?);
        for k in 1..=samples {
            let r = Self::SCAN_END * k as f64 / samples as f64;
            let v = remainder(r)?;
            if v > best.1 {
                best = (r, v);
            }
        }
        // Golden-section refinement around the best sample.
        let h = Self::SCAN_END / samples as f64;
        let (mut lo, mut hi) = ((best.0 - h).max(0.0), (best.0 + h).min(Self::SCAN_END));
        let phi = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..80 {
            let x1 = hi - phi * (hi - lo);
            let x2 = lo + phi * (hi - lo);
            if remainder(x1)? > remainder(x2)? {
                hi = x2;
            } else {
                lo = x1;
            }
            best.1 = best.1.max(remainder(x1)?).max(remainder(x2)?);
        }
        Ok(Self {
            model,
            eps,
            beta,
            c1,
            c2: best.1,
        })
    }

    pub fn check(&self, r: f64) -> Result<LowerBoundCheck> {
        let gamma = self.model.gamma(r)?;
        let bound = self.c1 * self.eps * (1.0 - r).powf(1.0 - self.beta) - self.c2;
        let slack = gamma - bound;
        let scale = gamma.abs() + bound.abs() + self.c2.abs();
        Ok(LowerBoundCheck {
            holds: slack >= -1e-12 * scale,
            slack,
            c1: self.c1,
            c2: self.c2,
        })
    }
}

pub fn gamma_lower_bound_check(law: &PressureLaw, r: f64) -> Result<LowerBoundCheck> {
    GammaLowerBound::new(law)?.check(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const SING: PressureLaw = PressureLaw::Singular {
        eps: 1e-3,
        alpha: 2.0,
        beta: 4.0,
    };

    fn truncated(delta: f64) -> PressureLaw {
        PressureLaw::Truncated {
            eps: 1e-2,
            alpha: 3.0,
            beta: 4.0,
            kappa: 0.1,
            cap_k: 6.0,
            delta,
        }
    }

    #[test]
    fn singular_value_at_half() {
        assert_relative_eq!(eval_pi(&SING, 0.5).unwrap(), 4.0e-3, max_relative = 1e-14);
    }

    #[test]
    fn zero_ratio_is_zero_pressure() {
        let laws = [
            SING,
            PressureLaw::Barotropic { a: 1.0, gamma_n: 2.0 },
            truncated(0.1),
            PressureLaw::Sedimentation {
                c0: 1.0,
                s_exp: 3.0,
                phi_star: 0.64,
            },
        ];
        for law in laws {
            assert_eq!(eval_pi(&law, 0.0).unwrap(), 0.0);
            assert_eq!(eval_q(&law, 0.0).unwrap(), 0.0);
            assert_eq!(eval_gamma(&law, 0.0).unwrap(), 0.0);
        }
    }

    #[test]
    fn truncated_branches_meet_at_knee() {
        let (eps, alpha, beta, kappa, k, delta) = (1e-2, 3.0, 4.0, 0.1, 6.0, 0.1);
        let s: f64 = 1.0 - delta;
        let lower = kappa * s.powf(k) + eps * s.powf(alpha) / (1.0 - s).powf(beta);
        let upper = kappa * s.powf(k) + eps * s.powf(alpha) / delta.powf(beta);
        let at = eval_pi(&truncated(delta), s).unwrap();
        assert_relative_eq!(lower, upper, max_relative = 1e-14);
        assert_relative_eq!(at, upper, max_relative = 1e-15);
    }

    #[test]
    fn derivative_examples() {
        assert_relative_eq!(eval_dpi(&SING, 0.5).unwrap(), 4.8e-2, max_relative = 1e-13);
        let baro = PressureLaw::Barotropic { a: 1.0, gamma_n: 2.0 };
        assert_relative_eq!(eval_dpi(&baro, 0.5).unwrap(), 1.0, max_relative = 1e-15);
        assert_eq!(eval_dpi(&SING, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let h = 1e-6;
        let r = 0.5;
        let fd = (eval_pi(&SING, r + h).unwrap() - eval_pi(&SING, r - h).unwrap()) / (2.0 * h);
        assert_relative_eq!(eval_dpi(&SING, r).unwrap(), fd, max_relative = 1e-8);
    }

    #[test]
    fn truncated_derivative_is_right_derivative_at_knee() {
        let law = truncated(0.1);
        let PressureLaw::Truncated { eps, alpha, beta, kappa, cap_k, delta } = law else { unreachable!() };
        let s: f64 = 1.0 - delta;
        let right = kappa * cap_k * s.powf(cap_k - 1.0) + eps * alpha * s.powf(alpha - 1.0) / delta.powf(beta);
        assert_relative_eq!(eval_dpi(&law, s).unwrap(), right, max_relative = 1e-14);
    }

    #[test]
    fn barrier_violation_at_or_above_one() {
        assert!(matches!(eval_pi(&SING, 1.0), Err(Error::BarrierViolation { .. })));
        assert!(matches!(eval_dpi(&SING, 1.2), Err(Error::BarrierViolation { .. })));
        assert!(matches!(eval_gamma(&SING, 1.0), Err(Error::BarrierViolation { .. })));
        let sed = PressureLaw::Sedimentation {
            c0: 1.0,
            s_exp: 2.0,
            phi_star: 0.64,
        };
        assert!(matches!(eval_pi(&sed, 0.64), Err(Error::BarrierViolation { .. })));
        assert!(eval_pi(&sed, 0.63).is_ok());
        // Truncated and barotropic laws have no barrier.
        assert!(eval_pi(&truncated(0.1), 1.5).is_ok());
    }

    #[test]
    fn invalid_laws_are_rejected() {
        let bad = PressureLaw::Singular {
            eps: 1e-3,
            alpha: 2.0,
            beta: -1.0,
        };
        match eval_pi(&bad, 0.1) {
            Err(Error::Parameter { name, .. }) => assert_eq!(name, "beta"),
            other => panic!("{other:?}"),
        }
        assert!(truncated(1.0).validate().is_err());
        assert!(PressureLaw::Barotropic { a: 1.0, gamma_n: 1.0 }.validate().is_err());
        let k4 = PressureLaw::Truncated {
            eps: 1e-2,
            alpha: 3.0,
            beta: 4.0,
            kappa: 0.1,
            cap_k: 4.0,
            delta: 0.1,
        };
        assert!(k4.validate().is_err());
    }

    #[test]
    fn low_exponents_warn_but_validate() {
        assert!(SING.validate().is_ok());
        assert_eq!(SING.warnings().len(), 1);
        let ok = PressureLaw::Singular {
            eps: 1.0,
            alpha: 3.0,
            beta: 3.0,
        };
        assert!(ok.warnings().is_empty());
    }

    #[test]
    fn gamma_closed_form_for_alpha2_beta4() {
        for r in [0.1f64, 0.5, 0.9, 0.99] {
            let expected = 1e-3 / 3.0 * ((1.0 - r).powi(-3) - 1.0);
            assert_relative_eq!(eval_gamma(&SING, r).unwrap(), expected, max_relative = 1e-12);
        }
        assert_relative_eq!(eval_gamma(&SING, 0.5).unwrap(), 7e-3 / 3.0, max_relative = 1e-13);
    }

    #[test]
    fn barotropic_potentials() {
        let (a, g) = (1.3, 2.5);
        let law = PressureLaw::Barotropic { a, gamma_n: g };
        let r: f64 = 0.7;
        assert_relative_eq!(eval_q(&law, r).unwrap(), a * g / (g - 1.0) * r.powf(g - 1.0), max_relative = 1e-14);
        assert_relative_eq!(eval_gamma(&law, r).unwrap(), a / (g - 1.0) * r.powf(g - 1.0), max_relative = 1e-14);
    }

    #[test]
    fn series_and_binomial_agree_at_switch() {
        for &(m, n) in &[(1u32, 4u32), (3, 5), (2, 1), (4, 2)] {
            let below = power_ratio_integral_int(m, n, 0.5);
            // Force the binomial branch at r = 0.5 + tiny.
            let above = power_ratio_integral_int(m, n, 0.5 + 1e-15);
            assert_relative_eq!(below, above, max_relative = 1e-12);
        }
    }

    #[test]
    fn cached_and_uncached_quadrature_agree() {
        let plain = PowerRatioIntegral::new(0.5, 3.5);
        let cached = PowerRatioIntegral::cached(0.5, 3.5).unwrap();
        for &r in &[1e-4, 0.05, 0.3, 0.77, 0.95, 0.999] {
            assert_relative_eq!(plain.eval(r).unwrap(), cached.eval(r).unwrap(), max_relative = 1e-11);
        }
        let sing = PowerRatioIntegral::cached(-0.6, 2.0).unwrap();
        let direct = PowerRatioIntegral::new(-0.6, 2.0);
        assert_relative_eq!(sing.eval(0.01).unwrap(), direct.eval(0.01).unwrap(), max_relative = 1e-11);
    }

    #[test]
    fn internal_pressure_examples() {
        let p2 = FluidParams::new(1.0, 0.0, 2.0);
        assert_eq!(eval_internal(&p2, 0.0), (0.0, 0.0));
        let (p, h) = eval_internal(&p2, 0.5);
        assert_relative_eq!(p, 0.25, max_relative = 1e-15);
        assert_relative_eq!(h, 1.0, max_relative = 1e-15);
        let (p, h) = eval_internal(&FluidParams::new(1.0, 0.0, 1.4), 1.0);
        assert_relative_eq!(p, 1.0, max_relative = 1e-15);
        assert_relative_eq!(h, 3.5, max_relative = 1e-14);
    }

    #[test]
    fn fluid_params_validation() {
        assert!(FluidParams::new(0.0, 0.0, 2.0).validate().is_err());
        assert!(FluidParams::new(1.0, -2.5, 2.0).validate().is_err());
        assert!(FluidParams::new(1.0, -1.5, 2.0).validate().is_ok());
        assert!(FluidParams::new(1.0, 0.0, 1.0).validate().is_err());
    }

    #[test]
    fn lower_bound_examples() {
        let at0 = gamma_lower_bound_check(&SING, 0.0).unwrap();
        assert!(at0.holds && at0.slack >= 0.0);
        assert!(gamma_lower_bound_check(&SING, 0.9).unwrap().holds);
        let bound = GammaLowerBound::new(&SING).unwrap();
        assert_relative_eq!(bound.c1, 1.0 / 6.0);
        for k in 1..=99 {
            let r = k as f64 / 100.0;
            assert!(bound.check(r).unwrap().holds, "r = {r}");
        }
        assert!(GammaLowerBound::new(&PressureLaw::Barotropic { a: 1.0, gamma_n: 2.0 }).is_err());
    }
}
