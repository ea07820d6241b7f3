//! Assembly of the full contraction-rate ladder
//!
//!   ε₀ → η → θ → (a, φ_min, κ̄) → κ_M → C₁ → β → C_M → C₀ → C₂ → (c, ι*),
//!
//! each step taking a fixed safety fraction (default 0.9) of its admissible
//! bound. The ladder is intrinsically log-domain: a(2M)² = θM²/(η²σ²) is
//! bounded below by ~10³ over all admissible inputs and reaches 10¹¹ at
//! ordinary parameters, so κ_M, β, C₀, C₂, c and ι* only exist as logarithms.
//! Nothing here depends on a particle count: the rate is a mean-field limit
//! statement and the assembly is bitwise identical for any ensemble size.

use crate::error::{Error, Result};
use crate::logdomain::{LogPos, SignedLog};
use crate::rates::hfamily::{h_family, HFamily};
use crate::rates::{build_g, GForm};
use crate::rng::{stream_rng, tag};
use rand::Rng;
use serde::{Deserialize, Serialize};

fn default_safety() -> f64 {
    0.9
}

/// Problem data for the rate ladder. `lip_x` is the Lipschitz constant of the
/// non-convex part of the interaction drift; `iota` the law-sensitivity
/// allowance; `m_radius` the confinement radius entering h.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateInputs {
    pub gamma: f64,
    pub lambda: f64,
    pub sigma: f64,
    #[serde(default)]
    pub lip_x: f64,
    #[serde(default)]
    pub iota: f64,
    pub m_radius: f64,
    #[serde(default = "default_safety")]
    pub safety: f64,
}

impl RateInputs {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return Err(Error::invalid("gamma", "must be positive and finite"));
        }
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(Error::invalid("lambda", "must be positive and finite"));
        }
        if self.sigma == 0.0 {
            return Err(Error::invalid(
                "sigma",
                "contraction ladder needs strictly positive diffusion",
            ));
        }
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(Error::invalid("sigma", "must be positive and finite"));
        }
        if !(self.lip_x >= 0.0) || !self.lip_x.is_finite() {
            return Err(Error::invalid("lip_x", "must be nonnegative and finite"));
        }
        if !(self.iota >= 0.0) || !self.iota.is_finite() {
            return Err(Error::invalid("iota", "must be nonnegative and finite"));
        }
        if !(self.m_radius > 0.0) || !self.m_radius.is_finite() {
            return Err(Error::invalid("m_radius", "must be positive and finite"));
        }
        if !(self.safety > 0.0 && self.safety < 1.0) {
            return Err(Error::invalid("safety", "must lie strictly inside (0, 1)"));
        }
        Ok(())
    }
}

/// Every constant of the ladder, plus the h-family evaluator for reuse by the
/// coupling experiments.
#[derive(Debug, Clone, Serialize)]
pub struct RateConstants {
    pub inputs: RateInputs,
    pub gform: GForm,
    pub epsilon0: f64,
    pub eta: f64,
    pub theta: f64,
    /// Sharpness a = θ/(4η²σ²) of the h-family.
    pub a: f64,
    pub phi_min: LogPos,
    pub kappa_bar: LogPos,
    pub kappa_m: LogPos,
    pub c1: f64,
    pub beta: LogPos,
    pub c_m: f64,
    pub h_2m: f64,
    pub c0: LogPos,
    pub c2: LogPos,
    /// κ_M − C₁β: the rate budget left after the perturbation terms at ι = 0.
    pub margin_at_zero: LogPos,
    /// Coefficient of ι in the first branch of c.
    pub iota_sensitivity: LogPos,
    /// Second branch: (γ̄ − 7‖Q̄‖ε₀/λ_G)·2βλ_G M²/(1 + 2βλ_G M²).
    pub synchronous_branch: LogPos,
    pub iota_star: LogPos,
    pub c: SignedLog,
    #[serde(skip)]
    pub h: HFamily,
}

impl RateConstants {
    /// Re-evaluate c at a different law-sensitivity ι without rebuilding the
    /// ladder (everything upstream of c is ι-independent).
    pub fn c_at_iota(&self, iota: f64) -> Result<SignedLog> {
        if !(iota >= 0.0) || !iota.is_finite() {
            return Err(Error::invalid("iota", "must be nonnegative and finite"));
        }
        let branch1 = if iota == 0.0 {
            SignedLog::positive(self.margin_at_zero)
        } else {
            SignedLog::diff(self.margin_at_zero, self.iota_sensitivity.scale(iota))
        };
        Ok(branch1.min_with(self.synchronous_branch))
    }
}

/// Run the ladder for one set of inputs.
pub fn assemble_constants(inputs: &RateInputs) -> Result<RateConstants> {
    inputs.validate()?;
    let s = inputs.safety;
    let g = build_g(inputs.gamma, inputs.lambda)?;
    let (gamma, sigma, m) = (inputs.gamma, inputs.sigma, inputs.m_radius);
    let qn = g.q_bar_norm;

    let epsilon0 = s * g.gamma_bar * g.lambda_g / (7.0 * qn);
    let d_lip = inputs.lip_x + g.lambda + 4.0 * qn * sigma * sigma;
    let eta = s * (gamma.min(epsilon0) / d_lip).min(m * epsilon0.sqrt() / sigma);
    if !(eta > 0.0) || !eta.is_finite() {
        return Err(Error::invalid("inputs", "step-size constant eta left (0, ∞)"));
    }
    let theta = 1.0 / eta + 8.0 * qn * sigma * sigma;
    let hfam = h_family(eta, sigma, theta, m)?;

    let slope_gap = gamma - eta * d_lip;
    debug_assert!(slope_gap > 0.0);
    let kappa_m = hfam
        .kappa_bar
        .min(hfam.phi_min.scale(0.5 * slope_gap))
        .scale(s);
    let c1 = 4.0 * qn * inputs.lip_x * m * m * (1.0 + 2.0 / eta) + 4.0 * qn * sigma * sigma;
    let c1_log = LogPos::from_value(c1);
    let ratio = kappa_m / c1_log;
    let beta_capped = ratio.ln_value() >= 0.0;
    let beta = ratio.min(LogPos::one()).scale(s);
    let c_m = 4.0 * m * m * g.c_g * (1.0 + 1.0 / (eta * eta));
    if !c1.is_finite() || !c_m.is_finite() {
        return Err(Error::invalid("inputs", "perturbation constants left f64 range"));
    }

    let c0 = find_c0(&g, &hfam, beta)?;
    let c2 = c0.scale(2.0 * qn * m * (1.0 + 2.0 / eta));

    // On the ratio branch C₁β equals s·κ_M identically, so the margin is
    // κ_M(1−s) — kept analytic because at extreme ladder scales a single ulp
    // of ln κ_M dwarfs ln C₁ and the rounded difference loses its sign.
    let margin_at_zero = if beta_capped {
        kappa_m
            .sub(beta * c1_log)
            .ok_or_else(|| Error::invalid("beta", "ladder lost the κ_M − C₁β margin"))?
    } else {
        kappa_m.scale(1.0 - s)
    };
    let iota_sensitivity = (beta * LogPos::from_value(c_m))
        .one_plus()
        .scale(eta)
        .add(beta.scale(hfam.h_2m) * c2);
    let iota_star = margin_at_zero / iota_sensitivity;

    let sync_slack = g.gamma_bar - 7.0 * qn * epsilon0 / g.lambda_g;
    if !(sync_slack > 0.0) {
        return Err(Error::invalid("safety", "synchronous branch lost positivity"));
    }
    let x = beta.scale(2.0 * g.lambda_g * m * m);
    let synchronous_branch = (x / x.one_plus()).scale(sync_slack);

    let branch1 = if inputs.iota == 0.0 {
        SignedLog::positive(margin_at_zero)
    } else {
        SignedLog::diff(margin_at_zero, iota_sensitivity.scale(inputs.iota))
    };
    let c = branch1.min_with(synchronous_branch);

    Ok(RateConstants {
        inputs: inputs.clone(),
        epsilon0,
        eta,
        theta,
        a: hfam.a,
        phi_min: hfam.phi_min,
        kappa_bar: hfam.kappa_bar,
        kappa_m,
        c1,
        beta,
        c_m,
        h_2m: hfam.h_2m,
        c0,
        c2,
        margin_at_zero,
        iota_sensitivity,
        synchronous_branch,
        iota_star,
        c,
        gform: g,
        h: hfam,
    })
}

/// c across a grid of ι values, reusing one ladder assembly.
pub fn sweep_iota(inputs: &RateInputs, iotas: &[f64]) -> Result<Vec<(f64, SignedLog)>> {
    let rc = assemble_constants(inputs)?;
    iotas
        .iter()
        .map(|&i| Ok((i, rc.c_at_iota(i)?)))
        .collect()
}

fn logaddexp(a: f64, b: f64) -> f64 {
    LogPos::from_ln(a).add(LogPos::from_ln(b)).ln_value()
}

/// Smallest envelope constant with r + u ≤ C₀ (1 + βλ_G(r²+u²)) h_low(r + ηu)
/// for all r, u ≥ 0, where h_low is Φ/2 on [0, 2M] and h(2M) beyond. The sup
/// sits at r + u ≈ √(2/(βλ_G)) once β is small — astronomically far out — so
/// the search runs on log-parameterized radii: a closed-form tail candidate
/// plus a refined grid over the moderate region, then a 10⁶-point audit.
pub fn find_c0(g: &GForm, h: &HFamily, beta: LogPos) -> Result<LogPos> {
    assert!(!beta.is_zero(), "find_c0 needs β > 0");
    let two_m = 2.0 * h.m_radius;
    let eta = h.eta;
    let ln_lambda_g = g.lambda_g.ln();
    let ln_beta = beta.ln_value();
    let ln_h2m = h.h_2m.ln();
    let ln_2m = two_m.ln();
    let ln_eta = eta.ln();

    // f(τ_r, τ_u) = ln[(r+u) / ((1 + βλ_G(r²+u²)) h_low(r+ηu))] at r = e^τʳ.
    let f = |tr: f64, tu: f64| -> f64 {
        let ln_sum = logaddexp(tr, tu);
        let ln_q = logaddexp(2.0 * tr, 2.0 * tu);
        let ln_denom1 = LogPos::from_ln(ln_beta + ln_lambda_g + ln_q)
            .one_plus()
            .ln_value();
        let ln_l = logaddexp(tr, ln_eta + tu);
        let ln_hlow = if ln_l >= ln_2m {
            ln_h2m
        } else {
            (0.5 * h.cap_phi(ln_l.exp())).ln()
        };
        ln_sum - ln_denom1 - ln_hlow
    };

    let tau_lo = -45.0;
    let tr_hi = ln_2m + 2.0;
    let tu_hi = ln_2m - ln_eta + 2.0;
    let mut best = f64::NEG_INFINITY;
    let mut best_at = (tau_lo, tau_lo);
    let n = 180;
    for i in 0..n {
        let tr = tau_lo + (tr_hi - tau_lo) * i as f64 / (n - 1) as f64;
        for j in 0..n {
            let tu = tau_lo + (tu_hi - tau_lo) * j as f64 / (n - 1) as f64;
            let v = f(tr, tu);
            if v > best {
                best = v;
                best_at = (tr, tu);
            }
        }
    }
    let mut width = ((tr_hi - tau_lo) / (n - 1) as f64).max((tu_hi - tau_lo) / (n - 1) as f64);
    for _ in 0..4 {
        let (cr, cu) = best_at;
        let m_pts = 41;
        for i in 0..m_pts {
            let tr = cr - width + 2.0 * width * i as f64 / (m_pts - 1) as f64;
            for j in 0..m_pts {
                let tu = cu - width + 2.0 * width * j as f64 / (m_pts - 1) as f64;
                let v = f(tr, tu);
                if v > best {
                    best = v;
                    best_at = (tr, tu);
                }
            }
        }
        width /= 8.0;
    }

    // h_low jumps up from Φ(2M)/2 to h(2M) across ℓ = 2M, so the sup can sit
    // on the inside approach to that curve; scan it directly, r from 0 to 2M.
    {
        let ln_l = ln_2m + (-1e-6f64).ln_1p();
        let l = ln_l.exp();
        let k_pts = 2000;
        for j in 0..=k_pts {
            let r = l * j as f64 / k_pts as f64;
            let u = (l - r) / eta;
            let v = f(r.ln(), u.ln());
            if v > best {
                best = v;
            }
        }
    }

    // Far-field stationary point: at fixed r+u = S the quadratic penalty is
    // minimized by r = u, and d/dS vanishes where βλ_G S²/2 = 1.
    let ln_s_star = 0.5 * (std::f64::consts::LN_2 - ln_beta - ln_lambda_g);
    if ln_s_star - std::f64::consts::LN_2 >= ln_2m {
        best = best.max(ln_s_star - 2.0 * std::f64::consts::LN_2 - ln_h2m);
    }

    // First audit also feeds the estimate: random log-uniform radii.
    let audit_hi = tr_hi.max(tu_hi).max(ln_s_star + 5.0);
    let mut rng = stream_rng(0, tag::REFERENCE, &[0xC0]);
    for _ in 0..500_000u32 {
        let tr = rng.random_range(tau_lo..audit_hi);
        let tu = rng.random_range(tau_lo..audit_hi);
        let v = f(tr, tu);
        if v > best {
            best = v;
        }
    }

    let c0 = LogPos::from_ln(best + 1.001f64.ln());

    // Independent verification audit on a fresh stream.
    let mut rng = stream_rng(0, tag::REFERENCE, &[0xC1]);
    for k in 0..500_000u32 {
        let tr = rng.random_range(tau_lo..audit_hi);
        let tu = rng.random_range(tau_lo..audit_hi);
        if f(tr, tu) > c0.ln_value() + 1e-9 {
            return Err(Error::invalid(
                "c0",
                format!("envelope audit failed at sample {k} (ln r = {tr:.3}, ln u = {tu:.3})"),
            ));
        }
    }
    Ok(c0)
}
