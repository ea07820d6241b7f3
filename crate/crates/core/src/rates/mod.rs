//! Contraction-rate machinery for the coupled pair process.
//!
//! For two solutions X, X' driven by the reflection/synchronous coupling, the
//! difference variables δX and P = δV + γδX close (in expectation, for
//! quadratic interaction) a linear system on (z, r², u²) where z = δX·P,
//! r = |δX|, u = |P|. This module builds that drift matrix, diagonalizes it in
//! closed form, and assembles the quadratic Lyapunov form G together with the
//! full constant ladder (ε₀, η, θ, κ_M, β, C₀, C₂, c, ι*) used by both the
//! coupling experiments and the rate ledger.

mod constants;
mod hfamily;

pub use constants::{assemble_constants, find_c0, sweep_iota, RateConstants, RateInputs};
pub use hfamily::{h_family, HFamily};

use crate::error::{Error, Result};
use serde::Serialize;

/// Which spectral regime the friction/interaction pair falls in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DampingCase {
    /// γ² > 4λ: three real eigenvalues −γ, −γ ± s with s = √(γ²−4λ).
    Overdamped,
    /// γ² < 4λ: real −γ plus the pair −γ ± iw with w = √(4λ−γ²).
    Underdamped,
}

/// Drift matrix of (z, r², u²) under the coupled dynamics:
/// ż = u² − γz − λr², (r²)' = 2z − 2γr² (from ṙ² = 2δX·δẊ and δẊ = P − γδX),
/// (u²)' = −2λz plus noise terms excluded here.
pub fn drift_matrix(gamma: f64, lambda: f64) -> [[f64; 3]; 3] {
    [
        [-gamma, -lambda, 1.0],
        [2.0, -2.0 * gamma, 0.0],
        [-2.0 * lambda, 0.0, 0.0],
    ]
}

/// Eigenvalues of `drift_matrix` as (re, im) pairs, from the closed-form
/// factorization (ζ + γ)(ζ² + 2γζ + 4λ) = 0.
pub fn drift_matrix_eigen(gamma: f64, lambda: f64) -> Result<([[f64; 3]; 3], [(f64, f64); 3], DampingCase)> {
    check_pair(gamma, lambda)?;
    let a = drift_matrix(gamma, lambda);
    let disc = gamma * gamma - 4.0 * lambda;
    if disc > 0.0 {
        let s = disc.sqrt();
        Ok((a, [(-gamma, 0.0), (-gamma + s, 0.0), (-gamma - s, 0.0)], DampingCase::Overdamped))
    } else {
        // The critical case is handed to the caller as a degenerate complex pair.
        let w = (-disc).max(0.0).sqrt();
        Ok((a, [(-gamma, 0.0), (-gamma, w), (-gamma, -w)], DampingCase::Underdamped))
    }
}

fn check_pair(gamma: f64, lambda: f64) -> Result<()> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::invalid("gamma", "must be positive and finite"));
    }
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::invalid("lambda", "must be positive and finite"));
    }
    Ok(())
}

/// The quadratic Lyapunov form G(δX, P) and every spectral quantity derived
/// from the (z, r², u²) drift matrix.
#[derive(Debug, Clone, Serialize)]
pub struct GForm {
    pub case_tag: DampingCase,
    /// True when γ² = 4λ exactly and λ was nudged to λ(1−10⁻⁶).
    pub critical_nudged: bool,
    pub gamma: f64,
    /// Post-nudge interaction strength.
    pub lambda: f64,
    /// Real similarity Q with QA = ΛQ.
    pub q: [[f64; 3]; 3],
    /// Λ: diagonal in the overdamped case, block (−γ) ⊕ rotation in the other.
    pub lam: [[f64; 3]; 3],
    pub eigenvalues: [(f64, f64); 3],
    /// Slowest decay rate: γ − s when overdamped, γ otherwise.
    pub gamma_bar: f64,
    /// Row vector with G(δX, P) = q̄₁ z + q̄₂ r² + q̄₃ u².
    pub q_bar: [f64; 3],
    pub q_bar_norm: f64,
    /// Rows (p, q) of Σ: G = Σ_rows |p δX + q P|².
    pub sigma_rows: [[f64; 2]; 2],
    /// Extreme eigenvalues of ΣᵀΣ: λ_G |(δX,P)|² ≤ G ≤ C_G |(δX,P)|².
    pub lambda_g: f64,
    pub c_g: f64,
}

impl GForm {
    /// G expressed through the scalar coordinates.
    pub fn g_scalar(&self, z: f64, r2: f64, u2: f64) -> f64 {
        self.q_bar[0] * z + self.q_bar[1] * r2 + self.q_bar[2] * u2
    }

    /// G from the raw difference vectors.
    pub fn g_pair(&self, dx: &[f64], p: &[f64]) -> f64 {
        assert_eq!(dx.len(), p.len());
        let mut total = 0.0;
        for row in &self.sigma_rows {
            let mut sq = 0.0;
            for (xi, pi) in dx.iter().zip(p.iter()) {
                let t = row[0] * xi + row[1] * pi;
                sq += t * t;
            }
            total += sq;
        }
        total
    }
}

/// Build the G-form for a friction/interaction pair. An exactly critical pair
/// (γ² = 4λ) is perturbed to λ(1−10⁻⁶) and flagged rather than rejected.
pub fn build_g(gamma: f64, lambda: f64) -> Result<GForm> {
    check_pair(gamma, lambda)?;
    let mut lambda = lambda;
    let critical_nudged = gamma * gamma == 4.0 * lambda;
    if critical_nudged {
        lambda *= 1.0 - 1e-6;
    }
    let disc = gamma * gamma - 4.0 * lambda;
    let (case_tag, q, lam, eigenvalues, gamma_bar, q_bar, sigma_rows) = if disc > 0.0 {
        let s = disc.sqrt();
        let q = [
            [-gamma, lambda, 1.0],
            [-gamma + s, (gamma * gamma - 2.0 * lambda - gamma * s) / 2.0, 1.0],
            [-gamma - s, (gamma * gamma - 2.0 * lambda + gamma * s) / 2.0, 1.0],
        ];
        let lam = [
            [-gamma, 0.0, 0.0],
            [0.0, -gamma + s, 0.0],
            [0.0, 0.0, -gamma - s],
        ];
        let eig = [(-gamma, 0.0), (-gamma + s, 0.0), (-gamma - s, 0.0)];
        // G = |((γ−s)/2)δX − P|² + |((γ+s)/2)δX − P|², the sum of the two
        // non-slow eigenrows of Q, giving q̄ = (0 1 1)·Q.
        let q_bar = [
            q[1][0] + q[2][0],
            q[1][1] + q[2][1],
            q[1][2] + q[2][2],
        ];
        let sigma = [[(gamma - s) / 2.0, -1.0], [(gamma + s) / 2.0, -1.0]];
        (DampingCase::Overdamped, q, lam, eig, gamma - s, q_bar, sigma)
    } else {
        let w = (-disc).sqrt();
        let q = [
            [-gamma, lambda, 1.0],
            [4.0 * lambda, -lambda * gamma, -gamma],
            [0.0, lambda * w, -w],
        ];
        let lam = [
            [-gamma, 0.0, 0.0],
            [0.0, -gamma, -w],
            [0.0, w, -gamma],
        ];
        let eig = [(-gamma, 0.0), (-gamma, w), (-gamma, -w)];
        // G = |(γ/2)δX − P|² + (λ − γ²/4)|δX|², i.e. q̄ = (1 0 0)·Q.
        let q_bar = [q[0][0], q[0][1], q[0][2]];
        let sigma = [[gamma / 2.0, -1.0], [(lambda - gamma * gamma / 4.0).sqrt(), 0.0]];
        (DampingCase::Underdamped, q, lam, eig, gamma, q_bar, sigma)
    };
    let q_bar_norm = (q_bar[0] * q_bar[0] + q_bar[1] * q_bar[1] + q_bar[2] * q_bar[2]).sqrt();
    // ΣᵀΣ is 2×2 symmetric; its extreme eigenvalues give the coercivity band.
    let (s11, s12, s22) = {
        let mut m = [0.0f64; 3];
        for row in &sigma_rows {
            m[0] += row[0] * row[0];
            m[1] += row[0] * row[1];
            m[2] += row[1] * row[1];
        }
        (m[0], m[1], m[2])
    };
    let mean = 0.5 * (s11 + s22);
    let dev = (0.25 * (s11 - s22) * (s11 - s22) + s12 * s12).sqrt();
    let lambda_g = mean - dev;
    let c_g = mean + dev;
    if !(lambda_g > 0.0) {
        return Err(Error::invalid("lambda_g", "G-form lost strict positivity"));
    }
    Ok(GForm {
        case_tag,
        critical_nudged,
        gamma,
        lambda,
        q,
        lam,
        eigenvalues,
        gamma_bar,
        q_bar,
        q_bar_norm,
        sigma_rows,
        lambda_g,
        c_g,
    })
}
