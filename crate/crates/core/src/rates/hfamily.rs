//! The concave distance-transform family
//!
//!   φ(s) = exp(−a s²),      a = θ/(4η²σ²),
//!   Φ(s) = ∫₀ˢ φ,           I(s) = ∫₀ˢ Φ/φ,
//!   g(s) = 1 − I(s)/(2 I(2M)),
//!   h(ℓ) = ∫₀^{ℓ∧2M} φ g,
//!
//! which satisfies the differential identity θℓh′ + 2η²σ²h″ = −κ̄ Φ(ℓ) with
//! κ̄ = η²σ²/I(2M), the engine behind the contraction estimate. At realistic
//! ladder parameters a(2M)² sits in the 10⁹–10¹² range, so the family runs in
//! one of two modes: a tabulated quadrature mode when a(2M)² ≤ 500, and an
//! asymptotic log-domain mode beyond, where h collapses to Φ up to relative
//! error below e⁻³⁰⁰ and only ratios of I values remain meaningful.

use crate::error::{Error, Result};
use crate::logdomain::LogPos;
use statrs::function::erf::erf;

const EXTREME_THRESHOLD: f64 = 500.0;
/// Below this value of a·s² the large-s expansion of I is not trusted.
const SERIES_MIN: f64 = 60.0;
const TABLE_INTERVALS: usize = 8192;

/// Cubic-Hermite table on [0, 2M] for one cumulative integral.
#[derive(Debug, Clone)]
struct HermiteTable {
    delta: f64,
    vals: Vec<f64>,
    derivs: Vec<f64>,
}

impl HermiteTable {
    fn eval(&self, x: f64) -> f64 {
        let n = self.vals.len() - 1;
        let k = ((x / self.delta) as usize).min(n - 1);
        let t = (x - k as f64 * self.delta) / self.delta;
        let (v0, v1) = (self.vals[k], self.vals[k + 1]);
        let (d0, d1) = (self.derivs[k], self.derivs[k + 1]);
        let t2 = t * t;
        let t3 = t2 * t;
        v0 * (2.0 * t3 - 3.0 * t2 + 1.0)
            + d0 * self.delta * (t3 - 2.0 * t2 + t)
            + v1 * (-2.0 * t3 + 3.0 * t2)
            + d1 * self.delta * (t3 - t2)
    }
}

#[derive(Debug, Clone)]
struct BenignTables {
    i: HermiteTable,
    h: HermiteTable,
    i_2m: f64,
}

/// Evaluator for φ, Φ, I, g, h and the derived constants φ_min and κ̄.
#[derive(Debug, Clone)]
pub struct HFamily {
    pub eta: f64,
    pub sigma: f64,
    pub theta: f64,
    pub m_radius: f64,
    /// Gaussian sharpness a = θ/(4η²σ²).
    pub a: f64,
    /// Φ(∞) = √(π/a)/2.
    pub cap_phi_inf: f64,
    pub ln_i_2m: f64,
    /// κ̄ = η²σ²/I(2M).
    pub kappa_bar: LogPos,
    /// φ(2M) = exp(−a(2M)²).
    pub phi_min: LogPos,
    pub h_2m: f64,
    extreme: bool,
    tables: Option<BenignTables>,
}

/// Build the family for sharpness a = θ/(4η²σ²) on the ball of radius M.
pub fn h_family(eta: f64, sigma: f64, theta: f64, m_radius: f64) -> Result<HFamily> {
    for (name, v) in [
        ("eta", eta),
        ("sigma", sigma),
        ("theta", theta),
        ("m_radius", m_radius),
    ] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::invalid(name, "must be positive and finite"));
        }
    }
    let a = theta / (4.0 * eta * eta * sigma * sigma);
    let cap_phi_inf = 0.5 * (std::f64::consts::PI / a).sqrt();
    if !a.is_finite() || !cap_phi_inf.is_finite() || cap_phi_inf == 0.0 {
        return Err(Error::invalid("theta/eta/sigma", "sharpness a leaves f64 range"));
    }
    let two_m = 2.0 * m_radius;
    let extreme = a * two_m * two_m > EXTREME_THRESHOLD;
    let ln_eta2_sigma2 = 2.0 * (eta.ln() + sigma.ln());
    let phi_min = LogPos::from_ln(-a * two_m * two_m);

    if extreme {
        let ln_i_2m = ln_i_asymptotic(a, two_m);
        let h_2m = cap_phi_closed(a, two_m);
        return Ok(HFamily {
            eta,
            sigma,
            theta,
            m_radius,
            a,
            cap_phi_inf,
            ln_i_2m,
            kappa_bar: LogPos::from_ln(ln_eta2_sigma2 - ln_i_2m),
            phi_min,
            h_2m,
            extreme: true,
            tables: None,
        });
    }

    // Benign mode: tabulate I and h by per-interval Simpson with midpoint
    // refinement; node derivatives (Φ/φ and φg) are exact, so the cubic
    // Hermite interpolants keep full quadrature accuracy between nodes.
    let k = TABLE_INTERVALS;
    let delta = two_m / k as f64;
    let ratio = |s: f64| cap_phi_closed(a, s) * (a * s * s).exp();
    let mut i_vals = vec![0.0; k + 1];
    let mut i_derivs = vec![0.0; k + 1];
    i_derivs[0] = ratio(0.0);
    for j in 0..k {
        let s0 = j as f64 * delta;
        let s1 = s0 + delta;
        let rm = ratio(s0 + 0.5 * delta);
        i_derivs[j + 1] = ratio(s1);
        i_vals[j + 1] = i_vals[j] + delta / 6.0 * (i_derivs[j] + 4.0 * rm + i_derivs[j + 1]);
    }
    let i_2m = i_vals[k];
    if !(i_2m > 0.0) || !i_2m.is_finite() {
        return Err(Error::invalid("m_radius", "I(2M) quadrature left f64 range"));
    }
    let i_table = HermiteTable {
        delta,
        vals: i_vals.clone(),
        derivs: i_derivs.clone(),
    };
    let g_of = |i_s: f64| 1.0 - i_s / (2.0 * i_2m);
    let mut h_vals = vec![0.0; k + 1];
    let mut h_derivs = vec![0.0; k + 1];
    h_derivs[0] = 1.0;
    for j in 0..k {
        let s0 = j as f64 * delta;
        let s1 = s0 + delta;
        let sm = s0 + 0.5 * delta;
        let fm = (-a * sm * sm).exp() * g_of(i_table.eval(sm));
        h_derivs[j + 1] = (-a * s1 * s1).exp() * g_of(i_vals[j + 1]);
        h_vals[j + 1] = h_vals[j] + delta / 6.0 * (h_derivs[j] + 4.0 * fm + h_derivs[j + 1]);
    }
    let h_2m = h_vals[k];
    let h_table = HermiteTable {
        delta,
        vals: h_vals,
        derivs: h_derivs,
    };
    let ln_i_2m = i_2m.ln();
    Ok(HFamily {
        eta,
        sigma,
        theta,
        m_radius,
        a,
        cap_phi_inf,
        ln_i_2m,
        kappa_bar: LogPos::from_ln(ln_eta2_sigma2 - ln_i_2m),
        phi_min,
        h_2m,
        extreme: false,
        tables: Some(BenignTables {
            i: i_table,
            h: h_table,
            i_2m,
        }),
    })
}

fn cap_phi_closed(a: f64, s: f64) -> f64 {
    0.5 * (std::f64::consts::PI / a).sqrt() * erf(a.sqrt() * s)
}

/// ln I(s) for a·s² ≫ 1 via the Laplace expansion
/// I(s) ≈ Φ(∞) e^{as²}/(2as) · Σ_{k≤5} (2k−1)!!/(2as²)^k.
pub(crate) fn ln_i_asymptotic(a: f64, s: f64) -> f64 {
    let x = a * s * s;
    debug_assert!(x >= SERIES_MIN - 1e-9);
    let inv = 1.0 / (2.0 * x);
    let mut series = 0.0;
    for coeff in [945.0, 105.0, 15.0, 3.0, 1.0] {
        series = (series + coeff) * inv;
    }
    series += 1.0;
    x - (2.0 * a * s).ln() + (0.5 * (std::f64::consts::PI / a).sqrt()).ln() + series.ln()
}

/// Adaptive-Simpson value of I(s) = ∫₀ˢ Φ/φ, usable while a·s² ≤ ~700.
pub(crate) fn i_quadrature(a: f64, s: f64) -> f64 {
    let f = |t: f64| cap_phi_closed(a, t) * (a * t * t).exp();
    adaptive_simpson(&f, 0.0, s, 1e-12, 40)
}

fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, rel_tol: f64, depth: u32) -> f64 {
    fn simpson(f: &impl Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
    }
    fn recurse(
        f: &impl Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        m: f64,
        fm: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (lm, flm, left) = simpson(f, a, fa, m, fm);
        let (rm, frm, right) = simpson(f, m, fm, b, fb);
        let err = left + right - whole;
        // Relative-to-local acceptance: tol stays fixed down the tree, so each
        // accepted piece is accurate relative to its own mass and the total
        // error is ≤ 15·tol·∫|f|. Halving tol per level would force runaway
        // subdivision on integrands with e^{as²}-scale dynamic range.
        if depth == 0 || err.abs() <= 15.0 * tol * (left.abs() + right.abs()).max(f64::MIN_POSITIVE) {
            return left + right + err / 15.0;
        }
        recurse(f, a, fa, m, fm, lm, flm, left, tol, depth - 1)
            + recurse(f, m, fm, b, fb, rm, frm, right, tol, depth - 1)
    }
    let (fa, fb) = (f(a), f(b));
    let (m, fm, whole) = simpson(f, a, fa, b, fb);
    recurse(f, a, fa, b, fb, m, fm, whole, rel_tol, depth)
}

impl HFamily {
    pub fn is_extreme(&self) -> bool {
        self.extreme
    }

    pub fn phi(&self, s: f64) -> f64 {
        (-self.a * s * s).exp()
    }

    pub fn ln_phi(&self, s: f64) -> f64 {
        -self.a * s * s
    }

    pub fn cap_phi(&self, s: f64) -> f64 {
        cap_phi_closed(self.a, s)
    }

    /// ln I(s) for s ∈ (0, 2M].
    pub fn ln_i(&self, s: f64) -> f64 {
        assert!(s > 0.0, "I is evaluated at positive arguments");
        let s = s.min(2.0 * self.m_radius);
        if let Some(t) = &self.tables {
            return t.i.eval(s).max(f64::MIN_POSITIVE).ln();
        }
        if self.a * s * s >= SERIES_MIN {
            ln_i_asymptotic(self.a, s)
        } else {
            i_quadrature(self.a, s).max(f64::MIN_POSITIVE).ln()
        }
    }

    /// g(s) = 1 − I(s)/(2 I(2M)), clamped to its value 1/2 past 2M.
    pub fn g(&self, s: f64) -> f64 {
        assert!(s >= 0.0);
        let s = s.min(2.0 * self.m_radius);
        if s == 0.0 {
            return 1.0;
        }
        if let Some(t) = &self.tables {
            return 1.0 - t.i.eval(s) / (2.0 * t.i_2m);
        }
        // In extreme mode I(s)/I(2M) underflows to an exact f64 zero well
        // before the asymptotic expansion loses validity.
        let gap = self.a * (2.0 * self.m_radius) * (2.0 * self.m_radius) - self.a * s * s;
        if gap > 80.0 {
            return 1.0;
        }
        1.0 - 0.5 * (ln_i_asymptotic(self.a, s) - self.ln_i_2m).exp()
    }

    /// h(ℓ) = ∫₀^{ℓ∧2M} φg; constant at h(2M) beyond the cutoff.
    pub fn h(&self, l: f64) -> f64 {
        assert!(l >= 0.0, "h takes nonnegative separation");
        let two_m = 2.0 * self.m_radius;
        if l >= two_m {
            return self.h_2m;
        }
        match &self.tables {
            Some(t) => t.h.eval(l),
            // Extreme mode: g deviates from 1 only where φ has already
            // underflowed, so h = Φ to relative error below e⁻³⁰⁰.
            None => self.cap_phi(l),
        }
    }

    /// h′(ℓ) = φ(ℓ)g(ℓ) on [0, 2M], zero beyond.
    pub fn h_prime(&self, l: f64) -> LogPos {
        assert!(l >= 0.0);
        let two_m = 2.0 * self.m_radius;
        if l > two_m {
            return LogPos::zero();
        }
        if self.tables.is_some() {
            return LogPos::from_value(self.phi(l) * self.g(l));
        }
        let g = self.g(l);
        if g <= 0.0 {
            return LogPos::zero();
        }
        LogPos::from_ln(self.ln_phi(l) + g.ln())
    }

    /// h″(ℓ) = −2aℓ φ(ℓ)g(ℓ) − Φ(ℓ)/(2 I(2M)) on (0, 2M); in extreme mode
    /// both terms underflow and the returned f64 is an honest zero.
    pub fn h_second(&self, l: f64) -> f64 {
        assert!(l >= 0.0);
        let two_m = 2.0 * self.m_radius;
        if l > two_m {
            return 0.0;
        }
        let hp = self.h_prime(l).value();
        -2.0 * self.a * l * hp - self.cap_phi(l) * 0.5 * (-self.ln_i_2m).exp()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Deliberately different quadrature from the library path: plain
    /// fixed-panel composite Simpson.
    fn simpson_fixed(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
        let dx = (b - a) / panels as f64;
        let mut total = 0.0;
        for j in 0..panels {
            let x0 = a + j as f64 * dx;
            total += dx / 6.0 * (f(x0) + 4.0 * f(x0 + 0.5 * dx) + f(x0 + dx));
        }
        total
    }

    fn benign() -> HFamily {
        // a = θ/(4η²σ²) = 4, so a(2M)² = 16: comfortably inside f64.
        h_family(0.5, 1.0, 4.0, 1.0).unwrap()
    }

    #[test]
    fn benign_endpoint_values() {
        let h = benign();
        assert!(!h.is_extreme());
        assert_relative_eq!(h.a, 4.0, max_relative = 1e-15);
        assert_eq!(h.h(0.0), 0.0);
        assert_relative_eq!(h.h_prime(0.0).value(), 1.0, max_relative = 1e-14);
        // h′(2M) = φ_min/2 exactly: g(2M) = 1/2 by construction.
        assert_relative_eq!(
            h.h_prime(2.0).ln_value(),
            h.phi_min.ln_value() + 0.5f64.ln(),
            max_relative = 1e-12
        );
        assert_eq!(h.h(2.0), h.h_2m);
        assert_eq!(h.h(5.0), h.h_2m);
        assert!(h.h_prime(2.0 + 1e-12).is_zero());
        assert_eq!(h.h_second(3.0), 0.0);
        assert_relative_eq!(h.g(0.0), 1.0);
        assert_relative_eq!(h.g(2.0), 0.5, max_relative = 1e-12);
    }

    #[test]
    fn h_is_pinched_between_half_cap_phi_and_cap_phi() {
        let h = benign();
        for j in 1..=200 {
            let l = 2.0 * j as f64 / 200.0;
            let hv = h.h(l);
            assert!(hv <= l, "h(ℓ) ≤ ℓ fails at {l}");
            assert!(hv <= h.cap_phi(l) * (1.0 + 1e-12), "h ≤ Φ fails at {l}");
            assert!(
                hv >= 0.5 * h.cap_phi(l) * (1.0 - 1e-12),
                "h ≥ Φ/2 fails at {l}"
            );
        }
    }

    #[test]
    fn h_is_increasing_and_concave() {
        let h = benign();
        let grid: Vec<f64> = (0..=400).map(|j| 2.0 * j as f64 / 400.0).collect();
        let vals: Vec<f64> = grid.iter().map(|&l| h.h(l)).collect();
        for w in vals.windows(2) {
            assert!(w[1] > w[0]);
        }
        let mut prev_slope = f64::INFINITY;
        for w in vals.windows(2) {
            let slope = w[1] - w[0];
            assert!(slope <= prev_slope * (1.0 + 1e-9));
            prev_slope = slope;
        }
        for j in 1..400 {
            assert!(h.h_second(grid[j]) < 0.0);
        }
    }

    #[test]
    fn differential_identity_against_independent_quadrature() {
        let h = benign();
        let (eta, sigma, theta, a) = (h.eta, h.sigma, h.theta, h.a);
        // Oracle side built from scratch: Φ via erf, I via fixed Simpson.
        let cap = |s: f64| cap_phi_closed(a, s);
        let i_oracle_2m = simpson_fixed(|t| cap(t) * (a * t * t).exp(), 0.0, 2.0, 20000);
        let kappa_oracle = eta * eta * sigma * sigma / i_oracle_2m;
        assert_relative_eq!(
            kappa_oracle,
            h.kappa_bar.value(),
            max_relative = 1e-10
        );
        for j in 1..=100 {
            let l = 2.0 * j as f64 / 100.0 - 1e-9;
            let lhs = theta * l * h.h_prime(l).value() + 2.0 * eta * eta * sigma * sigma * h.h_second(l);
            let rhs = -kappa_oracle * cap(l);
            assert!(
                (lhs - rhs).abs() <= 1e-8 * rhs.abs(),
                "identity residual {} at ℓ={l}",
                (lhs - rhs).abs() / rhs.abs()
            );
        }
    }

    #[test]
    fn h_prime_matches_independent_g() {
        let h = benign();
        let a = h.a;
        for j in [5, 37, 80] {
            let s = 2.0 * j as f64 / 100.0;
            let i_s = simpson_fixed(
                |t| cap_phi_closed(a, t) * (a * t * t).exp(),
                0.0,
                s,
                8000,
            );
            let i_2m = simpson_fixed(
                |t| cap_phi_closed(a, t) * (a * t * t).exp(),
                0.0,
                2.0,
                8000,
            );
            let g_oracle = 1.0 - i_s / (2.0 * i_2m);
            assert_relative_eq!(h.g(s), g_oracle, max_relative = 1e-9);
            assert_relative_eq!(
                h.h_prime(s).value(),
                (-a * s * s).exp() * g_oracle,
                max_relative = 1e-9
            );
        }
    }

    #[test]
    fn asymptotic_and_quadrature_ln_i_agree_in_the_overlap() {
        for a in [15.0_f64, 40.0, 160.0] {
            for x in [60.0_f64, 90.0, 150.0, 300.0, 450.0, 600.0] {
                let s = (x / a).sqrt();
                let ln_quad = i_quadrature(a, s).ln();
                let ln_asym = ln_i_asymptotic(a, s);
                assert!(
                    (ln_quad - ln_asym).abs() < 1e-6,
                    "a={a} as²={x}: {ln_quad} vs {ln_asym}"
                );
            }
        }
    }

    #[test]
    fn extreme_mode_collapses_to_cap_phi() {
        // a = 10⁴/(4·10⁻⁸) = 2.5·10¹¹, a(2M)² = 10¹².
        let h = h_family(1e-4, 1.0, 1e4, 1.0).unwrap();
        assert!(h.is_extreme());
        assert_relative_eq!(h.phi_min.ln_value(), -1e12, max_relative = 1e-12);
        assert_relative_eq!(h.h_2m, h.cap_phi_inf, max_relative = 1e-12);
        assert_relative_eq!(h.h(0.5), h.cap_phi(0.5), max_relative = 1e-12);
        assert_eq!(h.g(0.5), 1.0);
        assert_relative_eq!(h.g(2.0), 0.5, max_relative = 1e-10);
        // h′(2M) = φ_min/2 survives in the log domain.
        assert_relative_eq!(
            h.h_prime(2.0).ln_value(),
            h.phi_min.ln_value() + 0.5f64.ln(),
            max_relative = 1e-12
        );
        assert!(h.h_prime(1.0).ln_value() < -2.4e11);
        assert_eq!(h.h_second(1.0), 0.0);
        // ln I(2M) is dominated by a(2M)² with polynomial corrections.
        let correction = h.ln_i_2m - 1e12;
        assert!(correction < 0.0 && correction > -60.0);
        assert_relative_eq!(
            h.kappa_bar.ln_value(),
            2.0 * (1e-4f64).ln() - h.ln_i_2m,
            max_relative = 1e-14
        );
    }

    #[test]
    fn small_argument_ln_i_in_extreme_mode_falls_back_to_quadrature() {
        let h = h_family(1e-2, 1.0, 1e2, 1.0).unwrap();
        assert!(h.is_extreme());
        // a = 2.5·10⁵: at s = 0.01, as² = 25 < series floor.
        let s = 0.01;
        let direct = i_quadrature(h.a, s).ln();
        assert_relative_eq!(h.ln_i(s), direct, max_relative = 1e-10);
    }

    #[test]
    fn rejects_degenerate_parameters() {
        assert!(h_family(0.0, 1.0, 1.0, 1.0).is_err());
        assert!(h_family(1.0, -1.0, 1.0, 1.0).is_err());
        assert!(h_family(1.0, 1.0, 0.0, 1.0).is_err());
        assert!(h_family(1.0, 1.0, 1.0, f64::NAN).is_err());
    }
}
