//! Reflection/synchronous coupling of two interacting ensembles.
//!
//! Two copies of the particle system run on a common probability space. Per
//! pair, the velocity noise is split into a reflected channel (weight rc,
//! mirrored across e^p = P/|P| with P = δV + γδX) and a synchronous channel
//! (weight √(1−rc²), shared); rc shuts off near coalescence and far outside
//! the confinement ball so the contraction function ψ = (1 + βG(δX,P))·h(ℓ),
//! ℓ = |δX| + η|P|, is a supermartingale up to the rate c. The module runs the
//! coupled dynamics (Euler–Maruyama; callers choose a dt well below the
//! single-run step), records ψ summaries, and fits the realized decay rate.

use crate::ensemble::{init_ensemble, InitSpec, ParticleEnsemble};
use crate::error::{Error, Result};
use crate::integrator::DynamicsParams;
use crate::logdomain::{LogPos, SignedLog};
use crate::potentials::Potential;
use crate::rates::RateConstants;
use crate::rng::{stream_rng, tag};
use crate::stats::linear_fit;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use std::io::Write;

/// Reflected-channel weight: clamp(u/ξ)·clamp((2M + ξ − (r + ηu))/ξ) ∈ [0, 1].
/// ξ = ∞ forces pure synchronous coupling; the explicit early return avoids
/// the (∞ − ℓ)/∞ = NaN hazard.
pub fn rc_weight(r: f64, u: f64, eta: f64, m_radius: f64, xi: f64) -> f64 {
    debug_assert!(r >= 0.0 && u >= 0.0 && xi > 0.0);
    if !xi.is_finite() {
        return 0.0;
    }
    let near = (u / xi).clamp(0.0, 1.0);
    let l = r + eta * u;
    let far = ((2.0 * m_radius + xi - l) / xi).clamp(0.0, 1.0);
    near * far
}

/// ψ(δX, δV) = (1 + βG(δX, P))·h(|δX| + η|P|), P = δV + γδX. At assembled
/// (non-synthetic) ladders β underflows f64 and ψ honestly reduces to h(ℓ).
pub fn psi_distance(dx: &[f64], dv: &[f64], constants: &RateConstants) -> f64 {
    assert_eq!(dx.len(), dv.len());
    let gamma = constants.inputs.gamma;
    let mut r2 = 0.0;
    let mut u2 = 0.0;
    let mut p = Vec::with_capacity(dx.len());
    for (&x, &v) in dx.iter().zip(dv.iter()) {
        let pi = v + gamma * x;
        r2 += x * x;
        u2 += pi * pi;
        p.push(pi);
    }
    let l = r2.sqrt() + constants.eta * u2.sqrt();
    let g = constants.gform.g_pair(dx, &p);
    let amp = (constants.beta * LogPos::from_value(g)).value();
    (1.0 + amp) * constants.h.h(l)
}

/// The two legs of the coupled system.
#[derive(Debug, Clone)]
pub struct CoupledPair {
    pub a: ParticleEnsemble,
    pub b: ParticleEnsemble,
}

impl CoupledPair {
    pub fn new(a: ParticleEnsemble, b: ParticleEnsemble) -> Result<Self> {
        if a.positions.dim() != b.positions.dim() {
            return Err(Error::ShapeMismatch(format!(
                "coupled legs differ: {:?} vs {:?}",
                a.positions.dim(),
                b.positions.dim()
            )));
        }
        Ok(CoupledPair { a, b })
    }
}

/// Coupling geometry: the ladder constants that decide the channel weights.
#[derive(Debug, Clone, Copy)]
pub struct CoupleGeometry {
    pub eta: f64,
    pub m_radius: f64,
    pub xi: f64,
}

/// One Euler–Maruyama step of both legs under the mixed coupling. Drifts come
/// from each leg's own empirical law (computed before any state moves); the
/// per-pair noise stream depends only on (seed, step, pair index), so runs
/// with different ξ share their randomness — common random numbers for free.
pub fn coupled_step(
    pair: &mut CoupledPair,
    potential: &Potential,
    params: &DynamicsParams,
    geom: &CoupleGeometry,
    seed: u64,
    step: u64,
) -> Result<()> {
    let (count, dim) = pair.a.positions.dim();
    let drift_a = potential.intrinsic_derivative(pair.a.positions.view());
    let drift_b = potential.intrinsic_derivative(pair.b.positions.view());
    let root_dt = params.dt.sqrt();
    let gamma = params.gamma;
    let mut epn = vec![0.0; dim];
    let mut noise_a = vec![0.0; dim];
    let mut noise_b = vec![0.0; dim];
    // One stream per step, consumed in pair order (2·dim draws each): the
    // draws a pair sees depend only on (seed, step, index), never on ξ, so
    // runs at different ξ share their noise.
    let mut rng = stream_rng(seed, tag::COUPLE, &[step]);
    for i in 0..count {
        if params.sigma > 0.0 {
            let mut r2 = 0.0;
            let mut u2 = 0.0;
            let mut z = 0.0;
            for j in 0..dim {
                let dx = pair.a.positions[[i, j]] - pair.b.positions[[i, j]];
                let dv = pair.a.velocities[[i, j]] - pair.b.velocities[[i, j]];
                let p = dv + gamma * dx;
                r2 += dx * dx;
                u2 += p * p;
                z += dx * p;
                epn[j] = p;
            }
            let (r, u) = (r2.sqrt(), u2.sqrt());
            debug_assert!(z.abs() <= r * u * (1.0 + 1e-12) + f64::MIN_POSITIVE);
            let rc = rc_weight(r, u, geom.eta, geom.m_radius, geom.xi);
            let sc = (1.0 - rc * rc).max(0.0).sqrt();
            if u > 0.0 {
                for e in epn.iter_mut() {
                    *e /= u;
                }
            } else {
                epn.fill(0.0);
            }
            let mut dot = 0.0;
            for (j, e) in epn.iter().enumerate() {
                let zr: f64 = rng.sample(StandardNormal);
                noise_a[j] = zr;
                dot += e * zr;
            }
            for j in 0..dim {
                let zs: f64 = rng.sample(StandardNormal);
                let zr = noise_a[j];
                noise_b[j] = rc * (zr - 2.0 * dot * epn[j]) + sc * zs;
                noise_a[j] = rc * zr + sc * zs;
            }
        } else {
            noise_a.fill(0.0);
            noise_b.fill(0.0);
        }
        for j in 0..dim {
            let va = pair.a.velocities[[i, j]];
            let vb = pair.b.velocities[[i, j]];
            pair.a.positions[[i, j]] += params.eta_speed * va * params.dt;
            pair.b.positions[[i, j]] += params.eta_speed * vb * params.dt;
            pair.a.velocities[[i, j]] = va
                + (-drift_a[[i, j]] - gamma * va) * params.dt
                + params.sigma * root_dt * noise_a[j];
            pair.b.velocities[[i, j]] = vb
                + (-drift_b[[i, j]] - gamma * vb) * params.dt
                + params.sigma * root_dt * noise_b[j];
        }
    }
    pair.a.check_finite(step)?;
    pair.b.check_finite(step)
}

/// Plain uncoupled Euler–Maruyama run with the same discretization as one
/// coupled leg, for marginal-law comparisons.
pub fn euler_run(
    init: &InitSpec,
    potential: &Potential,
    params: &DynamicsParams,
    count: usize,
    dim: usize,
    seed: u64,
) -> Result<ParticleEnsemble> {
    potential.validate()?;
    params.validate()?;
    let mut e = init_ensemble(init, count, dim)?;
    for step in 0..params.steps {
        let drift = potential.intrinsic_derivative(e.positions.view());
        let root_dt = params.dt.sqrt();
        for i in 0..count {
            let mut rng =
                (params.sigma > 0.0).then(|| stream_rng(seed, tag::EULER, &[step, i as u64]));
            for j in 0..dim {
                let v = e.velocities[[i, j]];
                e.positions[[i, j]] += params.eta_speed * v * params.dt;
                let mut vn = v + (-drift[[i, j]] - params.gamma * v) * params.dt;
                if let Some(rng) = rng.as_mut() {
                    let z: f64 = rng.sample(StandardNormal);
                    vn += params.sigma * root_dt * z;
                }
                e.velocities[[i, j]] = vn;
            }
        }
        e.check_finite(step)?;
    }
    Ok(e)
}

/// Configuration of one coupled contraction run.
#[derive(Debug, Clone)]
pub struct CoupleConfig {
    pub count: usize,
    pub dim: usize,
    pub potential: Potential,
    pub params: DynamicsParams,
    pub init_a: InitSpec,
    pub init_b: InitSpec,
    pub constants: RateConstants,
    /// Channel-switch width; ∞ forces pure synchronous coupling.
    pub xi: f64,
    pub record_every: u64,
    /// Recordings dropped from the front of the decay fit.
    pub burn_in_records: usize,
    pub seed: u64,
}

impl CoupleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::InsufficientInput("need at least one pair".into()));
        }
        if self.dim == 0 {
            return Err(Error::invalid("dim", "dimension must be at least 1"));
        }
        self.potential.validate()?;
        if matches!(self.potential, Potential::GanDiscriminator(_)) {
            return Err(Error::invalid(
                "potential",
                "coupling runs need a mean-field interaction variant",
            ));
        }
        if let Some(d) = self.potential.dim_constraint() {
            if d != self.dim {
                return Err(Error::invalid("dim", format!("potential requires dim {d}")));
            }
        }
        self.params.validate()?;
        if !(self.xi > 0.0) {
            return Err(Error::invalid("xi", "switch width must be positive (∞ allowed)"));
        }
        if self.record_every == 0 {
            return Err(Error::invalid("record_every", "must be at least 1"));
        }
        Ok(())
    }
}

/// One recorded summary of the coupled state.
#[derive(Debug, Clone, Serialize)]
pub struct CoupleRow {
    pub t: f64,
    pub mean_psi: f64,
    pub mean_r: f64,
    pub mean_u: f64,
    /// Mean reflected-channel weight across pairs.
    pub rc_fraction: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ContractionReport {
    pub rows: Vec<CoupleRow>,
    /// −slope of the linear fit to ln(mean ψ) after burn-in.
    pub fitted_rate: f64,
    pub slope_se: f64,
    /// The ladder rate the fit is compared against.
    pub c: SignedLog,
}

fn snapshot(pair: &CoupledPair, constants: &RateConstants, geom: &CoupleGeometry, t: f64) -> CoupleRow {
    let (count, dim) = pair.a.positions.dim();
    let gamma = constants.inputs.gamma;
    let mut sum_psi = 0.0;
    let mut sum_r = 0.0;
    let mut sum_u = 0.0;
    let mut sum_rc = 0.0;
    let mut dx = vec![0.0; dim];
    let mut dv = vec![0.0; dim];
    for i in 0..count {
        let mut r2 = 0.0;
        let mut u2 = 0.0;
        for j in 0..dim {
            dx[j] = pair.a.positions[[i, j]] - pair.b.positions[[i, j]];
            dv[j] = pair.a.velocities[[i, j]] - pair.b.velocities[[i, j]];
            let p = dv[j] + gamma * dx[j];
            r2 += dx[j] * dx[j];
            u2 += p * p;
        }
        let (r, u) = (r2.sqrt(), u2.sqrt());
        sum_psi += psi_distance(&dx, &dv, constants);
        sum_r += r;
        sum_u += u;
        sum_rc += rc_weight(r, u, geom.eta, geom.m_radius, geom.xi);
    }
    let n = count as f64;
    CoupleRow {
        t,
        mean_psi: sum_psi / n,
        mean_r: sum_r / n,
        mean_u: sum_u / n,
        rc_fraction: sum_rc / n,
    }
}

fn fit_decay(rows: &[CoupleRow], burn_in: usize) -> Result<(f64, f64)> {
    let mut ts = Vec::new();
    let mut ys = Vec::new();
    for row in rows.iter().skip(burn_in) {
        if row.mean_psi > 0.0 {
            ts.push(row.t);
            ys.push(row.mean_psi.ln());
        }
    }
    if ts.len() < 3 {
        return Err(Error::InsufficientInput(format!(
            "decay fit needs at least 3 recordings with positive mean ψ, got {}",
            ts.len()
        )));
    }
    let (slope, _, se) = linear_fit(&ts, &ys)?;
    Ok((-slope, se))
}

/// Run the coupled dynamics and fit the ψ decay rate.
pub fn contraction_experiment(cfg: &CoupleConfig) -> Result<ContractionReport> {
    cfg.validate()?;
    let mut pair = CoupledPair::new(
        init_ensemble(&cfg.init_a, cfg.count, cfg.dim)?,
        init_ensemble(&cfg.init_b, cfg.count, cfg.dim)?,
    )?;
    let geom = CoupleGeometry {
        eta: cfg.constants.eta,
        m_radius: cfg.constants.inputs.m_radius,
        xi: cfg.xi,
    };
    let mut rows = vec![snapshot(&pair, &cfg.constants, &geom, 0.0)];
    for step in 0..cfg.params.steps {
        coupled_step(&mut pair, &cfg.potential, &cfg.params, &geom, cfg.seed, step)?;
        if (step + 1) % cfg.record_every == 0 {
            rows.push(snapshot(
                &pair,
                &cfg.constants,
                &geom,
                (step + 1) as f64 * cfg.params.dt,
            ));
        }
    }
    let (fitted_rate, slope_se) = fit_decay(&rows, cfg.burn_in_records)?;
    Ok(ContractionReport {
        rows,
        fitted_rate,
        slope_se,
        c: cfg.constants.c,
    })
}

/// Fit one decay rate to the across-report average of mean ψ. All reports
/// must share their recording grid (same dt and record cadence).
pub fn fit_pooled(reports: &[ContractionReport], burn_in: usize) -> Result<(f64, f64)> {
    let first = reports
        .first()
        .ok_or_else(|| Error::InsufficientInput("no reports to pool".into()))?;
    let n = first.rows.len();
    let mut pooled = Vec::with_capacity(n);
    for k in 0..n {
        let t = first.rows[k].t;
        let mut acc = 0.0;
        for rep in reports {
            if rep.rows.len() != n || rep.rows[k].t != t {
                return Err(Error::ShapeMismatch(
                    "pooled reports must share the recording grid".into(),
                ));
            }
            acc += rep.rows[k].mean_psi;
        }
        pooled.push(CoupleRow {
            t,
            mean_psi: acc / reports.len() as f64,
            mean_r: 0.0,
            mean_u: 0.0,
            rc_fraction: 0.0,
        });
    }
    fit_decay(&pooled, burn_in)
}

/// Schema: `t,mean_psi,mean_r,mean_u,rc_fraction`.
pub fn write_couple_csv<W: Write>(out: &mut W, rows: &[CoupleRow]) -> Result<()> {
    writeln!(out, "t,mean_psi,mean_r,mean_u,rc_fraction")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.t, r.mean_psi, r.mean_r, r.mean_u, r.rc_fraction
        )?;
    }
    Ok(())
}
