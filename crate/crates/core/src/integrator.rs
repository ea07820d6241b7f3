//! BBK time stepping for the N-particle underdamped mean-field system
//!
//!   dX = η_s·V dt,   dV = −(D_mF(m^X, X) + γV) dt + σ dW,
//!
//! plus the trajectory driver that records diagnostics along the way.

use crate::diagnostics::{self, DiagnosticsRow};
use crate::ensemble::{init_ensemble, wasserstein1_1d, InitSpec, ParticleEnsemble};
use crate::error::{Error, Result};
use crate::potentials::Potential;
use crate::rng::{stream_rng, tag};
use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

fn one() -> f64 {
    1.0
}

/// Coefficients of one Langevin run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsParams {
    pub gamma: f64,
    pub sigma: f64,
    /// Position-speed factor η_s multiplying V in dX = η_s·V dt; 1 recovers the
    /// plain kinetic system.
    #[serde(default = "one")]
    pub eta_speed: f64,
    pub dt: f64,
    pub steps: u64,
}

impl DynamicsParams {
    pub fn new(gamma: f64, sigma: f64, dt: f64, steps: u64) -> Result<Self> {
        let p = DynamicsParams {
            gamma,
            sigma,
            eta_speed: 1.0,
            dt,
            steps,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_eta(mut self, eta_speed: f64) -> Result<Self> {
        self.eta_speed = eta_speed;
        self.validate()?;
        Ok(self)
    }

    /// γ, σ ≥ 0 (zero turns damping/noise off for deterministic checks),
    /// dt, η_s > 0, and γ·dt < 2 so the implicit half-kick stays contractive.
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("gamma", self.gamma), ("sigma", self.sigma)] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::invalid(name, format!("{v} must be ≥ 0 and finite")));
            }
        }
        if !self.dt.is_finite() || self.dt <= 0.0 {
            return Err(Error::invalid("dt", format!("{} must be > 0", self.dt)));
        }
        if !self.eta_speed.is_finite() || self.eta_speed <= 0.0 {
            return Err(Error::invalid(
                "eta_speed",
                format!("{} must be > 0", self.eta_speed),
            ));
        }
        if self.gamma * self.dt >= 2.0 {
            return Err(Error::invalid(
                "dt",
                format!("gamma·dt = {} must be < 2", self.gamma * self.dt),
            ));
        }
        Ok(())
    }
}

/// One BBK step, in place. Per particle with b = −D_mF(m^X, x):
///
///   v* = v + (dt/2)(b − γv) + (σ/√2)√dt·ξ₁
///   x′ = x + dt·η_s·v*
///   v′ = (v* + (dt/2)b′ + (σ/√2)√dt·ξ₂) / (1 + γdt/2)
///
/// where b′ is re-evaluated against the empirical law of the moved cloud, and
/// ξ₁, ξ₂ are independent standard normals drawn from the per-particle stream
/// for (`seed`, `step`), so results are independent of traversal order.
pub fn bbk_step(
    e: &mut ParticleEnsemble,
    potential: &Potential,
    params: &DynamicsParams,
    seed: u64,
    step: u64,
) -> Result<()> {
    let (count, dim) = e.positions.dim();
    let half_dt = 0.5 * params.dt;
    let noise = params.sigma / std::f64::consts::SQRT_2 * params.dt.sqrt();
    let denom = 1.0 + 0.5 * params.gamma * params.dt;

    let drift = potential.intrinsic_derivative(e.positions.view());
    // σ = 0 draws nothing, keeping deterministic runs free of RNG state.
    let mut xi2 = if params.sigma > 0.0 {
        Some(Array2::<f64>::zeros((count, dim)))
    } else {
        None
    };
    for i in 0..count {
        let mut rng = (params.sigma > 0.0).then(|| stream_rng(seed, tag::BBK, &[step, i as u64]));
        for j in 0..dim {
            let b = -drift[[i, j]];
            let v = e.velocities[[i, j]];
            let mut vstar = v + half_dt * (b - params.gamma * v);
            if let Some(rng) = rng.as_mut() {
                let z1: f64 = rng.sample(StandardNormal);
                let z2: f64 = rng.sample(StandardNormal);
                vstar += noise * z1;
                xi2.as_mut().unwrap()[[i, j]] = z2;
            }
            e.velocities[[i, j]] = vstar;
            e.positions[[i, j]] += params.dt * params.eta_speed * vstar;
        }
    }

    let drift2 = potential.intrinsic_derivative(e.positions.view());
    for i in 0..count {
        for j in 0..dim {
            let b2 = -drift2[[i, j]];
            let mut v = e.velocities[[i, j]] + half_dt * b2;
            if let Some(xi2) = &xi2 {
                v += noise * xi2[[i, j]];
            }
            e.velocities[[i, j]] = v / denom;
        }
    }
    e.check_finite(step)
}

/// Reference law for the optional W₁ diagnostic column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ReferenceSpec {
    /// Stationary position marginal N(0, σ²/(2γλ)) per coordinate of the
    /// quadratic-confinement dynamics, sampled once per run.
    GibbsPositions { lambda: f64, samples: usize },
}

fn default_record_every() -> u64 {
    1
}

fn default_knn_k() -> usize {
    4
}

fn default_bootstrap() -> usize {
    200
}

/// Everything one trajectory needs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub init: InitSpec,
    pub potential: Potential,
    pub params: DynamicsParams,
    pub count: usize,
    pub dim: usize,
    /// Seed for the dynamics noise (initial draws use `init.seed`).
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_record_every")]
    pub record_every: u64,
    #[serde(default = "default_knn_k")]
    pub knn_k: usize,
    #[serde(default = "default_bootstrap")]
    pub bootstrap_resamples: usize,
    #[serde(default)]
    pub reference: Option<ReferenceSpec>,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.potential.validate()?;
        if self.record_every == 0 {
            return Err(Error::invalid("record_every", "must be ≥ 1"));
        }
        if self.knn_k == 0 {
            return Err(Error::invalid("knn_k", "must be ≥ 1"));
        }
        if let Some(required) = self.potential.dim_constraint() {
            if self.dim != required {
                return Err(Error::invalid(
                    "dim",
                    format!("potential requires dim {required}, got {}", self.dim),
                ));
            }
        }
        if let Some(ReferenceSpec::GibbsPositions { lambda, samples }) = &self.reference {
            if !(*lambda > 0.0) {
                return Err(Error::invalid("reference.lambda", format!("{lambda} must be > 0")));
            }
            if *samples == 0 {
                return Err(Error::invalid("reference.samples", "must be ≥ 1"));
            }
            if !(self.params.sigma > 0.0 && self.params.gamma > 0.0) {
                return Err(Error::invalid(
                    "reference",
                    "Gibbs reference needs σ > 0 and γ > 0",
                ));
            }
        }
        Ok(())
    }
}

/// Recorded rows plus the terminal state of a run.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub rows: Vec<DiagnosticsRow>,
    pub final_ensemble: ParticleEnsemble,
}

fn reference_positions(cfg: &SimConfig) -> Result<Option<Vec<f64>>> {
    let Some(ReferenceSpec::GibbsPositions { lambda, samples }) = &cfg.reference else {
        return Ok(None);
    };
    let sd = (cfg.params.sigma.powi(2) / (2.0 * cfg.params.gamma * lambda)).sqrt();
    let mut rng = stream_rng(cfg.seed, tag::REFERENCE, &[]);
    let draws = (0..samples * cfg.dim)
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            sd * z
        })
        .collect();
    Ok(Some(draws))
}

fn record_row(
    cfg: &SimConfig,
    e: &ParticleEnsemble,
    t: f64,
    reference: &Option<Vec<f64>>,
) -> Result<DiagnosticsRow> {
    let mut row = diagnostics::free_energy(
        e,
        &cfg.potential,
        cfg.params.gamma,
        cfg.params.sigma,
        cfg.knn_k,
        cfg.bootstrap_resamples,
    )?;
    row.t = t;
    if let Some(ref_samples) = reference {
        // All coordinates share the reference marginal; pool them.
        let pos: Vec<f64> = e.positions.iter().copied().collect();
        row.w1_ref = Some(wasserstein1_1d(&pos, ref_samples)?);
    }
    Ok(row)
}

/// Runs the dynamics, recording a diagnostics row at t = 0 and after every
/// `record_every`-th step. Same config and seed → identical output.
pub fn simulate(cfg: &SimConfig) -> Result<Trajectory> {
    cfg.validate()?;
    let mut e = init_ensemble(&cfg.init, cfg.count, cfg.dim)?;
    let reference = reference_positions(cfg)?;
    let mut rows = vec![record_row(cfg, &e, 0.0, &reference)?];
    for step in 0..cfg.params.steps {
        bbk_step(&mut e, &cfg.potential, &cfg.params, cfg.seed, step)?;
        if (step + 1) % cfg.record_every == 0 {
            let t = (step + 1) as f64 * cfg.params.dt;
            rows.push(record_row(cfg, &e, t, &reference)?);
        }
    }
    Ok(Trajectory {
        rows,
        final_ensemble: e,
    })
}
