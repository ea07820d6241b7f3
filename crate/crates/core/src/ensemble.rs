//! Particle ensembles: interacting-system state, seeded initialization,
//! empirical moments, a 1-D Wasserstein-1 distance, and CSV (de)serialization.
//!
//! An ensemble holds N particles in ℝⁿ with positions and velocities. All
//! statistics are taken against the empirical law of the cloud; nothing in this
//! crate ever sees a density.

use crate::error::{Error, Result};
use crate::rng::{stream_rng, tag};
use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};

/// Positions and velocities of N particles in ℝⁿ (rows are particles).
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    pub positions: Array2<f64>,
    pub velocities: Array2<f64>,
}

impl ParticleEnsemble {
    /// Builds an ensemble, validating matching shapes and finite entries.
    pub fn new(positions: Array2<f64>, velocities: Array2<f64>) -> Result<Self> {
        if positions.dim() != velocities.dim() {
            return Err(Error::ShapeMismatch(format!(
                "positions {:?} vs velocities {:?}",
                positions.dim(),
                velocities.dim()
            )));
        }
        let e = ParticleEnsemble {
            positions,
            velocities,
        };
        e.check_finite(0)?;
        Ok(e)
    }

    /// Number of particles.
    pub fn count(&self) -> usize {
        self.positions.nrows()
    }

    /// Spatial dimension n.
    pub fn dim(&self) -> usize {
        self.positions.ncols()
    }

    /// Errors if any entry is NaN or infinite; `step` is only used for context.
    pub fn check_finite(&self, step: u64) -> Result<()> {
        for (name, arr) in [("position", &self.positions), ("velocity", &self.velocities)] {
            if let Some(((i, j), v)) = arr.indexed_iter().find(|(_, v)| !v.is_finite()) {
                return Err(Error::NonFinite {
                    step,
                    context: format!("{name}[{i},{j}] = {v}"),
                });
            }
        }
        Ok(())
    }

    /// Writes the `x_0..x_{n-1},v_0..v_{n-1}` CSV schema with round-trippable floats.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        let n = self.dim();
        let header: Vec<String> = (0..n)
            .map(|j| format!("x_{j}"))
            .chain((0..n).map(|j| format!("v_{j}")))
            .collect();
        writeln!(out, "{}", header.join(","))?;
        for i in 0..self.count() {
            let row: Vec<String> = self
                .positions
                .row(i)
                .iter()
                .chain(self.velocities.row(i).iter())
                .map(|v| format!("{v}"))
                .collect();
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }

    /// Parses the schema written by [`write_csv`](Self::write_csv), restoring every
    /// float bit-exactly.
    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::CsvParse {
                line: 1,
                reason: "missing header".into(),
            })??;
        let cols: Vec<&str> = header.trim_end().split(',').collect();
        if cols.len() % 2 != 0 || cols.is_empty() {
            return Err(Error::CsvParse {
                line: 1,
                reason: format!("expected an even, positive column count, got {}", cols.len()),
            });
        }
        let n = cols.len() / 2;
        for j in 0..n {
            if cols[j] != format!("x_{j}") || cols[n + j] != format!("v_{j}") {
                return Err(Error::CsvParse {
                    line: 1,
                    reason: format!("unexpected header column `{}`", cols[j.min(n + j)]),
                });
            }
        }
        let mut xs: Vec<f64> = Vec::new();
        let mut vs: Vec<f64> = Vec::new();
        let mut rows = 0usize;
        for (k, line) in lines.enumerate() {
            let line = line?;
            let line = line.trim_end();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 2 * n {
                return Err(Error::CsvParse {
                    line: k + 2,
                    reason: format!("expected {} fields, got {}", 2 * n, fields.len()),
                });
            }
            for (c, f) in fields.iter().enumerate() {
                let v: f64 = f.parse().map_err(|_| Error::CsvParse {
                    line: k + 2,
                    reason: format!("bad float `{f}`"),
                })?;
                if c < n {
                    xs.push(v);
                } else {
                    vs.push(v);
                }
            }
            rows += 1;
        }
        let positions = Array2::from_shape_vec((rows, n), xs)
            .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
        let velocities = Array2::from_shape_vec((rows, n), vs)
            .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
        ParticleEnsemble::new(positions, velocities)
    }
}

/// One marginal of the initial law, broadcast over coordinates.
///
/// Parameter vectors may have length 1 (isotropic broadcast) or length n.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Marginal {
    PointMass { center: Vec<f64> },
    Gaussian { mean: Vec<f64>, variance: f64 },
    UniformBox { lower: Vec<f64>, upper: Vec<f64> },
}

impl Marginal {
    pub fn gaussian(mean: f64, variance: f64) -> Self {
        Marginal::Gaussian {
            mean: vec![mean],
            variance,
        }
    }

    pub fn point(center: f64) -> Self {
        Marginal::PointMass {
            center: vec![center],
        }
    }

    fn validate(&self, dim: usize, what: &'static str) -> Result<()> {
        let check_len = |v: &Vec<f64>| -> Result<()> {
            if v.len() != 1 && v.len() != dim {
                return Err(Error::invalid(
                    what,
                    format!("parameter vector length {} is neither 1 nor n={dim}", v.len()),
                ));
            }
            if let Some(bad) = v.iter().find(|x| !x.is_finite()) {
                return Err(Error::invalid(what, format!("non-finite parameter {bad}")));
            }
            Ok(())
        };
        match self {
            Marginal::PointMass { center } => check_len(center),
            Marginal::Gaussian { mean, variance } => {
                check_len(mean)?;
                if !variance.is_finite() || *variance < 0.0 {
                    return Err(Error::invalid(what, format!("variance {variance} < 0")));
                }
                Ok(())
            }
            Marginal::UniformBox { lower, upper } => {
                check_len(lower)?;
                check_len(upper)?;
                for j in 0..dim {
                    let (lo, hi) = (broadcast(lower, j), broadcast(upper, j));
                    if lo > hi {
                        return Err(Error::invalid(
                            what,
                            format!("box bounds unordered in coordinate {j}: [{lo}, {hi}]"),
                        ));
                    }
                }
                Ok(())
            }
        }
    }

    fn sample_into(&self, rng: &mut impl Rng, row: &mut [f64]) {
        match self {
            Marginal::PointMass { center } => {
                for (j, r) in row.iter_mut().enumerate() {
                    *r = broadcast(center, j);
                }
            }
            Marginal::Gaussian { mean, variance } => {
                let sd = variance.sqrt();
                for (j, r) in row.iter_mut().enumerate() {
                    let z: f64 = rng.sample(StandardNormal);
                    *r = broadcast(mean, j) + sd * z;
                }
            }
            Marginal::UniformBox { lower, upper } => {
                for (j, r) in row.iter_mut().enumerate() {
                    let (lo, hi) = (broadcast(lower, j), broadcast(upper, j));
                    *r = if lo == hi { lo } else { rng.random_range(lo..hi) };
                }
            }
        }
    }
}

fn broadcast(v: &[f64], j: usize) -> f64 {
    if v.len() == 1 {
        v[0]
    } else {
        v[j]
    }
}

/// Initial law for an ensemble: independent position and velocity marginals plus
/// the seed that pins every draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitSpec {
    pub position: Marginal,
    pub velocity: Marginal,
    #[serde(default)]
    pub seed: u64,
}

impl InitSpec {
    /// Isotropic Gaussians for both marginals.
    pub fn gaussian(pos_mean: f64, pos_var: f64, vel_mean: f64, vel_var: f64, seed: u64) -> Self {
        InitSpec {
            position: Marginal::gaussian(pos_mean, pos_var),
            velocity: Marginal::gaussian(vel_mean, vel_var),
            seed,
        }
    }
}

/// Draws an N-particle ensemble in ℝⁿ from `spec`.
///
/// Each particle owns its own stream, so enlarging the ensemble leaves the first
/// particles' draws untouched.
pub fn init_ensemble(spec: &InitSpec, count: usize, dim: usize) -> Result<ParticleEnsemble> {
    if count == 0 || dim == 0 {
        return Err(Error::invalid(
            "init_ensemble",
            format!("count={count}, dim={dim}: both must be positive"),
        ));
    }
    spec.position.validate(dim, "init position")?;
    spec.velocity.validate(dim, "init velocity")?;
    let mut positions = Array2::zeros((count, dim));
    let mut velocities = Array2::zeros((count, dim));
    for i in 0..count {
        let mut rng = stream_rng(spec.seed, tag::INIT, &[i as u64]);
        spec.position
            .sample_into(&mut rng, positions.row_mut(i).as_slice_mut().unwrap());
        spec.velocity
            .sample_into(&mut rng, velocities.row_mut(i).as_slice_mut().unwrap());
    }
    ParticleEnsemble::new(positions, velocities)
}

/// First and second empirical moments of an ensemble.
#[derive(Debug, Clone)]
pub struct Moments {
    pub mean_x: Array1<f64>,
    pub mean_v: Array1<f64>,
    /// Population covariance of positions (n×n).
    pub cov_x: Array2<f64>,
    /// Population covariance of velocities (n×n).
    pub cov_v: Array2<f64>,
    /// ½·mean |V|².
    pub kinetic: f64,
}

fn column_mean(a: &Array2<f64>) -> Array1<f64> {
    a.mean_axis(ndarray::Axis(0)).expect("non-empty ensemble")
}

fn covariance(a: &Array2<f64>, mu: &Array1<f64>) -> Array2<f64> {
    let (count, dim) = a.dim();
    let mut cov = Array2::zeros((dim, dim));
    for i in 0..count {
        let row = a.row(i);
        for p in 0..dim {
            let dp = row[p] - mu[p];
            for q in p..dim {
                cov[[p, q]] += dp * (row[q] - mu[q]);
            }
        }
    }
    cov /= count as f64;
    for p in 0..dim {
        for q in 0..p {
            cov[[p, q]] = cov[[q, p]];
        }
    }
    cov
}

/// Means, covariances, and kinetic energy of the empirical law.
pub fn empirical_moments(e: &ParticleEnsemble) -> Moments {
    let mean_x = column_mean(&e.positions);
    let mean_v = column_mean(&e.velocities);
    let cov_x = covariance(&e.positions, &mean_x);
    let cov_v = covariance(&e.velocities, &mean_v);
    let kinetic = 0.5 * e.velocities.iter().map(|v| v * v).sum::<f64>() / e.count() as f64;
    Moments {
        mean_x,
        mean_v,
        cov_x,
        cov_v,
        kinetic,
    }
}

pub(crate) fn norm(v: ArrayView1<f64>) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Wasserstein-1 distance between two 1-D empirical laws.
///
/// Equal sample counts use the exact sorted-sample matching; unequal counts fall
/// back to inverse-CDF quadrature on max(|a|,|b|) mid-point quantiles (the two
/// routes agree when the counts match). Inputs need not be pre-sorted.
pub fn wasserstein1_1d(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InsufficientInput("wasserstein1_1d: empty sample".into()));
    }
    if a.iter().chain(b).any(|x| !x.is_finite()) {
        return Err(Error::invalid("wasserstein1_1d", "non-finite sample".to_string()));
    }
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_by(f64::total_cmp);
    sb.sort_by(f64::total_cmp);
    if sa.len() == sb.len() {
        let n = sa.len() as f64;
        return Ok(sa.iter().zip(&sb).map(|(x, y)| (x - y).abs()).sum::<f64>() / n);
    }
    let m = sa.len().max(sb.len());
    let q = |s: &[f64], p: f64| -> f64 {
        let idx = ((p * s.len() as f64).floor() as usize).min(s.len() - 1);
        s[idx]
    };
    let mut acc = 0.0;
    for j in 0..m {
        let p = (j as f64 + 0.5) / m as f64;
        acc += (q(&sa, p) - q(&sb, p)).abs();
    }
    Ok(acc / m as f64)
}
