//! Free-energy diagnostics along particle trajectories.
//!
//! The recorded functional is 𝔉(m) = F(m^X) + ½𝔼|V|² + (σ²/(2γ))·H(m) with
//! H(m) = 𝔼[ln ρ_m] the *negative* differential entropy of the joint (X, V)
//! law, estimated from particles by a nearest-neighbor method.

use crate::ensemble::{empirical_moments, ParticleEnsemble};
use crate::error::{Error, Result};
use crate::knn::KdTree;
use crate::potentials::Potential;
use crate::rng::{stream_rng, tag};
use ndarray::{concatenate, Array2, ArrayView2, Axis};
use rand::Rng;
use statrs::function::gamma::{digamma, ln_gamma};
use std::io::{BufRead, Write};

/// One recorded diagnostics snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsRow {
    pub t: f64,
    /// F(m^X).
    pub potential: f64,
    /// ½·mean|V|².
    pub kinetic: f64,
    /// H(m) = 𝔼[ln ρ] on the joint (X, V) cloud (negative differential entropy).
    pub entropy: f64,
    /// potential + kinetic + (σ²/(2γ))·entropy, exactly, on the stored fields.
    pub free_energy: f64,
    /// Subsample-bootstrap standard error of `free_energy`; not part of the
    /// CSV schema (NaN after a CSV round trip).
    pub free_energy_se: f64,
    pub mean_x_norm: f64,
    /// trace(Cov X)/n.
    pub var_x: f64,
    /// trace(Cov V)/n.
    pub var_v: f64,
    /// max |corr(X_p, V_q)| over coordinate pairs.
    pub xv_corr: f64,
    pub w1_ref: Option<f64>,
}

/// ln of the d-ball volume constant π^{d/2}/Γ(d/2+1).
fn ln_unit_ball_volume(d: usize) -> f64 {
    let d = d as f64;
    0.5 * d * std::f64::consts::PI.ln() - ln_gamma(0.5 * d + 1.0)
}

/// Per-point pieces of the nearest-neighbor estimate: the additive constant and
/// each point's d·ln εᵢ contribution.
fn entropy_contributions(samples: ArrayView2<f64>, k: usize) -> Result<(f64, Vec<f64>)> {
    let (n, d) = samples.dim();
    if k < 1 {
        return Err(Error::invalid("k", "neighbor count must be ≥ 1"));
    }
    if n <= k {
        return Err(Error::InsufficientInput(format!(
            "entropy estimate needs more than k={k} samples, got {n}"
        )));
    }
    if d == 0 {
        return Err(Error::invalid("samples", "zero-dimensional cloud"));
    }
    // Deterministic sub-noise jitter separates duplicate points; its scale sits
    // ~10 decades below estimator noise, so it never shows in results.
    let mut jittered = samples.to_owned();
    let mut rng = stream_rng(0, tag::JITTER, &[n as u64, d as u64]);
    for j in 0..d {
        let scale = 1e-12 * (1.0 + samples.column(j).iter().fold(0.0f64, |m, v| m.max(v.abs())));
        for i in 0..n {
            jittered[[i, j]] += rng.random_range(-scale..scale);
        }
    }
    let tree = KdTree::build(jittered.view());
    let constant = digamma(n as f64) - digamma(k as f64) + ln_unit_ball_volume(d);
    let contributions: Vec<f64> = (0..n)
        .map(|i| d as f64 * tree.kth_neighbor_distance(i, k).ln())
        .collect();
    Ok((constant, contributions))
}

/// Nearest-neighbor estimate of H(m) = 𝔼[ln ρ] from samples (N×d).
///
/// Note the sign: this is the *negative* of the usual differential entropy, so
/// 10⁵ draws of N(0,1) give ≈ −1.419.
pub fn entropy_knn(samples: ArrayView2<f64>, k: usize) -> Result<f64> {
    let (constant, contributions) = entropy_contributions(samples, k)?;
    let n = contributions.len() as f64;
    Ok(-(constant + contributions.iter().sum::<f64>() / n))
}

fn max_cross_correlation(e: &ParticleEnsemble) -> f64 {
    let m = empirical_moments(e);
    let (count, dim) = e.positions.dim();
    let mut worst = 0.0f64;
    for p in 0..dim {
        for q in 0..dim {
            let mut cross = 0.0;
            for i in 0..count {
                cross += (e.positions[[i, p]] - m.mean_x[p]) * (e.velocities[[i, q]] - m.mean_v[q]);
            }
            cross /= count as f64;
            let denom = (m.cov_x[[p, p]] * m.cov_v[[q, q]]).sqrt();
            if denom > 0.0 {
                worst = worst.max((cross / denom).abs());
            }
        }
    }
    worst
}

/// Assembles a diagnostics row for one snapshot (t is left at 0 for the caller).
///
/// The entropy weight is σ²/(2γ), taken as exactly 0 when σ = 0; σ > 0 with
/// γ = 0 has no stationary normalization and is rejected. `bootstrap_resamples`
/// controls the standard-error estimate (0 skips it).
pub fn free_energy(
    e: &ParticleEnsemble,
    potential: &Potential,
    gamma: f64,
    sigma: f64,
    knn_k: usize,
    bootstrap_resamples: usize,
) -> Result<DiagnosticsRow> {
    let weight = if sigma == 0.0 {
        0.0
    } else if gamma > 0.0 {
        sigma * sigma / (2.0 * gamma)
    } else {
        return Err(Error::invalid(
            "gamma",
            "entropy weight σ²/(2γ) undefined for γ = 0 with σ > 0",
        ));
    };
    let count = e.count();
    let dim = e.dim();
    let joint = concatenate(Axis(1), &[e.positions.view(), e.velocities.view()])
        .expect("matching particle counts");
    let entropy = entropy_knn(joint.view(), knn_k)?;

    let kin: Vec<f64> = (0..count)
        .map(|i| 0.5 * e.velocities.row(i).iter().map(|v| v * v).sum::<f64>())
        .collect();
    let kinetic = kin.iter().sum::<f64>() / count as f64;
    let pot_value = potential.value(e.positions.view());
    let free = pot_value + kinetic + weight * entropy;

    let free_energy_se = if bootstrap_resamples > 0 {
        // m-out-of-n bootstrap: each resample re-runs the full estimator —
        // entropy included — on a without-replacement subsample, and √(m/n)
        // rescales the spread back to cloud size. Resampling frozen per-point
        // entropy contributions instead understates the row noise ~1.6×: the
        // leading per-point physics cancels inside 𝔉 at stationarity, and the
        // leftover k-NN distance noise is neighbor-correlated.
        let m = (count / 50).max(64).min(count / 2).max(knn_k + 2).min(count - 1);
        let mut rng = stream_rng(0, tag::BOOTSTRAP, &[count as u64, bootstrap_resamples as u64]);
        let mut sub_pos = Array2::zeros((m, dim));
        let mut sub_joint = Array2::zeros((m, 2 * dim));
        let mut resampled = Vec::with_capacity(bootstrap_resamples);
        for _ in 0..bootstrap_resamples {
            let picks = rand::seq::index::sample(&mut rng, count, m);
            let mut kin_b = 0.0;
            for (row, pick) in picks.iter().enumerate() {
                sub_pos.row_mut(row).assign(&e.positions.row(pick));
                sub_joint.row_mut(row).assign(&joint.row(pick));
                kin_b += kin[pick];
            }
            let pot_b = potential.value(sub_pos.view());
            let ent_b = if weight != 0.0 {
                entropy_knn(sub_joint.view(), knn_k)?
            } else {
                0.0
            };
            resampled.push(pot_b + kin_b / m as f64 + weight * ent_b);
        }
        let mean = crate::stats::mean(&resampled);
        let var = resampled.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
            / (resampled.len() - 1).max(1) as f64;
        (var * m as f64 / count as f64).sqrt()
    } else {
        0.0
    };

    let m = empirical_moments(e);
    let var_x = (0..dim).map(|j| m.cov_x[[j, j]]).sum::<f64>() / dim as f64;
    let var_v = (0..dim).map(|j| m.cov_v[[j, j]]).sum::<f64>() / dim as f64;
    Ok(DiagnosticsRow {
        t: 0.0,
        potential: pot_value,
        kinetic,
        entropy,
        free_energy: free,
        free_energy_se,
        mean_x_norm: crate::ensemble::norm(m.mean_x.view()),
        var_x,
        var_v,
        xv_corr: max_cross_correlation(e),
        w1_ref: None,
    })
}

/// Output of [`lyapunov_monotonicity`].
#[derive(Debug, Clone, PartialEq)]
pub struct MonotonicityReport {
    /// Consecutive recorded pairs examined.
    pub checked: usize,
    /// Pairs where 𝔉 rose by more than multiplier × pairwise noise.
    pub violations: usize,
    /// Largest uphill move in units of the pairwise noise (−∞ if every move
    /// was downhill with zero noise).
    pub max_uphill_sigma: f64,
}

/// Counts uphill moves of the recorded free energy beyond
/// `multiplier × √(se_i² + se_{i+1}²)`, ignoring the first `burn_in` rows.
pub fn lyapunov_monotonicity(
    rows: &[DiagnosticsRow],
    burn_in: usize,
    multiplier: f64,
) -> Result<MonotonicityReport> {
    let tail = rows.get(burn_in..).unwrap_or(&[]);
    if tail.len() < 2 {
        return Err(Error::InsufficientInput(format!(
            "need ≥ 2 rows after burn_in={burn_in}, have {}",
            tail.len()
        )));
    }
    let mut violations = 0;
    let mut max_sigma = f64::NEG_INFINITY;
    for w in tail.windows(2) {
        let uphill = w[1].free_energy - w[0].free_energy;
        let noise = (w[0].free_energy_se.powi(2) + w[1].free_energy_se.powi(2)).sqrt();
        let sigma = if noise > 0.0 {
            uphill / noise
        } else if uphill > 0.0 {
            f64::INFINITY
        } else {
            f64::NEG_INFINITY
        };
        max_sigma = max_sigma.max(sigma);
        if uphill > multiplier * noise {
            violations += 1;
        }
    }
    Ok(MonotonicityReport {
        checked: tail.len() - 1,
        violations,
        max_uphill_sigma: max_sigma,
    })
}

/// Early-vs-late averages of the dissipation rate −Δ𝔉/Δt.
#[derive(Debug, Clone, PartialEq)]
pub struct DecrementTrend {
    /// Mean decrement over the first quarter of recorded pairs.
    pub early_mean: f64,
    /// Mean decrement over the last quarter.
    pub late_mean: f64,
}

/// As a run approaches stationarity the dissipation rate decays, so
/// `late_mean − early_mean ≤ 0` is the expected signature.
pub fn decrement_trend(rows: &[DiagnosticsRow], burn_in: usize) -> Result<DecrementTrend> {
    let tail = rows.get(burn_in..).unwrap_or(&[]);
    if tail.len() < 8 {
        return Err(Error::InsufficientInput(format!(
            "need ≥ 8 rows after burn_in={burn_in} for quartile means, have {}",
            tail.len()
        )));
    }
    let decrements: Vec<f64> = tail
        .windows(2)
        .map(|w| -(w[1].free_energy - w[0].free_energy) / (w[1].t - w[0].t))
        .collect();
    let q = (decrements.len() / 4).max(1);
    let early_mean = crate::stats::mean(&decrements[..q]);
    let late_mean = crate::stats::mean(&decrements[decrements.len() - q..]);
    Ok(DecrementTrend {
        early_mean,
        late_mean,
    })
}

/// Residuals of the stationary-law factorization.
#[derive(Debug, Clone, PartialEq)]
pub struct StationarityReport {
    /// max |Cov(V) − σ²/(2γ)·I| entrywise.
    pub velocity_cov_residual: f64,
    /// max |corr(X_p, V_q)|; independence predicts ≈ 0.
    pub max_xv_correlation: f64,
    /// For quadratic confinement: max |Cov(X) − σ²/(2γλ)·I|.
    pub position_cov_residual: Option<f64>,
}

/// Checks the product-Gaussian structure of the stationary law: V ⫫ X with
/// Cov(V) = σ²/(2γ)·I, and for quadratic confinement Cov(X) = σ²/(2γλ)·I.
pub fn stationarity_check(
    e: &ParticleEnsemble,
    potential: &Potential,
    gamma: f64,
    sigma: f64,
) -> Result<StationarityReport> {
    if !(gamma > 0.0) {
        return Err(Error::invalid("gamma", "must be > 0"));
    }
    let m = empirical_moments(e);
    let dim = e.dim();
    let target_v = sigma * sigma / (2.0 * gamma);
    let residual = |cov: &Array2<f64>, target: f64| -> f64 {
        let mut worst = 0.0f64;
        for p in 0..dim {
            for q in 0..dim {
                let want = if p == q { target } else { 0.0 };
                worst = worst.max((cov[[p, q]] - want).abs());
            }
        }
        worst
    };
    let position_cov_residual = match potential {
        Potential::QuadraticConfinement { lambda } => {
            Some(residual(&m.cov_x, sigma * sigma / (2.0 * gamma * lambda)))
        }
        _ => None,
    };
    Ok(StationarityReport {
        velocity_cov_residual: residual(&m.cov_v, target_v),
        max_xv_correlation: max_cross_correlation(e),
        position_cov_residual,
    })
}

const CSV_HEADER: &str = "t,potential,kinetic,entropy,free_energy,mean_x_norm,var_x,var_v,xv_corr,w1_ref";

/// Writes the `t,potential,…,w1_ref` trajectory schema (w1_ref empty when
/// unset). Floats are round-trippable.
pub fn write_diagnostics_csv<W: Write>(rows: &[DiagnosticsRow], out: &mut W) -> Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in rows {
        let w1 = r.w1_ref.map(|v| format!("{v}")).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.t,
            r.potential,
            r.kinetic,
            r.entropy,
            r.free_energy,
            r.mean_x_norm,
            r.var_x,
            r.var_v,
            r.xv_corr,
            w1
        )?;
    }
    Ok(())
}

/// Parses the trajectory schema back; `free_energy_se` is not serialized and
/// comes back as NaN.
pub fn read_diagnostics_csv<R: BufRead>(input: R) -> Result<Vec<DiagnosticsRow>> {
    let mut lines = input.lines();
    let header = lines.next().ok_or_else(|| Error::CsvParse {
        line: 1,
        reason: "missing header".into(),
    })??;
    if header.trim_end() != CSV_HEADER {
        return Err(Error::CsvParse {
            line: 1,
            reason: format!("unexpected header `{header}`"),
        });
    }
    let mut rows = Vec::new();
    for (k, line) in lines.enumerate() {
        let line = line?;
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 10 {
            return Err(Error::CsvParse {
                line: k + 2,
                reason: format!("expected 10 fields, got {}", fields.len()),
            });
        }
        let parse = |s: &str| -> Result<f64> {
            s.parse().map_err(|_| Error::CsvParse {
                line: k + 2,
                reason: format!("bad float `{s}`"),
            })
        };
        rows.push(DiagnosticsRow {
            t: parse(fields[0])?,
            potential: parse(fields[1])?,
            kinetic: parse(fields[2])?,
            entropy: parse(fields[3])?,
            free_energy: parse(fields[4])?,
            free_energy_se: f64::NAN,
            mean_x_norm: parse(fields[5])?,
            var_x: parse(fields[6])?,
            var_v: parse(fields[7])?,
            xv_corr: parse(fields[8])?,
            w1_ref: if fields[9].is_empty() {
                None
            } else {
                Some(parse(fields[9])?)
            },
        });
    }
    Ok(rows)
}
