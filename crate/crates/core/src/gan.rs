//! Adversarial training experiment: a mean-field two-layer discriminator driven
//! by underdamped Langevin dynamics against a generator that plays its explicit
//! Gibbs best response, sampled by random-walk Metropolis.
//!
//! Discriminator particles are x = (c, a, b) ∈ ℝ³ acting on scalar data y via
//! Φ(m, y) = 𝔼^m[c·φ(a·y + b)] with φ the clipped identity. The generator's
//! best response has unnormalized log-density −(2/σ₀²)(Φ(m, y) + (λ₀/2)y²).
//! The discriminator descends
//!
//!   F(m) = −∫Φ(m^X, y)(ℓ*[m] − μ)(dy) − (σ₀²/2)H(ℓ*[m]) + (λ₁/2)𝔼^m|X|²,
//!
//! whose intrinsic derivative (envelope theorem collapses the ℓ*-variation) is
//! D_mF(m, x) = ∫D_mΦ(y, x)(μ − ℓ*[m])(dy) + λ₁x. Descending F ascends the
//! maximizing player's objective; the λ₁ ridge comes from that player's
//! −(λ₁/2)𝔼|X|² regularizer flipping sign along with the rest.

use crate::ensemble::{init_ensemble, InitSpec, Marginal, ParticleEnsemble};
use crate::error::{Error, Result};
use crate::integrator::{bbk_step, DynamicsParams};
use crate::potentials::Potential;
use crate::rng::{stream_rng, tag};
use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::io::Write;

/// Clipped identity activation.
pub fn phi_clip(z: f64, clip: f64) -> f64 {
    z.clamp(-clip, clip)
}

/// Derivative of [`phi_clip`]; 0 at |z| = clip exactly (subgradient choice).
pub fn d_phi(z: f64, clip: f64) -> f64 {
    if z.abs() < clip {
        1.0
    } else {
        0.0
    }
}

/// Φ(m, y): mean over particles of c·φ(a·y + b). Direct evaluation.
pub fn discriminator_value(positions: ArrayView2<f64>, y: f64, clip: f64) -> f64 {
    let n = positions.nrows();
    let mut acc = 0.0;
    for i in 0..n {
        let (c, a, b) = (positions[[i, 0]], positions[[i, 1]], positions[[i, 2]]);
        acc += c * phi_clip(a * y + b, clip);
    }
    acc / n as f64
}

/// Unnormalized generator log-density −(2/σ₀²)·(Φ(m, y) + (λ₀/2)·y²).
pub fn generator_logdensity(
    positions: ArrayView2<f64>,
    y: f64,
    clip: f64,
    sigma0: f64,
    lambda0: f64,
) -> f64 {
    -(2.0 / (sigma0 * sigma0)) * (discriminator_value(positions, y, clip) + 0.5 * lambda0 * y * y)
}

/// Samples sorted with prefix sums, for O(log S) per-particle activation sums.
struct SortedSamples {
    ys: Vec<f64>,
    /// prefix[k] = Σ_{j<k} ys[j].
    prefix: Vec<f64>,
}

impl SortedSamples {
    fn new(samples: &[f64]) -> Self {
        let mut ys = samples.to_vec();
        ys.sort_by(f64::total_cmp);
        let mut prefix = Vec::with_capacity(ys.len() + 1);
        let mut acc = 0.0;
        prefix.push(0.0);
        for y in &ys {
            acc += y;
            prefix.push(acc);
        }
        SortedSamples { ys, prefix }
    }

    fn len(&self) -> usize {
        self.ys.len()
    }

    /// (Σ_y φ(a·y+b), #inside, Σ_{inside} y) over all samples; φ is linear on
    /// the inside band and saturated outside, so three prefix lookups suffice.
    fn activation_sums(&self, a: f64, b: f64, clip: f64) -> (f64, f64, f64) {
        let s = self.len();
        if a == 0.0 {
            // Constant argument b: every sample shares b's saturation state.
            let inside = d_phi(b, clip) == 1.0;
            let n_in = if inside { s as f64 } else { 0.0 };
            let sum_in = if inside { self.prefix[s] } else { 0.0 };
            return (phi_clip(b, clip) * s as f64, n_in, sum_in);
        }
        let t1 = (-clip - b) / a;
        let t2 = (clip - b) / a;
        let (lo, hi) = if a > 0.0 { (t1, t2) } else { (t2, t1) };
        // φ at y → −∞: a > 0 saturates low, a < 0 saturates high.
        let below_val = if a > 0.0 { -clip } else { clip };
        let i1 = self.ys.partition_point(|&y| y <= lo);
        let i2 = self.ys.partition_point(|&y| y < hi);
        let n_in = (i2 - i1) as f64;
        let sum_in = self.prefix[i2] - self.prefix[i1];
        let sum_phi = below_val * i1 as f64 - below_val * (s - i2) as f64 + a * sum_in + b * n_in;
        (sum_phi, n_in, sum_in)
    }
}

/// Piecewise-linear closure of y ↦ Φ(m, y) for a fixed particle cloud: 2N
/// breakpoints, O(log N) per evaluation. Metropolis chains evaluate Φ tens of
/// millions of times per run, which rules out the direct O(N) form.
pub struct DiscriminatorProfile {
    breaks: Vec<f64>,
    values: Vec<f64>,
    slopes: Vec<f64>,
    /// Value on (−∞, first break).
    base: f64,
    count: f64,
}

impl DiscriminatorProfile {
    pub fn build(positions: ArrayView2<f64>, clip: f64) -> Self {
        let n = positions.nrows();
        let mut base = 0.0;
        let mut events: Vec<(f64, f64)> = Vec::with_capacity(2 * n);
        for i in 0..n {
            let (c, a, b) = (positions[[i, 0]], positions[[i, 1]], positions[[i, 2]]);
            if a == 0.0 {
                base += c * phi_clip(b, clip);
                continue;
            }
            let t1 = (-clip - b) / a;
            let t2 = (clip - b) / a;
            let (entry, exit) = if a > 0.0 { (t1, t2) } else { (t2, t1) };
            base += c * if a > 0.0 { -clip } else { clip };
            events.push((entry, c * a));
            events.push((exit, -c * a));
        }
        events.sort_by(|p, q| p.0.total_cmp(&q.0));
        let mut breaks = Vec::with_capacity(events.len());
        let mut values = Vec::with_capacity(events.len());
        let mut slopes = Vec::with_capacity(events.len());
        let mut value = base;
        let mut slope = 0.0;
        for (pos, ds) in events {
            if let Some(&last) = breaks.last() {
                value += slope * (pos - last);
            }
            slope += ds;
            // Coincident breakpoints collapse into one segment.
            if breaks.last() == Some(&pos) {
                *slopes.last_mut().unwrap() = slope;
                *values.last_mut().unwrap() = value;
            } else {
                breaks.push(pos);
                values.push(value);
                slopes.push(slope);
            }
        }
        DiscriminatorProfile {
            breaks,
            values,
            slopes,
            base,
            count: n as f64,
        }
    }

    /// Φ(m, y).
    pub fn phi(&self, y: f64) -> f64 {
        let idx = self.breaks.partition_point(|&b| b <= y);
        let total = if idx == 0 {
            self.base
        } else {
            self.values[idx - 1] + self.slopes[idx - 1] * (y - self.breaks[idx - 1])
        };
        total / self.count
    }

    fn logdensity(&self, y: f64, sigma0: f64, lambda0: f64) -> f64 {
        -(2.0 / (sigma0 * sigma0)) * (self.phi(y) + 0.5 * lambda0 * y * y)
    }
}

/// The frozen-sample discriminator energy: target and generator samples held
/// fixed, yielding an ordinary mean-field functional of the particle cloud.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GanPotential {
    pub target: Vec<f64>,
    pub generator: Vec<f64>,
    pub clip: f64,
    pub lambda1: f64,
}

impl GanPotential {
    pub fn validate(&self) -> Result<()> {
        if self.target.is_empty() || self.generator.is_empty() {
            return Err(Error::InsufficientInput(
                "discriminator energy needs nonempty target and generator samples".into(),
            ));
        }
        if !(self.clip > 0.0 && self.clip.is_finite()) {
            return Err(Error::invalid("clip", format!("{} must be > 0", self.clip)));
        }
        if !(self.lambda1 >= 0.0 && self.lambda1.is_finite()) {
            return Err(Error::invalid(
                "lambda1",
                format!("{} must be ≥ 0", self.lambda1),
            ));
        }
        if self.target.iter().chain(&self.generator).any(|y| !y.is_finite()) {
            return Err(Error::invalid("samples", "non-finite sample"));
        }
        Ok(())
    }

    /// F(m) on frozen samples: mean-over-target Φ − mean-over-generator Φ
    /// + (λ₁/2)·mean|x|².
    pub fn value(&self, x: ArrayView2<f64>) -> f64 {
        let tgt = SortedSamples::new(&self.target);
        let gen = SortedSamples::new(&self.generator);
        let ridge =
            0.5 * self.lambda1 * x.iter().map(|v| v * v).sum::<f64>() / x.nrows() as f64;
        mixture_gap(x, &tgt, &gen, self.clip) + ridge
    }

    /// D_mF(m, xᵢ) rows: (μ − ℓ*)-difference of D_mΦ(y, x) =
    /// (φ(ay+b), c·φ′(ay+b)·y, c·φ′(ay+b)) plus the λ₁x ridge.
    pub fn intrinsic_derivative(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let n = x.nrows();
        let tgt = SortedSamples::new(&self.target);
        let gen = SortedSamples::new(&self.generator);
        let (t_count, g_count) = (tgt.len() as f64, gen.len() as f64);
        let mut d = Array2::zeros((n, 3));
        for i in 0..n {
            let (c, a, b) = (x[[i, 0]], x[[i, 1]], x[[i, 2]]);
            let (phi_t, nin_t, ysum_t) = tgt.activation_sums(a, b, self.clip);
            let (phi_g, nin_g, ysum_g) = gen.activation_sums(a, b, self.clip);
            d[[i, 0]] = phi_t / t_count - phi_g / g_count + self.lambda1 * c;
            d[[i, 1]] = c * (ysum_t / t_count - ysum_g / g_count) + self.lambda1 * a;
            d[[i, 2]] = c * (nin_t / t_count - nin_g / g_count) + self.lambda1 * b;
        }
        d
    }
}

fn mixture_gap(x: ArrayView2<f64>, tgt: &SortedSamples, gen: &SortedSamples, clip: f64) -> f64 {
    let (t_count, g_count) = (tgt.len() as f64, gen.len() as f64);
    let mut acc = 0.0;
    for i in 0..x.nrows() {
        let (c, a, b) = (x[[i, 0]], x[[i, 1]], x[[i, 2]]);
        let (sum_t, _, _) = tgt.activation_sums(a, b, clip);
        let (sum_g, _, _) = gen.activation_sums(a, b, clip);
        acc += c * (sum_t / t_count - sum_g / g_count);
    }
    acc / x.nrows() as f64
}

/// mean-over-target Φ − mean-over-generator Φ: the recorded potential energy.
pub fn potential_energy_gap(
    positions: ArrayView2<f64>,
    target: &[f64],
    generator: &[f64],
    clip: f64,
) -> f64 {
    mixture_gap(
        positions,
        &SortedSamples::new(target),
        &SortedSamples::new(generator),
        clip,
    )
}

/// Data law: a finite Gaussian mixture over scalar y.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetMixture {
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl Default for TargetMixture {
    /// ½N(−1,1) + ½N(4,1).
    fn default() -> Self {
        TargetMixture {
            weights: vec![0.5, 0.5],
            means: vec![-1.0, 4.0],
            stds: vec![1.0, 1.0],
        }
    }
}

impl TargetMixture {
    pub fn validate(&self) -> Result<()> {
        if self.weights.is_empty()
            || self.weights.len() != self.means.len()
            || self.weights.len() != self.stds.len()
        {
            return Err(Error::invalid(
                "target",
                "weights/means/stds must be equal-length and nonempty",
            ));
        }
        if self.weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite())
            || self.weights.iter().sum::<f64>() <= 0.0
        {
            return Err(Error::invalid("target.weights", "need nonnegative, positive-sum weights"));
        }
        if self.means.iter().any(|m| !m.is_finite())
            || self.stds.iter().any(|s| !(*s >= 0.0) || !s.is_finite())
        {
            return Err(Error::invalid("target", "non-finite mixture parameters"));
        }
        Ok(())
    }

    pub fn sample(&self, count: usize, seed: u64) -> Result<Vec<f64>> {
        self.validate()?;
        let total: f64 = self.weights.iter().sum();
        let mut rng = stream_rng(seed, tag::TARGET, &[count as u64]);
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            let mut pick = rng.random_range(0.0..total);
            let mut idx = 0;
            for (j, w) in self.weights.iter().enumerate() {
                if pick < *w {
                    idx = j;
                    break;
                }
                pick -= w;
                idx = j;
            }
            let z: f64 = rng.sample(StandardNormal);
            out.push(self.means[idx] + self.stds[idx] * z);
        }
        Ok(out)
    }
}

/// Random-walk Metropolis settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MhConfig {
    /// Independent chains; samples are merged across them.
    pub chains: usize,
    /// Total adaptation steps per chain on the first draw.
    pub burn_in: usize,
    /// Re-equilibration steps per chain on warm-started draws.
    pub warm_steps: usize,
    /// Chain steps between retained samples.
    pub thin: usize,
    pub initial_scale: f64,
    /// Acceptance-rate target of the scale adaptation (optimal-scaling 0.234).
    pub target_accept: f64,
    /// Proposals per adaptation round.
    pub adapt_batch: usize,
}

impl Default for MhConfig {
    fn default() -> Self {
        MhConfig {
            chains: 8,
            burn_in: 500,
            warm_steps: 16,
            thin: 5,
            initial_scale: 1.0,
            target_accept: 0.234,
            adapt_batch: 50,
        }
    }
}

impl MhConfig {
    pub fn validate(&self) -> Result<()> {
        if self.chains == 0 || self.thin == 0 || self.adapt_batch == 0 {
            return Err(Error::invalid(
                "mh",
                "chains, thin, and adapt_batch must be ≥ 1",
            ));
        }
        if self.burn_in < self.adapt_batch {
            return Err(Error::invalid(
                "mh.burn_in",
                format!(
                    "{} must cover at least one adaptation round ({})",
                    self.burn_in, self.adapt_batch
                ),
            ));
        }
        if !(self.initial_scale > 0.0 && self.initial_scale.is_finite()) {
            return Err(Error::invalid("mh.initial_scale", "must be > 0"));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::invalid("mh.target_accept", "must lie in (0,1)"));
        }
        Ok(())
    }
}

/// Acceptance statistics of the most recent draw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MhStats {
    pub accept_rate: f64,
    pub scale: f64,
}

/// Warm-started Metropolis chains targeting the generator response.
///
/// The proposal scale adapts toward `target_accept` during the first draw's
/// burn-in (Robbins–Monro on the log scale, pooled over chains) and is frozen
/// afterwards. Everything is a pure function of the seed and call sequence.
pub struct MhSampler {
    cfg: MhConfig,
    sigma0: f64,
    lambda0: f64,
    seed: u64,
    ys: Vec<f64>,
    ln_scale: f64,
    calls: u64,
    stats: MhStats,
}

fn mh_step(
    profile: &DiscriminatorProfile,
    sigma0: f64,
    lambda0: f64,
    y: &mut f64,
    ld: &mut f64,
    scale: f64,
    rng: &mut impl Rng,
) -> bool {
    let z: f64 = rng.sample(StandardNormal);
    let prop = *y + scale * z;
    let ld_prop = profile.logdensity(prop, sigma0, lambda0);
    let accept = ld_prop >= *ld || rng.random::<f64>().ln() < ld_prop - *ld;
    if accept {
        *y = prop;
        *ld = ld_prop;
    }
    accept
}

impl MhSampler {
    pub fn new(cfg: MhConfig, sigma0: f64, lambda0: f64, seed: u64) -> Result<Self> {
        cfg.validate()?;
        if !(sigma0 > 0.0) {
            return Err(Error::invalid("sigma0", format!("{sigma0} must be > 0")));
        }
        if !(lambda0 >= 0.0) {
            return Err(Error::invalid("lambda0", format!("{lambda0} must be ≥ 0")));
        }
        Ok(MhSampler {
            ln_scale: cfg.initial_scale.ln(),
            cfg,
            sigma0,
            lambda0,
            seed,
            ys: Vec::new(),
            calls: 0,
            stats: MhStats {
                accept_rate: 0.0,
                scale: 0.0,
            },
        })
    }

    pub fn stats(&self) -> MhStats {
        self.stats
    }

    /// Draws `count` samples of the response to the current discriminator cloud.
    pub fn sample(&mut self, positions: ArrayView2<f64>, clip: f64, count: usize) -> Result<Vec<f64>> {
        if count == 0 {
            return Err(Error::invalid("count", "must be ≥ 1"));
        }
        let profile = DiscriminatorProfile::build(positions, clip);
        let (s0, l0) = (self.sigma0, self.lambda0);
        let call = self.calls;
        self.calls += 1;
        let chains = self.cfg.chains;
        let mut rngs: Vec<_> = (0..chains)
            .map(|c| stream_rng(self.seed, tag::MH, &[call, c as u64]))
            .collect();

        if call == 0 {
            // Cold start near the ridge-only response, then adapt the scale.
            let prior_sd = if self.lambda0 > 0.0 {
                self.sigma0 / (2.0 * self.lambda0).sqrt()
            } else {
                1.0
            };
            self.ys = rngs
                .iter_mut()
                .map(|rng| {
                    let z: f64 = rng.sample(StandardNormal);
                    prior_sd * z
                })
                .collect();
            let rounds = (self.cfg.burn_in / self.cfg.adapt_batch).max(1);
            let mut lds: Vec<f64> = self
                .ys
                .iter()
                .map(|&y| profile.logdensity(y, self.sigma0, self.lambda0))
                .collect();
            for round in 0..rounds {
                let scale = self.ln_scale.exp();
                let mut accepted = 0usize;
                let mut proposed = 0usize;
                for c in 0..chains {
                    for _ in 0..self.cfg.adapt_batch {
                        if mh_step(&profile, s0, l0, &mut self.ys[c], &mut lds[c], scale, &mut rngs[c]) {
                            accepted += 1;
                        }
                        proposed += 1;
                    }
                }
                if accepted == 0 {
                    return Err(Error::Sampler(format!(
                        "no acceptances in adaptation round {round} ({proposed} proposals, scale {scale:.3e})"
                    )));
                }
                let rate = accepted as f64 / proposed as f64;
                self.ln_scale += (rate - self.cfg.target_accept) / (round as f64 + 1.0).powf(0.6);
            }
        } else {
            let scale = self.ln_scale.exp();
            let mut lds: Vec<f64> = self
                .ys
                .iter()
                .map(|&y| profile.logdensity(y, self.sigma0, self.lambda0))
                .collect();
            for c in 0..chains {
                for _ in 0..self.cfg.warm_steps {
                    mh_step(&profile, s0, l0, &mut self.ys[c], &mut lds[c], scale, &mut rngs[c]);
                }
            }
        }

        // Production: each chain contributes its share, `thin` steps apart.
        let scale = self.ln_scale.exp();
        let mut lds: Vec<f64> = self
            .ys
            .iter()
            .map(|&y| profile.logdensity(y, self.sigma0, self.lambda0))
            .collect();
        let mut out = Vec::with_capacity(count);
        let base = count / chains;
        let rem = count % chains;
        let mut accepted = 0usize;
        let mut proposed = 0usize;
        for c in 0..chains {
            let quota = base + usize::from(c < rem);
            for _ in 0..quota {
                for _ in 0..self.cfg.thin {
                    if mh_step(&profile, s0, l0, &mut self.ys[c], &mut lds[c], scale, &mut rngs[c]) {
                        accepted += 1;
                    }
                    proposed += 1;
                }
                out.push(self.ys[c]);
            }
        }
        self.stats = MhStats {
            accept_rate: accepted as f64 / proposed.max(1) as f64,
            scale,
        };
        Ok(out)
    }
}

/// One-shot draw against a fixed discriminator cloud.
pub fn mh_sample_generator(
    positions: ArrayView2<f64>,
    clip: f64,
    sigma0: f64,
    lambda0: f64,
    count: usize,
    cfg: MhConfig,
    seed: u64,
) -> Result<(Vec<f64>, MhStats)> {
    let mut sampler = MhSampler::new(cfg, sigma0, lambda0, seed)?;
    let samples = sampler.sample(positions, clip, count)?;
    Ok((samples, sampler.stats()))
}

/// Training halts once the potential energy sits below `fraction` of its
/// initial value for `consecutive` recordings in a row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StopRule {
    pub fraction: f64,
    pub consecutive: usize,
}

impl Default for StopRule {
    fn default() -> Self {
        StopRule {
            fraction: 0.05,
            consecutive: 50,
        }
    }
}

/// Full experiment configuration. `Default` is the published coefficient set:
/// σ₀ = 0.1, σ₁ = 1, γ = 1, λ₀ = 0.01, λ₁ = 0.1, clip level 10, N = 2000
/// particles against 2000 target samples of ½N(−1,1) + ½N(4,1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GanConfig {
    pub particles: usize,
    pub target_samples: usize,
    pub generator_samples: usize,
    pub target: TargetMixture,
    pub clip: f64,
    pub sigma0: f64,
    pub sigma1: f64,
    pub gamma: f64,
    pub lambda0: f64,
    pub lambda1: f64,
    pub eta_speed: f64,
    /// Truncation level for the amplitude coordinate c.
    pub c_max: f64,
    pub dt: f64,
    pub max_steps: u64,
    pub record_every: u64,
    pub stop: StopRule,
    pub mh: MhConfig,
    /// Standard deviation of the initial (c, a, b) draw; 0 starts the
    /// discriminator flat (Φ ≡ 0).
    pub init_position_std: f64,
    /// Test hook: sample the generator once and keep it fixed.
    pub freeze_generator: bool,
    pub seed: u64,
}

impl Default for GanConfig {
    fn default() -> Self {
        GanConfig {
            particles: 2000,
            target_samples: 2000,
            generator_samples: 2000,
            target: TargetMixture::default(),
            clip: 10.0,
            sigma0: 0.1,
            sigma1: 1.0,
            gamma: 1.0,
            lambda0: 0.01,
            lambda1: 0.1,
            eta_speed: 1.0,
            c_max: 20.0,
            dt: 0.01,
            max_steps: 5000,
            record_every: 1,
            stop: StopRule::default(),
            mh: MhConfig::default(),
            init_position_std: 1.0,
            freeze_generator: false,
            seed: 0,
        }
    }
}

impl GanConfig {
    pub fn validate(&self) -> Result<()> {
        self.target.validate()?;
        self.mh.validate()?;
        if self.particles == 0 || self.target_samples == 0 || self.generator_samples == 0 {
            return Err(Error::invalid("counts", "particle/sample counts must be ≥ 1"));
        }
        if !(self.sigma0 > 0.0) {
            return Err(Error::invalid("sigma0", format!("{} must be > 0", self.sigma0)));
        }
        // σ₁ = 0 is admitted for the noise-off gradient-descent checks.
        if !(self.sigma1 >= 0.0 && self.sigma1.is_finite()) {
            return Err(Error::invalid("sigma1", format!("{} must be ≥ 0", self.sigma1)));
        }
        if !(self.gamma > 0.0) {
            return Err(Error::invalid("gamma", format!("{} must be > 0", self.gamma)));
        }
        if !(self.lambda0 >= 0.0) || !(self.lambda1 >= 0.0) {
            return Err(Error::invalid("lambda0/lambda1", "must be ≥ 0"));
        }
        if !(self.clip > 0.0) {
            return Err(Error::invalid("clip", format!("{} must be > 0", self.clip)));
        }
        if !(self.c_max > 0.0) {
            return Err(Error::invalid("c_max", format!("{} must be > 0", self.c_max)));
        }
        if !(self.eta_speed > 0.0) {
            return Err(Error::invalid("eta_speed", format!("{} must be > 0", self.eta_speed)));
        }
        if !(self.dt > 0.0) || self.gamma * self.dt >= 2.0 {
            return Err(Error::invalid("dt", format!("need dt > 0 and γ·dt < 2, got {}", self.dt)));
        }
        if self.max_steps == 0 || self.record_every == 0 {
            return Err(Error::invalid("max_steps/record_every", "must be ≥ 1"));
        }
        if !(self.stop.fraction > 0.0 && self.stop.fraction < 1.0) || self.stop.consecutive == 0 {
            return Err(Error::invalid("stop", "fraction in (0,1), consecutive ≥ 1"));
        }
        if !(self.init_position_std >= 0.0 && self.init_position_std.is_finite()) {
            return Err(Error::invalid("init_position_std", "must be ≥ 0"));
        }
        Ok(())
    }
}

/// One energy recording.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyRow {
    pub step: u64,
    /// mean-over-target Φ − mean-over-generator Φ.
    pub potential: f64,
    /// (η_s/2)·mean|V|².
    pub kinetic: f64,
}

/// Evolving training state (and final artifact): discriminator cloud, cached
/// generator response, energy trace.
#[derive(Debug, Clone)]
pub struct GanState {
    pub discriminator: ParticleEnsemble,
    pub generator: Vec<f64>,
    pub energy: Vec<EnergyRow>,
}

#[derive(Debug, Clone)]
pub struct GanOutput {
    pub state: GanState,
    pub target: Vec<f64>,
    pub stopped_early: bool,
    pub steps_run: u64,
}

/// `step,potential,kinetic` CSV.
pub fn write_energy_csv<W: Write>(rows: &[EnergyRow], out: &mut W) -> Result<()> {
    writeln!(out, "step,potential,kinetic")?;
    for r in rows {
        writeln!(out, "{},{},{}", r.step, r.potential, r.kinetic)?;
    }
    Ok(())
}

/// Positions far beyond any training-relevant scale abort the run.
const POSITION_GUARD: f64 = 1e6;

/// Trains the discriminator: each step re-samples the generator response,
/// records energies, advances one BBK step with noise σ₁, and projects c back
/// to [−C_max, C_max]. Stops early per `cfg.stop` once the potential energy
/// stays below `fraction`× its initial value (the rule is skipped when the
/// initial gap is not positive, e.g. a planted zero-gap start).
pub fn train(cfg: &GanConfig) -> Result<GanOutput> {
    cfg.validate()?;
    let target = cfg.target.sample(cfg.target_samples, cfg.seed)?;
    let velocity_var = if cfg.sigma1 > 0.0 {
        cfg.sigma1 * cfg.sigma1 / (2.0 * cfg.gamma)
    } else {
        0.0
    };
    let init = InitSpec {
        position: Marginal::Gaussian {
            mean: vec![0.0],
            variance: cfg.init_position_std * cfg.init_position_std,
        },
        velocity: Marginal::Gaussian {
            mean: vec![0.0],
            variance: velocity_var,
        },
        seed: cfg.seed,
    };
    let mut discriminator = init_ensemble(&init, cfg.particles, 3)?;
    let mut sampler = MhSampler::new(cfg.mh, cfg.sigma0, cfg.lambda0, cfg.seed)?;
    // Built once; only the generator samples change between steps.
    let mut potential = Potential::GanDiscriminator(GanPotential {
        target: target.clone(),
        generator: Vec::new(),
        clip: cfg.clip,
        lambda1: cfg.lambda1,
    });
    fn inner(p: &mut Potential) -> &mut GanPotential {
        match p {
            Potential::GanDiscriminator(g) => g,
            _ => unreachable!(),
        }
    }
    let params = DynamicsParams {
        gamma: cfg.gamma,
        sigma: cfg.sigma1,
        eta_speed: cfg.eta_speed,
        dt: cfg.dt,
        steps: cfg.max_steps,
    };
    params.validate()?;

    let mut energy: Vec<EnergyRow> = Vec::new();
    let mut initial_potential = f64::NAN;
    let mut below_streak = 0usize;
    let mut stopped_early = false;
    let mut steps_run = 0u64;

    let record =
        |step: u64, e: &ParticleEnsemble, gen: &[f64], energy: &mut Vec<EnergyRow>| -> (f64, f64) {
            let pot = potential_energy_gap(e.positions.view(), &target, gen, cfg.clip);
            let kin = 0.5 * cfg.eta_speed * e.velocities.iter().map(|v| v * v).sum::<f64>()
                / e.count() as f64;
            energy.push(EnergyRow {
                step,
                potential: pot,
                kinetic: kin,
            });
            (pot, kin)
        };

    for step in 0..cfg.max_steps {
        if !cfg.freeze_generator || step == 0 {
            inner(&mut potential).generator =
                sampler.sample(discriminator.positions.view(), cfg.clip, cfg.generator_samples)?;
        }
        if step % cfg.record_every == 0 {
            let (pot, _) = record(
                step,
                &discriminator,
                &inner(&mut potential).generator,
                &mut energy,
            );
            if step == 0 {
                initial_potential = pot;
            }
            if initial_potential > 0.0 {
                if pot < cfg.stop.fraction * initial_potential {
                    below_streak += 1;
                } else {
                    below_streak = 0;
                }
                if below_streak >= cfg.stop.consecutive {
                    stopped_early = true;
                    steps_run = step;
                    break;
                }
            }
        }
        bbk_step(&mut discriminator, &potential, &params, cfg.seed, step)?;
        discriminator
            .positions
            .column_mut(0)
            .mapv_inplace(|c| c.clamp(-cfg.c_max, cfg.c_max));
        if discriminator.positions.iter().any(|v| v.abs() > POSITION_GUARD) {
            return Err(Error::NonFinite {
                step,
                context: format!("discriminator position beyond ±{POSITION_GUARD:.0e} guard"),
            });
        }
        steps_run = step + 1;
    }

    if !stopped_early {
        // Final recording consistent with the returned state.
        if !cfg.freeze_generator {
            inner(&mut potential).generator =
                sampler.sample(discriminator.positions.view(), cfg.clip, cfg.generator_samples)?;
        }
        record(
            steps_run,
            &discriminator,
            &inner(&mut potential).generator,
            &mut energy,
        );
    }

    Ok(GanOutput {
        state: GanState {
            discriminator,
            generator: match potential {
                Potential::GanDiscriminator(g) => g.generator,
                _ => unreachable!(),
            },
            energy,
        },
        target,
        stopped_early,
        steps_run,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potentials::{fd_consistency_check, Potential};
    use approx::assert_abs_diff_eq;
    use ndarray::arr2;

    fn random_positions(n: usize, amp: f64, seed: u64) -> Array2<f64> {
        let mut rng = stream_rng(seed, tag::INIT, &[n as u64, 3]);
        Array2::from_shape_fn((n, 3), |_| rng.random_range(-amp..amp))
    }

    #[test]
    fn activation_examples() {
        assert_abs_diff_eq!(phi_clip(0.5, 10.0), 0.5);
        assert_abs_diff_eq!(phi_clip(50.0, 10.0), 10.0);
        assert_abs_diff_eq!(phi_clip(-50.0, 10.0), -10.0);
        assert_eq!(d_phi(9.999, 10.0), 1.0);
        assert_eq!(d_phi(10.0, 10.0), 0.0);
        assert_eq!(d_phi(-12.0, 10.0), 0.0);
    }

    #[test]
    fn discriminator_value_examples() {
        let single = arr2(&[[1.0, 1.0, 0.0]]);
        assert_abs_diff_eq!(discriminator_value(single.view(), 0.5, 10.0), 0.5);
        assert_abs_diff_eq!(discriminator_value(single.view(), 50.0, 10.0), 10.0);
        let zeros = arr2(&[[0.0, 2.0, 1.0], [0.0, -1.0, 0.5]]);
        for y in [-3.0, 0.0, 7.0] {
            assert_eq!(discriminator_value(zeros.view(), y, 10.0), 0.0);
        }
    }

    #[test]
    fn profile_matches_direct_evaluation() {
        let pos = random_positions(40, 3.0, 100);
        let mut with_flat = pos.clone();
        with_flat[[7, 1]] = 0.0; // exercise the a = 0 path
        let profile = DiscriminatorProfile::build(with_flat.view(), 10.0);
        for k in 0..400 {
            let y = -20.0 + 0.1 * k as f64;
            let fast = profile.phi(y);
            let slow = discriminator_value(with_flat.view(), y, 10.0);
            assert!(
                (fast - slow).abs() <= 1e-9 * (1.0 + slow.abs()),
                "y={y}: {fast} vs {slow}"
            );
        }
    }

    #[test]
    fn sorted_sums_match_direct_loops() {
        let samples: Vec<f64> = (0..57).map(|k| ((k * 37) % 19) as f64 * 0.3 - 2.0).collect();
        let sorted = SortedSamples::new(&samples);
        for (a, b) in [(1.3, -0.4), (-0.8, 2.0), (0.0, 1.0), (4.0, -9.0)] {
            let (sum_phi, n_in, sum_y) = sorted.activation_sums(a, b, 3.0);
            let mut want_phi = 0.0;
            let mut want_n = 0.0;
            let mut want_y = 0.0;
            for &y in &samples {
                want_phi += phi_clip(a * y + b, 3.0);
                if d_phi(a * y + b, 3.0) == 1.0 {
                    want_n += 1.0;
                    want_y += y;
                }
            }
            assert_abs_diff_eq!(sum_phi, want_phi, epsilon = 1e-9);
            assert_abs_diff_eq!(n_in, want_n);
            assert_abs_diff_eq!(sum_y, want_y, epsilon = 1e-9);
        }
    }

    #[test]
    fn derivative_hand_oracles() {
        // Matching sample multisets leave only the ridge.
        let gp = GanPotential {
            target: vec![0.3, -1.0, 2.0],
            generator: vec![2.0, 0.3, -1.0],
            clip: 10.0,
            lambda1: 0.25,
        };
        let x = arr2(&[[1.0, -2.0, 0.5]]);
        let d = gp.intrinsic_derivative(x.view());
        assert_abs_diff_eq!(d[[0, 0]], 0.25 * 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(d[[0, 1]], 0.25 * -2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(d[[0, 2]], 0.25 * 0.5, epsilon = 1e-12);

        // Single target y=1, single generator y=0, x=(1,1,0), λ₁=0 → (1,1,0).
        let gp = GanPotential {
            target: vec![1.0],
            generator: vec![0.0],
            clip: 10.0,
            lambda1: 0.0,
        };
        let x = arr2(&[[1.0, 1.0, 0.0]]);
        let d = gp.intrinsic_derivative(x.view());
        assert_abs_diff_eq!(d[[0, 0]], 1.0);
        assert_abs_diff_eq!(d[[0, 1]], 1.0);
        assert_abs_diff_eq!(d[[0, 2]], 0.0);
    }

    #[test]
    fn frozen_functional_passes_fd_check() {
        let mut rng = stream_rng(7, tag::TARGET, &[99]);
        let target: Vec<f64> = (0..41).map(|_| rng.random_range(-2.0..5.0)).collect();
        let generator: Vec<f64> = (0..37).map(|_| rng.random_range(-2.0..5.0)).collect();
        let gp = GanPotential {
            target,
            generator,
            clip: 10.0,
            lambda1: 0.1,
        };
        // Amplitude kept inside the linear region so differences never
        // straddle an activation kink.
        let x = random_positions(25, 1.0, 101);
        let pot = Potential::GanDiscriminator(gp);
        for i in [0usize, 11, 24] {
            let err = fd_consistency_check(&pot, x.view(), i, 1e-5).unwrap();
            assert!(err < 1e-6, "particle {i}: {err}");
        }
    }

    #[test]
    fn logdensity_reduces_to_gaussian_when_flat() {
        let flat = arr2(&[[0.0, 1.0, 0.3], [0.0, -0.5, 1.0]]);
        for y in [-2.0, 0.0, 1.7] {
            let ld = generator_logdensity(flat.view(), y, 10.0, 0.1, 0.01);
            assert_abs_diff_eq!(ld, -y * y, epsilon = 1e-10);
        }
    }

    #[test]
    fn logdensity_strictly_decreasing_in_linear_region() {
        // Φ(m,y) = y here, so the log-density derivative −(2/σ₀²)(1 + λ₀y)
        // stays negative over [0, 9].
        let single = arr2(&[[1.0, 1.0, 0.0]]);
        let mut prev = generator_logdensity(single.view(), 0.0, 10.0, 0.1, 0.01);
        for k in 1..=90 {
            let y = 0.1 * k as f64;
            let ld = generator_logdensity(single.view(), y, 10.0, 0.1, 0.01);
            assert!(ld < prev, "not decreasing at y={y}");
            prev = ld;
        }
    }

    #[test]
    fn constant_phi_shift_cancels_in_acceptance_ratios() {
        // Second particle adds a constant to Φ; acceptance log-ratios between
        // any two states depend only on differences, so they agree.
        let base = arr2(&[[1.0, 1.0, 0.0], [0.0, 0.0, 0.0]]);
        let shifted = arr2(&[[1.0, 1.0, 0.0], [4.0, 0.0, 3.0]]);
        for (y, y2) in [(0.1, 0.7), (-1.0, 2.0), (3.0, 3.5)] {
            let d_base = generator_logdensity(base.view(), y2, 10.0, 0.1, 0.01)
                - generator_logdensity(base.view(), y, 10.0, 0.1, 0.01);
            let d_shift = generator_logdensity(shifted.view(), y2, 10.0, 0.1, 0.01)
                - generator_logdensity(shifted.view(), y, 10.0, 0.1, 0.01);
            assert_abs_diff_eq!(d_base, d_shift, epsilon = 1e-9);
        }
    }

    fn flat_positions() -> Array2<f64> {
        Array2::zeros((3, 3))
    }

    #[test]
    fn mh_recovers_the_flat_case_gaussian() {
        // All c = 0 → target is exactly N(0, σ₀²/(2λ₀)) = N(0, 0.5).
        let (samples, stats) = mh_sample_generator(
            flat_positions().view(),
            10.0,
            0.1,
            0.01,
            10_000,
            MhConfig::default(),
            12,
        )
        .unwrap();
        let mean = crate::stats::mean(&samples);
        let var = crate::stats::variance(&samples);
        assert!(mean.abs() < 0.05, "mean {mean}");
        assert!((var - 0.5).abs() < 0.05, "var {var}");
        assert!(
            stats.accept_rate > 0.15 && stats.accept_rate < 0.5,
            "acceptance {:?}",
            stats
        );
    }

    #[test]
    fn mh_is_deterministic() {
        let a = mh_sample_generator(flat_positions().view(), 10.0, 0.1, 0.01, 500, MhConfig::default(), 3)
            .unwrap()
            .0;
        let b = mh_sample_generator(flat_positions().view(), 10.0, 0.1, 0.01, 500, MhConfig::default(), 3)
            .unwrap()
            .0;
        assert_eq!(a, b);
    }

    #[test]
    fn mh_zero_acceptance_aborts() {
        let cfg = MhConfig {
            initial_scale: 1e300,
            ..MhConfig::default()
        };
        let err = mh_sample_generator(flat_positions().view(), 10.0, 0.1, 0.01, 100, cfg, 4).unwrap_err();
        assert!(matches!(err, Error::Sampler(_)), "{err:?}");
    }

    #[test]
    fn mh_chain_autocovariance_decays() {
        let cfg = MhConfig {
            chains: 1,
            thin: 1,
            ..MhConfig::default()
        };
        let samples = mh_sample_generator(flat_positions().view(), 10.0, 0.1, 0.01, 20_000, cfg, 5)
            .unwrap()
            .0;
        let mean = crate::stats::mean(&samples);
        let centered: Vec<f64> = samples.iter().map(|y| y - mean).collect();
        let autocov = |lag: usize| -> f64 {
            let n = centered.len() - lag;
            (0..n).map(|i| centered[i] * centered[i + lag]).sum::<f64>() / n as f64
        };
        let var = autocov(0);
        assert!(autocov(25).abs() < 0.2 * var, "slow mixing: {} vs {var}", autocov(25));
    }

    fn micro_config() -> GanConfig {
        GanConfig {
            particles: 80,
            target_samples: 120,
            generator_samples: 120,
            max_steps: 250,
            record_every: 5,
            mh: MhConfig {
                chains: 4,
                burn_in: 200,
                warm_steps: 8,
                thin: 3,
                ..MhConfig::default()
            },
            // Seed picked so the initial cloud is not near-orthogonal to the
            // target/generator difference; a ≈ 0 starting gap (e.g. seed 9)
            // would sink below MH estimation noise and make progress
            // unmeasurable.
            seed: 11,
            ..GanConfig::default()
        }
    }

    #[test]
    fn training_reduces_the_gap_and_stays_tame() {
        let out = train(&micro_config()).unwrap();
        let first = out.state.energy.first().unwrap().potential;
        let min_late = out
            .state
            .energy
            .iter()
            .rev()
            .take(10)
            .map(|r| r.potential)
            .fold(f64::INFINITY, f64::min);
        assert!(first > 0.1, "initial gap {first} unexpectedly small");
        assert!(min_late < 0.6 * first, "no progress: {first} → {min_late}");
        // Kinetic energy bounded: max ≤ 10× its time-median.
        let mut kins: Vec<f64> = out.state.energy.iter().map(|r| r.kinetic).collect();
        kins.sort_by(f64::total_cmp);
        let median = kins[kins.len() / 2];
        let max = kins[kins.len() - 1];
        assert!(max <= 10.0 * median, "kinetic blow-up: max {max}, median {median}");
        // Projection invariant.
        for i in 0..out.state.discriminator.count() {
            assert!(out.state.discriminator.positions[[i, 0]].abs() <= 20.0);
        }
    }

    #[test]
    fn recorded_potential_matches_stored_samples() {
        let out = train(&micro_config()).unwrap();
        let last = out.state.energy.last().unwrap();
        let recomputed = potential_energy_gap(
            out.state.discriminator.positions.view(),
            &out.target,
            &out.state.generator,
            10.0,
        );
        assert_eq!(last.potential.to_bits(), recomputed.to_bits());
    }

    #[test]
    fn training_is_deterministic() {
        let a = train(&micro_config()).unwrap();
        let b = train(&micro_config()).unwrap();
        assert_eq!(a.state.discriminator, b.state.discriminator);
        assert_eq!(a.state.generator, b.state.generator);
        assert_eq!(a.state.energy.len(), b.state.energy.len());
        for (ra, rb) in a.state.energy.iter().zip(&b.state.energy) {
            assert_eq!(ra.potential.to_bits(), rb.potential.to_bits());
        }
    }

    #[test]
    fn planted_zero_gap_start_stays_small() {
        let cfg = GanConfig {
            // Target IS the flat discriminator's generator law N(0, 0.5).
            target: TargetMixture {
                weights: vec![1.0],
                means: vec![0.0],
                stds: vec![0.5f64.sqrt()],
            },
            init_position_std: 0.0,
            particles: 100,
            target_samples: 200,
            generator_samples: 200,
            max_steps: 200,
            record_every: 5,
            mh: MhConfig {
                chains: 4,
                burn_in: 200,
                warm_steps: 8,
                thin: 3,
                ..MhConfig::default()
            },
            seed: 10,
            ..GanConfig::default()
        };
        let out = train(&cfg).unwrap();
        assert_eq!(out.state.energy[0].potential, 0.0);
        let max_abs = out
            .state
            .energy
            .iter()
            .map(|r| r.potential.abs())
            .fold(0.0f64, f64::max);
        assert!(max_abs < 0.5, "zero-gap start drifted to {max_abs}");
    }

    #[test]
    fn noise_off_training_is_monotone_after_burn_in() {
        // σ₁ = 0 with frozen generator samples: damped deterministic descent,
        // so the recorded potential decreases monotonically once velocity
        // transients die out.
        let cfg = GanConfig {
            sigma1: 0.0,
            gamma: 8.0,
            dt: 5e-3,
            lambda1: 0.01,
            freeze_generator: true,
            particles: 60,
            target_samples: 100,
            generator_samples: 100,
            max_steps: 1500,
            record_every: 10,
            mh: MhConfig {
                chains: 4,
                burn_in: 200,
                warm_steps: 8,
                thin: 3,
                ..MhConfig::default()
            },
            seed: 11,
            ..GanConfig::default()
        };
        let out = train(&cfg).unwrap();
        let rows = &out.state.energy;
        let burn = rows.len() / 5;
        for w in rows[burn..].windows(2) {
            let uphill = w[1].potential - w[0].potential;
            assert!(
                uphill <= 1e-9,
                "uphill step of {uphill} at step {}",
                w[1].step
            );
        }
        assert!(rows.last().unwrap().potential < rows[burn].potential);
    }

    #[test]
    fn config_validation_rejects_bad_values() {
        let bad = [
            GanConfig {
                sigma0: 0.0,
                ..GanConfig::default()
            },
            GanConfig {
                gamma: 0.0,
                ..GanConfig::default()
            },
            GanConfig {
                stop: StopRule {
                    fraction: 1.5,
                    consecutive: 50,
                },
                ..GanConfig::default()
            },
            GanConfig {
                mh: MhConfig {
                    chains: 0,
                    ..MhConfig::default()
                },
                ..GanConfig::default()
            },
            GanConfig {
                dt: 3.0,
                ..GanConfig::default()
            },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err());
        }
        assert!(GanConfig::default().validate().is_ok());
    }

    #[test]
    fn energy_csv_schema() {
        let rows = vec![
            EnergyRow {
                step: 0,
                potential: 1.5,
                kinetic: 0.75,
            },
            EnergyRow {
                step: 10,
                potential: 0.25,
                kinetic: 0.5,
            },
        ];
        let mut buf = Vec::new();
        write_energy_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "step,potential,kinetic\n0,1.5,0.75\n10,0.25,0.5\n");
    }
}
