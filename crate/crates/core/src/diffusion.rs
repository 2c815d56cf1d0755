//! Class-conditional denoising diffusion over feature vectors.
//!
//! The noise predictor is an MLP fed with the noisy point, a one-hot class
//! code (the extra last slot is the null class used for classifier-free
//! guidance) and a sinusoidal timestep embedding. Sampling runs the
//! deterministic DDIM (η = 0) update on an evenly spaced sub-sequence of
//! timesteps.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::Mlp;
use crate::optim::Adam;
use crate::rng::{self, Purpose, StreamRng};
use crate::topology::ParamVector;

#[derive(Debug, Error, PartialEq)]
pub enum DiffusionError {
    #[error("timestep {h} outside 0..={steps}")]
    TimestepOutOfRange { h: usize, steps: usize },
    #[error("vector has {found} entries, model dimension is {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("class {class} outside 0..{classes}")]
    BadClass { class: usize, classes: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("sample steps {steps} must be in 1..={max}")]
    BadSampleSteps { steps: usize, max: usize },
}

/// Linear beta schedule with cumulative products `ᾱ_h = Π_{s ≤ h} (1 − β_s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    betas: Vec<f64>,
    alpha_bars: Vec<f64>,
}

impl NoiseSchedule {
    /// `steps` betas evenly spaced over `[beta_start, beta_end]`.
    pub fn linear(steps: usize, beta_start: f64, beta_end: f64) -> Self {
        assert!(steps >= 1);
        let betas: Vec<f64> = (0..steps)
            .map(|i| {
                let f = if steps == 1 { 0.0 } else { i as f64 / (steps - 1) as f64 };
                beta_start + f * (beta_end - beta_start)
            })
            .collect();
        let mut alpha_bars = Vec::with_capacity(steps + 1);
        alpha_bars.push(1.0);
        for b in &betas {
            let prev = *alpha_bars.last().unwrap();
            alpha_bars.push(prev * (1.0 - b));
        }
        Self { betas, alpha_bars }
    }

    /// The common 1e-4..0.02 range rescaled by `1000 / steps`, so that a
    /// short chain still ends close to pure noise.
    pub fn scaled_linear(steps: usize) -> Self {
        let scale = 1000.0 / steps as f64;
        Self::linear(steps, 1e-4 * scale, (0.02 * scale).min(0.999))
    }

    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    /// `β_h` for `h ∈ 1..=H`.
    pub fn beta(&self, h: usize) -> f64 {
        self.betas[h - 1]
    }

    /// `ᾱ_h` for `h ∈ 0..=H`, with `ᾱ_0 = 1`.
    pub fn alpha_bar(&self, h: usize) -> f64 {
        self.alpha_bars[h]
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bars
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiffusionConfig {
    /// Chain length `H`.
    #[serde(rename = "H", default = "default_steps")]
    pub steps: usize,
    /// DDIM steps `S` used when sampling.
    #[serde(default = "default_sample_steps")]
    pub sample_steps: usize,
    /// Classifier-free guidance scale `g`.
    #[serde(default = "default_guidance")]
    pub guidance: f64,
    #[serde(default = "default_p_uncond")]
    pub p_uncond: f64,
    /// First round at which data is generated (`R`).
    #[serde(rename = "warmup_R", default = "default_warmup")]
    pub warmup: usize,
    /// Generated samples per regeneration, split evenly over the classes.
    #[serde(default = "default_gen_per_period")]
    pub gen_per_period: usize,
    #[serde(default = "default_gen_period")]
    pub gen_period_rounds: usize,
    /// Size of the validation draw from the generated set.
    #[serde(default = "default_val_size")]
    pub val_size: usize,
    #[serde(default = "default_diffusion_lr")]
    pub lr: f64,
    /// Optimizer steps per round.
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default = "default_diffusion_batch")]
    pub batch: usize,
    #[serde(default = "default_diffusion_hidden")]
    pub hidden_sizes: Vec<usize>,
    #[serde(default = "default_time_embed")]
    pub time_embed: usize,
    /// Clamp for each coordinate of the predicted clean point while sampling.
    #[serde(default)]
    pub clip_sample: Option<f64>,
    /// Without `clip_sample`, clamp the predicted clean point to the
    /// bounding box of the client's own features.
    #[serde(default = "default_clip_to_data")]
    pub clip_to_data: bool,
}

fn default_steps() -> usize {
    200
}
fn default_sample_steps() -> usize {
    20
}
fn default_guidance() -> f64 {
    1.0
}
fn default_p_uncond() -> f64 {
    0.1
}
fn default_warmup() -> usize {
    50
}
fn default_gen_per_period() -> usize {
    1000
}
fn default_gen_period() -> usize {
    10
}
fn default_val_size() -> usize {
    100
}
fn default_diffusion_lr() -> f64 {
    0.001
}
fn default_iterations() -> usize {
    25
}
fn default_diffusion_batch() -> usize {
    32
}
fn default_diffusion_hidden() -> Vec<usize> {
    vec![64, 64]
}
fn default_clip_to_data() -> bool {
    true
}
fn default_time_embed() -> usize {
    8
}

impl Default for DiffusionConfig {
    fn default() -> Self {
        Self {
            steps: default_steps(),
            sample_steps: default_sample_steps(),
            guidance: default_guidance(),
            p_uncond: default_p_uncond(),
            warmup: default_warmup(),
            gen_per_period: default_gen_per_period(),
            gen_period_rounds: default_gen_period(),
            val_size: default_val_size(),
            lr: default_diffusion_lr(),
            iterations: default_iterations(),
            batch: default_diffusion_batch(),
            hidden_sizes: default_diffusion_hidden(),
            time_embed: default_time_embed(),
            clip_sample: None,
            clip_to_data: default_clip_to_data(),
        }
    }
}

/// Anything that predicts the noise in `x_h`.
pub trait NoisePredictor {
    fn predict_noise(&self, x_h: &[f64], class: Option<usize>, h: usize) -> Vec<f64>;
}

/// `(1 + g) ε(x, c) − g ε(x, ∅)`; `g = 0` skips the unconditional pass.
pub fn guided_noise<P: NoisePredictor + ?Sized>(model: &P, x: &[f64], class: usize, h: usize, guidance: f64) -> Vec<f64> {
    let cond = model.predict_noise(x, Some(class), h);
    if guidance == 0.0 {
        return cond;
    }
    let uncond = model.predict_noise(x, None, h);
    cond.iter().zip(&uncond).map(|(c, u)| (1.0 + guidance) * c - guidance * u).collect()
}

/// `S` evenly spaced timesteps from `H` down to at least 1.
pub fn sampling_timesteps(chain: usize, steps: usize) -> Vec<usize> {
    (1..=steps).rev().map(|s| ((s * chain) as f64 / steps as f64).round().max(1.0) as usize).collect()
}

/// Per-coordinate `(low, high)` bounds.
pub type Bounds = [(f64, f64)];

/// `[−c, c]` in every coordinate.
pub fn symmetric_bounds(c: f64, dim: usize) -> Vec<(f64, f64)> {
    vec![(-c, c); dim]
}

/// Smallest box containing every point, or `None` without points.
pub fn bounding_box<'a>(points: impl IntoIterator<Item = &'a [f64]>) -> Option<Vec<(f64, f64)>> {
    let mut points = points.into_iter();
    let mut bounds: Vec<(f64, f64)> = points.next()?.iter().map(|&v| (v, v)).collect();
    for p in points {
        for (b, &v) in bounds.iter_mut().zip(p) {
            *b = (b.0.min(v), b.1.max(v));
        }
    }
    Some(bounds)
}

/// Runs the η = 0 DDIM update from `x` at `t = H` down to `t = 0`:
/// `x0 = (x_t − sqrt(1 − ᾱ_t) ε) / sqrt(ᾱ_t)`,
/// `x_prev = sqrt(ᾱ_prev) x0 + sqrt(1 − ᾱ_prev) ε`.
/// With `clip`, every coordinate of the predicted `x0` is clamped to its
/// bounds before the update.
pub fn ddim_sample<P: NoisePredictor + ?Sized>(
    model: &P,
    schedule: &NoiseSchedule,
    class: usize,
    guidance: f64,
    steps: usize,
    clip: Option<&Bounds>,
    mut x: Vec<f64>,
) -> Vec<f64> {
    let ts = sampling_timesteps(schedule.steps(), steps);
    for (k, &t) in ts.iter().enumerate() {
        let prev = ts.get(k + 1).copied().unwrap_or(0);
        let eps = guided_noise(model, &x, class, t, guidance);
        let ab_t = schedule.alpha_bar(t);
        let ab_prev = schedule.alpha_bar(prev);
        let (sa, sb) = (ab_t.sqrt(), (1.0 - ab_t).sqrt());
        for (j, (xi, e)) in x.iter_mut().zip(&eps).enumerate() {
            let mut x0 = (*xi - sb * e) / sa;
            if let Some(&(lo, hi)) = clip.and_then(|b| b.get(j)) {
                x0 = x0.clamp(lo, hi);
            }
            *xi = ab_prev.sqrt() * x0 + (1.0 - ab_prev).sqrt() * e;
        }
    }
    x
}

/// One training draw: clean point, conditioning class (`None` is the null
/// class), timestep and the injected noise.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseDraw {
    pub x0: Vec<f64>,
    pub class: Option<usize>,
    pub h: usize,
    pub eps: Vec<f64>,
}

/// `x_h = sqrt(ᾱ_h) · x0 + sqrt(1 − ᾱ_h) · eps`.
pub fn forward_noise(schedule: &NoiseSchedule, x0: &[f64], h: usize, eps: &[f64]) -> Result<Vec<f64>, DiffusionError> {
    if h > schedule.steps() {
        return Err(DiffusionError::TimestepOutOfRange { h, steps: schedule.steps() });
    }
    if eps.len() != x0.len() {
        return Err(DiffusionError::DimensionMismatch { expected: x0.len(), found: eps.len() });
    }
    let ab = schedule.alpha_bar(h);
    let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
    Ok(x0.iter().zip(eps).map(|(x, e)| a * x + b * e).collect())
}

/// Mean over draws of `‖predict(x_h, c, h) − eps‖²`.
pub fn denoising_loss<P: NoisePredictor + ?Sized>(model: &P, schedule: &NoiseSchedule, draws: &[NoiseDraw]) -> Result<f64, DiffusionError> {
    if draws.is_empty() {
        return Err(DiffusionError::EmptyBatch);
    }
    let mut total = 0.0;
    for d in draws {
        let x_h = forward_noise(schedule, &d.x0, d.h, &d.eps)?;
        let pred = model.predict_noise(&x_h, d.class, d.h);
        total += pred.iter().zip(&d.eps).map(|(p, e)| (p - e).powi(2)).sum::<f64>();
    }
    Ok(total / draws.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionModel {
    net: Mlp,
    params: ParamVector,
    schedule: Arc<NoiseSchedule>,
    dim: usize,
    classes: usize,
    time_embed: usize,
}

impl DiffusionModel {
    pub fn new(dim: usize, classes: usize, cfg: &DiffusionConfig, rng: &mut StreamRng) -> Self {
        let schedule = Arc::new(NoiseSchedule::scaled_linear(cfg.steps));
        Self::with_schedule(dim, classes, &cfg.hidden_sizes, cfg.time_embed, schedule, rng)
    }

    pub fn with_schedule(
        dim: usize,
        classes: usize,
        hidden: &[usize],
        time_embed: usize,
        schedule: Arc<NoiseSchedule>,
        rng: &mut StreamRng,
    ) -> Self {
        let mut sizes = vec![dim + classes + 1 + time_embed];
        sizes.extend_from_slice(hidden);
        sizes.push(dim);
        let net = Mlp::new(sizes);
        let params = ParamVector::new(net.init(rng), net.layout_tag("diffusion"));
        Self { net, params, schedule, dim, classes, time_embed }
    }

    pub fn params(&self) -> &ParamVector {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamVector {
        &mut self.params
    }

    pub fn set_params(&mut self, params: ParamVector) {
        assert_eq!(params.layout(), self.params.layout());
        self.params = params;
    }

    pub fn schedule(&self) -> &NoiseSchedule {
        &self.schedule
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    /// Fourier features of `u = h / H`: `sin(2^k π u / 2)`, `cos(2^k π u / 2)`
    /// for `k < time_embed / 2`, plus `u` itself when `time_embed` is odd.
    fn time_embedding(&self, h: usize, out: &mut Vec<f64>) {
        let u = h as f64 / self.schedule.steps() as f64;
        let half = self.time_embed / 2;
        for k in 0..half {
            out.push((u * std::f64::consts::FRAC_PI_2 * (1u64 << k) as f64).sin());
        }
        for k in 0..half {
            out.push((u * std::f64::consts::FRAC_PI_2 * (1u64 << k) as f64).cos());
        }
        if self.time_embed % 2 == 1 {
            out.push(u);
        }
    }

    fn net_input(&self, x_h: &[f64], class: Option<usize>, h: usize) -> Vec<f64> {
        let mut input = Vec::with_capacity(self.net.input_dim());
        input.extend_from_slice(x_h);
        let slot = class.unwrap_or(self.classes);
        input.extend((0..=self.classes).map(|c| if c == slot { 1.0 } else { 0.0 }));
        self.time_embedding(h, &mut input);
        input
    }

    /// Draws `h ~ U{1..H}` and `eps ~ N(0, I)` per item, dropping the class
    /// to the null slot with probability `p_uncond`.
    pub fn draw_noise(&self, batch: &[(Vec<f64>, usize)], p_uncond: f64, rng: &mut StreamRng) -> Vec<NoiseDraw> {
        batch
            .iter()
            .map(|(x0, c)| {
                let h = rng.random_range(1..=self.schedule.steps());
                let eps = (0..x0.len()).map(|_| rng.sample(StandardNormal)).collect();
                let class = if rng.random::<f64>() < p_uncond { None } else { Some(*c) };
                NoiseDraw { x0: x0.clone(), class, h, eps }
            })
            .collect()
    }

    fn check_draws(&self, draws: &[NoiseDraw]) -> Result<(), DiffusionError> {
        if draws.is_empty() {
            return Err(DiffusionError::EmptyBatch);
        }
        for d in draws {
            if d.x0.len() != self.dim {
                return Err(DiffusionError::DimensionMismatch { expected: self.dim, found: d.x0.len() });
            }
            if let Some(c) = d.class.filter(|&c| c >= self.classes) {
                return Err(DiffusionError::BadClass { class: c, classes: self.classes });
            }
        }
        Ok(())
    }

    /// Loss and gradient on explicit draws.
    pub fn loss_and_grad_on(&self, draws: &[NoiseDraw]) -> Result<(f64, ParamVector), DiffusionError> {
        self.check_draws(draws)?;
        let params = self.params.values();
        let mut grad = vec![0.0; params.len()];
        let scale = 1.0 / draws.len() as f64;
        let mut loss = 0.0;
        for d in draws {
            let x_h = forward_noise(&self.schedule, &d.x0, d.h, &d.eps)?;
            let trace = self.net.forward_trace(params, &self.net_input(&x_h, d.class, d.h));
            let diff: Vec<f64> = trace.output().iter().zip(&d.eps).map(|(p, e)| p - e).collect();
            loss += diff.iter().map(|v| v * v).sum::<f64>();
            let g: Vec<f64> = diff.iter().map(|v| 2.0 * v * scale).collect();
            self.net.backward(params, &trace, &g, &mut grad);
        }
        Ok((loss * scale, ParamVector::new(grad, self.params.layout().clone())))
    }

    /// Classifier-free training objective on `(x0, class)` pairs.
    pub fn loss_and_grad(&self, batch: &[(Vec<f64>, usize)], p_uncond: f64, seed: u64) -> Result<(f64, ParamVector), DiffusionError> {
        if batch.is_empty() {
            return Err(DiffusionError::EmptyBatch);
        }
        let draws = self.draw_noise(batch, p_uncond, &mut rng::seeded(seed));
        self.loss_and_grad_on(&draws)
    }

    /// `iterations` Adam steps on random mini-batches of `data`.
    pub fn train(&mut self, data: &[(Vec<f64>, usize)], cfg: &DiffusionConfig, opt: &mut Adam, rng: &mut StreamRng) -> Option<f64> {
        if data.is_empty() {
            return None;
        }
        let mut last = None;
        let mut batch = Vec::with_capacity(cfg.batch);
        for _ in 0..cfg.iterations {
            batch.clear();
            for _ in 0..cfg.batch.max(1) {
                batch.push(data[rng.random_range(0..data.len())].clone());
            }
            let draws = self.draw_noise(&batch, cfg.p_uncond, rng);
            let (loss, grad) = self.loss_and_grad_on(&draws).expect("validated training data");
            opt.step(self.params.values_mut(), grad.values());
            last = Some(loss);
        }
        last
    }

    /// Timesteps visited by an `S`-step sampler: `H = τ_S > ... > τ_1 ≥ 1`.
    pub fn sampling_timesteps(&self, steps: usize) -> Vec<usize> {
        sampling_timesteps(self.schedule.steps(), steps)
    }

    /// Deterministic DDIM trajectory from `x_H ~ N(0, I)` (drawn from
    /// `seed`) with guided noise `(1 + g) ε_cond − g ε_uncond`.
    pub fn sample(&self, class: usize, guidance: f64, steps: usize, seed: u64) -> Result<Vec<f64>, DiffusionError> {
        self.sample_clipped(class, guidance, steps, None, seed)
    }

    /// [`sample`](Self::sample) with the predicted clean point clamped to
    /// `clip` at every step.
    pub fn sample_clipped(
        &self,
        class: usize,
        guidance: f64,
        steps: usize,
        clip: Option<&Bounds>,
        seed: u64,
    ) -> Result<Vec<f64>, DiffusionError> {
        if class >= self.classes {
            return Err(DiffusionError::BadClass { class, classes: self.classes });
        }
        if steps == 0 || steps > self.schedule.steps() {
            return Err(DiffusionError::BadSampleSteps { steps, max: self.schedule.steps() });
        }
        let mut rng = rng::seeded(seed);
        let x: Vec<f64> = (0..self.dim).map(|_| rng.sample(StandardNormal)).collect();
        Ok(ddim_sample(self, &self.schedule, class, guidance, steps, clip, x))
    }

    pub fn guided_noise(&self, x: &[f64], class: usize, h: usize, guidance: f64) -> Vec<f64> {
        guided_noise(self, x, class, h, guidance)
    }

    /// `per_class` samples for every class, labeled with the class they were
    /// conditioned on. Sample `k` uses the seed derived from `(seed, k)`.
    pub fn generate_dataset(
        &self,
        per_class: usize,
        guidance: f64,
        steps: usize,
        clip: Option<&Bounds>,
        seed: u64,
    ) -> Result<Vec<(Vec<f64>, usize)>, DiffusionError> {
        let mut out = Vec::with_capacity(per_class * self.classes);
        for c in 0..self.classes {
            for k in 0..per_class {
                let s = rng::derive_seed(seed, &[Purpose::Generate as u64, c as u64, k as u64]);
                out.push((self.sample_clipped(c, guidance, steps, clip, s)?, c));
            }
        }
        Ok(out)
    }
}

impl NoisePredictor for DiffusionModel {
    fn predict_noise(&self, x_h: &[f64], class: Option<usize>, h: usize) -> Vec<f64> {
        self.net.forward(self.params.values(), &self.net_input(x_h, class, h))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(dim: usize, classes: usize, seed: u64) -> DiffusionModel {
        let cfg = DiffusionConfig { steps: 50, hidden_sizes: vec![6], time_embed: 4, ..DiffusionConfig::default() };
        DiffusionModel::new(dim, classes, &cfg, &mut rng::seeded(seed))
    }

    #[test]
    fn schedule_is_strictly_decreasing() {
        let s = NoiseSchedule::scaled_linear(200);
        assert_eq!(s.alpha_bar(0), 1.0);
        assert!(s.alpha_bars().windows(2).all(|w| w[1] < w[0]));
        assert!(s.alpha_bar(200) > 0.0 && s.alpha_bar(200) < 1e-3);
        let plain = NoiseSchedule::linear(200, 1e-4, 0.02);
        assert!((plain.beta(1) - 1e-4).abs() < 1e-15 && (plain.beta(200) - 0.02).abs() < 1e-15);
    }

    #[test]
    fn forward_noise_edges() {
        let s = NoiseSchedule::scaled_linear(100);
        let x0 = [1.0, -2.0];
        assert_eq!(forward_noise(&s, &x0, 0, &[0.3, 0.4]).unwrap(), x0.to_vec());
        let shrunk = forward_noise(&s, &x0, 40, &[0.0, 0.0]).unwrap();
        let a = s.alpha_bar(40).sqrt();
        assert_eq!(shrunk, vec![a * 1.0, a * -2.0]);
        assert_eq!(
            forward_noise(&s, &x0, 101, &[0.0, 0.0]).unwrap_err(),
            DiffusionError::TimestepOutOfRange { h: 101, steps: 100 }
        );
    }

    /// Recovers the noise exactly when every clean point is known to be `x0`.
    struct KnownOrigin<'a> {
        x0: Vec<f64>,
        schedule: &'a NoiseSchedule,
    }

    impl NoisePredictor for KnownOrigin<'_> {
        fn predict_noise(&self, x_h: &[f64], _class: Option<usize>, h: usize) -> Vec<f64> {
            let ab = self.schedule.alpha_bar(h);
            x_h.iter().zip(&self.x0).map(|(x, x0)| (x - ab.sqrt() * x0) / (1.0 - ab).sqrt()).collect()
        }
    }

    /// Exact `E[ε | x_h]` for class-conditional isotropic Gaussians
    /// `N(μ_c, s² I)`; the null class sees the equal-weight mixture.
    struct GaussianOracle<'a> {
        means: Vec<Vec<f64>>,
        s: f64,
        schedule: &'a NoiseSchedule,
    }

    impl NoisePredictor for GaussianOracle<'_> {
        fn predict_noise(&self, x_h: &[f64], class: Option<usize>, h: usize) -> Vec<f64> {
            let ab = self.schedule.alpha_bar(h);
            let var = ab * self.s * self.s + 1.0 - ab;
            let eps_for = |m: &[f64]| -> Vec<f64> {
                x_h.iter().zip(m).map(|(x, m)| (1.0 - ab).sqrt() * (x - ab.sqrt() * m) / var).collect()
            };
            match class {
                Some(c) => eps_for(&self.means[c]),
                None => {
                    let logw: Vec<f64> = self
                        .means
                        .iter()
                        .map(|m| -x_h.iter().zip(m).map(|(x, m)| (x - ab.sqrt() * m).powi(2)).sum::<f64>() / (2.0 * var))
                        .collect();
                    let w = crate::classifier::softmax(&logw);
                    let mut out = vec![0.0; x_h.len()];
                    for (m, wk) in self.means.iter().zip(&w) {
                        for (o, e) in out.iter_mut().zip(eps_for(m)) {
                            *o += wk * e;
                        }
                    }
                    out
                }
            }
        }
    }

    #[test]
    fn sampler_recovers_gaussian_under_exact_noise() {
        let schedule = NoiseSchedule::scaled_linear(200);
        let oracle = GaussianOracle { means: vec![vec![2.0, -1.0], vec![-2.0, 1.0]], s: 0.5, schedule: &schedule };
        let n = 2000;
        let mut rng = rng::seeded(11);
        let draws: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let x: Vec<f64> = (0..2).map(|_| rng.sample(StandardNormal)).collect();
                ddim_sample(&oracle, &schedule, 0, 0.0, 50, None, x)
            })
            .collect();
        for d in 0..2 {
            let mean = draws.iter().map(|x| x[d]).sum::<f64>() / n as f64;
            let sd = (draws.iter().map(|x| (x[d] - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
            assert!((mean - oracle.means[0][d]).abs() < 0.05, "mean {mean}");
            assert!((sd - 0.5).abs() < 0.05, "sd {sd}");
        }
        // Guidance sharpens towards the conditioned class without moving
        // samples to the other mode.
        let guided = ddim_sample(&oracle, &schedule, 1, 2.0, 50, None, vec![0.3, -0.2]);
        assert!(guided[0] < 0.0 && guided[1] > 0.0);
    }

    #[test]
    fn perfect_predictor_has_zero_loss() {
        let s = NoiseSchedule::scaled_linear(100);
        let m = tiny(3, 2, 1);
        let x0 = vec![0.5, -1.0, 2.0];
        let draws = m.draw_noise(&vec![(x0.clone(), 1); 16], 0.1, &mut rng::seeded(4));
        let oracle = KnownOrigin { x0, schedule: &s };
        assert!(denoising_loss(&oracle, &s, &draws).unwrap() < 1e-20);
    }

    #[test]
    fn loss_matches_generic_objective() {
        let m = tiny(2, 3, 2);
        let draws = m.draw_noise(&[(vec![1.0, 0.0], 0), (vec![0.0, 1.0], 2)], 0.5, &mut rng::seeded(5));
        let (loss, _) = m.loss_and_grad_on(&draws).unwrap();
        assert!((loss - denoising_loss(&m, m.schedule(), &draws).unwrap()).abs() < 1e-12);
        assert_eq!(m.loss_and_grad(&[], 0.1, 0).unwrap_err(), DiffusionError::EmptyBatch);
    }

    #[test]
    fn sampling_is_deterministic_and_guidance_off_is_conditional() {
        let m = tiny(3, 2, 3);
        assert_eq!(m.sample(1, 1.0, 10, 9).unwrap(), m.sample(1, 1.0, 10, 9).unwrap());
        assert_ne!(m.sample(1, 1.0, 10, 9).unwrap(), m.sample(1, 1.0, 10, 10).unwrap());
        // g = 0 equals a trajectory driven only by the conditional branch.
        let mut rng = rng::seeded(9);
        let mut x: Vec<f64> = (0..3).map(|_| rng.sample(StandardNormal)).collect();
        let ts = m.sampling_timesteps(10);
        for (k, &t) in ts.iter().enumerate() {
            let prev = ts.get(k + 1).copied().unwrap_or(0);
            let e = m.predict_noise(&x, Some(1), t);
            let (ab, abp) = (m.schedule().alpha_bar(t), m.schedule().alpha_bar(prev));
            x = x.iter().zip(&e).map(|(xi, ei)| abp.sqrt() * (xi - (1.0 - ab).sqrt() * ei) / ab.sqrt() + (1.0 - abp).sqrt() * ei).collect();
        }
        for (a, b) in m.sample(1, 0.0, 10, 9).unwrap().iter().zip(&x) {
            assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0), "{a} vs {b}");
        }
        assert!(matches!(m.sample(0, 0.0, 0, 1), Err(DiffusionError::BadSampleSteps { .. })));
        assert!(matches!(m.sample(5, 0.0, 3, 1), Err(DiffusionError::BadClass { .. })));
    }

    #[test]
    fn sampling_timesteps_are_even() {
        let m = tiny(2, 2, 1);
        assert_eq!(m.sampling_timesteps(5), vec![50, 40, 30, 20, 10]);
        assert_eq!(m.sampling_timesteps(1), vec![50]);
    }

    #[test]
    fn generated_set_is_balanced() {
        let m = tiny(2, 3, 4);
        let set = m.generate_dataset(10, 1.0, 5, None, 1).unwrap();
        assert_eq!(set.len(), 30);
        for c in 0..3 {
            assert_eq!(set.iter().filter(|(_, y)| *y == c).count(), 10);
        }
    }

    #[test]
    fn clipped_samples_stay_in_the_box() {
        let m = tiny(3, 2, 4);
        let bounds = vec![(-0.5, 0.5), (1.0, 2.0), (0.0, 0.0)];
        for (x, _) in m.generate_dataset(10, 2.0, 5, Some(&bounds), 3).unwrap() {
            for (v, (lo, hi)) in x.iter().zip(&bounds) {
                assert!(v >= lo && v <= hi, "{v} outside [{lo}, {hi}]");
            }
        }
        assert_eq!(bounding_box(std::iter::empty::<&[f64]>()), None);
        assert_eq!(symmetric_bounds(2.0, 2), vec![(-2.0, 2.0); 2]);
    }

    #[test]
    fn defaults() {
        let cfg = DiffusionConfig::default();
        assert_eq!(cfg.lr, 0.001);
        assert_eq!(cfg.gen_per_period, 1000);
        assert_eq!(cfg.gen_period_rounds, 10);
        assert_eq!(cfg.val_size, 100);
        assert!(cfg.clip_to_data);
        assert_eq!(cfg.clip_sample, None);
    }
}
