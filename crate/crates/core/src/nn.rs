//! Fully-connected ReLU network over a flat parameter slice, with manual
//! backpropagation. Shared by the classifier and the noise predictor.
//!
//! Layer `l` maps `sizes[l]` inputs to `sizes[l + 1]` outputs and stores its
//! weights row-major (`[out][in]`) followed by its biases. Hidden layers use
//! ReLU; the last layer is linear.

use rand::Rng;

use crate::topology::LayoutTag;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mlp {
    sizes: Vec<usize>,
    offsets: Vec<usize>,
}

/// Activations recorded by a forward pass: `acts[0]` is the input,
/// `acts[l]` the (post-ReLU) output of layer `l - 1`, and the last entry the
/// linear output.
#[derive(Debug, Clone)]
pub struct Trace {
    acts: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("at least input and output")
    }
}

impl Mlp {
    /// # Panics
    /// If fewer than two sizes are given or any size is zero.
    pub fn new(sizes: Vec<usize>) -> Self {
        assert!(sizes.len() >= 2 && sizes.iter().all(|&s| s > 0), "bad layer sizes {sizes:?}");
        let mut offsets = Vec::with_capacity(sizes.len());
        let mut at = 0;
        for w in sizes.windows(2) {
            offsets.push(at);
            at += (w[0] + 1) * w[1];
        }
        offsets.push(at);
        Self { sizes, offsets }
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    /// `Σ (fan_in + 1) · fan_out`.
    pub fn param_count(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn layout_tag(&self, kind: &str) -> LayoutTag {
        let dims: Vec<String> = self.sizes.iter().map(usize::to_string).collect();
        LayoutTag::new(format!("{kind}:{}", dims.join("-")))
    }

    /// Glorot-uniform weights `U(−a, a)`, `a = sqrt(6 / (fan_in + fan_out))`,
    /// and zero biases.
    pub fn init<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut params = vec![0.0; self.param_count()];
        for (l, w) in self.sizes.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let start = self.offsets[l];
            for p in &mut params[start..start + fan_in * fan_out] {
                *p = rng.random_range(-a..a);
            }
        }
        params
    }

    /// Range of the final layer's weights and biases inside the flat vector.
    pub fn last_layer(&self) -> std::ops::Range<usize> {
        self.offsets[self.offsets.len() - 2]..self.param_count()
    }

    fn layer(&self, params: &[f64], input: &[f64], l: usize, out: &mut Vec<f64>) {
        let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
        let w = &params[self.offsets[l]..self.offsets[l] + fan_in * fan_out];
        let b = &params[self.offsets[l] + fan_in * fan_out..self.offsets[l + 1]];
        out.clear();
        out.extend(w.chunks_exact(fan_in).zip(b).map(|(row, bias)| dot(row, input) + bias));
        if l + 2 < self.sizes.len() {
            for v in out.iter_mut() {
                *v = v.max(0.0);
            }
        }
    }

    pub fn forward(&self, params: &[f64], input: &[f64]) -> Vec<f64> {
        debug_assert_eq!(input.len(), self.input_dim());
        let mut cur = input.to_vec();
        let mut next = Vec::new();
        for l in 0..self.sizes.len() - 1 {
            self.layer(params, &cur, l, &mut next);
            std::mem::swap(&mut cur, &mut next);
        }
        cur
    }

    pub fn forward_trace(&self, params: &[f64], input: &[f64]) -> Trace {
        let mut acts = Vec::with_capacity(self.sizes.len());
        acts.push(input.to_vec());
        for l in 0..self.sizes.len() - 1 {
            let mut out = Vec::with_capacity(self.sizes[l + 1]);
            self.layer(params, &acts[l], l, &mut out);
            acts.push(out);
        }
        Trace { acts }
    }

    /// Accumulates `∂L/∂params` into `grad` given `∂L/∂output`.
    pub fn backward(&self, params: &[f64], trace: &Trace, grad_out: &[f64], grad: &mut [f64]) {
        let mut delta = grad_out.to_vec();
        for l in (0..self.sizes.len() - 1).rev() {
            let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
            let w_at = self.offsets[l];
            let b_at = w_at + fan_in * fan_out;
            let input = &trace.acts[l];
            for (o, d) in delta.iter().enumerate() {
                if *d == 0.0 {
                    continue;
                }
                let row = &mut grad[w_at + o * fan_in..w_at + (o + 1) * fan_in];
                for (g, x) in row.iter_mut().zip(input) {
                    *g += d * x;
                }
                grad[b_at + o] += d;
            }
            if l == 0 {
                break;
            }
            let w = &params[w_at..b_at];
            let mut prev = vec![0.0; fan_in];
            for (o, d) in delta.iter().enumerate() {
                if *d == 0.0 {
                    continue;
                }
                for (p, a) in prev.iter_mut().zip(&w[o * fan_in..(o + 1) * fan_in]) {
                    *p += d * a;
                }
            }
            for (p, a) in prev.iter_mut().zip(input) {
                if *a <= 0.0 {
                    *p = 0.0;
                }
            }
            delta = prev;
        }
    }
}

/// Dot product with four independent accumulators so the loop vectorizes.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn param_count_matches_layout() {
        let m = Mlp::new(vec![3, 5, 2]);
        assert_eq!(m.param_count(), 4 * 5 + 6 * 2);
        assert_eq!(m.last_layer(), 20..32);
        assert_eq!(m.layout_tag("clf").as_str(), "clf:3-5-2");
    }

    #[test]
    fn glorot_bounds() {
        let m = Mlp::new(vec![4, 6, 2]);
        let p = m.init(&mut rng::seeded(1));
        let a = (6.0f64 / 10.0).sqrt();
        assert!(p[..24].iter().all(|w| w.abs() < a));
        assert!(p[24..30].iter().all(|&b| b == 0.0));
    }

    #[test]
    fn forward_matches_trace() {
        let m = Mlp::new(vec![3, 4, 4, 2]);
        let p = m.init(&mut rng::seeded(2));
        let x = [0.3, -1.2, 0.8];
        assert_eq!(m.forward(&p, &x), m.forward_trace(&p, &x).output());
    }

    #[test]
    fn backward_matches_finite_differences() {
        // L = Σ c_k · out_k for fixed c.
        let m = Mlp::new(vec![3, 4, 2]);
        let p = m.init(&mut rng::seeded(3));
        let x = [0.5, -0.4, 1.1];
        let c = [0.7, -1.3];
        let loss = |p: &[f64]| m.forward(p, &x).iter().zip(&c).map(|(o, c)| o * c).sum::<f64>();
        let mut grad = vec![0.0; m.param_count()];
        m.backward(&p, &m.forward_trace(&p, &x), &c, &mut grad);
        for k in 0..p.len() {
            let mut hi = p.clone();
            let mut lo = p.clone();
            hi[k] += 1e-6;
            lo[k] -= 1e-6;
            let fd = (loss(&hi) - loss(&lo)) / 2e-6;
            assert!((fd - grad[k]).abs() < 1e-6, "param {k}: {fd} vs {}", grad[k]);
        }
    }
}
