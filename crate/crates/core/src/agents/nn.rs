//! Fully connected networks with tanh hidden units, manual backprop and Adam.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Multi-layer perceptron with tanh hidden layers and a linear output layer.
///
/// Parameters are stored flat, layer by layer, each layer as its
/// row-major `out x in` weight matrix followed by its bias.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

/// Layer activations from a forward pass, input first.
#[derive(Clone, Debug, Default)]
pub struct ForwardCache {
    acts: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.acts.last().map_or(&[], Vec::as_slice)
    }
}

impl Mlp {
    /// Gaussian init with variance `1 / fan_in` in hidden layers and
    /// `output_gain^2 / fan_in` in the output layer; zero biases.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], output_gain: f64, rng: &mut R) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Shape(format!("invalid layer sizes {sizes:?}")));
        }
        let mut params = Vec::with_capacity(Self::count(sizes));
        let n_layers = sizes.len() - 1;
        for l in 0..n_layers {
            let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
            let gain = if l + 1 == n_layers { output_gain } else { 1.0 };
            let sd = gain / (fan_in as f64).sqrt();
            for _ in 0..fan_in * fan_out {
                let z: f64 = StandardNormal.sample(rng);
                params.push(sd * z);
            }
            params.extend(std::iter::repeat_n(0.0, fan_out));
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            params,
        })
    }

    pub fn from_parts(sizes: Vec<usize>, params: Vec<f64>) -> Result<Self> {
        if sizes.len() < 2 || params.len() != Self::count(&sizes) {
            return Err(Error::Shape(format!(
                "{} parameters do not fit layer sizes {sizes:?}",
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Shape("non-finite network parameter".into()));
        }
        Ok(Self { sizes, params })
    }

    fn count(sizes: &[usize]) -> usize {
        sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().expect("at least two sizes")
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut cache = ForwardCache::default();
        self.forward_cached(x, &mut cache);
        cache.acts.pop().unwrap_or_default()
    }

    pub fn forward_cached(&self, x: &[f64], cache: &mut ForwardCache) {
        debug_assert_eq!(x.len(), self.input_dim());
        cache.acts.clear();
        cache.acts.push(x.to_vec());
        let n_layers = self.sizes.len() - 1;
        let mut off = 0;
        for l in 0..n_layers {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let w = &self.params[off..off + n_in * n_out];
            let b = &self.params[off + n_in * n_out..off + n_in * n_out + n_out];
            let input = &cache.acts[l];
            let mut out = Vec::with_capacity(n_out);
            for o in 0..n_out {
                let row = &w[o * n_in..(o + 1) * n_in];
                let z: f64 = b[o] + row.iter().zip(input).map(|(a, b)| a * b).sum::<f64>();
                out.push(if l + 1 < n_layers { z.tanh() } else { z });
            }
            cache.acts.push(out);
            off += n_in * n_out + n_out;
        }
    }

    /// Accumulates into `grad` the gradient of a scalar loss whose derivative
    /// with respect to the network output is `grad_out`.
    pub fn backward(&self, cache: &ForwardCache, grad_out: &[f64], grad: &mut [f64]) {
        debug_assert_eq!(grad.len(), self.params.len());
        let n_layers = self.sizes.len() - 1;
        let mut offsets = Vec::with_capacity(n_layers);
        let mut off = 0;
        for l in 0..n_layers {
            offsets.push(off);
            off += self.sizes[l] * self.sizes[l + 1] + self.sizes[l + 1];
        }
        let mut delta = grad_out.to_vec();
        for l in (0..n_layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let off = offsets[l];
            let input = &cache.acts[l];
            for o in 0..n_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                let g = &mut grad[off + o * n_in..off + (o + 1) * n_in];
                for (gi, xi) in g.iter_mut().zip(input) {
                    *gi += d * xi;
                }
                grad[off + n_in * n_out + o] += d;
            }
            if l > 0 {
                let w = &self.params[off..off + n_in * n_out];
                let mut prev = vec![0.0; n_in];
                for o in 0..n_out {
                    let d = delta[o];
                    for (p, wi) in prev.iter_mut().zip(&w[o * n_in..(o + 1) * n_in]) {
                        *p += d * wi;
                    }
                }
                for (p, a) in prev.iter_mut().zip(input) {
                    *p *= 1.0 - a * a;
                }
                delta = prev;
            }
        }
    }
}

/// Adam optimizer state for one flat parameter vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    /// One descent step on `params` along `grad`.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let mh = self.m[i] / bc1;
            let vh = self.v[i] / bc2;
            params[i] -= self.lr * mh / (vh.sqrt() + self.eps);
        }
    }
}

/// Scales all gradient slices jointly so their global L2 norm is at most `max_norm`.
/// Returns the norm before scaling.
pub fn clip_grad_norm(grads: &mut [&mut [f64]], max_norm: f64) -> f64 {
    let norm = grads
        .iter()
        .flat_map(|g| g.iter())
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        for g in grads.iter_mut() {
            g.iter_mut().for_each(|x| *x *= s);
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{substream, Stream};

    #[test]
    fn finite_difference_gradient() {
        let mut rng = substream(3, Stream::Init);
        let net = Mlp::new(&[3, 5, 4, 2], 1.0, &mut rng).unwrap();
        let x = [0.3, -0.7, 1.1];
        let c = [0.8, -1.3];
        let loss = |n: &Mlp| n.forward(&x).iter().zip(c).map(|(o, c)| c * o * o).sum::<f64>();
        let mut cache = ForwardCache::default();
        net.forward_cached(&x, &mut cache);
        let out = cache.output().to_vec();
        let grad_out: Vec<f64> = out.iter().zip(c).map(|(o, c)| 2.0 * c * o).collect();
        let mut grad = vec![0.0; net.n_params()];
        net.backward(&cache, &grad_out, &mut grad);
        let h = 1e-6;
        for i in 0..net.n_params() {
            let mut p = net.clone();
            p.params_mut()[i] += h;
            let mut m = net.clone();
            m.params_mut()[i] -= h;
            let fd = (loss(&p) - loss(&m)) / (2.0 * h);
            let denom = fd.abs().max(grad[i].abs()).max(1e-8);
            assert!((fd - grad[i]).abs() / denom < 1e-4 || (fd - grad[i]).abs() < 1e-9, "param {i}: {fd} vs {}", grad[i]);
        }
    }

    #[test]
    fn shapes_checked() {
        let mut rng = substream(1, Stream::Init);
        assert!(Mlp::new(&[3], 1.0, &mut rng).is_err());
        let net = Mlp::new(&[8, 64, 64, 3], 0.01, &mut rng).unwrap();
        assert_eq!(net.n_params(), 8 * 64 + 64 + 64 * 64 + 64 + 64 * 3 + 3);
        assert!(Mlp::from_parts(vec![8, 3], vec![0.0; 5]).is_err());
        let back = Mlp::from_parts(net.sizes().to_vec(), net.params().to_vec()).unwrap();
        assert_eq!(back, net);
    }

    #[test]
    fn adam_minimizes_quadratic() {
        let mut p = vec![3.0, -2.0];
        let mut opt = Adam::new(2, 0.1);
        for _ in 0..500 {
            let g: Vec<f64> = p.iter().map(|x| 2.0 * x).collect();
            opt.step(&mut p, &g);
        }
        assert!(p.iter().all(|x| x.abs() < 1e-2), "{p:?}");
    }

    #[test]
    fn clipping_joint_norm() {
        let mut a = vec![3.0];
        let mut b = vec![4.0];
        let n = clip_grad_norm(&mut [&mut a, &mut b], 1.0);
        assert_eq!(n, 5.0);
        assert!((a[0] - 0.6).abs() < 1e-12 && (b[0] - 0.8).abs() < 1e-12);
    }
}
