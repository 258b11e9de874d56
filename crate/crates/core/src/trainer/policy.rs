//! Shared-trunk MLP with a Gaussian action head and a value head.
//!
//! Actions are sampled as `z ~ N(μ(o), σ)` and applied as `sigmoid(z)`, so
//! controls stay in `[0, 1]`; log-probabilities are taken in `z`-space.
//! Gradients are hand-derived; parameters live in one flat vector so the
//! optimizer and checkpoints can treat them uniformly.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

const LOG_2PI: f64 = 1.837_877_066_409_345_3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyShape {
    pub obs_dim: usize,
    pub act_dim: usize,
    pub hidden: Vec<usize>,
}

#[derive(Debug, Clone, Copy)]
struct Block {
    w: usize,
    b: usize,
    rows: usize,
    cols: usize,
}

impl PolicyShape {
    fn blocks(&self) -> (Vec<Block>, Block, Block, usize, usize) {
        let mut off = 0;
        let mut alloc = |rows: usize, cols: usize| {
            let blk = Block {
                w: off,
                b: off + rows * cols,
                rows,
                cols,
            };
            off += rows * cols + cols;
            blk
        };
        let mut width = self.obs_dim;
        let mut trunk = Vec::new();
        for &h in &self.hidden {
            trunk.push(alloc(width, h));
            width = h;
        }
        let mean = alloc(width, self.act_dim);
        let value = alloc(width, 1);
        let log_std = off;
        (trunk, mean, value, log_std, off + self.act_dim)
    }

    pub fn param_count(&self) -> usize {
        self.blocks().4
    }
}

/// Intermediate activations of a batched forward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    /// Input to each trunk layer plus the final trunk output.
    layers: Vec<DMatrix<f64>>,
    pub mean: DMatrix<f64>,
    pub value: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    pub shape: PolicyShape,
    pub params: Vec<f64>,
}

fn weights(params: &[f64], b: Block) -> DMatrix<f64> {
    DMatrix::from_column_slice(b.rows, b.cols, &params[b.w..b.w + b.rows * b.cols])
}

fn affine(x: &DMatrix<f64>, params: &[f64], b: Block) -> DMatrix<f64> {
    let mut y = x * weights(params, b);
    for (j, mut col) in y.column_iter_mut().enumerate() {
        col.add_scalar_mut(params[b.b + j]);
    }
    y
}

/// `gain`-scaled matrix with orthonormal columns (or rows, if wide).
fn orthogonal<R: Rng>(rng: &mut R, rows: usize, cols: usize, gain: f64) -> DMatrix<f64> {
    let (tall, short) = (rows.max(cols), rows.min(cols));
    let a = DMatrix::<f64>::from_fn(tall, short, |_, _| rng.sample(StandardNormal));
    let qr = a.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..short {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    let q = if rows >= cols { q } else { q.transpose() };
    q * gain
}

impl Policy {
    /// Orthogonal weights (gain √2 in the trunk, 0.01 on the action mean,
    /// 1 on the value), zero biases.
    pub fn new<R: Rng>(shape: PolicyShape, init_log_std: f64, rng: &mut R) -> Self {
        let (trunk, mean, value, log_std, n) = shape.blocks();
        let mut params = vec![0.0; n];
        let mut fill = |b: Block, gain: f64, rng: &mut R| {
            let w = orthogonal(rng, b.rows, b.cols, gain);
            params[b.w..b.w + b.rows * b.cols].copy_from_slice(w.as_slice());
        };
        for b in trunk {
            fill(b, 2f64.sqrt(), rng);
        }
        fill(mean, 0.01, rng);
        fill(value, 1.0, rng);
        params[log_std..].fill(init_log_std);
        Self { shape, params }
    }

    pub fn log_std(&self) -> &[f64] {
        let (.., log_std, _) = self.shape.blocks();
        &self.params[log_std..log_std + self.shape.act_dim]
    }

    /// Batched forward pass; rows of `obs` are observations.
    pub fn forward(&self, obs: &DMatrix<f64>) -> Forward {
        let (trunk, mean_b, value_b, ..) = self.shape.blocks();
        let mut layers = vec![obs.clone()];
        for b in trunk {
            let h = affine(layers.last().unwrap(), &self.params, b).map(f64::tanh);
            layers.push(h);
        }
        let top = layers.last().unwrap();
        let mean = affine(top, &self.params, mean_b);
        let value = affine(top, &self.params, value_b).column(0).into_owned();
        Forward { layers, mean, value }
    }

    /// `(mean, value)` for a single observation.
    pub fn evaluate(&self, obs: &[f64]) -> (Vec<f64>, f64) {
        let f = self.forward(&DMatrix::from_row_slice(1, obs.len(), obs));
        (f.mean.row(0).iter().copied().collect(), f.value[0])
    }

    /// Sample a pre-squash action; returns `(z, log π(z), value)`.
    pub fn sample<R: Rng>(&self, obs: &[f64], rng: &mut R) -> (Vec<f64>, f64, f64) {
        let (mean, value) = self.evaluate(obs);
        let z: Vec<f64> = mean
            .iter()
            .zip(self.log_std())
            .map(|(m, ls)| m + ls.exp() * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let lp = log_prob(&z, &mean, self.log_std());
        (z, lp, value)
    }

    /// Backpropagate output gradients to a flat parameter gradient.
    pub fn backward(
        &self,
        fwd: &Forward,
        d_mean: &DMatrix<f64>,
        d_value: &DVector<f64>,
        d_log_std: &[f64],
    ) -> Vec<f64> {
        let (trunk, mean_b, value_b, log_std, n) = self.shape.blocks();
        let mut grad = vec![0.0; n];
        let top = fwd.layers.last().unwrap();
        let put = |grad: &mut Vec<f64>, b: Block, input: &DMatrix<f64>, d_out: &DMatrix<f64>| {
            let gw = input.transpose() * d_out;
            grad[b.w..b.w + b.rows * b.cols].copy_from_slice(gw.as_slice());
            for j in 0..b.cols {
                grad[b.b + j] = d_out.column(j).sum();
            }
        };
        let d_value_m = DMatrix::from_column_slice(d_value.len(), 1, d_value.as_slice());
        put(&mut grad, mean_b, top, d_mean);
        put(&mut grad, value_b, top, &d_value_m);
        let mut d_h = d_mean * weights(&self.params, mean_b).transpose()
            + &d_value_m * weights(&self.params, value_b).transpose();
        for (i, b) in trunk.iter().enumerate().rev() {
            let h = &fwd.layers[i + 1];
            let d_pre = d_h.zip_map(h, |g, y| g * (1.0 - y * y));
            put(&mut grad, *b, &fwd.layers[i], &d_pre);
            if i > 0 {
                d_h = &d_pre * weights(&self.params, *b).transpose();
            }
        }
        grad[log_std..].copy_from_slice(d_log_std);
        grad
    }
}

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Diagonal Gaussian log-density.
pub fn log_prob(z: &[f64], mean: &[f64], log_std: &[f64]) -> f64 {
    z.iter()
        .zip(mean)
        .zip(log_std)
        .map(|((z, m), ls)| {
            let u = (z - m) / ls.exp();
            -0.5 * u * u - ls - 0.5 * LOG_2PI
        })
        .sum()
}

pub fn entropy(log_std: &[f64]) -> f64 {
    log_std.iter().map(|ls| ls + 0.5 * (1.0 + LOG_2PI)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn shape() -> PolicyShape {
        PolicyShape {
            obs_dim: 5,
            act_dim: 3,
            hidden: vec![8, 6],
        }
    }

    #[test]
    fn parameter_count() {
        // 5·8+8 + 8·6+6 + 6·3+3 + 6·1+1 + 3
        assert_eq!(shape().param_count(), 48 + 54 + 21 + 7 + 3);
    }

    #[test]
    fn orthogonal_columns() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let w = orthogonal(&mut rng, 10, 4, 1.0);
        let g = w.transpose() * &w;
        assert!((g - DMatrix::identity(4, 4)).norm() < 1e-12);
        let w = orthogonal(&mut rng, 3, 7, 2.0);
        let g = &w * w.transpose();
        assert!((g - DMatrix::identity(3, 3) * 4.0).norm() < 1e-12);
    }

    #[test]
    fn batched_matches_single() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let p = Policy::new(shape(), -0.5, &mut rng);
        let obs = DMatrix::from_fn(4, 5, |i, j| (i as f64 - j as f64) * 0.3);
        let f = p.forward(&obs);
        for i in 0..4 {
            let row: Vec<f64> = obs.row(i).iter().copied().collect();
            let (m, v) = p.evaluate(&row);
            assert!((v - f.value[i]).abs() < 1e-14);
            for k in 0..3 {
                assert!((m[k] - f.mean[(i, k)]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn gradient_of_linear_functional_matches_finite_differences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut p = Policy::new(shape(), -0.2, &mut rng);
        // Perturb so the mean head is not almost zero.
        for x in p.params.iter_mut() {
            *x += rng.random_range(-0.2..0.2);
        }
        let obs = DMatrix::from_fn(3, 5, |_, _| rng.random_range(-1.0..1.0));
        let cm = DMatrix::from_fn(3, 3, |_, _| rng.random_range(-1.0..1.0));
        let cv = DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0));
        let cl = [0.3, -0.7, 0.2];
        let f = |p: &Policy| {
            let fw = p.forward(&obs);
            fw.mean.component_mul(&cm).sum()
                + fw.value.dot(&cv)
                + p.log_std().iter().zip(cl).map(|(a, b)| a * b).sum::<f64>()
        };
        let grad = p.backward(&p.forward(&obs), &cm, &cv, &cl);
        for i in 0..p.params.len() {
            let mut a = p.clone();
            let mut b = p.clone();
            a.params[i] += 1e-6;
            b.params[i] -= 1e-6;
            let fd = (f(&a) - f(&b)) / 2e-6;
            assert!((fd - grad[i]).abs() < 1e-6 * (1.0 + fd.abs()), "param {i}: {fd} vs {}", grad[i]);
        }
    }

    #[test]
    fn log_prob_of_standard_normal() {
        assert!((log_prob(&[0.0], &[0.0], &[0.0]) + 0.5 * LOG_2PI).abs() < 1e-15);
        assert!((entropy(&[0.0]) - 0.5 * (1.0 + LOG_2PI)).abs() < 1e-15);
    }
}
