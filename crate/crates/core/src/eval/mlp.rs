//! One-hidden-layer ReLU network trained with mini-batch Adam.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;

use super::{class_weights, sigmoid, softplus, HeadConfig};
use crate::error::EvalError;
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    /// Input to hidden, `d x hidden`.
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array1<f64>,
    pub b2: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpGradient {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array1<f64>,
    pub b2: f64,
}

impl MlpModel {
    /// He-uniform weights, zero biases.
    pub fn init(inputs: usize, hidden: usize, seed: u64) -> Self {
        let mut rng = rng::seeded(seed);
        let a1 = (6.0 / inputs as f64).sqrt();
        let a2 = (6.0 / hidden as f64).sqrt();
        Self {
            w1: Array2::from_shape_fn((inputs, hidden), |_| rng.random_range(-a1..a1)),
            b1: Array1::zeros(hidden),
            w2: Array1::from_shape_fn(hidden, |_| rng.random_range(-a2..a2)),
            b2: 0.0,
        }
    }

    fn hidden(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        x.dot(&self.w1) + &self.b1
    }

    pub fn logits(&self, x: ArrayView2<'_, f64>) -> Array1<f64> {
        self.hidden(x).mapv(|v| v.max(0.0)).dot(&self.w2) + self.b2
    }

    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Array1<f64> {
        self.logits(x).mapv(sigmoid)
    }

    /// Weighted mean log loss over the batch plus `l2 / 2` times the squared
    /// weight norms (biases excluded). `c` holds per-row class weights.
    pub fn loss(
        &self,
        x: ArrayView2<'_, f64>,
        y: ArrayView1<'_, f64>,
        c: ArrayView1<'_, f64>,
        l2: f64,
    ) -> f64 {
        let z = self.logits(x);
        let m = y.len() as f64;
        let data: f64 = z
            .iter()
            .zip(y)
            .zip(c)
            .map(|((&z, &y), &c)| c * (softplus(z) - y * z))
            .sum();
        data / m + 0.5 * l2 * (self.w1.iter().map(|v| v * v).sum::<f64>() + self.w2.dot(&self.w2))
    }

    /// Backpropagated gradient of [`MlpModel::loss`].
    pub fn gradient(
        &self,
        x: ArrayView2<'_, f64>,
        y: ArrayView1<'_, f64>,
        c: ArrayView1<'_, f64>,
        l2: f64,
    ) -> MlpGradient {
        let m = y.len() as f64;
        let z1 = self.hidden(x);
        let a1 = z1.mapv(|v| v.max(0.0));
        let z2 = a1.dot(&self.w2) + self.b2;
        let dz2: Array1<f64> = z2
            .iter()
            .zip(y)
            .zip(c)
            .map(|((&z, &y), &c)| c * (sigmoid(z) - y) / m)
            .collect();
        let w2 = a1.t().dot(&dz2) + l2 * &self.w2;
        let b2 = dz2.sum();
        let mut dz1 = dz2
            .view()
            .insert_axis(Axis(1))
            .dot(&self.w2.view().insert_axis(Axis(0)));
        dz1.zip_mut_with(&z1, |d, &z| {
            if z <= 0.0 {
                *d = 0.0
            }
        });
        let w1 = x.t().dot(&dz1) + l2 * &self.w1;
        let b1 = dz1.sum_axis(Axis(0));
        MlpGradient { w1, b1, w2, b2 }
    }
}

struct Adam {
    t: i32,
    m: MlpGradient,
    v: MlpGradient,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

impl Adam {
    fn new(model: &MlpModel) -> Self {
        let zero = || MlpGradient {
            w1: Array2::zeros(model.w1.raw_dim()),
            b1: Array1::zeros(model.b1.len()),
            w2: Array1::zeros(model.w2.len()),
            b2: 0.0,
        };
        Self {
            t: 0,
            m: zero(),
            v: zero(),
        }
    }

    fn step(&mut self, model: &mut MlpModel, g: &MlpGradient, lr: f64) {
        self.t += 1;
        let c1 = 1.0 - BETA1.powi(self.t);
        let c2 = 1.0 - BETA2.powi(self.t);
        let update = |p: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
            *m = BETA1 * *m + (1.0 - BETA1) * g;
            *v = BETA2 * *v + (1.0 - BETA2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + EPS);
        };
        ndarray::Zip::from(&mut model.w1)
            .and(&mut self.m.w1)
            .and(&mut self.v.w1)
            .and(&g.w1)
            .for_each(|p, m, v, &g| update(p, m, v, g));
        ndarray::Zip::from(&mut model.b1)
            .and(&mut self.m.b1)
            .and(&mut self.v.b1)
            .and(&g.b1)
            .for_each(|p, m, v, &g| update(p, m, v, g));
        ndarray::Zip::from(&mut model.w2)
            .and(&mut self.m.w2)
            .and(&mut self.v.w2)
            .and(&g.w2)
            .for_each(|p, m, v, &g| update(p, m, v, g));
        update(&mut model.b2, &mut self.m.b2, &mut self.v.b2, g.b2);
    }
}

/// Trains for `cfg.epochs` epochs. Initialization and batch order come
/// from `cfg.seed`.
pub fn train_mlp(
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    cfg: &HeadConfig,
) -> Result<MlpModel, EvalError> {
    let c = class_weights(y)?;
    let mut model = MlpModel::init(
        x.ncols(),
        cfg.hidden_units,
        rng::derive_seed(cfg.seed, "mlp-init"),
    );
    let mut adam = Adam::new(&model);
    let mut order: Vec<usize> = (0..y.len()).collect();
    let mut shuffle = rng::seeded(rng::derive_seed(cfg.seed, "mlp-batches"));
    let batch = cfg.batch_size.max(1);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut shuffle);
        for chunk in order.chunks(batch) {
            let xb = x.select(Axis(0), chunk);
            let yb = y.select(Axis(0), chunk);
            let cb = c.select(Axis(0), chunk);
            let g = model.gradient(xb.view(), yb.view(), cb.view(), cfg.l2);
            adam.step(&mut model, &g, cfg.lr);
        }
    }
    Ok(model)
}
