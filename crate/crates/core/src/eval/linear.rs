//! Class-weighted L2-regularized logistic regression.

use ndarray::{Array1, ArrayView1, ArrayView2};

use super::{class_weights, sigmoid, softplus, HeadConfig};
use crate::error::EvalError;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub w: Array1<f64>,
    pub b: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl LinearModel {
    pub fn logits(&self, x: ArrayView2<'_, f64>) -> Array1<f64> {
        x.dot(&self.w) + self.b
    }

    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Array1<f64> {
        self.logits(x).mapv(sigmoid)
    }
}

/// Weighted mean log loss plus `l2 / 2 * |w|^2`. The bias is not
/// penalized.
pub struct Objective<'a> {
    pub x: ArrayView2<'a, f64>,
    pub y: ArrayView1<'a, f64>,
    pub c: Array1<f64>,
    pub l2: f64,
}

impl<'a> Objective<'a> {
    pub fn new(x: ArrayView2<'a, f64>, y: ArrayView1<'a, f64>, l2: f64) -> Result<Self, EvalError> {
        Ok(Self {
            x,
            y,
            c: class_weights(y)?,
            l2,
        })
    }

    pub fn loss(&self, w: &Array1<f64>, b: f64) -> f64 {
        let z = self.x.dot(w) + b;
        let n = self.y.len() as f64;
        let data: f64 = z
            .iter()
            .zip(self.y)
            .zip(&self.c)
            .map(|((&z, &y), &c)| c * (softplus(z) - y * z))
            .sum();
        data / n + 0.5 * self.l2 * w.dot(w)
    }

    pub fn gradient(&self, w: &Array1<f64>, b: f64) -> (Array1<f64>, f64) {
        let z = self.x.dot(w) + b;
        let n = self.y.len() as f64;
        let r: Array1<f64> = z
            .iter()
            .zip(self.y)
            .zip(&self.c)
            .map(|((&z, &y), &c)| c * (sigmoid(z) - y) / n)
            .collect();
        (self.x.t().dot(&r) + self.l2 * w, r.sum())
    }
}

/// Full-batch gradient descent from zero with an Armijo backtracking line
/// search. Each trial step starts from the Barzilai-Borwein estimate.
pub fn train_linear(
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    cfg: &HeadConfig,
) -> Result<LinearModel, EvalError> {
    let obj = Objective::new(x, y, cfg.l2)?;
    let d = x.ncols();
    let mut w = Array1::<f64>::zeros(d);
    let mut b = 0.0;
    let mut f = obj.loss(&w, b);
    let (mut gw, mut gb) = obj.gradient(&w, b);
    let mut step = 1.0;
    for it in 0..cfg.max_iter {
        let gnorm2 = gw.dot(&gw) + gb * gb;
        if gnorm2.sqrt() < cfg.tolerance {
            return Ok(LinearModel {
                w,
                b,
                iterations: it,
                converged: true,
            });
        }
        let mut t = step;
        let (nw, nb, nf) = loop {
            let nw = &w - &(t * &gw);
            let nb = b - t * gb;
            let nf = obj.loss(&nw, nb);
            if nf <= f - 0.5 * t * gnorm2 || t < 1e-20 {
                break (nw, nb, nf);
            }
            t *= 0.5;
        };
        let (ngw, ngb) = obj.gradient(&nw, nb);
        // Barzilai-Borwein guess for the next trial step
        let sw = &nw - &w;
        let yw = &ngw - &gw;
        let (sb, yb) = (nb - b, ngb - gb);
        let sy = sw.dot(&yw) + sb * yb;
        let ss = sw.dot(&sw) + sb * sb;
        step = if sy > 0.0 {
            (ss / sy).clamp(1e-10, 1e10)
        } else {
            t * 2.0
        };
        if nf >= f && t < 1e-20 {
            log::warn!("line search stalled at iteration {it}");
            return Ok(LinearModel {
                w: nw,
                b: nb,
                iterations: it + 1,
                converged: false,
            });
        }
        w = nw;
        b = nb;
        f = nf;
        gw = ngw;
        gb = ngb;
    }
    let converged = (gw.dot(&gw) + gb * gb).sqrt() < cfg.tolerance;
    Ok(LinearModel {
        w,
        b,
        iterations: cfg.max_iter,
        converged,
    })
}
