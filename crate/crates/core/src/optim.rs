//! Adam with bias correction, in a row-sparse flavour for embedding tables
//! and a dense flavour for small networks.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::backbone::{Backbone, BackboneGrads, RowGrad, Table};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, ..Self::default() }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[inline]
fn adam_update(cfg: &AdamConfig, t: u64, p: &mut f64, g: f64, m: &mut f64, v: &mut f64) {
    *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
    *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
    let m_hat = *m / (1.0 - cfg.beta1.powi(t as i32));
    let v_hat = *v / (1.0 - cfg.beta2.powi(t as i32));
    *p -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
}

/// Moments for the three backbone tables. Only rows that received a
/// gradient in a step are updated; other rows keep parameters and moments.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseAdam {
    pub cfg: AdamConfig,
    pub step: u64,
    moments: [(Array2<f64>, Array2<f64>); 3],
}

impl SparseAdam {
    pub fn new(cfg: AdamConfig, backbone: &Backbone) -> Self {
        let z = |a: &Array2<f64>| (Array2::zeros(a.raw_dim()), Array2::zeros(a.raw_dim()));
        Self {
            cfg,
            step: 0,
            moments: [z(&backbone.users), z(&backbone.items_source), z(&backbone.items_target)],
        }
    }

    pub fn apply(&mut self, backbone: &mut Backbone, grads: &BackboneGrads) -> Result<()> {
        for (k, t) in [Table::Users, Table::ItemsSource, Table::ItemsTarget].into_iter().enumerate() {
            let g = grads.table(t);
            if g.data.raw_dim() != backbone.table(t).raw_dim() || g.data.raw_dim() != self.moments[k].0.raw_dim() {
                return Err(Error::Shape(format!("gradient for {t:?} does not match parameters")));
            }
        }
        self.step += 1;
        let step = self.step;
        for (k, t) in [Table::Users, Table::ItemsSource, Table::ItemsTarget].into_iter().enumerate() {
            let (m, v) = &mut self.moments[k];
            apply_rows(&self.cfg, step, backbone.table_mut(t), grads.table(t), m, v);
        }
        Ok(())
    }

    pub fn moment_row(&self, table: Table, row: usize) -> (Vec<f64>, Vec<f64>) {
        let k = match table {
            Table::Users => 0,
            Table::ItemsSource => 1,
            Table::ItemsTarget => 2,
        };
        (self.moments[k].0.row(row).to_vec(), self.moments[k].1.row(row).to_vec())
    }
}

fn apply_rows(cfg: &AdamConfig, step: u64, param: &mut Array2<f64>, grad: &RowGrad, m: &mut Array2<f64>, v: &mut Array2<f64>) {
    for r in grad.touched() {
        let g = grad.data.row(r);
        let mut p = param.row_mut(r);
        let mut mr = m.row_mut(r);
        let mut vr = v.row_mut(r);
        for c in 0..g.len() {
            adam_update(cfg, step, &mut p[c], g[c], &mut mr[c], &mut vr[c]);
        }
    }
}

/// Adam over a list of flat parameter buffers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseAdam {
    pub cfg: AdamConfig,
    pub step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl DenseAdam {
    pub fn new(cfg: AdamConfig, lens: &[usize]) -> Self {
        let z = || lens.iter().map(|&n| vec![0.0; n]).collect();
        Self {
            cfg,
            step: 0,
            m: z(),
            v: z(),
        }
    }

    pub fn apply(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.m.len() {
            return Err(Error::Shape(format!(
                "{} parameters, {} gradients, {} moment slots",
                params.len(),
                grads.len(),
                self.m.len()
            )));
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.m) {
            if p.len() != g.len() || p.len() != m.len() {
                return Err(Error::Shape(format!("{} parameters vs {} gradients", p.len(), g.len())));
            }
        }
        self.step += 1;
        let (cfg, t) = (self.cfg, self.step);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for k in 0..p.len() {
                adam_update(&cfg, t, &mut p[k], g[k], &mut m[k], &mut v[k]);
            }
        }
        Ok(())
    }
}
