//! Differentiable graph of the unrolled ISTA decoder.

use ndarray::{Array2, ArrayView2};

use super::tape::{Tape, Var};
use super::{LossNodes, Trainable};
use crate::cs::IstaModel;
use crate::error::{shape_err, Result};

impl Trainable for IstaModel {
    fn input_len(&self) -> usize {
        self.n_total()
    }

    fn output_len(&self) -> usize {
        self.n_total()
    }

    fn params(&self) -> Vec<&Array2<f64>> {
        self.blocks().iter().flat_map(|b| b.params()).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Array2<f64>> {
        self.blocks_mut().iter_mut().flat_map(|b| b.params_mut()).collect()
    }

    fn build_loss<'a>(
        &'a self,
        tape: &mut Tape<'a>,
        inputs: ArrayView2<f64>,
        targets: &'a Array2<f64>,
        sym_weight: f64,
    ) -> Result<LossNodes> {
        let n = self.n_total();
        if targets.dim() != (inputs.nrows(), n) {
            return shape_err(format!(
                "targets are {:?}, expected {} x {n}",
                targets.dim(),
                inputs.nrows()
            ));
        }
        let batch = inputs.nrows();
        let p = self.config().patch_len;
        let y = tape.constant(self.encode(inputs)?);
        let mut x = tape.matmul_const_t(y, self.q_init());
        let mut params = Vec::with_capacity(6 * self.blocks().len());
        let mut sym: Option<Var> = None;
        for b in self.blocks() {
            let [rho, theta_raw, lift, transform, inverse, project] = b.params().map(|a| tape.param(a));
            params.extend([rho, theta_raw, lift, transform, inverse, project]);

            let ax = tape.matmul_const_t(x, self.phi());
            let res = tape.sub(ax, y);
            let grad = tape.matmul_const(res, self.phi());
            let step = tape.scale_by(grad, rho);
            let r = tape.sub(x, step);

            let patches = tape.reshape(r, batch * n / p, p);
            let z = tape.matmul(patches, lift);
            let hidden = tape.matmul(z, transform);
            let theta = tape.softplus(theta_raw);
            let s = tape.soft_threshold(hidden, theta);
            let u = tape.matmul(s, inverse);
            let v = tape.matmul(u, project);
            let v = tape.reshape(v, batch, n);
            x = tape.add(r, v);

            let back = tape.matmul(hidden, inverse);
            let defect = tape.sub(back, z);
            let d = tape.sum_squares(defect);
            sym = Some(match sym {
                Some(acc) => tape.add(acc, d),
                None => d,
            });
        }
        let norm = 1.0 / (batch * n) as f64;
        let t = tape.constant_ref(targets);
        let e = tape.sub(x, t);
        let sq = tape.sum_squares(e);
        let mse = tape.scale_const(sq, norm);
        let sym = tape.scale_const(sym.expect("at least one block"), norm);
        let weighted = tape.scale_const(sym, sym_weight);
        let total = tape.add(mse, weighted);
        Ok(LossNodes {
            total,
            mse,
            sym,
            params,
        })
    }

    fn reconstruct(&self, inputs: ArrayView2<f64>) -> Result<Array2<f64>> {
        IstaModel::reconstruct(self, inputs)
    }
}
