//! Small dense autoencoder codec.
//!
//! `code = tanh(x We + be)`, `out = tanh(code W1 + b1) W2 + b2`.

use std::path::Path;

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tape::Tape;
use super::{LossNodes, Trainable};
use crate::checkpoint;
use crate::cs::measurement_rows;
use crate::error::{shape_err, Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct DenseAutoencoder {
    n_total: usize,
    cr: f64,
    seed: u64,
    we: Array2<f64>,
    be: Array2<f64>,
    w1: Array2<f64>,
    b1: Array2<f64>,
    w2: Array2<f64>,
    b2: Array2<f64>,
}

#[derive(Serialize, Deserialize)]
struct AeHeader {
    kind: String,
    n_total: usize,
    code_len: usize,
    hidden: usize,
    cr: f64,
    seed: u64,
}

fn glorot(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let a = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-a..a))
}

impl DenseAutoencoder {
    /// Hidden decoder width defaults to twice the code length.
    pub fn new(n_total: usize, cr: f64, seed: u64) -> Result<Self> {
        let m = measurement_rows(n_total, cr)?;
        Self::with_hidden(n_total, cr, 2 * m, seed)
    }

    pub fn with_hidden(n_total: usize, cr: f64, hidden: usize, seed: u64) -> Result<Self> {
        let m = measurement_rows(n_total, cr)?;
        if hidden == 0 {
            return Err(Error::Config("autoencoder hidden width must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(Self {
            n_total,
            cr,
            seed,
            we: glorot(n_total, m, &mut rng),
            be: Array2::zeros((1, m)),
            w1: glorot(m, hidden, &mut rng),
            b1: Array2::zeros((1, hidden)),
            w2: glorot(hidden, n_total, &mut rng),
            b2: Array2::zeros((1, n_total)),
        })
    }

    pub fn n_total(&self) -> usize {
        self.n_total
    }

    pub fn cr(&self) -> f64 {
        self.cr
    }

    pub fn code_len(&self) -> usize {
        self.we.ncols()
    }

    pub fn hidden(&self) -> usize {
        self.w1.ncols()
    }

    pub fn n_params(&self) -> usize {
        self.param_refs().iter().map(|a| a.len()).sum()
    }

    fn param_refs(&self) -> [&Array2<f64>; 6] {
        [&self.we, &self.be, &self.w1, &self.b1, &self.w2, &self.b2]
    }

    pub fn encode(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.n_total {
            return shape_err(format!(
                "input length {} does not match n_total = {}",
                x.ncols(),
                self.n_total
            ));
        }
        Ok((x.dot(&self.we) + &self.be).mapv(f64::tanh))
    }

    pub fn decode(&self, code: ArrayView2<f64>) -> Result<Array2<f64>> {
        if code.ncols() != self.code_len() {
            return shape_err(format!(
                "code length {} does not match {}",
                code.ncols(),
                self.code_len()
            ));
        }
        let h = (code.dot(&self.w1) + &self.b1).mapv(f64::tanh);
        Ok(h.dot(&self.w2) + &self.b2)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let header = AeHeader {
            kind: "dense_ae".into(),
            n_total: self.n_total,
            code_len: self.code_len(),
            hidden: self.hidden(),
            cr: self.cr,
            seed: self.seed,
        };
        checkpoint::write(path, &header, &self.param_refs())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let (h, arrays) = checkpoint::read(path, |h: &AeHeader| {
            if h.kind != "dense_ae" {
                return Err(Error::Format {
                    offset: 4,
                    msg: format!("expected a dense_ae checkpoint, found {:?}", h.kind),
                });
            }
            let (n, m, k) = (h.n_total, h.code_len, h.hidden);
            Ok(vec![(n, m), (1, m), (m, k), (1, k), (k, n), (1, n)])
        })?;
        let [we, be, w1, b1, w2, b2]: [Array2<f64>; 6] = arrays.try_into().unwrap();
        Ok(Self {
            n_total: h.n_total,
            cr: h.cr,
            seed: h.seed,
            we,
            be,
            w1,
            b1,
            w2,
            b2,
        })
    }
}

/// `decode(encode(x))` for inputs as rows.
pub fn ae_forward(ae: &DenseAutoencoder, x: ArrayView2<f64>) -> Result<Array2<f64>> {
    let code = ae.encode(x)?;
    ae.decode(code.view())
}

impl Trainable for DenseAutoencoder {
    fn input_len(&self) -> usize {
        self.n_total
    }

    fn output_len(&self) -> usize {
        self.n_total
    }

    fn params(&self) -> Vec<&Array2<f64>> {
        self.param_refs().to_vec()
    }

    fn params_mut(&mut self) -> Vec<&mut Array2<f64>> {
        vec![
            &mut self.we,
            &mut self.be,
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
        ]
    }

    fn build_loss<'a>(
        &'a self,
        tape: &mut Tape<'a>,
        inputs: ArrayView2<f64>,
        targets: &'a Array2<f64>,
        _sym_weight: f64,
    ) -> Result<LossNodes> {
        if inputs.ncols() != self.n_total || targets.dim() != (inputs.nrows(), self.n_total) {
            return shape_err(format!(
                "inputs {:?} / targets {:?} do not match n_total = {}",
                inputs.dim(),
                targets.dim(),
                self.n_total
            ));
        }
        let params: Vec<_> = self.param_refs().iter().map(|a| tape.param(a)).collect();
        let [we, be, w1, b1, w2, b2] = params[..] else { unreachable!() };
        let x = tape.constant(inputs.to_owned());
        let c = tape.matmul(x, we);
        let c = tape.add_row(c, be);
        let c = tape.tanh(c);
        let h = tape.matmul(c, w1);
        let h = tape.add_row(h, b1);
        let h = tape.tanh(h);
        let o = tape.matmul(h, w2);
        let o = tape.add_row(o, b2);
        let t = tape.constant_ref(targets);
        let e = tape.sub(o, t);
        let sq = tape.sum_squares(e);
        let mse = tape.scale_const(sq, 1.0 / targets.len() as f64);
        let sym = tape.constant(Array2::zeros((1, 1)));
        Ok(LossNodes {
            total: mse,
            mse,
            sym,
            params,
        })
    }

    fn reconstruct(&self, inputs: ArrayView2<f64>) -> Result<Array2<f64>> {
        ae_forward(self, inputs)
    }
}
