use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Graph, Tensor, Var};
use crate::{Error, Result};

/// LSTM cell weights with gate blocks ordered input, forget, candidate, output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmParams {
    /// `[4H, I]`
    pub wx: Tensor,
    /// `[4H, H]`
    pub wh: Tensor,
    /// `[4H]`
    pub bias: Tensor,
}

impl LstmParams {
    pub fn init<R: Rng + ?Sized>(input: usize, hidden: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        LstmParams {
            wx: Tensor::uniform(vec![4 * hidden, input], bound, rng),
            wh: Tensor::uniform(vec![4 * hidden, hidden], bound, rng),
            bias: Tensor::uniform(vec![4 * hidden], bound, rng),
        }
    }

    pub fn zeros(input: usize, hidden: usize) -> Self {
        LstmParams {
            wx: Tensor::zeros(vec![4 * hidden, input]),
            wh: Tensor::zeros(vec![4 * hidden, hidden]),
            bias: Tensor::zeros(vec![4 * hidden]),
        }
    }

    pub fn input_size(&self) -> usize {
        self.wx.cols()
    }

    pub fn hidden_size(&self) -> usize {
        self.wh.cols()
    }

    pub fn record(&self, g: &mut Graph, trainable: bool) -> LstmVars {
        let leaf = |g: &mut Graph, t: &Tensor| {
            if trainable {
                g.param(t.clone())
            } else {
                g.constant(t.clone())
            }
        };
        LstmVars {
            wx: leaf(g, &self.wx),
            wh: leaf(g, &self.wh),
            bias: leaf(g, &self.bias),
            hidden: self.hidden_size(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LstmVars {
    pub wx: Var,
    pub wh: Var,
    pub bias: Var,
    pub hidden: usize,
}

/// Output head `y = W·h + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearParams {
    /// `[O, H]`
    pub w: Tensor,
    /// `[O]`
    pub b: Tensor,
}

impl LinearParams {
    pub fn init<R: Rng + ?Sized>(input: usize, output: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (input as f64).sqrt();
        LinearParams {
            w: Tensor::uniform(vec![output, input], bound, rng),
            b: Tensor::zeros(vec![output]),
        }
    }

    pub fn record(&self, g: &mut Graph, trainable: bool) -> LinearVars {
        if trainable {
            LinearVars {
                w: g.param(self.w.clone()),
                b: g.param(self.b.clone()),
            }
        } else {
            LinearVars {
                w: g.constant(self.w.clone()),
                b: g.constant(self.b.clone()),
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LinearVars {
    pub w: Var,
    pub b: Var,
}

/// `y = h·Wᵀ + b` for every row of `h`.
pub fn linear(g: &mut Graph, h: Var, head: &LinearVars) -> Result<Var> {
    let y = g.matmul_t(h, head.w)?;
    g.add_bias(y, head.b)
}

fn gates_to_state(g: &mut Graph, gates: Var, c_prev: Var, hidden: usize) -> Result<(Var, Var)> {
    let i = g.slice_cols(gates, 0, hidden)?;
    let f = g.slice_cols(gates, hidden, hidden)?;
    let cand = g.slice_cols(gates, 2 * hidden, hidden)?;
    let o = g.slice_cols(gates, 3 * hidden, hidden)?;
    let i = g.sigmoid(i)?;
    let f = g.sigmoid(f)?;
    let cand = g.tanh(cand)?;
    let o = g.sigmoid(o)?;
    let keep = g.mul(f, c_prev)?;
    let write = g.mul(i, cand)?;
    let c = g.add(keep, write)?;
    let tc = g.tanh(c)?;
    let h = g.mul(o, tc)?;
    Ok((h, c))
}

/// One LSTM step on a batch: `x: [B, I]`, `h_prev, c_prev: [B, H]`.
pub fn lstm_step(g: &mut Graph, x: Var, h_prev: Var, c_prev: Var, p: &LstmVars) -> Result<(Var, Var)> {
    let hidden = p.hidden;
    let (xb, hb, cb) = (g.value(x).rows(), g.value(h_prev).rows(), g.value(c_prev).rows());
    if xb != hb || xb != cb || g.value(h_prev).cols() != hidden || g.value(c_prev).cols() != hidden {
        return Err(Error::Config(format!(
            "lstm_step: batch/hidden mismatch (x rows {xb}, h {:?}, c {:?}, hidden {hidden})",
            g.value(h_prev).shape(),
            g.value(c_prev).shape()
        )));
    }
    let xp = g.matmul_t(x, p.wx)?;
    let xp = g.add_bias(xp, p.bias)?;
    let hp = g.matmul_t(h_prev, p.wh)?;
    let gates = g.add(xp, hp)?;
    gates_to_state(g, gates, c_prev, hidden)
}

/// Runs the cell over a time-major sequence (`row = t·batch + b`) starting
/// from zero state. Returns all hidden states stacked in the same layout.
///
/// The input projection is computed once for every step; only the recurrent
/// part is evaluated inside the time loop.
pub fn lstm_sequence(g: &mut Graph, xs: Var, batch: usize, p: &LstmVars) -> Result<Var> {
    let rows = g.value(xs).rows();
    if batch == 0 || rows % batch != 0 || rows == 0 {
        return Err(Error::Config(format!(
            "lstm_sequence: {rows} rows is not a whole number of steps for batch {batch}"
        )));
    }
    let steps = rows / batch;
    let hidden = p.hidden;
    let xp = g.matmul_t(xs, p.wx)?;
    let xp = g.add_bias(xp, p.bias)?;
    let mut h = g.constant(Tensor::zeros(vec![batch, hidden]));
    let mut c = g.constant(Tensor::zeros(vec![batch, hidden]));
    let mut outputs = Vec::with_capacity(steps);
    for t in 0..steps {
        let xt = g.slice_rows(xp, t * batch, batch)?;
        let hp = g.matmul_t(h, p.wh)?;
        let gates = g.add(xt, hp)?;
        let (hn, cn) = gates_to_state(g, gates, c, hidden)?;
        outputs.push(hn);
        h = hn;
        c = cn;
    }
    g.concat_rows(&outputs)
}
