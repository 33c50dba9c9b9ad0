//! Neural building blocks used by the CRF feature network and the inference
//! networks: affine maps, LSTM cells, bidirectional encoders, window
//! convolutions, and dropout.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::graph::{Graph, NodeId};
use super::params::{Binding, ParamId, ParamSet};
use super::tensor::Tensor;

/// Default init range for all parameters: uniform in [-0.1, 0.1).
pub const INIT_RANGE: f64 = 0.1;

fn init<R: Rng>(rows: usize, cols: usize, scale: f64, rng: &mut R) -> Tensor {
    if scale == 0.0 {
        Tensor::zeros(rows, cols)
    } else {
        Tensor::rand_uniform(rows, cols, -scale, scale, rng)
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub d_in: usize,
    pub d_out: usize,
}

impl Linear {
    pub fn new<R: Rng>(
        params: &mut ParamSet,
        name: &str,
        d_in: usize,
        d_out: usize,
        scale: f64,
        rng: &mut R,
    ) -> Self {
        let w = params.add(&format!("{name}.w"), init(d_in, d_out, scale, rng));
        let b = params.add(&format!("{name}.b"), init(1, d_out, scale, rng));
        Linear { w, b, d_in, d_out }
    }

    pub fn forward(&self, g: &mut Graph, bind: &Binding, x: NodeId) -> NodeId {
        let xw = g.matmul(x, bind.node(self.w));
        g.add_row(xw, bind.node(self.b))
    }
}

/// Standard LSTM cell: gates packed as [input, forget, output, candidate]
/// in a single (d_in + H) x 4H weight matrix.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct LstmCell {
    pub w: ParamId,
    pub b: ParamId,
    pub d_in: usize,
    pub hidden: usize,
}

impl LstmCell {
    pub fn new<R: Rng>(
        params: &mut ParamSet,
        name: &str,
        d_in: usize,
        hidden: usize,
        scale: f64,
        rng: &mut R,
    ) -> Self {
        let w = params.add(&format!("{name}.w"), init(d_in + hidden, 4 * hidden, scale, rng));
        let b = params.add(&format!("{name}.b"), init(1, 4 * hidden, scale, rng));
        LstmCell { w, b, d_in, hidden }
    }

    /// One step. `x` is 1 x d_in, `h`/`c` are 1 x H. Returns (h', c').
    pub fn step(
        &self,
        g: &mut Graph,
        bind: &Binding,
        x: NodeId,
        h: NodeId,
        c: NodeId,
    ) -> (NodeId, NodeId) {
        let hsz = self.hidden;
        let z = g.concat_cols(&[x, h]);
        let zw = g.matmul(z, bind.node(self.w));
        let gates = g.add_row(zw, bind.node(self.b));
        let i_pre = g.slice_cols(gates, 0, hsz);
        let f_pre = g.slice_cols(gates, hsz, 2 * hsz);
        let o_pre = g.slice_cols(gates, 2 * hsz, 3 * hsz);
        let cand_pre = g.slice_cols(gates, 3 * hsz, 4 * hsz);
        let i = g.sigmoid(i_pre);
        let f = g.sigmoid(f_pre);
        let o = g.sigmoid(o_pre);
        let cand = g.tanh(cand_pre);
        let fc = g.mul(f, c);
        let ic = g.mul(i, cand);
        let c_next = g.add(fc, ic);
        let tc = g.tanh(c_next);
        let h_next = g.mul(o, tc);
        (h_next, c_next)
    }

    /// Run over the rows of `x` (n x d_in), returning the hidden state per
    /// position. `reverse` walks the sequence right-to-left; outputs are
    /// still indexed by position.
    pub fn run(
        &self,
        g: &mut Graph,
        bind: &Binding,
        x: NodeId,
        reverse: bool,
    ) -> Vec<NodeId> {
        let n = g.value(x).rows;
        assert!(n >= 1, "lstm over empty sequence");
        let mut h = g.constant(Tensor::zeros(1, self.hidden));
        let mut c = g.constant(Tensor::zeros(1, self.hidden));
        let mut out = vec![h; n];
        let order: Vec<usize> = if reverse {
            (0..n).rev().collect()
        } else {
            (0..n).collect()
        };
        for t in order {
            let xt = g.slice_rows(x, t, t + 1);
            let (h2, c2) = self.step(g, bind, xt, h, c);
            h = h2;
            c = c2;
            out[t] = h;
        }
        out
    }
}

/// Bidirectional LSTM encoder: row t of the output is the concatenation of
/// the forward and backward hidden states at position t (n x 2H).
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Blstm {
    pub fwd: LstmCell,
    pub bwd: LstmCell,
    pub hidden: usize,
}

impl Blstm {
    pub fn new<R: Rng>(
        params: &mut ParamSet,
        name: &str,
        d_in: usize,
        hidden: usize,
        scale: f64,
        rng: &mut R,
    ) -> Self {
        Blstm {
            fwd: LstmCell::new(params, &format!("{name}.fwd"), d_in, hidden, scale, rng),
            bwd: LstmCell::new(params, &format!("{name}.bwd"), d_in, hidden, scale, rng),
            hidden,
        }
    }

    pub fn encode(&self, g: &mut Graph, bind: &Binding, x: NodeId) -> NodeId {
        let hf = self.fwd.run(g, bind, x, false);
        let hb = self.bwd.run(g, bind, x, true);
        let rows: Vec<NodeId> = hf
            .iter()
            .zip(&hb)
            .map(|(&f, &b)| g.concat_cols(&[f, b]))
            .collect();
        g.concat_rows(&rows)
    }
}

/// Window convolution: row t is g(W [v_{t-nw}; ...; v_{t+nw}] + b) where
/// out-of-range positions use the dedicated padding row `pad` (1 x d).
pub fn conv_window(
    g: &mut Graph,
    bind: &Binding,
    x: NodeId,
    pad: NodeId,
    half_width: usize,
    linear: &Linear,
) -> NodeId {
    let n = g.value(x).rows;
    let mut window_rows = Vec::with_capacity(n);
    for t in 0..n {
        let mut parts = Vec::with_capacity(2 * half_width + 1);
        for off in -(half_width as isize)..=(half_width as isize) {
            let p = t as isize + off;
            if p < 0 || p >= n as isize {
                parts.push(pad);
            } else {
                parts.push(g.slice_rows(x, p as usize, p as usize + 1));
            }
        }
        window_rows.push(g.concat_cols(&parts));
    }
    let windows = g.concat_rows(&window_rows);
    let affine = linear.forward(g, bind, windows);
    g.tanh(affine)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Train,
    Eval,
}

/// Inverted dropout. Identity in eval mode and at rate 0; otherwise zeroes
/// entries with probability `rate` and scales survivors by 1/(1-rate).
pub fn dropout<R: Rng>(
    g: &mut Graph,
    x: NodeId,
    rate: f64,
    mode: Mode,
    rng: &mut R,
) -> NodeId {
    assert!((0.0..1.0).contains(&rate), "dropout rate must be in [0,1)");
    if mode == Mode::Eval || rate == 0.0 {
        return x;
    }
    let t = g.value(x);
    let keep = 1.0 / (1.0 - rate);
    let mask = Tensor::new(
        t.rows,
        t.cols,
        (0..t.numel())
            .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
            .collect(),
    );
    let m = g.constant(mask);
    g.mul(x, m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn lstm_zero_params_zero_state_gives_zero_output() {
        let mut params = ParamSet::new();
        let mut r = rng(0);
        let cell = LstmCell::new(&mut params, "lstm", 3, 4, 0.0, &mut r);
        let mut g = Graph::new();
        let bind = params.bind(&mut g, false);
        let x = g.constant(Tensor::row(&[1.0, -2.0, 0.5]));
        let h0 = g.constant(Tensor::zeros(1, 4));
        let c0 = g.constant(Tensor::zeros(1, 4));
        let (h, _) = cell.step(&mut g, &bind, x, h0, c0);
        assert!(g.value(h).data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn lstm_output_bounded() {
        let mut params = ParamSet::new();
        let mut r = rng(1);
        let cell = LstmCell::new(&mut params, "lstm", 3, 4, 2.0, &mut r);
        let mut g = Graph::new();
        let bind = params.bind(&mut g, false);
        let x = g.constant(Tensor::row(&[5.0, -7.0, 3.0]));
        let h0 = g.constant(Tensor::zeros(1, 4));
        let c0 = g.constant(Tensor::zeros(1, 4));
        let (h, _) = cell.step(&mut g, &bind, x, h0, c0);
        assert!(g.value(h).data.iter().all(|&v| v > -1.0 && v < 1.0));
    }

    #[test]
    fn blstm_single_token_shape() {
        let mut params = ParamSet::new();
        let mut r = rng(2);
        let blstm = Blstm::new(&mut params, "enc", 3, 4, INIT_RANGE, &mut r);
        let mut g = Graph::new();
        let bind = params.bind(&mut g, false);
        let x = g.constant(Tensor::row(&[0.1, 0.2, 0.3]));
        let out = blstm.encode(&mut g, &bind, x);
        assert_eq!(g.value(out).rows, 1);
        assert_eq!(g.value(out).cols, 8);
    }

    #[test]
    fn blstm_reverse_symmetry() {
        // Reversing the input and swapping the directional cells must give a
        // row-reversed output with the two halves swapped.
        let mut params = ParamSet::new();
        let mut r = rng(3);
        let blstm = Blstm::new(&mut params, "enc", 2, 3, INIT_RANGE, &mut r);
        let x = Tensor::from_rows(&[vec![0.4, -0.2], vec![1.0, 0.3], vec![-0.5, 0.9]]);
        let mut xrev_rows: Vec<Vec<f64>> = (0..x.rows).rev().map(|r| x.row_slice(r).to_vec()).collect();
        let xrev = Tensor::from_rows(&xrev_rows.drain(..).collect::<Vec<_>>());

        let mut g = Graph::new();
        let bind = params.bind(&mut g, false);
        let xin = g.constant(x.clone());
        let enc = blstm.encode(&mut g, &bind, xin);
        let out = g.value(enc).clone();

        let swapped = Blstm {
            fwd: blstm.bwd,
            bwd: blstm.fwd,
            hidden: blstm.hidden,
        };
        let mut g2 = Graph::new();
        let bind2 = params.bind(&mut g2, false);
        let xin2 = g2.constant(xrev);
        let enc2 = swapped.encode(&mut g2, &bind2, xin2);
        let out2 = g2.value(enc2).clone();

        let hsz = blstm.hidden;
        for t in 0..out.rows {
            let a = out.row_slice(t);
            let b = out2.row_slice(out.rows - 1 - t);
            for k in 0..hsz {
                assert!((a[k] - b[hsz + k]).abs() < 1e-12);
                assert!((a[hsz + k] - b[k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn conv_window_zero_width_is_per_token() {
        let mut params = ParamSet::new();
        let mut r = rng(4);
        let lin = Linear::new(&mut params, "conv", 2, 3, INIT_RANGE, &mut r);
        let mut g = Graph::new();
        let bind = params.bind(&mut g, false);
        let x = g.constant(Tensor::from_rows(&[vec![0.1, 0.9], vec![-0.4, 0.2]]));
        let pad = g.constant(Tensor::zeros(1, 2));
        let fm = conv_window(&mut g, &bind, x, pad, 0, &lin);
        // row 0 must equal tanh(linear(row 0)) computed alone
        let mut g2 = Graph::new();
        let bind2 = params.bind(&mut g2, false);
        let x0 = g2.constant(Tensor::row(&[0.1, 0.9]));
        let a = lin.forward(&mut g2, &bind2, x0);
        let y0 = g2.tanh(a);
        assert_eq!(g.value(fm).row_slice(0), g2.value(y0).row_slice(0));
    }

    #[test]
    fn conv_window_locality() {
        let mut params = ParamSet::new();
        let mut r = rng(5);
        let lin = Linear::new(&mut params, "conv", 6, 3, INIT_RANGE, &mut r);
        let base = Tensor::from_rows(&[
            vec![0.1, 0.9],
            vec![-0.4, 0.2],
            vec![0.3, 0.3],
            vec![0.7, -0.7],
        ]);
        let mut changed = base.clone();
        changed.set(3, 0, 9.0); // token t+2 for t=1 with half_width 1
        let run = |input: Tensor| {
            let mut g = Graph::new();
            let bind = params.bind(&mut g, false);
            let x = g.constant(input);
            let pad = g.constant(Tensor::zeros(1, 2));
            let fm = conv_window(&mut g, &bind, x, pad, 1, &lin);
            g.value(fm).clone()
        };
        let a = run(base);
        let b = run(changed);
        assert_eq!(a.row_slice(1), b.row_slice(1));
        assert_ne!(a.row_slice(2), b.row_slice(2));
    }

    #[test]
    fn dropout_eval_identity() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::row(&[1.0, 2.0, 3.0]));
        let mut r = rng(6);
        let y = dropout(&mut g, x, 0.5, Mode::Eval, &mut r);
        assert_eq!(y, x);
        let y0 = dropout(&mut g, x, 0.0, Mode::Train, &mut r);
        assert_eq!(y0, x);
    }

    #[test]
    fn dropout_survival_fraction() {
        let n = 100_000;
        let mut g = Graph::new();
        let x = g.constant(Tensor::filled(1, n, 1.0));
        let mut r = rng(7);
        let y = dropout(&mut g, x, 0.5, Mode::Train, &mut r);
        let surviving = g.value(y).data.iter().filter(|&&v| v != 0.0).count();
        let frac = surviving as f64 / n as f64;
        assert!((frac - 0.5).abs() < 0.01, "surviving fraction {frac}");
    }
}
