//! Minimal dense-tensor arithmetic with reverse-mode differentiation.
//!
//! Just enough machinery for the network in [`crate::model`]: a [`Tensor`]
//! value type, a [`Tape`] of primitive operations with exact adjoints, the
//! recurrent/convolutional/attention compositions built from them, and a
//! finite-difference checker the test suites lean on.

mod check;
pub mod selftest;
mod tape;
mod tensor;

pub use check::finite_diff_check;
pub use tape::{Grads, NodeId, Tape};
pub use tensor::Tensor;

use crate::augment::PortableRng;
use crate::error::Result;

/// 1-D convolution followed by ReLU: `x` is `[L, Din]`, `kernels` is
/// `[K, H, Din]`, `bias` is `[K]`; output `[L-H+1, K]`.
pub fn conv1d(tape: &mut Tape, x: NodeId, kernels: NodeId, bias: NodeId) -> Result<NodeId> {
    let linear = tape.conv1d_linear(x, kernels, bias)?;
    Ok(tape.relu(linear))
}

/// Weight/bias node ids for one LSTM direction. Each gate weight is
/// `[Dh, Dh+Din]` and acts on the concatenation `[h_prev, x_t]`.
#[derive(Debug, Clone, Copy)]
pub struct LstmParams {
    pub w_f: NodeId,
    pub w_i: NodeId,
    pub w_c: NodeId,
    pub w_o: NodeId,
    pub b_f: NodeId,
    pub b_i: NodeId,
    pub b_c: NodeId,
    pub b_o: NodeId,
}

/// One LSTM cell update: forget/input/candidate/output gates, then
/// `c_t = f*c_prev + i*c_tilde` and `h_t = o * tanh(c_t)`.
pub fn lstm_step(
    tape: &mut Tape,
    params: &LstmParams,
    x_t: NodeId,
    h_prev: NodeId,
    c_prev: NodeId,
) -> Result<(NodeId, NodeId)> {
    let hx = tape.concat_vec(h_prev, x_t)?;
    let mut gate = |w: NodeId, b: NodeId| -> Result<NodeId> {
        let z = tape.matvec(w, hx)?;
        tape.add(z, b)
    };
    let zf = gate(params.w_f, params.b_f)?;
    let zi = gate(params.w_i, params.b_i)?;
    let zc = gate(params.w_c, params.b_c)?;
    let zo = gate(params.w_o, params.b_o)?;
    let f = tape.sigmoid(zf);
    let i = tape.sigmoid(zi);
    let c_tilde = tape.tanh(zc);
    let o = tape.sigmoid(zo);
    let keep = tape.mul(f, c_prev)?;
    let write = tape.mul(i, c_tilde)?;
    let c_t = tape.add(keep, write)?;
    let tc = tape.tanh(c_t);
    let h_t = tape.mul(o, tc)?;
    Ok((h_t, c_t))
}

/// Bidirectional LSTM over `x` (`[L, Din]`): a forward pass, a backward
/// pass, and per-position concatenation into `[L, 2*Dh]`.
pub fn bilstm(
    tape: &mut Tape,
    x: NodeId,
    forward: &LstmParams,
    backward: &LstmParams,
    hidden: usize,
) -> Result<NodeId> {
    let len = tape.value(x).rows();
    let xs: Vec<NodeId> = (0..len).map(|t| tape.row(x, t)).collect::<Result<_>>()?;

    let mut run = |params: &LstmParams, order: Vec<usize>| -> Result<Vec<NodeId>> {
        let mut h = tape.leaf(Tensor::zeros(vec![hidden]));
        let mut c = tape.leaf(Tensor::zeros(vec![hidden]));
        let mut states = vec![h; len];
        for t in order {
            let (h_t, c_t) = lstm_step(tape, params, xs[t], h, c)?;
            h = h_t;
            c = c_t;
            states[t] = h_t;
        }
        Ok(states)
    };

    let fwd = run(forward, (0..len).collect())?;
    let bwd = run(backward, (0..len).rev().collect())?;
    let rows: Vec<NodeId> = (0..len)
        .map(|t| tape.concat_vec(fwd[t], bwd[t]))
        .collect::<Result<_>>()?;
    tape.stack_rows(&rows)
}

/// Additive attention pooling over matrix rows: scores
/// `e_t = v . tanh(W h_t)`, weights `softmax(e)`, output the weighted sum
/// of rows. Returns `(pooled, weights)`; the weights feed interpretability
/// exports.
pub fn attention_pool(
    tape: &mut Tape,
    hs: NodeId,
    w_proj: NodeId,
    v: NodeId,
) -> Result<(NodeId, NodeId)> {
    let z = tape.matmul(hs, w_proj)?;
    let t = tape.tanh(z);
    let scores = tape.matvec(t, v)?;
    let alpha = tape.softmax(scores)?;
    let pooled = tape.vecmat(alpha, hs)?;
    Ok((pooled, alpha))
}

/// Uniform Glorot-style init in `±sqrt(6/(fan_in+fan_out))`.
pub fn glorot(shape: Vec<usize>, fan_in: usize, fan_out: usize, rng: &mut PortableRng) -> Tensor {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let numel: usize = shape.iter().product();
    let data = (0..numel).map(|_| (rng.next_f64() * 2.0 - 1.0) * bound).collect();
    Tensor::new(shape, data).expect("shape matches numel")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn leaf(tape: &mut Tape, data: Vec<f64>) -> NodeId {
        tape.leaf(Tensor::vector(data))
    }

    #[test]
    fn conv1d_hand_case() {
        // Din=1, H=2, W=[1,1], b=0, x=[1,2,3] -> [3,5]
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::matrix(3, 1, vec![1.0, 2.0, 3.0]).unwrap());
        let w = tape.leaf(Tensor::new(vec![1, 2, 1], vec![1.0, 1.0]).unwrap());
        let b = tape.leaf(Tensor::vector(vec![0.0]));
        let y = conv1d(&mut tape, x, w, b).unwrap();
        assert_eq!(tape.value(y).data(), &[3.0, 5.0]);
    }

    #[test]
    fn conv1d_zero_weights_give_zero() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::matrix(4, 2, vec![1.0; 8]).unwrap());
        let w = tape.leaf(Tensor::zeros(vec![3, 2, 2]));
        let b = tape.leaf(Tensor::zeros(vec![3]));
        let y = conv1d(&mut tape, x, w, b).unwrap();
        assert!(tape.value(y).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn conv1d_relu_clips_negative_bias() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::matrix(1, 1, vec![1.0]).unwrap());
        let w = tape.leaf(Tensor::new(vec![1, 1, 1], vec![1.0]).unwrap());
        let b = tape.leaf(Tensor::vector(vec![-5.0]));
        let y = conv1d(&mut tape, x, w, b).unwrap();
        assert_eq!(tape.value(y).data(), &[0.0]);
    }

    #[test]
    fn conv1d_rejects_short_input() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::matrix(2, 1, vec![1.0, 2.0]).unwrap());
        let w = tape.leaf(Tensor::new(vec![1, 3, 1], vec![1.0, 1.0, 1.0]).unwrap());
        let b = tape.leaf(Tensor::vector(vec![0.0]));
        assert!(conv1d(&mut tape, x, w, b).is_err());
    }

    fn zero_lstm(tape: &mut Tape, hidden: usize, input: usize) -> LstmParams {
        let z = |tape: &mut Tape| tape.leaf(Tensor::zeros(vec![hidden, hidden + input]));
        let zb = |tape: &mut Tape| tape.leaf(Tensor::zeros(vec![hidden]));
        LstmParams {
            w_f: z(tape),
            w_i: z(tape),
            w_c: z(tape),
            w_o: z(tape),
            b_f: zb(tape),
            b_i: zb(tape),
            b_c: zb(tape),
            b_o: zb(tape),
        }
    }

    #[test]
    fn lstm_step_zero_params() {
        // All-zero weights: every gate is 0.5, candidate is 0, so both the
        // cell and hidden states stay 0.
        let mut tape = Tape::new();
        let params = zero_lstm(&mut tape, 2, 3);
        let x = leaf(&mut tape, vec![1.0, -1.0, 0.5]);
        let h0 = leaf(&mut tape, vec![0.0, 0.0]);
        let c0 = leaf(&mut tape, vec![0.0, 0.0]);
        let (h, c) = lstm_step(&mut tape, &params, x, h0, c0).unwrap();
        assert_eq!(tape.value(h).data(), &[0.0, 0.0]);
        assert_eq!(tape.value(c).data(), &[0.0, 0.0]);
    }

    #[test]
    fn lstm_step_saturated_gates_carry_cell_state() {
        // Large positive f/i/o biases saturate those gates at 1; with a
        // zero candidate the cell keeps its previous value and
        // h = tanh(c_prev).
        let mut tape = Tape::new();
        let hidden = 1;
        let z = |tape: &mut Tape| tape.leaf(Tensor::zeros(vec![hidden, hidden + 1]));
        let big = |tape: &mut Tape| tape.leaf(Tensor::vector(vec![100.0]));
        let params = LstmParams {
            w_f: z(&mut tape),
            w_i: z(&mut tape),
            w_c: z(&mut tape),
            w_o: z(&mut tape),
            b_f: big(&mut tape),
            b_i: big(&mut tape),
            b_c: tape.leaf(Tensor::vector(vec![0.0])),
            b_o: big(&mut tape),
        };
        let x = leaf(&mut tape, vec![0.3]);
        let h0 = leaf(&mut tape, vec![0.0]);
        let c0 = leaf(&mut tape, vec![0.5]);
        let (h, c) = lstm_step(&mut tape, &params, x, h0, c0).unwrap();
        assert!((tape.value(c).data()[0] - 0.5).abs() < 1e-9);
        assert!((tape.value(h).data()[0] - 0.5f64.tanh()).abs() < 1e-4);
        assert!((tape.value(h).data()[0] - 0.4621).abs() < 1e-3);
    }

    #[test]
    fn bilstm_single_position_and_zero_params() {
        let mut tape = Tape::new();
        let fwd = zero_lstm(&mut tape, 3, 2);
        let bwd = zero_lstm(&mut tape, 3, 2);
        let x = tape.leaf(Tensor::matrix(1, 2, vec![0.4, -0.2]).unwrap());
        let out = bilstm(&mut tape, x, &fwd, &bwd, 3).unwrap();
        assert_eq!(tape.value(out).shape(), &[1, 6]);
        assert!(tape.value(out).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn bilstm_palindrome_symmetry_with_shared_params() {
        // If forward and backward share parameters and the input is
        // palindromic, the forward state at t equals the backward state at
        // L-1-t, so each output row's two halves mirror across positions.
        let mut tape = Tape::new();
        let mut rng = PortableRng::new(17);
        let hidden = 2;
        let input = 2;
        let w = |tape: &mut Tape, rng: &mut PortableRng| {
            let t = glorot(vec![hidden, hidden + input], hidden + input, hidden, rng);
            tape.leaf(t)
        };
        let b = |tape: &mut Tape| tape.leaf(Tensor::zeros(vec![hidden]));
        let params = LstmParams {
            w_f: w(&mut tape, &mut rng),
            w_i: w(&mut tape, &mut rng),
            w_c: w(&mut tape, &mut rng),
            w_o: w(&mut tape, &mut rng),
            b_f: b(&mut tape),
            b_i: b(&mut tape),
            b_c: b(&mut tape),
            b_o: b(&mut tape),
        };
        let x = tape
            .leaf(Tensor::matrix(3, 2, vec![0.5, -0.1, 0.2, 0.9, 0.5, -0.1]).unwrap());
        let out = bilstm(&mut tape, x, &params, &params, hidden).unwrap();
        let o = tape.value(out);
        for t in 0..3 {
            for k in 0..hidden {
                let fwd_t = o.row(t)[k];
                let bwd_mirror = o.row(2 - t)[hidden + k];
                assert!((fwd_t - bwd_mirror).abs() < 1e-12, "t={t} k={k}");
            }
        }
    }

    #[test]
    fn attention_identical_rows_returns_the_row() {
        let mut tape = Tape::new();
        let hs = tape.leaf(Tensor::matrix(3, 2, vec![0.7, -0.3, 0.7, -0.3, 0.7, -0.3]).unwrap());
        let w = tape.leaf(Tensor::matrix(2, 2, vec![0.5, -1.0, 0.25, 0.75]).unwrap());
        let v = leaf(&mut tape, vec![1.0, -2.0]);
        let (pooled, alpha) = attention_pool(&mut tape, hs, w, v).unwrap();
        let p = tape.value(pooled).data();
        assert!((p[0] - 0.7).abs() < 1e-12);
        assert!((p[1] + 0.3).abs() < 1e-12);
        let a = tape.value(alpha).data();
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn attention_zero_scoring_params_is_mean_pool() {
        let mut tape = Tape::new();
        let hs = tape.leaf(Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 2.0]).unwrap());
        let w = tape.leaf(Tensor::zeros(vec![2, 2]));
        let v = leaf(&mut tape, vec![0.0, 0.0]);
        let (pooled, alpha) = attention_pool(&mut tape, hs, w, v).unwrap();
        assert_eq!(tape.value(alpha).data(), &[0.5, 0.5]);
        assert_eq!(tape.value(pooled).data(), &[0.5, 1.0]);
    }

    #[test]
    fn attention_two_row_hand_case() {
        // W = I, v = [1, 0]: scores are tanh of the first column.
        let mut tape = Tape::new();
        let hs = tape.leaf(Tensor::matrix(2, 2, vec![0.2, 1.0, 0.8, -1.0]).unwrap());
        let w = tape.leaf(Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap());
        let v = leaf(&mut tape, vec![1.0, 0.0]);
        let (pooled, alpha) = attention_pool(&mut tape, hs, w, v).unwrap();
        let (e0, e1) = (0.2f64.tanh(), 0.8f64.tanh());
        let z = e0.exp() + e1.exp();
        let (a0, a1) = (e0.exp() / z, e1.exp() / z);
        let got = tape.value(alpha).data();
        assert!((got[0] - a0).abs() < 1e-12);
        assert!((got[1] - a1).abs() < 1e-12);
        let p = tape.value(pooled).data();
        assert!((p[0] - (a0 * 0.2 + a1 * 0.8)).abs() < 1e-12);
        assert!((p[1] - (a0 * 1.0 + a1 * -1.0)).abs() < 1e-12);
    }

    #[test]
    fn backward_sum_is_ones() {
        let mut tape = Tape::new();
        let x = leaf(&mut tape, vec![1.0, 2.0, 3.0]);
        let s = tape.sum(x);
        let grads = tape.backward(s).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn backward_dot_swaps_operands() {
        let mut tape = Tape::new();
        let x = leaf(&mut tape, vec![1.0, 2.0]);
        let y = leaf(&mut tape, vec![-3.0, 4.0]);
        let d = tape.dot(x, y).unwrap();
        let grads = tape.backward(d).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[-3.0, 4.0]);
        assert_eq!(grads.get(y).unwrap().data(), &[1.0, 2.0]);
    }

    #[test]
    fn backward_fanout_accumulates() {
        // y = x . x -> dy/dx = 2x
        let mut tape = Tape::new();
        let x = leaf(&mut tape, vec![1.5, -2.0]);
        let d = tape.dot(x, x).unwrap();
        let grads = tape.backward(d).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[3.0, -4.0]);
    }

    #[test]
    fn backward_rejects_non_scalar_root() {
        let mut tape = Tape::new();
        let x = leaf(&mut tape, vec![1.0, 2.0]);
        assert!(tape.backward(x).is_err());
    }

    #[test]
    fn softmax_sums_to_one_and_is_shift_invariant() {
        let mut tape = Tape::new();
        let x = leaf(&mut tape, vec![0.3, -1.2, 2.5, 0.0]);
        let s = tape.softmax(x).unwrap();
        let sum: f64 = tape.value(s).data().iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);

        let shifted = tape.add_const(x, 7.5);
        let s2 = tape.softmax(shifted).unwrap();
        for (a, b) in tape.value(s).data().iter().zip(tape.value(s2).data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn relu_subgradient_at_zero_is_zero() {
        let mut tape = Tape::new();
        let x = leaf(&mut tape, vec![0.0, 1.0, -1.0]);
        let y = tape.relu(x);
        let s = tape.sum(y);
        let grads = tape.backward(s).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[0.0, 1.0, 0.0]);
    }
}
