//! Randomized gradient verification sweeps.
//!
//! Every differentiable primitive is exercised on random shapes and inputs;
//! analytic adjoints are compared against central finite differences. Test
//! suites call [`primitive_gradient_sweep`] and assert on the report.
//!
//! A coordinate whose analytic and central values agree within `1e-10`
//! absolute is counted as exact: central differences of an O(1) function
//! carry ~1e-11 absolute noise, so a relative comparison says nothing
//! about coordinates whose true gradient sits at that level.

use super::{attention_pool, bilstm, conv1d, lstm_step, LstmParams, NodeId, Tape, Tensor};
use crate::augment::PortableRng;

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub trials: usize,
    pub max_rel_err: f64,
    pub worst_case: String,
}

struct Case<'a> {
    name: &'a str,
    shapes: Vec<Vec<usize>>,
    low: f64,
    high: f64,
    /// Per-tensor draw ranges overriding `low`/`high`.
    ranges: Option<Vec<(f64, f64)>>,
    /// Resample inputs while this predicate rejects them (kink avoidance).
    reject: Option<Box<dyn Fn(&[f64]) -> bool>>,
    build: Box<dyn Fn(&mut Tape, &[NodeId]) -> NodeId>,
}

fn sample_theta(case: &Case, rng: &mut PortableRng) -> Vec<f64> {
    loop {
        let mut theta = Vec::new();
        for (t, shape) in case.shapes.iter().enumerate() {
            let (low, high) = match &case.ranges {
                Some(r) => r[t],
                None => (case.low, case.high),
            };
            let numel: usize = shape.iter().product();
            theta.extend((0..numel).map(|_| low + rng.next_f64() * (high - low)));
        }
        match &case.reject {
            Some(r) if r(&theta) => continue,
            _ => return theta,
        }
    }
}

fn leaves(tape: &mut Tape, shapes: &[Vec<usize>], theta: &[f64]) -> Vec<NodeId> {
    let mut ids = Vec::with_capacity(shapes.len());
    let mut off = 0;
    for shape in shapes {
        let numel: usize = shape.iter().product();
        let t = Tensor::new(shape.clone(), theta[off..off + numel].to_vec()).expect("shape");
        ids.push(tape.leaf(t));
        off += numel;
    }
    ids
}

/// Check one case at one sampled input; returns the max relative error.
fn run_case(case: &Case, rng: &mut PortableRng) -> f64 {
    let theta = sample_theta(case, rng);

    // Dry run to learn the output shape, then fix a random linear
    // functional so every output component contributes to the scalar.
    let out_shape = {
        let mut tape = Tape::new();
        let ids = leaves(&mut tape, &case.shapes, &theta);
        let out = (case.build)(&mut tape, &ids);
        tape.value(out).shape().to_vec()
    };
    let coeff_data: Vec<f64> = (0..out_shape.iter().product::<usize>())
        .map(|_| rng.next_f64() * 2.0 - 1.0)
        .collect();
    let coeff = Tensor::new(out_shape, coeff_data).expect("shape");

    let eval = |theta: &[f64]| -> (f64, Option<Vec<f64>>, &'static str) {
        let mut tape = Tape::new();
        let ids = leaves(&mut tape, &case.shapes, theta);
        let out = (case.build)(&mut tape, &ids);
        let root = if tape.value(out).is_scalar() {
            out
        } else {
            let masked = tape.mul_mask(out, coeff.clone()).expect("coeff shape");
            tape.sum(masked)
        };
        let value = tape.value(root).item();
        let grads = tape.backward(root).expect("scalar root");
        let mut flat = Vec::new();
        for (id, shape) in ids.iter().zip(&case.shapes) {
            match grads.get(*id) {
                Some(g) => flat.extend_from_slice(g.data()),
                None => flat.extend(std::iter::repeat(0.0).take(shape.iter().product())),
            }
        }
        (value, Some(flat), "")
    };

    let (_, analytic, _) = eval(&theta);
    let analytic = analytic.expect("gradient");
    guarded_max_rel_err(|t| eval(t).0, &analytic, &theta, 1e-5, 1e-10)
}

/// Max relative error like [`super::finite_diff_check`], except that a
/// coordinate already agreeing within `abs_floor` contributes zero.
pub fn guarded_max_rel_err<F>(
    value: F,
    analytic: &[f64],
    theta: &[f64],
    eps: f64,
    abs_floor: f64,
) -> f64
where
    F: Fn(&[f64]) -> f64,
{
    let mut worst = 0.0f64;
    let mut probe = theta.to_vec();
    for i in 0..theta.len() {
        probe[i] = theta[i] + eps;
        let up = value(&probe);
        probe[i] = theta[i] - eps;
        let down = value(&probe);
        probe[i] = theta[i];
        let central = (up - down) / (2.0 * eps);
        if (analytic[i] - central).abs() <= abs_floor {
            continue;
        }
        let rel = (analytic[i] - central).abs() / central.abs().max(1e-8);
        worst = worst.max(rel);
    }
    worst
}

fn vec2(a: usize) -> Vec<usize> {
    vec![a]
}

fn mat(a: usize, b: usize) -> Vec<usize> {
    vec![a, b]
}

fn cases(rng: &mut PortableRng) -> Vec<Case<'static>> {
    let n = 2 + rng.below(5);
    let m = 2 + rng.below(4);
    let k = 2 + rng.below(4);
    let l = 4 + rng.below(4);
    let h = 2 + rng.below(2);
    let chan = 1 + rng.below(3);
    let dh = 1 + rng.below(3);

    vec![
        Case {
            name: "add",
            shapes: vec![vec2(n), vec2(n)],
            low: -2.0,
            high: 2.0,
            ranges: None,
            reject: None,
            build: Box::new(|t, ids| t.add(ids[0], ids[1]).unwrap()),
        },
        Case {
            name: "add_row_broadcast",
            shapes: vec![mat(m, n), vec2(n)],
            low: -2.0,
            high: 2.0,
            ranges: None,
            reject: None,
            build: Box::new(|t, ids| t.add(ids[0], ids[1]).unwrap()),
        },
        Case {
            name: "sub",
            shapes: vec![vec2(n), vec2(n)],
            low: -2.0,
            high: 2.0,
            ranges: None,
            reject: None,
            build: Box::new(|t, ids| t.sub(ids[0], ids[1]).unwrap()),
        },
        Case {
            name: "mul",
            shapes: vec![vec2(n), vec2(n)],
            low: -2.0,
            high: 2.0,
            ranges: None,
            reject: None,
            build: Box::new(|t, ids| t.mul(ids[0], ids[1]).unwrap()),
        },
        Case {
            name: "mul_scalar",
            shapes: vec![vec2(n), vec2(1)],
            low: -2.0,
            high: 2.0,
            ranges: None,
            reject: None,
            build: Box::new(|t, ids| t.mul(ids[0], ids[1]).unwrap()),
        },
        Case {
            name: "scale_add_const",
            shapes: vec![vec2(n)],
            low: -2.0,
            high: 2.0,
            ranges: None,
            reject: None,
            build: Box::new(|t, ids| {
                let s = t.scale(ids[0], -1.7);
                t.add_const(s, 0.3)
            }),
        },
        Case {
            name: "matmul",
            shapes: vec![mat(m, k), mat(k, n)],
            low: -1.5,
            high: 1.5,
            ranges: None,
            reject: None,
            build: Box::new(|t, ids| t.matmul(ids[0], ids[1]).unwrap()),
        },
        Case {
            name: "matvec",
            shapes: vec![mat(m, k), vec2(k)],
            low: -1.5,
            high: 1.5,
            ranges: None,
            reject: None,
            build: Box::new(|t, ids| t.matvec(ids[0], ids[1]).unwrap()),
        },
        Case {
            name: "vecmat",
            shapes: vec![vec2(m), mat(m, k)],
            low: -1.5,
            high: 1.5,
            ranges: None,
            reject: None,
            build: Box::new(|t, ids| t.vecmat(ids[0], ids[1]).unwrap()),
        },
        Case {
            name: "dot",
            shapes: vec![vec2(n), vec2(n)],
            low: -2.0,
            high: 2.0,
            ranges: None,
            reject: None,
            build: Box::new(|t, ids| t.dot(ids[0], ids[1]).unwrap()),
        },
        Case {
            name: "relu",
            shapes: vec![vec2(n)],
            low: -2.0,
            high: 2.0,
            ranges: None,
            reject: Some(Box::new(|t| t.iter().any(|x| x.abs() < 1e-3))),
            build: Box::new(|t, ids| t.relu(ids[0])),
        },
        Case {
            name: "sigmoid",
            shapes: vec![vec2(n)],
            low: -3.0,
            high: 3.0,
            ranges: None,
            reject: None,
            build: Box::new(|t, ids| t.sigmoid(ids[0])),
        },
        Case {
            name: "tanh",
            shapes: vec![vec2(n)],
            low: -3.0,
            high: 3.0,
            ranges: None,
            reject: None,
            build: Box::new(|t, ids| t.tanh(ids[0])),
        },
        Case {
            name: "exp",
            shapes: vec![vec2(n)],
            low: -2.0,
            high: 2.0,
            ranges: None,
            reject: None,
            build: Box::new(|t, ids| t.exp(ids[0])),
        },
        Case {
            name: "ln",
            shapes: vec![vec2(n)],
            low: 0.2,
            high: 3.0,
            ranges: None,
            reject: None,
            build: Box::new(|t, ids| t.ln(ids[0])),
        },
        Case {
            name: "pow_const",
            shapes: vec![vec2(n)],
            low: 0.2,
            high: 2.0,
            ranges: None,
            reject: None,
            build: Box::new(|t, ids| t.pow_const(ids[0], 1.7)),
        },
        Case {
            name: "clamp_min",
            shapes: vec![vec2(n)],
            low: -1.0,
            high: 1.0,
            ranges: None,
            reject: Some(Box::new(|t| t.iter().any(|x| (x - 0.1).abs() < 1e-3))),
            build: Box::new(|t, ids| t.clamp_min(ids[0], 0.1)),
        },
        Case {
            name: "softmax",
            shapes: vec![vec2(n)],
            low: -2.0,
            high: 2.0,
            ranges: None,
            reject: None,
            build: Box::new(|t, ids| t.softmax(ids[0]).unwrap()),
        },
        Case {
            name: "logsumexp",
            shapes: vec![vec2(n)],
            low: -2.0,
            high: 2.0,
            ranges: None,
            reject: None,
            build: Box::new(|t, ids| t.logsumexp(ids[0]).unwrap()),
        },
        Case {
            name: "sum",
            shapes: vec![vec2(n)],
            low: -2.0,
            high: 2.0,
            ranges: None,
            reject: None,
            build: Box::new(|t, ids| t.sum(ids[0])),
        },
        Case {
            name: "mean",
            shapes: vec![mat(m, n)],
            low: -2.0,
            high: 2.0,
            ranges: None,
            reject: None,
            build: Box::new(|t, ids| t.mean(ids[0])),
        },
        Case {
            name: "concat_vec",
            shapes: vec![vec2(n), vec2(m)],
            low: -2.0,
            high: 2.0,
            ranges: None,
            reject: None,
            build: Box::new(|t, ids| t.concat_vec(ids[0], ids[1]).unwrap()),
        },
        Case {
            name: "row_stack",
            shapes: vec![mat(m, n)],
            low: -2.0,
            high: 2.0,
            ranges: None,
            reject: None,
            build: Box::new(move |t, ids| {
                let r0 = t.row(ids[0], 0).unwrap();
                let r1 = t.row(ids[0], 1).unwrap();
                t.stack_rows(&[r1, r0, r1]).unwrap()
            }),
        },
        Case {
            name: "max_elem",
            shapes: vec![vec2(n), vec2(n)],
            low: -2.0,
            high: 2.0,
            ranges: None,
            reject: Some(Box::new(move |t| {
                let half = t.len() / 2;
                (0..half).any(|i| (t[i] - t[half + i]).abs() < 1e-2)
            })),
            build: Box::new(|t, ids| t.max_elem(ids[0], ids[1]).unwrap()),
        },
        Case {
            name: "mul_mask",
            shapes: vec![vec2(n)],
            low: -2.0,
            high: 2.0,
            ranges: None,
            reject: None,
            build: Box::new(move |t, ids| {
                let mask =
                    Tensor::vector((0..n).map(|i| if i % 2 == 0 { 1.25 } else { 0.0 }).collect());
                t.mul_mask(ids[0], mask).unwrap()
            }),
        },
        Case {
            name: "conv1d_linear",
            shapes: vec![mat(l, k), vec![chan, h, k], vec2(chan)],
            low: -1.5,
            high: 1.5,
            ranges: None,
            reject: None,
            build: Box::new(|t, ids| t.conv1d_linear(ids[0], ids[1], ids[2]).unwrap()),
        },
        Case {
            name: "conv1d_relu",
            shapes: vec![mat(l, k), vec![chan, h, k], vec2(chan)],
            low: 0.1,
            high: 1.5,
            ranges: None,
            reject: None,
            build: Box::new(|t, ids| conv1d(t, ids[0], ids[1], ids[2]).unwrap()),
        },
        Case {
            name: "lstm_step",
            shapes: vec![
                mat(dh, dh + k),
                mat(dh, dh + k),
                mat(dh, dh + k),
                mat(dh, dh + k),
                vec2(dh),
                vec2(dh),
                vec2(dh),
                vec2(dh),
                vec2(k),
                vec2(dh),
                vec2(dh),
            ],
            low: -1.0,
            high: 1.0,
            ranges: None,
            reject: None,
            build: Box::new(|t, ids| {
                let params = LstmParams {
                    w_f: ids[0],
                    w_i: ids[1],
                    w_c: ids[2],
                    w_o: ids[3],
                    b_f: ids[4],
                    b_i: ids[5],
                    b_c: ids[6],
                    b_o: ids[7],
                };
                let (h, c) = lstm_step(t, &params, ids[8], ids[9], ids[10]).unwrap();
                t.concat_vec(h, c).unwrap()
            }),
        },
        Case {
            name: "attention_pool",
            shapes: vec![mat(l, k), mat(k, k), vec2(k)],
            low: -1.0,
            high: 1.0,
            ranges: None,
            reject: None,
            build: Box::new(|t, ids| {
                let (pooled, alpha) = attention_pool(t, ids[0], ids[1], ids[2]).unwrap();
                t.concat_vec(pooled, alpha).unwrap()
            }),
        },
        Case {
            name: "composite_conv_lstm_attention_dense",
            // Depth is kept small so no gradient coordinate attenuates
            // below finite-difference resolution; real-scale coverage
            // comes from the model-level loss checks.
            shapes: {
                let (l, k, h, chan, dh) = (4, 3, 2, 2, 2);
                vec![
                    mat(l, k),          // input
                    vec![chan, h, k],   // conv kernels
                    vec2(chan),         // conv bias
                    mat(dh, dh + chan), // lstm gates
                    mat(dh, dh + chan),
                    mat(dh, dh + chan),
                    mat(dh, dh + chan),
                    vec2(dh),
                    vec2(dh),
                    vec2(dh),
                    vec2(dh),
                    mat(dh, dh), // attention proj
                    vec2(dh),    // attention score vector
                    mat(2, dh),  // dense
                    vec2(2),
                ]
            },
            low: -0.8,
            high: 0.8,
            // Positive draws for the conv tensors keep every pre-activation
            // away from the ReLU kink, where central differences are
            // meaningless; the recurrent half keeps signed draws.
            ranges: Some(
                [(0.05, 0.9), (0.05, 0.9), (0.05, 0.9)]
                    .into_iter()
                    .chain(std::iter::repeat((-0.8, 0.8)).take(12))
                    .collect(),
            ),
            reject: None,
            build: Box::new(move |t, ids| {
                let dh = 2;
                let fmap = conv1d(t, ids[0], ids[1], ids[2]).unwrap();
                let params = LstmParams {
                    w_f: ids[3],
                    w_i: ids[4],
                    w_c: ids[5],
                    w_o: ids[6],
                    b_f: ids[7],
                    b_i: ids[8],
                    b_c: ids[9],
                    b_o: ids[10],
                };
                let steps = t.value(fmap).rows();
                let mut hprev = t.leaf(Tensor::zeros(vec![dh]));
                let mut cprev = t.leaf(Tensor::zeros(vec![dh]));
                let mut rows = Vec::new();
                for s in 0..steps {
                    let x_t = t.row(fmap, s).unwrap();
                    let (hn, cn) = lstm_step(t, &params, x_t, hprev, cprev).unwrap();
                    hprev = hn;
                    cprev = cn;
                    rows.push(hn);
                }
                let hs = t.stack_rows(&rows).unwrap();
                let (pooled, _) = attention_pool(t, hs, ids[11], ids[12]).unwrap();
                let z = t.matvec(ids[13], pooled).unwrap();
                let logits = t.add(z, ids[14]).unwrap();
                let probs = t.softmax(logits).unwrap();
                let lp = t.ln(probs);
                // Negative log-likelihood of class 0; its logit gradient
                // stays O(1) so no upstream coordinate underflows the
                // finite-difference resolution.
                let pick = t.mul_mask(lp, Tensor::vector(vec![-1.0, 0.0])).unwrap();
                t.sum(pick)
            }),
        },
        Case {
            name: "bilstm",
            shapes: vec![
                mat(l, k),
                mat(dh, dh + k),
                mat(dh, dh + k),
                mat(dh, dh + k),
                mat(dh, dh + k),
                vec2(dh),
                vec2(dh),
                vec2(dh),
                vec2(dh),
                mat(dh, dh + k),
                mat(dh, dh + k),
                mat(dh, dh + k),
                mat(dh, dh + k),
                vec2(dh),
                vec2(dh),
                vec2(dh),
                vec2(dh),
            ],
            low: -0.8,
            high: 0.8,
            ranges: None,
            reject: None,
            build: Box::new(move |t, ids| {
                let fwd = LstmParams {
                    w_f: ids[1],
                    w_i: ids[2],
                    w_c: ids[3],
                    w_o: ids[4],
                    b_f: ids[5],
                    b_i: ids[6],
                    b_c: ids[7],
                    b_o: ids[8],
                };
                let bwd = LstmParams {
                    w_f: ids[9],
                    w_i: ids[10],
                    w_c: ids[11],
                    w_o: ids[12],
                    b_f: ids[13],
                    b_i: ids[14],
                    b_c: ids[15],
                    b_o: ids[16],
                };
                bilstm(t, ids[0], &fwd, &bwd, dh).unwrap()
            }),
        },
    ]
}

/// Run `rounds` randomized-shape rounds over every primitive and
/// composition; each round re-draws shapes and inputs.
pub fn primitive_gradient_sweep(rounds: usize, seed: u64) -> SweepReport {
    let mut rng = PortableRng::new(seed);
    let mut trials = 0;
    let mut max_rel_err = 0.0f64;
    let mut worst_case = String::new();
    for _ in 0..rounds {
        for case in cases(&mut rng) {
            let err = run_case(&case, &mut rng);
            trials += 1;
            if err > max_rel_err {
                max_rel_err = err;
                worst_case = case.name.to_string();
            }
        }
    }
    SweepReport { trials, max_rel_err, worst_case }
}
