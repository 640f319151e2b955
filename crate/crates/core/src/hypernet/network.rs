//! Forward pass and reverse-mode gradients of the BiLSTM hypernetwork.
//!
//! Per example: each word vector goes through a linear input projection,
//! then `num_layers` bidirectional LSTM layers. The prediction is a linear
//! head over the concatenated final forward state and final backward state
//! of the top layer. Dropout (inverted, rate `p`) is applied to the
//! projection output, between LSTM layers, and to the head input.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::loss::{combined_with_grad, LossConfig};
use super::params::{HypernetParams, LstmDirection};
use crate::error::{Error, Result};
use crate::linalg::{axpy, dot};

/// Dropout behaviour for a pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Eval,
    /// Dropout masks are drawn from a generator seeded with `seed`, one
    /// independent stream per example.
    Train { seed: u64 },
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

struct Step {
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    /// Activated gates `[i, f, g, o]`, `4H`.
    gates: Vec<f64>,
    tanh_c: Vec<f64>,
    h: Vec<f64>,
    c: Vec<f64>,
}

fn cell_forward(dir: &LstmDirection, u: &[f64], h_prev: &[f64], c_prev: &[f64]) -> Step {
    let h = h_prev.len();
    let mut gates = dir.bias.as_slice().to_vec();
    for (r, g) in gates.iter_mut().enumerate() {
        *g += dot(dir.w_ih.row(r), u) + dot(dir.w_hh.row(r), h_prev);
    }
    for k in 0..h {
        gates[k] = sigmoid(gates[k]);
        gates[h + k] = sigmoid(gates[h + k]);
        gates[2 * h + k] = gates[2 * h + k].tanh();
        gates[3 * h + k] = sigmoid(gates[3 * h + k]);
    }
    let c: Vec<f64> = (0..h)
        .map(|k| gates[h + k] * c_prev[k] + gates[k] * gates[2 * h + k])
        .collect();
    let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
    let hidden = (0..h).map(|k| gates[3 * h + k] * tanh_c[k]).collect();
    Step {
        h_prev: h_prev.to_vec(),
        c_prev: c_prev.to_vec(),
        gates,
        tanh_c,
        h: hidden,
        c,
    }
}

/// Runs one direction over `inputs`; `steps[t]` is the state after reading
/// position `t`.
fn direction_forward(dir: &LstmDirection, inputs: &[Vec<f64>], reverse: bool) -> Vec<Step> {
    let h = dir.w_hh.cols();
    let n = inputs.len();
    let mut steps: Vec<Option<Step>> = (0..n).map(|_| None).collect();
    let mut h_prev = vec![0.0; h];
    let mut c_prev = vec![0.0; h];
    for i in 0..n {
        let t = if reverse { n - 1 - i } else { i };
        let s = cell_forward(dir, &inputs[t], &h_prev, &c_prev);
        h_prev.clone_from(&s.h);
        c_prev.clone_from(&s.c);
        steps[t] = Some(s);
    }
    steps.into_iter().map(|s| s.expect("every position visited")).collect()
}

/// Accumulates parameter gradients into `grad` and input gradients into
/// `d_inputs`, given `d_h[t]`, the loss gradient flowing into `h_t` from
/// outside the recurrence.
fn direction_backward(
    dir: &LstmDirection,
    grad: &mut LstmDirection,
    inputs: &[Vec<f64>],
    steps: &[Step],
    d_h: &[Vec<f64>],
    reverse: bool,
    d_inputs: &mut [Vec<f64>],
) {
    let h = dir.w_hh.cols();
    let n = inputs.len();
    let mut dh_next = vec![0.0; h];
    let mut dc_next = vec![0.0; h];
    let mut da = vec![0.0; 4 * h];
    for i in (0..n).rev() {
        let t = if reverse { n - 1 - i } else { i };
        let s = &steps[t];
        for k in 0..h {
            let (ig, fg, gg, og) = (s.gates[k], s.gates[h + k], s.gates[2 * h + k], s.gates[3 * h + k]);
            let dh = d_h[t][k] + dh_next[k];
            let d_o = dh * s.tanh_c[k];
            let dc = dc_next[k] + dh * og * (1.0 - s.tanh_c[k] * s.tanh_c[k]);
            da[k] = dc * gg * ig * (1.0 - ig);
            da[h + k] = dc * s.c_prev[k] * fg * (1.0 - fg);
            da[2 * h + k] = dc * ig * (1.0 - gg * gg);
            da[3 * h + k] = d_o * og * (1.0 - og);
            dc_next[k] = dc * fg;
        }
        dh_next.iter_mut().for_each(|v| *v = 0.0);
        for (r, &d) in da.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            grad.bias.as_mut_slice()[r] += d;
            axpy(d, &inputs[t], grad.w_ih.row_mut(r));
            axpy(d, &s.h_prev, grad.w_hh.row_mut(r));
            axpy(d, dir.w_ih.row(r), &mut d_inputs[t]);
            axpy(d, dir.w_hh.row(r), &mut dh_next);
        }
    }
}

struct LayerTrace {
    inputs: Vec<Vec<f64>>,
    fwd: Vec<Step>,
    bwd: Vec<Step>,
    /// Dropout mask on this layer's outputs (absent for the top layer).
    out_mask: Option<Vec<Vec<f64>>>,
}

struct Trace<'a> {
    x: &'a [&'a [f64]],
    proj_mask: Option<Vec<Vec<f64>>>,
    layers: Vec<LayerTrace>,
    z: Vec<f64>,
    z_mask: Option<Vec<f64>>,
}

fn dropout_mask(rng: &mut Option<ChaCha8Rng>, len: usize, p: f64) -> Option<Vec<f64>> {
    let rng = rng.as_mut()?;
    if p == 0.0 {
        return None;
    }
    let keep = 1.0 / (1.0 - p);
    Some(
        (0..len)
            .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
            .collect(),
    )
}

fn apply(mask: &Option<Vec<f64>>, v: &mut [f64]) {
    if let Some(m) = mask {
        v.iter_mut().zip(m).for_each(|(x, k)| *x *= k);
    }
}

fn example_rng(mode: Mode, index: usize) -> Option<ChaCha8Rng> {
    match mode {
        Mode::Eval => None,
        Mode::Train { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(index as u64);
            Some(rng)
        }
    }
}

fn forward_one<'a>(
    params: &HypernetParams,
    x: &'a [&'a [f64]],
    mode: Mode,
    index: usize,
) -> Result<(Vec<f64>, Trace<'a>)> {
    if x.is_empty() {
        return Err(Error::EmptyInput { index });
    }
    let arch = params.arch;
    if let Some(bad) = x.iter().find(|v| v.len() != arch.input_dim) {
        return Err(Error::Shape(format!(
            "example {index}: word vector of dim {} fed to a network expecting {}",
            bad.len(),
            arch.input_dim
        )));
    }
    let h = arch.hidden_dim;
    let p = arch.dropout;
    let mut rng = example_rng(mode, index);

    let mut proj_mask = Vec::new();
    let mut current: Vec<Vec<f64>> = x
        .iter()
        .map(|xt| {
            let mut v: Vec<f64> = (0..h)
                .map(|r| params.input_b.as_slice()[r] + dot(params.input_w.row(r), xt))
                .collect();
            let m = dropout_mask(&mut rng, h, p);
            apply(&m, &mut v);
            proj_mask.push(m);
            v
        })
        .collect();
    let proj_mask = proj_mask.into_iter().collect::<Option<Vec<_>>>();

    let n = x.len();
    let mut layers = Vec::with_capacity(arch.num_layers);
    for (l, layer) in params.layers.iter().enumerate() {
        let fwd = direction_forward(&layer.forward, &current, false);
        let bwd = direction_forward(&layer.backward, &current, true);
        let mut outputs: Vec<Vec<f64>> = (0..n)
            .map(|t| fwd[t].h.iter().chain(&bwd[t].h).copied().collect())
            .collect();
        let out_mask = if l + 1 < arch.num_layers {
            let masks: Option<Vec<Vec<f64>>> = outputs
                .iter_mut()
                .map(|o| {
                    let m = dropout_mask(&mut rng, 2 * h, p);
                    apply(&m, o);
                    m
                })
                .collect();
            masks
        } else {
            None
        };
        let inputs = std::mem::replace(&mut current, outputs);
        layers.push(LayerTrace {
            inputs,
            fwd,
            bwd,
            out_mask,
        });
    }

    let top = layers.last().expect("at least one layer");
    let mut z: Vec<f64> = top.fwd[n - 1].h.iter().chain(&top.bwd[0].h).copied().collect();
    let z_mask = dropout_mask(&mut rng, 2 * h, p);
    apply(&z_mask, &mut z);
    let y = (0..arch.output_dim)
        .map(|r| params.head_b.as_slice()[r] + dot(params.head_w.row(r), &z))
        .collect();
    Ok((
        y,
        Trace {
            x,
            proj_mask,
            layers,
            z,
            z_mask,
        },
    ))
}

fn backward_one(params: &HypernetParams, trace: &Trace<'_>, dy: &[f64]) -> HypernetParams {
    let mut g = params.zeros_like();
    let h = params.arch.hidden_dim;
    let n = trace.x.len();

    let mut dz = vec![0.0; 2 * h];
    for (r, &d) in dy.iter().enumerate() {
        g.head_b.as_mut_slice()[r] += d;
        axpy(d, &trace.z, g.head_w.row_mut(r));
        axpy(d, params.head_w.row(r), &mut dz);
    }
    apply(&trace.z_mask, &mut dz);

    // Gradient w.r.t. each layer's (post-dropout) output sequence.
    let mut d_out: Vec<Vec<f64>> = vec![vec![0.0; 2 * h]; n];
    d_out[n - 1][..h].copy_from_slice(&dz[..h]);
    for k in 0..h {
        d_out[0][h + k] += dz[h + k];
    }

    for l in (0..params.layers.len()).rev() {
        let layer = &params.layers[l];
        let lt = &trace.layers[l];
        if let Some(masks) = &lt.out_mask {
            for (d, m) in d_out.iter_mut().zip(masks) {
                d.iter_mut().zip(m).for_each(|(a, b)| *a *= b);
            }
        }
        let d_fwd: Vec<Vec<f64>> = d_out.iter().map(|d| d[..h].to_vec()).collect();
        let d_bwd: Vec<Vec<f64>> = d_out.iter().map(|d| d[h..].to_vec()).collect();
        let d_in_len = lt.inputs[0].len();
        let mut d_inputs = vec![vec![0.0; d_in_len]; n];
        let gl = &mut g.layers[l];
        direction_backward(&layer.forward, &mut gl.forward, &lt.inputs, &lt.fwd, &d_fwd, false, &mut d_inputs);
        direction_backward(&layer.backward, &mut gl.backward, &lt.inputs, &lt.bwd, &d_bwd, true, &mut d_inputs);
        d_out = d_inputs;
    }

    for (t, d) in d_out.iter_mut().enumerate() {
        if let Some(masks) = &trace.proj_mask {
            d.iter_mut().zip(&masks[t]).for_each(|(a, b)| *a *= b);
        }
        for (r, &dv) in d.iter().enumerate() {
            g.input_b.as_mut_slice()[r] += dv;
            axpy(dv, trace.x[t], g.input_w.row_mut(r));
        }
    }
    g
}

/// Predicts one `D′` vector per input list. Empty lists are rejected.
pub fn forward(params: &HypernetParams, inputs: &[Vec<&[f64]>], mode: Mode) -> Result<Vec<Vec<f64>>> {
    inputs
        .par_iter()
        .enumerate()
        .map(|(i, x)| forward_one(params, x, mode, i).map(|(y, _)| y))
        .collect()
}

/// Batch loss and gradient of [`combined_with_grad`] with respect to every
/// parameter. Per-example gradients are summed in example order, so the
/// result does not depend on the thread count.
pub fn loss_and_gradients(
    params: &HypernetParams,
    inputs: &[Vec<&[f64]>],
    targets: &[Vec<f64>],
    loss_cfg: &LossConfig,
    mode: Mode,
) -> Result<(f64, HypernetParams)> {
    let traced: Vec<(Vec<f64>, Trace<'_>)> = inputs
        .par_iter()
        .enumerate()
        .map(|(i, x)| forward_one(params, x, mode, i))
        .collect::<Result<_>>()?;
    let preds: Vec<Vec<f64>> = traced.iter().map(|(y, _)| y.clone()).collect();
    let (loss, d_preds) = combined_with_grad(targets, &preds, loss_cfg, true)?;
    let per_example: Vec<HypernetParams> = traced
        .par_iter()
        .zip(d_preds.par_iter())
        .map(|((_, trace), dy)| backward_one(params, trace, dy))
        .collect();
    let mut total = params.zeros_like();
    for g in &per_example {
        total.add_scaled(1.0, g);
    }
    for (name, m) in total.tensors() {
        if !m.is_finite() {
            return Err(Error::NonFiniteGradient { tensor: name });
        }
    }
    Ok((loss, total))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hypernet::{augment_batch, Architecture, Augmentation};
    use crate::linalg::Matrix;
    use rand::Rng;

    fn arch(d_w: usize, h: usize, layers: usize, d_out: usize, dropout: f64) -> Architecture {
        Architecture {
            input_dim: d_w,
            hidden_dim: h,
            num_layers: layers,
            output_dim: d_out,
            dropout,
        }
    }

    #[test]
    fn zero_params_output_head_bias() {
        let mut p = HypernetParams::zeros(arch(3, 4, 2, 2, 0.0)).unwrap();
        p.head_b = Matrix::from_vec(2, 1, vec![0.7, -1.5]).unwrap();
        let x = [1.0, 2.0, 3.0];
        let y = [-4.0, 0.0, 9.0];
        let out = forward(&p, &[vec![&x[..]], vec![&x[..], &y[..]]], Mode::Eval).unwrap();
        assert_eq!(out, vec![vec![0.7, -1.5], vec![0.7, -1.5]]);
    }

    #[test]
    fn empty_list_is_rejected() {
        let p = HypernetParams::init(arch(2, 2, 1, 1, 0.0), 0).unwrap();
        let x = [1.0, 0.0];
        let r = forward(&p, &[vec![&x[..]], vec![]], Mode::Eval);
        assert!(matches!(r, Err(Error::EmptyInput { index: 1 })));
    }

    #[test]
    fn single_word_unaffected_by_augmentation() {
        let p = HypernetParams::init(arch(3, 5, 2, 4, 0.4), 3).unwrap();
        let store = [[0.2, -0.4, 1.1]];
        let base = forward(&p, &[vec![&store[0][..]]], Mode::Eval).unwrap();
        for seed in 0..10 {
            let lists = augment_batch(&[vec![0usize]], Augmentation::default(), seed);
            let input: Vec<Vec<&[f64]>> = lists.iter().map(|l| l.iter().map(|&i| &store[i][..]).collect()).collect();
            assert_eq!(forward(&p, &input, Mode::Eval).unwrap(), base);
        }
    }

    #[test]
    fn hand_unrolled_single_step() {
        // 1 layer, H=2, D_w=2, D'=1, input [(1, 0)].
        let mut p = HypernetParams::zeros(arch(2, 2, 1, 1, 0.0)).unwrap();
        p.input_w = Matrix::from_rows(&[[0.5, -0.3], [0.2, 0.8]]);
        p.input_b = Matrix::from_vec(2, 1, vec![0.1, -0.1]).unwrap();
        let mut k = 0.0;
        let layer = &mut p.layers[0];
        for dir in [&mut layer.forward, &mut layer.backward] {
            for v in dir.w_ih.as_mut_slice() {
                k += 1.0;
                *v = ((k * 0.37f64).sin()) * 0.6;
            }
            for v in dir.bias.as_mut_slice() {
                k += 1.0;
                *v = ((k * 0.11f64).cos()) * 0.2;
            }
            // w_hh never contributes on a length-one sequence from a zero state.
            for v in dir.w_hh.as_mut_slice() {
                *v = 5.0;
            }
        }
        p.head_w = Matrix::from_rows(&[[0.4, -0.7, 0.9, 0.25]]);
        p.head_b = Matrix::from_vec(1, 1, vec![0.05]).unwrap();

        let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
        // projection: u = W x + b with x = (1, 0)
        let u = [0.5 + 0.1, 0.2 - 0.1];
        let mut z = Vec::new();
        for dir in [&p.layers[0].forward, &p.layers[0].backward] {
            let pre = |r: usize| dir.bias[(r, 0)] + dir.w_ih[(r, 0)] * u[0] + dir.w_ih[(r, 1)] * u[1];
            for j in 0..2 {
                let i = sig(pre(j));
                let g = pre(4 + j).tanh();
                let o = sig(pre(6 + j));
                // f gate multiplies c_prev = 0
                let c = i * g;
                z.push(o * c.tanh());
            }
        }
        let expected = 0.05 + 0.4 * z[0] - 0.7 * z[1] + 0.9 * z[2] + 0.25 * z[3];
        let x = [1.0, 0.0];
        let out = forward(&p, &[vec![&x[..]]], Mode::Eval).unwrap();
        assert!((out[0][0] - expected).abs() < 1e-14, "{} vs {expected}", out[0][0]);
    }

    #[test]
    fn eval_mode_is_deterministic_and_train_mode_is_seeded() {
        let p = HypernetParams::init(arch(2, 4, 2, 3, 0.4), 5).unwrap();
        let a = [0.3, -0.2];
        let b = [1.0, 0.5];
        let input = vec![vec![&a[..], &b[..]], vec![&b[..]]];
        assert_eq!(forward(&p, &input, Mode::Eval).unwrap(), forward(&p, &input, Mode::Eval).unwrap());
        let t1 = forward(&p, &input, Mode::Train { seed: 1 }).unwrap();
        assert_eq!(t1, forward(&p, &input, Mode::Train { seed: 1 }).unwrap());
        assert_ne!(t1, forward(&p, &input, Mode::Train { seed: 2 }).unwrap());
    }

    fn random_batch(rng: &mut impl Rng, d_w: usize, d_out: usize) -> (Vec<Vec<Vec<f64>>>, Vec<Vec<f64>>) {
        let inputs = (0..2)
            .map(|_| {
                let n = rng.random_range(1..=3);
                (0..n).map(|_| (0..d_w).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
            })
            .collect();
        let targets = (0..2)
            .map(|_| (0..d_out).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        (inputs, targets)
    }

    fn as_refs(x: &[Vec<Vec<f64>>]) -> Vec<Vec<&[f64]>> {
        x.iter().map(|l| l.iter().map(|v| v.as_slice()).collect()).collect()
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let a = arch(2, 3, 2, 3, 0.3);
        let p = HypernetParams::init(a, 9).unwrap();
        let (xs, ts) = random_batch(&mut rng, 2, 3);
        let inputs = as_refs(&xs);
        let mode = Mode::Train { seed: 4 };
        for lambda in [0.0, 0.1, 1.0] {
            let cfg = LossConfig { lambda, temperature: 0.5 };
            let (_, g) = loss_and_gradients(&p, &inputs, &ts, &cfg, mode).unwrap();
            let grads: Vec<Vec<f64>> = g.tensors().iter().map(|(_, m)| m.as_slice().to_vec()).collect();
            let names: Vec<String> = g.tensors().into_iter().map(|(n, _)| n).collect();
            for (ti, name) in names.iter().enumerate() {
                for j in 0..grads[ti].len() {
                    let h = 1e-5;
                    let eval = |delta: f64| {
                        let mut q = p.clone();
                        q.tensors_mut()[ti].as_mut_slice()[j] += delta;
                        loss_and_gradients(&q, &inputs, &ts, &cfg, mode).unwrap().0
                    };
                    let fd = (eval(h) - eval(-h)) / (2.0 * h);
                    let an = grads[ti][j];
                    let ok = (fd - an).abs() <= 1e-7 || (fd - an).abs() <= 1e-4 * fd.abs().max(an.abs());
                    assert!(ok, "λ={lambda} {name}[{j}]: fd {fd} analytic {an}");
                }
            }
        }
    }

    #[test]
    fn l1_head_bias_gradient_is_mean_sign_over_dim() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let p = HypernetParams::init(arch(2, 3, 1, 4, 0.0), 1).unwrap();
        let (xs, ts) = random_batch(&mut rng, 2, 4);
        let inputs = as_refs(&xs);
        let preds = forward(&p, &inputs, Mode::Eval).unwrap();
        let cfg = LossConfig { lambda: 0.0, temperature: 0.5 };
        let (_, g) = loss_and_gradients(&p, &inputs, &ts, &cfg, Mode::Eval).unwrap();
        for d in 0..4 {
            let expected: f64 = preds
                .iter()
                .zip(&ts)
                .map(|(y, t)| (y[d] - t[d]).signum() / 4.0)
                .sum::<f64>()
                / 2.0;
            assert!((g.head_b.as_slice()[d] - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_gradient_at_exact_fit_under_l1() {
        let mut p = HypernetParams::init(arch(2, 3, 2, 2, 0.0), 6).unwrap();
        for m in p.tensors_mut() {
            m.as_mut_slice().iter_mut().for_each(|v| *v = 0.0);
        }
        p.head_b = Matrix::from_vec(2, 1, vec![0.25, -0.5]).unwrap();
        let x = [1.0, 2.0];
        let inputs = vec![vec![&x[..]], vec![&x[..], &x[..]]];
        let targets = vec![vec![0.25, -0.5]; 2];
        let cfg = LossConfig { lambda: 0.0, temperature: 0.5 };
        let (loss, g) = loss_and_gradients(&p, &inputs, &targets, &cfg, Mode::Eval).unwrap();
        assert_eq!(loss, 0.0);
        assert!(g.tensors().iter().all(|(_, m)| m.as_slice().iter().all(|&v| v == 0.0)));
    }
}
