//! Finite-difference checks for every differentiable primitive and for a
//! minimal full model, plus forward checks of the convolutions against
//! direct loops. Each case runs on 50 random instances.

use mssd::models::{Forward, MssdConfig, MssdModel, SdnetConfig};
use mssd::numcore::{Conv1dOpts, Padding1d, Padding2d, Tape, Tensor, Var};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::*;

const INSTANCES: u64 = 50;

/// Outcome of every case: its name and the first failing instance, if any.
#[derive(Default)]
pub struct Report {
    pub cases: Vec<(String, Result<(), String>)>,
}

impl Report {
    pub fn failures(&self) -> Vec<String> {
        self.cases
            .iter()
            .filter_map(|(n, r)| r.as_ref().err().map(|e| format!("{n}: {e}")))
            .collect()
    }

    pub fn assert_ok(&self) {
        let f = self.failures();
        assert!(f.is_empty(), "{}", f.join("\n"));
    }
}

fn for_instances(rep: &mut Report, name: &str, mut case: impl FnMut(&mut ChaCha8Rng, u64) -> Result<(), String>) {
    let outcome = (0..INSTANCES).try_for_each(|seed| {
        let mut r = rng(seed * 7919 + name.len() as u64);
        case(&mut r, seed).map_err(|e| format!("instance {seed}: {e}"))
    });
    rep.cases.push((name.to_string(), outcome));
}

/// Every group, in order.
pub fn all(rep: &mut Report) {
    elementwise_ops(rep);
    reductions_and_losses(rep);
    shape_ops(rep);
    dense_algebra(rep);
    conv1d_gradients(rep);
    conv2d_gradients(rep);
    conv1d_forward_matches_direct_loop(rep);
    conv2d_forward_matches_direct_loop(rep);
    full_model_gradients(rep);
    full_model_input_gradients(rep);
    composite_pipeline(rep);
}

fn dims(r: &mut ChaCha8Rng, n: usize, max: usize) -> Vec<usize> {
    (0..n).map(|_| r.random_range(1..=max)).collect()
}

fn contracted(seed: u64, f: impl Fn(&mut Tape, &[Var]) -> Var) -> impl Fn(&mut Tape, &[Var]) -> Var {
    move |t: &mut Tape, v: &[Var]| {
        let y = f(t, v);
        contract_output(t, y, seed)
    }
}

pub fn elementwise_ops(rep: &mut Report) {
    for_instances(rep, "add", |r, s| {
        let shape = dims(r, 2, 5);
        let xs = [random_tensor(&shape, r), random_tensor(&shape, r)];
        check_inputs(&xs, contracted(s, |t, v| t.add(v[0], v[1]).unwrap()))
    });
    for_instances(rep, "sub", |r, s| {
        let shape = dims(r, 2, 5);
        let xs = [random_tensor(&shape, r), random_tensor(&shape, r)];
        check_inputs(&xs, contracted(s, |t, v| t.sub(v[0], v[1]).unwrap()))
    });
    for_instances(rep, "mul", |r, s| {
        let shape = dims(r, 2, 5);
        let xs = [random_tensor(&shape, r), random_tensor(&shape, r)];
        check_inputs(&xs, contracted(s, |t, v| t.mul(v[0], v[1]).unwrap()))
    });
    for_instances(rep, "scale", |r, s| {
        let shape = dims(r, 3, 4);
        let factor = r.random_range(-3.0..3.0);
        check_inputs(&[random_tensor(&shape, r)], contracted(s, move |t, v| t.scale(v[0], factor)))
    });
    for_instances(rep, "relu", |r, s| {
        let shape = dims(r, 2, 6);
        check_inputs(&[random_tensor(&shape, r)], contracted(s, |t, v| t.relu(v[0])))
    });
}

pub fn reductions_and_losses(rep: &mut Report) {
    for_instances(rep, "sum", |r, _| {
        let shape = dims(r, 3, 4);
        check_inputs(&[random_tensor(&shape, r)], |t, v| t.sum(v[0]))
    });
    for_instances(rep, "mean", |r, _| {
        let shape = dims(r, 2, 6);
        check_inputs(&[random_tensor(&shape, r)], |t, v| t.mean(v[0]))
    });
    for_instances(rep, "mse_loss", |r, _| {
        let shape = dims(r, 2, 6);
        let xs = [random_tensor(&shape, r), random_tensor(&shape, r)];
        check_inputs(&xs, |t, v| t.mse_loss(v[0], v[1]).unwrap())
    });
}

pub fn shape_ops(rep: &mut Report) {
    for_instances(rep, "reshape", |r, s| {
        let (a, b) = (r.random_range(1..=6), r.random_range(1..=6));
        check_inputs(
            &[random_tensor(&[a, b], r)],
            contracted(s, move |t, v| t.reshape(v[0], vec![b, a]).unwrap()),
        )
    });
    for_instances(rep, "concat", |r, s| {
        let axis = r.random_range(0..2);
        let mut shapes = Vec::new();
        let other = r.random_range(1..=4);
        for _ in 0..r.random_range(1..=3) {
            let along = r.random_range(1..=4);
            shapes.push(if axis == 0 { [along, other] } else { [other, along] });
        }
        let xs: Vec<Tensor> = shapes.iter().map(|sh| random_tensor(sh, r)).collect();
        check_inputs(&xs, contracted(s, move |t, v| t.concat(v, axis).unwrap()))
    });
    for_instances(rep, "narrow", |r, s| {
        let shape = dims(r, 2, 6);
        let axis = r.random_range(0..2);
        let start = r.random_range(0..shape[axis]);
        let len = r.random_range(1..=shape[axis] - start);
        check_inputs(
            &[random_tensor(&shape, r)],
            contracted(s, move |t, v| t.narrow(v[0], axis, start, len).unwrap()),
        )
    });
    for_instances(rep, "split", |r, s| {
        let n = r.random_range(2..=8);
        let cut = r.random_range(1..n);
        check_inputs(&[random_tensor(&[n], r)], contracted(s, move |t, v| {
            let parts = t.split(v[0], 0, &[cut, n - cut]).unwrap();
            // weight the halves differently so both pieces matter
            let b = t.scale(parts[1], 2.5);
            t.concat(&[b, parts[0]], 0).unwrap()
        }))
    });
    for_instances(rep, "transpose", |r, s| {
        let shape = dims(r, 2, 5);
        check_inputs(&[random_tensor(&shape, r)], contracted(s, |t, v| t.transpose(v[0]).unwrap()))
    });
    for_instances(rep, "gather", |r, s| {
        let n = r.random_range(1..=10);
        let idx: Vec<usize> = (0..r.random_range(1..=12)).map(|_| r.random_range(0..n)).collect();
        check_inputs(&[random_tensor(&[n], r)], contracted(s, move |t, v| t.gather(v[0], &idx).unwrap()))
    });
    for_instances(rep, "scatter", |r, s| {
        let len = r.random_range(2..=10);
        let mut idx: Vec<usize> = (0..len).collect();
        for i in (1..len).rev() {
            idx.swap(i, r.random_range(0..=i));
        }
        idx.truncate(r.random_range(1..=len));
        let m = idx.len();
        check_inputs(&[random_tensor(&[m], r)], contracted(s, move |t, v| t.scatter(v[0], &idx, len).unwrap()))
    });
}

pub fn dense_algebra(rep: &mut Report) {
    for_instances(rep, "linear", |r, s| {
        let (n_in, n_out) = (r.random_range(1..=6), r.random_range(1..=6));
        let xs = [
            random_tensor(&[n_in], r),
            random_tensor(&[n_out, n_in], r),
            random_tensor(&[n_out], r),
        ];
        check_inputs(&xs, contracted(s, |t, v| t.linear(v[0], v[1], v[2]).unwrap()))
    });
    for_instances(rep, "matmul", |r, s| {
        let d = dims(r, 3, 5);
        let xs = [random_tensor(&[d[0], d[1]], r), random_tensor(&[d[1], d[2]], r)];
        check_inputs(&xs, contracted(s, |t, v| t.matmul(v[0], v[1]).unwrap()))
    });
    for_instances(rep, "softmax_rows", |r, s| {
        let shape = dims(r, 2, 6);
        check_inputs(&[random_tensor(&shape, r)], contracted(s, |t, v| t.softmax_rows(v[0]).unwrap()))
    });
    for_instances(rep, "layer_norm", |r, s| {
        let (c, len) = (r.random_range(2..=6), r.random_range(1..=6));
        let xs = [random_tensor(&[c, len], r), random_tensor(&[c], r), random_tensor(&[c], r)];
        check_inputs(&xs, contracted(s, |t, v| t.layer_norm(v[0], v[1], v[2], 1e-5).unwrap()))
    });
}

fn random_conv1d_opts(r: &mut ChaCha8Rng) -> Conv1dOpts {
    let padding = [Padding1d::Valid, Padding1d::Causal, Padding1d::Same][r.random_range(0..3)];
    Conv1dOpts {
        stride: r.random_range(1..=3),
        dilation: r.random_range(1..=3),
        padding,
    }
}

fn conv1d_pads(opts: Conv1dOpts, k: usize) -> (usize, usize) {
    let span = opts.dilation * (k - 1);
    match opts.padding {
        Padding1d::Valid => (0, 0),
        Padding1d::Causal => (span, 0),
        Padding1d::Same => (span / 2, span - span / 2),
    }
}

pub fn conv1d_gradients(rep: &mut Report) {
    for_instances(rep, "conv1d", |r, s| {
        let opts = random_conv1d_opts(r);
        let (cin, cout, k) = (r.random_range(1..=3), r.random_range(1..=3), r.random_range(1..=3));
        let min_len = if opts.padding == Padding1d::Valid { opts.dilation * (k - 1) + 1 } else { 1 };
        let len = r.random_range(min_len..=min_len + 6);
        let xs = [
            random_tensor(&[cin, len], r),
            random_tensor(&[cout, cin, k], r),
            random_tensor(&[cout], r),
        ];
        check_inputs(&xs, contracted(s, move |t, v| t.conv1d(v[0], v[1], v[2], opts).unwrap()))
    });
}

pub fn conv2d_gradients(rep: &mut Report) {
    for_instances(rep, "conv2d", |r, s| {
        let padding = if r.random_bool(0.5) { Padding2d::Same } else { Padding2d::Valid };
        let (cin, cout) = (r.random_range(1..=2), r.random_range(1..=2));
        let kh = [1, 3][r.random_range(0..2)];
        let kw = [1, 3][r.random_range(0..2)];
        let (h, w) = (r.random_range(kh..=kh + 3), r.random_range(kw..=kw + 3));
        let xs = [
            random_tensor(&[cin, h, w], r),
            random_tensor(&[cout, cin, kh, kw], r),
            random_tensor(&[cout], r),
        ];
        check_inputs(&xs, contracted(s, move |t, v| t.conv2d(v[0], v[1], v[2], padding).unwrap()))
    });
}

pub fn conv1d_forward_matches_direct_loop(rep: &mut Report) {
    for_instances(rep, "conv1d-forward", |r, _| {
        let opts = random_conv1d_opts(r);
        let (cin, cout, k) = (r.random_range(1..=4), r.random_range(1..=4), r.random_range(1..=4));
        let min_len = if opts.padding == Padding1d::Valid { opts.dilation * (k - 1) + 1 } else { 1 };
        let len = r.random_range(min_len..=min_len + 20);
        let (x, w, b) = (
            random_tensor(&[cin, len], r),
            random_tensor(&[cout, cin, k], r),
            random_tensor(&[cout], r),
        );
        let mut tape = Tape::new();
        let (xv, wv, bv) = (tape.constant(x.clone()), tape.constant(w.clone()), tape.constant(b.clone()));
        let y = tape.conv1d(xv, wv, bv, opts).unwrap();
        let (pl, pr) = conv1d_pads(opts, k);
        let (expect, out_len) =
            conv1d_oracle(x.data(), cin, len, w.data(), cout, k, b.data(), opts.stride, opts.dilation, pl, pr);
        if tape.shape(y) != [cout, out_len] {
            return Err(format!("shape {:?}, expected {:?}", tape.shape(y), [cout, out_len]));
        }
        for (a, e) in tape.value(y).data().iter().zip(&expect) {
            if (a - e).abs() > 1e-12 * e.abs().max(1.0) {
                return Err(format!("value {a} vs {e}"));
            }
        }
        Ok(())
    });
}

pub fn conv2d_forward_matches_direct_loop(rep: &mut Report) {
    for_instances(rep, "conv2d-forward", |r, _| {
        let same = r.random_bool(0.5);
        let (cin, cout) = (r.random_range(1..=3), r.random_range(1..=3));
        let (kh, kw) = ([1, 3, 5][r.random_range(0..3)], [1, 3, 5][r.random_range(0..3)]);
        let (h, w) = (r.random_range(kh..=kh + 6), r.random_range(kw..=kw + 6));
        let (x, wt, b) = (
            random_tensor(&[cin, h, w], r),
            random_tensor(&[cout, cin, kh, kw], r),
            random_tensor(&[cout], r),
        );
        let mut tape = Tape::new();
        let (xv, wv, bv) = (tape.constant(x.clone()), tape.constant(wt.clone()), tape.constant(b.clone()));
        let padding = if same { Padding2d::Same } else { Padding2d::Valid };
        let y = tape.conv2d(xv, wv, bv, padding).unwrap();
        let (ph, pw) = if same { (kh / 2, kw / 2) } else { (0, 0) };
        let (expect, oh, ow) = conv2d_oracle(x.data(), cin, h, w, wt.data(), cout, kh, kw, b.data(), ph, pw);
        if tape.shape(y) != [cout, oh, ow] {
            return Err(format!("shape {:?}", tape.shape(y)));
        }
        for (a, e) in tape.value(y).data().iter().zip(&expect) {
            if (a - e).abs() > 1e-12 * e.abs().max(1.0) {
                return Err(format!("value {a} vs {e}"));
            }
        }
        Ok(())
    });
}

pub fn minimal_config(seed: u64) -> MssdConfig {
    MssdConfig {
        seed,
        sdnet: SdnetConfig {
            num_heads: 1,
            kernel_scales: vec![2],
            tcn_layers: 1,
            tcn_channels: 2,
            grid_rows: 2,
            ..SdnetConfig::default()
        },
        ..MssdConfig::new(1, 24, 24)
    }
}

pub fn full_model_gradients(rep: &mut Report) {
    for_instances(rep, "mssd", |r, s| {
        let mut config = minimal_config(s);
        config.sdnet.causal_tcn = r.random_bool(0.8);
        config.sdnet.global_block = r.random_bool(0.8);
        let model = MssdModel::new(config).unwrap();
        let window = random_tensor(&[24], r);
        let target = random_tensor(&[24], r);
        let offset = r.random_range(0..24);
        check_params(
            &model.params,
            |fwd: &mut Forward| {
                let x = fwd.tape.constant(window.clone());
                let t = fwd.tape.constant(target.clone());
                let y = model.forward(fwd, x, offset).unwrap();
                fwd.tape.mse_loss(y, t).unwrap()
            },
            None,
        )
    });
}

pub fn full_model_input_gradients(rep: &mut Report) {
    for_instances(rep, "mssd-input", |r, s| {
        let model = MssdModel::new(minimal_config(s)).unwrap();
        let offset = r.random_range(0..24);
        check_inputs(&[random_tensor(&[24], r)], contracted(s, |t, v| {
            let mut fwd = Forward::eval(&model.params);
            std::mem::swap(&mut fwd.tape, t);
            let y = model.forward(&mut fwd, v[0], offset).unwrap();
            std::mem::swap(&mut fwd.tape, t);
            y
        }))
    });
}

pub fn composite_pipeline(rep: &mut Report) {
    for_instances(rep, "pipeline", |r, _| {
        let (cin, cout, k, len) = (r.random_range(1..=3), r.random_range(1..=3), r.random_range(1..=3), r.random_range(3..=8));
        let opts = Conv1dOpts::causal(1, r.random_range(1..=2));
        let n_out = r.random_range(1..=4);
        let xs = [
            random_tensor(&[cin, len], r),
            random_tensor(&[cout, cin, k], r),
            random_tensor(&[cout], r),
            random_tensor(&[n_out, cout * len], r),
            random_tensor(&[n_out], r),
            random_tensor(&[n_out], r),
        ];
        check_inputs(&xs, move |t, v| {
            let h = t.conv1d(v[0], v[1], v[2], opts).unwrap();
            let h = t.relu(h);
            let n = t.value(h).numel();
            let flat = t.reshape(h, vec![n]).unwrap();
            let y = t.linear(flat, v[3], v[4]).unwrap();
            t.mse_loss(y, v[5]).unwrap()
        })
    });
}
