//! Independent oracles shared by the integration tests.

#![allow(dead_code)]

pub mod grad_cases;
pub mod probes;

use mssd::models::{Forward, Params};
use mssd::numcore::{Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;
pub const FD_REL_TOL: f64 = 1e-4;
/// Absolute slack for gradients that are zero up to rounding.
pub const FD_ABS_FLOOR: f64 = 1e-7;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

pub fn close(analytic: f64, numeric: f64) -> bool {
    (analytic - numeric).abs() <= FD_REL_TOL * analytic.abs().max(numeric.abs()) + FD_ABS_FLOOR
}

/// Builds a scalar from `y` by a fixed random weighting, so one backward
/// pass checks a random contraction of the whole Jacobian.
pub fn contract_output(tape: &mut Tape, y: Var, seed: u64) -> Var {
    let shape = tape.shape(y).to_vec();
    let w = random_tensor(&shape, &mut rng(seed));
    let w = tape.constant(w);
    let p = tape.mul(y, w).unwrap();
    tape.sum(p)
}

/// Central-difference check of `f` with respect to every element of every
/// input. `f` records a scalar loss from the given input vars.
pub fn check_inputs(inputs: &[Tensor], f: impl Fn(&mut Tape, &[Var]) -> Var) -> Result<(), String> {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let loss = f(&mut tape, &vars);
    let grads = tape.backward(loss).map_err(|e| e.to_string())?;
    let eval = |vals: &[Tensor]| {
        let mut tape = Tape::new();
        let vars: Vec<Var> = vals.iter().map(|t| tape.constant(t.clone())).collect();
        let loss = f(&mut tape, &vars);
        tape.value(loss).data()[0]
    };
    for (k, input) in inputs.iter().enumerate() {
        let analytic = grads.get(vars[k]).map(|g| g.to_vec()).unwrap_or_else(|| vec![0.0; input.numel()]);
        for (j, &a) in analytic.iter().enumerate() {
            let mut plus = inputs.to_vec();
            let mut minus = inputs.to_vec();
            plus[k] = perturb(input, j, FD_STEP);
            minus[k] = perturb(input, j, -FD_STEP);
            let numeric = (eval(&plus) - eval(&minus)) / (2.0 * FD_STEP);
            if !close(a, numeric) {
                return Err(format!("input {k} element {j}: analytic {a} vs numeric {numeric}"));
            }
        }
    }
    Ok(())
}

pub fn perturb(t: &Tensor, index: usize, delta: f64) -> Tensor {
    let mut v = t.to_vec();
    v[index] += delta;
    Tensor::new(t.shape().to_vec(), v).unwrap()
}

/// Richardson-extrapolated central-difference check of a loss over model
/// parameters, on every parameter element (or a random subset of
/// `max_checks` when given).
pub fn check_params(
    params: &Params,
    loss: impl Fn(&mut Forward) -> Var,
    max_checks: Option<(usize, u64)>,
) -> Result<(), String> {
    let mut fwd = Forward::train(params, None);
    let l = loss(&mut fwd);
    let grads = fwd.backward(l).map_err(|e| e.to_string())?;
    let value = |p: &Params| {
        let mut fwd = Forward::eval(p);
        let l = loss(&mut fwd);
        fwd.tape.value(l).data()[0]
    };
    let mut coords: Vec<(usize, usize)> = params
        .tensors()
        .iter()
        .enumerate()
        .flat_map(|(k, t)| (0..t.numel()).map(move |j| (k, j)))
        .collect();
    if let Some((n, seed)) = max_checks {
        let mut r = rng(seed);
        while coords.len() > n {
            let i = r.random_range(0..coords.len());
            coords.swap_remove(i);
        }
    }
    let mut work = params.clone();
    for (k, j) in coords {
        let original = params.tensors()[k].clone();
        let mut central = |h: f64| {
            work.tensors_mut()[k] = perturb(&original, j, h);
            let up = value(&work);
            work.tensors_mut()[k] = perturb(&original, j, -h);
            let down = value(&work);
            (up - down) / (2.0 * h)
        };
        // Richardson step cancels the h^2 error term; deep compositions with
        // narrow channel norms are curved enough for it to matter at 1e-4.
        let numeric = (4.0 * central(FD_STEP / 2.0) - central(FD_STEP)) / 3.0;
        work.tensors_mut()[k] = original;
        let analytic = grads[k].as_ref().map_or(0.0, |g| g.data()[j]);
        if !close(analytic, numeric) {
            return Err(format!(
                "parameter {} element {j}: analytic {analytic} vs numeric {numeric}",
                params.names()[k]
            ));
        }
    }
    Ok(())
}

/// Direct-loop 1-D convolution over an explicitly zero-padded copy.
#[allow(clippy::too_many_arguments)]
pub fn conv1d_oracle(
    x: &[f64],
    cin: usize,
    len: usize,
    w: &[f64],
    cout: usize,
    k: usize,
    b: &[f64],
    stride: usize,
    dilation: usize,
    pad_left: usize,
    pad_right: usize,
) -> (Vec<f64>, usize) {
    let padded_len = len + pad_left + pad_right;
    let mut padded = vec![0.0; cin * padded_len];
    for c in 0..cin {
        for t in 0..len {
            padded[c * padded_len + pad_left + t] = x[c * len + t];
        }
    }
    let span = dilation * (k - 1) + 1;
    let out_len = (padded_len - span) / stride + 1;
    let mut out = vec![0.0; cout * out_len];
    for o in 0..cout {
        for t in 0..out_len {
            let mut s = b[o];
            for c in 0..cin {
                for q in 0..k {
                    s += w[(o * cin + c) * k + q] * padded[c * padded_len + t * stride + q * dilation];
                }
            }
            out[o * out_len + t] = s;
        }
    }
    (out, out_len)
}

/// Direct-loop 2-D convolution with symmetric zero padding `pad`.
#[allow(clippy::too_many_arguments)]
pub fn conv2d_oracle(
    x: &[f64],
    cin: usize,
    h: usize,
    wd: usize,
    w: &[f64],
    cout: usize,
    kh: usize,
    kw: usize,
    b: &[f64],
    pad_h: usize,
    pad_w: usize,
) -> (Vec<f64>, usize, usize) {
    let out_h = h + 2 * pad_h - kh + 1;
    let out_w = wd + 2 * pad_w - kw + 1;
    let at = |c: usize, r: isize, col: isize| -> f64 {
        if r < 0 || col < 0 || r >= h as isize || col >= wd as isize {
            0.0
        } else {
            x[(c * h + r as usize) * wd + col as usize]
        }
    };
    let mut out = vec![0.0; cout * out_h * out_w];
    for o in 0..cout {
        for r in 0..out_h {
            for col in 0..out_w {
                let mut s = b[o];
                for c in 0..cin {
                    for i in 0..kh {
                        for j in 0..kw {
                            let xr = r as isize + i as isize - pad_h as isize;
                            let xc = col as isize + j as isize - pad_w as isize;
                            s += w[((o * cin + c) * kh + i) * kw + j] * at(c, xr, xc);
                        }
                    }
                }
                out[(o * out_h + r) * out_w + col] = s;
            }
        }
    }
    (out, out_h, out_w)
}
