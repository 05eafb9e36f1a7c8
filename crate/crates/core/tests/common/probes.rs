//! Impulse-gradient probes: which inputs can move a given output.

use mssd::models::{Forward, MssdConfig, MssdModel, Params, Sdnet, SdnetConfig};
use mssd::numcore::{Tape, Tensor};

use super::{random_tensor, rng};

pub const TCN_LEN: usize = 48;
const TCN_CHANNELS: usize = 3;

fn stack_config(kernel: usize, layers: usize) -> SdnetConfig {
    SdnetConfig {
        num_heads: 1,
        kernel_scales: vec![1],
        tcn_layers: layers,
        tcn_kernel: kernel,
        tcn_channels: TCN_CHANNELS,
        grid_rows: 1,
        dropout: 0.0,
        ..SdnetConfig::default()
    }
}

fn build_stack(kernel: usize, layers: usize, seed: u64) -> (Sdnet, Params) {
    let mut params = Params::new();
    let net = Sdnet::new(&mut params, "p", &stack_config(kernel, layers), TCN_LEN, 1, &mut rng(seed)).unwrap();
    (net, params)
}

/// Input positions of the temporal stack with a nonzero gradient on output `t`.
pub fn tcn_support(kernel: usize, layers: usize, param_seed: u64, input_seed: u64, t: usize) -> Vec<usize> {
    let (net, params) = build_stack(kernel, layers, param_seed);
    let mut fwd = Forward::eval(&params);
    let xv = fwd.tape.leaf(random_tensor(&[TCN_CHANNELS, TCN_LEN], &mut rng(input_seed)));
    let y = net.branches[0].tcn.forward(&mut fwd, xv).unwrap();
    let row = fwd.tape.narrow(y, 1, t, 1).unwrap();
    let loss = fwd.tape.sum(row);
    let tape = std::mem::replace(&mut fwd.tape, Tape::new());
    let g = tape.backward(loss).unwrap().get(xv).map(|g| g.to_vec()).unwrap_or_default();
    if g.is_empty() {
        return Vec::new();
    }
    (0..TCN_LEN)
        .filter(|&p| (0..TCN_CHANNELS).any(|c| g[c * TCN_LEN + p] != 0.0))
        .collect()
}

/// Outputs whose support reaches a later input, or misses their own position.
pub fn causality_violations(kernel: usize, layers: usize) -> Vec<String> {
    let mut out = Vec::new();
    for t in [0, 5, TCN_LEN / 2, TCN_LEN - 1] {
        let s = tcn_support(kernel, layers, 11, 3 + t as u64, t);
        if s.iter().any(|&p| p > t) || !s.contains(&t) {
            out.push(format!("k={kernel} L={layers} t={t}: support {s:?}"));
        }
    }
    out
}

/// Support width of the last output, unioned over random draws so that a
/// dead ReLU in one draw cannot hide a path.
pub fn measured_receptive_field(kernel: usize, layers: usize) -> usize {
    let t = TCN_LEN - 1;
    let earliest = (0..8)
        .filter_map(|seed| tcn_support(kernel, layers, 100 + seed, 200 + seed, t).first().copied())
        .min()
        .unwrap_or(t);
    t - earliest + 1
}

fn input_gradient(model: &MssdModel, window: &[f64], offset: usize, j: usize) -> Vec<f64> {
    let mut fwd = Forward::eval(&model.params);
    let x = fwd.tape.leaf(Tensor::new(vec![window.len()], window.to_vec()).unwrap());
    let y = model.forward(&mut fwd, x, offset).unwrap();
    let yj = fwd.tape.narrow(y, 0, j, 1).unwrap();
    let loss = fwd.tape.sum(yj);
    let tape = std::mem::replace(&mut fwd.tape, Tape::new());
    let grads = tape.backward(loss).unwrap();
    grads.get(x).map(|g| g.to_vec()).unwrap_or_else(|| vec![0.0; window.len()])
}

/// Checks on a randomly initialized model (I = 4T, O = T) that every
/// forecast position has zero gradient on inputs of other phases and a
/// nonzero gradient on some input of its own phase.
pub fn phase_isolation(samples_per_hour: usize, offsets: &[usize], seed: u64) -> Result<(), String> {
    let t = 24 * samples_per_hour;
    let mut config = MssdConfig::new(samples_per_hour, 4 * t, t);
    config.seed = seed;
    config.sdnet.tcn_channels = 4;
    let model = MssdModel::new(config).unwrap();
    let window = random_tensor(&[4 * t], &mut rng(seed)).to_vec();
    for &offset in offsets {
        let out_offset = model.horizon_offset(offset);
        for j in 0..t {
            let out_phase = model.spec.label(j, out_offset);
            let g = input_gradient(&model, &window, offset, j);
            let mut own = false;
            for (p, &gp) in g.iter().enumerate() {
                let in_phase = model.spec.label(p, offset);
                if in_phase == out_phase {
                    own |= gp != 0.0;
                } else if gp != 0.0 {
                    return Err(format!(
                        "offset {offset}: output {j} ({out_phase:?}) has gradient {gp} on input {p} ({in_phase:?})"
                    ));
                }
            }
            if !own {
                return Err(format!("offset {offset}: output {j} ({out_phase:?}) ignores its own phase"));
            }
        }
    }
    Ok(())
}
