//! Forward and backward kernels over flat row-major slices.
//!
//! Shape checking happens in the geometry constructors; the kernels assume
//! their inputs already conform.

use crate::error::{dim_err, Error, Result};

/// Padding policy for one-dimensional convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Padding1d {
    /// No padding.
    Valid,
    /// `(kernel - 1) * dilation` zeros on the left only.
    Causal,
    /// `(kernel - 1) * dilation` zeros split between both sides, left gets the floor.
    Same,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Conv1dOpts {
    pub stride: usize,
    pub dilation: usize,
    pub padding: Padding1d,
}

impl Conv1dOpts {
    pub fn causal(stride: usize, dilation: usize) -> Self {
        Conv1dOpts {
            stride,
            dilation,
            padding: Padding1d::Causal,
        }
    }

    pub fn valid(stride: usize, dilation: usize) -> Self {
        Conv1dOpts {
            stride,
            dilation,
            padding: Padding1d::Valid,
        }
    }

    pub fn same() -> Self {
        Conv1dOpts {
            stride: 1,
            dilation: 1,
            padding: Padding1d::Same,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct Conv1dGeom {
    pub cin: usize,
    pub cout: usize,
    pub len: usize,
    pub kernel: usize,
    pub stride: usize,
    pub dilation: usize,
    pub pad_left: usize,
    pub out_len: usize,
}

impl Conv1dGeom {
    pub fn new(x: &[usize], w: &[usize], b: &[usize], opts: Conv1dOpts) -> Result<Self> {
        let (&[cin, len], &[cout, wcin, kernel], &[bout]) = (x, w, b) else {
            return Err(dim_err!(
                "conv1d expects input [c_in, len], weight [c_out, c_in, k], bias [c_out]; got {x:?}, {w:?}, {b:?}"
            ));
        };
        if wcin != cin || bout != cout {
            return Err(dim_err!(
                "conv1d channel mismatch: input {x:?}, weight {w:?}, bias {b:?}"
            ));
        }
        if opts.stride == 0 || opts.dilation == 0 {
            return Err(Error::Contract("conv1d stride and dilation must be >= 1".into()));
        }
        let span = opts.dilation * (kernel - 1);
        let (pad_left, pad_right) = match opts.padding {
            Padding1d::Valid => (0, 0),
            Padding1d::Causal => (span, 0),
            Padding1d::Same => (span / 2, span - span / 2),
        };
        let padded = len + pad_left + pad_right;
        if padded < span + 1 {
            return Err(Error::EmptyOutput(format!(
                "conv1d kernel span {} exceeds padded length {padded}",
                span + 1
            )));
        }
        let out_len = (padded - span - 1) / opts.stride + 1;
        Ok(Conv1dGeom {
            cin,
            cout,
            len,
            kernel,
            stride: opts.stride,
            dilation: opts.dilation,
            pad_left,
            out_len,
        })
    }

    /// Output positions `t` for which tap `k` reads a real (unpadded) input.
    fn valid_range(&self, k: usize) -> std::ops::Range<usize> {
        // input index j = t * stride + k * dilation - pad_left, need 0 <= j < len
        let offset = k * self.dilation;
        let lo = if offset >= self.pad_left {
            0
        } else {
            (self.pad_left - offset).div_ceil(self.stride)
        };
        let limit = self.len + self.pad_left; // t * stride + offset < limit
        let hi = if limit > offset {
            ((limit - offset - 1) / self.stride + 1).min(self.out_len)
        } else {
            0
        };
        lo..hi.max(lo)
    }

    fn input_index(&self, t: usize, k: usize) -> usize {
        t * self.stride + k * self.dilation - self.pad_left
    }
}

pub(crate) fn conv1d_forward(x: &[f64], w: &[f64], b: &[f64], g: &Conv1dGeom) -> Vec<f64> {
    let mut out = vec![0.0; g.cout * g.out_len];
    for o in 0..g.cout {
        let row = &mut out[o * g.out_len..(o + 1) * g.out_len];
        row.fill(b[o]);
        for i in 0..g.cin {
            let xi = &x[i * g.len..(i + 1) * g.len];
            for k in 0..g.kernel {
                let wv = w[(o * g.cin + i) * g.kernel + k];
                for t in g.valid_range(k) {
                    row[t] += wv * xi[g.input_index(t, k)];
                }
            }
        }
    }
    out
}

pub(crate) fn conv1d_backward(
    x: &[f64],
    w: &[f64],
    gout: &[f64],
    g: &Conv1dGeom,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut gx = vec![0.0; g.cin * g.len];
    let mut gw = vec![0.0; g.cout * g.cin * g.kernel];
    let mut gb = vec![0.0; g.cout];
    for o in 0..g.cout {
        let go = &gout[o * g.out_len..(o + 1) * g.out_len];
        gb[o] = go.iter().sum();
        for i in 0..g.cin {
            let xi = &x[i * g.len..(i + 1) * g.len];
            let gxi = &mut gx[i * g.len..(i + 1) * g.len];
            for k in 0..g.kernel {
                let widx = (o * g.cin + i) * g.kernel + k;
                let wv = w[widx];
                let mut acc = 0.0;
                for t in g.valid_range(k) {
                    let j = g.input_index(t, k);
                    acc += go[t] * xi[j];
                    gxi[j] += go[t] * wv;
                }
                gw[widx] += acc;
            }
        }
    }
    (gx, gw, gb)
}

/// Padding policy for two-dimensional convolution (stride 1).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Padding2d {
    Valid,
    /// Output keeps the input height and width.
    Same,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct Conv2dGeom {
    pub cin: usize,
    pub cout: usize,
    pub h: usize,
    pub w: usize,
    pub kh: usize,
    pub kw: usize,
    pub pad_top: usize,
    pub pad_left: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl Conv2dGeom {
    pub fn new(x: &[usize], w: &[usize], b: &[usize], padding: Padding2d) -> Result<Self> {
        let (&[cin, h, wd], &[cout, wcin, kh, kw], &[bout]) = (x, w, b) else {
            return Err(dim_err!(
                "conv2d expects input [c_in, h, w], weight [c_out, c_in, kh, kw], bias [c_out]; got {x:?}, {w:?}, {b:?}"
            ));
        };
        if wcin != cin || bout != cout {
            return Err(dim_err!(
                "conv2d channel mismatch: input {x:?}, weight {w:?}, bias {b:?}"
            ));
        }
        let (pad_top, pad_left, out_h, out_w) = match padding {
            Padding2d::Same => ((kh - 1) / 2, (kw - 1) / 2, h, wd),
            Padding2d::Valid => {
                if kh > h || kw > wd {
                    return Err(Error::EmptyOutput(format!(
                        "conv2d kernel {kh}x{kw} does not fit input {h}x{wd}"
                    )));
                }
                (0, 0, h - kh + 1, wd - kw + 1)
            }
        };
        Ok(Conv2dGeom {
            cin,
            cout,
            h,
            w: wd,
            kh,
            kw,
            pad_top,
            pad_left,
            out_h,
            out_w,
        })
    }

    /// Output rows (or columns) for which kernel offset `k` reads inside the input.
    fn valid(out: usize, pad: usize, size: usize, k: usize) -> std::ops::Range<usize> {
        // input = out_idx + k - pad in [0, size)
        let lo = pad.saturating_sub(k);
        let hi = (size + pad).saturating_sub(k).min(out);
        lo..hi.max(lo)
    }
}

pub(crate) fn conv2d_forward(x: &[f64], w: &[f64], b: &[f64], g: &Conv2dGeom) -> Vec<f64> {
    let plane = g.out_h * g.out_w;
    let mut out = vec![0.0; g.cout * plane];
    for o in 0..g.cout {
        let oplane = &mut out[o * plane..(o + 1) * plane];
        oplane.fill(b[o]);
        for i in 0..g.cin {
            let xi = &x[i * g.h * g.w..(i + 1) * g.h * g.w];
            for ki in 0..g.kh {
                let rows = Conv2dGeom::valid(g.out_h, g.pad_top, g.h, ki);
                for kj in 0..g.kw {
                    let wv = w[((o * g.cin + i) * g.kh + ki) * g.kw + kj];
                    let cols = Conv2dGeom::valid(g.out_w, g.pad_left, g.w, kj);
                    for r in rows.clone() {
                        let xr = (r + ki - g.pad_top) * g.w;
                        let orow = r * g.out_w;
                        for c in cols.clone() {
                            oplane[orow + c] += wv * xi[xr + c + kj - g.pad_left];
                        }
                    }
                }
            }
        }
    }
    out
}

pub(crate) fn conv2d_backward(
    x: &[f64],
    w: &[f64],
    gout: &[f64],
    g: &Conv2dGeom,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let plane = g.out_h * g.out_w;
    let mut gx = vec![0.0; g.cin * g.h * g.w];
    let mut gw = vec![0.0; w.len()];
    let mut gb = vec![0.0; g.cout];
    for o in 0..g.cout {
        let go = &gout[o * plane..(o + 1) * plane];
        gb[o] = go.iter().sum();
        for i in 0..g.cin {
            let base = i * g.h * g.w;
            for ki in 0..g.kh {
                let rows = Conv2dGeom::valid(g.out_h, g.pad_top, g.h, ki);
                for kj in 0..g.kw {
                    let widx = ((o * g.cin + i) * g.kh + ki) * g.kw + kj;
                    let wv = w[widx];
                    let cols = Conv2dGeom::valid(g.out_w, g.pad_left, g.w, kj);
                    let mut acc = 0.0;
                    for r in rows.clone() {
                        let xr = base + (r + ki - g.pad_top) * g.w;
                        let orow = r * g.out_w;
                        for c in cols.clone() {
                            let xi = xr + c + kj - g.pad_left;
                            acc += go[orow + c] * x[xi];
                            gx[xi] += go[orow + c] * wv;
                        }
                    }
                    gw[widx] += acc;
                }
            }
        }
    }
    (gx, gw, gb)
}

/// `out[m, n] = sum_k a[m, k] * b[k, n]`
pub(crate) fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for r in 0..m {
        let orow = &mut out[r * n..(r + 1) * n];
        for p in 0..k {
            let av = a[r * k + p];
            let brow = &b[p * n..(p + 1) * n];
            for (o, bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

pub(crate) fn transpose(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; a.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = a[r * cols + c];
        }
    }
    out
}

/// Per-position normalization over channels of a `[channels, len]` buffer.
/// Returns the normalized values and the inverse standard deviation per position.
pub(crate) fn channel_norm(x: &[f64], channels: usize, len: usize, eps: f64) -> (Vec<f64>, Vec<f64>) {
    let mut xhat = vec![0.0; x.len()];
    let mut inv_std = vec![0.0; len];
    let c = channels as f64;
    for t in 0..len {
        let mean = (0..channels).map(|ch| x[ch * len + t]).sum::<f64>() / c;
        let var = (0..channels)
            .map(|ch| (x[ch * len + t] - mean).powi(2))
            .sum::<f64>()
            / c;
        let inv = 1.0 / (var + eps).sqrt();
        inv_std[t] = inv;
        for ch in 0..channels {
            xhat[ch * len + t] = (x[ch * len + t] - mean) * inv;
        }
    }
    (xhat, inv_std)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn causal_out_len_is_ceil() {
        for len in 1..20 {
            for stride in 1..5 {
                let g = Conv1dGeom::new(&[1, len], &[1, 1, stride], &[1], Conv1dOpts::causal(stride, 1))
                    .unwrap();
                assert_eq!(g.out_len, len.div_ceil(stride), "len {len} stride {stride}");
            }
        }
    }

    #[test]
    fn valid_range_matches_bounds_check() {
        let g = Conv1dGeom::new(&[1, 7], &[1, 1, 3], &[1], Conv1dOpts::causal(2, 2)).unwrap();
        for k in 0..3 {
            let expected: Vec<usize> = (0..g.out_len)
                .filter(|&t| {
                    let j = (t * g.stride + k * g.dilation) as isize - g.pad_left as isize;
                    j >= 0 && (j as usize) < g.len
                })
                .collect();
            assert_eq!(g.valid_range(k).collect::<Vec<_>>(), expected);
        }
    }

    #[test]
    fn empty_output_is_reported() {
        let err = Conv1dGeom::new(&[1, 2], &[1, 1, 3], &[1], Conv1dOpts::valid(1, 1)).unwrap_err();
        assert!(matches!(err, Error::EmptyOutput(_)));
    }

    #[test]
    fn matmul_small() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [5.0, 6.0, 7.0, 8.0];
        assert_eq!(matmul(&a, &b, 2, 2, 2), vec![19.0, 22.0, 43.0, 50.0]);
        assert_eq!(transpose(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], 2, 3), vec![1.0, 4.0, 2.0, 5.0, 3.0, 6.0]);
    }
}
