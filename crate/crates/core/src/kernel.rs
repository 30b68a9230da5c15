//! Dense batched kernels shared by the compiled networks and the MLP
//! baselines.
//!
//! All loops fix the summation order (ascending input index per output
//! element), so results are bit-reproducible and independent of batch
//! tiling. Batch rows are processed in blocks small enough that the
//! per-block output panel stays cache resident while the weight matrix
//! streams through once per block.

const BLOCK: usize = 32;

/// `out[b, :] = bias + sum_i input[b, i] * w[i, :]` with row-major `w`.
pub(crate) fn forward_affine(
    input: &[f64],
    n: usize,
    d_in: usize,
    w: &[f64],
    bias: &[f64],
    out: &mut [f64],
) {
    let d_out = bias.len();
    debug_assert_eq!(w.len(), d_in * d_out);
    debug_assert_eq!(input.len(), n * d_in);
    debug_assert_eq!(out.len(), n * d_out);
    let mut start = 0;
    while start < n {
        let end = (start + BLOCK).min(n);
        for b in start..end {
            out[b * d_out..(b + 1) * d_out].copy_from_slice(bias);
        }
        for i in 0..d_in {
            let wrow = &w[i * d_out..(i + 1) * d_out];
            for b in start..end {
                let c = input[b * d_in + i];
                let row = &mut out[b * d_out..(b + 1) * d_out];
                for (acc, &wv) in row.iter_mut().zip(wrow) {
                    *acc += c * wv;
                }
            }
        }
        start = end;
    }
}

/// Backward pass through one affine layer, fused over the weight matrix:
/// writes `back[b, i] = sum_o w[i, o] * delta[b, o]` and overwrites
/// `gw[i, o] = sum_b act[b, i] * delta[b, o]` in a single stream over
/// `w`/`gw`.
pub(crate) fn backward_fused(
    act: &[f64],
    n: usize,
    d_in: usize,
    d_out: usize,
    w: &[f64],
    delta: &[f64],
    gw: &mut [f64],
    back: &mut [f64],
) {
    debug_assert_eq!(w.len(), d_in * d_out);
    debug_assert_eq!(gw.len(), d_in * d_out);
    debug_assert_eq!(delta.len(), n * d_out);
    debug_assert_eq!(back.len(), n * d_in);
    let quads = d_out / 4 * 4;
    let mut start = 0;
    while start < n {
        let end = (start + BLOCK).min(n);
        for k in 0..d_in {
            let wrow = &w[k * d_out..(k + 1) * d_out];
            let grow = &mut gw[k * d_out..(k + 1) * d_out];
            for b in start..end {
                let drow = &delta[b * d_out..(b + 1) * d_out];
                let c = act[b * d_in + k];
                let mut acc = [0.0f64; 4];
                if b == 0 {
                    for ((w4, g4), d4) in wrow[..quads]
                        .chunks_exact(4)
                        .zip(grow[..quads].chunks_exact_mut(4))
                        .zip(drow[..quads].chunks_exact(4))
                    {
                        acc[0] += w4[0] * d4[0];
                        g4[0] = c * d4[0];
                        acc[1] += w4[1] * d4[1];
                        g4[1] = c * d4[1];
                        acc[2] += w4[2] * d4[2];
                        g4[2] = c * d4[2];
                        acc[3] += w4[3] * d4[3];
                        g4[3] = c * d4[3];
                    }
                    for o in quads..d_out {
                        acc[0] += wrow[o] * drow[o];
                        grow[o] = c * drow[o];
                    }
                } else {
                    for ((w4, g4), d4) in wrow[..quads]
                        .chunks_exact(4)
                        .zip(grow[..quads].chunks_exact_mut(4))
                        .zip(drow[..quads].chunks_exact(4))
                    {
                        acc[0] += w4[0] * d4[0];
                        g4[0] += c * d4[0];
                        acc[1] += w4[1] * d4[1];
                        g4[1] += c * d4[1];
                        acc[2] += w4[2] * d4[2];
                        g4[2] += c * d4[2];
                        acc[3] += w4[3] * d4[3];
                        g4[3] += c * d4[3];
                    }
                    for o in quads..d_out {
                        acc[0] += wrow[o] * drow[o];
                        grow[o] += c * drow[o];
                    }
                }
                back[b * d_in + k] = (acc[0] + acc[1]) + (acc[2] + acc[3]);
            }
        }
        start = end;
    }
}

/// `gw[i, :] += input[b, i] * delta[b, :]` over the batch; `gw` must be
/// zeroed by the caller. Suitable for narrow input layers.
pub(crate) fn grad_narrow(
    input: &[f64],
    n: usize,
    d_in: usize,
    delta: &[f64],
    d_out: usize,
    gw: &mut [f64],
) {
    for b in 0..n {
        let drow = &delta[b * d_out..(b + 1) * d_out];
        let xrow = &input[b * d_in..(b + 1) * d_in];
        for (i, &xi) in xrow.iter().enumerate() {
            let grow = &mut gw[i * d_out..(i + 1) * d_out];
            for (g, &dv) in grow.iter_mut().zip(drow) {
                *g += xi * dv;
            }
        }
    }
}

pub(crate) fn grad_bias(delta: &[f64], n: usize, d_out: usize, gb: &mut [f64]) {
    for b in 0..n {
        let drow = &delta[b * d_out..(b + 1) * d_out];
        for (g, &dv) in gb.iter_mut().zip(drow) {
            *g += dv;
        }
    }
}

pub(crate) fn tanh_map(gamma: f64, pre: &[f64], act: &mut [f64]) {
    for (a, &u) in act.iter_mut().zip(pre) {
        *a = crate::num::tanh(gamma * u);
    }
}
