//! Per-axis dyadic pyramid kernels.
//!
//! Every multi-parameter pairing in the crate is a tensor product of
//! one-dimensional maps, one per axis. An axis either stays at cell
//! resolution ([`AxisKernel::Identity`]) or is traded for the full tree of
//! dyadic intervals, indexed in heap order: interval `(k, j)` lives at
//! `2^k - 1 + j`, so an axis of depth `N` carries `2^(N+1) - 1` entries.
//!
//! Analysis pairs cell values against a profile on every interval;
//! synthesis is its adjoint and sums profiles weighted by coefficients.

use ndarray::{ArrayD, Axis, IxDyn};

/// The one-dimensional profile attached to a dyadic interval `I`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AxisKernel {
    /// Leave the axis untouched.
    Identity,
    /// `1_I / |I|`: analysis gives the average over `I`.
    Average,
    /// `1_I`: analysis gives the integral over `I`.
    Indicator,
    /// `h_I = |I|^{-1/2}(1_{I_l} - 1_{I_r})`; zero on finest-scale intervals.
    Haar,
}

/// Number of dyadic intervals of scale `0..=depth`.
pub fn interval_count(depth: u32) -> usize {
    (1usize << (depth + 1)) - 1
}

/// Scale of the interval at heap index `idx`.
pub fn heap_scale(idx: usize) -> u32 {
    usize::BITS - 1 - (idx + 1).leading_zeros()
}

/// `|I|^{-1/2}` for an interval of scale `k`.
pub fn inv_sqrt_len(k: u32) -> f64 {
    ((1u64 << k) as f64).sqrt()
}

/// `2^-k`, exact.
pub fn dyadic_len(k: u32) -> f64 {
    1.0 / (1u64 << k) as f64
}

/// Pairwise sum; exact for `2^n` equal summands.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        n => {
            let mid = n / 2;
            pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
        }
    }
}

/// Analyse one line of `2^depth` cell values into `2^(depth+1) - 1` interval values.
pub fn analyze_line(line: &[f64], depth: u32, kernel: AxisKernel, out: &mut [f64]) {
    let n = 1usize << depth;
    debug_assert_eq!(line.len(), n);
    debug_assert_eq!(out.len(), 2 * n - 1);
    let cell = dyadic_len(depth);
    // Integrals over every interval, built bottom-up in place.
    for (j, v) in line.iter().enumerate() {
        out[n - 1 + j] = v * cell;
    }
    for idx in (0..n - 1).rev() {
        out[idx] = out[2 * idx + 1] + out[2 * idx + 2];
    }
    match kernel {
        AxisKernel::Indicator | AxisKernel::Identity => {}
        AxisKernel::Average => {
            for (idx, v) in out.iter_mut().enumerate() {
                *v *= (1u64 << heap_scale(idx)) as f64;
            }
        }
        AxisKernel::Haar => {
            // Parents precede children in heap order, so a forward sweep reads
            // children integrals before they are overwritten.
            for idx in 0..n - 1 {
                let k = heap_scale(idx);
                out[idx] = (out[2 * idx + 1] - out[2 * idx + 2]) * inv_sqrt_len(k);
            }
            for v in &mut out[n - 1..] {
                *v = 0.0;
            }
        }
    }
}

/// Adjoint of [`analyze_line`]: `out(x) = Σ_I coefs[I] φ_I(x)`.
pub fn synthesize_line(
    coefs: &[f64],
    depth: u32,
    kernel: AxisKernel,
    acc: &mut [f64],
    out: &mut [f64],
) {
    let n = 1usize << depth;
    debug_assert_eq!(coefs.len(), 2 * n - 1);
    debug_assert_eq!(out.len(), n);
    acc.iter_mut().for_each(|v| *v = 0.0);
    for idx in 0..2 * n - 1 {
        let k = heap_scale(idx);
        match kernel {
            AxisKernel::Average => acc[idx] += coefs[idx] * (1u64 << k) as f64,
            AxisKernel::Indicator => acc[idx] += coefs[idx],
            AxisKernel::Haar | AxisKernel::Identity => {}
        }
        if k < depth {
            let (l, r) = (2 * idx + 1, 2 * idx + 2);
            if kernel == AxisKernel::Haar {
                let s = coefs[idx] * inv_sqrt_len(k);
                acc[l] = acc[idx] + s;
                acc[r] = acc[idx] - s;
            } else {
                acc[l] = acc[idx];
                acc[r] = acc[idx];
            }
        }
    }
    out.copy_from_slice(&acc[n - 1..]);
}

/// Running maximum over ancestors: interval values to cell values.
pub fn descend_max_line(values: &[f64], depth: u32, acc: &mut [f64], out: &mut [f64]) {
    let n = 1usize << depth;
    acc[0] = values[0];
    for idx in 1..2 * n - 1 {
        acc[idx] = acc[(idx - 1) / 2].max(values[idx]);
    }
    out.copy_from_slice(&acc[n - 1..]);
}

pub(crate) fn map_lanes(
    input: &ArrayD<f64>,
    axis: usize,
    out_len: usize,
    mut op: impl FnMut(&[f64], &mut [f64]),
) -> ArrayD<f64> {
    let mut shape = input.shape().to_vec();
    let in_len = shape[axis];
    shape[axis] = out_len;
    let mut out = ArrayD::zeros(IxDyn(&shape));
    let mut inbuf = vec![0.0; in_len];
    let mut outbuf = vec![0.0; out_len];
    for (lane_in, mut lane_out) in input
        .lanes(Axis(axis))
        .into_iter()
        .zip(out.lanes_mut(Axis(axis)))
    {
        for (b, v) in inbuf.iter_mut().zip(lane_in.iter()) {
            *b = *v;
        }
        op(&inbuf, &mut outbuf);
        for (o, v) in lane_out.iter_mut().zip(&outbuf) {
            *o = *v;
        }
    }
    out
}

/// Tensor analysis: axis `t` must have `2^depths[t]` entries unless its kernel is `Identity`.
pub fn analyze(input: &ArrayD<f64>, depths: &[u32], kernels: &[AxisKernel]) -> ArrayD<f64> {
    assert_eq!(input.ndim(), kernels.len());
    let mut cur = input.clone();
    for (axis, (&kernel, &depth)) in kernels.iter().zip(depths).enumerate() {
        if kernel == AxisKernel::Identity {
            continue;
        }
        assert_eq!(cur.shape()[axis], 1 << depth, "axis {axis} is not at cell resolution");
        cur = map_lanes(&cur, axis, interval_count(depth), |line, out| {
            analyze_line(line, depth, kernel, out)
        });
    }
    cur
}

/// Tensor synthesis: axis `t` must have `2^(depths[t]+1) - 1` entries unless `Identity`.
pub fn synthesize(coefs: &ArrayD<f64>, depths: &[u32], kernels: &[AxisKernel]) -> ArrayD<f64> {
    assert_eq!(coefs.ndim(), kernels.len());
    let mut cur = coefs.clone();
    for (axis, (&kernel, &depth)) in kernels.iter().zip(depths).enumerate() {
        if kernel == AxisKernel::Identity {
            continue;
        }
        assert_eq!(cur.shape()[axis], interval_count(depth), "axis {axis} is not interval-indexed");
        let mut acc = vec![0.0; interval_count(depth)];
        cur = map_lanes(&cur, axis, 1 << depth, |line, out| {
            synthesize_line(line, depth, kernel, &mut acc, out)
        });
    }
    cur
}

/// On every selected axis, replace interval values by the maximum over the
/// ancestors of each cell.
pub fn descend_max(values: &ArrayD<f64>, depths: &[u32], axes: &[bool]) -> ArrayD<f64> {
    let mut cur = values.clone();
    for (axis, (&sel, &depth)) in axes.iter().zip(depths).enumerate() {
        if !sel {
            continue;
        }
        let mut acc = vec![0.0; interval_count(depth)];
        cur = map_lanes(&cur, axis, 1 << depth, |line, out| {
            descend_max_line(line, depth, &mut acc, out)
        });
    }
    cur
}
