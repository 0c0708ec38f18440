//! Sum-product belief propagation in half-LLR form.

use serde::{Deserialize, Serialize};

use crate::channel::LlrVector;
use crate::error::{Error, Result};
use crate::graph::TannerGraph;

/// Messages are clamped to `[-MSG_CLAMP, MSG_CLAMP]` half-LLR units. Beyond
/// this `tanh` equals one to double precision.
pub const MSG_CLAMP: f64 = 30.0;

#[inline]
pub fn clamp_msg(x: f64) -> f64 {
    x.clamp(-MSG_CLAMP, MSG_CLAMP)
}

/// `atanh(tanh a * tanh b)` without forming the hyperbolic functions.
#[inline]
pub fn boxplus(a: f64, b: f64) -> f64 {
    let s = if (a < 0.0) != (b < 0.0) { -1.0 } else { 1.0 };
    s * a.abs().min(b.abs()) + 0.5 * (-2.0 * (a + b).abs()).exp().ln_1p()
        - 0.5 * (-2.0 * (a - b).abs()).exp().ln_1p()
}

/// Boxplus of all inputs but one, for every position, by prefix and suffix
/// combination. An empty combination is the identity (`+MSG_CLAMP`).
pub fn extrinsic_boxplus(inputs: &[f64], out: &mut Vec<f64>) {
    let r = inputs.len();
    out.clear();
    out.resize(r, MSG_CLAMP);
    if r < 2 {
        return;
    }
    let mut prefix = vec![0.0; r];
    prefix[0] = inputs[0];
    for k in 1..r {
        prefix[k] = boxplus(prefix[k - 1], inputs[k]);
    }
    let mut suffix = inputs[r - 1];
    out[r - 1] = prefix[r - 2];
    for k in (1..r - 1).rev() {
        out[k] = boxplus(prefix[k - 1], suffix);
        suffix = boxplus(suffix, inputs[k]);
    }
    out[0] = suffix;
    for v in out.iter_mut() {
        *v = clamp_msg(*v);
    }
}

/// Messages on every edge. Edge `e` of check `c` is `edge_start[c] + k`
/// for the `k`-th variable of `c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MessageState {
    pub var_to_check: Vec<f64>,
    pub check_to_var: Vec<f64>,
    pub iteration: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BpOutput {
    /// `tanh(l_i + delta_i)`
    pub estimates: Vec<f64>,
    /// Sum of incoming check messages at each variable.
    pub delta: Vec<f64>,
    pub state: MessageState,
}

/// Flooding-schedule sum-product with all check messages starting at zero.
/// Clamped bits enter with the channel value `MSG_CLAMP`.
pub fn bp_decode(g: &TannerGraph, l: &LlrVector, iterations: usize) -> Result<BpOutput> {
    if l.len() != g.n() {
        return Err(Error::invalid("LLR vector length does not match the code"));
    }
    let chan: Vec<f64> = (0..g.n())
        .map(|i| if l.is_clamped(i) { MSG_CLAMP } else { l.value(i) })
        .collect();
    if chan.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("LLRs must be finite"));
    }
    let mut edge_start = Vec::with_capacity(g.m() + 1);
    let mut e = 0;
    for c in 0..g.m() {
        edge_start.push(e);
        e += g.check_vars(c).len();
    }
    edge_start.push(e);
    // For each variable, the edges that end at it.
    let mut var_edges: Vec<Vec<usize>> = vec![Vec::new(); g.n()];
    for c in 0..g.m() {
        for (k, &v) in g.check_vars(c).iter().enumerate() {
            var_edges[v].push(edge_start[c] + k);
        }
    }
    let mut state = MessageState {
        var_to_check: vec![0.0; e],
        check_to_var: vec![0.0; e],
        iteration: 0,
    };
    let mut buf = Vec::new();
    let mut ext = Vec::new();
    for _ in 0..iterations {
        for (v, edges) in var_edges.iter().enumerate() {
            let total: f64 = chan[v] + edges.iter().map(|&e| state.check_to_var[e]).sum::<f64>();
            for &e in edges {
                state.var_to_check[e] = clamp_msg(total - state.check_to_var[e]);
            }
        }
        for c in 0..g.m() {
            let range = edge_start[c]..edge_start[c + 1];
            buf.clear();
            buf.extend_from_slice(&state.var_to_check[range.clone()]);
            extrinsic_boxplus(&buf, &mut ext);
            state.check_to_var[range].copy_from_slice(&ext);
        }
        state.iteration += 1;
    }
    let delta: Vec<f64> = var_edges
        .iter()
        .map(|edges| edges.iter().map(|&e| state.check_to_var[e]).sum())
        .collect();
    let estimates = chan.iter().zip(&delta).map(|(l, d)| (l + d).tanh()).collect();
    Ok(BpOutput {
        estimates,
        delta,
        state,
    })
}
