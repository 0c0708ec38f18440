//! Exact enumeration of the posterior measure on a code and of its dual.
//!
//! The primal measure weights each codeword `sigma` (spins `+1/-1`) by
//! `exp(sum_i l_i sigma_i)`. The dual sums over one spin `u_c` per check with
//! weight `prod_i (1 + e^{-2 l_i} tau_i)`, `tau_i = prod_{c in i} u_c`. The
//! two partition functions satisfy `Z_P = 2^{-m} e^{sum l} Z_G` when `Z_G`
//! is the plain sum over all `2^m` check assignments; grouping assignments by
//! the dual codeword they produce divides `Z_G` by `2^{m - rank}` and turns
//! the prefactor into `1 / |dual code|`.
//!
//! Perfectly observed bits are conditioned to `+1` and removed from the
//! state space; their (infinite) channel factor is left out of `Z_P`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::LlrVector;
use crate::error::{Error, Result};
use crate::gf2::{get_bit, ones, words_for, xor_into};
use crate::graph::{Neighborhood, TannerGraph};
use crate::stats::{sorted_sum, CompensatedSum};

pub const DEFAULT_BUDGET_LOG2: u32 = 26;

/// Below this `|l|` the derivative identities are not evaluated.
pub const DEFAULT_POLE_GUARD: f64 = 1e-3;

const RESCALE_GAP: f64 = 64.0;
const RESYNC_EVERY: u64 = 1024;
const PARALLEL_MIN_LOG2: u32 = 16;
const MAX_CHUNK_LOG2: u32 = 6;
const DUAL_FLOOR: f64 = 1e-300;
const SORT_CONDITION: f64 = 1e6;
const SORT_MAX_TERMS_LOG2: u32 = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnumOptions {
    /// Largest state space, as a power of two, that will be enumerated.
    pub budget_log2: u32,
}

impl Default for EnumOptions {
    fn default() -> Self {
        Self {
            budget_log2: DEFAULT_BUDGET_LOG2,
        }
    }
}

impl EnumOptions {
    fn check(&self, needed_log2: usize) -> Result<()> {
        if needed_log2 > self.budget_log2 as usize || needed_log2 > 62 {
            Err(Error::Capacity {
                needed_log2: needed_log2 as u32,
                budget_log2: self.budget_log2,
            })
        } else {
            Ok(())
        }
    }
}

/// Splits `2^k` states into `2^c` chunks of `2^(k-c)` consecutive Gray-code
/// states. The layout depends on `k` only, never on the thread count.
fn chunk_layout(k: usize) -> (u32, u32) {
    let c = if k as u32 >= PARALLEL_MIN_LOG2 {
        (k as u32).min(MAX_CHUNK_LOG2)
    } else {
        0
    };
    (k as u32 - c, c)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairStat {
    pub i: usize,
    pub j: usize,
    /// `<sigma_i sigma_j>`
    pub correlation: f64,
    /// `<sigma_i sigma_j> - <sigma_i><sigma_j>`
    pub covariance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GibbsResult {
    /// Natural log of the partition function over the unclamped bits.
    pub log_z: f64,
    pub marginals: Vec<f64>,
    pub pairs: Vec<PairStat>,
    /// Conditional entropy of the codeword given the observation, in nats.
    pub entropy: f64,
    /// `log2` of the number of enumerated codewords.
    pub dimension: usize,
}

impl GibbsResult {
    pub fn pair(&self, i: usize, j: usize) -> Option<&PairStat> {
        self.pairs
            .iter()
            .find(|p| (p.i, p.j) == (i, j) || (p.i, p.j) == (j, i))
    }
}

fn check_pairs(n: usize, pairs: &[(usize, usize)]) -> Result<()> {
    for &(i, j) in pairs {
        if i >= n || j >= n {
            return Err(Error::invalid(format!("pair ({i}, {j}) out of range for n = {n}")));
        }
    }
    Ok(())
}

fn check_llr(g: &TannerGraph, l: &LlrVector) -> Result<()> {
    if l.len() != g.n() {
        return Err(Error::invalid(format!(
            "LLR vector has {} entries but the code has {} bits",
            l.len(),
            g.n()
        )));
    }
    if let Some(i) = (0..l.len()).find(|&i| !l.is_clamped(i) && !l.value(i).is_finite()) {
        return Err(Error::invalid(format!("bit {i}: LLR is not finite")));
    }
    Ok(())
}

/// Pairs whose covariance vanishes for structural reasons.
fn structurally_independent(comp: &[usize], l: &LlrVector, i: usize, j: usize) -> bool {
    i != j && (l.is_clamped(i) || l.is_clamped(j) || comp[i] != comp[j])
}

struct PrimalAcc {
    reference: f64,
    z: f64,
    /// `sum w (S - reference)`, for the entropy.
    t: f64,
    ones: Vec<f64>,
    pair: Vec<f64>,
}

impl PrimalAcc {
    fn new(n: usize, pairs: usize) -> Self {
        Self {
            reference: f64::NEG_INFINITY,
            z: 0.0,
            t: 0.0,
            ones: vec![0.0; n],
            pair: vec![0.0; pairs],
        }
    }

    fn rebase(&mut self, reference: f64) {
        if self.z == 0.0 {
            self.reference = reference;
            return;
        }
        let d = reference - self.reference;
        let f = (-d).exp();
        self.t = f * (self.t - d * self.z);
        self.z *= f;
        self.ones.iter_mut().for_each(|a| *a *= f);
        self.pair.iter_mut().for_each(|a| *a *= f);
        self.reference = reference;
    }

    #[inline]
    fn visit(&mut self, s: f64, x: &[u64], pairs: &[(usize, usize)]) {
        if s > self.reference + RESCALE_GAP || self.z == 0.0 {
            self.rebase(s);
        }
        let e = s - self.reference;
        let w = e.exp();
        self.z += w;
        self.t += w * e;
        for i in ones(x) {
            self.ones[i] += w;
        }
        for (k, &(i, j)) in pairs.iter().enumerate() {
            if get_bit(x, i) && get_bit(x, j) {
                self.pair[k] += w;
            }
        }
    }

    fn merge(mut self, mut other: PrimalAcc) -> PrimalAcc {
        if other.z == 0.0 {
            return self;
        }
        if self.z == 0.0 {
            return other;
        }
        let r = self.reference.max(other.reference);
        self.rebase(r);
        other.rebase(r);
        self.z += other.z;
        self.t += other.t;
        self.ones.iter_mut().zip(&other.ones).for_each(|(a, b)| *a += b);
        self.pair.iter_mut().zip(&other.pair).for_each(|(a, b)| *a += b);
        self
    }
}

fn spin_sum(l: &[f64], free: &[usize], x: &[u64]) -> f64 {
    free.iter()
        .map(|&i| if get_bit(x, i) { -l[i] } else { l[i] })
        .sum()
}

/// Basis of the codewords that vanish on the clamped bits.
fn conditioned_basis(g: &TannerGraph, l: &LlrVector) -> Vec<Vec<u64>> {
    let mut h = g.parity_matrix();
    for i in (0..g.n()).filter(|&i| l.is_clamped(i)) {
        h.push_row(&[i]);
    }
    h.null_space_basis()
}

/// Exact posterior over the code by Gray-code enumeration of its codewords.
pub fn gibbs_exact(g: &TannerGraph, l: &LlrVector, pairs: &[(usize, usize)]) -> Result<GibbsResult> {
    gibbs_exact_with(g, l, pairs, &EnumOptions::default())
}

pub fn gibbs_exact_with(
    g: &TannerGraph,
    l: &LlrVector,
    pairs: &[(usize, usize)],
    opts: &EnumOptions,
) -> Result<GibbsResult> {
    check_llr(g, l)?;
    check_pairs(g.n(), pairs)?;
    let n = g.n();
    let basis = conditioned_basis(g, l);
    let k = basis.len();
    opts.check(k)?;
    let supports: Vec<Vec<usize>> = basis.iter().map(|b| ones(b).collect()).collect();
    let free: Vec<usize> = (0..n).filter(|&i| !l.is_clamped(i)).collect();
    let lv = l.values();
    let (low, c) = chunk_layout(k);
    let words = words_for(n);

    let run_chunk = |high: u64| -> PrimalAcc {
        let mut acc = PrimalAcc::new(n, pairs.len());
        let mut x = vec![0u64; words];
        for b in 0..c as usize {
            if high >> b & 1 == 1 {
                xor_into(&mut x, &basis[low as usize + b]);
            }
        }
        let mut s = spin_sum(lv, &free, &x);
        acc.visit(s, &x, pairs);
        for t in 1..(1u64 << low) {
            let b = t.trailing_zeros() as usize;
            let mut ds = 0.0;
            for &i in &supports[b] {
                ds += if get_bit(&x, i) { 2.0 * lv[i] } else { -2.0 * lv[i] };
            }
            xor_into(&mut x, &basis[b]);
            s = if t % RESYNC_EVERY == 0 {
                spin_sum(lv, &free, &x)
            } else {
                s + ds
            };
            acc.visit(s, &x, pairs);
        }
        acc
    };

    let parts: Vec<PrimalAcc> = (0..1u64 << c).into_par_iter().map(run_chunk).collect();
    let acc = parts
        .into_iter()
        .reduce(PrimalAcc::merge)
        .expect("at least one chunk");

    let comp = g.var_components();
    let marginals: Vec<f64> = (0..n)
        .map(|i| {
            if l.is_clamped(i) {
                1.0
            } else {
                1.0 - 2.0 * acc.ones[i] / acc.z
            }
        })
        .collect();
    let pair_stats = pairs
        .iter()
        .zip(&acc.pair)
        .map(|(&(i, j), &p11)| {
            let (mi, mj) = (marginals[i], marginals[j]);
            if structurally_independent(&comp, l, i, j) {
                return PairStat {
                    i,
                    j,
                    correlation: mi * mj,
                    covariance: 0.0,
                };
            }
            let (ai, aj) = (acc.ones[i] / acc.z, acc.ones[j] / acc.z);
            let p11 = if i == j { ai } else { p11 / acc.z };
            let covariance = 4.0 * (p11 - ai * aj);
            PairStat {
                i,
                j,
                correlation: covariance + mi * mj,
                covariance,
            }
        })
        .collect();
    let entropy = (acc.z.ln() - acc.t / acc.z).max(0.0);
    Ok(GibbsResult {
        log_z: acc.reference + acc.z.ln(),
        marginals,
        pairs: pair_stats,
        entropy,
        dimension: k,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualPair {
    pub i: usize,
    pub j: usize,
    /// `<tau_i tau_j>_G`
    pub second_moment: f64,
    /// `<tau_i tau_j>_G - <tau_i>_G <tau_j>_G`
    pub covariance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualResult {
    /// `ln |Z_G|` for the plain sum over all `2^m` check assignments.
    pub log_abs_z: f64,
    /// Sign of `Z_G`; `+1` whenever the duality identity holds.
    pub sign: f64,
    pub checks: usize,
    pub rank: usize,
    /// `sum |terms| / |sum terms|` of the signed sum.
    pub condition: f64,
    /// Whether the magnitude-sorted second pass was used.
    pub sorted: bool,
    /// `(i, <tau_i>_G)` for every requested variable.
    pub tau: Vec<(usize, f64)>,
    pub pairs: Vec<DualPair>,
}

impl DualResult {
    /// `ln Z_G` counted once per dual codeword instead of once per check
    /// assignment (the two differ by the `2^{m - rank}` assignments that map
    /// to each dual codeword).
    pub fn log_z_per_dual_codeword(&self) -> f64 {
        self.log_abs_z - (self.checks - self.rank) as f64 * std::f64::consts::LN_2
    }

    pub fn tau_of(&self, i: usize) -> Option<f64> {
        self.tau.iter().find(|(v, _)| *v == i).map(|(_, t)| *t)
    }

    pub fn pair(&self, i: usize, j: usize) -> Option<&DualPair> {
        self.pairs
            .iter()
            .find(|p| (p.i, p.j) == (i, j) || (p.i, p.j) == (j, i))
    }
}

/// `ln(1 + e^x)` without overflow.
pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Per-variable factors of the scaled dual weight. With
/// `1 + e^{-2l} tau = (1 + e^{-2l}) * (tau == 1 ? 1 : tanh l)`, a check
/// assignment contributes `prod_{tau_i = -1} tanh l_i` times a common scale.
struct DualFactors {
    tanh: Vec<f64>,
    ln_abs: Vec<f64>,
    log_scale: f64,
}

impl DualFactors {
    fn new(l: &LlrVector) -> Self {
        let n = l.len();
        let mut tanh = vec![1.0; n];
        let mut ln_abs = vec![0.0; n];
        let mut log_scale = 0.0;
        for i in (0..n).filter(|&i| !l.is_clamped(i)) {
            let v = l.value(i);
            tanh[i] = v.tanh();
            ln_abs[i] = tanh[i].abs().ln();
            log_scale += softplus(-2.0 * v);
        }
        Self {
            tanh,
            ln_abs,
            log_scale,
        }
    }
}

/// Running state of one Gray-code walk over check assignments.
struct DualWalk<'a> {
    g: &'a TannerGraph,
    f: &'a DualFactors,
    tau_neg: Vec<bool>,
    log_abs: f64,
    negatives: usize,
    zeros: usize,
}

impl<'a> DualWalk<'a> {
    fn start(g: &'a TannerGraph, f: &'a DualFactors, u_neg: impl Iterator<Item = usize>) -> Self {
        let mut tau_neg = vec![false; g.n()];
        for c in u_neg {
            for &i in g.check_vars(c) {
                tau_neg[i] ^= true;
            }
        }
        let mut w = Self {
            g,
            f,
            tau_neg,
            log_abs: 0.0,
            negatives: 0,
            zeros: 0,
        };
        w.resync();
        w
    }

    fn resync(&mut self) {
        self.log_abs = 0.0;
        self.negatives = 0;
        self.zeros = 0;
        for i in 0..self.tau_neg.len() {
            if self.tau_neg[i] {
                self.enter(i);
            }
        }
    }

    #[inline]
    fn enter(&mut self, i: usize) {
        let t = self.f.tanh[i];
        if t == 0.0 {
            self.zeros += 1;
        } else {
            self.log_abs += self.f.ln_abs[i];
            self.negatives += (t < 0.0) as usize;
        }
    }

    #[inline]
    fn leave(&mut self, i: usize) {
        let t = self.f.tanh[i];
        if t == 0.0 {
            self.zeros -= 1;
        } else {
            self.log_abs -= self.f.ln_abs[i];
            self.negatives -= (t < 0.0) as usize;
        }
    }

    #[inline]
    fn flip(&mut self, c: usize) {
        for &i in self.g.check_vars(c) {
            self.tau_neg[i] ^= true;
            if self.tau_neg[i] {
                self.enter(i);
            } else {
                self.leave(i);
            }
        }
    }

    #[inline]
    fn weight(&self) -> f64 {
        if self.zeros > 0 {
            return 0.0;
        }
        let v = self.log_abs.exp();
        if self.negatives % 2 == 1 {
            -v
        } else {
            v
        }
    }
}

/// Walks the `2^low` assignments of chunk `high`, calling `visit(w, tau_neg)`.
fn dual_chunk(
    g: &TannerGraph,
    f: &DualFactors,
    low: u32,
    c: u32,
    high: u64,
    visit: &mut impl FnMut(f64, &[bool]),
) {
    let fixed = (0..c as usize)
        .filter(|b| high >> b & 1 == 1)
        .map(|b| low as usize + b);
    let mut walk = DualWalk::start(g, f, fixed);
    visit(walk.weight(), &walk.tau_neg);
    for t in 1..(1u64 << low) {
        walk.flip(t.trailing_zeros() as usize);
        if t % RESYNC_EVERY == 0 {
            walk.resync();
        }
        visit(walk.weight(), &walk.tau_neg);
    }
}

#[derive(Clone)]
struct DualAcc {
    z: CompensatedSum,
    tau: Vec<CompensatedSum>,
    pair: Vec<CompensatedSum>,
}

impl DualAcc {
    fn merge(mut self, other: DualAcc) -> DualAcc {
        self.z.merge(&other.z);
        self.tau.iter_mut().zip(&other.tau).for_each(|(a, b)| a.merge(b));
        self.pair.iter_mut().zip(&other.pair).for_each(|(a, b)| a.merge(b));
        self
    }
}

/// Exact dual sum over all check assignments, with the brackets
/// `<tau_i>_G` for `vars` and `<tau_i tau_j>_G` for `pairs`.
pub fn dual_exact(
    g: &TannerGraph,
    l: &LlrVector,
    vars: &[usize],
    pairs: &[(usize, usize)],
) -> Result<DualResult> {
    dual_exact_with(g, l, vars, pairs, &EnumOptions::default())
}

pub fn dual_exact_with(
    g: &TannerGraph,
    l: &LlrVector,
    vars: &[usize],
    pairs: &[(usize, usize)],
    opts: &EnumOptions,
) -> Result<DualResult> {
    check_llr(g, l)?;
    check_pairs(g.n(), pairs)?;
    if let Some(&v) = vars.iter().find(|&&v| v >= g.n()) {
        return Err(Error::invalid(format!("variable {v} out of range")));
    }
    let m = g.m();
    opts.check(m)?;
    let f = DualFactors::new(l);
    let (low, c) = chunk_layout(m);
    let empty = DualAcc {
        z: CompensatedSum::default(),
        tau: vec![CompensatedSum::default(); vars.len()],
        pair: vec![CompensatedSum::default(); pairs.len()],
    };

    let parts: Vec<DualAcc> = (0..1u64 << c)
        .into_par_iter()
        .map(|high| {
            let mut acc = empty.clone();
            dual_chunk(g, &f, low, c, high, &mut |w, tau_neg| {
                acc.z.add(w);
                for (k, &i) in vars.iter().enumerate() {
                    acc.tau[k].add(if tau_neg[i] { -w } else { w });
                }
                for (k, &(i, j)) in pairs.iter().enumerate() {
                    acc.pair[k].add(if tau_neg[i] ^ tau_neg[j] { -w } else { w });
                }
            });
            acc
        })
        .collect();
    let acc = parts.into_iter().reduce(DualAcc::merge).expect("at least one chunk");

    let condition = acc.z.condition();
    let quantities = 1 + vars.len() + pairs.len();
    let fits = (m as u32) + (usize::BITS - quantities.leading_zeros()) <= SORT_MAX_TERMS_LOG2;
    let (z, tau_sums, pair_sums, sorted) = if condition > SORT_CONDITION && fits {
        let mut terms: Vec<Vec<f64>> = vec![Vec::with_capacity(1 << m); quantities];
        for high in 0..1u64 << c {
            dual_chunk(g, &f, low, c, high, &mut |w, tau_neg| {
                terms[0].push(w);
                for (k, &i) in vars.iter().enumerate() {
                    terms[1 + k].push(if tau_neg[i] { -w } else { w });
                }
                for (k, &(i, j)) in pairs.iter().enumerate() {
                    terms[1 + vars.len() + k].push(if tau_neg[i] ^ tau_neg[j] { -w } else { w });
                }
            });
        }
        let sums: Vec<f64> = terms.iter_mut().map(|t| sorted_sum(t)).collect();
        (
            sums[0],
            sums[1..1 + vars.len()].to_vec(),
            sums[1 + vars.len()..].to_vec(),
            true,
        )
    } else {
        (
            acc.z.value(),
            acc.tau.iter().map(|s| s.value()).collect(),
            acc.pair.iter().map(|s| s.value()).collect(),
            false,
        )
    };

    let log_abs_z = f.log_scale + z.abs().ln();
    if !(log_abs_z >= DUAL_FLOOR.ln()) {
        return Err(Error::DegenerateRatio {
            log_abs_z,
            condition,
        });
    }
    let tau: Vec<(usize, f64)> = vars.iter().zip(&tau_sums).map(|(&i, s)| (i, s / z)).collect();
    let comp = g.var_components();
    let pairs_out = pairs
        .iter()
        .zip(&pair_sums)
        .map(|(&(i, j), s)| {
            let second = s / z;
            let ti = tau_value(g, &f, &tau, i, z);
            let tj = tau_value(g, &f, &tau, j, z);
            let covariance = if structurally_independent(&comp, l, i, j) {
                0.0
            } else {
                second - ti * tj
            };
            DualPair {
                i,
                j,
                second_moment: if covariance == 0.0 { ti * tj } else { second },
                covariance,
            }
        })
        .collect();
    Ok(DualResult {
        log_abs_z,
        sign: z.signum(),
        checks: m,
        rank: g.rank(),
        condition,
        sorted,
        tau,
        pairs: pairs_out,
    })
}

/// `<tau_i>_G` for a pair endpoint, computing it if it was not requested.
fn tau_value(
    g: &TannerGraph,
    f: &DualFactors,
    tau: &[(usize, f64)],
    i: usize,
    z: f64,
) -> f64 {
    if let Some((_, t)) = tau.iter().find(|(v, _)| *v == i) {
        return *t;
    }
    let (low, c) = chunk_layout(g.m());
    let mut s = CompensatedSum::default();
    for high in 0..1u64 << c {
        dual_chunk(g, f, low, c, high, &mut |w, tau_neg| {
            s.add(if tau_neg[i] { -w } else { w })
        });
    }
    s.value() / z
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualityCheck {
    /// `|ln Z_P - (-rank ln 2 + sum l + ln Z_G)|` with `Z_G` counted per
    /// dual codeword.
    pub residual: f64,
    pub log_z_p: f64,
    pub log_z_g: f64,
    pub log_z_g_per_dual_codeword: f64,
    pub sum_llr: f64,
    pub rank: usize,
    pub checks: usize,
    pub condition: f64,
}

pub fn check_duality(g: &TannerGraph, l: &LlrVector) -> Result<DualityCheck> {
    check_duality_with(g, l, &EnumOptions::default())
}

pub fn check_duality_with(g: &TannerGraph, l: &LlrVector, opts: &EnumOptions) -> Result<DualityCheck> {
    let p = gibbs_exact_with(g, l, &[], opts)?;
    let d = dual_exact_with(g, l, &[], &[], opts)?;
    let sum_llr = l.sum_finite();
    let per_codeword = d.log_z_per_dual_codeword();
    let rhs = -(d.rank as f64) * std::f64::consts::LN_2 + sum_llr + per_codeword;
    let residual = if d.sign > 0.0 {
        (p.log_z - rhs).abs()
    } else {
        f64::INFINITY
    };
    Ok(DualityCheck {
        residual,
        log_z_p: p.log_z,
        log_z_g: d.log_abs_z,
        log_z_g_per_dual_codeword: per_codeword,
        sum_llr,
        rank: d.rank,
        checks: d.checks,
        condition: d.condition,
    })
}

/// Residuals of the first- and second-derivative identities linking primal
/// marginals and covariances to dual brackets. `None` marks a residual that
/// was skipped because an LLR lies within the pole guard.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivativeCheck {
    pub first: Option<f64>,
    pub second: Option<f64>,
    pub near_pole: bool,
}

pub fn check_derivative_identities(
    g: &TannerGraph,
    l: &LlrVector,
    i: usize,
    j: usize,
) -> Result<DerivativeCheck> {
    check_derivative_identities_with(g, l, i, j, DEFAULT_POLE_GUARD, &EnumOptions::default())
}

pub fn check_derivative_identities_with(
    g: &TannerGraph,
    l: &LlrVector,
    i: usize,
    j: usize,
    guard: f64,
    opts: &EnumOptions,
) -> Result<DerivativeCheck> {
    if i >= g.n() || j >= g.n() || i == j {
        return Err(Error::invalid(format!("need two distinct bits in range, got ({i}, {j})")));
    }
    if l.is_clamped(i) || l.is_clamped(j) {
        return Err(Error::invalid("derivative identities need finite LLRs at both bits"));
    }
    let (li, lj) = (l.value(i), l.value(j));
    let i_ok = li.abs() >= guard;
    let j_ok = lj.abs() >= guard;
    if !i_ok {
        return Ok(DerivativeCheck {
            first: None,
            second: None,
            near_pole: true,
        });
    }
    let p = gibbs_exact_with(g, l, &[(i, j)], opts)?;
    let d = dual_exact_with(g, l, &[i, j], &[(i, j)], opts)?;
    let tau_i = d.tau_of(i).expect("requested");
    let predicted = 1.0 / (2.0 * li).tanh() - tau_i / (2.0 * li).sinh();
    let first = (p.marginals[i] - predicted).abs();
    let second = j_ok.then(|| {
        let cov_p = p.pair(i, j).expect("requested").covariance;
        let cov_g = d.pair(i, j).expect("requested").covariance;
        (cov_p - cov_g / ((2.0 * li).sinh() * (2.0 * lj).sinh())).abs()
    });
    Ok(DerivativeCheck {
        first: Some(first),
        second,
        near_pole: !j_ok,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Boundary {
    /// Only the channel factors act on the outermost variables.
    Free,
    /// Variables at exactly the neighborhood depth are fixed to `+1`.
    PlusOne,
}

/// `<sigma_o>` in the measure restricted to the depth-`depth` neighborhood.
pub fn neighborhood_gibbs(
    g: &TannerGraph,
    root: usize,
    depth: usize,
    l: &LlrVector,
    boundary: Boundary,
) -> Result<f64> {
    let nb = g.neighborhood(root, depth)?;
    neighborhood_marginal(g, &nb, l, boundary, &EnumOptions::default())
}

pub fn neighborhood_marginal(
    g: &TannerGraph,
    nb: &Neighborhood,
    l: &LlrVector,
    boundary: Boundary,
    opts: &EnumOptions,
) -> Result<f64> {
    check_llr(g, l)?;
    let (sub, root) = nb.subgraph(g);
    let local = restrict_llr(l, &nb.vars);
    let local = match boundary {
        Boundary::Free => local,
        Boundary::PlusOne => {
            let idx: Vec<usize> = nb
                .boundary
                .iter()
                .map(|v| nb.vars.binary_search(v).expect("boundary inside"))
                .collect();
            local.clamp(&idx)
        }
    };
    Ok(gibbs_exact_with(&sub, &local, &[], opts)?.marginals[root])
}

/// LLRs of the given variables, in order, keeping clamp flags.
pub fn restrict_llr(l: &LlrVector, vars: &[usize]) -> LlrVector {
    let values = vars.iter().map(|&v| l.value(v)).collect();
    let clamped: Vec<usize> = vars
        .iter()
        .enumerate()
        .filter(|(_, &v)| l.is_clamped(v))
        .map(|(k, _)| k)
        .collect();
    LlrVector::from_values(values).clamp(&clamped)
}

/// Partition functions of the subgraph left after deleting a set of checks
/// together with every variable touching one of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestrictedPartitions {
    /// `ln |Z_G|` over assignments of the remaining checks.
    pub log_z_g: f64,
    pub z_g_sign: f64,
    pub log_z_p: f64,
    /// `log2` of the dual code size of the remaining subgraph.
    pub dual_log2: usize,
    /// `log2` of the dual code size of the full graph.
    pub full_dual_log2: usize,
    /// Sum of the LLRs of the deleted variables.
    pub removed_llr_sum: f64,
    pub kept_vars: Vec<usize>,
    pub kept_checks: Vec<usize>,
}

/// Empty sums are zero and empty products one, so deleting every check of a
/// graph without isolated variables leaves `Z_G = Z_P = 1`.
pub fn restricted_partitions(g: &TannerGraph, xhat: &[usize], l: &LlrVector) -> Result<RestrictedPartitions> {
    restricted_partitions_with(g, xhat, l, &EnumOptions::default())
}

pub fn restricted_partitions_with(
    g: &TannerGraph,
    xhat: &[usize],
    l: &LlrVector,
    opts: &EnumOptions,
) -> Result<RestrictedPartitions> {
    check_llr(g, l)?;
    let mut removed = vec![false; g.m()];
    for &c in xhat {
        if c >= g.m() {
            return Err(Error::invalid(format!("check {c} out of range")));
        }
        removed[c] = true;
    }
    let kept_checks: Vec<usize> = (0..g.m()).filter(|&c| !removed[c]).collect();
    let kept_vars: Vec<usize> = (0..g.n())
        .filter(|&v| g.var_checks(v).iter().all(|&c| !removed[c]))
        .collect();
    let removed_llr_sum = (0..g.n())
        .filter(|&v| !l.is_clamped(v) && g.var_checks(v).iter().any(|&c| removed[c]))
        .map(|v| l.value(v))
        .sum();
    let sub = g.subgraph(&kept_vars, &kept_checks);
    let local = restrict_llr(l, &kept_vars);
    let p = gibbs_exact_with(&sub, &local, &[], opts)?;
    let d = dual_exact_with(&sub, &local, &[], &[], opts)?;
    Ok(RestrictedPartitions {
        log_z_g: d.log_abs_z,
        z_g_sign: d.sign,
        log_z_p: p.log_z,
        dual_log2: d.rank,
        full_dual_log2: g.rank(),
        removed_llr_sum,
        kept_vars,
        kept_checks,
    })
}
