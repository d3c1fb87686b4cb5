//! Restricted projections `pi_s(r1, c, r2) = r1 + c.L(s) + r2 q(s)`, a
//! fiber-counting audit of the finitary projection theorem over a grid of
//! directions, and the pipeline that pushes a localized cloud onto the
//! expanding line.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{HoroError, Result};
use crate::fractal::FractalMeasure;
use crate::gmt_dimension::{coarse_dim_check, energy_constant, localize_with, max_dist, LocalizeOptions, PointCloud};
use crate::linalg::max_abs;
use crate::rng;
use crate::so_kernel::{adjoint_asus, bch_normal_form, xi_parts, RVector, BETA0, MAX_N};
use crate::stats::{linear_fit, wilson_interval, LinearFit};

/// Transversality scale: `eta` must stay below `2^{-2 ell} ETA0`.
pub const ETA0: f64 = 0.01;
/// Audits on coarser grids are refused.
pub const MIN_DIRECTIONS: usize = 64;
/// Lower bound on `|w^+| / |w|` enforced by the expanding-subset search.
pub const EXPANDING_RATIO: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionFamily {
    pub n: usize,
    pub l: DMatrix<f64>,
    pub q: DMatrix<f64>,
    standard: bool,
}

impl ProjectionFamily {
    pub fn new(n: usize, l: DMatrix<f64>, q: DMatrix<f64>) -> Result<Self> {
        if !(3..=MAX_N).contains(&n) {
            return Err(HoroError::InvalidDimension(n));
        }
        let k = n - 2;
        for m in [&l, &q] {
            if m.nrows() != k || m.ncols() != k {
                return Err(HoroError::DimensionMismatch { expected: k, got: m.nrows().max(m.ncols()) });
            }
        }
        let sv = l.clone().singular_values();
        let (smin, smax) = (sv.min(), sv.max());
        if !(smin > 1e-12 * smax) {
            return Err(HoroError::InvalidArgument(format!("L is singular (singular values in [{smin:e}, {smax:e}])")));
        }
        if max_abs(&(&q - q.transpose())) > 1e-12 * max_abs(&q).max(1.0) {
            return Err(HoroError::InvalidArgument("q is not symmetric".into()));
        }
        let lam = q.clone().symmetric_eigenvalues().min();
        if !(lam > 0.0) {
            return Err(HoroError::InvalidArgument(format!("q is not positive definite (min eigenvalue {lam:e})")));
        }
        Ok(ProjectionFamily { n, l, q, standard: false })
    }

    /// `L = id`, `q(s) = |s|^2 / 2`; evaluates through `xi_s`.
    pub fn so_instance(n: usize) -> Result<Self> {
        if !(3..=MAX_N).contains(&n) {
            return Err(HoroError::InvalidDimension(n));
        }
        let k = n - 2;
        Ok(ProjectionFamily {
            n,
            l: DMatrix::identity(k, k),
            q: DMatrix::identity(k, k) * 0.5,
            standard: true,
        })
    }

    pub fn dim_s(&self) -> usize {
        self.n - 2
    }

    pub fn condition_number(&self) -> f64 {
        let sv = self.l.clone().singular_values();
        sv.max() / sv.min()
    }

    pub fn min_q_eigenvalue(&self) -> f64 {
        self.q.clone().symmetric_eigenvalues().min()
    }

    pub fn l_apply(&self, s: &[f64]) -> Vec<f64> {
        (0..self.dim_s()).map(|i| s.iter().enumerate().map(|(j, sj)| self.l[(i, j)] * sj).sum()).collect()
    }

    pub fn q_eval(&self, s: &[f64]) -> f64 {
        s.iter()
            .enumerate()
            .map(|(i, si)| si * s.iter().enumerate().map(|(j, sj)| self.q[(i, j)] * sj).sum::<f64>())
            .sum()
    }

    /// `pi_s(Z)` for `Z = (r1, c_1, ..., c_{n-2}, r2)`.
    pub fn pi_s(&self, s: &[f64], z: &[f64]) -> f64 {
        let n = self.n;
        debug_assert!(z.len() == n && s.len() == n - 2);
        if self.standard {
            return xi_parts(s, z[0], &z[1..n - 1], z[n - 1]);
        }
        let ls = self.l_apply(s);
        let dot: f64 = z[1..n - 1].iter().zip(&ls).map(|(a, b)| a * b).sum();
        z[0] + dot + z[n - 1] * self.q_eval(s)
    }

    /// `f_s(Z) = (r1, c.L(s), r2 q(s))`.
    pub fn f_s(&self, s: &[f64], z: &[f64]) -> [f64; 3] {
        let n = self.n;
        debug_assert!(z.len() == n && s.len() == n - 2);
        let (dot, q) = if self.standard {
            let dot: f64 = s.iter().zip(&z[1..n - 1]).map(|(a, b)| a * b).sum();
            (dot, s.iter().map(|x| x * x).sum::<f64>() * 0.5)
        } else {
            let ls = self.l_apply(s);
            (z[1..n - 1].iter().zip(&ls).map(|(a, b)| a * b).sum(), self.q_eval(s))
        };
        [z[0], dot, z[n - 1] * q]
    }
}

pub fn pi_s(fam: &ProjectionFamily, s: &[f64], z: &[f64]) -> f64 {
    fam.pi_s(s, z)
}

pub fn f_s(fam: &ProjectionFamily, s: &[f64], z: &[f64]) -> [f64; 3] {
    fam.f_s(s, z)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransversalityEstimate {
    pub fraction: f64,
    /// 99% Wilson interval.
    pub ci: (f64, f64),
    pub hits: u64,
    pub samples: u64,
}

pub fn transversality_measure(
    fam: &ProjectionFamily,
    z: &[f64],
    zp: &[f64],
    eta: f64,
    ell: u32,
    samples: u64,
    seed: u64,
) -> Result<TransversalityEstimate> {
    transversality_measure_with(fam, z, zp, eta, ell, samples, seed, ETA0)
}

/// Monte Carlo measure of `{s in Cyl_ell : |f_s(Z) - f_s(Z')| <= eta}` as a
/// fraction of the annulus `2^-ell <= |s| <= 2^{1-ell}`.
#[allow(clippy::too_many_arguments)]
pub fn transversality_measure_with(
    fam: &ProjectionFamily,
    z: &[f64],
    zp: &[f64],
    eta: f64,
    ell: u32,
    samples: u64,
    seed: u64,
    eta0: f64,
) -> Result<TransversalityEstimate> {
    for p in [z, zp] {
        if p.len() != fam.n {
            return Err(HoroError::DimensionMismatch { expected: fam.n, got: p.len() });
        }
    }
    let d = max_dist(z, zp);
    if (d - 1.0).abs() > 1e-9 {
        return Err(HoroError::Normalization(format!("|Z - Z'| = {d}, expected 1")));
    }
    let cap = 2f64.powi(-2 * ell as i32) * eta0;
    if !(eta >= 0.0 && eta < cap) {
        return Err(HoroError::InvalidArgument(format!("eta = {eta} outside [0, {cap})")));
    }
    if samples == 0 {
        return Err(HoroError::EmptyInput("samples".into()));
    }
    let lo = 2f64.powi(-(ell as i32));
    let mut r = rng::stream(seed, 0);
    let mut hits = 0;
    for _ in 0..samples {
        let s = sample_annulus(&mut r, fam.dim_s(), lo, 2.0 * lo);
        let a = fam.f_s(&s, z);
        let b = fam.f_s(&s, zp);
        if max_dist(&a, &b) <= eta {
            hits += 1;
        }
    }
    Ok(TransversalityEstimate {
        fraction: hits as f64 / samples as f64,
        ci: wilson_interval(hits, samples, 0.99),
        hits,
        samples,
    })
}

/// Uniform sample from `{lo <= |s|_2 <= hi}` in `R^k`.
pub fn sample_annulus<R: Rng>(r: &mut R, k: usize, lo: f64, hi: f64) -> Vec<f64> {
    let mut dir: Vec<f64> = loop {
        let v: Vec<f64> = (0..k)
            .map(|_| {
                let u1: f64 = 1.0 - r.gen::<f64>();
                let u2: f64 = r.gen();
                (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
            })
            .collect();
        if v.iter().any(|x| *x != 0.0) {
            break v;
        }
    };
    let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
    let kf = k as f64;
    let u: f64 = r.gen();
    let radius = (lo.powf(kf) + u * (hi.powf(kf) - lo.powf(kf))).powf(1.0 / kf);
    dir.iter_mut().for_each(|x| *x *= radius / norm);
    dir
}

/// Stratified directions in the cube `[-1/2, 1/2]^k`: cell points at
/// relative position `offset` for `k <= 2`, a seeded Latin hypercube of
/// `per_axis^2` points otherwise.
pub fn direction_grid(k: usize, per_axis: usize, offset: f64) -> Vec<Vec<f64>> {
    let coord = |i: usize| -0.5 + (i as f64 + offset) / per_axis as f64;
    match k {
        0 => vec![vec![]],
        1 => (0..per_axis).map(|i| vec![coord(i)]).collect(),
        2 => (0..per_axis).flat_map(|i| (0..per_axis).map(move |j| vec![coord(i), coord(j)])).collect(),
        _ => {
            let count = per_axis * per_axis;
            let mut r = rng::stream(k as u64, per_axis as u64);
            let axes: Vec<Vec<usize>> = (0..k)
                .map(|_| {
                    let mut p: Vec<usize> = (0..count).collect();
                    p.shuffle(&mut r);
                    p
                })
                .collect();
            (0..count)
                .map(|i| axes.iter().map(|p| -0.5 + (p[i] as f64 + offset) / count as f64).collect())
                .collect()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionAudit {
    pub s: Vec<f64>,
    pub discarded: usize,
    /// Largest fiber count inside `F_{b,s}`.
    pub worst_count: usize,
    /// `worst_count` over the fiber bound; at most 1.
    pub worst_ratio: f64,
    pub bad: bool,
    retained: Vec<u64>,
}

impl DirectionAudit {
    pub fn is_retained(&self, i: usize) -> bool {
        self.retained[i / 64] >> (i % 64) & 1 == 1
    }

    /// Indices of `F_{b,s}` in the input order.
    pub fn retained_indices(&self) -> Vec<usize> {
        (0..self.retained.len() * 64).filter(|&i| self.is_retained(i)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionAudit {
    pub b: f64,
    /// `C Ĉ b0^{-10 eps} b^delta #F`.
    pub fiber_bound: f64,
    /// Largest discard count of a good direction.
    pub allowance: f64,
    pub good_directions: Vec<usize>,
    pub bad_fraction: f64,
    pub per_direction: Vec<DirectionAudit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditOptions {
    /// Fixed `Ĉ`; fitted from the calibration grid when `None`.
    pub c_hat: Option<f64>,
    /// Directions used to fit `Ĉ`; the audited grid itself when `None`.
    pub calibration_grid: Option<Vec<Vec<f64>>>,
    /// Quantile, over calibration directions, of the smallest `Ĉ` keeping a
    /// direction good at the finest audited scale.
    pub calibration_quantile: f64,
    /// Discard allowance as a fraction of `#F`.
    pub allowance_fraction: f64,
}

impl Default for AuditOptions {
    fn default() -> Self {
        AuditOptions { c_hat: None, calibration_grid: None, calibration_quantile: 0.99, allowance_fraction: 0.01 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinitaryReport {
    pub delta: f64,
    #[serde(rename = "C")]
    pub c: f64,
    pub eps: f64,
    pub b0: f64,
    pub c_hat: f64,
    pub c_hat_in_sample: bool,
    pub audits: Vec<ProjectionAudit>,
    /// Fit of `log bad_fraction` against `log b` over scales with bad directions.
    pub power_fit: Option<LinearFit>,
    /// Bad fraction at the largest `b` does not exceed that at the smallest.
    pub shrinks_as_b_grows: bool,
}

impl FinitaryReport {
    pub fn bad_fraction_at_largest_b(&self) -> f64 {
        self.audits.last().map_or(f64::NAN, |a| a.bad_fraction)
    }
}

pub fn verify_main_finitary(
    f: &PointCloud,
    fam: &ProjectionFamily,
    delta: f64,
    c: f64,
    eps: f64,
    s_grid: &[Vec<f64>],
    b_list: &[f64],
) -> Result<FinitaryReport> {
    verify_main_finitary_with(f, fam, delta, c, eps, s_grid, b_list, &AuditOptions::default())
}

/// For each scale and grid direction, discards the most concentrated points
/// of `F` (ties by lexicographic order) until every `pi_s`-fiber of radius
/// `b` holds at most `C Ĉ b0^{-10 eps} b^delta #F` points.
#[allow(clippy::too_many_arguments)]
pub fn verify_main_finitary_with(
    f: &PointCloud,
    fam: &ProjectionFamily,
    delta: f64,
    c: f64,
    eps: f64,
    s_grid: &[Vec<f64>],
    b_list: &[f64],
    opts: &AuditOptions,
) -> Result<FinitaryReport> {
    if s_grid.len() < MIN_DIRECTIONS {
        return Err(HoroError::Resolution(format!(
            "{} directions, at least {MIN_DIRECTIONS} required",
            s_grid.len()
        )));
    }
    if f.ambient_dim != fam.n {
        return Err(HoroError::DimensionMismatch { expected: fam.n, got: f.ambient_dim });
    }
    if let Some(s) = s_grid.iter().find(|s| s.len() != fam.dim_s()) {
        return Err(HoroError::DimensionMismatch { expected: fam.dim_s(), got: s.len() });
    }
    if !(eps > 0.0 && eps < delta / 100.0) {
        return Err(HoroError::InvalidArgument(format!("need 0 < eps < delta/100, got eps = {eps}")));
    }
    if b_list.is_empty() {
        return Err(HoroError::EmptyInput("scale list".into()));
    }
    let cert = coarse_dim_check(f, delta, c)?;
    if !cert.valid {
        return Err(HoroError::InvalidArgument(format!(
            "F fails the coarse dimension check at delta = {delta}, C = {c} (worst ratio {:.4})",
            cert.worst_ratio
        )));
    }
    let mut scales = b_list.to_vec();
    scales.sort_by(f64::total_cmp);
    let total = f.len();
    let b0 = f.b0;
    let base = |b: f64| c * b0.powf(-10.0 * eps) * b.powf(delta) * total as f64;
    let lexrank = lex_ranks(&f.points);

    let allowance = opts.allowance_fraction * total as f64;
    let (c_hat, in_sample) = match opts.c_hat {
        Some(v) => (v, false),
        None => {
            let grid = opts.calibration_grid.as_deref().unwrap_or(s_grid);
            let b = scales[0];
            let mut needed: Vec<f64> = grid
                .iter()
                .map(|s| {
                    let (order, sorted) = sorted_projection(fam, s, &f.points);
                    minimal_cap(&order, &sorted, &lexrank, b, allowance) as f64 / base(b)
                })
                .collect();
            needed.sort_by(f64::total_cmp);
            let q = opts.calibration_quantile.clamp(0.0, 1.0);
            let idx = ((needed.len() - 1) as f64 * q).ceil() as usize;
            (needed[idx].max(1.0), opts.calibration_grid.is_none())
        }
    };

    let mut per_scale: Vec<Vec<DirectionAudit>> = vec![Vec::with_capacity(s_grid.len()); scales.len()];
    for s in s_grid {
        let (order, sorted) = sorted_projection(fam, s, &f.points);
        for (j, &b) in scales.iter().enumerate() {
            let bound = c_hat * base(b);
            per_scale[j].push(audit_direction(s, &order, &sorted, &lexrank, b, bound, allowance));
        }
    }
    let audits: Vec<ProjectionAudit> = scales
        .iter()
        .zip(per_scale)
        .map(|(&b, per_direction)| {
            let good_directions: Vec<usize> = (0..per_direction.len()).filter(|&i| !per_direction[i].bad).collect();
            let bad_fraction = 1.0 - good_directions.len() as f64 / per_direction.len() as f64;
            ProjectionAudit { b, fiber_bound: c_hat * base(b), allowance, good_directions, bad_fraction, per_direction }
        })
        .collect();

    let (xs, ys): (Vec<f64>, Vec<f64>) =
        audits.iter().filter(|a| a.bad_fraction > 0.0).map(|a| (a.b.ln(), a.bad_fraction.ln())).unzip();
    let power_fit = if xs.len() >= 2 { linear_fit(&xs, &ys, 0.95) } else { None };
    let shrinks = audits.last().unwrap().bad_fraction <= audits[0].bad_fraction;
    Ok(FinitaryReport {
        delta,
        c,
        eps,
        b0,
        c_hat,
        c_hat_in_sample: in_sample,
        audits,
        power_fit,
        shrinks_as_b_grows: shrinks,
    })
}

fn lex_ranks(points: &[Vec<f64>]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..points.len()).collect();
    idx.sort_by(|&a, &b| {
        points[a]
            .iter()
            .zip(&points[b])
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut rank = vec![0; points.len()];
    for (r, &i) in idx.iter().enumerate() {
        rank[i] = r;
    }
    rank
}

/// Permutation sorting the projections, and the sorted values.
fn sorted_projection(fam: &ProjectionFamily, s: &[f64], points: &[Vec<f64>]) -> (Vec<usize>, Vec<f64>) {
    let proj: Vec<f64> = points.iter().map(|p| fam.pi_s(s, p)).collect();
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| proj[a].total_cmp(&proj[b]).then(a.cmp(&b)));
    let sorted = order.iter().map(|&i| proj[i]).collect();
    (order, sorted)
}

/// `#{j : |v_j - v_k| <= b}` for every `k`, on sorted values.
fn fiber_counts(sorted: &[f64], b: f64) -> Vec<usize> {
    let m = sorted.len();
    let mut counts = vec![0; m];
    let (mut lo, mut hi) = (0, 0);
    for k in 0..m {
        while sorted[k] - sorted[lo] > b {
            lo += 1;
        }
        if hi < k {
            hi = k;
        }
        while hi + 1 < m && sorted[hi + 1] - sorted[k] <= b {
            hi += 1;
        }
        counts[k] = hi + 1 - lo;
    }
    counts
}

/// Smallest integer fiber cap for which the greedy discard stays within
/// `allowance`.
fn minimal_cap(order: &[usize], sorted: &[f64], lexrank: &[usize], b: f64, allowance: f64) -> usize {
    let (mut lo, mut hi) = (0, sorted.len());
    while lo < hi {
        let mid = (lo + hi) / 2;
        if audit_direction(&[], order, sorted, lexrank, b, mid as f64, allowance).bad {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    lo
}

fn audit_direction(
    s: &[f64],
    order: &[usize],
    sorted: &[f64],
    lexrank: &[usize],
    b: f64,
    bound: f64,
    allowance: f64,
) -> DirectionAudit {
    let m = sorted.len();
    let cap = bound.floor().max(0.0) as usize;
    let mut counts = fiber_counts(sorted, b);
    let mut alive = vec![true; m];
    let mut heap: BinaryHeap<(usize, Reverse<usize>, usize)> =
        (0..m).map(|k| (counts[k], Reverse(lexrank[order[k]]), k)).collect();
    let mut discarded = 0;
    let mut worst = 0;
    while let Some((count, _, k)) = heap.pop() {
        if !alive[k] || count != counts[k] {
            continue;
        }
        if count <= cap {
            worst = count;
            break;
        }
        alive[k] = false;
        discarded += 1;
        let touch = |j: usize, counts: &mut Vec<usize>, heap: &mut BinaryHeap<_>| {
            if alive[j] {
                counts[j] -= 1;
                heap.push((counts[j], Reverse(lexrank[order[j]]), j));
            }
        };
        let mut j = k;
        while j > 0 && sorted[k] - sorted[j - 1] <= b {
            j -= 1;
            touch(j, &mut counts, &mut heap);
        }
        let mut j = k + 1;
        while j < m && sorted[j] - sorted[k] <= b {
            touch(j, &mut counts, &mut heap);
            j += 1;
        }
    }
    let mut retained = vec![0u64; m.div_ceil(64)];
    for k in (0..m).filter(|&k| alive[k]) {
        let i = order[k];
        retained[i / 64] |= 1 << (i % 64);
    }
    DirectionAudit {
        s: s.to_vec(),
        discarded,
        worst_count: worst,
        worst_ratio: worst as f64 / bound,
        bad: discarded as f64 > allowance,
        retained,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExpandingCase {
    /// At least a quarter of E already has a large expanding part.
    Immediate,
    /// The neutral part dominates; `s_i = 0.1`.
    Neutral,
    /// The contracting part dominates; `s_i = 0.75`.
    Contracting,
    /// Found outside the proof's primary branch.
    Fallback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpandingSubset {
    pub s: Vec<f64>,
    /// `Ad(u_s) w` for the retained `w`.
    pub ebar: Vec<RVector>,
    /// Positions of the retained `w` in the input.
    pub indices: Vec<usize>,
    pub case: ExpandingCase,
}

/// Finds `s` and a quarter of `Ad(u_s) E` whose expanding coordinate is at
/// least `10^-3` of the norm.
pub fn select_expanding_subset(e: &[RVector]) -> Result<ExpandingSubset> {
    let first = e.first().ok_or_else(|| HoroError::EmptyInput("E".into()))?;
    let n = first.n();
    if let Some(w) = e.iter().find(|w| w.n() != n) {
        return Err(HoroError::DimensionMismatch { expected: n, got: w.n() });
    }
    let k = n - 2;
    if let Some(w) = e.iter().find(|w| w.norm() > 1.0 + 1e-12) {
        return Err(HoroError::OutOfRange { norm: w.norm(), radius: 1.0 });
    }
    let attempt = |s: &[f64]| -> Result<Option<(Vec<usize>, Vec<RVector>)>> {
        let mut idx = Vec::new();
        let mut out = Vec::new();
        for (i, w) in e.iter().enumerate() {
            let v = adjoint_asus(0.0, s, w)?;
            if v.plus().abs() >= EXPANDING_RATIO * v.norm() {
                idx.push(i);
                out.push(v);
            }
        }
        Ok((4 * out.len() >= e.len()).then_some((idx, out)))
    };
    let unit = |i: usize, v: f64| {
        let mut s = vec![0.0; k];
        s[i] = v;
        s
    };

    let mut candidates: Vec<(Vec<f64>, ExpandingCase)> = vec![(vec![0.0; k], ExpandingCase::Immediate)];
    let hat: Vec<&RVector> = e.iter().filter(|w| w.plus().abs() < EXPANDING_RATIO * w.norm()).collect();
    let neutral: Vec<&&RVector> = hat.iter().filter(|w| w.c.iter().fold(0.0_f64, |m, x| m.max(x.abs())) >= 0.1 * w.norm()).collect();
    let by_count = |count: &dyn Fn(usize) -> usize| {
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by_key(|&i| Reverse(count(i)));
        order
    };
    if 4 * neutral.len() >= e.len() {
        let order = by_count(&|i| neutral.iter().filter(|w| w.c[i].abs() >= 0.1 * w.norm()).count());
        candidates.extend(order.into_iter().map(|i| (unit(i, 0.1), ExpandingCase::Neutral)));
    } else {
        let argmax = |w: &RVector| {
            (0..k).fold(0, |best, i| if w.c[i].abs() > w.c[best].abs() { i } else { best })
        };
        let order = by_count(&|i| hat.iter().filter(|w| argmax(w) == i).count());
        candidates.extend(order.into_iter().map(|i| (unit(i, 0.75), ExpandingCase::Contracting)));
    }
    for v in [0.1, 0.75] {
        for i in 0..k {
            let s = unit(i, v);
            if !candidates.iter().any(|(c, _)| *c == s) {
                candidates.push((s, ExpandingCase::Fallback));
            }
        }
    }

    let mut log = Vec::new();
    for (s, case) in candidates {
        match attempt(&s)? {
            Some((indices, ebar)) => {
                assert!(ebar.iter().all(|v| v.plus().abs() >= EXPANDING_RATIO * v.norm()));
                return Ok(ExpandingSubset { s, ebar, indices, case });
            }
            None => log.push(format!("s = {s:?}")),
        }
    }
    Err(HoroError::CounterexampleFound(format!(
        "#E = {}, #E_hat = {}, neutral-dominant = {}, rejected candidates: {}",
        e.len(),
        hat.len(),
        neutral.len(),
        log.join(", ")
    )))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransverseOptions {
    /// Energy constant `D`; the cloud's own minimal value when `None`.
    pub energy_constant: Option<f64>,
    pub localize: LocalizeOptions,
    /// The cloud is placed in the Lie algebra as `lambda F`.
    pub embed_scale: f64,
    /// Radii of the direction annulus searched for the final projection.
    pub annulus: (f64, f64),
    /// Grid points per axis over `[-annulus.1, annulus.1]^{n-2}` before filtering.
    pub per_axis: usize,
    /// Largest accepted `C_eps`.
    pub c_eps_cap: f64,
    pub audit: AuditOptions,
}

impl Default for TransverseOptions {
    fn default() -> Self {
        TransverseOptions {
            energy_constant: None,
            localize: LocalizeOptions::default(),
            embed_scale: 0.5 * BETA0,
            annulus: (0.125, 0.5),
            per_axis: 256,
            c_eps_cap: 100.0,
            audit: AuditOptions::default(),
        }
    }
}

/// Size requirement on `#F`, evaluated with unit constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SizeCondition {
    /// `(#F)^-eps`.
    pub lhs: f64,
    /// `e^-1 10^-5 eta^3`.
    pub rhs: f64,
    pub met: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecenteringRecord {
    pub w0_index: usize,
    pub w0: Vec<f64>,
    pub bracket: (f64, f64),
    pub t: f64,
    pub energy_constant: f64,
    pub fprime_size: usize,
    pub normal_form_max_residual: f64,
    pub lemma_s: Vec<f64>,
    pub lemma_case: ExpandingCase,
    pub ebar_size: usize,
    pub direction: Vec<f64>,
    pub directions_audited: usize,
    pub directions_good: usize,
    pub c_hat: f64,
    pub es_size: usize,
    /// `I = offset + scale * e^t xi(w) / lambda`.
    pub affine: (f64, f64),
    pub size_condition: SizeCondition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransverseMeasure {
    pub y_meta: RecenteringRecord,
    pub support: Vec<f64>,
    pub rho: FractalMeasure,
    pub b1: f64,
    /// `delta - (3 + n) eps`.
    pub delta_target: f64,
    /// Fitted constant of `rho(J) <= C_eps (b0/b1)^-eps |J|^delta_target`.
    pub c_eps: f64,
    /// Shortest certified interval, in the coordinates of `support`.
    pub min_length: f64,
}

pub fn build_transverse_measure(f: &PointCloud, delta: f64, eps: f64, eta: f64) -> Result<TransverseMeasure> {
    build_transverse_measure_with(f, delta, eps, eta, &TransverseOptions::default())
}

/// Localize, recenter through the normal form, choose an expanding subset
/// and an audited direction, then push forward by `w -> e^t xi_s(w)`.
pub fn build_transverse_measure_with(
    f: &PointCloud,
    delta: f64,
    eps: f64,
    eta: f64,
    opts: &TransverseOptions,
) -> Result<TransverseMeasure> {
    let n = f.ambient_dim;
    if !(3..=MAX_N).contains(&n) {
        return Err(HoroError::InvalidDimension(n));
    }
    let total = f.len();
    let b0 = 1.0 / total as f64;

    let d = match opts.energy_constant {
        Some(d) => d,
        None => energy_constant(f, delta, eps).map_err(stage("energy"))?,
    };
    let loc = localize_with(f, delta, eps, d, opts.localize).map_err(stage("localize"))?;
    let b1 = loc.b1;
    let t = b1.ln().abs();

    let lambda = opts.embed_scale;
    let w0 = RVector::from_coords(&loc.w0).scale(lambda);
    let mut e = Vec::with_capacity(loc.fprime.len());
    let mut max_residual = 0.0_f64;
    for p in &loc.fprime.points {
        let wp = RVector::from_coords(p).scale(lambda);
        let nf = bch_normal_form(&wp, &w0).map_err(stage("normal_form"))?;
        max_residual = max_residual.max(nf.residual);
        e.push(nf.w.scale(0.5 / (lambda * b1)));
    }
    let lemma = select_expanding_subset(&e).map_err(stage("expanding_subset"))?;

    let (lo, hi) = opts.annulus;
    let k = n - 2;
    let grid: Vec<Vec<f64>> = direction_grid(k, opts.per_axis, 0.5)
        .into_iter()
        .map(|s| s.iter().map(|x| 2.0 * hi * x).collect::<Vec<f64>>())
        .filter(|s| {
            let r = s.iter().map(|x| x * x).sum::<f64>().sqrt();
            (lo..=hi).contains(&r)
        })
        .collect();
    let delta_target = delta - (3.0 + n as f64) * eps;
    let points: Vec<Vec<f64>> = lemma.ebar.iter().map(|w| w.coords()).collect();
    // scales below 1/#F in the original cloud are not resolved
    let audit_b0 = b0 / (2.0 * b1);
    let cloud = PointCloud::new(points, vec![0.0; n], audit_b0, 1.0).map_err(stage("direction"))?;
    let c_audit = coarse_dim_check(&cloud, delta_target, 1.0)
        .map_err(stage("direction"))?
        .minimal_constant()
        .max(1.0)
        * (1.0 + 8.0 * f64::EPSILON);
    let fam = ProjectionFamily::so_instance(n)?;
    let scales = crate::gmt_dimension::dyadic_scales(0.5, audit_b0);
    let report = verify_main_finitary_with(&cloud, &fam, delta_target, c_audit, eps.min(delta_target / 101.0), &grid, &scales, &opts.audit)
        .map_err(stage("direction"))?;
    let good: Vec<usize> = (0..grid.len())
        .filter(|&i| report.audits.iter().all(|a| !a.per_direction[i].bad))
        .collect();
    let pick = good
        .iter()
        .copied()
        .min_by_key(|&i| (report.audits.iter().map(|a| a.per_direction[i].discarded).sum::<usize>(), i))
        .ok_or_else(|| {
            HoroError::at_stage("direction", HoroError::Resolution(format!("none of {} directions passes the audit", grid.len())))
        })?;
    let es: Vec<usize> = (0..cloud.len())
        .filter(|&i| report.audits.iter().all(|a| a.per_direction[pick].is_retained(i)))
        .collect();
    let direction = grid[pick].clone();

    let reach = 1.0 + direction.iter().map(|x| x.abs()).sum::<f64>() + 0.5 * direction.iter().map(|x| x * x).sum::<f64>();
    let scale = 0.5 / reach;
    let support: Vec<f64> =
        es.iter().map(|&i| (0.5 + scale * xi_parts(&direction, lemma.ebar[i].r1, &lemma.ebar[i].c, lemma.ebar[i].r2)).clamp(0.0, 1.0)).collect();
    // one unit of e^t xi(w) / lambda is 1 / (2 * 2 reach) in support coordinates
    let to_paper = 4.0 * reach;
    let min_length = b0 / b1 / to_paper;
    let weights = vec![1.0; support.len()];
    let rho = FractalMeasure::counting(&support, &weights, delta_target, min_length).map_err(stage("measure"))?;
    let prefactor = (b0 / b1).powf(-eps);
    let envelope = |len: f64| prefactor * (to_paper * len).powf(delta_target);
    let fit = rho.scan_with(envelope, delta_target, min_length);
    if fit.c > opts.c_eps_cap {
        let (wlo, whi) = fit.witness;
        return Err(HoroError::MeasureBound {
            lo: wlo,
            hi: whi,
            mass: rho.mass(wlo, whi),
            bound: opts.c_eps_cap * envelope(whi - wlo),
        });
    }
    let lhs = (total as f64).powf(-eps);
    let rhs = (-1f64).exp() * 1e-5 * eta.powi(3);
    Ok(TransverseMeasure {
        y_meta: RecenteringRecord {
            w0_index: loc.w0_index,
            w0: loc.w0.clone(),
            bracket: loc.bracket,
            t,
            energy_constant: d,
            fprime_size: loc.fprime.len(),
            normal_form_max_residual: max_residual,
            lemma_s: lemma.s.clone(),
            lemma_case: lemma.case,
            ebar_size: lemma.ebar.len(),
            direction,
            directions_audited: grid.len(),
            directions_good: good.len(),
            c_hat: report.c_hat,
            es_size: es.len(),
            affine: (0.5, 0.5 * scale),
            size_condition: SizeCondition { lhs, rhs, met: lhs <= rhs },
        },
        support,
        rho,
        b1,
        delta_target,
        c_eps: fit.c,
        min_length,
    })
}

fn stage(name: &'static str) -> impl Fn(HoroError) -> HoroError {
    move |e| HoroError::at_stage(name, e)
}
