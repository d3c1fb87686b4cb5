//! Sublevel-set bounds for polynomials and the expansion integrals
//! `∫ ‖Ad(a_t u_s) Z‖^{-δ} ds` over the unit cube of `U`.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{HoroError, Result};
use crate::quadrature::{integrate, QuadResult};
use crate::rng::stream;
use crate::so_kernel::{xi_parts, RVector};
use crate::stats::{linear_fit, wilson_interval};

/// Half-width of the cube `B_1^U`.
pub const CUBE_HALF: f64 = 0.5;
pub const MIN_RESOLUTION: usize = 1000;

/// Real polynomial in `dim` variables stored as exponent vector -> coefficient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polynomial {
    pub dim: usize,
    pub terms: BTreeMap<Vec<u32>, f64>,
}

impl Polynomial {
    pub fn new<I: IntoIterator<Item = (Vec<u32>, f64)>>(dim: usize, terms: I) -> Result<Self> {
        if dim == 0 {
            return Err(HoroError::InvalidArgument("polynomial in zero variables".into()));
        }
        let mut map = BTreeMap::new();
        for (exp, a) in terms {
            if exp.len() != dim {
                return Err(HoroError::DimensionMismatch { expected: dim, got: exp.len() });
            }
            if !a.is_finite() {
                return Err(HoroError::NonFinite("polynomial coefficient".into()));
            }
            *map.entry(exp).or_insert(0.0) += a;
        }
        map.retain(|_, a| *a != 0.0);
        Ok(Polynomial { dim, terms: map })
    }

    /// `sum_k coeffs[k] x^k`.
    pub fn univariate(coeffs: &[f64]) -> Result<Self> {
        Self::new(1, coeffs.iter().enumerate().map(|(k, a)| (vec![k as u32], *a)))
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(|e| e.iter().sum::<u32>()).max().unwrap_or(0)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(e, a)| a * e.iter().zip(x).map(|(k, xi)| xi.powi(*k as i32)).product::<f64>())
            .sum()
    }

    /// Coefficients in `x_axis` after fixing every other variable at `point`.
    pub fn restrict(&self, point: &[f64], axis: usize) -> Vec<f64> {
        let mut coeffs = vec![0.0; self.degree() as usize + 1];
        for (e, a) in &self.terms {
            let rest: f64 =
                e.iter().zip(point).enumerate().filter(|(i, _)| *i != axis).map(|(_, (k, x))| x.powi(*k as i32)).product();
            coeffs[e[axis] as usize] += a * rest;
        }
        while coeffs.len() > 1 && *coeffs.last().unwrap() == 0.0 {
            coeffs.pop();
        }
        coeffs
    }
}

/// A polynomial together with an axis-aligned box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyBox {
    pub poly: Polynomial,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl PolyBox {
    /// Rejects the zero polynomial and degenerate boxes. Constants are
    /// accepted and treated as degree one by the Remez bound.
    pub fn new(poly: Polynomial, lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != poly.dim || hi.len() != poly.dim {
            return Err(HoroError::DimensionMismatch { expected: poly.dim, got: lo.len().min(hi.len()) });
        }
        if poly.is_zero() {
            return Err(HoroError::InvalidArgument("zero polynomial".into()));
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(a.is_finite() && b.is_finite() && a < b)) {
            return Err(HoroError::InvalidArgument("box must be nondegenerate and finite".into()));
        }
        Ok(PolyBox { poly, lo, hi })
    }

    pub fn unit_cube(poly: Polynomial) -> Result<Self> {
        let d = poly.dim;
        Self::new(poly, vec![0.0; d], vec![1.0; d])
    }

    pub fn dim(&self) -> usize {
        self.poly.dim
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(a, b)| b - a).product()
    }

    /// Degree used in the Remez exponent.
    pub fn remez_degree(&self) -> u32 {
        self.poly.degree().max(1)
    }

    /// Upper bounds on `sup_B |∂_i f|`, one per axis.
    pub fn lipschitz(&self) -> Vec<f64> {
        let m: Vec<f64> = self.lo.iter().zip(&self.hi).map(|(a, b)| a.abs().max(b.abs())).collect();
        (0..self.dim())
            .map(|i| {
                self.poly
                    .terms
                    .iter()
                    .filter(|(e, _)| e[i] > 0)
                    .map(|(e, a)| {
                        let rest: f64 = e
                            .iter()
                            .enumerate()
                            .map(|(j, k)| if j == i { m[j].powi(*k as i32 - 1) } else { m[j].powi(*k as i32) })
                            .product();
                        a.abs() * e[i] as f64 * rest
                    })
                    .sum()
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SublevelMethod {
    /// Root isolation; univariate only.
    Exact1d,
    /// Cell-midpoint grid; the error bar counts cells within the Lipschitz band.
    Grid,
    /// Uniform sampling; the error bar is one binomial standard error.
    MonteCarlo { seed: u64 },
    /// Midpoint grid on all axes but one, exact roots along the axis of
    /// largest variation.
    Sliced,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

/// `|{x in B : |f(x)| < eps}|`.
pub fn sublevel_measure(pb: &PolyBox, eps: f64, method: SublevelMethod, resolution: usize) -> Result<Estimate> {
    Ok(sublevel_profile(pb, &[eps], method, resolution)?[0])
}

/// Sublevel measures for several thresholds, sharing function evaluations.
pub fn sublevel_profile(pb: &PolyBox, eps: &[f64], method: SublevelMethod, resolution: usize) -> Result<Vec<Estimate>> {
    if eps.iter().any(|e| !(*e > 0.0) || !e.is_finite()) {
        return Err(HoroError::InvalidArgument("eps must be positive and finite".into()));
    }
    if !matches!(method, SublevelMethod::Exact1d) && resolution < MIN_RESOLUTION {
        return Err(HoroError::Resolution(format!("resolution {resolution} < {MIN_RESOLUTION}")));
    }
    match method {
        SublevelMethod::Exact1d => {
            if pb.dim() != 1 {
                return Err(HoroError::MethodMismatch(format!("exact-1d needs a univariate polynomial, got {} variables", pb.dim())));
            }
            let coeffs = pb.poly.restrict(&[0.0], 0);
            Ok(eps.iter().map(|&e| exact_sublevel(&coeffs, pb.lo[0], pb.hi[0], e)).collect())
        }
        SublevelMethod::Grid => Ok(grid_sublevel(pb, eps, resolution)),
        SublevelMethod::MonteCarlo { seed } => Ok(mc_sublevel(pb, eps, resolution, seed)),
        SublevelMethod::Sliced => Ok(sliced_sublevel(pb, eps, resolution)),
    }
}

fn horner(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, a| acc * x + a)
}

fn derivative(coeffs: &[f64]) -> Vec<f64> {
    coeffs.iter().enumerate().skip(1).map(|(k, a)| k as f64 * a).collect()
}

/// Sign changes of `p` on `[a, b]`, located by recursion on critical points
/// and bisection on each monotone piece.
pub fn real_roots(coeffs: &[f64], a: f64, b: f64) -> Vec<f64> {
    let mut c = coeffs.to_vec();
    while c.len() > 1 && *c.last().unwrap() == 0.0 {
        c.pop();
    }
    if c.len() <= 1 {
        return Vec::new();
    }
    if c.len() == 2 {
        let r = -c[0] / c[1];
        return if (a..=b).contains(&r) { vec![r] } else { Vec::new() };
    }
    let mut knots = vec![a];
    knots.extend(real_roots(&derivative(&c), a, b));
    knots.push(b);
    let mut roots: Vec<f64> = Vec::new();
    for w in knots.windows(2) {
        let (mut lo, mut hi) = (w[0], w[1]);
        let (flo, fhi) = (horner(&c, lo), horner(&c, hi));
        if flo == 0.0 {
            roots.push(lo);
            continue;
        }
        if fhi == 0.0 {
            roots.push(hi);
            continue;
        }
        if flo.signum() == fhi.signum() {
            continue;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let fm = horner(&c, mid);
            if fm == 0.0 {
                lo = mid;
                hi = mid;
                break;
            }
            if fm.signum() == flo.signum() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        roots.push(0.5 * (lo + hi));
    }
    roots.sort_by(f64::total_cmp);
    roots.dedup();
    roots
}

fn exact_sublevel(coeffs: &[f64], a: f64, b: f64, eps: f64) -> Estimate {
    let mut knots = vec![a, b];
    for shift in [-eps, eps] {
        let mut c = coeffs.to_vec();
        c[0] += shift;
        knots.extend(real_roots(&c, a, b));
    }
    knots.sort_by(f64::total_cmp);
    knots.dedup();
    let value = knots
        .windows(2)
        .filter(|w| horner(coeffs, 0.5 * (w[0] + w[1])).abs() < eps)
        .map(|w| w[1] - w[0])
        .sum();
    Estimate { value, error: 4.0 * knots.len() as f64 * f64::EPSILON * (b - a).max(a.abs().max(b.abs())) }
}

fn per_axis(resolution: usize, dims: usize) -> usize {
    let mut k = (resolution as f64).powf(1.0 / dims as f64).floor() as usize;
    while k.pow(dims as u32) < resolution {
        k += 1;
    }
    k
}

/// Cell midpoints of a `k^|axes|` tensor grid on the given axes.
fn for_each_midpoint<F: FnMut(&[f64])>(pb: &PolyBox, axes: &[usize], k: usize, mut f: F) {
    let dims = axes.len();
    let mut idx = vec![0usize; dims];
    let mut x: Vec<f64> = pb.lo.clone();
    loop {
        for (j, &i) in axes.iter().enumerate() {
            x[i] = pb.lo[i] + (idx[j] as f64 + 0.5) * (pb.hi[i] - pb.lo[i]) / k as f64;
        }
        f(&x);
        let mut j = 0;
        loop {
            if j == dims {
                return;
            }
            idx[j] += 1;
            if idx[j] < k {
                break;
            }
            idx[j] = 0;
            j += 1;
        }
    }
}

fn grid_sublevel(pb: &PolyBox, eps: &[f64], resolution: usize) -> Vec<Estimate> {
    let m = pb.dim();
    let k = per_axis(resolution, m);
    let lip = pb.lipschitz();
    let band: f64 = lip.iter().zip(pb.lo.iter().zip(&pb.hi)).map(|(l, (a, b))| l * (b - a) / k as f64 * 0.5).sum();
    let mut inside = vec![0u64; eps.len()];
    let mut unsure = vec![0u64; eps.len()];
    let axes: Vec<usize> = (0..m).collect();
    for_each_midpoint(pb, &axes, k, |x| {
        let v = pb.poly.eval(x).abs();
        for (j, e) in eps.iter().enumerate() {
            if v < *e {
                inside[j] += 1;
            }
            if (v - e).abs() <= band {
                unsure[j] += 1;
            }
        }
    });
    let cell = pb.volume() / (k as f64).powi(m as i32);
    inside.iter().zip(&unsure).map(|(i, u)| Estimate { value: *i as f64 * cell, error: *u as f64 * cell }).collect()
}

fn mc_sublevel(pb: &PolyBox, eps: &[f64], samples: usize, seed: u64) -> Vec<Estimate> {
    let mut rng = stream(seed, 0);
    let mut hits = vec![0u64; eps.len()];
    let mut x = vec![0.0; pb.dim()];
    for _ in 0..samples {
        for (i, xi) in x.iter_mut().enumerate() {
            *xi = rng.gen_range(pb.lo[i]..pb.hi[i]);
        }
        let v = pb.poly.eval(&x).abs();
        for (j, e) in eps.iter().enumerate() {
            if v < *e {
                hits[j] += 1;
            }
        }
    }
    let vol = pb.volume();
    let n = samples as f64;
    hits.iter()
        .map(|h| {
            let p = *h as f64 / n;
            Estimate { value: p * vol, error: (p * (1.0 - p) / n).sqrt() * vol }
        })
        .collect()
}

fn sliced_pass(pb: &PolyBox, eps: &[f64], k: usize, last: usize) -> Vec<f64> {
    let axes: Vec<usize> = (0..pb.dim()).filter(|i| *i != last).collect();
    let mut total = vec![0.0; eps.len()];
    for_each_midpoint(pb, &axes, k, |x| {
        let coeffs = pb.poly.restrict(x, last);
        for (j, e) in eps.iter().enumerate() {
            total[j] += exact_sublevel(&coeffs, pb.lo[last], pb.hi[last], *e).value;
        }
    });
    let slab: f64 = axes.iter().map(|&i| (pb.hi[i] - pb.lo[i]) / k as f64).product();
    total.iter().map(|t| t * slab).collect()
}

fn sliced_sublevel(pb: &PolyBox, eps: &[f64], resolution: usize) -> Vec<Estimate> {
    let m = pb.dim();
    if m == 1 {
        let coeffs = pb.poly.restrict(&[0.0], 0);
        return eps.iter().map(|&e| exact_sublevel(&coeffs, pb.lo[0], pb.hi[0], e)).collect();
    }
    let lip = pb.lipschitz();
    let last = (0..m)
        .max_by(|&a, &b| (lip[a] * (pb.hi[a] - pb.lo[a])).total_cmp(&(lip[b] * (pb.hi[b] - pb.lo[b]))))
        .unwrap();
    let k = per_axis(resolution, m - 1);
    let fine = sliced_pass(pb, eps, k, last);
    let coarse = sliced_pass(pb, eps, (k / 2).max(1), last);
    fine.iter().zip(&coarse).map(|(f, c)| Estimate { value: *f, error: (f - c).abs() }).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RemezStatus {
    /// Measured value plus its error bar is below the bound computed from
    /// the padded sup.
    Pass,
    Inconclusive,
    /// Measured value minus its error bar exceeds the bound computed from
    /// the grid sup, which is an upper bound for the true right-hand side.
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemezEntry {
    pub eps: f64,
    pub measured: Estimate,
    /// `4 m (eps / sup)^{1/d} |B|` with the padded sup.
    pub bound: f64,
    /// Same with the grid sup.
    pub bound_nominal: f64,
    /// `bound_nominal / measured`; infinite when the sublevel set is empty.
    pub margin: f64,
    pub status: RemezStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemezReport {
    pub degree: u32,
    pub dim: usize,
    pub volume: f64,
    pub sup_grid: f64,
    pub sup_upper: f64,
    pub entries: Vec<RemezEntry>,
    pub pass: bool,
}

impl RemezReport {
    pub fn failures(&self) -> usize {
        self.entries.iter().filter(|e| e.status == RemezStatus::Fail).count()
    }
}

fn grid_nodes(pb: &PolyBox) -> usize {
    match pb.dim() {
        1 => 4097,
        2 => 257,
        _ => 41,
    }
}

/// Grid maximum of `|f|` on the box (endpoints included) and that maximum
/// padded by the Lipschitz bound over half a grid step.
pub fn sup_estimate(pb: &PolyBox) -> (f64, f64) {
    let m = pb.dim();
    let g = grid_nodes(pb);
    let steps: Vec<f64> = (0..m).map(|i| (pb.hi[i] - pb.lo[i]) / (g - 1) as f64).collect();
    let powers: Vec<Vec<Vec<f64>>> = (0..m)
        .map(|i| {
            let deg = pb.poly.degree() as i32;
            (0..g).map(|j| {
                let x = if j == g - 1 { pb.hi[i] } else { pb.lo[i] + j as f64 * steps[i] };
                (0..=deg).map(|p| x.powi(p)).collect()
            }).collect()
        })
        .collect();
    let terms: Vec<(&Vec<u32>, f64)> = pb.poly.terms.iter().map(|(e, a)| (e, *a)).collect();
    let mut best = 0.0_f64;
    let mut idx = vec![0usize; m];
    'outer: loop {
        let v: f64 = terms
            .iter()
            .map(|(e, a)| a * e.iter().enumerate().map(|(i, k)| powers[i][idx[i]][*k as usize]).product::<f64>())
            .sum();
        best = best.max(v.abs());
        let mut j = 0;
        loop {
            if j == m {
                break 'outer;
            }
            idx[j] += 1;
            if idx[j] < g {
                break;
            }
            idx[j] = 0;
            j += 1;
        }
    }
    let pad: f64 = pb.lipschitz().iter().zip(&steps).map(|(l, h)| l * h * 0.5).sum();
    (best, best + pad)
}

/// The Remez bound `4 m (eps / sup)^{1/d} |B|`.
pub fn remez_bound(dim: usize, degree: u32, volume: f64, eps: f64, sup: f64) -> f64 {
    4.0 * dim as f64 * (eps / sup).powf(1.0 / degree as f64) * volume
}

/// Compares measured sublevel sets against the Remez bound. Univariate
/// boxes are measured exactly, others with the sliced method at 4096 slices.
pub fn remez_check(pb: &PolyBox, eps_list: &[f64]) -> Result<RemezReport> {
    let method = if pb.dim() == 1 { SublevelMethod::Exact1d } else { SublevelMethod::Sliced };
    let measured = sublevel_profile(pb, eps_list, method, 4096)?;
    let (sup_grid, sup_upper) = sup_estimate(pb);
    let d = pb.remez_degree();
    let vol = pb.volume();
    let entries: Vec<RemezEntry> = eps_list
        .iter()
        .zip(measured)
        .map(|(&eps, m)| {
            let bound = remez_bound(pb.dim(), d, vol, eps, sup_upper);
            let bound_nominal = remez_bound(pb.dim(), d, vol, eps, sup_grid);
            let status = if m.value + m.error <= bound {
                RemezStatus::Pass
            } else if m.value - m.error > bound_nominal {
                RemezStatus::Fail
            } else {
                RemezStatus::Inconclusive
            };
            let margin = if m.value > 0.0 { bound_nominal / m.value } else { f64::INFINITY };
            RemezEntry { eps, measured: m, bound, bound_nominal, margin, status }
        })
        .collect();
    let pass = entries.iter().all(|e| e.status == RemezStatus::Pass);
    Ok(RemezReport { degree: d, dim: pb.dim(), volume: vol, sup_grid, sup_upper, entries, pass })
}

/// Seeded polynomial with random coefficients in `[-1, 1]` on a random
/// subset of monomials of degree at most `degree`, always including one
/// monomial of full degree, on a random box inside `[-1, 1]^dim`.
pub fn random_polybox(dim: usize, degree: u32, seed: u64, index: u64) -> Result<PolyBox> {
    let mut rng = stream(seed, index);
    let mut exps: Vec<Vec<u32>> = Vec::new();
    let mut cur = vec![0u32; dim];
    loop {
        if cur.iter().sum::<u32>() <= degree {
            exps.push(cur.clone());
        }
        let mut j = 0;
        loop {
            if j == dim {
                break;
            }
            cur[j] += 1;
            if cur[j] <= degree {
                break;
            }
            cur[j] = 0;
            j += 1;
        }
        if j == dim {
            break;
        }
    }
    let top: Vec<&Vec<u32>> = exps.iter().filter(|e| e.iter().sum::<u32>() == degree).collect();
    let lead = top[rng.gen_range(0..top.len())].clone();
    let mut terms = vec![(lead, if rng.gen_bool(0.5) { 1.0 } else { -1.0 } * rng.gen_range(0.2..1.0))];
    for e in &exps {
        if rng.gen_bool(0.6) {
            terms.push((e.clone(), rng.gen_range(-1.0..1.0)));
        }
    }
    let mut lo = Vec::with_capacity(dim);
    let mut hi = Vec::with_capacity(dim);
    for _ in 0..dim {
        let a: f64 = rng.gen_range(-1.0..0.8);
        let w: f64 = rng.gen_range(0.2..(1.0 - a).max(0.21));
        lo.push(a);
        hi.push((a + w).min(1.0));
    }
    let poly = Polynomial::new(dim, terms)?;
    if poly.degree() != degree {
        return random_polybox(dim, degree, seed, index.wrapping_add(1 << 32));
    }
    PolyBox::new(poly, lo, hi)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadOptions {
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions { rel_tol: 1e-6, max_intervals: 4000 }
    }
}

/// Real roots of `a x^2 + b x + c` inside `[lo, hi]`.
fn quadratic_roots(a: f64, b: f64, c: f64, lo: f64, hi: f64, out: &mut Vec<f64>) {
    let mut push = |r: f64| {
        if r.is_finite() && r > lo && r < hi {
            out.push(r);
        }
    };
    if a == 0.0 {
        if b != 0.0 {
            push(-c / b);
        }
        return;
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return;
    }
    let sign = if b >= 0.0 { 1.0 } else { -1.0 };
    let q = -0.5 * (b + sign * disc.sqrt());
    if q != 0.0 {
        push(q / a);
        push(c / q);
    } else {
        push(0.0);
    }
}

/// Integrand of the expansion integrals: `‖(Ad(a_t u_s) Z, floor)‖_max^{-δ}`.
struct Expansion<'a> {
    z: &'a RVector,
    floor: f64,
    delta: f64,
    et: f64,
    emt: f64,
    quad: QuadOptions,
}

impl Expansion<'_> {
    fn norm(&self, s: &[f64]) -> f64 {
        let xi = self.et * xi_parts(s, self.z.r1, &self.z.c, self.z.r2);
        let c = self.z.c.iter().zip(s).fold(0.0_f64, |m, (ci, si)| m.max((ci + self.z.r2 * si).abs()));
        xi.abs().max(c).max((self.emt * self.z.r2).abs()).max(self.floor)
    }

    /// Kinks of the max norm along the last free axis.
    fn breakpoints(&self, s: &[f64], axis: usize) -> Vec<f64> {
        let z = self.z;
        let a = self.et * z.r2 * 0.5;
        let b = self.et * z.c[axis];
        let mut cst = z.r1;
        let mut kmax = (self.emt * z.r2).abs().max(self.floor);
        for (i, (ci, si)) in z.c.iter().zip(s).enumerate() {
            if i != axis {
                cst += ci * si + z.r2 * si * si * 0.5;
                kmax = kmax.max((ci + z.r2 * si).abs());
            }
        }
        let c = self.et * cst;
        let (l1, l0) = (z.r2, z.c[axis]);
        let mut out = Vec::new();
        for k in [0.0, kmax, -kmax] {
            quadratic_roots(a, b, c - k, -CUBE_HALF, CUBE_HALF, &mut out);
        }
        for sign in [1.0, -1.0] {
            quadratic_roots(a, b - sign * l1, c - sign * l0, -CUBE_HALF, CUBE_HALF, &mut out);
            quadratic_roots(0.0, l1, l0 - sign * kmax, -CUBE_HALF, CUBE_HALF, &mut out);
        }
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }

    fn integrate_axis(&self, s: &mut Vec<f64>, axis: usize) -> Result<QuadResult> {
        let k = s.len();
        let inner = axis + 1 == k;
        let mut knots = vec![-CUBE_HALF];
        if inner {
            knots.extend(self.breakpoints(s, axis));
        } else if self.z.r2 != 0.0 {
            let vertex = -self.z.c[axis] / self.z.r2;
            if vertex > -CUBE_HALF && vertex < CUBE_HALF {
                knots.push(vertex);
            }
        }
        knots.push(CUBE_HALF);
        let rel = if inner { self.quad.rel_tol * 0.1 } else { self.quad.rel_tol };
        let mut total = QuadResult { value: 0.0, error: 0.0, evaluations: 0 };
        for w in knots.windows(2) {
            let r = if inner {
                integrate(
                    |x| {
                        s[axis] = x;
                        self.norm(s).powf(-self.delta)
                    },
                    w[0],
                    w[1],
                    0.0,
                    rel,
                    self.quad.max_intervals,
                )?
            } else {
                let mut failure = None;
                let mut inner_err = 0.0;
                let mut evals = 0;
                let mut r = integrate(
                    |x| {
                        let mut t = s.clone();
                        t[axis] = x;
                        match self.integrate_axis(&mut t, axis + 1) {
                            Ok(q) => {
                                inner_err = q.error.max(inner_err);
                                evals += q.evaluations;
                                q.value
                            }
                            Err(e) => {
                                failure.get_or_insert(e);
                                0.0
                            }
                        }
                    },
                    w[0],
                    w[1],
                    0.0,
                    rel,
                    self.quad.max_intervals,
                )?;
                if let Some(e) = failure {
                    return Err(e);
                }
                r.error += inner_err * (w[1] - w[0]);
                r.evaluations += evals;
                r
            };
            total.value += r.value;
            total.error += r.error;
            total.evaluations += r.evaluations;
        }
        Ok(total)
    }

    fn run(&self) -> Result<QuadResult> {
        let k = self.z.c.len();
        let mut s = vec![0.0; k];
        self.integrate_axis(&mut s, 0)
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.5 && delta < 1.0) {
        return Err(HoroError::InvalidArgument(format!("delta = {delta} outside (1/2, 1)")));
    }
    Ok(())
}

/// `∫_{B_1^U} ‖Ad(a_t u_s) Z‖^{-δ} ds` over `[-1/2, 1/2]^{n-2}` with the
/// max norm. Each innermost line is split at the kinks of the norm.
pub fn la_integral(z: &RVector, delta: f64, t: f64, n: usize, quad: QuadOptions) -> Result<QuadResult> {
    if z.n() != n {
        return Err(HoroError::DimensionMismatch { expected: n, got: z.n() });
    }
    if z.norm() == 0.0 || !z.norm().is_finite() {
        return Err(HoroError::InvalidArgument("Z must be nonzero and finite".into()));
    }
    check_delta(delta)?;
    if !(t >= 0.0) || t > 700.0 {
        return Err(HoroError::InvalidArgument(format!("t = {t} outside [0, 700]")));
    }
    Expansion { z, floor: 0.0, delta, et: t.exp(), emt: (-t).exp(), quad }.run()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegralFit {
    pub delta: f64,
    pub t_grid: Vec<f64>,
    pub values: Vec<f64>,
    pub fitted_slope: f64,
    pub intercept: f64,
    pub slope_ci: (f64, f64),
    /// The whole confidence interval lies above `δ − 1`.
    pub exceeds_bound: bool,
}

/// Least-squares slope of `log I(t)` against `t` with a 95% interval.
pub fn fit_expansion_exponent(z: &RVector, delta: f64, t_grid: &[f64]) -> Result<IntegralFit> {
    fit_expansion_exponent_with(z, delta, t_grid, QuadOptions::default())
}

pub fn fit_expansion_exponent_with(z: &RVector, delta: f64, t_grid: &[f64], quad: QuadOptions) -> Result<IntegralFit> {
    if t_grid.len() < 5 {
        return Err(HoroError::InvalidArgument(format!("t grid has {} points, need at least 5", t_grid.len())));
    }
    if t_grid.windows(2).any(|w| w[1] <= w[0]) || t_grid.iter().any(|t| !(1.0..=20.0).contains(t)) {
        return Err(HoroError::InvalidArgument("t grid must be strictly increasing inside [1, 20]".into()));
    }
    let values = t_grid
        .iter()
        .map(|&t| la_integral(z, delta, t, z.n(), quad).map(|r| r.value))
        .collect::<Result<Vec<f64>>>()?;
    let logs: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let fit = linear_fit(t_grid, &logs, 0.95).ok_or_else(|| HoroError::InvalidArgument("degenerate fit".into()))?;
    let slope_ci = if fit.slope_ci.0.is_nan() { (fit.slope, fit.slope) } else { fit.slope_ci };
    Ok(IntegralFit {
        delta,
        t_grid: t_grid.to_vec(),
        values,
        fitted_slope: fit.slope,
        intercept: fit.intercept,
        slope_ci,
        exceeds_bound: slope_ci.0 > delta - 1.0,
    })
}

/// Splits a vector of `R^{n+1}` into its complement part `Z` and the
/// coordinate fixed by `H`.
pub fn split_cone_vector(v: &[f64]) -> Result<(RVector, f64)> {
    let m = v.len();
    if m < 4 {
        return Err(HoroError::InvalidDimension(m.saturating_sub(1)));
    }
    let n = m - 1;
    Ok((RVector::new(v[0], v[1..n - 1].to_vec(), v[n]), v[n - 1]))
}

fn max_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// `Q0(v) = 2 v_0 v_n - (v_1^2 + ... + v_{n-1}^2)`.
pub fn q0(v: &[f64]) -> f64 {
    let n = v.len() - 1;
    2.0 * v[0] * v[n] - v[1..n].iter().map(|x| x * x).sum::<f64>()
}

/// `∫_{B_1^U} ‖a_t u_s v‖^{-δ} ds` for `v` in `R^{n+1}`.
pub fn cone_integral(v: &[f64], delta: f64, t: f64, quad: QuadOptions) -> Result<QuadResult> {
    let (z, floor) = split_cone_vector(v)?;
    check_delta(delta)?;
    if z.norm() == 0.0 && floor == 0.0 {
        return Err(HoroError::InvalidArgument("v must be nonzero".into()));
    }
    Expansion { z: &z, floor: floor.abs(), delta, et: t.exp(), emt: (-t).exp(), quad }.run()
}

/// Seeded unit (max norm) vectors on the null cone `G e_1`: first `e_1` and
/// `e_{n+1}`, then normalized `(1, y, |y|^2/2)` with log-uniform `|y|`.
pub fn cone_sample(n: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = stream(seed, 0);
    let mut fixed = Vec::new();
    for k in [0, n] {
        let mut e = vec![0.0; n + 1];
        e[k] = 1.0;
        fixed.push(e);
    }
    fixed.truncate(count);
    let extra = count - fixed.len();
    fixed.into_iter().chain((0..extra).map(|_| {
            let scale = 10f64.powf(rng.gen_range(-2.0..3.0));
            let y: Vec<f64> = (0..n - 1).map(|_| scale * rng.gen_range(-1.0..1.0)).collect();
            let mut v = vec![1.0];
            v.extend_from_slice(&y);
            v.push(0.5 * y.iter().map(|x| x * x).sum::<f64>());
            let m = max_norm(&v);
            v.iter().map(|x| x / m).collect()
        }))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MDeltaOptions {
    pub t_step: f64,
    pub t_max: f64,
    pub t_tol: f64,
    pub quad: QuadOptions,
}

impl Default for MDeltaOptions {
    fn default() -> Self {
        MDeltaOptions { t_step: 1.0, t_max: 50.0, t_tol: 1e-3, quad: QuadOptions::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MDelta {
    pub m: f64,
    pub delta: f64,
    pub n: usize,
    pub sigma: f64,
    /// `e^{-1} σ^{-2}`.
    pub threshold: f64,
    /// `max_v ‖v‖^δ ∫ ‖a_m u_s v‖^{-δ} ds` at the returned `m`.
    pub worst_ratio: f64,
    /// `min_v ‖v_1‖ / ‖v‖` over the sample.
    pub projection_constant: f64,
}

fn worst_ratio(sample: &[Vec<f64>], delta: f64, t: f64, quad: QuadOptions) -> Result<f64> {
    let mut worst = 0.0_f64;
    for v in sample {
        let i = cone_integral(v, delta, t, quad)?.value;
        worst = worst.max(i * max_norm(v).powf(delta));
    }
    Ok(worst)
}

/// Smallest `t` with `max_v ∫ ‖a_t u_s v‖^{-δ} ds ≤ e^{-1} σ^{-2} ‖v‖^{-δ}`,
/// located on a grid of step `t_step` and refined by bisection.
pub fn find_m_delta(delta: f64, n: usize, sigma: f64, sample: &[Vec<f64>]) -> Result<MDelta> {
    find_m_delta_with(delta, n, sigma, sample, MDeltaOptions::default())
}

pub fn find_m_delta_with(delta: f64, n: usize, sigma: f64, sample: &[Vec<f64>], opts: MDeltaOptions) -> Result<MDelta> {
    check_delta(delta)?;
    if sample.is_empty() {
        return Err(HoroError::EmptyInput("cone sample".into()));
    }
    if !(sigma > 0.0) {
        return Err(HoroError::InvalidArgument("sigma must be positive".into()));
    }
    let mut projection_constant = f64::INFINITY;
    for v in sample {
        if v.len() != n + 1 {
            return Err(HoroError::DimensionMismatch { expected: n + 1, got: v.len() });
        }
        let norm = max_norm(v);
        if norm == 0.0 || q0(v).abs() > 1e-9 * norm * norm {
            return Err(HoroError::InvalidArgument("sample vectors must be nonzero and Q0-null".into()));
        }
        let (z, _) = split_cone_vector(v)?;
        projection_constant = projection_constant.min(z.norm() / norm);
    }
    let threshold = (-1.0f64).exp() / (sigma * sigma);
    let mut prev = 0.0;
    let mut t = 0.0;
    loop {
        let r = worst_ratio(sample, delta, t, opts.quad)?;
        if r <= threshold {
            break;
        }
        prev = t;
        t += opts.t_step;
        if t > opts.t_max {
            return Err(HoroError::Horizon(opts.t_max));
        }
    }
    let (mut lo, mut hi) = (prev, t);
    if hi > 0.0 {
        while hi - lo > opts.t_tol {
            let mid = 0.5 * (lo + hi);
            if worst_ratio(sample, delta, mid, opts.quad)? <= threshold {
                hi = mid;
            } else {
                lo = mid;
            }
        }
    }
    let worst_ratio = worst_ratio(sample, delta, hi, opts.quad)?;
    Ok(MDelta { m: hi, delta, n, sigma, threshold, worst_ratio, projection_constant })
}

/// Axis-aligned sub-cube of `B_1^U`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubBall {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl SubBall {
    pub fn whole(k: usize) -> Self {
        SubBall { center: vec![0.0; k], radius: CUBE_HALF }
    }

    pub fn volume(&self) -> f64 {
        (2.0 * self.radius).powi(self.center.len() as i32)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FractionEstimate {
    pub fraction: f64,
    /// 99% Wilson interval.
    pub ci: (f64, f64),
    pub hits: u64,
    pub samples: u64,
}

/// Fraction of `s` in `B` with `‖a_t u_s v‖ ≤ e^t η^2 ‖v‖ ρ^2`.
pub fn return_representation_fraction(
    v: &[f64],
    t: f64,
    eta: f64,
    rho: f64,
    ball: &SubBall,
    samples: u64,
    seed: u64,
) -> Result<FractionEstimate> {
    let (z, floor) = split_cone_vector(v)?;
    if ball.center.len() != z.c.len() {
        return Err(HoroError::DimensionMismatch { expected: z.c.len(), got: ball.center.len() });
    }
    if ball.center.iter().any(|c| c.abs() + ball.radius > CUBE_HALF + 1e-12) || !(ball.radius > 0.0) {
        return Err(HoroError::InvalidArgument("ball must lie inside the unit cube of U".into()));
    }
    if !(eta > 0.0) || ball.volume() < eta {
        return Err(HoroError::InvalidArgument(format!("|B| = {} below eta = {eta}", ball.volume())));
    }
    if !(rho > 0.0 && rho < 1.0) {
        return Err(HoroError::InvalidArgument(format!("rho = {rho} outside (0, 1)")));
    }
    if samples == 0 {
        return Err(HoroError::EmptyInput("samples".into()));
    }
    let integrand = Expansion { z: &z, floor: floor.abs(), delta: 0.75, et: t.exp(), emt: (-t).exp(), quad: QuadOptions::default() };
    let cut = t.exp() * eta * eta * max_norm(v) * rho * rho;
    let mut rng = stream(seed, 0);
    let mut s = vec![0.0; ball.center.len()];
    let mut hits = 0u64;
    for _ in 0..samples {
        for (si, ci) in s.iter_mut().zip(&ball.center) {
            *si = ci + rng.gen_range(-ball.radius..ball.radius);
        }
        if integrand.norm(&s) <= cut {
            hits += 1;
        }
    }
    Ok(FractionEstimate {
        fraction: hits as f64 / samples as f64,
        ci: wilson_interval(hits, samples, 0.99),
        hits,
        samples,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnPoint {
    pub t: f64,
    pub eta: f64,
    pub rho: f64,
    pub estimate: FractionEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnSweep {
    /// `max fraction / ρ` over the sweep.
    pub k_hat: f64,
    pub points: Vec<ReturnPoint>,
}

/// Sweeps `(v, t, η, ρ)` over the whole cube (η ≤ 1) and fits
/// `K = max fraction / ρ`.
pub fn return_representation_sweep(
    vs: &[Vec<f64>],
    ts: &[f64],
    etas: &[f64],
    rhos: &[f64],
    samples: u64,
    seed: u64,
) -> Result<ReturnSweep> {
    let mut points = Vec::new();
    let mut k_hat = 0.0_f64;
    for (iv, v) in vs.iter().enumerate() {
        let ball = SubBall::whole(v.len().saturating_sub(3));
        for &t in ts {
            for &eta in etas {
                for &rho in rhos {
                    let estimate = return_representation_fraction(v, t, eta, rho, &ball, samples, seed ^ iv as u64)?;
                    k_hat = k_hat.max(estimate.fraction / rho);
                    points.push(ReturnPoint { t, eta, rho, estimate });
                }
            }
        }
    }
    Ok(ReturnSweep { k_hat, points })
}
