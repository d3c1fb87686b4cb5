//! Equidistribution of fractal pieces of expanding horospheres on the
//! Picard quotient.
//!
//! A base point `x` is pushed by `a_t u_s v_r` with `s` uniform on
//! `[-1/2, 1/2)` and `r` distributed by a Frostman measure `rho`; the
//! average of a test function over the pushed piece is compared with its
//! volume average.
//!
//! The auxiliary averaging over a shrinking parameter and the Cauchy–Schwarz
//! steps of the decay argument are not exposed; only their consequence, the
//! exponential decay of the error, is measured by [`decay_fit`].

use std::sync::OnceLock;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bianchi_model::{a_mat, random_su2, reduce, u_mat, v_mat, CosetPoint, HalfSpacePoint, LatticeBall, Mat2};
use crate::error::{HoroError, Result};
use crate::fractal::{FractalMeasure, MeasureKind};
use crate::quadrature::{integrate, integrate_2d};
use crate::rng::stream;
use crate::stats::{linear_fit, mean_stderr, pairwise_sum};

/// Base points of Birkhoff averages must have `inj_proxy` at least this.
pub const THICK_ETA: f64 = 0.25;
pub const MIN_FIT_POINTS: usize = 5;
/// Largest radius accepted for a point bump.
pub const MAX_BUMP_RADIUS: f64 = 0.5;

const WINDOW_TOL: f64 = 1e-12;

/// Digit-restricted Frostman measure, with its dyadic certificate checked.
pub fn make_digit_measure(base: u32, allowed: &[u32], depth: u32) -> Result<FractalMeasure> {
    let m = FractalMeasure::digit(base, allowed, depth)?;
    let mass = m.total_mass();
    if (mass - 1.0).abs() > 1e-12 {
        return Err(HoroError::Normalization(format!("digit measure has mass {mass}")));
    }
    let c = m.certified.c;
    if !c.is_finite() || c <= 0.0 {
        return Err(HoroError::Normalization(format!("certificate constant {c}")));
    }
    Ok(m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discretization {
    pub b: f64,
    pub cells: usize,
    /// `1/b` was not an integer and was rounded.
    pub rounded: bool,
    /// `c_k = rho([k b, (k+1) b))`, the last cell closed.
    pub weights: Vec<f64>,
    pub max_weight: f64,
    pub delta: f64,
    /// Constant transported from the dyadic certificate: `2^{1+delta} C`.
    pub transported_c: f64,
    /// Smallest constant actually needed on the cells.
    pub cell_c: f64,
    /// `b` is at or above the scale down to which `rho` is certified, so
    /// `max_weight <= transported_c * b^delta` is guaranteed.
    pub certified: bool,
}

pub fn discretize(rho: &FractalMeasure, b: f64) -> Result<Discretization> {
    if !(b > 0.0 && b <= 1.0) {
        return Err(HoroError::InvalidArgument(format!("cell size {b} outside (0, 1]")));
    }
    let exact = 1.0 / b;
    let cells = exact.round().max(1.0) as usize;
    let rounded = (exact - cells as f64).abs() > 1e-9 * exact;
    if cells > 1 << 24 {
        return Err(HoroError::InvalidArgument(format!("{cells} cells")));
    }
    let b = 1.0 / cells as f64;
    let mut weights = Vec::with_capacity(cells);
    let mut prev = rho.cdf(0.0, false);
    for k in 0..cells {
        let cur = if k + 1 == cells { rho.cdf(1.0, true) } else { rho.cdf((k + 1) as f64 * b, false) };
        weights.push((cur - prev).max(0.0));
        prev = cur;
    }
    let total = pairwise_sum(&weights);
    if (total - 1.0).abs() > 1e-12 {
        return Err(HoroError::Normalization(format!("cell weights sum to {total}")));
    }
    let delta = rho.delta();
    let max_weight = weights.iter().copied().fold(0.0, f64::max);
    Ok(Discretization {
        b,
        cells,
        rounded,
        max_weight,
        delta,
        transported_c: 2f64.powf(1.0 + delta) * rho.certified.c,
        cell_c: max_weight / b.powf(delta),
        certified: b >= rho.certified.min_length * (1.0 - 1e-12),
        weights,
    })
}

/// `exp(1 - 1/(1 - u^2))` on `|u| < 1`, zero outside; equals 1 at the origin.
pub fn bump(u: f64) -> f64 {
    let q = 1.0 - u * u;
    if q <= 0.0 {
        0.0
    } else {
        (1.0 - 1.0 / q).exp()
    }
}

fn bump_lipschitz() -> f64 {
    static L: OnceLock<f64> = OnceLock::new();
    *L.get_or_init(|| {
        (1..100_000)
            .map(|i| {
                let u = i as f64 / 100_000.0;
                let q = 1.0 - u * u;
                bump(u) * 2.0 * u / (q * q)
            })
            .fold(0.0, f64::max)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TestKind {
    Constant(f64),
    /// `bump((ln t - center) / width)` in the height of the reduced point.
    HeightBump { center: f64, width: f64 },
    /// `bump(d(p, Gamma c) / radius)`.
    PointBump { center: HalfSpacePoint, radius: f64 },
    /// `inner - mean`.
    Centered { inner: Box<TestKind>, mean: f64 },
}

/// A K-invariant function on the quotient, evaluated on reduced points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    pub kind: TestKind,
    /// Lattice images of a point bump's center near the fundamental domain.
    #[serde(skip)]
    images: Vec<HalfSpacePoint>,
}

impl TestFunction {
    pub fn constant(c: f64) -> Self {
        TestFunction { kind: TestKind::Constant(c), images: Vec::new() }
    }

    pub fn height_bump(center: f64, width: f64) -> Result<Self> {
        if !(width > 0.0) || !center.is_finite() {
            return Err(HoroError::InvalidArgument(format!("height bump ({center}, {width})")));
        }
        Ok(TestFunction { kind: TestKind::HeightBump { center, width }, images: Vec::new() })
    }

    pub fn point_bump(center: &HalfSpacePoint, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius <= MAX_BUMP_RADIUS) {
            return Err(HoroError::InvalidArgument(format!("bump radius {radius} outside (0, {MAX_BUMP_RADIUS}]")));
        }
        let c = reduce(&center.section())?.point;
        let floor = std::f64::consts::FRAC_1_SQRT_2 * (-radius).exp();
        let mut images: Vec<HalfSpacePoint> = Vec::new();
        for m in LatticeBall::new(3)?.matrices() {
            let p = m.act(&c);
            if p.t < floor || p.z.norm() > 2.0 {
                continue;
            }
            if images.iter().all(|q| q.distance(&p) > 1e-9) {
                images.push(p);
            }
        }
        Ok(TestFunction { kind: TestKind::PointBump { center: c, radius }, images })
    }

    /// Subtracts the quadrature volume average.
    pub fn centered(self) -> Result<Self> {
        let mean = volume_average(&self)?.value;
        Ok(TestFunction { kind: TestKind::Centered { inner: Box::new(self.kind), mean }, images: self.images })
    }

    pub fn is_constant(&self) -> bool {
        match &self.kind {
            TestKind::Constant(_) => true,
            TestKind::Centered { inner, .. } => matches!(**inner, TestKind::Constant(_)),
            _ => false,
        }
    }

    /// Value at a point of the fundamental domain.
    pub fn eval(&self, p: &HalfSpacePoint) -> f64 {
        self.eval_kind(&self.kind, p)
    }

    fn eval_kind(&self, kind: &TestKind, p: &HalfSpacePoint) -> f64 {
        match kind {
            TestKind::Constant(c) => *c,
            TestKind::HeightBump { center, width } => bump((p.t.ln() - center) / width),
            TestKind::PointBump { radius, .. } => {
                let d = self.images.iter().map(|q| q.distance(p)).fold(f64::INFINITY, f64::min);
                bump(d / radius)
            }
            TestKind::Centered { inner, mean } => self.eval_kind(inner, p) - mean,
        }
    }

    /// `max(sup |f|, Lip(f))` for the hyperbolic metric.
    pub fn sobolev_proxy(&self) -> f64 {
        fn sup_lip(kind: &TestKind) -> (f64, f64) {
            match kind {
                TestKind::Constant(c) => (c.abs(), 0.0),
                TestKind::HeightBump { width, .. } => (1.0, bump_lipschitz() / width),
                TestKind::PointBump { radius, .. } => (1.0, bump_lipschitz() / radius),
                TestKind::Centered { inner, mean } => {
                    let (s, l) = sup_lip(inner);
                    (s + mean.abs(), l)
                }
            }
        }
        let (s, l) = sup_lip(&self.kind);
        s.max(l)
    }

    pub fn describe(&self) -> String {
        fn go(kind: &TestKind) -> String {
            match kind {
                TestKind::Constant(c) => format!("constant({c})"),
                TestKind::HeightBump { center, width } => format!("height_bump(ln t = {center}, width {width})"),
                TestKind::PointBump { center, radius } => {
                    format!("point_bump(z = {}, t = {}, radius {radius})", center.z, center.t)
                }
                TestKind::Centered { inner, mean } => format!("{} - {mean:e}", go(inner)),
            }
        }
        go(&self.kind)
    }
}

/// Hyperbolic volume of the Picard fundamental domain.
pub fn picard_volume() -> Result<f64> {
    Ok(integrate_2d(|x, y| 0.5 / (1.0 - x * x - y * y), (-0.5, 0.5), (0.0, 0.5), 1e-13, 1e-13, 4096)?.value)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VolumeAverage {
    pub value: f64,
    /// Quadrature error estimate, or the standard error for Monte Carlo.
    pub error: f64,
    pub volume: f64,
    pub samples: usize,
}

/// Average of `f` against `dx dy dt / t^3` over the Picard domain, by nested
/// quadrature in `(x, y, u = 1/t^2)`.
pub fn volume_average(f: &TestFunction) -> Result<VolumeAverage> {
    let mut evaluations = 0usize;
    let mut total = |weighted: bool| -> Result<(f64, f64)> {
        let mut inner_err = 0.0_f64;
        let mut failure = None;
        let r = integrate_2d(
            |x, y| {
                let top = 1.0 / (1.0 - x * x - y * y);
                let g = |u: f64| {
                    let w = if weighted {
                        f.eval(&HalfSpacePoint::new(Complex64::new(x, y), 1.0 / u.sqrt()))
                    } else {
                        1.0
                    };
                    0.5 * w
                };
                match integrate(g, 0.0, top, 1e-11, 1e-10, 2000) {
                    Ok(q) => {
                        evaluations += q.evaluations;
                        inner_err = inner_err.max(q.error);
                        q.value
                    }
                    Err(e) => {
                        failure.get_or_insert(e);
                        0.0
                    }
                }
            },
            (-0.5, 0.5),
            (0.0, 0.5),
            1e-10,
            1e-9,
            2000,
        )?;
        if let Some(e) = failure {
            return Err(e);
        }
        Ok((r.value, r.error + 0.5 * inner_err))
    };
    let (num, num_err) = total(true)?;
    let (vol, vol_err) = total(false)?;
    Ok(VolumeAverage {
        value: num / vol,
        error: (num_err + (num / vol).abs() * vol_err) / vol,
        volume: vol,
        samples: evaluations,
    })
}

/// A point of the Picard domain drawn from the normalized volume measure.
pub fn sample_domain_point<R: Rng>(rng: &mut R) -> HalfSpacePoint {
    loop {
        let x: f64 = rng.gen_range(-0.5..0.5);
        let y: f64 = rng.gen_range(0.0..0.5);
        let q = 1.0 - x * x - y * y;
        // marginal density of (x, y) is proportional to 1/(2q), at most 1
        if rng.gen::<f64>() * 2.0 * q <= 1.0 {
            let u: f64 = 1.0 - rng.gen::<f64>();
            return HalfSpacePoint::new(Complex64::new(x, y), q.sqrt() / u.sqrt());
        }
    }
}

/// Monte Carlo volume average with standard error.
pub fn volume_average_mc(f: &TestFunction, samples: usize, seed: u64) -> Result<VolumeAverage> {
    if samples < 2 {
        return Err(HoroError::InvalidArgument("need at least two samples".into()));
    }
    let mut rng = stream(seed, 0);
    let values: Vec<f64> = (0..samples).map(|_| f.eval(&sample_domain_point(&mut rng))).collect();
    let (value, error) = mean_stderr(&values);
    Ok(VolumeAverage { value, error, volume: picard_volume()?, samples })
}

/// Quadrature nodes and weights for `rho` at resolution `cell`: midpoints
/// for the uniform kind, barycenters of digit cells of length at most
/// `cell` (or the atoms themselves at full depth), and binned barycenters
/// for counting measures.
pub fn measure_nodes(rho: &FractalMeasure, cell: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(cell > 0.0 && cell <= 1.0) {
        return Err(HoroError::InvalidArgument(format!("node cell {cell} outside (0, 1]")));
    }
    let bins = (1.0 / cell).ceil();
    if bins > 4e7 {
        return Err(HoroError::InvalidArgument(format!("node cell {cell} too fine")));
    }
    match &rho.kind {
        MeasureKind::Uniform => {
            let n = bins as usize;
            let h = 1.0 / n as f64;
            Ok(((0..n).map(|i| (i as f64 + 0.5) * h).collect(), vec![h; n]))
        }
        MeasureKind::Digit { base, allowed } => {
            let b = *base as f64;
            let mut level = 0u32;
            while level < rho.depth && b.powi(-(level as i32)) > cell {
                level += 1;
            }
            let count = (allowed.len() as f64).powi(level as i32);
            if count > 4e7 {
                return Err(HoroError::InvalidArgument(format!("{count} digit cells")));
            }
            let mean_digit = allowed.iter().map(|d| *d as f64).sum::<f64>() / allowed.len() as f64;
            // barycenter of the tail measure inside a unit cell
            let tail = rho.depth - level;
            let offset = (1..=tail).map(|j| mean_digit * b.powi(-(j as i32))).sum::<f64>() + 0.5 * b.powi(-(tail as i32));
            let width = b.powi(-(level as i32));
            let mut nodes = Vec::with_capacity(count as usize);
            let mut stack = vec![(0.0_f64, 0u32)];
            while let Some((lo, l)) = stack.pop() {
                if l == level {
                    nodes.push(lo + offset * width);
                    continue;
                }
                let w = b.powi(-(l as i32 + 1));
                for &d in allowed.iter().rev() {
                    stack.push((lo + d as f64 * w, l + 1));
                }
            }
            let n = nodes.len();
            Ok((nodes, vec![1.0 / n as f64; n]))
        }
        MeasureKind::Counting { atoms, weights } => {
            let mut binned: Vec<(f64, f64)> = Vec::new();
            let mut current: Option<(i64, f64, f64)> = None;
            for (a, w) in atoms.iter().zip(weights) {
                let k = (a / cell).floor() as i64;
                match current {
                    Some((ck, mx, mw)) if ck == k => current = Some((ck, mx + a * w, mw + w)),
                    _ => {
                        if let Some((_, mx, mw)) = current.filter(|c| c.2 > 0.0) {
                            binned.push((mx / mw, mw));
                        }
                        current = Some((k, a * w, *w));
                    }
                }
            }
            if let Some((_, mx, mw)) = current.filter(|c| c.2 > 0.0) {
                binned.push((mx / mw, mw));
            }
            Ok(binned.into_iter().unzip())
        }
    }
}

/// Grid for one Birkhoff average.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AveragingGrid {
    pub s_samples: usize,
    /// Resolution of the nodes for `rho`.
    pub r_cell: f64,
}

impl AveragingGrid {
    /// Spacing `e^{-t} / per_height` in both directions, with at least
    /// `min_nodes` nodes along `s`.
    pub fn for_time(t: f64, per_height: f64, min_nodes: usize) -> Self {
        let spacing = (-t).exp() / per_height;
        let s_samples = ((1.0 / spacing).ceil() as usize).max(min_nodes);
        AveragingGrid { s_samples, r_cell: (1.0 / s_samples as f64).min(spacing) }
    }

    pub fn nodes(&self, rho: &FractalMeasure) -> Result<usize> {
        Ok(self.s_samples * measure_nodes(rho, self.r_cell)?.0.len())
    }
}

/// Default resolution: nodes per unit of `e^{-t}`.
pub const PER_HEIGHT: f64 = 4.0;
pub const MIN_NODES: usize = 64;

/// `∫∫ f(a_t u_s v_r x) ds drho(r)` with `s` on a midpoint grid of
/// `[-1/2, 1/2)`.
pub fn birkhoff_average(x: &CosetPoint, rho: &FractalMeasure, t: f64, f: &TestFunction, grid: AveragingGrid) -> Result<f64> {
    if x.inj_proxy < THICK_ETA {
        return Err(HoroError::InvalidArgument(format!(
            "base point injectivity proxy {} below {THICK_ETA}",
            x.inj_proxy
        )));
    }
    if grid.s_samples == 0 || !t.is_finite() {
        return Err(HoroError::InvalidArgument("empty s grid or non-finite t".into()));
    }
    let (rs, ws) = measure_nodes(rho, grid.r_cell)?;
    let at = a_mat(t);
    let n = grid.s_samples;
    let h = 1.0 / n as f64;
    let us: Vec<Mat2> = (0..n).map(|i| at.mul(&u_mat(-0.5 + (i as f64 + 0.5) * h))).collect();
    let mut num = Vec::with_capacity(rs.len());
    let mut den = Vec::with_capacity(rs.len());
    let mut row = vec![0.0; n];
    for (r, w) in rs.iter().zip(&ws) {
        let vr = v_mat(*r);
        for (slot, u) in row.iter_mut().zip(&us) {
            *slot = f.eval(&x.translate(&u.mul(&vr))?.point);
        }
        num.push(w * pairwise_sum(&row) * h);
        den.push(w * n as f64 * h);
    }
    Ok(pairwise_sum(&num) / pairwise_sum(&den))
}

/// `[|ln b|/4, |ln b|/2]`.
pub fn theorem_window(b: f64) -> (f64, f64) {
    let l = b.ln().abs();
    (l / 4.0, l / 2.0)
}

/// `count` equally spaced times spanning the window for `b`.
pub fn window_grid(b: f64, count: usize) -> Vec<f64> {
    let (lo, hi) = theorem_window(b);
    (0..count).map(|i| lo + (hi - lo) * i as f64 / (count.max(2) - 1) as f64).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AveragingReport {
    pub b: f64,
    pub t_grid: Vec<f64>,
    pub averages: Vec<f64>,
    pub volume_average: f64,
    pub errors: Vec<f64>,
    /// Errors at or below this are indistinguishable from quadrature noise.
    pub noise_floor: f64,
    /// Decay rate: minus the slope of `ln error` against `t`.
    pub fitted_kappa: Option<f64>,
    pub kappa_ci: Option<(f64, f64)>,
    pub fit_degenerate: bool,
    pub test_function: String,
    pub sobolev_proxy: f64,
}

impl AveragingReport {
    /// `kappa > 0` with the confidence interval excluding zero.
    pub fn decays(&self) -> bool {
        matches!((self.fitted_kappa, self.kappa_ci), (Some(k), Some((lo, _))) if k > 0.0 && lo > 0.0)
    }
}

pub fn decay_fit(
    x: &CosetPoint,
    rho: &FractalMeasure,
    f: &TestFunction,
    b: f64,
    t_grid: &[f64],
    per_height: f64,
) -> Result<AveragingReport> {
    if t_grid.len() < MIN_FIT_POINTS {
        return Err(HoroError::InvalidArgument(format!("need at least {MIN_FIT_POINTS} times")));
    }
    let (lo, hi) = theorem_window(b);
    if let Some(t) = t_grid.iter().find(|t| !(**t >= lo - WINDOW_TOL && **t <= hi + WINDOW_TOL)) {
        return Err(HoroError::InvalidArgument(format!("t = {t} outside the window [{lo}, {hi}] for b = {b}")));
    }
    if rho.certified.min_length > b * (1.0 + 1e-12) {
        return Err(HoroError::InvalidArgument(format!(
            "measure certified only down to {}, above b = {b}",
            rho.certified.min_length
        )));
    }
    let vol = volume_average(f)?;
    let averages = t_grid
        .iter()
        .map(|&t| birkhoff_average(x, rho, t, f, AveragingGrid::for_time(t, per_height, MIN_NODES)))
        .collect::<Result<Vec<f64>>>()?;
    let errors: Vec<f64> = averages.iter().map(|a| (a - vol.value).abs()).collect();
    let noise_floor = if f.is_constant() { 0.0 } else { 10.0 * vol.error + 1e-13 };
    let fit_degenerate = errors.iter().any(|e| *e <= noise_floor);
    let fit = if fit_degenerate {
        None
    } else {
        let logs: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
        linear_fit(t_grid, &logs, 0.95)
    };
    Ok(AveragingReport {
        b,
        t_grid: t_grid.to_vec(),
        averages,
        volume_average: vol.value,
        errors,
        noise_floor,
        fitted_kappa: fit.as_ref().map(|l| -l.slope),
        kappa_ci: fit.as_ref().map(|l| (-l.slope_ci.1, -l.slope_ci.0)),
        fit_degenerate,
        test_function: f.describe(),
        sobolev_proxy: f.sobolev_proxy(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub t_grid: Vec<f64>,
    pub correlations: Vec<f64>,
    pub stderrs: Vec<f64>,
    /// Times whose correlation exceeded three standard errors.
    pub used: Vec<bool>,
    pub kappa_x: Option<f64>,
    pub kappa_ci: Option<(f64, f64)>,
    /// Some times were dropped for Monte Carlo noise, or fewer than three remained.
    pub widened_ci: bool,
    pub samples: usize,
}

/// Monte Carlo estimate of `∫ f(a_t x) g(x) dm(x)` for mean-zero `f`, `g`.
pub fn correlation_decay_probe(
    f: &TestFunction,
    g: &TestFunction,
    t_grid: &[f64],
    samples: usize,
    seed: u64,
) -> Result<CorrelationReport> {
    for (name, h) in [("f", f), ("g", g)] {
        if h.is_constant() {
            return Err(HoroError::InvalidArgument(format!("{name} is constant, so it cannot be a nonzero mean-zero function")));
        }
        let m = volume_average(h)?.value;
        if m.abs() > 1e-6 * h.sobolev_proxy().max(1.0) {
            return Err(HoroError::InvalidArgument(format!("{name} has mean {m:e}, not zero")));
        }
    }
    if samples < 2 || t_grid.is_empty() {
        return Err(HoroError::InvalidArgument("need samples and times".into()));
    }
    let mut rng = stream(seed, 0);
    let frames: Vec<(Mat2, f64)> = (0..samples)
        .map(|_| {
            let p = sample_domain_point(&mut rng);
            let k = random_su2(&mut rng);
            (p.section().mul(&k), g.eval(&p))
        })
        .collect();
    let mut correlations = Vec::with_capacity(t_grid.len());
    let mut stderrs = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let back = a_mat(-t);
        let values = frames
            .iter()
            .map(|(m, gv)| Ok(f.eval(&reduce(&m.mul(&back))?.point) * gv))
            .collect::<Result<Vec<f64>>>()?;
        let (mean, se) = mean_stderr(&values);
        correlations.push(mean);
        stderrs.push(se);
    }
    let used: Vec<bool> = correlations.iter().zip(&stderrs).map(|(c, s)| c.abs() > 3.0 * s).collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) =
        t_grid.iter().zip(&correlations).zip(&used).filter(|(_, u)| **u).map(|((t, c), _)| (*t, c.abs().ln())).unzip();
    let fit = if xs.len() >= 3 { linear_fit(&xs, &ys, 0.95) } else { None };
    Ok(CorrelationReport {
        t_grid: t_grid.to_vec(),
        widened_ci: fit.is_none() || used.iter().any(|u| !u),
        kappa_x: fit.as_ref().map(|l| -l.slope),
        kappa_ci: fit.as_ref().map(|l| (-l.slope_ci.1, -l.slope_ci.0)),
        correlations,
        stderrs,
        used,
        samples,
    })
}

/// Error ratios `run / baseline` at matching times.
pub fn dimension_effect(run: &AveragingReport, baseline: &AveragingReport) -> Result<Vec<f64>> {
    if run.t_grid != baseline.t_grid {
        return Err(HoroError::InvalidArgument("reports use different time grids".into()));
    }
    Ok(run.errors.iter().zip(&baseline.errors).map(|(a, b)| a / b).collect())
}
