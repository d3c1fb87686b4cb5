//! Coarse dimension, Riesz-type energies and localization on finite point
//! clouds, all in the max norm.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{HoroError, Result};
use crate::stats::pairwise_sum;

/// Below this size neighbour counts are computed by brute force.
pub const BRUTE_FORCE_LIMIT: usize = 2000;

/// Relative slack used when comparing distances with scales, so that points
/// lying exactly on a sphere of radius `b` count as inside.
const SCALE_SLACK: f64 = 1e-12;

pub fn max_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    pub ambient_dim: usize,
    pub points: Vec<Vec<f64>>,
    pub center: Vec<f64>,
    pub b0: f64,
    pub b1: f64,
}

impl PointCloud {
    pub fn new(points: Vec<Vec<f64>>, center: Vec<f64>, b0: f64, b1: f64) -> Result<Self> {
        if points.is_empty() {
            return Err(HoroError::EmptyInput("point cloud".into()));
        }
        let m = center.len();
        if let Some(p) = points.iter().find(|p| p.len() != m) {
            return Err(HoroError::DimensionMismatch { expected: m, got: p.len() });
        }
        if !(b0 > 0.0 && b0 < b1) {
            return Err(HoroError::InvalidArgument(format!("need 0 < b0 < b1, got b0 = {b0}, b1 = {b1}")));
        }
        if points.iter().flatten().chain(&center).any(|x| !x.is_finite()) {
            return Err(HoroError::NonFinite("point coordinates".into()));
        }
        if let Some(i) = points.iter().position(|p| max_dist(p, &center) > b1 * (1.0 + SCALE_SLACK)) {
            return Err(HoroError::InvalidArgument(format!("point {i} lies outside the ball of radius b1 = {b1}")));
        }
        Ok(PointCloud { ambient_dim: m, points, center, b0, b1 })
    }

    /// Cloud inside the unit ball about the origin with `b0 = 1/#F`, `b1 = 1`.
    pub fn unit(points: Vec<Vec<f64>>) -> Result<Self> {
        let m = points.first().map(|p| p.len()).unwrap_or(0);
        let b0 = 1.0 / points.len().max(2) as f64;
        Self::new(points, vec![0.0; m], b0, 1.0)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn scaled(&self, lambda: f64) -> Result<Self> {
        let scale = |v: &Vec<f64>| v.iter().map(|x| x * lambda).collect::<Vec<_>>();
        Self::new(self.points.iter().map(scale).collect(), scale(&self.center), self.b0 * lambda, self.b1 * lambda)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("# ambient_dim={} b0={:e} b1={:e}\n", self.ambient_dim, self.b0, self.b1);
        for p in &self.points {
            let row: Vec<String> = p.iter().map(|x| format!("{x:e}")).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    /// Parses the CSV format written by [`PointCloud::to_csv`]; the centre is
    /// the origin.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| HoroError::EmptyInput("point cloud file".into()))?;
        let mut dim = None;
        let mut b0 = None;
        let mut b1 = None;
        for field in header.trim_start_matches('#').split_whitespace() {
            let (k, v) = field.split_once('=').ok_or_else(|| HoroError::InvalidArgument(format!("bad header field `{field}`")))?;
            let parse = |v: &str| v.parse::<f64>().map_err(|_| HoroError::InvalidArgument(format!("bad header value `{v}`")));
            match k {
                "ambient_dim" => dim = Some(parse(v)? as usize),
                "b0" => b0 = Some(parse(v)?),
                "b1" => b1 = Some(parse(v)?),
                _ => return Err(HoroError::InvalidArgument(format!("unknown header key `{k}`"))),
            }
        }
        let dim = dim.ok_or_else(|| HoroError::InvalidArgument("missing ambient_dim".into()))?;
        let mut points = Vec::new();
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let p: std::result::Result<Vec<f64>, _> = line.split(',').map(|s| s.trim().parse::<f64>()).collect();
            points.push(p.map_err(|_| HoroError::InvalidArgument(format!("bad row `{line}`")))?);
        }
        Self::new(
            points,
            vec![0.0; dim],
            b0.ok_or_else(|| HoroError::InvalidArgument("missing b0".into()))?,
            b1.ok_or_else(|| HoroError::InvalidArgument("missing b1".into()))?,
        )
    }
}

/// Dyadic scales `b1 * 2^-j` down to `b_min`.
pub fn dyadic_scales(b1: f64, b_min: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut b = b1;
    while b >= b_min * (1.0 - SCALE_SLACK) {
        out.push(b);
        b *= 0.5;
    }
    out
}

/// For every point `p`, the number of points `q` with `|p - q| <= b`.
pub fn neighbour_counts(points: &[Vec<f64>], b: f64) -> Vec<usize> {
    let radius = b * (1.0 + SCALE_SLACK);
    let n = points.len();
    let m = points.first().map(|p| p.len()).unwrap_or(0);
    if n < BRUTE_FORCE_LIMIT || m > 4 {
        return points
            .iter()
            .map(|p| points.iter().filter(|q| max_dist(p, q) <= radius).count())
            .collect();
    }
    let key = |p: &[f64]| -> Vec<i64> { p.iter().map(|x| (x / b).floor() as i64).collect() };
    let mut cells: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
    for (i, p) in points.iter().enumerate() {
        cells.entry(key(p)).or_default().push(i);
    }
    let offsets = neighbour_offsets(m);
    points
        .iter()
        .map(|p| {
            let base = key(p);
            let mut count = 0;
            for off in &offsets {
                let k: Vec<i64> = base.iter().zip(off).map(|(a, o)| a + o).collect();
                if let Some(list) = cells.get(&k) {
                    count += list.iter().filter(|&&j| max_dist(p, &points[j]) <= radius).count();
                }
            }
            count
        })
        .collect()
}

fn neighbour_offsets(m: usize) -> Vec<Vec<i64>> {
    let mut out = vec![vec![]];
    for _ in 0..m {
        out = out
            .into_iter()
            .flat_map(|v| {
                (-1..=1).map(move |d| {
                    let mut w = v.clone();
                    w.push(d);
                    w
                })
            })
            .collect();
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionCertificate {
    pub delta: f64,
    #[serde(rename = "C")]
    pub c: f64,
    pub scales_checked: Vec<f64>,
    pub worst_ratio: f64,
    pub worst_center: usize,
    pub worst_scale: f64,
    /// Constant valid for balls centred anywhere, `2^delta * C`.
    pub constant_all_centers: f64,
    pub valid: bool,
}

impl DimensionCertificate {
    /// Smallest `C` for which the same cloud would be certified.
    pub fn minimal_constant(&self) -> f64 {
        self.worst_ratio * self.c
    }
}

pub fn coarse_dim_check(f: &PointCloud, delta: f64, c: f64) -> Result<DimensionCertificate> {
    coarse_dim_check_down_to(f, delta, c, f.b0)
}

/// Coarse dimension check over dyadic scales in `[b_min, b1]`, centres in F.
pub fn coarse_dim_check_down_to(f: &PointCloud, delta: f64, c: f64, b_min: f64) -> Result<DimensionCertificate> {
    if f.is_empty() {
        return Err(HoroError::EmptyInput("point cloud".into()));
    }
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(HoroError::InvalidArgument(format!("delta = {delta} outside (0, 1]")));
    }
    if c < 1.0 {
        return Err(HoroError::InvalidArgument(format!("C = {c} < 1")));
    }
    let total = f.len() as f64;
    let scales = dyadic_scales(f.b1, b_min);
    let mut worst = (f64::NEG_INFINITY, 0, f.b1);
    for &b in &scales {
        let denom = c * (b / f.b1).powf(delta) * total;
        for (i, k) in neighbour_counts(&f.points, b).into_iter().enumerate() {
            let ratio = k as f64 / denom;
            if ratio > worst.0 {
                worst = (ratio, i, b);
            }
        }
    }
    Ok(DimensionCertificate {
        delta,
        c,
        scales_checked: scales,
        worst_ratio: worst.0,
        worst_center: worst.1,
        worst_scale: worst.2,
        constant_all_centers: 2f64.powf(delta) * c,
        valid: worst.0 <= 1.0,
    })
}

/// `sum_{v != w} |w - v|^-delta`, summed in sorted order.
pub fn delta_energy_sum(f: &PointCloud, w: &[f64], delta: f64) -> Result<f64> {
    let zeros: Vec<usize> = f.points.iter().enumerate().filter(|(_, p)| max_dist(p, w) == 0.0).map(|(i, _)| i).collect();
    match zeros.len() {
        0 => return Err(HoroError::InvalidArgument("query point is not in the cloud".into())),
        1 => {}
        _ => return Err(HoroError::DegenerateDistance { indices: zeros }),
    }
    let mut terms: Vec<f64> = f
        .points
        .iter()
        .map(|p| max_dist(p, w))
        .filter(|d| *d > 0.0)
        .map(|d| d.powf(-delta))
        .collect();
    terms.sort_by(f64::total_cmp);
    Ok(pairwise_sum(&terms))
}

/// Smallest `D` with `delta_energy_sum(F, w) <= D (#F)^{1+eps}` for every w.
pub fn energy_constant(f: &PointCloud, delta: f64, eps: f64) -> Result<f64> {
    let scale = (f.len() as f64).powf(1.0 + eps);
    let mut worst = 0.0_f64;
    for p in &f.points {
        worst = worst.max(delta_energy_sum(f, p, delta)? / scale);
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteMeasure {
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl DiscreteMeasure {
    pub fn uniform(points: Vec<Vec<f64>>) -> Self {
        let w = 1.0 / points.len() as f64;
        let weights = vec![w; points.len()];
        DiscreteMeasure { points, weights }
    }

    pub fn ball_mass(&self, z: &[f64], b: f64) -> f64 {
        let radius = b * (1.0 + SCALE_SLACK);
        let mut terms: Vec<f64> = self
            .points
            .iter()
            .zip(&self.weights)
            .filter(|(p, _)| max_dist(p, z) <= radius)
            .map(|(_, w)| *w)
            .collect();
        terms.sort_by(f64::total_cmp);
        pairwise_sum(&terms)
    }
}

/// `int max(|Z - Z'|, b0)^-delta dnu(Z')`.
pub fn truncated_energy(nu: &DiscreteMeasure, z: &[f64], delta: f64, b0: f64) -> f64 {
    let mut terms: Vec<f64> = nu
        .points
        .iter()
        .zip(&nu.weights)
        .map(|(p, w)| w * max_dist(p, z).max(b0).powf(-delta))
        .collect();
    terms.sort_by(f64::total_cmp);
    pairwise_sum(&terms)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrostmanCertificate {
    pub pass: bool,
    pub energy: f64,
    pub energy_precondition_met: bool,
    pub scales_checked: Vec<f64>,
    /// Smallest failing scale, if any.
    pub witness_scale: Option<f64>,
}

/// Checks `nu(B(Z, b)) <= R b^delta` for `b = b0` and dyadic `b = 2^-j >= b0`.
pub fn frostman_from_energy(nu: &DiscreteMeasure, z: &[f64], delta: f64, b0: f64, r: f64) -> FrostmanCertificate {
    let energy = truncated_energy(nu, z, delta, b0);
    let mut scales = dyadic_scales(1.0, b0);
    if scales.last().map_or(true, |&b| b > b0) {
        scales.push(b0);
    }
    scales.sort_by(f64::total_cmp);
    let witness_scale = scales.iter().copied().find(|&b| nu.ball_mass(z, b) > r * b.powf(delta));
    FrostmanCertificate {
        pass: witness_scale.is_none(),
        energy,
        energy_precondition_met: energy <= r,
        scales_checked: scales,
        witness_scale,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalizeOptions {
    /// Largest accepted constant for the localized certificate.
    pub max_constant: f64,
    /// Number of candidate centres examined per scale (evenly strided).
    pub max_centers: usize,
}

impl Default for LocalizeOptions {
    fn default() -> Self {
        LocalizeOptions { max_constant: 16.0, max_centers: 512 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Localization {
    pub w0_index: usize,
    pub w0: Vec<f64>,
    pub b1: f64,
    pub bracket: (f64, f64),
    pub fprime: PointCloud,
    pub fprime_indices: Vec<usize>,
    pub delta_prime: f64,
    pub c_prime: f64,
    pub certificate: DimensionCertificate,
    pub trace: Vec<String>,
}

/// Admissible range for the localization scale `b1`.
pub fn localize_bracket(count: usize, n: usize, delta: f64, eps: f64) -> (f64, f64) {
    let nf = n as f64;
    let total = count as f64;
    let exponent = (nf - delta + (2.0 + nf) * eps) / (nf - delta + (3.0 + nf) * eps);
    (total.powf(-exponent), total.powf(-eps))
}

pub fn localize(f: &PointCloud, delta: f64, eps: f64, d: f64) -> Result<Localization> {
    localize_with(f, delta, eps, d, LocalizeOptions::default())
}

/// Dyadic search for a ball `B(w0, b1)` whose slice of F has coarse
/// dimension `delta - (n + 3) eps` at all scales above `1/#F`. The largest
/// admissible `b1` wins; among centres the smallest constant wins.
pub fn localize_with(f: &PointCloud, delta: f64, eps: f64, d: f64, opts: LocalizeOptions) -> Result<Localization> {
    let n = f.ambient_dim;
    let total = f.len();
    if !(eps > 0.0 && eps < delta) {
        return Err(HoroError::InvalidArgument(format!("need 0 < eps < delta, got eps = {eps}")));
    }
    let bound = d * (total as f64).powf(1.0 + eps);
    for (i, p) in f.points.iter().enumerate() {
        let energy = delta_energy_sum(f, p, delta)?;
        if energy > bound {
            return Err(HoroError::EnergyPrecondition { index: i, energy, bound });
        }
    }
    if total < 2 {
        return Err(HoroError::LocalizationFailure {
            trace: "#F = 1: only the trivial localization F' = F with b1 = (#F)^-eps = 1 exists".into(),
        });
    }
    let delta_prime = delta - (n as f64 + 3.0) * eps;
    if delta_prime <= 0.0 {
        return Err(HoroError::InvalidArgument(format!("delta - (n + 3) eps = {delta_prime} is not positive")));
    }
    let (lo, hi) = localize_bracket(total, n, delta, eps);
    let b_min = 1.0 / total as f64;
    let stride = total.div_ceil(opts.max_centers.max(1));
    let centers: Vec<usize> = (0..total).step_by(stride).collect();

    let mut levels = dyadic_scales(hi, lo);
    if levels.last().map_or(true, |&b| b > lo * (1.0 + 1e-9)) {
        levels.push(lo);
    }
    let mut trace = Vec::new();
    for &b1 in &levels {
        let mut cache: HashMap<Vec<usize>, f64> = HashMap::new();
        let mut best: Option<(f64, usize, usize, Vec<usize>)> = None;
        for &ci in &centers {
            let w0 = &f.points[ci];
            let idx: Vec<usize> = (0..total)
                .filter(|&j| max_dist(&f.points[j], w0) <= b1 * (1.0 + SCALE_SLACK))
                .collect();
            if idx.len() < 2 {
                continue;
            }
            let c_prime = match cache.get(&idx) {
                Some(v) => *v,
                None => {
                    let sub = sub_cloud(f, &idx, w0, b1, b_min)?;
                    let v = coarse_dim_check_down_to(&sub, delta_prime, 1.0, b_min)?.worst_ratio.max(1.0);
                    cache.insert(idx.clone(), v);
                    v
                }
            };
            let better = match &best {
                None => true,
                Some((c, _, size, _)) => c_prime < *c || (c_prime == *c && idx.len() > *size),
            };
            if better {
                best = Some((c_prime, ci, idx.len(), idx));
            }
        }
        match best {
            Some((c_prime, ci, size, idx)) if c_prime <= opts.max_constant => {
                trace.push(format!("b1 = {b1:.6e}: accepted centre {ci}, #F' = {size}, C' = {c_prime:.4}"));
                // round up so the re-check is not lost to the last ulp
                let c_prime = c_prime * (1.0 + 8.0 * f64::EPSILON);
                let w0 = f.points[ci].clone();
                let fprime = sub_cloud(f, &idx, &w0, b1, b_min)?;
                let certificate = coarse_dim_check_down_to(&fprime, delta_prime, c_prime, b_min)?;
                debug_assert!(certificate.valid);
                return Ok(Localization {
                    w0_index: ci,
                    w0,
                    b1,
                    bracket: (lo, hi),
                    fprime,
                    fprime_indices: idx,
                    delta_prime,
                    c_prime,
                    certificate,
                    trace,
                });
            }
            Some((c_prime, ci, size, _)) => {
                trace.push(format!("b1 = {b1:.6e}: best centre {ci}, #F' = {size}, C' = {c_prime:.4} exceeds cap"));
            }
            None => {
                trace.push(format!("b1 = {b1:.6e}: every ball holds a single point"));
            }
        }
    }
    Err(HoroError::LocalizationFailure { trace: trace.join("; ") })
}

fn sub_cloud(f: &PointCloud, idx: &[usize], w0: &[f64], b1: f64, b_min: f64) -> Result<PointCloud> {
    let points = idx.iter().map(|&j| f.points[j].clone()).collect();
    PointCloud::new(points, w0.to_vec(), b_min.min(b1 * 0.5), b1)
}
