//! Probability measures on `[0, 1]` with a certified Frostman bound
//! `rho(J) <= C |J|^delta` on dyadic intervals.

use serde::{Deserialize, Serialize};

use crate::error::{HoroError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum MeasureKind {
    /// Uniform on depth-`depth` digit strings over `allowed`, atoms at cell midpoints.
    Digit { base: u32, allowed: Vec<u32> },
    /// Weighted atoms.
    Counting { atoms: Vec<f64>, weights: Vec<f64> },
    /// Lebesgue measure.
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrostmanBound {
    pub c: f64,
    pub delta: f64,
    /// Smallest dyadic length scanned.
    pub min_length: f64,
    /// Dyadic interval attaining `C`.
    pub witness: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FractalMeasure {
    pub kind: MeasureKind,
    pub depth: u32,
    pub certified: FrostmanBound,
    #[serde(skip)]
    prefix: Vec<f64>,
}

impl FractalMeasure {
    pub fn uniform() -> Self {
        let mut m = FractalMeasure {
            kind: MeasureKind::Uniform,
            depth: 0,
            certified: FrostmanBound { c: 1.0, delta: 1.0, min_length: 0.0, witness: (0.0, 1.0) },
            prefix: Vec::new(),
        };
        m.certified = m.scan(1.0, 2f64.powi(-20));
        m
    }

    /// Digit-restricted measure; certifies `delta = log|allowed| / log(base)`.
    pub fn digit(base: u32, allowed: &[u32], depth: u32) -> Result<Self> {
        if base < 2 {
            return Err(HoroError::InvalidArgument(format!("base {base} < 2")));
        }
        let mut allowed = allowed.to_vec();
        allowed.sort_unstable();
        allowed.dedup();
        if allowed.is_empty() || allowed.iter().any(|&d| d >= base) {
            return Err(HoroError::InvalidArgument(format!("allowed digits {allowed:?} not a nonempty subset of 0..{base}")));
        }
        if depth as f64 * (base as f64).ln() > 40.0 {
            return Err(HoroError::InvalidArgument(format!("depth {depth} too large for base {base}")));
        }
        let delta = (allowed.len() as f64).ln() / (base as f64).ln();
        let min_length = (base as f64).powi(-(depth as i32));
        let mut m = FractalMeasure {
            kind: MeasureKind::Digit { base, allowed },
            depth,
            certified: FrostmanBound { c: 1.0, delta, min_length, witness: (0.0, 1.0) },
            prefix: Vec::new(),
        };
        m.certified = m.scan(delta, min_length);
        Ok(m)
    }

    /// Normalized weighted atoms in `[0, 1]`, certified at `delta` down to `min_length`.
    pub fn counting(atoms: &[f64], weights: &[f64], delta: f64, min_length: f64) -> Result<Self> {
        if atoms.is_empty() || atoms.len() != weights.len() {
            return Err(HoroError::EmptyInput("atoms".into()));
        }
        if atoms.iter().any(|x| !(0.0..=1.0).contains(x)) || weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(HoroError::InvalidArgument("atoms must lie in [0, 1] with nonnegative weights".into()));
        }
        let mut pairs: Vec<(f64, f64)> = atoms.iter().copied().zip(weights.iter().copied()).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let total: f64 = pairs.iter().map(|p| p.1).sum();
        if total <= 0.0 {
            return Err(HoroError::Normalization("zero total weight".into()));
        }
        let atoms: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let weights: Vec<f64> = pairs.iter().map(|p| p.1 / total).collect();
        let mut prefix = Vec::with_capacity(weights.len() + 1);
        prefix.push(0.0);
        for w in &weights {
            prefix.push(prefix.last().unwrap() + w);
        }
        let mut m = FractalMeasure {
            kind: MeasureKind::Counting { atoms, weights },
            depth: 0,
            certified: FrostmanBound { c: 1.0, delta, min_length, witness: (0.0, 1.0) },
            prefix,
        };
        m.certified = m.scan(delta, min_length);
        Ok(m)
    }

    pub fn delta(&self) -> f64 {
        self.certified.delta
    }

    pub fn total_mass(&self) -> f64 {
        match &self.kind {
            MeasureKind::Counting { weights, .. } => weights.iter().sum(),
            _ => self.cdf(1.0, true),
        }
    }

    /// `rho([0, x))`, or `rho([0, x])` when `inclusive`.
    pub fn cdf(&self, x: f64, inclusive: bool) -> f64 {
        match &self.kind {
            MeasureKind::Uniform => x.clamp(0.0, 1.0),
            MeasureKind::Counting { atoms, .. } => {
                let k = if inclusive { atoms.partition_point(|a| *a <= x) } else { atoms.partition_point(|a| *a < x) };
                if k == atoms.len() {
                    1.0
                } else {
                    self.prefix[k]
                }
            }
            MeasureKind::Digit { base, allowed } => digit_cdf(*base, allowed, self.depth, x, inclusive),
        }
    }

    /// Mass of the closed interval `[lo, hi]`.
    pub fn mass(&self, lo: f64, hi: f64) -> f64 {
        if hi < lo {
            return 0.0;
        }
        (self.cdf(hi, true) - self.cdf(lo, false)).max(0.0)
    }

    /// Atoms and weights; `None` for the uniform kind.
    pub fn atoms(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        match &self.kind {
            MeasureKind::Uniform => None,
            MeasureKind::Counting { atoms, weights } => Some((atoms.clone(), weights.clone())),
            MeasureKind::Digit { base, allowed } => {
                let width = (*base as f64).powi(-(self.depth as i32));
                let count = allowed.len().pow(self.depth);
                let w = 1.0 / count as f64;
                let mut atoms = Vec::with_capacity(count);
                let mut stack = vec![(0.0_f64, 0u32)];
                while let Some((lo, level)) = stack.pop() {
                    if level == self.depth {
                        atoms.push(lo + 0.5 * width);
                        continue;
                    }
                    let cell = (*base as f64).powi(-(level as i32 + 1));
                    for &d in allowed.iter().rev() {
                        stack.push((lo + d as f64 * cell, level + 1));
                    }
                }
                Some((atoms, vec![w; count]))
            }
        }
    }

    /// Smallest `C` with `rho(J) <= C |J|^delta` over closed dyadic `J` of
    /// length at least `min_length`.
    pub fn scan(&self, delta: f64, min_length: f64) -> FrostmanBound {
        self.scan_with(|len| len.powf(delta), delta, min_length)
    }

    /// Dyadic scan against an arbitrary envelope `bound(|J|)`.
    pub fn scan_with<B: Fn(f64) -> f64>(&self, bound: B, delta: f64, min_length: f64) -> FrostmanBound {
        let mut best = (0.0_f64, (0.0, 1.0));
        let mut len = 1.0_f64;
        let mut level = 0u32;
        while len >= min_length * (1.0 - 1e-12) && level <= 40 {
            let env = bound(len);
            match &self.kind {
                MeasureKind::Counting { atoms, .. } => {
                    let mut last = None;
                    for a in atoms {
                        let k = ((a / len).floor() as i64).min((1i64 << level) - 1);
                        // an atom on a cell boundary also belongs to the left cell
                        for kk in [k - 1, k] {
                            let keep = kk == k || *a == k as f64 * len;
                            if !keep || kk < 0 || last.is_some_and(|l| kk <= l) {
                                continue;
                            }
                            let lo = kk as f64 * len;
                            let m = self.mass(lo, lo + len);
                            if m / env > best.0 {
                                best = (m / env, (lo, lo + len));
                            }
                            last = Some(kk);
                        }
                    }
                }
                _ => {
                    let cells = 1u64 << level;
                    let mut prev = self.cdf(0.0, false);
                    for k in 0..cells {
                        let lo = k as f64 * len;
                        let hi = lo + len;
                        let cur_lt = self.cdf(hi, false);
                        let m = (self.cdf(hi, true) - prev).max(0.0);
                        if m / env > best.0 {
                            best = (m / env, (lo, hi));
                        }
                        prev = cur_lt;
                    }
                }
            }
            len *= 0.5;
            level += 1;
        }
        FrostmanBound { c: best.0, delta, min_length, witness: best.1 }
    }
}

fn digit_cdf(base: u32, allowed: &[u32], depth: u32, x: f64, inclusive: bool) -> f64 {
    if x < 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let k = allowed.len() as f64;
    let mut mass = 0.0;
    let mut weight = 1.0;
    let mut lo = 0.0;
    let mut width = 1.0;
    for _ in 0..depth {
        width /= base as f64;
        let d = (((x - lo) / width).floor().max(0.0) as u32).min(base - 1);
        let below = allowed.partition_point(|&a| a < d) as f64;
        mass += weight * below / k;
        if allowed.binary_search(&d).is_err() {
            return mass;
        }
        weight /= k;
        lo += d as f64 * width;
    }
    let atom = lo + 0.5 * width;
    if x > atom || (inclusive && x == atom) {
        mass += weight;
    }
    mass
}
