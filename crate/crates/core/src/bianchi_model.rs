//! The Picard model `X = PSL(2,Z[i]) \ PSL(2,C)`, the n = 3 instance.
//!
//! A point of X is a right coset `Γm`. Its upper half-space point is `m·j`,
//! and the left action `h·x` of G on `G/Γ` becomes `m ↦ m h⁻¹` here. Under
//! the map [`phi_so31`], `diag(e^{t/2}, e^{-t/2})`, `[[1,s],[0,1]]` and
//! `[[1,ir],[0,1]]` become `a_t`, `u_s` and `v_r` of the kernel, H becomes
//! `PSL(2,R)` and 𝔯 becomes `i·sl(2,R)`.

use std::collections::HashSet;
use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{HoroError, Result};
use crate::rng::stream;
use crate::so_kernel::{GroupElement, RVector};
use crate::stats::{mean_stderr, wilson_interval};

type C = Complex64;

pub const REDUCTION_STEP_LIMIT: usize = 10_000;
pub const DEFAULT_RADIUS: usize = 8;
pub const CERTIFY_RADIUS: usize = 4;
pub const MAX_RADIUS: usize = 12;
pub const HEIGHT_FLOOR: f64 = 2.0;
/// Upper limit for the sheet radius ε.
pub const EPS0: f64 = 1.0;
/// Working thick-part threshold on `inj_proxy`.
pub const ETA_X: f64 = 0.25;
pub const MIN_OPERATOR_SAMPLES: usize = 64;
const BOUNDARY_TOL: f64 = 1e-12;
const ON_ORBIT_TOL: f64 = 1e-8;
const DEDUPE_TOL: f64 = 1e-9;

fn c(re: f64, im: f64) -> C {
    C::new(re, im)
}

// ---------------------------------------------------------------------------
// Gaussian integers and lattice words

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GaussianInt {
    pub re: i64,
    pub im: i64,
}

impl GaussianInt {
    pub const ZERO: GaussianInt = GaussianInt { re: 0, im: 0 };
    pub const ONE: GaussianInt = GaussianInt { re: 1, im: 0 };
    pub const I: GaussianInt = GaussianInt { re: 0, im: 1 };

    pub fn new(re: i64, im: i64) -> Self {
        GaussianInt { re, im }
    }

    pub fn norm(self) -> i128 {
        let (a, b) = (self.re as i128, self.im as i128);
        a * a + b * b
    }

    pub fn is_zero(self) -> bool {
        self.re == 0 && self.im == 0
    }

    pub fn neg(self) -> Self {
        GaussianInt { re: -self.re, im: -self.im }
    }

    pub fn conj(self) -> Self {
        GaussianInt { re: self.re, im: -self.im }
    }

    pub fn checked_add(self, o: Self) -> Option<Self> {
        Some(GaussianInt { re: self.re.checked_add(o.re)?, im: self.im.checked_add(o.im)? })
    }

    pub fn checked_sub(self, o: Self) -> Option<Self> {
        Some(GaussianInt { re: self.re.checked_sub(o.re)?, im: self.im.checked_sub(o.im)? })
    }

    pub fn checked_mul(self, o: Self) -> Option<Self> {
        let (a, b, x, y) = (self.re as i128, self.im as i128, o.re as i128, o.im as i128);
        let re = i64::try_from(a * x - b * y).ok()?;
        let im = i64::try_from(a * y + b * x).ok()?;
        Some(GaussianInt { re, im })
    }

    pub fn to_complex(self) -> C {
        c(self.re as f64, self.im as f64)
    }

    fn is_positive(self) -> bool {
        self.re > 0 || (self.re == 0 && self.im > 0)
    }
}

/// Generators: `Tx: z ↦ z+1`, `Ty: z ↦ z+i`, `S: z ↦ -1/z` and `U: z ↦ -z`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Letter {
    Tx,
    TxInv,
    Ty,
    TyInv,
    S,
    U,
}

impl Letter {
    pub const ALL: [Letter; 6] = [Letter::Tx, Letter::TxInv, Letter::Ty, Letter::TyInv, Letter::S, Letter::U];

    pub fn inverse(self) -> Letter {
        match self {
            Letter::Tx => Letter::TxInv,
            Letter::TxInv => Letter::Tx,
            Letter::Ty => Letter::TyInv,
            Letter::TyInv => Letter::Ty,
            Letter::S => Letter::S,
            Letter::U => Letter::U,
        }
    }

    fn entries(self) -> [GaussianInt; 4] {
        let g = GaussianInt::new;
        match self {
            Letter::Tx => [g(1, 0), g(1, 0), g(0, 0), g(1, 0)],
            Letter::TxInv => [g(1, 0), g(-1, 0), g(0, 0), g(1, 0)],
            Letter::Ty => [g(1, 0), g(0, 1), g(0, 0), g(1, 0)],
            Letter::TyInv => [g(1, 0), g(0, -1), g(0, 0), g(1, 0)],
            Letter::S => [g(0, 0), g(-1, 0), g(1, 0), g(0, 0)],
            Letter::U => [g(0, 1), g(0, 0), g(0, 0), g(0, -1)],
        }
    }
}

/// Run-length encoded product of letters, read left to right.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Word(pub Vec<(Letter, u64)>);

impl Word {
    pub fn len(&self) -> u64 {
        self.0.iter().map(|(_, k)| k).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn push(&mut self, letter: Letter, count: u64) {
        if count == 0 {
            return;
        }
        match self.0.last_mut() {
            Some((l, k)) if *l == letter => *k += count,
            _ => self.0.push((letter, count)),
        }
    }

    pub fn concat(&self, other: &Word) -> Word {
        let mut w = self.clone();
        for &(l, k) in &other.0 {
            w.push(l, k);
        }
        w
    }

    pub fn inverse(&self) -> Word {
        let mut w = Word::default();
        for &(l, k) in self.0.iter().rev() {
            w.push(l.inverse(), k);
        }
        w
    }
}

/// An element of `PSL(2,Z[i])` with the word that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeElement {
    pub a: GaussianInt,
    pub b: GaussianInt,
    pub c: GaussianInt,
    pub d: GaussianInt,
    pub word: Word,
}

fn overflow() -> HoroError {
    HoroError::Overflow("Gaussian integer entry exceeds i64".into())
}

impl LatticeElement {
    pub fn identity() -> Self {
        LatticeElement {
            a: GaussianInt::ONE,
            b: GaussianInt::ZERO,
            c: GaussianInt::ZERO,
            d: GaussianInt::ONE,
            word: Word::default(),
        }
    }

    pub fn from_letter(l: Letter) -> Self {
        let [a, b, c, d] = l.entries();
        let mut word = Word::default();
        word.push(l, 1);
        LatticeElement { a, b, c, d, word }
    }

    /// Builds an element from entries; the determinant must be exactly 1.
    pub fn from_entries(a: GaussianInt, b: GaussianInt, c: GaussianInt, d: GaussianInt) -> Result<Self> {
        let e = LatticeElement { a, b, c, d, word: Word::default() };
        if e.det()? != GaussianInt::ONE {
            return Err(HoroError::InvalidArgument("lattice element must have determinant 1".into()));
        }
        Ok(e)
    }

    /// Translation `z ↦ z + n` with the word `Tx^{n.re} Ty^{n.im}`.
    pub fn translation(n: GaussianInt) -> Self {
        let mut word = Word::default();
        let (lx, ly) = (
            if n.re >= 0 { Letter::Tx } else { Letter::TxInv },
            if n.im >= 0 { Letter::Ty } else { Letter::TyInv },
        );
        word.push(lx, n.re.unsigned_abs());
        word.push(ly, n.im.unsigned_abs());
        LatticeElement { a: GaussianInt::ONE, b: n, c: GaussianInt::ZERO, d: GaussianInt::ONE, word }
    }

    pub fn det(&self) -> Result<GaussianInt> {
        let ad = self.a.checked_mul(self.d).ok_or_else(overflow)?;
        let bc = self.b.checked_mul(self.c).ok_or_else(overflow)?;
        ad.checked_sub(bc).ok_or_else(overflow)
    }

    pub fn mul(&self, o: &LatticeElement) -> Result<LatticeElement> {
        let m = |x: GaussianInt, y: GaussianInt| x.checked_mul(y).ok_or_else(overflow);
        let s = |x: GaussianInt, y: GaussianInt| x.checked_add(y).ok_or_else(overflow);
        Ok(LatticeElement {
            a: s(m(self.a, o.a)?, m(self.b, o.c)?)?,
            b: s(m(self.a, o.b)?, m(self.b, o.d)?)?,
            c: s(m(self.c, o.a)?, m(self.d, o.c)?)?,
            d: s(m(self.c, o.b)?, m(self.d, o.d)?)?,
            word: self.word.concat(&o.word),
        })
    }

    pub fn inverse(&self) -> LatticeElement {
        LatticeElement { a: self.d, b: self.b.neg(), c: self.c.neg(), d: self.a, word: self.word.inverse() }
    }

    /// Entries with the sign fixed so that the first nonzero one is positive.
    pub fn key(&self) -> [GaussianInt; 4] {
        let e = [self.a, self.b, self.c, self.d];
        let first = e.iter().find(|x| !x.is_zero()).copied().unwrap_or(GaussianInt::ONE);
        if first.is_positive() {
            e
        } else {
            e.map(GaussianInt::neg)
        }
    }

    pub fn is_identity(&self) -> bool {
        let k = self.key();
        k == [GaussianInt::ONE, GaussianInt::ZERO, GaussianInt::ZERO, GaussianInt::ONE]
    }

    pub fn matrix(&self) -> Mat2 {
        Mat2::new(self.a.to_complex(), self.b.to_complex(), self.c.to_complex(), self.d.to_complex())
    }
}

/// Words of length at most `radius`, deduplicated in PSL(2, Z[i]) and kept
/// with a shortest word.
#[derive(Debug, Clone)]
pub struct LatticeBall {
    pub radius: usize,
    pub elements: Vec<LatticeElement>,
    matrices: Vec<Mat2>,
}

impl LatticeBall {
    pub fn new(radius: usize) -> Result<Self> {
        if radius > MAX_RADIUS {
            return Err(HoroError::InvalidArgument(format!("word radius {radius} exceeds {MAX_RADIUS}")));
        }
        let mut seen: HashSet<[GaussianInt; 4]> = HashSet::new();
        let id = LatticeElement::identity();
        seen.insert(id.key());
        let mut elements = vec![id];
        let mut frontier = 0..1;
        for _ in 0..radius {
            let start = elements.len();
            for i in frontier.clone() {
                for l in Letter::ALL {
                    let e = elements[i].mul(&LatticeElement::from_letter(l))?;
                    if seen.insert(e.key()) {
                        elements.push(e);
                    }
                }
            }
            frontier = start..elements.len();
        }
        let matrices = elements.iter().map(|e| e.matrix()).collect();
        Ok(LatticeBall { radius, elements, matrices })
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn matrices(&self) -> &[Mat2] {
        &self.matrices
    }
}

// ---------------------------------------------------------------------------
// Complex 2×2 matrices

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mat2 {
    pub a: C,
    pub b: C,
    pub c: C,
    pub d: C,
}

impl Mat2 {
    pub fn new(a: C, b: C, c: C, d: C) -> Self {
        Mat2 { a, b, c, d }
    }

    pub fn real(a: f64, b: f64, cc: f64, d: f64) -> Self {
        Mat2::new(c(a, 0.0), c(b, 0.0), c(cc, 0.0), c(d, 0.0))
    }

    pub fn identity() -> Self {
        Mat2::real(1.0, 0.0, 0.0, 1.0)
    }

    pub fn mul(&self, o: &Mat2) -> Mat2 {
        Mat2 {
            a: self.a * o.a + self.b * o.c,
            b: self.a * o.b + self.b * o.d,
            c: self.c * o.a + self.d * o.c,
            d: self.c * o.b + self.d * o.d,
        }
    }

    pub fn det(&self) -> C {
        self.a * self.d - self.b * self.c
    }

    pub fn trace(&self) -> C {
        self.a + self.d
    }

    pub fn adjugate(&self) -> Mat2 {
        Mat2 { a: self.d, b: -self.b, c: -self.c, d: self.a }
    }

    pub fn inverse(&self) -> Mat2 {
        self.adjugate().scale(self.det().inv())
    }

    pub fn conj(&self) -> Mat2 {
        Mat2 { a: self.a.conj(), b: self.b.conj(), c: self.c.conj(), d: self.d.conj() }
    }

    pub fn adjoint(&self) -> Mat2 {
        Mat2 { a: self.a.conj(), b: self.c.conj(), c: self.b.conj(), d: self.d.conj() }
    }

    pub fn scale(&self, k: C) -> Mat2 {
        Mat2 { a: self.a * k, b: self.b * k, c: self.c * k, d: self.d * k }
    }

    pub fn add(&self, o: &Mat2) -> Mat2 {
        Mat2 { a: self.a + o.a, b: self.b + o.b, c: self.c + o.c, d: self.d + o.d }
    }

    pub fn sub(&self, o: &Mat2) -> Mat2 {
        Mat2 { a: self.a - o.a, b: self.b - o.b, c: self.c - o.c, d: self.d - o.d }
    }

    pub fn neg(&self) -> Mat2 {
        self.scale(c(-1.0, 0.0))
    }

    pub fn frobenius(&self) -> f64 {
        (self.a.norm_sqr() + self.b.norm_sqr() + self.c.norm_sqr() + self.d.norm_sqr()).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.a.norm().max(self.b.norm()).max(self.c.norm()).max(self.d.norm())
    }

    /// Distance in PSL: the smaller of `|A - B|` and `|A + B|` (Frobenius).
    pub fn projective_distance(&self, o: &Mat2) -> f64 {
        self.sub(o).frobenius().min(self.add(o).frobenius())
    }

    pub fn is_finite(&self) -> bool {
        [self.a, self.b, self.c, self.d].iter().all(|x| x.re.is_finite() && x.im.is_finite())
    }

    /// `self · j` in the upper half-space.
    pub fn point(&self) -> HalfSpacePoint {
        self.act(&HalfSpacePoint { z: C::new(0.0, 0.0), t: 1.0 })
    }

    pub fn act(&self, p: &HalfSpacePoint) -> HalfSpacePoint {
        let czd = self.c * p.z + self.d;
        let den = czd.norm_sqr() + self.c.norm_sqr() * p.t * p.t;
        let z = ((self.a * p.z + self.b) * czd.conj() + self.a * self.c.conj() * (p.t * p.t)) / den;
        HalfSpacePoint { z, t: p.t / den }
    }
}

/// `diag(e^{t/2}, e^{-t/2})`, the model of `a_t`.
pub fn a_mat(t: f64) -> Mat2 {
    Mat2::real((0.5 * t).exp(), 0.0, 0.0, (-0.5 * t).exp())
}

/// `[[1, s], [0, 1]]`, the model of `u_s`.
pub fn u_mat(s: f64) -> Mat2 {
    Mat2::real(1.0, s, 0.0, 1.0)
}

/// `[[1, ir], [0, 1]]`, the model of `v_r`.
pub fn v_mat(r: f64) -> Mat2 {
    Mat2::new(c(1.0, 0.0), c(0.0, r), c(0.0, 0.0), c(1.0, 0.0))
}

/// Logarithm in sl(2,C) of a determinant-one matrix away from `-I`.
pub fn sl2_log(m: &Mat2) -> Mat2 {
    let half = m.trace() * 0.5;
    let mu = half.acosh();
    let k = if mu.norm() < 1e-4 {
        let m2 = mu * mu;
        C::new(1.0, 0.0) - m2 / 6.0 + m2 * m2 * (7.0 / 360.0)
    } else {
        mu / mu.sinh()
    };
    m.sub(&Mat2::identity().scale(half)).scale(k)
}

/// `exp` on sl(2,C) for a traceless `x`.
pub fn sl2_exp(x: &Mat2) -> Mat2 {
    let mu = (-x.det()).sqrt();
    let k = if mu.norm() < 1e-4 {
        let m2 = mu * mu;
        C::new(1.0, 0.0) + m2 / 6.0 + m2 * m2 / 120.0
    } else {
        mu.sinh() / mu
    };
    Mat2::identity().scale(mu.cosh()).add(&x.scale(k))
}

/// `|log(±m)|_F` with the sign whose trace has nonnegative real part.
pub fn psl_log_norm(m: &Mat2) -> f64 {
    let m = if m.trace().re < 0.0 { m.neg() } else { *m };
    sl2_log(&m).frobenius()
}

/// A point `z + t j` of upper half-space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HalfSpacePoint {
    pub z: C,
    pub t: f64,
}

impl HalfSpacePoint {
    pub fn new(z: C, t: f64) -> Self {
        HalfSpacePoint { z, t }
    }

    /// `[[√t, z/√t], [0, 1/√t]]`, which maps `j` to this point.
    pub fn section(&self) -> Mat2 {
        let r = self.t.sqrt();
        Mat2::new(c(r, 0.0), self.z / r, c(0.0, 0.0), c(1.0 / r, 0.0))
    }

    pub fn in_picard_domain(&self, tol: f64) -> bool {
        self.z.re.abs() <= 0.5 + tol
            && self.z.im >= -tol
            && self.z.im <= 0.5 + tol
            && self.z.norm_sqr() + self.t * self.t >= 1.0 - tol
    }

    /// Hyperbolic distance.
    pub fn distance(&self, o: &HalfSpacePoint) -> f64 {
        let num = (self.z - o.z).norm_sqr() + (self.t - o.t).powi(2);
        (1.0 + num / (2.0 * self.t * o.t)).acosh()
    }
}

// ---------------------------------------------------------------------------
// SO(3,1) correspondence

fn hermitian_of(x: &[f64]) -> Mat2 {
    Mat2::new(c(2.0 * x[0], 0.0), c(x[1], x[2]), c(x[1], -x[2]), c(x[3], 0.0))
}

fn vector_of(h: &Mat2) -> [f64; 4] {
    [0.5 * h.a.re, h.b.re, h.b.im, h.d.re]
}

/// `Φ(g) x = φ⁻¹(g φ(x) g*)` with `φ(x) = [[2x₀, x₁+ix₂], [x₁-ix₂, x₃]]`,
/// whose determinant is the form `Q₀` for n = 3.
pub fn phi_so31(g: &Mat2) -> Result<GroupElement> {
    let mut m = DMatrix::zeros(4, 4);
    let gs = g.adjoint();
    for k in 0..4 {
        let mut e = [0.0; 4];
        e[k] = 1.0;
        let y = vector_of(&g.mul(&hermitian_of(&e)).mul(&gs));
        for i in 0..4 {
            m[(i, k)] = y[i];
        }
    }
    GroupElement::from_matrix(3, m)
}

/// The 𝔯-coordinates `(r1, c, r2)` of `w ∈ i·sl(2,R)`, read from
/// `dΦ(w) e₂` as in [`RVector::extract`].
pub fn rvector_of(w: &Mat2) -> RVector {
    let e2 = hermitian_of(&[0.0, 0.0, 1.0, 0.0]);
    let y = vector_of(&w.mul(&e2).add(&e2.mul(&w.adjoint())));
    RVector::new(y[0], vec![y[1]], y[3])
}

/// The inverse of [`rvector_of`].
pub fn algebra_of(v: &RVector) -> Result<Mat2> {
    if v.n() != 3 {
        return Err(HoroError::DimensionMismatch { expected: 3, got: v.n() });
    }
    // Images of i·E, i·F, i·Hd under rvector_of are linear in the entries.
    let basis = [
        Mat2::new(c(0.0, 0.0), c(0.0, 1.0), c(0.0, 0.0), c(0.0, 0.0)),
        Mat2::new(c(0.0, 0.0), c(0.0, 0.0), c(0.0, 1.0), c(0.0, 0.0)),
        Mat2::new(c(0.0, 1.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, -1.0)),
    ];
    let cols: Vec<[f64; 3]> = basis
        .iter()
        .map(|b| {
            let r = rvector_of(b);
            [r.r1, r.c[0], r.r2]
        })
        .collect();
    let m = nalgebra::Matrix3::from_fn(|i, j| cols[j][i]);
    let inv = m.try_inverse().ok_or_else(|| HoroError::InvalidArgument("singular basis".into()))?;
    let x = inv * nalgebra::Vector3::new(v.r1, v.c[0], v.r2);
    Ok(basis[0].scale(c(x[0], 0.0)).add(&basis[1].scale(c(x[1], 0.0))).add(&basis[2].scale(c(x[2], 0.0))))
}

/// Writes `q = h exp(w)` with `h ∈ PSL(2,R)` and `w ∈ i·sl(2,R)`, using
/// `q̄⁻¹ q = exp(2w)`. Returns `None` when `q̄⁻¹ q` is on the `-I` side.
pub fn split_transverse(q: &Mat2) -> Option<Mat2> {
    let a = q.conj().inverse().mul(q);
    if a.trace().re < 0.0 || !a.is_finite() {
        return None;
    }
    let w = sl2_log(&a).scale(c(0.5, 0.0));
    // Remove the rounding drift out of i·sl(2,R).
    let w = Mat2::new(c(0.0, w.a.im), c(0.0, w.b.im), c(0.0, w.c.im), c(0.0, -w.a.im));
    Some(w)
}

// ---------------------------------------------------------------------------
// Reduction and height

/// A coset `Γg` with its reduced representative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CosetPoint {
    /// Reduced representative `gamma · original`.
    pub g: Mat2,
    /// The matrix the point was built from.
    pub original: Mat2,
    pub reduced: bool,
    pub gamma: LatticeElement,
    pub point: HalfSpacePoint,
    pub height: f64,
    pub inj_proxy: f64,
}

impl CosetPoint {
    /// `h·x` for the left action on `G/Γ`.
    pub fn translate(&self, h: &Mat2) -> Result<CosetPoint> {
        reduce(&self.original.mul(&h.inverse()))
    }

    /// `a_t u_s · x`.
    pub fn push(&self, t: f64, s: f64) -> Result<CosetPoint> {
        self.translate(&a_mat(t).mul(&u_mat(s)))
    }

    pub fn same_coset(&self, o: &CosetPoint, tol: f64) -> bool {
        self.g.projective_distance(&o.g) <= tol
    }
}

fn format_matrix(m: &Mat2) -> String {
    format!("[[{}, {}], [{}, {}]]", m.a, m.b, m.c, m.d)
}

/// Reduces `g` into the Picard domain `|Re z| ≤ ½`, `0 ≤ Im z ≤ ½`,
/// `|z|² + t² ≥ 1` by integer translations, `z ↦ -z` and inversions.
pub fn reduce(g: &Mat2) -> Result<CosetPoint> {
    if !g.is_finite() {
        return Err(HoroError::NonFinite("matrix entry".into()));
    }
    let det = g.det();
    if (det - c(1.0, 0.0)).norm() > 1e-9 {
        return Err(HoroError::InvalidArgument(format!("determinant {det} is not 1 within 1e-9")));
    }
    let mut gamma = LatticeElement::identity();
    let mut cur = *g;
    let mut steps = 0;
    loop {
        let p = cur.point();
        let mut moved = false;
        let (x, y) = (p.z.re, p.z.im);
        // rounding error of the recomputed point grows with |gamma|^2 |g|^2
        let cond = (gamma.matrix().frobenius() * g.frobenius()).powi(2);
        let tol = BOUNDARY_TOL.max(4.0 * f64::EPSILON * cond);
        if x.abs() > 0.5 + tol || y.abs() > 0.5 + tol {
            if x.abs() > 2f64.powi(52) || y.abs() > 2f64.powi(52) {
                return Err(HoroError::Overflow(format!("translation of size {}", p.z.norm())));
            }
            let nx = if x.abs() > 0.5 + tol { x.round() as i64 } else { 0 };
            let ny = if y.abs() > 0.5 + tol { y.round() as i64 } else { 0 };
            gamma = LatticeElement::translation(GaussianInt::new(-nx, -ny)).mul(&gamma)?;
            moved = true;
        } else if y < -tol {
            gamma = LatticeElement::from_letter(Letter::U).mul(&gamma)?;
            moved = true;
        } else if p.z.norm_sqr() + p.t * p.t < 1.0 - tol {
            gamma = LatticeElement::from_letter(Letter::S).mul(&gamma)?;
            moved = true;
        }
        if !moved {
            let height = p.t.max(HEIGHT_FLOOR);
            return Ok(CosetPoint {
                g: cur,
                original: *g,
                reduced: true,
                gamma,
                point: p,
                height,
                inj_proxy: 1.0 / height,
            });
        }
        steps += 1;
        if steps >= REDUCTION_STEP_LIMIT {
            return Err(HoroError::ReductionStall { steps, matrix: format_matrix(g) });
        }
        cur = gamma.matrix().mul(g);
    }
}

/// Reduction of the point `p` with the frame of [`HalfSpacePoint::section`].
pub fn reduce_point(p: &HalfSpacePoint) -> Result<CosetPoint> {
    if !(p.t > 0.0) {
        return Err(HoroError::InvalidArgument("half-space point needs t > 0".into()));
    }
    reduce(&p.section())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeightReport {
    /// `max(t_reduced, 2)`.
    pub value: f64,
    /// Height of the reduced upper half-space point, before the clamp.
    pub raw: f64,
    /// Largest height over the ball applied to the original matrix.
    pub enumerated: f64,
    pub certified: bool,
    pub radius: usize,
}

/// `h(x)`: the largest half-space height over the Γ-orbit, clamped at 2.
/// Certified when the ball reproduces the reduction's height.
pub fn height(x: &CosetPoint, ball: &LatticeBall) -> HeightReport {
    let enumerated =
        ball.matrices().iter().map(|m| m.mul(&x.original).point().t).fold(f64::NEG_INFINITY, f64::max);
    let raw = x.point.t;
    let certified = ball.radius >= CERTIFY_RADIUS && (enumerated - raw).abs() <= 1e-9 * raw;
    HeightReport { value: x.height, raw, enumerated, certified, radius: ball.radius }
}

/// `min |log(g⁻¹ γ g)|` over the nontrivial elements of the ball, on the
/// reduced representative.
pub fn inj_direct(x: &CosetPoint, ball: &LatticeBall) -> f64 {
    let gi = x.g.inverse();
    ball.elements
        .iter()
        .zip(ball.matrices())
        .filter(|(e, _)| !e.is_identity())
        .map(|(_, m)| psl_log_norm(&gi.mul(m).mul(&x.g)))
        .fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjCalibration {
    /// Smallest σ with `σ⁻¹ inj ≤ h⁻¹ ≤ σ inj` on every point.
    pub sigma: f64,
    /// `(height, inj_direct)` per point.
    pub rows: Vec<(f64, f64)>,
}

impl InjCalibration {
    pub fn holds(&self, sigma: f64) -> bool {
        self.rows.iter().all(|&(h, inj)| {
            let r = (1.0 / h) / inj;
            r <= sigma * (1.0 + 1e-12) && 1.0 / r <= sigma * (1.0 + 1e-12)
        })
    }
}

pub fn calibrate_injectivity(points: &[CosetPoint], ball: &LatticeBall) -> Result<InjCalibration> {
    if points.is_empty() {
        return Err(HoroError::EmptyInput("calibration points".into()));
    }
    let rows: Vec<(f64, f64)> = points.iter().map(|x| (x.height, inj_direct(x, ball))).collect();
    let sigma = rows.iter().map(|&(h, inj)| {
        let r = (1.0 / h) / inj;
        r.max(1.0 / r)
    });
    Ok(InjCalibration { sigma: sigma.fold(1.0, f64::max), rows })
}

/// Log-continuity constant `σ_h`: the largest `max(r, 1/r)` with
/// `r = inj(kx)/inj(x)` over the given points and group elements `k`.
pub fn log_continuity(points: &[CosetPoint], ks: &[Mat2], ball: &LatticeBall) -> Result<f64> {
    if points.is_empty() || ks.is_empty() {
        return Err(HoroError::EmptyInput("points or perturbations".into()));
    }
    let mut sigma: f64 = 1.0;
    for x in points {
        let base = inj_direct(x, ball);
        for k in ks {
            let r = inj_direct(&x.translate(k)?, ball) / base;
            sigma = sigma.max(r).max(1.0 / r);
        }
    }
    Ok(sigma)
}

/// Haar-random element of SU(2).
pub fn random_su2<R: Rng>(rng: &mut R) -> Mat2 {
    let q: Vec<f64> = (0..4).map(|_| rng.sample::<f64, _>(rand_distr_normal())).collect();
    let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    let (al, be) = (c(q[0] / n, q[1] / n), c(q[2] / n, q[3] / n));
    Mat2::new(al, -be.conj(), be, al.conj())
}

fn rand_distr_normal() -> StandardNormal {
    StandardNormal
}

struct StandardNormal;

impl rand::distributions::Distribution<f64> for StandardNormal {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u1: f64 = 1.0 - rng.gen::<f64>();
        let u2: f64 = rng.gen();
        (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
    }
}

/// Random element `exp(X)` with the six real coordinates of `X` uniform in
/// `[-r, r]`.
pub fn random_group_element<R: Rng>(rng: &mut R, r: f64) -> Mat2 {
    let mut v = [0.0; 6];
    for x in v.iter_mut() {
        *x = rng.gen_range(-r..=r);
    }
    let x = Mat2::new(c(v[0], v[1]), c(v[2], v[3]), c(v[4], v[5]), c(-v[0], -v[1]));
    sl2_exp(&x)
}

/// Coset with upper half-space point drawn from the Picard domain, height
/// log-uniform up to `e^{log_height}` above the floor of the domain, and a
/// Haar-random frame.
pub fn random_coset<R: Rng>(rng: &mut R, log_height: f64) -> Result<CosetPoint> {
    let x: f64 = rng.gen_range(-0.5..0.5);
    let y: f64 = rng.gen_range(0.0..0.5);
    let floor = (1.0 - x * x - y * y).sqrt();
    let t = floor * (rng.gen::<f64>() * log_height).exp();
    let p = HalfSpacePoint::new(c(x, y), t);
    reduce(&p.section().mul(&random_su2(rng)))
}

/// `count` calibration points: half with heights up to `e^{0.7}` above the
/// domain floor, half reaching up to `e^{7}`.
pub fn calibration_corpus(count: usize, seed: u64) -> Result<Vec<CosetPoint>> {
    let mut rng = stream(seed, 0);
    (0..count).map(|i| random_coset(&mut rng, if i % 2 == 0 { 0.7 } else { 7.0 })).collect()
}

// ---------------------------------------------------------------------------
// Closed H-orbits and sheets

/// The closed orbit `Y = Γ \ Γ·base·H`, equal to `H·x_Y` with `x_Y = Γ·base`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosedOrbit {
    pub base: Mat2,
    pub label: String,
}

impl ClosedOrbit {
    /// The orbit of the identity coset, over the real vertical plane.
    pub fn standard() -> Self {
        ClosedOrbit { base: Mat2::identity(), label: "standard".into() }
    }

    /// Orbit of `Γ v_{1/level}`, over the vertical plane `Im z = 1/level`.
    pub fn vertical(level: u32) -> Result<Self> {
        if level == 0 {
            return Err(HoroError::InvalidArgument("level must be positive".into()));
        }
        Ok(ClosedOrbit { base: v_mat(1.0 / level as f64), label: format!("vertical-{level}") })
    }

    /// The point `h·x_Y` for real `h`.
    pub fn point(&self, h: &Mat2) -> Result<CosetPoint> {
        if h.max_abs() > 0.0 && [h.a, h.b, h.c, h.d].iter().any(|x| x.im.abs() > 1e-12 * h.max_abs()) {
            return Err(HoroError::InvalidArgument("orbit parameter must be a real matrix".into()));
        }
        reduce(&self.base.mul(&h.inverse()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SheetSet {
    pub base: CosetPoint,
    pub eps: f64,
    pub vectors: Vec<RVector>,
    pub search_radius: usize,
    /// A transverse vector of norm below `1e-8` was found.
    pub on_orbit: bool,
    /// Smallest transverse norm over all candidates, including zero.
    pub nearest: f64,
    /// No sheets although a candidate came within `2ε·inj`.
    pub suspicious_empty: bool,
}

struct TransverseScan {
    norms: Vec<(f64, RVector)>,
    nearest: f64,
}

fn transverse_scan(x: &CosetPoint, y: &ClosedOrbit, ball: &LatticeBall, keep_below: f64) -> TransverseScan {
    let base_inv = y.base.inverse();
    let mut reps = vec![x.g];
    if x.g.projective_distance(&x.original) > 1e-12 {
        reps.push(x.original);
    }
    // |q̄⁻¹q - I| ≥ |exp(2w) - I| and the max-norm of w is at most 2|w|_F.
    let filter = 4.0 * keep_below.max(1e-6) + 1e-6;
    let mut norms = Vec::new();
    let mut nearest = f64::INFINITY;
    for rep in &reps {
        for m in ball.matrices() {
            let q = base_inv.mul(m).mul(rep);
            let a = q.conj().inverse().mul(&q);
            let dev = a.sub(&Mat2::identity()).frobenius();
            if dev > 2.0 * filter && dev > 2.0 * nearest {
                continue;
            }
            let Some(w) = split_transverse(&q) else { continue };
            let rv = rvector_of(&w);
            let nrm = rv.norm();
            nearest = nearest.min(nrm);
            if nrm < keep_below {
                norms.push((nrm, rv));
            }
        }
    }
    TransverseScan { norms, nearest }
}

/// `I_Y(x, ε)`: transverse vectors `w` with `0 < |w| < ε·inj(x)` and
/// `exp(w)·x ∈ Y`, from the lattice words in `ball`.
pub fn enumerate_sheets(x: &CosetPoint, y: &ClosedOrbit, eps: f64, ball: &LatticeBall) -> Result<SheetSet> {
    if !(eps > 0.0 && eps <= EPS0) {
        return Err(HoroError::InvalidArgument(format!("eps = {eps} outside (0, {EPS0}]")));
    }
    let bound = eps * x.inj_proxy;
    let scan = transverse_scan(x, y, ball, bound);
    let mut on_orbit = false;
    let mut vectors: Vec<RVector> = Vec::new();
    let mut sorted = scan.norms;
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    for (nrm, rv) in sorted {
        if nrm < ON_ORBIT_TOL {
            on_orbit = true;
            continue;
        }
        if nrm <= DEDUPE_TOL {
            continue;
        }
        if vectors.iter().all(|v| v.sub(&rv).norm() > DEDUPE_TOL) {
            vectors.push(rv);
        }
    }
    let suspicious_empty = vectors.is_empty() && !on_orbit && scan.nearest < 2.0 * bound;
    Ok(SheetSet {
        base: x.clone(),
        eps,
        vectors,
        search_radius: ball.radius,
        on_orbit,
        nearest: scan.nearest,
        suspicious_empty,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MargulisValue {
    pub value: f64,
    pub sheets: usize,
    pub fallback: bool,
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.5 && delta < 1.0) {
        return Err(HoroError::InvalidArgument(format!("delta = {delta} outside (1/2, 1)")));
    }
    Ok(())
}

/// `Σ |w|^{-δ}` over the sheets, or `inj(x)^{-δ}` when there are none.
pub fn margulis_from_sheets(sheets: &[RVector], inj: f64, delta: f64) -> MargulisValue {
    if sheets.is_empty() {
        MargulisValue { value: inj.powf(-delta), sheets: 0, fallback: true }
    } else {
        let value = sheets.iter().map(|w| w.norm().powf(-delta)).sum();
        MargulisValue { value, sheets: sheets.len(), fallback: false }
    }
}

/// The Margulis function `f_Y(x)`; `x` must lie on `Y`.
pub fn margulis_f(x: &CosetPoint, y: &ClosedOrbit, delta: f64, eps: f64, ball: &LatticeBall) -> Result<MargulisValue> {
    check_delta(delta)?;
    let s = enumerate_sheets(x, y, eps, ball)?;
    if !s.on_orbit {
        return Err(HoroError::InvalidArgument(format!(
            "point is not on orbit {} (nearest transverse norm {:e})",
            y.label, s.nearest
        )));
    }
    Ok(margulis_from_sheets(&s.vectors, x.inj_proxy, delta))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatorEstimate {
    /// Monte Carlo estimate of `A(f_Y)(x)`.
    pub mean: f64,
    pub stderr: f64,
    pub f_x: f64,
    pub m: f64,
    pub samples: usize,
}

impl OperatorEstimate {
    pub fn ratio(&self) -> f64 {
        self.mean / self.f_x
    }
}

/// `A(f_Y)(x) = ∫_{B₁ᵁ} f_Y(a_m u_s x) ds` by Monte Carlo over `s`.
#[allow(clippy::too_many_arguments)]
pub fn margulis_operator(
    x: &CosetPoint,
    y: &ClosedOrbit,
    delta: f64,
    eps: f64,
    m: f64,
    samples: usize,
    ball: &LatticeBall,
    seed: u64,
) -> Result<OperatorEstimate> {
    if samples < MIN_OPERATOR_SAMPLES {
        return Err(HoroError::Resolution(format!("{samples} samples; at least {MIN_OPERATOR_SAMPLES} required")));
    }
    let f_x = margulis_f(x, y, delta, eps, ball)?.value;
    let mut rng = stream(seed, 0);
    let mut vals = Vec::with_capacity(samples);
    for _ in 0..samples {
        let s: f64 = rng.gen_range(-0.5..0.5);
        vals.push(margulis_f(&x.push(m, s)?, y, delta, eps, ball)?.value);
    }
    let (mean, stderr) = mean_stderr(&vals);
    Ok(OperatorEstimate { mean, stderr, f_x, m, samples })
}

/// Smallest `E ≥ 0` with `A f ≤ e⁻¹ f + E·vol` on every estimate.
pub fn fit_margulis_constant(rows: &[OperatorEstimate], vol_proxy: f64) -> f64 {
    rows.iter().map(|r| (r.mean - (-1.0f64).exp() * r.f_x).max(0.0) / vol_proxy).fold(0.0, f64::max)
}

pub fn margulis_violations(rows: &[OperatorEstimate], e: f64, vol_proxy: f64) -> usize {
    rows.iter().filter(|r| r.mean > (-1.0f64).exp() * r.f_x + e * vol_proxy + 1e-12).count()
}

/// `count` points `h·x_Y` on `Y` with `h = k_θ a_τ u_σ`, `τ ∈ [-τmax, τmax]`.
pub fn orbit_sample(y: &ClosedOrbit, count: usize, tau_max: f64, seed: u64) -> Result<Vec<CosetPoint>> {
    let mut rng = stream(seed, 0);
    (0..count)
        .map(|_| {
            let th: f64 = rng.gen_range(0.0..PI);
            let tau: f64 = rng.gen_range(-tau_max..=tau_max);
            let sg: f64 = rng.gen_range(-0.5..0.5);
            let k = Mat2::real(th.cos(), -th.sin(), th.sin(), th.cos());
            y.point(&k.mul(&a_mat(tau)).mul(&u_mat(sg)))
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Orbit volume

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitVolume {
    /// Hyperbolic area of the quotient plane, equal to the orbit's volume.
    pub area: f64,
    /// Translation length of the cusp at `∞`.
    pub width: f64,
    pub circles: usize,
}

/// Area of `(Γ ∩ base H base⁻¹) \ plane` from the Ford domain of the
/// conjugated Fuchsian group, built from the elements in `ball`.
pub fn orbit_volume(y: &ClosedOrbit, ball: &LatticeBall) -> Result<OrbitVolume> {
    let base_inv = y.base.inverse();
    let mut width = f64::INFINITY;
    let mut circles: Vec<(f64, f64)> = Vec::new();
    for m in ball.matrices() {
        let q = base_inv.mul(m).mul(&y.base);
        let s = q.max_abs();
        if [q.a, q.b, q.c, q.d].iter().any(|v| v.im.abs() > 1e-9 * s) {
            continue;
        }
        let (a, b, cc, d) = (q.a.re, q.b.re, q.c.re, q.d.re);
        if cc.abs() < 1e-9 {
            let shift = (b / d).abs();
            if (a.abs() - 1.0).abs() < 1e-9 && shift > 1e-9 {
                width = width.min(shift);
            }
        } else {
            circles.push((-d / cc, 1.0 / cc.abs()));
        }
    }
    if !width.is_finite() {
        return Err(HoroError::Resolution("no parabolic element fixing ∞ in the ball".into()));
    }
    let (lo, hi) = (-0.5 * width, 0.5 * width);
    let mut all: Vec<(f64, f64)> = Vec::new();
    for &(c0, r) in &circles {
        for j in -3..=3 {
            let cj = c0 + j as f64 * width;
            if cj + r > lo && cj - r < hi {
                all.push((cj, r));
            }
        }
    }
    all.sort_by(|p, q| q.1.total_cmp(&p.1).then(p.0.total_cmp(&q.0)));
    let mut kept: Vec<(f64, f64)> = Vec::new();
    for &(cc, r) in &all {
        if kept.iter().all(|&(c2, r2)| r2 < r + (cc - c2).abs() - 1e-12) {
            kept.push((cc, r));
        }
    }
    let mut bps = vec![lo, hi];
    for (i, &(c1, r1)) in kept.iter().enumerate() {
        bps.push(c1 - r1);
        bps.push(c1 + r1);
        for &(c2, r2) in &kept[i + 1..] {
            if (c2 - c1).abs() > 1e-15 {
                bps.push((r1 * r1 - r2 * r2 - c1 * c1 + c2 * c2) / (2.0 * (c2 - c1)));
            }
        }
    }
    bps.retain(|x| *x >= lo && *x <= hi);
    bps.sort_by(f64::total_cmp);
    bps.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
    let mut area = 0.0;
    for w in bps.windows(2) {
        let (u, v) = (w[0], w[1]);
        let mid = 0.5 * (u + v);
        let best = kept
            .iter()
            .map(|&(cc, r)| (r * r - (mid - cc).powi(2), cc, r))
            .max_by(|p, q| p.0.total_cmp(&q.0));
        match best {
            Some((val, cc, r)) if val > 0.0 => {
                let asin = |x: f64| ((x - cc) / r).clamp(-1.0, 1.0).asin();
                area += asin(v) - asin(u);
            }
            _ => {
                return Err(HoroError::Resolution(format!(
                    "Ford domain not closed over [{u}, {v}]; enlarge the word radius"
                )))
            }
        }
    }
    Ok(OrbitVolume { area, width, circles: kept.len() })
}

// ---------------------------------------------------------------------------
// Non-divergence

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NondivConfig {
    /// η in the time threshold `|log(η² inj(x))| + C`.
    pub eta: f64,
    pub c: f64,
}

impl Default for NondivConfig {
    fn default() -> Self {
        NondivConfig { eta: 0.5, c: 2.0 }
    }
}

impl NondivConfig {
    pub fn threshold(&self, x: &CosetPoint) -> f64 {
        (self.eta * self.eta * x.inj_proxy).ln().abs() + self.c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NondivEstimate {
    pub fraction: f64,
    /// 99% Wilson interval.
    pub ci: (f64, f64),
    pub hits: u64,
    pub samples: u64,
    pub precondition_met: bool,
}

/// Monte Carlo fraction of `s ∈ [lo, hi]` with `inj(a_t u_s x) < α²`.
#[allow(clippy::too_many_arguments)]
pub fn nondivergence_fraction(
    x: &CosetPoint,
    t: f64,
    alpha: f64,
    interval: (f64, f64),
    samples: usize,
    seed: u64,
    cfg: &NondivConfig,
) -> Result<NondivEstimate> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(HoroError::InvalidArgument(format!("alpha = {alpha} outside (0, 1)")));
    }
    let (lo, hi) = interval;
    if !(lo < hi && lo >= -0.5 && hi <= 0.5) {
        return Err(HoroError::InvalidArgument("interval must lie in [-1/2, 1/2]".into()));
    }
    if samples == 0 {
        return Err(HoroError::EmptyInput("samples".into()));
    }
    let mut rng = stream(seed, 0);
    let mut hits = 0u64;
    for _ in 0..samples {
        let s = rng.gen_range(lo..hi);
        if x.push(t, s)?.inj_proxy < alpha * alpha {
            hits += 1;
        }
    }
    let n = samples as u64;
    Ok(NondivEstimate {
        fraction: hits as f64 / samples as f64,
        ci: wilson_interval(hits, n, 0.99),
        hits,
        samples: n,
        precondition_met: t >= cfg.threshold(x),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NondivRow {
    pub point: usize,
    pub t: f64,
    pub alpha: f64,
    pub estimate: NondivEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NondivSweep {
    /// `max fraction/α` over the qualifying rows.
    pub k_hat: f64,
    pub rows: Vec<NondivRow>,
}

/// Runs every `(x, α)` at `t = threshold(x) + dt` for each `dt` and fits K.
pub fn nondivergence_sweep(
    points: &[CosetPoint],
    extra_times: &[f64],
    alphas: &[f64],
    samples: usize,
    seed: u64,
    cfg: &NondivConfig,
) -> Result<NondivSweep> {
    if points.is_empty() || alphas.is_empty() || extra_times.is_empty() {
        return Err(HoroError::EmptyInput("sweep grid".into()));
    }
    let mut rows = Vec::new();
    let mut k_hat: f64 = 0.0;
    let mut idx = 0u64;
    for (i, x) in points.iter().enumerate() {
        for &dt in extra_times {
            let t = cfg.threshold(x) + dt.max(0.0);
            for &alpha in alphas {
                let est = nondivergence_fraction(x, t, alpha, (-0.5, 0.5), samples, seed ^ (idx << 20), cfg)?;
                idx += 1;
                k_hat = k_hat.max(est.fraction / alpha);
                rows.push(NondivRow { point: i, t, alpha, estimate: est });
            }
        }
    }
    Ok(NondivSweep { k_hat, rows })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReturnWitness {
    pub t: f64,
    pub s: f64,
    pub inj: f64,
}

/// Searches a midpoint grid of `B₁ᵁ` at `t = |log inj(x)| + c` for `s` with
/// `inj(a_t u_s x) ≥ eta_x`.
pub fn return_witness(x: &CosetPoint, c_const: f64, eta_x: f64, grid: usize) -> Result<Option<ReturnWitness>> {
    if grid == 0 {
        return Err(HoroError::EmptyInput("grid".into()));
    }
    let t = x.inj_proxy.ln().abs() + c_const;
    for k in 0..grid {
        let s = -0.5 + (k as f64 + 0.5) / grid as f64;
        let y = x.push(t, s)?;
        if y.inj_proxy >= eta_x {
            return Ok(Some(ReturnWitness { t, s, inj: y.inj_proxy }));
        }
    }
    Ok(None)
}

// ---------------------------------------------------------------------------
// Effective density probe

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrbitDistance {
    /// Smallest transverse norm over the ball, `∞` when no candidate splits.
    pub distance: f64,
    /// `distance < inj_proxy(x)`.
    pub reported: bool,
}

/// Transverse distance from `x` to `Y` through the words in `ball`.
pub fn orbit_distance(x: &CosetPoint, y: &ClosedOrbit, ball: &LatticeBall) -> OrbitDistance {
    let scan = transverse_scan(x, y, ball, 0.0);
    OrbitDistance { distance: scan.nearest, reported: scan.nearest < x.inj_proxy }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityRow {
    pub label: String,
    pub volume: Option<f64>,
    pub max_distance: f64,
    /// Grid points whose distance is not below `inj_proxy`.
    pub flagged: usize,
    pub inconclusive: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityReport {
    pub rows: Vec<DensityRow>,
    /// Slope of `log max distance` against `log volume`, when defined.
    pub exponent: Option<f64>,
    pub monotone: bool,
}

/// Thick-part grid: points of the Picard domain at heights `1.0` and `1.4`
/// with frames rotated by `U_θ`, `θ ∈ {0, π/3, 2π/3}`.
pub fn thick_grid(per_axis: usize) -> Result<Vec<CosetPoint>> {
    let mut out = Vec::new();
    for i in 0..per_axis {
        for j in 0..per_axis {
            let x = -0.5 + (i as f64 + 0.5) / per_axis as f64;
            let yv = 0.5 * (j as f64 + 0.5) / per_axis as f64;
            for t in [1.0, 1.4] {
                for th in [0.0, PI / 3.0, 2.0 * PI / 3.0] {
                    let k = Mat2::real(th.cos(), -th.sin(), th.sin(), th.cos());
                    let p = HalfSpacePoint::new(c(x, yv), t);
                    out.push(reduce(&p.section().mul(&k))?);
                }
            }
        }
    }
    Ok(out)
}

/// For each orbit, the largest distance from the grid to the orbit, and the
/// log-log trend against the orbit volume. Exploratory.
pub fn effective_density_probe(orbits: &[ClosedOrbit], grid: &[CosetPoint], ball: &LatticeBall) -> Result<DensityReport> {
    if orbits.is_empty() || grid.is_empty() {
        return Err(HoroError::EmptyInput("orbits or grid".into()));
    }
    let mut rows = Vec::new();
    for y in orbits {
        let volume = orbit_volume(y, ball).ok().map(|v| v.area);
        let mut max_distance: f64 = 0.0;
        let mut flagged = 0;
        let mut missing = false;
        for x in grid {
            let d = orbit_distance(x, y, ball);
            if !d.distance.is_finite() {
                missing = true;
                continue;
            }
            max_distance = max_distance.max(d.distance);
            if !d.reported {
                flagged += 1;
            }
        }
        rows.push(DensityRow {
            label: y.label.clone(),
            volume,
            max_distance,
            flagged,
            inconclusive: missing || volume.is_none(),
        });
    }
    let pts: Vec<(f64, f64)> =
        rows.iter().filter_map(|r| r.volume.map(|v| (v.ln(), r.max_distance.ln()))).collect();
    let exponent = if pts.len() >= 2 {
        let (xs, ys): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
        crate::stats::linear_fit(&xs, &ys, 0.95).map(|f| f.slope)
    } else {
        None
    };
    let mut order: Vec<&DensityRow> = rows.iter().filter(|r| r.volume.is_some()).collect();
    order.sort_by(|a, b| a.volume.unwrap().total_cmp(&b.volume.unwrap()));
    let monotone = order.windows(2).all(|w| w[1].max_distance <= w[0].max_distance + 1e-12);
    Ok(DensityReport { rows, exponent, monotone })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_exp_roundtrip() {
        let x = Mat2::new(c(0.1, 0.2), c(-0.3, 0.05), c(0.2, -0.1), c(-0.1, -0.2));
        let back = sl2_log(&sl2_exp(&x));
        assert!(back.sub(&x).frobenius() < 1e-13);
        let par = Mat2::real(1.0, 1.0, 0.0, 1.0);
        assert!(sl2_log(&par).sub(&Mat2::real(0.0, 1.0, 0.0, 0.0)).frobenius() < 1e-15);
    }

    #[test]
    fn gaussian_norm_wide() {
        let g = GaussianInt::new(1 << 30, -(1 << 30));
        assert_eq!(g.norm(), 2i128 << 60);
    }
}
