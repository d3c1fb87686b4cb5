//! Group kernel for SO(n,1) acting on R^{n+1} with the form
//! `Q0(x) = 2 x_1 x_{n+1} - (x_2^2 + ... + x_n^2)`.
//!
//! Indices are 0-based: coordinate `0` is expanding, `n` is contracting, and
//! `n - 1` is the distinguished spacelike direction fixed by the subgroup H.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{HoroError, Result};
use crate::linalg::{expm, logm, max_abs};

/// Default validity radius for the normal form decomposition.
pub const BETA0: f64 = 0.05;
pub const MAX_N: usize = 16;

fn check_n(n: usize) -> Result<()> {
    if (3..=MAX_N).contains(&n) {
        Ok(())
    } else {
        Err(HoroError::InvalidDimension(n))
    }
}

fn check_finite(xs: &[f64], what: &str) -> Result<()> {
    if xs.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(HoroError::NonFinite(what.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticForm {
    pub n: usize,
    pub matrix: DMatrix<f64>,
}

impl QuadraticForm {
    pub fn standard(n: usize) -> Result<Self> {
        check_n(n)?;
        Ok(QuadraticForm { n, matrix: gram(n) })
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let v = DVector::from_column_slice(x);
        (v.transpose() * &self.matrix * &v)[(0, 0)]
    }
}

fn gram(n: usize) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(n + 1, n + 1);
    j[(0, n)] = 1.0;
    j[(n, 0)] = 1.0;
    for k in 1..n {
        j[(k, k)] = -1.0;
    }
    j
}

/// An element of SO(n,1) together with its measured form defect.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupElement {
    pub n: usize,
    pub mat: DMatrix<f64>,
    pub form_residual: f64,
}

pub fn form_residual(n: usize, mat: &DMatrix<f64>) -> f64 {
    let j = gram(n);
    max_abs(&(mat.transpose() * &j * mat - j))
}

impl GroupElement {
    pub fn from_matrix(n: usize, mat: DMatrix<f64>) -> Result<Self> {
        check_n(n)?;
        if mat.nrows() != n + 1 || mat.ncols() != n + 1 {
            return Err(HoroError::DimensionMismatch { expected: n + 1, got: mat.nrows() });
        }
        check_finite(mat.as_slice(), "group element entries")?;
        let form_residual = form_residual(n, &mat);
        Ok(GroupElement { n, mat, form_residual })
    }

    pub fn identity(n: usize) -> Result<Self> {
        Self::from_matrix(n, DMatrix::identity(n + 1, n + 1))
    }

    pub fn mul(&self, other: &GroupElement) -> GroupElement {
        assert_eq!(self.n, other.n, "group elements of different dimension");
        let mat = &self.mat * &other.mat;
        let form_residual = form_residual(self.n, &mat);
        GroupElement { n: self.n, mat, form_residual }
    }

    /// `g^{-1} = J g^T J`, exact for elements of O(n,1).
    pub fn inverse(&self) -> GroupElement {
        let j = gram(self.n);
        let mat = &j * self.mat.transpose() * &j;
        let form_residual = form_residual(self.n, &mat);
        GroupElement { n: self.n, mat, form_residual }
    }

    pub fn det(&self) -> f64 {
        self.mat.determinant()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        (&self.mat * DVector::from_column_slice(x)).iter().copied().collect()
    }

    pub fn distance_to_identity(&self) -> f64 {
        max_abs(&(&self.mat - DMatrix::identity(self.n + 1, self.n + 1)))
    }
}

pub fn make_at(t: f64, n: usize) -> Result<GroupElement> {
    check_n(n)?;
    check_finite(&[t], "t")?;
    if t.abs() > 700.0 {
        return Err(HoroError::Overflow(format!("|t| = {} exceeds 700", t.abs())));
    }
    let mut m = DMatrix::identity(n + 1, n + 1);
    m[(0, 0)] = t.exp();
    m[(n, n)] = (-t).exp();
    GroupElement::from_matrix(n, m)
}

/// The unipotent `n(s, r)` with `v = (s, r)`: first row `(1, v, |v|^2/2)`,
/// last column `(|v|^2/2, v, 1)^T`.
pub fn make_horospherical(s: &[f64], r: f64, n: usize) -> Result<GroupElement> {
    check_n(n)?;
    if s.len() != n - 2 {
        return Err(HoroError::DimensionMismatch { expected: n - 2, got: s.len() });
    }
    check_finite(s, "s")?;
    check_finite(&[r], "r")?;
    let mut v = s.to_vec();
    v.push(r);
    let half = 0.5 * v.iter().map(|x| x * x).sum::<f64>();
    let mut m = DMatrix::identity(n + 1, n + 1);
    for (i, vi) in v.iter().enumerate() {
        m[(0, 1 + i)] = *vi;
        m[(1 + i, n)] = *vi;
    }
    m[(0, n)] = half;
    GroupElement::from_matrix(n, m)
}

/// The opposite unipotent `n^-(s, r)`, the transpose of `n(s, r)`.
pub fn make_horospherical_opposite(s: &[f64], r: f64, n: usize) -> Result<GroupElement> {
    let g = make_horospherical(s, r, n)?;
    GroupElement::from_matrix(n, g.mat.transpose())
}

pub fn make_us(s: &[f64], n: usize) -> Result<GroupElement> {
    make_horospherical(s, 0.0, n)
}

pub fn make_vr(r: f64, n: usize) -> Result<GroupElement> {
    make_horospherical(&vec![0.0; n - 2], r, n)
}

/// `Z(r1, c, r2)` in the complement of Lie(H).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RVector {
    pub r1: f64,
    pub c: Vec<f64>,
    pub r2: f64,
}

impl RVector {
    pub fn new(r1: f64, c: Vec<f64>, r2: f64) -> Self {
        RVector { r1, c, r2 }
    }

    pub fn zero(n: usize) -> Self {
        RVector { r1: 0.0, c: vec![0.0; n - 2], r2: 0.0 }
    }

    /// Coordinates `(r1, c_1, ..., c_{n-2}, r2)`.
    pub fn from_coords(x: &[f64]) -> Self {
        let m = x.len();
        RVector { r1: x[0], c: x[1..m - 1].to_vec(), r2: x[m - 1] }
    }

    pub fn coords(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.c.len() + 2);
        v.push(self.r1);
        v.extend_from_slice(&self.c);
        v.push(self.r2);
        v
    }

    pub fn n(&self) -> usize {
        self.c.len() + 2
    }

    pub fn norm(&self) -> f64 {
        self.c.iter().fold(self.r1.abs().max(self.r2.abs()), |m, x| m.max(x.abs()))
    }

    pub fn sub(&self, other: &RVector) -> RVector {
        RVector::from_coords(&self.coords().iter().zip(other.coords()).map(|(a, b)| a - b).collect::<Vec<_>>())
    }

    pub fn scale(&self, k: f64) -> RVector {
        RVector { r1: k * self.r1, c: self.c.iter().map(|x| k * x).collect(), r2: k * self.r2 }
    }

    /// The expanding coordinate `Z^+`.
    pub fn plus(&self) -> f64 {
        self.r1
    }

    pub fn embed(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut m = DMatrix::zeros(n + 1, n + 1);
        m[(0, n - 1)] = self.r1;
        m[(n - 1, n)] = self.r1;
        m[(n - 1, 0)] = self.r2;
        m[(n, n - 1)] = self.r2;
        for (i, ci) in self.c.iter().enumerate() {
            m[(1 + i, n - 1)] = *ci;
            m[(n - 1, 1 + i)] = -*ci;
        }
        m
    }

    /// Reads the pattern back from column `n - 1`.
    pub fn extract(m: &DMatrix<f64>) -> RVector {
        let n = m.nrows() - 1;
        RVector {
            r1: m[(0, n - 1)],
            c: (0..n - 2).map(|i| m[(1 + i, n - 1)]).collect(),
            r2: m[(n, n - 1)],
        }
    }

    pub fn exp(&self) -> Result<GroupElement> {
        GroupElement::from_matrix(self.n(), expm(&self.embed()))
    }
}

/// Coordinates of Lie(H) in the blocks Lie(N), Lie(N^-), Lie(A), Lie(M').
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LieHCoords {
    pub n_part: Vec<f64>,
    pub nminus_part: Vec<f64>,
    pub a_part: f64,
    /// Entries `(i, j)` with `i < j` of the skew block on coordinates `1..=n-2`,
    /// in row-major order.
    pub m_part: Vec<f64>,
}

impl LieHCoords {
    pub fn zero(n: usize) -> Self {
        LieHCoords {
            n_part: vec![0.0; n - 2],
            nminus_part: vec![0.0; n - 2],
            a_part: 0.0,
            m_part: vec![0.0; (n - 2) * (n - 3) / 2],
        }
    }

    pub fn dim(n: usize) -> usize {
        2 * (n - 2) + 1 + (n - 2) * (n - 3) / 2
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.n_part.clone();
        v.extend_from_slice(&self.nminus_part);
        v.push(self.a_part);
        v.extend_from_slice(&self.m_part);
        v
    }

    pub fn from_vec(n: usize, v: &[f64]) -> Self {
        let k = n - 2;
        LieHCoords {
            n_part: v[..k].to_vec(),
            nminus_part: v[k..2 * k].to_vec(),
            a_part: v[2 * k],
            m_part: v[2 * k + 1..].to_vec(),
        }
    }

    pub fn norm(&self) -> f64 {
        self.to_vec().iter().fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    pub fn embed(&self, n: usize) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(n + 1, n + 1);
        for i in 0..n - 2 {
            m[(0, 1 + i)] = self.n_part[i];
            m[(1 + i, n)] = self.n_part[i];
            m[(1 + i, 0)] = self.nminus_part[i];
            m[(n, 1 + i)] = self.nminus_part[i];
        }
        m[(0, 0)] = self.a_part;
        m[(n, n)] = -self.a_part;
        let mut k = 0;
        for i in 0..n - 2 {
            for j in i + 1..n - 2 {
                m[(1 + i, 1 + j)] = self.m_part[k];
                m[(1 + j, 1 + i)] = -self.m_part[k];
                k += 1;
            }
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LieVector {
    pub h_part: LieHCoords,
    pub r_part: RVector,
}

impl LieVector {
    pub fn norm(&self) -> f64 {
        self.h_part.norm().max(self.r_part.norm())
    }

    pub fn embed(&self) -> DMatrix<f64> {
        let n = self.r_part.n();
        self.h_part.embed(n) + self.r_part.embed()
    }
}

/// Defect `|v^T J + J v|_max` of membership in so(n,1).
pub fn algebra_defect(v: &DMatrix<f64>) -> f64 {
    let n = v.nrows() - 1;
    let j = gram(n);
    max_abs(&(v.transpose() * &j + &j * v))
}

pub fn split_lie(v: &DMatrix<f64>) -> Result<LieVector> {
    let n = v.nrows().saturating_sub(1);
    check_n(n)?;
    let defect = algebra_defect(v);
    if defect > 1e-9 * max_abs(v).max(1.0) {
        return Err(HoroError::NotInAlgebra(defect));
    }
    let r_part = RVector::extract(v);
    let h = v - r_part.embed();
    let mut m_part = Vec::with_capacity((n - 2) * (n - 3) / 2);
    for i in 0..n - 2 {
        for j in i + 1..n - 2 {
            m_part.push(h[(1 + i, 1 + j)]);
        }
    }
    let h_part = LieHCoords {
        n_part: (0..n - 2).map(|i| h[(0, 1 + i)]).collect(),
        nminus_part: (0..n - 2).map(|i| h[(1 + i, 0)]).collect(),
        a_part: h[(0, 0)],
        m_part,
    };
    Ok(LieVector { h_part, r_part })
}

/// Closed form of `Ad(a_t u_s)` on the complement.
pub fn adjoint_asus(t: f64, s: &[f64], z: &RVector) -> Result<RVector> {
    if s.len() != z.c.len() {
        return Err(HoroError::DimensionMismatch { expected: z.c.len(), got: s.len() });
    }
    let et = t.exp();
    let r1 = et * xi_s(s, z);
    let r2 = (-t).exp() * z.r2;
    if !r1.is_finite() || !r2.is_finite() {
        return Err(HoroError::Overflow(format!("e^t |Z| overflows at t = {t}")));
    }
    let c = z.c.iter().zip(s).map(|(ci, si)| ci + z.r2 * si).collect();
    Ok(RVector { r1, c, r2 })
}

/// `xi_s(Z) = r1 + s.c + r2 |s|^2 / 2`.
pub fn xi_s(s: &[f64], z: &RVector) -> f64 {
    xi_parts(s, z.r1, &z.c, z.r2)
}

/// `xi_s` on unpacked coordinates.
pub fn xi_parts(s: &[f64], r1: f64, c: &[f64], r2: f64) -> f64 {
    let dot: f64 = s.iter().zip(c).map(|(a, b)| a * b).sum();
    let sq: f64 = s.iter().map(|x| x * x).sum();
    r1 + dot + r2 * sq * 0.5
}

/// Adjoint action by conjugation of the embedded matrix.
pub fn adjoint_by_conjugation(g: &GroupElement, z: &RVector) -> RVector {
    let conj = &g.mat * z.embed() * g.inverse().mat;
    RVector::extract(&conj)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormalForm {
    pub h: GroupElement,
    pub h_log: LieHCoords,
    pub w: RVector,
    /// `|h exp(w) - exp(w1) exp(-w2)|_max`.
    pub residual: f64,
    pub iterations: usize,
}

impl NormalForm {
    /// The ratio `|h - I| / (beta |w|)` whose supremum is the fitted constant.
    pub fn constant_ratio(&self, beta: f64) -> Option<f64> {
        let wn = self.w.norm();
        if wn == 0.0 || beta == 0.0 {
            None
        } else {
            Some(self.h.distance_to_identity() / (beta * wn))
        }
    }
}

pub fn bch_normal_form(w1: &RVector, w2: &RVector) -> Result<NormalForm> {
    bch_normal_form_with(w1, w2, BETA0)
}

/// Solves `exp(w1) exp(-w2) = h exp(w)` with `h` in H by Newton iteration on
/// `(log h, w)`, starting from the split of `log(exp(w1) exp(-w2))`.
pub fn bch_normal_form_with(w1: &RVector, w2: &RVector, beta0: f64) -> Result<NormalForm> {
    let n = w1.n();
    check_n(n)?;
    if w2.n() != n {
        return Err(HoroError::DimensionMismatch { expected: n, got: w2.n() });
    }
    check_finite(&w1.coords(), "w1")?;
    check_finite(&w2.coords(), "w2")?;
    let beta = w1.norm().max(w2.norm());
    if beta > beta0 {
        return Err(HoroError::OutOfRange { norm: beta, radius: beta0 });
    }
    if w1 == w2 {
        return Ok(NormalForm {
            h: GroupElement::identity(n)?,
            h_log: LieHCoords::zero(n),
            w: RVector::zero(n),
            residual: 0.0,
            iterations: 0,
        });
    }
    if w2.norm() == 0.0 {
        return Ok(NormalForm {
            h: GroupElement::identity(n)?,
            h_log: LieHCoords::zero(n),
            w: w1.clone(),
            residual: 0.0,
            iterations: 0,
        });
    }
    let target = expm(&w1.embed()) * expm(&w2.scale(-1.0).embed());
    let target_inv = {
        let j = gram(n);
        &j * target.transpose() * &j
    };
    let hdim = LieHCoords::dim(n);
    let dim = hdim + n;
    let to_params = |lv: &LieVector| {
        let mut p = lv.h_part.to_vec();
        p.extend(lv.r_part.coords());
        p
    };
    let assemble = |p: &[f64]| -> (DMatrix<f64>, DMatrix<f64>) {
        let hc = LieHCoords::from_vec(n, &p[..hdim]);
        let w = RVector::from_coords(&p[hdim..]);
        (expm(&hc.embed(n)), expm(&w.embed()))
    };
    let residual_fn = |p: &[f64]| -> Result<Vec<f64>> {
        let (eh, ew) = assemble(p);
        let defect = logm(&(&target_inv * eh * ew))?;
        let lv = split_lie_unchecked(&defect);
        Ok(to_params(&lv))
    };

    let mut p = to_params(&split_lie_unchecked(&logm(&target)?));
    let mut res = residual_fn(&p)?;
    let mut iterations = 0;
    let step = 1e-7;
    while res.iter().fold(0.0_f64, |m, x| m.max(x.abs())) > 1e-15 {
        if iterations >= 50 {
            let r = res.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
            return Err(HoroError::NoConvergence { iterations, residual: r });
        }
        iterations += 1;
        let mut jac = DMatrix::zeros(dim, dim);
        for k in 0..dim {
            let mut pp = p.clone();
            let mut pm = p.clone();
            pp[k] += step;
            pm[k] -= step;
            let fp = residual_fn(&pp)?;
            let fm = residual_fn(&pm)?;
            for i in 0..dim {
                jac[(i, k)] = (fp[i] - fm[i]) / (2.0 * step);
            }
        }
        let rhs = DVector::from_vec(res.clone());
        let delta = jac
            .lu()
            .solve(&rhs)
            .ok_or(HoroError::NoConvergence { iterations, residual: f64::NAN })?;
        let new_p: Vec<f64> = p.iter().zip(delta.iter()).map(|(a, d)| a - d).collect();
        let new_res = residual_fn(&new_p)?;
        let old_norm = res.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        let new_norm = new_res.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        p = new_p;
        res = new_res;
        if new_norm >= old_norm {
            break;
        }
    }
    let h_log = LieHCoords::from_vec(n, &p[..hdim]);
    let w = RVector::from_coords(&p[hdim..]);
    let (eh, ew) = assemble(&p);
    let residual = max_abs(&(&eh * &ew - &target));
    let h = GroupElement::from_matrix(n, eh)?;
    Ok(NormalForm { h, h_log, w, residual, iterations })
}

fn split_lie_unchecked(v: &DMatrix<f64>) -> LieVector {
    let n = v.nrows() - 1;
    let r_part = RVector::extract(v);
    let h = v - r_part.embed();
    let mut m_part = Vec::new();
    for i in 0..n - 2 {
        for j in i + 1..n - 2 {
            m_part.push(h[(1 + i, 1 + j)]);
        }
    }
    LieVector {
        h_part: LieHCoords {
            n_part: (0..n - 2).map(|i| h[(0, 1 + i)]).collect(),
            nminus_part: (0..n - 2).map(|i| h[(1 + i, 0)]).collect(),
            a_part: h[(0, 0)],
            m_part,
        },
        r_part,
    }
}

/// One generator of the kind used in word tests: `a_t` with `|t| <= 1`, or
/// `n(s, r)` / `n^-(s, r)` with `|(s, r)| <= 1`.
pub fn sample_generator<R: Rng>(rng: &mut R, n: usize) -> Result<GroupElement> {
    let kind = rng.gen_range(0..3);
    if kind == 0 {
        return make_at(rng.gen_range(-1.0..=1.0), n);
    }
    let v = sample_ball(rng, n - 1, 1.0);
    let (s, r) = v.split_at(n - 2);
    if kind == 1 {
        make_horospherical(s, r[0], n)
    } else {
        make_horospherical_opposite(s, r[0], n)
    }
}

/// Uniform sample from the Euclidean ball of the given radius.
pub fn sample_ball<R: Rng>(rng: &mut R, dim: usize, radius: f64) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let sq: f64 = v.iter().map(|x| x * x).sum();
        if sq <= 1.0 {
            return v.into_iter().map(|x| x * radius).collect();
        }
    }
}

/// Uniform sample of an RVector with max norm at most `radius`.
pub fn sample_rvector<R: Rng>(rng: &mut R, n: usize, radius: f64) -> RVector {
    let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-radius..=radius)).collect();
    RVector::from_coords(&x)
}
