use std::path::PathBuf;

use horolab::hexfloat::{from_hex, to_hex};
use horolab::linalg::max_abs;
use horolab::rng;
use horolab::so_kernel::*;
use horolab::HoroError;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;

/// Independent Gram matrix of 2 x_1 x_{n+1} - sum x_k^2.
fn gram_oracle(n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n + 1, n + 1, |i, j| {
        if (i == 0 && j == n) || (i == n && j == 0) {
            1.0
        } else if i == j && i != 0 && i != n {
            -1.0
        } else {
            0.0
        }
    })
}

/// Truncated exponential series for nilpotent or small matrices.
fn exp_series(x: &DMatrix<f64>, terms: usize) -> DMatrix<f64> {
    let n = x.nrows();
    let mut sum = DMatrix::identity(n, n);
    let mut term = DMatrix::identity(n, n);
    for k in 1..terms {
        term = &term * x / k as f64;
        sum += &term;
    }
    sum
}

fn conj_oracle(g: &DMatrix<f64>, x: &DMatrix<f64>) -> DMatrix<f64> {
    g * x * g.clone().try_inverse().unwrap()
}

/// Reads `Z(r1, c, r2)` out of a matrix by the column pattern, written
/// independently of the library's extraction.
fn read_r(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows() - 1;
    let mut out = vec![m[(0, n - 1)]];
    for i in 1..n - 1 {
        out.push(m[(i, n - 1)]);
    }
    out.push(m[(n, n - 1)]);
    out
}

#[test]
fn quadratic_form_matches_definition() {
    for n in 3..=6 {
        let q = QuadraticForm::standard(n).unwrap();
        assert_eq!(q.matrix, gram_oracle(n));
        let mut e1 = vec![0.0; n + 1];
        e1[0] = 1.0;
        assert_eq!(q.eval(&e1), 0.0);
    }
    assert!(matches!(QuadraticForm::standard(2), Err(HoroError::InvalidDimension(2))));
    assert!(matches!(QuadraticForm::standard(17), Err(HoroError::InvalidDimension(17))));
}

#[test]
fn make_at_examples() {
    let g = make_at(0.0, 3).unwrap();
    assert_eq!(g.mat, DMatrix::identity(4, 4));
    let g = make_at(2f64.ln(), 3).unwrap();
    let expect = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 1.0, 1.0, 0.5]));
    assert!(max_abs(&(&g.mat - expect)) < 1e-15);
    let g = make_at(1.0, 4).unwrap();
    let j = gram_oracle(4);
    assert!(max_abs(&(g.mat.transpose() * &j * &g.mat - &j)) < 1e-12);
    assert!((g.mat[(0, 0)] - std::f64::consts::E).abs() < 1e-15);
    assert!((g.mat[(4, 4)] - 1.0 / std::f64::consts::E).abs() < 1e-15);
    assert!(matches!(make_at(800.0, 3), Err(HoroError::Overflow(_))));
}

#[test]
fn make_horospherical_examples() {
    assert_eq!(make_horospherical(&[0.0], 0.0, 3).unwrap().mat, DMatrix::identity(4, 4));

    let g = make_horospherical(&[1.0], 0.0, 3).unwrap();
    assert_eq!(g.mat.row(0).iter().copied().collect::<Vec<_>>(), vec![1.0, 1.0, 0.0, 0.5]);
    // nilpotent generator: X e_{1+i} row 0 and X row 1+i column n
    let mut x = DMatrix::zeros(4, 4);
    x[(0, 1)] = 1.0;
    x[(1, 3)] = 1.0;
    assert!(max_abs(&(exp_series(&x, 5) - &g.mat)) < 1e-15);

    let g = make_horospherical(&[3.0, 4.0], 0.0, 4).unwrap();
    assert_eq!(g.mat[(0, 4)], 12.5);
    let mut x = DMatrix::zeros(5, 5);
    x[(0, 1)] = 3.0;
    x[(1, 4)] = 3.0;
    x[(0, 2)] = 4.0;
    x[(2, 4)] = 4.0;
    assert!(max_abs(&(exp_series(&x, 5) - &g.mat)) < 1e-13);
}

#[test]
fn adjoint_examples() {
    let z = RVector::new(1.0, vec![1.0], 1.0);
    assert_eq!(adjoint_asus(0.0, &[0.0], &z).unwrap(), z);

    let got = adjoint_asus(0.0, &[2.0], &z).unwrap();
    assert_eq!(got, RVector::new(5.0, vec![3.0], 1.0));
    let u = make_us(&[2.0], 3).unwrap();
    let oracle = read_r(&conj_oracle(&u.mat, &z.embed()));
    assert!(oracle.iter().zip([5.0, 3.0, 1.0]).all(|(a, b)| (a - b).abs() < 1e-13));

    let got = adjoint_asus(3f64.ln(), &[2.0], &z).unwrap();
    let g = make_at(3f64.ln(), 3).unwrap().mat * u.mat;
    let oracle = read_r(&conj_oracle(&g, &z.embed()));
    for (a, b) in got.coords().iter().zip([15.0, 3.0, 1.0 / 3.0]) {
        assert!((a - b).abs() < 1e-13, "{a} vs {b}");
    }
    for (a, b) in got.coords().iter().zip(&oracle) {
        assert!((a - b).abs() < 1e-12);
    }
    assert!(matches!(
        adjoint_asus(710.0, &[0.0], &RVector::new(1e10, vec![0.0], 0.0)),
        Err(HoroError::Overflow(_))
    ));
}

#[test]
fn xi_examples() {
    let z = RVector::new(0.7, vec![2.0], -3.0);
    assert_eq!(xi_s(&[0.0], &z), 0.7);
    assert_eq!(xi_s(&[2.0], &RVector::new(1.0, vec![1.0], 1.0)), 5.0);
    let z4 = RVector::new(0.0, vec![1.0, -1.0], 2.0);
    assert_eq!(xi_s(&[1.0, 1.0], &z4), 2.0);
    let g = make_us(&[1.0, 1.0], 4).unwrap();
    assert!((read_r(&conj_oracle(&g.mat, &z4.embed()))[0] - 2.0).abs() < 1e-13);
}

#[test]
fn split_lie_examples() {
    let z = RVector::new(1.0, vec![2.0], 3.0);
    let lv = split_lie(&z.embed()).unwrap();
    assert_eq!(lv.h_part, LieHCoords::zero(3));
    assert_eq!(lv.r_part, z);

    let mut a = DMatrix::zeros(4, 4);
    a[(0, 0)] = 1.0;
    a[(3, 3)] = -1.0;
    let lv = split_lie(&a).unwrap();
    assert_eq!(lv.r_part, RVector::zero(3));
    assert_eq!(lv.h_part.a_part, 1.0);

    let mut bad = DMatrix::zeros(4, 4);
    bad[(0, 1)] = 1.0;
    assert!(matches!(split_lie(&bad), Err(HoroError::NotInAlgebra(_))));
}

fn random_algebra_element(seed: u64, n: usize) -> DMatrix<f64> {
    let mut r = rng::stream(seed, 0);
    let m = DMatrix::from_fn(n + 1, n + 1, |_, _| r.gen_range(-1.0..1.0));
    let j = gram_oracle(n);
    (&m - &j * m.transpose() * &j) * 0.5
}

#[test]
fn lie_h_block_dimensions() {
    for n in 3..=7 {
        assert_eq!(LieHCoords::dim(n) + n, n * (n + 1) / 2);
        // Lie(H) kills e_n
        let h = LieHCoords::from_vec(n, &(0..LieHCoords::dim(n)).map(|k| k as f64 + 1.0).collect::<Vec<_>>());
        let m = h.embed(n);
        assert!(m.column(n - 1).iter().all(|x| *x == 0.0));
        assert!(m.row(n - 1).iter().all(|x| *x == 0.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn split_lie_round_trip(seed in any::<u64>(), n in 3usize..=6) {
        let v = random_algebra_element(seed, n);
        let lv = split_lie(&v).unwrap();
        prop_assert!(max_abs(&(lv.embed() - &v)) <= 1e-12);
        prop_assert!(lv.norm() >= lv.r_part.norm());
    }

    #[test]
    fn one_parameter_laws(t1 in -3.0..3.0f64, t2 in -3.0..3.0f64,
                          s1 in prop::collection::vec(-2.0..2.0f64, 2),
                          s2 in prop::collection::vec(-2.0..2.0f64, 2),
                          r1 in -2.0..2.0f64, r2 in -2.0..2.0f64) {
        let n = 4;
        let prod = make_at(t1, n).unwrap().mul(&make_at(t2, n).unwrap());
        prop_assert!(max_abs(&(prod.mat / (t1 + t2).exp().max(1.0) - make_at(t1 + t2, n).unwrap().mat / (t1 + t2).exp().max(1.0))) <= 1e-12);
        let prod = make_horospherical(&s1, r1, n).unwrap().mul(&make_horospherical(&s2, r2, n).unwrap());
        let sum: Vec<f64> = s1.iter().zip(&s2).map(|(a, b)| a + b).collect();
        let direct = make_horospherical(&sum, r1 + r2, n).unwrap();
        prop_assert!(max_abs(&(prod.mat - direct.mat)) <= 1e-12 * 16.0);
    }

    #[test]
    fn xi_matches_adjoint_and_oracle(s in prop::collection::vec(-1.0..1.0f64, 3),
                                     z in prop::collection::vec(-1.0..1.0f64, 5)) {
        let z = RVector::from_coords(&z);
        let xi = xi_s(&s, &z);
        prop_assert_eq!(xi, adjoint_asus(0.0, &s, &z).unwrap().r1);
        let u = make_us(&s, 5).unwrap();
        let oracle = read_r(&conj_oracle(&u.mat, &z.embed()))[0];
        prop_assert!((xi - oracle).abs() <= 1e-12);
    }

    #[test]
    fn inverse_is_exact(seed in any::<u64>()) {
        let mut r = rng::stream(seed, 1);
        let mut g = GroupElement::identity(4).unwrap();
        for _ in 0..10 {
            g = g.mul(&sample_generator(&mut r, 4).unwrap());
        }
        let id = g.mul(&g.inverse());
        prop_assert!(max_abs(&(id.mat - DMatrix::identity(5, 5))) <= 1e-9 * max_abs(&g.mat).powi(2));
        prop_assert!((g.det() - 1.0).abs() <= 1e-9 * max_abs(&g.mat).powi(5));
    }
}

#[test]
fn bch_trivial_cases() {
    let w = RVector::new(0.01, vec![-0.02], 0.03);
    let nf = bch_normal_form(&w, &w).unwrap();
    assert_eq!(nf.w, RVector::zero(3));
    assert_eq!(nf.h.mat, DMatrix::identity(4, 4));

    let w1 = RVector::new(0.01, vec![0.0], 0.0);
    let nf = bch_normal_form(&w1, &RVector::zero(3)).unwrap();
    assert_eq!(nf.w, w1);
    assert_eq!(nf.h.mat, DMatrix::identity(4, 4));

    let big = RVector::new(0.06, vec![0.0], 0.0);
    assert!(matches!(bch_normal_form(&big, &w), Err(HoroError::OutOfRange { .. })));
}

fn golden_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden/bch_normal_form.json")
}

#[test]
fn bch_golden_example() {
    let w1 = RVector::new(0.02, vec![0.01], 0.01);
    let w2 = RVector::new(0.01, vec![0.02], 0.0);
    let nf = bch_normal_form(&w1, &w2).unwrap();
    let diff = w1.sub(&w2).norm();
    assert!(nf.residual <= 1e-9);
    assert!(0.5 * diff <= nf.w.norm() && nf.w.norm() <= 2.0 * diff);

    // oracle: h exp(w) rebuilt with truncated series, compared with the
    // series product exp(w1) exp(-w2)
    let target = exp_series(&w1.embed(), 30) * exp_series(&w2.scale(-1.0).embed(), 30);
    let rebuilt = exp_series(&nf.h_log.embed(3), 30) * exp_series(&nf.w.embed(), 30);
    assert!(max_abs(&(target - rebuilt)) <= 1e-14);
    // h fixes e_n
    let hn = nf.h.apply(&[0.0, 0.0, 1.0, 0.0]);
    assert!((hn[2] - 1.0).abs() < 1e-15 && hn[0].abs() < 1e-15 && hn[1].abs() < 1e-15 && hn[3].abs() < 1e-15);

    let record = serde_json::json!({
        "w1": w1.coords().iter().map(|x| to_hex(*x)).collect::<Vec<_>>(),
        "w2": w2.coords().iter().map(|x| to_hex(*x)).collect::<Vec<_>>(),
        "w": nf.w.coords().iter().map(|x| to_hex(*x)).collect::<Vec<_>>(),
        "h_log": nf.h_log.to_vec().iter().map(|x| to_hex(*x)).collect::<Vec<_>>(),
    });
    let path = golden_path();
    if std::env::var_os("HOROLAB_BLESS").is_some() {
        std::fs::write(&path, serde_json::to_string_pretty(&record).unwrap()).unwrap();
    }
    let golden: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    for key in ["w", "h_log"] {
        let want: Vec<f64> = golden[key].as_array().unwrap().iter().map(|v| from_hex(v.as_str().unwrap()).unwrap()).collect();
        let got = record[key].as_array().unwrap().iter().map(|v| from_hex(v.as_str().unwrap()).unwrap());
        for (a, b) in got.zip(want) {
            assert!((a - b).abs() <= 1e-15, "{key}: {a:e} vs {b:e}");
        }
    }
}

#[test]
fn bch_sandwich_sample() {
    let mut r = rng::stream(11, 0);
    let mut worst = 0.0_f64;
    for k in 0..100 {
        let n = 3 + k % 3;
        let w1 = sample_rvector(&mut r, n, BETA0);
        let w2 = sample_rvector(&mut r, n, BETA0);
        let nf = bch_normal_form(&w1, &w2).unwrap();
        let d = w1.sub(&w2).norm();
        assert!(nf.residual <= 1e-9);
        assert!(0.5 * d <= nf.w.norm() && nf.w.norm() <= 2.0 * d);
        let beta = w1.norm().max(w2.norm());
        worst = worst.max(nf.constant_ratio(beta).unwrap());
    }
    assert!(worst <= 50.0, "fitted constant {worst}");
}
