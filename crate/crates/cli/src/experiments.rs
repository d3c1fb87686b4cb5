use std::f64::consts::PI;

use horolab::bianchi_model::{
    a_mat, calibration_corpus, effective_density_probe, fit_margulis_constant, height, margulis_operator,
    margulis_violations, nondivergence_sweep, orbit_sample, orbit_volume, reduce_point, return_witness, thick_grid,
    u_mat, ClosedOrbit, HalfSpacePoint, LatticeBall, Mat2, NondivConfig, EPS0, ETA_X,
};
use horolab::equidist_lab::{decay_fit, make_digit_measure, window_grid, TestFunction};
use horolab::fractal::FractalMeasure;
use horolab::gmt_dimension::{coarse_dim_check, PointCloud};
use horolab::polynomial_bounds::{
    cone_sample, find_m_delta, fit_expansion_exponent, random_polybox, remez_check, RemezStatus,
};
use horolab::so_kernel::RVector;
use horolab::synthetic::product_cantor;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::{p, Kind::*, ParamSpec, Params};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    /// Names the invariant being checked, `<module>.<invariant>`.
    pub id: String,
    pub pass: bool,
    /// Distance to the threshold; positive when passing.
    pub margin: f64,
}

impl Verdict {
    fn at_most(id: &str, value: f64, bound: f64) -> Self {
        Verdict { id: id.into(), pass: value <= bound, margin: bound - value }
    }

    fn holds(id: &str, pass: bool) -> Self {
        Verdict { id: id.into(), pass, margin: if pass { 1.0 } else { -1.0 } }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub name: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub log_y: bool,
}

#[derive(Debug, Clone, Default)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub results: Value,
    pub verdicts: Vec<Verdict>,
    pub series: Vec<Series>,
    pub tables: Vec<Table>,
}

pub struct ExperimentSpec {
    pub name: &'static str,
    pub about: &'static str,
    pub params: &'static [ParamSpec],
    pub run: fn(&Params, u64) -> horolab::Result<Outcome>,
}

pub const EXPERIMENTS: &[ExperimentSpec] = &[
    ExperimentSpec {
        name: "lemma-la",
        about: "decay exponent of the expansion integral along a_t",
        params: &[
            p("n", Int, "3", "dimension of hyperbolic space"),
            p("delta", Float, "0.75", "exponent"),
            p("t-min", Float, "2", "first time"),
            p("t-max", Float, "10", "last time"),
            p("t-steps", Int, "9", "number of times"),
            p("r1", Float, "1", "expanding coordinate of Z"),
            p("c", Float, "0", "each neutral coordinate of Z"),
            p("r2", Float, "0", "contracting coordinate of Z"),
        ],
        run: lemma_la,
    },
    ExperimentSpec {
        name: "remez",
        about: "sublevel-set bound over random polynomials",
        params: &[
            p("dim", Int, "2", "number of variables"),
            p("degree", Int, "3", "maximal degree"),
            p("count", Int, "50", "polynomials"),
        ],
        run: remez,
    },
    ExperimentSpec {
        name: "m-delta",
        about: "smallest contraction time for the cone integral",
        params: &[
            p("n", Int, "3", "dimension of hyperbolic space"),
            p("delta", Float, "0.75", "exponent"),
            p("sample", Int, "32", "cone vectors"),
        ],
        run: m_delta,
    },
    ExperimentSpec {
        name: "coarse-dim",
        about: "coarse dimension certificate of a product Cantor cloud",
        params: &[
            p("cloud-delta", Float, "0.8", "dimension of the generated cloud"),
            p("levels", Int, "4", "construction depth"),
            p("delta", Float, "0.8", "exponent checked"),
            p("c", Float, "1", "constant checked"),
        ],
        run: coarse_dim,
    },
    ExperimentSpec {
        name: "equidist",
        about: "decay of Birkhoff averages over fractal horosphere pieces",
        params: &[
            p("b", Float, "1e-4", "scale fixing the time window"),
            p("measure", Text, "digit", "uniform or digit"),
            p("base", Int, "10", "digit base"),
            p("missing", Int, "9", "omitted digit"),
            p("t-steps", Int, "6", "times in the window"),
            p("center", Float, "0", "center of the height bump in ln t"),
            p("width", Float, "1", "width of the height bump"),
            p("per-height", Float, "4", "grid nodes per unit of e^-t"),
        ],
        run: equidist,
    },
    ExperimentSpec {
        name: "bianchi-reduce",
        about: "reduction of a half-space point into the Picard domain",
        params: &[
            p("z-re", Float, "5.3", "real part of z"),
            p("z-im", Float, "0.2", "imaginary part of z"),
            p("t", Float, "0.1", "height"),
        ],
        run: bianchi_reduce,
    },
    ExperimentSpec {
        name: "bianchi-height",
        about: "height by reduction and by word-ball enumeration",
        params: &[
            p("z-re", Float, "0.1", "real part of z"),
            p("z-im", Float, "0.2", "imaginary part of z"),
            p("t", Float, "3", "height"),
            p("radius", Int, "8", "word-ball radius"),
        ],
        run: bianchi_height,
    },
    ExperimentSpec {
        name: "bianchi-sheets",
        about: "sheets of a closed plane orbit near a point of the orbit",
        params: &[
            p("level", Int, "0", "0 for the standard orbit, else the vertical orbit of that level"),
            p("theta", Float, "0", "rotation angle of the orbit point"),
            p("tau", Float, "0", "geodesic time of the orbit point"),
            p("sigma", Float, "0", "horocyclic time of the orbit point"),
            p("eps", Float, "1", "sheet radius in units of the injectivity proxy"),
            p("radius", Int, "6", "word-ball radius"),
        ],
        run: bianchi_sheets,
    },
    ExperimentSpec {
        name: "bianchi-margulis",
        about: "averaging inequality for the Margulis function of the standard orbit",
        params: &[
            p("delta", Float, "0.75", "exponent"),
            p("m", Float, "12.44", "averaging time"),
            p("points", Int, "16", "orbit points"),
            p("samples", Int, "256", "samples per average"),
            p("tau-max", Float, "3", "largest geodesic time of the orbit points"),
            p("radius", Int, "6", "word-ball radius"),
        ],
        run: bianchi_margulis,
    },
    ExperimentSpec {
        name: "bianchi-nondiv",
        about: "quantitative non-divergence sweep and return witnesses",
        params: &[
            p("points", Int, "6", "base points"),
            p("samples", Int, "1000", "horocycle samples per estimate"),
            p("eta", Float, "0.5", "threshold parameter"),
            p("c", Float, "2", "threshold offset"),
        ],
        run: bianchi_nondiv,
    },
    ExperimentSpec {
        name: "bianchi-density-probe",
        about: "distance from a thick grid to closed plane orbits of growing volume",
        params: &[
            p("levels", Int, "4", "vertical orbits 1..=levels"),
            p("per-axis", Int, "3", "grid points per axis"),
            p("radius", Int, "10", "word-ball radius"),
        ],
        run: bianchi_density,
    },
];

pub fn find(name: &str) -> Option<&'static ExperimentSpec> {
    EXPERIMENTS.iter().find(|e| e.name == name)
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n < 2 {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

fn invalid(msg: impl Into<String>) -> horolab::HoroError {
    horolab::HoroError::InvalidArgument(msg.into())
}

fn lemma_la(p: &Params, _seed: u64) -> horolab::Result<Outcome> {
    let n = p.usize("n");
    if n < 3 {
        return Err(invalid("n must be at least 3"));
    }
    let delta = p.f64("delta");
    let z = RVector::new(p.f64("r1"), vec![p.f64("c"); n - 2], p.f64("r2"));
    let grid = linspace(p.f64("t-min"), p.f64("t-max"), p.usize("t-steps"));
    let fit = fit_expansion_exponent(&z, delta, &grid)?;
    Ok(Outcome {
        verdicts: vec![Verdict::at_most("lemma-la.slope-bound", fit.fitted_slope, delta - 1.0 + 0.05)],
        series: vec![Series { name: "I(t)".into(), x: fit.t_grid.clone(), y: fit.values.clone(), log_y: true }],
        tables: vec![Table {
            name: "integral".into(),
            header: vec!["t".into(), "I".into()],
            rows: fit.t_grid.iter().zip(&fit.values).map(|(t, v)| vec![t.to_string(), v.to_string()]).collect(),
        }],
        results: json!({ "fit": fit }),
    })
}

fn remez(p: &Params, seed: u64) -> horolab::Result<Outcome> {
    let eps = [0.5, 0.1, 1e-2, 1e-3];
    let mut rows = Vec::new();
    let (mut failures, mut inconclusive) = (0, 0);
    for i in 0..p.usize("count") {
        let pb = random_polybox(p.usize("dim"), p.usize("degree") as u32, seed, i as u64)?;
        let r = remez_check(&pb, &eps)?;
        let inc = r.entries.iter().filter(|e| e.status == RemezStatus::Inconclusive).count();
        failures += r.failures();
        inconclusive += inc;
        rows.push(vec![i.to_string(), r.failures().to_string(), inc.to_string(), r.sup_grid.to_string()]);
    }
    Ok(Outcome {
        results: json!({ "checked": rows.len(), "failures": failures, "inconclusive": inconclusive, "eps": eps }),
        verdicts: vec![Verdict::at_most("remez.no-violations", failures as f64, 0.0)],
        series: Vec::new(),
        tables: vec![Table {
            name: "polynomials".into(),
            header: ["index", "failures", "inconclusive", "sup"].map(String::from).to_vec(),
            rows,
        }],
    })
}

fn m_delta(p: &Params, seed: u64) -> horolab::Result<Outcome> {
    let sample = cone_sample(p.usize("n"), p.usize("sample"), seed);
    let m = find_m_delta(p.f64("delta"), p.usize("n"), 1.0, &sample)?;
    Ok(Outcome {
        verdicts: vec![Verdict::at_most("m-delta.contraction", m.worst_ratio, m.threshold)],
        results: json!({ "m_delta": m }),
        ..Outcome::default()
    })
}

fn coarse_dim(p: &Params, _seed: u64) -> horolab::Result<Outcome> {
    let cloud = PointCloud::unit(product_cantor(p.f64("cloud-delta"), p.usize("levels") as u32))?;
    let cert = coarse_dim_check(&cloud, p.f64("delta"), p.f64("c"))?;
    Ok(Outcome {
        verdicts: vec![Verdict { id: "coarse-dim.valid".into(), pass: cert.valid, margin: 1.0 - cert.worst_ratio }],
        results: json!({ "points": cloud.points.len(), "certificate": cert }),
        ..Outcome::default()
    })
}

fn equidist(p: &Params, _seed: u64) -> horolab::Result<Outcome> {
    let b = p.f64("b");
    if !(b > 0.0 && b < 1.0) {
        return Err(invalid("b must lie in (0, 1)"));
    }
    let rho = match p.text("measure") {
        "uniform" => FractalMeasure::uniform(),
        "digit" => {
            let base = p.usize("base") as u32;
            let missing = p.usize("missing") as u32;
            let allowed: Vec<u32> = (0..base).filter(|d| *d != missing).collect();
            let depth = ((1.0 / b).ln() / (base as f64).ln() - 1e-9).ceil().max(1.0) as u32;
            make_digit_measure(base, &allowed, depth)?
        }
        other => return Err(invalid(format!("measure {other:?} is neither uniform nor digit"))),
    };
    let x = reduce_point(&HalfSpacePoint::new(Complex64::new(0.0, 0.0), 1.0))?;
    let f = TestFunction::height_bump(p.f64("center"), p.f64("width"))?;
    let grid = window_grid(b, p.usize("t-steps"));
    let report = decay_fit(&x, &rho, &f, b, &grid, p.f64("per-height"))?;
    let first = report.errors[0];
    let last = *report.errors.last().unwrap();
    Ok(Outcome {
        verdicts: vec![
            Verdict { id: "equidist.kappa-positive".into(), pass: report.decays(), margin: report.kappa_ci.map_or(-1.0, |c| c.0) },
            Verdict::at_most("equidist.error-halves", last, 0.5 * first),
        ],
        series: vec![Series { name: "error".into(), x: report.t_grid.clone(), y: report.errors.clone(), log_y: true }],
        tables: vec![Table {
            name: "errors".into(),
            header: ["t", "average", "error"].map(String::from).to_vec(),
            rows: report
                .t_grid
                .iter()
                .zip(&report.averages)
                .zip(&report.errors)
                .map(|((t, a), e)| vec![t.to_string(), a.to_string(), e.to_string()])
                .collect(),
        }],
        results: json!({ "delta": rho.delta(), "report": report }),
    })
}

fn point(p: &Params) -> HalfSpacePoint {
    HalfSpacePoint::new(Complex64::new(p.f64("z-re"), p.f64("z-im")), p.f64("t"))
}

fn bianchi_reduce(p: &Params, _seed: u64) -> horolab::Result<Outcome> {
    let x = reduce_point(&point(p))?;
    Ok(Outcome {
        verdicts: vec![Verdict::holds("bianchi.reduced-in-domain", x.point.in_picard_domain(1e-9))],
        results: json!({
            "point": x.point,
            "word": format!("{:?}", x.gamma.word.0),
            "word_length": x.gamma.word.len(),
            "height": x.height,
            "inj_proxy": x.inj_proxy,
        }),
        ..Outcome::default()
    })
}

fn bianchi_height(p: &Params, _seed: u64) -> horolab::Result<Outcome> {
    let x = reduce_point(&point(p))?;
    let ball = LatticeBall::new(p.usize("radius"))?;
    let h = height(&x, &ball);
    Ok(Outcome {
        verdicts: vec![Verdict::holds("bianchi.height-certified", h.certified)],
        results: json!({ "height": h, "inj_proxy": x.inj_proxy }),
        ..Outcome::default()
    })
}

fn orbit(level: usize) -> horolab::Result<ClosedOrbit> {
    if level == 0 {
        Ok(ClosedOrbit::standard())
    } else {
        ClosedOrbit::vertical(level as u32)
    }
}

fn bianchi_sheets(p: &Params, _seed: u64) -> horolab::Result<Outcome> {
    let y = orbit(p.usize("level"))?;
    let th = p.f64("theta");
    let h = Mat2::real(th.cos(), -th.sin(), th.sin(), th.cos()).mul(&a_mat(p.f64("tau"))).mul(&u_mat(p.f64("sigma")));
    let x = y.point(&h)?;
    let ball = LatticeBall::new(p.usize("radius"))?;
    let s = horolab::bianchi_model::enumerate_sheets(&x, &y, p.f64("eps"), &ball)?;
    Ok(Outcome {
        verdicts: vec![Verdict::holds("bianchi.on-orbit", s.on_orbit)],
        results: json!({
            "orbit": y.label,
            "count": s.vectors.len(),
            "vectors": s.vectors.iter().map(|w| w.coords()).collect::<Vec<_>>(),
            "nearest": s.nearest,
            "suspicious_empty": s.suspicious_empty,
            "inj_proxy": x.inj_proxy,
        }),
        ..Outcome::default()
    })
}

fn bianchi_margulis(p: &Params, seed: u64) -> horolab::Result<Outcome> {
    let y = ClosedOrbit::standard();
    let ball = LatticeBall::new(p.usize("radius"))?;
    let vol = orbit_volume(&y, &ball)?.area;
    let points = orbit_sample(&y, p.usize("points"), p.f64("tau-max"), seed)?;
    let rows = points
        .iter()
        .enumerate()
        .map(|(i, x)| margulis_operator(x, &y, p.f64("delta"), EPS0, p.f64("m"), p.usize("samples"), &ball, seed ^ i as u64))
        .collect::<horolab::Result<Vec<_>>>()?;
    let e = fit_margulis_constant(&rows, vol);
    let violations = margulis_violations(&rows, e, vol);
    Ok(Outcome {
        verdicts: vec![Verdict::at_most("margulis.no-violations", violations as f64, 0.0)],
        series: vec![Series {
            name: "A f / f".into(),
            x: (0..rows.len()).map(|i| i as f64).collect(),
            y: rows.iter().map(|r| r.ratio()).collect(),
            log_y: true,
        }],
        results: json!({ "volume": vol, "E": e, "violations": violations, "rows": rows }),
        ..Outcome::default()
    })
}

fn bianchi_nondiv(p: &Params, seed: u64) -> horolab::Result<Outcome> {
    let cfg = NondivConfig { eta: p.f64("eta"), c: p.f64("c") };
    let points = calibration_corpus(p.usize("points"), seed)?;
    let alphas = [0.05, 0.1, 0.2, 0.3, 0.4];
    let sweep = nondivergence_sweep(&points, &[0.0, 2.0], &alphas, p.usize("samples"), seed, &cfg)?;
    let witnesses = points
        .iter()
        .map(|x| return_witness(x, cfg.c, ETA_X, 64))
        .collect::<horolab::Result<Vec<_>>>()?;
    let found = witnesses.iter().filter(|w| w.is_some()).count();
    Ok(Outcome {
        verdicts: vec![
            Verdict::at_most("nondiv.k-bound", sweep.k_hat, 20.0),
            Verdict::holds("nondiv.return-witness", found == points.len()),
        ],
        results: json!({ "k_hat": sweep.k_hat, "rows": sweep.rows, "witnesses": witnesses }),
        ..Outcome::default()
    })
}

fn bianchi_density(p: &Params, _seed: u64) -> horolab::Result<Outcome> {
    let ball = LatticeBall::new(p.usize("radius"))?;
    let grid = thick_grid(p.usize("per-axis"))?;
    let orbits = (1..=p.usize("levels")).map(|l| ClosedOrbit::vertical(l as u32)).collect::<horolab::Result<Vec<_>>>()?;
    let report = effective_density_probe(&orbits, &grid, &ball)?;
    let with_volume: Vec<_> = report.rows.iter().filter_map(|r| r.volume.map(|v| (v, r.max_distance))).collect();
    Ok(Outcome {
        verdicts: vec![Verdict::holds("density.monotone", report.monotone)],
        series: vec![Series {
            name: "max distance".into(),
            x: with_volume.iter().map(|v| v.0 / PI).collect(),
            y: with_volume.iter().map(|v| v.1).collect(),
            log_y: false,
        }],
        results: json!({ "report": report }),
        ..Outcome::default()
    })
}
