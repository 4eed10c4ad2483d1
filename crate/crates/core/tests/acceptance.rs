//! Acceptance criteria 1 to 11, run in order on the default 17³ body.
//! Prints one PASS/FAIL line per criterion and exits nonzero on any failure.

use std::fmt::Display;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use microkin::ambient::AmbientSpace;
use microkin::body::BodyGrid;
use microkin::expr::parse_expression;
use microkin::geometry::{
    compatibility_residual, compatible_pseudo_metric, AffineCoeffs, AffineConnection, CompatSample, Metric, SolderForm,
};
use microkin::holonomy::{
    linear_fit, loop_defect, material_connection_field, parallel_transport, AnalyticConnection, ConnectionField,
    UniformConnection,
};
use microkin::invariance::{
    boundary_width, frame_invariance_deviation, minimality_counterexample, random_linear_galilean, act,
    MinimalityTarget,
};
use microkin::placement::{random_placement, Builtin, FirstOrderPlacement, PlacementPoint};
use microkin::pullback::{cauchy_green, material_connection_at, principal_invariants, pullback_checks};
use nalgebra::{DMatrix, DVector, Matrix3, SymmetricEigen, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

type Outcome = Result<String, String>;

fn s(e: impl Display) -> String {
    e.to_string()
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn default_grid() -> BodyGrid {
    BodyGrid::default_for(3).expect("default grid")
}

/// `[[I, I], [I, I]]`, written out independently of the library.
fn ambient_pseudo_metric() -> DMatrix<f64> {
    DMatrix::from_fn(6, 6, |r, c| if r % 3 == c % 3 { 1.0 } else { 0.0 })
}

fn uniform(rng: &mut ChaCha8Rng, scale: f64) -> f64 {
    scale * rng.random_range(-1.0..1.0)
}

fn random_dvec(rng: &mut ChaCha8Rng, k: usize) -> DVector<f64> {
    DVector::from_fn(k, |_, _| uniform(rng, 1.0))
}

fn random_setup(rng: &mut ChaCha8Rng) -> (Metric, AffineConnection, SolderForm, Vector3<f64>) {
    let a = DMatrix::from_fn(3, 3, |_, _| uniform(rng, 1.0));
    let g = Metric::new(a.transpose() * &a + DMatrix::identity(3, 3)).expect("spd");
    let gamma = AffineConnection(AffineCoeffs {
        c0: DMatrix::from_fn(3, 3, |_, _| uniform(rng, 0.5)),
        c1: (0..3).map(|_| Matrix3::from_fn(|_, _| uniform(rng, 0.5))).collect(),
    });
    let theta = SolderForm::new(AffineCoeffs {
        c0: DMatrix::identity(3, 3) + DMatrix::from_fn(3, 3, |_, _| uniform(rng, 0.2)),
        c1: (0..3).map(|_| Matrix3::from_fn(|_, _| uniform(rng, 0.03))).collect(),
    })
    .expect("solder");
    let y = Vector3::from_fn(|_, _| uniform(rng, 1.0));
    (g, gamma, theta, y)
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut residual: f64 = 0.0;
    for _ in 0..100 {
        let (g, gamma, theta, y) = random_setup(&mut rng);
        let gt = compatible_pseudo_metric(&g, &gamma, &theta, &y).map_err(s)?;
        let samples: Vec<CompatSample> = (0..100)
            .map(|_| CompatSample {
                u: random_dvec(&mut rng, 3),
                w: random_dvec(&mut rng, 3),
                u2: random_dvec(&mut rng, 3),
                w2: random_dvec(&mut rng, 3),
            })
            .collect();
        residual = residual.max(compatibility_residual(&gt, &g, &gamma, &theta, &y, &samples));
    }
    ensure(residual <= 1e-12, || format!("compatibility residual {residual:e}"))?;

    // independent oracle: least squares on the 21 entries of a symmetric 6×6 form
    let pairs: Vec<(usize, usize)> = (0..6).flat_map(|i| (i..6).map(move |j| (i, j))).collect();
    let mut recovered: f64 = 0.0;
    for _ in 0..5 {
        let (g, gamma, theta, y) = random_setup(&mut rng);
        let gt = compatible_pseudo_metric(&g, &gamma, &theta, &y).map_err(s)?;
        let m = 80;
        let mut a = DMatrix::zeros(m, pairs.len());
        let mut b = DVector::zeros(m);
        for row in 0..m {
            let (u, w, u2, w2) =
                (random_dvec(&mut rng, 3), random_dvec(&mut rng, 3), random_dvec(&mut rng, 3), random_dvec(&mut rng, 3));
            let p = theta.lift(&y, &u) + gamma.lift(&y, &w);
            let q = theta.lift(&y, &u2) + gamma.lift(&y, &w2);
            for (k, &(i, j)) in pairs.iter().enumerate() {
                a[(row, k)] = if i == j { p[i] * q[i] } else { p[i] * q[j] + p[j] * q[i] };
            }
            b[row] = ((&u + &w).transpose() * g.matrix() * (&u2 + &w2))[0];
        }
        let x = a.svd(true, true).solve(&b, 1e-14).map_err(s)?;
        for (k, &(i, j)) in pairs.iter().enumerate() {
            recovered = recovered.max((x[k] - gt.matrix()[(i, j)]).abs());
        }
    }
    ensure(recovered <= 1e-9, || format!("least-squares recovery differs by {recovered:e}"))?;
    Ok(format!("residual {residual:.1e} over 10^4 quadruples; least-squares recovery {recovered:.1e}"))
}

/// Largest `sin` of the principal angles between two subspaces given by
/// orthonormal columns.
fn subspace_gap(q1: &DMatrix<f64>, q2: &DMatrix<f64>) -> f64 {
    let proj = q1 * q1.transpose();
    let r = q2 - &proj * q2;
    r.singular_values().max()
}

fn kernel_check(p: &PlacementPoint, y: &Vector3<f64>, gtilde: &DMatrix<f64>) -> Result<f64, String> {
    let f = p.total(y);
    let gt = f.transpose() * gtilde * &f;
    let eig = SymmetricEigen::new((&gt + gt.transpose()) * 0.5);
    let lmax = eig.eigenvalues.amax();
    let cols: Vec<usize> = (0..6).filter(|&i| eig.eigenvalues[i].abs() <= 1e-9 * lmax).collect();
    if cols.len() != 3 {
        return Err(format!("kernel dimension {}", cols.len()));
    }
    let k = DMatrix::from_fn(6, 3, |r, c| eig.eigenvectors[(r, cols[c])]);
    let fvv_inv = p.fvv.try_inverse().ok_or("singular Fvv")?;
    let fvv_inv = DMatrix::from_column_slice(3, 3, fvv_inv.as_slice());
    let w = -(&fvv_inv * p.coupling(y)) - &fvv_inv * &p.fhh;
    let mut h = DMatrix::zeros(6, 3);
    h.view_mut((0, 0), (3, 3)).fill_with_identity();
    h.view_mut((3, 0), (3, 3)).copy_from(&w);
    let hq = h.qr().q();
    Ok(subspace_gap(&k, &hq).max(subspace_gap(&hq, &k)))
}

fn criterion_2() -> Outcome {
    let grid = default_grid();
    let gtilde = ambient_pseudo_metric();
    let interior = grid.interior_indices(grid.order().radius());
    let mut worst: f64 = 0.0;
    for b in Builtin::corpus() {
        let f = b.sample(&grid).map_err(s)?;
        let angles = interior
            .par_iter()
            .map(|&i| {
                let mut a: f64 = 0.0;
                for y in grid.fiber_samples() {
                    a = a.max(kernel_check(f.point(i), y, &gtilde).map_err(|e| format!("{} node {i}: {e}", b.name()))?);
                }
                Ok(a)
            })
            .collect::<Result<Vec<f64>, String>>()?;
        let a = angles.into_iter().fold(0.0, f64::max);
        ensure(a <= 1e-7, || format!("{}: principal angle {a:e}", b.name()))?;
        worst = worst.max(a);
    }
    Ok(format!("dim ker = 3 at every interior node of 8 families; max angle {worst:.1e}"))
}

fn corpus_checks() -> Result<Vec<(String, FirstOrderPlacement, microkin::pullback::PullbackChecks)>, String> {
    let grid = default_grid();
    Builtin::corpus()
        .into_iter()
        .map(|b| {
            let f = b.sample(&grid).map_err(s)?;
            let c = pullback_checks(&f, &AmbientSpace::default(), 11).map_err(s)?;
            Ok((b.name().to_string(), f, c))
        })
        .collect()
}

fn criterion_3() -> Outcome {
    let (mut routes, mut reference): (f64, f64) = (0.0, 0.0);
    for (name, _, c) in corpus_checks()? {
        ensure(c.connection_routes <= 1e-10, || format!("{name}: connection routes {:e}", c.connection_routes))?;
        ensure(c.pseudo_metric_routes <= 1e-10, || format!("{name}: pseudo-metric routes {:e}", c.pseudo_metric_routes))?;
        ensure(c.reference_change <= 1e-9, || format!("{name}: reference change {:e}", c.reference_change))?;
        routes = routes.max(c.connection_routes).max(c.pseudo_metric_routes);
        reference = reference.max(c.reference_change);
    }
    Ok(format!("route gap {routes:.1e}; reference change {reference:.1e}"))
}

fn criterion_4() -> Outcome {
    let (mut roundtrip, mut macro_metric): (f64, f64) = (0.0, 0.0);
    for (name, f, c) in corpus_checks()? {
        ensure(c.roundtrip <= 1e-9, || format!("{name}: roundtrip {:e}", c.roundtrip))?;
        ensure(c.macro_metric <= 1e-10, || format!("{name}: macro metric {:e}", c.macro_metric))?;
        // direct oracle: Θ = Fvv⁻¹Fhh, G̃_v^v = FvvᵀFvv, Ḡ = FhhᵀFhh
        for p in &f.blocks {
            let fvv = DMatrix::from_column_slice(3, 3, p.fvv.as_slice());
            let theta = fvv.clone().try_inverse().ok_or("singular Fvv")? * &p.fhh;
            let gvv = fvv.transpose() * &fvv;
            let d = (theta.transpose() * gvv * &theta - p.fhh.transpose() * &p.fhh).amax();
            ensure(d <= 1e-10, || format!("{name}: direct macro metric {d:e}"))?;
        }
        roundtrip = roundtrip.max(c.roundtrip);
        macro_metric = macro_metric.max(c.macro_metric);
    }
    Ok(format!("roundtrip {roundtrip:.1e}; macro metric {macro_metric:.1e}"))
}

fn criterion_5() -> Outcome {
    let grid = default_grid();
    let f = Builtin::Shear { kappa: 0.3 }.sample(&grid).map_err(s)?;
    let expect = DMatrix::from_row_slice(3, 3, &[1.0, 0.3, 0.0, 0.3, 1.09, 0.0, 0.0, 0.0, 1.0]);
    let amb = AmbientSpace::default();
    let d = f.blocks.iter().map(|p| (cauchy_green(&p.fhh, &amb) - &expect).amax()).fold(0.0, f64::max);
    ensure(d <= 1e-12, || format!("Cauchy-Green differs by {d:e}"))?;
    Ok(format!("max entry error {d:.1e}"))
}

fn criterion_6() -> Outcome {
    let grid = default_grid();
    let mut worst = [0.0_f64; 4];
    for (k, b) in Builtin::corpus().into_iter().enumerate() {
        let f = b.sample(&grid).map_err(s)?;
        let d = frame_invariance_deviation(&f, 100, 600 + k as u64).map_err(s)?.components();
        ensure(d[..3].iter().all(|v| *v <= 1e-9) && d[3] <= 1e-6, || format!("{}: deviations {d:?}", b.name()))?;
        for i in 0..4 {
            worst[i] = worst[i].max(d[i]);
        }
    }
    Ok(format!(
        "100 elements x 8 families; algebraic {:.1e}, holonomic {:.1e}",
        worst[..3].iter().cloned().fold(0.0, f64::max),
        worst[3]
    ))
}

fn criterion_7() -> Outcome {
    let grid = default_grid();
    let mut smallest_change = f64::INFINITY;
    let mut largest_other: f64 = 0.0;
    for b in Builtin::corpus() {
        let f = b.sample(&grid).map_err(s)?;
        let base = principal_invariants(&f).map_err(s)?;
        for target in MinimalityTarget::ALL {
            let g = minimality_counterexample(&f, target);
            let d = base.deviation(&principal_invariants(&g).map_err(s)?, &grid, boundary_width(&f));
            let k = target.component();
            ensure(d[k] >= 1e-3, || format!("{} / {}: targeted change {:e}", b.name(), target.name(), d[k]))?;
            for (i, v) in d.iter().enumerate().filter(|(i, _)| *i != k) {
                let tol = if i == 3 { 1e-6 } else { 1e-9 };
                ensure(*v <= tol, || format!("{} / {}: component {i} moved by {v:e}", b.name(), target.name()))?;
                largest_other = largest_other.max(*v);
            }
            smallest_change = smallest_change.min(d[k]);
        }
    }
    let f = Builtin::Dilate { lambda: 2.0 }.sample(&grid).map_err(s)?;
    let id = Builtin::Id.sample(&grid).map_err(s)?;
    let g = minimality_counterexample(&f, MinimalityTarget::MicroMetric);
    let (qf, qg, qi) = (
        principal_invariants(&f).map_err(s)?,
        principal_invariants(&g).map_err(s)?,
        principal_invariants(&id).map_err(s)?,
    );
    let mut scale: f64 = 0.0;
    for i in 0..grid.len() {
        scale = scale.max((qg.micro_metric[i] - qf.micro_metric[i] * 4.0).amax());
        scale = scale.max((qf.micro_metric[i] - qi.micro_metric[i] * 4.0).amax());
    }
    ensure(scale <= 1e-12, || format!("micro-metric scaling off by {scale:e}"))?;
    Ok(format!(
        "smallest targeted change {smallest_change:.2e}; largest other {largest_other:.1e}; x4 scaling {scale:.1e}"
    ))
}

fn pseudo_metric_equal(f: &FirstOrderPlacement, g: &FirstOrderPlacement, tol: f64) -> bool {
    let gtilde = ambient_pseudo_metric();
    let grid = f.grid();
    !grid.interior_indices(boundary_width(f)).par_iter().any(|&i| {
        grid.fiber_samples().iter().any(|y| {
            let (a, b) = (f.point(i).total(y), g.point(i).total(y));
            (a.transpose() * &gtilde * &a - b.transpose() * &gtilde * &b).amax() > tol
        })
    })
}

fn criterion_8() -> Outcome {
    let grid = default_grid();
    let mut items: Vec<(String, FirstOrderPlacement)> = Vec::new();
    for b in Builtin::corpus().into_iter().filter(|b| b.is_micro_linear()) {
        let f = b.sample(&grid).map_err(s)?;
        items.push((format!("{}*A", b.name()), act(&random_linear_galilean(800 + items.len() as u64), &f)));
        items.push((b.name().to_string(), f));
    }
    for k in 0..10u64 {
        let f = random_placement(&grid, 900 + k, true).map_err(s)?;
        items.push((format!("random{k}*A"), act(&random_linear_galilean(950 + k), &f)));
        items.push((format!("random{k}"), f));
    }
    let invariants = items.iter().map(|(_, f)| principal_invariants(f)).collect::<Result<Vec<_>, _>>().map_err(s)?;
    let width = boundary_width(&items[0].1);
    let (mut same, mut different) = (0, 0);
    for i in 0..items.len() {
        for j in (i + 1)..items.len() {
            let d = invariants[i].deviation(&invariants[j], &grid, width);
            let orbit = d[..3].iter().all(|v| *v <= 1e-9) && d[3] <= 1e-6;
            let metric = pseudo_metric_equal(&items[i].1, &items[j].1, 1e-9);
            ensure(orbit == metric, || {
                format!("{} vs {}: pseudo-metric equal {metric}, orbit equal {orbit} ({d:?})", items[i].0, items[j].0)
            })?;
            if orbit {
                same += 1;
            } else {
                different += 1;
            }
        }
    }
    ensure(same >= 16, || format!("only {same} equal pairs"))?;
    Ok(format!("{} placements: {same} equal pairs, {different} distinct pairs, no disagreement", items.len()))
}

/// `φ^v = I + M(X)`, `t^v` smooth, with the exact gradient as coupling: a flat
/// connection with nonconstant coefficients.
fn gauge_connection() -> impl ConnectionField {
    let m = |x: &[f64]| {
        Matrix3::new(
            0.2 * (x[0] + x[1]).sin(),
            0.1 * x[2] * x[0],
            0.0,
            0.15 * x[1] * x[1],
            0.1 * (2.0 * x[2]).cos(),
            0.05 * x[0],
            0.0,
            0.1 * x[1] * x[2],
            0.2 * x[0] * x[1],
        )
    };
    let dm = |x: &[f64], j: usize| match j {
        0 => Matrix3::new(0.2 * (x[0] + x[1]).cos(), 0.1 * x[2], 0.0, 0.0, 0.0, 0.05, 0.0, 0.0, 0.2 * x[1]),
        1 => Matrix3::new(0.2 * (x[0] + x[1]).cos(), 0.0, 0.0, 0.3 * x[1], 0.0, 0.0, 0.0, 0.1 * x[2], 0.2 * x[0]),
        _ => Matrix3::new(0.0, 0.1 * x[0], 0.0, 0.0, -0.2 * (2.0 * x[2]).sin(), 0.0, 0.0, 0.1 * x[1], 0.0),
    };
    let dt = |x: &[f64]| {
        DMatrix::from_row_slice(
            3,
            3,
            &[
                0.3 * (x[0] + x[1]).cos(),
                0.3 * (x[0] + x[1]).cos(),
                0.0,
                -0.3 * x[2] * (x[2] * x[0]).sin(),
                0.0,
                -0.3 * x[0] * (x[2] * x[0]).sin(),
                0.0,
                0.6 * x[1],
                0.0,
            ],
        )
    };
    AnalyticConnection {
        n: 3,
        f: move |x: &[f64]| {
            let inv = (Matrix3::identity() + m(x)).try_inverse().expect("invertible");
            let invd = DMatrix::from_column_slice(3, 3, inv.as_slice());
            AffineConnection(AffineCoeffs { c0: -(invd * dt(x)), c1: (0..3).map(|j| -(inv * dm(x, j))).collect() })
        },
    }
}

fn loop_order<C: ConnectionField>(gamma: &C, sides: &[f64]) -> Result<Option<f64>, String> {
    let center = [0.5, 0.5, 0.5];
    let mut pts = Vec::new();
    for &side in sides {
        let mut d: f64 = 0.0;
        for plane in [(0, 1), (0, 2), (1, 2)] {
            let l = loop_defect(gamma, &center, plane, side, 8).map_err(s)?;
            d = d.max(l.linear_part.norm() + l.translation_part.norm());
        }
        if d > 1e-14 {
            pts.push((side.ln(), d.ln()));
        }
    }
    if pts.len() < 2 {
        return Ok(None);
    }
    let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
    Ok(Some(linear_fit(&x, &y).0))
}

fn criterion_9() -> Outcome {
    let sides = [0.4, 0.3, 0.2, 0.1];
    let mut notes = Vec::new();
    for b in Builtin::corpus().into_iter().filter(|b| b.is_holonomic()) {
        let bb = b.clone();
        let gamma = AnalyticConnection { n: 3, f: move |x: &[f64]| material_connection_at(&bb.point_at(x), 0).expect("Fvv") };
        match loop_order(&gamma, &sides)? {
            None => notes.push(format!("{} flat", b.name())),
            Some(order) => {
                ensure(order >= 2.5, || format!("{}: loop-defect order {order:.2}", b.name()))?;
                notes.push(format!("{} order {order:.1}", b.name()));
            }
        }
    }
    let order = loop_order(&gauge_connection(), &sides)?.ok_or("gauge field shows no signal")?;
    ensure(order >= 2.5, || format!("gauge field: loop-defect order {order:.2}"))?;
    notes.push(format!("gauge order {order:.1}"));

    let grid = default_grid();
    let f = Builtin::Wry { a: 0.3 }.sample(&grid).map_err(s)?;
    let gamma = material_connection_field(&f).map_err(s)?;
    let (mut area, mut defect) = (Vec::new(), Vec::new());
    for k in 1..=6 {
        let side = 0.05 * k as f64;
        let l = loop_defect(&gamma, &[0.5, 0.5, 0.5], (0, 1), side, 16).map_err(s)?;
        area.push(l.loop_area);
        defect.push(l.linear_part.norm());
    }
    let (coef, _, r2) = linear_fit(&area, &defect);
    ensure(r2 >= 0.99 && coef > 0.0, || format!("WRY fit: coefficient {coef:e}, R^2 {r2}"))?;
    Ok(format!("{}; WRY coefficient {coef:.3}, R^2 {r2:.5}", notes.join(", ")))
}

fn criterion_10() -> Outcome {
    let transport_error = |a: Matrix3<f64>, len: f64, steps: usize| -> Result<f64, String> {
        let gamma = UniformConnection(AffineConnection(AffineCoeffs { c0: DMatrix::zeros(3, 1), c1: vec![a] }));
        let y0 = Vector3::new(1.0, -0.5, 0.25);
        let got = parallel_transport(&gamma, &[vec![0.0], vec![len]], &y0, steps).map_err(s)?;
        Ok((got - (a * len).exp() * y0).norm())
    };
    let a = Matrix3::new(0.3, -1.1, 0.4, 0.9, -0.2, -0.6, -0.5, 0.7, 0.1);
    let steps = [16usize, 32, 64, 128];
    let errs = steps.iter().map(|&k| transport_error(a, 0.8, k)).collect::<Result<Vec<_>, _>>()?;
    let (slope, _, _) = linear_fit(
        &steps.iter().map(|&k| (k as f64).ln()).collect::<Vec<_>>(),
        &errs.iter().map(|e| e.ln()).collect::<Vec<_>>(),
    );
    ensure((slope + 4.0).abs() <= 0.3, || format!("slope {slope:.3}, errors {errs:?}"))?;
    let small = transport_error(a * 0.25, 1.0, 64)?;
    ensure(small <= 1e-10, || format!("64-step error {small:e} for the small generator"))?;
    Ok(format!("|A| = {:.2}, slope {slope:.3}; small generator at 64 steps {small:.1e}", a.norm()))
}

const CORPUS: [&str; 50] = [
    "X1",
    "X2 + X3",
    "X1 + 0.5*X2",
    "sin(X1)*exp(-X2)",
    "1",
    "0.25",
    "1e-3",
    "2.5E+2 * X3",
    "-X1",
    "--X2",
    "-(X1 + X2)",
    "X1 - X2 - X3",
    "X1 - (X2 - X3)",
    "(X1 - X2) - X3",
    "X1 / X2 / X3",
    "X1 / (X2 / X3)",
    "X1 * X2 * X3",
    "X1 * (X2 * X3)",
    "(X1 + 1) * (X2 - 1)",
    "X1 + X2 * X3",
    "(X1 + X2) * X3",
    "sqrt(X1*X1 + X2*X2)",
    "cos(2*X1) - sin(X2)/3",
    "exp(-(X1 - 0.5)*(X1 - 0.5)/0.1)",
    "1/(1 + X1*X1)",
    "-1/(2 + X2)",
    "2 * -X3",
    "X1 * -2",
    "-(-(X1))",
    "((((X1))))",
    "sin(cos(exp(X1)))",
    "sqrt(sqrt(X2 + 4))",
    "0.3*X2 + X1",
    "X3 - 0.1*sin(6.283185307179586*X1)",
    "1 - 2 + 3 - 4",
    "1 - (2 + 3) - 4",
    "2*3/4*5",
    "2*(3/(4*5))",
    "-2*X1",
    "-(2*X1)",
    "(-2)*X1",
    "X1*X1*X1 - 3*X1*X2*X2",
    "exp(X1)*cos(X2) + exp(X2)*sin(X1)",
    "0.1 * (X1 + X2 + X3)",
    ".5 + 5.",
    "3.141592653589793 * X2",
    "1e10 * X1 / 1e10",
    "cos(X1)*cos(X1) + sin(X1)*sin(X1)",
    "-sqrt(X3 + 1) * -exp(-X1)",
    "X2/(X1 + 2) - X3/(X2 + 2)",
];

fn run_binary(scenario: &Path, out: &Path, threads: &str) -> Result<(i32, Vec<u8>), String> {
    let status = Command::new(env!("CARGO_BIN_EXE_microkin"))
        .arg("run")
        .arg(scenario)
        .args(["--seed", "7", "--out"])
        .arg(out)
        .env("MICROKIN_THREADS", threads)
        .output()
        .map_err(s)?;
    let report = std::fs::read(out.join("report.json")).map_err(s)?;
    Ok((status.status.code().unwrap_or(-1), report))
}

fn criterion_11() -> Outcome {
    for text in CORPUS {
        let e = parse_expression(text).map_err(|e| format!("{text}: {e}"))?;
        let once = e.to_string();
        let e2 = parse_expression(&once).map_err(|e| format!("{once}: {e}"))?;
        ensure(e2 == e, || format!("'{text}' reparsed differently from '{once}'"))?;
        let twice = e2.to_string();
        ensure(once == twice, || format!("'{once}' printed as '{twice}'"))?;
    }

    let dir = tempfile::tempdir().map_err(s)?;
    let scenario = dir.path().join("shear.json");
    std::fs::write(
        &scenario,
        r#"{"grid": {"dim": 3, "count": 17, "order": 4},
            "placement": {"family": "SHEAR", "params": {"kappa": 0.3}},
            "suites": ["all"], "seed": 1}"#,
    )
    .map_err(s)?;
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let (code_a, report_a) = run_binary(&scenario, &a, "1")?;
    let (code_b, report_b) = run_binary(&scenario, &b, "4")?;
    ensure(code_a == 0 && code_b == 0, || format!("exit codes {code_a}, {code_b}"))?;
    ensure(report_a == report_b, || "reports differ between runs".into())?;
    for field in ["Gbar", "Gvv", "Theta", "Gamma", "GammaHolo", "embedding", "defects"] {
        let fa = std::fs::read(a.join("fields").join(format!("{field}.csv"))).map_err(s)?;
        let fb = std::fs::read(b.join("fields").join(format!("{field}.csv"))).map_err(s)?;
        ensure(fa == fb, || format!("{field}.csv differs between runs"))?;
    }
    Ok(format!("{} expressions round-trip; seed 7 reports byte-identical across 1 and 4 threads", CORPUS.len()))
}

fn main() {
    let criteria: [(u32, &str, u64, fn() -> Outcome); 11] = [
        (1, "compatibility & uniqueness", 30, criterion_1),
        (2, "kernel law", 30, criterion_2),
        (3, "pull-back dual path", 30, criterion_3),
        (4, "data equivalence roundtrip", 30, criterion_4),
        (5, "classical limit", 30, criterion_5),
        (6, "frame invariance", 120, criterion_6),
        (7, "strong minimality", 30, criterion_7),
        (8, "micro-linear completeness", 30, criterion_8),
        (9, "holonomy dichotomy", 60, criterion_9),
        (10, "transport integrator order", 30, criterion_10),
        (11, "parser & determinism", 30, criterion_11),
    ];
    let only: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (k, name, limit, run) in criteria {
        if !only.is_empty() && !only.contains(&k) {
            continue;
        }
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|m| m.to_string())).unwrap_or_else(|| "panic".into()))
        });
        let elapsed = start.elapsed();
        let result = match result {
            Ok(msg) if elapsed > Duration::from_secs(limit) => {
                Err(format!("{msg}; runtime {:.1}s exceeds {limit}s", elapsed.as_secs_f64()))
            }
            other => other,
        };
        let (verdict, msg) = match result {
            Ok(m) => ("PASS", m),
            Err(m) => {
                failed += 1;
                ("FAIL", m)
            }
        };
        println!("{verdict} criterion {k:>2} {name:<28} {:>6.1}s  {msg}", elapsed.as_secs_f64());
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
