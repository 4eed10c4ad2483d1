//! Parallel transport along base paths, covariant derivatives of sections and
//! loop defects of connections.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rayon::prelude::*;
use serde::Serialize;

use crate::body::{fd_partial, BodyGrid};
use crate::error::{Error, Result};
use crate::geometry::{solve_least_squares, AffineCoeffs, AffineConnection};
use crate::placement::FirstOrderPlacement;
use crate::pullback::{material_connection_at, material_solder_at};

/// Connection coefficients available at arbitrary base points.
pub trait ConnectionField: Sync {
    fn base_dim(&self) -> usize;
    fn at(&self, x: &[f64]) -> Result<AffineConnection>;
}

/// Same coefficients everywhere.
#[derive(Debug, Clone)]
pub struct UniformConnection(pub AffineConnection);

impl ConnectionField for UniformConnection {
    fn base_dim(&self) -> usize {
        self.0.base_dim()
    }

    fn at(&self, _x: &[f64]) -> Result<AffineConnection> {
        Ok(self.0.clone())
    }
}

/// Coefficients given by a closure.
pub struct AnalyticConnection<F> {
    pub n: usize,
    pub f: F,
}

impl<F: Fn(&[f64]) -> AffineConnection + Sync> ConnectionField for AnalyticConnection<F> {
    fn base_dim(&self) -> usize {
        self.n
    }

    fn at(&self, x: &[f64]) -> Result<AffineConnection> {
        Ok((self.f)(x))
    }
}

/// Nodal coefficients, interpolated multilinearly inside each cell.
#[derive(Debug, Clone)]
pub struct GridConnection {
    grid: BodyGrid,
    values: Vec<AffineConnection>,
}

impl GridConnection {
    pub fn new(grid: BodyGrid, values: Vec<AffineConnection>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch { expected: grid.len(), found: values.len() });
        }
        Ok(Self { grid, values })
    }

    pub fn values(&self) -> &[AffineConnection] {
        &self.values
    }
}

impl ConnectionField for GridConnection {
    fn base_dim(&self) -> usize {
        self.grid.dim()
    }

    fn at(&self, x: &[f64]) -> Result<AffineConnection> {
        let g = &self.grid;
        let n = g.dim();
        if !g.contains(x) {
            return Err(Error::PathOutsideGrid(x.to_vec()));
        }
        let mut cell = vec![0usize; n];
        let mut frac = vec![0.0; n];
        for a in 0..n {
            let s = (x[a] - g.origin()[a]) / g.spacing()[a];
            let i = (s.floor().max(0.0) as usize).min(g.counts()[a] - 2);
            cell[a] = i;
            frac[a] = (s - i as f64).clamp(0.0, 1.0);
        }
        let mut acc = AffineCoeffs::zeros(n);
        let mut corner = vec![0usize; n];
        for mask in 0..(1usize << n) {
            let mut w = 1.0;
            for a in 0..n {
                let up = (mask >> a) & 1 == 1;
                corner[a] = cell[a] + up as usize;
                w *= if up { frac[a] } else { 1.0 - frac[a] };
            }
            if w == 0.0 {
                continue;
            }
            let v = &self.values[g.index(&corner)].0;
            acc.c0 += &v.c0 * w;
            for (c, d) in acc.c1.iter_mut().zip(&v.c1) {
                *c += d * w;
            }
        }
        Ok(AffineConnection(acc))
    }
}

/// Classical fourth-order Runge–Kutta along each straight segment of `path`,
/// advancing all `states` together.
fn integrate<C: ConnectionField + ?Sized>(
    gamma: &C,
    path: &[Vec<f64>],
    states: &mut [Vector3<f64>],
    steps: usize,
) -> Result<()> {
    if steps == 0 {
        return Err(Error::InadmissibleParams("transport needs at least one step".into()));
    }
    for p in path {
        if p.len() != gamma.base_dim() {
            return Err(Error::DimensionMismatch { expected: gamma.base_dim(), found: p.len() });
        }
    }
    for seg in path.windows(2) {
        let (a, b) = (&seg[0], &seg[1]);
        let d = DVector::from_iterator(a.len(), a.iter().zip(b).map(|(p, q)| q - p));
        let at = |s: f64| -> Vec<f64> { a.iter().zip(b).map(|(p, q)| p + s * (q - p)).collect() };
        let h = 1.0 / steps as f64;
        let rhs = |c: &AffineConnection, y: &Vector3<f64>| -> Vector3<f64> {
            let v = c.lift_coeff(y) * &d;
            Vector3::new(v[0], v[1], v[2])
        };
        for k in 0..steps {
            let s = k as f64 * h;
            let c0 = gamma.at(&at(s))?;
            let c1 = gamma.at(&at(s + 0.5 * h))?;
            let c2 = gamma.at(&at(s + h))?;
            for y in states.iter_mut() {
                let k1 = rhs(&c0, y);
                let k2 = rhs(&c1, &(*y + k1 * (0.5 * h)));
                let k3 = rhs(&c1, &(*y + k2 * (0.5 * h)));
                let k4 = rhs(&c2, &(*y + k3 * h));
                *y += (k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0);
            }
        }
    }
    Ok(())
}

/// Transport of the fiber point `y0` along a polyline, `steps` per segment.
pub fn parallel_transport<C: ConnectionField + ?Sized>(
    gamma: &C,
    path: &[Vec<f64>],
    y0: &Vector3<f64>,
    steps: usize,
) -> Result<Vector3<f64>> {
    let mut s = [*y0];
    integrate(gamma, path, &mut s, steps)?;
    Ok(s[0])
}

/// The affine transport map `y ↦ M·y + t` along a polyline.
pub fn transport_map<C: ConnectionField + ?Sized>(
    gamma: &C,
    path: &[Vec<f64>],
    steps: usize,
) -> Result<(Matrix3<f64>, Vector3<f64>)> {
    let mut s = [Vector3::zeros(), Vector3::x(), Vector3::y(), Vector3::z()];
    integrate(gamma, path, &mut s, steps)?;
    let m = Matrix3::from_columns(&[s[1] - s[0], s[2] - s[0], s[3] - s[0]]);
    Ok((m, s[0]))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LoopDefect {
    /// `M − I` for the holonomy map `y ↦ M·y + t`.
    pub linear_part: Matrix3<f64>,
    pub translation_part: Vector3<f64>,
    pub loop_area: f64,
}

/// Counter-clockwise square in the `(plane.0, plane.1)` coordinate plane.
pub fn square_loop(center: &[f64], plane: (usize, usize), side: f64) -> Vec<Vec<f64>> {
    let r = 0.5 * side;
    [(-r, -r), (r, -r), (r, r), (-r, r), (-r, -r)]
        .iter()
        .map(|&(u, v)| {
            let mut p = center.to_vec();
            p[plane.0] += u;
            p[plane.1] += v;
            p
        })
        .collect()
}

pub fn loop_defect<C: ConnectionField + ?Sized>(
    gamma: &C,
    center: &[f64],
    plane: (usize, usize),
    side: f64,
    steps: usize,
) -> Result<LoopDefect> {
    let n = gamma.base_dim();
    if plane.0 >= n || plane.1 >= n || plane.0 == plane.1 {
        return Err(Error::InadmissibleParams(format!("plane {plane:?} in dimension {n}")));
    }
    let path = square_loop(center, plane, side);
    let (m, t) = transport_map(gamma, &path, steps)?;
    Ok(LoopDefect { linear_part: m - Matrix3::identity(), translation_part: t, loop_area: side * side })
}

/// `∇_ū σ = Dσ·ū − Σⱼ ūⱼ·C1ⱼ·σ` for a linear connection.
pub fn covariant_derivative(
    grid: &BodyGrid,
    gamma: &[AffineConnection],
    sigma: &[Vector3<f64>],
    u: &DVector<f64>,
) -> Result<Vec<Vector3<f64>>> {
    if gamma.iter().any(|g| !g.is_linear(1e-14)) {
        return Err(Error::AffineConnectionNotSupported);
    }
    let n = grid.dim();
    if u.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: u.len() });
    }
    let partials = (0..n).map(|a| fd_partial(grid, sigma, a)).collect::<Result<Vec<_>>>()?;
    Ok((0..grid.len())
        .map(|i| {
            let mut v = Vector3::zeros();
            for j in 0..n {
                v += (partials[j][i] - gamma[i].0.c1[j] * sigma[i]) * u[j];
            }
            v
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DefectField {
    /// Grid nodes at which every loop fits inside the body.
    pub nodes: Vec<usize>,
    /// Largest `‖M − I‖ / area` of the material connection over coordinate planes.
    pub curvature: Vec<f64>,
    /// Largest `‖t‖ / area` of the no-slip connection over coordinate planes.
    pub dislocation: Vec<f64>,
    pub side: f64,
}

pub const DEFECT_STEPS: usize = 16;

pub fn material_connection_field(f: &FirstOrderPlacement) -> Result<GridConnection> {
    let values = (0..f.len()).map(|i| material_connection_at(f.point(i), i)).collect::<Result<Vec<_>>>()?;
    GridConnection::new(f.grid().clone(), values)
}

pub fn noslip_connection_field(f: &FirstOrderPlacement) -> Result<GridConnection> {
    let values = (0..f.len())
        .map(|i| Ok(material_connection_at(f.point(i), i)?.minus_solder(&material_solder_at(f.point(i), i)?)))
        .collect::<Result<Vec<_>>>()?;
    GridConnection::new(f.grid().clone(), values)
}

pub fn defect_density_field(f: &FirstOrderPlacement, side: f64) -> Result<DefectField> {
    let grid = f.grid();
    let n = grid.dim();
    let hmax = grid.spacing().iter().cloned().fold(0.0, f64::max);
    if n < 2 {
        return Err(Error::InadmissibleParams("loops need a base of dimension at least 2".into()));
    }
    if side < 2.0 * hmax * (1.0 - 1e-12) {
        return Err(Error::InadmissibleParams(format!("loop side {side} below two grid steps")));
    }
    let gamma = material_connection_field(f)?;
    let noslip = noslip_connection_field(f)?;
    let planes: Vec<(usize, usize)> = (0..n).flat_map(|a| ((a + 1)..n).map(move |b| (a, b))).collect();
    let nodes: Vec<usize> = (0..grid.len())
        .filter(|&i| {
            let x = grid.coords(i);
            (0..n).all(|a| x[a] - 0.5 * side >= grid.origin()[a] - 1e-12 && x[a] + 0.5 * side <= grid.upper(a) + 1e-12)
        })
        .collect();
    let values = nodes
        .par_iter()
        .map(|&i| {
            let x = grid.coords(i);
            let mut curv: f64 = 0.0;
            let mut disl: f64 = 0.0;
            for &pl in &planes {
                let a = loop_defect(&gamma, &x, pl, side, DEFECT_STEPS)?;
                let b = loop_defect(&noslip, &x, pl, side, DEFECT_STEPS)?;
                curv = curv.max(a.linear_part.norm() / a.loop_area);
                disl = disl.max(b.translation_part.norm() / b.loop_area);
            }
            Ok((curv, disl))
        })
        .collect::<Result<Vec<_>>>()?;
    let (curvature, dislocation) = values.into_iter().unzip();
    Ok(DefectField { nodes, curvature, dislocation, side })
}

/// Least-squares line `y ≈ c·x + d` with its coefficient of determination.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let k = x.len();
    let a = DMatrix::from_fn(k, 2, |i, c| if c == 0 { x[i] } else { 1.0 });
    let b = DVector::from_column_slice(y);
    let sol = solve_least_squares(&a, &DMatrix::from_column_slice(k, 1, y)).expect("distinct abscissae");
    let pred = (&a * &sol).column(0).into_owned();
    let mean = y.iter().sum::<f64>() / k as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let ss_res: f64 = (&b - pred).norm_squared();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    (sol[0], sol[1], r2)
}
