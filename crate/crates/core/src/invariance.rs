//! Galilean action on placements, orbit comparison through the principal
//! invariants, the minimality counterexamples and vectorial reconstruction.

use nalgebra::{DMatrix, Matrix3, Rotation3, SymmetricEigen, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ambient::{random_galilean, GalileanElement};
use crate::error::{Error, Result};
use crate::placement::{FirstOrderPlacement, PlacementPoint};
use crate::pullback::{principal_invariants, InvariantQuadruplet};

pub const ALGEBRAIC_TOL: f64 = 1e-9;
pub const FD_TOL: f64 = 1e-6;

/// `A ∘ F` for a Galilean element acting on the ambient space.
pub fn act(a: &GalileanElement, f: &FirstOrderPlacement) -> FirstOrderPlacement {
    let r = a.r;
    let rd = DMatrix::from_column_slice(3, 3, r.as_slice());
    let mut out = f.clone();
    for v in &mut out.punctual.phi_bar {
        *v = r * *v + a.t_bar;
    }
    for m in &mut out.punctual.phi_v {
        *m = r * *m;
    }
    for t in &mut out.punctual.t_v {
        *t = r * *t + a.t_v;
    }
    for b in &mut out.blocks {
        b.fhh = &rd * &b.fhh;
        b.fvv = r * b.fvv;
        b.tc = &rd * &b.tc;
        for l in &mut b.lc {
            *l = r * *l;
        }
    }
    out
}

/// Uniform total dilation of the ambient space composed with `f`.
pub fn dilate(f: &FirstOrderPlacement, lambda: f64) -> FirstOrderPlacement {
    let mut out = f.clone();
    out.punctual.phi_bar.iter_mut().for_each(|v| *v *= lambda);
    out.punctual.phi_v.iter_mut().for_each(|m| *m *= lambda);
    out.punctual.t_v.iter_mut().for_each(|t| *t *= lambda);
    for b in &mut out.blocks {
        b.fhh *= lambda;
        b.fvv *= lambda;
        b.tc *= lambda;
        b.lc.iter_mut().for_each(|l| *l *= lambda);
    }
    out
}

/// Orbit comparison ignores this many layers at each face.
pub fn boundary_width(f: &FirstOrderPlacement) -> usize {
    f.grid().order().radius()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeviationReport {
    pub micro_metric: f64,
    pub solder: f64,
    pub connection: f64,
    pub holonomic_connection: f64,
    pub seeds: Vec<u64>,
    pub algebraic_tol: f64,
    pub fd_tol: f64,
    pub pass: bool,
}

impl DeviationReport {
    fn from_max(d: [f64; 4], seeds: Vec<u64>) -> Self {
        let pass = d[0] <= ALGEBRAIC_TOL && d[1] <= ALGEBRAIC_TOL && d[2] <= ALGEBRAIC_TOL && d[3] <= FD_TOL;
        Self {
            micro_metric: d[0],
            solder: d[1],
            connection: d[2],
            holonomic_connection: d[3],
            seeds,
            algebraic_tol: ALGEBRAIC_TOL,
            fd_tol: FD_TOL,
            pass,
        }
    }

    pub fn components(&self) -> [f64; 4] {
        [self.micro_metric, self.solder, self.connection, self.holonomic_connection]
    }
}

/// Per-element seeds derived from a master seed.
pub fn derive_seeds(seed: u64, count: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| rng.random()).collect()
}

pub fn frame_invariance_deviation(f: &FirstOrderPlacement, count: usize, seed: u64) -> Result<DeviationReport> {
    let base = principal_invariants(f)?;
    let seeds = derive_seeds(seed, count);
    let width = boundary_width(f);
    let devs = seeds
        .par_iter()
        .map(|&s| {
            let moved = act(&random_galilean(s), f);
            Ok(base.deviation(&principal_invariants(&moved)?, f.grid(), width))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut d = [0.0_f64; 4];
    for v in devs {
        for k in 0..4 {
            d[k] = d[k].max(v[k]);
        }
    }
    Ok(DeviationReport::from_max(d, seeds))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MinimalityTarget {
    MicroMetric,
    Solder,
    Connection,
    Holonomic,
}

impl MinimalityTarget {
    pub const ALL: [MinimalityTarget; 4] = [Self::MicroMetric, Self::Solder, Self::Connection, Self::Holonomic];

    /// Position of the targeted component in an invariant quadruplet.
    pub fn component(self) -> usize {
        match self {
            Self::MicroMetric => 0,
            Self::Solder => 1,
            Self::Connection => 2,
            Self::Holonomic => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::MicroMetric => "micro_metric",
            Self::Solder => "solder",
            Self::Connection => "connection",
            Self::Holonomic => "holonomic",
        }
    }
}

fn quarter_turn() -> Matrix3<f64> {
    Rotation3::from_axis_angle(&Vector3::z_axis(), std::f64::consts::FRAC_PI_2).into_inner()
}

/// A placement that differs from `f` in exactly one principal invariant.
pub fn minimality_counterexample(f: &FirstOrderPlacement, target: MinimalityTarget) -> FirstOrderPlacement {
    match target {
        MinimalityTarget::MicroMetric => dilate(f, 2.0),
        MinimalityTarget::Solder => {
            let q = quarter_turn();
            let qd = DMatrix::from_column_slice(3, 3, q.as_slice());
            let mut out = f.clone();
            out.punctual.phi_bar.iter_mut().for_each(|v| *v = q * *v);
            out.blocks.iter_mut().for_each(|b| b.fhh = &qd * &b.fhh);
            out
        }
        MinimalityTarget::Connection => {
            let n = f.grid().dim();
            let q = quarter_turn();
            let mut out = f.clone();
            for b in &mut out.blocks {
                let shift = b.fvv * q;
                b.tc += DMatrix::from_fn(3, n, |r, c| shift[(r, c)]);
            }
            out
        }
        MinimalityTarget::Holonomic => {
            // the shadow gains τ(φ̄) with τ(x) = x₁·e₂; the coupling is left alone
            let mut out = f.clone();
            for (t, x) in out.punctual.t_v.iter_mut().zip(&f.punctual.phi_bar) {
                *t += Vector3::y() * x.x;
            }
            out
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrbitTolerance {
    pub algebraic: f64,
    pub fd: f64,
}

impl Default for OrbitTolerance {
    fn default() -> Self {
        Self { algebraic: ALGEBRAIC_TOL, fd: FD_TOL }
    }
}

pub fn orbit_deviation(f1: &FirstOrderPlacement, f2: &FirstOrderPlacement) -> Result<[f64; 4]> {
    if f1.grid() != f2.grid() {
        return Err(Error::Inconsistent("placements live on different bodies".into()));
    }
    let (q1, q2) = (principal_invariants(f1)?, principal_invariants(f2)?);
    Ok(q1.deviation(&q2, f1.grid(), boundary_width(f1)))
}

pub fn orbits_equal(f1: &FirstOrderPlacement, f2: &FirstOrderPlacement, tol: OrbitTolerance) -> Result<bool> {
    let d = orbit_deviation(f1, f2)?;
    Ok(d[0] <= tol.algebraic && d[1] <= tol.algebraic && d[2] <= tol.algebraic && d[3] <= tol.fd)
}

fn left_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if m.is_square() {
        return m.clone().try_inverse().ok_or(Error::NotInvertible);
    }
    crate::geometry::left_inverse(m)
}

/// `Mat(F)(X) = F_X·(Fref_X)⁻¹` in holonomic coordinates, at fiber point `y`.
pub fn matrix_in_reference(
    f: &FirstOrderPlacement,
    fref: &FirstOrderPlacement,
    y: &Vector3<f64>,
) -> Result<Vec<DMatrix<f64>>> {
    if f.grid() != fref.grid() {
        return Err(Error::Inconsistent("placements live on different bodies".into()));
    }
    (0..f.len())
        .map(|i| {
            let inv = left_inverse(&fref.total_map(i, y)).map_err(|_| Error::Singular(i))?;
            Ok(f.total_map(i, y) * inv)
        })
        .collect()
}

fn spd_sqrt(m: &Matrix3<f64>) -> Option<Matrix3<f64>> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    if eig.eigenvalues.min() <= 0.0 {
        return None;
    }
    let d = Matrix3::from_diagonal(&eig.eigenvalues.map(f64::sqrt));
    Some(eig.eigenvectors * d * eig.eigenvectors.transpose())
}

/// Canonical matrix of a Galilean representative of the orbit with invariants
/// `(G̃_v^v, Θ, Γ)`, expressed against `fref` at fiber point `y`.
///
/// The representative has `Fvv = U·Fref_vv` with `U` the SPD square root of
/// `Fref_vv⁻ᵀ·G̃_v^v·Fref_vv⁻¹`, `Fhh = Fvv·Θ` and `Fhv = −Fvv·W_Γ(y)`.
pub fn vectorial_reconstruction(
    inv: &InvariantQuadruplet,
    fref: &FirstOrderPlacement,
    y: &Vector3<f64>,
) -> Result<Vec<DMatrix<f64>>> {
    let n = fref.grid().dim();
    (0..fref.len())
        .map(|i| {
            let pr = fref.point(i);
            let rinv = pr.fvv_inverse().ok_or(Error::Singular(i))?;
            let u = spd_sqrt(&(rinv.transpose() * inv.micro_metric[i] * rinv))
                .ok_or_else(|| Error::Inconsistent(format!("micro-metric not positive definite at node {i}")))?;
            let fvv = u * pr.fvv;
            let fvv_d = DMatrix::from_column_slice(3, 3, fvv.as_slice());
            let theta = &inv.solder[i].coeffs().c0;
            let w = inv.connection[i].lift_coeff(y);
            let rep = PlacementPoint { fhh: &fvv_d * theta, fvv, tc: -(&fvv_d * &w), lc: vec![Matrix3::zeros(); n] };
            let inv_ref = left_inverse(&pr.total(y)).map_err(|_| Error::Singular(i))?;
            Ok(rep.total(&Vector3::zeros()) * inv_ref)
        })
        .collect()
}

/// Second route to the same representative: rotate `Mat(F)` back by the
/// orthogonal polar factor of its micro block.
pub fn polar_reconstruction(
    f: &FirstOrderPlacement,
    fref: &FirstOrderPlacement,
    y: &Vector3<f64>,
) -> Result<Vec<DMatrix<f64>>> {
    let mats = matrix_in_reference(f, fref, y)?;
    mats.into_iter()
        .map(|m| {
            let vv = m.view((3, 3), (3, 3)).into_owned();
            let svd = vv.svd(true, true);
            let q = svd.u.expect("u requested") * svd.v_t.expect("v_t requested");
            let mut qt = DMatrix::zeros(6, 6);
            qt.view_mut((0, 0), (3, 3)).copy_from(&q.transpose());
            qt.view_mut((3, 3), (3, 3)).copy_from(&q.transpose());
            Ok(qt * m)
        })
        .collect()
}

/// Seeded choice of Galilean elements with no micro translation.
pub fn random_linear_galilean(seed: u64) -> GalileanElement {
    let mut a = random_galilean(seed);
    a.t_v = Vector3::zeros();
    a
}
