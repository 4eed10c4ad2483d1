//! Pull-back of the ambient geometry through a first-order placement.
//!
//! With the ambient connection trivial in holonomic coordinates the material
//! connection has lift coefficient `−Fvv⁻¹·(Tc + Lc[Y])`, the material solder
//! form is `Fvv⁻¹·Fhh` and the micro-metric is `FvvᵀFvv`. The definition-level
//! and block-level routes are kept next to the closed forms so they can be
//! cross-checked.

use nalgebra::{DMatrix, Matrix3, Vector3};
use rayon::prelude::*;
use serde::Serialize;

use crate::ambient::AmbientSpace;
use crate::body::{reference_connection, BodyGrid, ReferenceConnection, ReferenceKind};
use crate::error::{Error, Result};
use crate::geometry::{
    block_decompose, orthonormalize, solve_least_squares, principal_angle, pseudo_metric_kernel, AffineCoeffs, AffineConnection, SolderForm, KERNEL_REL_TOL,
};
use crate::placement::{holonomic_lift, is_micro_linear, FirstOrderPlacement, PlacementPoint};

fn to_dyn(m: &Matrix3<f64>) -> DMatrix<f64> {
    DMatrix::from_column_slice(3, 3, m.as_slice())
}

fn fvv_inv(p: &PlacementPoint, idx: usize) -> Result<Matrix3<f64>> {
    p.fvv_inverse().ok_or(Error::Singular(idx))
}

/// Material connection at one node in closed form.
pub fn material_connection_at(p: &PlacementPoint, idx: usize) -> Result<AffineConnection> {
    let inv = fvv_inv(p, idx)?;
    Ok(AffineConnection(p.coupling_coeffs().premul(&(-inv))))
}

/// Lift coefficient of the pulled-back connection by solving `F·U = γ(F̄ū)`
/// for the vertical part of `U`.
pub fn connection_lift_by_definition(
    p: &PlacementPoint,
    y: &Vector3<f64>,
    amb: &AmbientSpace,
    y_image: &Vector3<f64>,
) -> Result<DMatrix<f64>> {
    let n = p.base_dim();
    let f = p.total(y);
    let fv = f.columns(n, 3).into_owned();
    let w_amb = amb.gamma.lift_coeff(y_image);
    let target_v = &w_amb * &p.fhh;
    let rhs = DMatrix::from_fn(6, n, |i, j| if i < 3 { p.fhh[(i, j)] } else { target_v[(i - 3, j)] })
        - f.columns(0, n);
    solve_least_squares(&fv, &rhs)
}

/// Lift coefficient through the block decomposition against `Γref`:
/// `h_Γ = h_Γref − Fvv⁻¹·F_h^v`.
pub fn connection_lift_by_blocks(
    p: &PlacementPoint,
    y: &Vector3<f64>,
    amb: &AmbientSpace,
    y_image: &Vector3<f64>,
    reference: &AffineConnection,
) -> Result<DMatrix<f64>> {
    let b = block_decompose(&p.total(y), reference, y, &amb.gamma, y_image);
    let vv_inv = b.vv.clone().try_inverse().ok_or(Error::NotInvertible)?;
    Ok(&b.src_lift - vv_inv * &b.hv)
}

/// Which of the two independent routes to take for the connection.
#[derive(Debug, Clone, Copy)]
pub enum Route<'a> {
    Definition,
    Blocks(&'a ReferenceConnection),
}

/// Pulled-back connection field, identified from evaluations at the fiber samples.
pub fn pull_back_connection(
    f: &FirstOrderPlacement,
    amb: &AmbientSpace,
    route: Route<'_>,
) -> Result<Vec<AffineConnection>> {
    let grid = f.grid();
    (0..f.len())
        .into_par_iter()
        .map(|idx| {
            let p = f.point(idx);
            let x = grid.coords(idx);
            let reference = match route {
                Route::Blocks(r) => Some(r.at(&x)),
                Route::Definition => None,
            };
            let samples = grid
                .fiber_samples()
                .iter()
                .map(|y| {
                    let (_, yi) = f.punctual.eval(idx, y);
                    let w = match &reference {
                        Some(r) => connection_lift_by_blocks(p, y, amb, &yi, r),
                        None => connection_lift_by_definition(p, y, amb, &yi),
                    }
                    .map_err(|_| Error::Singular(idx))?;
                    Ok((*y, w))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(AffineConnection(AffineCoeffs::fit(&samples)?))
        })
        .collect()
}

pub fn material_solder_at(p: &PlacementPoint, idx: usize) -> Result<SolderForm> {
    let inv = fvv_inv(p, idx)?;
    SolderForm::new(AffineCoeffs::constant(to_dyn(&inv) * &p.fhh)).map_err(|_| Error::Singular(idx))
}

/// `Θ` by solving `F·V = ϑ(F̄ū)` for the vertical vector `V`.
pub fn solder_by_definition(p: &PlacementPoint, y: &Vector3<f64>, amb: &AmbientSpace) -> Result<DMatrix<f64>> {
    let n = p.base_dim();
    let f = p.total(y);
    let fv = f.columns(n, 3).into_owned();
    let v = amb.theta.matrix(y) * &p.fhh;
    let rhs = DMatrix::from_fn(6, n, |i, j| if i < 3 { 0.0 } else { v[(i - 3, j)] });
    solve_least_squares(&fv, &rhs)
}

pub fn pull_back_solder(f: &FirstOrderPlacement) -> Result<Vec<SolderForm>> {
    (0..f.len()).map(|i| material_solder_at(f.point(i), i)).collect()
}

/// `G̃ = Fᵀ·g̃·F` at a fiber point.
pub fn pull_back_pseudo_metric_at(p: &PlacementPoint, y: &Vector3<f64>, amb: &AmbientSpace) -> DMatrix<f64> {
    let f = p.total(y);
    let g = f.transpose() * amb.g_tilde.matrix() * &f;
    (&g + g.transpose()) * 0.5
}

/// `G̃` assembled from the four block contributions relative to `Γref`.
pub fn pull_back_pseudo_metric_blocks(
    p: &PlacementPoint,
    y: &Vector3<f64>,
    amb: &AmbientSpace,
    y_image: &Vector3<f64>,
    reference: &AffineConnection,
) -> DMatrix<f64> {
    let n = p.base_dim();
    let b = block_decompose(&p.total(y), reference, y, &amb.gamma, y_image);
    // ambient pseudo-metric in the ambient adapted frame
    let pinv = crate::geometry::adapted_frame_inverse(&b.dst_lift);
    let ga = pinv.transpose() * amb.g_tilde.matrix() * &pinv;
    let (g_hh, g_hv, g_vh, g_vv) = (
        ga.view((0, 0), (3, 3)).into_owned(),
        ga.view((0, 3), (3, 3)).into_owned(),
        ga.view((3, 0), (3, 3)).into_owned(),
        ga.view((3, 3), (3, 3)).into_owned(),
    );
    let mut tpi = DMatrix::zeros(n, n + 3);
    tpi.view_mut((0, 0), (n, n)).fill_with_identity();
    let mut vref = DMatrix::zeros(3, n + 3);
    vref.view_mut((0, 0), (3, n)).copy_from(&(-&b.src_lift));
    vref.view_mut((0, n), (3, 3)).fill_with_identity();
    let xh = &b.hh * &tpi;
    let zv = &b.hv * &tpi + &b.vv * &vref;
    xh.transpose() * &g_hh * &xh
        + xh.transpose() * &g_hv * &zv
        + zv.transpose() * &g_vh * &xh
        + zv.transpose() * &g_vv * &zv
}

/// Right Cauchy–Green tensor `F̄ᵀ·g·F̄`.
pub fn cauchy_green(fhh: &DMatrix<f64>, amb: &AmbientSpace) -> DMatrix<f64> {
    fhh.transpose() * amb.g.matrix() * fhh
}

pub fn micro_metric_at(p: &PlacementPoint) -> Matrix3<f64> {
    p.fvv.transpose() * p.fvv
}

/// `(G̃_v^v, Θ, Γ, Γ_holo)` over the grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvariantQuadruplet {
    pub micro_metric: Vec<Matrix3<f64>>,
    pub solder: Vec<SolderForm>,
    pub connection: Vec<AffineConnection>,
    pub holonomic_connection: Vec<AffineConnection>,
}

pub const INVARIANT_NAMES: [&str; 4] = ["micro_metric", "solder", "connection", "holonomic_connection"];

impl InvariantQuadruplet {
    /// Largest Frobenius deviation of each component over nodes at least
    /// `width` away from the boundary.
    pub fn deviation(&self, other: &Self, grid: &BodyGrid, width: usize) -> [f64; 4] {
        let mut d = [0.0_f64; 4];
        for i in grid.interior_indices(width) {
            d[0] = d[0].max((self.micro_metric[i] - other.micro_metric[i]).norm());
            d[1] = d[1].max(self.solder[i].coeffs().sub(other.solder[i].coeffs()).norm());
            d[2] = d[2].max(self.connection[i].0.sub(&other.connection[i].0).norm());
            d[3] = d[3].max(self.holonomic_connection[i].0.sub(&other.holonomic_connection[i].0).norm());
        }
        d
    }

    /// Component-wise `II − II_ref`, giving tensorial quantities that vanish
    /// on the orbit of the reference.
    pub fn relative_to(&self, reference: &Self) -> InvariantDifference {
        InvariantDifference {
            micro_metric: self.micro_metric.iter().zip(&reference.micro_metric).map(|(a, b)| a - b).collect(),
            solder: self.solder.iter().zip(&reference.solder).map(|(a, b)| a.coeffs().sub(b.coeffs())).collect(),
            connection: self.connection.iter().zip(&reference.connection).map(|(a, b)| a.0.sub(&b.0)).collect(),
            holonomic_connection: self
                .holonomic_connection
                .iter()
                .zip(&reference.holonomic_connection)
                .map(|(a, b)| a.0.sub(&b.0))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvariantDifference {
    pub micro_metric: Vec<Matrix3<f64>>,
    pub solder: Vec<AffineCoeffs>,
    pub connection: Vec<AffineCoeffs>,
    pub holonomic_connection: Vec<AffineCoeffs>,
}

pub fn principal_invariants(f: &FirstOrderPlacement) -> Result<InvariantQuadruplet> {
    let lift = holonomic_lift(f.grid(), &f.punctual)?;
    let per_node = |idx: usize| -> Result<(Matrix3<f64>, SolderForm, AffineConnection, AffineConnection)> {
        let p = f.point(idx);
        Ok((
            micro_metric_at(p),
            material_solder_at(p, idx)?,
            material_connection_at(p, idx)?,
            material_connection_at(lift.point(idx), idx)?,
        ))
    };
    let nodes = (0..f.len()).map(per_node).collect::<Result<Vec<_>>>()?;
    let mut q = InvariantQuadruplet {
        micro_metric: Vec::with_capacity(nodes.len()),
        solder: Vec::with_capacity(nodes.len()),
        connection: Vec::with_capacity(nodes.len()),
        holonomic_connection: Vec::with_capacity(nodes.len()),
    };
    for (g, s, c, h) in nodes {
        q.micro_metric.push(g);
        q.solder.push(s);
        q.connection.push(c);
        q.holonomic_connection.push(h);
    }
    Ok(q)
}

/// Deviation of `(G̃_v^v, Θ)` from the same quantities pulled back by `Tφ`.
pub fn holonomic_form_residual(f: &FirstOrderPlacement) -> Result<(f64, f64)> {
    let lift = holonomic_lift(f.grid(), &f.punctual)?;
    let mut r = (0.0_f64, 0.0_f64);
    for idx in 0..f.len() {
        let (a, b) = (f.point(idx), lift.point(idx));
        r.0 = r.0.max((micro_metric_at(a) - micro_metric_at(b)).norm());
        let sa = material_solder_at(a, idx)?;
        let sb = material_solder_at(b, idx)?;
        r.1 = r.1.max(sa.coeffs().sub(sb.coeffs()).norm());
    }
    Ok(r)
}

/// `(G̃_v^v, N)` with `N` the lift coefficient of the connection whose
/// horizontal space is `ker G̃`.
pub fn decompose_pseudo_metric(gt: &DMatrix<f64>, n: usize) -> Result<(Matrix3<f64>, DMatrix<f64>)> {
    let k = pseudo_metric_kernel(gt, KERNEL_REL_TOL);
    if k.dim != n {
        return Err(Error::KernelDimMismatch { expected: n, found: k.dim });
    }
    let top = k.basis.rows(0, n).into_owned();
    let bottom = k.basis.rows(n, 3).into_owned();
    let top_inv = top
        .try_inverse()
        .ok_or_else(|| Error::Inconsistent("kernel is not a graph over the base".into()))?;
    let gvv = Matrix3::from_fn(|r, c| gt[(n + r, n + c)]);
    Ok((gvv, bottom * top_inv))
}

/// `G̃ = v_Nᵀ·G̃_v^v·v_N` with `v_N = [−N, I]`.
pub fn reconstruct_pseudo_metric(gvv: &Matrix3<f64>, noslip: &DMatrix<f64>) -> DMatrix<f64> {
    let n = noslip.ncols();
    let mut v = DMatrix::zeros(3, n + 3);
    v.view_mut((0, 0), (3, n)).copy_from(&(-noslip));
    v.view_mut((0, n), (3, 3)).fill_with_identity();
    v.transpose() * to_dyn(gvv) * v
}

/// Field version: the micro-metric and the no-slip connection `Γ − Θ`
/// recovered from the kernel of `G̃` at every node.
pub fn decompose_field(f: &FirstOrderPlacement, amb: &AmbientSpace) -> Result<(Vec<Matrix3<f64>>, Vec<AffineConnection>)> {
    let grid = f.grid();
    let n = grid.dim();
    let out = (0..f.len())
        .into_par_iter()
        .map(|idx| {
            let p = f.point(idx);
            let mut gvv = Matrix3::zeros();
            let mut samples = Vec::new();
            for y in grid.fiber_samples() {
                let (g, nmat) = decompose_pseudo_metric(&pull_back_pseudo_metric_at(p, y, amb), n)?;
                gvv = g;
                samples.push((*y, nmat));
            }
            Ok((gvv, AffineConnection(AffineCoeffs::fit(&samples)?)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(out.into_iter().unzip())
}

/// Linear part and minus the constant part of the no-slip connection.
pub fn split_noslip(noslip: &AffineConnection) -> Result<(AffineConnection, SolderForm)> {
    let n = noslip.base_dim();
    let gamma = AffineConnection(AffineCoeffs { c0: DMatrix::zeros(3, n), c1: noslip.0.c1.clone() });
    let theta = SolderForm::new(AffineCoeffs::constant(-&noslip.0.c0))?;
    Ok((gamma, theta))
}

pub fn microlinear_split(
    f: &FirstOrderPlacement,
    amb: &AmbientSpace,
) -> Result<(Vec<AffineConnection>, Vec<SolderForm>)> {
    if !is_micro_linear(f) {
        return Err(Error::NotMicroLinear);
    }
    let (_, noslip) = decompose_field(f, amb)?;
    let pairs = noslip.iter().map(split_noslip).collect::<Result<Vec<_>>>()?;
    Ok(pairs.into_iter().unzip())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EringenMeasures {
    /// `Θ·Tπ`, a `3 × (n+3)` matrix per node.
    pub deformation: Vec<DMatrix<f64>>,
    pub micro_deformation: Vec<Matrix3<f64>>,
    /// `h_Γref − h_Γ = Fvv⁻¹·Fhv`, as affine coefficients.
    pub wryness: Vec<AffineCoeffs>,
}

pub fn eringen_strain_measures(f: &FirstOrderPlacement) -> Result<EringenMeasures> {
    if !is_micro_linear(f) {
        return Err(Error::NotMicroLinear);
    }
    let n = f.grid().dim();
    let mut m = EringenMeasures { deformation: vec![], micro_deformation: vec![], wryness: vec![] };
    for idx in 0..f.len() {
        let p = f.point(idx);
        let theta = material_solder_at(p, idx)?;
        let mut d = DMatrix::zeros(3, n + 3);
        d.view_mut((0, 0), (3, n)).copy_from(&theta.coeffs().c0);
        m.deformation.push(d);
        m.micro_deformation.push(micro_metric_at(p));
        let gamma = material_connection_at(p, idx)?;
        m.wryness.push(gamma.0.scale(-1.0));
    }
    Ok(m)
}

/// Residuals of the internal consistency checks of the pull-back, maximised
/// over nodes and fiber samples.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PullbackChecks {
    /// Definition-level against block-level connection, trivial reference.
    pub connection_routes: f64,
    /// Block-level connection under the trivial against a randomized reference.
    pub reference_change: f64,
    /// `FᵀgF` against the four block contributions.
    pub pseudo_metric_routes: f64,
    /// Nodes where `dim ker G̃ ≠ n` at some fiber sample.
    pub kernel_dim_failures: usize,
    /// Largest principal angle between `ker G̃` and the horizontal space of `Γ − Θ`.
    pub kernel_angle: f64,
    /// `reconstruct ∘ decompose` against `G̃`.
    pub roundtrip: f64,
    /// `ΘᵀG̃_v^vΘ` against `Ḡ`.
    pub macro_metric: f64,
}

pub fn pullback_checks(f: &FirstOrderPlacement, amb: &AmbientSpace, reference_seed: u64) -> Result<PullbackChecks> {
    let grid = f.grid();
    let n = grid.dim();
    let trivial = reference_connection(ReferenceKind::CanonicalTrivial, n);
    let random = reference_connection(ReferenceKind::Randomized(reference_seed), n);
    let by_def = pull_back_connection(f, amb, Route::Definition)?;
    let by_blocks = pull_back_connection(f, amb, Route::Blocks(&trivial))?;
    let by_random = pull_back_connection(f, amb, Route::Blocks(&random))?;
    let per_node = (0..f.len())
        .into_par_iter()
        .map(|idx| {
            let p = f.point(idx);
            let r = random.at(&grid.coords(idx));
            let theta = material_solder_at(p, idx)?;
            let noslip = material_connection_at(p, idx)?.minus_solder(&theta);
            let gbar = cauchy_green(&p.fhh, amb);
            let mut out = [0.0_f64; 7];
            out[0] = by_def[idx].0.sub(&by_blocks[idx].0).norm();
            out[1] = by_blocks[idx].0.sub(&by_random[idx].0).norm();
            for y in grid.fiber_samples() {
                let (_, yi) = f.punctual.eval(idx, y);
                let gt = pull_back_pseudo_metric_at(p, y, amb);
                let gb = pull_back_pseudo_metric_blocks(p, y, amb, &yi, &r);
                out[2] = out[2].max((&gt - gb).amax());
                let k = pseudo_metric_kernel(&gt, KERNEL_REL_TOL);
                if k.dim != n {
                    out[3] = 1.0;
                    continue;
                }
                let mut h = DMatrix::zeros(n + 3, n);
                h.view_mut((0, 0), (n, n)).fill_with_identity();
                h.view_mut((n, 0), (3, n)).copy_from(&noslip.lift_coeff(y));
                out[4] = out[4].max(principal_angle(&k.basis, &orthonormalize(&h)));
                let (gvv, nmat) = decompose_pseudo_metric(&gt, n)?;
                out[5] = out[5].max((reconstruct_pseudo_metric(&gvv, &nmat) - &gt).amax());
                let th = theta.matrix(y);
                out[6] = out[6].max((th.transpose() * to_dyn(&gvv) * &th - &gbar).amax());
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut m = [0.0_f64; 7];
    let mut failures = 0;
    for v in per_node {
        failures += (v[3] > 0.0) as usize;
        for k in 0..7 {
            m[k] = m[k].max(v[k]);
        }
    }
    Ok(PullbackChecks {
        connection_routes: m[0],
        reference_change: m[1],
        pseudo_metric_routes: m[2],
        kernel_dim_failures: failures,
        kernel_angle: m[4],
        roundtrip: m[5],
        macro_metric: m[6],
    })
}
