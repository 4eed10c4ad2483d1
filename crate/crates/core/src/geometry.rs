//! Point-wise objects on the total tangent space of a micro-structured body.
//!
//! A total tangent vector at `(X̄, Y)` is stored in trivializing coordinates as
//! `(δX̄, δY) ∈ ℝⁿ × ℝ³`. Connections and solder forms only ever need the
//! vertical coordinate of a lift, which is affine in `Y`; both are stored as
//! an [`AffineCoeffs`] pair.

use nalgebra::{DMatrix, DVector, Matrix3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FIBER_DIM: usize = 3;

/// Eigenvalues below this fraction of the largest one count as zero.
pub const KERNEL_REL_TOL: f64 = 1e-9;

/// Fiber points at which injectivity of a solder form is probed.
const SOLDER_PROBES: [[f64; 3]; 5] = [
    [0.0, 0.0, 0.0],
    [1.0, 0.0, 0.0],
    [0.0, 1.0, 0.0],
    [0.0, 0.0, 1.0],
    [-1.0, -1.0, -1.0],
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpaceSignature {
    base_dim: usize,
}

impl SpaceSignature {
    pub fn new(base_dim: usize) -> Result<Self> {
        if !(1..=3).contains(&base_dim) {
            return Err(Error::BadDimension(base_dim));
        }
        Ok(Self { base_dim })
    }

    pub fn base_dim(&self) -> usize {
        self.base_dim
    }

    pub fn fiber_dim(&self) -> usize {
        FIBER_DIM
    }

    pub fn total_dim(&self) -> usize {
        self.base_dim + FIBER_DIM
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TotalPoint {
    pub x: DVector<f64>,
    pub y: Vector3<f64>,
}

impl TotalPoint {
    pub fn new(x: DVector<f64>, y: Vector3<f64>) -> Self {
        Self { x, y }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    pub point: TotalPoint,
    pub dx: DVector<f64>,
    pub dy: Vector3<f64>,
}

impl TangentVector {
    pub fn new(point: TotalPoint, dx: DVector<f64>, dy: Vector3<f64>) -> Self {
        Self { point, dx, dy }
    }

    /// Macroscopic part, i.e. the image under Tπ.
    pub fn macro_part(&self) -> &DVector<f64> {
        &self.dx
    }

    /// Stacked coordinates `(δX̄, δY)`.
    pub fn coords(&self) -> DVector<f64> {
        stack(&self.dx, &self.dy)
    }
}

pub fn stack(a: &DVector<f64>, b: &Vector3<f64>) -> DVector<f64> {
    let n = a.len();
    DVector::from_fn(n + 3, |i, _| if i < n { a[i] } else { b[i - n] })
}

/// Skew matrix with `hat(v) w = v × w`.
pub fn hat(v: &Vector3<f64>) -> Matrix3<f64> {
    v.cross_matrix()
}

/// Map `ū ↦ (C0 + C1[Y]) ū` from ℝⁿ to ℝ³, affine in `Y`.
///
/// Column `j` of the evaluated matrix is `c0[:, j] + c1[j] * Y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineCoeffs {
    pub c0: DMatrix<f64>,
    pub c1: Vec<Matrix3<f64>>,
}

impl AffineCoeffs {
    pub fn new(c0: DMatrix<f64>, c1: Vec<Matrix3<f64>>) -> Result<Self> {
        if c0.nrows() != 3 {
            return Err(Error::DimensionMismatch { expected: 3, found: c0.nrows() });
        }
        if c1.len() != c0.ncols() {
            return Err(Error::DimensionMismatch { expected: c0.ncols(), found: c1.len() });
        }
        Ok(Self { c0, c1 })
    }

    pub fn zeros(n: usize) -> Self {
        Self { c0: DMatrix::zeros(3, n), c1: vec![Matrix3::zeros(); n] }
    }

    pub fn constant(c0: DMatrix<f64>) -> Self {
        let n = c0.ncols();
        Self { c0, c1: vec![Matrix3::zeros(); n] }
    }

    pub fn base_dim(&self) -> usize {
        self.c0.ncols()
    }

    pub fn eval(&self, y: &Vector3<f64>) -> DMatrix<f64> {
        let mut m = self.c0.clone();
        for (j, c) in self.c1.iter().enumerate() {
            let col = c * y;
            for r in 0..3 {
                m[(r, j)] += col[r];
            }
        }
        m
    }

    /// Frobenius norm over both coefficient blocks.
    pub fn norm(&self) -> f64 {
        let s: f64 = self.c0.norm_squared() + self.c1.iter().map(|c| c.norm_squared()).sum::<f64>();
        s.sqrt()
    }

    pub fn linear_norm(&self) -> f64 {
        self.c1.iter().map(|c| c.norm_squared()).sum::<f64>().sqrt()
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self {
            c0: &self.c0 - &other.c0,
            c1: self.c1.iter().zip(&other.c1).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self {
            c0: &self.c0 + &other.c0,
            c1: self.c1.iter().zip(&other.c1).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { c0: &self.c0 * s, c1: self.c1.iter().map(|c| c * s).collect() }
    }

    /// Left-multiply both blocks by a 3×3 matrix.
    pub fn premul(&self, m: &Matrix3<f64>) -> Self {
        let md = DMatrix::from_column_slice(3, 3, m.as_slice());
        Self { c0: &md * &self.c0, c1: self.c1.iter().map(|c| m * c).collect() }
    }

    /// Recover the coefficients from evaluations at affinely independent fiber points.
    pub fn fit(samples: &[(Vector3<f64>, DMatrix<f64>)]) -> Result<Self> {
        let k = samples.len();
        if k < 4 {
            return Err(Error::DimensionMismatch { expected: 4, found: k });
        }
        let n = samples[0].1.ncols();
        let design = DMatrix::from_fn(k, 4, |i, c| if c == 0 { 1.0 } else { samples[i].0[c - 1] });
        let rhs = DMatrix::from_fn(k, 3 * n, |i, c| samples[i].1[(c % 3, c / 3)]);
        let sol = solve_least_squares(&design, &rhs)
            .map_err(|_| Error::Inconsistent("fiber samples are not affinely independent".into()))?;
        let c0 = DMatrix::from_fn(3, n, |r, j| sol[(0, 3 * j + r)]);
        let c1 = (0..n)
            .map(|j| Matrix3::from_fn(|r, c| sol[(c + 1, 3 * j + r)]))
            .collect();
        Ok(Self { c0, c1 })
    }
}

/// Ehresmann connection: `γ·ū = (ū, (C0 + C1[Y]) ū)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineConnection(pub AffineCoeffs);

impl AffineConnection {
    pub fn trivial(n: usize) -> Self {
        Self(AffineCoeffs::zeros(n))
    }

    pub fn base_dim(&self) -> usize {
        self.0.base_dim()
    }

    /// Vertical coordinate matrix `W` of the horizontal lift at `y`.
    pub fn lift_coeff(&self, y: &Vector3<f64>) -> DMatrix<f64> {
        self.0.eval(y)
    }

    pub fn lift(&self, y: &Vector3<f64>, u: &DVector<f64>) -> DVector<f64> {
        let w = self.lift_coeff(y) * u;
        stack(u, &Vector3::new(w[0], w[1], w[2]))
    }

    pub fn is_linear(&self, tol: f64) -> bool {
        self.0.c0.amax() <= tol
    }

    /// `γ − ϑ`, again an affine connection.
    pub fn minus_solder(&self, theta: &SolderForm) -> Self {
        Self(self.0.sub(&theta.0))
    }
}

/// Solder form: `ϑ·ū = (0, (S0 + S1[Y]) ū)`; injective by construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolderForm(AffineCoeffs);

impl SolderForm {
    pub fn new(coeffs: AffineCoeffs) -> Result<Self> {
        let n = coeffs.base_dim();
        for p in SOLDER_PROBES {
            let s = coeffs.eval(&Vector3::from(p));
            let rank = s.clone().svd(false, false).rank(1e-10 * s.amax().max(1.0));
            if rank < n {
                return Err(Error::DegenerateSolder { rank, n });
            }
        }
        Ok(Self(coeffs))
    }

    /// `S0 = [Iₙ; 0]`, the identification of a macroscopic vector with its micro copy.
    pub fn canonical(n: usize) -> Self {
        Self(AffineCoeffs::constant(DMatrix::identity(3, n)))
    }

    pub fn coeffs(&self) -> &AffineCoeffs {
        &self.0
    }

    pub fn base_dim(&self) -> usize {
        self.0.base_dim()
    }

    pub fn matrix(&self, y: &Vector3<f64>) -> DMatrix<f64> {
        self.0.eval(y)
    }

    pub fn lift(&self, y: &Vector3<f64>, u: &DVector<f64>) -> DVector<f64> {
        let w = self.matrix(y) * u;
        stack(&DVector::zeros(u.len()), &Vector3::new(w[0], w[1], w[2]))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metric(DMatrix<f64>);

impl Metric {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::InvalidMetric("not square".into()));
        }
        let scale = m.amax().max(1.0);
        if (&m - m.transpose()).amax() > 1e-12 * scale {
            return Err(Error::InvalidMetric("not symmetric".into()));
        }
        let sym = (&m + m.transpose()) * 0.5;
        if sym.clone().cholesky().is_none() {
            return Err(Error::InvalidMetric("not positive definite".into()));
        }
        Ok(Self(sym))
    }

    pub fn euclidean(n: usize) -> Self {
        Self(DMatrix::identity(n, n))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PseudoMetric(DMatrix<f64>);

impl PseudoMetric {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::InvalidMetric("not square".into()));
        }
        let scale = m.amax().max(1.0);
        if (&m - m.transpose()).amax() > 1e-12 * scale {
            return Err(Error::InvalidMetric("not symmetric".into()));
        }
        let sym = (&m + m.transpose()) * 0.5;
        let lmin = sym.clone().symmetric_eigenvalues().min();
        if lmin < -1e-10 * scale {
            return Err(Error::InvalidMetric(format!("eigenvalue {lmin:e} < 0")));
        }
        Ok(Self(sym))
    }

    pub fn from_metric(g: &Metric) -> Self {
        Self(g.0.clone())
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn inner(&self, u: &DVector<f64>, w: &DVector<f64>) -> f64 {
        (u.transpose() * &self.0 * w)[0]
    }
}

/// `[[I, 0], [−W, I]]`: standard coordinates to (horizontal, vertical) coordinates.
pub fn adapted_frame(w: &DMatrix<f64>) -> DMatrix<f64> {
    let n = w.ncols();
    let mut p = DMatrix::identity(n + 3, n + 3);
    p.view_mut((n, 0), (3, n)).copy_from(&(-w));
    p
}

pub fn adapted_frame_inverse(w: &DMatrix<f64>) -> DMatrix<f64> {
    let n = w.ncols();
    let mut p = DMatrix::identity(n + 3, n + 3);
    p.view_mut((n, 0), (3, n)).copy_from(w);
    p
}

/// Horizontal and vertical projectors `(h_γ, v_γ)` at fiber point `y`.
pub fn projectors(gamma: &AffineConnection, y: &Vector3<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = gamma.base_dim();
    let w = gamma.lift_coeff(y);
    let mut h = DMatrix::zeros(n + 3, n + 3);
    h.view_mut((0, 0), (n, n)).fill_with_identity();
    h.view_mut((n, 0), (3, n)).copy_from(&w);
    let v = DMatrix::identity(n + 3, n + 3) - &h;
    (h, v)
}

/// Linear map between total tangent spaces split against a source and a
/// destination connection. `vh` vanishes for physically acceptable maps but is
/// kept so that a violation can be reported.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockMap {
    pub hh: DMatrix<f64>,
    pub hv: DMatrix<f64>,
    pub vh: DMatrix<f64>,
    pub vv: DMatrix<f64>,
    pub src_lift: DMatrix<f64>,
    pub dst_lift: DMatrix<f64>,
}

impl BlockMap {
    pub fn vh_norm(&self) -> f64 {
        self.vh.norm()
    }
}

pub fn block_decompose(
    l: &DMatrix<f64>,
    src: &AffineConnection,
    y_src: &Vector3<f64>,
    dst: &AffineConnection,
    y_dst: &Vector3<f64>,
) -> BlockMap {
    let n = src.base_dim();
    let m = dst.base_dim();
    assert_eq!(l.shape(), (m + 3, n + 3), "map shape does not match connections");
    let ws = src.lift_coeff(y_src);
    let wd = dst.lift_coeff(y_dst);
    let a = adapted_frame(&wd) * l * adapted_frame_inverse(&ws);
    BlockMap {
        hh: a.view((0, 0), (m, n)).into_owned(),
        vh: a.view((0, n), (m, 3)).into_owned(),
        hv: a.view((m, 0), (3, n)).into_owned(),
        vv: a.view((m, n), (3, 3)).into_owned(),
        src_lift: ws,
        dst_lift: wd,
    }
}

pub fn block_recompose(b: &BlockMap) -> DMatrix<f64> {
    let (m, n) = b.hh.shape();
    let mut a = DMatrix::zeros(m + 3, n + 3);
    a.view_mut((0, 0), (m, n)).copy_from(&b.hh);
    a.view_mut((0, n), (m, 3)).copy_from(&b.vh);
    a.view_mut((m, 0), (3, n)).copy_from(&b.hv);
    a.view_mut((m, n), (3, 3)).copy_from(&b.vv);
    adapted_frame_inverse(&b.dst_lift) * a * adapted_frame(&b.src_lift)
}

/// `ι = Tπ + ϑ⁻¹·v_γ`, defined on the whole tangent space only when n = 3.
pub fn interpretation_projection(
    gamma: &AffineConnection,
    theta: &SolderForm,
    y: &Vector3<f64>,
) -> Result<DMatrix<f64>> {
    let n = gamma.base_dim();
    if n != 3 || theta.base_dim() != 3 {
        return Err(Error::NonSquareSolder(n));
    }
    let s_inv = theta.matrix(y).try_inverse().ok_or(Error::DegenerateSolder { rank: 2, n: 3 })?;
    let w = gamma.lift_coeff(y);
    let mut iota = DMatrix::zeros(3, 6);
    iota.view_mut((0, 0), (3, 3))
        .copy_from(&(DMatrix::identity(3, 3) - &s_inv * w));
    iota.view_mut((0, 3), (3, 3)).copy_from(&s_inv);
    Ok(iota)
}

pub fn compatible_pseudo_metric(
    g: &Metric,
    gamma: &AffineConnection,
    theta: &SolderForm,
    y: &Vector3<f64>,
) -> Result<PseudoMetric> {
    let iota = interpretation_projection(gamma, theta, y)?;
    let gt = iota.transpose() * g.matrix() * &iota;
    Ok(PseudoMetric((&gt + gt.transpose()) * 0.5))
}

/// One test quadruple `(ū, w̄, ū′, w̄′)` of macroscopic vectors.
#[derive(Debug, Clone)]
pub struct CompatSample {
    pub u: DVector<f64>,
    pub w: DVector<f64>,
    pub u2: DVector<f64>,
    pub w2: DVector<f64>,
}

/// `max |⟨ϑū+γw̄, ϑū′+γw̄′⟩_g̃ − ⟨ū+w̄, ū′+w̄′⟩_g|` over the samples.
pub fn compatibility_residual(
    gt: &PseudoMetric,
    g: &Metric,
    gamma: &AffineConnection,
    theta: &SolderForm,
    y: &Vector3<f64>,
    samples: &[CompatSample],
) -> f64 {
    let mut worst: f64 = 0.0;
    for s in samples {
        let a = theta.lift(y, &s.u) + gamma.lift(y, &s.w);
        let b = theta.lift(y, &s.u2) + gamma.lift(y, &s.w2);
        let lhs = gt.inner(&a, &b);
        let rhs = ((&s.u + &s.w).transpose() * g.matrix() * (&s.u2 + &s.w2))[0];
        worst = worst.max((lhs - rhs).abs());
    }
    worst
}

#[derive(Debug, Clone)]
pub struct Kernel {
    pub dim: usize,
    /// Orthonormal columns spanning the kernel.
    pub basis: DMatrix<f64>,
}

pub fn pseudo_metric_kernel(gt: &DMatrix<f64>, rel_tol: f64) -> Kernel {
    let d = gt.nrows();
    let eig = SymmetricEigen::new(gt.clone());
    let lmax = eig.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
    let cols: Vec<usize> = (0..d).filter(|&i| eig.eigenvalues[i] < rel_tol * lmax || lmax <= 0.0).collect();
    let mut basis = DMatrix::zeros(d, cols.len());
    for (k, &i) in cols.iter().enumerate() {
        basis.set_column(k, &eig.eigenvectors.column(i));
    }
    Kernel { dim: cols.len(), basis }
}

/// Orthonormal basis of the column span of `a`, which must have full column rank.
pub fn orthonormalize(a: &DMatrix<f64>) -> DMatrix<f64> {
    a.clone().qr().q()
}

/// Least-squares solution of `a·x = b` for `a` of full column rank, through a
/// Householder QR factorization. The SVD route loses accuracy on nearly
/// repeated singular values.
pub fn solve_least_squares(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (m, n) = a.shape();
    if m < n {
        return Err(Error::NotInvertible);
    }
    let qr = a.clone().qr();
    let r = qr.r();
    let dmax = (0..n).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    if dmax == 0.0 || (0..n).any(|i| r[(i, i)].abs() <= 1e-13 * dmax) {
        return Err(Error::NotInvertible);
    }
    r.solve_upper_triangular(&(qr.q().transpose() * b)).ok_or(Error::NotInvertible)
}

/// `(aᵀa)⁻¹aᵀ` for `a` of full column rank.
pub fn left_inverse(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    solve_least_squares(a, &DMatrix::identity(a.nrows(), a.nrows()))
}

/// Largest principal angle between two subspaces given by orthonormal bases.
/// Subspaces of different dimension are at angle π/2.
pub fn principal_angle(q1: &DMatrix<f64>, q2: &DMatrix<f64>) -> f64 {
    if q1.ncols() != q2.ncols() {
        return std::f64::consts::FRAC_PI_2;
    }
    if q1.ncols() == 0 {
        return 0.0;
    }
    let resid = q2 - q1 * (q1.transpose() * q2);
    let s = resid.svd(false, false).singular_values.max();
    s.min(1.0).asin()
}

/// `(⟨u, w⟩, ‖u‖)` for a pseudo-metric; rejects a clearly negative square.
pub fn semi_norm_and_inner(
    gt: &PseudoMetric,
    u: &DVector<f64>,
    w: &DVector<f64>,
    tol: f64,
) -> Result<(f64, f64)> {
    let uu = gt.inner(u, u);
    if uu < -tol {
        return Err(Error::NegativeSquare(uu));
    }
    Ok((gt.inner(u, w), uu.max(0.0).sqrt()))
}
