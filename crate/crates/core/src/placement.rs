//! Generalized placement maps of a body into the ambient space.
//!
//! In standard coordinates a first-order placement at a node is the
//! `6 × (n+3)` matrix
//!
//! ```text
//! F = [ Fhh        0   ]
//!     [ Tc + Lc[Y] Fvv ]
//! ```
//!
//! whose upper-right block vanishes for every physically acceptable map.

use std::collections::{BTreeMap, HashMap};

use nalgebra::{DMatrix, Matrix3, Rotation3, Unit, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::body::{fd_gradient_mat3, fd_gradient_vec3, BodyGrid, SmoothScalar};
use crate::error::{Error, Result};
use crate::geometry::{block_decompose, hat, AffineCoeffs, AffineConnection};

pub const DEFAULT_EPS_EMBED: f64 = 1e-6;
pub const MICRO_LINEAR_TOL: f64 = 1e-12;

/// `φ(X̄, Y) = (φ̄(X̄), φ^v(X̄)·Y + t^v(X̄))` sampled on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PunctualPlacement {
    pub phi_bar: Vec<Vector3<f64>>,
    pub phi_v: Vec<Matrix3<f64>>,
    pub t_v: Vec<Vector3<f64>>,
}

impl PunctualPlacement {
    pub fn eval(&self, idx: usize, y: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
        (self.phi_bar[idx], self.phi_v[idx] * y + self.t_v[idx])
    }

    pub fn len(&self) -> usize {
        self.phi_bar.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phi_bar.is_empty()
    }
}

/// Blocks of a first-order placement at one node.
#[derive(Debug, Clone, PartialEq)]
pub struct PlacementPoint {
    pub fhh: DMatrix<f64>,
    pub fvv: Matrix3<f64>,
    pub tc: DMatrix<f64>,
    pub lc: Vec<Matrix3<f64>>,
}

impl PlacementPoint {
    pub fn base_dim(&self) -> usize {
        self.fhh.ncols()
    }

    pub fn coupling_coeffs(&self) -> AffineCoeffs {
        AffineCoeffs { c0: self.tc.clone(), c1: self.lc.clone() }
    }

    /// `Fhv(Y) = Tc + Lc[Y]`.
    pub fn coupling(&self, y: &Vector3<f64>) -> DMatrix<f64> {
        self.coupling_coeffs().eval(y)
    }

    pub fn fvv_dyn(&self) -> DMatrix<f64> {
        DMatrix::from_column_slice(3, 3, self.fvv.as_slice())
    }

    pub fn total(&self, y: &Vector3<f64>) -> DMatrix<f64> {
        let n = self.base_dim();
        let mut f = DMatrix::zeros(6, n + 3);
        f.view_mut((0, 0), (3, n)).copy_from(&self.fhh);
        f.view_mut((3, 0), (3, n)).copy_from(&self.coupling(y));
        f.view_mut((3, n), (3, 3)).copy_from(&self.fvv_dyn());
        f
    }

    pub fn fvv_inverse(&self) -> Option<Matrix3<f64>> {
        self.fvv.try_inverse()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FirstOrderPlacement {
    grid: BodyGrid,
    pub punctual: PunctualPlacement,
    pub blocks: Vec<PlacementPoint>,
}

impl FirstOrderPlacement {
    pub fn new(grid: BodyGrid, punctual: PunctualPlacement, blocks: Vec<PlacementPoint>) -> Result<Self> {
        let len = grid.len();
        let n = grid.dim();
        for found in [punctual.phi_bar.len(), punctual.phi_v.len(), punctual.t_v.len(), blocks.len()] {
            if found != len {
                return Err(Error::DimensionMismatch { expected: len, found });
            }
        }
        for b in &blocks {
            if b.fhh.shape() != (3, n) || b.tc.shape() != (3, n) || b.lc.len() != n {
                return Err(Error::DimensionMismatch { expected: n, found: b.fhh.ncols() });
            }
        }
        Ok(Self { grid, punctual, blocks })
    }

    pub fn grid(&self) -> &BodyGrid {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn point(&self, idx: usize) -> &PlacementPoint {
        &self.blocks[idx]
    }

    pub fn total_map(&self, idx: usize, y: &Vector3<f64>) -> DMatrix<f64> {
        self.blocks[idx].total(y)
    }
}

/// `F = Tφ`, with every derivative taken by finite differences.
pub fn holonomic_lift(grid: &BodyGrid, phi: &PunctualPlacement) -> Result<FirstOrderPlacement> {
    let fhh = fd_gradient_vec3(grid, &phi.phi_bar)?;
    let lc = fd_gradient_mat3(grid, &phi.phi_v)?;
    let tc = fd_gradient_vec3(grid, &phi.t_v)?;
    let blocks = fhh
        .into_iter()
        .zip(lc)
        .zip(tc)
        .zip(&phi.phi_v)
        .map(|(((fhh, lc), tc), fvv)| PlacementPoint { fhh, fvv: *fvv, tc, lc })
        .collect();
    FirstOrderPlacement::new(grid.clone(), phi.clone(), blocks)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AcceptabilityReport {
    pub vh_block: f64,
    pub macro_gradient_residual: f64,
    pub micro_gradient_residual: f64,
    pub affine_in_y_residual: f64,
    pub injective: bool,
    pub fd_tolerance: f64,
    pub pass: bool,
}

pub fn validate_physically_acceptable(f: &FirstOrderPlacement) -> AcceptabilityReport {
    let grid = f.grid();
    let n = grid.dim();
    let samples = grid.fiber_samples();
    let src = AffineConnection::trivial(n);
    let dst = AffineConnection::trivial(3);
    let mut vh_block: f64 = 0.0;
    let mut affine: f64 = 0.0;
    let mut micro: f64 = 0.0;
    for (idx, b) in f.blocks.iter().enumerate() {
        let mut evals = Vec::with_capacity(samples.len());
        for y in samples {
            let (_, fy) = f.punctual.eval(idx, y);
            let blocks = block_decompose(&b.total(y), &src, y, &dst, &fy);
            vh_block = vh_block.max(blocks.vh_norm());
            evals.push((*y, b.coupling(y)));
        }
        affine = affine.max(match AffineCoeffs::fit(&evals) {
            Ok(fit) => evals.iter().map(|(y, v)| (fit.eval(y) - v).amax()).fold(0.0, f64::max),
            Err(_) => f64::INFINITY,
        });
        micro = micro.max((b.fvv - f.punctual.phi_v[idx]).amax());
    }
    let macro_res = match fd_gradient_vec3(grid, &f.punctual.phi_bar) {
        Ok(d) => d.iter().zip(&f.blocks).map(|(d, b)| (d - &b.fhh).amax()).fold(0.0, f64::max),
        Err(_) => f64::INFINITY,
    };
    let injective = is_injective(&f.punctual.phi_bar);
    let fd_tolerance = grid.fd_tolerance();
    let pass = vh_block <= 1e-12
        && affine <= 1e-12
        && micro <= 1e-12
        && macro_res <= fd_tolerance
        && injective;
    AcceptabilityReport {
        vh_block,
        macro_gradient_residual: macro_res,
        micro_gradient_residual: micro,
        affine_in_y_residual: affine,
        injective,
        fd_tolerance,
        pass,
    }
}

/// Pairwise check on samples through a spatial hash; points closer than a
/// relative `1e-9` of the image diameter count as collisions.
pub fn is_injective(points: &[Vector3<f64>]) -> bool {
    if points.len() < 2 {
        return true;
    }
    let (mut lo, mut hi) = (points[0], points[0]);
    for p in points {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    let cell = ((hi - lo).norm() * 1e-9).max(f64::MIN_POSITIVE);
    let key = |p: &Vector3<f64>| -> [i64; 3] {
        let q = (p - lo) / cell;
        [q.x.floor() as i64, q.y.floor() as i64, q.z.floor() as i64]
    };
    let mut buckets: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
    for (i, p) in points.iter().enumerate() {
        let k = key(p);
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(list) = buckets.get(&[k[0] + dx, k[1] + dy, k[2] + dz]) {
                        if list.iter().any(|&j| (points[j] - p).norm() < cell) {
                            return false;
                        }
                    }
                }
            }
        }
        buckets.entry(k).or_default().push(i);
    }
    true
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmbeddingReport {
    pub min_singular_value: Vec<f64>,
    pub min_interior: f64,
    pub eps_embed: f64,
    pub pass: bool,
}

pub fn validate_embedding(f: &FirstOrderPlacement, eps_embed: f64) -> EmbeddingReport {
    let grid = f.grid();
    let min_sv: Vec<f64> = f
        .blocks
        .iter()
        .map(|b| {
            grid.fiber_samples()
                .iter()
                .map(|y| b.total(y).singular_values().min())
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let width = grid.order().radius();
    let min_interior = (0..grid.len())
        .filter(|&i| grid.is_interior(i, width))
        .map(|i| min_sv[i])
        .fold(f64::INFINITY, f64::min);
    EmbeddingReport { min_singular_value: min_sv, min_interior, eps_embed, pass: min_interior >= eps_embed }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartialInverses {
    /// Left inverse of `Fhh` (`n × 3`).
    pub fhh_inv: DMatrix<f64>,
    pub fvv_inv: Matrix3<f64>,
    /// `(F⁻¹)_h^v = −Fvv⁻¹·Fhv·Fhh⁻¹`.
    pub inv_hv: DMatrix<f64>,
}

impl PartialInverses {
    /// Left inverse of the whole map, `(n+3) × 6`.
    pub fn assemble(&self) -> DMatrix<f64> {
        let n = self.fhh_inv.nrows();
        let mut g = DMatrix::zeros(n + 3, 6);
        g.view_mut((0, 0), (n, 3)).copy_from(&self.fhh_inv);
        g.view_mut((n, 0), (3, 3)).copy_from(&self.inv_hv);
        g.view_mut((n, 3), (3, 3))
            .copy_from(&DMatrix::from_column_slice(3, 3, self.fvv_inv.as_slice()));
        g
    }
}

pub fn partial_inverses(p: &PlacementPoint, y: &Vector3<f64>) -> Result<PartialInverses> {
    let fvv_inv = p.fvv_inverse().ok_or(Error::NotInvertible)?;
    let fhh_inv = crate::geometry::left_inverse(&p.fhh)?;
    if (&fhh_inv * &p.fhh - DMatrix::identity(p.base_dim(), p.base_dim())).amax() > 1e-8 {
        return Err(Error::NotInvertible);
    }
    let fvv_inv_d = DMatrix::from_column_slice(3, 3, fvv_inv.as_slice());
    let inv_hv = -(fvv_inv_d * p.coupling(y) * &fhh_inv);
    Ok(PartialInverses { fhh_inv, fvv_inv, inv_hv })
}

pub fn is_micro_linear(f: &FirstOrderPlacement) -> bool {
    f.punctual.t_v.iter().all(|t| t.amax() <= MICRO_LINEAR_TOL)
        && f.blocks.iter().all(|b| b.tc.amax() <= MICRO_LINEAR_TOL)
}

/// Maximum deviation of each block of `f` from the holonomic lift of its shadow:
/// `(Fhh, Fvv, Tc, Lc)`.
pub fn holonomic_gap(f: &FirstOrderPlacement) -> Result<[f64; 4]> {
    let lift = holonomic_lift(f.grid(), &f.punctual)?;
    let mut gap = [0.0_f64; 4];
    for (a, b) in f.blocks.iter().zip(&lift.blocks) {
        gap[0] = gap[0].max((&a.fhh - &b.fhh).amax());
        gap[1] = gap[1].max((a.fvv - b.fvv).amax());
        gap[2] = gap[2].max((&a.tc - &b.tc).amax());
        for (x, z) in a.lc.iter().zip(&b.lc) {
            gap[3] = gap[3].max((x - z).amax());
        }
    }
    Ok(gap)
}

/// Parameter value in a scenario file: a number or a short vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Scalar(f64),
    Vector(Vec<f64>),
}

/// The built-in placement families, all given in closed form.
#[derive(Debug, Clone, PartialEq)]
pub enum Builtin {
    Id,
    Shear { kappa: f64 },
    Dilate { lambda: f64 },
    MacroRot { rotation: Matrix3<f64> },
    FreeCouple { rotation: Matrix3<f64> },
    MicroTrans { direction: Vector3<f64> },
    Wry { a: f64 },
    /// `φ^v = Rot_e3(a·X̄₁)` with its exact gradient as coupling: holonomic with a
    /// nonzero, flat material connection.
    Bend { a: f64 },
}

pub const BUILTIN_NAMES: [&str; 8] =
    ["ID", "SHEAR", "DILATE", "MACROROT", "FREECOUPLE", "MICROTRANS", "WRY", "BEND"];

fn rotation_from(params: &mut BTreeMap<String, ParamValue>) -> Result<Matrix3<f64>> {
    let axis = match params.remove("axis") {
        None => Vector3::z(),
        Some(ParamValue::Vector(v)) if v.len() == 3 => Vector3::new(v[0], v[1], v[2]),
        Some(other) => return Err(Error::InadmissibleParams(format!("axis {other:?}"))),
    };
    if axis.norm() < 1e-12 {
        return Err(Error::InadmissibleParams("rotation axis is zero".into()));
    }
    let angle = take_scalar(params, "angle", std::f64::consts::FRAC_PI_2)?;
    Ok(Rotation3::from_axis_angle(&Unit::new_normalize(axis), angle).into_inner())
}

fn take_scalar(params: &mut BTreeMap<String, ParamValue>, key: &str, default: f64) -> Result<f64> {
    match params.remove(key) {
        None => Ok(default),
        Some(ParamValue::Scalar(x)) if x.is_finite() => Ok(x),
        Some(other) => Err(Error::InadmissibleParams(format!("{key} = {other:?}"))),
    }
}

impl Builtin {
    pub fn from_spec(name: &str, params: &BTreeMap<String, ParamValue>) -> Result<Self> {
        let mut p = params.clone();
        let b = match name.to_ascii_uppercase().as_str() {
            "ID" => Self::Id,
            "SHEAR" => Self::Shear { kappa: take_scalar(&mut p, "kappa", 0.3)? },
            "DILATE" => {
                let lambda = take_scalar(&mut p, "lambda", 2.0)?;
                if lambda <= 0.0 {
                    return Err(Error::InadmissibleParams(format!("dilation factor {lambda} <= 0")));
                }
                Self::Dilate { lambda }
            }
            "MACROROT" => Self::MacroRot { rotation: rotation_from(&mut p)? },
            "FREECOUPLE" => Self::FreeCouple { rotation: rotation_from(&mut p)? },
            "MICROTRANS" => {
                let direction = match p.remove("direction") {
                    None => Vector3::x(),
                    Some(ParamValue::Vector(v)) if v.len() == 3 => Vector3::new(v[0], v[1], v[2]),
                    Some(other) => return Err(Error::InadmissibleParams(format!("direction {other:?}"))),
                };
                Self::MicroTrans { direction }
            }
            "WRY" => Self::Wry { a: take_scalar(&mut p, "a", 0.3)? },
            "BEND" => Self::Bend { a: take_scalar(&mut p, "a", 1.0)? },
            _ => return Err(Error::UnknownFamily(name.to_string())),
        };
        if let Some(k) = p.keys().next() {
            return Err(Error::InadmissibleParams(format!("unknown parameter `{k}` for {name}")));
        }
        Ok(b)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Id => "ID",
            Self::Shear { .. } => "SHEAR",
            Self::Dilate { .. } => "DILATE",
            Self::MacroRot { .. } => "MACROROT",
            Self::FreeCouple { .. } => "FREECOUPLE",
            Self::MicroTrans { .. } => "MICROTRANS",
            Self::Wry { .. } => "WRY",
            Self::Bend { .. } => "BEND",
        }
    }

    pub fn is_holonomic(&self) -> bool {
        matches!(self, Self::Id | Self::Shear { .. } | Self::Dilate { .. } | Self::MacroRot { .. } | Self::Bend { .. })
    }

    /// Every family except the free coupling and the micro translation.
    pub fn is_micro_linear(&self) -> bool {
        !matches!(self, Self::FreeCouple { .. } | Self::MicroTrans { .. })
    }

    /// The test corpus with its default parameters.
    pub fn corpus() -> Vec<Builtin> {
        let rot = Rotation3::from_axis_angle(&Unit::new_normalize(Vector3::new(1.0, 2.0, 2.0)), 0.7).into_inner();
        vec![
            Self::Id,
            Self::Shear { kappa: 0.3 },
            Self::Dilate { lambda: 2.0 },
            Self::MacroRot { rotation: rot },
            Self::FreeCouple { rotation: rot },
            Self::MicroTrans { direction: Vector3::x() },
            Self::Wry { a: 0.3 },
            Self::Bend { a: 1.0 },
        ]
    }

    /// Full three-dimensional node data at `x` (padded with zeros when n < 3).
    fn node(&self, x: &Vector3<f64>) -> NodeData {
        let mut d = NodeData::identity(x);
        match self {
            Self::Id => {}
            Self::Shear { kappa } => {
                d.phi_bar.x += kappa * x.y;
                d.fhh[(0, 1)] = *kappa;
            }
            Self::Dilate { lambda } => {
                d.phi_bar *= *lambda;
                d.phi_v *= *lambda;
                d.fhh *= *lambda;
            }
            Self::MacroRot { rotation } => {
                d.phi_bar = rotation * x;
                d.fhh = *rotation;
            }
            Self::FreeCouple { rotation } => {
                d.tc = d.phi_v * rotation;
            }
            Self::MicroTrans { direction } => {
                d.t_v = direction * x.x;
            }
            Self::Wry { a } => {
                for j in 0..3 {
                    d.lc[j] = -hat(&Vector3::ith(j, 1.0)) * (a * x.x);
                }
            }
            Self::Bend { a } => {
                let r = Rotation3::from_axis_angle(&Vector3::z_axis(), a * x.x).into_inner();
                d.phi_v = r;
                d.lc[0] = hat(&Vector3::z()) * r * *a;
            }
        }
        d
    }

    pub fn sample(&self, grid: &BodyGrid) -> Result<FirstOrderPlacement> {
        sample_nodes(grid, |x| self.node(x))
    }

    /// Closed-form blocks at one point of a body of dimension `x.len()`.
    pub fn point_at(&self, x: &[f64]) -> PlacementPoint {
        let v = Vector3::from_fn(|i, _| x.get(i).copied().unwrap_or(0.0));
        self.node(&v).block(x.len())
    }
}

pub fn builtin_placement(
    name: &str,
    params: &BTreeMap<String, ParamValue>,
    grid: &BodyGrid,
) -> Result<FirstOrderPlacement> {
    Builtin::from_spec(name, params)?.sample(grid)
}

/// Placement data at one node with every base direction present.
#[derive(Debug, Clone)]
struct NodeData {
    phi_bar: Vector3<f64>,
    phi_v: Matrix3<f64>,
    t_v: Vector3<f64>,
    fhh: Matrix3<f64>,
    tc: Matrix3<f64>,
    lc: [Matrix3<f64>; 3],
}

impl NodeData {
    fn identity(x: &Vector3<f64>) -> Self {
        Self {
            phi_bar: *x,
            phi_v: Matrix3::identity(),
            t_v: Vector3::zeros(),
            fhh: Matrix3::identity(),
            tc: Matrix3::zeros(),
            lc: [Matrix3::zeros(); 3],
        }
    }

    fn block(&self, n: usize) -> PlacementPoint {
        PlacementPoint {
            fhh: DMatrix::from_fn(3, n, |r, j| self.fhh[(r, j)]),
            fvv: self.phi_v,
            tc: DMatrix::from_fn(3, n, |r, j| self.tc[(r, j)]),
            lc: self.lc[..n].to_vec(),
        }
    }
}

fn sample_nodes<F: Fn(&Vector3<f64>) -> NodeData>(grid: &BodyGrid, node: F) -> Result<FirstOrderPlacement> {
    let n = grid.dim();
    let mut punctual = PunctualPlacement { phi_bar: vec![], phi_v: vec![], t_v: vec![] };
    let mut blocks = Vec::with_capacity(grid.len());
    for idx in 0..grid.len() {
        let c = grid.coords(idx);
        let x = Vector3::from_fn(|i, _| c.get(i).copied().unwrap_or(0.0));
        let d = node(&x);
        punctual.phi_bar.push(d.phi_bar);
        punctual.phi_v.push(d.phi_v);
        punctual.t_v.push(d.t_v);
        blocks.push(d.block(n));
    }
    FirstOrderPlacement::new(grid.clone(), punctual, blocks)
}

/// Smooth random placement close to the identity, with closed-form gradients.
/// The coupling is perturbed away from the gradient of the shadow; with
/// `micro_linear` the shadow is linear and the coupling has no constant part.
pub fn random_placement(grid: &BodyGrid, seed: u64, micro_linear: bool) -> Result<FirstOrderPlacement> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut field = |scale: f64| SmoothScalar::random(&mut rng, 3, scale, 2);
    let phi_bar: Vec<SmoothScalar> = (0..3).map(|_| field(0.05)).collect();
    let phi_v: Vec<SmoothScalar> = (0..9).map(|_| field(0.08)).collect();
    let t_v: Vec<SmoothScalar> = (0..3).map(|_| field(0.3)).collect();
    let lc_free: Vec<SmoothScalar> = (0..27).map(|_| field(0.1)).collect();
    let tc_free: Vec<SmoothScalar> = (0..9).map(|_| field(0.1)).collect();
    sample_nodes(grid, |x| {
        let xs = x.as_slice();
        let mut d = NodeData::identity(x);
        for i in 0..3 {
            d.phi_bar[i] += phi_bar[i].value(xs);
            let g = phi_bar[i].gradient(xs);
            for j in 0..3 {
                d.fhh[(i, j)] += g[j];
            }
        }
        for r in 0..3 {
            for c in 0..3 {
                let s = &phi_v[3 * r + c];
                d.phi_v[(r, c)] += s.value(xs);
                let g = s.gradient(xs);
                for j in 0..3 {
                    d.lc[j][(r, c)] = g[j] + lc_free[9 * j + 3 * r + c].value(xs);
                }
            }
        }
        if !micro_linear {
            for i in 0..3 {
                d.t_v[i] = t_v[i].value(xs);
                let g = t_v[i].gradient(xs);
                for j in 0..3 {
                    d.tc[(i, j)] = g[j] + tc_free[3 * i + j].value(xs);
                }
            }
        }
        d
    })
}
