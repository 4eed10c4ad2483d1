//! The Euclidean micro-structured ambient space and the generalized Galilean group.

use nalgebra::{DMatrix, Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::body::BodyGrid;
use crate::error::{Error, Result};
use crate::geometry::{compatible_pseudo_metric, AffineConnection, Metric, PseudoMetric, SolderForm, TangentVector, TotalPoint};
use crate::placement::{holonomic_lift, FirstOrderPlacement, PlacementPoint, PunctualPlacement};
use crate::pullback::material_connection_at;

#[derive(Debug, Clone, PartialEq)]
pub struct AmbientSpace {
    pub gamma: AffineConnection,
    pub theta: SolderForm,
    pub g: Metric,
    pub g_tilde: PseudoMetric,
}

impl AmbientSpace {
    pub fn new() -> Self {
        let gamma = AffineConnection::trivial(3);
        let theta = SolderForm::canonical(3);
        let g = Metric::euclidean(3);
        let g_tilde = compatible_pseudo_metric(&g, &gamma, &theta, &Vector3::zeros())
            .expect("ambient solder form is square");
        Self { gamma, theta, g, g_tilde }
    }
}

impl Default for AmbientSpace {
    fn default() -> Self {
        Self::new()
    }
}

/// `(x̄, y) ↦ (R·x̄ + t̄, R·y + t^v)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GalileanElement {
    pub r: Matrix3<f64>,
    pub t_bar: Vector3<f64>,
    pub t_v: Vector3<f64>,
}

impl GalileanElement {
    pub fn new(r: Matrix3<f64>, t_bar: Vector3<f64>, t_v: Vector3<f64>) -> Result<Self> {
        if (r.transpose() * r - Matrix3::identity()).norm() > 1e-12 {
            return Err(Error::InadmissibleParams("rotation part is not orthogonal".into()));
        }
        Ok(Self { r, t_bar, t_v })
    }

    pub fn identity() -> Self {
        Self { r: Matrix3::identity(), t_bar: Vector3::zeros(), t_v: Vector3::zeros() }
    }

    /// `self ∘ first`.
    pub fn compose(&self, first: &Self) -> Self {
        Self {
            r: self.r * first.r,
            t_bar: self.r * first.t_bar + self.t_bar,
            t_v: self.r * first.t_v + self.t_v,
        }
    }

    pub fn inverse(&self) -> Self {
        let rt = self.r.transpose();
        Self { r: rt, t_bar: -(rt * self.t_bar), t_v: -(rt * self.t_v) }
    }

    pub fn apply(&self, p: &TotalPoint) -> TotalPoint {
        assert_eq!(p.x.len(), 3, "ambient points are three-dimensional");
        let x = Vector3::new(p.x[0], p.x[1], p.x[2]);
        let xn = self.r * x + self.t_bar;
        TotalPoint::new(nalgebra::DVector::from_column_slice(xn.as_slice()), self.r * p.y + self.t_v)
    }

    pub fn apply_tangent(&self, u: &TangentVector) -> TangentVector {
        let dx = Vector3::new(u.dx[0], u.dx[1], u.dx[2]);
        let dxn = self.r * dx;
        TangentVector::new(
            self.apply(&u.point),
            nalgebra::DVector::from_column_slice(dxn.as_slice()),
            self.r * u.dy,
        )
    }

    /// The tangent map of the element as a placement of `grid`, which must be
    /// three-dimensional.
    pub fn as_placement(&self, grid: &BodyGrid) -> Result<FirstOrderPlacement> {
        if grid.dim() != 3 {
            return Err(Error::DimensionMismatch { expected: 3, found: grid.dim() });
        }
        let punctual = PunctualPlacement {
            phi_bar: grid.sample(|x| self.r * Vector3::new(x[0], x[1], x[2]) + self.t_bar),
            phi_v: vec![self.r; grid.len()],
            t_v: vec![self.t_v; grid.len()],
        };
        let block = PlacementPoint {
            fhh: DMatrix::from_column_slice(3, 3, self.r.as_slice()),
            fvv: self.r,
            tc: DMatrix::zeros(3, 3),
            lc: vec![Matrix3::zeros(); 3],
        };
        FirstOrderPlacement::new(grid.clone(), punctual, vec![block; grid.len()])
    }
}

/// Haar-distributed orthogonal matrix (determinant ±1) from the QR factors of a
/// Gaussian matrix, with the sign of `diag(R)` moved into `Q`.
pub fn random_orthogonal<R: Rng>(rng: &mut R) -> Matrix3<f64> {
    let a = Matrix3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = a.qr();
    let (q, r) = (qr.q(), qr.r());
    let signs = Matrix3::from_diagonal(&Vector3::from_fn(|i, _| if r[(i, i)] < 0.0 { -1.0 } else { 1.0 }));
    q * signs
}

pub fn random_galilean_with<R: Rng>(rng: &mut R) -> GalileanElement {
    let r = random_orthogonal(rng);
    let mut g = || rng.sample::<f64, _>(StandardNormal);
    let t_bar = Vector3::new(g(), g(), g());
    let t_v = Vector3::new(g(), g(), g());
    GalileanElement { r, t_bar, t_v }
}

pub fn random_galilean(seed: u64) -> GalileanElement {
    random_galilean_with(&mut ChaCha8Rng::seed_from_u64(seed))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StabilizerResiduals {
    pub r_gtilde: f64,
    pub r_gamma: f64,
    pub r_tgamma: f64,
}

impl StabilizerResiduals {
    pub fn max(&self) -> f64 {
        self.r_gtilde.max(self.r_gamma).max(self.r_tgamma)
    }
}

/// How far a total map of the ambient space, given as a placement of a
/// three-dimensional grid, is from preserving `g̃`, `γ` and, through its
/// shadow, `γ` again.
pub fn stabilizer_residuals(a: &FirstOrderPlacement) -> Result<StabilizerResiduals> {
    let grid = a.grid();
    if grid.dim() != 3 {
        return Err(Error::DimensionMismatch { expected: 3, found: grid.dim() });
    }
    let amb = AmbientSpace::new();
    let gt = amb.g_tilde.matrix();
    let mut res = StabilizerResiduals { r_gtilde: 0.0, r_gamma: 0.0, r_tgamma: 0.0 };
    for (idx, p) in a.blocks.iter().enumerate() {
        for y in grid.fiber_samples() {
            let m = p.total(y);
            let sv = m.singular_values();
            if sv.min() <= 1e-12 * sv.max() {
                return Err(Error::NotInvertible);
            }
            res.r_gtilde = res.r_gtilde.max((m.transpose() * gt * &m - gt).norm());
        }
        let gamma = material_connection_at(p, idx).map_err(|_| Error::NotInvertible)?;
        res.r_gamma = res.r_gamma.max(gamma.0.norm());
    }
    let shadow = holonomic_lift(grid, &a.punctual)?;
    for (idx, p) in shadow.blocks.iter().enumerate() {
        let gamma = material_connection_at(p, idx).map_err(|_| Error::NotInvertible)?;
        res.r_tgamma = res.r_tgamma.max(gamma.0.norm());
    }
    Ok(res)
}

/// Read off `(R, t̄, t^v)` at the first grid node, assuming `a` is Galilean.
pub fn extract_galilean(a: &FirstOrderPlacement) -> GalileanElement {
    let x0 = a.grid().coords(0);
    let r = a.blocks[0].fvv;
    let t_bar = a.punctual.phi_bar[0] - r * Vector3::new(x0[0], x0[1], x0[2]);
    GalileanElement { r, t_bar, t_v: a.punctual.t_v[0] }
}

/// Largest entrywise deviation of `a` from the tangent map of `g`.
pub fn galilean_reconstruction_error(a: &FirstOrderPlacement, g: &GalileanElement) -> Result<f64> {
    let b = g.as_placement(a.grid())?;
    let mut e: f64 = 0.0;
    for i in 0..a.len() {
        let (pa, pb) = (a.point(i), b.point(i));
        e = e
            .max((&pa.fhh - &pb.fhh).amax())
            .max((pa.fvv - pb.fvv).amax())
            .max((&pa.tc - &pb.tc).amax())
            .max(pa.lc.iter().zip(&pb.lc).map(|(x, z)| (x - z).amax()).fold(0.0, f64::max))
            .max((a.punctual.phi_bar[i] - b.punctual.phi_bar[i]).amax())
            .max((a.punctual.phi_v[i] - b.punctual.phi_v[i]).amax())
            .max((a.punctual.t_v[i] - b.punctual.t_v[i]).amax());
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::body::FdOrder;
    use nalgebra::{DVector, Rotation3};

    #[test]
    fn identity_element_acts_trivially() {
        let p = TotalPoint::new(DVector::from_vec(vec![1.0, 2.0, 3.0]), Vector3::new(-1.0, 0.5, 0.0));
        assert_eq!(GalileanElement::identity().apply(&p), p);
        let u = TangentVector::new(p.clone(), DVector::from_vec(vec![0.1, 0.2, 0.3]), Vector3::new(1.0, 1.0, 1.0));
        assert_eq!(GalileanElement::identity().apply_tangent(&u), u);
    }

    #[test]
    fn quarter_turn_with_shift() {
        let r = Rotation3::from_axis_angle(&Vector3::z_axis(), std::f64::consts::FRAC_PI_2).into_inner();
        let a = GalileanElement::new(r, Vector3::x(), Vector3::zeros()).unwrap();
        let p = TotalPoint::new(DVector::from_vec(vec![1.0, 0.0, 0.0]), Vector3::y());
        let q = a.apply(&p);
        assert!((q.x - DVector::from_vec(vec![1.0, 1.0, 0.0])).amax() < 1e-15);
        assert!((q.y - Vector3::new(-1.0, 0.0, 0.0)).amax() < 1e-15);
    }

    #[test]
    fn composition_matches_sequential_action() {
        let a1 = random_galilean(1);
        let a2 = random_galilean(2);
        let p = TotalPoint::new(DVector::from_vec(vec![0.3, -0.2, 0.9]), Vector3::new(1.0, -2.0, 0.5));
        let seq = a2.apply(&a1.apply(&p));
        let comp = a2.compose(&a1).apply(&p);
        assert!((seq.x - comp.x).amax() < 1e-14);
        assert!((seq.y - comp.y).amax() < 1e-14);
        let expect = GalileanElement {
            r: a2.r * a1.r,
            t_bar: a2.r * a1.t_bar + a2.t_bar,
            t_v: a2.r * a1.t_v + a2.t_v,
        };
        assert_eq!(a2.compose(&a1), expect);
    }

    #[test]
    fn sampling_is_deterministic_and_orthogonal() {
        assert_eq!(random_galilean(42), random_galilean(42));
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut mean = Matrix3::zeros();
        let mut dets = [0usize; 2];
        let count = 10_000;
        for _ in 0..count {
            let a = random_galilean_with(&mut rng);
            assert!((a.r.transpose() * a.r - Matrix3::identity()).norm() <= 1e-12);
            mean += a.r;
            dets[(a.r.determinant() < 0.0) as usize] += 1;
        }
        mean /= count as f64;
        assert!(mean.amax() <= 0.05, "{mean}");
        assert!(dets[1] > 4_500 && dets[1] < 5_500);
    }

    #[test]
    fn galilean_tangent_map_is_in_the_stabilizer() {
        let grid = BodyGrid::unit_cube(3, 6, FdOrder::Fourth).unwrap();
        let a = random_galilean(5).as_placement(&grid).unwrap();
        let r = stabilizer_residuals(&a).unwrap();
        assert!(r.max() <= 1e-12, "{r:?}");
    }

    #[test]
    fn dilation_leaves_the_stabilizer() {
        let grid = BodyGrid::unit_cube(3, 6, FdOrder::Fourth).unwrap();
        let a = crate::placement::Builtin::Dilate { lambda: 2.0 }.sample(&grid).unwrap();
        let r = stabilizer_residuals(&a).unwrap();
        let amb = AmbientSpace::new();
        assert!((r.r_gtilde - 3.0 * amb.g_tilde.matrix().norm()).abs() < 1e-12);
        assert!(r.r_gamma < 1e-15);
    }

    #[test]
    fn non_uniform_micro_translation() {
        let grid = BodyGrid::unit_cube(3, 6, FdOrder::Fourth).unwrap();
        let a = crate::placement::Builtin::MicroTrans { direction: Vector3::x() }.sample(&grid).unwrap();
        let r = stabilizer_residuals(&a).unwrap();
        assert!(r.r_gtilde < 1e-15 && r.r_gamma < 1e-15);
        assert!(r.r_tgamma >= 0.5);
    }

    #[test]
    fn singular_map_is_rejected() {
        let grid = BodyGrid::unit_cube(3, 6, FdOrder::Fourth).unwrap();
        let mut a = GalileanElement::identity().as_placement(&grid).unwrap();
        a.blocks[0].fvv = Matrix3::zeros();
        assert_eq!(stabilizer_residuals(&a), Err(Error::NotInvertible));
    }

    #[test]
    fn extraction_round_trip() {
        let grid = BodyGrid::unit_cube(3, 6, FdOrder::Fourth).unwrap();
        let g = random_galilean(77);
        let a = g.as_placement(&grid).unwrap();
        let e = extract_galilean(&a);
        assert!(galilean_reconstruction_error(&a, &e).unwrap() <= 1e-12);
    }
}
