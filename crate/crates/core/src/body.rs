//! Discretized material bundle: a box grid over the base, a handful of fiber
//! sample points, finite differences and reference connections.

use std::ops::{Add, Mul};

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{AffineCoeffs, AffineConnection, SpaceSignature};

pub const MIN_POINTS_PER_AXIS: usize = 5;
pub const DEFAULT_POINTS: usize = 17;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FdOrder {
    Second,
    Fourth,
}

impl FdOrder {
    pub fn from_int(k: u32) -> Result<Self> {
        match k {
            2 => Ok(Self::Second),
            4 => Ok(Self::Fourth),
            _ => Err(Error::InadmissibleParams(format!("difference order {k} (use 2 or 4)"))),
        }
    }

    pub fn as_int(self) -> i32 {
        match self {
            Self::Second => 2,
            Self::Fourth => 4,
        }
    }

    /// Stencil half-width of the central formula.
    pub fn radius(self) -> usize {
        match self {
            Self::Second => 1,
            Self::Fourth => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BodyGrid {
    signature: SpaceSignature,
    origin: Vec<f64>,
    spacing: Vec<f64>,
    counts: Vec<usize>,
    fiber_samples: Vec<Vector3<f64>>,
    order: FdOrder,
}

impl BodyGrid {
    pub fn new(origin: Vec<f64>, spacing: Vec<f64>, counts: Vec<usize>, order: FdOrder) -> Result<Self> {
        let n = origin.len();
        let signature = SpaceSignature::new(n)?;
        for (len, what) in [(spacing.len(), "spacing"), (counts.len(), "counts")] {
            if len != n {
                return Err(Error::InadmissibleParams(format!("{what} has {len} entries, expected {n}")));
            }
        }
        if spacing.iter().any(|h| !(*h > 0.0 && h.is_finite())) {
            return Err(Error::InadmissibleParams("grid spacing must be positive".into()));
        }
        for (axis, &count) in counts.iter().enumerate() {
            if count < MIN_POINTS_PER_AXIS {
                return Err(Error::GridTooSmall { axis, count, min: MIN_POINTS_PER_AXIS });
            }
        }
        Ok(Self { signature, origin, spacing, counts, fiber_samples: default_fiber_samples(), order })
    }

    /// `[0, 1]ⁿ` with `points` nodes per axis.
    pub fn unit_cube(n: usize, points: usize, order: FdOrder) -> Result<Self> {
        let h = 1.0 / (points.max(2) - 1) as f64;
        Self::new(vec![0.0; n], vec![h; n], vec![points; n], order)
    }

    pub fn default_for(n: usize) -> Result<Self> {
        Self::unit_cube(n, DEFAULT_POINTS, FdOrder::Fourth)
    }

    pub fn with_fiber_samples(mut self, samples: Vec<Vector3<f64>>) -> Result<Self> {
        if !samples.iter().any(|y| y.norm() == 0.0) {
            return Err(Error::InadmissibleParams("fiber samples must contain 0".into()));
        }
        let m = DMatrix::from_fn(samples.len(), 4, |i, c| if c == 0 { 1.0 } else { samples[i][c - 1] });
        if m.rank(1e-10) < 4 {
            return Err(Error::InadmissibleParams("fiber samples are not affinely independent".into()));
        }
        self.fiber_samples = samples;
        Ok(self)
    }

    pub fn signature(&self) -> SpaceSignature {
        self.signature
    }

    pub fn dim(&self) -> usize {
        self.signature.base_dim()
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn order(&self) -> FdOrder {
        self.order
    }

    pub fn fiber_samples(&self) -> &[Vector3<f64>] {
        &self.fiber_samples
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Acceptance threshold for finite-difference residuals, `10·h^order`.
    pub fn fd_tolerance(&self) -> f64 {
        let h = self.spacing.iter().cloned().fold(0.0, f64::max);
        10.0 * h.powi(self.order.as_int())
    }

    /// Axis 0 varies fastest.
    pub fn multi_index(&self, mut idx: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.dim());
        for &c in &self.counts {
            out.push(idx % c);
            idx /= c;
        }
        out
    }

    pub fn index(&self, mi: &[usize]) -> usize {
        let mut idx = 0;
        for a in (0..self.dim()).rev() {
            idx = idx * self.counts[a] + mi[a];
        }
        idx
    }

    pub fn coords(&self, idx: usize) -> Vec<f64> {
        self.multi_index(idx)
            .iter()
            .enumerate()
            .map(|(a, &i)| self.origin[a] + self.spacing[a] * i as f64)
            .collect()
    }

    pub fn point(&self, idx: usize) -> DVector<f64> {
        DVector::from_vec(self.coords(idx))
    }

    /// Nodes at least `width` steps away from every face.
    pub fn is_interior(&self, idx: usize, width: usize) -> bool {
        self.multi_index(idx)
            .iter()
            .zip(&self.counts)
            .all(|(&i, &c)| i >= width && i + width < c)
    }

    pub fn interior_indices(&self, width: usize) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.is_interior(i, width)).collect()
    }

    pub fn upper(&self, axis: usize) -> f64 {
        self.origin[axis] + self.spacing[axis] * (self.counts[axis] - 1) as f64
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        let eps = 1e-12;
        (0..self.dim()).all(|a| {
            let h = self.spacing[a];
            x[a] >= self.origin[a] - eps * h && x[a] <= self.upper(a) + eps * h
        })
    }

    pub fn sample<T, F: Fn(&[f64]) -> T>(&self, f: F) -> Vec<T> {
        (0..self.len()).map(|i| f(&self.coords(i))).collect()
    }
}

fn default_fiber_samples() -> Vec<Vector3<f64>> {
    vec![
        Vector3::zeros(),
        Vector3::x(),
        Vector3::y(),
        Vector3::z(),
        Vector3::new(-0.5, 0.8, -1.2),
    ]
}

/// Partial derivative along `axis` of a field sampled on the grid.
pub fn fd_partial<T>(grid: &BodyGrid, field: &[T], axis: usize) -> Result<Vec<T>>
where
    T: Clone + Add<Output = T> + Mul<f64, Output = T>,
{
    let count = grid.counts[axis];
    if count < MIN_POINTS_PER_AXIS {
        return Err(Error::GridTooSmall { axis, count, min: MIN_POINTS_PER_AXIS });
    }
    if field.len() != grid.len() {
        return Err(Error::DimensionMismatch { expected: grid.len(), found: field.len() });
    }
    let h = grid.spacing[axis];
    let stride: usize = grid.counts[..axis].iter().product();
    let weighted = |idx: usize, i: usize, w: &[(isize, f64)], denom: f64| -> T {
        let base = idx - i * stride;
        let mut it = w.iter().map(|&(off, c)| {
            let j = (i as isize + off) as usize;
            field[base + j * stride].clone() * (c / denom)
        });
        let first = it.next().expect("nonempty stencil");
        it.fold(first, |acc, t| acc + t)
    };
    let out = (0..grid.len())
        .map(|idx| {
            let i = grid.multi_index(idx)[axis];
            let last = count - 1;
            match grid.order {
                FdOrder::Second => {
                    let d = 2.0 * h;
                    if i == 0 {
                        weighted(idx, i, &[(0, -3.0), (1, 4.0), (2, -1.0)], d)
                    } else if i == last {
                        weighted(idx, i, &[(0, 3.0), (-1, -4.0), (-2, 1.0)], d)
                    } else {
                        weighted(idx, i, &[(-1, -1.0), (1, 1.0)], d)
                    }
                }
                FdOrder::Fourth => {
                    let d = 12.0 * h;
                    if i == 0 {
                        weighted(idx, i, &[(0, -25.0), (1, 48.0), (2, -36.0), (3, 16.0), (4, -3.0)], d)
                    } else if i == 1 {
                        weighted(idx, i, &[(-1, -3.0), (0, -10.0), (1, 18.0), (2, -6.0), (3, 1.0)], d)
                    } else if i == last {
                        weighted(idx, i, &[(0, 25.0), (-1, -48.0), (-2, 36.0), (-3, -16.0), (-4, 3.0)], d)
                    } else if i == last - 1 {
                        weighted(idx, i, &[(1, 3.0), (0, 10.0), (-1, -18.0), (-2, 6.0), (-3, -1.0)], d)
                    } else {
                        weighted(idx, i, &[(-2, 1.0), (-1, -8.0), (1, 8.0), (2, -1.0)], d)
                    }
                }
            }
        })
        .collect();
    Ok(out)
}

/// Jacobian of a vector field: an `m×n` matrix per node.
pub fn fd_gradient(grid: &BodyGrid, field: &[DVector<f64>]) -> Result<Vec<DMatrix<f64>>> {
    let n = grid.dim();
    let partials = (0..n).map(|a| fd_partial(grid, field, a)).collect::<Result<Vec<_>>>()?;
    Ok((0..grid.len())
        .map(|idx| {
            let m = field[idx].len();
            DMatrix::from_fn(m, n, |r, c| partials[c][idx][r])
        })
        .collect())
}

pub fn fd_gradient_vec3(grid: &BodyGrid, field: &[Vector3<f64>]) -> Result<Vec<DMatrix<f64>>> {
    let n = grid.dim();
    let partials = (0..n).map(|a| fd_partial(grid, field, a)).collect::<Result<Vec<_>>>()?;
    Ok((0..grid.len())
        .map(|idx| DMatrix::from_fn(3, n, |r, c| partials[c][idx][r]))
        .collect())
}

/// One matrix per axis at each node.
pub fn fd_gradient_mat3(grid: &BodyGrid, field: &[Matrix3<f64>]) -> Result<Vec<Vec<Matrix3<f64>>>> {
    let n = grid.dim();
    let partials = (0..n).map(|a| fd_partial(grid, field, a)).collect::<Result<Vec<_>>>()?;
    Ok((0..grid.len())
        .map(|idx| (0..n).map(|a| partials[a][idx]).collect())
        .collect())
}

/// `x ↦ c + a·x + Σ amp·sin(k·x + p)` with its gradient available in closed form.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothScalar {
    c: f64,
    a: Vec<f64>,
    modes: Vec<(f64, Vec<f64>, f64)>,
}

impl SmoothScalar {
    pub fn random<R: Rng>(rng: &mut R, n: usize, scale: f64, modes: usize) -> Self {
        let mut g = || rng.sample::<f64, _>(StandardNormal);
        let c = scale * g();
        let a = (0..n).map(|_| scale * g()).collect();
        let modes = (0..modes)
            .map(|_| {
                let amp = 0.5 * scale * g();
                let k = (0..n).map(|_| g()).collect();
                let p = 3.0 * g();
                (amp, k, p)
            })
            .collect();
        Self { c, a, modes }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let mut v = self.c + self.a.iter().zip(x).map(|(a, x)| a * x).sum::<f64>();
        for (amp, k, p) in &self.modes {
            v += amp * (k.iter().zip(x).map(|(k, x)| k * x).sum::<f64>() + p).sin();
        }
        v
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = self.a.clone();
        for (amp, k, p) in &self.modes {
            let arg = k.iter().zip(x).map(|(k, x)| k * x).sum::<f64>() + p;
            let d = amp * arg.cos();
            for (gi, ki) in g.iter_mut().zip(k) {
                *gi += d * ki;
            }
        }
        g
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReferenceKind {
    CanonicalTrivial,
    Randomized(u64),
}

/// A reference connection on the body, evaluated at arbitrary base points.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceConnection {
    kind: ReferenceKind,
    n: usize,
    c0: Vec<SmoothScalar>,
    c1: Vec<SmoothScalar>,
}

impl ReferenceConnection {
    pub fn kind(&self) -> ReferenceKind {
        self.kind
    }

    pub fn at(&self, x: &[f64]) -> AffineConnection {
        let n = self.n;
        if self.kind == ReferenceKind::CanonicalTrivial {
            return AffineConnection::trivial(n);
        }
        let c0 = DMatrix::from_fn(3, n, |r, j| self.c0[r + 3 * j].value(x));
        let c1 = (0..n)
            .map(|j| Matrix3::from_fn(|r, c| self.c1[9 * j + 3 * r + c].value(x)))
            .collect();
        AffineConnection(AffineCoeffs { c0, c1 })
    }

    pub fn sample(&self, grid: &BodyGrid) -> Vec<AffineConnection> {
        grid.sample(|x| self.at(x))
    }
}

pub fn reference_connection(kind: ReferenceKind, n: usize) -> ReferenceConnection {
    match kind {
        ReferenceKind::CanonicalTrivial => ReferenceConnection { kind, n, c0: vec![], c1: vec![] },
        ReferenceKind::Randomized(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let c0 = (0..3 * n).map(|_| SmoothScalar::random(&mut rng, n, 0.5, 2)).collect();
            let c1 = (0..9 * n).map(|_| SmoothScalar::random(&mut rng, n, 0.3, 2)).collect();
            ReferenceConnection { kind, n, c0, c1 }
        }
    }
}
