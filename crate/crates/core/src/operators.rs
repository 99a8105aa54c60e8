//! Step maps used by the cyclic driver.
//!
//! `RelaxedProjector` is `(1 - lambda) Id + lambda P_C`. `IntrepidProjector`
//! maps onto the enlargement `Z_[beta]` in three regimes, by distance to
//! the core `Z`:
//!
//! * `d_Z(x) <= beta`: identity step;
//! * `d_Z(x) >= 2 beta`: projection onto `Z` itself;
//! * otherwise `x + (1 - d_Z(x)/beta)(x - P_Z x)`, a short overshoot past
//!   the boundary of the enlargement.
//!
//! The output always lies on the segment `[x, P_Z x]` and inside `Z_[beta]`.

use thiserror::Error;

use crate::geometry::{
    check_dim, dist2, first_overlap, ConstraintSet, GeometryError, Hyperplane, Hyperslab,
    SlabFamily, SparseNormal,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OperatorError {
    #[error("relaxation parameter must lie in (0, 2), got {0}")]
    InvalidRelaxation(f64),
    #[error("intrepid radius must be positive and finite, got {0}")]
    InvalidRadius(f64),
    #[error("certificate requires 0 <= alpha <= beta (alpha = {alpha}, beta = {beta})")]
    AlphaOutOfRange { alpha: f64, beta: f64 },
    #[error("reference point is at distance {distance} from the core, exceeding alpha = {alpha}")]
    ReferenceTooFar { distance: f64, alpha: f64 },
    #[error("blocks {first} and {second} share support coordinate {coord}")]
    OverlappingSupport {
        first: usize,
        second: usize,
        coord: usize,
    },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

pub type Result<T> = std::result::Result<T, OperatorError>;

/// A map `T: R^n -> R^n`.
pub trait Operator: Send + Sync {
    fn dim(&self) -> usize;

    /// Overwrite `x` with `T x`. The caller guarantees `x.len() == dim()`.
    fn apply_in_place(&self, x: &mut [f64]);

    fn apply(&self, x: &[f64]) -> std::result::Result<Vec<f64>, GeometryError> {
        check_dim(self.dim(), x)?;
        let mut y = x.to_vec();
        self.apply_in_place(&mut y);
        Ok(y)
    }
}

impl<T: Operator + ?Sized> Operator for Box<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn apply_in_place(&self, x: &mut [f64]) {
        (**self).apply_in_place(x)
    }
}

/// Plain projection `P_C`, i.e. a relaxed projector with `lambda = 1`.
#[derive(Debug, Clone)]
pub struct Projector<S>(pub S);

impl<S: ConstraintSet> Operator for Projector<S> {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn apply_in_place(&self, x: &mut [f64]) {
        self.0.project_in_place(x)
    }
}

#[derive(Debug, Clone)]
pub struct RelaxedProjector<S> {
    target: S,
    lambda: f64,
}

impl<S: ConstraintSet> RelaxedProjector<S> {
    pub fn new(target: S, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda < 2.0) {
            return Err(OperatorError::InvalidRelaxation(lambda));
        }
        Ok(Self { target, lambda })
    }

    pub fn target(&self) -> &S {
        &self.target
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

impl<S: ConstraintSet> Operator for RelaxedProjector<S> {
    fn dim(&self) -> usize {
        self.target.dim()
    }

    fn apply_in_place(&self, x: &mut [f64]) {
        // lambda == 1 must reproduce P_C bit for bit.
        if self.lambda == 1.0 {
            self.target.project_in_place(x);
            return;
        }
        let mut p = x.to_vec();
        self.target.project_in_place(&mut p);
        for (xi, pi) in x.iter_mut().zip(&p) {
            *xi += self.lambda * (pi - *xi);
        }
    }
}

pub fn apply_relaxed<S: ConstraintSet>(
    r: &RelaxedProjector<S>,
    x: &[f64],
) -> std::result::Result<Vec<f64>, GeometryError> {
    r.apply(x)
}

/// Which branch of the intrepid map fires for a given distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Identity,
    Reflection,
    Projection,
}

impl Regime {
    /// Ties go to the identity branch at `d = beta` and to the projection
    /// branch at `d = 2 beta`.
    pub fn classify(distance: f64, radius: f64) -> Self {
        if distance <= radius {
            Regime::Identity
        } else if distance >= 2.0 * radius {
            Regime::Projection
        } else {
            Regime::Reflection
        }
    }
}

#[derive(Debug, Clone)]
pub struct IntrepidProjector<S> {
    core: S,
    radius: f64,
}

impl<S: ConstraintSet> IntrepidProjector<S> {
    pub fn new(core: S, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(OperatorError::InvalidRadius(radius));
        }
        Ok(Self { core, radius })
    }

    pub fn core(&self) -> &S {
        &self.core
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn regime(&self, x: &[f64]) -> std::result::Result<Regime, GeometryError> {
        Ok(Regime::classify(self.core.distance(x)?, self.radius))
    }

    /// Applies the map and reports the branch taken.
    pub fn step(&self, x: &mut [f64]) -> Regime {
        let mut p = x.to_vec();
        self.core.project_in_place(&mut p);
        let d = dist2(x, &p);
        let regime = Regime::classify(d, self.radius);
        match regime {
            Regime::Identity => {}
            Regime::Projection => x.copy_from_slice(&p),
            Regime::Reflection => {
                let factor = 1.0 - d / self.radius;
                for (xi, pi) in x.iter_mut().zip(&p) {
                    *xi += factor * (*xi - pi);
                }
            }
        }
        regime
    }
}

impl<S: ConstraintSet> Operator for IntrepidProjector<S> {
    fn dim(&self) -> usize {
        self.core.dim()
    }

    fn apply_in_place(&self, x: &mut [f64]) {
        self.step(x);
    }
}

pub fn apply_intrepid<S: ConstraintSet>(
    q: &IntrepidProjector<S>,
    x: &[f64],
) -> std::result::Result<Vec<f64>, GeometryError> {
    q.apply(x)
}

/// Intrepid step onto the slab `plane_[radius]` without allocating.
/// A zero radius degenerates to projection onto the plane.
#[inline]
pub(crate) fn intrepid_plane_step(plane: &Hyperplane, radius: f64, x: &mut [f64]) -> Regime {
    intrepid_affine_step(plane.normal(), plane.offset(), radius, x)
}

/// Same as [`intrepid_plane_step`] for the plane `<a, x> = offset`.
#[inline]
pub(crate) fn intrepid_affine_step(
    normal: &SparseNormal,
    offset: f64,
    radius: f64,
    x: &mut [f64],
) -> Regime {
    let t = (normal.dot(x) - offset) / normal.norm_sq();
    if t == 0.0 {
        return Regime::Identity;
    }
    let d = t.abs() * normal.norm();
    let regime = Regime::classify(d, radius);
    match regime {
        Regime::Identity => {}
        Regime::Projection => normal.axpy(-t, x),
        Regime::Reflection => normal.axpy((1.0 - d / radius) * t, x),
    }
    regime
}

/// Intrepid step onto the slab `lower <= <a, x> <= upper`, viewed as the
/// enlargement of its midplane by its Euclidean half-width.
///
/// Works in units of `<a, x>`: a point is left alone exactly when it passes
/// the slab's own membership test, and a point at excess `e` beyond a face
/// moves to `e^2 / w` inside that face (`w` the half-width in the same
/// units), which is the reflection branch written without cancellation.
/// That depth is floored at a few rounding units of `<a, x>`; if rounding
/// would still leave the image outside, the point is pulled inside by the
/// smallest step found by doubling. A zero-width slab gets plain projection.
pub(crate) fn intrepid_slab_step(
    normal: &SparseNormal,
    lower: f64,
    upper: f64,
    x: &mut [f64],
) -> Regime {
    let v = normal.dot(x);
    if lower <= v && v <= upper {
        return Regime::Identity;
    }
    let half = 0.5 * (upper - lower);
    let (bound, excess, inward) = if v > upper {
        (upper, v - upper, -1.0)
    } else {
        (lower, lower - v, 1.0)
    };
    // Reflections land at least a few rounding units inside the face, so
    // later steps on other rows cannot push the point back out by rounding.
    let scale: f64 = normal.entries().iter().map(|&(i, a)| (a * x[i]).abs()).sum();
    let guard = 16.0 * f64::EPSILON * scale.max(bound.abs());
    let (regime, target) = if excess >= half {
        (Regime::Projection, lower + half)
    } else {
        let depth = (excess * (excess / half)).max(guard).min(half);
        (Regime::Reflection, bound + inward * depth)
    };
    let nsq = normal.norm_sq();
    let entries = normal.entries();
    let mut small = [0.0; 4];
    let mut large = Vec::new();
    let saved: &mut [f64] = if entries.len() <= small.len() {
        &mut small[..entries.len()]
    } else {
        large.resize(entries.len(), 0.0);
        &mut large
    };
    for (s, &(i, _)) in saved.iter_mut().zip(entries) {
        *s = x[i];
    }
    normal.axpy((target - v) / nsq, x);
    let mut w = normal.dot(x);
    let mut delta = (target - v).abs().max(f64::EPSILON * v.abs());
    let mut tries = 0;
    while !(lower <= w && w <= upper) && tries < 64 {
        // rounding left the image outside; retry from `x` with a larger step
        for (s, &(i, _)) in saved.iter().zip(entries) {
            x[i] = *s;
        }
        delta *= 2.0;
        normal.axpy(inward * delta / nsq, x);
        w = normal.dot(x);
        tries += 1;
    }
    regime
}

/// Intrepid projectors onto hyperplane enlargements whose normals have
/// pairwise disjoint supports. The blocks commute, so one pass applies
/// all of them.
#[derive(Debug, Clone)]
enum Block {
    Plane(Hyperplane, f64),
    Slab(Hyperslab),
}

impl Block {
    fn normal(&self) -> &SparseNormal {
        match self {
            Block::Plane(h, _) => h.normal(),
            Block::Slab(s) => s.normal(),
        }
    }

    #[inline]
    fn step(&self, x: &mut [f64]) -> Regime {
        match self {
            Block::Plane(h, r) => intrepid_plane_step(h, *r, x),
            Block::Slab(s) => intrepid_slab_step(s.normal(), s.lower(), s.upper(), x),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BlockIntrepidProjector {
    dim: usize,
    blocks: Vec<Block>,
}

impl BlockIntrepidProjector {
    pub fn new(dim: usize, blocks: Vec<IntrepidProjector<Hyperplane>>) -> Result<Self> {
        let blocks = blocks
            .into_iter()
            .map(|q| Block::Plane(q.core, q.radius))
            .collect();
        Self::from_parts(dim, blocks)
    }

    /// Each slab becomes the enlargement of its midplane with radius equal
    /// to its Euclidean half-width. Zero-width slabs get plain projection.
    pub fn from_slab_family(family: &SlabFamily) -> Self {
        let blocks = family.slabs().iter().cloned().map(Block::Slab).collect();
        Self {
            dim: family.dim(),
            blocks,
        }
    }

    fn from_parts(dim: usize, blocks: Vec<Block>) -> Result<Self> {
        for b in &blocks {
            if b.normal().dim() != dim {
                return Err(GeometryError::DimensionMismatch {
                    expected: dim,
                    found: b.normal().dim(),
                }
                .into());
            }
        }
        if let Some((first, second, coord)) = first_overlap(blocks.iter().map(Block::normal))
        {
            return Err(OperatorError::OverlappingSupport {
                first,
                second,
                coord,
            });
        }
        Ok(Self { dim, blocks })
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Apply the blocks in the given order (any permutation of `0..len()`).
    pub fn apply_in_order(&self, order: &[usize], x: &mut [f64]) {
        for &b in order {
            self.blocks[b].step(x);
        }
    }
}

impl Operator for BlockIntrepidProjector {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply_in_place(&self, x: &mut [f64]) {
        for b in &self.blocks {
            b.step(x);
        }
    }
}

pub fn apply_block_intrepid(
    b: &BlockIntrepidProjector,
    x: &[f64],
) -> std::result::Result<Vec<f64>, GeometryError> {
    b.apply(x)
}

/// Slack of `||x-y||^2 - ||Qx-y||^2 - 2(beta-alpha)||x-Qx||`, which is
/// nonnegative whenever `y` lies in `Z_[alpha]` with `alpha <= beta`.
///
/// The distance precondition on `y` is checked with a relative tolerance
/// of `1e-12` to absorb rounding in sampled reference points.
pub fn decrease_certificate<S: ConstraintSet>(
    q: &IntrepidProjector<S>,
    x: &[f64],
    y: &[f64],
    alpha: f64,
) -> Result<f64> {
    check_dim(q.dim(), x)?;
    check_dim(q.dim(), y)?;
    if !(0.0..=q.radius).contains(&alpha) {
        return Err(OperatorError::AlphaOutOfRange {
            alpha,
            beta: q.radius,
        });
    }
    let dy = q.core.distance(y)?;
    if dy > alpha + 1e-12 * alpha.max(1.0) {
        return Err(OperatorError::ReferenceTooFar {
            distance: dy,
            alpha,
        });
    }
    let mut qx = x.to_vec();
    q.step(&mut qx);
    let before = dist2(x, y).powi(2);
    let after = dist2(&qx, y).powi(2);
    Ok(before - after - 2.0 * (q.radius - alpha) * dist2(x, &qx))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Hyperslab, Point};
    use approx::assert_abs_diff_eq;

    fn close(a: &[f64], b: &[f64]) {
        for (u, v) in a.iter().zip(b) {
            assert_abs_diff_eq!(u, v, epsilon = 1e-12);
        }
    }

    fn halfplane() -> Hyperslab {
        // {x_1 <= 0} with a lower face far enough away to never bind.
        Hyperslab::new(&[1.0, 0.0], -1e300, 0.0).unwrap()
    }

    #[test]
    fn relaxed_examples() {
        let r = RelaxedProjector::new(halfplane(), 1.0).unwrap();
        assert_eq!(apply_relaxed(&r, &[2.0, 3.0]).unwrap(), vec![0.0, 3.0]);
        let r = RelaxedProjector::new(halfplane(), 0.5).unwrap();
        close(&apply_relaxed(&r, &[2.0, 0.0]).unwrap(), &[1.0, 0.0]);
        let r = RelaxedProjector::new(halfplane(), 1.5).unwrap();
        close(&apply_relaxed(&r, &[2.0, 0.0]).unwrap(), &[-1.0, 0.0]);
        assert_eq!(
            RelaxedProjector::new(halfplane(), 2.0).unwrap_err(),
            OperatorError::InvalidRelaxation(2.0)
        );
        assert!(RelaxedProjector::new(halfplane(), 0.0).is_err());
    }

    #[test]
    fn intrepid_examples() {
        let z = Hyperplane::new(&[1.0, 0.0], 0.0).unwrap();
        let q = IntrepidProjector::new(z, 1.0).unwrap();
        assert_eq!(apply_intrepid(&q, &[0.5, 7.0]).unwrap(), vec![0.5, 7.0]);
        close(&apply_intrepid(&q, &[3.0, 7.0]).unwrap(), &[0.0, 7.0]);
        close(&apply_intrepid(&q, &[1.5, 7.0]).unwrap(), &[0.75, 7.0]);
        assert!(IntrepidProjector::new(Point(vec![0.0]), 0.0).is_err());
    }

    #[test]
    fn intrepid_seams() {
        let z = Hyperplane::new(&[1.0, 0.0], 0.0).unwrap();
        let q = IntrepidProjector::new(z, 1.0).unwrap();
        assert_eq!(q.regime(&[1.0, 0.0]).unwrap(), Regime::Identity);
        assert_eq!(q.regime(&[2.0, 0.0]).unwrap(), Regime::Projection);
        // reflection formula evaluated at the seams
        for (d, expected) in [(1.0, 1.0), (2.0, 0.0)] {
            let reflected = d + (1.0 - d / 1.0) * d;
            assert_abs_diff_eq!(reflected, expected, epsilon = 1e-12);
            assert_abs_diff_eq!(q.apply(&[d, 0.0]).unwrap()[0], expected, epsilon = 1e-12);
        }
    }

    #[test]
    fn block_examples() {
        let z1 = IntrepidProjector::new(Hyperplane::new(&[1.0, 0.0], 0.0).unwrap(), 1.0).unwrap();
        let z2 = IntrepidProjector::new(Hyperplane::new(&[0.0, 1.0], 0.0).unwrap(), 1.0).unwrap();
        let single = BlockIntrepidProjector::new(2, vec![z1.clone()]).unwrap();
        close(&single.apply(&[1.5, 4.0]).unwrap(), &z1.apply(&[1.5, 4.0]).unwrap());
        let b = BlockIntrepidProjector::new(2, vec![z1, z2]).unwrap();
        close(&apply_block_intrepid(&b, &[3.0, 1.5]).unwrap(), &[0.0, 0.75]);
        assert_eq!(b.apply(&[0.2, -0.9]).unwrap(), vec![0.2, -0.9]);
    }

    #[test]
    fn block_rejects_shared_support() {
        let a = IntrepidProjector::new(Hyperplane::new(&[1.0, 1.0, 0.0], 0.0).unwrap(), 1.0).unwrap();
        let b = IntrepidProjector::new(Hyperplane::new(&[0.0, 1.0, 1.0], 0.0).unwrap(), 1.0).unwrap();
        assert_eq!(
            BlockIntrepidProjector::new(3, vec![a, b]).unwrap_err(),
            OperatorError::OverlappingSupport {
                first: 0,
                second: 1,
                coord: 1
            }
        );
    }

    #[test]
    fn block_from_family_matches_slab_radius() {
        let slab = Hyperslab::new(&[0.0, 2.0], -2.0, 6.0).unwrap();
        let fam = SlabFamily::new(2, vec![slab]).unwrap();
        let b = BlockIntrepidProjector::from_slab_family(&fam);
        // midplane x_2 = 1, radius 2: x_2 = 6 is at distance 5 >= 4
        close(&b.apply(&[0.0, 6.0]).unwrap(), &[0.0, 1.0]);
        // distance 3: reflection to 4 + (1 - 3/2) * 3
        close(&b.apply(&[0.0, 4.0]).unwrap(), &[0.0, 2.5]);
    }

    #[test]
    fn certificate_examples() {
        let z = Hyperplane::new(&[1.0, 0.0], 0.0).unwrap();
        let q = IntrepidProjector::new(z, 1.0).unwrap();
        assert_eq!(decrease_certificate(&q, &[0.5, 1.0], &[0.0, 7.0], 0.0).unwrap(), 0.0);
        assert_abs_diff_eq!(
            decrease_certificate(&q, &[3.0, 7.0], &[0.0, 7.0], 0.0).unwrap(),
            3.0,
            epsilon = 1e-12
        );
        assert!(matches!(
            decrease_certificate(&q, &[3.0, 7.0], &[0.5, 7.0], 0.2),
            Err(OperatorError::ReferenceTooFar { .. })
        ));
        assert!(matches!(
            decrease_certificate(&q, &[3.0, 7.0], &[0.0, 7.0], 1.5),
            Err(OperatorError::AlphaOutOfRange { .. })
        ));
    }
}
