//! Closed sets with exact nearest-point maps.
//!
//! Every set here has a closed-form projection, so distances and
//! membership are derived from a single projection evaluation. Normals are
//! stored sparsely: the road model builds thousands of slabs that each touch
//! two or three coordinates of a vector with thousands of entries.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },
    #[error("normal vector must be nonzero and finite")]
    DegenerateNormal,
    #[error("invalid slab bounds: lower {lower} > upper {upper}")]
    InvalidBounds { lower: f64, upper: f64 },
    #[error("radius must be a finite nonnegative number, got {0}")]
    InvalidRadius(f64),
    #[error("slabs {first} and {second} share support coordinate {coord}")]
    OverlappingSupport {
        first: usize,
        second: usize,
        coord: usize,
    },
    #[error("value count {values} does not match index count {indices}")]
    LengthMismatch { indices: usize, values: usize },
    #[error("zero-dimensional ambient space")]
    EmptyDimension,
}

pub type Result<T> = std::result::Result<T, GeometryError>;

pub(crate) fn check_dim(expected: usize, x: &[f64]) -> Result<()> {
    if x.len() != expected {
        return Err(GeometryError::DimensionMismatch {
            expected,
            found: x.len(),
        });
    }
    Ok(())
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| u * v).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(u, v)| (u - v) * (u - v))
        .sum::<f64>()
        .sqrt()
}

pub fn dist_inf(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (u, v)| f64::max(m, (u - v).abs()))
}

/// Norms of the displacement `x - P(x)`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Residual {
    pub l2: f64,
    pub linf: f64,
}

/// A closed set in `R^n` with an exact projection.
///
/// Implementations only need `dim` and `project_in_place`; callers are
/// expected to have checked the dimension before calling the in-place form.
pub trait ConstraintSet: Send + Sync {
    fn dim(&self) -> usize;

    /// Overwrite `x` with its nearest point in the set.
    fn project_in_place(&self, x: &mut [f64]);

    /// Residual norms of `x - P(x)`.
    fn residual(&self, x: &[f64]) -> Residual {
        let mut p = x.to_vec();
        self.project_in_place(&mut p);
        Residual {
            l2: dist2(x, &p),
            linf: dist_inf(x, &p),
        }
    }

    fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), x)?;
        let mut p = x.to_vec();
        self.project_in_place(&mut p);
        Ok(p)
    }

    /// Euclidean distance `d_S(x) = ||x - P_S(x)||`.
    fn distance(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x)?;
        Ok(self.residual(x).l2)
    }

    /// `true` iff the projection leaves `x` unchanged.
    fn contains(&self, x: &[f64]) -> Result<bool> {
        Ok(self.distance(x)? == 0.0)
    }
}

impl<S: ConstraintSet + ?Sized> ConstraintSet for Box<S> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn project_in_place(&self, x: &mut [f64]) {
        (**self).project_in_place(x)
    }
    fn residual(&self, x: &[f64]) -> Residual {
        (**self).residual(x)
    }
}

/// Free-function form of [`ConstraintSet::distance`].
pub fn distance<S: ConstraintSet + ?Sized>(set: &S, x: &[f64]) -> Result<f64> {
    set.distance(x)
}

/// Sparse representation of a nonzero normal vector.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseNormal {
    dim: usize,
    entries: Vec<(usize, f64)>,
    norm_sq: f64,
}

impl SparseNormal {
    pub fn from_dense(a: &[f64]) -> Result<Self> {
        let entries = a
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, v)| (i, *v))
            .collect();
        Self::new(a.len(), entries)
    }

    /// Entries are sorted by index; zero entries are dropped.
    pub fn new(dim: usize, mut entries: Vec<(usize, f64)>) -> Result<Self> {
        if dim == 0 {
            return Err(GeometryError::EmptyDimension);
        }
        entries.retain(|(_, v)| *v != 0.0);
        entries.sort_by_key(|(i, _)| *i);
        if let Some(&(index, _)) = entries.iter().find(|(i, _)| *i >= dim) {
            return Err(GeometryError::IndexOutOfRange { index, dim });
        }
        if entries.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(GeometryError::DegenerateNormal);
        }
        let norm_sq: f64 = entries.iter().map(|(_, v)| v * v).sum();
        if !(norm_sq > 0.0 && norm_sq.is_finite()) {
            return Err(GeometryError::DegenerateNormal);
        }
        Ok(Self {
            dim,
            entries,
            norm_sq,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn support(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries.iter().map(|(i, _)| *i)
    }

    pub fn norm_sq(&self) -> f64 {
        self.norm_sq
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq.sqrt()
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut a = vec![0.0; self.dim];
        for &(i, v) in &self.entries {
            a[i] = v;
        }
        a
    }

    #[inline]
    pub fn dot(&self, x: &[f64]) -> f64 {
        self.entries.iter().map(|&(i, v)| v * x[i]).sum()
    }

    /// `x += t * a`
    #[inline]
    pub fn axpy(&self, t: f64, x: &mut [f64]) {
        for &(i, v) in &self.entries {
            x[i] += t * v;
        }
    }

    /// Squared l2 norm and max-norm of `t * a`.
    #[inline]
    fn scaled_norms(&self, t: f64) -> (f64, f64) {
        let linf = self
            .entries
            .iter()
            .fold(0.0_f64, |m, (_, v)| m.max((t * v).abs()));
        (t * t * self.norm_sq, linf)
    }
}

/// `{x : <a, x> = offset}`
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperplane {
    normal: SparseNormal,
    offset: f64,
}

impl Hyperplane {
    pub fn new(normal: &[f64], offset: f64) -> Result<Self> {
        Ok(Self {
            normal: SparseNormal::from_dense(normal)?,
            offset,
        })
    }

    pub fn from_sparse(normal: SparseNormal, offset: f64) -> Self {
        Self { normal, offset }
    }

    pub fn normal(&self) -> &SparseNormal {
        &self.normal
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    /// Signed distance `(<a,x> - offset) / ||a||`.
    #[inline]
    pub fn signed_distance(&self, x: &[f64]) -> f64 {
        (self.normal.dot(x) - self.offset) / self.normal.norm()
    }

    /// Coefficient `t` with `P(x) = x - t a`.
    #[inline]
    pub(crate) fn step_coefficient(&self, x: &[f64]) -> f64 {
        (self.normal.dot(x) - self.offset) / self.normal.norm_sq()
    }
}

impl ConstraintSet for Hyperplane {
    fn dim(&self) -> usize {
        self.normal.dim()
    }

    fn project_in_place(&self, x: &mut [f64]) {
        let t = self.step_coefficient(x);
        self.normal.axpy(-t, x);
    }

    fn residual(&self, x: &[f64]) -> Residual {
        let (sq, linf) = self.normal.scaled_norms(self.step_coefficient(x));
        Residual {
            l2: sq.sqrt(),
            linf,
        }
    }
}

pub fn project_hyperplane(h: &Hyperplane, x: &[f64]) -> Result<Vec<f64>> {
    h.project(x)
}

/// `{x : lower <= <a, x> <= upper}`
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperslab {
    normal: SparseNormal,
    lower: f64,
    upper: f64,
}

impl Hyperslab {
    pub fn new(normal: &[f64], lower: f64, upper: f64) -> Result<Self> {
        Self::from_sparse(SparseNormal::from_dense(normal)?, lower, upper)
    }

    pub fn from_sparse(normal: SparseNormal, lower: f64, upper: f64) -> Result<Self> {
        if !(lower <= upper) {
            return Err(GeometryError::InvalidBounds { lower, upper });
        }
        Ok(Self {
            normal,
            lower,
            upper,
        })
    }

    pub fn normal(&self) -> &SparseNormal {
        &self.normal
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    /// The hyperplane halfway between the two faces.
    pub fn midplane(&self) -> Hyperplane {
        Hyperplane {
            normal: self.normal.clone(),
            offset: 0.5 * (self.lower + self.upper),
        }
    }

    /// Euclidean half-width, i.e. the enlargement radius around the midplane.
    pub fn half_width(&self) -> f64 {
        0.5 * (self.upper - self.lower) / self.normal.norm()
    }

    #[inline]
    pub(crate) fn step_coefficient(&self, x: &[f64]) -> f64 {
        let v = self.normal.dot(x);
        (v - v.clamp(self.lower, self.upper)) / self.normal.norm_sq()
    }
}

impl ConstraintSet for Hyperslab {
    fn dim(&self) -> usize {
        self.normal.dim()
    }

    fn project_in_place(&self, x: &mut [f64]) {
        let t = self.step_coefficient(x);
        if t != 0.0 {
            self.normal.axpy(-t, x);
        }
    }

    fn residual(&self, x: &[f64]) -> Residual {
        let (sq, linf) = self.normal.scaled_norms(self.step_coefficient(x));
        Residual {
            l2: sq.sqrt(),
            linf,
        }
    }
}

pub fn project_hyperslab(s: &Hyperslab, x: &[f64]) -> Result<Vec<f64>> {
    s.project(x)
}

/// `{x : x_j = y_j for j in J}`
#[derive(Debug, Clone, PartialEq)]
pub struct CoordinateAffine {
    dim: usize,
    fixed: Vec<(usize, f64)>,
}

impl CoordinateAffine {
    pub fn new(dim: usize, indices: &[usize], values: &[f64]) -> Result<Self> {
        if dim == 0 {
            return Err(GeometryError::EmptyDimension);
        }
        if indices.len() != values.len() {
            return Err(GeometryError::LengthMismatch {
                indices: indices.len(),
                values: values.len(),
            });
        }
        if let Some(&index) = indices.iter().find(|&&j| j >= dim) {
            return Err(GeometryError::IndexOutOfRange { index, dim });
        }
        let fixed = indices.iter().copied().zip(values.iter().copied()).collect();
        Ok(Self { dim, fixed })
    }

    pub fn fixed(&self) -> &[(usize, f64)] {
        &self.fixed
    }
}

impl ConstraintSet for CoordinateAffine {
    fn dim(&self) -> usize {
        self.dim
    }

    fn project_in_place(&self, x: &mut [f64]) {
        for &(j, y) in &self.fixed {
            x[j] = y;
        }
    }

    fn residual(&self, x: &[f64]) -> Residual {
        let mut r = Residual::default();
        let mut sq = 0.0;
        for &(j, y) in &self.fixed {
            let d = x[j] - y;
            sq += d * d;
            r.linf = r.linf.max(d.abs());
        }
        r.l2 = sq.sqrt();
        r
    }
}

pub fn project_coordinate_affine(c: &CoordinateAffine, x: &[f64]) -> Result<Vec<f64>> {
    c.project(x)
}

/// Intersection of hyperslabs whose normals have pairwise disjoint supports.
/// The projection onto the intersection is the slab-wise projection.
#[derive(Debug, Clone, PartialEq)]
pub struct SlabFamily {
    dim: usize,
    slabs: Vec<Hyperslab>,
}

impl SlabFamily {
    pub fn new(dim: usize, slabs: Vec<Hyperslab>) -> Result<Self> {
        if dim == 0 {
            return Err(GeometryError::EmptyDimension);
        }
        for s in &slabs {
            if s.dim() != dim {
                return Err(GeometryError::DimensionMismatch {
                    expected: dim,
                    found: s.dim(),
                });
            }
        }
        if let Some((first, second, coord)) = first_overlap(slabs.iter().map(|s| &s.normal)) {
            return Err(GeometryError::OverlappingSupport {
                first,
                second,
                coord,
            });
        }
        Ok(Self { dim, slabs })
    }

    pub fn slabs(&self) -> &[Hyperslab] {
        &self.slabs
    }

    pub fn len(&self) -> usize {
        self.slabs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slabs.is_empty()
    }
}

impl ConstraintSet for SlabFamily {
    fn dim(&self) -> usize {
        self.dim
    }

    fn project_in_place(&self, x: &mut [f64]) {
        for s in &self.slabs {
            s.project_in_place(x);
        }
    }

    fn residual(&self, x: &[f64]) -> Residual {
        let mut r = Residual::default();
        let mut sq = 0.0;
        for s in &self.slabs {
            let (q, m) = s.normal.scaled_norms(s.step_coefficient(x));
            sq += q;
            r.linf = r.linf.max(m);
        }
        r.l2 = sq.sqrt();
        r
    }
}

/// Returns `(first, second, coord)` for the first pair of normals sharing a
/// support coordinate.
pub(crate) fn first_overlap<'a>(
    normals: impl Iterator<Item = &'a SparseNormal>,
) -> Option<(usize, usize, usize)> {
    let mut owner: std::collections::HashMap<usize, usize> = std::collections::HashMap::new();
    for (k, a) in normals.enumerate() {
        for coord in a.support() {
            if let Some(&first) = owner.get(&coord) {
                return Some((first, k, coord));
            }
            owner.insert(coord, k);
        }
    }
    None
}

pub fn validate_disjoint_support(slabs: &[Hyperslab]) -> bool {
    first_overlap(slabs.iter().map(|s| &s.normal)).is_none()
}

/// `C_[beta] = {x : d_C(x) <= beta}`
#[derive(Debug, Clone, PartialEq)]
pub struct Enlargement<S> {
    core: S,
    radius: f64,
}

impl<S: ConstraintSet> Enlargement<S> {
    pub fn new(core: S, radius: f64) -> Result<Self> {
        if !(radius >= 0.0 && radius.is_finite()) {
            return Err(GeometryError::InvalidRadius(radius));
        }
        Ok(Self { core, radius })
    }

    pub fn core(&self) -> &S {
        &self.core
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }
}

impl<S: ConstraintSet> ConstraintSet for Enlargement<S> {
    fn dim(&self) -> usize {
        self.core.dim()
    }

    fn project_in_place(&self, x: &mut [f64]) {
        let mut p = x.to_vec();
        self.core.project_in_place(&mut p);
        let d = dist2(x, &p);
        if d <= self.radius {
            return;
        }
        let scale = self.radius / d;
        for (xi, pi) in x.iter_mut().zip(&p) {
            *xi = pi + scale * (*xi - pi);
        }
    }
}

pub fn project_enlargement<S: ConstraintSet>(e: &Enlargement<S>, x: &[f64]) -> Result<Vec<f64>> {
    e.project(x)
}

/// The singleton `{point}`; handy as an enlargement core (balls).
#[derive(Debug, Clone, PartialEq)]
pub struct Point(pub Vec<f64>);

impl ConstraintSet for Point {
    fn dim(&self) -> usize {
        self.0.len()
    }

    fn project_in_place(&self, x: &mut [f64]) {
        x.copy_from_slice(&self.0);
    }
}
