//! H-polytopes `{x | A x <= b}` and axis-aligned boxes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::lp::{self, LpStatus};
use crate::scalar::{dot, norm2, Scalar, EPS_FEAS};

#[derive(Clone, Debug, PartialEq)]
pub struct HPolytope<T> {
    a: Matrix<T>,
    b: Vec<T>,
}

impl<T: Scalar> HPolytope<T> {
    pub fn new(a: Matrix<T>, b: Vec<T>) -> Result<Self> {
        Error::check_dim("H-polytope rows", a.nrows(), b.len())?;
        Ok(Self { a, b })
    }

    /// The whole space `ℝⁿ` (no constraints).
    pub fn universe(dim: usize) -> Self {
        Self { a: Matrix::zeros(0, dim), b: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.a.ncols()
    }

    pub fn num_constraints(&self) -> usize {
        self.b.len()
    }

    pub fn a(&self) -> &Matrix<T> {
        &self.a
    }

    pub fn b(&self) -> &[T] {
        &self.b
    }

    /// Pointwise membership with slack `tol` on every row.
    pub fn contains(&self, x: &[T], tol: T) -> bool {
        x.len() == self.dim() && self.a.rows_iter().zip(&self.b).all(|(r, &bi)| dot(r, x) <= bi + tol)
    }

    /// Largest violation `max_i (a_i·x − b_i)`, or `-inf` with no rows.
    pub fn max_violation(&self, x: &[T]) -> T {
        self.a.rows_iter().zip(&self.b).fold(T::neg_infinity(), |acc, (r, &bi)| acc.max(dot(r, x) - bi))
    }

    pub fn is_empty(&self) -> Result<bool> {
        Ok(!lp::feasible(&self.a, &self.b)?)
    }

    pub fn feasible_point(&self) -> Result<Option<Vec<T>>> {
        lp::feasible_point(&self.a, &self.b)
    }

    /// Constraint stacking.
    pub fn intersect(&self, other: &HPolytope<T>) -> Result<HPolytope<T>> {
        Error::check_dim("intersect", self.dim(), other.dim())?;
        let a = Matrix::vstack(&[&self.a, &other.a])?;
        let b = [self.b.as_slice(), other.b.as_slice()].concat();
        Ok(Self { a, b })
    }

    /// Block-diagonal constraint layout `[A₁ 0; 0 A₂] [x; y] <= [b₁; b₂]`.
    pub fn cartesian_product(&self, other: &HPolytope<T>) -> HPolytope<T> {
        let a = Matrix::block_diag(&self.a, &other.a);
        let b = [self.b.as_slice(), other.b.as_slice()].concat();
        Self { a, b }
    }

    /// `max_{x ∈ P} direction·x`; `+inf` when unbounded in that direction.
    pub fn support(&self, direction: &[T]) -> Result<T> {
        Error::check_dim("support direction", self.dim(), direction.len())?;
        let out = lp::maximize(&self.a, &self.b, direction)?;
        match out.status {
            LpStatus::Optimal => Ok(out.value),
            LpStatus::Unbounded => Ok(T::infinity()),
            LpStatus::Infeasible => Err(Error::EmptySet),
        }
    }

    /// Exact Pontryagin difference with a box: `b'ᵢ = bᵢ − h_E(aᵢ)`.
    pub fn pontryagin_diff(&self, e: &Hyperrectangle<T>) -> Result<HPolytope<T>> {
        Error::check_dim("pontryagin difference", self.dim(), e.dim())?;
        let b = self.a.rows_iter().zip(&self.b).map(|(r, &bi)| bi - e.support(r)).collect();
        Ok(Self { a: self.a.clone(), b })
    }

    /// Support-function buffering `b'ᵢ = bᵢ + h_E(aᵢ)`. Always contains `P ⊕ E`;
    /// equal to it when the box's facet normals are among P's row normals.
    pub fn minkowski_buffer(&self, e: &Hyperrectangle<T>) -> Result<HPolytope<T>> {
        Error::check_dim("minkowski buffer", self.dim(), e.dim())?;
        let b = self.a.rows_iter().zip(&self.b).map(|(r, &bi)| bi + e.support(r)).collect();
        Ok(Self { a: self.a.clone(), b })
    }

    /// Outer approximation of `P ⊕ Q` using the union of both normal sets,
    /// each offset by the summed support values. Exact for planar polygons.
    pub fn minkowski_sum_outer(&self, q: &HPolytope<T>) -> Result<HPolytope<T>> {
        Error::check_dim("minkowski sum", self.dim(), q.dim())?;
        let mut rows: Vec<Vec<T>> = Vec::new();
        let mut b = Vec::new();
        let unit = |r: &[T]| {
            let n = norm2(r);
            r.iter().map(|&x| x / n).collect::<Vec<T>>()
        };
        for r in self.a.rows_iter().chain(q.a.rows_iter()) {
            if norm2(r) <= T::tol(1e-14) {
                continue;
            }
            let u = unit(r);
            let dup = rows.iter().any(|e| e.iter().zip(&u).all(|(&x, &y)| (x - y).abs() <= T::tol(1e-12)));
            if dup {
                continue;
            }
            let h = self.support(&u)? + q.support(&u)?;
            if h.is_infinite() {
                continue;
            }
            rows.push(u);
            b.push(h);
        }
        Ok(Self { a: Matrix::from_rows(&rows, self.dim())?, b })
    }

    /// Drops rows that are implied by the others (one support LP per row).
    pub fn reduce(&self) -> Result<HPolytope<T>> {
        let mut keep: Vec<usize> = (0..self.num_constraints()).collect();
        let mut i = 0;
        while i < keep.len() {
            let row = keep[i];
            let others: Vec<usize> = keep.iter().copied().filter(|&j| j != row).collect();
            let a = self.a.select_rows(others.iter().copied());
            let b: Vec<T> = others.iter().map(|&j| self.b[j]).collect();
            // Relaxed copy of the row keeps the LP bounded in its direction.
            let mut rows = a.to_rows();
            rows.push(self.a.row(row).to_vec());
            let mut bb = b.clone();
            bb.push(self.b[row] + T::one());
            let a = Matrix::from_rows(&rows, self.dim())?;
            let out = lp::maximize(&a, &bb, self.a.row(row))?;
            match out.status {
                LpStatus::Infeasible => return Ok(self.clone()),
                _ if out.value <= self.b[row] + T::lit(EPS_FEAS) => {
                    keep.remove(i);
                }
                _ => i += 1,
            }
        }
        Ok(Self { a: self.a.select_rows(keep.iter().copied()), b: keep.iter().map(|&j| self.b[j]).collect() })
    }

    /// Largest inscribed ball `(center, radius)`; `None` when empty.
    /// The radius is capped at `cap` so that unbounded sets still yield a point.
    pub fn chebyshev_center(&self, cap: T) -> Result<Option<(Vec<T>, T)>> {
        let n = self.dim();
        let mut rows = Vec::with_capacity(self.num_constraints() + 1);
        for r in self.a.rows_iter() {
            let mut row = r.to_vec();
            row.push(norm2(r));
            rows.push(row);
        }
        let mut cap_row = vec![T::zero(); n + 1];
        cap_row[n] = T::one();
        rows.push(cap_row);
        let mut b = self.b.clone();
        b.push(cap);
        let a = Matrix::from_rows(&rows, n + 1)?;
        let mut c = vec![T::zero(); n + 1];
        c[n] = T::one();
        let out = lp::maximize(&a, &b, &c)?;
        match out.status {
            LpStatus::Optimal => {
                let mut x = out.witness.expect("optimal LP carries a witness");
                let r = x.pop().expect("radius component");
                if r < -T::lit(EPS_FEAS) {
                    Ok(None)
                } else {
                    Ok(Some((x, r.max(T::zero()))))
                }
            }
            LpStatus::Infeasible => Ok(None),
            LpStatus::Unbounded => Err(Error::Solver("capped Chebyshev LP reported unbounded".into())),
        }
    }

    /// Axis-aligned bounding box from `2n` support LPs.
    pub fn bounding_box(&self) -> Result<Hyperrectangle<T>> {
        let n = self.dim();
        let mut lower = Vec::with_capacity(n);
        let mut upper = Vec::with_capacity(n);
        for i in 0..n {
            let mut e = vec![T::zero(); n];
            e[i] = T::one();
            upper.push(self.support(&e)?);
            e[i] = -T::one();
            lower.push(-self.support(&e)?);
        }
        if lower.iter().chain(&upper).any(|v| v.is_infinite()) {
            return Err(Error::Input("bounding box of an unbounded polytope".into()));
        }
        Hyperrectangle::new(lower, upper)
    }

    pub fn cast<U: Scalar>(&self) -> HPolytope<U> {
        HPolytope { a: self.a.cast(), b: self.b.iter().map(|&x| U::lit(x.to_f64_lossy())).collect() }
    }
}

/// Preimage of `target` through the affine map `x ↦ C x + d` restricted to
/// `region`: `H([A C; A_region], [b − A d; b_region])`.
pub fn preimage<T: Scalar>(
    target: &HPolytope<T>,
    region: &HPolytope<T>,
    c: &Matrix<T>,
    d: &[T],
) -> Result<HPolytope<T>> {
    Error::check_dim("preimage map rows", target.dim(), c.nrows())?;
    Error::check_dim("preimage offset", c.nrows(), d.len())?;
    Error::check_dim("preimage map cols", region.dim(), c.ncols())?;
    let ac = target.a.matmul(c);
    let ad = target.a.matvec(d);
    let a = Matrix::vstack(&[&ac, &region.a])?;
    let b = target.b.iter().zip(&ad).map(|(&bi, &adi)| bi - adi).chain(region.b.iter().copied()).collect();
    HPolytope::new(a, b)
}

/// Circumscribed polytope of a ball of `radius`: a regular octagon in the
/// plane, a cube in any other dimension.
pub fn ball_outer_polytope<T: Scalar>(dim: usize, radius: T) -> HPolytope<T> {
    if dim == 2 {
        let rows: Vec<Vec<T>> = (0..8)
            .map(|k| {
                let th = std::f64::consts::FRAC_PI_4 * k as f64;
                vec![T::lit(th.cos()), T::lit(th.sin())]
            })
            .collect();
        HPolytope { a: Matrix::from_rows(&rows, 2).expect("8x2"), b: vec![radius; 8] }
    } else {
        Hyperrectangle::new(vec![-radius; dim], vec![radius; dim]).expect("symmetric box").as_hpolytope()
    }
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
struct HPolytopeRepr<T> {
    #[serde(rename = "A")]
    a: Matrix<T>,
    b: Vec<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dim: Option<usize>,
}

impl<T: Scalar> Serialize for HPolytope<T> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let dim = (self.num_constraints() == 0).then_some(self.dim());
        HPolytopeRepr { a: self.a.clone(), b: self.b.clone(), dim }.serialize(s)
    }
}

impl<'de, T: Scalar> Deserialize<'de> for HPolytope<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let repr = HPolytopeRepr::<T>::deserialize(d)?;
        let a = match (repr.dim, repr.a.nrows()) {
            (Some(n), 0) => Matrix::zeros(0, n),
            (Some(n), _) if n != repr.a.ncols() => return Err(D::Error::custom("dim disagrees with A")),
            _ => repr.a,
        };
        HPolytope::new(a, repr.b).map_err(D::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BoxRepr<T>", into = "BoxRepr<T>", bound = "T: Scalar")]
pub struct Hyperrectangle<T> {
    lower: Vec<T>,
    upper: Vec<T>,
}

#[derive(Clone, Serialize, Deserialize)]
struct BoxBounds<T> {
    lower: Vec<T>,
    upper: Vec<T>,
}

#[derive(Clone, Serialize, Deserialize)]
struct BoxRepr<T> {
    #[serde(rename = "box")]
    bounds: BoxBounds<T>,
}

impl<T: Scalar> TryFrom<BoxRepr<T>> for Hyperrectangle<T> {
    type Error = Error;
    fn try_from(r: BoxRepr<T>) -> Result<Self> {
        Hyperrectangle::new(r.bounds.lower, r.bounds.upper)
    }
}

impl<T: Scalar> From<Hyperrectangle<T>> for BoxRepr<T> {
    fn from(h: Hyperrectangle<T>) -> Self {
        BoxRepr { bounds: BoxBounds { lower: h.lower, upper: h.upper } }
    }
}

impl<T: Scalar> Hyperrectangle<T> {
    pub fn new(lower: Vec<T>, upper: Vec<T>) -> Result<Self> {
        Error::check_dim("box bounds", lower.len(), upper.len())?;
        if lower.iter().zip(&upper).any(|(l, u)| !(l <= u)) {
            return Err(Error::Input("box lower bound exceeds upper bound".into()));
        }
        Ok(Self { lower, upper })
    }

    /// Origin-centred box `[-r, r]` per channel.
    pub fn centered(radii: &[T]) -> Result<Self> {
        Self::new(radii.iter().map(|&r| -r).collect(), radii.to_vec())
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[T] {
        &self.lower
    }

    pub fn upper(&self) -> &[T] {
        &self.upper
    }

    pub fn center(&self) -> Vec<T> {
        self.lower.iter().zip(&self.upper).map(|(&l, &u)| (l + u) / T::lit(2.0)).collect()
    }

    pub fn contains(&self, x: &[T], tol: T) -> bool {
        x.len() == self.dim()
            && x.iter().zip(self.lower.iter().zip(&self.upper)).all(|(&v, (&l, &u))| v >= l - tol && v <= u + tol)
    }

    /// Closed-form support value `Σ max(dᵢ lᵢ, dᵢ uᵢ)`.
    pub fn support(&self, direction: &[T]) -> T {
        direction.iter().zip(self.lower.iter().zip(&self.upper)).map(|(&d, (&l, &u))| (d * l).max(d * u)).sum()
    }

    /// The `2n`-row form: `+eᵢ·x <= uᵢ` then `−eᵢ·x <= −lᵢ` per axis.
    pub fn as_hpolytope(&self) -> HPolytope<T> {
        let n = self.dim();
        let mut a = Matrix::zeros(2 * n, n);
        let mut b = Vec::with_capacity(2 * n);
        for i in 0..n {
            a[(2 * i, i)] = T::one();
            b.push(self.upper[i]);
            a[(2 * i + 1, i)] = -T::one();
            b.push(-self.lower[i]);
        }
        HPolytope { a, b }
    }

    /// `n` i.i.d. uniform points, reproducible per `seed`.
    pub fn sample_uniform(&self, n: usize, seed: u64) -> Vec<Vec<T>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| self.sample_with(&mut rng)).collect()
    }

    pub fn sample_with<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<T> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(&l, &u)| {
                let r: f64 = rng.gen();
                l + (u - l) * T::lit(r)
            })
            .collect()
    }

    /// Tiles the box into `splits[i]` equal slabs per axis, row-major with the
    /// last axis fastest.
    pub fn split(&self, splits: &[usize]) -> Result<Vec<Hyperrectangle<T>>> {
        Error::check_dim("split counts", self.dim(), splits.len())?;
        if splits.contains(&0) {
            return Err(Error::Input("split count must be at least 1".into()));
        }
        let total: usize = splits.iter().product();
        let mut cells = Vec::with_capacity(total);
        for flat in 0..total {
            let idx = unflatten(flat, splits);
            let mut lo = Vec::with_capacity(self.dim());
            let mut hi = Vec::with_capacity(self.dim());
            for (axis, &i) in idx.iter().enumerate() {
                let width = (self.upper[axis] - self.lower[axis]) / T::lit(splits[axis] as f64);
                lo.push(self.lower[axis] + width * T::lit(i as f64));
                hi.push(if i + 1 == splits[axis] {
                    self.upper[axis]
                } else {
                    self.lower[axis] + width * T::lit((i + 1) as f64)
                });
            }
            cells.push(Hyperrectangle::new(lo, hi)?);
        }
        Ok(cells)
    }

    /// Index of the cell of `split(splits)` holding `x`. Cells are half-open
    /// except the last one along each axis.
    pub fn cell_index(&self, splits: &[usize], x: &[T]) -> Result<usize> {
        Error::check_dim("cell query", self.dim(), x.len())?;
        if !self.contains(x, T::zero()) {
            return Err(Error::OutsideDomain);
        }
        let mut idx = Vec::with_capacity(self.dim());
        for axis in 0..self.dim() {
            let width = (self.upper[axis] - self.lower[axis]) / T::lit(splits[axis] as f64);
            let i = if width > T::zero() {
                ((x[axis] - self.lower[axis]) / width).floor().to_usize().unwrap_or(0)
            } else {
                0
            };
            idx.push(i.min(splits[axis] - 1));
        }
        Ok(flatten(&idx, splits))
    }

    pub fn cast<U: Scalar>(&self) -> Hyperrectangle<U> {
        Hyperrectangle {
            lower: self.lower.iter().map(|&x| U::lit(x.to_f64_lossy())).collect(),
            upper: self.upper.iter().map(|&x| U::lit(x.to_f64_lossy())).collect(),
        }
    }
}

fn unflatten(mut flat: usize, splits: &[usize]) -> Vec<usize> {
    let mut idx = vec![0; splits.len()];
    for axis in (0..splits.len()).rev() {
        idx[axis] = flat % splits[axis];
        flat /= splits[axis];
    }
    idx
}

fn flatten(idx: &[usize], splits: &[usize]) -> usize {
    idx.iter().zip(splits).fold(0, |acc, (&i, &s)| acc * s + i)
}

/// A set given in a file either as a box or as a general H-polytope.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged, bound = "T: Scalar")]
pub enum PolytopeSpec<T> {
    Box(Hyperrectangle<T>),
    H(HPolytope<T>),
}

impl<T: Scalar> PolytopeSpec<T> {
    pub fn to_hpolytope(&self) -> HPolytope<T> {
        match self {
            PolytopeSpec::Box(b) => b.as_hpolytope(),
            PolytopeSpec::H(h) => h.clone(),
        }
    }
}
