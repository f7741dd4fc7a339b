//! AH-polytopes: affine images `{C x + d | x ∈ H(A, b)}` of H-polytopes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hpoly::HPolytope;
use crate::linalg::Matrix;
use crate::lp;
use crate::scalar::{Scalar, EPS_FEAS};

/// Which way points within `EPS_FEAS` of the boundary are classified.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Boundary {
    /// Near-boundary points count as inside (used for avoid sets).
    Inclusive,
    /// Near-boundary points count as outside (used for reach sets).
    Exclusive,
}

impl Boundary {
    pub(crate) fn slack<T: Scalar>(self) -> T {
        match self {
            Boundary::Inclusive => T::lit(EPS_FEAS),
            Boundary::Exclusive => -T::lit(EPS_FEAS),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar", try_from = "AhRepr<T>")]
pub struct AHPolytope<T> {
    base: HPolytope<T>,
    #[serde(rename = "C")]
    c: Matrix<T>,
    d: Vec<T>,
}

#[derive(Deserialize)]
#[serde(bound = "T: Scalar")]
struct AhRepr<T> {
    base: HPolytope<T>,
    #[serde(rename = "C")]
    c: Matrix<T>,
    d: Vec<T>,
}

impl<T: Scalar> TryFrom<AhRepr<T>> for AHPolytope<T> {
    type Error = Error;
    fn try_from(r: AhRepr<T>) -> Result<Self> {
        // A zero-row C loses its column count in JSON; recover it from the base.
        let c = if r.c.nrows() == 0 { Matrix::zeros(0, r.base.dim()) } else { r.c };
        AHPolytope::new(r.base, c, r.d)
    }
}

impl<T: Scalar> AHPolytope<T> {
    pub fn new(base: HPolytope<T>, c: Matrix<T>, d: Vec<T>) -> Result<Self> {
        Error::check_dim("AH map columns", base.dim(), c.ncols())?;
        Error::check_dim("AH offset", c.nrows(), d.len())?;
        Ok(Self { base, c, d })
    }

    /// Same set, identity map.
    pub fn from_hpolytope(p: &HPolytope<T>) -> Self {
        let n = p.dim();
        Self { base: p.clone(), c: Matrix::identity(n), d: vec![T::zero(); n] }
    }

    /// A single point as a zero-dimensional base with an offset.
    pub fn point(y: &[T]) -> Self {
        Self { base: HPolytope::universe(0), c: Matrix::zeros(y.len(), 0), d: y.to_vec() }
    }

    /// Projection of `p` onto its first `m` coordinates: `AH(A, b, [I 0], 0)`.
    pub fn project(p: &HPolytope<T>, m: usize) -> Result<Self> {
        if m > p.dim() {
            return Err(Error::Input(format!("cannot project {}-dimensional set onto {m} dims", p.dim())));
        }
        let c = Matrix::from_fn(m, p.dim(), |i, j| if i == j { T::one() } else { T::zero() });
        Ok(Self { base: p.clone(), c, d: vec![T::zero(); m] })
    }

    pub fn dim(&self) -> usize {
        self.d.len()
    }

    pub fn base(&self) -> &HPolytope<T> {
        &self.base
    }

    pub fn map(&self) -> (&Matrix<T>, &[T]) {
        (&self.c, &self.d)
    }

    pub fn image_of(&self, x: &[T]) -> Vec<T> {
        self.c.matvec(x).iter().zip(&self.d).map(|(&a, &b)| a + b).collect()
    }

    /// Lifted construction: base `[A₁ 0; 0 A₂; C₁ −C₂; −C₁ C₂] [x; y] <= [b₁; b₂; d₂−d₁; d₁−d₂]`,
    /// map `[C₁ 0]`, offset `d₁`.
    pub fn intersect(&self, other: &AHPolytope<T>) -> Result<AHPolytope<T>> {
        Error::check_dim("AH intersection", self.dim(), other.dim())?;
        let n2 = other.base.dim();
        let blocks = Matrix::block_diag(self.base.a(), other.base.a());
        let link = Matrix::hstack(&[&self.c, &other.c.scaled(-T::one())])?;
        let a = Matrix::vstack(&[&blocks, &link, &link.scaled(-T::one())])?;
        let dd: Vec<T> = other.d.iter().zip(&self.d).map(|(&d2, &d1)| d2 - d1).collect();
        let b: Vec<T> = self
            .base
            .b()
            .iter()
            .chain(other.base.b())
            .copied()
            .chain(dd.iter().copied())
            .chain(dd.iter().map(|&v| -v))
            .collect();
        let c = Matrix::hstack(&[&self.c, &Matrix::zeros(self.dim(), n2)])?;
        AHPolytope::new(HPolytope::new(a, b)?, c, self.d.clone())
    }

    /// Lifted construction with `γ ∈ [0, 1]`: base
    /// `[A₁ 0 −b₁; 0 A₂ b₂; 0 0 1; 0 0 −1] [x; y; γ] <= [0; b₂; 1; 0]`,
    /// map `[C₁ C₂ d₁−d₂]`, offset `d₂`. Requires bounded operands.
    pub fn convex_hull(&self, other: &AHPolytope<T>) -> Result<AHPolytope<T>> {
        Error::check_dim("AH convex hull", self.dim(), other.dim())?;
        let (a1, b1) = (self.base.a(), self.base.b());
        let (a2, b2) = (other.base.a(), other.base.b());
        let (n1, n2) = (a1.ncols(), a2.ncols());
        let (r1, r2) = (a1.nrows(), a2.nrows());
        let width = n1 + n2 + 1;
        let mut a = Matrix::zeros(r1 + r2 + 2, width);
        a.set_block(0, 0, a1);
        a.set_block(r1, n1, a2);
        for i in 0..r1 {
            a[(i, width - 1)] = -b1[i];
        }
        for i in 0..r2 {
            a[(r1 + i, width - 1)] = b2[i];
        }
        a[(r1 + r2, width - 1)] = T::one();
        a[(r1 + r2 + 1, width - 1)] = -T::one();
        let b: Vec<T> = std::iter::repeat_n(T::zero(), r1)
            .chain(b2.iter().copied())
            .chain([T::one(), T::zero()])
            .collect();
        let shift: Vec<T> = self.d.iter().zip(&other.d).map(|(&d1, &d2)| d1 - d2).collect();
        let shift_col = Matrix::from_vec(self.dim(), 1, shift)?;
        let c = Matrix::hstack(&[&self.c, &other.c, &shift_col])?;
        AHPolytope::new(HPolytope::new(a, b)?, c, other.d.clone())
    }

    /// Empty iff the base is empty.
    pub fn is_empty(&self) -> Result<bool> {
        self.base.is_empty()
    }

    /// One feasibility LP: `∃x: A x <= b, C x + d = y`, with equalities as
    /// inequality pairs. `Inclusive` relaxes every row by `EPS_FEAS`;
    /// `Exclusive` tightens the base rows by `EPS_FEAS` and keeps the
    /// equalities exact.
    pub fn contains_point(&self, y: &[T], boundary: Boundary) -> Result<bool> {
        Error::check_dim("AH containment query", self.dim(), y.len())?;
        let slack: T = boundary.slack();
        let eq_slack = slack.max(T::zero());
        let a = Matrix::vstack(&[self.base.a(), &self.c, &self.c.scaled(-T::one())])?;
        let target: Vec<T> = y.iter().zip(&self.d).map(|(&yi, &di)| yi - di).collect();
        let b: Vec<T> = self
            .base
            .b()
            .iter()
            .map(|&bi| bi + slack)
            .chain(target.iter().map(|&t| t + eq_slack))
            .chain(target.iter().map(|&t| -t + eq_slack))
            .collect();
        lp::feasible(&a, &b)
    }

    pub fn cast<U: Scalar>(&self) -> AHPolytope<U> {
        AHPolytope { base: self.base.cast(), c: self.c.cast(), d: self.d.iter().map(|&x| U::lit(x.to_f64_lossy())).collect() }
    }
}
