//! Translation-invariant trajectory model on top of a ReLU network, its
//! per-timestep affine slices and linear interpolation between timesteps.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::relunet::ReluNetwork;
use crate::scalar::Scalar;

/// Time discretization and state layout shared by the model, the data and the
/// error bounds. Network outputs are `[p(Δt); …; p(t_f); q]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SpecRepr")]
pub struct TrajectorySpec {
    pub n_p: usize,
    pub n_q: usize,
    pub t_f: f64,
    pub dt: f64,
}

#[derive(Deserialize)]
struct SpecRepr {
    n_p: usize,
    n_q: usize,
    t_f: f64,
    dt: f64,
}

impl TryFrom<SpecRepr> for TrajectorySpec {
    type Error = Error;
    fn try_from(r: SpecRepr) -> Result<Self> {
        TrajectorySpec::new(r.n_p, r.n_q, r.t_f, r.dt)
    }
}

impl TrajectorySpec {
    pub fn new(n_p: usize, n_q: usize, t_f: f64, dt: f64) -> Result<Self> {
        if n_p == 0 {
            return Err(Error::Input("n_p must be at least 1".into()));
        }
        if !(dt > 0.0 && t_f > 0.0 && dt.is_finite() && t_f.is_finite()) {
            return Err(Error::Input(format!("need 0 < dt and 0 < t_f, got dt={dt}, t_f={t_f}")));
        }
        let ratio = t_f / dt;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::Input(format!("t_f={t_f} is not a multiple of dt={dt}")));
        }
        Ok(Self { n_p, n_q, t_f, dt })
    }

    /// Number of timesteps `t_f / Δt`.
    pub fn steps(&self) -> usize {
        (self.t_f / self.dt).round() as usize
    }

    /// Length of a label row: `steps·n_p + n_q`.
    pub fn output_dim(&self) -> usize {
        self.steps() * self.n_p + self.n_q
    }

    /// Time of step `j`.
    pub fn time(&self, j: usize) -> f64 {
        j as f64 * self.dt
    }

    fn check_net<T: Scalar>(&self, net: &ReluNetwork<T>) -> Result<()> {
        Error::check_dim("network output", self.output_dim(), net.output_dim())
    }
}

/// Model prediction `p̂(0), …, p̂(t_f)` and `q̂`.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction<T> {
    pub positions: Vec<Vec<T>>,
    pub q: Vec<T>,
}

impl<T: Scalar> Prediction<T> {
    /// `[p̂(t_f); q̂]`.
    pub fn final_state(&self) -> Vec<T> {
        self.positions.last().expect("at least p̂(0)").iter().chain(&self.q).copied().collect()
    }

    /// Position at `t′` using linear interpolation within the containing step.
    pub fn at(&self, spec: &TrajectorySpec, t: f64) -> Result<Vec<T>> {
        let steps = self.positions.len() - 1;
        if !(-1e-12..=spec.t_f + 1e-12).contains(&t) {
            return Err(Error::Input(format!("time {t} outside [0, {}]", spec.t_f)));
        }
        let j = ((t / spec.dt).floor() as usize).min(steps.saturating_sub(1));
        interpolate(&self.positions[j], &self.positions[j + 1], spec.time(j), spec.dt, t.clamp(0.0, spec.t_f))
    }
}

/// `ξ(k) + [p0; …; p0; 0]`, reshaped, with `p̂(0) = p0`.
pub fn predict<T: Scalar>(net: &ReluNetwork<T>, spec: &TrajectorySpec, p0: &[T], k: &[T]) -> Result<Prediction<T>> {
    spec.check_net(net)?;
    Error::check_dim("initial position", spec.n_p, p0.len())?;
    let y = net.forward(k)?;
    Ok(reshape(&y, spec, p0))
}

/// Splits a raw network output (or label row) into positions and `q`, shifted by `p0`.
pub fn reshape<T: Scalar>(y: &[T], spec: &TrajectorySpec, p0: &[T]) -> Prediction<T> {
    let np = spec.n_p;
    let mut positions = Vec::with_capacity(spec.steps() + 1);
    positions.push(p0.to_vec());
    for j in 0..spec.steps() {
        positions.push(y[j * np..(j + 1) * np].iter().zip(p0).map(|(&a, &b)| a + b).collect());
    }
    let q = y[spec.steps() * np..].to_vec();
    Prediction { positions, q }
}

/// Linear interpolation between `p̂(t)` and `p̂(t+Δt)`.
pub fn interpolate<T: Scalar>(p_t: &[T], p_next: &[T], t: f64, dt: f64, t_prime: f64) -> Result<Vec<T>> {
    Error::check_dim("interpolation endpoints", p_t.len(), p_next.len())?;
    let slack = 1e-12 * dt.max(1.0);
    if t_prime < t - slack || t_prime > t + dt + slack {
        return Err(Error::Input(format!("t′={t_prime} outside [{t}, {}]", t + dt)));
    }
    let s = T::lit(((t_prime - t) / dt).clamp(0.0, 1.0));
    Ok(p_t.iter().zip(p_next).map(|(&a, &b)| a + (b - a) * s).collect())
}

/// Per-timestep affine maps of `[p0; k]` on one region.
#[derive(Clone, Debug, PartialEq)]
pub struct SlicedAffineMap<T> {
    /// `C_{i,t}` for `t = 0, Δt, …, t_f`, each `n_p × (n_p + n_k)`.
    pub c_t: Vec<Matrix<T>>,
    pub d_t: Vec<Vec<T>>,
    /// `C_{i,q}`, `n_q × (n_p + n_k)`.
    pub c_q: Matrix<T>,
    pub d_q: Vec<T>,
    pub region_index: usize,
}

impl<T: Scalar> SlicedAffineMap<T> {
    pub fn steps(&self) -> usize {
        self.c_t.len() - 1
    }

    /// Stacked final-time and `q` map `([C_{t_f}; C_q], [d_{t_f}; d_q])`.
    pub fn final_map(&self) -> Result<(Matrix<T>, Vec<T>)> {
        let c = Matrix::vstack(&[self.c_t.last().expect("t = 0 slice"), &self.c_q])?;
        let d = self.d_t.last().expect("t = 0 slice").iter().chain(&self.d_q).copied().collect();
        Ok((c, d))
    }

    pub fn position(&self, j: usize, z: &[T]) -> Vec<T> {
        self.c_t[j].matvec(z).iter().zip(&self.d_t[j]).map(|(&a, &b)| a + b).collect()
    }
}

/// Row-block extraction from a region map `(C, d)` on `k`:
/// `C_{i,t} = [I, C[ℓ₁..ℓ₂]]`, `C_{i,q} = [0, C[ℓ₃..ℓ₄]]`.
pub fn slice<T: Scalar>(c: &Matrix<T>, d: &[T], spec: &TrajectorySpec, region_index: usize) -> Result<SlicedAffineMap<T>> {
    Error::check_dim("region map rows", spec.output_dim(), c.nrows())?;
    Error::check_dim("region map offset", spec.output_dim(), d.len())?;
    let (np, nk) = (spec.n_p, c.ncols());
    let width = np + nk;
    let eye_block = |m: &mut Matrix<T>| {
        for i in 0..np {
            m[(i, i)] = T::one();
        }
    };
    let mut c_t = Vec::with_capacity(spec.steps() + 1);
    let mut d_t = Vec::with_capacity(spec.steps() + 1);
    let mut c0 = Matrix::zeros(np, width);
    eye_block(&mut c0);
    c_t.push(c0);
    d_t.push(vec![T::zero(); np]);
    for j in 1..=spec.steps() {
        // Zero-based rows ℓ₁−1 .. ℓ₂ of the one-based formula.
        let (l1, l2) = ((j - 1) * np, j * np);
        let mut m = Matrix::zeros(np, width);
        eye_block(&mut m);
        m.set_block(0, np, &c.select_rows(l1..l2));
        c_t.push(m);
        d_t.push(d[l1..l2].to_vec());
    }
    let (l3, l4) = (spec.steps() * np, spec.steps() * np + spec.n_q);
    let mut c_q = Matrix::zeros(spec.n_q, width);
    c_q.set_block(0, np, &c.select_rows(l3..l4));
    Ok(SlicedAffineMap { c_t, d_t, c_q, d_q: d[l3..l4].to_vec(), region_index })
}
