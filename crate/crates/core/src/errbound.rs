//! Sampled modeling-error bounds between a trajectory model and a black-box
//! system: per-channel maximum final error, maximum interval error per
//! timestep, their origin-centered boxes and a partitioned variant over `K`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::blackbox::{derive_seed, BlackBoxSystem};
use crate::error::{Error, Result};
use crate::hpoly::Hyperrectangle;
use crate::relunet::ReluNetwork;
use crate::scalar::Scalar;
use crate::trajmodel::{interpolate, predict, TrajectorySpec};

pub const DEFAULT_SUBSTEPS: usize = 10;
pub const DEFAULT_SAMPLES: usize = 10_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorBounds {
    /// `e_{t_f,j}` for the `n_p + n_q` final-state channels.
    pub e_final: Vec<f64>,
    /// Row `t/Δt` holds `ē_{t,j}` for the interval `[t, t+Δt]`.
    pub e_interval: Vec<Vec<f64>>,
    pub n_sample: usize,
    /// The part of `K` these bounds cover.
    pub subdomain: Hyperrectangle<f64>,
}

impl ErrorBounds {
    fn zeros(spec: &TrajectorySpec, subdomain: Hyperrectangle<f64>) -> Self {
        Self {
            e_final: vec![0.0; spec.n_p + spec.n_q],
            e_interval: vec![vec![0.0; spec.n_p]; spec.steps()],
            n_sample: 0,
            subdomain,
        }
    }

    fn absorb(&mut self, s: &SampleErrors) {
        for (e, &v) in self.e_final.iter_mut().zip(&s.e_final) {
            *e = e.max(v);
        }
        for (row, srow) in self.e_interval.iter_mut().zip(&s.e_interval) {
            for (e, &v) in row.iter_mut().zip(srow) {
                *e = e.max(v);
            }
        }
        self.n_sample += 1;
    }

    /// Every entry scaled by `factor >= 1`.
    pub fn inflated(&self, factor: f64) -> Self {
        let mut b = self.clone();
        b.e_final.iter_mut().for_each(|v| *v *= factor);
        b.e_interval.iter_mut().flatten().for_each(|v| *v *= factor);
        b
    }

    /// True when every entry is `<=` the matching entry of `other`.
    pub fn dominated_by(&self, other: &ErrorBounds) -> bool {
        self.e_final.iter().zip(&other.e_final).all(|(a, b)| a <= b)
            && self.e_interval.iter().flatten().zip(other.e_interval.iter().flatten()).all(|(a, b)| a <= b)
    }
}

/// Origin-centered boxes `E_{t_f}` and `Ē_t`, rounded outward into `T`.
pub fn error_sets<T: Scalar>(b: &ErrorBounds) -> (Hyperrectangle<T>, Vec<Hyperrectangle<T>>) {
    let boxed = |e: &[f64]| {
        let r: Vec<T> = e.iter().map(|&v| lit_up(v)).collect();
        Hyperrectangle::centered(&r).expect("bounds are nonnegative")
    };
    (boxed(&b.e_final), b.e_interval.iter().map(|row| boxed(row)).collect())
}

/// Smallest representable `T` not below `v` (for `v >= 0`).
fn lit_up<T: Scalar>(v: f64) -> T {
    let t = T::lit(v);
    if t.to_f64_lossy() >= v {
        t
    } else {
        t + t.abs().max(T::min_positive_value()) * T::epsilon()
    }
}

/// Absolute errors of one sample.
#[derive(Clone, Debug)]
pub struct SampleErrors {
    pub e_final: Vec<f64>,
    pub e_interval: Vec<Vec<f64>>,
}

/// One error-estimation draw.
#[derive(Clone, Debug)]
pub struct Draw {
    pub p0: Vec<f64>,
    pub k: Vec<f64>,
    pub disturbance_seed: u64,
}

/// `n` draws of `p0 ∈ P0`, `k ∈ Kd` and a disturbance seed, reproducible per seed.
pub fn draws(p0_box: &Hyperrectangle<f64>, kd: &Hyperrectangle<f64>, n: usize, seed: u64) -> Vec<Draw> {
    let p0s = p0_box.sample_uniform(n, derive_seed(seed, 1 << 40));
    let ks = kd.sample_uniform(n, derive_seed(seed, 2 << 40));
    p0s.into_iter()
        .zip(ks)
        .enumerate()
        .map(|(i, (p0, k))| Draw { p0, k, disturbance_seed: derive_seed(seed, i as u64) })
        .collect()
}

/// Times `t + s·Δt/(n−1)`, `s = 0..n`, for every interval.
fn check_times(spec: &TrajectorySpec, n_substeps: usize) -> Vec<f64> {
    let mut ts = Vec::with_capacity(spec.steps() * n_substeps);
    for j in 0..spec.steps() {
        for s in 0..n_substeps {
            ts.push((spec.time(j) + spec.dt * s as f64 / (n_substeps - 1) as f64).min(spec.t_f));
        }
    }
    ts
}

/// Model-vs-system errors of one draw at the final state and at
/// `n_substeps` points of every interval.
pub fn sample_errors<T: Scalar>(
    system: &dyn BlackBoxSystem,
    net: &ReluNetwork<T>,
    spec: &TrajectorySpec,
    draw: &Draw,
    n_substeps: usize,
) -> Result<SampleErrors> {
    let times = check_times(spec, n_substeps);
    let (sim, q) = system.simulate(&draw.k, draw.disturbance_seed, &times)?;
    let p0t: Vec<T> = draw.p0.iter().map(|&v| T::lit(v)).collect();
    let kt: Vec<T> = draw.k.iter().map(|&v| T::lit(v)).collect();
    let model = predict(net, spec, &p0t, &kt)?;
    let actual = |p: &[f64]| -> Vec<f64> { p.iter().zip(&draw.p0).map(|(a, b)| a + b).collect() };

    let mut e_interval = vec![vec![0.0_f64; spec.n_p]; spec.steps()];
    for j in 0..spec.steps() {
        for s in 0..n_substeps {
            let idx = j * n_substeps + s;
            let m = interpolate(&model.positions[j], &model.positions[j + 1], spec.time(j), spec.dt, times[idx])?;
            for (c, (mv, av)) in m.iter().zip(actual(&sim[idx])).enumerate() {
                e_interval[j][c] = e_interval[j][c].max((mv.to_f64_lossy() - av).abs());
            }
        }
    }
    let last_idx = spec.steps() * n_substeps - 1;
    let true_final: Vec<f64> = actual(&sim[last_idx]).into_iter().chain(q).collect();
    let e_final = model.final_state().iter().zip(&true_final).map(|(m, a)| (m.to_f64_lossy() - a).abs()).collect();
    Ok(SampleErrors { e_final, e_interval })
}

fn all_sample_errors<T: Scalar>(
    system: &dyn BlackBoxSystem,
    net: &ReluNetwork<T>,
    spec: &TrajectorySpec,
    draws: &[Draw],
    n_substeps: usize,
) -> Result<Vec<SampleErrors>> {
    if n_substeps < 2 {
        return Err(Error::Input("n_substeps must be at least 2".into()));
    }
    Error::check_dim("network output", spec.output_dim(), net.output_dim())?;
    draws
        .par_iter()
        .enumerate()
        .map(|(i, d)| {
            sample_errors(system, net, spec, d, n_substeps).map_err(|e| Error::System { index: i, message: e.to_string() })
        })
        .collect()
}

/// Maximum final and interval errors over `n_sample` draws from `P0 × Kd`.
#[allow(clippy::too_many_arguments)]
pub fn estimate<T: Scalar>(
    system: &dyn BlackBoxSystem,
    net: &ReluNetwork<T>,
    spec: &TrajectorySpec,
    p0_box: &Hyperrectangle<f64>,
    kd: &Hyperrectangle<f64>,
    n_sample: usize,
    n_substeps: usize,
    seed: u64,
) -> Result<ErrorBounds> {
    if n_sample == 0 {
        return Err(Error::Input("n_sample must be at least 1".into()));
    }
    let ds = draws(p0_box, kd, n_sample, seed);
    let errs = all_sample_errors(system, net, spec, &ds, n_substeps)?;
    let mut b = ErrorBounds::zeros(spec, kd.clone());
    errs.iter().for_each(|e| b.absorb(e));
    Ok(b)
}

/// Error bounds per cell of a grid over `K`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionedBounds {
    pub domain: Hyperrectangle<f64>,
    pub splits: Vec<usize>,
    /// Row-major over `splits`, last axis fastest.
    pub cells: Vec<ErrorBounds>,
}

impl PartitionedBounds {
    /// Bounds of the cell containing `k` (cells half-open except the last).
    pub fn cell_for(&self, k: &[f64]) -> Result<&ErrorBounds> {
        Ok(&self.cells[self.domain.cell_index(&self.splits, k)?])
    }

    pub fn inflated(&self, factor: f64) -> Self {
        Self { cells: self.cells.iter().map(|c| c.inflated(factor)).collect(), ..self.clone() }
    }

    /// Elementwise maximum over all cells, covering the whole domain.
    pub fn envelope(&self) -> ErrorBounds {
        let mut out = self.cells[0].clone();
        out.subdomain = self.domain.clone();
        for c in &self.cells[1..] {
            for (e, &v) in out.e_final.iter_mut().zip(&c.e_final) {
                *e = e.max(v);
            }
            for (e, &v) in out.e_interval.iter_mut().flatten().zip(c.e_interval.iter().flatten()) {
                *e = e.max(v);
            }
            out.n_sample += c.n_sample;
        }
        out
    }
}

/// The same draws as [`estimate`] with equal arguments, each credited to the
/// `K` cell its `k` falls in.
#[allow(clippy::too_many_arguments)]
pub fn partition_and_estimate<T: Scalar>(
    system: &dyn BlackBoxSystem,
    net: &ReluNetwork<T>,
    spec: &TrajectorySpec,
    p0_box: &Hyperrectangle<f64>,
    kd: &Hyperrectangle<f64>,
    splits: &[usize],
    n_sample: usize,
    n_substeps: usize,
    seed: u64,
) -> Result<PartitionedBounds> {
    let boxes = kd.split(splits)?;
    if n_sample == 0 {
        return Err(Error::Input("n_sample must be at least 1".into()));
    }
    let ds = draws(p0_box, kd, n_sample, seed);
    let errs = all_sample_errors(system, net, spec, &ds, n_substeps)?;
    let mut cells: Vec<ErrorBounds> = boxes.into_iter().map(|b| ErrorBounds::zeros(spec, b)).collect();
    for (d, e) in ds.iter().zip(&errs) {
        cells[kd.cell_index(splits, &d.k)?].absorb(e);
    }
    if let Some(i) = cells.iter().position(|c| c.n_sample == 0) {
        return Err(Error::Input(format!("cell {i} received no samples; raise n_sample")));
    }
    Ok(PartitionedBounds { domain: kd.clone(), splits: splits.to_vec(), cells })
}

/// Outcome of checking bounds against fresh draws.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Validation {
    pub n_fresh: usize,
    /// Draws with at least one error above its bound.
    pub n_exceeding: usize,
    pub exceedance_fraction: f64,
    /// Largest `error / bound` seen (`inf` when a zero bound is exceeded).
    pub worst_ratio: f64,
}

impl Validation {
    pub fn certified(&self) -> bool {
        self.n_exceeding == 0
    }
}

/// Checks `bounds` on `n_fresh` new draws whose seeds differ from estimation.
#[allow(clippy::too_many_arguments)]
pub fn validate<T: Scalar>(
    system: &dyn BlackBoxSystem,
    net: &ReluNetwork<T>,
    spec: &TrajectorySpec,
    bounds: &PartitionedBounds,
    p0_box: &Hyperrectangle<f64>,
    n_fresh: usize,
    n_substeps: usize,
    seed: u64,
) -> Result<Validation> {
    let ds = draws(p0_box, &bounds.domain, n_fresh, derive_seed(seed, u64::MAX));
    let errs = all_sample_errors(system, net, spec, &ds, n_substeps)?;
    let mut n_exceeding = 0;
    let mut worst = 0.0_f64;
    for (d, e) in ds.iter().zip(&errs) {
        let b = bounds.cell_for(&d.k)?;
        let pairs = e.e_final.iter().zip(&b.e_final).chain(e.e_interval.iter().flatten().zip(b.e_interval.iter().flatten()));
        let mut exceeded = false;
        for (&err, &bound) in pairs {
            if err > bound {
                exceeded = true;
            }
            let ratio = if bound > 0.0 { err / bound } else if err > 0.0 { f64::INFINITY } else { 0.0 };
            worst = worst.max(ratio);
        }
        n_exceeding += usize::from(exceeded);
    }
    Ok(Validation {
        n_fresh,
        n_exceeding,
        exceedance_fraction: if n_fresh == 0 { 0.0 } else { n_exceeding as f64 / n_fresh as f64 },
        worst_ratio: worst,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_sets_are_origin_boxes() {
        let b = ErrorBounds {
            e_final: vec![1.0, 2.0],
            e_interval: vec![vec![0.0, 0.5]],
            n_sample: 1,
            subdomain: Hyperrectangle::new(vec![0.0], vec![1.0]).unwrap(),
        };
        let (ef, ei) = error_sets::<f64>(&b);
        assert_eq!(ef.lower(), &[-1.0, -2.0]);
        assert_eq!(ef.upper(), &[1.0, 2.0]);
        assert_eq!(ef.support(&[0.0, 1.0]), 2.0);
        assert_eq!(ei[0].upper(), &[0.0, 0.5]);
        let (ef32, _) = error_sets::<f32>(&ErrorBounds { e_final: vec![0.1, 0.1], ..b.clone() });
        assert!(ef32.upper()[0] as f64 >= 0.1);
    }

    #[test]
    fn dominance_and_inflation() {
        let b = ErrorBounds {
            e_final: vec![1.0],
            e_interval: vec![vec![0.5]],
            n_sample: 1,
            subdomain: Hyperrectangle::new(vec![0.0], vec![1.0]).unwrap(),
        };
        let big = b.inflated(2.0);
        assert_eq!(big.e_final, vec![2.0]);
        assert!(b.dominated_by(&big) && !big.dominated_by(&b));
    }

    #[test]
    fn check_times_cover_interval_ends() {
        let spec = TrajectorySpec::new(1, 0, 0.2, 0.1).unwrap();
        let ts = check_times(&spec, 3);
        assert_eq!(ts.len(), 6);
        assert_eq!(ts[0], 0.0);
        assert!((ts[1] - 0.05).abs() < 1e-15);
        assert!((ts[5] - 0.2).abs() < 1e-15);
    }
}
