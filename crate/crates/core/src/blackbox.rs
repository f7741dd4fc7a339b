//! Synthetic black-box trajectory families and offline data collection.
//!
//! Every system integrates from `p0 = 0` and adds `p0` afterwards, so
//! translation invariance holds by construction. Disturbances act on speed
//! and turn rate only.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hpoly::Hyperrectangle;
use crate::relunet::TrainingSet;
use crate::trajmodel::TrajectorySpec;

/// Integration substeps per timestep.
pub const RK4_SUBSTEPS: usize = 20;

/// A trajectory family `p(t) = f_p(p0, k, t, d)`, `q = f_q(k, d)` queried as a
/// black box. The disturbance realization is selected by `seed`.
pub trait BlackBoxSystem: Send + Sync {
    fn name(&self) -> &str;

    fn spec(&self) -> &TrajectorySpec;

    /// The parameter set `K`.
    fn parameter_box(&self) -> &Hyperrectangle<f64>;

    /// Amplitude bound of each disturbance channel; empty when undisturbed.
    fn disturbance_bounds(&self) -> Vec<f64>;

    /// Positions at the ascending `times` and the final `q`, from `p0 = 0`.
    fn simulate(&self, k: &[f64], seed: u64, times: &[f64]) -> Result<(Vec<Vec<f64>>, Vec<f64>)>;

    /// Disturbance values realized under `seed`, one vector per piece.
    fn realized_disturbance(&self, _seed: u64) -> Vec<Vec<f64>> {
        Vec::new()
    }

    fn evaluate(&self, p0: &[f64], k: &[f64], t: f64, seed: u64) -> Result<Vec<f64>> {
        Error::check_dim("initial position", self.spec().n_p, p0.len())?;
        let (ps, _) = self.simulate(k, seed, &[t])?;
        Ok(ps[0].iter().zip(p0).map(|(a, b)| a + b).collect())
    }

    fn final_q(&self, k: &[f64], seed: u64) -> Result<Vec<f64>> {
        Ok(self.simulate(k, seed, &[])?.1)
    }
}

/// Looks up a built-in system by name.
pub fn builtin(name: &str) -> Result<Box<dyn BlackBoxSystem>> {
    match name {
        "drift2d" => Ok(Box::new(Drift2d::new())),
        "boat2d" => Ok(Box::new(Boat2d::new())),
        other => Err(Error::Input(format!("unknown system {other:?}; expected drift2d or boat2d"))),
    }
}

/// Per-row seed derived from a run seed (SplitMix64 finalizer).
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Fixed-step RK4 from `t = 0` on the grid `{i·h} ∪ breaks`. The right-hand
/// side receives the midpoint of the current step to select its smooth piece.
/// Query times between grid nodes are reached by one partial step from the
/// preceding node, so results do not depend on which times are queried.
fn integrate(
    x0: &[f64],
    h: f64,
    t_end: f64,
    breaks: &[f64],
    queries: &[f64],
    f: impl Fn(f64, &[f64]) -> Vec<f64>,
) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let n = (t_end / h).round() as usize;
    let mut nodes: Vec<f64> = (0..=n).map(|i| i as f64 * h).collect();
    nodes.extend(breaks.iter().copied().filter(|&b| b > 0.0 && b < t_end));
    nodes.sort_by(f64::total_cmp);
    nodes.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    let step = |x: &[f64], t0: f64, dt: f64| -> Vec<f64> {
        let mid = t0 + 0.5 * dt;
        let k1 = f(mid, x);
        let x2: Vec<f64> = x.iter().zip(&k1).map(|(a, b)| a + 0.5 * dt * b).collect();
        let k2 = f(mid, &x2);
        let x3: Vec<f64> = x.iter().zip(&k2).map(|(a, b)| a + 0.5 * dt * b).collect();
        let k3 = f(mid, &x3);
        let x4: Vec<f64> = x.iter().zip(&k3).map(|(a, b)| a + dt * b).collect();
        let k4 = f(mid, &x4);
        (0..x.len()).map(|i| x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])).collect()
    };
    let mut states = Vec::with_capacity(nodes.len());
    states.push(x0.to_vec());
    for w in nodes.windows(2) {
        let next = step(states.last().expect("seeded"), w[0], w[1] - w[0]);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input(format!("integration diverged at t={}", w[1])));
        }
        states.push(next);
    }
    let mut out = Vec::with_capacity(queries.len());
    for &tq in queries {
        if !(-1e-9..=t_end + 1e-9).contains(&tq) {
            return Err(Error::Input(format!("query time {tq} outside [0, {t_end}]")));
        }
        let i = nodes.partition_point(|&t| t <= tq + 1e-12).saturating_sub(1);
        let gap = tq - nodes[i];
        out.push(if gap > 1e-12 { step(&states[i], nodes[i], gap) } else { states[i].clone() });
    }
    Ok((out, states.pop().expect("seeded")))
}

/// Accelerate straight, turn right at a constant rate until the heading is
/// `−θ_β`, then brake hard while the body yaws around. `k = (v, θ_β)`,
/// `q = final heading`, no disturbance.
#[derive(Clone, Debug)]
pub struct Drift2d {
    spec: TrajectorySpec,
    k_box: Hyperrectangle<f64>,
}

impl Drift2d {
    pub const ACCEL: f64 = 4.0;
    pub const TURN_RATE: f64 = 0.5;
    pub const BRAKE: f64 = 5.0;
    /// Course change per metre while braking.
    pub const SLIP_GAIN: f64 = 0.1;
    /// Yaw change per metre while braking.
    pub const YAW_GAIN: f64 = 0.37;

    pub fn new() -> Self {
        Self {
            spec: TrajectorySpec::new(2, 1, 7.8, 0.1).expect("valid spec"),
            k_box: Hyperrectangle::new(vec![9.0, PI / 6.0], vec![11.0, 2.0 * PI / 9.0]).expect("valid box"),
        }
    }

    /// Switch times: end of acceleration, end of turn, standstill.
    pub fn switch_times(k: &[f64]) -> [f64; 3] {
        let t1 = k[0] / Self::ACCEL;
        let t2 = t1 + k[1] / Self::TURN_RATE;
        [t1, t2, t2 + k[0] / Self::BRAKE]
    }
}

impl Default for Drift2d {
    fn default() -> Self {
        Self::new()
    }
}

impl BlackBoxSystem for Drift2d {
    fn name(&self) -> &str {
        "drift2d"
    }

    fn spec(&self) -> &TrajectorySpec {
        &self.spec
    }

    fn parameter_box(&self) -> &Hyperrectangle<f64> {
        &self.k_box
    }

    fn disturbance_bounds(&self) -> Vec<f64> {
        Vec::new()
    }

    fn simulate(&self, k: &[f64], _seed: u64, times: &[f64]) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
        Error::check_dim("drift2d parameters", 2, k.len())?;
        let [t1, t2, t3] = Self::switch_times(k);
        // State: x, y, course χ, yaw ψ, speed u.
        let rhs = |tm: f64, s: &[f64]| -> Vec<f64> {
            let (chi, u) = (s[2], s[4]);
            let (dchi, dpsi, du) = if tm < t1 {
                (0.0, 0.0, Self::ACCEL)
            } else if tm < t2 {
                (-Self::TURN_RATE, -Self::TURN_RATE, 0.0)
            } else if tm < t3 {
                (-Self::SLIP_GAIN * u, Self::YAW_GAIN * u, -Self::BRAKE)
            } else {
                (0.0, 0.0, 0.0)
            };
            vec![u * chi.cos(), u * chi.sin(), dchi, dpsi, du]
        };
        let h = self.spec.dt / RK4_SUBSTEPS as f64;
        let (states, last) = integrate(&[0.0; 5], h, self.spec.t_f, &[t1, t2, t3], times, rhs)?;
        Ok((states.into_iter().map(|s| vec![s[0], s[1]]).collect(), vec![last[3]]))
    }
}

/// Unicycle steered toward the goal `(p_{x,g}, p_{y,g})` from heading `θ₀`,
/// with piecewise-constant disturbances on 1 s pieces: a relative speed error
/// and an additive turn-rate error. Speed fades with range and heading error,
/// so the vehicle settles on the goal instead of orbiting it.
/// `k = (θ₀, p_{x,g}, p_{y,g})`, no `q`.
#[derive(Clone, Debug)]
pub struct Boat2d {
    spec: TrajectorySpec,
    k_box: Hyperrectangle<f64>,
    amplitude: [f64; 2],
}

impl Boat2d {
    pub const MAX_SPEED: f64 = 1.2;
    pub const STEER_GAIN: f64 = 1.5;
    pub const PIECE: f64 = 1.0;

    pub fn new() -> Self {
        Self {
            spec: TrajectorySpec::new(2, 0, 10.0, 0.1).expect("valid spec"),
            k_box: Hyperrectangle::new(vec![-PI / 6.0, 4.0, -1.0], vec![PI / 6.0, 7.0, 1.0]).expect("valid box"),
            amplitude: [0.1, 0.1],
        }
    }

    fn pieces(&self) -> usize {
        (self.spec.t_f / Self::PIECE).ceil() as usize
    }

    /// `(relative speed error, turn-rate offset)` per piece; all zero for seed 0.
    fn disturbance(&self, seed: u64) -> Vec<[f64; 2]> {
        if seed == 0 {
            return vec![[0.0; 2]; self.pieces()];
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let [au, aw] = self.amplitude;
        (0..self.pieces()).map(|_| [rng.gen_range(-au..=au), rng.gen_range(-aw..=aw)]).collect()
    }
}

impl Default for Boat2d {
    fn default() -> Self {
        Self::new()
    }
}

impl BlackBoxSystem for Boat2d {
    fn name(&self) -> &str {
        "boat2d"
    }

    fn spec(&self) -> &TrajectorySpec {
        &self.spec
    }

    fn parameter_box(&self) -> &Hyperrectangle<f64> {
        &self.k_box
    }

    fn disturbance_bounds(&self) -> Vec<f64> {
        self.amplitude.to_vec()
    }

    fn realized_disturbance(&self, seed: u64) -> Vec<Vec<f64>> {
        self.disturbance(seed).into_iter().map(|d| d.to_vec()).collect()
    }

    /// Seed 0 is the undisturbed nominal run.
    fn simulate(&self, k: &[f64], seed: u64, times: &[f64]) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
        Error::check_dim("boat2d parameters", 3, k.len())?;
        let dist = self.disturbance(seed);
        let (gx, gy) = (k[1], k[2]);
        let rhs = |tm: f64, s: &[f64]| -> Vec<f64> {
            let [du, dw] = dist[((tm / Self::PIECE) as usize).min(dist.len() - 1)];
            let (ex, ey) = (gx - s[0], gy - s[1]);
            let range = ex.hypot(ey);
            let bearing = ey.atan2(ex);
            let u = Self::MAX_SPEED * range.tanh() * (bearing - s[2]).cos() * (1.0 + du);
            let w = Self::STEER_GAIN * (bearing - s[2]).sin() + dw;
            vec![u * s[2].cos(), u * s[2].sin(), w]
        };
        let breaks: Vec<f64> = (1..self.pieces()).map(|i| i as f64 * Self::PIECE).collect();
        let h = self.spec.dt / RK4_SUBSTEPS as f64;
        let (states, _) = integrate(&[0.0, 0.0, k[0]], h, self.spec.t_f, &breaks, times, rhs)?;
        Ok((states.into_iter().map(|s| vec![s[0], s[1]]).collect(), Vec::new()))
    }
}

/// Metadata written next to a dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub system: String,
    pub seed: u64,
    pub n_traj: usize,
    pub spec: TrajectorySpec,
    pub parameter_box: Hyperrectangle<f64>,
    /// Disturbance seed of each row.
    pub disturbance_seeds: Vec<u64>,
}

/// Rows of `k` features and `[p(Δt); …; p(t_f); q]` labels collected at `p0 = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub meta: DatasetMeta,
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<Vec<f64>>,
}

/// Column-major JSON layout of a dataset file.
#[derive(Serialize, Deserialize)]
struct DatasetFile {
    header: Vec<String>,
    columns: Vec<Vec<f64>>,
}

impl Dataset {
    pub fn training_set(&self) -> Result<TrainingSet<f64>> {
        TrainingSet::new(self.features.clone(), self.labels.clone())
    }

    pub fn header(&self) -> Vec<String> {
        let spec = &self.meta.spec;
        let nk = self.meta.parameter_box.dim();
        let mut h: Vec<String> = (1..=nk).map(|i| format!("k{i}")).collect();
        for j in 1..=spec.steps() {
            for c in 1..=spec.n_p {
                h.push(format!("p{c}_t{j}"));
            }
        }
        h.extend((1..=spec.n_q).map(|c| format!("q{c}")));
        h
    }

    /// Writes the columnar data to `path` and the metadata to `<path>.meta.json`.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let width = self.features.first().map_or(0, Vec::len) + self.labels.first().map_or(0, Vec::len);
        let mut columns = vec![Vec::with_capacity(self.features.len()); width];
        for (f, l) in self.features.iter().zip(&self.labels) {
            for (c, &v) in columns.iter_mut().zip(f.iter().chain(l)) {
                c.push(v);
            }
        }
        let file = DatasetFile { header: self.header(), columns };
        std::fs::write(path, serde_json::to_string(&file)?)?;
        std::fs::write(meta_path(path), serde_json::to_string_pretty(&self.meta)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file: DatasetFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        let meta: DatasetMeta = serde_json::from_str(&std::fs::read_to_string(meta_path(path))?)?;
        let nk = meta.parameter_box.dim();
        let width = nk + meta.spec.output_dim();
        if file.columns.len() != width || file.header.len() != width {
            return Err(Error::Format(format!("dataset has {} columns, expected {width}", file.columns.len())));
        }
        let rows = file.columns.first().map_or(0, Vec::len);
        if file.columns.iter().any(|c| c.len() != rows) || rows != meta.n_traj {
            return Err(Error::Format("ragged dataset columns".into()));
        }
        let row = |i: usize, r: std::ops::Range<usize>| r.map(|c| file.columns[c][i]).collect::<Vec<f64>>();
        let features = (0..rows).map(|i| row(i, 0..nk)).collect();
        let labels = (0..rows).map(|i| row(i, nk..width)).collect();
        Ok(Self { meta, features, labels })
    }
}

pub fn meta_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    s.into()
}

/// Label row `[p(Δt); …; p(t_f); q]` of one rollout from `p0 = 0`.
pub fn label_row(system: &dyn BlackBoxSystem, k: &[f64], seed: u64) -> Result<Vec<f64>> {
    let spec = system.spec();
    let times: Vec<f64> = (1..=spec.steps()).map(|j| spec.time(j)).collect();
    let (ps, q) = system.simulate(k, seed, &times)?;
    Ok(ps.into_iter().flatten().chain(q).collect())
}

/// Samples `n_traj` parameters uniformly from `k_box` and records one
/// rollout each with a fresh disturbance seed.
pub fn collect(system: &dyn BlackBoxSystem, k_box: &Hyperrectangle<f64>, n_traj: usize, seed: u64) -> Result<Dataset> {
    if n_traj == 0 {
        return Err(Error::Input("n_traj must be at least 1".into()));
    }
    Error::check_dim("parameter box", system.parameter_box().dim(), k_box.dim())?;
    let features = k_box.sample_uniform(n_traj, seed);
    let seeds: Vec<u64> = (0..n_traj as u64).map(|i| derive_seed(seed, i)).collect();
    let labels = features
        .par_iter()
        .zip(&seeds)
        .enumerate()
        .map(|(i, (k, &s))| label_row(system, k, s).map_err(|e| Error::System { index: i, message: e.to_string() }))
        .collect::<Result<Vec<_>>>()?;
    let meta = DatasetMeta {
        system: system.name().to_string(),
        seed,
        n_traj,
        spec: system.spec().clone(),
        parameter_box: k_box.clone(),
        disturbance_seeds: seeds,
    };
    Ok(Dataset { meta, features, labels })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn drift_starts_at_origin_and_stops() {
        let sys = Drift2d::new();
        let k = [10.0, 0.6];
        let p0 = sys.evaluate(&[0.0, 0.0], &k, 0.0, 0).unwrap();
        assert_eq!(p0, vec![0.0, 0.0]);
        let [_, _, t3] = Drift2d::switch_times(&k);
        assert!(t3 < 7.8);
        let a = sys.evaluate(&[0.0, 0.0], &k, t3 + 0.3, 0).unwrap();
        let b = sys.evaluate(&[0.0, 0.0], &k, 7.8, 0).unwrap();
        assert!((a[0] - b[0]).abs() < 1e-9 && (a[1] - b[1]).abs() < 1e-9);
    }

    #[test]
    fn drift_acceleration_phase_is_closed_form() {
        let sys = Drift2d::new();
        let p = sys.evaluate(&[0.0, 0.0], &[10.0, 0.6], 1.0, 0).unwrap();
        // x = a t² / 2 with a = 4.
        assert!((p[0] - 2.0).abs() < 1e-12 && p[1].abs() < 1e-12);
    }

    #[test]
    fn query_set_does_not_change_values() {
        let sys = Boat2d::new();
        let k = [0.2, 5.0, 0.5];
        let (a, _) = sys.simulate(&k, 7, &[3.33]).unwrap();
        let (b, _) = sys.simulate(&k, 7, &[0.5, 3.33, 9.0]).unwrap();
        assert_eq!(a[0], b[1]);
    }

    #[test]
    fn disturbances_are_bounded_and_seeded() {
        let sys = Boat2d::new();
        let a = sys.realized_disturbance(5);
        assert_eq!(a, sys.realized_disturbance(5));
        assert_ne!(a, sys.realized_disturbance(6));
        assert!(a.iter().flatten().all(|v| v.abs() <= 0.1));
        assert!(Drift2d::new().realized_disturbance(5).is_empty());
    }

    #[test]
    fn unknown_builtin() {
        assert!(builtin("rover").is_err());
        assert_eq!(builtin("boat2d").unwrap().name(), "boat2d");
    }

    #[test]
    fn collect_shapes_and_determinism() {
        let sys = Drift2d::new();
        let one = collect(&sys, sys.parameter_box(), 1, 3).unwrap();
        assert_eq!(one.labels[0].len(), 78 * 2 + 1);
        let a = collect(&sys, sys.parameter_box(), 5, 3).unwrap();
        let b = collect(&sys, sys.parameter_box(), 5, 3).unwrap();
        assert_eq!(a, b);
        assert!(collect(&sys, sys.parameter_box(), 0, 3).is_err());
    }

    #[test]
    fn dataset_file_round_trip() {
        let sys = Boat2d::new();
        let data = collect(&sys, sys.parameter_box(), 4, 1).unwrap();
        let dir = std::env::temp_dir().join(format!("np-ds-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("data.json");
        data.save(&path).unwrap();
        assert_eq!(Dataset::load(&path).unwrap(), data);
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
