//! Online reach-avoid computation: goal shrinking and obstacle buffering,
//! the reach set of each region, its avoid set, sampling, and the loop that
//! walks regions until a certified sample turns up.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ahpoly::{AHPolytope, Boundary};
use crate::blackbox::{derive_seed, BlackBoxSystem};
use crate::errbound::{error_sets, ErrorBounds, PartitionedBounds};
use crate::error::{Error, Result};
use crate::hpoly::{ball_outer_polytope, preimage, HPolytope, Hyperrectangle, PolytopeSpec};
use crate::linalg::Matrix;
use crate::relunet::ReluNetwork;
use crate::rpm::{AffineRegion, RegionWalker};
use crate::scalar::{Scalar, EPS_FEAS};
use crate::trajmodel::{slice, SlicedAffineMap, TrajectorySpec};

/// Samples drawn from each nonempty reach set.
pub const SAMPLES_PER_REGION: usize = 50;
/// Bounding-box draws allowed per requested reach-set sample.
pub const REJECTION_FACTOR: usize = 200;

/// The online problem instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar", try_from = "ScenarioFile<T>", into = "ScenarioFile<T>")]
pub struct Scenario<T> {
    pub p0: Hyperrectangle<T>,
    pub k: Hyperrectangle<T>,
    pub spec: TrajectorySpec,
    /// In `ℝ^{n_p + n_q}`.
    pub goal: HPolytope<T>,
    /// Each in `ℝ^{n_p}`.
    pub obstacles: Vec<HPolytope<T>>,
    pub agent_radius: T,
}

#[derive(Clone, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
struct ScenarioFile<T> {
    #[serde(rename = "P0")]
    p0: Hyperrectangle<T>,
    #[serde(rename = "K")]
    k: Hyperrectangle<T>,
    spec: TrajectorySpec,
    goal: PolytopeSpec<T>,
    #[serde(default)]
    obstacles: Vec<PolytopeSpec<T>>,
    #[serde(default)]
    agent_radius: T,
}

impl<T: Scalar> TryFrom<ScenarioFile<T>> for Scenario<T> {
    type Error = Error;
    fn try_from(f: ScenarioFile<T>) -> Result<Self> {
        Scenario::new(
            f.p0,
            f.k,
            f.spec,
            f.goal.to_hpolytope(),
            f.obstacles.iter().map(PolytopeSpec::to_hpolytope).collect(),
            f.agent_radius,
        )
    }
}

impl<T: Scalar> From<Scenario<T>> for ScenarioFile<T> {
    fn from(s: Scenario<T>) -> Self {
        ScenarioFile {
            p0: s.p0,
            k: s.k,
            spec: s.spec,
            goal: PolytopeSpec::H(s.goal),
            obstacles: s.obstacles.into_iter().map(PolytopeSpec::H).collect(),
            agent_radius: s.agent_radius,
        }
    }
}

impl<T: Scalar> Scenario<T> {
    pub fn new(
        p0: Hyperrectangle<T>,
        k: Hyperrectangle<T>,
        spec: TrajectorySpec,
        goal: HPolytope<T>,
        obstacles: Vec<HPolytope<T>>,
        agent_radius: T,
    ) -> Result<Self> {
        Error::check_dim("P0", spec.n_p, p0.dim())?;
        Error::check_dim("goal", spec.n_p + spec.n_q, goal.dim())?;
        for o in &obstacles {
            Error::check_dim("obstacle", spec.n_p, o.dim())?;
        }
        if !p0.contains(&vec![T::zero(); spec.n_p], T::zero()) {
            return Err(Error::Input("P0 must contain the origin".into()));
        }
        if !(agent_radius >= T::zero()) {
            return Err(Error::Input("agent radius must be nonnegative".into()));
        }
        Ok(Self { p0, k, spec, goal, obstacles, agent_radius })
    }

    pub fn n_k(&self) -> usize {
        self.k.dim()
    }
}

/// Shrunken goal and buffered obstacles for one set of error bounds.
#[derive(Clone, Debug)]
pub struct Prepared<T> {
    /// `G ⊖ E_{t_f}`; `None` when empty.
    pub goal: Option<HPolytope<T>>,
    /// `Õ_{t,j}` indexed `[t][j]` for `t = 0, …, t_f − Δt`.
    pub obstacles: Vec<Vec<HPolytope<T>>>,
}

/// `G̃ = G ⊖ E_{t_f}` and `Õ_{t,j} = (O_j ⊕ agent) ⊕ Ē_t`.
pub fn prepare<T: Scalar>(scenario: &Scenario<T>, bounds: &ErrorBounds) -> Result<Prepared<T>> {
    let spec = &scenario.spec;
    Error::check_dim("final error channels", spec.n_p + spec.n_q, bounds.e_final.len())?;
    Error::check_dim("interval error rows", spec.steps(), bounds.e_interval.len())?;
    let (e_final, e_interval) = error_sets::<T>(bounds);
    let shrunk = scenario.goal.pontryagin_diff(&e_final)?;
    let goal = if shrunk.is_empty()? { None } else { Some(shrunk) };
    let body = ball_outer_polytope(spec.n_p, scenario.agent_radius);
    let grown: Vec<HPolytope<T>> = scenario
        .obstacles
        .iter()
        .map(|o| if scenario.agent_radius > T::zero() { o.minkowski_sum_outer(&body) } else { Ok(o.clone()) })
        .collect::<Result<_>>()?;
    let obstacles = e_interval
        .iter()
        .map(|e| grown.iter().map(|o| o.minkowski_buffer(e)).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;
    Ok(Prepared { goal, obstacles })
}

/// Reach set `Ω ⊆ P0 × region` of one region.
#[derive(Clone, Debug)]
pub struct ReachSet<T> {
    pub omega: HPolytope<T>,
    pub region_index: usize,
}

/// `Ω = preimage(G̃, P0 × region, [C_{t_f}; C_q], [d_{t_f}; d_q])`.
pub fn compute_brs<T: Scalar>(
    region: &HPolytope<T>,
    sliced: &SlicedAffineMap<T>,
    p0: &Hyperrectangle<T>,
    goal: &HPolytope<T>,
) -> Result<ReachSet<T>> {
    let domain = p0.as_hpolytope().cartesian_product(region);
    let (c, d) = sliced.final_map()?;
    Ok(ReachSet { omega: preimage(goal, &domain, &c, &d)?, region_index: sliced.region_index })
}

/// One avoid piece `proj(Ω) ∩ conv(B_{t,j}, B_{t+Δt,j})` with its hull ends.
#[derive(Clone, Debug)]
pub struct AvoidPiece<T> {
    pub t: usize,
    pub obstacle: usize,
    pub b_start: AHPolytope<T>,
    pub b_end: AHPolytope<T>,
    pub set: AHPolytope<T>,
}

/// Nonempty avoid pieces of one region and how many were pruned.
#[derive(Clone, Debug)]
pub struct AvoidSet<T> {
    pub pieces: Vec<AvoidPiece<T>>,
    pub n_pruned: usize,
    pub region_index: usize,
}

impl<T: Scalar> AvoidSet<T> {
    /// First piece containing `p0` (inclusive boundary), if any.
    pub fn hit(&self, p0: &[T]) -> Result<Option<usize>> {
        for (i, piece) in self.pieces.iter().enumerate() {
            if piece.set.contains_point(p0, Boundary::Inclusive)? {
                return Ok(Some(i));
            }
        }
        Ok(None)
    }
}

/// `B = proj_{n_p}(preimage(Õ, H([0 A], b), C_{s,t}, d_{s,t}))`.
pub fn avoid_end<T: Scalar>(
    obstacle: &HPolytope<T>,
    lifted_region: &HPolytope<T>,
    sliced: &SlicedAffineMap<T>,
    step: usize,
    n_p: usize,
) -> Result<AHPolytope<T>> {
    let pre = preimage(obstacle, lifted_region, &sliced.c_t[step], &sliced.d_t[step])?;
    AHPolytope::project(&pre, n_p)
}

/// Region constraints on `k` lifted to `[p0; k]` with a free `p0`.
pub fn lift_region<T: Scalar>(region: &HPolytope<T>, n_p: usize) -> Result<HPolytope<T>> {
    let zeros = Matrix::zeros(region.num_constraints(), n_p);
    HPolytope::new(Matrix::hstack(&[&zeros, region.a()])?, region.b().to_vec())
}

/// All avoid pieces of one region, empty ones pruned. Pieces are built and
/// checked in parallel and returned in `(t, j)` order.
pub fn compute_bas<T: Scalar>(
    region: &HPolytope<T>,
    sliced: &SlicedAffineMap<T>,
    reach: &ReachSet<T>,
    obstacles: &[Vec<HPolytope<T>>],
) -> Result<AvoidSet<T>> {
    let n_p = sliced.c_t[0].nrows();
    let lifted = lift_region(region, n_p)?;
    let proj_omega = AHPolytope::project(&reach.omega, n_p)?;
    let jobs: Vec<(usize, usize)> =
        (0..obstacles.len()).flat_map(|t| (0..obstacles[t].len()).map(move |j| (t, j))).collect();
    let built: Vec<Result<Option<AvoidPiece<T>>>> = jobs
        .par_iter()
        .map(|&(t, j)| {
            let o = &obstacles[t][j];
            let b_start = avoid_end(o, &lifted, sliced, t, n_p)?;
            let b_end = avoid_end(o, &lifted, sliced, t + 1, n_p)?;
            // Both ends empty means the hull is empty.
            if b_start.is_empty()? && b_end.is_empty()? {
                return Ok(None);
            }
            let set = proj_omega.intersect(&b_start.convex_hull(&b_end)?)?;
            if set.is_empty()? {
                return Ok(None);
            }
            Ok(Some(AvoidPiece { t, obstacle: j, b_start, b_end, set }))
        })
        .collect();
    let mut pieces = Vec::new();
    for b in built {
        if let Some(p) = b? {
            pieces.push(p);
        }
    }
    let n_pruned = jobs.len() - pieces.len();
    Ok(AvoidSet { pieces, n_pruned, region_index: reach.region_index })
}

/// A certified initial condition and parameter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct BrasSample<T> {
    pub p0: Vec<T>,
    pub k: Vec<T>,
    pub region_index: usize,
    /// Number of avoid pieces `p0` was checked against; none contained it.
    pub pieces_checked: usize,
}

/// Outcome of sampling one region.
#[derive(Clone, Debug)]
pub struct SampleOutcome<T> {
    pub accepted: Vec<BrasSample<T>>,
    /// Reach-set members drawn.
    pub tried: usize,
}

/// Draws up to `n_try` points of `Ω` by rejection from its bounding box and
/// keeps those whose `p0` lies in no avoid piece. Reach membership is strict
/// (exclusive boundary); avoid membership is inclusive.
pub fn sample_bras<T: Scalar>(
    reach: &ReachSet<T>,
    avoid: &AvoidSet<T>,
    n_p: usize,
    n_try: usize,
    seed: u64,
) -> Result<SampleOutcome<T>> {
    let mut out = SampleOutcome { accepted: Vec::new(), tried: 0 };
    if n_try == 0 || reach.omega.is_empty()? {
        return Ok(out);
    }
    let bbox = reach.omega.bounding_box()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inner = -T::lit(EPS_FEAS);
    for _ in 0..n_try * REJECTION_FACTOR {
        if out.tried == n_try {
            break;
        }
        let z = bbox.sample_with(&mut rng);
        if reach.omega.max_violation(&z) > inner {
            continue;
        }
        out.tried += 1;
        let (p0, k) = z.split_at(n_p);
        if avoid.hit(p0)?.is_none() {
            out.accepted.push(BrasSample {
                p0: p0.to_vec(),
                k: k.to_vec(),
                region_index: reach.region_index,
                pieces_checked: avoid.pieces.len(),
            });
        }
    }
    Ok(out)
}

/// Limits on the region walk.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Budget {
    pub max_regions: usize,
    pub samples_per_region: usize,
}

impl Default for Budget {
    fn default() -> Self {
        Self { max_regions: 1000, samples_per_region: SAMPLES_PER_REGION }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    /// A certified sample was found.
    Found,
    /// The shrunken goal is empty for every error-bound cell.
    GoalEmpty,
    /// Every region was explored without a certified sample.
    Exhausted,
    /// The region budget ran out first.
    Budget,
}

/// Work done on one region clipped to one error-bound cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionReport {
    pub region: usize,
    pub cell: usize,
    pub brs_empty: bool,
    pub n_pieces: usize,
    pub n_pruned: usize,
    pub samples_tried: usize,
    pub found: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct SolveReport<T> {
    pub outcome: Outcome,
    pub regions_explored: usize,
    pub seed_k: Vec<T>,
    pub regions: Vec<RegionReport>,
    /// Accepted samples of the region where the search stopped.
    pub samples: Vec<BrasSample<T>>,
    pub first: Option<BrasSample<T>>,
}

/// Everything computed for one region clipped to one cell.
#[derive(Clone, Debug)]
pub struct RegionWork<T> {
    pub report: RegionReport,
    pub sliced: SlicedAffineMap<T>,
    pub region: HPolytope<T>,
    pub reach: Option<ReachSet<T>>,
    pub avoid: Option<AvoidSet<T>>,
    pub samples: Vec<BrasSample<T>>,
}

/// Error-bound cells clipped to the scenario's `K` with their prepared sets.
pub struct CellPlan<T> {
    pub cells: Vec<(usize, HPolytope<T>, Prepared<T>)>,
}

impl<T: Scalar> CellPlan<T> {
    pub fn new(scenario: &Scenario<T>, bounds: &PartitionedBounds) -> Result<Self> {
        Error::check_dim("bounds domain", scenario.n_k(), bounds.domain.dim())?;
        let kpoly = scenario.k.as_hpolytope();
        let boxes = bounds.domain.split(&bounds.splits)?;
        let mut cells = Vec::new();
        for (i, (cell_box, b)) in boxes.iter().zip(&bounds.cells).enumerate() {
            let clipped = kpoly.intersect(&cell_box.cast::<T>().as_hpolytope())?;
            if clipped.chebyshev_center(T::one())?.is_none_or(|(_, r)| r <= T::zero()) {
                continue;
            }
            cells.push((i, clipped, prepare(scenario, b)?));
        }
        // K must be covered by the bounds domain.
        let dom = bounds.domain.cast::<T>();
        let tol = T::lit(EPS_FEAS);
        if !dom.contains(scenario.k.lower(), tol) || !dom.contains(scenario.k.upper(), tol) {
            return Err(Error::Input("scenario K is not covered by the error-bound domain".into()));
        }
        Ok(Self { cells })
    }

    pub fn goal_empty_everywhere(&self) -> bool {
        self.cells.iter().all(|(_, _, p)| p.goal.is_none())
    }
}

/// Reach set, avoid set and samples for one region clipped to one cell.
pub fn process_region<T: Scalar>(
    scenario: &Scenario<T>,
    region: &AffineRegion<T>,
    cell: usize,
    clip: &HPolytope<T>,
    prepared: &Prepared<T>,
    n_try: usize,
    seed: u64,
) -> Result<Option<RegionWork<T>>> {
    let sub = region.region.intersect(clip)?;
    match sub.chebyshev_center(T::one())? {
        Some((_, r)) if r > T::lit(EPS_FEAS) => {}
        _ => return Ok(None),
    }
    let sub = sub.reduce()?;
    let sliced = slice(&region.c, &region.d, &scenario.spec, region.index)?;
    let mut report = RegionReport {
        region: region.index,
        cell,
        brs_empty: true,
        n_pieces: 0,
        n_pruned: 0,
        samples_tried: 0,
        found: 0,
    };
    let Some(goal) = &prepared.goal else {
        return Ok(Some(RegionWork { report, sliced, region: sub, reach: None, avoid: None, samples: Vec::new() }));
    };
    let reach = compute_brs(&sub, &sliced, &scenario.p0, goal)?;
    if reach.omega.is_empty()? {
        return Ok(Some(RegionWork { report, sliced, region: sub, reach: Some(reach), avoid: None, samples: Vec::new() }));
    }
    report.brs_empty = false;
    let reach = ReachSet { omega: reach.omega.reduce()?, region_index: reach.region_index };
    let avoid = compute_bas(&sub, &sliced, &reach, &prepared.obstacles)?;
    report.n_pieces = avoid.pieces.len();
    report.n_pruned = avoid.n_pruned;
    let sampled = sample_bras(&reach, &avoid, scenario.spec.n_p, n_try, seed)?;
    report.samples_tried = sampled.tried;
    report.found = sampled.accepted.len();
    Ok(Some(RegionWork { report, sliced, region: sub, reach: Some(reach), avoid: Some(avoid), samples: sampled.accepted }))
}

/// Walks regions from a random seed `k ∈ K` until a certified sample is
/// found, the regions run out or the budget is spent.
pub fn solve<T: Scalar>(
    scenario: &Scenario<T>,
    net: &ReluNetwork<T>,
    bounds: &PartitionedBounds,
    budget: Budget,
    seed: u64,
) -> Result<SolveReport<T>> {
    solve_with(scenario, net, bounds, budget, seed, |_| {})
}

/// [`solve`] with a callback on every processed region (for timing and plots).
pub fn solve_with<T: Scalar>(
    scenario: &Scenario<T>,
    net: &ReluNetwork<T>,
    bounds: &PartitionedBounds,
    budget: Budget,
    seed: u64,
    mut on_region: impl FnMut(&RegionWork<T>),
) -> Result<SolveReport<T>> {
    Error::check_dim("network input", scenario.n_k(), net.input_dim())?;
    Error::check_dim("network output", scenario.spec.output_dim(), net.output_dim())?;
    let plan = CellPlan::new(scenario, bounds)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seed_k = scenario.k.sample_with(&mut rng);
    let mut report = SolveReport {
        outcome: Outcome::Exhausted,
        regions_explored: 0,
        seed_k: seed_k.clone(),
        regions: Vec::new(),
        samples: Vec::new(),
        first: None,
    };
    if plan.goal_empty_everywhere() {
        report.outcome = Outcome::GoalEmpty;
        return Ok(report);
    }
    let mut walker = RegionWalker::new(net, &scenario.k, &seed_k)?.with_cap(budget.max_regions);
    while let Some(region) = walker.next_region()? {
        report.regions_explored += 1;
        for (cell, clip, prepared) in &plan.cells {
            let s = derive_seed(seed, (region.index * plan.cells.len() + cell) as u64);
            let Some(work) = process_region(scenario, &region, *cell, clip, prepared, budget.samples_per_region, s)? else {
                continue;
            };
            on_region(&work);
            report.regions.push(work.report.clone());
            if !work.samples.is_empty() {
                report.first = Some(work.samples[0].clone());
                report.samples = work.samples;
                report.outcome = Outcome::Found;
                return Ok(report);
            }
        }
    }
    if walker.incomplete() {
        report.outcome = Outcome::Budget;
    }
    Ok(report)
}

/// Black-box outcome of one certified sample under one disturbance seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RolloutCheck {
    pub seed: u64,
    pub reached: bool,
    pub avoided: bool,
    /// Smallest obstacle clearance seen (most negative violation of an
    /// agent-grown obstacle; positive means clear).
    pub min_clearance: f64,
}

/// Points checked per timestep when replaying a sample.
pub const VERIFY_POINTS_PER_STEP: usize = 50;

/// Replays `sample` on the black box under `seed`: the final `[p; q]` must lie
/// in the goal and every checked position must stay outside each obstacle
/// grown by the agent's outer octagon.
pub fn verify_sample(
    system: &dyn BlackBoxSystem,
    scenario: &Scenario<f64>,
    sample: &BrasSample<f64>,
    seed: u64,
    points_per_step: usize,
) -> Result<RolloutCheck> {
    let spec = &scenario.spec;
    let n = spec.steps() * points_per_step.max(1);
    let times: Vec<f64> = (0..=n).map(|i| spec.t_f * i as f64 / n as f64).collect();
    let (ps, q) = system.simulate(&sample.k, seed, &times)?;
    let body = ball_outer_polytope(spec.n_p, scenario.agent_radius);
    let grown: Vec<HPolytope<f64>> = scenario
        .obstacles
        .iter()
        .map(|o| if scenario.agent_radius > 0.0 { o.minkowski_sum_outer(&body) } else { Ok(o.clone()) })
        .collect::<Result<_>>()?;
    let shift = |p: &[f64]| -> Vec<f64> { p.iter().zip(&sample.p0).map(|(a, b)| a + b).collect() };
    let mut min_clearance = f64::INFINITY;
    for p in &ps {
        let x = shift(p);
        for o in &grown {
            min_clearance = min_clearance.min(o.max_violation(&x));
        }
    }
    let mut last = shift(ps.last().expect("at least one time"));
    last.extend(q);
    Ok(RolloutCheck {
        seed,
        reached: scenario.goal.max_violation(&last) <= 0.0,
        avoided: min_clearance > 0.0,
        min_clearance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::relunet::Layer;

    fn unit_box(lo: f64, hi: f64, n: usize) -> Hyperrectangle<f64> {
        Hyperrectangle::new(vec![lo; n], vec![hi; n]).unwrap()
    }

    fn bounds(spec: &TrajectorySpec, e_final: f64, e_int: f64, k: &Hyperrectangle<f64>) -> ErrorBounds {
        ErrorBounds {
            e_final: vec![e_final; spec.n_p + spec.n_q],
            e_interval: vec![vec![e_int; spec.n_p]; spec.steps()],
            n_sample: 1,
            subdomain: k.clone(),
        }
    }

    #[test]
    fn prepare_shrinks_and_buffers() {
        let spec = TrajectorySpec::new(2, 0, 0.2, 0.1).unwrap();
        let k = unit_box(0.0, 1.0, 1);
        let goal = unit_box(0.0, 2.0, 2).as_hpolytope();
        let obs = unit_box(3.0, 4.0, 2).as_hpolytope();
        let sc = Scenario::new(unit_box(-1.0, 1.0, 2), k.clone(), spec.clone(), goal.clone(), vec![obs.clone()], 0.0).unwrap();
        let zero = prepare(&sc, &bounds(&spec, 0.0, 0.0, &k)).unwrap();
        assert_eq!(zero.goal.as_ref().unwrap(), &goal);
        assert_eq!(zero.obstacles[1][0], obs);
        let p = prepare(&sc, &bounds(&spec, 0.5, 0.25, &k)).unwrap();
        let g = p.goal.unwrap().bounding_box().unwrap();
        assert_eq!(g.lower(), &[0.5, 0.5]);
        assert_eq!(g.upper(), &[1.5, 1.5]);
        assert_eq!(p.obstacles[0][0].support(&[1.0, 0.0]).unwrap(), 4.25);
        assert!(prepare(&sc, &bounds(&spec, 1.5, 0.0, &k)).unwrap().goal.is_none());
    }

    #[test]
    fn scenario_requires_origin_in_p0() {
        let spec = TrajectorySpec::new(1, 0, 0.1, 0.1).unwrap();
        let r = Scenario::new(unit_box(1.0, 2.0, 1), unit_box(0.0, 1.0, 1), spec, unit_box(0.0, 1.0, 1).as_hpolytope(), vec![], 0.0);
        assert!(r.is_err());
    }

    /// `p̂(t) = p0 + t·k` in one dimension over two steps.
    fn ramp() -> ReluNetwork<f64> {
        let out = Layer { weight: Matrix::from_rows(&[vec![0.1], vec![0.2]], 1).unwrap(), bias: vec![0.0, 0.0] };
        let hidden = Layer { weight: Matrix::identity(1), bias: vec![0.0] };
        ReluNetwork::new(vec![hidden, out]).unwrap()
    }

    #[test]
    fn toy_ramp_finds_a_sample_and_respects_the_obstacle() {
        let spec = TrajectorySpec::new(1, 0, 0.2, 0.1).unwrap();
        let k = Hyperrectangle::new(vec![1.0], vec![10.0]).unwrap();
        // Must end in [1, 2] and never touch [0.45, 0.55].
        let sc = Scenario::new(
            Hyperrectangle::new(vec![-1.0], vec![1.0]).unwrap(),
            k.clone(),
            spec.clone(),
            Hyperrectangle::new(vec![1.0], vec![2.0]).unwrap().as_hpolytope(),
            vec![Hyperrectangle::new(vec![0.45], vec![0.55]).unwrap().as_hpolytope()],
            0.0,
        )
        .unwrap();
        let pb = PartitionedBounds { domain: k.clone(), splits: vec![1], cells: vec![bounds(&spec, 0.0, 0.0, &k)] };
        let rep = solve(&sc, &ramp(), &pb, Budget::default(), 1).unwrap();
        assert_eq!(rep.outcome, Outcome::Found);
        for s in &rep.samples {
            let (p0, kv) = (s.p0[0], s.k[0]);
            let end = p0 + 0.2 * kv;
            assert!((1.0..=2.0).contains(&end));
            // Straight motion from p0 to end must miss the obstacle.
            assert!(end < 0.45 || p0 > 0.55);
        }
    }

    #[test]
    fn unreachable_goal_is_exhausted_and_empty_goal_flagged() {
        let spec = TrajectorySpec::new(1, 0, 0.2, 0.1).unwrap();
        let k = Hyperrectangle::new(vec![1.0], vec![10.0]).unwrap();
        let far = Hyperrectangle::new(vec![50.0], vec![60.0]).unwrap().as_hpolytope();
        let sc = Scenario::new(Hyperrectangle::new(vec![-1.0], vec![1.0]).unwrap(), k.clone(), spec.clone(), far, vec![], 0.0)
            .unwrap();
        let pb = PartitionedBounds { domain: k.clone(), splits: vec![1], cells: vec![bounds(&spec, 0.0, 0.0, &k)] };
        let rep = solve(&sc, &ramp(), &pb, Budget::default(), 1).unwrap();
        assert_eq!(rep.outcome, Outcome::Exhausted);
        assert!(rep.regions.iter().all(|r| r.brs_empty));
        let pb = PartitionedBounds { domain: k.clone(), splits: vec![1], cells: vec![bounds(&spec, 100.0, 0.0, &k)] };
        assert_eq!(solve(&sc, &ramp(), &pb, Budget::default(), 1).unwrap().outcome, Outcome::GoalEmpty);
    }

    #[test]
    fn scenario_json_accepts_boxes_and_h_polytopes() {
        let text = r#"{
            "P0": {"box": {"lower": [-1, -1], "upper": [1, 1]}},
            "K": {"box": {"lower": [0], "upper": [1]}},
            "spec": {"n_p": 2, "n_q": 0, "t_f": 1.0, "dt": 0.5},
            "goal": {"A": [[1, 0], [-1, 0], [0, 1], [0, -1]], "b": [1, 1, 1, 1]},
            "obstacles": [{"box": {"lower": [2, 2], "upper": [3, 3]}}],
            "agent_radius": 0.1
        }"#;
        let sc: Scenario<f64> = serde_json::from_str(text).unwrap();
        assert_eq!(sc.obstacles[0].num_constraints(), 4);
        let again: Scenario<f64> = serde_json::from_str(&serde_json::to_string(&sc).unwrap()).unwrap();
        assert_eq!(again, sc);
    }
}
