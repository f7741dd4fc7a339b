use neuralparc::blackbox::{BlackBoxSystem, Boat2d};
use neuralparc::errbound::{error_sets, estimate, partition_and_estimate, ErrorBounds, PartitionedBounds};
use neuralparc::linalg::Matrix;
use neuralparc::reachavoid::{compute_bas, compute_brs, prepare, solve, Budget, Outcome};
use neuralparc::relunet::Layer;
use neuralparc::rpm::{enumerate_all, DEFAULT_REGION_CAP};
use neuralparc::trajmodel::{interpolate, predict, slice, TrajectorySpec};
use neuralparc::{HPolytope, Hyperrectangle, ReluNetwork, Scenario};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn boxed(lo: &[f64], hi: &[f64]) -> Hyperrectangle {
    Hyperrectangle::new(lo.to_vec(), hi.to_vec()).unwrap()
}

fn flat_bounds(spec: &TrajectorySpec, e_final: f64, e_int: f64, k: &Hyperrectangle) -> ErrorBounds {
    ErrorBounds {
        e_final: vec![e_final; spec.n_p + spec.n_q],
        e_interval: vec![vec![e_int; spec.n_p]; spec.steps()],
        n_sample: 1,
        subdomain: k.clone(),
    }
}

fn boat_net(sys: &Boat2d) -> ReluNetwork {
    ReluNetwork::random(&[3, 8, sys.spec().output_dim()], 2).unwrap()
}

#[test]
fn bounds_grow_with_nested_draws() {
    let sys = Boat2d::new();
    let net = boat_net(&sys);
    let p0 = boxed(&[-0.2, -0.2], &[0.2, 0.2]);
    let small = estimate(&sys, &net, sys.spec(), &p0, sys.parameter_box(), 150, 4, 8).unwrap();
    let large = estimate(&sys, &net, sys.spec(), &p0, sys.parameter_box(), 300, 4, 8).unwrap();
    assert!(small.dominated_by(&large));
    assert_eq!(large.e_final.len(), 2);
    assert_eq!(large.e_interval.len(), sys.spec().steps());
}

#[test]
fn cell_bounds_never_exceed_global() {
    let sys = Boat2d::new();
    let net = boat_net(&sys);
    let p0 = boxed(&[-0.2, -0.2], &[0.2, 0.2]);
    let global = estimate(&sys, &net, sys.spec(), &p0, sys.parameter_box(), 400, 4, 3).unwrap();
    let parts = partition_and_estimate(&sys, &net, sys.spec(), &p0, sys.parameter_box(), &[3, 3, 3], 400, 4, 3).unwrap();
    assert_eq!(parts.cells.len(), 27);
    for c in &parts.cells {
        assert!(c.dominated_by(&global));
    }
    assert_eq!(parts.envelope().e_final, global.e_final);
}

#[test]
fn buffered_box_obstacle_moves_each_face_by_its_bound() {
    let spec = TrajectorySpec::new(2, 0, 0.3, 0.1).unwrap();
    let k = boxed(&[0.0], &[1.0]);
    let obs = boxed(&[3.0, -1.0], &[4.0, 2.0]);
    let sc = Scenario::new(
        boxed(&[-1.0, -1.0], &[1.0, 1.0]),
        k.clone(),
        spec.clone(),
        boxed(&[0.0, 0.0], &[2.0, 2.0]).as_hpolytope(),
        vec![obs.as_hpolytope()],
        0.0,
    )
    .unwrap();
    let mut b = flat_bounds(&spec, 0.0, 0.0, &k);
    b.e_interval = vec![vec![0.1, 0.7], vec![0.25, 0.0], vec![1.5, 0.3]];
    let prep = prepare(&sc, &b).unwrap();
    for (t, row) in b.e_interval.iter().enumerate() {
        let o = &prep.obstacles[t][0];
        for i in 0..2 {
            let mut dir = [0.0; 2];
            dir[i] = 1.0;
            assert!((o.support(&dir).unwrap() - (obs.upper()[i] + row[i])).abs() <= 1e-9);
            dir[i] = -1.0;
            assert!((o.support(&dir).unwrap() - (-obs.lower()[i] + row[i])).abs() <= 1e-9);
        }
    }
}

#[test]
fn reach_set_samples_land_in_the_shrunk_goal() {
    let spec = TrajectorySpec::new(2, 0, 1.0, 0.1).unwrap();
    let k = boxed(&[-1.0], &[1.0]);
    let net = ReluNetwork::random(&[1, 6, 6, spec.output_dim()], 13).unwrap();
    let p0 = boxed(&[-0.5, -0.5], &[0.5, 0.5]);
    let centre = predict(&net, &spec, &[0.0, 0.0], &[0.0]).unwrap().final_state();
    let goal = boxed(&[centre[0] - 0.6, centre[1] - 0.6], &[centre[0] + 0.6, centre[1] + 0.6]);
    let sc = Scenario::new(p0.clone(), k.clone(), spec.clone(), goal.as_hpolytope(), vec![], 0.0).unwrap();
    let prep = prepare(&sc, &flat_bounds(&spec, 0.2, 0.0, &k)).unwrap();
    let shrunk = prep.goal.unwrap();
    let regions = enumerate_all(&net, &k, &[0.0], DEFAULT_REGION_CAP, |_| false).unwrap().regions;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut nonempty = 0;
    for r in &regions {
        let sliced = slice(&r.c, &r.d, &spec, r.index).unwrap();
        let omega = compute_brs(&r.region, &sliced, &p0, &shrunk).unwrap().omega;
        if omega.is_empty().unwrap() {
            continue;
        }
        nonempty += 1;
        let bbox = omega.bounding_box().unwrap();
        let mut got = 0;
        while got < 1000 {
            let z = bbox.sample_with(&mut rng);
            if omega.max_violation(&z) > -1e-9 {
                continue;
            }
            got += 1;
            let fin = predict(&net, &spec, &z[..2], &z[2..]).unwrap().final_state();
            assert!(shrunk.max_violation(&fin) <= 1e-9, "region {}", r.index);
        }
    }
    assert!(nonempty > 0);
}

/// `p̂(jΔt) = jΔt·(k, k/2)` on `k ∈ [0.5, 2]`, one linear region.
fn straight_line(spec: &TrajectorySpec) -> ReluNetwork {
    let rows: Vec<Vec<f64>> = (1..=spec.steps())
        .flat_map(|j| {
            let t = spec.time(j);
            [vec![t], vec![0.5 * t]]
        })
        .collect();
    let bias: Vec<f64> = (1..=spec.steps()).flat_map(|j| [-10.0 * spec.time(j), -5.0 * spec.time(j)]).collect();
    let hidden = Layer { weight: Matrix::identity(1), bias: vec![10.0] };
    let out = Layer { weight: Matrix::from_rows(&rows, 1).unwrap(), bias };
    ReluNetwork::new(vec![hidden, out]).unwrap()
}

fn line_scenario(spec: &TrajectorySpec) -> Scenario {
    Scenario::new(
        boxed(&[-1.0, -1.0], &[1.0, 1.0]),
        boxed(&[0.5], &[2.0]),
        spec.clone(),
        boxed(&[1.0, -2.0], &[4.0, 3.0]).as_hpolytope(),
        vec![boxed(&[0.8, 0.1], &[1.1, 0.5]).as_hpolytope()],
        0.0,
    )
    .unwrap()
}

/// First index `t` whose dense model path over `[t, t+Δt]` touches `obstacles[t]`.
fn model_collides(net: &ReluNetwork, spec: &TrajectorySpec, p0: &[f64], k: &[f64], obstacles: &[Vec<HPolytope>]) -> bool {
    let pred = predict(net, spec, p0, k).unwrap();
    (0..spec.steps()).any(|j| {
        (0..=100).any(|s| {
            let t = spec.time(j) + spec.dt * s as f64 / 100.0;
            let p = interpolate(&pred.positions[j], &pred.positions[j + 1], spec.time(j), spec.dt, t.min(spec.t_f)).unwrap();
            obstacles[j].iter().any(|o| o.max_violation(&p) <= 0.0)
        })
    })
}

#[test]
fn straight_line_avoid_set_has_no_false_negatives() {
    let spec = TrajectorySpec::new(2, 0, 1.0, 0.1).unwrap();
    let net = straight_line(&spec);
    let sc = line_scenario(&spec);
    let prep = prepare(&sc, &flat_bounds(&spec, 0.0, 0.0, &sc.k)).unwrap();
    let regions = enumerate_all(&net, &sc.k, &[1.0], DEFAULT_REGION_CAP, |_| false).unwrap().regions;
    assert_eq!(regions.len(), 1);
    let r = &regions[0];
    let sliced = slice(&r.c, &r.d, &spec, 0).unwrap();
    let reach = compute_brs(&r.region, &sliced, &sc.p0, prep.goal.as_ref().unwrap()).unwrap();
    let avoid = compute_bas(&r.region, &sliced, &reach, &prep.obstacles).unwrap();
    assert!(!avoid.pieces.is_empty());
    let (mut colliding, mut flagged_clear, mut clear) = (0, 0, 0);
    for kk in [0.6, 1.0, 1.4, 1.9] {
        for i in 0..200 {
            for j in 0..200 {
                let p0 = [-1.0 + 2.0 * (i as f64 + 0.5) / 200.0, -1.0 + 2.0 * (j as f64 + 0.5) / 200.0];
                let z = [p0[0], p0[1], kk];
                if reach.omega.max_violation(&z) > 0.0 {
                    continue;
                }
                let hit = avoid.hit(&p0).unwrap().is_some();
                if model_collides(&net, &spec, &p0, &[kk], &prep.obstacles) {
                    colliding += 1;
                    assert!(hit, "missed collision at {p0:?}, k = {kk}");
                } else {
                    clear += 1;
                    flagged_clear += hit as usize;
                }
            }
        }
    }
    assert!(colliding > 0 && clear > 0);
    eprintln!("colliding {colliding}, clear {clear}, false positive rate {:.3}", flagged_clear as f64 / clear as f64);
}

#[test]
fn accepted_samples_survive_dense_model_replay() {
    let spec = TrajectorySpec::new(2, 0, 1.0, 0.1).unwrap();
    let net = straight_line(&spec);
    let sc = line_scenario(&spec);
    let b = flat_bounds(&spec, 0.1, 0.05, &sc.k);
    let prep = prepare(&sc, &b).unwrap();
    let pb = PartitionedBounds { domain: sc.k.clone(), splits: vec![1], cells: vec![b] };
    let rep = solve(&sc, &net, &pb, Budget::default(), 4).unwrap();
    assert_eq!(rep.outcome, Outcome::Found);
    let goal = prep.goal.unwrap();
    for s in &rep.samples {
        assert!(!model_collides(&net, &spec, &s.p0, &s.k, &prep.obstacles));
        let fin = predict(&net, &spec, &s.p0, &s.k).unwrap().final_state();
        assert!(goal.max_violation(&fin) <= 1e-9);
    }
    // The error boxes used above are the ones the solver saw.
    let (e_final, _) = error_sets::<f64>(&pb.cells[0]);
    assert_eq!(e_final.upper(), &[0.1, 0.1]);
}
