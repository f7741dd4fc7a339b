mod common;

use std::collections::HashSet;

use common::oracle::*;
use neuralparc::relunet::{train, ActivationPattern, TrainConfig, TrainingSet};
use neuralparc::rpm::{enumerate_all, essential_constraints, DEFAULT_REGION_CAP};
use neuralparc::trajmodel::{predict, slice, TrajectorySpec};
use neuralparc::{AffineRegion, Hyperrectangle, ReluNetwork};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn square() -> Hyperrectangle {
    Hyperrectangle::new(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap()
}

fn enumerate(net: &ReluNetwork, domain: &Hyperrectangle) -> Vec<AffineRegion> {
    let e = enumerate_all(net, domain, &domain.center(), DEFAULT_REGION_CAP, |_| false).unwrap();
    assert!(!e.incomplete);
    e.regions
}

#[test]
fn forward_equals_hand_composed_masked_chain() {
    let net = ReluNetwork::random(&[3, 5, 4, 2], 17).unwrap();
    let x = [0.3, -0.7, 0.2];
    let mut h: Vec<f64> = x.to_vec();
    let mut mask: ActivationPattern = Vec::new();
    let layers = net.layers();
    for (i, l) in layers.iter().enumerate() {
        let z: Vec<f64> = (0..l.weight.nrows())
            .map(|r| l.weight.row(r).iter().zip(&h).map(|(a, b)| a * b).sum::<f64>() + l.bias[r])
            .collect();
        if i + 1 == layers.len() {
            h = z;
        } else {
            mask.push(z.iter().map(|&v| v >= 0.0).collect());
            h = z.iter().map(|&v| v.max(0.0)).collect();
        }
    }
    assert_eq!(net.activation_pattern(&x).unwrap(), mask);
    // The masked maps compose to the same affine function at x.
    let (_, (c, d)) = net.masked_affine_maps(&mask).unwrap();
    let y: Vec<f64> = c.matvec(&x).iter().zip(&d).map(|(a, b)| a + b).collect();
    for (a, b) in y.iter().zip(&h) {
        assert!((a - b).abs() < 1e-12);
    }
    for (a, b) in net.forward(&x).unwrap().iter().zip(&h) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn fits_identity() {
    let xs: Vec<Vec<f64>> = (0..100).map(|i| vec![-1.0 + 2.0 * i as f64 / 99.0]).collect();
    let data = TrainingSet::new(xs.clone(), xs).unwrap();
    let report = train(&data, &TrainConfig::new(vec![8], 2000, 1)).unwrap();
    assert!(report.final_mse < 1e-3, "mse {}", report.final_mse);
}

#[test]
fn region_map_matches_finite_differences() {
    let net = ReluNetwork::random(&[2, 2, 1], 5).unwrap();
    let h = 1e-6;
    for r in enumerate(&net, &square()) {
        let Some((x, rad)) = r.region.chebyshev_center(1.0).unwrap() else { continue };
        if rad < 1e-3 {
            continue;
        }
        for j in 0..2 {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += h;
            xm[j] -= h;
            let fd = (net.forward(&xp).unwrap()[0] - net.forward(&xm).unwrap()[0]) / (2.0 * h);
            assert!((fd - r.c.row(0)[j]).abs() < 1e-5);
        }
    }
}

#[test]
fn dropping_redundant_rows_keeps_the_region() {
    let net = ReluNetwork::random(&[2, 6, 6, 1], 9).unwrap();
    let pts = square().sample_uniform(10_000, 9);
    for r in enumerate(&net, &square()).iter().take(40) {
        let (a, b) = rows_of(&r.region);
        let mut keep: Vec<usize> = (0..r.domain_rows()).collect();
        keep.extend(essential_constraints(r).unwrap());
        let ka: Vec<Vec<f64>> = keep.iter().map(|&i| a[i].clone()).collect();
        let kb: Vec<f64> = keep.iter().map(|&i| b[i]).collect();
        for x in &pts {
            let full = violation(&a, &b, x);
            if full.abs() > 1e-6 {
                assert_eq!(violation(&ka, &kb, x) <= 0.0, full <= 0.0);
            }
        }
    }
}

#[test]
fn maps_agree_at_facet_midpoints() {
    let net = ReluNetwork::random(&[2, 5, 5, 2], 21).unwrap();
    let regions = enumerate(&net, &square());
    let mut checked = 0;
    for r in &regions {
        let (a, b) = rows_of(&r.region);
        let verts = vertices(&a, &b);
        for k in essential_constraints(r).unwrap() {
            let on: Vec<&Vec<f64>> = verts
                .iter()
                .filter(|v| (a[k].iter().zip(v.iter()).map(|(p, q)| p * q).sum::<f64>() - b[k]).abs() < 1e-9)
                .collect();
            if on.len() < 2 {
                continue;
            }
            let mid: Vec<f64> = (0..2).map(|i| on.iter().map(|v| v[i]).sum::<f64>() / on.len() as f64).collect();
            let truth = net.forward(&mid).unwrap();
            let touching: Vec<&AffineRegion> = regions.iter().filter(|s| s.region.max_violation(&mid) <= 1e-7).collect();
            assert!(touching.len() >= 2, "facet midpoint without a neighbor");
            for s in touching {
                for (p, q) in s.evaluate(&mid).iter().zip(&truth) {
                    assert!((p - q).abs() <= 1e-6);
                }
            }
            checked += 1;
        }
    }
    assert!(checked > 0);
}

fn grid_patterns(net: &ReluNetwork, side: usize) -> HashSet<ActivationPattern> {
    let mut seen = HashSet::new();
    for i in 0..side {
        for j in 0..side {
            let x = [-1.0 + 2.0 * (i as f64 + 0.5) / side as f64, -1.0 + 2.0 * (j as f64 + 0.5) / side as f64];
            seen.insert(net.activation_pattern(&x).unwrap());
        }
    }
    seen
}

#[test]
fn region_count_dominates_dense_grid() {
    let net = ReluNetwork::random(&[2, 4, 4, 1], 3).unwrap();
    let regions = enumerate(&net, &square());
    let found: HashSet<ActivationPattern> = regions.iter().map(|r| r.pattern.clone()).collect();
    let grid = grid_patterns(&net, 400);
    assert!(regions.len() >= grid.len());
    assert!(grid.is_subset(&found));
}

#[test]
fn sliced_maps_reproduce_predictions() {
    let spec = TrajectorySpec::new(2, 1, 0.5, 0.1).unwrap();
    let net = ReluNetwork::random(&[2, 6, 6, spec.output_dim()], 4).unwrap();
    let domain = square();
    let mut g = ChaCha8Rng::seed_from_u64(4);
    for r in enumerate(&net, &domain) {
        let sliced = slice(&r.c, &r.d, &spec, r.index).unwrap();
        for _ in 0..20 {
            let k = domain.sample_with(&mut g);
            if r.region.max_violation(&k) > 0.0 {
                continue;
            }
            let p0 = [g.gen_range(-2.0..2.0), g.gen_range(-2.0..2.0)];
            let z: Vec<f64> = p0.iter().chain(&k).copied().collect();
            let pred = predict(&net, &spec, &p0, &k).unwrap();
            for j in 0..=spec.steps() {
                for (a, b) in sliced.position(j, &z).iter().zip(&pred.positions[j]) {
                    assert!((a - b).abs() <= 1e-9);
                }
            }
            let (cf, df) = sliced.final_map().unwrap();
            let fin: Vec<f64> = cf.matvec(&z).iter().zip(&df).map(|(a, b)| a + b).collect();
            for (a, b) in fin.iter().zip(pred.final_state()) {
                assert!((a - b).abs() <= 1e-9);
            }
        }
    }
}
