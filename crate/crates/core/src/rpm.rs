//! Exact piecewise-affine form of a ReLU network over a box, enumerated
//! region by region by walking across facets.

use std::collections::{HashSet, VecDeque};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hpoly::{HPolytope, Hyperrectangle};
use crate::linalg::Matrix;
use crate::lp::{self, LpStatus};
use crate::relunet::{ActivationPattern, ReluNetwork};
use crate::scalar::{dot, norm2, Scalar, EPS_FEAS};

/// First facet push distance.
pub const STEP_INITIAL: f64 = 1e-6;
/// Largest facet push tried before giving up on a clean crossing.
pub const STEP_MAX: f64 = 1e-3;
/// Regions with a smaller inscribed radius are treated as measure zero.
pub const MIN_RADIUS: f64 = 1e-8;
pub const DEFAULT_REGION_CAP: usize = 100_000;

/// One linear piece: on `region`, the network equals `x ↦ C x + d`.
#[derive(Clone, Debug)]
pub struct AffineRegion<T> {
    pub region: HPolytope<T>,
    pub c: Matrix<T>,
    pub d: Vec<T>,
    pub pattern: ActivationPattern,
    /// Discovery order, starting at 0 for the seed region.
    pub index: usize,
    /// Leading rows of `region` that are the domain box.
    domain_rows: usize,
    /// `(layer, neuron)` for each row after the domain rows.
    neurons: Vec<(usize, usize)>,
}

impl<T: Scalar> AffineRegion<T> {
    pub fn evaluate(&self, x: &[T]) -> Vec<T> {
        self.c.matvec(x).iter().zip(&self.d).map(|(&a, &b)| a + b).collect()
    }

    /// Number of leading constraint rows that come from the domain box.
    pub fn domain_rows(&self) -> usize {
        self.domain_rows
    }

    /// Hidden neuron `(layer, index)` behind constraint row `row`, if any.
    pub fn neuron_of_row(&self, row: usize) -> Option<(usize, usize)> {
        row.checked_sub(self.domain_rows).and_then(|k| self.neurons.get(k).copied())
    }

    pub fn to_record(&self) -> RegionRecord<T> {
        RegionRecord {
            pattern: self.pattern.clone(),
            a: self.region.a().clone(),
            b: self.region.b().to_vec(),
            c: self.c.clone(),
            d: self.d.clone(),
        }
    }
}

/// JSON form of a region for dumps.
#[derive(Clone, Debug, Serialize)]
#[serde(bound = "T: Scalar")]
pub struct RegionRecord<T> {
    pub pattern: ActivationPattern,
    #[serde(rename = "A")]
    pub a: Matrix<T>,
    pub b: Vec<T>,
    #[serde(rename = "C")]
    pub c: Matrix<T>,
    pub d: Vec<T>,
}

/// The activation cell of the network containing `seed`, clipped to `domain`.
pub fn region_at<T: Scalar>(net: &ReluNetwork<T>, seed: &[T], domain: &Hyperrectangle<T>) -> Result<AffineRegion<T>> {
    Error::check_dim("seed", net.input_dim(), seed.len())?;
    Error::check_dim("domain", net.input_dim(), domain.dim())?;
    if !domain.contains(seed, T::lit(EPS_FEAS)) {
        return Err(Error::OutsideDomain);
    }
    let pattern = net.activation_pattern(seed)?;
    region_for_pattern(net, pattern, domain, 0)
}

fn region_for_pattern<T: Scalar>(
    net: &ReluNetwork<T>,
    pattern: ActivationPattern,
    domain: &Hyperrectangle<T>,
    index: usize,
) -> Result<AffineRegion<T>> {
    let (pre, (c, d)) = net.masked_affine_maps(&pattern)?;
    let dom = domain.as_hpolytope();
    let n = net.input_dim();
    let mut rows = dom.a().to_rows();
    let mut b = dom.b().to_vec();
    let mut neurons = Vec::new();
    for (layer, ((g, h), mask)) in pre.iter().zip(&pattern).enumerate() {
        for (i, &on) in mask.iter().enumerate() {
            // Active: g x + h >= 0. Inactive: g x + h <= 0.
            let s = if on { -T::one() } else { T::one() };
            rows.push(g.row(i).iter().map(|&v| s * v).collect());
            b.push(-s * h[i]);
            neurons.push((layer, i));
        }
    }
    let region = HPolytope::new(Matrix::from_rows(&rows, n)?, b)?;
    Ok(AffineRegion { region, c, d, pattern, index, domain_rows: dom.num_constraints(), neurons })
}

/// Neuron rows whose removal would enlarge the region, i.e. the facets shared
/// with neighboring regions. Domain faces are never reported.
pub fn essential_constraints<T: Scalar>(r: &AffineRegion<T>) -> Result<Vec<usize>> {
    let a = r.region.a();
    let b = r.region.b();
    if r.region.is_empty()? {
        return Err(Error::EmptySet);
    }
    let rows: Vec<usize> = (r.domain_rows..a.nrows()).collect();
    let verdicts: Vec<Result<bool>> = rows.par_iter().map(|&k| row_is_essential(a, b, k)).collect();
    let mut out = Vec::new();
    for (k, v) in rows.into_iter().zip(verdicts) {
        if v? {
            out.push(k);
        }
    }
    Ok(out)
}

fn row_is_essential<T: Scalar>(a: &Matrix<T>, b: &[T], k: usize) -> Result<bool> {
    let row = a.row(k);
    let nrm = norm2(row);
    if nrm <= T::tol(1e-12) {
        return Ok(false);
    }
    // Same system with row k relaxed by one unit of its own norm.
    let mut bb = b.to_vec();
    bb[k] += nrm;
    let out = lp::maximize(a, &bb, row)?;
    match out.status {
        LpStatus::Optimal => Ok((out.value - b[k]) / nrm > T::lit(EPS_FEAS)),
        LpStatus::Unbounded => Err(Error::Solver("relaxed row LP unbounded inside a bounded domain".into())),
        LpStatus::Infeasible => Ok(false),
    }
}

/// Center of the largest ball inside the facet on row `k` (a ball within the
/// facet hyperplane, so row `k` itself contributes no radius term).
fn facet_center<T: Scalar>(poly: &HPolytope<T>, k: usize) -> Result<Option<(Vec<T>, T)>> {
    let a = poly.a();
    let b = poly.b();
    let n = a.ncols();
    let ak = a.row(k);
    let nk = norm2(ak);
    let u: Vec<T> = ak.iter().map(|&v| v / nk).collect();
    let mut rows = Vec::with_capacity(a.nrows() + 2);
    let mut rhs = Vec::with_capacity(a.nrows() + 2);
    for (j, (r, &bj)) in a.rows_iter().zip(b).enumerate() {
        let mut row = r.to_vec();
        if j == k {
            row.push(T::zero());
        } else {
            let along = dot(r, &u);
            let tangential: Vec<T> = r.iter().zip(&u).map(|(&x, &y)| x - along * y).collect();
            row.push(norm2(&tangential));
        }
        rows.push(row);
        rhs.push(bj);
    }
    let mut eq: Vec<T> = ak.iter().map(|&v| -v).collect();
    eq.push(T::zero());
    rows.push(eq);
    rhs.push(-b[k]);
    let mut cap = vec![T::zero(); n + 1];
    cap[n] = T::one();
    rows.push(cap.clone());
    rhs.push(T::one());
    let out = lp::maximize(&Matrix::from_rows(&rows, n + 1)?, &rhs, &cap)?;
    match out.status {
        LpStatus::Optimal => {
            let mut x = out.witness.expect("optimal LP carries a witness");
            let rad = x.pop().expect("radius component");
            Ok((rad > T::zero()).then_some((x, rad)))
        }
        _ => Ok(None),
    }
}

/// Outcome of trying to cross one facet.
#[derive(Clone, Debug, PartialEq)]
pub enum Crossing<T> {
    /// Landing point just across the facet and its activation pattern.
    Across { point: Vec<T>, pattern: ActivationPattern },
    /// The push left the domain or the facet is degenerate.
    NoNeighbor,
}

/// Pushes the facet center of row `row` outward and reports where it lands.
/// Starts at [`STEP_INITIAL`] and grows ×10 up to [`STEP_MAX`] until the
/// landing pattern differs from `r` in the row's own neuron.
pub fn cross_facet<T: Scalar>(
    net: &ReluNetwork<T>,
    domain: &Hyperrectangle<T>,
    r: &AffineRegion<T>,
    row: usize,
) -> Result<Crossing<T>> {
    let Some((layer, neuron)) = r.neuron_of_row(row) else {
        return Ok(Crossing::NoNeighbor);
    };
    let Some((center, _)) = facet_center(&r.region, row)? else {
        return Ok(Crossing::NoNeighbor);
    };
    let a = r.region.a().row(row);
    let nrm = norm2(a);
    let mut step = STEP_INITIAL;
    let mut fallback = None;
    while step <= STEP_MAX * (1.0 + 1e-9) {
        let s = T::lit(step);
        let p: Vec<T> = center.iter().zip(a).map(|(&c, &ai)| c + s * ai / nrm).collect();
        if !domain.contains(&p, T::zero()) {
            return Ok(Crossing::NoNeighbor);
        }
        let pattern = net.activation_pattern(&p)?;
        if pattern[layer][neuron] != r.pattern[layer][neuron] {
            return Ok(Crossing::Across { point: p, pattern });
        }
        if fallback.is_none() && pattern != r.pattern {
            fallback = Some(Crossing::Across { point: p, pattern });
        }
        step *= 10.0;
    }
    Ok(fallback.unwrap_or(Crossing::NoNeighbor))
}

/// The region across essential row `row`, or `None` when there is none.
pub fn neighbor<T: Scalar>(
    net: &ReluNetwork<T>,
    domain: &Hyperrectangle<T>,
    r: &AffineRegion<T>,
    row: usize,
) -> Result<Option<AffineRegion<T>>> {
    match cross_facet(net, domain, r, row)? {
        Crossing::Across { pattern, .. } => Ok(Some(region_for_pattern(net, pattern, domain, r.index + 1)?)),
        Crossing::NoNeighbor => Ok(None),
    }
}

/// Breadth-first walk over the regions of `net` on `domain`, in discovery order.
pub struct RegionWalker<'a, T> {
    net: &'a ReluNetwork<T>,
    domain: Hyperrectangle<T>,
    discovered: HashSet<ActivationPattern>,
    queue: VecDeque<ActivationPattern>,
    cap: usize,
    emitted: usize,
    incomplete: bool,
}

impl<'a, T: Scalar> RegionWalker<'a, T> {
    pub fn new(net: &'a ReluNetwork<T>, domain: &Hyperrectangle<T>, seed: &[T]) -> Result<Self> {
        let first = region_at(net, seed, domain)?;
        let mut discovered = HashSet::new();
        discovered.insert(first.pattern.clone());
        Ok(Self {
            net,
            domain: domain.clone(),
            discovered,
            queue: VecDeque::from([first.pattern]),
            cap: DEFAULT_REGION_CAP,
            emitted: 0,
            incomplete: false,
        })
    }

    pub fn with_cap(mut self, cap: usize) -> Self {
        self.cap = cap;
        self
    }

    /// True once the cap stopped the walk with regions still pending.
    pub fn incomplete(&self) -> bool {
        self.incomplete
    }

    /// Next full-dimensional region, with its neighbors queued.
    pub fn next_region(&mut self) -> Result<Option<AffineRegion<T>>> {
        while let Some(pattern) = self.queue.pop_front() {
            if self.emitted >= self.cap {
                self.incomplete = true;
                self.queue.clear();
                return Ok(None);
            }
            let region = region_for_pattern(self.net, pattern, &self.domain, self.emitted)?;
            match region.region.chebyshev_center(T::one())? {
                Some((_, rad)) if rad >= T::lit(MIN_RADIUS) => {}
                _ => continue,
            }
            let rows = essential_constraints(&region)?;
            let crossings: Vec<Result<Crossing<T>>> =
                rows.par_iter().map(|&k| cross_facet(self.net, &self.domain, &region, k)).collect();
            for c in crossings {
                if let Crossing::Across { pattern, .. } = c? {
                    if self.discovered.insert(pattern.clone()) {
                        self.queue.push_back(pattern);
                    }
                }
            }
            self.emitted += 1;
            return Ok(Some(region));
        }
        Ok(None)
    }
}

/// Result of [`enumerate_all`].
#[derive(Clone, Debug)]
pub struct Enumeration<T> {
    pub regions: Vec<AffineRegion<T>>,
    /// Set when the region cap was hit.
    pub incomplete: bool,
    /// Set when the stop predicate ended the walk.
    pub stopped: bool,
}

/// All regions reachable from `seed`, unless `stop` returns true for some
/// region (that region is included) or `cap` regions have been produced.
pub fn enumerate_all<T: Scalar>(
    net: &ReluNetwork<T>,
    domain: &Hyperrectangle<T>,
    seed: &[T],
    cap: usize,
    mut stop: impl FnMut(&AffineRegion<T>) -> bool,
) -> Result<Enumeration<T>> {
    let mut walker = RegionWalker::new(net, domain, seed)?.with_cap(cap);
    let mut regions = Vec::new();
    while let Some(r) = walker.next_region()? {
        let halt = stop(&r);
        regions.push(r);
        if halt {
            return Ok(Enumeration { regions, incomplete: false, stopped: true });
        }
    }
    Ok(Enumeration { regions, incomplete: walker.incomplete(), stopped: false })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::relunet::Layer;

    fn relu1() -> ReluNetwork<f64> {
        let hidden = Layer { weight: Matrix::from_rows(&[vec![1.0]], 1).unwrap(), bias: vec![0.0] };
        let out = Layer { weight: Matrix::from_rows(&[vec![1.0]], 1).unwrap(), bias: vec![0.0] };
        ReluNetwork::new(vec![hidden, out]).unwrap()
    }

    fn line() -> Hyperrectangle<f64> {
        Hyperrectangle::new(vec![-2.0], vec![2.0]).unwrap()
    }

    #[test]
    fn one_dimensional_regions() {
        let net = relu1();
        let pos = region_at(&net, &[1.0], &line()).unwrap();
        let bb = pos.region.bounding_box().unwrap();
        assert!((bb.lower()[0] - 0.0).abs() < 1e-9 && (bb.upper()[0] - 2.0).abs() < 1e-9);
        assert_eq!(pos.c[(0, 0)], 1.0);
        assert_eq!(pos.d, vec![0.0]);
        let neg = region_at(&net, &[-1.0], &line()).unwrap();
        let bb = neg.region.bounding_box().unwrap();
        assert!((bb.lower()[0] + 2.0).abs() < 1e-9 && bb.upper()[0].abs() < 1e-9);
        assert_eq!(neg.c[(0, 0)], 0.0);
    }

    #[test]
    fn seed_outside_domain() {
        assert!(matches!(region_at(&relu1(), &[3.0], &line()), Err(Error::OutsideDomain)));
    }

    #[test]
    fn essential_rows_and_neighbor() {
        let net = relu1();
        let pos = region_at(&net, &[1.0], &line()).unwrap();
        let ess = essential_constraints(&pos).unwrap();
        assert_eq!(ess, vec![pos.domain_rows()]);
        let nb = neighbor(&net, &line(), &pos, ess[0]).unwrap().unwrap();
        assert_eq!(nb.pattern, vec![vec![false]]);
        // Domain faces have no neighbor.
        assert!(neighbor(&net, &line(), &pos, 0).unwrap().is_none());
    }

    #[test]
    fn hyperplane_outside_domain_is_not_essential() {
        let net = relu1();
        let dom = Hyperrectangle::new(vec![1.0], vec![2.0]).unwrap();
        let r = region_at(&net, &[1.5], &dom).unwrap();
        assert!(essential_constraints(&r).unwrap().is_empty());
        let all = enumerate_all(&net, &dom, &[1.5], 10, |_| false).unwrap();
        assert_eq!(all.regions.len(), 1);
    }

    #[test]
    fn relu_has_two_regions() {
        let all = enumerate_all(&relu1(), &line(), &[0.5], 10, |_| false).unwrap();
        assert_eq!(all.regions.len(), 2);
        assert!(!all.incomplete && !all.stopped);
        assert_eq!(all.regions[1].index, 1);
    }

    #[test]
    fn cap_and_stop() {
        let all = enumerate_all(&relu1(), &line(), &[0.5], 1, |_| false).unwrap();
        assert_eq!(all.regions.len(), 1);
        assert!(all.incomplete);
        let all = enumerate_all(&relu1(), &line(), &[0.5], 10, |_| true).unwrap();
        assert_eq!(all.regions.len(), 1);
        assert!(all.stopped);
    }

    #[test]
    fn region_maps_match_forward() {
        let net = ReluNetwork::<f64>::random(&[2, 4, 4, 1], 3).unwrap();
        let dom = Hyperrectangle::new(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
        let all = enumerate_all(&net, &dom, &[0.0, 0.0], 1000, |_| false).unwrap();
        assert!(all.regions.len() > 1);
        for r in &all.regions {
            let (x, _) = r.region.chebyshev_center(1.0).unwrap().unwrap();
            let y = net.forward(&x).unwrap();
            assert!((y[0] - r.evaluate(&x)[0]).abs() < 1e-9);
        }
    }
}
