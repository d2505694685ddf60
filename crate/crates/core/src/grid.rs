//! Regular lattice on the probability simplex.
//!
//! Cells are the points `a / n` with `a` a nonnegative integer vector summing
//! to `n`. They are stored in lexicographic order of `(a_1, .., a_{k-1})` and
//! indexed by a closed-form rank, so lookups never touch floating point.
//!
//! Off-lattice queries are resolved on the canonical triangulation of the
//! lattice (for `k = 3` the familiar "up" and "down" triangles). In cumulative
//! coordinates `x_j = n * (p_j + .. + p_k)` this is the Freudenthal
//! subdivision of the unit cube: sort the fractional parts of `x` in
//! decreasing order and walk from the floor corner along that order.

use thiserror::Error;

/// Drift tolerated before a query is rejected as off-simplex.
pub const SIMPLEX_SLACK: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("simplex needs at least 2 vertices, got k = {0}")]
    TooFewLocations(usize),
    #[error("grid resolution must be at least 1, got n = {0}")]
    BadResolution(usize),
    #[error("belief has {got} entries, grid expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("belief entry {index} = {value} is negative")]
    NegativeEntry { index: usize, value: f64 },
    #[error("belief entries sum to {0}, not 1")]
    NotNormalized(f64),
    #[error("belief entry {index} is not finite")]
    NonFinite { index: usize },
    #[error("permutation {0:?} is not a permutation of 0..k")]
    BadPermutation(Vec<usize>),
    #[error("cell index {index} out of range for {len} cells")]
    CellOutOfRange { index: usize, len: usize },
    #[error("value field has {got} entries, grid has {expected} cells")]
    ValueLength { expected: usize, got: usize },
}

/// A posterior over `k` candidate locations.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefState {
    probs: Vec<f64>,
}

impl BeliefState {
    /// Validates and renormalizes. Entries down to `-1e-9` are clamped to zero
    /// and a sum within `1e-9` of one is rescaled; anything worse is rejected.
    pub fn new(probs: Vec<f64>) -> Result<Self, GridError> {
        if probs.len() < 2 {
            return Err(GridError::TooFewLocations(probs.len()));
        }
        let mut probs = probs;
        for (index, v) in probs.iter_mut().enumerate() {
            if !v.is_finite() {
                return Err(GridError::NonFinite { index });
            }
            if *v < -SIMPLEX_SLACK {
                return Err(GridError::NegativeEntry { index, value: *v });
            }
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_SLACK {
            return Err(GridError::NotNormalized(sum));
        }
        if sum != 1.0 {
            for v in probs.iter_mut() {
                *v /= sum;
            }
        }
        Ok(Self { probs })
    }

    pub fn uniform(k: usize) -> Self {
        Self { probs: vec![1.0 / k as f64; k] }
    }

    pub fn vertex(k: usize, i: usize) -> Self {
        let mut probs = vec![0.0; k];
        probs[i] = 1.0;
        Self { probs }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn k(&self) -> usize {
        self.probs.len()
    }

    /// Most likely location, lowest index on ties.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.probs.iter().enumerate().skip(1) {
            if v > self.probs[best] {
                best = i;
            }
        }
        best
    }

    pub fn max(&self) -> f64 {
        self.probs[self.argmax()]
    }

    /// Relabels locations: entry `i` moves to slot `sigma[i]`.
    pub fn permuted(&self, sigma: &[usize]) -> Self {
        let mut probs = vec![0.0; self.probs.len()];
        for (i, &v) in self.probs.iter().enumerate() {
            probs[sigma[i]] = v;
        }
        Self { probs }
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.probs
    }
}

/// Convex combination of lattice cells reproducing a query point.
#[derive(Debug, Clone, PartialEq)]
pub struct BarycentricWeights {
    pub indices: Vec<usize>,
    pub weights: Vec<f64>,
}

impl BarycentricWeights {
    pub fn apply(&self, values: &[f64]) -> f64 {
        self.indices
            .iter()
            .zip(&self.weights)
            .map(|(&i, &w)| w * values[i])
            .sum()
    }
}

/// The lattice `{a / n : a ∈ ℕ^k, Σa = n}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimplexGrid {
    k: usize,
    n: usize,
    coords: Vec<u32>,
}

fn binomial(n: u64, r: u64) -> u64 {
    if r > n {
        return 0;
    }
    let r = r.min(n - r);
    let mut acc = 1u64;
    for i in 0..r {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

/// Number of lattice points, `C(n + k - 1, k - 1)`.
pub fn cell_count(k: usize, n: usize) -> usize {
    binomial((n + k - 1) as u64, (k - 1) as u64) as usize
}

impl SimplexGrid {
    /// Enumerates every lattice point in canonical order.
    pub fn new(k: usize, n: usize) -> Result<Self, GridError> {
        if k < 2 {
            return Err(GridError::TooFewLocations(k));
        }
        if n < 1 {
            return Err(GridError::BadResolution(n));
        }
        let len = cell_count(k, n);
        let mut coords = Vec::with_capacity(len * k);
        let mut current = vec![0u32; k];
        fill(&mut coords, &mut current, 0, n as u32);
        debug_assert_eq!(coords.len(), len * k);
        Ok(Self { k, n, coords })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.k
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    /// Integer coordinates of a cell; they sum to `n`.
    pub fn coords(&self, index: usize) -> &[u32] {
        &self.coords[index * self.k..(index + 1) * self.k]
    }

    pub fn point(&self, index: usize) -> Vec<f64> {
        let n = self.n as f64;
        self.coords(index).iter().map(|&a| a as f64 / n).collect()
    }

    pub fn belief(&self, index: usize) -> BeliefState {
        BeliefState { probs: self.point(index) }
    }

    /// Rank of a lattice point, or `None` if `a` is not on this lattice.
    pub fn index_of(&self, a: &[u32]) -> Option<usize> {
        if a.len() != self.k || a.iter().map(|&v| v as u64).sum::<u64>() != self.n as u64 {
            return None;
        }
        Some(self.rank(a))
    }

    fn rank(&self, a: &[u32]) -> usize {
        // Σ_i #{compositions with the same prefix and a smaller i-th part},
        // summed in closed form with the hockey-stick identity.
        let k = self.k as u64;
        let mut rem = self.n as u64;
        let mut r = 0u64;
        for (i, &ai) in a[..self.k - 1].iter().enumerate() {
            let m = k - i as u64 - 2;
            let ai = ai as u64;
            r += binomial(rem + m + 1, m + 1) - binomial(rem - ai + m + 1, m + 1);
            rem -= ai;
        }
        r as usize
    }

    pub fn vertex_index(&self, location: usize) -> usize {
        let mut a = vec![0u32; self.k];
        a[location] = self.n as u32;
        self.rank(&a)
    }

    fn check_query(&self, p: &[f64]) -> Result<Vec<f64>, GridError> {
        if p.len() != self.k {
            return Err(GridError::DimensionMismatch { expected: self.k, got: p.len() });
        }
        Ok(BeliefState::new(p.to_vec())?.into_inner())
    }

    /// Enclosing sub-simplex of `p` with barycentric weights. Zero-weight
    /// corners are dropped, so lattice points come back as a single cell.
    pub fn locate(&self, p: &[f64]) -> Result<BarycentricWeights, GridError> {
        let p = self.check_query(p)?;
        Ok(self.locate_normalized(&p))
    }

    pub(crate) fn locate_normalized(&self, p: &[f64]) -> BarycentricWeights {
        let k = self.k;
        let n = self.n as f64;
        // Cumulative coordinates x_1..x_{k-1}; x_0 = n is implicit.
        let mut x = vec![0.0; k];
        let mut acc = 0.0;
        for j in (1..k).rev() {
            acc += n * p[j];
            x[j] = acc.min(n);
        }
        let mut base = vec![0i64; k];
        let mut frac = vec![0.0; k];
        for j in 1..k {
            let f = x[j].floor();
            base[j] = f as i64;
            frac[j] = x[j] - f;
        }
        let mut order: Vec<usize> = (1..k).collect();
        // Stable, so equal fractions keep the lower coordinate first and every
        // visited corner stays a nonincreasing sequence.
        order.sort_by(|&a, &b| frac[b].partial_cmp(&frac[a]).unwrap());

        let mut indices = Vec::with_capacity(k);
        let mut weights = Vec::with_capacity(k);
        let mut corner = base;
        let mut prev = 1.0;
        for step in 0..k {
            let next = if step + 1 < k { frac[order[step]] } else { 0.0 };
            let w = prev - next;
            if w > 0.0 {
                indices.push(self.rank_cumulative(&corner));
                weights.push(w);
            }
            if step + 1 < k {
                corner[order[step]] += 1;
            }
            prev = next;
        }
        BarycentricWeights { indices, weights }
    }

    fn rank_cumulative(&self, x: &[i64]) -> usize {
        let k = self.k;
        let mut a = vec![0u32; k];
        let n = self.n as i64;
        a[0] = (n - x[1]) as u32;
        for j in 1..k - 1 {
            a[j] = (x[j] - x[j + 1]) as u32;
        }
        a[k - 1] = x[k - 1] as u32;
        self.rank(&a)
    }

    /// Barycentric interpolation of a per-cell field.
    pub fn interpolate(&self, values: &[f64], p: &[f64]) -> Result<f64, GridError> {
        if values.len() != self.len() {
            return Err(GridError::ValueLength { expected: self.len(), got: values.len() });
        }
        Ok(self.locate(p)?.apply(values))
    }

    /// Nearest lattice point (largest-remainder rounding of `n p`).
    pub fn nearest_cell(&self, p: &[f64]) -> Result<usize, GridError> {
        let p = self.check_query(p)?;
        Ok(self.nearest_normalized(&p))
    }

    pub(crate) fn nearest_normalized(&self, p: &[f64]) -> usize {
        let n = self.n as f64;
        let mut a: Vec<u32> = Vec::with_capacity(self.k);
        let mut rem: Vec<(f64, usize)> = Vec::with_capacity(self.k);
        let mut total = 0u64;
        for (i, &v) in p.iter().enumerate() {
            let y = (v * n).max(0.0);
            let f = y.floor();
            a.push(f as u32);
            total += f as u64;
            rem.push((y - f, i));
        }
        let deficit = (self.n as u64).saturating_sub(total) as usize;
        rem.sort_by(|l, r| r.0.partial_cmp(&l.0).unwrap().then(l.1.cmp(&r.1)));
        for &(_, i) in rem.iter().take(deficit) {
            a[i] += 1;
        }
        // Rounding drift can overshoot by one unit; take it back from the
        // smallest remainder.
        let mut sum: u64 = a.iter().map(|&v| v as u64).sum();
        let mut back = rem.iter().rev();
        while sum > self.n as u64 {
            let &(_, i) = back.next().expect("overshoot bounded by k");
            if a[i] > 0 {
                a[i] -= 1;
                sum -= 1;
            }
        }
        self.rank(&a)
    }

    /// Index of the cell with coordinates relabeled by `sigma`
    /// (coordinate `i` moves to slot `sigma[i]`).
    pub fn permute_cell(&self, index: usize, sigma: &[usize]) -> Result<usize, GridError> {
        if index >= self.len() {
            return Err(GridError::CellOutOfRange { index, len: self.len() });
        }
        check_permutation(sigma, self.k)?;
        let src = self.coords(index);
        let mut a = vec![0u32; self.k];
        for (i, &v) in src.iter().enumerate() {
            a[sigma[i]] = v;
        }
        Ok(self.rank(&a))
    }
}

pub fn check_permutation(sigma: &[usize], k: usize) -> Result<(), GridError> {
    let mut seen = vec![false; k];
    if sigma.len() != k {
        return Err(GridError::BadPermutation(sigma.to_vec()));
    }
    for &s in sigma {
        if s >= k || seen[s] {
            return Err(GridError::BadPermutation(sigma.to_vec()));
        }
        seen[s] = true;
    }
    Ok(())
}

/// All permutations of `0..k` in lexicographic order.
pub fn permutations(k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current: Vec<usize> = (0..k).collect();
    loop {
        out.push(current.clone());
        let Some(i) = (0..k.saturating_sub(1)).rev().find(|&i| current[i] < current[i + 1]) else {
            return out;
        };
        let j = (i + 1..k).rev().find(|&j| current[j] > current[i]).unwrap();
        current.swap(i, j);
        current[i + 1..].reverse();
    }
}

fn fill(out: &mut Vec<u32>, current: &mut [u32], pos: usize, rem: u32) {
    let k = current.len();
    if pos == k - 1 {
        current[pos] = rem;
        out.extend_from_slice(current);
        return;
    }
    for v in 0..=rem {
        current[pos] = v;
        fill(out, current, pos + 1, rem - v);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn reconstruct(grid: &SimplexGrid, w: &BarycentricWeights) -> Vec<f64> {
        let mut q = vec![0.0; grid.k()];
        for (&i, &wi) in w.indices.iter().zip(&w.weights) {
            for (d, v) in grid.point(i).into_iter().enumerate() {
                q[d] += wi * v;
            }
        }
        q
    }

    #[test]
    fn cell_counts() {
        let g = SimplexGrid::new(3, 200).unwrap();
        assert_eq!(g.len(), 20301);
        // Brute force count over the square.
        let brute = (0..=200u32).flat_map(|a| (0..=200 - a).map(move |b| (a, b))).count();
        assert_eq!(brute, 20301);
        assert_eq!(cell_count(3, 200), 20301);

        let g = SimplexGrid::new(3, 1).unwrap();
        assert_eq!(g.len(), 3);
        for i in 0..3 {
            assert_eq!(g.coords(i).iter().sum::<u32>(), 1);
        }

        let g = SimplexGrid::new(2, 2).unwrap();
        let pts: Vec<Vec<f64>> = (0..g.len()).map(|i| g.point(i)).collect();
        assert_eq!(pts, vec![vec![0.0, 1.0], vec![0.5, 0.5], vec![1.0, 0.0]]);
    }

    #[test]
    fn rejects_bad_sizes() {
        assert_eq!(SimplexGrid::new(1, 10).unwrap_err(), GridError::TooFewLocations(1));
        assert_eq!(SimplexGrid::new(3, 0).unwrap_err(), GridError::BadResolution(0));
    }

    #[test]
    fn rank_is_a_bijection() {
        for (k, n) in [(2, 7), (3, 40), (4, 12), (5, 6)] {
            let g = SimplexGrid::new(k, n).unwrap();
            assert_eq!(g.len(), cell_count(k, n));
            for i in 0..g.len() {
                assert_eq!(g.index_of(g.coords(i)), Some(i));
            }
        }
    }

    #[test]
    fn locate_examples() {
        let g = SimplexGrid::new(3, 200).unwrap();
        let w = g.locate(&[1.0, 0.0, 0.0]).unwrap();
        assert_eq!(w.indices, vec![g.vertex_index(0)]);
        assert_eq!(w.weights, vec![1.0]);

        // (0.5, 0.25, 0.25) sits on the shared edge of an up and a down
        // triangle of the n = 2 lattice: halfway between (½,½,0) and (½,0,½).
        let g2 = SimplexGrid::new(3, 2).unwrap();
        let w = g2.locate(&[0.5, 0.25, 0.25]).unwrap();
        let mut pairs: Vec<(Vec<f64>, f64)> =
            w.indices.iter().zip(&w.weights).map(|(&i, &wi)| (g2.point(i), wi)).collect();
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        assert_eq!(pairs, vec![(vec![0.5, 0.0, 0.5], 0.5), (vec![0.5, 0.5, 0.0], 0.5)]);
        let q = reconstruct(&g2, &w);
        for (a, b) in q.iter().zip([0.5, 0.25, 0.25]) {
            assert!((a - b).abs() < 1e-12);
        }
        // Strictly inside a small triangle all three corners carry weight.
        let w = g2.locate(&[0.4, 0.35, 0.25]).unwrap();
        assert_eq!(w.indices.len(), 3);
        for (a, b) in reconstruct(&g2, &w).iter().zip([0.4, 0.35, 0.25]) {
            assert!((a - b).abs() < 1e-12);
        }

        let third = 1.0 / 3.0;
        let w = g.locate(&[third, third, third]).unwrap();
        assert!((w.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for v in reconstruct(&g, &w) {
            assert!((v - third).abs() < 1e-12);
        }
    }

    #[test]
    fn locate_rejects_negative_and_renormalizes_drift() {
        let g = SimplexGrid::new(3, 10).unwrap();
        assert!(matches!(g.locate(&[1.1, -0.1, 0.0]), Err(GridError::NegativeEntry { .. })));
        assert!(g.locate(&[0.5 + 5e-10, 0.5, -1e-10]).is_ok());
        assert!(matches!(g.locate(&[0.5, 0.6, 0.0]), Err(GridError::NotNormalized(_))));
    }

    #[test]
    fn interpolation_examples() {
        let g = SimplexGrid::new(3, 200).unwrap();
        let constant = vec![0.37; g.len()];
        assert!((g.interpolate(&constant, &[0.123, 0.456, 0.421]).unwrap() - 0.37).abs() < 1e-12);

        let first: Vec<f64> = (0..g.len()).map(|i| g.point(i)[0]).collect();
        let v = g.interpolate(&first, &[0.4005, 0.3, 0.2995]).unwrap();
        assert!((v - 0.4005).abs() < 1e-12);

        let arbitrary: Vec<f64> = (0..g.len()).map(|i| ((i * 7919) % 1000) as f64).collect();
        let cell = 12345;
        assert_eq!(g.interpolate(&arbitrary, &g.point(cell)).unwrap(), arbitrary[cell]);
    }

    #[test]
    fn permutation_examples() {
        let g = SimplexGrid::new(3, 200).unwrap();
        for i in [0, 17, 20300] {
            assert_eq!(g.permute_cell(i, &[0, 1, 2]).unwrap(), i);
        }
        let cycle = [1, 2, 0];
        assert_eq!(g.permute_cell(g.vertex_index(0), &cycle).unwrap(), g.vertex_index(1));
        for i in 0..g.len() {
            let mut j = i;
            for _ in 0..3 {
                j = g.permute_cell(j, &cycle).unwrap();
            }
            assert_eq!(j, i);
        }
        assert!(g.permute_cell(0, &[0, 0, 1]).is_err());
        assert!(g.permute_cell(g.len(), &cycle).is_err());
    }

    #[test]
    fn permutations_enumerates_all() {
        let p = permutations(3);
        assert_eq!(p.len(), 6);
        assert_eq!(p[0], vec![0, 1, 2]);
        assert_eq!(p[5], vec![2, 1, 0]);
    }

    #[test]
    fn nearest_cell_on_lattice_and_between() {
        let g = SimplexGrid::new(3, 10).unwrap();
        for i in 0..g.len() {
            assert_eq!(g.nearest_cell(&g.point(i)).unwrap(), i);
        }
        let i = g.nearest_cell(&[0.34, 0.33, 0.33]).unwrap();
        assert_eq!(g.coords(i), &[4, 3, 3]);
    }

    fn simplex_point(k: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0f64..1.0, k).prop_filter_map("degenerate", |v| {
            let s: f64 = v.iter().sum();
            (s > 1e-6).then(|| v.iter().map(|x| x / s).collect())
        })
    }

    proptest! {
        #[test]
        fn weights_are_convex_and_reconstruct(p in simplex_point(3), n in 1usize..60) {
            let g = SimplexGrid::new(3, n).unwrap();
            let w = g.locate(&p).unwrap();
            prop_assert!(w.weights.iter().all(|&x| x >= 0.0));
            prop_assert!((w.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for (a, b) in reconstruct(&g, &w).iter().zip(&p) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn weights_reconstruct_in_higher_dimension(p in simplex_point(5), n in 1usize..12) {
            let g = SimplexGrid::new(5, n).unwrap();
            let w = g.locate(&p).unwrap();
            prop_assert!(w.indices.len() <= 5);
            prop_assert!((w.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for (a, b) in reconstruct(&g, &w).iter().zip(&p) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn affine_fields_are_reproduced(
            p in simplex_point(3),
            coef in prop::collection::vec(-5.0f64..5.0, 4),
        ) {
            let g = SimplexGrid::new(3, 50).unwrap();
            let f = |q: &[f64]| coef[0] + coef[1] * q[0] + coef[2] * q[1] + coef[3] * q[2];
            let values: Vec<f64> = (0..g.len()).map(|i| f(&g.point(i))).collect();
            prop_assert!((g.interpolate(&values, &p).unwrap() - f(&p)).abs() < 1e-12);
        }

        #[test]
        fn interpolation_commutes_with_relabeling(
            p in simplex_point(3),
            which in 0usize..6,
            seed in 0u64..1000,
        ) {
            let g = SimplexGrid::new(3, 40).unwrap();
            let sigma = &permutations(3)[which];
            let values: Vec<f64> = (0..g.len())
                .map(|i| (((i as u64 + seed) * 2654435761) % 1009) as f64 / 1009.0)
                .collect();
            // moved[σ(cell)] = values[cell]
            let mut moved = vec![0.0; g.len()];
            for (i, &v) in values.iter().enumerate() {
                moved[g.permute_cell(i, sigma).unwrap()] = v;
            }
            let q = BeliefState::new(p.clone()).unwrap().permuted(sigma);
            let lhs = g.interpolate(&moved, q.probs()).unwrap();
            let rhs = g.interpolate(&values, &p).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-12);
        }
    }
}
