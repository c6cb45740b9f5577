//! Ways of dividing sample information between selection and inference:
//! index-based data splits (simple, DUPLEX, coin-flip, stratified) and the
//! additive-noise `(U, V)` decomposition of the response.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Which rule produced a [`SplitPlan`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitStrategyTag {
    Simple,
    Duplex,
    CoinFlip,
    Stratified,
}

/// A partition of `{0..n}` into a selection set and an inference set.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitPlan {
    /// Sorted indices allocated to selection.
    pub selection_idx: Vec<usize>,
    /// Sorted indices allocated to inference.
    pub inference_idx: Vec<usize>,
    /// Fraction of observations allocated to selection.
    pub fraction: f64,
    pub strategy: SplitStrategyTag,
}

impl SplitPlan {
    fn assemble(
        mut selection: Vec<usize>,
        n: usize,
        fraction: f64,
        strategy: SplitStrategyTag,
    ) -> Self {
        selection.sort_unstable();
        let mut in_selection = vec![false; n];
        for &i in &selection {
            in_selection[i] = true;
        }
        let inference: Vec<usize> = (0..n).filter(|&i| !in_selection[i]).collect();
        Self {
            selection_idx: selection,
            inference_idx: inference,
            fraction,
            strategy,
        }
    }

    pub fn n(&self) -> usize {
        self.selection_idx.len() + self.inference_idx.len()
    }
}

/// The additive randomisation of a response: `u = y + gamma*sigma_hat*z`
/// for selection and `v = y - sigma_hat*z/gamma` for inference.
#[derive(Debug, Clone)]
pub struct UVDecomposition {
    pub u: DVector<f64>,
    pub v: DVector<f64>,
    pub gamma: f64,
    /// Standard deviation used to scale the injected noise.
    pub sigma_hat: f64,
    /// The realised standard-normal noise vector.
    pub z: DVector<f64>,
}

impl UVDecomposition {
    /// Recovers the original response as `(u + gamma^2 v) / (1 + gamma^2)`.
    pub fn reconstruct_y(&self) -> DVector<f64> {
        let g2 = self.gamma * self.gamma;
        (&self.u + g2 * &self.v) / (1.0 + g2)
    }
}

/// Noise scale that matches a splitting fraction: `gamma = (1/f - 1)^{1/2}`,
/// so that `1 / (1 + gamma^2) = f`.
pub fn gamma_from_fraction(f: f64) -> Result<f64> {
    if !(f > 0.0 && f < 1.0) {
        return Err(Error::DomainError(format!("fraction {f} outside (0, 1)")));
    }
    Ok((1.0 / f - 1.0).sqrt())
}

/// Splits the information in `y` additively instead of by observation:
/// draws `z ~ N(0, I)` and forms the `(U, V)` pair calibrated to fraction `f`.
pub fn randomised_split<R: Rng + ?Sized>(
    y: &DVector<f64>,
    f: f64,
    sigma_hat: f64,
    rng: &mut R,
) -> Result<UVDecomposition> {
    if !(sigma_hat > 0.0) {
        return Err(Error::DomainError(format!(
            "sigma_hat = {sigma_hat} must be positive"
        )));
    }
    let gamma = gamma_from_fraction(f)?;
    let z = DVector::from_fn(y.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
    let w = sigma_hat * &z;
    Ok(UVDecomposition {
        u: y + gamma * &w,
        v: y - &w / gamma,
        gamma,
        sigma_hat,
        z,
    })
}

/// Round-half-up selection size for a fraction.
pub fn selection_size(n: usize, f: f64) -> Result<usize> {
    if !(f > 0.0 && f < 1.0) {
        return Err(Error::DomainError(format!("fraction {f} outside (0, 1)")));
    }
    let n1 = (f * n as f64 + 0.5).floor() as usize;
    if n1 < 1 || n1 >= n {
        return Err(Error::DomainError(format!(
            "fraction {f} leaves an empty split for n = {n}"
        )));
    }
    Ok(n1)
}

/// Selection set chosen uniformly at random among subsets of the target size.
pub fn simple_split<R: Rng + ?Sized>(n: usize, f: f64, rng: &mut R) -> Result<SplitPlan> {
    let n1 = selection_size(n, f)?;
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..n1 {
        let j = rng.gen_range(i..n);
        idx.swap(i, j);
    }
    idx.truncate(n1);
    Ok(SplitPlan::assemble(idx, n, f, SplitStrategyTag::Simple))
}

/// DUPLEX allocation: deterministic, distance-based, design-balanced.
///
/// The two rows farthest apart seed the selection set, the next farthest
/// remaining pair seeds the inference set, and the rest are allocated one at
/// a time, alternating between the sets starting with selection, each time
/// taking the unassigned row with the largest minimum distance to the rows
/// already in the receiving set. Once the smaller set reaches its quota the
/// remainder goes to the other set. Distance ties break toward lower row
/// indices.
pub fn duplex_split(x: &DMatrix<f64>, f: f64) -> Result<SplitPlan> {
    let n = x.nrows();
    if n < 4 {
        return Err(Error::DomainError(format!(
            "duplex needs at least 4 rows, got {n}"
        )));
    }
    let n1 = selection_size(n, f)?;
    let n2 = n - n1;
    if n1 < 2 || n2 < 2 {
        return Err(Error::DomainError(format!(
            "duplex needs at least 2 rows per split, got {n1} and {n2}"
        )));
    }

    // Squared pairwise distances; monotone in the Euclidean distance, so
    // argmax and ties are unchanged.
    let mut dist = vec![0.0f64; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let mut d = 0.0;
            for k in 0..x.ncols() {
                let t = x[(i, k)] - x[(j, k)];
                d += t * t;
            }
            dist[i * n + j] = d;
            dist[j * n + i] = d;
        }
    }
    let d = |i: usize, j: usize| dist[i * n + j];

    let mut unassigned: Vec<usize> = (0..n).collect();
    let mut selection: Vec<usize> = Vec::with_capacity(n1);
    let mut inference: Vec<usize> = Vec::with_capacity(n2);

    let take_pair = |unassigned: &mut Vec<usize>, dest: &mut Vec<usize>| {
        let mut best = (unassigned[0], unassigned[1]);
        let mut best_d = f64::NEG_INFINITY;
        for (a, &i) in unassigned.iter().enumerate() {
            for &j in unassigned.iter().skip(a + 1) {
                if d(i, j) > best_d {
                    best_d = d(i, j);
                    best = (i, j);
                }
            }
        }
        dest.push(best.0);
        dest.push(best.1);
        unassigned.retain(|&k| k != best.0 && k != best.1);
    };
    take_pair(&mut unassigned, &mut selection);
    take_pair(&mut unassigned, &mut inference);

    // Alternate single assignments by max-min distance to the receiving set.
    let mut to_selection = true;
    while !unassigned.is_empty() {
        if selection.len() == n1 {
            inference.append(&mut unassigned);
            break;
        }
        if inference.len() == n2 {
            selection.append(&mut unassigned);
            break;
        }
        let receiving: &mut Vec<usize> = if to_selection { &mut selection } else { &mut inference };
        let mut best = unassigned[0];
        let mut best_d = f64::NEG_INFINITY;
        for &i in &unassigned {
            let min_d = receiving
                .iter()
                .map(|&j| d(i, j))
                .fold(f64::INFINITY, f64::min);
            if min_d > best_d {
                best_d = min_d;
                best = i;
            }
        }
        receiving.push(best);
        unassigned.retain(|&k| k != best);
        to_selection = !to_selection;
    }

    Ok(SplitPlan::assemble(selection, n, f, SplitStrategyTag::Duplex))
}

/// Labels a fixed partition `(A, A^c)` as selection or inference with equal
/// probability.
pub fn coin_flip_split<R: Rng + ?Sized>(n: usize, a: &[usize], rng: &mut R) -> Result<SplitPlan> {
    if a.is_empty() || a.len() >= n {
        return Err(Error::DomainError(
            "coin-flip set must be a proper non-empty subset".into(),
        ));
    }
    for w in a.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::DomainError(
                "coin-flip set must be strictly increasing".into(),
            ));
        }
    }
    if *a.last().unwrap() >= n {
        return Err(Error::DomainError(format!(
            "index {} out of range for n = {n}",
            a.last().unwrap()
        )));
    }
    let mut in_a = vec![false; n];
    for &i in a {
        in_a[i] = true;
    }
    let complement: Vec<usize> = (0..n).filter(|&i| !in_a[i]).collect();
    let selection = if rng.gen::<bool>() { a.to_vec() } else { complement };
    let fraction = selection.len() as f64 / n as f64;
    Ok(SplitPlan::assemble(
        selection,
        n,
        fraction,
        SplitStrategyTag::CoinFlip,
    ))
}

/// Draws `m` observations uniformly from each of `k` equal-size groups.
pub fn stratified_split<R: Rng + ?Sized>(
    groups: &[Vec<usize>],
    m: usize,
    rng: &mut R,
) -> Result<SplitPlan> {
    if groups.is_empty() {
        return Err(Error::DomainError("no groups given".into()));
    }
    let g = groups[0].len();
    if groups.iter().any(|grp| grp.len() != g) {
        return Err(Error::DomainError("groups must have equal sizes".into()));
    }
    if m < 1 || m >= g {
        return Err(Error::DomainError(format!(
            "per-group draw m = {m} must satisfy 1 <= m < {g}"
        )));
    }
    let n = g * groups.len();
    let mut seen = vec![false; n];
    for grp in groups {
        for &i in grp {
            if i >= n || seen[i] {
                return Err(Error::DomainError(
                    "groups must partition the index range".into(),
                ));
            }
            seen[i] = true;
        }
    }
    let mut selection = Vec::with_capacity(m * groups.len());
    for grp in groups {
        let mut idx = grp.clone();
        for i in 0..m {
            let j = rng.gen_range(i..g);
            idx.swap(i, j);
        }
        selection.extend_from_slice(&idx[..m]);
    }
    Ok(SplitPlan::assemble(
        selection,
        n,
        m as f64 / g as f64,
        SplitStrategyTag::Stratified,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashMap;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn assert_partition(plan: &SplitPlan, n: usize) {
        let mut all: Vec<usize> = plan
            .selection_idx
            .iter()
            .chain(plan.inference_idx.iter())
            .copied()
            .collect();
        all.sort_unstable();
        assert_eq!(all, (0..n).collect::<Vec<_>>());
    }

    #[test]
    fn gamma_examples() {
        assert!((gamma_from_fraction(0.5).unwrap() - 1.0).abs() < 1e-15);
        assert!((gamma_from_fraction(0.75).unwrap() - 1.0 / 3.0f64.sqrt()).abs() < 1e-15);
        assert!((gamma_from_fraction(0.8).unwrap() - 0.5).abs() < 1e-15);
        assert!(gamma_from_fraction(0.0).is_err());
        assert!(gamma_from_fraction(1.0).is_err());
    }

    #[test]
    fn gamma_fraction_round_trip() {
        for k in 1..100 {
            let f = k as f64 / 100.0;
            let g = gamma_from_fraction(f).unwrap();
            assert!((1.0 / (1.0 + g * g) - f).abs() < 1e-14);
        }
    }

    #[test]
    fn uv_reconstruction_is_exact() {
        let mut r = rng(5);
        for _ in 0..50 {
            let n = 1 + (r.gen::<u64>() % 40) as usize;
            let y = DVector::from_fn(n, |_, _| r.sample::<f64, _>(StandardNormal));
            let f = 0.05 + 0.9 * r.gen::<f64>();
            let sigma = 0.1 + r.gen::<f64>();
            let uv = randomised_split(&y, f, sigma, &mut r).unwrap();
            let back = uv.reconstruct_y();
            let scale = 1.0 + y.norm();
            assert!((&back - &y).norm() <= 1e-12 * scale);
        }
    }

    #[test]
    fn uv_moments_match() {
        // With the true sigma, U and V are uncorrelated with the advertised
        // variances.
        let n_mc = 100_000;
        let f = 0.5;
        let sigma = 1.0;
        let mu = 2.0;
        let gamma = gamma_from_fraction(f).unwrap();
        let mut r = rng(7);
        let y1 = DVector::from_element(1, 0.0);
        let mut su = 0.0;
        let mut sv = 0.0;
        let mut suu = 0.0;
        let mut svv = 0.0;
        let mut suv = 0.0;
        for _ in 0..n_mc {
            let eps: f64 = r.sample(StandardNormal);
            let y = &y1 + DVector::from_element(1, mu + sigma * eps);
            let uv = randomised_split(&y, f, sigma, &mut r).unwrap();
            let du = uv.u[0] - mu;
            let dv = uv.v[0] - mu;
            su += du;
            sv += dv;
            suu += du * du;
            svv += dv * dv;
            suv += du * dv;
        }
        let m = n_mc as f64;
        let cov = suv / m - (su / m) * (sv / m);
        let var_u = suu / m - (su / m) * (su / m);
        let var_v = svv / m - (sv / m) * (sv / m);
        assert!(cov.abs() <= 0.02, "cov(U,V) = {cov}");
        let want_u = (1.0 + gamma * gamma) * sigma * sigma;
        let want_v = (1.0 + 1.0 / (gamma * gamma)) * sigma * sigma;
        assert!((var_u / want_u - 1.0).abs() < 0.03, "var(U) = {var_u}");
        assert!((var_v / want_v - 1.0).abs() < 0.03, "var(V) = {var_v}");
    }

    #[test]
    fn simple_split_uniform_over_subsets() {
        let mut r = rng(11);
        let n_mc = 100_000;
        let mut counts: HashMap<Vec<usize>, usize> = HashMap::new();
        for _ in 0..n_mc {
            let plan = simple_split(4, 0.5, &mut r).unwrap();
            assert_partition(&plan, 4);
            assert_eq!(plan.selection_idx.len(), 2);
            *counts.entry(plan.selection_idx).or_insert(0) += 1;
        }
        assert_eq!(counts.len(), 6);
        for (subset, c) in counts {
            let freq = c as f64 / n_mc as f64;
            assert!(
                (freq - 1.0 / 6.0).abs() <= 0.02,
                "subset {subset:?} frequency {freq}"
            );
        }
    }

    #[test]
    fn simple_split_two_points() {
        let mut r = rng(13);
        let mut saw = [false, false];
        for _ in 0..100 {
            let plan = simple_split(2, 0.5, &mut r).unwrap();
            assert_eq!(plan.selection_idx.len(), 1);
            saw[plan.selection_idx[0]] = true;
        }
        assert!(saw[0] && saw[1]);
    }

    #[test]
    fn simple_split_rejects_degenerate_fraction() {
        assert!(simple_split(4, 0.05, &mut rng(1)).is_err());
        assert!(simple_split(4, 0.95, &mut rng(1)).is_err());
    }

    #[test]
    fn duplex_hand_example() {
        // 1-D rows at 0, 1, 10, 11: the farthest pair (rows 0 and 3) seeds
        // selection, the next pair (rows 1 and 2) seeds inference.
        let x = DMatrix::from_column_slice(4, 1, &[0.0, 1.0, 10.0, 11.0]);
        let plan = duplex_split(&x, 0.5).unwrap();
        assert_eq!(plan.selection_idx, vec![0, 3]);
        assert_eq!(plan.inference_idx, vec![1, 2]);
    }

    #[test]
    fn duplex_deterministic() {
        let mut r = rng(17);
        let x = crate::linmodel::gen_design(20, 3, 0.4, &mut r).unwrap();
        let a = duplex_split(&x, 0.5).unwrap();
        let b = duplex_split(&x, 0.5).unwrap();
        assert_eq!(a, b);
        assert_partition(&a, 20);
        assert_eq!(a.selection_idx.len(), 10);
    }

    #[test]
    fn duplex_duplicate_rows_tie_break() {
        let x = DMatrix::from_element(6, 2, 1.0);
        let plan = duplex_split(&x, 0.5).unwrap();
        assert_partition(&plan, 6);
        assert_eq!(plan.selection_idx.len(), 3);
        // All distances tie, so assignment follows row order.
        assert_eq!(plan.selection_idx, vec![0, 1, 4]);
        assert_eq!(plan.inference_idx, vec![2, 3, 5]);
    }

    #[test]
    fn duplex_uneven_quota() {
        let mut r = rng(19);
        let x = crate::linmodel::gen_design(20, 2, 0.0, &mut r).unwrap();
        let plan = duplex_split(&x, 0.75).unwrap();
        assert_partition(&plan, 20);
        assert_eq!(plan.selection_idx.len(), 15);
        assert_eq!(plan.inference_idx.len(), 5);
        assert!(duplex_split(&x, 0.95).is_err());
    }

    #[test]
    fn coin_flip_balanced_labels() {
        let mut r = rng(23);
        let a = vec![0, 2, 4];
        let n_mc = 10_000;
        let mut took_a = 0;
        for _ in 0..n_mc {
            let plan = coin_flip_split(6, &a, &mut r).unwrap();
            assert_partition(&plan, 6);
            if plan.selection_idx == a {
                took_a += 1;
            }
        }
        let freq = took_a as f64 / n_mc as f64;
        assert!((freq - 0.5).abs() <= 0.01, "frequency {freq}");
    }

    #[test]
    fn coin_flip_two_points() {
        let mut r = rng(29);
        let mut saw = [false, false];
        for _ in 0..50 {
            let plan = coin_flip_split(2, &[0], &mut r).unwrap();
            saw[plan.selection_idx[0]] = true;
        }
        assert!(saw[0] && saw[1]);
        assert!(coin_flip_split(2, &[0, 1], &mut r).is_err());
        assert!(coin_flip_split(2, &[], &mut r).is_err());
    }

    #[test]
    fn stratified_one_per_group() {
        let groups = vec![vec![0, 1, 2], vec![3, 4, 5]];
        let mut r = rng(31);
        let plan = stratified_split(&groups, 1, &mut r).unwrap();
        assert_partition(&plan, 6);
        assert_eq!(plan.selection_idx.len(), 2);
        assert!(plan.selection_idx.iter().any(|&i| i < 3));
        assert!(plan.selection_idx.iter().any(|&i| i >= 3));
        // m = g - 1 leaves exactly one per group for inference.
        let plan = stratified_split(&groups, 2, &mut r).unwrap();
        assert_eq!(plan.inference_idx.len(), 2);
        assert!(plan.inference_idx.iter().any(|&i| i < 3));
        assert!(plan.inference_idx.iter().any(|&i| i >= 3));
    }

    #[test]
    fn stratified_rejects_unequal_groups() {
        let groups = vec![vec![0, 1, 2], vec![3, 4]];
        assert!(stratified_split(&groups, 1, &mut rng(1)).is_err());
    }

    #[test]
    fn constant_inclusion_probability() {
        // Simple, coin-flip, and stratified splits give every index the same
        // selection probability.
        let n = 6;
        let n_mc = 10_000;
        let mut r = rng(37);
        let groups = vec![vec![0, 1, 2], vec![3, 4, 5]];
        let a = vec![0, 1, 2];
        let mut counts = vec![[0usize; 3]; n];
        for _ in 0..n_mc {
            for (k, plan) in [
                simple_split(n, 0.5, &mut r).unwrap(),
                coin_flip_split(n, &a, &mut r).unwrap(),
                stratified_split(&groups, 1, &mut r).unwrap(),
            ]
            .iter()
            .enumerate()
            {
                for &i in &plan.selection_idx {
                    counts[i][k] += 1;
                }
            }
        }
        let want = [0.5, 0.5, 1.0 / 3.0];
        for i in 0..n {
            for k in 0..3 {
                let freq = counts[i][k] as f64 / n_mc as f64;
                assert!(
                    (freq - want[k]).abs() <= 0.015,
                    "strategy {k} index {i} frequency {freq}"
                );
            }
        }
    }
}
