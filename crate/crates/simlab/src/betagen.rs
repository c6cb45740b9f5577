//! Random sparse coefficient vectors for the power study: `k` active
//! positions drawn uniformly without replacement, each filled with an
//! independent draw from the twenty-point set {±0.1, ±0.2, …, ±1.0}.

use nalgebra::DVector;
use rand::Rng;
use uvsplit::{Error, Result};

/// Magnitudes are multiples of 1/10 up to this numerator.
const MAGNITUDES: usize = 10;

/// Sparse coefficient vector with `k` uniformly placed nonzero entries,
/// values i.i.d. uniform on {±0.1, …, ±1.0}.
pub fn gen_beta<R: Rng + ?Sized>(p: usize, k: usize, rng: &mut R) -> Result<DVector<f64>> {
    if k < 1 || k > p {
        return Err(Error::DomainError(format!(
            "k = {k} active positions outside [1, {p}]"
        )));
    }
    let mut idx: Vec<usize> = (0..p).collect();
    for i in 0..k {
        let j = rng.gen_range(i..p);
        idx.swap(i, j);
    }
    let mut beta = DVector::zeros(p);
    for &pos in &idx[..k] {
        let draw = rng.gen_range(0..2 * MAGNITUDES);
        let magnitude = (draw / 2 + 1) as f64 / MAGNITUDES as f64;
        let sign = if draw % 2 == 0 { 1.0 } else { -1.0 };
        beta[pos] = sign * magnitude;
    }
    Ok(beta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn exactly_k_nonzeros_always() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let beta = gen_beta(37, 10, &mut rng).unwrap();
            assert_eq!(beta.iter().filter(|&&b| b != 0.0).count(), 10);
        }
    }

    #[test]
    fn single_position_values_are_uniform_over_the_twenty_point_set() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let reps = 10_000;
        let mut counts = std::collections::BTreeMap::new();
        for _ in 0..reps {
            let beta = gen_beta(1, 1, &mut rng).unwrap();
            let v = beta[0];
            assert!((0.1..=1.0).contains(&v.abs()));
            assert!((v.abs() * 10.0 - (v.abs() * 10.0).round()).abs() < 1e-12);
            *counts.entry((v * 10.0).round() as i64).or_insert(0usize) += 1;
        }
        assert_eq!(counts.len(), 20);
        for (&value, &c) in &counts {
            let freq = c as f64 / reps as f64;
            assert!(
                (freq - 0.05).abs() < 0.01,
                "value {value} has frequency {freq}"
            );
        }
    }

    #[test]
    fn positions_cover_the_range_uniformly() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (p, reps) = (20, 4000);
        let mut hits = vec![0usize; p];
        for _ in 0..reps {
            let beta = gen_beta(p, 3, &mut rng).unwrap();
            for j in 0..p {
                if beta[j] != 0.0 {
                    hits[j] += 1;
                }
            }
        }
        let expect = reps as f64 * 3.0 / p as f64;
        for (j, &h) in hits.iter().enumerate() {
            assert!(
                (h as f64 - expect).abs() < 5.0 * expect.sqrt(),
                "position {j} hit {h} times, expected about {expect}"
            );
        }
    }

    #[test]
    fn fixed_seed_reproduces_the_vector() {
        let a = gen_beta(50, 10, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = gen_beta(50, 10, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_out_of_range_k() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(gen_beta(5, 0, &mut rng).is_err());
        assert!(gen_beta(5, 6, &mut rng).is_err());
    }
}
