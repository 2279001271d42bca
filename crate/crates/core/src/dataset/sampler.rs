use rand::seq::index;
use rand::Rng;

use crate::error::{invalid, Result};

/// `m` distinct indices drawn uniformly from `0..n`.
pub fn sample_indices<R: Rng + ?Sized>(n: usize, m: usize, rng: &mut R) -> Result<Vec<usize>> {
    if m > n {
        return invalid(format!("batch of {m} requested from {n} windows"));
    }
    Ok(index::sample(rng, n, m).into_vec())
}

/// Two independent batches of `m` indices into the same `n` windows, with
/// no position pairing a window with itself.
pub fn sample_distinct_pairs<R: Rng + ?Sized>(
    n: usize,
    m: usize,
    rng: &mut R,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if n < 2 && m > 0 {
        return invalid("pairing distinct windows needs at least two of them");
    }
    let first = sample_indices(n, m, rng)?;
    let mut second = sample_indices(n, m, rng)?;
    for k in 0..m {
        if second[k] != first[k] {
            continue;
        }
        let swaps: Vec<usize> = (0..m)
            .filter(|&j| j != k && second[j] != first[k] && second[k] != first[j])
            .collect();
        if !swaps.is_empty() {
            let j = swaps[rng.gen_range(0..swaps.len())];
            second.swap(k, j);
            continue;
        }
        let unused: Vec<usize> = (0..n)
            .filter(|i| *i != first[k] && !second.contains(i))
            .collect();
        match unused.len() {
            0 => return invalid("cannot avoid self-pairs for this batch size"),
            len => second[k] = unused[rng.gen_range(0..len)],
        }
    }
    Ok((first, second))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn full_draw_is_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut v = sample_indices(50, 50, &mut rng).unwrap();
        v.sort_unstable();
        assert_eq!(v, (0..50).collect::<Vec<_>>());
        assert!(sample_indices(5, 6, &mut rng).unwrap_err().is_validation());
    }

    #[test]
    fn seeded_draws_repeat() {
        let a = sample_indices(1000, 128, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        let b = sample_indices(1000, 128, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn pairs_never_coincide() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (n, m) in [(2, 1), (2, 2), (3, 3), (10, 10), (600, 128)] {
            for _ in 0..200 {
                let (a, b) = sample_distinct_pairs(n, m, &mut rng).unwrap();
                assert!(a.iter().zip(&b).all(|(x, y)| x != y));
                let mut s = b.clone();
                s.sort_unstable();
                s.dedup();
                assert_eq!(s.len(), m);
            }
        }
    }
}
