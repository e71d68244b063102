//! Deterministic train/validation assignment.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Splits `group_of.len()` units (clips, scores) into train and validation
/// index sets, holding out `round(fraction * n)` units.
///
/// Units sharing a group id (one group per source recording) stay together
/// so near-identical neighboring clips cannot leak across the split; only
/// the single group straddling the quota boundary is divided, which keeps
/// the validation count exact. The assignment is a pure function of the
/// seed, the fraction, and the group layout.
pub fn split_grouped(group_of: &[usize], fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let n = group_of.len();
    let target = (fraction * n as f64).round() as usize;

    let mut groups: Vec<usize> = {
        let mut g: Vec<usize> = group_of.to_vec();
        g.sort_unstable();
        g.dedup();
        g
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    groups.shuffle(&mut rng);

    let mut validation = Vec::with_capacity(target);
    for group in groups {
        if validation.len() >= target {
            break;
        }
        let need = target - validation.len();
        validation.extend(
            (0..n).filter(|&i| group_of[i] == group).take(need),
        );
    }
    validation.sort_unstable();
    let train = (0..n).filter(|i| !validation.contains(i)).collect();
    (train, validation)
}
