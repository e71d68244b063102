use crate::{CostMatrix, DtwError, WarpingPath};

/// Optimal warping path and its total cost, by the standard dynamic program.
/// Ties prefer the diagonal step, then (+1, 0), then (0, +1).
pub fn dtw(cost: &CostMatrix) -> Result<(WarpingPath, f64), DtwError> {
    dtw_banded(cost, None)
}

/// [`dtw`] restricted to a Sakoe-Chiba band of the given radius around the
/// stretched diagonal, cutting the explored area for long sequences. The
/// effective radius is widened to at least |N - M| so a path always exists.
/// `None` searches the full matrix.
pub fn dtw_banded(
    cost: &CostMatrix,
    band_radius: Option<usize>,
) -> Result<(WarpingPath, f64), DtwError> {
    let n = cost.rows();
    let m = cost.cols();

    let radius = band_radius.map(|r| r.max(n.abs_diff(m)));
    let in_band = |i: usize, j: usize| -> bool {
        match radius {
            None => true,
            Some(r) => {
                // Band around the diagonal scaled to the matrix shape.
                let center = if n == 1 { j as f64 } else { i as f64 * (m - 1) as f64 / (n - 1) as f64 };
                (j as f64 - center).abs() <= r as f64
            }
        }
    };

    // Accumulated cost in f64; predecessor codes: 0 none, 1 diagonal,
    // 2 vertical (+1,0), 3 horizontal (0,+1).
    let mut acc = vec![f64::INFINITY; n * m];
    let mut pred = vec![0u8; n * m];

    for i in 0..n {
        for j in 0..m {
            if !in_band(i, j) {
                continue;
            }
            let idx = i * m + j;
            if i == 0 && j == 0 {
                acc[idx] = cost.at(0, 0);
                continue;
            }
            let diag = if i > 0 && j > 0 { acc[idx - m - 1] } else { f64::INFINITY };
            let vert = if i > 0 { acc[idx - m] } else { f64::INFINITY };
            let horiz = if j > 0 { acc[idx - 1] } else { f64::INFINITY };
            // `<=` on later candidates keeps the preference order on ties.
            let (mut best, mut code) = (diag, 1u8);
            if vert < best {
                best = vert;
                code = 2;
            }
            if horiz < best {
                best = horiz;
                code = 3;
            }
            if best.is_finite() {
                acc[idx] = best + cost.at(i, j);
                pred[idx] = code;
            }
        }
    }

    let total = acc[n * m - 1];
    debug_assert!(total.is_finite(), "band always admits at least one path");

    // Backtrack from the end.
    let mut pairs = Vec::with_capacity(n + m);
    let (mut i, mut j) = (n - 1, m - 1);
    loop {
        pairs.push((i, j));
        if i == 0 && j == 0 {
            break;
        }
        match pred[i * m + j] {
            1 => {
                i -= 1;
                j -= 1;
            }
            2 => i -= 1,
            3 => j -= 1,
            _ => unreachable!("every reachable cell has a predecessor"),
        }
    }
    pairs.reverse();
    Ok((WarpingPath::from_backtrack(pairs), total))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(rows: usize, cols: usize, data: &[f64]) -> CostMatrix {
        CostMatrix::new(data.to_vec(), rows, cols).unwrap()
    }

    #[test]
    fn identical_sequences_walk_the_diagonal() {
        // Zero diagonal, positive elsewhere.
        let c = matrix(3, 3, &[0.0, 5.0, 5.0, 5.0, 0.0, 5.0, 5.0, 5.0, 0.0]);
        let (path, total) = dtw(&c).unwrap();
        assert_eq!(path.pairs(), &[(0, 0), (1, 1), (2, 2)]);
        assert_eq!(total, 0.0);
    }

    #[test]
    fn two_by_two_example() {
        let c = matrix(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let (path, total) = dtw(&c).unwrap();
        assert_eq!(path.pairs(), &[(0, 0), (1, 1)]);
        assert_eq!(total, 0.0);
    }

    #[test]
    fn single_row_visits_every_column() {
        let c = matrix(1, 5, &[1.0, 2.0, 3.0, 4.0, 5.0]);
        let (path, total) = dtw(&c).unwrap();
        assert_eq!(path.pairs(), &[(0, 0), (0, 1), (0, 2), (0, 3), (0, 4)]);
        assert_eq!(total, 15.0);
    }

    #[test]
    fn ties_prefer_diagonal() {
        // All-equal costs: diagonal-first tie-breaking gives the pure
        // diagonal path on a square matrix.
        let c = matrix(3, 3, &[1.0; 9]);
        let (path, _) = dtw(&c).unwrap();
        assert_eq!(path.pairs(), &[(0, 0), (1, 1), (2, 2)]);
    }

    #[test]
    fn band_still_reaches_the_corner() {
        let c = matrix(6, 3, &[1.0; 18]);
        let (path, _) = dtw_banded(&c, Some(0)).unwrap();
        assert_eq!(path.pairs()[0], (0, 0));
        assert_eq!(path.end(), (5, 2));
    }

    #[test]
    fn wide_band_matches_unconstrained() {
        let data: Vec<f64> = (0..30).map(|x| ((x * 7919) % 13) as f64).collect();
        let c = matrix(5, 6, &data);
        let (p1, t1) = dtw(&c).unwrap();
        let (p2, t2) = dtw_banded(&c, Some(100)).unwrap();
        assert_eq!(p1, p2);
        assert_eq!(t1, t2);
    }
}
