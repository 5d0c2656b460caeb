//! Maximum-weight assignment (Hungarian method with potentials, O(n³)).

/// Maximum-weight perfect assignment on a square matrix.
/// Returns `col_of_row` and the total weight.
pub fn max_weight_assignment(weights: &[Vec<i128>]) -> (Vec<usize>, i128) {
    let n = weights.len();
    if n == 0 {
        return (Vec::new(), 0);
    }
    debug_assert!(weights.iter().all(|row| row.len() == n), "matrix must be square");
    const INF: i128 = i128::MAX / 4;
    // Minimise negated weights; indices are 1-based with 0 as the sentinel.
    let cost = |i: usize, j: usize| -weights[i - 1][j - 1];
    let mut u = vec![0i128; n + 1];
    let mut v = vec![0i128; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![INF; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = INF;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost(i0, j) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut col_of_row = vec![0; n];
    for j in 1..=n {
        col_of_row[p[j] - 1] = j - 1;
    }
    let total = (0..n).map(|i| weights[i][col_of_row[i]]).sum();
    (col_of_row, total)
}

/// Best total over a rectangular matrix where `None` marks pairs that may not
/// be used. Leaving a row or column unpaired is worth zero, so forbidden and
/// padding cells enter the square problem as zero.
pub fn best_partial_total(weights: &[Vec<Option<i128>>], rows: &[usize], cols: &[usize]) -> i128 {
    let n = rows.len().max(cols.len());
    let square: Vec<Vec<i128>> = (0..n)
        .map(|a| {
            (0..n)
                .map(|b| match (rows.get(a), cols.get(b)) {
                    (Some(&i), Some(&j)) => weights[i][j].unwrap_or(0).max(0),
                    _ => 0,
                })
                .collect()
        })
        .collect();
    max_weight_assignment(&square).1
}
