//! Exact minimum-cost perfect matching on a square cost matrix via shortest
//! augmenting paths with dual potentials, O(n^3) overall.

use crate::error::{Error, Result};

/// Returns (assignment, total cost) where `assignment[row] = column`.
/// `cost` is row-major n x n and must be finite.
pub fn min_cost_assignment(cost: &[f64], n: usize) -> Result<(Vec<usize>, f64)> {
    if n == 0 || cost.len() != n * n {
        return Err(Error::InvalidArgument(format!(
            "assignment: need n*n costs, got {} for n={n}",
            cost.len()
        )));
    }
    if cost.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: "assignment: cost matrix".into(),
        });
    }

    // 1-indexed arrays with a virtual column 0, after the classic
    // formulation: p[j] is the row matched to column j
    let inf = f64::INFINITY;
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];

    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
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
        // augment along the found path
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut assignment = vec![0usize; n];
    let mut total = 0.0;
    for j in 1..=n {
        assignment[p[j] - 1] = j - 1;
        total += cost[(p[j] - 1) * n + (j - 1)];
    }
    Ok((assignment, total))
}
