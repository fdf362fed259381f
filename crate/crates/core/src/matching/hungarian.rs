//! Minimum-cost linear assignment (Kuhn-Munkres with potentials) and a
//! lexicographic tie-break over optimal assignments.

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// Column assigned to each row; `None` for rows left unmatched when the
    /// matrix has more rows than columns.
    pub row_to_col: Vec<Option<usize>>,
    /// Total cost over matched entries.
    pub cost: f64,
}

impl Assignment {
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.row_to_col
            .iter()
            .enumerate()
            .filter_map(|(r, c)| c.map(|c| (r, c)))
    }
}

/// Solves the assignment problem for a rectangular cost matrix.
///
/// Rectangular inputs are padded to square with a constant sentinel cost.
/// Among optimal assignments, the lexicographically smallest row-to-column
/// sequence is returned.
pub fn hungarian(cost: &[Vec<f64>]) -> Result<Assignment> {
    let rows = cost.len();
    if rows == 0 {
        return Ok(Assignment {
            row_to_col: vec![],
            cost: 0.0,
        });
    }
    let cols = cost[0].len();
    if cost.iter().any(|r| r.len() != cols) {
        return Err(Error::invalid("cost matrix rows have different lengths"));
    }
    let mut max_abs = 0.0f64;
    for (i, row) in cost.iter().enumerate() {
        for (j, c) in row.iter().enumerate() {
            if !c.is_finite() {
                return Err(Error::invalid(format!("non-finite cost at ({i}, {j})")));
            }
            max_abs = max_abs.max(c.abs());
        }
    }
    if cols == 0 {
        return Ok(Assignment {
            row_to_col: vec![None; rows],
            cost: 0.0,
        });
    }

    let n = rows.max(cols);
    let sentinel = 1.0 + 2.0 * max_abs;
    let square: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| if i < rows && j < cols { cost[i][j] } else { sentinel })
                .collect()
        })
        .collect();

    let perm = lexicographic_optimum(&square);
    let row_to_col: Vec<Option<usize>> = (0..rows)
        .map(|i| if perm[i] < cols { Some(perm[i]) } else { None })
        .collect();
    let total = row_to_col
        .iter()
        .enumerate()
        .filter_map(|(i, c)| c.map(|c| cost[i][c]))
        .sum();
    Ok(Assignment {
        row_to_col,
        cost: total,
    })
}

fn lexicographic_optimum(a: &[Vec<f64>]) -> Vec<usize> {
    let n = a.len();
    let (mut best, optimum) = solve_square(a);
    let tol = 1e-9 * (1.0 + optimum.abs());
    let mut fixed_cost = 0.0;
    let mut used = vec![false; n];
    for r in 0..n {
        let incumbent = best[r];
        for c in 0..incumbent {
            if used[c] {
                continue;
            }
            let rest_rows: Vec<usize> = (r + 1..n).collect();
            let rest_cols: Vec<usize> = (0..n).filter(|&j| !used[j] && j != c).collect();
            let sub: Vec<Vec<f64>> = rest_rows
                .iter()
                .map(|&i| rest_cols.iter().map(|&j| a[i][j]).collect())
                .collect();
            let (sub_perm, sub_cost) = solve_square(&sub);
            if fixed_cost + a[r][c] + sub_cost <= optimum + tol {
                best[r] = c;
                for (k, &i) in rest_rows.iter().enumerate() {
                    best[i] = rest_cols[sub_perm[k]];
                }
                break;
            }
        }
        used[best[r]] = true;
        fixed_cost += a[r][best[r]];
    }
    best
}

/// O(n³) shortest augmenting path solver for a square matrix. Returns the
/// row-to-column permutation and its cost.
fn solve_square(a: &[Vec<f64>]) -> (Vec<usize>, f64) {
    let n = a.len();
    if n == 0 {
        return (vec![], 0.0);
    }
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = a[i0 - 1][j - 1] - u[i0] - v[j];
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
    let mut perm = vec![0usize; n];
    for j in 1..=n {
        perm[p[j] - 1] = j - 1;
    }
    let cost = perm.iter().enumerate().map(|(i, &j)| a[i][j]).sum();
    (perm, cost)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_diagonal_gives_identity() {
        let c = vec![vec![0.0, 1.0, 1.0], vec![1.0, 0.0, 1.0], vec![1.0, 1.0, 0.0]];
        let a = hungarian(&c).unwrap();
        assert_eq!(a.row_to_col, vec![Some(0), Some(1), Some(2)]);
        assert_eq!(a.cost, 0.0);
    }

    #[test]
    fn anti_diagonal() {
        let a = hungarian(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(a.row_to_col, vec![Some(1), Some(0)]);
        assert_eq!(a.cost, 0.0);
    }

    #[test]
    fn all_ties_pick_identity() {
        let a = hungarian(&vec![vec![2.0; 4]; 4]).unwrap();
        assert_eq!(a.row_to_col, (0..4).map(Some).collect::<Vec<_>>());
    }

    #[test]
    fn rectangular_wide_and_tall() {
        let wide = hungarian(&[vec![5.0, 1.0, 3.0]]).unwrap();
        assert_eq!(wide.row_to_col, vec![Some(1)]);
        let tall = hungarian(&[vec![5.0], vec![1.0], vec![3.0]]).unwrap();
        assert_eq!(tall.row_to_col, vec![None, Some(0), None]);
        assert_eq!(tall.cost, 1.0);
    }

    #[test]
    fn non_finite_rejected() {
        assert!(hungarian(&[vec![f64::NAN]]).is_err());
        assert!(hungarian(&[vec![1.0, 2.0], vec![1.0]]).is_err());
    }
}
