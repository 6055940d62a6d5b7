//! Gradient-subset selection: pick k directions whose order-2 SH
//! design matrix has minimal condition number, ties broken by the
//! smaller symmetrized electrostatic potential.

use nalgebra::DMatrix;

use super::direction::{Direction, DirectionSet};
use super::sh::basis_row;
use crate::error::{Error, Result};

const L_DESIGN: usize = 2;
const N_DESIGN: usize = 6;
/// Enumerate all subsets when C(n, k) is at most this; otherwise use
/// farthest-axis seeding plus swap descent.
const EXHAUSTIVE_LIMIT: u128 = 1 << 20;
/// Condition numbers above this are treated as rank deficient.
const COND_LIMIT: f64 = 1e8;
const COND_TIE: f64 = 1e-9;

pub fn select_optimal_directions(candidates: &DirectionSet, k: usize) -> Result<DirectionSet> {
    let chosen = select_optimal_indices(candidates, k)?;
    candidates.subset(&chosen)
}

/// Same selection, returned as indices into `candidates` so callers
/// can map the choice back onto a full measurement table.
pub fn select_optimal_indices(candidates: &DirectionSet, k: usize) -> Result<Vec<usize>> {
    let n = candidates.len();
    if k > n {
        return Err(Error::invalid(format!(
            "requested {k} directions from a set of {n}"
        )));
    }
    if k < N_DESIGN {
        return Err(Error::invalid(format!(
            "need at least {N_DESIGN} directions for an order-{L_DESIGN} fit, got k={k}"
        )));
    }

    let rows: Vec<Vec<f64>> = candidates
        .directions()
        .iter()
        .map(|d| basis_row(L_DESIGN, d))
        .collect();

    let chosen = if binomial(n, k) <= EXHAUSTIVE_LIMIT {
        exhaustive_best(candidates.directions(), &rows, k)
    } else {
        swap_descent(candidates.directions(), &rows, k)
    };

    let (cond, _) = score(candidates.directions(), &rows, &chosen);
    if cond > COND_LIMIT {
        return Err(Error::IllConditioned(format!(
            "no well-conditioned {k}-subset (best condition number {cond:.3e})"
        )));
    }
    Ok(chosen)
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    let mut num: u128 = 1;
    for i in 0..k {
        num = num.saturating_mul((n - i) as u128) / (i as u128 + 1);
        if num > EXHAUSTIVE_LIMIT * 4 {
            return u128::MAX;
        }
    }
    num
}

/// (condition number of the k×6 design, electrostatic tie-break).
fn score(dirs: &[Direction], rows: &[Vec<f64>], subset: &[usize]) -> (f64, f64) {
    let mut b = DMatrix::zeros(subset.len(), N_DESIGN);
    for (r, &i) in subset.iter().enumerate() {
        for c in 0..N_DESIGN {
            b[(r, c)] = rows[i][c];
        }
    }
    let sv = b.singular_values();
    let (smax, smin) = (sv.max(), sv.min());
    let cond = if smin <= 0.0 { f64::INFINITY } else { smax / smin };

    let mut pot = 0.0;
    for (a, &i) in subset.iter().enumerate() {
        for &j in &subset[a + 1..] {
            let d = dirs[i];
            let e = dirs[j];
            let diff = ((d.x - e.x).powi(2) + (d.y - e.y).powi(2) + (d.z - e.z).powi(2)).sqrt();
            let sum = ((d.x + e.x).powi(2) + (d.y + e.y).powi(2) + (d.z + e.z).powi(2)).sqrt();
            pot += 1.0 / diff.max(1e-12) + 1.0 / sum.max(1e-12);
        }
    }
    (cond, pot)
}

fn better(a: (f64, f64), b: (f64, f64)) -> bool {
    if a.0.is_infinite() && b.0.is_infinite() {
        return a.1 < b.1;
    }
    let tied = (a.0 - b.0).abs() <= COND_TIE * a.0.max(b.0);
    if tied {
        a.1 < b.1
    } else {
        a.0 < b.0
    }
}

fn exhaustive_best(dirs: &[Direction], rows: &[Vec<f64>], k: usize) -> Vec<usize> {
    let n = dirs.len();
    let mut idx: Vec<usize> = (0..k).collect();
    let mut best = idx.clone();
    let mut best_score = score(dirs, rows, &idx);
    loop {
        // advance to next combination in lexicographic order
        let mut i = k;
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            if idx[i] != i + n - k {
                break;
            }
        }
        if idx[i] == i + n - k {
            return best;
        }
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
        let s = score(dirs, rows, &idx);
        if better(s, best_score) {
            best_score = s;
            best = idx.clone();
        }
    }
}

fn swap_descent(dirs: &[Direction], rows: &[Vec<f64>], k: usize) -> Vec<usize> {
    let n = dirs.len();
    // farthest-axis seeding from the first input direction
    let mut chosen = vec![0usize];
    while chosen.len() < k {
        let mut far = (0usize, -1.0);
        for c in 0..n {
            if chosen.contains(&c) {
                continue;
            }
            let gap = chosen
                .iter()
                .map(|&s| dirs[c].axis_angle_to(&dirs[s]))
                .fold(f64::INFINITY, f64::min);
            if gap > far.1 {
                far = (c, gap);
            }
        }
        chosen.push(far.0);
    }
    chosen.sort_unstable();

    let mut best_score = score(dirs, rows, &chosen);
    for _pass in 0..50 {
        let mut improved = false;
        for slot in 0..k {
            for c in 0..n {
                if chosen.contains(&c) {
                    continue;
                }
                let mut trial = chosen.clone();
                trial[slot] = c;
                trial.sort_unstable();
                let s = score(dirs, rows, &trial);
                if better(s, best_score) {
                    best_score = s;
                    chosen = trial;
                    improved = true;
                }
            }
        }
        if !improved {
            break;
        }
    }
    chosen
}
