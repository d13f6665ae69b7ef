//! Box-constrained Nelder–Mead.
//!
//! Trial points are projected onto the box before evaluation, which keeps the
//! simplex feasible without penalty terms. Convergence is declared when every
//! vertex lies within `tolerance` of the best one in every coordinate.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NelderMeadOptions {
    pub max_iterations: usize,
    pub tolerance: f64,
    pub initial_step: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        NelderMeadOptions {
            max_iterations: 2000,
            tolerance: 1e-4,
            initial_step: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

fn project(x: &mut [f64], lower: &[f64], upper: &[f64]) {
    for ((xi, lo), hi) in x.iter_mut().zip(lower).zip(upper) {
        *xi = xi.clamp(*lo, *hi);
    }
}

fn combine(a: &[f64], b: &[f64], t: f64) -> Vec<f64> {
    // a + t (b − a)
    a.iter().zip(b).map(|(ai, bi)| ai + t * (bi - ai)).collect()
}

pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    start: &[f64],
    lower: &[f64],
    upper: &[f64],
    opts: &NelderMeadOptions,
) -> NelderMeadResult {
    let n = start.len();
    let mut evaluations = 0;
    let mut eval = |x: &mut Vec<f64>| {
        project(x, lower, upper);
        evaluations += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let mut x0 = start.to_vec();
    let v0 = eval(&mut x0);
    simplex.push((x0.clone(), v0));
    for i in 0..n {
        let mut x = x0.clone();
        x[i] += if x[i] + opts.initial_step <= upper[i] {
            opts.initial_step
        } else {
            -opts.initial_step
        };
        let v = eval(&mut x);
        simplex.push((x, v));
    }

    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iterations {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = &simplex[0].0;
        let diameter = simplex[1..]
            .iter()
            .flat_map(|(x, _)| x.iter().zip(best).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if diameter < opts.tolerance {
            converged = true;
            break;
        }
        iterations += 1;

        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|(x, _)| x[j]).sum::<f64>() / n as f64)
            .collect();
        let (worst, worst_v) = simplex[n].clone();
        let second_worst_v = simplex[n - 1].1;
        let best_v = simplex[0].1;

        let mut reflected = combine(&centroid, &worst, -1.0);
        let reflected_v = eval(&mut reflected);
        if reflected_v < best_v {
            let mut expanded = combine(&centroid, &worst, -2.0);
            let expanded_v = eval(&mut expanded);
            simplex[n] = if expanded_v < reflected_v {
                (expanded, expanded_v)
            } else {
                (reflected, reflected_v)
            };
            continue;
        }
        if reflected_v < second_worst_v {
            simplex[n] = (reflected, reflected_v);
            continue;
        }
        let (mut contracted, limit) = if reflected_v < worst_v {
            (combine(&centroid, &reflected, 0.5), reflected_v)
        } else {
            (combine(&centroid, &worst, 0.5), worst_v)
        };
        let contracted_v = eval(&mut contracted);
        if contracted_v < limit {
            simplex[n] = (contracted, contracted_v);
            continue;
        }
        let best = simplex[0].0.clone();
        for vertex in simplex.iter_mut().skip(1) {
            let mut x = combine(&best, &vertex.0, 0.5);
            let v = eval(&mut x);
            *vertex = (x, v);
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, value) = simplex.swap_remove(0);
    NelderMeadResult {
        x,
        value,
        iterations,
        evaluations,
        converged,
    }
}
