//! Independent reference solvers for small instances.

use lipcalc_core::linalg::{for_each_subset, Matrix};
use lipcalc_core::{FiniteMetricMeasureSpace, ScalarField};

fn pair_slopes(space: &FiniteMetricMeasureSpace, u: &ScalarField) -> Vec<(usize, usize, f64)> {
    let n = space.len();
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            pairs.push((i, j, (u.get(i) - u.get(j)).abs() / space.dist(i, j)));
        }
    }
    pairs
}

/// Smallest `t` among the candidates `{0} ∪ {c_xy / 2}` for which the constant
/// gradient `g ≡ t` satisfies every pairwise constraint. This is the minimal
/// sup-norm of an admissible gradient.
pub fn hajlasz_sup_bruteforce(space: &FiniteMetricMeasureSpace, u: &ScalarField) -> f64 {
    let pairs = pair_slopes(space, u);
    let mut candidates: Vec<f64> = pairs.iter().map(|p| p.2 / 2.0).collect();
    candidates.push(0.0);
    candidates.sort_by(f64::total_cmp);
    candidates
        .into_iter()
        .find(|&t| pairs.iter().all(|&(i, j, _)| (u.get(i) - u.get(j)).abs() <= 2.0 * t * space.dist(i, j)))
        .unwrap()
}

/// Exact minimum of `Σ μ g²` subject to `g_x + g_y ≥ |u(x) − u(y)| / d(x, y)`
/// and `g ≥ 0`, found by enumerating candidate active sets of at most `n`
/// pair constraints and keeping the best KKT point that is feasible with
/// nonnegative multipliers. Exponential in the number of pairs; meant for
/// spaces of at most 6 points.
pub fn hajlasz_p2_active_sets(space: &FiniteMetricMeasureSpace, u: &ScalarField) -> (f64, Vec<f64>) {
    let n = space.len();
    let mu = space.weights();
    let pairs = pair_slopes(space, u);
    let energy = |g: &[f64]| (0..n).map(|x| mu[x] * g[x] * g[x]).sum::<f64>();
    let feasible = |g: &[f64]| pairs.iter().all(|&(i, j, c)| g[i] + g[j] >= c - 1e-12) && g.iter().all(|&v| v >= -1e-12);
    let mut best = (f64::INFINITY, vec![0.0; n]);
    if feasible(&best.1) {
        best.0 = 0.0;
    }
    for k in 1..=n.min(pairs.len()) {
        for_each_subset(pairs.len(), k, |s| {
            let m = n + k;
            let mut a = Matrix::zeros(m, m);
            let mut b = vec![0.0; m];
            for x in 0..n {
                a[(x, x)] = 2.0 * mu[x];
            }
            for (r, &e) in s.iter().enumerate() {
                let (i, j, c) = pairs[e];
                a[(i, n + r)] = -1.0;
                a[(j, n + r)] = -1.0;
                a[(n + r, i)] = 1.0;
                a[(n + r, j)] = 1.0;
                b[n + r] = c;
            }
            if let Some(sol) = a.solve(&b) {
                if sol[n..].iter().all(|&l| l >= -1e-12) && feasible(&sol[..n]) {
                    let e = energy(&sol[..n]);
                    if e < best.0 {
                        best = (e, sol[..n].to_vec());
                    }
                }
            }
        });
    }
    best
}
