//! Sequential minimal optimization over the soft-margin dual.
//!
//! Minimizes `D(α) = ½ Σ α_i α_j y_i y_j K_ij − Σ α_i` subject to
//! `0 ≤ α_i ≤ cap_i` and `Σ α_i y_i = 0`, by repeatedly taking the
//! maximal-violating pair and solving its two-variable subproblem in
//! closed form. Selection uses the gradient sets
//! `I_up = {α < cap, y = +1} ∪ {α > 0, y = −1}` (and the mirror `I_low`);
//! with `v_i = y_i − f_i`, optimality holds when
//! `max_{I_up} v − min_{I_low} v ≤ tol`, and the bias is the midpoint of
//! that bracket. The solver keeps `f_i = Σ_j α_j y_j K_ij` cached, so each
//! iteration costs O(n) after the O(n²) Gram precomputation done by the
//! caller. No randomness anywhere: results are a pure function of inputs.

/// Row-major symmetric Gram matrix access.
#[inline]
fn k(gram: &[f64], n: usize, i: usize, j: usize) -> f64 {
    gram[i * n + j]
}

pub(crate) struct SmoResult {
    pub alpha: Vec<f64>,
    pub bias: f64,
    /// False when the tolerance was not reached within `max_passes`
    /// iterations (the best iterate is still returned).
    pub converged: bool,
    pub iterations: usize,
}

/// Runs SMO to tolerance `tol` or `max_passes` pair updates.
/// `caps` are the per-point upper bounds (all equal to C unless class
/// rebalancing is on). Preconditions (validated by the caller): `y` is
/// ±1 with both classes present, caps positive, `gram` is n×n.
pub(crate) fn solve(
    gram: &[f64],
    n: usize,
    y: &[f64],
    caps: &[f64],
    tol: f64,
    max_passes: usize,
) -> SmoResult {
    let mut alpha = vec![0.0f64; n];
    let mut f = vec![0.0f64; n]; // f_i = Σ_j α_j y_j K_ij (no bias)
    let mut converged = false;
    let mut iterations = 0usize;
    let mut stalled = 0usize;

    // Maximal-violating pair: i maximizes v over I_up, j minimizes over
    // I_low. Returns (i, m, j, M); usize::MAX marks an empty set.
    let select = |alpha: &[f64], f: &[f64]| -> (usize, f64, usize, f64) {
        let mut i_up = usize::MAX;
        let mut m = f64::NEG_INFINITY;
        let mut i_low = usize::MAX;
        let mut big_m = f64::INFINITY;
        for idx in 0..n {
            let v = y[idx] - f[idx];
            let in_up =
                (y[idx] > 0.0 && alpha[idx] < caps[idx]) || (y[idx] < 0.0 && alpha[idx] > 0.0);
            let in_low =
                (y[idx] < 0.0 && alpha[idx] < caps[idx]) || (y[idx] > 0.0 && alpha[idx] > 0.0);
            if in_up && v > m {
                m = v;
                i_up = idx;
            }
            if in_low && v < big_m {
                big_m = v;
                i_low = idx;
            }
        }
        (i_up, m, i_low, big_m)
    };

    while iterations < max_passes {
        let (i, m, j, big_m) = select(&alpha, &f);
        if i == usize::MAX || j == usize::MAX || m - big_m <= tol {
            converged = i != usize::MAX && j != usize::MAX;
            break;
        }
        iterations += 1;

        let s = y[i] * y[j];
        let e_i = f[i] - y[i];
        let e_j = f[j] - y[j];

        // Feasible range for the updated α_j.
        let (lo, hi) = if s < 0.0 {
            (
                (alpha[j] - alpha[i]).max(0.0),
                (caps[i] + alpha[j] - alpha[i]).min(caps[j]),
            )
        } else {
            let gamma = alpha[i] + alpha[j];
            ((gamma - caps[i]).max(0.0), gamma.min(caps[j]))
        };
        if hi - lo <= 0.0 {
            // the violating pair cannot move; numerically stuck
            break;
        }

        let eta = k(gram, n, i, i) + k(gram, n, j, j) - 2.0 * k(gram, n, i, j);
        let a_j_new = if eta > 1e-12 {
            (alpha[j] + y[j] * (e_i - e_j) / eta).clamp(lo, hi)
        } else {
            // Non-positive curvature along the pair direction: the dual is
            // minimized at an endpoint. ΔD(δ) = g·δ + ½η·δ² with
            // g = −y_j(E_i − E_j).
            let g = -y[j] * (e_i - e_j);
            let obj = |a: f64| {
                let d = a - alpha[j];
                g * d + 0.5 * eta * d * d
            };
            if obj(lo) <= obj(hi) {
                lo
            } else {
                hi
            }
        };

        if (a_j_new - alpha[j]).abs() < 1e-14 {
            stalled += 1;
            if stalled > 3 {
                break; // no numeric progress left at this tolerance
            }
            continue;
        }
        stalled = 0;
        // Snap to the box bounds: the pair update keeps both α in bounds
        // mathematically, but rounding can leave residues like 1e-17 that
        // would keep a point in the selection sets and wedge the solver on
        // an un-movable pair.
        let snap = |a: f64, cap: f64| {
            if a < 1e-12 * cap.max(1.0) {
                0.0
            } else if a > cap - 1e-12 * cap.max(1.0) {
                cap
            } else {
                a
            }
        };
        let a_j_snapped = snap(a_j_new, caps[j]);
        let a_i_snapped = snap(alpha[i] - s * (a_j_new - alpha[j]), caps[i]);
        let delta_j = a_j_snapped - alpha[j];
        let delta_i = a_i_snapped - alpha[i];
        alpha[j] = a_j_snapped;
        alpha[i] = a_i_snapped;

        let (ci, cj) = (y[i] * delta_i, y[j] * delta_j);
        for (idx, fi) in f.iter_mut().enumerate() {
            *fi += ci * k(gram, n, i, idx) + cj * k(gram, n, j, idx);
        }
    }
    if iterations == max_passes {
        // check whether the last update happened to reach optimality
        let (i, m, j, big_m) = select(&alpha, &f);
        converged = i != usize::MAX && j != usize::MAX && m - big_m <= tol;
    }

    let bias = compute_bias(&alpha, &f, y, caps, n);
    SmoResult {
        alpha,
        bias,
        converged,
        iterations,
    }
}

/// Bias = midpoint of the optimality bracket `[M, m]`; falls back to the
/// free-vector average, then 0, when a side is empty.
fn compute_bias(alpha: &[f64], f: &[f64], y: &[f64], caps: &[f64], n: usize) -> f64 {
    let mut m = f64::NEG_INFINITY;
    let mut big_m = f64::INFINITY;
    for idx in 0..n {
        let v = y[idx] - f[idx];
        if (y[idx] > 0.0 && alpha[idx] < caps[idx]) || (y[idx] < 0.0 && alpha[idx] > 0.0) {
            m = m.max(v);
        }
        if (y[idx] < 0.0 && alpha[idx] < caps[idx]) || (y[idx] > 0.0 && alpha[idx] > 0.0) {
            big_m = big_m.min(v);
        }
    }
    if m.is_finite() && big_m.is_finite() {
        return 0.5 * (m + big_m);
    }
    let free: Vec<f64> = (0..n)
        .filter(|&idx| alpha[idx] > 0.0 && alpha[idx] < caps[idx])
        .map(|idx| y[idx] - f[idx])
        .collect();
    if !free.is_empty() {
        return free.iter().sum::<f64>() / free.len() as f64;
    }
    0.0
}
