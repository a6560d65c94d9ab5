//! Sequential minimal optimization for the binary soft-margin kernel SVM.
//!
//! Solves the dual problem
//!   minimize    0.5 * sum_ij a_i a_j y_i y_j K_ij  -  sum_i a_i
//!   subject to  0 <= a_i <= C,   sum_i y_i a_i = 0
//! by repeatedly optimizing one pair of coefficients analytically.
//!
//! The working-pair selection follows the classic two-level heuristic
//! (examine KKT violators, pick the partner maximizing |E1 - E2|), with one
//! deliberate change: every scan runs in index order instead of starting at
//! a random position, so a given problem always takes the same path and
//! produces the same coefficients.

/// Dense symmetric kernel matrix for one binary subproblem.
#[derive(Debug, Clone)]
pub struct KernelMatrix {
    n: usize,
    data: Vec<f64>,
}

impl KernelMatrix {
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let v = f(i, j);
                data[i * n + j] = v;
                data[j * n + i] = v;
            }
        }
        KernelMatrix { n, data }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn n(&self) -> usize {
        self.n
    }
}

/// Solver output: dual coefficients, bias, and how training stopped.
#[derive(Debug, Clone)]
pub struct SmoResult {
    pub alpha: Vec<f64>,
    /// Bias in the decision function f(x) = sum_i alpha_i y_i K(x_i, x) + b.
    pub b: f64,
    /// True when a full sweep found no KKT violation beyond `tol`.
    pub converged: bool,
    /// Full-set sweeps consumed.
    pub full_sweeps: usize,
}

/// Minimum relative progress a step must make to count; guards against
/// infinite loops on ill-conditioned pairs without limiting final precision.
const STEP_EPS: f64 = 1e-12;

struct Solver<'a> {
    kernel: &'a KernelMatrix,
    y: &'a [f64],
    c: f64,
    tol: f64,
    alpha: Vec<f64>,
    /// error[i] = f(x_i) - y_i, kept current for every sample.
    error: Vec<f64>,
    b: f64,
}

impl<'a> Solver<'a> {
    fn new(kernel: &'a KernelMatrix, y: &'a [f64], c: f64, tol: f64) -> Self {
        let n = y.len();
        Solver {
            kernel,
            y,
            c,
            tol,
            alpha: vec![0.0; n],
            // With all alphas zero, f(x) = 0 everywhere.
            error: y.iter().map(|&yi| -yi).collect(),
            b: 0.0,
        }
    }

    #[inline]
    fn non_bound(&self, i: usize) -> bool {
        self.alpha[i] > 0.0 && self.alpha[i] < self.c
    }

    /// Jointly optimize (i1, i2). Returns true if a real step was taken.
    fn take_step(&mut self, i1: usize, i2: usize) -> bool {
        if i1 == i2 {
            return false;
        }
        let (a1_old, a2_old) = (self.alpha[i1], self.alpha[i2]);
        let (y1, y2) = (self.y[i1], self.y[i2]);
        let (e1, e2) = (self.error[i1], self.error[i2]);
        let s = y1 * y2;

        let (lo, hi) = if (y1 - y2).abs() > 0.5 {
            ((a2_old - a1_old).max(0.0), (self.c + a2_old - a1_old).min(self.c))
        } else {
            ((a1_old + a2_old - self.c).max(0.0), (a1_old + a2_old).min(self.c))
        };
        if lo >= hi {
            return false;
        }

        let k11 = self.kernel.at(i1, i1);
        let k12 = self.kernel.at(i1, i2);
        let k22 = self.kernel.at(i2, i2);
        let eta = k11 + k22 - 2.0 * k12;

        let mut a2 = if eta > 0.0 {
            (a2_old + y2 * (e1 - e2) / eta).clamp(lo, hi)
        } else {
            // Curvature vanishes (duplicate points or a degenerate kernel):
            // the objective is linear along the constraint segment, so the
            // minimum sits at an endpoint.
            let obj_lo = self.line_objective(i1, i2, lo);
            let obj_hi = self.line_objective(i1, i2, hi);
            if obj_lo < obj_hi - STEP_EPS {
                lo
            } else if obj_hi < obj_lo - STEP_EPS {
                hi
            } else {
                a2_old
            }
        };
        if (a2 - a2_old).abs() < STEP_EPS * (a2 + a2_old + STEP_EPS) {
            return false;
        }
        if a2 < 1e-12 {
            a2 = 0.0;
        } else if a2 > self.c - 1e-12 {
            a2 = self.c;
        }
        // a1 must be snapped like a2: a value stranded within rounding
        // distance of a bound still counts as interior, so the threshold
        // update would anchor b to its error and later sweeps would keep
        // "fixing" the same microscopic segment without ever converging.
        let mut a1 = (a1_old + s * (a2_old - a2)).clamp(0.0, self.c);
        if a1 < 1e-12 {
            a1 = 0.0;
        } else if a1 > self.c - 1e-12 {
            a1 = self.c;
        }

        let d1 = y1 * (a1 - a1_old);
        let d2 = y2 * (a2 - a2_old);
        let b_old = self.b;
        let b1 = b_old - e1 - d1 * k11 - d2 * k12;
        let b2 = b_old - e2 - d1 * k12 - d2 * k22;
        self.b = if a1 > 0.0 && a1 < self.c {
            b1
        } else if a2 > 0.0 && a2 < self.c {
            b2
        } else {
            0.5 * (b1 + b2)
        };

        self.alpha[i1] = a1;
        self.alpha[i2] = a2;
        let db = self.b - b_old;
        let row1 = self.kernel.row(i1);
        let row2 = self.kernel.row(i2);
        for i in 0..self.error.len() {
            self.error[i] += d1 * row1[i] + d2 * row2[i] + db;
        }
        true
    }

    /// Dual objective restricted to the constraint line through (i1, i2),
    /// parameterized by the candidate value `a2` and dropping terms that do
    /// not depend on it. Only used in the zero-curvature branch.
    fn line_objective(&self, i1: usize, i2: usize, a2: f64) -> f64 {
        let (a1_old, a2_old) = (self.alpha[i1], self.alpha[i2]);
        let (y1, y2) = (self.y[i1], self.y[i2]);
        let s = y1 * y2;
        let a1 = a1_old + s * (a2_old - a2);
        let k11 = self.kernel.at(i1, i1);
        let k12 = self.kernel.at(i1, i2);
        let k22 = self.kernel.at(i2, i2);
        // v_i = f(x_i) - b - y1 a1_old K_1i - y2 a2_old K_2i collects the
        // frozen part of the margin at x_i.
        let v1 = self.error[i1] + self.y[i1]
            - self.b
            - y1 * a1_old * k11
            - y2 * a2_old * k12;
        let v2 = self.error[i2] + self.y[i2]
            - self.b
            - y1 * a1_old * k12
            - y2 * a2_old * k22;
        0.5 * k11 * a1 * a1 + 0.5 * k22 * a2 * a2 + s * k12 * a1 * a2 + y1 * a1 * v1
            + y2 * a2 * v2
            - a1
            - a2
    }

    /// Check sample i2 against the KKT conditions; if it violates them,
    /// try partners in the documented deterministic order.
    fn examine(&mut self, i2: usize) -> bool {
        let y2 = self.y[i2];
        let a2 = self.alpha[i2];
        let e2 = self.error[i2];
        let r2 = e2 * y2;
        let violates = (r2 < -self.tol && a2 < self.c) || (r2 > self.tol && a2 > 0.0);
        if !violates {
            return false;
        }

        // First choice: the non-bound partner with the largest |E1 - E2|,
        // ties going to the lowest index.
        let mut best: Option<(usize, f64)> = None;
        for i in 0..self.alpha.len() {
            if i != i2 && self.non_bound(i) {
                let gap = (self.error[i] - e2).abs();
                if best.map_or(true, |(_, g)| gap > g) {
                    best = Some((i, gap));
                }
            }
        }
        if let Some((i1, _)) = best {
            if self.take_step(i1, i2) {
                return true;
            }
        }
        // Second: every non-bound sample in index order.
        for i1 in 0..self.alpha.len() {
            if self.non_bound(i1) && self.take_step(i1, i2) {
                return true;
            }
        }
        // Last: everything in index order.
        for i1 in 0..self.alpha.len() {
            if self.take_step(i1, i2) {
                return true;
            }
        }
        false
    }
}

/// Run the solver. `y` must be +1/-1; `max_passes` caps the number of
/// full-set sweeps, and the result is flagged converged once a full sweep
/// finds nothing to fix.
pub fn solve(
    kernel: &KernelMatrix,
    y: &[f64],
    c: f64,
    tol: f64,
    max_passes: usize,
) -> SmoResult {
    assert_eq!(kernel.n(), y.len(), "kernel size must match label count");
    debug_assert!(y.iter().all(|&v| v == 1.0 || v == -1.0));
    let n = y.len();
    let mut solver = Solver::new(kernel, y, c, tol);
    let mut examine_all = true;
    let mut num_changed = 0usize;
    let mut full_sweeps = 0usize;
    let mut converged = false;

    while num_changed > 0 || examine_all {
        num_changed = 0;
        if examine_all {
            full_sweeps += 1;
            for i in 0..n {
                if solver.examine(i) {
                    num_changed += 1;
                }
            }
            if num_changed == 0 {
                converged = true;
                break;
            }
            examine_all = false;
            if full_sweeps >= max_passes {
                break;
            }
        } else {
            for i in 0..n {
                if solver.non_bound(i) && solver.examine(i) {
                    num_changed += 1;
                }
            }
            if num_changed == 0 {
                examine_all = true;
            }
        }
    }

    SmoResult { alpha: solver.alpha, b: solver.b, converged, full_sweeps }
}

/// Dual objective in maximization form:
/// sum_i a_i - 0.5 sum_ij a_i a_j y_i y_j K_ij.
pub fn dual_objective(kernel: &KernelMatrix, y: &[f64], alpha: &[f64]) -> f64 {
    let n = y.len();
    let mut quad = 0.0;
    for i in 0..n {
        if alpha[i] == 0.0 {
            continue;
        }
        let row = kernel.row(i);
        for j in 0..n {
            if alpha[j] != 0.0 {
                quad += alpha[i] * alpha[j] * y[i] * y[j] * row[j];
            }
        }
    }
    alpha.iter().sum::<f64>() - 0.5 * quad
}

/// Primal objective 0.5 ||w||^2 + C sum_i hinge_i evaluated from the dual
/// variables; together with [`dual_objective`] this bounds suboptimality.
pub fn primal_objective(
    kernel: &KernelMatrix,
    y: &[f64],
    alpha: &[f64],
    b: f64,
    c: f64,
) -> f64 {
    let n = y.len();
    let mut w_norm_sq = 0.0;
    let mut hinge_sum = 0.0;
    for i in 0..n {
        let row = kernel.row(i);
        let mut f_i = b;
        for j in 0..n {
            if alpha[j] != 0.0 {
                f_i += alpha[j] * y[j] * row[j];
                if alpha[i] != 0.0 {
                    w_norm_sq += alpha[i] * alpha[j] * y[i] * y[j] * row[j];
                }
            }
        }
        hinge_sum += (1.0 - y[i] * f_i).max(0.0);
    }
    0.5 * w_norm_sq + c * hinge_sum
}

/// Decision values f(x_i) for every training sample, recomputed from
/// scratch (not from the solver's running error cache).
pub fn decision_values(kernel: &KernelMatrix, y: &[f64], alpha: &[f64], b: f64) -> Vec<f64> {
    (0..y.len())
        .map(|i| {
            let row = kernel.row(i);
            let mut f = b;
            for j in 0..y.len() {
                if alpha[j] != 0.0 {
                    f += alpha[j] * y[j] * row[j];
                }
            }
            f
        })
        .collect()
}
