//! Two-phase revised simplex for small dense standard-form programs:
//! min c.z subject to A z = b, z >= 0.
//!
//! Built for the equality-constrained reconstruction problems in this crate:
//! a few hundred rows and columns, always bounded below (costs are
//! nonnegative), often highly degenerate because of duplicated and unit
//! columns. Choices that matter here:
//!
//! * explicit basis inverse with rank-1 pivot updates, refactorized from a
//!   fresh LU every [`REFACTOR_EVERY`] pivots;
//! * Dantzig pricing with lowest-index tie-breaking, switching permanently to
//!   Bland's rule once the objective stalls, which rules out cycling;
//! * a two-pass ratio test in the spirit of Harris: rows may overshoot the
//!   minimum ratio by a bounded feasibility slack so the largest eligible
//!   pivot element wins, keeping the iterated inverse well conditioned;
//! * rows are flipped up front so the right-hand side is nonnegative, and a
//!   scan for exact unit columns supplies a starting basis without artificial
//!   variables whenever one exists (the reconstruction problems always carry
//!   an identity block, so phase 1 is usually skipped);
//! * the reported basic solution is re-solved from a fresh factorization of
//!   the final basis, not from the iterated inverse;
//! * if the fast configuration still breaks down, the whole solve reruns
//!   once in a guarded mode (Bland's rule throughout, refactorization after
//!   every pivot) that trades speed for numerical safety.
//!
//! Every pivoting rule is deterministic, so identical inputs produce
//! identical solutions bit for bit.

use nalgebra::{DMatrix, DVector};

pub(crate) struct StandardLp {
    /// m x n constraint matrix.
    pub matrix: DMatrix<f64>,
    /// n nonnegative costs.
    pub costs: DVector<f64>,
    /// m right-hand side.
    pub rhs: DVector<f64>,
}

#[derive(Debug)]
pub(crate) struct SimplexSolution {
    pub solution: DVector<f64>,
    pub objective: f64,
    pub iterations: usize,
}

#[derive(Debug)]
pub(crate) enum SimplexFailure {
    /// Phase 1 finished with this residual mass left on the artificials.
    Infeasible { gap: f64 },
    /// Iteration cap reached.
    Stalled { iterations: usize },
    /// Singular basis, unbounded ray, or lost feasibility: a numerical
    /// breakdown rather than a property of the input.
    Breakdown { iterations: usize },
}

const REFACTOR_EVERY: usize = 64;
const STALL_LIMIT: usize = 100;
/// Pivot elements below this fraction of the column's largest entry are
/// rejected as elimination noise.
const RELATIVE_PIVOT: f64 = 1e-8;
/// A chosen pivot below this fraction of the column's largest entry is
/// legal but ill-conditioned; when the inverse is stale, refactorize and
/// re-price instead of committing to it.
const SUSPECT_PIVOT: f64 = 1e-4;

pub(crate) fn solve(
    lp: &StandardLp,
    feasibility_tol: f64,
) -> Result<SimplexSolution, SimplexFailure> {
    match run(lp, feasibility_tol, false) {
        Ok(solution) => Ok(solution),
        // The guarded rerun's verdict supersedes the fast attempt's.
        Err(_) => run(lp, feasibility_tol, true),
    }
}

fn run(
    lp: &StandardLp,
    feasibility_tol: f64,
    guarded: bool,
) -> Result<SimplexSolution, SimplexFailure> {
    let m = lp.matrix.nrows();
    let n = lp.matrix.ncols();
    assert!(m > 0 && n > 0, "empty program");
    assert_eq!(lp.costs.len(), n);
    assert_eq!(lp.rhs.len(), m);

    let mut a = lp.matrix.clone();
    let mut b = lp.rhs.clone();
    for i in 0..m {
        if b[i] < 0.0 {
            b[i] = -b[i];
            for j in 0..n {
                a[(i, j)] = -a[(i, j)];
            }
        }
    }

    let scale = 1.0 + a.amax();
    let rhs_scale = 1.0 + b.amax();
    let mut solver = Solver {
        m,
        n,
        a,
        b,
        costs: lp.costs.clone(),
        basis: (n..n + m).collect(),
        in_basis: {
            let mut v = vec![false; n + m];
            for slot in v.iter_mut().skip(n) {
                *slot = true;
            }
            v
        },
        artificial_left: vec![false; m],
        binv: DMatrix::identity(m, m),
        xb: DVector::zeros(m),
        iterations: 0,
        pivots_since_refactor: 0,
        needs_refactor: false,
        bland: guarded,
        stall: 0,
        best_objective: f64::INFINITY,
        max_iters: 200 * (m + n) + 2000,
        refactor_every: if guarded { 1 } else { REFACTOR_EVERY },
        pivot_tol: 1e-9 * scale,
        evict_tol: 1e-6 * scale,
        rc_tol: 1e-9 * (1.0 + lp.costs.amax()),
        drop_tol: 1e-9 * rhs_scale,
        feas_check_tol: 1e-7 * rhs_scale,
    };
    solver.xb = solver.b.clone();

    if !solver.install_unit_basis() {
        solver.optimize(true)?;
        let gap = solver.artificial_mass();
        if gap > feasibility_tol {
            return Err(SimplexFailure::Infeasible { gap });
        }
        for i in 0..m {
            if solver.basis[i] >= n {
                solver.xb[i] = 0.0;
            }
        }
        solver.bland = guarded;
        solver.stall = 0;
        solver.best_objective = f64::INFINITY;
    }
    solver.optimize(false)?;
    solver.finalize()
}

struct Solver {
    m: usize,
    n: usize,
    /// Rows pre-flipped so b >= 0.
    a: DMatrix<f64>,
    b: DVector<f64>,
    costs: DVector<f64>,
    /// Basis column per row; indices >= n are the artificial e_i columns.
    basis: Vec<usize>,
    in_basis: Vec<bool>,
    /// Artificials never re-enter once pivoted out.
    artificial_left: Vec<bool>,
    binv: DMatrix<f64>,
    xb: DVector<f64>,
    iterations: usize,
    pivots_since_refactor: usize,
    needs_refactor: bool,
    bland: bool,
    stall: usize,
    best_objective: f64,
    max_iters: usize,
    /// Pivots between basis-inverse refactorizations; 1 in guarded mode.
    refactor_every: usize,
    pivot_tol: f64,
    /// Looser than pivot_tol: phase 2 evicts any artificial it can reach
    /// through an element this large, even when a better pivot exists.
    evict_tol: f64,
    rc_tol: f64,
    drop_tol: f64,
    feas_check_tol: f64,
}

impl Solver {
    /// Scans for exact unit columns covering every row; installs them as the
    /// starting basis when possible, making phase 1 unnecessary.
    fn install_unit_basis(&mut self) -> bool {
        let mut row_col = vec![usize::MAX; self.m];
        'cols: for j in 0..self.n {
            let mut unit_row = None;
            for i in 0..self.m {
                let v = self.a[(i, j)];
                if v != 0.0 {
                    if unit_row.is_some() || v != 1.0 {
                        continue 'cols;
                    }
                    unit_row = Some(i);
                }
            }
            if let Some(i) = unit_row {
                if row_col[i] == usize::MAX {
                    row_col[i] = j;
                }
            }
        }
        if row_col.iter().any(|&c| c == usize::MAX) {
            return false;
        }
        for slot in self.in_basis.iter_mut() {
            *slot = false;
        }
        for (i, &j) in row_col.iter().enumerate() {
            self.basis[i] = j;
            self.in_basis[j] = true;
        }
        self.binv = DMatrix::identity(self.m, self.m);
        self.xb = self.b.clone();
        true
    }

    fn basic_cost(&self, var: usize, phase1: bool) -> f64 {
        if phase1 {
            if var >= self.n {
                1.0
            } else {
                0.0
            }
        } else if var >= self.n {
            0.0
        } else {
            self.costs[var]
        }
    }

    fn artificial_mass(&self) -> f64 {
        (0..self.m)
            .filter(|&i| self.basis[i] >= self.n)
            .map(|i| self.xb[i].max(0.0))
            .sum()
    }

    fn optimize(&mut self, phase1: bool) -> Result<(), SimplexFailure> {
        loop {
            if self.needs_refactor || self.pivots_since_refactor >= self.refactor_every {
                self.refactorize()?;
            }
            if self.iterations >= self.max_iters {
                return Err(SimplexFailure::Stalled {
                    iterations: self.iterations,
                });
            }

            let cb = DVector::from_fn(self.m, |i, _| self.basic_cost(self.basis[i], phase1));
            let objective = cb.dot(&self.xb);
            if objective < self.best_objective - 1e-12 * (1.0 + self.best_objective.abs()) {
                self.best_objective = objective;
                self.stall = 0;
            } else {
                self.stall += 1;
                if self.stall > STALL_LIMIT {
                    self.bland = true;
                }
            }

            let y = self.binv.tr_mul(&cb);
            let Some(q) = self.price(&y, phase1) else {
                return Ok(());
            };
            let w = self.tableau_column(q);
            let r = self.choose_leaving(&w, phase1)?;
            // A small pivot relative to the column is only trustworthy when
            // computed from a fresh inverse; otherwise redo the iteration
            // after refactorizing.
            if w[r].abs() < SUSPECT_PIVOT * w.amax() && self.pivots_since_refactor > 0 {
                self.needs_refactor = true;
                continue;
            }
            self.pivot(q, r, &w);
            self.iterations += 1;
        }
    }

    fn price(&self, y: &DVector<f64>, phase1: bool) -> Option<usize> {
        let limit = if phase1 { self.n + self.m } else { self.n };
        let mut best: Option<(usize, f64)> = None;
        for j in 0..limit {
            if self.in_basis[j] {
                continue;
            }
            if j >= self.n && self.artificial_left[j - self.n] {
                continue;
            }
            let rc = if j < self.n {
                self.basic_cost(j, phase1) - self.a.column(j).dot(y)
            } else {
                1.0 - y[j - self.n]
            };
            if rc < -self.rc_tol {
                if self.bland {
                    return Some(j);
                }
                if best.map_or(true, |(_, best_rc)| rc < best_rc) {
                    best = Some((j, rc));
                }
            }
        }
        best.map(|(j, _)| j)
    }

    fn tableau_column(&self, q: usize) -> DVector<f64> {
        if q < self.n {
            &self.binv * self.a.column(q)
        } else {
            self.binv.column(q - self.n).clone_owned()
        }
    }

    /// Smallest acceptable pivot element: an absolute floor plus a fraction
    /// of the column's largest entry, so entries that are pure elimination
    /// noise (relative size near machine epsilon times the basis condition
    /// number) never become pivots.
    fn pivot_floor(&self, w: &DVector<f64>) -> f64 {
        self.pivot_tol.max(RELATIVE_PIVOT * w.amax())
    }

    fn choose_leaving(&self, w: &DVector<f64>, phase1: bool) -> Result<usize, SimplexFailure> {
        // In phase 2, pivot out any basic artificial the column can reach;
        // such rows sit at value zero, so the step is degenerate and keeps
        // feasibility while cleaning the basis.
        if !phase1 {
            for i in 0..self.m {
                if self.basis[i] >= self.n && w[i].abs() > self.evict_tol {
                    return Ok(i);
                }
            }
        }
        let floor = self.pivot_floor(w);

        if self.bland {
            // Exact minimum ratio, lowest basis index on ties: the cycling-proof
            // rule, used whenever progress has stalled.
            let mut best: Option<(usize, f64)> = None;
            for i in 0..self.m {
                if w[i] <= floor {
                    continue;
                }
                let ratio = self.xb[i].max(0.0) / w[i];
                let better = match best {
                    None => true,
                    Some((bi, br)) => {
                        ratio < br || (ratio == br && self.basis[i] < self.basis[bi])
                    }
                };
                if better {
                    best = Some((i, ratio));
                }
            }
            return best.map(|(i, _)| i).ok_or(SimplexFailure::Breakdown {
                iterations: self.iterations,
            });
        }

        // Two-pass ratio test in the spirit of Harris. Pass 1 finds the
        // tightest ratio, relaxed by a feasibility slack small enough that
        // even [`REFACTOR_EVERY`] consecutive overshoots stay far inside
        // feas_check_tol. Pass 2 takes the largest pivot element among rows
        // within the relaxed bound, which keeps the iterated inverse stable.
        let slack = self.drop_tol;
        let mut bound = f64::INFINITY;
        for i in 0..self.m {
            if w[i] > floor {
                bound = bound.min((self.xb[i].max(0.0) + slack) / w[i]);
            }
        }
        if !bound.is_finite() {
            return Err(SimplexFailure::Breakdown {
                iterations: self.iterations,
            });
        }
        let mut best: Option<usize> = None;
        for i in 0..self.m {
            if w[i] <= floor {
                continue;
            }
            if self.xb[i].max(0.0) / w[i] <= bound && best.map_or(true, |bi| w[i] > w[bi]) {
                best = Some(i);
            }
        }
        // The bound-attaining row always passes its own test, so pass 2
        // cannot come up empty.
        best.ok_or(SimplexFailure::Breakdown {
            iterations: self.iterations,
        })
    }

    fn pivot(&mut self, q: usize, r: usize, w: &DVector<f64>) {
        let wr = w[r];
        let theta = self.xb[r].max(0.0) / wr;
        for k in 0..self.m {
            self.binv[(r, k)] /= wr;
        }
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let f = w[i];
            if f != 0.0 {
                for k in 0..self.m {
                    self.binv[(i, k)] -= f * self.binv[(r, k)];
                }
            }
        }
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let v = self.xb[i] - theta * w[i];
            self.xb[i] = if v < 0.0 {
                if v < -self.drop_tol {
                    self.needs_refactor = true;
                }
                0.0
            } else {
                v
            };
        }
        self.xb[r] = theta;

        let leaving = self.basis[r];
        self.in_basis[leaving] = false;
        if leaving >= self.n {
            self.artificial_left[leaving - self.n] = true;
        }
        self.basis[r] = q;
        self.in_basis[q] = true;
        self.pivots_since_refactor += 1;
    }

    fn basis_matrix(&self) -> DMatrix<f64> {
        let mut bmat = DMatrix::zeros(self.m, self.m);
        for (i, &j) in self.basis.iter().enumerate() {
            if j < self.n {
                bmat.set_column(i, &self.a.column(j));
            } else {
                bmat[(j - self.n, i)] = 1.0;
            }
        }
        bmat
    }

    fn refactorize(&mut self) -> Result<(), SimplexFailure> {
        let lu = self.basis_matrix().lu();
        let binv = lu.try_inverse().ok_or(SimplexFailure::Breakdown {
            iterations: self.iterations,
        })?;
        self.binv = binv;
        let xb = &self.binv * &self.b;
        for i in 0..self.m {
            if xb[i] < -self.feas_check_tol {
                return Err(SimplexFailure::Breakdown {
                    iterations: self.iterations,
                });
            }
        }
        self.xb = xb.map(|v| v.max(0.0));
        self.pivots_since_refactor = 0;
        self.needs_refactor = false;
        Ok(())
    }

    fn finalize(self) -> Result<SimplexSolution, SimplexFailure> {
        let lu = self.basis_matrix().lu();
        let xb = lu.solve(&self.b).ok_or(SimplexFailure::Breakdown {
            iterations: self.iterations,
        })?;
        let mut z = DVector::zeros(self.n);
        for i in 0..self.m {
            let j = self.basis[i];
            let mut v = xb[i];
            if v < 0.0 {
                if v < -self.feas_check_tol {
                    return Err(SimplexFailure::Breakdown {
                        iterations: self.iterations,
                    });
                }
                v = 0.0;
            }
            if j < self.n {
                z[j] = v;
            } else if v > self.feas_check_tol {
                return Err(SimplexFailure::Breakdown {
                    iterations: self.iterations,
                });
            }
        }
        let objective = self.costs.dot(&z);
        Ok(SimplexSolution {
            solution: z,
            objective,
            iterations: self.iterations,
        })
    }
}
