//! Thin builder over the clarabel interior-point solver for the linear and
//! second-order-cone subproblems.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT};

use super::GainTerms;
use crate::network::{ConstraintSet, Layout};

/// `Σ a_j x_j + c` as sparse coefficients and a constant.
pub(crate) type Affine = (Vec<(usize, f64)>, f64);

/// `min cᵀx` subject to blocks of `s = b − A x ∈ K`.
pub(crate) struct ConicProgram {
    n: usize,
    c: Vec<f64>,
    rows: Vec<Vec<(usize, f64)>>,
    b: Vec<f64>,
    cones: Vec<SupportedConeT<f64>>,
}

#[derive(Debug, Clone)]
pub(crate) struct ConicSolution {
    pub x: Vec<f64>,
    pub status: String,
    pub iterations: u32,
}

impl ConicProgram {
    pub fn new(c: Vec<f64>) -> Self {
        Self { n: c.len(), c, rows: Vec::new(), b: Vec::new(), cones: Vec::new() }
    }

    /// `Σ a_j x_j ≤ rhs`.
    pub fn push_le(&mut self, coeffs: Vec<(usize, f64)>, rhs: f64) {
        self.rows.push(coeffs);
        self.b.push(rhs);
        self.cones.push(SupportedConeT::NonnegativeConeT(1));
    }

    /// `Σ a_j x_j = rhs`.
    pub fn push_eq(&mut self, coeffs: Vec<(usize, f64)>, rhs: f64) {
        self.rows.push(coeffs);
        self.b.push(rhs);
        self.cones.push(SupportedConeT::ZeroConeT(1));
    }

    fn push_affine(&mut self, e: Affine) {
        self.rows.push(e.0.into_iter().map(|(j, a)| (j, -a)).collect());
        self.b.push(e.1);
    }

    /// `(u₀, u₁, …)` in the second-order cone, `‖(u₁, …)‖ ≤ u₀`.
    pub fn push_soc(&mut self, entries: Vec<Affine>) {
        let dim = entries.len();
        for e in entries {
            self.push_affine(e);
        }
        self.cones.push(SupportedConeT::SecondOrderConeT(dim));
    }

    /// The symmetric matrix with entries `entry(i, j)` (`i ≤ j`) is PSD.
    pub fn push_psd(&mut self, n: usize, mut entry: impl FnMut(usize, usize) -> Affine) {
        for j in 0..n {
            for i in 0..=j {
                let (coeffs, c) = entry(i, j);
                let w = if i == j { 1.0 } else { std::f64::consts::SQRT_2 };
                self.push_affine((coeffs.into_iter().map(|(v, a)| (v, w * a)).collect(), w * c));
            }
        }
        self.cones.push(SupportedConeT::PSDTriangleConeT(n));
    }

    /// Adds every row and bound of `cs` on the first `cs.num_vars()`
    /// variables, and the bordered moment cone when `cs.psd` is set.
    pub fn push_constraints(&mut self, cs: &ConstraintSet) {
        for r in &cs.rows {
            let coeffs: Vec<(usize, f64)> =
                r.coeffs.iter().enumerate().filter(|(_, a)| **a != 0.0).map(|(j, a)| (j, *a)).collect();
            self.push_le(coeffs, r.rhs);
        }
        for j in 0..cs.num_vars() {
            if cs.lower[j] == cs.upper[j] {
                self.push_eq(vec![(j, 1.0)], cs.lower[j]);
                continue;
            }
            if cs.upper[j].is_finite() {
                self.push_le(vec![(j, 1.0)], cs.upper[j]);
            }
            if cs.lower[j].is_finite() {
                self.push_le(vec![(j, -1.0)], -cs.lower[j]);
            }
        }
        if let (true, Layout::Joint { k }) = (cs.psd, cs.layout) {
            let l = cs.layout;
            // [[1, νᵀ], [ν, Π]] ⪰ 0 with ν = diag Π
            let var = |i: usize, j: usize| if i == j { l.prob(i) } else { l.pair(i.min(j), i.max(j)) };
            self.push_psd(k + 1, |i, j| match (i, j) {
                (0, 0) => (vec![], 1.0),
                (0, j) => (vec![(l.prob(j - 1), 1.0)], 0.0),
                (i, j) => (vec![(var(i - 1, j - 1), 1.0)], 0.0),
            });
        }
    }

    pub fn solve(&self, max_iter: u32) -> Option<ConicSolution> {
        quiet_solver_panics();
        let m = self.rows.len();
        let (mut ii, mut jj, mut vv) = (Vec::new(), Vec::new(), Vec::new());
        for (r, row) in self.rows.iter().enumerate() {
            for &(j, a) in row {
                ii.push(r);
                jj.push(j);
                vv.push(a);
            }
        }
        let a = CscMatrix::new_from_triplets(m, self.n, ii, jj, vv);
        let p = CscMatrix::<f64>::zeros((self.n, self.n));
        // merge consecutive nonnegative rows into one cone block
        let mut cones: Vec<SupportedConeT<f64>> = Vec::new();
        for c in &self.cones {
            match (cones.last_mut(), c) {
                (Some(SupportedConeT::NonnegativeConeT(d)), SupportedConeT::NonnegativeConeT(e))
                | (Some(SupportedConeT::ZeroConeT(d)), SupportedConeT::ZeroConeT(e)) => *d += e,
                _ => cones.push(c.clone()),
            }
        }
        // second attempt without equilibration and with looser tolerances
        for (equilibrate, tol) in [(true, 1e-10), (false, 1e-8)] {
            let settings = DefaultSettingsBuilder::default()
                .verbose(false)
                .max_iter(max_iter)
                .equilibrate_enable(equilibrate)
                .tol_gap_abs(tol)
                .tol_gap_rel(tol)
                .tol_feas(tol)
                .build()
                .ok()?;
            let Ok(mut solver) = DefaultSolver::new(&p, &self.c, &a, &self.b, &cones, settings) else {
                return None;
            };
            // the PSD cone's eigen-decomposition panics on non-finite iterates
            if std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| solver.solve())).is_err() {
                log::debug!("conic solve aborted inside the solver");
                continue;
            }
            let status = solver.solution.status;
            log::debug!("conic solve: {status:?} after {} iterations", solver.solution.iterations);
            if matches!(status, SolverStatus::Solved | SolverStatus::AlmostSolved)
                && solver.solution.x.iter().all(|v| v.is_finite())
            {
                return Some(ConicSolution {
                    x: solver.solution.x.clone(),
                    status: format!("{status:?}"),
                    iterations: solver.solution.iterations,
                });
            }
        }
        None
    }
}

/// Installs, once per process, a panic hook that drops panics raised inside
/// clarabel (they are caught and retried in [`ConicProgram::solve`]) and
/// forwards every other panic to the previous hook.
fn quiet_solver_panics() {
    static ONCE: std::sync::Once = std::sync::Once::new();
    ONCE.call_once(|| {
        let previous = std::panic::take_hook();
        std::panic::set_hook(Box::new(move |info| {
            if info.location().is_some_and(|l| l.file().contains("clarabel")) {
                log::debug!("solver panic: {info}");
                return;
            }
            previous(info)
        }));
    });
}

/// Maximizes `cᵀx + Σ w·G(x_v)` over `cs` for gain terms `(v, w, G)` with
/// `w ≥ 0`. Each ratio `A·P/(σ²P + η²)` is a harmonic mean of the constant
/// `1/σ²` and `P/η²`, hence one three-dimensional cone.
pub(crate) fn maximize_over(
    cs: &ConstraintSet,
    linear: &[f64],
    gains: &[(usize, f64, &GainTerms)],
    max_iter: u32,
) -> Option<Vec<f64>> {
    let n = cs.num_vars();
    let mut c: Vec<f64> = linear.iter().map(|v| -v).collect();
    let mut cones = Vec::new();
    for &(v, w, g) in gains {
        if w <= 0.0 {
            continue;
        }
        for &(a, s2, e2) in &g.groups {
            if s2 == 0.0 {
                c[v] -= w * a / e2;
                continue;
            }
            c.push(-w * a);
            cones.push((v, c.len() - 1, 1.0 / s2, 1.0 / e2));
        }
    }
    let mut prog = ConicProgram::new(c);
    prog.push_constraints(cs);
    for (v, t, sx, sy) in cones {
        prog.push_soc(vec![
            (vec![(v, sy), (t, -2.0)], sx),
            (vec![(t, 2.0)], 0.0),
            (vec![(v, -sy)], sx),
        ]);
    }
    prog.solve(max_iter).map(|s| s.x[..n].to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_lp() {
        // max x + y, x + 2y ≤ 4, x ≤ 3, x, y ≥ 0 → (3, 0.5)
        let mut p = ConicProgram::new(vec![-1.0, -1.0]);
        p.push_le(vec![(0, 1.0), (1, 2.0)], 4.0);
        p.push_le(vec![(0, 1.0)], 3.0);
        p.push_le(vec![(0, -1.0)], 0.0);
        p.push_le(vec![(1, -1.0)], 0.0);
        let s = p.solve(100).unwrap();
        assert!((s.x[0] - 3.0).abs() < 1e-7 && (s.x[1] - 0.5).abs() < 1e-7, "{:?}", s.x);
    }

    #[test]
    fn harmonic_mean_cone() {
        // max t with t ≤ xy/(x+y), x = 1, y = 3 → t = 3/4
        let mut p = ConicProgram::new(vec![0.0, 0.0, -1.0]);
        p.push_le(vec![(0, 1.0)], 1.0);
        p.push_le(vec![(0, -1.0)], -1.0);
        p.push_le(vec![(1, 1.0)], 3.0);
        p.push_le(vec![(1, -1.0)], -3.0);
        p.push_soc(vec![
            (vec![(0, 1.0), (1, 1.0), (2, -2.0)], 0.0),
            (vec![(2, 2.0)], 0.0),
            (vec![(0, 1.0), (1, -1.0)], 0.0),
        ]);
        let s = p.solve(100).unwrap();
        assert!((s.x[2] - 0.75).abs() < 1e-7, "{:?}", s.x);
    }

    #[test]
    fn psd_cone_bounds_off_diagonal() {
        // max x with [[1, x], [x, 1/4]] ⪰ 0 → x = 1/2
        let mut p = ConicProgram::new(vec![-1.0]);
        p.push_psd(2, |i, j| match (i, j) {
            (0, 0) => (vec![], 1.0),
            (1, 1) => (vec![], 0.25),
            _ => (vec![(0, 1.0)], 0.0),
        });
        let s = p.solve(100).unwrap();
        assert!((s.x[0] - 0.5).abs() < 1e-7, "{:?}", s.x);
    }
}
