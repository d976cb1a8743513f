//! Projected-gradient ascent for concave objectives over a [`ConstraintSet`].
//!
//! Projections are computed in the weighted metric of the variable layout by
//! Dykstra's alternating projections over the halfspaces, the box, and (for
//! joint layouts) the PSD condition on the bordered moment matrix.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::linalg::{nnls, symmetrize};
use crate::network::{ConstraintSet, Layout};

pub trait ConcaveObjective {
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64], g: &mut [f64]);
}

/// `f(x) = cᵀx`.
#[derive(Debug, Clone)]
pub struct LinearObjective {
    pub c: Vec<f64>,
}

impl ConcaveObjective for LinearObjective {
    fn value(&self, x: &[f64]) -> f64 {
        self.c.iter().zip(x).map(|(a, b)| a * b).sum()
    }

    fn gradient(&self, _x: &[f64], g: &mut [f64]) {
        g.copy_from_slice(&self.c);
    }
}

/// `f(x) − (μ/2)‖x − x₀‖²_W`, with `W` the metric weights of the constraint set.
pub struct Proximal<'a, F: ConcaveObjective> {
    pub inner: &'a F,
    pub center: Vec<f64>,
    pub mu: f64,
    pub weights: Vec<f64>,
}

impl<F: ConcaveObjective> ConcaveObjective for Proximal<'_, F> {
    fn value(&self, x: &[f64]) -> f64 {
        let pen: f64 = x
            .iter()
            .zip(&self.center)
            .zip(&self.weights)
            .map(|((a, b), w)| w * (a - b) * (a - b))
            .sum();
        self.inner.value(x) - 0.5 * self.mu * pen
    }

    fn gradient(&self, x: &[f64], g: &mut [f64]) {
        self.inner.gradient(x, g);
        for i in 0..x.len() {
            g[i] -= self.mu * self.weights[i] * (x[i] - self.center[i]);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InnerConfig {
    /// Bound on the projected-gradient (KKT) residual at unit step.
    pub tol: f64,
    pub max_iter: usize,
    pub projection_cycles: usize,
    pub projection_tol: f64,
    /// First trial step of the backtracking search.
    pub initial_step: f64,
}

impl Default for InnerConfig {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 20_000, projection_cycles: 10_000, projection_tol: 1e-12, initial_step: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InnerResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub converged: bool,
    /// False if some projection hit the cycle cap.
    pub projection_converged: bool,
    pub max_violation: f64,
}

struct SparseRow {
    idx: Vec<usize>,
    val: Vec<f64>,
    rhs: f64,
    /// `aᵀW⁻¹a`
    scale: f64,
}

/// Dykstra projector onto a constraint set in its layout metric.
pub struct Projector<'a> {
    cs: &'a ConstraintSet,
    weights: Vec<f64>,
    rows: Vec<SparseRow>,
}

impl<'a> Projector<'a> {
    pub fn new(cs: &'a ConstraintSet) -> Self {
        let weights = cs.layout.metric_weights();
        let rows = cs
            .rows
            .iter()
            .filter_map(|r| {
                let (idx, val): (Vec<usize>, Vec<f64>) =
                    r.coeffs.iter().enumerate().filter(|(_, a)| **a != 0.0).map(|(i, a)| (i, *a)).unzip();
                let scale: f64 = idx.iter().zip(&val).map(|(&i, a)| a * a / weights[i]).sum();
                (scale > 0.0).then_some(SparseRow { idx, val, rhs: r.rhs, scale })
            })
            .collect();
        Self { cs, weights, rows }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn clip_box(&self, x: &mut [f64]) {
        for (i, v) in x.iter_mut().enumerate() {
            *v = v.clamp(self.cs.lower[i], self.cs.upper[i]);
        }
    }

    /// Exact projection onto the rows and the box, posed as the least-distance
    /// program `min ‖z‖ s.t. G z ≤ h` in `z = W^{1/2}(x − y)` over the free
    /// variables and solved through NNLS. `None` if the set is empty or the
    /// NNLS solve fails.
    fn project_polyhedron(&self, y: &[f64]) -> Option<Vec<f64>> {
        let cs = self.cs;
        let n = y.len();
        let mut base = y.to_vec();
        let free: Vec<usize> = (0..n).filter(|&i| cs.lower[i] < cs.upper[i]).collect();
        for i in 0..n {
            if cs.lower[i] >= cs.upper[i] {
                base[i] = cs.lower[i];
            }
        }
        let pos: Vec<Option<usize>> = {
            let mut p = vec![None; n];
            for (c, &i) in free.iter().enumerate() {
                p[i] = Some(c);
            }
            p
        };
        let nf = free.len();
        let mut g_rows: Vec<(Vec<f64>, f64)> = Vec::new();
        let mut push = |g: Vec<f64>, h: f64| -> bool {
            let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 {
                return h >= -1e-12;
            }
            g_rows.push((g.iter().map(|v| v / norm).collect(), h / norm));
            true
        };
        for r in &self.rows {
            let mut g = vec![0.0; nf];
            let mut ay = 0.0;
            for (&i, &a) in r.idx.iter().zip(&r.val) {
                ay += a * base[i];
                if let Some(c) = pos[i] {
                    g[c] = a / self.weights[i].sqrt();
                }
            }
            if !push(g, r.rhs - ay) {
                return None;
            }
        }
        for (c, &i) in free.iter().enumerate() {
            let sw = self.weights[i].sqrt();
            if cs.upper[i].is_finite() {
                let mut g = vec![0.0; nf];
                g[c] = 1.0 / sw;
                push(g, cs.upper[i] - base[i]);
            }
            if cs.lower[i].is_finite() {
                let mut g = vec![0.0; nf];
                g[c] = -1.0 / sw;
                push(g, base[i] - cs.lower[i]);
            }
        }
        let m = g_rows.len();
        if m == 0 || g_rows.iter().all(|(_, h)| *h >= 0.0) {
            return Some(base);
        }
        // min ‖z‖ s.t. −G z ≥ −h:  E = [−Gᵀ; −hᵀ], f = e_{n+1}
        let e = DMatrix::from_fn(nf + 1, m, |r, c| if r < nf { -g_rows[c].0[r] } else { -g_rows[c].1 });
        let mut f = DVector::zeros(nf + 1);
        f[nf] = 1.0;
        let u = nnls(&e, &f)?;
        let r = &e * u - f;
        if r[nf].abs() < 1e-14 {
            return None;
        }
        let mut x = base;
        for (c, &i) in free.iter().enumerate() {
            x[i] += (-r[c] / r[nf]) / self.weights[i].sqrt();
            x[i] = x[i].clamp(cs.lower[i], cs.upper[i]);
        }
        Some(x)
    }

    /// Dykstra cycles over the halfspaces and the box.
    fn dykstra_polyhedron(&self, y: &[f64], cycles: usize, tol: f64) -> (Vec<f64>, bool) {
        let n = y.len();
        let mut x = y.to_vec();
        let mut lambda = vec![0.0; self.rows.len()];
        let mut q_box = vec![0.0; n];
        let mut prev = x.clone();
        for _ in 0..cycles {
            for (r, lam) in self.rows.iter().zip(lambda.iter_mut()) {
                let ay: f64 = r.idx.iter().zip(&r.val).map(|(&i, a)| a * x[i]).sum();
                let theta = ((ay - r.rhs) / r.scale + *lam).max(0.0);
                let shift = *lam - theta;
                if shift != 0.0 {
                    for (&i, a) in r.idx.iter().zip(&r.val) {
                        x[i] += shift * a / self.weights[i];
                    }
                }
                *lam = theta;
            }
            for i in 0..n {
                let z = x[i] + q_box[i];
                x[i] = z.clamp(self.cs.lower[i], self.cs.upper[i]);
                q_box[i] = z - x[i];
            }
            let change = x.iter().zip(&prev).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
            if change <= tol {
                return (x, true);
            }
            prev.copy_from_slice(&x);
        }
        (x, false)
    }

    fn polyhedron(&self, y: &[f64], cycles: usize, tol: f64) -> (Vec<f64>, bool) {
        if self.rows.is_empty() {
            let mut x = y.to_vec();
            self.clip_box(&mut x);
            return (x, true);
        }
        if let Some(x) = self.project_polyhedron(y) {
            if self.rows.iter().all(|r| {
                let ax: f64 = r.idx.iter().zip(&r.val).map(|(&i, a)| a * x[i]).sum();
                ax - r.rhs <= 1e-9 * (1.0 + r.rhs.abs())
            }) {
                return (x, true);
            }
        }
        self.dykstra_polyhedron(y, cycles, tol)
    }

    /// Projects `y` and reports whether the projection met its tolerance.
    /// Without the PSD condition the projection is exact; with it, Dykstra
    /// alternates the polyhedron and the bordered PSD set.
    pub fn project(&self, y: &[f64], cycles: usize, tol: f64) -> (Vec<f64>, bool) {
        if !self.cs.psd {
            return self.polyhedron(y, cycles, tol);
        }
        let n = y.len();
        let mut x = y.to_vec();
        let mut q_poly = vec![0.0; n];
        let mut q_psd = vec![0.0; n];
        let mut prev = x.clone();
        let mut ok = true;
        for _ in 0..cycles {
            let z: Vec<f64> = x.iter().zip(&q_poly).map(|(a, b)| a + b).collect();
            let (p, pok) = self.polyhedron(&z, cycles, tol);
            ok &= pok;
            for i in 0..n {
                q_poly[i] = z[i] - p[i];
            }
            let z: Vec<f64> = p.iter().zip(&q_psd).map(|(a, b)| a + b).collect();
            let p = project_bordered_psd(&self.cs.layout, &z, tol);
            for i in 0..n {
                q_psd[i] = z[i] - p[i];
            }
            x = p;
            let change = x.iter().zip(&prev).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
            if change <= tol && self.cs.max_violation(&x) <= tol.max(1e-11) {
                return (x, ok);
            }
            prev.copy_from_slice(&x);
        }
        (x, false)
    }
}

fn bordered(layout: &Layout, x: &[f64]) -> DMatrix<f64> {
    let k = layout.devices();
    let mut m = DMatrix::zeros(k + 1, k + 1);
    m[(0, 0)] = 1.0;
    for i in 0..k {
        let d = x[layout.prob(i)];
        m[(0, i + 1)] = d;
        m[(i + 1, 0)] = d;
        m[(i + 1, i + 1)] = d;
        for j in i + 1..k {
            let v = x[layout.pair(i, j)];
            m[(i + 1, j + 1)] = v;
            m[(j + 1, i + 1)] = v;
        }
    }
    m
}

fn psd_clip(m: &DMatrix<f64>) -> (DMatrix<f64>, f64) {
    let eig = SymmetricEigen::new(symmetrize(m));
    let lmin = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let vals = eig.eigenvalues.map(|l| l.max(0.0));
    (symmetrize(&(&eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose())), lmin)
}

/// Nearest point (in layout metric) whose bordered moment matrix
/// `[[1, dᵀ], [d, Π]]` is PSD, i.e. `Π − ddᵀ ⪰ 0`. Solved by an inner
/// Dykstra loop between the PSD cone and the affine structure of bordered
/// matrices; the structure projection averages the tied entries.
pub fn project_bordered_psd(layout: &Layout, z: &[f64], tol: f64) -> Vec<f64> {
    let k = layout.devices();
    let m0 = bordered(layout, z);
    let (_, lmin) = psd_clip(&m0);
    if lmin >= 0.0 {
        return z.to_vec();
    }
    let mut a = m0;
    let mut corr = DMatrix::zeros(k + 1, k + 1);
    let mut out = z.to_vec();
    for _ in 0..1_000 {
        let y = &a + &corr;
        let (p, _) = psd_clip(&y);
        corr = &y - &p;
        let mut next = z.to_vec();
        for i in 0..k {
            next[layout.prob(i)] = (p[(0, i + 1)] + p[(i + 1, 0)] + p[(i + 1, i + 1)]) / 3.0;
            for j in i + 1..k {
                next[layout.pair(i, j)] = 0.5 * (p[(i + 1, j + 1)] + p[(j + 1, i + 1)]);
            }
        }
        let a_next = bordered(layout, &next);
        let gap = (&a_next - &p).norm();
        let step = (&a_next - &a).norm();
        a = a_next;
        out = next;
        if gap <= tol || step <= 1e-3 * tol {
            break;
        }
    }
    out
}

/// Consecutive accepted steps without relative progress before giving up.
const FLAT_LIMIT: usize = 50;

/// Maximizes a concave objective over `cs` starting from `x0`.
///
/// Projected gradient with a backtracking sufficient-ascent test
/// `f(x⁺) ≥ f(x) + ∇fᵀ(x⁺ − x) − ‖x⁺ − x‖²_W / (2t)`; the step doubles after
/// every accepted iteration.
pub fn inner_convex_solve<F: ConcaveObjective>(
    obj: &F,
    cs: &ConstraintSet,
    x0: &[f64],
    cfg: &InnerConfig,
) -> InnerResult {
    let proj = Projector::new(cs);
    let w = proj.weights().to_vec();
    let n = x0.len();
    let (mut x, mut proj_ok) = proj.project(x0, cfg.projection_cycles, cfg.projection_tol);
    let mut fx = obj.value(&x);
    let mut g = vec![0.0; n];
    let mut t = cfg.initial_step;
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    let mut stalls = 0;
    // accepted steps that leave the objective flat
    let mut flat = 0;
    while iterations < cfg.max_iter {
        iterations += 1;
        obj.gradient(&x, &mut g);
        let mut accepted = false;
        for _ in 0..60 {
            let y: Vec<f64> = (0..n).map(|i| x[i] + t * g[i] / w[i]).collect();
            let (xt, ok) = proj.project(&y, cfg.projection_cycles, cfg.projection_tol);
            proj_ok &= ok;
            let d: Vec<f64> = (0..n).map(|i| xt[i] - x[i]).collect();
            let lin: f64 = (0..n).map(|i| g[i] * d[i]).sum();
            let quad: f64 = (0..n).map(|i| w[i] * d[i] * d[i]).sum();
            let ft = obj.value(&xt);
            let step_norm = d.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            residual = step_norm * t.recip().max(1.0);
            if ft >= fx + lin - quad / (2.0 * t) - 1e-14 * fx.abs().max(1.0) {
                if ft > fx + 1e-14 * fx.abs().max(1e-300) {
                    flat = 0;
                } else {
                    flat += 1;
                }
                if ft >= fx - 1e-15 * fx.abs().max(1.0) {
                    x = xt;
                    fx = ft;
                }
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if iterations % 2000 == 0 {
            log::trace!("pg it {iterations}: f {fx:.12e} t {t:.3e} residual {residual:.3e}");
        }
        if residual <= cfg.tol {
            converged = true;
            break;
        }
        if flat >= FLAT_LIMIT {
            log::debug!("inner solve stalled at residual {residual:.2e}");
            break;
        }
        if accepted {
            t = (t * 2.0).min(1e12);
            stalls = 0;
        } else {
            stalls += 1;
            t = cfg.initial_step;
            if stalls > 3 {
                break;
            }
        }
    }
    let max_violation = cs.max_violation(&x);
    log::debug!(
        "inner solve: {iterations} iterations, residual {residual:.2e}, converged {converged}, projection ok {proj_ok}, {} rows",
        cs.rows.len()
    );
    InnerResult { x, value: fx, kkt_residual: residual, iterations, converged, projection_converged: proj_ok, max_violation }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct NegSqDist(Vec<f64>);

    impl ConcaveObjective for NegSqDist {
        fn value(&self, x: &[f64]) -> f64 {
            -x.iter().zip(&self.0).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
        }
        fn gradient(&self, x: &[f64], g: &mut [f64]) {
            for i in 0..x.len() {
                g[i] = -2.0 * (x[i] - self.0[i]);
            }
        }
    }

    fn boxed(n: usize) -> ConstraintSet {
        ConstraintSet::new(Layout::Independent { k: n / 2 }, vec![0.0; n], vec![1.0; n])
    }

    #[test]
    fn interior_target_is_returned() {
        let cs = boxed(4);
        let target = vec![0.2, 0.7, 0.5, 0.9];
        let r = inner_convex_solve(&NegSqDist(target.clone()), &cs, &[0.0; 4], &InnerConfig::default());
        assert!(r.converged);
        for (a, b) in r.x.iter().zip(&target) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn linear_objective_over_simplex_hits_vertex() {
        let mut cs = boxed(4);
        cs.push("simplex", vec![1.0; 4], 1.0);
        let obj = LinearObjective { c: vec![0.3, 1.2, -0.5, 0.9] };
        let r = inner_convex_solve(&obj, &cs, &[0.25; 4], &InnerConfig::default());
        assert!(r.converged, "{r:?}");
        let want = [0.0, 1.0, 0.0, 0.0];
        for (a, b) in r.x.iter().zip(&want) {
            assert!((a - b).abs() < 1e-7, "{:?}", r.x);
        }
    }

    #[test]
    fn bordered_projection_restores_covariance_psd() {
        let layout = Layout::Joint { k: 3 };
        let mut x = vec![0.0; layout.len()];
        for i in 0..3 {
            x[layout.prob(i)] = 0.5;
        }
        // three pairwise-disjoint halves are not realizable
        let p = project_bordered_psd(&layout, &x, 1e-12);
        let cs = ConstraintSet { psd: true, ..ConstraintSet::new(layout, vec![0.0; 9], vec![1.0; 9]) };
        assert!(cs.covariance_min_eigenvalue(&p) > -1e-9);
    }
}
