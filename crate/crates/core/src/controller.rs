//! Minimally invasive control filter.
//!
//! Each step solves
//!
//! ```text
//! min  Σ‖u_i − u_i_ref‖² + P Σ s_r²
//! s.t. a_r·u ≥ b_r            (safety, obstacle rows)
//!      a_r·u + s_r ≥ b_r      (link rows), s_r ≥ 0
//!      |u_i[k]| ≤ α_i / √d
//! ```
//!
//! with a dual active-set (Goldfarb–Idnani) method. The method starts from
//! the unconstrained minimizer and adds violated constraints one at a time,
//! so it needs no feasible starting point and reports infeasibility directly.

use thiserror::Error;

use crate::barriers::{
    connectivity_rows, obstacle_rows, safety_rows, BarrierError, ConstraintRow, GpLinkModels, LinkBarrier,
    ObstacleSet, OBSTACLE_ACTIVATION_MARGIN,
};
use crate::comm_graph::{edge_weight, CommGraph, GraphError, SpanningTree};
use crate::geom::{Point, DIM};
use crate::gp_model::{GpError, GpHyper, GpModel};
use crate::numerics::{cholesky, NumericsError, SymMatrix};
use crate::rssi_field::{FieldError, FieldSpec};

pub const MAX_QP_ITERATIONS: usize = 500;
pub const DEFAULT_SLACK_PENALTY: f64 = 1e6;
/// Slack above this marks a step as relaxed.
pub const RELAXED_SLACK: f64 = 1e-9;
const FEAS_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControllerError {
    #[error("QP did not converge in {0} iterations")]
    IterationLimit(usize),
    #[error("invalid QP: {0}")]
    InvalidProblem(String),
    #[error("communication graph is disconnected at step entry")]
    DisconnectedAtEntry,
    #[error(transparent)]
    Barrier(#[from] BarrierError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Gp(#[from] GpError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub n_robots: usize,
    /// Stacked nominal control, `DIM` entries per robot.
    pub u_ref: Vec<f64>,
    pub rows: Vec<ConstraintRow>,
    /// Per-robot speed bound.
    pub alpha: Vec<f64>,
    pub slack_penalty: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    Relaxed,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub u: Vec<f64>,
    /// `(row index, slack)` for every relaxable row.
    pub slacks: Vec<(usize, f64)>,
    /// Indices into `rows` of constraints active at the solution.
    pub active_set: Vec<usize>,
    pub status: QpStatus,
    pub iterations: usize,
}

impl QpSolution {
    pub fn max_slack(&self) -> f64 {
        self.slacks.iter().map(|s| s.1).fold(0.0, f64::max)
    }
}

/// Sparse linear constraint `nᵀz ≥ b` over the decision vector `z = (u, s)`.
#[derive(Debug, Clone)]
struct Ineq {
    idx: Vec<usize>,
    val: Vec<f64>,
    b: f64,
    /// Row index in the problem, when this came from a `ConstraintRow`.
    row: Option<usize>,
}

impl Ineq {
    fn eval(&self, z: &[f64]) -> f64 {
        self.idx.iter().zip(&self.val).map(|(&i, v)| v * z[i]).sum()
    }

    /// `nᵀ diag(w) m` for two sparse vectors.
    fn weighted_dot(&self, other: &Ineq, w: &[f64]) -> f64 {
        let mut s = 0.0;
        for (&i, a) in self.idx.iter().zip(&self.val) {
            for (&j, b) in other.idx.iter().zip(&other.val) {
                if i == j {
                    s += a * b * w[i];
                }
            }
        }
        s
    }
}

impl QpProblem {
    fn validate(&self) -> Result<(), ControllerError> {
        let bad = |m: String| Err(ControllerError::InvalidProblem(m));
        if self.u_ref.len() != DIM * self.n_robots {
            return bad(format!("u_ref has {} entries for {} robots", self.u_ref.len(), self.n_robots));
        }
        if self.alpha.len() != self.n_robots || self.alpha.iter().any(|a| !(*a > 0.0)) {
            return bad("need one positive control bound per robot".into());
        }
        if !(self.slack_penalty >= 1e4) {
            return bad(format!("slack penalty {} below 1e4", self.slack_penalty));
        }
        if self.u_ref.iter().any(|v| !v.is_finite()) {
            return bad("u_ref is not finite".into());
        }
        for r in &self.rows {
            if !r.rhs.is_finite() || r.coeffs.iter().any(|(k, c)| *k >= self.n_robots || !c[0].is_finite() || !c[1].is_finite()) {
                return bad(format!("row {} is malformed", r.origin));
            }
        }
        Ok(())
    }

    /// Constraint rows in solver form. With `soft`, relaxable rows get a
    /// slack column each.
    fn inequalities(&self, nu: usize, soft: bool) -> Vec<Ineq> {
        let mut out = Vec::new();
        let mut slack_col = nu;
        let mut slack_ineqs = Vec::new();
        for (ri, r) in self.rows.iter().enumerate() {
            let mut dense: Vec<(usize, f64)> = Vec::new();
            for (robot, c) in &r.coeffs {
                for k in 0..DIM {
                    let col = robot * DIM + k;
                    match dense.iter_mut().find(|(i, _)| *i == col) {
                        Some(e) => e.1 += c[k],
                        None => dense.push((col, c[k])),
                    }
                }
            }
            if soft && r.relaxable {
                dense.push((slack_col, 1.0));
                slack_ineqs.push(Ineq {
                    idx: vec![slack_col],
                    val: vec![1.0],
                    b: 0.0,
                    row: None,
                });
                slack_col += 1;
            }
            dense.sort_by_key(|e| e.0);
            out.push(Ineq {
                idx: dense.iter().map(|e| e.0).collect(),
                val: dense.iter().map(|e| e.1).collect(),
                b: r.rhs,
                row: Some(ri),
            });
        }
        out.extend(slack_ineqs);
        let d = DIM as f64;
        for i in 0..self.n_robots {
            let bound = self.alpha[i] / d.sqrt();
            for k in 0..DIM {
                let col = i * DIM + k;
                out.push(Ineq {
                    idx: vec![col],
                    val: vec![1.0],
                    b: -bound,
                    row: None,
                });
                out.push(Ineq {
                    idx: vec![col],
                    val: vec![-1.0],
                    b: -bound,
                    row: None,
                });
            }
        }
        out
    }
}

/// Solves the filter QP.
///
/// Relaxable rows are first enforced as hard constraints; the penalized
/// slack problem is only solved when that is infeasible. A finite penalty
/// would otherwise leave a slack of order `λ/2P` on every active link row.
pub fn solve(p: &QpProblem) -> Result<QpSolution, ControllerError> {
    p.validate()?;
    if !p.rows.iter().any(|r| r.relaxable) {
        return solve_dual(p, false);
    }
    let hard = solve_dual(p, false)?;
    if hard.status != QpStatus::Infeasible {
        return Ok(hard);
    }
    let mut soft = solve_dual(p, true)?;
    soft.iterations += hard.iterations;
    Ok(soft)
}

/// Goldfarb–Idnani dual active-set iteration.
fn solve_dual(p: &QpProblem, soft: bool) -> Result<QpSolution, ControllerError> {
    let nu = DIM * p.n_robots;
    let ns = if soft { p.rows.iter().filter(|r| r.relaxable).count() } else { 0 };
    let nz = nu + ns;
    let cons = p.inequalities(nu, soft);

    // H = diag(2, …, 2, 2P, …, 2P); unconstrained minimizer z = (u_ref, 0).
    let mut hinv = vec![0.5; nz];
    for h in hinv.iter_mut().skip(nu) {
        *h = 0.5 / p.slack_penalty;
    }
    let mut z = vec![0.0; nz];
    z[..nu].copy_from_slice(&p.u_ref);

    let mut active: Vec<usize> = Vec::new();
    let mut lambda: Vec<f64> = Vec::new();
    let mut iterations = 0;

    let infeasible = |iterations| QpSolution {
        u: vec![0.0; nu],
        slacks: Vec::new(),
        active_set: Vec::new(),
        status: QpStatus::Infeasible,
        iterations,
    };

    loop {
        // Most violated inactive constraint, scaled by its norm.
        let mut pick: Option<(usize, f64)> = None;
        for (ci, c) in cons.iter().enumerate() {
            if active.contains(&ci) {
                continue;
            }
            let norm = c.val.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
            let viol = (c.eval(&z) - c.b) / norm;
            if viol < -FEAS_TOL * (1.0 + c.b.abs() / norm) && pick.is_none_or(|(_, v)| viol < v) {
                pick = Some((ci, viol));
            }
        }
        let Some((pc, _)) = pick else { break };
        let np = &cons[pc];
        let mut lambda_p = 0.0;

        loop {
            iterations += 1;
            if iterations > MAX_QP_ITERATIONS {
                return Err(ControllerError::IterationLimit(MAX_QP_ITERATIONS));
            }
            // r = M⁻¹ N_Aᵀ H⁻¹ n_p with M = N_Aᵀ H⁻¹ N_A; z_dir = H⁻¹(n_p − N_A r).
            let m = active.len();
            let r: Vec<f64> = if m == 0 {
                Vec::new()
            } else {
                let gram = SymMatrix::from_lower_fn(m, |a, b| cons[active[a]].weighted_dot(&cons[active[b]], &hinv));
                let rhs: Vec<f64> = active.iter().map(|&a| cons[a].weighted_dot(np, &hinv)).collect();
                let f = cholesky(&gram)?;
                crate::numerics::chol_solve(&f, &rhs)?
            };
            let mut dir = vec![0.0; nz];
            for (&i, v) in np.idx.iter().zip(&np.val) {
                dir[i] += v;
            }
            for (k, &a) in active.iter().enumerate() {
                for (&i, v) in cons[a].idx.iter().zip(&cons[a].val) {
                    dir[i] -= r[k] * v;
                }
            }
            for (d, w) in dir.iter_mut().zip(&hinv) {
                *d *= w;
            }
            let curvature = np.eval(&dir);
            let scale = np.weighted_dot(np, &hinv);

            // Partial step: largest move keeping active multipliers non-negative.
            let mut t1 = f64::INFINITY;
            let mut drop: Option<usize> = None;
            for k in 0..m {
                if r[k] > 0.0 {
                    let t = lambda[k] / r[k];
                    if t < t1 {
                        t1 = t;
                        drop = Some(k);
                    }
                }
            }
            let slack_p = np.eval(&z) - np.b;
            let t2 = if curvature <= 1e-12 * scale {
                f64::INFINITY
            } else {
                -slack_p / curvature
            };
            let t = t1.min(t2);
            if t.is_infinite() {
                return Ok(infeasible(iterations));
            }
            if t2.is_finite() {
                for (zi, di) in z.iter_mut().zip(&dir) {
                    *zi += t * di;
                }
            }
            for k in 0..m {
                lambda[k] -= t * r[k];
            }
            lambda_p += t;
            if t2 <= t1 {
                active.push(pc);
                lambda.push(lambda_p);
                break;
            }
            let k = drop.expect("partial step always has a blocking multiplier");
            active.remove(k);
            lambda.remove(k);
        }
    }

    let u = z[..nu].to_vec();
    let mut slacks = Vec::with_capacity(ns);
    let mut col = nu;
    for (ri, r) in p.rows.iter().enumerate() {
        if r.relaxable {
            slacks.push((ri, if soft { z[col].max(0.0) } else { 0.0 }));
            col += 1;
        }
    }
    let mut active_set: Vec<usize> = active.iter().filter_map(|&a| cons[a].row).collect();
    active_set.sort_unstable();
    let status = if slacks.iter().any(|s| s.1 > RELAXED_SLACK) {
        QpStatus::Relaxed
    } else {
        QpStatus::Optimal
    };
    Ok(QpSolution {
        u,
        slacks,
        active_set,
        status,
        iterations,
    })
}

/// Parameters shared by the learned-link and disc-link pipelines.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterParams {
    pub gamma: f64,
    pub r_s: f64,
    pub alpha: Vec<f64>,
    pub slack_penalty: f64,
    pub activation_margin: f64,
    /// Link rows hold `h` above this level, in the barrier's own units.
    pub link_margin: f64,
}

impl FilterParams {
    pub fn new(gamma: f64, r_s: f64, alpha: Vec<f64>) -> Self {
        Self {
            gamma,
            r_s,
            alpha,
            slack_penalty: DEFAULT_SLACK_PENALTY,
            activation_margin: OBSTACLE_ACTIVATION_MARGIN,
            link_margin: 0.0,
        }
    }
}

/// Measurement and learning parameters for the data-driven pipeline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearningParams {
    pub psi: f64,
    pub epsilon: f64,
    pub hyper: GpHyper,
    pub dedup_res: f64,
    pub cap: usize,
}

#[derive(Debug, Clone)]
pub struct StepOutput {
    pub solution: QpSolution,
    pub tree: SpanningTree,
    /// Graph the tree was selected from, with weights set.
    pub graph: CommGraph,
}

fn robot(u: &[f64], i: usize) -> Point {
    [u[DIM * i], u[DIM * i + 1]]
}

/// Weights the graph under `u_ref`, extracts the MST and solves the QP with
/// safety, obstacle and tree-link rows. Shared by DCM and the disc baseline.
pub fn filter_step(
    x: &[Point],
    u_ref: &[f64],
    mut graph: CommGraph,
    links: &impl LinkBarrier,
    obs: &ObstacleSet,
    params: &FilterParams,
) -> Result<StepOutput, ControllerError> {
    if !graph.is_strongly_connected() {
        return Err(ControllerError::DisconnectedAtEntry);
    }
    let gamma = params.gamma;
    for e in graph.edges().to_vec() {
        let (i, j) = (e.i(), e.j());
        let ij = links.link(i, x[i], j, x[j])?;
        let ji = links.link(j, x[j], i, x[i])?;
        let w = edge_weight(
            ij.h,
            ij.hdot(robot(u_ref, i), robot(u_ref, j)),
            ji.h,
            ji.hdot(robot(u_ref, j), robot(u_ref, i)),
            gamma,
        );
        graph.set_weight(e, w)?;
    }
    let tree = graph.min_spanning_tree()?;

    let mut rows = safety_rows(x, params.r_s, gamma);
    rows.extend(obstacle_rows(x, obs, gamma, params.activation_margin));
    rows.extend(connectivity_rows(links, x, &tree, gamma, params.link_margin)?);
    let solution = solve(&QpProblem {
        n_robots: x.len(),
        u_ref: u_ref.to_vec(),
        rows,
        alpha: params.alpha.clone(),
        slack_penalty: params.slack_penalty,
    })?;
    Ok(StepOutput { solution, tree, graph })
}

/// Ground-truth RSSI between every ordered pair; the diagonal is 0.
pub fn rssi_matrix(field: &FieldSpec, x: &[Point]) -> Vec<Vec<f64>> {
    let n = x.len();
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { 0.0 } else { field.rssi(i, x[i], j, x[j]) }).collect())
        .collect()
}

/// Every robot listens to every other; admissible measurements go into the
/// link models.
pub fn collect_measurements(
    x: &[Point],
    field: &FieldSpec,
    models: &mut GpLinkModels,
    learn: &LearningParams,
) -> Result<(), ControllerError> {
    let n = x.len();
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            if let Some(s) = field.try_measure(i, x[i], j, x[j], learn.psi, learn.epsilon)? {
                models
                    .get_or_insert_with(i, j, || GpModel::empty(learn.hyper))
                    .admit(s, learn.dedup_res, learn.cap)?;
            }
        }
    }
    Ok(())
}

/// One step of data-driven connectivity maintenance: measure and learn,
/// build the strong-link graph, weight it, select the MST and filter `u_ref`.
pub fn dcm_step(
    x: &[Point],
    u_ref: &[f64],
    models: &mut GpLinkModels,
    field: &FieldSpec,
    obs: &ObstacleSet,
    learn: &LearningParams,
    params: &FilterParams,
) -> Result<StepOutput, ControllerError> {
    collect_measurements(x, field, models, learn)?;
    let graph = CommGraph::build(&rssi_matrix(field, x), learn.epsilon);
    filter_step(x, u_ref, graph, &*models, obs, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::barriers::RowOrigin;

    fn row(coeffs: Vec<(usize, Point)>, rhs: f64, relaxable: bool) -> ConstraintRow {
        ConstraintRow {
            coeffs,
            rhs,
            origin: if relaxable {
                RowOrigin::Link { tx: 0, rx: 1 }
            } else {
                RowOrigin::Safety { i: 0, j: 1 }
            },
            relaxable,
        }
    }

    fn problem(n: usize, u_ref: Vec<f64>, rows: Vec<ConstraintRow>, alpha: f64) -> QpProblem {
        QpProblem {
            n_robots: n,
            u_ref,
            rows,
            alpha: vec![alpha; n],
            slack_penalty: DEFAULT_SLACK_PENALTY,
        }
    }

    #[test]
    fn unconstrained_returns_reference() {
        let s = solve(&problem(2, vec![0.1, -0.2, 0.3, 0.0], vec![], 1.0)).unwrap();
        assert_eq!(s.u, vec![0.1, -0.2, 0.3, 0.0]);
        assert_eq!(s.status, QpStatus::Optimal);
    }

    #[test]
    fn unconstrained_clamps_into_box() {
        let s = solve(&problem(1, vec![2.0, -0.1], vec![], 1.0)).unwrap();
        let b = 1.0 / 2f64.sqrt();
        assert!((s.u[0] - b).abs() < 1e-15);
        assert_eq!(s.u[1], -0.1);
    }

    #[test]
    fn single_half_space_is_a_projection() {
        let a = [1.0, 2.0];
        let u_ref = vec![0.1, 0.05];
        let b = 0.5;
        let s = solve(&problem(1, u_ref.clone(), vec![row(vec![(0, a)], b, false)], 10.0)).unwrap();
        let viol = b - (a[0] * u_ref[0] + a[1] * u_ref[1]);
        let expect = [u_ref[0] + a[0] * viol / 5.0, u_ref[1] + a[1] * viol / 5.0];
        assert!((s.u[0] - expect[0]).abs() < 1e-15 && (s.u[1] - expect[1]).abs() < 1e-15);
        assert_eq!(s.active_set, vec![0]);
    }

    #[test]
    fn contradictory_relaxable_rows_split_slack() {
        let rows = vec![row(vec![(0, [1.0, 0.0])], 1.0, true), row(vec![(0, [-1.0, 0.0])], 1.0, true)];
        let s = solve(&problem(1, vec![0.0, 0.0], rows, 1.0)).unwrap();
        assert_eq!(s.status, QpStatus::Relaxed);
        assert!(s.u[0].abs() < 1e-9);
        for (_, sl) in &s.slacks {
            assert!((sl - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn infeasible_hard_rows_are_reported() {
        // u_x >= 1 with |u_x| <= 0.5/√2.
        let rows = vec![row(vec![(0, [1.0, 0.0])], 1.0, false)];
        let s = solve(&problem(1, vec![0.0, 0.0], rows, 0.5)).unwrap();
        assert_eq!(s.status, QpStatus::Infeasible);
        assert_eq!(s.u, vec![0.0, 0.0]);
    }

    #[test]
    fn invalid_problems_are_rejected() {
        let p = problem(2, vec![0.0; 3], vec![], 1.0);
        assert!(matches!(solve(&p), Err(ControllerError::InvalidProblem(_))));
        let mut p = problem(1, vec![0.0; 2], vec![], 1.0);
        p.slack_penalty = 10.0;
        assert!(matches!(solve(&p), Err(ControllerError::InvalidProblem(_))));
    }

    #[test]
    fn solve_is_deterministic() {
        let rows = vec![
            row(vec![(0, [1.0, 0.3]), (1, [-1.0, -0.3])], 0.2, false),
            row(vec![(1, [0.0, 1.0])], 0.1, true),
        ];
        let p = problem(2, vec![-0.2, 0.1, 0.2, -0.3], rows, 0.6);
        let a = solve(&p).unwrap();
        let b = solve(&p).unwrap();
        assert_eq!(a, b);
    }
}
