//! Fixed-step simulation of a single-integrator team under DCM or the
//! distance-disc (MCCST) baseline, with the per-step metrics used to compare
//! them.

use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::barriers::{DiscLink, GpLinkModels, ObstacleSet};
use crate::comm_graph::{CommGraph, Edge};
use crate::controller::{
    dcm_step, filter_step, rssi_matrix, ControllerError, FilterParams, LearningParams, QpStatus, StepOutput,
};
use crate::geom::{self, Point, DIM};
use crate::gp_model::{sign_agreement, GpError, GpHyper, GpModel, Probe};
use crate::rssi_field::FieldSpec;

/// Proportional gain of the goal-seeking nominal controller (1/s).
pub const NOMINAL_GAIN: f64 = 1.0;

/// λ₂ at or below this counts as disconnected.
pub const LAMBDA2_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("no records to summarize")]
    EmptyRun,
    #[error(transparent)]
    Controller(#[from] ControllerError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ControllerKind {
    Dcm,
    /// Distance-disc baseline with communication radius `r_c`.
    Mccst { r_c: f64 },
}

impl ControllerKind {
    /// Explicit Euler steps let a link held at `h = 0` drift just outside
    /// its set, and the GP mean only matches fresh samples to within its
    /// smoothing residual. These margins absorb both: 0.25 dB for learned
    /// links, 0.01 m² for disc links.
    pub fn default_link_margin(&self) -> f64 {
        match self {
            ControllerKind::Dcm => 0.25,
            ControllerKind::Mccst { .. } => 0.01,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobotSpec {
    pub start: Point,
    pub goal: Point,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub robots: Vec<RobotSpec>,
    pub obstacles: ObstacleSet,
    pub field: FieldSpec,
    pub psi: f64,
    pub epsilon: f64,
    pub gamma: f64,
    pub r_s: f64,
    pub dt: f64,
    pub steps: usize,
    pub controller: ControllerKind,
    pub gp: GpHyper,
    pub dedup_res: f64,
    pub cap: usize,
    pub seed: u64,
    /// Level link barriers are held above; see [`ControllerKind::default_link_margin`].
    pub link_margin: f64,
}

impl Scenario {
    pub fn n(&self) -> usize {
        self.robots.len()
    }

    pub fn starts(&self) -> Vec<Point> {
        self.robots.iter().map(|r| r.start).collect()
    }

    pub fn goals(&self) -> Vec<Point> {
        self.robots.iter().map(|r| r.goal).collect()
    }

    pub fn alphas(&self) -> Vec<f64> {
        self.robots.iter().map(|r| r.alpha).collect()
    }

    pub fn filter_params(&self) -> FilterParams {
        let mut p = FilterParams::new(self.gamma, self.r_s, self.alphas());
        p.link_margin = self.link_margin;
        p
    }

    pub fn learning_params(&self) -> LearningParams {
        LearningParams {
            psi: self.psi,
            epsilon: self.epsilon,
            hyper: self.gp,
            dedup_res: self.dedup_res,
            cap: self.cap,
        }
    }

    /// Checks parameters and the initial configuration: collision-free and
    /// strongly connected (and disc-connected for the baseline).
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidScenario(m));
        if self.n() < 2 {
            return bad("need at least two robots".into());
        }
        self.field
            .validate(self.psi, self.epsilon)
            .map_err(|e| SimError::InvalidScenario(e.to_string()))?;
        self.gp.validate().map_err(|e| SimError::InvalidScenario(e.to_string()))?;
        if !(self.link_margin >= 0.0) {
            return bad("link_margin must be non-negative".into());
        }
        if !(self.gamma > 0.0 && self.r_s > 0.0 && self.dt > 0.0 && self.dedup_res > 0.0 && self.cap >= 1) {
            return bad("gamma, r_s, dt, dedup_res must be positive and cap >= 1".into());
        }
        if let Some(r) = self.robots.iter().position(|r| !(r.alpha > 0.0)) {
            return bad(format!("robot {r} has a non-positive control bound"));
        }
        let x = self.starts();
        for i in 0..x.len() {
            for j in i + 1..x.len() {
                if geom::dist(x[i], x[j]) <= self.r_s {
                    return bad(format!("robots {i} and {j} start within r_s"));
                }
            }
            if self.obstacles.min_distance(x[i]) <= self.obstacles.r_obs {
                return bad(format!("robot {i} starts within r_obs of an obstacle"));
            }
        }
        if !CommGraph::build(&rssi_matrix(&self.field, &x), self.epsilon).is_strongly_connected() {
            return bad("initial team is not strongly connected".into());
        }
        if let ControllerKind::Mccst { r_c } = self.controller {
            if !(r_c > 0.0) {
                return bad("r_c must be positive".into());
            }
            if !disc_graph(&x, r_c).is_strongly_connected() {
                return bad(format!("initial team is not connected under r_c = {r_c}"));
            }
        }
        Ok(())
    }
}

/// Goal-seeking proportional control, saturated at each robot's bound.
pub fn nominal_controller(x: &[Point], goals: &[Point], alpha: &[f64]) -> Vec<f64> {
    let mut u = Vec::with_capacity(DIM * x.len());
    for ((xi, gi), ai) in x.iter().zip(goals).zip(alpha) {
        let mut v = geom::sub(*gi, *xi);
        v = [NOMINAL_GAIN * v[0], NOMINAL_GAIN * v[1]];
        let n = geom::norm(v);
        if n > *ai {
            v = [v[0] * ai / n, v[1] * ai / n];
        }
        u.extend_from_slice(&v);
    }
    u
}

/// Disc graph: edge iff `‖x_i − x_j‖ ≤ r_c`.
pub fn disc_graph(x: &[Point], r_c: f64) -> CommGraph {
    let n = x.len();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if geom::dist(x[i], x[j]) <= r_c {
                edges.push(Edge::new(i, j));
            }
        }
    }
    CommGraph::from_edges(n, edges)
}

/// Baseline step: the same weight/MST/QP pipeline with `h = r_c² − ‖Δ‖²`.
pub fn mccst_step(
    x: &[Point],
    u_ref: &[f64],
    r_c: f64,
    obs: &ObstacleSet,
    params: &FilterParams,
) -> Result<StepOutput, ControllerError> {
    filter_step(x, u_ref, disc_graph(x, r_c), &DiscLink { r_c }, obs, params)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: usize,
    pub x: Vec<Point>,
    pub u_ref: Vec<f64>,
    pub u_star: Vec<f64>,
    pub min_robot_dist: f64,
    pub min_obstacle_dist: f64,
    /// `min(min_robot_dist, min_obstacle_dist)`.
    pub min_dist: f64,
    /// Algebraic connectivity of the true strong-link graph.
    pub lambda2: f64,
    /// `(1/N) Σ ‖u_i* − u_i_ref‖²`.
    pub perturbation: f64,
    pub tree_edges: Vec<Edge>,
    pub relaxed: bool,
    pub max_slack: f64,
    pub status: Option<QpStatus>,
    /// Row-major per-ordered-pair dataset sizes (empty for the baseline).
    pub dataset_sizes: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunOutcome {
    Completed,
    /// The controller found the strong-link graph disconnected and halted.
    ConnectivityLost { step: usize },
    Infeasible { step: usize },
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub records: Vec<StepRecord>,
    pub final_x: Vec<Point>,
    pub goals: Vec<Point>,
    pub outcome: RunOutcome,
    /// Link models at the end of a DCM run.
    pub models: Option<GpLinkModels>,
}

impl RunResult {
    /// First step at which λ₂ dropped to zero, if any.
    pub fn first_disconnect(&self) -> Option<usize> {
        self.records.iter().find(|r| r.lambda2 <= LAMBDA2_TOL).map(|r| r.t)
    }

    pub fn summary(&self) -> Result<Summary, SimError> {
        let mut s = summarize(&self.records)?;
        s.goal_distances = self.final_x.iter().zip(&self.goals).map(|(x, g)| geom::dist(*x, *g)).collect();
        s.outcome = Some(self.outcome);
        Ok(s)
    }
}

fn perturbation(u: &[f64], u_ref: &[f64]) -> f64 {
    let n = u.len() / DIM;
    u.iter().zip(u_ref).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n as f64
}

fn distances(x: &[Point], obs: &ObstacleSet) -> (f64, f64) {
    let mut robot = f64::INFINITY;
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            robot = robot.min(geom::dist(x[i], x[j]));
        }
    }
    let obstacle = x.iter().map(|p| obs.min_distance(*p)).fold(f64::INFINITY, f64::min);
    (robot, obstacle)
}

/// Runs the scenario: measure, learn (DCM), weight, MST, QP, Euler step.
pub fn run(s: &Scenario) -> Result<RunResult, SimError> {
    s.validate()?;
    let n = s.n();
    let goals = s.goals();
    let alphas = s.alphas();
    let params = s.filter_params();
    let learn = s.learning_params();
    let mut models = matches!(s.controller, ControllerKind::Dcm).then(|| GpLinkModels::new(n));
    let mut x = s.starts();
    let mut records = Vec::with_capacity(s.steps);
    let mut outcome = RunOutcome::Completed;

    for t in 0..s.steps {
        let u_ref = nominal_controller(&x, &goals, &alphas);
        let step = match (&mut models, s.controller) {
            (Some(m), _) => dcm_step(&x, &u_ref, m, &s.field, &s.obstacles, &learn, &params),
            (None, ControllerKind::Mccst { r_c }) => mccst_step(&x, &u_ref, r_c, &s.obstacles, &params),
            (None, ControllerKind::Dcm) => unreachable!("DCM runs always carry models"),
        };
        let true_graph = CommGraph::build(&rssi_matrix(&s.field, &x), s.epsilon);
        let lambda2 = true_graph.algebraic_connectivity().map_err(ControllerError::from)?;
        let (min_robot_dist, min_obstacle_dist) = distances(&x, &s.obstacles);
        let dataset_sizes = models.as_ref().map(|m| m.dataset_sizes()).unwrap_or_default();
        let mut record = StepRecord {
            t,
            x: x.clone(),
            u_star: vec![0.0; DIM * n],
            perturbation: perturbation(&vec![0.0; DIM * n], &u_ref),
            u_ref,
            min_robot_dist,
            min_obstacle_dist,
            min_dist: min_robot_dist.min(min_obstacle_dist),
            lambda2,
            tree_edges: Vec::new(),
            relaxed: false,
            max_slack: 0.0,
            status: None,
            dataset_sizes,
        };
        match step {
            Ok(out) => {
                record.status = Some(out.solution.status);
                record.tree_edges = out.tree.sorted_edges();
                record.relaxed = out.solution.status == QpStatus::Relaxed;
                record.max_slack = out.solution.max_slack();
                if out.solution.status == QpStatus::Infeasible {
                    records.push(record);
                    outcome = RunOutcome::Infeasible { step: t };
                    break;
                }
                record.perturbation = perturbation(&out.solution.u, &record.u_ref);
                record.u_star = out.solution.u;
                for (i, xi) in x.iter_mut().enumerate() {
                    *xi = geom::add_scaled(*xi, s.dt, [record.u_star[DIM * i], record.u_star[DIM * i + 1]]);
                }
                records.push(record);
            }
            Err(ControllerError::DisconnectedAtEntry) => {
                records.push(record);
                outcome = RunOutcome::ConnectivityLost { step: t };
                break;
            }
            Err(e) => return Err(e.into()),
        }
    }
    Ok(RunResult {
        records,
        final_x: x,
        goals,
        outcome,
        models,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub steps: usize,
    pub min_robot_dist: f64,
    pub min_obstacle_dist: f64,
    pub min_dist: f64,
    pub min_lambda2: f64,
    pub mean_perturbation: f64,
    /// Population standard deviation.
    pub std_perturbation: f64,
    pub relaxed_steps: usize,
    pub goal_distances: Vec<f64>,
    pub outcome: Option<RunOutcome>,
}

pub fn summarize(records: &[StepRecord]) -> Result<Summary, SimError> {
    if records.is_empty() {
        return Err(SimError::EmptyRun);
    }
    let n = records.len() as f64;
    let mean = records.iter().map(|r| r.perturbation).sum::<f64>() / n;
    let var = records.iter().map(|r| (r.perturbation - mean).powi(2)).sum::<f64>() / n;
    let min = |f: fn(&StepRecord) -> f64| records.iter().map(f).fold(f64::INFINITY, f64::min);
    Ok(Summary {
        steps: records.len(),
        min_robot_dist: min(|r| r.min_robot_dist),
        min_obstacle_dist: min(|r| r.min_obstacle_dist),
        min_dist: min(|r| r.min_dist),
        min_lambda2: min(|r| r.lambda2),
        mean_perturbation: mean,
        std_perturbation: var.sqrt(),
        relaxed_steps: records.iter().filter(|r| r.relaxed).count(),
        goal_distances: Vec::new(),
        outcome: None,
    })
}

/// Held-out probes around a recorded trajectory for the ordered pair
/// `(tx, rx)`: each probe perturbs both positions of a random step by up to
/// `spread` per coordinate. Probes whose true `R − ε` lies within `band` of
/// zero are rejected.
pub fn trajectory_probes(
    s: &Scenario,
    records: &[StepRecord],
    (tx, rx): (usize, usize),
    count: usize,
    spread: f64,
    band: f64,
    seed: u64,
) -> Vec<Probe> {
    assert!(!records.is_empty(), "need a trajectory to probe");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut jitter = |p: Point| [p[0] + rng.gen_range(-spread..=spread), p[1] + rng.gen_range(-spread..=spread)];
    let mut out = Vec::with_capacity(count);
    let mut k = 0usize;
    while out.len() < count {
        // Cycle through steps so every part of the trajectory is probed.
        let rec = &records[(k * 7919) % records.len()];
        k += 1;
        let (a, b) = (jitter(rec.x[tx]), jitter(rec.x[rx]));
        let truth = s.field.rssi(tx, a, rx, b) - s.epsilon;
        if truth.abs() >= band {
            out.push(Probe {
                tx_pos: a,
                rx_pos: b,
                truth,
            });
        }
    }
    out
}

/// Replays the measurements the learner saw along `records` for one pair and
/// scores the model against `probes` every `every` steps and at the end.
/// Returns `(t, dataset size, agreement)`.
pub fn learning_curve(
    s: &Scenario,
    records: &[StepRecord],
    (tx, rx): (usize, usize),
    probes: &[Probe],
    every: usize,
) -> Result<Vec<(usize, usize, f64)>, GpError> {
    let mut model = GpModel::empty(s.gp);
    let mut curve = Vec::new();
    for (k, rec) in records.iter().enumerate() {
        let sample = s
            .field
            .try_measure(tx, rec.x[tx], rx, rec.x[rx], s.psi, s.epsilon)
            .expect("tx and rx differ");
        if let Some(sample) = sample {
            model.admit(sample, s.dedup_res, s.cap)?;
        }
        if k % every.max(1) == 0 || k + 1 == records.len() {
            curve.push((rec.t, model.len(), sign_agreement(&model, probes)));
        }
    }
    Ok(curve)
}

pub const TRAJECTORY_HEADER: &str = "t,robot,x,y,ux_ref,uy_ref,ux,uy";
pub const METRICS_HEADER: &str = "t,min_dist,lambda2,perturbation,relaxed,tree_edges";

pub fn write_trajectory_csv<W: Write>(w: &mut W, records: &[StepRecord]) -> io::Result<()> {
    writeln!(w, "{TRAJECTORY_HEADER}")?;
    for r in records {
        for (i, p) in r.x.iter().enumerate() {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                r.t,
                i,
                p[0],
                p[1],
                r.u_ref[DIM * i],
                r.u_ref[DIM * i + 1],
                r.u_star[DIM * i],
                r.u_star[DIM * i + 1]
            )?;
        }
    }
    Ok(())
}

pub fn write_metrics_csv<W: Write>(w: &mut W, records: &[StepRecord]) -> io::Result<()> {
    writeln!(w, "{METRICS_HEADER}")?;
    for r in records {
        let edges: Vec<String> = r.tree_edges.iter().map(|e| e.to_string()).collect();
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.t,
            r.min_dist,
            r.lambda2,
            r.perturbation,
            u8::from(r.relaxed),
            edges.join(";")
        )?;
    }
    Ok(())
}

impl Summary {
    /// `key = value` lines.
    pub fn write_text<W: Write>(&self, w: &mut W) -> io::Result<()> {
        writeln!(w, "steps = {}", self.steps)?;
        if let Some(o) = self.outcome {
            let text = match o {
                RunOutcome::Completed => "completed".to_string(),
                RunOutcome::ConnectivityLost { step } => format!("connectivity_lost@{step}"),
                RunOutcome::Infeasible { step } => format!("infeasible@{step}"),
            };
            writeln!(w, "outcome = \"{text}\"")?;
        }
        writeln!(w, "min_dist = {}", self.min_dist)?;
        writeln!(w, "min_robot_dist = {}", self.min_robot_dist)?;
        writeln!(w, "min_obstacle_dist = {}", self.min_obstacle_dist)?;
        writeln!(w, "min_lambda2 = {}", self.min_lambda2)?;
        writeln!(w, "mean_perturbation = {}", self.mean_perturbation)?;
        writeln!(w, "std_perturbation = {}", self.std_perturbation)?;
        writeln!(w, "relaxed_steps = {}", self.relaxed_steps)?;
        let g: Vec<String> = self.goal_distances.iter().map(|d| d.to_string()).collect();
        writeln!(w, "goal_distances = [{}]", g.join(", "))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(perturbation: f64, lambda2: f64, min_dist: f64) -> StepRecord {
        StepRecord {
            t: 0,
            x: vec![[0.0, 0.0], [1.0, 0.0]],
            u_ref: vec![0.0; 4],
            u_star: vec![0.0; 4],
            min_robot_dist: min_dist,
            min_obstacle_dist: f64::INFINITY,
            min_dist,
            lambda2,
            perturbation,
            tree_edges: vec![Edge::new(0, 1)],
            relaxed: false,
            max_slack: 0.0,
            status: Some(QpStatus::Optimal),
            dataset_sizes: vec![],
        }
    }

    #[test]
    fn nominal_controller_examples() {
        let u = nominal_controller(&[[1.0, 1.0]], &[[1.0, 1.0]], &[0.5]);
        assert_eq!(u, vec![0.0, 0.0]);
        let u = nominal_controller(&[[0.0, 0.0]], &[[6.0, 8.0]], &[0.5]);
        assert!((geom::norm([u[0], u[1]]) - 0.5).abs() < 1e-15);
        assert!((u[0] / u[1] - 0.75).abs() < 1e-12);
        let u = nominal_controller(&[[0.0, 0.0]], &[[0.3, 0.0]], &[0.5]);
        assert!((u[0] - 0.3).abs() < 1e-15);
    }

    #[test]
    fn disc_barrier_values() {
        use crate::barriers::LinkBarrier;
        let l = DiscLink { r_c: 0.7 };
        let e = l.link(0, [0.0, 0.0], 1, [0.3, 0.0]).unwrap();
        assert!((e.h - 0.4).abs() < 1e-12);
        let e = l.link(0, [0.0, 0.0], 1, [0.7, 0.0]).unwrap();
        assert!(e.h.abs() < 1e-12);
        // Separating increases ‖Δ‖, so ḣ < 0.
        assert!(e.hdot([-0.1, 0.0], [0.1, 0.0]) < 0.0);
    }

    #[test]
    fn huge_disc_radius_gives_complete_graph() {
        let x: Vec<Point> = (0..4).map(|i| [i as f64, 0.0]).collect();
        assert_eq!(disc_graph(&x, 100.0).edges().len(), 6);
    }

    #[test]
    fn summarize_examples() {
        let s = summarize(&[record(0.5, 1.0, 0.4)]).unwrap();
        assert_eq!((s.mean_perturbation, s.std_perturbation, s.min_lambda2, s.min_dist), (0.5, 0.0, 1.0, 0.4));
        let s = summarize(&[record(0.0, 1.0, 0.4), record(2.0, 2.0, 0.3)]).unwrap();
        assert_eq!((s.mean_perturbation, s.std_perturbation), (1.0, 1.0));
        assert_eq!(s.min_dist, 0.3);
        assert!(matches!(summarize(&[]), Err(SimError::EmptyRun)));
    }

    #[test]
    fn metrics_csv_format() {
        let mut r = record(0.25, 1.5, 0.5);
        r.tree_edges = vec![Edge::new(0, 1), Edge::new(1, 2)];
        r.relaxed = true;
        let mut buf = Vec::new();
        write_metrics_csv(&mut buf, &[r]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "t,min_dist,lambda2,perturbation,relaxed,tree_edges\n0,0.5,1.5,0.25,1,0-1;1-2\n");
    }

    #[test]
    fn trajectory_csv_has_row_per_robot() {
        let mut buf = Vec::new();
        write_trajectory_csv(&mut buf, &[record(0.0, 1.0, 1.0), record(0.0, 1.0, 1.0)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 5);
        assert_eq!(text.lines().nth(2).unwrap(), "0,1,1,0,0,0,0,0");
    }
}
