//! Linear control constraints from control barrier functions.
//!
//! Dynamics are single integrators (`ẋ_i = u_i`), so every `ḣ + γh ≥ 0`
//! condition becomes a row `Σ_k a_k · u_k ≥ b` over the stacked control.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::comm_graph::SpanningTree;
use crate::geom::{self, Point, Rect, DIM};
use crate::gp_model::GpModel;
use crate::rssi_field::RobotId;

/// Obstacle rows farther than `r_obs` plus this margin are dropped.
pub const OBSTACLE_ACTIVATION_MARGIN: f64 = 1.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BarrierError {
    #[error("no link model for {tx} -> {rx}")]
    ModelMissing { tx: RobotId, rx: RobotId },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowOrigin {
    Safety { i: RobotId, j: RobotId },
    Obstacle { i: RobotId, o: usize },
    Link { tx: RobotId, rx: RobotId },
}

impl fmt::Display for RowOrigin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RowOrigin::Safety { i, j } => write!(f, "safety({i},{j})"),
            RowOrigin::Obstacle { i, o } => write!(f, "obstacle({i},{o})"),
            RowOrigin::Link { tx, rx } => write!(f, "link({tx}->{rx})"),
        }
    }
}

/// `Σ coeffs_k · u_k >= rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintRow {
    pub coeffs: Vec<(RobotId, Point)>,
    pub rhs: f64,
    pub origin: RowOrigin,
    pub relaxable: bool,
}

impl ConstraintRow {
    /// Left-hand side for a stacked control vector.
    pub fn lhs(&self, u: &[f64]) -> f64 {
        self.coeffs
            .iter()
            .map(|(r, a)| (0..DIM).map(|k| a[k] * u[r * DIM + k]).sum::<f64>())
            .sum()
    }

    pub fn residual(&self, u: &[f64]) -> f64 {
        self.lhs(u) - self.rhs
    }

    /// Dense coefficient vector of length `DIM * n_robots`.
    pub fn dense(&self, n_robots: usize) -> Vec<f64> {
        let mut a = vec![0.0; DIM * n_robots];
        for (r, c) in &self.coeffs {
            for k in 0..DIM {
                a[r * DIM + k] += c[k];
            }
        }
        a
    }
}

/// Obstacles discretized into spheres of radius `r_obs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObstacleSet {
    pub points: Vec<Point>,
    pub r_obs: f64,
}

impl ObstacleSet {
    pub fn new(points: Vec<Point>, r_obs: f64) -> Self {
        assert!(r_obs > 0.0, "r_obs must be positive");
        assert!(points.iter().all(|p| p.iter().all(|v| v.is_finite())));
        Self { points, r_obs }
    }

    /// Places points along the boundary of each box, at most `spacing` apart.
    pub fn from_boxes(boxes: &[Rect], spacing: f64, r_obs: f64) -> Self {
        let mut points = Vec::new();
        for b in boxes {
            let corners = [b.min, [b.max[0], b.min[1]], b.max, [b.min[0], b.max[1]]];
            for c in 0..4 {
                let (p, q) = (corners[c], corners[(c + 1) % 4]);
                let len = geom::dist(p, q);
                let segs = ((len / spacing).ceil() as usize).max(1);
                for s in 0..segs {
                    let t = s as f64 / segs as f64;
                    points.push([p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]);
                }
            }
        }
        Self::new(points, r_obs)
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Distance from `p` to the nearest obstacle centre.
    pub fn min_distance(&self, p: Point) -> f64 {
        self.points
            .iter()
            .map(|o| geom::dist(p, *o))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Inter-robot collision avoidance, one row per unordered pair, ordered by `(i, j)`.
pub fn safety_rows(x: &[Point], r_s: f64, gamma: f64) -> Vec<ConstraintRow> {
    let n = x.len();
    let mut rows = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            let d = geom::sub(x[i], x[j]);
            rows.push(ConstraintRow {
                coeffs: vec![(i, [2.0 * d[0], 2.0 * d[1]]), (j, [-2.0 * d[0], -2.0 * d[1]])],
                rhs: -gamma * (geom::norm_sq(d) - r_s * r_s),
                origin: RowOrigin::Safety { i, j },
                relaxable: false,
            });
        }
    }
    rows
}

/// Robot–obstacle avoidance, ordered by `(i, o)`; rows for obstacles beyond
/// `r_obs + activation_margin` are culled.
pub fn obstacle_rows(x: &[Point], obs: &ObstacleSet, gamma: f64, activation_margin: f64) -> Vec<ConstraintRow> {
    let reach = obs.r_obs + activation_margin;
    let mut rows = Vec::new();
    for (i, xi) in x.iter().enumerate() {
        for (o, xo) in obs.points.iter().enumerate() {
            let d = geom::sub(*xi, *xo);
            if geom::norm(d) > reach {
                continue;
            }
            rows.push(ConstraintRow {
                coeffs: vec![(i, [2.0 * d[0], 2.0 * d[1]])],
                rhs: -gamma * (geom::norm_sq(d) - obs.r_obs * obs.r_obs),
                origin: RowOrigin::Obstacle { i, o },
                relaxable: false,
            });
        }
    }
    rows
}

/// Value and position gradient of a directed link barrier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkEval {
    pub h: f64,
    pub grad_tx: Point,
    pub grad_rx: Point,
}

impl LinkEval {
    /// `ḣ` under single-integrator motion.
    pub fn hdot(&self, u_tx: Point, u_rx: Point) -> f64 {
        geom::dot(self.grad_tx, u_tx) + geom::dot(self.grad_rx, u_rx)
    }
}

/// A barrier `h_{tx,rx}(x_tx, x_rx)` whose 0-superlevel set means "link up".
pub trait LinkBarrier {
    fn link(&self, tx: RobotId, x_tx: Point, rx: RobotId, x_rx: Point) -> Result<LinkEval, BarrierError>;
}

/// One learned model per ordered robot pair.
#[derive(Debug, Clone)]
pub struct GpLinkModels {
    n: usize,
    models: Vec<Option<GpModel>>,
}

impl GpLinkModels {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            models: vec![None; n * n],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, tx: RobotId, rx: RobotId) -> Option<&GpModel> {
        self.models[tx * self.n + rx].as_ref()
    }

    pub fn get_or_insert_with(&mut self, tx: RobotId, rx: RobotId, f: impl FnOnce() -> GpModel) -> &mut GpModel {
        self.models[tx * self.n + rx].get_or_insert_with(f)
    }

    pub fn insert(&mut self, tx: RobotId, rx: RobotId, m: GpModel) {
        self.models[tx * self.n + rx] = Some(m);
    }

    /// Dataset size for every ordered pair, row-major, diagonal included as 0.
    pub fn dataset_sizes(&self) -> Vec<usize> {
        self.models.iter().map(|m| m.as_ref().map_or(0, |m| m.len())).collect()
    }
}

impl LinkBarrier for GpLinkModels {
    fn link(&self, tx: RobotId, x_tx: Point, rx: RobotId, x_rx: Point) -> Result<LinkEval, BarrierError> {
        let m = self
            .get(tx, rx)
            .filter(|m| !m.is_empty())
            .ok_or(BarrierError::ModelMissing { tx, rx })?;
        let e = m.evaluate(x_tx, x_rx);
        Ok(LinkEval {
            h: e.h,
            grad_tx: e.grad_tx,
            grad_rx: e.grad_rx,
        })
    }
}

/// Distance-disc link `h = r_c² − ‖x_tx − x_rx‖²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscLink {
    pub r_c: f64,
}

impl LinkBarrier for DiscLink {
    fn link(&self, _tx: RobotId, x_tx: Point, _rx: RobotId, x_rx: Point) -> Result<LinkEval, BarrierError> {
        let d = geom::sub(x_tx, x_rx);
        Ok(LinkEval {
            h: self.r_c * self.r_c - geom::norm_sq(d),
            grad_tx: [-2.0 * d[0], -2.0 * d[1]],
            grad_rx: [2.0 * d[0], 2.0 * d[1]],
        })
    }
}

/// Two relaxable rows per tree edge, `i -> j` then `j -> i`, in tree order.
pub fn connectivity_rows(
    links: &impl LinkBarrier,
    x: &[Point],
    tree: &SpanningTree,
    gamma: f64,
    margin: f64,
) -> Result<Vec<ConstraintRow>, BarrierError> {
    let mut rows = Vec::with_capacity(2 * tree.edges().len());
    for e in tree.edges() {
        for (tx, rx) in [(e.i(), e.j()), (e.j(), e.i())] {
            let l = links.link(tx, x[tx], rx, x[rx])?;
            rows.push(ConstraintRow {
                coeffs: vec![(tx, l.grad_tx), (rx, l.grad_rx)],
                rhs: -gamma * (l.h - margin),
                origin: RowOrigin::Link { tx, rx },
                relaxable: true,
            });
        }
    }
    Ok(rows)
}
