//! Scenario files and built-in layouts.
//!
//! A scenario file is TOML with six sections:
//!
//! ```toml
//! [run]          # dt, steps, seed, gamma, r_s, psi, epsilon
//! [controller]   # kind = "dcm" | "mccst", r_c
//! [gp]           # sigma_f, length_scale, noise_var, dedup_res, cap
//! [field]        # FieldSpec, with [field.arena]
//! [obstacles]    # r_obs, spacing, boxes = [{min, max}], points = [[x, y]]
//! [[robots]]     # start, goal, alpha
//! ```
//!
//! `--set key=value` overrides address `section.key`, or a bare key when it
//! is unambiguous (`controller` is shorthand for `controller.kind`).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::barriers::ObstacleSet;
use crate::geom::{Point, Rect};
use crate::gp_model::GpHyper;
use crate::rssi_field::{FieldSpec, DEFAULT_EPSILON_DB, DEFAULT_PSI_DB};
use crate::sim::{ControllerKind, RobotSpec, Scenario};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("bad override `{0}`: {1}")]
    Override(String, String),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub dt: f64,
    pub steps: usize,
    pub seed: u64,
    pub gamma: f64,
    pub r_s: f64,
    pub psi: f64,
    pub epsilon: f64,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            dt: 0.05,
            steps: 700,
            seed: 0,
            gamma: 1.0,
            r_s: 0.28,
            psi: DEFAULT_PSI_DB,
            epsilon: DEFAULT_EPSILON_DB,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControllerName {
    Dcm,
    Mccst,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerSection {
    pub kind: ControllerName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_c: Option<f64>,
    /// Defaults to 0.25 dB for dcm and 0.01 m² for mccst.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub link_margin: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GpSection {
    pub sigma_f: f64,
    pub length_scale: f64,
    pub noise_var: f64,
    pub dedup_res: f64,
    pub cap: usize,
}

impl Default for GpSection {
    fn default() -> Self {
        let h = GpHyper::default();
        Self {
            sigma_f: h.sigma_f,
            length_scale: h.length_scale,
            noise_var: h.noise_var,
            dedup_res: 0.05,
            cap: 400,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObstacleSection {
    pub r_obs: f64,
    /// Maximum spacing of the spheres placed along box boundaries.
    pub spacing: f64,
    pub boxes: Vec<Rect>,
    pub points: Vec<Point>,
}

impl Default for ObstacleSection {
    fn default() -> Self {
        Self {
            r_obs: 0.28,
            spacing: 0.1,
            boxes: Vec::new(),
            points: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotEntry {
    pub start: Point,
    pub goal: Point,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default)]
    pub run: RunSection,
    pub controller: ControllerSection,
    #[serde(default)]
    pub gp: GpSection,
    pub field: FieldSpec,
    #[serde(default)]
    pub obstacles: ObstacleSection,
    pub robots: Vec<RobotEntry>,
}

/// Bare override keys and the section each belongs to. `seed` always means
/// `run.seed`; use `field.seed` for the field.
const BARE_KEYS: &[(&str, &str, &str)] = &[
    ("dt", "run", "dt"),
    ("steps", "run", "steps"),
    ("seed", "run", "seed"),
    ("gamma", "run", "gamma"),
    ("r_s", "run", "r_s"),
    ("psi", "run", "psi"),
    ("epsilon", "run", "epsilon"),
    ("controller", "controller", "kind"),
    ("kind", "controller", "kind"),
    ("r_c", "controller", "r_c"),
    ("link_margin", "controller", "link_margin"),
    ("sigma_f", "gp", "sigma_f"),
    ("length_scale", "gp", "length_scale"),
    ("noise_var", "gp", "noise_var"),
    ("dedup_res", "gp", "dedup_res"),
    ("cap", "gp", "cap"),
    ("r_obs", "obstacles", "r_obs"),
    ("spacing", "obstacles", "spacing"),
    ("p0", "field", "p0"),
    ("path_loss_exp", "field", "path_loss_exp"),
    ("n_bumps", "field", "n_bumps"),
    ("bump_amp", "field", "bump_amp"),
    ("bump_len", "field", "bump_len"),
    ("asym_gain_range", "field", "asym_gain_range"),
    ("floor_db", "field", "floor_db"),
];

fn line_col(src: &str, offset: usize) -> (usize, usize) {
    let before = &src[..offset.min(src.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.len() - before.rfind('\n').map_or(0, |p| p + 1) + 1;
    (line, column)
}

fn parse_error(src: &str, e: toml::de::Error) -> ScenarioError {
    let (line, column) = e.span().map_or((0, 0), |s| line_col(src, s.start));
    ScenarioError::Parse {
        line,
        column,
        message: e.message().to_string(),
    }
}

/// Parses a `key=value` override value as a TOML scalar, falling back to a
/// bare string (so `controller=mccst` works unquoted).
fn override_value(raw: &str) -> toml::Value {
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("key v was just parsed"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

fn apply_override(doc: &mut toml::Table, assignment: &str) -> Result<(), ScenarioError> {
    let err = |m: &str| ScenarioError::Override(assignment.to_string(), m.to_string());
    let (key, raw) = assignment.split_once('=').ok_or_else(|| err("expected key=value"))?;
    let (key, raw) = (key.trim(), raw.trim());
    let path: Vec<String> = if key.contains('.') {
        key.split('.').map(str::to_string).collect()
    } else {
        let (_, section, field) = BARE_KEYS
            .iter()
            .find(|(k, _, _)| *k == key)
            .ok_or_else(|| err("unknown key"))?;
        vec![section.to_string(), field.to_string()]
    };
    let mut table = doc;
    for part in &path[..path.len() - 1] {
        table = table
            .entry(part.clone())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| err("path does not name a table"))?;
    }
    table.insert(path[path.len() - 1].clone(), override_value(raw));
    Ok(())
}

impl ScenarioFile {
    /// Parses scenario text and applies `key=value` overrides in order.
    pub fn parse(src: &str, overrides: &[String]) -> Result<Self, ScenarioError> {
        let mut doc: toml::Table = toml::from_str(src).map_err(|e| parse_error(src, e))?;
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        let text = toml::to_string(&doc).map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        toml::from_str(&text).map_err(|e| {
            if overrides.is_empty() {
                parse_error(src, e)
            } else {
                ScenarioError::Invalid(e.message().to_string())
            }
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario files always serialize")
    }

    pub fn build(&self) -> Result<Scenario, ScenarioError> {
        let controller = match (self.controller.kind, self.controller.r_c) {
            (ControllerName::Dcm, _) => ControllerKind::Dcm,
            (ControllerName::Mccst, Some(r_c)) => ControllerKind::Mccst { r_c },
            (ControllerName::Mccst, None) => {
                return Err(ScenarioError::Invalid("mccst controller needs r_c".into()))
            }
        };
        let o = &self.obstacles;
        if !(o.r_obs > 0.0 && o.spacing > 0.0) {
            return Err(ScenarioError::Invalid("r_obs and spacing must be positive".into()));
        }
        let mut obstacles = ObstacleSet::from_boxes(&o.boxes, o.spacing, o.r_obs);
        obstacles.points.extend_from_slice(&o.points);
        Ok(Scenario {
            robots: self
                .robots
                .iter()
                .map(|r| RobotSpec {
                    start: r.start,
                    goal: r.goal,
                    alpha: r.alpha,
                })
                .collect(),
            obstacles,
            field: self.field.clone(),
            psi: self.run.psi,
            epsilon: self.run.epsilon,
            gamma: self.run.gamma,
            r_s: self.run.r_s,
            dt: self.run.dt,
            steps: self.run.steps,
            controller,
            gp: GpHyper {
                sigma_f: self.gp.sigma_f,
                length_scale: self.gp.length_scale,
                noise_var: self.gp.noise_var,
            },
            dedup_res: self.gp.dedup_res,
            cap: self.gp.cap,
            seed: self.run.seed,
            link_margin: self.controller.link_margin.unwrap_or(controller.default_link_margin()),
        })
    }

    /// Switches the controller, resetting the link margin to its default.
    pub fn with_controller(mut self, kind: ControllerKind) -> Self {
        self.controller = match kind {
            ControllerKind::Dcm => ControllerSection {
                kind: ControllerName::Dcm,
                r_c: None,
                link_margin: None,
            },
            ControllerKind::Mccst { r_c } => ControllerSection {
                kind: ControllerName::Mccst,
                r_c: Some(r_c),
                link_margin: None,
            },
        };
        self
    }
}

/// Communication radius the paper-style baseline uses when it is too
/// conservative for the field.
pub const SMALL_RC: f64 = 0.7;
/// Communication radius that over-estimates the field's reach.
pub const LARGE_RC: f64 = 1.2;

/// Default robot speed bound (m/s).
pub const ROBOT_SPEED: f64 = 0.3;

fn base(seed: u64, steps: usize) -> (RunSection, FieldSpec) {
    let run = RunSection {
        seed,
        steps,
        ..RunSection::default()
    };
    let field = FieldSpec {
        seed,
        ..FieldSpec::default()
    };
    (run, field)
}

fn jitter(rng: &mut ChaCha8Rng, p: Point, amount: f64) -> Point {
    [p[0] + rng.gen_range(-amount..=amount), p[1] + rng.gen_range(-amount..=amount)]
}

/// Five robots leave a compact cluster for colored task places spread on
/// the far side of two boxes.
pub fn rendezvous_five(seed: u64) -> ScenarioFile {
    let (run, field) = base(seed, 700);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    // Starts on a tight pentagon, goals on a wider one past the boxes.
    let ring = |c: Point, r: f64, phase: f64, k: usize| {
        let a = phase + k as f64 * std::f64::consts::TAU / 5.0;
        [c[0] + r * a.cos(), c[1] + r * a.sin()]
    };
    let starts: Vec<Point> = (0..5).map(|k| ring([-1.6, 0.0], 0.42, 0.3, k)).collect();
    let goals: Vec<Point> = (0..5).map(|k| ring([1.5, 0.0], 0.72, 0.9, k)).collect();
    let robots = starts
        .iter()
        .zip(&goals)
        .map(|(s, g)| RobotEntry {
            start: jitter(&mut rng, *s, 0.04),
            goal: jitter(&mut rng, *g, 0.04),
            alpha: ROBOT_SPEED,
        })
        .collect();
    ScenarioFile {
        run,
        controller: ControllerSection {
            kind: ControllerName::Dcm,
            r_c: None,
            link_margin: None,
        },
        gp: GpSection::default(),
        field,
        obstacles: ObstacleSection {
            boxes: vec![
                Rect {
                    min: [-0.25, 0.6],
                    max: [0.25, 1.8],
                },
                Rect {
                    min: [-0.25, -1.8],
                    max: [0.25, -0.6],
                },
            ],
            ..ObstacleSection::default()
        },
        robots,
    }
}

/// Goals far beyond what the field can connect: the team has to stop at
/// the edge of its communication range.
pub fn stretched_five(seed: u64) -> ScenarioFile {
    let mut s = rendezvous_five(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x57e7);
    let goals = [[0.0, 0.0], [2.2, 1.6], [2.2, -1.6], [2.8, 0.0], [-0.4, 2.4]];
    for (r, g) in s.robots.iter_mut().zip(goals) {
        r.goal = jitter(&mut rng, g, 0.04);
    }
    s
}

/// `n` robots on a grid spreading out towards goals on a wider grid; used
/// for the team-size sweep.
pub fn spreading_team(n: usize, seed: u64, steps: usize) -> ScenarioFile {
    let (run, field) = base(seed, steps);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7ea3);
    let cols = (n as f64).sqrt().ceil() as usize;
    let rows = n.div_ceil(cols);
    let spacing = 0.5;
    let spread = 2.4;
    let cx = 0.5 * (cols - 1) as f64 * spacing;
    let cy = 0.5 * (rows - 1) as f64 * spacing;
    let robots = (0..n)
        .map(|k| {
            let p = [(k % cols) as f64 * spacing - cx, (k / cols) as f64 * spacing - cy];
            RobotEntry {
                start: jitter(&mut rng, p, 0.03),
                goal: jitter(&mut rng, [spread * p[0] + 0.6, spread * p[1]], 0.1),
                alpha: ROBOT_SPEED,
            }
        })
        .collect();
    let half = 0.5 * (cols.max(rows) as f64) * spacing * spread + 1.5;
    let field = FieldSpec {
        arena: Rect {
            min: [-half, -half],
            max: [half, half],
        },
        ..field
    };
    ScenarioFile {
        run,
        controller: ControllerSection {
            kind: ControllerName::Dcm,
            r_c: None,
            link_margin: None,
        },
        gp: GpSection::default(),
        field,
        obstacles: ObstacleSection::default(),
        robots,
    }
}

/// Sweep trial `trial` with `n` robots: the team layout comes from
/// [`spreading_team`], everything else from `base`. The trial index seeds
/// both the run and the field.
pub fn sweep_member(base: &ScenarioFile, n: usize, trial: u64) -> ScenarioFile {
    let team = spreading_team(n, trial, base.run.steps);
    ScenarioFile {
        run: RunSection {
            seed: trial,
            ..base.run.clone()
        },
        controller: base.controller.clone(),
        gp: base.gp.clone(),
        field: FieldSpec {
            seed: trial,
            arena: team.field.arena,
            ..base.field.clone()
        },
        obstacles: ObstacleSection {
            boxes: Vec::new(),
            points: Vec::new(),
            ..base.obstacles.clone()
        },
        robots: team.robots,
    }
}
