//! Synthetic ground-truth received signal strength.
//!
//! The field is a log-distance path-loss model with smooth Gaussian
//! shadowing around each transmitter and a constant gain per ordered
//! (transmitter, receiver) pair, which makes links asymmetric. All randomness
//! comes from ChaCha streams keyed by `(seed, ids)`, so a query never depends
//! on what was queried before it.

use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{self, Point, Rect};

/// Distances below this are treated as this (avoids log10(0)).
pub const MIN_DISTANCE: f64 = 0.01;

/// Strong-connection threshold ε used throughout the experiments (dB).
pub const DEFAULT_EPSILON_DB: f64 = -25.0;
/// Measurement threshold ψ (dB).
pub const DEFAULT_PSI_DB: f64 = -30.0;

pub type RobotId = usize;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldError {
    #[error("transmitter and receiver are the same robot ({0})")]
    SamePair(RobotId),
    #[error("invalid field spec: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSpec {
    pub seed: u64,
    /// Received power at 1 m (dB).
    pub p0: f64,
    pub path_loss_exp: f64,
    /// Shadowing bumps per transmitter.
    pub n_bumps: usize,
    /// Bump amplitudes are drawn from `[-bump_amp, bump_amp]` (dB).
    pub bump_amp: f64,
    /// Bump length scale (m).
    pub bump_len: f64,
    /// Per-ordered-pair gain range (dB).
    pub asym_gain_range: f64,
    #[serde(default = "default_floor")]
    pub floor_db: f64,
    pub arena: Rect,
}

fn default_floor() -> f64 {
    -100.0
}

impl Default for FieldSpec {
    fn default() -> Self {
        Self {
            seed: 7,
            p0: -24.0,
            path_loss_exp: 3.0,
            n_bumps: 6,
            bump_amp: 1.5,
            bump_len: 0.8,
            asym_gain_range: 1.0,
            floor_db: -100.0,
            arena: Rect {
                min: [-3.0, -3.0],
                max: [3.0, 3.0],
            },
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Bump {
    center: Point,
    amp: f64,
}

/// Transmitter-to-receiver measurement stored in a GP dataset. `y` is the
/// RSSI shifted by the strong-connection threshold, so `y >= 0` means a
/// strong link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairSample {
    pub tx_pos: Point,
    pub rx_pos: Point,
    pub y: f64,
}

impl FieldSpec {
    /// Checks the parameter invariants against the thresholds in use.
    pub fn validate(&self, psi: f64, epsilon: f64) -> Result<(), FieldError> {
        let bad = |m: &str| Err(FieldError::InvalidSpec(m.to_string()));
        if !(self.floor_db < psi && psi < epsilon && epsilon < 0.0) {
            return bad("thresholds must satisfy floor_db < psi < epsilon < 0");
        }
        if !(self.bump_len > 0.0) {
            return bad("bump_len must be positive");
        }
        if !(self.path_loss_exp > 0.0) {
            return bad("path_loss_exp must be positive");
        }
        if self.bump_amp < 0.0 || self.asym_gain_range < 0.0 {
            return bad("bump_amp and asym_gain_range must be non-negative");
        }
        if !(self.arena.max[0] > self.arena.min[0] && self.arena.max[1] > self.arena.min[1]) {
            return bad("arena must have positive extent");
        }
        Ok(())
    }

    fn stream(&self, tag: u8, a: RobotId, b: RobotId) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.seed.to_le_bytes());
        key[8..16].copy_from_slice(&(a as u64).to_le_bytes());
        key[16..24].copy_from_slice(&(b as u64).to_le_bytes());
        key[24] = tag;
        ChaCha8Rng::from_seed(key)
    }

    fn bumps(&self, tx_id: RobotId) -> impl Iterator<Item = Bump> {
        let mut rng = self.stream(1, tx_id, 0);
        let arena = self.arena;
        let amp = self.bump_amp;
        (0..self.n_bumps).map(move |_| {
            let cx = rng.gen_range(arena.min[0]..=arena.max[0]);
            let cy = rng.gen_range(arena.min[1]..=arena.max[1]);
            let a = if amp > 0.0 { rng.gen_range(-amp..=amp) } else { 0.0 };
            Bump {
                center: [cx, cy],
                amp: a,
            }
        })
    }

    /// Shadowing term around transmitter `tx_id`, evaluated at the receiver.
    pub fn shadowing(&self, tx_id: RobotId, rx_pos: Point) -> f64 {
        let inv = 1.0 / (2.0 * self.bump_len * self.bump_len);
        self.bumps(tx_id)
            .map(|b| b.amp * (-geom::norm_sq(geom::sub(rx_pos, b.center)) * inv).exp())
            .sum()
    }

    /// Constant gain of the ordered pair `tx_id -> rx_id`.
    pub fn pair_gain(&self, tx_id: RobotId, rx_id: RobotId) -> f64 {
        if self.asym_gain_range > 0.0 {
            let r = self.asym_gain_range;
            self.stream(2, tx_id, rx_id).gen_range(-r..=r)
        } else {
            0.0
        }
    }

    /// Ground-truth RSSI from `tx_id` at `tx_pos` to `rx_id` at `rx_pos` (dB),
    /// clamped into `[floor_db, 0]`.
    pub fn rssi(&self, tx_id: RobotId, tx_pos: Point, rx_id: RobotId, rx_pos: Point) -> f64 {
        let d = geom::dist(tx_pos, rx_pos).max(MIN_DISTANCE);
        let raw = self.p0 - 10.0 * self.path_loss_exp * d.log10()
            + self.shadowing(tx_id, rx_pos)
            + self.pair_gain(tx_id, rx_id);
        raw.clamp(self.floor_db, 0.0)
    }

    /// Measurement admission: a sample is produced iff the RSSI reaches `psi`.
    pub fn try_measure(
        &self,
        tx_id: RobotId,
        tx_pos: Point,
        rx_id: RobotId,
        rx_pos: Point,
        psi: f64,
        epsilon: f64,
    ) -> Result<Option<PairSample>, FieldError> {
        if tx_id == rx_id {
            return Err(FieldError::SamePair(tx_id));
        }
        let r = self.rssi(tx_id, tx_pos, rx_id, rx_pos);
        Ok((r >= psi).then_some(PairSample {
            tx_pos,
            rx_pos,
            y: r - epsilon,
        }))
    }

    /// Samples the field of a fixed transmitter over an `nx × ny` receiver
    /// grid spanning the arena, row by row (y outer, x inner).
    pub fn grid(&self, tx_id: RobotId, tx_pos: Point, rx_id: RobotId, nx: usize, ny: usize) -> Vec<(f64, f64, f64)> {
        let coord = |lo: f64, hi: f64, k: usize, n: usize| {
            if n <= 1 {
                0.5 * (lo + hi)
            } else {
                lo + (hi - lo) * k as f64 / (n - 1) as f64
            }
        };
        let a = self.arena;
        let mut out = Vec::with_capacity(nx * ny);
        for iy in 0..ny {
            let y = coord(a.min[1], a.max[1], iy, ny);
            for ix in 0..nx {
                let x = coord(a.min[0], a.max[0], ix, nx);
                out.push((x, y, self.rssi(tx_id, tx_pos, rx_id, [x, y])));
            }
        }
        out
    }
}

pub const FIELD_GRID_HEADER: &str = "x,y,rssi_db";

pub fn write_field_grid_csv<W: Write>(w: &mut W, grid: &[(f64, f64, f64)]) -> io::Result<()> {
    writeln!(w, "{FIELD_GRID_HEADER}")?;
    for (x, y, r) in grid {
        writeln!(w, "{x},{y},{r}")?;
    }
    Ok(())
}
