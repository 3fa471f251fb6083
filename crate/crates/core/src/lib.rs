//! Data-driven connectivity maintenance for multi-robot teams.
//!
//! Robots learn the signal strength of every directed link online with a
//! Gaussian process, turn the learned model into control barrier
//! certificates, keep only the spanning tree whose certificates disturb the
//! nominal motion least, and filter the nominal control through a QP that
//! also enforces collision avoidance.
//!
//! | Module | Contents |
//! |--------|----------|
//! | [`numerics`] | Jittered Cholesky, Jacobi eigenvalues |
//! | [`rssi_field`] | Synthetic ground-truth RSSI and measurement admission |
//! | [`gp_model`] | Per-link GP, certificate value and gradient |
//! | [`comm_graph`] | Strong-link graph, edge weights, Kruskal MST, λ₂ |
//! | [`barriers`] | Safety, obstacle and link constraint rows |
//! | [`controller`] | Active-set QP and the per-step pipeline |
//! | [`sim`] | Fixed-step simulation, metrics, CSV logs |
//! | [`scenario`] | Scenario files, overrides and built-in layouts |
//! | [`cli`] | `run`, `export-field` and `sweep` commands |

// Validation uses `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod barriers;
pub mod cli;
pub mod comm_graph;
pub mod controller;
pub mod geom;
pub mod gp_model;
pub mod numerics;
pub mod rssi_field;
pub mod scenario;
pub mod sim;
