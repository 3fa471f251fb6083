//! Gaussian-process model of one directed link's shifted signal strength.
//!
//! Inputs are stacked `(tx, rx)` positions, targets are `RSSI − ε`. The
//! certificate value is `h = μ − σ²`, so unexplored regions (where the mean
//! reverts to zero and the variance to `σ_f²`) read as disconnected.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{Point, DIM};
use crate::numerics::{self, chol_solve, cholesky, CholFactor, NumericsError, SymMatrix};
use crate::rssi_field::PairSample;

/// Dimension of a stacked transmitter/receiver input.
pub const PAIR_DIM: usize = 2 * DIM;

pub type PairPoint = [f64; PAIR_DIM];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GpError {
    #[error("cannot fit a GP to an empty dataset")]
    EmptyDataset,
    #[error("invalid hyperparameters: {0}")]
    InvalidHyper(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GpHyper {
    pub sigma_f: f64,
    pub length_scale: f64,
    #[serde(default = "default_noise_var")]
    pub noise_var: f64,
}

fn default_noise_var() -> f64 {
    1e-4
}

impl Default for GpHyper {
    fn default() -> Self {
        Self {
            sigma_f: 1.0,
            length_scale: 0.5,
            noise_var: default_noise_var(),
        }
    }
}

impl GpHyper {
    pub fn validate(&self) -> Result<(), GpError> {
        if !(self.sigma_f > 0.0) || !(self.length_scale > 0.0) || !(self.noise_var >= 0.0) {
            return Err(GpError::InvalidHyper(format!(
                "need sigma_f > 0, length_scale > 0, noise_var >= 0; got {self:?}"
            )));
        }
        Ok(())
    }
}

pub fn stack(tx: Point, rx: Point) -> PairPoint {
    [tx[0], tx[1], rx[0], rx[1]]
}

/// Squared-exponential kernel on stacked pair positions.
pub fn kernel(hyper: &GpHyper, a: &PairPoint, b: &PairPoint) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    hyper.sigma_f * hyper.sigma_f * (-d2 / (2.0 * hyper.length_scale * hyper.length_scale)).exp()
}

/// Posterior quantities and the certificate gradient at one query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpEval {
    pub h: f64,
    pub grad_tx: Point,
    pub grad_rx: Point,
    pub mu: f64,
    pub var: f64,
}

#[derive(Debug, Clone)]
pub struct GpModel {
    hyper: GpHyper,
    samples: Vec<PairSample>,
    inputs: Vec<PairPoint>,
    /// `K + noise_var·I`, kept so changed rows can be refactored alone.
    gram: SymMatrix,
    chol: Option<CholFactor>,
    alpha: Vec<f64>,
}

fn cell_of(x: &PairPoint, res: f64) -> [i64; PAIR_DIM] {
    let mut c = [0i64; PAIR_DIM];
    for k in 0..PAIR_DIM {
        c[k] = (x[k] / res).floor() as i64;
    }
    c
}

impl GpModel {
    /// Model with no data: the prior.
    pub fn empty(hyper: GpHyper) -> Self {
        Self {
            hyper,
            samples: Vec::new(),
            inputs: Vec::new(),
            gram: SymMatrix::zeros(0),
            chol: None,
            alpha: Vec::new(),
        }
    }

    pub fn fit(hyper: GpHyper, samples: Vec<PairSample>) -> Result<Self, GpError> {
        hyper.validate()?;
        if samples.is_empty() {
            return Err(GpError::EmptyDataset);
        }
        let mut m = Self::empty(hyper);
        m.inputs = samples.iter().map(|s| stack(s.tx_pos, s.rx_pos)).collect();
        m.samples = samples;
        m.refit_from(0, None)?;
        Ok(m)
    }

    pub fn hyper(&self) -> &GpHyper {
        &self.hyper
    }

    pub fn samples(&self) -> &[PairSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn jitter_used(&self) -> f64 {
        self.chol.as_ref().map_or(0.0, |c| c.jitter_used())
    }

    /// Rebuilds the Gram matrix and factor. Entries of both indices below
    /// `first_changed` are copied from `old_gram`.
    fn refit_from(&mut self, first_changed: usize, old_gram: Option<&SymMatrix>) -> Result<(), GpError> {
        let q = self.inputs.len();
        if q == 0 {
            self.gram = SymMatrix::zeros(0);
            self.chol = None;
            self.alpha.clear();
            return Ok(());
        }
        let hyper = self.hyper;
        let inputs = &self.inputs;
        self.gram = SymMatrix::from_lower_fn(q, |i, j| match old_gram {
            Some(g) if i < first_changed => g.get(i, j),
            _ => {
                let k = kernel(&hyper, &inputs[i], &inputs[j]);
                if i == j {
                    k + hyper.noise_var
                } else {
                    k
                }
            }
        });
        let chol = match (&self.chol, old_gram) {
            (Some(c), Some(_)) => c.refactor_tail(&self.gram, first_changed)?,
            _ => cholesky(&self.gram)?,
        };
        let y: Vec<f64> = self.samples.iter().map(|s| s.y).collect();
        self.alpha = chol_solve(&chol, &y)?;
        self.chol = Some(chol);
        Ok(())
    }

    /// Adds a measurement. Samples falling in the same `dedup_res` cell of
    /// pair space as an existing one replace it; beyond `cap` samples the
    /// oldest is evicted. Returns whether the dataset changed.
    pub fn admit(&mut self, s: PairSample, dedup_res: f64, cap: usize) -> Result<bool, GpError> {
        assert!(cap >= 1, "dataset cap must be at least 1");
        let x = stack(s.tx_pos, s.rx_pos);
        let cell = cell_of(&x, dedup_res);
        let mut first_changed = self.samples.len();
        if let Some(idx) = self.inputs.iter().position(|p| cell_of(p, dedup_res) == cell) {
            if self.samples[idx] == s {
                return Ok(false);
            }
            self.samples.remove(idx);
            self.inputs.remove(idx);
            first_changed = idx;
        }
        self.samples.push(s);
        self.inputs.push(x);
        if self.samples.len() > cap {
            self.samples.remove(0);
            self.inputs.remove(0);
            first_changed = 0;
        }
        let old = std::mem::replace(&mut self.gram, SymMatrix::zeros(0));
        self.refit_from(first_changed, Some(&old))?;
        Ok(true)
    }

    /// Posterior mean, variance, certificate `h = μ − σ²` and its gradient
    /// with respect to the transmitter and receiver positions.
    pub fn evaluate(&self, tx_pos: Point, rx_pos: Point) -> GpEval {
        let hyper = &self.hyper;
        let prior_var = hyper.sigma_f * hyper.sigma_f;
        let chol = match &self.chol {
            Some(c) => c,
            None => {
                return GpEval {
                    h: -prior_var,
                    grad_tx: [0.0; DIM],
                    grad_rx: [0.0; DIM],
                    mu: 0.0,
                    var: prior_var,
                }
            }
        };
        let xs = stack(tx_pos, rx_pos);
        let kvec: Vec<f64> = self.inputs.iter().map(|xq| kernel(hyper, xq, &xs)).collect();
        let mu = numerics::dot(&kvec, &self.alpha);
        // v = K⁻¹ k(X*)
        let mut v = kvec.clone();
        chol.forward_substitute(&mut v);
        chol.backward_substitute(&mut v);
        // k(X*, X*) is constant for a stationary kernel, so its gradient is zero.
        let var = prior_var - numerics::dot(&kvec, &v);
        let inv_l2 = 1.0 / (hyper.length_scale * hyper.length_scale);

        // dk_q/dX* = (X_q − X*) k_q / l²; dh = (α + 2v)ᵀ J.
        let mut grad = [0.0; PAIR_DIM];
        for (q, xq) in self.inputs.iter().enumerate() {
            let coef = (self.alpha[q] + 2.0 * v[q]) * kvec[q] * inv_l2;
            for k in 0..PAIR_DIM {
                grad[k] += coef * (xq[k] - xs[k]);
            }
        }
        GpEval {
            h: mu - var,
            grad_tx: [grad[0], grad[1]],
            grad_rx: [grad[2], grad[3]],
            mu,
            var,
        }
    }
}

/// A held-out pair configuration with its true shifted RSSI `R − ε`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Probe {
    pub tx_pos: Point,
    pub rx_pos: Point,
    pub truth: f64,
}

/// Fraction of probes where `h > 0` agrees with `truth > 0`.
pub fn sign_agreement(model: &GpModel, probes: &[Probe]) -> f64 {
    if probes.is_empty() {
        return f64::NAN;
    }
    let hits = probes
        .iter()
        .filter(|p| (model.evaluate(p.tx_pos, p.rx_pos).h > 0.0) == (p.truth > 0.0))
        .count();
    hits as f64 / probes.len() as f64
}

pub const DATASET_HEADER: &str = "tx_x,tx_y,rx_x,rx_y,y_shifted_db";

pub fn write_dataset_csv<W: Write>(w: &mut W, model: &GpModel) -> io::Result<()> {
    writeln!(w, "{DATASET_HEADER}")?;
    for s in model.samples() {
        writeln!(w, "{},{},{},{},{}", s.tx_pos[0], s.tx_pos[1], s.rx_pos[0], s.rx_pos[1], s.y)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sample(tx: Point, rx: Point, y: f64) -> PairSample {
        PairSample { tx_pos: tx, rx_pos: rx, y }
    }

    #[test]
    fn kernel_examples() {
        let h = GpHyper::default();
        let a = [0.1, 0.2, 0.3, 0.4];
        assert_eq!(kernel(&h, &a, &a), 1.0);
        let b = [0.6, 0.2, 0.3, 0.4];
        assert_abs_diff_eq!(kernel(&h, &a, &b), (-0.5f64).exp(), epsilon = 1e-15);
        assert_abs_diff_eq!((-0.5f64).exp(), 0.6065, epsilon = 1e-4);
    }

    #[test]
    fn kernel_is_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = GpHyper::default();
        for _ in 0..50 {
            let a: PairPoint = std::array::from_fn(|_| rng.gen_range(-2.0..2.0));
            let b: PairPoint = std::array::from_fn(|_| rng.gen_range(-2.0..2.0));
            assert_eq!(kernel(&h, &a, &b), kernel(&h, &b, &a));
        }
    }

    #[test]
    fn prior_variance_is_flat() {
        // The gradient drops the k(X*, X*) term; it must not depend on X*.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let h = GpHyper { sigma_f: 1.7, ..GpHyper::default() };
        for _ in 0..20 {
            let a: PairPoint = std::array::from_fn(|_| rng.gen_range(-2.0..2.0));
            assert_eq!(kernel(&h, &a, &a), 1.7 * 1.7);
        }
    }

    #[test]
    fn single_sample_fit() {
        let hyper = GpHyper::default();
        let m = GpModel::fit(hyper, vec![sample([0.0, 0.0], [1.0, 0.0], 3.0)]).unwrap();
        assert_abs_diff_eq!(m.alpha()[0], 3.0 / (1.0 + 1e-4), epsilon = 1e-15);
    }

    #[test]
    fn empty_fit_is_an_error() {
        assert_eq!(GpModel::fit(GpHyper::default(), vec![]).unwrap_err(), GpError::EmptyDataset);
    }

    #[test]
    fn invalid_hyper_is_rejected() {
        let h = GpHyper {
            length_scale: 0.0,
            ..GpHyper::default()
        };
        assert!(matches!(GpModel::fit(h, vec![sample([0.0; 2], [1.0, 0.0], 1.0)]), Err(GpError::InvalidHyper(_))));
    }

    #[test]
    fn duplicates_with_noise_fit() {
        let s = sample([0.0, 0.0], [1.0, 0.0], 2.0);
        let m = GpModel::fit(GpHyper::default(), vec![s, s, s]).unwrap();
        assert_eq!(m.len(), 3);
        assert!((m.evaluate(s.tx_pos, s.rx_pos).mu - 2.0).abs() < 1e-3);
    }

    #[test]
    fn interpolates_single_noiseless_point() {
        let hyper = GpHyper {
            noise_var: 0.0,
            ..GpHyper::default()
        };
        let m = GpModel::fit(hyper, vec![sample([0.3, 0.1], [1.0, -0.5], 4.0)]).unwrap();
        let e = m.evaluate([0.3, 0.1], [1.0, -0.5]);
        assert_abs_diff_eq!(e.mu, 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(e.var, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(e.h, 4.0, epsilon = 1e-12);
    }

    #[test]
    fn far_queries_revert_to_prior() {
        let m = GpModel::fit(GpHyper::default(), vec![sample([0.0, 0.0], [0.5, 0.0], 6.0)]).unwrap();
        let e = m.evaluate([40.0, 40.0], [41.0, 40.0]);
        assert_abs_diff_eq!(e.mu, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(e.var, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(e.h, -1.0, epsilon = 1e-12);
    }

    #[test]
    fn empty_model_is_the_prior() {
        let e = GpModel::empty(GpHyper::default()).evaluate([0.0, 0.0], [1.0, 1.0]);
        assert_eq!((e.mu, e.var, e.h), (0.0, 1.0, -1.0));
    }

    #[test]
    fn admit_dedups_and_caps() {
        let hyper = GpHyper::default();
        let mut m = GpModel::empty(hyper);
        assert!(m.admit(sample([0.01, 0.01], [1.01, 0.01], 1.0), 0.05, 3).unwrap());
        assert_eq!(m.len(), 1);
        // Same 0.05 m cell in every coordinate.
        m.admit(sample([0.02, 0.03], [1.02, 0.04], 2.0), 0.05, 3).unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!(m.samples()[0].y, 2.0);
        // Re-admitting an identical sample is a no-op.
        assert!(!m.admit(sample([0.02, 0.03], [1.02, 0.04], 2.0), 0.05, 3).unwrap());

        let mut m = GpModel::empty(hyper);
        for k in 0..4 {
            m.admit(sample([0.1 * k as f64, 0.0], [1.0, 0.0], k as f64), 0.05, 3).unwrap();
        }
        assert_eq!(m.len(), 3);
        assert!(m.samples().iter().all(|s| s.y != 0.0));
    }

    #[test]
    fn incremental_admission_matches_batch_fit() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let hyper = GpHyper::default();
        let mut m = GpModel::empty(hyper);
        for _ in 0..60 {
            let tx = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let rx = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            m.admit(sample(tx, rx, rng.gen_range(-5.0..10.0)), 0.2, 25).unwrap();
        }
        let batch = GpModel::fit(hyper, m.samples().to_vec()).unwrap();
        assert_eq!(batch.alpha(), m.alpha());
        let q = ([0.2, 0.1], [-0.3, 0.4]);
        assert_eq!(batch.evaluate(q.0, q.1), m.evaluate(q.0, q.1));
    }

    #[test]
    fn dataset_csv_has_header_and_rows() {
        let m = GpModel::fit(
            GpHyper::default(),
            vec![sample([0.0, 0.5], [1.0, 1.5], 2.5), sample([0.1, 0.5], [1.0, 1.5], -1.0)],
        )
        .unwrap();
        let mut buf = Vec::new();
        write_dataset_csv(&mut buf, &m).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], DATASET_HEADER);
        assert_eq!(lines[1], "0,0.5,1,1.5,2.5");
        assert_eq!(lines.len(), 3);
    }
}
