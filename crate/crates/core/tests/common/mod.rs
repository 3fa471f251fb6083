//! Independent reference implementations used by the oracle and acceptance
//! tests. Each one takes the slow, obvious route.

#![allow(dead_code)]

use dcm::barriers::ConstraintRow;
use dcm::controller::QpProblem;
use dcm::geom::Point;
use dcm::gp_model::{kernel, stack, GpHyper};
use dcm::rssi_field::PairSample;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

pub fn random_point<R: Rng>(rng: &mut R, half: f64) -> Point {
    [rng.gen_range(-half..half), rng.gen_range(-half..half)]
}

pub fn random_dataset<R: Rng>(rng: &mut R, q: usize) -> Vec<PairSample> {
    (0..q)
        .map(|_| PairSample {
            tx_pos: random_point(rng, 1.5),
            rx_pos: random_point(rng, 1.5),
            y: rng.gen_range(-5.0..5.0),
        })
        .collect()
}

/// Posterior mean and variance with an explicit inverse of `K + σ_n² I`.
pub fn dense_gp(hyper: &GpHyper, data: &[PairSample], tx: Point, rx: Point) -> (f64, f64) {
    let q = data.len();
    let xs: Vec<_> = data.iter().map(|s| stack(s.tx_pos, s.rx_pos)).collect();
    let k = DMatrix::from_fn(q, q, |a, b| kernel(hyper, &xs[a], &xs[b]) + if a == b { hyper.noise_var } else { 0.0 });
    let kinv = k.try_inverse().expect("gram matrix is invertible");
    let star = stack(tx, rx);
    let ks = DVector::from_fn(q, |a, _| kernel(hyper, &xs[a], &star));
    let y = DVector::from_iterator(q, data.iter().map(|s| s.y));
    let mu = ks.dot(&(&kinv * y));
    let var = kernel(hyper, &star, &star) - ks.dot(&(&kinv * &ks));
    (mu, var)
}

/// Minimum spanning-tree weight by trying every `(n − 1)`-edge subset.
/// `None` if the graph is disconnected.
pub fn brute_force_mst(n: usize, edges: &[(usize, usize, f64)]) -> Option<f64> {
    let k = n - 1;
    let m = edges.len();
    let mut best: Option<f64> = None;
    for mask in 0u32..(1 << m) {
        if mask.count_ones() as usize != k {
            continue;
        }
        let mut label: Vec<usize> = (0..n).collect();
        let mut total = 0.0;
        let mut acyclic = true;
        for (e, &(a, b, w)) in edges.iter().enumerate() {
            if mask & (1 << e) == 0 {
                continue;
            }
            let (la, lb) = (label[a], label[b]);
            if la == lb {
                acyclic = false;
                break;
            }
            for l in label.iter_mut() {
                if *l == lb {
                    *l = la;
                }
            }
            total += w;
        }
        if acyclic && best.is_none_or(|b| total < b) {
            best = Some(total);
        }
    }
    best
}

/// `a·z ≥ b` over the stacked decision vector.
struct Half {
    a: Vec<f64>,
    b: f64,
}

fn halfspaces(p: &QpProblem, soft: bool) -> (Vec<Half>, usize) {
    let nu = 2 * p.n_robots;
    let ns = if soft { p.rows.iter().filter(|r| r.relaxable).count() } else { 0 };
    let nz = nu + ns;
    let mut out = Vec::new();
    let mut col = nu;
    for r in &p.rows {
        let mut a = r.dense(p.n_robots);
        a.resize(nz, 0.0);
        if soft && r.relaxable {
            a[col] = 1.0;
            let mut s = vec![0.0; nz];
            s[col] = 1.0;
            out.push(Half { a: s, b: 0.0 });
            col += 1;
        }
        out.push(Half { a, b: r.rhs });
    }
    for i in 0..p.n_robots {
        let bound = p.alpha[i] / 2f64.sqrt();
        for k in 0..2 {
            for sign in [1.0, -1.0] {
                let mut a = vec![0.0; nz];
                a[2 * i + k] = sign;
                out.push(Half { a, b: -bound });
            }
        }
    }
    (out, nz)
}

/// Tries every active set and returns the unique KKT point, if any.
fn enumerate(p: &QpProblem, soft: bool) -> Option<Vec<f64>> {
    let (cons, nz) = halfspaces(p, soft);
    let nu = 2 * p.n_robots;
    let h: Vec<f64> = (0..nz).map(|i| if i < nu { 2.0 } else { 2.0 * p.slack_penalty }).collect();
    let mut target = vec![0.0; nz];
    target[..nu].copy_from_slice(&p.u_ref);
    let c = cons.len();
    let box_base = c - 2 * nu;
    for mask in 0u32..(1 << c) {
        // Upper and lower bounds on one coordinate are never both active.
        if (0..nu).any(|k| (mask >> (box_base + 2 * k)) & 0b11 == 0b11) {
            continue;
        }
        let act: Vec<usize> = (0..c).filter(|k| mask & (1 << k) != 0).collect();
        if act.len() > nz {
            continue;
        }
        let dim = nz + act.len();
        let mut m = DMatrix::zeros(dim, dim);
        let mut rhs = DVector::zeros(dim);
        for i in 0..nz {
            m[(i, i)] = h[i];
            rhs[i] = h[i] * target[i];
        }
        for (r, &k) in act.iter().enumerate() {
            for i in 0..nz {
                m[(i, nz + r)] = -cons[k].a[i];
                m[(nz + r, i)] = cons[k].a[i];
            }
            rhs[nz + r] = cons[k].b;
        }
        let lu = m.lu();
        let Some(sol) = lu.solve(&rhs) else { continue };
        let z: Vec<f64> = sol.iter().take(nz).copied().collect();
        let dual_ok = (0..act.len()).all(|r| sol[nz + r] >= -1e-9);
        let primal_ok = cons
            .iter()
            .all(|hs| hs.a.iter().zip(&z).map(|(a, v)| a * v).sum::<f64>() >= hs.b - 1e-9);
        if dual_ok && primal_ok && z.iter().all(|v| v.is_finite()) {
            return Some(z[..nu].to_vec());
        }
    }
    None
}

/// Reference solution of the filter QP: link rows hard when that is
/// feasible, otherwise the slack-penalized problem. `None` means infeasible.
pub fn kkt_oracle(p: &QpProblem) -> Option<Vec<f64>> {
    enumerate(p, false).or_else(|| {
        if p.rows.iter().any(|r| r.relaxable) {
            enumerate(p, true)
        } else {
            None
        }
    })
}

/// Closed-form projection of `u_ref` onto one half-space.
pub fn project(row: &ConstraintRow, n_robots: usize, u_ref: &[f64]) -> Vec<f64> {
    let a = row.dense(n_robots);
    let gap = row.rhs - row.lhs(u_ref);
    let norm2: f64 = a.iter().map(|v| v * v).sum();
    let t = gap.max(0.0) / norm2;
    u_ref.iter().zip(&a).map(|(u, ai)| u + t * ai).collect()
}
