mod common;

use dcm::barriers::{ConstraintRow, RowOrigin};
use dcm::comm_graph::{CommGraph, Edge, UnionFind};
use dcm::controller::{solve, QpProblem, QpStatus, DEFAULT_SLACK_PENALTY};
use dcm::gp_model::{GpHyper, GpModel};
use dcm::numerics::{cholesky, symmetric_eigenvalues, SymMatrix};
use dcm::rssi_field::PairSample;
use nalgebra::DMatrix;
use proptest::prelude::*;

use common::{brute_force_mst, dense_gp, kkt_oracle};

fn point() -> impl Strategy<Value = [f64; 2]> {
    [-1.5..1.5f64, -1.5..1.5f64]
}

fn sample() -> impl Strategy<Value = PairSample> {
    (point(), point(), -5.0..5.0f64).prop_map(|(tx_pos, rx_pos, y)| PairSample { tx_pos, rx_pos, y })
}

fn spd(n: usize) -> impl Strategy<Value = SymMatrix> {
    prop::collection::vec(-1.0..1.0f64, n * n).prop_map(move |a| {
        // AᵀA + I is symmetric positive definite.
        SymMatrix::from_lower_fn(n, |i, j| {
            (0..n).map(|k| a[k * n + i] * a[k * n + j]).sum::<f64>() + if i == j { 1.0 } else { 0.0 }
        })
    })
}

fn to_dense(m: &SymMatrix) -> DMatrix<f64> {
    DMatrix::from_fn(m.n(), m.n(), |i, j| m.get(i, j))
}

fn graph_edges(n: usize) -> impl Strategy<Value = Vec<(usize, usize)>> {
    prop::collection::vec((0..n, 0..n), 0..=n * 2)
        .prop_map(|pairs| pairs.into_iter().filter(|(a, b)| a != b).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gp_posterior_matches_dense_inverse(data in prop::collection::vec(sample(), 1..15), q in (point(), point())) {
        let hyper = GpHyper::default();
        let model = GpModel::fit(hyper, data.clone()).unwrap();
        let e = model.evaluate(q.0, q.1);
        let (mu, var) = dense_gp(&hyper, &data, q.0, q.1);
        prop_assert!((e.mu - mu).abs() <= 1e-8 * mu.abs().max(1.0));
        prop_assert!((e.var - var).abs() <= 1e-8);
        prop_assert!((e.h - (e.mu - e.var)).abs() < 1e-15);
        prop_assert!(e.var >= 0.0 && e.var <= hyper.sigma_f * hyper.sigma_f + 1e-12);
    }

    #[test]
    fn incremental_admission_matches_batch_fit(data in prop::collection::vec(sample(), 1..25)) {
        let hyper = GpHyper::default();
        let mut model = GpModel::empty(hyper);
        for s in &data {
            model.admit(*s, 0.05, 400).unwrap();
        }
        let batch = GpModel::fit(hyper, model.samples().to_vec()).unwrap();
        for s in data.iter().take(3) {
            let (a, b) = (model.evaluate(s.tx_pos, s.rx_pos), batch.evaluate(s.tx_pos, s.rx_pos));
            prop_assert!((a.mu - b.mu).abs() < 1e-9 && (a.var - b.var).abs() < 1e-9);
        }
    }

    #[test]
    fn cholesky_reconstructs(m in (1usize..7).prop_flat_map(spd)) {
        let f = cholesky(&m).unwrap();
        let r = f.reconstruct();
        for i in 0..m.n() {
            for j in 0..m.n() {
                prop_assert!((r.get(i, j) - m.get(i, j)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn jacobi_matches_nalgebra(m in (1usize..8).prop_flat_map(spd)) {
        let mut ours = symmetric_eigenvalues(&m).unwrap();
        ours.sort_by(f64::total_cmp);
        let mut theirs: Vec<f64> = to_dense(&m).symmetric_eigen().eigenvalues.iter().copied().collect();
        theirs.sort_by(f64::total_cmp);
        for (a, b) in ours.iter().zip(&theirs) {
            prop_assert!((a - b).abs() < 1e-9 * b.abs().max(1.0));
        }
        prop_assert!((ours.iter().sum::<f64>() - m.trace()).abs() < 1e-9);
    }

    #[test]
    fn lambda2_is_zero_iff_disconnected(n in 2usize..8, raw in graph_edges(8)) {
        let edges: Vec<Edge> = raw.into_iter().filter(|(a, b)| *a < n && *b < n).map(|(a, b)| Edge::new(a, b)).collect();
        let g = CommGraph::from_edges(n, edges.clone());
        let mut uf = UnionFind::new(n);
        for e in &edges {
            uf.union(e.i(), e.j());
        }
        let l2 = g.algebraic_connectivity().unwrap();
        prop_assert!(l2 > -1e-9);
        prop_assert_eq!(uf.components() == 1, l2 > 1e-9);
        prop_assert_eq!(g.is_strongly_connected(), uf.components() == 1);
    }

    #[test]
    fn kruskal_matches_enumeration(n in 2usize..7, raw in graph_edges(6), seed in any::<u64>()) {
        let mut edges: Vec<Edge> = (0..n - 1).map(|i| Edge::new(i, i + 1)).collect();
        edges.extend(raw.into_iter().filter(|(a, b)| *a < n && *b < n).map(|(a, b)| Edge::new(a, b)));
        let mut g = CommGraph::from_edges(n, edges);
        let mut weighted = Vec::new();
        for (k, e) in g.edges().to_vec().into_iter().enumerate() {
            let w = ((seed >> (k % 60)) % 9) as f64 - 4.0;
            g.set_weight(e, w).unwrap();
            weighted.push((e.i(), e.j(), w));
        }
        let tree = g.min_spanning_tree().unwrap();
        prop_assert_eq!(tree.edges().len(), n - 1);
        prop_assert_eq!(Some(tree.total_weight()), brute_force_mst(n, &weighted));
    }

    #[test]
    fn qp_matches_kkt_enumeration(
        u_ref in prop::collection::vec(-0.6..0.6f64, 4),
        rows in prop::collection::vec(([-1.0..1.0f64, -1.0..1.0, -1.0..1.0, -1.0..1.0], -0.3..0.3f64, any::<bool>()), 1..=3),
        alpha in [0.2..1.0f64, 0.2..1.0],
    ) {
        let rows: Vec<ConstraintRow> = rows
            .into_iter()
            .enumerate()
            .map(|(k, (a, rhs, relaxable))| ConstraintRow {
                coeffs: vec![(0, [a[0], a[1]]), (1, [a[2], a[3]])],
                rhs,
                origin: RowOrigin::Link { tx: 0, rx: k },
                relaxable,
            })
            .collect();
        let p = QpProblem { n_robots: 2, u_ref, rows, alpha: alpha.to_vec(), slack_penalty: DEFAULT_SLACK_PENALTY };
        let sol = solve(&p).unwrap();
        match kkt_oracle(&p) {
            Some(u) => {
                prop_assert_ne!(sol.status, QpStatus::Infeasible);
                for (a, b) in sol.u.iter().zip(&u) {
                    prop_assert!((a - b).abs() < 1e-6, "{:?} vs {:?}", sol.u, u);
                }
                for r in p.rows.iter().filter(|r| !r.relaxable) {
                    prop_assert!(r.residual(&sol.u) >= -1e-8);
                }
            }
            None => prop_assert_eq!(sol.status, QpStatus::Infeasible),
        }
    }
}

#[test]
fn relaxed_status_only_when_hard_problem_is_infeasible() {
    let row = |a: [f64; 2], relaxable| ConstraintRow {
        coeffs: vec![(0, a)],
        rhs: 0.1,
        origin: RowOrigin::Link { tx: 0, rx: 1 },
        relaxable,
    };
    let feasible = QpProblem {
        n_robots: 1,
        u_ref: vec![0.0, 0.0],
        rows: vec![row([1.0, 0.0], true)],
        alpha: vec![1.0],
        slack_penalty: DEFAULT_SLACK_PENALTY,
    };
    let sol = solve(&feasible).unwrap();
    assert_eq!(sol.status, QpStatus::Optimal);
    assert_eq!(sol.max_slack(), 0.0);

    let contradictory = QpProblem {
        rows: vec![row([1.0, 0.0], true), row([-1.0, 0.0], true)],
        ..feasible
    };
    let sol = solve(&contradictory).unwrap();
    assert_eq!(sol.status, QpStatus::Relaxed);
    assert!(sol.u[0].abs() < 1e-9);
    let s: Vec<f64> = sol.slacks.iter().map(|s| s.1).collect();
    assert!((s[0] - 0.1).abs() < 1e-6 && (s[1] - 0.1).abs() < 1e-6);
}
