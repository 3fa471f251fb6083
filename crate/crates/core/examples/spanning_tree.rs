// Builds the strong-link graph for a small team, weights each edge by how
// hard the nominal motion pushes against it, and picks the spanning tree
// the controller will protect.

use std::error::Error;

use dcm::barriers::{GpLinkModels, LinkBarrier};
use dcm::comm_graph::{edge_weight, CommGraph, Edge};
use dcm::controller::{collect_measurements, rssi_matrix, LearningParams};
use dcm::gp_model::GpHyper;
use dcm::rssi_field::{FieldSpec, DEFAULT_EPSILON_DB, DEFAULT_PSI_DB};
use dcm::sim::nominal_controller;

pub fn run_example() -> Result<Vec<Edge>, Box<dyn Error>> {
    let field = FieldSpec::default();
    let x = [[0.0, 0.0], [0.6, 0.1], [0.3, 0.6], [1.1, 0.5]];
    let goals = [[-1.0, 0.0], [1.5, 0.0], [0.3, 1.5], [2.0, 1.0]];
    let u_ref = nominal_controller(&x, &goals, &[0.3; 4]);

    let learn = LearningParams {
        psi: DEFAULT_PSI_DB,
        epsilon: DEFAULT_EPSILON_DB,
        hyper: GpHyper::default(),
        dedup_res: 0.05,
        cap: 400,
    };
    let mut models = GpLinkModels::new(x.len());
    collect_measurements(&x, &field, &mut models, &learn)?;

    let mut graph = CommGraph::build(&rssi_matrix(&field, &x), DEFAULT_EPSILON_DB);
    println!("strong links: {:?}", graph.edges().iter().map(|e| e.to_string()).collect::<Vec<_>>());
    for e in graph.edges().to_vec() {
        let (i, j) = (e.i(), e.j());
        let ui = [u_ref[2 * i], u_ref[2 * i + 1]];
        let uj = [u_ref[2 * j], u_ref[2 * j + 1]];
        let ij = models.link(i, x[i], j, x[j])?;
        let ji = models.link(j, x[j], i, x[i])?;
        let w = edge_weight(ij.h, ij.hdot(ui, uj), ji.h, ji.hdot(uj, ui), 1.0);
        println!("  {e}: h = ({:.3}, {:.3}), weight {w:.3}", ij.h, ji.h);
        graph.set_weight(e, w)?;
    }
    let tree = graph.min_spanning_tree()?;
    println!("protected tree: {:?} (total {:.3})", tree.sorted_edges().iter().map(|e| e.to_string()).collect::<Vec<_>>(), tree.total_weight());
    println!("λ₂ of the strong-link graph: {:.3}", graph.algebraic_connectivity()?);
    Ok(tree.sorted_edges())
}

fn main() -> Result<(), Box<dyn Error>> {
    run_example().map(|_| ())
}
