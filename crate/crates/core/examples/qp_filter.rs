// One safety-filter solve by hand: two robots driving head-on past a post.
// The QP keeps them apart and off the obstacle while changing the nominal
// command as little as possible.

use std::error::Error;

use dcm::barriers::{obstacle_rows, safety_rows, ObstacleSet};
use dcm::controller::{solve, QpProblem, QpSolution, DEFAULT_SLACK_PENALTY};

pub fn run_example() -> Result<QpSolution, Box<dyn Error>> {
    let x = [[-0.2, 0.0], [0.2, 0.02]];
    // Nominal commands push the robots straight into each other.
    let u_ref = vec![0.2, 0.0, -0.2, 0.0];
    let obstacles = ObstacleSet::new(vec![[0.0, 0.45]], 0.28);

    let mut rows = safety_rows(&x, 0.28, 1.0);
    rows.extend(obstacle_rows(&x, &obstacles, 1.0, 1.0));
    let problem = QpProblem {
        n_robots: 2,
        u_ref: u_ref.clone(),
        rows,
        alpha: vec![0.3, 0.3],
        slack_penalty: DEFAULT_SLACK_PENALTY,
    };
    let sol = solve(&problem)?;

    println!("u_ref = {u_ref:?}");
    println!("u*    = {:?}", sol.u.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>());
    println!("status {:?} after {} iterations", sol.status, sol.iterations);
    for r in &problem.rows {
        println!("  {:<14} residual {:+.5}", r.origin.to_string(), r.residual(&sol.u));
    }
    Ok(sol)
}

fn main() -> Result<(), Box<dyn Error>> {
    run_example().map(|_| ())
}
