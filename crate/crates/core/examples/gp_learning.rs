// Watches one link's learned certificate converge. The stretched scenario
// is run under DCM, then the measurements robot 1 received from robot 0
// are replayed into a fresh GP while 500 held-out probes score how often
// the sign of `h` matches the true link state.

use std::error::Error;

use dcm::scenario::stretched_five;
use dcm::sim::{learning_curve, run, trajectory_probes};

/// `(step, dataset size, sign agreement)` rows.
pub type Curve = Vec<(usize, usize, f64)>;

pub fn run_example() -> Result<Curve, Box<dyn Error>> {
    let s = stretched_five(0).build()?;
    let result = run(&s)?;
    let pair = (0, 1);
    let probes = trajectory_probes(&s, &result.records, pair, 500, 0.2, 2.0, 11);
    let curve = learning_curve(&s, &result.records, pair, &probes, 100)?;
    println!("{:>5} {:>8} {:>10}", "t", "samples", "agreement");
    for (t, n, a) in &curve {
        println!("{t:>5} {n:>8} {a:>10.3}");
    }
    Ok(curve)
}

fn main() -> Result<(), Box<dyn Error>> {
    run_example().map(|_| ())
}
