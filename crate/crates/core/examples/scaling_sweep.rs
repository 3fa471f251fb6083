// Team-size sweep: spreading teams of 5, 10 and 20 robots, several trials
// each, reporting safety distance, connectivity and wall time.
//
// ```text
// cargo run --release --example scaling_sweep -- [trials]
// ```

use std::error::Error;
use std::time::Instant;

use dcm::scenario::{spreading_team, sweep_member};
use dcm::sim::{run, Summary};

pub fn run_example(counts: &[usize], trials: u64, steps: usize) -> Result<Vec<(usize, Summary)>, Box<dyn Error>> {
    let base = spreading_team(5, 0, steps);
    let mut out = Vec::new();
    println!("{:>3} {:>5} {:>9} {:>9} {:>9} {:>7}", "n", "trial", "min_dist", "min_λ₂", "pert", "secs");
    for &n in counts {
        for trial in 0..trials {
            let t0 = Instant::now();
            let summary = run(&sweep_member(&base, n, trial).build()?)?.summary()?;
            println!(
                "{n:>3} {trial:>5} {:>9.3} {:>9.4} {:>9.5} {:>7.2}",
                summary.min_dist,
                summary.min_lambda2,
                summary.mean_perturbation,
                t0.elapsed().as_secs_f64()
            );
            out.push((n, summary));
        }
    }
    Ok(out)
}

fn main() -> Result<(), Box<dyn Error>> {
    let trials = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(3);
    run_example(&[5, 10, 20], trials, 700).map(|_| ())
}
