// Five robots cross between two boxes to their task places while keeping a
// learned communication tree alive. Writes the usual run artifacts.
//
// ```text
// cargo run --release --example rendezvous -- [out_dir] [seed]
// ```

use std::error::Error;
use std::path::PathBuf;

use dcm::cli::{main_with_args, EXIT_OK};
use dcm::scenario::rendezvous_five;
use dcm::sim::{run, Summary};

pub fn run_example(seed: u64) -> Result<Summary, Box<dyn Error>> {
    let s = rendezvous_five(seed).build()?;
    let summary = run(&s)?.summary()?;
    summary.write_text(&mut std::io::stdout())?;
    Ok(summary)
}

fn main() -> Result<(), Box<dyn Error>> {
    let mut args = std::env::args().skip(1);
    let out = args.next().map(PathBuf::from);
    let seed = args.next().map(|s| s.parse()).transpose()?.unwrap_or(0);
    let Some(out) = out else {
        run_example(seed)?;
        return Ok(());
    };
    // Same run through the command-line path, with every artifact written.
    std::fs::create_dir_all(&out)?;
    let scenario = out.join("rendezvous.toml");
    std::fs::write(&scenario, rendezvous_five(seed).to_toml())?;
    let argv = ["run", "--scenario", scenario.to_str().unwrap(), "--out", out.to_str().unwrap()];
    let code = main_with_args(argv, &mut std::io::stdout(), &mut std::io::stderr());
    println!("exit status {code}; outputs in {}", out.display());
    if code != EXIT_OK {
        std::process::exit(code);
    }
    Ok(())
}
