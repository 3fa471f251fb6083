// Samples the synthetic RSSI field around two transmitters and reports how
// far the strong-link level set reaches in each direction, plus how
// asymmetric the two directions of a link are.
//
// ```text
// cargo run --example field_contours -- [out_dir]
// ```

use std::error::Error;
use std::f64::consts::TAU;
use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use dcm::rssi_field::{write_field_grid_csv, FieldSpec, DEFAULT_EPSILON_DB};

/// Distance along `heading` at which `R_tx→rx` first drops below ε.
fn reach(field: &FieldSpec, tx: usize, rx: usize, heading: f64) -> f64 {
    let mut r = 0.05;
    while r < 4.0 {
        let p = [r * heading.cos(), r * heading.sin()];
        if field.rssi(tx, [0.0, 0.0], rx, p) < DEFAULT_EPSILON_DB {
            break;
        }
        r += 0.01;
    }
    r
}

pub fn run_example() -> Result<Vec<f64>, Box<dyn Error>> {
    let field = FieldSpec::default();
    let mut reaches = Vec::new();
    for (tx, rx) in [(0, 1), (1, 0)] {
        let r: Vec<f64> = (0..8).map(|k| reach(&field, tx, rx, k as f64 * TAU / 8.0)).collect();
        println!(
            "robot {tx} -> {rx}: ε-contour at {}",
            r.iter().map(|v| format!("{v:.2}")).collect::<Vec<_>>().join(" ")
        );
        reaches.extend(r);
    }
    let (a, b) = ([0.0, 0.0], [0.8, 0.3]);
    println!(
        "one link, two directions: R_01 = {:.2} dB, R_10 = {:.2} dB",
        field.rssi(0, a, 1, b),
        field.rssi(1, b, 0, a)
    );
    Ok(reaches)
}

fn main() -> Result<(), Box<dyn Error>> {
    run_example()?;
    if let Some(dir) = std::env::args().nth(1).map(PathBuf::from) {
        std::fs::create_dir_all(&dir)?;
        let field = FieldSpec::default();
        for tx in 0..2 {
            let grid = field.grid(tx, [0.0, 0.0], 1 - tx, 81, 81);
            let path = dir.join(format!("field_tx{tx}.csv"));
            write_field_grid_csv(&mut BufWriter::new(File::create(&path)?), &grid)?;
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}
