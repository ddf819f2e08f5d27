//! Generates the two synthetic trace shapes and shows how well a straight
//! line can describe each.

use callscale::features::{extract, pearson};
use callscale::trace::{generate_piecewise, generate_synthetic, PiecewiseSpec, SyntheticSpec};

fn main() -> callscale::Result<()> {
    for target in [0.5, 0.75, 0.95] {
        let ds = generate_synthetic(&SyntheticSpec {
            n_rows: 5_000,
            target_pearson: target,
            seed: 7,
            ..Default::default()
        })?;
        let r = pearson(&extract(&ds)?)?;
        println!("linear trace, target pearson {target:.2}: measured {r:.3}");
    }

    let ds = generate_piecewise(&PiecewiseSpec {
        n_rows: 20_000,
        ..Default::default()
    })?;
    let fs = extract(&ds)?;
    println!(
        "piecewise trace: {} rows, pearson {:.3}",
        fs.len(),
        pearson(&fs)?
    );
    for rec in ds.records().iter().take(3) {
        println!("  {} {} mt={:.1} ms mcr={:.2}", rec.timestamp, rec.microservice_id, rec.mt, rec.mcr);
    }
    Ok(())
}
