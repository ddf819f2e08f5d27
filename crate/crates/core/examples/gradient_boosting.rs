//! LAD gradient boosting on a trace whose rate is a step function of the
//! microservice time; shows the staged training error and the first tree.

use callscale::features::extract;
use callscale::gbr::{gbr_fit, gbr_predict, GbrHyperParams};
use callscale::trace::{generate_piecewise, PiecewiseSpec};

fn main() -> callscale::Result<()> {
    let ds = generate_piecewise(&PiecewiseSpec {
        n_rows: 20_000,
        seed: 5,
        ..Default::default()
    })?;
    let fs = extract(&ds)?;
    let hp = GbrHyperParams {
        seed: 5,
        ..Default::default()
    };
    let (model, curve) = gbr_fit(&fs, &hp)?;

    println!("initial prediction (median rate): {:.2}", model.init_value);
    for (stage, m) in curve.iter().enumerate() {
        println!("stage {:>2}: train MAE {m:.3}", stage + 1);
    }

    let first = &model.trees[0];
    println!(
        "first tree: depth {}, {} leaves, thresholds (s) {:?}",
        first.depth(),
        first.leaf_count(),
        first.thresholds().iter().map(|t| (t * 1e4).round() / 1e4).collect::<Vec<_>>()
    );
    for mt_ms in [60.0, 150.0, 400.0, 1500.0] {
        println!("mt {mt_ms:>6} ms -> {:.2} calls/s", gbr_predict(&model, mt_ms / 1000.0));
    }
    Ok(())
}
