//! Exhaustive hyperparameter search for GBR, then the learning curve of the
//! winning configuration rendered as SVG.

use callscale::features::extract;
use callscale::model::ModelKind;
use callscale::svg::{render, Chart, Series};
use callscale::trace::{generate_piecewise, PiecewiseSpec};
use callscale::tuning::{grid_search, learning_curve, ParamGrid, DEFAULT_VAL_FRACTION};

fn main() -> callscale::Result<()> {
    let ds = generate_piecewise(&PiecewiseSpec {
        n_rows: 10_000,
        seed: 2,
        ..Default::default()
    })?;
    let fs = extract(&ds)?;

    let grid = ParamGrid::new(ModelKind::Gbr)
        .with("n_estimators", &[5.0, 15.0, 30.0])?
        .with("learning_rate", &[0.1, 0.4])?
        .with("max_depth", &[2.0, 8.0])?;
    let result = grid_search(&fs, &grid, DEFAULT_VAL_FRACTION, 2)?;
    for row in &result.rows {
        let score = match &row.outcome {
            Ok(s) => format!("val MAE {:.3}", s.val_mae),
            Err(e) => format!("failed: {e}"),
        };
        println!("#{:<2} {:?} {score}", row.index, row.config);
    }
    println!("best: {:?}", result.best_config());

    let curve = learning_curve(&fs, &result.best_hyper()?, 2, DEFAULT_VAL_FRACTION)?;
    let points = |v: &[f64]| v.iter().enumerate().map(|(i, l)| ((i + 1) as f64, *l)).collect();
    let svg = render(&Chart {
        title: "GBR learning curve".into(),
        x_label: "stage".into(),
        y_label: "MAE [calls/s]".into(),
        series: vec![
            Series::line("train", points(&curve.train)),
            Series::line("validation", points(&curve.validation)),
        ],
    });
    let path = std::env::temp_dir().join("callscale_learning_curve.svg");
    std::fs::write(&path, svg).map_err(|e| callscale::Error::Data(e.to_string()))?;
    println!("learning curve written to {}", path.display());
    Ok(())
}
