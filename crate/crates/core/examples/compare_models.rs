//! Fits all three model kinds over several seeds and prints the min-max
//! comparison table plus the replica-count error of each model.

use callscale::eval::{evaluate, EvalReport};
use callscale::features::extract;
use callscale::model::{fit, predict_batch, Hyper, ModelKind};
use callscale::replica::replica_error;
use callscale::trace::{generate_piecewise, split, PiecewiseSpec};

fn main() -> callscale::Result<()> {
    let ds = generate_piecewise(&PiecewiseSpec {
        n_rows: 30_000,
        ..Default::default()
    })?;
    let mut report = EvalReport::default();
    for seed in [1, 2, 3] {
        let (train, test) = split(&ds, 0.8, seed)?;
        let (train, test) = (extract(&train)?, extract(&test)?);
        for kind in ModelKind::ALL {
            let model = fit(&train, &Hyper::default_for(kind), seed)?;
            report.extend(evaluate(std::slice::from_ref(&model), &test)?);
            let pred = predict_batch(&model, test.x())?;
            let err = replica_error(test.y(), &pred, test.x())?;
            println!("seed {seed} {kind:<3}: replica MAPE {:.1} %", err.percent);
        }
    }
    println!();
    print!("{}", report.to_text_table());
    Ok(())
}
