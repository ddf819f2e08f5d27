//! Trains the one-hidden-layer network with Adam on L1 loss and prints the
//! per-epoch loss for both activations.

use callscale::features::extract;
use callscale::mlp::{Activation, MlpHyperParams};
use callscale::model::{fit, predict, Hyper};
use callscale::trace::{generate_synthetic, SyntheticSpec};

fn main() -> callscale::Result<()> {
    let ds = generate_synthetic(&SyntheticSpec {
        n_rows: 8_000,
        seed: 11,
        ..Default::default()
    })?;
    let fs = extract(&ds)?;

    for activation in [Activation::Identity, Activation::Relu] {
        let hp = MlpHyperParams {
            hidden_neurons: 8,
            epochs: 10,
            learning_rate: 0.01,
            activation,
            ..Default::default()
        };
        let model = fit(&fs, &Hyper::Mlp(hp), 11)?;
        let curve: Vec<String> = model
            .meta()
            .loss_curve
            .iter()
            .map(|l| format!("{l:.2}"))
            .collect();
        println!("{activation:?}: train MAE per epoch [{}]", curve.join(", "));
        for mt_ms in [5.0, 100.0, 800.0] {
            println!("  mt {mt_ms:>5} ms -> {:.2} calls/s", predict(&model, mt_ms / 1000.0)?);
        }
    }

    let defaults = fit(&fs, &Hyper::Mlp(MlpHyperParams::default()), 11)?;
    println!("default settings: {} epochs, final MAE {:.2}", defaults.meta().loss_curve.len(), defaults.meta().loss_curve[1]);
    Ok(())
}
