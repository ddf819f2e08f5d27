//! Closed-form least squares on a noisy linear trace.

use callscale::eval::{mae, mape};
use callscale::features::extract;
use callscale::linreg::{fit_ols, lr_predict};
use callscale::trace::{generate_synthetic, split, SyntheticSpec, SYNTHETIC_INTERCEPT, SYNTHETIC_SLOPE};

fn main() -> callscale::Result<()> {
    let ds = generate_synthetic(&SyntheticSpec {
        n_rows: 10_000,
        target_pearson: 0.9,
        seed: 3,
        ..Default::default()
    })?;
    let (train, test) = split(&ds, 0.8, 3)?;
    let (train, test) = (extract(&train)?, extract(&test)?);

    let p = fit_ols(&train)?;
    println!("fitted   mcr = {:.4} * mt_s + {:.4}", p.w, p.b);
    println!(
        "generator slope {SYNTHETIC_SLOPE} per ms = {} per s, intercept >= {SYNTHETIC_INTERCEPT}",
        SYNTHETIC_SLOPE * 1000.0
    );

    let pred: Vec<f64> = test.x().iter().map(|&x| lr_predict(&p, x)).collect();
    println!("test MAE  {:.3} calls/s", mae(test.y(), &pred)?);
    println!("test MAPE {:.2} %", mape(test.y(), &pred)?.percent);
    Ok(())
}
