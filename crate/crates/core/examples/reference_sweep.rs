//! Strong-error table of the desk convergence protocol with a chosen
//! reference step, to show how the reference error floors the fitted slopes.
//!
//! ```text
//! cargo run --release --example reference_sweep -- two-mode-gmm 15 500
//! cargo run --release --example reference_sweep -- blr 14 200
//! ```
//!
//! Arguments: model (`two-mode-gmm` or `blr`), the exponent `k` of
//! `h_ref = 2^-k`, and the ensemble size.

use rklmc::experiments::BlrParams;
use rklmc::{convergence_experiment, ConvergenceConfig, ModelKind};

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let model = match args.first().map(String::as_str) {
        Some("blr") => ModelKind::Blr(BlrParams::default()),
        Some("two-mode-gmm") | None => ModelKind::TwoModeGmm,
        Some(other) => panic!("unknown model `{other}`"),
    };
    let k: i32 = args.get(1).map_or(12, |s| s.parse().expect("reference exponent"));
    let m: usize = args.get(2).map_or(500, |s| s.parse().expect("ensemble size"));

    let mut cfg = ConvergenceConfig::desk(model);
    cfg.h_ref = 2f64.powi(-k);
    cfg.ensemble_size = m;
    let table = convergence_experiment(&cfg).expect("experiment runs");
    println!("{:<12} {:>6} {:>12} {:>10}", "scheme", "log2 h", "rmse", "stderr");
    for c in &table.cells {
        println!("{:<12} {:>6} {:>12.4e} {:>10.1e}", c.scheme, c.x.log2(), c.rmse.value, c.rmse.stderr);
    }
    for s in &table.slopes {
        println!("slope {:<12} {:.3}", s.scheme, s.fit.slope);
    }
}
