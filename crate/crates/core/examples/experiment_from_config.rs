//! Run a config file through the harness and print the strategy summary.
//!
//! `cargo run --release --example experiment_from_config -- path/to/config.toml [out_dir]`
//! Without arguments the shipped mismatched cart-pole config is used.

use std::path::PathBuf;

use cotune::harness::{canned_config, compare_strategies, load_config, run_experiment, RunOptions};

fn main() {
    let mut args = std::env::args().skip(1);
    let cfg = match args.next() {
        Some(path) => load_config(path.as_ref()),
        None => canned_config("fig5b"),
    };
    let cfg = match cfg {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("{e}");
            std::process::exit(1);
        }
    };
    let out = args.next().map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("cotune").join(&cfg.id));
    let outcome = run_experiment(&cfg, &out, RunOptions::default()).unwrap();
    println!("{} result rows", outcome.rows.len());
    print!("{}", compare_strategies(&out).unwrap().to_table());
    println!("artifacts in {}", out.display());
}
