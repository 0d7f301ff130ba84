//! Running a configuration given inline and writing the report files.
//!
//! `cargo run --example run_config -- [output-dir]`

use imdp_synth::app::{parse_config, run_pipeline, write_reports};

const CONFIG: &str = r#"
[system]
a = [[1.1, 0.2], [0.0, 0.9]]
b = [[1.0, 0.0], [0.0, 1.0]]

[noise]
kind = "gaussian"
covariance = [[0.01, 0.0], [0.0, 0.01]]

[input_set]
lower = [-1.0, -1.0]
upper = [1.0, 1.0]

[partition]
lower = [-2.0, -2.0]
upper = [2.0, 2.0]
counts = [10, 10]

[property]
goal = [{ lower = [1.2, 1.2], upper = [2.0, 2.0] }]
avoid = [{ lower = [-0.4, 0.0], upper = [0.4, 2.0] }]
horizon = 8
threshold = 0.8

[simulate]
runs = 500
initial_states = [[-1.5, 1.5], [1.5, -1.5]]
"#;

fn main() -> imdp_synth::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "out/run_config".into());
    let cfg = parse_config(CONFIG, None)?;
    let report = run_pipeline(&cfg)?;
    for path in write_reports(&report, out.as_ref())? {
        println!("wrote {}", path.display());
    }
    for r in &report.initial {
        println!(
            "x0 = {:?}: bound {:.4}, empirical {:.4}",
            r.state.as_slice(),
            r.lower_bound.unwrap_or(f64::NAN),
            r.monte_carlo.as_ref().map_or(f64::NAN, |m| m.empirical_rate)
        );
    }
    println!("verdict: {}", report.verdict.as_str());
    Ok(())
}
