//! The stabilizer helps when it pulls toward the goal and hurts when the
//! goal lies against its flow.

use imdp_synth::app::{run_pipeline, Benchmark, RunConfig};

fn main() -> imdp_synth::Result<()> {
    for bench in [Benchmark::SpacecraftAligned, Benchmark::SpacecraftDisaligned] {
        let mut doc = bench.document()?;
        doc.simulate.runs = 2000;
        let two = run_pipeline(&RunConfig::from_document(doc.clone(), None)?)?;
        doc.two_layer.enabled = false;
        let base = run_pipeline(&RunConfig::from_document(doc, None)?)?;
        println!("{}", bench.name());
        for (name, rep) in [("baseline", &base), ("two-layer", &two)] {
            let init = &rep.initial[0];
            let mc = init.monte_carlo.as_ref().expect("runs > 0");
            println!(
                "  {name:<10} transitions {:>8}  bound {:.4}  empirical {:.4}",
                rep.transition_count,
                init.lower_bound.unwrap_or(f64::NAN),
                mc.empirical_rate
            );
        }
    }
    Ok(())
}
