//! Baseline versus two-layer abstractions of the unstable integrator for a
//! range of abstract input sets U'.

use imdp_synth::app::config::{BoxDoc, SetDoc};
use imdp_synth::app::{run_pipeline, Benchmark, RunConfig};

fn main() -> imdp_synth::Result<()> {
    let mut doc = Benchmark::Integrator.document()?;
    doc.simulate.runs = 0;
    let base = run_pipeline(&RunConfig::from_document(doc, None)?)?;
    let p = &base.partition;
    let bound = |rep: &imdp_synth::app::RunReport, x: f64| rep.bounds[p.locate(&[x, 0.0])];
    println!("{:<10} {:>12} {:>10} {:>10} {:>10}", "U'", "transitions", "reduction", "V(-20,0)", "V(-35,0)");
    println!(
        "{:<10} {:>12} {:>10} {:>10.4} {:>10.4}",
        "baseline", base.transition_count, "-", bound(&base, -20.0), bound(&base, -35.0)
    );
    for r in [60.0, 30.0, 20.0, 10.0] {
        let mut doc = Benchmark::IntegratorTwoLayer.document()?;
        doc.simulate.runs = 0;
        doc.two_layer.abstract_input = Some(SetDoc::Box(BoxDoc { lower: vec![-r; 2], upper: vec![r; 2] }));
        let rep = run_pipeline(&RunConfig::from_document(doc, None)?)?;
        let red = 100.0 * (1.0 - rep.transition_count as f64 / base.transition_count as f64);
        println!(
            "{:<10} {:>12} {:>9.1}% {:>10.4} {:>10.4}",
            format!("[-{r},{r}]"),
            rep.transition_count,
            red,
            bound(&rep, -20.0),
            bound(&rep, -35.0)
        );
    }
    Ok(())
}
