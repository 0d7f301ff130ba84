//! Refining the optimal policy into a feedback law and checking the
//! certified bound against closed-loop simulations.

use imdp_synth::app::pipeline::{self, Timings};
use imdp_synth::app::Benchmark;
use imdp_synth::synthesis::{monte_carlo, simulate, Refinement};
use nalgebra::DVector;

fn main() -> imdp_synth::Result<()> {
    let cfg = Benchmark::IntegratorTwoLayer.config()?;
    let mut timings = Timings::default();
    let abs = pipeline::build_abstraction(&cfg, &mut timings)?;
    let syn = pipeline::synthesize(&cfg, &abs, &mut timings)?;
    let ctrl = pipeline::refined_controller(&cfg, &abs.partition, syn.policy)?;
    let property = pipeline::reach_avoid(&cfg);
    let x0 = DVector::from_vec(vec![-30.0, 10.0]);

    if let Refinement::Input(u) = ctrl.refine_control(&x0, 0)? {
        println!(
            "u(x0) = {:.3?}, of which the abstraction chose {:.3?}",
            u.total.as_slice(),
            u.abstract_part.as_ref().map(|v| v.as_slice())
        );
    }
    let rec = simulate(&cfg.prepared.plant, &ctrl, &x0, &property, 1)?;
    println!("one rollout: {} after {} steps", rec.outcome.as_str(), rec.states.len() - 1);
    for x in &rec.states {
        println!("  ({:+7.2}, {:+7.2})", x[0], x[1]);
    }

    let bound = syn.values.lower_bound(abs.partition.locate(x0.as_slice()));
    let mc = monte_carlo(&cfg.prepared.plant, &ctrl, &x0, &property, 10_000, 0, Some(bound))?;
    println!(
        "bound {bound:.4}, empirical {:.4} ({} of {}), 99% interval [{:.4}, {:.4}]",
        mc.empirical_rate, mc.success_count, mc.runs, mc.rate_interval.0, mc.rate_interval.1
    );
    Ok(())
}
