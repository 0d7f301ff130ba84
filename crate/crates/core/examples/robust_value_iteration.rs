//! A hand-built interval MDP solved by max-min value iteration, then
//! written in the explicit text format.

use imdp_synth::abstraction::{Label, LabelSets};
use imdp_synth::imdp::{export_interval_model, robust_value_iteration, Imdp};
use imdp_synth::scenario::{IntervalEntry, IntervalRow};

fn row(entries: &[(usize, f64, f64)]) -> IntervalRow {
    IntervalRow::new(
        entries
            .iter()
            .map(|&(successor, lower, upper)| IntervalEntry { successor, lower, upper })
            .collect(),
    )
}

fn main() -> imdp_synth::Result<()> {
    // Location 0 is the start, 1 the goal, 2 unsafe. Action 0 is risky and
    // direct, action 1 is safe but slow.
    let labels = LabelSets::from_labels(vec![Label::Neutral, Label::Goal, Label::Unsafe]);
    let rows = vec![
        row(&[(1, 0.6, 0.8), (2, 0.2, 0.4)]),
        row(&[(0, 0.5, 0.7), (1, 0.3, 0.5), (2, 0.0, 0.05)]),
    ];
    let model = Imdp::new(3, vec![vec![0, 1], vec![], vec![]], rows, labels, 4)?;
    let (values, policy) = robust_value_iteration(&model)?;
    for t in 0..=model.horizon() {
        println!("time to go {t}: V = {:.4}", values.at(t, 0));
    }
    for k in 0..model.horizon() {
        println!("step {k}: action {:?}", policy.get(0, k));
    }
    print!("{}", export_interval_model(&model, Some(&policy)));
    Ok(())
}
