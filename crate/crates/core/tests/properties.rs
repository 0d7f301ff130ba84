use nalgebra::DVector;
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use imdp_synth::abstraction::{
    backward_set_single, backward_set_two_layer, build_action_set, Label, LabelSets, Layer, Partition,
};
use imdp_synth::app::pipeline::{self, Timings};
use imdp_synth::app::{Benchmark, RunConfig};
use imdp_synth::dynamics::make_stabilized;
use imdp_synth::geometry::HalfspacePolytope;
use imdp_synth::imdp::{export_interval_model, inner_min_expectation, robust_value_iteration, Imdp, Policy};
use imdp_synth::scenario::{IntervalEntry, IntervalRow};
use imdp_synth::synthesis::{monte_carlo, simulate, Refinement, RefinedController};

fn arb_row(n: usize) -> impl Strategy<Value = IntervalRow> {
    proptest::collection::vec((0.05f64..1.0, 0.0f64..1.0, 0.0f64..0.5, any::<bool>()), 1..=n).prop_map(
        move |parts| {
            let total: f64 = parts.iter().map(|s| s.0).sum();
            IntervalRow::new(
                parts.iter()
                    .enumerate()
                    .map(|(i, &(w, lo, up, zero_lo))| {
                        let p = w / total;
                        IntervalEntry {
                            successor: i,
                            lower: if zero_lo { 0.0 } else { p * lo },
                            upper: (p + (1.0 - p) * up).min(1.0),
                        }
                    })
                    .collect(),
            )
        },
    )
}

fn arb_model() -> impl Strategy<Value = Imdp> {
    (2usize..7, 1usize..4, 1usize..6).prop_flat_map(|(n, actions, horizon)| {
        (
            proptest::collection::vec(arb_row(n), actions),
            proptest::collection::vec(0u8..5, n),
            proptest::collection::vec(proptest::collection::vec(any::<bool>(), actions), n),
        )
            .prop_map(move |(rows, labels, enabled)| {
                let labels = labels
                    .into_iter()
                    .map(|l| match l {
                        0 => Label::Goal,
                        1 => Label::Unsafe,
                        _ => Label::Neutral,
                    })
                    .collect();
                let enabled = enabled
                    .into_iter()
                    .map(|row| row.iter().enumerate().filter(|(_, &e)| e).map(|(a, _)| a).collect())
                    .collect();
                Imdp::new(n, enabled, rows, LabelSets::from_labels(labels), horizon).unwrap()
            })
    })
}

/// Standard value iteration where each action's distribution is fixed to
/// the lower bounds plus slack handed out in entry order.
fn point_mdp_values(m: &Imdp) -> Vec<f64> {
    let dists: Vec<Vec<(usize, f64)>> = (0..m.num_actions())
        .map(|a| {
            let row = m.row(a);
            let mut slack = 1.0 - row.entries.iter().map(|e| e.lower).sum::<f64>();
            row.entries
                .iter()
                .map(|e| {
                    let add = (e.upper - e.lower).min(slack.max(0.0));
                    slack -= add;
                    (e.successor, e.lower + add)
                })
                .collect()
        })
        .collect();
    let labels = m.labels().labels();
    let mut v: Vec<f64> = labels.iter().map(|&l| f64::from(l == Label::Goal)).collect();
    for _ in 0..m.horizon() {
        v = (0..m.num_locations())
            .map(|s| match labels[s] {
                Label::Goal => 1.0,
                Label::Unsafe => 0.0,
                Label::Neutral => m
                    .enabled(s)
                    .iter()
                    .map(|&a| dists[a].iter().map(|&(t, p)| p * v[t]).sum::<f64>())
                    .fold(0.0, f64::max),
            })
            .collect();
    }
    v
}

proptest! {
    #[test]
    fn values_grow_with_time_to_go(m in arb_model()) {
        let (values, _) = robust_value_iteration(&m).unwrap();
        for t in 1..=m.horizon() {
            for s in 0..m.num_locations() {
                prop_assert!(values.at(t, s) >= values.at(t - 1, s) - 1e-12);
            }
        }
    }

    #[test]
    fn worst_case_distribution_is_feasible_and_exact(
        row in arb_row(8),
        values in proptest::collection::vec(0.0f64..1.0, 8),
    ) {
        let (v, probs) = inner_min_expectation(&values, &row).unwrap();
        let mut sum = 0.0;
        let mut expectation = 0.0;
        for (e, p) in row.entries.iter().zip(&probs) {
            prop_assert!(*p >= e.lower - 1e-12 && *p <= e.upper + 1e-12);
            sum += p;
            expectation += p * values[e.successor];
        }
        prop_assert!((sum - 1.0).abs() <= 1e-12);
        prop_assert!((expectation - v).abs() <= 1e-12);
    }

    #[test]
    fn fixed_distributions_dominate_robust_values(m in arb_model()) {
        let (values, _) = robust_value_iteration(&m).unwrap();
        for (s, p) in point_mdp_values(&m).into_iter().enumerate() {
            prop_assert!(p >= values.lower_bound(s) - 1e-12);
        }
    }

    #[test]
    fn policy_only_uses_enabled_actions(m in arb_model()) {
        let (values, policy) = robust_value_iteration(&m).unwrap();
        for (s, k, a) in policy.entries() {
            prop_assert!(m.enabled(s).contains(&a));
            prop_assert_eq!(m.labels().label(s), Label::Neutral);
            prop_assert!(k < m.horizon());
        }
        for s in 0..m.num_locations() {
            if m.labels().label(s) == Label::Neutral && !m.enabled(s).is_empty() {
                prop_assert!(policy.get(s, 0).is_some());
            }
        }
        prop_assert_eq!(values.horizon(), m.horizon());
    }
}

fn quick(bench: Benchmark) -> RunConfig {
    let mut doc = bench.document().unwrap();
    doc.simulate.runs = 0;
    RunConfig::from_document(doc, None).unwrap()
}

#[test]
fn unconstrained_u_prime_matches_single_layer_on_benchmarks() {
    let mut rng = StdRng::seed_from_u64(21);
    for bench in [Benchmark::IntegratorTwoLayer, Benchmark::SpacecraftAligned] {
        let cfg = quick(bench);
        let plant = &cfg.prepared.plant;
        let gain = cfg.prepared.stabilized.as_ref().unwrap().gain().clone();
        let free = make_stabilized(plant, gain, HalfspacePolytope::unconstrained(plant.input_dim()), &cfg.domain)
            .unwrap();
        let partition = pipeline::build_partition(&cfg).unwrap();
        for _ in 0..5 {
            let d = DVector::from_vec(partition.center(rng.random_range(0..partition.num_regions())));
            let single = backward_set_single(plant, &d).unwrap();
            let two = backward_set_two_layer(&free, &d).unwrap();
            for _ in 0..10_000 {
                let x: Vec<f64> = (0..plant.state_dim())
                    .map(|j| rng.random_range(cfg.domain.lower()[j]..cfg.domain.upper()[j]))
                    .collect();
                assert_eq!(single.contains_point(&x).unwrap(), two.contains_point(&x).unwrap());
            }
        }
    }
}

#[test]
fn closed_loop_preimage_of_target_is_enabled_when_admissible() {
    for bench in [Benchmark::IntegratorTwoLayer, Benchmark::SpacecraftAligned] {
        let cfg = quick(bench);
        let ssys = cfg.prepared.stabilized.as_ref().unwrap();
        let a_cl_inv = ssys.closed_loop().clone().try_inverse().unwrap();
        let partition = pipeline::build_partition(&cfg).unwrap();
        let mut hits = 0;
        for a in (0..partition.num_regions()).step_by(7) {
            let d = DVector::from_vec(partition.center(a));
            let x = &a_cl_inv * &d;
            let u = -(ssys.gain() * &x);
            if ssys.base().input_set().contains_point(u.as_slice()).unwrap() {
                hits += 1;
                assert!(backward_set_two_layer(ssys, &d).unwrap().contains_point(x.as_slice()).unwrap());
            }
        }
        assert!(hits > 0, "{}", bench.name());
    }
}

#[test]
fn refined_inputs_are_admissible_on_enabled_pairs() {
    let mut rng = StdRng::seed_from_u64(5);
    for bench in [Benchmark::Integrator, Benchmark::IntegratorTwoLayer, Benchmark::SpacecraftDisaligned] {
        let cfg = quick(bench);
        let abs = pipeline::build_abstraction(&cfg, &mut Timings::default()).unwrap();
        let pairs: Vec<(usize, usize)> = abs
            .actions
            .enabled
            .iter()
            .enumerate()
            .flat_map(|(s, acts)| acts.iter().map(move |&a| (s, a)))
            .collect();
        let u = cfg.prepared.plant.input_set();
        let u_prime = cfg.prepared.stabilized.as_ref().map(|s| s.abstract_input_set());
        for _ in 0..300 {
            let (s, a) = pairs[rng.random_range(0..pairs.len())];
            let mut policy = Policy::new(1, abs.partition.num_locations());
            policy.set(s, 0, Some(a));
            let ctrl = pipeline::refined_controller(&cfg, &abs.partition, policy).unwrap();
            let region = abs.partition.region(s);
            for _ in 0..100 {
                let x: Vec<f64> = (0..region.dim())
                    .map(|j| rng.random_range(region.lower()[j]..=region.upper()[j]))
                    .collect();
                let Refinement::Input(input) = ctrl.refine_control(&DVector::from_vec(x), 0).unwrap() else {
                    panic!("no input at an enabled pair");
                };
                assert!(u.contains_point(input.total.as_slice()).unwrap());
                if let Some(up) = u_prime {
                    assert!(up.contains_point(input.abstract_part.unwrap().as_slice()).unwrap());
                }
            }
        }
    }
}

#[test]
fn simulated_inputs_stay_admissible_and_replay_per_seed() {
    let cfg = quick(Benchmark::IntegratorTwoLayer);
    let mut timings = Timings::default();
    let abs = pipeline::build_abstraction(&cfg, &mut timings).unwrap();
    let syn = pipeline::synthesize(&cfg, &abs, &mut timings).unwrap();
    let ctrl: RefinedController = pipeline::refined_controller(&cfg, &abs.partition, syn.policy).unwrap();
    let prop = pipeline::reach_avoid(&cfg);
    let plant = &cfg.prepared.plant;
    let ssys = cfg.prepared.stabilized.as_ref().unwrap();
    for seed in 0..10 {
        for x0 in [[-20.0, 0.0], [35.0, -30.0], [-40.0, 40.0]] {
            let x0 = DVector::from_row_slice(&x0);
            let rec = simulate(plant, &ctrl, &x0, &prop, seed).unwrap();
            assert_eq!(rec, simulate(plant, &ctrl, &x0, &prop, seed).unwrap());
            for input in &rec.inputs {
                assert!(plant.input_set().contains_point(input.total.as_slice()).unwrap());
                let up = input.abstract_part.as_ref().unwrap();
                assert!(ssys.abstract_input_set().contains_point(up.as_slice()).unwrap());
            }
        }
    }
    let x0 = DVector::from_row_slice(&[-20.0, 0.0]);
    let a = monte_carlo(plant, &ctrl, &x0, &prop, 200, 3, None).unwrap();
    let b = monte_carlo(plant, &ctrl, &x0, &prop, 200, 3, None).unwrap();
    assert_eq!(a, b);
}

#[test]
fn rows_are_shared_by_all_locations_enabling_an_action() {
    let cfg = quick(Benchmark::Toy1d);
    let mut timings = Timings::default();
    let abs = pipeline::build_abstraction(&cfg, &mut timings).unwrap();
    let syn = pipeline::synthesize(&cfg, &abs, &mut timings).unwrap();
    let text = export_interval_model(&syn.imdp, None);
    let mut per_action: std::collections::BTreeMap<String, std::collections::BTreeMap<String, Vec<String>>> =
        Default::default();
    for line in text.lines().filter(|l| l.starts_with("edge ")) {
        let f: Vec<&str> = line.split(' ').collect();
        per_action
            .entry(f[2].to_owned())
            .or_default()
            .entry(f[1].to_owned())
            .or_default()
            .push(f[3..].join(" "));
    }
    let mut shared = 0;
    for (_, by_source) in per_action {
        let mut rows = by_source.values();
        let first = rows.next().unwrap();
        for r in rows {
            assert_eq!(r, first);
            shared += 1;
        }
    }
    assert!(shared > 0);
}

#[test]
fn build_action_set_matches_per_target_sets() {
    let cfg = quick(Benchmark::Toy1d);
    let partition = Partition::new(cfg.domain.clone(), cfg.counts.clone()).unwrap();
    let set = build_action_set(&partition, Layer::Single(&cfg.prepared.plant)).unwrap();
    for (a, d) in set.targets.iter().enumerate() {
        assert_eq!(set.backward_sets[a], backward_set_single(&cfg.prepared.plant, d).unwrap());
    }
    assert!(set.enabled[partition.sink()].is_empty());
}
