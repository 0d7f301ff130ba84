use std::fs;
use std::path::Path;
use std::process::Command;

use imdp_synth::app::config::{BoxDoc, GainDoc, SetDoc};
use imdp_synth::app::report::{render_bounds, write_reports};
use imdp_synth::app::{parse_config, run_pipeline, Benchmark, RunConfig, Verdict};
use imdp_synth::imdp::parse_interval_model;
use imdp_synth::Error;

const BIN: &str = env!("CARGO_BIN_EXE_imdp-synth");

fn quick(bench: Benchmark) -> RunConfig {
    let mut doc = bench.document().unwrap();
    doc.simulate.runs = 0;
    RunConfig::from_document(doc, None).unwrap()
}

#[test]
fn integrator_config_matches_published_sets() {
    let cfg = Benchmark::Integrator.config().unwrap();
    let u = cfg.system.input_set();
    assert_eq!(u.num_constraints(), 4);
    for x in [[60.0, 60.0], [-60.0, 60.0], [60.0, -60.0]] {
        assert!(u.contains_point(&x).unwrap());
    }
    assert!(!u.contains_point(&[60.1, 0.0]).unwrap());
    assert_eq!(cfg.property.goal.len(), 1);
    assert_eq!(cfg.property.goal[0].lower(), &[-3.0, -3.0]);
    assert_eq!(cfg.property.goal[0].upper(), &[3.0, 3.0]);
    assert_eq!(cfg.domain.lower(), &[-41.0, -41.0]);
    assert_eq!(cfg.domain.upper(), &[41.0, 41.0]);
    assert_eq!(cfg.property.horizon, 16);
    assert_eq!(cfg.counts, vec![41, 41]);
    assert!(cfg.two_layer.is_none());
}

#[test]
fn every_benchmark_parses() {
    for b in Benchmark::ALL {
        let cfg = b.config().unwrap_or_else(|e| panic!("{}: {e}", b.name()));
        assert_eq!(Benchmark::from_name(b.name()), Some(b));
        if b.name().starts_with("spacecraft") {
            assert_eq!(cfg.grouping, 2);
            assert_eq!(cfg.counts.iter().product::<usize>(), 3200);
            assert_eq!(cfg.prepared.plant.input_dim(), 4);
        }
    }
}

#[test]
fn goal_everywhere_certifies_any_threshold() {
    let mut doc = Benchmark::Toy1d.document().unwrap();
    doc.property.goal = vec![BoxDoc {
        lower: vec![-4.0],
        upper: vec![4.0],
    }];
    doc.property.threshold = 1.0;
    doc.simulate.initial_states = vec![vec![0.3]];
    let rep = run_pipeline(&RunConfig::from_document(doc, None).unwrap()).unwrap();
    assert_eq!(rep.initial[0].lower_bound, Some(1.0));
    assert_eq!(rep.verdict, Verdict::Certified);
    assert_eq!(rep.initial[0].monte_carlo.as_ref().unwrap().empirical_rate, 1.0);
}

#[test]
fn toy_bounds_have_one_row_per_location() {
    let rep = run_pipeline(&quick(Benchmark::Toy1d)).unwrap();
    let csv = render_bounds(&rep);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "location_id,x1,lower_bound");
    assert_eq!(lines.len(), 1 + 16 + 1);
    assert_eq!(lines[1], format!("0,-3.75,{}", rep.bounds[0]));
    assert_eq!(lines[17], "16,,0");
}

#[test]
fn integrator_cross_section_peaks_inside() {
    let rep = run_pipeline(&quick(Benchmark::Integrator)).unwrap();
    let p = &rep.partition;
    let at = |x: f64| rep.bounds[p.locate(&[x, 0.0])];
    assert_eq!(at(0.0), 1.0);
    assert!(at(0.0) >= at(-40.0));
    assert!(at(0.0) >= at(40.0));
    assert!(at(-20.0) > 0.9);
}

#[test]
fn two_layer_counts_fall_with_u_prime() {
    let base = run_pipeline(&quick(Benchmark::Integrator)).unwrap();
    let mut doc = Benchmark::IntegratorTwoLayer.document().unwrap();
    doc.simulate.runs = 0;
    doc.two_layer.abstract_input = Some(SetDoc::Box(BoxDoc {
        lower: vec![-10.0; 2],
        upper: vec![10.0; 2],
    }));
    let tl = run_pipeline(&RunConfig::from_document(doc, None).unwrap()).unwrap();
    assert!(tl.transition_count < base.transition_count);
    assert_eq!(tl.num_actions, base.num_actions);
    assert!(tl.enabled_pairs < base.enabled_pairs);
}

#[test]
fn explicit_zero_gain_reproduces_baseline_policy() {
    let base = run_pipeline(&quick(Benchmark::Toy1d)).unwrap();
    let mut doc = Benchmark::Toy1d.document().unwrap();
    doc.simulate.runs = 0;
    doc.two_layer.enabled = true;
    doc.two_layer.gain = Some(GainDoc::Matrix(vec![vec![0.0]]));
    doc.two_layer.abstract_input = Some(SetDoc::Box(BoxDoc {
        lower: vec![-5.0],
        upper: vec![5.0],
    }));
    let tl = run_pipeline(&RunConfig::from_document(doc, None).unwrap()).unwrap();
    assert_eq!(tl.transition_count, base.transition_count);
    assert_eq!(tl.bounds, base.bounds);
    assert_eq!(tl.policy, base.policy);
}

#[test]
fn reports_are_written_and_rerun_identically() {
    let cfg = Benchmark::Toy1d.config().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    write_reports(&run_pipeline(&cfg).unwrap(), &a).unwrap();
    write_reports(&run_pipeline(&cfg).unwrap(), &b).unwrap();
    let mut names: Vec<String> = fs::read_dir(&a)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(
        names,
        ["bounds.csv", "initial_states.csv", "model.txt", "policy.txt", "simulation.csv", "summary.csv"]
    );
    for n in &names {
        assert_eq!(fs::read(a.join(n)).unwrap(), fs::read(b.join(n)).unwrap(), "{n}");
    }
    let summary = fs::read_to_string(a.join("summary.csv")).unwrap();
    assert!(summary.contains("gaussian-box-muller-chacha8"));
    let sim = fs::read_to_string(a.join("simulation.csv")).unwrap();
    assert_eq!(sim.lines().count(), 1 + 200);
    let (model, policy) = parse_interval_model(&fs::read_to_string(a.join("model.txt")).unwrap()).unwrap();
    assert_eq!(model.num_locations(), 17);
    assert!(policy.is_some());
}

#[test]
fn stage_errors_name_the_stage() {
    let dir = tempfile::tempdir().unwrap();
    let samples = dir.path().join("few.txt");
    fs::write(&samples, "0.1\n-0.2\n").unwrap();
    let cfg = Benchmark::Toy1d.config().unwrap().with_samples_file(&samples).unwrap();
    let e = run_pipeline(&cfg).unwrap_err();
    assert!(matches!(e, Error::Stage { stage: "sampling", .. }), "{e}");
    assert!(e.to_string().contains("only 2 available"));
}

#[test]
fn parse_errors_are_field_precise() {
    let src = Benchmark::Toy1d.source();
    let e = parse_config(&src.replace("horizon = 6", "horizon = \"six\""), None).unwrap_err();
    assert!(e.to_string().contains("horizon"), "{e}");
    let e = parse_config(&src.replace("counts = [16]", "counts = [16, 2]"), None).unwrap_err();
    assert!(e.to_string().contains("partition.counts"), "{e}");
    let e = parse_config(&src.replace("initial_states = [[3.2]]", "initial_states = [[9.0]]"), None)
        .unwrap_err();
    assert!(e.to_string().contains("simulate.initial_states[0]"), "{e}");
    let uncontrollable = src.replace("b = [[1.0]]", "b = [[0.0]]");
    assert!(parse_config(&uncontrollable, None).is_err());
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_owned()
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let src = Benchmark::Toy1d.source();

    let ok = write_config(dir.path(), "ok.toml", &src.replace("threshold = 0.5", "threshold = 0.0"));
    let st = Command::new(BIN).args(["run", &ok, "--quiet", "--out"]).arg(dir.path().join("ok")).status().unwrap();
    assert_eq!(st.code(), Some(0));

    let strict = write_config(dir.path(), "strict.toml", &src.replace("threshold = 0.5", "threshold = 1.0"));
    let st = Command::new(BIN).args(["run", &strict, "--quiet", "--out"]).arg(dir.path().join("strict")).status().unwrap();
    assert_eq!(st.code(), Some(2));
    assert!(dir.path().join("strict/summary.csv").exists());

    let bad = write_config(dir.path(), "bad.toml", &src.replace("a = [[1.2]]", "a = [[0.0]]"));
    let out = Command::new(BIN).args(["run", &bad, "--out"]).arg(dir.path().join("bad")).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("assumption 1"));
    assert!(!dir.path().join("bad").exists());
}

#[test]
fn cli_simulate_replays_run_policy() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "toy.toml", Benchmark::Toy1d.source());
    let run_out = dir.path().join("run");
    let st = Command::new(BIN).args(["run", &cfg, "--quiet", "--seed", "9", "--out"]).arg(&run_out).status().unwrap();
    assert_ne!(st.code(), Some(1));

    let sim_out = dir.path().join("sim");
    let st = Command::new(BIN)
        .args(["simulate", &cfg, "--quiet", "--seed", "9", "--policy"])
        .arg(run_out.join("policy.txt"))
        .arg("--out")
        .arg(&sim_out)
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(0));
    assert_eq!(
        fs::read(run_out.join("simulation.csv")).unwrap(),
        fs::read(sim_out.join("simulation.csv")).unwrap()
    );
}

#[test]
fn cli_export_writes_parseable_model() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "toy.toml", Benchmark::Toy1d.source());
    let out = dir.path().join("export");
    let st = Command::new(BIN).args(["export", &cfg, "--quiet", "--out"]).arg(&out).status().unwrap();
    assert_eq!(st.code(), Some(0));
    let text = fs::read_to_string(out.join("model.txt")).unwrap();
    let (model, policy) = parse_interval_model(&text).unwrap();
    let rep = run_pipeline(&quick(Benchmark::Toy1d)).unwrap();
    assert_eq!(model.transition_count(), rep.transition_count);
    assert_eq!(policy.unwrap(), rep.policy);
}

#[test]
fn cli_samples_file_replaces_noise() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "toy.toml", Benchmark::Toy1d.source());
    let samples: String = (0..400).map(|i| format!("{}\n", 0.01 * ((i % 21) as f64 - 10.0))).collect();
    let file = dir.path().join("samples.txt");
    fs::write(&file, format!("# recorded deviations\n{samples}")).unwrap();
    let out = dir.path().join("out");
    let st = Command::new(BIN)
        .args(["run", &cfg, "--quiet", "--samples-file"])
        .arg(&file)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert_ne!(st.code(), Some(1));
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert!(summary.contains("empirical-resample-chacha8"));
}
