//! Report files. Every file is a pure function of the report, so identical
//! configs and seeds give byte-identical output; timings are printed, never
//! written.
//!
//! | file                 | content                                              |
//! |----------------------|------------------------------------------------------|
//! | `bounds.csv`         | `location_id, x1..xn (center), lower_bound`, sink last with empty center |
//! | `summary.csv`        | one header row and one value row                     |
//! | `initial_states.csv` | bound and Monte Carlo summary per initial state      |
//! | `simulation.csv`     | `initial_index, seed, outcome, first_goal_step`      |
//! | `policy.txt`         | `policy <location> <step> <action>` lines            |
//! | `model.txt`          | explicit interval model, only with `export_model`    |

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::app::pipeline::{InitialStateReport, RunReport};
use crate::error::{Error, Result};
use crate::imdp::export_policy;

pub fn render_bounds(report: &RunReport) -> String {
    let p = &report.partition;
    let n = p.dim();
    let mut out = String::from("location_id");
    for i in 1..=n {
        let _ = write!(out, ",x{i}");
    }
    out.push_str(",lower_bound\n");
    for (s, b) in report.bounds.iter().enumerate() {
        let _ = write!(out, "{s}");
        if s == p.sink() {
            out.push_str(&",".repeat(n));
        } else {
            for c in p.center(s) {
                let _ = write!(out, ",{c}");
            }
        }
        let _ = writeln!(out, ",{b}");
    }
    out
}

pub fn render_summary(report: &RunReport) -> String {
    let fields: [(&str, String); 15] = [
        ("locations", report.partition.num_locations().to_string()),
        ("actions", report.num_actions.to_string()),
        ("enabled_pairs", report.enabled_pairs.to_string()),
        ("transition_count", report.transition_count.to_string()),
        ("interval_beta", report.beta.to_string()),
        ("samples", report.samples.to_string()),
        ("scenario_seed", report.scenario_seed.to_string()),
        ("simulate_seed", report.simulate_seed.to_string()),
        ("noise_scheme", report.noise_scheme.to_string()),
        ("grouping", report.grouping.to_string()),
        ("horizon", report.horizon.to_string()),
        ("threshold", report.threshold.to_string()),
        ("initial_states", report.initial.len().to_string()),
        ("min_initial_bound", report.min_initial_bound().to_string()),
        ("verdict", report.verdict.as_str().to_string()),
    ];
    let (names, values): (Vec<_>, Vec<_>) = fields.into_iter().unzip();
    format!("{}\n{}\n", names.join(","), values.join(","))
}

pub fn render_initial_states(initial: &[InitialStateReport], dim: usize) -> String {
    let mut out = String::from("index");
    for i in 1..=dim {
        let _ = write!(out, ",x{i}");
    }
    out.push_str(",location,lower_bound,runs,successes,empirical_rate,rate_lower,rate_upper\n");
    for (i, r) in initial.iter().enumerate() {
        let _ = write!(out, "{i}");
        for c in r.state.iter() {
            let _ = write!(out, ",{c}");
        }
        let _ = write!(out, ",{}", r.location);
        match r.lower_bound {
            Some(b) => {
                let _ = write!(out, ",{b}");
            }
            None => out.push(','),
        }
        match &r.monte_carlo {
            Some(mc) => {
                let _ = writeln!(
                    out,
                    ",{},{},{},{},{}",
                    mc.runs, mc.success_count, mc.empirical_rate, mc.rate_interval.0, mc.rate_interval.1
                );
            }
            None => out.push_str(",0,,,,\n"),
        }
    }
    out
}

pub fn render_simulation(initial: &[InitialStateReport]) -> String {
    let mut out = String::from("initial_index,seed,outcome,first_goal_step\n");
    for (i, r) in initial.iter().enumerate() {
        let Some(mc) = &r.monte_carlo else { continue };
        for (seed, outcome, step) in &mc.runs_detail {
            let step = step.map(|k| k.to_string()).unwrap_or_default();
            let _ = writeln!(out, "{i},{seed},{},{step}", outcome.as_str());
        }
    }
    out
}

/// All files of a full run, by name.
pub fn render_reports(report: &RunReport) -> Vec<(&'static str, String)> {
    let mut files = vec![
        ("bounds.csv", render_bounds(report)),
        ("summary.csv", render_summary(report)),
        (
            "initial_states.csv",
            render_initial_states(&report.initial, report.partition.dim()),
        ),
        ("simulation.csv", render_simulation(&report.initial)),
        ("policy.txt", export_policy(&report.policy)),
    ];
    if let Some(model) = &report.model_export {
        files.push(("model.txt", model.clone()));
    }
    files
}

/// Writes every file to a temporary sibling first and renames only once all
/// of them are on disk.
pub fn write_files(directory: &Path, files: &[(&str, String)]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(directory).map_err(|e| Error::io(directory, e))?;
    let mut staged = Vec::with_capacity(files.len());
    for (name, content) in files {
        let tmp = directory.join(format!(".{name}.tmp"));
        if let Err(e) = fs::write(&tmp, content) {
            for (t, _) in &staged {
                let _ = fs::remove_file(t);
            }
            return Err(Error::io(tmp, e));
        }
        staged.push((tmp, directory.join(name)));
    }
    for (tmp, dest) in &staged {
        fs::rename(tmp, dest).map_err(|e| Error::io(dest, e))?;
    }
    Ok(staged.into_iter().map(|(_, d)| d).collect())
}

pub fn write_reports(report: &RunReport, directory: &Path) -> Result<Vec<PathBuf>> {
    write_files(directory, &render_reports(report))
}
