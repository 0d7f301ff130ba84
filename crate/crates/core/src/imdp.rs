//! Interval MDPs and robust finite-horizon reach-avoid value iteration.
//!
//! Goal locations are worth 1 and unsafe locations 0 at every time-to-go,
//! which makes both absorbing without extra self-loops. The adversary picks
//! a distribution from the interval polytope of the chosen action at every
//! step; the controller maximizes the resulting worst case.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::abstraction::{ActionId, Label, LabelSets, LocationId};
use crate::error::{Error, Result};
use crate::scenario::{IntervalEntry, IntervalRow, IntervalTable};

#[derive(Debug, Clone, PartialEq)]
pub struct Imdp {
    num_locations: usize,
    enabled: Vec<Vec<ActionId>>,
    rows: Vec<IntervalRow>,
    labels: LabelSets,
    horizon: usize,
}

/// Validates consistency and interval feasibility of every enabled action.
pub fn assemble_imdp(
    num_locations: usize,
    enabled: Vec<Vec<ActionId>>,
    intervals: &IntervalTable,
    labels: LabelSets,
    horizon: usize,
) -> Result<Imdp> {
    Imdp::new(num_locations, enabled, intervals.rows.clone(), labels, horizon)
}

impl Imdp {
    pub fn new(
        num_locations: usize,
        enabled: Vec<Vec<ActionId>>,
        rows: Vec<IntervalRow>,
        labels: LabelSets,
        horizon: usize,
    ) -> Result<Self> {
        if enabled.len() != num_locations || labels.len() != num_locations {
            return Err(Error::InvalidArgument(format!(
                "{num_locations} locations but {} enabled lists and {} labels",
                enabled.len(),
                labels.len()
            )));
        }
        let mut used = vec![false; rows.len()];
        for (s, acts) in enabled.iter().enumerate() {
            for w in acts.windows(2) {
                if w[0] >= w[1] {
                    return Err(Error::InvalidArgument(format!(
                        "enabled actions of location {s} are not strictly increasing"
                    )));
                }
            }
            for &a in acts {
                *used.get_mut(a).ok_or_else(|| {
                    Error::InvalidArgument(format!("location {s} enables unknown action {a}"))
                })? = true;
            }
        }
        for (a, row) in rows.iter().enumerate() {
            if row.entries.iter().any(|e| e.successor >= num_locations) {
                return Err(Error::InvalidArgument(format!(
                    "action {a} has a successor outside the location range"
                )));
            }
            if used[a] {
                row.check_feasible(a)?;
            }
        }
        Ok(Self {
            num_locations,
            enabled,
            rows,
            labels,
            horizon,
        })
    }

    pub fn num_locations(&self) -> usize {
        self.num_locations
    }

    pub fn num_actions(&self) -> usize {
        self.rows.len()
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn enabled(&self, s: LocationId) -> &[ActionId] {
        &self.enabled[s]
    }

    pub fn row(&self, a: ActionId) -> &IntervalRow {
        &self.rows[a]
    }

    pub fn labels(&self) -> &LabelSets {
        &self.labels
    }

    /// Number of `(s, a, s')` with `a` enabled at `s` and positive upper
    /// bound on `s'`.
    pub fn transition_count(&self) -> u64 {
        let per_action: Vec<u64> = self.rows.iter().map(|r| r.support_size() as u64).collect();
        self.enabled
            .iter()
            .flat_map(|acts| acts.iter().map(|&a| per_action[a]))
            .sum()
    }
}

/// Worst-case expectation of `values` over the interval polytope of `row`.
///
/// Starts from the lower bounds and hands the remaining mass to successors
/// in ascending value order (ties by ascending id), each capped at its
/// upper bound. Returns the value and the minimizing probabilities aligned
/// with `row.entries`.
pub fn inner_min_expectation(values: &[f64], row: &IntervalRow) -> Result<(f64, Vec<f64>)> {
    row.check_feasible(usize::MAX)?;
    if let Some(e) = row.entries.iter().find(|e| e.successor >= values.len()) {
        return Err(Error::InvalidArgument(format!(
            "successor {} has no value",
            e.successor
        )));
    }
    Ok(worst_case(values, &row.entries))
}

fn worst_case(values: &[f64], entries: &[IntervalEntry]) -> (f64, Vec<f64>) {
    let mut probs: Vec<f64> = entries.iter().map(|e| e.lower).collect();
    let mut order: Vec<usize> = (0..entries.len()).collect();
    order.sort_by(|&i, &j| {
        values[entries[i].successor]
            .total_cmp(&values[entries[j].successor])
            .then(entries[i].successor.cmp(&entries[j].successor))
    });
    let mut slack = 1.0 - probs.iter().sum::<f64>();
    for &i in &order {
        if slack <= 0.0 {
            break;
        }
        let add = (entries[i].upper - entries[i].lower).min(slack);
        probs[i] += add;
        slack -= add;
    }
    let value = entries
        .iter()
        .zip(&probs)
        .map(|(e, p)| p * values[e.successor])
        .sum();
    (value, probs)
}

/// `values[t][s]`: robust reach-avoid probability with `t` steps to go.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    values: Vec<Vec<f64>>,
}

impl ValueTable {
    pub fn horizon(&self) -> usize {
        self.values.len() - 1
    }

    pub fn at(&self, time_to_go: usize, s: LocationId) -> f64 {
        self.values[time_to_go][s]
    }

    pub fn layer(&self, time_to_go: usize) -> &[f64] {
        &self.values[time_to_go]
    }

    /// Certified lower bound from `s` over the full horizon.
    pub fn lower_bound(&self, s: LocationId) -> f64 {
        self.values[self.horizon()][s]
    }
}

/// Deterministic time-varying policy indexed by absolute step `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    actions: Vec<Vec<Option<ActionId>>>,
}

impl Policy {
    pub fn new(horizon: usize, num_locations: usize) -> Self {
        Self {
            actions: vec![vec![None; num_locations]; horizon],
        }
    }

    pub fn horizon(&self) -> usize {
        self.actions.len()
    }

    pub fn num_locations(&self) -> usize {
        self.actions.first().map_or(0, Vec::len)
    }

    pub fn get(&self, s: LocationId, k: usize) -> Option<ActionId> {
        self.actions.get(k).and_then(|row| row.get(s)).copied().flatten()
    }

    pub fn set(&mut self, s: LocationId, k: usize, a: Option<ActionId>) {
        self.actions[k][s] = a;
    }

    /// Defined entries as `(s, k, a)`, sorted by `(s, k)`.
    pub fn entries(&self) -> Vec<(LocationId, usize, ActionId)> {
        let mut out = Vec::new();
        for s in 0..self.num_locations() {
            for k in 0..self.horizon() {
                if let Some(a) = self.actions[k][s] {
                    out.push((s, k, a));
                }
            }
        }
        out
    }
}

/// Finite-horizon max-min value iteration with Jacobi backups.
///
/// Ties in the maximization go to the lowest action id. The policy is left
/// undefined at goal, unsafe and action-less locations.
pub fn robust_value_iteration(m: &Imdp) -> Result<(ValueTable, Policy)> {
    let n = m.num_locations;
    let labels = m.labels.labels();
    let used: Vec<bool> = {
        let mut used = vec![false; m.rows.len()];
        for acts in &m.enabled {
            for &a in acts {
                used[a] = true;
            }
        }
        used
    };

    let mut values = Vec::with_capacity(m.horizon + 1);
    values.push(
        labels
            .iter()
            .map(|&l| if l == Label::Goal { 1.0 } else { 0.0 })
            .collect::<Vec<f64>>(),
    );
    let mut policy = Policy::new(m.horizon, n);

    for t in 1..=m.horizon {
        let prev = &values[t - 1];
        // Rows do not depend on the source location: one backup per action.
        let action_values: Vec<f64> = m
            .rows
            .par_iter()
            .zip(&used)
            .map(|(row, &u)| if u { worst_case(prev, &row.entries).0 } else { 0.0 })
            .collect();
        let (layer, choice): (Vec<f64>, Vec<Option<ActionId>>) = (0..n)
            .into_par_iter()
            .map(|s| match labels[s] {
                Label::Goal => (1.0, None),
                Label::Unsafe => (0.0, None),
                Label::Neutral => {
                    let mut best: Option<(f64, ActionId)> = None;
                    for &a in &m.enabled[s] {
                        if best.is_none_or(|(v, _)| action_values[a] > v) {
                            best = Some((action_values[a], a));
                        }
                    }
                    best.map_or((0.0, None), |(v, a)| (v, Some(a)))
                }
            })
            .unzip();
        let k = m.horizon - t;
        for (s, a) in choice.into_iter().enumerate() {
            policy.set(s, k, a);
        }
        values.push(layer);
    }
    Ok((ValueTable { values }, policy))
}

/// Line-oriented text form of the model, optionally with a policy.
///
/// ```text
/// imdp <locations> <actions> <horizon>
/// state <id> <goal|unsafe|none>
/// edge <s> <a> <s'> <p_low> <p_high>
/// policy <s> <k> <a>
/// ```
///
/// Edges cover every enabled `(s, a)` and every successor with a positive
/// upper bound, sorted by `(s, a, s')`; floats use the shortest decimal
/// that round-trips.
pub fn export_interval_model(m: &Imdp, policy: Option<&Policy>) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "imdp {} {} {}",
        m.num_locations,
        m.num_actions(),
        m.horizon
    );
    for s in 0..m.num_locations {
        let _ = writeln!(out, "state {s} {}", m.labels.label(s).as_str());
    }
    for s in 0..m.num_locations {
        for &a in &m.enabled[s] {
            for e in m.rows[a].entries.iter().filter(|e| e.upper > 0.0) {
                let _ = writeln!(out, "edge {s} {a} {} {} {}", e.successor, e.lower, e.upper);
            }
        }
    }
    if let Some(p) = policy {
        out.push_str(&export_policy(p));
    }
    out
}

/// Only the `policy` lines of [`export_interval_model`].
pub fn export_policy(policy: &Policy) -> String {
    let mut out = String::new();
    for (s, k, a) in policy.entries() {
        let _ = writeln!(out, "policy {s} {k} {a}");
    }
    out
}

fn parse_field<T: std::str::FromStr>(tok: Option<&str>, line: usize, what: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    let tok = tok.ok_or_else(|| Error::Parse {
        line,
        message: format!("missing {what}"),
    })?;
    tok.parse().map_err(|e| Error::Parse {
        line,
        message: format!("{what} `{tok}`: {e}"),
    })
}

/// Inverse of [`export_interval_model`].
pub fn parse_interval_model(text: &str) -> Result<(Imdp, Option<Policy>)> {
    let mut header: Option<(usize, usize, usize)> = None;
    let mut labels: Vec<Option<Label>> = Vec::new();
    let mut enabled: Vec<Vec<ActionId>> = Vec::new();
    let mut rows: Vec<Option<(LocationId, Vec<IntervalEntry>)>> = Vec::new();
    let mut policy_lines = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let mut tok = raw.split_whitespace();
        let Some(kind) = tok.next() else { continue };
        let parse_err = |message: String| Error::Parse { line, message };
        if kind != "imdp" && header.is_none() {
            return Err(parse_err("expected `imdp` header first".into()));
        }
        match kind {
            "imdp" => {
                if header.is_some() {
                    return Err(parse_err("duplicate header".into()));
                }
                let h = (
                    parse_field(tok.next(), line, "location count")?,
                    parse_field(tok.next(), line, "action count")?,
                    parse_field(tok.next(), line, "horizon")?,
                );
                labels = vec![None; h.0];
                enabled = vec![Vec::new(); h.0];
                rows = vec![None; h.1];
                header = Some(h);
            }
            "state" => {
                let s: usize = parse_field(tok.next(), line, "state id")?;
                let label = match tok.next() {
                    Some("goal") => Label::Goal,
                    Some("unsafe") => Label::Unsafe,
                    Some("none") => Label::Neutral,
                    other => return Err(parse_err(format!("bad label {other:?}"))),
                };
                *labels
                    .get_mut(s)
                    .ok_or_else(|| parse_err(format!("state {s} out of range")))? = Some(label);
            }
            "edge" => {
                let s: usize = parse_field(tok.next(), line, "source")?;
                let a: usize = parse_field(tok.next(), line, "action")?;
                let succ: usize = parse_field(tok.next(), line, "successor")?;
                let lower: f64 = parse_field(tok.next(), line, "lower bound")?;
                let upper: f64 = parse_field(tok.next(), line, "upper bound")?;
                if s >= enabled.len() || a >= rows.len() {
                    return Err(parse_err(format!("edge ({s}, {a}) out of range")));
                }
                if enabled[s].last() != Some(&a) {
                    if enabled[s].last().is_some_and(|&last| last > a) {
                        return Err(parse_err("edges are not sorted".into()));
                    }
                    enabled[s].push(a);
                }
                let entry = IntervalEntry {
                    successor: succ,
                    lower,
                    upper,
                };
                match &mut rows[a] {
                    None => rows[a] = Some((s, vec![entry])),
                    Some((owner, entries)) if *owner == s => entries.push(entry),
                    Some((_, entries)) => {
                        if !entries.contains(&entry) {
                            return Err(parse_err(format!(
                                "action {a} has differing rows across locations"
                            )));
                        }
                    }
                }
            }
            "policy" => {
                let s: usize = parse_field(tok.next(), line, "location")?;
                let k: usize = parse_field(tok.next(), line, "step")?;
                let a: usize = parse_field(tok.next(), line, "action")?;
                policy_lines.push((line, s, k, a));
            }
            other => return Err(parse_err(format!("unknown record `{other}`"))),
        }
        if tok.next().is_some() {
            return Err(parse_err("trailing fields".into()));
        }
    }

    let (num_locations, _, horizon) = header.ok_or_else(|| Error::Parse {
        line: 0,
        message: "empty model".into(),
    })?;
    let labels = labels
        .into_iter()
        .enumerate()
        .map(|(s, l)| {
            l.ok_or_else(|| Error::Parse {
                line: 0,
                message: format!("state {s} missing"),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let rows = rows
        .into_iter()
        .map(|r| IntervalRow::new(r.map(|(_, e)| e).unwrap_or_default()))
        .collect();
    let imdp = Imdp::new(num_locations, enabled, rows, LabelSets::from_labels(labels), horizon)?;

    let policy = if policy_lines.is_empty() {
        None
    } else {
        let mut p = Policy::new(horizon, num_locations);
        for (line, s, k, a) in policy_lines {
            if s >= num_locations || k >= horizon || a >= imdp.num_actions() {
                return Err(Error::Parse {
                    line,
                    message: format!("policy entry ({s}, {k}, {a}) out of range"),
                });
            }
            p.set(s, k, Some(a));
        }
        Some(p)
    };
    Ok((imdp, policy))
}

/// `policy` lines only, for a model with the given shape.
pub fn parse_policy(text: &str, horizon: usize, num_locations: usize) -> Result<Policy> {
    let mut p = Policy::new(horizon, num_locations);
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let mut tok = raw.split_whitespace();
        if tok.next() != Some("policy") {
            continue;
        }
        let s: usize = parse_field(tok.next(), line, "location")?;
        let k: usize = parse_field(tok.next(), line, "step")?;
        let a: usize = parse_field(tok.next(), line, "action")?;
        if s >= num_locations || k >= horizon {
            return Err(Error::Parse {
                line,
                message: format!("policy entry ({s}, {k}) outside model of {num_locations} locations and horizon {horizon}"),
            });
        }
        p.set(s, k, Some(a));
    }
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(successor: usize, lower: f64, upper: f64) -> IntervalEntry {
        IntervalEntry {
            successor,
            lower,
            upper,
        }
    }

    /// Locations: 0 goal, 1 unsafe, 2 free with one action.
    fn three_location() -> Imdp {
        let row = IntervalRow::new(vec![entry(0, 0.3, 0.6), entry(1, 0.2, 0.5), entry(2, 0.1, 0.3)]);
        let labels = LabelSets::from_labels(vec![Label::Goal, Label::Unsafe, Label::Neutral]);
        Imdp::new(3, vec![vec![], vec![], vec![0]], vec![row], labels, 2).unwrap()
    }

    #[test]
    fn inner_min_example() {
        let row = IntervalRow::new(vec![entry(0, 0.3, 0.6), entry(1, 0.2, 0.5), entry(2, 0.1, 0.3)]);
        let (v, p) = inner_min_expectation(&[1.0, 0.0, 0.3], &row).unwrap();
        assert!((v - 0.36).abs() < 1e-12);
        for (got, want) in p.iter().zip([0.3, 0.5, 0.2]) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn inner_min_degenerate_and_constant() {
        let row = IntervalRow::new(vec![entry(0, 0.25, 0.25), entry(1, 0.75, 0.75)]);
        let (v, _) = inner_min_expectation(&[0.4, 0.8], &row).unwrap();
        assert!((v - (0.25 * 0.4 + 0.75 * 0.8)).abs() < 1e-15);
        let row = IntervalRow::new(vec![entry(0, 0.0, 0.9), entry(1, 0.1, 1.0), entry(2, 0.0, 0.2)]);
        let (v, _) = inner_min_expectation(&[0.7, 0.7, 0.7], &row).unwrap();
        assert!((v - 0.7).abs() < 1e-15);
        let bad = IntervalRow::new(vec![entry(0, 0.0, 0.4)]);
        assert!(inner_min_expectation(&[1.0], &bad).is_err());
    }

    #[test]
    fn value_iteration_example() {
        let m = three_location();
        let (v, p) = robust_value_iteration(&m).unwrap();
        assert_eq!(v.at(0, 2), 0.0);
        assert!((v.at(1, 2) - 0.3).abs() < 1e-12);
        assert!((v.lower_bound(2) - 0.36).abs() < 1e-12);
        for t in 0..=2 {
            assert_eq!(v.at(t, 0), 1.0);
            assert_eq!(v.at(t, 1), 0.0);
        }
        assert_eq!(p.get(2, 0), Some(0));
        assert_eq!(p.get(0, 0), None);
    }

    #[test]
    fn no_action_location_is_zero() {
        let labels = LabelSets::from_labels(vec![Label::Neutral, Label::Goal]);
        let m = Imdp::new(2, vec![vec![], vec![]], vec![], labels, 3).unwrap();
        let (v, p) = robust_value_iteration(&m).unwrap();
        assert!((0..=3).all(|t| v.at(t, 0) == 0.0));
        assert_eq!(p.get(0, 1), None);
    }

    #[test]
    fn argmax_ties_take_lowest_action() {
        let r = IntervalRow::new(vec![entry(1, 1.0, 1.0)]);
        let labels = LabelSets::from_labels(vec![Label::Neutral, Label::Goal]);
        let m = Imdp::new(2, vec![vec![0, 1], vec![]], vec![r.clone(), r], labels, 1).unwrap();
        let (_, p) = robust_value_iteration(&m).unwrap();
        assert_eq!(p.get(0, 0), Some(0));
    }

    #[test]
    fn assemble_rejects_infeasible_rows() {
        let labels = LabelSets::from_labels(vec![Label::Neutral, Label::Goal]);
        let table = IntervalTable {
            rows: vec![IntervalRow::new(vec![entry(1, 0.2, 0.9)])],
            beta: 0.01,
            samples: 10,
        };
        assert!(assemble_imdp(2, vec![vec![0], vec![]], &table, labels.clone(), 1).is_err());
        // The same row is fine while no location enables it.
        let m = assemble_imdp(2, vec![vec![], vec![]], &table, labels, 1).unwrap();
        assert_eq!(m.transition_count(), 0);
    }

    #[test]
    fn export_examples() {
        let labels = LabelSets::from_labels(vec![Label::Goal]);
        let m = Imdp::new(1, vec![vec![]], vec![], labels, 4).unwrap();
        let text = export_interval_model(&m, None);
        assert_eq!(text, "imdp 1 0 4\nstate 0 goal\n");

        // Location 2 enables a three-successor and a two-successor action.
        let labels = LabelSets::from_labels(vec![Label::Goal, Label::Unsafe, Label::Neutral]);
        let rows = vec![
            IntervalRow::new(vec![entry(0, 0.3, 0.6), entry(1, 0.2, 0.5), entry(2, 0.1, 0.3)]),
            IntervalRow::new(vec![entry(2, 0.0, 0.5), entry(0, 0.5, 1.0), entry(1, 0.0, 0.0)]),
        ];
        let m = Imdp::new(3, vec![vec![], vec![], vec![0, 1]], rows, labels, 2).unwrap();
        assert_eq!(m.transition_count(), 5);
        let (_, policy) = robust_value_iteration(&m).unwrap();
        let text = export_interval_model(&m, Some(&policy));
        let edges: Vec<&str> = text.lines().filter(|l| l.starts_with("edge")).collect();
        assert_eq!(
            edges,
            vec![
                "edge 2 0 0 0.3 0.6",
                "edge 2 0 1 0.2 0.5",
                "edge 2 0 2 0.1 0.3",
                "edge 2 1 0 0.5 1",
                "edge 2 1 2 0 0.5",
            ]
        );
        let (parsed, parsed_policy) = parse_interval_model(&text).unwrap();
        assert_eq!(export_interval_model(&parsed, parsed_policy.as_ref()), text);
        assert_eq!(parsed_policy.as_ref(), Some(&policy));
        assert_eq!(parse_policy(&text, 2, 3).unwrap(), policy);
    }

    #[test]
    fn parse_errors() {
        assert!(parse_interval_model("").is_err());
        assert!(parse_interval_model("state 0 goal\n").is_err());
        assert!(parse_interval_model("imdp 1 0 1\nstate 0 maybe\n").is_err());
        assert!(parse_interval_model("imdp 2 0 1\nstate 0 goal\n").is_err());
        assert!(parse_interval_model("imdp 1 0 1\nstate 0 goal extra\n").is_err());
    }
}
