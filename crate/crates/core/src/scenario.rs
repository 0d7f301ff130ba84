//! PAC transition-probability intervals from noise samples.
//!
//! A successor region receiving `c` of `N` samples gets the two-sided
//! binomial-tail interval `[lower, upper]`, each side holding with
//! confidence `1 - beta / (2N)`. Rows depend only on the action's target
//! point, so one row is computed per action and shared by every location
//! enabling it.

use std::collections::BTreeMap;

use nalgebra::DVector;
use rayon::prelude::*;

use crate::abstraction::{LocationId, Partition};
use crate::error::{check_dim, Error, Result};
use crate::noise::SampleSet;

const BISECTION_TOL: f64 = 1e-9;
const FEASIBILITY_TOL: f64 = 1e-9;

fn check_args(n: usize, k: usize, beta_side: f64) -> Result<()> {
    if n == 0 || k > n {
        return Err(Error::InvalidArgument(format!(
            "binomial bound needs 0 <= k <= N, N >= 1 (N = {n}, k = {k})"
        )));
    }
    if !(beta_side > 0.0 && beta_side < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "confidence parameter {beta_side} outside (0, 1)"
        )));
    }
    Ok(())
}

/// Log-space binomial tail sums for a fixed trial count.
#[derive(Debug, Clone)]
pub struct BinomialTails {
    n: usize,
    ln_factorial: Vec<f64>,
}

impl BinomialTails {
    pub fn new(n: usize) -> Self {
        let mut ln_factorial = Vec::with_capacity(n + 1);
        let mut acc = 0.0;
        ln_factorial.push(0.0);
        for i in 1..=n {
            acc += (i as f64).ln();
            ln_factorial.push(acc);
        }
        Self { n, ln_factorial }
    }

    pub fn trials(&self) -> usize {
        self.n
    }

    fn ln_term(&self, i: usize, ln_p: f64, ln_q: f64) -> f64 {
        let n = self.n;
        let ln_choose = self.ln_factorial[n] - self.ln_factorial[i] - self.ln_factorial[n - i];
        let a = if i == 0 { 0.0 } else { i as f64 * ln_p };
        let b = if i == n { 0.0 } else { (n - i) as f64 * ln_q };
        ln_choose + a + b
    }

    /// `sum_{i in range} C(N,i) p^i (1-p)^(N-i)`.
    fn sum(&self, range: std::ops::RangeInclusive<usize>, p: f64) -> f64 {
        let ln_p = p.ln();
        let ln_q = (1.0 - p).ln();
        let terms: Vec<f64> = range.map(|i| self.ln_term(i, ln_p, ln_q)).collect();
        let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return 0.0;
        }
        max.exp() * terms.iter().map(|t| (t - max).exp()).sum::<f64>()
    }

    /// `P[X >= k]` for `X ~ Bin(N, p)`.
    pub fn upper_tail(&self, k: usize, p: f64) -> f64 {
        self.sum(k..=self.n, p)
    }

    /// `P[X <= k]` for `X ~ Bin(N, p)`.
    pub fn lower_tail(&self, k: usize, p: f64) -> f64 {
        self.sum(0..=k, p)
    }

    /// The `p` with `P[X >= k] = beta_side`; 0 when `k = 0`.
    pub fn lower_bound(&self, k: usize, beta_side: f64) -> Result<f64> {
        check_args(self.n, k, beta_side)?;
        if k == 0 {
            return Ok(0.0);
        }
        // upper_tail is increasing in p; keep lo strictly below the root.
        let (mut lo, mut hi) = (0.0, 1.0);
        while hi - lo > BISECTION_TOL {
            let mid = 0.5 * (lo + hi);
            if self.upper_tail(k, mid) > beta_side {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(lo)
    }

    /// The `p` with `P[X <= k] = beta_side`; 1 when `k = N`.
    pub fn upper_bound(&self, k: usize, beta_side: f64) -> Result<f64> {
        check_args(self.n, k, beta_side)?;
        if k == self.n {
            return Ok(1.0);
        }
        // lower_tail is decreasing in p; keep hi strictly above the root.
        let (mut lo, mut hi) = (0.0, 1.0);
        while hi - lo > BISECTION_TOL {
            let mid = 0.5 * (lo + hi);
            if self.lower_tail(k, mid) > beta_side {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(hi)
    }
}

pub fn binomial_lower(n: usize, k: usize, beta_side: f64) -> Result<f64> {
    check_args(n, k, beta_side)?;
    BinomialTails::new(n).lower_bound(k, beta_side)
}

pub fn binomial_upper(n: usize, k: usize, beta_side: f64) -> Result<f64> {
    check_args(n, k, beta_side)?;
    BinomialTails::new(n).upper_bound(k, beta_side)
}

/// Per-interval `beta` such that `1 - beta * |A| * |S| = overall`.
pub fn confidence_budget(overall: f64, action_count: usize, location_count: usize) -> Result<f64> {
    if !(overall > 0.0 && overall < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "overall confidence {overall} outside (0, 1)"
        )));
    }
    if action_count == 0 || location_count == 0 {
        return Err(Error::InvalidArgument("empty abstraction".into()));
    }
    Ok((1.0 - overall) / (action_count as f64 * location_count as f64))
}

/// Sample counts per successor location of `target + delta_i`, sink included.
pub fn count_successors(
    target: &DVector<f64>,
    samples: &SampleSet,
    partition: &Partition,
) -> Result<BTreeMap<LocationId, usize>> {
    check_dim("target point", partition.dim(), target.len())?;
    let mut counts = BTreeMap::new();
    let mut point = vec![0.0; partition.dim()];
    for delta in &samples.samples {
        check_dim("noise sample", partition.dim(), delta.len())?;
        for (p, (t, d)) in point.iter_mut().zip(target.iter().zip(delta.iter())) {
            *p = t + d;
        }
        *counts.entry(partition.locate(&point)).or_insert(0) += 1;
    }
    Ok(counts)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntervalEntry {
    pub successor: LocationId,
    pub lower: f64,
    pub upper: f64,
}

/// Successor intervals of one action, sorted by successor id.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct IntervalRow {
    pub entries: Vec<IntervalEntry>,
}

impl IntervalRow {
    pub fn new(mut entries: Vec<IntervalEntry>) -> Self {
        entries.sort_by_key(|e| e.successor);
        Self { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries with a positive upper bound.
    pub fn support_size(&self) -> usize {
        self.entries.iter().filter(|e| e.upper > 0.0).count()
    }

    /// `0 <= lower <= upper <= 1` entry-wise and `sum lower <= 1 <= sum upper`.
    pub fn check_feasible(&self, action: usize) -> Result<()> {
        let infeasible = |detail: String| Err(Error::Infeasible { action, detail });
        let mut sum_lo = 0.0;
        let mut sum_hi = 0.0;
        let mut prev: Option<LocationId> = None;
        for e in &self.entries {
            if prev.is_some_and(|p| p >= e.successor) {
                return infeasible(format!("successor {} repeated or unsorted", e.successor));
            }
            prev = Some(e.successor);
            if !(0.0 <= e.lower && e.lower <= e.upper && e.upper <= 1.0) {
                return infeasible(format!(
                    "bad interval [{}, {}] for successor {}",
                    e.lower, e.upper, e.successor
                ));
            }
            sum_lo += e.lower;
            sum_hi += e.upper;
        }
        if sum_lo > 1.0 + FEASIBILITY_TOL || sum_hi < 1.0 - FEASIBILITY_TOL {
            return infeasible(format!("sum of lower {sum_lo}, sum of upper {sum_hi}"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntervalTable {
    pub rows: Vec<IntervalRow>,
    pub beta: f64,
    pub samples: usize,
}

impl IntervalTable {
    pub fn interval_count(&self) -> usize {
        self.rows.iter().map(IntervalRow::len).sum()
    }
}

/// One interval row per target point.
///
/// Non-sink successors with at least one sample get an entry; the sink's
/// entry uses `N` minus the samples landing in regions, so zero-sample
/// regions contribute their possible mass to the sink.
pub fn build_interval_table(
    targets: &[DVector<f64>],
    samples: &SampleSet,
    partition: &Partition,
    beta: f64,
) -> Result<IntervalTable> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::InvalidArgument(format!("beta {beta} outside (0, 1)")));
    }
    let n = samples.len();
    let beta_side = beta / (2.0 * n as f64);
    check_args(n, 0, beta_side)?;
    let sink = partition.sink();

    let counts = targets
        .par_iter()
        .map(|d| count_successors(d, samples, partition))
        .collect::<Result<Vec<_>>>()?;

    // Bounds depend only on the count; solve each distinct count once.
    let mut distinct: Vec<usize> = counts
        .iter()
        .flat_map(|row| {
            let in_regions: usize = row.iter().filter(|(s, _)| **s != sink).map(|(_, c)| c).sum();
            row.iter()
                .filter(|(s, _)| **s != sink)
                .map(|(_, &c)| c)
                .chain(std::iter::once(n - in_regions))
                .collect::<Vec<_>>()
        })
        .collect();
    distinct.sort_unstable();
    distinct.dedup();
    let tails = BinomialTails::new(n);
    let solved: BTreeMap<usize, (f64, f64)> = distinct
        .par_iter()
        .map(|&c| {
            Ok((
                c,
                (tails.lower_bound(c, beta_side)?, tails.upper_bound(c, beta_side)?),
            ))
        })
        .collect::<Result<_>>()?;

    let rows = counts
        .iter()
        .enumerate()
        .map(|(action, row)| {
            let mut entries = Vec::with_capacity(row.len() + 1);
            let mut in_regions = 0;
            for (&s, &c) in row.iter().filter(|(s, _)| **s != sink) {
                in_regions += c;
                let (lower, upper) = solved[&c];
                entries.push(IntervalEntry {
                    successor: s,
                    lower,
                    upper,
                });
            }
            let (lower, upper) = solved[&(n - in_regions)];
            entries.push(IntervalEntry {
                successor: sink,
                lower,
                upper,
            });
            let row = IntervalRow::new(entries);
            row.check_feasible(action)?;
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(IntervalTable {
        rows,
        beta,
        samples: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::HyperRectangle;

    #[test]
    fn boundary_rules() {
        assert_eq!(binomial_lower(10, 0, 0.01).unwrap(), 0.0);
        assert_eq!(binomial_upper(10, 10, 0.01).unwrap(), 1.0);
        assert!(binomial_lower(10, 11, 0.01).is_err());
        assert!(binomial_upper(10, 3, 0.0).is_err());
        assert!(binomial_upper(0, 0, 0.1).is_err());
    }

    #[test]
    fn all_inside_closed_form() {
        let expected = 0.002f64.powf(1.0 / 25.0);
        assert!((binomial_lower(25, 25, 0.002).unwrap() - expected).abs() < 1e-6);
        assert!((binomial_upper(25, 0, 0.002).unwrap() - (1.0 - expected)).abs() < 1e-6);
        assert!((expected - 0.779904).abs() < 1e-6);
    }

    #[test]
    fn regularized_beta_oracle() {
        use statrs::distribution::{Beta, ContinuousCDF};
        // Clopper-Pearson: lower = Beta(k, N-k+1).inv(b), upper = Beta(k+1, N-k).inv(1-b)
        for (n, k, b) in [(10usize, 5usize, 0.025), (200, 17, 0.001), (3200, 40, 1e-12), (25, 1, 0.3)] {
            let lo = Beta::new(k as f64, (n - k + 1) as f64).unwrap().inverse_cdf(b);
            let hi = Beta::new((k + 1) as f64, (n - k) as f64).unwrap().inverse_cdf(1.0 - b);
            assert!((binomial_lower(n, k, b).unwrap() - lo).abs() < 1e-7, "lower {n} {k} {b}");
            assert!((binomial_upper(n, k, b).unwrap() - hi).abs() < 1e-7, "upper {n} {k} {b}");
        }
        assert!((binomial_lower(10, 5, 0.025).unwrap() - 0.1871).abs() < 1e-4);
        assert!((binomial_upper(10, 5, 0.025).unwrap() - 0.8129).abs() < 1e-4);
    }

    #[test]
    fn budget_examples() {
        let b = confidence_budget(0.99, 1682, 1682).unwrap();
        assert!((b - 0.01 / (1682.0 * 1682.0)).abs() < 1e-20);
        assert!((b - 3.534e-9).abs() < 1e-12);
        assert!((confidence_budget(0.99, 1, 1).unwrap() - 0.01).abs() < 1e-15);
        assert!((confidence_budget(0.5, 10, 10).unwrap() - 0.005).abs() < 1e-15);
        assert!(confidence_budget(1.0, 1, 1).is_err());
    }

    fn unit_partition() -> Partition {
        Partition::new(HyperRectangle::new(vec![-1.0], vec![1.0]).unwrap(), vec![2]).unwrap()
    }

    fn samples(v: &[f64]) -> SampleSet {
        SampleSet::new(v.iter().map(|&x| DVector::from_element(1, x)).collect(), 0).unwrap()
    }

    #[test]
    fn count_examples() {
        let p = unit_partition();
        let c = count_successors(&DVector::zeros(1), &samples(&[-0.5, 0.3, 0.7, 1.5]), &p).unwrap();
        assert_eq!(c, BTreeMap::from([(0, 1), (1, 2), (2, 1)]));
        let c = count_successors(&DVector::from_element(1, 0.5), &samples(&[0.0; 7]), &p).unwrap();
        assert_eq!(c, BTreeMap::from([(1, 7)]));
    }

    #[test]
    fn table_examples() {
        let p = unit_partition();
        let s = samples(&[-0.5, 0.3, 0.7, 1.5]);
        let t = build_interval_table(&[DVector::zeros(1)], &s, &p, 0.01).unwrap();
        let row = &t.rows[0];
        assert_eq!(row.len(), 3);
        let freq = [0.25, 0.5, 0.25];
        for (e, f) in row.entries.iter().zip(freq) {
            assert!(e.lower < f && f < e.upper, "{e:?}");
        }

        let concentrated = samples(&[0.1; 6]);
        let t = build_interval_table(&[DVector::from_element(1, 0.4)], &concentrated, &p, 0.01).unwrap();
        let row = &t.rows[0];
        assert_eq!(row.len(), 2);
        assert_eq!(row.entries[0].upper, 1.0);
        assert_eq!(row.entries[1].successor, p.sink());
        assert_eq!(row.entries[1].lower, 0.0);
        assert!(row.entries[1].upper > 0.0);
    }

    #[test]
    fn infeasible_row_detected() {
        let row = IntervalRow::new(vec![
            IntervalEntry { successor: 0, lower: 0.1, upper: 0.4 },
            IntervalEntry { successor: 1, lower: 0.1, upper: 0.4 },
        ]);
        assert!(row.check_feasible(0).is_err());
        let row = IntervalRow::new(vec![IntervalEntry { successor: 0, lower: 0.6, upper: 0.5 }]);
        assert!(row.check_feasible(0).is_err());
    }

    proptest::proptest! {
        #[test]
        fn monotone_and_bracketing(n in 1usize..120, k in 0usize..120, b in 1e-6f64..0.4) {
            let k = k % (n + 1);
            let t = BinomialTails::new(n);
            let (lo, hi) = (t.lower_bound(k, b).unwrap(), t.upper_bound(k, b).unwrap());
            let freq = k as f64 / n as f64;
            proptest::prop_assert!(lo <= freq && freq <= hi);
            if k < n {
                proptest::prop_assert!(t.lower_bound(k + 1, b).unwrap() >= lo);
                proptest::prop_assert!(t.upper_bound(k + 1, b).unwrap() >= hi);
            }
            let tighter = b / 10.0;
            proptest::prop_assert!(t.lower_bound(k, tighter).unwrap() <= lo);
            proptest::prop_assert!(t.upper_bound(k, tighter).unwrap() >= hi);
        }
    }
}
