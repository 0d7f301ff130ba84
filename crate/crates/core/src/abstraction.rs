//! Model-based half of the abstraction: a rectangular partition plus sink,
//! one action per region center, backward reachable sets and the actions
//! they enable.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::dynamics::{LinearSystem, StabilizedSystem};
use crate::error::{check_dim, Error, Result};
use crate::geometry::{rect_inside_unchecked, HalfspacePolytope, HyperRectangle};

pub type LocationId = usize;
pub type ActionId = usize;

/// Uniform rectangular tiling of a box `X`; ids are row-major multi-indices
/// and the sink (`R^n \ X`) is the last id.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    domain: HyperRectangle,
    counts: Vec<usize>,
    widths: Vec<f64>,
    strides: Vec<usize>,
    num_regions: usize,
}

impl Partition {
    pub fn new(domain: HyperRectangle, counts: Vec<usize>) -> Result<Self> {
        check_dim("partition counts", domain.dim(), counts.len())?;
        if counts.contains(&0) {
            return Err(Error::InvalidArgument("partition counts must be positive".into()));
        }
        let widths: Vec<f64> = (0..domain.dim())
            .map(|i| (domain.upper()[i] - domain.lower()[i]) / counts[i] as f64)
            .collect();
        if widths.iter().any(|&w| w <= 0.0) {
            return Err(Error::InvalidArgument("partition domain is degenerate".into()));
        }
        let mut strides = vec![1; counts.len()];
        for i in (0..counts.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * counts[i + 1];
        }
        let num_regions = counts.iter().product();
        Ok(Self {
            domain,
            counts,
            widths,
            strides,
            num_regions,
        })
    }

    pub fn domain(&self) -> &HyperRectangle {
        &self.domain
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn widths(&self) -> &[f64] {
        &self.widths
    }

    pub fn dim(&self) -> usize {
        self.counts.len()
    }

    pub fn num_regions(&self) -> usize {
        self.num_regions
    }

    /// Regions plus the sink.
    pub fn num_locations(&self) -> usize {
        self.num_regions + 1
    }

    pub fn sink(&self) -> LocationId {
        self.num_regions
    }

    pub fn multi_index(&self, id: LocationId) -> Vec<usize> {
        debug_assert!(id < self.num_regions);
        self.strides
            .iter()
            .zip(&self.counts)
            .map(|(s, c)| (id / s) % c)
            .collect()
    }

    fn bounds_into(&self, id: LocationId, lower: &mut [f64], upper: &mut [f64]) {
        for i in 0..self.dim() {
            let k = (id / self.strides[i]) % self.counts[i];
            let lo = self.domain.lower()[i];
            lower[i] = lo + k as f64 * self.widths[i];
            upper[i] = if k + 1 == self.counts[i] {
                self.domain.upper()[i]
            } else {
                lo + (k + 1) as f64 * self.widths[i]
            };
        }
    }

    /// Panics on the sink id.
    pub fn region(&self, id: LocationId) -> HyperRectangle {
        assert!(id < self.num_regions, "location {id} is not a partition region");
        let mut lower = vec![0.0; self.dim()];
        let mut upper = vec![0.0; self.dim()];
        self.bounds_into(id, &mut lower, &mut upper);
        HyperRectangle::new(lower, upper).expect("region bounds are ordered")
    }

    pub fn center(&self, id: LocationId) -> Vec<f64> {
        self.region(id).center()
    }

    /// Sink outside the closed domain; otherwise floor of the scaled
    /// offset, clamped so the upper faces belong to the last region.
    pub fn locate(&self, x: &[f64]) -> LocationId {
        if !self.domain.contains(x) {
            return self.sink();
        }
        let mut id = 0;
        for i in 0..self.dim() {
            let k = ((x[i] - self.domain.lower()[i]) / self.widths[i]).floor();
            let k = (k.max(0.0) as usize).min(self.counts[i] - 1);
            id += k * self.strides[i];
        }
        id
    }
}

/// Which backward-set construction to use.
#[derive(Debug, Clone, Copy)]
pub enum Layer<'a> {
    Single(&'a LinearSystem),
    TwoLayer(&'a StabilizedSystem),
}

impl<'a> Layer<'a> {
    pub fn system(&self) -> &'a LinearSystem {
        match self {
            Layer::Single(sys) => sys,
            Layer::TwoLayer(ssys) => ssys.base(),
        }
    }
}

/// Backward sets as preimages of input polytopes under `x -> M x + B^-1 d`.
struct BackwardMap {
    b_inv: DMatrix<f64>,
    parts: Vec<(HalfspacePolytope, DMatrix<f64>)>,
}

impl BackwardMap {
    fn new(layer: Layer<'_>) -> Result<Self> {
        let sys = layer.system();
        let b_inv = sys.b_inverse()?;
        let parts = match layer {
            // u = B^-1 (d - A x)
            Layer::Single(sys) => vec![(sys.input_set().clone(), -(&b_inv * sys.a()))],
            // u' = B^-1 (d - A_cl x), total u = -K x + u'
            Layer::TwoLayer(ssys) => {
                let a_cl = ssys.closed_loop();
                let abstract_map = -(&b_inv * a_cl);
                let total_map = -(ssys.gain() + &b_inv * a_cl);
                vec![
                    (sys.input_set().clone(), total_map),
                    (ssys.abstract_input_set().clone(), abstract_map),
                ]
            }
        };
        Ok(Self { b_inv, parts })
    }

    fn backward_set(&self, target: &DVector<f64>) -> Result<HalfspacePolytope> {
        check_dim("target point", self.b_inv.ncols(), target.len())?;
        let shift = &self.b_inv * target;
        let mut out: Option<HalfspacePolytope> = None;
        for (poly, map) in &self.parts {
            let pre = poly.affine_preimage(map, &shift)?;
            out = Some(match out {
                None => pre,
                Some(acc) => acc.intersect(&pre)?,
            });
        }
        Ok(out.expect("at least one constraint group"))
    }
}

/// `{x : B^-1 (d - A x) in U}`.
pub fn backward_set_single(sys: &LinearSystem, target: &DVector<f64>) -> Result<HalfspacePolytope> {
    BackwardMap::new(Layer::Single(sys))?.backward_set(target)
}

/// `{x : -K x + u'(x) in U, u'(x) in U'}` with `u'(x) = B^-1 (d - A_cl x)`.
pub fn backward_set_two_layer(
    ssys: &StabilizedSystem,
    target: &DVector<f64>,
) -> Result<HalfspacePolytope> {
    if ssys.closed_loop().clone().try_inverse().is_none() {
        return Err(Error::Singular("closed-loop matrix A - BK".into()));
    }
    BackwardMap::new(Layer::TwoLayer(ssys))?.backward_set(target)
}

/// `enabled[s]` lists actions whose backward set contains region `s`; the
/// sink enables nothing.
pub fn enabled_actions(
    partition: &Partition,
    backward_sets: &[HalfspacePolytope],
) -> Result<Vec<Vec<ActionId>>> {
    for bs in backward_sets {
        check_dim("backward set", partition.dim(), bs.dim())?;
    }
    let n = partition.dim();
    let mut enabled: Vec<Vec<ActionId>> = (0..partition.num_regions())
        .into_par_iter()
        .map(|s| {
            let mut lower = vec![0.0; n];
            let mut upper = vec![0.0; n];
            partition.bounds_into(s, &mut lower, &mut upper);
            backward_sets
                .iter()
                .enumerate()
                .filter(|(_, bs)| rect_inside_unchecked(&lower, &upper, bs))
                .map(|(a, _)| a)
                .collect()
        })
        .collect();
    enabled.push(Vec::new());
    Ok(enabled)
}

#[derive(Debug, Clone)]
pub struct ActionSet {
    pub targets: Vec<DVector<f64>>,
    pub backward_sets: Vec<HalfspacePolytope>,
    pub enabled: Vec<Vec<ActionId>>,
}

impl ActionSet {
    pub fn num_actions(&self) -> usize {
        self.targets.len()
    }

    /// Number of `(s, a)` pairs with `a` enabled at `s`.
    pub fn enabled_pairs(&self) -> usize {
        self.enabled.iter().map(Vec::len).sum()
    }
}

/// One action per region, targeting the region center.
pub fn build_action_set(partition: &Partition, layer: Layer<'_>) -> Result<ActionSet> {
    check_dim("partition vs state", layer.system().state_dim(), partition.dim())?;
    if let Layer::TwoLayer(ssys) = layer {
        if ssys.closed_loop().clone().try_inverse().is_none() {
            return Err(Error::Singular("closed-loop matrix A - BK".into()));
        }
    }
    let map = BackwardMap::new(layer)?;
    let targets: Vec<DVector<f64>> = (0..partition.num_regions())
        .map(|s| DVector::from_vec(partition.center(s)))
        .collect();
    let backward_sets = targets
        .par_iter()
        .map(|d| map.backward_set(d))
        .collect::<Result<Vec<_>>>()?;
    let enabled = enabled_actions(partition, &backward_sets)?;
    Ok(ActionSet {
        targets,
        backward_sets,
        enabled,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Goal,
    Unsafe,
    Neutral,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Goal => "goal",
            Label::Unsafe => "unsafe",
            Label::Neutral => "none",
        }
    }
}

/// Per-location goal/unsafe labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelSets {
    labels: Vec<Label>,
}

impl LabelSets {
    pub fn from_labels(labels: Vec<Label>) -> Self {
        Self { labels }
    }

    pub fn from_sets(
        num_locations: usize,
        goal: &BTreeSet<LocationId>,
        unsafe_set: &BTreeSet<LocationId>,
    ) -> Result<Self> {
        let mut labels = vec![Label::Neutral; num_locations];
        for &s in goal {
            *labels
                .get_mut(s)
                .ok_or_else(|| Error::InvalidArgument(format!("goal location {s} out of range")))? =
                Label::Goal;
        }
        for &s in unsafe_set {
            let slot = labels
                .get_mut(s)
                .ok_or_else(|| Error::InvalidArgument(format!("unsafe location {s} out of range")))?;
            if *slot == Label::Goal {
                return Err(Error::LabelOverlap(s));
            }
            *slot = Label::Unsafe;
        }
        Ok(Self { labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn label(&self, s: LocationId) -> Label {
        self.labels[s]
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn goal(&self) -> BTreeSet<LocationId> {
        self.with(Label::Goal)
    }

    pub fn unsafe_set(&self) -> BTreeSet<LocationId> {
        self.with(Label::Unsafe)
    }

    fn with(&self, l: Label) -> BTreeSet<LocationId> {
        (0..self.labels.len()).filter(|&s| self.labels[s] == l).collect()
    }
}

/// Goal by containment in some goal box; unsafe by interior overlap with an
/// avoid box, or the sink when `avoid_complement`.
pub fn label_locations(
    partition: &Partition,
    goal_boxes: &[HyperRectangle],
    avoid_boxes: &[HyperRectangle],
    avoid_complement: bool,
) -> Result<LabelSets> {
    for b in goal_boxes.iter().chain(avoid_boxes) {
        check_dim("property box", partition.dim(), b.dim())?;
    }
    let mut labels = Vec::with_capacity(partition.num_locations());
    for s in 0..partition.num_regions() {
        let r = partition.region(s);
        let goal = goal_boxes.iter().any(|g| r.is_subset_of(g));
        let unsafe_ = avoid_boxes.iter().any(|u| r.interiors_overlap(u));
        labels.push(match (goal, unsafe_) {
            (true, true) => return Err(Error::LabelOverlap(s)),
            (true, false) => Label::Goal,
            (false, true) => Label::Unsafe,
            (false, false) => Label::Neutral,
        });
    }
    labels.push(if avoid_complement {
        Label::Unsafe
    } else {
        Label::Neutral
    });
    Ok(LabelSets { labels })
}
