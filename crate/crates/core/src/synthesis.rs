//! Piecewise-affine refinement of iMDP policies and closed-loop Monte Carlo.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::abstraction::{Layer, LocationId, Partition};
use crate::dynamics::LinearSystem;
use crate::error::{check_dim, Error, Result};
use crate::geometry::{HalfspacePolytope, HyperRectangle};
use crate::imdp::Policy;
use crate::noise::NoiseRng;
use crate::scenario::{binomial_lower, binomial_upper};

/// Confidence per side of the Monte Carlo rate interval (99% two-sided).
pub const RATE_BETA_SIDE: f64 = 0.005;

#[derive(Debug, Clone)]
enum Mode {
    SingleLayer {
        a: DMatrix<f64>,
    },
    TwoLayer {
        gain: DMatrix<f64>,
        closed_loop: DMatrix<f64>,
        abstract_input_set: HalfspacePolytope,
    },
}

/// `u = B^-1 (d_a - A x)`, or in two-layer mode `u' = B^-1 (d_a - A_cl x)`
/// and `u = -K x + u'`, with `a = policy(locate(x), k)`.
#[derive(Debug, Clone)]
pub struct RefinedController {
    policy: Policy,
    partition: Partition,
    targets: Vec<DVector<f64>>,
    b_inv: DMatrix<f64>,
    input_set: HalfspacePolytope,
    mode: Mode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlInput {
    pub total: DVector<f64>,
    /// The abstraction's share `u'` in two-layer mode.
    pub abstract_part: Option<DVector<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Refinement {
    Input(ControlInput),
    /// Sink, or no policy entry at this location and step.
    NoAction,
}

impl RefinedController {
    pub fn new(
        layer: Layer<'_>,
        partition: Partition,
        targets: Vec<DVector<f64>>,
        policy: Policy,
    ) -> Result<Self> {
        let sys = layer.system();
        check_dim("partition vs state", sys.state_dim(), partition.dim())?;
        for t in &targets {
            check_dim("target point", sys.state_dim(), t.len())?;
        }
        let mode = match layer {
            Layer::Single(sys) => Mode::SingleLayer { a: sys.a().clone() },
            Layer::TwoLayer(ssys) => Mode::TwoLayer {
                gain: ssys.gain().clone(),
                closed_loop: ssys.closed_loop().clone(),
                abstract_input_set: ssys.abstract_input_set().clone(),
            },
        };
        Ok(Self {
            policy,
            partition,
            targets,
            b_inv: sys.b_inverse()?,
            input_set: sys.input_set().clone(),
            mode,
        })
    }

    pub fn policy(&self) -> &Policy {
        &self.policy
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn horizon(&self) -> usize {
        self.policy.horizon()
    }

    pub fn is_two_layer(&self) -> bool {
        matches!(self.mode, Mode::TwoLayer { .. })
    }

    pub fn refine_control(&self, x: &DVector<f64>, k: usize) -> Result<Refinement> {
        check_dim("state", self.partition.dim(), x.len())?;
        if k >= self.horizon() {
            return Err(Error::InvalidArgument(format!(
                "step {k} beyond horizon {}",
                self.horizon()
            )));
        }
        let s: LocationId = self.partition.locate(x.as_slice());
        if s == self.partition.sink() {
            return Ok(Refinement::NoAction);
        }
        let Some(a) = self.policy.get(s, k) else {
            return Ok(Refinement::NoAction);
        };
        let target = self.targets.get(a).ok_or_else(|| {
            Error::InvalidArgument(format!("policy selects unknown action {a}"))
        })?;
        let input = match &self.mode {
            Mode::SingleLayer { a: sys_a } => ControlInput {
                total: &self.b_inv * (target - sys_a * x),
                abstract_part: None,
            },
            Mode::TwoLayer {
                gain, closed_loop, ..
            } => {
                let u_abs = &self.b_inv * (target - closed_loop * x);
                ControlInput {
                    total: -(gain * x) + &u_abs,
                    abstract_part: Some(u_abs),
                }
            }
        };
        let bad = |what: &str, u: &DVector<f64>| Error::Admissibility {
            location: s,
            step: k,
            detail: format!("{what} {:?} for action {a} at x = {:?}", u.as_slice(), x.as_slice()),
        };
        if !self.input_set.contains_unchecked(input.total.as_slice()) {
            return Err(bad("input outside U:", &input.total));
        }
        if let (Mode::TwoLayer { abstract_input_set, .. }, Some(u_abs)) =
            (&self.mode, &input.abstract_part)
        {
            if !abstract_input_set.contains_unchecked(u_abs.as_slice()) {
                return Err(bad("abstract input outside U':", u_abs));
            }
        }
        Ok(Refinement::Input(input))
    }
}

/// Continuous reach-avoid property.
#[derive(Debug, Clone)]
pub struct ReachAvoid {
    pub goal: Vec<HyperRectangle>,
    pub avoid: Vec<HyperRectangle>,
    /// States outside this box are unsafe.
    pub safe_domain: Option<HyperRectangle>,
    pub horizon: usize,
}

impl ReachAvoid {
    pub fn in_goal(&self, x: &[f64]) -> bool {
        self.goal.iter().any(|g| g.contains(x))
    }

    pub fn in_unsafe(&self, x: &[f64]) -> bool {
        self.avoid.iter().any(|u| u.contains(x))
            || self.safe_domain.as_ref().is_some_and(|d| !d.contains(x))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Outcome {
    Satisfied,
    UnsafeHit,
    Timeout,
    NoEnabledAction,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Satisfied => "satisfied",
            Outcome::UnsafeHit => "unsafe-hit",
            Outcome::Timeout => "timeout",
            Outcome::NoEnabledAction => "no-enabled-action",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub states: Vec<DVector<f64>>,
    pub inputs: Vec<ControlInput>,
    pub outcome: Outcome,
    pub first_goal_step: Option<usize>,
}

/// Rolls out `x+ = A x + B u + eta` under the refined controller.
///
/// Each visited state is checked for the goal first, then for the unsafe
/// set, before an input is computed.
pub fn simulate(
    sys: &LinearSystem,
    ctrl: &RefinedController,
    x0: &DVector<f64>,
    property: &ReachAvoid,
    seed: u64,
) -> Result<TrajectoryRecord> {
    check_dim("initial state", sys.state_dim(), x0.len())?;
    let mut rng = NoiseRng::new(seed);
    let mut states = vec![x0.clone()];
    let mut inputs = Vec::new();
    let horizon = property.horizon.min(ctrl.horizon());
    let mut k = 0;
    let outcome = loop {
        let x = &states[k];
        if property.in_goal(x.as_slice()) {
            break Outcome::Satisfied;
        }
        if property.in_unsafe(x.as_slice()) {
            break Outcome::UnsafeHit;
        }
        if k == horizon {
            break Outcome::Timeout;
        }
        let input = match ctrl.refine_control(x, k)? {
            Refinement::Input(u) => u,
            Refinement::NoAction => break Outcome::NoEnabledAction,
        };
        let eta = sys.noise().draw(&mut rng);
        let next = sys.step(x, &input.total, &eta);
        inputs.push(input);
        states.push(next);
        k += 1;
    };
    Ok(TrajectoryRecord {
        first_goal_step: (outcome == Outcome::Satisfied).then_some(k),
        states,
        inputs,
        outcome,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloReport {
    pub runs: usize,
    pub success_count: usize,
    pub empirical_rate: f64,
    /// Two-sided 99% binomial interval on the satisfaction rate.
    pub rate_interval: (f64, f64),
    pub imdp_lower_bound: Option<f64>,
    /// `(sub-seed, outcome, first goal step)` per run.
    pub runs_detail: Vec<(u64, Outcome, Option<usize>)>,
}

/// `runs` independent rollouts with sub-seeds `seed + i`.
pub fn monte_carlo(
    sys: &LinearSystem,
    ctrl: &RefinedController,
    x0: &DVector<f64>,
    property: &ReachAvoid,
    runs: usize,
    seed: u64,
    imdp_lower_bound: Option<f64>,
) -> Result<MonteCarloReport> {
    if runs == 0 {
        return Err(Error::InvalidArgument("Monte Carlo needs at least one run".into()));
    }
    let runs_detail = (0..runs as u64)
        .into_par_iter()
        .map(|i| {
            let sub = seed.wrapping_add(i);
            let rec = simulate(sys, ctrl, x0, property, sub)?;
            Ok((sub, rec.outcome, rec.first_goal_step))
        })
        .collect::<Result<Vec<_>>>()?;
    let success_count = runs_detail
        .iter()
        .filter(|(_, o, _)| *o == Outcome::Satisfied)
        .count();
    Ok(MonteCarloReport {
        runs,
        success_count,
        empirical_rate: success_count as f64 / runs as f64,
        rate_interval: (
            binomial_lower(runs, success_count, RATE_BETA_SIDE)?,
            binomial_upper(runs, success_count, RATE_BETA_SIDE)?,
        ),
        imdp_lower_bound,
        runs_detail,
    })
}
