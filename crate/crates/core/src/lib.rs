//! Controller synthesis for stochastic linear systems through interval MDP
//! abstractions.
//!
//! The pipeline partitions a bounded state region, associates one action
//! with each region center, computes which actions every region enables
//! from backward reachable sets, turns noise samples into PAC transition
//! intervals, and solves the resulting interval MDP with robust value
//! iteration. The optimal policy refines into a piecewise-affine feedback
//! controller whose closed-loop reach-avoid probability is lower-bounded by
//! the iMDP value.
//!
//! With a stabilizing gain `K` the input splits as `u = -K x + u'` and the
//! abstraction only sees `u'`, restricted to a smaller set `U'`. This
//! shrinks the backward sets and with them the number of iMDP transitions.
//!
//! Modules, bottom-up: [`geometry`], [`dynamics`], [`noise`],
//! [`abstraction`], [`scenario`], [`imdp`], [`synthesis`], and the
//! configuration/pipeline layer in [`app`].

pub mod abstraction;
pub mod app;
pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod imdp;
pub mod noise;
pub mod scenario;
pub mod synthesis;

pub use error::{Error, Result};
