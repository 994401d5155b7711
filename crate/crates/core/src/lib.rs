//! Cooperative grid-world signaling game.
//!
//! A signaler who knows the target either walks to it or sends one feature
//! token to a receiver who then walks to an item. This crate holds the
//! environment, the pragmatic and joint-utility signaler models, the
//! condition-constrained trial generator, and the batch simulation and
//! analysis tools.

pub mod gridworld;
pub mod joint_utility;
pub mod pragmatics;
pub mod sim_lab;
pub mod trial_factory;
