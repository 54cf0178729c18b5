//! Decentralised cross-entropy planning for the coordinated escort problem.
//!
//! A sensorless principal agent (PA) must reach a goal while avoiding objects
//! whose locations are only known through a Gaussian belief. Escort agents
//! (EAs) carry range-limited sensors and plan their paths so that the
//! measurements they collect improve the PA's chance of completing its
//! reach-avoid task. Every robot optimises its own factor of a product
//! control distribution with a cross-entropy loop, exchanging distributions
//! with its peers through loss-tolerant mailboxes.
//!
//! Module map:
//!
//! * [`dynamics`]: unicycle/bicycle kinematics and trajectory rollout.
//! * [`belief`]: information-form Kalman filtering of object locations.
//! * [`task`]: reach-avoid satisfaction probabilities.
//! * [`rewards`]: PA reward and the SI / SE / MI-UCB escort rewards.
//! * [`deccem`]: one robot's cross-entropy distribution update.
//! * [`coordinator`]: receding-horizon loop, mailboxes and schedulers.
//! * [`simulator`]: scenarios, episodes, adjudication and batch runs.
//! * [`config`]: the sectioned configuration file.

pub mod belief;
pub mod config;
pub mod coordinator;
pub mod deccem;
pub mod dynamics;
pub mod error;
pub mod rewards;
pub mod rng;
pub mod simulator;
pub mod task;

pub use error::{Error, Result};

/// 2-D position in metres.
pub type Point = nalgebra::Vector2<f64>;
