//! Experiment configuration.
//!
//! A TOML document with one table per subsystem. Every key is optional and
//! unknown keys are rejected; an empty document is the standard 100 m × 100 m
//! scenario with 20 objects, a PA at 2 m/s and two SE escorts at 4 m/s.
//!
//! ```toml
//! [scenario]
//! n_escorts = 2
//! variant = "se"
//!
//! [cem]
//! n_samples = 64
//! n_elite = 8
//! ```

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::belief::SensorParams;
use crate::coordinator::{CommsConfig, ExecutionMode, PlanningConfig};
use crate::deccem::CemConfig;
use crate::dynamics::AgentParams;
use crate::rewards::{RewardSettings, RewardVariant};
use crate::task::{ReachAvoidTask, ReachMode};
use crate::{Error, Point, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    /// Environment extent `[width, height]`, m. The origin is a corner.
    pub env_size: [f64; 2],
    pub n_objects: usize,
    pub spawn_min: [f64; 2],
    pub spawn_max: [f64; 2],
    /// Common start position of every robot.
    pub start: [f64; 2],
    pub start_heading: f64,
    pub goal: [f64; 2],
    /// Prior variance of every object belief and of the mean corruption, m².
    pub prior_variance: f64,
    pub pa_speed: f64,
    pub ea_speed: f64,
    pub n_escorts: usize,
    pub variant: RewardVariant,
    pub seed: u64,
    pub max_ticks: usize,
    /// PA-to-object distance counted as a collision, m.
    pub collision_radius: f64,
    /// PA-to-goal distance counted as arrival, m.
    pub arrival_radius: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            env_size: [100.0, 100.0],
            n_objects: 20,
            spawn_min: [20.0, 20.0],
            spawn_max: [80.0, 80.0],
            start: [10.0, 50.0],
            start_heading: 0.0,
            goal: [90.0, 50.0],
            prior_variance: 25.0,
            pa_speed: 2.0,
            ea_speed: 4.0,
            n_escorts: 2,
            variant: RewardVariant::Se,
            seed: 0,
            max_ticks: 120,
            collision_radius: 2.0,
            arrival_radius: 5.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DynamicsConfig {
    pub dt: f64,
    pub horizon: usize,
    pub u_max: f64,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        Self {
            dt: 1.0,
            horizon: 10,
            u_max: FRAC_PI_2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensorConfig {
    pub range: f64,
    pub noise_var: f64,
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self {
            range: 10.0,
            noise_var: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TaskConfig {
    pub peak_collision: f64,
    /// `r_O` of the avoid factor, m.
    pub collision_radius: f64,
    /// `r_D` of the reach factor, m.
    pub reach_radius: f64,
    pub reach_mode: ReachMode,
}

impl Default for TaskConfig {
    fn default() -> Self {
        Self {
            peak_collision: 0.9,
            collision_radius: 4.0,
            reach_radius: 10.0,
            reach_mode: ReachMode::EveryStep,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlannerConfig {
    pub outer_rounds: usize,
    pub execution: ExecutionMode,
    pub n_traj: usize,
    pub n_mc: usize,
    pub log_floor: f64,
    pub redraw_pa_samples: bool,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        let r = RewardSettings::default();
        Self {
            outer_rounds: 3,
            execution: ExecutionMode::Mean,
            n_traj: r.n_traj,
            n_mc: r.n_mc,
            log_floor: r.log_floor,
            redraw_pa_samples: r.redraw_pa_samples,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BatchConfig {
    pub envs: usize,
    pub variants: Vec<RewardVariant>,
    pub escorts: Vec<usize>,
    pub workers: usize,
}

impl Default for BatchConfig {
    fn default() -> Self {
        Self {
            envs: 10,
            variants: RewardVariant::ALL.to_vec(),
            escorts: vec![1, 2, 3],
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub scenario: ScenarioConfig,
    pub dynamics: DynamicsConfig,
    pub sensor: SensorConfig,
    pub task: TaskConfig,
    pub cem: CemConfig,
    pub planner: PlannerConfig,
    pub comms: CommsConfig,
    pub batch: BatchConfig,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<Config> {
    let cfg: Config = toml::from_str(text).map_err(|e| Error::ConfigParse {
        line: e.span().map_or(1, |s| line_of(text, s.start)),
        message: e.message().to_string(),
    })?;
    cfg.validate()?;
    Ok(cfg)
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::config(field, format!("must be finite and > 0 (got {v})")))
    }
}

fn finite2(field: &str, p: [f64; 2]) -> Result<()> {
    if p.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::config(field, "coordinates must be finite"))
    }
}

impl Config {
    pub fn validate(&self) -> Result<()> {
        let s = &self.scenario;
        positive("scenario.env_size[0]", s.env_size[0])?;
        positive("scenario.env_size[1]", s.env_size[1])?;
        for (name, p) in [
            ("scenario.spawn_min", s.spawn_min),
            ("scenario.spawn_max", s.spawn_max),
            ("scenario.start", s.start),
            ("scenario.goal", s.goal),
        ] {
            finite2(name, p)?;
        }
        for axis in 0..2 {
            if !(0.0 <= s.spawn_min[axis] && s.spawn_min[axis] <= s.spawn_max[axis] && s.spawn_max[axis] <= s.env_size[axis]) {
                return Err(Error::config(
                    "scenario.spawn_min/spawn_max",
                    "spawn box must lie inside scenario.env_size with min <= max",
                ));
            }
        }
        positive("scenario.prior_variance", s.prior_variance)?;
        positive("scenario.pa_speed", s.pa_speed)?;
        positive("scenario.ea_speed", s.ea_speed)?;
        positive("scenario.collision_radius", s.collision_radius)?;
        positive("scenario.arrival_radius", s.arrival_radius)?;
        if !s.start_heading.is_finite() {
            return Err(Error::config("scenario.start_heading", "must be finite"));
        }
        if s.variant.uses_escorts() == (s.n_escorts == 0) {
            return Err(Error::config(
                "scenario.n_escorts",
                format!(
                    "must be 0 exactly when scenario.variant is blind (variant = {}, n_escorts = {})",
                    s.variant, s.n_escorts
                ),
            ));
        }
        if s.max_ticks == 0 {
            return Err(Error::config("scenario.max_ticks", "must be >= 1"));
        }

        positive("dynamics.dt", self.dynamics.dt)?;
        positive("dynamics.u_max", self.dynamics.u_max)?;
        if self.dynamics.horizon == 0 {
            return Err(Error::config("dynamics.horizon", "must be >= 1"));
        }
        positive("sensor.range", self.sensor.range)?;
        positive("sensor.noise_var", self.sensor.noise_var)?;
        positive("task.collision_radius", self.task.collision_radius)?;
        positive("task.reach_radius", self.task.reach_radius)?;
        if !(self.task.peak_collision > 0.0 && self.task.peak_collision <= 1.0) {
            return Err(Error::config("task.peak_collision", "must be in (0, 1]"));
        }
        self.cem.validate()?;
        self.reward_settings().validate()?;
        self.comms.validate()?;

        let b = &self.batch;
        if b.envs == 0 {
            return Err(Error::config("batch.envs", "must be >= 1"));
        }
        if b.variants.is_empty() {
            return Err(Error::config("batch.variants", "must name at least one variant"));
        }
        if b.variants.iter().any(|v| v.uses_escorts()) && (b.escorts.is_empty() || b.escorts.contains(&0)) {
            return Err(Error::config("batch.escorts", "escort variants need escort counts >= 1"));
        }
        if b.workers == 0 {
            return Err(Error::config("batch.workers", "must be >= 1"));
        }
        Ok(())
    }

    pub fn reward_settings(&self) -> RewardSettings {
        RewardSettings {
            n_traj: self.planner.n_traj,
            n_mc: self.planner.n_mc,
            log_floor: self.planner.log_floor,
            redraw_pa_samples: self.planner.redraw_pa_samples,
        }
    }

    pub fn planning(&self) -> PlanningConfig {
        PlanningConfig {
            horizon: self.dynamics.horizon,
            outer_rounds: self.planner.outer_rounds,
            execution: self.planner.execution,
            cem: self.cem,
            rewards: self.reward_settings(),
        }
    }

    pub fn task(&self) -> ReachAvoidTask {
        ReachAvoidTask {
            goal: Point::new(self.scenario.goal[0], self.scenario.goal[1]),
            reach_radius: self.task.reach_radius,
            collision_radius: self.task.collision_radius,
            peak_collision: self.task.peak_collision,
            reach_mode: self.task.reach_mode,
        }
    }

    pub fn sensor(&self) -> SensorParams {
        SensorParams {
            range: self.sensor.range,
            noise_var: self.sensor.noise_var,
        }
    }

    pub fn pa_params(&self) -> AgentParams {
        AgentParams {
            v: self.scenario.pa_speed,
            u_max: self.dynamics.u_max,
            dt: self.dynamics.dt,
        }
    }

    pub fn ea_params(&self) -> AgentParams {
        AgentParams {
            v: self.scenario.ea_speed,
            u_max: self.dynamics.u_max,
            dt: self.dynamics.dt,
        }
    }

    /// Sets the variant and, when it changes between blind and escorted,
    /// a matching escort count (0, or 2 by default).
    pub fn set_variant(&mut self, variant: RewardVariant) {
        self.scenario.variant = variant;
        if !variant.uses_escorts() {
            self.scenario.n_escorts = 0;
        } else if self.scenario.n_escorts == 0 {
            self.scenario.n_escorts = ScenarioConfig::default().n_escorts;
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }
}
