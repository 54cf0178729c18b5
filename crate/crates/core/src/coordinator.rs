//! Receding-horizon planning per robot and the distribution exchange
//! between robots.
//!
//! Every tick a robot folds the shared measurements into its belief, resets
//! its control distribution to the prior, then runs a fixed number of
//! communication rounds: read the latest peer distributions from its
//! mailbox, run [`dec_cem`], broadcast the result. It executes the first
//! control of the final distribution.
//!
//! Mailboxes keep only the newest message per peer, and a robot never waits
//! for one: a peer it has not heard from is planned against the prior
//! `N(0, σ0² I)`. Robot poses are assumed to be shared losslessly alongside
//! measurements; only distribution messages can be delayed or lost.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::belief::{Measurement, ObjectBelief, SensorParams};
use crate::deccem::{dec_cem, CemConfig, ControlDistribution};
use crate::dynamics::{AgentParams, RobotState};
use crate::rewards::{EscortReward, Objective, PeerInfo, PrincipalReward, RewardContext, RewardSettings, RewardVariant};
use crate::rng::{derive_seed, seeded, stream, SimRng};
use crate::task::ReachAvoidTask;
use crate::{Error, Result};

pub type RobotId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Principal,
    Escort,
}

/// Whether the executed control is the distribution mean or a sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExecutionMode {
    #[default]
    Mean,
    Sample,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanningConfig {
    pub horizon: usize,
    pub outer_rounds: usize,
    pub execution: ExecutionMode,
    pub cem: CemConfig,
    pub rewards: RewardSettings,
}

impl Default for PlanningConfig {
    fn default() -> Self {
        Self {
            horizon: 10,
            outer_rounds: 3,
            execution: ExecutionMode::Mean,
            cem: CemConfig::default(),
            rewards: RewardSettings::default(),
        }
    }
}

// ---------------------------------------------------------------------------
// Messages and mailboxes
// ---------------------------------------------------------------------------

/// A broadcast control distribution. On the wire: sender, epoch, tick,
/// timestamp, mean[], var[].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionMessage {
    pub sender: RobotId,
    /// Strictly increasing per sender across the whole episode.
    pub epoch: u64,
    /// Planning tick the distribution's horizon starts at.
    pub tick: u64,
    /// Simulated time of sending, s.
    pub timestamp: f64,
    #[serde(flatten)]
    pub dist: ControlDistribution,
}

/// Latest message per peer.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Mailbox {
    latest: BTreeMap<RobotId, DistributionMessage>,
}

impl Mailbox {
    /// Stores `msg` unless an equal or newer epoch from the same sender is
    /// already held. Returns whether it was stored.
    pub fn deliver(&mut self, msg: DistributionMessage) -> bool {
        match self.latest.get(&msg.sender) {
            Some(held) if held.epoch >= msg.epoch => false,
            _ => {
                self.latest.insert(msg.sender, msg);
                true
            }
        }
    }

    pub fn latest(&self, sender: RobotId) -> Option<&DistributionMessage> {
        self.latest.get(&sender)
    }

    pub fn len(&self) -> usize {
        self.latest.len()
    }

    pub fn is_empty(&self) -> bool {
        self.latest.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &DistributionMessage> {
        self.latest.values()
    }
}

/// Delivers every message to every other robot's mailbox, each copy lost
/// independently with probability `drop_probability`.
pub fn exchange<R: Rng + ?Sized>(
    mailboxes: &mut BTreeMap<RobotId, Mailbox>,
    messages: &[DistributionMessage],
    drop_probability: f64,
    rng: &mut R,
) -> Result<()> {
    if !(0.0..=1.0).contains(&drop_probability) {
        return Err(Error::invalid(format!("drop probability {drop_probability} outside [0, 1]")));
    }
    for msg in messages {
        for (&id, mailbox) in mailboxes.iter_mut() {
            if id == msg.sender {
                continue;
            }
            if rng.random::<f64>() < drop_probability {
                continue;
            }
            mailbox.deliver(msg.clone());
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Per-robot planner
// ---------------------------------------------------------------------------

/// What every robot knows about every other robot this tick.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RosterEntry {
    pub role: Role,
    pub state: RobotState,
    pub params: AgentParams,
}

pub type Roster = BTreeMap<RobotId, RosterEntry>;

#[derive(Debug, Clone)]
pub struct PlannerState {
    pub id: RobotId,
    pub role: Role,
    pub state: RobotState,
    pub params: AgentParams,
    pub dist: ControlDistribution,
    pub belief: ObjectBelief,
    /// Escort reward in use; ignored by the PA.
    pub variant: RewardVariant,
    pub task: ReachAvoidTask,
    pub sensor: SensorParams,
    pub tick: u64,
    /// Best candidate reward from the most recent optimiser iteration.
    pub last_reward: f64,
}

/// Result of one planning tick for one robot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanOutcome {
    pub control: f64,
    pub reward: f64,
}

impl PlannerState {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        id: RobotId,
        role: Role,
        state: RobotState,
        params: AgentParams,
        belief: ObjectBelief,
        variant: RewardVariant,
        task: ReachAvoidTask,
        sensor: SensorParams,
        cfg: &PlanningConfig,
    ) -> Result<Self> {
        if role == Role::Escort && !variant.uses_escorts() {
            return Err(Error::invalid("escort agents need an escort reward variant"));
        }
        Ok(Self {
            id,
            role,
            state,
            params,
            dist: ControlDistribution::prior(cfg.horizon, cfg.cem.sigma0_sq),
            belief,
            variant,
            task,
            sensor,
            tick: 0,
            last_reward: f64::NAN,
        })
    }

    pub fn roster_entry(&self) -> RosterEntry {
        RosterEntry {
            role: self.role,
            state: self.state,
            params: self.params,
        }
    }

    fn objective(&self) -> Box<dyn Objective> {
        match self.role {
            Role::Principal => Box::new(PrincipalReward),
            Role::Escort => Box::new(
                EscortReward::for_variant(self.variant).expect("escort variant checked at construction"),
            ),
        }
    }

    /// Belief update with this tick's measurements and reset to the prior.
    pub fn begin_tick(&mut self, measurements: &[Measurement], tick: u64, cfg: &PlanningConfig) -> Result<()> {
        self.belief = self.belief.update(measurements, &self.sensor)?;
        self.dist = ControlDistribution::prior(cfg.horizon, cfg.cem.sigma0_sq);
        self.tick = tick;
        Ok(())
    }

    /// Peer distribution as seen from this tick: the latest received plan
    /// shifted to the current horizon, or the prior when nothing arrived.
    fn peer_distribution(&self, mailbox: &Mailbox, peer: RobotId, cfg: &PlanningConfig) -> ControlDistribution {
        match mailbox.latest(peer) {
            Some(msg) if msg.dist.horizon() == cfg.horizon => {
                let age = self.tick.saturating_sub(msg.tick) as usize;
                msg.dist.shifted(age, cfg.cem.sigma0_sq)
            }
            _ => ControlDistribution::prior(cfg.horizon, cfg.cem.sigma0_sq),
        }
    }

    pub fn context(&self, mailbox: &Mailbox, roster: &Roster, cfg: &PlanningConfig) -> RewardContext {
        let peers = roster
            .iter()
            .filter(|(&id, _)| id != self.id)
            .map(|(&id, entry)| {
                (
                    id,
                    PeerInfo {
                        role: entry.role,
                        state: entry.state,
                        params: entry.params,
                        dist: self.peer_distribution(mailbox, id, cfg),
                    },
                )
            })
            .collect();
        RewardContext {
            belief: self.belief.clone(),
            task: self.task,
            sensor: self.sensor,
            own_state: self.state,
            own_params: self.params,
            peers,
            settings: cfg.rewards,
        }
    }

    /// One communication round: receive, optimise, and return the message
    /// to broadcast.
    pub fn plan_round(
        &mut self,
        mailbox: &Mailbox,
        roster: &Roster,
        cfg: &PlanningConfig,
        round: usize,
        rng: &mut SimRng,
    ) -> Result<DistributionMessage> {
        let ctx = self.context(mailbox, roster, cfg);
        let objective = self.objective();
        let outcome = dec_cem(&self.dist, objective.as_ref(), &ctx, &cfg.cem, rng)?;
        if let Some(&r) = outcome.best_rewards.last() {
            self.last_reward = r;
        }
        self.dist = outcome.dist;
        Ok(DistributionMessage {
            sender: self.id,
            epoch: self.tick * cfg.outer_rounds as u64 + round as u64,
            tick: self.tick,
            timestamp: self.tick as f64 * self.params.dt,
            dist: self.dist.clone(),
        })
    }

    /// Picks the control to execute and shifts the plan by one step.
    pub fn finish_tick(&mut self, cfg: &PlanningConfig, rng: &mut SimRng) -> PlanOutcome {
        let raw = match cfg.execution {
            ExecutionMode::Mean => self.dist.mean.first().copied().unwrap_or(0.0),
            ExecutionMode::Sample => self.dist.sample(self.params.u_max, rng).0.first().copied().unwrap_or(0.0),
        };
        self.dist = self.dist.shifted(1, cfg.cem.sigma0_sq);
        PlanOutcome {
            control: self.params.clamp(raw),
            reward: self.last_reward,
        }
    }
}

/// Message transport seen by a single planner.
pub trait Comms {
    /// Snapshot of the latest messages available to `robot`.
    fn receive(&mut self, robot: RobotId) -> Mailbox;
    fn broadcast(&mut self, msg: DistributionMessage);
}

/// Transport on which nothing ever arrives.
#[derive(Debug, Default)]
pub struct Disconnected;

impl Comms for Disconnected {
    fn receive(&mut self, _robot: RobotId) -> Mailbox {
        Mailbox::default()
    }

    fn broadcast(&mut self, _msg: DistributionMessage) {}
}

/// One full planning tick for a single robot.
pub fn plan_step(
    planner: &mut PlannerState,
    measurements: &[Measurement],
    tick: u64,
    roster: &Roster,
    comms: &mut dyn Comms,
    cfg: &PlanningConfig,
    rng: &mut SimRng,
) -> Result<PlanOutcome> {
    planner.begin_tick(measurements, tick, cfg)?;
    for round in 0..cfg.outer_rounds {
        let mailbox = comms.receive(planner.id);
        let msg = planner.plan_round(&mailbox, roster, cfg, round, rng)?;
        comms.broadcast(msg);
    }
    Ok(planner.finish_tick(cfg, rng))
}

// ---------------------------------------------------------------------------
// Team schedulers
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchedulerMode {
    /// All robots plan a round, then all messages are exchanged.
    #[default]
    Synchronous,
    /// Messages travel with random latency measured in rounds.
    EventDriven,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CommsConfig {
    pub drop_probability: f64,
    pub scheduler: SchedulerMode,
    /// Upper bound on extra delivery delay in the event-driven scheduler.
    pub max_latency_rounds: u32,
}

impl Default for CommsConfig {
    fn default() -> Self {
        Self {
            drop_probability: 0.0,
            scheduler: SchedulerMode::Synchronous,
            max_latency_rounds: 2,
        }
    }
}

impl CommsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.drop_probability) {
            return Err(Error::config("comms.drop_probability", "must be in [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MessageEventKind {
    Sent,
    Delivered,
    Stale,
    Dropped,
}

/// One entry of the message trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MessageEvent {
    pub round: u64,
    pub kind: MessageEventKind,
    pub recipient: Option<RobotId>,
    #[serde(flatten)]
    pub message: DistributionMessage,
}

#[derive(Debug, Clone)]
struct InFlight {
    deliver_round: u64,
    recipient: RobotId,
    msg: DistributionMessage,
}

/// All planners of one episode plus their message fabric.
#[derive(Debug, Clone)]
pub struct Team {
    planners: Vec<PlannerState>,
    mailboxes: BTreeMap<RobotId, Mailbox>,
    in_flight: Vec<InFlight>,
    round: u64,
    comms: CommsConfig,
    seed: u64,
    trace: Option<Vec<MessageEvent>>,
}

impl Team {
    pub fn new(planners: Vec<PlannerState>, comms: CommsConfig, seed: u64) -> Result<Self> {
        comms.validate()?;
        let mut ids: Vec<RobotId> = planners.iter().map(|p| p.id).collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != planners.len() {
            return Err(Error::invalid("robot ids must be unique"));
        }
        let mailboxes = ids.iter().map(|&id| (id, Mailbox::default())).collect();
        Ok(Self {
            planners,
            mailboxes,
            in_flight: Vec::new(),
            round: 0,
            comms,
            seed,
            trace: None,
        })
    }

    /// Start recording every send, delivery and drop.
    pub fn record_trace(&mut self) {
        self.trace.get_or_insert_with(Vec::new);
    }

    pub fn take_trace(&mut self) -> Vec<MessageEvent> {
        self.trace.as_mut().map(std::mem::take).unwrap_or_default()
    }

    pub fn planners(&self) -> &[PlannerState] {
        &self.planners
    }

    pub fn planners_mut(&mut self) -> &mut [PlannerState] {
        &mut self.planners
    }

    pub fn mailbox(&self, id: RobotId) -> Option<&Mailbox> {
        self.mailboxes.get(&id)
    }

    pub fn roster(&self) -> Roster {
        self.planners.iter().map(|p| (p.id, p.roster_entry())).collect()
    }

    fn log(&mut self, kind: MessageEventKind, recipient: Option<RobotId>, msg: &DistributionMessage) {
        if let Some(trace) = self.trace.as_mut() {
            trace.push(MessageEvent {
                round: self.round,
                kind,
                recipient,
                message: msg.clone(),
            });
        }
    }

    fn deliver_due(&mut self) {
        let now = self.round;
        let (due, pending): (Vec<InFlight>, Vec<InFlight>) =
            std::mem::take(&mut self.in_flight).into_iter().partition(|f| f.deliver_round <= now);
        self.in_flight = pending;
        for f in due {
            let stored = self
                .mailboxes
                .get_mut(&f.recipient)
                .map(|mb| mb.deliver(f.msg.clone()))
                .unwrap_or(false);
            let kind = if stored {
                MessageEventKind::Delivered
            } else {
                MessageEventKind::Stale
            };
            self.log(kind, Some(f.recipient), &f.msg);
        }
    }

    fn dispatch(&mut self, messages: Vec<DistributionMessage>, tick: u64, round: usize) {
        let mut rng = seeded(derive_seed(self.seed, &[stream::COMMS, tick, round as u64]));
        let ids: Vec<RobotId> = self.mailboxes.keys().copied().collect();
        for msg in &messages {
            self.log(MessageEventKind::Sent, None, msg);
        }
        match self.comms.scheduler {
            SchedulerMode::Synchronous => {
                for msg in &messages {
                    for &id in &ids {
                        if id == msg.sender {
                            continue;
                        }
                        if rng.random::<f64>() < self.comms.drop_probability {
                            self.log(MessageEventKind::Dropped, Some(id), msg);
                            continue;
                        }
                        let stored = self.mailboxes.get_mut(&id).is_some_and(|mb| mb.deliver(msg.clone()));
                        let kind = if stored {
                            MessageEventKind::Delivered
                        } else {
                            MessageEventKind::Stale
                        };
                        self.log(kind, Some(id), msg);
                    }
                }
            }
            SchedulerMode::EventDriven => {
                for msg in &messages {
                    for &id in &ids {
                        if id == msg.sender {
                            continue;
                        }
                        if rng.random::<f64>() < self.comms.drop_probability {
                            self.log(MessageEventKind::Dropped, Some(id), msg);
                            continue;
                        }
                        let latency = rng.random_range(0..=self.comms.max_latency_rounds) as u64;
                        self.in_flight.push(InFlight {
                            deliver_round: self.round + 1 + latency,
                            recipient: id,
                            msg: msg.clone(),
                        });
                    }
                }
            }
        }
    }

    /// Runs one planning tick for every robot and returns each robot's
    /// executed control, in planner order.
    pub fn plan_tick(
        &mut self,
        measurements: &[Measurement],
        tick: u64,
        cfg: &PlanningConfig,
    ) -> Result<Vec<PlanOutcome>> {
        let roster = self.roster();
        for p in &mut self.planners {
            p.begin_tick(measurements, tick, cfg)?;
        }
        for round in 0..cfg.outer_rounds {
            if self.comms.scheduler == SchedulerMode::EventDriven {
                self.deliver_due();
            }
            let mut outgoing = Vec::with_capacity(self.planners.len());
            for p in &mut self.planners {
                let mut rng = seeded(derive_seed(self.seed, &[stream::PLANNING, tick, p.id as u64, round as u64]));
                let mailbox = self.mailboxes.get(&p.id).cloned().unwrap_or_default();
                outgoing.push(p.plan_round(&mailbox, &roster, cfg, round, &mut rng)?);
            }
            self.dispatch(outgoing, tick, round);
            self.round += 1;
        }
        Ok(self
            .planners
            .iter_mut()
            .map(|p| {
                let mut rng = seeded(derive_seed(self.seed, &[stream::EXECUTION, tick, p.id as u64]));
                p.finish_tick(cfg, &mut rng)
            })
            .collect())
    }
}
