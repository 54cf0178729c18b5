//! Team rewards for the principal and escort agents.
//!
//! * PA: `ln E_{O~B}[P(φ | X^A, O)]`, the log marginal satisfaction.
//! * SI: `E_{X^A~Q}[P(φ | X^A, Y) − P(φ | X^A)]`.
//! * SE: `E_{X^A~Q}[h(P(φ | X^A)) − h(P(φ | X^A, Y))]`, `h` the binary entropy.
//! * MI-UCB: `½ (log det Λ_{t+T} − log det Λ_t)`.
//!
//! The posterior terms use the predicted belief: information propagated
//! along the escorts' planned paths, means unchanged. Prior and posterior
//! terms share the same PA trajectory samples and the same standard-normal
//! object draws, so their difference carries no independent sampling noise.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Mutex};

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use crate::belief::{cholesky2, ObjectBelief, SensorParams, StandardDraws};
use crate::coordinator::{RobotId, Role};
use crate::deccem::ControlDistribution;
use crate::dynamics::{rollout, AgentParams, ControlSequence, RobotState, Trajectory};
use crate::rng::SimRng;
use crate::task::{log_mean_exp, ReachAvoidTask};
use crate::{Error, Point, Result};

/// Which escort reward drives the EAs. `Blind` runs the PA alone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RewardVariant {
    Blind,
    MiUcb,
    Si,
    Se,
}

impl RewardVariant {
    pub const ALL: [RewardVariant; 4] = [Self::Blind, Self::MiUcb, Self::Si, Self::Se];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Blind => "blind",
            Self::MiUcb => "mi-ucb",
            Self::Si => "si",
            Self::Se => "se",
        }
    }

    pub fn uses_escorts(&self) -> bool {
        !matches!(self, Self::Blind)
    }
}

impl fmt::Display for RewardVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RewardVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "blind" => Ok(Self::Blind),
            "mi-ucb" | "mi_ucb" | "miucb" => Ok(Self::MiUcb),
            "si" => Ok(Self::Si),
            "se" => Ok(Self::Se),
            other => Err(Error::invalid(format!(
                "unknown reward variant {other:?} (expected blind, mi-ucb, si or se)"
            ))),
        }
    }
}

/// Binary entropy in nats, `0 ln 0 := 0`.
pub fn binary_entropy(p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::invalid(format!("probability {p} outside [0, 1]")));
    }
    Ok(entropy(p))
}

fn entropy(p: f64) -> f64 {
    let p = p.clamp(0.0, 1.0);
    let xlnx = |x: f64| if x > 0.0 { x * x.ln() } else { 0.0 };
    -xlnx(p) - xlnx(1.0 - p)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardSettings {
    /// PA trajectory samples per escort reward evaluation.
    pub n_traj: usize,
    /// Object samples per satisfaction estimate.
    pub n_mc: usize,
    /// Lower bound on the PA log reward.
    pub log_floor: f64,
    /// Re-draw PA trajectory samples for every escort candidate instead of
    /// once per optimiser iteration.
    pub redraw_pa_samples: bool,
}

impl Default for RewardSettings {
    fn default() -> Self {
        Self {
            n_traj: 10,
            n_mc: 30,
            log_floor: -1.0e4,
            redraw_pa_samples: false,
        }
    }
}

impl RewardSettings {
    pub fn validate(&self) -> Result<()> {
        if self.n_traj == 0 {
            return Err(Error::config("planner.n_traj", "must be >= 1"));
        }
        if self.n_mc == 0 {
            return Err(Error::config("planner.n_mc", "must be >= 1"));
        }
        if self.log_floor.is_nan() {
            return Err(Error::config("planner.log_floor", "must be a number"));
        }
        Ok(())
    }
}

/// What a robot knows about one peer when scoring its own candidates.
#[derive(Debug, Clone, PartialEq)]
pub struct PeerInfo {
    pub role: Role,
    pub state: RobotState,
    pub params: AgentParams,
    pub dist: ControlDistribution,
}

#[derive(Debug, Clone)]
pub struct RewardContext {
    pub belief: ObjectBelief,
    pub task: ReachAvoidTask,
    pub sensor: SensorParams,
    pub own_state: RobotState,
    pub own_params: AgentParams,
    pub peers: BTreeMap<RobotId, PeerInfo>,
    pub settings: RewardSettings,
}

impl RewardContext {
    /// A context with no objects and no peers, for objectives that only
    /// look at the candidate controls.
    pub fn detached(_horizon: usize) -> Self {
        Self {
            belief: ObjectBelief::default(),
            task: ReachAvoidTask {
                goal: Point::new(0.0, 0.0),
                reach_radius: 10.0,
                collision_radius: 4.0,
                peak_collision: 0.9,
                reach_mode: Default::default(),
            },
            sensor: SensorParams {
                range: 10.0,
                noise_var: 1.0,
            },
            own_state: RobotState::new(0.0, 0.0, 0.0),
            own_params: AgentParams {
                v: 1.0,
                u_max: std::f64::consts::FRAC_PI_2,
                dt: 1.0,
            },
            peers: BTreeMap::new(),
            settings: RewardSettings::default(),
        }
    }

    fn principals(&self) -> impl Iterator<Item = (&RobotId, &PeerInfo)> {
        self.peers.iter().filter(|(_, p)| p.role == Role::Principal)
    }
}

/// One joint draw of all peers' controls, ordered by robot id.
pub type PeerSample = Vec<(RobotId, ControlSequence)>;

/// A reward that is set up once per optimiser iteration and then scores
/// many candidates.
pub trait Objective: Sync {
    fn prepare<'a>(&'a self, ctx: &'a RewardContext, rng: &mut SimRng) -> Result<Box<dyn CandidateScorer + 'a>>;
}

pub trait CandidateScorer: Sync {
    fn score(&self, own: &ControlSequence, peers: &PeerSample, rng: &mut SimRng) -> f64;
}

/// Wraps a plain function of the candidate as an [`Objective`].
pub struct FnObjective<F>(pub F);

impl<F> Objective for FnObjective<F>
where
    F: Fn(&ControlSequence) -> f64 + Sync,
{
    fn prepare<'a>(&'a self, _ctx: &'a RewardContext, _rng: &mut SimRng) -> Result<Box<dyn CandidateScorer + 'a>> {
        Ok(Box::new(FnScorer(&self.0)))
    }
}

struct FnScorer<'a, F>(&'a F);

impl<F> CandidateScorer for FnScorer<'_, F>
where
    F: Fn(&ControlSequence) -> f64 + Sync,
{
    fn score(&self, own: &ControlSequence, _peers: &PeerSample, _rng: &mut SimRng) -> f64 {
        (self.0)(own)
    }
}

// ---------------------------------------------------------------------------
// Principal agent reward
// ---------------------------------------------------------------------------

/// Log marginal satisfaction of the robot's own trajectory under the current
/// belief. Object samples are shared by all candidates of one iteration.
#[derive(Debug, Clone, Copy, Default)]
pub struct PrincipalReward;

struct PrincipalScorer<'a> {
    ctx: &'a RewardContext,
    objects: Vec<Vec<Point>>,
}

impl Objective for PrincipalReward {
    fn prepare<'a>(&'a self, ctx: &'a RewardContext, rng: &mut SimRng) -> Result<Box<dyn CandidateScorer + 'a>> {
        let draws = StandardDraws::sample(ctx.settings.n_mc, ctx.belief.len(), rng);
        Ok(Box::new(PrincipalScorer {
            ctx,
            objects: draws.realize(&ctx.belief)?,
        }))
    }
}

impl PrincipalScorer<'_> {
    fn log_reward(&self, controls: &[f64]) -> f64 {
        let task = &self.ctx.task;
        let traj = rollout(&self.ctx.own_state, controls, &self.ctx.own_params);
        let reach = task.log_reach(&traj);
        let logs: Vec<f64> = self
            .objects
            .iter()
            .map(|objs| reach + objs.iter().map(|o| task.log_avoid(&traj, o)).sum::<f64>())
            .collect();
        log_mean_exp(&logs).max(self.ctx.settings.log_floor)
    }
}

impl CandidateScorer for PrincipalScorer<'_> {
    fn score(&self, own: &ControlSequence, _peers: &PeerSample, _rng: &mut SimRng) -> f64 {
        self.log_reward(own.as_slice())
    }
}

/// PA reward of one control sequence, drawing its own object samples.
pub fn pa_reward(pa_controls: &ControlSequence, ctx: &RewardContext, rng: &mut SimRng) -> Result<f64> {
    let draws = StandardDraws::sample(ctx.settings.n_mc, ctx.belief.len(), rng);
    let scorer = PrincipalScorer {
        ctx,
        objects: draws.realize(&ctx.belief)?,
    };
    Ok(scorer.log_reward(pa_controls.as_slice()))
}

// ---------------------------------------------------------------------------
// Escort rewards
// ---------------------------------------------------------------------------

/// An escort's planned controls together with where it starts.
#[derive(Debug, Clone, PartialEq)]
pub struct EscortPlan {
    pub state: RobotState,
    pub params: AgentParams,
    pub controls: ControlSequence,
}

impl EscortPlan {
    pub fn trajectory(&self) -> Trajectory {
        rollout(&self.state, self.controls.as_slice(), &self.params)
    }
}

/// Satisfaction terms that do not depend on the escorts' plans: PA
/// trajectory samples, object draws and the per-object log-avoid sums.
struct PrincipalSampleCache {
    n_mc: usize,
    n_objects: usize,
    /// `[j]` trajectories of every PA for joint sample `j`.
    pa_trajs: Vec<Vec<Trajectory>>,
    draws: StandardDraws,
    /// `[j][m * n_objects + i]` = Σ_PA ln avoid over the trajectory.
    avoid: Vec<Vec<f64>>,
    reach: Vec<f64>,
    prior: Vec<f64>,
    memo: Mutex<HashMap<(usize, u32), Arc<Vec<f64>>>>,
}

impl PrincipalSampleCache {
    fn build(ctx: &RewardContext, rng: &mut SimRng) -> Result<Option<Self>> {
        let principals: Vec<&PeerInfo> = ctx.principals().map(|(_, p)| p).collect();
        if principals.is_empty() {
            return Ok(None);
        }
        let n_traj = ctx.settings.n_traj;
        let n_mc = ctx.settings.n_mc;
        let n_objects = ctx.belief.len();
        let pa_trajs: Vec<Vec<Trajectory>> = (0..n_traj)
            .map(|_| {
                principals
                    .iter()
                    .map(|p| {
                        let u = p.dist.sample(p.params.u_max, rng);
                        rollout(&p.state, u.as_slice(), &p.params)
                    })
                    .collect()
            })
            .collect();
        let draws = StandardDraws::sample(n_mc, n_objects, rng);
        let objects = draws.realize(&ctx.belief)?;
        let task = &ctx.task;

        let mut avoid = Vec::with_capacity(n_traj);
        let mut reach = Vec::with_capacity(n_traj);
        let mut prior = Vec::with_capacity(n_traj);
        for trajs in &pa_trajs {
            let r: f64 = trajs.iter().map(|t| task.log_reach(t)).sum();
            let a: Vec<f64> = objects
                .iter()
                .flat_map(|objs| {
                    objs.iter()
                        .map(|o| trajs.iter().map(|t| task.log_avoid(t, o)).sum::<f64>())
                })
                .collect();
            let p = (0..n_mc)
                .map(|m| (r + a[m * n_objects..(m + 1) * n_objects].iter().sum::<f64>()).exp())
                .sum::<f64>()
                / n_mc as f64;
            avoid.push(a);
            reach.push(r);
            prior.push(p);
        }
        Ok(Some(Self {
            n_mc,
            n_objects,
            pa_trajs,
            draws,
            avoid,
            reach,
            prior,
            memo: Mutex::default(),
        }))
    }

    /// `[j * n_mc + m]` = Σ_PA ln avoid for object `i` drawn from its
    /// predicted belief after `count` more measurements. Identical for every
    /// candidate that predicts the same count, so it is computed once.
    fn predicted_avoid(&self, ctx: &RewardContext, i: usize, count: u32) -> Arc<Vec<f64>> {
        if let Some(v) = self.memo.lock().expect("memo poisoned").get(&(i, count)) {
            return Arc::clone(v);
        }
        let object = &ctx.belief.objects[i];
        let info = object.info + Matrix2::identity() * (ctx.sensor.precision() * count as f64);
        let values: Vec<f64> = match info.try_inverse().and_then(|c| cholesky2(&c)) {
            Some(factor) => self
                .pa_trajs
                .iter()
                .flat_map(|trajs| {
                    (0..self.n_mc).map(move |m| {
                        let o = object.realize(&factor, self.draws.get(m, i));
                        trajs.iter().map(|t| ctx.task.log_avoid(t, &o)).sum::<f64>()
                    })
                })
                .collect(),
            // information too large to invert: keep the prior terms
            None => (0..self.pa_trajs.len())
                .flat_map(|j| (0..self.n_mc).map(move |m| self.avoid[j][m * self.n_objects + i]))
                .collect(),
        };
        let values = Arc::new(values);
        self.memo
            .lock()
            .expect("memo poisoned")
            .entry((i, count))
            .or_insert(values)
            .clone()
    }

    /// Posterior satisfaction per PA sample given predicted measurement
    /// counts for the objects in `changed`.
    fn posterior(&self, ctx: &RewardContext, changed: &[(usize, u32)]) -> Vec<f64> {
        let n = self.n_objects;
        let mut is_changed = vec![false; n];
        for (i, _) in changed {
            is_changed[*i] = true;
        }
        let predicted: Vec<Arc<Vec<f64>>> = changed.iter().map(|&(i, c)| self.predicted_avoid(ctx, i, c)).collect();
        (0..self.pa_trajs.len())
            .map(|j| {
                let mut total = 0.0;
                for m in 0..self.n_mc {
                    let row = &self.avoid[j][m * n..(m + 1) * n];
                    let mut log = self.reach[j];
                    for (i, a) in row.iter().enumerate() {
                        if !is_changed[i] {
                            log += a;
                        }
                    }
                    for p in &predicted {
                        log += p[j * self.n_mc + m];
                    }
                    total += log.exp();
                }
                total / self.n_mc as f64
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum EscortKind {
    MiUcb,
    Si,
    Se,
}

/// SI, SE or MI-UCB reward for an escort's own candidate plans.
#[derive(Debug, Clone, Copy)]
pub struct EscortReward {
    kind: EscortKind,
}

impl EscortReward {
    /// `None` for the blind variant, which has no escorts.
    pub fn for_variant(variant: RewardVariant) -> Option<Self> {
        let kind = match variant {
            RewardVariant::Blind => return None,
            RewardVariant::MiUcb => EscortKind::MiUcb,
            RewardVariant::Si => EscortKind::Si,
            RewardVariant::Se => EscortKind::Se,
        };
        Some(Self { kind })
    }
}

struct EscortScorer<'a> {
    kind: EscortKind,
    ctx: &'a RewardContext,
    cache: Option<PrincipalSampleCache>,
}

impl Objective for EscortReward {
    fn prepare<'a>(&'a self, ctx: &'a RewardContext, rng: &mut SimRng) -> Result<Box<dyn CandidateScorer + 'a>> {
        Ok(Box::new(EscortScorer::new(self.kind, ctx, rng)?))
    }
}

impl<'a> EscortScorer<'a> {
    fn new(kind: EscortKind, ctx: &'a RewardContext, rng: &mut SimRng) -> Result<Self> {
        let cache = if kind == EscortKind::MiUcb || ctx.settings.redraw_pa_samples {
            None
        } else {
            PrincipalSampleCache::build(ctx, rng)?
        };
        Ok(Self { kind, ctx, cache })
    }

    fn score_trajectories(&self, escort_trajs: &[&[RobotState]], rng: &mut SimRng) -> f64 {
        let ctx = self.ctx;
        let counts = ctx.belief.predicted_measurement_counts(escort_trajs, &ctx.sensor);
        if counts.iter().all(|&c| c == 0) {
            return 0.0;
        }
        if self.kind == EscortKind::MiUcb {
            let precision = ctx.sensor.precision();
            return counts
                .iter()
                .zip(&ctx.belief.objects)
                .filter(|(&c, _)| c > 0)
                .map(|(&c, o)| {
                    let info = o.info + Matrix2::identity() * (precision * c as f64);
                    0.5 * (info.determinant().ln() - o.info.determinant().ln())
                })
                .sum();
        }
        let changed: Vec<(usize, u32)> = counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(i, &c)| (i, c))
            .collect();

        let fresh;
        let cache = match (&self.cache, ctx.settings.redraw_pa_samples) {
            (Some(c), false) => c,
            _ => match PrincipalSampleCache::build(ctx, rng) {
                Ok(Some(c)) => {
                    fresh = c;
                    &fresh
                }
                _ => return 0.0,
            },
        };
        let posterior = cache.posterior(ctx, &changed);
        let n = posterior.len() as f64;
        match self.kind {
            EscortKind::Si => {
                posterior.iter().zip(&cache.prior).map(|(post, pri)| post - pri).sum::<f64>() / n
            }
            EscortKind::Se => {
                posterior
                    .iter()
                    .zip(&cache.prior)
                    .map(|(post, pri)| entropy(*pri) - entropy(*post))
                    .sum::<f64>()
                    / n
            }
            EscortKind::MiUcb => unreachable!(),
        }
    }
}

impl CandidateScorer for EscortScorer<'_> {
    fn score(&self, own: &ControlSequence, peers: &PeerSample, rng: &mut SimRng) -> f64 {
        let ctx = self.ctx;
        let mut trajs = vec![rollout(&ctx.own_state, own.as_slice(), &ctx.own_params)];
        for (id, controls) in peers {
            if let Some(p) = ctx.peers.get(id) {
                if p.role == Role::Escort {
                    trajs.push(rollout(&p.state, controls.as_slice(), &p.params));
                }
            }
        }
        let refs: Vec<&[RobotState]> = trajs.iter().map(|t| t.as_slice()).collect();
        self.score_trajectories(&refs, rng)
    }
}

fn escort_reward(kind: EscortKind, plans: &[EscortPlan], ctx: &RewardContext, rng: &mut SimRng) -> Result<f64> {
    let scorer = EscortScorer::new(kind, ctx, rng)?;
    let trajs: Vec<Trajectory> = plans.iter().map(EscortPlan::trajectory).collect();
    let refs: Vec<&[RobotState]> = trajs.iter().map(|t| t.as_slice()).collect();
    Ok(scorer.score_trajectories(&refs, rng))
}

/// Satisfaction improvement of a set of escort plans.
pub fn si_reward(plans: &[EscortPlan], ctx: &RewardContext, rng: &mut SimRng) -> Result<f64> {
    escort_reward(EscortKind::Si, plans, ctx, rng)
}

/// Reduction in satisfaction entropy of a set of escort plans.
pub fn se_reward(plans: &[EscortPlan], ctx: &RewardContext, rng: &mut SimRng) -> Result<f64> {
    escort_reward(EscortKind::Se, plans, ctx, rng)
}

/// Information gain of a set of escort plans; ignores the PA entirely.
pub fn mi_ucb_reward(plans: &[EscortPlan], ctx: &RewardContext) -> Result<f64> {
    let trajs: Vec<Trajectory> = plans.iter().map(EscortPlan::trajectory).collect();
    let refs: Vec<&[RobotState]> = trajs.iter().map(|t| t.as_slice()).collect();
    let predicted = ctx.belief.predict_information(&refs, &ctx.sensor);
    ctx.belief.information_gain(&predicted)
}
