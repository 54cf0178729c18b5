//! Scenario generation, closed-loop episodes and batch experiments.
//!
//! An episode repeats, once per tick: escorts measure the hidden objects,
//! every robot plans, every robot executes one step, and the PA's swept
//! segment is adjudicated against the ground truth. Episodes are logged as
//! JSON lines (header, one record per tick, verdict) so an interrupted run
//! still leaves every finished tick on disk.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::belief::{simulate_measurements, GroundTruthObjects, Measurement, ObjectBelief};
use crate::config::Config;
use crate::coordinator::{MessageEvent, PlannerState, Role, RobotId, Team};
use crate::dynamics::{step, AgentParams, RobotState};
use crate::rewards::RewardVariant;
use crate::rng::{derive_seed, seeded, stream};
use crate::{Error, Point, Result};

pub use crate::config::ScenarioConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotSpec {
    pub id: RobotId,
    pub role: Role,
    pub params: AgentParams,
    pub initial_state: RobotState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub truth: GroundTruthObjects,
    pub belief: ObjectBelief,
    /// PA first (id 0), then escorts.
    pub robots: Vec<RobotSpec>,
}

/// Objects uniform in the spawn box; prior means are the truth plus
/// `N(0, prior_variance)` noise per axis, clipped to the environment.
///
/// Only the objects consume randomness, so scenarios generated from the same
/// seed agree on truth and prior whatever the escort count.
pub fn generate_scenario<R: Rng + ?Sized>(cfg: &Config, rng: &mut R) -> Result<Scenario> {
    let s = &cfg.scenario;
    let sd = s.prior_variance.sqrt();
    let mut truth = Vec::with_capacity(s.n_objects);
    let mut means = Vec::with_capacity(s.n_objects);
    for _ in 0..s.n_objects {
        let o = Point::new(
            sample_uniform(rng, s.spawn_min[0], s.spawn_max[0]),
            sample_uniform(rng, s.spawn_min[1], s.spawn_max[1]),
        );
        let ex: f64 = rng.sample(rand_distr::StandardNormal);
        let ey: f64 = rng.sample(rand_distr::StandardNormal);
        let m = Point::new(
            (o.x + sd * ex).clamp(0.0, s.env_size[0]),
            (o.y + sd * ey).clamp(0.0, s.env_size[1]),
        );
        truth.push(o);
        means.push(m);
    }
    let start = RobotState::new(s.start[0], s.start[1], s.start_heading);
    let mut robots = vec![RobotSpec {
        id: 0,
        role: Role::Principal,
        params: cfg.pa_params(),
        initial_state: start,
    }];
    robots.extend((1..=s.n_escorts).map(|id| RobotSpec {
        id,
        role: Role::Escort,
        params: cfg.ea_params(),
        initial_state: start,
    }));
    Ok(Scenario {
        truth: GroundTruthObjects { positions: truth },
        belief: ObjectBelief::isotropic(&means, s.prior_variance),
        robots,
    })
}

fn sample_uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

fn point_segment_distance(p: &Point, a: &Point, b: &Point) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    let t = if len2 > 0.0 {
        ((p - a).dot(&ab) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (a + ab * t - p).norm()
}

/// Whether the segment swept from `from` to `to` comes within
/// `collision_radius` of any true object.
pub fn collision_check(
    from: &RobotState,
    to: &RobotState,
    truth: &GroundTruthObjects,
    collision_radius: f64,
) -> bool {
    let (a, b) = (from.position(), to.position());
    truth
        .positions
        .iter()
        .any(|o| point_segment_distance(o, &a, &b) <= collision_radius)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Reached,
    Collided,
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementEvent {
    pub robot: RobotId,
    pub object: usize,
    pub value: Point,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeHeader {
    pub seed: u64,
    pub variant: RewardVariant,
    pub robots: Vec<RobotSpec>,
    pub truth: Vec<Point>,
    pub prior_means: Vec<Point>,
    pub prior_variance: f64,
}

/// One planning tick. States are taken before the controls execute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub tick: usize,
    pub states: Vec<RobotState>,
    pub controls: Vec<f64>,
    /// Best candidate reward of each robot's last optimiser iteration.
    pub rewards: Vec<f64>,
    pub belief_means: Vec<Point>,
    pub belief_variances: Vec<[f64; 2]>,
    pub measurements: Vec<MeasurementEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeOutcome {
    pub verdict: Verdict,
    pub ticks: usize,
    pub final_states: Vec<RobotState>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "lowercase")]
pub enum LogRecord {
    Header(EpisodeHeader),
    Tick(TickRecord),
    Outcome(EpisodeOutcome),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    pub header: EpisodeHeader,
    pub ticks: Vec<TickRecord>,
    pub outcome: EpisodeOutcome,
}

impl EpisodeLog {
    pub fn verdict(&self) -> Verdict {
        self.outcome.verdict
    }

    pub fn records(&self) -> impl Iterator<Item = LogRecord> + '_ {
        std::iter::once(LogRecord::Header(self.header.clone()))
            .chain(self.ticks.iter().cloned().map(LogRecord::Tick))
            .chain(std::iter::once(LogRecord::Outcome(self.outcome.clone())))
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for r in self.records() {
            write_record(&mut out, &r)?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("JSON is UTF-8")
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Self> {
        let mut header = None;
        let mut ticks = Vec::new();
        let mut outcome = None;
        for (n, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: LogRecord = serde_json::from_str(&line)
                .map_err(|e| Error::MalformedLog(format!("line {}: {e}", n + 1)))?;
            match rec {
                LogRecord::Header(h) if header.is_none() => header = Some(h),
                LogRecord::Tick(t) if header.is_some() && outcome.is_none() => ticks.push(t),
                LogRecord::Outcome(o) if header.is_some() && outcome.is_none() => outcome = Some(o),
                _ => return Err(Error::MalformedLog(format!("line {}: record out of order", n + 1))),
            }
        }
        Ok(Self {
            header: header.ok_or_else(|| Error::MalformedLog("missing header".into()))?,
            ticks,
            outcome: outcome.ok_or_else(|| Error::MalformedLog("missing outcome (interrupted run?)".into()))?,
        })
    }
}

pub fn write_record<W: Write>(out: &mut W, record: &LogRecord) -> Result<()> {
    serde_json::to_writer(&mut *out, record)?;
    out.write_all(b"\n")?;
    Ok(())
}

/// Result of re-executing a log's controls open loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplayReport {
    pub steps: usize,
    /// Largest position or heading difference to the logged states.
    pub max_deviation: f64,
    pub exact: bool,
}

/// Replays logged controls through the dynamics from the initial states and
/// compares every resulting state with the log, bit for bit.
pub fn replay(log: &EpisodeLog) -> Result<ReplayReport> {
    let robots = &log.header.robots;
    let mut states: Vec<RobotState> = robots.iter().map(|r| r.initial_state).collect();
    let mut max_dev: f64 = 0.0;
    let mut exact = true;
    let mut compare = |expected: &[RobotState], got: &[RobotState]| -> Result<()> {
        if expected.len() != got.len() {
            return Err(Error::MalformedLog("robot count changes within log".into()));
        }
        for (e, g) in expected.iter().zip(got) {
            exact &= e == g;
            max_dev = max_dev
                .max((e.x - g.x).abs())
                .max((e.y - g.y).abs())
                .max((e.theta - g.theta).abs());
        }
        Ok(())
    };
    for t in &log.ticks {
        compare(&t.states, &states)?;
        if t.controls.len() != robots.len() {
            return Err(Error::MalformedLog(format!("tick {} has wrong control count", t.tick)));
        }
        states = states
            .iter()
            .zip(&t.controls)
            .zip(robots)
            .map(|((s, &u), r)| step(s, u, &r.params))
            .collect();
    }
    compare(&log.outcome.final_states, &states)?;
    Ok(ReplayReport {
        steps: log.ticks.len(),
        max_deviation: max_dev,
        exact,
    })
}

/// Runs one closed-loop episode.
pub fn run_episode(cfg: &Config, seed: u64) -> Result<EpisodeLog> {
    run_episode_with(cfg, seed, |_| Ok(()), None)
}

/// Runs one episode, handing each record to `sink` as soon as it exists.
/// When `trace` is given, every distribution message event is appended to it.
pub fn run_episode_with<F>(
    cfg: &Config,
    seed: u64,
    sink: F,
    trace: Option<&mut Vec<MessageEvent>>,
) -> Result<EpisodeLog>
where
    F: FnMut(&LogRecord) -> Result<()>,
{
    cfg.validate()?;
    let scenario = generate_scenario(cfg, &mut seeded(derive_seed(seed, &[stream::SCENARIO])))?;
    run_scenario_with(cfg, &scenario, seed, sink, trace)
}

/// Runs an episode on a given scenario instead of a generated one. `seed`
/// still drives sensing and planning.
pub fn run_scenario(cfg: &Config, scenario: &Scenario, seed: u64) -> Result<EpisodeLog> {
    run_scenario_with(cfg, scenario, seed, |_| Ok(()), None)
}

pub fn run_scenario_with<F>(
    cfg: &Config,
    scenario: &Scenario,
    seed: u64,
    mut sink: F,
    trace: Option<&mut Vec<MessageEvent>>,
) -> Result<EpisodeLog>
where
    F: FnMut(&LogRecord) -> Result<()>,
{
    cfg.validate()?;
    scenario.belief.validate()?;
    if scenario.belief.len() != scenario.truth.positions.len() {
        return Err(Error::invalid("belief and ground truth differ in object count"));
    }
    match scenario.robots.first() {
        Some(r) if r.id == 0 && r.role == Role::Principal => {}
        _ => return Err(Error::invalid("the first robot must be the principal with id 0")),
    }
    if scenario.robots.iter().enumerate().any(|(k, r)| r.id != k || (k > 0 && r.role != Role::Escort)) {
        return Err(Error::invalid("robots must be the principal followed by escorts with ids 1.."));
    }
    let planning = cfg.planning();
    let task = cfg.task();
    let sensor = cfg.sensor();
    let s = &cfg.scenario;

    let header = EpisodeHeader {
        seed,
        variant: s.variant,
        robots: scenario.robots.clone(),
        truth: scenario.truth.positions.clone(),
        prior_means: scenario.belief.means(),
        prior_variance: s.prior_variance,
    };
    sink(&LogRecord::Header(header.clone()))?;

    let planners = scenario
        .robots
        .iter()
        .map(|r| {
            PlannerState::new(
                r.id,
                r.role,
                r.initial_state,
                r.params,
                scenario.belief.clone(),
                s.variant,
                task,
                sensor,
                &planning,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let mut team = Team::new(planners, cfg.comms, derive_seed(seed, &[stream::PLANNING]))?;
    if trace.is_some() {
        team.record_trace();
    }

    let goal = task.goal;
    let mut states: Vec<RobotState> = scenario.robots.iter().map(|r| r.initial_state).collect();
    let mut ticks = Vec::new();
    let pa = 0;

    let verdict = if states[pa].distance_to(&goal) <= s.arrival_radius {
        Verdict::Reached
    } else if collision_check(&states[pa], &states[pa], &scenario.truth, s.collision_radius) {
        Verdict::Collided
    } else {
        let mut verdict = Verdict::Timeout;
        for tick in 0..s.max_ticks {
            let mut sense_rng = seeded(derive_seed(seed, &[stream::SENSING, tick as u64]));
            let mut measurements: Vec<Measurement> = Vec::new();
            let mut events = Vec::new();
            for (r, st) in scenario.robots.iter().zip(&states) {
                if r.role != Role::Escort {
                    continue;
                }
                for m in simulate_measurements(&scenario.truth, st, &sensor, tick, &mut sense_rng) {
                    events.push(MeasurementEvent {
                        robot: r.id,
                        object: m.object_id,
                        value: m.value,
                    });
                    measurements.push(m);
                }
            }

            for (p, st) in team.planners_mut().iter_mut().zip(&states) {
                p.state = *st;
            }
            let outcomes = team.plan_tick(&measurements, tick as u64, &planning)?;
            let belief = &team.planners()[pa].belief;
            let record = TickRecord {
                tick,
                states: states.clone(),
                controls: outcomes.iter().map(|o| o.control).collect(),
                rewards: outcomes.iter().map(|o| o.reward).collect(),
                belief_means: belief.means(),
                belief_variances: belief.marginal_variances(),
                measurements: events,
            };
            let next: Vec<RobotState> = states
                .iter()
                .zip(&record.controls)
                .zip(&scenario.robots)
                .map(|((st, &u), r)| step(st, u, &r.params))
                .collect();
            sink(&LogRecord::Tick(record.clone()))?;
            ticks.push(record);

            let collided = collision_check(&states[pa], &next[pa], &scenario.truth, s.collision_radius);
            states = next;
            if collided {
                verdict = Verdict::Collided;
                break;
            }
            if states[pa].distance_to(&goal) <= s.arrival_radius {
                verdict = Verdict::Reached;
                break;
            }
        }
        verdict
    };

    if let Some(out) = trace {
        out.extend(team.take_trace());
    }
    let outcome = EpisodeOutcome {
        verdict,
        ticks: ticks.len(),
        final_states: states,
    };
    sink(&LogRecord::Outcome(outcome.clone()))?;
    Ok(EpisodeLog {
        header,
        ticks,
        outcome,
    })
}

// ---------------------------------------------------------------------------
// Batch experiments
// ---------------------------------------------------------------------------

/// Seed of environment `k` in a batch; shared by every variant and escort
/// count so comparisons are paired.
pub fn environment_seed(batch_seed: u64, k: usize) -> u64 {
    derive_seed(batch_seed, &[stream::SCENARIO, k as u64])
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchSpec {
    pub variants: Vec<RewardVariant>,
    pub escorts: Vec<usize>,
    pub envs: usize,
    pub seed: u64,
    pub workers: usize,
}

impl BatchSpec {
    pub fn from_config(cfg: &Config) -> Self {
        Self {
            variants: cfg.batch.variants.clone(),
            escorts: cfg.batch.escorts.clone(),
            envs: cfg.batch.envs,
            seed: cfg.scenario.seed,
            workers: cfg.batch.workers,
        }
    }

    /// `(variant, n_escorts)` cells; blind runs once with no escorts.
    pub fn cells(&self) -> Vec<(RewardVariant, usize)> {
        let mut cells = Vec::new();
        for &v in &self.variants {
            if v.uses_escorts() {
                cells.extend(self.escorts.iter().map(|&n| (v, n)));
            } else {
                cells.push((v, 0));
            }
        }
        cells.dedup();
        cells
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub variant: RewardVariant,
    pub n_escorts: usize,
    pub env: usize,
    pub seed: u64,
    pub verdict: Verdict,
    pub ticks: usize,
}

/// One row of the failure-rate table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub variant: RewardVariant,
    pub n_escorts: usize,
    pub n_episodes: usize,
    pub failure_rate: f64,
    pub timeout_rate: f64,
    /// Mean ticks over episodes that reached the goal; empty when none did.
    pub mean_ticks_to_goal: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchResult {
    pub cells: Vec<CellResult>,
    pub episodes: Vec<EpisodeSummary>,
}

impl BatchResult {
    pub fn cell(&self, variant: RewardVariant, n_escorts: usize) -> Option<&CellResult> {
        self.cells
            .iter()
            .find(|c| c.variant == variant && (c.n_escorts == n_escorts || !variant.uses_escorts()))
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["variant", "n_escorts", "n_episodes", "failure_rate", "timeout_rate", "mean_ticks_to_goal"])?;
        for c in &self.cells {
            w.write_record([
                c.variant.name().to_string(),
                c.n_escorts.to_string(),
                c.n_episodes.to_string(),
                c.failure_rate.to_string(),
                c.timeout_rate.to_string(),
                c.mean_ticks_to_goal.map(|t| t.to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Episode configuration for one batch cell.
pub fn cell_config(base: &Config, variant: RewardVariant, n_escorts: usize) -> Config {
    let mut cfg = base.clone();
    cfg.scenario.variant = variant;
    cfg.scenario.n_escorts = if variant.uses_escorts() { n_escorts } else { 0 };
    cfg
}

/// Runs every `(cell, environment)` episode, optionally writing each log to
/// `log_dir/<variant>_e<escorts>_env<k>.jsonl`.
pub fn batch_evaluate(base: &Config, spec: &BatchSpec, log_dir: Option<&Path>) -> Result<BatchResult> {
    if spec.variants.is_empty() {
        return Err(Error::invalid("batch needs at least one variant"));
    }
    let jobs: Vec<(RewardVariant, usize, usize)> = spec
        .cells()
        .into_iter()
        .flat_map(|(v, n)| (0..spec.envs).map(move |k| (v, n, k)))
        .collect();
    for &(v, n, _) in &jobs {
        cell_config(base, v, n).validate()?;
    }
    if let Some(dir) = log_dir {
        std::fs::create_dir_all(dir)?;
    }

    let run = |&(variant, n_escorts, env): &(RewardVariant, usize, usize)| -> Result<EpisodeSummary> {
        let cfg = cell_config(base, variant, n_escorts);
        let seed = environment_seed(spec.seed, env);
        let log = match log_dir {
            Some(dir) => {
                let path = dir.join(format!("{}_e{}_env{}.jsonl", variant.name(), n_escorts, env));
                let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
                let log = run_episode_with(&cfg, seed, |r| write_record(&mut file, r), None)?;
                file.flush()?;
                log
            }
            None => run_episode(&cfg, seed)?,
        };
        Ok(EpisodeSummary {
            variant,
            n_escorts,
            env,
            seed,
            verdict: log.verdict(),
            ticks: log.outcome.ticks,
        })
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.workers.max(1))
        .build()
        .map_err(|e| Error::invalid(format!("cannot start worker pool: {e}")))?;
    let episodes: Vec<EpisodeSummary> = pool.install(|| jobs.par_iter().map(run).collect::<Result<Vec<_>>>())?;

    let mut grouped: BTreeMap<(RewardVariant, usize), Vec<&EpisodeSummary>> = BTreeMap::new();
    for e in &episodes {
        grouped.entry((e.variant, e.n_escorts)).or_default().push(e);
    }
    let cells = spec
        .cells()
        .into_iter()
        .map(|(variant, n_escorts)| {
            let eps = grouped.get(&(variant, n_escorts)).map(Vec::as_slice).unwrap_or(&[]);
            let n = eps.len();
            let count = |v: Verdict| eps.iter().filter(|e| e.verdict == v).count();
            let reached: Vec<usize> = eps.iter().filter(|e| e.verdict == Verdict::Reached).map(|e| e.ticks).collect();
            CellResult {
                variant,
                n_escorts,
                n_episodes: n,
                failure_rate: count(Verdict::Collided) as f64 / n.max(1) as f64,
                timeout_rate: count(Verdict::Timeout) as f64 / n.max(1) as f64,
                mean_ticks_to_goal: (!reached.is_empty())
                    .then(|| reached.iter().sum::<usize>() as f64 / reached.len() as f64),
            }
        })
        .collect();
    Ok(BatchResult { cells, episodes })
}
