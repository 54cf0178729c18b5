//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! Set `ACCEPTANCE_ONLY=1,4` to run a subset.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{Duration, Instant};

use escort_core::belief::{Measurement, ObjectBelief, ObjectEstimate, SensorParams};
use escort_core::config::Config;
use escort_core::coordinator::{Role, SchedulerMode};
use escort_core::deccem::{dec_cem, CemConfig, ControlDistribution};
use escort_core::dynamics::{rollout, AgentParams, ControlSequence, RobotState};
use escort_core::rewards::{
    mi_ucb_reward, se_reward, si_reward, EscortPlan, FnObjective, PeerInfo, RewardContext, RewardVariant,
};
use escort_core::rng::{derive_seed, seeded, SimRng};
use escort_core::simulator::{batch_evaluate, generate_scenario, BatchSpec, Verdict};
use escort_core::task::{log_satisfaction_samples, posterior_satisfaction, ReachAvoidTask};
use escort_core::belief::StandardDraws;
use escort_core::Point;
use nalgebra::{DMatrix, DVector, Matrix2};
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;

struct Verdicts {
    failed: usize,
}

impl Verdicts {
    fn report(&mut self, id: usize, name: &str, pass: bool, detail: String, elapsed: Duration) {
        if !pass {
            self.failed += 1;
        }
        println!(
            "[{}] criterion {id}: {name} ({detail}; {:.1}s)",
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64()
        );
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

fn random_spd<R: Rng>(rng: &mut R, scale: f64) -> Matrix2<f64> {
    let a = Matrix2::new(
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
    );
    (a * a.transpose() + Matrix2::identity() * 0.1) * scale
}

// 1 ------------------------------------------------------------------------

/// Stacked-measurement Kalman update in covariance form.
fn batch_covariance_posterior(
    mean: &Point,
    cov: &Matrix2<f64>,
    ys: &[Point],
    noise_var: f64,
) -> (Point, Matrix2<f64>) {
    let n = ys.len();
    let mut h = DMatrix::<f64>::zeros(2 * n, 2);
    let mut y = DVector::<f64>::zeros(2 * n);
    for (k, v) in ys.iter().enumerate() {
        h[(2 * k, 0)] = 1.0;
        h[(2 * k + 1, 1)] = 1.0;
        y[2 * k] = v.x;
        y[2 * k + 1] = v.y;
    }
    let p0 = DMatrix::from_iterator(2, 2, cov.iter().copied());
    let m0 = DVector::from_vec(vec![mean.x, mean.y]);
    let s = &h * &p0 * h.transpose() + DMatrix::<f64>::identity(2 * n, 2 * n) * noise_var;
    let k = &p0 * h.transpose() * s.try_inverse().expect("innovation covariance invertible");
    let m = &m0 + &k * (y - &h * &m0);
    let p = (DMatrix::<f64>::identity(2, 2) - &k * &h) * p0;
    (
        Point::new(m[0], m[1]),
        Matrix2::new(p[(0, 0)], p[(0, 1)], p[(1, 0)], p[(1, 1)]),
    )
}

fn criterion_1(v: &mut Verdicts) {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for case in 0..100u64 {
        let mut rng = SimRng::seed_from_u64(1000 + case);
        let sensor = SensorParams::new(10.0, rng.random_range(0.2..4.0)).unwrap();
        let n_objects = 3;
        let priors: Vec<(Point, Matrix2<f64>)> = (0..n_objects)
            .map(|_| {
                (
                    Point::new(rng.random_range(0.0..100.0), rng.random_range(0.0..100.0)),
                    {
                        let scale = rng.random_range(1.0..30.0);
                        random_spd(&mut rng, scale)
                    },
                )
            })
            .collect();
        let belief = ObjectBelief::new(
            priors
                .iter()
                .map(|(m, c)| ObjectEstimate {
                    mean: *m,
                    info: c.try_inverse().unwrap(),
                })
                .collect(),
        )
        .unwrap();

        let mut per_object: Vec<Vec<Point>> = vec![Vec::new(); n_objects];
        let mut seq = belief.clone();
        for tick in 0..20 {
            let id = rng.random_range(0..n_objects);
            let pose = RobotState::new(rng.random_range(0.0..100.0), rng.random_range(0.0..100.0), 0.0);
            let r = rng.random_range(0.0..9.5);
            let a: f64 = rng.random_range(-3.2..3.2);
            let value = Point::new(pose.x + r * a.cos(), pose.y + r * a.sin());
            per_object[id].push(value);
            let m = Measurement {
                object_id: id,
                value,
                sensor_pose: pose,
                tick,
            };
            seq = seq.update(&[m], &sensor).unwrap();
        }
        for (i, (m0, c0)) in priors.iter().enumerate() {
            let (m, c) = if per_object[i].is_empty() {
                (*m0, *c0)
            } else {
                batch_covariance_posterior(m0, c0, &per_object[i], sensor.noise_var)
            };
            let got = &seq.objects[i];
            let got_cov = got.covariance().unwrap();
            worst = worst.max(rel_err(got.mean.x, m.x)).max(rel_err(got.mean.y, m.y));
            for (a, b) in got_cov.iter().zip(c.iter()) {
                worst = worst.max(rel_err(*a, *b));
            }
        }
    }
    let elapsed = start.elapsed();
    v.report(
        1,
        "sequential information filter equals batch covariance posterior",
        worst <= 1e-9 && elapsed < Duration::from_secs(1),
        format!("100 cases, worst relative error {worst:.2e}"),
        elapsed,
    );
}

// 2 ------------------------------------------------------------------------

fn gaussian_entropy(cov: &Matrix2<f64>) -> f64 {
    0.5 * ((2.0 * std::f64::consts::PI * std::f64::consts::E).powi(2) * cov.determinant()).ln()
}

fn criterion_2(v: &mut Verdicts) {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for case in 0..100u64 {
        let mut rng = SimRng::seed_from_u64(2000 + case);
        let n = rng.random_range(1..5);
        let mut prior = Vec::new();
        let mut post = Vec::new();
        let mut oracle = 0.0;
        for _ in 0..n {
            let (s1, s2) = (rng.random_range(0.01..2.0), rng.random_range(0.0..3.0));
            let lam = random_spd(&mut rng, s1);
            let added = random_spd(&mut rng, s2);
            let lam2 = lam + added;
            oracle += gaussian_entropy(&lam.try_inverse().unwrap()) - gaussian_entropy(&lam2.try_inverse().unwrap());
            prior.push(ObjectEstimate {
                mean: Point::zeros(),
                info: lam,
            });
            post.push(ObjectEstimate {
                mean: Point::zeros(),
                info: lam2,
            });
        }
        let gain = ObjectBelief::new(prior)
            .unwrap()
            .information_gain(&ObjectBelief::new(post).unwrap())
            .unwrap();
        worst = worst.max(rel_err(gain, oracle));
    }
    let worked = ObjectBelief::isotropic(&[Point::zeros()], 25.0)
        .information_gain(&ObjectBelief::isotropic(&[Point::zeros()], 1.0 / 1.04))
        .unwrap();
    let worked_ok = (worked - 26f64.ln()).abs() < 1e-9 && (worked - 3.2581).abs() < 5e-5;
    let elapsed = start.elapsed();
    v.report(
        2,
        "information gain equals Gaussian entropy difference",
        worst <= 1e-9 && worked_ok && elapsed < Duration::from_secs(1),
        format!("100 cases, worst relative error {worst:.2e}; 0.04I -> 1.04I gives {worked:.4} nats"),
        elapsed,
    );
}

// 3 ------------------------------------------------------------------------

/// Direct factor product for one trajectory and one object.
fn satisfaction_direct(traj: &[RobotState], o: &Point, task: &ReachAvoidTask) -> f64 {
    traj.iter()
        .map(|s| {
            let d_o = (s.x - o.x).powi(2) + (s.y - o.y).powi(2);
            let d_g = (s.x - task.goal.x).powi(2) + (s.y - task.goal.y).powi(2);
            (1.0 - task.peak_collision * (-d_o / (2.0 * task.collision_radius.powi(2))).exp())
                * (-d_g / (2.0 * task.reach_radius.powi(2))).exp()
        })
        .product()
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn criterion_3(v: &mut Verdicts) {
    let start = Instant::now();
    let n_mc = 10_000;
    let n_measurement_sets = 400;
    let mut worst_z: f64 = 0.0;
    for case in 0..20u64 {
        let mut rng = SimRng::seed_from_u64(3000 + case);
        let sensor = SensorParams::new(10.0, rng.random_range(0.5..2.0)).unwrap();
        let mean = Point::new(rng.random_range(15.0..25.0), rng.random_range(-3.0..3.0));
        let scale = rng.random_range(4.0..12.0);
        let cov = random_spd(&mut rng, scale);
        let belief = ObjectBelief::new(vec![ObjectEstimate {
            mean,
            info: cov.try_inverse().unwrap(),
        }])
        .unwrap();
        let task = ReachAvoidTask::new(Point::new(40.0, 0.0), 15.0, 4.0, 0.9).unwrap();
        let pa_params = AgentParams::new(2.0, 1.0, 1.0).unwrap();
        let pa_u: Vec<f64> = (0..20).map(|_| rng.random_range(-0.05..0.05)).collect();
        let pa = rollout(&RobotState::new(0.0, 0.0, 0.0), &pa_u, &pa_params);
        let ea_params = AgentParams::new(4.0, 1.0, 1.0).unwrap();
        let ea_start = RobotState::new(mean.x - 20.0, mean.y + rng.random_range(-6.0..6.0), 0.0);
        let ea = rollout(&ea_start, &[0.0; 10], &ea_params);

        // implementation: predicted belief along the escort path
        let predicted = belief.predict_information(&[ea.as_slice()], &sensor);
        let mut eval_rng = seeded(derive_seed(case, &[3]));
        let value = posterior_satisfaction(&pa, &predicted, &task, n_mc, &mut eval_rng).unwrap();
        let draws = StandardDraws::sample(n_mc, 1, &mut seeded(derive_seed(case, &[3])));
        let samples: Vec<f64> = log_satisfaction_samples(&[pa.as_slice()], &predicted, &task, &draws)
            .unwrap()
            .iter()
            .map(|l| l.exp())
            .collect();
        let (_, se_impl) = mean_and_se(&samples);

        // oracle: simulate measurement values at every in-range escort pose,
        // condition with a covariance-form Kalman update, average posteriors
        let mut mean_sum = Point::zeros();
        let mut post_cov = cov;
        for _ in 0..n_measurement_sets / 2 {
            let noise: Vec<Point> = ea
                .iter()
                .map(|_| Point::new(rng.sample(StandardNormal), rng.sample(StandardNormal)) * sensor.noise_var.sqrt())
                .collect();
            // antithetic pair: the noise and its negation
            for sign in [1.0, -1.0] {
                let mut m = mean;
                let mut p = cov;
                for (pose, eps) in ea.iter().zip(&noise).skip(1) {
                    if (pose.position() - mean).norm() >= sensor.range {
                        continue;
                    }
                    let y = mean + eps * sign;
                    let s = p + Matrix2::identity() * sensor.noise_var;
                    let k = p * s.try_inverse().unwrap();
                    m += k * (y - m);
                    p = (Matrix2::identity() - k) * p;
                }
                mean_sum += m;
                post_cov = p;
            }
        }
        let oracle_mean = mean_sum / n_measurement_sets as f64;
        let l = post_cov.cholesky().unwrap().l();
        let oracle_samples: Vec<f64> = (0..n_mc)
            .map(|_| {
                let z = Point::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
                satisfaction_direct(&pa, &(oracle_mean + l * z), &task)
            })
            .collect();
        let (oracle, se_oracle) = mean_and_se(&oracle_samples);
        let z = (value - oracle).abs() / (se_impl.powi(2) + se_oracle.powi(2)).sqrt().max(1e-300);
        worst_z = worst_z.max(z);
    }
    let elapsed = start.elapsed();
    v.report(
        3,
        "predicted-belief satisfaction matches measurement-conditioning oracle",
        worst_z <= 3.0 && elapsed < Duration::from_secs(30),
        format!("20 seeds, n_mc = 1e4, worst deviation {worst_z:.2} standard errors"),
        elapsed,
    );
}

// 4 ------------------------------------------------------------------------

/// Plain single-agent CEM with the same random-number consumption as
/// `dec_cem` for a robot without peers.
fn reference_cem(
    prior: &ControlDistribution,
    reward: &dyn Fn(&[f64]) -> f64,
    u_max: f64,
    cfg: &CemConfig,
    rng: &mut SimRng,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let _eval_seed: u64 = rng.random();
    let (mut mean, mut var) = (prior.mean.clone(), prior.var.clone());
    let mut best = Vec::new();
    for _ in 0..cfg.n_inner_iters {
        let samples: Vec<Vec<f64>> = (0..cfg.n_samples)
            .map(|_| {
                mean.iter()
                    .zip(&var)
                    .map(|(m, v)| {
                        let z: f64 = rng.sample(StandardNormal);
                        (m + v.sqrt() * z).clamp(-u_max, u_max)
                    })
                    .collect()
            })
            .collect();
        let rewards: Vec<f64> = samples.iter().map(|s| reward(s)).collect();
        let mut order: Vec<usize> = (0..samples.len()).collect();
        order.sort_by(|&a, &b| rewards[b].total_cmp(&rewards[a]).then(a.cmp(&b)));
        let elite = &order[..cfg.n_elite];
        best.push(rewards[elite[0]]);
        let n = cfg.n_elite as f64;
        for t in 0..mean.len() {
            let m = elite.iter().map(|&i| samples[i][t]).sum::<f64>() / n;
            let s = elite.iter().map(|&i| (samples[i][t] - m).powi(2)).sum::<f64>() / n;
            mean[t] = m;
            var[t] = s.max(cfg.var_floor);
        }
        if var.iter().sum::<f64>() / var.len() as f64 <= cfg.var_terminate {
            break;
        }
    }
    (mean, var, best)
}

fn criterion_4(v: &mut Verdicts) {
    let start = Instant::now();
    let horizon = 5;
    // a quarter of the samples as elites and a tight stopping variance; the
    // default 8-of-64 elite set collapses before reaching the optimum in
    // about one seed in twenty
    let cfg = CemConfig {
        n_elite: 16,
        n_inner_iters: 60,
        var_floor: 1e-10,
        var_terminate: 1e-7,
        ..CemConfig::default()
    };
    let mut ctx = RewardContext::detached(horizon);
    ctx.own_params = AgentParams::new(1.0, std::f64::consts::FRAC_PI_2, 1.0).unwrap();
    let prior = ControlDistribution::prior(horizon, cfg.sigma0_sq);
    let mut converged = 0;
    let mut identical = 0;
    let mut monotone_steps = 0;
    let mut steps = 0;
    for seed in 0..100u64 {
        let mut trng = SimRng::seed_from_u64(4000 + seed);
        let target: Vec<f64> = (0..horizon).map(|_| trng.random_range(-1.0..1.0)).collect();
        let reward = |u: &[f64]| -u.iter().zip(&target).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        let objective = FnObjective(|u: &ControlSequence| reward(u.as_slice()));
        let out = dec_cem(&prior, &objective, &ctx, &cfg, &mut seeded(seed)).unwrap();
        if out.dist.mean.iter().zip(&target).all(|(a, b)| (a - b).abs() <= 0.05) {
            converged += 1;
        }
        let (mean, var, best) = reference_cem(&prior, &reward, ctx.own_params.u_max, &cfg, &mut seeded(seed));
        if mean == out.dist.mean && var == out.dist.var && best == out.best_rewards {
            identical += 1;
        }
        for w in out.best_rewards.windows(2) {
            steps += 1;
            if w[1] >= w[0] - 1e-3 {
                monotone_steps += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    v.report(
        4,
        "CEM converges on a quadratic and equals a reference single-agent CEM",
        converged >= 95 && identical == 100 && elapsed < Duration::from_secs(10),
        format!(
            "{converged}/100 within 0.05 rad/s, {identical}/100 identical to reference, \
             best reward non-decreasing (1e-3 slack) in {monotone_steps}/{steps} iterations"
        ),
        elapsed,
    );
}

// 5 ------------------------------------------------------------------------

fn criterion_5(v: &mut Verdicts) {
    let start = Instant::now();
    let mut nonzero = 0;
    for case in 0..100u64 {
        let mut rng = SimRng::seed_from_u64(5000 + case);
        let mut cfg = Config::default();
        cfg.scenario.n_objects = rng.random_range(1..30);
        let sc = generate_scenario(&cfg, &mut rng).unwrap();
        let mut ctx = RewardContext::detached(cfg.dynamics.horizon);
        ctx.belief = sc.belief.clone();
        ctx.task = cfg.task();
        ctx.sensor = cfg.sensor();
        ctx.settings = cfg.reward_settings();
        ctx.own_state = sc.robots[1].initial_state;
        ctx.own_params = cfg.ea_params();
        ctx.peers = BTreeMap::from([(
            0,
            PeerInfo {
                role: Role::Principal,
                state: sc.robots[0].initial_state,
                params: cfg.pa_params(),
                dist: ControlDistribution::prior(cfg.dynamics.horizon, 1.0),
            },
        )]);
        // escorts start far enough that no horizon can reach sensing range
        let reach = cfg.scenario.ea_speed * cfg.dynamics.dt * cfg.dynamics.horizon as f64 + cfg.sensor.range;
        let plans: Vec<EscortPlan> = (0..rng.random_range(1..4))
            .map(|_| {
                let side = if rng.random_bool(0.5) { -1.0 } else { 1.0 };
                EscortPlan {
                    state: RobotState::new(
                        rng.random_range(0.0..100.0),
                        50.0 + side * (50.0 + reach + rng.random_range(1.0..50.0)),
                        rng.random_range(-3.0..3.0),
                    ),
                    params: cfg.ea_params(),
                    controls: ControlSequence(
                        (0..cfg.dynamics.horizon).map(|_| rng.random_range(-1.5..1.5)).collect(),
                    ),
                }
            })
            .collect();
        let si = si_reward(&plans, &ctx, &mut seeded(case)).unwrap();
        let se = se_reward(&plans, &ctx, &mut seeded(case)).unwrap();
        let mi = mi_ucb_reward(&plans, &ctx).unwrap();
        if si != 0.0 || se != 0.0 || mi != 0.0 {
            nonzero += 1;
        }
    }
    let elapsed = start.elapsed();
    v.report(
        5,
        "escort rewards are exactly zero out of sensing range",
        nonzero == 0 && elapsed < Duration::from_secs(5),
        format!("100 scenarios, {nonzero} with a non-zero SI/SE/MI-UCB value"),
        elapsed,
    );
}

// 6 and 7 ------------------------------------------------------------------

fn workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn failure_rate(cfg: &Config, variant: RewardVariant, envs: usize) -> (f64, usize, usize) {
    let spec = BatchSpec {
        variants: vec![variant],
        escorts: vec![2],
        envs,
        seed: 0,
        workers: workers(),
    };
    let res = batch_evaluate(cfg, &spec, None).unwrap();
    let done = res.episodes.len();
    let verdicts = res
        .episodes
        .iter()
        .filter(|e| matches!(e.verdict, Verdict::Reached | Verdict::Collided | Verdict::Timeout))
        .count();
    (res.cells[0].failure_rate, done, verdicts)
}

fn criterion_6(v: &mut Verdicts) -> Option<f64> {
    let start = Instant::now();
    let cfg = Config::default();
    let envs = 30;
    let rates: BTreeMap<RewardVariant, f64> = RewardVariant::ALL
        .iter()
        .map(|&variant| (variant, failure_rate(&cfg, variant, envs).0))
        .collect();
    let blind = rates[&RewardVariant::Blind];
    let (mi, si, se) = (rates[&RewardVariant::MiUcb], rates[&RewardVariant::Si], rates[&RewardVariant::Se]);
    let a = blind > mi && blind > si && blind > se;
    let b = se <= 0.6 * blind;
    let c = se <= mi + 0.1;
    let elapsed = start.elapsed();
    v.report(
        6,
        "failure-rate trend over 30 paired environments, 2 escorts",
        a && b && c,
        format!(
            "blind {blind:.3}, mi-ucb {mi:.3}, si {si:.3}, se {se:.3}; \
             blind highest: {a}, se <= 0.6 blind: {b}, se <= mi-ucb + 0.1: {c}"
        ),
        elapsed,
    );
    Some(se)
}

fn criterion_7(v: &mut Verdicts, se_drop0: Option<f64>) {
    let start = Instant::now();
    let mut cfg = Config::default();
    cfg.comms.drop_probability = 1.0;
    let envs_dead = 10;
    let (_, done, verdicts) = failure_rate(&cfg, RewardVariant::Se, envs_dead);
    let all_finished = done == envs_dead && verdicts == envs_dead;

    let envs = 30;
    let drop0 = se_drop0.unwrap_or_else(|| failure_rate(&Config::default(), RewardVariant::Se, envs).0);
    cfg.comms.drop_probability = 0.5;
    let drop_half = failure_rate(&cfg, RewardVariant::Se, envs).0;
    let elapsed = start.elapsed();
    v.report(
        7,
        "graceful degradation under message loss",
        all_finished,
        format!(
            "drop 1.0: {done}/{envs_dead} episodes finished with a verdict; \
             se failure rate drop 0.0 {drop0:.3} vs drop 0.5 {drop_half:.3} (change {:+.3}, reported only)",
            drop_half - drop0
        ),
        elapsed,
    );
}

// 8 ------------------------------------------------------------------------

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

fn criterion_8(v: &mut Verdicts) {
    let start = Instant::now();
    let mut checked = 0;
    let mut mismatched = Vec::new();
    for scheduler in [SchedulerMode::Synchronous, SchedulerMode::EventDriven] {
        let mut cfg = Config::default();
        cfg.scenario.max_ticks = 8;
        cfg.comms.scheduler = scheduler;
        cfg.comms.drop_probability = 0.2;
        let spec = |workers| BatchSpec {
            variants: vec![RewardVariant::Blind, RewardVariant::Se],
            escorts: vec![2],
            envs: 2,
            seed: 11,
            workers,
        };
        let runs: Vec<Vec<(String, Vec<u8>)>> = [1, 8, 1]
            .iter()
            .map(|&w| {
                let dir = tempfile::tempdir().unwrap();
                batch_evaluate(&cfg, &spec(w), Some(dir.path())).unwrap();
                read_dir_sorted(dir.path())
            })
            .collect();
        checked += runs[0].len();
        for run in &runs[1..] {
            if run != &runs[0] {
                mismatched.push(format!("{scheduler:?}"));
            }
        }
    }
    let elapsed = start.elapsed();
    v.report(
        8,
        "episode logs are byte-identical across reruns and worker counts",
        mismatched.is_empty() && checked > 0,
        format!("{checked} logs per run, synchronous and event-driven, workers 1/8/1; mismatches: {mismatched:?}"),
        elapsed,
    );
}

fn main() {
    // `cargo test` passes harness flags such as `--nocapture`; none apply here.
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let want = |id: usize| only.as_ref().is_none_or(|o| o.contains(&id));
    if std::env::args().any(|a| a == "--list") {
        return;
    }

    let mut v = Verdicts { failed: 0 };
    if want(1) {
        criterion_1(&mut v);
    }
    if want(2) {
        criterion_2(&mut v);
    }
    if want(3) {
        criterion_3(&mut v);
    }
    if want(4) {
        criterion_4(&mut v);
    }
    if want(5) {
        criterion_5(&mut v);
    }
    let se = if want(6) { criterion_6(&mut v) } else { None };
    if want(7) {
        criterion_7(&mut v, se);
    }
    if want(8) {
        criterion_8(&mut v);
    }
    if v.failed > 0 {
        println!("{} acceptance criteria failed", v.failed);
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
