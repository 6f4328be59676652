//! The closed-loop simulation: plant, demonstrator and all three estimators
//! on one fixed-step clock.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::irl_engine::{EstimateTag, RewardEstimate};
use crate::linalg::matrix_to_rows;
use crate::param_estimator::ThetaEstimate;
use crate::policy_estimator::PolicyEstimate;

use super::config::{Scenario, ScenarioConfig};
use super::metrics::MetricsRecord;
use super::report::{distance, matrix_distance, FinalEstimates, GainResets, GroundTruth};

/// CSV dumps of the three history stacks at the end of a run.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StackDumps {
    pub theta: String,
    pub policy: String,
    pub irl: String,
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub records: Vec<MetricsRecord>,
    pub estimates: FinalEstimates,
    pub truth: GroundTruth,
    pub stacks: Option<StackDumps>,
}

#[derive(Default)]
struct Flags {
    purged: bool,
    theta_reset: bool,
    policy_reset: bool,
    irl_reset: bool,
}

struct Loop<'a> {
    sc: &'a Scenario,
    theta: ThetaEstimate,
    policy: PolicyEstimate,
    irl: RewardEstimate,
    irl_active: bool,
}

fn rows_of(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

impl Loop<'_> {
    fn record(&self, t: f64, e: &DVector<f64>, flags: &Flags) -> MetricsRecord {
        let truth = &self.sc.truth;
        let nan = f64::NAN;
        let theta_error = matrix_distance(&matrix_to_rows(self.theta.theta_hat()), &truth.theta)
            .unwrap_or(nan);
        let policy_error = truth
            .policy_weights
            .as_ref()
            .and_then(|w| matrix_distance(&matrix_to_rows(self.policy.weights()), w))
            .unwrap_or(nan);
        let part = |truth: &Option<Vec<f64>>, est: DVector<f64>| {
            truth
                .as_ref()
                .and_then(|w| distance(&rows_of(&est), w))
                .unwrap_or(nan)
        };
        let weight_error = truth
            .irl_weights()
            .and_then(|w| distance(&rows_of(&self.irl.w_hat()), &w))
            .unwrap_or(nan);
        MetricsRecord {
            t,
            tracking_error: e.norm(),
            theta_error,
            policy_error,
            value_error: part(&truth.value_weights, self.irl.value_weights()),
            reward_error: part(&truth.reward_weights, self.irl.reward_weights()),
            control_error: part(&truth.control_weights, self.irl.control_weights()),
            weight_error,
            theta_stack_min_eig: self.theta.stack().rank_metric(),
            policy_stack_min_eig: self.policy.stack().rank_metric(),
            irl_stack_min_eig: self.irl.stack().rank_metric(),
            policy_gain_min_eig: self.policy.gain().min_eigenvalue(),
            theta_generation: self.theta.generation(),
            policy_generation: self.policy.generation(),
            irl_active: self.irl_active,
            purged: flags.purged,
            theta_gain_reset: flags.theta_reset,
            policy_gain_reset: flags.policy_reset,
            irl_gain_reset: flags.irl_reset,
        }
    }

    fn estimates(&self) -> FinalEstimates {
        FinalEstimates {
            theta_hat: matrix_to_rows(self.theta.theta_hat()),
            policy_weights: matrix_to_rows(self.policy.weights()),
            value_weights: rows_of(&self.irl.value_weights()),
            reward_weights: rows_of(&self.irl.reward_weights()),
            control_weights: rows_of(&self.irl.control_weights()),
            r1: self.irl.r1(),
            theta_generation: self.theta.generation(),
            policy_generation: self.policy.generation(),
            purge_times: self.irl.purge_times().to_vec(),
            gain_resets: GainResets {
                theta: self.theta.gain().resets(),
                policy: self.policy.gain().resets(),
                irl: self.irl.gain().resets(),
            },
        }
    }

    fn dumps(&self) -> StackDumps {
        let csv = |f: &dyn Fn(&mut Vec<u8>) -> std::io::Result<()>| {
            let mut buf = Vec::new();
            f(&mut buf).expect("writing to memory cannot fail");
            String::from_utf8(buf).expect("CSV is ASCII")
        };
        StackDumps {
            theta: csv(&|b| self.theta.stack().write_csv(b)),
            policy: csv(&|b| self.policy.stack().write_csv(b)),
            irl: csv(&|b| self.irl.stack().write_csv(b)),
        }
    }
}

/// Demonstrator control `u = u_d + μ*` with `μ* = −K e`.
pub fn demonstrator_control(
    sc: &Scenario,
    x: &DVector<f64>,
    x_d: &DVector<f64>,
) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
    let e = x - x_d;
    let mu = -(&sc.demonstrator * &e);
    let u = sc.tracking.feedforward(x_d) + &mu;
    (e, mu, u)
}

/// Runs the scenario for `duration / dt` steps and returns one record per
/// step boundary (including `t = 0`), or no records for a zero duration.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunOutput> {
    let sc = cfg.build()?;
    let plant = &sc.tracking.plant;
    let dt = cfg.dt;
    let steps = (cfg.duration / dt).round() as usize;
    let query_every = ((cfg.irl.query_period / dt).round() as usize).max(1);

    let mut lp = Loop {
        theta: ThetaEstimate::new(plant, &cfg.theta_estimator, cfg.gain_limits, dt)?,
        policy: PolicyEstimate::new(
            sc.basis.policy.clone(),
            plant.input_dim(),
            &cfg.policy_estimator,
            cfg.gain_limits,
        ),
        irl: RewardEstimate::new(sc.basis.clone(), &cfg.irl, cfg.gain_limits, cfg.seed, 0.0)?,
        irl_active: false,
        sc: &sc,
    };

    let mut records = Vec::with_capacity(if steps == 0 { 0 } else { steps + 1 });
    let mut x = sc.x0.clone();
    let mut x_d = sc.xd0.clone();
    let mut flags = Flags::default();

    if steps > 0 {
        for k in 0..=steps {
            let t = k as f64 * dt;
            let (e, mu, u) = demonstrator_control(&sc, &x, &x_d);
            records.push(lp.record(t, &e, &flags));
            if k == steps {
                break;
            }
            let diverged = |err: Error, records: &Vec<MetricsRecord>| match err {
                Error::NonFinite(_) | Error::Divergence { .. } => Error::Divergence {
                    t,
                    state: x.iter().copied().collect(),
                    last_record: Some(records.len() - 1),
                },
                other => other,
            };
            flags = step(&mut lp, cfg, k, query_every, t, &x, &u, &e, &mu)
                .map_err(|err| diverged(err, &records))?;
            x = plant
                .step_rk4(&x, &u, dt, t)
                .map_err(|err| diverged(err, &records))?;
            x_d = sc.tracking.step_reference(&x_d, dt);
        }
    }

    Ok(RunOutput {
        estimates: lp.estimates(),
        stacks: cfg.dump_stacks.then(|| lp.dumps()),
        records,
        truth: sc.truth.clone(),
    })
}

#[allow(clippy::too_many_arguments)]
fn step(
    lp: &mut Loop<'_>,
    cfg: &ScenarioConfig,
    k: usize,
    query_every: usize,
    t: f64,
    x: &DVector<f64>,
    u: &DVector<f64>,
    e: &DVector<f64>,
    mu: &DVector<f64>,
) -> Result<Flags> {
    let plant = &lp.sc.tracking.plant;
    let dt = cfg.dt;
    let mut flags = Flags::default();

    lp.theta.observe(plant, x, u, t)?;
    lp.policy.record_policy_sample(e, mu, t)?;

    lp.irl_active = lp.policy.is_full_rank() && lp.theta.generation() >= 1;
    if lp.irl_active && k.is_multiple_of(query_every) {
        let theta = lp.theta.snapshot();
        let current = EstimateTag {
            theta_generation: theta.generation,
            policy_generation: cfg.querying.then(|| lp.policy.generation()),
        };
        flags.purged = lp.irl.schedule_purge(t, &current);
        if cfg.querying {
            lp.irl
                .generate_query(plant, &lp.policy.snapshot(), &theta, t)?;
        } else {
            lp.irl.observe_sample(plant, e, mu, &theta, t)?;
        }
    }

    flags.theta_reset = lp.theta.update(dt)?.gain_reset;
    lp.policy.update_policy_weights(dt)?;
    flags.policy_reset = lp.policy.update_policy_gain(dt).gain_reset;
    if lp.irl_active {
        lp.irl.update_irl_weights(dt)?;
        flags.irl_reset = lp.irl.update_irl_gain(dt).gain_reset;
    }
    Ok(flags)
}

/// Both variants of one scenario: with and without querying.
pub fn run_ablation(cfg: &ScenarioConfig) -> Result<(RunOutput, RunOutput)> {
    let mut with = cfg.clone();
    with.querying = true;
    let mut without = cfg.clone();
    without.querying = false;
    Ok((run_scenario(&with)?, run_scenario(&without)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::metrics::write_csv;
    use nalgebra::DMatrix;

    fn short(duration: f64) -> ScenarioConfig {
        let mut c = ScenarioConfig::tracking_default();
        c.duration = duration;
        c
    }

    #[test]
    fn zero_duration_gives_empty_metrics_and_initial_estimates() {
        let out = run_scenario(&short(0.0)).unwrap();
        assert!(out.records.is_empty());
        assert!(out.estimates.policy_weights.concat().iter().all(|v| *v == 0.0));
        assert!(out.estimates.value_weights.iter().all(|v| *v == 0.0));
        assert!(out.estimates.theta_hat.concat().iter().all(|v| *v == 0.0));
        assert_eq!(out.estimates.theta_generation, 0);
    }

    #[test]
    fn record_count_and_time_grid() {
        let out = run_scenario(&short(2.0)).unwrap();
        assert_eq!(out.records.len(), 401);
        assert_eq!(out.records[0].t, 0.0);
        assert!((out.records[400].t - 2.0).abs() < 1e-12);
        assert!(out.records.windows(2).all(|w| w[1].t > w[0].t));
    }

    #[test]
    fn same_seed_same_bytes() {
        let csv = |c: &ScenarioConfig| {
            let mut buf = Vec::new();
            write_csv(&run_scenario(c).unwrap().records, &mut buf).unwrap();
            buf
        };
        let c = short(3.0);
        assert_eq!(csv(&c), csv(&c));
    }

    #[test]
    fn demonstrator_is_feedforward_plus_optimal_feedback() {
        let c = ScenarioConfig::tracking_default();
        let sc = c.build().unwrap();
        let k = sc.lqr.as_ref().unwrap().gain.clone();
        let x = DVector::from_vec(vec![0.3, -0.7]);
        let xd = DVector::from_vec(vec![1.0, 0.2]);
        let (e, mu, u) = demonstrator_control(&sc, &x, &xd);
        assert_eq!(e, &x - &xd);
        assert_eq!(mu, -(&k * &e));
        let ud = DMatrix::from_row_slice(1, 2, &[-1.5, 0.5]) * &xd;
        assert!((u - ud - mu).amax() < 1e-15);
    }

    #[test]
    fn divergence_reports_last_record() {
        // Anti-restoring cubic stiffness escapes to infinity in finite time.
        let mut c = short(5.0);
        c.plant = crate::harness::PlantSpec::Duffing {
            theta: vec![vec![0.0, 0.0], vec![0.0, 0.0], vec![0.0, 1.0], vec![0.0, 1.0]],
        };
        c.reference = None;
        c.demonstrator_gain = Some(vec![vec![0.0, 0.0]]);
        c.initial_state = vec![5.0, 0.0];
        match run_scenario(&c) {
            Err(Error::Divergence { last_record, .. }) => assert!(last_record.is_some()),
            other => panic!("expected divergence, got {:?}", other.map(|o| o.records.len())),
        }
    }

    #[test]
    fn stack_dumps_on_request() {
        let mut c = short(2.0);
        c.dump_stacks = true;
        let dumps = run_scenario(&c).unwrap().stacks.unwrap();
        assert!(dumps.theta.starts_with("entry,t,row"));
        assert!(dumps.theta.lines().count() > 1);
        assert!(run_scenario(&short(2.0)).unwrap().stacks.is_none());
    }
}
