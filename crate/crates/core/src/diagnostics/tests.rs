use ndarray::array;

use super::tabular::{ChainMdp, ChainOracle};
use super::*;
use crate::agent::{Actor, AgentConfig};
use crate::envs::point_mass::{DAMPING, GOAL};

/// Point-mass actor whose deterministic action is always `tanh(mean)`.
fn constant_agent(mean: [f64; 2]) -> SacAgent {
    let cfg = AgentConfig {
        actor_hidden: vec![4],
        critic_hidden: vec![4],
        ..AgentConfig::default()
    };
    let mut agent = SacAgent::new(cfg, 4, 2, &mut RngStream::new(0, "init")).unwrap();
    let mut actor = Actor::new(4, 2, &[4], &mut RngStream::new(1, "init")).unwrap();
    for layer in &mut actor.net.layers {
        layer.weight.fill(0.0);
        layer.bias.fill(0.0);
    }
    actor.net.layers[1].bias = array![mean[0], mean[1], -30.0, -30.0];
    agent.actor = actor;
    agent
}

/// Independent point-mass integration with a fixed force.
fn hand_return(start: [f64; 2], force: [f64; 2], steps: usize) -> f64 {
    let dt = 0.05;
    let (mut p, mut v) = (start, [0.0, 0.0]);
    let mut total = 0.0;
    for _ in 0..steps {
        for k in 0..2 {
            let v_next = v[k] + dt * (force[k] - DAMPING * v[k]);
            let p_next = p[k] + dt * v_next;
            if (0.0..=1.0).contains(&p_next) {
                p[k] = p_next;
                v[k] = v_next;
            } else {
                p[k] = p_next.clamp(0.0, 1.0);
                v[k] = 0.0;
            }
        }
        total -= ((p[0] - GOAL[0]).powi(2) + (p[1] - GOAL[1]).powi(2)).sqrt();
    }
    total
}

#[test]
fn evaluation_matches_hand_simulation() {
    let agent = constant_agent([0.4, -1.1]);
    let env = Env::from_name("pointmass").unwrap();
    let mut rng = RngStream::new(3, "eval");
    let mut probe = rng.clone();
    let start = [probe.uniform(), probe.uniform()];
    let (mean, std) = evaluate_policy(&agent, &env, 1, &mut rng).unwrap();
    let expect = hand_return(start, [0.4f64.tanh(), (-1.1f64).tanh()], 150);
    assert!((mean - expect).abs() < 1e-12, "{mean} vs {expect}");
    assert_eq!(std, 0.0);
}

#[test]
fn evaluation_is_deterministic_and_pure() {
    let env = Env::from_name("pendulum").unwrap();
    let cfg = AgentConfig {
        actor_hidden: vec![8],
        critic_hidden: vec![8],
        ..AgentConfig::default()
    };
    let agent = SacAgent::new(cfg, 3, 1, &mut RngStream::new(5, "init")).unwrap();
    let actor_hash = agent.actor.net.digest();
    let critics = agent.critics.clone();
    let a = evaluate_policy(&agent, &env, 3, &mut RngStream::new(9, "eval")).unwrap();
    let b = evaluate_policy(&agent, &env, 3, &mut RngStream::new(9, "eval")).unwrap();
    assert_eq!(a, b);
    assert!(a.1 > 0.0);
    let est = estimate_bias(&agent, &env, 3, bias_horizon(0.99), 0.99, &mut RngStream::new(9, "bias")).unwrap();
    assert!(est.mean_bias.is_finite());
    assert_eq!(agent.actor.net.digest(), actor_hash);
    assert_eq!(agent.critics, critics);
    assert!(evaluate_policy(&agent, &env, 0, &mut RngStream::new(9, "eval")).is_err());
}

#[test]
fn horizon_rule() {
    assert_eq!(bias_horizon(0.99), 688);
    assert_eq!(bias_horizon(0.9), 66);
    let oracle = ChainOracle::new(0.9);
    let err = estimate_bias(&oracle, &ChainMdp, 10, 65, 0.9, &mut RngStream::new(0, "bias"));
    assert!(matches!(err, Err(Error::Config(_))));
}

#[test]
fn exact_critic_has_no_bias() {
    let gamma = 0.9;
    let oracle = ChainOracle::new(gamma);
    let est = estimate_bias(&oracle, &ChainMdp, 2_000, bias_horizon(gamma), gamma, &mut RngStream::new(1, "bias")).unwrap();
    assert!(est.normalized_mean.abs() < 0.02, "{est:?}");
    assert!(est.mean_bias.abs() < 3.0 * est.standard_error(), "{est:?}");
}

#[test]
fn constant_offset_is_recovered() {
    let gamma = 0.9;
    let oracle = ChainOracle { offset: 0.7, ..ChainOracle::new(gamma) };
    let est = estimate_bias(&oracle, &ChainMdp, 2_000, bias_horizon(gamma), gamma, &mut RngStream::new(2, "bias")).unwrap();
    assert!((est.mean_bias - 0.7).abs() < 3.0 * est.standard_error(), "{est:?}");
}

#[test]
fn doubling_points_shrinks_error_by_root_two() {
    let gamma = 0.9;
    let oracle = ChainOracle::new(gamma);
    let h = bias_horizon(gamma);
    let trials = 400;
    let spread = |n: usize, label: &str| {
        let means: Vec<f64> = (0..trials)
            .map(|t| estimate_bias(&oracle, &ChainMdp, n, h, gamma, &mut RngStream::new(t, label)).unwrap().mean_bias)
            .collect();
        mean_and_std(&means, 1.0).1
    };
    let ratio = spread(20, "small") / spread(40, "large");
    assert!((1.25..=1.6).contains(&ratio), "ratio {ratio}");
}
