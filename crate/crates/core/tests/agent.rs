mod common;

use proptest::prelude::*;

use ispforge_core::agent::{mean_entropy, Agent, AgentConfig};
use ispforge_core::env::{train, TrainConfig};
use ispforge_core::features::ExtractorConfig;
use ispforge_core::nn::Tensor;
use ispforge_core::tools::ToolRegistry;

fn agent(seed: u64) -> Agent {
    let cfg = AgentConfig {
        hidden: 32,
        seed,
        ..AgentConfig::default()
    };
    Agent::new(cfg, 10, 7).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn policy_is_a_distribution(state in prop::collection::vec(-5.0f32..5.0, 10), seed in 0u64..20) {
        let p = agent(seed).probabilities(&state).unwrap();
        prop_assert_eq!(p.len(), 7);
        prop_assert!((p.iter().map(|&v| v as f64).sum::<f64>() - 1.0).abs() <= 1e-6);
        prop_assert!(p.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn soft_q_is_below_both_heads(state in prop::collection::vec(-5.0f32..5.0, 10), seed in 0u64..20) {
        let a = agent(seed);
        let q = a.q_value(&state).unwrap();
        let x = Tensor::new(&[1, 10], state.clone()).unwrap();
        let [q1, q2, _, _] = a.critics();
        let (h1, h2) = (q1.forward(&x).unwrap(), q2.forward(&x).unwrap());
        for i in 0..7 {
            prop_assert!(q[i] <= h1.data()[i] && q[i] <= h2.data()[i]);
        }
    }

    #[test]
    fn entropy_is_bounded(logits in prop::collection::vec(-30.0f64..30.0, 2..10)) {
        let n = logits.len();
        let h = mean_entropy(&Tensor::new(&[1, n], logits).unwrap());
        prop_assert!(h >= -1e-12 && h <= (n as f64).ln() + 1e-12);
    }
}

#[test]
fn training_is_bit_reproducible() {
    let run = || {
        let env = common::bandit_env(common::bandit_images(1, 20));
        let cfg = AgentConfig {
            hidden: 32,
            batch_size: 16,
            seed: 3,
            ..AgentConfig::default()
        };
        let mut a = Agent::new(cfg, env.extractor().feature_len(), env.action_count()).unwrap();
        let log = train(&env, &mut a, &TrainConfig { steps: 150, warmup: 50, log_every: 25 }, 8).unwrap();
        let ck = a.to_checkpoint(&ToolRegistry::brightness_only(), &ExtractorConfig::default()).unwrap();
        (ck.to_bytes().unwrap(), log.to_jsonl())
    };
    assert_eq!(run(), run());
}

#[test]
fn high_temperature_policy_is_near_uniform() {
    let (h, max) = common::zero_reward_entropy(10.0, 2000, 64);
    assert!((max - h).abs() <= 0.05, "entropy {h} vs log|A| {max}");
}
