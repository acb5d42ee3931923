mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use ispforge_core::agent::{ActionMode, Agent, AgentConfig};
use ispforge_core::env::{
    blob_detector_oracle, evaluate, evaluate_with, noise_coupled_depth_oracle, Env, EnvConfig, StartConfig,
    DEFAULT_DEPTH_COUPLING,
};
use ispforge_core::features::{ExtractorConfig, FeatureExtractor};
use ispforge_core::image::ImageRgb;
use ispforge_core::tools::{ToolRegistry, Toolbox};
use ispforge_core::Error;

#[test]
fn rewards_telescope_over_random_rollouts() {
    let gap = common::telescoping_gap(300, 17);
    assert!(gap <= 1e-6, "worst gap {gap:e}");
}

#[test]
fn episodes_respect_horizon_and_stay_done() {
    let env = &common::telescoping_envs()[0];
    let last = env.action_count() - 2;
    let (_, mut ep) = env.reset(4).unwrap();
    let mut steps = 0;
    while !ep.done {
        env.step(&mut ep, last).unwrap();
        steps += 1;
    }
    assert_eq!(steps, env.config().max_steps);
    assert_eq!(ep.trace.len(), env.config().max_steps);
    assert!(matches!(env.step(&mut ep, 0), Err(Error::EpisodeFinished)));
    assert!(ep.done);
}

#[test]
fn stop_only_policy_returns_the_input() {
    let mut samples = common::scenes(4, 16, 16, 2);
    for s in &mut samples {
        s.input = Some(s.clean.map(|v| v * 0.8));
    }
    let cfg = EnvConfig {
        start: StartConfig::Given,
        ..Default::default()
    };
    let tb = Toolbox::traditional(ToolRegistry::traditional_only()).unwrap();
    let stop = tb.registry().stop_action();
    let env = Env::new(cfg, tb, FeatureExtractor::new(ExtractorConfig::default()).unwrap(), samples).unwrap();
    let (report, eps) = evaluate_with(&env, 0, &mut |_| Ok(stop)).unwrap();
    for (ep, s) in eps.iter().zip(env.samples()) {
        assert_eq!(&ep.current, s.input.as_ref().unwrap());
        assert_eq!(ep.trace.len(), 1);
        assert_eq!(ep.trace[0].tool, "stop");
        assert_eq!(ep.total_reward(), 0.0);
    }
    assert_eq!(report.mean_initial, report.mean_final);
}

#[test]
fn exhaustive_oracle_bounds_greedy_returns() {
    let env = common::bandit_env(common::bandit_images(3, 30));
    let agent = Agent::new(AgentConfig::default(), env.extractor().feature_len(), env.action_count()).unwrap();
    let (_, eps) = evaluate(&env, &agent, 1, 2).unwrap();
    let scale = env.config().reward.scale;
    for ep in &eps {
        let bound = scale * common::exhaustive_gain(&env, ep.sample, ep.seed);
        assert!(ep.total_reward() <= bound + 1e-9, "{} > {bound}", ep.total_reward());
    }
}

#[test]
fn evaluation_ignores_thread_count() {
    let env = &common::telescoping_envs()[0];
    let agent = Agent::new(AgentConfig::default(), env.extractor().feature_len(), env.action_count()).unwrap();
    let (a, _) = evaluate(env, &agent, 5, 1).unwrap();
    let (b, _) = evaluate(env, &agent, 5, 3).unwrap();
    assert_eq!(a, b);
}

#[test]
fn greedy_selection_is_deterministic() {
    let env = &common::telescoping_envs()[0];
    let agent = Agent::new(AgentConfig::default(), env.extractor().feature_len(), env.action_count()).unwrap();
    let (s, _) = env.reset(2).unwrap();
    let mut r1 = ChaCha8Rng::seed_from_u64(0);
    let mut r2 = ChaCha8Rng::seed_from_u64(99);
    assert_eq!(
        agent.select_action(&s, ActionMode::Greedy, &mut r1).unwrap(),
        agent.select_action(&s, ActionMode::Greedy, &mut r2).unwrap()
    );
}

fn image() -> impl Strategy<Value = ImageRgb> {
    prop::collection::vec(0.0f32..=1.0, 16 * 16 * 3).prop_map(|d| ImageRgb::new(16, 16, d).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn task_oracles_are_pure(img in image(), seed: u64) {
        prop_assert_eq!(blob_detector_oracle(&img), blob_detector_oracle(&img));
        let gt = common::scenes(1, 16, 16, 0)[0].depth.clone().unwrap();
        prop_assert_eq!(
            noise_coupled_depth_oracle(&img, &gt, DEFAULT_DEPTH_COUPLING, seed),
            noise_coupled_depth_oracle(&img, &gt, DEFAULT_DEPTH_COUPLING, seed)
        );
    }

    #[test]
    fn start_images_are_pure(sample in 0usize..6, seed: u64) {
        for env in common::telescoping_envs().iter().take(2) {
            prop_assert_eq!(env.start_image(sample, seed).unwrap(), env.start_image(sample, seed).unwrap());
        }
    }
}
