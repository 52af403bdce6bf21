//! Property tests over random scenes, episodes and action sequences.

use std::sync::Arc;

use gestnav::eval::{record_for_budget, spl, success_rate, Budget};
use gestnav::gesture::GestureAnatomy;
use gestnav::scene::{generate_scene, SceneGenParams, SceneType};
use gestnav::sim::{
    is_cell_center, replay, Action, Condition, EpisodeSampler, GestureBank, NavEnv, MAX_STEPS, NUM_HEADINGS,
    REWARD_BAD_STOP, REWARD_COLLISION, REWARD_SUCCESS, REWARD_TIME,
};
use proptest::prelude::*;

fn run(scene_seed: u64, ty: usize, cond: usize, seed: u64, actions: &[u8]) -> (NavEnv, Vec<f64>) {
    let scene = Arc::new(generate_scene(scene_seed, SceneType::ALL[ty], &SceneGenParams::default()).unwrap());
    let bank = Arc::new(GestureBank::new(GestureAnatomy::from_seed(seed % 3)));
    let mut sampler = EpisodeSampler::new(vec![scene.clone()], Condition::ALL[cond], bank.clone(), 0.05, seed).unwrap();
    let (mut env, _) = NavEnv::reset(sampler.sample().unwrap(), bank).unwrap();
    let mut rewards = Vec::new();
    for &a in actions.iter().cycle() {
        if env.done() {
            break;
        }
        let (_, out) = env.step(Action::from_index(a as usize).unwrap()).unwrap();
        rewards.push(out.reward);
        let pose = env.pose();
        assert!(scene.is_free(pose.cell), "pose left free space");
        assert!(pose.heading < NUM_HEADINGS);
        assert!(is_cell_center(pose.position()));
        assert!(env.steps() <= MAX_STEPS);
    }
    (env, rewards)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pose_closure_and_reward_accounting(
        scene_seed in 0u64..30,
        ty in 0usize..4,
        cond in 0usize..3,
        seed in any::<u64>(),
        actions in prop::collection::vec(0u8..4, 1..40),
    ) {
        let (env, rewards) = run(scene_seed, ty, cond, seed, &actions);
        prop_assert!(env.done());
        let bad_stops = env.stops().iter().filter(|s| !s.eligible).count() as f64;
        let want = if env.success() { REWARD_SUCCESS } else { 0.0 }
            + REWARD_TIME * env.steps() as f64
            + REWARD_COLLISION * env.collisions() as f64
            + REWARD_BAD_STOP * bad_stops;
        let got: f64 = rewards.iter().sum();
        prop_assert!((got - want).abs() < 1e-9, "sum {got} vs {want}");
        prop_assert!(env.stops().iter().filter(|s| s.eligible).count() <= 1);
        if env.success() {
            prop_assert!(env.stops().last().unwrap().eligible);
            prop_assert!(env.path_len_m() + 1e-9 >= env.l_len_m());
        }
        let log = env.episode_log(0);
        let again = replay(env.scene(), &log).unwrap();
        prop_assert_eq!(again.rewards, log.rewards);
    }

    #[test]
    fn budgets_nest_and_spl_bounded_by_sr(
        episodes in prop::collection::vec((0u64..30, any::<u64>(), prop::collection::vec(0u8..4, 1..12)), 1..8),
    ) {
        let logs: Vec<_> = episodes
            .iter()
            .map(|(scene_seed, seed, actions)| {
                let (env, _) = run(*scene_seed, 0, 0, *seed, actions);
                env.episode_log(0)
            })
            .collect();
        let mut last = (0.0, 0.0);
        for b in Budget::STANDARD {
            let recs: Vec<_> = logs.iter().map(|l| record_for_budget(l, SceneType::Kitchen, b, None)).collect();
            let (sr, s) = (success_rate(&recs).unwrap(), spl(&recs).unwrap());
            prop_assert!(s <= sr + 1e-15);
            prop_assert!(sr >= last.0 && s >= last.1);
            last = (sr, s);
        }
    }
}
