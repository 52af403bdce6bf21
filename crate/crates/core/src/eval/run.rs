use std::collections::BTreeMap;
use std::sync::Arc;

use super::{record_for_budget, Agent, Budget, EpisodeRecord, EvalReport};
use crate::error::{Error, Result};
use crate::ppo::derive_seed;
use crate::scene::{Scene, SceneType};
use crate::sim::{Condition, EpisodeLog, EpisodeSampler, EpisodeSpec, GestureBank, NavEnv};

/// One finished episode plus the path length at each of its stops.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRun {
    pub log: EpisodeLog,
    pub scene_type: SceneType,
    pub path_at_stop: Vec<f64>,
}

impl EpisodeRun {
    pub fn record(&self, budget: Budget) -> EpisodeRecord {
        record_for_budget(&self.log, self.scene_type, budget, Some(&self.path_at_stop))
    }
}

/// Runs an episode with no stop limit. Scores for any finite budget follow
/// from the stop sequence, since truncating at the `k`-th stop does not
/// change the actions taken before it.
pub fn run_episode(
    spec: EpisodeSpec,
    bank: Arc<GestureBank>,
    agent: &mut dyn Agent,
    agent_seed: u64,
    episode_id: u64,
) -> Result<EpisodeRun> {
    run_episode_with_budget(spec, bank, agent, agent_seed, episode_id, Budget::Unlimited)
}

/// Runs an episode that also ends at the `k`-th ineligible stop.
pub fn run_episode_with_budget(
    spec: EpisodeSpec,
    bank: Arc<GestureBank>,
    agent: &mut dyn Agent,
    agent_seed: u64,
    episode_id: u64,
    budget: Budget,
) -> Result<EpisodeRun> {
    let scene_type = spec.scene.scene_type();
    let limit = budget.limit().unwrap_or(usize::MAX);
    let (mut env, mut obs) = NavEnv::reset(spec, bank)?;
    agent.reset(agent_seed);
    let mut path_at_stop = Vec::new();
    while !env.done() && env.stops().len() < limit {
        let action = agent.act(&env, &obs)?;
        let (next, out) = env.step(action)?;
        if out.stopped {
            path_at_stop.push(env.path_len_m());
        }
        obs = next;
    }
    Ok(EpisodeRun {
        log: env.episode_log(episode_id),
        scene_type,
        path_at_stop,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub episodes_per_scene: usize,
    pub budgets: Vec<Budget>,
    pub seed: u64,
    pub noise_sigma: f64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            episodes_per_scene: 250,
            budgets: Budget::STANDARD.to_vec(),
            seed: 0,
            noise_sigma: 0.05,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EvalRun {
    pub report: EvalReport,
    pub runs: Vec<EpisodeRun>,
}

impl EvalRun {
    pub fn logs(&self) -> impl Iterator<Item = &EpisodeLog> {
        self.runs.iter().map(|r| &r.log)
    }
}

/// Evaluation episode `j` of scene `i`. Depends only on the seed, the
/// scene and the condition's gesture channel, so every method sees the same
/// starts and targets.
pub fn eval_episodes(
    scenes: &[Arc<Scene>],
    condition: Condition,
    bank: &Arc<GestureBank>,
    opts: &EvalOptions,
) -> Result<Vec<EpisodeSpec>> {
    let mut specs = Vec::with_capacity(scenes.len() * opts.episodes_per_scene);
    for (i, scene) in scenes.iter().enumerate() {
        let mut sampler = EpisodeSampler::new(
            vec![scene.clone()],
            condition,
            bank.clone(),
            opts.noise_sigma,
            derive_seed(opts.seed, 10, i as u64),
        )?;
        for _ in 0..opts.episodes_per_scene {
            specs.push(sampler.sample_in(0)?);
        }
    }
    Ok(specs)
}

/// Runs every evaluation episode once and scores it under each budget.
pub fn evaluate(
    scenes: &[Arc<Scene>],
    condition: Condition,
    bank: &Arc<GestureBank>,
    agent: &mut dyn Agent,
    method: &str,
    opts: &EvalOptions,
) -> Result<EvalRun> {
    if opts.budgets.is_empty() || opts.episodes_per_scene == 0 {
        return Err(Error::EmptyInput);
    }
    let specs = eval_episodes(scenes, condition, bank, opts)?;
    let mut runs = Vec::with_capacity(specs.len());
    for (j, spec) in specs.into_iter().enumerate() {
        let seed = derive_seed(opts.seed, 11, j as u64);
        runs.push(run_episode(spec, bank.clone(), agent, seed, j as u64)?);
    }
    let by_budget: BTreeMap<Budget, Vec<EpisodeRecord>> = opts
        .budgets
        .iter()
        .map(|&b| (b, runs.iter().map(|r| r.record(b)).collect()))
        .collect();
    Ok(EvalRun {
        report: EvalReport::from_records(method, &by_budget)?,
        runs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{OracleAgent, RandomAgent};
    use crate::gesture::GestureAnatomy;
    use crate::scene::{generate_scene, SceneGenParams};

    fn scenes() -> Vec<Arc<Scene>> {
        (0..2)
            .map(|s| Arc::new(generate_scene(s, SceneType::Kitchen, &SceneGenParams::default()).unwrap()))
            .collect()
    }

    fn opts(n: usize) -> EvalOptions {
        EvalOptions {
            episodes_per_scene: n,
            ..Default::default()
        }
    }

    #[test]
    fn oracle_always_succeeds_on_shortest_path() {
        let bank = Arc::new(GestureBank::new(GestureAnatomy::from_seed(0)));
        let run = evaluate(&scenes(), Condition::Baseline, &bank, &mut OracleAgent::default(), "oracle", &opts(20)).unwrap();
        for r in &run.runs {
            assert!(r.log.success, "episode {}", r.log.episode_id);
            assert!((r.log.p_len_m - r.log.l_len_m).abs() < 1e-9);
        }
        let cell = run.report.get("all", "oracle", Budget::Stops(1)).unwrap();
        assert_eq!(cell.sr, 1.0);
        assert!((cell.spl - 1.0).abs() < 1e-12);
        assert_eq!(cell.n, 40);
    }

    #[test]
    fn budgets_are_monotone_and_match_truncated_runs() {
        let bank = Arc::new(GestureBank::new(GestureAnatomy::from_seed(0)));
        let o = opts(15);
        let run = evaluate(&scenes(), Condition::Intervention, &bank, &mut RandomAgent::default(), "random", &o).unwrap();
        let specs = eval_episodes(&scenes(), Condition::Intervention, &bank, &o).unwrap();
        let mut last = 0.0;
        for b in Budget::STANDARD {
            let sr = run.report.get("all", "random", b).unwrap().sr;
            assert!(sr >= last);
            last = sr;
            for (j, spec) in specs.iter().enumerate() {
                let seed = derive_seed(o.seed, 11, j as u64);
                let cut = run_episode_with_budget(spec.clone(), bank.clone(), &mut RandomAgent::default(), seed, j as u64, b).unwrap();
                let shared = run.runs[j].record(b);
                let direct = cut.record(Budget::Unlimited);
                assert_eq!(shared.success, direct.success);
                assert_eq!(shared.steps, direct.steps);
                assert_eq!(shared.stops_used, direct.stops_used);
                assert_eq!(shared.p_len_m, direct.p_len_m);
            }
        }
    }

    #[test]
    fn conditions_share_episode_starts() {
        let bank = Arc::new(GestureBank::new(GestureAnatomy::from_seed(0)));
        let o = opts(10);
        let a = eval_episodes(&scenes(), Condition::Baseline, &bank, &o).unwrap();
        let b = eval_episodes(&scenes(), Condition::Referencing, &bank, &o).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.start, y.start);
            assert_eq!(x.target_instance, y.target_instance);
        }
    }
}
