use proptest::prelude::*;

use affordplan::blocksim::{init_state, parse_state_text, serialize_state_text, BlocksWorld, State, TaskConfig, TERMINAL_REWARD};
use affordplan::intent_sampler::{
    adaptive_epsilon, intent_prob, IntentUniverse, SamplerParams, SamplingMode, SequenceTask, SuccessHistogram,
    TaskPredicate,
};
use affordplan::mc_search::{run_search, SearchConfig};
use affordplan::model_iface::{
    noisy_affordance, noisy_world, oracle_affordance, oracle_world, AffordanceModel, NoisyAffordanceParams,
    NoisyWorldParams, WorldModel,
};
use affordplan::seeding::rng_from_seed;
use affordplan::wm_extract::{binom_cdf_all, binom_pmf_all, fit_step};

fn task() -> impl Strategy<Value = (TaskConfig, State)> {
    (3usize..=7, any::<u64>()).prop_map(|(blocks, seed)| {
        let cfg = TaskConfig::with_blocks(blocks, seed);
        let state = init_state(&cfg).unwrap();
        (cfg, state)
    })
}

fn step_error(f: &[u8], k_hat: u64) -> u64 {
    f.iter()
        .enumerate()
        .map(|(i, &v)| {
            let predicted = u8::from(((i + 1) as u64) < k_hat);
            u64::from(predicted != v)
        })
        .sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn transitions_keep_every_block_in_bounds((cfg, state) in task(), pick in any::<prop::sample::Index>()) {
        let world = BlocksWorld::from_config(&cfg);
        let actions = world.candidate_actions(&state);
        let action = actions[pick.index(actions.len())];
        let next = world.transition(&state, &action).next_state;
        prop_assert_eq!(next.len(), state.len());
        prop_assert!(next.blocks().iter().all(|b| cfg.bounds().contains(b.pos)));
        let mut before: Vec<_> = state.colors().collect();
        let mut after: Vec<_> = next.colors().collect();
        before.sort();
        after.sort();
        prop_assert_eq!(before, after);
    }

    #[test]
    fn state_text_round_trips((_, state) in task()) {
        let text = serialize_state_text(&state);
        prop_assert_eq!(parse_state_text(&text).unwrap(), state);
    }

    #[test]
    fn reward_is_capped_by_the_terminal_value((cfg, state) in task()) {
        let world = BlocksWorld::from_config(&cfg);
        let r = world.reward(&state);
        prop_assert!(r <= TERMINAL_REWARD);
        prop_assert_eq!(world.is_terminal(&state), r == TERMINAL_REWARD);
        if r < TERMINAL_REWARD {
            prop_assert!(r > -1.0 && r <= 0.0);
        }
    }

    #[test]
    fn oracle_affordances_are_a_bounded_subset((cfg, state) in task(), m in 0usize..20) {
        let world = BlocksWorld::from_config(&cfg);
        let afforded = oracle_affordance(world).afforded(&state, m);
        let candidates = world.candidate_actions(&state);
        prop_assert!(afforded.len() <= m);
        prop_assert!(afforded.iter().all(|a| candidates.contains(a)));
        prop_assert!(afforded.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn degenerate_noise_reproduces_the_oracles((cfg, state) in task(), seed in any::<u64>()) {
        let world = BlocksWorld::from_config(&cfg);
        let clean = noisy_world(world, NoisyWorldParams { corruption_rate: 0.0, seed }).unwrap();
        let perfect = noisy_affordance(world, NoisyAffordanceParams { accuracy: 1.0, drop_rate: 0.5, spurious_rate: 0.5, seed }).unwrap();
        let oracle = oracle_world(world);
        for a in world.candidate_actions(&state).iter().take(10) {
            prop_assert_eq!(clean.predict_next(&state, a), oracle.predict_next(&state, a));
        }
        prop_assert_eq!(perfect.afforded(&state, 8), oracle_affordance(world).afforded(&state, 8));
    }

    #[test]
    fn partial_search_never_branches_wider((cfg, state) in task(), seed in any::<u64>()) {
        let world = BlocksWorld::from_config(&cfg);
        let (model, aff) = (oracle_world(world), oracle_affordance(world));
        let branching = |config: SearchConfig| {
            run_search(&world, &state, &model, &aff, &config, &mut rng_from_seed(seed)).tree.root_branching()
        };
        prop_assert!(branching(SearchConfig::partial()) <= branching(SearchConfig::full()));
    }

    #[test]
    fn search_is_a_function_of_its_seed((cfg, state) in task(), seed in any::<u64>()) {
        let world = BlocksWorld::from_config(&cfg);
        let model = noisy_world(world, NoisyWorldParams { corruption_rate: 0.3, seed }).unwrap();
        let aff = oracle_affordance(world);
        let hash = || {
            run_search(&world, &state, &model, &aff, &SearchConfig::partial(), &mut rng_from_seed(seed)).tree.structural_hash()
        };
        prop_assert_eq!(hash(), hash());
    }

    #[test]
    fn corrected_model_is_normalized(n in 2usize..30, k_frac in 0.0f64..1.0, eps in 0.0f64..=1.0) {
        let k = 1 + ((n - 1) as f64 * k_frac) as usize % (n - 1);
        let u = IntentUniverse::prefix(n, k).unwrap();
        let params = SamplerParams::corrected(1, eps);
        let total: f64 = (0..n).map(|i| intent_prob(&u, i, &params).unwrap()).sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn adaptive_success_lies_between_its_components(target in prop::collection::vec(0usize..5, 1..=3), k in 1usize..5) {
        let length = target.len();
        let u = IntentUniverse::prefix(5, k).unwrap();
        let task = SequenceTask::new("t", TaskPredicate::Exact(target));
        let hist = SuccessHistogram::build(&task, &u, length).unwrap();
        let parts: Vec<f64> = (0..=2 * length + 2).map(|m| hist.corrected(adaptive_epsilon(m, length))).collect();
        let lo = parts.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = parts.iter().cloned().fold(0.0, f64::max);
        let ada = hist.prob(&SamplerParams::new(SamplingMode::Adaptive, length));
        prop_assert!(ada >= lo - 1e-15 && ada <= hi + 1e-15);
    }

    #[test]
    fn binomial_tables_are_distributions(n in 0u64..300, p in 0.0f64..=1.0) {
        let pmf = binom_pmf_all(n, p).unwrap();
        let cdf = binom_cdf_all(n, p).unwrap();
        prop_assert!((pmf.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(cdf.windows(2).all(|w| w[1] >= w[0] - 1e-15));
        prop_assert!((cdf[n as usize] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn step_fit_is_optimal(f in prop::collection::vec(0u8..=1, 1..60)) {
        let (k_hat, err) = fit_step(&f);
        prop_assert_eq!(step_error(&f, k_hat), err);
        let n = f.len() as u64;
        let best = (0..=n).map(|k| step_error(&f, k)).min().unwrap();
        prop_assert_eq!(err, best);
    }

    #[test]
    fn clean_steps_fit_exactly(n in 2usize..60, ones_frac in 0.0f64..1.0) {
        let ones = 1 + ((n - 1) as f64 * ones_frac) as usize % (n - 1);
        let f: Vec<u8> = (0..n).map(|i| u8::from(i < ones)).collect();
        prop_assert_eq!(fit_step(&f), (ones as u64 + 1, 0));
    }
}
