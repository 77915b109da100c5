//! Drives the language-model bridge against a local stub endpoint, records
//! the transcript, then replays it offline and checks that the search tree
//! comes out identical.

use std::sync::Arc;

use affordplan::blocksim::{init_state, BlocksWorld, TaskConfig};
use affordplan::llm_bridge::{
    stub::{simulator_handler, StubServer},
    CompletionSource, EndpointConfig, HttpCompletion, LlmAffordance, LlmWorld, PromptTemplate, RecordingSource,
    ReplaySource,
};
use affordplan::mc_search::{run_search, SearchConfig};
use affordplan::seeding::rng_from_seed;

fn search_hash(source: Arc<dyn CompletionSource>, task: &TaskConfig) -> Result<String, Box<dyn std::error::Error>> {
    let world = BlocksWorld::from_config(task);
    let model = LlmWorld::new(source.clone(), PromptTemplate::default());
    let aff = LlmAffordance::new(source, PromptTemplate::default(), world);
    let state = init_state(task)?;
    let out = run_search(&world, &state, &model, &aff, &SearchConfig::partial(), &mut rng_from_seed(5));
    println!(
        "  best action: {}, {} model calls, {} parse failures",
        out.best_action.map(|a| a.to_string()).unwrap_or_default(),
        out.metrics.model_calls,
        model.stats().parse_failures
    );
    Ok(out.tree.structural_hash())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let task = TaskConfig::with_blocks(3, 2);
    // The stub answers like a perfect model, using the simulator.
    let server = StubServer::start(simulator_handler(BlocksWorld::from_config(&task)));
    std::env::set_var("AFFORDPLAN_LLM_TOKEN", "local-stub");
    let endpoint = EndpointConfig {
        base_url: server.url(),
        ..EndpointConfig::default()
    };
    let transcript = std::env::temp_dir().join(format!("affordplan-transcript-{}.jsonl", std::process::id()));

    println!("live against {}", server.url());
    let live = RecordingSource::create(HttpCompletion::new(endpoint)?, &transcript)?;
    let recorded = search_hash(Arc::new(live), &task)?;
    println!("  {} requests served", server.request_count());
    drop(server);

    println!("replaying {}", transcript.display());
    let replay = ReplaySource::load(&transcript)?;
    let replayed = search_hash(Arc::new(replay), &task)?;
    std::fs::remove_file(&transcript)?;

    println!("tree hash {recorded} / {replayed}: {}", if recorded == replayed { "identical" } else { "DIFFERENT" });
    Ok(())
}
