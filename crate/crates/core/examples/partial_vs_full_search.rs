//! Plans the same tasks with a corrupted world model twice: once searching
//! every candidate action, once restricted to the afforded ones.

use affordplan::blocksim::{init_state, BlocksWorld, TaskConfig};
use affordplan::mc_search::{evaluate_online, SearchConfig};
use affordplan::model_iface::{noisy_world, oracle_affordance, NoisyWorldParams, WorldModel};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let blocks = 5;
    println!("{blocks} blocks, noisy model (30% corrupted predictions)");
    println!("{:>4} {:>14} {:>14} {:>10} {:>10}", "seed", "full steps", "partial steps", "full calls", "part calls");
    for seed in 0..8 {
        let task = TaskConfig::with_blocks(blocks, seed);
        let world = BlocksWorld::from_config(&task);
        let start = init_state(&task)?;
        let aff = oracle_affordance(world);
        let mut row = Vec::new();
        for config in [SearchConfig::full(), SearchConfig::partial()] {
            let model = noisy_world(world, NoisyWorldParams { corruption_rate: 0.3, seed })?;
            let config = SearchConfig { rollout_seed: seed, ..config };
            let run = evaluate_online(&world, &start, &model, &aff, &config, task.max_steps);
            row.push((run.report.steps_to_completion.to_string(), model.call_count()));
        }
        println!("{seed:>4} {:>14} {:>14} {:>10} {:>10}", row[0].0, row[1].0, row[0].1, row[1].1);
    }
    Ok(())
}
