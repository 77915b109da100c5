//! A short tour of the tabletop simulator: a seeded scene, its candidate
//! actions, the afforded subset and a few executed moves.

use affordplan::blocksim::{init_state, serialize_state_text, BlocksWorld, TaskConfig};
use affordplan::model_iface::{oracle_affordance, AffordanceModel};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let task = TaskConfig::with_blocks(4, 11);
    let world = BlocksWorld::from_config(&task);
    let mut state = init_state(&task)?;
    print!("{}", serialize_state_text(&state));
    println!("reward {:.3}", world.reward(&state));

    let candidates = world.candidate_actions(&state);
    let afforded = oracle_affordance(world).afforded(&state, 6);
    println!("{} candidate actions, {} afforded:", candidates.len(), afforded.len());
    for a in &afforded {
        println!("  {a}");
    }

    for action in afforded.iter().take(3) {
        let step = world.transition(&state, action);
        println!("{action} -> reward {:.3}", step.reward);
        state = step.next_state;
    }
    print!("{}", serialize_state_text(&state));
    Ok(())
}
