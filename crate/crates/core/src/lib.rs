pub mod blocksim;
pub mod seeding;
pub mod model_iface;
pub mod mc_search;
pub mod intent_sampler;
pub mod wm_extract;
pub mod llm_bridge;
pub mod harness;
