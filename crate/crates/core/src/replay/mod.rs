//! Shared experience storage with one proportional-priority sampler per
//! ensemble member.

mod memory;
mod sum_tree;

pub use memory::{
    importance_weights, read_jsonl, MultiStepSample, PriorityParams, ReplayMemory, Transition, TransitionRecord,
};
pub use sum_tree::SumTree;
