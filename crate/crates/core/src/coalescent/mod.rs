//! Ordered partitions, merge-rate tables and exact coalescent simulation.

mod partition;
mod rates;
mod simulate;

pub use partition::OrderedPartition;
pub use rates::{binomial, rate_row, RateRow, RateTable};
pub use simulate::{
    block_count_path, simulate_block_count, simulate_coalescent, uniform_subset, BlockCountPath,
    CoalescentEvent, CoalescentPath, StopReason,
};
