use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use super::{OrderedPartition, RateTable};
use crate::error::{Error, Result};
use crate::streams::{Role, Stream, StreamKey};

/// Why a simulated path ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    /// A single block remains (or the chain reached its target count).
    Absorbed,
    /// The next event would fall after the horizon.
    Horizon,
    /// `lambda_b = 0` with `b >= 2` blocks left; nothing further can happen.
    DegenerateRates,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoalescentEvent {
    pub time: f64,
    /// Positions (0-based, in the pre-event partition) of the merged blocks.
    pub merged: Vec<usize>,
    pub partition: OrderedPartition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoalescentPath {
    pub initial: OrderedPartition,
    pub events: Vec<CoalescentEvent>,
    pub horizon: f64,
    pub stop: StopReason,
}

impl CoalescentPath {
    /// Partition in force at time `t` (right-continuous).
    pub fn partition_at(&self, t: f64) -> &OrderedPartition {
        let i = self.events.partition_point(|e| e.time <= t);
        if i == 0 {
            &self.initial
        } else {
            &self.events[i - 1].partition
        }
    }

    pub fn final_partition(&self) -> &OrderedPartition {
        self.events.last().map_or(&self.initial, |e| &e.partition)
    }
}

/// Right-continuous step function `t -> number of blocks`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockCountPath {
    pub start: usize,
    /// Jump times, strictly increasing.
    pub times: Vec<f64>,
    /// Value from `times[i]` until the next jump.
    pub counts: Vec<usize>,
    pub stop: StopReason,
}

impl BlockCountPath {
    pub fn at(&self, t: f64) -> usize {
        let i = self.times.partition_point(|&s| s <= t);
        if i == 0 {
            self.start
        } else {
            self.counts[i - 1]
        }
    }

    pub fn final_count(&self) -> usize {
        self.counts.last().copied().unwrap_or(self.start)
    }

    /// First time the count is `<= m`; `None` if that never happens on the
    /// simulated stretch (censored).
    pub fn hitting_time(&self, m: usize) -> Option<f64> {
        if self.start <= m {
            return Some(0.0);
        }
        self.counts.iter().position(|&c| c <= m).map(|i| self.times[i])
    }
}

fn check_start(table: &RateTable, n: usize, horizon: f64) -> Result<()> {
    if n < 2 || n > table.max_blocks() {
        return Err(Error::out_of_range(
            "sample size",
            format!("n = {n}, rate table covers 2..={}", table.max_blocks()),
        ));
    }
    if !(horizon > 0.0) {
        return Err(Error::DomainError(format!("horizon must be positive, got {horizon}")));
    }
    Ok(())
}

/// Holding time and merge size for the next event from `b` blocks, or
/// `None` when the rates vanish.
fn next_merge(table: &RateTable, b: usize, clock: &mut Stream) -> Option<(f64, usize)> {
    let rate = table.total_rate(b).ok()?;
    if !(rate > 0.0) {
        return None;
    }
    let wait = clock.sample::<f64, _>(Exp1) / rate;
    let k = table.sample_merge_size(b, clock.random::<f64>())?;
    Some((wait, k))
}

/// Uniform `k`-subset of `0..b` by a partial Fisher-Yates shuffle, sorted.
pub fn uniform_subset(b: usize, k: usize, scratch: &mut Vec<usize>, rng: &mut Stream) -> Vec<usize> {
    scratch.clear();
    scratch.extend(0..b);
    for i in 0..k {
        let j = rng.random_range(i..b);
        scratch.swap(i, j);
    }
    let mut chosen = scratch[..k].to_vec();
    chosen.sort_unstable();
    chosen
}

/// Exact simulation of the coalescent restricted to `[n]`, started from
/// singletons and run until one block remains or `horizon` is passed.
///
/// Vanishing rates end the path with [`StopReason::DegenerateRates`]; this is
/// reported, not treated as an error.
pub fn simulate_coalescent(table: &RateTable, n: usize, horizon: f64, key: StreamKey) -> Result<CoalescentPath> {
    check_start(table, n, horizon)?;
    let mut clock = key.stream(Role::Clock);
    let mut subset = key.stream(Role::Subset);
    let initial = OrderedPartition::singletons(n);
    let mut current = initial.clone();
    let mut events = Vec::new();
    let mut scratch = Vec::with_capacity(n);
    let mut t = 0.0;
    let stop = loop {
        let b = current.block_count();
        if b == 1 {
            break StopReason::Absorbed;
        }
        let Some((wait, k)) = next_merge(table, b, &mut clock) else {
            break StopReason::DegenerateRates;
        };
        t += wait;
        if t > horizon {
            break StopReason::Horizon;
        }
        let merged = uniform_subset(b, k, &mut scratch, &mut subset);
        current = current.merge(&merged)?;
        events.push(CoalescentEvent {
            time: t,
            merged,
            partition: current.clone(),
        });
    };
    Ok(CoalescentPath {
        initial,
        events,
        horizon,
        stop,
    })
}

/// The block-count trajectory of a simulated path.
pub fn block_count_path(path: &CoalescentPath) -> BlockCountPath {
    BlockCountPath {
        start: path.initial.block_count(),
        times: path.events.iter().map(|e| e.time).collect(),
        counts: path.events.iter().map(|e| e.partition.block_count()).collect(),
        stop: path.stop,
    }
}

/// Simulate only the number of blocks, from `n` down to `target` or the
/// horizon. Uses the same clock stream layout as [`simulate_coalescent`], so
/// with equal keys both produce the same count trajectory.
pub fn simulate_block_count(
    table: &RateTable,
    n: usize,
    target: usize,
    horizon: f64,
    key: StreamKey,
) -> Result<BlockCountPath> {
    check_start(table, n, horizon)?;
    let target = target.max(1);
    let mut clock = key.stream(Role::Clock);
    let (mut times, mut counts) = (Vec::new(), Vec::new());
    let (mut b, mut t) = (n, 0.0);
    let stop = loop {
        if b <= target {
            break StopReason::Absorbed;
        }
        let Some((wait, k)) = next_merge(table, b, &mut clock) else {
            break StopReason::DegenerateRates;
        };
        t += wait;
        if t > horizon {
            break StopReason::Horizon;
        }
        b -= k - 1;
        times.push(t);
        counts.push(b);
    };
    Ok(BlockCountPath {
        start: n,
        times,
        counts,
        stop,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::LambdaMeasure;

    fn kingman(b: usize) -> RateTable {
        RateTable::build(&LambdaMeasure::kingman(1.0).unwrap(), b, 1e-10).unwrap()
    }

    #[test]
    fn two_blocks_merge_once() {
        let t = kingman(4);
        let p = simulate_coalescent(&t, 2, f64::INFINITY, StreamKey::new(1, 0)).unwrap();
        assert_eq!(p.events.len(), 1);
        assert_eq!(p.final_partition().blocks(), &[vec![1, 2]]);
        assert_eq!(p.stop, StopReason::Absorbed);
    }

    #[test]
    fn two_block_time_is_unit_exponential() {
        let t = kingman(2);
        let reps = 20_000;
        let mean = (0..reps)
            .map(|r| simulate_coalescent(&t, 2, f64::INFINITY, StreamKey::new(3, r)).unwrap().events[0].time)
            .sum::<f64>()
            / reps as f64;
        // Standard error of the mean is 1 / sqrt(reps).
        assert!((mean - 1.0).abs() < 4.0 / (reps as f64).sqrt(), "{mean}");
    }

    #[test]
    fn first_pair_is_uniform() {
        let t = kingman(3);
        let reps = 10_000u64;
        let mut counts = [0usize; 3];
        for r in 0..reps {
            let p = simulate_coalescent(&t, 3, f64::INFINITY, StreamKey::new(9, r)).unwrap();
            match p.events[0].merged.as_slice() {
                [0, 1] => counts[0] += 1,
                [0, 2] => counts[1] += 1,
                [1, 2] => counts[2] += 1,
                other => panic!("unexpected merge {other:?}"),
            }
        }
        let sd = (reps as f64 * (1.0 / 3.0) * (2.0 / 3.0)).sqrt();
        for c in counts {
            assert!((c as f64 - reps as f64 / 3.0).abs() < 3.0 * sd, "{counts:?}");
        }
    }

    #[test]
    fn path_invariants() {
        let t = RateTable::build(&LambdaMeasure::uniform(), 30, 1e-10).unwrap();
        for r in 0..50 {
            let p = simulate_coalescent(&t, 30, 5.0, StreamKey::new(2, r)).unwrap();
            let mut prev_t = 0.0;
            let mut prev_b = 30;
            for e in &p.events {
                assert!(e.time > prev_t);
                assert!(e.partition.is_valid());
                assert_eq!(e.partition.block_count(), prev_b - (e.merged.len() - 1));
                prev_t = e.time;
                prev_b = e.partition.block_count();
            }
            let counts = block_count_path(&p);
            assert!(counts.final_count() >= 1);
            assert_eq!(counts.at(0.0), 30);
        }
    }

    #[test]
    fn block_count_step_function() {
        let empty = BlockCountPath {
            start: 5,
            times: vec![],
            counts: vec![],
            stop: StopReason::Horizon,
        };
        assert_eq!(empty.at(100.0), 5);
        let one = BlockCountPath {
            start: 5,
            times: vec![0.2],
            counts: vec![3],
            stop: StopReason::Horizon,
        };
        assert_eq!(one.at(0.199), 5);
        assert_eq!(one.at(0.2), 3);
        assert_eq!(one.at(7.0), 3);
        assert_eq!(one.hitting_time(4), Some(0.2));
        assert_eq!(one.hitting_time(2), None);
    }

    #[test]
    fn count_chain_matches_full_simulation() {
        let t = RateTable::build(&LambdaMeasure::beta(1.2).unwrap(), 20, 1e-10).unwrap();
        for r in 0..20 {
            let key = StreamKey::new(4, r);
            let full = block_count_path(&simulate_coalescent(&t, 20, 3.0, key).unwrap());
            let chain = simulate_block_count(&t, 20, 1, 3.0, key).unwrap();
            assert_eq!(full.times, chain.times);
            assert_eq!(full.counts, chain.counts);
        }
    }

    #[test]
    fn degenerate_and_out_of_range() {
        let null = RateTable::build(&LambdaMeasure::null(), 5, 1e-10).unwrap();
        let p = simulate_coalescent(&null, 5, 1.0, StreamKey::new(0, 0)).unwrap();
        assert_eq!(p.stop, StopReason::DegenerateRates);
        assert!(p.events.is_empty());
        assert!(simulate_coalescent(&kingman(4), 5, 1.0, StreamKey::new(0, 0)).is_err());
        assert!(simulate_coalescent(&kingman(4), 4, 0.0, StreamKey::new(0, 0)).is_err());
    }

    #[test]
    fn same_key_same_path() {
        let t = RateTable::build(&LambdaMeasure::uniform(), 15, 1e-10).unwrap();
        let a = simulate_coalescent(&t, 15, 10.0, StreamKey::new(77, 5)).unwrap();
        let b = simulate_coalescent(&t, 15, 10.0, StreamKey::new(77, 5)).unwrap();
        assert_eq!(a, b);
    }
}
