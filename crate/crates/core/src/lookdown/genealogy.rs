use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{BirthEvent, LookdownTrajectory};
use crate::coalescent::OrderedPartition;
use crate::error::{Error, Result};
use crate::support::PointCloud;

/// Level before an event of a lineage found at `level` just after it.
///
/// Members of `J` point to the parent; levels above the parent that did
/// not take part came from `#{m in J : m < level} - 1` levels lower.
fn level_before(levels: &[usize], level: usize) -> usize {
    let parent = levels[0];
    if level <= parent {
        level
    } else if levels.binary_search(&level).is_ok() {
        parent
    } else {
        level + 1 - levels.partition_point(|&m| m < level)
    }
}

/// Events in `[t, s)`, most recent first.
fn events_between(log: &[BirthEvent], t: f64, s: f64) -> impl Iterator<Item = &BirthEvent> {
    let lo = log.partition_point(|e| e.time < t);
    let hi = log.partition_point(|e| e.time < s);
    log[lo..hi].iter().rev()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineageStep {
    /// Event time. The lineage sits at `level_before` for times up to and
    /// including this one.
    pub time: f64,
    pub level_before: usize,
    /// Ancestor position `X(time-)` when the lineage looked down to the
    /// parent at this event; `None` for a plain upward shift.
    pub ancestor_position: Option<Vec<f64>>,
}

/// Ancestral levels of the particle at level `level` at time `s`.
///
/// As a function of `t` the ancestral level is nondecreasing and
/// left-continuous, and equals `level` at `t = s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lineage {
    pub level: usize,
    pub s: f64,
    /// Level changes, most recent first.
    pub steps: Vec<LineageStep>,
}

impl Lineage {
    pub fn level_at(&self, t: f64) -> usize {
        self.steps
            .iter()
            .take_while(|step| step.time >= t)
            .last()
            .map_or(self.level, |step| step.level_before)
    }
}

fn check_level(traj: &LookdownTrajectory, level: usize) -> Result<()> {
    if level == 0 || level > traj.n {
        return Err(Error::out_of_range("level", format!("{level} not in 1..={}", traj.n)));
    }
    Ok(())
}

fn check_time(traj: &LookdownTrajectory, t: f64) -> Result<()> {
    if !(0.0..=traj.horizon).contains(&t) {
        return Err(Error::out_of_range("time", format!("{t} not in [0, {}]", traj.horizon)));
    }
    Ok(())
}

/// Trace the ancestry of level `level` at time `s` back to time zero by
/// replaying the event log.
pub fn genealogy(traj: &LookdownTrajectory, level: usize, s: f64) -> Result<Lineage> {
    check_level(traj, level)?;
    check_time(traj, s)?;
    let log = traj.event_log()?;
    let mut current = level;
    let mut steps = Vec::new();
    for e in events_between(log, 0.0, s) {
        let before = level_before(&e.levels, current);
        if before != current {
            steps.push(LineageStep {
                time: e.time,
                level_before: before,
                ancestor_position: (before == e.parent_level()).then(|| e.parent_position.clone()),
            });
            current = before;
        }
    }
    Ok(Lineage { level, s, steps })
}

/// Partition of the levels at the horizon `T` by common ancestor at `T - t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveredPartitionPath {
    pub horizon: f64,
    pub n: usize,
    /// Times `t` (measured back from the horizon) at which blocks merge.
    pub times: Vec<f64>,
    /// Partition from `times[i]` on; before `times[0]` it is all singletons.
    pub partitions: Vec<OrderedPartition>,
}

impl RecoveredPartitionPath {
    pub fn partition_at(&self, t: f64) -> OrderedPartition {
        let i = self.times.partition_point(|&u| u <= t);
        if i == 0 {
            OrderedPartition::singletons(self.n)
        } else {
            self.partitions[i - 1].clone()
        }
    }

    pub fn block_count_at(&self, t: f64) -> usize {
        let i = self.times.partition_point(|&u| u <= t);
        if i == 0 {
            self.n
        } else {
            self.partitions[i - 1].block_count()
        }
    }
}

/// Group the levels at the horizon by their ancestor at each earlier time.
///
/// The ancestors at any time occupy exactly levels `1..=N`, and the block
/// whose ancestor sits at level `l` is the `l`-th block in least-element
/// order. Both facts are checked on every recorded partition.
pub fn recovered_coalescent(traj: &LookdownTrajectory) -> Result<RecoveredPartitionPath> {
    let log = traj.event_log()?;
    // blocks[l] holds the horizon levels whose ancestor sits at level l + 1.
    let mut blocks: Vec<Vec<usize>> = (1..=traj.n).map(|i| vec![i]).collect();
    let mut times = Vec::new();
    let mut partitions = Vec::new();
    for e in events_between(log, 0.0, traj.horizon) {
        let inside = e.levels.partition_point(|&l| l <= blocks.len());
        if inside < 2 {
            continue;
        }
        let parent = e.levels[0] - 1;
        let mut merged = std::mem::take(&mut blocks[parent]);
        for &l in e.levels[1..inside].iter().rev() {
            merged.extend(blocks.remove(l - 1));
        }
        merged.sort_unstable();
        blocks[parent] = merged;
        let partition = OrderedPartition::from_blocks(traj.n, blocks.clone())?;
        if partition.blocks() != blocks.as_slice() {
            return Err(Error::DomainError(format!(
                "ancestor levels out of least-element order at t = {}",
                traj.horizon - e.time
            )));
        }
        times.push(traj.horizon - e.time);
        partitions.push(partition);
    }
    Ok(RecoveredPartitionPath {
        horizon: traj.horizon,
        n: traj.n,
        times,
        partitions,
    })
}

/// For each level at time `s`, the level of its ancestor at time `r`.
/// Both times must be sampling times.
pub fn ancestor_levels(traj: &LookdownTrajectory, r: f64, s: f64) -> Result<Vec<usize>> {
    if r > s {
        return Err(Error::out_of_range("time pair", format!("r = {r} > s = {s}")));
    }
    let (early, late) = (traj.snapshot(r)?, traj.snapshot(s)?);
    let level_of: HashMap<u32, usize> = early.particles.iter().enumerate().map(|(l, &p)| (p, l + 1)).collect();
    late.particles
        .iter()
        .map(|&p| {
            let a = traj.ancestor_particle(p, r);
            level_of
                .get(&a)
                .copied()
                .ok_or_else(|| Error::DomainError(format!("ancestor of particle {p} missing at time {r}")))
        })
        .collect()
}

/// Number of distinct ancestors at time `r` of the levels at time `s`.
pub fn ancestor_count(traj: &LookdownTrajectory, r: f64, s: f64) -> Result<usize> {
    Ok(ancestor_levels(traj, r, s)?.into_iter().max().unwrap_or(0))
}

/// Maximal distance between a particle at time `s` and its ancestor at
/// time `r`, over all `n` levels. Both times must be sampling times;
/// `r == s` gives zero.
pub fn dislocation(traj: &LookdownTrajectory, r: f64, s: f64) -> Result<f64> {
    if r == s {
        traj.snapshot(r)?;
        return Ok(0.0);
    }
    let ancestors = ancestor_levels(traj, r, s)?;
    let (early, late) = (traj.snapshot(r)?, traj.snapshot(s)?);
    let d = traj.d;
    let mut worst: f64 = 0.0;
    for (j, &l) in ancestors.iter().enumerate() {
        let x = &late.positions[j * d..(j + 1) * d];
        let y = &early.positions[(l - 1) * d..l * d];
        let dist2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
        worst = worst.max(dist2);
    }
    Ok(worst.sqrt())
}

/// The `n` level positions at a sampling time, as a point cloud.
pub fn empirical_support(traj: &LookdownTrajectory, t: f64, replicate: usize) -> Result<PointCloud> {
    check_time(traj, t)?;
    let snap = traj.snapshot(t)?;
    PointCloud::new(traj.d, snap.positions.clone()).map(|c| c.with_label(replicate, t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lookdown::{simulate_lookdown, BirthKind, Init, LookdownOptions};
    use crate::measures::LambdaMeasure;
    use crate::streams::StreamKey;

    fn dyadic(depth: u32) -> Vec<f64> {
        (0..=1 << depth).map(|i| i as f64 / (1u32 << depth) as f64).collect()
    }

    fn run(m: &LambdaMeasure, n: usize, rep: u64, times: &[f64]) -> LookdownTrajectory {
        let opts = LookdownOptions {
            sample_times: times.to_vec(),
            check_shifts: true,
            ..Default::default()
        };
        simulate_lookdown(m, n, 2, 1.0, &Init::Origin, &opts, StreamKey::new(21, rep)).unwrap()
    }

    fn handmade(events: Vec<BirthEvent>, n: usize) -> LookdownTrajectory {
        LookdownTrajectory {
            n,
            d: 1,
            horizon: 1.0,
            started_at_origin: true,
            initial_positions: vec![0.0; n],
            event_count: events.len(),
            events: Some(events),
            snapshots: Vec::new(),
            parent: Vec::new(),
            birth: Vec::new(),
        }
    }

    fn event(time: f64, levels: Vec<usize>) -> BirthEvent {
        BirthEvent {
            time,
            kind: if levels.len() == 2 { BirthKind::Single } else { BirthKind::Multi },
            levels,
            parent_position: vec![0.25],
        }
    }

    #[test]
    fn backward_level_map() {
        // Single birth (2, 5).
        assert_eq!(level_before(&[2, 5], 1), 1);
        assert_eq!(level_before(&[2, 5], 3), 3);
        assert_eq!(level_before(&[2, 5], 5), 2);
        assert_eq!(level_before(&[2, 5], 6), 5);
        // Multiple birth {1, 3, 4}.
        assert_eq!(level_before(&[1, 3, 4], 2), 2);
        assert_eq!(level_before(&[1, 3, 4], 4), 1);
        assert_eq!(level_before(&[1, 3, 4], 5), 3);
        assert_eq!(level_before(&[1, 3, 4], 7), 5);
    }

    #[test]
    fn identity_without_events() {
        let traj = handmade(Vec::new(), 4);
        let l = genealogy(&traj, 3, 0.8).unwrap();
        assert!(l.steps.is_empty());
        assert_eq!(l.level_at(0.0), 3);
    }

    #[test]
    fn one_lookdown() {
        let traj = handmade(vec![event(0.4, vec![1, 2])], 2);
        let l = genealogy(&traj, 2, 0.9).unwrap();
        assert_eq!(l.level_at(0.1), 1);
        assert_eq!(l.level_at(0.4), 1);
        assert_eq!(l.level_at(0.41), 2);
        assert_eq!(l.level_at(0.9), 2);
        assert_eq!(l.steps[0].ancestor_position, Some(vec![0.25]));
        assert!(genealogy(&traj, 3, 0.5).is_err());
        assert!(genealogy(&traj, 1, 1.5).is_err());
    }

    #[test]
    fn null_measure_recovers_singletons() {
        let traj = run(&LambdaMeasure::null(), 5, 0, &[]);
        let path = recovered_coalescent(&traj).unwrap();
        assert!(path.times.is_empty());
        assert_eq!(path.partition_at(1.0), OrderedPartition::singletons(5));
    }

    #[test]
    fn ancestors_fill_the_lowest_levels() {
        // At every earlier time the ancestral levels
        // are exactly 1..=N, first reached in increasing order.
        for m in [LambdaMeasure::kingman(1.0).unwrap(), LambdaMeasure::uniform()] {
            for rep in 0..10 {
                let traj = run(&m, 6, rep, &[]);
                for i in 0..=20 {
                    let t = i as f64 / 20.0;
                    let anc: Vec<usize> = (1..=6).map(|l| genealogy(&traj, l, 1.0).unwrap().level_at(t)).collect();
                    let mut seen_max = 0;
                    for &a in &anc {
                        assert!(a <= seen_max + 1, "{anc:?}");
                        seen_max = seen_max.max(a);
                    }
                    for (l, &a) in anc.iter().enumerate() {
                        assert!(a <= l + 1);
                    }
                }
            }
        }
    }

    #[test]
    fn partition_and_genealogy_agree() {
        for m in [LambdaMeasure::kingman(1.0).unwrap(), LambdaMeasure::beta(1.3).unwrap()] {
            for rep in 0..10 {
                let traj = run(&m, 7, rep, &[]);
                let path = recovered_coalescent(&traj).unwrap();
                let mut last = 7;
                for i in 0..=40 {
                    let t = i as f64 / 40.0;
                    let p = path.partition_at(t);
                    assert!(p.block_count() <= last);
                    last = p.block_count();
                    let labels = p.labels();
                    let anc: Vec<usize> = (1..=7).map(|l| genealogy(&traj, l, 1.0).unwrap().level_at(1.0 - t)).collect();
                    for a in 0..7 {
                        assert_eq!(anc[a], labels[a] + 1);
                    }
                }
            }
        }
    }

    #[test]
    fn parentage_matches_event_replay() {
        let times = dyadic(3);
        for m in [LambdaMeasure::kingman(1.0).unwrap(), LambdaMeasure::uniform()] {
            for rep in 0..5 {
                let traj = run(&m, 9, rep, &times);
                for (a, &r) in times.iter().enumerate() {
                    for &s in &times[a..] {
                        let fast = ancestor_levels(&traj, r, s).unwrap();
                        let slow: Vec<usize> = (1..=9).map(|l| genealogy(&traj, l, s).unwrap().level_at(r)).collect();
                        assert_eq!(fast, slow, "r = {r}, s = {s}");
                    }
                }
            }
        }
    }

    #[test]
    fn dislocation_properties() {
        let times = dyadic(4);
        let traj = run(&LambdaMeasure::kingman(1.0).unwrap(), 30, 3, &times);
        for (a, &r) in times.iter().enumerate() {
            assert_eq!(dislocation(&traj, r, r).unwrap(), 0.0);
            for (b, &t) in times.iter().enumerate().skip(a) {
                for &s in &times[b..] {
                    let whole = dislocation(&traj, r, s).unwrap();
                    let parts = dislocation(&traj, r, t).unwrap() + dislocation(&traj, t, s).unwrap();
                    assert!(whole <= parts + 1e-12);
                }
            }
        }
        assert!(matches!(dislocation(&traj, 0.1, 0.5), Err(Error::TimeNotSampled(_))));
    }

    #[test]
    fn single_lineage_dislocation_is_brownian_increment() {
        let traj = run(&LambdaMeasure::null(), 1, 0, &[0.25, 0.75]);
        let h = dislocation(&traj, 0.25, 0.75).unwrap();
        let (a, b) = (traj.snapshot(0.25).unwrap(), traj.snapshot(0.75).unwrap());
        let want = ((a.positions[0] - b.positions[0]).powi(2) + (a.positions[1] - b.positions[1]).powi(2)).sqrt();
        assert_eq!(h, want);
    }

    #[test]
    fn support_snapshot() {
        let traj = run(&LambdaMeasure::null(), 3, 0, &[0.0, 0.5]);
        let c0 = empirical_support(&traj, 0.0, 0).unwrap();
        assert!(c0.coords().iter().all(|&x| x == 0.0));
        let c1 = empirical_support(&traj, 0.5, 0).unwrap();
        assert_eq!(c1.len(), 3);
        assert!(c1.point(0) != c1.point(1));
        assert!(empirical_support(&traj, 0.3, 0).is_err());
    }
}
