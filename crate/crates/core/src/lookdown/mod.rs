//! The `n`-level lookdown particle system with Brownian motion.
//!
//! Levels hold particles. A birth event picks a set `J` of levels; the
//! lowest one is the parent, every other member of `J` receives a fresh
//! particle started at the parent's position, and the remaining particles
//! above the parent keep their order and move up. Particles pushed past
//! level `n` are dropped.
//!
//! Every particle carries its own Brownian path, sampled only when its
//! position is needed (as a parent or in a snapshot), so no time grid is
//! involved. Particles also remember their parent, which turns ancestry
//! between two snapshots into a walk up a tree.

mod genealogy;

pub use genealogy::{
    ancestor_count, ancestor_levels, dislocation, empirical_support, genealogy, recovered_coalescent,
    Lineage, LineageStep, RecoveredPartitionPath,
};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::coalescent::{uniform_subset, RateRow};
use crate::error::{Error, Result};
use crate::measures::{LambdaMeasure, DEFAULT_TOL};
use crate::streams::{Role, Stream, StreamKey};

/// Starting configuration of the levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    /// Every level starts at the origin.
    Origin,
    /// One point per level; the assignment to levels is randomly permuted so
    /// the initial state is exchangeable.
    Points(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BirthKind {
    /// A pairwise lookdown driven by the atom at zero.
    Single,
    /// A multiple lookdown from the rest of the measure.
    Multi,
}

impl BirthKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BirthKind::Single => "single",
            BirthKind::Multi => "multi",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BirthEvent {
    pub time: f64,
    pub kind: BirthKind,
    /// Participating levels (1-based, sorted); the first is the parent.
    pub levels: Vec<usize>,
    /// Parent position just before the event.
    pub parent_position: Vec<f64>,
}

impl BirthEvent {
    pub fn parent_level(&self) -> usize {
        self.levels[0]
    }
}

/// Level contents at one sampling time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub time: f64,
    /// Particle id at each level (index 0 is level 1).
    pub particles: Vec<u32>,
    /// Positions, `d` coordinates per level.
    pub positions: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LookdownOptions {
    /// Times at which all level positions are recorded.
    pub sample_times: Vec<f64>,
    /// Keep the full event log (needed for [`genealogy`] and
    /// [`recovered_coalescent`]).
    pub keep_event_log: bool,
    /// Upper limit on the expected number of events, `lambda_n * T`.
    pub event_budget: f64,
    /// Re-derive every level shift from the explicit shift formula and fail
    /// on any mismatch.
    pub check_shifts: bool,
    pub tol: f64,
}

impl Default for LookdownOptions {
    fn default() -> Self {
        Self {
            sample_times: Vec::new(),
            keep_event_log: true,
            event_budget: 5e7,
            check_shifts: false,
            tol: DEFAULT_TOL,
        }
    }
}

/// A finished simulation. Immutable; all queries take `&self`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LookdownTrajectory {
    pub n: usize,
    pub d: usize,
    pub horizon: f64,
    pub started_at_origin: bool,
    pub initial_positions: Vec<f64>,
    pub event_count: usize,
    pub events: Option<Vec<BirthEvent>>,
    pub snapshots: Vec<Snapshot>,
    /// Parent of each particle; `u32::MAX` for the initial particles.
    parent: Vec<u32>,
    /// Birth time of each particle; `-inf` for the initial particles.
    birth: Vec<f64>,
}

impl LookdownTrajectory {
    pub fn snapshot(&self, t: f64) -> Result<&Snapshot> {
        self.snapshots
            .iter()
            .find(|s| s.time == t)
            .ok_or(Error::TimeNotSampled(t))
    }

    pub fn sample_times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.time).collect()
    }

    pub fn event_log(&self) -> Result<&[BirthEvent]> {
        self.events.as_deref().ok_or(Error::MissingEventLog)
    }

    pub fn particle_count(&self) -> usize {
        self.parent.len()
    }

    /// The particle alive at time `r` from which `particle` descends.
    pub(crate) fn ancestor_particle(&self, mut particle: u32, r: f64) -> u32 {
        // Snapshots are taken before events at the same instant, so a
        // particle born exactly at `r` is not yet present then.
        while self.birth[particle as usize] >= r {
            particle = self.parent[particle as usize];
        }
        particle
    }
}

const NO_PARENT: u32 = u32::MAX;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Occupant {
    particle: u32,
    slot: u32,
}

/// Lazily sampled Brownian states, stored in recyclable slots.
struct Motion {
    d: usize,
    time: Vec<f64>,
    pos: Vec<f64>,
    free: Vec<u32>,
    rng: Stream,
}

impl Motion {
    fn allocate(&mut self, t: f64, at: &[f64]) -> u32 {
        if let Some(slot) = self.free.pop() {
            self.time[slot as usize] = t;
            let s = slot as usize * self.d;
            self.pos[s..s + self.d].copy_from_slice(at);
            slot
        } else {
            self.time.push(t);
            self.pos.extend_from_slice(at);
            (self.time.len() - 1) as u32
        }
    }

    /// Advance a slot to time `t` and return its position.
    fn at(&mut self, slot: u32, t: f64) -> &[f64] {
        let i = slot as usize;
        let dt = t - self.time[i];
        let s = i * self.d;
        if dt > 0.0 {
            let sd = dt.sqrt();
            for x in &mut self.pos[s..s + self.d] {
                *x += sd * self.rng.sample::<f64, _>(StandardNormal);
            }
            self.time[i] = t;
        }
        &self.pos[s..s + self.d]
    }
}

fn validate_times(times: &[f64], horizon: f64) -> Result<Vec<f64>> {
    let mut sorted = times.to_vec();
    if let Some(bad) = sorted.iter().find(|t| !(0.0..=horizon).contains(*t)) {
        return Err(Error::out_of_range("sample time", format!("{bad} not in [0, {horizon}]")));
    }
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    Ok(sorted)
}

fn initial_positions(init: &Init, n: usize, d: usize, rng: &mut Stream) -> Result<Vec<f64>> {
    match init {
        Init::Origin => Ok(vec![0.0; n * d]),
        Init::Points(points) => {
            if points.len() != n {
                return Err(Error::out_of_range("initial points", format!("{} given for n = {n}", points.len())));
            }
            if let Some(p) = points.iter().find(|p| p.len() != d || p.iter().any(|x| !x.is_finite())) {
                return Err(Error::out_of_range("initial point", format!("{p:?} is not a finite {d}-vector")));
            }
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(rng);
            Ok(order.iter().flat_map(|&i| points[i].iter().copied()).collect())
        }
    }
}

/// Simulate levels `1..=n` in `d` dimensions on `[0, horizon]`.
///
/// Events arrive at total rate `lambda_n`; the number of participants `k`
/// is drawn with probability `C(n, k) lambda[n][k] / lambda_n` and the
/// participants form a uniform `k`-subset of the levels. With `k = 2` the
/// event is a single birth with probability `Lambda({0}) / lambda[n][2]`.
pub fn simulate_lookdown(
    measure: &LambdaMeasure,
    n: usize,
    d: usize,
    horizon: f64,
    init: &Init,
    options: &LookdownOptions,
    key: StreamKey,
) -> Result<LookdownTrajectory> {
    if n == 0 || d == 0 {
        return Err(Error::out_of_range("lookdown size", format!("n = {n}, d = {d}; both must be >= 1")));
    }
    if n >= u32::MAX as usize / 2 {
        return Err(Error::out_of_range("lookdown size", format!("n = {n} too large")));
    }
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::DomainError(format!("horizon must be positive and finite, got {horizon}")));
    }
    let sample_times = validate_times(&options.sample_times, horizon)?;
    let row = RateRow::new(measure, n, options.tol)?;
    let expected = row.total() * horizon;
    if expected > options.event_budget {
        return Err(Error::RateOverflow {
            expected,
            budget: options.event_budget as usize,
        });
    }
    let single_share = if n >= 2 && row.lambda(2) > 0.0 {
        (measure.atom0() / row.lambda(2)).min(1.0)
    } else {
        0.0
    };

    let mut clock = key.stream(Role::Clock);
    let mut subset_rng = key.stream(Role::Subset);
    let mut init_rng = key.stream(Role::Init);
    let start = initial_positions(init, n, d, &mut init_rng)?;

    let mut motion = Motion {
        d,
        time: Vec::with_capacity(2 * n),
        pos: Vec::with_capacity(2 * n * d),
        free: Vec::new(),
        rng: key.stream(Role::Brownian),
    };
    let mut levels: Vec<Occupant> = (0..n)
        .map(|i| Occupant {
            particle: i as u32,
            slot: motion.allocate(0.0, &start[i * d..(i + 1) * d]),
        })
        .collect();
    let mut parent = vec![NO_PARENT; n];
    let mut birth = vec![f64::NEG_INFINITY; n];
    let mut events = options.keep_event_log.then(Vec::new);
    let mut snapshots = Vec::with_capacity(sample_times.len());
    let mut pending = sample_times.iter().copied().peekable();
    let mut scratch = Vec::with_capacity(n);
    let mut shifted = Vec::with_capacity(n);
    let mut parent_pos = vec![0.0; d];
    let mut event_count = 0usize;
    let mut t = 0.0;

    let take_snapshot = |time: f64, levels: &[Occupant], motion: &mut Motion| {
        let mut positions = Vec::with_capacity(n * d);
        for o in levels {
            positions.extend_from_slice(motion.at(o.slot, time));
        }
        Snapshot {
            time,
            particles: levels.iter().map(|o| o.particle).collect(),
            positions,
        }
    };

    loop {
        let next = if row.total() > 0.0 {
            t + clock.sample::<f64, _>(Exp1) / row.total()
        } else {
            f64::INFINITY
        };
        // Snapshots at an event instant record the pre-event state.
        while let Some(s) = pending.next_if(|&s| s <= next.min(horizon)) {
            snapshots.push(take_snapshot(s, &levels, &mut motion));
        }
        if next > horizon {
            break;
        }
        t = next;
        let k = row.sample_size(clock.random::<f64>()).expect("positive total rate");
        let kind = if k == 2 && clock.random::<f64>() < single_share {
            BirthKind::Single
        } else {
            BirthKind::Multi
        };
        let chosen = uniform_subset(n, k, &mut scratch, &mut subset_rng);
        let j0 = chosen[0];
        parent_pos.copy_from_slice(motion.at(levels[j0].slot, t));
        let before = options.check_shifts.then(|| levels.clone());

        // Rebuild levels from the second participant up: members of J get
        // newborns, the rest take the old occupants in order. Levels between
        // the parent and the second participant do not move.
        let first_child = chosen[1];
        shifted.clear();
        shifted.extend_from_slice(&levels[first_child..]);
        let mut next_old = shifted.iter();
        let mut members = chosen[1..].iter().peekable();
        let parent_id = levels[j0].particle;
        for (level, occupant) in levels.iter_mut().enumerate().skip(first_child) {
            if members.next_if_eq(&&level).is_some() {
                let id = parent.len() as u32;
                parent.push(parent_id);
                birth.push(t);
                *occupant = Occupant {
                    particle: id,
                    slot: motion.allocate(t, &parent_pos),
                };
            } else {
                *occupant = *next_old.next().expect("enough occupants to shift");
            }
        }
        for dropped in next_old {
            motion.free.push(dropped.slot);
        }
        if let Some(before) = before {
            check_shift(&before, &levels, &chosen, &parent)?;
        }
        event_count += 1;
        if let Some(log) = events.as_mut() {
            log.push(BirthEvent {
                time: t,
                kind,
                levels: chosen.iter().map(|&l| l + 1).collect(),
                parent_position: parent_pos.clone(),
            });
        }
    }

    Ok(LookdownTrajectory {
        n,
        d,
        horizon,
        started_at_origin: matches!(init, Init::Origin),
        initial_positions: start,
        event_count,
        events,
        snapshots,
        parent,
        birth,
    })
}

/// Compare a level update with the explicit shift formula: level `k` keeps
/// its occupant for `k <= j`, receives a child of level `j` for `k` in `J`,
/// and otherwise takes old level `k - (#{m in J : m < k} - 1)`.
fn check_shift(before: &[Occupant], after: &[Occupant], chosen: &[usize], parent: &[u32]) -> Result<()> {
    let j0 = chosen[0];
    for (k, occupant) in after.iter().enumerate() {
        let ok = if k <= j0 {
            *occupant == before[k]
        } else if chosen.binary_search(&k).is_ok() {
            parent[occupant.particle as usize] == before[j0].particle
                && !before.iter().any(|o| o.particle == occupant.particle)
        } else {
            let below = chosen.partition_point(|&m| m < k);
            *occupant == before[k + 1 - below]
        };
        if !ok {
            return Err(Error::DomainError(format!(
                "level {} violates the shift rule for participants {:?}",
                k + 1,
                chosen.iter().map(|l| l + 1).collect::<Vec<_>>()
            )));
        }
    }
    Ok(())
}
