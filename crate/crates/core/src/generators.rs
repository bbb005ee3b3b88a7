//! Benchmark instance generators. All families are pure functions of their
//! parameters and seed; structural choices are drawn before utilities so the
//! same seed always yields the same file.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{
    AgentId, BinaryFunction, DcopInstance, FunctionId, GeneratorInfo, MeetingInfo, VarId,
};
use crate::utility::Utility;

pub const DEFAULT_COST_MAX: i64 = 100;
pub const DEFAULT_SLOT_MAX: i64 = 100;
/// Meeting durations are drawn from [1, MAX_DURATION]. Together with the
/// sharing density this calibrates how contended the schedule is; see
/// `gen_meeting_with` to override.
pub const MAX_DURATION: i64 = 7;
pub const PREFERENCE_MAX: i64 = 10;
/// Density of the participant-sharing topology in meeting instances.
const MEETING_EDGE_DENSITY: f64 = 0.18;
const CONNECTIVITY_ATTEMPTS: usize = 50_000;

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn new(n: usize) -> Self {
        Self((0..n).collect())
    }

    fn find(&mut self, a: usize) -> usize {
        if self.0[a] != a {
            let root = self.find(self.0[a]);
            self.0[a] = root;
        }
        self.0[a]
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        self.0[ra] = rb;
    }
}

fn is_connected(n: usize, pairs: &[(u32, u32)]) -> bool {
    if n == 0 {
        return true;
    }
    let mut uf = UnionFind::new(n);
    for (a, b) in pairs {
        uf.union(*a as usize, *b as usize);
    }
    let root = uf.find(0);
    (1..n).all(|i| uf.find(i) == root)
}

/// Turn a sorted pair list into a full instance with uniform integer tables.
fn assemble(
    n: usize,
    d: usize,
    cost_max: i64,
    pairs: Vec<(u32, u32)>,
    rng: &mut ChaCha8Rng,
) -> Result<DcopInstance> {
    let domain: Vec<i64> = (0..d as i64).collect();
    let variables: Vec<(VarId, Vec<i64>)> =
        (0..n as u32).map(|i| (VarId(i), domain.clone())).collect();
    let functions = pairs
        .into_iter()
        .enumerate()
        .map(|(id, (a, b))| {
            let table = (0..d * d)
                .map(|_| Utility::Finite(rng.gen_range(0..=cost_max) as f64))
                .collect();
            BinaryFunction::new(FunctionId(id as u32), (VarId(a), VarId(b)), d, d, table)
        })
        .collect::<Result<Vec<_>>>()?;
    let ownership = (0..n as u32).map(|i| (VarId(i), AgentId(i))).collect();
    DcopInstance::new(variables, functions, ownership)
}

/// Random connected network with `floor(n * (n-1) * p1)` edges, clamped to
/// the number of available pairs (densities above 0.5 yield complete graphs).
pub fn gen_random(n: usize, p1: f64, d: usize, cost_max: i64, seed: u64) -> Result<DcopInstance> {
    if n < 2 {
        return Err(Error::Generator(
            "random networks need at least two agents".into(),
        ));
    }
    if !(0.0..=1.0).contains(&p1) || p1 <= 0.0 {
        return Err(Error::Generator(format!("density {p1} outside (0, 1]")));
    }
    let all_pairs = n * (n - 1) / 2;
    let target = ((n as f64 * (n as f64 - 1.0) * p1).floor() as usize).min(all_pairs);
    if target < n - 1 {
        return Err(Error::Generator(format!(
            "edge budget {target} cannot connect {n} agents (needs at least {})",
            n - 1
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pool: Vec<(u32, u32)> = Vec::with_capacity(all_pairs);
    for a in 0..n as u32 {
        for b in (a + 1)..n as u32 {
            pool.push((a, b));
        }
    }
    // rejection-resample until the drawn edge set is connected
    let mut chosen: Option<Vec<(u32, u32)>> = None;
    for _ in 0..CONNECTIVITY_ATTEMPTS {
        for i in 0..target {
            let j = rng.gen_range(i..pool.len());
            pool.swap(i, j);
        }
        let draw = pool[..target].to_vec();
        if is_connected(n, &draw) {
            chosen = Some(draw);
            break;
        }
    }
    let mut pairs = chosen.ok_or(Error::Generator(
        "rejection sampling failed to find a connected graph".into(),
    ))?;
    pairs.sort_unstable();

    let mut inst = assemble(n, d, cost_max, pairs, &mut rng)?;
    inst.generator = Some(GeneratorInfo {
        family: "random".into(),
        seed,
        n: Some(n),
        p1: Some(p1),
        d: Some(d),
        rows: None,
        cols: None,
        cost_max: Some(cost_max),
        meetings: None,
        participants: None,
        slot_max: None,
    });
    Ok(inst)
}

/// Preferential-attachment network: start from a connected two-node seed and
/// attach every new node to two distinct existing nodes with probability
/// proportional to degree, for `2 * (n - 2) + 1` edges in total.
pub fn gen_scale_free(n: usize, d: usize, cost_max: i64, seed: u64) -> Result<DcopInstance> {
    if n < 3 {
        return Err(Error::Generator(
            "scale-free networks need at least three agents".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut degree = vec![0u64; n];
    let mut pairs: Vec<(u32, u32)> = vec![(0, 1)];
    degree[0] = 1;
    degree[1] = 1;
    for new in 2..n as u32 {
        let first = weighted_pick(&degree[..new as usize], None, &mut rng);
        let second = weighted_pick(&degree[..new as usize], Some(first), &mut rng);
        for target in [first, second] {
            let t = target as u32;
            pairs.push((t.min(new), t.max(new)));
            degree[target] += 1;
            degree[new as usize] += 1;
        }
    }
    pairs.sort_unstable();

    let mut inst = assemble(n, d, cost_max, pairs, &mut rng)?;
    inst.generator = Some(GeneratorInfo {
        family: "scale-free".into(),
        seed,
        n: Some(n),
        p1: None,
        d: Some(d),
        rows: None,
        cols: None,
        cost_max: Some(cost_max),
        meetings: None,
        participants: None,
        slot_max: None,
    });
    Ok(inst)
}

fn weighted_pick(degree: &[u64], exclude: Option<usize>, rng: &mut ChaCha8Rng) -> usize {
    loop {
        let total: u64 = degree.iter().sum();
        let mut r = rng.gen_range(0..total);
        for (i, w) in degree.iter().enumerate() {
            if r < *w {
                if Some(i) != exclude {
                    return i;
                }
                break;
            }
            r -= w;
        }
    }
}

/// Rectangular four-neighbor grid: corners have degree 2, border nodes 3.
pub fn gen_grid(
    rows: usize,
    cols: usize,
    d: usize,
    cost_max: i64,
    seed: u64,
) -> Result<DcopInstance> {
    if rows < 2 || cols < 2 {
        return Err(Error::Generator(
            "grids need at least two rows and two columns".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let at = |r: usize, c: usize| (r * cols + c) as u32;
    let mut pairs = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            if c + 1 < cols {
                pairs.push((at(r, c), at(r, c + 1)));
            }
            if r + 1 < rows {
                pairs.push((at(r, c), at(r + 1, c)));
            }
        }
    }
    pairs.sort_unstable();

    let mut inst = assemble(rows * cols, d, cost_max, pairs, &mut rng)?;
    inst.generator = Some(GeneratorInfo {
        family: "grid".into(),
        seed,
        n: Some(rows * cols),
        p1: None,
        d: Some(d),
        rows: Some(rows),
        cols: Some(cols),
        cost_max: Some(cost_max),
        meetings: None,
        participants: None,
        slot_max: None,
    });
    Ok(inst)
}

/// Default participant pool matching the reference workload shape.
pub fn default_participant_pool(meetings: usize) -> usize {
    (meetings as f64 * 4.75).ceil() as usize
}

/// Meeting scheduling with events as variables: one variable per meeting,
/// domains are start slots early enough for the meeting's duration, and every
/// pair of meetings sharing a participant gets a hard no-overlap constraint
/// plus the participants' start-slot preferences.
pub fn gen_meeting(
    meetings: usize,
    participants_pool: usize,
    slot_max: i64,
    seed: u64,
) -> Result<DcopInstance> {
    gen_meeting_with(
        meetings,
        participants_pool,
        slot_max,
        MEETING_EDGE_DENSITY,
        MAX_DURATION,
        seed,
    )
}

/// `gen_meeting` with the calibration knobs exposed: sharing-topology density
/// and the maximum meeting duration.
pub fn gen_meeting_with(
    meetings: usize,
    participants_pool: usize,
    slot_max: i64,
    density: f64,
    max_duration: i64,
    seed: u64,
) -> Result<DcopInstance> {
    if meetings < 2 {
        return Err(Error::Generator(
            "meeting instances need at least two meetings".into(),
        ));
    }
    if participants_pool == 0 {
        return Err(Error::Generator("participant pool must be nonempty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let durations: Vec<i64> = (0..meetings)
        .map(|_| rng.gen_range(1..=max_duration.min(slot_max)))
        .collect();

    // sharing topology from the random network model
    let target = ((meetings * (meetings - 1)) as f64 * density).floor() as usize;
    let target = target.max(meetings - 1);
    let mut pool: Vec<(u32, u32)> = Vec::new();
    for a in 0..meetings as u32 {
        for b in (a + 1)..meetings as u32 {
            pool.push((a, b));
        }
    }
    let target = target.min(pool.len());
    let mut pairs: Option<Vec<(u32, u32)>> = None;
    for _ in 0..CONNECTIVITY_ATTEMPTS {
        for i in 0..target {
            let j = rng.gen_range(i..pool.len());
            pool.swap(i, j);
        }
        let draw = pool[..target].to_vec();
        if is_connected(meetings, &draw) {
            pairs = Some(draw);
            break;
        }
    }
    let mut pairs = pairs.ok_or(Error::Generator(
        "rejection sampling failed to find a connected graph".into(),
    ))?;
    pairs.sort_unstable();

    // one dedicated participant per sharing pair; leftover pool members attend
    // a single meeting and only contribute preferences
    let mut attendance: BTreeMap<u32, BTreeSet<usize>> = BTreeMap::new();
    for (participant, (a, b)) in pairs.iter().enumerate() {
        let participant = (participant % participants_pool) as u32;
        attendance
            .entry(participant)
            .or_default()
            .insert(*a as usize);
        attendance
            .entry(participant)
            .or_default()
            .insert(*b as usize);
    }
    for extra in pairs.len()..participants_pool {
        let participant = extra as u32;
        let meeting = rng.gen_range(0..meetings);
        attendance.entry(participant).or_default().insert(meeting);
    }

    let prefs: BTreeMap<u32, Vec<i64>> = attendance
        .keys()
        .map(|p| {
            let curve = (0..=slot_max)
                .map(|_| rng.gen_range(0..=PREFERENCE_MAX))
                .collect();
            (*p, curve)
        })
        .collect();
    // fold participant curves into one preference curve per meeting
    let mut meeting_pref = vec![vec![0.0f64; slot_max as usize + 1]; meetings];
    for (p, ms) in &attendance {
        for m in ms {
            for (slot, acc) in meeting_pref[*m].iter_mut().enumerate() {
                *acc += prefs[p][slot] as f64;
            }
        }
    }
    let meeting_pref = |m: usize, start: i64| meeting_pref[m][start as usize];

    let variables: Vec<(VarId, Vec<i64>)> = (0..meetings)
        .map(|m| (VarId(m as u32), (0..=(slot_max - durations[m])).collect()))
        .collect();
    let overlap = |sa: i64, da: i64, sb: i64, db: i64| sa < sb + db && sb < sa + da;
    let functions = pairs
        .iter()
        .enumerate()
        .map(|(id, (a, b))| {
            let (a, b) = (*a as usize, *b as usize);
            let (da, db) = (durations[a], durations[b]);
            let dom_a = &variables[a].1;
            let dom_b = &variables[b].1;
            let mut table = Vec::with_capacity(dom_a.len() * dom_b.len());
            for &sa in dom_a {
                for &sb in dom_b {
                    table.push(if overlap(sa, da, sb, db) {
                        Utility::NegInf
                    } else {
                        Utility::Finite(meeting_pref(a, sa) + meeting_pref(b, sb))
                    });
                }
            }
            BinaryFunction::new(
                FunctionId(id as u32),
                (VarId(a as u32), VarId(b as u32)),
                dom_a.len(),
                dom_b.len(),
                table,
            )
        })
        .collect::<Result<Vec<_>>>()?;

    let ownership = (0..meetings as u32)
        .map(|i| (VarId(i), AgentId(i)))
        .collect();
    let mut inst = DcopInstance::new(variables, functions, ownership)?;
    inst.meetings = Some(
        (0..meetings)
            .map(|m| MeetingInfo {
                variable: VarId(m as u32),
                duration: durations[m],
                participants: attendance
                    .iter()
                    .filter(|(_, ms)| ms.contains(&m))
                    .map(|(p, _)| *p)
                    .collect(),
            })
            .collect(),
    );
    inst.generator = Some(GeneratorInfo {
        family: "meeting".into(),
        seed,
        n: Some(meetings),
        p1: None,
        d: None,
        rows: None,
        cols: None,
        cost_max: None,
        meetings: Some(meetings),
        participants: Some(participants_pool),
        slot_max: Some(slot_max),
    });
    Ok(inst)
}
