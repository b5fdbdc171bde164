//! Monte-Carlo page cache simulation and store workloads.
//!
//! [`simulate`] replays uniform random page accesses against a
//! [`PageCache`], either over one population of pages or over one population
//! per level with an independent draw per level. [`simulate_trials`] repeats
//! that with independent seeds and aggregates resident counts and fetches at
//! chosen checkpoints. [`run_store_workload`] drives real lookups through a
//! cache instead.

use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cache::{PageCache, PageKey};
use crate::dsc::SearchStats;
use crate::error::{Error, Result};
use crate::store::{LookupStore, MultidimStore, PositionIndex};
use crate::table::TableStore;

/// Uniform page access process.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AccessModel {
    /// One population of `N` pages.
    Single { pages: u64 },
    /// One page drawn independently from each level per access.
    Leveled { pages: Vec<u64> },
}

impl AccessModel {
    pub fn levels(&self) -> &[u64] {
        match self {
            AccessModel::Single { pages } => std::slice::from_ref(pages),
            AccessModel::Leveled { pages } => pages,
        }
    }

    fn validate(&self) -> Result<()> {
        let levels = self.levels();
        if levels.is_empty() || levels.contains(&0) {
            return Err(Error::InvalidConfig(
                "every population needs at least one page".into(),
            ));
        }
        Ok(())
    }
}

/// Deterministic generator for trial `trial` of a run seeded with `seed`.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimRecord {
    /// 1-based access index.
    pub i: u64,
    pub fetched: u64,
    pub resident: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SimTrace {
    pub records: Vec<SimRecord>,
}

impl SimTrace {
    pub fn total_fetches(&self) -> u64 {
        self.records.iter().map(|r| r.fetched).sum()
    }

    pub fn mean_fetches(&self) -> f64 {
        if self.records.is_empty() {
            0.0
        } else {
            self.total_fetches() as f64 / self.records.len() as f64
        }
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "i,fetched,resident")?;
        for r in &self.records {
            writeln!(out, "{},{},{}", r.i, r.fetched, r.resident)?;
        }
        out.flush()?;
        Ok(())
    }
}

fn access(model: &AccessModel, cache: &mut PageCache, rng: &mut ChaCha8Rng) -> u64 {
    let mut fetched = 0;
    for (level, &n) in model.levels().iter().enumerate() {
        let page = rng.gen_range(0..n);
        let key = PageKey {
            space: level as u32,
            page,
        };
        if !cache.touch(key) {
            fetched += 1;
        }
    }
    fetched
}

/// Runs `accesses` accesses against `cache`. Simulated pages live in address
/// spaces `0..L`, which no open file uses.
pub fn simulate(
    model: &AccessModel,
    cache: &mut PageCache,
    accesses: u64,
    seed: u64,
) -> Result<SimTrace> {
    model.validate()?;
    if accesses == 0 {
        return Err(Error::InvalidConfig(
            "at least one access is required".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let records = (1..=accesses)
        .map(|i| {
            let fetched = access(model, cache, &mut rng);
            SimRecord {
                i,
                fetched,
                resident: cache.resident() as u64,
            }
        })
        .collect();
    Ok(SimTrace { records })
}

/// Mean and standard error of a sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
}

/// Aggregates over trials at one checkpoint `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointSummary {
    pub i: u64,
    /// Pages resident after `i` accesses.
    pub resident: Estimate,
    /// Per level, pages resident after `i` accesses.
    pub resident_per_level: Vec<Estimate>,
    /// Pages fetched by access `i + 1`.
    pub next_fetch: Estimate,
}

#[derive(Debug, Clone, Default)]
struct Moments {
    n: u64,
    sum: u128,
    sum_sq: u128,
}

impl Moments {
    fn push(&mut self, x: u64) {
        self.n += 1;
        self.sum += u128::from(x);
        self.sum_sq += u128::from(x) * u128::from(x);
    }

    fn merge(&mut self, o: &Moments) {
        self.n += o.n;
        self.sum += o.sum;
        self.sum_sq += o.sum_sq;
    }

    fn estimate(&self) -> Estimate {
        let n = self.n as f64;
        let mean = self.sum as f64 / n;
        let var = if self.n > 1 {
            ((self.sum_sq as f64 - n * mean * mean) / (n - 1.0)).max(0.0)
        } else {
            0.0
        };
        Estimate {
            mean,
            std_error: (var / n).sqrt(),
        }
    }
}

#[derive(Debug, Clone)]
struct Accumulator {
    resident: Vec<Moments>,
    per_level: Vec<Vec<Moments>>,
    next_fetch: Vec<Moments>,
}

impl Accumulator {
    fn new(checkpoints: usize, levels: usize) -> Self {
        Self {
            resident: vec![Moments::default(); checkpoints],
            per_level: vec![vec![Moments::default(); levels]; checkpoints],
            next_fetch: vec![Moments::default(); checkpoints],
        }
    }

    fn merge(&mut self, o: &Accumulator) {
        for (a, b) in self.resident.iter_mut().zip(&o.resident) {
            a.merge(b);
        }
        for (a, b) in self.next_fetch.iter_mut().zip(&o.next_fetch) {
            a.merge(b);
        }
        for (a, b) in self.per_level.iter_mut().zip(&o.per_level) {
            for (x, y) in a.iter_mut().zip(b) {
                x.merge(y);
            }
        }
    }
}

fn run_trial(
    model: &AccessModel,
    checkpoints: &[u64],
    rng: &mut ChaCha8Rng,
    acc: &mut Accumulator,
) {
    let levels = model.levels().len();
    let mut cache = PageCache::unbounded();
    let mut done = 0u64;
    for (c, &i) in checkpoints.iter().enumerate() {
        while done < i {
            access(model, &mut cache, rng);
            done += 1;
        }
        acc.resident[c].push(cache.resident() as u64);
        for l in 0..levels {
            acc.per_level[c][l].push(cache.resident_in(l as u32) as u64);
        }
        let fetched = access(model, &mut cache, rng);
        done += 1;
        acc.next_fetch[c].push(fetched);
    }
}

/// Runs `trials` independent cold-start simulations on unbounded caches and
/// summarizes them at each checkpoint. Checkpoints must be strictly
/// increasing; the access right after each checkpoint is the one whose
/// fetches are reported, so a trial performs `checkpoint + 1` accesses before
/// moving on. Results do not depend on `threads`.
pub fn simulate_trials(
    model: &AccessModel,
    checkpoints: &[u64],
    trials: u64,
    seed: u64,
    threads: usize,
) -> Result<Vec<CheckpointSummary>> {
    model.validate()?;
    if trials == 0 {
        return Err(Error::InvalidConfig(
            "at least one trial is required".into(),
        ));
    }
    if checkpoints.windows(2).any(|w| w[1] <= w[0] + 1) {
        return Err(Error::InvalidConfig(
            "checkpoints must increase by at least two".into(),
        ));
    }
    let levels = model.levels().len();
    let threads = threads.max(1).min(trials as usize);
    let run = |range: std::ops::Range<u64>| {
        let mut acc = Accumulator::new(checkpoints.len(), levels);
        for t in range {
            run_trial(model, checkpoints, &mut trial_rng(seed, t), &mut acc);
        }
        acc
    };
    let mut total = Accumulator::new(checkpoints.len(), levels);
    if threads == 1 {
        total = run(0..trials);
    } else {
        let chunk = trials.div_ceil(threads as u64);
        let parts: Vec<Accumulator> = std::thread::scope(|s| {
            let handles: Vec<_> = (0..threads as u64)
                .map(|k| {
                    let range = (k * chunk).min(trials)..((k + 1) * chunk).min(trials);
                    s.spawn(move || run(range))
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("trial thread"))
                .collect()
        });
        for p in &parts {
            total.merge(p);
        }
    }
    Ok(checkpoints
        .iter()
        .enumerate()
        .map(|(c, &i)| CheckpointSummary {
            i,
            resident: total.resident[c].estimate(),
            resident_per_level: total.per_level[c].iter().map(Moments::estimate).collect(),
            next_fetch: total.next_fetch[c].estimate(),
        })
        .collect())
}

/// Draws `n` keys uniformly with replacement.
pub fn sample_keys<R: Rng>(keys: &[Vec<u32>], n: usize, rng: &mut R) -> Vec<Vec<u32>> {
    (0..n).filter_map(|_| keys.choose(rng).cloned()).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorkloadResult {
    pub trace: SimTrace,
    pub found: u64,
    pub elapsed_ms: f64,
}

impl WorkloadResult {
    pub fn avg_fetches(&self) -> f64 {
        self.trace.mean_fetches()
    }

    pub fn avg_ms(&self) -> f64 {
        if self.trace.records.is_empty() {
            0.0
        } else {
            self.elapsed_ms / self.trace.records.len() as f64
        }
    }
}

/// Looks up every key through `cache`, recording fetches per lookup.
pub fn run_store_workload(
    store: &dyn LookupStore,
    keys: &[Vec<u32>],
    cache: &mut PageCache,
) -> Result<WorkloadResult> {
    let mut records = Vec::with_capacity(keys.len());
    let mut found = 0;
    let start = Instant::now();
    for (n, key) in keys.iter().enumerate() {
        let before = cache.stats().fetches;
        if store.lookup(cache, key)?.is_some() {
            found += 1;
        }
        records.push(SimRecord {
            i: n as u64 + 1,
            fetched: cache.stats().fetches - before,
            resident: cache.resident() as u64,
        });
    }
    Ok(WorkloadResult {
        trace: SimTrace { records },
        found,
        elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

/// Per-lookup averages of one representation in the two-round protocol.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct RoundAverages {
    /// D proxy: fetches per lookup on a cold cache.
    pub cold_fetches: f64,
    /// M proxy: fetches per lookup once the same keys were read before.
    pub warm_fetches: f64,
    pub cold_ms: Option<f64>,
    pub warm_ms: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct ConstantEstimates {
    pub md: RoundAverages,
    pub table: RoundAverages,
    /// Differences decoded per md lookup.
    pub md_decoded: f64,
}

impl ConstantEstimates {
    /// Times in ms as [`crate::analytics::RepresentationConstants`]; only
    /// available when wall-clock timing was on.
    pub fn to_constants(&self) -> Result<crate::analytics::RepresentationConstants> {
        match (
            self.md.warm_ms,
            self.table.warm_ms,
            self.md.cold_ms,
            self.table.cold_ms,
        ) {
            (Some(mm), Some(mt), Some(dm), Some(dt)) => {
                crate::analytics::RepresentationConstants::new(mm, mt, dm, dt)
            }
            _ => Err(Error::InvalidConfig(
                "wall-clock timing was not recorded".into(),
            )),
        }
    }
}

fn two_rounds(
    keys: &[Vec<u32>],
    wall_clock: bool,
    mut lookup: impl FnMut(&mut PageCache, &[u32]) -> Result<()>,
) -> Result<RoundAverages> {
    let n = keys.len().max(1) as f64;
    let mut cold = PageCache::unbounded();
    let mut warm = PageCache::unbounded();
    let mut cold_fetches = 0;
    let mut cold_time = 0.0;
    for key in keys {
        cold.clear();
        let start = Instant::now();
        lookup(&mut cold, key)?;
        cold_time += start.elapsed().as_secs_f64();
        cold_fetches += cold.stats().fetches;
        lookup(&mut warm, key)?;
    }
    let before = warm.stats().fetches;
    let start = Instant::now();
    for key in keys {
        lookup(&mut warm, key)?;
    }
    let warm_time = start.elapsed().as_secs_f64();
    let warm_fetches = warm.stats().fetches - before;
    Ok(RoundAverages {
        cold_fetches: cold_fetches as f64 / n,
        warm_fetches: warm_fetches as f64 / n,
        cold_ms: wall_clock.then(|| cold_time * 1e3 / n),
        warm_ms: wall_clock.then(|| warm_time * 1e3 / n),
    })
}

/// Two-round protocol: each key is first looked up on a cold cache, then the
/// whole sample is looked up again once every page it needs is resident.
pub fn estimate_constants<H: PositionIndex>(
    md: &MultidimStore<H>,
    table: &TableStore,
    keys: &[Vec<u32>],
    wall_clock: bool,
) -> Result<ConstantEstimates> {
    let mut stats = SearchStats::default();
    let md_avg = two_rounds(keys, wall_clock, |cache, key| {
        md.lookup_counted(cache, key, &mut stats).map(drop)
    })?;
    let table_avg = two_rounds(keys, wall_clock, |cache, key| {
        table.lookup(cache, key).map(drop)
    })?;
    Ok(ConstantEstimates {
        md: md_avg,
        table: table_avg,
        md_decoded: if stats.searches == 0 {
            0.0
        } else {
            stats.decoded as f64 / stats.searches as f64
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_page_population() {
        let mut c = PageCache::unbounded();
        let t = simulate(&AccessModel::Single { pages: 1 }, &mut c, 20, 3).unwrap();
        assert_eq!(t.records[0].fetched, 1);
        assert_eq!(t.records[0].resident, 1);
        assert!(t.records[1..]
            .iter()
            .all(|r| r.fetched == 0 && r.resident == 1));
    }

    #[test]
    fn leveled_cold_access_fetches_every_level() {
        let m = AccessModel::Leveled {
            pages: vec![1, 10, 100],
        };
        for seed in 0..20 {
            let mut c = PageCache::unbounded();
            let t = simulate(&m, &mut c, 1, seed).unwrap();
            assert_eq!(t.records[0].fetched, 3);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let m = AccessModel::Leveled {
            pages: vec![1, 7, 49],
        };
        let run = |seed| simulate(&m, &mut PageCache::unbounded(), 500, seed).unwrap();
        assert_eq!(run(9), run(9));
        assert_ne!(run(9), run(10));
    }

    #[test]
    fn unbounded_resident_is_monotone() {
        let m = AccessModel::Single { pages: 50 };
        let t = simulate(&m, &mut PageCache::unbounded(), 1000, 1).unwrap();
        assert!(t.records.windows(2).all(|w| w[0].resident <= w[1].resident));
        assert_eq!(t.total_fetches(), t.records.last().unwrap().resident);
    }

    #[test]
    fn bounded_cache_stays_bounded() {
        let m = AccessModel::Single { pages: 50 };
        let t = simulate(&m, &mut PageCache::bounded(10), 1000, 1).unwrap();
        assert!(t.records.iter().all(|r| r.resident <= 10));
    }

    #[test]
    fn rejects_bad_input() {
        let mut c = PageCache::unbounded();
        assert!(simulate(&AccessModel::Single { pages: 0 }, &mut c, 1, 0).is_err());
        assert!(simulate(&AccessModel::Single { pages: 3 }, &mut c, 0, 0).is_err());
        assert!(simulate_trials(&AccessModel::Single { pages: 3 }, &[1, 2], 5, 0, 1).is_err());
    }

    #[test]
    fn trials_independent_of_thread_count() {
        let m = AccessModel::Leveled {
            pages: vec![1, 10, 100],
        };
        let a = simulate_trials(&m, &[1, 10, 100], 200, 5, 1).unwrap();
        let b = simulate_trials(&m, &[1, 10, 100], 200, 5, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[0].resident.mean, 3.0);
        assert_eq!(a[0].resident.std_error, 0.0);
        assert_eq!(a[0].resident_per_level[0].mean, 1.0);
    }

    #[test]
    fn csv_export() {
        let mut c = PageCache::unbounded();
        let t = simulate(&AccessModel::Single { pages: 2 }, &mut c, 2, 0).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "i,fetched,resident");
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("1,1,1"));
    }
}
