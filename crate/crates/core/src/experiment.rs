//! End-to-end experiments: both representations of one synthetic relation,
//! queried pass after pass with keys sampled uniformly with replacement,
//! each representation through its own initially cold cache.
//!
//! After every pass the report records the memory in use (resident pages,
//! plus the preloaded header for the multidimensional store), the measured
//! fetches per lookup, and the model's prediction. The prediction is taken
//! per lookup at the occupancy the cache actually had and averaged the same
//! way as the measurement.

use std::io::{BufRead, Write};
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analytics::{MdCacheModel, TableCacheModel};
use crate::cache::PageCache;
use crate::dsc::DscParams;
use crate::error::{Error, Result};
use crate::relation::{generate_synthetic, Relation, SyntheticSpec};
use crate::sim::{sample_keys, trial_rng};
use crate::store::{MultidimStore, PositionIndex};
use crate::table::TableStore;
use crate::PAGE_SIZE;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub cardinalities: Vec<u64>,
    pub measures: usize,
    pub density: f64,
    pub skew: f64,
    /// Width of a stored difference in bits.
    pub bits: u32,
    pub page_size: usize,
    pub samples_per_pass: usize,
    pub passes: usize,
    pub trials: usize,
    /// Cache capacity in pages for each pass; empty means unbounded.
    #[serde(default)]
    pub capacities: Vec<usize>,
    #[serde(default)]
    pub wall_clock: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            cardinalities: vec![1000, 1000, 1000],
            measures: 2,
            density: 1e-4,
            skew: 0.9,
            bits: 16,
            page_size: PAGE_SIZE,
            samples_per_pass: 100,
            passes: 100,
            trials: 1,
            capacities: Vec::new(),
            wall_clock: false,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.cardinalities.is_empty() || self.cardinalities.contains(&0) {
            return bad("cardinalities must be nonempty and positive".into());
        }
        if self.measures == 0 {
            return bad("at least one measure is required".into());
        }
        if !(self.density > 0.0 && self.density <= 1.0) {
            return Err(Error::InvalidDensity(self.density));
        }
        if !(0.0..1.0).contains(&self.skew) {
            return Err(Error::InvalidSkew(self.skew));
        }
        DscParams::new(self.bits)?;
        if self.page_size != PAGE_SIZE {
            return bad(format!(
                "page size must be {PAGE_SIZE}, got {}",
                self.page_size
            ));
        }
        if self.samples_per_pass == 0 || self.passes == 0 || self.trials == 0 {
            return bad("samples, passes and trials must be positive".into());
        }
        if !self.capacities.is_empty() {
            if self.capacities.len() != self.passes {
                return bad(format!(
                    "{} capacities given for {} passes",
                    self.capacities.len(),
                    self.passes
                ));
            }
            if self.capacities.contains(&0) {
                return bad("cache capacities must be positive".into());
            }
        }
        Ok(())
    }

    pub fn synthetic_spec(&self) -> SyntheticSpec {
        SyntheticSpec {
            seed: self.seed,
            cardinalities: self.cardinalities.clone(),
            measure_count: self.measures,
            density: self.density,
            skew: self.skew,
        }
    }

    pub fn params(&self) -> Result<DscParams> {
        DscParams::new(self.bits)
    }

    pub fn hash(&self) -> String {
        config_hash(self)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self =
            serde_json::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }
}

/// First 16 hex digits of the SHA-256 of the JSON encoding of `value`.
pub fn config_hash<T: serde::Serialize + ?Sized>(value: &T) -> String {
    let json = serde_json::to_vec(value).expect("config serializes");
    Sha256::digest(&json)
        .iter()
        .take(8)
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// One pass of one representation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub representation: &'static str,
    pub pass: usize,
    pub memory_used_bytes: f64,
    pub avg_fetches: f64,
    pub avg_time_ms: Option<f64>,
    pub model_fetches: f64,
}

/// Largest relative deviation of measured from predicted fetches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FitSummary {
    pub md_max_rel_dev: f64,
    pub table_max_rel_dev: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub config_hash: String,
    pub md: Vec<ReportRow>,
    pub table: Vec<ReportRow>,
}

fn max_rel_dev(rows: &[ReportRow]) -> f64 {
    rows.iter()
        .map(|r| {
            if r.model_fetches == 0.0 {
                if r.avg_fetches == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            } else {
                (r.avg_fetches - r.model_fetches).abs() / r.model_fetches
            }
        })
        .fold(0.0, f64::max)
}

impl ExperimentReport {
    pub fn fit(&self) -> FitSummary {
        FitSummary {
            md_max_rel_dev: max_rel_dev(&self.md),
            table_max_rel_dev: max_rel_dev(&self.table),
        }
    }

    /// Whether the multidimensional store fetched strictly less at every pass.
    pub fn md_always_cheaper(&self) -> bool {
        self.md
            .iter()
            .zip(&self.table)
            .all(|(m, t)| m.avg_fetches < t.avg_fetches)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let timed = self.md.first().is_some_and(|r| r.avg_time_ms.is_some());
        writeln!(out, "# config_hash={}", self.config_hash)?;
        write!(
            out,
            "pass,md_memory_bytes,table_memory_bytes,md_avg_fetches,table_avg_fetches,md_model_fetches,table_model_fetches"
        )?;
        if timed {
            write!(out, ",md_avg_ms,table_avg_ms")?;
        }
        writeln!(out)?;
        for (m, t) in self.md.iter().zip(&self.table) {
            write!(
                out,
                "{},{:.1},{:.1},{:.6},{:.6},{:.6},{:.6}",
                m.pass,
                m.memory_used_bytes,
                t.memory_used_bytes,
                m.avg_fetches,
                t.avg_fetches,
                m.model_fetches,
                t.model_fetches
            )?;
            if timed {
                write!(
                    out,
                    ",{:.6},{:.6}",
                    m.avg_time_ms.unwrap_or(0.0),
                    t.avg_time_ms.unwrap_or(0.0)
                )?;
            }
            writeln!(out)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Reads the CSV written by [`ExperimentReport::write_csv`].
pub fn read_report<R: BufRead>(input: R) -> Result<ExperimentReport> {
    let mut hash = String::new();
    let mut header: Option<Vec<String>> = None;
    let mut md = Vec::new();
    let mut table = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            if let Some(h) = rest.trim().strip_prefix("config_hash=") {
                hash = h.to_string();
            }
            continue;
        }
        let Some(cols) = &header else {
            header = Some(line.split(',').map(str::to_string).collect());
            continue;
        };
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols.len() {
            return Err(Error::Format(format!(
                "line {}: expected {} fields",
                n + 1,
                cols.len()
            )));
        }
        let get = |name: &str| -> Result<Option<f64>> {
            match cols.iter().position(|c| c == name) {
                None => Ok(None),
                Some(i) => fields[i]
                    .parse()
                    .map(Some)
                    .map_err(|_| Error::Format(format!("line {}: bad {name}", n + 1))),
            }
        };
        let need = |name: &str| -> Result<f64> {
            get(name)?.ok_or_else(|| Error::Format(format!("missing column {name}")))
        };
        let pass = need("pass")? as usize;
        md.push(ReportRow {
            representation: "md",
            pass,
            memory_used_bytes: need("md_memory_bytes")?,
            avg_fetches: need("md_avg_fetches")?,
            avg_time_ms: get("md_avg_ms")?,
            model_fetches: need("md_model_fetches")?,
        });
        table.push(ReportRow {
            representation: "table",
            pass,
            memory_used_bytes: need("table_memory_bytes")?,
            avg_fetches: need("table_avg_fetches")?,
            avg_time_ms: get("table_avg_ms")?,
            model_fetches: need("table_model_fetches")?,
        });
    }
    Ok(ExperimentReport {
        config_hash: hash,
        md,
        table,
    })
}

/// Gnuplot-ready series: (memory in KiB, fetches per lookup).
#[derive(Debug, Clone, PartialEq)]
pub struct PlotSeries {
    pub file_name: &'static str,
    pub legend: &'static str,
    pub points: Vec<(f64, f64)>,
}

pub fn plot_series(report: &ExperimentReport) -> Vec<PlotSeries> {
    let kib = |rows: &[ReportRow], model: bool| -> Vec<(f64, f64)> {
        rows.iter()
            .map(|r| {
                let y = if model {
                    r.model_fetches
                } else {
                    r.avg_fetches
                };
                (r.memory_used_bytes / 1024.0, y)
            })
            .collect()
    };
    vec![
        PlotSeries {
            file_name: "array.dat",
            legend: "Array",
            points: kib(&report.md, false),
        },
        PlotSeries {
            file_name: "table.dat",
            legend: "Table",
            points: kib(&report.table, false),
        },
        PlotSeries {
            file_name: "array_est.dat",
            legend: "Array Est.",
            points: kib(&report.md, true),
        },
        PlotSeries {
            file_name: "table_est.dat",
            legend: "Table Est.",
            points: kib(&report.table, true),
        },
    ]
}

pub fn write_series<W: Write>(series: &PlotSeries, config_hash: &str, mut out: W) -> Result<()> {
    if series.points.is_empty() {
        return Ok(());
    }
    writeln!(out, "# {} config_hash={}", series.legend, config_hash)?;
    writeln!(out, "# memory_kib fetches_per_lookup")?;
    for (x, y) in &series.points {
        writeln!(out, "{x:.3} {y:.6}")?;
    }
    out.flush()?;
    Ok(())
}

/// Generated relation with both representations built in `dir`.
pub struct Workbench<H> {
    pub relation: Relation,
    pub md: MultidimStore<H>,
    pub table: TableStore,
}

pub fn build_workbench<H: PositionIndex>(
    config: &ExperimentConfig,
    dir: impl AsRef<Path>,
) -> Result<Workbench<H>> {
    config.validate()?;
    let relation = generate_synthetic(&config.synthetic_spec())?;
    let md = MultidimStore::<H>::build(&relation, config.params()?, dir.as_ref())?;
    let table = TableStore::build(&relation, dir.as_ref())?;
    Ok(Workbench {
        relation,
        md,
        table,
    })
}

#[derive(Debug, Clone, Copy, Default)]
struct PassTotals {
    fetches: u64,
    resident: u64,
    model: f64,
    ms: f64,
}

#[derive(Debug, Clone)]
struct TrialResult {
    md: Vec<PassTotals>,
    table: Vec<PassTotals>,
}

fn run_trial<H: PositionIndex>(
    config: &ExperimentConfig,
    md: &MultidimStore<H>,
    table: &TableStore,
    keys: &[Vec<u32>],
    md_model: &MdCacheModel,
    table_model: &TableCacheModel,
    trial: u64,
) -> Result<TrialResult> {
    let mut rng = trial_rng(config.seed, trial);
    let mut md_cache = PageCache::unbounded();
    let mut table_cache = PageCache::unbounded();
    let mut out = TrialResult {
        md: Vec::with_capacity(config.passes),
        table: Vec::with_capacity(config.passes),
    };
    for pass in 0..config.passes {
        let capacity = config.capacities.get(pass).copied();
        md_cache.set_capacity(capacity);
        table_cache.set_capacity(capacity);
        let sample = sample_keys(keys, config.samples_per_pass, &mut rng);
        let mut m = PassTotals::default();
        let mut t = PassTotals::default();
        for key in &sample {
            m.model += md_model.expected_fetch(md_cache.resident() as f64)?;
            let before = md_cache.stats().fetches;
            let start = Instant::now();
            md.lookup(&mut md_cache, key)?;
            m.ms += start.elapsed().as_secs_f64() * 1e3;
            m.fetches += md_cache.stats().fetches - before;

            t.model += table_model.fetch_at_occupancy(table_cache.resident() as f64)?;
            let before = table_cache.stats().fetches;
            let start = Instant::now();
            table.lookup(&mut table_cache, key)?;
            t.ms += start.elapsed().as_secs_f64() * 1e3;
            t.fetches += table_cache.stats().fetches - before;
        }
        m.resident = md_cache.resident() as u64;
        t.resident = table_cache.resident() as u64;
        out.md.push(m);
        out.table.push(t);
    }
    Ok(out)
}

/// Runs the configured passes `trials` times and averages over trials.
/// Trials may be spread over `threads` threads; the report does not depend
/// on the thread count.
pub fn run_experiment<H: PositionIndex + Sync>(
    config: &ExperimentConfig,
    md: &MultidimStore<H>,
    table: &TableStore,
    keys: &[Vec<u32>],
    threads: usize,
) -> Result<ExperimentReport> {
    config.validate()?;
    if keys.is_empty() {
        return Err(Error::EmptyRelation);
    }
    let md_model = MdCacheModel::new(md.cell_pages())?;
    let table_model = TableCacheModel::new(table.level_profile());
    let trials = config.trials as u64;
    let run = |range: std::ops::Range<u64>| -> Result<Vec<TrialResult>> {
        range
            .map(|t| run_trial(config, md, table, keys, &md_model, &table_model, t))
            .collect()
    };
    let threads = threads.max(1).min(config.trials);
    let results: Vec<TrialResult> = if threads == 1 {
        run(0..trials)?
    } else {
        let chunk = trials.div_ceil(threads as u64);
        let parts: Vec<Result<Vec<TrialResult>>> = std::thread::scope(|s| {
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
        let mut all = Vec::with_capacity(config.trials);
        for p in parts {
            all.extend(p?);
        }
        all
    };

    let lookups = (config.samples_per_pass * config.trials) as f64;
    let preloaded = md.store_sizes().preloaded as f64;
    let summarize =
        |tag: &'static str, pick: &dyn Fn(&TrialResult) -> &Vec<PassTotals>, extra: f64| {
            (0..config.passes)
                .map(|pass| {
                    let mut sum = PassTotals::default();
                    for r in &results {
                        let p = pick(r)[pass];
                        sum.fetches += p.fetches;
                        sum.resident += p.resident;
                        sum.model += p.model;
                        sum.ms += p.ms;
                    }
                    ReportRow {
                        representation: tag,
                        pass: pass + 1,
                        memory_used_bytes: sum.resident as f64 * PAGE_SIZE as f64
                            / config.trials as f64
                            + extra,
                        avg_fetches: sum.fetches as f64 / lookups,
                        avg_time_ms: config.wall_clock.then(|| sum.ms / lookups),
                        model_fetches: sum.model / lookups,
                    }
                })
                .collect::<Vec<_>>()
        };
    Ok(ExperimentReport {
        config_hash: config.hash(),
        md: summarize("md", &|r| &r.md, preloaded),
        table: summarize("table", &|r| &r.table, 0.0),
    })
}
