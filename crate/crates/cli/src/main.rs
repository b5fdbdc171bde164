use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use cubelab::analytics::{
    dominance_thresholds, preset, MdCacheModel, RepresentationConstants, SpeedupParams,
    TableCacheModel, PRESETS,
};
use cubelab::cache::PageCache;
use cubelab::dhc::DhcHeader;
use cubelab::dsc::{DscHeader, DscParams};
use cubelab::experiment::{
    build_workbench, config_hash, plot_series, read_report, run_experiment, write_series,
    ExperimentConfig,
};
use cubelab::relation::{
    generate_synthetic, read_relation, write_relation, Relation, SyntheticSpec,
};
use cubelab::sim::{simulate, simulate_trials, AccessModel};
use cubelab::store::{LookupStore, MultidimStore, PositionIndex};
use cubelab::table::{TableStore, HEAP_FILE, INDEX_FILE};
use cubelab::{Error, PAGE_SIZE};
use serde_json::json;

#[derive(Parser)]
#[command(
    name = "cubelab",
    version,
    about = "Compressed multidimensional arrays versus B-tree tables"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic relation file.
    Generate(GenerateArgs),
    /// Build stores from a relation file and report their sizes.
    Build(BuildArgs),
    /// Look keys up in a built store.
    Lookup(LookupArgs),
    /// Evaluate the cache and retrieval time models.
    Model(ModelArgs),
    /// Simulate uniform page accesses against a cold cache.
    Simulate(SimulateArgs),
    /// Run the memory versus fetches experiment on both stores.
    Experiment(ExperimentArgs),
    /// Turn an experiment report into gnuplot data files.
    Plot(PlotArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Dimension cardinalities.
    #[arg(long, value_delimiter = ',', required = true)]
    cards: Vec<u64>,
    #[arg(long, default_value_t = 1)]
    measures: usize,
    /// Fraction of nonempty cells.
    #[arg(long)]
    density: f64,
    /// Clustering of nonempty cells in [0, 1).
    #[arg(long, default_value_t = 0.0)]
    skew: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file; stdout when absent.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Which {
    Dhc,
    Dsc,
    Table,
    All,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum StoreKind {
    Dhc,
    Dsc,
    Table,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MdKind {
    Dhc,
    Dsc,
}

#[derive(Args)]
struct BuildArgs {
    /// Relation file.
    #[arg(long, short)]
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = Which::All)]
    which: Which,
    /// Difference width in bits.
    #[arg(long, default_value_t = 16)]
    bits: u32,
    /// Output directory.
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct LookupArgs {
    /// Directory written by `build`.
    #[arg(long)]
    store: PathBuf,
    #[arg(long, value_enum)]
    which: StoreKind,
    /// Comma-separated key; repeatable.
    #[arg(long = "key")]
    keys: Vec<String>,
    /// File with one comma-separated key per line.
    #[arg(long)]
    keys_file: Option<PathBuf>,
    /// Clear the cache before every lookup.
    #[arg(long)]
    cold: bool,
}

#[derive(Args)]
struct ModelArgs {
    /// Benchmark preset with constants and sizes.
    #[arg(long, value_parser = preset_names())]
    preset: Option<String>,
    #[arg(long)]
    m_m: Option<f64>,
    #[arg(long)]
    m_t: Option<f64>,
    #[arg(long)]
    d_m: Option<f64>,
    #[arg(long)]
    d_t: Option<f64>,
    /// Table store size S in bytes.
    #[arg(long)]
    table_bytes: Option<f64>,
    /// Compressed array size C in bytes.
    #[arg(long)]
    compressed_bytes: Option<f64>,
    /// Preloaded header size H in bytes.
    #[arg(long)]
    preloaded_bytes: Option<f64>,
    /// Pages of the compressed array; defaults to C / page size.
    #[arg(long)]
    md_pages: Option<u64>,
    /// Pages per table level, root first.
    #[arg(long, value_delimiter = ',')]
    profile: Vec<u64>,
    /// Largest access count of the cache curves.
    #[arg(long)]
    accesses: Option<u64>,
    /// Grid points per curve.
    #[arg(long, default_value_t = 200)]
    points: usize,
    #[arg(long, short)]
    out: PathBuf,
}

fn preset_names() -> clap::builder::PossibleValuesParser {
    clap::builder::PossibleValuesParser::new(PRESETS.map(|p| p.name))
}

#[derive(Args)]
struct SimulateArgs {
    /// Size of a single page population.
    #[arg(long, conflicts_with = "profile")]
    pages: Option<u64>,
    /// Pages per level for leveled accesses.
    #[arg(long, value_delimiter = ',')]
    profile: Vec<u64>,
    #[arg(long)]
    accesses: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Independent trials; more than one writes per-checkpoint aggregates.
    #[arg(long, default_value_t = 1)]
    trials: u64,
    /// Access counts at which aggregates are reported.
    #[arg(long, value_delimiter = ',')]
    checkpoints: Vec<u64>,
    /// Cache capacity in pages for a single trial; unbounded by default.
    #[arg(long)]
    capacity: Option<usize>,
    #[arg(long, default_value_t = 1)]
    trials_parallel: usize,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct ExperimentArgs {
    /// JSON configuration; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    cards: Option<Vec<u64>>,
    #[arg(long)]
    measures: Option<usize>,
    #[arg(long)]
    density: Option<f64>,
    #[arg(long)]
    skew: Option<f64>,
    #[arg(long)]
    bits: Option<u32>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    passes: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    /// Also record wall-clock times.
    #[arg(long)]
    wall_clock: bool,
    #[arg(long, value_enum, default_value_t = MdKind::Dhc)]
    which: MdKind,
    #[arg(long, default_value_t = 1)]
    trials_parallel: usize,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct PlotArgs {
    /// Report written by `experiment`.
    #[arg(long)]
    report: PathBuf,
    #[arg(long, short)]
    out: PathBuf,
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::KeyOutOfRange { .. } => "KeyOutOfRange",
        Error::KeyArity { .. } => "KeyArity",
        Error::PositionOutOfRange { .. } => "PositionOutOfRange",
        Error::EmptyRelation => "EmptyRelation",
        Error::InvalidSchema(_) => "InvalidSchema",
        Error::InvalidDensity(_) => "InvalidDensity",
        Error::InvalidSkew(_) => "InvalidSkew",
        Error::EmptyInput => "EmptyInput",
        Error::NotStrictlyIncreasing { .. } => "NotStrictlyIncreasing",
        Error::InvalidDifferenceWidth(_) => "InvalidDifferenceWidth",
        Error::CorruptHeader(_) => "CorruptHeader",
        Error::EmptyAlphabet => "EmptyAlphabet",
        Error::SymbolNotInCode(_) => "SymbolNotInCode",
        Error::TruncatedStream(_) => "TruncatedStream",
        Error::InvalidOccupancy { .. } => "InvalidOccupancy",
        Error::InvalidProbability(_) => "InvalidProbability",
        Error::ModelHypothesisViolated(_) => "ModelHypothesisViolated",
        Error::DegenerateProfile => "DegenerateProfile",
        Error::InsufficientMemory { .. } => "InsufficientMemory",
        Error::InvalidConfig(_) => "InvalidConfig",
        Error::Format(_) => "Format",
        Error::Io(_) => "Io",
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) => 4,
        Error::EmptyRelation
        | Error::InvalidSchema(_)
        | Error::InvalidDensity(_)
        | Error::InvalidSkew(_)
        | Error::InvalidDifferenceWidth(_)
        | Error::InvalidOccupancy { .. }
        | Error::InvalidProbability(_)
        | Error::InsufficientMemory { .. }
        | Error::DegenerateProfile
        | Error::InvalidConfig(_)
        | Error::KeyArity { .. }
        | Error::KeyOutOfRange { .. } => 2,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Build(a) => cmd_build(a),
        Command::Lookup(a) => cmd_lookup(a),
        Command::Model(a) => cmd_model(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Experiment(a) => cmd_experiment(a),
        Command::Plot(a) => cmd_plot(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}: {e}", error_kind(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}

type Result<T> = cubelab::Result<T>;

fn with_path(path: &Path) -> impl FnOnce(io::Error) -> Error + '_ {
    move |e| Error::Io(io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(with_path(path))?))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).map_err(with_path(path))?))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| with_path(path)(e))
}

fn usage(msg: impl Into<String>) -> Error {
    Error::InvalidConfig(msg.into())
}

fn cmd_generate(a: GenerateArgs) -> Result<()> {
    let spec = SyntheticSpec {
        seed: a.seed,
        cardinalities: a.cards,
        measure_count: a.measures,
        density: a.density,
        skew: a.skew,
    };
    let hash = config_hash(&json!({ "command": "generate", "spec": spec }));
    let relation = generate_synthetic(&spec)?;
    match &a.out {
        Some(path) => write_relation(&relation, create(path)?, Some(&hash))?,
        None => write_relation(&relation, io::stdout().lock(), Some(&hash))?,
    }
    eprintln!("{} cells, config_hash={hash}", relation.len());
    Ok(())
}

fn load_relation(path: &Path) -> Result<(Relation, String)> {
    let text = read_text(path)?;
    let relation = read_relation(text.as_bytes())?;
    Ok((relation, config_hash(&text)))
}

struct SizeRow {
    tag: &'static str,
    files: Vec<&'static str>,
    preloaded: u64,
    paged: u64,
}

impl SizeRow {
    fn total(&self) -> u64 {
        self.preloaded + self.paged
    }
}

fn build_md<H: PositionIndex>(
    relation: &Relation,
    params: DscParams,
    dir: &Path,
) -> Result<SizeRow> {
    let store = MultidimStore::<H>::build(relation, params, dir)?;
    let sizes = store.store_sizes();
    Ok(SizeRow {
        tag: H::TAG,
        files: vec![
            H::FILE_NAME,
            cubelab::store::DIMS_FILE,
            cubelab::store::CELLS_FILE,
        ],
        preloaded: sizes.preloaded,
        paged: sizes.compressed,
    })
}

fn cmd_build(a: BuildArgs) -> Result<()> {
    let (relation, input_hash) = load_relation(&a.input)?;
    if relation.is_empty() {
        return Err(Error::EmptyRelation);
    }
    let params = DscParams::new(a.bits)?;
    let which = match a.which {
        Which::Dhc => "dhc",
        Which::Dsc => "dsc",
        Which::Table => "table",
        Which::All => "all",
    };
    let hash = config_hash(&json!({
        "command": "build",
        "input": input_hash,
        "which": which,
        "bits": a.bits,
    }));
    fs::create_dir_all(&a.out)?;
    let mut rows = Vec::new();
    let mut table_info = None;
    if matches!(a.which, Which::Table | Which::All) {
        let table = TableStore::build(&relation, &a.out)?;
        rows.push(SizeRow {
            tag: "table",
            files: vec![HEAP_FILE, INDEX_FILE],
            preloaded: 0,
            paged: table.size_bytes(),
        });
        table_info = Some(json!({
            "fanout": table.fanout(),
            "rows_per_page": table.rows_per_page(),
            "levels": table.levels(),
            "level_pages": table.level_profile().pages(),
            "heap_bytes": table.heap_bytes(),
            "index_bytes": table.index_bytes(),
        }));
    }
    if matches!(a.which, Which::Dsc | Which::All) {
        rows.push(build_md::<DscHeader>(&relation, params, &a.out)?);
    }
    if matches!(a.which, Which::Dhc | Which::All) {
        rows.push(build_md::<DhcHeader>(&relation, params, &a.out)?);
    }
    let table_bytes = rows.iter().find(|r| r.tag == "table").map(SizeRow::total);
    let percent = |r: &SizeRow| table_bytes.map(|t| 100.0 * r.total() as f64 / t as f64);

    let mut out = create(&a.out.join("sizes.csv"))?;
    writeln!(out, "# config_hash={hash}")?;
    writeln!(
        out,
        "representation,size_bytes,percent_of_table,preloaded_bytes,paged_bytes"
    )?;
    for r in &rows {
        let pct = percent(r).map(|p| format!("{p:.1}")).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{}",
            r.tag,
            r.total(),
            pct,
            r.preloaded,
            r.paged
        )?;
    }
    out.flush()?;

    let manifest = json!({
        "config_hash": hash,
        "input": a.input,
        "bits": a.bits,
        "cells": relation.len(),
        "cardinalities": relation.schema().cardinalities(),
        "measures": relation.schema().measure_count(),
        "page_size": PAGE_SIZE,
        "stores": rows.iter().map(|r| json!({
            "representation": r.tag,
            "files": r.files,
            "size_bytes": r.total(),
            "preloaded_bytes": r.preloaded,
            "paged_bytes": r.paged,
            "percent_of_table": percent(r),
        })).collect::<Vec<_>>(),
        "table": table_info,
    });
    fs::write(
        a.out.join("manifest.json"),
        serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n",
    )?;

    println!(
        "{:<14}{:>16}{:>12}",
        "representation", "size in bytes", "percentage"
    );
    for r in &rows {
        let pct = percent(r)
            .map(|p| format!("{p:.1}%"))
            .unwrap_or_else(|| "-".into());
        println!("{:<14}{:>16}{:>12}", r.tag, r.total(), pct);
    }
    Ok(())
}

fn parse_key(text: &str) -> Result<Vec<u32>> {
    text.split(',')
        .map(|c| {
            c.trim()
                .parse::<u32>()
                .map_err(|e| usage(format!("bad key component {c:?}: {e}")))
        })
        .collect()
}

fn open_store(dir: &Path, which: StoreKind) -> Result<Box<dyn LookupStore>> {
    Ok(match which {
        StoreKind::Dhc => Box::new(MultidimStore::<DhcHeader>::open(dir)?),
        StoreKind::Dsc => Box::new(MultidimStore::<DscHeader>::open(dir)?),
        StoreKind::Table => Box::new(TableStore::open(dir)?),
    })
}

fn cmd_lookup(a: LookupArgs) -> Result<()> {
    let mut texts = a.keys.clone();
    if let Some(path) = &a.keys_file {
        for line in open(path)?.lines() {
            let line = line?;
            if !line.trim().is_empty() {
                texts.push(line);
            }
        }
    }
    if texts.is_empty() {
        return Err(usage("no keys given"));
    }
    let keys = texts
        .iter()
        .map(|t| parse_key(t))
        .collect::<Result<Vec<_>>>()?;
    let store = open_store(&a.store, a.which)?;
    let hash = config_hash(&json!({
        "command": "lookup",
        "store": store.tag(),
        "keys": keys,
        "cold": a.cold,
    }));
    let schema = store.schema();
    for key in &keys {
        schema.check_key(key)?;
    }
    let mut cache = PageCache::unbounded();
    let stdout = io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    writeln!(out, "# config_hash={hash}")?;
    let mut header: Vec<String> = (0..schema.dimension_count())
        .map(|d| format!("k{d}"))
        .collect();
    header.push("found".into());
    header.push("fetches".into());
    header.extend((0..schema.measure_count()).map(|m| format!("m{m}")));
    writeln!(out, "{}", header.join(","))?;
    for key in &keys {
        if a.cold {
            cache.clear();
        }
        let before = cache.stats().fetches;
        let got = store.lookup(&mut cache, key)?;
        let mut fields: Vec<String> = key.iter().map(u32::to_string).collect();
        fields.push(got.is_some().to_string());
        fields.push((cache.stats().fetches - before).to_string());
        match got {
            Some(values) => fields.extend(values.iter().map(f64::to_string)),
            None => fields.extend((0..schema.measure_count()).map(|_| String::new())),
        }
        writeln!(out, "{}", fields.join(","))?;
    }
    out.flush()?;
    Ok(())
}

/// About `points` distinct integers spread geometrically over `0..=max`.
fn access_grid(max: u64, points: usize) -> Vec<u64> {
    let mut grid = vec![0];
    if max == 0 {
        return grid;
    }
    let steps = points.max(2) - 1;
    for k in 0..=steps {
        let v = ((max as f64).powf(k as f64 / steps as f64)).round() as u64;
        if v > *grid.last().unwrap() {
            grid.push(v);
        }
    }
    if *grid.last().unwrap() != max {
        grid.push(max);
    }
    grid
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

fn cmd_model(a: ModelArgs) -> Result<()> {
    let base = a.preset.as_deref().and_then(preset);
    let pick = |flag: Option<f64>, from_preset: Option<f64>, name: &str| {
        flag.or(from_preset)
            .ok_or_else(|| usage(format!("--{name} or --preset is required")))
    };
    let c = base.map(|p| p.constants);
    let constants = RepresentationConstants::new(
        pick(a.m_m, c.map(|c| c.m_m), "m-m")?,
        pick(a.m_t, c.map(|c| c.m_t), "m-t")?,
        pick(a.d_m, c.map(|c| c.d_m), "d-m")?,
        pick(a.d_t, c.map(|c| c.d_t), "d-t")?,
    )?;
    let params = SpeedupParams::new(
        pick(
            a.table_bytes,
            base.map(|p| p.table_bytes as f64),
            "table-bytes",
        )?,
        pick(
            a.compressed_bytes,
            base.map(|p| p.compressed_bytes as f64),
            "compressed-bytes",
        )?,
        pick(
            a.preloaded_bytes,
            base.map(|p| p.preloaded_bytes as f64),
            "preloaded-bytes",
        )?,
        constants,
    )?;
    let md_pages = a
        .md_pages
        .unwrap_or_else(|| ((params.compressed_bytes / PAGE_SIZE as f64).ceil() as u64).max(1));
    let md_model = MdCacheModel::new(md_pages)?;
    let table_model = if a.profile.is_empty() {
        None
    } else {
        Some(TableCacheModel::from_pages(a.profile.clone())?)
    };
    if a.points < 2 {
        return Err(usage("--points must be at least 2"));
    }
    let hash = config_hash(&json!({
        "command": "model",
        "constants": [constants.m_m, constants.m_t, constants.d_m, constants.d_t],
        "sizes": [params.table_bytes, params.compressed_bytes, params.preloaded_bytes],
        "md_pages": md_pages,
        "profile": a.profile,
        "accesses": a.accesses,
        "points": a.points,
    }));
    fs::create_dir_all(&a.out)?;

    let th = dominance_thresholds(&constants)?;
    let mut out = create(&a.out.join("thresholds.csv"))?;
    writeln!(out, "# config_hash={hash}")?;
    writeln!(out, "sufficient_pt,case1_pt,case2_pm,slope,intercept")?;
    writeln!(
        out,
        "{:.6},{},{},{:.6},{:.6}",
        th.sufficient_pt,
        fmt_opt(th.case1_pt),
        fmt_opt(th.case2_pm),
        th.slope,
        th.intercept
    )?;
    out.flush()?;

    let max = params.speedup_max();
    let mut out = create(&a.out.join("speedup.csv"))?;
    writeln!(out, "# config_hash={hash}")?;
    writeln!(
        out,
        "# max at memory_bytes={:.0} speedup={:.6} hypothesis_holds={}",
        max.location, max.value, max.hypothesis_holds
    )?;
    writeln!(out, "memory_bytes,t_m,t_t,speedup")?;
    let lo = params.preloaded_bytes;
    let hi = 1.25
        * params
            .table_bytes
            .max(params.compressed_bytes + params.preloaded_bytes);
    let mut xs: Vec<f64> = (0..a.points)
        .map(|k| lo + (hi - lo) * k as f64 / (a.points - 1) as f64)
        .collect();
    xs.push(max.location);
    xs.push(params.table_bytes);
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    for x in xs.into_iter().filter(|&x| x >= lo) {
        writeln!(
            out,
            "{x:.0},{:.6},{:.6},{:.6}",
            params.t_m(x)?,
            params.t_t(x)?,
            params.speedup(x)?
        )?;
    }
    out.flush()?;
    if !max.hypothesis_holds {
        eprintln!("warning: ModelHypothesisViolated: the speed-up curve shape is not guaranteed");
    }

    let accesses = a.accesses.unwrap_or_else(|| {
        let n = table_model
            .as_ref()
            .map_or(md_pages, |t| t.total_pages().max(md_pages));
        n.saturating_mul(10)
    });
    let grid = access_grid(accesses, a.points);
    let mut out = create(&a.out.join("cache_md.csv"))?;
    writeln!(out, "# config_hash={hash}")?;
    writeln!(out, "i,cached,fetch")?;
    for &i in &grid {
        writeln!(
            out,
            "{i},{:.6},{:.9}",
            md_model.expected_cached(i),
            md_model.expected_fetch_after(i)
        )?;
    }
    out.flush()?;

    if let Some(t) = &table_model {
        let mut out = create(&a.out.join("cache_table.csv"))?;
        writeln!(out, "# config_hash={hash}")?;
        writeln!(out, "i,cached,fetch,est")?;
        for &i in &grid {
            let (cached, _) = t.expected_cached(i);
            let est = t.fetch_limit_after(i).ok();
            writeln!(
                out,
                "{i},{cached:.6},{:.9},{}",
                t.expected_fetch_after(i),
                fmt_opt(est)
            )?;
        }
        out.flush()?;
    }

    println!("config_hash={hash}");
    println!(
        "thresholds: sufficient p_t {:.3}, case 1 p_t {}, case 2 p_m {}, line p_m = {:.3} p_t + {:.3}",
        th.sufficient_pt,
        th.case1_pt.map_or("-".into(), |v| format!("{v:.3}")),
        th.case2_pm.map_or("-".into(), |v| format!("{v:.3}")),
        th.slope,
        th.intercept
    );
    println!("speed-up max {:.1} at {:.0} bytes", max.value, max.location);
    Ok(())
}

fn default_checkpoints(accesses: u64) -> Vec<u64> {
    let mut out: Vec<u64> = Vec::new();
    for v in access_grid(accesses, 50) {
        if out.last().is_none_or(|&p| v >= p + 2) {
            out.push(v);
        }
    }
    out
}

enum Predictor {
    Single(MdCacheModel),
    Leveled(TableCacheModel),
}

impl Predictor {
    fn cached(&self, i: u64) -> f64 {
        match self {
            Predictor::Single(m) => m.expected_cached(i),
            Predictor::Leveled(t) => t.expected_cached(i).0,
        }
    }

    fn fetch(&self, i: u64) -> f64 {
        match self {
            Predictor::Single(m) => m.expected_fetch_after(i),
            Predictor::Leveled(t) => t.expected_fetch_after(i),
        }
    }
}

fn cmd_simulate(a: SimulateArgs) -> Result<()> {
    let model = match (a.pages, a.profile.is_empty()) {
        (Some(pages), true) => AccessModel::Single { pages },
        (None, false) => AccessModel::Leveled {
            pages: a.profile.clone(),
        },
        _ => return Err(usage("give exactly one of --pages or --profile")),
    };
    let hash = config_hash(&json!({
        "command": "simulate",
        "populations": model.levels(),
        "leveled": matches!(model, AccessModel::Leveled { .. }),
        "accesses": a.accesses,
        "seed": a.seed,
        "trials": a.trials,
        "checkpoints": a.checkpoints,
        "capacity": a.capacity,
    }));
    let mut out = create(&a.out)?;
    writeln!(out, "# config_hash={hash}")?;
    if a.trials <= 1 {
        let mut cache = PageCache::new(a.capacity);
        let trace = simulate(&model, &mut cache, a.accesses, a.seed)?;
        trace.write_csv(&mut out)?;
        eprintln!(
            "{} fetches over {} accesses",
            trace.total_fetches(),
            a.accesses
        );
        return Ok(());
    }
    if a.capacity.is_some() {
        return Err(usage("--capacity applies to a single trial only"));
    }
    let checkpoints = if a.checkpoints.is_empty() {
        default_checkpoints(a.accesses)
    } else {
        a.checkpoints.clone()
    };
    let summary = simulate_trials(&model, &checkpoints, a.trials, a.seed, a.trials_parallel)?;
    let levels = model.levels().len();
    let predictor = match &model {
        AccessModel::Single { pages } => Predictor::Single(MdCacheModel::new(*pages)?),
        AccessModel::Leveled { pages } => {
            Predictor::Leveled(TableCacheModel::from_pages(pages.clone())?)
        }
    };
    write!(
        out,
        "i,resident_mean,resident_se,next_fetch_mean,next_fetch_se,model_resident,model_fetch"
    )?;
    if levels > 1 {
        for l in 1..=levels {
            write!(out, ",level{l}_mean")?;
        }
    }
    writeln!(out)?;
    for s in &summary {
        write!(
            out,
            "{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            s.i,
            s.resident.mean,
            s.resident.std_error,
            s.next_fetch.mean,
            s.next_fetch.std_error,
            predictor.cached(s.i),
            predictor.fetch(s.i)
        )?;
        if levels > 1 {
            for e in &s.resident_per_level {
                write!(out, ",{:.6}", e.mean)?;
            }
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

fn experiment_config(a: &ExperimentArgs) -> Result<ExperimentConfig> {
    let mut c = match &a.config {
        Some(path) => {
            let text = read_text(path)?;
            serde_json::from_str(&text).map_err(|e| usage(e.to_string()))?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(v) = a.seed {
        c.seed = v;
    }
    if let Some(v) = &a.cards {
        c.cardinalities = v.clone();
    }
    if let Some(v) = a.measures {
        c.measures = v;
    }
    if let Some(v) = a.density {
        c.density = v;
    }
    if let Some(v) = a.skew {
        c.skew = v;
    }
    if let Some(v) = a.bits {
        c.bits = v;
    }
    if let Some(v) = a.samples {
        c.samples_per_pass = v;
    }
    if let Some(v) = a.passes {
        c.passes = v;
    }
    if let Some(v) = a.trials {
        c.trials = v;
    }
    c.wall_clock |= a.wall_clock;
    c.validate()?;
    Ok(c)
}

fn run_md_experiment<H: PositionIndex + Sync>(
    config: &ExperimentConfig,
    out: &Path,
    threads: usize,
) -> Result<cubelab::experiment::ExperimentReport> {
    let stores = out.join("stores");
    fs::create_dir_all(&stores)?;
    let wb = build_workbench::<H>(config, &stores)?;
    let keys: Vec<Vec<u32>> = wb.relation.keys().collect();
    eprintln!(
        "{} cells, md pages {}, table levels {:?}",
        keys.len(),
        wb.md.cell_pages(),
        wb.table.level_profile().pages()
    );
    run_experiment(config, &wb.md, &wb.table, &keys, threads)
}

fn cmd_experiment(a: ExperimentArgs) -> Result<()> {
    let config = experiment_config(&a)?;
    fs::create_dir_all(&a.out)?;
    fs::write(a.out.join("config.json"), config.to_json() + "\n")?;
    let report = match a.which {
        MdKind::Dhc => run_md_experiment::<DhcHeader>(&config, &a.out, a.trials_parallel)?,
        MdKind::Dsc => run_md_experiment::<DscHeader>(&config, &a.out, a.trials_parallel)?,
    };
    report.write_csv(create(&a.out.join("report.csv"))?)?;
    let fit = report.fit();
    let summary = json!({
        "config_hash": report.config_hash,
        "md_max_rel_dev": fit.md_max_rel_dev,
        "table_max_rel_dev": fit.table_max_rel_dev,
        "md_always_cheaper": report.md_always_cheaper(),
    });
    fs::write(
        a.out.join("fit.json"),
        serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n",
    )?;
    println!("config_hash={}", report.config_hash);
    println!(
        "max relative deviation from model: md {:.2}%, table {:.2}%",
        100.0 * fit.md_max_rel_dev,
        100.0 * fit.table_max_rel_dev
    );
    println!(
        "md fetches below table at every pass: {}",
        report.md_always_cheaper()
    );
    Ok(())
}

fn cmd_plot(a: PlotArgs) -> Result<()> {
    let report = read_report(open(&a.report)?)?;
    fs::create_dir_all(&a.out)?;
    for series in plot_series(&report) {
        let mut out = create(&a.out.join(series.file_name))?;
        write_series(&series, &report.config_hash, &mut out)?;
        out.flush()?;
    }
    Ok(())
}
