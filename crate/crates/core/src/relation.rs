//! Sparse relations over a star schema and their flattening into a single
//! virtual array.
//!
//! A cell is addressed by a composite key holding one dense surrogate per
//! dimension. Keys are linearized in row-major order with the dimensions in
//! declaration order, so the ordering of logical positions is the
//! lexicographic ordering of keys.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Ordinal of a cell in the flattened multidimensional array.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LogicalPosition(pub u64);

impl LogicalPosition {
    pub fn get(self) -> u64 {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Labels {
    /// `"{name}{i}"` for `i` in `0..cardinality`, never materialized.
    Generated(u64),
    Explicit {
        values: Vec<String>,
        index: HashMap<String, u32>,
    },
}

/// One dimension: a name and the labels its surrogates `0..cardinality`
/// stand for.
#[derive(Debug, Clone, PartialEq)]
pub struct DimensionSpec {
    name: String,
    labels: Labels,
}

const MAX_CARDINALITY: u64 = 1 << 32;

impl DimensionSpec {
    pub fn new(name: impl Into<String>, values: Vec<String>) -> Result<Self> {
        let name = name.into();
        if values.is_empty() {
            return Err(Error::InvalidSchema(format!(
                "dimension {name} has no values"
            )));
        }
        if values.len() as u64 > MAX_CARDINALITY {
            return Err(Error::InvalidSchema(format!(
                "dimension {name} has more than 2^32 values"
            )));
        }
        let mut index = HashMap::with_capacity(values.len());
        for (i, v) in values.iter().enumerate() {
            if index.insert(v.clone(), i as u32).is_some() {
                return Err(Error::InvalidSchema(format!(
                    "dimension {name} repeats value {v:?}"
                )));
            }
        }
        Ok(Self {
            name,
            labels: Labels::Explicit { values, index },
        })
    }

    /// A dimension whose labels are `"{name}{i}"` for `i` in `0..cardinality`.
    pub fn with_cardinality(name: impl Into<String>, cardinality: u64) -> Result<Self> {
        let name = name.into();
        if cardinality == 0 {
            return Err(Error::InvalidSchema(format!(
                "dimension {name} has no values"
            )));
        }
        if cardinality > MAX_CARDINALITY {
            return Err(Error::InvalidSchema(format!(
                "dimension {name} has more than 2^32 values"
            )));
        }
        Ok(Self {
            name,
            labels: Labels::Generated(cardinality),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// The label list, unless the labels are generated from the name.
    pub fn explicit_values(&self) -> Option<&[String]> {
        match &self.labels {
            Labels::Generated(_) => None,
            Labels::Explicit { values, .. } => Some(values),
        }
    }

    pub fn cardinality(&self) -> u64 {
        match &self.labels {
            Labels::Generated(c) => *c,
            Labels::Explicit { values, .. } => values.len() as u64,
        }
    }

    pub fn index_of(&self, value: &str) -> Option<u32> {
        match &self.labels {
            Labels::Generated(c) => {
                let digits = value.strip_prefix(self.name.as_str())?;
                let i: u64 = digits.parse().ok()?;
                (i < *c && i.to_string() == digits).then_some(i as u32)
            }
            Labels::Explicit { index, .. } => index.get(value).copied(),
        }
    }

    pub fn value_at(&self, index: u32) -> Option<String> {
        match &self.labels {
            Labels::Generated(c) => {
                (u64::from(index) < *c).then(|| format!("{}{index}", self.name))
            }
            Labels::Explicit { values, .. } => values.get(index as usize).cloned(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelationSchema {
    dimensions: Vec<DimensionSpec>,
    measure_count: usize,
    total_space: u64,
}

impl RelationSchema {
    pub fn new(dimensions: Vec<DimensionSpec>, measure_count: usize) -> Result<Self> {
        if dimensions.is_empty() {
            return Err(Error::InvalidSchema(
                "at least one dimension is required".into(),
            ));
        }
        if measure_count == 0 {
            return Err(Error::InvalidSchema(
                "at least one measure is required".into(),
            ));
        }
        let mut total_space: u64 = 1;
        for d in &dimensions {
            total_space = total_space.checked_mul(d.cardinality()).ok_or_else(|| {
                Error::InvalidSchema("product of cardinalities overflows 64 bits".into())
            })?;
        }
        Ok(Self {
            dimensions,
            measure_count,
            total_space,
        })
    }

    /// Schema with generated labels; dimension `d` is named `d{d}_`.
    pub fn from_cardinalities(cardinalities: &[u64], measure_count: usize) -> Result<Self> {
        let dims = cardinalities
            .iter()
            .enumerate()
            .map(|(d, &c)| DimensionSpec::with_cardinality(format!("d{d}_"), c))
            .collect::<Result<Vec<_>>>()?;
        Self::new(dims, measure_count)
    }

    pub fn dimensions(&self) -> &[DimensionSpec] {
        &self.dimensions
    }

    pub fn dimension_count(&self) -> usize {
        self.dimensions.len()
    }

    pub fn measure_count(&self) -> usize {
        self.measure_count
    }

    pub fn total_space(&self) -> u64 {
        self.total_space
    }

    pub fn cardinalities(&self) -> Vec<u64> {
        self.dimensions
            .iter()
            .map(DimensionSpec::cardinality)
            .collect()
    }

    pub fn check_key(&self, key: &[u32]) -> Result<()> {
        if key.len() != self.dimensions.len() {
            return Err(Error::KeyArity {
                expected: self.dimensions.len(),
                got: key.len(),
            });
        }
        for (component, (&k, dim)) in key.iter().zip(&self.dimensions).enumerate() {
            if u64::from(k) >= dim.cardinality() {
                return Err(Error::KeyOutOfRange {
                    component,
                    value: u64::from(k),
                    cardinality: dim.cardinality(),
                });
            }
        }
        Ok(())
    }

    pub fn linearize(&self, key: &[u32]) -> Result<LogicalPosition> {
        self.check_key(key)?;
        let pos = key
            .iter()
            .zip(&self.dimensions)
            .fold(0u64, |acc, (&k, dim)| {
                acc * dim.cardinality() + u64::from(k)
            });
        Ok(LogicalPosition(pos))
    }

    pub fn delinearize(&self, pos: LogicalPosition) -> Result<Vec<u32>> {
        if pos.0 >= self.total_space {
            return Err(Error::PositionOutOfRange {
                position: pos.0,
                total_space: self.total_space,
            });
        }
        let mut rest = pos.0;
        let mut key = vec![0u32; self.dimensions.len()];
        for (slot, dim) in key.iter_mut().zip(&self.dimensions).rev() {
            let c = dim.cardinality();
            *slot = (rest % c) as u32;
            rest /= c;
        }
        Ok(key)
    }
}

/// A sparse relation: nonempty cells keyed by logical position.
#[derive(Debug, Clone, PartialEq)]
pub struct Relation {
    schema: RelationSchema,
    cells: BTreeMap<u64, Box<[f64]>>,
}

impl Relation {
    pub fn new(schema: RelationSchema) -> Self {
        Self {
            schema,
            cells: BTreeMap::new(),
        }
    }

    pub fn schema(&self) -> &RelationSchema {
        &self.schema
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Inserts or replaces the measures of the cell at `key`.
    pub fn insert(&mut self, key: &[u32], measures: &[f64]) -> Result<()> {
        let pos = self.schema.linearize(key)?;
        self.insert_at(pos, measures)
    }

    pub fn insert_at(&mut self, pos: LogicalPosition, measures: &[f64]) -> Result<()> {
        if pos.0 >= self.schema.total_space {
            return Err(Error::PositionOutOfRange {
                position: pos.0,
                total_space: self.schema.total_space,
            });
        }
        if measures.len() != self.schema.measure_count {
            return Err(Error::Format(format!(
                "expected {} measures, got {}",
                self.schema.measure_count,
                measures.len()
            )));
        }
        self.cells.insert(pos.0, measures.into());
        Ok(())
    }

    pub fn get(&self, key: &[u32]) -> Result<Option<&[f64]>> {
        let pos = self.schema.linearize(key)?;
        Ok(self.cells.get(&pos.0).map(|m| &**m))
    }

    /// Cells in ascending logical order.
    pub fn iter(&self) -> impl Iterator<Item = (LogicalPosition, &[f64])> + '_ {
        self.cells.iter().map(|(&p, m)| (LogicalPosition(p), &**m))
    }

    pub fn keys(&self) -> impl Iterator<Item = Vec<u32>> + '_ {
        self.cells.keys().map(|&p| {
            self.schema
                .delinearize(LogicalPosition(p))
                .expect("stored positions are in range")
        })
    }

    pub fn contains_position(&self, pos: LogicalPosition) -> bool {
        self.cells.contains_key(&pos.0)
    }

    /// The strictly increasing sequence of nonempty-cell positions.
    pub fn sorted_logical_positions(&self) -> Result<Vec<u64>> {
        if self.cells.is_empty() {
            return Err(Error::EmptyRelation);
        }
        Ok(self.cells.keys().copied().collect())
    }
}

/// Parameters of the synthetic star-schema generator.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SyntheticSpec {
    pub seed: u64,
    pub cardinalities: Vec<u64>,
    pub measure_count: usize,
    /// Fraction of nonempty cells, in (0, 1].
    pub density: f64,
    /// Clustering in [0, 1): the mean run length of consecutive nonempty
    /// cells is `1 / (1 - skew)`. Zero places cells uniformly at random.
    pub skew: f64,
}

/// Generates a relation with `round(density * total_space)` cells.
///
/// Nonempty cells are laid out as runs of consecutive logical positions.
/// Run lengths are a uniformly random composition of the cell count and the
/// empty cells are a uniformly random composition of the gaps around the
/// runs; with one-cell runs this is a uniform random subset.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Relation> {
    let schema = RelationSchema::from_cardinalities(&spec.cardinalities, spec.measure_count)?;
    if !(spec.density > 0.0 && spec.density <= 1.0) {
        return Err(Error::InvalidDensity(spec.density));
    }
    if !(0.0..1.0).contains(&spec.skew) {
        return Err(Error::InvalidSkew(spec.skew));
    }
    let total = schema.total_space();
    let target = (spec.density * total as f64).round();
    if target < 1.0 {
        return Err(Error::InvalidDensity(spec.density));
    }
    let n = (target as u64).min(total);
    let empty = total - n;

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mean_run = 1.0 / (1.0 - spec.skew);
    let runs = ((n as f64 / mean_run).round() as u64).clamp(1, n);

    // Run lengths: cut [0, n) at runs - 1 distinct interior points.
    let mut cuts: Vec<u64> = if runs > 1 {
        index::sample(&mut rng, (n - 1) as usize, (runs - 1) as usize)
            .into_iter()
            .map(|c| c as u64 + 1)
            .collect()
    } else {
        Vec::new()
    };
    cuts.sort_unstable();
    cuts.push(n);

    // Gaps: runs + 1 nonnegative parts summing to `empty`.
    let mut marks: Vec<u64> = (0..runs).map(|_| rng.gen_range(0..=empty)).collect();
    marks.sort_unstable();

    let mut relation = Relation::new(schema);
    let mut measures = vec![0.0; spec.measure_count];
    let mut pos = 0u64;
    let mut prev_mark = 0u64;
    let mut prev_cut = 0u64;
    for (&cut, &mark) in cuts.iter().zip(&marks) {
        pos += mark - prev_mark;
        prev_mark = mark;
        for _ in prev_cut..cut {
            for m in measures.iter_mut() {
                *m = f64::from(rng.gen_range(0u32..100_000)) / 100.0;
            }
            relation.cells.insert(pos, measures.as_slice().into());
            pos += 1;
        }
        prev_cut = cut;
    }
    debug_assert_eq!(relation.len() as u64, n);
    Ok(relation)
}

/// Writes the text interchange format: a header line
/// `cards=c1,c2,...;measures=m[;config=hash]`, then one line per cell with
/// the dimension surrogates followed by the measures, comma-separated.
pub fn write_relation<W: Write>(
    relation: &Relation,
    mut out: W,
    config_hash: Option<&str>,
) -> Result<()> {
    let schema = relation.schema();
    let cards: Vec<String> = schema.cardinalities().iter().map(u64::to_string).collect();
    write!(
        out,
        "cards={};measures={}",
        cards.join(","),
        schema.measure_count()
    )?;
    if let Some(hash) = config_hash {
        write!(out, ";config={hash}")?;
    }
    writeln!(out)?;
    let mut line = String::new();
    for (pos, measures) in relation.iter() {
        line.clear();
        let key = schema.delinearize(pos)?;
        for k in &key {
            line.push_str(&k.to_string());
            line.push(',');
        }
        for (i, m) in measures.iter().enumerate() {
            if i > 0 {
                line.push(',');
            }
            line.push_str(&m.to_string());
        }
        line.push('\n');
        out.write_all(line.as_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_relation<R: BufRead>(input: R) -> Result<Relation> {
    let mut lines = input.lines();
    let header = match lines.next() {
        Some(line) => line?,
        None => return Err(Error::EmptyRelation),
    };
    let mut cards = None;
    let mut measures = None;
    for field in header.trim().split(';') {
        let (k, v) = field
            .split_once('=')
            .ok_or_else(|| Error::Format(format!("bad header field {field:?}")))?;
        match k {
            "cards" => {
                let parsed = v
                    .split(',')
                    .map(|c| c.trim().parse::<u64>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|e| Error::Format(format!("bad cardinality: {e}")))?;
                cards = Some(parsed);
            }
            "measures" => {
                measures = Some(
                    v.trim()
                        .parse::<usize>()
                        .map_err(|e| Error::Format(format!("bad measure count: {e}")))?,
                );
            }
            _ => {}
        }
    }
    let cards = cards.ok_or_else(|| Error::Format("header lacks cards=".into()))?;
    let measure_count = measures.ok_or_else(|| Error::Format("header lacks measures=".into()))?;
    let schema = RelationSchema::from_cardinalities(&cards, measure_count)?;
    let dims = schema.dimension_count();
    let mut relation = Relation::new(schema);
    let mut key = vec![0u32; dims];
    let mut values = vec![0f64; measure_count];
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != dims + measure_count {
            return Err(Error::Format(format!(
                "line {}: expected {} fields, got {}",
                lineno + 2,
                dims + measure_count,
                fields.len()
            )));
        }
        for (slot, f) in key.iter_mut().zip(&fields[..dims]) {
            *slot = f
                .trim()
                .parse()
                .map_err(|e| Error::Format(format!("line {}: {e}", lineno + 2)))?;
        }
        for (slot, f) in values.iter_mut().zip(&fields[dims..]) {
            *slot = f
                .trim()
                .parse()
                .map_err(|e| Error::Format(format!("line {}: {e}", lineno + 2)))?;
        }
        relation.insert(&key, &values)?;
    }
    Ok(relation)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::Rng;

    use super::*;

    fn schema(cards: &[u64]) -> RelationSchema {
        RelationSchema::from_cardinalities(cards, 1).unwrap()
    }

    #[test]
    fn linearize_examples() {
        let s = schema(&[4, 5]);
        assert_eq!(s.linearize(&[0, 0]).unwrap(), LogicalPosition(0));
        assert_eq!(s.linearize(&[2, 3]).unwrap(), LogicalPosition(13));
        assert_eq!(s.linearize(&[3, 4]).unwrap(), LogicalPosition(19));
        assert_eq!(s.total_space(), 20);
        assert!(matches!(
            s.linearize(&[4, 0]),
            Err(Error::KeyOutOfRange { component: 0, .. })
        ));
        assert!(matches!(s.linearize(&[1]), Err(Error::KeyArity { .. })));
    }

    #[test]
    fn delinearize_examples() {
        let s = schema(&[4, 5]);
        assert_eq!(s.delinearize(LogicalPosition(13)).unwrap(), vec![2, 3]);
        assert_eq!(s.delinearize(LogicalPosition(0)).unwrap(), vec![0, 0]);
        assert_eq!(
            schema(&[7]).delinearize(LogicalPosition(6)).unwrap(),
            vec![6]
        );
        assert!(matches!(
            s.delinearize(LogicalPosition(20)),
            Err(Error::PositionOutOfRange { .. })
        ));
    }

    #[test]
    fn schema_rejects_overflow_and_empty() {
        assert!(RelationSchema::from_cardinalities(&[1 << 32, 1 << 32], 1).is_err());
        assert!(RelationSchema::from_cardinalities(&[], 1).is_err());
        assert!(RelationSchema::from_cardinalities(&[3], 0).is_err());
        assert!(RelationSchema::from_cardinalities(&[0], 1).is_err());
    }

    #[test]
    fn dimension_labels_are_bijective() {
        let d = DimensionSpec::new("color", vec!["red".into(), "green".into()]).unwrap();
        assert_eq!(d.index_of("green"), Some(1));
        assert_eq!(d.value_at(0).as_deref(), Some("red"));
        assert_eq!(d.value_at(2), None);
        assert!(DimensionSpec::new("x", vec!["a".into(), "a".into()]).is_err());
        let g = DimensionSpec::with_cardinality("day", 31).unwrap();
        assert_eq!(g.cardinality(), 31);
        assert_eq!(g.value_at(7).as_deref(), Some("day7"));
        assert_eq!(g.value_at(31), None);
        assert_eq!(g.index_of("day30"), Some(30));
        assert_eq!(g.index_of("day31"), None);
        assert_eq!(g.index_of("day07"), None);
        assert_eq!(g.index_of("night1"), None);
        assert!(DimensionSpec::with_cardinality("huge", 1 << 32).is_ok());
    }

    #[test]
    fn sorted_positions() {
        let mut r = Relation::new(schema(&[4, 5]));
        r.insert(&[2, 3], &[1.0]).unwrap();
        r.insert(&[0, 1], &[2.0]).unwrap();
        assert_eq!(r.sorted_logical_positions().unwrap(), vec![1, 13]);

        let mut single = Relation::new(schema(&[4, 5]));
        single.insert(&[0, 0], &[0.5]).unwrap();
        assert_eq!(single.sorted_logical_positions().unwrap(), vec![0]);

        let mut dense = Relation::new(schema(&[2, 2]));
        for a in 0..2 {
            for b in 0..2 {
                dense.insert(&[a, b], &[1.0]).unwrap();
            }
        }
        assert_eq!(dense.sorted_logical_positions().unwrap(), vec![0, 1, 2, 3]);

        assert!(matches!(
            Relation::new(schema(&[3])).sorted_logical_positions(),
            Err(Error::EmptyRelation)
        ));
    }

    fn spec(seed: u64, cards: &[u64], density: f64, skew: f64) -> SyntheticSpec {
        SyntheticSpec {
            seed,
            cardinalities: cards.to_vec(),
            measure_count: 2,
            density,
            skew,
        }
    }

    #[test]
    fn synthetic_examples() {
        let dense = generate_synthetic(&spec(1, &[10, 10], 1.0, 0.0)).unwrap();
        assert_eq!(dense.len(), 100);

        let sparse = generate_synthetic(&spec(1, &[100, 100], 0.01, 0.0)).unwrap();
        assert!((99..=101).contains(&sparse.len()));

        let again = generate_synthetic(&spec(1, &[100, 100], 0.01, 0.0)).unwrap();
        assert_eq!(sparse, again);

        assert!(matches!(
            generate_synthetic(&spec(1, &[10], 0.0, 0.0)),
            Err(Error::InvalidDensity(_))
        ));
        assert!(matches!(
            generate_synthetic(&spec(1, &[10], 0.001, 0.0)),
            Err(Error::InvalidDensity(_))
        ));
        assert!(matches!(
            generate_synthetic(&spec(1, &[10], 0.5, 1.0)),
            Err(Error::InvalidSkew(_))
        ));
    }

    #[test]
    fn synthetic_density_over_many_seeds() {
        for seed in 0..120 {
            let r =
                generate_synthetic(&spec(seed, &[50, 40, 30], 0.037, (seed % 10) as f64 / 10.0))
                    .unwrap();
            let want = 0.037 * 60_000.0;
            let got = r.len() as f64;
            assert!(
                (got - want).abs() <= 0.01 * want,
                "seed {seed}: {got} vs {want}"
            );
        }
    }

    #[test]
    fn skew_makes_unit_gaps_dominant() {
        let unit_share = |skew: f64| {
            let r = generate_synthetic(&spec(7, &[1000, 1000], 0.01, skew)).unwrap();
            let l = r.sorted_logical_positions().unwrap();
            let ones = l.windows(2).filter(|w| w[1] - w[0] == 1).count();
            ones as f64 / (l.len() - 1) as f64
        };
        let uniform = unit_share(0.0);
        let skewed = unit_share(0.95);
        assert!(uniform < 0.05, "{uniform}");
        assert!(skewed > 0.9, "{skewed}");
    }

    #[test]
    fn interchange_round_trip() {
        let r = generate_synthetic(&spec(3, &[20, 30], 0.1, 0.5)).unwrap();
        let mut buf = Vec::new();
        write_relation(&r, &mut buf, Some("abc")).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("cards=20,30;measures=2;config=abc\n"));
        let back = read_relation(buf.as_slice()).unwrap();
        assert_eq!(back, r);
        assert!(matches!(read_relation(&b""[..]), Err(Error::EmptyRelation)));
    }

    proptest! {
        #[test]
        fn linearize_round_trip(
            cards in prop::collection::vec(1u64..50, 1..5),
            seed in any::<u64>(),
        ) {
            let s = schema(&cards);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..20 {
                let key: Vec<u32> = cards.iter().map(|&c| rng.gen_range(0..c) as u32).collect();
                let pos = s.linearize(&key).unwrap();
                prop_assert!(pos.0 < s.total_space());
                prop_assert_eq!(s.delinearize(pos).unwrap(), key);
            }
        }

        #[test]
        fn synthetic_positions_strictly_increasing(
            seed in any::<u64>(),
            density in 0.01f64..1.0,
            skew in 0.0f64..0.99,
        ) {
            let r = generate_synthetic(&spec(seed, &[30, 20], density, skew)).unwrap();
            let l = r.sorted_logical_positions().unwrap();
            prop_assert_eq!(l.len(), r.len());
            prop_assert!(l.windows(2).all(|w| w[0] < w[1]));
        }
    }
}
