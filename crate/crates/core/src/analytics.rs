//! Closed-form buffer cache and retrieval time models.
//!
//! Pages are accessed uniformly at random and the cache starts cold and never
//! evicts. For a population of `N` pages the expected number of cached pages
//! after `i` accesses is `B_i = N (1 - (1 - 1/N)^i)` and an access at
//! occupancy `B` fetches `1 - B/N` pages on average. A B-tree adds one
//! independent population per level. On top of that, the expected retrieval
//! time `pM + (1-p)D` of each representation yields dominance conditions and
//! a speed-up curve as a function of available memory.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::table::LevelProfile;

/// `(1 - 1/n)^i`, with `0^0 = 1`.
pub fn miss_ratio(n: u64, i: f64) -> f64 {
    assert!(n >= 1, "page population must be nonempty");
    if i == 0.0 {
        1.0
    } else if n == 1 {
        0.0
    } else {
        (i * (-1.0 / n as f64).ln_1p()).exp()
    }
}

/// Expected distinct pages after `i` uniform accesses to `n` pages.
pub fn expected_distinct(n: u64, i: f64) -> f64 {
    n as f64 * -((i * (-1.0 / n as f64).ln_1p()).exp_m1())
}

fn distinct(n: u64, i: f64) -> f64 {
    if i == 0.0 {
        0.0
    } else if n == 1 {
        1.0
    } else {
        expected_distinct(n, i)
    }
}

/// Cache model of the compressed array: one population of `N` pages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MdCacheModel {
    pages: u64,
}

impl MdCacheModel {
    pub fn new(pages: u64) -> Result<Self> {
        if pages == 0 {
            return Err(Error::InvalidSchema("page count must be at least 1".into()));
        }
        Ok(Self { pages })
    }

    pub fn pages(&self) -> u64 {
        self.pages
    }

    /// B_i.
    pub fn expected_cached(&self, i: u64) -> f64 {
        distinct(self.pages, i as f64)
    }

    /// f(B) = 1 - B/N.
    pub fn expected_fetch(&self, occupancy: f64) -> Result<f64> {
        check_occupancy(occupancy, self.pages)?;
        Ok(1.0 - occupancy / self.pages as f64)
    }

    /// Expected fetches of access `i + 1`, i.e. `f(B_i)`.
    pub fn expected_fetch_after(&self, i: u64) -> f64 {
        miss_ratio(self.pages, i as f64)
    }
}

fn check_occupancy(occupancy: f64, pages: u64) -> Result<()> {
    if !(0.0..=pages as f64).contains(&occupancy) {
        return Err(Error::InvalidOccupancy {
            occupancy,
            pages: pages as f64,
        });
    }
    Ok(())
}

/// Cache model of the table representation: one population per level.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TableCacheModel {
    profile: LevelProfile,
}

impl TableCacheModel {
    pub fn new(profile: LevelProfile) -> Self {
        Self { profile }
    }

    pub fn from_pages(pages: Vec<u64>) -> Result<Self> {
        Ok(Self::new(LevelProfile::new(pages)?))
    }

    pub fn profile(&self) -> &LevelProfile {
        &self.profile
    }

    pub fn levels(&self) -> usize {
        self.profile.levels()
    }

    /// N.
    pub fn total_pages(&self) -> u64 {
        self.profile.total()
    }

    /// N_m.
    pub fn max_level_pages(&self) -> u64 {
        self.profile.max()
    }

    pub fn is_degenerate(&self) -> bool {
        self.max_level_pages() == 1
    }

    /// Total B_i and the per-level B_i^(l).
    pub fn expected_cached(&self, i: u64) -> (f64, Vec<f64>) {
        let per: Vec<f64> = self
            .profile
            .pages()
            .iter()
            .map(|&n| distinct(n, i as f64))
            .collect();
        (self.total_at(i as f64), per)
    }

    /// `N - Σ N_l r_l^i`, continuous in `i`.
    fn total_at(&self, i: f64) -> f64 {
        self.profile.pages().iter().map(|&n| distinct(n, i)).sum()
    }

    /// `L - Σ B^(l)/N_l` for a per-level occupancy.
    pub fn expected_fetch(&self, occupancy: &[f64]) -> Result<f64> {
        if occupancy.len() != self.levels() {
            return Err(Error::InvalidSchema(format!(
                "expected {} per-level occupancies, got {}",
                self.levels(),
                occupancy.len()
            )));
        }
        let mut f = self.levels() as f64;
        for (&b, &n) in occupancy.iter().zip(self.profile.pages()) {
            check_occupancy(b, n)?;
            f -= b / n as f64;
        }
        Ok(f)
    }

    /// `f(B_i) = Σ r_l^i`, the expected fetches of access `i + 1`.
    pub fn expected_fetch_after(&self, i: u64) -> f64 {
        self.fetch_at(i as f64)
    }

    fn fetch_at(&self, i: f64) -> f64 {
        self.profile.pages().iter().map(|&n| miss_ratio(n, i)).sum()
    }

    /// The asymptotic estimate `(N - B)/N_m`.
    pub fn fetch_limit(&self, total_occupancy: f64) -> Result<f64> {
        if self.is_degenerate() {
            return Err(Error::DegenerateProfile);
        }
        check_occupancy(total_occupancy, self.total_pages())?;
        Ok((self.total_pages() as f64 - total_occupancy) / self.max_level_pages() as f64)
    }

    /// `N - B_i`, summed per level as `Σ N_l r_l^i` so that it keeps full
    /// relative precision when the cache is almost full.
    pub fn expected_uncached(&self, i: u64) -> f64 {
        self.profile
            .pages()
            .iter()
            .map(|&n| n as f64 * miss_ratio(n, i as f64))
            .sum()
    }

    /// `(N - B_i)/N_m` at access count `i`, without forming `B_i`.
    pub fn fetch_limit_after(&self, i: u64) -> Result<f64> {
        if self.is_degenerate() {
            return Err(Error::DegenerateProfile);
        }
        Ok(self.expected_uncached(i) / self.max_level_pages() as f64)
    }

    /// `w_i = Σ N_l r_l^i / Σ r_l^i`, the weight with `N - B_i = w_i f(B_i)`.
    pub fn weight(&self, i: u64) -> Result<f64> {
        if self.is_degenerate() {
            return Err(Error::DegenerateProfile);
        }
        let (mut num, mut den) = (0.0, 0.0);
        for &n in self.profile.pages() {
            let r = miss_ratio(n, i as f64);
            num += n as f64 * r;
            den += r;
        }
        Ok(num / den)
    }

    /// Expected fetches per access once the cache holds `total_occupancy`
    /// pages, reading the occupancy as the `B_i` of some (fractional) access
    /// count `i`. An all-ones profile fills on the first access, so there
    /// the occupancy is read as a per-level fraction.
    pub fn fetch_at_occupancy(&self, total_occupancy: f64) -> Result<f64> {
        let n = self.total_pages() as f64;
        check_occupancy(total_occupancy, self.total_pages())?;
        if self.is_degenerate() {
            return Ok(n - total_occupancy);
        }
        if total_occupancy == 0.0 {
            return Ok(self.levels() as f64);
        }
        if total_occupancy >= n {
            return Ok(0.0);
        }
        let mut hi = 1.0;
        while self.total_at(hi) < total_occupancy {
            hi *= 2.0;
            if hi > 1e18 {
                return Ok(0.0);
            }
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.total_at(mid) < total_occupancy {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-12 * hi {
                break;
            }
        }
        Ok(self.fetch_at(0.5 * (lo + hi)))
    }
}

/// `pM + (1-p)D`.
pub fn expected_retrieval_time(p: f64, memory: f64, disk: f64) -> Result<f64> {
    check_probability(p)?;
    Ok(p * memory + (1.0 - p) * disk)
}

fn check_probability(p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidProbability(p));
    }
    Ok(())
}

/// Expected retrieval times (ms, or any consistent unit) per
/// representation when the needed pages are cached (`M`) or not (`D`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RepresentationConstants {
    pub m_m: f64,
    pub m_t: f64,
    pub d_m: f64,
    pub d_t: f64,
}

impl RepresentationConstants {
    pub fn new(m_m: f64, m_t: f64, d_m: f64, d_t: f64) -> Result<Self> {
        for (name, v) in [("M_m", m_m), ("M_t", m_t), ("D_m", d_m), ("D_t", d_t)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        Ok(Self { m_m, m_t, d_m, d_t })
    }

    pub fn md_time(&self, p_m: f64) -> Result<f64> {
        expected_retrieval_time(p_m, self.m_m, self.d_m)
    }

    pub fn table_time(&self, p_t: f64) -> Result<f64> {
        expected_retrieval_time(p_t, self.m_t, self.d_t)
    }
}

/// Where the multidimensional representation is faster.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DominanceThresholds {
    /// Below this `p_t` it wins whatever `p_m` is.
    pub sufficient_pt: f64,
    /// Set when `M_t < M_m`: above this `p_t` it loses whatever `p_m` is.
    pub case1_pt: Option<f64>,
    /// Set when `M_m < M_t`: above this `p_m` it wins whatever `p_t` is.
    pub case2_pm: Option<f64>,
    /// It wins iff `p_t < slope * p_m + intercept`.
    pub slope: f64,
    pub intercept: f64,
}

pub fn dominance_thresholds(c: &RepresentationConstants) -> Result<DominanceThresholds> {
    if c.d_t <= c.m_t {
        return Err(Error::ModelHypothesisViolated("D_t must exceed M_t".into()));
    }
    if c.d_m <= c.m_m {
        return Err(Error::ModelHypothesisViolated("D_m must exceed M_m".into()));
    }
    let span_t = c.d_t - c.m_t;
    Ok(DominanceThresholds {
        sufficient_pt: (c.d_t - c.d_m) / span_t,
        case1_pt: (c.m_t < c.m_m).then(|| (c.d_t - c.m_m) / span_t),
        case2_pm: (c.m_m < c.m_t).then(|| (c.d_m - c.m_t) / (c.d_m - c.m_m)),
        slope: (c.d_m - c.m_m) / span_t,
        intercept: (c.d_t - c.d_m) / span_t,
    })
}

/// Whether the multidimensional representation has the smaller expected
/// retrieval time.
pub fn dominates(c: &RepresentationConstants, p_m: f64, p_t: f64) -> Result<bool> {
    if c.d_t <= c.m_t {
        return Err(Error::ModelHypothesisViolated("D_t must exceed M_t".into()));
    }
    Ok(c.md_time(p_m)? < c.table_time(p_t)?)
}

/// Inputs of the speed-up curve: table size `S`, compressed array size `C`
/// and preloaded size `H` in bytes, plus the time constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedupParams {
    pub table_bytes: f64,
    pub compressed_bytes: f64,
    pub preloaded_bytes: f64,
    pub constants: RepresentationConstants,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpeedupMax {
    pub location: f64,
    pub value: f64,
    /// Whether `0 > a1 > a2` and `0 < b2 < b1` hold; the location is only
    /// guaranteed to be the maximum when they do.
    pub hypothesis_holds: bool,
}

impl SpeedupParams {
    pub fn new(
        table_bytes: f64,
        compressed_bytes: f64,
        preloaded_bytes: f64,
        constants: RepresentationConstants,
    ) -> Result<Self> {
        if !(table_bytes > 0.0 && compressed_bytes > 0.0 && preloaded_bytes >= 0.0) {
            return Err(Error::InvalidConfig(
                "sizes must satisfy S > 0, C > 0, H >= 0".into(),
            ));
        }
        Ok(Self {
            table_bytes,
            compressed_bytes,
            preloaded_bytes,
            constants,
        })
    }

    pub fn a1(&self) -> f64 {
        (self.constants.m_t - self.constants.d_t) / self.table_bytes
    }

    pub fn b1(&self) -> f64 {
        self.constants.d_t
    }

    pub fn a2(&self) -> f64 {
        (self.constants.m_m - self.constants.d_m) / self.compressed_bytes
    }

    pub fn b2(&self) -> f64 {
        -self.a2() * self.preloaded_bytes + self.constants.d_m
    }

    pub fn hypothesis_holds(&self) -> bool {
        let (a1, a2, b1, b2) = (self.a1(), self.a2(), self.b1(), self.b2());
        0.0 > a1 && a1 > a2 && 0.0 < b2 && b2 < b1
    }

    /// T_m(x) for `x >= H`.
    pub fn t_m(&self, x: f64) -> Result<f64> {
        if x < self.preloaded_bytes {
            return Err(Error::InsufficientMemory {
                memory: x,
                preloaded: self.preloaded_bytes,
            });
        }
        let p = ((x - self.preloaded_bytes) / self.compressed_bytes).min(1.0);
        Ok(p * self.constants.m_m + (1.0 - p) * self.constants.d_m)
    }

    /// T_t(x) for `x >= 0`.
    pub fn t_t(&self, x: f64) -> Result<f64> {
        if x < 0.0 {
            return Err(Error::InsufficientMemory {
                memory: x,
                preloaded: 0.0,
            });
        }
        let p = (x / self.table_bytes).min(1.0);
        Ok(p * self.constants.m_t + (1.0 - p) * self.constants.d_t)
    }

    pub fn speedup(&self, x: f64) -> Result<f64> {
        Ok(self.t_t(x)? / self.t_m(x)?)
    }

    pub fn speedup_max(&self) -> SpeedupMax {
        let location = self.compressed_bytes + self.preloaded_bytes;
        let t_t = if location >= self.table_bytes {
            self.constants.m_t
        } else {
            self.a1() * location + self.b1()
        };
        SpeedupMax {
            location,
            value: t_t / self.constants.m_m,
            hypothesis_holds: self.hypothesis_holds(),
        }
    }
}

/// Benchmark presets: time constants in ms and store sizes in
/// bytes for TPC-D, TPC-H and APB-1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Preset {
    pub name: &'static str,
    pub constants: RepresentationConstants,
    pub table_bytes: u64,
    pub compressed_bytes: u64,
    pub preloaded_bytes: u64,
    pub reference_speedup: f64,
}

impl Preset {
    pub fn speedup_params(&self) -> SpeedupParams {
        SpeedupParams {
            table_bytes: self.table_bytes as f64,
            compressed_bytes: self.compressed_bytes as f64,
            preloaded_bytes: self.preloaded_bytes as f64,
            constants: self.constants,
        }
    }
}

pub const PRESETS: [Preset; 3] = [
    Preset {
        name: "tpcd",
        constants: RepresentationConstants {
            m_m: 0.031,
            m_t: 0.021,
            d_m: 6.169,
            d_t: 16.724,
        },
        table_bytes: 279_636_324,
        compressed_bytes: 48_007_720,
        preloaded_bytes: 19_006_592,
        reference_speedup: 416.0,
    },
    Preset {
        name: "tpch",
        constants: RepresentationConstants {
            m_m: 0.014,
            m_t: 0.018,
            d_m: 7.093,
            d_t: 21.165,
        },
        table_bytes: 1_419_181_908,
        compressed_bytes: 239_996_040,
        preloaded_bytes: 154_024_844,
        reference_speedup: 1066.0,
    },
    Preset {
        name: "apb1",
        constants: RepresentationConstants {
            m_m: 0.012,
            m_t: 0.128,
            d_m: 6.778,
            d_t: 19.841,
        },
        table_bytes: 1_295_228_960,
        compressed_bytes: 99_144_000,
        preloaded_bytes: 4_225_039,
        reference_speedup: 1549.0,
    },
];

pub fn preset(name: &str) -> Option<Preset> {
    PRESETS.iter().copied().find(|p| p.name == name)
}
