//! A storage-engine laboratory for sparse OLAP relations.
//!
//! Two physical representations of the same relation are built side by side:
//!
//! * a multidimensional representation: a compressed array of the nonempty
//!   cells plus a memory-resident header that maps logical positions to
//!   physical ones (difference sequence compression, optionally with the
//!   differences Huffman-coded), see [`dsc`], [`huffman`] and [`dhc`];
//! * a table representation: a paged heap of rows plus a bulk-loaded B-tree
//!   on the composite key, see [`table`].
//!
//! Every disk page either store reads goes through a [`cache::PageCache`], so
//! page fetches can be counted and compared against the closed-form buffer
//! cache models in [`analytics`]. [`sim`] runs Monte-Carlo workloads and
//! [`experiment`] ties everything into reproducible reports.

pub mod analytics;
mod bits;
pub mod cache;
pub mod dhc;
pub mod dsc;
pub mod error;
pub mod experiment;
pub mod huffman;
mod io_util;
pub mod relation;
pub mod sim;
pub mod store;
pub mod table;

pub use bits::{BitStream, BitWriter};
pub use error::{Error, Result};

/// Size of every disk page, in bytes.
pub const PAGE_SIZE: usize = 4096;
