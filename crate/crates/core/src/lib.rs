//! Disk-resident approximate nearest neighbor search with page-aligned
//! graph nodes.
//!
//! Vectors are grouped into page nodes that each fill exactly one storage
//! page. A page carries its member vectors, the ids of neighboring vectors
//! outside the page and (depending on the memory budget) compressed codes
//! for those neighbors, so one page read both scores its members exactly
//! and decides the next hop.
//!
//! The crate is generic over the vector element type ([`Element`]); the
//! aliases below name the three supported kinds.

pub mod codec;
pub mod dataset;
pub mod disk;
pub mod element;
pub mod error;
pub mod graph;
pub mod index;
pub mod layout;
pub mod memcodes;
pub mod metrics;
pub mod page_graph;
pub mod pq;
pub mod routing;
pub mod search;

pub use dataset::{brute_force_knn, exact_distance, Dataset, Distance, Neighbor, PageId, VectorId};
pub use disk::{IdRemap, IndexHeader, PageCache, PageFormat, PageRecord, PageView};
pub use element::{ElemKind, Element};
pub use error::{Error, Result};
pub use graph::{build_base_graph, greedy_search, robust_prune, GraphParams, VectorGraph};
pub use index::{BuildConfig, BuildReport, Index, IndexBuilder, IoOptions, LayoutMode};
pub use layout::{plan_pages, PagePlan, PlanInput, Regime};
pub use memcodes::MemoryCodes;
pub use metrics::{recall_at_k, recall_at_k_with_ties};
pub use page_graph::{aggregate_neighbors, attach_disk_codes, arrange_neighbors, group_vectors, select_resident, PageNodeDraft};
pub use pq::{estimated_distance, CodeArray, DistanceTable, Quantizer};
pub use routing::{build_routing, RoutingParams, RoutingTable};
pub use search::{estimated_source, search, warm_cache, CodeSource, QueryStats, RoundTrace, SearchOutput, SearchParams};

pub type U8Dataset = Dataset<u8>;
pub type I8Dataset = Dataset<i8>;
pub type F32Dataset = Dataset<f32>;
