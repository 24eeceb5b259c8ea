//! LiDAR-to-Radar fusion.
//!
//! Every non-empty Radar BEV cell is enriched with two pseudo features
//! computed from LiDAR:
//!
//! * a height feature `eta_h` ([`qhf_fuse`]): the cell is lifted to a
//!   pillar, split into `M` segments and each segment center ball-queries
//!   the LiDAR cloud;
//! * a BEV feature `eta_b` ([`qbf_fuse`]): nearby non-empty LiDAR BEV grids
//!   are gathered by grid index distance.
//!
//! Both queries are strategies looked up by name in a [`Registry`], so the
//! hash-grid index and the plain scan are interchangeable at runtime.

mod enhance;
mod qbf;
mod qhf;
mod query;
mod registry;

pub use enhance::{enhance_radar_map, L2rFusion, L2rOutput, L2rStats, PseudoFeature};
pub use qbf::{bev_query, manhattan_distance, qbf_fuse, QbfConfig};
pub use qhf::{
    aggregate_segment, qhf_fuse, query_balls_disjoint, segment_count, segment_query_points,
    QhfConfig, QueryPoint, PSI_INPUTS,
};
pub use query::{
    ball_query, point_distance, BallHit, BevNeighborhood, BruteForceSearch, GridHit,
    HashGridSearch, ManhattanNeighborhood, NeighborSearch, PointIndex, QueryResult,
    WindowNeighborhood,
};
pub use registry::{neighborhood_registry, search_registry, Registry};
