//! Concrete exponential families.

pub mod ergm;
pub mod io;
pub mod pairwise;
pub mod synthetic;

pub use ergm::{
    degree_cap_offset, edgewise_shared_partners, ergm_edges, ergm_gwesp, ergm_isolates,
    ergm_nodematch, ErgmModel, ErgmStat,
};
pub use io::{format_attributes, format_edge_list, parse_attributes, parse_edge_list, NodeAttributes};
pub use pairwise::BinaryPairwiseModel;
pub use synthetic::SyntheticNetwork;
