//! Network evaluation beyond R_ECO: contingency screening, cascading-failure
//! robustness, graph metrics and link-count exploration.

pub mod analysis;
pub mod contingency;
pub mod explore;
pub mod graph;
pub mod rcf;

pub use analysis::{analyze, NetworkAnalysis};
pub use contingency::{
    run_contingencies, run_contingencies_streaming, CaseResult, ContingencyReport, ContingencySpec, Element,
    ElementKind, Violation, ViolationKind,
};
pub use explore::{explore_topologies, ExplorePoint};
pub use graph::{flow_stats, graph_properties, BusGraph, FlowStats, NetworkProperties};
pub use rcf::{r_cf, r_cf_terms};
