//! The arc dissection of the torus, restricted mean values over its pieces,
//! and the minor-arc experiments built on them.

mod arcs;
mod experiments;
mod integrals;

pub use arcs::{
    box_radius, classify, in_k, in_major_1d, major_arcs, major_measure, major_union_bound, sigma,
    sigma_f64, ArcClass, ArcKind, ArcLabel, ArcRule, DissectionParams, MAX_ARCS,
};
pub use experiments::{
    arc_box_integral, box_singular_integral, minor_arc_decay_experiment, planted_tuple,
    scaled_minor_containment, theorem21_inequality_experiment, theorem21_terms,
    w4_main_term_experiment, ContainmentReport, FermatRow, MainTermConfig, MainTermReport,
    MainTermRow, MinorDecayConfig, MinorDecayReport, MinorDecayRow, ScaleSummary, Theorem21Config,
    Theorem21Report, Theorem21Row, EPSILON, MAX_BOX_NODES,
};
pub use integrals::{
    lattice_representation_integral, lattice_requirements, restricted_moment,
    restricted_representation_integral, Estimate, IntegrationMethod, McOptions, MomentEstimate,
    Region, MC_BLOCK,
};
