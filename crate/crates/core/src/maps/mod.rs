//! Boltzmann planar maps from four-type mobiles.
//!
//! Types of mobile vertices: `1` labelled vertices (map vertices), `2`
//! flagged vertices (edges between equally labelled vertices), `3` faces
//! attached to a labelled parent and `4` faces attached to a flagged parent.

pub mod ball;
pub mod bdfg;
pub mod mobile;
pub mod planar;
pub mod quenched;
pub mod solve;
pub mod weights;

pub use ball::{local_ball, Ball, Center};
pub use bdfg::{embed, mobile_to_map};
pub use mobile::{
    assign_labels, decorate, decoration_count, mobile_offspring, sample_decoration, Flavor, Mobile, MobileSampler,
};
pub use planar::PlanarMap;
pub use quenched::{quenched_analysis, quenched_draws, quenched_experiment, sample_map_with_edges, BallTable, MapDraw, QuenchedConfig, QuenchedReport};
pub use solve::{params_at, solve_admissible, vertex_weight_params, BoltzmannParams, VertexWeightParams};
pub use weights::{f_bullet, f_diamond, Series, WeightSequence};
