//! Multi-type Galton-Watson trees: sampling, fringe statistics, sin-tree
//! limits, lattice local limit theorems for sesqui-type trees, and Boltzmann
//! planar maps built from four-type mobiles.

pub mod enumerate;
pub mod error;
pub mod fringe;
pub mod lattice;
pub mod maps;
pub mod model;
pub mod rng;
pub mod sampler;
pub mod sin;
pub mod suite;
pub mod tree;

pub use error::{Error, Result};
pub use model::{OffspringLaw, OffspringModel};
pub use rng::{rng_for, split_seed, Rng};
pub use tree::{GammaWeights, MultiTypeTree, OffspringVector, PointedTree, TreeBuilder, TypeId, TypeSet};
