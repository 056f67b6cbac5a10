//! Approximation subroutines: Steiner tree, facility location, lower-bounded
//! facility location and single-sink rent-or-buy.

pub mod facility;
pub mod rent_or_buy;
pub mod steiner;

pub use facility::{facility_location, lbfl, FacilitySolution, FACILITY_RATIO, LBFL_LOAD_RELAXATION};
pub use rent_or_buy::{rent_or_buy, rob_lower_bounds, rob_lower_bounds_with_trees, RobBound, RobSolution, ROB_RATIO};
pub use steiner::{shortest_path_tree, steiner_tree, SteinerSolution, STEINER_RATIO};
