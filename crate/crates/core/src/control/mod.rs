//! Motion decisions: projected-gradient navigation and orbit fallback for
//! tracking, tabular Q-learning for exploration.

mod nav;
mod qlearn;

pub use nav::{
    deconflict, fallback_orbit, nav_cost, nav_gradient, navigate, project_step, projection_matrix, NavConstraints,
    NavCost,
};
pub use qlearn::{
    epsilon_at, fuse_experiences, q_select_action, q_update, EpsilonSchedule, Experience, QParams, QTable, ACTIONS,
};
