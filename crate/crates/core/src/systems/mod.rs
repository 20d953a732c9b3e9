//! Built-in example systems and the TOML loader.

mod builtin;
mod config;

pub use builtin::{
    arc_rho, builtin, carriage_defaults, carriage_kappa, carriage_l1, particle_with_rho, r4_defaults, Params,
    BUILTIN_NAMES, CARRIAGE_METRIC, R4_METRIC,
};
pub use config::{load_system, scalar_field};
