//! Verification engine for projective geodesic extensions of purely
//! kinetic nonholonomic systems.

pub mod chaplygin;
pub mod dynamics;
pub mod error;
pub mod expr;
pub mod extensions;
pub mod field;
pub mod geometry;
pub mod linalg;
pub mod quadrature;
pub mod report;
pub mod system;
pub mod systems;

pub use chaplygin::{ChaplyginStructure, ClassificationReport, Level};
pub use dynamics::{State, Trajectory};
pub use error::{Error, Result};
pub use extensions::{Candidate, ResidualReport};
pub use expr::{parse, Expr};
pub use field::{Field, FieldRef};
pub use geometry::{ConfigSpace, Frame, Metric, VectorField};
pub use system::{Domain, FramedSystem, GroupAction};
