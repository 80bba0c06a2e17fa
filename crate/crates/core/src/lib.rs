mod linalg;
pub mod minnorm_qp;
pub mod tolerances;

pub use tolerances::Tolerances;
pub mod convex;
pub mod error;

pub use convex::{ArgminDescription, ConvexFunction, SubdifferentialPolytope};
pub use error::{Error, Result};
pub mod bounds;
pub mod expcli;
pub mod flow;
pub mod stability;
