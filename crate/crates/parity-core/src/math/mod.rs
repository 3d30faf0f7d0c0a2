//! Shared numerical machinery: quadrature, root finding, simplex search
//! and standard normal helpers.

pub mod neldermead;
pub mod normal;
pub mod quad;
pub mod roots;
