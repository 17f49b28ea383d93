//! Optimal sequential screening with multiple goods: threshold mechanisms,
//! revenue identities, and discrete linear-programming oracles.

pub mod model;
pub mod numerics;
pub mod mech;
pub mod oracle;
pub mod cli;

/// Fixed-width scientific notation with 17 significant digits.
pub fn fmt_num(x: f64) -> String {
    format!("{x:.16e}")
}
