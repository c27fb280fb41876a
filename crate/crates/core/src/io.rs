//! Fixed float formatting shared by every CSV writer.

/// Shortest-free scientific form with 17 significant digits, so output is
/// byte-stable and round-trips exactly.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}
