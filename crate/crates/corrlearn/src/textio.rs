//! Text formatting for data files: floats carry 17 significant digits so
//! every written value reads back to the identical bits.

/// Formats with 17 significant digits in scientific notation.
pub fn fmt_g17(x: f64) -> String {
    format!("{x:.16e}")
}
