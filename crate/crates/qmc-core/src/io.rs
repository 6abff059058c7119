//! Shared CSV formatting helpers.
//!
//! All floating-point values written to CSV use 17 significant digits so
//! that repeated runs diff byte-for-byte and round-trip exactly through
//! `f64` parsing.

/// Formats a float with 17 significant digits in scientific notation.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}
