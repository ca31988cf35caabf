//! Number formatting and provenance lines shared by all file writers.

use std::io::Write;

use sha2::{Digest, Sha256};

/// Formats `x` rounded to 9 significant digits, with trailing zeros
/// dropped. Plain notation is used for exponents in `[-5, 9)`.
///
/// Rounding to a fixed number of digits makes output independent of
/// last-bit differences in floating-point reductions.
pub fn fmt_num(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{x:.8e}");
    let (mant, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..9).contains(&exp) {
        let rounded: f64 = sci.parse().expect("round trip");
        let decimals = (8 - exp).max(0) as usize;
        let mut s = format!("{rounded:.decimals$}");
        if s.contains('.') {
            while s.ends_with('0') {
                s.pop();
            }
            if s.ends_with('.') {
                s.pop();
            }
        }
        s
    } else {
        let mut m = mant.to_string();
        if m.contains('.') {
            while m.ends_with('0') {
                m.pop();
            }
            if m.ends_with('.') {
                m.pop();
            }
        }
        format!("{m}e{exp}")
    }
}

/// Writes the `# config_sha256=...` line that heads every CSV output.
pub fn write_provenance<W: Write>(w: &mut W, hash: Option<&str>) -> std::io::Result<()> {
    if let Some(h) = hash {
        writeln!(w, "# config_sha256={h}")?;
    }
    Ok(())
}

/// Lower-case hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}
