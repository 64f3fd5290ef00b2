//! CSV emitters and readers shared by the profile types.
//!
//! Reals are written with 17 significant digits so every value round-trips
//! through text exactly.

use std::io::Write;

use crate::error::Result;

/// Round-trip-safe text form of an `f64`.
pub fn fmt_real(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes a header and rows of already formatted cells.
pub fn write_rows<W, I, R>(mut w: W, header: &[&str], rows: I) -> Result<()>
where
    W: Write,
    I: IntoIterator<Item = R>,
    R: AsRef<[String]>,
{
    writeln!(w, "{}", header.join(","))?;
    for row in rows {
        writeln!(w, "{}", row.as_ref().join(","))?;
    }
    w.flush()?;
    Ok(())
}
