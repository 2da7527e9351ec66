//! CSV and binary snapshot formats.
//!
//! Numbers are written with 17 significant digits (`{:.16e}`) and LF line
//! endings so outputs are byte-reproducible.

use std::io::{self, Read, Write};

use crate::error::{Error, Result};
use crate::scalar::{lit, to_f64, Scalar};
use crate::spectral::{Grid, GridField};

const MAGIC: &[u8; 8] = b"FWLABF64";
pub const HEADER_LEN: usize = 32;

/// Formats a number the way every CSV writer in the crate does.
pub fn fmt_num(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes a CSV with the given header and rows of numbers.
pub fn write_csv<W: Write>(mut w: W, header: &[&str], rows: &[Vec<f64>]) -> io::Result<()> {
    writeln!(w, "{}", header.join(","))?;
    let mut line = String::new();
    for row in rows {
        line.clear();
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                line.push(',');
            }
            line.push_str(&fmt_num(*v));
        }
        line.push('\n');
        w.write_all(line.as_bytes())?;
    }
    Ok(())
}

/// Two-column `x,u` snapshot.
pub fn write_field_csv<T: Scalar, W: Write>(w: W, field: &GridField<T>) -> io::Result<()> {
    let rows: Vec<Vec<f64>> = field
        .grid()
        .points()
        .into_iter()
        .zip(field.values())
        .map(|(x, &u)| vec![to_f64(x), to_f64(u)])
        .collect();
    write_csv(w, &["x", "u"], &rows)
}

/// Binary snapshot: magic, `n` (u64), `L` and `t` (f64), then `n` values,
/// all little-endian.
pub fn write_snapshot<T: Scalar, W: Write>(mut w: W, field: &GridField<T>, t: f64) -> io::Result<()> {
    let grid = field.grid();
    let mut buf = Vec::with_capacity(HEADER_LEN + 8 * grid.n());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(grid.n() as u64).to_le_bytes());
    buf.extend_from_slice(&to_f64(grid.half_length()).to_le_bytes());
    buf.extend_from_slice(&t.to_le_bytes());
    for &v in field.values() {
        buf.extend_from_slice(&to_f64(v).to_le_bytes());
    }
    w.write_all(&buf)
}

/// Reads a snapshot written by [`write_snapshot`]; returns the field and `t`.
pub fn read_snapshot<T: Scalar, R: Read>(mut r: R) -> Result<(GridField<T>, f64)> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)
        .map_err(|e| Error::Domain(format!("snapshot read failed: {e}")))?;
    if bytes.len() < HEADER_LEN || &bytes[..8] != MAGIC {
        return Err(Error::Domain("not a field snapshot".into()));
    }
    let word = |i: usize| -> [u8; 8] { bytes[i..i + 8].try_into().expect("8-byte slice") };
    let n = u64::from_le_bytes(word(8)) as usize;
    let half_length = f64::from_le_bytes(word(16));
    let t = f64::from_le_bytes(word(24));
    if bytes.len() != HEADER_LEN + 8 * n {
        return Err(Error::Domain(format!(
            "snapshot length {} does not match n = {n}",
            bytes.len()
        )));
    }
    let values = (0..n)
        .map(|j| lit::<T>(f64::from_le_bytes(word(HEADER_LEN + 8 * j))))
        .collect();
    let grid = Grid::new(lit(half_length), n)?;
    Ok((GridField::from_values(&grid, values)?, t))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_format() {
        assert_eq!(fmt_num(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_num(-2.0), "-2.0000000000000000e0");
        let back: f64 = fmt_num(std::f64::consts::PI).parse().unwrap();
        assert_eq!(back, std::f64::consts::PI);
    }

    #[test]
    fn csv_layout() {
        let mut out = Vec::new();
        write_csv(&mut out, &["a", "b"], &[vec![1.0, 2.0]]).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text, "a,b\n1.0000000000000000e0,2.0000000000000000e0\n");
        assert!(!text.contains('\r'));
    }

    #[test]
    fn snapshot_round_trip() {
        let grid = Grid::<f64>::new(3.5, 64).unwrap();
        let f = GridField::from_fn(&grid, |x| x.cos() * 1e-3);
        let mut buf = Vec::new();
        write_snapshot(&mut buf, &f, 0.75).unwrap();
        assert_eq!(buf.len(), HEADER_LEN + 8 * 64);
        let (g, t): (GridField<f64>, f64) = read_snapshot(&buf[..]).unwrap();
        assert_eq!(t, 0.75);
        assert_eq!(g.grid(), f.grid());
        assert_eq!(g.values(), f.values());
        assert!(read_snapshot::<f64, _>(&buf[..40]).is_err());
        assert!(read_snapshot::<f64, _>(&b"garbage-garbage-garbage-garbage-garbage"[..]).is_err());
    }
}
