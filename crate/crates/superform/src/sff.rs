//! The SFF1 form-field container.
//!
//! Layout: one ASCII header line
//!
//! ```text
//! SFF1 n p q m_1 ... m_n lo_1 hi_1 ... lo_n hi_n boundary
//! ```
//!
//! followed, for every monomial key in ascending `(I-mask, J-mask)` order, by
//! one ASCII line `I J` (decimal masks) and then that key's grid data as
//! little-endian IEEE-754 doubles, row-major and tightly packed. All keys of
//! the bidegree are present. `boundary` is `periodic` or `zero-padded`.
//! Float bounds are written in shortest round-trip form, so a write/read
//! cycle reproduces the grid bit-exactly.

use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::field::FormField;
use crate::grid::{Boundary, Grid};
use crate::metric::enumerate_keys;

pub fn write_field<W: Write>(mut w: W, field: &FormField) -> Result<()> {
    let grid = field.grid();
    let n = grid.dim();
    let (p, q) = field.bidegree();
    let mut header = format!("SFF1 {n} {p} {q}");
    for a in 0..n {
        header.push_str(&format!(" {}", grid.shape()[a]));
    }
    for a in 0..n {
        header.push_str(&format!(" {} {}", grid.lo()[a], grid.hi()[a]));
    }
    header.push(' ');
    header.push_str(grid.boundary().as_str());
    header.push('\n');
    w.write_all(header.as_bytes())?;

    for key in field.keys().collect::<Vec<_>>() {
        w.write_all(format!("{} {}\n", key.x, key.xi).as_bytes())?;
        let vals = field.values(key);
        let mut buf = Vec::with_capacity(vals.len() * 8);
        for v in vals {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

fn read_line<R: BufRead>(r: &mut R) -> Result<String> {
    let mut line = String::new();
    let read = r.read_line(&mut line)?;
    if read == 0 {
        return Err(Error::SffFormat("unexpected end of stream".into()));
    }
    Ok(line.trim_end_matches(['\n', '\r']).to_string())
}

pub fn read_field<R: BufRead>(mut r: R) -> Result<FormField> {
    let header = read_line(&mut r)?;
    let tokens: Vec<&str> = header.split_whitespace().collect();
    if tokens.first() != Some(&"SFF1") {
        return Err(Error::SffFormat("missing SFF1 magic".into()));
    }
    let parse_usize = |s: &str| -> Result<usize> {
        s.parse()
            .map_err(|_| Error::SffFormat(format!("bad integer `{s}`")))
    };
    let parse_f64 = |s: &str| -> Result<f64> {
        s.parse()
            .map_err(|_| Error::SffFormat(format!("bad float `{s}`")))
    };
    if tokens.len() < 4 {
        return Err(Error::SffFormat("truncated header".into()));
    }
    let n = parse_usize(tokens[1])?;
    let p = parse_usize(tokens[2])?;
    let q = parse_usize(tokens[3])?;
    let expected = 4 + n + 2 * n + 1;
    if tokens.len() != expected {
        return Err(Error::SffFormat(format!(
            "header has {} tokens, expected {expected}",
            tokens.len()
        )));
    }
    let mut m = Vec::with_capacity(n);
    for a in 0..n {
        m.push(parse_usize(tokens[4 + a])?);
    }
    let mut lo = Vec::with_capacity(n);
    let mut hi = Vec::with_capacity(n);
    for a in 0..n {
        lo.push(parse_f64(tokens[4 + n + 2 * a])?);
        hi.push(parse_f64(tokens[4 + n + 2 * a + 1])?);
    }
    let boundary = Boundary::parse(tokens[4 + 3 * n])?;
    let grid = Grid::new(lo, hi, m, boundary)?;
    let len = grid.len();

    let mut field = FormField::zero(&grid, p, q);
    let keys = if p <= n && q <= n {
        enumerate_keys(n, p, q)
    } else {
        Vec::new()
    };
    for key in keys {
        let line = read_line(&mut r)?;
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 2 {
            return Err(Error::SffFormat(format!("bad key line `{line}`")));
        }
        let x: u16 = parts[0]
            .parse()
            .map_err(|_| Error::SffFormat(format!("bad mask `{}`", parts[0])))?;
        let xi: u16 = parts[1]
            .parse()
            .map_err(|_| Error::SffFormat(format!("bad mask `{}`", parts[1])))?;
        if x != key.x || xi != key.xi {
            return Err(Error::SffFormat(format!(
                "key ({x},{xi}) out of order, expected ({},{})",
                key.x, key.xi
            )));
        }
        let mut buf = vec![0u8; len * 8];
        r.read_exact(&mut buf)
            .map_err(|e| Error::SffFormat(format!("short data block for key ({x},{xi}): {e}")))?;
        let vals = field.values_mut(key);
        for (i, chunk) in buf.chunks_exact(8).enumerate() {
            vals[i] = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
        }
    }
    Ok(field)
}

pub fn write_field_to_path(path: &Path, field: &FormField) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_field(std::io::BufWriter::new(file), field)
}

pub fn read_field_from_path(path: &Path) -> Result<FormField> {
    let file = std::fs::File::open(path)?;
    read_field(std::io::BufReader::new(file))
}
