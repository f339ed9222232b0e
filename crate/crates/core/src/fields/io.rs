//! `FHM1` field files: a text header followed by node values either as CSV
//! rows (row-major node order) or as little-endian `f64`s.
//!
//! ```text
//! FHM1
//! n=2 d=2
//! origin=-1 -1
//! h=0.015625
//! counts=129 129
//! exterior=vortex
//! flagged=8320          (optional)
//! encoding=binary       (optional, text otherwise)
//! ```

use std::io::{BufRead, Write};

use super::exterior::{AnalyticKind, AnalyticMap, Exterior};
use super::field::VectorField;
use super::grid::GridSpec;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Format a scalar with 17 significant digits.
pub fn fmt17<T: Real>(v: T) -> String {
    format!("{:.16e}", v.as_f64())
}

fn join<T: Real>(v: &[T]) -> String {
    v.iter().map(|&x| fmt17(x)).collect::<Vec<_>>().join(" ")
}

fn exterior_line<T: Real>(e: &Exterior<T>) -> String {
    match e {
        Exterior::None => "none".to_string(),
        Exterior::Constant(c) => format!("constant {}", join(c)),
        Exterior::Analytic(m) => {
            let name = match m.kind {
                AnalyticKind::Vortex => "vortex",
                AnalyticKind::Wave => "wave",
            };
            if m.is_identity() {
                name.to_string()
            } else {
                format!("{name} at={} scale={}", m.shift.iter().map(|&x| fmt17(x)).collect::<Vec<_>>().join(","), fmt17(m.scale))
            }
        }
    }
}

fn write_header<T: Real, W: Write>(u: &VectorField<T>, binary: bool, w: &mut W) -> Result<()> {
    let s = &u.spec;
    writeln!(w, "FHM1")?;
    writeln!(w, "n={} d={}", s.n, s.d)?;
    writeln!(w, "origin={}", join(&s.origin))?;
    writeln!(w, "h={}", fmt17(s.h))?;
    writeln!(w, "counts={}", s.counts.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(" "))?;
    writeln!(w, "exterior={}", exterior_line(&u.exterior))?;
    let flagged: Vec<String> = (0..s.len()).filter(|&i| u.flags[i]).map(|i| i.to_string()).collect();
    if !flagged.is_empty() {
        writeln!(w, "flagged={}", flagged.join(" "))?;
    }
    if binary {
        writeln!(w, "encoding=binary")?;
    }
    Ok(())
}

pub fn write_text<T: Real, W: Write>(u: &VectorField<T>, w: &mut W) -> Result<()> {
    write_header(u, false, w)?;
    for row in u.values.chunks(u.spec.d) {
        writeln!(w, "{}", row.iter().map(|&x| fmt17(x)).collect::<Vec<_>>().join(","))?;
    }
    Ok(())
}

pub fn write_binary<T: Real, W: Write>(u: &VectorField<T>, w: &mut W) -> Result<()> {
    write_header(u, true, w)?;
    for &v in &u.values {
        w.write_all(&v.as_f64().to_le_bytes())?;
    }
    Ok(())
}

fn parse_list<T: Real>(s: &str, sep: char, line: usize) -> Result<Vec<T>> {
    s.split(sep)
        .filter(|t| !t.trim().is_empty())
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map(T::lit)
                .map_err(|e| Error::Parse { line, msg: format!("bad number {t:?}: {e}") })
        })
        .collect()
}

fn field<'a>(line: &'a str, key: &str, no: usize) -> Result<&'a str> {
    line.strip_prefix(key)
        .and_then(|r| r.strip_prefix('='))
        .ok_or_else(|| Error::Parse { line: no, msg: format!("expected `{key}=`, found {line:?}") })
}

fn parse_exterior<T: Real>(s: &str, n: usize, d: usize, no: usize) -> Result<Exterior<T>> {
    let mut parts = s.split_whitespace();
    let name = parts.next().unwrap_or("");
    let ext = match name {
        "none" => Exterior::None,
        "constant" => {
            let c: Vec<T> = parts.map(|p| p.parse::<f64>().map(T::lit)).collect::<std::result::Result<_, _>>().map_err(
                |e| Error::Parse { line: no, msg: format!("bad constant: {e}") },
            )?;
            if c.len() != d {
                return Err(Error::Parse { line: no, msg: format!("constant needs {d} components") });
            }
            Exterior::Constant(c)
        }
        "vortex" | "wave" => {
            let kind = if name == "vortex" { AnalyticKind::Vortex } else { AnalyticKind::Wave };
            let mut map = AnalyticMap::identity(kind, n);
            for p in parts {
                if let Some(v) = p.strip_prefix("at=") {
                    map.shift = parse_list(v, ',', no)?;
                } else if let Some(v) = p.strip_prefix("scale=") {
                    map.scale = T::lit(v.parse::<f64>().map_err(|e| Error::Parse { line: no, msg: e.to_string() })?);
                } else {
                    return Err(Error::Parse { line: no, msg: format!("unknown exterior option {p:?}") });
                }
            }
            if map.target_dim(n) != d {
                return Err(Error::Parse { line: no, msg: format!("{name} exterior maps into ℝ^{}", map.target_dim(n)) });
            }
            Exterior::Analytic(map)
        }
        other => return Err(Error::Parse { line: no, msg: format!("unknown exterior {other:?}") }),
    };
    Ok(ext)
}

/// Read either encoding.
pub fn read<T: Real, R: BufRead>(mut r: R) -> Result<VectorField<T>> {
    let mut no = 0usize;
    let mut next_line = |r: &mut R| -> Result<(usize, String)> {
        let mut s = String::new();
        if r.read_line(&mut s)? == 0 {
            return Err(Error::Parse { line: no + 1, msg: "unexpected end of file".into() });
        }
        no += 1;
        Ok((no, s.trim_end_matches(['\n', '\r']).to_string()))
    };
    let (l, magic) = next_line(&mut r)?;
    if magic.trim() != "FHM1" {
        return Err(Error::Parse { line: l, msg: "missing FHM1 magic".into() });
    }
    let (l, nd) = next_line(&mut r)?;
    let mut n = 0;
    let mut d = 0;
    for tok in nd.split_whitespace() {
        if let Some(v) = tok.strip_prefix("n=") {
            n = v.parse().map_err(|_| Error::Parse { line: l, msg: "bad n".into() })?;
        } else if let Some(v) = tok.strip_prefix("d=") {
            d = v.parse().map_err(|_| Error::Parse { line: l, msg: "bad d".into() })?;
        }
    }
    if n == 0 || d == 0 {
        return Err(Error::Parse { line: l, msg: "expected `n=<int> d=<int>`".into() });
    }
    let (l, s) = next_line(&mut r)?;
    let origin: Vec<T> = parse_list(field(&s, "origin", l)?, ' ', l)?;
    let (l, s) = next_line(&mut r)?;
    let h: T = T::lit(field(&s, "h", l)?.trim().parse::<f64>().map_err(|e| Error::Parse { line: l, msg: e.to_string() })?);
    let (l, s) = next_line(&mut r)?;
    let counts: Vec<usize> = field(&s, "counts", l)?
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| Error::Parse { line: l, msg: format!("bad count {t:?}") }))
        .collect::<Result<_>>()?;
    let (l, s) = next_line(&mut r)?;
    let exterior = parse_exterior(field(&s, "exterior", l)?, n, d, l)?;
    let spec = GridSpec::new(d, origin, h, counts).map_err(|e| Error::Parse { line: l, msg: e.to_string() })?;
    if spec.n != n {
        return Err(Error::Parse { line: 3, msg: "origin length differs from n".into() });
    }

    let total = spec.len();
    let mut flags = vec![false; total];
    let mut binary = false;
    let mut pending: Option<(usize, String)> = None;
    loop {
        let mut s = String::new();
        if r.read_line(&mut s)? == 0 {
            break;
        }
        no += 1;
        let line = s.trim_end_matches(['\n', '\r']).to_string();
        if let Some(v) = line.strip_prefix("flagged=") {
            for t in v.split_whitespace() {
                let i: usize = t.parse().map_err(|_| Error::Parse { line: no, msg: format!("bad index {t:?}") })?;
                if i >= total {
                    return Err(Error::Parse { line: no, msg: format!("flagged index {i} out of range") });
                }
                flags[i] = true;
            }
        } else if line.trim() == "encoding=binary" {
            binary = true;
            break;
        } else {
            pending = Some((no, line));
            break;
        }
    }

    let mut values = Vec::with_capacity(total * d);
    if binary {
        let mut buf = Vec::new();
        r.read_to_end(&mut buf)?;
        if buf.len() != total * d * 8 {
            return Err(Error::Parse { line: no + 1, msg: format!("expected {} bytes, got {}", total * d * 8, buf.len()) });
        }
        values.extend(buf.chunks_exact(8).map(|c| T::lit(f64::from_le_bytes(c.try_into().unwrap()))));
    } else {
        let mut push_row = |l: usize, row: &str| -> Result<()> {
            if row.trim().is_empty() {
                return Ok(());
            }
            let v: Vec<T> = parse_list(row, ',', l)?;
            if v.len() != d {
                return Err(Error::Parse { line: l, msg: format!("expected {d} columns, got {}", v.len()) });
            }
            values.extend(v);
            Ok(())
        };
        if let Some((l, row)) = pending {
            push_row(l, &row)?;
        }
        for line in r.lines() {
            no += 1;
            push_row(no, &line?)?;
        }
        if values.len() != total * d {
            return Err(Error::Parse { line: no, msg: format!("expected {total} rows, got {}", values.len() / d) });
        }
    }
    let mut u = VectorField::new(spec, values, exterior)?;
    u.flags = flags;
    Ok(u)
}

pub fn read_path<T: Real>(path: &std::path::Path) -> Result<VectorField<T>> {
    let f = std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    read(std::io::BufReader::new(f))
}
