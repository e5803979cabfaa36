//! Text file formats.
//!
//! * point patterns: CSV with header `x,y`;
//! * grids: first line `nx ny width height`, then `ny` lines of `nx` values,
//!   row `j` holding pixels with `y` index `j` (increasing `y`);
//! * spectra: CSV `kx,ky,re,im`, one `0,0,re,0` row for the zero term;
//! * regularisation paths and coefficients: CSV tables.
//!
//! Reals are written in Rust's shortest round-trip form, so reading back a
//! written file is bit-exact.

use std::io::{BufRead, Write};

use num_complex::Complex64;

use crate::domain::{PointPattern, Raster, Window};
use crate::error::{Error, Result};
use crate::solver::{CoefficientVector, FitResult};
use crate::spectral::{Frequency, FrequencyOrder, Spectrum};

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse { line, message: message.into() }
}

fn parse_f64(field: &str, line: usize) -> Result<f64> {
    let v: f64 = field.trim().parse().map_err(|_| parse_err(line, format!("not a number: `{}`", field.trim())))?;
    if !v.is_finite() {
        return Err(parse_err(line, format!("non-finite value `{}`", field.trim())));
    }
    Ok(v)
}

fn content_lines<R: BufRead>(reader: R) -> impl Iterator<Item = (usize, std::io::Result<String>)> {
    reader
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| l.as_ref().map_or(true, |s| !s.trim().is_empty()))
}

pub fn write_pattern<W: Write>(pattern: &PointPattern, mut out: W) -> Result<()> {
    writeln!(out, "x,y")?;
    for &(x, y) in pattern.points() {
        writeln!(out, "{x},{y}")?;
    }
    Ok(())
}

pub fn read_pattern<R: BufRead>(reader: R, window: Window) -> Result<PointPattern> {
    let mut points = Vec::new();
    let mut header_seen = false;
    for (n, line) in content_lines(reader) {
        let line = line?;
        if !header_seen {
            header_seen = true;
            let h: Vec<&str> = line.split(',').map(str::trim).collect();
            if h != ["x", "y"] {
                return Err(parse_err(n, "expected header `x,y`"));
            }
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 2 {
            return Err(parse_err(n, format!("expected 2 fields, found {}", f.len())));
        }
        points.push((parse_f64(f[0], n)?, parse_f64(f[1], n)?));
    }
    if !header_seen {
        return Err(parse_err(1, "missing header `x,y`"));
    }
    PointPattern::new(points, window)
}

pub fn write_grid<W: Write>(grid: &Raster, mut out: W) -> Result<()> {
    let w = grid.window();
    writeln!(out, "{} {} {} {}", grid.nx(), grid.ny(), w.width(), w.height())?;
    for row in grid.values().chunks(grid.nx()) {
        let mut first = true;
        for v in row {
            if !first {
                write!(out, " ")?;
            }
            write!(out, "{v}")?;
            first = false;
        }
        writeln!(out)?;
    }
    Ok(())
}

pub fn read_grid<R: BufRead>(reader: R) -> Result<Raster> {
    let mut lines = content_lines(reader);
    let (n, header) = lines.next().ok_or_else(|| parse_err(1, "empty grid file"))?;
    let header = header?;
    let h: Vec<&str> = header.split_whitespace().collect();
    if h.len() != 4 {
        return Err(parse_err(n, "expected `nx ny width height`"));
    }
    let nx: usize = h[0].parse().map_err(|_| parse_err(n, "nx is not an integer"))?;
    let ny: usize = h[1].parse().map_err(|_| parse_err(n, "ny is not an integer"))?;
    let window = Window::new(parse_f64(h[2], n)?, parse_f64(h[3], n)?)?;
    let mut values = Vec::with_capacity(nx * ny);
    let mut rows = 0;
    for (n, line) in lines {
        let line = line?;
        let before = values.len();
        for f in line.split_whitespace() {
            values.push(parse_f64(f, n)?);
        }
        if values.len() - before != nx {
            return Err(parse_err(n, format!("expected {nx} values, found {}", values.len() - before)));
        }
        rows += 1;
    }
    if rows != ny {
        return Err(parse_err(n, format!("expected {ny} rows, found {rows}")));
    }
    Raster::new(nx, ny, window, values)
}

pub fn write_spectrum<W: Write>(spectrum: &Spectrum, mut out: W) -> Result<()> {
    writeln!(out, "kx,ky,re,im")?;
    writeln!(out, "0,0,{},0", spectrum.zero())?;
    for (k, v) in spectrum.iter() {
        writeln!(out, "{},{},{},{}", k.kx, k.ky, v.re, v.im)?;
    }
    Ok(())
}

pub fn read_spectrum<R: BufRead>(reader: R) -> Result<Spectrum> {
    let mut spectrum = Spectrum::new(0.0);
    let mut header_seen = false;
    for (n, line) in content_lines(reader) {
        let line = line?;
        if !header_seen {
            header_seen = true;
            if line.split(',').map(str::trim).collect::<Vec<_>>() != ["kx", "ky", "re", "im"] {
                return Err(parse_err(n, "expected header `kx,ky,re,im`"));
            }
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 4 {
            return Err(parse_err(n, format!("expected 4 fields, found {}", f.len())));
        }
        let kx: i32 = f[0].trim().parse().map_err(|_| parse_err(n, "kx is not an integer"))?;
        let ky: i32 = f[1].trim().parse().map_err(|_| parse_err(n, "ky is not an integer"))?;
        let v = Complex64::new(parse_f64(f[2], n)?, parse_f64(f[3], n)?);
        let k = Frequency::new(kx, ky);
        if k.is_zero() && v.im != 0.0 {
            return Err(parse_err(n, "zero-frequency coefficient must be real"));
        }
        spectrum.set(k, v);
    }
    Ok(spectrum)
}

/// `lambda,loglik,support,cbic` (plus convergence flags).
pub fn write_path<W: Write>(result: &FitResult, mut out: W) -> Result<()> {
    writeln!(out, "lambda,loglik,support,cbic,converged,selected")?;
    for (i, p) in result.path.iter().enumerate() {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            p.lambda,
            p.loglik,
            p.support,
            p.cbic,
            u8::from(p.converged && p.error.is_none()),
            u8::from(result.selected == Some(i))
        )?;
    }
    Ok(())
}

/// `index,kx,ky,part,value_scaled,value_unscaled`; index 0 is the intercept.
pub fn write_coefficients<W: Write>(coef: &CoefficientVector, order: &FrequencyOrder, mut out: W) -> Result<()> {
    let k = order.len();
    if coef.len() != 2 * k {
        return Err(Error::LengthMismatch { expected: 2 * k, actual: coef.len() });
    }
    writeln!(out, "index,kx,ky,part,value_scaled,value_unscaled")?;
    writeln!(out, "0,0,0,intercept,{},{}", coef.intercept, coef.intercept)?;
    let scaled = coef.scaled();
    for (j, (s, u)) in scaled.iter().zip(coef.unscaled()).enumerate() {
        let f = order.get(j % k);
        let part = if j < k { "re" } else { "im" };
        writeln!(out, "{},{},{},{part},{s},{u}", j + 1, f.kx, f.ky)?;
    }
    Ok(())
}

/// 8-bit binary PGM with values mapped linearly from `[min, max]` to
/// `[0, 255]`; the first row of the image is the top of the window.
pub fn write_pgm<W: Write>(grid: &Raster, mut out: W) -> Result<()> {
    let (lo, hi) = grid.min_max();
    let span = if hi > lo { hi - lo } else { 1.0 };
    write!(out, "P5\n{} {}\n255\n", grid.nx(), grid.ny())?;
    let mut bytes = Vec::with_capacity(grid.nx() * grid.ny());
    for j in (0..grid.ny()).rev() {
        for i in 0..grid.nx() {
            bytes.push((((grid.get(i, j) - lo) / span) * 255.0).round() as u8);
        }
    }
    out.write_all(&bytes)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::spiral_order;

    #[test]
    fn pattern_round_trip_is_bit_exact() {
        let w = Window::STUDY;
        let pat = PointPattern::new(vec![(0.1 + 0.2, 785.9999999999999), (1e-300, 0.0), (1024.0, std::f64::consts::PI)], w).unwrap();
        let mut buf = Vec::new();
        write_pattern(&pat, &mut buf).unwrap();
        assert_eq!(read_pattern(&buf[..], w).unwrap(), pat);
    }

    #[test]
    fn pattern_errors_name_the_line() {
        let err = read_pattern(&b"x,y\n1,2\n3,oops\n"[..], Window::STUDY).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }));
        assert!(read_pattern(&b"x,y\n2000,1\n"[..], Window::STUDY).is_err());
    }

    #[test]
    fn grid_round_trip() {
        let g = Raster::from_fn(5, 3, Window::new(2.0, 1.5).unwrap(), |x, y| x.sin() / (1.0 + y)).unwrap();
        let mut buf = Vec::new();
        write_grid(&g, &mut buf).unwrap();
        assert_eq!(read_grid(&buf[..]).unwrap(), g);
        assert!(read_grid(&b"2 2 1 1\n1 2\n3\n"[..]).is_err());
    }

    #[test]
    fn spectrum_round_trip() {
        let s = Spectrum::new(1.0)
            .with(Frequency::new(1, 0), Complex64::new(0.25, -0.5))
            .with(Frequency::new(-2, 3), Complex64::new(1e-3, 7.0));
        let mut buf = Vec::new();
        write_spectrum(&s, &mut buf).unwrap();
        assert!(String::from_utf8(buf.clone()).unwrap().starts_with("kx,ky,re,im\n0,0,1,0\n"));
        assert_eq!(read_spectrum(&buf[..]).unwrap(), s);
    }

    #[test]
    fn coefficient_table_layout() {
        let order = spiral_order(2);
        let c = CoefficientVector::new(-1.0, vec![0.5, 0.0, 0.25, -1.0], vec![2.0, 1.0, 1.0, 4.0]).unwrap();
        let mut buf = Vec::new();
        write_coefficients(&c, &order, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[1], "0,0,0,intercept,-1,-1");
        assert_eq!(lines[2], "1,1,0,re,1,0.5");
        assert_eq!(lines[5], "4,1,1,im,-4,-1");
    }

    #[test]
    fn pgm_header_and_size() {
        let g = Raster::from_fn(4, 3, Window::unit(), |x, _| x).unwrap();
        let mut buf = Vec::new();
        write_pgm(&g, &mut buf).unwrap();
        assert!(buf.starts_with(b"P5\n4 3\n255\n"));
        assert_eq!(buf.len(), 11 + 12);
    }
}
