use std::fmt::Write as _;
use std::io::{BufRead, Write};

use num_complex::Complex;

use super::{FourierMap, Grid};
use crate::error::{Result, WhiskerError};
use crate::scalar::Real;

/// Write `f` in the plain-text coefficient format.
///
/// Header `fourier l m N_1 .. N_l`, then one line per mode in increasing
/// lexicographic order of `k`: `k_1 .. k_l re_1 im_1 .. re_m im_m`.
pub fn write_coefficients<T: Real, W: Write>(f: &FourierMap<T>, mut out: W) -> Result<()> {
    let grid = f.grid();
    let mut s = String::new();
    let _ = write!(s, "fourier {} {}", grid.dim(), f.m());
    for n in grid.sizes() {
        let _ = write!(s, " {n}");
    }
    s.push('\n');
    let n = grid.len();
    let shifted = Grid::new(grid.sizes())?;
    for pos in 0..n {
        // pos enumerates the box with k_j running from -N_j/2 upwards
        let multi = shifted.multi_index(pos);
        let k: Vec<i64> = multi.iter().zip(grid.sizes()).map(|(&i, &nn)| i as i64 - (nn / 2) as i64).collect();
        let j = grid.mode_index(&k).expect("mode inside box");
        for (a, kj) in k.iter().enumerate() {
            if a > 0 {
                s.push(' ');
            }
            let _ = write!(s, "{kj}");
        }
        for c in 0..f.m() {
            let z = f.coeffs()[c * n + j];
            let _ = write!(s, " {:.16e} {:.16e}", z.re.to_f64_(), z.im.to_f64_());
        }
        s.push('\n');
    }
    out.write_all(s.as_bytes())?;
    Ok(())
}

/// Parse the coefficient format. Modes absent from the file are zero.
pub fn read_coefficients<T: Real, R: BufRead>(input: R) -> Result<FourierMap<T>> {
    let mut lines = input.lines().enumerate().filter_map(|(i, l)| match l {
        Ok(s) if s.trim().is_empty() || s.trim_start().starts_with('#') => None,
        other => Some((i + 1, other)),
    });
    let (hline, header) = lines.next().ok_or(WhiskerError::Parse { line: 1, msg: "empty file".into() })?;
    let header = header?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.first() != Some(&"fourier") || parts.len() < 4 {
        return Err(WhiskerError::Parse { line: hline, msg: "expected header `fourier l m N_1 .. N_l`".into() });
    }
    let int = |s: &str, line: usize| -> Result<usize> {
        s.parse::<usize>().map_err(|_| WhiskerError::Parse { line, msg: format!("bad integer `{s}`") })
    };
    let l = int(parts[1], hline)?;
    let m = int(parts[2], hline)?;
    if parts.len() != 3 + l {
        return Err(WhiskerError::Parse { line: hline, msg: format!("header needs {l} grid sizes") });
    }
    let sizes: Vec<usize> = parts[3..].iter().map(|s| int(s, hline)).collect::<Result<_>>()?;
    let grid = Grid::new(&sizes).map_err(|e| WhiskerError::Parse { line: hline, msg: e.to_string() })?;
    let n = grid.len();
    let mut coeffs = vec![Complex::new(T::zero(), T::zero()); m * n];
    for (line, text) in lines {
        let text = text?;
        let fields: Vec<&str> = text.split_whitespace().collect();
        if fields.len() != l + 2 * m {
            return Err(WhiskerError::Parse {
                line,
                msg: format!("expected {} fields, found {}", l + 2 * m, fields.len()),
            });
        }
        let k: Vec<i64> = fields[..l]
            .iter()
            .map(|s| s.parse::<i64>().map_err(|_| WhiskerError::Parse { line, msg: format!("bad mode index `{s}`") }))
            .collect::<Result<_>>()?;
        let j = grid.mode_index(&k).ok_or_else(|| WhiskerError::Parse { line, msg: format!("mode {k:?} outside grid") })?;
        for c in 0..m {
            let re: f64 = fields[l + 2 * c]
                .parse()
                .map_err(|_| WhiskerError::Parse { line, msg: format!("bad number `{}`", fields[l + 2 * c]) })?;
            let im: f64 = fields[l + 2 * c + 1]
                .parse()
                .map_err(|_| WhiskerError::Parse { line, msg: format!("bad number `{}`", fields[l + 2 * c + 1]) })?;
            if !re.is_finite() || !im.is_finite() {
                return Err(WhiskerError::Parse { line, msg: "non-finite coefficient".into() });
            }
            coeffs[c * n + j] = Complex::new(T::lit(re), T::lit(im));
        }
    }
    FourierMap::from_coeffs(&grid, m, coeffs)
}
