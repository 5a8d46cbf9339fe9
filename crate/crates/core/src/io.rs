//! File formats: field dumps, covariance spectra, ensemble metadata, and
//! estimate tables.
//!
//! Field dump (CSV, version 1): one header line
//! `# field v=1 kind=<complex4|real8> n=<n> extent=<L> layout=site-major,component-minor`
//! followed by one row per site in flat site order (`(ix·n+iy)·n+iz`),
//! columns `ix,iy,iz` then the components (re/im interleaved for complex
//! fields). Spectra export one row per wavevector bin: the three bin
//! indices, then the 64 matrix entries in row-major order as re/im pairs.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::covariance::CovarianceSpectrum;
use crate::error::{Error, Result};
use crate::field::{ComplexSpinorField, RealSpinorField};
use crate::grid::PeriodicGrid;

fn parse_header(line: &str) -> Result<(String, usize, f64)> {
    let mut kind = None;
    let mut n = None;
    let mut extent = None;
    for token in line.trim_start_matches('#').split_whitespace() {
        if let Some((key, value)) = token.split_once('=') {
            match key {
                "kind" => kind = Some(value.to_string()),
                "n" => n = value.parse::<usize>().ok(),
                "extent" => extent = value.parse::<f64>().ok(),
                _ => {}
            }
        }
    }
    match (kind, n, extent) {
        (Some(k), Some(n), Some(l)) => Ok((k, n, l)),
        _ => Err(Error::Format(format!("bad field header: {line}"))),
    }
}

pub fn write_complex_field(path: &Path, field: &ComplexSpinorField) -> Result<()> {
    let grid = field.grid();
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(
        out,
        "# field v=1 kind=complex4 n={} extent={} layout=site-major,component-minor",
        grid.n(),
        grid.extent()
    )?;
    for site in 0..grid.sites() {
        let idx = grid.unflat(site);
        write!(out, "{},{},{}", idx[0], idx[1], idx[2])?;
        let v = field.site(site);
        for c in 0..4 {
            write!(out, ",{:.17e},{:.17e}", v[c].re, v[c].im)?;
        }
        writeln!(out)?;
    }
    Ok(())
}

pub fn read_complex_field(path: &Path) -> Result<ComplexSpinorField> {
    let mut reader = BufReader::new(std::fs::File::open(path)?);
    let mut header = String::new();
    reader.read_line(&mut header)?;
    let (kind, n, extent) = parse_header(&header)?;
    if kind != "complex4" {
        return Err(Error::Format(format!("expected complex4 dump, got {kind}")));
    }
    let grid = PeriodicGrid::new(n, extent)?;
    let mut data = vec![Complex64::new(0.0, 0.0); 4 * grid.sites()];
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 3 + 8 {
            return Err(Error::Format(format!("bad field row: {line}")));
        }
        let idx = [
            cols[0].parse::<usize>().map_err(|e| Error::Format(e.to_string()))?,
            cols[1].parse::<usize>().map_err(|e| Error::Format(e.to_string()))?,
            cols[2].parse::<usize>().map_err(|e| Error::Format(e.to_string()))?,
        ];
        let site = grid.flat(idx);
        for c in 0..4 {
            let re: f64 = cols[3 + 2 * c].parse().map_err(|_| {
                Error::Format(format!("bad float in row: {line}"))
            })?;
            let im: f64 = cols[4 + 2 * c].parse().map_err(|_| {
                Error::Format(format!("bad float in row: {line}"))
            })?;
            data[4 * site + c] = Complex64::new(re, im);
        }
    }
    ComplexSpinorField::from_data(grid, data)
}

pub fn write_real_field(path: &Path, field: &RealSpinorField) -> Result<()> {
    let grid = field.grid();
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(
        out,
        "# field v=1 kind=real8 n={} extent={} layout=site-major,component-minor",
        grid.n(),
        grid.extent()
    )?;
    for site in 0..grid.sites() {
        let idx = grid.unflat(site);
        write!(out, "{},{},{}", idx[0], idx[1], idx[2])?;
        let v = field.site(site);
        for c in 0..8 {
            write!(out, ",{:.17e}", v[c])?;
        }
        writeln!(out)?;
    }
    Ok(())
}

pub fn read_real_field(path: &Path) -> Result<RealSpinorField> {
    let mut reader = BufReader::new(std::fs::File::open(path)?);
    let mut header = String::new();
    reader.read_line(&mut header)?;
    let (kind, n, extent) = parse_header(&header)?;
    if kind != "real8" {
        return Err(Error::Format(format!("expected real8 dump, got {kind}")));
    }
    let grid = PeriodicGrid::new(n, extent)?;
    let mut data = vec![0.0; 8 * grid.sites()];
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 3 + 8 {
            return Err(Error::Format(format!("bad field row: {line}")));
        }
        let idx = [
            cols[0].parse::<usize>().map_err(|e| Error::Format(e.to_string()))?,
            cols[1].parse::<usize>().map_err(|e| Error::Format(e.to_string()))?,
            cols[2].parse::<usize>().map_err(|e| Error::Format(e.to_string()))?,
        ];
        let site = grid.flat(idx);
        for c in 0..8 {
            data[8 * site + c] = cols[3 + c]
                .parse()
                .map_err(|_| Error::Format(format!("bad float in row: {line}")))?;
        }
    }
    RealSpinorField::from_data(grid, data)
}

/// Spectrum CSV: `kx,ky,kz` bin indices then 128 floats (64 entries × re/im,
/// row-major).
pub fn write_spectrum_csv(path: &Path, q: &CovarianceSpectrum) -> Result<()> {
    let grid = q.grid();
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(
        out,
        "# spectrum v=1 n={} extent={} entries=row-major-8x8-re-im",
        grid.n(),
        grid.extent()
    )?;
    for bin in 0..grid.sites() {
        let idx = grid.unflat(bin);
        write!(out, "{},{},{}", idx[0], idx[1], idx[2])?;
        let m = q.at(bin);
        for r in 0..8 {
            for s in 0..8 {
                write!(out, ",{:.17e},{:.17e}", m[(r, s)].re, m[(r, s)].im)?;
            }
        }
        writeln!(out)?;
    }
    Ok(())
}

pub fn read_spectrum_csv(path: &Path) -> Result<CovarianceSpectrum> {
    let mut reader = BufReader::new(std::fs::File::open(path)?);
    let mut header = String::new();
    reader.read_line(&mut header)?;
    let (_, n, extent) = {
        // reuse the key=value scanner; kind is absent here
        let mut n = None;
        let mut extent = None;
        for token in header.trim_start_matches('#').split_whitespace() {
            if let Some((key, value)) = token.split_once('=') {
                match key {
                    "n" => n = value.parse::<usize>().ok(),
                    "extent" => extent = value.parse::<f64>().ok(),
                    _ => {}
                }
            }
        }
        match (n, extent) {
            (Some(n), Some(l)) => ((), n, l),
            _ => return Err(Error::Format(format!("bad spectrum header: {header}"))),
        }
    };
    let grid = PeriodicGrid::new(n, extent)?;
    let mut data = vec![crate::algebra::Matrix8c::zeros(); grid.sites()];
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 3 + 128 {
            return Err(Error::Format(format!(
                "spectrum row has {} columns, expected 131",
                cols.len()
            )));
        }
        let idx = [
            cols[0].parse::<usize>().map_err(|e| Error::Format(e.to_string()))?,
            cols[1].parse::<usize>().map_err(|e| Error::Format(e.to_string()))?,
            cols[2].parse::<usize>().map_err(|e| Error::Format(e.to_string()))?,
        ];
        let bin = grid.flat(idx);
        let mut m = crate::algebra::Matrix8c::zeros();
        for r in 0..8 {
            for s in 0..8 {
                let base = 3 + 2 * (8 * r + s);
                let re: f64 = cols[base]
                    .parse()
                    .map_err(|_| Error::Format("bad float in spectrum row".into()))?;
                let im: f64 = cols[base + 1]
                    .parse()
                    .map_err(|_| Error::Format("bad float in spectrum row".into()))?;
                m[(r, s)] = Complex64::new(re, im);
            }
        }
        data[bin] = m;
    }
    CovarianceSpectrum::from_data(grid, data)
}

/// Spectrum JSON export (same content as the CSV, self-describing).
pub fn write_spectrum_json(path: &Path, q: &CovarianceSpectrum) -> Result<()> {
    let grid = q.grid();
    let entries: Vec<serde_json::Value> = (0..grid.sites())
        .map(|bin| {
            let idx = grid.unflat(bin);
            let m = q.at(bin);
            let flat: Vec<[f64; 2]> = (0..8)
                .flat_map(|r| (0..8).map(move |s| (r, s)))
                .map(|(r, s)| [m[(r, s)].re, m[(r, s)].im])
                .collect();
            serde_json::json!({ "k": idx, "q": flat })
        })
        .collect();
    let doc = serde_json::json!({
        "version": 1,
        "grid": { "n": grid.n(), "extent": grid.extent() },
        "entries": entries,
    });
    std::fs::write(path, serde_json::to_string(&doc).map_err(|e| Error::Format(e.to_string()))?)?;
    Ok(())
}

/// Ensemble metadata JSON.
pub fn write_ensemble_metadata(
    path: &Path,
    descriptor: &serde_json::Value,
    seed: u64,
    n_samples: usize,
    grid: PeriodicGrid,
) -> Result<()> {
    let doc = serde_json::json!({
        "version": 1,
        "spec": descriptor,
        "seed": seed,
        "n_samples": n_samples,
        "grid": { "n": grid.n(), "extent": grid.extent() },
    });
    std::fs::write(
        path,
        serde_json::to_string_pretty(&doc).map_err(|e| Error::Format(e.to_string()))?,
    )?;
    Ok(())
}

/// Estimate table CSV with columns `probe,estimate_re,estimate_im,stderr`.
pub fn write_estimates_csv(path: &Path, rows: &[(String, f64, f64, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Format(e.to_string()))?;
    w.write_record(["probe", "estimate_re", "estimate_im", "stderr"])
        .map_err(|e| Error::Format(e.to_string()))?;
    for (probe, re, im, stderr) in rows {
        w.write_record([
            probe.clone(),
            format!("{re:.17e}"),
            format!("{im:.17e}"),
            format!("{stderr:.17e}"),
        ])
        .map_err(|e| Error::Format(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}
