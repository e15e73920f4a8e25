//! CSV artifact writers and readers. Every file starts with a `# seed = N`
//! comment so a run can be traced back to its inputs, floats are printed
//! with 17 significant digits so a reread is bit-exact, and writes go
//! through a temp file plus rename so a crash never leaves a half-written
//! artifact behind.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::process;

use crate::dynamics::{SpinBin, Trajectory};
use crate::error::{Error, Result};
use crate::pulses::deconvolve::DriveFields;
use crate::sequences::{EchoTrace, NminPoint};

/// Write `bytes` to `path` atomically: a temp file in the same directory is
/// renamed over the destination only after the contents are flushed.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| Error::invalid(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp-{}", name.to_string_lossy(), process::id()));
    let mut f = fs::File::create(&tmp)?;
    f.write_all(bytes)?;
    f.sync_all()?;
    drop(f);
    if let Err(e) = fs::rename(&tmp, path) {
        let _ = fs::remove_file(&tmp);
        return Err(e.into());
    }
    Ok(())
}

/// CSV accumulator: `# seed = N` and any `# key = value` comments, then the
/// column-name line, then rows of floats at full precision.
pub struct Csv {
    buf: String,
    columns: Option<String>,
}

impl Csv {
    pub fn new(seed: u64, columns: &str) -> Csv {
        Csv { buf: format!("# seed = {seed}\n"), columns: Some(columns.to_string()) }
    }

    /// Extra `# key = value` header line; call before the first row.
    pub fn comment(&mut self, line: &str) {
        debug_assert!(self.columns.is_some(), "comments belong in the header");
        self.buf.push_str("# ");
        self.buf.push_str(line);
        self.buf.push('\n');
    }

    fn flush_columns(&mut self) {
        if let Some(c) = self.columns.take() {
            self.buf.push_str(&c);
            self.buf.push('\n');
        }
    }

    pub fn row(&mut self, values: &[f64]) {
        self.flush_columns();
        for (i, v) in values.iter().enumerate() {
            if i > 0 {
                self.buf.push(',');
            }
            self.buf.push_str(&format!("{v:.16e}"));
        }
        self.buf.push('\n');
    }

    pub fn into_string(mut self) -> String {
        self.flush_columns();
        self.buf
    }

    pub fn write(self, path: &Path) -> Result<()> {
        let text = self.into_string();
        atomic_write(path, text.as_bytes())
    }
}

/// Columns `t,X,Y,Sbar_x,Sbar_y,Sbar_z`.
pub fn trajectory_csv(seed: u64, traj: &Trajectory) -> String {
    let mut csv = Csv::new(seed, "t,X,Y,Sbar_x,Sbar_y,Sbar_z");
    for i in 0..traj.t.len() {
        let s = traj.sbar[i];
        csv.row(&[traj.t[i], traj.x[i], traj.y[i], s[0], s[1], s[2]]);
    }
    csv.into_string()
}

/// Columns `t,X,Y`: a stitched echo trace has no recorded spin averages.
pub fn trace_csv(seed: u64, trace: &EchoTrace) -> String {
    let mut csv = Csv::new(seed, "t,X,Y");
    for i in 0..trace.t.len() {
        csv.row(&[trace.t[i], trace.x[i], trace.y[i]]);
    }
    csv.into_string()
}

/// Columns `delta,g,weight,Sx,Sy,Sz`. Relaxation times are run parameters,
/// not ensemble data, so they are not stored.
pub fn ensemble_csv(seed: u64, bins: &[SpinBin]) -> String {
    let mut csv = Csv::new(seed, "delta,g,weight,Sx,Sy,Sz");
    for b in bins {
        csv.row(&[b.delta, b.g, b.weight, b.s[0], b.s[1], b.s[2]]);
    }
    csv.into_string()
}

/// Parse `ensemble_csv` output back into bins. Relaxation times come from
/// the caller since the file does not carry them.
pub fn parse_ensemble_csv(text: &str, t1: f64, t2: f64) -> Result<Vec<SpinBin>> {
    let mut bins = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("delta") {
            continue;
        }
        let vals = parse_float_row(line, 6, lineno + 1)?;
        bins.push(SpinBin {
            delta: vals[0],
            g: vals[1],
            weight: vals[2],
            s: [vals[3], vals[4], vals[5]],
            t1,
            t2,
        });
    }
    if bins.is_empty() {
        return Err(Error::invalid("no ensemble rows found"));
    }
    Ok(bins)
}

/// Columns `t,omega_X,omega_Y` on the drive's uniform grid.
pub fn drive_csv(seed: u64, drive: &DriveFields) -> String {
    let mut csv = Csv::new(seed, "t,omega_X,omega_Y");
    for i in 0..drive.len() {
        csv.row(&[drive.time(i), drive.wx[i], drive.wy[i]]);
    }
    csv.into_string()
}

/// Parse `drive_csv` output back onto its uniform grid.
pub fn parse_drive_csv(text: &str) -> Result<DriveFields> {
    let mut t = Vec::new();
    let mut wx = Vec::new();
    let mut wy = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("t,") {
            continue;
        }
        let vals = parse_float_row(line, 3, lineno + 1)?;
        t.push(vals[0]);
        wx.push(vals[1]);
        wy.push(vals[2]);
    }
    if t.len() < 2 {
        return Err(Error::invalid("drive files need at least two rows"));
    }
    let dt = (t[t.len() - 1] - t[0]) / (t.len() - 1) as f64;
    for (i, &ti) in t.iter().enumerate() {
        if (ti - (t[0] + dt * i as f64)).abs() > 1e-9 * dt.abs().max(t[0].abs()) + 1e-300 {
            return Err(Error::invalid(format!("drive grid is not uniform at row {}", i + 1)));
        }
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::invalid("drive grid must increase"));
    }
    Ok(DriveFields { t0: t[0], dt, wx, wy })
}

/// Columns `delta,alpha,value` for robustness maps.
pub fn map_csv(seed: u64, rows: &[(f64, f64, f64)]) -> String {
    let mut csv = Csv::new(seed, "delta,alpha,value");
    for &(d, a, v) in rows {
        csv.row(&[d, a, v]);
    }
    csv.into_string()
}

/// Columns `duration,N_min,SNR,N_spins` for sensitivity curves.
pub fn curve_csv(seed: u64, points: &[NminPoint]) -> String {
    let mut csv = Csv::new(seed, "duration,N_min,SNR,N_spins");
    for p in points {
        csv.row(&[p.duration, p.n_min, p.snr, p.n_spins]);
    }
    csv.into_string()
}

fn parse_float_row(line: &str, want: usize, lineno: usize) -> Result<Vec<f64>> {
    let vals: Vec<f64> = line
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::invalid(format!("line {lineno}: {e}")))?;
    if vals.len() != want {
        return Err(Error::invalid(format!(
            "line {lineno}: expected {want} columns, got {}",
            vals.len()
        )));
    }
    Ok(vals)
}
