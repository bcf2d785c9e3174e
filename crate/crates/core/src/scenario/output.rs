use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{RunOutput, SweepTable};
use crate::error::Result;

pub const REPORT_FILE: &str = "report.json";
pub const SAMPLES_FILE: &str = "samples.csv";
pub const SPECTRUM_FILE: &str = "spectrum.csv";
pub const MESH_FILE: &str = "mesh.off";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const PLOT_FILE: &str = "plot.gp";
pub const METADATA_FILE: &str = "metadata.json";

/// Run bookkeeping kept out of `report.json` so reports stay comparable.
#[derive(Debug, Clone, Serialize)]
pub struct RunMetadata {
    pub version: String,
    pub command: String,
    pub threads: usize,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
}

pub fn metadata_json(meta: &RunMetadata) -> String {
    serde_json::to_string_pretty(meta).expect("metadata serializes") + "\n"
}

/// Writes every artifact of `out` under `dir` and returns the paths written.
pub fn write_outputs(dir: &Path, out: &RunOutput) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut put = |name: &str, text: &str| -> Result<()> {
        let p = dir.join(name);
        fs::write(&p, text)?;
        written.push(p);
        Ok(())
    };
    put(REPORT_FILE, &out.report.to_json())?;
    put(SAMPLES_FILE, &out.samples_csv)?;
    put(MESH_FILE, &out.mesh_off)?;
    put("mesh.boundary", &out.mesh_boundary)?;
    if let Some(s) = &out.spectrum_csv {
        put(SPECTRUM_FILE, s)?;
    }
    if let Some(s) = &out.sweep_csv {
        put(SWEEP_FILE, s)?;
    }
    put(PLOT_FILE, &gnuplot_script(out))?;
    Ok(written)
}

fn gnuplot_script(out: &RunOutput) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# gnuplot -p {PLOT_FILE}");
    let _ = writeln!(s, "set datafile separator ','");
    let _ = writeln!(s, "set key autotitle columnhead");
    let _ = writeln!(s, "set view equal xyz");
    let _ = writeln!(
        s,
        "set title '{}: H_f at quadrature points'",
        out.report.scenario.name
    );
    let _ = writeln!(
        s,
        "splot '{SAMPLES_FILE}' using 3:4:5:7 with points pointtype 7 palette"
    );
    if out.spectrum_csv.is_some() {
        let _ = writeln!(s, "pause -1");
        let _ = writeln!(s, "set title 'first eigenfunction'");
        let _ = writeln!(
            s,
            "splot '{SPECTRUM_FILE}' using 2:3:4:5 with points pointtype 7 palette"
        );
    }
    if let Some(t) = &out.report.sweep {
        let _ = writeln!(s, "pause -1");
        let _ = writeln!(s, "set title 'lambda_min against {}'", t.param);
        let _ = writeln!(s, "set xlabel '{}'", t.param);
        let _ = writeln!(s, "set xzeroaxis");
        let _ = writeln!(s, "plot '{SWEEP_FILE}' using 1:2 with linespoints");
    }
    s
}

/// Writes `sweep.csv` and a plot script for a standalone sweep.
pub fn write_sweep(dir: &Path, table: &SweepTable) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let csv = dir.join(SWEEP_FILE);
    fs::write(&csv, table.to_csv())?;
    let plot = dir.join(PLOT_FILE);
    let mut s = String::new();
    let _ = writeln!(s, "# gnuplot -p {PLOT_FILE}");
    let _ = writeln!(s, "set datafile separator ','");
    let _ = writeln!(s, "set key autotitle columnhead");
    let _ = writeln!(s, "set xlabel '{}'", table.param);
    let _ = writeln!(s, "set xzeroaxis");
    let _ = writeln!(
        s,
        "plot '{SWEEP_FILE}' using 1:2 with linespoints, '' using 1:3 with linespoints"
    );
    fs::write(&plot, s)?;
    Ok(vec![csv, plot])
}
