use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use wstab_core::scenario::{
    self, exit_code, metadata_json, parse_range, write_outputs, write_sweep, RunMetadata, Scenario,
    EXIT_CONFIG, EXIT_OK, MESH_FILE, METADATA_FILE,
};
use wstab_core::surface::io::write_off;
use wstab_core::{Result, WstabError};

/// Stability checks for free-boundary surfaces in manifolds with density.
///
/// Exit status: 0 all asserted checks pass, 2 a check failed, 3 numerical
/// failure, 4 bad configuration.
#[derive(Debug, Parser)]
#[command(name = "wstab", version)]
struct Cli {
    /// Output directory for report.json, samples.csv, spectrum.csv, mesh.off.
    #[arg(long, global = true, default_value = "wstab-out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a scenario file.
    Run { file: PathBuf },
    /// Run a builtin scenario.
    Builtin { name: String },
    /// List builtin scenarios.
    List,
    /// Run a scenario (file or builtin name) across a parameter range.
    Sweep {
        scenario: String,
        /// Knob name (`k`, `resolution`, ...) or dotted config path.
        #[arg(long)]
        param: String,
        /// `a:b:step` or a comma-separated list.
        #[arg(long, allow_hyphen_values = true)]
        range: String,
    },
    /// Write the mesh of a scenario (file or builtin name) as OFF.
    ExportMesh { scenario: String },
}

fn now_ms() -> u128 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis())
}

fn configure_threads() -> Result<usize> {
    let Ok(v) = std::env::var("WSTAB_THREADS") else {
        return Ok(rayon::current_num_threads());
    };
    let n: usize = v.trim().parse().ok().filter(|n| *n > 0).ok_or_else(|| {
        WstabError::Config(format!(
            "WSTAB_THREADS must be a positive integer, got `{v}`"
        ))
    })?;
    // Fails only if a pool already exists, which cannot happen this early.
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global();
    Ok(n)
}

fn write_metadata(out: &Path, command: &str, threads: usize, started: u128) -> Result<()> {
    let meta = RunMetadata {
        version: env!("CARGO_PKG_VERSION").to_string(),
        command: command.to_string(),
        threads,
        started_unix_ms: started,
        finished_unix_ms: now_ms(),
    };
    std::fs::write(out.join(METADATA_FILE), metadata_json(&meta))?;
    Ok(())
}

fn run_scenario(sc: &Scenario, out: &Path, threads: usize, started: u128) -> Result<i32> {
    let output = scenario::run(sc)?;
    for path in write_outputs(out, &output)? {
        println!("wrote {}", path.display());
    }
    write_metadata(out, &format!("run {}", sc.name), threads, started)?;
    for c in &output.report.checks {
        let status = match (c.asserted, c.pass) {
            (false, _) => "n/a ",
            (true, true) => "ok  ",
            (true, false) => "FAIL",
        };
        println!("{status} {:32} {}", c.name, c.detail);
    }
    Ok(output.report.exit_code())
}

fn execute(cli: &Cli) -> Result<i32> {
    let started = now_ms();
    let threads = configure_threads()?;
    match &cli.command {
        Command::List => {
            print!("{}", scenario::list_text());
            Ok(EXIT_OK)
        }
        Command::Run { file } => {
            run_scenario(&Scenario::from_file(file)?, &cli.out, threads, started)
        }
        Command::Builtin { name } => {
            run_scenario(&scenario::builtin(name)?, &cli.out, threads, started)
        }
        Command::Sweep {
            scenario: name,
            param,
            range,
        } => {
            let values = parse_range(range)?;
            let sc = Scenario::load(name)?;
            let table = scenario::sweep(&sc, param, &values)?;
            for path in write_sweep(&cli.out, &table)? {
                println!("wrote {}", path.display());
            }
            write_metadata(
                &cli.out,
                &format!("sweep {} {param}", sc.name),
                threads,
                started,
            )?;
            print!("{}", table.to_csv());
            if let Some(c) = table.crossing {
                println!("lambda_min changes sign at {param} = {c:.6}");
            }
            Ok(EXIT_OK)
        }
        Command::ExportMesh { scenario: name } => {
            let sc = Scenario::load(name)?;
            let mesh = sc.mesh()?;
            std::fs::create_dir_all(&cli.out)?;
            let path = cli.out.join(MESH_FILE);
            write_off(&mesh, &path)?;
            println!(
                "wrote {} ({} vertices, {} triangles)",
                path.display(),
                mesh.vertices.len(),
                mesh.triangles.len()
            );
            Ok(EXIT_OK)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() {
                EXIT_CONFIG as u8
            } else {
                EXIT_OK as u8
            });
        }
    };
    let code = match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("wstab: {e}");
            exit_code(&e)
        }
    };
    ExitCode::from(code as u8)
}
