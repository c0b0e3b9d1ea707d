//! `syngrid`: batch generation and analysis of synthetic distribution grids.
//!
//! Exit codes: 0 success, 1 invalid input (parameters, files, grid
//! documents), 2 generation or analysis failure. Diagnostics go to stderr.

use clap::{Parser, Subcommand};
use serde::Serialize;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use syngrid_core::geodata::overpass::{OverpassClient, CACHE_DIR_ENV, DEFAULT_ENDPOINT};
use syngrid_core::gridmodel::to_geojson;
use syngrid_core::metrics::MetricsReport;
use syngrid_core::pipeline::{cf_table, generate_from_osm, GenerationParams};
use syngrid_core::profiles::{DEFAULT_POOL_SIZE, DEFAULT_REPETITIONS};
use syngrid_core::solver::{power_flow, short_circuit, PowerFlowOptions, ShortCircuitOptions};
use syngrid_core::synth_map::{synth_town, TownOptions};
use syngrid_core::{Error, Syngrid};

#[derive(Parser)]
#[command(name = "syngrid", version, about = "Synthetic MV/LV distribution grids from OpenStreetMap data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a grid from parameters and an OSM extract.
    Generate {
        #[arg(long)]
        params: PathBuf,
        /// OSM XML extract; fetched from Overpass when omitted.
        #[arg(long)]
        osm: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        geojson: Option<PathBuf>,
        /// Override the PV assignment seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, env = "SYNGRID_OVERPASS_URL", default_value = DEFAULT_ENDPOINT)]
        overpass_url: String,
    },
    /// Backward/forward sweep power flow.
    Powerflow {
        grid: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Three-phase short-circuit currents at every bus.
    Shortcircuit {
        grid: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Topological statistics.
    Stats {
        grid: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Coincidence-factor table from the synthetic profile pool.
    Cf {
        #[arg(long, default_value_t = DEFAULT_POOL_SIZE)]
        pool_size: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_REPETITIONS)]
        repetitions: u32,
        #[arg(long, default_value_t = 5.0)]
        s_r_kva: f64,
        #[arg(long)]
        json: bool,
    },
    /// Write a seeded synthetic town (OSM XML plus default parameters).
    Town {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 4)]
        blocks_x: usize,
        #[arg(long, default_value_t = 3)]
        blocks_y: usize,
        #[arg(long)]
        osm: PathBuf,
        #[arg(long)]
        params: PathBuf,
    },
}

/// A failure and the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Parse { .. }
            | Error::Validation(_)
            | Error::Config(_)
            | Error::OutOfZone { .. }
            | Error::Integrity(_)
            | Error::Json(_)
            | Error::Io(_) => 1,
            _ => 2,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn input(path: &Path) -> Result<Vec<u8>, Failure> {
    fs::read(path).map_err(|e| Failure {
        code: 1,
        message: format!("{}: {e}", path.display()),
    })
}

fn output(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    fs::write(path, bytes).map_err(|e| Failure {
        code: 2,
        message: format!("{}: {e}", path.display()),
    })
}

fn load_grid(path: &Path) -> Result<Syngrid, Failure> {
    Syngrid::load(&input(path)?).map_err(|e| Failure {
        code: 1,
        message: format!("{}: {e}", path.display()),
    })
}

/// With `--json`: JSON on stdout and beside the input as `<stem>.<kind>.json`.
fn emit<T: Serialize>(value: &T, table: String, json: bool, beside: Option<(&Path, &str)>) -> Result<(), Failure> {
    if !json {
        print!("{table}");
        return Ok(());
    }
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Failure::from(Error::Json(e)))?;
    text.push('\n');
    if let Some((input, kind)) = beside {
        let stem = input.file_stem().and_then(|s| s.to_str()).unwrap_or("grid");
        output(&input.with_file_name(format!("{stem}.{kind}.json")), text.as_bytes())?;
    }
    print!("{text}");
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Generate {
            params,
            osm,
            out,
            report,
            geojson,
            seed,
            overpass_url,
        } => {
            let mut p = GenerationParams::from_json(&input(&params)?).map_err(|e| Failure {
                code: 1,
                message: format!("{}: {e}", params.display()),
            })?;
            if let Some(s) = seed {
                p.seed = s;
            }
            let map = match osm {
                Some(path) => input(&path)?,
                None => {
                    let mut client = OverpassClient::new(overpass_url);
                    if let Some(dir) = std::env::var_os(CACHE_DIR_ENV) {
                        client = client.cache_dir(dir);
                    }
                    client.fetch(&p.boundary).map_err(|e| Failure {
                        code: 2,
                        message: format!("no map source: no --osm given and Overpass failed: {e}"),
                    })?
                }
            };
            let (grid, rep) = generate_from_osm(&p, &map)?;
            output(&out, &grid.save()?)?;
            if let Some(path) = report {
                let mut bytes = serde_json::to_vec_pretty(&rep).map_err(Error::Json)?;
                bytes.push(b'\n');
                output(&path, &bytes)?;
            }
            if let Some(path) = geojson {
                output(&path, &serde_json::to_vec(&to_geojson(&grid)).map_err(Error::Json)?)?;
            }
            println!(
                "{} buses, {} lines, {} transformers, {} LV grids, {} consumers",
                rep.buses, rep.lines, rep.transformers, rep.lv_grids, rep.consumers
            );
            for w in &rep.warnings {
                eprintln!("warning: {w}");
            }
            Ok(())
        }
        Command::Powerflow { grid, json } => {
            let g = load_grid(&grid)?;
            let r = power_flow(&g, &PowerFlowOptions::default())?;
            emit(&r, r.table(), json, Some((&grid, "powerflow")))?;
            if !r.converged {
                return Err(Failure {
                    code: 2,
                    message: format!("power flow did not converge after {} iterations", r.iterations),
                });
            }
            Ok(())
        }
        Command::Shortcircuit { grid, json } => {
            let g = load_grid(&grid)?;
            let r = short_circuit(&g, &ShortCircuitOptions::default())?;
            emit(&r, r.table(), json, Some((&grid, "shortcircuit")))
        }
        Command::Stats { grid, json } => {
            let g = load_grid(&grid)?;
            let r = MetricsReport::compute(&g)?;
            emit(&r, r.table(), json, Some((&grid, "stats")))
        }
        Command::Cf {
            pool_size,
            seed,
            repetitions,
            s_r_kva,
            json,
        } => {
            let t = cf_table(s_r_kva, seed, repetitions, pool_size)?;
            let mut table = format!("{:>6} {:>10} {:>10}\n", "n", "CF", "raw");
            table.push_str(&format!("{:>6} {:>10.6} {:>10.6}\n", 1, 1.0, 1.0));
            for ((n, c), r) in t.anchor_n.iter().zip(&t.cf_values).zip(&t.raw_values) {
                table.push_str(&format!("{n:>6} {c:>10.6} {r:>10.6}\n"));
            }
            emit(&*t, table, json, None)
        }
        Command::Town {
            seed,
            blocks_x,
            blocks_y,
            osm,
            params,
        } => {
            let town = synth_town(&TownOptions {
                seed,
                blocks_x,
                blocks_y,
                ..Default::default()
            });
            output(&osm, town.osm_xml.as_bytes())?;
            let p = GenerationParams::new(town.boundary);
            let mut bytes = serde_json::to_vec_pretty(&p).map_err(Error::Json)?;
            bytes.push(b'\n');
            output(&params, &bytes)?;
            println!("{} buildings, {} road ways", town.building_count, town.road_way_count);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
