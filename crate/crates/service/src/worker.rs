//! Job execution on a bounded pool of blocking workers.

use crate::store::{now_unix, JobError, JobState, JobStore, StoreError};
use log::{error, info, warn};
use serde_json::json;
use std::sync::Arc;
use syngrid_core::geodata::OverpassClient;
use syngrid_core::gridmodel::to_geojson;
use syngrid_core::metrics::MetricsReport;
use syngrid_core::pipeline::generate_from_osm;
use syngrid_core::solver::{power_flow, short_circuit, PowerFlowOptions, ShortCircuitOptions};
use syngrid_core::{Error, Syngrid};
use tokio::sync::{mpsc, Mutex};

/// Where jobs without an inline map get their OSM data.
#[derive(Debug, Clone)]
pub struct MapSource {
    pub overpass_url: String,
    pub cache_dir: Option<std::path::PathBuf>,
}

impl MapSource {
    fn fetch(&self, boundary: &syngrid_core::geodata::Boundary) -> syngrid_core::Result<Vec<u8>> {
        let mut client = OverpassClient::new(self.overpass_url.clone());
        if let Some(dir) = &self.cache_dir {
            client = client.cache_dir(dir.clone());
        }
        client.fetch(boundary)
    }
}

fn stage_of(e: &Error) -> Option<String> {
    match e {
        Error::Generation { stage, .. } => Some(stage.to_string()),
        Error::Validation(_) => Some("validation".into()),
        Error::Transport { .. } | Error::Throttled { .. } => Some("geodata".into()),
        _ => None,
    }
}

/// Power flow, short circuit and metrics in one document.
pub fn analysis(grid: &Syngrid) -> syngrid_core::Result<serde_json::Value> {
    Ok(json!({
        "power_flow": power_flow(grid, &PowerFlowOptions::default())?,
        "short_circuit": short_circuit(grid, &ShortCircuitOptions::default())?,
        "metrics": MetricsReport::compute(grid)?,
    }))
}

/// Run one job to completion. A job already locked elsewhere is left alone.
pub fn run_job(store: &JobStore, id: &str, maps: &MapSource) -> Result<(), StoreError> {
    let Some(_lock) = store.try_lock(id)? else {
        warn!("job {id} is locked by another worker");
        return Ok(());
    };
    let Some(mut status) = store.status(id)? else {
        warn!("job {id} vanished from the store");
        return Ok(());
    };
    if status.status != JobState::Queued {
        return Ok(());
    }
    status.status = JobState::Running;
    store.write_status(&status)?;
    info!("job {id} running");

    let outcome = (|| -> syngrid_core::Result<_> {
        let params = store.params(id).map_err(|e| Error::Config(e.to_string()))?;
        let osm = match store.inline_map(id).map_err(|e| Error::Config(e.to_string()))? {
            Some(b) => b,
            None => maps.fetch(&params.boundary)?,
        };
        let (grid, report) = generate_from_osm(&params, &osm)?;
        let analysis = analysis(&grid)?;
        Ok((grid, report, analysis))
    })();

    match outcome {
        Ok((grid, report, analysis)) => {
            let grid_bytes = grid.save().expect("generated grid validates");
            store.write_artifact(id, "grid.json", &grid_bytes)?;
            store.write_artifact(id, "grid.geojson", &serde_json::to_vec(&to_geojson(&grid))?)?;
            store.write_artifact(id, "analysis.json", &serde_json::to_vec(&analysis)?)?;
            store.write_artifact(id, "report.json", &serde_json::to_vec_pretty(&report)?)?;
            status.status = JobState::Done;
            status.report = Some(report);
            info!("job {id} done");
        }
        Err(e) => {
            error!("job {id} failed: {e}");
            status.status = JobState::Failed;
            status.error = Some(JobError {
                stage: stage_of(&e),
                message: e.to_string(),
            });
        }
    }
    status.finished_unix = Some(now_unix());
    store.write_status(&status)
}

pub type JobQueue = Arc<Mutex<mpsc::Receiver<String>>>;

/// Start `n` workers draining `rx`. Each job runs on the blocking pool.
pub fn spawn_workers(n: usize, store: Arc<JobStore>, rx: &JobQueue, maps: MapSource) {
    for _ in 0..n {
        let (rx, store, maps) = (Arc::clone(rx), Arc::clone(&store), maps.clone());
        tokio::spawn(async move {
            loop {
                let next = rx.lock().await.recv().await;
                let Some(id) = next else { break };
                let (store, maps) = (Arc::clone(&store), maps.clone());
                let res = tokio::task::spawn_blocking(move || run_job(&store, &id, &maps)).await;
                match res {
                    Ok(Err(e)) => error!("job store failure: {e}"),
                    Err(e) => error!("worker panicked: {e}"),
                    Ok(Ok(())) => {}
                }
            }
        });
    }
}
