use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use std::time::Duration;
use syngrid_core::synth_map::{synth_town, TownOptions};
use syngrid_core::Syngrid;
use syngrid_service::store::{JobState, JobStore, RESTART_NOTE};
use syngrid_service::{start, Config};
use tower::ServiceExt;

fn config(dir: &std::path::Path, workers: usize, queue: usize) -> Config {
    Config {
        job_dir: dir.to_path_buf(),
        // unroutable; jobs in these tests always carry their map inline
        overpass_url: "http://127.0.0.1:9/api/interpreter".into(),
        workers,
        queue_capacity: queue,
        ..Config::default()
    }
}

fn town_body() -> Value {
    let town = synth_town(&TownOptions {
        seed: 5,
        blocks_x: 2,
        blocks_y: 2,
        ..Default::default()
    });
    json!({
        "boundary": town.boundary.to_geojson(),
        "radius_m": 150.0,
        "cf_pool_size": 100,
        "cf_repetitions": 20,
        "osm_xml": town.osm_xml,
    })
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(serde_json::to_vec(&b).unwrap())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, bytes)
}

async fn call_json(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let (s, b) = call(app, method, uri, body).await;
    (s, serde_json::from_slice(&b).unwrap_or(Value::Null))
}

async fn wait_finished(app: &Router, id: &str) -> Value {
    for _ in 0..600 {
        let (_, s) = call_json(app, "GET", &format!("/jobs/{id}"), None).await;
        if s["status"] == "done" || s["status"] == "failed" {
            return s;
        }
        tokio::time::sleep(Duration::from_millis(50)).await;
    }
    panic!("job {id} did not finish");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn job_lifecycle_produces_valid_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let app = start(&config(tmp.path(), 2, 8)).unwrap();

    let (s, body) = call_json(&app, "GET", "/healthz", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(body["status"], "ok");

    let (s, body) = call_json(&app, "POST", "/jobs", Some(town_body())).await;
    assert_eq!(s, StatusCode::ACCEPTED);
    let id = body["job_id"].as_str().unwrap().to_string();
    assert!(uuid::Uuid::parse_str(&id).is_ok());

    let status = wait_finished(&app, &id).await;
    assert_eq!(status["status"], "done", "{status}");
    assert!(status["report"]["lv_grids"].as_u64().unwrap() >= 1);

    let (s, grid_bytes) = call(&app, "GET", &format!("/jobs/{id}/grid"), None).await;
    assert_eq!(s, StatusCode::OK);
    let grid = Syngrid::load(&grid_bytes).unwrap();

    let (s, gj) = call_json(&app, "GET", &format!("/jobs/{id}/geojson"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(gj["type"], "FeatureCollection");
    let features = gj["features"].as_array().unwrap().len();
    assert_eq!(features, grid.buses.len() + grid.lines.len() + grid.transformers.len());

    let (s, an) = call_json(&app, "GET", &format!("/jobs/{id}/analysis"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(an["power_flow"]["converged"], true);
    assert_eq!(an["short_circuit"]["buses"].as_array().unwrap().len(), grid.buses.len());
    assert!(an["metrics"]["lv_grid_count"].as_u64().unwrap() >= 1);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn bad_parameters_name_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    let app = start(&config(tmp.path(), 0, 4)).unwrap();

    let mut body = town_body();
    body["pv_penetration"] = json!(1.5);
    let (s, err) = call_json(&app, "POST", "/jobs", Some(body)).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(err["field"], "pv_penetration");

    let mut body = town_body();
    body["radius_m"] = json!("wide");
    let (s, err) = call_json(&app, "POST", "/jobs", Some(body)).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(err["field"], "radius_m");

    let mut body = town_body();
    body["crs_code"] = json!(32633);
    let (s, err) = call_json(&app, "POST", "/jobs", Some(body)).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(err["field"], "crs_code");

    let (s, _) = call_json(&app, "POST", "/jobs", Some(json!({ "radius_m": 100 }))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn full_queue_is_429_and_duplicates_are_new_jobs() {
    let tmp = tempfile::tempdir().unwrap();
    // no workers, so nothing drains the queue
    let app = start(&config(tmp.path(), 0, 2)).unwrap();
    let (s1, a) = call_json(&app, "POST", "/jobs", Some(town_body())).await;
    let (s2, b) = call_json(&app, "POST", "/jobs", Some(town_body())).await;
    assert_eq!((s1, s2), (StatusCode::ACCEPTED, StatusCode::ACCEPTED));
    assert_ne!(a["job_id"], b["job_id"]);
    let (s3, _) = call_json(&app, "POST", "/jobs", Some(town_body())).await;
    assert_eq!(s3, StatusCode::TOO_MANY_REQUESTS);

    let id = a["job_id"].as_str().unwrap();
    let (s, st) = call_json(&app, "GET", &format!("/jobs/{id}"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(st["status"], "queued");
    let (s, _) = call_json(&app, "GET", &format!("/jobs/{id}/grid"), None).await;
    assert_eq!(s, StatusCode::CONFLICT);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn unknown_and_deleted_jobs_are_404() {
    let tmp = tempfile::tempdir().unwrap();
    let app = start(&config(tmp.path(), 0, 2)).unwrap();
    let (s, _) = call_json(&app, "GET", &format!("/jobs/{}", uuid::Uuid::new_v4()), None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = call_json(&app, "GET", "/jobs/not-a-uuid/grid", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);

    let (_, a) = call_json(&app, "POST", "/jobs", Some(town_body())).await;
    let id = a["job_id"].as_str().unwrap();
    std::fs::remove_dir_all(tmp.path().join(id)).unwrap();
    let (s, _) = call_json(&app, "GET", &format!("/jobs/{id}"), None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn failed_job_reports_its_stage() {
    let tmp = tempfile::tempdir().unwrap();
    let app = start(&config(tmp.path(), 1, 2)).unwrap();
    let mut body = town_body();
    body["osm_xml"] = json!("<?xml version=\"1.0\"?><osm version=\"0.6\"></osm>");
    let (_, a) = call_json(&app, "POST", "/jobs", Some(body)).await;
    let id = a["job_id"].as_str().unwrap();
    let status = wait_finished(&app, id).await;
    assert_eq!(status["status"], "failed");
    let (s, err) = call_json(&app, "GET", &format!("/jobs/{id}/analysis"), None).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(err["stage"], "lv_synth");
    assert!(err["error"].as_str().unwrap().contains("no polytope contains buildings"));
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn restart_fails_running_jobs_and_keeps_done_ones() {
    let tmp = tempfile::tempdir().unwrap();
    let done_id = {
        let app = start(&config(tmp.path(), 1, 2)).unwrap();
        let (_, a) = call_json(&app, "POST", "/jobs", Some(town_body())).await;
        let id = a["job_id"].as_str().unwrap().to_string();
        assert_eq!(wait_finished(&app, &id).await["status"], "done");
        id
    };

    // simulate a crash mid-job: status running, lock file left behind
    let store = JobStore::open(tmp.path()).unwrap();
    let params = store.params(&done_id).unwrap();
    let crashed = store.create(&params, None).unwrap();
    let mut st = store.status(&crashed).unwrap().unwrap();
    st.status = JobState::Running;
    store.write_status(&st).unwrap();
    std::fs::write(tmp.path().join(&crashed).join("lock"), "1").unwrap();

    let app = start(&config(tmp.path(), 0, 2)).unwrap();
    let (_, s) = call_json(&app, "GET", &format!("/jobs/{crashed}"), None).await;
    assert_eq!(s["status"], "failed");
    assert_eq!(s["note"], RESTART_NOTE);
    assert!(!tmp.path().join(&crashed).join("lock").exists());

    let (s, grid_bytes) = call(&app, "GET", &format!("/jobs/{done_id}/grid"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert!(Syngrid::load(&grid_bytes).is_ok());
}
