//! End-to-end generation: boundary and map data in, validated grid out.

use crate::error::{Error, Result};
use crate::geodata::{parse_osm, Boundary, Crs, GeoDataset};
use crate::gridmodel::Syngrid;
use crate::lv_synth::{self, LvOutcome};
use crate::mv_synth;
use crate::par;
use crate::profiles::{self, CfTable, PoolSpan};
use crate::sizing::{self, SizingParams};
use crate::solver::{self, PowerFlowOptions};
use crate::tessellate;
use log::{info, warn};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex, OnceLock};
use std::time::Instant;

/// Generation parameters. This JSON document is shared by the CLI and the
/// HTTP service; every field except `boundary` has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationParams {
    /// Study area as a GeoJSON Polygon in lon/lat.
    #[serde(with = "boundary_geojson")]
    pub boundary: Boundary,
    #[serde(default = "d::radius_m")]
    pub radius_m: f64,
    #[serde(default = "d::crs_code")]
    pub crs_code: u32,
    #[serde(default = "d::lv_kv")]
    pub lv_kv: f64,
    #[serde(default = "d::mv_kv")]
    pub mv_kv: f64,
    #[serde(default = "d::hv_kv")]
    pub hv_kv: f64,
    #[serde(default = "d::m2_per_customer")]
    pub m2_per_customer: f64,
    #[serde(default = "d::pv_penetration")]
    pub pv_penetration: f64,
    #[serde(default = "d::s_r_kva")]
    pub s_r_kva: f64,
    #[serde(default = "d::cod")]
    pub cod: f64,
    #[serde(default = "d::typical_drop_pct_per_km")]
    pub typical_drop_pct_per_km: f64,
    /// Drives PV assignment only.
    #[serde(default)]
    pub seed: u64,
    /// Drives the profile pool and the CF Monte Carlo.
    #[serde(default = "d::cf_seed")]
    pub cf_seed: u64,
    #[serde(default = "d::mv_offset_m")]
    pub mv_offset_m: (f64, f64),
    #[serde(default = "d::cf_repetitions")]
    pub cf_repetitions: u32,
    #[serde(default = "d::cf_pool_size")]
    pub cf_pool_size: usize,
    #[serde(default = "d::max_parallel")]
    pub max_parallel: u32,
}

mod d {
    pub fn radius_m() -> f64 {
        250.0
    }
    pub fn crs_code() -> u32 {
        32632
    }
    pub fn lv_kv() -> f64 {
        0.4
    }
    pub fn mv_kv() -> f64 {
        16.0
    }
    pub fn hv_kv() -> f64 {
        110.0
    }
    pub fn m2_per_customer() -> f64 {
        50.0
    }
    pub fn pv_penetration() -> f64 {
        0.1
    }
    pub fn s_r_kva() -> f64 {
        5.0
    }
    pub fn cod() -> f64 {
        1.25
    }
    pub fn typical_drop_pct_per_km() -> f64 {
        10.0
    }
    pub fn cf_seed() -> u64 {
        42
    }
    pub fn mv_offset_m() -> (f64, f64) {
        crate::mv_synth::DEFAULT_OFFSET_M
    }
    pub fn cf_repetitions() -> u32 {
        crate::profiles::DEFAULT_REPETITIONS
    }
    pub fn cf_pool_size() -> usize {
        crate::profiles::DEFAULT_POOL_SIZE
    }
    pub fn max_parallel() -> u32 {
        4
    }
}

mod boundary_geojson {
    use crate::geodata::Boundary;
    use serde::{de, Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(b: &Boundary, s: S) -> Result<S::Ok, S::Error> {
        b.to_geojson().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Boundary, D::Error> {
        let v = serde_json::Value::deserialize(d)?;
        Boundary::from_geojson(&v).map_err(de::Error::custom)
    }
}

/// A semantic parameter violation, addressed by field name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

impl GenerationParams {
    pub fn new(boundary: Boundary) -> Self {
        GenerationParams {
            boundary,
            radius_m: d::radius_m(),
            crs_code: d::crs_code(),
            lv_kv: d::lv_kv(),
            mv_kv: d::mv_kv(),
            hv_kv: d::hv_kv(),
            m2_per_customer: d::m2_per_customer(),
            pv_penetration: d::pv_penetration(),
            s_r_kva: d::s_r_kva(),
            cod: d::cod(),
            typical_drop_pct_per_km: d::typical_drop_pct_per_km(),
            seed: 0,
            cf_seed: d::cf_seed(),
            mv_offset_m: d::mv_offset_m(),
            cf_repetitions: d::cf_repetitions(),
            cf_pool_size: d::cf_pool_size(),
            max_parallel: d::max_parallel(),
        }
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let p: GenerationParams = serde_json::from_slice(bytes)?;
        p.validate()?;
        Ok(p)
    }

    /// All semantic violations, in field order.
    pub fn field_errors(&self) -> Vec<FieldError> {
        let mut errs = Vec::new();
        let mut check = |ok: bool, field: &str, message: String| {
            if !ok {
                errs.push(FieldError {
                    field: field.to_string(),
                    message,
                });
            }
        };
        let positive = |v: f64| v > 0.0 && v.is_finite();

        check(positive(self.radius_m), "radius_m", format!("must be positive, got {}", self.radius_m));
        match Crs::from_epsg(self.crs_code) {
            Ok(crs) => {
                let outside = self.boundary.vertices().iter().find(|ll| !crs.in_zone(**ll));
                check(
                    outside.is_none(),
                    "crs_code",
                    match outside {
                        Some(ll) => format!(
                            "boundary vertex ({}, {}) lies outside EPSG:{}",
                            ll.lon, ll.lat, self.crs_code
                        ),
                        None => String::new(),
                    },
                );
            }
            Err(e) => check(false, "crs_code", e.to_string()),
        }
        check(positive(self.lv_kv), "lv_kv", format!("must be positive, got {}", self.lv_kv));
        check(
            positive(self.mv_kv) && self.mv_kv > self.lv_kv,
            "mv_kv",
            format!("must be positive and above lv_kv, got {}", self.mv_kv),
        );
        check(
            positive(self.hv_kv) && self.hv_kv > self.mv_kv,
            "hv_kv",
            format!("must be positive and above mv_kv, got {}", self.hv_kv),
        );
        check(
            positive(self.m2_per_customer),
            "m2_per_customer",
            format!("must be positive, got {}", self.m2_per_customer),
        );
        check(
            (0.0..=1.0).contains(&self.pv_penetration),
            "pv_penetration",
            format!("must lie in [0, 1], got {}", self.pv_penetration),
        );
        check(positive(self.s_r_kva), "s_r_kva", format!("must be positive, got {}", self.s_r_kva));
        check(
            self.cod >= 1.0 && self.cod.is_finite(),
            "cod",
            format!("must be at least 1, got {}", self.cod),
        );
        check(
            positive(self.typical_drop_pct_per_km),
            "typical_drop_pct_per_km",
            format!("must be positive, got {}", self.typical_drop_pct_per_km),
        );
        check(
            self.mv_offset_m.0.is_finite() && self.mv_offset_m.1.is_finite(),
            "mv_offset_m",
            "must be finite".to_string(),
        );
        check(self.cf_repetitions >= 1, "cf_repetitions", "must be at least 1".to_string());
        check(
            self.cf_pool_size >= 64,
            "cf_pool_size",
            format!("must be at least 64, got {}", self.cf_pool_size),
        );
        check(self.max_parallel >= 1, "max_parallel", "must be at least 1".to_string());
        errs
    }

    /// First violation as `Error::Validation("field: message")`.
    pub fn validate(&self) -> Result<()> {
        match self.field_errors().into_iter().next() {
            Some(e) => Err(Error::Validation(e.to_string())),
            None => Ok(()),
        }
    }

    pub fn sizing(&self) -> SizingParams {
        SizingParams {
            s_r_kva: self.s_r_kva,
            cod: self.cod,
            typical_drop_pct_per_km: self.typical_drop_pct_per_km,
            max_parallel: self.max_parallel,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedPolytope {
    pub polytope: usize,
    pub reason: String,
    pub buildings: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerFlowSummary {
    pub converged: bool,
    pub iterations: u32,
    pub max_mismatch_pu: f64,
    pub min_vm_pu: f64,
    pub total_load_mw: f64,
    pub total_losses_mw: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GenerationReport {
    pub polytopes: usize,
    pub lv_grids: usize,
    pub skipped_polytopes: Vec<SkippedPolytope>,
    /// Buildings pruned from an LV tree (outside the largest road component).
    pub dropped_buildings: Vec<String>,
    /// Buildings whose centroid lies in no polytope.
    pub orphan_buildings: Vec<String>,
    /// LV grids whose MV connection was rerouted to the largest road component.
    pub rerouted_lv_grids: Vec<usize>,
    pub buses: usize,
    pub lines: usize,
    pub transformers: usize,
    pub consumers: u64,
    pub power_flow: Option<PowerFlowSummary>,
    pub warnings: Vec<String>,
    pub timings: Vec<StageTiming>,
}

type CfKey = (u64, u64, u32, usize);

fn cf_cache() -> &'static Mutex<HashMap<CfKey, Arc<CfTable>>> {
    static CACHE: OnceLock<Mutex<HashMap<CfKey, Arc<CfTable>>>> = OnceLock::new();
    CACHE.get_or_init(Default::default)
}

/// CF table for the given parameters, computed once per process.
pub fn cf_table(s_r_kva: f64, seed: u64, repetitions: u32, pool_size: usize) -> Result<Arc<CfTable>> {
    let key = (s_r_kva.to_bits(), seed, repetitions, pool_size);
    if let Some(t) = cf_cache().lock().expect("cf cache poisoned").get(&key) {
        return Ok(Arc::clone(t));
    }
    let pool = profiles::generate_pool(pool_size, s_r_kva, seed, PoolSpan::Week)?;
    let table = Arc::new(profiles::estimate_cf(&pool, s_r_kva, repetitions, seed)?);
    cf_cache()
        .lock()
        .expect("cf cache poisoned")
        .insert(key, Arc::clone(&table));
    Ok(table)
}

/// Re-tag any non-generation error with the stage it came from.
fn in_stage<T>(stage: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Generation { .. } => e,
        other => Error::generation(stage, other.to_string()),
    })
}

struct Clock {
    last: Instant,
    timings: Vec<StageTiming>,
}

impl Clock {
    fn lap(&mut self, stage: &str) {
        let now = Instant::now();
        self.timings.push(StageTiming {
            stage: stage.to_string(),
            seconds: (now - self.last).as_secs_f64(),
        });
        self.last = now;
    }
}

/// Parse an OSM extract for `params.boundary` and generate.
pub fn generate_from_osm(params: &GenerationParams, osm: &[u8]) -> Result<(Syngrid, GenerationReport)> {
    params.validate()?;
    let dataset = in_stage("geodata", parse_osm(osm, &params.boundary, params.crs_code))?;
    generate(params, &dataset)
}

/// Run every stage on a projected dataset. Deterministic for fixed inputs.
pub fn generate(params: &GenerationParams, dataset: &GeoDataset) -> Result<(Syngrid, GenerationReport)> {
    params.validate()?;
    if dataset.crs_code != params.crs_code {
        return Err(Error::Validation(format!(
            "crs_code: dataset is in EPSG:{}, parameters ask for EPSG:{}",
            dataset.crs_code, params.crs_code
        )));
    }
    let mut clock = Clock {
        last: Instant::now(),
        timings: Vec::new(),
    };
    let mut report = GenerationReport::default();

    let polytopes = in_stage("tessellate", tessellate::tessellate(&dataset.boundary, params.radius_m))?;
    let (cropped, orphans) = tessellate::crop_all(dataset, &polytopes);
    report.polytopes = polytopes.len();
    report.orphan_buildings = orphans.into_iter().map(|b| b.id).collect();
    clock.lap("tessellate");

    let indexed: Vec<(usize, &GeoDataset)> = cropped.iter().enumerate().collect();
    let outcomes = par::map(&indexed, |&(i, ds)| lv_synth::synthesize(i, ds, params.m2_per_customer));
    let mut fragments = Vec::new();
    for o in outcomes {
        match o {
            LvOutcome::Built(f) => {
                report.dropped_buildings.extend(f.dropped_buildings.iter().cloned());
                fragments.push(f);
            }
            LvOutcome::Skipped {
                polytope,
                reason,
                buildings,
            } => {
                if buildings > 0 {
                    let msg = format!("polytope {polytope} skipped ({reason}); {buildings} building(s) unserved");
                    warn!("{msg}");
                    report.warnings.push(msg);
                }
                report.skipped_polytopes.push(SkippedPolytope {
                    polytope,
                    reason,
                    buildings,
                });
            }
        }
    }
    if fragments.is_empty() {
        return Err(Error::generation("lv_synth", "no polytope contains buildings"));
    }
    if !report.dropped_buildings.is_empty() {
        report.warnings.push(format!(
            "{} building(s) outside the largest road component of their polytope",
            report.dropped_buildings.len()
        ));
    }

    let mut grid = Syngrid::empty(params.crs_code);
    let mv_terminals: Vec<usize> = fragments
        .iter()
        .map(|f| lv_synth::attach_transformer(&mut grid, f, params.lv_kv, params.mv_kv, params.s_r_kva))
        .collect();
    report.lv_grids = fragments.len();
    clock.lap("lv_synth");

    let mv_roads = mv_synth::translate_network(&dataset.roads, params.mv_offset_m);
    let points: Vec<_> = mv_terminals.iter().map(|&b| grid.buses[b].location).collect();
    let mv = in_stage("mv_synth", mv_synth::build_mv(&points, &mv_roads))?;
    report.rerouted_lv_grids = mv.rerouted.clone();
    if !mv.rerouted.is_empty() {
        report.warnings.push(format!(
            "{} LV grid(s) connected through the largest MV road component",
            mv.rerouted.len()
        ));
    }
    let mv_root = in_stage("mv_synth", mv_synth::attach_mv(&mut grid, &mv, &mv_terminals, params.mv_kv))?;
    mv_synth::attach_hv_feeder(&mut grid, mv_root, params.hv_kv);
    clock.lap("mv_synth");

    let cf = in_stage(
        "profiles_cf",
        cf_table(params.s_r_kva, params.cf_seed, params.cf_repetitions, params.cf_pool_size),
    )?;
    clock.lap("profiles_cf");

    // demand per load: n * S_r * CF(consumers of its LV grid)
    let mut grid_of_bus = vec![usize::MAX; grid.buses.len()];
    for (g, lv) in grid.lv_grids.iter().enumerate() {
        lv.buses.iter().for_each(|&b| grid_of_bus[b] = g);
    }
    let mut per_grid = vec![0u64; grid.lv_grids.len()];
    for l in &grid.loads {
        per_grid[grid_of_bus[l.bus]] += l.n_consumers as u64;
    }
    let grid_cf = per_grid
        .iter()
        .map(|&n| cf.cf_at(n.max(1)))
        .collect::<Result<Vec<f64>>>();
    let grid_cf = in_stage("profiles_cf", grid_cf)?;
    for l in grid.loads.iter_mut() {
        l.p_kw = l.n_consumers as f64 * params.s_r_kva * grid_cf[grid_of_bus[l.bus]];
    }
    grid.loads = lv_synth::assign_pv(std::mem::take(&mut grid.loads), params.pv_penetration, params.seed);

    let sizing_report = in_stage(
        "sizing",
        sizing::size_grid(&mut grid, &cf, &params.sizing(), &sizing::default_catalog()),
    )?;
    report.warnings.extend(sizing_report.warnings);
    clock.lap("sizing");

    in_stage("validate", grid.validate())?;
    let pf = in_stage("solver", solver::power_flow(&grid, &PowerFlowOptions::default()))?;
    if !pf.converged {
        return Err(Error::generation(
            "solver",
            format!(
                "smoke power flow did not converge after {} iterations (mismatch {:.3e} pu at bus {})",
                pf.iterations, pf.max_mismatch_pu, pf.worst_bus
            ),
        ));
    }
    report.power_flow = Some(PowerFlowSummary {
        converged: pf.converged,
        iterations: pf.iterations,
        max_mismatch_pu: pf.max_mismatch_pu,
        min_vm_pu: pf.vm_pu.iter().copied().fold(f64::INFINITY, f64::min),
        total_load_mw: pf.total_load_mw,
        total_losses_mw: pf.total_losses_mw,
    });
    clock.lap("solver");

    grid.metadata = serde_json::json!({
        "generator": concat!("syngrid ", env!("CARGO_PKG_VERSION")),
        "params": params,
        "cf_table": &*cf,
    });
    report.buses = grid.buses.len();
    report.lines = grid.lines.len();
    report.transformers = grid.transformers.len();
    report.consumers = grid.total_consumers();
    report.timings = clock.timings;
    info!(
        "generated {} buses, {} lines, {} transformers for {} consumers",
        report.buses, report.lines, report.transformers, report.consumers
    );
    Ok((grid, report))
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridmodel::{BusRole, VoltageLevel};
    use crate::synth_map::{synth_town, TownOptions};

    fn village_params(boundary: Boundary) -> GenerationParams {
        let mut p = GenerationParams::new(boundary);
        p.radius_m = 100.0;
        p.cf_pool_size = 100;
        p.cf_repetitions = 20;
        p
    }

    #[test]
    fn village_has_two_lv_grids_and_three_transformers() {
        let (ds, b) = fixtures::village();
        let (grid, report) = generate(&village_params(b), &ds).unwrap();
        assert_eq!(grid.lv_grids.len(), 2);
        assert_eq!(grid.transformers.len(), 3);
        assert_eq!(report.lv_grids, 2);
        assert!(report.skipped_polytopes.iter().any(|s| s.reason == "no buildings"));
        for lv in &grid.lv_grids {
            assert_eq!(lv.lines.len(), lv.buses.len() - 1);
        }
        let mv_buses = grid.buses.iter().filter(|b| b.level == VoltageLevel::MV).count();
        let mv_lines = grid
            .lines
            .iter()
            .filter(|l| grid.buses[l.from_bus].level == VoltageLevel::MV)
            .count();
        assert_eq!(mv_lines, mv_buses - 1);
        assert_eq!(grid.buses.iter().filter(|b| b.role == BusRole::HvSlack).count(), 1);
        assert_eq!(report.buses, grid.buses.len());
        assert_eq!(report.consumers, grid.total_consumers());
        assert!(report.power_flow.unwrap().converged);
    }

    #[test]
    fn consumers_are_conserved() {
        let (ds, b) = fixtures::village();
        let params = village_params(b);
        let (grid, report) = generate(&params, &ds).unwrap();
        let expected: u64 = ds
            .buildings
            .iter()
            .filter(|b| !report.dropped_buildings.contains(&b.id) && !report.orphan_buildings.contains(&b.id))
            .map(|b| lv_synth::allocate_consumers(b, params.m2_per_customer) as u64)
            .sum();
        assert_eq!(grid.total_consumers(), expected);
        // the 300 m2 house hosts six consumers
        let big = grid.loads.iter().find(|l| l.building.as_deref() == Some("w0")).unwrap();
        assert_eq!(big.n_consumers, 6);
    }

    #[test]
    fn seed_changes_only_pv() {
        let (ds, b) = fixtures::village();
        let mut params = village_params(b);
        params.pv_penetration = 0.5;
        let (a, _) = generate(&params, &ds).unwrap();
        params.seed = 7;
        let (c, _) = generate(&params, &ds).unwrap();
        assert_eq!(a.buses, c.buses);
        assert_eq!(a.lines, c.lines);
        assert_eq!(a.transformers, c.transformers);
        let flags = |g: &Syngrid| g.loads.iter().map(|l| l.has_pv).collect::<Vec<_>>();
        assert_ne!(flags(&a), flags(&c));
        for (x, y) in a.loads.iter().zip(&c.loads) {
            assert_eq!(x.p_kw, y.p_kw);
        }
    }

    #[test]
    fn empty_dataset_is_a_generation_error() {
        let (mut ds, b) = fixtures::village();
        ds.buildings.clear();
        let err = generate(&village_params(b), &ds).unwrap_err();
        assert!(matches!(err, Error::Generation { stage: "lv_synth", .. }));
        assert!(err.to_string().contains("no polytope contains buildings"));
    }

    #[test]
    fn params_round_trip_with_defaults() {
        let (_, b) = fixtures::village();
        let doc = serde_json::json!({ "boundary": b.to_geojson() });
        let p: GenerationParams = serde_json::from_value(doc).unwrap();
        assert_eq!(p, GenerationParams::new(b));
        let back: GenerationParams = serde_json::from_value(serde_json::to_value(&p).unwrap()).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn invalid_fields_are_named() {
        let (_, b) = fixtures::village();
        let mut p = GenerationParams::new(b.clone());
        p.pv_penetration = 1.5;
        let err = p.validate().unwrap_err().to_string();
        assert!(err.contains("pv_penetration"), "{err}");

        let mut p = GenerationParams::new(b.clone());
        p.crs_code = 32633;
        assert_eq!(p.field_errors()[0].field, "crs_code");

        let doc = serde_json::json!({ "boundary": b.to_geojson(), "radius": 5 });
        assert!(serde_json::from_value::<GenerationParams>(doc).is_err());
    }

    #[test]
    fn synthetic_town_is_deterministic() {
        let town = synth_town(&TownOptions::default());
        let mut params = GenerationParams::new(town.boundary.clone());
        params.radius_m = 150.0;
        let (a, _) = generate_from_osm(&params, town.osm_xml.as_bytes()).unwrap();
        let (b, _) = generate_from_osm(&params, town.osm_xml.as_bytes()).unwrap();
        assert_eq!(a.save().unwrap(), b.save().unwrap());
        assert!(a.lv_grids.len() > 1);
        // floats survive the JSON round trip bit for bit
        assert_eq!(Syngrid::load(&a.save().unwrap()).unwrap(), a);
    }
}
