use std::path::Path;
use std::process::{Command, Output};
use syngrid_core::geometry::GeoPoint;
use syngrid_core::gridmodel::{BusRole, LineKind, Load, LvGrid, VoltageLevel};
use syngrid_core::sizing::default_catalog;
use syngrid_core::Syngrid;

fn syngrid(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_syngrid"))
        .args(args)
        .current_dir(dir)
        .env("SYNGRID_CACHE_DIR", dir.join("cache"))
        .env("SYNGRID_OVERPASS_URL", "http://127.0.0.1:9/api/interpreter")
        .output()
        .unwrap()
}

fn town(dir: &Path) {
    let out = syngrid(
        &["town", "--seed", "4", "--blocks-x", "3", "--blocks-y", "2", "--osm", "town.osm", "--params", "p.json"],
        dir,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    // smaller CF pool keeps the debug build quick
    let mut p: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.join("p.json")).unwrap()).unwrap();
    p["radius_m"] = 150.0.into();
    p["cf_pool_size"] = 100.into();
    p["cf_repetitions"] = 20.into();
    std::fs::write(dir.join("p.json"), serde_json::to_vec(&p).unwrap()).unwrap();
}

/// HV slack, MV bus, then an LV path of 300 m and 400 m.
fn path_grid() -> Syngrid {
    let mut g = Syngrid::empty(32632);
    let at = |x: f64| GeoPoint::new(500_000.0 + x, 5_200_000.0);
    let hv = g.add_bus(VoltageLevel::HV, 110.0, at(0.0), BusRole::HvSlack);
    let mv = g.add_bus(VoltageLevel::MV, 16.0, at(0.0), BusRole::MvRoot);
    let t1 = g.add_transformer(hv, mv);
    let lv: Vec<usize> = [0.0, 300.0, 700.0]
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let role = if i == 0 { BusRole::LvRoot } else { BusRole::Consumer };
            g.add_bus(VoltageLevel::LV, 0.4, at(x), role)
        })
        .collect();
    let t2 = g.add_transformer(mv, lv[0]);
    let l1 = g.add_line(lv[0], lv[1], LineKind::Feeder, vec![at(0.0), at(300.0)]);
    let l2 = g.add_line(lv[1], lv[2], LineKind::Feeder, vec![at(300.0), at(700.0)]);
    g.cables = default_catalog();
    for l in [l1, l2] {
        g.lines[l].cable = Some("NAYY 4x150 SE".into());
    }
    for (t, s) in [(t1, 40.0), (t2, 0.25)] {
        g.transformers[t].s_r_mva = s;
        g.transformers[t].v_k_percent = 4.0;
        g.transformers[t].p_cu_percent = 1.0;
    }
    for (i, &b) in lv[1..].iter().enumerate() {
        g.loads.push(Load {
            id: i,
            bus: b,
            n_consumers: 2,
            s_r_kva_per_consumer: 5.0,
            p_kw: 6.0,
            has_pv: false,
            pv_kw: 0.0,
            building: None,
        });
    }
    g.lv_grids.push(LvGrid {
        polytope: 0,
        transformer: t2,
        root_bus: lv[0],
        buses: lv.clone(),
        lines: vec![l1, l2],
    });
    g
}

#[test]
fn generate_writes_a_valid_grid() {
    let tmp = tempfile::tempdir().unwrap();
    town(tmp.path());
    let out = syngrid(
        &["generate", "--params", "p.json", "--osm", "town.osm", "--out", "grid.json", "--report", "r.json", "--geojson", "g.geojson"],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let grid = Syngrid::load(&std::fs::read(tmp.path().join("grid.json")).unwrap()).unwrap();
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(tmp.path().join("r.json")).unwrap()).unwrap();
    assert_eq!(report["buses"].as_u64().unwrap() as usize, grid.buses.len());
    assert!(tmp.path().join("g.geojson").exists());

    let out = syngrid(&["powerflow", "grid.json"], tmp.path());
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("converged=true"));

    let out = syngrid(&["shortcircuit", "grid.json", "--json"], tmp.path());
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["buses"].as_array().unwrap().len(), grid.buses.len());
    assert!(tmp.path().join("grid.shortcircuit.json").exists());
}

#[test]
fn seed_override_changes_only_pv_flags() {
    let tmp = tempfile::tempdir().unwrap();
    town(tmp.path());
    for (seed, out) in [("1", "a.json"), ("2", "b.json")] {
        let o = syngrid(
            &["generate", "--params", "p.json", "--osm", "town.osm", "--out", out, "--seed", seed],
            tmp.path(),
        );
        assert_eq!(o.status.code(), Some(0));
    }
    let a = Syngrid::load(&std::fs::read(tmp.path().join("a.json")).unwrap()).unwrap();
    let b = Syngrid::load(&std::fs::read(tmp.path().join("b.json")).unwrap()).unwrap();
    assert_eq!(a.buses, b.buses);
    assert_eq!(a.lines, b.lines);
    assert_eq!(a.transformers, b.transformers);
    assert_ne!(
        a.loads.iter().map(|l| l.has_pv).collect::<Vec<_>>(),
        b.loads.iter().map(|l| l.has_pv).collect::<Vec<_>>()
    );
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    town(tmp.path());

    let out = syngrid(&["generate", "--params", "p.json", "--out", "grid.json"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no map source"));

    let mut p: serde_json::Value = serde_json::from_slice(&std::fs::read(tmp.path().join("p.json")).unwrap()).unwrap();
    p["pv_penetration"] = 2.0.into();
    std::fs::write(tmp.path().join("bad.json"), serde_json::to_vec(&p).unwrap()).unwrap();
    let out = syngrid(&["generate", "--params", "bad.json", "--osm", "town.osm", "--out", "grid.json"], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("pv_penetration"));

    std::fs::write(tmp.path().join("empty.osm"), "<osm version=\"0.6\"></osm>").unwrap();
    let out = syngrid(&["generate", "--params", "p.json", "--osm", "empty.osm", "--out", "grid.json"], tmp.path());
    assert_eq!(out.status.code(), Some(2));

    let mut g: serde_json::Value = serde_json::to_value(path_grid()).unwrap();
    g["lines"][1]["to_bus"] = 99.into();
    std::fs::write(tmp.path().join("broken.json"), serde_json::to_vec(&g).unwrap()).unwrap();
    let out = syngrid(&["stats", "broken.json"], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 1"));
}

#[test]
fn stats_on_a_path_prints_its_diameter() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("path.json"), path_grid().save().unwrap()).unwrap();
    let out = syngrid(&["stats", "path.json"], tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    let line = text.lines().find(|l| l.starts_with("Average LV grid diameter")).unwrap();
    assert!(line.trim_end().ends_with("0.700"), "{line}");

    let out = syngrid(&["stats", "path.json", "--json"], tmp.path());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((v["avg_lv_diameter_km"].as_f64().unwrap() - 0.7).abs() < 1e-12);
}

#[test]
fn cf_output_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let args = ["cf", "--pool-size", "100", "--repetitions", "20", "--seed", "42"];
    let a = syngrid(&args, tmp.path());
    let b = syngrid(&args, tmp.path());
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let first = String::from_utf8_lossy(&a.stdout).lines().nth(1).unwrap().to_string();
    assert!(first.contains("1.000000"));
}
