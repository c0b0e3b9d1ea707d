//! Multi-voltage network model shared by every stage, and its JSON form.

mod geojson;
mod topology;
mod validate;

pub use geojson::to_geojson;
pub use topology::{Branch, Topology};

use crate::error::Result;
use crate::geometry::GeoPoint;
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum VoltageLevel {
    LV,
    MV,
    HV,
}

impl VoltageLevel {
    pub fn as_str(self) -> &'static str {
        match self {
            VoltageLevel::LV => "LV",
            VoltageLevel::MV => "MV",
            VoltageLevel::HV => "HV",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BusRole {
    Consumer,
    Junction,
    LvRoot,
    MvRoot,
    HvSlack,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: usize,
    pub level: VoltageLevel,
    pub vn_kv: f64,
    pub location: GeoPoint,
    pub role: BusRole,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LineKind {
    /// Cable laid along a road.
    Feeder,
    /// Building connection from the road to the consumer.
    Service,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub id: usize,
    /// Upstream end (towards the feeding transformer).
    pub from_bus: usize,
    pub to_bus: usize,
    pub length_m: f64,
    /// Name of a catalog entry; `None` before sizing.
    pub cable: Option<String>,
    /// Number of identical cables in parallel.
    pub parallel: u32,
    pub kind: LineKind,
    pub geometry: Vec<GeoPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CableType {
    pub name: String,
    pub v_op_kv: f64,
    pub i_m_ka: f64,
    pub r_ohm_per_km: f64,
    pub x_ohm_per_km: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transformer {
    pub id: usize,
    pub hv_bus: usize,
    pub lv_bus: usize,
    pub s_r_mva: f64,
    pub v_k_percent: f64,
    pub p_cu_percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Load {
    pub id: usize,
    pub bus: usize,
    pub n_consumers: u32,
    pub s_r_kva_per_consumer: f64,
    /// Active demand at unity power factor.
    pub p_kw: f64,
    pub has_pv: bool,
    pub pv_kw: f64,
    /// Source building identifier.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub building: Option<String>,
}

impl Load {
    pub fn net_kw(&self) -> f64 {
        self.p_kw - self.pv_kw
    }
}

/// Index of one LV grid: its feeding transformer and bus/line subsets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LvGrid {
    pub polytope: usize,
    pub transformer: usize,
    pub root_bus: usize,
    pub buses: Vec<usize>,
    pub lines: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Syngrid {
    pub syngrid_schema: u32,
    pub crs_code: u32,
    pub buses: Vec<Bus>,
    pub lines: Vec<Line>,
    pub transformers: Vec<Transformer>,
    pub loads: Vec<Load>,
    pub cables: Vec<CableType>,
    pub lv_grids: Vec<LvGrid>,
    #[serde(default)]
    pub metadata: serde_json::Value,
}

impl Syngrid {
    pub fn empty(crs_code: u32) -> Self {
        Syngrid {
            syngrid_schema: SCHEMA_VERSION,
            crs_code,
            buses: Vec::new(),
            lines: Vec::new(),
            transformers: Vec::new(),
            loads: Vec::new(),
            cables: Vec::new(),
            lv_grids: Vec::new(),
            metadata: serde_json::Value::Null,
        }
    }

    pub fn add_bus(&mut self, level: VoltageLevel, vn_kv: f64, location: GeoPoint, role: BusRole) -> usize {
        let id = self.buses.len();
        self.buses.push(Bus {
            id,
            level,
            vn_kv,
            location,
            role,
        });
        id
    }

    pub fn add_line(&mut self, from_bus: usize, to_bus: usize, kind: LineKind, geometry: Vec<GeoPoint>) -> usize {
        let id = self.lines.len();
        self.lines.push(Line {
            id,
            from_bus,
            to_bus,
            length_m: crate::geometry::polyline_length(&geometry),
            cable: None,
            parallel: 1,
            kind,
            geometry,
        });
        id
    }

    pub fn add_transformer(&mut self, hv_bus: usize, lv_bus: usize) -> usize {
        let id = self.transformers.len();
        self.transformers.push(Transformer {
            id,
            hv_bus,
            lv_bus,
            s_r_mva: 0.0,
            v_k_percent: 0.0,
            p_cu_percent: 0.0,
        });
        id
    }

    pub fn cable(&self, name: &str) -> Option<&CableType> {
        self.cables.iter().find(|c| c.name == name)
    }

    pub fn slack_bus(&self) -> Option<usize> {
        self.buses
            .iter()
            .find(|b| b.role == BusRole::HvSlack)
            .map(|b| b.id)
    }

    /// MV/LV transformers, i.e. those feeding an LV bus.
    pub fn mv_lv_transformers(&self) -> impl Iterator<Item = &Transformer> {
        self.transformers
            .iter()
            .filter(|t| self.buses[t.lv_bus].level == VoltageLevel::LV)
    }

    pub fn total_consumers(&self) -> u64 {
        self.loads.iter().map(|l| l.n_consumers as u64).sum()
    }

    pub fn validate(&self) -> Result<()> {
        validate::validate(self)
    }

    /// Serialize to the grid JSON document after validating.
    pub fn save(&self) -> Result<Vec<u8>> {
        self.validate()?;
        let mut out = serde_json::to_vec_pretty(self)?;
        out.push(b'\n');
        Ok(out)
    }

    /// Parse and validate a grid JSON document.
    pub fn load(bytes: &[u8]) -> Result<Syngrid> {
        let value: serde_json::Value = serde_json::from_slice(bytes)?;
        match value.get("syngrid_schema").and_then(|v| v.as_u64()) {
            Some(v) if v == SCHEMA_VERSION as u64 => {}
            Some(v) => {
                return Err(crate::Error::validation(format!(
                    "unsupported syngrid_schema {v}, expected {SCHEMA_VERSION}"
                )))
            }
            None => return Err(crate::Error::validation("missing syngrid_schema field")),
        }
        let grid: Syngrid = serde_json::from_value(value)?;
        grid.validate()?;
        Ok(grid)
    }

    pub fn topology(&self) -> Result<Topology> {
        Topology::new(self)
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    pub fn lv_cable() -> CableType {
        CableType {
            name: "NAYY 4x150 SE".into(),
            v_op_kv: 0.4,
            i_m_ka: 0.25,
            r_ohm_per_km: 0.206,
            x_ohm_per_km: 0.08,
        }
    }

    /// HV slack -> transformer -> LV root -> line -> consumer.
    pub fn minimal() -> Syngrid {
        let mut g = Syngrid::empty(32632);
        let hv = g.add_bus(VoltageLevel::HV, 110.0, GeoPoint::new(0.0, 0.0), BusRole::HvSlack);
        let root = g.add_bus(VoltageLevel::LV, 0.4, GeoPoint::new(0.0, 0.0), BusRole::LvRoot);
        let cons = g.add_bus(VoltageLevel::LV, 0.4, GeoPoint::new(30.0, 40.0), BusRole::Consumer);
        let t = g.add_transformer(hv, root);
        g.transformers[t].s_r_mva = 0.1;
        g.transformers[t].v_k_percent = 4.0;
        g.transformers[t].p_cu_percent = 1.5;
        let l = g.add_line(root, cons, LineKind::Feeder, vec![GeoPoint::new(0.0, 0.0), GeoPoint::new(30.0, 40.0)]);
        g.cables.push(lv_cable());
        g.lines[l].cable = Some("NAYY 4x150 SE".into());
        g.loads.push(Load {
            id: 0,
            bus: cons,
            n_consumers: 6,
            s_r_kva_per_consumer: 5.0,
            p_kw: 20.0,
            has_pv: false,
            pv_kw: 0.0,
            building: Some("w1".into()),
        });
        g.lv_grids.push(LvGrid {
            polytope: 0,
            transformer: t,
            root_bus: root,
            buses: vec![root, cons],
            lines: vec![l],
        });
        g
    }
}
