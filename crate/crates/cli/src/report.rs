//! Machine-readable reports. Non-finite numbers serialize as `null`.

use std::path::Path;

use fkppg::{BoundsReport, Engine, EstimateReport, PfConfig, Ppg, Resampler};
use serde::Serialize;

pub const SCHEMA_VERSION: u32 = 1;

pub fn to_json<T: Serialize>(report: &T) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serializes");
    s.push('\n');
    s
}

fn to_csv_row<T: Serialize>(row: &T) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.serialize(row).expect("row serializes");
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf-8 csv")
}

#[derive(Serialize)]
pub struct ValidateReport {
    pub schema_version: u32,
    pub model: String,
    pub valid: bool,
    pub variables: Vec<String>,
    pub checkpoints: usize,
    pub transitions: usize,
    pub init: u32,
    pub nil: u32,
    pub discrete: bool,
}

impl ValidateReport {
    pub fn new(model: &Path, g: &Ppg) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            model: model.display().to_string(),
            valid: true,
            variables: g.vars().to_vec(),
            checkpoints: g.checkpoint_count(),
            transitions: g.transitions().len(),
            init: g.declared_id(g.init()),
            nil: g.declared_id(g.nil()),
            discrete: g.is_discrete(),
        }
    }
}

#[derive(Serialize)]
pub struct FilterEntry {
    pub state: Vec<f64>,
    pub node: u32,
    pub mass: f64,
}

#[derive(Serialize)]
pub struct OracleReport {
    pub schema_version: u32,
    pub model: String,
    pub query: String,
    #[serde(rename = "M")]
    pub bound: Option<f64>,
    pub t: usize,
    pub paths: usize,
    pub beta_lower: f64,
    pub beta_upper: Option<f64>,
    pub alpha: f64,
    pub query_mass: f64,
    pub mass_terminated: f64,
    pub mass_total: f64,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub filtering: Vec<FilterEntry>,
}

impl OracleReport {
    pub fn new(
        model: &Path,
        query: &str,
        bound: Option<f64>,
        t: usize,
        paths: usize,
        b: BoundsReport,
        filtering: Vec<FilterEntry>,
    ) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            model: model.display().to_string(),
            query: query.to_string(),
            bound,
            t,
            paths,
            beta_lower: b.beta_lower,
            beta_upper: b.beta_upper,
            alpha: b.alpha,
            query_mass: b.query_mass,
            mass_terminated: b.mass_terminated,
            mass_total: b.mass_total,
            filtering,
        }
    }

    /// One row without the filtering distribution.
    pub fn to_csv(mut self) -> String {
        self.filtering.clear();
        to_csv_row(&self)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub model: String,
    pub query: String,
    #[serde(rename = "M")]
    pub bound: Option<f64>,
    pub t: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub seed: u64,
    pub engine: Engine,
    pub resampler: Resampler,
    pub estimate: Option<f64>,
    pub beta_lower: Option<f64>,
    pub beta_upper: Option<f64>,
    pub alpha: Option<f64>,
    pub p_term: Option<f64>,
    pub ess: Option<f64>,
    pub wall_time_ms: Option<f64>,
    pub collapsed_at_step: Option<usize>,
}

impl RunReport {
    pub fn header(model: &Path, query: &str, bound: Option<f64>, cfg: &PfConfig, engine: Engine) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            model: model.display().to_string(),
            query: query.to_string(),
            bound,
            t: cfg.t,
            n: cfg.n,
            seed: cfg.seed,
            engine,
            resampler: cfg.resampler,
            estimate: None,
            beta_lower: None,
            beta_upper: None,
            alpha: None,
            p_term: None,
            ess: None,
            wall_time_ms: None,
            collapsed_at_step: None,
        }
    }

    pub fn complete(mut self, r: &EstimateReport) -> Self {
        let e = &r.estimate;
        self.estimate = Some(e.point);
        self.beta_lower = Some(e.beta_lower);
        self.beta_upper = e.beta_upper;
        self.alpha = e.alpha;
        self.p_term = Some(e.p_term);
        self.ess = Some(e.ess);
        self.wall_time_ms = Some(r.wall_time.as_secs_f64() * 1e3);
        self.collapsed_at_step = r.collapsed_at_step;
        self
    }

    pub fn collapsed(mut self, step: usize) -> Self {
        self.collapsed_at_step = Some(step);
        self
    }

    pub fn to_csv(&self) -> String {
        to_csv_row(self)
    }
}
