//! Benchmark programs shipped with the crate, each with a JSON sidecar giving
//! its default query, bound, horizon and any known reference values.

use std::collections::BTreeMap;

use serde::Deserialize;

use crate::ppg::Ppg;
use crate::query::LiftedQuery;
use crate::rng::RngStream;
use crate::syntax::parse_model;

/// Sidecar contents.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct ModelMeta {
    pub name: String,
    pub query: String,
    pub bound: Option<f64>,
    pub horizon: usize,
    #[serde(default)]
    pub expected: BTreeMap<String, f64>,
    #[serde(default)]
    pub provenance: String,
}

impl ModelMeta {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

#[derive(Debug, Clone)]
pub struct BenchModel {
    pub name: &'static str,
    pub source: &'static str,
    pub meta: ModelMeta,
}

impl BenchModel {
    pub fn ppg(&self) -> Ppg {
        let ast = parse_model(self.source).expect("bundled model parses");
        Ppg::validate(&ast).expect("bundled model validates")
    }

    pub fn query(&self, g: &Ppg) -> LiftedQuery {
        LiftedQuery::parse(&self.meta.query, g.vars(), self.meta.bound).expect("bundled query parses")
    }

    pub fn expected(&self, key: &str) -> Option<f64> {
        self.meta.expected.get(key).copied()
    }
}

macro_rules! bundled {
    ($name:literal) => {
        BenchModel {
            name: $name,
            source: include_str!(concat!("../../../models/", $name, ".ppg")),
            meta: ModelMeta::from_json(include_str!(concat!("../../../models/", $name, ".json")))
                .expect("bundled sidecar parses"),
        }
    };
}

/// The two-coin program, with or without its observation.
pub fn build_rw1(conditioned: bool) -> BenchModel {
    if conditioned {
        bundled!("rw1")
    } else {
        bundled!("rw1_unconditioned")
    }
}

/// Drunk man and mouse.
pub fn build_dmm() -> BenchModel {
    bundled!("dmm")
}

pub fn all() -> Vec<BenchModel> {
    vec![build_rw1(true), build_rw1(false), build_dmm()]
}

/// A random discrete program for differential testing: at most 3
/// variables with values in `{0, 1, 2}`, at most 4 checkpoints including
/// nil, bernoulli and choice sampling only, and complementary guard pairs.
/// The query `a` is bounded by 2.
pub fn fuzz_discrete(seed: u64) -> String {
    let mut rng = RngStream::new(seed, 0, 0);
    let mut pick = |k: usize| ((rng.next_uniform() * k as f64) as usize).min(k - 1);
    let names = ["a", "b", "c"];
    let m = 1 + pick(3);
    let p = 2 + pick(3);
    let nil = p - 1;
    let mut src = format!("vars {}\n", names[..m].join(" "));
    for id in 0..nil {
        let v = names[pick(m)];
        let score = match pick(5) {
            0 => format!(" score {v} <= 1"),
            1 => format!(" score ({v} + 1) / 4"),
            2 => [" score 0.5", " score 0.9"][pick(2)].to_string(),
            _ => String::new(),
        };
        src.push_str(&format!("node {id}{score}\n"));
    }
    src.push_str(&format!("nil {nil}\n"));
    for id in 0..nil {
        let guards = if pick(2) == 0 {
            vec!["1 == 1".to_string()]
        } else {
            let v = names[pick(m)];
            let k = pick(2);
            vec![format!("{v} <= {k}"), format!("{v} > {k}")]
        };
        for guard in guards {
            let target = pick(p);
            let mut body = String::new();
            for _ in 0..1 + pick(2) {
                let v = names[pick(m)];
                let w = names[pick(m)];
                let stmt = match pick(5) {
                    0 => format!("{v} ~ bernoulli({});", ["0.2", "0.5", "0.7"][pick(3)]),
                    1 => format!("{v} ~ bernoulli(({w} + 1) / 4);"),
                    2 => format!("{v} ~ choice(0, 1, 2);"),
                    3 => format!("{v} := min(2, {w} + 1);"),
                    _ => format!("{v} := 2 - {w};"),
                };
                body.push_str(&stmt);
                body.push(' ');
            }
            src.push_str(&format!("trans {id} -> {target} when {guard} do {{ {body}}}\n"));
        }
    }
    src.push_str("init 0\n");
    src
}
