use std::fs;
use std::path::PathBuf;

use fkppg::models::{all, ModelMeta};
use fkppg::ppg::ValidateOptions;
use fkppg::{parse_model, LiftedQuery, Ppg};

fn models_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../models")
}

#[test]
fn every_shipped_model_validates_with_its_sidecar() {
    let mut seen = 0;
    for entry in fs::read_dir(models_dir()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_none_or(|e| e != "ppg") {
            continue;
        }
        let g = Ppg::validate(&parse_model(&fs::read_to_string(&path).unwrap()).unwrap())
            .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        let meta = ModelMeta::from_json(&fs::read_to_string(path.with_extension("json")).unwrap()).unwrap();
        assert_eq!(Some(meta.name.as_str()), path.file_stem().and_then(|s| s.to_str()));
        LiftedQuery::parse(&meta.query, g.vars(), meta.bound).unwrap();
        seen += 1;
    }
    assert!(seen >= 9, "{seen}");
}

#[test]
fn bundled_models_pass_a_large_partition_check() {
    for m in all() {
        let ast = parse_model(m.source).unwrap();
        Ppg::validate_with(&ast, ValidateOptions { samples: 100_000, seed: 17 }).unwrap();
    }
}

#[test]
fn fixtures_fail() {
    let dir = models_dir().join("fixtures");
    for name in ["overlapping_guard", "score_out_of_range", "missing_nil"] {
        let text = fs::read_to_string(dir.join(format!("{name}.ppg"))).unwrap();
        let failed = match parse_model(&text) {
            Err(_) => true,
            Ok(ast) => Ppg::validate(&ast).is_err(),
        };
        assert!(failed, "{name}");
    }
}
