use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use evopca::baselines::linear_pca_baseline;
use evopca::data::{self, split, split_rows, TRAIN_RATIO};
use evopca::gp::{self, GpConfig, GpData};
use evopca::harness::{run_experiment, DatasetSource, ExperimentConfig, Method};
use evopca::{rng_from_seed, Error};
use rand::Rng;
use rand_distr::StandardNormal;

const SCHEMA: &str = r#"[
  {"name": "age", "kind": "numerical"},
  {"name": "income", "kind": "numerical"},
  {"name": "housing", "kind": "categorical", "levels": ["own", "rent", "free"]},
  {"name": "grade", "kind": "ordinal", "levels": ["low", "mid", "high"]},
  {"name": "class", "kind": "categorical", "levels": ["good", "bad"], "is_label": true}
]"#;

fn write_mixed(dir: &Path, n: usize, seed: u64, perturb: Option<&[usize]>) -> (std::path::PathBuf, std::path::PathBuf) {
    let mut rng = rng_from_seed(seed);
    let mut csv = String::from("age,income,housing,grade,class\n");
    for i in 0..n {
        let z: f64 = rng.sample(StandardNormal);
        let e: f64 = rng.sample(StandardNormal);
        let mut age = 40.0 + 10.0 * z;
        let mut income = 3.0 * z * z + e;
        if perturb.is_some_and(|rows| rows.contains(&i)) {
            age = 1000.0 + i as f64;
            income = -500.0;
        }
        let housing = ["own", "rent", "free"][rng.random_range(0..3)];
        let grade = ["low", "mid", "high"][(z.clamp(-1.49, 1.49) + 1.5) as usize];
        let class = if z > 0.0 { "good" } else { "bad" };
        writeln!(csv, "{age},{income},{housing},{grade},{class}").unwrap();
    }
    let data = dir.join("data.csv");
    let schema = dir.join("schema.json");
    fs::write(&data, csv).unwrap();
    fs::write(&schema, SCHEMA).unwrap();
    (data, schema)
}

#[test]
fn loaded_table_keeps_label_aside_and_one_hot_width() {
    let dir = tempfile::tempdir().unwrap();
    let (data, schema) = write_mixed(dir.path(), 40, 0, None);
    let table = data::load_table(&data, &schema).unwrap();
    assert_eq!(table.n_rows(), 40);
    assert_eq!(table.n_features(), 4);
    assert!(table.label().is_some());
    let expanded = table.expanded_matrix(&[0, 1, 2]);
    assert_eq!(expanded.ncols(), 1 + 1 + 3 + 1);
}

#[test]
fn loader_reports_bad_cells_by_position() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.csv");
    let schema = dir.path().join("schema.json");
    fs::write(&schema, SCHEMA).unwrap();
    fs::write(&data, "age,income,housing,grade,class\n30,1,own,low,good\nabc,2,rent,mid,bad\n").unwrap();
    let msg = data::load_table(&data, &schema).unwrap_err().to_string();
    assert!(msg.contains("row 2") && msg.contains("age"), "{msg}");

    fs::write(&data, "age,income,housing,grade,class\n30,1,castle,low,good\n").unwrap();
    let msg = data::load_table(&data, &schema).unwrap_err().to_string();
    assert!(msg.contains("castle"), "{msg}");
}

#[test]
fn validation_rows_do_not_influence_fitted_models() {
    let n = 120;
    let split = split_rows(n, TRAIN_RATIO, 4).unwrap();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let (da, sa) = write_mixed(a.path(), n, 11, None);
    let (db, sb) = write_mixed(b.path(), n, 11, Some(&split.validation));

    let run = |data: &Path, schema: &Path| {
        let mut cfg = ExperimentConfig::new(
            DatasetSource::Files {
                data: data.to_path_buf(),
                schema: schema.to_path_buf(),
            },
            "unused",
        );
        cfg.methods = vec![Method::Pca, Method::EsPartial];
        cfg.repeats = 1;
        cfg.seed = 4;
        cfg.es.generations = 3;
        cfg.es.population = 10;
        cfg.es.batch_size = 32;
        run_experiment(&cfg).unwrap()
    };
    let (ra, rb) = (run(&da, &sa), run(&db, &sb));
    for (x, y) in ra.records.iter().zip(&rb.records) {
        assert_eq!(x.method, y.method);
        assert_eq!(x.train_proportion, y.train_proportion, "{:?}", x.method);
        assert_ne!(x.validation_proportion, y.validation_proportion);
        let train_curve = |r: &evopca::harness::RunRecord| -> Vec<f64> {
            r.history.iter().map(|g| g.train_objective).collect()
        };
        assert_eq!(train_curve(x), train_curve(y));
    }
}

#[test]
fn gp_refuses_categorical_files() {
    let dir = tempfile::tempdir().unwrap();
    let (data, schema) = write_mixed(dir.path(), 40, 0, None);
    let mut cfg = ExperimentConfig::new(DatasetSource::Files { data, schema }, "unused");
    cfg.methods = vec![Method::Gp];
    cfg.repeats = 1;
    assert!(matches!(run_experiment(&cfg), Err(Error::UnsupportedSchema(_))));
}

#[test]
fn linear_baselines_on_synthetic_sets() {
    for (name, target) in [("stripes", 0.513), ("spheres", 0.341)] {
        let table = data::builtin(name, 0).unwrap();
        let values: Vec<f64> = (0..15)
            .map(|r| linear_pca_baseline(&table, &split(&table, TRAIN_RATIO, r).unwrap(), 1).unwrap())
            .collect();
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        assert!((mean - target).abs() <= 0.05, "{name}: {mean}");
    }
}

#[test]
fn gp_on_circles_beats_linear_pca() {
    let table = data::builtin("circles", 0).unwrap();
    let s = split(&table, TRAIN_RATIO, 0).unwrap();
    let train = table.numeric_matrix(&s.train).unwrap();
    let validation = table.numeric_matrix(&s.validation).unwrap();
    let cfg = GpConfig {
        population: 300,
        generations: 30,
        ..GpConfig::default()
    };
    let out = gp::evolve(
        GpData {
            schemas: table.schemas(),
            train: &train,
            validation: &validation,
        },
        &cfg,
        1,
    )
    .unwrap();
    let last = out.history.last().unwrap().validation_proportion;
    assert!(last > 0.498, "validation proportion {last}");
}
