mod common;

use vdaudit::dataset::{load_csv, Schema};
use vdaudit::experiment::{cell_key, derive_seed, emit_report, read_report, run_on, ExperimentConfig, Report};
use vdaudit::mlp::MlpHyper;

fn toy_config(dir: &std::path::Path) -> (vdaudit::dataset::Dataset, ExperimentConfig) {
    let (data, schema) = common::write_toy(dir, 400, 5);
    let ds = load_csv(&data, &Schema::from_json_file(&schema).unwrap()).unwrap();
    let mut cfg = ExperimentConfig::new(data, schema, "sex", 4);
    cfg.epsilon = vec![0.5, 5.0];
    cfg.fairpick_t = vec![0.5];
    cfg.min_per_cluster = 3;
    cfg.max_k = Some(4);
    cfg.trials = 2;
    cfg.seed = 11;
    cfg.mlp = MlpHyper { hidden: 8, epochs: 5, learning_rate: 0.01, batch_size: 16 };
    (ds, cfg)
}

#[test]
fn seeds_depend_on_every_key_part() {
    let a = derive_seed(1, "t-none_eps-1", 0);
    assert_eq!(a, derive_seed(1, "t-none_eps-1", 0));
    assert_ne!(a, derive_seed(2, "t-none_eps-1", 0));
    assert_ne!(a, derive_seed(1, "t-none_eps-10", 0));
    assert_ne!(a, derive_seed(1, "t-none_eps-1", 1));
}

#[test]
fn same_seed_same_report() {
    let dir = tempfile::tempdir().unwrap();
    let (ds, cfg) = toy_config(dir.path());
    let a = run_on(&ds, &cfg).unwrap();
    let b = run_on(&ds, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.cells.len(), 6);
    assert!(a.cells.values().all(|c| c.runs.len() == 2));
}

#[test]
fn dropping_grid_points_leaves_other_cells_alone() {
    let dir = tempfile::tempdir().unwrap();
    let (ds, cfg) = toy_config(dir.path());
    let full = run_on(&ds, &cfg).unwrap();

    let mut fewer_eps = cfg.clone();
    fewer_eps.epsilon = vec![5.0];
    let part = run_on(&ds, &fewer_eps).unwrap();
    for key in [cell_key(None, Some(5.0)), cell_key(Some(0.5), Some(5.0)), cell_key(None, None)] {
        assert_eq!(full.cells[&key].runs, part.cells[&key].runs, "{key}");
    }

    let mut no_fairpick = cfg.clone();
    no_fairpick.fairpick = false;
    let part = run_on(&ds, &no_fairpick).unwrap();
    assert_eq!(part.cells.len(), 3);
    for (key, cell) in &part.cells {
        assert_eq!(full.cells[key].runs, cell.runs, "{key}");
    }
}

#[test]
fn report_round_trips_through_json() {
    let dir = tempfile::tempdir().unwrap();
    let (ds, cfg) = toy_config(dir.path());
    let report = run_on(&ds, &cfg).unwrap();
    let out = dir.path().join("out");
    let written = emit_report(&report, &out).unwrap();
    assert!(written.iter().any(|p| p.ends_with("summary.csv")));
    assert_eq!(read_report(&out.join("report.json")).unwrap(), report);

    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + report.cells.len());
    for key in report.cells.keys() {
        assert!(out.join(format!("bins_{key}.csv")).exists());
    }
    assert!(out.join(format!("plans_{}.json", cell_key(Some(0.5), None))).exists());

    let empty = Report { config: None, cells: Default::default() };
    let edir = dir.path().join("empty");
    emit_report(&empty, &edir).unwrap();
    assert_eq!(read_report(&edir.join("report.json")).unwrap(), empty);
}
