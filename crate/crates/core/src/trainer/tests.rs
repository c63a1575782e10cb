use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::data::{parse_csv, prepare_splits, PrepSettings, RawDataset, Schema};
use crate::model::RouterInput;

pub(crate) fn synthetic_raw(n: usize, seed: u64) -> RawDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut text = String::from("id,x1,x2,grp,duration,event\n");
    for i in 0..n {
        let x1: f64 = rng.random_range(-1.0..1.0);
        let x2: f64 = rng.random_range(-1.0..1.0);
        let u: f64 = rng.random_range(1e-9..1.0);
        let t = -u.ln() / (2.0 * x1).exp();
        let event = rng.random_bool(0.7);
        let grp = if x2 > 0.0 { "a" } else { "b" };
        text.push_str(&format!("p{i},{x1},{x2},{grp},{t},{}\n", u8::from(event)));
    }
    let schema = Schema::from_toml_str(
        "duration = \"duration\"\nevent = \"event\"\nid = \"id\"\nsubgroups = [\"grp\"]\nsubgroup_only = [\"grp\"]\n",
        Path::new("synthetic.toml"),
    )
    .unwrap();
    parse_csv(&text, &schema).unwrap()
}

pub(crate) fn small_config() -> DualMoeConfig {
    DualMoeConfig {
        encoder_depth: 1,
        encoder_width: 8,
        expert_depth: 1,
        expert_width: 8,
        num_feature_experts: 2,
        num_hazard_experts: 2,
        d_time: 4,
        ..DualMoeConfig::metabric(2)
    }
}

fn data(n: usize) -> PreparedSplits {
    let settings = PrepSettings {
        t_max: 5,
        ..Default::default()
    };
    prepare_splits(&synthetic_raw(n, 1), &settings, 0).unwrap()
}

fn quick(epochs: usize, patience: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        patience,
        batch_size: 32,
        learning_rate: 1e-2,
        seeds: vec![0],
        ..Default::default()
    }
}

#[test]
fn zero_patience_stops_after_first_evaluation() {
    let r = train_one(&small_config(), &quick(10, 0), &data(120), 0).unwrap();
    assert_eq!((r.epochs_run, r.best_epoch, r.log.len()), (1, 1, 1));
}

#[test]
fn same_seed_gives_identical_results() {
    let d = data(120);
    let a = train_one(&small_config(), &quick(6, 3), &d, 4).unwrap();
    let b = train_one(&small_config(), &quick(6, 3), &d, 4).unwrap();
    assert_eq!(a.log, b.log);
    assert_eq!(a.test, b.test);
    assert_eq!(a.final_loss, b.final_loss);
    assert_eq!(a.routing, b.routing);
    assert_eq!(a.model.params().values_snapshot(), b.model.params().values_snapshot());
}

#[test]
fn training_lowers_nll_on_strong_signal() {
    let r = train_one(&small_config(), &quick(50, 50), &data(200), 0).unwrap();
    assert_eq!(r.log.len(), 50);
    assert!(
        r.log[49].train.nll < r.log[0].train.nll,
        "{} vs {}",
        r.log[49].train.nll,
        r.log[0].train.nll
    );
}

#[test]
fn retained_parameters_score_the_best_validation_cindex() {
    let r = train_one(&small_config(), &quick(12, 12), &data(150), 2).unwrap();
    let best = r
        .log
        .iter()
        .filter_map(|e| e.val_cindex)
        .fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(r.val_cindex, best);
    assert_eq!(r.log[r.best_epoch - 1].val_cindex, Some(best));
    assert!(r.best_epoch <= r.epochs_run);
}

#[test]
fn nll_stopping_tracks_validation_nll() {
    let cfg = TrainConfig {
        early_stopping: StopCriterion::Nll,
        ..quick(8, 8)
    };
    let r = train_one(&small_config(), &cfg, &data(150), 1).unwrap();
    let best = r.log.iter().filter_map(|e| e.val_nll).fold(f64::INFINITY, f64::min);
    assert_eq!(r.log[r.best_epoch - 1].val_nll, Some(best));
}

#[test]
fn disabled_moes_without_balancing_match_the_naive_trajectory() {
    let d = data(120);
    let naive = small_config().naive();
    let zeroed = DualMoeConfig {
        alpha: 0.0,
        beta: 0.0,
        ..naive.clone()
    };
    let a = train_one(&naive, &quick(5, 5), &d, 3).unwrap();
    let b = train_one(&zeroed, &quick(5, 5), &d, 3).unwrap();
    assert_eq!(a.log, b.log);
    assert!(a.log.iter().all(|e| e.train.lb_feat == 0.0 && e.train.lb_haz == 0.0));
}

#[test]
fn non_finite_inputs_abort_with_diagnostics() {
    let mut d = data(120);
    d.train[0].x[0] = f64::NAN;
    match train_one(&small_config(), &quick(3, 3), &d, 0) {
        Err(Error::NanLoss { epoch, batch, .. }) => {
            assert_eq!(epoch, 1);
            assert!(batch < d.train.len().div_ceil(32));
        }
        other => panic!("expected NanLoss, got {other:?}"),
    }
}

#[test]
fn checkpoint_round_trip_preserves_predictions_and_optimizer() {
    let d = data(120);
    let cfg = DualMoeConfig {
        hazard_router_input: RouterInput::TimeOnly,
        ..small_config()
    };
    let r = train_one(&cfg, &quick(3, 3), &d, 0).unwrap();
    let ck = Checkpoint {
        model: r.model.clone(),
        preprocessor: d.preprocessor.clone(),
        train_config: quick(3, 3),
        seed: 0,
        best_epoch: r.best_epoch,
    };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ck.bin");
    ck.write(&path).unwrap();
    let back = Checkpoint::read(&path).unwrap();
    assert_eq!(back.model.config(), r.model.config());
    assert_eq!(back.model.params(), r.model.params());
    assert_eq!(back.preprocessor, d.preprocessor);
    assert_eq!(
        back.model.predict_curves(&d.test).unwrap(),
        r.model.predict_curves(&d.test).unwrap()
    );
    let wrong = crate::container::Container::new("dataset", serde_json::json!({}));
    assert!(matches!(
        Checkpoint::from_container(wrong, &path),
        Err(Error::Format { .. })
    ));
}

fn run(variant: &str, seed: u64, cindex: f64) -> GridRun {
    GridRun {
        variant: variant.into(),
        seed,
        outcome: RunOutcome::Completed(RunMetrics {
            cindex,
            td: vec![Some(cindex), None],
            horizon_bins: vec![1, 2],
            best_epoch: Some(1),
        }),
    }
}

#[test]
fn aggregate_single_run_has_zero_std() {
    let v = [Variant::cox()];
    let rows = aggregate(&v, &[run("coxph", 0, 0.7)], &[0.1, 0.9]);
    let c = rows[0].cindex.unwrap();
    assert_eq!((c.mean, c.std, c.n), (0.7, 0.0, 1));
    assert_eq!(rows[0].td[1], None);
}

#[test]
fn aggregate_skips_failed_runs_and_counts_them() {
    let v = [Variant::cox()];
    let runs = [
        run("coxph", 0, 0.6),
        run("coxph", 1, 0.8),
        GridRun {
            variant: "coxph".into(),
            seed: 2,
            outcome: RunOutcome::Failed("diverged".into()),
        },
    ];
    let row = &aggregate(&v, &runs, &[0.1, 0.9])[0];
    assert_eq!((row.completed, row.failed), (2, 1));
    let c = row.cindex.unwrap();
    assert!((c.mean - 0.7).abs() < 1e-15);
    assert!((c.std - 0.02f64.sqrt()).abs() < 1e-15);
}

#[test]
fn grid_summary_matches_recomputation_from_run_csv() {
    let raw = synthetic_raw(150, 2);
    let settings = PrepSettings {
        t_max: 5,
        ..Default::default()
    };
    let train = TrainConfig {
        seeds: vec![0, 1],
        ..quick(3, 3)
    };
    let variants = [Variant::cox(), Variant::moe("dual", small_config()).anchored()];
    let dir = tempfile::tempdir().unwrap();
    let g = run_grid(&raw, &settings, &variants, &train, Some(dir.path())).unwrap();
    assert_eq!(g.runs.len(), 4);
    for sub in [
        "runs/dual/seed_0/checkpoint.bin",
        "runs/dual/seed_1/train_log.csv",
        "runs/coxph/seed_0/metrics.csv",
    ] {
        assert!(dir.path().join(sub).exists(), "{sub}");
    }
    let (h, rows) = crate::report::read_csv(&dir.path().join("runs.csv")).unwrap();
    let col = h.iter().position(|c| c == "cindex").unwrap();
    let (sh, srows) = crate::report::read_csv(&dir.path().join("summary.csv")).unwrap();
    let scol = sh.iter().position(|c| c == "cindex_mean").unwrap();
    for (v, srow) in variants.iter().zip(&srows) {
        let vals: Vec<f64> = rows
            .iter()
            .filter(|r| r[0] == v.name)
            .map(|r| r[col].parse().unwrap())
            .collect();
        let m = MeanStd::of(&vals).unwrap();
        assert_eq!(srow[scol].parse::<f64>().unwrap(), m.mean);
        assert_eq!(srow[scol + 1].parse::<f64>().unwrap(), m.std);
    }
    assert!(g.summary_table().contains("dual *"));
}
