//! Acceptance suite. Runs every criterion at full size and prints one
//! PASS/FAIL line each; exits non-zero if any fails.
//!
//! `cargo test --test acceptance -- 3 4` runs a subset.

use std::collections::BTreeMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Parser;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use survmoe::autodiff::{Graph, Matrix};
use survmoe::cli::{execute, Cli};
use survmoe::cox::CoxOptions;
use survmoe::data::{load_csv, prepare_splits, PatientRecord, PrepSettings, PreparedSplits, Schema};
use survmoe::metrics::{harrell_cindex, td_cindex};
use survmoe::model::{DualMoe, DualMoeConfig, GraphBatch, HazardCurve, RouterInput};
use survmoe::objectives::{
    batch_loss, batch_loss_and_grads, lb_feat_graph, lb_feat_loss, lb_haz_graph, lb_haz_loss, BatchRoutingStats,
};
use survmoe::report::read_csv;
use survmoe::trainer::evaluate_cox;
use survmoe::Error;
use tempfile::TempDir;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn repo(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

/// Runs a CLI command in-process, discarding what it would print.
fn cli(args: &[&str]) {
    let argv = std::iter::once("survmoe").chain(args.iter().copied());
    let parsed = Cli::try_parse_from(argv).unwrap_or_else(|e| panic!("{e}"));
    if let Err(e) = execute(parsed) {
        panic!("survmoe {} failed: {e}", args.join(" "));
    }
}

fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

// ---------------------------------------------------------------- grids

/// Per-variant columns of a `runs.csv`, completed runs only.
struct Runs {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Runs {
    fn read(dir: &Path) -> Runs {
        let (header, rows) = read_csv(&dir.join("runs.csv")).unwrap();
        Runs { header, rows }
    }

    fn failed(&self, variant: &str) -> usize {
        self.rows.iter().filter(|r| r[0] == variant && r[2] != "ok").count()
    }

    fn column(&self, variant: &str, name: &str) -> Vec<f64> {
        let c = self
            .header
            .iter()
            .position(|h| h == name)
            .unwrap_or_else(|| panic!("no column {name}"));
        self.rows
            .iter()
            .filter(|r| r[0] == variant && r[2] == "ok" && !r[c].is_empty())
            .map(|r| r[c].parse().unwrap())
            .collect()
    }

    fn mean(&self, variant: &str, name: &str) -> f64 {
        let v = self.column(variant, name);
        assert!(!v.is_empty(), "no completed {variant} runs");
        v.iter().sum::<f64>() / v.len() as f64
    }
}

struct Suite {
    tmp: TempDir,
    metabric: Option<PathBuf>,
    gbsg: Option<PathBuf>,
    components: Option<(PathBuf, PathBuf, f64)>,
}

impl Suite {
    fn prepared(&mut self, name: &str) -> PathBuf {
        let slot = if name == "metabric" {
            &mut self.metabric
        } else {
            &mut self.gbsg
        };
        if let Some(p) = slot {
            return p.clone();
        }
        let out = self.tmp.path().join(format!("data_{name}"));
        cli(&[
            "prepare",
            "--input",
            s(&repo(&format!("data/{name}.csv"))),
            "--schema",
            s(&repo(&format!("data/{name}.schema.toml"))),
            "--out",
            s(&out),
        ]);
        *slot = Some(out.clone());
        out
    }

    fn grid(&mut self, name: &str, grid: &str, label: &str) -> (PathBuf, f64) {
        let data = self.prepared(name);
        let out = self.tmp.path().join(label);
        let start = Instant::now();
        cli(&[
            "ablate",
            "--data",
            s(&data),
            "--grid",
            grid,
            "--preset",
            name,
            "--out",
            s(&out),
        ]);
        (out, start.elapsed().as_secs_f64())
    }

    /// The METABRIC component grid, run twice with identical flags.
    fn components(&mut self) -> (PathBuf, PathBuf, f64) {
        if self.components.is_none() {
            let (a, secs) = self.grid("metabric", "moe-components", "components_a");
            let (b, _) = self.grid("metabric", "moe-components", "components_b");
            self.components = Some((a, b, secs));
        }
        self.components.clone().unwrap()
    }
}

// ------------------------------------------------------------ criterion 1

fn random_config(rng: &mut ChaCha8Rng) -> DualMoeConfig {
    DualMoeConfig {
        input_dim: rng.random_range(1..=4),
        encoder_depth: rng.random_range(1..=2),
        encoder_width: rng.random_range(1..=8),
        expert_depth: rng.random_range(1..=2),
        expert_width: rng.random_range(1..=8),
        num_feature_experts: rng.random_range(1..=3),
        num_hazard_experts: rng.random_range(1..=3),
        t_max: rng.random_range(1..=4),
        d_time: rng.random_range(1..=3),
        alpha: rng.random_range(0.0..1.0),
        beta: rng.random_range(0.0..1.0),
        feature_moe: rng.random_bool(0.8),
        hazard_moe: rng.random_bool(0.8),
        hazard_router_input: RouterInput::ALL[rng.random_range(0..3)],
    }
}

fn random_records(rng: &mut ChaCha8Rng, n: usize, p: usize, t_max: usize) -> Vec<PatientRecord> {
    (0..n)
        .map(|i| PatientRecord {
            id: format!("r{i}"),
            x: (0..p).map(|_| rng.random_range(-2.0..2.0)).collect(),
            tau: rng.random_range(0..=t_max),
            event: rng.random_bool(0.6),
            duration: 0.0,
            subgroups: vec![],
        })
        .collect()
}

/// Largest `|a - n| / max(|a|, |n|, 1e-6)` over every parameter scalar.
fn fd_error(model: &mut DualMoe, batch: &GraphBatch) -> f64 {
    const H: f64 = 1e-5;
    model.params_mut().zero_grads();
    batch_loss_and_grads(model, batch).unwrap();
    let mut worst: f64 = 0.0;
    for id in 0..model.params().len() {
        let analytic = model.params().grad(id).clone();
        for j in 0..analytic.len() {
            let orig = model.params().value(id).data()[j];
            model.params_mut().value_mut(id).data_mut()[j] = orig + H;
            let up = batch_loss(model, batch).unwrap().total;
            model.params_mut().value_mut(id).data_mut()[j] = orig - H;
            let down = batch_loss(model, batch).unwrap().total;
            model.params_mut().value_mut(id).data_mut()[j] = orig;
            let numeric = (up - down) / (2.0 * H);
            let a = analytic.data()[j];
            worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6));
        }
    }
    worst
}

fn gradients(_: &mut Suite) -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for i in 0..50u64 {
        let cfg = random_config(&mut rng);
        let mut model = DualMoe::new(cfg.clone(), i).unwrap();
        for id in 0..model.params().len() {
            if model.params().name(id).ends_with("bias") {
                let v = model.params_mut().value_mut(id);
                v.data_mut().iter_mut().for_each(|b| *b = rng.random_range(-0.5..0.5));
            }
        }
        let n = rng.random_range(2..=6);
        let recs = random_records(&mut rng, n, cfg.input_dim, cfg.t_max);
        worst = worst.max(fd_error(&mut model, &GraphBatch::from_records(&recs).unwrap()));
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        worst < 1e-4 && secs < 60.0,
        format!("50 configs, max relative error {worst:.2e}, {secs:.1} s"),
    )
}

// ------------------------------------------------------------ criterion 2

fn probability_identities(_: &mut Suite) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    let mut monotone = true;
    for i in 0..1000 {
        let bins = rng.random_range(1..=40);
        let lambda: Vec<f64> = (0..bins)
            .map(|_| match i % 4 {
                0 => rng.random_range(0.0..1.0),
                1 => rng.random_range(0.0..1e-6),
                2 => 1.0 - rng.random_range(0.0..1e-6),
                _ => [0.0, 1.0, 0.5, rng.random_range(0.0..1.0)][rng.random_range(0..4)],
            })
            .collect();
        let c = HazardCurve::from_hazards(lambda);
        let total = c.event_mass.iter().sum::<f64>() + c.survival.last().unwrap();
        worst = worst.max((total - 1.0).abs());
        monotone &= c.survival.windows(2).all(|w| w[1] <= w[0]) && c.survival[0] <= 1.0;
    }
    verdict(
        worst <= 1e-9 && monotone,
        format!("1000 curves, max |sum - 1| {worst:.2e}, survival non-increasing: {monotone}"),
    )
}

// ------------------------------------------------------------ criterion 3

/// Uniform routing uses `1/K`, which binary64 cannot hold for most `K`, so
/// the minimum is checked to a few ulps; collapsed routing is all 0s and 1s
/// and must match exactly.
const UNIFORM_TOL: f64 = 1e-15;

fn load_balance(_: &mut Suite) -> Verdict {
    let (alpha, beta, t_max) = (0.37, 0.81, 5);
    let mut bad = Vec::new();
    let mut uniform_worst: f64 = 0.0;
    for k in 1..=8usize {
        for l in 1..=8usize {
            let uniform = BatchRoutingStats {
                pi_bar_feat: vec![1.0 / k as f64; k],
                pi_bar_haz: Matrix::filled(t_max + 1, l, 1.0 / l as f64),
            };
            let mut haz = Matrix::zeros(t_max + 1, l);
            (0..=t_max).for_each(|t| haz.set(t, t % l, 1.0));
            let mut feat = vec![0.0; k];
            feat[k - 1] = 1.0;
            let collapsed = BatchRoutingStats {
                pi_bar_feat: feat,
                pi_bar_haz: haz,
            };

            // Graph form on a batch of three identical rows.
            let mut g = Graph::new();
            let pf = g.constant(Matrix::filled(3, k, 1.0 / k as f64));
            let ph = g.constant(Matrix::filled(3 * (t_max + 1), l, 1.0 / l as f64));
            let lf = lb_feat_graph(&mut g, pf, alpha).unwrap();
            let lh = lb_haz_graph(&mut g, ph, 3, beta).unwrap();

            let at_uniform = [
                lb_feat_loss(&uniform, k, alpha),
                lb_haz_loss(&uniform, l, t_max, beta),
                g.value(lf).item(),
                g.value(lh).item(),
            ];
            for v in at_uniform {
                uniform_worst = uniform_worst.max(v.abs());
            }
            if at_uniform.iter().any(|v| v.abs() > UNIFORM_TOL) {
                bad.push(format!("uniform K={k} L={l}: {at_uniform:?}"));
            }
            let got = [
                lb_feat_loss(&collapsed, k, alpha),
                lb_haz_loss(&collapsed, l, t_max, beta),
            ];
            let want = [alpha * (k - 1) as f64, beta * (l - 1) as f64];
            if got != want {
                bad.push(format!("collapsed K={k} L={l}: {got:?} vs {want:?}"));
            }
        }
    }
    let detail = if bad.is_empty() {
        format!("64 (K, L) pairs; uniform max |lb| {uniform_worst:.1e}, collapsed exact")
    } else {
        format!("{} mismatches, first: {}", bad.len(), bad[0])
    };
    verdict(bad.is_empty(), detail)
}

// ------------------------------------------------------------ criterion 4

/// Ordered-pair enumeration straight from the definitions.
fn oracle(risk: &[f64], comparable: impl Fn(usize, usize) -> bool) -> Option<(u64, f64)> {
    let (mut pairs, mut concordant) = (0u64, 0.0);
    for i in 0..risk.len() {
        for j in 0..risk.len() {
            if i != j && comparable(i, j) {
                pairs += 1;
                concordant += if risk[i] > risk[j] {
                    1.0
                } else if risk[i] == risk[j] {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    (pairs > 0).then_some((pairs, concordant))
}

fn agrees(got: Result<survmoe::metrics::ConcordanceResult, Error>, want: Option<(u64, f64)>) -> bool {
    match (got, want) {
        (Ok(r), Some((pairs, conc))) => {
            r.comparable_pairs == pairs && r.concordant == conc && r.value == conc / pairs as f64
        }
        (Err(Error::UndefinedMetric(_)), None) => true,
        _ => false,
    }
}

fn metric_oracle(_: &mut Suite) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut checks = 0;
    let mut mismatches = Vec::new();
    for inst in 0..100 {
        let n = rng.random_range(1..=200);
        let t_max = rng.random_range(0..=12);
        let tau: Vec<usize> = (0..n).map(|_| rng.random_range(0..=t_max)).collect();
        let event: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
        // Half the instances draw from a few levels so risk ties are common.
        let tied = inst % 2 == 0;
        let risk: Vec<f64> = (0..n)
            .map(|_| {
                if tied {
                    f64::from(rng.random_range(0..4u8))
                } else {
                    rng.random_range(-3.0..3.0)
                }
            })
            .collect();
        let want = oracle(&risk, |i, j| {
            event[i] && (tau[i] < tau[j] || (tau[i] == tau[j] && !event[j]))
        });
        checks += 1;
        if !agrees(harrell_cindex(&risk, &tau, &event), want) {
            mismatches.push(format!("harrell instance {inst}"));
        }

        let pool: Vec<HazardCurve> = (0..if tied { 3 } else { n })
            .map(|_| HazardCurve::from_hazards((0..=t_max).map(|_| rng.random_range(0.0..0.6)).collect()))
            .collect();
        let curves: Vec<HazardCurve> = (0..n).map(|i| pool[i % pool.len()].clone()).collect();
        for h in 0..=t_max {
            let r: Vec<f64> = curves.iter().map(|c| 1.0 - c.survival[h]).collect();
            let want = oracle(&r, |i, j| event[i] && tau[i] <= h && tau[j] > tau[i]);
            checks += 1;
            if !agrees(td_cindex(&curves, &tau, &event, h), want) {
                mismatches.push(format!("td instance {inst} h={h}"));
            }
        }
    }
    let detail = if mismatches.is_empty() {
        format!("{checks} comparisons against pair enumeration, all exact")
    } else {
        format!("{} of {checks} differ, first: {}", mismatches.len(), mismatches[0])
    };
    verdict(mismatches.is_empty(), detail)
}

// ------------------------------------------------------- criteria 5 to 10

fn within(v: f64, centre: f64, tol: f64) -> bool {
    (v - centre).abs() <= tol
}

fn metabric_headline(suite: &mut Suite) -> Verdict {
    let (dir, _, secs) = suite.components();
    let runs = Runs::read(&dir);
    let (dual, naive) = (runs.mean("dual", "cindex"), runs.mean("naive", "cindex"));
    let complete = runs.column("dual", "cindex").len() == 10 && runs.column("naive", "cindex").len() == 10;
    verdict(
        complete && within(dual, 0.654, 0.03) && dual >= naive - 0.005 && secs < 600.0,
        format!("dual {dual:.4} (target 0.654 ± 0.03), naive {naive:.4}, 10 seeds each: {complete}, grid {secs:.0} s"),
    )
}

fn gbsg_headline(suite: &mut Suite) -> Verdict {
    let (dir, _) = suite.grid("gbsg", "headline", "gbsg_headline");
    let runs = Runs::read(&dir);
    let (dual, naive) = (runs.mean("dual", "cindex"), runs.mean("naive", "cindex"));
    let (early, late) = (runs.mean("dual", "td_10"), runs.mean("dual", "td_90"));
    let complete = runs.failed("dual") == 0 && runs.failed("naive") == 0;
    verdict(
        complete && within(dual, 0.667, 0.03) && dual >= naive - 0.005 && early > late,
        format!("dual {dual:.4} (target 0.667 ± 0.03), naive {naive:.4}, td 10% {early:.4} vs 90% {late:.4}"),
    )
}

fn cox_baseline(_: &mut Suite) -> Verdict {
    let mut parts = Vec::new();
    let mut pass = true;
    for (name, target) in [("metabric", 0.663), ("gbsg", 0.659)] {
        let schema = Schema::load(&repo(&format!("data/{name}.schema.toml"))).unwrap();
        let raw = load_csv(&repo(&format!("data/{name}.csv")), &schema).unwrap();
        let mut values = Vec::new();
        for seed in 0..10 {
            let splits: PreparedSplits = prepare_splits(&raw, &PrepSettings::default(), seed).unwrap();
            match evaluate_cox(&splits, &CoxOptions::default()) {
                Ok((report, _)) => values.push(report.cindex.value),
                Err(e) => parts.push(format!("{name} seed {seed} failed: {e}")),
            }
        }
        let mean = values.iter().sum::<f64>() / values.len().max(1) as f64;
        pass &= values.len() == 10 && within(mean, target, 0.03);
        parts.push(format!("{name} {mean:.4} (target {target} ± 0.03)"));
    }
    verdict(pass, parts.join(", "))
}

fn ablation_ordering(suite: &mut Suite) -> Verdict {
    let (dir, _, _) = suite.components();
    let runs = Runs::read(&dir);
    let m: BTreeMap<&str, f64> = ["naive", "feature_moe", "hazard_moe", "dual"]
        .into_iter()
        .map(|v| (v, runs.mean(v, "cindex")))
        .collect();
    let singles = ["feature_moe", "hazard_moe"];
    let pass = singles
        .iter()
        .all(|v| m["dual"] >= m[v] - 0.005 && m[v] >= m["naive"] - 0.005);
    let detail = m
        .iter()
        .map(|(k, v)| format!("{k} {v:.4}"))
        .collect::<Vec<_>>()
        .join(", ");
    verdict(pass, detail)
}

fn router_input(suite: &mut Suite) -> Verdict {
    let (dir, _) = suite.grid("metabric", "router-input", "router_input");
    let runs = Runs::read(&dir);
    let m: BTreeMap<&str, f64> = ["features_only", "time_only", "both"]
        .into_iter()
        .map(|v| (v, runs.mean(v, "td_mean")))
        .collect();
    let pass = m["both"] >= m["features_only"] - 0.005 && m["both"] >= m["time_only"] - 0.005;
    let detail = m
        .iter()
        .map(|(k, v)| format!("{k} {v:.4}"))
        .collect::<Vec<_>>()
        .join(", ");
    verdict(pass, format!("mean td-C-index over horizons: {detail}"))
}

fn csv_files(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().is_some_and(|e| e == "csv") {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

fn determinism(suite: &mut Suite) -> Verdict {
    let (a, b, _) = suite.components();
    let (fa, fb) = (csv_files(&a), csv_files(&b));
    let differing: Vec<_> = fa
        .iter()
        .filter(|f| fs::read(a.join(f)).ok() != fs::read(b.join(f)).ok())
        .collect();
    verdict(
        fa == fb && differing.is_empty() && !fa.is_empty(),
        format!(
            "{} CSV files compared, {} differ",
            fa.len(),
            differing.len() + usize::from(fa != fb)
        ),
    )
}

// ----------------------------------------------------------- criterion 11

fn routing_exports(suite: &mut Suite) -> Verdict {
    let (grid, _, _) = suite.components();
    let data = suite.prepared("metabric");
    let out = suite.tmp.path().join("routing");
    let splits = PreparedSplits::read(&data.join("splits/seed_0.bin")).unwrap();
    let ids: Vec<&str> = splits.test.iter().map(|r| r.id.as_str()).collect();
    let ids = ids.join(",");
    cli(&[
        "export-routing",
        "--checkpoint",
        s(&grid.join("runs/dual/seed_0/checkpoint.bin")),
        "--data",
        s(&data),
        "--split",
        "test",
        "--patients",
        &ids,
        "--out",
        s(&out),
    ]);

    let mut worst: f64 = 0.0;
    let mut rows_checked = 0;
    let (feat_header, feat) = read_csv(&out.join("routing_feat.csv")).unwrap();
    let (_, haz) = read_csv(&out.join("routing_haz.csv")).unwrap();
    let first_expert = feat_header.iter().position(|h| h.starts_with("expert_")).unwrap();
    for (row, start) in feat.iter().map(|r| (r, first_expert)).chain(haz.iter().map(|r| (r, 2))) {
        let sum: f64 = row[start..].iter().map(|v| v.parse::<f64>().unwrap()).sum();
        worst = worst.max((sum - 1.0).abs());
        rows_checked += 1;
    }

    // Subgroup means rebuilt from the per-patient rows.
    let (_, means) = read_csv(&out.join("subgroup_means.csv")).unwrap();
    let mut recomputed = Vec::new();
    for (col, name) in feat_header[1..first_expert].iter().enumerate() {
        let mut values: Vec<&str> = feat.iter().map(|r| r[col + 1].as_str()).collect();
        values.sort_unstable();
        values.dedup();
        for value in values {
            let members: Vec<&Vec<String>> = feat.iter().filter(|r| r[col + 1] == value).collect();
            let mut sum = vec![0.0; feat_header.len() - first_expert];
            for r in &members {
                for (s, v) in sum.iter_mut().zip(&r[first_expert..]) {
                    *s += v.parse::<f64>().unwrap();
                }
            }
            let mean: Vec<f64> = sum.iter().map(|s| s / members.len() as f64).collect();
            recomputed.push((name.clone(), value.to_string(), members.len(), mean));
        }
    }
    let exported: Vec<(String, String, usize, Vec<f64>)> = means
        .iter()
        .map(|r| {
            (
                r[0].clone(),
                r[1].clone(),
                r[2].parse().unwrap(),
                r[3..].iter().map(|v| v.parse().unwrap()).collect(),
            )
        })
        .collect();
    let exact = exported == recomputed && !exported.is_empty();
    verdict(
        worst <= 1e-9 && exact && haz.len() == splits.test.len() * 20,
        format!(
            "{rows_checked} routing rows, max |sum - 1| {worst:.2e}; {} subgroup means recomputed, exact: {exact}",
            recomputed.len()
        ),
    )
}

// ------------------------------------------------------------------ main

type Criterion = (usize, &'static str, fn(&mut Suite) -> Verdict);

fn main() {
    let criteria: [Criterion; 11] = [
        (1, "gradient correctness", gradients),
        (2, "probability identities", probability_identities),
        (3, "load-balance minima", load_balance),
        (4, "metric oracle equivalence", metric_oracle),
        (5, "METABRIC headline", metabric_headline),
        (6, "GBSG headline", gbsg_headline),
        (7, "CoxPH baseline", cox_baseline),
        (8, "ablation ordering", ablation_ordering),
        (9, "router-input ablation", router_input),
        (10, "determinism", determinism),
        (11, "routing exports", routing_exports),
    ];
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut suite = Suite {
        tmp: tempfile::tempdir().unwrap(),
        metabric: None,
        gbsg: None,
        components: None,
    };
    let mut failed = 0;
    let mut ran = 0;
    for (n, name, check) in criteria {
        if !selected.is_empty() && !selected.contains(&n) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let v = catch_unwind(AssertUnwindSafe(|| check(&mut suite))).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            verdict(false, format!("panicked: {msg}"))
        });
        failed += usize::from(!v.pass);
        println!(
            "criterion {n:>2} {:<26} {}  {} [{:.1} s]",
            name,
            if v.pass { "PASS" } else { "FAIL" },
            v.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} of {ran} criteria passed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
