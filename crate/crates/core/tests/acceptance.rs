//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails. Criteria 6-8 drive the `expspot` binary end to end.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use expspot::verify::{
    adjacency_check, gradient_check, match_oracle_check, nms_oracle_check, proposal_oracle_check,
    receptive_field_check, CheckOutcome, VerifyOptions, GRADIENT_CHECKS,
};

const BENCHMARK_CONFIG: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/synthetic_benchmark.txt");
const ABLATION_SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

struct Verdict {
    id: usize,
    name: &'static str,
    passed: bool,
    detail: String,
    elapsed: Duration,
}

impl Verdict {
    fn print(&self) {
        println!(
            "criterion {} {:<24} {} {:>8.1}s  {}",
            self.id,
            self.name,
            if self.passed { "PASS" } else { "FAIL" },
            self.elapsed.as_secs_f64(),
            self.detail
        );
    }
}

fn within(elapsed: Duration, budget_secs: u64) -> bool {
    elapsed <= Duration::from_secs(budget_secs)
}

fn summarize_checks(checks: &[CheckOutcome]) -> String {
    checks
        .iter()
        .map(|c| format!("{}={:.1e}{}", c.name, c.max_error, if c.passed() { "" } else { "!" }))
        .collect::<Vec<_>>()
        .join(" ")
}

fn oracle_criterion(
    id: usize,
    name: &'static str,
    budget_secs: u64,
    run: impl FnOnce() -> Vec<CheckOutcome>,
) -> Verdict {
    let start = Instant::now();
    let checks = run();
    let elapsed = start.elapsed();
    Verdict {
        id,
        name,
        passed: checks.iter().all(CheckOutcome::passed) && within(elapsed, budget_secs),
        detail: format!(
            "{} (budget {budget_secs}s)",
            checks
                .iter()
                .map(|c| format!("{}: {} mismatches / {} cases", c.name, c.max_error, c.cases))
                .collect::<Vec<_>>()
                .join(", ")
        ),
        elapsed,
    }
}

fn expspot(args: &[&str]) {
    let out = Command::new(env!("CARGO_BIN_EXE_expspot"))
        .args(args)
        .output()
        .expect("binary runs");
    assert!(
        out.status.success(),
        "expspot {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

/// Benchmark dataset: 4 subjects, 2 videos of 60 s at 30 fps, signal 5x noise,
/// 3 macro and 2 micro instances per video on average.
fn gen_benchmark(dir: &Path, seed: u64) {
    expspot(&[
        "gen-synth",
        "--out",
        s(dir),
        "--subjects",
        "4",
        "--videos-per-subject",
        "2",
        "--fps",
        "30",
        "--video-seconds",
        "60",
        "--macro-rate",
        "3",
        "--micro-rate",
        "2",
        "--noise-sigma",
        "0.2",
        "--signal-amp",
        "1.0",
        "--seed",
        &seed.to_string(),
    ]);
}

fn read_scores(path: &Path) -> BTreeMap<String, f64> {
    fs::read_to_string(path)
        .expect("scores written")
        .lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.to_string(), v.parse().expect("numeric score")))
        .collect()
}

/// Full LOSO train, spot and eval through the binary; returns the scores.
fn run_benchmark(root: &Path, data: &Path, config: &Path, prior: &str, tag: &str) -> BTreeMap<String, f64> {
    let ck = root.join(format!("ck_{tag}"));
    let props = root.join(format!("proposals_{tag}.csv"));
    let scores = root.join(format!("scores_{tag}.txt"));
    expspot(&[
        "train",
        "--data",
        s(data),
        "--out",
        s(&ck),
        "--config",
        s(config),
        "--prior",
        prior,
    ]);
    expspot(&["spot", "--data", s(data), "--checkpoints", s(&ck), "--out", s(&props)]);
    expspot(&[
        "eval",
        "--proposals",
        s(&props),
        "--annotations",
        s(&data.join("annotations.csv")),
        "--out",
        s(&scores),
    ]);
    read_scores(&scores)
}

fn files_under(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out: Vec<(PathBuf, Vec<u8>)> = fs::read_dir(dir)
        .expect("dir exists")
        .map(|e| e.expect("entry").path())
        .filter(|p| p.extension().is_some_and(|e| e == "auwc"))
        .map(|p| {
            (
                PathBuf::from(p.file_name().expect("name")),
                fs::read(&p).expect("readable"),
            )
        })
        .collect();
    out.sort();
    out
}

fn main() {
    let opts = VerifyOptions::default();
    let mut verdicts = Vec::new();

    let start = Instant::now();
    let checks: Vec<CheckOutcome> = GRADIENT_CHECKS.iter().map(|n| gradient_check(n, &opts)).collect();
    let elapsed = start.elapsed();
    verdicts.push(Verdict {
        id: 1,
        name: "gradient correctness",
        passed: checks.iter().all(CheckOutcome::passed) && within(elapsed, 120),
        detail: format!("{} seeds: {} (budget 120s)", opts.seeds, summarize_checks(&checks)),
        elapsed,
    });
    verdicts.last().expect("pushed").print();

    let cases = opts.oracle_cases;
    for v in [
        oracle_criterion(2, "proposal oracle", 10, || vec![proposal_oracle_check(cases)]),
        oracle_criterion(3, "nms and matching oracles", 10, || {
            vec![nms_oracle_check(cases), match_oracle_check(cases)]
        }),
        oracle_criterion(4, "adjacency", 5, || vec![adjacency_check(cases)]),
        oracle_criterion(5, "receptive field", 5, || vec![receptive_field_check(20)]),
    ] {
        v.print();
        verdicts.push(v);
    }

    let tmp = tempfile::tempdir().expect("temp dir");
    let root = tmp.path();
    let config = Path::new(BENCHMARK_CONFIG);

    // 6: end to end on the acceptance dataset (seed 0).
    let start = Instant::now();
    let data0 = root.join("data_0");
    gen_benchmark(&data0, 0);
    let co0 = run_benchmark(root, &data0, config, "cooccurrence", "co_0");
    let elapsed = start.elapsed();
    let (overall, macro_) = (co0["overall.f1"], co0["macro.f1"]);
    let v = Verdict {
        id: 6,
        name: "synthetic end to end",
        passed: overall >= 0.70 && macro_ >= 0.80 && within(elapsed, 15 * 60),
        detail: format!(
            "overall F1 {overall:.4} (>= 0.70), macro F1 {macro_:.4} (>= 0.80), micro F1 {:.4}; tp/fp/fn {}/{}/{}",
            co0["micro.f1"], co0["overall.tp"], co0["overall.fp"], co0["overall.fn"]
        ),
        elapsed,
    };
    v.print();
    verdicts.push(v);

    // 7: prior vs uniform adjacency over a fixed seed set.
    let start = Instant::now();
    let (mut co, mut un) = (Vec::new(), Vec::new());
    for seed in ABLATION_SEEDS {
        let data = root.join(format!("data_{seed}"));
        if seed != 0 {
            gen_benchmark(&data, seed);
        }
        let c = if seed == 0 {
            co0.clone()
        } else {
            run_benchmark(root, &data, config, "cooccurrence", &format!("co_{seed}"))
        };
        let u = run_benchmark(root, &data, config, "uniform", &format!("un_{seed}"));
        co.push(c["overall.f1"]);
        un.push(u["overall.f1"]);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(",");
    let v = Verdict {
        id: 7,
        name: "prior ablation direction",
        passed: mean(&co) >= mean(&un),
        detail: format!(
            "mean overall F1 co-occurrence {:.4} [{}] vs uniform {:.4} [{}], seeds {:?}",
            mean(&co),
            fmt(&co),
            mean(&un),
            fmt(&un),
            ABLATION_SEEDS
        ),
        elapsed: start.elapsed() + elapsed,
    };
    v.print();
    verdicts.push(v);

    // 8: two independent runs on one dataset, one of them with two workers.
    // A lowered apex threshold keeps the short runs' proposal files non-trivial.
    let start = Instant::now();
    let short = root.join("short.txt");
    let text = fs::read_to_string(config).expect("benchmark config");
    fs::write(&short, format!("{text}\nepochs = 2\nthr_ap = 0.2\n")).expect("write config");
    let mut runs = Vec::new();
    for (tag, workers) in [("a", "1"), ("b", "2")] {
        let ck = root.join(format!("det_{tag}"));
        let props = root.join(format!("det_{tag}.csv"));
        expspot(&[
            "train",
            "--data",
            s(&data0),
            "--out",
            s(&ck),
            "--config",
            s(&short),
            "--workers",
            workers,
        ]);
        expspot(&["spot", "--data", s(&data0), "--checkpoints", s(&ck), "--out", s(&props)]);
        runs.push((files_under(&ck), fs::read(&props).expect("proposals")));
    }
    let same_ckpt = runs[0].0 == runs[1].0 && runs[0].0.len() == 4;
    let rows = runs[0].1.iter().filter(|&&b| b == b'\n').count().saturating_sub(1);
    let same_csv = runs[0].1 == runs[1].1 && rows > 0;
    let v = Verdict {
        id: 8,
        name: "determinism",
        passed: same_ckpt && same_csv,
        detail: format!(
            "{} checkpoints bitwise equal: {same_ckpt}; proposal CSVs byte equal: {same_csv} ({rows} proposals, {} bytes)",
            runs[0].0.len(),
            runs[0].1.len()
        ),
        elapsed: start.elapsed(),
    };
    v.print();
    verdicts.push(v);

    let failed: Vec<usize> = verdicts.iter().filter(|v| !v.passed).map(|v| v.id).collect();
    println!(
        "acceptance: {}/{} criteria passed",
        verdicts.len() - failed.len(),
        verdicts.len()
    );
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
