use std::path::Path;
use std::process::{Command, Output};

use hidden_entropy::entropy::{forward_kernel, LEDGER_HEADER};
use hidden_entropy::model::build_demon_model;
use hidden_entropy::unravel::{JumpEvent, VisibleTrajectory, BLOCH_HEADER, SERIES_HEADER};
use hidden_entropy::DemonParams;
use hidden_cli::commands::SWEEP_HEADER;
use hidden_cli::histogram::HISTOGRAM_HEADER;
use tempfile::TempDir;

const REFERENCE_RECORD: &str = "g0; 4@0.9; 1@1.5; 4@2.4; e1; T=3";

fn hident(dir: &Path, config: Option<&str>, args: &[&str]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_hident"));
    cmd.current_dir(dir);
    if let Some(text) = config {
        let path = dir.join("run.toml");
        std::fs::write(&path, text).unwrap();
        cmd.arg("--config").arg(path);
    }
    cmd.args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

fn summary_value(text: &str, key: &str) -> f64 {
    let line = text.lines().find(|l| l.starts_with(key)).unwrap_or_else(|| panic!("no `{key}` in {text}"));
    line[key.len()..].split_whitespace().next().unwrap().parse().unwrap()
}

fn populations(dir: &Path) -> Vec<f64> {
    let (header, rows) = read_csv(&dir.join("out/steady.csv"));
    assert_eq!(header, ["state", "label", "population"]);
    rows.iter().map(|r| r[2].parse().unwrap()).collect()
}

#[test]
fn steady_defaults_sum_to_one() {
    let tmp = TempDir::new().unwrap();
    let o = hident(tmp.path(), None, &["steady", "--check"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let p = populations(tmp.path());
    assert_eq!(p.len(), 4);
    assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn steady_without_feedback_is_a_product_of_two_level_equilibria() {
    let tmp = TempDir::new().unwrap();
    let o = hident(tmp.path(), Some("[model]\ncoupling_gamma_x = 1.0\ncoupling_gamma_y = 1.0\n"), &["steady"]);
    assert!(o.status.success(), "{}", stderr(&o));
    // rate equations for a qubit between a hot and a cold bath of unit coupling
    let occ = |b: f64| 1.0 / (b.exp() - 1.0);
    let excited = |bh: f64, bc: f64| {
        let up = occ(bh) + occ(bc);
        up / (2.0 * up + 2.0)
    };
    let px = excited(1.0, 2.0);
    let py = excited(0.5, 4.0);
    let expected = [(1.0 - px) * (1.0 - py), (1.0 - px) * py, px * (1.0 - py), px * py];
    for (got, want) in populations(tmp.path()).iter().zip(expected) {
        assert!((got - want).abs() < 1e-10, "{got} vs {want}");
    }
}

#[test]
fn malformed_config_names_the_key() {
    let tmp = TempDir::new().unwrap();
    let o = hident(tmp.path(), Some("[model]\ncoupling_gama_x = 0.5\n"), &["steady"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("coupling_gama_x"), "{}", stderr(&o));
    let o = hident(tmp.path(), Some("[run]\nn_trajectories = 0\n"), &["sample"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("run.n_trajectories"));
}

#[test]
fn single_trajectory_ledger_is_deterministic() {
    let tmp = TempDir::new().unwrap();
    let cfg = "[run]\nn_trajectories = 1\nseed = 99\n";
    let a = hident(tmp.path(), Some(cfg), &["sample", "--out", "a"]);
    let b = hident(tmp.path(), Some(cfg), &["sample", "--out", "b"]);
    assert!(a.status.success(), "{}", stderr(&a));
    assert!(b.status.success());
    let (header, rows) = read_csv(&tmp.path().join("a/ledger.csv"));
    assert_eq!(header, LEDGER_HEADER);
    assert_eq!(rows.len(), 1);
    assert_eq!(
        std::fs::read(tmp.path().join("a/ledger.csv")).unwrap(),
        std::fs::read(tmp.path().join("b/ledger.csv")).unwrap()
    );
    assert!(stdout(&a).contains("no stderr"));
}

#[test]
fn outputs_do_not_depend_on_thread_count() {
    let tmp = TempDir::new().unwrap();
    let cfg = "[model]\ncoupling_gamma_x = 0.5\ncoupling_gamma_y = 0.5\n[run]\nn_trajectories = 1500\nseed = 5\n";
    assert!(hident(tmp.path(), Some(cfg), &["sample", "--threads", "1", "--out", "one"]).status.success());
    assert!(hident(tmp.path(), Some(cfg), &["sample", "--threads", "3", "--out", "three"]).status.success());
    for name in ["ledger.csv", "histogram.csv", "summary.csv"] {
        assert_eq!(
            std::fs::read(tmp.path().join("one").join(name)).unwrap(),
            std::fs::read(tmp.path().join("three").join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn perfect_feedback_signs_and_hidden_lattice() {
    let tmp = TempDir::new().unwrap();
    let o = hident(tmp.path(), Some("[run]\nn_trajectories = 20000\nseed = 3\n"), &["sample", "--check"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(summary_value(&text, "<ds_env> = ") < 0.0);
    assert!(summary_value(&text, "<dsigma_y> = ") > 0.0);
    let ift = summary_value(&text, "<exp_minus_dsigma> = ");
    assert!((ift - 1.0).abs() < 0.1, "{ift}");

    // hidden entropies are sums of ±0.5 and ±4, so multiples of 0.5
    let (_, rows) = read_csv(&tmp.path().join("out/ledger.csv"));
    let col = LEDGER_HEADER.iter().position(|h| *h == "dsigma_y").unwrap();
    for r in &rows {
        let x: f64 = r[col].parse().unwrap();
        assert!((2.0 * x - (2.0 * x).round()).abs() < 1e-9, "{x}");
    }
    let (header, bins) = read_csv(&tmp.path().join("out/histogram.csv"));
    assert_eq!(header, HISTOGRAM_HEADER);
    assert_eq!(bins.len(), 96);
    for b in &bins {
        let lo: f64 = b[0].parse().unwrap();
        let count: u64 = b[3].parse().unwrap();
        if count > 0 {
            assert_eq!((2.0 * lo).fract(), 0.0, "hidden mass in bin starting at {lo}");
        }
    }
}

#[test]
fn sweep_writes_one_row_per_point() {
    let tmp = TempDir::new().unwrap();
    let cfg = "[run]\nn_trajectories = 300\n[sweep]\ngamma_x = [0.0, 1.0]\ngamma_y = [0.0, 0.5]\n";
    let o = hident(tmp.path(), Some(cfg), &["sweep"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let (header, rows) = read_csv(&tmp.path().join("out/sweep.csv"));
    assert_eq!(header, SWEEP_HEADER);
    let points: Vec<(String, String)> = rows.iter().map(|r| (r[0].clone(), r[1].clone())).collect();
    assert_eq!(points, [("0", "0"), ("0", "0.5"), ("1", "0"), ("1", "0.5")].map(|(a, b)| (a.into(), b.into())));

    let diag = "[run]\nn_trajectories = 300\n[sweep]\ngamma_x = [0.0, 0.5, 1.0]\ndiagonal = true\n";
    assert!(hident(tmp.path(), Some(diag), &["sweep", "--out", "d"]).status.success());
    let (_, rows) = read_csv(&tmp.path().join("d/sweep.csv"));
    assert!(rows.iter().all(|r| r[0] == r[1]));
    assert_eq!(rows.len(), 3);
}

#[test]
fn empty_sweep_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(hident(tmp.path(), None, &["sweep"]).status.code(), Some(1));
    let o = hident(tmp.path(), Some("[sweep]\ngamma_x = []\ngamma_y = [0.5]\n"), &["sweep"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn observe_matches_forward_kernel() {
    let tmp = TempDir::new().unwrap();
    let cfg = "[model]\ncoupling_gamma_x = 0.5\ncoupling_gamma_y = 0.5\n[run]\ngrid_dt = 0.05\n";
    let o = hident(tmp.path(), Some(cfg), &["observe", "--trajectory", REFERENCE_RECORD, "--svg"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let logp = summary_value(&stdout(&o), "log P(record) = ");
    let m = build_demon_model(&DemonParams::default().with_gammas(0.5, 0.5)).unwrap();
    let v = VisibleTrajectory::new(
        0,
        vec![JumpEvent::new(4, 0.9), JumpEvent::new(1, 1.5), JumpEvent::new(4, 2.4)],
        3,
        3.0,
    );
    let expected = forward_kernel(&m, &v).unwrap();
    assert!((logp - expected).abs() < 1e-8, "{logp} vs {expected}");
    let (header, rows) = read_csv(&tmp.path().join("out/series.csv"));
    assert_eq!(header, SERIES_HEADER);
    assert!(rows.len() > 60);
    let svg = std::fs::read_to_string(tmp.path().join("out/series.svg")).unwrap();
    assert!(svg.starts_with("<svg"));
}

#[test]
fn driven_demon_develops_coherence() {
    let tmp = TempDir::new().unwrap();
    let cfg = "[model]\ncoupling_gamma_x = 0.5\ncoupling_gamma_y = 0.5\ndrive = true\n[run]\ngrid_dt = 0.05\n";
    let o = hident(tmp.path(), Some(cfg), &["observe", "--trajectory", REFERENCE_RECORD]);
    assert!(o.status.success(), "{}", stderr(&o));
    let (header, rows) = read_csv(&tmp.path().join("out/series.csv"));
    let expected: Vec<&str> = SERIES_HEADER.iter().chain(BLOCH_HEADER.iter()).copied().collect();
    assert_eq!(header, expected);
    let im = header.iter().position(|h| h == "ImRhoY01").unwrap();
    let max_im = rows.iter().map(|r| r[im].parse::<f64>().unwrap().abs()).fold(0.0, f64::max);
    assert!(max_im > 1e-3, "{max_im}");
}

#[test]
fn observe_rejects_a_jump_after_the_horizon() {
    let tmp = TempDir::new().unwrap();
    let o = hident(tmp.path(), None, &["observe", "--trajectory", "g0; 4@3.5; e0; T=3"]);
    assert_eq!(o.status.code(), Some(2));
    let o = hident(tmp.path(), None, &["observe", "--trajectory", "q0; e0; T=3"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn ift_reports_and_checks() {
    let tmp = TempDir::new().unwrap();
    let cfg = "[model]\ncoupling_gamma_x = 0.5\ncoupling_gamma_y = 0.5\n[run]\nn_trajectories = 100\n";
    let o = hident(tmp.path(), Some(cfg), &["ift"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("<exp_minus_dsigma> = "));
    assert!(!stdout(&o).contains("ds_tot"));

    let o = hident(tmp.path(), Some(cfg), &["ift", "--all-visible"]);
    assert!(stdout(&o).contains("<exp_minus_ds_tot> = "));
    let (header, rows) = read_csv(&tmp.path().join("out/ift.csv"));
    assert_eq!(header, ["quantity", "mean", "stderr", "n"]);
    assert_eq!(rows.len(), 2);

    // a single trajectory cannot support a statistical claim
    let one = "[run]\nn_trajectories = 1\n";
    assert_eq!(hident(tmp.path(), Some(one), &["ift", "--check"]).status.code(), Some(3));
}
