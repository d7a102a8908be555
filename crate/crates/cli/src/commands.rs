//! Subcommand implementations. Each writes its CSV artifacts under the
//! output directory and a human-readable summary to `out`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use hidden_entropy::ensemble::{Ensemble, EnsembleError};
use hidden_entropy::entropy::{
    hidden_entropy, ift_estimate, second_law_check, write_ledger_csv, EntropyError, EntropyLedger, Estimate,
    IftQuantity,
};
use hidden_entropy::model::build_demon_model;
use hidden_entropy::unravel::{conditioned_state_series, steady_state, trajectory_seed, UnravelError};
use hidden_entropy::{DemonParams, LindbladModel, ModelError};
use thiserror::Error;

use crate::config::{ConfigError, RunConfig};
use crate::histogram::{write_histograms, Histogram};
use crate::svg::{line_plot, Series};
use crate::trajectory_spec::{parse_trajectory, SpecError};

/// Standard errors used by `--check`.
pub const CHECK_Z: f64 = 3.0;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("trajectory spec: {0}")]
    Spec(#[from] SpecError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Unravel(#[from] UnravelError),
    #[error(transparent)]
    Entropy(#[from] EntropyError),
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("check failed: {0}")]
    Check(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Spec(_) => 1,
            CliError::Check(_) => 3,
            _ => 2,
        }
    }
}

/// Switches shared by all subcommands.
#[derive(Clone, Debug, Default)]
pub struct Options {
    pub all_visible: bool,
    pub check: bool,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_owned(),
        source,
    }
}

fn create(dir: &Path, name: &str) -> Result<(PathBuf, BufWriter<File>), CliError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let path = dir.join(name);
    let file = File::create(&path).map_err(io_err(&path))?;
    Ok((path, BufWriter::new(file)))
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> CliError + '_ {
    move |e| CliError::Io {
        path: path.to_owned(),
        source: e.into(),
    }
}

fn model_for(p: &DemonParams, opts: &Options) -> Result<LindbladModel, CliError> {
    let m = build_demon_model(p)?;
    Ok(if opts.all_visible { m.with_all_visible() } else { m })
}

fn say(out: &mut dyn Write, line: String) -> Result<(), CliError> {
    writeln!(out, "{line}").map_err(io_err(Path::new("<stdout>")))
}

/// Mean with a standard error when there are at least two samples.
fn stats(xs: &[f64]) -> (f64, Option<f64>) {
    match Estimate::from_samples(xs) {
        Ok(e) => (e.mean, Some(e.stderr)),
        Err(_) => (xs.iter().sum::<f64>() / xs.len() as f64, None),
    }
}

fn fmt_stat((mean, se): (f64, Option<f64>)) -> String {
    match se {
        Some(se) => format!("{mean:.6} ± {se:.6}"),
        None => format!("{mean:.6} (no stderr, n < 2)"),
    }
}

fn write_stats_csv(path: &Path, w: impl Write, rows: &[(&str, (f64, Option<f64>))], n: usize) -> Result<(), CliError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["quantity", "mean", "stderr", "n"]).map_err(csv_err(path))?;
    for (name, (mean, se)) in rows {
        out.write_record([
            name.to_string(),
            mean.to_string(),
            se.map(|s| s.to_string()).unwrap_or_default(),
            n.to_string(),
        ])
        .map_err(csv_err(path))?;
    }
    out.flush().map_err(io_err(path))
}

pub fn cmd_steady(cfg: &RunConfig, opts: &Options, dir: &Path, out: &mut dyn Write) -> Result<(), CliError> {
    let m = model_for(&cfg.model, opts)?;
    let ss = steady_state(&m)?;
    let (path, w) = create(dir, "steady.csv")?;
    let mut csv_out = csv::Writer::from_writer(w);
    csv_out.write_record(["state", "label", "population"]).map_err(csv_err(&path))?;
    for (i, (label, p)) in m.basis_labels().iter().zip(&ss.populations).enumerate() {
        csv_out
            .write_record([i.to_string(), label.clone(), p.to_string()])
            .map_err(csv_err(&path))?;
        say(out, format!("{label}: {p:.12}"))?;
    }
    csv_out.flush().map_err(io_err(&path))?;
    say(out, format!("null-space gap: {:.3e}", ss.gap))?;
    if opts.check {
        let total: f64 = ss.populations.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(CliError::Check(format!("populations sum to {total}")));
        }
    }
    Ok(())
}

fn run_ledgers(cfg: &RunConfig, p: &DemonParams, seed: u64, opts: &Options) -> Result<Vec<EntropyLedger>, CliError> {
    let m = model_for(p, opts)?;
    let ens = Ensemble::new(&m, cfg.run.horizon)?;
    Ok(ens.ledgers(seed, cfg.run.n_trajectories, cfg.run.threads.count())?)
}

fn column(ls: &[EntropyLedger], f: impl Fn(&EntropyLedger) -> f64) -> Vec<f64> {
    ls.iter().map(f).collect()
}

fn ift_check(name: &str, xs: &[f64]) -> Result<(), CliError> {
    let (mean, se) = stats(xs);
    match se {
        Some(se) if (mean - 1.0).abs() < CHECK_Z * se => Ok(()),
        Some(se) => Err(CliError::Check(format!("<e^-{name}> = {mean} ± {se} is not within {CHECK_Z} stderr of 1"))),
        None => Err(CliError::Check(format!("<e^-{name}> needs at least two trajectories"))),
    }
}

pub fn cmd_sample(cfg: &RunConfig, opts: &Options, dir: &Path, out: &mut dyn Write) -> Result<(), CliError> {
    let ls = run_ledgers(cfg, &cfg.model, cfg.run.seed, opts)?;
    let (path, w) = create(dir, "ledger.csv")?;
    write_ledger_csv(w, &ls)?;
    log::info!("wrote {}", path.display());

    let env = column(&ls, |l| l.ds_env_visible);
    let hidden = column(&ls, |l| l.dsigma_y);
    let sys = column(&ls, |l| l.ds_sys);
    let total = column(&ls, |l| l.dsigma);
    let excess = column(&ls, |l| l.ds_env_visible + l.dsigma_y);
    let ift: Vec<f64> = total.iter().map(|x| (-x).exp()).collect();

    let hists = [&env, &hidden, &total].map(|xs| {
        let mut h = Histogram::new(&cfg.run.histogram);
        xs.iter().for_each(|&x| h.add(x));
        h
    });
    let (hpath, w) = create(dir, "histogram.csv")?;
    write_histograms(w, &hists[0], &hists[1], &hists[2]).map_err(csv_err(&hpath))?;

    let rows = [
        ("ds_env", stats(&env)),
        ("dsigma_y", stats(&hidden)),
        ("ds_sys", stats(&sys)),
        ("dsigma", stats(&total)),
        ("ds_env_plus_dsigma_y", stats(&excess)),
        ("exp_minus_dsigma", stats(&ift)),
    ];
    let (spath, w) = create(dir, "summary.csv")?;
    write_stats_csv(&spath, w, &rows, ls.len())?;
    say(out, format!("trajectories: {}", ls.len()))?;
    for (name, s) in &rows {
        say(out, format!("<{name}> = {}", fmt_stat(*s)))?;
    }
    let outside: u64 = hists.iter().map(|h| h.underflow + h.overflow).sum();
    if outside > 0 {
        say(out, format!("{outside} histogram entries fell outside the binned range"))?;
    }
    if opts.check {
        ift_check("dsigma", &ift)?;
    }
    Ok(())
}

pub const SWEEP_HEADER: [&str; 14] = [
    "gamma_x",
    "gamma_y",
    "n",
    "ds_env_mean",
    "ds_env_stderr",
    "dsigma_y_mean",
    "dsigma_y_stderr",
    "dsigma_mean",
    "dsigma_stderr",
    "env_plus_hidden_mean",
    "env_plus_hidden_stderr",
    "ift_mean",
    "ift_stderr",
    "second_law_ok",
];

pub fn cmd_sweep(cfg: &RunConfig, opts: &Options, dir: &Path, out: &mut dyn Write) -> Result<(), CliError> {
    let points = cfg.sweep.as_ref().map(|s| s.points()).unwrap_or_default();
    if points.is_empty() {
        return Err(ConfigError::Invalid {
            key: "sweep",
            reason: "sweep grid is empty".into(),
        }
        .into());
    }
    if cfg.run.n_trajectories < 2 {
        return Err(ConfigError::Invalid {
            key: "run.n_trajectories",
            reason: "a sweep needs at least 2 trajectories per point".into(),
        }
        .into());
    }
    let (path, w) = create(dir, "sweep.csv")?;
    let mut csv_out = csv::Writer::from_writer(w);
    csv_out.write_record(SWEEP_HEADER).map_err(csv_err(&path))?;
    let mut violations = Vec::new();
    for (i, &(gx, gy)) in points.iter().enumerate() {
        let ls = run_ledgers(cfg, &cfg.at(gx, gy), trajectory_seed(cfg.run.seed, i as u64), opts)?;
        let rep = second_law_check(&ls)?;
        let ift = ift_estimate(&ls, IftQuantity::Dsigma)?;
        if rep.env_plus_hidden_violated {
            violations.push((gx, gy));
        }
        let rec = [
            gx,
            gy,
            ls.len() as f64,
            rep.ds_env.mean,
            rep.ds_env.stderr,
            rep.dsigma_y.mean,
            rep.dsigma_y.stderr,
            rep.dsigma.mean,
            rep.dsigma.stderr,
            rep.env_plus_hidden.mean,
            rep.env_plus_hidden.stderr,
            ift.mean,
            ift.stderr,
        ];
        let mut fields: Vec<String> = rec.iter().map(|x| x.to_string()).collect();
        fields.push((!rep.env_plus_hidden_violated).to_string());
        csv_out.write_record(&fields).map_err(csv_err(&path))?;
        say(
            out,
            format!(
                "({gx}, {gy}): <ds_env> = {:.5} ± {:.5}, <dsigma_y> = {:.5} ± {:.5}, <e^-dsigma> = {:.4} ± {:.4}",
                rep.ds_env.mean, rep.ds_env.stderr, rep.dsigma_y.mean, rep.dsigma_y.stderr, ift.mean, ift.stderr
            ),
        )?;
    }
    csv_out.flush().map_err(io_err(&path))?;
    if opts.check && !violations.is_empty() {
        return Err(CliError::Check(format!(
            "<ds_env + dsigma_y> below -{CHECK_Z} stderr at {violations:?}"
        )));
    }
    Ok(())
}

pub fn cmd_observe(
    cfg: &RunConfig,
    opts: &Options,
    spec: &str,
    svg: bool,
    dir: &Path,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let m = model_for(&cfg.model, opts)?;
    let v = parse_trajectory(spec, &m)?;
    v.check(&m)?;
    let series = conditioned_state_series(&m, &v, cfg.run.grid_dt)?;
    let (path, w) = create(dir, "series.csv")?;
    series.write_csv(w, cfg.model.drive)?;
    log::info!("wrote {}", path.display());
    say(out, format!("log P(record) = {:.10}", series.record_log_probability()))?;
    match hidden_entropy(&m, &v) {
        Ok(h) => say(out, format!("dsigma_y = {h:.10}"))?,
        Err(e) => say(out, format!("dsigma_y unavailable: {e}"))?,
    }
    if svg {
        let pick = |f: &dyn Fn(&hidden_entropy::unravel::SeriesRow) -> f64| {
            series.rows.iter().map(|r| (r.t, f(r))).collect::<Vec<_>>()
        };
        let mut lines = vec![
            Series {
                label: "pY0",
                points: pick(&|r| r.rho_y[(0, 0)].re),
            },
            Series {
                label: "pY1",
                points: pick(&|r| r.rho_y[(1, 1)].re),
            },
        ];
        if cfg.model.drive {
            lines.push(Series {
                label: "Re rhoY01",
                points: pick(&|r| r.rho_y[(0, 1)].re),
            });
            lines.push(Series {
                label: "Im rhoY01",
                points: pick(&|r| r.rho_y[(0, 1)].im),
            });
        }
        let (spath, mut w) = create(dir, "series.svg")?;
        w.write_all(line_plot("conditioned demon state", "t", &lines).as_bytes())
            .and_then(|_| w.flush())
            .map_err(io_err(&spath))?;
    }
    Ok(())
}

pub fn cmd_ift(cfg: &RunConfig, opts: &Options, dir: &Path, out: &mut dyn Write) -> Result<(), CliError> {
    let ls = run_ledgers(cfg, &cfg.model, cfg.run.seed, opts)?;
    let dsigma: Vec<f64> = ls.iter().map(|l| (-l.dsigma).exp()).collect();
    let mut rows = vec![("exp_minus_dsigma", stats(&dsigma))];
    let tot: Option<Vec<f64>> = if opts.all_visible {
        Some(ls.iter().filter_map(|l| l.ds_tot()).map(|x| (-x).exp()).collect())
    } else {
        None
    };
    if let Some(t) = &tot {
        rows.push(("exp_minus_ds_tot", stats(t)));
    }
    let (path, w) = create(dir, "ift.csv")?;
    write_stats_csv(&path, w, &rows, ls.len())?;
    say(out, format!("trajectories: {}", ls.len()))?;
    for (name, s) in &rows {
        say(out, format!("<{name}> = {}", fmt_stat(*s)))?;
    }
    if opts.check {
        ift_check("dsigma", &dsigma)?;
        if let Some(t) = &tot {
            ift_check("ds_tot", t)?;
        }
    }
    Ok(())
}
