//! Subcommand implementations. Each returns after printing its results and
//! writing any requested artifacts; numbers depend only on arguments, config
//! bytes and input files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::{json, Value};
use swproj_core::amortized::{amortization_gap_experiment, GapConfig, ModelKind};
use swproj_core::ot::{chamfer, exact_wasserstein, projected_wasserstein, WassersteinOrder};
use swproj_core::pointcloud::{load_cloud, save_cloud, synth_dataset, synth_pairs, PointCloud, ShapeKind};
use swproj_core::rng::{derive_seed, rng_from_seed};
use swproj_core::sliced::{max_sw, sw, vdsw, MonteCarloConfig, SliceOptConfig, SlicedResult};
use swproj_core::sphere::UnitDirection;
use swproj_core::training::{evaluate, train_autoencoder, Autoencoder, LossKind, Metrics, TrainConfig};

use crate::config::KeyValues;
use crate::report::{config_value, row, RunReport};
use crate::{CliError, DistArgs, EvalArgs, GapArgs, GenArgs, TrainArgs};

type CmdResult = Result<(), CliError>;

/// Seed stream for synthetic data, kept apart from the library's streams.
const STREAM_DATA: u64 = 100;

const DEFAULT_PROJECTIONS: usize = 100;
const DEFAULT_STEPS: usize = 50;
const DEFAULT_ETA_S: f64 = 1e-4;
const DEFAULT_KAPPA: f64 = 1.0;

fn elapsed_ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

fn create_dir(dir: &Path) -> CmdResult {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn display(path: &Path) -> String {
    path.display().to_string()
}

/// All `.xyz` files of `dir`, loaded in file-name order.
fn load_dir(dir: &Path) -> Result<Vec<PointCloud>, CliError> {
    let entries = std::fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| CliError::io(dir, e))?.path();
        if path.extension().is_some_and(|x| x == "xyz") {
            paths.push(path);
        }
    }
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::io(
            dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "no .xyz files"),
        ));
    }
    let clouds: Vec<PointCloud> = paths.iter().map(load_cloud).collect::<Result<_, _>>()?;
    let (m, d) = (clouds[0].m(), clouds[0].d());
    if let Some((path, c)) = paths.iter().zip(&clouds).find(|(_, c)| c.m() != m || c.d() != d) {
        return Err(CliError::usage(format!(
            "{}: cloud is {}x{}, expected {m}x{d} like the first file",
            path.display(),
            c.m(),
            c.d()
        )));
    }
    Ok(clouds)
}

fn metrics_rows(report: &mut RunReport, m: &Metrics) {
    for (name, value) in [("cd", m.cd), ("sw", m.sw), ("emd", m.emd)] {
        report.metrics.push(row([("name", json!(name)), ("value", json!(value))]));
    }
}

fn print_metrics(m: &Metrics) {
    println!("cd {}", m.cd);
    println!("sw {}", m.sw);
    println!("emd {}", m.emd);
}

pub fn gen(a: &GenArgs, echo: Vec<String>) -> CmdResult {
    let kind: ShapeKind = a.kind.parse()?;
    let clouds = synth_dataset(&[kind], a.n, a.m, a.d, a.seed)?;
    create_dir(&a.out_dir)?;
    let mut report = RunReport::new(
        echo,
        json!({"kind": kind.name(), "m": a.m, "d": a.d, "n": a.n, "out_dir": display(&a.out_dir)}),
        a.seed,
    );
    for (i, cloud) in clouds.iter().enumerate() {
        let path = a.out_dir.join(format!("{}-{i:04}.xyz", kind.name()));
        save_cloud(cloud, &path).map_err(|e| match e {
            swproj_core::Error::Io(io) => CliError::io(&path, io),
            other => other.into(),
        })?;
        println!("{}", path.display());
        report.artifacts.push(display(&path));
    }
    if let Some(out) = &a.out {
        report.write(out)?;
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Metric {
    Cd,
    Emd,
    Sw,
    MaxSw,
    Vdsw,
    Pw,
}

impl Metric {
    fn parse(s: &str) -> Result<Self, CliError> {
        Ok(match s {
            "cd" => Self::Cd,
            "emd" => Self::Emd,
            "sw" => Self::Sw,
            "maxsw" => Self::MaxSw,
            "vdsw" => Self::Vdsw,
            "pw" => Self::Pw,
            _ => {
                return Err(CliError::usage(format!(
                    "unknown metric {s:?}; expected one of cd, emd, sw, maxsw, vdsw, pw"
                )))
            }
        })
    }

    /// Flags each metric accepts beyond the two clouds.
    fn accepts(self, flag: &str) -> bool {
        match flag {
            "--p" => self != Self::Cd,
            "--L" => matches!(self, Self::Sw | Self::Vdsw),
            "--T" | "--eta-s" => matches!(self, Self::MaxSw | Self::Vdsw),
            "--kappa" => self == Self::Vdsw,
            "--theta" => self == Self::Pw,
            "--seed" => matches!(self, Self::Sw | Self::MaxSw | Self::Vdsw),
            _ => false,
        }
    }
}

fn parse_theta(text: &str) -> Result<UnitDirection, CliError> {
    let v: Vec<f64> = text
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::usage(format!("--theta: {e}")))?;
    Ok(UnitDirection::normalized(&v)?)
}

fn format_direction(dir: &UnitDirection) -> String {
    dir.as_slice().iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

pub fn dist(a: &DistArgs, echo: Vec<String>) -> CmdResult {
    let metric = Metric::parse(&a.metric)?;
    let given = [
        ("--p", a.p.is_some()),
        ("--L", a.projections.is_some()),
        ("--T", a.steps.is_some()),
        ("--eta-s", a.eta_s.is_some()),
        ("--kappa", a.kappa.is_some()),
        ("--theta", a.theta.is_some()),
        ("--seed", a.seed.is_some()),
    ];
    for (flag, present) in given {
        if present && !metric.accepts(flag) {
            return Err(CliError::usage(format!("{flag} cannot be used with --metric {}", a.metric)));
        }
    }
    if metric == Metric::Pw && a.theta.is_none() {
        return Err(CliError::usage("--metric pw requires --theta"));
    }

    let x = load_cloud(&a.source)?;
    let y = load_cloud(&a.target)?;
    let p = WassersteinOrder::new(a.p.unwrap_or(2.0))?;
    let seed = a.seed.unwrap_or(0);
    let projections = a.projections.unwrap_or(DEFAULT_PROJECTIONS);
    let kappa = a.kappa.unwrap_or(DEFAULT_KAPPA);
    let slice_cfg = || SliceOptConfig::new(a.steps.unwrap_or(DEFAULT_STEPS), a.eta_s.unwrap_or(DEFAULT_ETA_S));

    let mut config = BTreeMap::new();
    config.insert("metric".to_string(), json!(a.metric));
    config.insert("source".to_string(), json!(display(&a.source)));
    config.insert("target".to_string(), json!(display(&a.target)));
    if metric.accepts("--p") {
        config.insert("p".to_string(), json!(p.get()));
    }
    if metric.accepts("--L") {
        config.insert("L".to_string(), json!(projections));
    }
    if metric.accepts("--T") {
        config.insert("T".to_string(), json!(a.steps.unwrap_or(DEFAULT_STEPS)));
        config.insert("eta_s".to_string(), json!(a.eta_s.unwrap_or(DEFAULT_ETA_S)));
    }
    if metric == Metric::Vdsw {
        config.insert("kappa".to_string(), json!(kappa));
    }

    let (value, direction): (f64, Option<UnitDirection>) = match metric {
        Metric::Cd => (chamfer(&x, &y)?, None),
        Metric::Emd => (exact_wasserstein(&x, &y, p)?, None),
        Metric::Sw => (sw(&x, &y, p, &MonteCarloConfig::new(projections, seed)?)?, None),
        Metric::Pw => {
            let theta = parse_theta(a.theta.as_deref().expect("checked above"))?;
            config.insert("theta".to_string(), json!(theta.as_slice()));
            (projected_wasserstein(&x, &y, &theta, p)?, None)
        }
        Metric::MaxSw => {
            let SlicedResult { value, direction, .. } = max_sw(&x, &y, p, &slice_cfg()?, &mut rng_from_seed(seed))?;
            (value, Some(direction))
        }
        Metric::Vdsw => {
            let mc = MonteCarloConfig::new(projections, derive_seed(seed, &[1]))?;
            let SlicedResult { value, direction, .. } =
                vdsw(&x, &y, p, kappa, &mc, &slice_cfg()?, &mut rng_from_seed(seed))?;
            (value, Some(direction))
        }
    };

    println!("value {value}");
    let mut metric_row = row([("metric", json!(a.metric)), ("value", json!(value))]);
    if let Some(dir) = &direction {
        println!("direction {}", format_direction(dir));
        metric_row.insert("direction".to_string(), json!(dir.as_slice()));
    }
    if let Some(out) = &a.out {
        let mut report = RunReport::new(echo, json!(config), seed);
        report.metrics.push(metric_row);
        report.write(out)?;
    }
    Ok(())
}

/// Where training or gap data comes from, as resolved from the config.
fn read_shapes(kv: &mut KeyValues) -> Result<Vec<ShapeKind>, CliError> {
    Ok(kv.take_list::<ShapeKind>("shapes")?.unwrap_or_else(|| ShapeKind::ALL.to_vec()))
}

fn parse_train_config(text: &str) -> Result<(TrainConfig, Value, Vec<PointCloud>), CliError> {
    let mut kv = KeyValues::parse(text)?;
    let mut cfg = TrainConfig::default();
    kv.take_into::<LossKind>("loss", &mut cfg.loss)?;
    kv.take_into("batch_size", &mut cfg.batch_size)?;
    kv.take_into("epochs", &mut cfg.epochs)?;
    kv.take_into("lr", &mut cfg.lr)?;
    kv.take_into("momentum", &mut cfg.momentum)?;
    kv.take_into("weight_decay", &mut cfg.weight_decay)?;
    kv.take_into("slice_lr", &mut cfg.slice_lr)?;
    kv.take_into("projections", &mut cfg.projections)?;
    kv.take_into("slice_steps", &mut cfg.slice_steps)?;
    kv.take_into("kappa", &mut cfg.kappa)?;
    kv.take_into("p", &mut cfg.p)?;
    kv.take_into("hidden", &mut cfg.hidden)?;
    kv.take_into::<ModelKind>("amortized_kind", &mut cfg.amortized_kind)?;
    kv.take_into("model_lr", &mut cfg.model_lr)?;
    kv.take_into("d_k", &mut cfg.d_k)?;
    kv.take_into("k_proj", &mut cfg.k_proj)?;
    kv.take_into("warm_start", &mut cfg.warm_start)?;
    kv.take_into("eval_every", &mut cfg.eval_every)?;
    kv.take_into("eval_projections", &mut cfg.eval_projections)?;
    kv.take_into("seed", &mut cfg.seed)?;

    let data_dir: Option<PathBuf> = kv.take("data_dir")?;
    let clouds: Option<usize> = kv.take("clouds")?;
    let m: Option<usize> = kv.take("m")?;
    let d: Option<usize> = kv.take("d")?;
    let shapes = kv.take_list::<ShapeKind>("shapes")?;
    kv.finish()?;
    cfg.validate()?;

    let (data, data_cfg) = match data_dir {
        Some(dir) => {
            if clouds.is_some() || m.is_some() || d.is_some() || shapes.is_some() {
                return Err(CliError::usage("data_dir cannot be combined with clouds, m, d or shapes"));
            }
            let data = load_dir(&dir)?;
            (data, json!({"data_dir": display(&dir)}))
        }
        None => {
            let shapes = shapes.unwrap_or_else(|| ShapeKind::ALL.to_vec());
            let (n, m, d) = (clouds.unwrap_or(256), m.unwrap_or(64), d.unwrap_or(3));
            let data = synth_dataset(&shapes, n, m, d, derive_seed(cfg.seed, &[STREAM_DATA]))?;
            let names: Vec<&str> = shapes.iter().map(|s| s.name()).collect();
            (data, json!({"clouds": n, "m": m, "d": d, "shapes": names}))
        }
    };
    Ok((cfg, data_cfg, data))
}

pub fn train(a: &TrainArgs, echo: Vec<String>, timings: bool) -> CmdResult {
    let (cfg, data_cfg, data) = parse_train_config(&read_text(&a.config)?)?;
    create_dir(&a.out_dir)?;
    let start = Instant::now();
    let outcome = train_autoencoder(&data, &cfg)?;
    let train_ms = elapsed_ms(start);

    let mut report = RunReport::new(echo, json!({"train": config_value(&cfg), "data": data_cfg}), cfg.seed);

    let ae_path = a.out_dir.join("autoencoder.ckpt");
    outcome.autoencoder.save(&ae_path)?;
    report.artifacts.push(display(&ae_path));
    if let Some(model) = &outcome.amortized {
        let path = a.out_dir.join("amortized.ckpt");
        model.save(&path)?;
        report.artifacts.push(display(&path));
    }

    let history_path = a.out_dir.join("history.jsonl");
    let mut history = String::new();
    for rec in &outcome.history {
        let mut v = serde_json::to_value(rec).map_err(|e| CliError::usage(e.to_string()))?;
        if !timings {
            if let Value::Object(map) = &mut v {
                map.remove("wall_ms");
            }
        }
        history.push_str(&serde_json::to_string(&v).map_err(|e| CliError::usage(e.to_string()))?);
        history.push('\n');
    }
    std::fs::write(&history_path, history).map_err(|e| CliError::io(&history_path, e))?;
    report.artifacts.push(display(&history_path));

    if let Some(last) = outcome.history.last() {
        println!("epochs {}", outcome.history.len());
        println!("train_objective {}", last.train_objective);
        report.metrics.push(row([
            ("name", json!("train_objective")),
            ("value", json!(last.train_objective)),
        ]));
    }
    if let Some(m) = outcome.history.iter().rev().find_map(|r| r.metrics) {
        print_metrics(&m);
        metrics_rows(&mut report, &m);
    }
    if timings {
        report.timings_ms = Some(BTreeMap::from([("train".to_string(), train_ms)]));
    }
    let report_path = a.out_dir.join("report.json");
    report.artifacts.push(display(&report_path));
    report.write(&report_path)
}

fn parse_gap_config(text: &str) -> Result<(GapConfig, Value, usize, usize, usize, Vec<ShapeKind>), CliError> {
    let mut kv = KeyValues::parse(text)?;
    let mut cfg = GapConfig::default();
    if let Some(kinds) = kv.take_list::<ModelKind>("kinds")? {
        cfg.kinds = kinds;
    }
    if let Some(t_list) = kv.take_list::<usize>("t_list")? {
        cfg.t_list = t_list;
    }
    kv.take_into("kappa", &mut cfg.kappa)?;
    kv.take_into("projections", &mut cfg.projections)?;
    kv.take_into("eta_s", &mut cfg.eta_s)?;
    kv.take_into("model_lr", &mut cfg.model_lr)?;
    kv.take_into("epochs", &mut cfg.epochs)?;
    kv.take_into("batch_size", &mut cfg.batch_size)?;
    kv.take_into("p", &mut cfg.p)?;
    kv.take_into("d_k", &mut cfg.d_k)?;
    kv.take_into("k_proj", &mut cfg.k_proj)?;
    kv.take_into("seed", &mut cfg.seed)?;
    let pairs: usize = kv.take("pairs")?.unwrap_or(200);
    let m: usize = kv.take("m")?.unwrap_or(64);
    let d: usize = kv.take("d")?.unwrap_or(3);
    let shapes = read_shapes(&mut kv)?;
    kv.finish()?;
    cfg.validate()?;
    let names: Vec<&str> = shapes.iter().map(|s| s.name()).collect();
    let config = json!({"gap": config_value(&cfg), "data": {"pairs": pairs, "m": m, "d": d, "shapes": names}});
    Ok((cfg, config, pairs, m, d, shapes))
}

pub fn gap(a: &GapArgs, echo: Vec<String>, timings: bool) -> CmdResult {
    let (cfg, config, n, m, d, shapes) = parse_gap_config(&read_text(&a.config)?)?;
    let pairs = synth_pairs(&shapes, n, m, d, derive_seed(cfg.seed, &[STREAM_DATA]))?;
    let result = amortization_gap_experiment(&pairs, &cfg)?;

    let mut report = RunReport::new(echo, config, cfg.seed);
    let mut times = BTreeMap::new();
    for r in &result.rows {
        match r.initial_objective {
            Some(init) => println!("{} {} (untrained {init})", r.method, r.mean_objective),
            None => println!("{} {}", r.method, r.mean_objective),
        }
        report.metrics.push(row([
            ("method", json!(r.method)),
            ("mean_objective", json!(r.mean_objective)),
            ("initial_objective", json!(r.initial_objective)),
        ]));
        times.insert(r.method.clone(), r.wall_ms);
    }
    if timings {
        report.timings_ms = Some(times);
    }
    match &a.out {
        Some(out) => report.write(out),
        None => Ok(()),
    }
}

pub fn eval(a: &EvalArgs, echo: Vec<String>) -> CmdResult {
    let ae = Autoencoder::load(&a.checkpoint)?;
    let data = load_dir(&a.data_dir)?;
    let mc = MonteCarloConfig::new(a.projections, a.seed)?;
    let m = evaluate(&ae, &data, &mc)?;
    print_metrics(&m);
    if let Some(out) = &a.out {
        let mut report = RunReport::new(
            echo,
            json!({"checkpoint": display(&a.checkpoint), "data_dir": display(&a.data_dir), "L": a.projections}),
            a.seed,
        );
        metrics_rows(&mut report, &m);
        report.write(out)?;
    }
    Ok(())
}
