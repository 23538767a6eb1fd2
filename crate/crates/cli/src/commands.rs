use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::Args;
use vrnet_core::dataset::{
    dense_contrasts, desk_validation_contrasts, featurize as featurize_dataset, generate_structures,
    scenario_subset, solve_all, train_contrasts, Dataset, DatasetConfig, Scenario, Split, SplitSpec,
};
use vrnet_core::homsolve::{Scheme, SolverSettings};
use vrnet_core::microgen::{GenSpec, InclusionKind};
use vrnet_core::surrogate::{
    evaluate, load_checkpoint, save_checkpoint, train as train_model, write_history_csv, EvalReport, Head,
    HillBaseline, NetConfig, Predictor, Surrogate, TrainConfig,
};

use crate::oracle::oracle_suite;
use crate::{CliError, Common};

type Result<T> = std::result::Result<T, CliError>;

fn parse_list<T>(s: &str, one: impl Fn(&str) -> std::result::Result<T, String>) -> std::result::Result<Vec<T>, String> {
    s.split(',').map(str::trim).filter(|t| !t.is_empty()).map(one).collect()
}

/// Accepts `train`, `desk`, `dense`, or a comma list of numbers and `a/b` fractions.
fn parse_contrasts(s: &str) -> std::result::Result<Vec<f64>, String> {
    match s {
        "train" => return Ok(train_contrasts()),
        "desk" => return Ok(desk_validation_contrasts()),
        "dense" => return Ok(dense_contrasts()),
        _ => {}
    }
    parse_list(s, |t| {
        let num = |x: &str| x.trim().parse::<f64>().map_err(|_| format!("bad contrast {t:?}"));
        match t.split_once('/') {
            Some((a, b)) => Ok(num(a)? / num(b)?),
            None => num(t),
        }
    })
}

fn parse_kinds(s: &str) -> std::result::Result<Vec<InclusionKind>, String> {
    parse_list(s, |t| {
        serde_json::from_value(serde_json::Value::String(t.to_lowercase())).map_err(|_| format!("unknown inclusion kind {t:?}"))
    })
}

fn parse_widths(s: &str) -> std::result::Result<Vec<usize>, String> {
    parse_list(s, |t| t.parse().map_err(|_| format!("bad layer width {t:?}")))
}

fn parse_scheme(s: &str) -> std::result::Result<Scheme, String> {
    serde_json::from_value(serde_json::Value::String(s.into())).map_err(|_| format!("unknown scheme {s:?}"))
}

#[derive(Args, Debug)]
pub struct GenArgs {
    #[arg(long, default_value_t = 2)]
    dim: usize,
    /// Voxels per side.
    #[arg(long, default_value_t = 64)]
    res: usize,
    /// Number of training structures.
    #[arg(long = "train", default_value_t = 500)]
    n_train: usize,
    /// Number of validation structures.
    #[arg(long = "val", default_value_t = 100)]
    n_val: usize,
    /// Training inclusion kinds, comma separated.
    #[arg(long)]
    kinds: Option<String>,
    #[arg(long)]
    val_kinds: Option<String>,
    #[arg(long, default_value_t = 0.18)]
    vf_min: f64,
    #[arg(long, default_value_t = 0.84)]
    vf_max: f64,
    #[arg(long)]
    size_min: Option<f64>,
    #[arg(long)]
    size_max: Option<f64>,
    /// Reject placements that intersect earlier inclusions.
    #[arg(long)]
    no_overlap: bool,
    /// `train`, `desk`, `dense` or a comma list such as `1/10,2,5`.
    #[arg(long, default_value = "train")]
    train_contrasts: String,
    #[arg(long, default_value = "desk")]
    val_contrasts: String,
    /// Relative residual tolerance of the solver.
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, value_parser = parse_scheme, default_value = "dual-average")]
    scheme: Scheme,
}

fn dataset_config(c: &Common, a: &GenArgs) -> Result<DatasetConfig> {
    let mut cfg = match a.dim {
        2 => DatasetConfig::desk_2d(a.n_train, a.n_val, a.res, c.seed),
        3 => {
            let base = GenSpec::spheres_3d(a.res, (a.vf_min, a.vf_max), c.seed);
            DatasetConfig {
                train: SplitSpec {
                    gen: base.clone(),
                    count: a.n_train,
                    contrasts: train_contrasts(),
                },
                validation: SplitSpec {
                    gen: GenSpec {
                        kinds: vec![InclusionKind::Ellipsoid],
                        aspect_range: (0.4, 1.0),
                        random_orientation: true,
                        seed: c.seed.wrapping_add(1),
                        ..base
                    },
                    count: a.n_val,
                    contrasts: desk_validation_contrasts(),
                },
                solver: SolverSettings::default(),
            }
        }
        d => return Err(CliError::Usage(format!("--dim must be 2 or 3, got {d}"))),
    };
    for (spec, kinds) in [(&mut cfg.train, &a.kinds), (&mut cfg.validation, &a.val_kinds)] {
        if let Some(k) = kinds {
            spec.gen.kinds = parse_kinds(k).map_err(CliError::Usage)?;
        }
        spec.gen.vf_range = (a.vf_min, a.vf_max);
        if let Some(lo) = a.size_min {
            spec.gen.size_range.0 = lo;
        }
        if let Some(hi) = a.size_max {
            spec.gen.size_range.1 = hi;
        }
        spec.gen.overlap = !a.no_overlap;
    }
    cfg.train.contrasts = parse_contrasts(&a.train_contrasts).map_err(CliError::Usage)?;
    cfg.validation.contrasts = parse_contrasts(&a.val_contrasts).map_err(CliError::Usage)?;
    cfg.solver = SolverSettings {
        tol: a.tol,
        scheme: a.scheme,
        ..SolverSettings::default()
    };
    Ok(cfg)
}

fn out_dir(c: &Common, default: impl Into<PathBuf>) -> Result<PathBuf> {
    let dir = c.out.clone().unwrap_or_else(|| default.into());
    std::fs::create_dir_all(&dir).map_err(|e| CliError::Core(e.into()))?;
    Ok(dir)
}

fn load_dataset(dir: &Path) -> Result<Dataset> {
    if !dir.join("manifest.json").is_file() {
        return Err(CliError::Core(vrnet_core::Error::CorruptFile(format!(
            "no dataset manifest in {}",
            dir.display()
        ))));
    }
    Ok(Dataset::load(dir)?)
}

fn report_failures(ds: &Dataset, stage: &str) -> Result<()> {
    let f = &ds.manifest.failures;
    if f.is_empty() {
        return Ok(());
    }
    for x in f {
        log::warn!("{} at R = {:?}: {}", x.id, x.contrast, x.reason);
    }
    Err(CliError::Failed(format!(
        "{stage}: {} failures recorded in the manifest, which is marked incomplete",
        f.len()
    )))
}

pub fn gen(c: &Common, a: GenArgs) -> Result<()> {
    let cfg = dataset_config(c, &a)?;
    let dir = out_dir(c, "dataset")?;
    let ds = generate_structures(&cfg)?;
    ds.save(&dir)?;
    println!(
        "generated {} training and {} validation structures in {}",
        ds.manifest.train.ids.len(),
        ds.manifest.validation.ids.len(),
        dir.display()
    );
    report_failures(&ds, "gen")
}

#[derive(Args, Debug)]
pub struct DataArgs {
    /// Dataset directory.
    #[arg(long, default_value = "dataset")]
    data: PathBuf,
}

#[derive(Args, Debug)]
pub struct SolveArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Overrides the solver tolerance stored in the manifest.
    #[arg(long)]
    tol: Option<f64>,
}

pub fn solve(c: &Common, a: SolveArgs) -> Result<()> {
    let mut ds = load_dataset(&a.data.data)?;
    if let Some(tol) = a.tol {
        ds.manifest.solver.tol = tol;
    }
    solve_all(&mut ds)?;
    let audited = ds.records.iter().filter(|r| r.audit().is_ok()).count();
    let dir = out_dir(c, &a.data.data)?;
    ds.save(&dir)?;
    println!(
        "solved {} samples; bound audit: {audited}/{} within Reuss and Voigt at 1e-8",
        ds.records.len(),
        ds.records.len()
    );
    if audited != ds.records.len() {
        return Err(CliError::Failed("bound audit failed".into()));
    }
    report_failures(&ds, "solve")
}

pub fn featurize(c: &Common, a: DataArgs) -> Result<()> {
    let mut ds = load_dataset(&a.data)?;
    featurize_dataset(&mut ds)?;
    let dir = out_dir(c, &a.data)?;
    ds.save_features(&dir)?;
    if dir != a.data {
        ds.save(&dir)?;
    }
    println!("wrote descriptors of {} structures", ds.features.len());
    Ok(())
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value = "vr")]
    head: Head,
    #[arg(long, default_value = "O")]
    scenario: Scenario,
    #[arg(long, default_value_t = 200)]
    epochs: usize,
    #[arg(long, default_value_t = 128)]
    batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    /// Hidden layer widths, comma separated; each a multiple of four.
    #[arg(long)]
    hidden: Option<String>,
    #[arg(long)]
    no_batch_norm: bool,
    #[arg(long, default_value_t = 20)]
    patience: usize,
    #[arg(long, default_value_t = 0.5)]
    factor: f64,
    #[arg(long, default_value_t = 1e-6)]
    min_lr: f64,
}

pub fn train(c: &Common, a: TrainArgs) -> Result<()> {
    let ds = load_dataset(&a.data.data)?;
    let keys = scenario_subset(&ds, a.scenario, c.seed)?;
    let train_set = ds.samples_for(&keys)?;
    let val_set = ds.samples(Split::Validation)?;
    let input_dim = train_set
        .first()
        .map(|s| s.input.len())
        .ok_or_else(|| CliError::Core(vrnet_core::Error::EmptySplit("training split".into())))?;
    let mut net = NetConfig::new(input_dim, ds.tensor_dim(), a.head, c.seed);
    if let Some(h) = &a.hidden {
        net.hidden = parse_widths(h).map_err(CliError::Usage)?;
    }
    net.batch_norm = !a.no_batch_norm;
    let cfg = TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch_size,
        lr: a.lr,
        plateau_patience: a.patience,
        plateau_factor: a.factor,
        min_lr: a.min_lr,
        seed: c.seed,
        ..TrainConfig::default()
    };
    let mut model = Surrogate::new(net)?;
    let history = train_model(&mut model, &train_set, &val_set, &cfg)?;
    let dir = out_dir(c, format!("model-{}-{}", model.name(), a.scenario))?;
    save_checkpoint(&model, &dir.join("model.vrnc"))?;
    write_history_csv(&history, &dir.join("history.csv"))?;
    let subset: String = keys.iter().map(|k| format!("{k}\n")).collect();
    std::fs::write(dir.join("subset.txt"), subset).map_err(|e| CliError::Core(e.into()))?;
    let last = history.last().expect("at least one epoch");
    println!(
        "trained {} on {} samples ({} parameters); final train loss {:.4e}, validation loss {:.4e}",
        model.name(),
        train_set.len(),
        model.params.n_trainable(),
        last.train_loss,
        last.val_loss
    );
    Ok(())
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Checkpoint written by `train`.
    #[arg(long)]
    model: Option<PathBuf>,
    /// `vr`, `vanilla` or `hill`; with a checkpoint it must match its head.
    #[arg(long)]
    head: Option<String>,
    #[arg(long, default_value = "validation")]
    split: String,
}

pub fn write_eval(report: &EvalReport, dir: &Path) -> vrnet_core::Result<()> {
    report.write_samples_csv(&dir.join("samples.csv"))?;
    report.write_contrast_csv(&dir.join("contrast.csv"))?;
    report.write_eigen_csv(&dir.join("eigen.csv"))?;
    report.write_cdf_csv(&dir.join("cdf.csv"))?;
    report.write_r2_csv(&dir.join("r2.csv"))?;
    report.write_summary_csv(&dir.join("summary.csv"))
}

pub fn eval(c: &Common, a: EvalArgs) -> Result<()> {
    let split = match a.split.as_str() {
        "train" => Split::Train,
        "validation" | "val" => Split::Validation,
        s => return Err(CliError::Usage(format!("unknown split {s:?}"))),
    };
    let predictor: Box<dyn Predictor> = match (&a.model, a.head.as_deref()) {
        (None, Some("hill")) => Box::new(HillBaseline),
        (None, _) => return Err(CliError::Usage("eval needs --model, or --head hill".into())),
        (Some(_), Some("hill")) => return Err(CliError::Usage("--head hill takes no --model".into())),
        (Some(p), head) => {
            let m = load_checkpoint(p).map_err(|e| match e {
                vrnet_core::Error::Io(io) => CliError::Core(vrnet_core::Error::CorruptFile(format!("{}: {io}", p.display()))),
                other => other.into(),
            })?;
            if let Some(h) = head {
                let want: Head = h.parse()?;
                if want != m.config.head {
                    return Err(CliError::Usage(format!("checkpoint {} has a {} head", p.display(), m.name())));
                }
            }
            Box::new(m)
        }
    };
    let ds = load_dataset(&a.data.data)?;
    let samples = ds.samples(split)?;
    let report = evaluate(predictor.as_ref(), &samples)?;
    let dir = out_dir(c, format!("eval-{}", predictor.name()))?;
    write_eval(&report, &dir)?;
    println!(
        "{}: {} samples, median relative error {:.4e}, bound violations: {}",
        report.predictor,
        report.samples.len(),
        report.median_rel_error(),
        report.violations()
    );
    Ok(())
}

#[derive(Args, Debug)]
pub struct OracleArgs {
    #[arg(long, default_value_t = 2)]
    dim: usize,
    #[arg(long, default_value_t = 128)]
    res: usize,
}

pub fn oracle(c: &Common, a: OracleArgs) -> Result<()> {
    if !(a.dim == 2 || a.dim == 3) || a.res < 2 || a.res % 2 != 0 {
        return Err(CliError::Usage("oracle needs --dim 2|3 and an even --res".into()));
    }
    let cases = oracle_suite(a.dim, a.res)?;
    let mut rows = String::from("case,rel_error,tol,pass\n");
    for k in &cases {
        println!(
            "{} {}: relative error {:.3e} (tolerance {:.0e}, {:.2} s)",
            if k.passed() { "PASS" } else { "FAIL" },
            k.name,
            k.rel_error,
            k.tol,
            k.seconds
        );
        rows.push_str(&format!("{},{},{},{}\n", k.name, k.rel_error, k.tol, k.passed()));
    }
    if let Some(dir) = &c.out {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Core(e.into()))?;
        std::fs::write(dir.join("oracle.csv"), rows).map_err(|e| CliError::Core(e.into()))?;
    }
    let failed = cases.iter().filter(|k| !k.passed()).count();
    if failed > 0 {
        return Err(CliError::Failed(format!("{failed} of {} oracle cases failed", cases.len())));
    }
    Ok(())
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Evaluation directories written by `eval`.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
}

fn read_rows(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::Core(e.into()))?;
    let header = r.headers().map_err(|e| CliError::Core(e.into()))?.iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|x| x.iter().map(String::from).collect()))
        .collect::<std::result::Result<Vec<Vec<String>>, _>>()
        .map_err(|e| CliError::Core(e.into()))?;
    Ok((header, rows))
}

pub fn report(c: &Common, a: ReportArgs) -> Result<()> {
    let dir = out_dir(c, "report")?;
    let mut summary = csv::Writer::from_path(dir.join("comparison.csv")).map_err(|e| CliError::Core(e.into()))?;
    summary.write_record(EvalReport::SUMMARY_HEADER).map_err(|e| CliError::Core(e.into()))?;
    // contrast label -> predictor -> mean relative error
    let mut by_contrast: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
    let mut predictors = Vec::new();
    println!("{:<10} {:>8} {:>12} {:>12} {:>10}", "predictor", "count", "rel_mean", "rel_median", "violations");
    for input in &a.inputs {
        let path = input.join("summary.csv");
        if !path.is_file() {
            return Err(CliError::Core(vrnet_core::Error::CorruptFile(format!("no summary.csv in {}", input.display()))));
        }
        let (header, rows) = read_rows(&path)?;
        if header != EvalReport::SUMMARY_HEADER {
            return Err(CliError::Core(vrnet_core::Error::UnsupportedSchema {
                found: format!("{header:?}"),
                expected: "evaluation summary".into(),
            }));
        }
        for row in rows {
            println!("{:<10} {:>8} {:>12} {:>12} {:>10}", row[0], row[1], row[2], row[3], row[6]);
            summary.write_record(&row).map_err(|e| CliError::Core(e.into()))?;
            predictors.push(row[0].clone());
        }
        let contrast_path = input.join("contrast.csv");
        if contrast_path.exists() {
            let (_, rows) = read_rows(&contrast_path)?;
            for row in rows {
                if row[1] != "all" {
                    by_contrast.entry(row[1].clone()).or_default().insert(row[0].clone(), row[6].clone());
                }
            }
        }
    }
    summary.flush().map_err(|e| CliError::Core(e.into()))?;
    let mut w = csv::Writer::from_path(dir.join("contrast_comparison.csv")).map_err(|e| CliError::Core(e.into()))?;
    let mut header = vec!["contrast".to_string()];
    header.extend(predictors.iter().map(|p| format!("{p}_rel_mean")));
    w.write_record(&header).map_err(|e| CliError::Core(e.into()))?;
    let mut keyed: Vec<(f64, &String, &BTreeMap<String, String>)> = by_contrast
        .iter()
        .map(|(k, v)| (k.parse().unwrap_or(f64::NAN), k, v))
        .collect();
    keyed.sort_by(|x, y| x.0.total_cmp(&y.0));
    for (_, label, vals) in keyed {
        let mut row = vec![label.clone()];
        row.extend(predictors.iter().map(|p| vals.get(p).cloned().unwrap_or_default()));
        w.write_record(&row).map_err(|e| CliError::Core(e.into()))?;
    }
    w.flush().map_err(|e| CliError::Core(e.into()))?;
    Ok(())
}
