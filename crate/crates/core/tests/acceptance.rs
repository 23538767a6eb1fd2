//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Criteria 1 to 8 run twice into separate directories; criterion 10 compares
//! every CSV and JSON file of the two runs byte for byte.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vrnet_core::bounds::{make_bounds, PhaseSystem, DEFAULT_EPS_REL};
use vrnet_core::dataset::{
    build_dataset, scenario_subset, Dataset, DatasetConfig, Scenario, Split, SCENARIO_B_FRACTION,
};
use vrnet_core::homsolve::{solve_effective, ConductionProblem, SolverSettings, BOUND_AUDIT_TOL};
use vrnet_core::microgen::{make_checkerboard, make_laminate, GenSpec, InclusionKind};
use vrnet_core::orth::n_angles;
use vrnet_core::spd::{frob_dist, loewner_leq, Matrix, SymMat};
use vrnet_core::specnorm::{compose, denormalize, normalize};
use vrnet_core::surrogate::{
    evaluate, gradient_check, train, write_history_csv, EvalReport, EpochRecord, Head, HillBaseline, Mode,
    NetConfig, Sample, Surrogate, TrainConfig,
};

const SEED: u64 = 0;
const N_TRAIN: usize = 500;
const N_VAL: usize = 100;
const RES: usize = 64;
const EPOCHS: usize = 200;

struct Outcome {
    id: usize,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn outcome(id: usize, name: &'static str, pass: bool, detail: String) -> Outcome {
    Outcome { id, name, pass, detail }
}

fn fmt_sym(s: &SymMat) -> String {
    s.packed().iter().map(f64::to_string).collect::<Vec<_>>().join(";")
}

fn random_spd(rng: &mut ChaCha8Rng, m: usize, floor: f64) -> SymMat {
    let x = Matrix::from_fn(m, m, |_, _| rng.random_range(-1.0..1.0));
    &SymMat::identity(m).congruence(&x) + &SymMat::scaled_identity(m, floor)
}

fn random_phases(rng: &mut ChaCha8Rng, m: usize) -> PhaseSystem {
    let c = rng.random_range(0.05..0.95);
    let (fa, fb) = (rng.random_range(0.05..1.0), rng.random_range(0.05..1.0));
    let a = random_spd(rng, m, fa);
    let b = random_spd(rng, m, fb).scale(10f64.powf(rng.random_range(-2.0..2.0)));
    PhaseSystem::new(vec![c, 1.0 - c], vec![a, b]).unwrap()
}

fn oracles(dir: &Path) -> Vec<Outcome> {
    let mut csv = String::from("case,kappa,rel_error\n");
    let settings = SolverSettings::default();
    let mut solve = |name: String, grid, want: SymMat| {
        let p = ConductionProblem::new(grid, 1.0, 100.0).unwrap();
        let got = solve_effective(&p, &settings).unwrap().kappa_eff;
        let err = frob_dist(&got, &want).unwrap() / want.frob_norm();
        writeln!(csv, "{name},{},{err}", fmt_sym(&got)).unwrap();
        (err, got)
    };

    let t = Instant::now();
    let (par, ser) = (50.5, 2.0 / 1.01);
    let mut worst: f64 = 0.0;
    let mut seen = Vec::new();
    for axis in 0..2 {
        let want = if axis == 0 { SymMat::from_diag(&[ser, par]) } else { SymMat::from_diag(&[par, ser]) };
        let (err, got) = solve(format!("laminate_{axis}"), make_laminate(&[128, 128], axis, 0.5).unwrap(), want);
        worst = worst.max(err);
        seen.push(format!("{:?}", got.diag()));
    }
    let secs = t.elapsed().as_secs_f64();
    let c1 = outcome(
        1,
        "laminate oracle",
        worst <= 1e-6 && secs <= 10.0,
        format!("diag {} vs (50.5, 1.980198); worst rel error {worst:.2e} (tol 1e-6); {secs:.1} s (limit 10 s)", seen.join(", ")),
    );

    let t = Instant::now();
    let (e128, _) = solve("checkerboard_128".into(), make_checkerboard(&[128, 128]).unwrap(), SymMat::scaled_identity(2, 10.0));
    let (e256, _) = solve("checkerboard_256".into(), make_checkerboard(&[256, 256]).unwrap(), SymMat::scaled_identity(2, 10.0));
    let secs = t.elapsed().as_secs_f64();
    let c2 = outcome(
        2,
        "checkerboard oracle",
        e128 <= 1e-2 && e256 <= 5e-3 && secs <= 60.0,
        format!("rel error {e128:.2e} at 128² (tol 1e-2), {e256:.2e} at 256² (tol 5e-3); {secs:.1} s (limit 60 s)"),
    );
    std::fs::write(dir.join("oracle.csv"), csv).unwrap();
    vec![c1, c2]
}

fn bound_audit(ds: &Dataset, secs: f64) -> Outcome {
    let train: Vec<_> = ds.records_in(Split::Train).collect();
    let ok = train.iter().filter(|r| r.audit().is_ok()).count();
    let all_ok = ds.records.iter().filter(|r| r.audit().is_ok()).count();
    let failed = ds.manifest.failures.len();
    let contrasts = ds.manifest.train.contrasts.len();
    outcome(
        3,
        "bound audit",
        ds.manifest.train.ids.len() >= 500 && contrasts == 12 && ok == train.len() && train.len() == 500 * 12 && failed == 0,
        format!(
            "{ok}/{} training samples ({} structures x {contrasts} contrasts, {RES}²) within Reuss and Voigt at {BOUND_AUDIT_TOL:e}; \
             {all_ok}/{} including validation; {failed} failed solves; built in {secs:.0} s",
            train.len(),
            ds.manifest.train.ids.len(),
            ds.records.len()
        ),
    )
}

fn structural_guarantee(dir: &Path) -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ 4);
    let (mut violations, mut trials) = (0usize, 0usize);
    for k in 0..100 {
        let m = 2 + k % 2;
        let input_dim = 2 + m * 8 + 1;
        let mut model = Surrogate::new(NetConfig::new(input_dim, m, Head::VoigtReuss, k as u64)).unwrap();
        let scale = rng.random_range(0.5..20.0);
        let flat: Vec<f64> = model.params.trainable_flat().iter().map(|v| v * scale).collect();
        model.params.set_trainable_flat(&flat).unwrap();
        for _ in 0..100 {
            let b = make_bounds(&random_phases(&mut rng, m), DEFAULT_EPS_REL).unwrap();
            let x: Vec<f64> = (0..input_dim).map(|_| rng.random_range(-3.0..3.0)).collect();
            let y = model.vr_predict(&x, &b).unwrap();
            let inside = loewner_leq(&b.y_reuss, &y, 1e-8).unwrap() && loewner_leq(&y, &b.y_voigt, 1e-8).unwrap();
            violations += usize::from(!inside);
            trials += 1;
        }
    }
    let secs = t.elapsed().as_secs_f64();
    std::fs::write(dir.join("structural.csv"), format!("trials,violations\n{trials},{violations}\n")).unwrap();
    outcome(
        4,
        "structural guarantee",
        trials == 10_000 && violations == 0 && secs <= 10.0,
        format!("{violations} Löwner violations in {trials} untrained predictions (m = 2, 3); {secs:.1} s (limit 10 s)"),
    )
}

fn round_trip(dir: &Path) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ 5);
    let mut csv = String::from("m,max_rel_error\n");
    let mut worst_all: f64 = 0.0;
    let mut parts = Vec::new();
    for m in [2, 3, 6] {
        let mut worst: f64 = 0.0;
        for _ in 0..1000 {
            let b = make_bounds(&random_phases(&mut rng, m), DEFAULT_EPS_REL).unwrap();
            let xq: Vec<f64> = (0..n_angles(m)).map(|_| rng.random_range(0.0..1.0)).collect();
            let xl: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..1.0)).collect();
            let y = denormalize(&compose(&xq, &xl).unwrap(), &b).unwrap();
            let back = denormalize(&normalize(&y, &b).unwrap().y_tilde, &b).unwrap();
            worst = worst.max(frob_dist(&back, &y).unwrap() / y.frob_norm());
        }
        writeln!(csv, "{m},{worst}").unwrap();
        parts.push(format!("m={m}: {worst:.1e}"));
        worst_all = worst_all.max(worst);
    }
    std::fs::write(dir.join("round_trip.csv"), csv).unwrap();
    outcome(
        5,
        "normalize/denormalize round trip",
        worst_all <= 1e-10,
        format!("max relative error over 1000 tensors each: {} (tol 1e-10)", parts.join(", ")),
    )
}

fn tiny_3d_samples() -> Vec<Sample> {
    let mut cfg = DatasetConfig::desk_2d(4, 1, 12, SEED);
    for s in [&mut cfg.train, &mut cfg.validation] {
        s.gen = GenSpec {
            kinds: vec![InclusionKind::Ellipsoid],
            aspect_range: (0.4, 1.0),
            random_orientation: true,
            ..GenSpec::spheres_3d(12, (0.2, 0.5), SEED)
        };
        s.contrasts = vec![0.05, 0.5, 5.0];
    }
    build_dataset(&cfg).unwrap().samples(Split::Train).unwrap()
}

fn gradients(ds: &Dataset, dir: &Path) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ 6);
    let data2: Vec<Sample> = ds.samples(Split::Train).unwrap().into_iter().step_by(397).take(16).collect();
    let data3 = tiny_3d_samples();
    let mut csv = String::from("head,m,mode,coords,worst\n");
    let mut worst_all: f64 = 0.0;
    let mut min_coords = usize::MAX;
    for (head, data) in [
        (Head::VoigtReuss, &data2),
        (Head::VoigtReuss, &data3),
        (Head::Vanilla, &data2),
        (Head::Vanilla, &data3),
    ] {
        let m = data[0].target.dim();
        let mut cfg = NetConfig::new(data[0].input.len(), m, head, 11);
        cfg.hidden = vec![24, 12];
        let mut model = Surrogate::new(cfg).unwrap();
        model.fit_standardization(data).unwrap();
        let n = model.params.n_trainable();
        let out = model.params.output.w.len() + model.params.output.b.len();
        // Every output-layer coordinate plus 50 random ones from the trunk.
        let mut coords: Vec<usize> = (n - out..n).collect();
        coords.extend((0..50).map(|_| rng.random_range(0..n - out)));
        for mode in [Mode::Train, Mode::Eval] {
            let w = gradient_check(&model, data, mode, &coords, 1e-5).unwrap();
            writeln!(csv, "{},{m},{mode:?},{},{w}", model_name(head), coords.len()).unwrap();
            worst_all = worst_all.max(w);
        }
        min_coords = min_coords.min(coords.len());
    }
    std::fs::write(dir.join("gradients.csv"), csv).unwrap();
    outcome(
        6,
        "gradient check",
        worst_all <= 1e-5 && min_coords >= 50,
        format!(
            "worst relative deviation {worst_all:.2e} (tol 1e-5, h = 1e-5) over ≥{min_coords} coordinates per case, \
             both heads, m = 2 and 3, batch and running statistics"
        ),
    )
}

fn model_name(h: Head) -> &'static str {
    match h {
        Head::VoigtReuss => "vr",
        Head::Vanilla => "vanilla",
    }
}

fn dof(dir: &Path) -> Outcome {
    let c2 = NetConfig::new(19, 2, Head::VoigtReuss, 0);
    let c3 = NetConfig::new(27, 3, Head::VoigtReuss, 0);
    let got = [(c2.output_dim(), c2.vr_split()), (c3.output_dim(), c3.vr_split())];
    std::fs::write(
        dir.join("dof.csv"),
        format!("m,outputs,n_q,n_lambda\n2,{},{},{}\n3,{},{},{}\n", got[0].0, got[0].1 .0, got[0].1 .1, got[1].0, got[1].1 .0, got[1].1 .1),
    )
    .unwrap();
    outcome(
        7,
        "degrees of freedom",
        got == [(3, (1, 2)), (6, (3, 3))],
        format!("2D: {} outputs split {:?}; 3D: {} outputs split {:?}", got[0].0, got[0].1, got[1].0, got[1].1),
    )
}

fn train_config(batch_size: usize) -> TrainConfig {
    TrainConfig {
        epochs: EPOCHS,
        batch_size,
        seed: SEED,
        ..TrainConfig::default()
    }
}

fn write_eval(report: &EvalReport, dir: &Path) {
    std::fs::create_dir_all(dir).unwrap();
    report.write_samples_csv(&dir.join("samples.csv")).unwrap();
    report.write_contrast_csv(&dir.join("contrast.csv")).unwrap();
    report.write_eigen_csv(&dir.join("eigen.csv")).unwrap();
    report.write_cdf_csv(&dir.join("cdf.csv")).unwrap();
    report.write_r2_csv(&dir.join("r2.csv")).unwrap();
    report.write_summary_csv(&dir.join("summary.csv")).unwrap();
}

fn fit(head: Head, train_set: &[Sample], val: &[Sample], batch: usize) -> (Surrogate, Vec<EpochRecord>) {
    let mut model = Surrogate::new(NetConfig::new(train_set[0].input.len(), 2, head, SEED)).unwrap();
    let hist = train(&mut model, train_set, val, &train_config(batch)).unwrap();
    (model, hist)
}

struct TrainingRun {
    outcome: Outcome,
    vr_median: f64,
}

fn training(ds: &Dataset, dir: &Path) -> TrainingRun {
    let t = Instant::now();
    let train_set = ds.samples(Split::Train).unwrap();
    let val = ds.samples(Split::Validation).unwrap();
    let mut reports = Vec::new();
    let mut vr_hist = Vec::new();
    for head in [Head::VoigtReuss, Head::Vanilla] {
        let (model, hist) = fit(head, &train_set, &val, 128);
        write_history_csv(&hist, &dir.join(format!("history_{}.csv", model_name(head)))).unwrap();
        let rep = evaluate(&model, &val).unwrap();
        write_eval(&rep, &dir.join(format!("eval_{}", model_name(head))));
        if head == Head::VoigtReuss {
            vr_hist = hist;
        }
        reports.push(rep);
    }
    let hill = evaluate(&HillBaseline, &val).unwrap();
    write_eval(&hill, &dir.join("eval_hill"));
    let secs = t.elapsed().as_secs_f64();
    let (vr, van) = (&reports[0], &reports[1]);
    let final_val = vr_hist.last().unwrap().val_loss;
    let min_val = vr_hist.iter().map(|r| r.val_loss).fold(f64::INFINITY, f64::min);
    let a = vr.median_rel_error() <= van.median_rel_error();
    let b = vr.violations() == 0;
    let c = final_val <= 2.0 * min_val;
    TrainingRun {
        vr_median: vr.median_rel_error(),
        outcome: outcome(
            8,
            "desk-scale training",
            a && b && c && secs <= 7200.0,
            format!(
                "(a) median rel error VR {:.4} vs vanilla {:.4} (Hill {:.4}; vanilla/VR = {:.1}x); \
                 (b) violations VR {} vs vanilla {} of {}; (c) VR final val loss {:.3e} vs min {:.3e}; \
                 {} train samples, {} validation samples at {} contrasts, {EPOCHS} epochs; {secs:.0} s",
                vr.median_rel_error(),
                van.median_rel_error(),
                hill.median_rel_error(),
                van.median_rel_error() / vr.median_rel_error(),
                vr.violations(),
                van.violations(),
                val.len(),
                final_val,
                min_val,
                train_set.len(),
                val.len(),
                ds.manifest.validation.contrasts.len(),
            ),
        ),
    }
}

fn scenarios(ds: &Dataset, vr_o_median: f64, dir: &Path) -> Outcome {
    let total = ds.records_in(Split::Train).count();
    let val = ds.samples(Split::Validation).unwrap();
    let mut csv = String::from("scenario,samples,fraction,vr_median_rel_error\n");
    writeln!(csv, "O,{total},1,{vr_o_median}").unwrap();
    let mut rows = Vec::new();
    for sc in [Scenario::A, Scenario::B] {
        let keys = scenario_subset(ds, sc, SEED).unwrap();
        let subset = ds.samples_for(&keys).unwrap();
        // Small subsets use small batches so that each epoch takes several steps.
        let (model, _) = fit(Head::VoigtReuss, &subset, &val, 16);
        let median = evaluate(&model, &val).unwrap().median_rel_error();
        let frac = keys.len() as f64 / total as f64;
        writeln!(csv, "{sc},{},{frac},{median}", keys.len()).unwrap();
        rows.push((keys.len(), frac, median));
    }
    std::fs::write(dir.join("scenarios.csv"), csv).unwrap();
    let (a, b) = (rows[0], rows[1]);
    let fractions_ok = a.0 * 15 == total && (b.1 - SCENARIO_B_FRACTION).abs() < 1e-12;
    let ordering = if b.2 < a.2 { "B outperforms A, as at full scale" } else { "A outperforms B (differs from the full-scale ordering)" };
    outcome(
        9,
        "data-scarcity scenarios",
        fractions_ok,
        format!(
            "A: {} samples ({:.2}%), B: {} samples ({:.2}%) of {total}; VR validation median O {vr_o_median:.4}, A {:.4}, B {:.4}; {ordering}",
            a.0,
            100.0 * a.1,
            b.0,
            100.0 * b.1,
            a.2,
            b.2
        ),
    )
}

struct CoreRun {
    outcomes: Vec<Outcome>,
    dataset: Dataset,
    vr_median: f64,
}

fn run_core(dir: &Path) -> CoreRun {
    std::fs::create_dir_all(dir).unwrap();
    let mut outcomes = oracles(dir);
    let t = Instant::now();
    let ds = build_dataset(&DatasetConfig::desk_2d(N_TRAIN, N_VAL, RES, SEED)).unwrap();
    let secs = t.elapsed().as_secs_f64();
    ds.save(&dir.join("dataset")).unwrap();
    outcomes.push(bound_audit(&ds, secs));
    outcomes.push(structural_guarantee(dir));
    outcomes.push(round_trip(dir));
    outcomes.push(gradients(&ds, dir));
    outcomes.push(dof(dir));
    let tr = training(&ds, dir);
    outcomes.push(tr.outcome);
    CoreRun {
        outcomes,
        dataset: ds,
        vr_median: tr.vr_median,
    }
}

fn files(dir: &Path, out: &mut Vec<PathBuf>) {
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            files(&p, out);
        } else {
            out.push(p);
        }
    }
}

fn determinism(a: &Path, b: &Path) -> Outcome {
    let mut fa = Vec::new();
    files(a, &mut fa);
    fa.sort();
    let tables: Vec<&PathBuf> = fa
        .iter()
        .filter(|p| matches!(p.extension().and_then(|e| e.to_str()), Some("csv" | "json")))
        .collect();
    let mut differing = Vec::new();
    for p in &fa {
        let q = b.join(p.strip_prefix(a).unwrap());
        if std::fs::read(p).ok() != std::fs::read(&q).ok() {
            differing.push(p.strip_prefix(a).unwrap().display().to_string());
        }
    }
    let mut fb = Vec::new();
    files(b, &mut fb);
    outcome(
        10,
        "determinism",
        differing.is_empty() && fa.len() == fb.len() && !tables.is_empty(),
        format!(
            "{} files ({} CSV/JSON tables) compared across two runs of criteria 1-8; {} differ{}",
            fa.len(),
            tables.len(),
            differing.len(),
            if differing.is_empty() { String::new() } else { format!(": {}", differing.join(", ")) }
        ),
    )
}

fn print(o: &Outcome) {
    println!("{} [{}] {}: {}", if o.pass { "PASS" } else { "FAIL" }, o.id, o.name, o.detail);
}

fn main() {
    let root = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    let _ = std::fs::remove_dir_all(&root);
    let (run1, run2) = (root.join("run1"), root.join("run2"));

    let first = run_core(&run1);
    for o in &first.outcomes {
        print(o);
    }
    let mut all: Vec<Outcome> = first.outcomes;
    let c9 = scenarios(&first.dataset, first.vr_median, &root);
    print(&c9);
    all.push(c9);
    drop(first.dataset);

    let _ = run_core(&run2);
    let c10 = determinism(&run1, &run2);
    print(&c10);
    all.push(c10);

    let failed = all.iter().filter(|o| !o.pass).count();
    println!("acceptance: {} of {} criteria passed", all.len() - failed, all.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
