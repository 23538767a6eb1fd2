use std::io::Write;
use std::path::Path;

use super::{Sample, Surrogate};
use crate::error::Result;
use crate::spd::{eig_sym, loewner_leq, loewner_margin, SymMat};
use crate::specnorm::{normalize_unchecked, phi_loss, rel_frob_error};

/// Eigenvalue tolerance of the prediction bound audit.
pub const VIOLATION_TOL: f64 = 1e-8;

pub trait Predictor {
    fn name(&self) -> &str;
    fn predict_sample(&self, s: &Sample) -> Result<SymMat>;
}

impl Predictor for Surrogate {
    fn name(&self) -> &str {
        match self.config.head {
            super::Head::VoigtReuss => "vr",
            super::Head::Vanilla => "vanilla",
        }
    }

    fn predict_sample(&self, s: &Sample) -> Result<SymMat> {
        self.predict(&s.input, &s.bounds)
    }
}

/// The midpoint of the bounds, admissible by convexity.
pub struct HillBaseline;

impl Predictor for HillBaseline {
    fn name(&self) -> &str {
        "hill"
    }

    fn predict_sample(&self, s: &Sample) -> Result<SymMat> {
        Ok(s.bounds.hill())
    }
}

#[derive(Clone, Debug)]
pub struct SampleMetrics {
    pub id: String,
    pub contrast: f64,
    pub phi: f64,
    pub rel_error: f64,
    /// Smallest eigenvalue of `Y_V − Ŷ` and `Ŷ − Y_R`; negative means outside.
    pub margin: f64,
    pub violation: bool,
    pub predicted: SymMat,
    pub target: SymMat,
    pub voigt: SymMat,
    pub reuss: SymMat,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContrastStats {
    pub contrast: f64,
    pub count: usize,
    pub phi_mean: f64,
    pub phi_median: f64,
    pub phi_std: f64,
    pub rel_mean: f64,
    pub rel_median: f64,
    pub rel_std: f64,
    pub violations: usize,
}

#[derive(Clone, Debug)]
pub struct EvalReport {
    pub predictor: String,
    pub samples: Vec<SampleMetrics>,
    pub per_contrast: Vec<ContrastStats>,
    pub overall: ContrastStats,
    /// Coefficient of determination per upper-triangle component.
    pub r2: Vec<f64>,
}

fn mean_median_std(v: &[f64]) -> (f64, f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let mut sorted = v.to_vec();
    sorted.sort_by(f64::total_cmp);
    let k = sorted.len();
    let median = if k % 2 == 1 {
        sorted[k / 2]
    } else {
        0.5 * (sorted[k / 2 - 1] + sorted[k / 2])
    };
    (mean, median, var.sqrt())
}

fn stats(contrast: f64, rows: &[&SampleMetrics]) -> ContrastStats {
    let phi: Vec<f64> = rows.iter().map(|r| r.phi).collect();
    let rel: Vec<f64> = rows.iter().map(|r| r.rel_error).collect();
    let (phi_mean, phi_median, phi_std) = mean_median_std(&phi);
    let (rel_mean, rel_median, rel_std) = mean_median_std(&rel);
    ContrastStats {
        contrast,
        count: rows.len(),
        phi_mean,
        phi_median,
        phi_std,
        rel_mean,
        rel_median,
        rel_std,
        violations: rows.iter().filter(|r| r.violation).count(),
    }
}

fn r_squared(samples: &[SampleMetrics]) -> Vec<f64> {
    let Some(first) = samples.first() else {
        return Vec::new();
    };
    let p = first.target.packed().len();
    (0..p)
        .map(|c| {
            let n = samples.len() as f64;
            let mean = samples.iter().map(|s| s.target.packed()[c]).sum::<f64>() / n;
            let ss_tot: f64 = samples.iter().map(|s| (s.target.packed()[c] - mean).powi(2)).sum();
            let ss_res: f64 = samples
                .iter()
                .map(|s| (s.target.packed()[c] - s.predicted.packed()[c]).powi(2))
                .sum();
            if ss_tot > 0.0 {
                1.0 - ss_res / ss_tot
            } else if ss_res == 0.0 {
                1.0
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect()
}

pub fn evaluate(predictor: &dyn Predictor, samples: &[Sample]) -> Result<EvalReport> {
    let mut rows = Vec::with_capacity(samples.len());
    for s in samples {
        let pred = predictor.predict_sample(s)?;
        let (yv, yr) = (&s.bounds.y_voigt, &s.bounds.y_reuss);
        let inside = loewner_leq(yr, &pred, VIOLATION_TOL)? && loewner_leq(&pred, yv, VIOLATION_TOL)?;
        let margin = loewner_margin(yr, &pred)?.min(loewner_margin(&pred, yv)?);
        rows.push(SampleMetrics {
            id: s.id.clone(),
            contrast: s.contrast,
            phi: phi_loss(&s.normalized, &normalize_unchecked(&pred, &s.bounds))?,
            rel_error: rel_frob_error(&s.target, &pred)?,
            margin,
            violation: !inside,
            predicted: pred,
            target: s.target.clone(),
            voigt: yv.clone(),
            reuss: yr.clone(),
        });
    }
    let mut contrasts: Vec<f64> = rows.iter().map(|r| r.contrast).collect();
    contrasts.sort_by(f64::total_cmp);
    contrasts.dedup();
    let per_contrast = contrasts
        .iter()
        .map(|&c| {
            let group: Vec<&SampleMetrics> = rows.iter().filter(|r| r.contrast == c).collect();
            stats(c, &group)
        })
        .collect();
    let all: Vec<&SampleMetrics> = rows.iter().collect();
    let overall = stats(f64::NAN, &all);
    Ok(EvalReport {
        predictor: predictor.name().to_string(),
        r2: r_squared(&rows),
        overall,
        per_contrast,
        samples: rows,
    })
}

fn packed_header(prefix: &str, m: usize) -> Vec<String> {
    let mut v = Vec::new();
    for i in 0..m {
        for j in i..m {
            v.push(format!("{prefix}_{i}{j}"));
        }
    }
    v
}

impl EvalReport {
    pub fn violations(&self) -> usize {
        self.overall.violations
    }

    pub fn median_rel_error(&self) -> f64 {
        self.overall.rel_median
    }

    /// Empirical CDF of the relative error as `(error, probability)` pairs.
    pub fn cdf(&self) -> Vec<(f64, f64)> {
        let mut e: Vec<f64> = self.samples.iter().map(|s| s.rel_error).collect();
        e.sort_by(f64::total_cmp);
        let n = e.len() as f64;
        e.into_iter()
            .enumerate()
            .map(|(i, v)| (v, (i + 1) as f64 / n))
            .collect()
    }

    pub fn write_contrast_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([
            "predictor", "contrast", "count", "phi_mean", "phi_median", "phi_std", "rel_mean",
            "rel_median", "rel_std", "violations",
        ])?;
        let overall = std::iter::once(("all".to_string(), &self.overall));
        let groups = self.per_contrast.iter().map(|c| (c.contrast.to_string(), c));
        for (label, c) in groups.chain(overall) {
            w.write_record([
                self.predictor.clone(),
                label,
                c.count.to_string(),
                c.phi_mean.to_string(),
                c.phi_median.to_string(),
                c.phi_std.to_string(),
                c.rel_mean.to_string(),
                c.rel_median.to_string(),
                c.rel_std.to_string(),
                c.violations.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_samples_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let m = self.samples.first().map_or(0, |s| s.target.dim());
        let mut header: Vec<String> = ["id", "contrast", "phi", "rel_error", "margin", "violation"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        header.extend(packed_header("pred", m));
        header.extend(packed_header("true", m));
        w.write_record(&header)?;
        for s in &self.samples {
            let mut rec = vec![
                s.id.clone(),
                s.contrast.to_string(),
                s.phi.to_string(),
                s.rel_error.to_string(),
                s.margin.to_string(),
                (s.violation as u8).to_string(),
            ];
            rec.extend(s.predicted.packed().iter().map(|v| v.to_string()));
            rec.extend(s.target.packed().iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_cdf_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["rel_error", "probability"])?;
        for (e, p) in self.cdf() {
            w.write_record([e.to_string(), p.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Eigenvalues of prediction and target next to the bound eigenvalues.
    pub fn write_eigen_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let m = self.samples.first().map_or(0, |s| s.target.dim());
        let mut header = vec!["id".to_string(), "contrast".to_string()];
        for name in ["pred", "true", "voigt", "reuss"] {
            header.extend((0..m).map(|k| format!("{name}_eig{k}")));
        }
        w.write_record(&header)?;
        for s in &self.samples {
            let mut rec = vec![s.id.clone(), s.contrast.to_string()];
            for t in [&s.predicted, &s.target, &s.voigt, &s.reuss] {
                rec.extend(eig_sym(t)?.values.iter().map(|v| v.to_string()));
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub const SUMMARY_HEADER: [&'static str; 7] =
        ["predictor", "count", "rel_mean", "rel_median", "rel_std", "phi_mean", "violations"];

    pub fn summary_row(&self) -> Vec<String> {
        let o = &self.overall;
        vec![
            self.predictor.clone(),
            o.count.to_string(),
            o.rel_mean.to_string(),
            o.rel_median.to_string(),
            o.rel_std.to_string(),
            o.phi_mean.to_string(),
            o.violations.to_string(),
        ]
    }

    pub fn write_summary_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(Self::SUMMARY_HEADER)?;
        w.write_record(self.summary_row())?;
        w.flush()?;
        Ok(())
    }

    pub fn write_r2_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        let m = self.samples.first().map_or(0, |s| s.target.dim());
        writeln!(f, "predictor,component,r2")?;
        for (name, r2) in packed_header("k", m).iter().zip(&self.r2) {
            writeln!(f, "{},{name},{r2}", self.predictor)?;
        }
        Ok(())
    }
}
