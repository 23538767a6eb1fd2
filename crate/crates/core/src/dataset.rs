//! Dataset assembly, persistence and data-scarcity subsets.
//!
//! A dataset directory holds
//!
//! - `manifest.json`: splits, generator settings, solver settings, failures;
//! - `targets.csv`: one row per solved (structure, contrast) pair, columns
//!   `id, R, k_ij…, voigt_ij…, reuss_ij…, residual` with tensor entries in
//!   upper-triangle row-major order;
//! - `features.csv`: raw descriptors keyed by structure id;
//! - `grids/<id>.vrvg`: occupancy of every structure.
//!
//! Floats are written in shortest round-trip notation, so reading a table back
//! reproduces every value bit for bit.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{make_bounds, BoundsPair, DEFAULT_EPS_REL};
use crate::error::{Error, Result};
use crate::features::{assemble_input, extract_features, feature_len, feature_names, FeatureVector, SCHEMA_ID};
use crate::homsolve::{solve_effective, ConductionProblem, SolverSettings, BOUND_AUDIT_TOL};
use crate::microgen::{generate_rsa, GenSpec, InclusionKind, VoxelGrid};
use crate::rng::stream_rng;
use crate::spd::{loewner_leq, loewner_margin, SymMat};
use crate::surrogate::Sample;

pub const MANIFEST_VERSION: u32 = 1;
pub const GRID_VERSION: u16 = 1;
const GRID_MAGIC: &[u8; 4] = b"VRVG";

/// Generation retries per structure, each on a fresh stream.
pub const GENERATION_RETRIES: u64 = 4;

pub const SCENARIO_A_CONTRASTS: [f64; 4] = [0.01, 0.2, 5.0, 100.0];
pub const SCENARIO_A_FRACTION: f64 = 0.2;
pub const SCENARIO_B_FRACTION: f64 = 0.01;

/// The twelve training contrasts `{1/100, 1/50, …, 50, 100}`.
pub fn train_contrasts() -> Vec<f64> {
    let up = [2.0, 5.0, 10.0, 20.0, 50.0, 100.0];
    let mut v: Vec<f64> = up.iter().rev().map(|r| 1.0 / r).collect();
    v.extend(up);
    v
}

/// Every integer contrast and its reciprocal from 2 to 100, ascending (198 values).
pub fn dense_contrasts() -> Vec<f64> {
    let mut v: Vec<f64> = (2..=100).rev().map(|k| 1.0 / k as f64).collect();
    v.extend((2..=100).map(|k| k as f64));
    v
}

/// A 24-value subset of [`dense_contrasts`] for small validation runs.
pub fn desk_validation_contrasts() -> Vec<f64> {
    let up = [2, 3, 4, 6, 8, 12, 16, 25, 35, 50, 70, 100];
    let mut v: Vec<f64> = up.iter().rev().map(|&k| 1.0 / k as f64).collect();
    v.extend(up.iter().map(|&k| k as f64));
    v
}

fn check_contrasts(contrasts: &[f64]) -> Result<()> {
    if contrasts.is_empty() {
        return Err(Error::invalid("empty contrast list"));
    }
    if let Some(r) = contrasts.iter().find(|r| !(r.is_finite() && **r > 0.0) || **r == 1.0) {
        return Err(Error::invalid(format!("contrast {r} must be positive and differ from 1")));
    }
    let mut seen = HashSet::new();
    if let Some(r) = contrasts.iter().find(|r| !seen.insert(r.to_bits())) {
        return Err(Error::invalid(format!("contrast {r} listed twice")));
    }
    Ok(())
}

pub fn write_grid(g: &VoxelGrid, mut w: impl Write) -> Result<()> {
    w.write_all(GRID_MAGIC)?;
    w.write_all(&GRID_VERSION.to_le_bytes())?;
    w.write_all(&[g.dim() as u8])?;
    for &n in g.shape() {
        w.write_all(&(n as u32).to_le_bytes())?;
    }
    w.write_all(&g.to_packed_bytes())?;
    w.flush()?;
    Ok(())
}

pub fn read_grid(mut r: impl Read) -> Result<VoxelGrid> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    if buf.len() < 7 || &buf[..4] != GRID_MAGIC {
        return Err(Error::CorruptFile("not a voxel grid file".into()));
    }
    let version = u16::from_le_bytes([buf[4], buf[5]]);
    if version != GRID_VERSION {
        return Err(Error::UnsupportedSchema {
            found: format!("grid v{version}"),
            expected: format!("grid v{GRID_VERSION}"),
        });
    }
    let dim = buf[6] as usize;
    let header = 7 + 4 * dim;
    if buf.len() < header {
        return Err(Error::CorruptFile("grid header truncated".into()));
    }
    let shape: Vec<usize> = buf[7..header]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().expect("4 bytes")) as usize)
        .collect();
    VoxelGrid::from_packed_bytes(&shape, &buf[header..]).map_err(|e| match e {
        Error::InvalidInput(msg) => Error::CorruptFile(format!("grid: {msg}")),
        other => other,
    })
}

pub fn save_grid(g: &VoxelGrid, path: &Path) -> Result<()> {
    write_grid(g, std::io::BufWriter::new(std::fs::File::create(path)?))
}

pub fn load_grid(path: &Path) -> Result<VoxelGrid> {
    read_grid(std::fs::File::open(path)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
}

impl Split {
    fn prefix(self) -> &'static str {
        match self {
            Split::Train => "tr",
            Split::Validation => "va",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub gen: GenSpec,
    pub count: usize,
    pub contrasts: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub train: SplitSpec,
    pub validation: SplitSpec,
    #[serde(default)]
    pub solver: SolverSettings,
}

impl DatasetConfig {
    /// Training structures carry disks and rectangles; validation structures
    /// carry ellipses and rectangles drawn from an independent seed.
    pub fn desk_2d(n_train: usize, n_val: usize, resolution: usize, seed: u64) -> Self {
        let base = GenSpec {
            aspect_range: (0.25, 1.0),
            random_orientation: true,
            ..GenSpec::mixed_2d(resolution, (0.18, 0.84), seed)
        };
        DatasetConfig {
            train: SplitSpec {
                gen: GenSpec {
                    kinds: vec![InclusionKind::Disk, InclusionKind::Rectangle],
                    ..base.clone()
                },
                count: n_train,
                contrasts: train_contrasts(),
            },
            validation: SplitSpec {
                gen: GenSpec {
                    kinds: vec![InclusionKind::Ellipse, InclusionKind::Rectangle],
                    seed: seed.wrapping_add(1),
                    ..base
                },
                count: n_val,
                contrasts: desk_validation_contrasts(),
            },
            solver: SolverSettings::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for s in [&self.train, &self.validation] {
            s.gen.validate()?;
            check_contrasts(&s.contrasts)?;
        }
        if self.train.gen.shape != self.validation.gen.shape {
            return Err(Error::invalid("train and validation grids differ in shape"));
        }
        if self.train.count == 0 {
            return Err(Error::EmptySplit("no training structures requested".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub id: String,
    /// `None` when the structure itself could not be generated.
    pub contrast: Option<f64>,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub gen: GenSpec,
    pub contrasts: Vec<f64>,
    pub requested: usize,
    /// Structures that were generated and featurized.
    pub ids: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub dim: usize,
    pub resolution: Vec<usize>,
    pub feature_schema: String,
    pub solver: SolverSettings,
    pub train: SplitSummary,
    pub validation: SplitSummary,
    pub failures: Vec<Failure>,
    /// False when any structure or solve failed.
    pub complete: bool,
}

impl Manifest {
    pub fn split(&self, split: Split) -> &SplitSummary {
        match split {
            Split::Train => &self.train,
            Split::Validation => &self.validation,
        }
    }

    pub fn split_of(&self, id: &str) -> Option<Split> {
        if self.train.ids.iter().any(|s| s == id) {
            Some(Split::Train)
        } else if self.validation.ids.iter().any(|s| s == id) {
            Some(Split::Validation)
        } else {
            None
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != MANIFEST_VERSION {
            return Err(Error::UnsupportedSchema {
                found: format!("manifest v{}", self.schema_version),
                expected: format!("manifest v{MANIFEST_VERSION}"),
            });
        }
        if self.feature_schema != SCHEMA_ID {
            return Err(Error::UnsupportedSchema {
                found: self.feature_schema.clone(),
                expected: SCHEMA_ID.into(),
            });
        }
        let train: HashSet<&str> = self.train.ids.iter().map(String::as_str).collect();
        if train.len() != self.train.ids.len() {
            return Err(Error::CorruptFile("duplicate training ids".into()));
        }
        if let Some(id) = self.validation.ids.iter().find(|id| train.contains(id.as_str())) {
            return Err(Error::CorruptFile(format!("structure {id} is in both splits")));
        }
        if self.resolution.len() != self.dim {
            return Err(Error::CorruptFile("resolution does not match dimension".into()));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer_pretty(&mut f, self)?;
        f.write_all(b"\n")?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| Error::CorruptFile(format!("manifest: {e}")))?;
        if let Some(v) = value.get("schema_version").and_then(|v| v.as_u64()) {
            if v != MANIFEST_VERSION as u64 {
                return Err(Error::UnsupportedSchema {
                    found: format!("manifest v{v}"),
                    expected: format!("manifest v{MANIFEST_VERSION}"),
                });
            }
        }
        let m: Manifest = serde_json::from_value(value).map_err(|e| Error::CorruptFile(format!("manifest: {e}")))?;
        m.validate()?;
        Ok(m)
    }
}

/// One solved (structure, contrast) pair.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleRecord {
    pub id: String,
    pub contrast: f64,
    pub target: SymMat,
    pub voigt: SymMat,
    pub reuss: SymMat,
    pub residual: f64,
}

impl SampleRecord {
    pub fn key(&self) -> SampleKey {
        SampleKey {
            id: self.id.clone(),
            contrast: self.contrast,
        }
    }

    pub fn bounds(&self) -> Result<BoundsPair> {
        BoundsPair::from_bounds(self.voigt.clone(), self.reuss.clone(), DEFAULT_EPS_REL)
    }

    /// Checks `Reuss ⪯ target ⪯ Voigt` at [`BOUND_AUDIT_TOL`].
    pub fn audit(&self) -> Result<()> {
        for (lo, hi, which) in [
            (&self.reuss, &self.target, "below Reuss"),
            (&self.target, &self.voigt, "above Voigt"),
        ] {
            if !loewner_leq(lo, hi, BOUND_AUDIT_TOL)? {
                return Err(Error::BoundViolation {
                    eigenvalue: loewner_margin(lo, hi)?,
                    context: format!("{} at R = {} lies {which} bound", self.id, self.contrast),
                });
            }
        }
        Ok(())
    }
}

/// Identifies a sample as `id@R`.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleKey {
    pub id: String,
    pub contrast: f64,
}

impl fmt::Display for SampleKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.id, self.contrast)
    }
}

impl FromStr for SampleKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (id, r) = s
            .rsplit_once('@')
            .ok_or_else(|| Error::invalid(format!("sample key {s:?} lacks '@'")))?;
        let contrast = r
            .parse()
            .map_err(|_| Error::invalid(format!("sample key {s:?} has a bad contrast")))?;
        Ok(SampleKey {
            id: id.to_string(),
            contrast,
        })
    }
}

fn tensor_columns(prefix: &str, m: usize) -> Vec<String> {
    let mut v = Vec::new();
    for i in 0..m {
        for j in i..m {
            v.push(format!("{prefix}_{i}{j}"));
        }
    }
    v
}

pub fn targets_header(m: usize) -> Vec<String> {
    let mut h = vec!["id".to_string(), "R".to_string()];
    for p in ["k", "voigt", "reuss"] {
        h.extend(tensor_columns(p, m));
    }
    h.push("residual".into());
    h
}

pub fn write_targets(records: &[SampleRecord], m: usize, w: impl Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(targets_header(m))?;
    for r in records {
        let mut row = vec![r.id.clone(), r.contrast.to_string()];
        for t in [&r.target, &r.voigt, &r.reuss] {
            if t.dim() != m {
                return Err(Error::invalid(format!("record {} holds a {}D tensor", r.id, t.dim())));
            }
            row.extend(t.packed().iter().map(f64::to_string));
        }
        row.push(r.residual.to_string());
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

fn parse_f64(s: &str, what: &str) -> Result<f64> {
    s.parse()
        .map_err(|_| Error::CorruptFile(format!("{what}: cannot parse {s:?} as a number")))
}

pub fn read_targets(r: impl Read, m: usize) -> Result<Vec<SampleRecord>> {
    let mut rdr = csv::Reader::from_reader(r);
    let header: Vec<String> = rdr.headers()?.iter().map(String::from).collect();
    if header != targets_header(m) {
        return Err(Error::CorruptFile(format!("unexpected targets header {header:?}")));
    }
    let p = m * (m + 1) / 2;
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| Error::CorruptFile(format!("targets: {e}")))?;
        if row.len() != 3 + 3 * p {
            return Err(Error::CorruptFile(format!("targets row has {} fields", row.len())));
        }
        let nums: Vec<f64> = row
            .iter()
            .skip(1)
            .map(|s| parse_f64(s, "targets"))
            .collect::<Result<_>>()?;
        let tensor = |k: usize| SymMat::from_packed(m, nums[1 + k * p..1 + (k + 1) * p].to_vec());
        out.push(SampleRecord {
            id: row[0].to_string(),
            contrast: nums[0],
            target: tensor(0)?,
            voigt: tensor(1)?,
            reuss: tensor(2)?,
            residual: nums[1 + 3 * p],
        });
    }
    Ok(out)
}

pub fn write_features(features: &BTreeMap<String, FeatureVector>, dim: usize, w: impl Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["id".to_string()];
    header.extend(feature_names(dim));
    out.write_record(&header)?;
    for (id, fv) in features {
        if fv.values.len() != feature_len(dim) {
            return Err(Error::invalid(format!("features of {id} have length {}", fv.values.len())));
        }
        let mut row = vec![id.clone()];
        row.extend(fv.values.iter().map(f64::to_string));
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_features(r: impl Read, dim: usize) -> Result<BTreeMap<String, FeatureVector>> {
    let mut rdr = csv::Reader::from_reader(r);
    let header: Vec<String> = rdr.headers()?.iter().map(String::from).collect();
    let mut want = vec!["id".to_string()];
    want.extend(feature_names(dim));
    if header != want {
        return Err(Error::UnsupportedSchema {
            found: format!("feature columns {header:?}"),
            expected: format!("{SCHEMA_ID} columns"),
        });
    }
    let mut out = BTreeMap::new();
    for row in rdr.records() {
        let row = row.map_err(|e| Error::CorruptFile(format!("features: {e}")))?;
        let values = row
            .iter()
            .skip(1)
            .map(|s| parse_f64(s, "features"))
            .collect::<Result<Vec<_>>>()?;
        let fv = FeatureVector {
            values,
            schema: SCHEMA_ID.into(),
        };
        if out.insert(row[0].to_string(), fv).is_some() {
            return Err(Error::CorruptFile(format!("features list {} twice", &row[0])));
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub manifest: Manifest,
    pub grids: BTreeMap<String, VoxelGrid>,
    pub features: BTreeMap<String, FeatureVector>,
    /// Ordered by split, structure, then contrast list order.
    pub records: Vec<SampleRecord>,
}

impl Dataset {
    pub fn tensor_dim(&self) -> usize {
        self.manifest.dim
    }

    pub fn records_in(&self, split: Split) -> impl Iterator<Item = &SampleRecord> + '_ {
        let ids: HashSet<&str> = self.manifest.split(split).ids.iter().map(String::as_str).collect();
        self.records.iter().filter(move |r| ids.contains(r.id.as_str()))
    }

    pub fn sample(&self, r: &SampleRecord) -> Result<Sample> {
        let fv = self
            .features
            .get(&r.id)
            .ok_or_else(|| Error::CorruptFile(format!("no features for {}", r.id)))?;
        Sample::new(r.key().to_string(), r.contrast, assemble_input(fv, r.contrast)?, r.target.clone(), r.bounds()?)
    }

    pub fn samples(&self, split: Split) -> Result<Vec<Sample>> {
        self.records_in(split).map(|r| self.sample(r)).collect()
    }

    /// Samples for the given keys, in key order.
    pub fn samples_for(&self, keys: &[SampleKey]) -> Result<Vec<Sample>> {
        let index: BTreeMap<(&str, u64), &SampleRecord> = self
            .records
            .iter()
            .map(|r| ((r.id.as_str(), r.contrast.to_bits()), r))
            .collect();
        keys.iter()
            .map(|k| {
                let r = index
                    .get(&(k.id.as_str(), k.contrast.to_bits()))
                    .ok_or_else(|| Error::invalid(format!("no sample {k}")))?;
                self.sample(r)
            })
            .collect()
    }

    /// Writes the manifest, the grids and whichever tables are non-empty.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let grid_dir = dir.join("grids");
        std::fs::create_dir_all(&grid_dir)?;
        self.manifest.save(&dir.join("manifest.json"))?;
        for (id, g) in &self.grids {
            save_grid(g, &grid_dir.join(format!("{id}.vrvg")))?;
        }
        if !self.records.is_empty() {
            self.save_targets(dir)?;
        }
        if !self.features.is_empty() {
            self.save_features(dir)?;
        }
        Ok(())
    }

    pub fn save_targets(&self, dir: &Path) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(dir.join("targets.csv"))?);
        write_targets(&self.records, self.tensor_dim(), f)
    }

    pub fn save_features(&self, dir: &Path) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(dir.join("features.csv"))?);
        write_features(&self.features, self.tensor_dim(), f)
    }

    /// Loads a dataset directory and audits every stored target against its bounds.
    ///
    /// The tables are optional so that partially built datasets can be read;
    /// a features table that is present must cover every structure.
    pub fn load(dir: &Path) -> Result<Self> {
        let manifest = Manifest::load(&dir.join("manifest.json"))?;
        let m = manifest.dim;
        let targets_path = dir.join("targets.csv");
        let records = if targets_path.exists() {
            read_targets(std::fs::File::open(targets_path)?, m)?
        } else {
            Vec::new()
        };
        let features_path = dir.join("features.csv");
        let has_features = features_path.exists();
        let features = if has_features {
            read_features(std::fs::File::open(features_path)?, m)?
        } else {
            BTreeMap::new()
        };
        let mut grids = BTreeMap::new();
        for id in manifest.train.ids.iter().chain(&manifest.validation.ids) {
            let g = load_grid(&dir.join("grids").join(format!("{id}.vrvg")))?;
            if g.shape() != manifest.resolution.as_slice() {
                return Err(Error::CorruptFile(format!("grid {id} has shape {:?}", g.shape())));
            }
            if has_features && !features.contains_key(id) {
                return Err(Error::CorruptFile(format!("no features for {id}")));
            }
            grids.insert(id.clone(), g);
        }
        for r in &records {
            if !grids.contains_key(&r.id) {
                return Err(Error::CorruptFile(format!("record for unknown structure {}", r.id)));
            }
            r.audit()?;
        }
        Ok(Dataset {
            manifest,
            grids,
            features,
            records,
        })
    }
}

fn make_structure(spec: &GenSpec, id: &str, index: usize) -> std::result::Result<VoxelGrid, Failure> {
    let mut last = String::new();
    for retry in 0..GENERATION_RETRIES {
        let stream = index as u64 | (retry << 32);
        match generate_rsa(&spec.clone().with_stream(stream)) {
            Ok(g) if g.count_ones() > 0 && g.count_ones() < g.len() => return Ok(g),
            Ok(_) => last = "generated a single-phase grid".into(),
            Err(e) => last = e.to_string(),
        }
    }
    Err(Failure {
        id: id.to_string(),
        contrast: None,
        reason: last,
    })
}

fn solve_record(id: &str, grid: &VoxelGrid, contrast: f64, settings: &SolverSettings) -> Result<SampleRecord> {
    let p = ConductionProblem::with_contrast(grid.clone(), contrast)?;
    let res = solve_effective(&p, settings)?;
    let b = make_bounds(&p.phase_system()?, DEFAULT_EPS_REL)?;
    Ok(SampleRecord {
        id: id.to_string(),
        contrast,
        target: res.kappa_eff,
        voigt: b.y_voigt,
        reuss: b.y_reuss,
        residual: res.residuals.iter().copied().fold(0.0, f64::max),
    })
}

/// Generates the grids of both splits; features and targets stay empty.
///
/// Structures that fail to generate after [`GENERATION_RETRIES`] fresh
/// streams are listed as failures and left out of the split.
pub fn generate_structures(cfg: &DatasetConfig) -> Result<Dataset> {
    cfg.validate()?;
    let mut failures = Vec::new();
    let mut grids = BTreeMap::new();
    let mut summaries = Vec::new();
    for (split, spec) in [(Split::Train, &cfg.train), (Split::Validation, &cfg.validation)] {
        let made: Vec<_> = (0..spec.count)
            .into_par_iter()
            .map(|i| {
                let id = format!("{}{i:05}", split.prefix());
                make_structure(&spec.gen, &id, i).map(|g| (id, g))
            })
            .collect();
        let mut ids = Vec::new();
        for m in made {
            match m {
                Ok((id, g)) => {
                    ids.push(id.clone());
                    grids.insert(id, g);
                }
                Err(f) => failures.push(f),
            }
        }
        summaries.push(SplitSummary {
            gen: spec.gen.clone(),
            contrasts: spec.contrasts.clone(),
            requested: spec.count,
            ids,
        });
    }
    let validation = summaries.pop().expect("two splits");
    let train = summaries.pop().expect("two splits");
    if train.ids.is_empty() {
        return Err(Error::EmptySplit("every training structure failed to generate".into()));
    }
    let manifest = Manifest {
        schema_version: MANIFEST_VERSION,
        dim: cfg.train.gen.shape.len(),
        resolution: cfg.train.gen.shape.clone(),
        feature_schema: SCHEMA_ID.into(),
        solver: cfg.solver.clone(),
        train,
        validation,
        complete: failures.is_empty(),
        failures,
    };
    manifest.validate()?;
    Ok(Dataset {
        manifest,
        grids,
        features: BTreeMap::new(),
        records: Vec::new(),
    })
}

/// Extracts descriptors of every grid, replacing any present.
pub fn featurize(ds: &mut Dataset) -> Result<()> {
    let grids: Vec<(&String, &VoxelGrid)> = ds.grids.iter().collect();
    let out: Vec<(String, FeatureVector)> = grids
        .par_iter()
        .map(|(id, g)| Ok(((*id).clone(), extract_features(g)?)))
        .collect::<Result<_>>()?;
    ds.features = out.into_iter().collect();
    Ok(())
}

/// Solves every (structure, contrast) pair of both splits, replacing any
/// stored targets. Failed solves are appended to the manifest failures.
pub fn solve_all(ds: &mut Dataset) -> Result<()> {
    let settings = ds.manifest.solver.clone();
    let mut pairs: Vec<(&str, f64)> = Vec::new();
    for split in [&ds.manifest.train, &ds.manifest.validation] {
        for id in &split.ids {
            pairs.extend(split.contrasts.iter().map(|&r| (id.as_str(), r)));
        }
    }
    let solved: Vec<std::result::Result<SampleRecord, Failure>> = pairs
        .par_iter()
        .map(|&(id, r)| {
            let grid = ds
                .grids
                .get(id)
                .ok_or_else(|| Error::CorruptFile(format!("no grid for {id}")));
            grid.and_then(|g| solve_record(id, g, r, &settings)).map_err(|e| Failure {
                id: id.to_string(),
                contrast: Some(r),
                reason: e.to_string(),
            })
        })
        .collect();
    let mut records = Vec::with_capacity(solved.len());
    ds.manifest.failures.retain(|f| f.contrast.is_none());
    for s in solved {
        match s {
            Ok(r) => records.push(r),
            Err(f) => ds.manifest.failures.push(f),
        }
    }
    ds.records = records;
    ds.manifest.complete = ds.manifest.failures.is_empty();
    Ok(())
}

/// Generates, featurizes and solves both splits on the ambient rayon pool.
///
/// Output is independent of the thread count.
pub fn build_dataset(cfg: &DatasetConfig) -> Result<Dataset> {
    let mut ds = generate_structures(cfg)?;
    featurize(&mut ds)?;
    solve_all(&mut ds)?;
    Ok(ds)
}

/// Training subsets: `O` keeps everything, `A` keeps 20% of the structures at
/// four contrasts, `B` keeps 1% of the structures at every contrast.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scenario {
    O,
    A,
    B,
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "O" | "o" => Ok(Scenario::O),
            "A" | "a" => Ok(Scenario::A),
            "B" | "b" => Ok(Scenario::B),
            _ => Err(Error::invalid(format!("unknown scenario {s:?}, expected O, A or B"))),
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

fn pick_structures(ids: &[String], fraction: f64, seed: u64, stream: u64) -> Result<HashSet<String>> {
    let n = (fraction * ids.len() as f64).round() as usize;
    if n == 0 {
        return Err(Error::invalid(format!(
            "{:.0}% of {} structures rounds to none",
            100.0 * fraction,
            ids.len()
        )));
    }
    let mut pool = ids.to_vec();
    pool.shuffle(&mut stream_rng(seed, stream));
    pool.truncate(n);
    Ok(pool.into_iter().collect())
}

/// Training sample keys of a scenario, in dataset record order.
///
/// Fractions refer to the structures of the training split, so `A` and `B`
/// drawn with the same seed need not share structures.
pub fn scenario_subset(ds: &Dataset, scenario: Scenario, seed: u64) -> Result<Vec<SampleKey>> {
    let split = &ds.manifest.train;
    let train: Vec<&SampleRecord> = ds.records_in(Split::Train).collect();
    let keep: Box<dyn Fn(&SampleRecord) -> bool> = match scenario {
        Scenario::O => Box::new(|_| true),
        Scenario::A => {
            for r in SCENARIO_A_CONTRASTS {
                if !split.contrasts.contains(&r) {
                    return Err(Error::invalid(format!("scenario A needs contrast {r}, absent from the training list")));
                }
            }
            let ids = pick_structures(&split.ids, SCENARIO_A_FRACTION, seed, 0xA)?;
            Box::new(move |r| ids.contains(&r.id) && SCENARIO_A_CONTRASTS.contains(&r.contrast))
        }
        Scenario::B => {
            let ids = pick_structures(&split.ids, SCENARIO_B_FRACTION, seed, 0xB)?;
            Box::new(move |r| ids.contains(&r.id))
        }
    };
    Ok(train.into_iter().filter(|r| keep(r)).map(SampleRecord::key).collect())
}
