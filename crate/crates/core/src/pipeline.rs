//! End-to-end runs: acquire or load data, reconstruct with every requested
//! method, and score the results against the data and a reference Bell curve.
//!
//! Every run is a pure function of its [`PipelineConfig`]; outputs are
//! returned as an ordered map of relative paths to file contents.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bell::{bell_curve, measured_bell_curve, theta_grid, BellCurve, DEFAULT_GRID_POINTS};
use crate::error::{Error, Result};
use crate::estimators::{mle_fit, MleConfig, MleReport};
use crate::io::{
    load_data, load_state_source, read_json, to_json, DataFile, StateFile, StateSource,
};
use crate::measure::{
    bootstrap_resample, counts_to_distribution, derive_seed, multibasis_to_pauli6,
    pauli6_to_multibasis, simulate_experiment, CountsDataset, MultiBasisDataset, NoiseModel,
    ShotNoise, DEFAULT_BELL_COUNTS, DEFAULT_PAULI_TOTAL, DEFAULT_TETRA_TOTAL,
};
use crate::nqs::{
    kl_divergence, mean_basis_kl, povm_rbm_distribution, rho_from_model, train_positive_real,
    train_povm_rbm, train_pure, train_purification, Ansatz, ModelFile, NqsModel, PovmRbmModel,
    PurificationArch, TrainConfig, Trained,
};
use crate::povm::{dual_frame, linear_reconstruct, OutcomeDistribution, PovmKind, ProductPovm};
use crate::qcore::{bell_state, fidelity_pure, phased_bell_state, purity, DensityMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// Noisy simulated coincidence measurement.
    ExperimentSim,
    /// Multinomial samples of the exact outcome distribution, no axis errors.
    SyntheticExact,
    /// Datasets read from `inputs`.
    FromFiles,
}

/// Built-in two-qubit states.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TargetState {
    /// `(|↑↑⟩ + |↓↓⟩)/√2`.
    Bell,
    /// `p |Bell⟩⟨Bell| + (1 − p) 𝟙/4`.
    Werner { p: f64 },
    /// `p |Φ_φ⟩⟨Φ_φ| + (1 − p) 𝟙/4` with `|Φ_φ⟩ = (|↑↑⟩ + e^{iφ}|↓↓⟩)/√2`.
    MixedBell {
        p: f64,
        #[serde(default)]
        phase: f64,
    },
}

impl TargetState {
    pub fn state(&self) -> Result<DensityMatrix> {
        match *self {
            TargetState::Bell => Ok(bell_state().projector()),
            TargetState::Werner { p } => DensityMatrix::werner(&bell_state(), p),
            TargetState::MixedBell { p, phase } => {
                DensityMatrix::werner(&phased_bell_state(phase), p)
            }
        }
    }

    /// Default truth of a simulated scenario.
    pub fn default_for(scenario: Scenario) -> Option<Self> {
        match scenario {
            Scenario::ExperimentSim => Some(TargetState::MixedBell {
                p: 0.95,
                phase: 0.1,
            }),
            Scenario::SyntheticExact => Some(TargetState::MixedBell {
                p: 0.93,
                phase: 0.0,
            }),
            Scenario::FromFiles => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Linear,
    Mle,
    Povm,
    Purification,
    Pure,
    PositiveReal,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Linear,
        Method::Mle,
        Method::Povm,
        Method::Purification,
        Method::Pure,
        Method::PositiveReal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Linear => "linear",
            Method::Mle => "mle",
            Method::Povm => "povm",
            Method::Purification => "purification",
            Method::Pure => "pure",
            Method::PositiveReal => "positive_real",
        }
    }

    /// Whether the method runs once per configured POVM.
    pub fn per_povm(self) -> bool {
        matches!(self, Method::Linear | Method::Mle | Method::Povm)
    }
}

impl From<Ansatz> for Method {
    fn from(a: Ansatz) -> Self {
        match a {
            Ansatz::Povm => Method::Povm,
            Ansatz::Purification => Method::Purification,
            Ansatz::Pure => Method::Pure,
            Ansatz::PositiveReal => Method::PositiveReal,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown method {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseSettings {
    pub sigma_angle: f64,
    pub shot_noise: bool,
}

impl Default for NoiseSettings {
    fn default() -> Self {
        Self {
            sigma_angle: 0.035,
            shot_noise: true,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingSettings {
    pub povm: TrainConfig,
    pub purification: TrainConfig,
    pub pure: TrainConfig,
    pub positive_real: TrainConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArchSettings {
    pub povm_hidden: usize,
    pub purification: PurificationArch,
    pub positive_real_hidden: usize,
}

impl Default for ArchSettings {
    fn default() -> Self {
        Self {
            povm_hidden: 3,
            purification: PurificationArch::default(),
            positive_real_hidden: 3,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InputFiles {
    /// Pauli-6 counts, Pauli-4 counts, or a multi-basis file.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pauli: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tetra: Option<PathBuf>,
    /// `theta,S[,std]` curve used as the deviation reference.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bell_reference: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub scenario: Scenario,
    /// Truth for simulated scenarios; defaults per scenario.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target: Option<TargetState>,
    /// POVMs used by the linear, MLE and POVM-RBM methods.
    pub povms: Vec<PovmKind>,
    pub methods: Vec<Method>,
    pub noise: NoiseSettings,
    pub pauli_total: u64,
    pub tetra_total: u64,
    pub bell_counts: u64,
    pub theta_points: usize,
    /// Resamples for the spread of the linear and MLE curves (0 disables).
    pub bootstrap: usize,
    pub mle: MleConfig,
    pub train: TrainingSettings,
    pub arch: ArchSettings,
    pub inputs: InputFiles,
    /// Previously saved states or models scored alongside the methods.
    pub artifacts: Vec<Artifact>,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub label: String,
    pub path: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            scenario: Scenario::ExperimentSim,
            target: None,
            povms: vec![PovmKind::Pauli6, PovmKind::Tetra],
            methods: Method::ALL.to_vec(),
            noise: NoiseSettings::default(),
            pauli_total: DEFAULT_PAULI_TOTAL,
            tetra_total: DEFAULT_TETRA_TOTAL,
            bell_counts: DEFAULT_BELL_COUNTS,
            theta_points: DEFAULT_GRID_POINTS,
            bootstrap: 0,
            mle: MleConfig::default(),
            train: TrainingSettings::default(),
            arch: ArchSettings::default(),
            inputs: InputFiles::default(),
            artifacts: Vec::new(),
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.noise.sigma_angle >= 0.0) || !self.noise.sigma_angle.is_finite() {
            return bad("noise.sigma_angle must be finite and ≥ 0");
        }
        if self.pauli_total == 0 || self.tetra_total == 0 || self.bell_counts == 0 {
            return bad("count totals must be positive");
        }
        if self.theta_points == 0 {
            return bad("theta_points must be ≥ 1");
        }
        if self.methods.iter().any(|m| m.per_povm()) && self.povms.is_empty() {
            return bad("linear, mle and povm methods need at least one entry in povms");
        }
        self.mle.validate()?;
        for cfg in [
            &self.train.povm,
            &self.train.purification,
            &self.train.pure,
            &self.train.positive_real,
        ] {
            cfg.validate()?;
        }
        for a in &self.artifacts {
            if !a.path.is_file() {
                return Err(Error::Config(format!(
                    "artifact {} is missing: {}",
                    a.label,
                    a.path.display()
                )));
            }
        }
        if self.scenario == Scenario::FromFiles {
            if self.inputs.pauli.is_none() && self.inputs.tetra.is_none() {
                return bad("from_files needs inputs.pauli or inputs.tetra");
            }
            for p in [
                &self.inputs.pauli,
                &self.inputs.tetra,
                &self.inputs.bell_reference,
            ]
            .into_iter()
            .flatten()
            {
                if !p.is_file() {
                    return Err(Error::Config(format!(
                        "input file {} does not exist",
                        p.display()
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn target_state(&self) -> Option<TargetState> {
        match self.scenario {
            Scenario::FromFiles => None,
            s => self.target.or(TargetState::default_for(s)),
        }
    }
}

/// Measurement records available to the methods.
#[derive(Clone, Debug, Default)]
pub struct Datasets {
    pub pauli6: Option<CountsDataset>,
    /// Pauli-4 counts loaded directly (otherwise derived from `pauli6`).
    pub pauli4: Option<CountsDataset>,
    pub multibasis: Option<MultiBasisDataset>,
    pub tetra: Option<CountsDataset>,
}

impl Datasets {
    pub fn counts_for(&self, kind: PovmKind) -> Result<CountsDataset> {
        let missing = || Error::Config(format!("no {kind} data available"));
        match kind {
            PovmKind::Pauli6 => self.pauli6.clone().ok_or_else(missing),
            PovmKind::Pauli4 => match (&self.pauli4, &self.pauli6) {
                (Some(c), _) => Ok(c.clone()),
                (None, Some(c)) => c.coarse_grained(),
                _ => Err(missing()),
            },
            PovmKind::Tetra => self.tetra.clone().ok_or_else(missing),
        }
    }

    /// Datasets derivable from a single file.
    pub fn from_file(file: DataFile) -> Result<Self> {
        let mut data = Datasets::default();
        match file {
            DataFile::MultiBasis(mb) => {
                data.pauli6 = Some(multibasis_to_pauli6(&mb)?);
                data.multibasis = Some(mb);
            }
            DataFile::Counts(c) => match c.kind() {
                PovmKind::Pauli6 => {
                    data.multibasis = Some(pauli6_to_multibasis(&c)?);
                    data.pauli6 = Some(c);
                }
                PovmKind::Pauli4 => data.pauli4 = Some(c),
                PovmKind::Tetra => data.tetra = Some(c),
            },
        }
        Ok(data)
    }

    /// The POVM a single-file dataset was recorded with.
    pub fn primary_kind(&self) -> Option<PovmKind> {
        if self.pauli6.is_some() {
            Some(PovmKind::Pauli6)
        } else if self.pauli4.is_some() {
            Some(PovmKind::Pauli4)
        } else if self.tetra.is_some() {
            Some(PovmKind::Tetra)
        } else {
            None
        }
    }

    fn multibasis(&self) -> Result<&MultiBasisDataset> {
        self.multibasis
            .as_ref()
            .ok_or_else(|| Error::Config("wavefunction ansätze need Pauli-6 data".into()))
    }
}

fn uses_pauli(kind: PovmKind) -> bool {
    kind != PovmKind::Tetra
}

/// Reads a configuration file, or the configuration recorded in a run
/// manifest.
pub fn load_config(path: &std::path::Path) -> Result<PipelineConfig> {
    let bad = |e: &dyn fmt::Display| Error::Config(format!("{}: {e}", path.display()));
    let mut value: serde_json::Value = read_json(path).map_err(|e| bad(&e))?;
    if value.get("tool").is_some() {
        if let Some(cfg) = value.get_mut("config") {
            value = cfg.take();
        }
    }
    serde_json::from_value(value).map_err(|e| bad(&e))
}

/// Truth state (if simulated) and the acquired datasets.
pub fn acquire(cfg: &PipelineConfig) -> Result<(Option<DensityMatrix>, Datasets)> {
    if cfg.scenario == Scenario::FromFiles {
        return Ok((None, load_inputs(cfg)?));
    }
    let truth = cfg
        .target_state()
        .expect("simulated scenarios have a target")
        .state()?;
    let sigma = match cfg.scenario {
        Scenario::ExperimentSim => cfg.noise.sigma_angle,
        _ => 0.0,
    };
    let shots = if cfg.noise.shot_noise {
        ShotNoise::Multinomial
    } else {
        ShotNoise::None
    };
    let mut data = Datasets::default();
    let want_pauli =
        cfg.povms.iter().any(|&k| uses_pauli(k)) || cfg.methods.iter().any(|m| !m.per_povm());
    // Pauli data doubles as the reference for the basis-resolved KL.
    if want_pauli || !cfg.methods.is_empty() {
        let noise = NoiseModel::new(sigma, derive_seed(cfg.seed, "noise-pauli"))?;
        let sim = simulate_experiment(
            &truth,
            PovmKind::Pauli6,
            cfg.pauli_total,
            &noise,
            shots,
            derive_seed(cfg.seed, "shots-pauli"),
        )?;
        data.pauli6 = Some(sim.counts);
        data.multibasis = sim.multibasis;
    }
    if cfg.povms.contains(&PovmKind::Tetra) {
        let noise = NoiseModel::new(sigma, derive_seed(cfg.seed, "noise-tetra"))?;
        let sim = simulate_experiment(
            &truth,
            PovmKind::Tetra,
            cfg.tetra_total,
            &noise,
            shots,
            derive_seed(cfg.seed, "shots-tetra"),
        )?;
        data.tetra = Some(sim.counts);
    }
    Ok((Some(truth), data))
}

fn load_inputs(cfg: &PipelineConfig) -> Result<Datasets> {
    let mut data = match &cfg.inputs.pauli {
        Some(path) => match load_data(path)? {
            DataFile::Counts(c) if c.kind() == PovmKind::Tetra => {
                return Err(Error::Config(format!(
                    "{} holds tetrahedral counts",
                    path.display()
                )));
            }
            file => Datasets::from_file(file)?,
        },
        None => Datasets::default(),
    };
    if let Some(path) = &cfg.inputs.tetra {
        match load_data(path)? {
            DataFile::Counts(c) if c.kind() == PovmKind::Tetra => data.tetra = Some(c),
            _ => {
                return Err(Error::Config(format!(
                    "{} holds no tetrahedral counts",
                    path.display()
                )))
            }
        }
    }
    Ok(data)
}

/// Linear or maximum-likelihood reconstruction of one dataset.
#[derive(Clone, Debug)]
pub struct Reconstruction {
    pub rho: DensityMatrix,
    pub fit: Option<MleReport>,
}

pub fn reconstruct_linear(counts: &CountsDataset) -> Result<Reconstruction> {
    let frame_kind = match counts.kind() {
        PovmKind::Pauli6 => PovmKind::Pauli4,
        k => k,
    };
    let frame = dual_frame(&ProductPovm::new(frame_kind, counts.n_qubits())?)?;
    let lin = linear_reconstruct(&counts_to_distribution(counts)?, &frame)?;
    Ok(Reconstruction {
        rho: lin.rho,
        fit: None,
    })
}

pub fn reconstruct_mle(counts: &CountsDataset, cfg: &MleConfig) -> Result<Reconstruction> {
    let povm = ProductPovm::new(counts.kind(), counts.n_qubits())?;
    let fit = mle_fit(counts, &povm, cfg)?;
    Ok(Reconstruction {
        rho: fit.rho,
        fit: Some(fit.report),
    })
}

/// State represented by a trained network; POVM models go through the
/// linear dual frame of their outcome distribution.
pub fn model_density_matrix(model: &NqsModel) -> Result<DensityMatrix> {
    match model {
        NqsModel::Povm(m) => povm_model_state(m),
        NqsModel::Wavefunction(m) => rho_from_model(m),
    }
}

fn povm_model_state(m: &PovmRbmModel) -> Result<DensityMatrix> {
    let q = povm_rbm_distribution(m)?;
    let frame = dual_frame(&ProductPovm::new(m.kind, m.n_qubits)?)?;
    Ok(linear_reconstruct(&q, &frame)?.rho)
}

/// Native training data of the POVM-RBM for a configured kind; Pauli-6
/// records are coarse-grained to Pauli-4 outcomes.
fn povm_training_data(data: &Datasets, kind: PovmKind) -> Result<OutcomeDistribution> {
    let kind = match kind {
        PovmKind::Pauli6 => PovmKind::Pauli4,
        k => k,
    };
    counts_to_distribution(&data.counts_for(kind)?)
}

/// Training entry point shared by the pipeline and the command line.
pub fn train_model(
    method: Method,
    data: &Datasets,
    povm: Option<PovmKind>,
    cfg: &PipelineConfig,
    train: &TrainConfig,
) -> Result<Trained<NqsModel>> {
    fn wrap<M>(t: Trained<M>, f: impl FnOnce(M) -> NqsModel) -> Trained<NqsModel> {
        Trained {
            model: f(t.model),
            trace: t.trace,
            meta: t.meta,
        }
    }
    let arch = &cfg.arch;
    match method {
        Method::Povm => {
            let kind = povm.unwrap_or(PovmKind::Pauli4);
            let q = povm_training_data(data, kind)?;
            Ok(wrap(
                train_povm_rbm(&q, arch.povm_hidden, train)?,
                NqsModel::Povm,
            ))
        }
        Method::Purification => Ok(wrap(
            train_purification(data.multibasis()?, arch.purification, train)?,
            NqsModel::Wavefunction,
        )),
        Method::Pure => Ok(wrap(
            train_pure(data.multibasis()?, arch.purification, train)?,
            NqsModel::Wavefunction,
        )),
        Method::PositiveReal => {
            let mb = data.multibasis()?;
            let z = "z".repeat(mb.n_qubits());
            Ok(wrap(
                train_positive_real(mb.counts(&z)?, arch.positive_real_hidden, train)?,
                NqsModel::Wavefunction,
            ))
        }
        Method::Linear | Method::Mle => {
            Err(Error::Config(format!("{method} is not a trainable ansatz")))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub label: String,
    pub method: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub povm: Option<PovmKind>,
    /// Count-weighted mean per-basis KL against the Pauli-6 data.
    pub pauli6_kl: Option<f64>,
    /// KL on the POVM-RBM's own outcome space.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub native_kl: Option<f64>,
    pub bell_max: f64,
    pub bell_max_deviation: Option<f64>,
    pub min_eigenvalue: f64,
    pub purity: f64,
    pub bell_fidelity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateSummary {
    pub purity: f64,
    pub min_eigenvalue: f64,
    pub bell_max: f64,
    pub bell_fidelity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    /// Source of the Bell reference curve, if any.
    pub reference: Option<String>,
    pub truth: Option<StateSummary>,
    pub rows: Vec<CompareRow>,
}

impl CompareReport {
    pub fn row(&self, label: &str) -> Option<&CompareRow> {
        self.rows.iter().find(|r| r.label == label)
    }

    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut out = String::from(
            "label,method,povm,pauli6_kl,native_kl,bell_max,bell_max_deviation,min_eigenvalue,purity,bell_fidelity\n",
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                r.label,
                r.method,
                r.povm.map(|k| k.name()).unwrap_or(""),
                opt(r.pauli6_kl),
                opt(r.native_kl),
                r.bell_max,
                opt(r.bell_max_deviation),
                r.min_eigenvalue,
                r.purity,
                r.bell_fidelity
            ));
        }
        out
    }
}

/// Everything one method produced.
#[derive(Clone, Debug)]
pub struct MethodResult {
    pub label: String,
    pub method: Method,
    pub povm: Option<PovmKind>,
    pub rho: DensityMatrix,
    pub fit: Option<MleReport>,
    pub trained: Option<Trained<NqsModel>>,
    pub native_kl: Option<f64>,
    pub curve: BellCurve,
}

/// Result of [`run_pipeline`]: the report plus every output file.
#[derive(Clone, Debug)]
pub struct PipelineRun {
    pub truth: Option<DensityMatrix>,
    pub data: Datasets,
    pub results: Vec<MethodResult>,
    pub report: CompareReport,
    pub files: BTreeMap<String, String>,
}

#[derive(Clone, Copy, Debug)]
struct Job {
    method: Method,
    povm: Option<PovmKind>,
}

impl Job {
    fn label(&self) -> String {
        method_label(self.method, self.povm)
    }
}

/// Row and file label of a method: `mle-tetra`, `purification`, ...
pub fn method_label(method: Method, povm: Option<PovmKind>) -> String {
    match povm {
        Some(k) if method.per_povm() => format!("{method}-{k}"),
        _ => method.to_string(),
    }
}

/// MLE settings of a run, seeded from the master seed.
pub fn mle_config_for(cfg: &PipelineConfig, kind: PovmKind) -> MleConfig {
    MleConfig {
        seed: derive_seed(cfg.seed, &format!("mle-{kind}")),
        ..cfg.mle.clone()
    }
}

fn jobs(cfg: &PipelineConfig) -> Vec<Job> {
    let mut out = Vec::new();
    for &method in &cfg.methods {
        if method.per_povm() {
            out.extend(cfg.povms.iter().map(|&k| Job {
                method,
                povm: Some(k),
            }));
        } else {
            out.push(Job { method, povm: None });
        }
    }
    out
}

/// Training settings of a method, seeded from the master seed and its label.
pub fn train_config_for(cfg: &PipelineConfig, method: Method, label: &str) -> TrainConfig {
    let base = match method {
        Method::Povm => &cfg.train.povm,
        Method::Purification => &cfg.train.purification,
        Method::Pure => &cfg.train.pure,
        _ => &cfg.train.positive_real,
    };
    TrainConfig {
        seed: derive_seed(cfg.seed ^ base.seed, &format!("train-{label}")),
        ..base.clone()
    }
}

fn run_job(job: Job, cfg: &PipelineConfig, data: &Datasets, grid: &[f64]) -> Result<MethodResult> {
    let label = job.label();
    let mut fit = None;
    let mut trained = None;
    let mut native_kl = None;
    let rho = match job.method {
        Method::Linear => {
            reconstruct_linear(&data.counts_for(job.povm.expect("per-POVM job"))?)?.rho
        }
        Method::Mle => {
            let kind = job.povm.expect("per-POVM job");
            let r = reconstruct_mle(&data.counts_for(kind)?, &mle_config_for(cfg, kind))?;
            fit = r.fit;
            r.rho
        }
        method => {
            let t = train_model(
                method,
                data,
                job.povm,
                cfg,
                &train_config_for(cfg, method, &label),
            )?;
            if let NqsModel::Povm(m) = &t.model {
                let q = povm_rbm_distribution(m)?;
                native_kl = Some(kl_divergence(
                    &povm_training_data(data, job.povm.expect("per-POVM job"))?,
                    &q,
                )?);
            }
            let rho = model_density_matrix(&t.model)?;
            trained = Some(t);
            rho
        }
    };
    let mut curve = bell_curve(&rho, grid, &label)?;
    if cfg.bootstrap > 0 && matches!(job.method, Method::Linear | Method::Mle) {
        curve.std = Some(bootstrap_std(job, cfg, data, grid)?);
    }
    Ok(MethodResult {
        label,
        method: job.method,
        povm: job.povm,
        rho,
        fit,
        trained,
        native_kl,
        curve,
    })
}

fn bootstrap_std(
    job: Job,
    cfg: &PipelineConfig,
    data: &Datasets,
    grid: &[f64],
) -> Result<Vec<f64>> {
    let kind = job.povm.expect("per-POVM job");
    let counts = data.counts_for(kind)?;
    let label = job.label();
    let curves = (0..cfg.bootstrap)
        .into_par_iter()
        .map(|r| {
            let c = bootstrap_resample(
                &counts,
                derive_seed(cfg.seed, &format!("bootstrap-{label}-{r}")),
            )?;
            let rho = match job.method {
                Method::Linear => reconstruct_linear(&c)?.rho,
                _ => reconstruct_mle(&c, &mle_config_for(cfg, kind))?.rho,
            };
            Ok(bell_curve(&rho, grid, "bootstrap")?.values)
        })
        .collect::<Result<Vec<_>>>()?;
    let n = curves.len() as f64;
    Ok((0..grid.len())
        .map(|i| {
            let mean = curves.iter().map(|c| c[i]).sum::<f64>() / n;
            let var =
                curves.iter().map(|c| (c[i] - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
            var.sqrt()
        })
        .collect())
}

/// Method name, POVM and state of a saved state or model file.
fn load_artifact(path: &std::path::Path) -> Result<(String, Option<PovmKind>, DensityMatrix)> {
    let value: serde_json::Value = read_json(path)?;
    if value.get("rho").is_some() {
        let file: StateFile = serde_json::from_value(value)?;
        return Ok((file.method, file.povm, file.rho));
    }
    match load_state_source(path)? {
        StateSource::State(rho) => Ok(("state".into(), None, rho)),
        StateSource::Model(m) => {
            let povm = match &m {
                NqsModel::Povm(p) => Some(p.kind),
                NqsModel::Wavefunction(_) => None,
            };
            Ok((m.ansatz().name().into(), povm, model_density_matrix(&m)?))
        }
    }
}

fn summarize(rho: &DensityMatrix, curve: &BellCurve) -> Result<StateSummary> {
    Ok(StateSummary {
        purity: purity(rho),
        min_eigenvalue: rho.min_eigenvalue(),
        bell_max: curve.max(),
        bell_fidelity: fidelity_pure(rho, &bell_state())?,
    })
}

fn data_files(data: &Datasets, files: &mut BTreeMap<String, String>) -> Result<()> {
    if let Some(c) = &data.pauli6 {
        files.insert("data/pauli6.json".into(), to_json(c)?);
    }
    if let Some(c) = &data.pauli4 {
        files.insert("data/pauli4.json".into(), to_json(c)?);
    }
    if let Some(m) = &data.multibasis {
        files.insert("data/multibasis.json".into(), to_json(m)?);
    }
    if let Some(c) = &data.tetra {
        files.insert("data/tetra.json".into(), to_json(c)?);
    }
    Ok(())
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    seed: u64,
    config: &'a PipelineConfig,
    files: Vec<String>,
}

/// Adds `manifest.json` listing the files, the configuration and the seed.
pub fn with_manifest(
    command: &str,
    cfg: &PipelineConfig,
    mut files: BTreeMap<String, String>,
) -> Result<BTreeMap<String, String>> {
    let manifest = Manifest {
        tool: "qtomo",
        version: env!("CARGO_PKG_VERSION"),
        command,
        seed: cfg.seed,
        config: cfg,
        files: files.keys().cloned().collect(),
    };
    files.insert("manifest.json".into(), to_json(&manifest)?);
    Ok(files)
}

/// Datasets (and truth) of a configuration as output files.
pub fn synth_outputs(cfg: &PipelineConfig) -> Result<BTreeMap<String, String>> {
    cfg.validate()?;
    let (truth, data) = acquire(cfg)?;
    let mut files = BTreeMap::new();
    data_files(&data, &mut files)?;
    if let Some(t) = &truth {
        files.insert(
            "truth.json".into(),
            to_json(&StateFile::new("truth", None, t, None))?,
        );
    }
    with_manifest("synth", cfg, files)
}

/// Acquires data, runs every configured method and scores the results.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineRun> {
    cfg.validate()?;
    let (truth, data) = acquire(cfg)?;
    let grid = theta_grid(cfg.theta_points);
    let results = jobs(cfg)
        .into_par_iter()
        .map(|job| run_job(job, cfg, &data, &grid))
        .collect::<Result<Vec<_>>>()?;

    let mut files = BTreeMap::new();
    data_files(&data, &mut files)?;
    let (reference, truth_summary) = match (&truth, &cfg.inputs.bell_reference) {
        (Some(t), _) => {
            let curve = bell_curve(t, &grid, "truth")?;
            files.insert(
                "truth.json".into(),
                to_json(&StateFile::new("truth", None, t, None))?,
            );
            files.insert("bell/truth.csv".into(), curve.to_csv());
            let direct = measured_bell_curve(
                t,
                &grid,
                cfg.bell_counts,
                derive_seed(cfg.seed, "bell-direct"),
            )?;
            files.insert("bell/direct.csv".into(), direct.to_csv());
            let summary = summarize(t, &curve)?;
            (Some(curve), Some(summary))
        }
        (None, Some(path)) => (
            Some(BellCurve::from_csv(
                "reference",
                &std::fs::read_to_string(path)?,
            )?),
            None,
        ),
        (None, None) => (None, None),
    };

    let mut rows = Vec::with_capacity(results.len());
    for r in &results {
        let summary = summarize(&r.rho, &r.curve)?;
        let deviation = reference
            .as_ref()
            .map(|c| r.curve.max_deviation(c))
            .transpose()?;
        let pauli6_kl = data
            .multibasis
            .as_ref()
            .map(|mb| mean_basis_kl(mb, &r.rho))
            .transpose()?;
        rows.push(CompareRow {
            label: r.label.clone(),
            method: r.method.to_string(),
            povm: r.povm,
            pauli6_kl,
            native_kl: r.native_kl,
            bell_max: summary.bell_max,
            bell_max_deviation: deviation,
            min_eigenvalue: summary.min_eigenvalue,
            purity: summary.purity,
            bell_fidelity: summary.bell_fidelity,
        });
        files.insert(
            format!("states/{}.json", r.label),
            to_json(&StateFile::new(
                r.method.name(),
                r.povm,
                &r.rho,
                r.fit.clone(),
            ))?,
        );
        files.insert(format!("bell/{}.csv", r.label), r.curve.to_csv());
        if let Some(t) = &r.trained {
            files.insert(
                format!("models/{}.json", r.label),
                to_json(&ModelFile::new(&t.model, Some(t.meta.clone())))?,
            );
            files.insert(format!("traces/{}.csv", r.label), t.trace_csv());
        }
    }
    for a in &cfg.artifacts {
        let (method, povm, rho) = load_artifact(&a.path)?;
        let curve = bell_curve(&rho, &grid, &a.label)?;
        let summary = summarize(&rho, &curve)?;
        rows.push(CompareRow {
            label: a.label.clone(),
            method,
            povm,
            pauli6_kl: data
                .multibasis
                .as_ref()
                .map(|mb| mean_basis_kl(mb, &rho))
                .transpose()?,
            native_kl: None,
            bell_max: summary.bell_max,
            bell_max_deviation: reference
                .as_ref()
                .map(|c| curve.max_deviation(c))
                .transpose()?,
            min_eigenvalue: summary.min_eigenvalue,
            purity: summary.purity,
            bell_fidelity: summary.bell_fidelity,
        });
        files.insert(format!("bell/{}.csv", a.label), curve.to_csv());
    }
    let report = CompareReport {
        reference: reference.map(|c| c.source),
        truth: truth_summary,
        rows,
    };
    files.insert("compare.json".into(), to_json(&report)?);
    files.insert("compare.csv".into(), report.to_csv());
    let files = with_manifest("compare", cfg, files)?;
    Ok(PipelineRun {
        truth,
        data,
        results,
        report,
        files,
    })
}
