use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use qtomo::bell::{bell_curve, theta_grid};
use qtomo::io::{load_data, load_state_source, to_json, write_outputs, StateFile, StateSource};
use qtomo::nqs::{Ansatz, ModelFile};
use qtomo::pipeline::{
    load_config, method_label, mle_config_for, model_density_matrix, reconstruct_linear,
    reconstruct_mle, run_pipeline, synth_outputs, train_config_for, train_model, with_manifest,
    Datasets, Method, PipelineConfig,
};
use qtomo::povm::PovmKind;
use qtomo::{Error, Result};

/// Few-qubit state tomography: simulate data, reconstruct states, train
/// network ansätze and score them with the CHSH parameter.
#[derive(Parser, Debug)]
#[command(name = "qtomo", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Pipeline configuration or run manifest (JSON); unset fields take
    /// their defaults.
    #[arg(long, value_name = "JSON")]
    config: Option<PathBuf>,
    /// Master seed, overrides the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "qtomo-out")]
    out: PathBuf,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write simulated measurement datasets.
    Synth {
        #[command(flatten)]
        common: Common,
        /// POVMs to acquire, comma separated.
        #[arg(long, value_delimiter = ',')]
        povm: Vec<PovmKind>,
    },
    /// Reconstruct a density matrix from a counts or multi-basis file.
    Reconstruct {
        data: PathBuf,
        #[arg(long, value_enum, default_value_t = Estimator::Mle)]
        method: Estimator,
        /// Reconstruct with this POVM (pauli4 coarse-grains Pauli-6 data).
        #[arg(long)]
        povm: Option<PovmKind>,
        #[command(flatten)]
        common: Common,
    },
    /// Train a network ansatz on a dataset.
    Train {
        data: PathBuf,
        #[arg(long)]
        ansatz: Ansatz,
        /// Outcome space of the POVM ansatz (defaults to the data's).
        #[arg(long)]
        povm: Option<PovmKind>,
        #[command(flatten)]
        common: Common,
    },
    /// Bell curve of a state or model file.
    Bell {
        state: PathBuf,
        /// Grid points on [0, π].
        #[arg(long, default_value_t = qtomo::bell::DEFAULT_GRID_POINTS)]
        points: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Run every configured method and write the comparison tables.
    Compare {
        #[command(flatten)]
        common: Common,
        /// POVMs for linear, MLE and POVM-RBM reconstructions.
        #[arg(long, value_delimiter = ',')]
        povm: Vec<PovmKind>,
        /// Network ansätze to train; replaces those in the configuration.
        #[arg(long, value_delimiter = ',')]
        ansatz: Option<Vec<Ansatz>>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Estimator {
    Linear,
    Mle,
}

fn config_from(common: &Common) -> Result<PipelineConfig> {
    let mut cfg = match &common.config {
        Some(path) => load_config(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn load_datasets(path: &Path) -> Result<Datasets> {
    if !path.is_file() {
        return Err(Error::Config(format!(
            "data file {} does not exist",
            path.display()
        )));
    }
    Datasets::from_file(load_data(path)?)
}

fn finish(
    command: &str,
    cfg: &PipelineConfig,
    out: &Path,
    files: BTreeMap<String, String>,
) -> Result<()> {
    let files = with_manifest(command, cfg, files)?;
    write_outputs(out, &files)?;
    eprintln!("wrote {} files to {}", files.len(), out.display());
    Ok(())
}

fn record_input(cfg: &mut PipelineConfig, path: &Path, kind: Option<PovmKind>) {
    match kind {
        Some(PovmKind::Tetra) => cfg.inputs.tetra = Some(path.to_path_buf()),
        _ => cfg.inputs.pauli = Some(path.to_path_buf()),
    }
}

fn synth(common: &Common, povm: &[PovmKind]) -> Result<()> {
    let mut cfg = config_from(common)?;
    if !povm.is_empty() {
        cfg.povms = povm.to_vec();
    }
    let files = synth_outputs(&cfg)?;
    write_outputs(&common.out, &files)?;
    eprintln!("wrote {} files to {}", files.len(), common.out.display());
    Ok(())
}

fn reconstruct(
    data: &Path,
    method: Estimator,
    povm: Option<PovmKind>,
    common: &Common,
) -> Result<()> {
    let mut cfg = config_from(common)?;
    let datasets = load_datasets(data)?;
    let kind = povm
        .or(datasets.primary_kind())
        .ok_or_else(|| Error::Config("dataset holds no counts".into()))?;
    record_input(&mut cfg, data, Some(kind));
    let counts = datasets.counts_for(kind)?;
    let (method, r) = match method {
        Estimator::Linear => (Method::Linear, reconstruct_linear(&counts)?),
        Estimator::Mle => (
            Method::Mle,
            reconstruct_mle(&counts, &mle_config_for(&cfg, kind))?,
        ),
    };
    let state = StateFile::new(method.name(), Some(kind), &r.rho, r.fit);
    println!("method,povm,eigenvalues,min_eigenvalue,purity");
    let eig: Vec<String> = state.eigenvalues.iter().map(|e| e.to_string()).collect();
    println!(
        "{method},{kind},{},{},{}",
        eig.join(";"),
        state.min_eigenvalue,
        state.purity
    );
    let mut files = BTreeMap::new();
    files.insert(
        format!("states/{}.json", method_label(method, Some(kind))),
        to_json(&state)?,
    );
    finish("reconstruct", &cfg, &common.out, files)
}

fn train(data: &Path, ansatz: Ansatz, povm: Option<PovmKind>, common: &Common) -> Result<()> {
    let mut cfg = config_from(common)?;
    let datasets = load_datasets(data)?;
    let method = Method::from(ansatz);
    let povm = match ansatz {
        Ansatz::Povm => Some(
            povm.or(datasets.primary_kind())
                .ok_or_else(|| Error::Config("dataset holds no counts".into()))?,
        ),
        _ => None,
    };
    record_input(&mut cfg, data, povm);
    let label = method_label(method, povm);
    let train_cfg = train_config_for(&cfg, method, &label);
    let trained = train_model(method, &datasets, povm, &cfg, &train_cfg)?;
    let rho = model_density_matrix(&trained.model)?;
    eprintln!(
        "{label}: loss {:.6e} after {} epochs (restart {})",
        trained.meta.final_loss, trained.meta.epochs_run, trained.meta.restart
    );
    let mut files = BTreeMap::new();
    files.insert(
        format!("models/{label}.json"),
        to_json(&ModelFile::new(&trained.model, Some(trained.meta.clone())))?,
    );
    files.insert(format!("traces/{label}.csv"), trained.trace_csv());
    files.insert(
        format!("states/{label}.json"),
        to_json(&StateFile::new(method.name(), povm, &rho, None))?,
    );
    finish("train", &cfg, &common.out, files)
}

fn bell(state: &Path, points: usize, common: &Common) -> Result<()> {
    let cfg = config_from(common)?;
    if points == 0 {
        return Err(Error::Config("--points must be ≥ 1".into()));
    }
    if !state.is_file() {
        return Err(Error::Config(format!(
            "state file {} does not exist",
            state.display()
        )));
    }
    let rho = match load_state_source(state)? {
        StateSource::State(rho) => rho,
        StateSource::Model(m) => model_density_matrix(&m)?,
    };
    let name = state
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "state".into());
    let curve = bell_curve(&rho, &theta_grid(points), &name)?;
    println!("max S = {}", curve.max());
    let mut files = BTreeMap::new();
    files.insert(format!("bell/{name}.csv"), curve.to_csv());
    finish("bell", &cfg, &common.out, files)
}

fn compare(common: &Common, povm: &[PovmKind], ansatz: Option<&[Ansatz]>) -> Result<()> {
    let mut cfg = config_from(common)?;
    if !povm.is_empty() {
        cfg.povms = povm.to_vec();
    }
    if let Some(list) = ansatz {
        cfg.methods
            .retain(|m| matches!(m, Method::Linear | Method::Mle));
        cfg.methods.extend(list.iter().map(|&a| Method::from(a)));
    }
    let run = run_pipeline(&cfg)?;
    print!("{}", run.report.to_csv());
    write_outputs(&common.out, &run.files)?;
    eprintln!(
        "wrote {} files to {}",
        run.files.len(),
        common.out.display()
    );
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Synth { common, povm } => synth(common, povm),
        Command::Reconstruct {
            data,
            method,
            povm,
            common,
        } => reconstruct(data, *method, *povm, common),
        Command::Train {
            data,
            ansatz,
            povm,
            common,
        } => train(data, *ansatz, *povm, common),
        Command::Bell {
            state,
            points,
            common,
        } => bell(state, *points, common),
        Command::Compare {
            common,
            povm,
            ansatz,
        } => compare(common, povm, ansatz.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                ExitCode::from(3)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
