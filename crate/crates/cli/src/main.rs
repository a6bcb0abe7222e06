//! `refpoint` command-line driver.
//!
//! Exit codes: 0 success, 1 usage error, 2 data-format error,
//! 3 numerical error.

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use nalgebra::Vector3;
use refpoint_core::eval::{per_user_report, run_ablation, EvalError, ModalitySubset};
use refpoint_core::fusion::{
    load_checkpoint, save_checkpoint, train_resume, weight_init, AdamState, Checkpoint,
    CheckpointError, FusionError, NetworkConfig, TrainConfig,
};
use refpoint_core::geo::{wgs84_to_ecef, ecef_to_car, GeoError, GeodeticPoint};
use refpoint_core::matching::{match_roi, MatchError};
use refpoint_core::synth::{
    build_default_scenario, build_samples, generate_corpus, load_corpus, CorpusConfig, Scenario,
    ScenarioFile, SynthError,
};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use std::collections::BTreeSet;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "refpoint", version, about = "Multimodal driver-referencing pipeline")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic referencing corpus.
    Gen(GenArgs),
    /// Train the fusion network on a corpus.
    Train(TrainArgs),
    /// Cross-validated ablation evaluation on a corpus.
    Eval(EvalArgs),
    /// Match a fused direction vector against the scenario ROIs.
    Match(MatchArgs),
    /// Convert geodetic coordinates to ECEF and, optionally, a car frame.
    Transform(TransformArgs),
}

#[derive(Args)]
struct GenArgs {
    /// Output corpus directory.
    #[arg(long)]
    out: PathBuf,
    /// Scenario file; the built-in default scenario when omitted.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 28)]
    users: usize,
    #[arg(long, default_value_t = 40)]
    events: usize,
    /// Comma-separated car pose ids to cycle through.
    #[arg(long, default_value = "1,2,3,4")]
    poses: String,
    #[arg(long, default_value_t = 0.2)]
    poi_fraction: f64,
    /// Disable all noise sources.
    #[arg(long)]
    noiseless: bool,
    /// Disable occlusion dropouts.
    #[arg(long)]
    no_occlusion: bool,
    /// Config overrides as key=value (users, events, seed, poi_fraction,
    /// noiseless, occlusion).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args)]
struct TrainArgs {
    /// Corpus directory produced by `gen`.
    #[arg(long)]
    corpus: PathBuf,
    /// Checkpoint output path.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    #[arg(long, default_value_t = 128)]
    feature_maps: usize,
    /// Comma-separated active modalities (finger,eye,head) or "fusion".
    #[arg(long, default_value = "fusion")]
    modalities: String,
    /// Number of users held out for validation.
    #[arg(long)]
    val_users: Option<usize>,
    /// Continue training from the checkpoint at --out.
    #[arg(long)]
    resume: bool,
    /// Training overrides as key=value (epochs, batch_size, lr0, beta1,
    /// beta2, eps, plateau_patience, seed).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 5)]
    k: usize,
    /// Comma-separated subsets to ablate (head,gaze,finger,fusion).
    #[arg(long, default_value = "head,gaze,finger,fusion")]
    subsets: String,
    /// Pool test events across folds instead of averaging fold metrics.
    #[arg(long)]
    pool: bool,
    /// Also print the leave-one-user-out report.
    #[arg(long)]
    per_user: bool,
    /// Write the ablation table as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long, default_value_t = 128)]
    feature_maps: usize,
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    /// Keep distant-pose point events, excluded by default.
    #[arg(long)]
    include_distant_points: bool,
    /// Training overrides as key=value, as for `train`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args)]
struct MatchArgs {
    /// Scenario file; the built-in default scenario when omitted.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Car pose id the vector is expressed in.
    #[arg(long)]
    pose: u32,
    /// Fused direction as "x,y,z" in the car frame.
    #[arg(long)]
    vector: String,
}

#[derive(Args)]
struct TransformArgs {
    /// Latitude in decimal degrees.
    #[arg(long)]
    lat: f64,
    /// Longitude in decimal degrees.
    #[arg(long)]
    lon: f64,
    /// Altitude in meters above the ellipsoid.
    #[arg(long, default_value_t = 0.0)]
    alt: f64,
    /// Scenario file providing car poses.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Also express the point in this car pose's frame.
    #[arg(long)]
    pose: Option<u32>,
}

enum CliError {
    Usage(String),
    Data(String),
    Numerical(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Numerical(m) => m,
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match &e {
            SynthError::UnknownPose(_) | SynthError::UnknownTarget(_) | SynthError::TooFewUsers(_) => {
                CliError::Usage(e.to_string())
            }
            SynthError::Io { .. } | SynthError::Format { .. } | SynthError::InvalidScenario(_) => {
                CliError::Data(e.to_string())
            }
            SynthError::Frame(_) => CliError::Data(e.to_string()),
            SynthError::Geo(_) => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<FusionError> for CliError {
    fn from(e: FusionError) -> Self {
        match &e {
            FusionError::ZeroPrediction(_) => CliError::Numerical(e.to_string()),
            FusionError::ShapeMismatch { .. } => CliError::Data(e.to_string()),
            FusionError::EmptySplit(_) | FusionError::SplitLeak(_) => CliError::Usage(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::ZeroVector(_) => CliError::Numerical(e.to_string()),
            EvalError::EmptyInput
            | EvalError::LengthMismatch(..)
            | EvalError::TooFewUsers { .. }
            | EvalError::FoldLeak(_) => CliError::Usage(e.to_string()),
            EvalError::MissingMeta => CliError::Data(e.to_string()),
            EvalError::Fusion(inner) => inner.into(),
            EvalError::Match(inner) => inner.into(),
            EvalError::Synth(inner) => inner.into(),
        }
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<GeoError> for CliError {
    fn from(e: GeoError) -> Self {
        match e {
            GeoError::LatitudeOutOfRange(_) => CliError::Usage(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<MatchError> for CliError {
    fn from(e: MatchError) -> Self {
        match e {
            MatchError::ZeroVector => CliError::Numerical(e.to_string()),
            MatchError::EmptyMap => CliError::Data(e.to_string()),
        }
    }
}

/// CLI seed, falling back to the REFPOINT_SEED environment variable.
fn resolve_seed(arg: Option<u64>) -> Result<u64, CliError> {
    if let Some(s) = arg {
        return Ok(s);
    }
    match std::env::var("REFPOINT_SEED") {
        Ok(v) => v
            .parse()
            .map_err(|_| CliError::Usage(format!("REFPOINT_SEED is not an integer: {v}"))),
        Err(_) => Ok(0),
    }
}

fn split_kv(entry: &str) -> Result<(&str, &str), CliError> {
    entry
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got '{entry}'")))
}

fn parse_as<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value
        .parse()
        .map_err(|_| CliError::Usage(format!("invalid value '{value}' for {key}")))
}

fn apply_corpus_overrides(cfg: &mut CorpusConfig, set: &[String]) -> Result<(), CliError> {
    for entry in set {
        let (key, value) = split_kv(entry)?;
        match key {
            "users" => cfg.n_users = parse_as(key, value)?,
            "events" => cfg.events_per_user = parse_as(key, value)?,
            "seed" => cfg.seed = parse_as(key, value)?,
            "poi_fraction" => cfg.poi_fraction = parse_as(key, value)?,
            "noiseless" => cfg.noiseless = parse_as(key, value)?,
            "occlusion" => cfg.occlusion = parse_as(key, value)?,
            other => return Err(CliError::Usage(format!("unknown gen option '{other}'"))),
        }
    }
    Ok(())
}

fn apply_train_overrides(cfg: &mut TrainConfig, set: &[String]) -> Result<(), CliError> {
    for entry in set {
        let (key, value) = split_kv(entry)?;
        match key {
            "epochs" => cfg.epochs = parse_as(key, value)?,
            "batch_size" => cfg.batch_size = parse_as(key, value)?,
            "lr0" => cfg.lr0 = parse_as(key, value)?,
            "beta1" => cfg.beta1 = parse_as(key, value)?,
            "beta2" => cfg.beta2 = parse_as(key, value)?,
            "eps" => cfg.eps = parse_as(key, value)?,
            "plateau_patience" => cfg.plateau_patience = parse_as(key, value)?,
            "seed" => cfg.seed = parse_as(key, value)?,
            other => return Err(CliError::Usage(format!("unknown training option '{other}'"))),
        }
    }
    Ok(())
}

fn parse_poses(text: &str) -> Result<Vec<u32>, CliError> {
    text.split(',')
        .map(|p| parse_as("poses", p.trim()))
        .collect()
}

fn parse_modalities(text: &str) -> Result<[bool; 3], CliError> {
    if text == "fusion" {
        return Ok([true; 3]);
    }
    let mut active = [false; 3];
    for part in text.split(',') {
        match part.trim() {
            "finger" => active[0] = true,
            "eye" | "gaze" => active[1] = true,
            "head" => active[2] = true,
            other => {
                return Err(CliError::Usage(format!(
                    "unknown modality '{other}' (expected finger, eye, head or fusion)"
                )))
            }
        }
    }
    if active == [false; 3] {
        return Err(CliError::Usage("no modality selected".into()));
    }
    Ok(active)
}

fn parse_subsets(text: &str) -> Result<Vec<ModalitySubset>, CliError> {
    text.split(',')
        .map(|part| match part.trim() {
            "head" => Ok(ModalitySubset::Head),
            "gaze" | "eye" => Ok(ModalitySubset::Gaze),
            "finger" => Ok(ModalitySubset::Finger),
            "fusion" => Ok(ModalitySubset::Fusion),
            other => Err(CliError::Usage(format!("unknown subset '{other}'"))),
        })
        .collect()
}

fn parse_vector(text: &str) -> Result<Vector3<f64>, CliError> {
    let parts: Vec<&str> = text.split(',').collect();
    if parts.len() != 3 {
        return Err(CliError::Usage(format!("--vector expects x,y,z, got '{text}'")));
    }
    Ok(Vector3::new(
        parse_as("vector", parts[0].trim())?,
        parse_as("vector", parts[1].trim())?,
        parse_as("vector", parts[2].trim())?,
    ))
}

fn load_scenario_file(path: &Option<PathBuf>) -> Result<ScenarioFile, CliError> {
    match path {
        None => Ok(build_default_scenario()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Data(format!("cannot read {}: {e}", p.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::Data(format!("bad scenario {}: {e}", p.display())))
        }
    }
}

fn cmd_gen(args: &GenArgs) -> Result<(), CliError> {
    let mut cfg = CorpusConfig {
        n_users: args.users,
        events_per_user: args.events,
        seed: resolve_seed(args.seed)?,
        poses: parse_poses(&args.poses)?,
        poi_fraction: args.poi_fraction,
        noiseless: args.noiseless,
        occlusion: !args.no_occlusion,
    };
    apply_corpus_overrides(&mut cfg, &args.set)?;
    let scenario_file = load_scenario_file(&args.scenario)?;
    let manifest = generate_corpus(&scenario_file, &cfg, &args.out)?;
    println!(
        "wrote corpus: {} users x {} events (seed {}) at {}",
        manifest.n_users,
        manifest.events_per_user,
        manifest.seed,
        args.out.display()
    );
    Ok(())
}

/// Deterministic user-based train/validation split: the first
/// `n_val` users of a seeded shuffle validate, the rest train.
fn split_users(users: &BTreeSet<String>, n_val: usize, seed: u64) -> (Vec<String>, Vec<String>) {
    let mut shuffled: Vec<String> = users.iter().cloned().collect();
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x5711_7000);
    shuffled.shuffle(&mut rng);
    let val = shuffled[..n_val].to_vec();
    let train = shuffled[n_val..].to_vec();
    (train, val)
}

fn cmd_train(args: &TrainArgs) -> Result<(), CliError> {
    let mut tcfg = TrainConfig {
        epochs: args.epochs,
        seed: resolve_seed(args.seed)?,
        ..TrainConfig::default()
    };
    apply_train_overrides(&mut tcfg, &args.set)?;

    let (scenario, events) = load_corpus(&args.corpus)?;
    let samples = build_samples(&scenario, &events)?;
    let users: BTreeSet<String> = samples
        .iter()
        .filter_map(|s| s.meta.as_ref().map(|m| m.user_id.clone()))
        .collect();
    if users.len() < 2 {
        return Err(CliError::Usage(format!(
            "need at least 2 users to split train/validation, corpus has {}",
            users.len()
        )));
    }
    let n_val = args
        .val_users
        .unwrap_or_else(|| (users.len() / 5).max(1))
        .clamp(1, users.len() - 1);
    let (train_users, val_users) = split_users(&users, n_val, tcfg.seed);
    let in_set = |s: &&refpoint_core::frames::SampleTensor, list: &[String]| {
        s.meta
            .as_ref()
            .is_some_and(|m| list.iter().any(|u| *u == m.user_id))
    };
    let tr: Vec<_> = samples.iter().filter(|s| in_set(s, &train_users)).collect();
    let va: Vec<_> = samples.iter().filter(|s| in_set(s, &val_users)).collect();

    let (mut model, mut adam, epoch_offset) = if args.resume {
        let ckpt = load_checkpoint(&args.out)?;
        let adam = ckpt.adam.ok_or_else(|| {
            CliError::Data("checkpoint has no optimizer state, cannot resume".into())
        })?;
        let offset = ckpt.best_epoch + 1;
        (ckpt.model, adam, offset)
    } else {
        let net_cfg = NetworkConfig::default()
            .with_feature_maps(args.feature_maps)
            .with_modalities(parse_modalities(&args.modalities)?);
        let model = weight_init(&net_cfg, tcfg.seed);
        let n = model.params.n_params();
        (model, AdamState::new(n), 0)
    };

    let (best, history) = train_resume(&mut model, &mut adam, &tr, &va, &tcfg, epoch_offset)?;
    let best_stats = history
        .epochs
        .iter()
        .find(|e| e.epoch == history.best_epoch)
        .expect("best epoch is in history");
    save_checkpoint(
        &args.out,
        &Checkpoint {
            model: best,
            seed: tcfg.seed,
            best_epoch: history.best_epoch,
            train_loss: best_stats.train_loss,
            val_loss: best_stats.val_loss,
            adam: Some(adam),
        },
    )?;
    println!(
        "trained {} epochs on {} samples ({} train / {} val users); best epoch {} val_loss {:.6}; saved {}",
        history.epochs.len(),
        samples.len(),
        train_users.len(),
        val_users.len(),
        history.best_epoch,
        best_stats.val_loss,
        args.out.display()
    );
    Ok(())
}

fn cmd_eval(args: &EvalArgs) -> Result<(), CliError> {
    let mut tcfg = TrainConfig {
        epochs: args.epochs,
        seed: resolve_seed(args.seed)?,
        ..TrainConfig::default()
    };
    apply_train_overrides(&mut tcfg, &args.set)?;
    let net_cfg = NetworkConfig::default().with_feature_maps(args.feature_maps);

    let (scenario, events) = load_corpus(&args.corpus)?;
    let samples = build_samples(&scenario, &events)?;
    let kept: Vec<_> = samples
        .iter()
        .filter(|s| {
            args.include_distant_points
                || s.meta.as_ref().is_none_or(|m| {
                    !(m.pose_id == 4 && m.ref_type == refpoint_core::geo::ReferenceType::Point)
                })
        })
        .collect();

    let subsets = parse_subsets(&args.subsets)?;
    let report = run_ablation(&scenario, &kept, &subsets, args.k, &net_cfg, &tcfg, args.pool)?;
    print!("{report}");
    if let Some(path) = &args.csv {
        std::fs::write(path, report.to_csv())
            .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))?;
        println!("wrote {}", path.display());
    }
    if args.per_user {
        let user_report = per_user_report(&scenario, &kept, &net_cfg, &tcfg)?;
        println!("\nper-user (leave-one-out):");
        for r in &user_report.rows {
            println!(
                "{:<12} acc {:>5.1}% top-2 {:>5.1}% MAD {:>6.2} deg (n={})",
                r.label,
                100.0 * r.accuracy,
                100.0 * r.top2,
                r.mad_deg,
                r.n
            );
        }
        println!("\nerror vs distance, per pose:");
        for reg in &user_report.regressions {
            println!(
                "pose {}: slope {:+.3} deg/m intercept {:.2} deg r2 {:.3} (n={})",
                reg.pose_id, reg.slope_deg_per_m, reg.intercept_deg, reg.r2, reg.n
            );
        }
    }
    Ok(())
}

fn cmd_match(args: &MatchArgs) -> Result<(), CliError> {
    let file = load_scenario_file(&args.scenario)?;
    let scenario = Scenario::from_file_model(&file)?;
    let pose = scenario.pose(args.pose)?;
    let v = parse_vector(&args.vector)?;
    let result = match_roi(&v, &scenario.roi_map(), &pose.transform)?;
    println!(
        "{}",
        serde_json::to_string_pretty(&result).expect("match result serializes")
    );
    Ok(())
}

fn cmd_transform(args: &TransformArgs) -> Result<(), CliError> {
    let file = load_scenario_file(&args.scenario)?;
    let geo = GeodeticPoint::from_degrees(args.lat, args.lon, args.alt)?;
    let scenario = Scenario::from_file_model(&file)?;
    let ecef = wgs84_to_ecef(&geo, &scenario.ellipsoid);
    let mut out = serde_json::json!({
        "geodetic": { "lat_deg": args.lat, "lon_deg": args.lon, "alt_m": args.alt },
        "ecef": { "x": ecef.x, "y": ecef.y, "z": ecef.z },
    });
    if let Some(pose_id) = args.pose {
        let pose = scenario.pose(pose_id)?;
        let car = ecef_to_car(&ecef, &pose.transform);
        out["car"] = serde_json::json!({
            "pose_id": pose_id, "x": car.x, "y": car.y, "z": car.z,
        });
    }
    println!("{}", serde_json::to_string_pretty(&out).expect("serializes"));
    Ok(())
}

fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.cmd {
        Command::Gen(args) => cmd_gen(args),
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Match(args) => cmd_match(args),
        Command::Transform(args) => cmd_transform(args),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version are not errors.
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
