use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use levipod::config::{self, Mode, SimConfig};
use levipod::error::{ConfigError, SimError};
use levipod::mesh;
use levipod::mor;
use levipod::report;
use levipod::sim::{SnapshotStore, Trajectory};

const EXIT_USAGE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser)]
#[command(
    name = "levipod",
    about = "Axisymmetric eddy-current levitation simulator with POD model reduction",
    disable_help_subcommand = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonOpts {
    /// Configuration file (key = value text); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long)]
    out: Option<PathBuf>,
    /// POD truncation tolerance, overrides the config.
    #[arg(long)]
    eps: Option<f64>,
    /// Fixed POD basis size, overrides the config.
    #[arg(long)]
    rank: Option<usize>,
    /// Snapshot window as 1-based inclusive step range `start:end`.
    #[arg(long)]
    window: Option<String>,
    /// Run mode, overrides the config.
    #[arg(long, value_parser = ["full", "rom-deform", "rom-remesh"])]
    mode: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the device mesh and write it as a text file.
    Mesh(CommonOpts),
    /// Execute the configured simulation and write the trajectory CSV.
    Run(CommonOpts),
    /// Run the offline phase and persist the snapshot matrix.
    Snapshots(CommonOpts),
    /// Build a POD basis from a stored snapshot file.
    Basis {
        /// Snapshot file written by the `snapshots` subcommand.
        snapshots: PathBuf,
        #[command(flatten)]
        opts: CommonOpts,
    },
    /// Run several configs and compare each against the full-order reference.
    Compare {
        /// Config files; exactly one must use mode = full (the reference).
        configs: Vec<PathBuf>,
        #[command(flatten)]
        opts: CommonOpts,
    },
}

enum CliError {
    Usage(String),
    Config(ConfigError),
    Numerical(String),
    Io(std::io::Error),
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

fn thread_cap() -> Result<usize, CliError> {
    match std::env::var("LEVIPOD_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(CliError::Usage(format!(
                "LEVIPOD_THREADS must be a positive integer, got `{v}`"
            ))),
        },
        Err(_) => Ok(1),
    }
}

fn parse_window(s: &str) -> Result<(usize, usize), CliError> {
    let bad = || CliError::Usage(format!("--window expects `start:end`, got `{s}`"));
    let (a, b) = s.split_once(':').ok_or_else(bad)?;
    let start: usize = a.trim().parse().map_err(|_| bad())?;
    let end: usize = b.trim().parse().map_err(|_| bad())?;
    if start == 0 || end < start {
        return Err(bad());
    }
    Ok((start, end))
}

fn load_config(opts: &CommonOpts) -> Result<SimConfig, CliError> {
    let mut cfg = match &opts.config {
        Some(path) => config::parse_config(path)?,
        None => SimConfig::default(),
    };
    if let Some(eps) = opts.eps {
        cfg.eps = Some(eps);
        cfg.rank = None;
    }
    if let Some(rank) = opts.rank {
        cfg.rank = Some(rank);
    }
    if let Some(window) = &opts.window {
        let (start, end) = parse_window(window)?;
        cfg.window_start = start;
        cfg.window_end = end;
    }
    if let Some(mode) = &opts.mode {
        cfg.mode = match mode.as_str() {
            "full" => Mode::Full,
            "rom-deform" => Mode::RomDeform,
            "rom-remesh" => Mode::RomRemesh,
            other => return Err(CliError::Usage(format!("unknown mode `{other}`"))),
        };
    }
    if let Some(out) = &opts.out {
        cfg.out_dir = Some(out.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(cfg: &SimConfig) -> Result<PathBuf, CliError> {
    let dir = cfg
        .out_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from("levipod-out"));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn cmd_mesh(opts: &CommonOpts) -> Result<(), CliError> {
    let cfg = load_config(opts)?;
    let dir = out_dir(&cfg)?;
    let mesh = mesh::generate_mesh(&cfg.geometry, &cfg.deform_box, cfg.density)
        .map_err(|e| CliError::Numerical(e.to_string()))?;
    let path = dir.join("mesh.txt");
    let mut w = std::io::BufWriter::new(std::fs::File::create(&path)?);
    mesh.write_to(&mut w)
        .map_err(|e| CliError::Numerical(e.to_string()))?;
    drop(w);
    let q = mesh::quality(&mesh);
    println!(
        "wrote {} ({} nodes, {} triangles, {} dofs; min angle {:.1} deg)",
        path.display(),
        mesh.node_count(),
        mesh.tri_count(),
        mesh.dof_count,
        q.min_angle_deg
    );
    Ok(())
}

fn cmd_run(opts: &CommonOpts) -> Result<(), CliError> {
    let cfg = load_config(opts)?;
    let dir = out_dir(&cfg)?;
    let output = report::execute(&cfg)?;
    let path = dir.join("trajectory.csv");
    output.trajectory.write_csv_file(&path)?;
    if let Some(offline) = &output.offline {
        offline.write_csv_file(&dir.join("offline.csv"))?;
    }
    let last = output.trajectory.records.last();
    println!(
        "wrote {} ({} steps, mode {}, final y = {:.6e} m, total wall {:.1} ms)",
        path.display(),
        output.trajectory.len(),
        cfg.mode.as_str(),
        last.map_or(f64::NAN, |r| r.y),
        output.trajectory.total_wall_ms()
    );
    if let Some(basis) = &output.basis {
        println!(
            "reduced basis: rank {} of {} singular values",
            basis.rank,
            basis.singular_values.len()
        );
    }
    Ok(())
}

fn cmd_snapshots(opts: &CommonOpts) -> Result<(), CliError> {
    let cfg = load_config(opts)?;
    let dir = out_dir(&cfg)?;
    let result = report::run_offline(&cfg)?;
    let store = result.snapshots.ok_or_else(|| {
        CliError::Numerical("offline run produced no snapshots".into())
    })?;
    let matrix = match store {
        SnapshotStore::Deform { solutions, .. } => {
            mor::build_snapshots(&solutions, 0..solutions.len(), 1)
                .map_err(|e| CliError::Numerical(e.to_string()))?
        }
        SnapshotStore::Remesh { .. } => {
            return Err(CliError::Numerical(
                "snapshot files need a constant dof layout; use movement = deform".into(),
            ))
        }
    };
    let path = dir.join("snapshots.bin");
    mor::write_snapshots(&path, &matrix).map_err(|e| CliError::Numerical(e.to_string()))?;
    println!(
        "wrote {} ({} dofs x {} snapshots, steps {}..{})",
        path.display(),
        matrix.data.nrows(),
        matrix.data.ncols(),
        cfg.window_start,
        cfg.window_end
    );
    Ok(())
}

fn cmd_basis(snapshots: &Path, opts: &CommonOpts) -> Result<(), CliError> {
    let cfg = load_config(opts)?;
    let dir = out_dir(&cfg)?;
    let matrix = mor::read_snapshots(snapshots).map_err(|e| CliError::Numerical(e.to_string()))?;
    let basis = report::basis_from_config(&cfg, &matrix)?;
    let decay_path = dir.join("sv_decay.csv");
    let mut decay = String::from("i,sigma,sigma_rel\n");
    let s1 = basis.singular_values.first().copied().unwrap_or(1.0);
    for (i, s) in basis.singular_values.iter().enumerate() {
        decay.push_str(&format!("{},{:.16e},{:.16e}\n", i + 1, s, s / s1));
    }
    std::fs::write(&decay_path, decay)?;
    let basis_matrix = mor::SnapshotMatrix {
        data: basis.psi.clone(),
        times: (0..basis.rank).map(|i| i as f64).collect(),
    };
    let basis_path = dir.join("basis.bin");
    mor::write_snapshots(&basis_path, &basis_matrix)
        .map_err(|e| CliError::Numerical(e.to_string()))?;
    println!(
        "rank r = {} of {} snapshots (eps = {:?}, rank override = {:?}); wrote {} and {}",
        basis.rank,
        matrix.data.ncols(),
        cfg.eps,
        cfg.rank,
        basis_path.display(),
        decay_path.display()
    );
    Ok(())
}

fn cmd_compare(configs: &[PathBuf], opts: &CommonOpts) -> Result<(), CliError> {
    if configs.len() < 2 {
        return Err(CliError::Usage(
            "compare needs at least two config files".into(),
        ));
    }
    let mut parsed = Vec::new();
    for path in configs {
        let mut sub_opts = opts.clone();
        sub_opts.config = Some(path.clone());
        parsed.push((path.clone(), load_config(&sub_opts)?));
    }
    let full_count = parsed.iter().filter(|(_, c)| c.mode == Mode::Full).count();
    if full_count != 1 {
        return Err(CliError::Usage(format!(
            "compare needs exactly one mode = full config as reference, found {full_count}"
        )));
    }

    let mut reference: Option<Trajectory> = None;
    let mut runs: Vec<(PathBuf, Trajectory)> = Vec::new();
    for (path, cfg) in &parsed {
        let output = report::execute(cfg)?;
        if cfg.mode == Mode::Full {
            reference = Some(output.trajectory);
        } else {
            runs.push((path.clone(), output.trajectory));
        }
    }
    let reference = reference.expect("checked above");

    let dir = out_dir(&parsed[0].1)?;
    let mut csv = String::from(
        "config,l2_error,steps,ref_dofs,max_rank,ref_wall_ms,run_wall_ms,speedup\n",
    );
    for (path, traj) in &runs {
        let rep = report::compare_runs(traj, &reference)?;
        csv.push_str(&format!(
            "{},{:.16e},{},{},{},{:.16e},{:.16e},{:.16e}\n",
            path.display(),
            rep.l2_error,
            rep.steps,
            rep.ref_dofs,
            rep.max_rank,
            rep.ref_wall_ms,
            rep.run_wall_ms,
            rep.speedup
        ));
        println!("--- {} ---", path.display());
        print!("{}", rep.summary());
    }
    let report_path = dir.join("compare.csv");
    std::fs::write(&report_path, csv)?;
    println!("wrote {}", report_path.display());
    Ok(())
}

fn run() -> Result<(), CliError> {
    let cli = Cli::try_parse().map_err(|e| {
        // Let clap print its own help/version output with exit 0.
        if e.use_stderr() {
            CliError::Usage(e.to_string())
        } else {
            print!("{e}");
            std::process::exit(0);
        }
    })?;
    let _threads = thread_cap()?;
    match &cli.command {
        Command::Mesh(opts) => cmd_mesh(opts),
        Command::Run(opts) => cmd_run(opts),
        Command::Snapshots(opts) => cmd_snapshots(opts),
        Command::Basis { snapshots, opts } => cmd_basis(snapshots, opts),
        Command::Compare { configs, opts } => cmd_compare(configs, opts),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(CliError::Config(e)) => {
            eprintln!("config error: {e}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(CliError::Numerical(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_NUMERICAL)
        }
        Err(CliError::Io(e)) => {
            eprintln!("io error: {e}");
            ExitCode::from(EXIT_NUMERICAL)
        }
    }
}
