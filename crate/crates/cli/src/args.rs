use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use qcnn_core::ParticleClass;

use crate::CliError;

#[derive(Debug, Parser)]
#[command(name = "qcnn", version, about = "Quantum convolutional network experiments")]
pub struct Cli {
    /// Cap on worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Flat `key=value` file of default flags; command-line flags win.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic particle-image dataset.
    Generate(GenerateArgs),
    /// Train a model and write metrics.csv plus checkpoints.
    Train(TrainArgs),
    /// Evaluate a checkpoint on both splits of a dataset.
    Eval(EvalArgs),
    /// Compare analytic and shift-rule gradients with finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct GenerateArgs {
    /// Comma-separated classes: track_mip, shower, track_heavy, track_kink.
    #[arg(long, value_delimiter = ',', value_parser = parse_class, default_value = "track_mip,shower")]
    pub classes: Vec<ParticleClass>,
    /// Image side length in pixels.
    #[arg(long, default_value_t = 30)]
    pub size: usize,
    #[arg(long, default_value_t = 100)]
    pub per_class: usize,
    #[arg(long, default_value_t = 0.02)]
    pub noise: f64,
    /// Per-step angular jitter of light tracks, radians.
    #[arg(long, default_value_t = 0.15)]
    pub wiggle: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelKind {
    Qcnn,
    Cnn,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct TrainArgs {
    #[arg(long, value_enum, default_value_t = ModelKind::Qcnn)]
    pub model: ModelKind,
    /// Dataset file; required unless --inspect-only.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Output directory for metrics.csv, final.qcck and best.qcck.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.0)]
    pub dropout: f64,
    #[arg(long, default_value_t = 3)]
    pub filter1: usize,
    #[arg(long, default_value_t = 2)]
    pub filter2: usize,
    #[arg(long, default_value_t = 1)]
    pub stride1: usize,
    #[arg(long, default_value_t = 2)]
    pub stride2: usize,
    /// Variational block repeats per quantum filter.
    #[arg(long, default_value_t = 2)]
    pub depth: usize,
    #[arg(long, default_value_t = 4)]
    pub channels1: usize,
    #[arg(long, default_value_t = 2)]
    pub channels2: usize,
    /// Classical filter size (odd).
    #[arg(long, default_value_t = 5)]
    pub cnn_filter: usize,
    #[arg(long, default_value_t = 0.8)]
    pub train_frac: f64,
    /// Report metrics every N epochs.
    #[arg(long, default_value_t = 1)]
    pub eval_every: usize,
    /// Image size used by --inspect-only when no dataset is given.
    #[arg(long, default_value_t = 30)]
    pub size: usize,
    #[arg(long, default_value_t = 2)]
    pub classes: usize,
    /// Print the architecture and parameter count, then exit.
    #[arg(long)]
    pub inspect_only: bool,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Split settings; must match the training run.
    #[arg(long, default_value_t = 0.8)]
    pub train_frac: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Overrides both the kernel (absolute) and end-to-end (relative) tolerances.
    #[arg(long)]
    pub tolerance: Option<f64>,
    #[arg(long, default_value_t = 1e-6)]
    pub kernel_tolerance: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub network_tolerance: f64,
    /// Random instances per kernel shape.
    #[arg(long, default_value_t = 20)]
    pub instances: usize,
    /// Image size of the quantum network check.
    #[arg(long, default_value_t = 6)]
    pub qcnn_size: usize,
    /// Image size of the classical network check.
    #[arg(long, default_value_t = 10)]
    pub cnn_size: usize,
    #[arg(long, default_value_t = 2)]
    pub depth: usize,
}

fn parse_class(s: &str) -> Result<ParticleClass, String> {
    s.trim().parse().map_err(|e: qcnn_core::Error| e.to_string())
}

/// Scans for `--config FILE` and splices the file's `key=value` pairs in as
/// flags directly after the subcommand, so explicit flags override them.
pub fn expand_config(args: Vec<OsString>) -> Result<Vec<OsString>, CliError> {
    let mut config = None;
    let mut iter = args.iter().enumerate().skip(1);
    while let Some((_, arg)) = iter.next() {
        let Some(s) = arg.to_str() else { continue };
        if s == "--config" {
            config = iter.next().map(|(_, v)| PathBuf::from(v));
        } else if let Some(v) = s.strip_prefix("--config=") {
            config = Some(PathBuf::from(v));
        }
    }
    let Some(path) = config else { return Ok(args) };

    let text = std::fs::read_to_string(&path)
        .map_err(|e| CliError::Io(format!("cannot read config {}: {e}", path.display())))?;
    let mut injected = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("{}:{}: expected key=value", path.display(), lineno + 1)))?;
        let flag = format!("--{}", key.trim().replace('_', "-"));
        match value.trim() {
            "true" => injected.push(flag.into()),
            "false" => {}
            v => {
                injected.push(flag.into());
                injected.push(v.into());
            }
        }
    }

    // Global options may precede the subcommand.
    let mut sub = 1;
    while sub < args.len() {
        match args[sub].to_str() {
            Some("--threads" | "--config") => sub += 2,
            Some(s) if s.starts_with("--") => sub += 1,
            _ => break,
        }
    }
    if sub >= args.len() {
        return Ok(args);
    }
    let mut out = args[..=sub].to_vec();
    out.extend(injected);
    out.extend_from_slice(&args[sub + 1..]);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn os(v: &[&str]) -> Vec<OsString> {
        v.iter().map(OsString::from).collect()
    }

    #[test]
    fn config_values_yield_to_flags() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.cfg");
        std::fs::write(
            &cfg,
            "# experiment\nepochs=7\ntrain_frac = 0.5\ninspect-only=true\nseed=3\n",
        )
        .unwrap();
        let argv = os(&["qcnn", "--config", cfg.to_str().unwrap(), "train", "--seed", "9"]);
        let cli = Cli::try_parse_from(expand_config(argv).unwrap()).unwrap();
        let Command::Train(t) = cli.command else {
            panic!("expected train")
        };
        assert_eq!(t.epochs, 7);
        assert_eq!(t.train_frac, 0.5);
        assert!(t.inspect_only);
        assert_eq!(t.seed, 9);
    }

    #[test]
    fn unknown_class_is_a_parse_error() {
        let err =
            Cli::try_parse_from(os(&["qcnn", "generate", "--classes", "track_mip,muon", "--out", "x"])).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }
}
