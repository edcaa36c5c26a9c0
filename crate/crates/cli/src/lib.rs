//! Command-line driver: dataset generation, training, evaluation, and
//! gradient checks. [`run`] returns the process exit code.

pub mod args;
pub mod checkpoint;

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use clap::Parser;
use qcnn_core::gradcheck::{self, Deviation};
use qcnn_core::network::Layer;
use qcnn_core::training::{self, evaluate};
use qcnn_core::{
    data, Architecture, CnnArchitecture, Dataset, GeneratorConfig, Network, QcnnArchitecture, RmsProp, TrainConfig,
};

use args::{Cli, Command, EvalArgs, GenerateArgs, GradcheckArgs, ModelKind, TrainArgs};
use checkpoint::Checkpoint;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    CheckFailed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Io(_) => EXIT_IO,
            CliError::CheckFailed(_) => EXIT_CHECK_FAILED,
        }
    }
}

impl From<qcnn_core::Error> for CliError {
    fn from(e: qcnn_core::Error) -> Self {
        use qcnn_core::Error as E;
        let msg = e.to_string();
        match e {
            E::Argument(_) => CliError::Usage(msg),
            E::Config(_) | E::Shape(_) | E::Index { .. } | E::State(_) => CliError::Config(msg),
            E::Format { .. } | E::Truncated { .. } | E::Io(_) => CliError::Io(msg),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Parses `argv` (including the program name), runs the command, and
/// returns the exit code. Errors are reported on stderr.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let argv = match args::expand_config(argv) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return EXIT_USAGE;
        }
        // Only the first call in a process can size the global pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let result = match cli.command {
        Command::Generate(a) => cmd_generate(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Gradcheck(a) => cmd_gradcheck(&a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn cmd_generate(a: &GenerateArgs) -> CliResult<()> {
    if a.classes.len() < 2 {
        return Err(CliError::Usage(format!(
            "--classes needs at least 2 classes, got {}",
            a.classes.len()
        )));
    }
    for (i, c) in a.classes.iter().enumerate() {
        if a.classes[..i].contains(c) {
            return Err(CliError::Usage(format!("class {c} listed twice")));
        }
    }
    let config = GeneratorConfig {
        height: a.size,
        width: a.size,
        classes: a.classes.clone(),
        samples_per_class: a.per_class,
        noise_level: a.noise,
        wiggle: a.wiggle,
        seed: a.seed,
    };
    let dataset = data::generate(&config)?;
    dataset.save(&a.out)?;
    for (name, count) in dataset.class_names().iter().zip(dataset.class_counts()) {
        println!("{name}={count}");
    }
    println!("wrote {} images to {}", dataset.len(), a.out.display());
    Ok(())
}

fn architecture(a: &TrainArgs, size: usize, classes: usize) -> Architecture {
    match a.model {
        ModelKind::Qcnn => Architecture::Qcnn(QcnnArchitecture {
            input_size: size,
            filter1: a.filter1,
            stride1: a.stride1,
            filter2: a.filter2,
            stride2: a.stride2,
            depth: a.depth,
            padding: 0,
            dropout: a.dropout,
            classes,
        }),
        ModelKind::Cnn => Architecture::Cnn(CnnArchitecture {
            input_size: size,
            channels1: a.channels1,
            channels2: a.channels2,
            filter: a.cnn_filter,
            classes,
        }),
    }
}

fn layer_name(layer: &Layer) -> String {
    match layer {
        Layer::QuantumConv(l) => format!("quantum_conv f={} s={}", l.filter_size(), l.stride()),
        Layer::Conv(l) => format!(
            "conv {}->{} f={} s={} p={}",
            l.in_channels(),
            l.out_channels(),
            l.filter(),
            l.stride(),
            l.padding()
        ),
        Layer::Relu => "relu".into(),
        Layer::MaxPool(l) => format!("max_pool w={} s={}", l.window(), l.stride()),
        Layer::Dropout(l) => format!("dropout p={}", l.rate()),
        Layer::Dense(l) => format!("dense {}->{}", l.inputs(), l.outputs()),
    }
}

fn print_summary(arch: &Architecture, net: &Network) {
    println!("model={}", arch.name());
    println!("input={}", net.input_shape());
    for (i, (layer, count)) in net.layers().iter().zip(net.param_counts()).enumerate() {
        println!(
            "layer{i} {} out={} params={count}",
            layer_name(layer),
            net.shapes()[i + 1]
        );
    }
    println!("params={}", net.param_count());
}

fn load_square(path: &Path) -> CliResult<Dataset> {
    let dataset = Dataset::load(path)?;
    if dataset.height() != dataset.width() {
        return Err(CliError::Config(format!(
            "models take square images, dataset is {}x{}",
            dataset.height(),
            dataset.width()
        )));
    }
    Ok(dataset)
}

fn cmd_train(a: &TrainArgs) -> CliResult<()> {
    if a.inspect_only {
        let (size, classes) = match &a.data {
            Some(path) => {
                let d = load_square(path)?;
                (d.height(), d.num_classes())
            }
            None => (a.size, a.classes),
        };
        let arch = architecture(a, size, classes);
        print_summary(&arch, &arch.build()?);
        return Ok(());
    }
    let data_path = a
        .data
        .as_ref()
        .ok_or_else(|| CliError::Usage("--data is required".into()))?;
    let out = a
        .out
        .as_ref()
        .ok_or_else(|| CliError::Usage("--out is required".into()))?;
    let dataset = load_square(data_path)?;
    let arch = architecture(a, dataset.height(), dataset.num_classes());
    let mut net = arch.build()?;
    net.initialize(a.seed);
    let mut opt = RmsProp::new(net.param_count());
    let (train_set, test_set) = dataset.split(a.train_frac, a.seed)?;
    print_summary(&arch, &net);
    println!("train={} test={}", train_set.len(), test_set.len());

    std::fs::create_dir_all(out)?;
    let mut metrics = BufWriter::new(File::create(out.join("metrics.csv"))?);
    writeln!(metrics, "epoch,train_loss,train_acc,test_loss,test_acc")?;
    metrics.flush()?;

    let config = TrainConfig {
        epochs: a.epochs,
        seed: a.seed,
        dropout_rate: None,
        shuffle: true,
        eval_every: a.eval_every,
    };
    let best_path = out.join("best.qcck");
    let mut best = f64::NEG_INFINITY;
    let mut io_error = None;
    let result = training::train(&mut net, &mut opt, &train_set, &test_set, &config, |m, net, opt| {
        println!(
            "epoch={} train_loss={:.6} train_acc={:.4} test_loss={:.6} test_acc={:.4}",
            m.epoch, m.train_loss, m.train_accuracy, m.test_loss, m.test_accuracy
        );
        let written = writeln!(
            metrics,
            "{},{},{},{},{}",
            m.epoch, m.train_loss, m.train_accuracy, m.test_loss, m.test_accuracy
        )
        .and_then(|_| metrics.flush());
        if let Err(e) = written {
            io_error = Some(e);
            return Err(qcnn_core::Error::State("cannot write metrics.csv".into()));
        }
        if m.test_accuracy > best {
            best = m.test_accuracy;
            Checkpoint::new(arch, net, opt, m.epoch as u32).save(&best_path)?;
        }
        Ok(())
    });
    if let Some(e) = io_error {
        return Err(e.into());
    }
    let history = result?;
    let last = history.last().map_or(a.epochs, |m| m.epoch);
    Checkpoint::new(arch, &net, &opt, last as u32).save(out.join("final.qcck"))?;
    println!("best_test_acc={best}");
    Ok(())
}

fn cmd_eval(a: &EvalArgs) -> CliResult<()> {
    let ck = Checkpoint::load(&a.checkpoint)?;
    let dataset = load_square(&a.data)?;
    let arch = &ck.architecture;
    if dataset.height() != arch.input_size() || dataset.num_classes() != arch.classes() {
        return Err(CliError::Config(format!(
            "checkpoint expects {}x{} images in {} classes, dataset has {}x{} in {}",
            arch.input_size(),
            arch.input_size(),
            arch.classes(),
            dataset.height(),
            dataset.width(),
            dataset.num_classes()
        )));
    }
    let net = ck.network()?;
    let (train_set, test_set) = dataset.split(a.train_frac, a.seed)?;
    println!("model={} epoch={} params={}", arch.name(), ck.epoch, net.param_count());
    for (name, split) in [("train", &train_set), ("test", &test_set)] {
        let (loss, acc) = evaluate(&net, split)?;
        println!("split={name} n={} loss={loss} accuracy={acc}", split.len());
    }
    Ok(())
}

fn report(label: &str, dev: &Deviation, tolerance: f64, failures: &mut Vec<String>) {
    let ok = dev.passes(tolerance);
    println!(
        "{label} checked={} skipped={} max_abs={:.3e} max_rel={:.3e} worst_index={} worst={:.3e} tol={:.1e} {}",
        dev.checked,
        dev.skipped,
        dev.max_abs,
        dev.max_rel,
        dev.worst_index,
        dev.worst_score,
        tolerance,
        if ok { "PASS" } else { "FAIL" }
    );
    if !ok {
        failures.push(format!(
            "{label}: worst index {} deviates by {:.3e}",
            dev.worst_index, dev.worst_score
        ));
    }
}

fn cmd_gradcheck(a: &GradcheckArgs) -> CliResult<()> {
    let kernel_tol = a.tolerance.unwrap_or(a.kernel_tolerance);
    let network_tol = a.tolerance.unwrap_or(a.network_tolerance);
    let mut failures = Vec::new();

    for n in 1..=3 {
        for depth in 1..=2 {
            let dev = gradcheck::check_kernel(n, depth, a.instances, a.seed)?;
            report(&format!("kernel n={n} depth={depth}"), &dev, kernel_tol, &mut failures);
        }
    }

    let qcnn = Architecture::Qcnn(QcnnArchitecture {
        input_size: a.qcnn_size,
        filter1: 2,
        stride1: 1,
        filter2: 2,
        stride2: 1,
        depth: a.depth,
        ..QcnnArchitecture::reference()
    });
    let cnn = Architecture::Cnn(CnnArchitecture {
        input_size: a.cnn_size,
        ..CnnArchitecture::reference()
    });
    for arch in [qcnn, cnn] {
        let size = arch.input_size();
        let sample = data::generate(&GeneratorConfig {
            height: size,
            width: size,
            samples_per_class: 1,
            seed: a.seed,
            ..GeneratorConfig::default()
        })?;
        let index = (a.seed % 2) as usize;
        let mut net = arch.build()?;
        net.initialize(a.seed);
        let dev = gradcheck::check_network(&mut net, &sample.image(index), sample.label(index))?;
        report(
            &format!("network {} {size}x{size}", arch.name()),
            &dev,
            network_tol,
            &mut failures,
        );
    }

    if failures.is_empty() {
        println!("gradcheck PASS");
        Ok(())
    } else {
        Err(CliError::CheckFailed(failures.join("; ")))
    }
}
