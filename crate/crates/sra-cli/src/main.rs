//! `sra` command-line tool: training runs, standalone augmentation,
//! per-sample difficulty scoring, and operator throughput benchmarks.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use sra_core::checkpoint::{read_checkpoint, write_checkpoint};
use sra_core::config::{parse_config, dump_config, DataConfig, DataSource, RunConfig};
use sra_core::dataset::{load_cifar_batch, synthesize_dataset, CifarFormat, Dataset, LabeledImage, Split};
use sra_core::image::{load_ppm, save_ppm, Image};
use sra_core::mis::{compute_mis, softmax, MisConfig, ScorerKind};
use sra_core::model::normalize_batch;
use sra_core::ops::{OpKind, ALL_OPS, DEFAULT_FILL};
use sra_core::policy::{
    augment_image, sample_explore, sample_ra_baseline, sample_refine, PolicyConfig,
    RaBaselineConfig,
};
use sra_core::rng::{derive_stream, Purpose};
use sra_core::trainer::{train_with_callback, METRICS_HEADER};
use sra_core::{Error, Result};

const USAGE: &str = "\
usage: sra <command> [flags]

commands:
  train    --config FILE [--out DIR] [--dump-config] [--KEY VALUE ...]
           Run a training job. Any config key can be overridden with a
           dotted flag, e.g. --mis.epsilon 4 or --trainer.mode ra_baseline.
           Writes metrics.csv and model.ckpt into the output directory.
  augment  --in DIR --out DIR --mode explore|refine|ra [--magnitude M]
           [--depth D] [--seed S] [--ops a,b,...] [--exclude a,b,...]
           Augment every .ppm in DIR. Refine mode uses --magnitude as the
           shared per-image magnitude.
  score    --checkpoint FILE --data SRC [--epsilon E]
           Emit sample_index,label,target_prob,mis CSV on stdout.
           SRC: synthetic | cifar10:FILE | cifar100:FILE | ppm:DIR
  bench    [--size N] [--iters N]
           Per-operator throughput (images/second, mean of 3 repeats).
";

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    match run(&args) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(1);
        }
    }
}

fn run(args: &[String]) -> Result<()> {
    match args.first().map(String::as_str) {
        Some("train") => cmd_train(&args[1..]),
        Some("augment") => cmd_augment(&args[1..]),
        Some("score") => cmd_score(&args[1..]),
        Some("bench") => cmd_bench(&args[1..]),
        Some("--help") | Some("-h") | Some("help") | None => {
            print!("{USAGE}");
            Ok(())
        }
        Some(other) => Err(Error::Config(format!("unknown command `{other}`; see --help"))),
    }
}

/// Minimal flag walker: `--name value` pairs plus bare boolean flags.
struct Flags<'a> {
    args: &'a [String],
    pos: usize,
}

impl<'a> Flags<'a> {
    fn new(args: &'a [String]) -> Self {
        Flags { args, pos: 0 }
    }

    fn next_flag(&mut self) -> Result<Option<&'a str>> {
        match self.args.get(self.pos) {
            None => Ok(None),
            Some(tok) => match tok.strip_prefix("--") {
                Some(name) if !name.is_empty() => {
                    self.pos += 1;
                    Ok(Some(name))
                }
                _ => Err(Error::Config(format!("expected a --flag, got `{tok}`"))),
            },
        }
    }

    fn value(&mut self, name: &str) -> Result<&'a str> {
        match self.args.get(self.pos) {
            Some(v) if !v.starts_with("--") => {
                self.pos += 1;
                Ok(v)
            }
            _ => Err(Error::Config(format!("flag --{name} needs a value"))),
        }
    }
}

fn require(value: Option<String>, flag: &str) -> Result<String> {
    value.ok_or_else(|| Error::Config(format!("missing required flag --{flag}")))
}

// ---------------------------------------------------------------- train

fn cmd_train(args: &[String]) -> Result<()> {
    let mut config_path: Option<String> = None;
    let mut out_dir = PathBuf::from(".");
    let mut dump = false;
    let mut overrides: Vec<(String, String)> = Vec::new();

    let mut flags = Flags::new(args);
    while let Some(name) = flags.next_flag()? {
        match name {
            "config" => config_path = Some(flags.value(name)?.to_string()),
            "out" => out_dir = PathBuf::from(flags.value(name)?),
            "dump-config" => dump = true,
            // Everything else is a config key; parse_config rejects typos.
            key => overrides.push((key.to_string(), flags.value(key)?.to_string())),
        }
    }

    let text = match &config_path {
        Some(p) => fs::read_to_string(p)
            .map_err(|e| Error::Config(format!("cannot read config `{p}`: {e}")))?,
        None => String::new(),
    };
    let cfg: RunConfig = parse_config(&text, &overrides)?;

    if dump {
        print!("{}", dump_config(&cfg));
        return Ok(());
    }

    let (train_set, test_set) = load_datasets(&cfg.data, cfg.train.seed)?;
    eprintln!(
        "training: mode={} classes={} train={} test={} epochs={}",
        cfg.train.mode.name(),
        train_set.class_count,
        train_set.len(),
        test_set.len(),
        cfg.train.epochs
    );

    fs::create_dir_all(&out_dir)?;
    let metrics_path = out_dir.join("metrics.csv");
    let mut metrics_file = fs::File::create(&metrics_path)?;
    writeln!(metrics_file, "{METRICS_HEADER}")?;

    let output = train_with_callback(&cfg.train, &train_set, &test_set, |record| {
        writeln!(metrics_file, "{}", record.to_csv_line())?;
        metrics_file.flush()?;
        if let Some(acc) = record.test_acc {
            eprintln!("epoch {}: test_acc {:.4}", record.epoch, acc);
        }
        Ok(())
    })?;

    let ckpt_path = out_dir.join("model.ckpt");
    fs::write(&ckpt_path, write_checkpoint(&output.model, &output.velocity))?;
    eprintln!("wrote {} and {}", metrics_path.display(), ckpt_path.display());
    Ok(())
}

fn load_datasets(data: &DataConfig, seed: u64) -> Result<(Dataset, Dataset)> {
    match data.source {
        DataSource::Synthetic => {
            let train = synthesize_dataset(seed, data.classes, data.samples_per_class, data.size, Split::Train)?;
            let test = synthesize_dataset(seed, data.classes, data.test_samples_per_class, data.size, Split::Test)?;
            Ok((train, test))
        }
        DataSource::Cifar10 | DataSource::Cifar100 => {
            let format = if data.source == DataSource::Cifar10 {
                CifarFormat::Cifar10
            } else {
                CifarFormat::Cifar100
            };
            let train = load_cifar_file(&data.train_path, format, Split::Train, data.train_limit)?;
            let test = load_cifar_file(&data.test_path, format, Split::Test, data.test_limit)?;
            Ok((train, test))
        }
        DataSource::PpmDir => {
            let train = load_ppm_dir(&data.train_path, data.classes, Split::Train, data.train_limit)?;
            let test = load_ppm_dir(&data.test_path, data.classes, Split::Test, data.test_limit)?;
            Ok((train, test))
        }
    }
}

fn load_cifar_file(path: &str, format: CifarFormat, split: Split, limit: usize) -> Result<Dataset> {
    if path.is_empty() {
        return Err(Error::Config(format!("{split:?}: no path configured for this data source")));
    }
    let bytes = fs::read(path)
        .map_err(|e| Error::Config(format!("cannot read `{path}`: {e}")))?;
    let ds = load_cifar_batch(&bytes, format, split)?;
    truncate_dataset(ds, limit)
}

/// Directory of `<label>_<anything>.ppm` files, label an integer class index.
fn load_ppm_dir(path: &str, classes: usize, split: Split, limit: usize) -> Result<Dataset> {
    if path.is_empty() {
        return Err(Error::Config(format!("{split:?}: no path configured for this data source")));
    }
    let mut names = list_ppms(Path::new(path))?;
    names.sort();
    let mut samples = Vec::new();
    for name in names {
        let stem = name.file_name().and_then(|s| s.to_str()).unwrap_or("");
        let label: usize = stem
            .split('_')
            .next()
            .and_then(|p| p.parse().ok())
            .ok_or_else(|| {
                Error::MalformedInput(format!("`{stem}`: expected <label>_<name>.ppm"))
            })?;
        let bytes = fs::read(&name)?;
        samples.push(LabeledImage { image: load_ppm(&bytes)?, label });
    }
    truncate_dataset(Dataset::new(samples, classes, split)?, limit)
}

fn truncate_dataset(mut ds: Dataset, limit: usize) -> Result<Dataset> {
    if limit > 0 && ds.len() > limit {
        ds.samples.truncate(limit);
    }
    Ok(ds)
}

fn list_ppms(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir)
        .map_err(|e| Error::Config(format!("cannot read directory `{}`: {e}", dir.display())))?
    {
        let path = entry?.path();
        if path.extension().and_then(|e| e.to_str()) == Some("ppm") {
            out.push(path);
        }
    }
    Ok(out)
}

// -------------------------------------------------------------- augment

fn cmd_augment(args: &[String]) -> Result<()> {
    let mut in_dir: Option<String> = None;
    let mut out_dir: Option<String> = None;
    let mut mode: Option<String> = None;
    let mut magnitude = 0.5f64;
    let mut depth = 2usize;
    let mut seed = 42u64;
    let mut subset: Vec<OpKind> = ALL_OPS.to_vec();

    let mut flags = Flags::new(args);
    while let Some(name) = flags.next_flag()? {
        let v = flags.value(name)?;
        match name {
            "in" => in_dir = Some(v.to_string()),
            "out" => out_dir = Some(v.to_string()),
            "mode" => mode = Some(v.to_string()),
            "magnitude" => magnitude = parse_flag(name, v)?,
            "depth" => depth = parse_flag(name, v)?,
            "seed" => seed = parse_flag(name, v)?,
            "ops" => subset = parse_op_list(v)?,
            "exclude" => {
                let drop = parse_op_list(v)?;
                subset.retain(|k| !drop.contains(k));
            }
            other => return Err(Error::Config(format!("unknown flag --{other}"))),
        }
    }
    let in_dir = require(in_dir, "in")?;
    let out_dir = PathBuf::from(require(out_dir, "out")?);
    let mode = require(mode, "mode")?;

    let policy = PolicyConfig { depth, operator_subset: subset, fill: DEFAULT_FILL };
    policy.validate()?;
    if mode == "refine" && !(0.0..=1.0).contains(&magnitude) {
        return Err(Error::Config(format!("--magnitude {magnitude} outside [0,1]")));
    }

    let mut names = list_ppms(Path::new(&in_dir))?;
    names.sort();
    if names.is_empty() {
        return Err(Error::Config(format!("no .ppm files in `{in_dir}`")));
    }
    fs::create_dir_all(&out_dir)?;

    for (index, path) in names.iter().enumerate() {
        let img = load_ppm(&fs::read(path)?)?;
        let sub = match mode.as_str() {
            "explore" => {
                let rng = derive_stream(seed, 0, 0, index as u64, Purpose::ExplorePolicy);
                sample_explore(&policy, &rng)
            }
            "refine" => {
                let rng = derive_stream(seed, 0, 0, index as u64, Purpose::RefinePolicy);
                sample_refine(&policy, magnitude, &rng)?
            }
            "ra" => {
                let rng = derive_stream(seed, 0, 0, index as u64, Purpose::RaPolicy);
                sample_ra_baseline(&RaBaselineConfig::default(), &policy, &rng)
            }
            other => return Err(Error::Config(format!("unknown mode `{other}`"))),
        };
        let augmented = augment_image(&img, &sub)?;
        let out_path = out_dir.join(path.file_name().unwrap());
        fs::write(&out_path, save_ppm(&augmented))?;
    }
    eprintln!("augmented {} images into {}", names.len(), out_dir.display());
    Ok(())
}

fn parse_flag<T: std::str::FromStr>(name: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("flag --{name}: cannot parse `{value}`")))
}

fn parse_op_list(list: &str) -> Result<Vec<OpKind>> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|name| {
            OpKind::from_name(name)
                .ok_or_else(|| Error::Config(format!("unknown operator `{name}`")))
        })
        .collect()
}

// ---------------------------------------------------------------- score

fn cmd_score(args: &[String]) -> Result<()> {
    let mut checkpoint: Option<String> = None;
    let mut data: Option<String> = None;
    let mut epsilon = 2.0f64;
    let mut seed = 42u64;
    let mut classes = 4usize;
    let mut samples_per_class = 25usize;
    let mut size = 32usize;

    let mut flags = Flags::new(args);
    while let Some(name) = flags.next_flag()? {
        let v = flags.value(name)?;
        match name {
            "checkpoint" => checkpoint = Some(v.to_string()),
            "data" => data = Some(v.to_string()),
            "epsilon" => epsilon = parse_flag(name, v)?,
            "seed" => seed = parse_flag(name, v)?,
            "classes" => classes = parse_flag(name, v)?,
            "samples-per-class" => samples_per_class = parse_flag(name, v)?,
            "size" => size = parse_flag(name, v)?,
            other => return Err(Error::Config(format!("unknown flag --{other}"))),
        }
    }
    let checkpoint = require(checkpoint, "checkpoint")?;
    let data = require(data, "data")?;

    let bytes = fs::read(&checkpoint)
        .map_err(|e| Error::Config(format!("cannot read `{checkpoint}`: {e}")))?;
    let (model, _velocity) = read_checkpoint(&bytes)?;

    let dataset = match data.split_once(':') {
        None if data == "synthetic" => {
            synthesize_dataset(seed, classes, samples_per_class, size, Split::Test)?
        }
        Some(("cifar10", path)) => load_cifar_file(path, CifarFormat::Cifar10, Split::Test, 0)?,
        Some(("cifar100", path)) => load_cifar_file(path, CifarFormat::Cifar100, Split::Test, 0)?,
        Some(("ppm", path)) => load_ppm_dir(path, model.arch.classes, Split::Test, 0)?,
        _ => {
            return Err(Error::Config(format!(
                "--data `{data}`: expected synthetic | cifar10:FILE | cifar100:FILE | ppm:DIR"
            )))
        }
    };
    if dataset.class_count != model.arch.classes {
        return Err(Error::Config(format!(
            "data has {} classes but checkpoint expects {}",
            dataset.class_count, model.arch.classes
        )));
    }

    let mis_cfg = MisConfig {
        scorer: ScorerKind::CosineGamma,
        epsilon,
        class_count: model.arch.classes,
    };
    mis_cfg.validate()?;
    let norm = Default::default();
    let c = model.arch.classes;

    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    writeln!(out, "sample_index,label,target_prob,mis")?;
    for (chunk_start, chunk) in dataset.samples.chunks(256).enumerate().map(|(i, c)| (i * 256, c)) {
        let images: Vec<&Image> = chunk.iter().map(|s| &s.image).collect();
        let logits = model.forward(&normalize_batch(&images, &norm));
        for (i, sample) in chunk.iter().enumerate() {
            let row = &logits[i * c..(i + 1) * c];
            let prob = softmax(row).as_slice()[sample.label];
            let score = compute_mis(row, sample.label, &mis_cfg)?;
            writeln!(out, "{},{},{prob:.6},{score:.6}", chunk_start + i, sample.label)?;
        }
    }
    Ok(())
}

// ---------------------------------------------------------------- bench

fn cmd_bench(args: &[String]) -> Result<()> {
    let mut size = 32usize;
    let mut iters = 200usize;

    let mut flags = Flags::new(args);
    while let Some(name) = flags.next_flag()? {
        let v = flags.value(name)?;
        match name {
            "size" => size = parse_flag(name, v)?,
            "iters" => iters = parse_flag(name, v)?,
            other => return Err(Error::Config(format!("unknown flag --{other}"))),
        }
    }
    if size == 0 || iters == 0 {
        return Err(Error::Config("--size and --iters must be positive".into()));
    }

    let mut rng = derive_stream(0, 0, 0, 0, Purpose::Bench);
    let data: Vec<u8> = (0..size * size * 3).map(|_| rng.next_below(256) as u8).collect();
    let img = Image::new(size, size, data);

    println!("op,images_per_sec,img_size,iters");
    for kind in ALL_OPS {
        let app = sra_core::ops::OpApplication::new(kind, 0.5, 1, DEFAULT_FILL);
        let mut rates = Vec::with_capacity(3);
        for _ in 0..3 {
            let start = Instant::now();
            for _ in 0..iters {
                std::hint::black_box(sra_core::ops::apply_op(std::hint::black_box(&img), &app)?);
            }
            rates.push(iters as f64 / start.elapsed().as_secs_f64());
        }
        let mean = rates.iter().sum::<f64>() / rates.len() as f64;
        println!("{},{mean:.1},{size},{iters}", kind.name());
    }
    Ok(())
}
