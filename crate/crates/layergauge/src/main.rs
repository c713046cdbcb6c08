use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::error::ErrorKind;
use clap::{CommandFactory, Parser, Subcommand, ValueEnum};
use layergauge::cache::CacheMode;
use layergauge::config::RunConfig;
use layergauge::core::arch::PRESETS;
use layergauge::core::dataset::stratified_split;
use layergauge::core::weights::{assemble_variant, random_bundle};
use layergauge::core::{ArchitectureSpec, ModelVariant, VariantTag};
use layergauge::experiment::{extract_features, Experiment};
use layergauge::manifest::{load_manifest, Dataset};
use layergauge::report::{emit_plot_data, read_report, write_report};
use layergauge::{svm_io, synthetic, weights_io};

#[derive(Parser)]
#[command(name = "layergauge", version, about = "Measure how much each pretrained CNN layer helps a new image task")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a seeded random weight bundle.
    GenRandom {
        #[arg(long, default_value = "alexnet", value_parser = clap::builder::PossibleValuesParser::new(PRESETS))]
        arch: String,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a bundle whose first conv layer holds Gabor edge filters.
    GenEdgeWeights {
        #[arg(long, default_value = "two-block", value_parser = clap::builder::PossibleValuesParser::new(PRESETS))]
        arch: String,
        /// Seed for the random layers after the first.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Gabor carrier wavelength in pixels.
        #[arg(long, default_value_t = 5.0)]
        wavelength: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a synthetic PNG dataset with a manifest.
    GenSynthetic {
        #[arg(long, value_enum, default_value = "textures")]
        kind: SyntheticKind,
        #[arg(long, default_value_t = 10)]
        per_class: usize,
        #[arg(long, default_value_t = 32)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Grating amplitude (gratings only).
        #[arg(long, default_value_t = 0.2)]
        contrast: f64,
        /// Pixel noise standard deviation (gratings only).
        #[arg(long, default_value_t = 0.1)]
        noise: f64,
        /// Orientation jitter in degrees (gratings only).
        #[arg(long, default_value_t = 10.0)]
        jitter: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Extract features at one representation layer, without augmentation.
    Extract {
        /// Pretrained bundle; needed unless the variant is all random.
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long, value_parser = parse_variant)]
        variant: VariantTag,
        #[arg(long, default_value = "alexnet", value_parser = clap::builder::PossibleValuesParser::new(PRESETS))]
        arch: String,
        /// Seed of the random layers.
        #[arg(long, default_value_t = 0)]
        random_seed: u64,
        /// Split into train/test files with this seed instead of one file.
        #[arg(long)]
        split_seed: Option<u64>,
        #[arg(long, default_value_t = 0.7)]
        ratio: f64,
        /// Per-channel mean subtracted from inputs, as `r,g,b`.
        #[arg(long, value_parser = parse_mean, default_value = "0,0,0")]
        mean: [f32; 3],
        /// Shrink images whose longer side exceeds this; 0 disables.
        #[arg(long, default_value_t = 0)]
        max_image_side: usize,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a full experiment from a TOML file.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        repeats: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        keep_going: bool,
        #[arg(long)]
        base_seed: Option<u64>,
        #[arg(long, value_parser = ["disk", "memory", "off"])]
        cache: Option<String>,
    },
    /// Re-emit plot data from a saved report.
    Report {
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SyntheticKind {
    Textures,
    Gratings,
}

fn parse_variant(s: &str) -> Result<VariantTag, String> {
    VariantTag::parse(s).map_err(|e| e.to_string())
}

fn parse_mean(s: &str) -> Result<[f32; 3], String> {
    let parts: Vec<f32> = s
        .split(',')
        .map(|p| p.trim().parse::<f32>().map_err(|e| format!("{p}: {e}")))
        .collect::<Result<_, _>>()?;
    parts.try_into().map_err(|_| "expected three comma-separated values".to_string())
}

fn usage_error(kind: ErrorKind, message: impl std::fmt::Display) -> ! {
    Cli::command().error(kind, message).exit()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs.filter(|&j| j > 0) {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("warning: could not size the worker pool: {e}");
        }
    }
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> anyhow::Result<()> {
    match command {
        Command::GenRandom { arch, seed, out } => {
            let arch = ArchitectureSpec::preset(&arch)?;
            weights_io::save_weights(&random_bundle(&arch, seed), &out)?;
            println!("wrote {}", out.display());
        }
        Command::GenEdgeWeights {
            arch,
            seed,
            wavelength,
            out,
        } => {
            let arch = ArchitectureSpec::preset(&arch)?;
            weights_io::save_weights(&synthetic::oriented_edge_bundle(&arch, wavelength, seed)?, &out)?;
            println!("wrote {}", out.display());
        }
        Command::GenSynthetic {
            kind,
            per_class,
            size,
            seed,
            contrast,
            noise,
            jitter,
            out,
        } => {
            if per_class < 2 || size == 0 {
                usage_error(ErrorKind::InvalidValue, "--per-class must be at least 2 and --size positive");
            }
            let images = match kind {
                SyntheticKind::Textures => synthetic::textures(per_class, size, seed),
                SyntheticKind::Gratings => synthetic::gratings(per_class, size, contrast, noise, jitter, seed),
            };
            let manifest = synthetic::write_dataset(&out, &images)?;
            println!("wrote {} images and {}", images.len(), manifest.display());
        }
        Command::Extract {
            weights,
            manifest,
            n,
            variant,
            arch,
            random_seed,
            split_seed,
            ratio,
            mean,
            max_image_side,
            out,
        } => {
            let arch = ArchitectureSpec::preset(&arch)?;
            if n == 0 || n > arch.depth() {
                usage_error(
                    ErrorKind::InvalidValue,
                    format!("--n must be between 1 and {} for {}", arch.depth(), arch.name()),
                );
            }
            let reads_pretrained = match variant {
                VariantTag::PretrainedPrefix => true,
                VariantTag::Hybrid => n > 1,
                VariantTag::RandomBaseline => false,
            };
            if reads_pretrained && weights.is_none() {
                usage_error(ErrorKind::MissingRequiredArgument, format!("--weights is required for {variant}"));
            }
            if split_seed.is_some() && !(ratio > 0.0 && ratio < 1.0) {
                usage_error(ErrorKind::InvalidValue, "--ratio must lie strictly between 0 and 1");
            }
            extract(&arch, weights.as_deref(), &manifest, n, variant, random_seed, split_seed, ratio, mean, max_image_side, &out)?;
        }
        Command::Run {
            config,
            repeats,
            out,
            keep_going,
            base_seed,
            cache,
        } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(r) = repeats {
                cfg.repeats = r as usize;
            }
            if let Some(o) = out {
                cfg.out = o;
            }
            if keep_going {
                cfg.keep_going = true;
            }
            if let Some(s) = base_seed {
                cfg.base_seed = s;
            }
            if let Some(c) = cache {
                cfg.cache.mode = c;
            }
            return run(cfg);
        }
        Command::Report { report, out } => {
            let r = read_report(&report)?;
            let (a, g) = emit_plot_data(&r, &out)?;
            println!("wrote {} and {}", a.display(), g.display());
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn extract(
    arch: &ArchitectureSpec,
    weights: Option<&Path>,
    manifest: &Path,
    n: usize,
    variant: VariantTag,
    random_seed: u64,
    split_seed: Option<u64>,
    ratio: f64,
    mean: [f32; 3],
    max_image_side: usize,
    out: &Path,
) -> anyhow::Result<()> {
    let pretrained = weights
        .map(|p| weights_io::load_weights(p, arch).with_context(|| format!("loading weights {}", p.display())))
        .transpose()?;
    let random = random_bundle(arch, random_seed);
    let model = assemble_variant(arch, pretrained.as_ref(), Some(&random), ModelVariant::new(variant, n, arch)?)?;
    let manifest = load_manifest(manifest)?;
    let dataset = Dataset::load(manifest, (max_image_side > 0).then_some(max_image_side))?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let label = format!("{} {} n={n}", arch.name(), variant);
    let mut parts = Vec::new();
    match split_seed {
        None => parts.push(("features", dataset.images.iter().collect::<Vec<_>>())),
        Some(seed) => {
            let plan = stratified_split(&dataset.manifest, ratio, seed)?;
            let pick = |ids: &[String]| ids.iter().map(|id| dataset.image(id).expect("manifest image")).collect::<Vec<_>>();
            parts.push(("train", pick(&plan.train_ids)));
            parts.push(("test", pick(&plan.test_ids)));
        }
    }
    for (name, images) in parts {
        let m = extract_features(arch, &model, &images, n, mean)?;
        let path = out.join(format!("{name}.otsw"));
        svm_io::save_features(&m, &label, &path)?;
        println!("wrote {} ({} rows x {} cols)", path.display(), m.rows(), m.cols());
    }
    Ok(())
}

fn run(cfg: RunConfig) -> anyhow::Result<()> {
    let experiment_cfg = cfg.to_experiment()?;
    let cache = cfg.cache_mode()?;
    let pretrained = match &cfg.weights {
        Some(p) if experiment_cfg.pretrained_layers_needed() > 0 => Some(
            weights_io::load_weights(p, &experiment_cfg.arch)
                .with_context(|| format!("loading weights {}", p.display()))?,
        ),
        _ => None,
    };
    let manifest = load_manifest(&cfg.manifest)?;
    let dataset = Dataset::load(manifest, cfg.max_image_side())?;
    std::fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))?;
    let total = experiment_cfg.repeats * experiment_cfg.layers.len() * experiment_cfg.variants.len();
    eprintln!(
        "{} images, {} classes; {} trials; cache {}",
        dataset.images.len(),
        dataset.manifest.class_names().len(),
        total,
        cache.describe()
    );
    if let CacheMode::Disk { dir, .. } = &cache {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let experiment = Experiment::new(experiment_cfg, &dataset, pretrained.as_ref(), cache)?;
    let done = std::sync::atomic::AtomicUsize::new(0);
    let mut report = experiment.run_with(&|r| {
        let k = done.fetch_add(1, std::sync::atomic::Ordering::Relaxed) + 1;
        eprintln!(
            "[{k}/{total}] {} n={} trial {}: acc {:.4} (C={}, {:.1}s)",
            r.variant, r.n, r.trial_index, r.acc, r.chosen_c, r.timing_secs
        );
    })?;
    report.config = serde_json::json!({
        "run": cfg.echo(),
        "experiment": report.config,
    });
    let report_path = cfg.out.join("report.json");
    write_report(&report, &report_path)?;
    println!("wrote {}", report_path.display());
    match emit_plot_data(&report, &cfg.out) {
        Ok((a, g)) => println!("wrote {} and {}", a.display(), g.display()),
        Err(e) if !report.failures.is_empty() => eprintln!("no plot data: {e}"),
        Err(e) => return Err(e.into()),
    }
    if report.failures.is_empty() {
        Ok(())
    } else {
        for f in &report.failures {
            eprintln!("failed: {} n={} trial {}: {}", f.variant, f.n, f.trial_index, f.error);
        }
        bail!("{} of {} trials failed", report.failures.len(), total)
    }
}
