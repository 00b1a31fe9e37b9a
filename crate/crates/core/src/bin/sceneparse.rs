use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use sceneparse::bundle::ModelBundle;
use sceneparse::config::RunConfig;
use sceneparse::features::FeatureCatalog;
use sceneparse::imagedata::{generate_synthetic, load_dataset_dir, read_rgb, save_dataset, LabeledImage, SceneSpec};
use sceneparse::pipeline::{self, SplitChoice};
use sceneparse::{render, Error, Result};

/// Superpixel scene parsing with GA feature selection and context priors.
#[derive(Parser)]
#[command(name = "sceneparse", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded synthetic horizon-scene dataset.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 50)]
        scenes: usize,
        #[arg(long, default_value_t = 128)]
        side: usize,
        #[arg(long, default_value_t = 5)]
        classes: usize,
        #[arg(long, default_value_t = 16)]
        lattice: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run only the GA feature selection on the training split.
    SelectFeatures {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train all layers and write the model bundle and report.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
        /// Skip feature selection and use every feature.
        #[arg(long)]
        no_ga: bool,
        /// Feed uniform context vectors to the integration layer.
        #[arg(long)]
        no_context: bool,
    },
    /// Label images with a trained bundle.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(required = true)]
        images: Vec<PathBuf>,
    },
    /// Evaluate a bundle on a labelled dataset split.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        /// Also report visual-only and partial-context accuracies.
        #[arg(long)]
        ablation: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    /// Dataset root with images/, labels/ and classes.cfg.
    #[arg(long)]
    data: PathBuf,
    /// Configuration file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    segmenter: Option<String>,
    #[arg(long)]
    superpixels: Option<usize>,
    #[arg(long)]
    blocks: Option<usize>,
    #[arg(long)]
    image_side: Option<usize>,
    /// Override any configuration key, e.g. `--set ga.generations=50`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl Common {
    fn run_config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        let flags = [
            ("seed", self.seed.map(|v| v.to_string())),
            ("segmenter", self.segmenter.clone()),
            ("superpixels", self.superpixels.map(|v| v.to_string())),
            ("blocks", self.blocks.map(|v| v.to_string())),
            ("image_side", self.image_side.map(|v| v.to_string())),
        ];
        for (k, v) in flags {
            if let Some(v) = v {
                cfg.set(k, &v)?;
            }
        }
        for kv in &self.overrides {
            cfg.apply_override(kv)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { out, scenes, side, classes, lattice, seed } => {
            let spec = SceneSpec {
                side,
                n_classes: classes,
                n_scenes: scenes,
                lattice,
            };
            let ds = generate_synthetic(&spec, seed)?;
            save_dataset(&out, &ds)?;
            eprintln!("wrote {} scenes to {}", ds.images.len(), out.display());
        }
        Command::SelectFeatures { common, out } => {
            let cfg = common.run_config()?;
            let ds = load_dataset_dir(&common.data)?;
            let start = Instant::now();
            let split = pipeline::split_for(&ds, &cfg)?;
            let images = ds.select(&split.train)?;
            let prepared = pipeline::prepare(&images, &cfg, ds.classes.n_classes())?;
            let cfg = RunConfig { ga_enabled: true, ..cfg };
            let sel = pipeline::select_features(&prepared, &cfg)?;
            let ga = sel.ga.expect("selection enabled");
            create_dir(&out)?;
            write(&out.join("mask.txt"), format!("{}\n", sel.mask))?;
            write(&out.join("ga_history.csv"), ga.history_csv())?;
            println!("{}", sel.mask);
            println!("selected {}/{} features, fitness {:.6}", sel.mask.count(), sel.mask.len(), ga.best.fitness);
            eprintln!("select-features: {:.3} s", start.elapsed().as_secs_f64());
        }
        Command::Train { common, out, no_ga, no_context } => {
            let mut cfg = common.run_config()?;
            if no_ga {
                cfg.ga_enabled = false;
            }
            if no_context {
                cfg.context_enabled = false;
            }
            let ds = load_dataset_dir(&common.data)?;
            let (bundle, report, timings) = pipeline::train(&ds, &cfg)?;
            create_dir(&out)?;
            bundle.save(&out.join("model.bundle"))?;
            write(
                &out.join("train_report.txt"),
                report.to_text(&FeatureCatalog::default(), ds.classes.names()),
            )?;
            write(&out.join("mlp_loss.csv"), report.mlp.loss_csv())?;
            write(&out.join("adjacency_prior.csv"), bundle.priors.adjacency.to_csv(ds.classes.names()))?;
            if let Some(ga) = &report.ga {
                write(&out.join("ga_history.csv"), ga.history_csv())?;
            }
            println!(
                "trained on {} images; train global accuracy {:.4}",
                report.n_train_images, report.train_eval.global_acc
            );
            eprint!("{}", timings.to_text());
        }
        Command::Predict { model, out, images } => {
            let bundle = ModelBundle::load(&model)?;
            create_dir(&out)?;
            for path in images {
                let (w, h, pixels) = read_rgb(&path)?;
                let stem = path.file_stem().map_or("image".into(), |s| s.to_string_lossy().into_owned());
                let img = LabeledImage::unlabeled(stem.clone(), w, h, pixels)?;
                let pred = pipeline::predict_image(&bundle, &img)?;
                render::write_indexed_png(&out.join(format!("{stem}_labels.png")), w, h, pred.full())?;
                let blend = render::overlay(&img.pixels, pred.full(), 0.4);
                sceneparse::imagedata::write_png_rgb(&out.join(format!("{stem}_overlay.png")), w, h, &blend)?;
                println!("{}", path.display());
            }
        }
        Command::Eval { model, data, split, ablation, out } => {
            let which: SplitChoice = split.parse()?;
            let bundle = ModelBundle::load(&model)?;
            let ds = load_dataset_dir(&data)?;
            let outcome = pipeline::eval_split(&bundle, &ds, which)?;
            let names = bundle.classes.names();
            let text = outcome.report.to_text(names);
            print!("{text}");
            if ablation {
                println!();
                print!("{}", outcome.ablation_text());
            }
            if let Some(out) = out {
                create_dir(&out)?;
                write(&out.join("eval_report.txt"), &text)?;
                write(&out.join("confusion.csv"), outcome.report.confusion_csv(names))?;
                if ablation {
                    write(&out.join("ablation.txt"), outcome.ablation_text())?;
                }
            }
        }
    }
    Ok(())
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("SCENEPARSE_THREADS") {
        let n: usize = v
            .parse()
            .map_err(|_| Error::Config(format!("SCENEPARSE_THREADS must be a number, got {v:?}")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match configure_threads().and_then(|_| run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
