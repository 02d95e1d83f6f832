use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use langfield::camera::CameraIntrinsics;
use langfield::checkpoint::Checkpoint;
use langfield::config::{self, RunConfig};
use langfield::dataset::{self, Dataset};
use langfield::field::Field;
use langfield::segment::{self, ClassMap, LabelCatalog, Similarity, ViewSpec};
use langfield::synth::{self, SceneSpec};
use langfield::train::{self, GradCheckConfig};
use langfield::vlft::Tensor;
use langfield::{ppm, Error, Result};

const CHECKPOINT_FILE: &str = "checkpoint.vlfc";
const LOG_FILE: &str = "train_log.tsv";

#[derive(Parser)]
#[command(name = "langfield", version, about = "Language-embedded neural fields from posed RGB-D frames")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Config file of `key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set train.iters=200`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Cap on worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with ground-truth class maps.
    Synth {
        /// Scene spec file; the built-in desk scene when omitted.
        #[arg(long)]
        scene: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 60)]
        train: usize,
        #[arg(long, default_value_t = 12)]
        test: usize,
        #[arg(long, default_value_t = 128)]
        width: usize,
        #[arg(long, default_value_t = 96)]
        height: usize,
        /// Focal length in pixels.
        #[arg(long, default_value_t = 100.0)]
        focal: f64,
        /// Overrides the scene seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train a field on `data.dir`, writing to `out.dir`.
    Train,
    /// Render color, depth and features for one view.
    Render {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Dataset supplying intrinsics and poses; defaults to `data.dir`.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Frame index in the dataset.
        #[arg(long, conflicts_with = "pose_file")]
        view: Option<usize>,
        /// File with one row-major 4x4 camera-to-world pose.
        #[arg(long)]
        pose_file: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated subset of rgb, depth, feature.
        #[arg(long, default_value = "rgb,depth,feature")]
        outputs: String,
    },
    /// Classify rendered features against a label catalog.
    Segment {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        /// Comma-separated frame indices; all frames when omitted.
        #[arg(long)]
        views: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print segmentation metrics of predicted against true class maps.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// Label catalog for class count and names.
        #[arg(long)]
        labels: Option<PathBuf>,
    },
    /// Heatmap of similarity to a label or embedding.
    Query {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        view: usize,
        /// Label name looked up in `--labels`.
        #[arg(long, requires = "labels", conflicts_with = "embedding")]
        label: Option<String>,
        #[arg(long)]
        labels: Option<PathBuf>,
        /// File of whitespace-separated floats.
        #[arg(long, required_unless_present = "label")]
        embedding: Option<PathBuf>,
        /// Output heatmap, `.vlft`; a `.ppm` preview is written alongside.
        #[arg(long)]
        out: PathBuf,
    },
    /// Finite-difference check of the full gradient on the tiny model.
    Gradcheck {
        #[arg(long, default_value_t = 1e-3)]
        tolerance: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// List config keys with defaults.
    Keys,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &cli.common.config {
        cfg.apply_file(path)?;
    }
    cfg.apply_overrides(&cli.common.overrides)?;
    if let Some(n) = cli.common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Synth {
            scene,
            out,
            train,
            test,
            width,
            height,
            focal,
            seed,
        } => {
            let mut spec = match scene {
                Some(p) => SceneSpec::read(&p)?,
                None => SceneSpec::desk(),
            };
            if let Some(s) = seed {
                spec.seed = s;
            }
            let intr = CameraIntrinsics {
                fx: focal,
                fy: focal,
                cx: width as f64 / 2.0,
                cy: height as f64 / 2.0,
                width,
                height,
            };
            let generated = synth::generate_dataset(&spec, train, test, &intr)?;
            synth::write_generated(&generated, &out)?;
            eprintln!(
                "wrote {train} train and {test} test views with {} classes to {}",
                generated.catalog.len(),
                out.display()
            );
        }
        Command::Train => cmd_train(&cfg)?,
        Command::Render {
            checkpoint,
            data,
            view,
            pose_file,
            out,
            outputs,
        } => {
            let (field, params) = load_model(&checkpoint)?;
            let ds = dataset::load_dataset(&data_dir(&cfg, data))?;
            let pose = match (view, pose_file) {
                (Some(i), None) => frame(&ds, i)?.pose,
                (None, Some(p)) => {
                    let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
                    match dataset::parse_poses(&text)?[..] {
                        [pose] => pose,
                        _ => return Err(Error::format(p.display().to_string(), "expected exactly one pose")),
                    }
                }
                _ => return Err(Error::Config("give exactly one of --view or --pose-file".into())),
            };
            let spec = view_spec(&cfg, &ds)?;
            let rendered = segment::render_view(&field, &params, &pose, ds.intrinsics(), &spec)?;
            create_dir(&out)?;
            for kind in outputs.split(',').map(str::trim) {
                let (t, preview) = match kind {
                    "rgb" => (&rendered.rgb, Some(ppm::encode(&rendered.rgb)?)),
                    "depth" => (&rendered.depth, Some(ppm::encode_normalized(&rendered.depth)?)),
                    "feature" => (&rendered.feature, None),
                    _ => return Err(Error::Config(format!("unknown output {kind:?}"))),
                };
                t.write_file(&out.join(format!("{kind}.vlft")))?;
                if let Some(bytes) = preview {
                    ppm::write(&out.join(format!("{kind}.ppm")), &bytes)?;
                }
            }
        }
        Command::Segment {
            checkpoint,
            labels,
            data,
            views,
            out,
        } => {
            let (field, params) = load_model(&checkpoint)?;
            let catalog = LabelCatalog::read(&labels)?;
            let ds = dataset::load_dataset(&data_dir(&cfg, data))?;
            let indices = parse_views(views.as_deref(), ds.frames.len())?;
            let spec = view_spec(&cfg, &ds)?;
            let sim: Similarity = cfg.get("segment.similarity").parse()?;
            create_dir(&out)?;
            for i in indices {
                let f = frame(&ds, i)?;
                let feat = segment::render_feature_map(&field, &params, &f.pose, &f.intrinsics, &spec)?;
                let classes = segment::classify_features(&feat, &catalog, sim)?;
                classes.to_tensor().write_file(&out.join(synth::class_file(i)))?;
                ppm::write(&out.join(format!("frame_{i:05}.class.ppm")), &ppm::encode(&palette(&classes))?)?;
            }
        }
        Command::Eval { pred, truth, labels } => {
            let catalog = labels.map(|p| LabelCatalog::read(&p)).transpose()?;
            let names = class_files(&truth)?;
            if names.is_empty() {
                return Err(Error::Validation(format!("no class maps in {}", truth.display())));
            }
            let mut p = Vec::new();
            let mut t = Vec::new();
            for n in &names {
                t.push(ClassMap::from_tensor(&Tensor::read_file(&truth.join(n))?)?);
                p.push(ClassMap::from_tensor(&Tensor::read_file(&pred.join(n))?)?);
            }
            let k = match &catalog {
                Some(c) => c.len(),
                None => 1 + p.iter().chain(&t).flat_map(|m| m.classes.iter()).copied().max().unwrap_or(0) as usize,
            };
            let metrics = segment::compute_metrics(&p, &t, k)?;
            print!("{}", metrics.to_tsv(catalog.as_ref().map(|c| c.names())));
        }
        Command::Query {
            checkpoint,
            data,
            view,
            label,
            labels,
            embedding,
            out,
        } => {
            let query: Vec<f32> = match (label, embedding) {
                (Some(name), None) => {
                    let cat = LabelCatalog::read(labels.as_deref().expect("clap requires --labels"))?;
                    let k = cat
                        .index_of(&name)
                        .ok_or_else(|| Error::Validation(format!("label {name:?} not in catalog")))?;
                    cat.embedding(k).to_vec()
                }
                (None, Some(p)) => {
                    let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
                    text.split_whitespace()
                        .map(|t| t.parse::<f32>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|e| Error::format(p.display().to_string(), e.to_string()))?
                }
                _ => return Err(Error::Config("give exactly one of --label or --embedding".into())),
            };
            let (field, params) = load_model(&checkpoint)?;
            let ds = dataset::load_dataset(&data_dir(&cfg, data))?;
            let f = frame(&ds, view)?;
            let spec = view_spec(&cfg, &ds)?;
            let feat = segment::render_feature_map(&field, &params, &f.pose, &f.intrinsics, &spec)?;
            let heat = segment::query_heatmap(&feat, &query)?;
            if heat.constant {
                eprintln!("warning: similarity is constant over the view; heatmap is all zeros");
            }
            heat.values.write_file(&out)?;
            ppm::write(&out.with_extension("ppm"), &ppm::encode(&heat.values)?)?;
        }
        Command::Gradcheck { tolerance, seed } => {
            let tc = cfg.train()?;
            let ds = train::tiny_dataset()?;
            let field = train::tiny_model(ds.scene_bound)?;
            let params = train::grad_check_params(&field, seed);
            let gc = GradCheckConfig {
                weights: tc.weights,
                tolerance,
                seed,
                ..GradCheckConfig::default()
            };
            let report = train::grad_check(&ds, &field, &params, &gc)?;
            println!("group\tparams\tmax_rel_error");
            for g in &report.groups {
                println!("{}\t{}\t{:.3e}", g.name, g.params, g.max_rel_error);
            }
            let ok = report.passed();
            println!("{}\tmax {:.3e} tolerance {tolerance:e}", if ok { "PASS" } else { "FAIL" }, report.max_rel_error());
            if !ok {
                return Ok(ExitCode::from(1));
            }
        }
        Command::Keys => print!("{}", config::documentation()),
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_train(cfg: &RunConfig) -> Result<()> {
    let tc = cfg.train()?;
    let ds = dataset::load_dataset(&data_dir(cfg, None))?;
    let field = Field::new(cfg.grid()?, cfg.mlp()?, ds.scene_bound)?;
    let out = PathBuf::from(cfg.get("out.dir"));
    create_dir(&out)?;
    let resume = match cfg.parse_opt::<PathBuf>("train.resume")? {
        Some(p) => {
            let ck = Checkpoint::read(&p)?;
            ck.ensure_matches(field.grid_config(), field.mlp_config())?;
            Some(ck.into_state())
        }
        None => None,
    };
    let ckpt_every: usize = cfg.parse("train.ckpt_every")?;
    let log_path = out.join(LOG_FILE);
    let mut log = String::from("iteration\tL_P\tL_G\tL_VL\tL_total\twall_ms\n");
    let start = Instant::now();
    let mut last = start;
    let (state, _) = train::train(&field, &ds, &tc, resume, |state, r| {
        let now = Instant::now();
        // Wall time would make logs differ between identical runs.
        let ms = if tc.deterministic { 0 } else { now.duration_since(last).as_millis() };
        last = now;
        log.push_str(&format!("{}\t{}\t{}\t{}\t{}\t{ms}\n", r.iteration, r.l_p, r.l_g, r.l_vl, r.l_total));
        if r.iteration % 50 == 0 || state.iteration == tc.iterations {
            eprintln!(
                "iter {:>6}  L_total {:.5}  L_P {:.5}  L_G {:.5}  L_VL {:.5}  {:.1}s",
                r.iteration,
                r.l_total,
                r.l_p,
                r.l_g,
                r.l_vl,
                start.elapsed().as_secs_f64()
            );
        }
        if ckpt_every > 0 && state.iteration % ckpt_every == 0 && state.iteration < tc.iterations {
            Checkpoint::from_state(&field, state, true).write(&out.join(CHECKPOINT_FILE))?;
            std::fs::write(&log_path, &log).map_err(|e| Error::io(&log_path, e))?;
        }
        Ok(())
    })?;
    Checkpoint::from_state(&field, &state, true).write(&out.join(CHECKPOINT_FILE))?;
    std::fs::write(&log_path, &log).map_err(|e| Error::io(&log_path, e))?;
    Ok(())
}

fn load_model(path: &Path) -> Result<(Field, langfield::field::FieldParams<f32>)> {
    let ck = Checkpoint::read(path)?;
    let field = ck.field()?;
    Ok((field, ck.params))
}

fn data_dir(cfg: &RunConfig, flag: Option<PathBuf>) -> PathBuf {
    flag.unwrap_or_else(|| PathBuf::from(cfg.get("data.dir")))
}

fn frame(ds: &Dataset, i: usize) -> Result<&dataset::Frame> {
    ds.frames
        .get(i)
        .ok_or_else(|| Error::Config(format!("view {i} out of range, dataset has {} frames", ds.frames.len())))
}

fn view_spec(cfg: &RunConfig, ds: &Dataset) -> Result<ViewSpec> {
    Ok(ViewSpec {
        near: cfg.parse_opt("render.near")?.unwrap_or(ds.near),
        far: cfg.parse_opt("render.far")?.unwrap_or(ds.far),
        samples: cfg.parse("render.samples")?,
        seed: cfg.parse_opt("render.seed")?,
    })
}

fn parse_views(s: Option<&str>, n: usize) -> Result<Vec<usize>> {
    match s {
        None => Ok((0..n).collect()),
        Some(s) => s
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::Config(format!("bad view index {t:?}")))
            })
            .collect(),
    }
}

fn create_dir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

/// `frame_*.class.vlft` names in `dir`, sorted.
fn class_files(dir: &Path) -> Result<Vec<String>> {
    let mut names = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if name.starts_with("frame_") && name.ends_with(".class.vlft") {
            names.push(name);
        }
    }
    names.sort();
    Ok(names)
}

fn palette(map: &ClassMap) -> Tensor {
    const COLORS: [[f32; 3]; 8] = [
        [0.6, 0.6, 0.6],
        [0.9, 0.6, 0.2],
        [0.9, 0.2, 0.2],
        [0.2, 0.4, 0.9],
        [0.2, 0.8, 0.3],
        [0.8, 0.3, 0.8],
        [0.9, 0.9, 0.2],
        [0.3, 0.8, 0.8],
    ];
    Tensor {
        shape: vec![map.height, map.width, 3],
        data: map.classes.iter().flat_map(|&c| COLORS[c as usize % COLORS.len()]).collect(),
    }
}
