use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use obblabel::config::{ConfigOverrides, ConversionKind, PipelineConfig, StrategyKind};
use obblabel::dataset::LabeledBox;
use obblabel::eval::{evaluate, MetricMode};
use obblabel::fixtures::{gen_fixtures, write_fixtures, FixtureSpec, ScoreModel};
use obblabel::geometry::{angle_diff_mod, min_area_rect, OrientedBox};
use obblabel::io::{self, RleRecord};
use obblabel::pipeline::{oracle_comparison, run_convert, run_select, selections_json};
use obblabel::selection::{PseudoLabel, ProposalSet};
use obblabel::symmetry::{ambiguity_analysis, box_at_angle, second_moments};
use obblabel::{mask, Error};

#[derive(Parser)]
#[command(name = "obblabel", version, about = "Oriented-box pseudo-labels from point annotations and mask proposals")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Pick a proposal per point and write DOTA-format pseudo-labels.
    Convert {
        #[command(flatten)]
        inputs: Inputs,
        /// Output directory, one `<image_id>.txt` per image.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Emit chosen proposal indices and per-proposal scores as JSON.
    Select {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long)]
        out: PathBuf,
        /// Attach offset targets, negative points and sampled bags.
        #[arg(long)]
        with_supervision: bool,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Score pseudo-labels against ground truth.
    Evaluate {
        /// Directory of pseudo-label files.
        #[arg(long)]
        pseudo: PathBuf,
        /// Directory of ground-truth files.
        #[arg(long)]
        gt: PathBuf,
        /// Report JSON path; the text table goes next to it as `.txt`.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Compare sam-top, fused and oracle selection on the same inputs.
    Oracle {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Symmetry-axis versus minimum-rectangle analysis.
    AnalyzeSymmetry {
        /// RLE mask JSON (`{"size": [h, w], "counts": [...]}`).
        #[arg(long, conflicts_with_all = ["w", "h", "alpha"])]
        mask: Option<PathBuf>,
        #[arg(long, requires_all = ["h", "alpha"])]
        w: Option<f64>,
        #[arg(long)]
        h: Option<f64>,
        /// Arm ratio of the symmetric shape.
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Write a synthetic dataset: points.csv, proposals/ and gt/.
    GenFixtures {
        #[arg(long)]
        out: PathBuf,
        /// JSON fixture spec; flags below override it.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        instances: Option<usize>,
        #[arg(long)]
        jitter: Option<f64>,
        #[arg(long, value_parser = parse_score_model)]
        score_model: Option<ScoreModel>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct Inputs {
    /// Points CSV (`image_id,x,y,category`).
    #[arg(long)]
    points: PathBuf,
    /// Directory of per-image proposal JSON files.
    #[arg(long)]
    proposals: PathBuf,
    /// Ground-truth directory, aligned with the points by order per image.
    /// Required by the oracle strategy.
    #[arg(long)]
    gt: Option<PathBuf>,
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML or JSON config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    bag_size: Option<usize>,
    #[arg(long)]
    margin_px: Option<usize>,
    #[arg(long)]
    strategy: Option<StrategyKind>,
    #[arg(long)]
    conversion: Option<ConversionKind>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    metric_mode: Option<MetricMode>,
    #[arg(long)]
    iou_threshold: Option<f64>,
}

impl ConfigArgs {
    fn load(&self) -> obblabel::Result<PipelineConfig> {
        let cli = ConfigOverrides {
            alpha: self.alpha,
            beta: self.beta,
            delta: self.delta,
            bag_size: self.bag_size,
            margin_px: self.margin_px,
            conversion: self.conversion,
            strategy: self.strategy,
            seed: self.seed,
            metric_mode: self.metric_mode,
            iou_threshold: self.iou_threshold,
            workers: self.workers,
            ..Default::default()
        };
        PipelineConfig::load(self.config.as_deref(), &cli)
    }
}

fn parse_score_model(s: &str) -> Result<ScoreModel, String> {
    match s {
        "correlated" => Ok(ScoreModel::Correlated),
        "uninformative" => Ok(ScoreModel::Uninformative),
        _ => Err(format!("unknown score model `{s}` (expected correlated or uninformative)")),
    }
}

fn load_inputs(inputs: &Inputs, cfg: &PipelineConfig) -> obblabel::Result<(Vec<ProposalSet>, Option<Vec<LabeledBox>>)> {
    let points = io::parse_points(&inputs.points)?;
    let proposals = io::read_proposal_dir(&inputs.proposals)?;
    let sets = io::build_proposal_sets(&points, &proposals, &cfg.categories)?;
    let gts = match &inputs.gt {
        Some(dir) => Some(io::align_ground_truth(&sets, &io::read_dota_dir(dir)?)?),
        None => None,
    };
    Ok((sets, gts))
}

fn write_file(path: &Path, body: &str) -> obblabel::Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::Io {
            path: parent.to_path_buf(),
            source: e,
        })?;
    }
    std::fs::write(path, body).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

#[derive(Serialize)]
struct MaskSymmetry {
    pixels: usize,
    anisotropy: f64,
    isotropic: bool,
    axis_angle_deg: f64,
    min_rect: OrientedBox,
    symmetry_box: Option<OrientedBox>,
    /// Angle between the two boxes modulo 90 degrees.
    angle_gap_deg: Option<f64>,
}

fn analyze_mask(path: &Path) -> obblabel::Result<MaskSymmetry> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let rle: RleRecord = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })?;
    let m = rle.decode()?;
    let moments = second_moments(&mask::pixel_points(&m)?, mask::centroid(&m)?)?;
    let anisotropy = moments.anisotropy();
    let isotropic = anisotropy <= 1.0 + obblabel::symmetry::ISOTROPY_EPS;
    let axis = moments.principal_angle();
    let min_rect = min_area_rect(&m.footprint_extremes()?)?;
    let symmetry_box = if isotropic { None } else { Some(box_at_angle(&m, axis)?) };
    Ok(MaskSymmetry {
        pixels: m.count(),
        anisotropy,
        isotropic,
        axis_angle_deg: axis.to_degrees(),
        min_rect,
        angle_gap_deg: symmetry_box.map(|b| {
            angle_diff_mod(min_rect.angle(), b.angle(), std::f64::consts::FRAC_PI_2).to_degrees()
        }),
        symmetry_box,
    })
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Convert { inputs, out, cfg } => {
            let cfg = cfg.load()?;
            let (sets, gts) = load_inputs(&inputs, &cfg)?;
            let labels: Vec<LabeledBox> = run_convert(&sets, gts.as_deref(), &cfg)?
                .iter()
                .map(PseudoLabel::to_labeled_box)
                .collect();
            io::write_pseudo_labels(&out, &labels)?;
            eprintln!("wrote {} pseudo-labels to {}", labels.len(), out.display());
        }
        Command::Select {
            inputs,
            out,
            with_supervision,
            cfg,
        } => {
            let cfg = cfg.load()?;
            let (sets, gts) = load_inputs(&inputs, &cfg)?;
            let records = run_select(&sets, gts.as_deref(), &cfg, with_supervision)?;
            write_file(&out, &selections_json(&records))?;
        }
        Command::Evaluate { pseudo, gt, out, cfg } => {
            let cfg = cfg.load()?;
            let report = evaluate(&io::read_dota_dir(&pseudo)?, &io::read_dota_dir(&gt)?, &cfg.eval_options())?;
            write_file(&out, &io::report_json(&report))?;
            write_file(&out.with_extension("txt"), &report.to_table())?;
            print!("{}", report.to_table());
        }
        Command::Oracle { inputs, out, cfg } => {
            let cfg = cfg.load()?;
            let (sets, gts) = load_inputs(&inputs, &cfg)?;
            let gts = gts.ok_or(Error::MissingGroundTruth).context("the oracle command needs --gt")?;
            let cmp = oracle_comparison(&sets, &gts, &cfg)?;
            write_file(&out, &(serde_json::to_string_pretty(&cmp)? + "\n"))?;
            print!("{}", cmp.to_table());
        }
        Command::AnalyzeSymmetry { mask, w, h, alpha } => {
            let json = match (mask, w, h, alpha) {
                (Some(path), ..) => serde_json::to_string_pretty(&analyze_mask(&path)?)?,
                (None, Some(w), Some(h), Some(a)) => serde_json::to_string_pretty(&ambiguity_analysis(w, h, a)?)?,
                _ => return Err(Error::InvalidInput("give either --mask or all of --w, --h and --alpha".into()).into()),
            };
            println!("{json}");
        }
        Command::GenFixtures {
            out,
            spec,
            instances,
            jitter,
            score_model,
            seed,
        } => {
            let mut fs = match spec {
                Some(p) => {
                    let text = std::fs::read_to_string(&p).map_err(|e| Error::Io {
                        path: p.clone(),
                        source: e,
                    })?;
                    serde_json::from_str::<FixtureSpec>(&text).map_err(|e| Error::Parse {
                        path: p.clone(),
                        line: e.line(),
                        message: e.to_string(),
                    })?
                }
                None => FixtureSpec::default(),
            };
            if let Some(n) = instances {
                fs.instances = n;
            }
            if let Some(j) = jitter {
                fs.jitter = j;
            }
            if let Some(m) = score_model {
                fs.score_model = m;
            }
            let set = gen_fixtures(&fs, seed)?;
            write_fixtures(&out, &set)?;
            eprintln!("wrote {} fixture instances to {}", set.instances.len(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<Error>().is_some() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
        Err(_) => ExitCode::from(2),
    }
}
