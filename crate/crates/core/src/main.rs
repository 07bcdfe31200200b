use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use glandseg::displacement::{gt_displacement, GT_ITERS, GT_RADIUS};
use glandseg::error::{Error, Result};
use glandseg::field::NodeFeatures;
use glandseg::gcm::{gcm, T0, T1};
use glandseg::getconv::{
    isomorphism_probe, jacobian_check, Adjacency, CheckPoint, CheckedOp, JacobianReport,
};
use glandseg::grid::{GridShape, Neighborhood};
use glandseg::{io, metrics, synth};

/// Displacement-field instance segmentation tools.
#[derive(Parser)]
#[command(name = "glandseg", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ground-truth displacement field of a label map.
    GenDf {
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = GT_RADIUS)]
        radius: usize,
        #[arg(long, default_value_t = GT_ITERS)]
        iters: usize,
    },
    /// Cluster foreground pixels into instances along a displacement field.
    Cluster {
        #[arg(long)]
        energy: PathBuf,
        #[arg(long)]
        field: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = T0)]
        t0: usize,
        #[arg(long, default_value_t = T1)]
        t1: usize,
    },
    /// Object-level F1, Dice and Hausdorff distance as JSON.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
    },
    /// Isomorphism probe and Jacobian checks for the diffusion layer.
    GetconvCheck {
        /// First seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Number of probe seeds.
        #[arg(long, default_value_t = 100)]
        seeds: u64,
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
        /// Parameter manifest; adds Jacobian checks at these weights.
        #[arg(long)]
        params: Option<PathBuf>,
        /// Stencil of the supplied parameters, `square-<side>` or `disk-<radius>`.
        #[arg(long, default_value = "square-3", value_parser = parse_stencil)]
        stencil: Neighborhood,
    },
    /// Write a synthetic label map.
    Synth {
        #[arg(long)]
        name: String,
        #[arg(long)]
        height: usize,
        #[arg(long)]
        width: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_stencil(s: &str) -> std::result::Result<Neighborhood, String> {
    let (kind, size) = s
        .split_once('-')
        .ok_or("expected square-<side> or disk-<radius>")?;
    let size: usize = size.parse().map_err(|e| format!("{e}"))?;
    match kind {
        "square" => Neighborhood::square(size),
        "disk" => Neighborhood::disk(size),
        _ => return Err(format!("unknown stencil kind `{kind}`")),
    }
    .map_err(|e| e.to_string())
}

const PROBE_MIN_GAP: f64 = 1e-6;
const JACOBIAN_POINTS: u64 = 5;

#[derive(Serialize)]
struct CheckSummary {
    probe_seeds: u64,
    probe_separated: u64,
    probe_required: u64,
    isotropic_max_gap: f64,
    jacobian: Vec<JacobianReport>,
    passed: bool,
}

fn print_json(value: &impl Serialize) -> Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn supplied_point(path: &Path, kind: Neighborhood, seed: u64) -> Result<CheckPoint> {
    let side = 2 * kind.reach() + 2;
    let adj = Adjacency::new(GridShape::new(side, side)?, kind);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut random =
        |dim: (usize, usize)| Array2::from_shape_fn(dim, |_| rng.random_range(-1.0..1.0));
    let nodes = adj.shape().len();
    let manifest: io::Manifest = serde_json::from_slice(&std::fs::read(path)?)?;
    let is_block = manifest.tensors.iter().any(|t| t.name == "dwconv.weight");
    Ok(if is_block {
        let params = io::read_block_params(path)?;
        let c = params.conv.channels();
        CheckPoint::GetBlock {
            z: NodeFeatures::new(random((nodes, c)))?,
            dz: random((nodes, c)),
            adj,
            params,
        }
    } else {
        let params = io::read_getconv_params(path)?;
        let c = params.channels();
        CheckPoint::GetConv {
            z: NodeFeatures::new(random((nodes, c)))?,
            dz: random((nodes, c)),
            adj,
            params,
        }
    })
}

fn getconv_check(
    seed: u64,
    seeds: u64,
    tol: f64,
    params: Option<PathBuf>,
    stencil: Neighborhood,
) -> Result<bool> {
    let mut separated = 0;
    let mut isotropic_max_gap = 0.0f64;
    for s in seed..seed + seeds {
        let report = isomorphism_probe(s)?;
        if report.anisotropic_gap > PROBE_MIN_GAP {
            separated += 1;
        }
        isotropic_max_gap = isotropic_max_gap.max(report.isotropic_gap);
    }
    let required = (seeds * 99).div_ceil(100);

    let mut points = Vec::new();
    for op in [
        CheckedOp::Diffusivity,
        CheckedOp::GetConv,
        CheckedOp::GetBlock,
    ] {
        for s in seed..seed + JACOBIAN_POINTS {
            points.push(CheckPoint::random(op, s)?);
        }
    }
    if let Some(path) = params {
        points.push(supplied_point(&path, stencil, seed)?);
    }
    let jacobian: Vec<JacobianReport> = points.iter().map(|p| jacobian_check(p, tol)).collect();

    let passed =
        separated >= required && isotropic_max_gap == 0.0 && jacobian.iter().all(|r| r.passed);
    let summary = CheckSummary {
        probe_seeds: seeds,
        probe_separated: separated,
        probe_required: required,
        isotropic_max_gap,
        jacobian,
        passed,
    };
    print_json(&summary)?;
    Ok(passed)
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::GenDf {
            labels,
            out,
            radius,
            iters,
        } => {
            let labels = io::read_map(labels)?;
            io::write_field(out, &gt_displacement(&labels, radius, iters)?)?;
        }
        Command::Cluster {
            energy,
            field,
            out,
            t0,
            t1,
        } => {
            let energy = io::read_energy(energy)?;
            let field = io::read_field(field)?;
            io::write_map(out, &gcm(&field, &energy, t0, t1)?)?;
        }
        Command::Eval { pred, gt } => {
            let record = metrics::evaluate(&io::read_map(pred)?, &io::read_map(gt)?)?;
            print_json(&record)?;
        }
        Command::GetconvCheck {
            seed,
            seeds,
            tol,
            params,
            stencil,
        } => {
            if seeds == 0 || tol.is_nan() || tol <= 0.0 {
                return Err(Error::InvalidArgument(
                    "need --seeds >= 1 and --tol > 0".into(),
                ));
            }
            return getconv_check(seed, seeds, tol, params, stencil);
        }
        Command::Synth {
            name,
            height,
            width,
            seed,
            out,
        } => {
            let map = synth::synth(&name, GridShape::new(height, width)?, seed)?;
            io::write_map(out, &map)?;
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("glandseg: checks failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("glandseg: {e}");
            ExitCode::from(1)
        }
    }
}
