use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use seamweld::io::{self, Grid, PointTable};
use seamweld::offsets::PairWeighting;
use seamweld::synth::{self, ArtifactModel, SceneConfig, TileLayout, TruthModel};
use seamweld::{
    Error, ExecutionMode, GlobalPointId, IdScheme, LaplacianCache, MergeConfig, MergeError, MergeEvent,
    MergedDataset, Merger,
};

use crate::{Artifact, Format, MergeArgs, Mode, SynthArgs, Truth, ValidateArgs};

pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_DISCONNECTED: u8 = 2;
pub const EXIT_NO_CONVERGENCE: u8 = 3;
pub const EXIT_THRESHOLD: u8 = 4;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }

    fn at(path: &Path, e: Error) -> Self {
        Self::new(EXIT_FAILURE, format!("{}: {e}", path.display()))
    }

    fn from_merge(e: MergeError, inputs: &[PathBuf]) -> Self {
        let code = match e.source {
            Error::DisconnectedPartitionGraph { .. } => EXIT_DISCONNECTED,
            Error::ConvergenceFailure { .. } => EXIT_NO_CONVERGENCE,
            _ => EXIT_FAILURE,
        };
        let mut message = e.to_string();
        if let Error::DisconnectedPartitionGraph { components } = &e.source {
            for (k, comp) in components.iter().enumerate() {
                let names: Vec<String> = comp.iter().map(|&p| inputs[p].display().to_string()).collect();
                write!(message, "\n  component {k}: {}", names.join(", ")).unwrap();
            }
        }
        Self::new(code, message)
    }
}

fn fail(e: Error) -> Failure {
    Failure::new(EXIT_FAILURE, e.to_string())
}

pub fn merge(args: &MergeArgs) -> Result<u8, Failure> {
    let mut partitions = Vec::with_capacity(args.inputs.len());
    for (k, path) in args.inputs.iter().enumerate() {
        let table = io::read_table(path).map_err(|e| Failure::at(path, e))?;
        partitions.push(table.into_partition(k).map_err(|e| Failure::at(path, e))?);
    }
    let config = MergeConfig {
        tolerance: args.tol,
        max_iterations: args.max_iter,
        pair_weighting: if args.weight_pairs {
            PairWeighting::SqrtCount
        } else {
            PairWeighting::Unweighted
        },
        mode: match args.mode {
            Mode::Seq => ExecutionMode::Sequential,
            Mode::Barrier => ExecutionMode::ParallelBarrier,
            Mode::Relaxed => ExecutionMode::ParallelRelaxed,
        },
        id_scheme: IdScheme { quantum: args.quantum },
        ..MergeConfig::default()
    };
    let cache = match &args.laplacian_cache {
        Some(dir) => Some(LaplacianCache::with_dir(dir).map_err(|e| Failure::at(dir, e))?),
        None => None,
    };
    let progress = |e: MergeEvent| log_event(&e);

    let mut merger = Merger::new(config);
    if let Some(c) = &cache {
        merger = merger.with_cache(c);
    }
    if args.verbose {
        merger = merger.with_events(&progress);
    }
    let out = merger.run(partitions).map_err(|e| Failure::from_merge(e, &args.inputs))?;

    io::write_table(&args.output, &PointTable::from(&out.merged)).map_err(|e| Failure::at(&args.output, e))?;
    if let Some(path) = &args.report {
        let mut text = format!("inputs={}\npoints={}\n", args.inputs.len(), out.merged.len());
        if let Some(o) = &out.offsets {
            for (k, v) in o.offsets.iter().enumerate() {
                writeln!(text, "offset.{k}={v:e}").unwrap();
            }
            writeln!(text, "offset.residual_norm={:e}", o.residual_norm).unwrap();
        }
        text.push_str(&out.report.to_key_value());
        for (stage, d) in &out.timings {
            writeln!(text, "time.{stage}={:.6}", d.as_secs_f64()).unwrap();
        }
        fs::write(path, text).map_err(|e| Failure::at(path, e.into()))?;
    }
    if let Some(path) = &args.grid_out {
        Grid::rasterize(&out.merged.points, &out.merged.values, args.grid_cols)
            .and_then(|g| g.write_path(path))
            .map_err(|e| Failure::at(path, e))?;
    }
    Ok(0)
}

fn log_event(event: &MergeEvent) {
    match event {
        MergeEvent::StageFinished { stage, elapsed } => {
            eprintln!("{stage}: {:.1} ms", elapsed.as_secs_f64() * 1e3)
        }
        MergeEvent::OverlapsComputed {
            partitions,
            pairs,
            max_degree,
            extra_memberships,
        } => eprintln!(
            "{partitions} partitions, {pairs} overlapping pairs, max degree {max_degree}, \
             {extra_memberships} extra memberships"
        ),
        MergeEvent::OffsetsSolved { residual_norm, .. } => {
            eprintln!("offsets solved, residual norm {residual_norm:e}")
        }
        MergeEvent::DirichletSolved(r) if r.solved => eprintln!(
            "  P={} partition {}: {} boundary, {} interior, {} iterations, residual {:e}",
            r.degree, r.partition, r.boundary_count, r.interior_count, r.iterations, r.residual
        ),
        MergeEvent::DirichletSolved(r) => eprintln!(
            "  P={} partition {}: all {} points on the boundary",
            r.degree, r.partition, r.boundary_count
        ),
        MergeEvent::RoundFinished {
            degree,
            max_disagreement,
            ..
        } => eprintln!("round P={degree} done, max disagreement at degree >= {degree}: {max_disagreement:e}"),
        _ => {}
    }
}

fn parse_tiles(s: &str) -> Result<TileLayout, Failure> {
    let bad = || Failure::new(EXIT_FAILURE, format!("--tiles expects NxM, got {s:?}"));
    let (nx, ny) = s.split_once(['x', 'X']).ok_or_else(bad)?;
    Ok(TileLayout::Grid {
        nx: nx.trim().parse().map_err(|_| bad())?,
        ny: ny.trim().parse().map_err(|_| bad())?,
    })
}

pub fn synth(args: &SynthArgs) -> Result<u8, Failure> {
    let layout = match &args.rows {
        Some(rows) => TileLayout::Rows(rows.clone()),
        None => parse_tiles(&args.tiles)?,
    };
    let config = SceneConfig {
        seed: args.seed,
        point_count: args.points,
        layout,
        overlap_fraction: args.overlap,
        truth_model: match args.truth {
            Truth::GaussianBumps => TruthModel::GaussianBumps,
            Truth::Polynomial => TruthModel::Polynomial,
            Truth::Plane => TruthModel::Plane,
        },
        artifact_model: match args.artifact {
            Artifact::Constant => ArtifactModel::Constant,
            Artifact::ConstantPlusSmooth => ArtifactModel::ConstantPlusSmooth,
        },
        artifact_scale: args.scale,
    };
    let (partitions, truth) = synth::generate_scene(&config).map_err(fail)?;
    fs::create_dir_all(&args.out_dir).map_err(|e| Failure::at(&args.out_dir, e.into()))?;
    let ext = match args.format {
        Format::Csv => "csv",
        Format::Bin => "bin",
    };
    for p in &partitions {
        let path = args.out_dir.join(format!("part_{:02}.{ext}", p.index()));
        io::write_table(&path, &PointTable::from(p)).map_err(|e| Failure::at(&path, e))?;
        println!("{}", path.display());
    }
    let path = args.out_dir.join("truth.csv");
    File::create(&path)
        .map_err(Error::from)
        .and_then(|f| io::write_truth_csv(BufWriter::new(f), &truth))
        .map_err(|e| Failure::at(&path, e))?;
    println!("{}", path.display());
    Ok(0)
}

pub fn validate(args: &ValidateArgs) -> Result<u8, Failure> {
    let table = io::read_table(&args.merged).map_err(|e| Failure::at(&args.merged, e))?;
    let truth = File::open(&args.truth)
        .map_err(Error::from)
        .and_then(io::read_truth_csv)
        .map_err(|e| Failure::at(&args.truth, e))?;
    let n = table.len();
    let merged = MergedDataset {
        global_ids: table.points.iter().map(GlobalPointId::of).collect(),
        points: table.points,
        values: table.values,
        overlap_degree: vec![0; n],
    };
    let s = synth::score(&merged, &truth).map_err(fail)?;
    let ratio = if s.truth_seam_max_jump > 0.0 {
        s.seam_max_jump / s.truth_seam_max_jump
    } else if s.seam_max_jump > 0.0 {
        f64::INFINITY
    } else {
        1.0
    };
    println!("points={n}");
    println!("gauge_constant={:e}", s.gauge_constant);
    println!("rmse={:e}", s.rmse);
    println!("max_error={:e}", s.max_error);
    println!("seam_max_jump={:e}", s.seam_max_jump);
    println!("truth_seam_max_jump={:e}", s.truth_seam_max_jump);
    println!("seam_ratio={ratio}");
    println!("seam_edges={}", s.seam_edges);

    let checks = [
        ("rmse", s.rmse, args.max_rmse),
        ("max_error", s.max_error, args.max_error),
        ("seam_ratio", ratio, args.max_seam_ratio),
    ];
    let mut exceeded = false;
    for (name, value, limit) in checks {
        if let Some(limit) = limit {
            if value.is_nan() || value > limit {
                eprintln!("seamweld: {name} {value:e} exceeds {limit:e}");
                exceeded = true;
            }
        }
    }
    Ok(if exceeded { EXIT_THRESHOLD } else { 0 })
}
