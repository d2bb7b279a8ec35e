//! Dataset generation: flows, rendering, and the run directory.
//!
//! Each sequence is a pure function of the master seed and its index,
//! produced on its own RNG, so a run is reproducible byte for byte and
//! the worker count only changes wall-clock time. Sequence directories
//! are written independently; a sequence that fails mid-write removes
//! its own directory, and the manifest is written last so a readable
//! manifest implies a complete run.
//!
//! Per-sequence draw order (one ChaCha stream per sequence): background
//! image index, then the flow endpoint draws in their documented order.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use handflow_core::handmodel::{HandModel, HandPose, HandShape, ModelError};
use handflow_core::posedb::{DbError, PoseDb, PoseIndex, PoseRecord};
use handflow_core::poseflow::{
    generate_flow_between, sample_endpoints, FlowConfig, FlowError, PoseFlowSeq,
};
use handflow_core::render::{
    color_template, composite_over, mask_image, render_hand, RenderError, COLOR_TEMPLATE_COUNT,
};

use crate::backgrounds::{Background, BackgroundError, BackgroundPool};
use crate::formats::{
    frame_file_name, mask_file_name, sequence_dir_name, write_annotation, write_manifest,
    FormatError, Manifest, ManifestEntry, FORMAT_VERSION,
};
use crate::seeds::{sequence_seed, SYNTH_DB_SLOT};
use crate::{Categorized, ErrorCategory};

/// Sequence counts behind the named presets.
pub const PRESET_TRAIN_SEQUENCES: usize = 40_000;
pub const PRESET_TEST_SEQUENCES: usize = 1_000;

/// Maximum swing angle when synthesizing database poses, radians.
const SYNTH_DB_MAX_ANGLE: f64 = 1.4;

/// Records per tour anchor when synthesizing database poses. Snapped
/// interpolation only produces motion when the database is dense along
/// pose paths, so synthetic records trace a closed tour rather than
/// scattering isolated poses.
const SYNTH_DB_RECORDS_PER_ANCHOR: usize = 25;

/// Where the pose database comes from.
#[derive(Debug, Clone)]
pub enum DbSource {
    File(PathBuf),
    /// Swing-sample this many records from the built-in model, seeded
    /// from the master seed's reserved slot.
    Synthetic { count: usize },
}

#[derive(Debug, Clone)]
pub struct GenOptions {
    pub out_dir: PathBuf,
    pub sequence_count: usize,
    pub master_seed: u64,
    pub config: FlowConfig,
    pub db: DbSource,
    /// Directory of background images; `None` uses the procedural pool.
    pub backgrounds: Option<PathBuf>,
    /// Worker threads; 0 picks the rayon default.
    pub workers: usize,
}

#[derive(Debug, Clone)]
pub struct GenSummary {
    pub sequences: usize,
    pub frames_per_sequence: usize,
    pub db_fingerprint: String,
    pub elapsed: Duration,
}

#[derive(Debug, Error)]
pub enum GenError {
    #[error("sequence count must be at least 1")]
    NoSequences,
    #[error("synthetic database needs at least 2 records, asked for {count}")]
    TinySynthDb { count: usize },
    #[error("output directory {path} is not empty")]
    OutputNotEmpty { path: String },
    #[error("creating {path}: {source}")]
    CreateDir {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("writing image {path}: {source}")]
    ImageWrite {
        path: String,
        #[source]
        source: image::ImageError,
    },
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Db(#[from] DbError),
    #[error(transparent)]
    Background(#[from] BackgroundError),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Render(#[from] RenderError),
}

impl Categorized for GenError {
    fn category(&self) -> ErrorCategory {
        match self {
            GenError::NoSequences | GenError::TinySynthDb { .. } => ErrorCategory::Config,
            GenError::OutputNotEmpty { .. } => ErrorCategory::Config,
            GenError::CreateDir { .. } | GenError::ImageWrite { .. } => ErrorCategory::Io,
            GenError::Flow(FlowError::BadEndpoint { .. }) => ErrorCategory::Internal,
            GenError::Flow(FlowError::BackgroundTooSmall { .. }) => ErrorCategory::Data,
            GenError::Flow(FlowError::Model(_)) => ErrorCategory::Data,
            GenError::Flow(_) => ErrorCategory::Config,
            GenError::Db(DbError::Io { .. }) => ErrorCategory::Io,
            GenError::Db(_) => ErrorCategory::Data,
            GenError::Background(e) => e.category(),
            GenError::Format(e) => e.category(),
            GenError::Model(_) => ErrorCategory::Data,
            GenError::Render(_) => ErrorCategory::Internal,
        }
    }
}

/// Synthesizes a pose database from the hand model. Records sample a
/// closed piecewise-linear tour through random swing poses, so
/// consecutive ids are small pose steps and snapped interpolation can
/// walk the database instead of freezing on an isolated record. Mixes
/// of zero-twist poses keep zero twist, so every record remains exactly
/// fittable. Record ids are the sample indices.
pub fn synthesize_db(model: &HandModel, count: usize, seed: u64) -> Result<PoseDb, GenError> {
    if count < 2 {
        return Err(GenError::TinySynthDb { count });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let anchor_count = count.div_ceil(SYNTH_DB_RECORDS_PER_ANCHOR).clamp(2, 12);
    let anchors: Vec<HandPose> = (0..anchor_count)
        .map(|_| model.sample_swing_pose(&mut rng, SYNTH_DB_MAX_ANGLE))
        .collect();

    let mut records = Vec::with_capacity(count);
    for i in 0..count {
        let u = i as f64 * anchor_count as f64 / count as f64;
        let seg = (u.floor() as usize) % anchor_count;
        let t = u - u.floor();
        let from = &anchors[seg];
        let to = &anchors[(seg + 1) % anchor_count];
        let mut theta = HandPose::default();
        for ((v, a), b) in theta.0.iter_mut().zip(from.0.iter()).zip(to.0.iter()) {
            *v = a + t * (b - a);
        }
        let joints = model.joints_fk(&theta, &HandShape::default())?;
        records.push(PoseRecord {
            id: i as u64,
            joints,
        });
    }
    Ok(PoseDb::from_records(records)?)
}

struct GenContext<'a> {
    model: &'a HandModel,
    db: &'a PoseDb,
    index: &'a PoseIndex,
    pool: &'a BackgroundPool,
    config: &'a FlowConfig,
    master_seed: u64,
    out_dir: &'a Path,
}

pub fn run(opts: &GenOptions) -> Result<GenSummary, GenError> {
    let start = Instant::now();
    opts.config.validate()?;
    if opts.sequence_count == 0 {
        return Err(GenError::NoSequences);
    }

    let model = HandModel::builtin();
    let db = match &opts.db {
        DbSource::File(path) => PoseDb::load(path)?,
        DbSource::Synthetic { count } => synthesize_db(
            model,
            *count,
            sequence_seed(opts.master_seed, SYNTH_DB_SLOT),
        )?,
    };
    let index = db.build_index();

    let pool = match &opts.backgrounds {
        Some(dir) => BackgroundPool::from_dir(dir, opts.config.width, opts.config.height)?,
        None => BackgroundPool::procedural(
            8,
            opts.config.width + opts.config.width / 2,
            opts.config.height + opts.config.height / 2,
        ),
    };

    prepare_out_dir(&opts.out_dir)?;

    let ctx = GenContext {
        model,
        db: &db,
        index: &index,
        pool: &pool,
        config: &opts.config,
        master_seed: opts.master_seed,
        out_dir: &opts.out_dir,
    };

    let entries: Vec<ManifestEntry> = if opts.workers == 1 {
        (0..opts.sequence_count)
            .map(|i| generate_sequence(&ctx, i))
            .collect::<Result<_, _>>()?
    } else {
        let thread_pool = rayon::ThreadPoolBuilder::new()
            .num_threads(opts.workers)
            .build()
            .expect("worker pool");
        thread_pool.install(|| {
            (0..opts.sequence_count)
                .into_par_iter()
                .map(|i| generate_sequence(&ctx, i))
                .collect::<Result<_, _>>()
        })?
    };

    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        master_seed: opts.master_seed,
        config: opts.config.clone(),
        db_fingerprint: db.fingerprint().to_string(),
        sequences: entries,
    };
    write_manifest(&opts.out_dir, &manifest)?;

    Ok(GenSummary {
        sequences: opts.sequence_count,
        frames_per_sequence: opts.config.n_frames,
        db_fingerprint: db.fingerprint().to_string(),
        elapsed: start.elapsed(),
    })
}

/// The run directory must start empty (or absent) so a finished run is
/// exactly the files this process wrote.
fn prepare_out_dir(dir: &Path) -> Result<(), GenError> {
    if dir.exists() {
        let mut entries = fs::read_dir(dir).map_err(|source| GenError::CreateDir {
            path: dir.display().to_string(),
            source,
        })?;
        if entries.next().is_some() {
            return Err(GenError::OutputNotEmpty {
                path: dir.display().to_string(),
            });
        }
    } else {
        fs::create_dir_all(dir).map_err(|source| GenError::CreateDir {
            path: dir.display().to_string(),
            source,
        })?;
    }
    Ok(())
}

fn generate_sequence(ctx: &GenContext, index: usize) -> Result<ManifestEntry, GenError> {
    let seed = sequence_seed(ctx.master_seed, index as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bg = &ctx.pool.entries[rng.gen_range(0..ctx.pool.len())];
    let endpoints = sample_endpoints(
        ctx.db,
        ctx.config,
        COLOR_TEMPLATE_COUNT,
        bg.size(),
        ctx.model.hand_radius_mm(),
        &mut rng,
    )?;
    let flow = generate_flow_between(
        ctx.model,
        ctx.db,
        ctx.index,
        ctx.config,
        &endpoints,
        bg.size(),
        &mut rng,
    )?;

    let dir_name = sequence_dir_name(index);
    let seq_dir = ctx.out_dir.join(&dir_name);
    fs::create_dir(&seq_dir).map_err(|source| GenError::CreateDir {
        path: seq_dir.display().to_string(),
        source,
    })?;
    // A sequence directory either completes or disappears; partial
    // output would poison rerun comparisons and audits.
    if let Err(err) = write_sequence(ctx, &seq_dir, &flow, bg) {
        let _ = fs::remove_dir_all(&seq_dir);
        return Err(err);
    }

    Ok(ManifestEntry {
        dir: dir_name,
        seed,
        color_template_id: flow.color_template_id,
        beta: flow.frames[0].beta,
        background: bg.name.clone(),
    })
}

fn write_sequence(
    ctx: &GenContext,
    seq_dir: &Path,
    flow: &PoseFlowSeq,
    bg: &Background,
) -> Result<(), GenError> {
    let template = color_template(flow.color_template_id)?;
    for (k, frame) in flow.frames.iter().enumerate() {
        let raster = render_hand(
            ctx.model,
            &frame.theta,
            &frame.beta,
            &frame.cam,
            template,
            ctx.config.width,
            ctx.config.height,
        )?;
        let composited = composite_over(&raster, &bg.image, frame.bg_offset)?;
        let frame_path = seq_dir.join(frame_file_name(k));
        composited
            .save(&frame_path)
            .map_err(|source| GenError::ImageWrite {
                path: frame_path.display().to_string(),
                source,
            })?;
        let mask_path = seq_dir.join(mask_file_name(k));
        mask_image(&raster)
            .save(&mask_path)
            .map_err(|source| GenError::ImageWrite {
                path: mask_path.display().to_string(),
                source,
            })?;
    }
    write_annotation(seq_dir, flow)?;
    Ok(())
}
