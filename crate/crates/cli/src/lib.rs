//! The `openmetrics` command line. [`run`] is the whole program; `main`
//! only forwards the process arguments and exit status.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use openmetrics::dataio::manifest::{export_instance, export_panoptic, export_semantic, ExportFile};
use openmetrics::dataio::SimilarityRef;
use openmetrics::instance::{evaluate_instance, instance_report, InstanceParams, Interpolation, IouKernel};
use openmetrics::panoptic::{evaluate_panoptic, panoptic_report};
use openmetrics::semantic::{evaluate_semantic, semantic_report};
use openmetrics::synth::{synth_instance, synth_panoptic, synth_semantic, PerturbConfig, SwapTarget};
use openmetrics::{
    build_matrix, load_manifest, Backend, CategoryId, Dataset, EmbeddingTable, Error, LabelSpec,
    Manifest, Method, MetricReport, Mode, RleMask, SegbRaster, SensePolicy, SimilarityMatrix, Task,
    Taxonomy,
};
use serde::{Deserialize, Serialize};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_IO: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "openmetrics", version, about = "Open-vocabulary segmentation metrics")]
struct Cli {
    /// Worker threads for the per-image and per-pair fan-out (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build a label similarity matrix from WordNet or word embeddings.
    BuildSim(BuildSimArgs),
    /// Print mean and standard deviation of a similarity matrix.
    SimStats(SimStatsArgs),
    /// Evaluate semantic segmentation (mIoU).
    EvalSemantic(EvalArgs),
    /// Evaluate instance segmentation (mask AP).
    EvalInstance(ApArgs),
    /// Evaluate object detection (box AP).
    EvalDetection(ApArgs),
    /// Evaluate panoptic segmentation (PQ/SQ/RQ).
    EvalPanoptic(PanopticArgs),
    /// Write a prediction dataset by perturbing the ground truth.
    Synth(SynthArgs),
    /// Raster and RLE conversions.
    #[command(subcommand)]
    Convert(ConvertCommand),
}

#[derive(Args, Debug)]
struct BuildSimArgs {
    /// Label file: a JSON array of {id, name, wnid?, alias?}, a manifest
    /// (its categories are used), or a text file with one wnid per line.
    #[arg(long)]
    labels: PathBuf,
    /// WordNet dict directory (index.noun, data.noun).
    #[arg(long, env = "OPENMETRICS_WORDNET")]
    wordnet: Option<PathBuf>,
    /// Embedding text file, one `word v1 v2 ...` per line.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Seed for vectors synthesised for out-of-vocabulary words.
    #[arg(long, default_value_t = 0)]
    embedding_seed: u64,
    #[arg(long, value_parser = parse_from_str::<Method>)]
    method: Method,
    #[arg(long, default_value = "max", value_parser = parse_from_str::<SensePolicy>)]
    sense: SensePolicy,
    #[arg(long)]
    out: PathBuf,
    /// Also write the matrix as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Leave the diagonal out of the printed statistics.
    #[arg(long)]
    off_diagonal: bool,
}

#[derive(Args, Debug)]
struct SimStatsArgs {
    #[arg(long)]
    sim: PathBuf,
    #[arg(long)]
    off_diagonal: bool,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Similarity matrix file, or `identity`.
    #[arg(long)]
    sim: Option<String>,
    #[arg(long, default_value = "vanilla", value_parser = parse_from_str::<Mode>)]
    mode: Mode,
    /// Report path; the report goes to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print a per-class table to stdout.
    #[arg(long)]
    table: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum InterpArg {
    Coco101,
    AllPoints,
}

#[derive(Args, Debug)]
struct ApArgs {
    #[command(flatten)]
    eval: EvalArgs,
    #[arg(long, value_enum, default_value = "coco101")]
    interp: InterpArg,
    /// Pool all classes into one precision/recall curve.
    #[arg(long)]
    single_curve: bool,
    #[arg(long, default_value_t = 100)]
    max_dets: usize,
}

#[derive(Args, Debug)]
struct PanopticArgs {
    #[command(flatten)]
    eval: EvalArgs,
    /// Comma-separated ids of the known classes, for known/unknown splits.
    #[arg(long, value_delimiter = ',')]
    known: Option<Vec<CategoryId>>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SwapArg {
    Nearest,
    Uniform,
    Fixed,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Ground-truth manifest; any predictions in it are ignored.
    #[arg(long)]
    manifest: PathBuf,
    /// Output directory; receives manifest.json and raster files.
    #[arg(long)]
    out_dir: PathBuf,
    /// Similarity matrix file or `identity`, used by `--swap-target nearest`.
    #[arg(long)]
    sim: Option<String>,
    #[arg(long, default_value_t = 0.0)]
    swap_prob: f64,
    #[arg(long, value_enum, default_value = "nearest")]
    swap_target: SwapArg,
    /// `from:to` category id pairs for `--swap-target fixed`.
    #[arg(long, value_delimiter = ',', value_parser = parse_pair)]
    swap_map: Vec<(CategoryId, CategoryId)>,
    #[arg(long, default_value_t = 0)]
    erode: u32,
    #[arg(long, default_value_t = 0.0)]
    drop_prob: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand, Debug)]
enum ConvertCommand {
    /// SEGB raster to one COCO-compressed RLE mask per value.
    SegbToRle {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// RLE mask list back to a SEGB raster; later masks win on overlap.
    RleToSegb {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Force 32-bit ids.
        #[arg(long)]
        wide: bool,
    },
}

fn parse_from_str<T: std::str::FromStr<Err = String>>(s: &str) -> Result<T, String> {
    s.parse()
}

fn parse_pair(s: &str) -> Result<(CategoryId, CategoryId), String> {
    let (a, b) = s.split_once(':').ok_or_else(|| format!("expected from:to, got {s:?}"))?;
    let num = |t: &str| t.trim().parse::<CategoryId>().map_err(|e| format!("{t:?}: {e}"));
    Ok((num(a)?, num(b)?))
}

/// Failure with its exit status.
#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn invalid(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_INVALID,
            message: message.into(),
        }
    }

    fn io(path: &Path, e: io::Error) -> Self {
        Failure {
            code: EXIT_IO,
            message: format!("{}: {e}", path.display()),
        }
    }
}

impl<E: Into<Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        let e: Error = e.into();
        Failure {
            code: if e.is_io() { EXIT_IO } else { EXIT_INVALID },
            message: e.to_string(),
        }
    }
}

type CmdResult = Result<(), Failure>;

/// Runs the program on `argv` (including the program name) and returns the
/// exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start thread pool: {e}");
            return EXIT_INVALID;
        }
    };
    match pool.install(|| dispatch(cli.command)) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

fn dispatch(cmd: Command) -> CmdResult {
    match cmd {
        Command::BuildSim(a) => build_sim(a),
        Command::SimStats(a) => sim_stats(a),
        Command::EvalSemantic(a) => eval_semantic(a),
        Command::EvalInstance(a) => eval_ap(a, IouKernel::Mask),
        Command::EvalDetection(a) => eval_ap(a, IouKernel::Box),
        Command::EvalPanoptic(a) => eval_panoptic(a),
        Command::Synth(a) => synth(a),
        Command::Convert(c) => convert(c),
    }
}

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::io(path, e))
}

/// Writes through a temp file in the target directory, then renames, so a
/// reader never sees a partial file.
fn write_atomic(path: &Path, bytes: &[u8]) -> CmdResult {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(|e| Failure::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Failure::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Failure::io(path, e))?;
    tmp.persist(path).map_err(|e| Failure::io(path, e.error))?;
    Ok(())
}

fn emit(out: Option<&Path>, text: &str) -> CmdResult {
    match out {
        Some(p) => write_atomic(p, text.as_bytes()),
        None => {
            let mut so = io::stdout().lock();
            so.write_all(text.as_bytes())
                .and_then(|_| so.flush())
                .map_err(|e| Failure::io(Path::new("<stdout>"), e))
        }
    }
}

fn load_labels(path: &Path) -> Result<Vec<LabelSpec>, Failure> {
    let text = read_text(path)?;
    let trimmed = text.trim_start();
    if trimmed.starts_with('[') {
        return serde_json::from_str(&text).map_err(|e| Failure::invalid(format!("{}: {e}", path.display())));
    }
    if trimmed.starts_with('{') {
        let m = Manifest::from_json(&text).map_err(|e| Failure::invalid(format!("{}: {e}", path.display())))?;
        return Ok(m.categories.iter().map(|c| c.label_spec()).collect());
    }
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .enumerate()
        .map(|(i, wnid)| LabelSpec::named(i as CategoryId, wnid).with_wnid(wnid))
        .collect())
}

fn print_stats(s: &SimilarityMatrix, off_diagonal: bool) {
    let st = if off_diagonal { s.stats_off_diagonal() } else { s.stats() };
    println!("mean {:.5} std {:.5}", st.mean, st.std);
}

fn build_sim(a: BuildSimArgs) -> CmdResult {
    let labels = load_labels(&a.labels)?;
    let matrix = match a.method {
        Method::Embedding => {
            let path = a
                .embeddings
                .as_deref()
                .ok_or_else(|| Failure::invalid("--method embedding needs --embeddings"))?;
            let file = fs::File::open(path).map_err(|e| Failure::io(path, e))?;
            let table = EmbeddingTable::from_reader(BufReader::new(file), a.embedding_seed)?;
            build_matrix(&labels, Backend::Embedding(&table), a.method, a.sense)?
        }
        Method::Identity => SimilarityMatrix::identity(labels)?,
        Method::Path | Method::WuPalmer => {
            let dir = a
                .wordnet
                .as_deref()
                .ok_or_else(|| Failure::invalid("WordNet methods need --wordnet or OPENMETRICS_WORDNET"))?;
            let t = Taxonomy::from_dir(dir)?;
            for w in t.warnings() {
                log::warn!("{w}");
            }
            build_matrix(&labels, Backend::WordNet(&t), a.method, a.sense)?
        }
    };
    write_atomic(&a.out, matrix.to_json().as_bytes())?;
    if let Some(csv) = &a.csv {
        write_atomic(csv, matrix.to_csv().as_bytes())?;
    }
    print_stats(&matrix, a.off_diagonal);
    Ok(())
}

fn sim_stats(a: SimStatsArgs) -> CmdResult {
    let s = SimilarityMatrix::from_json(&read_text(&a.sim)?)?;
    print_stats(&s, a.off_diagonal);
    Ok(())
}

fn load_sim(arg: Option<&str>, ds: &Dataset) -> Result<Option<SimilarityMatrix>, Failure> {
    let Some(arg) = arg else { return Ok(None) };
    let ids: Vec<CategoryId> = ds.categories().iter().map(|c| c.id).collect();
    if arg == "identity" {
        let labels = ds.categories().iter().map(|c| c.label_spec()).collect();
        return Ok(Some(SimilarityMatrix::identity(labels)?));
    }
    let path = Path::new(arg);
    let s = SimilarityMatrix::from_json(&read_text(path)?)
        .map_err(|e| Failure::invalid(format!("{}: {e}", path.display())))?;
    Ok(Some(s.aligned_to(&ids)?))
}

struct Loaded {
    ds: Dataset,
    sim: Option<SimilarityMatrix>,
}

fn load_eval(a: &EvalArgs, task: Task) -> Result<Loaded, Failure> {
    let ds = load_manifest(&a.manifest)?;
    if ds.task() != task {
        return Err(Failure::invalid(format!(
            "{}: manifest task is {:?}, expected {:?}",
            a.manifest.display(),
            ds.task(),
            task
        )));
    }
    let sim = load_sim(a.sim.as_deref(), &ds)?;
    if a.mode == Mode::Open && sim.is_none() {
        return Err(Failure::invalid("--mode open needs --sim (a matrix file or `identity`)"));
    }
    Ok(Loaded { ds, sim })
}

fn sim_ref(mode: Mode, sim: Option<&SimilarityMatrix>) -> Option<SimilarityRef> {
    match (mode, sim) {
        (Mode::Open, Some(s)) => Some(SimilarityRef {
            method: s.method(),
            digest: s.digest(),
        }),
        _ => None,
    }
}

fn finish(mut report: MetricReport, a: &EvalArgs, manifest_digest: String) -> CmdResult {
    report.provenance.inputs.insert("manifest".into(), manifest_digest);
    if let Some(s) = report.similarity().cloned() {
        report.provenance.inputs.insert("similarity".into(), s.digest);
    }
    emit(a.out.as_deref(), &report.to_json())?;
    if a.table {
        print!("{}", report.render_table());
    }
    Ok(())
}

fn eval_semantic(a: EvalArgs) -> CmdResult {
    if a.mode == Mode::VanillaAgnostic {
        return Err(Failure::invalid("mIoU has no vanilla_agnostic mode"));
    }
    let l = load_eval(&a, Task::Semantic)?;
    let (set, digest) = l.ds.semantic()?;
    let s = if a.mode == Mode::Open { l.sim.as_ref() } else { None };
    let result = evaluate_semantic(&set, s)?;
    let report = semantic_report(&set.categories, &result, a.mode, sim_ref(a.mode, s))?;
    finish(report, &a, digest)
}

fn eval_ap(a: ApArgs, kernel: IouKernel) -> CmdResult {
    let l = load_eval(&a.eval, Task::Instance)?;
    let (set, digest) = l.ds.instance()?;
    let mode = a.eval.mode;
    let params = InstanceParams {
        mode,
        kernel,
        interpolation: match a.interp {
            InterpArg::Coco101 => Interpolation::Coco101,
            InterpArg::AllPoints => Interpolation::AllPoints,
        },
        single_curve: a.single_curve,
        max_dets: a.max_dets,
    };
    let s = if mode == Mode::Open { l.sim.as_ref() } else { None };
    let result = evaluate_instance(&set, s, &params)?;
    let task = match kernel {
        IouKernel::Mask => "instance",
        IouKernel::Box => "detection",
    };
    let report = instance_report(task, &set.categories, &result, mode, sim_ref(mode, s))?;
    finish(report, &a.eval, digest)
}

fn eval_panoptic(a: PanopticArgs) -> CmdResult {
    let l = load_eval(&a.eval, Task::Panoptic)?;
    let (set, digest) = l.ds.panoptic()?;
    let mode = a.eval.mode;
    let s = if mode == Mode::Open { l.sim.as_ref() } else { None };
    let (_, result) = evaluate_panoptic(&set, mode, s)?;
    let report = panoptic_report(&set.categories, &result, mode, sim_ref(mode, s), a.known.as_deref())?;
    finish(report, &a.eval, digest)
}

fn synth(a: SynthArgs) -> CmdResult {
    let ds = load_manifest(&a.manifest)?;
    let sim = load_sim(a.sim.as_deref(), &ds)?;
    let swap_target = match a.swap_target {
        SwapArg::Nearest => SwapTarget::Nearest,
        SwapArg::Uniform => SwapTarget::Uniform,
        SwapArg::Fixed => SwapTarget::Fixed(a.swap_map.iter().copied().collect::<BTreeMap<_, _>>()),
    };
    let cfg = PerturbConfig {
        swap_prob: a.swap_prob,
        swap_target,
        erode_px: a.erode,
        drop_prob: a.drop_prob,
        seed: a.seed,
    };
    let s = sim.as_ref();
    let (manifest, files): (Manifest, Vec<ExportFile>) = match ds.task() {
        Task::Semantic => export_semantic(&synth_semantic(&ds.semantic()?.0, &cfg, s)?),
        Task::Instance => (export_instance(&synth_instance(&ds.instance()?.0, &cfg, s)?), Vec::new()),
        Task::Panoptic => export_panoptic(&synth_panoptic(&ds.panoptic()?.0, &cfg, s)?),
    };
    for f in &files {
        write_atomic(&a.out_dir.join(&f.name), &f.bytes)?;
    }
    write_atomic(&a.out_dir.join("manifest.json"), manifest.to_json().as_bytes())
}

/// On-disk form used by `convert`.
#[derive(Serialize, Deserialize)]
struct RleFile {
    width: u32,
    height: u32,
    masks: Vec<RleEntry>,
}

#[derive(Serialize, Deserialize)]
struct RleEntry {
    value: u32,
    size: [u32; 2],
    counts: String,
    area: u64,
}

fn convert(c: ConvertCommand) -> CmdResult {
    match c {
        ConvertCommand::SegbToRle { input, out } => {
            let r = SegbRaster::from_file(&input)?;
            let (w, h) = (r.width(), r.height());
            let mut values: Vec<u32> = r.ids().iter().copied().filter(|&v| v != r.sentinel()).collect();
            values.sort_unstable();
            values.dedup();
            let mut masks = Vec::with_capacity(values.len());
            for v in values {
                let bits: Vec<bool> = r.ids().iter().map(|&x| x == v).collect();
                let m = RleMask::encode_row_major(&bits, h, w)?;
                masks.push(RleEntry {
                    value: v,
                    size: [h, w],
                    counts: openmetrics::dataio::coco_counts_encode(&m),
                    area: m.area(),
                });
            }
            let doc = RleFile {
                width: w,
                height: h,
                masks,
            };
            let mut text = serde_json::to_string_pretty(&doc).expect("rle file serialises");
            text.push('\n');
            write_atomic(&out, text.as_bytes())
        }
        ConvertCommand::RleToSegb { input, out, wide } => {
            let text = read_text(&input)?;
            let doc: RleFile =
                serde_json::from_str(&text).map_err(|e| Failure::invalid(format!("{}: {e}", input.display())))?;
            let wide = wide || doc.masks.iter().any(|m| m.value >= u16::MAX as u32);
            let sentinel = if wide { u32::MAX } else { u16::MAX as u32 };
            let mut ids = vec![sentinel; doc.width as usize * doc.height as usize];
            for m in &doc.masks {
                if m.size != [doc.height, doc.width] {
                    return Err(Failure::invalid(format!(
                        "{}: mask {} has size {:?}, raster is {}x{}",
                        input.display(),
                        m.value,
                        m.size,
                        doc.height,
                        doc.width
                    )));
                }
                if m.value == sentinel {
                    return Err(Failure::invalid(format!("{}: value {} is the void sentinel", input.display(), m.value)));
                }
                let mask = openmetrics::dataio::coco_counts_decode(&m.counts, doc.height, doc.width)?;
                for (px, on) in ids.iter_mut().zip(mask.decode_row_major()) {
                    if on {
                        *px = m.value;
                    }
                }
            }
            let raster = SegbRaster::new(doc.width, doc.height, wide, ids)?;
            write_atomic(&out, &raster.write())
        }
    }
}
