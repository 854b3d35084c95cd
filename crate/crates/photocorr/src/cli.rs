//! Command-line front end.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use photocorr_core::classifier::{classify, ObjectEvidence, SingleRefs};
use photocorr_core::estimators::{brightness_group, DEFAULT_GROUP_BOUNDARIES};
use photocorr_core::sim::Simulation;

use crate::analysis::{self, AnalyzeOptions, RegionSource, DEFAULT_GATES};
use crate::config::RunConfig;
use crate::error::{Error, ErrorClass, Result};
use crate::parallel;
use crate::store::read_stack_file;
use crate::table::{export_table, Cell, Table};

#[derive(Debug, Parser)]
#[command(
    name = "photocorr",
    version,
    about = "Photon-correlation imaging toolkit"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a scene and write a frame stack.
    Simulate(SimulateArgs),
    /// Per-object brightness, bunching parameter and emitter count.
    Analyze(AnalyzeArgs),
    /// Bunching parameter of one object against the readout threshold.
    SweepThreshold(SweepThresholdArgs),
    /// Simulate and analyze a scene at several gate widths.
    SweepGate(SweepGateArgs),
    /// Fit the pair-correlation decay to a simulated coincidence record.
    FitDecay(FitDecayArgs),
    /// Nonclassicality tests on a photon-number distribution.
    Nonclassical(NonclassicalArgs),
    /// Emitter counts from a table of brightness and bunching values.
    Classify(ClassifyArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_name = "PATH")]
    pub config: PathBuf,
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub frames: Option<u64>,
}

#[derive(Debug, Args)]
pub struct StackArgs {
    #[arg(long, value_name = "PATH")]
    pub stack: PathBuf,
    /// Optional analysis settings.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Region file, or `auto` to detect objects.
    #[arg(long, value_name = "PATH|auto")]
    pub regions: Option<String>,
    #[arg(long, value_name = "INT")]
    pub baseline_lag: Option<usize>,
    #[arg(long, value_name = "LIST", value_delimiter = ',')]
    pub thresholds: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub input: StackArgs,
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepThresholdArgs {
    #[command(flatten)]
    pub input: StackArgs,
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
    /// Object id to scan; the first object by default.
    #[arg(long)]
    pub object: Option<u32>,
}

#[derive(Debug, Args)]
pub struct SweepGateArgs {
    #[arg(long, value_name = "PATH")]
    pub config: PathBuf,
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub frames: Option<u64>,
    /// Gate widths, ns.
    #[arg(long, value_name = "LIST", value_delimiter = ',')]
    pub gates: Option<Vec<f64>>,
    #[arg(long, value_name = "INT")]
    pub baseline_lag: Option<usize>,
    #[arg(long, value_name = "LIST", value_delimiter = ',')]
    pub thresholds: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct FitDecayArgs {
    #[arg(long, value_name = "PATH")]
    pub config: PathBuf,
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct NonclassicalArgs {
    /// File with a `[distribution]` section, or analysis settings when
    /// `--stack` is given.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Take the distribution from the per-frame counts of one object.
    #[arg(long, value_name = "PATH")]
    pub stack: Option<PathBuf>,
    #[arg(long, value_name = "PATH|auto")]
    pub regions: Option<String>,
    #[arg(long, value_name = "LIST", value_delimiter = ',')]
    pub thresholds: Option<Vec<f64>>,
    #[arg(long)]
    pub object: Option<u32>,
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    /// CSV with columns id, B, g2 (or g2_corr), g2_err (or stderr) and
    /// optionally B_err.
    #[arg(long, value_name = "PATH")]
    pub input: PathBuf,
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
    /// Single-emitter brightness; calibrated from the dim objects if absent.
    #[arg(long)]
    pub b1: Option<f64>,
    /// Single-emitter bunching parameter; calibrated if absent.
    #[arg(long)]
    pub g2_1: Option<f64>,
}

/// Process exit code of an error class.
pub fn exit_code(class: ErrorClass) -> i32 {
    match class {
        ErrorClass::Usage => 2,
        ErrorClass::Validation => 3,
        ErrorClass::Capability => 4,
        ErrorClass::Runtime => 5,
    }
}

/// Runs one command; messages for the user go to `log`.
pub fn run(cli: Cli, log: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => simulate(a, log),
        Command::Analyze(a) => analyze(a, log),
        Command::SweepThreshold(a) => sweep_threshold(a, log),
        Command::SweepGate(a) => sweep_gate(a, log),
        Command::FitDecay(a) => fit_decay(a, log),
        Command::Nonclassical(a) => nonclassical(a, log),
        Command::Classify(a) => classify_table(a, log),
    }
}

fn load_optional(path: &Option<PathBuf>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::parse("", Path::new("<defaults>"))?),
    }
}

fn seed_of(flag: Option<u64>, cfg: &RunConfig) -> Result<u64> {
    flag.or(cfg.run.seed)
        .ok_or_else(|| Error::Usage("a seed is required: pass --seed or set run.seed".into()))
}

fn frames_of(flag: Option<u64>, cfg: &RunConfig) -> Result<u64> {
    let frames = flag.or(cfg.run.frames).ok_or_else(|| {
        Error::Usage("a frame count is required: pass --frames or set run.frames".into())
    })?;
    if frames == 0 {
        return Err(Error::Usage("--frames must be at least 1".into()));
    }
    Ok(frames)
}

fn lag_of(flag: Option<usize>, cfg: &RunConfig) -> Result<usize> {
    let lag = flag.or(cfg.analysis.baseline_lag).unwrap_or(1);
    if lag == 0 {
        return Err(Error::Usage("--baseline-lag must be at least 1".into()));
    }
    Ok(lag)
}

fn region_source(flag: &Option<String>, cfg: &RunConfig) -> RegionSource {
    match (flag, &cfg.analysis.regions) {
        (Some(s), _) if s == "auto" => RegionSource::Auto,
        (Some(s), _) => RegionSource::File(PathBuf::from(s)),
        (None, Some(s)) if s == "auto" => RegionSource::Auto,
        (None, Some(s)) => RegionSource::File(cfg.relative(s)),
        (None, None) => RegionSource::Auto,
    }
}

fn thresholds_of(flag: &Option<Vec<f64>>, cfg: &RunConfig) -> Result<Vec<f64>> {
    let t = flag
        .clone()
        .or_else(|| cfg.analysis.thresholds.clone())
        .unwrap_or_default();
    if t.iter().any(|v| !v.is_finite()) {
        return Err(Error::Usage("thresholds must be finite numbers".into()));
    }
    Ok(t)
}

fn boundaries_of(cfg: &RunConfig) -> Vec<f64> {
    cfg.analysis
        .group_boundaries
        .clone()
        .unwrap_or_else(|| DEFAULT_GROUP_BOUNDARIES.to_vec())
}

/// Writes through a temporary file so that a failed run leaves nothing
/// behind at `path`.
fn write_atomically<F>(path: &Path, f: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> Result<()>,
{
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = PathBuf::from(tmp);
    let file = File::create(&tmp).map_err(|e| Error::file(&tmp, e))?;
    let mut out = BufWriter::new(file);
    let res = f(&mut out).and_then(|()| out.flush().map_err(|e| Error::file(&tmp, e)));
    drop(out);
    match res {
        Ok(()) => fs::rename(&tmp, path).map_err(|e| Error::file(path, e)),
        Err(e) => {
            let _ = fs::remove_file(&tmp);
            Err(e)
        }
    }
}

fn simulate(a: SimulateArgs, log: &mut dyn Write) -> Result<()> {
    let cfg = RunConfig::load(&a.config)?;
    let seed = seed_of(a.seed, &cfg)?;
    let frames = frames_of(a.frames, &cfg)?;
    let scene = cfg.scene_spec()?;
    let sim = Simulation::new(&scene, &cfg.camera, &cfg.drift, frames, seed)?;
    let mut summary = None;
    write_atomically(&a.out, |out| {
        summary = Some(parallel::simulate_to(&sim, out)?);
        Ok(())
    })?;
    let s = summary.expect("set on success");
    writeln!(
        log,
        "wrote {}: {} objects, {} frames, {} events, {} bytes, peak occupancy {} events per superpixel per frame",
        a.out.display(),
        scene.objects.len(),
        frames,
        s.events,
        s.bytes,
        crate::table::format_g6(s.peak_occupancy)
    )?;
    if s.peak_occupancy > 0.1 {
        writeln!(
            log,
            "warning: peak occupancy {} exceeds 0.1; superpixel saturation will bias the correlations",
            crate::table::format_g6(s.peak_occupancy)
        )?;
    }
    Ok(())
}

fn analyze(a: AnalyzeArgs, log: &mut dyn Write) -> Result<()> {
    let cfg = load_optional(&a.input.config)?;
    let opts = AnalyzeOptions {
        lag: lag_of(a.input.baseline_lag, &cfg)?,
        regions: region_source(&a.input.regions, &cfg),
        thresholds: thresholds_of(&a.input.thresholds, &cfg)?,
        boundaries: boundaries_of(&cfg),
        drift_correction: cfg.analysis.drift_correction,
        positions: None,
    };
    let stack = read_stack_file(&a.input.stack)?;
    let report = analysis::analyze(&stack, &opts)?;
    export_table(&analysis::object_table(&report), &a.out)?;
    for n in &report.notes {
        writeln!(log, "note: {n}")?;
    }
    write!(
        log,
        "{} objects over {} frames",
        report.rows.len(),
        report.frames
    )?;
    if let Some(r) = report.refs {
        write!(
            log,
            "; single-emitter references B1 = {}, g2_1 = {}",
            crate::table::format_g6(r.brightness),
            crate::table::format_g6(r.g2)
        )?;
    }
    writeln!(log)?;
    Ok(())
}

fn sweep_threshold(a: SweepThresholdArgs, log: &mut dyn Write) -> Result<()> {
    let cfg = load_optional(&a.input.config)?;
    let lag = lag_of(a.input.baseline_lag, &cfg)?;
    let regions = region_source(&a.input.regions, &cfg);
    let thresholds = thresholds_of(&a.input.thresholds, &cfg)?;
    let stack = read_stack_file(&a.input.stack)?;
    let sweep = analysis::sweep_threshold(
        &stack,
        &regions,
        &thresholds,
        lag,
        a.object.or(cfg.analysis.object),
        cfg.analysis.drift_correction,
    )?;
    export_table(&analysis::threshold_table(&sweep), &a.out)?;
    let show = |v: Option<f64>| v.map_or("none".to_owned(), crate::table::format_g6);
    writeln!(
        log,
        "object {}: SNR-optimal threshold {}, smallest-error threshold {}",
        sweep.object,
        show(sweep.snr_optimal),
        show(sweep.stderr_optimal)
    )?;
    Ok(())
}

fn sweep_gate(a: SweepGateArgs, log: &mut dyn Write) -> Result<()> {
    let cfg = RunConfig::load(&a.config)?;
    let seed = seed_of(a.seed, &cfg)?;
    let frames = frames_of(a.frames, &cfg)?;
    let gates = a
        .gates
        .or_else(|| cfg.analysis.gates.clone())
        .unwrap_or_else(|| DEFAULT_GATES.to_vec());
    if gates.is_empty() || gates.iter().any(|g| !(g.is_finite() && *g > 0.0)) {
        return Err(Error::Usage("gate widths must be positive numbers".into()));
    }
    let scene = cfg.scene_spec()?;
    let opts = AnalyzeOptions {
        lag: lag_of(a.baseline_lag, &cfg)?,
        thresholds: thresholds_of(&a.thresholds, &cfg)?,
        boundaries: boundaries_of(&cfg),
        drift_correction: cfg.analysis.drift_correction,
        ..AnalyzeOptions::default()
    };
    let points =
        analysis::sweep_gate(&scene, &cfg.camera, &cfg.drift, &gates, frames, seed, &opts)?;
    export_table(&analysis::gate_table(&points), &a.out)?;
    writeln!(
        log,
        "{} gate widths, reduced chi-square against the model {}",
        points.len(),
        crate::table::format_g6(analysis::reduced_chi_square(&points))
    )?;
    Ok(())
}

fn fit_decay(a: FitDecayArgs, log: &mut dyn Write) -> Result<()> {
    let cfg = RunConfig::load(&a.config)?;
    let seed = seed_of(a.seed, &cfg)?;
    let fit = analysis::fit_decay(cfg.hbt()?, seed)?;
    export_table(&analysis::decay_table(&fit), &a.out)?;
    let g = crate::table::format_g6;
    writeln!(
        log,
        "k = {} +- {} 1/ns, p = {} +- {}, {} pairs",
        g(fit.fit.k_hat),
        g(fit.fit.k_stderr()),
        g(fit.fit.p_hat),
        g(fit.fit.p_stderr()),
        fit.histogram.total_pairs
    )?;
    Ok(())
}

fn nonclassical(a: NonclassicalArgs, log: &mut dyn Write) -> Result<()> {
    let cfg = load_optional(&a.config)?;
    let dist = match &a.stack {
        Some(path) => {
            let stack = read_stack_file(path)?;
            let thresholds = thresholds_of(&a.thresholds, &cfg)?;
            let counts = analysis::object_counts(
                &stack,
                &region_source(&a.regions, &cfg),
                &thresholds,
                a.object.or(cfg.analysis.object),
                6,
            )?;
            for g in &counts.gn {
                writeln!(
                    log,
                    "object {}: g{} = {} +- {}",
                    counts.object,
                    g.order,
                    crate::table::format_g6(g.value),
                    crate::table::format_g6(g.stderr)
                )?;
            }
            match &counts.cutoff {
                Ok(m) => writeln!(
                    log,
                    "object {}: correlation cutoff at order {m}",
                    counts.object
                )?,
                Err(e) => writeln!(log, "object {}: {e}", counts.object)?,
            }
            counts.dist
        }
        None => {
            if a.config.is_none() {
                return Err(Error::Usage(
                    "nonclassical needs --config with a [distribution] or --stack".into(),
                ));
            }
            cfg.distribution()?
        }
    };
    let rows = analysis::nonclassical_report(&dist)?;
    export_table(&analysis::nonclassical_table(&rows), &a.out)?;
    let orders: Vec<String> = rows
        .iter()
        .filter(|r| r.nonclassical == Some(true))
        .map(|r| r.order.to_string())
        .collect();
    if orders.is_empty() {
        writeln!(log, "classical: no order violates either criterion")?;
    } else {
        writeln!(log, "nonclassical at orders {}", orders.join(", "))?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
struct ClassifyInput {
    id: String,
    evidence: ObjectEvidence,
    has_b_err: bool,
}

fn read_classify_input(path: &Path) -> Result<Vec<ClassifyInput>> {
    let file = File::open(path).map_err(|e| Error::file(path, e))?;
    let mut rdr = csv::Reader::from_reader(io::BufReader::new(file));
    let header = rdr.headers()?.clone();
    let col = |names: &[&str]| {
        names
            .iter()
            .find_map(|n| header.iter().position(|h| h == *n))
    };
    let bad = |m: String| Error::Config {
        path: path.to_owned(),
        message: m,
    };
    let id = col(&["id"]).ok_or_else(|| bad("missing column `id`".into()))?;
    let b = col(&["B"]).ok_or_else(|| bad("missing column `B`".into()))?;
    let g2 = col(&["g2", "g2_corr"]).ok_or_else(|| bad("missing column `g2`".into()))?;
    let g2_err = col(&["g2_err", "stderr"]).ok_or_else(|| bad("missing column `g2_err`".into()))?;
    let b_err = col(&["B_err"]);
    let mut out = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).unwrap_or("").trim();
        let num = |i: usize| -> Result<Option<f64>> {
            let s = field(i);
            if s.is_empty() {
                return Ok(None);
            }
            s.parse::<f64>().map(Some).map_err(|_| {
                bad(format!(
                    "line {}: column `{}` holds `{s}`, not a number",
                    line + 2,
                    &header[i]
                ))
            })
        };
        // rows without a correlation estimate cannot be classified
        let (Some(bv), Some(gv), Some(ge)) = (num(b)?, num(g2)?, num(g2_err)?) else {
            continue;
        };
        let be = match b_err {
            Some(i) => num(i)?,
            None => None,
        };
        out.push(ClassifyInput {
            id: field(id).to_owned(),
            evidence: ObjectEvidence {
                brightness: bv,
                brightness_err: be.unwrap_or(0.0),
                g2: gv,
                g2_err: ge,
            },
            has_b_err: be.is_some(),
        });
    }
    Ok(out)
}

/// Relative brightness spread of the dim group, used as the brightness
/// error when the input carries none. With fewer than two dim objects the
/// brightness channel gets no weight.
fn dim_spread(objects: &[ClassifyInput], limit: f64) -> f64 {
    let b: Vec<f64> = objects
        .iter()
        .map(|o| o.evidence.brightness)
        .filter(|b| *b < limit && b.is_finite())
        .collect();
    if b.len() < 2 {
        return f64::INFINITY;
    }
    let mean = b.iter().sum::<f64>() / b.len() as f64;
    let var = b.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (b.len() - 1) as f64;
    if mean > 0.0 {
        var.sqrt() / mean
    } else {
        f64::INFINITY
    }
}

fn classify_table(a: ClassifyArgs, log: &mut dyn Write) -> Result<()> {
    let mut objects = read_classify_input(&a.input)?;
    if objects.is_empty() {
        return Err(Error::Analysis(
            "no classifiable objects in the input".into(),
        ));
    }
    let boundaries = DEFAULT_GROUP_BOUNDARIES;
    let spread = dim_spread(&objects, boundaries[0]);
    for o in objects.iter_mut().filter(|o| !o.has_b_err) {
        o.evidence.brightness_err = spread * o.evidence.brightness.abs();
    }
    let evidence: Vec<ObjectEvidence> = objects.iter().map(|o| o.evidence).collect();
    let calibrated = photocorr_core::classifier::calibrate_single_refs(&evidence, boundaries[0]);
    let refs = match (a.b1, a.g2_1) {
        (Some(b), Some(g)) => SingleRefs {
            brightness: b,
            g2: g,
        },
        (b, g) => {
            let c = calibrated?;
            SingleRefs {
                brightness: b.unwrap_or(c.brightness),
                g2: g.unwrap_or(c.g2),
            }
        }
    };
    let mut t = Table::new([
        "id",
        "B",
        "group",
        "g2",
        "g2_err",
        "m_brightness",
        "m_correlation",
        "m_hat",
        "confidence",
        "flag",
    ]);
    for o in &objects {
        let v = classify(&o.evidence, &refs)?;
        t.push(vec![
            o.id.as_str().into(),
            o.evidence.brightness.into(),
            (brightness_group(o.evidence.brightness, &boundaries) as u64).into(),
            o.evidence.g2.into(),
            o.evidence.g2_err.into(),
            v.m_brightness.into(),
            v.m_correlation.map_or(Cell::Empty, Cell::from),
            (v.m_hat as u64).into(),
            v.confidence.into(),
            v.flag.name().into(),
        ]);
    }
    export_table(&t, &a.out)?;
    writeln!(
        log,
        "{} objects classified with B1 = {}, g2_1 = {}",
        objects.len(),
        crate::table::format_g6(refs.brightness),
        crate::table::format_g6(refs.g2)
    )?;
    Ok(())
}
