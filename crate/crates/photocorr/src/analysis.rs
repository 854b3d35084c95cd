//! Whole-stack analyses behind the command-line tools: per-object
//! correlation and brightness tables, threshold and gate sweeps, decay fits
//! and photon-number reports.

use std::path::PathBuf;

use photocorr_core::classifier::{
    calibrate_single_refs, classify, predict_higher_order_verdict, ObjectEvidence, ObjectVerdict,
    SingleRefs,
};
use photocorr_core::estimators::{
    brightness_from_counts, brightness_group, build_coincidence_histogram, default_thresholds,
    detect_regions, fit_decay_model, regions_around, register_drift, snr_optimal, stderr_optimal,
    Brightness, CoincidenceHistogram, CorrelationEstimate, DriftCorrection, FitResult,
    FrameAccumulator, GnEstimate, ObjectRegion, RegionSet, ScanPlan, ThresholdPoint,
    DEFAULT_GROUP_BOUNDARIES,
};
use photocorr_core::model::{
    check_chain_inequality, g2_integrated, g2_m_emitters, klyshko_ratio, GateConfig,
    PhotonNumberDist,
};
use photocorr_core::sim::{
    simulate_time_tags, CameraConfig, DriftKind, DriftModel, Frame, FrameStack, SceneSpec,
    Simulation, StackMeta, StackMode,
};

use crate::config::{HbtSection, RegionFile};
use crate::error::{Error, Result};
use crate::parallel;
use crate::table::{Cell, Table};

/// Where object regions come from.
#[derive(Debug, Clone, PartialEq)]
pub enum RegionSource {
    /// Bright connected areas of the accumulated event map.
    Auto,
    File(PathBuf),
    Given(Vec<ObjectRegion>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalyzeOptions {
    pub lag: usize,
    pub regions: RegionSource,
    /// Readout thresholds tried on analog stacks; empty means the default
    /// grid. Each object uses the one with the best signal-to-noise ratio.
    pub thresholds: Vec<f64>,
    pub boundaries: Vec<f64>,
    /// `None` corrects drift whenever the stack records a drifting
    /// acquisition with control frames.
    pub drift_correction: Option<bool>,
    /// Positions at which to evaluate the excitation, one per region.
    /// `None` uses the region centers.
    pub positions: Option<Vec<[f64; 2]>>,
}

impl Default for AnalyzeOptions {
    fn default() -> Self {
        Self {
            lag: 1,
            regions: RegionSource::Auto,
            thresholds: Vec::new(),
            boundaries: DEFAULT_GROUP_BOUNDARIES.to_vec(),
            drift_correction: None,
            positions: None,
        }
    }
}

/// Results for one object. Failures are kept per object as messages.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectRow {
    pub id: u32,
    pub x: f64,
    pub y: f64,
    pub threshold: Option<f64>,
    pub brightness: std::result::Result<Brightness, String>,
    pub group: Option<usize>,
    pub estimate: std::result::Result<CorrelationEstimate, String>,
    pub verdict: Option<ObjectVerdict>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisReport {
    pub frames: u64,
    pub rows: Vec<ObjectRow>,
    pub refs: Option<SingleRefs>,
    pub drift: DriftCorrection,
    /// Non-fatal problems, one line each.
    pub notes: Vec<String>,
}

fn analog_thresholds(given: &[f64]) -> Vec<f64> {
    if given.is_empty() {
        default_thresholds()
    } else {
        given.to_vec()
    }
}

fn event_map(stack: &FrameStack, threshold: Option<f64>) -> Vec<u64> {
    let w = stack.meta().grid_width as usize;
    let mut map = vec![0u64; w * stack.meta().grid_height as usize];
    let t = threshold.unwrap_or(f64::NEG_INFINITY);
    for frame in stack.frames() {
        match frame {
            Frame::Binary(p) => {
                for q in p {
                    map[q.y as usize * w + q.x as usize] += 1;
                }
            }
            Frame::Analog(r) => {
                for q in r.iter().filter(|q| q.signal as f64 > t) {
                    map[q.pixel.y as usize * w + q.pixel.x as usize] += 1;
                }
            }
        }
    }
    map
}

/// Object regions for `stack`. Automatic detection on analog stacks counts
/// readouts above the highest threshold of `thresholds`.
pub fn resolve_regions(
    stack: &FrameStack,
    source: &RegionSource,
    thresholds: &[f64],
) -> Result<Vec<ObjectRegion>> {
    let meta = stack.meta();
    let offset = meta.camera.image_offset_b;
    let regions = match source {
        RegionSource::Given(r) => r.clone(),
        RegionSource::File(path) => RegionFile::load(path)?.regions(offset, path)?,
        RegionSource::Auto => {
            let level = match meta.mode {
                StackMode::Binary => None,
                StackMode::Analog => analog_thresholds(thresholds)
                    .into_iter()
                    .max_by(f64::total_cmp),
            };
            let map = event_map(stack, level);
            detect_regions(&map, meta.grid_width, meta.grid_height, offset)?
        }
    };
    if regions.is_empty() {
        return Err(Error::Analysis("no objects found".into()));
    }
    Ok(regions)
}

/// Drift correction from the control frames, when wanted and possible.
pub fn drift_correction(meta: &StackMeta, wanted: Option<bool>) -> Result<DriftCorrection> {
    let wanted = wanted.unwrap_or(meta.drift.kind != DriftKind::None);
    if !wanted || meta.control_frames.is_empty() {
        return Ok(DriftCorrection::none());
    }
    Ok(register_drift(
        &meta.control_frames,
        meta.grid_width,
        meta.grid_height,
        meta.drift.control_frame_interval,
    )?)
}

/// Scan plan over `regions`, with the thresholds an analog stack needs.
pub fn plan_for(
    meta: &StackMeta,
    regions: Vec<ObjectRegion>,
    lag: usize,
    thresholds: &[f64],
    drift: DriftCorrection,
) -> Result<ScanPlan> {
    let set = RegionSet::new(regions, meta.grid_width, meta.grid_height)?;
    let mut plan = ScanPlan::new(set, lag);
    if meta.mode == StackMode::Analog {
        plan.thresholds = analog_thresholds(thresholds)
            .into_iter()
            .map(Some)
            .collect();
    }
    plan.drift = drift;
    Ok(plan)
}

/// One sweep point per threshold for object `i`.
pub fn threshold_points(
    plan: &ScanPlan,
    accs: &[FrameAccumulator],
    i: usize,
) -> Vec<ThresholdPoint> {
    plan.thresholds
        .iter()
        .zip(accs)
        .map(|(t, acc)| ThresholdPoint {
            threshold: t.unwrap_or(f64::NAN),
            estimate: plan.correlation(acc, i),
            snr: plan.snr(acc, i),
        })
        .collect()
}

/// Index of the accumulator used for object `i`: the only one for binary
/// stacks, otherwise the threshold with the best signal-to-noise ratio, or
/// the smallest error when no noise area is available.
fn pick_threshold(plan: &ScanPlan, accs: &[FrameAccumulator], i: usize) -> usize {
    if plan.thresholds.len() == 1 {
        return 0;
    }
    let points = threshold_points(plan, accs, i);
    let best = snr_optimal(&points).or_else(|| stderr_optimal(&points));
    best.and_then(|b| points.iter().position(|p| p.threshold == b))
        .unwrap_or(0)
}

/// Excitation intensity after normalization at a position.
fn intensity(meta: &StackMeta, p: [f64; 2]) -> f64 {
    meta.normalization_alpha * meta.excitation.intensity_at(p[0], p[1])
}

/// Per-object brightness, correlation and emitter count.
pub fn analyze(stack: &FrameStack, opts: &AnalyzeOptions) -> Result<AnalysisReport> {
    let meta = stack.meta();
    let regions = resolve_regions(stack, &opts.regions, &opts.thresholds)?;
    if let Some(p) = &opts.positions {
        if p.len() != regions.len() {
            return Err(Error::Usage(format!(
                "{} positions for {} regions",
                p.len(),
                regions.len()
            )));
        }
    }
    let drift = drift_correction(meta, opts.drift_correction)?;
    let plan = plan_for(meta, regions, opts.lag, &opts.thresholds, drift)?;
    let accs = parallel::scan(&plan, stack)?;
    let gate = meta.camera.gate.gate_width_ns;
    let mut notes = Vec::new();
    let mut rows = Vec::with_capacity(plan.set.len());
    for (i, region) in plan.set.regions().iter().enumerate() {
        let c = region.center_a();
        let center = [c[0] + 0.5, c[1] + 0.5];
        let at = opts.positions.as_ref().map_or(center, |p| p[i]);
        let k = pick_threshold(&plan, &accs, i);
        let acc = &accs[k];
        let brightness =
            brightness_from_counts(&acc.counts()[i], acc.frames(), gate, intensity(meta, at))
                .map_err(|e| e.to_string());
        let estimate = plan.correlation(acc, i).map_err(|e| e.to_string());
        if let Err(e) = &estimate {
            notes.push(format!("object {}: {e}", region.id));
        }
        if let Err(e) = &brightness {
            notes.push(format!("object {}: brightness: {e}", region.id));
        }
        rows.push(ObjectRow {
            id: region.id,
            x: center[0],
            y: center[1],
            threshold: plan.thresholds[k],
            group: brightness
                .as_ref()
                .ok()
                .map(|b| brightness_group(b.value, &opts.boundaries)),
            brightness,
            estimate,
            verdict: None,
        });
    }
    let refs = classify_rows(&mut rows, &opts.boundaries, &mut notes);
    Ok(AnalysisReport {
        frames: stack.frame_count() as u64,
        rows,
        refs,
        drift: plan.drift,
        notes,
    })
}

fn evidence(row: &ObjectRow) -> Option<ObjectEvidence> {
    let (Ok(b), Ok(e)) = (&row.brightness, &row.estimate) else {
        return None;
    };
    Some(ObjectEvidence {
        brightness: b.value,
        brightness_err: b.stderr,
        g2: e.g2_corrected,
        g2_err: e.stderr_corrected,
    })
}

/// Calibrates the single-emitter references on the dim objects and
/// classifies every object with complete evidence.
fn classify_rows(
    rows: &mut [ObjectRow],
    boundaries: &[f64],
    notes: &mut Vec<String>,
) -> Option<SingleRefs> {
    let evidence_list: Vec<ObjectEvidence> = rows.iter().filter_map(evidence).collect();
    let dim_limit = boundaries.first().copied().unwrap_or(f64::INFINITY);
    let refs = match calibrate_single_refs(&evidence_list, dim_limit) {
        Ok(r) => r,
        Err(e) => {
            notes.push(format!("no emitter counts: {e}"));
            return None;
        }
    };
    for row in rows.iter_mut() {
        if let Some(ev) = evidence(row) {
            match classify(&ev, &refs) {
                Ok(v) => row.verdict = Some(v),
                Err(e) => notes.push(format!("object {}: {e}", row.id)),
            }
        }
    }
    Some(refs)
}

pub fn object_table(report: &AnalysisReport) -> Table {
    let mut t = Table::new([
        "id",
        "x",
        "y",
        "B",
        "group",
        "g2_raw",
        "g2_norm",
        "g2_corr",
        "stderr",
        "m_hat",
        "confidence",
    ]);
    for r in &report.rows {
        let mut row: Vec<Cell> = vec![r.id.into(), r.x.into(), r.y.into()];
        row.push(
            r.brightness
                .as_ref()
                .map_or(Cell::Empty, |b| b.value.into()),
        );
        row.push(r.group.map_or(Cell::Empty, |g| (g as u64).into()));
        match &r.estimate {
            Ok(e) => {
                row.extend([
                    e.g2_raw.into(),
                    e.g2_normalized.into(),
                    e.g2_corrected.into(),
                    e.stderr_corrected.into(),
                ]);
            }
            Err(_) => row.extend([Cell::Empty, Cell::Empty, Cell::Empty, Cell::Empty]),
        }
        match &r.verdict {
            Some(v) => row.extend([(v.m_hat as u64).into(), v.confidence.into()]),
            None => row.extend([Cell::Empty, Cell::Empty]),
        }
        t.push(row);
    }
    t
}

/// Threshold scan of one object of an analog stack.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdSweep {
    pub object: u32,
    pub points: Vec<ThresholdPoint>,
    pub snr_optimal: Option<f64>,
    pub stderr_optimal: Option<f64>,
}

/// Scans `thresholds` (the default grid when empty) for the object with
/// id `object`, or the first object.
pub fn sweep_threshold(
    stack: &FrameStack,
    regions: &RegionSource,
    thresholds: &[f64],
    lag: usize,
    object: Option<u32>,
    drift: Option<bool>,
) -> Result<ThresholdSweep> {
    let meta = stack.meta();
    if meta.mode != StackMode::Analog {
        return Err(photocorr_core::Error::Capability(
            "threshold sweeps need an analog stack".into(),
        )
        .into());
    }
    let regions = resolve_regions(stack, regions, thresholds)?;
    let i = match object {
        Some(id) => regions
            .iter()
            .position(|r| r.id == id)
            .ok_or_else(|| Error::Usage(format!("no object with id {id}")))?,
        None => 0,
    };
    let id = regions[i].id;
    let drift = drift_correction(meta, drift)?;
    let plan = plan_for(meta, vec![regions[i].clone()], lag, thresholds, drift)?;
    let accs = parallel::scan(&plan, stack)?;
    let points = threshold_points(&plan, &accs, 0);
    Ok(ThresholdSweep {
        object: id,
        snr_optimal: snr_optimal(&points),
        stderr_optimal: stderr_optimal(&points),
        points,
    })
}

pub fn threshold_table(sweep: &ThresholdSweep) -> Table {
    let mut t = Table::new(["threshold", "g2_corr", "stderr", "snr"]);
    for p in &sweep.points {
        let mut row: Vec<Cell> = vec![p.threshold.into()];
        match &p.estimate {
            Ok(e) => row.extend([e.g2_corrected.into(), e.stderr_corrected.into()]),
            Err(_) => row.extend([Cell::Empty, Cell::Empty]),
        }
        row.push(p.snr.map_or(Cell::Empty, Cell::from));
        t.push(row);
    }
    t
}

/// Gate widths swept by default, ns.
pub const DEFAULT_GATES: [f64; 5] = [10.0, 15.0, 20.0, 30.0, 40.0];

#[derive(Debug, Clone, PartialEq)]
pub struct GatePoint {
    pub gate_ns: f64,
    /// Inverse-variance mean of the corrected `g2` over the objects.
    pub g2_mean: f64,
    pub stderr: f64,
    /// Model prediction averaged with the same weights.
    pub model: f64,
    pub objects: usize,
}

/// Half-width of the square region collecting an image of width `sigma`.
pub fn region_half_width(sigma: f64) -> i64 {
    ((2.0 * sigma).ceil() as i64).max(1)
}

/// Regions at the true object positions of a scene.
pub fn truth_regions(scene: &SceneSpec, camera: &CameraConfig) -> Result<Vec<ObjectRegion>> {
    let centers: Vec<[f64; 2]> = scene.objects.iter().map(|o| o.center).collect();
    let sigma = scene
        .objects
        .iter()
        .map(|o| o.psf_sigma)
        .fold(0.0, f64::max);
    Ok(regions_around(
        &centers,
        region_half_width(sigma),
        camera.image_offset_b,
        scene.grid_width,
        scene.grid_height,
    )?)
}

/// Seed of sweep point `i`, spread so that neighbouring points do not share
/// nearby master seeds.
pub fn point_seed(seed: u64, i: usize) -> u64 {
    seed.wrapping_add((i as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

/// Simulates the scene at every gate width and averages the corrected
/// bunching parameter over its objects, analyzed at their true positions.
pub fn sweep_gate(
    scene: &SceneSpec,
    camera: &CameraConfig,
    drift: &DriftModel,
    gates: &[f64],
    frames: u64,
    seed: u64,
    opts: &AnalyzeOptions,
) -> Result<Vec<GatePoint>> {
    let regions = truth_regions(scene, camera)?;
    let positions: Vec<[f64; 2]> = scene.objects.iter().map(|o| o.center).collect();
    let results = parallel::map_ordered(gates, |i, &g| -> Result<GatePoint> {
        let mut cam = camera.clone();
        cam.gate.gate_width_ns = g;
        let sim = Simulation::new(scene, &cam, drift, frames, point_seed(seed, i))?;
        let stack = parallel::simulate(&sim);
        let mut o = opts.clone();
        o.regions = RegionSource::Given(regions.clone());
        o.positions = Some(positions.clone());
        let report = analyze(&stack, &o)?;
        let (mut sw, mut swg, mut swm) = (0.0, 0.0, 0.0);
        let mut used = 0;
        for (row, obj) in report.rows.iter().zip(&scene.objects) {
            let Ok(e) = &row.estimate else { continue };
            if !(e.stderr_corrected > 0.0) {
                continue;
            }
            let single = g2_integrated(&obj.emitters[0], &cam.gate)?;
            let model = g2_m_emitters(single, obj.emitters.len() as u32)?;
            let w = 1.0 / (e.stderr_corrected * e.stderr_corrected);
            sw += w;
            swg += w * e.g2_corrected;
            swm += w * model;
            used += 1;
        }
        if used == 0 {
            return Err(Error::Analysis(format!(
                "no object yields a correlation estimate at gate {g} ns"
            )));
        }
        Ok(GatePoint {
            gate_ns: g,
            g2_mean: swg / sw,
            stderr: (1.0 / sw).sqrt(),
            model: swm / sw,
            objects: used,
        })
    });
    results.into_iter().collect()
}

pub fn gate_table(points: &[GatePoint]) -> Table {
    let mut t = Table::new(["Tg", "g2_mean", "stderr", "eq4_model"]);
    for p in points {
        t.push(vec![
            p.gate_ns.into(),
            p.g2_mean.into(),
            p.stderr.into(),
            p.model.into(),
        ]);
    }
    t
}

/// Reduced chi-square of the sweep means against the model column.
pub fn reduced_chi_square(points: &[GatePoint]) -> f64 {
    let sum: f64 = points
        .iter()
        .map(|p| ((p.g2_mean - p.model) / p.stderr).powi(2))
        .sum();
    sum / points.len() as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayFit {
    pub histogram: CoincidenceHistogram,
    pub fit: FitResult,
}

/// Simulated two-detector recording, its coincidence histogram and the
/// decay-model fit.
pub fn fit_decay(hbt: &HbtSection, seed: u64) -> Result<DecayFit> {
    let tags = simulate_time_tags(
        &hbt.emitter,
        hbt.emitters,
        hbt.efficiency,
        hbt.duration_ns,
        seed,
    )?;
    let window = hbt.window_ns.unwrap_or(10.0 / hbt.emitter.decay_rate_k);
    let histogram = build_coincidence_histogram(&tags, hbt.bin_width_ns, window)?;
    let fit = fit_decay_model(&histogram)?;
    Ok(DecayFit { histogram, fit })
}

pub fn decay_table(d: &DecayFit) -> Table {
    let mut t = Table::new(["tau", "count", "g2", "stderr", "model"]);
    let (k, p) = (d.fit.k_hat, d.fit.p_hat);
    for b in d.histogram.normalized() {
        t.push(vec![
            b.tau.into(),
            b.count.into(),
            b.value.into(),
            b.stderr.into(),
            (1.0 - (1.0 - p) * (-k * b.tau.abs()).exp()).into(),
        ]);
    }
    t
}

/// One order of the nonclassicality report.
#[derive(Debug, Clone, PartialEq)]
pub struct NonclassicalRow {
    pub order: usize,
    pub klyshko: Option<f64>,
    /// `g(k-1) g(k+1)` and `g(k)^2`.
    pub chain: Option<(f64, f64)>,
    pub nonclassical: Option<bool>,
    /// Photon number `N` of the lossy Fock state with this ratio at order k.
    pub implied_n: Option<f64>,
}

pub fn nonclassical_report(dist: &PhotonNumberDist) -> Result<Vec<NonclassicalRow>> {
    let top = dist.max_photons().max(1);
    (1..=top)
        .map(|k| {
            let klyshko = klyshko_ratio(dist, k).ok();
            let chain = check_chain_inequality(dist, k)?;
            let implied_n = klyshko
                .filter(|&r| r < 1.0)
                .map(|r| k as f64 + r / (1.0 - r));
            Ok(NonclassicalRow {
                order: k,
                klyshko,
                chain: Some((chain.g_n_minus_1 * chain.g_n_plus_1, chain.g_n * chain.g_n)),
                nonclassical: Some(chain.nonclassical || klyshko.is_some_and(|r| r < 1.0)),
                implied_n,
            })
        })
        .collect()
}

pub fn nonclassical_table(rows: &[NonclassicalRow]) -> Table {
    let mut t = Table::new([
        "order",
        "klyshko",
        "chain_lhs",
        "chain_rhs",
        "nonclassical",
        "implied_n",
    ]);
    for r in rows {
        t.push(vec![
            (r.order as u64).into(),
            r.klyshko.map_or(Cell::Empty, Cell::from),
            r.chain.map_or(Cell::Empty, |c| c.0.into()),
            r.chain.map_or(Cell::Empty, |c| c.1.into()),
            r.nonclassical
                .map_or(Cell::Empty, |v| Cell::Text(v.to_string())),
            r.implied_n.map_or(Cell::Empty, Cell::from),
        ]);
    }
    t
}

/// Per-frame count distribution of one object (both fields) together with
/// its `g^(n)` estimates for `n = 2..=max_order` and the cutoff verdict.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectCounts {
    pub object: u32,
    pub dist: PhotonNumberDist,
    pub gn: Vec<GnEstimate>,
    pub cutoff: std::result::Result<u32, String>,
}

pub fn object_counts(
    stack: &FrameStack,
    regions: &RegionSource,
    thresholds: &[f64],
    object: Option<u32>,
    max_order: usize,
) -> Result<ObjectCounts> {
    let meta = stack.meta();
    let all = resolve_regions(stack, regions, thresholds)?;
    let region = match object {
        Some(id) => all
            .into_iter()
            .find(|r| r.id == id)
            .ok_or_else(|| Error::Usage(format!("no object with id {id}")))?,
        None => all
            .into_iter()
            .next()
            .expect("resolve_regions is non-empty"),
    };
    let id = region.id;
    if meta.mode == StackMode::Analog && thresholds.len() != 1 {
        return Err(Error::Usage(
            "photon-number counts from an analog stack need exactly one threshold".into(),
        ));
    }
    let drift = drift_correction(meta, None)?;
    let plan = plan_for(meta, vec![region], 1, thresholds, drift)?;
    let accs = parallel::scan(&plan, stack)?;
    let acc = &accs[0];
    let hist = acc.counts()[0].count_histogram(acc.frames());
    let dist = PhotonNumberDist::from_counts(&hist)?;
    let gn = (2..=max_order.max(2))
        .map(|n| plan.gn(acc, 0, n))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let triples: Vec<(usize, f64, f64)> = gn.iter().map(|g| (g.order, g.value, g.stderr)).collect();
    let cutoff = predict_higher_order_verdict(&triples).map_err(|e| e.to_string());
    Ok(ObjectCounts {
        object: id,
        dist,
        gn,
        cutoff,
    })
}

/// Model prediction of the bunching parameter at a gate width.
pub fn model_g2(scene: &SceneSpec, object: usize, gate: &GateConfig) -> Result<f64> {
    let obj = &scene.objects[object];
    let single = g2_integrated(&obj.emitters[0], gate)?;
    Ok(g2_m_emitters(single, obj.emitters.len() as u32)?)
}
