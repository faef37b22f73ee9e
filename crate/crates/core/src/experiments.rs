//! Experiment drivers. Each returns an in-memory report and has a writer
//! that emits CSV files into an output directory.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analysis::{
    build_design_matrix, capacity_curve, fit_time_constant, write_capacity_csv, CapacityPoint, DesignMatrix,
    TimeConstantFit, RANK_CUTOFF,
};
use crate::coding::{estimate_entropy, quantize_pixels, quantize_uniform, whiten_image, PatchCoder};
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::gabor::build_dictionary;
use crate::image::{generate_synthetic_sequence, Frame, ImageSequence, Point, Region, SyntheticParams};
use crate::ndp::{
    incremental_value_iteration, sequential_train_features, FeatureCode, FeatureKind, LinearApproximator,
    TaskFeatures, TaskOutcome,
};
use crate::tracking::{solve_1d_deterministic, solve_1d_stochastic, advancing_targets, TrackingTask};

/// Seed of the `i`-th derived sequence.
pub fn derived_seed(seed: u64, i: u64) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(i)
}

pub fn synthetic_sequence(cfg: &ExperimentConfig, i: usize) -> Result<ImageSequence> {
    generate_synthetic_sequence(&SyntheticParams {
        width: cfg.image_size,
        height: cfg.image_size,
        frames: cfg.frames,
        seed: derived_seed(cfg.seed, i as u64),
        spectral_exponent: cfg.spectral_exponent,
        target_speed: cfg.target_speed,
        ..Default::default()
    })
}

/// Start state for generated tasks: the centered region.
pub fn center_start(cfg: &ExperimentConfig) -> Point {
    let c = ((cfg.image_size - cfg.region) / 2) as i64;
    Point::new(c, c)
}

pub fn synthetic_tasks(cfg: &ExperimentConfig) -> Result<Vec<TrackingTask>> {
    (0..cfg.tasks)
        .map(|i| TrackingTask::new(synthetic_sequence(cfg, i)?, cfg.region, center_start(cfg)))
        .collect()
}

/// `count` blocks of `width x height` pixels at seeded positions in a
/// stream of synthetic images, `per_image` blocks from each.
pub fn sample_blocks(
    cfg: &ExperimentConfig,
    width: usize,
    height: usize,
    count: usize,
    whiten: bool,
) -> Result<Vec<Vec<f64>>> {
    let size = cfg.image_size;
    if width > size || height > size {
        return Err(Error::invalid("block is larger than the image"));
    }
    let per_image = 50;
    let mut rng = ChaCha8Rng::seed_from_u64(derived_seed(cfg.seed, 0x5eed));
    let mut out = Vec::with_capacity(count);
    let mut image = 0u64;
    while out.len() < count {
        let seq = generate_synthetic_sequence(&SyntheticParams {
            width: size,
            height: size,
            frames: 1,
            seed: derived_seed(cfg.seed, 1 << 32 | image),
            spectral_exponent: cfg.spectral_exponent,
            ..Default::default()
        })?;
        image += 1;
        let frame = seq.frame(0);
        let pixels = if whiten {
            whiten_image(frame.pixels(), size, size, cfg.whitening_cutoff)?
        } else {
            frame.pixels().to_vec()
        };
        for _ in 0..per_image.min(count - out.len()) {
            let x0 = rng.random_range(0..=size - width);
            let y0 = rng.random_range(0..=size - height);
            let mut block = Vec::with_capacity(width * height);
            for y in y0..y0 + height {
                block.extend_from_slice(&pixels[y * size + x0..y * size + x0 + width]);
            }
            out.push(block);
        }
    }
    Ok(out)
}

/// Codes of `patches` under a dictionary of `atoms` atoms.
pub fn encode_patches(cfg: &ExperimentConfig, patches: &[Vec<f64>], atoms: usize) -> Result<Vec<Vec<f64>>> {
    let dict = build_dictionary(&Default::default(), cfg.patch, atoms, cfg.seed, cfg.normalize_atoms)?;
    let coder = PatchCoder::new(&dict, cfg.l1())?;
    patches.iter().map(|p| coder.encode(p)).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct CapacityReport {
    pub curves: Vec<(FeatureKind, Vec<CapacityPoint>)>,
}

/// Capacity curves. Pixel kinds grow the patch side; sparse kinds grow the
/// atom count on a fixed patch, up to the over-complete size.
pub fn capacity(cfg: &ExperimentConfig) -> Result<CapacityReport> {
    let d = cfg.patch * cfg.patch;
    let step = (d / 8).max(1);
    let n_max_values: Vec<usize> = (1..=8).map(|i| i * step).collect();
    let mut curves = Vec::new();
    let mut seen_sparse = false;
    for &kind in &cfg.kinds {
        let curve = match kind {
            FeatureKind::Pixels | FeatureKind::Whitened => {
                let whiten = kind == FeatureKind::Whitened;
                let max_side = cfg.image_size.min(4 * cfg.patch);
                let p_values: Vec<usize> = (1..=max_side).map(|s| s * s).collect();
                capacity_curve(&n_max_values, &p_values, RANK_CUTOFF, |n, p| {
                    let side = (p as f64).sqrt().round() as usize;
                    build_design_matrix(&sample_blocks(cfg, side, side, n, whiten)?)
                })?
            }
            FeatureKind::Sparse | FeatureKind::SparseOvercomplete => {
                // One atom-count sweep serves both sparse kinds.
                if seen_sparse {
                    continue;
                }
                seen_sparse = true;
                let pool = sample_blocks(cfg, cfg.patch, cfg.patch, *n_max_values.last().unwrap_or(&1), false)?;
                let p_values: Vec<usize> = (1..=(d as f64 * 2.25).round() as usize).collect();
                capacity_curve(&n_max_values, &p_values, RANK_CUTOFF, |n, m| {
                    build_design_matrix(&encode_patches(cfg, &pool[..n], m)?)
                })?
            }
        };
        let label = if kind.is_sparse() { FeatureKind::Sparse } else { kind };
        curves.push((label, curve));
    }
    Ok(CapacityReport { curves })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpeedRow {
    pub kind: FeatureKind,
    /// Mean over tasks of the terminal-stage fit error after each epoch.
    pub trace: Vec<f64>,
    pub fit: TimeConstantFit,
}

/// Terminal-stage learning curves. The terminal targets are the stage costs,
/// so every kind fits the same numbers from the same start.
pub fn speed(cfg: &ExperimentConfig) -> Result<Vec<SpeedRow>> {
    let tasks = synthetic_tasks(cfg)?;
    let train = cfg.train();
    let mut rows = Vec::new();
    for &kind in &cfg.kinds {
        let code = FeatureCode::new(cfg.feature_spec(kind))?;
        let mut traces = Vec::with_capacity(tasks.len());
        for task in &tasks {
            let features = TaskFeatures::build(&code, task)?;
            let mut approx = LinearApproximator::zeros(code.spec, task.a, task.horizon(), None)?;
            let fits = incremental_value_iteration(task, &features, &mut approx, None, &train)?;
            let last = fits.last().ok_or(Error::EmptySequence)?;
            traces.push(std::iter::once(last.initial_mse).chain(last.trace.iter().copied()).collect::<Vec<f64>>());
        }
        let len = traces.iter().map(Vec::len).min().unwrap_or(0);
        let trace: Vec<f64> =
            (0..len).map(|t| traces.iter().map(|tr| tr[t]).sum::<f64>() / traces.len() as f64).collect();
        let points: Vec<(f64, f64)> = trace.iter().enumerate().map(|(t, &e)| (t as f64, e)).collect();
        let fit = fit_time_constant(&points)?;
        rows.push(SpeedRow { kind, trace, fit });
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeqLearnRow {
    pub kind: FeatureKind,
    pub partitions: Option<usize>,
    pub task: usize,
    pub outcome: TaskOutcome,
}

/// Sequential multitask learning, unpartitioned and at each partition count.
/// Counts that cannot hold the tasks or do not divide `p` are skipped.
pub fn seqlearn(cfg: &ExperimentConfig) -> Result<Vec<SeqLearnRow>> {
    let tasks = synthetic_tasks(cfg)?;
    let train = cfg.train();
    let mut rows = Vec::new();
    for &kind in &cfg.kinds {
        let code = FeatureCode::new(cfg.feature_spec(kind))?;
        let features: Vec<TaskFeatures> = tasks.iter().map(|t| TaskFeatures::build(&code, t)).collect::<Result<_>>()?;
        let p = code.spec.feature_len(cfg.region)?;
        let counts = std::iter::once(None)
            .chain(cfg.partitions.iter().filter(|&&c| c >= tasks.len() && p % c == 0).map(|&c| Some(c)));
        for partitions in counts {
            let result = sequential_train_features(&tasks, &features, code.spec, &train, partitions)?;
            rows.extend(
                result.outcomes.into_iter().enumerate().map(|(task, outcome)| SeqLearnRow { kind, partitions, task, outcome }),
            );
        }
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EntropyRow {
    pub kind: FeatureKind,
    pub entropy_bits: f64,
    pub histogram: Vec<(i32, usize)>,
}

fn histogram(values: &[i32]) -> Vec<(i32, usize)> {
    let mut h = std::collections::BTreeMap::new();
    for &v in values {
        *h.entry(v).or_insert(0usize) += 1;
    }
    h.into_iter().collect()
}

/// Entropy of 8-bit pixels against unit-bin quantized sparse coefficients
/// over every non-overlapping patch of the generated sequences.
pub fn entropy(cfg: &ExperimentConfig) -> Result<Vec<EntropyRow>> {
    let frames: Vec<Frame> = (0..cfg.tasks)
        .map(|i| synthetic_sequence(cfg, i).map(|s| s.frames().to_vec()))
        .collect::<Result<Vec<_>>>()?
        .concat();
    let tiles: Vec<Vec<f64>> = frames
        .iter()
        .map(|f| {
            let side = cfg.image_size / cfg.patch * cfg.patch;
            Region::from_frame(f, Point::new(0, 0), side)
                .ok_or_else(|| Error::invalid("patch larger than image"))?
                .tiles(cfg.patch)
        })
        .collect::<Result<Vec<_>>>()?
        .concat();
    let mut rows = Vec::new();
    let mut seen = Vec::new();
    for &kind in &cfg.kinds {
        let levels = match kind {
            FeatureKind::Pixels => quantize_pixels(&tiles.concat()),
            FeatureKind::Sparse | FeatureKind::SparseOvercomplete => {
                let atoms = cfg.feature_spec(kind).atoms();
                encode_patches(cfg, &tiles, atoms)?.iter().flat_map(|c| quantize_uniform(c).levels).collect()
            }
            // Whitened intensities have no natural quantizer.
            FeatureKind::Whitened => continue,
        };
        if seen.contains(&kind) {
            continue;
        }
        seen.push(kind);
        rows.push(EntropyRow { kind, entropy_bits: estimate_entropy(&levels, 256)?, histogram: histogram(&levels) });
    }
    Ok(rows)
}

/// The one-dimensional closed-form cases, one CSV line each.
pub fn appendix1d(cfg: &ExperimentConfig) -> Result<Vec<String>> {
    let mut lines = Vec::new();
    let det = solve_1d_deterministic(&advancing_targets(4), 0)?;
    lines.push(format!("deterministic,dp_cost={},greedy_cost={}", det.dp.cost, det.greedy.cost));
    for n in 4..=10 {
        let c = solve_1d_deterministic(&advancing_targets(n), 0)?;
        lines.push(format!("advancing,n={n},dp_cost={},greedy_cost={},excess={}", c.dp.cost, c.greedy.cost, c.greedy.cost - c.dp.cost));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derived_seed(cfg.seed, 0xa1));
    for _ in 0..cfg.tasks.max(1) {
        let (p1, p2) = (rng.random_range(0.5..=1.0), rng.random_range(0.5..=1.0));
        let c = solve_1d_stochastic(p1, p2)?;
        lines.push(format!("stochastic,p1={p1},p2={p2},dp_cost={},greedy_cost={}", c.dp.cost, c.greedy.cost));
    }
    Ok(lines)
}

fn create(dir: &Path, name: &str, created: &mut Vec<PathBuf>) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
    created.push(path);
    Ok(BufWriter::new(file))
}

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::Writer::from_writer(w)
}

fn csv_err(e: csv::Error) -> Error {
    Error::invalid(format!("csv: {e}"))
}

fn finish<W: Write>(w: csv::Writer<W>) -> Result<()> {
    w.into_inner().map_err(|e| Error::invalid(format!("csv: {e}")))?.flush().map_err(|e| Error::io("csv output", e))
}

pub fn write_capacity(dir: &Path, report: &CapacityReport) -> Result<Vec<PathBuf>> {
    let mut created = Vec::new();
    for (kind, curve) in &report.curves {
        let out = create(dir, &format!("capacity_{}.csv", kind.name()), &mut created)?;
        write_capacity_csv(out, kind.name(), curve)?;
    }
    Ok(created)
}

pub fn write_speed(dir: &Path, rows: &[SpeedRow]) -> Result<Vec<PathBuf>> {
    let mut created = Vec::new();
    let mut traces = csv_writer(create(dir, "convergence.csv", &mut created)?);
    traces.write_record(["iter", "error", "kind"]).map_err(csv_err)?;
    let mut fits = csv_writer(create(dir, "time_constants.csv", &mut created)?);
    fits.write_record(["kind", "delta", "r_squared", "epochs"]).map_err(csv_err)?;
    for row in rows {
        for (t, e) in row.trace.iter().enumerate() {
            traces.write_record([t.to_string(), format!("{e:e}"), row.kind.name().to_string()]).map_err(csv_err)?;
        }
        let delta = row.fit.delta.map_or_else(|| "none".to_string(), |d| d.to_string());
        fits.write_record([
            row.kind.name().to_string(),
            delta,
            row.fit.r_squared.to_string(),
            row.trace.len().saturating_sub(1).to_string(),
        ])
        .map_err(csv_err)?;
    }
    finish(traces)?;
    finish(fits)?;
    Ok(created)
}

pub fn write_seqlearn(dir: &Path, rows: &[SeqLearnRow]) -> Result<Vec<PathBuf>> {
    let mut created = Vec::new();
    let mut w = csv_writer(create(dir, "seqlearn.csv", &mut created)?);
    w.write_record(["kind", "partitions", "task", "partition", "cost_ratio", "dp_ratio", "neuro_cost", "dp_cost", "greedy_cost"])
        .map_err(csv_err)?;
    for r in rows {
        let o = &r.outcome;
        w.write_record([
            r.kind.name().to_string(),
            r.partitions.map_or_else(|| "none".into(), |p| p.to_string()),
            r.task.to_string(),
            o.partition.map_or_else(|| "-".into(), |p| p.to_string()),
            o.cost_ratio.to_string(),
            o.dp_ratio.to_string(),
            o.neuro_cost.to_string(),
            o.dp_cost.to_string(),
            o.greedy_cost.to_string(),
        ])
        .map_err(csv_err)?;
    }
    finish(w)?;
    Ok(created)
}

pub fn write_entropy(dir: &Path, rows: &[EntropyRow]) -> Result<Vec<PathBuf>> {
    let mut created = Vec::new();
    let mut h = csv_writer(create(dir, "entropy.csv", &mut created)?);
    h.write_record(["kind", "entropy_bits", "symbols"]).map_err(csv_err)?;
    let mut hist = csv_writer(create(dir, "histograms.csv", &mut created)?);
    hist.write_record(["kind", "level", "count"]).map_err(csv_err)?;
    for r in rows {
        let symbols: usize = r.histogram.iter().map(|(_, c)| c).sum();
        h.write_record([r.kind.name().to_string(), r.entropy_bits.to_string(), symbols.to_string()]).map_err(csv_err)?;
        for (level, count) in &r.histogram {
            hist.write_record([r.kind.name().to_string(), level.to_string(), count.to_string()]).map_err(csv_err)?;
        }
    }
    finish(h)?;
    finish(hist)?;
    Ok(created)
}

pub fn write_appendix1d(dir: &Path, lines: &[String]) -> Result<Vec<PathBuf>> {
    let mut created = Vec::new();
    let mut out = create(dir, "appendix1d.csv", &mut created)?;
    for line in lines {
        writeln!(out, "{line}").map_err(|e| Error::io(dir, e))?;
    }
    out.flush().map_err(|e| Error::io(dir, e))?;
    Ok(created)
}

/// Design matrix of codes for the given patches, as used by the capacity checks.
pub fn code_design(cfg: &ExperimentConfig, patches: &[Vec<f64>], atoms: usize) -> Result<DesignMatrix> {
    build_design_matrix(&encode_patches(cfg, patches, atoms)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        ExperimentConfig {
            tasks: 2,
            frames: 3,
            image_size: 32,
            region: 8,
            patch: 4,
            partitions: vec![2, 4],
            max_epochs: 2000,
            patches: 50,
            ..Default::default()
        }
    }

    #[test]
    fn appendix_rows() {
        let lines = appendix1d(&small()).unwrap();
        assert_eq!(lines[0], "deterministic,dp_cost=1,greedy_cost=2");
        assert!(lines.iter().any(|l| l == "advancing,n=7,dp_cost=1,greedy_cost=5,excess=4"));
    }

    #[test]
    fn seeded_data_is_reproducible() {
        let cfg = small();
        assert_eq!(synthetic_tasks(&cfg).unwrap()[1].seq.frames(), synthetic_tasks(&cfg).unwrap()[1].seq.frames());
        let a = sample_blocks(&cfg, 4, 2, 60, false).unwrap();
        assert_eq!(a, sample_blocks(&cfg, 4, 2, 60, false).unwrap());
        assert_eq!(a.len(), 60);
        assert!(a.iter().all(|b| b.len() == 8));
        assert!(sample_blocks(&cfg, 64, 2, 1, false).is_err());
    }

    #[test]
    fn seqlearn_rows_cover_every_count() {
        let cfg = ExperimentConfig { kinds: vec![FeatureKind::Pixels], ..small() };
        let rows = seqlearn(&cfg).unwrap();
        assert_eq!(rows.len(), 2 * 3);
        for r in rows.iter().filter(|r| r.partitions.is_some()) {
            assert!((r.outcome.cost_ratio - r.outcome.dp_ratio).abs() < 1e-9, "{r:?}");
        }
    }

    #[test]
    fn entropy_rows() {
        let cfg = ExperimentConfig { kinds: vec![FeatureKind::Pixels, FeatureKind::Whitened, FeatureKind::Sparse], ..small() };
        let rows = entropy(&cfg).unwrap();
        assert_eq!(rows.iter().map(|r| r.kind).collect::<Vec<_>>(), vec![FeatureKind::Pixels, FeatureKind::Sparse]);
        assert!(rows[1].entropy_bits < rows[0].entropy_bits);
    }

    #[test]
    fn writers_create_files() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path();
        let files = write_appendix1d(dir, &appendix1d(&small()).unwrap()).unwrap();
        let text = std::fs::read_to_string(&files[0]).unwrap();
        assert!(text.starts_with("deterministic,dp_cost=1,greedy_cost=2\n"));
        let cfg = ExperimentConfig { kinds: vec![FeatureKind::Pixels, FeatureKind::Sparse], ..small() };
        let files = write_speed(dir, &speed(&cfg).unwrap()).unwrap();
        let fits = std::fs::read_to_string(&files[1]).unwrap();
        assert!(fits.starts_with("kind,delta,r_squared,epochs\npixels,"));
    }
}
