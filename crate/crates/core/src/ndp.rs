//! Linear cost-to-go approximation over image features, trained backward in
//! stage order by incremental gradient steps on Bellman targets, with optional
//! partitioning of the feature vector across tasks.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::ops::Range;

use crate::coding::{encode_region, whiten_image, L1Config, PatchCoder, DEFAULT_WHITENING_CUTOFF};
use crate::error::{Error, Result};
use crate::gabor::{build_dictionary, CopulaModel, GaborDictionary};
use crate::image::{Point, Region};
use crate::tracking::{best_control, enumerate_states, ratio, rollout_policy, solve_exact_dp, solve_greedy, Trajectory, TrackingTask};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FeatureKind {
    Pixels,
    Whitened,
    /// Complete Gabor code, `m = d` atoms per patch.
    Sparse,
    /// Over-complete Gabor code, `m = 2.25 d` atoms per patch.
    SparseOvercomplete,
}

impl FeatureKind {
    pub const ALL: [FeatureKind; 4] =
        [FeatureKind::Pixels, FeatureKind::Whitened, FeatureKind::Sparse, FeatureKind::SparseOvercomplete];

    pub fn name(self) -> &'static str {
        match self {
            FeatureKind::Pixels => "pixels",
            FeatureKind::Whitened => "whitened",
            FeatureKind::Sparse => "sparse",
            FeatureKind::SparseOvercomplete => "sparse2.25",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        FeatureKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown feature kind `{s}` (pixels|whitened|sparse|sparse2.25)")))
    }

    pub fn is_sparse(self) -> bool {
        matches!(self, FeatureKind::Sparse | FeatureKind::SparseOvercomplete)
    }
}

/// Everything needed to rebuild a feature map, including the dictionary seed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FeatureSpec {
    pub kind: FeatureKind,
    pub patch_side: usize,
    pub dict_seed: u64,
    pub model: CopulaModel,
    pub normalize_atoms: bool,
    pub l1: L1Config,
    pub whitening_cutoff: f64,
}

impl FeatureSpec {
    pub fn new(kind: FeatureKind) -> Self {
        FeatureSpec {
            kind,
            patch_side: 10,
            dict_seed: 0,
            model: CopulaModel::default(),
            normalize_atoms: false,
            l1: L1Config::default(),
            whitening_cutoff: DEFAULT_WHITENING_CUTOFF,
        }
    }

    /// Atoms per patch: `d` or `round(2.25 d)`.
    pub fn atoms(&self) -> usize {
        let d = self.patch_side * self.patch_side;
        match self.kind {
            FeatureKind::SparseOvercomplete => (d as f64 * 2.25).round() as usize,
            _ => d,
        }
    }

    /// Feature length `p` for regions of side `a`.
    pub fn feature_len(&self, a: usize) -> Result<usize> {
        if !self.kind.is_sparse() {
            return Ok(a * a);
        }
        if self.patch_side == 0 || a % self.patch_side != 0 {
            return Err(Error::invalid(format!("region side {a} is not divisible by patch side {}", self.patch_side)));
        }
        let tiles = (a / self.patch_side).pow(2);
        Ok(tiles * self.atoms())
    }
}

/// A feature map ready to apply: the dictionary and coder are built once.
#[derive(Clone, Debug)]
pub struct FeatureCode {
    pub spec: FeatureSpec,
    pub dictionary: Option<GaborDictionary>,
    coder: Option<PatchCoder>,
}

impl FeatureCode {
    pub fn new(spec: FeatureSpec) -> Result<Self> {
        if !spec.kind.is_sparse() {
            return Ok(FeatureCode { spec, dictionary: None, coder: None });
        }
        let dict = build_dictionary(&spec.model, spec.patch_side, spec.atoms(), spec.dict_seed, spec.normalize_atoms)?;
        FeatureCode::with_dictionary(spec, dict)
    }

    pub fn with_dictionary(spec: FeatureSpec, dict: GaborDictionary) -> Result<Self> {
        if dict.patch_side != spec.patch_side {
            return Err(Error::invalid("dictionary patch side does not match the feature spec"));
        }
        let coder = PatchCoder::new(&dict, spec.l1)?;
        Ok(FeatureCode { spec, dictionary: Some(dict), coder: Some(coder) })
    }

    /// Full feature vector of a region. Whitened features need the whole
    /// frame, so they go through [`TaskFeatures`].
    pub fn encode(&self, region: &Region) -> Result<Vec<f64>> {
        match self.spec.kind {
            FeatureKind::Pixels => Ok(region.data.clone()),
            FeatureKind::Whitened => Err(Error::invalid("whitened features are computed per frame")),
            FeatureKind::Sparse | FeatureKind::SparseOvercomplete => {
                let coder = self.coder.as_ref().ok_or_else(|| Error::invalid("sparse features need a dictionary"))?;
                encode_region(coder, region, self.spec.patch_side)
            }
        }
    }
}

/// `P` equal contiguous blocks of a length-`p` feature vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PartitionLayout {
    pub count: usize,
    pub width: usize,
}

impl PartitionLayout {
    pub fn new(p: usize, count: usize) -> Result<Self> {
        if count == 0 || p % count != 0 {
            return Err(Error::invalid(format!("{count} partitions do not divide {p} features evenly")));
        }
        Ok(PartitionLayout { count, width: p / count })
    }

    pub fn range(&self, i: usize) -> Range<usize> {
        i * self.width..(i + 1) * self.width
    }
}

/// Zeroes every entry of `full` outside partition `i`.
pub fn featurize(full: &[f64], layout: Option<&PartitionLayout>, partition: Option<usize>) -> Result<Vec<f64>> {
    match (layout, partition) {
        (None, _) => Ok(full.to_vec()),
        (Some(l), Some(i)) if i < l.count => {
            let r = l.range(i);
            Ok(full.iter().enumerate().map(|(j, &v)| if r.contains(&j) { v } else { 0.0 }).collect())
        }
        (Some(l), Some(i)) => Err(Error::invalid(format!("partition {i} out of range for {}", l.count))),
        (Some(_), None) => Err(Error::invalid("partitioned features need a partition index")),
    }
}

/// Features of every reachable `(stage, state)` of one task.
#[derive(Clone, Debug)]
pub struct TaskFeatures {
    stages: Vec<HashMap<Point, Vec<f64>>>,
    pub p: usize,
}

impl TaskFeatures {
    pub fn build(code: &FeatureCode, task: &TrackingTask) -> Result<Self> {
        let states = enumerate_states(task);
        let p = code.spec.feature_len(task.a)?;
        let mut stages = Vec::with_capacity(states.len());
        for k in 0..states.len() {
            let frame = task.seq.frame(k);
            let whitened = match code.spec.kind {
                FeatureKind::Whitened => {
                    Some(whiten_image(frame.pixels(), frame.width(), frame.height(), code.spec.whitening_cutoff)?)
                }
                _ => None,
            };
            let mut map = HashMap::with_capacity(states.stage(k).len());
            for &x in states.stage(k) {
                let region = task.seq.extract_region(k, x, task.a)?;
                let v = match &whitened {
                    Some(w) => whitened_region(w, frame.width(), x, task.a),
                    None => code.encode(&region)?,
                };
                debug_assert_eq!(v.len(), p);
                map.insert(x, v);
            }
            stages.push(map);
        }
        Ok(TaskFeatures { stages, p })
    }

    pub fn get(&self, k: usize, x: Point) -> Option<&[f64]> {
        self.stages.get(k)?.get(&x).map(Vec::as_slice)
    }

    fn expect(&self, k: usize, x: Point) -> &[f64] {
        self.get(k, x).expect("features cover every reachable state")
    }
}

fn whitened_region(grid: &[f64], width: usize, origin: Point, a: usize) -> Vec<f64> {
    let (x0, y0) = (origin.x as usize, origin.y as usize);
    let mut out = Vec::with_capacity(a * a);
    for y in y0..y0 + a {
        out.extend_from_slice(&grid[y * width + x0..y * width + x0 + a]);
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    /// Fixed learning rate; `None` uses `0.5 / max_s |v_s|^2` per stage.
    pub eta: Option<f64>,
    pub max_epochs: usize,
    /// Target mean squared fit error.
    pub tol: f64,
    /// Deterministic subsample of at most this many states per stage.
    pub max_samples: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { eta: None, max_epochs: 100_000, tol: 1e-8, max_samples: None }
    }
}

/// Per-stage weights `r_k` for `k = 1..N`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearApproximator {
    pub spec: FeatureSpec,
    pub a: usize,
    pub weights: Vec<Vec<f64>>,
    pub layout: Option<PartitionLayout>,
    /// Partition chosen for each trained task, keyed by its initial target.
    pub assignments: Vec<(Point, usize)>,
}

impl LinearApproximator {
    pub fn zeros(spec: FeatureSpec, a: usize, horizon: usize, partitions: Option<usize>) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::EmptySequence);
        }
        let p = spec.feature_len(a)?;
        let layout = partitions.map(|count| PartitionLayout::new(p, count)).transpose()?;
        Ok(LinearApproximator { spec, a, weights: vec![vec![0.0; p]; horizon], layout, assignments: Vec::new() })
    }

    pub fn horizon(&self) -> usize {
        self.weights.len()
    }

    pub fn p(&self) -> usize {
        self.weights[0].len()
    }

    fn active(&self, partition: Option<usize>) -> Result<Range<usize>> {
        match (&self.layout, partition) {
            (None, _) => Ok(0..self.p()),
            (Some(l), Some(i)) if i < l.count => Ok(l.range(i)),
            (Some(l), Some(i)) => Err(Error::invalid(format!("partition {i} out of range for {}", l.count))),
            (Some(_), None) => Err(Error::invalid("partitioned approximator needs a partition index")),
        }
    }

    /// `J~_k(x) = r_k' v_k(x)` over the active partition.
    pub fn value(&self, k: usize, v: &[f64], range: &Range<usize>) -> f64 {
        dot(&self.weights[k][range.clone()], &v[range.clone()])
    }

    /// Partition recorded for a task with initial target `w1`.
    pub fn partition_for(&self, w1: Point) -> Option<usize> {
        let layout = self.layout?;
        Some(
            self.assignments
                .iter()
                .find(|(w, _)| *w == w1)
                .map_or_else(|| partition_key(w1, layout.count), |(_, i)| *i),
        )
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `r <- r - eta (v'r - beta) v`.
pub fn sgd_update(r: &mut [f64], v: &[f64], beta: f64, eta: f64) -> Result<()> {
    if r.len() != v.len() {
        return Err(Error::Dimension { expected: r.len(), actual: v.len() });
    }
    let scale = eta * (dot(r, v) - beta);
    for (ri, vi) in r.iter_mut().zip(v) {
        *ri -= scale * vi;
    }
    Ok(())
}

/// `beta = |x - w_k|^2 + min_u J~_{k+1}(x + u)`, with `J~_N = 0`.
pub fn bellman_target(
    task: &TrackingTask,
    k: usize,
    x: Point,
    approx: &LinearApproximator,
    features: &TaskFeatures,
    partition: Option<usize>,
) -> Result<f64> {
    let range = approx.active(partition)?;
    let stage = task.stage_cost(k, x);
    if k + 1 >= task.horizon() {
        return Ok(stage);
    }
    let (_, tail) = best_control(task, x, |y| approx.value(k + 1, features.expect(k + 1, y), &range));
    Ok(stage + tail)
}

#[derive(Clone, Debug, PartialEq)]
pub struct StageFit {
    pub eta: f64,
    pub epochs: usize,
    pub initial_mse: f64,
    pub mse: f64,
    /// Mean squared error after each epoch.
    pub trace: Vec<f64>,
    pub converged: bool,
}

fn mean_squared_error(r: &[f64], samples: &[(&[f64], f64)]) -> f64 {
    samples.iter().map(|(v, b)| (dot(r, v) - b).powi(2)).sum::<f64>() / samples.len() as f64
}

/// Cycles the samples in order applying [`sgd_update`] to `weights[range]`.
/// Entries outside `range` are never written.
pub fn train_stage(
    weights: &mut [f64],
    samples: &[(&[f64], f64)],
    range: Range<usize>,
    config: &TrainConfig,
    stage: usize,
) -> Result<StageFit> {
    if samples.is_empty() {
        return Err(Error::invalid("no training samples"));
    }
    let local: Vec<(&[f64], f64)> = samples.iter().map(|(v, b)| (&v[range.clone()], *b)).collect();
    let r = &mut weights[range.clone()];
    let eta = match config.eta {
        Some(eta) if eta > 0.0 => eta,
        Some(eta) => return Err(Error::invalid(format!("learning rate must be positive, got {eta}"))),
        None => {
            let max_norm = local.iter().map(|(v, _)| dot(v, v)).fold(0.0, f64::max);
            if max_norm > 0.0 { 0.5 / max_norm } else { 0.0 }
        }
    };
    let initial_mse = mean_squared_error(r, &local);
    let mut fit = StageFit { eta, epochs: 0, initial_mse, mse: initial_mse, trace: Vec::new(), converged: initial_mse < config.tol };
    if fit.converged || eta == 0.0 {
        return Ok(fit);
    }
    for epoch in 1..=config.max_epochs {
        for (v, beta) in &local {
            let scale = eta * (dot(r, v) - beta);
            for (ri, vi) in r.iter_mut().zip(v.iter()) {
                *ri -= scale * vi;
            }
        }
        let mse = mean_squared_error(r, &local);
        fit.trace.push(mse);
        fit.epochs = epoch;
        fit.mse = mse;
        if !mse.is_finite() || mse > 1e6 * initial_mse {
            return Err(Error::Diverged { stage: stage + 1, error: mse, initial: initial_mse });
        }
        if mse < config.tol {
            fit.converged = true;
            break;
        }
    }
    Ok(fit)
}

fn subsample(states: &[Point], max: Option<usize>) -> Vec<Point> {
    match max {
        Some(m) if m > 0 && states.len() > m => {
            (0..m).map(|i| states[i * states.len() / m]).collect()
        }
        _ => states.to_vec(),
    }
}

/// Backward over stages: Bellman targets from the already-fitted next stage,
/// then [`train_stage`] on every enumerated state.
pub fn incremental_value_iteration(
    task: &TrackingTask,
    features: &TaskFeatures,
    approx: &mut LinearApproximator,
    partition: Option<usize>,
    config: &TrainConfig,
) -> Result<Vec<StageFit>> {
    if task.horizon() != approx.horizon() {
        return Err(Error::Dimension { expected: approx.horizon(), actual: task.horizon() });
    }
    if task.a != approx.a || features.p != approx.p() {
        return Err(Error::invalid("task region size does not match the approximator"));
    }
    let range = approx.active(partition)?;
    let states = enumerate_states(task);
    let mut fits = vec![None; task.horizon()];
    for k in (0..task.horizon()).rev() {
        let chosen = subsample(states.stage(k), config.max_samples);
        let mut samples = Vec::with_capacity(chosen.len());
        for &x in &chosen {
            let beta = bellman_target(task, k, x, approx, features, partition)?;
            samples.push((features.expect(k, x), beta));
        }
        fits[k] = Some(train_stage(&mut approx.weights[k], &samples, range.clone(), config, k)?);
    }
    Ok(fits.into_iter().map(|f| f.expect("every stage trained")).collect())
}

/// Greedy rollout with respect to `J~`: at stage `k` pick the admissible
/// control minimizing `J~_{k+1}(x + u)`, ties in control order.
pub fn neuro_rollout(
    task: &TrackingTask,
    features: &TaskFeatures,
    approx: &LinearApproximator,
    partition: Option<usize>,
) -> Result<Trajectory> {
    let range = approx.active(partition)?;
    rollout_policy(task, |k, x| best_control(task, x, |y| approx.value(k + 1, features.expect(k + 1, y), &range)).0)
}

/// FNV-1a of the initial target coordinates, reduced mod `count`.
pub fn partition_key(w1: Point, count: usize) -> usize {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in w1.x.to_le_bytes().into_iter().chain(w1.y.to_le_bytes()) {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    (h % count.max(1) as u64) as usize
}

#[derive(Clone, Debug, PartialEq)]
pub struct TaskOutcome {
    pub partition: Option<usize>,
    pub neuro_cost: f64,
    pub greedy_cost: f64,
    pub dp_cost: f64,
    pub cost_ratio: f64,
    pub dp_ratio: f64,
}

#[derive(Clone, Debug)]
pub struct SequentialResult {
    pub approx: LinearApproximator,
    pub outcomes: Vec<TaskOutcome>,
    pub fits: Vec<Vec<StageFit>>,
}

/// Trains tasks in order on shared weights, then scores every task.
/// Partitioned runs give each task its key's partition, moving to the next
/// free one on a collision so no two tasks share weights.
pub fn sequential_train(
    tasks: &[TrackingTask],
    code: &FeatureCode,
    config: &TrainConfig,
    partitions: Option<usize>,
) -> Result<SequentialResult> {
    let features: Vec<TaskFeatures> = tasks.iter().map(|t| TaskFeatures::build(code, t)).collect::<Result<_>>()?;
    sequential_train_features(tasks, &features, code.spec, config, partitions)
}

/// [`sequential_train`] with features computed by the caller, one entry per task.
pub fn sequential_train_features(
    tasks: &[TrackingTask],
    features: &[TaskFeatures],
    spec: FeatureSpec,
    config: &TrainConfig,
    partitions: Option<usize>,
) -> Result<SequentialResult> {
    let first = tasks.first().ok_or_else(|| Error::invalid("no tasks to train"))?;
    if features.len() != tasks.len() {
        return Err(Error::Dimension { expected: tasks.len(), actual: features.len() });
    }
    if let Some(p) = partitions {
        if p < tasks.len() {
            return Err(Error::invalid(format!("{p} partitions cannot hold {} tasks", tasks.len())));
        }
    }
    let mut approx = LinearApproximator::zeros(spec, first.a, first.horizon(), partitions)?;

    let mut used = vec![false; partitions.unwrap_or(0)];
    let mut assigned = Vec::with_capacity(tasks.len());
    let mut fits = Vec::with_capacity(tasks.len());
    for (task, feats) in tasks.iter().zip(features) {
        let partition = partitions.map(|count| {
            let mut i = partition_key(task.target(0), count);
            while used[i] {
                i = (i + 1) % count;
            }
            used[i] = true;
            i
        });
        if let Some(i) = partition {
            approx.assignments.push((task.target(0), i));
        }
        fits.push(incremental_value_iteration(task, feats, &mut approx, partition, config)?);
        assigned.push(partition);
    }

    let outcomes = tasks
        .iter()
        .zip(features)
        .zip(assigned)
        .map(|((task, feats), partition)| evaluate(task, feats, &approx, partition))
        .collect::<Result<_>>()?;
    Ok(SequentialResult { approx, outcomes, fits })
}

pub fn evaluate(
    task: &TrackingTask,
    features: &TaskFeatures,
    approx: &LinearApproximator,
    partition: Option<usize>,
) -> Result<TaskOutcome> {
    let neuro = neuro_rollout(task, features, approx, partition)?;
    let greedy = solve_greedy(task).total_cost;
    let dp = solve_exact_dp(task).optimal_cost();
    Ok(TaskOutcome {
        partition,
        neuro_cost: neuro.total_cost,
        greedy_cost: greedy,
        dp_cost: dp,
        cost_ratio: ratio(neuro.total_cost, greedy),
        dp_ratio: ratio(dp, greedy),
    })
}

const MAGIC: &str = "NDPAPPROX1";

/// Text format: a header line of `key=value` fields, then one line of `p`
/// weights per stage.
pub fn encode_approximator(approx: &LinearApproximator) -> String {
    let s = &approx.spec;
    let mut out = String::new();
    let assignments: Vec<String> = approx.assignments.iter().map(|(w, i)| format!("{}:{}:{}", w.x, w.y, i)).collect();
    let _ = write!(
        out,
        "{MAGIC} horizon={} p={} a={} kind={} patch={} dict_seed={} rho={:e} alpha={:e},{:e},{:e} beta={:e},{:e},{:e} \
         normalize={} lambda={:e} l1_max_iter={} l1_tol={:e} l1_accelerated={} cutoff={:e} partitions={} assign={}",
        approx.horizon(),
        approx.p(),
        approx.a,
        s.kind.name(),
        s.patch_side,
        s.dict_seed,
        s.model.rho,
        s.model.alpha[0],
        s.model.alpha[1],
        s.model.alpha[2],
        s.model.beta[0],
        s.model.beta[1],
        s.model.beta[2],
        u8::from(s.normalize_atoms),
        s.l1.lambda,
        s.l1.max_iter,
        s.l1.tol,
        u8::from(s.l1.accelerated),
        s.whitening_cutoff,
        approx.layout.map_or(0, |l| l.count),
        if assignments.is_empty() { "-".to_string() } else { assignments.join(",") },
    );
    out.push('\n');
    for row in &approx.weights {
        let line: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

fn line_err(line: usize, message: impl Into<String>) -> Error {
    Error::Line { line, message: message.into() }
}

pub fn decode_approximator(text: &str) -> Result<LinearApproximator> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| line_err(1, "missing header"))?;
    let mut words = header.split_whitespace();
    if words.next() != Some(MAGIC) {
        return Err(line_err(1, "bad approximator magic"));
    }
    let fields: HashMap<&str, &str> = words
        .map(|w| w.split_once('=').ok_or_else(|| line_err(1, format!("malformed field `{w}`"))))
        .collect::<Result<_>>()?;
    let get = |k: &str| fields.get(k).copied().ok_or_else(|| line_err(1, format!("missing `{k}`")));
    fn num<T: std::str::FromStr>(s: &str, k: &str) -> Result<T> {
        s.parse().map_err(|_| line_err(1, format!("invalid `{k}` value `{s}`")))
    }
    let triple = |k: &str| -> Result<[f64; 3]> {
        let v: Vec<f64> = get(k)?.split(',').map(|x| num(x, k)).collect::<Result<_>>()?;
        v.try_into().map_err(|_| line_err(1, format!("`{k}` needs three values")))
    };
    let flag = |k: &str| -> Result<bool> {
        match get(k)? {
            "0" => Ok(false),
            "1" => Ok(true),
            other => Err(line_err(1, format!("invalid `{k}` value `{other}`"))),
        }
    };

    let horizon: usize = num(get("horizon")?, "horizon")?;
    let p: usize = num(get("p")?, "p")?;
    let a: usize = num(get("a")?, "a")?;
    let spec = FeatureSpec {
        kind: FeatureKind::parse(get("kind")?).map_err(|e| line_err(1, e.to_string()))?,
        patch_side: num(get("patch")?, "patch")?,
        dict_seed: num(get("dict_seed")?, "dict_seed")?,
        model: CopulaModel { rho: num(get("rho")?, "rho")?, alpha: triple("alpha")?, beta: triple("beta")? },
        normalize_atoms: flag("normalize")?,
        l1: L1Config {
            lambda: num(get("lambda")?, "lambda")?,
            max_iter: num(get("l1_max_iter")?, "l1_max_iter")?,
            tol: num(get("l1_tol")?, "l1_tol")?,
            accelerated: flag("l1_accelerated")?,
        },
        whitening_cutoff: num(get("cutoff")?, "cutoff")?,
    };
    spec.model.validate().map_err(|e| line_err(1, e.to_string()))?;
    let expected_p = spec.feature_len(a).map_err(|e| line_err(1, e.to_string()))?;
    if horizon == 0 || a == 0 || p != expected_p {
        return Err(line_err(1, format!("inconsistent shape: horizon={horizon} p={p} a={a}, expected p={expected_p}")));
    }
    let partitions: usize = num(get("partitions")?, "partitions")?;
    let layout = if partitions == 0 {
        None
    } else {
        Some(PartitionLayout::new(p, partitions).map_err(|e| line_err(1, e.to_string()))?)
    };
    let mut assignments = Vec::new();
    let assign = get("assign")?;
    if assign != "-" {
        for item in assign.split(',') {
            let parts: Vec<&str> = item.split(':').collect();
            if parts.len() != 3 {
                return Err(line_err(1, format!("malformed assignment `{item}`")));
            }
            let i: usize = num(parts[2], "assign")?;
            if layout.is_none_or(|l| i >= l.count) {
                return Err(line_err(1, format!("assignment `{item}` names a missing partition")));
            }
            assignments.push((Point::new(num(parts[0], "assign")?, num(parts[1], "assign")?), i));
        }
    }

    let mut weights = Vec::with_capacity(horizon.min(1 << 16));
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        if line.trim().is_empty() {
            continue;
        }
        if weights.len() == horizon {
            return Err(line_err(line_no, "more weight rows than stages"));
        }
        let row: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| line_err(line_no, format!("invalid weight `{t}`"))))
            .collect::<Result<_>>()?;
        if row.len() != p {
            return Err(line_err(line_no, format!("expected {p} weights, found {}", row.len())));
        }
        weights.push(row);
    }
    if weights.len() != horizon {
        return Err(line_err(horizon + 1, format!("expected {horizon} weight rows, found {}", weights.len())));
    }
    Ok(LinearApproximator { spec, a, weights, layout, assignments })
}
