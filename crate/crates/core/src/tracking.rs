//! Restricted-control target tracking: state enumeration, exact backward DP,
//! the greedy baseline, and the one-dimensional problems with closed forms.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::image::{ImageSequence, Point};

/// The five moves for region side `a`, in tie-break order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ControlSet {
    pub a: i64,
}

impl ControlSet {
    pub fn new(a: usize) -> Self {
        ControlSet { a: a as i64 }
    }

    pub fn controls(&self) -> [Point; 5] {
        let a = self.a;
        [Point::new(-a, 0), Point::new(a, 0), Point::new(0, a), Point::new(0, -a), Point::new(0, 0)]
    }
}

pub fn step(x: Point, u: Point) -> Point {
    x + u
}

/// A sequence to track over, the region side and the initial state. The
/// horizon is the frame count.
#[derive(Clone, Debug, PartialEq)]
pub struct TrackingTask {
    pub seq: ImageSequence,
    pub a: usize,
    pub x1: Point,
}

impl TrackingTask {
    pub fn new(seq: ImageSequence, a: usize, x1: Point) -> Result<Self> {
        if a == 0 {
            return Err(Error::invalid("region side must be positive"));
        }
        if !seq.frame(0).fits_region(x1, a) {
            return Err(Error::RegionOutOfBounds { k: 0, x: x1.x, y: x1.y, side: a });
        }
        Ok(TrackingTask { seq, a, x1 })
    }

    pub fn horizon(&self) -> usize {
        self.seq.len()
    }

    pub fn controls(&self) -> ControlSet {
        ControlSet::new(self.a)
    }

    /// Target for zero-based stage `k`.
    pub fn target(&self, k: usize) -> Point {
        self.seq.target(k)
    }

    pub fn admissible(&self, x: Point) -> bool {
        self.seq.frame(0).fits_region(x, self.a)
    }

    pub fn stage_cost(&self, k: usize, x: Point) -> f64 {
        x.squared_distance(self.target(k)) as f64
    }

    /// In-bounds `(u, x + u)` pairs in tie-break order.
    pub fn successors(&self, x: Point) -> impl Iterator<Item = (Point, Point)> + '_ {
        self.controls()
            .controls()
            .into_iter()
            .map(move |u| (u, step(x, u)))
            .filter(move |(_, y)| self.admissible(*y))
    }
}

/// Reachable states per stage, in breadth-first discovery order.
#[derive(Clone, Debug, PartialEq)]
pub struct StageStates {
    stages: Vec<Vec<Point>>,
    index: Vec<HashMap<Point, usize>>,
}

impl StageStates {
    pub fn stage(&self, k: usize) -> &[Point] {
        &self.stages[k]
    }

    pub fn len(&self) -> usize {
        self.stages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stages.is_empty()
    }

    pub fn counts(&self) -> Vec<usize> {
        self.stages.iter().map(Vec::len).collect()
    }

    pub fn position(&self, k: usize, x: Point) -> Option<usize> {
        self.index.get(k)?.get(&x).copied()
    }
}

pub fn enumerate_states(task: &TrackingTask) -> StageStates {
    let n = task.horizon();
    let mut stages = vec![vec![task.x1]];
    let mut index = vec![HashMap::from([(task.x1, 0)])];
    for k in 1..n {
        let mut next = Vec::new();
        let mut seen = HashMap::new();
        for &x in &stages[k - 1] {
            for (_, y) in task.successors(x) {
                seen.entry(y).or_insert_with(|| {
                    next.push(y);
                    next.len() - 1
                });
            }
        }
        stages.push(next);
        index.push(seen);
    }
    StageStates { stages, index }
}

/// Exact cost-to-go and minimizing control for every reachable `(k, x)`.
/// Stages are zero-based; `j(N-1, x)` is the terminal stage cost.
#[derive(Clone, Debug, PartialEq)]
pub struct CostToGoTable {
    pub states: StageStates,
    j: Vec<Vec<f64>>,
    u: Vec<Vec<Point>>,
}

impl CostToGoTable {
    pub fn cost_to_go(&self, k: usize, x: Point) -> Option<f64> {
        self.states.position(k, x).map(|i| self.j[k][i])
    }

    pub fn control(&self, k: usize, x: Point) -> Option<Point> {
        self.states.position(k, x).map(|i| self.u[k][i])
    }

    pub fn optimal_cost(&self) -> f64 {
        self.j[0][0]
    }

    /// Rows `(k, x, J, u)` with one-based `k`, in stage order.
    pub fn rows(&self) -> Vec<(usize, Point, f64, Point)> {
        let mut out = Vec::new();
        for k in 0..self.states.len() {
            for (i, &x) in self.states.stage(k).iter().enumerate() {
                out.push((k + 1, x, self.j[k][i], self.u[k][i]));
            }
        }
        out
    }
}

/// Minimizes `cost(k, x) + next(x + u)` over admissible `u` in tie-break
/// order; strict improvement is needed to displace an earlier control.
pub(crate) fn best_control<F>(task: &TrackingTask, x: Point, mut next: F) -> (Point, f64)
where
    F: FnMut(Point) -> f64,
{
    let mut best: Option<(Point, f64)> = None;
    for (u, y) in task.successors(x) {
        let v = next(y);
        if best.is_none_or(|(_, b)| v < b) {
            best = Some((u, v));
        }
    }
    // The stay control keeps an admissible state admissible.
    best.expect("stay control is always admissible")
}

pub fn solve_exact_dp(task: &TrackingTask) -> CostToGoTable {
    let states = enumerate_states(task);
    let n = task.horizon();
    let mut j: Vec<Vec<f64>> = vec![Vec::new(); n];
    let mut u: Vec<Vec<Point>> = vec![Vec::new(); n];
    for k in (0..n).rev() {
        let mut jk = Vec::with_capacity(states.stage(k).len());
        let mut uk = Vec::with_capacity(states.stage(k).len());
        for &x in states.stage(k) {
            let (best_u, tail) = if k + 1 == n {
                best_control(task, x, |_| 0.0)
            } else {
                best_control(task, x, |y| j[k + 1][states.position(k + 1, y).expect("successor enumerated")])
            };
            jk.push(task.stage_cost(k, x) + tail);
            uk.push(best_u);
        }
        j[k] = jk;
        u[k] = uk;
    }
    CostToGoTable { states, j, u }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    /// `N - 1` applied controls.
    pub controls: Vec<Point>,
    /// `N` visited states.
    pub states: Vec<Point>,
    pub stage_costs: Vec<f64>,
    pub total_cost: f64,
}

/// Runs a policy forward from `x1`. The policy maps `(k, x_k)` to `u_k` for
/// `k < N - 1`; inadmissible choices are an error.
pub fn rollout_policy<F>(task: &TrackingTask, mut policy: F) -> Result<Trajectory>
where
    F: FnMut(usize, Point) -> Point,
{
    let n = task.horizon();
    let mut x = task.x1;
    let mut states = vec![x];
    let mut controls = Vec::with_capacity(n.saturating_sub(1));
    for k in 0..n - 1 {
        let u = policy(k, x);
        let y = step(x, u);
        if !task.controls().controls().contains(&u) || !task.admissible(y) {
            return Err(Error::invalid(format!("policy chose inadmissible control {u} at stage {}", k + 1)));
        }
        controls.push(u);
        states.push(y);
        x = y;
    }
    let stage_costs: Vec<f64> = states.iter().enumerate().map(|(k, &x)| task.stage_cost(k, x)).collect();
    let total_cost = stage_costs.iter().sum();
    Ok(Trajectory { controls, states, stage_costs, total_cost })
}

pub fn rollout(task: &TrackingTask, table: &CostToGoTable) -> Result<Trajectory> {
    rollout_policy(task, |k, x| table.control(k, x).expect("rollout stays on enumerated states"))
}

pub fn solve_greedy(task: &TrackingTask) -> Trajectory {
    rollout_policy(task, |k, x| best_control(task, x, |y| task.stage_cost(k + 1, y)).0)
        .expect("greedy picks admissible controls")
}

/// Exact-DP cost divided by greedy cost.
pub fn exact_cost_ratio(task: &TrackingTask) -> f64 {
    ratio(solve_exact_dp(task).optimal_cost(), solve_greedy(task).total_cost)
}

/// `cost / greedy`, taking `0 / 0` as 1.
pub fn ratio(cost: f64, greedy: f64) -> f64 {
    if greedy == 0.0 {
        if cost == 0.0 { 1.0 } else { f64::INFINITY }
    } else {
        cost / greedy
    }
}

/// Solution of a one-dimensional problem with controls `{0, 1}` and expected
/// absolute-error stage cost.
#[derive(Clone, Debug, PartialEq)]
pub struct OneDimSolution {
    pub cost: f64,
    pub controls: Vec<i64>,
    pub states: Vec<i64>,
}

/// Target distributions per stage as `(location, probability)` pairs.
pub type TargetLaw = Vec<Vec<(i64, f64)>>;

fn expected_abs(law: &[(i64, f64)], x: i64) -> f64 {
    law.iter().map(|&(w, p)| p * (x - w).abs() as f64).sum()
}

/// Backward recursion `J_k(x) = min[J_{k+1}(x), J_{k+1}(x+1)] + E|x - w_k|`
/// over the states reachable from `x0`. Ties pick `u = 0`.
pub fn solve_1d_expected(law: &TargetLaw, x0: i64) -> Result<OneDimSolution> {
    let n = law.len();
    if n == 0 {
        return Err(Error::EmptySequence);
    }
    // j[k][i] is the cost-to-go of state x0 + i at stage k (i <= k).
    let mut j: Vec<Vec<f64>> = vec![Vec::new(); n + 1];
    let mut u: Vec<Vec<i64>> = vec![Vec::new(); n];
    j[n] = vec![0.0; n + 1];
    for k in (0..n).rev() {
        for i in 0..=k {
            let (stay, advance) = (j[k + 1][i], j[k + 1][i + 1]);
            let (choice, tail) = if advance < stay { (1, advance) } else { (0, stay) };
            j[k].push(tail + expected_abs(&law[k], x0 + i as i64));
            u[k].push(choice);
        }
    }
    let mut states = vec![x0];
    let mut controls = Vec::new();
    let mut i = 0usize;
    for uk in u.iter().take(n - 1) {
        let c = uk[i];
        controls.push(c);
        i += c as usize;
        states.push(x0 + i as i64);
    }
    Ok(OneDimSolution { cost: j[0][0], controls, states })
}

/// Picks `u` minimizing the next expected stage cost only. Ties pick `u = 0`.
pub fn solve_1d_greedy(law: &TargetLaw, x0: i64) -> Result<OneDimSolution> {
    if law.is_empty() {
        return Err(Error::EmptySequence);
    }
    let mut x = x0;
    let mut states = vec![x];
    let mut controls = Vec::new();
    let mut cost = expected_abs(&law[0], x);
    for next in &law[1..] {
        let c = if expected_abs(next, x + 1) < expected_abs(next, x) { 1 } else { 0 };
        x += c;
        controls.push(c);
        states.push(x);
        cost += expected_abs(next, x);
    }
    Ok(OneDimSolution { cost, controls, states })
}

fn point_masses(w: &[i64]) -> TargetLaw {
    w.iter().map(|&w| vec![(w, 1.0)]).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct OneDimComparison {
    pub dp: OneDimSolution,
    pub greedy: OneDimSolution,
}

/// Known target positions `w_0..w_{N-1}`, tracked from `x0`.
pub fn solve_1d_deterministic(w: &[i64], x0: i64) -> Result<OneDimComparison> {
    if w.iter().any(|&v| v < 0) || x0 < 0 {
        return Err(Error::invalid("states and targets are nonnegative integers"));
    }
    let law = point_masses(w);
    Ok(OneDimComparison { dp: solve_1d_expected(&law, x0)?, greedy: solve_1d_greedy(&law, x0)? })
}

/// Three-stage problem with `w_0 = 0`, `w_1 in {0, 1}` (0 with prob. `p1`)
/// and `w_2 in {1, 2}` (2 with prob. `p2`).
pub fn solve_1d_stochastic(p1: f64, p2: f64) -> Result<OneDimComparison> {
    for p in [p1, p2] {
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::invalid(format!("probability {p} is outside (0, 1]")));
        }
    }
    let law: TargetLaw = vec![vec![(0, 1.0)], vec![(0, p1), (1, 1.0 - p1)], vec![(1, 1.0 - p2), (2, p2)]];
    Ok(OneDimComparison { dp: solve_1d_expected(&law, 0)?, greedy: solve_1d_greedy(&law, 0)? })
}

/// The deterministic family `w = (0, 0, 2, 3, ..., N-1)`.
pub fn advancing_targets(n: usize) -> Vec<i64> {
    (0..n as i64).map(|k| if k < 2 { 0 } else { k }).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::{Frame, ImageSequence};
    use proptest::prelude::*;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn blank_task(width: usize, height: usize, a: usize, x1: Point, targets: Vec<Point>) -> TrackingTask {
        let frames = vec![Frame::new(width, height, vec![0.0; width * height]).unwrap(); targets.len()];
        TrackingTask::new(ImageSequence::new(frames, targets).unwrap(), a, x1).unwrap()
    }

    fn random_task(seed: u64, n: usize) -> TrackingTask {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (w, h) = (rng.random_range(4..14usize), rng.random_range(4..14usize));
        let a = rng.random_range(1..4usize).min(w).min(h);
        let x1 = Point::new(rng.random_range(0..=(w - a) as i64), rng.random_range(0..=(h - a) as i64));
        let targets = (0..n).map(|_| Point::new(rng.random_range(0..w as i64), rng.random_range(0..h as i64))).collect();
        blank_task(w, h, a, x1, targets)
    }

    /// Minimum over every control sequence, skipping ones that leave the frame.
    fn brute_force(task: &TrackingTask) -> f64 {
        fn go(task: &TrackingTask, k: usize, x: Point, acc: f64, best: &mut f64) {
            let acc = acc + task.stage_cost(k, x);
            if k + 1 == task.horizon() {
                *best = best.min(acc);
                return;
            }
            for u in task.controls().controls() {
                let y = x + u;
                if task.admissible(y) {
                    go(task, k + 1, y, acc, best);
                }
            }
        }
        let mut best = f64::INFINITY;
        go(task, 0, task.x1, 0.0, &mut best);
        best
    }

    #[test]
    fn step_examples() {
        let u = ControlSet::new(10).controls();
        assert_eq!(step(Point::new(3, 4), u[1]), Point::new(13, 4));
        assert_eq!(step(Point::new(3, 4), u[4]), Point::new(3, 4));
        assert_eq!(step(Point::new(0, 0), u[0]), Point::new(-10, 0));
    }

    #[test]
    fn diamond_counts() {
        let task = blank_task(200, 200, 2, Point::new(100, 100), vec![Point::new(0, 0); 5]);
        assert_eq!(enumerate_states(&task).counts(), vec![1, 5, 13, 25, 41]);
    }

    #[test]
    fn corner_start_has_three_successors() {
        let task = blank_task(50, 50, 10, Point::new(0, 0), vec![Point::new(0, 0); 2]);
        let states = enumerate_states(&task);
        assert_eq!(states.counts(), vec![1, 3]);
        assert_eq!(states.stage(1), &[Point::new(10, 0), Point::new(0, 10), Point::new(0, 0)]);
    }

    #[test]
    fn single_stage_cost() {
        let task = blank_task(8, 8, 2, Point::new(1, 1), vec![Point::new(4, 5)]);
        assert_eq!(solve_exact_dp(&task).optimal_cost(), 25.0);
    }

    #[test]
    fn stationary_target_is_free() {
        let x1 = Point::new(3, 3);
        let task = blank_task(10, 10, 2, x1, vec![x1; 4]);
        let g = solve_greedy(&task);
        assert_eq!(g.total_cost, 0.0);
        assert!(g.controls.iter().all(|&u| u == Point::new(0, 0)));
        let r = rollout(&task, &solve_exact_dp(&task)).unwrap();
        assert!(r.states.iter().all(|&x| x == x1));
    }

    #[test]
    fn lookahead_beats_greedy_in_2d() {
        // The 1D chase embedded on a row with a = 1.
        let targets = vec![Point::new(0, 0), Point::new(0, 0), Point::new(2, 0), Point::new(3, 0)];
        let task = blank_task(6, 1, 1, Point::new(0, 0), targets);
        let table = solve_exact_dp(&task);
        assert_eq!(table.optimal_cost(), 1.0);
        assert_eq!(solve_greedy(&task).total_cost, 2.0);
        let r = rollout(&task, &table).unwrap();
        assert_eq!(r.states.iter().map(|p| p.x).collect::<Vec<_>>(), vec![0, 1, 2, 3]);
    }

    #[test]
    fn exact_dp_matches_brute_force() {
        for seed in 0..50 {
            let task = random_task(seed, 2 + (seed as usize % 5));
            let table = solve_exact_dp(&task);
            assert_eq!(table.optimal_cost(), brute_force(&task), "seed {seed}");
            assert_eq!(rollout(&task, &table).unwrap().total_cost, table.optimal_cost());
        }
    }

    #[test]
    fn one_dim_deterministic() {
        let s = solve_1d_deterministic(&[0, 0, 2, 3], 0).unwrap();
        assert_eq!((s.dp.cost, s.dp.controls.clone(), s.dp.states.clone()), (1.0, vec![1, 1, 1], vec![0, 1, 2, 3]));
        assert_eq!((s.greedy.cost, s.greedy.controls.clone()), (2.0, vec![0, 1, 1]));
        assert_eq!(s.greedy.states, vec![0, 0, 1, 2]);

        let s = solve_1d_deterministic(&[0, 0, 2], 0).unwrap();
        assert_eq!(s.dp.cost, s.greedy.cost);

        for n in 4..30 {
            let s = solve_1d_deterministic(&advancing_targets(n), 0).unwrap();
            assert_eq!(s.greedy.cost - s.dp.cost, (n - 3) as f64, "N={n}");
        }
    }

    #[test]
    fn one_dim_stochastic_examples() {
        let s = solve_1d_stochastic(0.6, 0.8).unwrap();
        assert!((s.dp.cost - 0.8).abs() < 1e-12);
        assert_eq!(s.dp.controls[0], 1);
        let s = solve_1d_stochastic(0.8, 0.6).unwrap();
        assert!((s.dp.cost - 0.8).abs() < 1e-12);
        assert_eq!(s.dp.controls[0], 0);
        assert!((s.greedy.cost - s.dp.cost).abs() < 1e-12);
        assert!(solve_1d_stochastic(0.0, 0.7).is_err());
        assert!(solve_1d_stochastic(0.7, 1.1).is_err());
    }

    proptest! {
        #[test]
        fn bellman_consistency_and_dominance(seed in any::<u64>(), n in 1usize..6) {
            let task = random_task(seed, n);
            let table = solve_exact_dp(&task);
            for k in 0..n {
                for &x in table.states.stage(k) {
                    let tail = task.successors(x)
                        .map(|(_, y)| if k + 1 == n { 0.0 } else { table.cost_to_go(k + 1, y).unwrap() })
                        .fold(f64::INFINITY, f64::min);
                    prop_assert_eq!(table.cost_to_go(k, x).unwrap(), task.stage_cost(k, x) + tail);
                }
            }
            let greedy = solve_greedy(&task).total_cost;
            prop_assert!(table.optimal_cost() <= greedy);
            prop_assert!(exact_cost_ratio(&task) <= 1.0);
            if n <= 6 {
                prop_assert_eq!(table.optimal_cost(), brute_force(&task));
            }
        }

        #[test]
        fn state_graph_sound_and_complete(seed in any::<u64>(), n in 1usize..6) {
            let task = random_task(seed, n);
            let states = enumerate_states(&task);
            for k in 1..n {
                for &y in states.stage(k) {
                    prop_assert!(task.admissible(y));
                    prop_assert!(states.stage(k - 1).iter().any(|&x| task.successors(x).any(|(_, z)| z == y)));
                }
                for &x in states.stage(k - 1) {
                    for (_, y) in task.successors(x) {
                        prop_assert!(states.position(k, y).is_some());
                    }
                }
            }
        }

        #[test]
        fn stochastic_closed_forms(p1 in 0.5000001f64..=1.0, p2 in 0.5000001f64..=1.0) {
            let s = solve_1d_stochastic(p1, p2).unwrap();
            prop_assert!((s.dp.cost - (1.0 - (p2 - p1).abs())).abs() < 1e-12);
            prop_assert!((s.greedy.cost - (1.0 - (p1 - p2))).abs() < 1e-12);
            if p2 > p1 {
                prop_assert_eq!(s.dp.controls[0], 1);
                prop_assert!((s.greedy.cost - s.dp.cost - 2.0 * (p2 - p1)).abs() < 1e-12);
            }
        }
    }
}
