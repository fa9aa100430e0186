//! Hybrid A* over a heading-binned lattice.
//!
//! Every expansion starts from the snapped state of its node (cell centre,
//! bin-centre heading), except the root which keeps the true start pose.
//! The primitive graph therefore does not depend on search order, which
//! lets [`reachable_bfs`] serve as an exact brute-force reference.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap, VecDeque};
use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use super::dubins::DubinsPath;
use crate::geometry::{segment_distance, Polyline2D, Vec2};
use crate::scene::{BevRange, Pose2};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VehicleParams {
    pub length: f64,
    pub width: f64,
    pub min_turn_radius: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            length: 4.5,
            width: 1.9,
            min_turn_radius: 5.0,
        }
    }
}

impl VehicleParams {
    /// Offsets along the heading of the collision discs.
    fn disc_offsets(&self) -> [f64; 3] {
        let d = self.length / 3.0;
        [-d, 0.0, d]
    }

    /// Radius of each of the three discs covering the footprint.
    pub fn disc_radius(&self) -> f64 {
        (self.length / 6.0).hypot(self.width / 2.0)
    }

    /// Corners of the footprint rectangle centred at `p`.
    pub fn footprint(&self, p: Pose2) -> [Vec2; 4] {
        let (s, c) = p.heading.sin_cos();
        let f = Vec2::new(c, s) * (self.length / 2.0);
        let l = Vec2::new(-s, c) * (self.width / 2.0);
        let o = p.position();
        [o + f + l, o - f + l, o - f - l, o + f - l]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerParams {
    pub cell: f64,
    pub heading_bins: usize,
    pub node_budget: usize,
    /// Distance within which a Dubins connection to the goal is tried (m).
    pub analytic_radius: f64,
    pub goal_tolerance: f64,
    /// Heading tolerance at the goal (rad).
    pub goal_heading_tolerance: f64,
    pub vehicle: VehicleParams,
}

impl Default for PlannerParams {
    fn default() -> Self {
        Self {
            cell: 0.25,
            heading_bins: 36,
            node_budget: 50_000,
            analytic_radius: 10.0,
            goal_tolerance: 0.5,
            goal_heading_tolerance: 10f64.to_radians(),
            vehicle: VehicleParams::default(),
        }
    }
}

impl PlannerParams {
    fn bin_width(&self) -> f64 {
        TAU / self.heading_bins as f64
    }

    /// Primitive arc length: one heading bin at the minimum radius.
    pub fn step(&self) -> f64 {
        self.vehicle.min_turn_radius * self.bin_width()
    }

    /// Inflation applied to walls: the disc radius plus half a cell diagonal,
    /// so that cell-centre lookups stay conservative.
    pub fn inflation(&self) -> f64 {
        self.vehicle.disc_radius() + self.cell * std::f64::consts::FRAC_1_SQRT_2
    }
}

/// Boolean occupancy on a regular grid; outside the grid counts as blocked.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    pub x_min: f64,
    pub y_min: f64,
    pub cell: f64,
    pub nx: usize,
    pub ny: usize,
    occ: Vec<bool>,
}

impl OccupancyGrid {
    pub fn empty(range: &BevRange, cell: f64) -> Self {
        let nx = ((range.x_max - range.x_min) / cell).ceil() as usize;
        let ny = ((range.y_max - range.y_min) / cell).ceil() as usize;
        Self {
            x_min: range.x_min,
            y_min: range.y_min,
            cell,
            nx,
            ny,
            occ: vec![false; nx * ny],
        }
    }

    /// Marks every cell whose centre lies within `inflation` of a wall.
    pub fn from_walls(walls: &[&Polyline2D], range: &BevRange, cell: f64, inflation: f64) -> Self {
        let mut g = Self::empty(range, cell);
        for w in walls {
            for s in w.points().windows(2) {
                let lo = Vec2::new(
                    s[0].x.min(s[1].x) - inflation,
                    s[0].y.min(s[1].y) - inflation,
                );
                let hi = Vec2::new(
                    s[0].x.max(s[1].x) + inflation,
                    s[0].y.max(s[1].y) + inflation,
                );
                let (Some((i0, j0)), Some((i1, j1))) = (g.clamped(lo), g.clamped(hi)) else {
                    continue;
                };
                for j in j0..=j1 {
                    for i in i0..=i1 {
                        let c = g.center(i, j);
                        if !g.occ[j * g.nx + i] && segment_distance(c, c, s[0], s[1]) <= inflation {
                            g.occ[j * g.nx + i] = true;
                        }
                    }
                }
            }
        }
        g
    }

    fn clamped(&self, p: Vec2) -> Option<(usize, usize)> {
        if self.nx == 0 || self.ny == 0 {
            return None;
        }
        let i = ((p.x - self.x_min) / self.cell)
            .floor()
            .clamp(0.0, (self.nx - 1) as f64) as usize;
        let j = ((p.y - self.y_min) / self.cell)
            .floor()
            .clamp(0.0, (self.ny - 1) as f64) as usize;
        Some((i, j))
    }

    pub fn index(&self, p: Vec2) -> Option<(usize, usize)> {
        let fi = ((p.x - self.x_min) / self.cell).floor();
        let fj = ((p.y - self.y_min) / self.cell).floor();
        if !(fi >= 0.0 && fj >= 0.0 && fi < self.nx as f64 && fj < self.ny as f64) {
            return None;
        }
        Some((fi as usize, fj as usize))
    }

    pub fn center(&self, i: usize, j: usize) -> Vec2 {
        Vec2::new(
            self.x_min + (i as f64 + 0.5) * self.cell,
            self.y_min + (j as f64 + 0.5) * self.cell,
        )
    }

    pub fn set(&mut self, i: usize, j: usize, v: bool) {
        self.occ[j * self.nx + i] = v;
    }

    pub fn is_occupied(&self, i: usize, j: usize) -> bool {
        self.occ[j * self.nx + i]
    }

    pub fn blocked(&self, p: Vec2) -> bool {
        self.index(p).is_none_or(|(i, j)| self.occ[j * self.nx + i])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanningProblem {
    pub start: Pose2,
    pub goals: Vec<Pose2>,
    pub grid: OccupancyGrid,
}

impl PlanningProblem {
    /// Problem over walls rasterized from `boundaries` (typically predicted).
    pub fn from_boundaries(
        boundaries: &[&Polyline2D],
        range: &BevRange,
        start: Pose2,
        goals: Vec<Pose2>,
        params: &PlannerParams,
    ) -> Self {
        let grid = OccupancyGrid::from_walls(boundaries, range, params.cell, params.inflation());
        Self { start, goals, grid }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GoalStatus {
    Reached,
    Unreachable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub goal: Pose2,
    pub status: GoalStatus,
    /// Empty when unreachable.
    pub poses: Vec<Pose2>,
}

impl Trajectory {
    pub fn reached(&self) -> bool {
        self.status == GoalStatus::Reached
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanResult {
    pub trajectories: Vec<Trajectory>,
    pub start_blocked: bool,
    pub expansions: usize,
}

impl PlanResult {
    pub fn any_unreachable(&self) -> bool {
        self.trajectories.iter().any(|t| !t.reached())
    }
}

type Key = (usize, usize, usize);

fn wrap(a: f64) -> f64 {
    (a + std::f64::consts::PI).rem_euclid(TAU) - std::f64::consts::PI
}

struct Lattice<'a> {
    p: &'a PlannerParams,
    grid: &'a OccupancyGrid,
}

impl Lattice<'_> {
    fn key(&self, s: Pose2) -> Option<Key> {
        let (i, j) = self.grid.index(s.position())?;
        let b =
            (s.heading.rem_euclid(TAU) / self.p.bin_width()).round() as usize % self.p.heading_bins;
        Some((i, j, b))
    }

    fn snapped(&self, k: Key) -> Pose2 {
        let c = self.grid.center(k.0, k.1);
        Pose2::new(c.x, c.y, wrap(k.2 as f64 * self.p.bin_width()))
    }

    fn pose_free(&self, s: Pose2) -> bool {
        let (sn, cs) = s.heading.sin_cos();
        self.p
            .vehicle
            .disc_offsets()
            .iter()
            .all(|&d| !self.grid.blocked(Vec2::new(s.x + cs * d, s.y + sn * d)))
    }

    /// Samples of primitive `m` (0 left, 1 straight, 2 right) from `s`,
    /// excluding `s`, spaced at most one cell apart.
    fn primitive(&self, s: Pose2, m: usize) -> Vec<Pose2> {
        let len = self.p.step();
        let n = (len / self.p.cell).ceil() as usize;
        let r = self.p.vehicle.min_turn_radius;
        (1..=n)
            .map(|i| {
                let t = len * i as f64 / n as f64;
                match m {
                    1 => Pose2::new(
                        s.x + s.heading.cos() * t,
                        s.y + s.heading.sin() * t,
                        s.heading,
                    ),
                    _ => {
                        let sg = if m == 0 { 1.0 } else { -1.0 };
                        let h = s.heading + sg * t / r;
                        Pose2::new(
                            s.x + sg * r * (h.sin() - s.heading.sin()),
                            s.y - sg * r * (h.cos() - s.heading.cos()),
                            wrap(h),
                        )
                    }
                }
            })
            .collect()
    }

    /// Collision-free successors as (key, samples).
    fn successors(&self, s: Pose2) -> Vec<(Key, Vec<Pose2>)> {
        (0..3)
            .filter_map(|m| {
                let samples = self.primitive(s, m);
                if !samples.iter().all(|&q| self.pose_free(q)) {
                    return None;
                }
                let k = self.key(*samples.last()?)?;
                Some((k, samples))
            })
            .collect()
    }

    fn at_goal(&self, s: Pose2, g: Pose2) -> bool {
        s.position().dist(g.position()) <= self.p.goal_tolerance
            && wrap(s.heading - g.heading).abs() <= self.p.goal_heading_tolerance
    }

    /// Direct or analytic connection from `s` to `g`: poses after `s`.
    fn connect(&self, s: Pose2, g: Pose2) -> Option<Vec<Pose2>> {
        if self.at_goal(s, g) {
            return Some(Vec::new());
        }
        if s.position().dist(g.position()) > self.p.analytic_radius {
            return None;
        }
        let path = DubinsPath::shortest(s, g, self.p.vehicle.min_turn_radius)?;
        let poses = path.poses(self.p.cell);
        poses[1..]
            .iter()
            .all(|&q| self.pose_free(q))
            .then(|| poses[1..].to_vec())
    }
}

/// Octile distances to the goal cell over free cells; `INFINITY` marks cells
/// the goal cannot be reached from.
fn grid_distances(grid: &OccupancyGrid, goal: Vec2) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; grid.nx * grid.ny];
    let Some((gi, gj)) = grid.index(goal) else {
        return dist;
    };
    #[derive(PartialEq)]
    struct E(f64, usize);
    impl Eq for E {}
    impl PartialOrd for E {
        fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
            Some(self.cmp(o))
        }
    }
    impl Ord for E {
        fn cmp(&self, o: &Self) -> Ordering {
            o.0.total_cmp(&self.0).then(o.1.cmp(&self.1))
        }
    }
    let mut heap = BinaryHeap::new();
    dist[gj * grid.nx + gi] = 0.0;
    heap.push(E(0.0, gj * grid.nx + gi));
    while let Some(E(d, idx)) = heap.pop() {
        if d > dist[idx] {
            continue;
        }
        let (i, j) = ((idx % grid.nx) as i64, (idx / grid.nx) as i64);
        for (di, dj) in [
            (-1, 0),
            (1, 0),
            (0, -1),
            (0, 1),
            (-1, -1),
            (-1, 1),
            (1, -1),
            (1, 1),
        ] {
            let (ni, nj) = (i + di, j + dj);
            if ni < 0 || nj < 0 || ni >= grid.nx as i64 || nj >= grid.ny as i64 {
                continue;
            }
            let n = nj as usize * grid.nx + ni as usize;
            if grid.occ[n] {
                continue;
            }
            let nd = d + grid.cell
                * if di != 0 && dj != 0 {
                    std::f64::consts::SQRT_2
                } else {
                    1.0
                };
            if nd < dist[n] {
                dist[n] = nd;
                heap.push(E(nd, n));
            }
        }
    }
    dist
}

struct Node {
    parent: Option<Key>,
    /// Poses from the parent's expansion state up to this node, excluding
    /// the parent state.
    samples: Vec<Pose2>,
}

fn reconstruct(
    nodes: &HashMap<Key, Node>,
    lat: &Lattice,
    start: Pose2,
    end: Key,
    tail: Vec<Pose2>,
) -> Vec<Pose2> {
    let mut chain = vec![end];
    while let Some(p) = nodes[chain.last().unwrap()].parent {
        chain.push(p);
    }
    chain.reverse();
    let mut poses = vec![start];
    for k in &chain[1..] {
        poses.extend_from_slice(&nodes[k].samples);
        poses.push(lat.snapped(*k));
    }
    poses.extend(tail);
    poses
}

#[derive(PartialEq)]
struct Open(f64, u64, Key);
impl Eq for Open {}
impl PartialOrd for Open {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Open {
    fn cmp(&self, o: &Self) -> Ordering {
        o.0.total_cmp(&self.0).then(o.1.cmp(&self.1))
    }
}

fn plan_one(
    lat: &Lattice,
    start: Pose2,
    root: Key,
    goal: Pose2,
    expansions: &mut usize,
) -> Option<Vec<Pose2>> {
    let h2d = grid_distances(lat.grid, goal.position());
    let h = |s: Pose2| -> f64 {
        let e = s.position().dist(goal.position());
        match lat.grid.index(s.position()) {
            Some((i, j)) => e.max(h2d[j * lat.grid.nx + i]),
            None => f64::INFINITY,
        }
    };
    let mut nodes: HashMap<Key, Node> = HashMap::new();
    let mut g: HashMap<Key, f64> = HashMap::new();
    let mut closed: HashMap<Key, bool> = HashMap::new();
    let mut open = BinaryHeap::new();
    let mut tick = 0u64;
    nodes.insert(
        root,
        Node {
            parent: None,
            samples: Vec::new(),
        },
    );
    g.insert(root, 0.0);
    open.push(Open(h(start), tick, root));
    let step = lat.p.step();
    let mut budget = lat.p.node_budget;
    while let Some(Open(_, _, k)) = open.pop() {
        if closed.insert(k, true).is_some() {
            continue;
        }
        if budget == 0 {
            break;
        }
        budget -= 1;
        *expansions += 1;
        let s = if k == root { start } else { lat.snapped(k) };
        if let Some(tail) = lat.connect(s, goal) {
            return Some(reconstruct(&nodes, lat, start, k, tail));
        }
        let gk = g[&k];
        for (nk, samples) in lat.successors(s) {
            if closed.contains_key(&nk) {
                continue;
            }
            let ng = gk + step;
            if g.get(&nk).is_none_or(|&old| ng < old) {
                let hn = h(lat.snapped(nk));
                if !hn.is_finite() {
                    continue;
                }
                g.insert(nk, ng);
                nodes.insert(
                    nk,
                    Node {
                        parent: Some(k),
                        samples,
                    },
                );
                tick += 1;
                open.push(Open(ng + hn, tick, nk));
            }
        }
    }
    None
}

/// Plans to every goal independently.
pub fn plan(problem: &PlanningProblem, params: &PlannerParams) -> PlanResult {
    let lat = Lattice {
        p: params,
        grid: &problem.grid,
    };
    let unreachable = |g: &Pose2| Trajectory {
        goal: *g,
        status: GoalStatus::Unreachable,
        poses: Vec::new(),
    };
    let root = lat.key(problem.start);
    let (Some(root), true) = (root, lat.pose_free(problem.start)) else {
        return PlanResult {
            trajectories: problem.goals.iter().map(unreachable).collect(),
            start_blocked: true,
            expansions: 0,
        };
    };
    let mut expansions = 0;
    let trajectories = problem
        .goals
        .iter()
        .map(
            |g| match plan_one(&lat, problem.start, root, *g, &mut expansions) {
                Some(poses) => Trajectory {
                    goal: *g,
                    status: GoalStatus::Reached,
                    poses,
                },
                None => unreachable(g),
            },
        )
        .collect();
    PlanResult {
        trajectories,
        start_blocked: false,
        expansions,
    }
}

/// Per-goal reachability by exhaustive breadth-first search over the same
/// primitive graph and goal test, without a node budget.
pub fn reachable_bfs(problem: &PlanningProblem, params: &PlannerParams) -> Vec<bool> {
    let lat = Lattice {
        p: params,
        grid: &problem.grid,
    };
    let root = match lat.key(problem.start) {
        Some(r) if lat.pose_free(problem.start) => r,
        _ => return vec![false; problem.goals.len()],
    };
    let mut seen = std::collections::HashSet::new();
    let mut queue = VecDeque::new();
    seen.insert(root);
    queue.push_back(root);
    let mut reached = vec![false; problem.goals.len()];
    while let Some(k) = queue.pop_front() {
        let s = if k == root {
            problem.start
        } else {
            lat.snapped(k)
        };
        for (gi, g) in problem.goals.iter().enumerate() {
            if !reached[gi] && lat.connect(s, *g).is_some() {
                reached[gi] = true;
            }
        }
        if reached.iter().all(|&r| r) {
            break;
        }
        for (nk, _) in lat.successors(s) {
            if seen.insert(nk) {
                queue.push_back(nk);
            }
        }
    }
    reached
}

/// True when no pose of `poses` puts a collision disc on an occupied cell.
pub fn path_is_free(grid: &OccupancyGrid, poses: &[Pose2], params: &PlannerParams) -> bool {
    let lat = Lattice { p: params, grid };
    poses.iter().all(|&q| lat.pose_free(q))
}
