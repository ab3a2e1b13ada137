//! Growth of a single directed preferential attachment graph.
//!
//! Targets are drawn in O(1) from two flat endpoint arrays. A node `v` appears
//! in `in_targets` exactly `D_in(v)` times, and the arrays always have length
//! `n`, so choosing a uniform entry with probability `1/(1+lambda)` and a
//! uniform node otherwise selects `v` with probability
//! `(D_in(v) + lambda) / ((1 + lambda) n)`. The out-side is symmetric.

use std::collections::HashMap;

use rand::Rng;

use crate::error::{Error, Result};
use crate::params::{IndexWindow, ModelParams};
use crate::rng;

/// Side length of the dense block of [`DegreeCountGrid`].
const DENSE: u32 = 32;

/// Default node budget for [`grow`]: 16 bytes per node, 4 GiB total.
pub const DEFAULT_MAX_NODES: u64 = 1 << 28;

/// Node counts `N(i,j)` keyed by degree pair.
///
/// Low degrees live in a dense block; the rare high-degree pairs spill into a
/// hash map. Zero entries are never stored in the map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DegreeCountGrid {
    dense: Vec<u64>,
    sparse: HashMap<(u32, u32), u64>,
    total: u64,
}

impl Default for DegreeCountGrid {
    fn default() -> Self {
        DegreeCountGrid {
            dense: vec![0; (DENSE * DENSE) as usize],
            sparse: HashMap::new(),
            total: 0,
        }
    }
}

impl DegreeCountGrid {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn get(&self, i: u32, j: u32) -> u64 {
        if i < DENSE && j < DENSE {
            self.dense[(i * DENSE + j) as usize]
        } else {
            self.sparse.get(&(i, j)).copied().unwrap_or(0)
        }
    }

    #[inline]
    fn increment(&mut self, i: u32, j: u32) {
        self.total += 1;
        if i < DENSE && j < DENSE {
            self.dense[(i * DENSE + j) as usize] += 1;
        } else {
            *self.sparse.entry((i, j)).or_insert(0) += 1;
        }
    }

    #[inline]
    fn decrement(&mut self, i: u32, j: u32) {
        self.total -= 1;
        if i < DENSE && j < DENSE {
            self.dense[(i * DENSE + j) as usize] -= 1;
        } else if let Some(c) = self.sparse.get_mut(&(i, j)) {
            *c -= 1;
            if *c == 0 {
                self.sparse.remove(&(i, j));
            }
        } else {
            unreachable!("decrement of empty cell ({i},{j})");
        }
    }

    /// Sum of all counts, i.e. the number of nodes.
    pub fn total(&self) -> u64 {
        self.total
    }

    /// Nonzero cells `(i, j, count)` in lexicographic order.
    pub fn nonzero(&self) -> Vec<(u32, u32, u64)> {
        let mut cells: Vec<(u32, u32, u64)> = (0..DENSE)
            .flat_map(|i| (0..DENSE).map(move |j| (i, j)))
            .filter_map(|(i, j)| {
                let c = self.dense[(i * DENSE + j) as usize];
                (c > 0).then_some((i, j, c))
            })
            .chain(self.sparse.iter().map(|(&(i, j), &c)| (i, j, c)))
            .collect();
        cells.sort_unstable();
        cells
    }

    /// Counts at the window coordinates, in window order.
    pub fn window_counts(&self, window: &IndexWindow) -> Vec<u64> {
        window
            .coords()
            .iter()
            .map(|&(i, j)| self.get(i, j))
            .collect()
    }
}

/// Which kind of attachment a step performed, and the degree of the
/// existing endpoint before the step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepEvent {
    /// New node sends an edge to an existing node chosen by in-degree.
    In { node: u32, from: (u32, u32) },
    /// Existing node chosen by out-degree sends an edge to the new node.
    Out { node: u32, from: (u32, u32) },
}

/// The full state of one growing graph.
#[derive(Debug, Clone)]
pub struct GraphState {
    degrees: Vec<(u32, u32)>,
    in_targets: Vec<u32>,
    out_sources: Vec<u32>,
    counts: DegreeCountGrid,
}

impl GraphState {
    /// One node with a self-loop, degree `(1,1)`. The loop contributes one
    /// entry to each endpoint array but is not an edge.
    pub fn init() -> Self {
        Self::with_capacity(1)
    }

    pub fn with_capacity(n: usize) -> Self {
        let mut degrees = Vec::with_capacity(n);
        let mut in_targets = Vec::with_capacity(n);
        let mut out_sources = Vec::with_capacity(n);
        degrees.push((1, 1));
        in_targets.push(0);
        out_sources.push(0);
        let mut counts = DegreeCountGrid::new();
        counts.increment(1, 1);
        GraphState {
            degrees,
            in_targets,
            out_sources,
            counts,
        }
    }

    pub fn n(&self) -> u64 {
        self.degrees.len() as u64
    }

    pub fn counts(&self) -> &DegreeCountGrid {
        &self.counts
    }

    /// `(D_in, D_out)` per node, node `v` at index `v` (node label `v + 1`).
    pub fn degrees(&self) -> &[(u32, u32)] {
        &self.degrees
    }

    pub fn in_targets(&self) -> &[u32] {
        &self.in_targets
    }

    pub fn out_sources(&self) -> &[u32] {
        &self.out_sources
    }

    /// Maps a uniform `u` in `[0,1)` to a node drawn by in-degree plus `lambda`.
    #[inline]
    pub fn pick_by_in_degree(&self, u: f64, lambda: f64) -> u32 {
        pick(&self.in_targets, u, lambda)
    }

    /// Maps a uniform `u` in `[0,1)` to a node drawn by out-degree plus `mu`.
    #[inline]
    pub fn pick_by_out_degree(&self, u: f64, mu: f64) -> u32 {
        pick(&self.out_sources, u, mu)
    }

    /// Advances the graph by one node.
    #[inline]
    pub fn step<R: Rng + ?Sized>(&mut self, params: &ModelParams, rng: &mut R) -> StepEvent {
        let coin: f64 = rng.random();
        let u: f64 = rng.random();
        let w = self.degrees.len() as u32;
        if coin < params.alpha() {
            let v = self.pick_by_in_degree(u, params.lambda());
            let from = self.degrees[v as usize];
            self.degrees[v as usize].0 += 1;
            self.degrees.push((0, 1));
            self.in_targets.push(v);
            self.out_sources.push(w);
            self.counts.decrement(from.0, from.1);
            self.counts.increment(from.0 + 1, from.1);
            self.counts.increment(0, 1);
            StepEvent::In { node: v, from }
        } else {
            let v = self.pick_by_out_degree(u, params.mu());
            let from = self.degrees[v as usize];
            self.degrees[v as usize].1 += 1;
            self.degrees.push((1, 0));
            self.out_sources.push(v);
            self.in_targets.push(w);
            self.counts.decrement(from.0, from.1);
            self.counts.increment(from.0, from.1 + 1);
            self.counts.increment(1, 0);
            StepEvent::Out { node: v, from }
        }
    }
}

#[inline]
fn pick(endpoints: &[u32], u: f64, offset: f64) -> u32 {
    let n = endpoints.len() as f64;
    let x = u * (1.0 + offset) * n;
    if x < n {
        endpoints[x as usize]
    } else {
        // (x - n) / offset is uniform on [0, n) given x >= n.
        let v = ((x - n) / offset) as usize;
        v.min(endpoints.len() - 1) as u32
    }
}

/// Options for [`grow`].
#[derive(Debug, Clone)]
pub struct GrowOptions {
    /// Sizes at which windowed counts are recorded. Values above the target
    /// size are ignored.
    pub checkpoints: Vec<u64>,
    pub window: Option<IndexWindow>,
    pub max_nodes: u64,
}

impl Default for GrowOptions {
    fn default() -> Self {
        GrowOptions {
            checkpoints: Vec::new(),
            window: None,
            max_nodes: DEFAULT_MAX_NODES,
        }
    }
}

/// Windowed counts at one checkpoint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Checkpoint {
    pub n: u64,
    pub counts: Vec<u64>,
}

#[derive(Debug, Clone)]
pub struct GrowOutput {
    pub counts: DegreeCountGrid,
    pub checkpoints: Vec<Checkpoint>,
}

/// Grows a graph to `n` nodes from stream 0 of `seed`.
pub fn grow(params: &ModelParams, n: u64, seed: u64, opts: &GrowOptions) -> Result<GrowOutput> {
    grow_stream(params, n, seed, 0, opts)
}

/// Grows a graph to `n` nodes from stream `run` of `seed`.
pub fn grow_stream(
    params: &ModelParams,
    n: u64,
    seed: u64,
    run: u64,
    opts: &GrowOptions,
) -> Result<GrowOutput> {
    if n == 0 {
        return Err(Error::InvalidArgument(
            "target size must be at least 1".into(),
        ));
    }
    if n > opts.max_nodes || n > u64::from(u32::MAX) {
        return Err(Error::CapacityExceeded {
            requested: n,
            limit: opts.max_nodes.min(u64::from(u32::MAX)),
        });
    }
    let mut checkpoints_wanted: Vec<u64> = opts
        .checkpoints
        .iter()
        .copied()
        .filter(|&c| c >= 1 && c <= n)
        .collect();
    checkpoints_wanted.sort_unstable();
    checkpoints_wanted.dedup();

    let mut rng = rng::stream(seed, run);
    let mut state = GraphState::with_capacity(n as usize);
    let mut snapshots = Vec::with_capacity(checkpoints_wanted.len());
    let mut next = checkpoints_wanted.iter().peekable();
    let snap = |state: &GraphState, snapshots: &mut Vec<Checkpoint>| {
        if let Some(w) = &opts.window {
            snapshots.push(Checkpoint {
                n: state.n(),
                counts: state.counts.window_counts(w),
            });
        }
    };
    loop {
        if next.peek().is_some_and(|&&c| c == state.n()) {
            next.next();
            snap(&state, &mut snapshots);
        }
        if state.n() == n {
            break;
        }
        state.step(params, &mut rng);
    }
    Ok(GrowOutput {
        counts: state.counts,
        checkpoints: snapshots,
    })
}
