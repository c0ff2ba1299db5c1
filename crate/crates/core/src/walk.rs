//! Random-walk kernels on the product and their exact and sampled laws.
//!
//! Determinism contract: neighbor enumeration order is frozen (see
//! [`HoroProduct::neighbors`]), step selection converts cumulative
//! probabilities to 64-bit integer thresholds and draws one `u64` per step
//! from a seeded ChaCha8 stream, and the n-step dynamic program both
//! expands and sums in a fixed order. The same inputs therefore produce
//! bitwise-identical outputs on any platform.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::product::{HoroProduct, ProductVertex};
use crate::tree::{PointedTreeEnv, TreeVertexAddr};

/// Default cap on the number of distinct states the n-step DP may intern.
pub const DEFAULT_SUPPORT_BUDGET: usize = 2_000_000;

/// Weight function for custom kernels, evaluated on oriented edges.
pub type WeightFn = Arc<dyn Fn(&ProductVertex, &ProductVertex) -> f64 + Send + Sync>;

/// A random-walk kernel: how to pick the next vertex.
#[derive(Clone)]
pub enum Kernel {
    /// Uniform over neighbors.
    Simple,
    /// Split `up` uniformly over height-increasing neighbors and `1 - up`
    /// over height-decreasing ones. `up` lies in (0, 1]; the boundary value
    /// 1 degenerates to deterministic ascent.
    HeightBiased { up: f64 },
    /// Normalize arbitrary nonnegative edge weights at each vertex.
    Custom(WeightFn),
}

impl Kernel {
    pub fn height_biased(up: f64) -> Kernel {
        assert!(up > 0.0 && up <= 1.0, "up probability must be in (0,1]");
        Kernel::HeightBiased { up }
    }
}

impl fmt::Debug for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Kernel::Simple => write!(f, "Simple"),
            Kernel::HeightBiased { up } => write!(f, "HeightBiased {{ up: {up} }}"),
            Kernel::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

/// Errors from walk sampling and the exact DP.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum WalkError {
    #[error("kernel weights vanish or are invalid at {at}")]
    DegenerateKernel { at: String },
    #[error("n-step support passed the budget of {budget} states at step {n}")]
    BudgetExceeded { n: usize, budget: usize },
}

/// A sampled trajectory: `n + 1` vertices, reproducible from
/// (kernel, start, seed, n).
#[derive(Clone, Debug, PartialEq)]
pub struct WalkPath {
    vertices: Vec<ProductVertex>,
    seed: u64,
}

impl WalkPath {
    pub fn start(&self) -> &ProductVertex {
        &self.vertices[0]
    }

    pub fn vertices(&self) -> &[ProductVertex] {
        &self.vertices
    }

    /// Steps taken, excluding the start.
    pub fn steps(&self) -> &[ProductVertex] {
        &self.vertices[1..]
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

/// Per-neighbor probabilities at `v` in the frozen neighbor order, without
/// materializing the neighbors. The first `ups` entries belong to the
/// height-increasing block.
pub(crate) fn step_probs(
    g: &HoroProduct,
    kernel: &Kernel,
    v: &ProductVertex,
) -> Result<(Vec<f64>, usize), WalkError> {
    let ups = g.right_env().offspring(v.right()) as usize;
    let downs = g.left_env().offspring(v.left()) as usize;
    let probs = match kernel {
        Kernel::Simple => {
            let p = 1.0 / (ups + downs) as f64;
            vec![p; ups + downs]
        }
        Kernel::HeightBiased { up } => {
            let pu = up / ups as f64;
            let pd = (1.0 - up) / downs as f64;
            let mut probs = vec![pu; ups];
            probs.extend(std::iter::repeat_n(pd, downs));
            probs
        }
        Kernel::Custom(w) => {
            let raw: Vec<f64> = g.neighbors(v).iter().map(|n| w(v, n)).collect();
            let total: f64 = raw.iter().sum();
            if raw.iter().any(|x| !x.is_finite() || *x < 0.0) || total <= 0.0 {
                return Err(WalkError::DegenerateKernel { at: v.to_string() });
            }
            raw.into_iter().map(|x| x / total).collect()
        }
    };
    Ok((probs, ups))
}

/// The one-step law at `v` as (neighbor, probability) pairs in the frozen
/// neighbor order. Neighbors carrying probability exactly zero are omitted,
/// so the result is the support of the law.
pub fn step_distribution(
    g: &HoroProduct,
    kernel: &Kernel,
    v: &ProductVertex,
) -> Result<Vec<(ProductVertex, f64)>, WalkError> {
    let (probs, _) = step_probs(g, kernel, v)?;
    Ok(g
        .neighbors(v)
        .into_iter()
        .zip(probs)
        .filter(|&(_, p)| p > 0.0)
        .collect())
}

/// Index selection from probabilities via integer thresholds: cumulative
/// sums are scaled to the full u64 range, the final threshold pinned to
/// `u64::MAX`, and `r` compared against them. Pure integer comparison, so
/// the same `r` always picks the same index on every platform.
pub(crate) fn pick_by_thresholds(probs: &[f64], r: u64) -> usize {
    let mut acc = 0.0f64;
    for (i, &p) in probs.iter().enumerate() {
        if i + 1 == probs.len() {
            return i;
        }
        acc += p;
        let t = (acc * 18_446_744_073_709_551_616.0) as u64;
        if r < t {
            return i;
        }
    }
    0
}

/// Sample an `n`-step trajectory from `start`, deterministically per seed.
///
/// Only the selected neighbor is ever constructed, but the index drawn per
/// step is identical to indexing into `step_distribution` restricted to its
/// support, so sampled paths and exact laws always agree.
pub fn sample_path(
    g: &HoroProduct,
    kernel: &Kernel,
    start: &ProductVertex,
    n: usize,
    seed: u64,
) -> Result<WalkPath, WalkError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut vertices = Vec::with_capacity(n + 1);
    vertices.push(start.clone());
    for _ in 0..n {
        let v = vertices.last().unwrap();
        let (probs, ups) = step_probs(g, kernel, v)?;
        let (support, positive): (Vec<usize>, Vec<f64>) = probs
            .iter()
            .enumerate()
            .filter(|&(_, p)| *p > 0.0)
            .map(|(i, &p)| (i, p))
            .unzip();
        let idx = support[pick_by_thresholds(&positive, rng.next_u64())];
        let next = if idx < ups {
            ProductVertex::pair_unchecked(
                g.left_env().parent(v.left()),
                g.right_env().child(v.right(), idx as u32),
            )
        } else {
            ProductVertex::pair_unchecked(
                g.left_env().child(v.left(), (idx - ups) as u32),
                g.right_env().parent(v.right()),
            )
        };
        vertices.push(next);
    }
    Ok(WalkPath { vertices, seed })
}

/// Seed of ensemble member `w` under a master seed. Estimator ensembles
/// derive their per-walk seeds exactly this way, so external callers can
/// resample individual member trajectories.
pub fn member_seed(seed: u64, w: u64) -> u64 {
    crate::mix::fold(seed, w)
}

/// The move applied by one step, in coordinate terms: an up-move lifts the
/// left coordinate to its parent and drops the right one into `right_slot`;
/// a down-move mirrors that.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProductMove {
    Up { right_slot: u32 },
    Down { left_slot: u32 },
}

/// Streaming sampler holding a single vertex and advancing it in place.
///
/// Consumes randomness exactly like [`sample_path`], so equal (kernel,
/// start, seed) visit the same vertices step for step. Unlike `sample_path`
/// it stores no trajectory: after t steps an address has length O(t), so a
/// stored million-step path costs quadratic memory while this stays flat.
pub struct StepSampler<'a> {
    g: &'a HoroProduct,
    kernel: Kernel,
    cur: ProductVertex,
    rng: ChaCha8Rng,
    taken: u64,
}

impl<'a> StepSampler<'a> {
    pub fn new(g: &'a HoroProduct, kernel: &Kernel, start: ProductVertex, seed: u64) -> Self {
        StepSampler {
            g,
            kernel: kernel.clone(),
            cur: start,
            rng: ChaCha8Rng::seed_from_u64(seed),
            taken: 0,
        }
    }

    pub fn current(&self) -> &ProductVertex {
        &self.cur
    }

    /// Steps taken so far.
    pub fn steps_taken(&self) -> u64 {
        self.taken
    }

    /// Advance one step and report the move that was applied.
    pub fn step(&mut self) -> Result<ProductMove, WalkError> {
        let (probs, ups) = step_probs(self.g, &self.kernel, &self.cur)?;
        let (support, positive): (Vec<usize>, Vec<f64>) = probs
            .iter()
            .enumerate()
            .filter(|&(_, p)| *p > 0.0)
            .map(|(i, &p)| (i, p))
            .unzip();
        let idx = support[pick_by_thresholds(&positive, self.rng.next_u64())];
        let mv = if idx < ups {
            let slot = idx as u32;
            self.g.step_up(&mut self.cur, slot);
            ProductMove::Up { right_slot: slot }
        } else {
            let slot = (idx - ups) as u32;
            self.g.step_down(&mut self.cur, slot);
            ProductMove::Down { left_slot: slot }
        };
        self.taken += 1;
        Ok(mv)
    }
}

/// Exact n-step distributions from a start vertex, for n = 0..=n_max.
///
/// Interns every state touched; fails with `BudgetExceeded` once the
/// intern table would pass `budget` states.
pub struct NStepDp {
    verts: Vec<ProductVertex>,
    index: HashMap<ProductVertex, u32>,
    /// levels[n] = sorted (state id, probability) pairs of p^n(start, .)
    levels: Vec<Vec<(u32, f64)>>,
}

impl fmt::Debug for NStepDp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "NStepDp {{ states: {}, n_max: {} }}",
            self.verts.len(),
            self.n_max()
        )
    }
}

impl NStepDp {
    /// Largest n with a computed distribution.
    pub fn n_max(&self) -> usize {
        self.levels.len() - 1
    }

    /// States ever interned.
    pub fn total_states(&self) -> usize {
        self.verts.len()
    }

    pub fn support_size(&self, n: usize) -> usize {
        self.levels[n].len()
    }

    /// The distribution p^n(start, .) as (vertex, probability) pairs in a
    /// deterministic order.
    pub fn distribution(&self, n: usize) -> impl Iterator<Item = (&ProductVertex, f64)> {
        self.levels[n]
            .iter()
            .map(|&(id, p)| (&self.verts[id as usize], p))
    }

    /// Point probability p^n(start, v); zero off the support.
    pub fn prob_of(&self, n: usize, v: &ProductVertex) -> f64 {
        let Some(&id) = self.index.get(v) else {
            return 0.0;
        };
        self.levels[n]
            .binary_search_by_key(&id, |&(i, _)| i)
            .map(|pos| self.levels[n][pos].1)
            .unwrap_or(0.0)
    }
}

/// Forward dynamic program for p^n(start, .), n = 0..=n_max.
pub fn nstep_distribution(
    g: &HoroProduct,
    kernel: &Kernel,
    start: &ProductVertex,
    n_max: usize,
    budget: usize,
) -> Result<NStepDp, WalkError> {
    let mut dp = NStepDp {
        verts: vec![start.clone()],
        index: HashMap::from([(start.clone(), 0)]),
        levels: vec![vec![(0, 1.0)]],
    };
    for n in 1..=n_max {
        let mut next: HashMap<u32, f64> = HashMap::new();
        let prev = dp.levels.last().unwrap().clone();
        for (id, p) in prev {
            let v = dp.verts[id as usize].clone();
            for (w, q) in step_distribution(g, kernel, &v)? {
                let wid = match dp.index.get(&w) {
                    Some(&i) => i,
                    None => {
                        if dp.verts.len() >= budget {
                            return Err(WalkError::BudgetExceeded { n, budget });
                        }
                        let i = dp.verts.len() as u32;
                        dp.index.insert(w.clone(), i);
                        dp.verts.push(w);
                        i
                    }
                };
                *next.entry(wid).or_insert(0.0) += p * q;
            }
        }
        let mut level: Vec<(u32, f64)> = next.into_iter().collect();
        level.sort_unstable_by_key(|&(id, _)| id);
        dp.levels.push(level);
    }
    Ok(dp)
}

/// A move in a tree as seen from a walk on the product, left projection.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TreeMove {
    ToParent,
    ToChild(u32),
}

/// Classify the left-tree projection of a product step, or `None` when the
/// two vertices are not adjacent.
pub fn left_tree_move(g: &HoroProduct, v: &ProductVertex, w: &ProductVertex) -> Option<TreeMove> {
    if g.product_distance(v, w) != 1 {
        return None;
    }
    if *w.left() == g.left_env().parent(v.left()) {
        Some(TreeMove::ToParent)
    } else {
        g.left_env()
            .child_index_of(v.left(), w.left())
            .map(TreeMove::ToChild)
    }
}

/// The tree walk obtained by projecting the simple walk on the product of
/// `env` with a homogeneous tree carrying `d` children per vertex: step to
/// the parent with probability d/(c+d), to each of the c children with
/// probability 1/(c+d).
pub struct HomesickKernel<'a> {
    env: &'a PointedTreeEnv,
    d: u32,
}

pub fn homesick_projection_kernel(env: &PointedTreeEnv, d: u32) -> HomesickKernel<'_> {
    assert!(d >= 1, "homesick bias needs d >= 1");
    HomesickKernel { env, d }
}

impl HomesickKernel<'_> {
    /// One-step law at `x`: parent first, then children in slot order.
    pub fn step_law(&self, x: &TreeVertexAddr) -> Vec<(TreeVertexAddr, f64)> {
        let c = self.env.offspring(x);
        let denom = (c + self.d) as f64;
        let mut out = Vec::with_capacity(c as usize + 1);
        out.push((self.env.parent(x), self.d as f64 / denom));
        for ch in self.env.children(x) {
            out.push((ch, 1.0 / denom));
        }
        out
    }
}
