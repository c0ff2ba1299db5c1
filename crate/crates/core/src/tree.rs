//! Lazy infinite trees pointed at infinity.
//!
//! A tree here is rooted at `o` and pointed at a distinguished end `gamma`
//! reached by the spine `o = s_0, s_1, s_2, ...` of ancestors. A vertex is
//! addressed canonically by the pair (spine depth `k`, descent word): climb
//! `k` spine steps from the root, then descend through the listed child
//! indices. Heights grow toward `gamma`: `height(x) = k - |descent|`, and
//! the Busemann function is `b(x) = -height(x)`.
//!
//! Offspring counts are a pure function of the environment and the address,
//! so the infinite tree is never materialized: a homogeneous environment
//! gives every vertex the same count, a Galton-Watson environment hashes the
//! address with a master seed.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use crate::mix::{bounded, fold};

const TAG_OFFSPRING: u64 = 0x6f66_6673; // "offs"
const TAG_SPINE: u64 = 0x7370_696e; // "spin"
const TAG_TAIL: u64 = 0x7461_696c; // "tail"

/// Errors from environment construction.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EnvError {
    #[error("offspring law needs at least one positive weight")]
    EmptyOffspringLaw,
    #[error("offspring weight must be finite and nonnegative, got {0}")]
    InvalidWeight(f64),
    #[error("homogeneous environment needs children count >= 1")]
    ZeroChildren,
}

#[derive(Clone, Debug)]
enum EnvKind {
    Homogeneous {
        children: u32,
    },
    GaltonWatson {
        /// Normalized law of the offspring count; entry `i` is the
        /// probability of `i + 1` children (no extinction, so every vertex
        /// has degree >= 2).
        law: Vec<f64>,
        /// Cumulative law scaled to the full u64 range; the last entry is
        /// pinned to `u64::MAX` so selection is total.
        thresholds: Vec<u64>,
        seed: u64,
    },
}

/// A tree environment: everything needed to answer "how many children does
/// this vertex have" deterministically.
#[derive(Clone, Debug)]
pub struct PointedTreeEnv {
    kind: EnvKind,
    label: String,
}

impl PointedTreeEnv {
    /// Homogeneous tree where every vertex has `children` children (vertex
    /// degree `children + 1`).
    pub fn homogeneous(children: u32, label: impl Into<String>) -> Result<Self, EnvError> {
        if children == 0 {
            return Err(EnvError::ZeroChildren);
        }
        Ok(Self {
            kind: EnvKind::Homogeneous { children },
            label: label.into(),
        })
    }

    /// Galton-Watson tree with offspring counts drawn from `weights`, where
    /// `weights[i]` is the relative mass of `i + 1` children. Weights need
    /// not be normalized. Counts are a pure function of (seed, address).
    pub fn galton_watson(
        weights: &[f64],
        seed: u64,
        label: impl Into<String>,
    ) -> Result<Self, EnvError> {
        if weights.is_empty() {
            return Err(EnvError::EmptyOffspringLaw);
        }
        let mut total = 0.0;
        for &w in weights {
            if !w.is_finite() || w < 0.0 {
                return Err(EnvError::InvalidWeight(w));
            }
            total += w;
        }
        if total <= 0.0 {
            return Err(EnvError::EmptyOffspringLaw);
        }
        let law: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let mut thresholds = Vec::with_capacity(law.len());
        let mut cum = 0.0;
        for &p in &law {
            cum += p;
            // Saturating cast: cum * 2^64 can round up to 2^64 itself.
            thresholds.push((cum * 18_446_744_073_709_551_616.0) as u64);
        }
        *thresholds.last_mut().unwrap() = u64::MAX;
        Ok(Self {
            kind: EnvKind::GaltonWatson {
                law,
                thresholds,
                seed,
            },
            label: label.into(),
        })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Largest offspring count this environment can produce.
    pub fn max_offspring(&self) -> u32 {
        match &self.kind {
            EnvKind::Homogeneous { children } => *children,
            EnvKind::GaltonWatson { law, .. } => law.len() as u32,
        }
    }

    /// Offspring law as (count, probability) pairs.
    pub fn offspring_law(&self) -> Vec<(u32, f64)> {
        match &self.kind {
            EnvKind::Homogeneous { children } => vec![(*children, 1.0)],
            EnvKind::GaltonWatson { law, .. } => law
                .iter()
                .enumerate()
                .map(|(i, &p)| (i as u32 + 1, p))
                .collect(),
        }
    }

    /// Number of children of the vertex at `addr`. Deterministic: the same
    /// address always reports the same count.
    pub fn offspring(&self, addr: &TreeVertexAddr) -> u32 {
        match &self.kind {
            EnvKind::Homogeneous { children } => *children,
            EnvKind::GaltonWatson {
                thresholds, seed, ..
            } => {
                let mut h = fold(*seed, TAG_OFFSPRING);
                h = fold(h, u64::from(addr.spine_depth));
                for &i in &addr.descent {
                    h = fold(h, u64::from(i) + 1);
                }
                let mut count = 1u32;
                for &t in thresholds {
                    if h < t {
                        break;
                    }
                    count += 1;
                }
                count.min(thresholds.len() as u32)
            }
        }
    }

    /// Position of the spine child `s_{k-1}` among the children of the spine
    /// vertex `s_k` (`k >= 1`). Uniform over the slots for seeded
    /// environments, slot 0 for homogeneous ones.
    pub fn spine_child_index(&self, k: u32) -> u32 {
        match &self.kind {
            EnvKind::Homogeneous { .. } => 0,
            EnvKind::GaltonWatson { seed, .. } => {
                let c = self.offspring(&TreeVertexAddr::spine(k));
                bounded(fold(fold(*seed, TAG_SPINE), u64::from(k)), c)
            }
        }
    }

    /// The unique neighbor one step toward `gamma`.
    pub fn parent(&self, x: &TreeVertexAddr) -> TreeVertexAddr {
        if x.descent.is_empty() {
            TreeVertexAddr::spine(x.spine_depth + 1)
        } else {
            TreeVertexAddr {
                spine_depth: x.spine_depth,
                descent: x.descent[..x.descent.len() - 1].to_vec(),
            }
        }
    }

    /// Child of `x` in slot `i` (`i < offspring(x)`), in canonical form.
    /// For a spine vertex the slot holding the lower spine vertex yields
    /// `s_{k-1}` rather than a fresh descent.
    pub fn child(&self, x: &TreeVertexAddr, i: u32) -> TreeVertexAddr {
        debug_assert!(i < self.offspring(x));
        if !x.descent.is_empty() {
            let mut descent = x.descent.clone();
            descent.push(i);
            return TreeVertexAddr {
                spine_depth: x.spine_depth,
                descent,
            };
        }
        if x.spine_depth > 0 && i == self.spine_child_index(x.spine_depth) {
            return TreeVertexAddr::spine(x.spine_depth - 1);
        }
        TreeVertexAddr {
            spine_depth: x.spine_depth,
            descent: vec![i],
        }
    }

    /// In-place `parent`, reusing the descent allocation so long walks pay
    /// O(1) per step instead of cloning ever-longer words.
    pub fn step_to_parent(&self, x: &mut TreeVertexAddr) {
        if x.descent.is_empty() {
            x.spine_depth += 1;
        } else {
            x.descent.pop();
        }
    }

    /// In-place `child`.
    pub fn step_to_child(&self, x: &mut TreeVertexAddr, i: u32) {
        debug_assert!(i < self.offspring(x));
        if x.descent.is_empty() && x.spine_depth > 0 && i == self.spine_child_index(x.spine_depth)
        {
            x.spine_depth -= 1;
        } else {
            x.descent.push(i);
        }
    }

    /// All children of `x`, one height step away from `gamma`.
    pub fn children(&self, x: &TreeVertexAddr) -> Vec<TreeVertexAddr> {
        (0..self.offspring(x)).map(|i| self.child(x, i)).collect()
    }

    /// Slot of `child` among the children of `x`, if it is one.
    pub fn child_index_of(&self, x: &TreeVertexAddr, child: &TreeVertexAddr) -> Option<u32> {
        (0..self.offspring(x)).find(|&i| self.child(x, i) == *child)
    }

    /// Ancestor of `x` on the ray toward `gamma` at height `h >= height(x)`.
    pub fn ancestor_at_height(&self, x: &TreeVertexAddr, h: i64) -> TreeVertexAddr {
        let steps = h - x.height();
        assert!(steps >= 0, "ancestor_at_height needs h >= height(x)");
        let steps = steps as usize;
        if steps <= x.descent.len() {
            TreeVertexAddr {
                spine_depth: x.spine_depth,
                descent: x.descent[..x.descent.len() - steps].to_vec(),
            }
        } else {
            TreeVertexAddr::spine(x.spine_depth + (steps - x.descent.len()) as u32)
        }
    }

    /// Does `a` lie on the ray `[x, gamma)` (including `a == x`)?
    pub fn is_upward_ancestor(&self, a: &TreeVertexAddr, x: &TreeVertexAddr) -> bool {
        a.height() >= x.height() && self.ancestor_at_height(x, a.height()) == *a
    }

    /// Whether `x` is a canonical address of this environment: the first
    /// descent index avoids the spine child slot, and every index is within
    /// the offspring count along the way. Non-canonical addresses alias
    /// other vertices and break the traversal ops, so reject them at input
    /// boundaries.
    pub fn is_valid_addr(&self, x: &TreeVertexAddr) -> bool {
        if let Some(&first) = x.descent.first() {
            if x.spine_depth > 0 && first == self.spine_child_index(x.spine_depth) {
                return false;
            }
        }
        let mut cur = TreeVertexAddr::spine(x.spine_depth);
        for &i in &x.descent {
            if i >= self.offspring(&cur) {
                return false;
            }
            cur.descent.push(i);
        }
        true
    }

    fn word_from_top(&self, x: &TreeVertexAddr, top: u32) -> Vec<u32> {
        debug_assert!(top >= x.spine_depth);
        let mut w = Vec::with_capacity((top - x.spine_depth) as usize + x.descent.len());
        for j in (x.spine_depth + 1..=top).rev() {
            w.push(self.spine_child_index(j));
        }
        w.extend_from_slice(&x.descent);
        w
    }

    fn canonicalize(&self, top: u32, word: &[u32]) -> TreeVertexAddr {
        let mut k = top;
        let mut i = 0;
        while i < word.len() && k > 0 && word[i] == self.spine_child_index(k) {
            i += 1;
            k -= 1;
        }
        TreeVertexAddr {
            spine_depth: k,
            descent: word[i..].to_vec(),
        }
    }

    /// Confluence `x /\ y`: the first common vertex of the rays `[x, gamma)`
    /// and `[y, gamma)`. Its height is at least both input heights.
    pub fn confluence(&self, x: &TreeVertexAddr, y: &TreeVertexAddr) -> TreeVertexAddr {
        let top = x.spine_depth.max(y.spine_depth);
        let wx = self.word_from_top(x, top);
        let wy = self.word_from_top(y, top);
        let mut n = 0;
        while n < wx.len() && n < wy.len() && wx[n] == wy[n] {
            n += 1;
        }
        self.canonicalize(top, &wx[..n])
    }

    /// Busemann cocycle relative to `gamma`: `d(y,z) - d(x,z)` with `z` the
    /// confluence, which collapses to `height(x) - height(y)`.
    pub fn busemann(&self, x: &TreeVertexAddr, y: &TreeVertexAddr) -> i64 {
        x.height() - y.height()
    }

    /// Graph distance: up from both arguments to the confluence.
    pub fn tree_distance(&self, x: &TreeVertexAddr, y: &TreeVertexAddr) -> u64 {
        let z = self.confluence(x, y);
        (2 * z.height() - x.height() - y.height()) as u64
    }

    /// The unique geodesic from `x` to `y`: ascend to the confluence, then
    /// descend. Returns `tree_distance + 1` vertices.
    pub fn tree_geodesic(&self, x: &TreeVertexAddr, y: &TreeVertexAddr) -> Vec<TreeVertexAddr> {
        let z = self.confluence(x, y);
        let mut path = Vec::with_capacity(self.tree_distance(x, y) as usize + 1);
        let mut cur = x.clone();
        path.push(cur.clone());
        while cur != z {
            cur = self.parent(&cur);
            path.push(cur.clone());
        }
        let mut down = Vec::new();
        let mut cur = y.clone();
        while cur != z {
            down.push(cur.clone());
            cur = self.parent(&cur);
        }
        path.extend(down.into_iter().rev());
        path
    }

    /// First `n + 1` vertices of the ray `[from, gamma)`: the parent chain.
    pub fn gamma_ray(&self, from: &TreeVertexAddr, n: usize) -> Vec<TreeVertexAddr> {
        let mut out = Vec::with_capacity(n + 1);
        let mut cur = from.clone();
        out.push(cur.clone());
        for _ in 0..n {
            cur = self.parent(&cur);
            out.push(cur.clone());
        }
        out
    }

    /// First `n + 1` vertices of the geodesic ray `[from, end)`: climb to
    /// the confluence with the ray of `end`, then descend along it.
    pub fn end_ray(&self, end: &End, from: &TreeVertexAddr, n: usize) -> Vec<TreeVertexAddr> {
        let (ups, mut walker) = self.ray_to_end_parts(from, end);
        let mut out = ups;
        out.truncate(n + 1);
        while out.len() < n + 1 {
            out.push(walker.step());
        }
        out
    }

    /// Splits `[from, end)` into the ascending part `[from, conf]` and a
    /// walker that descends from the confluence along the ray of `end`.
    pub(crate) fn ray_to_end_parts<'a>(
        &'a self,
        from: &TreeVertexAddr,
        end: &End,
    ) -> (Vec<TreeVertexAddr>, EndWalker<'a>) {
        let ca = self.confluence(from, &end.anchor);
        let mut walker = EndWalker::new(self, end);
        if ca != end.anchor {
            // `from` branches off strictly above the anchor, so the ray
            // first retraces [ca, anchor]. Queue those child indices in
            // front of the end's own stream.
            let mut rejoin = Vec::new();
            let mut cur = end.anchor.clone();
            while cur != ca {
                let p = self.parent(&cur);
                let idx = self
                    .child_index_of(&p, &cur)
                    .expect("parent/child mismatch");
                rejoin.push(idx);
                cur = p;
            }
            rejoin.reverse();
            walker.restart_at(ca.clone(), rejoin);
        } else {
            // The anchor already lies on [from, gamma); descend while the
            // ray stays above `from`.
            loop {
                let idx = walker.peek_index();
                let next = self.child(&walker.cur, idx);
                if self.is_upward_ancestor(&next, from) {
                    walker.advance(next);
                } else {
                    break;
                }
            }
        }
        let mut ups = Vec::new();
        let mut cur = from.clone();
        ups.push(cur.clone());
        while cur != walker.cur {
            cur = self.parent(&cur);
            ups.push(cur.clone());
        }
        (ups, walker)
    }
}

/// Canonical address of a tree vertex: anchor spine depth plus descent word.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TreeVertexAddr {
    spine_depth: u32,
    descent: Vec<u32>,
}

impl TreeVertexAddr {
    /// The root `o = s_0`.
    pub fn root() -> Self {
        Self::spine(0)
    }

    /// The spine vertex `s_k`.
    pub fn spine(k: u32) -> Self {
        TreeVertexAddr {
            spine_depth: k,
            descent: Vec::new(),
        }
    }

    /// Assemble an address from raw parts. The canonical-form rule (the
    /// first descent index must differ from the spine child slot when
    /// `k > 0`) is the caller's responsibility; prefer env-backed
    /// construction via [`PointedTreeEnv::child`].
    pub fn from_parts(spine_depth: u32, descent: Vec<u32>) -> Self {
        TreeVertexAddr {
            spine_depth,
            descent,
        }
    }

    pub fn spine_depth(&self) -> u32 {
        self.spine_depth
    }

    pub fn descent(&self) -> &[u32] {
        &self.descent
    }

    /// Height relative to the root; positive toward `gamma`.
    pub fn height(&self) -> i64 {
        i64::from(self.spine_depth) - self.descent.len() as i64
    }

    /// Busemann function `b = -height`.
    pub fn busemann_value(&self) -> i64 {
        -self.height()
    }

    pub fn is_root(&self) -> bool {
        self.spine_depth == 0 && self.descent.is_empty()
    }
}

impl fmt::Display for TreeVertexAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:[", self.spine_depth)?;
        for (i, d) in self.descent.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{d}")?;
        }
        write!(f, "]")
    }
}

impl fmt::Debug for TreeVertexAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

/// Error from parsing serialized addresses or vertices.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("invalid address syntax: {0}")]
pub struct AddrParseError(pub String);

impl FromStr for TreeVertexAddr {
    type Err = AddrParseError;

    /// Parses the `k:[i1,i2,...]` form produced by `Display`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || AddrParseError(s.to_string());
        let (k, rest) = s.split_once(':').ok_or_else(bad)?;
        let spine_depth: u32 = k.trim().parse().map_err(|_| bad())?;
        let rest = rest.trim();
        let inner = rest
            .strip_prefix('[')
            .and_then(|r| r.strip_suffix(']'))
            .ok_or_else(bad)?;
        let mut descent = Vec::new();
        for part in inner.split(',') {
            let part = part.trim();
            if part.is_empty() {
                continue;
            }
            descent.push(part.parse().map_err(|_| bad())?);
        }
        Ok(TreeVertexAddr {
            spine_depth,
            descent,
        })
    }
}

/// Rule generating the child indices of an end's ray past its explicit
/// prefix.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TailRule {
    /// Always pick this child slot, clamped to the valid range at each
    /// vertex. `FixedChild(0)` is the default and never needs clamping.
    FixedChild(u32),
    /// Uniform seeded choice at each depth.
    Seeded(u64),
}

/// A boundary point of the tree other than `gamma`: an infinite descending
/// ray, given by an anchor vertex, an explicit index prefix, and a tail
/// rule. Indices out of range at the vertex where they apply are clamped to
/// the last child slot, so every `End` denotes a valid ray.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct End {
    pub anchor: TreeVertexAddr,
    pub prefix: Vec<u32>,
    pub tail: TailRule,
}

impl End {
    /// The "child 0 forever" end below `anchor`.
    pub fn below(anchor: TreeVertexAddr) -> Self {
        End {
            anchor,
            prefix: Vec::new(),
            tail: TailRule::FixedChild(0),
        }
    }

    /// End descending along `prefix`, then child 0 forever.
    pub fn with_prefix(anchor: TreeVertexAddr, prefix: Vec<u32>) -> Self {
        End {
            anchor,
            prefix,
            tail: TailRule::FixedChild(0),
        }
    }

    /// End descending along `prefix`, then by seeded uniform choices.
    pub fn seeded(anchor: TreeVertexAddr, prefix: Vec<u32>, seed: u64) -> Self {
        End {
            anchor,
            prefix,
            tail: TailRule::Seeded(seed),
        }
    }
}

/// Stateful cursor descending along an end's ray.
pub(crate) struct EndWalker<'a> {
    env: &'a PointedTreeEnv,
    pub(crate) cur: TreeVertexAddr,
    queued: VecDeque<u32>,
    tail: TailRule,
    depth: u64,
}

impl<'a> EndWalker<'a> {
    pub(crate) fn new(env: &'a PointedTreeEnv, end: &End) -> Self {
        EndWalker {
            env,
            cur: end.anchor.clone(),
            queued: end.prefix.iter().copied().collect(),
            tail: end.tail.clone(),
            depth: 0,
        }
    }

    fn restart_at(&mut self, cur: TreeVertexAddr, rejoin: Vec<u32>) {
        for idx in rejoin.into_iter().rev() {
            self.queued.push_front(idx);
        }
        self.cur = cur;
    }

    /// Next child index without advancing. Clamps into the valid range at
    /// the current vertex.
    pub(crate) fn peek_index(&self) -> u32 {
        let c = self.env.offspring(&self.cur);
        match self.queued.front() {
            Some(&q) => q.min(c - 1),
            None => match self.tail {
                TailRule::FixedChild(j) => j.min(c - 1),
                TailRule::Seeded(s) => bounded(fold(fold(s, TAG_TAIL), self.depth), c),
            },
        }
    }

    fn advance(&mut self, next: TreeVertexAddr) {
        if self.queued.pop_front().is_none() {
            self.depth += 1;
        }
        self.cur = next;
    }

    /// Descend one step and return the new vertex.
    pub(crate) fn step(&mut self) -> TreeVertexAddr {
        let idx = self.peek_index();
        let next = self.env.child(&self.cur, idx);
        self.advance(next);
        self.cur.clone()
    }
}
