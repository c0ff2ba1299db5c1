//! The horospheric product of two pointed trees.
//!
//! Vertices are pairs (x, x') of tree vertices whose heights cancel:
//! `height(x) + height'(x') = 0`. Edges move both coordinates at once, one
//! step each: an up-move lifts x to its parent while x' drops to a child, a
//! down-move does the opposite. Product height is the left tree's height.
//!
//! Distances decompose over the factors minus the height mismatch, and
//! every geodesic is a zigzag with at most one lower and one upper turning
//! height, which is what makes exact enumeration possible.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use crate::tree::{AddrParseError, End, PointedTreeEnv, TailRule, TreeVertexAddr};

/// Errors from product construction and geodesic selection.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProductError {
    #[error("tree heights must cancel, got {left} + {right}")]
    InconsistentHeights { left: i64, right: i64 },
    #[error("geodesic choice rejected: {0}")]
    InvalidChoice(String),
    #[error("ray target rejected: {0}")]
    InvalidTarget(String),
    #[error(transparent)]
    Parse(#[from] AddrParseError),
}

/// A vertex of the product: left and right tree addresses with canceling
/// heights.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ProductVertex {
    left: TreeVertexAddr,
    right: TreeVertexAddr,
}

impl ProductVertex {
    pub fn new(left: TreeVertexAddr, right: TreeVertexAddr) -> Result<Self, ProductError> {
        if left.height() + right.height() != 0 {
            return Err(ProductError::InconsistentHeights {
                left: left.height(),
                right: right.height(),
            });
        }
        Ok(ProductVertex { left, right })
    }

    /// Both roots; the base point of every experiment.
    pub fn origin() -> Self {
        ProductVertex {
            left: TreeVertexAddr::root(),
            right: TreeVertexAddr::root(),
        }
    }

    pub(crate) fn pair_unchecked(left: TreeVertexAddr, right: TreeVertexAddr) -> Self {
        debug_assert_eq!(left.height() + right.height(), 0);
        ProductVertex { left, right }
    }

    pub fn left(&self) -> &TreeVertexAddr {
        &self.left
    }

    pub fn right(&self) -> &TreeVertexAddr {
        &self.right
    }

    /// Product height: the left tree's height (the right tree's negated).
    pub fn height(&self) -> i64 {
        self.left.height()
    }
}

impl fmt::Display for ProductVertex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}|{})", self.left, self.right)
    }
}

impl fmt::Debug for ProductVertex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl FromStr for ProductVertex {
    type Err = ProductError;

    /// Parses the `(<left>|<right>)` form produced by `Display`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || AddrParseError(s.to_string());
        let inner = s
            .trim()
            .strip_prefix('(')
            .and_then(|r| r.strip_suffix(')'))
            .ok_or_else(bad)?;
        let (l, r) = inner.split_once('|').ok_or_else(bad)?;
        ProductVertex::new(l.trim().parse()?, r.trim().parse()?)
    }
}

/// Which side of the boundary a limit point sits on. Upper points pair the
/// left tree's distinguished end with a right-tree end; lower points do the
/// opposite.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize)]
pub enum BoundarySide {
    Upper,
    Lower,
}

/// A boundary point of the product reachable by a transient walk: the side
/// plus the free end (in the right tree for upper points, the left tree for
/// lower ones).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BoundaryPoint {
    pub side: BoundarySide,
    pub end: End,
}

/// Selects one geodesic between two product vertices. Both variants name
/// the two free via-vertices; everything else about the path is forced.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum GeodesicChoice {
    /// Descend to the lower turning height, ascend to the upper one,
    /// descend to the target. Valid when the start is not higher than the
    /// target. `left_via` is a descendant of the start's left coordinate at
    /// the lower turning height; `right_via` a descendant of the target's
    /// right coordinate at the upper one (right-tree heights).
    DownUpDown {
        left_via: TreeVertexAddr,
        right_via: TreeVertexAddr,
    },
    /// Ascend, descend, ascend; the mirror image. Valid when the start is
    /// not lower than the target. `right_via` descends from the start's
    /// right coordinate, `left_via` from the target's left one.
    UpDownUp {
        left_via: TreeVertexAddr,
        right_via: TreeVertexAddr,
    },
}

/// Target of a one-sided geodesic ray from a product vertex.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RayTarget {
    /// Head to the upper boundary point paired with `end` (a right-tree
    /// end). `via` is the left-tree vertex where the ray turns upward: a
    /// descendant of the start's left coordinate at the height of the
    /// confluence between the start's right coordinate and `end`.
    Upper { via: TreeVertexAddr, end: End },
    /// Head to the lower boundary point paired with `end` (a left-tree
    /// end). `via` is the right-tree turning vertex, a descendant of the
    /// start's right coordinate.
    Lower { end: End, via: TreeVertexAddr },
}

/// The product environment: a pair of tree environments.
#[derive(Clone, Debug)]
pub struct HoroProduct {
    left: PointedTreeEnv,
    right: PointedTreeEnv,
}

impl HoroProduct {
    pub fn new(left: PointedTreeEnv, right: PointedTreeEnv) -> Self {
        HoroProduct { left, right }
    }

    pub fn left_env(&self) -> &PointedTreeEnv {
        &self.left
    }

    pub fn right_env(&self) -> &PointedTreeEnv {
        &self.right
    }

    pub fn origin(&self) -> ProductVertex {
        ProductVertex::origin()
    }

    pub fn degree(&self, v: &ProductVertex) -> u32 {
        self.right.offspring(&v.right) + self.left.offspring(&v.left)
    }

    /// Neighbors in a frozen order: up-moves first (right child slots
    /// ascending), then down-moves (left child slots ascending). Walk
    /// kernels and the distribution code rely on this order, so it must
    /// never change.
    pub fn neighbors(&self, v: &ProductVertex) -> Vec<ProductVertex> {
        let mut out = Vec::with_capacity(self.degree(v) as usize);
        let lp = self.left.parent(&v.left);
        for j in 0..self.right.offspring(&v.right) {
            out.push(ProductVertex::pair_unchecked(
                lp.clone(),
                self.right.child(&v.right, j),
            ));
        }
        let rp = self.right.parent(&v.right);
        for i in 0..self.left.offspring(&v.left) {
            out.push(ProductVertex::pair_unchecked(
                self.left.child(&v.left, i),
                rp.clone(),
            ));
        }
        out
    }

    /// In-place up-move: left coordinate to its parent, right coordinate to
    /// child `slot`. Together with [`step_down`](Self::step_down) this keeps
    /// million-step walks O(1) per step where the allocating neighbor
    /// constructors would copy addresses of length O(t).
    pub fn step_up(&self, v: &mut ProductVertex, slot: u32) {
        self.left.step_to_parent(&mut v.left);
        self.right.step_to_child(&mut v.right, slot);
    }

    /// In-place down-move: left coordinate to child `slot`, right coordinate
    /// to its parent.
    pub fn step_down(&self, v: &mut ProductVertex, slot: u32) {
        self.left.step_to_child(&mut v.left, slot);
        self.right.step_to_parent(&mut v.right);
    }

    /// Height cocycle between product vertices; equals the left tree's
    /// Busemann cocycle and the negated right one. The two computations can
    /// only disagree on a vertex that dodged the constructor invariant.
    pub fn height_cocycle(&self, v: &ProductVertex, w: &ProductVertex) -> i64 {
        let b = self.left.busemann(&v.left, &w.left);
        debug_assert_eq!(b, -self.right.busemann(&v.right, &w.right));
        b
    }

    /// The lower and upper turning heights (L, U) of geodesics from `v` to
    /// `w`, in product coordinates: L from the right confluence, U from the
    /// left one. `L <= min height <= max height <= U`.
    pub fn turning_heights(&self, v: &ProductVertex, w: &ProductVertex) -> (i64, i64) {
        let upper = self.left.confluence(&v.left, &w.left).height();
        let lower = -self.right.confluence(&v.right, &w.right).height();
        (lower, upper)
    }

    /// Graph distance: sum of the tree distances minus the height
    /// mismatch. Equivalently `2U - 2L - |height difference|`.
    pub fn product_distance(&self, v: &ProductVertex, w: &ProductVertex) -> u64 {
        let dl = self.left.tree_distance(&v.left, &w.left);
        let dr = self.right.tree_distance(&v.right, &w.right);
        dl + dr - self.height_cocycle(v, w).unsigned_abs()
    }

    /// The geodesic from `v` to `w` selected by `choice`. Errors if the via
    /// vertices sit at the wrong heights or are not descendants of the
    /// required coordinates.
    pub fn geodesic_segment(
        &self,
        v: &ProductVertex,
        w: &ProductVertex,
        choice: &GeodesicChoice,
    ) -> Result<Vec<ProductVertex>, ProductError> {
        let (lo, up) = self.turning_heights(v, w);
        let (hv, hw) = (v.height(), w.height());
        match choice {
            GeodesicChoice::DownUpDown {
                left_via,
                right_via,
            } => {
                if hv > hw {
                    return Err(ProductError::InvalidChoice(format!(
                        "down-up-down needs start height {hv} <= target height {hw}"
                    )));
                }
                check_via(&self.left, &v.left, left_via, lo, "left via")?;
                check_via(&self.right, &w.right, right_via, -up, "right via")?;
                Ok(self.zigzag(v, w, left_via, right_via, lo, up, true))
            }
            GeodesicChoice::UpDownUp {
                left_via,
                right_via,
            } => {
                if hv < hw {
                    return Err(ProductError::InvalidChoice(format!(
                        "up-down-up needs start height {hv} >= target height {hw}"
                    )));
                }
                check_via(&self.left, &w.left, left_via, lo, "left via")?;
                check_via(&self.right, &v.right, right_via, -up, "right via")?;
                Ok(self.zigzag(v, w, left_via, right_via, lo, up, false))
            }
        }
    }

    /// Assemble the three-phase path. `down_first` selects down-up-down;
    /// otherwise up-down-up. The via vertices are already validated.
    #[allow(clippy::too_many_arguments)]
    fn zigzag(
        &self,
        v: &ProductVertex,
        w: &ProductVertex,
        left_via: &TreeVertexAddr,
        right_via: &TreeVertexAddr,
        lo: i64,
        up: i64,
        down_first: bool,
    ) -> Vec<ProductVertex> {
        let mut path = vec![v.clone()];
        if down_first {
            // left: v.left down to left_via, then up to the left confluence,
            // then down to w.left; right mirrors with parents first.
            let l1 = descend_chain(&self.left, &v.left, left_via);
            let r1 = ascend_chain(&self.right, &v.right, -lo);
            extend_phase(&mut path, &l1, &r1);
            let l2 = ascend_chain(&self.left, left_via, up);
            let r2 = descend_chain(&self.right, &ancestor(&self.right, right_via, -lo), right_via);
            extend_phase(&mut path, &l2, &r2);
            let l3 = descend_chain(&self.left, &ancestor(&self.left, &w.left, up), &w.left);
            let r3 = ascend_chain(&self.right, right_via, w.right.height());
            extend_phase(&mut path, &l3, &r3);
        } else {
            let l1 = ascend_chain(&self.left, &v.left, up);
            let r1 = descend_chain(&self.right, &v.right, right_via);
            extend_phase(&mut path, &l1, &r1);
            let l2 = descend_chain(&self.left, &ancestor(&self.left, left_via, up), left_via);
            let r2 = ascend_chain(&self.right, right_via, -lo);
            extend_phase(&mut path, &l2, &r2);
            let l3 = ascend_chain(&self.left, left_via, w.left.height());
            let r3 = descend_chain(&self.right, &ancestor(&self.right, &w.right, -lo), &w.right);
            extend_phase(&mut path, &l3, &r3);
        }
        debug_assert_eq!(path.last(), Some(w));
        debug_assert_eq!(path.len() as u64, self.product_distance(v, w) + 1);
        path
    }

    /// All geodesics from `v` to `w`, in a deterministic order, capped at
    /// `max_count` paths. The second component reports whether the cap
    /// truncated the enumeration. Equal-height pairs admit both zigzag
    /// orders; duplicates are emitted once.
    pub fn enumerate_geodesics(
        &self,
        v: &ProductVertex,
        w: &ProductVertex,
        max_count: usize,
    ) -> (Vec<Vec<ProductVertex>>, bool) {
        let (lo, up) = self.turning_heights(v, w);
        let (hv, hw) = (v.height(), w.height());
        let mut out: Vec<Vec<ProductVertex>> = Vec::new();
        let mut seen: HashSet<Vec<ProductVertex>> = HashSet::new();
        let mut truncated = false;

        let mut push = |path: Vec<ProductVertex>,
                        out: &mut Vec<Vec<ProductVertex>>,
                        truncated: &mut bool| {
            if seen.contains(&path) {
                return true;
            }
            if out.len() == max_count {
                *truncated = true;
                return false;
            }
            seen.insert(path.clone());
            out.push(path);
            true
        };

        if hv <= hw {
            let lvs = descendants_at(&self.left, &v.left, lo);
            let rvs = descendants_at(&self.right, &w.right, -up);
            'outer1: for lv in &lvs {
                for rv in &rvs {
                    let p = self.zigzag(v, w, lv, rv, lo, up, true);
                    if !push(p, &mut out, &mut truncated) {
                        break 'outer1;
                    }
                }
            }
        }
        if hv >= hw && !truncated {
            let lvs = descendants_at(&self.left, &w.left, lo);
            let rvs = descendants_at(&self.right, &v.right, -up);
            'outer2: for rv in &rvs {
                for lv in &lvs {
                    let p = self.zigzag(v, w, lv, rv, lo, up, false);
                    if !push(p, &mut out, &mut truncated) {
                        break 'outer2;
                    }
                }
            }
        }
        (out, truncated)
    }

    /// First `n + 1` vertices of the geodesic ray from `v` toward a
    /// boundary point. After the single turn the heights are strictly
    /// monotone forever.
    pub fn geodesic_ray(
        &self,
        v: &ProductVertex,
        target: &RayTarget,
        n: usize,
    ) -> Result<Vec<ProductVertex>, ProductError> {
        match target {
            RayTarget::Upper { via, end } => {
                let (right_ups, mut walker) = self.right.ray_to_end_parts(&v.right, end);
                let turn = -walker_height(&right_ups);
                if via.height() != turn || !self.left.is_upward_ancestor(&v.left, via) {
                    return Err(ProductError::InvalidTarget(format!(
                        "via {via} must descend from {} to height {turn}",
                        v.left
                    )));
                }
                let left_down = descend_chain(&self.left, &v.left, via);
                debug_assert_eq!(left_down.len(), right_ups.len() - 1);
                let mut out = vec![v.clone()];
                for (l, r) in left_down.iter().zip(&right_ups[1..]) {
                    out.push(ProductVertex::pair_unchecked(l.clone(), r.clone()));
                }
                out.truncate(n + 1);
                let mut cur_left = via.clone();
                while out.len() < n + 1 {
                    cur_left = self.left.parent(&cur_left);
                    out.push(ProductVertex::pair_unchecked(cur_left.clone(), walker.step()));
                }
                Ok(out)
            }
            RayTarget::Lower { end, via } => {
                let (left_ups, mut walker) = self.left.ray_to_end_parts(&v.left, end);
                let turn = walker_height(&left_ups);
                if via.height() != -turn || !self.right.is_upward_ancestor(&v.right, via) {
                    return Err(ProductError::InvalidTarget(format!(
                        "via {via} must descend from {} to height {}",
                        v.right, -turn
                    )));
                }
                let right_down = descend_chain(&self.right, &v.right, via);
                debug_assert_eq!(right_down.len(), left_ups.len() - 1);
                let mut out = vec![v.clone()];
                for (l, r) in left_ups[1..].iter().zip(&right_down) {
                    out.push(ProductVertex::pair_unchecked(l.clone(), r.clone()));
                }
                out.truncate(n + 1);
                let mut cur_right = via.clone();
                while out.len() < n + 1 {
                    cur_right = self.right.parent(&cur_right);
                    out.push(ProductVertex::pair_unchecked(walker.step(), cur_right.clone()));
                }
                Ok(out)
            }
        }
    }

    /// The unique bilateral geodesic joining a lower boundary point to an
    /// upper one. Heights along it form an arithmetic progression with step
    /// 1: position `i` sits at height `height_anchor + i` when traversing
    /// from the lower point, `height_anchor - i` when the arguments come
    /// swapped (which reverses the path).
    pub fn bilateral_geodesic(
        &self,
        from: &BoundaryPoint,
        to: &BoundaryPoint,
        height_anchor: i64,
    ) -> Result<BilateralGeodesic<'_>, ProductError> {
        let (lower, upper, dir) = match (from.side, to.side) {
            (BoundarySide::Lower, BoundarySide::Upper) => (&from.end, &to.end, 1),
            (BoundarySide::Upper, BoundarySide::Lower) => (&to.end, &from.end, -1),
            _ => {
                return Err(ProductError::InvalidTarget(
                    "bilateral geodesic needs one lower and one upper boundary point".into(),
                ))
            }
        };
        Ok(BilateralGeodesic {
            left: RaySide::new(&self.left, lower),
            right: RaySide::new(&self.right, upper),
            anchor: height_anchor,
            dir,
        })
    }

    /// Ray target from `v` toward `point` with the canonical turning
    /// vertex: descend through child slot 0 to the required height. The
    /// result always passes [`HoroProduct::geodesic_ray`] validation.
    pub fn canonical_ray_target(&self, v: &ProductVertex, point: &BoundaryPoint) -> RayTarget {
        match point.side {
            BoundarySide::Upper => {
                let (ups, _) = self.right.ray_to_end_parts(v.right(), &point.end);
                let turn = -ups.last().unwrap().height();
                let mut via = v.left().clone();
                while via.height() > turn {
                    via = self.left.child(&via, 0);
                }
                RayTarget::Upper {
                    via,
                    end: point.end.clone(),
                }
            }
            BoundarySide::Lower => {
                let (ups, _) = self.left.ray_to_end_parts(v.left(), &point.end);
                let turn = ups.last().unwrap().height();
                let mut via = v.right().clone();
                while via.height() > -turn {
                    via = self.right.child(&via, 0);
                }
                RayTarget::Lower {
                    end: point.end.clone(),
                    via,
                }
            }
        }
    }

    /// Decide whether a trajectory is converging to a boundary point.
    ///
    /// Looks at the last half of the path: the height must move by at least
    /// max(1, window/16) in one direction, and the addresses in the free
    /// coordinate must stabilize behind a common descent prefix of length
    /// at least `prefix_depth` under a common anchor. Returns the boundary
    /// point read off from that prefix together with the number of trailing
    /// steps that already extend it, or `None` when no side qualifies.
    pub fn classify_limit(
        &self,
        path: &[ProductVertex],
        prefix_depth: usize,
    ) -> Option<(BoundaryPoint, usize)> {
        if path.len() < 4 {
            return None;
        }
        let window = &path[path.len() / 2..];
        let rise = window.last().unwrap().height() - window[0].height();
        let margin = 1.max(window.len() as i64 / 16);
        if rise >= margin {
            let addrs: Vec<&TreeVertexAddr> = window.iter().map(|v| v.right()).collect();
            if let Some((end, stable)) = stabilized_end(&addrs, prefix_depth) {
                return Some((
                    BoundaryPoint {
                        side: BoundarySide::Upper,
                        end,
                    },
                    stable,
                ));
            }
        }
        if -rise >= margin {
            let addrs: Vec<&TreeVertexAddr> = window.iter().map(|v| v.left()).collect();
            if let Some((end, stable)) = stabilized_end(&addrs, prefix_depth) {
                return Some((
                    BoundaryPoint {
                        side: BoundarySide::Lower,
                        end,
                    },
                    stable,
                ));
            }
        }
        None
    }
}

/// Common end of a window of tree addresses: all must share a spine depth
/// and a descent prefix of at least `prefix_depth`. Returns the end plus
/// the count of trailing addresses extending the full common prefix.
fn stabilized_end(addrs: &[&TreeVertexAddr], prefix_depth: usize) -> Option<(End, usize)> {
    let k = addrs[0].spine_depth();
    if addrs.iter().any(|a| a.spine_depth() != k) {
        return None;
    }
    let mut lcp = addrs[0].descent().to_vec();
    for a in &addrs[1..] {
        let d = a.descent();
        let mut n = 0;
        while n < lcp.len() && n < d.len() && lcp[n] == d[n] {
            n += 1;
        }
        lcp.truncate(n);
    }
    if lcp.len() < prefix_depth {
        return None;
    }
    let stable = addrs
        .iter()
        .rev()
        .take_while(|a| a.descent().len() >= lcp.len() && a.descent()[..lcp.len()] == lcp[..])
        .count();
    Some((
        End {
            anchor: TreeVertexAddr::spine(k),
            prefix: lcp,
            tail: TailRule::FixedChild(0),
        },
        stable,
    ))
}

/// One side of a bilateral geodesic: the bi-infinite extension of an end's
/// ray, addressable by height. Above the anchor it is the ancestor chain;
/// below, the memoized ray.
struct RaySide<'a> {
    env: &'a PointedTreeEnv,
    anchor_height: i64,
    below: Vec<TreeVertexAddr>,
    walker: crate::tree::EndWalker<'a>,
}

impl<'a> RaySide<'a> {
    fn new(env: &'a PointedTreeEnv, end: &End) -> Self {
        let walker = crate::tree::EndWalker::new(env, end);
        RaySide {
            env,
            anchor_height: end.anchor.height(),
            below: vec![end.anchor.clone()],
            walker,
        }
    }

    fn at_height(&mut self, h: i64) -> TreeVertexAddr {
        if h >= self.anchor_height {
            self.env.ancestor_at_height(&self.below[0], h)
        } else {
            let idx = (self.anchor_height - h) as usize;
            while self.below.len() <= idx {
                self.below.push(self.walker.step());
            }
            self.below[idx].clone()
        }
    }
}

/// Lazily materialized bilateral geodesic; see
/// [`HoroProduct::bilateral_geodesic`].
pub struct BilateralGeodesic<'a> {
    left: RaySide<'a>,
    right: RaySide<'a>,
    anchor: i64,
    dir: i64,
}

impl BilateralGeodesic<'_> {
    /// Height at position `pos`.
    pub fn height_of(&self, pos: i64) -> i64 {
        self.anchor + self.dir * pos
    }

    /// The unique vertex of the geodesic at position `pos`.
    pub fn vertex_at(&mut self, pos: i64) -> ProductVertex {
        let h = self.height_of(pos);
        ProductVertex::pair_unchecked(self.left.at_height(h), self.right.at_height(-h))
    }

    /// Vertices at positions `lo..=hi`, in ascending position order.
    pub fn window(&mut self, lo: i64, hi: i64) -> Vec<ProductVertex> {
        (lo..=hi).map(|p| self.vertex_at(p)).collect()
    }
}

fn walker_height(ups: &[TreeVertexAddr]) -> i64 {
    ups.last().unwrap().height()
}

fn ancestor(env: &PointedTreeEnv, x: &TreeVertexAddr, h: i64) -> TreeVertexAddr {
    env.ancestor_at_height(x, h)
}

/// Vertices strictly between `top`'s height and `bottom`, walking down:
/// the reversed parent chain from `bottom` (exclusive of `top`).
fn descend_chain(
    env: &PointedTreeEnv,
    top: &TreeVertexAddr,
    bottom: &TreeVertexAddr,
) -> Vec<TreeVertexAddr> {
    debug_assert!(env.is_upward_ancestor(top, bottom));
    let mut chain = Vec::with_capacity((top.height() - bottom.height()) as usize);
    let mut cur = bottom.clone();
    while cur != *top {
        chain.push(cur.clone());
        cur = env.parent(&cur);
    }
    chain.reverse();
    chain
}

/// Strict ascent from `x` up to height `h`, excluding `x` itself.
fn ascend_chain(env: &PointedTreeEnv, x: &TreeVertexAddr, h: i64) -> Vec<TreeVertexAddr> {
    let mut chain = Vec::with_capacity((h - x.height()) as usize);
    let mut cur = x.clone();
    while cur.height() < h {
        cur = env.parent(&cur);
        chain.push(cur.clone());
    }
    chain
}

fn extend_phase(path: &mut Vec<ProductVertex>, ls: &[TreeVertexAddr], rs: &[TreeVertexAddr]) {
    debug_assert_eq!(ls.len(), rs.len());
    for (l, r) in ls.iter().zip(rs) {
        path.push(ProductVertex::pair_unchecked(l.clone(), r.clone()));
    }
}

/// All descendants of `x` at height `h <= height(x)`, in child-slot
/// lexicographic order.
fn descendants_at(env: &PointedTreeEnv, x: &TreeVertexAddr, h: i64) -> Vec<TreeVertexAddr> {
    fn rec(
        env: &PointedTreeEnv,
        cur: &TreeVertexAddr,
        depth: u64,
        out: &mut Vec<TreeVertexAddr>,
    ) {
        if depth == 0 {
            out.push(cur.clone());
            return;
        }
        for i in 0..env.offspring(cur) {
            rec(env, &env.child(cur, i), depth - 1, out);
        }
    }
    let depth = x.height() - h;
    assert!(depth >= 0, "descendants_at needs h <= height(x)");
    let mut out = Vec::new();
    rec(env, x, depth as u64, &mut out);
    out
}

fn check_via(
    env: &PointedTreeEnv,
    from: &TreeVertexAddr,
    via: &TreeVertexAddr,
    h: i64,
    what: &str,
) -> Result<(), ProductError> {
    if via.height() != h {
        return Err(ProductError::InvalidChoice(format!(
            "{what} {via} must sit at height {h}"
        )));
    }
    if !env.is_upward_ancestor(from, via) {
        return Err(ProductError::InvalidChoice(format!(
            "{what} {via} must descend from {from}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dl(p: u32, q: u32) -> HoroProduct {
        HoroProduct::new(
            PointedTreeEnv::homogeneous(p, format!("t{p}")).unwrap(),
            PointedTreeEnv::homogeneous(q, format!("t{q}")).unwrap(),
        )
    }

    fn pv(s: &str) -> ProductVertex {
        s.parse().unwrap()
    }

    #[test]
    fn vertex_constructor_enforces_height_balance() {
        let ok = ProductVertex::new(TreeVertexAddr::spine(1), "0:[0]".parse().unwrap());
        assert!(ok.is_ok());
        let bad = ProductVertex::new(TreeVertexAddr::spine(1), TreeVertexAddr::root());
        assert_eq!(
            bad.unwrap_err(),
            ProductError::InconsistentHeights { left: 1, right: 0 }
        );
    }

    #[test]
    fn neighbor_order_is_ups_then_downs() {
        let g = dl(2, 3);
        let o = g.origin();
        let nbrs = g.neighbors(&o);
        assert_eq!(nbrs.len(), 5);
        assert_eq!(g.degree(&o), 5);
        for n in &nbrs[..3] {
            assert_eq!(n.height(), 1);
            assert_eq!(n.left(), &TreeVertexAddr::spine(1));
        }
        for n in &nbrs[3..] {
            assert_eq!(n.height(), -1);
            assert_eq!(n.right(), &TreeVertexAddr::spine(1));
        }
        // right child slots ascend over the up block, left over the down
        assert_eq!(nbrs[0], pv("(1:[]|0:[0])"));
        assert_eq!(nbrs[1], pv("(1:[]|0:[1])"));
        assert_eq!(nbrs[2], pv("(1:[]|0:[2])"));
        assert_eq!(nbrs[3], pv("(0:[0]|1:[])"));
        assert_eq!(nbrs[4], pv("(0:[1]|1:[])"));
    }

    #[test]
    fn neighbors_are_symmetric_and_at_distance_one() {
        let g = dl(2, 2);
        let o = g.origin();
        let mut seen: HashSet<ProductVertex> = HashSet::from([o.clone()]);
        let mut frontier = vec![o.clone()];
        for _ in 0..4 {
            let mut next = Vec::new();
            for v in &frontier {
                for n in g.neighbors(v) {
                    assert_eq!(g.product_distance(v, &n), 1);
                    assert!(g.neighbors(&n).contains(v), "edge not symmetric");
                    if seen.insert(n.clone()) {
                        next.push(n);
                    }
                }
            }
            frontier = next;
        }
    }

    #[test]
    fn cocycle_is_additive_and_antisymmetric() {
        let g = dl(2, 3);
        let mut ball = vec![g.origin()];
        let mut seen: HashSet<ProductVertex> = ball.iter().cloned().collect();
        for _ in 0..2 {
            let mut next = Vec::new();
            for v in &ball {
                for n in g.neighbors(v) {
                    if seen.insert(n.clone()) {
                        next.push(n);
                    }
                }
            }
            ball.extend(next);
        }
        for x in ball.iter().step_by(3) {
            for y in ball.iter().step_by(5) {
                assert_eq!(g.height_cocycle(x, y), -g.height_cocycle(y, x));
                for z in ball.iter().step_by(7) {
                    assert_eq!(
                        g.height_cocycle(x, z),
                        g.height_cocycle(x, y) + g.height_cocycle(y, z)
                    );
                }
            }
        }
        assert_eq!(g.height_cocycle(&g.origin(), &g.origin()), 0);
    }

    #[test]
    fn adjacent_pairs_have_two_vertex_geodesics() {
        let g = dl(2, 3);
        let o = g.origin();
        for n in g.neighbors(&o) {
            let (paths, truncated) = g.enumerate_geodesics(&o, &n, 100);
            assert!(!truncated);
            assert_eq!(paths, vec![vec![o.clone(), n.clone()]]);
        }
        // X = Y: exactly the trivial geodesic
        let (paths, _) = g.enumerate_geodesics(&o, &o, 100);
        assert_eq!(paths, vec![vec![o.clone()]]);
    }

    #[test]
    fn distance_examples() {
        let g = dl(2, 3);
        let o = g.origin();
        assert_eq!(g.product_distance(&o, &o), 0);
        let up = &g.neighbors(&o)[0];
        assert_eq!(g.product_distance(&o, up), 1);
        assert_eq!(g.height_cocycle(&o, up), -1);
        // same height, left coordinates siblings, right equal: one down, one up
        let a = pv("(0:[0]|1:[])");
        let b = pv("(0:[1]|1:[])");
        assert_eq!(g.product_distance(&a, &b), 2);
        // right coordinate hops to the sibling of its root: 0 + 2 - 0
        let c = pv("(0:[]|1:[1])");
        assert_eq!(g.product_distance(&o, &c), 2);
        // both coordinates split below the roots
        let x = pv("(0:[0]|1:[])");
        let y = pv("(1:[]|0:[1])");
        assert_eq!(g.height_cocycle(&x, &y), -2);
        assert_eq!(g.product_distance(&x, &y), 2);
    }

    #[test]
    fn projections_are_bounded_by_product_distance() {
        let g = dl(2, 2);
        let o = g.origin();
        let mut ball = vec![o.clone()];
        let mut seen: HashSet<ProductVertex> = ball.iter().cloned().collect();
        let mut frontier = ball.clone();
        for _ in 0..3 {
            let mut next = Vec::new();
            for v in &frontier {
                for n in g.neighbors(v) {
                    if seen.insert(n.clone()) {
                        next.push(n);
                    }
                }
            }
            ball.extend(next.iter().cloned());
            frontier = next;
        }
        for v in &ball {
            for w in &ball {
                let d = g.product_distance(v, w);
                assert!(g.left_env().tree_distance(v.left(), w.left()) <= d);
                assert!(g.right_env().tree_distance(v.right(), w.right()) <= d);
                assert!(g.height_cocycle(v, w).unsigned_abs() <= d);
                assert_eq!(d, g.product_distance(w, v));
            }
        }
    }

    #[test]
    fn enumerated_geodesics_are_valid_paths() {
        let g = dl(2, 3);
        let pairs = [
            (pv("(0:[]|0:[])"), pv("(2:[]|0:[0,1])")),
            (pv("(0:[0,1]|2:[])"), pv("(1:[]|0:[2])")),
            (pv("(0:[0]|1:[])"), pv("(0:[1]|1:[])")),
            (pv("(1:[]|0:[0])"), pv("(1:[]|0:[2])")),
            (pv("(0:[0,0]|2:[])"), pv("(0:[1,1]|2:[])")),
        ];
        for (v, w) in &pairs {
            let d = g.product_distance(v, w);
            let (paths, truncated) = g.enumerate_geodesics(v, w, 10_000);
            assert!(!truncated);
            assert!(!paths.is_empty());
            let mut seen = HashSet::new();
            for p in &paths {
                assert_eq!(p.len() as u64, d + 1, "{v} -> {w}");
                assert_eq!(p.first().unwrap(), v);
                assert_eq!(p.last().unwrap(), w);
                for pair in p.windows(2) {
                    assert_eq!(g.product_distance(&pair[0], &pair[1]), 1);
                }
                assert!(seen.insert(p.clone()), "duplicate geodesic emitted");
            }
        }
    }

    #[test]
    fn geodesic_counts_match_descendant_products() {
        let g = dl(2, 3);
        // strictly below: drop 2 in the left tree (2^2 options), upper turn
        // forced at the target height (single option)
        let v = pv("(0:[]|0:[])");
        let w = pv("(2:[]|0:[0,1])");
        let (paths, _) = g.enumerate_geodesics(&v, &w, 10_000);
        // turning heights: lower comes from the right confluence
        let (lo, up) = g.turning_heights(&v, &w);
        assert_eq!((lo, up), (0, 2));
        assert_eq!(paths.len(), 1);

        // equal heights with identical right coordinates: both zigzag
        // orders produce the same family, so no double counting
        let a = pv("(0:[0,0]|2:[])");
        let b = pv("(0:[1,1]|2:[])");
        let (lo2, up2) = g.turning_heights(&a, &b);
        assert_eq!((lo2, up2), (-2, 0));
        let (paths2, _) = g.enumerate_geodesics(&a, &b, 10_000);
        // Both orders force the left vias (the start and target left
        // coordinates already sit at the lower turning height), leaving the
        // right via free over the 3^2 descendants of 2:[] at height 0; the
        // two families then coincide pathwise, so dedup leaves exactly 9.
        assert_eq!(paths2.len(), 9);
        for p in &paths2 {
            assert_eq!(p.len() as u64, g.product_distance(&a, &b) + 1);
        }
    }

    #[test]
    fn geodesic_choice_validation() {
        let g = dl(2, 2);
        let v = pv("(0:[]|0:[])");
        let w = pv("(2:[]|0:[0,0])");
        // wrong direction
        let bad = g.geodesic_segment(
            &w,
            &v,
            &GeodesicChoice::DownUpDown {
                left_via: "0:[]".parse().unwrap(),
                right_via: "0:[0,0]".parse().unwrap(),
            },
        );
        assert!(matches!(bad, Err(ProductError::InvalidChoice(_))));
        // via at wrong height
        let bad = g.geodesic_segment(
            &v,
            &w,
            &GeodesicChoice::DownUpDown {
                left_via: "0:[0]".parse().unwrap(),
                right_via: "0:[0,0]".parse().unwrap(),
            },
        );
        assert!(matches!(bad, Err(ProductError::InvalidChoice(_))));
        // valid: lower turn at height 0, upper at 2
        let ok = g.geodesic_segment(
            &v,
            &w,
            &GeodesicChoice::DownUpDown {
                left_via: "0:[]".parse().unwrap(),
                right_via: "0:[0,0]".parse().unwrap(),
            },
        );
        let p = ok.unwrap();
        assert_eq!(p.len() as u64, g.product_distance(&v, &w) + 1);
    }

    #[test]
    fn enumeration_cap_reports_truncation() {
        let g = dl(2, 2);
        // same height, distance 4, several geodesics
        let v = pv("(0:[0,0]|2:[])");
        let w = pv("(0:[1,1]|2:[])");
        let (all, trunc_all) = g.enumerate_geodesics(&v, &w, 10_000);
        assert!(!trunc_all);
        assert!(all.len() > 1);
        let (some, truncated) = g.enumerate_geodesics(&v, &w, 1);
        assert_eq!(some.len(), 1);
        assert!(truncated);
        assert_eq!(some[0], all[0]);
    }

    #[test]
    fn geodesic_ray_turns_once_then_climbs() {
        let g = dl(2, 2);
        let v = pv("(0:[0]|1:[])");
        // right end whose ray only meets [v.right, gamma') at the second
        // spine vertex, so the ray first descends one product step
        let end = End::with_prefix(TreeVertexAddr::spine(2), vec![1, 0]);
        let via = "0:[0,0]".parse().unwrap();
        let ray = g
            .geodesic_ray(&v, &RayTarget::Upper { via, end: end.clone() }, 8)
            .unwrap();
        assert_eq!(ray.len(), 9);
        assert_eq!(ray[0], v);
        // descends one step, then climbs forever
        assert_eq!(ray[1].height(), -2);
        for (i, w) in ray[1..].windows(2).enumerate() {
            assert_eq!(
                w[1].height(),
                w[0].height() + 1,
                "step {} not ascending",
                i + 1
            );
            assert_eq!(g.product_distance(&w[0], &w[1]), 1);
        }
        // wrong via height is rejected
        let bad = g.geodesic_ray(
            &v,
            &RayTarget::Upper {
                via: "0:[0,0,0]".parse().unwrap(),
                end,
            },
            4,
        );
        assert!(matches!(bad, Err(ProductError::InvalidTarget(_))));
    }

    #[test]
    fn lower_ray_mirrors_upper() {
        let g = dl(3, 2);
        let v = pv("(1:[]|0:[1])");
        // left end branching off the spine at height 2: the ray climbs one
        // product step before descending forever, and the right via sits
        // one level below v.right
        let end = End::with_prefix(TreeVertexAddr::spine(2), vec![2, 0]);
        let via = "0:[1,0]".parse().unwrap();
        let ray = g
            .geodesic_ray(&v, &RayTarget::Lower { end, via }, 8)
            .unwrap();
        assert_eq!(ray[0], v);
        for w in ray[1..].windows(2) {
            assert_eq!(w[1].height(), w[0].height() - 1);
            assert_eq!(g.product_distance(&w[0], &w[1]), 1);
        }
    }

    #[test]
    fn ray_prefix_is_geodesic() {
        let g = dl(2, 3);
        let v = pv("(0:[1]|1:[])");
        let end = End::seeded(TreeVertexAddr::root(), vec![2], 7);
        let conf = g.right_env().confluence(v.right(), &end.anchor);
        let turn = -conf.height();
        // v.left is already at the turning height, so it is its own via
        assert_eq!(turn, v.left().height());
        let via = v.left().clone();
        let ray = g
            .geodesic_ray(&v, &RayTarget::Upper { via, end }, 30)
            .unwrap();
        for (i, a) in ray.iter().enumerate() {
            assert_eq!(g.product_distance(&ray[0], a) as usize, i);
        }
        // interior windows are geodesic too
        for s in 0..ray.len() {
            for t in s..ray.len() {
                assert_eq!(g.product_distance(&ray[s], &ray[t]) as usize, t - s);
            }
        }
    }

    #[test]
    fn bilateral_geodesic_is_a_height_parameterized_path() {
        let g = dl(2, 3);
        let lower = BoundaryPoint {
            side: BoundarySide::Lower,
            end: End::with_prefix("0:[1]".parse().unwrap(), vec![0, 1]),
        };
        let upper = BoundaryPoint {
            side: BoundarySide::Upper,
            end: End::seeded(TreeVertexAddr::spine(2), vec![2, 0], 99),
        };
        let mut bil = g.bilateral_geodesic(&lower, &upper, 0).unwrap();
        let win = bil.window(-20, 20);
        assert_eq!(win.len(), 41);
        for (i, v) in win.iter().enumerate() {
            assert_eq!(v.height(), -20 + i as i64);
        }
        // every window is a geodesic segment
        for m in 1..win.len() {
            for s in (0..win.len() - m).step_by(7) {
                assert_eq!(g.product_distance(&win[s], &win[s + m]) as usize, m);
            }
        }
        // random access agrees with the window
        assert_eq!(bil.vertex_at(0), win[20]);
        assert_eq!(bil.vertex_at(-6), win[14]);

        // swapping the boundary inputs reverses the path
        let mut rev = g.bilateral_geodesic(&upper, &lower, 0).unwrap();
        let back = rev.window(-20, 20);
        let mut flipped = back.clone();
        flipped.reverse();
        assert_eq!(win, flipped);

        // both points on the same side are rejected
        assert!(g.bilateral_geodesic(&lower, &lower, 0).is_err());
    }

    #[test]
    fn classify_limit_on_rays_and_noise() {
        let g = dl(2, 3);
        let v = g.origin();
        let end = End::seeded(TreeVertexAddr::root(), vec![1], 5);
        let via = v.left().clone();
        let ray = g
            .geodesic_ray(&v, &RayTarget::Upper { via, end }, 40)
            .unwrap();
        let (point, stable) = g.classify_limit(&ray, 3).expect("ray must classify");
        assert_eq!(point.side, BoundarySide::Upper);
        assert!(stable > 0);
        assert!(point.end.prefix.len() >= 3);

        // a height-oscillating path classifies as nothing
        let a = g.origin();
        let b = g.neighbors(&a)[0].clone();
        let mut osc = Vec::new();
        for _ in 0..20 {
            osc.push(a.clone());
            osc.push(b.clone());
        }
        assert!(g.classify_limit(&osc, 1).is_none());
        // too-short paths never classify
        assert!(g.classify_limit(&ray[..3], 0).is_none());
    }

    #[test]
    fn classify_limit_reports_lower_side() {
        let g = dl(2, 2);
        let v = g.origin();
        let end = End::with_prefix(TreeVertexAddr::root(), vec![1, 0, 1, 0, 1, 0]);
        let via = v.right().clone();
        let ray = g
            .geodesic_ray(&v, &RayTarget::Lower { end, via }, 40)
            .unwrap();
        let (point, _) = g.classify_limit(&ray, 2).expect("descending ray");
        assert_eq!(point.side, BoundarySide::Lower);
        assert_eq!(&point.end.prefix[..2], &[1, 0]);
    }

    #[test]
    fn canonical_target_is_always_valid() {
        let g = dl(2, 3);
        let starts = ["(0:[]|0:[])", "(2:[1,2]|0:[])", "(1:[1,1,0]|2:[])"];
        let ends = [
            End::below(TreeVertexAddr::root()),
            End::with_prefix(TreeVertexAddr::spine(2), vec![2, 0]),
        ];
        for s in starts {
            let v = pv(s);
            for end in &ends {
                for side in [BoundarySide::Upper, BoundarySide::Lower] {
                    let point = BoundaryPoint {
                        side,
                        end: end.clone(),
                    };
                    let target = g.canonical_ray_target(&v, &point);
                    let ray = g.geodesic_ray(&v, &target, 20).expect("canonical target");
                    assert_eq!(ray.len(), 21);
                    // the appended part of the via descent uses child slot 0 only
                    let (start, via) = match &target {
                        RayTarget::Upper { via, .. } => (v.left(), via),
                        RayTarget::Lower { via, .. } => (v.right(), via),
                    };
                    assert!(via.descent()[start.descent().len()..].iter().all(|&i| i == 0));
                }
            }
        }
    }

    #[test]
    fn vertex_serialization_round_trips() {
        for s in ["(0:[]|0:[])", "(2:[]|0:[1,1])", "(0:[0,1]|2:[])"] {
            let v: ProductVertex = s.parse().unwrap();
            assert_eq!(v.to_string(), s);
        }
        assert!("(1:[]|1:[])".parse::<ProductVertex>().is_err());
        assert!("0:[]|0:[]".parse::<ProductVertex>().is_err());
    }
}
