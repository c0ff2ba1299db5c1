//! Finite measured equivalence relations carrying leafwise Markov kernels.
//!
//! Everything here is finite linear algebra: points are indices, classes a
//! partition, the measure a positive weight vector, and the kernel a
//! row-stochastic matrix supported within classes. That makes the density,
//! stationarity, cotransition, reversibility, and conditional-entropy
//! identities exactly checkable, which is the purpose of the module: the ops
//! compute each side of an identity independently and report how far apart
//! they land.

use std::collections::BTreeMap;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::Serialize;
use thiserror::Error;

use crate::mix;

/// Exact-agreement tolerance for the identity checks.
pub const IDENTITY_TOL: f64 = 1e-12;
/// Cap on `points^(n+1)` terms in exhaustive path enumeration.
pub const PATH_BUDGET: f64 = 1e7;

#[derive(Debug, Error)]
pub enum EqRelError {
    #[error("invalid relation: {0}")]
    Invalid(String),
    #[error("points {x} and {y} are not equivalent")]
    NotEquivalent { x: usize, y: usize },
    #[error("density formula gives {formula} but pushforward gives {direct} at point {at}")]
    FormulaMismatch { at: usize, direct: f64, formula: f64 },
    #[error("measure is not stationary (residual {residual:.3e})")]
    NotStationary { residual: f64 },
    #[error("enumerating {points}^{terms} paths exceeds the budget")]
    BudgetExceeded { points: usize, terms: usize },
}

/// A finite measured equivalence relation with a leafwise kernel and an
/// optional graph structure on the classes.
#[derive(Clone, Debug)]
pub struct FiniteEqRel {
    class_of: Vec<usize>,
    classes: Vec<Vec<usize>>,
    mu: Vec<f64>,
    p: Vec<Vec<f64>>,
    adj: Option<Vec<Vec<usize>>>,
}

impl FiniteEqRel {
    /// Builds a relation from a class assignment, a positive weight per
    /// point, and a kernel matrix. The kernel must be row-stochastic and
    /// supported within classes.
    pub fn new(
        class_of: Vec<usize>,
        mu: Vec<f64>,
        p: Vec<Vec<f64>>,
    ) -> Result<Self, EqRelError> {
        let n = class_of.len();
        if n == 0 {
            return Err(EqRelError::Invalid("no points".into()));
        }
        if mu.len() != n || p.len() != n {
            return Err(EqRelError::Invalid(
                "class, weight, and kernel sizes disagree".into(),
            ));
        }
        let num_classes = class_of.iter().max().unwrap() + 1;
        let mut classes = vec![Vec::new(); num_classes];
        for (x, &c) in class_of.iter().enumerate() {
            classes[c].push(x);
        }
        if classes.iter().any(Vec::is_empty) {
            return Err(EqRelError::Invalid("class ids must be contiguous".into()));
        }
        for (x, &w) in mu.iter().enumerate() {
            if !w.is_finite() || w <= 0.0 {
                return Err(EqRelError::Invalid(format!("mu({x}) = {w} must be positive")));
            }
        }
        for (x, row) in p.iter().enumerate() {
            if row.len() != n {
                return Err(EqRelError::Invalid(format!("kernel row {x} has wrong length")));
            }
            let mut sum = 0.0;
            for (y, &q) in row.iter().enumerate() {
                if !q.is_finite() || q < 0.0 {
                    return Err(EqRelError::Invalid(format!("p({x},{y}) = {q}")));
                }
                if q > 0.0 && class_of[x] != class_of[y] {
                    return Err(EqRelError::Invalid(format!(
                        "p({x},{y}) > 0 crosses classes"
                    )));
                }
                sum += q;
            }
            if (sum - 1.0).abs() > 1e-9 {
                return Err(EqRelError::Invalid(format!("kernel row {x} sums to {sum}")));
            }
        }
        Ok(FiniteEqRel {
            class_of,
            classes,
            mu,
            p,
            adj: None,
        })
    }

    /// Attaches a symmetric within-class edge set whose classes are
    /// connected. Edges are given in either orientation, without self loops.
    pub fn with_graph(mut self, edges: &[(usize, usize)]) -> Result<Self, EqRelError> {
        let n = self.class_of.len();
        let mut adj = vec![Vec::new(); n];
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(EqRelError::Invalid(format!("edge ({a},{b}) out of range")));
            }
            if a == b {
                return Err(EqRelError::Invalid(format!("self loop at {a}")));
            }
            if self.class_of[a] != self.class_of[b] {
                return Err(EqRelError::Invalid(format!("edge ({a},{b}) crosses classes")));
            }
            adj[a].push(b);
            adj[b].push(a);
        }
        for row in &mut adj {
            row.sort_unstable();
            row.dedup();
        }
        for members in &self.classes {
            if members.len() < 2 {
                continue;
            }
            let mut seen = vec![members[0]];
            let mut frontier = vec![members[0]];
            while let Some(x) = frontier.pop() {
                for &y in &adj[x] {
                    if !seen.contains(&y) {
                        seen.push(y);
                        frontier.push(y);
                    }
                }
            }
            if seen.len() != members.len() {
                return Err(EqRelError::Invalid(format!(
                    "class of point {} is not connected",
                    members[0]
                )));
            }
        }
        self.adj = Some(adj);
        Ok(self)
    }

    /// Graphed relation carrying the simple random walk on its classes:
    /// `p(x,y) = 1/deg(x)` on edges. Every point needs at least one edge.
    pub fn simple_random_walk(
        class_of: Vec<usize>,
        mu: Vec<f64>,
        edges: &[(usize, usize)],
    ) -> Result<Self, EqRelError> {
        let n = class_of.len();
        if n == 0 {
            return Err(EqRelError::Invalid("no points".into()));
        }
        let uniform = vec![vec![0.0; n]; n];
        // placeholder kernel cannot pass row validation, so assemble the
        // adjacency first and derive the kernel from it
        let mut shell = FiniteEqRel {
            class_of,
            classes: Vec::new(),
            mu,
            p: uniform,
            adj: None,
        };
        let num_classes = shell.class_of.iter().max().unwrap() + 1;
        let mut classes = vec![Vec::new(); num_classes];
        for (x, &c) in shell.class_of.iter().enumerate() {
            classes[c].push(x);
        }
        shell.classes = classes;
        let shell = shell.with_graph(edges)?;
        let adj = shell.adj.clone().unwrap();
        let mut p = vec![vec![0.0; n]; n];
        for (x, nbrs) in adj.iter().enumerate() {
            if nbrs.is_empty() {
                return Err(EqRelError::Invalid(format!("point {x} has no edges")));
            }
            for &y in nbrs {
                p[x][y] = 1.0 / nbrs.len() as f64;
            }
        }
        let mut rel = FiniteEqRel::new(shell.class_of, shell.mu, p)?;
        rel.adj = Some(adj);
        Ok(rel)
    }

    pub fn points(&self) -> usize {
        self.class_of.len()
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn class_of(&self, x: usize) -> usize {
        self.class_of[x]
    }

    pub fn class_members(&self, class: usize) -> &[usize] {
        &self.classes[class]
    }

    pub fn mu(&self, x: usize) -> f64 {
        self.mu[x]
    }

    pub fn kernel(&self, x: usize, y: usize) -> f64 {
        self.p[x][y]
    }

    /// Graph degree of `x`, when a graph structure is present.
    pub fn degree(&self, x: usize) -> Option<usize> {
        self.adj.as_ref().map(|a| a[x].len())
    }

    /// The degree-weighted measure `deg * mu`, when a graph is present.
    pub fn degree_measure(&self) -> Option<Vec<f64>> {
        let adj = self.adj.as_ref()?;
        Some(
            self.mu
                .iter()
                .zip(adj)
                .map(|(&m, nbrs)| m * nbrs.len() as f64)
                .collect(),
        )
    }

    /// Radon-Nikodym cocycle of the weight measure: `mu(y) / mu(x)`.
    pub fn radon_nikodym(&self, x: usize, y: usize) -> Result<f64, EqRelError> {
        if self.class_of[x] != self.class_of[y] {
            return Err(EqRelError::NotEquivalent { x, y });
        }
        Ok(self.mu[y] / self.mu[x])
    }

    /// Leafwise measure based at `x`: weights `lambda(y) / mu(x)` over the
    /// class of `x`. Equivalent base points give proportional vectors.
    pub fn leafwise_measure(&self, lambda: &[f64], x: usize) -> LeafwiseMeasure {
        let members = &self.classes[self.class_of[x]];
        LeafwiseMeasure {
            base: x,
            weights: members
                .iter()
                .map(|&y| (y, lambda[y] / self.mu[x]))
                .collect(),
        }
    }

    /// Pushes `lambda` through the kernel twice: directly as a matrix
    /// product and via the density cocycle formula, erroring if the two
    /// disagree. Their agreement is an identity, so a mismatch means the
    /// inputs break a precondition or the arithmetic has a bug.
    pub fn apply_markov(&self, lambda: &[f64]) -> Result<Pushforward, EqRelError> {
        let n = self.points();
        if lambda.len() != n {
            return Err(EqRelError::Invalid("lambda has wrong length".into()));
        }
        let mut direct = vec![0.0; n];
        for (x, row) in self.p.iter().enumerate() {
            for (y, &q) in row.iter().enumerate() {
                direct[y] += lambda[x] * q;
            }
        }
        let mut density = vec![0.0; n];
        let mut max_gap = 0.0f64;
        for y in 0..n {
            let mut d = 0.0;
            for &x in &self.classes[self.class_of[y]] {
                // p(x,y) * Delta(y,x) * (dlambda/dmu)(x)
                d += self.p[x][y] * (self.mu[x] / self.mu[y]) * (lambda[x] / self.mu[x]);
            }
            density[y] = d;
            let gap = (d * self.mu[y] - direct[y]).abs();
            if gap > max_gap {
                max_gap = gap;
            }
            if gap > IDENTITY_TOL {
                return Err(EqRelError::FormulaMismatch {
                    at: y,
                    direct: direct[y],
                    formula: d * self.mu[y],
                });
            }
        }
        Ok(Pushforward {
            direct,
            density,
            max_gap,
        })
    }

    /// Checks stationarity of `lambda` twice: globally as `lambda P =
    /// lambda`, and leafwise through the measures of
    /// [`FiniteEqRel::leafwise_measure`]. The two criteria are equivalent
    /// and the verdicts are asserted to agree.
    pub fn stationarity_check(&self, lambda: &[f64]) -> Result<StationarityReport, EqRelError> {
        let push = self.apply_markov(lambda)?;
        let residual: f64 = push
            .direct
            .iter()
            .zip(lambda)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            / 2.0;
        let mut leafwise_residual = 0.0f64;
        for members in &self.classes {
            let base = members[0];
            let lw = self.leafwise_measure(lambda, base);
            for &(z, wz) in &lw.weights {
                let pushed: f64 = lw
                    .weights
                    .iter()
                    .map(|&(y, wy)| wy * self.p[y][z])
                    .sum();
                leafwise_residual = leafwise_residual.max((pushed - wz).abs());
            }
        }
        let stationary = residual <= IDENTITY_TOL;
        let leafwise_stationary = leafwise_residual <= IDENTITY_TOL;
        assert_eq!(
            stationary, leafwise_stationary,
            "global and leafwise stationarity verdicts must agree"
        );
        Ok(StationarityReport {
            stationary,
            residual,
            leafwise_residual,
        })
    }

    /// Time reversal of the kernel with respect to a stationary `lambda`:
    /// `p_rev(y,x) = p(x,y) * lambda(x)/lambda(y)`. Requires `lambda`
    /// stationary and strictly positive, else the reversal is ill-defined.
    pub fn cotransition(&self, lambda: &[f64]) -> Result<Vec<Vec<f64>>, EqRelError> {
        let rep = self.stationarity_check(lambda)?;
        if !rep.stationary {
            return Err(EqRelError::NotStationary {
                residual: rep.residual,
            });
        }
        if lambda.iter().any(|&w| w <= 0.0) {
            return Err(EqRelError::NotStationary {
                residual: f64::INFINITY,
            });
        }
        let n = self.points();
        let mut rev = vec![vec![0.0; n]; n];
        for y in 0..n {
            for &x in &self.classes[self.class_of[y]] {
                rev[y][x] = self.p[x][y] * lambda[x] / lambda[y];
            }
        }
        Ok(rev)
    }

    /// Whether the walk equals its own time reversal under `lambda`.
    pub fn reversibility_check(
        &self,
        lambda: &[f64],
    ) -> Result<ReversibilityReport, EqRelError> {
        let rev = self.cotransition(lambda)?;
        let mut max_violation = 0.0f64;
        for (row_rev, row_p) in rev.iter().zip(&self.p) {
            for (a, b) in row_rev.iter().zip(row_p) {
                max_violation = max_violation.max((a - b).abs());
            }
        }
        Ok(ReversibilityReport {
            reversible: max_violation <= IDENTITY_TOL,
            max_violation,
        })
    }

    /// Conditional entropy of the first `k` steps given the endpoints,
    /// computed two ways: exhaustively from the path distribution, and from
    /// the telescoped entropy formula `k*H_1 + H_{n-k} - H_n` with `H_m`
    /// the `lambda`-averaged entropy of the `m`-step rows. Requires a
    /// stationary `lambda`, which the identity silently assumes.
    pub fn conditional_entropy_identity(
        &self,
        lambda: &[f64],
        k: usize,
        n: usize,
    ) -> Result<EntropyIdentity, EqRelError> {
        assert!(1 <= k && k <= n, "need 1 <= k <= n");
        let points = self.points();
        if (points as f64).powi(n as i32 + 1) > PATH_BUDGET {
            return Err(EqRelError::BudgetExceeded {
                points,
                terms: n + 1,
            });
        }
        let rep = self.stationarity_check(lambda)?;
        if !rep.stationary {
            return Err(EqRelError::NotStationary {
                residual: rep.residual,
            });
        }
        let total: f64 = lambda.iter().sum();
        let start: Vec<f64> = lambda.iter().map(|w| w / total).collect();

        // exhaustive side: joint laws of (X_0..X_k, X_n) and (X_0, X_n)
        let mut joint_head: BTreeMap<(Vec<usize>, usize), f64> = BTreeMap::new();
        let mut joint_ends: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        let mut path = Vec::with_capacity(n + 1);
        for (x0, &s0) in start.iter().enumerate() {
            if s0 == 0.0 {
                continue;
            }
            path.push(x0);
            self.enumerate_paths(s0, n, &mut path, &mut |prob, path| {
                let head = path[..=k].to_vec();
                let ends = (path[0], path[n]);
                *joint_head.entry((head, ends.1)).or_insert(0.0) += prob;
                *joint_ends.entry(ends).or_insert(0.0) += prob;
            });
            path.pop();
        }
        let lhs = shannon(joint_head.values()) - shannon(joint_ends.values());

        // telescoped side from averaged row entropies
        let h = |m: usize| -> f64 {
            let mut pm = identity(points);
            for _ in 0..m {
                pm = matmul(&pm, &self.p);
            }
            pm.iter()
                .zip(&start)
                .map(|(row, &w)| w * shannon(row.iter()))
                .sum()
        };
        let rhs = k as f64 * h(1) + h(n - k) - h(n);
        Ok(EntropyIdentity {
            lhs,
            rhs,
            diff: lhs - rhs,
        })
    }

    fn enumerate_paths(
        &self,
        prob: f64,
        remaining: usize,
        path: &mut Vec<usize>,
        visit: &mut impl FnMut(f64, &[usize]),
    ) {
        if remaining == 0 {
            visit(prob, path);
            return;
        }
        let x = *path.last().unwrap();
        for &y in &self.classes[self.class_of[x]] {
            let q = self.p[x][y];
            if q == 0.0 {
                continue;
            }
            path.push(y);
            self.enumerate_paths(prob * q, remaining - 1, path, visit);
            path.pop();
        }
    }
}

/// See [`FiniteEqRel::leafwise_measure`].
#[derive(Clone, Debug, Serialize)]
pub struct LeafwiseMeasure {
    pub base: usize,
    /// `(point, weight)` pairs over the class of `base`, in member order.
    pub weights: Vec<(usize, f64)>,
}

/// Both computations of one kernel application. `density` is per unit of
/// the base measure; `direct` is the pushed measure itself.
#[derive(Clone, Debug, Serialize)]
pub struct Pushforward {
    pub direct: Vec<f64>,
    pub density: Vec<f64>,
    pub max_gap: f64,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct StationarityReport {
    pub stationary: bool,
    /// Half the L1 distance between `lambda P` and `lambda`.
    pub residual: f64,
    /// Worst pointwise leafwise-measure residual over all classes.
    pub leafwise_residual: f64,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ReversibilityReport {
    pub reversible: bool,
    pub max_violation: f64,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct EntropyIdentity {
    /// Conditional entropy from exhaustive path enumeration.
    pub lhs: f64,
    /// The same quantity from the telescoped entropy formula.
    pub rhs: f64,
    pub diff: f64,
}

fn shannon<'a>(probs: impl Iterator<Item = &'a f64>) -> f64 {
    // the + 0.0 turns the point-mass result -0.0 into plain zero
    -probs
        .filter(|&&p| p > 0.0)
        .map(|&p| p * p.ln())
        .sum::<f64>()
        + 0.0
}

fn identity(n: usize) -> Vec<Vec<f64>> {
    let mut m = vec![vec![0.0; n]; n];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    m
}

fn matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut out = vec![vec![0.0; n]; n];
    for i in 0..n {
        for l in 0..n {
            let v = a[i][l];
            if v == 0.0 {
                continue;
            }
            for j in 0..n {
                out[i][j] += v * b[l][j];
            }
        }
    }
    out
}

fn unit_f64(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / 9_007_199_254_740_992.0)
}

/// Random partition of `num_points` into classes of size at most
/// `max_class`, with random positive weights and a random within-class
/// kernel. Deterministic per seed.
pub fn random_relation(num_points: usize, max_class: usize, seed: u64) -> FiniteEqRel {
    assert!(num_points >= 1 && max_class >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(mix::fold(seed, 0x716c));
    let mut class_of = Vec::with_capacity(num_points);
    let mut next_class = 0;
    let mut left = num_points;
    while left > 0 {
        let size = 1 + mix::bounded(rng.next_u64(), left.min(max_class) as u32) as usize;
        class_of.extend(std::iter::repeat_n(next_class, size));
        next_class += 1;
        left -= size;
    }
    let mu: Vec<f64> = (0..num_points).map(|_| 0.25 + unit_f64(&mut rng)).collect();
    let mut p = vec![vec![0.0; num_points]; num_points];
    for x in 0..num_points {
        let members: Vec<usize> = (0..num_points)
            .filter(|&y| class_of[y] == class_of[x])
            .collect();
        let mut weights: Vec<f64> = members
            .iter()
            .map(|_| 0.05 + unit_f64(&mut rng))
            .collect();
        let total: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= total;
        }
        for (&y, &w) in members.iter().zip(&weights) {
            p[x][y] = w;
        }
    }
    FiniteEqRel::new(class_of, mu, p).expect("generated relation must validate")
}

/// Random graphed relation with connected classes, class-constant weights
/// (an invariant measure), and the simple-walk kernel. Deterministic per
/// seed.
pub fn random_graphed_relation(num_points: usize, max_class: usize, seed: u64) -> FiniteEqRel {
    assert!(num_points >= 2 && max_class >= 2);
    let mut rng = ChaCha8Rng::seed_from_u64(mix::fold(seed, 0x9c4a));
    let mut class_of = Vec::with_capacity(num_points);
    let mut next_class = 0;
    let mut left = num_points;
    while left > 0 {
        // at least two points per class so every point can carry an edge,
        // and never strand a single trailing point
        let cap = left.min(max_class) as u32;
        let size = if left <= 3 {
            left
        } else {
            loop {
                let s = 2 + mix::bounded(rng.next_u64(), cap - 1) as usize;
                if left - s != 1 {
                    break s;
                }
            }
        };
        class_of.extend(std::iter::repeat_n(next_class, size));
        next_class += 1;
        left -= size;
    }
    let mut mu = vec![0.0; num_points];
    for c in 0..next_class {
        let w = 0.25 + unit_f64(&mut rng);
        for (x, &cx) in class_of.iter().enumerate() {
            if cx == c {
                mu[x] = w;
            }
        }
    }
    let mut edges = Vec::new();
    for c in 0..next_class {
        let members: Vec<usize> = (0..num_points).filter(|&x| class_of[x] == c).collect();
        // random spanning tree, then a few extra edges
        for (i, &x) in members.iter().enumerate().skip(1) {
            let j = mix::bounded(rng.next_u64(), i as u32) as usize;
            edges.push((x, members[j]));
        }
        for _ in 0..members.len() / 2 {
            let a = members[mix::bounded(rng.next_u64(), members.len() as u32) as usize];
            let b = members[mix::bounded(rng.next_u64(), members.len() as u32) as usize];
            if a != b {
                edges.push((a, b));
            }
        }
    }
    FiniteEqRel::simple_random_walk(class_of, mu, &edges)
        .expect("generated graph must validate")
}
