//! BFS oracles over materialized balls of the product graph.
//!
//! Everything here derives from adjacency alone, so the closed-form
//! distance and geodesic code elsewhere in the crate can be validated
//! against an independent source of truth.
//!
//! A shortest path between two vertices within distance r of the center
//! never leaves the radius-2r ball: one of its endpoints is within r of any
//! path vertex. Callers comparing formula against BFS must size the ball
//! accordingly.

use std::collections::HashMap;

use crate::product::{HoroProduct, ProductVertex};

/// A ball around a center vertex, with CSR adjacency restricted to the
/// ball. Vertex ids follow BFS discovery order, so distances from the
/// center are nondecreasing in id.
pub struct ProductBall {
    verts: Vec<ProductVertex>,
    index: HashMap<ProductVertex, u32>,
    offsets: Vec<u32>,
    edges: Vec<u32>,
    dist: Vec<u32>,
}

impl ProductBall {
    /// Breadth-first materialization out to `radius` steps from `center`.
    pub fn materialize(g: &HoroProduct, center: &ProductVertex, radius: u32) -> ProductBall {
        Self::materialize_capped(g, center, radius, usize::MAX).unwrap()
    }

    /// Like [`materialize`](Self::materialize), but gives up with
    /// `Err(count)` as soon as the ball would hold more than `cap` vertices.
    pub fn materialize_capped(
        g: &HoroProduct,
        center: &ProductVertex,
        radius: u32,
        cap: usize,
    ) -> Result<ProductBall, usize> {
        let mut verts = vec![center.clone()];
        let mut index = HashMap::from([(center.clone(), 0u32)]);
        let mut dist = vec![0u32];
        let mut lo = 0usize;
        for d in 1..=radius {
            let hi = verts.len();
            for i in lo..hi {
                let v = verts[i].clone();
                for n in g.neighbors(&v) {
                    if !index.contains_key(&n) {
                        if verts.len() >= cap {
                            return Err(verts.len() + 1);
                        }
                        index.insert(n.clone(), verts.len() as u32);
                        verts.push(n);
                        dist.push(d);
                    }
                }
            }
            lo = hi;
        }
        let mut offsets = Vec::with_capacity(verts.len() + 1);
        let mut edges = Vec::new();
        offsets.push(0);
        for v in &verts {
            for n in g.neighbors(v) {
                if let Some(&j) = index.get(&n) {
                    edges.push(j);
                }
            }
            offsets.push(edges.len() as u32);
        }
        Ok(ProductBall {
            verts,
            index,
            offsets,
            edges,
            dist,
        })
    }

    pub fn len(&self) -> usize {
        self.verts.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn vertex(&self, id: u32) -> &ProductVertex {
        &self.verts[id as usize]
    }

    pub fn index_of(&self, v: &ProductVertex) -> Option<u32> {
        self.index.get(v).copied()
    }

    /// Distance from the center recorded during materialization.
    pub fn dist_from_center(&self, id: u32) -> u32 {
        self.dist[id as usize]
    }

    /// Neighbors of `id` that fall inside the ball.
    pub fn neighbors_in_ball(&self, id: u32) -> &[u32] {
        let (a, b) = (self.offsets[id as usize], self.offsets[id as usize + 1]);
        &self.edges[a as usize..b as usize]
    }

    /// Ids within `r` of the center: a prefix of the id range.
    pub fn members_within(&self, r: u32) -> std::ops::Range<u32> {
        let end = self.dist.partition_point(|&d| d <= r);
        0..end as u32
    }

    /// BFS distances from `src` inside the ball; `u32::MAX` marks vertices
    /// the truncated subgraph disconnects.
    pub fn bfs_distances(&self, src: u32) -> Vec<u32> {
        let mut dist = vec![u32::MAX; self.verts.len()];
        dist[src as usize] = 0;
        let mut queue = std::collections::VecDeque::from([src]);
        while let Some(v) = queue.pop_front() {
            let dv = dist[v as usize];
            for &n in self.neighbors_in_ball(v) {
                if dist[n as usize] == u32::MAX {
                    dist[n as usize] = dv + 1;
                    queue.push_back(n);
                }
            }
        }
        dist
    }

    /// Every shortest path from `src` to `dst` that stays inside the ball,
    /// as id sequences, capped at `cap` paths with a truncation flag.
    pub fn all_shortest_paths(&self, src: u32, dst: u32, cap: usize) -> (Vec<Vec<u32>>, bool) {
        let dist = self.bfs_distances(src);
        if dist[dst as usize] == u32::MAX {
            return (Vec::new(), false);
        }
        let mut out = Vec::new();
        let mut truncated = false;
        let mut path = vec![dst];
        self.collect_paths(&dist, dst, &mut path, &mut out, cap, &mut truncated);
        (out, truncated)
    }

    fn collect_paths(
        &self,
        dist: &[u32],
        cur: u32,
        path: &mut Vec<u32>,
        out: &mut Vec<Vec<u32>>,
        cap: usize,
        truncated: &mut bool,
    ) {
        if dist[cur as usize] == 0 {
            if out.len() == cap {
                *truncated = true;
                return;
            }
            out.push(path.iter().rev().copied().collect());
            return;
        }
        for &n in self.neighbors_in_ball(cur) {
            if *truncated {
                return;
            }
            if dist[n as usize] + 1 == dist[cur as usize] {
                path.push(n);
                self.collect_paths(dist, n, path, out, cap, truncated);
                path.pop();
            }
        }
    }
}

/// Outcome of auditing the closed-form distance against BFS.
#[derive(Clone, Debug)]
pub struct DistanceAudit {
    pub radius: u32,
    /// Vertices within `radius` (the audited set).
    pub ball_size: usize,
    /// Vertices within `2 * radius` (the BFS arena).
    pub ambient_size: usize,
    pub pairs: u64,
    /// `(from, to, formula, bfs)` for disagreeing pairs, capped at 20.
    pub mismatches: Vec<(ProductVertex, ProductVertex, u32, u32)>,
}

/// Compare the closed-form distance against BFS for every ordered pair of
/// vertices within `radius` of `center`. BFS runs inside the radius-2r
/// ball, which contains the shortest paths between audited pairs (see the
/// module note).
pub fn verify_distance_formula(
    g: &HoroProduct,
    center: &ProductVertex,
    radius: u32,
) -> DistanceAudit {
    verify_distance_formula_capped(g, center, radius, usize::MAX).unwrap()
}

/// [`verify_distance_formula`] with a cap on the BFS arena; `Err(count)`
/// reports the vertex count that burst it.
pub fn verify_distance_formula_capped(
    g: &HoroProduct,
    center: &ProductVertex,
    radius: u32,
    cap: usize,
) -> Result<DistanceAudit, usize> {
    let ball = ProductBall::materialize_capped(g, center, 2 * radius, cap)?;
    let members = ball.members_within(radius);
    let mut mismatches = Vec::new();
    let mut pairs = 0u64;
    for s in members.clone() {
        let ds = ball.bfs_distances(s);
        for t in members.clone() {
            pairs += 1;
            let f = g.product_distance(ball.vertex(s), ball.vertex(t)) as u32;
            if f != ds[t as usize] && mismatches.len() < 20 {
                mismatches.push((
                    ball.vertex(s).clone(),
                    ball.vertex(t).clone(),
                    f,
                    ds[t as usize],
                ));
            }
        }
    }
    Ok(DistanceAudit {
        radius,
        ball_size: members.len(),
        ambient_size: ball.len(),
        pairs,
        mismatches,
    })
}
