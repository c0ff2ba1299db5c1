//! On-disk description of a finite measured equivalence relation.

use serde::Deserialize;

use horoprod::eqrel::{EqRelError, FiniteEqRel};

/// TOML schema: class labels, weights, a kernel matrix, and an optional
/// edge list turning classes into graphs.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelationFile {
    /// Class id per point, contiguous from 0.
    pub classes: Vec<usize>,
    /// Positive weight per point.
    pub mu: Vec<f64>,
    /// Row-stochastic kernel supported within classes.
    pub kernel: Vec<Vec<f64>>,
    /// Symmetric within-class edges, each class connected.
    #[serde(default)]
    pub edges: Option<Vec<(usize, usize)>>,
}

impl RelationFile {
    pub fn build(self) -> Result<FiniteEqRel, EqRelError> {
        let RelationFile {
            classes,
            mu,
            kernel,
            edges,
        } = self;
        let rel = FiniteEqRel::new(classes, mu, kernel)?;
        match edges {
            Some(e) => rel.with_graph(&e),
            None => Ok(rel),
        }
    }
}
