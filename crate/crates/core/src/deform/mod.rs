//! Bi-modal embedded deformation.
//!
//! Every vertex is driven by `Q` key nodes through normalized inverse-square
//! distance weights:
//!
//! ```text
//! x'_i = Σ_j w_ij [ A_j (x_i − n_j) + t_j + n_j ]
//! ```
//!
//! Rigid nodes use `A_j = R_j`; affine nodes use `A_j = R_j S_j H_j` restricted
//! to the components enabled by the active [`CombinationMask`].

mod correspond;
mod optim;
mod solver;

use crate::affine::{compose, mask_params, CombinationMask, TransformParams};
use crate::keynodes::{InfluenceGraph, KeyNodeSet, NodeType};
use crate::mesh::{Mesh, SegMode, SegmentationConfig};
use crate::{Error, Mat3, Result, Vec3};

pub use correspond::{find_correspondences, reject_floor, seg_guided_prealign, Correspondences, PartOffsets};
pub use optim::{minimize, MinimizeOutcome};
pub use solver::{fit_transforms, FitResult, Objective, SolverConfig};

/// Default number of nodes controlling each vertex.
pub const DEFAULT_Q: usize = 4;
/// Squared distances are clamped to this floor before inversion so a vertex
/// sitting exactly on a node gets a finite, dominant weight.
pub const MIN_DIST_SQ: f64 = 1e-12;

/// Per-vertex `(node, weight)` rows, exactly `q` entries each.
#[derive(Debug, Clone, PartialEq)]
pub struct InfluenceMap {
    q: usize,
    entries: Vec<(u32, f64)>,
}

impl InfluenceMap {
    pub fn from_rows(q: usize, rows: Vec<Vec<(u32, f64)>>) -> Result<InfluenceMap> {
        if q == 0 || rows.iter().any(|r| r.len() != q) {
            return Err(Error::Alignment(format!("every influence row needs {q} entries")));
        }
        Ok(InfluenceMap {
            q,
            entries: rows.into_iter().flatten().collect(),
        })
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn vertex_count(&self) -> usize {
        self.entries.len() / self.q
    }

    pub fn row(&self, vertex: usize) -> &[(u32, f64)] {
        &self.entries[vertex * self.q..(vertex + 1) * self.q]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[(u32, f64)]> {
        self.entries.chunks_exact(self.q)
    }

    /// Total weight of `node` on `vertex`, summing replicated entries.
    pub fn weight(&self, vertex: usize, node: usize) -> f64 {
        self.row(vertex)
            .iter()
            .filter(|(n, _)| *n as usize == node)
            .map(|(_, w)| w)
            .sum()
    }
}

/// Picks and weights the controlling nodes of every vertex.
///
/// With segmentation on, only nodes sharing the vertex's label qualify. When
/// fewer than `q` qualify, the closest one is replicated to fill the row. A
/// part with no qualifying node is an error in manual mode and falls back to
/// plain nearest nodes in auto mode.
pub fn build_influence_map(
    mesh: &Mesh,
    nodes: &KeyNodeSet,
    seg: &SegmentationConfig,
    q: usize,
) -> Result<InfluenceMap> {
    if nodes.is_empty() {
        return Err(Error::EmptyNodeSet);
    }
    if q == 0 {
        return Err(Error::Config("Q must be at least 1".into()));
    }
    let filter = seg.mode != SegMode::Off && mesh.labels.is_some() && nodes.is_labeled();
    let mut entries = Vec::with_capacity(mesh.vertex_count() * q);
    let mut cand: Vec<(f64, usize)> = Vec::with_capacity(nodes.len());
    for (i, x) in mesh.vertices.iter().enumerate() {
        let label = mesh.label(i);
        cand.clear();
        if filter {
            cand.extend(
                nodes
                    .positions
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| nodes.labels[*j] == label)
                    .map(|(j, n)| ((x - n).norm_squared(), j)),
            );
            if cand.is_empty() && seg.mode == SegMode::Manual {
                return Err(Error::NoValidNodes(label));
            }
        }
        if cand.is_empty() {
            cand.extend(
                nodes
                    .positions
                    .iter()
                    .enumerate()
                    .map(|(j, n)| ((x - n).norm_squared(), j)),
            );
        }
        cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let k = cand.len().min(q);
        let start = entries.len();
        for _ in 0..q - k {
            entries.push((cand[0].1 as u32, cand[0].0));
        }
        entries.extend(cand[..k].iter().map(|&(d2, j)| (j as u32, d2)));
        let row = &mut entries[start..];
        let mut total = 0.0;
        for e in row.iter_mut() {
            e.1 = 1.0 / e.1.max(MIN_DIST_SQ);
            total += e.1;
        }
        for e in row.iter_mut() {
            e.1 /= total;
        }
    }
    Ok(InfluenceMap { q, entries })
}

/// Per-node transforms aligned with a [`KeyNodeSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct NodeTransforms {
    pub params: Vec<TransformParams>,
    /// Mask for affine nodes; rigid nodes always use RT.
    pub mask: CombinationMask,
}

impl NodeTransforms {
    pub fn identity(count: usize, mask: CombinationMask) -> NodeTransforms {
        NodeTransforms {
            params: vec![TransformParams::identity(); count],
            mask,
        }
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn mask_for(&self, ty: NodeType) -> CombinationMask {
        effective_mask(ty, self.mask)
    }

    /// Parameters with disabled components forced to identity.
    pub fn masked(&self, nodes: &KeyNodeSet) -> Vec<TransformParams> {
        self.params
            .iter()
            .zip(&nodes.types)
            .map(|(p, &ty)| mask_params(p, self.mask_for(ty)))
            .collect()
    }

    /// Linear parts `A_j` and translations `t_j` after masking.
    pub fn matrices(&self, nodes: &KeyNodeSet) -> Result<Vec<(Mat3, Vec3)>> {
        self.masked(nodes)
            .iter()
            .map(|p| Ok((compose(p)?, p.translation)))
            .collect()
    }
}

pub fn effective_mask(ty: NodeType, affine_mask: CombinationMask) -> CombinationMask {
    match ty {
        NodeType::Rigid => CombinationMask::RT,
        NodeType::Affine => affine_mask,
    }
}

fn check_alignment(nodes: &KeyNodeSet, transforms: &NodeTransforms) -> Result<()> {
    if transforms.len() != nodes.len() {
        return Err(Error::Alignment(format!(
            "{} transforms for {} nodes",
            transforms.len(),
            nodes.len()
        )));
    }
    Ok(())
}

/// Applies the weighted node transforms to every vertex. Connectivity and
/// labels are carried over unchanged.
pub fn deform_mesh(
    mesh: &Mesh,
    nodes: &KeyNodeSet,
    transforms: &NodeTransforms,
    infl: &InfluenceMap,
) -> Result<Mesh> {
    check_alignment(nodes, transforms)?;
    if infl.vertex_count() != mesh.vertex_count() {
        return Err(Error::Alignment(format!(
            "influence map covers {} vertices, mesh has {}",
            infl.vertex_count(),
            mesh.vertex_count()
        )));
    }
    let mats = transforms.matrices(nodes)?;
    let mut vertices = Vec::with_capacity(mesh.vertex_count());
    for (i, x) in mesh.vertices.iter().enumerate() {
        // Weights sum to one, so accumulate displacements: identity
        // transforms then return `x` bit for bit.
        let mut shift = Vec3::zeros();
        for &(j, w) in infl.row(i) {
            let j = j as usize;
            let (a, t) = mats
                .get(j)
                .ok_or_else(|| Error::Alignment(format!("influence references node {j}")))?;
            let d = x - nodes.positions[j];
            shift += w * (a * d - d + t);
        }
        vertices.push(x + shift);
    }
    Ok(Mesh {
        vertices,
        faces: mesh.faces.clone(),
        labels: mesh.labels.clone(),
    })
}

/// Orthogonality penalty on the columns of each affine node's `A_j`.
pub fn orthogonality_loss(nodes: &KeyNodeSet, transforms: &NodeTransforms) -> Result<f64> {
    check_alignment(nodes, transforms)?;
    let mut total = 0.0;
    for ((a, _), ty) in transforms.matrices(nodes)?.iter().zip(&nodes.types) {
        if *ty == NodeType::Affine {
            total += orth_term(a);
        }
    }
    Ok(total)
}

pub(crate) fn orth_term(a: &Mat3) -> f64 {
    let g = a.transpose() * a;
    g[(0, 1)].powi(2)
        + g[(0, 2)].powi(2)
        + g[(1, 2)].powi(2)
        + (1.0 - g[(0, 0)]).powi(2)
        + (1.0 - g[(1, 1)]).powi(2)
        + (1.0 - g[(2, 2)]).powi(2)
}

/// Sum of squared distances from deformed vertices to their matched target
/// points. Unmatched vertices contribute nothing.
pub fn data_loss(source_deformed: &Mesh, correspondences: &Correspondences) -> Result<f64> {
    if correspondences.len() != source_deformed.vertex_count() {
        return Err(Error::Alignment(format!(
            "{} correspondences for {} vertices",
            correspondences.len(),
            source_deformed.vertex_count()
        )));
    }
    Ok(source_deformed
        .vertices
        .iter()
        .zip(correspondences)
        .filter_map(|(x, c)| c.map(|c| (x - c).norm_squared()))
        .sum())
}

/// Smoothness: over both directions of every graph edge `(j, k)`,
/// `‖A_j (n_k − n_j) + n_j + t_j − (n_k + t_k)‖²`.
pub fn reg_loss(nodes: &KeyNodeSet, transforms: &NodeTransforms, graph: &InfluenceGraph) -> Result<f64> {
    check_alignment(nodes, transforms)?;
    let mats = transforms.matrices(nodes)?;
    let mut total = 0.0;
    for &(a, b) in graph.edges() {
        for (j, k) in [(a, b), (b, a)] {
            let (aj, tj) = &mats[j];
            let (_, tk) = &mats[k];
            let nj = &nodes.positions[j];
            let nk = &nodes.positions[k];
            total += (aj * (nk - nj) + nj + tj - (nk + tk)).norm_squared();
        }
    }
    Ok(total)
}
