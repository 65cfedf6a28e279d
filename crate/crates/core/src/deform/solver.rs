//! Fitting node transforms to a target frame: ICP-style alternation between
//! nearest-neighbour correspondence search and gradient-based minimization of
//! `L_data + α_reg L_reg + α_orth L_orth` over the enabled parameters.

use crate::affine::{compose_partials, CombinationMask, TransformParams};
use crate::keynodes::{build_influence_graph, InfluenceGraph, KeyNodeSet, NodeType};
use crate::mesh::{Mesh, PointIndex};
use crate::{Error, Mat3, Result, Vec3};

use super::correspond::{find_correspondences, reject_floor, seg_guided_prealign, Correspondences, PartOffsets};
use super::optim::minimize;
use super::{deform_mesh, effective_mask, InfluenceMap, NodeTransforms};

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub alpha_reg: f64,
    pub alpha_orth: f64,
    /// Correspondence/optimization alternations.
    pub max_outer_iters: usize,
    /// Optimizer steps per alternation.
    pub max_inner_iters: usize,
    /// Relative loss change that counts as converged.
    pub convergence_tol: f64,
    /// Pre-align body parts by bounding-box centres before the first
    /// correspondence search.
    pub seg_corr_enabled: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            alpha_reg: 1.0,
            alpha_orth: 0.1,
            max_outer_iters: 10,
            max_inner_iters: 50,
            convergence_tol: 1e-6,
            seg_corr_enabled: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_reg >= 0.0 && self.alpha_orth >= 0.0 && self.convergence_tol >= 0.0) {
            return Err(Error::Config("solver weights and tolerance must be non-negative".into()));
        }
        if self.max_outer_iters == 0 || self.max_inner_iters == 0 {
            return Err(Error::Config("solver iteration counts must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub transforms: NodeTransforms,
    /// Total objective after the last accepted alternation.
    pub loss: f64,
    pub data_loss: f64,
    /// Objective after each accepted alternation; non-increasing.
    pub history: Vec<f64>,
}

/// Loss terms broken out.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossTerms {
    pub data: f64,
    pub reg: f64,
    pub orth: f64,
}

/// The fitting objective for fixed correspondences, over a packed vector
/// holding only the enabled components of each node.
pub struct Objective<'a> {
    source: &'a Mesh,
    nodes: &'a KeyNodeSet,
    infl: &'a InfluenceMap,
    edges: &'a [(usize, usize)],
    corr: &'a Correspondences,
    mask: CombinationMask,
    node_masks: Vec<CombinationMask>,
    offsets: Vec<usize>,
    alpha_reg: f64,
    alpha_orth: f64,
}

impl<'a> Objective<'a> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        source: &'a Mesh,
        nodes: &'a KeyNodeSet,
        infl: &'a InfluenceMap,
        graph: &'a InfluenceGraph,
        corr: &'a Correspondences,
        mask: CombinationMask,
        cfg: &SolverConfig,
    ) -> Result<Objective<'a>> {
        if corr.len() != source.vertex_count() || infl.vertex_count() != source.vertex_count() {
            return Err(Error::Alignment("correspondences/influence do not cover the source".into()));
        }
        let node_masks: Vec<CombinationMask> =
            nodes.types.iter().map(|&t| effective_mask(t, mask)).collect();
        let mut offsets = Vec::with_capacity(nodes.len() + 1);
        let mut off = 0;
        for m in &node_masks {
            offsets.push(off);
            off += 3 * m.enabled_count() as usize;
        }
        offsets.push(off);
        Ok(Objective {
            source,
            nodes,
            infl,
            edges: graph.edges(),
            corr,
            mask,
            node_masks,
            offsets,
            alpha_reg: cfg.alpha_reg,
            alpha_orth: cfg.alpha_orth,
        })
    }

    pub fn dim(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    /// Names of the packed coordinates, e.g. `"n3.theta_y"`.
    pub fn coordinate_names(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.dim());
        for (j, m) in self.node_masks.iter().enumerate() {
            for (on, names) in slots(*m) {
                if on {
                    out.extend(names.iter().map(|n| format!("n{j}.{n}")));
                }
            }
        }
        out
    }

    pub fn pack(&self, transforms: &NodeTransforms) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.dim());
        for (p, m) in transforms.params.iter().zip(&self.node_masks) {
            for (on, v) in [
                (m.r_on, p.euler),
                (m.t_on, p.translation),
                (m.s_on, p.scale_resid),
                (m.h_on, p.shear),
            ] {
                if on {
                    x.extend(v.iter());
                }
            }
        }
        x
    }

    pub fn unpack(&self, x: &[f64]) -> NodeTransforms {
        let params = self
            .node_masks
            .iter()
            .enumerate()
            .map(|(j, m)| {
                let mut p = TransformParams::identity();
                let mut k = self.offsets[j];
                for (on, slot) in [
                    (m.r_on, &mut p.euler),
                    (m.t_on, &mut p.translation),
                    (m.s_on, &mut p.scale_resid),
                    (m.h_on, &mut p.shear),
                ] {
                    if on {
                        *slot = Vec3::new(x[k], x[k + 1], x[k + 2]);
                        k += 3;
                    }
                }
                p
            })
            .collect();
        NodeTransforms {
            params,
            mask: self.mask,
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let mut g = vec![0.0; x.len()];
        self.value_and_gradient(x, &mut g)
    }

    pub fn terms(&self, x: &[f64]) -> LossTerms {
        let mut g = vec![0.0; x.len()];
        self.evaluate(x, &mut g)
    }

    /// Total loss; writes the analytic gradient into `grad`. Returns
    /// `+∞` when a scale factor is not positive.
    pub fn value_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let t = self.evaluate(x, grad);
        t.data + self.alpha_reg * t.reg + self.alpha_orth * t.orth
    }

    fn evaluate(&self, x: &[f64], grad: &mut [f64]) -> LossTerms {
        let inf = LossTerms {
            data: f64::INFINITY,
            reg: 0.0,
            orth: 0.0,
        };
        let transforms = self.unpack(x);
        let n = self.nodes.len();
        let mut mats = Vec::with_capacity(n);
        for p in &transforms.params {
            if p.scale_resid.iter().any(|s| 1.0 + s <= 0.0) {
                grad.iter_mut().for_each(|g| *g = 0.0);
                return inf;
            }
            mats.push(compose_partials(p));
        }
        let mut ga = vec![Mat3::zeros(); n];
        let mut gt = vec![Vec3::zeros(); n];
        let pos = &self.nodes.positions;

        let mut data = 0.0;
        for (i, x) in self.source.vertices.iter().enumerate() {
            let Some(c) = self.corr[i] else { continue };
            let row = self.infl.row(i);
            let mut out = Vec3::zeros();
            for &(j, w) in row {
                let j = j as usize;
                out += w * (mats[j].0 * (x - pos[j]) + transforms.params[j].translation + pos[j]);
            }
            let r = out - c;
            data += r.norm_squared();
            for &(j, w) in row {
                let j = j as usize;
                let rw = r * (2.0 * w);
                ga[j] += rw * (x - pos[j]).transpose();
                gt[j] += rw;
            }
        }

        let mut reg = 0.0;
        for &(a, b) in self.edges {
            for (j, k) in [(a, b), (b, a)] {
                let d = pos[k] - pos[j];
                let e = mats[j].0 * d + transforms.params[j].translation - d
                    - transforms.params[k].translation;
                reg += e.norm_squared();
                let e2 = e * (2.0 * self.alpha_reg);
                ga[j] += e2 * d.transpose();
                gt[j] += e2;
                gt[k] -= e2;
            }
        }

        let mut orth = 0.0;
        for j in 0..n {
            if self.nodes.types[j] != NodeType::Affine {
                continue;
            }
            let a = &mats[j].0;
            orth += super::orth_term(a);
            let m = a.transpose() * a;
            let mut c = m * 2.0;
            for k in 0..3 {
                c[(k, k)] = -4.0 * (1.0 - m[(k, k)]);
            }
            ga[j] += a * c * self.alpha_orth;
        }

        for (j, m) in self.node_masks.iter().enumerate() {
            let d = &mats[j].1;
            let mut k = self.offsets[j];
            if m.r_on {
                for q in 0..3 {
                    grad[k + q] = ga[j].dot(&d[q]);
                }
                k += 3;
            }
            if m.t_on {
                grad[k..k + 3].copy_from_slice(gt[j].as_slice());
                k += 3;
            }
            if m.s_on {
                for q in 0..3 {
                    grad[k + q] = ga[j].dot(&d[3 + q]);
                }
                k += 3;
            }
            if m.h_on {
                for q in 0..3 {
                    grad[k + q] = ga[j].dot(&d[6 + q]);
                }
            }
        }
        LossTerms { data, reg, orth }
    }
}

fn slots(m: CombinationMask) -> [(bool, [&'static str; 3]); 4] {
    [
        (m.r_on, ["theta_x", "theta_y", "theta_z"]),
        (m.t_on, ["t_x", "t_y", "t_z"]),
        (m.s_on, ["s_x", "s_y", "s_z"]),
        (m.h_on, ["h_xy", "h_xz", "h_yz"]),
    ]
}

/// Fits per-node transforms deforming `source` onto `target`.
///
/// Alternates nearest-neighbour correspondence search with minimization over
/// the components enabled for each node (disabled ones stay at identity). An
/// alternation whose loss would exceed the previous one is discarded and ends
/// the fit, so [`FitResult::history`] is non-increasing.
pub fn fit_transforms(
    source: &Mesh,
    target: &Mesh,
    nodes: &KeyNodeSet,
    infl: &InfluenceMap,
    mask: CombinationMask,
    cfg: &SolverConfig,
) -> Result<FitResult> {
    cfg.validate()?;
    if !mask.is_legal() {
        return Err(Error::Config(format!("mask {} does not enable translation", mask.name())));
    }
    if nodes.is_empty() {
        return Err(Error::EmptyNodeSet);
    }
    if infl.vertex_count() != source.vertex_count() {
        return Err(Error::Alignment("influence map does not match the source mesh".into()));
    }
    if target.vertices.is_empty() || source.vertices.is_empty() {
        return Ok(FitResult {
            transforms: NodeTransforms::identity(nodes.len(), mask),
            loss: 0.0,
            data_loss: 0.0,
            history: vec![],
        });
    }
    let graph = build_influence_graph(infl, nodes.len());
    let index = PointIndex::new(&target.vertices);
    let floor = reject_floor(target);
    let offsets = if cfg.seg_corr_enabled {
        seg_guided_prealign(source, target)
    } else {
        PartOffsets::default()
    };

    let mut transforms = NodeTransforms::identity(nodes.len(), mask);
    let mut history: Vec<f64> = Vec::new();
    let mut data_loss = 0.0;
    for outer in 0..cfg.max_outer_iters {
        let mut queries = deform_mesh(source, nodes, &transforms, infl)?.vertices;
        if outer == 0 {
            offsets.apply(&mut queries, source.labels.as_deref());
        }
        let corr = find_correspondences(&queries, &index, &target.vertices, floor);
        let objective = Objective::new(source, nodes, infl, &graph, &corr, mask, cfg)?;
        let x0 = objective.pack(&transforms);
        let out = minimize(
            |x, g| objective.value_and_gradient(x, g),
            x0,
            cfg.max_inner_iters,
            cfg.convergence_tol,
        );
        if !out.value.is_finite() {
            return Err(Error::Divergence);
        }
        if let Some(&prev) = history.last() {
            if out.value > prev {
                break;
            }
        }
        transforms = objective.unpack(&out.x);
        data_loss = objective.terms(&out.x).data;
        let prev = history.last().copied();
        history.push(out.value);
        if let Some(prev) = prev {
            if prev - out.value <= cfg.convergence_tol * prev {
                break;
            }
        }
    }
    Ok(FitResult {
        transforms,
        loss: history.last().copied().unwrap_or(0.0),
        data_loss,
        history,
    })
}
