//! Predictive coding of per-node translations.
//!
//! The spatial scheme walks the node graph in a top-down spiral and codes
//! each translation against the previously reconstructed one. The
//! spatio-temporal scheme predicts every node from its own translation in the
//! previous P-frame plus one quantized motion vector per body part. Both are
//! closed loop: the encoder predicts from the values the decoder will see.

use crate::entropy::{build_table, fit_model, read_symbols, write_symbols, BitBuf, BitReader, BitWriter, CauchyModel};
use crate::keynodes::{InfluenceGraph, KeyNodeSet};
use crate::mesh::BodyPart;
use crate::{Error, Result, Vec3};

/// Visiting order of all nodes plus the start node of every spiral with the
/// already visited node it is predicted from.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TraversalPlan {
    pub order: Vec<usize>,
    pub starts: Vec<(usize, Option<usize>)>,
}

impl TraversalPlan {
    /// Predictor node for each position of `order`; `None` means zero.
    pub fn predictors(&self) -> Vec<Option<usize>> {
        let mut refs = vec![None; self.order.iter().max().map_or(0, |m| m + 1)];
        let mut is_start = vec![false; refs.len()];
        for &(s, r) in &self.starts {
            is_start[s] = true;
            refs[s] = r;
        }
        self.order
            .iter()
            .enumerate()
            .map(|(k, &n)| {
                if is_start[n] && refs[n].is_some() {
                    refs[n]
                } else if k == 0 {
                    None
                } else {
                    Some(self.order[k - 1])
                }
            })
            .collect()
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }
}

/// Monotone stand-in for `atan2(z, x)` built from exact arithmetic, in
/// `(-2, 2]`.
fn pseudo_angle(x: f64, z: f64) -> f64 {
    let den = x.abs() + z.abs();
    if den == 0.0 {
        return 0.0;
    }
    let p = x / den;
    if z < 0.0 {
        p - 1.0
    } else {
        1.0 - p
    }
}

/// Sorts a layer clockwise seen from +y (ascending angle from +x toward +z)
/// about the layer centroid; equal angles by node index.
pub fn sort_clockwise(layer: &mut [usize], positions: &[Vec3]) {
    if layer.len() < 2 {
        return;
    }
    let c = layer.iter().map(|&j| positions[j]).sum::<Vec3>() / layer.len() as f64;
    layer.sort_by(|&a, &b| {
        let pa = pseudo_angle(positions[a].x - c.x, positions[a].z - c.z);
        let pb = pseudo_angle(positions[b].x - c.x, positions[b].z - c.z);
        pa.total_cmp(&pb).then(a.cmp(&b))
    });
}

/// Nodes grouped by label in part order, unlabeled last.
pub fn group_by_part(labels: &[Option<BodyPart>]) -> Vec<(Option<BodyPart>, Vec<usize>)> {
    let mut keys: Vec<Option<BodyPart>> = labels.to_vec();
    keys.sort_by_key(|l| l.map_or(u8::MAX, |p| p.ordinal()));
    keys.dedup();
    keys.into_iter()
        .map(|key| (key, (0..labels.len()).filter(|&j| labels[j] == key).collect()))
        .collect()
}

fn highest(nodes: &[usize], positions: &[Vec3]) -> usize {
    *nodes
        .iter()
        .min_by(|&&a, &&b| positions[b].y.total_cmp(&positions[a].y).then(a.cmp(&b)))
        .unwrap()
}

/// Closest `(member, reference)` pair; ties by member then reference index.
fn closest_pair(members: &[usize], refs: &[usize], positions: &[Vec3]) -> Option<(usize, usize)> {
    let mut best: Option<(f64, usize, usize)> = None;
    for &m in members {
        for &r in refs {
            let d = (positions[m] - positions[r]).norm_squared();
            if best.is_none_or(|(bd, bm, br)| d < bd || (d == bd && (m, r) < (bm, br))) {
                best = Some((d, m, r));
            }
        }
    }
    best.map(|(_, m, r)| (m, r))
}

/// Part whose nodes anchor the start of `part`'s spiral.
fn anchor_part(part: BodyPart) -> Option<BodyPart> {
    use BodyPart::*;
    match part {
        LeftUpperArm | RightUpperArm | Torso => Some(Head),
        LeftThigh | RightThigh => Some(Torso),
        other => other.parent(),
    }
}

/// Orders all nodes for spatial prediction.
///
/// Parts are visited in ordinal order. The head spiral starts at its highest
/// node; upper arms and torso start at their node closest to the head,
/// thighs at the node closest to the torso, and every other part at the node
/// closest to its parent part (falling back up the chain, then to any
/// visited node). Each spiral grows by graph 1-rings within the part, every
/// ring sorted clockwise. When the nodes carry no labels at all they form a
/// single group starting at the highest node.
pub fn plan_traversal(nodes: &KeyNodeSet, graph: &InfluenceGraph) -> Result<TraversalPlan> {
    let n = nodes.len();
    if graph.node_count() != n {
        return Err(Error::Alignment(format!(
            "graph has {} nodes, node set {}",
            graph.node_count(),
            n
        )));
    }
    if n == 0 {
        return Ok(TraversalPlan::default());
    }
    let labeled = nodes.labels.iter().filter(|l| l.is_some()).count();
    if labeled != 0 && labeled != n {
        return Err(Error::UnlabeledNodes);
    }
    let pos = &nodes.positions;
    let groups = group_by_part(&nodes.labels);
    let mut visited = vec![false; n];
    let mut plan = TraversalPlan::default();

    for (part, members) in &groups {
        let mut remaining: Vec<usize> = members.clone();
        while !remaining.is_empty() {
            let visited_nodes: Vec<usize> = (0..n).filter(|&j| visited[j]).collect();
            let (start, reference) = if visited_nodes.is_empty() {
                (highest(&remaining, pos), None)
            } else {
                let mut anchor = part.and_then(anchor_part);
                let mut refs = Vec::new();
                while let Some(a) = anchor {
                    refs = groups
                        .iter()
                        .find(|(p, _)| *p == Some(a))
                        .map(|(_, m)| m.iter().copied().filter(|&j| visited[j]).collect())
                        .unwrap_or_default();
                    if !refs.is_empty() {
                        break;
                    }
                    anchor = a.parent();
                }
                if refs.is_empty() || remaining.len() < members.len() {
                    refs = visited_nodes;
                }
                let (m, r) = closest_pair(&remaining, &refs, pos).unwrap();
                (m, Some(r))
            };
            plan.starts.push((start, reference));
            let mut layer = vec![start];
            visited[start] = true;
            while !layer.is_empty() {
                plan.order.extend(&layer);
                let mut next: Vec<usize> = Vec::new();
                for &j in &layer {
                    for &k in graph.neighbors(j) {
                        if !visited[k] && nodes.labels[k] == *part {
                            visited[k] = true;
                            next.push(k);
                        }
                    }
                }
                sort_clockwise(&mut next, pos);
                layer = next;
            }
            remaining.retain(|&j| !visited[j]);
        }
    }
    Ok(plan)
}

/// Coded translation payload with the encoder-side reconstruction.
#[derive(Debug, Clone, PartialEq)]
pub struct CodedTranslations {
    pub model: CauchyModel,
    pub bits: BitBuf,
    /// Residual symbols in coding order, three per node.
    pub symbols: Vec<i64>,
    /// Translations as the decoder will reconstruct them, in node order.
    pub recon: Vec<Vec3>,
}

fn flatten(v: &[Vec3]) -> Vec<f64> {
    v.iter().flat_map(|t| [t.x, t.y, t.z]).collect()
}

fn fit_or_trivial(values: &[f64], qstep: f64) -> Result<CauchyModel> {
    if values.is_empty() {
        return Ok(CauchyModel::new(0.0, qstep, qstep, 0, 0)?.canonical());
    }
    Ok(fit_model(values, qstep)?.canonical())
}

fn quantize_vec(v: &Vec3, q: f64) -> [i64; 3] {
    [
        crate::entropy::quantize(v.x, q),
        crate::entropy::quantize(v.y, q),
        crate::entropy::quantize(v.z, q),
    ]
}

fn dequantize_vec(s: &[i64], q: f64) -> Vec3 {
    Vec3::new(s[0] as f64 * q, s[1] as f64 * q, s[2] as f64 * q)
}

/// Spatial scheme: the model is fitted on open-loop differences along the
/// plan, then each node is coded against the reconstructed translation of its
/// predictor (zero for the very first node).
pub fn spatial_encode(t: &[Vec3], plan: &TraversalPlan, qstep: f64) -> Result<CodedTranslations> {
    check_plan(plan, t.len())?;
    let preds = plan.predictors();
    let pseudo: Vec<Vec3> = plan
        .order
        .iter()
        .zip(&preds)
        .map(|(&j, p)| t[j] - p.map_or(Vec3::zeros(), |p| t[p]))
        .collect();
    let model = fit_or_trivial(&flatten(&pseudo), qstep)?;
    let q = model.qstep;
    let mut recon = vec![Vec3::zeros(); t.len()];
    let mut symbols = Vec::with_capacity(3 * t.len());
    for (&j, p) in plan.order.iter().zip(&preds) {
        let base = p.map_or(Vec3::zeros(), |p| recon[p]);
        let s = quantize_vec(&(t[j] - base), q);
        recon[j] = base + dequantize_vec(&s, q);
        symbols.extend(s);
    }
    let book = build_table(&model);
    let mut w = BitWriter::new();
    write_symbols(&symbols, &book, &mut w);
    Ok(CodedTranslations {
        model,
        bits: w.finish(),
        symbols,
        recon,
    })
}

pub fn spatial_decode(bits: &BitBuf, model: &CauchyModel, plan: &TraversalPlan) -> Result<Vec<Vec3>> {
    let n = plan.order.len();
    check_plan(plan, n)?;
    let book = build_table(model);
    let mut r = BitReader::from_buf(bits)?;
    let symbols = read_symbols(&mut r, &book, 3 * n)?;
    let mut out = vec![Vec3::zeros(); n];
    for ((k, &j), p) in plan.order.iter().enumerate().zip(plan.predictors()) {
        let base = p.map_or(Vec3::zeros(), |p| out[p]);
        out[j] = base + dequantize_vec(&symbols[3 * k..3 * k + 3], model.qstep);
    }
    Ok(out)
}

fn check_plan(plan: &TraversalPlan, n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    if plan.order.len() != n {
        return Err(Error::Alignment(format!("plan covers {} of {} nodes", plan.order.len(), n)));
    }
    for &j in &plan.order {
        if j >= n || std::mem::replace(&mut seen[j], true) {
            return Err(Error::Alignment("traversal plan is not a permutation".into()));
        }
    }
    Ok(())
}

/// Decoded representative motion per part, in part order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PartDelta {
    pub parts: Vec<(Option<BodyPart>, Vec3)>,
}

/// Offsets searched around the rounded mean, in lexicographic order.
fn neighbourhood() -> impl Iterator<Item = [i64; 3]> {
    (-1..=1).flat_map(|a| (-1..=1).flat_map(move |b| (-1..=1).map(move |c| [a, b, c])))
}

/// Quantized part motion minimizing the summed squared prediction error over
/// the 27 grid points around the rounded mean; ties keep the first candidate.
fn part_delta_symbols(diffs: &[Vec3], q: f64) -> [i64; 3] {
    let mean = diffs.iter().sum::<Vec3>() / diffs.len() as f64;
    let base = quantize_vec(&mean, q);
    let mut best = (f64::INFINITY, base);
    for off in neighbourhood() {
        let s = [base[0] + off[0], base[1] + off[1], base[2] + off[2]];
        let d = dequantize_vec(&s, q);
        let cost: f64 = diffs.iter().map(|e| (e - d).norm_squared()).sum();
        if cost < best.0 {
            best = (cost, s);
        }
    }
    best.1
}

/// Spatio-temporal scheme. The payload holds the part motions coded with the
/// previous P-frame's model, then the per-node residuals (node order) coded
/// with a freshly fitted model.
pub fn spatiotemporal_encode(
    t: &[Vec3],
    prev: &[Vec3],
    labels: &[Option<BodyPart>],
    prev_model: Option<&CauchyModel>,
    qstep: f64,
) -> Result<(CodedTranslations, PartDelta)> {
    let prev_model = prev_model.ok_or(Error::MissingPreviousModel)?;
    if prev.len() != t.len() || labels.len() != t.len() {
        return Err(Error::Alignment("translations, previous translations and labels differ in length".into()));
    }
    let dq = prev_model.qstep;
    let groups = group_by_part(labels);
    let mut delta = PartDelta::default();
    let mut delta_symbols = Vec::with_capacity(3 * groups.len());
    let mut pred = vec![Vec3::zeros(); t.len()];
    for (part, members) in &groups {
        let diffs: Vec<Vec3> = members.iter().map(|&j| t[j] - prev[j]).collect();
        let s = part_delta_symbols(&diffs, dq);
        let d = dequantize_vec(&s, dq);
        for &j in members {
            pred[j] = prev[j] + d;
        }
        delta.parts.push((*part, d));
        delta_symbols.extend(s);
    }
    let resid: Vec<Vec3> = t.iter().zip(&pred).map(|(a, b)| a - b).collect();
    let model = fit_or_trivial(&flatten(&resid), qstep)?;
    let mut symbols = Vec::with_capacity(3 * t.len());
    let mut recon = Vec::with_capacity(t.len());
    for (e, p) in resid.iter().zip(&pred) {
        let s = quantize_vec(e, model.qstep);
        recon.push(p + dequantize_vec(&s, model.qstep));
        symbols.extend(s);
    }
    let mut w = BitWriter::new();
    write_symbols(&delta_symbols, &build_table(prev_model), &mut w);
    write_symbols(&symbols, &build_table(&model), &mut w);
    Ok((
        CodedTranslations {
            model,
            bits: w.finish(),
            symbols,
            recon,
        },
        delta,
    ))
}

pub fn spatiotemporal_decode(
    bits: &BitBuf,
    prev_model: Option<&CauchyModel>,
    model: &CauchyModel,
    prev: &[Vec3],
    labels: &[Option<BodyPart>],
) -> Result<(Vec<Vec3>, PartDelta)> {
    let prev_model = prev_model.ok_or(Error::MissingPreviousModel)?;
    if prev.len() != labels.len() {
        return Err(Error::Alignment("previous translations and labels differ in length".into()));
    }
    let groups = group_by_part(labels);
    let mut r = BitReader::from_buf(bits)?;
    let delta_symbols = read_symbols(&mut r, &build_table(prev_model), 3 * groups.len())?;
    let mut delta = PartDelta::default();
    let mut out: Vec<Vec3> = prev.to_vec();
    for ((part, members), s) in groups.iter().zip(delta_symbols.chunks_exact(3)) {
        let d = dequantize_vec(s, prev_model.qstep);
        for &j in members {
            out[j] += d;
        }
        delta.parts.push((*part, d));
    }
    let symbols = read_symbols(&mut r, &build_table(model), 3 * prev.len())?;
    for (o, s) in out.iter_mut().zip(symbols.chunks_exact(3)) {
        *o += dequantize_vec(s, model.qstep);
    }
    Ok((out, delta))
}

/// Baseline without prediction: translations quantized and coded directly.
pub fn direct_encode(t: &[Vec3], qstep: f64) -> Result<CodedTranslations> {
    let model = fit_or_trivial(&flatten(t), qstep)?;
    let symbols: Vec<i64> = t.iter().flat_map(|v| quantize_vec(v, model.qstep)).collect();
    let recon = symbols.chunks_exact(3).map(|s| dequantize_vec(s, model.qstep)).collect();
    let mut w = BitWriter::new();
    write_symbols(&symbols, &build_table(&model), &mut w);
    Ok(CodedTranslations {
        model,
        bits: w.finish(),
        symbols,
        recon,
    })
}

pub fn direct_decode(bits: &BitBuf, model: &CauchyModel, count: usize) -> Result<Vec<Vec3>> {
    let mut r = BitReader::from_buf(bits)?;
    let symbols = read_symbols(&mut r, &build_table(model), 3 * count)?;
    Ok(symbols.chunks_exact(3).map(|s| dequantize_vec(s, model.qstep)).collect())
}

#[cfg(test)]
mod tests;
