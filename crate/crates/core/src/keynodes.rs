//! Key-node generation on a GoF's key P-frame: farthest-point initialization,
//! fitting, conflict-filtered pruning of low-error nodes, insertion at
//! high-error vertices, node typing, and the co-influence graph.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::affine::CombinationMask;
use crate::deform::{build_influence_map, deform_mesh, fit_transforms, InfluenceMap, SolverConfig, DEFAULT_Q};
use crate::mesh::{BodyPart, Mesh, PointIndex, SegMode, SegmentationConfig};
use crate::{Error, Result, Vec3};

/// A vertex "belongs" to a node when the node's weight on it exceeds this.
pub const INFLUENCE_THRESHOLD: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeType {
    Rigid,
    Affine,
}

/// Sparse control nodes. Labels come from the nearest mesh vertex; a node is
/// affine iff its label is one of the configured affine parts.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct KeyNodeSet {
    pub positions: Vec<Vec3>,
    pub labels: Vec<Option<BodyPart>>,
    pub types: Vec<NodeType>,
}

impl KeyNodeSet {
    pub fn new(
        positions: Vec<Vec3>,
        labels: Vec<Option<BodyPart>>,
        types: Vec<NodeType>,
    ) -> Result<KeyNodeSet> {
        if labels.len() != positions.len() || types.len() != positions.len() {
            return Err(Error::Alignment(format!(
                "{} positions, {} labels, {} types",
                positions.len(),
                labels.len(),
                types.len()
            )));
        }
        Ok(KeyNodeSet {
            positions,
            labels,
            types,
        })
    }

    /// Labels and types each position from the closest vertex of `mesh`.
    pub fn from_positions(positions: Vec<Vec3>, mesh: &Mesh, seg: &SegmentationConfig) -> KeyNodeSet {
        let labels: Vec<Option<BodyPart>> = positions
            .iter()
            .map(|p| nearest_vertex(mesh, p).and_then(|i| mesh.label(i)))
            .collect();
        let types = labels.iter().map(|&l| node_type(l, seg)).collect();
        KeyNodeSet {
            positions,
            labels,
            types,
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn is_labeled(&self) -> bool {
        !self.labels.is_empty() && self.labels.iter().all(Option::is_some)
    }

    pub fn count_affine(&self) -> usize {
        self.types.iter().filter(|t| **t == NodeType::Affine).count()
    }

    /// Re-derives node types from labels.
    pub fn retype(&mut self, seg: &SegmentationConfig) {
        self.types = self.labels.iter().map(|&l| node_type(l, seg)).collect();
    }

    pub fn push(&mut self, position: Vec3, label: Option<BodyPart>, ty: NodeType) {
        self.positions.push(position);
        self.labels.push(label);
        self.types.push(ty);
    }

    /// Copy without the nodes at `indices`.
    pub fn without(&self, indices: &[usize]) -> KeyNodeSet {
        let drop: BTreeSet<usize> = indices.iter().copied().collect();
        let keep = |j: &usize| !drop.contains(j);
        KeyNodeSet {
            positions: (0..self.len()).filter(keep).map(|j| self.positions[j]).collect(),
            labels: (0..self.len()).filter(keep).map(|j| self.labels[j]).collect(),
            types: (0..self.len()).filter(keep).map(|j| self.types[j]).collect(),
        }
    }

    /// Copy reordered so that new position `k` holds old node `order[k]`.
    pub fn permuted(&self, order: &[usize]) -> KeyNodeSet {
        KeyNodeSet {
            positions: order.iter().map(|&j| self.positions[j]).collect(),
            labels: order.iter().map(|&j| self.labels[j]).collect(),
            types: order.iter().map(|&j| self.types[j]).collect(),
        }
    }
}

pub fn node_type(label: Option<BodyPart>, seg: &SegmentationConfig) -> NodeType {
    if seg.is_affine(label) {
        NodeType::Affine
    } else {
        NodeType::Rigid
    }
}

fn nearest_vertex(mesh: &Mesh, p: &Vec3) -> Option<usize> {
    mesh.vertices
        .iter()
        .enumerate()
        .map(|(i, v)| ((v - p).norm_squared(), i))
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .map(|(_, i)| i)
}

/// Undirected node adjacency: two nodes are connected when some vertex's
/// influence row contains both.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InfluenceGraph {
    node_count: usize,
    edges: Vec<(usize, usize)>,
    adjacency: Vec<Vec<usize>>,
}

impl InfluenceGraph {
    /// Edges given as `(i, j)` pairs in any order; self-loops and duplicates dropped.
    pub fn from_edges(node_count: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> InfluenceGraph {
        let set: BTreeSet<(usize, usize)> = edges
            .into_iter()
            .filter(|(a, b)| a != b && *a < node_count && *b < node_count)
            .map(|(a, b)| (a.min(b), a.max(b)))
            .collect();
        let mut adjacency = vec![Vec::new(); node_count];
        for &(a, b) in &set {
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        for adj in &mut adjacency {
            adj.sort_unstable();
        }
        InfluenceGraph {
            node_count,
            edges: set.into_iter().collect(),
            adjacency,
        }
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    /// Sorted `(low, high)` pairs.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.adjacency[node]
    }

    /// Connected components, each sorted, ordered by smallest member.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let mut seen = vec![false; self.node_count];
        let mut out = Vec::new();
        for s in 0..self.node_count {
            if seen[s] {
                continue;
            }
            seen[s] = true;
            let mut comp = vec![s];
            let mut k = 0;
            while k < comp.len() {
                for &n in &self.adjacency[comp[k]] {
                    if !seen[n] {
                        seen[n] = true;
                        comp.push(n);
                    }
                }
                k += 1;
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }
}

pub fn build_influence_graph(infl: &InfluenceMap, node_count: usize) -> InfluenceGraph {
    let mut pairs = Vec::new();
    for row in infl.rows() {
        for (a, &(i, _)) in row.iter().enumerate() {
            for &(j, _) in &row[a + 1..] {
                pairs.push((i as usize, j as usize));
            }
        }
    }
    InfluenceGraph::from_edges(node_count, pairs)
}

/// Farthest-point sampling of mesh vertices. The first vertex is drawn from a
/// ChaCha8 stream seeded with `seed`; ties go to the lowest index.
pub fn init_nodes(mesh: &Mesh, target_count: usize, seed: u64, seg: &SegmentationConfig) -> Result<KeyNodeSet> {
    let order = farthest_point_order(&mesh.vertices, target_count, seed)?;
    let positions = order.iter().map(|&i| mesh.vertices[i]).collect();
    let labels: Vec<Option<BodyPart>> = order.iter().map(|&i| mesh.label(i)).collect();
    let types = labels.iter().map(|&l| node_type(l, seg)).collect();
    Ok(KeyNodeSet {
        positions,
        labels,
        types,
    })
}

/// Indices picked by farthest-point sampling, in pick order.
pub fn farthest_point_order(points: &[Vec3], count: usize, seed: u64) -> Result<Vec<usize>> {
    if count == 0 || count > points.len() {
        return Err(Error::TooFewVertices {
            requested: count,
            available: points.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let first = rng.random_range(0..points.len());
    let mut picked = vec![first];
    let mut taken = vec![false; points.len()];
    taken[first] = true;
    let mut dist: Vec<f64> = points.iter().map(|p| (p - points[first]).norm_squared()).collect();
    while picked.len() < count {
        let mut best = None;
        for (i, &d) in dist.iter().enumerate() {
            if taken[i] {
                continue;
            }
            if best.is_none_or(|(bd, _)| d > bd) {
                best = Some((d, i));
            }
        }
        let (_, next) = best.expect("fewer candidates than requested");
        taken[next] = true;
        picked.push(next);
        for (i, p) in points.iter().enumerate() {
            dist[i] = dist[i].min((p - points[next]).norm_squared());
        }
    }
    Ok(picked)
}

/// Euclidean distance from each deformed vertex to the nearest target vertex.
pub fn per_vertex_error(deformed: &Mesh, target: &PointIndex) -> Vec<f64> {
    deformed
        .vertices
        .iter()
        .map(|v| target.nearest(v).1.sqrt())
        .collect()
}

/// Mean vertex error over the vertices a node influences above
/// [`INFLUENCE_THRESHOLD`]; zero for a node influencing nothing.
pub fn per_node_error(infl: &InfluenceMap, node_count: usize, vertex_error: &[f64]) -> Vec<f64> {
    let mut sum = vec![0.0; node_count];
    let mut count = vec![0usize; node_count];
    for (i, e) in vertex_error.iter().enumerate() {
        for j in influencing_nodes(infl, i) {
            sum[j] += e;
            count[j] += 1;
        }
    }
    sum.iter()
        .zip(&count)
        .map(|(s, &c)| if c == 0 { 0.0 } else { s / c as f64 })
        .collect()
}

/// Distinct nodes with total weight above the threshold on `vertex`.
fn influencing_nodes(infl: &InfluenceMap, vertex: usize) -> Vec<usize> {
    let mut out: Vec<usize> = Vec::with_capacity(infl.q());
    for &(j, _) in infl.row(vertex) {
        let j = j as usize;
        if !out.contains(&j) && infl.weight(vertex, j) > INFLUENCE_THRESHOLD {
            out.push(j);
        }
    }
    out
}

/// Greedy choice of up to `batch` removals in `(error, index)` order, skipping
/// any node that shares a vertex (both weights above the threshold) with an
/// already chosen one, or that `allow` rejects.
pub fn select_removals(
    infl: &InfluenceMap,
    node_count: usize,
    per_node_error: &[f64],
    batch: usize,
    mut allow: impl FnMut(usize, &[usize]) -> bool,
) -> Vec<usize> {
    let mut conflicts: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); node_count];
    for v in 0..infl.vertex_count() {
        let nodes = influencing_nodes(infl, v);
        for &a in &nodes {
            for &b in &nodes {
                if a != b {
                    conflicts[a].insert(b);
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..node_count).collect();
    order.sort_by(|&a, &b| per_node_error[a].total_cmp(&per_node_error[b]).then(a.cmp(&b)));
    let mut blocked = vec![false; node_count];
    let mut removed = Vec::new();
    for j in order {
        if removed.len() >= batch {
            break;
        }
        if blocked[j] || !allow(j, &removed) {
            continue;
        }
        removed.push(j);
        for &c in &conflicts[j] {
            blocked[c] = true;
        }
    }
    removed
}

/// Removes up to `batch` low-error nodes under the shared-vertex conflict filter.
pub fn prune_nodes(
    nodes: &KeyNodeSet,
    infl: &InfluenceMap,
    per_node_error: &[f64],
    batch: usize,
) -> Result<(KeyNodeSet, Vec<usize>)> {
    if per_node_error.len() != nodes.len() {
        return Err(Error::Alignment("per-node errors do not match the node set".into()));
    }
    let removed = select_removals(infl, nodes.len(), per_node_error, batch, |_, _| true);
    Ok((nodes.without(&removed), removed))
}

/// Adds up to `deficit` nodes at the highest-error vertices, skipping
/// candidates closer than `min_dist` to any existing or newly added node.
pub fn insert_nodes(
    nodes: &KeyNodeSet,
    mesh: &Mesh,
    per_vertex_error: &[f64],
    deficit: usize,
    min_dist: f64,
    seg: &SegmentationConfig,
) -> Result<KeyNodeSet> {
    if per_vertex_error.len() != mesh.vertex_count() {
        return Err(Error::Alignment("per-vertex errors do not match the mesh".into()));
    }
    let mut order: Vec<usize> = (0..mesh.vertex_count()).collect();
    order.sort_by(|&a, &b| per_vertex_error[b].total_cmp(&per_vertex_error[a]).then(a.cmp(&b)));
    let mut out = nodes.clone();
    let min_sq = min_dist * min_dist;
    let mut added = 0;
    for i in order {
        if added >= deficit {
            break;
        }
        let p = mesh.vertices[i];
        if out.positions.iter().any(|n| (n - p).norm_squared() < min_sq) {
            continue;
        }
        let label = mesh.label(i);
        out.push(p, label, node_type(label, seg));
        added += 1;
    }
    Ok(out)
}

/// Median distance from each node to its nearest other node.
pub fn median_node_spacing(nodes: &KeyNodeSet) -> f64 {
    if nodes.len() < 2 {
        return 0.0;
    }
    let mut nn: Vec<f64> = nodes
        .positions
        .iter()
        .enumerate()
        .map(|(i, p)| {
            nodes
                .positions
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, q)| (p - q).norm())
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    nn.sort_by(f64::total_cmp);
    let m = nn.len() / 2;
    if nn.len() % 2 == 1 {
        nn[m]
    } else {
        0.5 * (nn[m - 1] + nn[m])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    pub target_count: usize,
    /// Size of the initial farthest-point set (clamped to the vertex count).
    pub init_count: usize,
    /// Mask used for affine nodes while generating.
    pub mask: CombinationMask,
    pub q: usize,
    pub seg: SegmentationConfig,
    pub solver: SolverConfig,
    /// Upper bound on fit/prune/insert rounds.
    pub max_rounds: usize,
    /// Insertion spacing as a multiple of the median node spacing.
    pub min_dist_factor: f64,
    /// Nodes swapped per refinement round once the target count is reached;
    /// 0 disables refinement.
    pub refine_swaps: usize,
    pub seed: u64,
}

impl GeneratorConfig {
    pub fn new(target_count: usize) -> GeneratorConfig {
        GeneratorConfig {
            target_count,
            init_count: 2 * target_count,
            mask: CombinationMask::RTSH,
            q: DEFAULT_Q,
            seg: SegmentationConfig::default(),
            solver: SolverConfig::default(),
            max_rounds: 20,
            min_dist_factor: 2.0,
            refine_swaps: 0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generation {
    pub nodes: KeyNodeSet,
    /// Number of fit rounds run.
    pub rounds: usize,
    /// Node count entering each round.
    pub counts: Vec<usize>,
    /// Mean vertex error of the returned node set.
    pub mean_error: f64,
}

/// Generates key nodes for deforming `source` onto `target`.
///
/// Each round fits transforms with the current nodes, measures vertex and node
/// errors, then prunes toward `target_count` (or inserts when below it). Once
/// at the target, optional swap rounds trade the lowest-error nodes for
/// high-error vertices while the fit keeps improving.
pub fn generate(source: &Mesh, target: &Mesh, cfg: &GeneratorConfig) -> Result<Generation> {
    if cfg.target_count == 0 {
        return Err(Error::Config("target node count must be at least 1".into()));
    }
    let target_count = cfg.target_count.min(source.vertex_count());
    let init = cfg.init_count.max(target_count).min(source.vertex_count());
    let mut nodes = init_nodes(source, init, cfg.seed, &cfg.seg)?;
    let filtering = cfg.seg.mode != SegMode::Off && source.labels.is_some();
    if filtering {
        cover_parts(&mut nodes, source, &cfg.seg);
    }
    let target_index = PointIndex::new(&target.vertices);

    let mut counts = Vec::new();
    let mut best: Option<(KeyNodeSet, f64)> = None;
    let mut rounds = 0;
    while rounds < cfg.max_rounds {
        rounds += 1;
        counts.push(nodes.len());
        let infl = build_influence_map(source, &nodes, &cfg.seg, cfg.q)?;
        let fit = fit_transforms(source, target, &nodes, &infl, cfg.mask, &cfg.solver)?;
        let deformed = deform_mesh(source, &nodes, &fit.transforms, &infl)?;
        let vertex_err = per_vertex_error(&deformed, &target_index);
        let mean_err = vertex_err.iter().sum::<f64>() / vertex_err.len().max(1) as f64;
        let node_err = per_node_error(&infl, nodes.len(), &vertex_err);

        if nodes.len() > target_count {
            let batch = nodes.len() - target_count;
            let mut part_count = part_counts(&nodes);
            let removed = select_removals(&infl, nodes.len(), &node_err, batch, |j, _| {
                let key = part_key(nodes.labels[j]);
                if filtering && part_count[key] <= 1 {
                    return false;
                }
                part_count[key] -= 1;
                true
            });
            if removed.is_empty() {
                best = Some((nodes.clone(), mean_err));
                break;
            }
            nodes = nodes.without(&removed);
            continue;
        }

        if nodes.len() < target_count {
            let min_dist = cfg.min_dist_factor * median_node_spacing(&nodes);
            let grown = insert_nodes(&nodes, source, &vertex_err, target_count - nodes.len(), min_dist, &cfg.seg)?;
            if grown.len() == nodes.len() {
                best = Some((nodes.clone(), mean_err));
                break;
            }
            nodes = grown;
            continue;
        }

        // At the target count: keep the best set seen, optionally try a swap.
        let improved = best.as_ref().is_none_or(|(_, e)| mean_err < *e * (1.0 - 1e-3));
        if improved {
            best = Some((nodes.clone(), mean_err));
        }
        if !improved || cfg.refine_swaps == 0 || mean_err <= 1e-12 {
            break;
        }
        let mut part_count = part_counts(&nodes);
        let removed = select_removals(&infl, nodes.len(), &node_err, cfg.refine_swaps, |j, _| {
            let key = part_key(nodes.labels[j]);
            if filtering && part_count[key] <= 1 {
                return false;
            }
            part_count[key] -= 1;
            true
        });
        let thinned = nodes.without(&removed);
        let min_dist = cfg.min_dist_factor * median_node_spacing(&thinned);
        let swapped = insert_nodes(&thinned, source, &vertex_err, removed.len(), min_dist, &cfg.seg)?;
        if swapped.len() != nodes.len() {
            break;
        }
        nodes = swapped;
    }

    let (nodes, mean_error) = match best {
        Some(b) => b,
        None => {
            let infl = build_influence_map(source, &nodes, &cfg.seg, cfg.q)?;
            let fit = fit_transforms(source, target, &nodes, &infl, cfg.mask, &cfg.solver)?;
            let deformed = deform_mesh(source, &nodes, &fit.transforms, &infl)?;
            let err = per_vertex_error(&deformed, &target_index);
            let mean = err.iter().sum::<f64>() / err.len().max(1) as f64;
            (nodes, mean)
        }
    };
    Ok(Generation {
        nodes,
        rounds,
        counts,
        mean_error,
    })
}

fn part_key(label: Option<BodyPart>) -> usize {
    label.map_or(14, |p| p.ordinal() as usize)
}

fn part_counts(nodes: &KeyNodeSet) -> [usize; 15] {
    let mut c = [0usize; 15];
    for l in &nodes.labels {
        c[part_key(*l)] += 1;
    }
    c
}

/// Adds a node for every labeled part that has none: the part's vertex
/// closest to the centre of its bounding box.
fn cover_parts(nodes: &mut KeyNodeSet, mesh: &Mesh, seg: &SegmentationConfig) {
    let Some(labels) = &mesh.labels else { return };
    for part in BodyPart::ALL {
        if nodes.labels.contains(&Some(part)) {
            continue;
        }
        let members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == part).collect();
        let Some((lo, hi)) = crate::mesh::bounding_box(members.iter().map(|&i| &mesh.vertices[i])) else {
            continue;
        };
        let centre = (lo + hi) * 0.5;
        let pick = members
            .iter()
            .copied()
            .min_by(|&a, &b| {
                (mesh.vertices[a] - centre)
                    .norm_squared()
                    .total_cmp(&(mesh.vertices[b] - centre).norm_squared())
                    .then(a.cmp(&b))
            })
            .unwrap();
        nodes.push(mesh.vertices[pick], Some(part), node_type(Some(part), seg));
    }
}
