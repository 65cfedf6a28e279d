//! Correspondence estimation: nearest-neighbour matching with outlier
//! rejection, and the per-part bounding-box pre-alignment.

use crate::mesh::{bounding_box, BodyPart, Mesh, PointIndex};
use crate::Vec3;

/// Matched target point per source vertex; `None` when rejected.
pub type Correspondences = Vec<Option<Vec3>>;

/// Matches farther than this multiple of the median match distance are dropped.
pub const REJECT_FACTOR: f64 = 3.0;

/// Per-part rigid offsets from the pre-alignment, indexed by part ordinal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartOffsets(pub [Vec3; 14]);

impl Default for PartOffsets {
    fn default() -> Self {
        PartOffsets([Vec3::zeros(); 14])
    }
}

impl PartOffsets {
    pub fn get(&self, part: BodyPart) -> Vec3 {
        self.0[part.ordinal() as usize]
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|v| *v == Vec3::zeros())
    }

    /// Shifts every labeled point by its part's offset.
    pub fn apply(&self, points: &mut [Vec3], labels: Option<&[BodyPart]>) {
        if let Some(labels) = labels {
            for (p, l) in points.iter_mut().zip(labels) {
                *p += self.get(*l);
            }
        }
    }
}

/// For each part present in both meshes, the offset between the centres of
/// the part's bounding boxes (target minus source).
pub fn seg_guided_prealign(source: &Mesh, target: &Mesh) -> PartOffsets {
    let mut out = PartOffsets::default();
    let (Some(sl), Some(tl)) = (&source.labels, &target.labels) else {
        return out;
    };
    let centre = |mesh: &Mesh, labels: &[BodyPart], part: BodyPart| {
        bounding_box(
            mesh.vertices
                .iter()
                .zip(labels)
                .filter(|(_, l)| **l == part)
                .map(|(v, _)| v),
        )
        .map(|(lo, hi)| (lo + hi) * 0.5)
    };
    for part in BodyPart::ALL {
        if let (Some(cs), Some(ct)) = (centre(source, sl, part), centre(target, tl, part)) {
            out.0[part.ordinal() as usize] = ct - cs;
        }
    }
    out
}

/// Median edge length of `mesh`, or 0 without faces. Used as the smallest
/// rejection distance so that a near-perfect fit elsewhere cannot shrink the
/// threshold to zero and silently drop every poorly fitted region.
pub fn reject_floor(mesh: &Mesh) -> f64 {
    let mut lengths: Vec<f64> = mesh
        .faces
        .iter()
        .flat_map(|f| [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])])
        .map(|(a, b)| (mesh.vertices[a as usize] - mesh.vertices[b as usize]).norm())
        .collect();
    if lengths.is_empty() {
        return 0.0;
    }
    let mid = lengths.len() / 2;
    *lengths.select_nth_unstable_by(mid, f64::total_cmp).1
}

/// Nearest target vertex for each query point, dropping matches beyond
/// `max(REJECT_FACTOR × median match distance, floor)`.
pub fn find_correspondences(queries: &[Vec3], target: &PointIndex, target_points: &[Vec3], floor: f64) -> Correspondences {
    let hits: Vec<(usize, f64)> = queries.iter().map(|q| target.nearest(q)).collect();
    let mut dists: Vec<f64> = hits.iter().map(|h| h.1.sqrt()).collect();
    let threshold = if dists.is_empty() {
        f64::INFINITY
    } else {
        let mid = dists.len() / 2;
        let (_, median, _) = dists.select_nth_unstable_by(mid, f64::total_cmp);
        let t = (REJECT_FACTOR * *median).max(floor);
        if t > 0.0 {
            t
        } else {
            f64::INFINITY
        }
    };
    hits.iter()
        .map(|&(idx, d2)| (d2.sqrt() <= threshold).then(|| target_points[idx]))
        .collect()
}
