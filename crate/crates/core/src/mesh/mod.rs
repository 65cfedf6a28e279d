//! Mesh and sequence data model, segmentation labels and distortion metrics.

mod io;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use kiddo::{ImmutableKdTree, SquaredEuclidean};

use crate::{Error, Result, Vec3};

pub use io::{
    frame_paths, labels_path, load_labels, load_mesh, load_sequence, save_labels, save_mesh, save_sequence, MeshFormat,
};

/// Body-part segmentation label.
///
/// The declaration order is the component order used by the spiral traversal
/// of the key-node graph, so `as u8` gives the transmitted ordinal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum BodyPart {
    Head = 0,
    LeftUpperArm,
    LeftLowerArm,
    LeftHand,
    RightUpperArm,
    RightLowerArm,
    RightHand,
    Torso,
    LeftThigh,
    LeftLeg,
    LeftFoot,
    RightThigh,
    RightLeg,
    RightFoot,
}

impl BodyPart {
    pub const ALL: [BodyPart; 14] = [
        BodyPart::Head,
        BodyPart::LeftUpperArm,
        BodyPart::LeftLowerArm,
        BodyPart::LeftHand,
        BodyPart::RightUpperArm,
        BodyPart::RightLowerArm,
        BodyPart::RightHand,
        BodyPart::Torso,
        BodyPart::LeftThigh,
        BodyPart::LeftLeg,
        BodyPart::LeftFoot,
        BodyPart::RightThigh,
        BodyPart::RightLeg,
        BodyPart::RightFoot,
    ];

    pub fn ordinal(self) -> u8 {
        self as u8
    }

    pub fn from_ordinal(ordinal: u8) -> Option<BodyPart> {
        Self::ALL.get(ordinal as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            BodyPart::Head => "Head",
            BodyPart::LeftUpperArm => "LeftUpperArm",
            BodyPart::LeftLowerArm => "LeftLowerArm",
            BodyPart::LeftHand => "LeftHand",
            BodyPart::RightUpperArm => "RightUpperArm",
            BodyPart::RightLowerArm => "RightLowerArm",
            BodyPart::RightHand => "RightHand",
            BodyPart::Torso => "Torso",
            BodyPart::LeftThigh => "LeftThigh",
            BodyPart::LeftLeg => "LeftLeg",
            BodyPart::LeftFoot => "LeftFoot",
            BodyPart::RightThigh => "RightThigh",
            BodyPart::RightLeg => "RightLeg",
            BodyPart::RightFoot => "RightFoot",
        }
    }

    /// The part whose traversal a part without an explicit start continues
    /// from (lower arm continues the upper arm, and so on).
    pub fn parent(self) -> Option<BodyPart> {
        use BodyPart::*;
        match self {
            LeftLowerArm => Some(LeftUpperArm),
            LeftHand => Some(LeftLowerArm),
            RightLowerArm => Some(RightUpperArm),
            RightHand => Some(RightLowerArm),
            LeftLeg => Some(LeftThigh),
            LeftFoot => Some(LeftLeg),
            RightLeg => Some(RightThigh),
            RightFoot => Some(RightLeg),
            LeftUpperArm | RightUpperArm | Torso => Some(Head),
            LeftThigh | RightThigh => Some(Torso),
            Head => None,
        }
    }
}

impl fmt::Display for BodyPart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BodyPart {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s.chars().filter(|c| c.is_ascii_alphanumeric()).collect();
        BodyPart::ALL
            .iter()
            .copied()
            .find(|p| p.name().eq_ignore_ascii_case(&key))
            .ok_or_else(|| Error::Config(format!("unknown body part {s:?}")))
    }
}

/// One frame: positions, triangles and optional per-vertex labels.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Mesh {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[u32; 3]>,
    pub labels: Option<Vec<BodyPart>>,
}

impl Mesh {
    pub fn new(
        vertices: Vec<Vec3>,
        faces: Vec<[u32; 3]>,
        labels: Option<Vec<BodyPart>>,
    ) -> Result<Mesh> {
        let mesh = Mesh {
            vertices,
            faces,
            labels,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len();
        if let Some(f) = self
            .faces
            .iter()
            .find(|f| f.iter().any(|&i| i as usize >= n))
        {
            return Err(Error::InvalidMesh(format!(
                "face {f:?} references a vertex beyond {n}"
            )));
        }
        if let Some(labels) = &self.labels {
            if labels.len() != n {
                return Err(Error::LabelMismatch {
                    expected: n,
                    found: labels.len(),
                });
            }
        }
        if self.vertices.iter().any(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidMesh("non-finite vertex position".into()));
        }
        Ok(())
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn label(&self, vertex: usize) -> Option<BodyPart> {
        self.labels.as_ref().map(|l| l[vertex])
    }

    /// Axis-aligned bounds `(min, max)`; `None` for an empty mesh.
    pub fn bounding_box(&self) -> Option<(Vec3, Vec3)> {
        bounding_box(self.vertices.iter())
    }

    /// Copy with positions rounded through `f32`, the I-frame storage precision.
    pub fn to_f32_precision(&self) -> Mesh {
        Mesh {
            vertices: self
                .vertices
                .iter()
                .map(|v| v.map(|c| c as f32 as f64))
                .collect(),
            faces: self.faces.clone(),
            labels: self.labels.clone(),
        }
    }
}

pub(crate) fn bounding_box<'a>(points: impl Iterator<Item = &'a Vec3>) -> Option<(Vec3, Vec3)> {
    points.fold(None, |acc, p| match acc {
        None => Some((*p, *p)),
        Some((lo, hi)) => Some((lo.inf(p), hi.sup(p))),
    })
}

/// An ordered run of frames. Frames may differ in topology.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    pub frames: Vec<Mesh>,
    pub frame_rate: f64,
}

impl Sequence {
    pub fn new(frames: Vec<Mesh>, frame_rate: f64) -> Result<Sequence> {
        if frames.is_empty() {
            return Err(Error::Config("a sequence needs at least one frame".into()));
        }
        for f in &frames {
            f.validate()?;
        }
        Ok(Sequence { frames, frame_rate })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// How segmentation labels constrain which nodes may drive a vertex.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SegMode {
    /// Labels ignored for influence; plain Euclidean nearest nodes.
    Off,
    /// Same-label filtering, falling back to nearest nodes when a part has none.
    #[default]
    Auto,
    /// Same-label filtering; a part without nodes is an error.
    Manual,
}

impl SegMode {
    pub fn code(self) -> u8 {
        match self {
            SegMode::Off => 0,
            SegMode::Auto => 1,
            SegMode::Manual => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<SegMode> {
        match code {
            0 => Some(SegMode::Off),
            1 => Some(SegMode::Auto),
            2 => Some(SegMode::Manual),
            _ => None,
        }
    }
}

impl FromStr for SegMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "off" => Ok(SegMode::Off),
            "auto" => Ok(SegMode::Auto),
            "manual" => Ok(SegMode::Manual),
            _ => Err(Error::Config(format!("unknown segmentation mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentationConfig {
    pub mode: SegMode,
    /// Parts whose nodes carry affine transforms. Empty means all-rigid.
    pub affine_parts: BTreeSet<BodyPart>,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        SegmentationConfig {
            mode: SegMode::Auto,
            affine_parts: BTreeSet::from([BodyPart::Torso]),
        }
    }
}

impl SegmentationConfig {
    pub fn is_affine(&self, part: Option<BodyPart>) -> bool {
        part.is_some_and(|p| self.affine_parts.contains(&p))
    }

    /// Affine parts packed as a bitmask over part ordinals.
    pub fn affine_bits(&self) -> u16 {
        self.affine_parts
            .iter()
            .fold(0u16, |acc, p| acc | (1 << p.ordinal()))
    }

    pub fn affine_parts_from_bits(bits: u16) -> BTreeSet<BodyPart> {
        BodyPart::ALL
            .iter()
            .copied()
            .filter(|p| bits & (1 << p.ordinal()) != 0)
            .collect()
    }
}

/// Root-mean-square vertex error divided by the bounding-box diagonal of `b`.
pub fn rmse_distortion(a: &Mesh, b: &Mesh) -> Result<f64> {
    if a.vertex_count() != b.vertex_count() {
        return Err(Error::ShapeMismatch {
            left: a.vertex_count(),
            right: b.vertex_count(),
        });
    }
    if a.vertices.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = a
        .vertices
        .iter()
        .zip(&b.vertices)
        .map(|(p, q)| (p - q).norm_squared())
        .sum();
    let rmse = (sum / a.vertex_count() as f64).sqrt();
    Ok(rmse / normalizer(b))
}

/// Symmetric nearest-neighbour RMSE, normalized like [`rmse_distortion`].
/// Used when the prediction and the ground truth differ in topology.
pub fn nn_rmse_distortion(a: &Mesh, b: &Mesh) -> f64 {
    if a.vertices.is_empty() || b.vertices.is_empty() {
        return 0.0;
    }
    let one_way = |from: &Mesh, to: &Mesh| -> f64 {
        let index = PointIndex::new(&to.vertices);
        let sum: f64 = from.vertices.iter().map(|p| index.nearest(p).1).sum();
        sum / from.vertex_count() as f64
    };
    let mse = 0.5 * (one_way(a, b) + one_way(b, a));
    mse.sqrt() / normalizer(b)
}

/// Prediction distortion: vertexwise RMSE when topologies agree, otherwise
/// nearest-neighbour RMSE.
pub fn prediction_distortion(predicted: &Mesh, truth: &Mesh) -> f64 {
    match rmse_distortion(predicted, truth) {
        Ok(d) => d,
        Err(_) => nn_rmse_distortion(predicted, truth),
    }
}

fn normalizer(mesh: &Mesh) -> f64 {
    match mesh.bounding_box() {
        Some((lo, hi)) if (hi - lo).norm() > 0.0 => (hi - lo).norm(),
        _ => 1.0,
    }
}

/// Exact nearest-neighbour lookup over a fixed point set.
pub struct PointIndex {
    tree: ImmutableKdTree<f64, 3>,
}

impl PointIndex {
    /// Panics on an empty point set.
    pub fn new(points: &[Vec3]) -> PointIndex {
        let pts: Vec<[f64; 3]> = points.iter().map(|p| [p.x, p.y, p.z]).collect();
        let tree = ImmutableKdTree::new_from_slice(&pts).expect("kd-tree construction");
        PointIndex { tree }
    }

    /// `(index, squared distance)` of the closest point.
    pub fn nearest(&self, query: &Vec3) -> (usize, f64) {
        let hit = self
            .tree
            .query(&[query.x, query.y, query.z])
            .nearest_one::<SquaredEuclidean<f64>>()
            .execute();
        (hit.item as usize, hit.distance)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tri() -> Mesh {
        Mesh::new(
            vec![Vec3::zeros(), Vec3::x(), Vec3::y()],
            vec![[0, 1, 2]],
            None,
        )
        .unwrap()
    }

    #[test]
    fn body_part_order_is_pinned() {
        let names = [
            "Head",
            "LeftUpperArm",
            "LeftLowerArm",
            "LeftHand",
            "RightUpperArm",
            "RightLowerArm",
            "RightHand",
            "Torso",
            "LeftThigh",
            "LeftLeg",
            "LeftFoot",
            "RightThigh",
            "RightLeg",
            "RightFoot",
        ];
        for (i, name) in names.iter().enumerate() {
            let part = BodyPart::from_ordinal(i as u8).unwrap();
            assert_eq!(part.name(), *name);
            assert_eq!(part.ordinal() as usize, i);
            assert_eq!(name.parse::<BodyPart>().unwrap(), part);
        }
        assert!(BodyPart::from_ordinal(14).is_none());
        assert_eq!("left-upper-arm".parse::<BodyPart>().unwrap(), BodyPart::LeftUpperArm);
    }

    #[test]
    fn invalid_face_and_label_length_rejected() {
        let err = Mesh::new(vec![Vec3::zeros(); 3], vec![[0, 1, 5]], None).unwrap_err();
        assert!(matches!(err, Error::InvalidMesh(_)));
        let err = Mesh::new(vec![Vec3::zeros(); 3], vec![], Some(vec![BodyPart::Head])).unwrap_err();
        assert!(matches!(err, Error::LabelMismatch { expected: 3, found: 1 }));
    }

    #[test]
    fn rmse_identical_is_zero() {
        let m = tri();
        assert_eq!(rmse_distortion(&m, &m).unwrap(), 0.0);
    }

    #[test]
    fn rmse_uniform_shift_on_unit_diagonal() {
        let s = 1.0 / 3f64.sqrt();
        let b = Mesh::new(vec![Vec3::zeros(), Vec3::new(s, s, s)], vec![], None).unwrap();
        let d = 0.125;
        let a = Mesh {
            vertices: b.vertices.iter().map(|v| v + Vec3::new(d, 0.0, 0.0)).collect(),
            ..b.clone()
        };
        assert!((rmse_distortion(&a, &b).unwrap() - d).abs() < 1e-15);
    }

    #[test]
    fn rmse_shape_mismatch() {
        let a = tri();
        let b = Mesh::new(vec![Vec3::zeros()], vec![], None).unwrap();
        assert!(matches!(
            rmse_distortion(&a, &b),
            Err(Error::ShapeMismatch { left: 3, right: 1 })
        ));
    }

    #[test]
    fn nn_rmse_zero_on_permuted_copy() {
        let a = tri();
        let mut b = a.clone();
        b.vertices.reverse();
        assert_eq!(nn_rmse_distortion(&a, &b), 0.0);
    }

    #[test]
    fn affine_bits_round_trip() {
        let seg = SegmentationConfig {
            mode: SegMode::Manual,
            affine_parts: BTreeSet::from([BodyPart::Torso, BodyPart::LeftThigh]),
        };
        assert_eq!(
            SegmentationConfig::affine_parts_from_bits(seg.affine_bits()),
            seg.affine_parts
        );
    }
}
