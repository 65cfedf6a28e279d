//! Deterministic labeled test sequences: a 14-part capsule humanoid walking
//! (`walker`), the same walk with an oscillating non-rigid torso (`swish`),
//! and a uniformly translating body (`drift`).

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::affine::{rot_x, rot_y, rot_z};
use crate::mesh::{BodyPart, Mesh, Sequence};
use crate::{Error, Mat3, Result, Vec3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scenario {
    Walker,
    /// Walker plus torso scaling/shearing of relative size `amplitude`.
    Swish { amplitude: f64 },
    /// Rest pose translated by `velocity` per frame.
    Drift { velocity: Vec3 },
}

impl Scenario {
    pub fn name(&self) -> &'static str {
        match self {
            Scenario::Walker => "walker",
            Scenario::Swish { .. } => "swish",
            Scenario::Drift { .. } => "drift",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Parses a scenario name with default parameters (swish amplitude 0.2,
/// drift velocity (0.01, 0, 0)).
impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "walker" => Ok(Scenario::Walker),
            "swish" => Ok(Scenario::Swish { amplitude: 0.2 }),
            "drift" => Ok(Scenario::Drift {
                velocity: Vec3::new(0.01, 0.0, 0.0),
            }),
            _ => Err(Error::UnknownScenario(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub scenario: Scenario,
    pub frames: usize,
    /// Approximate vertex count; the capsule resolution is derived from it.
    pub vertices: usize,
    /// Frames per gait cycle.
    pub period: f64,
    pub seed: u64,
}

impl SynthConfig {
    pub fn new(scenario: Scenario) -> SynthConfig {
        SynthConfig {
            scenario,
            frames: 16,
            vertices: 1000,
            period: 16.0,
            seed: 0,
        }
    }
}

struct Segment {
    part: BodyPart,
    parent: Option<BodyPart>,
    pivot: Vec3,
    a: Vec3,
    b: Vec3,
    radius: f64,
}

fn skeleton() -> Vec<Segment> {
    use BodyPart::*;
    let v = Vec3::new;
    let mut out = vec![
        Segment { part: Head, parent: Some(Torso), pivot: v(0.0, 1.5, 0.0), a: v(0.0, 1.55, 0.0), b: v(0.0, 1.7, 0.0), radius: 0.1 },
        Segment { part: Torso, parent: None, pivot: v(0.0, 0.95, 0.0), a: v(0.0, 0.98, 0.0), b: v(0.0, 1.38, 0.0), radius: 0.16 },
    ];
    for side in [1.0, -1.0] {
        let (ua, la, h, th, lg, ft) = if side > 0.0 {
            (LeftUpperArm, LeftLowerArm, LeftHand, LeftThigh, LeftLeg, LeftFoot)
        } else {
            (RightUpperArm, RightLowerArm, RightHand, RightThigh, RightLeg, RightFoot)
        };
        let x = |d: f64| d * side;
        out.extend([
            Segment { part: ua, parent: Some(Torso), pivot: v(x(0.22), 1.44, 0.0), a: v(x(0.24), 1.4, 0.0), b: v(x(0.26), 1.16, 0.0), radius: 0.05 },
            Segment { part: la, parent: Some(ua), pivot: v(x(0.26), 1.12, 0.0), a: v(x(0.265), 1.09, 0.0), b: v(x(0.27), 0.9, 0.0), radius: 0.045 },
            Segment { part: h, parent: Some(la), pivot: v(x(0.27), 0.86, 0.0), a: v(x(0.272), 0.84, 0.0), b: v(x(0.275), 0.76, 0.0), radius: 0.04 },
            Segment { part: th, parent: Some(Torso), pivot: v(x(0.1), 0.93, 0.0), a: v(x(0.1), 0.86, 0.0), b: v(x(0.1), 0.55, 0.0), radius: 0.07 },
            Segment { part: lg, parent: Some(th), pivot: v(x(0.1), 0.5, 0.0), a: v(x(0.1), 0.46, 0.0), b: v(x(0.1), 0.14, 0.0), radius: 0.055 },
            Segment { part: ft, parent: Some(lg), pivot: v(x(0.1), 0.08, 0.0), a: v(x(0.1), 0.05, 0.0), b: v(x(0.1), 0.04, 0.14), radius: 0.04 },
        ]);
    }
    out.sort_by_key(|s| s.part.ordinal());
    out
}

/// Capsule around segment `a → b`: `rings` latitude rings of `segs`
/// vertices plus two poles, triangulated.
fn capsule(seg: &Segment, rings: usize, segs: usize, vertices: &mut Vec<Vec3>, faces: &mut Vec<[u32; 3]>) {
    let axis = seg.b - seg.a;
    let len = axis.norm();
    let w = axis / len;
    let helper = if w.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let u = w.cross(&helper).normalize();
    let v = w.cross(&u);
    let r = seg.radius;
    let total = len + 2.0 * r;
    let base = vertices.len() as u32;
    vertices.push(seg.a - w * r);
    for i in 1..=rings {
        let h = total * i as f64 / (rings + 1) as f64 - r;
        let rho = if h < 0.0 {
            (r * r - h * h).max(0.0).sqrt()
        } else if h > len {
            (r * r - (h - len) * (h - len)).max(0.0).sqrt()
        } else {
            r
        };
        for k in 0..segs {
            let phi = TAU * k as f64 / segs as f64;
            vertices.push(seg.a + w * h + (u * phi.cos() + v * phi.sin()) * rho);
        }
    }
    vertices.push(seg.b + w * r);
    let ring = |i: usize, k: usize| base + 1 + (i * segs + k % segs) as u32;
    let top = base + 1 + (rings * segs) as u32;
    for k in 0..segs {
        faces.push([base, ring(0, k + 1), ring(0, k)]);
        faces.push([top, ring(rings - 1, k), ring(rings - 1, k + 1)]);
    }
    for i in 0..rings - 1 {
        for k in 0..segs {
            faces.push([ring(i, k), ring(i, k + 1), ring(i + 1, k + 1)]);
            faces.push([ring(i, k), ring(i + 1, k + 1), ring(i + 1, k)]);
        }
    }
}

/// Rest-pose humanoid with roughly `target_vertices` vertices, spread over
/// the parts in proportion to their surface area.
pub fn rest_pose(target_vertices: usize) -> Mesh {
    let segs = skeleton();
    let area = |s: &Segment| TAU * s.radius * ((s.b - s.a).norm() + 2.0 * s.radius);
    let total: f64 = segs.iter().map(area).sum();
    let spacing = (total / target_vertices.max(1) as f64).sqrt();
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    let mut labels = Vec::new();
    for seg in &segs {
        let length = (seg.b - seg.a).norm() + 2.0 * seg.radius;
        let rings = ((length / spacing).round() as usize).max(3);
        let around = ((TAU * seg.radius / spacing).round() as usize).max(3);
        let before = vertices.len();
        capsule(seg, rings, around, &mut vertices, &mut faces);
        labels.extend(std::iter::repeat_n(seg.part, vertices.len() - before));
    }
    Mesh {
        vertices,
        faces,
        labels: Some(labels),
    }
}

/// Seeded gait parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gait {
    /// Per-joint amplitude multipliers, indexed by part ordinal.
    pub gain: [f64; 14],
    pub phase: f64,
    pub swish_phase: f64,
}

impl Gait {
    pub fn from_seed(seed: u64) -> Gait {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut gain = [0.0; 14];
        for g in &mut gain {
            *g = rng.random_range(0.85..1.15);
        }
        Gait {
            gain,
            phase: rng.random_range(0.0..TAU),
            swish_phase: rng.random_range(0.0..TAU),
        }
    }

    /// Local joint rotation of `part` at gait angle `phi`.
    pub fn joint(&self, part: BodyPart, phi: f64) -> Mat3 {
        use BodyPart::*;
        let g = self.gain[part.ordinal() as usize];
        match part {
            Torso => rot_y(0.12 * g * phi.sin()),
            Head => rot_y(0.2 * g * (phi + 0.7).sin()) * rot_x(0.05 * g * (2.0 * phi).sin()),
            LeftThigh => rot_x(-0.45 * g * phi.sin()),
            RightThigh => rot_x(0.45 * g * phi.sin()),
            LeftLeg => rot_x(0.6 * g * (phi + 0.5 * PI).sin().max(0.0)),
            RightLeg => rot_x(0.6 * g * (phi + 1.5 * PI).sin().max(0.0)),
            LeftFoot => rot_x(0.2 * g * phi.cos()),
            RightFoot => rot_x(-0.2 * g * phi.cos()),
            LeftUpperArm => rot_x(0.35 * g * phi.sin()) * rot_z(0.1 * g),
            RightUpperArm => rot_x(-0.35 * g * phi.sin()) * rot_z(-0.1 * g),
            LeftLowerArm => rot_x(-0.3 - 0.2 * g * phi.sin()),
            RightLowerArm => rot_x(-0.3 + 0.2 * g * phi.sin()),
            LeftHand | RightHand => rot_x(0.15 * g * (phi + 0.3).sin()),
        }
    }
}

/// Non-rigid torso map at frame angle `psi`: scaling in x/z, counter-scaling
/// in y, and an x–y shear, all proportional to `amplitude`.
fn swish_matrix(amplitude: f64, psi: f64) -> Mat3 {
    let s = amplitude * psi.sin();
    let h = 0.5 * amplitude * (psi + PI / 3.0).sin();
    Mat3::new(1.0 + s, h, 0.0, 0.0, 1.0 - 0.5 * s, 0.0, 0.0, 0.0, 1.0 + s)
}

/// Pose frame `f` of a walk; `torso` optionally deforms torso vertices in
/// the rest frame before the rigid skinning.
fn pose(rest: &Mesh, gait: &Gait, period: f64, f: usize, torso: Option<(Mat3, Vec3)>) -> Mesh {
    let phi = TAU * f as f64 / period + gait.phase;
    let segs = skeleton();
    // world transform per part: x ↦ R x + t
    let mut world: Vec<Option<(Mat3, Vec3)>> = vec![None; 14];
    while world.iter().any(Option::is_none) {
        for seg in &segs {
            if world[seg.part.ordinal() as usize].is_some() {
                continue;
            }
            let (pr, pt) = match seg.parent {
                None => (Mat3::identity(), Vec3::new(0.0, 0.02 * (2.0 * phi).sin(), 0.03 * f as f64)),
                Some(p) => match world[p.ordinal() as usize] {
                    Some(w) => w,
                    None => continue,
                },
            };
            let local = gait.joint(seg.part, phi);
            let lt = seg.pivot - local * seg.pivot;
            world[seg.part.ordinal() as usize] = Some((pr * local, pr * lt + pt));
        }
    }
    let labels = rest.labels.as_ref().expect("rest pose is labeled");
    let vertices = rest
        .vertices
        .iter()
        .zip(labels)
        .map(|(x, part)| {
            let (r, t) = world[part.ordinal() as usize].unwrap();
            let x = match torso {
                Some((m, c)) if *part == BodyPart::Torso => c + m * (x - c),
                _ => *x,
            };
            r * x + t
        })
        .collect();
    Mesh {
        vertices,
        faces: rest.faces.clone(),
        labels: rest.labels.clone(),
    }
}

/// Builds a labeled sequence for the configured scenario.
pub fn synthesize(cfg: &SynthConfig) -> Result<Sequence> {
    if cfg.frames == 0 {
        return Err(Error::Config("a sequence needs at least one frame".into()));
    }
    if !(cfg.period > 0.0) {
        return Err(Error::Config("gait period must be positive".into()));
    }
    let rest = rest_pose(cfg.vertices);
    let gait = Gait::from_seed(cfg.seed);
    let frames = match cfg.scenario {
        Scenario::Walker => (0..cfg.frames).map(|f| pose(&rest, &gait, cfg.period, f, None)).collect(),
        Scenario::Swish { amplitude } => {
            if !amplitude.is_finite() || amplitude.abs() >= 0.9 {
                return Err(Error::Config(format!("swish amplitude {amplitude} out of range")));
            }
            let centre = Vec3::new(0.0, 1.18, 0.0);
            (0..cfg.frames)
                .map(|f| {
                    let torso = (amplitude != 0.0).then(|| {
                        let psi = TAU * f as f64 / cfg.period + gait.swish_phase;
                        (swish_matrix(amplitude, psi), centre)
                    });
                    pose(&rest, &gait, cfg.period, f, torso)
                })
                .collect()
        }
        Scenario::Drift { velocity } => {
            let base = pose(&rest, &gait, cfg.period, 0, None);
            (0..cfg.frames)
                .map(|k| Mesh {
                    vertices: base.vertices.iter().map(|v| v + velocity * k as f64).collect(),
                    ..base.clone()
                })
                .collect()
        }
    };
    Sequence::new(frames, 30.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(s: Scenario, frames: usize) -> SynthConfig {
        SynthConfig {
            frames,
            ..SynthConfig::new(s)
        }
    }

    #[test]
    fn rest_pose_has_all_parts_and_valid_faces() {
        let m = rest_pose(1000);
        m.validate().unwrap();
        assert!((800..1300).contains(&m.vertex_count()), "{}", m.vertex_count());
        let labels = m.labels.as_ref().unwrap();
        for p in BodyPart::ALL {
            assert!(labels.contains(&p));
        }
        assert!((400..700).contains(&rest_pose(500).vertex_count()));
        assert!((4500..5600).contains(&rest_pose(5000).vertex_count()));
    }

    #[test]
    fn head_is_on_top() {
        let m = rest_pose(600);
        let labels = m.labels.as_ref().unwrap();
        let top = (0..m.vertex_count()).max_by(|&a, &b| m.vertices[a].y.total_cmp(&m.vertices[b].y)).unwrap();
        assert_eq!(labels[top], BodyPart::Head);
    }

    #[test]
    fn drift_is_exact_translation() {
        let v = Vec3::new(0.01, 0.0, 0.0);
        let seq = synthesize(&cfg(Scenario::Drift { velocity: v }, 8)).unwrap();
        for (k, f) in seq.frames.iter().enumerate() {
            for (a, b) in f.vertices.iter().zip(&seq.frames[0].vertices) {
                assert_eq!(*a, b + v * k as f64);
            }
        }
    }

    #[test]
    fn swish_at_zero_amplitude_is_walker() {
        let a = synthesize(&cfg(Scenario::Swish { amplitude: 0.0 }, 6)).unwrap();
        let b = synthesize(&cfg(Scenario::Walker, 6)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn walker_is_seed_deterministic() {
        let mut c = cfg(Scenario::Walker, 5);
        c.seed = 17;
        assert_eq!(synthesize(&c).unwrap(), synthesize(&c).unwrap());
        assert_eq!(Gait::from_seed(17), Gait::from_seed(17));
        let mut d = c.clone();
        d.seed = 18;
        assert_ne!(synthesize(&c).unwrap(), synthesize(&d).unwrap());
    }

    #[test]
    fn limbs_move_rigidly_in_walker() {
        let seq = synthesize(&cfg(Scenario::Walker, 3)).unwrap();
        let labels = seq.frames[0].labels.as_ref().unwrap();
        let idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == BodyPart::LeftLeg).collect();
        for &i in &idx[..5] {
            for &j in &idx[5..10] {
                let d0 = (seq.frames[0].vertices[i] - seq.frames[0].vertices[j]).norm();
                let d2 = (seq.frames[2].vertices[i] - seq.frames[2].vertices[j]).norm();
                assert!((d0 - d2).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn swish_changes_torso_extent() {
        let seq = synthesize(&cfg(Scenario::Swish { amplitude: 0.2 }, 8)).unwrap();
        let width = |m: &Mesh| {
            let labels = m.labels.as_ref().unwrap();
            let xs: Vec<f64> = (0..labels.len())
                .filter(|&i| labels[i] == BodyPart::Torso)
                .map(|i| m.vertices[i].x)
                .collect();
            xs.iter().cloned().fold(f64::MIN, f64::max) - xs.iter().cloned().fold(f64::MAX, f64::min)
        };
        let w: Vec<f64> = seq.frames.iter().map(width).collect();
        let spread = w.iter().cloned().fold(f64::MIN, f64::max) / w.iter().cloned().fold(f64::MAX, f64::min);
        assert!(spread > 1.15, "{w:?}");
    }

    #[test]
    fn scenario_names() {
        assert_eq!("walker".parse::<Scenario>().unwrap(), Scenario::Walker);
        assert_eq!("Swish".parse::<Scenario>().unwrap().name(), "swish");
        assert!(matches!("jog".parse::<Scenario>(), Err(Error::UnknownScenario(_))));
    }
}
