//! End-to-end encoder and decoder.
//!
//! A sequence is split into GoFs. Each GoF stores its first frame raw (f32),
//! generates key nodes on the key P-frame, transmits them, and codes every
//! following frame as node transforms fitted from the previously *decoded*
//! frame, so encoder and decoder states stay bit-identical.
//!
//! Layout (little-endian): a 16-byte header (`"BMKN"`, version `u16`, frame
//! count `u32`, GoF size `u32`, flags `u16`) followed by blocks of
//! `tag u8 | length u32 | payload`. Unknown tags are skipped.

pub mod container;
pub mod motion;
pub mod nodes;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::affine::CombinationMask;
use crate::deform::{SolverConfig, DEFAULT_Q};
use crate::keynodes::{generate, GeneratorConfig};
use crate::mesh::{prediction_distortion, BodyPart, Mesh, SegMode, SegmentationConfig, Sequence};
use crate::rdopt::{select_in_state, RdConfig, RdPoint, Strategy};
use crate::{Error, Result, Vec3};

pub use container::{Header, BLOCK_OVERHEAD, HEADER_LEN, MAGIC, VERSION};
pub use motion::{decode_pframe, encode_pframe, EncodedPFrame, MotionConfig, MotionState, TranslationMode};
pub use nodes::{canonical_order, decode_nodes, encode_nodes, NodeBlock};

use container::{read_block, write_block, ByteReader, ByteWriter, TAG_IFRAME, TAG_NODES, TAG_PFRAME};

/// Smallest quantization step representable in transmitted models.
pub const MIN_QSTEP: f64 = 1.0 / (1u32 << 20) as f64;

/// Vertical body axis of the input; the codec works internally with +y up.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UpAxis {
    X,
    #[default]
    Y,
    Z,
}

impl UpAxis {
    pub fn code(self) -> u16 {
        match self {
            UpAxis::X => 0,
            UpAxis::Y => 1,
            UpAxis::Z => 2,
        }
    }

    pub fn from_code(c: u16) -> Option<UpAxis> {
        [UpAxis::X, UpAxis::Y, UpAxis::Z].get(c as usize).copied()
    }

    /// Cyclic coordinate permutation bringing this axis to +y.
    pub fn to_internal(self, v: &Vec3) -> Vec3 {
        match self {
            UpAxis::Y => *v,
            UpAxis::Z => Vec3::new(v.y, v.z, v.x),
            UpAxis::X => Vec3::new(v.z, v.x, v.y),
        }
    }

    pub fn to_external(self, v: &Vec3) -> Vec3 {
        match self {
            UpAxis::Y => *v,
            UpAxis::Z => Vec3::new(v.z, v.x, v.y),
            UpAxis::X => Vec3::new(v.y, v.z, v.x),
        }
    }

    fn map_mesh(self, mesh: &Mesh, f: fn(UpAxis, &Vec3) -> Vec3) -> Mesh {
        if self == UpAxis::Y {
            return mesh.clone();
        }
        Mesh {
            vertices: mesh.vertices.iter().map(|v| f(self, v)).collect(),
            ..mesh.clone()
        }
    }
}

impl FromStr for UpAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "x" => Ok(UpAxis::X),
            "y" => Ok(UpAxis::Y),
            "z" => Ok(UpAxis::Z),
            _ => Err(Error::Config(format!("unknown axis {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GofConfig {
    pub gof_size: usize,
    /// Frame (within the GoF) the key nodes are generated on.
    pub key_pframe_index: usize,
    pub node_count: usize,
    pub q: usize,
    pub qstep_t: f64,
    pub qstep_p: f64,
    pub seg: SegmentationConfig,
    pub rd: RdConfig,
    pub solver: SolverConfig,
    pub translation_predcode: bool,
    /// Skip the RD search and use this mask everywhere.
    pub force_mask: Option<CombinationMask>,
    /// Upper bound on node generation rounds.
    pub node_rounds: usize,
    pub seed: u64,
    pub up_axis: UpAxis,
}

impl Default for GofConfig {
    fn default() -> Self {
        GofConfig {
            gof_size: 8,
            key_pframe_index: 1,
            node_count: 24,
            q: DEFAULT_Q,
            qstep_t: 1e-3,
            qstep_p: 1e-3,
            seg: SegmentationConfig::default(),
            rd: RdConfig::default(),
            solver: SolverConfig::default(),
            translation_predcode: true,
            force_mask: None,
            node_rounds: 20,
            seed: 0,
            up_axis: UpAxis::Y,
        }
    }
}

impl GofConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.gof_size < 2 {
            return bad(format!("GoF size must be at least 2, got {}", self.gof_size));
        }
        if self.key_pframe_index == 0 || self.key_pframe_index >= self.gof_size {
            return bad(format!("key P-frame index {} outside 1..{}", self.key_pframe_index, self.gof_size));
        }
        if self.node_count == 0 || self.node_count > u16::MAX as usize {
            return bad(format!("node count {} out of range", self.node_count));
        }
        if self.q == 0 || self.q > 255 {
            return bad(format!("Q must be in 1..=255, got {}", self.q));
        }
        for (name, q) in [("qstep-t", self.qstep_t), ("qstep-p", self.qstep_p)] {
            if !(q >= MIN_QSTEP && q <= 1024.0) {
                return bad(format!("{name} {q} outside [{MIN_QSTEP:e}, 1024]"));
            }
        }
        if let Some(m) = self.force_mask {
            if !m.is_legal() {
                return bad(format!("forced mask {} does not enable translation", m.name()));
            }
        }
        self.rd.validate()?;
        self.solver.validate()
    }

    pub fn motion(&self) -> MotionConfig {
        MotionConfig {
            seg: self.seg.clone(),
            q: self.q,
            qstep_t: self.qstep_t,
            qstep_p: self.qstep_p,
            predcode: self.translation_predcode,
            solver: self.solver.clone(),
        }
    }

    fn flags(&self) -> u16 {
        (self.seg.mode.code() as u16 & 0b11)
            | (self.translation_predcode as u16) << 2
            | (self.solver.seg_corr_enabled as u16) << 3
            | ((self.rd.strategy == Strategy::PerFrame) as u16) << 4
            | self.up_axis.code() << 5
            | (self.q as u16) << 8
    }
}

/// Settings recovered from header flags.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamFlags {
    pub seg_mode: SegMode,
    pub predcode: bool,
    pub seg_corr: bool,
    pub per_frame: bool,
    pub up_axis: UpAxis,
    pub q: usize,
}

impl StreamFlags {
    pub fn parse(flags: u16) -> Result<StreamFlags> {
        let seg_mode = SegMode::from_code((flags & 0b11) as u8)
            .ok_or_else(|| Error::CorruptBlock(format!("segmentation mode in flags {flags:#06x}")))?;
        let up_axis = UpAxis::from_code((flags >> 5) & 0b11)
            .ok_or_else(|| Error::CorruptBlock(format!("axis in flags {flags:#06x}")))?;
        let q = (flags >> 8) as usize;
        if q == 0 {
            return Err(Error::CorruptBlock("Q of zero in flags".into()));
        }
        Ok(StreamFlags {
            seg_mode,
            predcode: flags & 1 << 2 != 0,
            seg_corr: flags & 1 << 3 != 0,
            per_frame: flags & 1 << 4 != 0,
            up_axis,
            q,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PFrameReport {
    pub frame: usize,
    pub mask: CombinationMask,
    pub mode: TranslationMode,
    /// Whole block, tag and length included.
    pub bytes: usize,
    pub p_bytes: usize,
    pub t_bytes: usize,
    /// Prediction distortion against the input frame.
    pub distortion: f64,
    /// All evaluated masks when a selection ran on this frame.
    pub rd: Vec<RdPoint>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GofReport {
    pub index: usize,
    pub first_frame: usize,
    pub frame_count: usize,
    pub node_count: usize,
    pub affine_nodes: usize,
    /// Mask of the first P-frame.
    pub mask: Option<CombinationMask>,
    pub iframe_bytes: usize,
    pub node_bytes: usize,
    pub pframes: Vec<PFrameReport>,
}

impl GofReport {
    pub fn motion_bytes(&self) -> usize {
        self.pframes.iter().map(|p| p.bytes).sum()
    }

    pub fn total_bytes(&self) -> usize {
        self.iframe_bytes + self.node_bytes + self.motion_bytes()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodeReport {
    pub header_bytes: usize,
    pub gofs: Vec<GofReport>,
}

impl EncodeReport {
    pub fn block_bytes(&self) -> usize {
        self.gofs.iter().map(GofReport::total_bytes).sum()
    }

    pub fn pframes(&self) -> impl Iterator<Item = &PFrameReport> {
        self.gofs.iter().flat_map(|g| g.pframes.iter())
    }

    /// Node blocks plus P-frame blocks.
    pub fn motion_bytes(&self) -> usize {
        self.gofs.iter().map(|g| g.node_bytes + g.motion_bytes()).sum()
    }

    pub fn translation_bytes(&self) -> usize {
        self.pframes().map(|p| p.t_bytes).sum()
    }

    /// Mean prediction distortion over P-frames (0 without P-frames).
    pub fn mean_distortion(&self) -> f64 {
        let d: Vec<f64> = self.pframes().map(|p| p.distortion).collect();
        if d.is_empty() {
            0.0
        } else {
            d.iter().sum::<f64>() / d.len() as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Encoded {
    pub bytes: Vec<u8>,
    pub report: EncodeReport,
    /// The encoder's copy of every decoded frame.
    pub reconstruction: Vec<Mesh>,
}

fn write_iframe(mesh: &Mesh) -> Result<Vec<u8>> {
    let mut w = ByteWriter::new();
    w.u8(0);
    let vc = u32::try_from(mesh.vertex_count()).map_err(|_| Error::InvalidMesh("too many vertices".into()))?;
    let fc = u32::try_from(mesh.faces.len()).map_err(|_| Error::InvalidMesh("too many faces".into()))?;
    w.u32(vc);
    w.u32(fc);
    for v in &mesh.vertices {
        for c in v.iter() {
            w.f32(*c as f32);
        }
    }
    for f in &mesh.faces {
        for &i in f {
            w.u32(i);
        }
    }
    match &mesh.labels {
        Some(labels) => {
            w.u8(1);
            for l in labels {
                w.u8(l.ordinal());
            }
        }
        None => w.u8(0),
    }
    Ok(w.buf)
}

fn read_iframe(payload: &[u8]) -> Result<Mesh> {
    let mut r = ByteReader::new(payload);
    let codec = r.u8()?;
    if codec != 0 {
        return Err(Error::CorruptBlock(format!("unknown I-frame codec {codec}")));
    }
    let vc = r.u32()? as usize;
    let fc = r.u32()? as usize;
    if r.remaining() < vc.saturating_mul(12).saturating_add(fc.saturating_mul(12)) {
        return Err(Error::TruncatedStream("I-frame geometry".into()));
    }
    let mut vertices = Vec::with_capacity(vc);
    for _ in 0..vc {
        vertices.push(Vec3::new(r.f32()? as f64, r.f32()? as f64, r.f32()? as f64));
    }
    let mut faces = Vec::with_capacity(fc);
    for _ in 0..fc {
        faces.push([r.u32()?, r.u32()?, r.u32()?]);
    }
    let labels = match r.u8()? {
        0 => None,
        1 => Some(
            (0..vc)
                .map(|_| {
                    let b = r.u8()?;
                    BodyPart::from_ordinal(b).ok_or_else(|| Error::CorruptBlock(format!("vertex label {b}")))
                })
                .collect::<Result<Vec<_>>>()?,
        ),
        b => return Err(Error::CorruptBlock(format!("label flag {b}"))),
    };
    Mesh::new(vertices, faces, labels).map_err(|e| Error::CorruptBlock(format!("I-frame: {e}")))
}

struct GofOutput {
    bytes: Vec<u8>,
    report: GofReport,
    recon: Vec<Mesh>,
}

fn encode_gof(frames: &[Mesh], index: usize, first_frame: usize, cfg: &GofConfig) -> Result<GofOutput> {
    let mut bytes = Vec::new();
    let iframe = frames[0].to_f32_precision();
    let iframe_bytes = write_block(&mut bytes, TAG_IFRAME, &write_iframe(&frames[0])?);
    let mut recon = vec![iframe.clone()];
    let mut report = GofReport {
        index,
        first_frame,
        frame_count: frames.len(),
        node_count: 0,
        affine_nodes: 0,
        mask: None,
        iframe_bytes,
        node_bytes: 0,
        pframes: Vec::new(),
    };
    if frames.len() == 1 {
        return Ok(GofOutput { bytes, report, recon });
    }

    let key = cfg.key_pframe_index.min(frames.len() - 1);
    let gen_cfg = GeneratorConfig {
        mask: cfg.force_mask.unwrap_or(CombinationMask::RTSH),
        max_rounds: cfg.node_rounds.max(1),
        q: cfg.q,
        seg: cfg.seg.clone(),
        solver: cfg.solver.clone(),
        seed: cfg.seed,
        ..GeneratorConfig::new(cfg.node_count)
    };
    let generated = generate(&iframe, &frames[key], &gen_cfg)?;
    let (mut node_payload, block) = encode_nodes(&generated.nodes, cfg.qstep_t, None, &cfg.seg)?;
    report.node_count = block.nodes.len();
    report.affine_nodes = block.nodes.count_affine();

    let motion = cfg.motion();
    let mut state = MotionState::new(iframe, block.nodes);
    let mut gof_mask = cfg.force_mask;
    let mut pblocks = Vec::new();
    for (k, target) in frames.iter().enumerate().skip(1) {
        let (frame, rd) = match gof_mask {
            Some(m) if cfg.force_mask.is_some() || cfg.rd.strategy == Strategy::FirstP => {
                (encode_pframe(&state, target, m, &motion)?, Vec::new())
            }
            _ => {
                let (best, points, mut coded) = select_in_state(&state, target, &motion, cfg.rd.lambda)?;
                (coded.swap_remove(best), points)
            }
        };
        if k == 1 {
            gof_mask = Some(frame.mask);
            report.mask = Some(frame.mask);
        }
        let written = write_block(&mut pblocks, TAG_PFRAME, &frame.payload);
        report.pframes.push(PFrameReport {
            frame: first_frame + k,
            mask: frame.mask,
            mode: frame.mode,
            bytes: written,
            p_bytes: frame.p_bytes,
            t_bytes: frame.t_bytes,
            distortion: prediction_distortion(&frame.decoded, target),
            rd,
        });
        recon.push(frame.decoded);
        state = frame.next;
    }
    node_payload[2] = report.mask.map_or(u8::MAX, |m| m.bits());
    report.node_bytes = write_block(&mut bytes, TAG_NODES, &node_payload);
    bytes.extend_from_slice(&pblocks);
    Ok(GofOutput { bytes, report, recon })
}

/// Encodes a sequence. GoFs are coded concurrently; the output is
/// deterministic for equal inputs and configuration.
pub fn encode_sequence(seq: &Sequence, cfg: &GofConfig) -> Result<Encoded> {
    cfg.validate()?;
    if seq.frames.is_empty() {
        return Err(Error::Config("empty sequence".into()));
    }
    for f in &seq.frames {
        f.validate()?;
    }
    if seq.frames.len() > u32::MAX as usize {
        return Err(Error::Config("too many frames".into()));
    }
    let frames: Vec<Mesh> = seq
        .frames
        .iter()
        .map(|m| cfg.up_axis.map_mesh(m, UpAxis::to_internal))
        .collect();
    let starts: Vec<usize> = (0..frames.len()).step_by(cfg.gof_size).collect();
    let outputs: Vec<Result<GofOutput>> = starts
        .par_iter()
        .enumerate()
        .map(|(g, &s)| {
            let end = (s + cfg.gof_size).min(frames.len());
            encode_gof(&frames[s..end], g, s, cfg).map_err(|e| e.in_gof(g))
        })
        .collect();

    let mut bytes = Vec::new();
    Header {
        version: VERSION,
        frame_count: frames.len() as u32,
        gof_size: cfg.gof_size as u32,
        flags: cfg.flags(),
    }
    .write(&mut bytes);
    let mut gofs = Vec::with_capacity(outputs.len());
    let mut reconstruction = Vec::with_capacity(frames.len());
    for out in outputs {
        let out = out?;
        bytes.extend_from_slice(&out.bytes);
        gofs.push(out.report);
        reconstruction.extend(out.recon.iter().map(|m| cfg.up_axis.map_mesh(m, UpAxis::to_external)));
    }
    Ok(Encoded {
        bytes,
        report: EncodeReport {
            header_bytes: HEADER_LEN,
            gofs,
        },
        reconstruction,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameKind {
    Intra,
    Predicted {
        mask: CombinationMask,
        mode: TranslationMode,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub header: Header,
    pub flags: StreamFlags,
    pub sequence: Sequence,
    /// `(GoF index, kind)` per frame.
    pub frames: Vec<(usize, FrameKind)>,
}

impl fmt::Display for FrameKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FrameKind::Intra => f.write_str("I"),
            FrameKind::Predicted { mask, mode } => write!(f, "P {} {}", mask.name(), mode.name()),
        }
    }
}

pub fn decode_sequence(bytes: &[u8]) -> Result<Sequence> {
    Ok(decode_detailed(bytes)?.sequence)
}

/// Decodes a stream and reports the kind of every frame.
pub fn decode_detailed(bytes: &[u8]) -> Result<Decoded> {
    let header = Header::read(bytes)?;
    let flags = StreamFlags::parse(header.flags)?;
    let mut r = ByteReader::new(&bytes[HEADER_LEN..]);
    let mut frames: Vec<Mesh> = Vec::new();
    let mut kinds = Vec::new();
    let mut gof: Option<usize> = None;
    let mut iframe: Option<Mesh> = None;
    let mut state: Option<MotionState> = None;
    let motion = MotionConfig {
        seg: SegmentationConfig {
            mode: flags.seg_mode,
            ..SegmentationConfig::default()
        },
        q: flags.q,
        qstep_t: 1e-3,
        qstep_p: 1e-3,
        predcode: flags.predcode,
        solver: SolverConfig::default(),
    };
    let wrap = |e: Error, gof: Option<usize>| e.in_gof(gof.unwrap_or(0));
    loop {
        let Some((tag, payload)) = read_block(&mut r).map_err(|e| wrap(e, gof))? else {
            break;
        };
        match tag {
            TAG_IFRAME => {
                let g = gof.map_or(0, |g| g + 1);
                gof = Some(g);
                let mesh = read_iframe(payload).map_err(|e| wrap(e, gof))?;
                frames.push(mesh.clone());
                kinds.push((g, FrameKind::Intra));
                iframe = Some(mesh);
                state = None;
            }
            TAG_NODES => {
                let base = iframe
                    .clone()
                    .ok_or_else(|| wrap(Error::CorruptBlock("node block before an I-frame".into()), gof))?;
                let block = decode_nodes(payload).map_err(|e| wrap(e, gof))?;
                state = Some(MotionState::new(base, block.nodes));
            }
            TAG_PFRAME => {
                let st = state
                    .as_ref()
                    .ok_or_else(|| wrap(Error::CorruptBlock("P-frame before key nodes".into()), gof))?;
                let (mesh, next, mask, mode) = decode_pframe(st, payload, &motion).map_err(|e| wrap(e, gof))?;
                frames.push(mesh);
                kinds.push((gof.unwrap_or(0), FrameKind::Predicted { mask, mode }));
                state = Some(next);
            }
            _ => {}
        }
    }
    if frames.len() != header.frame_count as usize {
        return Err(wrap(
            Error::TruncatedStream(format!("{} of {} frames present", frames.len(), header.frame_count)),
            gof,
        ));
    }
    let frames = frames
        .iter()
        .map(|m| flags.up_axis.map_mesh(m, UpAxis::to_external))
        .collect();
    Ok(Decoded {
        header,
        flags,
        sequence: Sequence::new(frames, 30.0).map_err(|_| Error::CorruptBlock("stream holds no frames".into()))?,
        frames: kinds,
    })
}

#[cfg(test)]
mod tests;
