//! P-frame motion payload: fitted node transforms split into the rotation /
//! scale / shear vector `P` and the translations `T`, each entropy coded,
//! with the decoder-visible state advanced in lockstep.

use crate::affine::{CombinationMask, TransformParams};
use crate::deform::{build_influence_map, deform_mesh, effective_mask, fit_transforms, NodeTransforms, SolverConfig};
use crate::entropy::{decode_symbols, encode_symbols, fit_model, BitBuf, CauchyModel};
use crate::keynodes::{build_influence_graph, KeyNodeSet};
use crate::mesh::{Mesh, SegmentationConfig};
use crate::predcode::{
    direct_decode, direct_encode, plan_traversal, spatial_decode, spatial_encode, spatiotemporal_decode,
    spatiotemporal_encode, CodedTranslations,
};
use crate::{Error, Result, Vec3};

use super::container::{ByteReader, ByteWriter};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TranslationMode {
    Spatial,
    SpatioTemporal,
    Direct,
}

impl TranslationMode {
    pub fn code(self) -> u8 {
        match self {
            TranslationMode::Spatial => 0,
            TranslationMode::SpatioTemporal => 1,
            TranslationMode::Direct => 2,
        }
    }

    pub fn from_code(c: u8) -> Option<TranslationMode> {
        match c {
            0 => Some(TranslationMode::Spatial),
            1 => Some(TranslationMode::SpatioTemporal),
            2 => Some(TranslationMode::Direct),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TranslationMode::Spatial => "spatial",
            TranslationMode::SpatioTemporal => "spatio-temporal",
            TranslationMode::Direct => "direct",
        }
    }
}

/// Settings shared by the P-frame encoder and decoder.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionConfig {
    pub seg: SegmentationConfig,
    pub q: usize,
    pub qstep_t: f64,
    pub qstep_p: f64,
    pub predcode: bool,
    pub solver: SolverConfig,
}

/// Everything the decoder knows between two P-frames of a GoF.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionState {
    /// Previously decoded frame.
    pub reference: Mesh,
    /// Node positions, advanced by the decoded translations each frame.
    pub nodes: KeyNodeSet,
    pub prev_translations: Option<Vec<Vec3>>,
    pub prev_model: Option<CauchyModel>,
}

impl MotionState {
    pub fn new(reference: Mesh, nodes: KeyNodeSet) -> MotionState {
        MotionState {
            reference,
            nodes,
            prev_translations: None,
            prev_model: None,
        }
    }

    fn advance(&self, decoded: Mesh, translations: Vec<Vec3>, model: CauchyModel) -> MotionState {
        let mut nodes = self.nodes.clone();
        for (p, t) in nodes.positions.iter_mut().zip(&translations) {
            *p += t;
        }
        MotionState {
            reference: decoded,
            nodes,
            prev_translations: Some(translations),
            prev_model: Some(model),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodedPFrame {
    pub mask: CombinationMask,
    pub mode: TranslationMode,
    /// Block payload (without tag and length).
    pub payload: Vec<u8>,
    /// Bytes of the P section (model, length, bits).
    pub p_bytes: usize,
    /// Bytes of the T section (model, length, bits).
    pub t_bytes: usize,
    pub t_symbols: Vec<i64>,
    pub decoded: Mesh,
    pub next: MotionState,
}

/// Which node/component slots form `P`: rotations of every node with R
/// enabled, then scales, then shears of nodes with those enabled.
fn p_layout(nodes: &KeyNodeSet, mask: CombinationMask) -> [Vec<usize>; 3] {
    let masks: Vec<CombinationMask> = nodes.types.iter().map(|&t| effective_mask(t, mask)).collect();
    let pick = |f: fn(&CombinationMask) -> bool| (0..masks.len()).filter(|&j| f(&masks[j])).collect();
    [pick(|m| m.r_on), pick(|m| m.s_on), pick(|m| m.h_on)]
}

fn gather_p(params: &[TransformParams], layout: &[Vec<usize>; 3]) -> Vec<f64> {
    let mut out = Vec::new();
    for (slot, nodes) in layout.iter().enumerate() {
        for &j in nodes {
            let v = match slot {
                0 => params[j].euler,
                1 => params[j].scale_resid,
                _ => params[j].shear,
            };
            out.extend(v.iter());
        }
    }
    out
}

fn scatter_p(values: &[f64], layout: &[Vec<usize>; 3], params: &mut [TransformParams]) {
    let mut k = 0;
    for (slot, nodes) in layout.iter().enumerate() {
        for &j in nodes {
            let v = Vec3::new(values[k], values[k + 1], values[k + 2]);
            k += 3;
            match slot {
                0 => params[j].euler = v,
                1 => params[j].scale_resid = v,
                _ => params[j].shear = v,
            }
        }
    }
}

fn write_section(w: &mut ByteWriter, model: &CauchyModel, bits: &BitBuf) -> usize {
    let start = w.len();
    w.bytes(&model.to_bytes());
    w.u32(bits.bit_len as u32);
    w.bytes(&bits.bytes);
    w.len() - start
}

fn read_section(r: &mut ByteReader<'_>) -> Result<(CauchyModel, BitBuf)> {
    let model = CauchyModel::from_bytes(r.take(16)?)?;
    let bit_len = r.u32()? as u64;
    let bytes = r.take(bit_len.div_ceil(8) as usize)?.to_vec();
    Ok((model, BitBuf { bytes, bit_len }))
}

/// Fits `state.reference → target` under `mask`, codes the transforms and
/// returns the payload together with the decoder's reconstruction.
pub fn encode_pframe(state: &MotionState, target: &Mesh, mask: CombinationMask, cfg: &MotionConfig) -> Result<EncodedPFrame> {
    let nodes = &state.nodes;
    let infl = build_influence_map(&state.reference, nodes, &cfg.seg, cfg.q)?;
    let fit = fit_transforms(&state.reference, target, nodes, &infl, mask, &cfg.solver)?;
    let params = fit.transforms.masked(nodes);

    let layout = p_layout(nodes, mask);
    let p_values = gather_p(&params, &layout);
    let p_model = if p_values.is_empty() {
        CauchyModel::new(0.0, cfg.qstep_p, cfg.qstep_p, 0, 0)?.canonical()
    } else {
        fit_model(&p_values, cfg.qstep_p)?.canonical()
    };
    let p_symbols: Vec<i64> = p_values.iter().map(|&v| p_model.quantize(v)).collect();
    let p_bits = encode_symbols(&p_symbols, &p_model);

    let t: Vec<Vec3> = params.iter().map(|p| p.translation).collect();
    let (mode, coded): (TranslationMode, CodedTranslations) = if !cfg.predcode {
        (TranslationMode::Direct, direct_encode(&t, cfg.qstep_t)?)
    } else if let (Some(prev_t), Some(prev_m)) = (&state.prev_translations, &state.prev_model) {
        let (c, _) = spatiotemporal_encode(&t, prev_t, &nodes.labels, Some(prev_m), cfg.qstep_t)?;
        (TranslationMode::SpatioTemporal, c)
    } else {
        let graph = build_influence_graph(&infl, nodes.len());
        let plan = plan_traversal(nodes, &graph)?;
        (TranslationMode::Spatial, spatial_encode(&t, &plan, cfg.qstep_t)?)
    };

    let mut w = ByteWriter::new();
    w.u8(mode.code());
    w.u8(mask.bits());
    let p_bytes = write_section(&mut w, &p_model, &p_bits);
    let t_bytes = write_section(&mut w, &coded.model, &coded.bits);

    let mut decoded_params = vec![TransformParams::identity(); nodes.len()];
    let p_decoded: Vec<f64> = p_symbols.iter().map(|&s| p_model.dequantize(s)).collect();
    scatter_p(&p_decoded, &layout, &mut decoded_params);
    for (p, t) in decoded_params.iter_mut().zip(&coded.recon) {
        p.translation = *t;
    }
    let transforms = NodeTransforms {
        params: decoded_params,
        mask,
    };
    let decoded = deform_mesh(&state.reference, nodes, &transforms, &infl)?;
    let next = state.advance(decoded.clone(), coded.recon, coded.model);
    Ok(EncodedPFrame {
        mask,
        mode,
        payload: w.buf,
        p_bytes,
        t_bytes,
        t_symbols: coded.symbols,
        decoded,
        next,
    })
}

/// Mirror of [`encode_pframe`]: returns the decoded frame and next state.
pub fn decode_pframe(state: &MotionState, payload: &[u8], cfg: &MotionConfig) -> Result<(Mesh, MotionState, CombinationMask, TranslationMode)> {
    let mut r = ByteReader::new(payload);
    let mode_byte = r.u8()?;
    let mode = TranslationMode::from_code(mode_byte)
        .ok_or_else(|| Error::CorruptBlock(format!("translation mode {mode_byte}")))?;
    let mask_byte = r.u8()?;
    let mask = CombinationMask::from_bits(mask_byte)
        .filter(|m| m.is_legal())
        .ok_or_else(|| Error::CorruptBlock(format!("mask {mask_byte}")))?;
    let (p_model, p_bits) = read_section(&mut r)?;
    let (t_model, t_bits) = read_section(&mut r)?;

    let nodes = &state.nodes;
    let infl = build_influence_map(&state.reference, nodes, &cfg.seg, cfg.q)?;
    let layout = p_layout(nodes, mask);
    let count: usize = layout.iter().map(|l| 3 * l.len()).sum();
    let p_decoded: Vec<f64> = decode_symbols(&p_bits, &p_model, count)?
        .into_iter()
        .map(|s| p_model.dequantize(s))
        .collect();
    let t = match mode {
        TranslationMode::Direct => direct_decode(&t_bits, &t_model, nodes.len())?,
        TranslationMode::Spatial => {
            let graph = build_influence_graph(&infl, nodes.len());
            let plan = plan_traversal(nodes, &graph)?;
            spatial_decode(&t_bits, &t_model, &plan)?
        }
        TranslationMode::SpatioTemporal => {
            let prev = state
                .prev_translations
                .as_ref()
                .ok_or(Error::MissingPreviousModel)?;
            spatiotemporal_decode(&t_bits, state.prev_model.as_ref(), &t_model, prev, &nodes.labels)?.0
        }
    };
    let mut params = vec![TransformParams::identity(); nodes.len()];
    scatter_p(&p_decoded, &layout, &mut params);
    for (p, t) in params.iter_mut().zip(&t) {
        p.translation = *t;
    }
    let decoded = deform_mesh(&state.reference, nodes, &NodeTransforms { params, mask }, &infl)?;
    let next = state.advance(decoded.clone(), t, t_model);
    Ok((decoded, next, mask, mode))
}
