//! Key-node block: canonical ordering, absolute first node, entropy-coded
//! position deltas, per-node labels.

use crate::affine::CombinationMask;
use crate::entropy::{decode_symbols, encode_symbols, fit_model, BitBuf, CauchyModel};
use crate::keynodes::{node_type, KeyNodeSet};
use crate::mesh::{BodyPart, SegmentationConfig};
use crate::{Error, Result, Vec3};

use super::container::{ByteReader, ByteWriter};

const NO_LABEL: u8 = 255;
const NO_MASK: u8 = 255;

/// Label ordinal (unlabeled last), then height descending, then index.
pub fn canonical_order(nodes: &KeyNodeSet) -> Vec<usize> {
    let mut order: Vec<usize> = (0..nodes.len()).collect();
    order.sort_by(|&a, &b| {
        let la = nodes.labels[a].map_or(u8::MAX, BodyPart::ordinal);
        let lb = nodes.labels[b].map_or(u8::MAX, BodyPart::ordinal);
        la.cmp(&lb)
            .then(nodes.positions[b].y.total_cmp(&nodes.positions[a].y))
            .then(a.cmp(&b))
    });
    order
}

/// Step actually used for node positions: `qstep` on the fixed-point grid.
pub fn node_step(qstep: f64) -> Result<f64> {
    Ok(CauchyModel::new(0.0, qstep, qstep, 0, 0)?.canonical().qstep)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeBlock {
    /// Nodes in canonical order with quantized positions and derived types.
    pub nodes: KeyNodeSet,
    pub mask: Option<CombinationMask>,
    pub affine_bits: u16,
}

/// Serializes nodes (re-sorted canonically) and returns the payload with the
/// node set exactly as the decoder will rebuild it.
pub fn encode_nodes(
    nodes: &KeyNodeSet,
    qstep: f64,
    mask: Option<CombinationMask>,
    seg: &SegmentationConfig,
) -> Result<(Vec<u8>, NodeBlock)> {
    if nodes.len() > u16::MAX as usize {
        return Err(Error::Config(format!("{} nodes exceed the block limit", nodes.len())));
    }
    let sorted = nodes.permuted(&canonical_order(nodes));
    let q = node_step(qstep)?;
    let mut w = ByteWriter::new();
    w.u16(sorted.len() as u16);
    w.u8(mask.map_or(NO_MASK, |m| m.bits()));
    let affine_bits = seg.affine_bits();
    w.u16(affine_bits);
    for l in &sorted.labels {
        w.u8(l.map_or(NO_LABEL, BodyPart::ordinal));
    }
    let symbols: Vec<[i64; 3]> = sorted
        .positions
        .iter()
        .map(|p| {
            [p.x, p.y, p.z].map(|c| crate::entropy::quantize(c, q).clamp(i32::MIN as i64, i32::MAX as i64))
        })
        .collect();
    if let Some(first) = symbols.first() {
        for &c in first {
            w.i32(c as i32);
        }
        let deltas: Vec<i64> = symbols
            .windows(2)
            .flat_map(|p| [p[1][0] - p[0][0], p[1][1] - p[0][1], p[1][2] - p[0][2]])
            .collect();
        let values: Vec<f64> = deltas.iter().map(|&d| d as f64 * q).collect();
        let model = if values.is_empty() {
            CauchyModel::new(0.0, q, q, 0, 0)?.canonical()
        } else {
            fit_model(&values, q)?.canonical()
        };
        let bits = encode_symbols(&deltas, &model);
        w.bytes(&model.to_bytes());
        w.u32(bits.bit_len as u32);
        w.bytes(&bits.bytes);
    }
    let decoded = decode_nodes(&w.buf)?;
    Ok((w.buf, decoded))
}

pub fn decode_nodes(payload: &[u8]) -> Result<NodeBlock> {
    let mut r = ByteReader::new(payload);
    let count = r.u16()? as usize;
    let mask_byte = r.u8()?;
    let mask = match mask_byte {
        NO_MASK => None,
        b => Some(
            CombinationMask::from_bits(b)
                .filter(|m| m.is_legal())
                .ok_or_else(|| Error::CorruptBlock(format!("node block mask {b}")))?,
        ),
    };
    let affine_bits = r.u16()?;
    let seg = SegmentationConfig {
        affine_parts: SegmentationConfig::affine_parts_from_bits(affine_bits),
        ..SegmentationConfig::default()
    };
    let mut labels = Vec::with_capacity(count);
    for _ in 0..count {
        labels.push(match r.u8()? {
            NO_LABEL => None,
            b => Some(BodyPart::from_ordinal(b).ok_or_else(|| Error::CorruptBlock(format!("node label {b}")))?),
        });
    }
    let mut positions = Vec::with_capacity(count);
    if count > 0 {
        let first = [r.i32()? as i64, r.i32()? as i64, r.i32()? as i64];
        let model = CauchyModel::from_bytes(r.take(16)?)?;
        let bit_len = r.u32()? as u64;
        let bytes = r.take(bit_len.div_ceil(8) as usize)?;
        let bits = BitBuf {
            bytes: bytes.to_vec(),
            bit_len,
        };
        let deltas = decode_symbols(&bits, &model, 3 * (count - 1))?;
        let q = model.qstep;
        let mut cur = first;
        positions.push(Vec3::new(cur[0] as f64 * q, cur[1] as f64 * q, cur[2] as f64 * q));
        for d in deltas.chunks_exact(3) {
            for k in 0..3 {
                cur[k] += d[k];
            }
            positions.push(Vec3::new(cur[0] as f64 * q, cur[1] as f64 * q, cur[2] as f64 * q));
        }
    }
    let types = labels.iter().map(|&l| node_type(l, &seg)).collect();
    Ok(NodeBlock {
        nodes: KeyNodeSet::new(positions, labels, types)?,
        mask,
        affine_bits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::keynodes::NodeType;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const Q: f64 = 1.0 / 1024.0;

    fn set(positions: Vec<Vec3>, labels: Vec<Option<BodyPart>>) -> KeyNodeSet {
        let n = positions.len();
        KeyNodeSet::new(positions, labels, vec![NodeType::Rigid; n]).unwrap()
    }

    #[test]
    fn single_node_at_origin() {
        let (bytes, block) = encode_nodes(&set(vec![Vec3::zeros()], vec![None]), Q, None, &SegmentationConfig::default()).unwrap();
        // count, mask, affine bits, label, three zero words
        assert_eq!(&bytes[..6], &[1, 0, 255, 0x80, 0, 255]);
        assert_eq!(&bytes[6..18], &[0u8; 12]);
        assert_eq!(block.nodes.positions, vec![Vec3::zeros()]);
        assert_eq!(block.mask, None);
    }

    #[test]
    fn unit_step_delta() {
        let nodes = set(vec![Vec3::zeros(), Vec3::new(Q, 0.0, 0.0)], vec![None, None]);
        let (bytes, block) = encode_nodes(&nodes, Q, Some(CombinationMask::RTS), &SegmentationConfig::default()).unwrap();
        assert_eq!(block.nodes.positions, nodes.positions);
        assert_eq!(block.mask, Some(CombinationMask::RTS));
        let model = CauchyModel::from_bytes(&bytes[19..35]).unwrap();
        let bit_len = u32::from_le_bytes(bytes[35..39].try_into().unwrap()) as u64;
        let bits = BitBuf {
            bytes: bytes[39..].to_vec(),
            bit_len,
        };
        assert_eq!(decode_symbols(&bits, &model, 3).unwrap(), vec![1, 0, 0]);
    }

    #[test]
    fn random_nodes_round_trip_to_quantized_positions() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let positions: Vec<Vec3> = (0..40)
            .map(|_| Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(0.0..2.0), rng.random_range(-0.5..0.5)))
            .collect();
        let labels: Vec<Option<BodyPart>> = (0..40).map(|k| Some(BodyPart::ALL[k % 14])).collect();
        let nodes = set(positions, labels);
        let seg = SegmentationConfig::default();
        let (bytes, block) = encode_nodes(&nodes, 1e-3, None, &seg).unwrap();
        let order = canonical_order(&nodes);
        let q = node_step(1e-3).unwrap();
        for (k, &j) in order.iter().enumerate() {
            let expect = nodes.positions[j].map(|c| (c / q).round() * q);
            assert_eq!(block.nodes.positions[k], expect);
            assert_eq!(block.nodes.labels[k], nodes.labels[j]);
            let affine = nodes.labels[j] == Some(BodyPart::Torso);
            assert_eq!(block.nodes.types[k] == NodeType::Affine, affine);
        }
        assert_eq!(decode_nodes(&bytes).unwrap(), block);
        for w in block.nodes.labels.windows(2) {
            assert!(w[0].unwrap() <= w[1].unwrap());
        }
    }

    #[test]
    fn corrupt_blocks() {
        let nodes = set(vec![Vec3::zeros(), Vec3::x()], vec![None, None]);
        let (bytes, _) = encode_nodes(&nodes, Q, None, &SegmentationConfig::default()).unwrap();
        assert!(matches!(decode_nodes(&bytes[..bytes.len() - 1]), Err(Error::TruncatedStream(_))));
        let mut bad = bytes.clone();
        bad[5] = 40;
        assert!(matches!(decode_nodes(&bad), Err(Error::CorruptBlock(_))));
    }
}
