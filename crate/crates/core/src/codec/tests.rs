use super::*;
use crate::mesh::rmse_distortion;
use crate::synth::{rest_pose, synthesize, Scenario, SynthConfig};

fn small_cfg() -> GofConfig {
    GofConfig {
        gof_size: 4,
        node_count: 16,
        node_rounds: 4,
        ..GofConfig::default()
    }
}

fn walker(frames: usize) -> Sequence {
    synthesize(&SynthConfig {
        frames,
        vertices: 500,
        ..SynthConfig::new(Scenario::Walker)
    })
    .unwrap()
}

fn static_seq(frames: usize) -> Sequence {
    let m = rest_pose(500);
    Sequence::new(vec![m; frames], 30.0).unwrap()
}

#[test]
fn static_sequence_motion_is_tiny() {
    let enc = encode_sequence(&static_seq(2), &small_cfg()).unwrap();
    let p = &enc.report.gofs[0].pframes[0];
    assert!(p.bytes < 200, "P-frame block {} bytes", p.bytes);
    let dec = decode_sequence(&enc.bytes).unwrap();
    assert_eq!(dec.len(), 2);
    assert!(rmse_distortion(&dec.frames[1], &dec.frames[0]).unwrap() < 1e-6);
}

#[test]
fn decoder_matches_encoder_reconstruction() {
    let seq = walker(7);
    let enc = encode_sequence(&seq, &small_cfg()).unwrap();
    let dec = decode_detailed(&enc.bytes).unwrap();
    assert_eq!(dec.sequence.len(), 7);
    assert_eq!(dec.sequence.frames, enc.reconstruction);
    let gofs: Vec<usize> = dec.frames.iter().map(|f| f.0).collect();
    assert_eq!(gofs, [0, 0, 0, 0, 1, 1, 1]);
    assert_eq!(dec.frames[0].1, FrameKind::Intra);
    assert_eq!(dec.frames[4].1, FrameKind::Intra);
    for (k, (_, kind)) in dec.frames.iter().enumerate() {
        if let FrameKind::Predicted { mode, .. } = kind {
            let first = k % 4 == 1;
            assert_eq!(*mode == TranslationMode::Spatial, first, "frame {k}: {mode:?}");
        }
    }
}

#[test]
fn encoding_is_deterministic() {
    let seq = walker(5);
    let a = encode_sequence(&seq, &small_cfg()).unwrap();
    let b = encode_sequence(&seq, &small_cfg()).unwrap();
    assert_eq!(a.bytes, b.bytes);
}

#[test]
fn rate_accounting_adds_up() {
    let enc = encode_sequence(&walker(6), &small_cfg()).unwrap();
    let r = &enc.report;
    assert_eq!(r.header_bytes + r.block_bytes(), enc.bytes.len());
    for p in r.pframes() {
        // tag + length, mode, mask, then the two sections
        assert_eq!(p.bytes, BLOCK_OVERHEAD + 2 + p.p_bytes + p.t_bytes);
    }
}

#[test]
fn iframe_layout_is_raw_float() {
    let seq = static_seq(1);
    let enc = encode_sequence(&seq, &small_cfg()).unwrap();
    let m = &seq.frames[0];
    let expect = BLOCK_OVERHEAD + 1 + 8 + 12 * m.vertex_count() + 12 * m.faces.len() + 1 + m.vertex_count();
    assert_eq!(enc.report.gofs[0].iframe_bytes, expect);
    assert_eq!(enc.bytes.len(), HEADER_LEN + expect);
    assert_eq!(&enc.bytes[..4], b"BMKN");
    let dec = decode_sequence(&enc.bytes).unwrap();
    assert_eq!(dec.frames[0], m.to_f32_precision());
}

#[test]
fn steady_flow_prefers_temporal_prediction() {
    // Velocity varies across the body but not over time.
    let m = rest_pose(500);
    let vel = |v: &Vec3| 0.01 * Vec3::new((7.0 * v.y).sin(), (5.0 * v.x).cos(), (9.0 * v.y + v.z).sin());
    let frames: Vec<Mesh> = (0..4)
        .map(|k| Mesh {
            vertices: m.vertices.iter().map(|v| v + vel(v) * k as f64).collect(),
            ..m.clone()
        })
        .collect();
    let seq = Sequence::new(frames, 30.0).unwrap();
    let enc = encode_sequence(&seq, &small_cfg()).unwrap();
    let p = &enc.report.gofs[0].pframes;
    assert_eq!(p[0].mode, TranslationMode::Spatial);
    assert_eq!(p[1].mode, TranslationMode::SpatioTemporal);
    assert!(p[1].t_bytes < p[0].t_bytes, "{} vs {}", p[1].t_bytes, p[0].t_bytes);
}

#[test]
fn direct_mode_without_prediction() {
    let cfg = GofConfig {
        translation_predcode: false,
        ..small_cfg()
    };
    let enc = encode_sequence(&walker(3), &cfg).unwrap();
    assert!(enc.report.pframes().all(|p| p.mode == TranslationMode::Direct));
    let dec = decode_sequence(&enc.bytes).unwrap();
    assert_eq!(dec.frames, enc.reconstruction);
}

#[test]
fn forced_mask_and_per_frame_strategy() {
    let seq = walker(4);
    let forced = GofConfig {
        force_mask: Some(CombinationMask::RT),
        ..small_cfg()
    };
    let enc = encode_sequence(&seq, &forced).unwrap();
    assert!(enc.report.pframes().all(|p| p.mask == CombinationMask::RT && p.rd.is_empty()));

    let per_frame = GofConfig {
        rd: RdConfig {
            strategy: Strategy::PerFrame,
            ..RdConfig::default()
        },
        ..small_cfg()
    };
    let enc = encode_sequence(&seq, &per_frame).unwrap();
    assert!(enc.report.pframes().all(|p| p.rd.len() == 8));
    assert_eq!(decode_sequence(&enc.bytes).unwrap().frames, enc.reconstruction);

    let first_p = encode_sequence(&seq, &small_cfg()).unwrap();
    let rd_counts: Vec<usize> = first_p.report.pframes().map(|p| p.rd.len()).collect();
    assert_eq!(rd_counts, [8, 0, 0]);
}

#[test]
fn node_block_carries_selected_mask() {
    let enc = encode_sequence(&walker(3), &small_cfg()).unwrap();
    let mut r = ByteReader::new(&enc.bytes[HEADER_LEN..]);
    read_block(&mut r).unwrap().unwrap();
    let (tag, payload) = read_block(&mut r).unwrap().unwrap();
    assert_eq!(tag, TAG_NODES);
    let block = decode_nodes(payload).unwrap();
    assert_eq!(block.mask, enc.report.gofs[0].mask);
}

#[test]
fn up_axis_remap_round_trips() {
    let v = Vec3::new(1.0, 2.0, 3.0);
    for a in [UpAxis::X, UpAxis::Y, UpAxis::Z] {
        assert_eq!(a.to_external(&a.to_internal(&v)), v);
        assert_eq!(UpAxis::from_code(a.code()), Some(a));
    }
    // z-up: the external z component becomes internal height
    assert_eq!(UpAxis::Z.to_internal(&v).y, 3.0);
    assert_eq!(UpAxis::X.to_internal(&v).y, 1.0);
    assert!("w".parse::<UpAxis>().is_err());
}

#[test]
fn z_up_input_codes_like_y_up() {
    let seq = walker(3);
    let rotated = Sequence::new(
        seq.frames
            .iter()
            .map(|m| Mesh {
                vertices: m.vertices.iter().map(|v| UpAxis::Z.to_external(v)).collect(),
                ..m.clone()
            })
            .collect(),
        30.0,
    )
    .unwrap();
    let cfg = GofConfig {
        up_axis: UpAxis::Z,
        ..small_cfg()
    };
    let a = encode_sequence(&seq, &small_cfg()).unwrap();
    let b = encode_sequence(&rotated, &cfg).unwrap();
    assert_eq!(a.bytes.len(), b.bytes.len());
    let dec = decode_detailed(&b.bytes).unwrap();
    assert_eq!(dec.flags.up_axis, UpAxis::Z);
    assert_eq!(dec.sequence.frames, b.reconstruction);
}

#[test]
fn flags_round_trip() {
    let cfg = GofConfig {
        q: 7,
        up_axis: UpAxis::X,
        translation_predcode: false,
        ..small_cfg()
    };
    let f = StreamFlags::parse(cfg.flags()).unwrap();
    assert_eq!(f.q, 7);
    assert_eq!(f.up_axis, UpAxis::X);
    assert!(!f.predcode);
    assert!(f.seg_corr);
    assert!(!f.per_frame);
    assert_eq!(f.seg_mode, SegMode::Auto);
    assert!(StreamFlags::parse(0x0103).is_err());
}

#[test]
fn truncation_reports_gof() {
    let enc = encode_sequence(&walker(6), &small_cfg()).unwrap();
    let cut = &enc.bytes[..enc.bytes.len() - 3];
    match decode_sequence(cut).unwrap_err() {
        Error::InGof { gof, source } => {
            assert_eq!(gof, 1);
            assert!(matches!(*source, Error::TruncatedStream(_)), "{source}");
        }
        e => panic!("unexpected {e}"),
    }
    // dropping whole trailing blocks leaves a short frame count
    let first_gof = HEADER_LEN + enc.report.gofs[0].total_bytes();
    match decode_sequence(&enc.bytes[..first_gof]).unwrap_err() {
        Error::InGof { source, .. } => assert!(matches!(*source, Error::TruncatedStream(_))),
        e => panic!("unexpected {e}"),
    }
}

#[test]
fn header_errors() {
    let enc = encode_sequence(&static_seq(2), &small_cfg()).unwrap();
    let mut bad = enc.bytes.clone();
    bad[0] = b'X';
    assert!(matches!(decode_sequence(&bad), Err(Error::BadMagic)));
    let mut bad = enc.bytes.clone();
    bad[4] = 9;
    assert!(matches!(decode_sequence(&bad), Err(Error::VersionUnsupported(9))));
    assert!(matches!(decode_sequence(&enc.bytes[..10]), Err(Error::TruncatedStream(_))));
}

#[test]
fn unknown_blocks_are_skipped() {
    let enc = encode_sequence(&static_seq(2), &small_cfg()).unwrap();
    let mut bytes = enc.bytes[..HEADER_LEN].to_vec();
    write_block(&mut bytes, 200, b"future extension");
    bytes.extend_from_slice(&enc.bytes[HEADER_LEN..]);
    assert_eq!(decode_sequence(&bytes).unwrap().frames, enc.reconstruction);
}

#[test]
fn pframe_without_nodes_is_corrupt() {
    let enc = encode_sequence(&static_seq(2), &small_cfg()).unwrap();
    let mut r = ByteReader::new(&enc.bytes[HEADER_LEN..]);
    let (_, iframe) = read_block(&mut r).unwrap().unwrap();
    let _nodes = read_block(&mut r).unwrap().unwrap();
    let (_, pframe) = read_block(&mut r).unwrap().unwrap();
    let mut bytes = enc.bytes[..HEADER_LEN].to_vec();
    write_block(&mut bytes, TAG_IFRAME, iframe);
    write_block(&mut bytes, TAG_PFRAME, pframe);
    match decode_sequence(&bytes).unwrap_err() {
        Error::InGof { gof: 0, source } => assert!(matches!(*source, Error::CorruptBlock(_))),
        e => panic!("unexpected {e}"),
    }
}

#[test]
fn config_validation() {
    let bad = [
        GofConfig { gof_size: 1, ..GofConfig::default() },
        GofConfig { key_pframe_index: 0, ..GofConfig::default() },
        GofConfig { key_pframe_index: 8, ..GofConfig::default() },
        GofConfig { node_count: 0, ..GofConfig::default() },
        GofConfig { q: 0, ..GofConfig::default() },
        GofConfig { qstep_t: 0.0, ..GofConfig::default() },
        GofConfig { qstep_p: f64::NAN, ..GofConfig::default() },
        GofConfig { force_mask: Some(CombinationMask::new(true, false, false, false)), ..GofConfig::default() },
    ];
    for cfg in bad {
        assert!(matches!(cfg.validate(), Err(Error::Config(_))), "{cfg:?}");
    }
    assert!(GofConfig::default().validate().is_ok());
}

#[test]
fn single_frame_gof_tail() {
    let enc = encode_sequence(&walker(5), &small_cfg()).unwrap();
    assert_eq!(enc.report.gofs.len(), 2);
    assert_eq!(enc.report.gofs[1].frame_count, 1);
    assert_eq!(enc.report.gofs[1].node_bytes, 0);
    assert_eq!(decode_sequence(&enc.bytes).unwrap().frames, enc.reconstruction);
}
