use super::*;
use crate::keynodes::NodeType;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Power-of-two step, exactly representable on the fixed-point grid.
const Q: f64 = 1.0 / 1024.0;

fn node_set(positions: Vec<Vec3>, labels: Vec<Option<BodyPart>>) -> KeyNodeSet {
    let n = positions.len();
    KeyNodeSet::new(positions, labels, vec![NodeType::Rigid; n]).unwrap()
}

fn head(n: usize) -> Vec<Option<BodyPart>> {
    vec![Some(BodyPart::Head); n]
}

#[test]
fn single_node_plan() {
    let nodes = node_set(vec![Vec3::zeros()], head(1));
    let plan = plan_traversal(&nodes, &InfluenceGraph::from_edges(1, [])).unwrap();
    assert_eq!(plan.order, vec![0]);
    assert_eq!(plan.starts, vec![(0, None)]);
    assert_eq!(plan.predictors(), vec![None]);
}

#[test]
fn vertical_chain_goes_top_down() {
    let nodes = node_set((0..3).map(|i| Vec3::new(0.0, i as f64, 0.0)).collect(), head(3));
    let plan = plan_traversal(&nodes, &InfluenceGraph::from_edges(3, [(0, 1), (1, 2)])).unwrap();
    assert_eq!(plan.order, vec![2, 1, 0]);
    assert_eq!(plan.predictors(), vec![None, Some(2), Some(1)]);
}

fn ring_fixture() -> (KeyNodeSet, InfluenceGraph) {
    let positions = vec![
        Vec3::new(0.0, 1.0, 0.0),
        Vec3::new(0.0, 0.5, 1.0),
        Vec3::new(0.0, 0.5, -1.0),
        Vec3::new(1.0, 0.5, 0.0),
        Vec3::new(-1.0, 0.5, 0.0),
        Vec3::new(2.0, 0.0, 2.0),
        Vec3::new(-2.0, 0.0, -2.0),
        Vec3::new(2.0, 0.0, -2.0),
        Vec3::new(-2.0, 0.0, 2.0),
    ];
    let edges = [
        (0, 1),
        (0, 2),
        (0, 3),
        (0, 4),
        (3, 5),
        (3, 7),
        (1, 5),
        (1, 8),
        (4, 8),
        (4, 6),
        (2, 6),
        (2, 7),
    ];
    (node_set(positions, head(9)), InfluenceGraph::from_edges(9, edges))
}

#[test]
fn two_layer_ring_is_clockwise_per_layer() {
    let (nodes, graph) = ring_fixture();
    let plan = plan_traversal(&nodes, &graph).unwrap();
    // ring 1: −z, +x, +z, −x; ring 2: (−,−), (+,−), (+,+), (−,+)
    assert_eq!(plan.order, vec![0, 2, 3, 1, 4, 6, 7, 5, 8]);
}

#[test]
fn pseudo_angle_orders_like_atan2() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let pts: Vec<(f64, f64)> = (0..500).map(|_| (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
    for a in &pts {
        for b in &pts[..50] {
            let exact = a.1.atan2(a.0).partial_cmp(&b.1.atan2(b.0)).unwrap();
            let fast = pseudo_angle(a.0, a.1).partial_cmp(&pseudo_angle(b.0, b.1)).unwrap();
            assert_eq!(exact, fast);
        }
    }
}

#[test]
fn parts_follow_ordinal_order_with_anchored_starts() {
    // head above torso; left thigh below torso
    let positions = vec![
        Vec3::new(0.0, -1.0, 0.0),
        Vec3::new(0.0, 0.0, 0.0),
        Vec3::new(0.0, 1.0, 0.0),
        Vec3::new(0.0, 2.0, 0.0),
        Vec3::new(0.0, 0.6, 0.0),
    ];
    let labels = vec![
        Some(BodyPart::LeftThigh),
        Some(BodyPart::Torso),
        Some(BodyPart::Head),
        Some(BodyPart::Head),
        Some(BodyPart::Torso),
    ];
    let nodes = node_set(positions, labels);
    let graph = InfluenceGraph::from_edges(5, [(2, 3), (1, 4), (0, 1)]);
    let plan = plan_traversal(&nodes, &graph).unwrap();
    assert_eq!(plan.order, vec![3, 2, 4, 1, 0]);
    assert_eq!(plan.starts, vec![(3, None), (4, Some(2)), (0, Some(1))]);
    assert_eq!(plan.predictors(), vec![None, Some(3), Some(2), Some(4), Some(1)]);
}

#[test]
fn mixed_labels_are_rejected_unlabeled_sets_are_one_group() {
    let nodes = node_set(vec![Vec3::zeros(), Vec3::x()], vec![Some(BodyPart::Head), None]);
    assert!(matches!(
        plan_traversal(&nodes, &InfluenceGraph::from_edges(2, [])),
        Err(Error::UnlabeledNodes)
    ));
    let nodes = node_set(vec![Vec3::zeros(), Vec3::y(), Vec3::x()], vec![None; 3]);
    let plan = plan_traversal(&nodes, &InfluenceGraph::from_edges(3, [(0, 1)])).unwrap();
    assert_eq!(plan.order, vec![1, 0, 2]);
    assert_eq!(plan.starts, vec![(1, None), (2, Some(0))]);
}

fn random_nodes(rng: &mut ChaCha8Rng, n: usize, labeled: bool) -> (KeyNodeSet, InfluenceGraph) {
    let positions: Vec<Vec3> = (0..n)
        .map(|_| Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    let labels = (0..n)
        .map(|_| labeled.then(|| BodyPart::ALL[rng.random_range(0..14)]))
        .collect();
    let edges: Vec<(usize, usize)> = (0..2 * n).map(|_| (rng.random_range(0..n), rng.random_range(0..n))).collect();
    (node_set(positions, labels), InfluenceGraph::from_edges(n, edges))
}

proptest! {
    #[test]
    fn plans_are_permutations(seed in any::<u64>(), n in 1usize..40, labeled in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (nodes, graph) = random_nodes(&mut rng, n, labeled);
        let plan = plan_traversal(&nodes, &graph).unwrap();
        let mut sorted = plan.order.clone();
        sorted.sort_unstable();
        prop_assert_eq!(sorted, (0..n).collect::<Vec<_>>());
        prop_assert_eq!(plan_traversal(&nodes, &graph).unwrap(), plan.clone());
        // every predictor is visited earlier in the plan
        let preds = plan.predictors();
        for (k, p) in preds.iter().enumerate() {
            if let Some(p) = p {
                prop_assert!(plan.order[..k].contains(p));
            } else {
                prop_assert_eq!(k, 0);
            }
        }
    }
}

fn chain_plan(n: usize) -> TraversalPlan {
    TraversalPlan {
        order: (0..n).collect(),
        starts: vec![(0, None)],
    }
}

#[test]
fn constant_translation_leaves_only_the_first_residual() {
    let t = vec![Vec3::new(0.25, -0.5, 0.125); 6];
    let coded = spatial_encode(&t, &chain_plan(6), Q).unwrap();
    assert!(coded.symbols[3..].iter().all(|&s| s == 0));
    assert_eq!(&coded.symbols[..3], &[256, -512, 128]);
    assert_eq!(spatial_decode(&coded.bits, &coded.model, &chain_plan(6)).unwrap(), t);
}

#[test]
fn one_step_difference_codes_as_one() {
    let t = vec![Vec3::zeros(), Vec3::new(Q, 0.0, 0.0)];
    let coded = spatial_encode(&t, &chain_plan(2), Q).unwrap();
    assert_eq!(coded.symbols, vec![0, 0, 0, 1, 0, 0]);
    assert_eq!(spatial_decode(&coded.bits, &coded.model, &chain_plan(2)).unwrap(), t);
}

/// Independent closed-loop simulator of the spatial scheme.
fn spatial_oracle(t: &[Vec3], plan: &TraversalPlan, q: f64) -> Vec<Vec3> {
    let mut recon: Vec<Option<Vec3>> = vec![None; t.len()];
    let refs: std::collections::HashMap<usize, Option<usize>> = plan.starts.iter().copied().collect();
    for (k, &j) in plan.order.iter().enumerate() {
        let pred = match refs.get(&j) {
            Some(Some(r)) => recon[*r].unwrap(),
            _ if k == 0 => Vec3::zeros(),
            _ => recon[plan.order[k - 1]].unwrap(),
        };
        let r = t[j] - pred;
        let s = Vec3::new((r.x / q).round(), (r.y / q).round(), (r.z / q).round());
        recon[j] = Some(pred + s * q);
    }
    recon.into_iter().map(Option::unwrap).collect()
}

#[test]
fn spatial_lockstep_on_random_sets() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for n in [5, 20, 60] {
        let (nodes, graph) = random_nodes(&mut rng, n, true);
        let plan = plan_traversal(&nodes, &graph).unwrap();
        let t: Vec<Vec3> = (0..n).map(|_| Vec3::new(rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1), 0.02)).collect();
        let coded = spatial_encode(&t, &plan, 0.001).unwrap();
        let decoded = spatial_decode(&coded.bits, &coded.model, &plan).unwrap();
        assert_eq!(decoded, coded.recon);
        assert_eq!(decoded, spatial_oracle(&t, &plan, coded.model.qstep));
    }
}

#[test]
fn tiny_step_recovers_translations() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let t: Vec<Vec3> = (0..30).map(|_| Vec3::new(rng.random_range(-1.0..1.0), 0.0, rng.random_range(-1.0..1.0))).collect();
    let coded = spatial_encode(&t, &chain_plan(30), 1e-6).unwrap();
    for (a, b) in coded.recon.iter().zip(&t) {
        assert!((a - b).amax() <= 0.5 * coded.model.qstep + 1e-15);
    }
}

#[test]
fn empty_sets_code_to_nothing() {
    let coded = spatial_encode(&[], &TraversalPlan::default(), Q).unwrap();
    assert!(coded.bits.is_empty());
    assert!(spatial_decode(&coded.bits, &coded.model, &TraversalPlan::default()).unwrap().is_empty());
}

fn prev_model() -> CauchyModel {
    CauchyModel::new(0.0, 4.0 * Q, Q, -64, 64).unwrap()
}

#[test]
fn uniform_motion_has_zero_residuals() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let labels: Vec<Option<BodyPart>> = (0..20).map(|k| Some(BodyPart::ALL[k % 5])).collect();
    let prev: Vec<Vec3> = (0..20).map(|_| Vec3::new(rng.random_range(-0.1..0.1), 0.0, 0.0)).collect();
    let v = Vec3::new(0.0123, -0.004, 0.0301);
    let t: Vec<Vec3> = prev.iter().map(|p| p + v).collect();
    let (coded, delta) = spatiotemporal_encode(&t, &prev, &labels, Some(&prev_model()), Q).unwrap();
    assert!(coded.symbols.iter().all(|&s| s == 0));
    assert_eq!(delta.parts.len(), 5);
    let (decoded, d2) = spatiotemporal_decode(&coded.bits, Some(&prev_model()), &coded.model, &prev, &labels).unwrap();
    assert_eq!(decoded, coded.recon);
    assert_eq!(d2, delta);
}

#[test]
fn single_node_part_takes_its_own_motion() {
    let prev = vec![Vec3::new(0.1, 0.2, 0.3)];
    let t = vec![Vec3::new(0.1 + 5.0 * Q, 0.2, 0.3 - 2.0 * Q)];
    let labels = vec![Some(BodyPart::Torso)];
    let (coded, delta) = spatiotemporal_encode(&t, &prev, &labels, Some(&prev_model()), Q).unwrap();
    assert!((delta.parts[0].1 - Vec3::new(5.0 * Q, 0.0, -2.0 * Q)).norm() < 1e-15);
    assert_eq!(coded.symbols, vec![0, 0, 0]);
}

#[test]
fn spatiotemporal_needs_a_previous_model() {
    let v = vec![Vec3::zeros()];
    assert!(matches!(
        spatiotemporal_encode(&v, &v, &[None], None, Q),
        Err(Error::MissingPreviousModel)
    ));
    let m = prev_model();
    assert!(matches!(
        spatiotemporal_decode(&BitBuf::default(), None, &m, &v, &[None]),
        Err(Error::MissingPreviousModel)
    ));
}

/// Independent closed-loop simulator of the spatio-temporal scheme.
fn spatiotemporal_oracle(t: &[Vec3], prev: &[Vec3], labels: &[Option<BodyPart>], dq: f64, q: f64) -> Vec<Vec3> {
    let mut out = vec![Vec3::zeros(); t.len()];
    let mut parts: Vec<Option<BodyPart>> = labels.to_vec();
    parts.sort();
    parts.dedup();
    for part in parts {
        let members: Vec<usize> = (0..t.len()).filter(|&j| labels[j] == part).collect();
        let cost = |d: Vec3| members.iter().map(|&j| (t[j] - prev[j] - d).norm_squared()).sum::<f64>();
        let mean = members.iter().map(|&j| t[j] - prev[j]).sum::<Vec3>() / members.len() as f64;
        let base = mean.map(|c| (c / dq).round());
        let mut best = (f64::INFINITY, Vec3::zeros());
        for a in -1..=1 {
            for b in -1..=1 {
                for c in -1..=1 {
                    let d = (base + Vec3::new(a as f64, b as f64, c as f64)) * dq;
                    if cost(d) < best.0 {
                        best = (cost(d), d);
                    }
                }
            }
        }
        for &j in &members {
            let p = prev[j] + best.1;
            out[j] = p + (t[j] - p).map(|c| (c / q).round()) * q;
        }
    }
    out
}

#[test]
fn spatiotemporal_lockstep_and_size_advantage() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for n in [5, 20, 60] {
        let labels: Vec<Option<BodyPart>> = (0..n).map(|k| Some(BodyPart::ALL[k % 4])).collect();
        let prev: Vec<Vec3> = (0..n).map(|_| Vec3::new(rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05), 0.0)).collect();
        let part_motion: Vec<Vec3> = (0..4).map(|_| Vec3::new(rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2))).collect();
        let t: Vec<Vec3> = (0..n)
            .map(|j| prev[j] + part_motion[j % 4] + Vec3::new(rng.random_range(-0.002..0.002), 0.0, rng.random_range(-0.002..0.002)))
            .collect();
        let pm = prev_model();
        let (coded, _) = spatiotemporal_encode(&t, &prev, &labels, Some(&pm), Q).unwrap();
        let (decoded, _) = spatiotemporal_decode(&coded.bits, Some(&pm), &coded.model, &prev, &labels).unwrap();
        assert_eq!(decoded, coded.recon);
        assert_eq!(decoded, spatiotemporal_oracle(&t, &prev, &labels, pm.qstep, coded.model.qstep));
        if n >= 20 {
            let spatial = spatial_encode(&t, &chain_plan(n), Q).unwrap();
            assert!(coded.bits.bit_len < spatial.bits.bit_len, "{} vs {}", coded.bits.bit_len, spatial.bits.bit_len);
        }
    }
}

#[test]
fn direct_round_trip() {
    let t = vec![Vec3::new(0.1, -0.2, 0.3), Vec3::new(5.0, 0.0, -1.0)];
    let coded = direct_encode(&t, Q).unwrap();
    assert_eq!(direct_decode(&coded.bits, &coded.model, 2).unwrap(), coded.recon);
}

#[test]
fn truncated_spatial_payload() {
    let t: Vec<Vec3> = (0..10).map(|k| Vec3::new(k as f64 * 0.01, 0.0, 0.0)).collect();
    let mut coded = spatial_encode(&t, &chain_plan(10), Q).unwrap();
    coded.bits.bit_len /= 2;
    assert!(matches!(
        spatial_decode(&coded.bits, &coded.model, &chain_plan(10)),
        Err(Error::TruncatedStream(_))
    ));
}
