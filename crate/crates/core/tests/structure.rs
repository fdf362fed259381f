mod common;

use asmforge::dataset::{
    build_joint_mask, detect_joints, generate_shape, Category, GenSpec, ShapeInstance, DEFAULT_JOINT_POINTS,
    DEFAULT_JOINT_TAU,
};
use asmforge::geom::{apply_pose, Pose};
use asmforge::graph::{
    aggregate_joint_to_part, build_joint_graph, build_part_graph, compute_connectivity, message_pass, update,
    ConnectivityMatrix, DEFAULT_TEMPERATURE,
};
use asmforge::losses::random_perturbation;
use asmforge::matching::{
    assign_joint_signs, hungarian, propose_pairing, reassign_gt_pairing, reassign_pairing, PartConnectivityGraph,
    Sign,
};
use common::{assignment_oracle, random_class_permutation};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn category() -> impl Strategy<Value = Category> {
    prop_oneof![Just(Category::Chair), Just(Category::Table), Just(Category::Cabinet)]
}

fn shape() -> impl Strategy<Value = ShapeInstance> {
    (category(), any::<u64>())
        .prop_map(|(c, seed)| generate_shape(&GenSpec::new(c, 120), &format!("{c}_{seed}"), seed).unwrap())
}

fn perturbed(shape: &ShapeInstance, seed: u64) -> Vec<Pose> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    shape
        .gt_poses
        .iter()
        .map(|p| random_perturbation(p, &mut rng, 0.5, 0.2).unwrap())
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn generated_shapes_are_valid_and_round_trip(s in shape()) {
        s.validate().unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.json");
        s.save(&path).unwrap();
        let back = ShapeInstance::load(&path).unwrap();
        prop_assert_eq!(&back, &s);
        prop_assert_eq!(back.to_json(), s.to_json());
    }

    #[test]
    fn joints_are_well_formed(s in shape()) {
        for j in &s.joints {
            prop_assert_eq!(j.point_indices.len(), DEFAULT_JOINT_POINTS);
            prop_assert!(j.point_indices.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(*j.point_indices.last().unwrap() < s.parts[j.part_id].len());
            if let Some(m) = j.mate {
                let mate = &s.joints[m];
                prop_assert_eq!(mate.mate, Some(j.id));
                prop_assert_ne!(mate.part_id, j.part_id);
                prop_assert_eq!(mate.sign.map(Sign::opposite), j.sign);
            }
        }
        for (pid, part) in s.parts.iter().enumerate() {
            let mine = s.joints_of(pid);
            let mask = build_joint_mask(part, &mine).unwrap();
            for (i, label) in mask.labels.iter().enumerate() {
                let owner = mask.joint_ids[i];
                prop_assert_eq!(*label != 0, owner.is_some());
                if let Some(id) = owner {
                    prop_assert_eq!(*label, s.joints[id].sign.unwrap().mask_value());
                }
            }
        }
    }

    #[test]
    fn congruent_classes_partition_the_parts(s in shape()) {
        let mut seen: Vec<usize> = s.congruent_classes.iter().flatten().copied().collect();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..s.num_parts()).collect::<Vec<_>>());
    }

    #[test]
    fn contacts_are_found_again_in_the_assembled_shape(s in shape()) {
        let assembled: Vec<_> = s.parts.iter().zip(&s.gt_poses).map(|(c, p)| apply_pose(p, c).unwrap()).collect();
        let found = detect_joints(&assembled, DEFAULT_JOINT_POINTS, DEFAULT_JOINT_TAU).unwrap();
        prop_assert_eq!(found.pairs.len() * 2, s.joints.len());
    }

    #[test]
    fn connectivity_rows_are_distributions(s in shape(), seed in any::<u64>()) {
        let poses = perturbed(&s, seed);
        let r = compute_connectivity(&s.joints, &poses, DEFAULT_TEMPERATURE).unwrap();
        for row in &r.weights {
            prop_assert!(row.iter().all(|w| (0.0..=1.0).contains(w)));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        }
        // Any temperature rescales every logit by the same positive factor.
        for t in [1e-4, 0.1, 10.0] {
            let other = compute_connectivity(&s.joints, &poses, t).unwrap();
            prop_assert_eq!(other.row_argmax(), r.row_argmax());
        }
        let pairing = propose_pairing(&r).unwrap();
        let pegs: Vec<usize> = pairing.pairs().iter().map(|p| p.0).collect();
        let mut holes: Vec<usize> = pairing.pairs().iter().map(|p| p.1).collect();
        holes.sort_unstable();
        holes.dedup();
        prop_assert_eq!(holes.len(), pegs.len());
        prop_assert_eq!(pegs.len(), r.peg_ids.len().min(r.hole_ids.len()));
    }

    #[test]
    fn graphs_keep_their_shape(s in shape(), seed in any::<u64>()) {
        let jg = build_joint_graph(&s).unwrap();
        prop_assert!(jg.is_bipartite());
        let pg = build_part_graph(&s, &perturbed(&s, seed)).unwrap();
        let n = s.num_parts();
        prop_assert_eq!(pg.graph.edges.len(), n * (n - 1));
        prop_assert!(pg.graph.edges.iter().all(|e| e.src != e.dst));
        let fixed = message_pass(&pg.graph, update::keep_edge, update::keep_node, 3).unwrap();
        prop_assert_eq!(fixed, pg.graph);
    }

    #[test]
    fn pooling_ignores_signal_order(s in shape(), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let signals: Vec<(usize, Vec<f64>)> = s
            .joints
            .iter()
            .map(|j| (j.id, vec![rand::Rng::random::<f64>(&mut rng), rand::Rng::random::<f64>(&mut rng)]))
            .collect();
        let mut shuffled = signals.clone();
        shuffled.shuffle(&mut rng);
        prop_assert_eq!(
            aggregate_joint_to_part(&signals, &s).unwrap(),
            aggregate_joint_to_part(&shuffled, &s).unwrap()
        );
    }

    #[test]
    fn reassignment_undoes_itself(s in shape(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let perm = random_class_permutation(&s.congruent_classes, s.num_parts(), &mut rng);
        let mut inverse = vec![0; perm.len()];
        for (i, &p) in perm.iter().enumerate() {
            inverse[p] = i;
        }
        let there = reassign_gt_pairing(&s, &perm).unwrap();
        there.validate(&s).unwrap();
        prop_assert_eq!(reassign_pairing(&s, &there, &inverse).unwrap(), s.gt_pairing.clone());
    }

    #[test]
    fn signs_never_leave_an_equal_sign_edge(
        congruent in prop::collection::vec(any::<bool>(), 1..12),
        density in 0.05f64..0.9,
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = congruent.len();
        let mut g = PartConnectivityGraph::new(congruent.clone());
        for a in 0..n {
            for b in a + 1..n {
                if rand::Rng::random_bool(&mut rng, density) {
                    g.add_edge(a, b).unwrap();
                }
            }
        }
        let s = assign_joint_signs(&g);
        for (a, b) in g.edges() {
            match s.edge_signs(a, b) {
                Some((x, y)) => prop_assert_ne!(x, y),
                None => prop_assert!(!congruent[a] && !congruent[b]),
            }
        }
    }

    #[test]
    fn hungarian_beats_every_permutation(
        n in 1usize..7,
        raw in prop::collection::vec(0.0f64..5.0, 49),
    ) {
        let cost: Vec<Vec<f64>> = (0..n).map(|r| raw[r * n..(r + 1) * n].to_vec()).collect();
        let a = hungarian(&cost).unwrap();
        prop_assert!((a.cost - assignment_oracle(&cost)).abs() <= 1e-9);
    }

    #[test]
    fn proposals_are_one_to_one(
        pegs in 1usize..7,
        holes in 1usize..7,
        raw in prop::collection::vec(0.0f64..1.0, 36),
    ) {
        let weights: Vec<Vec<f64>> = (0..pegs).map(|p| raw[p * 6..p * 6 + holes].to_vec()).collect();
        let r = ConnectivityMatrix::from_weights((0..pegs).collect(), (100..100 + holes).collect(), weights).unwrap();
        let p = propose_pairing(&r).unwrap();
        let mut h: Vec<usize> = p.pairs().iter().map(|x| x.1).collect();
        let mut g: Vec<usize> = p.pairs().iter().map(|x| x.0).collect();
        h.sort_unstable();
        h.dedup();
        g.sort_unstable();
        g.dedup();
        prop_assert_eq!(h.len(), p.len());
        prop_assert_eq!(g.len(), p.len());
        prop_assert_eq!(p.len(), pegs.min(holes));
    }
}
