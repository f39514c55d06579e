mod common;

use atomnav::geometry::unproject;
use atomnav::perception::{read_sequence, Vlm, VlmPart, VlmRequest};
use atomnav::render::{render, RenderConfig};
use atomnav::scene::{Instruction, NavCueSet};
use atomnav::signs::{build_parse_request, SymbolDictionary};
use atomnav::sim::*;
use nalgebra::Vector2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn shipped_scenes_are_valid_and_cover_archetypes() {
    let paths = common::scene_paths();
    assert!(paths.len() >= 20, "{} scenes", paths.len());
    let mut classes = std::collections::BTreeSet::new();
    for p in &paths {
        let s = SceneSpec::load(p).unwrap();
        for st in &s.structures {
            classes.insert(st.class_label.clone());
        }
    }
    assert!(classes.contains("stairs") && classes.contains("escalator"));
    assert!(paths.iter().any(|p| SceneSpec::load(p).unwrap().signs.len() > 1));
}

#[test]
fn cue_targets_follow_the_rule_in_the_true_sign_frame() {
    for p in common::scene_paths() {
        let s = SceneSpec::load(&p).unwrap();
        for sign in &s.signs {
            for cue in &sign.cues {
                let Some(target) = &cue.target else { continue };
                let got = s.ground_truth_rule(&sign.frame(), cue.instruction).map(|e| e.name);
                assert_eq!(got.as_deref(), Some(target.as_str()), "{} {}", s.name, cue.location);
            }
        }
    }
}

#[test]
fn sign_two_meters_ahead_has_depth_two() {
    let s = common::scene("t_junction");
    let sign = &s.signs[0];
    let (p, yaw) = sign.viewpoint(2.0, 0.0);
    let cam = SimCamera::default();
    let f = observe(&s, &cam, &p, yaw, 0.0).unwrap();
    assert_eq!(f.sign_masks.len(), 1);
    assert_eq!(f.detections.iter().filter(|d| d.class_label == "sign").count(), 1);
    // the sign hangs above the camera, so the nearest mask pixel is on the
    // row closest to the optical axis
    let mut nearest = f64::INFINITY;
    for (u, v) in f.sign_masks[0].mask.pixels() {
        nearest = nearest.min(f.depth_m(u, v).unwrap());
    }
    assert!((nearest - 2.0).abs() < 0.01, "{nearest}");
}

#[test]
fn open_floor_has_path_but_no_detections() {
    let s = common::scene("t_junction");
    let f = observe(&s, &SimCamera::default(), &Vector2::new(0.0, -1.0), -std::f64::consts::FRAC_PI_2, 0.0).unwrap();
    assert!(f.path_mask.count() > 0);
    assert!(f.detections.is_empty());
}

#[test]
fn path_pixels_land_on_the_floor() {
    let cam = SimCamera::default();
    for name in ["atrium", "trail_fork_rot250", "lobby_two_signs"] {
        let s = common::scene(name);
        let (p, yaw) = s.start_pose();
        for k in 0..4 {
            let f = observe(&s, &cam, &p, yaw + k as f64 * 1.3, 0.0).unwrap();
            for (u, v) in f.path_mask.pixels().step_by(7) {
                let d = f.depth_m(u, v);
                let w = unproject((u as f64 + 0.5, v as f64 + 0.5), d, &f.intrinsics, &f.pose).unwrap();
                assert!(w.z.abs() < 0.01, "{name} {u},{v} z={}", w.z);
            }
        }
    }
}

#[test]
fn emit_then_read_round_trips_and_is_byte_deterministic() {
    let s = common::scene("t_junction");
    let cam = SimCamera::default();
    let traj: Vec<TrajectoryPose> = (0..20)
        .map(|i| {
            let a = -0.5 + i as f64 * 0.05;
            let (p, yaw) = s.signs[0].viewpoint(2.5, a);
            TrajectoryPose {
                position: [p.x, p.y],
                yaw,
                t: None,
            }
        })
        .collect();
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    let m = emit_sequence(&s, &cam, &traj, d1.path()).unwrap();
    assert_eq!(m.frames.len(), 20);
    emit_sequence(&s, &cam, &traj, d2.path()).unwrap();
    let direct = observe_trajectory(&s, &cam, &traj).unwrap();
    let seq = read_sequence(d1.path()).unwrap();
    let read: Vec<_> = seq.frames().map(|f| f.unwrap()).collect();
    assert_eq!(read.len(), direct.len());
    for (a, b) in read.iter().zip(&direct) {
        assert_eq!(a, &b.frame);
    }
    let mut names: Vec<_> = std::fs::read_dir(d1.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    for n in names {
        let (a, b) = (d1.path().join(&n), d2.path().join(&n));
        if a.is_file() {
            assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap(), "{n:?}");
        }
    }
}

#[test]
fn trajectory_leaving_the_ground_fails_at_its_index() {
    let s = common::scene("t_junction");
    let mut traj = vec![
        TrajectoryPose {
            position: [0.0, -1.0],
            yaw: 1.57,
            t: None,
        };
        5
    ];
    traj[3].position = [5.0, 5.0];
    let d = tempfile::tempdir().unwrap();
    match emit_sequence(&s, &SimCamera::default(), &traj, d.path()) {
        Err(SimError::Trajectory { index, .. }) => assert_eq!(index, 3),
        other => panic!("{other:?}"),
    }
}

#[test]
fn two_branch_scene_is_too_simple() {
    let mut s = common::scene("l_corner");
    s.structures.clear();
    for sign in &mut s.signs {
        sign.cues.retain(|c| c.target.as_deref().is_none_or(|t| t == "east" || t == "south"));
    }
    s.validate().unwrap();
    assert!(matches!(make_benchmark(&s, &SimCamera::default(), 7), Err(SimError::SceneTooSimple(_))));
}

#[test]
fn benchmark_is_seed_deterministic_and_truthful() {
    let s = common::scene("plus_junction");
    let cam = SimCamera::default();
    let a = make_benchmark(&s, &cam, 7).unwrap();
    let b = make_benchmark(&s, &cam, 7).unwrap();
    assert_eq!(a.queries, b.queries);
    assert_eq!(a.trajectory, b.trajectory);
    assert_eq!(a.queries.len(), 4);
    for q in &a.queries {
        assert_eq!(q.choices.len(), 4);
        q.validate().unwrap();
        assert!(q.choices.iter().any(|c| c.id == q.truth));
    }
    let c = make_benchmark(&s, &cam, 8).unwrap();
    assert_ne!(
        a.queries.iter().map(|q| q.truth.clone()).collect::<Vec<_>>(),
        c.queries.iter().map(|q| q.truth.clone()).collect::<Vec<_>>()
    );
}

fn parse_request(s: &SceneSpec, sign: usize) -> VlmRequest {
    build_parse_request(&sign_crop(s, sign), &SymbolDictionary::default()).unwrap()
}

#[test]
fn oracle_parse_without_corruption_is_the_truth() {
    let s = common::scene("t_junction");
    let oracle = OracleVlm::new(s.clone(), 0.0, 1);
    let reply = oracle.chat(&parse_request(&s, 0)).unwrap().text;
    assert_eq!(reply, s.signs[0].cue_set().to_dict_literal(true));
    assert!(reply.contains("'up-stairs': ['terrace']"));
    assert!(reply.contains("'down-stairs': []"));
}

#[test]
fn oracle_corruption_is_seeded() {
    let s = common::scene("plus_junction");
    let replies = |seed| {
        let o = OracleVlm::new(s.clone(), 0.3, seed);
        (0..10).map(|_| o.chat(&parse_request(&s, 0)).unwrap().text).collect::<Vec<_>>()
    };
    assert_eq!(replies(5), replies(5));
    assert_ne!(replies(5), replies(6));
    let truth = s.signs[0].cue_set().to_dict_literal(true);
    assert!(replies(5).iter().any(|r| r != &truth));
}

#[test]
fn corrupt_cues_extremes() {
    let set = NavCueSet::from_pairs(&[("gate", Instruction::Left), ("exit", Instruction::Right)]);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert_eq!(corrupt_cues(&set, 0.0, &mut rng), set);
    let bad = corrupt_cues(&set, 1.0, &mut rng);
    assert_ne!(bad.instruction_for("gate"), Some(Instruction::Left));
    assert_ne!(bad.instruction_for("exit"), Some(Instruction::Right));
}

#[test]
fn oracle_rejects_unknown_prompts() {
    let o = OracleVlm::new(common::scene("t_junction"), 0.0, 1);
    let req = VlmRequest::new(vec![VlmPart::Text("describe the weather".into())]).unwrap();
    assert!(matches!(o.chat(&req), Err(atomnav::perception::PerceptionError::OracleMismatch(_))));
}

#[test]
fn oracle_grounds_left_on_the_t_junction() {
    let s = common::scene("t_junction");
    let (map, _) = common::run_explore(&s, 0);
    let r = render(&map, 0, &RenderConfig::default()).unwrap();
    let o = OracleVlm::new(s.clone(), 0.0, 1);
    let parsing = map.signs[0].merged_cues.to_dict_literal(false);
    let req = atomnav::grounding::build_grounding_request(&r.image, "pharmacy", &parsing);
    let reply = o.chat(&req).unwrap().text;
    let left = r
        .sidecar
        .frontiers
        .iter()
        .min_by(|a, b| a.point.x.total_cmp(&b.point.x))
        .unwrap();
    assert_eq!(reply, format!("[{}]", left.letter));
}
