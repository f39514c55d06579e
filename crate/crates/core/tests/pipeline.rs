mod common;

use atomnav::builder::{build, BuilderConfig};
use atomnav::grounding::{ground_query, GroundingConfig, Grounder, Selected};
use atomnav::perception::read_sequence;
use atomnav::render::{render, RenderConfig};
use atomnav::scene::{deserialize_atom, serialize_atom, AtomMap};
use atomnav::sim::{make_benchmark, write_benchmark, OracleVlm, SimCamera};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn built(name: &str) -> AtomMap {
    let s = common::scene(name);
    let b = make_benchmark(&s, &SimCamera::default(), 7).unwrap();
    let d = tempfile::tempdir().unwrap();
    write_benchmark(&b, &s, d.path()).unwrap();
    let vlm = OracleVlm::new(s.clone(), 0.0, s.rng_seed);
    build(read_sequence(d.path()).unwrap().frames(), &BuilderConfig::default(), &vlm).unwrap()
}

#[test]
fn building_a_t_junction_sequence() {
    let m = built("t_junction");
    assert_eq!(m.signs.len(), 1);
    assert!(!m.structures.is_empty());
    assert!(!m.path_cloud.is_empty());
    let n = m.signs[0].normal;
    assert!((n - nalgebra::Vector3::new(0.0, -1.0, 0.0)).norm() < 0.01, "{n:?}");
    assert!((m.signs[0].centroid - nalgebra::Vector3::new(0.0, 2.0, 2.0)).norm() < 0.05);
    let bytes = serialize_atom(&m);
    assert_eq!(bytes, serialize_atom(&built("t_junction")));
    assert_eq!(serialize_atom(&deserialize_atom(&bytes).unwrap()), bytes);
}

#[test]
fn render_is_invariant_to_planar_rigid_motion() {
    let cfg = RenderConfig::default();
    for name in ["t_junction", "atrium_rot60", "lobby_two_signs"] {
        let m = built(name);
        let base: Vec<_> = m.signs.iter().map(|s| render(&m, s.id, &cfg).unwrap().sidecar).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            let g = common::Planar {
                theta: rng.gen_range(-3.1..3.1),
                t: [rng.gen_range(-50.0..50.0), rng.gen_range(-50.0..50.0)],
            };
            let moved = g.map(&m);
            for (s, b) in moved.signs.iter().zip(&base) {
                let r = render(&moved, s.id, &cfg).unwrap().sidecar;
                let d = common::sidecar_distance(b, &r).unwrap_or(f64::INFINITY);
                assert!(d < 1e-4, "{name} {g:?} {d}");
            }
        }
    }
}

#[test]
fn geometric_grounding_on_the_built_map() {
    let m = built("t_junction");
    let cfg = GroundingConfig::default();
    let (left, _) = ground_query(&m, "Pharmacy", Grounder::Geometric, None, &RenderConfig::default(), &cfg).unwrap();
    let goal = left.subgoal_3d.unwrap();
    assert!(goal.x < -5.0 && goal.y.abs() < 1.0, "{goal:?}");
    let (up, _) = ground_query(&m, "terrace", Grounder::Geometric, None, &RenderConfig::default(), &cfg).unwrap();
    match up.selected {
        Selected::Structure { vertical, .. } => assert_eq!(vertical, Some(atomnav::scene::Vertical::Up)),
        other => panic!("{other:?}"),
    }
    let (here, _) = ground_query(&m, "you are here", Grounder::Geometric, None, &RenderConfig::default(), &cfg).unwrap();
    assert_eq!(here.selected, Selected::LocationalOnly);
    assert!(here.subgoal_3d.is_none());
    assert!(ground_query(&m, "zoo", Grounder::Geometric, None, &RenderConfig::default(), &cfg).is_err());
}

#[test]
fn built_map_moves_with_the_scene() {
    // quarter turns and voxel-multiple shifts keep the voxel grid aligned
    let g = common::Planar {
        theta: std::f64::consts::FRAC_PI_2,
        t: [1.0, -2.0],
    };
    let s = common::scene("plus_escalator");
    let build_of = |s: &atomnav::sim::SceneSpec| {
        let b = make_benchmark(s, &SimCamera::default(), 7).unwrap();
        let vlm = OracleVlm::new(s.clone(), 0.0, 1);
        build(b.frames.iter().cloned().map(Ok), &BuilderConfig::default(), &vlm).unwrap()
    };
    let a = g.map(&build_of(&s));
    let b = build_of(&g.scene(&s));
    assert_eq!(a.signs.len(), b.signs.len());
    for (x, y) in a.signs.iter().zip(&b.signs) {
        assert!((x.centroid - y.centroid).norm() < 1e-4);
        assert!((x.normal - y.normal).norm() < 1e-4);
        assert_eq!(x.merged_cues, y.merged_cues);
    }
    assert_eq!(a.structures.len(), b.structures.len());
    for (x, y) in a.structures.iter().zip(&b.structures) {
        assert!((x.bbox.center - y.bbox.center).norm() < 1e-4);
    }
    assert_eq!(a.path_cloud.len(), b.path_cloud.len());
    let cell = |p: &nalgebra::Vector3<f64>| ((p.x / 0.05).floor() as i64, (p.y / 0.05).floor() as i64);
    let index: std::collections::HashMap<_, _> = b.path_cloud.iter().map(|p| (cell(p), *p)).collect();
    for p in a.path_cloud.iter() {
        let (i, j) = cell(p);
        let near = (-1..=1)
            .flat_map(|di| (-1..=1).map(move |dj| (i + di, j + dj)))
            .filter_map(|k| index.get(&k))
            .any(|q| (p - q).norm() < 1e-4);
        assert!(near, "{p:?}");
    }
}
