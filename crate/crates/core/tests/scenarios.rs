use std::collections::BTreeMap;

use ovir_core::eval::{evaluate, EvalConfig, EvalScene};
use ovir_core::fusion::{iou, FusionConfig, MemoryBank};
use ovir_core::postprocess::{split_and_filter, PostprocessConfig};
use ovir_core::projection::{compute_visibility, project_frame};
use ovir_core::retrieval::{build_representatives, rank, spherical_kmeans, FinalInstance, Strategy};
use ovir_core::scene::{
    CameraIntrinsics, CameraPose, FrameObservation, GroundTruthAnnotation, GroundTruthInstance, QueryEmbedding,
    ScenePointCloud,
};
use ovir_core::synth::{
    benchmark, generate_scene, orbit, render_sequence, BenchmarkSpec, NoiseSpec, OrbitSpec, Shape, SynthObject,
    SynthSceneSpec,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn empty_frame(id: u64) -> FrameObservation {
    FrameObservation {
        frame_id: id,
        intrinsics: CameraIntrinsics::new(4.0, 4.0, 1.5, 1.5, 4, 4).unwrap(),
        pose: CameraPose::identity(),
        depth: Some(vec![1.0; 16]),
        regions: Vec::new(),
    }
}

#[test]
fn short_sequence_still_sweeps_once_at_finalize() {
    let cloud = ScenePointCloud::new(vec![[0.0, 0.0, 1.0]], None).unwrap();
    let mut bank = MemoryBank::new(FusionConfig::default()).unwrap();
    let mut sweeps = 0;
    for id in 0..10 {
        sweeps += bank.fuse_frame(&empty_frame(id), &cloud).unwrap().sweep.is_some() as usize;
    }
    assert_eq!(sweeps, 0);
    bank.finalize();
}

#[test]
fn full_period_sweeps_on_schedule() {
    let cloud = ScenePointCloud::new(vec![[0.0, 0.0, 1.0]], None).unwrap();
    let mut bank = MemoryBank::new(FusionConfig::default()).unwrap();
    let at: Vec<u64> = (0..300)
        .filter(|&id| bank.fuse_frame(&empty_frame(id), &cloud).unwrap().sweep.is_some())
        .collect();
    assert_eq!(at, vec![299]);
    assert_eq!(bank.finalize().merges, 0);
}

fn small_spec(seed: u64, noise: NoiseSpec) -> BenchmarkSpec {
    BenchmarkSpec {
        n_objects: 3,
        feature_dim: 16,
        orbit: OrbitSpec {
            frames: 20,
            ..Default::default()
        },
        noise,
        seed,
        ..Default::default()
    }
}

#[test]
fn association_miss_duplicate_is_merged_by_sweep() {
    let b = benchmark(&small_spec(2, NoiseSpec::default())).unwrap();
    let mut bank = MemoryBank::new(FusionConfig::default()).unwrap();
    bank.fuse_frame(&b.frames[0], &b.scene.cloud).unwrap();
    let n0 = bank.instances().len();
    // Demand a perfect overlap for one frame so every region misses.
    bank.set_config(FusionConfig {
        theta_iou: 1.0,
        ..Default::default()
    })
    .unwrap();
    bank.fuse_frame(&b.frames[1], &b.scene.cloud).unwrap();
    assert_eq!(bank.instances().len(), 2 * n0);
    bank.set_config(FusionConfig::default()).unwrap();
    bank.finalize();
    assert_eq!(bank.instances().len(), n0);
    assert!(bank.is_merge_fixed_point());
}

#[test]
fn wrongly_merged_distant_objects_are_split() {
    let feature = vec![1.0, 0.0, 0.0, 0.0];
    let obj = |x: f64, cat: &str| SynthObject {
        shape: Shape::Box { size: [0.4, 0.4, 0.4] },
        center: [x, 0.0, 0.28],
        yaw: 0.3,
        feature: feature.clone(),
        category: cat.into(),
    };
    let scene = generate_scene(&SynthSceneSpec {
        objects: vec![obj(-1.0, "a"), obj(1.0, "b")],
        floor: None,
        density: 20000.0,
        min_normal_z: -0.5,
        min_clearance: 0.0,
        seed: 1,
    })
    .unwrap();
    let poses = orbit(&OrbitSpec {
        frames: 30,
        radius: 3.0,
        ..Default::default()
    })
    .unwrap();
    let frames = render_sequence(&scene, &ovir_core::synth::default_intrinsics(), &poses, &NoiseSpec::default(), 0)
        .unwrap();
    let mut bank = MemoryBank::new(FusionConfig::default()).unwrap();
    for f in &frames {
        bank.fuse_frame(f, &scene.cloud).unwrap();
    }
    bank.finalize();
    assert_eq!(bank.instances().len(), 2);
    let (a, b) = (bank.instances()[0].id, bank.instances()[1].id);
    bank.force_merge(a, b).unwrap();
    assert_eq!(bank.instances().len(), 1);

    let segments = split_and_filter(&bank, &scene.cloud, &PostprocessConfig::default()).unwrap();
    assert_eq!(segments.len(), 2);
    for g in &scene.ground_truth.instances {
        let best = segments.iter().map(|s| iou(&s.point_indices, &g.point_indices)).fold(0.0, f64::max);
        assert!(best >= 0.95, "{best}");
    }
}

#[test]
fn zero_noise_box_filling_view_projects_to_its_visible_points() {
    let scene = generate_scene(&SynthSceneSpec {
        objects: vec![SynthObject {
            shape: Shape::Box { size: [1.0; 3] },
            center: [0.0; 3],
            yaw: 0.0,
            feature: vec![0.0, 1.0],
            category: "box".into(),
        }],
        floor: None,
        density: 20000.0,
        min_normal_z: -1.0,
        min_clearance: 0.0,
        seed: 0,
    })
    .unwrap();
    let k = CameraIntrinsics::new(60.0, 60.0, 31.5, 23.5, 64, 48).unwrap();
    let pose = CameraPose::look_at(
        nalgebra::Vector3::new(0.0, -1.2, 0.0),
        nalgebra::Vector3::zeros(),
        nalgebra::Vector3::z(),
    )
    .unwrap();
    let f = ovir_core::synth::render_observation(&scene, 0, &k, &pose, &NoiseSpec::default(), 0).unwrap();
    let vis = compute_visibility(&scene.cloud, &f, 0.05).unwrap();
    let regions = project_frame(&f, &vis, 1);
    assert_eq!(regions.len(), 1);
    assert_eq!(regions[0].point_indices, vis.visible());
}

#[test]
fn one_blob_stays_whole_and_two_blobs_split() {
    let mut pts = Vec::new();
    for x in 0..10 {
        for y in 0..10 {
            pts.push([x as f32 * 0.02, y as f32 * 0.02, 1.0]);
            pts.push([1.5 + x as f32 * 0.02, y as f32 * 0.02, 1.0]);
        }
    }
    let cloud = ScenePointCloud::new(pts, None).unwrap();
    let even: Vec<u32> = (0..200).step_by(2).collect();
    let all: Vec<u32> = (0..200).collect();
    for (points, expect) in [(even, 1usize), (all, 2)] {
        let bank = bank_with_instance(points.clone());
        let segs = split_and_filter(&bank, &cloud, &PostprocessConfig::default()).unwrap();
        assert_eq!(segs.len(), expect);
        let total: usize = segs.iter().map(|s| s.point_indices.len()).sum();
        assert_eq!(total, points.len());
        assert!(segs.iter().all(|s| s.point_indices.len() == 100));
    }
}

/// A bank holding one instance over `points`, built through fusion on a
/// frame whose single region covers exactly those points.
fn bank_with_instance(points: Vec<u32>) -> MemoryBank {
    let mut bank = ovir_core::snapshot::read_bank(
        format!(
            "{{\"magic\":\"OVB1\",\"config\":{},\"frames_seen\":1,\"next_id\":1,\"feature_dim\":1,\"cloud_len\":null,\"last_frame_id\":0,\"instances\":[{{\"id\":0,\"n_regions\":1,\"created_at_frame\":0,\"largest_view_size\":{n},\"segment_sizes\":[{n}],\"num_points\":{n},\"num_views\":1}}]}}\n",
            serde_json::to_string(&FusionConfig::default()).unwrap(),
            n = points.len()
        )
        .into_bytes()
        .into_iter()
        .chain(points.iter().flat_map(|p| p.to_le_bytes()))
        .chain(points.iter().flat_map(|_| 1u32.to_le_bytes()))
        .chain(points.iter().flat_map(|_| 1u32.to_le_bytes()))
        .chain([1.0f32, 1.0, 1.0].iter().flat_map(|v| v.to_le_bytes()))
        .collect::<Vec<u8>>()
        .as_slice(),
    )
    .unwrap();
    bank.finalize();
    bank
}

#[test]
fn ranking_matches_brute_force_sort() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..50 {
        let unit = |rng: &mut ChaCha8Rng| -> Vec<f32> {
            let v: Vec<f32> = (0..8).map(|_| rng.random::<f32>() - 0.5).collect();
            let n = v.iter().map(|x| x * x).sum::<f32>().sqrt();
            v.iter().map(|x| x / n).collect()
        };
        let instances: Vec<FinalInstance> = (0..10)
            .map(|id| {
                let views: Vec<Vec<f32>> = (0..5).map(|_| unit(&mut rng)).collect();
                FinalInstance {
                    id,
                    parent_id: id,
                    point_indices: vec![id],
                    mean_feature: unit(&mut rng),
                    largest_view_feature: views[0].clone(),
                    representatives: build_representatives(&views, 3, id as u64),
                    source_view_count: 5,
                }
            })
            .collect();
        let q = QueryEmbedding::new(unit(&mut rng), None).unwrap();
        for strategy in Strategy::ALL {
            let mut expect: Vec<(f64, u32)> = instances
                .iter()
                .map(|i| {
                    let s = match strategy {
                        Strategy::Mean => dot(&q.feature, &i.mean_feature),
                        Strategy::LargestView => dot(&q.feature, &i.largest_view_feature),
                        Strategy::Clustered => i
                            .representatives
                            .iter()
                            .map(|c| dot(&q.feature, c))
                            .fold(f64::MIN, f64::max),
                    };
                    (s, i.id)
                })
                .collect();
            expect.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
            let got: Vec<u32> = rank(&q, &instances, 10, strategy).unwrap().ranked.iter().map(|r| r.id).collect();
            let want: Vec<u32> = expect.iter().map(|e| e.1).collect();
            assert_eq!(got, want);
        }
    }
}

fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum()
}

#[test]
fn sixty_four_centers_beat_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let views: Vec<Vec<f32>> = (0..1024).map(|_| (0..32).map(|_| rng.random::<f32>() - 0.5).collect()).collect();
    let c64 = spherical_kmeans(&views, 64, 1);
    let c1 = spherical_kmeans(&views, 1, 1);
    assert_eq!(c64.centers.len(), 64);
    assert!(c64.objective_trace.last() <= c1.objective_trace.last());
}

#[test]
fn category_absent_from_a_scene_averages_over_present_scenes_only() {
    let inst = |id: u32, f: Vec<f32>, pts: Vec<u32>| FinalInstance {
        id,
        parent_id: id,
        point_indices: pts,
        mean_feature: f.clone(),
        largest_view_feature: f.clone(),
        representatives: vec![f],
        source_view_count: 1,
    };
    let gt = |cats: &[(&str, Vec<u32>)]| GroundTruthAnnotation {
        instances: cats
            .iter()
            .enumerate()
            .map(|(i, (c, p))| GroundTruthInstance {
                id: i as u32,
                category: c.to_string(),
                point_indices: p.clone(),
            })
            .collect(),
    };
    let queries: BTreeMap<String, QueryEmbedding> = [("a", vec![1.0, 0.0]), ("b", vec![0.0, 1.0])]
        .into_iter()
        .map(|(c, f)| (c.to_string(), QueryEmbedding::new(f, Some(c.into())).unwrap()))
        .collect();
    // Scene one finds "a" perfectly; scene two misses "a"; "b" only in scene two.
    let s1 = EvalScene {
        name: "one".into(),
        instances: vec![inst(0, vec![1.0, 0.0], vec![0, 1, 2])],
        ground_truth: gt(&[("a", vec![0, 1, 2])]),
        queries: queries.clone(),
    };
    let s2 = EvalScene {
        name: "two".into(),
        instances: vec![inst(0, vec![0.0, 1.0], vec![5, 6])],
        ground_truth: gt(&[("a", vec![0, 1]), ("b", vec![5, 6])]),
        queries,
    };
    let r = evaluate(&[s1, s2], &EvalConfig::default()).unwrap();
    assert_eq!(r.per_category_ap["a"][0], 0.5);
    assert_eq!(r.per_category_ap["b"][0], 1.0);
    assert_eq!(r.map25(), Some(0.75));
}

#[test]
fn missing_query_embedding_is_an_error() {
    let s = EvalScene {
        name: "s".into(),
        instances: Vec::new(),
        ground_truth: GroundTruthAnnotation {
            instances: vec![GroundTruthInstance {
                id: 0,
                category: "lamp".into(),
                point_indices: vec![0],
            }],
        },
        queries: BTreeMap::new(),
    };
    assert!(evaluate(&[s], &EvalConfig::default()).is_err());
}

#[test]
fn stricter_thresholds_never_add_events() {
    let b = benchmark(&small_spec(4, NoiseSpec::benchmark())).unwrap();
    let events = |theta_s: f64, theta_iou: f64| -> usize {
        let mut bank = MemoryBank::new(FusionConfig {
            theta_s,
            theta_iou,
            ..Default::default()
        })
        .unwrap();
        let matched: usize = b.frames.iter().map(|f| bank.fuse_frame(f, &b.scene.cloud).unwrap().matched).sum();
        matched + bank.finalize().merges
    };
    let grid = [0.5, 0.75, 0.9];
    for w in grid.windows(2) {
        assert!(events(w[1], 0.25) <= events(w[0], 0.25));
        assert!(events(0.75, w[1] / 2.0) <= events(0.75, w[0] / 2.0));
    }
}

#[test]
fn noisy_sweeps_leave_a_merge_fixed_point() {
    for seed in 0..3 {
        let b = benchmark(&small_spec(seed, NoiseSpec::benchmark())).unwrap();
        let mut bank = MemoryBank::new(FusionConfig {
            period: 4,
            ..Default::default()
        })
        .unwrap();
        for f in &b.frames {
            if bank.fuse_frame(f, &b.scene.cloud).unwrap().sweep.is_some() {
                assert!(bank.is_merge_fixed_point());
            }
        }
        bank.finalize();
        assert!(bank.is_merge_fixed_point());
    }
}

#[test]
fn detections_never_outnumber_sightings() {
    let b = benchmark(&small_spec(6, NoiseSpec::benchmark())).unwrap();
    let mut bank = MemoryBank::new(FusionConfig {
        period: 5,
        ..Default::default()
    })
    .unwrap();
    for f in &b.frames {
        bank.fuse_frame(f, &b.scene.cloud).unwrap();
        for inst in bank.instances() {
            assert!(inst.det_count.iter().zip(&inst.vis_count).all(|(d, v)| d <= v), "instance {}", inst.id);
        }
    }
}

#[test]
fn second_finalize_changes_nothing() {
    let b = benchmark(&small_spec(1, NoiseSpec::benchmark())).unwrap();
    let mut bank = MemoryBank::new(FusionConfig::default()).unwrap();
    for f in &b.frames {
        bank.fuse_frame(f, &b.scene.cloud).unwrap();
    }
    bank.finalize();
    let once = bank.clone();
    let stats = bank.finalize();
    assert_eq!((stats.points_removed, stats.instances_dropped, stats.merges), (0, 0, 0));
    assert_eq!(bank.instances(), once.instances());
}
