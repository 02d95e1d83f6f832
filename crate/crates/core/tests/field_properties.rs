use langfield::camera::{CameraIntrinsics, Pose, Ray};
use langfield::field::{Field, FieldParams, MlpConfig};
use langfield::hash_grid::HashGridConfig;
use langfield::math::Aabb;
use langfield::render::{march_ray, MarchSpec, RayWorkspace};
use langfield::segment::{self, ViewSpec};
use langfield::synth::{self, SceneSpec};
use langfield::train::{self, TrainConfig, TrainState};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn bound() -> Aabb {
    Aabb {
        min: [-2.0, -2.0, 0.0],
        max: [2.0, 2.0, 2.5],
    }
}

fn trained_like_params(seed: u64) -> (langfield::field::Field, FieldParams<f32>) {
    let field = train::tiny_model(bound()).unwrap();
    let params = train::grad_check_params(&field, seed).cast();
    (field, params)
}

// Dyadic points and axis-aligned rays with dyadic sample positions keep
// `origin + t * direction` exact, so different rays land on the same point.
#[test]
fn outputs_do_not_depend_on_the_requesting_ray() {
    let (field, params) = trained_like_params(3);
    let spec = MarchSpec {
        near: 0.0,
        far: 1.0,
        samples: 8,
        seed: None,
        early_stop: 0.0,
    };
    let t: Vec<f64> = (0..8).map(|i| (i as f64 + 0.5) / 8.0).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let points: Vec<[f64; 3]> = (0..40)
        .map(|_| {
            use rand::Rng;
            [
                rng.gen_range(-48i32..48) as f64 / 32.0,
                rng.gen_range(-48i32..48) as f64 / 32.0,
                rng.gen_range(40i32..120) as f64 / 64.0,
            ]
        })
        .collect();
    let reference = field
        .eval_points_batch(&params, &points.iter().map(|p| p.map(|v| v as f32)).collect::<Vec<_>>())
        .unwrap();

    let mut ws = RayWorkspace::new(&field);
    for (p, want) in points.iter().zip(&reference) {
        for axis in 0..3 {
            for sign in [1.0, -1.0] {
                for (k, tk) in t.iter().enumerate() {
                    let mut direction = [0.0; 3];
                    direction[axis] = sign;
                    let mut origin = *p;
                    origin[axis] -= sign * tk;
                    let ray = Ray {
                        origin,
                        direction,
                        pixel: (0, 0),
                    };
                    assert_eq!(ray.at(*tk), *p);
                    let (s, _) = march_ray(&field, &params, &ray, &spec, &mut ws).unwrap();
                    assert!(s.active[k]);
                    assert_eq!(s.sigma[k], want.sigma);
                    assert_eq!(s.color[k], want.color);
                    assert_eq!(s.feature_of(k), &want.feature[..]);
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..points.len()).collect();
    order.shuffle(&mut rng);
    let shuffled: Vec<[f32; 3]> = order.iter().map(|&i| points[i].map(|v| v as f32)).collect();
    let again = field.eval_points_batch(&params, &shuffled).unwrap();
    for (j, &i) in order.iter().enumerate() {
        assert_eq!(again[j], reference[i]);
    }
}

#[test]
fn zero_density_field_classifies_everything_as_class_zero() {
    let (field, mut params) = trained_like_params(5);
    params.density_rgb.bias[0] = -1e4;
    for i in 0..params.density_rgb.inputs {
        params.density_rgb.weight[i * 4] = 0.0;
    }
    let spec_scene = SceneSpec {
        feature_dim: 8,
        ..SceneSpec::desk()
    };
    let catalog = synth::synthetic_catalog(
        (0..spec_scene.class_count()).map(|k| spec_scene.class_name(k)).collect(),
        8,
        1,
    )
    .unwrap();
    let pose = Pose::look_at([1.5, -1.0, 1.4], [0.0, 0.0, 0.6], [0.0, 0.0, 1.0]);
    let intr = CameraIntrinsics {
        fx: 10.0,
        fy: 10.0,
        cx: 5.0,
        cy: 4.0,
        width: 10,
        height: 8,
    };
    let view = ViewSpec {
        near: 0.05,
        far: 6.0,
        samples: 32,
        seed: Some(2),
    };
    let feats = segment::render_feature_map(&field, &params, &pose, &intr, &view).unwrap();
    assert!(feats.data.iter().all(|v| *v == 0.0));
    let classes = segment::classify_features(&feats, &catalog, segment::Similarity::Dot).unwrap();
    assert!(classes.classes.iter().all(|c| *c == 0));
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

// A one-object scene: a single ball in the room.
fn ball_scene() -> SceneSpec {
    let mut spec = SceneSpec {
        feature_dim: 8,
        ..SceneSpec::desk()
    };
    spec.primitives.retain(|p| p.class == 2);
    spec.primitives[0].class = 1;
    spec.class_names = vec![spec.class_names[0].clone(), spec.class_names[2].clone()];
    spec
}

#[test]
fn training_reduces_loss_tenfold_and_finds_the_object() {
    let intr = CameraIntrinsics {
        fx: 20.0,
        fy: 20.0,
        cx: 12.0,
        cy: 8.0,
        width: 24,
        height: 16,
    };
    let scene = synth::generate_dataset(&ball_scene(), 8, 0, &intr).unwrap();
    let ds = &scene.train;
    let grid = HashGridConfig::from_finest(4, 2, 12, 4, 32);
    let mlp = MlpConfig {
        trunk_layers: 2,
        trunk_width: 32,
        feature_dim: 8,
    };
    let field = Field::new(grid, mlp, ds.scene_bound).unwrap();
    let mut ratios = Vec::new();
    let mut hits = Vec::new();
    for seed in 0..3u64 {
        let cfg = TrainConfig {
            rays_per_iter: 256,
            iterations: 500,
            samples_per_ray: 32,
            seed,
            ..TrainConfig::default()
        };
        let (state, reports): (TrainState, _) = train::train(&field, ds, &cfg, None, |_, _| Ok(())).unwrap();
        ratios.push(reports[10].l_total / reports.last().unwrap().l_total);

        let frame = &ds.frames[0];
        let truth = &scene.train_classes[0];
        let view = ViewSpec {
            near: ds.near,
            far: ds.far,
            samples: 32,
            seed: None,
        };
        let feats = segment::render_feature_map(&field, &state.params, &frame.pose, &frame.intrinsics, &view).unwrap();
        let pred = segment::classify_features(&feats, &scene.catalog, segment::Similarity::Dot).unwrap();
        let on_ball: Vec<usize> = (0..truth.classes.len()).filter(|&i| truth.classes[i] == 1).collect();
        assert!(!on_ball.is_empty());
        let correct = on_ball.iter().filter(|&&i| pred.classes[i] == 1).count();
        hits.push(correct as f64 / on_ball.len() as f64);
    }
    let ratio = median(ratios.clone());
    assert!(ratio >= 10.0, "loss drop ratios {ratios:?}");
    let hit = median(hits.clone());
    assert!(hit >= 0.9, "ball pixel recall {hits:?}");
    eprintln!("loss drop {ratios:?}, ball recall {hits:?}");
}
