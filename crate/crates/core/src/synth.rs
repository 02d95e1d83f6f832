//! Analytic scenes of spheres and boxes inside a room, rendered exactly to
//! produce datasets with known depth, color, class and feature maps.
//!
//! Spec files use the `key = value` syntax of run configs:
//!
//! ```text
//! seed = 7
//! feature_dim = 16
//! room = -2 -2 0 2 2 2.5 color 0.8 0.78 0.72 class 0
//! prim.0 = sphere 0 0 1 0.25 color 0.9 0.1 0.1 class 1
//! prim.1 = box -0.6 -0.4 0 0.6 0.4 0.75 color 0.5 0.3 0.1 class 2
//! class.0 = wall
//! orbit.radius = 1.6
//! ```

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::camera::{self, CameraIntrinsics, Pose, Ray};
use crate::config;
use crate::dataset::{self, Dataset, Frame};
use crate::error::{Error, Result};
use crate::math::{self, Aabb, Vec3};
use crate::segment::{ClassMap, LabelCatalog, LABELS_FILE};
use crate::vlft::Tensor;

const LIGHT: Vec3 = [0.3, 0.5, 0.81];
const AMBIENT: f64 = 0.35;
const CATALOG_MAX_DOT: f64 = 0.2;
/// Hits closer than this to the ray origin are ignored.
const T_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    Sphere { center: Vec3, radius: f64 },
    Box(Aabb),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Primitive {
    pub shape: Shape,
    pub color: [f64; 3],
    pub class: usize,
}

/// Cameras sit on a jittered horizontal circle looking at `target`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Orbit {
    pub center: Vec3,
    pub radius: f64,
    pub target: Vec3,
    /// Maximum deviation of radius and height, meters.
    pub jitter: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub room: Aabb,
    pub wall_color: [f64; 3],
    pub wall_class: usize,
    pub primitives: Vec<Primitive>,
    /// Optional names indexed by class id; missing names become `class_<k>`.
    pub class_names: Vec<Option<String>>,
    pub feature_dim: usize,
    pub seed: u64,
    pub orbit: Orbit,
}

impl SceneSpec {
    /// A 4 x 4 x 2.5 m room with a table, a ball on it, a cabinet and a
    /// large ball on the floor.
    pub fn desk() -> Self {
        let prim = |shape, color, class| Primitive { shape, color, class };
        SceneSpec {
            room: Aabb::new([-2.0, -2.0, 0.0], [2.0, 2.0, 2.5]),
            wall_color: [0.8, 0.78, 0.72],
            wall_class: 0,
            primitives: vec![
                prim(Shape::Box(Aabb::new([-0.6, -0.4, 0.0], [0.6, 0.4, 0.75])), [0.55, 0.35, 0.15], 1),
                prim(Shape::Sphere { center: [0.1, 0.0, 1.0], radius: 0.25 }, [0.9, 0.15, 0.1], 2),
                prim(Shape::Box(Aabb::new([1.1, -1.9, 0.0], [1.9, -1.0, 1.2])), [0.2, 0.4, 0.8], 3),
                prim(Shape::Sphere { center: [-1.2, 1.1, 0.5], radius: 0.5 }, [0.2, 0.75, 0.3], 4),
            ],
            class_names: vec![
                Some("wall".into()),
                Some("table".into()),
                Some("ball".into()),
                Some("cabinet".into()),
                Some("plant pot".into()),
            ],
            feature_dim: 16,
            seed: 7,
            orbit: Orbit {
                center: [0.0, 0.0, 1.5],
                radius: 1.6,
                target: [0.0, 0.0, 0.6],
                jitter: 0.1,
            },
        }
    }

    pub fn class_count(&self) -> usize {
        1 + self
            .primitives
            .iter()
            .map(|p| p.class)
            .chain([self.wall_class])
            .max()
            .unwrap_or(0)
    }

    pub fn class_name(&self, k: usize) -> String {
        self.class_names
            .get(k)
            .cloned()
            .flatten()
            .unwrap_or_else(|| format!("class_{k}"))
    }

    pub fn validate(&self) -> Result<()> {
        if !self.room.is_valid() || (0..3).any(|k| self.room.max[k] <= self.room.min[k]) {
            return Err(Error::Generation(format!("room box {:?} is empty", self.room)));
        }
        if self.feature_dim == 0 {
            return Err(Error::Generation("feature_dim must be positive".into()));
        }
        let k = self.class_count();
        let mut used = vec![false; k];
        used[self.wall_class] = true;
        for (i, p) in self.primitives.iter().enumerate() {
            used[p.class] = true;
            let ok = match p.shape {
                Shape::Sphere { center, radius } => radius > 0.0 && self.room.contains(center),
                Shape::Box(b) => b.is_valid() && (0..3).all(|a| b.max[a] > b.min[a]),
            };
            if !ok {
                return Err(Error::Generation(format!("primitive {i} has degenerate geometry")));
            }
            if p.color.iter().any(|c| !(0.0..=1.0).contains(c)) {
                return Err(Error::Generation(format!("primitive {i} color outside [0, 1]")));
            }
        }
        if let Some(missing) = used.iter().position(|u| !u) {
            return Err(Error::Generation(format!("class ids must be dense; class {missing} is unused")));
        }
        if self.class_names.len() > k {
            return Err(Error::Generation(format!("names given for {} classes but only {k} exist", self.class_names.len())));
        }
        let mut names: Vec<String> = (0..k).map(|c| self.class_name(c)).collect();
        names.sort();
        names.dedup();
        if names.len() != k {
            return Err(Error::Generation("class names must be unique".into()));
        }
        if !(self.orbit.radius >= 0.0 && self.orbit.jitter >= 0.0) {
            return Err(Error::Generation("orbit radius and jitter must be non-negative".into()));
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        const FILE: &str = "scene spec";
        let mut spec = SceneSpec {
            primitives: Vec::new(),
            class_names: Vec::new(),
            ..SceneSpec::desk()
        };
        let mut prims: Vec<(usize, Primitive)> = Vec::new();
        let mut room_seen = false;
        let bad = |k: &str, why: String| Error::format(FILE, format!("{k}: {why}"));
        for (key, value) in config::parse_key_values(text, FILE)? {
            let k = key.as_str();
            match k {
                "seed" => spec.seed = value.parse().map_err(|e| bad(k, format!("{e}")))?,
                "feature_dim" => spec.feature_dim = value.parse().map_err(|e| bad(k, format!("{e}")))?,
                "room" => {
                    let (g, color, class) = parse_shape_body(&value).map_err(|e| bad(k, e))?;
                    if g.len() != 6 {
                        return Err(bad(k, "expected 6 coordinates".into()));
                    }
                    spec.room = Aabb::new([g[0], g[1], g[2]], [g[3], g[4], g[5]]);
                    spec.wall_color = color;
                    spec.wall_class = class;
                    room_seen = true;
                }
                "orbit.radius" => spec.orbit.radius = parse_vec(&value, 1).map_err(|e| bad(k, e))?[0],
                "orbit.jitter" => spec.orbit.jitter = parse_vec(&value, 1).map_err(|e| bad(k, e))?[0],
                "orbit.center" => spec.orbit.center = to3(&parse_vec(&value, 3).map_err(|e| bad(k, e))?),
                "orbit.target" => spec.orbit.target = to3(&parse_vec(&value, 3).map_err(|e| bad(k, e))?),
                _ => {
                    if let Some(idx) = k.strip_prefix("prim.") {
                        let idx: usize = idx.parse().map_err(|_| bad(k, "index must be an integer".into()))?;
                        if prims.iter().any(|(i, _)| *i == idx) {
                            return Err(bad(k, "defined twice".into()));
                        }
                        prims.push((idx, parse_primitive(&value).map_err(|e| bad(k, e))?));
                    } else if let Some(idx) = k.strip_prefix("class.") {
                        let idx: usize = idx.parse().map_err(|_| bad(k, "index must be an integer".into()))?;
                        if spec.class_names.len() <= idx {
                            spec.class_names.resize(idx + 1, None);
                        }
                        spec.class_names[idx] = Some(value.clone());
                    } else {
                        return Err(Error::format(FILE, format!("unknown key {k:?}")));
                    }
                }
            }
        }
        if !room_seen {
            return Err(Error::format(FILE, "missing key room"));
        }
        prims.sort_by_key(|(i, _)| *i);
        spec.primitives = prims.into_iter().map(|(_, p)| p).collect();
        spec.validate()?;
        Ok(spec)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Nearest surface hit along `ray`. Rays from inside the room always hit.
    pub fn intersect(&self, ray: &Ray) -> Option<Hit> {
        let mut best = room_exit(&self.room, ray).map(|(t, normal)| Hit {
            t,
            normal,
            color: self.wall_color,
            class: self.wall_class,
            surface: Surface::Room,
        });
        for (i, p) in self.primitives.iter().enumerate() {
            let hit = match p.shape {
                Shape::Sphere { center, radius } => sphere_hit(center, radius, ray),
                Shape::Box(b) => box_hit(&b, ray),
            };
            if let Some((t, normal)) = hit {
                if best.as_ref().is_none_or(|h| t < h.t) {
                    best = Some(Hit {
                        t,
                        normal,
                        color: p.color,
                        class: p.class,
                        surface: Surface::Primitive(i),
                    });
                }
            }
        }
        best
    }

    /// Whether `p` lies strictly inside some primitive or outside the room.
    fn blocked(&self, p: Vec3) -> Option<String> {
        if !self.room.contains(p) {
            return Some("outside the room".into());
        }
        for (i, prim) in self.primitives.iter().enumerate() {
            let inside = match prim.shape {
                Shape::Sphere { center, radius } => math::norm(math::sub(p, center)) <= radius,
                Shape::Box(b) => b.contains(p),
            };
            if inside {
                return Some(format!("inside primitive {i}"));
            }
        }
        None
    }

    /// Signed implicit surface value of `surface` at `p` (0 on the surface).
    pub fn implicit(&self, surface: Surface, p: Vec3) -> f64 {
        match surface {
            Surface::Room => -box_sdf(&self.room, p),
            Surface::Primitive(i) => match self.primitives[i].shape {
                Shape::Sphere { center, radius } => math::norm(math::sub(p, center)) - radius,
                Shape::Box(b) => box_sdf(&b, p),
            },
        }
    }
}

fn to3(v: &[f64]) -> Vec3 {
    [v[0], v[1], v[2]]
}

fn parse_vec(s: &str, n: usize) -> std::result::Result<Vec<f64>, String> {
    let v: Vec<f64> = s
        .split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|e| format!("{t:?}: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    if v.len() != n {
        return Err(format!("expected {n} numbers, got {}", v.len()));
    }
    Ok(v)
}

/// `<numbers...> color r g b class k`
fn parse_shape_body(s: &str) -> std::result::Result<(Vec<f64>, [f64; 3], usize), String> {
    let toks: Vec<&str> = s.split_whitespace().collect();
    let ci = toks.iter().position(|t| *t == "color").ok_or("missing `color`")?;
    let ki = toks.iter().position(|t| *t == "class").ok_or("missing `class`")?;
    if ki != ci + 4 || toks.len() != ki + 2 {
        return Err("expected `... color r g b class k`".into());
    }
    let nums = parse_vec(&toks[..ci].join(" "), ci)?;
    let color = to3(&parse_vec(&toks[ci + 1..ki].join(" "), 3)?);
    let class = toks[ki + 1].parse().map_err(|_| format!("bad class id {:?}", toks[ki + 1]))?;
    Ok((nums, color, class))
}

fn parse_primitive(s: &str) -> std::result::Result<Primitive, String> {
    let (kind, rest) = s.trim().split_once(char::is_whitespace).ok_or("expected a shape")?;
    let (g, color, class) = parse_shape_body(rest)?;
    let shape = match (kind, g.len()) {
        ("sphere", 4) => Shape::Sphere {
            center: [g[0], g[1], g[2]],
            radius: g[3],
        },
        ("box", 6) => Shape::Box(Aabb::new([g[0], g[1], g[2]], [g[3], g[4], g[5]])),
        ("sphere", _) => return Err("sphere needs x y z r".into()),
        ("box", _) => return Err("box needs minx miny minz maxx maxy maxz".into()),
        _ => return Err(format!("unknown shape {kind:?}")),
    };
    Ok(Primitive { shape, color, class })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Surface {
    Room,
    Primitive(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hit {
    /// Distance along the unit ray direction.
    pub t: f64,
    /// Unit normal facing the viewer's side of the surface.
    pub normal: Vec3,
    pub color: [f64; 3],
    pub class: usize,
    pub surface: Surface,
}

fn sphere_hit(center: Vec3, radius: f64, ray: &Ray) -> Option<(f64, Vec3)> {
    let oc = math::sub(ray.origin, center);
    let b = math::dot3(oc, ray.direction);
    let c = math::dot3(oc, oc) - radius * radius;
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    // Numerically stable smaller root.
    let q = -b - sq;
    let t = if q > T_EPS {
        q
    } else if -b + sq > T_EPS {
        -b + sq
    } else {
        return None;
    };
    let p = ray.at(t);
    Some((t, math::scale(math::sub(p, center), 1.0 / radius)))
}

fn slabs(b: &Aabb, ray: &Ray) -> ([f64; 3], [f64; 3]) {
    let mut lo = [0.0; 3];
    let mut hi = [0.0; 3];
    for k in 0..3 {
        let inv = 1.0 / ray.direction[k];
        let t0 = (b.min[k] - ray.origin[k]) * inv;
        let t1 = (b.max[k] - ray.origin[k]) * inv;
        lo[k] = t0.min(t1);
        hi[k] = t0.max(t1);
    }
    (lo, hi)
}

fn box_hit(b: &Aabb, ray: &Ray) -> Option<(f64, Vec3)> {
    let (lo, hi) = slabs(b, ray);
    let (axis, t_in) = (0..3).map(|k| (k, lo[k])).fold((0, f64::NEG_INFINITY), |a, x| if x.1 > a.1 { x } else { a });
    let t_out = hi.iter().cloned().fold(f64::INFINITY, f64::min);
    if t_in > t_out || t_in <= T_EPS {
        return None;
    }
    let mut n = [0.0; 3];
    n[axis] = -ray.direction[axis].signum();
    Some((t_in, n))
}

fn room_exit(b: &Aabb, ray: &Ray) -> Option<(f64, Vec3)> {
    let (_, hi) = slabs(b, ray);
    let (axis, t) = (0..3).map(|k| (k, hi[k])).fold((0, f64::INFINITY), |a, x| if x.1 < a.1 { x } else { a });
    if !(t > T_EPS && t.is_finite()) {
        return None;
    }
    let mut n = [0.0; 3];
    n[axis] = -ray.direction[axis].signum();
    Some((t, n))
}

fn box_sdf(b: &Aabb, p: Vec3) -> f64 {
    let mut outside: f64 = 0.0;
    let mut inside = f64::NEG_INFINITY;
    for k in 0..3 {
        let d = (b.min[k] - p[k]).max(p[k] - b.max[k]);
        outside += d.max(0.0).powi(2);
        inside = inside.max(d);
    }
    if outside > 0.0 {
        outside.sqrt()
    } else {
        inside
    }
}

pub fn shade(hit: &Hit) -> [f64; 3] {
    let l = math::normalize(LIGHT);
    let lambert = math::dot3(hit.normal, l).max(0.0);
    let k = AMBIENT + (1.0 - AMBIENT) * lambert;
    [
        (hit.color[0] * k).clamp(0.0, 1.0),
        (hit.color[1] * k).clamp(0.0, 1.0),
        (hit.color[2] * k).clamp(0.0, 1.0),
    ]
}

/// Exact per-pixel render of one view.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticView {
    pub height: usize,
    pub width: usize,
    pub rgb: Vec<[f64; 3]>,
    /// Plane depth (camera z); 0 where the ray escapes.
    pub depth: Vec<f64>,
    pub classes: Vec<u32>,
    pub surfaces: Vec<Option<Surface>>,
}

impl AnalyticView {
    pub fn rgb_tensor(&self) -> Tensor {
        Tensor {
            shape: vec![self.height, self.width, 3],
            data: self.rgb.iter().flat_map(|c| c.map(|v| v as f32)).collect(),
        }
    }

    pub fn depth_tensor(&self) -> Tensor {
        Tensor {
            shape: vec![self.height, self.width],
            data: self.depth.iter().map(|&d| d as f32).collect(),
        }
    }

    pub fn class_map(&self) -> ClassMap {
        ClassMap {
            height: self.height,
            width: self.width,
            classes: self.classes.clone(),
        }
    }

    /// H x W x D map with each pixel's class embedding.
    pub fn feature_tensor(&self, catalog: &LabelCatalog) -> Tensor {
        let d = catalog.dim();
        let mut data = Vec::with_capacity(self.classes.len() * d);
        for &c in &self.classes {
            data.extend_from_slice(catalog.embedding(c as usize));
        }
        Tensor {
            shape: vec![self.height, self.width, d],
            data,
        }
    }
}

pub fn analytic_render(spec: &SceneSpec, pose: &Pose, intr: &CameraIntrinsics) -> Result<AnalyticView> {
    intr.validate()?;
    let n = intr.pixel_count();
    let mut view = AnalyticView {
        height: intr.height,
        width: intr.width,
        rgb: Vec::with_capacity(n),
        depth: Vec::with_capacity(n),
        classes: Vec::with_capacity(n),
        surfaces: Vec::with_capacity(n),
    };
    for v in 0..intr.height {
        for u in 0..intr.width {
            let ray = camera::pixel_to_ray(intr, pose, u, v)?;
            match spec.intersect(&ray) {
                Some(hit) => {
                    view.rgb.push(shade(&hit));
                    view.depth.push(hit.t / camera::plane_to_ray_depth(intr, u, v));
                    view.classes.push(hit.class as u32);
                    view.surfaces.push(Some(hit.surface));
                }
                None => {
                    view.rgb.push([0.0; 3]);
                    view.depth.push(0.0);
                    view.classes.push(spec.wall_class as u32);
                    view.surfaces.push(None);
                }
            }
        }
    }
    Ok(view)
}

/// Random unit vectors with pairwise `|dot| <= 0.2`, one per class.
pub fn synthetic_catalog(names: Vec<String>, dim: usize, seed: u64) -> Result<LabelCatalog> {
    const MAX_TRIES: usize = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(names.len());
    for _ in 0..names.len() {
        let mut found = None;
        for _ in 0..MAX_TRIES {
            let v: Vec<f64> = (0..dim).map(|_| gaussian(&mut rng)).collect();
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if n < 1e-12 {
                continue;
            }
            let v: Vec<f64> = v.iter().map(|x| x / n).collect();
            let ok = out
                .iter()
                .all(|e| e.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>().abs() <= CATALOG_MAX_DOT);
            if ok {
                found = Some(v);
                break;
            }
        }
        match found {
            Some(v) => out.push(v),
            None => {
                return Err(Error::Generation(format!(
                    "cannot place {} near-orthogonal unit vectors in dimension {dim}",
                    names.len()
                )))
            }
        }
    }
    LabelCatalog::new(names, out.into_iter().map(|v| v.into_iter().map(|x| x as f32).collect()).collect())
}

fn gaussian<R: Rng>(rng: &mut R) -> f64 {
    // Box-Muller.
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Poses evenly spaced on the orbit with radius/height jitter; `phase` is a
/// fraction of the angular spacing.
pub fn orbit_poses(orbit: &Orbit, count: usize, phase: f64, seed: u64) -> Vec<Pose> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let theta = std::f64::consts::TAU * (i as f64 + phase) / count as f64;
            let (dr, dz) = if orbit.jitter > 0.0 {
                (rng.gen_range(-orbit.jitter..=orbit.jitter), rng.gen_range(-orbit.jitter..=orbit.jitter))
            } else {
                (0.0, 0.0)
            };
            let r = orbit.radius + dr;
            let eye = [
                orbit.center[0] + r * theta.cos(),
                orbit.center[1] + r * theta.sin(),
                orbit.center[2] + dz,
            ];
            Pose::look_at(eye, orbit.target, [0.0, 0.0, 1.0])
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedScene {
    pub train: Dataset,
    pub test: Dataset,
    pub catalog: LabelCatalog,
    pub train_classes: Vec<ClassMap>,
    pub test_classes: Vec<ClassMap>,
}

/// Renders train and test views. Test views sit halfway between train
/// views on the orbit and use their own jitter.
pub fn generate_dataset(spec: &SceneSpec, n_train: usize, n_test: usize, intr: &CameraIntrinsics) -> Result<GeneratedScene> {
    spec.validate()?;
    intr.validate()?;
    if n_train == 0 {
        return Err(Error::Generation("need at least one training view".into()));
    }
    let names = (0..spec.class_count()).map(|k| spec.class_name(k)).collect();
    let catalog = synthetic_catalog(names, spec.feature_dim, spec.seed)?;
    let train_poses = orbit_poses(&spec.orbit, n_train, 0.0, spec.seed.wrapping_add(1));
    let test_poses = orbit_poses(&spec.orbit, n_test, 0.5, spec.seed.wrapping_add(2));
    let bound = spec.room.expanded(0.05);
    let mut far: f64 = 0.0;
    for (i, p) in train_poses.iter().chain(&test_poses).enumerate() {
        let eye = p.translation();
        if let Some(why) = spec.blocked(eye) {
            return Err(Error::Generation(format!("camera {i} at {eye:?} is {why}")));
        }
        for c in 0..8 {
            let corner = [
                if c & 1 == 0 { spec.room.min[0] } else { spec.room.max[0] },
                if c & 2 == 0 { spec.room.min[1] } else { spec.room.max[1] },
                if c & 4 == 0 { spec.room.min[2] } else { spec.room.max[2] },
            ];
            far = far.max(math::norm(math::sub(corner, eye)));
        }
    }
    let make = |poses: &[Pose]| -> Result<(Dataset, Vec<ClassMap>)> {
        let mut frames = Vec::with_capacity(poses.len());
        let mut classes = Vec::with_capacity(poses.len());
        for pose in poses {
            let view = analytic_render(spec, pose, intr)?;
            frames.push(Frame {
                rgb: view.rgb_tensor(),
                depth: view.depth_tensor(),
                feature: Some(view.feature_tensor(&catalog)),
                pose: *pose,
                intrinsics: *intr,
            });
            classes.push(view.class_map());
        }
        let ds = Dataset {
            frames,
            near: dataset::DEFAULT_NEAR,
            far: 1.02 * far,
            scene_bound: bound,
        };
        Ok((ds, classes))
    };
    let (train, train_classes) = make(&train_poses)?;
    let (test, test_classes) = if n_test > 0 {
        make(&test_poses)?
    } else {
        (
            Dataset {
                frames: Vec::new(),
                ..train.clone()
            },
            Vec::new(),
        )
    };
    train.validate()?;
    if n_test > 0 {
        test.validate()?;
    }
    Ok(GeneratedScene {
        train,
        test,
        catalog,
        train_classes,
        test_classes,
    })
}

pub fn class_file(index: usize) -> String {
    dataset::frame_file(index, "class")
}

/// Writes `train/` and `test/` dataset directories (each with per-frame
/// `frame_%05d.class.vlft` ground truth) and `labels.tsv`.
pub fn write_generated(scene: &GeneratedScene, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    for (name, ds, classes) in [
        ("train", &scene.train, &scene.train_classes),
        ("test", &scene.test, &scene.test_classes),
    ] {
        if ds.frames.is_empty() {
            continue;
        }
        let dir = out.join(name);
        dataset::save_dataset(ds, &dir)?;
        for (i, c) in classes.iter().enumerate() {
            c.to_tensor().write_file(&dir.join(class_file(i)))?;
        }
    }
    scene.catalog.write(&out.join(LABELS_FILE))
}

/// Reads the ground-truth class maps written next to a dataset.
pub fn read_class_maps(dir: &Path, count: usize) -> Result<Vec<ClassMap>> {
    (0..count)
        .map(|i| ClassMap::from_tensor(&Tensor::read_file(&dir.join(class_file(i)))?))
        .collect()
}
