//! Procedural RGB-D scene generator.
//!
//! Scenes are a camera inside a room (indoor profile) or above a ground plane
//! (outdoor profile) with 3-10 random boxes and ellipsoids. Depth is the
//! analytic ray-intersection distance projected onto the camera axis
//! (focal-plane depth). RGB is Lambertian shading from depth-derived normals
//! multiplied by a per-object screen-space albedo texture, so texture edges
//! are deliberately decorrelated from geometry edges.

use crate::error::{Error, Result};
use crate::raster::{DepthMap, DomainTag, RgbImage, Sample, ValidityMask};
use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const OUTDOOR_FAR_PLANE: f32 = 80.0;
/// Spatial downsampling factor of the latent codec; generated sizes must divide it.
pub const CODEC_FACTOR: usize = 4;

#[derive(Debug, Clone, Copy, Default)]
pub struct GenOptions {
    /// When set, masks are random sparse with this valid fraction instead of all-true.
    pub sparse_valid_fraction: Option<f32>,
}

#[derive(Clone, Copy)]
struct Vec3 {
    x: f64,
    y: f64,
    z: f64,
}

impl Vec3 {
    fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }
    fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }
    fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }
    fn scale(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
    fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }
    fn normalized(self) -> Vec3 {
        self.scale(1.0 / self.norm())
    }
}

enum Shape {
    /// Axis-aligned box given by min/max corners.
    Box { lo: Vec3, hi: Vec3 },
    /// Axis-aligned ellipsoid with center and per-axis radii.
    Ellipsoid { center: Vec3, radii: Vec3 },
}

impl Shape {
    /// Nearest positive ray parameter, camera at origin.
    fn hit(&self, dir: Vec3) -> Option<f64> {
        match self {
            Shape::Box { lo, hi } => {
                let mut t_near = f64::NEG_INFINITY;
                let mut t_far = f64::INFINITY;
                for (d, l, h) in [(dir.x, lo.x, hi.x), (dir.y, lo.y, hi.y), (dir.z, lo.z, hi.z)] {
                    if d.abs() < 1e-12 {
                        if 0.0 < l || 0.0 > h {
                            return None;
                        }
                    } else {
                        let mut t0 = l / d;
                        let mut t1 = h / d;
                        if t0 > t1 {
                            std::mem::swap(&mut t0, &mut t1);
                        }
                        t_near = t_near.max(t0);
                        t_far = t_far.min(t1);
                    }
                }
                if t_near <= t_far && t_near > 1e-4 {
                    Some(t_near)
                } else {
                    None
                }
            }
            Shape::Ellipsoid { center, radii } => {
                let o = Vec3::new(-center.x / radii.x, -center.y / radii.y, -center.z / radii.z);
                let d = Vec3::new(dir.x / radii.x, dir.y / radii.y, dir.z / radii.z);
                let a = d.dot(d);
                let b = 2.0 * o.dot(d);
                let c = o.dot(o) - 1.0;
                let disc = b * b - 4.0 * a * c;
                if disc < 0.0 {
                    return None;
                }
                let sq = disc.sqrt();
                let t0 = (-b - sq) / (2.0 * a);
                let t1 = (-b + sq) / (2.0 * a);
                if t0 > 1e-4 {
                    Some(t0)
                } else if t1 > 1e-4 {
                    Some(t1)
                } else {
                    None
                }
            }
        }
    }
}

enum Texture {
    Solid,
    /// Screen-space sine stripes: frequency pair, phase.
    Stripes { fu: f64, fv: f64, phase: f64 },
    /// Screen-space checkerboard with the given cell size.
    Checker { cell: f64 },
}

struct Material {
    base: [f64; 3],
    alt: [f64; 3],
    texture: Texture,
}

impl Material {
    fn albedo(&self, i: usize, j: usize) -> [f64; 3] {
        let mix = match self.texture {
            Texture::Solid => 0.0,
            Texture::Stripes { fu, fv, phase } => {
                0.5 + 0.5 * (fu * j as f64 + fv * i as f64 + phase).sin()
            }
            Texture::Checker { cell } => {
                let a = (j as f64 / cell).floor() as i64 + (i as f64 / cell).floor() as i64;
                if a.rem_euclid(2) == 0 {
                    0.0
                } else {
                    1.0
                }
            }
        };
        [
            self.base[0] * (1.0 - mix) + self.alt[0] * mix,
            self.base[1] * (1.0 - mix) + self.alt[1] * mix,
            self.base[2] * (1.0 - mix) + self.alt[2] * mix,
        ]
    }
}

fn random_material(rng: &mut ChaCha8Rng) -> Material {
    let base = [
        rng.gen_range(0.15..0.95),
        rng.gen_range(0.15..0.95),
        rng.gen_range(0.15..0.95),
    ];
    let alt = [
        rng.gen_range(0.15..0.95),
        rng.gen_range(0.15..0.95),
        rng.gen_range(0.15..0.95),
    ];
    let texture = match rng.gen_range(0..3u32) {
        0 => Texture::Solid,
        1 => Texture::Stripes {
            fu: rng.gen_range(0.2..1.6),
            fv: rng.gen_range(0.0..0.8),
            phase: rng.gen_range(0.0..std::f64::consts::TAU),
        },
        _ => Texture::Checker {
            cell: rng.gen_range(3.0..10.0),
        },
    };
    Material { base, alt, texture }
}

struct Room {
    half_x: f64,
    floor_y: f64,
    ceil_y: f64,
    back_z: f64,
}

impl Room {
    /// Exit distance along `dir` from the origin; the camera sits inside the
    /// room so every forward ray hits a face.
    fn hit(&self, dir: Vec3) -> f64 {
        let mut t = f64::INFINITY;
        if dir.x > 1e-12 {
            t = t.min(self.half_x / dir.x);
        } else if dir.x < -1e-12 {
            t = t.min(-self.half_x / dir.x);
        }
        if dir.y > 1e-12 {
            t = t.min(self.floor_y / dir.y);
        } else if dir.y < -1e-12 {
            t = t.min(-self.ceil_y / dir.y);
        }
        if dir.z > 1e-12 {
            t = t.min(self.back_z / dir.z);
        }
        t
    }
}

pub fn generate_scene(seed: u64, profile: DomainTag, size: (usize, usize)) -> Result<Sample> {
    generate_scene_opts(seed, profile, size, GenOptions::default())
}

pub fn generate_scene_opts(
    seed: u64,
    profile: DomainTag,
    size: (usize, usize),
    opts: GenOptions,
) -> Result<Sample> {
    let (h, w) = size;
    if h < 32 || w < 32 {
        return Err(Error::Config(format!(
            "scene size {h}x{w} below the 32x32 minimum"
        )));
    }
    if h % CODEC_FACTOR != 0 || w % CODEC_FACTOR != 0 {
        return Err(Error::Config(format!(
            "scene size {h}x{w} not divisible by codec factor {CODEC_FACTOR}"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(match profile {
        DomainTag::IndoorLike => 0x1,
        DomainTag::OutdoorLike => 0x2,
    });

    // Pinhole camera looking down +z; y points down in image space.
    let fov = rng.gen_range(55.0f64..70.0).to_radians();
    let fx = 0.5 * w as f64 / (fov / 2.0).tan();
    let fy = fx;
    let cx = w as f64 / 2.0;
    let cy = h as f64 / 2.0;

    let (room, ground_y, far_plane) = match profile {
        DomainTag::IndoorLike => {
            let room = Room {
                half_x: rng.gen_range(1.2..3.5),
                floor_y: rng.gen_range(0.9..1.8),
                ceil_y: rng.gen_range(0.9..1.8),
                back_z: rng.gen_range(4.0..8.5),
            };
            let floor = room.floor_y;
            (Some(room), floor, 10.0f32)
        }
        DomainTag::OutdoorLike => (None, rng.gen_range(1.2..2.0), OUTDOOR_FAR_PLANE),
    };

    let n_objects = rng.gen_range(3..=10usize);
    let mut shapes: Vec<Shape> = Vec::with_capacity(n_objects);
    for _ in 0..n_objects {
        let (z_lo, z_hi, s_lo, s_hi) = match profile {
            DomainTag::IndoorLike => {
                let back = room.as_ref().unwrap().back_z;
                (1.4, (back - 0.6).max(1.8), 0.12, 0.55)
            }
            DomainTag::OutdoorLike => (4.0, 60.0, 0.4, 2.2),
        };
        let z = rng.gen_range(z_lo..z_hi);
        // Lateral placement stays inside the view frustum at this depth.
        let x_span = match &room {
            Some(r) => (r.half_x - 0.2).min(0.55 * z),
            None => 0.55 * z,
        };
        let x = rng.gen_range(-x_span..x_span);
        let sx = rng.gen_range(s_lo..s_hi);
        let sy = rng.gen_range(s_lo..s_hi);
        let sz = rng.gen_range(s_lo..s_hi);
        // Objects rest on the ground plane.
        let cy_obj = ground_y - sy;
        let center = Vec3::new(x, cy_obj, z);
        let shape = if rng.gen_bool(0.5) {
            Shape::Box {
                lo: Vec3::new(center.x - sx, center.y - sy, center.z - sz),
                hi: Vec3::new(center.x + sx, center.y + sy, center.z + sz),
            }
        } else {
            Shape::Ellipsoid {
                center,
                radii: Vec3::new(sx, sy, sz),
            }
        };
        shapes.push(shape);
    }

    // Materials: id 0 is the background (room/ground/sky), ids 1.. the objects.
    let mut materials = Vec::with_capacity(n_objects + 1);
    for _ in 0..=n_objects {
        materials.push(random_material(&mut rng));
    }

    // Light from the upper hemisphere (negative y points up).
    let light = Vec3::new(
        rng.gen_range(-0.6..0.6),
        rng.gen_range(-1.0..-0.4),
        rng.gen_range(-0.6..0.3),
    )
    .normalized();
    let ambient = 0.25;

    let mut depth64 = Array2::<f64>::zeros((h, w));
    let mut object_id = Array2::<usize>::zeros((h, w));
    for i in 0..h {
        for j in 0..w {
            let dir = Vec3::new(
                (j as f64 + 0.5 - cx) / fx,
                (i as f64 + 0.5 - cy) / fy,
                1.0,
            )
            .normalized();
            let mut best_t = match &room {
                Some(r) => r.hit(dir),
                None => {
                    if dir.y > 1e-6 {
                        ground_y / dir.y
                    } else {
                        f64::INFINITY
                    }
                }
            };
            let mut best_id = 0usize;
            for (k, s) in shapes.iter().enumerate() {
                if let Some(t) = s.hit(dir) {
                    if t < best_t {
                        best_t = t;
                        best_id = k + 1;
                    }
                }
            }
            // Focal-plane depth: z component of the hit point. Sky rays
            // (outdoor, no hit) land on the far plane.
            let z = if best_t.is_finite() {
                (best_t * dir.z).min(far_plane as f64)
            } else {
                far_plane as f64
            };
            depth64[[i, j]] = z;
            object_id[[i, j]] = best_id;
        }
    }

    // Depth-derived normals via central differences on back-projected points.
    let point = |i: usize, j: usize| -> Vec3 {
        let z = depth64[[i, j]];
        Vec3::new(
            (j as f64 + 0.5 - cx) / fx * z,
            (i as f64 + 0.5 - cy) / fy * z,
            z,
        )
    };
    let mut rgb = Array3::<f32>::zeros((h, w, 3));
    for i in 0..h {
        for j in 0..w {
            let jl = j.saturating_sub(1);
            let jr = (j + 1).min(w - 1);
            let iu = i.saturating_sub(1);
            let id = (i + 1).min(h - 1);
            let du = point(i, jr).sub(point(i, jl));
            let dv = point(id, j).sub(point(iu, j));
            let n = du.cross(dv);
            let shade = if n.norm() > 1e-12 {
                let n = n.normalized();
                // Orient the normal toward the camera.
                let n = if n.z > 0.0 { n.scale(-1.0) } else { n };
                ambient + (1.0 - ambient) * n.dot(light).max(0.0)
            } else {
                ambient
            };
            let albedo = materials[object_id[[i, j]]].albedo(i, j);
            for c in 0..3 {
                rgb[[i, j, c]] = (albedo[c] * shade).clamp(0.0, 1.0) as f32;
            }
        }
    }

    let depth = DepthMap(depth64.mapv(|v| v as f32));
    let mask = match opts.sparse_valid_fraction {
        Some(p) => {
            let p = p.clamp(0.0, 1.0) as f64;
            ValidityMask(Array2::from_shape_fn((h, w), |_| rng.gen_bool(p)))
        }
        None => ValidityMask::all_true(h, w),
    };

    let sample = Sample {
        rgb: RgbImage(rgb),
        depth,
        mask,
        domain_tag: profile,
        far_plane,
    };
    sample.validate()?;
    Ok(sample)
}
