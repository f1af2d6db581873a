//! Labelled synthetic scenes: a spherical fruit body with a curved tubular
//! peduncle attached at its top pole. Geometry is analytic so normals and
//! labels are known exactly.

use std::f64::consts::PI;

use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cloud_io::{CloudPoint, ColourRgb, PepperColour, PointCloud, PointLabel};
use crate::features::{hsv_to_rgb, ColourHsv};

#[derive(Debug, Error, PartialEq)]
#[error("invalid scene spec: {0}")]
pub struct SceneSpecError(pub String);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSpec {
    pub body_radius: f64,
    pub peduncle_radius: f64,
    pub peduncle_length: f64,
    /// Curvature of the peduncle's centre line, 1/m. Zero gives a straight stem.
    pub peduncle_curvature: f64,
    pub body_hue: f64,
    pub peduncle_hue: f64,
    /// Per-channel Gaussian noise in 8-bit channel units.
    pub colour_noise_std: f64,
    pub position_noise_std: f64,
    pub points_body: usize,
    pub points_peduncle: usize,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            body_radius: 0.04,
            peduncle_radius: 0.005,
            peduncle_length: 0.04,
            peduncle_curvature: 25.0,
            body_hue: 0.0,
            peduncle_hue: 1.0 / 3.0,
            colour_noise_std: 8.0,
            position_noise_std: 0.001,
            points_body: 5000,
            points_peduncle: 1000,
            seed: 0,
        }
    }
}

impl SceneSpec {
    /// Default geometry with hues typical of the given pepper colour.
    /// Green peppers share the peduncle's hue, so only geometry separates them.
    pub fn for_colour(colour: PepperColour) -> Self {
        let body_hue = match colour {
            PepperColour::Red => 0.0,
            PepperColour::Green => 1.0 / 3.0,
            PepperColour::Mixed => 1.0 / 6.0,
        };
        Self {
            body_hue,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SceneSpecError> {
        let positive = [
            ("body_radius", self.body_radius),
            ("peduncle_radius", self.peduncle_radius),
            ("peduncle_length", self.peduncle_length),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(SceneSpecError(format!("{name} must be > 0, got {v}")));
            }
        }
        for (name, v) in [
            ("colour_noise_std", self.colour_noise_std),
            ("position_noise_std", self.position_noise_std),
            ("peduncle_curvature", self.peduncle_curvature),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(SceneSpecError(format!("{name} must be >= 0, got {v}")));
            }
        }
        for (name, v) in [("body_hue", self.body_hue), ("peduncle_hue", self.peduncle_hue)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(SceneSpecError(format!("{name} must be in [0, 1], got {v}")));
            }
        }
        if self.points_body == 0 || self.points_peduncle == 0 {
            return Err(SceneSpecError("point counts must be > 0".into()));
        }
        Ok(())
    }
}

/// Point and outward unit normal on the peduncle tube at arc length `s` and
/// polar angle `phi`. The centre line starts at `base` heading along +z and
/// bends towards `bend` (a unit vector in the xy-plane).
pub fn peduncle_surface(spec: &SceneSpec, base: &Point3<f64>, bend: &Vector3<f64>, s: f64, phi: f64) -> (Point3<f64>, Vector3<f64>) {
    let k = spec.peduncle_curvature;
    let z = Vector3::z();
    let (centre, tangent, normal) = if k > 0.0 {
        let a = k * s;
        let centre = base + z * (a.sin() / k) + bend * ((1.0 - a.cos()) / k);
        let tangent = z * a.cos() + bend * a.sin();
        let normal = bend * a.cos() - z * a.sin();
        (centre, tangent, normal)
    } else {
        (base + z * s, z, *bend)
    };
    let binormal = tangent.cross(&normal);
    let radial = normal * phi.cos() + binormal * phi.sin();
    (centre + radial * spec.peduncle_radius, radial)
}

pub fn generate_scene(spec: &SceneSpec) -> Result<PointCloud, SceneSpecError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let pos_noise = Normal::new(0.0, spec.position_noise_std).expect("validated std");
    let col_noise = Normal::new(0.0, spec.colour_noise_std).expect("validated std");

    let body_rgb = hsv_to_rgb(ColourHsv { h: spec.body_hue, s: 1.0, v: 1.0 });
    let ped_rgb = hsv_to_rgb(ColourHsv { h: spec.peduncle_hue, s: 1.0, v: 1.0 });

    let noisy_colour = |rng: &mut ChaCha8Rng, c: ColourRgb| -> ColourRgb {
        if spec.colour_noise_std == 0.0 {
            return c;
        }
        let mut ch = |v: u8| (f64::from(v) + col_noise.sample(rng)).round().clamp(0.0, 255.0) as u8;
        ColourRgb::new(ch(c.r), ch(c.g), ch(c.b))
    };
    let jitter = |rng: &mut ChaCha8Rng, p: Point3<f64>| -> Point3<f64> {
        if spec.position_noise_std == 0.0 {
            return p;
        }
        p + Vector3::new(pos_noise.sample(rng), pos_noise.sample(rng), pos_noise.sample(rng))
    };

    let mut points = Vec::with_capacity(spec.points_body + spec.points_peduncle);
    for _ in 0..spec.points_body {
        let z: f64 = rng.random_range(-1.0..=1.0);
        let t: f64 = rng.random_range(0.0..2.0 * PI);
        let r = (1.0 - z * z).max(0.0).sqrt();
        let dir = Vector3::new(r * t.cos(), r * t.sin(), z);
        let p = jitter(&mut rng, Point3::from(dir * spec.body_radius));
        let c = noisy_colour(&mut rng, body_rgb);
        points.push(CloudPoint::new(p, c, PointLabel::Pepper));
    }

    let azimuth: f64 = rng.random_range(0.0..2.0 * PI);
    let bend = Vector3::new(azimuth.cos(), azimuth.sin(), 0.0);
    let base = Point3::new(0.0, 0.0, spec.body_radius);
    for _ in 0..spec.points_peduncle {
        let s = rng.random_range(0.0..=spec.peduncle_length);
        let phi = rng.random_range(0.0..2.0 * PI);
        let (p, _) = peduncle_surface(spec, &base, &bend, s, phi);
        let p = jitter(&mut rng, p);
        let c = noisy_colour(&mut rng, ped_rgb);
        points.push(CloudPoint::new(p, c, PointLabel::Peduncle));
    }
    Ok(PointCloud {
        points,
        frame_id: format!("synth_{}", spec.seed),
    })
}
