//! Indoor scene construction: room, ceiling LED grid, wall ORIS panel,
//! receivers on the work plane, and pairwise link geometry.

use nalgebra::Vector3;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

const UNIT_TOLERANCE: f64 = 1e-12;
const BOX_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoomBox {
    pub width_m: f64,
    pub length_m: f64,
    pub height_m: f64,
}

impl RoomBox {
    pub fn new(width_m: f64, length_m: f64, height_m: f64) -> Result<Self> {
        for (name, v) in [("room_width", width_m), ("room_length", length_m), ("room_height", height_m)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be strictly positive, got {v}")));
            }
        }
        Ok(Self { width_m, length_m, height_m })
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (-BOX_SLACK..=self.width_m + BOX_SLACK).contains(&p.x)
            && (-BOX_SLACK..=self.length_m + BOX_SLACK).contains(&p.y)
            && (-BOX_SLACK..=self.height_m + BOX_SLACK).contains(&p.z)
    }
}

impl Default for RoomBox {
    fn default() -> Self {
        Self { width_m: 4.0, length_m: 4.0, height_m: 3.0 }
    }
}

/// Anything with a position and a facing direction.
pub trait Mounted {
    fn position(&self) -> Vec3;
    fn normal(&self) -> Vec3;
}

macro_rules! mounted_type {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq)]
        pub struct $name {
            pub position: Vec3,
            pub normal: Vec3,
        }

        impl $name {
            /// Fails unless `normal` has unit length.
            pub fn new(position: Vec3, normal: Vec3) -> Result<Self> {
                if (normal.norm() - 1.0).abs() > UNIT_TOLERANCE {
                    return Err(Error::Geometry(format!(
                        "{} normal must have unit length, got {}",
                        stringify!($name),
                        normal.norm()
                    )));
                }
                Ok(Self { position, normal })
            }
        }

        impl Mounted for $name {
            fn position(&self) -> Vec3 {
                self.position
            }
            fn normal(&self) -> Vec3 {
                self.normal
            }
        }
    };
}

mounted_type!(
    /// A ceiling LED.
    Luminaire
);
mounted_type!(
    /// One mirror element of the ORIS panel.
    OrisElement
);
mounted_type!(
    /// A single-photodiode user terminal.
    Receiver
);

/// Which wall carries the ORIS panel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Wall {
    #[default]
    YMin,
    YMax,
    XMin,
    XMax,
}

impl std::str::FromStr for Wall {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "y0" | "y_min" => Ok(Wall::YMin),
            "y_max" => Ok(Wall::YMax),
            "x0" | "x_min" => Ok(Wall::XMin),
            "x_max" => Ok(Wall::XMax),
            other => Err(Error::Config(format!("oris_wall: unknown wall {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub room: RoomBox,
    pub leds: Vec<Luminaire>,
    pub oris: Vec<OrisElement>,
    pub users: Vec<Receiver>,
}

impl Scene {
    pub fn new(room: RoomBox, leds: Vec<Luminaire>, oris: Vec<OrisElement>, users: Vec<Receiver>) -> Result<Self> {
        if leds.is_empty() {
            return Err(Error::Config("scene needs at least one LED".into()));
        }
        if users.is_empty() {
            return Err(Error::Config("scene needs at least one user".into()));
        }
        let positions = leds
            .iter()
            .map(|l| l.position)
            .chain(oris.iter().map(|e| e.position))
            .chain(users.iter().map(|u| u.position));
        for p in positions {
            if !room.contains(&p) {
                return Err(Error::Geometry(format!("position {p:?} lies outside the room")));
            }
        }
        Ok(Self { room, leds, oris, users })
    }

    pub fn num_leds(&self) -> usize {
        self.leds.len()
    }

    pub fn num_elements(&self) -> usize {
        self.oris.len()
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }
}

/// Offsets of `n` points spaced `spacing` apart, centred on zero.
fn centred_offsets(n: usize, spacing: f64) -> impl Iterator<Item = f64> {
    let half = (n as f64 - 1.0) / 2.0;
    (0..n).map(move |i| (i as f64 - half) * spacing)
}

/// Row-major `rows × cols` LED grid centred on the ceiling, facing down.
/// Rows run along y, columns along x.
pub fn build_led_grid(room: &RoomBox, rows: usize, cols: usize, spacing_m: f64) -> Result<Vec<Luminaire>> {
    if rows == 0 || cols == 0 {
        return Err(Error::Config("LED grid needs at least one row and one column".into()));
    }
    if !(spacing_m.is_finite() && spacing_m >= 0.0) {
        return Err(Error::Config(format!("led_spacing must be nonnegative, got {spacing_m}")));
    }
    let span_x = (cols as f64 - 1.0) * spacing_m;
    let span_y = (rows as f64 - 1.0) * spacing_m;
    if span_x > room.width_m || span_y > room.length_m {
        return Err(Error::Config(format!(
            "LED grid footprint {span_x} m × {span_y} m exceeds the {} m × {} m ceiling",
            room.width_m, room.length_m
        )));
    }
    let (cx, cy) = (room.width_m / 2.0, room.length_m / 2.0);
    let down = Vec3::new(0.0, 0.0, -1.0);
    let ys: Vec<f64> = centred_offsets(rows, spacing_m).collect();
    let xs: Vec<f64> = centred_offsets(cols, spacing_m).collect();
    Ok(ys
        .iter()
        .flat_map(|dy| {
            xs.iter().map(move |dx| Luminaire { position: Vec3::new(cx + dx, cy + dy, room.height_m), normal: down })
        })
        .collect())
}

/// Row-major ORIS panel centred horizontally on `wall`. Rows run upward
/// (ascending z); columns run along the wall.
pub fn build_oris_grid(
    room: &RoomBox,
    wall: Wall,
    rows: usize,
    cols: usize,
    spacing_m: f64,
    center_height_m: f64,
) -> Result<Vec<OrisElement>> {
    if rows == 0 || cols == 0 {
        return Ok(Vec::new());
    }
    let wall_width = match wall {
        Wall::YMin | Wall::YMax => room.width_m,
        Wall::XMin | Wall::XMax => room.length_m,
    };
    let half_w = (cols as f64 - 1.0) * spacing_m / 2.0;
    let half_h = (rows as f64 - 1.0) * spacing_m / 2.0;
    if half_w * 2.0 > wall_width || center_height_m - half_h < 0.0 || center_height_m + half_h > room.height_m {
        return Err(Error::Config(format!(
            "ORIS panel {rows}×{cols} at pitch {spacing_m} m and height {center_height_m} m exceeds the wall"
        )));
    }
    let zs: Vec<f64> = centred_offsets(rows, spacing_m).map(|d| center_height_m + d).collect();
    let us: Vec<f64> = centred_offsets(cols, spacing_m).map(|d| wall_width / 2.0 + d).collect();
    let place = |u: f64, z: f64| -> OrisElement {
        let (position, normal) = match wall {
            Wall::YMin => (Vec3::new(u, 0.0, z), Vec3::new(0.0, 1.0, 0.0)),
            Wall::YMax => (Vec3::new(u, room.length_m, z), Vec3::new(0.0, -1.0, 0.0)),
            Wall::XMin => (Vec3::new(0.0, u, z), Vec3::new(1.0, 0.0, 0.0)),
            Wall::XMax => (Vec3::new(room.width_m, u, z), Vec3::new(-1.0, 0.0, 0.0)),
        };
        OrisElement { position, normal }
    };
    Ok(zs.iter().flat_map(|&z| us.iter().map(move |&u| place(u, z))).collect())
}

/// Uniformly places `count` upward-facing receivers on the work plane.
pub fn sample_users(room: &RoomBox, count: usize, workplane_height_m: f64, seed: u64) -> Result<Vec<Receiver>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_users_with(room, count, workplane_height_m, &mut rng)
}

pub fn sample_users_with<R: Rng + ?Sized>(
    room: &RoomBox,
    count: usize,
    workplane_height_m: f64,
    rng: &mut R,
) -> Result<Vec<Receiver>> {
    if count == 0 {
        return Err(Error::Config("users must be at least 1".into()));
    }
    if !(workplane_height_m > 0.0 && workplane_height_m < room.height_m) {
        return Err(Error::Config(format!(
            "workplane_height must lie in (0, {}), got {workplane_height_m}",
            room.height_m
        )));
    }
    let up = Vec3::new(0.0, 0.0, 1.0);
    Ok((0..count)
        .map(|_| {
            let x = rng.random_range(0.0..room.width_m);
            let y = rng.random_range(0.0..room.length_m);
            Receiver { position: Vec3::new(x, y, workplane_height_m), normal: up }
        })
        .collect())
}

/// Distance and angles of a directed link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkGeometry {
    pub distance_m: f64,
    /// Angle between the source normal and the outgoing ray.
    pub emit_angle_rad: f64,
    /// Angle between the destination normal and the reversed ray.
    pub incidence_angle_rad: f64,
}

impl LinkGeometry {
    pub fn cos_emit(&self) -> f64 {
        self.emit_angle_rad.cos()
    }

    pub fn cos_incidence(&self) -> f64 {
        self.incidence_angle_rad.cos()
    }
}

fn angle_between(a: &Vec3, b: &Vec3) -> f64 {
    let c = a.dot(b) / (a.norm() * b.norm());
    c.clamp(-1.0, 1.0).acos()
}

pub fn link_geometry(src_pos: &Vec3, src_normal: &Vec3, dst_pos: &Vec3, dst_normal: &Vec3) -> Result<LinkGeometry> {
    let ray = dst_pos - src_pos;
    let distance_m = ray.norm();
    if distance_m == 0.0 {
        return Err(Error::Geometry(format!("coincident positions at {src_pos:?}")));
    }
    Ok(LinkGeometry {
        distance_m,
        emit_angle_rad: angle_between(src_normal, &ray),
        incidence_angle_rad: angle_between(dst_normal, &(-ray)),
    })
}

pub fn link_between(src: &impl Mounted, dst: &impl Mounted) -> Result<LinkGeometry> {
    link_geometry(&src.position(), &src.normal(), &dst.position(), &dst.normal())
}
