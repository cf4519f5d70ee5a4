use std::io::{self, Read, Write};

use super::kinematics::Pose;
use super::map::MazeMap;
use super::raycast::{cast_ray, RayError, RayHit, Side};

pub const OBS_WIDTH: usize = 64;
pub const OBS_HEIGHT: usize = 48;
pub const OBS_CHANNELS: usize = 3;
pub const OBS_LEN: usize = OBS_WIDTH * OBS_HEIGHT * OBS_CHANNELS;

pub const PPM_HEADER: &[u8] = b"P6\n64 48\n255\n";

/// Wall colors by id.
pub const WALL_PALETTE: [[u8; 3]; 7] = [
    [200, 200, 200],
    [220, 60, 50],
    [60, 180, 75],
    [50, 90, 220],
    [235, 200, 40],
    [170, 70, 200],
    [40, 200, 210],
];
pub const CEILING_COLOR: [u8; 3] = [40, 40, 56];
pub const FLOOR_COLOR: [u8; 3] = [96, 84, 72];

const NS_SHADE: f64 = 0.8;
const DISTANCE_FALLOFF: f64 = 0.3;

/// Camera parameters shared by every rendered frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Camera {
    pub fov: f64,
}

impl Default for Camera {
    fn default() -> Self {
        Self { fov: 1.3 }
    }
}

/// 64x48 RGB image, row-major from the top, channels interleaved.
#[derive(Clone, PartialEq, Eq)]
pub struct Observation {
    bytes: Box<[u8]>,
}

impl std::fmt::Debug for Observation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Observation({} bytes)", self.bytes.len())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ObservationError {
    #[error("observation must be {OBS_LEN} bytes, got {0}")]
    Length(usize),
    #[error("not a 64x48 binary PPM")]
    BadHeader,
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Observation {
    pub fn from_bytes(bytes: Vec<u8>) -> Result<Self, ObservationError> {
        if bytes.len() != OBS_LEN {
            return Err(ObservationError::Length(bytes.len()));
        }
        Ok(Self {
            bytes: bytes.into_boxed_slice(),
        })
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * OBS_WIDTH + x) * OBS_CHANNELS;
        [self.bytes[i], self.bytes[i + 1], self.bytes[i + 2]]
    }

    /// Left-right mirror image.
    pub fn mirrored(&self) -> Self {
        let mut out = vec![0u8; OBS_LEN];
        for y in 0..OBS_HEIGHT {
            for x in 0..OBS_WIDTH {
                let src = (y * OBS_WIDTH + x) * OBS_CHANNELS;
                let dst = (y * OBS_WIDTH + OBS_WIDTH - 1 - x) * OBS_CHANNELS;
                out[dst..dst + 3].copy_from_slice(&self.bytes[src..src + 3]);
            }
        }
        Self {
            bytes: out.into_boxed_slice(),
        }
    }

    /// Channel-major floats in `[0, 1]`, shape `[3, 48, 64]`.
    pub fn to_chw(&self) -> Vec<f32> {
        let plane = OBS_WIDTH * OBS_HEIGHT;
        let mut out = vec![0.0f32; OBS_LEN];
        for p in 0..plane {
            for c in 0..OBS_CHANNELS {
                out[c * plane + p] = self.bytes[p * OBS_CHANNELS + c] as f32 / 255.0;
            }
        }
        out
    }

    /// Inverse of [`Observation::to_chw`], rounding to the nearest byte.
    pub fn from_chw(values: &[f32]) -> Result<Self, ObservationError> {
        if values.len() != OBS_LEN {
            return Err(ObservationError::Length(values.len()));
        }
        let plane = OBS_WIDTH * OBS_HEIGHT;
        let mut bytes = vec![0u8; OBS_LEN];
        for p in 0..plane {
            for c in 0..OBS_CHANNELS {
                let v = values[c * plane + p].clamp(0.0, 1.0);
                bytes[p * OBS_CHANNELS + c] = (v * 255.0).round() as u8;
            }
        }
        Self::from_bytes(bytes)
    }

    pub fn write_ppm<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(PPM_HEADER)?;
        w.write_all(&self.bytes)
    }

    pub fn to_ppm(&self) -> Vec<u8> {
        let mut v = Vec::with_capacity(PPM_HEADER.len() + OBS_LEN);
        self.write_ppm(&mut v).expect("writing to a Vec cannot fail");
        v
    }

    pub fn read_ppm<R: Read>(mut r: R) -> Result<Self, ObservationError> {
        let mut header = [0u8; PPM_HEADER.len()];
        r.read_exact(&mut header)?;
        if header != PPM_HEADER {
            return Err(ObservationError::BadHeader);
        }
        let mut bytes = vec![0u8; OBS_LEN];
        r.read_exact(&mut bytes)?;
        Self::from_bytes(bytes)
    }
}

/// Per-column ray result used to paint one image column.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Column {
    pub hit: RayHit,
    /// Angle of the ray relative to the heading.
    pub offset: f64,
    pub perp_distance: f64,
    /// Wall slice height in pixels, at most the image height.
    pub slice_height: f64,
}

/// Relative angle of column `c`; column 0 looks furthest to the left (positive turn).
pub fn column_offset(camera: &Camera, c: usize) -> f64 {
    camera.fov * (0.5 - (c as f64 + 0.5) / OBS_WIDTH as f64)
}

pub fn cast_columns(map: &MazeMap, pose: Pose, camera: &Camera) -> Result<Vec<Column>, RayError> {
    (0..OBS_WIDTH)
        .map(|c| {
            let offset = column_offset(camera, c);
            let a = pose.heading + offset;
            let hit = cast_ray(map, (pose.x, pose.y), (a.cos(), a.sin()))?;
            let perp_distance = hit.distance * offset.cos();
            let h = OBS_HEIGHT as f64;
            let slice_height = (h * map.cell_size / perp_distance).min(h);
            Ok(Column {
                hit,
                offset,
                perp_distance,
                slice_height,
            })
        })
        .collect()
}

fn wall_color(col: &Column) -> [u8; 3] {
    let base = WALL_PALETTE[col.hit.color_id as usize % WALL_PALETTE.len()];
    let mut shade = 1.0 / (1.0 + DISTANCE_FALLOFF * col.perp_distance);
    if col.hit.side == Side::NS {
        shade *= NS_SHADE;
    }
    base.map(|b| (b as f64 * shade).round().clamp(0.0, 255.0) as u8)
}

/// Raycast render of the first-person view. Pure in `(map, pose, camera)`.
pub fn render(map: &MazeMap, pose: Pose, camera: &Camera) -> Result<Observation, RayError> {
    let columns = cast_columns(map, pose, camera)?;
    let mut bytes = vec![0u8; OBS_LEN];
    let mid = OBS_HEIGHT as f64 / 2.0;
    for (x, col) in columns.iter().enumerate() {
        let color = wall_color(col);
        let half = col.slice_height / 2.0;
        for y in 0..OBS_HEIGHT {
            let cy = y as f64 + 0.5;
            let px = if (cy - mid).abs() < half {
                color
            } else if cy < mid {
                CEILING_COLOR
            } else {
                FLOOR_COLOR
            };
            let i = (y * OBS_WIDTH + x) * OBS_CHANNELS;
            bytes[i..i + 3].copy_from_slice(&px);
        }
    }
    Ok(Observation {
        bytes: bytes.into_boxed_slice(),
    })
}

/// Number of wall pixels in image column `x`.
pub fn wall_pixels_in_column(obs: &Observation, x: usize) -> usize {
    (0..OBS_HEIGHT)
        .filter(|&y| {
            let p = obs.pixel(x, y);
            p != CEILING_COLOR && p != FLOOR_COLOR
        })
        .count()
}
