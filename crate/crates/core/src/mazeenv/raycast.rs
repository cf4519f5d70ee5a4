use super::map::{Cell, MazeMap};

/// Which family of grid lines a ray crossed when it hit.
/// `EW` walls are crossed by an x-step, `NS` walls by a y-step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    NS,
    EW,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayHit {
    /// Euclidean distance in meters along the ray.
    pub distance: f64,
    pub color_id: u8,
    pub side: Side,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RayError {
    #[error("ray origin ({x}, {y}) lies inside a wall")]
    OriginInWall { x: f64, y: f64 },
}

/// Grid DDA from `origin` along the unit vector `dir`. Ties step in x first.
pub fn cast_ray(map: &MazeMap, origin: (f64, f64), dir: (f64, f64)) -> Result<RayHit, RayError> {
    let cs = map.cell_size;
    let (ox, oy) = (origin.0 / cs, origin.1 / cs);
    let (mut col, mut row) = (ox.floor() as i64, oy.floor() as i64);
    if map.cell(col, row).is_wall() {
        return Err(RayError::OriginInWall {
            x: origin.0,
            y: origin.1,
        });
    }
    let (dx, dy) = dir;
    let (step_x, delta_x, mut t_x) = axis_setup(ox, dx);
    let (step_y, delta_y, mut t_y) = axis_setup(oy, dy);

    loop {
        let (t, side) = if t_x <= t_y {
            col += step_x;
            let t = t_x;
            t_x += delta_x;
            (t, Side::EW)
        } else {
            row += step_y;
            let t = t_y;
            t_y += delta_y;
            (t, Side::NS)
        };
        if let Cell::Wall(color_id) = map.cell(col, row) {
            return Ok(RayHit {
                distance: t * cs,
                color_id,
                side,
            });
        }
    }
}

/// (step, t per cell, t to first boundary) in grid units.
fn axis_setup(o: f64, d: f64) -> (i64, f64, f64) {
    if d > 0.0 {
        (1, 1.0 / d, (o.floor() + 1.0 - o) / d)
    } else if d < 0.0 {
        (-1, -1.0 / d, (o - o.floor()) / -d)
    } else {
        (0, f64::INFINITY, f64::INFINITY)
    }
}
