//! Pinhole camera with rasterized scene rendering and an idealized radar.
//!
//! The camera sits at the ego front bumper on the road centerline,
//! `mount_height` above the ground with a horizontal optical axis. The
//! renderer draws a deterministic grayscale scene: sky band, road
//! trapezoid, shoulders, and the actor silhouette. Silhouette edges are
//! anti-aliased with 4x4 supersampling so box edges can be recovered at
//! subpixel precision downstream.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{Actor, ActorClass, WorldState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CameraModel {
    pub image_width: u32,
    pub image_height: u32,
    /// Physical sensor dimensions (m).
    pub sensor_width: f64,
    pub sensor_height: f64,
    pub focal_length: f64,
    pub mount_height: f64,
    pub fps: f64,
}

impl Default for CameraModel {
    fn default() -> Self {
        CameraModel {
            image_width: 752,
            image_height: 480,
            sensor_width: 0.0313,
            sensor_height: 0.0200,
            focal_length: 0.0373,
            mount_height: 1.2,
            fps: 10.0,
        }
    }
}

impl CameraModel {
    /// Focal length in horizontal pixels.
    pub fn focal_px_x(&self) -> f64 {
        self.focal_length * self.image_width as f64 / self.sensor_width
    }

    /// Focal length in vertical pixels.
    pub fn focal_px_y(&self) -> f64 {
        self.focal_length * self.image_height as f64 / self.sensor_height
    }

    /// Horizontal field of view in degrees.
    pub fn horizontal_fov_deg(&self) -> f64 {
        2.0 * (self.sensor_width / 2.0 / self.focal_length).atan().to_degrees()
    }

    /// Image row of the horizon under the flat-road assumption.
    pub fn horizon_row(&self) -> f64 {
        self.image_height as f64 / 2.0
    }

    /// Ground-plane distance for an image row below the horizon.
    pub fn row_to_distance(&self, v: f64) -> Option<f64> {
        let dv = v - self.horizon_row();
        if dv <= 0.0 {
            return None;
        }
        Some(self.focal_px_y() * self.mount_height / dv)
    }

    /// Inverse of `row_to_distance`.
    pub fn distance_to_row(&self, z: f64) -> f64 {
        self.horizon_row() + self.focal_px_y() * self.mount_height / z
    }
}

/// Axis-aligned box in image coordinates, origin top-left. Stored as
/// floating point; ground-truth boxes are analytic and subpixel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl PixelBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Self {
        PixelBox {
            x_min,
            y_min,
            x_max,
            y_max,
        }
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width().max(0.0) * self.height().max(0.0)
    }

    pub fn center(&self) -> (f64, f64) {
        (
            (self.x_min + self.x_max) / 2.0,
            (self.y_min + self.y_max) / 2.0,
        )
    }

    pub fn is_valid(&self) -> bool {
        self.x_min < self.x_max && self.y_min < self.y_max
    }

    /// True if the box touches any image edge (the occlusion criterion).
    pub fn touches_edge(&self, camera: &CameraModel) -> bool {
        self.x_min <= 0.0
            || self.y_min <= 0.0
            || self.x_max >= camera.image_width as f64
            || self.y_max >= camera.image_height as f64
    }
}

/// 8-bit grayscale frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<u8>,
}

impl Frame {
    pub fn filled(width: u32, height: u32, value: u8) -> Self {
        Frame {
            width,
            height,
            pixels: vec![value; (width * height) as usize],
        }
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.pixels[(y * self.width + x) as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, value: u8) {
        self.pixels[(y * self.width + x) as usize] = value;
    }

    /// Bilinear sample at subpixel coordinates, clamped to the frame.
    pub fn sample(&self, x: f64, y: f64) -> f64 {
        let x = x.clamp(0.0, (self.width - 1) as f64);
        let y = y.clamp(0.0, (self.height - 1) as f64);
        let x0 = x.floor() as u32;
        let y0 = y.floor() as u32;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let p00 = self.get(x0, y0) as f64;
        let p10 = self.get(x1, y0) as f64;
        let p01 = self.get(x0, y1) as f64;
        let p11 = self.get(x1, y1) as f64;
        p00 * (1.0 - fx) * (1.0 - fy)
            + p10 * fx * (1.0 - fy)
            + p01 * (1.0 - fx) * fy
            + p11 * fx * fy
    }

    /// Serialize as a binary portable graymap (P5).
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn from_pgm(bytes: &[u8]) -> Result<Frame> {
        let header_err = || Error::InvalidParameter("malformed PGM header".into());
        let mut fields = Vec::new();
        let mut pos = 0;
        // P5, width, height, maxval, then a single whitespace byte.
        while fields.len() < 4 {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(header_err());
            }
            fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| header_err())?);
        }
        pos += 1;
        if fields[0] != "P5" || fields[3] != "255" {
            return Err(header_err());
        }
        let width: u32 = fields[1].parse().map_err(|_| header_err())?;
        let height: u32 = fields[2].parse().map_err(|_| header_err())?;
        let need = (width * height) as usize;
        if bytes.len() < pos + need {
            return Err(Error::InvalidParameter("truncated PGM payload".into()));
        }
        Ok(Frame {
            width,
            height,
            pixels: bytes[pos..pos + need].to_vec(),
        })
    }
}

pub const SKY_GRAY: u8 = 190;
pub const ROAD_GRAY: u8 = 100;
pub const SHOULDER_GRAY: u8 = 150;
pub const GRASS_GRAY: u8 = 120;
/// Flat gravel shoulder width beside the road (m).
pub const SHOULDER_WIDTH_M: f64 = 5.0;

/// Cached background raster for a camera and road geometry.
pub fn render_background(camera: &CameraModel, road_half_width: f64) -> Frame {
    let mut frame = Frame::filled(camera.image_width, camera.image_height, SKY_GRAY);
    let cx = camera.image_width as f64 / 2.0;
    let fx = camera.focal_px_x();
    for v in 0..camera.image_height {
        let z = match camera.row_to_distance(v as f64 + 0.5) {
            Some(z) => z,
            None => continue,
        };
        // Lateral half extents in pixels at this row.
        let road_px = road_half_width * fx / z;
        let shoulder_px = (road_half_width + SHOULDER_WIDTH_M) * fx / z;
        for u in 0..camera.image_width {
            let du = (u as f64 + 0.5 - cx).abs();
            let value = if du <= road_px {
                ROAD_GRAY
            } else if du <= shoulder_px {
                SHOULDER_GRAY
            } else {
                GRASS_GRAY
            };
            frame.set(u, v, value);
        }
    }
    frame
}

/// Minimum longitudinal clearance in front of the image plane (m).
const MIN_PROJECTION_DISTANCE: f64 = 0.5;

/// Unclamped projection of the actor silhouette extents. None when the
/// actor is behind or too close to the image plane.
fn project_extents(actor: &Actor, camera: &CameraModel, ego_position: f64) -> Option<PixelBox> {
    let z = actor.world_position.0 - ego_position;
    if z <= MIN_PROJECTION_DISTANCE {
        return None;
    }
    let y = actor.world_position.1;
    let half_w = actor.silhouette_width() / 2.0;
    let cx = camera.image_width as f64 / 2.0;
    let cy = camera.image_height as f64 / 2.0;
    let fx = camera.focal_px_x();
    let fy = camera.focal_px_y();
    let x_min = cx + fx * (y - half_w) / z;
    let x_max = cx + fx * (y + half_w) / z;
    let y_min = cy + fy * (camera.mount_height - actor.height) / z;
    let y_max = cy + fy * camera.mount_height / z;
    Some(PixelBox::new(x_min, y_min, x_max, y_max))
}

/// Analytic ground-truth bounding box, clamped to the frame. None when
/// the actor is behind the camera or fully outside the frustum. The
/// second element flags occlusion (box in contact with a frame edge).
pub fn project_bbox(
    actor: &Actor,
    camera: &CameraModel,
    ego_position: f64,
) -> Option<(PixelBox, bool)> {
    let raw = project_extents(actor, camera, ego_position)?;
    let w = camera.image_width as f64;
    let h = camera.image_height as f64;
    if raw.x_max <= 0.0 || raw.x_min >= w || raw.y_max <= 0.0 || raw.y_min >= h {
        return None;
    }
    let clamped = PixelBox::new(
        raw.x_min.max(0.0),
        raw.y_min.max(0.0),
        raw.x_max.min(w),
        raw.y_max.min(h),
    );
    if !clamped.is_valid() {
        return None;
    }
    let occluded = raw.x_min < 0.0 || raw.y_min < 0.0 || raw.x_max > w || raw.y_max > h;
    Some((clamped, occluded))
}

/// Silhouette mask in normalized box coordinates (0..1, top-left origin).
/// Every mask touches all four box edges so the rendered extent matches
/// the analytic box.
fn silhouette_mask(class: ActorClass, nx: f64, ny: f64) -> bool {
    if class.is_pedestrian() {
        // Head disc touching the box top.
        let head = {
            let dx = (nx - 0.5) / 0.18;
            let dy = (ny - 0.10) / 0.10;
            dx * dx + dy * dy <= 1.0
        };
        // Torso column.
        let torso = (nx - 0.5).abs() <= 0.16 && (0.16..=0.58).contains(&ny);
        // Two legs spreading outward below the torso; the gap between them
        // is what separates the silhouette from uniform columns.
        let legs = if (0.55..0.88).contains(&ny) {
            let t = (ny - 0.55) / 0.45;
            let left = nx >= 0.34 * (1.0 - t) && nx <= 0.50 - 0.32 * t;
            let right = (1.0 - nx) >= 0.34 * (1.0 - t) && (1.0 - nx) <= 0.50 - 0.32 * t;
            left || right
        } else {
            false
        };
        // Flat-soled boots with vertical sides reaching the bottom
        // corners. A constant horizontal cross-section over the last rows
        // keeps the anti-aliased bottom row's intensity proportional to
        // the row coverage alone, which is what makes subpixel range
        // recovery from the box bottom work at the far end of the domain.
        let boots = ny >= 0.88 && (nx <= 0.34 || nx >= 0.66);
        head || torso || legs || boots
    } else {
        match class {
            ActorClass::N1 => {
                let dx = (nx - 0.5) / 0.5;
                let dy = (ny - 0.5) / 0.5;
                dx * dx + dy * dy <= 1.0
            }
            ActorClass::N2 | ActorClass::N5 => true,
            // Cone and pyramid: apex at the top, full-width base.
            ActorClass::N3 | ActorClass::N4 => (nx - 0.5).abs() <= 0.5 * ny,
            _ => unreachable!(),
        }
    }
}

// 16x16 coverage sampling keeps the anti-aliased edge quantization fine
// enough (1/16 px per axis) for sub-half-meter range recovery at the far
// end of the operational design domain.
const SUPERSAMPLE: u32 = 16;

/// Deterministic grayscale raster of the world as seen by the camera.
pub fn render_frame(state: &WorldState, camera: &CameraModel, background: &Frame) -> Frame {
    debug_assert_eq!(background.width, camera.image_width);
    let mut frame = background.clone();
    let actor = match &state.actor {
        Some(a) => a,
        None => return frame,
    };
    let raw = match project_extents(actor, camera, state.ego.position) {
        Some(b) => b,
        None => return frame,
    };
    let albedo = actor.class_id.albedo() as f64;
    let u0 = raw.x_min.floor().max(0.0) as u32;
    let u1 = (raw.x_max.ceil() as i64).clamp(0, camera.image_width as i64) as u32;
    let v0 = raw.y_min.floor().max(0.0) as u32;
    let v1 = (raw.y_max.ceil() as i64).clamp(0, camera.image_height as i64) as u32;
    let inv_w = 1.0 / raw.width();
    let inv_h = 1.0 / raw.height();
    let step = 1.0 / SUPERSAMPLE as f64;
    for v in v0..v1 {
        for u in u0..u1 {
            let mut covered = 0u32;
            for sv in 0..SUPERSAMPLE {
                for su in 0..SUPERSAMPLE {
                    let px = u as f64 + (su as f64 + 0.5) * step;
                    let py = v as f64 + (sv as f64 + 0.5) * step;
                    let nx = (px - raw.x_min) * inv_w;
                    let ny = (py - raw.y_min) * inv_h;
                    if (0.0..=1.0).contains(&nx)
                        && (0.0..=1.0).contains(&ny)
                        && silhouette_mask(actor.class_id, nx, ny)
                    {
                        covered += 1;
                    }
                }
            }
            if covered > 0 {
                let alpha = covered as f64 / (SUPERSAMPLE * SUPERSAMPLE) as f64;
                let bg = frame.get(u, v) as f64;
                let blended = alpha * albedo + (1.0 - alpha) * bg;
                frame.set(u, v, blended.round() as u8);
            }
        }
    }
    frame
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadarTrack {
    pub longitudinal_distance: f64,
    pub lateral_offset: f64,
    /// Closing speed, positive when the gap shrinks.
    pub relative_longitudinal_speed: f64,
    /// Rate of change of the lateral offset.
    pub relative_lateral_speed: f64,
    pub ttc: Option<f64>,
    pub collision_course: bool,
}

pub const RADAR_RANGE_M: f64 = 200.0;

/// Exact radar return for the present actor, if any. Tracks carry no TTC
/// verdict yet; `compute_ttc` fills that in.
pub fn radar_scan(state: &WorldState) -> Vec<RadarTrack> {
    radar_scan_with_noise(state, 0.0, &mut rand::rngs::mock::StepRng::new(0, 0))
}

/// Radar return with optional zero-mean Gaussian noise on distances and
/// speeds. `sigma = 0` reproduces the exact scan.
pub fn radar_scan_with_noise<R: Rng>(state: &WorldState, sigma: f64, rng: &mut R) -> Vec<RadarTrack> {
    let actor = match &state.actor {
        Some(a) => a,
        None => return Vec::new(),
    };
    let dist = actor.world_position.0 - state.ego.position;
    if dist <= 0.0 || dist > RADAR_RANGE_M {
        return Vec::new();
    }
    let (vx, vy) = actor.velocity();
    let noise = |rng: &mut R| -> f64 {
        if sigma == 0.0 {
            0.0
        } else {
            // Box-Muller keeps the dependency surface small.
            let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
            let u2: f64 = rng.gen_range(0.0..1.0);
            sigma * (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
        }
    };
    vec![RadarTrack {
        longitudinal_distance: dist + noise(rng),
        lateral_offset: actor.world_position.1 + noise(rng),
        relative_longitudinal_speed: state.ego.speed - vx + noise(rng),
        relative_lateral_speed: vy + noise(rng),
        ttc: None,
        collision_course: false,
    }]
}

/// TTC assuming constant motion vectors, plus the collision-course
/// verdict: the lateral offset extrapolated to the collision instant must
/// fall within the corridor.
pub fn compute_ttc(track: &RadarTrack, corridor_half_width: f64) -> (Option<f64>, bool) {
    if track.relative_longitudinal_speed <= 0.0 {
        return (None, false);
    }
    let ttc = track.longitudinal_distance / track.relative_longitudinal_speed;
    let predicted_offset = track.lateral_offset + track.relative_lateral_speed * ttc;
    (Some(ttc), predicted_offset.abs() <= corridor_half_width)
}
