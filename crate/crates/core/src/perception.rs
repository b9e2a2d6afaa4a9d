//! Single-class pedestrian detector: multi-scale template correlation
//! with greedy redundant-box suppression, subpixel box refinement, and
//! confidence-threshold calibration against an FPPI target.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::metrics::iou;
use crate::sensors::{CameraModel, Frame, PixelBox};

/// Template raster resolution (rows x cols); crops of every scale bin are
/// resampled onto this grid.
pub const TEMPLATE_ROWS: usize = 20;
pub const TEMPLATE_COLS: usize = 7;

/// Search windows per frame kept before suppression.
const CANDIDATE_CAP: usize = 64;
/// Intensity strictly below which a pixel is treated as foreground: every
/// background region is at least ROAD_GRAY (100), actors are darker, and
/// anti-aliased boundary pixels with any actor coverage over road fall
/// below the road value. Thin limbs at long range survive refinement only
/// because their partially covered pixels still count as foreground.
const DARK_MAX: f64 = 100.0;
/// Minimum fraction of sample points darker than DARK_MAX for a window
/// to be scored at all: road markings and region boundaries produce
/// correlated gradients but never foreground-dark pixels.
const MIN_DARK_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Detection {
    pub pixel_box: PixelBox,
    pub confidence: f64,
}

/// One scale bin: the window size searched and the averaged, normalized
/// (zero-mean, unit-norm) template for it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScaleBin {
    pub height: u32,
    pub width: u32,
    pub template: Vec<f32>,
    pub sample_count: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectorModel {
    pub bins: Vec<ScaleBin>,
    pub suppression_iou: f64,
    pub max_detections: usize,
    pub seed: u64,
    pub version_hash: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConfidenceCalibration {
    pub threshold: f64,
    pub target_fppi: f64,
    pub margin_factor: f64,
    pub measured_fppi_at_threshold: f64,
}

/// A training sample: the box height in pixels plus the resampled
/// TEMPLATE_ROWS x TEMPLATE_COLS crop, values in [0, 1].
#[derive(Debug, Clone)]
pub struct TrainingCrop {
    pub height: f64,
    pub aspect: f64,
    pub pixels: Vec<f32>,
}

/// Resample a box region onto a rows x cols grid (bilinear), scaled to
/// [0, 1].
pub fn extract_crop(frame: &Frame, b: &PixelBox, rows: usize, cols: usize) -> Result<Vec<f32>> {
    if !b.is_valid() || b.width() < 2.0 || b.height() < 2.0 {
        return Err(Error::InvalidParameter(format!(
            "degenerate crop box {:.1}x{:.1}",
            b.width(),
            b.height()
        )));
    }
    let mut out = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        let y = b.y_min + (r as f64 + 0.5) * b.height() / rows as f64;
        for c in 0..cols {
            let x = b.x_min + (c as f64 + 0.5) * b.width() / cols as f64;
            // Continuous coordinates put pixel centers at integer + 0.5.
            out.push((frame.sample(x - 0.5, y - 0.5) / 255.0) as f32);
        }
    }
    Ok(out)
}

pub fn training_crop(frame: &Frame, b: &PixelBox) -> Result<TrainingCrop> {
    Ok(TrainingCrop {
        height: b.height(),
        aspect: b.width() / b.height(),
        pixels: extract_crop(frame, b, TEMPLATE_ROWS, TEMPLATE_COLS)?,
    })
}

fn normalize_template(t: &mut [f32]) {
    let n = t.len() as f32;
    let mean: f32 = t.iter().sum::<f32>() / n;
    for v in t.iter_mut() {
        *v -= mean;
    }
    let norm: f32 = t.iter().map(|v| v * v).sum::<f32>().sqrt();
    if norm > 0.0 {
        for v in t.iter_mut() {
            *v /= norm;
        }
    }
}

/// Build scale bins stepping by sqrt(2) across the observed box-height
/// range, average the assigned crops per bin, and normalize. Every bin in
/// the covered range must receive at least one crop.
pub fn train_detector(crops: &[TrainingCrop], seed: u64) -> Result<DetectorModel> {
    if crops.is_empty() {
        return Err(Error::Training("no training crops supplied".into()));
    }
    let min_h = crops.iter().map(|c| c.height).fold(f64::INFINITY, f64::min);
    let max_h = crops
        .iter()
        .map(|c| c.height)
        .fold(f64::NEG_INFINITY, f64::max);
    let step = std::f64::consts::SQRT_2;
    let bin_count = ((max_h / min_h).ln() / step.ln()).round() as usize + 1;
    if bin_count < 3 {
        return Err(Error::Training(format!(
            "box heights {min_h:.0}-{max_h:.0} px span fewer than 3 scale bins"
        )));
    }
    let heights: Vec<f64> = (0..bin_count)
        .map(|i| min_h * step.powi(i as i32))
        .collect();
    let assign = |h: f64| -> usize {
        heights
            .iter()
            .enumerate()
            .min_by(|a, b| {
                let da = (h.ln() - a.1.ln()).abs();
                let db = (h.ln() - b.1.ln()).abs();
                da.partial_cmp(&db).unwrap()
            })
            .map(|(i, _)| i)
            .unwrap()
    };
    let mut sums: Vec<Vec<f64>> = vec![vec![0.0; TEMPLATE_ROWS * TEMPLATE_COLS]; bin_count];
    let mut aspects = vec![0.0f64; bin_count];
    let mut counts = vec![0usize; bin_count];
    for crop in crops {
        let idx = assign(crop.height);
        for (s, &p) in sums[idx].iter_mut().zip(&crop.pixels) {
            *s += p as f64;
        }
        aspects[idx] += crop.aspect;
        counts[idx] += 1;
    }
    let mut bins = Vec::with_capacity(bin_count);
    for i in 0..bin_count {
        if counts[i] == 0 {
            return Err(Error::Training(format!(
                "scale bin {i} (height {:.0} px) received no training crops",
                heights[i]
            )));
        }
        let mut template: Vec<f32> = sums[i]
            .iter()
            .map(|&s| (s / counts[i] as f64) as f32)
            .collect();
        normalize_template(&mut template);
        let h = heights[i].round() as u32;
        let aspect = aspects[i] / counts[i] as f64;
        bins.push(ScaleBin {
            height: h,
            width: ((h as f64 * aspect).round() as u32).max(3),
            template,
            sample_count: counts[i],
        });
    }
    let mut model = DetectorModel {
        bins,
        suppression_iou: 0.5,
        max_detections: 5,
        seed,
        version_hash: String::new(),
    };
    model.version_hash = model_hash(&model)?;
    Ok(model)
}

fn model_hash(model: &DetectorModel) -> Result<String> {
    let mut unhashed = model.clone();
    unhashed.version_hash = String::new();
    let bytes = serde_json::to_vec(&unhashed)?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    let out = hasher.finalize();
    Ok(out.iter().map(|b| format!("{b:02x}")).collect())
}

/// Greedy non-maximum suppression at the given IoU: highest confidence
/// first, drop anything overlapping a keeper.
pub fn suppress(mut candidates: Vec<Detection>, iou_threshold: f64) -> Vec<Detection> {
    candidates.sort_by(|a, b| b.confidence.partial_cmp(&a.confidence).unwrap());
    let mut kept: Vec<Detection> = Vec::new();
    for c in candidates {
        let redundant = kept.iter().any(|k| {
            iou(&k.pixel_box, &c.pixel_box) >= iou_threshold
                || containment(&k.pixel_box, &c.pixel_box) >= 0.65
        });
        if !redundant {
            kept.push(c);
        }
    }
    kept
}

/// Fraction of the smaller box's area covered by the intersection.
fn containment(a: &PixelBox, b: &PixelBox) -> f64 {
    let ix = (a.x_max.min(b.x_max) - a.x_min.max(b.x_min)).max(0.0);
    let iy = (a.y_max.min(b.y_max) - a.y_min.max(b.y_min)).max(0.0);
    let smaller = a.area().min(b.area());
    if smaller <= 0.0 {
        return 0.0;
    }
    ix * iy / smaller
}

/// Multi-scale sliding-window detection. Returns at most
/// `max_detections` boxes with confidence >= `threshold`, highest first,
/// after suppression and subpixel refinement.
pub fn detect(
    model: &DetectorModel,
    frame: &Frame,
    camera: &CameraModel,
    threshold: f64,
) -> Result<Vec<Detection>> {
    if frame.width != camera.image_width || frame.height != camera.image_height {
        return Err(Error::InvalidParameter(format!(
            "frame {}x{} does not match camera {}x{}",
            frame.width, frame.height, camera.image_width, camera.image_height
        )));
    }
    let horizon = camera.horizon_row();
    let dark = DarkIntegral::build(frame);
    let mut candidates: Vec<Detection> = Vec::new();
    for bin in &model.bins {
        let (w, h) = (bin.width as f64, bin.height as f64);
        if w >= frame.width as f64 || h >= frame.height as f64 {
            continue;
        }
        let sx = (bin.width / 5).max(2);
        let sy = (bin.height / 6).max(2);
        // Ground-plane band: a standing actor of plausible height puts
        // the window top within [horizon - 0.45h, horizon + 0.55h].
        let v_lo = (horizon - 0.45 * h).max(0.0) as u32;
        let v_hi = ((horizon + 0.55 * h).min(frame.height as f64 - h)) as u32;
        let u_hi = frame.width - bin.width;
        let mut v0 = v_lo;
        while v0 <= v_hi {
            let mut u0 = 0u32;
            while u0 <= u_hi {
                // Exact fast reject: the sample grid (bilinear, so it can
                // touch one pixel beyond the window) sees no dark pixel,
                // hence window_ncc would gate the window to zero anyway.
                if !dark.any_dark(u0, v0, bin.width, bin.height) {
                    u0 += sx;
                    continue;
                }
                let ncc = window_ncc(frame, bin, u0, v0);
                let conf = ncc.max(0.0);
                if conf >= threshold && conf > 0.0 {
                    candidates.push(Detection {
                        pixel_box: PixelBox::new(
                            u0 as f64,
                            v0 as f64,
                            u0 as f64 + w,
                            v0 as f64 + h,
                        ),
                        confidence: conf,
                    });
                }
                u0 += sx;
            }
            v0 += sy;
        }
    }
    candidates.sort_by(|a, b| b.confidence.partial_cmp(&a.confidence).unwrap());
    candidates.truncate(CANDIDATE_CAP);
    let kept = suppress(candidates, model.suppression_iou);
    // Refinement can merge near-duplicates from adjacent scale bins, so
    // suppress once more afterwards.
    let refined: Vec<Detection> = kept
        .into_iter()
        .map(|d| Detection {
            pixel_box: refine_to_fixed_point(frame, &d.pixel_box),
            confidence: d.confidence,
        })
        .collect();
    let mut out = suppress(refined, model.suppression_iou);
    out.truncate(model.max_detections);
    Ok(out)
}

/// Iterate `refine_box` until the box stabilizes. A window that matched
/// only part of the foreground object grows its search margin with each
/// pass until the full dark extent is captured; boxes from different
/// partial matches then converge to the same extent and merge in the
/// following suppression pass.
pub fn refine_to_fixed_point(frame: &Frame, rough: &PixelBox) -> PixelBox {
    let mut current = rough.clone();
    for _ in 0..8 {
        let next = refine_box(frame, &current);
        let moved = (next.x_min - current.x_min)
            .abs()
            .max((next.x_max - current.x_max).abs())
            .max((next.y_min - current.y_min).abs())
            .max((next.y_max - current.y_max).abs());
        current = next;
        if moved < 0.25 {
            break;
        }
    }
    current
}

/// Per-frame integral image over the dark-pixel mask, for O(1) queries of
/// whether a window region contains any foreground-dark pixel.
struct DarkIntegral {
    width: usize,
    sums: Vec<u32>,
}

impl DarkIntegral {
    fn build(frame: &Frame) -> DarkIntegral {
        let (w, h) = (frame.width as usize, frame.height as usize);
        let stride = w + 1;
        let mut sums = vec![0u32; stride * (h + 1)];
        for y in 0..h {
            let mut row = 0u32;
            for x in 0..w {
                row += u32::from((frame.get(x as u32, y as u32) as f64) < DARK_MAX);
                sums[(y + 1) * stride + x + 1] = sums[y * stride + x + 1] + row;
            }
        }
        DarkIntegral { width: w, sums }
    }

    /// Any dark pixel within the window expanded by one pixel per side
    /// (the bilinear sample footprint of the template grid).
    fn any_dark(&self, u0: u32, v0: u32, w: u32, h: u32) -> bool {
        let stride = self.width + 1;
        let height = self.sums.len() / stride - 1;
        let x0 = (u0 as usize).saturating_sub(1);
        let y0 = (v0 as usize).saturating_sub(1);
        let x1 = ((u0 + w) as usize + 1).min(self.width);
        let y1 = ((v0 + h) as usize + 1).min(height);
        let at = |x: usize, y: usize| self.sums[y * stride + x];
        at(x1, y1) + at(x0, y0) > at(x1, y0) + at(x0, y1)
    }
}

#[doc(hidden)]
pub fn detect_trace(
    model: &DetectorModel,
    frame: &Frame,
    camera: &CameraModel,
) -> (Vec<Detection>, Vec<Detection>) {
    let horizon = camera.horizon_row();
    let mut candidates: Vec<Detection> = Vec::new();
    for bin in &model.bins {
        let (w, h) = (bin.width as f64, bin.height as f64);
        if w >= frame.width as f64 || h >= frame.height as f64 {
            continue;
        }
        let sx = (bin.width / 5).max(2);
        let sy = (bin.height / 6).max(2);
        let v_lo = (horizon - 0.45 * h).max(0.0) as u32;
        let v_hi = ((horizon + 0.55 * h).min(frame.height as f64 - h)) as u32;
        let u_hi = frame.width - bin.width;
        let mut v0 = v_lo;
        while v0 <= v_hi {
            let mut u0 = 0u32;
            while u0 <= u_hi {
                let ncc = window_ncc(frame, bin, u0, v0);
                let conf = ncc.max(0.0);
                if conf > 0.0 {
                    candidates.push(Detection {
                        pixel_box: PixelBox::new(
                            u0 as f64,
                            v0 as f64,
                            u0 as f64 + w,
                            v0 as f64 + h,
                        ),
                        confidence: conf,
                    });
                }
                u0 += sx;
            }
            v0 += sy;
        }
    }
    candidates.sort_by(|a, b| b.confidence.partial_cmp(&a.confidence).unwrap());
    candidates.truncate(CANDIDATE_CAP);
    let kept = suppress(candidates, model.suppression_iou);
    let refined: Vec<Detection> = kept
        .iter()
        .map(|d| Detection {
            pixel_box: refine_box(frame, &d.pixel_box),
            confidence: d.confidence,
        })
        .collect();
    (kept, refined)
}

/// Normalized cross-correlation of the bin template against the window
/// anchored at (u0, v0), sampled on the template grid.
fn window_ncc(frame: &Frame, bin: &ScaleBin, u0: u32, v0: u32) -> f64 {
    let mut dot = 0.0f64;
    let mut sum = 0.0f64;
    let mut sum_sq = 0.0f64;
    let mut dark = 0usize;
    let h = bin.height as f64;
    let w = bin.width as f64;
    let mut idx = 0;
    for r in 0..TEMPLATE_ROWS {
        let y = v0 as f64 + (r as f64 + 0.5) * h / TEMPLATE_ROWS as f64 - 0.5;
        for c in 0..TEMPLATE_COLS {
            let x = u0 as f64 + (c as f64 + 0.5) * w / TEMPLATE_COLS as f64 - 0.5;
            let v = frame.sample(x, y) / 255.0;
            if v < DARK_MAX / 255.0 {
                dark += 1;
            }
            dot += bin.template[idx] as f64 * v;
            sum += v;
            sum_sq += v * v;
            idx += 1;
        }
    }
    let n = (TEMPLATE_ROWS * TEMPLATE_COLS) as f64;
    if (dark as f64) < MIN_DARK_FRACTION * n {
        return 0.0;
    }
    let var = sum_sq - sum * sum / n;
    if var <= 1e-9 {
        return 0.0;
    }
    dot / var.sqrt()
}

/// Tighten a rough window to the dark foreground object inside it, with
/// per-edge subpixel positions recovered from the anti-aliased boundary
/// pixels. Returns the input box when no foreground pixel is found.
pub fn refine_box(frame: &Frame, rough: &PixelBox) -> PixelBox {
    let margin_x = rough.width() * 0.3;
    let margin_y = rough.height() * 0.3;
    let u0 = (rough.x_min - margin_x).floor().max(0.0) as u32;
    let v0 = (rough.y_min - margin_y).floor().max(0.0) as u32;
    let u1 = ((rough.x_max + margin_x).ceil() as u32).min(frame.width);
    let v1 = ((rough.y_max + margin_y).ceil() as u32).min(frame.height);
    let mut umin = u32::MAX;
    let mut umax = 0u32;
    let mut vmin = u32::MAX;
    let mut vmax = 0u32;
    for v in v0..v1 {
        for u in u0..u1 {
            if (frame.get(u, v) as f64) < DARK_MAX {
                umin = umin.min(u);
                umax = umax.max(u);
                vmin = vmin.min(v);
                vmax = vmax.max(v);
            }
        }
    }
    if umin == u32::MAX {
        return rough.clone();
    }
    let darkest_in_row = |v: u32| -> u32 {
        (umin..=umax)
            .min_by_key(|&u| frame.get(u, v))
            .unwrap_or(umin)
    };
    let darkest_in_col = |u: u32| -> u32 {
        (vmin..=vmax)
            .min_by_key(|&v| frame.get(u, v))
            .unwrap_or(vmin)
    };
    let get = |x: i64, y: i64| -> Option<f64> {
        (x >= 0 && y >= 0 && x < frame.width as i64 && y < frame.height as i64)
            .then(|| frame.get(x as u32, y as u32) as f64)
    };
    // Background reference for the horizontal edges: probe the same row
    // just outside the dark extent. Walking further along the column can
    // cross into a different background region (e.g. the road/shoulder
    // boundary right below the feet), which corrupts the coverage ratio.
    let row_bg = |u: u32, v: u32| -> Option<f64> {
        let probe = if u.saturating_sub(umin) <= umax.saturating_sub(u) {
            (umin as i64) - 3
        } else {
            (umax as i64) + 3
        };
        let x = probe.clamp(0, frame.width as i64 - 1) as u32;
        (x < umin || x > umax).then(|| frame.get(x, v) as f64)
    };
    let ut = darkest_in_row(vmin);
    // Bottom edge. The boundary pixel blends against the background in its
    // own row and column, but the ground-region boundaries (road edge,
    // shoulder edge) run as slanted lines through the image, so any single
    // probe for that background can land in the wrong region: the pixel
    // below the feet fails when the boundary is shallow, the same-row side
    // probe fails when it is steep. The flat-bottomed silhouettes give two
    // independent foot columns; estimating the edge from each with both
    // background hypotheses and taking the median rejects the corrupted
    // one.
    let mid = umin + (umax - umin) / 2;
    // Column choice per half: darkest summed over the last few body rows,
    // so a single near-threshold blend pixel (e.g. the gap between the
    // legs) cannot outrank a genuinely covered column.
    let darkest_between = |lo: u32, hi: u32| -> u32 {
        (lo..=hi)
            .min_by_key(|&u| {
                (vmax.saturating_sub(2).max(vmin)..=vmax)
                    .map(|v| frame.get(u, v) as u32)
                    .sum::<u32>()
            })
            .unwrap_or(lo)
    };
    let ul = darkest_between(umin, mid);
    let ur = darkest_between((mid + 1).min(umax), umax);
    let below = |u: u32, dy: i64| get(u as i64, vmax as i64 + dy);
    let side = |x: i64, dy: i64| get(x, vmax as i64 + dy);
    // Candidate background values, all taken from pixels that are
    // guaranteed pure background: two rows below the feet (the partial
    // sole row extends at most one row past the dark extent) and beside
    // the body on the edge rows themselves.
    let mut cands: Vec<f64> = [
        below(ul, 2),
        below(ur, 2),
        side(umin as i64 - 2, 0),
        side(umin as i64 - 2, 1),
        side(umax as i64 + 2, 0),
        side(umax as i64 + 2, 1),
    ]
    .into_iter()
    .flatten()
    .collect();
    cands.sort_by(f64::total_cmp);
    cands.dedup_by(|a, b| (*a - *b).abs() < 1.0);
    // A correct background hypothesis recovers the exact coverage while a
    // wrong one distorts it, and the flat sole means both foot columns
    // must agree on the edge position. Evaluate every hypothesis pair per
    // column and pick the cross-column pair that agrees best; a small
    // penalty for hypotheses other than the pixel directly below breaks
    // ties between identical columns in favour of the most local reading.
    let estimates_for = |u: u32| -> Vec<(f64, f64)> {
        let natural = below(u, 2);
        let penalty = |bg: f64| -> f64 {
            natural.map_or(1.0, |n| f64::from((bg - n).abs() >= 1.0))
        };
        let here = frame.get(u, vmax) as f64;
        let next = below(u, 1);
        let mut out = Vec::new();
        for &b0 in &cands {
            // A dark figure can only darken a pixel, so a pixel brighter
            // than the hypothesized background refutes the hypothesis.
            if here > b0 + 1.0 {
                continue;
            }
            for &b1 in &cands {
                if next.is_some_and(|p| p > b1 + 1.0) {
                    continue;
                }
                // A straight region boundary crosses a column at most
                // once, so the background sequence down the column may
                // change value at most once.
                let seq: Vec<f64> = [Some(b0), Some(b1), below(u, 2), below(u, 3)]
                    .into_iter()
                    .flatten()
                    .collect();
                let changes = seq
                    .windows(2)
                    .filter(|w| (w[0] - w[1]).abs() >= 1.0)
                    .count();
                if changes > 1 {
                    continue;
                }
                let e = edge_subpixel(frame, u, vmax, 0, 1, [Some(b0), Some(b1)]);
                out.push((e, penalty(b0) + penalty(b1)));
            }
        }
        out
    };
    let mut bottom = edge_subpixel(frame, ul, vmax, 0, 1, [None, None]);
    let mut best = f64::INFINITY;
    let (left_est, right_est) = (estimates_for(ul), estimates_for(ur));
    for &(el, pl) in &left_est {
        for &(er, pr) in &right_est {
            let score = (el - er).abs() + 0.001 * (pl + pr);
            if score < best {
                best = score;
                bottom = (el + er) / 2.0;
            }
        }
    }
    let rb_top = row_bg(ut, vmin);
    let top = edge_subpixel(frame, ut, vmin, 0, -1, [rb_top, rb_top]);
    let left = edge_subpixel(frame, umin, darkest_in_col(umin), -1, 0, [None, None]);
    let right = edge_subpixel(frame, umax, darkest_in_col(umax), 1, 0, [None, None]);
    PixelBox::new(left, top, right, bottom)
}

/// Subpixel edge position along one axis, walking outward from the
/// extreme dark pixel (u, v) in direction (du, dv). The anti-aliased
/// boundary pixel's intensity encodes its coverage fraction.
fn edge_subpixel(
    frame: &Frame,
    u: u32,
    v: u32,
    du: i64,
    dv: i64,
    bg_override: [Option<f64>; 2],
) -> f64 {
    let read = |step: i64| -> Option<f64> {
        let x = u as i64 + du * step;
        let y = v as i64 + dv * step;
        if x < 0 || y < 0 || x >= frame.width as i64 || y >= frame.height as i64 {
            None
        } else {
            Some(frame.get(x as u32, y as u32) as f64)
        }
    };
    let here = read(0).unwrap_or(0.0);
    // Interior (foreground) reference: the darkest of the two pixels
    // inward and here. Taking the minimum avoids anchoring on a pixel
    // whose column is itself only partially covered (e.g. the tapering
    // legs just above the boots).
    let fg = read(-1)
        .into_iter()
        .chain(read(-2))
        .fold(here, f64::min);
    // Background reference per step (the boundary pixel may turn out to be
    // at step 0 or step 1, and the background can differ between the two
    // rows): supplied by the caller, else three pixels outward.
    let default_bg = || read(3).or_else(|| read(2)).unwrap_or(255.0);
    let outward = |p: f64, bg: f64| -> f64 {
        if (bg - fg).abs() < 1.0 {
            0.0
        } else {
            ((bg - p) / (bg - fg)).clamp(0.0, 1.0)
        }
    };
    // Integer edge coordinate of the outer side of pixel (u, v) along the
    // walk axis.
    let base = if du != 0 { u as f64 } else { v as f64 };
    // The boundary lies either in this pixel or the next one out; summing
    // both coverages locates it in either case without a hard full/partial
    // classification (a fully covered pixel contributes 1, a pure
    // background pixel 0).
    let alpha_here = outward(here, bg_override[0].unwrap_or_else(default_bg));
    let bg_next = bg_override[1].unwrap_or_else(default_bg);
    let alpha_next = read(1).map(|p| outward(p, bg_next)).unwrap_or(0.0);
    if du + dv > 0 {
        base + alpha_here + alpha_next
    } else {
        base + 1.0 - alpha_here - alpha_next
    }
}

/// Smallest threshold on the 0.001 grid whose measured false positives
/// per image is within `target_fppi * margin_factor`. `per_frame` holds
/// the unthresholded detections plus the ground-truth box per frame.
pub fn calibrate_confidence(
    per_frame: &[(Vec<Detection>, Option<PixelBox>)],
    target_fppi: f64,
    margin_factor: f64,
) -> Result<ConfidenceCalibration> {
    if per_frame.is_empty() {
        return Err(Error::Calibration("empty calibration set".into()));
    }
    let bound = target_fppi * margin_factor;
    let n = per_frame.len() as f64;
    let mut curve = Vec::new();
    for k in 1..=1000u32 {
        let t = k as f64 * 0.001;
        let fp: usize = per_frame.iter().map(|(d, gt)| fp_count(d, gt.as_ref(), t)).sum();
        let fppi = fp as f64 / n;
        if fppi <= bound {
            return Ok(ConfidenceCalibration {
                threshold: t,
                target_fppi,
                margin_factor,
                measured_fppi_at_threshold: fppi,
            });
        }
        curve.push((t, fppi));
    }
    Err(Error::Calibration(format!(
        "no threshold meets FPPI {bound}; curve from {:?} to {:?}",
        curve.first(),
        curve.last()
    )))
}

/// False positives a frame contributes at threshold `t`: every detection
/// at or above `t` except a best-confidence one that matches ground truth
/// at IoU >= 0.5.
fn fp_count(detections: &[Detection], gt: Option<&PixelBox>, t: f64) -> usize {
    let above: Vec<&Detection> = detections.iter().filter(|d| d.confidence >= t).collect();
    if above.is_empty() {
        return 0;
    }
    let best_is_tp = match gt {
        Some(g) => {
            let best = above
                .iter()
                .max_by(|a, b| a.confidence.partial_cmp(&b.confidence).unwrap())
                .unwrap();
            iou(&best.pixel_box, g) >= 0.5
        }
        None => false,
    };
    above.len() - usize::from(best_is_tp)
}
