//! Automated expectation suite over generated datasets: declarative
//! checks on annotation geometry, coverage, class balance, background
//! fraction, and pixel-intensity distribution.

use serde::{Deserialize, Serialize};

use crate::dataset::{Campaign, FrameRecord};
use crate::kinematics::{ActorClass, SimConfig};
use crate::sensors::{CameraModel, Frame};

/// Bins in the pixel-intensity histogram (256 / 4).
pub const INTENSITY_BINS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Severity {
    Info,
    Warning,
    Error,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum ExpectationKind {
    /// Every bounding box lies inside the image frame.
    BoxBounds { image_width: u32, image_height: u32 },
    /// Every `bin_width`-meter distance bin in [min, max) holds at least
    /// one labeled pedestrian frame.
    DistanceCoverage { min_m: f64, max_m: f64, bin_width_m: f64 },
    /// Normalized box centers are spread out, not clustered at one spot.
    CenterDispersion { min_std_x: f64, min_std_y: f64 },
    /// Box aspect ratios (width/height) vary across the set.
    AspectRatioDispersion { min_std: f64 },
    /// Pedestrian demographics by class construction: children,
    /// adult-male, adult-female scenario fractions near the targets.
    DemographicBands { tolerance_points: f64 },
    /// Fraction of background frames (no labeled object) within a band.
    BackgroundFraction { target: f64, tolerance: f64 },
    /// L1 distance between the observed pixel-intensity histogram (over
    /// a deterministic frame sample) and a stored reference.
    IntensityHistogram {
        reference: Vec<f64>,
        max_l1: f64,
        sample_cap: usize,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Expectation {
    pub id: String,
    pub description: String,
    pub kind: ExpectationKind,
    pub severity: Severity,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExpectationResult {
    pub id: String,
    pub passed: bool,
    pub measured: String,
    /// Record ids (image paths) that violate the expectation, capped.
    pub offending: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DataTestReport {
    pub results: Vec<ExpectationResult>,
    pub overall_pass: bool,
}

const OFFENDER_CAP: usize = 20;

/// Expected demographic split by class construction: P7 is the one child
/// class of eight; P2/P4/P6/P8 are adult male; P1/P3/P5 adult female.
pub const CHILD_FRACTION: f64 = 0.125;
pub const ADULT_MALE_FRACTION: f64 = 0.50;
pub const ADULT_FEMALE_FRACTION: f64 = 0.375;

/// The standard suite. Pass the stored reference histogram when one is
/// available; without it the intensity check is omitted.
pub fn default_expectation_suite(reference_histogram: Option<Vec<f64>>) -> Vec<Expectation> {
    let camera = CameraModel::default();
    let mut suite = vec![
        Expectation {
            id: "DAT-BOUNDS".into(),
            description: "all bounding boxes lie within the image".into(),
            kind: ExpectationKind::BoxBounds {
                image_width: camera.image_width,
                image_height: camera.image_height,
            },
            severity: Severity::Error,
        },
        Expectation {
            id: "DAT-DIST".into(),
            description: "pedestrians present in every 10 m band of 10-100 m".into(),
            kind: ExpectationKind::DistanceCoverage {
                min_m: 10.0,
                max_m: 100.0,
                bin_width_m: 10.0,
            },
            severity: Severity::Error,
        },
        Expectation {
            id: "DAT-CENTER".into(),
            description: "box centers are dispersed across the frame".into(),
            kind: ExpectationKind::CenterDispersion {
                min_std_x: 0.05,
                min_std_y: 0.01,
            },
            severity: Severity::Warning,
        },
        Expectation {
            id: "DAT-ASPECT".into(),
            description: "box aspect ratios are dispersed".into(),
            kind: ExpectationKind::AspectRatioDispersion { min_std: 0.02 },
            severity: Severity::Warning,
        },
        Expectation {
            id: "DAT-DEMO".into(),
            description: "child/adult-male/adult-female fractions near 12.5/50/37.5%".into(),
            kind: ExpectationKind::DemographicBands { tolerance_points: 3.0 },
            severity: Severity::Error,
        },
        Expectation {
            id: "DAT-BG".into(),
            description: "background frame fraction within band".into(),
            kind: ExpectationKind::BackgroundFraction {
                target: 0.02,
                tolerance: 0.005,
            },
            severity: Severity::Error,
        },
    ];
    if let Some(reference) = reference_histogram {
        suite.push(Expectation {
            id: "DAT-INTENSITY".into(),
            description: "pixel-intensity histogram close to reference".into(),
            kind: ExpectationKind::IntensityHistogram {
                reference,
                max_l1: 0.05,
                sample_cap: 200,
            },
            severity: Severity::Warning,
        });
    }
    suite
}

/// Evaluate a suite against a record set. The campaign supplies frame
/// reconstruction for pixel-level expectations.
pub fn run_expectations(
    campaign: &Campaign,
    records: &[FrameRecord],
    suite: &[Expectation],
) -> DataTestReport {
    let results: Vec<ExpectationResult> = suite
        .iter()
        .map(|e| evaluate(campaign, records, e))
        .collect();
    let overall_pass = results
        .iter()
        .zip(suite)
        .all(|(r, e)| r.passed || e.severity < Severity::Warning);
    DataTestReport {
        results,
        overall_pass,
    }
}

fn evaluate(campaign: &Campaign, records: &[FrameRecord], e: &Expectation) -> ExpectationResult {
    let (passed, measured, offending) = match &e.kind {
        ExpectationKind::BoxBounds {
            image_width,
            image_height,
        } => box_bounds(records, *image_width, *image_height),
        ExpectationKind::DistanceCoverage {
            min_m,
            max_m,
            bin_width_m,
        } => distance_coverage(records, *min_m, *max_m, *bin_width_m),
        ExpectationKind::CenterDispersion { min_std_x, min_std_y } => {
            center_dispersion(records, *min_std_x, *min_std_y)
        }
        ExpectationKind::AspectRatioDispersion { min_std } => {
            aspect_dispersion(records, *min_std)
        }
        ExpectationKind::DemographicBands { tolerance_points } => {
            demographics(records, *tolerance_points)
        }
        ExpectationKind::BackgroundFraction { target, tolerance } => {
            background_fraction(records, *target, *tolerance)
        }
        ExpectationKind::IntensityHistogram {
            reference,
            max_l1,
            sample_cap,
        } => intensity_check(campaign, records, reference, *max_l1, *sample_cap),
    };
    ExpectationResult {
        id: e.id.clone(),
        passed,
        measured,
        offending,
    }
}

fn box_bounds(records: &[FrameRecord], w: u32, h: u32) -> (bool, String, Vec<String>) {
    let mut offending = Vec::new();
    for r in records {
        if let Some(b) = &r.pixel_box {
            let inside = b.is_valid()
                && b.x_min >= 0.0
                && b.y_min >= 0.0
                && b.x_max <= w as f64
                && b.y_max <= h as f64;
            if !inside && offending.len() < OFFENDER_CAP {
                offending.push(r.image_path.clone());
            } else if !inside {
                break;
            }
        }
    }
    let passed = offending.is_empty();
    (
        passed,
        format!("{} out-of-bounds boxes", offending.len()),
        offending,
    )
}

fn distance_coverage(
    records: &[FrameRecord],
    min_m: f64,
    max_m: f64,
    bin_width_m: f64,
) -> (bool, String, Vec<String>) {
    let bins = ((max_m - min_m) / bin_width_m).round() as usize;
    let mut counts = vec![0usize; bins];
    for r in records {
        if r.normalized_label.is_none() {
            continue;
        }
        if let Some(d) = r.actor_distance {
            if d >= min_m && d < max_m {
                counts[((d - min_m) / bin_width_m) as usize] += 1;
            }
        }
    }
    let empty: Vec<String> = counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| c == 0)
        .map(|(i, _)| {
            format!(
                "bin {:.0}-{:.0} m empty",
                min_m + i as f64 * bin_width_m,
                min_m + (i + 1) as f64 * bin_width_m
            )
        })
        .collect();
    (
        empty.is_empty(),
        format!("bin counts {counts:?}"),
        empty,
    )
}

fn std_dev(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / values.len() as f64).sqrt()
}

fn center_dispersion(
    records: &[FrameRecord],
    min_std_x: f64,
    min_std_y: f64,
) -> (bool, String, Vec<String>) {
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for r in records {
        if let Some(l) = &r.normalized_label {
            xs.push(l.x_center);
            ys.push(l.y_center);
        }
    }
    let (sx, sy) = (std_dev(&xs), std_dev(&ys));
    (
        sx >= min_std_x && sy >= min_std_y,
        format!("center std ({sx:.4}, {sy:.4})"),
        vec![],
    )
}

fn aspect_dispersion(records: &[FrameRecord], min_std: f64) -> (bool, String, Vec<String>) {
    let ratios: Vec<f64> = records
        .iter()
        .filter(|r| r.normalized_label.is_some())
        .filter_map(|r| r.pixel_box.as_ref())
        .map(|b| b.width() / b.height())
        .collect();
    let s = std_dev(&ratios);
    (s >= min_std, format!("aspect std {s:.4}"), vec![])
}

fn demographics(records: &[FrameRecord], tolerance_points: f64) -> (bool, String, Vec<String>) {
    use std::collections::BTreeSet;
    let mut scenarios: BTreeSet<(&str, ActorClass)> = BTreeSet::new();
    for r in records {
        if let Some(class) = r.actor_class {
            if class.is_pedestrian() {
                scenarios.insert((r.scenario_id.as_str(), class));
            }
        }
    }
    let total = scenarios.len() as f64;
    if total == 0.0 {
        return (false, "no pedestrian scenarios".into(), vec![]);
    }
    let frac = |pred: fn(ActorClass) -> bool| {
        scenarios.iter().filter(|(_, c)| pred(*c)).count() as f64 / total
    };
    let child = frac(|c| c.is_child());
    let male = frac(|c| c.is_male());
    let female = frac(|c| c.is_female());
    let tol = tolerance_points / 100.0;
    let passed = (child - CHILD_FRACTION).abs() <= tol
        && (male - ADULT_MALE_FRACTION).abs() <= tol
        && (female - ADULT_FEMALE_FRACTION).abs() <= tol;
    (
        passed,
        format!(
            "child {:.1}% male {:.1}% female {:.1}%",
            child * 100.0,
            male * 100.0,
            female * 100.0
        ),
        vec![],
    )
}

fn background_fraction(
    records: &[FrameRecord],
    target: f64,
    tolerance: f64,
) -> (bool, String, Vec<String>) {
    if records.is_empty() {
        return (false, "no records".into(), vec![]);
    }
    let bg = records.iter().filter(|r| r.is_background()).count() as f64;
    let fraction = bg / records.len() as f64;
    (
        (fraction - target).abs() <= tolerance,
        format!("background fraction {:.4}", fraction),
        vec![],
    )
}

/// Normalized 64-bin intensity histogram over a set of frames.
pub fn intensity_histogram(frames: &[Frame]) -> Vec<f64> {
    let mut counts = vec![0u64; INTENSITY_BINS];
    for f in frames {
        for &p in &f.pixels {
            counts[p as usize * INTENSITY_BINS / 256] += 1;
        }
    }
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return vec![0.0; INTENSITY_BINS];
    }
    counts.iter().map(|&c| c as f64 / total as f64).collect()
}

pub fn histogram_l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Deterministic stride sample of up to `cap` records.
pub fn sample_records<'a>(records: &'a [FrameRecord], cap: usize) -> Vec<&'a FrameRecord> {
    if records.len() <= cap {
        return records.iter().collect();
    }
    let stride = records.len() as f64 / cap as f64;
    (0..cap)
        .map(|i| &records[(i as f64 * stride) as usize])
        .collect()
}

/// Render a deterministic sample of records and compare the intensity
/// histogram to the reference.
pub fn campaign_intensity_histogram(
    campaign: &Campaign,
    records: &[FrameRecord],
    sample_cap: usize,
) -> (Vec<f64>, Vec<String>) {
    let cfg = SimConfig::default();
    let camera = CameraModel::default();
    let background = crate::sensors::render_background(&camera, cfg.road_half_width);
    let mut frames = Vec::new();
    let mut unreadable = Vec::new();
    for r in sample_records(records, sample_cap) {
        match campaign.render_record(r, &cfg, &camera, &background) {
            Ok(f) => frames.push(f),
            Err(err) => unreadable.push(format!("{}: {err}", r.image_path)),
        }
    }
    (intensity_histogram(&frames), unreadable)
}

fn intensity_check(
    campaign: &Campaign,
    records: &[FrameRecord],
    reference: &[f64],
    max_l1: f64,
    sample_cap: usize,
) -> (bool, String, Vec<String>) {
    let (hist, mut offending) = campaign_intensity_histogram(campaign, records, sample_cap);
    let d = histogram_l1(&hist, reference);
    let passed = d <= max_l1 && offending.is_empty();
    offending.truncate(OFFENDER_CAP);
    (passed, format!("L1 distance {d:.4}"), offending)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_campaign, CampaignOptions};
    use crate::sensors::PixelBox;
    use once_cell::sync::Lazy;

    static CAMPAIGN: Lazy<Campaign> = Lazy::new(|| {
        let cfg = SimConfig::default();
        let camera = CameraModel::default();
        let mut suite =
            crate::catalog::enumerate_positive_grid(0.04, cfg.road_half_width).unwrap();
        suite.extend(crate::catalog::enumerate_ood_grid(0.3, cfg.road_half_width).unwrap());
        generate_campaign(&suite, &cfg, &camera, &CampaignOptions::default()).unwrap()
    });

    #[test]
    fn out_of_bounds_box_fails_bounds_listing_the_record() {
        let mut records = CAMPAIGN.records.clone();
        let idx = records.iter().position(|r| r.pixel_box.is_some()).unwrap();
        records[idx].pixel_box = Some(PixelBox::new(700.0, 100.0, 760.0, 200.0));
        let bad_path = records[idx].image_path.clone();
        let suite = default_expectation_suite(None);
        let report = run_expectations(&CAMPAIGN, &records, &suite);
        let bounds = report.results.iter().find(|r| r.id == "DAT-BOUNDS").unwrap();
        assert!(!bounds.passed);
        assert!(bounds.offending.contains(&bad_path));
        assert!(!report.overall_pass);
    }

    #[test]
    fn generated_campaign_passes_default_suite() {
        let suite = default_expectation_suite(None);
        let report = run_expectations(&CAMPAIGN, &CAMPAIGN.records, &suite);
        for r in &report.results {
            assert!(r.passed, "{} failed: {}", r.id, r.measured);
        }
        assert!(report.overall_pass);
    }

    #[test]
    fn demographics_by_construction_are_exact() {
        let suite = default_expectation_suite(None);
        let report = run_expectations(&CAMPAIGN, &CAMPAIGN.records, &suite);
        let demo = report.results.iter().find(|r| r.id == "DAT-DEMO").unwrap();
        assert!(demo.passed, "{}", demo.measured);
        assert_eq!(demo.measured, "child 12.5% male 50.0% female 37.5%");
    }

    #[test]
    fn demographic_scenario_and_frame_fractions_agree() {
        // By grid symmetry the classes have near-equal frame counts, so
        // the frame-weighted fractions match the scenario fractions.
        let records: Vec<&FrameRecord> = CAMPAIGN
            .records
            .iter()
            .filter(|r| r.actor_class.map(|c| c.is_pedestrian()).unwrap_or(false))
            .collect();
        let total = records.len() as f64;
        let frame_child =
            records.iter().filter(|r| r.actor_class.unwrap().is_child()).count() as f64 / total;
        assert!(
            (frame_child - CHILD_FRACTION).abs() < 0.01,
            "frame-weighted child fraction {frame_child}"
        );
    }

    #[test]
    fn single_distance_dataset_fails_nine_coverage_bins() {
        let records: Vec<FrameRecord> = CAMPAIGN
            .records
            .iter()
            .filter(|r| {
                r.normalized_label.is_some()
                    && r.actor_distance.map(|d| (20.0..30.0).contains(&d)).unwrap_or(false)
            })
            .cloned()
            .collect();
        assert!(!records.is_empty());
        let suite = default_expectation_suite(None);
        let report = run_expectations(&CAMPAIGN, &records, &suite);
        let dist = report.results.iter().find(|r| r.id == "DAT-DIST").unwrap();
        assert!(!dist.passed);
        // [10, 100) in 10 m bins is nine bins; the occupied 20-30 m bin
        // leaves eight empty.
        assert_eq!(dist.offending.len(), 8, "{:?}", dist.offending);
    }

    #[test]
    fn intensity_expectation_matches_self_reference() {
        let (reference, unreadable) =
            campaign_intensity_histogram(&CAMPAIGN, &CAMPAIGN.records, 50);
        assert!(unreadable.is_empty());
        assert!((reference.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let suite = default_expectation_suite(Some(reference));
        let report = run_expectations(&CAMPAIGN, &CAMPAIGN.records, &suite);
        let hist = report
            .results
            .iter()
            .find(|r| r.id == "DAT-INTENSITY")
            .unwrap();
        assert!(hist.passed, "{}", hist.measured);
        // A wildly different reference (all mass in bin 0) fails.
        let mut skewed = vec![0.0; INTENSITY_BINS];
        skewed[0] = 1.0;
        let suite = default_expectation_suite(Some(skewed));
        let report = run_expectations(&CAMPAIGN, &CAMPAIGN.records, &suite);
        let hist = report
            .results
            .iter()
            .find(|r| r.id == "DAT-INTENSITY")
            .unwrap();
        assert!(!hist.passed);
        assert!(!report.overall_pass, "warning failures block the verdict");
    }

    #[test]
    fn info_severity_failures_do_not_block_overall_pass() {
        let suite = vec![Expectation {
            id: "DAT-IMPOSSIBLE".into(),
            description: "always fails".into(),
            kind: ExpectationKind::AspectRatioDispersion { min_std: 1e9 },
            severity: Severity::Info,
        }];
        let report = run_expectations(&CAMPAIGN, &CAMPAIGN.records, &suite);
        assert!(!report.results[0].passed);
        assert!(report.overall_pass);
    }

    #[test]
    fn expectation_order_does_not_change_results() {
        let mut suite = default_expectation_suite(None);
        let forward = run_expectations(&CAMPAIGN, &CAMPAIGN.records, &suite);
        suite.reverse();
        let mut backward = run_expectations(&CAMPAIGN, &CAMPAIGN.records, &suite);
        backward.results.reverse();
        for (a, b) in forward.results.iter().zip(&backward.results) {
            assert_eq!(a.id, b.id);
            assert_eq!(a.passed, b.passed);
            assert_eq!(a.measured, b.measured);
        }
    }

    #[test]
    fn suite_round_trips_through_structured_text() {
        let suite = default_expectation_suite(Some(vec![1.0 / INTENSITY_BINS as f64; INTENSITY_BINS]));
        let text = serde_json::to_string_pretty(&suite).unwrap();
        let parsed: Vec<Expectation> = serde_json::from_str(&text).unwrap();
        assert_eq!(parsed.len(), suite.len());
        assert_eq!(parsed[0].id, suite[0].id);
    }
}
