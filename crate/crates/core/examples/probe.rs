//! Scratch probe: trace failing system-test pedestrian cases.
use paeb_core::cage::SafetyCage;
use paeb_core::catalog::pedestrian_operational_classes;
use paeb_core::kinematics::SimConfig;
use paeb_core::perception::detect;
use paeb_core::pipeline::ModelBundle;
use paeb_core::sensors::{CameraModel, Frame};
use paeb_core::sim::{run_scenario, PerceptionPipeline};
use paeb_core::systest::concretize_rows;
use std::path::Path;

struct Tracer {
    det: paeb_core::perception::DetectorModel,
    thr: f64,
    cage: SafetyCage,
}

impl PerceptionPipeline for Tracer {
    fn reset(&mut self) {
        self.cage.reset();
    }
    fn assess(&mut self, frame: &Frame, camera: &CameraModel) -> bool {
        let dets = detect(&self.det, frame, camera, 0.0).unwrap_or_default();
        let best = dets.first();
        let (conf, verdict) = match best {
            None => (f64::NAN, "no-candidate".to_string()),
            Some(b) => {
                if b.confidence < self.thr {
                    (b.confidence, "below-threshold".into())
                } else {
                    let dist = camera.row_to_distance(b.pixel_box.y_max).unwrap_or(f64::MAX);
                    let v = self.cage.assess(frame, &b.pixel_box, dist, camera);
                    (
                        b.confidence,
                        format!(
                            "box=({:.1},{:.1})-({:.1},{:.1}) cam_dist={dist:.2} cage {:?} accepted={}",
                            b.pixel_box.x_min, b.pixel_box.y_min, b.pixel_box.x_max, b.pixel_box.y_max,
                            v.reason, v.accepted
                        ),
                    )
                }
            }
        };
        println!("    assess: conf={conf:.3} -> {verdict}");
        verdict.starts_with("cage") && verdict.ends_with("true")
    }
}

fn main() {
    let out = Path::new("/tmp/probe");
    let bundle: ModelBundle = serde_json::from_str(
        &std::fs::read_to_string(out.join("models/model.json")).unwrap(),
    )
    .unwrap();
    let cfg = SimConfig::default();
    let camera = CameraModel::default();
    let classes = paeb_core::catalog::object_operational_classes(cfg.road_half_width);
    let rows = paeb_core::catalog::pairwise_rows(&classes, 42).unwrap();
    let cases = concretize_rows(&classes, &rows, "TC-OS-OBJ", &cfg, &camera).unwrap();
    for idx in [4usize] {
        let tc = &cases[idx];
        let s = paeb_core::catalog::apply_jitter(&tc.scenario, 42 + 35);
        let s = &s;
        println!(
            "== {} class={:?} speed={} heading={} dist={} lat={} ego={}",
            tc.id, s.actor_class, s.actor_speed, s.heading,
            s.longitudinal_distance, s.lateral_start, s.ego_speed
        );
        let mut tracer = Tracer {
            det: bundle.detector.clone(),
            thr: bundle.confidence.threshold,
            cage: SafetyCage::new(bundle.cage.clone(), bundle.ood.clone()),
        };
        let trace = run_scenario(s, &cfg, &camera, &mut tracer, true).unwrap();
        for f in &trace.frames {
            if f.triggered || f.ttc.is_some() {
                println!(
                    "  t={:5.1} ego@{:6.2} actor={:?} ttc={:?} course={} trig={} brake={}",
                    f.time, f.ego_position, f.actor_position, f.ttc,
                    f.collision_course, f.triggered, f.braking
                );
            }
        }
        println!(
            "  -> trig={:?} brake={:?} collision={} min_dist={:.2}",
            trace.time_trigger, trace.time_brake, trace.collision, trace.min_distance
        );
    }
}
