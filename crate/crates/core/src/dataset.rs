//! Dataset pipeline: executes data-generation scenarios at 10 FPS,
//! persists frames and annotations, performs the three-way sequestered
//! split with background-image injection, and exports training labels.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::catalog::{Scenario, ScenarioGroup, ScenarioPurpose};
use crate::error::{Error, Result};
use crate::kinematics::{ActorClass, SimConfig};
use crate::sensors::{render_background, render_frame, project_bbox, CameraModel, Frame, PixelBox};
use crate::sim::{frame_count, world_at, FRAME_PERIOD_S};

/// Sequestered split membership by actor class.
pub const DEVELOPMENT_CLASSES: [ActorClass; 4] = [
    ActorClass::P2,
    ActorClass::P3,
    ActorClass::P6,
    ActorClass::N5,
];
pub const INTERNAL_TEST_CLASSES: [ActorClass; 4] = [
    ActorClass::P1,
    ActorClass::P4,
    ActorClass::N1,
    ActorClass::N3,
];
pub const VERIFICATION_CLASSES: [ActorClass; 5] = [
    ActorClass::P5,
    ActorClass::P7,
    ActorClass::P8,
    ActorClass::N2,
    ActorClass::N4,
];

pub const SPLIT_NAMES: [&str; 3] = ["development", "internal-test", "verification"];

/// Which split a class (or an empty-road clip) belongs to.
pub fn split_for_class(class: Option<ActorClass>) -> &'static str {
    match class {
        None => "development",
        Some(c) if DEVELOPMENT_CLASSES.contains(&c) => "development",
        Some(c) if INTERNAL_TEST_CLASSES.contains(&c) => "internal-test",
        Some(_) => "verification",
    }
}

/// Single-class label in normalized xywh form, zero-indexed class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizedLabel {
    pub class: u32,
    pub x_center: f64,
    pub y_center: f64,
    pub width: f64,
    pub height: f64,
}

impl NormalizedLabel {
    pub fn from_box(pixel_box: &PixelBox, camera: &CameraModel) -> Self {
        let w = camera.image_width as f64;
        let h = camera.image_height as f64;
        let (cx, cy) = pixel_box.center();
        NormalizedLabel {
            class: 0,
            x_center: cx / w,
            y_center: cy / h,
            width: pixel_box.width() / w,
            height: pixel_box.height() / h,
        }
    }

    /// One label-file row: `class xc yc w h` at six decimals.
    pub fn to_row(&self) -> String {
        format!(
            "{} {:.6} {:.6} {:.6} {:.6}",
            self.class, self.x_center, self.y_center, self.width, self.height
        )
    }

    pub fn parse_row(row: &str) -> Result<Self> {
        let fields: Vec<&str> = row.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(Error::InvalidParameter(format!(
                "label row must have 5 fields, got {}",
                fields.len()
            )));
        }
        let parse = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| Error::InvalidParameter(format!("bad label field {s:?}")))
        };
        Ok(NormalizedLabel {
            class: fields[0]
                .parse()
                .map_err(|_| Error::InvalidParameter(format!("bad class {:?}", fields[0])))?,
            x_center: parse(fields[1])?,
            y_center: parse(fields[2])?,
            width: parse(fields[3])?,
            height: parse(fields[4])?,
        })
    }
}

/// One camera frame of a data-generation scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub scenario_id: String,
    pub frame_index: usize,
    pub timestamp: f64,
    pub actor_class: Option<ActorClass>,
    /// Ground-truth ego-to-actor distance (m), when an actor exists.
    pub actor_distance: Option<f64>,
    pub pixel_box: Option<PixelBox>,
    /// Present iff the box exists and the actor is a pedestrian class.
    pub normalized_label: Option<NormalizedLabel>,
    pub occluded: bool,
    pub image_path: String,
}

impl FrameRecord {
    /// Background per the no-labeled-object definition.
    pub fn is_background(&self) -> bool {
        self.normalized_label.is_none()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioEntry {
    pub scenario_id: String,
    pub actor_class: Option<ActorClass>,
    pub split: String,
    pub frame_count: usize,
    pub content_hash: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub seed: u64,
    pub total_frames: usize,
    pub images_persisted: bool,
    pub images_hashed: bool,
    pub scenarios: Vec<ScenarioEntry>,
}

impl DatasetManifest {
    /// Hash over the ordered per-scenario content hashes.
    pub fn campaign_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for entry in &self.scenarios {
            hasher.update(entry.scenario_id.as_bytes());
            hasher.update(entry.content_hash.as_bytes());
        }
        hex_digest(hasher)
    }
}

/// The generated campaign: manifest plus in-memory records. Frames are
/// reconstructable on demand (`render_record`), so the records stay cheap
/// even when images are not persisted.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Campaign {
    pub manifest: DatasetManifest,
    pub scenarios: BTreeMap<String, Scenario>,
    pub records: Vec<FrameRecord>,
}

impl Campaign {
    pub fn scenario(&self, id: &str) -> Result<&Scenario> {
        self.scenarios
            .get(id)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown scenario id {id}")))
    }

    /// Re-render the exact frame behind a record.
    pub fn render_record(
        &self,
        record: &FrameRecord,
        cfg: &SimConfig,
        camera: &CameraModel,
        background: &Frame,
    ) -> Result<Frame> {
        let scenario = self.scenario(&record.scenario_id)?;
        let world = world_at(scenario, record.timestamp, cfg);
        Ok(render_frame(&world, camera, background))
    }
}

#[derive(Debug, Clone)]
pub struct CampaignOptions {
    pub seed: u64,
    /// Write PGM frames to disk (label/annotation files always follow
    /// `out_dir`). Full-resolution campaigns are large; hashes still
    /// attest determinism when this is off.
    pub persist_images: bool,
    /// Hash rendered frame bytes into the manifest. When off, hashes
    /// cover the canonical annotation records instead (no rendering).
    pub hash_images: bool,
    /// Target background-image fraction for the development split.
    pub background_fraction: f64,
    pub background_tolerance: f64,
    pub out_dir: Option<PathBuf>,
}

impl Default for CampaignOptions {
    fn default() -> Self {
        CampaignOptions {
            seed: 42,
            persist_images: false,
            hash_images: false,
            background_fraction: 0.02,
            background_tolerance: 0.005,
            out_dir: None,
        }
    }
}

fn hex_digest(hasher: Sha256) -> String {
    let bytes = hasher.finalize();
    let mut s = String::with_capacity(64);
    for b in bytes {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent.display().to_string(), e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Synthesized empty-road clip (no actor).
pub fn empty_road_scenario(index: usize) -> Scenario {
    Scenario {
        id: format!("EMPTY-{index:03}"),
        actor_class: None,
        group: ScenarioGroup::Empty,
        actor_speed: 0.0,
        heading: 0.0,
        longitudinal_distance: 0.0,
        lateral_start: 0.0,
        ego_speed: 0.0,
        travel_distance: None,
        purpose: ScenarioPurpose::DataGeneration,
    }
}

/// Execute every scenario and assemble records plus the manifest.
/// Pedestrian scenarios keep only frames where the pedestrian projects
/// into the image; shape and empty clips keep every frame. Empty-road
/// clips are appended until the development split's background fraction
/// reaches the configured target. Deterministic given the seed.
pub fn generate_campaign(
    suite: &[Scenario],
    cfg: &SimConfig,
    camera: &CameraModel,
    options: &CampaignOptions,
) -> Result<Campaign> {
    let mut scenarios: BTreeMap<String, Scenario> = BTreeMap::new();
    for s in suite {
        if scenarios.insert(s.id.clone(), s.clone()).is_some() {
            return Err(Error::InvalidParameter(format!(
                "duplicate scenario id {}",
                s.id
            )));
        }
    }

    // Background injection: size the empty-road padding from the
    // post-trim development frame counts. Shape clips count as
    // background (no labeled object) already.
    let mut dev_frames = 0usize;
    let mut dev_background = 0usize;
    let mut probe_records: BTreeMap<String, Vec<FrameRecord>> = BTreeMap::new();
    for scenario in scenarios.values() {
        let records = scenario_records(scenario, cfg, camera);
        if split_for_class(scenario.actor_class) == "development" {
            dev_frames += records.len();
            dev_background += records.iter().filter(|r| r.is_background()).count();
        }
        probe_records.insert(scenario.id.clone(), records);
    }
    let target = options.background_fraction;
    if dev_frames > 0 {
        let current = dev_background as f64 / dev_frames as f64;
        if current < target {
            // Solve (B + e) / (F + e) = target for the padding frames e.
            let pad_frames =
                ((target * dev_frames as f64 - dev_background as f64) / (1.0 - target)).ceil();
            let per_clip = frame_count(&empty_road_scenario(0));
            let clips = (pad_frames / per_clip as f64).round().max(0.0) as usize;
            for k in 0..clips {
                let s = empty_road_scenario(k);
                let records = scenario_records(&s, cfg, camera);
                probe_records.insert(s.id.clone(), records);
                scenarios.insert(s.id.clone(), s);
            }
        }
    }

    let result = persist_and_hash(&scenarios, probe_records, cfg, camera, options);
    if result.is_err() {
        if let Some(dir) = &options.out_dir {
            // Best-effort marker so partial output is never mistaken for
            // a complete campaign.
            let _ = std::fs::write(dir.join("PARTIAL"), b"campaign aborted\n");
        }
    }
    let (entries, records) = result?;

    let manifest = DatasetManifest {
        seed: options.seed,
        total_frames: records.len(),
        images_persisted: options.persist_images,
        images_hashed: options.hash_images,
        scenarios: entries,
    };
    if let Some(dir) = &options.out_dir {
        let json = serde_json::to_vec_pretty(&manifest)?;
        write_file(&dir.join("manifest.json"), &json)?;
    }
    Ok(Campaign {
        manifest,
        scenarios,
        records,
    })
}

/// Metadata-only records for one scenario (no rendering).
fn scenario_records(scenario: &Scenario, cfg: &SimConfig, camera: &CameraModel) -> Vec<FrameRecord> {
    let split = split_for_class(scenario.actor_class);
    let n = frame_count(scenario);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let t = i as f64 * FRAME_PERIOD_S;
        let world = world_at(scenario, t, cfg);
        let projected = world
            .actor
            .as_ref()
            .and_then(|a| project_bbox(a, camera, world.ego.position));
        if projected.is_none() && scenario.is_pedestrian() {
            continue;
        }
        let (pixel_box, occluded) = match &projected {
            Some((b, occ)) => (Some(b.clone()), *occ),
            None => (None, false),
        };
        let normalized_label = match (&pixel_box, scenario.actor_class) {
            (Some(b), Some(c)) if c.is_pedestrian() => {
                Some(NormalizedLabel::from_box(b, camera))
            }
            _ => None,
        };
        let actor_distance = world.actor.as_ref().map(|a| {
            let dx = a.world_position.0 - world.ego.position;
            let dy = a.world_position.1;
            (dx * dx + dy * dy).sqrt()
        });
        out.push(FrameRecord {
            scenario_id: scenario.id.clone(),
            frame_index: i,
            timestamp: t,
            actor_class: scenario.actor_class,
            actor_distance,
            pixel_box,
            normalized_label,
            occluded,
            image_path: format!("{split}/{}/frames/{i:04}.pgm", scenario.id),
        });
    }
    out
}

type PersistResult = (Vec<ScenarioEntry>, Vec<FrameRecord>);

fn persist_and_hash(
    scenarios: &BTreeMap<String, Scenario>,
    probe_records: BTreeMap<String, Vec<FrameRecord>>,
    cfg: &SimConfig,
    camera: &CameraModel,
    options: &CampaignOptions,
) -> Result<PersistResult> {
    let background = render_background(camera, cfg.road_half_width);
    let mut entries = Vec::new();
    let mut all_records = Vec::new();
    for (id, records) in probe_records {
        let scenario = &scenarios[&id];
        let mut hasher = Sha256::new();
        let mut annotations = Vec::new();
        for record in &records {
            if options.hash_images || options.persist_images {
                let world = world_at(scenario, record.timestamp, cfg);
                let frame = render_frame(&world, camera, &background);
                let pgm = frame.to_pgm();
                if options.hash_images {
                    hasher.update(&pgm);
                }
                if options.persist_images {
                    let dir = options.out_dir.as_ref().ok_or_else(|| {
                        Error::InvalidParameter(
                            "persist_images requires an output directory".into(),
                        )
                    })?;
                    write_file(&dir.join(&record.image_path), &pgm)?;
                }
            }
            let line = serde_json::to_string(record)?;
            if !options.hash_images {
                hasher.update(line.as_bytes());
                hasher.update(b"\n");
            }
            annotations.extend_from_slice(line.as_bytes());
            annotations.push(b'\n');
        }
        if let Some(dir) = &options.out_dir {
            let split = split_for_class(scenario.actor_class);
            write_file(
                &dir.join(format!("{split}/{id}/annotations.jsonl")),
                &annotations,
            )?;
        }
        entries.push(ScenarioEntry {
            scenario_id: id.clone(),
            actor_class: scenario.actor_class,
            split: split_for_class(scenario.actor_class).to_string(),
            frame_count: records.len(),
            content_hash: hex_digest(hasher),
        });
        all_records.extend(records);
    }
    Ok((entries, all_records))
}

/// One split after routing, with the development-internal 80/20
/// training/validation partition on whole scenarios.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub name: String,
    pub member_classes: Vec<ActorClass>,
    pub records: Vec<FrameRecord>,
    pub background_fraction: f64,
    /// Scenario ids; populated for the development split only.
    pub training_scenarios: Vec<String>,
    pub validation_scenarios: Vec<String>,
}

impl DatasetSplit {
    pub fn training_records(&self) -> impl Iterator<Item = &FrameRecord> {
        self.records
            .iter()
            .filter(|r| self.training_scenarios.contains(&r.scenario_id))
    }

    pub fn validation_records(&self) -> impl Iterator<Item = &FrameRecord> {
        self.records
            .iter()
            .filter(|r| self.validation_scenarios.contains(&r.scenario_id))
    }
}

/// Route records into the three sequestered splits and partition the
/// development split ~80/20 by frames, keeping scenarios whole and
/// balancing each (class, group) cell separately.
pub fn split_datasets(campaign: &Campaign) -> Result<[DatasetSplit; 3]> {
    let member_sets: [(&str, Vec<ActorClass>); 3] = [
        ("development", DEVELOPMENT_CLASSES.to_vec()),
        ("internal-test", INTERNAL_TEST_CLASSES.to_vec()),
        ("verification", VERIFICATION_CLASSES.to_vec()),
    ];
    // Disjointness is structural, but verify rather than trust.
    for i in 0..3 {
        for j in i + 1..3 {
            if member_sets[i].1.iter().any(|c| member_sets[j].1.contains(c)) {
                return Err(Error::Invariant(
                    "split member classes overlap".into(),
                ));
            }
        }
    }

    let mut splits = Vec::new();
    for (name, classes) in member_sets {
        let records: Vec<FrameRecord> = campaign
            .records
            .iter()
            .filter(|r| split_for_class(r.actor_class) == name)
            .cloned()
            .collect();
        let background = records.iter().filter(|r| r.is_background()).count();
        let background_fraction = if records.is_empty() {
            0.0
        } else {
            background as f64 / records.len() as f64
        };
        let (training_scenarios, validation_scenarios) = if name == "development" {
            partition_development(campaign, &records)
        } else {
            (Vec::new(), Vec::new())
        };
        splits.push(DatasetSplit {
            name: name.to_string(),
            member_classes: classes,
            records,
            background_fraction,
            training_scenarios,
            validation_scenarios,
        });
    }
    Ok([
        splits.remove(0),
        splits.remove(0),
        splits.remove(0),
    ])
}

/// Whole-scenario 80/20 partition per (class, group) cell via nearest
/// subset-sum, so no video sequence straddles training and validation.
fn partition_development(
    campaign: &Campaign,
    records: &[FrameRecord],
) -> (Vec<String>, Vec<String>) {
    let mut cells: BTreeMap<(String, String), Vec<(String, usize)>> = BTreeMap::new();
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for r in records {
        *counts.entry(r.scenario_id.clone()).or_insert(0) += 1;
    }
    for (id, n) in &counts {
        let s = &campaign.scenarios[id];
        let class = s
            .actor_class
            .map(|c| c.to_string())
            .unwrap_or_else(|| "empty".into());
        let group = format!("{:?}", s.group);
        cells
            .entry((class, group))
            .or_default()
            .push((id.clone(), *n));
    }
    let mut training = Vec::new();
    let mut validation = Vec::new();
    for ((_, _), members) in cells {
        let total: usize = members.iter().map(|(_, n)| n).sum();
        let target = (0.8 * total as f64).round() as usize;
        let chosen = nearest_subset_sum(&members, target);
        for (id, _) in &members {
            if chosen.contains(id) {
                training.push(id.clone());
            } else {
                validation.push(id.clone());
            }
        }
    }
    training.sort();
    validation.sort();
    (training, validation)
}

/// Deterministic subset of `members` whose frame total is closest to
/// `target` (ties resolved toward the smaller sum).
fn nearest_subset_sum(members: &[(String, usize)], target: usize) -> Vec<String> {
    let total: usize = members.iter().map(|(_, n)| n).sum();
    // parent[sum] = (previous sum, member index) for one way to reach it.
    let mut parent: Vec<Option<(usize, usize)>> = vec![None; total + 1];
    let mut reachable = vec![false; total + 1];
    reachable[0] = true;
    for (idx, (_, n)) in members.iter().enumerate() {
        for sum in (0..=total.saturating_sub(*n)).rev() {
            if reachable[sum] && !reachable[sum + n] {
                reachable[sum + n] = true;
                parent[sum + n] = Some((sum, idx));
            }
        }
    }
    let best = (0..=total)
        .filter(|&s| reachable[s])
        .min_by_key(|&s| (s.abs_diff(target), s))
        .unwrap_or(0);
    let mut chosen = Vec::new();
    let mut cursor = best;
    while cursor != 0 {
        let (prev, idx) = parent[cursor].expect("reachable sums have parents");
        chosen.push(members[idx].0.clone());
        cursor = prev;
    }
    chosen
}

/// Write one label file per image: normalized xywh rows for labeled
/// frames, empty files for background frames.
pub fn export_labels(split: &DatasetSplit, out_dir: &Path) -> Result<usize> {
    let mut written = 0;
    for record in &split.records {
        let rel = record.image_path.replace("/frames/", "/labels/");
        let rel = rel.replace(".pgm", ".txt");
        let path = out_dir.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent.display().to_string(), e))?;
        }
        let mut f = std::fs::File::create(&path).map_err(|e| Error::io(path.display().to_string(), e))?;
        if let Some(label) = &record.normalized_label {
            writeln!(f, "{}", label.to_row()).map_err(|e| Error::io(path.display().to_string(), e))?;
        }
        written += 1;
    }
    Ok(written)
}
