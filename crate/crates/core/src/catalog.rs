//! Scenario catalog: the data-generation grids, the operational
//! equivalence classes, pairwise covering-array generation, and jitter.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::ActorClass;

/// Distance from a crossing actor's start point to the road edge (m).
pub const CROSSING_SETBACK_M: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScenarioGroup {
    A,
    B,
    C,
    D,
    Ood,
    /// Synthesized empty-road background clips.
    Empty,
    Ops,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScenarioPurpose {
    DataGeneration,
    SystemTest,
}

/// One parameterized execution: drives both data generation and system
/// tests. Data-generation scenarios have a stationary ego; system tests
/// have `ego_speed > 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: String,
    pub actor_class: Option<ActorClass>,
    pub group: ScenarioGroup,
    /// Constant actor speed (m/s).
    pub actor_speed: f64,
    /// World-frame motion heading in degrees (0 = ego driving direction,
    /// 90 = crossing left-to-right).
    pub heading: f64,
    /// Longitudinal gap between ego front bumper and the actor start (m).
    pub longitudinal_distance: f64,
    /// Lateral start offset from the road centerline (m).
    pub lateral_start: f64,
    pub ego_speed: f64,
    /// Total distance the actor travels before the scenario ends; None
    /// means the run is bounded by other stop conditions only.
    pub travel_distance: Option<f64>,
    pub purpose: ScenarioPurpose,
}

impl Scenario {
    pub fn is_pedestrian(&self) -> bool {
        self.actor_class.map(|c| c.is_pedestrian()).unwrap_or(false)
    }
}

fn crossing_travel(road_half_width: f64, heading_deg: f64) -> f64 {
    let span = 2.0 * (road_half_width + CROSSING_SETBACK_M);
    let lateral = heading_deg.to_radians().sin().abs();
    span / lateral
}

const POSITIVE_SPEEDS: [f64; 4] = [1.0, 2.0, 3.0, 4.0];
const CROSSING_ANGLES: [f64; 7] = [30.0, 50.0, 70.0, 90.0, 110.0, 130.0, 150.0];
const LONGITUDINAL_DISTANCES: [f64; 10] =
    [10.0, 20.0, 30.0, 40.0, 50.0, 60.0, 70.0, 80.0, 90.0, 100.0];
const LATERAL_OFFSETS: [f64; 7] = [-3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0];

/// Deterministic pseudo-shuffled row order used by stratified decimation.
fn decimation_order(n: usize) -> Vec<usize> {
    // A fixed large prime coprime to any grid size here.
    const STRIDE: usize = 10_007;
    (0..n).map(|i| (i * STRIDE) % n).collect()
}

/// Deterministic stratified subset of `ceil(n * scale)` rows, grown as
/// needed so every marginal value of every dimension stays represented.
fn decimate<T: Clone>(rows: &[T], scale: f64, marginals: impl Fn(&T) -> Vec<String>) -> Vec<T> {
    if scale >= 1.0 {
        return rows.to_vec();
    }
    let quota = ((rows.len() as f64 * scale).ceil() as usize).max(1);
    let order = decimation_order(rows.len());
    let mut uncovered: std::collections::BTreeSet<String> =
        rows.iter().flat_map(|r| marginals(r)).collect();
    let mut picked_idx: Vec<usize> = Vec::new();
    for &i in &order {
        let keys = marginals(&rows[i]);
        if keys.iter().any(|k| uncovered.contains(k)) {
            for k in keys {
                uncovered.remove(&k);
            }
            picked_idx.push(i);
        }
    }
    for &i in &order {
        if picked_idx.len() >= quota {
            break;
        }
        if !picked_idx.contains(&i) {
            picked_idx.push(i);
        }
    }
    picked_idx.sort_unstable();
    picked_idx.into_iter().map(|i| rows[i].clone()).collect()
}

fn check_scale(scale: f64) -> Result<()> {
    if !(scale > 0.0 && scale <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "scale must be in (0, 1], got {scale}"
        )));
    }
    Ok(())
}

/// The four positive data-generation groups for every pedestrian class.
/// At `scale = 1` this is 616 scenarios per class, 4,928 in total.
pub fn enumerate_positive_grid(scale: f64, road_half_width: f64) -> Result<Vec<Scenario>> {
    check_scale(scale)?;
    let edge = road_half_width + CROSSING_SETBACK_M;
    let mut all = Vec::new();
    for class in ActorClass::PEDESTRIANS {
        // Groups A and B: crossing the road, three variation points.
        for (group, tag) in [(ScenarioGroup::A, "A"), (ScenarioGroup::B, "B")] {
            let mut rows = Vec::new();
            for &speed in &POSITIVE_SPEEDS {
                for &angle in &CROSSING_ANGLES {
                    for &distance in &LONGITUDINAL_DISTANCES {
                        let (lateral_start, heading) = match group {
                            ScenarioGroup::A => (-edge, angle),
                            _ => (edge, 360.0 - angle),
                        };
                        rows.push(Scenario {
                            id: format!("{tag}-{class}-s{speed}-a{angle}-d{distance}"),
                            actor_class: Some(class),
                            group,
                            actor_speed: speed,
                            heading,
                            longitudinal_distance: distance,
                            lateral_start,
                            ego_speed: 0.0,
                            travel_distance: Some(crossing_travel(road_half_width, angle)),
                            purpose: ScenarioPurpose::DataGeneration,
                        });
                    }
                }
            }
            all.extend(decimate(&rows, scale, |s| {
                vec![
                    format!("speed:{}", s.actor_speed),
                    format!("angle:{}", s.heading),
                    format!("dist:{}", s.longitudinal_distance),
                ]
            }));
        }
        // Groups C and D: moving parallel to the road, always 90 m.
        for (group, tag, heading, start) in [
            (ScenarioGroup::C, "C", 180.0, 100.0),
            (ScenarioGroup::D, "D", 0.0, 10.0),
        ] {
            let mut rows = Vec::new();
            for &speed in &POSITIVE_SPEEDS {
                for &offset in &LATERAL_OFFSETS {
                    rows.push(Scenario {
                        id: format!("{tag}-{class}-s{speed}-o{offset}"),
                        actor_class: Some(class),
                        group,
                        actor_speed: speed,
                        heading,
                        longitudinal_distance: start,
                        lateral_start: offset,
                        ego_speed: 0.0,
                        travel_distance: Some(90.0),
                        purpose: ScenarioPurpose::DataGeneration,
                    });
                }
            }
            all.extend(decimate(&rows, scale, |s| {
                vec![
                    format!("speed:{}", s.actor_speed),
                    format!("offset:{}", s.lateral_start),
                ]
            }));
        }
    }
    Ok(all)
}

/// The OOD grid: five basic shapes crossing perpendicular at 4 m/s from
/// either side. 100 scenarios at `scale = 1`.
pub fn enumerate_ood_grid(scale: f64, road_half_width: f64) -> Result<Vec<Scenario>> {
    check_scale(scale)?;
    let edge = road_half_width + CROSSING_SETBACK_M;
    let mut all = Vec::new();
    for class in ActorClass::SHAPES {
        let mut rows = Vec::new();
        for (side, lateral, heading) in [("left", -edge, 90.0), ("right", edge, 270.0)] {
            for &distance in &LONGITUDINAL_DISTANCES {
                rows.push(Scenario {
                    id: format!("OOD-{class}-{side}-d{distance}"),
                    actor_class: Some(class),
                    group: ScenarioGroup::Ood,
                    actor_speed: 4.0,
                    heading,
                    longitudinal_distance: distance,
                    lateral_start: lateral,
                    ego_speed: 0.0,
                    travel_distance: Some(crossing_travel(road_half_width, 90.0)),
                    purpose: ScenarioPurpose::DataGeneration,
                });
            }
        }
        all.extend(decimate(&rows, scale, |s| {
            vec![format!("side:{}", s.lateral_start)]
        }));
    }
    Ok(all)
}

/// One equivalence class: a label and the representative value used when
/// the class is concretized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EqClass {
    pub label: String,
    pub representative: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dimension {
    pub name: String,
    pub classes: Vec<EqClass>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceClassSet {
    pub dimensions: Vec<Dimension>,
    /// Pairs of (dimension, label) combinations that are not physically
    /// meaningful and are excluded from the coverage universe.
    pub invalid_pairs: Vec<((String, String), (String, String))>,
}

impl EquivalenceClassSet {
    fn validate(&self) -> Result<()> {
        if self.dimensions.len() < 2 {
            return Err(Error::InvalidParameter(
                "need at least two dimensions".into(),
            ));
        }
        for d in &self.dimensions {
            if d.classes.is_empty() {
                return Err(Error::InvalidParameter(format!(
                    "dimension {} has no classes",
                    d.name
                )));
            }
            let mut labels: Vec<&str> = d.classes.iter().map(|c| c.label.as_str()).collect();
            labels.sort_unstable();
            labels.dedup();
            if labels.len() != d.classes.len() {
                return Err(Error::InvalidParameter(format!(
                    "dimension {} has duplicate labels",
                    d.name
                )));
            }
        }
        Ok(())
    }

    pub fn pair_is_valid(&self, a: (&str, &str), b: (&str, &str)) -> bool {
        !self.invalid_pairs.iter().any(|(x, y)| {
            (x.0 == a.0 && x.1 == a.1 && y.0 == b.0 && y.1 == b.1)
                || (x.0 == b.0 && x.1 == b.1 && y.0 == a.0 && y.1 == a.1)
        })
    }

    /// All valid unordered value pairs across distinct dimensions.
    pub fn all_valid_pairs(&self) -> Vec<((usize, usize), (usize, usize))> {
        let mut pairs = Vec::new();
        for i in 0..self.dimensions.len() {
            for j in i + 1..self.dimensions.len() {
                for (ai, a) in self.dimensions[i].classes.iter().enumerate() {
                    for (bi, b) in self.dimensions[j].classes.iter().enumerate() {
                        if self.pair_is_valid(
                            (&self.dimensions[i].name, &a.label),
                            (&self.dimensions[j].name, &b.label),
                        ) {
                            pairs.push(((i, ai), (j, bi)));
                        }
                    }
                }
            }
        }
        pairs
    }
}

/// Total combinations: product of dimension sizes.
pub fn cartesian_count(classes: &EquivalenceClassSet) -> u64 {
    classes
        .dimensions
        .iter()
        .map(|d| d.classes.len() as u64)
        .product()
}

fn dim(name: &str, classes: &[(&str, f64)]) -> Dimension {
    Dimension {
        name: name.to_string(),
        classes: classes
            .iter()
            .map(|(label, rep)| EqClass {
                label: label.to_string(),
                representative: *rep,
            })
            .collect(),
    }
}

/// Lateral start classes measured from the road centerline; side starts
/// keep the 5 m setback from the road edge.
fn lateral_dim(road_half_width: f64) -> Dimension {
    let edge = road_half_width + CROSSING_SETBACK_M;
    dim(
        "lateral",
        &[("left", -edge), ("center", 0.0), ("right", edge)],
    )
}

fn side_motion_invalid_pairs() -> Vec<((String, String), (String, String))> {
    let mut pairs = Vec::new();
    for side in ["left", "right"] {
        // A stationary actor off the road can never be on a collision
        // course, nor can one moving parallel to the road from the side.
        pairs.push((
            ("lateral".into(), side.into()),
            ("speed".into(), "stationary".into()),
        ));
        for angle in ["towards", "away"] {
            pairs.push((
                ("lateral".into(), side.into()),
                ("angle".into(), angle.into()),
            ));
        }
    }
    pairs
}

/// The six-dimensional pedestrian operational class set (2,430 combos).
pub fn pedestrian_operational_classes(road_half_width: f64) -> EquivalenceClassSet {
    EquivalenceClassSet {
        dimensions: vec![
            lateral_dim(road_half_width),
            dim(
                "distance",
                &[("close", 15.0), ("medium", 37.5), ("far", 75.0)],
            ),
            // Appearance representatives index the pedestrian classes.
            dim(
                "appearance",
                &[
                    ("female_casual", 0.0),
                    ("male_business_casual", 1.0),
                    ("male_business", 3.0),
                    ("female_business", 2.0),
                    ("child", 6.0),
                    ("male_worker", 5.0),
                ],
            ),
            dim(
                "speed",
                &[("stationary", 0.0), ("slow", 1.0), ("fast", 3.0)],
            ),
            dim(
                "angle",
                &[
                    ("towards", 0.0),
                    ("diagonal_towards", 45.0),
                    ("perpendicular", 90.0),
                    ("diagonal_away", 135.0),
                    ("away", 180.0),
                ],
            ),
            dim(
                "ego_speed",
                &[("slow", 5.0), ("medium", 12.5), ("fast", 17.5)],
            ),
        ],
        invalid_pairs: side_motion_invalid_pairs(),
    }
}

/// The five-dimensional object operational class set (324 combos).
pub fn object_operational_classes(road_half_width: f64) -> EquivalenceClassSet {
    EquivalenceClassSet {
        dimensions: vec![
            lateral_dim(road_half_width),
            dim(
                "distance",
                &[("close", 15.0), ("medium", 37.5), ("far", 75.0)],
            ),
            dim(
                "appearance",
                &[("sphere", 8.0), ("cube", 9.0), ("cone", 10.0), ("pyramid", 11.0)],
            ),
            dim(
                "speed",
                &[("stationary", 0.0), ("slow", 1.0), ("fast", 3.0)],
            ),
            dim(
                "ego_speed",
                &[("slow", 5.0), ("medium", 12.5), ("fast", 17.5)],
            ),
        ],
        invalid_pairs: side_motion_invalid_pairs(),
    }
}

/// Abstract covering-array row: one class index per dimension.
pub type AbstractRow = Vec<usize>;

/// Greedy pairwise covering-array construction. Every valid unordered
/// pair of values from distinct dimensions appears in at least one row.
/// Deterministic given the seed (the seed only breaks ties).
pub fn pairwise_rows(classes: &EquivalenceClassSet, seed: u64) -> Result<Vec<AbstractRow>> {
    classes.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ndim = classes.dimensions.len();
    let mut uncovered: std::collections::BTreeSet<((usize, usize), (usize, usize))> =
        classes.all_valid_pairs().into_iter().collect();
    let mut rows: Vec<AbstractRow> = Vec::new();

    while !uncovered.is_empty() {
        let mut row: Vec<Option<usize>> = vec![None; ndim];
        // Seed from the most-uncovered pair, then fill greedily.
        let first = *uncovered.iter().next().unwrap();
        row[first.0 .0] = Some(first.0 .1);
        row[first.1 .0] = Some(first.1 .1);
        let mut dims: Vec<usize> = (0..ndim).filter(|d| row[*d].is_none()).collect();
        dims.shuffle(&mut rng);
        for d in dims {
            let mut best: Vec<usize> = Vec::new();
            let mut best_gain = -1i64;
            for v in 0..classes.dimensions[d].classes.len() {
                if !value_compatible(classes, &row, d, v) {
                    continue;
                }
                let gain = row
                    .iter()
                    .enumerate()
                    .filter_map(|(od, ov)| ov.map(|ov| (od, ov)))
                    .filter(|&(od, ov)| {
                        let key = if od < d {
                            ((od, ov), (d, v))
                        } else {
                            ((d, v), (od, ov))
                        };
                        uncovered.contains(&key)
                    })
                    .count() as i64;
                match gain.cmp(&best_gain) {
                    std::cmp::Ordering::Greater => {
                        best_gain = gain;
                        best = vec![v];
                    }
                    std::cmp::Ordering::Equal => best.push(v),
                    _ => {}
                }
            }
            if best.is_empty() {
                return Err(Error::InvalidParameter(format!(
                    "no compatible value for dimension {}",
                    classes.dimensions[d].name
                )));
            }
            row[d] = Some(*best.choose(&mut rng).unwrap());
        }
        let row: AbstractRow = row.into_iter().map(|v| v.unwrap()).collect();
        for i in 0..ndim {
            for j in i + 1..ndim {
                uncovered.remove(&((i, row[i]), (j, row[j])));
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

fn value_compatible(
    classes: &EquivalenceClassSet,
    partial: &[Option<usize>],
    d: usize,
    v: usize,
) -> bool {
    partial
        .iter()
        .enumerate()
        .filter_map(|(od, ov)| ov.map(|ov| (od, ov)))
        .all(|(od, ov)| {
            classes.pair_is_valid(
                (
                    &classes.dimensions[d].name,
                    &classes.dimensions[d].classes[v].label,
                ),
                (
                    &classes.dimensions[od].name,
                    &classes.dimensions[od].classes[ov].label,
                ),
            )
        })
}

/// Exhaustive pair-coverage check, independent of the generator.
pub fn verify_pairwise_coverage(classes: &EquivalenceClassSet, rows: &[AbstractRow]) -> bool {
    classes.all_valid_pairs().into_iter().all(|((i, ai), (j, bi))| {
        rows.iter().any(|row| row[i] == ai && row[j] == bi)
    })
}

/// Multiply every numeric scenario field by an independent uniform factor
/// in [0.9, 1.1]; class-valued fields are unchanged. Deterministic given
/// the seed. Results are clamped to simulator-valid bounds.
pub fn apply_jitter(scenario: &Scenario, seed: u64) -> Scenario {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut factor = || rng.gen_range(0.9..=1.1);
    let mut out = scenario.clone();
    out.id = format!("{}-jitter{}", scenario.id, seed);
    out.actor_speed = (scenario.actor_speed * factor()).max(0.0);
    out.heading = scenario.heading * factor();
    out.longitudinal_distance = (scenario.longitudinal_distance * factor()).max(5.0);
    out.lateral_start = scenario.lateral_start * factor();
    out.ego_speed = (scenario.ego_speed * factor()).max(0.0);
    out
}
