//! Fixed-step world simulation of the ego car and a single actor on a
//! straight single-lane rural road.
//!
//! The world frame is two-dimensional: x runs along the road axis in the
//! ego driving direction, y is the lateral offset from the road center.
//! `EgoVehicle::position` is the x coordinate of the front bumper.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EgoVehicle {
    /// Front bumper position along the road axis (m).
    pub position: f64,
    /// Current speed (m/s), never negative.
    pub speed: f64,
    pub width: f64,
    pub length: f64,
    pub max_deceleration: f64,
    /// Latched for the remainder of a scenario once set (maximum power).
    pub braking_active: bool,
}

impl EgoVehicle {
    pub fn new(speed: f64, config: &SimConfig) -> Self {
        EgoVehicle {
            position: 0.0,
            speed,
            width: config.ego_width,
            length: config.ego_length,
            max_deceleration: config.max_deceleration,
            braking_active: false,
        }
    }
}

/// Visual appearance classes: eight pedestrians and five basic shapes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ActorClass {
    P1,
    P2,
    P3,
    P4,
    P5,
    P6,
    P7,
    P8,
    N1,
    N2,
    N3,
    N4,
    N5,
}

impl ActorClass {
    pub const ALL: [ActorClass; 13] = [
        ActorClass::P1,
        ActorClass::P2,
        ActorClass::P3,
        ActorClass::P4,
        ActorClass::P5,
        ActorClass::P6,
        ActorClass::P7,
        ActorClass::P8,
        ActorClass::N1,
        ActorClass::N2,
        ActorClass::N3,
        ActorClass::N4,
        ActorClass::N5,
    ];
    pub const PEDESTRIANS: [ActorClass; 8] = [
        ActorClass::P1,
        ActorClass::P2,
        ActorClass::P3,
        ActorClass::P4,
        ActorClass::P5,
        ActorClass::P6,
        ActorClass::P7,
        ActorClass::P8,
    ];
    pub const SHAPES: [ActorClass; 5] = [
        ActorClass::N1,
        ActorClass::N2,
        ActorClass::N3,
        ActorClass::N4,
        ActorClass::N5,
    ];

    pub fn is_pedestrian(self) -> bool {
        matches!(
            self,
            ActorClass::P1
                | ActorClass::P2
                | ActorClass::P3
                | ActorClass::P4
                | ActorClass::P5
                | ActorClass::P6
                | ActorClass::P7
                | ActorClass::P8
        )
    }

    pub fn is_shape(self) -> bool {
        !self.is_pedestrian()
    }

    /// Male adults; the catalog has no female shapes or workers.
    pub fn is_male(self) -> bool {
        matches!(
            self,
            ActorClass::P2 | ActorClass::P4 | ActorClass::P6 | ActorClass::P8
        )
    }

    pub fn is_female(self) -> bool {
        matches!(self, ActorClass::P1 | ActorClass::P3 | ActorClass::P5)
    }

    pub fn is_child(self) -> bool {
        self == ActorClass::P7
    }

    /// Standing height of the silhouette (m).
    pub fn height(self) -> f64 {
        match self {
            ActorClass::P1 => 1.70,
            ActorClass::P2 => 1.80,
            ActorClass::P3 => 1.65,
            ActorClass::P4 => 1.85,
            ActorClass::P5 => 1.68,
            ActorClass::P6 => 1.78,
            ActorClass::P7 => 1.20,
            ActorClass::P8 => 1.82,
            ActorClass::N1 => 0.80,
            ActorClass::N2 => 1.00,
            ActorClass::N3 => 1.00,
            ActorClass::N4 => 1.20,
            ActorClass::N5 => 1.60,
        }
    }

    /// Nominal body width before gait modulation (m).
    pub fn base_width(self) -> f64 {
        match self {
            ActorClass::P7 => 0.35,
            c if c.is_pedestrian() => 0.50,
            ActorClass::N1 => 0.80,
            ActorClass::N2 => 1.00,
            ActorClass::N3 => 0.80,
            ActorClass::N4 => 1.00,
            ActorClass::N5 => 0.50,
            _ => unreachable!(),
        }
    }

    /// Grayscale albedo of the rendered silhouette (0-255).
    pub fn albedo(self) -> u8 {
        match self {
            ActorClass::P1 => 58,
            ActorClass::P2 => 42,
            ActorClass::P3 => 62,
            ActorClass::P4 => 38,
            ActorClass::P5 => 66,
            ActorClass::P6 => 34,
            ActorClass::P7 => 52,
            ActorClass::N1 => 50,
            ActorClass::P8 => 46,
            ActorClass::N2 => 60,
            ActorClass::N3 => 48,
            ActorClass::N4 => 54,
            ActorClass::N5 => 44,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ActorClass::P1 => "P1",
            ActorClass::P2 => "P2",
            ActorClass::P3 => "P3",
            ActorClass::P4 => "P4",
            ActorClass::P5 => "P5",
            ActorClass::P6 => "P6",
            ActorClass::P7 => "P7",
            ActorClass::P8 => "P8",
            ActorClass::N1 => "N1",
            ActorClass::N2 => "N2",
            ActorClass::N3 => "N3",
            ActorClass::N4 => "N4",
            ActorClass::N5 => "N5",
        }
    }
}

impl std::str::FromStr for ActorClass {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ActorClass::ALL
            .iter()
            .copied()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown actor class {s}")))
    }
}

impl std::fmt::Display for ActorClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Actor {
    pub class_id: ActorClass,
    /// (x longitudinal, y lateral) in meters, world frame.
    pub world_position: (f64, f64),
    /// Motion direction in degrees; 0 points along +x (ego driving
    /// direction), 90 along +y. Constant within a scenario.
    pub heading: f64,
    /// Constant speed, m/s, within the 15 km/h ODD bound.
    pub speed: f64,
    pub height: f64,
    pub base_width: f64,
    /// Advances with traveled distance; modulates the limb spread.
    pub gait_phase: f64,
}

impl Actor {
    pub fn new(class_id: ActorClass, position: (f64, f64), heading: f64, speed: f64) -> Self {
        Actor {
            class_id,
            world_position: position,
            heading,
            speed,
            height: class_id.height(),
            base_width: class_id.base_width(),
            gait_phase: 0.0,
        }
    }

    pub fn velocity(&self) -> (f64, f64) {
        let rad = self.heading.to_radians();
        (self.speed * rad.cos(), self.speed * rad.sin())
    }

    /// Silhouette width with the gait-driven limb spread applied.
    /// Shapes are rigid, so only pedestrians articulate.
    pub fn silhouette_width(&self) -> f64 {
        if self.class_id.is_pedestrian() {
            self.base_width * (1.0 + 0.4 * self.gait_phase.sin())
        } else {
            self.base_width
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub time: f64,
    pub ego: EgoVehicle,
    pub actor: Option<Actor>,
    pub road_half_width: f64,
    pub collided: bool,
}

/// Simulation configuration; read from a JSON config file by the CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    /// Integration step (s). The camera samples every 0.1 s regardless.
    pub dt: f64,
    pub max_deceleration: f64,
    pub ego_width: f64,
    pub ego_length: f64,
    pub road_half_width: f64,
    /// Hard cap on simulated seconds per scenario.
    pub timeout_s: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            dt: 0.01,
            max_deceleration: 7.85,
            ego_width: 1.9,
            ego_length: 4.7,
            road_half_width: 1.5,
            timeout_s: 30.0,
            seed: 42,
        }
    }
}

/// Gait stride length used to advance the phase with traveled distance.
pub const STRIDE_LENGTH_M: f64 = 1.4;

/// Advance the world by `dt` seconds. Total for all valid states; once
/// `collided` is set the state is frozen.
pub fn step_world(state: &WorldState, dt: f64) -> WorldState {
    debug_assert!(dt > 0.0);
    if state.collided {
        let mut frozen = state.clone();
        frozen.time += dt;
        return frozen;
    }
    let mut next = state.clone();
    next.time += dt;
    if let Some(actor) = next.actor.as_mut() {
        let (vx, vy) = actor.velocity();
        actor.world_position.0 += vx * dt;
        actor.world_position.1 += vy * dt;
        if actor.class_id.is_pedestrian() && actor.speed > 0.0 {
            actor.gait_phase += 2.0 * std::f64::consts::PI * actor.speed * dt / STRIDE_LENGTH_M;
        }
    }
    next.ego.position += next.ego.speed * dt;
    if next.ego.braking_active {
        next.ego.speed = (next.ego.speed - next.ego.max_deceleration * dt).max(0.0);
    }
    if detect_collision(&next) {
        next.collided = true;
    }
    next
}

/// Closed-form braking distance v^2 / (2a).
pub fn stopping_distance(speed: f64, deceleration: f64) -> Result<f64> {
    if deceleration <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "deceleration must be positive, got {deceleration}"
        )));
    }
    if speed < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "speed must be nonnegative, got {speed}"
        )));
    }
    Ok(speed * speed / (2.0 * deceleration))
}

/// True iff the ego footprint rectangle and the actor footprint circle
/// overlap. Contact at exactly zero clearance is not a collision
/// (open-boundary convention).
pub fn detect_collision(state: &WorldState) -> bool {
    let actor = match &state.actor {
        Some(a) => a,
        None => return false,
    };
    let (ax, ay) = actor.world_position;
    let ego = &state.ego;
    // Closest point of the ego rectangle to the actor center.
    let cx = ax.clamp(ego.position - ego.length, ego.position);
    let cy = ay.clamp(-ego.width / 2.0, ego.width / 2.0);
    let dx = ax - cx;
    let dy = ay - cy;
    let r = actor.base_width / 2.0;
    dx * dx + dy * dy < r * r
}
