//! Fixed-timestep world with a standard and an affective vehicle.
//!
//! Both vehicles seek their target with linear arrive damping. The standard
//! vehicle always flies with neutral modifiers and is pinned to its lane; the
//! affective vehicle takes the per-utterance [`BehaviorModifiers`] and a
//! one-shot vertical kick when a move command arrives.

use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::affect::BehaviorModifiers;
use crate::command::{CommandIntent, IntentKind, Side};
use crate::trajectory::{TickRecord, TrajectoryLog};

/// Slack allowed on the velocity bound at tick boundaries.
pub const SPEED_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Self = Self { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn length(self) -> f64 {
        (self.x * self.x + self.y * self.y).sqrt()
    }

    /// Scales the vector down so its length is at most `max`.
    pub fn clamp_length(self, max: f64) -> Self {
        let len = self.length();
        if len > max {
            self * (max / len)
        } else {
            self
        }
    }

    pub fn normalize_or_zero(self) -> Self {
        let len = self.length();
        if len > 0.0 {
            self * (1.0 / len)
        } else {
            Self::ZERO
        }
    }
}

impl From<[f64; 2]> for Vec2 {
    fn from([x, y]: [f64; 2]) -> Self {
        Self { x, y }
    }
}

impl From<Vec2> for [f64; 2] {
    fn from(v: Vec2) -> Self {
        [v.x, v.y]
    }
}

impl Add for Vec2 {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Vec2 {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Self;
    fn mul(self, k: f64) -> Self {
        Self::new(self.x * k, self.y * k)
    }
}

/// World geometry and vehicle dynamics. Units are px and seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    pub width: f64,
    pub height: f64,
    pub left_target: Vec2,
    pub right_target: Vec2,
    pub lane_y_standard: f64,
    pub lane_y_affective: f64,
    pub dt: f64,
    pub base_max_speed: f64,
    pub base_max_force: f64,
    pub arrival_radius: f64,
    pub snap_radius: f64,
    pub t_max: f64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            width: 2500.0,
            height: 1300.0,
            left_target: Vec2::new(200.0, 650.0),
            right_target: Vec2::new(2300.0, 650.0),
            lane_y_standard: 500.0,
            lane_y_affective: 800.0,
            dt: 1.0 / 60.0,
            base_max_speed: 600.0,
            base_max_force: 1200.0,
            arrival_radius: 100.0,
            snap_radius: 5.0,
            t_max: 30.0,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("width", self.width),
            ("height", self.height),
            ("dt", self.dt),
            ("base_max_speed", self.base_max_speed),
            ("base_max_force", self.base_max_force),
            ("arrival_radius", self.arrival_radius),
            ("snap_radius", self.snap_radius),
            ("t_max", self.t_max),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(format!("world.{name} must be finite and > 0"));
            }
        }
        let inside = |p: Vec2| (0.0..=self.width).contains(&p.x) && (0.0..=self.height).contains(&p.y);
        for (name, p) in [("left_target", self.left_target), ("right_target", self.right_target)] {
            if !inside(p) {
                return Err(format!("world.{name} must lie inside the window"));
            }
        }
        for (name, y) in [
            ("lane_y_standard", self.lane_y_standard),
            ("lane_y_affective", self.lane_y_affective),
        ] {
            if !(0.0..=self.height).contains(&y) {
                return Err(format!("world.{name} must lie inside the window"));
            }
        }
        if self.snap_radius >= self.arrival_radius {
            return Err("world.snap_radius must be < world.arrival_radius".into());
        }
        Ok(())
    }

    pub fn target_x(&self, side: Side) -> f64 {
        match side {
            Side::Left => self.left_target.x,
            Side::Right => self.right_target.x,
        }
    }

    pub fn lane_y(&self, id: AgentId) -> f64 {
        match id {
            AgentId::Standard => self.lane_y_standard,
            AgentId::Affective => self.lane_y_affective,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentId {
    Standard,
    Affective,
}

impl AgentId {
    pub const ALL: [AgentId; 2] = [AgentId::Standard, AgentId::Affective];

    pub fn as_str(self) -> &'static str {
        match self {
            AgentId::Standard => "standard",
            AgentId::Affective => "affective",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VehicleState {
    pub id: AgentId,
    pub pos: Vec2,
    pub vel: Vec2,
    pub lane_y: f64,
    pub target: Option<Side>,
    pub modifiers: BehaviorModifiers,
    pub emoji: String,
    pub light: bool,
    pub arrived: bool,
}

impl VehicleState {
    pub fn max_speed(&self, config: &WorldConfig) -> f64 {
        config.base_max_speed * self.modifiers.speed_scale
    }

    pub fn snapshot(&self) -> AgentSnapshot {
        AgentSnapshot {
            id: self.id,
            x: self.pos.x,
            y: self.pos.y,
            vx: self.vel.x,
            vy: self.vel.y,
            target: self.target,
            emoji: self.emoji.clone(),
            light: self.light,
            arrived: self.arrived,
        }
    }
}

/// Wire and log shape of one vehicle at a tick boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSnapshot {
    pub id: AgentId,
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
    pub target: Option<Side>,
    pub emoji: String,
    pub light: bool,
    pub arrived: bool,
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("predicate not satisfied within {t_max} s of simulated time")]
    TimeoutExceeded { t_max: f64, log: Box<TrajectoryLog> },
}

impl SimError {
    pub fn code(&self) -> &'static str {
        match self {
            SimError::TimeoutExceeded { .. } => "timeout_exceeded",
        }
    }
}

/// The two-vehicle world. Time is always `tick_count * dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct World {
    config: WorldConfig,
    tick_count: u64,
    vehicles: [VehicleState; 2],
}

impl World {
    /// Places both vehicles at rest at the left end of their lanes.
    pub fn new(config: WorldConfig, neutral_emoji: &str) -> Self {
        let spawn = |id: AgentId| VehicleState {
            id,
            pos: Vec2::new(config.left_target.x, config.lane_y(id)),
            vel: Vec2::ZERO,
            lane_y: config.lane_y(id),
            target: None,
            modifiers: BehaviorModifiers::NEUTRAL,
            emoji: neutral_emoji.to_owned(),
            light: false,
            arrived: false,
        };
        let vehicles = [spawn(AgentId::Standard), spawn(AgentId::Affective)];
        Self {
            config,
            tick_count: 0,
            vehicles,
        }
    }

    pub fn config(&self) -> &WorldConfig {
        &self.config
    }

    pub fn tick_count(&self) -> u64 {
        self.tick_count
    }

    pub fn time_s(&self) -> f64 {
        self.tick_count as f64 * self.config.dt
    }

    pub fn vehicle(&self, id: AgentId) -> &VehicleState {
        match id {
            AgentId::Standard => &self.vehicles[0],
            AgentId::Affective => &self.vehicles[1],
        }
    }

    /// Mutable vehicle access, for staging test scenarios.
    pub fn vehicle_mut(&mut self, id: AgentId) -> &mut VehicleState {
        match id {
            AgentId::Standard => &mut self.vehicles[0],
            AgentId::Affective => &mut self.vehicles[1],
        }
    }

    pub fn vehicles(&self) -> &[VehicleState; 2] {
        &self.vehicles
    }

    pub fn record(&self) -> TickRecord {
        TickRecord {
            tick: self.tick_count,
            time_s: self.time_s(),
            agents: [self.vehicles[0].snapshot(), self.vehicles[1].snapshot()],
        }
    }

    /// Applies a parsed command. Move commands preempt any flight in progress.
    pub fn apply_utterance(&mut self, intent: &CommandIntent, modifiers: BehaviorModifiers, emoji: &str) {
        match intent.kind() {
            IntentKind::NoCommand => {}
            IntentKind::LightOn => {
                for v in &mut self.vehicles {
                    v.light = true;
                }
            }
            IntentKind::MoveTo(side) => {
                for v in &mut self.vehicles {
                    v.target = Some(side);
                    v.arrived = false;
                }
                let affective = &mut self.vehicles[1];
                affective.modifiers = modifiers;
                affective.emoji = emoji.to_owned();
                affective.vel.y += modifiers.impulse_vy;
            }
        }
    }

    /// Advances the world by one `dt`.
    pub fn tick(&mut self) {
        let config = &self.config;
        for v in &mut self.vehicles {
            step_vehicle(v, config);
            debug_assert!(
                v.vel.length() <= v.max_speed(config) + SPEED_EPSILON,
                "velocity bound violated for {:?}",
                v.id
            );
        }
        self.tick_count += 1;
    }

    /// Ticks until `done` holds or `t_max` seconds of simulated time have
    /// passed since the call. The log holds one record per tick taken.
    pub fn run_until<F>(&mut self, mut done: F, t_max: f64) -> Result<TrajectoryLog, SimError>
    where
        F: FnMut(&World) -> bool,
    {
        let start = self.tick_count;
        let mut log = TrajectoryLog::new(&self.config);
        loop {
            if done(self) {
                return Ok(log);
            }
            if (self.tick_count - start) as f64 * self.config.dt >= t_max {
                return Err(SimError::TimeoutExceeded {
                    t_max,
                    log: Box::new(log),
                });
            }
            self.tick();
            log.records.push(self.record());
        }
    }
}

fn step_vehicle(v: &mut VehicleState, config: &WorldConfig) {
    let Some(side) = v.target else {
        return;
    };
    if v.arrived {
        return;
    }
    let goal = Vec2::new(config.target_x(side), v.lane_y);
    let to_goal = goal - v.pos;
    let distance = to_goal.length();

    let mut max_speed = v.max_speed(config);
    if distance < config.arrival_radius {
        max_speed *= distance / config.arrival_radius;
    }
    let desired = to_goal.normalize_or_zero() * max_speed;
    let max_steer = config.base_max_force * v.modifiers.force_scale * config.dt;
    let steer = (desired - v.vel).clamp_length(max_steer);
    v.vel = (v.vel + steer).clamp_length(max_speed);
    v.pos = v.pos + v.vel * config.dt;

    if v.id == AgentId::Standard {
        v.pos.y = v.lane_y;
    }
    v.pos.x = v.pos.x.clamp(0.0, config.width);
    v.pos.y = v.pos.y.clamp(0.0, config.height);

    if (goal - v.pos).length() <= config.snap_radius {
        v.pos.x = goal.x;
        if v.id == AgentId::Standard {
            v.pos.y = v.lane_y;
        }
        v.vel = Vec2::ZERO;
        v.arrived = true;
    }
}
