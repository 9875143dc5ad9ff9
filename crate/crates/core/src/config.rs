//! Scenario files.
//!
//! A scenario is a TOML document:
//!
//! ```toml
//! [map]
//! width = 70.0          # meters
//! height = 70.0
//! spacing = 5.0         # lattice pitch
//! base = [0.0, 0.0]     # base station position
//!
//! [comm]
//! d_comm_max = 22.5     # link range
//! c_comm_max = 10.0     # link cost at (and beyond) the range
//! # obstacle_weight = 2.0   default 0.2 * c_comm_max
//! # clutter_radius = 5.0    default spacing
//! # link_margin = 1.0       multiplier on the range for link admission
//!
//! [fleet]
//! size = 5
//!
//! [run]
//! betas = [0.0, 0.5, 1.0]
//! k = 1                 # visits per node for coverage
//! max_rounds = 5000
//! seeds = [1, 2, 3]
//! window = 0            # sliding count window in rounds, 0 = cumulative
//!
//! [obstacles]
//! rects = [[10.0, 10.0, 20.0, 15.0]]           # x0, y0, x1, y1
//! # random = { count = 4, min_size = 5.0, max_size = 15.0 }   seed defaults to the run seed
//!
//! [[targets]]
//! at = [40.0, 40.0]
//! service_rounds = 5
//!
//! [[events]]
//! round = 30
//! action = "remove"     # remove | detach | reintegrate
//! uav = 2
//! # at = [2.5, 2.5]     reintegration node
//! ```
//!
//! Positions are snapped to the nearest lattice node.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{build_grid_graph, CommModel, GraphError, GridSpec, NavGraph, Position, Rect};
use crate::metrics::CoverageGoal;
use crate::sim::{SwarmEvent, TargetSpec};

/// Scenario shipped with the repository: 70 x 70 m at 5 m pitch (196
/// nodes), five UAVs, three beta values, random obstacle layouts per seed.
pub const REFERENCE_SCENARIO: &str = include_str!("../scenarios/reference.toml");

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("serialize error: {0}")]
    Serialize(#[from] toml::ser::Error),
    #[error("invalid `{field}`: {reason}")]
    Invalid { field: String, reason: String },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("could not place random obstacle {index} after {attempts} attempts without cutting off part of the map")]
    ObstaclePlacement { index: usize, attempts: usize },
}

fn invalid(field: impl Into<String>, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.into(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub map: MapConfig,
    pub comm: CommConfig,
    pub fleet: FleetConfig,
    pub run: RunConfig,
    #[serde(default, skip_serializing_if = "ObstacleConfig::is_empty")]
    pub obstacles: ObstacleConfig,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub targets: Vec<TargetConfig>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub events: Vec<EventConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapConfig {
    pub width: f64,
    pub height: f64,
    pub spacing: f64,
    pub base: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommConfig {
    pub d_comm_max: f64,
    pub c_comm_max: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub obstacle_weight: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clutter_radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub link_margin: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FleetConfig {
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub betas: Vec<f64>,
    pub k: u64,
    pub max_rounds: u64,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub window: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObstacleConfig {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rects: Vec<[f64; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub random: Option<RandomObstacles>,
}

impl ObstacleConfig {
    pub fn is_empty(&self) -> bool {
        self.rects.is_empty() && self.random.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomObstacles {
    pub count: usize,
    pub min_size: f64,
    pub max_size: f64,
    /// Layout seed; when absent each run seed gets its own layout.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetConfig {
    pub at: [f64; 2],
    pub service_rounds: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventAction {
    Remove,
    Detach,
    Reintegrate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventConfig {
    pub round: u64,
    pub action: EventAction,
    pub uav: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub at: Option<[f64; 2]>,
}

const PLACEMENT_ATTEMPTS: usize = 200;

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let config: ScenarioConfig = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn reference() -> Self {
        Self::from_toml(REFERENCE_SCENARIO).expect("reference scenario is valid")
    }

    pub fn to_toml(&self) -> Result<String, ConfigError> {
        Ok(toml::to_string(self)?)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = |field: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(invalid(field, format!("must be positive, got {v}")))
            }
        };
        let m = &self.map;
        positive("map.width", m.width)?;
        positive("map.height", m.height)?;
        positive("map.spacing", m.spacing)?;
        if m.spacing > m.width || m.spacing > m.height {
            return Err(invalid("map.spacing", "larger than the map extent"));
        }
        let inside = |field: &str, p: [f64; 2]| {
            if p[0] >= 0.0 && p[0] <= m.width && p[1] >= 0.0 && p[1] <= m.height {
                Ok(())
            } else {
                Err(invalid(
                    field,
                    format!("({}, {}) is outside the map", p[0], p[1]),
                ))
            }
        };
        inside("map.base", m.base)?;

        let c = &self.comm;
        positive("comm.d_comm_max", c.d_comm_max)?;
        positive("comm.c_comm_max", c.c_comm_max)?;
        if c.d_comm_max < m.spacing {
            return Err(invalid(
                "comm.d_comm_max",
                "shorter than the lattice spacing",
            ));
        }
        if let Some(w) = c.obstacle_weight {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(invalid("comm.obstacle_weight", "must be non-negative"));
            }
        }
        if let Some(r) = c.clutter_radius {
            if !(r >= 0.0 && r.is_finite()) {
                return Err(invalid("comm.clutter_radius", "must be non-negative"));
            }
        }
        if let Some(lm) = c.link_margin {
            positive("comm.link_margin", lm)?;
        }

        if self.fleet.size == 0 {
            return Err(invalid("fleet.size", "at least one UAV is required"));
        }
        let r = &self.run;
        if r.betas.is_empty() {
            return Err(invalid("run.betas", "at least one beta is required"));
        }
        for (i, b) in r.betas.iter().enumerate() {
            if !(b.is_finite() && *b >= 0.0) {
                return Err(invalid(
                    format!("run.betas[{i}]"),
                    format!("must be non-negative, got {b}"),
                ));
            }
        }
        if r.k == 0 {
            return Err(invalid("run.k", "must be at least 1"));
        }
        if r.max_rounds == 0 {
            return Err(invalid("run.max_rounds", "must be at least 1"));
        }
        if r.seeds.is_empty() {
            return Err(invalid("run.seeds", "at least one seed is required"));
        }

        for (i, rect) in self.obstacles.rects.iter().enumerate() {
            if rect.iter().any(|v| !v.is_finite()) || rect[0] == rect[2] || rect[1] == rect[3] {
                return Err(invalid(
                    format!("obstacles.rects[{i}]"),
                    "degenerate rectangle",
                ));
            }
        }
        if let Some(rnd) = &self.obstacles.random {
            positive("obstacles.random.min_size", rnd.min_size)?;
            if rnd.max_size < rnd.min_size || rnd.max_size > m.width.min(m.height) {
                return Err(invalid(
                    "obstacles.random.max_size",
                    "must lie between min_size and the map extent",
                ));
            }
        }
        for (i, t) in self.targets.iter().enumerate() {
            inside(&format!("targets[{i}].at"), t.at)?;
            if t.service_rounds == 0 {
                return Err(invalid(
                    format!("targets[{i}].service_rounds"),
                    "must be at least 1",
                ));
            }
        }
        for (i, e) in self.events.iter().enumerate() {
            if e.uav >= self.fleet.size {
                return Err(invalid(
                    format!("events[{i}].uav"),
                    format!("no UAV {} in a fleet of {}", e.uav, self.fleet.size),
                ));
            }
            if e.round == 0 {
                return Err(invalid(format!("events[{i}].round"), "rounds start at 1"));
            }
            if let Some(p) = e.at {
                inside(&format!("events[{i}].at"), p)?;
            }
        }
        Ok(())
    }

    fn grid_spec(&self, obstacles: Vec<Rect>) -> GridSpec {
        let m = &self.map;
        let c = &self.comm;
        let mut comm = CommModel::new(c.d_comm_max, c.c_comm_max, m.spacing);
        if let Some(w) = c.obstacle_weight {
            comm.obstacle_weight = w;
        }
        if let Some(r) = c.clutter_radius {
            comm.clutter_radius = r;
        }
        if let Some(lm) = c.link_margin {
            comm.link_margin = lm;
        }
        GridSpec {
            width: m.width,
            height: m.height,
            spacing: m.spacing,
            base: Position::new(m.base[0], m.base[1]),
            obstacles,
            comm,
        }
    }

    fn explicit_rects(&self) -> Vec<Rect> {
        self.obstacles
            .rects
            .iter()
            .map(|r| Rect::from_corners(Position::new(r[0], r[1]), Position::new(r[2], r[3])))
            .collect()
    }

    /// A new obstacle may not cut off any free node that was within the
    /// fleet's reach before it was placed, nor bury a target.
    fn layout_is_usable(&self, before: &CoverageGoal, g: &NavGraph) -> bool {
        let after = CoverageGoal::within_hops(g, self.fleet.size);
        before
            .nodes()
            .iter()
            .all(|&n| g.is_obstacle(n) || after.contains(n))
            && self
                .targets
                .iter()
                .all(|t| !g.is_obstacle(g.nearest_node(&Position::new(t.at[0], t.at[1]))))
    }

    /// Navigation graph for a run seed (random obstacles depend on it unless
    /// the layout seed is fixed).
    pub fn build_graph(&self, run_seed: u64) -> Result<NavGraph, ConfigError> {
        let mut rects = self.explicit_rects();
        let graph = build_grid_graph(&self.grid_spec(rects.clone()))?;
        let Some(rnd) = &self.obstacles.random else {
            return Ok(graph);
        };
        let mut rng = ChaCha8Rng::seed_from_u64(rnd.seed.unwrap_or(run_seed));
        let mut reach = CoverageGoal::within_hops(&graph, self.fleet.size);
        let (w, h) = (self.map.width, self.map.height);
        for index in 0..rnd.count {
            let mut placed = false;
            for _ in 0..PLACEMENT_ATTEMPTS {
                let sw = rng.gen_range(rnd.min_size..=rnd.max_size);
                let sh = rng.gen_range(rnd.min_size..=rnd.max_size);
                let x = rng.gen_range(0.0..=(w - sw));
                let y = rng.gen_range(0.0..=(h - sh));
                let cand = Rect::from_corners(Position::new(x, y), Position::new(x + sw, y + sh));
                rects.push(cand);
                match build_grid_graph(&self.grid_spec(rects.clone())) {
                    Ok(g) if self.layout_is_usable(&reach, &g) => {
                        reach = CoverageGoal::within_hops(&g, self.fleet.size);
                        placed = true;
                        break;
                    }
                    _ => {
                        rects.pop();
                    }
                }
            }
            if !placed {
                return Err(ConfigError::ObstaclePlacement {
                    index,
                    attempts: PLACEMENT_ATTEMPTS,
                });
            }
        }
        Ok(build_grid_graph(&self.grid_spec(rects))?)
    }

    pub fn targets(&self, g: &NavGraph) -> Result<Vec<TargetSpec>, ConfigError> {
        self.targets
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let node = g.nearest_node(&Position::new(t.at[0], t.at[1]));
                if g.is_obstacle(node) {
                    Err(invalid(format!("targets[{i}].at"), "lies on an obstacle"))
                } else {
                    Ok(TargetSpec {
                        node,
                        service_rounds: t.service_rounds,
                    })
                }
            })
            .collect()
    }

    /// Event script as (round, event) pairs.
    pub fn events(&self, g: &NavGraph) -> Vec<(u64, SwarmEvent)> {
        self.events
            .iter()
            .map(|e| {
                let event = match e.action {
                    EventAction::Remove => SwarmEvent::Remove(e.uav),
                    EventAction::Detach => SwarmEvent::Detach(e.uav),
                    EventAction::Reintegrate => SwarmEvent::Reintegrate {
                        uav: e.uav,
                        node: e.at.map(|p| g.nearest_node(&Position::new(p[0], p[1]))),
                    },
                };
                (e.round, event)
            })
            .collect()
    }
}
