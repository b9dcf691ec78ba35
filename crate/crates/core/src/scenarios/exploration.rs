//! Indoor mapping and beacon search with a Q-table shared through the edge.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::comms::EdgeQueue;
use crate::control::{epsilon_at, fuse_experiences, q_select_action, EpsilonSchedule, Experience, QParams, QTable, ACTIONS};
use crate::error::{Error, Result};
use crate::inference::{og_update, GlrtTable, InverseSensorModel, LogOddsGrid};
use crate::ops::{self, CountingScope, OpCounters};
use crate::sensing::{beacon_observation, scan_thz, BeaconParams, ThzRadarParams, TrueMap};
use crate::sim::{RngStream, UavPose, Vec2};

use super::metrics::{map_accuracy, MapScore};
use super::tracking::RunOptions;

/// The default 20 x 20 indoor map at 0.5 m resolution.
pub const BUNDLED_MAP: &str = include_str!("../../maps/indoor.txt");

const POLICY_STREAM_BASE: u64 = 100;
const RADAR_STREAM_BASE: u64 = 200;
const BEACON_STREAM_BASE: u64 = 300;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    pub step: f64,
    pub new_cell: f64,
    pub target: f64,
    pub collision: f64,
    /// A cell counts as mapped once its log-odds magnitude exceeds this.
    pub mapped_threshold: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self { step: -0.1, new_cell: 1.0, target: 100.0, collision: -10.0, mapped_threshold: 2.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplorationConfig {
    /// Map file; the bundled map when absent.
    pub map: Option<PathBuf>,
    pub n_uavs: usize,
    /// Start positions (m); the first `n_uavs` are used.
    pub starts: Vec<Vec2>,
    pub target: Vec2,
    pub episodes: u64,
    pub mission_time: u64,
    pub q: QParams,
    pub epsilon: EpsilonSchedule,
    pub radar: ThzRadarParams,
    pub beacon: BeaconParams,
    pub sensor: InverseSensorModel,
    pub pfa: f64,
    /// Steps between an experience leaving a UAV and the updated table coming back.
    pub edge_delay: u64,
    pub rewards: RewardConfig,
    /// Radar scans carry the mean noise power instead of random draws.
    pub noiseless_radar: bool,
}

impl Default for ExplorationConfig {
    fn default() -> Self {
        Self {
            map: None,
            n_uavs: 2,
            starts: vec![Vec2::new(2.0, 3.0), Vec2::new(2.0, 8.0)],
            target: Vec2::new(8.5, 8.5),
            episodes: 20,
            mission_time: 200,
            q: QParams::default(),
            epsilon: EpsilonSchedule::default(),
            radar: ThzRadarParams::default(),
            beacon: BeaconParams::default(),
            sensor: InverseSensorModel::default(),
            pfa: 1e-3,
            edge_delay: 1,
            rewards: RewardConfig::default(),
            noiseless_radar: false,
        }
    }
}

impl ExplorationConfig {
    pub fn load_map(&self) -> Result<TrueMap> {
        match &self.map {
            Some(p) => TrueMap::load(p),
            None => TrueMap::parse(BUNDLED_MAP),
        }
    }

    /// Checks the configuration against `map`.
    pub fn validate(&self, map: &TrueMap) -> Result<()> {
        if self.n_uavs == 0 || self.n_uavs > self.starts.len() {
            return Err(Error::param(
                "n_uavs",
                format!("must lie in 1..={} (number of starts), got {}", self.starts.len(), self.n_uavs),
            ));
        }
        if self.episodes < 1 || self.mission_time < 1 {
            return Err(Error::param("episodes", "episodes and mission_time must be at least 1"));
        }
        if !(self.pfa > 0.0 && self.pfa < 1.0) {
            return Err(Error::param("pfa", format!("must lie in (0, 1), got {}", self.pfa)));
        }
        if self.beacon.n_samples == 0 {
            return Err(Error::param("beacon", "n_samples must be at least 1"));
        }
        self.q.validate()?;
        self.epsilon.validate()?;
        self.radar.validate()?;
        for p in self.starts.iter().take(self.n_uavs).chain(std::iter::once(&self.target)) {
            match map.cell_of(*p) {
                Some((cx, cy)) if !map.is_occupied(cx, cy) => {}
                _ => return Err(Error::InvalidPosition { x: p.x, y: p.y, reason: "must lie in free space of the map" }),
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeRecord {
    pub episode: u64,
    pub steps: u64,
    pub found_target: bool,
    pub positive_q_sum: f64,
    pub map: MapScore,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExplorationResult {
    pub seed: u64,
    pub n_uavs: usize,
    pub episodes: Vec<EpisodeRecord>,
    /// Merged team grid at the end of each episode.
    pub grids: Vec<LogOddsGrid>,
    /// `[episode][uav]` visited cells, starting cell first.
    pub paths: Vec<Vec<Vec<(usize, usize)>>>,
    /// `(episode, experience)` in the order they were generated.
    pub experiences: Vec<(u64, Experience)>,
    pub qtable: QTable,
    pub counters: Option<OpCounters>,
}

impl ExplorationResult {
    pub fn positive_q_curve(&self) -> Vec<f64> {
        self.episodes.iter().map(|e| e.positive_q_sum).collect()
    }
}

struct Agent {
    pose: UavPose,
    cell: (usize, usize),
    heading: f64,
    grid: LogOddsGrid,
    mapped: Vec<bool>,
    policy_rng: RngStream,
    radar_rng: RngStream,
    beacon_rng: RngStream,
}

pub fn run_exploration(cfg: &ExplorationConfig, seed: u64) -> Result<ExplorationResult> {
    run_exploration_with(cfg, seed, RunOptions::default())
}

pub fn run_exploration_with(cfg: &ExplorationConfig, seed: u64, opts: RunOptions) -> Result<ExplorationResult> {
    let map = cfg.load_map()?;
    cfg.validate(&map)?;
    let scope = opts.count_ops.then(CountingScope::new);
    let glrt = GlrtTable::new(cfg.pfa, cfg.beacon.n_samples)?;
    let target_cell = map.cell_of(cfg.target).expect("validated");
    let starts: Vec<(usize, usize)> =
        cfg.starts.iter().take(cfg.n_uavs).map(|p| map.cell_of(*p).expect("validated")).collect();

    let mut table = QTable::new(map.n_cells(), ACTIONS.len());
    let mut view = table.clone();
    let mut uplink: EdgeQueue<Experience> = EdgeQueue::new(cfg.edge_delay);
    let mut agents: Vec<Agent> = starts
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let id = i as u32 + 1;
            Agent {
                pose: UavPose::new(id, map.center(c.0, c.1)),
                cell: c,
                heading: 0.0,
                grid: LogOddsGrid::like(&map),
                mapped: vec![false; map.n_cells()],
                policy_rng: RngStream::new(seed, POLICY_STREAM_BASE + u64::from(id)),
                radar_rng: RngStream::new(seed, RADAR_STREAM_BASE + u64::from(id)),
                beacon_rng: RngStream::new(seed, BEACON_STREAM_BASE + u64::from(id)),
            }
        })
        .collect();

    let mut out = ExplorationResult {
        seed,
        n_uavs: cfg.n_uavs,
        episodes: Vec::new(),
        grids: Vec::new(),
        paths: Vec::new(),
        experiences: Vec::new(),
        qtable: table.clone(),
        counters: None,
    };
    let mut clock = 0u64;

    for episode in 0..cfg.episodes {
        for (a, &c) in agents.iter_mut().zip(&starts) {
            a.cell = c;
            a.pose.position = map.center(c.0, c.1);
            a.heading = 0.0;
            a.grid = LogOddsGrid::like(&map);
            a.mapped.iter_mut().for_each(|m| *m = false);
        }
        let mut paths: Vec<Vec<(usize, usize)>> = agents.iter().map(|a| vec![a.cell]).collect();
        let mut found = false;
        let mut steps_taken = 0;
        for step in 0..cfg.mission_time {
            let arrived = uplink.deliver(clock)?;
            if !arrived.is_empty() {
                fuse_experiences(&mut table, &arrived, &cfg.q);
                view = table.clone();
            }
            let eps = epsilon_at(&cfg.epsilon, episode, step, cfg.mission_time);
            for (a, path) in agents.iter_mut().zip(&mut paths) {
                let state = map.index(a.cell.0, a.cell.1);
                let action = q_select_action(&view, state, eps, &mut a.policy_rng);
                let (dx, dy) = ACTIONS[action];
                a.heading = f64::from(dy).atan2(f64::from(dx));
                let mut reward = cfg.rewards.step;
                let nx = a.cell.0 as i64 + i64::from(dx);
                let ny = a.cell.1 as i64 + i64::from(dy);
                let inside = nx >= 0 && ny >= 0 && (nx as usize) < map.width() && (ny as usize) < map.height();
                if inside && !map.is_occupied(nx as usize, ny as usize) {
                    a.cell = (nx as usize, ny as usize);
                    a.pose.position = map.center(a.cell.0, a.cell.1);
                } else {
                    reward += cfg.rewards.collision;
                }
                path.push(a.cell);

                let rng = (!cfg.noiseless_radar).then_some(&mut a.radar_rng);
                let scan = scan_thz(&a.pose, a.heading, &map, &cfg.radar, rng)?;
                for c in og_update(&mut a.grid, &scan, a.pose.position, &cfg.sensor) {
                    if !a.mapped[c] && a.grid.values()[c].abs() > cfg.rewards.mapped_threshold {
                        a.mapped[c] = true;
                        reward += cfg.rewards.new_cell;
                    }
                }

                let samples = beacon_observation(
                    a.pose.position,
                    cfg.target,
                    cfg.beacon.n_samples,
                    &cfg.beacon,
                    &cfg.radar,
                    &mut a.beacon_rng,
                );
                let near = a.cell.0.abs_diff(target_cell.0) <= 1 && a.cell.1.abs_diff(target_cell.1) <= 1;
                if near && glrt.detect(&samples)?.decision {
                    reward += cfg.rewards.target;
                    found = true;
                }

                let e = Experience {
                    uav_id: a.pose.id,
                    state,
                    action,
                    reward,
                    next_state: map.index(a.cell.0, a.cell.1),
                    step: clock,
                };
                out.experiences.push((episode, e));
                uplink.enqueue(e, clock)?;
            }
            clock += 1;
            steps_taken = step + 1;
            if found {
                break;
            }
        }
        // Let everything in flight reach the edge before scoring the episode.
        clock += cfg.edge_delay;
        let arrived = uplink.deliver(clock)?;
        fuse_experiences(&mut table, &arrived, &cfg.q);
        view = table.clone();

        let merged = LogOddsGrid::merged(agents.iter().map(|a| &a.grid)).expect("at least one UAV");
        out.episodes.push(EpisodeRecord {
            episode,
            steps: steps_taken,
            found_target: found,
            positive_q_sum: table.positive_sum(),
            map: map_accuracy(&merged, &map)?,
        });
        out.grids.push(merged);
        out.paths.push(paths);
    }
    out.qtable = table;
    if scope.is_some() {
        out.counters = Some(ops::snapshot());
    }
    drop(scope);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn short(n_uavs: usize) -> ExplorationConfig {
        ExplorationConfig { n_uavs, episodes: 3, mission_time: 60, ..Default::default() }
    }

    #[test]
    fn bundled_map_geometry() {
        let cfg = ExplorationConfig::default();
        let map = cfg.load_map().unwrap();
        assert_eq!((map.width(), map.height(), map.cell_size()), (20, 20, 0.5));
        cfg.validate(&map).unwrap();
        assert_eq!(map.cell_of(cfg.target), Some((17, 17)));
        assert_eq!(map.cell_of(cfg.starts[0]), Some((4, 6)));
    }

    #[test]
    fn deterministic_and_bounded() {
        let a = run_exploration(&short(2), 5).unwrap();
        let b = run_exploration(&short(2), 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.episodes.len(), 3);
        for e in &a.episodes {
            assert!(e.steps <= 60);
            assert!((0.0..=1.0).contains(&e.map.accuracy));
        }
        assert!(a.paths.iter().all(|ep| ep.len() == 2));
    }

    #[test]
    fn uavs_never_enter_walls() {
        let r = run_exploration(&short(2), 9).unwrap();
        let map = ExplorationConfig::default().load_map().unwrap();
        for ep in &r.paths {
            for path in ep {
                for w in path.windows(2) {
                    assert!(!map.is_occupied(w[1].0, w[1].1));
                    assert!(w[0].0.abs_diff(w[1].0) + w[0].1.abs_diff(w[1].1) <= 1);
                }
            }
        }
    }

    #[test]
    fn experiences_all_reach_the_table() {
        let r = run_exploration(&short(1), 3).unwrap();
        let mut replay = QTable::new(400, 4);
        let batch: Vec<Experience> = r.experiences.iter().map(|(_, e)| *e).collect();
        fuse_experiences(&mut replay, &batch, &QParams::default());
        assert_eq!(replay, r.qtable);
    }

    #[test]
    fn exhaustive_noiseless_sweep_maps_accurately() {
        let map = TrueMap::parse(BUNDLED_MAP).unwrap();
        let radar = ThzRadarParams::default();
        let sensor = InverseSensorModel::default();
        let mut grid = LogOddsGrid::like(&map);
        for cy in 0..map.height() {
            for cx in 0..map.width() {
                if map.is_occupied(cx, cy) {
                    continue;
                }
                let pose = UavPose::new(1, map.center(cx, cy));
                for k in 0..4 {
                    let heading = f64::from(k) * std::f64::consts::FRAC_PI_2;
                    let scan = scan_thz(&pose, heading, &map, &radar, None).unwrap();
                    og_update(&mut grid, &scan, pose.position, &sensor);
                }
            }
        }
        let score = map_accuracy(&grid, &map).unwrap();
        assert!(score.accuracy > 0.9, "{score:?}");
        assert!(score.coverage > 0.9, "{score:?}");
    }

    #[test]
    fn rejects_start_in_wall() {
        let cfg = ExplorationConfig { starts: vec![Vec2::new(0.1, 0.1)], n_uavs: 1, ..Default::default() };
        assert!(run_exploration(&cfg, 0).is_err());
        let cfg = ExplorationConfig { n_uavs: 3, ..Default::default() };
        assert!(matches!(run_exploration(&cfg, 0), Err(Error::InvalidParameter { name: "n_uavs", .. })));
    }
}
