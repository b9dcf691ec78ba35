//! Target tracking by a UAV swarm over U2U or edge-assisted links.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::comms::{
    build_connectivity, disseminate_u2u, CommEvent, CommMode, CommsConfig, EdgeQueue, LinkStreams, Packet, Payload,
};
use crate::control::{deconflict, fallback_orbit, navigate, NavConstraints, NavCost};
use crate::error::{Error, Result};
use crate::inference::{BufferedTracker, GaussianBelief, MotionModel, TrackPrior};
use crate::ops::{self, CountingScope, OpCounters};
use crate::sensing::{measure_range, RangeMeasurement, RangeNoise};
use crate::sim::{step_target, step_uav, RngStream, TargetState, UavPose, Vec2};

const TARGET_STREAM: u64 = 1;
const SENSOR_STREAM_BASE: u64 = 1_000;
const LINK_STREAM_BASE: u64 = 1 << 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackingConfig {
    pub n_uavs: usize,
    pub steps: u64,
    pub comm: CommsConfig,
    pub range_noise: RangeNoise,
    pub constraints: NavConstraints,
    /// One per UAV; UAV ids are 1-based in this order.
    pub initial_positions: Vec<Vec2>,
    pub target_start: Vec2,
    /// m/step; the heading is drawn per seed.
    pub target_speed: f64,
    /// Per-axis velocity noise per step (m/step).
    pub accel_std: f64,
    pub prior: TrackPrior,
    /// Sliding buffer length for late measurements (steps).
    pub buffer_steps: u64,
    pub orbit_radius: f64,
    /// A U2U UAV with fewer distinct sources in a step orbits instead.
    pub min_sources: usize,
    /// Steps excluded from the burn-in CDF.
    pub burn_in: u64,
}

impl Default for TrackingConfig {
    fn default() -> Self {
        Self {
            n_uavs: 4,
            steps: 200,
            comm: CommsConfig::default(),
            range_noise: RangeNoise::default(),
            constraints: NavConstraints::default(),
            initial_positions: vec![
                Vec2::new(0.0, 0.0),
                Vec2::new(1000.0, 0.0),
                Vec2::new(1000.0, 1000.0),
                Vec2::new(0.0, 1000.0),
            ],
            target_start: Vec2::new(500.0, 500.0),
            target_speed: 1.0,
            accel_std: 0.01,
            prior: TrackPrior::default(),
            buffer_steps: 5,
            orbit_radius: 100.0,
            min_sources: 2,
            burn_in: 20,
        }
    }
}

impl TrackingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps < 1 {
            return Err(Error::param("steps", "must be at least 1"));
        }
        if self.n_uavs != self.initial_positions.len() {
            return Err(Error::param(
                "n_uavs",
                format!("is {} but initial_positions has {} entries", self.n_uavs, self.initial_positions.len()),
            ));
        }
        if self.n_uavs == 0 {
            return Err(Error::param("n_uavs", "must be at least 1"));
        }
        self.comm.validate()?;
        self.constraints.validate()?;
        if !(self.range_noise.sigma0 > 0.0) || self.range_noise.reference_range.is_some_and(|r| !(r > 0.0)) {
            return Err(Error::param("range_noise", "sigma0 and reference_range must be positive"));
        }
        if !(self.accel_std >= 0.0) {
            return Err(Error::param("accel_std", "must be non-negative"));
        }
        if !(self.target_speed >= 0.0) {
            return Err(Error::param("target_speed", "must be non-negative"));
        }
        if !(self.orbit_radius > 0.0) {
            return Err(Error::param("orbit_radius", "must be positive"));
        }
        if !(self.prior.position_var > 0.0 && self.prior.velocity_var > 0.0) {
            return Err(Error::param("prior", "variances must be positive"));
        }
        for (i, a) in self.initial_positions.iter().enumerate() {
            for b in &self.initial_positions[i + 1..] {
                if a.distance(*b) < self.constraints.d_min_uav {
                    return Err(Error::param("initial_positions", "UAVs start closer than d_min_uav"));
                }
            }
        }
        Ok(())
    }

    /// Short label used in output files.
    pub fn scheme(&self) -> &'static str {
        match self.comm.mode {
            CommMode::U2u => "u2u",
            CommMode::Edge => "edge",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeliefRecord {
    pub step: u64,
    /// 0 for the edge.
    pub node_id: u32,
    pub mean: Vec2,
    pub cov_trace: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    pub count_ops: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackingResult {
    pub seed: u64,
    /// `[step][uav]` distance between the UAV's current estimate and the target.
    pub errors: Vec<Vec<f64>>,
    /// `[step][uav]` positions at sensing time.
    pub uav_tracks: Vec<Vec<Vec2>>,
    pub target_track: Vec<Vec2>,
    /// `[step][uav]` distinct measurement sources used.
    pub sources: Vec<Vec<usize>>,
    pub beliefs: Vec<BeliefRecord>,
    pub comm_log: Vec<CommEvent>,
    pub min_separation: f64,
    pub counters: Option<OpCounters>,
}

impl TrackingResult {
    pub fn errors_after(&self, burn_in: u64) -> Vec<f64> {
        self.errors.iter().skip(burn_in as usize).flatten().copied().collect()
    }
}

struct U2uNode {
    tracker: BufferedTracker,
    pending: Vec<Packet>,
    known: BTreeMap<u32, (u64, Vec2)>,
}

struct EdgeView {
    belief: Option<GaussianBelief>,
    commands: BTreeMap<u32, Vec2>,
}

pub fn run_tracking(cfg: &TrackingConfig, seed: u64) -> Result<TrackingResult> {
    run_tracking_with(cfg, seed, RunOptions::default())
}

pub fn run_tracking_with(cfg: &TrackingConfig, seed: u64, opts: RunOptions) -> Result<TrackingResult> {
    cfg.validate()?;
    let scope = opts.count_ops.then(CountingScope::new);
    let model = MotionModel::planar(cfg.accel_std);
    let limits = cfg.constraints.limits;

    let mut target_rng = RngStream::new(seed, TARGET_STREAM);
    let heading = target_rng.uniform() * std::f64::consts::TAU;
    let mut target = TargetState::new(cfg.target_start, Vec2::from_angle(heading) * cfg.target_speed);
    let mut uavs: Vec<UavPose> =
        cfg.initial_positions.iter().enumerate().map(|(i, p)| UavPose::new(i as u32 + 1, *p)).collect();
    let mut sensor_rngs: Vec<RngStream> =
        uavs.iter().map(|u| RngStream::new(seed, SENSOR_STREAM_BASE + u64::from(u.id))).collect();
    let mut links = LinkStreams::new(seed, LINK_STREAM_BASE);

    let new_tracker = || BufferedTracker::new(model.clone(), cfg.prior, cfg.buffer_steps);
    let mut nodes: Vec<U2uNode> =
        uavs.iter().map(|_| U2uNode { tracker: new_tracker(), pending: Vec::new(), known: BTreeMap::new() }).collect();
    let mut edge = new_tracker();
    let mut edge_known: BTreeMap<u32, Vec2> = BTreeMap::new();
    let mut uplink: EdgeQueue<RangeMeasurement> = EdgeQueue::new(cfg.comm.uplink_delay());
    let mut downlink: EdgeQueue<EdgeView> = EdgeQueue::new(cfg.comm.downlink_delay());

    let n = uavs.len();
    let steps = cfg.steps as usize;
    let mut out = TrackingResult {
        seed,
        errors: Vec::with_capacity(steps),
        uav_tracks: Vec::with_capacity(steps),
        target_track: Vec::with_capacity(steps),
        sources: Vec::with_capacity(steps),
        beliefs: Vec::new(),
        comm_log: Vec::new(),
        min_separation: min_pairwise(&uavs),
        counters: None,
    };

    for t in 0..cfg.steps {
        target = step_target(&target, cfg.accel_std, &mut target_rng);
        let measurements: Vec<RangeMeasurement> = uavs
            .iter()
            .zip(&mut sensor_rngs)
            .map(|(u, rng)| {
                let sigma = cfg.range_noise.std_at(u.position.distance(target.position));
                let mut m = measure_range(u, target.position, sigma, t, rng);
                m.noise_var = cfg.range_noise.variance_at(m.range);
                m
            })
            .collect();

        let mut errors = Vec::with_capacity(n);
        let mut sources = Vec::with_capacity(n);
        let mut waypoints = Vec::with_capacity(n);
        match cfg.comm.mode {
            CommMode::U2u => {
                let graph = build_connectivity(&uavs, cfg.comm.range_r)?;
                let packets: Vec<Packet> =
                    measurements.iter().map(|m| Packet::new(m.uav_id, t, Payload::Range(*m))).collect();
                let mut inbox = disseminate_u2u(
                    &graph,
                    &packets,
                    cfg.comm.max_hops,
                    cfg.comm.link_loss,
                    &mut links,
                    Some(&mut out.comm_log),
                );
                for (uav, node) in uavs.iter().zip(&mut nodes) {
                    node.pending.extend(inbox.remove(&uav.id).unwrap_or_default());
                    let mut seen = BTreeSet::new();
                    let (ready, later): (Vec<Packet>, Vec<Packet>) =
                        node.pending.drain(..).partition(|p| p.available_step() <= t);
                    node.pending = later;
                    for p in ready {
                        if let Payload::Range(m) = p.payload {
                            seen.insert(m.uav_id);
                            let slot = node.known.entry(m.uav_id).or_insert((m.timestamp, m.uav_position));
                            if m.timestamp >= slot.0 {
                                *slot = (m.timestamp, m.uav_position);
                            }
                            node.tracker.ingest(m);
                        }
                    }
                    let belief = node.tracker.estimate(t)?;
                    let mean = belief.as_ref().map_or(cfg.prior.center, GaussianBelief::position);
                    errors.push(mean.distance(target.position));
                    sources.push(seen.len());
                    if let Some(b) = &belief {
                        out.beliefs.push(BeliefRecord { step: t, node_id: uav.id, mean, cov_trace: b.cov_trace() });
                    }
                    let waypoint = match belief {
                        Some(b) if seen.len() >= cfg.min_sources => {
                            let mut positions = vec![uav.position];
                            positions.extend(
                                node.known.iter().filter(|(id, _)| **id != uav.id).map(|(_, (_, p))| *p),
                            );
                            let cost = NavCost::new(&b, &model, cfg.range_noise)?;
                            navigate(&positions, &cost, &cfg.constraints)?[0]
                        }
                        _ => fallback_orbit(uav.position, mean, cfg.orbit_radius, &limits)?,
                    };
                    waypoints.push(waypoint);
                }
            }
            CommMode::Edge => {
                for m in &measurements {
                    uplink.enqueue(*m, t)?;
                }
                let arrived = uplink.deliver(t)?;
                let fresh: BTreeSet<u32> = arrived.iter().map(|m| m.uav_id).collect();
                for m in arrived {
                    out.comm_log.push(CommEvent { step: m.timestamp, src: m.uav_id, dst: 0, hops: 1, dropped: false });
                    edge_known.insert(m.uav_id, m.uav_position);
                    edge.ingest(m);
                }
                let lag = cfg.comm.uplink_delay();
                let belief = if t >= lag { edge.estimate(t - lag)? } else { None };
                let mut commands = BTreeMap::new();
                if let Some(b) = &belief {
                    out.beliefs.push(BeliefRecord {
                        step: t,
                        node_id: 0,
                        mean: b.position(),
                        cov_trace: b.cov_trace(),
                    });
                    let ids: Vec<u32> = edge_known.keys().copied().collect();
                    let positions: Vec<Vec2> = edge_known.values().copied().collect();
                    let cost = NavCost::new(b, &model, cfg.range_noise)?;
                    let wps = navigate(&positions, &cost, &cfg.constraints)?;
                    for ((id, p), w) in ids.iter().zip(&positions).zip(wps) {
                        commands.insert(*id, w - *p);
                    }
                }
                downlink.enqueue(EdgeView { belief, commands }, t)?;
                let view = downlink.deliver(t)?.pop();
                let (mean, commands) = match view {
                    Some(EdgeView { belief: Some(b), commands }) => (b.position(), commands),
                    _ => (cfg.prior.center, BTreeMap::new()),
                };
                for uav in &uavs {
                    errors.push(mean.distance(target.position));
                    sources.push(fresh.len());
                    let waypoint = match commands.get(&uav.id) {
                        Some(d) => uav.position + *d,
                        None => toward(uav.position, cfg.prior.center, limits.v_max),
                    };
                    waypoints.push(waypoint);
                }
            }
        }

        out.errors.push(errors);
        out.sources.push(sources);
        out.uav_tracks.push(uavs.iter().map(|u| u.position).collect());
        out.target_track.push(target.position);

        let current: Vec<Vec2> = uavs.iter().map(|u| u.position).collect();
        let safe = deconflict(&current, &waypoints, &cfg.constraints);
        for (u, w) in uavs.iter_mut().zip(safe) {
            *u = step_uav(u, w, &limits)?;
        }
        out.min_separation = out.min_separation.min(min_pairwise(&uavs));
    }
    if scope.is_some() {
        out.counters = Some(ops::snapshot());
    }
    drop(scope);
    Ok(out)
}

fn toward(from: Vec2, to: Vec2, speed: f64) -> Vec2 {
    match (to - from).normalized() {
        Some(d) if from.distance(to) > speed => from + d * speed,
        _ => from + Vec2::new(speed, 0.0),
    }
}

fn min_pairwise(uavs: &[UavPose]) -> f64 {
    let mut best = f64::INFINITY;
    for (i, a) in uavs.iter().enumerate() {
        for b in &uavs[i + 1..] {
            best = best.min(a.position.distance(b.position));
        }
    }
    best
}
