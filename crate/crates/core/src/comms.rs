//! Packet movement between UAVs: multi-hop U2U flooding and the delayed,
//! lossless edge link.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::control::Experience;
use crate::error::{Error, Result};
use crate::sensing::RangeMeasurement;
use crate::sim::{RngStream, UavPose};

/// Occupancy values a UAV reports for the cells it touched.
#[derive(Debug, Clone, PartialEq)]
pub struct MapSummary {
    pub uav_id: u32,
    pub cells: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Range(RangeMeasurement),
    Experience(Experience),
    MapSummary(MapSummary),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Packet {
    pub src_id: u32,
    pub created_step: u64,
    pub payload: Payload,
    pub hops_traversed: u32,
}

impl Packet {
    pub fn new(src_id: u32, created_step: u64, payload: Payload) -> Self {
        Self { src_id, created_step, payload, hops_traversed: 0 }
    }

    /// First step at which the recipient may process this copy; each hop ages
    /// it by one step.
    pub fn available_step(&self) -> u64 {
        self.created_step + u64::from(self.hops_traversed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CommMode {
    U2u,
    Edge,
}

/// How `edge_delay` is split between uplink and downlink.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DelaySplit {
    /// `edge_delay` is the whole round trip; all of it is charged on the uplink.
    LTotal,
    /// `edge_delay` applies to each direction.
    LEachWay,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CommsConfig {
    pub mode: CommMode,
    /// m
    pub range_r: f64,
    pub max_hops: u32,
    pub link_loss: f64,
    /// steps
    pub edge_delay: u64,
    pub delay_split: DelaySplit,
}

impl Default for CommsConfig {
    fn default() -> Self {
        Self {
            mode: CommMode::Edge,
            range_r: 1000.0,
            max_hops: 3,
            link_loss: 0.2,
            edge_delay: 1,
            delay_split: DelaySplit::LTotal,
        }
    }
}

impl CommsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.link_loss) {
            return Err(Error::param("link_loss", format!("must lie in [0, 1], got {}", self.link_loss)));
        }
        if self.max_hops < 1 {
            return Err(Error::param("max_hops", "must be at least 1"));
        }
        if !(self.range_r >= 0.0) {
            return Err(Error::param("range_r", format!("must be non-negative, got {}", self.range_r)));
        }
        Ok(())
    }

    pub fn uplink_delay(&self) -> u64 {
        self.edge_delay
    }

    pub fn downlink_delay(&self) -> u64 {
        match self.delay_split {
            DelaySplit::LTotal => 0,
            DelaySplit::LEachWay => self.edge_delay,
        }
    }
}

/// Undirected range-limited graph over UAV ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConnectivityGraph {
    nodes: Vec<u32>,
    adjacency: BTreeMap<u32, BTreeSet<u32>>,
}

impl ConnectivityGraph {
    pub fn nodes(&self) -> &[u32] {
        &self.nodes
    }

    pub fn neighbors(&self, id: u32) -> impl Iterator<Item = u32> + '_ {
        self.adjacency.get(&id).into_iter().flatten().copied()
    }

    pub fn has_edge(&self, a: u32, b: u32) -> bool {
        self.adjacency.get(&a).is_some_and(|n| n.contains(&b))
    }

    pub fn degree(&self, id: u32) -> usize {
        self.adjacency.get(&id).map_or(0, BTreeSet::len)
    }

    pub fn edges(&self) -> Vec<(u32, u32)> {
        let mut out = Vec::new();
        for (&a, ns) in &self.adjacency {
            out.extend(ns.iter().filter(|&&b| a < b).map(|&b| (a, b)));
        }
        out
    }

    /// Hop distances from `src`; unreachable nodes are absent.
    pub fn hop_distances(&self, src: u32) -> BTreeMap<u32, u32> {
        let mut dist = BTreeMap::from([(src, 0)]);
        let mut queue = VecDeque::from([src]);
        while let Some(u) = queue.pop_front() {
            let d = dist[&u];
            for v in self.neighbors(u) {
                dist.entry(v).or_insert_with(|| {
                    queue.push_back(v);
                    d + 1
                });
            }
        }
        dist
    }
}

pub fn build_connectivity(positions: &[UavPose], range_r: f64) -> Result<ConnectivityGraph> {
    let mut adjacency: BTreeMap<u32, BTreeSet<u32>> = BTreeMap::new();
    for p in positions {
        if adjacency.insert(p.id, BTreeSet::new()).is_some() {
            return Err(Error::param("positions", format!("duplicate UAV id {}", p.id)));
        }
    }
    for (i, a) in positions.iter().enumerate() {
        for b in &positions[i + 1..] {
            if a.position.distance(b.position) <= range_r {
                adjacency.get_mut(&a.id).unwrap().insert(b.id);
                adjacency.get_mut(&b.id).unwrap().insert(a.id);
            }
        }
    }
    Ok(ConnectivityGraph { nodes: positions.iter().map(|p| p.id).collect(), adjacency })
}

/// Independent loss stream per directed link, created on first use.
#[derive(Debug, Clone)]
pub struct LinkStreams {
    seed: u64,
    base_stream: u64,
    streams: BTreeMap<(u32, u32), RngStream>,
}

impl LinkStreams {
    pub fn new(seed: u64, base_stream: u64) -> Self {
        Self { seed, base_stream, streams: BTreeMap::new() }
    }

    fn survives(&mut self, from: u32, to: u32, link_loss: f64) -> bool {
        let (seed, base) = (self.seed, self.base_stream);
        let rng = self
            .streams
            .entry((from, to))
            .or_insert_with(|| RngStream::new(seed, base + (u64::from(from) << 20) + u64::from(to)));
        !rng.bernoulli(link_loss)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CommEvent {
    pub step: u64,
    pub src: u32,
    pub dst: u32,
    pub hops: u32,
    pub dropped: bool,
}

/// Floods every packet outward from its source.
///
/// In round `h`, each node that first received the packet in round `h - 1`
/// forwards it to each neighbor over an independent lossy link; a node keeps
/// the first copy it receives, with `hops_traversed = h`. Rounds stop at
/// `max_hops`. Every source also finds its own packets in its inbox at hop 0.
/// Inboxes are deduplicated by `(src_id, created_step)` keeping the fewest
/// hops and ordered by `(created_step, src_id)`.
pub fn disseminate_u2u(
    graph: &ConnectivityGraph,
    packets: &[Packet],
    max_hops: u32,
    link_loss: f64,
    links: &mut LinkStreams,
    mut log: Option<&mut Vec<CommEvent>>,
) -> BTreeMap<u32, Vec<Packet>> {
    let mut inbox: BTreeMap<u32, BTreeMap<(u64, u32), Packet>> =
        graph.nodes().iter().map(|&n| (n, BTreeMap::new())).collect();
    for pkt in packets {
        let mut reached = BTreeSet::from([pkt.src_id]);
        let mut frontier = vec![pkt.src_id];
        offer(&mut inbox, pkt.src_id, Packet { hops_traversed: 0, ..pkt.clone() });
        for h in 1..=max_hops {
            let mut next = Vec::new();
            for &u in &frontier {
                for v in graph.neighbors(u) {
                    if reached.contains(&v) {
                        continue;
                    }
                    let ok = links.survives(u, v, link_loss);
                    if let Some(l) = log.as_deref_mut() {
                        l.push(CommEvent { step: pkt.created_step, src: u, dst: v, hops: h, dropped: !ok });
                    }
                    if ok {
                        reached.insert(v);
                        next.push(v);
                        offer(&mut inbox, v, Packet { hops_traversed: h, ..pkt.clone() });
                    }
                }
            }
            if next.is_empty() {
                break;
            }
            frontier = next;
        }
    }
    inbox.into_iter().map(|(k, v)| (k, v.into_values().collect())).collect()
}

fn offer(inbox: &mut BTreeMap<u32, BTreeMap<(u64, u32), Packet>>, node: u32, pkt: Packet) {
    let slot = inbox.entry(node).or_default();
    let key = (pkt.created_step, pkt.src_id);
    match slot.get(&key) {
        Some(old) if old.hops_traversed <= pkt.hops_traversed => {}
        _ => {
            slot.insert(key, pkt);
        }
    }
}

/// Fixed-delay FIFO channel to or from the edge.
#[derive(Debug, Clone)]
pub struct EdgeQueue<T> {
    delay: u64,
    pending: VecDeque<(u64, T)>,
    last_now: Option<u64>,
    enqueued: usize,
    delivered: usize,
}

impl<T> EdgeQueue<T> {
    pub fn new(delay: u64) -> Self {
        Self { delay, pending: VecDeque::new(), last_now: None, enqueued: 0, delivered: 0 }
    }

    pub fn delay(&self) -> u64 {
        self.delay
    }

    fn tick(&mut self, now: u64) -> Result<()> {
        if let Some(last) = self.last_now {
            if now < last {
                return Err(Error::NonMonotoneClock { now, last });
            }
        }
        self.last_now = Some(now);
        Ok(())
    }

    pub fn enqueue(&mut self, item: T, now: u64) -> Result<()> {
        self.tick(now)?;
        self.pending.push_back((now + self.delay, item));
        self.enqueued += 1;
        Ok(())
    }

    pub fn deliver(&mut self, now: u64) -> Result<Vec<T>> {
        self.tick(now)?;
        let mut out = Vec::new();
        while self.pending.front().is_some_and(|(due, _)| *due <= now) {
            out.push(self.pending.pop_front().unwrap().1);
        }
        self.delivered += out.len();
        Ok(out)
    }

    pub fn pending(&self) -> usize {
        self.pending.len()
    }

    pub fn enqueued(&self) -> usize {
        self.enqueued
    }

    pub fn delivered(&self) -> usize {
        self.delivered
    }
}
