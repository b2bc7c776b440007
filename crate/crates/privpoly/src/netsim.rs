//! Deterministic message-passing harness.
//!
//! Agents exchange envelopes over a validated undirected topology. Every
//! delivery is recorded in per-principal transcripts plus a global
//! eavesdropper transcript: the eavesdropper sees all metadata and any
//! unsealed payload, a relay sees metadata only, and sealed payloads are
//! visible to the final recipient alone. Time advances in lock-step protocol
//! rounds, so identical inputs replay to byte-identical transcripts.

use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::agent::AgentId;
use crate::error::NetError;

/// An undirected graph with precomputed neighbor maps.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    nodes: BTreeSet<AgentId>,
    edges: BTreeSet<(AgentId, AgentId)>,
    neighbors: BTreeMap<AgentId, BTreeSet<AgentId>>,
}

impl Topology {
    /// Validates a node/edge list: no self-loops, no duplicate edges, no
    /// unknown endpoints.
    pub fn build(
        nodes: impl IntoIterator<Item = AgentId>,
        edges: impl IntoIterator<Item = (AgentId, AgentId)>,
    ) -> Result<Self, NetError> {
        let nodes: BTreeSet<AgentId> = nodes.into_iter().collect();
        let mut edge_set = BTreeSet::new();
        let mut neighbors: BTreeMap<AgentId, BTreeSet<AgentId>> =
            nodes.iter().map(|n| (*n, BTreeSet::new())).collect();
        for (a, b) in edges {
            if a == b {
                return Err(NetError::ConfigError(format!("self-loop at agent {a}")));
            }
            if !nodes.contains(&a) || !nodes.contains(&b) {
                return Err(NetError::ConfigError(format!("edge ({a},{b}) has unknown node")));
            }
            let key = if a < b { (a, b) } else { (b, a) };
            if !edge_set.insert(key) {
                return Err(NetError::ConfigError(format!("duplicate edge ({a},{b})")));
            }
            neighbors.get_mut(&a).expect("node present").insert(b);
            neighbors.get_mut(&b).expect("node present").insert(a);
        }
        Ok(Topology {
            nodes,
            edges: edge_set,
            neighbors,
        })
    }

    /// Fully connected topology over `1..=n`.
    pub fn complete(n: u32) -> Topology {
        let nodes: Vec<AgentId> = (1..=n).map(AgentId).collect();
        let mut edges = Vec::new();
        for i in 1..=n {
            for j in i + 1..=n {
                edges.push((AgentId(i), AgentId(j)));
            }
        }
        Topology::build(nodes, edges).expect("complete graph is well-formed")
    }

    /// Ring topology over `1..=n`.
    pub fn ring(n: u32) -> Topology {
        let nodes: Vec<AgentId> = (1..=n).map(AgentId).collect();
        let edges: Vec<(AgentId, AgentId)> = (1..=n)
            .map(|i| (AgentId(i), AgentId(i % n + 1)))
            .collect();
        Topology::build(nodes, edges).expect("ring graph is well-formed")
    }

    /// Star topology with hub `1` and leaves `2..=n`.
    pub fn star(n: u32) -> Topology {
        let nodes: Vec<AgentId> = (1..=n).map(AgentId).collect();
        let edges: Vec<(AgentId, AgentId)> =
            (2..=n).map(|i| (AgentId(1), AgentId(i))).collect();
        Topology::build(nodes, edges).expect("star graph is well-formed")
    }

    pub fn nodes(&self) -> &BTreeSet<AgentId> {
        &self.nodes
    }

    pub fn has_edge(&self, a: AgentId, b: AgentId) -> bool {
        let key = if a < b { (a, b) } else { (b, a) };
        self.edges.contains(&key)
    }

    pub fn neighbors(&self, i: AgentId) -> &BTreeSet<AgentId> {
        static EMPTY: BTreeSet<AgentId> = BTreeSet::new();
        self.neighbors.get(&i).unwrap_or(&EMPTY)
    }

    /// `N_i ∪ {i}`.
    pub fn closed_neighborhood(&self, i: AgentId) -> BTreeSet<AgentId> {
        let mut s = self.neighbors(i).clone();
        s.insert(i);
        s
    }

    pub fn degree(&self, i: AgentId) -> usize {
        self.neighbors(i).len()
    }
}

/// A message in flight. `bytes` is the sender-declared wire size of the
/// payload; `sealed` hides the payload from everyone but `to`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Envelope<P> {
    pub from: AgentId,
    pub to: AgentId,
    pub relay: Option<AgentId>,
    pub kind: &'static str,
    pub payload: P,
    pub sealed: bool,
    pub bytes: u64,
}

/// What one principal saw of an envelope. `payload` is `None` whenever the
/// sealing rules hide it from this observer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObservedEnvelope<P> {
    pub tick: u64,
    pub from: AgentId,
    pub to: AgentId,
    pub relay: Option<AgentId>,
    pub kind: &'static str,
    pub bytes: u64,
    pub sealed: bool,
    pub payload: Option<P>,
}

#[derive(Serialize)]
struct TranscriptLine<'a> {
    tick: u64,
    from: u32,
    to: u32,
    relay: Option<u32>,
    kind: &'a str,
    bytes: u64,
    sealed: bool,
}

/// The simulated network: inboxes, transcripts, dropout state, counters.
#[derive(Debug, Clone)]
pub struct Network<P: Clone> {
    topology: Topology,
    dropped: BTreeSet<AgentId>,
    tick: u64,
    inboxes: BTreeMap<AgentId, VecDeque<Envelope<P>>>,
    transcripts: BTreeMap<AgentId, Vec<ObservedEnvelope<P>>>,
    eavesdropper: Vec<ObservedEnvelope<P>>,
    messages_sent: u64,
    bytes_sent: u64,
}

impl<P: Clone> Network<P> {
    pub fn new(topology: Topology) -> Self {
        let inboxes = topology.nodes().iter().map(|n| (*n, VecDeque::new())).collect();
        let transcripts = topology.nodes().iter().map(|n| (*n, Vec::new())).collect();
        Network {
            topology,
            dropped: BTreeSet::new(),
            tick: 0,
            inboxes,
            transcripts,
            eavesdropper: Vec::new(),
            messages_sent: 0,
            bytes_sent: 0,
        }
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    /// Advances lock-step time by one protocol round.
    pub fn advance_tick(&mut self) {
        self.tick += 1;
    }

    pub fn is_dropped(&self, a: AgentId) -> bool {
        self.dropped.contains(&a)
    }

    fn observe(env: &Envelope<P>, tick: u64, payload: Option<P>) -> ObservedEnvelope<P> {
        ObservedEnvelope {
            tick,
            from: env.from,
            to: env.to,
            relay: env.relay,
            kind: env.kind,
            bytes: env.bytes,
            sealed: env.sealed,
            payload,
        }
    }

    /// Sends an envelope. Direct sends require an edge `from–to`; a relayed
    /// send requires edges `from–relay` and `relay–to` and counts as two hops.
    /// The relay and (for sealed payloads) the eavesdropper record metadata
    /// only.
    pub fn send(&mut self, env: Envelope<P>) -> Result<(), NetError> {
        if self.dropped.contains(&env.from) {
            return Err(NetError::DeliveryToDropped(env.from));
        }
        if self.dropped.contains(&env.to) {
            return Err(NetError::DeliveryToDropped(env.to));
        }
        if let Some(r) = env.relay {
            if self.dropped.contains(&r) {
                return Err(NetError::DeliveryToDropped(r));
            }
        }
        let hops = match env.relay {
            None => {
                if !self.topology.has_edge(env.from, env.to) {
                    return Err(NetError::TopologyViolation(env.from, env.to));
                }
                1
            }
            Some(r) => {
                if !self.topology.has_edge(env.from, r) || !self.topology.has_edge(r, env.to) {
                    return Err(NetError::TopologyViolation(env.from, env.to));
                }
                2
            }
        };

        let tick = self.tick;
        let eavesdropped = if env.sealed { None } else { Some(env.payload.clone()) };
        for _ in 0..hops {
            self.eavesdropper.push(Self::observe(&env, tick, eavesdropped.clone()));
        }
        self.transcripts
            .get_mut(&env.from)
            .expect("sender is a node")
            .push(Self::observe(&env, tick, Some(env.payload.clone())));
        if let Some(r) = env.relay {
            self.transcripts
                .get_mut(&r)
                .expect("relay is a node")
                .push(Self::observe(&env, tick, None));
        }
        self.transcripts
            .get_mut(&env.to)
            .expect("recipient is a node")
            .push(Self::observe(&env, tick, Some(env.payload.clone())));

        self.messages_sent += hops;
        self.bytes_sent += env.bytes * hops;
        self.inboxes
            .get_mut(&env.to)
            .expect("recipient is a node")
            .push_back(env);
        Ok(())
    }

    /// Pops the oldest undelivered envelope for `agent` (FIFO).
    pub fn recv(&mut self, agent: AgentId) -> Option<Envelope<P>> {
        self.inboxes.get_mut(&agent)?.pop_front()
    }

    /// Silences `agent` from the current tick on. Idempotent; pending inbox
    /// envelopes are dead-lettered.
    pub fn inject_dropout(&mut self, agent: AgentId) {
        if self.dropped.insert(agent) {
            if let Some(inbox) = self.inboxes.get_mut(&agent) {
                inbox.clear();
            }
        }
    }

    pub fn transcript(&self, principal: AgentId) -> &[ObservedEnvelope<P>] {
        self.transcripts
            .get(&principal)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn eavesdropper_transcript(&self) -> &[ObservedEnvelope<P>] {
        &self.eavesdropper
    }

    pub fn messages_sent(&self) -> u64 {
        self.messages_sent
    }

    pub fn bytes_sent(&self) -> u64 {
        self.bytes_sent
    }

    /// Line-delimited JSON dump of the eavesdropper's metadata view.
    pub fn dump_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.eavesdropper {
            let line = TranscriptLine {
                tick: e.tick,
                from: e.from.0,
                to: e.to.0,
                relay: e.relay.map(|r| r.0),
                kind: e.kind,
                bytes: e.bytes,
                sealed: e.sealed,
            };
            out.push_str(&serde_json::to_string(&line).expect("metadata serializes"));
            out.push('\n');
        }
        out
    }
}
