//! The tick loop: sensing, map gossip, allocation rounds over the lossy
//! radio, tour planning, and motion, all advanced in lockstep from a single
//! clock so identical inputs replay identically.
//!
//! Each tick runs, in order: every agent senses and folds the result into
//! its own map; agents within radio range exchange map updates; each agent
//! refreshes its region graph and task ledger; groups elect hosts; queued
//! radio traffic is delivered; hosts open allocation rounds when triggered
//! and drive retries; agents replan tours against their latest applied
//! allocation; everyone moves one step with collision yielding. A separate
//! referee map (the union of all agent knowledge) decides termination and
//! scores coverage, and never feeds back into any agent's decisions.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::path::Path;
use std::time::{Duration, Instant};

use explore_core::alloc::{
    build_problem, build_problem_with, solve, CostParams, SolverConfig,
};
use explore_core::dispatch::network::{Envelope, LinkParams, NetworkModel};
use explore_core::dispatch::protocol::{
    CancelCause, DispatchContext, DispatchEngine, Event, HostConfig, OutMsg,
};
use explore_core::dispatch::{elect_hosts, ProposalBody, Version, REASON_VALIDATION};
use explore_core::graph::{ConnectivityGraph, GridPartition};
use explore_core::math::point_in_hull;
use explore_core::planner::{
    cluster_frontiers, plan_global_tour, plan_local_tour, route_path, sample_viewpoints,
    Viewpoint, SHORT_RANGE_M, SPLIT_THRESHOLD_M,
};
use explore_core::tasks::{TaskLedger, TaskStatus, UnitDescriptor, UnitRecord};
use explore_core::voxel::search::{nearest_allowed, non_occupied, sensable_mask};
use explore_core::agent::AgentState;
use explore_core::voxel::{sense, CellState, Coord, MapDelta, SensorConfig, VoxelMap};
use explore_core::{AgentId, Point3, Real};

use crate::metrics::{CsvLog, RunMetrics};
use crate::scenario::{Mode, ScenarioConfig, World};
use crate::trace::{PlanRecord, TraceWriter, NO_UNIT};

/// A host reallocates at least this often even without membership or task
/// changes, so drifting maps cannot strand stale assignments.
pub const REALLOC_INTERVAL_TICKS: u64 = 20;
/// Agents re-derive their local tour at least this often.
const REPLAN_INTERVAL_TICKS: u64 = 10;
/// Consecutive yielded ticks before the current target is set aside.
const BLOCKED_LIMIT_TICKS: u64 = 25;
/// A changed comm group must hold still this long before it alone triggers
/// a reallocation; agents drifting along a range boundary otherwise flood
/// the group with rounds.
const MEMBER_STABLE_TICKS: u64 = 10;
/// Graph and task-ledger folds batch map changes this many ticks; hosts
/// fold on demand before building a round.
const FOLD_INTERVAL_TICKS: u64 = 5;
/// Unit-tour planning searches paths between every pair it orders, so only
/// this many nearest units get exact ordering; the rest chain on by
/// straight-line nearest-neighbor and get re-ordered as the agent advances.
const TOUR_UNIT_CAP: usize = 10;
/// How long a set-aside target stays out of consideration.
const DEFER_TICKS: u64 = 50;
/// The referee folds its graph and ledger this often (and once at the end).
const REFEREE_REFRESH_TICKS: u64 = 10;
/// Within this distance of the planned viewpoint counts as having reached it.
const ARRIVE_EPS_M: Real = 0.2;


/// Per-mode coordination switches. Everything downstream keys off these
/// rather than re-matching on the mode, so the differences between modes
/// stay in one place.
#[derive(Debug, Clone, Copy)]
struct Knobs {
    /// Run allocation rounds at all (false: greedy frontier chasing).
    allocate: bool,
    /// Units come from ledger regions (true) or per-grid unknown centroids.
    region_units: bool,
    /// Maintain the region graph and use hybrid traversal costs.
    use_graph: bool,
    /// Contiguity radius factor; infinite radius makes the penalty vanish.
    lambda_c: Real,
}

impl Knobs {
    fn for_mode(mode: Mode, lambda_c: Real) -> Self {
        match mode {
            Mode::Full => Self { allocate: true, region_units: true, use_graph: true, lambda_c },
            Mode::NoCon => Self {
                allocate: true,
                region_units: true,
                use_graph: true,
                lambda_c: Real::INFINITY,
            },
            Mode::NoGraph => {
                Self { allocate: true, region_units: false, use_graph: false, lambda_c }
            }
            Mode::Greedy => {
                Self { allocate: false, region_units: false, use_graph: true, lambda_c }
            }
        }
    }

    fn config_line(&self, cfg: &ScenarioConfig) -> String {
        format!(
            "name={} mode={} seed={} agents={} contiguity={} tasks={} cost={} coordination={}",
            cfg.name,
            cfg.mode.as_str(),
            cfg.seed,
            cfg.agents.count,
            if self.lambda_c.is_finite() { "on" } else { "off" },
            if self.region_units { "regions" } else { "grid-centroids" },
            if self.use_graph { "hybrid" } else { "lattice" },
            if self.allocate { "rounds" } else { "greedy" },
        )
    }
}

/// The allocation snapshot an agent plans from: the record set and visit
/// sequence from the last applied round. Fed exclusively by the dispatch
/// engine, never rewritten locally, so plans always trace back to an agreed
/// version.
struct AssignMirror {
    id: AgentId,
    /// Host whose full state this mirror last adopted; change-only bodies
    /// from any other host cannot be interpreted and are rejected.
    synced_host: Option<AgentId>,
    records: BTreeMap<u64, UnitRecord>,
    my_seq: Vec<u64>,
    version: Option<Version>,
    /// Bumps on every apply; planners compare it to spot new allocations.
    stamp: u64,
}

impl AssignMirror {
    fn new(id: AgentId) -> Self {
        Self { id, synced_host: None, records: BTreeMap::new(), my_seq: Vec::new(), version: None, stamp: 0 }
    }
}

impl DispatchContext for AssignMirror {
    fn validate(&mut self, version: Version, body: &ProposalBody) -> bool {
        body.full || self.synced_host == Some(version.host)
    }

    fn apply(&mut self, version: Version, body: &ProposalBody) {
        let new_seq: Vec<u64> = body
            .sequences
            .iter()
            .find(|(a, _)| *a == self.id)
            .map(|(_, seq)| seq.clone())
            .unwrap_or_default();
        // The stamp drives replanning, so bump it only when this agent's own
        // work changed: a different visit sequence, or new record content for
        // a unit in it. Rounds that merely reconfirm the state stay silent.
        let mut changed = new_seq != self.my_seq;
        if !changed {
            for rec in &body.records {
                if new_seq.contains(&rec.id) && self.records.get(&rec.id) != Some(rec) {
                    changed = true;
                    break;
                }
            }
        }
        if body.full {
            self.records.clear();
        }
        for rec in &body.records {
            self.records.insert(rec.id, rec.clone());
        }
        self.synced_host = Some(version.host);
        self.version = Some(version);
        self.my_seq = new_seq;
        if changed {
            self.stamp += 1;
        }
    }
}

struct SimAgent {
    state: AgentState,
    map: VoxelMap,
    graph: ConnectivityGraph,
    ledger: TaskLedger,
    engine: DispatchEngine,
    mirror: AssignMirror,
    /// Everything this agent ever learned, in arrival order; the gossip
    /// stream other agents replay from their cursors.
    log: Vec<(u32, CellState)>,
    /// Voxels changed since the last graph/ledger fold.
    dirty: Vec<usize>,
    // --- host bookkeeping ---
    last_round_members: Vec<AgentId>,
    /// Current comm-group membership and the tick it last changed; rounds
    /// triggered by membership wait until the group stops flickering.
    group_members: Vec<AgentId>,
    group_since: u64,
    last_finalize_tick: Option<u64>,
    /// Ledger revision shipped with the currently open round.
    pending_rev: u64,
    /// Revision all acked members are synced to; change-only bodies diff
    /// against it.
    rev_at_finalize: u64,
    /// Grid ids assigned by the open round (centroid-unit mode).
    pending_watch: Vec<u64>,
    /// Assigned grids being watched for completion (centroid-unit mode).
    watch_grids: Vec<u64>,
    /// A unit someone owned completed or went invalid since the last round.
    owned_event: bool,
    /// Next proposal must carry full state (a member failed validation).
    force_full: bool,
    rounds_started: u64,
    // --- planning ---
    planned_stamp: u64,
    last_plan_tick: u64,
    force_replan: bool,
    /// Route finished this tick; plan immediately next tick.
    arrived: bool,
    target_unit: Option<u64>,
    target_viewpoint: Option<Point3>,
    /// Min frontier-voxel index of the cluster being worked.
    target_cluster: Option<u64>,
    /// Unit id -> tick until which it is ignored.
    deferred_units: BTreeMap<u64, u64>,
    /// Cluster key (min frontier-voxel index) -> tick until ignored.
    deferred_clusters: BTreeMap<u64, u64>,
    /// Fruitless arrivals per cluster key; one strike switches the approach
    /// to standing on the frontier itself.
    strikes: BTreeMap<u64, u32>,
    /// Own-sensing map changes since the current plan was adopted.
    gain_since_plan: usize,
    blocked_ticks: u64,
}

struct Referee {
    map: VoxelMap,
    graph: ConnectivityGraph,
    ledger: TaskLedger,
    dirty: Vec<usize>,
}

pub struct Simulation {
    cfg: ScenarioConfig,
    knobs: Knobs,
    cost_params: CostParams,
    sensor: SensorConfig,
    truth: VoxelMap,
    part: GridPartition,
    agents: Vec<SimAgent>,
    /// cursors[a][b]: prefix of agent a's log already forwarded to b.
    cursors: Vec<Vec<usize>>,
    net: NetworkModel,
    referee: Referee,
    tick: u64,
    done: bool,
    /// Which voxels an agent could ever sense from reachable space; the
    /// coverage denominator.
    sensable: Vec<bool>,
    sensable_total: usize,
    known_sensable: usize,
    // --- outputs ---
    trace: TraceWriter,
    csv: CsvLog,
    coverage_series: Vec<Real>,
    rounds_begun: u64,
    rounds_finalized: u64,
    rounds_cancelled: u64,
    messages_sent: u64,
    bytes_sent: u64,
    solver_wall: Duration,
    owner_flips: u64,
    config_line: String,
}

impl Simulation {
    pub fn new(world: World) -> Self {
        let World { cfg, truth, starts } = world;
        let knobs = Knobs::for_mode(cfg.mode, cfg.alloc.lambda_c);
        let cost_params = CostParams {
            sigma_q: cfg.alloc.sigma_q,
            lambda_c: knobs.lambda_c,
            grid_side: cfg.alloc.grid_side,
            dist_threshold: if knobs.use_graph { cfg.alloc.dist_threshold } else { Real::INFINITY },
            m_inf: 1e9,
        };
        let sensor = SensorConfig::new(cfg.sensing.range);
        let part = GridPartition::new(&truth, cfg.alloc.grid_side);
        let limits = cfg.motion_limits();

        // An all-occupied map of the same shape yields a graph with no
        // vertices; handing it to agents in lattice-only mode makes every
        // graph fallback route cleanly fail instead of consulting stale
        // structure.
        let stub_graph = {
            let [nx, ny, nz] = truth.dims();
            let mut m = VoxelMap::new(truth.origin(), truth.resolution(), truth.dims());
            for x in 0..nx as i32 {
                for y in 0..ny as i32 {
                    for z in 0..nz as i32 {
                        m.set_state_raw(Coord::new(x, y, z), CellState::Occupied);
                    }
                }
            }
            m.recompute_frontiers();
            ConnectivityGraph::new(&m, cfg.alloc.grid_side)
        };

        let agents: Vec<SimAgent> = starts
            .iter()
            .enumerate()
            .map(|(i, &p)| {
                let id = i as AgentId;
                let map = truth.blank_like();
                let graph = if knobs.use_graph {
                    ConnectivityGraph::new(&map, cfg.alloc.grid_side)
                } else {
                    stub_graph.clone()
                };
                SimAgent {
                    state: AgentState::new(id, p, limits),
                    ledger: TaskLedger::new(map.len()),
                    graph,
                    map,
                    engine: DispatchEngine::new(id, HostConfig::default()),
                    mirror: AssignMirror::new(id),
                    log: Vec::new(),
                    dirty: Vec::new(),
                    last_round_members: Vec::new(),
                    group_members: Vec::new(),
                    group_since: 0,
                    last_finalize_tick: None,
                    pending_rev: 0,
                    rev_at_finalize: 0,
                    pending_watch: Vec::new(),
                    watch_grids: Vec::new(),
                    owned_event: false,
                    force_full: false,
                    rounds_started: 0,
                    planned_stamp: 0,
                    last_plan_tick: 0,
                    force_replan: false,
                    arrived: false,
                    target_unit: None,
                    target_viewpoint: None,
                    target_cluster: None,
                    deferred_units: BTreeMap::new(),
                    deferred_clusters: BTreeMap::new(),
                    strikes: BTreeMap::new(),
                    gain_since_plan: 0,
                    blocked_ticks: 0,
                }
            })
            .collect();

        let n = agents.len();
        let seeds: Vec<Coord> = starts.iter().map(|&p| truth.voxel_at(p).unwrap()).collect();
        let sensable = sensable_mask(&truth, &seeds);
        let sensable_total = sensable.iter().filter(|&&b| b).count();

        let link = LinkParams {
            drop: cfg.network.drop,
            delay_min: cfg.network.delay_min,
            delay_max: cfg.network.delay_max,
            duplicate: cfg.network.duplicate,
            reorder: cfg.network.reorder,
        };
        let net = NetworkModel::new(link, mix_seed(cfg.seed, 0x6e65_74, 0));

        let referee = Referee {
            map: truth.blank_like(),
            graph: ConnectivityGraph::new(&truth.blank_like(), cfg.alloc.grid_side),
            ledger: TaskLedger::new(truth.len()),
            dirty: Vec::new(),
        };

        let config_line = knobs.config_line(&cfg);
        let mut trace = TraceWriter::new();
        trace.config(0, &config_line);

        Self {
            knobs,
            cost_params,
            sensor,
            part,
            agents,
            cursors: vec![vec![0; n]; n],
            net,
            referee,
            tick: 0,
            done: false,
            sensable,
            sensable_total,
            known_sensable: 0,
            trace,
            csv: CsvLog::new(n),
            coverage_series: Vec::new(),
            rounds_begun: 0,
            rounds_finalized: 0,
            rounds_cancelled: 0,
            messages_sent: 0,
            bytes_sent: 0,
            solver_wall: Duration::ZERO,
            owner_flips: 0,
            config_line,
            truth,
            cfg,
        }
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn done(&self) -> bool {
        self.done
    }

    pub fn coverage(&self) -> Real {
        if self.sensable_total == 0 {
            1.0
        } else {
            self.known_sensable as Real / self.sensable_total as Real
        }
    }

    /// How many times a finalized unit moved to a different agent across
    /// rounds. High counts mean allocations are thrashing.
    pub fn owner_flips(&self) -> u64 {
        self.owner_flips
    }

    pub fn run(&mut self) -> RunMetrics {
        while !self.done && self.tick < self.cfg.tick_cap {
            self.step();
        }
        // Fold whatever knowledge arrived since the last periodic refresh so
        // the final referee graph, ledger, and dumps reflect the whole run.
        self.referee_refresh();
        self.build_metrics()
    }

    pub fn step(&mut self) {
        self.tick += 1;
        self.stage_sense();
        self.stage_exchange();
        self.stage_knowledge();
        let (groups, group_of) = self.stage_election();
        self.stage_deliver();
        if self.knobs.allocate {
            self.stage_rounds(&groups, &group_of);
            self.stage_poll(&groups, &group_of);
        }
        self.stage_plan();
        self.stage_move();
        if self.tick % REFEREE_REFRESH_TICKS == 0 {
            self.referee_refresh();
        }
        let coverage = self.coverage();
        self.coverage_series.push(coverage);
        let rows: Vec<(Real, Real, Real, Real)> = self
            .agents
            .iter()
            .map(|a| {
                let p = a.state.position;
                (p.x, p.y, p.z, a.state.velocity.norm())
            })
            .collect();
        self.csv.row(self.tick, coverage, &rows);
        if self.referee.map.frontier_count() == 0 {
            self.done = true;
        }
    }

    // ------------------------------------------------------------------
    // pipeline stages

    fn stage_sense(&mut self) {
        for i in 0..self.agents.len() {
            let pos = self.agents[i].state.position;
            let id = self.agents[i].state.id;
            let delta = match sense(&self.truth, &self.agents[i].map, pos, &self.sensor, id, self.tick) {
                Ok(d) => d,
                Err(e) => {
                    debug_assert!(false, "agent {id} sensing from invalid pose: {e}");
                    continue;
                }
            };
            if delta.is_empty() {
                continue;
            }
            let applied = self.agents[i].map.apply_delta(&delta).expect("own-map delta in bounds");
            if applied.is_empty() {
                continue;
            }
            self.agents[i].gain_since_plan += applied.entries.len();
            self.absorb_knowledge(i, &applied);
            self.referee_merge(&applied);
        }
    }

    /// Ordered pairwise gossip: each in-range pair syncs the sender's log
    /// tail. Entries a receiver already has merge to nothing and are not
    /// re-logged, so knowledge spreads without echo.
    fn stage_exchange(&mut self) {
        let n = self.agents.len();
        let r = self.cfg.agents.r_comm;
        for a in 0..n {
            for b in 0..n {
                if a == b {
                    continue;
                }
                if self.agents[a].state.position.distance(self.agents[b].state.position) > r {
                    continue;
                }
                let from = self.cursors[a][b];
                let entries: Vec<(u32, CellState)> = self.agents[a].log[from..].to_vec();
                self.cursors[a][b] = self.agents[a].log.len();
                if entries.is_empty() {
                    continue;
                }
                let delta =
                    MapDelta { source: self.agents[a].state.id, tick: self.tick, entries };
                let applied = self.agents[b].map.merge_delta(&delta).expect("peer delta in bounds");
                if !applied.is_empty() {
                    self.absorb_knowledge(b, &applied);
                }
            }
        }
    }

    /// Appends applied changes to an agent's gossip log and dirty list.
    fn absorb_knowledge(&mut self, i: usize, applied: &MapDelta) {
        self.agents[i].log.extend(applied.entries.iter().copied());
        self.agents[i]
            .dirty
            .extend(applied.entries.iter().map(|&(idx, _)| idx as usize));
    }

    fn referee_merge(&mut self, applied: &MapDelta) {
        let merged = self.referee.map.merge_delta(applied).expect("referee delta in bounds");
        for &(idx, _) in &merged.entries {
            if self.sensable[idx as usize] {
                self.known_sensable += 1;
            }
        }
        self.referee
            .dirty
            .extend(merged.entries.iter().map(|&(idx, _)| idx as usize));
    }

    /// Folds accumulated map changes into one agent's graph and ledger.
    fn fold_agent(knobs: &Knobs, a: &mut SimAgent) {
        if a.dirty.is_empty() {
            return;
        }
        if knobs.use_graph {
            a.graph.update(&a.map, &a.dirty);
        }
        if knobs.allocate && knobs.region_units {
            let owners_before: HashMap<u64, AgentId> = a
                .ledger
                .live_units()
                .filter_map(|u| u.record.owner.map(|o| (u.record.id, o)))
                .collect();
            let diff = a.ledger.refresh(&a.map, &a.graph);
            if diff
                .completed
                .iter()
                .chain(&diff.invalidated)
                .any(|id| owners_before.contains_key(id))
            {
                a.owned_event = true;
            }
        }
        a.dirty.clear();
    }

    fn stage_knowledge(&mut self) {
        // Folding is a region analysis over everything learned since the
        // last fold; batching a few ticks of changes costs only a little
        // trigger latency. Hosts fold on demand when they open a round.
        if self.tick % FOLD_INTERVAL_TICKS != 0 {
            return;
        }
        let knobs = self.knobs;
        for a in &mut self.agents {
            Self::fold_agent(&knobs, a);
        }
    }

    fn stage_election(&mut self) -> (Vec<explore_core::dispatch::CommGroup>, Vec<usize>) {
        let positions: Vec<(AgentId, Point3)> =
            self.agents.iter().map(|a| (a.state.id, a.state.position)).collect();
        let groups = elect_hosts(&positions, self.cfg.agents.r_comm);
        let mut group_of = vec![0usize; self.agents.len()];
        for (gi, g) in groups.iter().enumerate() {
            for &m in &g.members {
                group_of[m as usize] = gi;
            }
        }
        for i in 0..self.agents.len() {
            let members = &groups[group_of[i]].members;
            if self.agents[i].group_members != *members {
                self.agents[i].group_members = members.clone();
                self.agents[i].group_since = self.tick;
            }
        }
        if self.knobs.allocate {
            // An agent that stops being a host (after groups merge) winds its
            // round down so the next host starts from a clean slate.
            for i in 0..self.agents.len() {
                let id = self.agents[i].state.id;
                if groups[group_of[i]].host != id && self.agents[i].engine.round_active() {
                    let (outs, events) = self.agents[i].engine.resolve_round(self.tick);
                    self.send_all(i, outs);
                    self.absorb_events(events);
                }
            }
        }
        (groups, group_of)
    }

    fn stage_deliver(&mut self) {
        let envelopes = self.net.deliver(self.tick);
        for env in envelopes {
            let i = env.to as usize;
            if i >= self.agents.len() {
                continue;
            }
            let (outs, events) = {
                let a = &mut self.agents[i];
                a.engine.handle(&mut a.mirror, &env.bytes, self.tick)
            };
            self.send_all(i, outs);
            self.absorb_events(events);
        }
    }

    /// Traces, counts, and queues outgoing frames. Frames to agents outside
    /// radio range are counted as sent but never enter the network: range
    /// loss behaves like any other drop.
    fn send_all(&mut self, from: usize, outs: Vec<OutMsg>) {
        let from_id = self.agents[from].state.id;
        let from_pos = self.agents[from].state.position;
        for m in outs {
            self.trace.wire(self.tick, &m.bytes);
            self.messages_sent += 1;
            self.bytes_sent += m.bytes.len() as u64;
            let to = m.to as usize;
            if to >= self.agents.len() {
                continue;
            }
            if from_pos.distance(self.agents[to].state.position) <= self.cfg.agents.r_comm {
                self.net.send(Envelope { from: from_id, to: m.to, bytes: m.bytes }, self.tick);
            }
        }
    }

    fn absorb_events(&mut self, events: Vec<Event>) {
        for e in events {
            match e {
                Event::Applied { .. } => {}
                Event::Finalized { version, .. } => {
                    let host = version.host as usize;
                    if let Some(a) = self.agents.get_mut(host) {
                        a.last_finalize_tick = Some(self.tick);
                        a.rev_at_finalize = a.pending_rev;
                        a.watch_grids = std::mem::take(&mut a.pending_watch);
                        a.force_full = false;
                    }
                    self.rounds_finalized += 1;
                }
                Event::Cancelled { version, cause } => {
                    self.rounds_cancelled += 1;
                    if let CancelCause::Rejected { reason: REASON_VALIDATION, .. } = cause {
                        if let Some(a) = self.agents.get_mut(version.host as usize) {
                            // A member could not interpret a change-only
                            // body; next round must ship full state.
                            a.force_full = true;
                        }
                    }
                }
            }
        }
    }

    fn stage_rounds(&mut self, groups: &[explore_core::dispatch::CommGroup], group_of: &[usize]) {
        for i in 0..self.agents.len() {
            let id = self.agents[i].state.id;
            let group = &groups[group_of[i]];
            if group.host != id {
                continue;
            }
            if !self.knobs.region_units {
                // Completion watch for centroid units: an assigned grid with
                // no unknown voxels left is done work.
                let a = &mut self.agents[i];
                let before = a.watch_grids.len();
                let map = &a.map;
                let part = &self.part;
                a.watch_grids.retain(|&g| grid_unknown_count(map, part, g as u32) > 0);
                if a.watch_grids.len() != before {
                    a.owned_event = true;
                }
            }
            if self.agents[i].engine.round_active() {
                continue;
            }
            let membership_changed = self.agents[i].last_round_members != group.members
                && self.tick - self.agents[i].group_since >= MEMBER_STABLE_TICKS;
            let timer_due = self.agents[i]
                .last_finalize_tick
                .map_or(true, |t| self.tick - t >= REALLOC_INTERVAL_TICKS);
            if !(membership_changed || self.agents[i].owned_event || timer_due) {
                continue;
            }
            self.begin_round(i, group);
        }
    }

    fn begin_round(&mut self, i: usize, group: &explore_core::dispatch::CommGroup) {
        // The round snapshot must reflect everything this host has learned.
        let knobs = self.knobs;
        Self::fold_agent(&knobs, &mut self.agents[i]);

        let group_set: BTreeSet<AgentId> = group.members.iter().copied().collect();
        let agent_pts: Vec<(AgentId, Point3)> = group
            .members
            .iter()
            .map(|&m| (m, self.agents[m as usize].state.position))
            .collect();

        // Units and cost matrix from the host's own knowledge.
        let (units, problem, records_template, seed_key) = if self.knobs.region_units {
            let a = &self.agents[i];
            let units: Vec<(u64, Point3, Real)> = a
                .ledger
                .live_units()
                .filter(|u| u.record.owner.map_or(true, |o| group_set.contains(&o)))
                .map(|u| (u.record.id, u.record.anchor, u.record.voxel_count as Real))
                .collect();
            if units.is_empty() {
                return;
            }
            let problem = build_problem(&a.map, &a.graph, &agent_pts, &units, &self.cost_params);
            (units, problem, Vec::new(), a.ledger.revision())
        } else {
            let (units, records) = centroid_units(&self.agents[i].map, &self.part);
            if units.is_empty() {
                return;
            }
            let problem =
                lattice_problem(&self.agents[i].map, &agent_pts, &units, &self.cost_params);
            let key = units.iter().fold(0u64, |h, &(id, _, _)| mix_seed(h, id, 0));
            (units, problem, records, key)
        };

        // Keyed by problem content, not round count: a host re-running an
        // unchanged allocation must reproduce it exactly, or near-tied tours
        // would flip on every timer round and thrash everyone's plans.
        let seed = mix_seed(self.cfg.seed, self.agents[i].state.id as u64, seed_key);
        let t0 = Instant::now();
        let alloc = solve(&problem, &SolverConfig { seed, ..SolverConfig::default() });
        self.solver_wall += t0.elapsed();

        let sequences: Vec<(AgentId, Vec<u64>)> =
            alloc.sequences.iter().map(|(a, s)| (*a, s.clone())).collect();

        let (full_body, delta) = if self.knobs.region_units {
            let a = &mut self.agents[i];
            for (agent, seq) in &sequences {
                for u in seq {
                    let prev = a.ledger.unit(*u).and_then(|x| x.record.owner);
                    if prev.is_some_and(|p| p != *agent) {
                        self.owner_flips += 1;
                    }
                    a.ledger.set_owner(*u, Some(*agent));
                }
            }
            let rev = a.ledger.revision();
            a.pending_rev = rev;
            let full_body = ProposalBody {
                full: true,
                base_revision: rev,
                records: a.ledger.all_records(),
                sequences: sequences.clone(),
            };
            let delta = if !a.force_full && a.last_finalize_tick.is_some() {
                let acked = a.engine.acked_members();
                let targets: BTreeSet<AgentId> = group
                    .members
                    .iter()
                    .copied()
                    .filter(|m| *m != a.state.id && acked.contains(m))
                    .collect();
                (!targets.is_empty()).then(|| {
                    let body = ProposalBody {
                        full: false,
                        base_revision: rev,
                        records: a.ledger.records_since(a.rev_at_finalize),
                        sequences: sequences.clone(),
                    };
                    (body, targets)
                })
            } else {
                None
            };
            (full_body, delta)
        } else {
            let a = &mut self.agents[i];
            let mut records = records_template;
            let owner_of: HashMap<u64, AgentId> = sequences
                .iter()
                .flat_map(|(agent, seq)| seq.iter().map(move |&u| (u, *agent)))
                .collect();
            for rec in &mut records {
                rec.owner = owner_of.get(&rec.id).copied();
                rec.status =
                    if rec.owner.is_some() { TaskStatus::Assigned } else { TaskStatus::Pending };
            }
            a.rounds_started += 1; // revision stand-in for centroid units
            a.pending_rev = a.rounds_started;
            a.pending_watch = units.iter().map(|&(id, _, _)| id).collect();
            let full_body = ProposalBody {
                full: true,
                base_revision: a.pending_rev,
                records,
                sequences,
            };
            (full_body, None)
        };

        if self.knobs.region_units {
            self.agents[i].rounds_started += 1;
        }
        self.agents[i].last_round_members = group.members.clone();
        self.agents[i].owned_event = false;
        self.rounds_begun += 1;

        let (outs, events) = {
            let a = &mut self.agents[i];
            a.engine.begin_round(&mut a.mirror, &group.members, full_body, delta, self.tick)
        };
        self.send_all(i, outs);
        self.absorb_events(events);
    }

    fn stage_poll(&mut self, groups: &[explore_core::dispatch::CommGroup], group_of: &[usize]) {
        for i in 0..self.agents.len() {
            let group = &groups[group_of[i]];
            if group.host != self.agents[i].state.id {
                continue;
            }
            let (outs, events) = self.agents[i].engine.poll(self.tick, &group.members);
            self.send_all(i, outs);
            self.absorb_events(events);
        }
    }

    fn stage_plan(&mut self) {
        for i in 0..self.agents.len() {
            let (due, cadence_only) = {
                let a = &self.agents[i];
                let hard = a.force_replan || a.arrived || a.planned_stamp != a.mirror.stamp;
                let cadence =
                    self.tick.saturating_sub(a.last_plan_tick) >= REPLAN_INTERVAL_TICKS;
                (hard || cadence, cadence && !hard)
            };
            if !due {
                continue;
            }
            // A keep-alive replan while mid-route toward a still-worthwhile
            // target keeps the current route. Re-deciding from scratch every
            // interval lets near-tied alternatives capture the agent in
            // turn, and it oscillates in place instead of ever arriving.
            if cadence_only && self.plan_is_fresh(i) {
                self.agents[i].last_plan_tick = self.tick;
                continue;
            }
            // A fruitless arrival (reached the viewpoint, learned nothing)
            // earns the cluster a strike; the retry stands on the frontier.
            {
                let a = &mut self.agents[i];
                if a.arrived && a.gain_since_plan == 0 {
                    if let (Some(vp), Some(key)) = (a.target_viewpoint, a.target_cluster) {
                        if a.state.position.distance(vp) <= ARRIVE_EPS_M {
                            *a.strikes.entry(key).or_insert(0) += 1;
                        }
                    }
                }
                a.arrived = false;
                a.force_replan = false;
                a.last_plan_tick = self.tick;
                a.planned_stamp = a.mirror.stamp;
                a.gain_since_plan = 0;
            }
            if self.knobs.allocate {
                self.plan_assigned(i);
            } else {
                self.plan_greedy(i);
            }
        }
    }

    /// Route helper honoring the mode: hybrid range-split routing normally,
    /// pure lattice search when the graph is ablated. A hybrid route that
    /// cannot actually be driven (region routes estimate gaps with straight
    /// connectors) falls back to a full-map voxel search, so any target
    /// reachable through known free space gets a drivable route.
    fn route_to(&self, i: usize, to: Point3) -> Option<Vec<Point3>> {
        let a = &self.agents[i];
        if self.knobs.use_graph {
            if let Some(r) = route_path(&a.map, &a.graph, a.state.position, to, SHORT_RANGE_M) {
                if route_is_executable(&a.map, a.state.position, &r) {
                    return Some(r);
                }
            }
        }
        route_path(&a.map, &a.graph, a.state.position, to, Real::INFINITY)
    }

    /// Whether the current plan is still worth finishing: a live route to an
    /// undeferred target whose unit (if any) still has unknown volume.
    fn plan_is_fresh(&self, i: usize) -> bool {
        let a = &self.agents[i];
        if !a.state.has_route() {
            return false;
        }
        if let Some(key) = a.target_cluster {
            if a.deferred_clusters.get(&key).is_some_and(|&until| self.tick < until) {
                return false;
            }
        }
        match a.target_unit {
            // Frontier chase: arrivals and clips force re-decisions anyway.
            None => true,
            Some(uid) => {
                if a.deferred_units.get(&uid).is_some_and(|&until| self.tick < until) {
                    return false;
                }
                let Some(rec) = a.mirror.records.get(&uid) else {
                    return false;
                };
                !rec.status.is_terminal()
                    && !unit_scope_unknowns(&a.map, &self.part, rec).is_empty()
            }
        }
    }

    /// Viewpoint for one cluster, honoring strikes: after a fruitless visit
    /// the agent stands on the frontier voxel nearest the centroid, which
    /// senses at least that voxel's unknown neighbor.
    fn cluster_pose(
        &self,
        i: usize,
        cluster: &explore_core::planner::FrontierCluster,
    ) -> Option<(u64, Viewpoint)> {
        let a = &self.agents[i];
        let key = cluster
            .voxels
            .iter()
            .map(|&c| a.map.index(c) as u64)
            .min()
            .expect("clusters are non-empty");
        if a.deferred_clusters.get(&key).is_some_and(|&until| self.tick < until) {
            return None;
        }
        let strikes = a.strikes.get(&key).copied().unwrap_or(0);
        if strikes > 0 {
            let stand = cluster
                .voxels
                .iter()
                .min_by(|&&p, &&q| {
                    let dp = a.map.voxel_center(p).distance(cluster.centroid);
                    let dq = a.map.voxel_center(q).distance(cluster.centroid);
                    dp.total_cmp(&dq).then_with(|| (p.x, p.y, p.z).cmp(&(q.x, q.y, q.z)))
                })
                .copied()
                .unwrap();
            let position = a.map.voxel_center(stand);
            let look = cluster.centroid - position;
            let yaw = if look.xy().norm() > 1e-9 { look.y.atan2(look.x) } else { 0.0 };
            return Some((key, Viewpoint { position, yaw, covered: 1 }));
        }
        sample_viewpoints(&a.map, cluster, a.state.position, self.sensor.range)
            .map(|vp| (key, vp))
    }

    fn plan_assigned(&mut self, i: usize) {
        // Workable units: mine, live, not deferred, still unknown on my map.
        let mut scopes: HashMap<u64, Vec<usize>> = HashMap::new();
        let workable: Vec<(u64, Point3)> = {
            let a = &self.agents[i];
            a.mirror
                .my_seq
                .iter()
                .filter_map(|&uid| {
                    let rec = a.mirror.records.get(&uid)?;
                    if rec.status.is_terminal() {
                        return None;
                    }
                    if a.deferred_units.get(&uid).is_some_and(|&until| self.tick < until) {
                        return None;
                    }
                    let unknowns = unit_scope_unknowns(&a.map, &self.part, rec);
                    if unknowns.is_empty() {
                        return None;
                    }
                    let anchor = rec.anchor;
                    scopes.insert(uid, unknowns);
                    Some((uid, anchor))
                })
                .collect()
        };
        if workable.is_empty() {
            // Nothing assigned is actionable; chase the nearest frontier on
            // the own map instead of stalling while unknown space remains.
            self.plan_greedy(i);
            return;
        }

        let order: Vec<u64> = if self.knobs.use_graph {
            let a = &self.agents[i];
            let pos = a.state.position;
            if workable.len() <= TOUR_UNIT_CAP {
                plan_global_tour(&a.map, &a.graph, pos, a.state.velocity, &workable, &a.state.limits)
                    .order
            } else {
                let mut by_dist = workable.clone();
                by_dist.sort_by(|x, y| {
                    pos.distance(x.1).total_cmp(&pos.distance(y.1)).then(x.0.cmp(&y.0))
                });
                let near = &by_dist[..TOUR_UNIT_CAP];
                let far = &by_dist[TOUR_UNIT_CAP..];
                let mut order =
                    plan_global_tour(&a.map, &a.graph, pos, a.state.velocity, near, &a.state.limits)
                        .order;
                let last_anchor = order
                    .last()
                    .and_then(|id| near.iter().find(|(u, _)| u == id))
                    .map_or(pos, |&(_, p)| p);
                order.extend(nn_order(last_anchor, far));
                order
            }
        } else {
            nn_order(self.agents[i].state.position, &workable)
        };

        let anchor_of: HashMap<u64, Point3> = workable.iter().copied().collect();
        for (k, &uid) in order.iter().enumerate() {
            let unknowns = &scopes[&uid];
            let fringe = frontier_fringe(&self.agents[i].map, unknowns);
            if fringe.is_empty() {
                // Unknown volume with no sensable boundary in this unit yet;
                // progress must come through a neighboring unit first.
                continue;
            }
            let clusters = cluster_frontiers(&self.agents[i].map, &fringe, SPLIT_THRESHOLD_M);
            let mut poses: Vec<(u64, Viewpoint)> = Vec::new();
            for c in &clusters {
                if let Some(p) = self.cluster_pose(i, c) {
                    poses.push(p);
                }
            }
            if poses.is_empty() {
                continue;
            }
            let next_anchor = order.get(k + 1).and_then(|u| anchor_of.get(u)).copied();
            let vps: Vec<Viewpoint> = poses.iter().map(|(_, vp)| vp.clone()).collect();
            let local = {
                let a = &self.agents[i];
                plan_local_tour(
                    &a.map,
                    &a.graph,
                    a.state.position,
                    a.state.velocity,
                    next_anchor,
                    &vps,
                    &a.state.limits,
                )
            };
            for &vi in &local.order {
                let (key, vp) = &poses[vi];
                let route = self
                    .route_to(i, vp.position)
                    .filter(|r| route_is_executable(&self.agents[i].map, self.agents[i].state.position, r));
                if let Some(route) = route {
                    let ordered: Vec<Viewpoint> =
                        local.order.iter().map(|&x| poses[x].1.clone()).collect();
                    self.adopt_plan(
                        i,
                        uid,
                        order[k..].to_vec(),
                        *key,
                        vp.position,
                        ordered,
                        route,
                    );
                    return;
                }
            }
            // No pose of this unit is routable from here right now.
            self.agents[i].deferred_units.insert(uid, self.tick + DEFER_TICKS);
        }
        self.plan_greedy(i);
    }

    fn plan_greedy(&mut self, i: usize) {
        let fringe: Vec<usize> = self.agents[i].map.frontier_indices().collect();
        if fringe.is_empty() {
            self.adopt_idle(i);
            return;
        }
        let clusters = cluster_frontiers(&self.agents[i].map, &fringe, SPLIT_THRESHOLD_M);
        let mut poses: Vec<(u64, Viewpoint)> = Vec::new();
        for c in &clusters {
            if let Some(p) = self.cluster_pose(i, c) {
                poses.push(p);
            }
        }
        // Nearest by traversal cost, ties broken by cluster key. Costs are
        // computed once per pose; each lookup runs a path search.
        let mut costed: Vec<(Real, u64, Viewpoint)> = poses
            .into_iter()
            .map(|(key, vp)| {
                let ag = &self.agents[i];
                let c = explore_core::alloc::traversal_cost(
                    &ag.map,
                    &ag.graph,
                    ag.state.position,
                    vp.position,
                    &self.cost_params,
                );
                (c, key, vp)
            })
            .collect();
        costed.sort_by(|(ca, ka, _), (cb, kb, _)| ca.total_cmp(cb).then(ka.cmp(kb)));
        let poses: Vec<(u64, Viewpoint)> =
            costed.into_iter().map(|(_, key, vp)| (key, vp)).collect();
        for (key, vp) in &poses {
            let route = self
                .route_to(i, vp.position)
                .filter(|r| {
                    route_is_executable(&self.agents[i].map, self.agents[i].state.position, r)
                });
            if let Some(route) = route {
                self.adopt_plan(i, NO_UNIT, Vec::new(), *key, vp.position, vec![vp.clone()], route);
                return;
            }
        }
        self.adopt_idle(i);
    }


    fn adopt_plan(
        &mut self,
        i: usize,
        unit: u64,
        order: Vec<u64>,
        cluster_key: u64,
        viewpoint: Point3,
        viewpoints: Vec<Viewpoint>,
        route: Vec<Point3>,
    ) {
        let version = self.agents[i].mirror.version.unwrap_or(Version {
            host: 0,
            counter: 0,
            tick: 0,
        });
        let plan = PlanRecord {
            agent: self.agents[i].state.id,
            version,
            unit,
            order,
            viewpoints,
            waypoints: route.clone(),
        };
        self.trace.plan(self.tick, &plan);
        let a = &mut self.agents[i];
        a.state.set_route(route);
        // A plan that starts already at its viewpoint counts as arrived, so
        // the fruitless-visit check still runs for it next tick.
        if !a.state.has_route() {
            a.arrived = true;
        }
        a.target_unit = (unit != NO_UNIT).then_some(unit);
        a.target_viewpoint = Some(viewpoint);
        a.target_cluster = Some(cluster_key);
    }

    fn adopt_idle(&mut self, i: usize) {
        let a = &mut self.agents[i];
        a.state.set_route(Vec::new());
        a.target_unit = None;
        a.target_viewpoint = None;
        a.target_cluster = None;
    }

    /// Kinematics plus the two safety nets: never enter occupied space
    /// (bumping into unsensed structure records it as occupied), and never
    /// share a voxel (the lower id yields and waits).
    fn stage_move(&mut self) {
        let dt = self.cfg.tick_seconds;
        let mut reserved: HashMap<usize, AgentId> = HashMap::new();
        for i in (0..self.agents.len()).rev() {
            let before = self.agents[i].state.clone();
            let had_route = before.has_route();
            self.agents[i].state.advance(dt);
            let arrived = had_route && !self.agents[i].state.has_route();

            enum Clip {
                None,
                Bump(Coord),
                KnownWall,
                Yield,
            }
            let clip = match self.truth.voxel_at(self.agents[i].state.position) {
                None => Clip::KnownWall, // walked off the map: treat as a wall
                Some(c) => {
                    if self.truth.state(c) == CellState::Occupied {
                        Clip::Bump(c)
                    } else if self.agents[i].map.state(c) == CellState::Occupied {
                        Clip::KnownWall
                    } else if reserved
                        .get(&self.truth.index(c))
                        .is_some_and(|&other| other != self.agents[i].state.id)
                    {
                        Clip::Yield
                    } else {
                        Clip::None
                    }
                }
            };

            match clip {
                Clip::None => {
                    if arrived {
                        self.agents[i].arrived = true;
                    }
                    if had_route {
                        self.agents[i].blocked_ticks = 0;
                    }
                }
                Clip::Bump(c) => {
                    let src = self.agents[i].state.id;
                    self.agents[i].state = before;
                    self.agents[i].state.velocity = Point3::zero();
                    let idx = self.truth.index(c) as u32;
                    let delta = MapDelta {
                        source: src,
                        tick: self.tick,
                        entries: vec![(idx, CellState::Occupied)],
                    };
                    let applied = self.agents[i].map.merge_delta(&delta).expect("bump in bounds");
                    if !applied.is_empty() {
                        self.absorb_knowledge(i, &applied);
                        self.referee_merge(&applied);
                    }
                    let a = &mut self.agents[i];
                    a.state.set_route(Vec::new());
                    a.force_replan = true;
                    a.blocked_ticks += 1;
                }
                Clip::KnownWall => {
                    self.agents[i].state = before;
                    self.agents[i].state.velocity = Point3::zero();
                    let a = &mut self.agents[i];
                    a.state.set_route(Vec::new());
                    a.force_replan = true;
                    a.blocked_ticks += 1;
                }
                Clip::Yield => {
                    self.agents[i].state = before;
                    self.agents[i].state.velocity = Point3::zero();
                    self.agents[i].blocked_ticks += 1;
                }
            }

            if self.agents[i].blocked_ticks >= BLOCKED_LIMIT_TICKS {
                let a = &mut self.agents[i];
                let until = self.tick + DEFER_TICKS;
                if let Some(u) = a.target_unit {
                    a.deferred_units.insert(u, until);
                } else if let Some(k) = a.target_cluster {
                    a.deferred_clusters.insert(k, until);
                }
                a.state.set_route(Vec::new());
                a.force_replan = true;
                a.blocked_ticks = 0;
            }

            if let Some(c) = self.truth.voxel_at(self.agents[i].state.position) {
                reserved.insert(self.truth.index(c), self.agents[i].state.id);
            }
        }
    }

    fn referee_refresh(&mut self) {
        if self.referee.dirty.is_empty() {
            return;
        }
        self.referee.graph.update(&self.referee.map, &self.referee.dirty);
        self.referee.ledger.refresh(&self.referee.map, &self.referee.graph);
        self.referee.dirty.clear();
    }

    // ------------------------------------------------------------------
    // outputs

    fn build_metrics(&self) -> RunMetrics {
        let per_agent: Vec<Real> =
            self.agents.iter().map(|a| a.state.distance_traveled).collect();
        let total: Real = per_agent.iter().sum();
        let time = self.tick as Real * self.cfg.tick_seconds;
        let mean_v = if time > 0.0 && !self.agents.is_empty() {
            total / (self.agents.len() as Real * time)
        } else {
            0.0
        };
        RunMetrics {
            scenario: self.cfg.name.clone(),
            mode: self.cfg.mode,
            seed: self.cfg.seed,
            ticks: self.tick,
            tick_seconds: self.cfg.tick_seconds,
            exploration_time_s: time,
            complete: self.done,
            coverage_final: self.coverage(),
            per_agent_path_m: per_agent,
            total_path_m: total,
            mean_velocity_mps: mean_v,
            allocation_rounds: self.rounds_begun,
            rounds_finalized: self.rounds_finalized,
            rounds_cancelled: self.rounds_cancelled,
            messages_sent: self.messages_sent,
            messages_delivered: self.net.delivered_count,
            bytes_sent: self.bytes_sent,
            solver_wall_ms: self.solver_wall.as_secs_f64() * 1e3,
            config_line: self.config_line.clone(),
        }
    }

    pub fn csv_text(&self) -> &str {
        self.csv.as_str()
    }

    pub fn trace_bytes(&self) -> &[u8] {
        self.trace.bytes()
    }

    pub fn referee_map(&self) -> &VoxelMap {
        &self.referee.map
    }

    pub fn referee_ledger(&self) -> &TaskLedger {
        &self.referee.ledger
    }

    pub fn truth(&self) -> &VoxelMap {
        &self.truth
    }

    /// Writes metrics.csv, summary.json, trace.bin, and the text dumps of
    /// the ground truth, the referee's map, and the referee's region graph.
    pub fn write_outputs(&self, metrics: &RunMetrics, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("metrics.csv"), self.csv.as_str())?;
        std::fs::write(dir.join("summary.json"), metrics.to_json())?;
        std::fs::write(dir.join("trace.bin"), self.trace.bytes())?;
        std::fs::write(
            dir.join("map-truth.txt"),
            explore_core::voxel::io::render_grid_text(&self.truth),
        )?;
        std::fs::write(
            dir.join("map-explored.txt"),
            explore_core::voxel::io::render_grid_text(&self.referee.map),
        )?;
        std::fs::write(dir.join("graph-referee.txt"), self.referee.graph.render_text())?;
        Ok(())
    }
}

/// Runs a resolved world to completion, optionally writing artifacts.
pub fn run_world(world: World, out: Option<&Path>) -> std::io::Result<RunMetrics> {
    let mut sim = Simulation::new(world);
    let metrics = sim.run();
    if let Some(dir) = out {
        sim.write_outputs(&metrics, dir)?;
    }
    Ok(metrics)
}

// ----------------------------------------------------------------------
// helpers

/// SplitMix-style mixing of three seeds into one.
fn mix_seed(a: u64, b: u64, c: u64) -> u64 {
    let mut x = a
        ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ c.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

fn grid_unknown_count(map: &VoxelMap, part: &GridPartition, g: u32) -> u32 {
    let (lo, hi) = part.voxel_bounds(g);
    let mut n = 0;
    for x in lo[0]..hi[0] {
        for y in lo[1]..hi[1] {
            for z in lo[2]..hi[2] {
                if map.state(Coord::new(x, y, z)) == CellState::Unknown {
                    n += 1;
                }
            }
        }
    }
    n
}

/// Per-grid unknown centroids: the degraded task representation used when
/// the region graph is ablated. Returns solver units and matching wire
/// records (grid id doubles as unit id).
fn centroid_units(
    map: &VoxelMap,
    part: &GridPartition,
) -> (Vec<(u64, Point3, Real)>, Vec<UnitRecord>) {
    let mut units = Vec::new();
    let mut records = Vec::new();
    let half = map.resolution() / 2.0;
    for g in 0..part.len() as u32 {
        let (lo, hi) = part.voxel_bounds(g);
        let mut sum = Point3::zero();
        let mut count = 0u32;
        let mut z_lo = Real::INFINITY;
        let mut z_hi = Real::NEG_INFINITY;
        for x in lo[0]..hi[0] {
            for y in lo[1]..hi[1] {
                for z in lo[2]..hi[2] {
                    let c = Coord::new(x, y, z);
                    if map.state(c) == CellState::Unknown {
                        let p = map.voxel_center(c);
                        sum = sum + p;
                        count += 1;
                        z_lo = z_lo.min(p.z - half);
                        z_hi = z_hi.max(p.z + half);
                    }
                }
            }
        }
        if count == 0 {
            continue;
        }
        let centroid = sum * (1.0 / count as Real);
        units.push((g as u64, centroid, count as Real));
        records.push(UnitRecord {
            id: g as u64,
            anchor: centroid,
            descriptor: UnitDescriptor::WholeGrid(g),
            z_range: (z_lo, z_hi),
            voxel_count: count,
            owner: None,
            status: TaskStatus::Pending,
        });
    }
    (units, records)
}

/// Cost matrix from pure lattice search: one breadth-first flood per
/// distinct endpoint over non-occupied voxels, shared across all pairs.
fn lattice_problem(
    map: &VoxelMap,
    agents: &[(AgentId, Point3)],
    units: &[(u64, Point3, Real)],
    p: &CostParams,
) -> explore_core::alloc::AllocationProblem {
    let snap = |pt: Point3| -> Option<Coord> {
        let c = map.voxel_at(pt)?;
        nearest_allowed(map, c, 4, |c| non_occupied(map.state(c)))
    };
    let key = |pt: Point3| (pt.x.to_bits(), pt.y.to_bits(), pt.z.to_bits());
    let mut fields: HashMap<(u64, u64, u64), (Option<Vec<u32>>, Option<Coord>)> = HashMap::new();
    let points: Vec<Point3> = agents
        .iter()
        .map(|&(_, p)| p)
        .chain(units.iter().map(|&(_, p, _)| p))
        .collect();
    for &pt in &points {
        fields.entry(key(pt)).or_insert_with(|| {
            let start = snap(pt);
            (start.map(|c| bfs_steps(map, c)), start)
        });
    }
    let res = map.resolution();
    build_problem_with(agents, units, p, |from, to| {
        let (field, _) = &fields[&key(from)];
        let Some(field) = field else { return p.m_inf };
        let Some((_, Some(target))) = fields.get(&key(to)) else { return p.m_inf };
        let steps = field[map.index(*target)];
        if steps == u32::MAX {
            p.m_inf
        } else {
            steps as Real * res
        }
    })
}

/// Breadth-first step counts from one voxel over the 6-connected
/// non-occupied lattice; unreachable voxels stay at `u32::MAX`.
fn bfs_steps(map: &VoxelMap, from: Coord) -> Vec<u32> {
    let mut dist = vec![u32::MAX; map.len()];
    let mut queue = VecDeque::new();
    dist[map.index(from)] = 0;
    queue.push_back(from);
    while let Some(c) = queue.pop_front() {
        let d = dist[map.index(c)];
        for (dx, dy, dz) in
            [(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)]
        {
            let nb = c.offset(dx, dy, dz);
            if !map.in_bounds(nb) || !non_occupied(map.state(nb)) {
                continue;
            }
            let idx = map.index(nb);
            if dist[idx] == u32::MAX {
                dist[idx] = d + 1;
                queue.push_back(nb);
            }
        }
    }
    dist
}

/// Voxels of `map` that are unknown and fall inside the unit's footprint.
fn unit_scope_unknowns(map: &VoxelMap, part: &GridPartition, rec: &UnitRecord) -> Vec<usize> {
    let mut out = Vec::new();
    match &rec.descriptor {
        UnitDescriptor::WholeGrid(g) => {
            if (*g as usize) >= part.len() {
                return out;
            }
            let (lo, hi) = part.voxel_bounds(*g);
            for x in lo[0]..hi[0] {
                for y in lo[1]..hi[1] {
                    for z in lo[2]..hi[2] {
                        let c = Coord::new(x, y, z);
                        if map.state(c) == CellState::Unknown {
                            out.push(map.index(c));
                        }
                    }
                }
            }
        }
        UnitDescriptor::Hull { footprint } => {
            if footprint.is_empty() {
                return out;
            }
            let (mut lo_x, mut lo_y) = (Real::INFINITY, Real::INFINITY);
            let (mut hi_x, mut hi_y) = (Real::NEG_INFINITY, Real::NEG_INFINITY);
            for p in footprint {
                lo_x = lo_x.min(p.x);
                hi_x = hi_x.max(p.x);
                lo_y = lo_y.min(p.y);
                hi_y = hi_y.max(p.y);
            }
            let res = map.resolution();
            let origin = map.origin();
            let [nx, ny, nz] = map.dims();
            let eps = res * 1e-3;
            let ix = |v: Real, o: Real, n: usize| -> (i32, i32) {
                let a = (((v - o) / res).floor() as i32).clamp(0, n as i32 - 1);
                (a, n as i32)
            };
            let (x0, _) = ix(lo_x, origin.x, nx);
            let (x1, _) = ix(hi_x, origin.x, nx);
            let (y0, _) = ix(lo_y, origin.y, ny);
            let (y1, _) = ix(hi_y, origin.y, ny);
            for x in x0..=x1 {
                for y in y0..=y1 {
                    for z in 0..nz as i32 {
                        let c = Coord::new(x, y, z);
                        if map.state(c) != CellState::Unknown {
                            continue;
                        }
                        let center = map.voxel_center(c);
                        if center.z < rec.z_range.0 || center.z > rec.z_range.1 {
                            continue;
                        }
                        if point_in_hull(footprint, center.xy(), eps) {
                            out.push(map.index(c));
                        }
                    }
                }
            }
        }
    }
    out
}

/// Free frontier voxels face-adjacent to any of the given unknown voxels.
/// Rejects routes that cross voxels the map already marks as walls.
/// Long-range routing estimates gaps with straight connectors when detailed
/// search fails; those are fine as cost estimates but must never be driven,
/// or the agent clips on the wall and replans the same route forever.
fn route_is_executable(map: &VoxelMap, start: Point3, route: &[Point3]) -> bool {
    let step = map.resolution() * 0.5;
    let mut prev = start;
    for &wp in route {
        let dist = prev.distance(wp);
        let n = (dist / step).ceil().max(1.0) as usize;
        for k in 1..=n {
            let t = k as Real / n as Real;
            let p = prev + (wp - prev) * t;
            match map.voxel_at(p) {
                None => return false,
                Some(c) => {
                    if map.state(c) == CellState::Occupied {
                        return false;
                    }
                }
            }
        }
        prev = wp;
    }
    true
}

fn frontier_fringe(map: &VoxelMap, unknowns: &[usize]) -> Vec<usize> {
    let mut out = BTreeSet::new();
    for &u in unknowns {
        let c = map.coord(u);
        for (dx, dy, dz) in
            [(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)]
        {
            let nb = c.offset(dx, dy, dz);
            if !map.in_bounds(nb) {
                continue;
            }
            let idx = map.index(nb);
            if map.state(nb) == CellState::Free && map.is_frontier_idx(idx) {
                out.insert(idx);
            }
        }
    }
    out.into_iter().collect()
}

/// Nearest-neighbor chain over straight-line distances; the tour ordering
/// used when no structure exists to price real travel.
fn nn_order(from: Point3, items: &[(u64, Point3)]) -> Vec<u64> {
    let mut rest: Vec<(u64, Point3)> = items.to_vec();
    let mut cur = from;
    let mut out = Vec::with_capacity(rest.len());
    while !rest.is_empty() {
        let best = rest
            .iter()
            .enumerate()
            .min_by(|(_, (ia, pa)), (_, (ib, pb))| {
                cur.distance(*pa).total_cmp(&cur.distance(*pb)).then(ia.cmp(ib))
            })
            .map(|(i, _)| i)
            .unwrap();
        let (id, p) = rest.remove(best);
        out.push(id);
        cur = p;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{build_world, ScenarioConfig};

    fn tiny_world(mode: &str, seed: u64) -> World {
        let text = format!(
            r#"
            name = "tiny"
            seed = {seed}
            mode = "{mode}"
            tick_cap = 3000
            [map]
            generator = "open-plan"
            size = [12.0, 12.0, 1.5]
            [agents]
            count = 2
            r_comm = 6.0
            "#
        );
        build_world(ScenarioConfig::from_toml_str(&text).unwrap()).unwrap()
    }

    #[test]
    fn tiny_full_run_terminates_with_full_coverage() {
        let mut sim = Simulation::new(tiny_world("full", 3));
        let m = sim.run();
        assert!(m.complete, "hit the tick cap at coverage {}", m.coverage_final);
        assert!((m.coverage_final - 1.0).abs() < 1e-12);
        assert!(m.ticks > 1);
        assert!(m.allocation_rounds >= 1);
        assert!(m.rounds_finalized >= 1);
        assert!(m.total_path_m > 0.0);
        // metrics consistency
        let sum: Real = m.per_agent_path_m.iter().sum();
        assert!((sum - m.total_path_m).abs() < 1e-6);
        let v = m.total_path_m / (m.per_agent_path_m.len() as Real * m.exploration_time_s);
        assert!((v - m.mean_velocity_mps).abs() < 1e-6);
    }

    #[test]
    fn all_modes_terminate_on_the_tiny_world() {
        for mode in ["full", "no-con", "no-graph", "greedy"] {
            let mut sim = Simulation::new(tiny_world(mode, 5));
            let m = sim.run();
            assert!(m.complete, "{mode} hit the cap at coverage {}", m.coverage_final);
            assert!((m.coverage_final - 1.0).abs() < 1e-12, "{mode}");
            if mode == "greedy" {
                assert_eq!(m.messages_sent, 0);
                assert_eq!(m.allocation_rounds, 0);
            } else {
                assert!(m.allocation_rounds >= 1, "{mode}");
            }
        }
    }

    #[test]
    fn identical_seeds_give_byte_identical_outputs() {
        let run = |seed| {
            let mut sim = Simulation::new(tiny_world("full", seed));
            let m = sim.run();
            (sim.csv_text().to_string(), sim.trace_bytes().to_vec(), m.ticks)
        };
        let (csv_a, trace_a, ticks_a) = run(9);
        let (csv_b, trace_b, ticks_b) = run(9);
        assert_eq!(ticks_a, ticks_b);
        assert_eq!(csv_a, csv_b);
        assert_eq!(trace_a, trace_b);
        let (csv_c, _, _) = run(10);
        assert_ne!(csv_a, csv_c, "different seeds should explore differently");
    }

    #[test]
    fn mode_config_lines_differ_only_where_intended() {
        let line = |mode: &str| {
            let w = tiny_world(mode, 1);
            Knobs::for_mode(w.cfg.mode, w.cfg.alloc.lambda_c).config_line(&w.cfg)
        };
        let diff = |a: String, b: String| -> Vec<String> {
            a.split_whitespace()
                .zip(b.split_whitespace())
                .filter(|(x, y)| x != y)
                .map(|(x, _)| x.split('=').next().unwrap().to_string())
                .collect()
        };
        assert_eq!(diff(line("full"), line("no-con")), vec!["mode", "contiguity"]);
        assert_eq!(diff(line("full"), line("no-graph")), vec!["mode", "tasks", "cost"]);
    }

    #[test]
    fn bfs_steps_match_manhattan_in_open_space() {
        let mut map = VoxelMap::new(Point3::zero(), 1.0, [5, 5, 1]);
        for x in 0..5 {
            for y in 0..5 {
                map.set_state_raw(Coord::new(x, y, 0), CellState::Free);
            }
        }
        map.recompute_frontiers();
        let d = bfs_steps(&map, Coord::new(0, 0, 0));
        assert_eq!(d[map.index(Coord::new(4, 4, 0))], 8);
        assert_eq!(d[map.index(Coord::new(2, 1, 0))], 3);
    }

    #[test]
    fn seed_mixing_differs_across_each_argument() {
        let base = mix_seed(1, 2, 3);
        assert_ne!(base, mix_seed(2, 2, 3));
        assert_ne!(base, mix_seed(1, 3, 3));
        assert_ne!(base, mix_seed(1, 2, 4));
        assert_eq!(base, mix_seed(1, 2, 3));
    }

    #[test]
    #[ignore = "diagnostic probe"]
    fn debug_probe_endgame() {
        let toml = r#"
            name = "open-plan"
            seed = 11
            mode = "full"
            tick_cap = 20000
            [map]
            generator = "open-plan"
            size = [30.0, 30.0, 3.0]
            resolution = 0.5
            [agents]
            count = 4
            r_comm = 5.0
            [sensing]
            range = 5.0
        "#;
        let cfg = ScenarioConfig::from_toml_str(toml).unwrap();
        let world = crate::scenario::build_world(cfg).unwrap();
        let mut sim = Simulation::new(world);
        while sim.tick < 1300 && !sim.done {
            sim.step();
        }
        for _ in 0..150 {
            if sim.done {
                break;
            }
            sim.step();
            if sim.tick % 10 != 0 {
                continue;
            }
            eprintln!("--- tick {} cov {:.6}", sim.tick, sim.coverage());
            for a in &sim.agents {
                eprintln!(
                    "  a{} pos ({:5.1},{:5.1},{:4.1}) v {:.2} route {} tgt_unit {:?} tgt_cl {:?} vp {:?} blocked {} def_u {:?} def_c {} strikes {:?}",
                    a.state.id,
                    a.state.position.x, a.state.position.y, a.state.position.z,
                    a.state.velocity.norm(),
                    a.state.has_route(),
                    a.target_unit,
                    a.target_cluster,
                    a.target_viewpoint.map(|p| (p.x, p.y, p.z)),
                    a.blocked_ticks,
                    a.deferred_units,
                    a.deferred_clusters.len(),
                    a.strikes,
                );
            }
        }
        eprintln!("=== deep dump at tick {}", sim.tick);
        let slit = [(39, 13), (39, 14), (40, 13), (38, 13)];
        for a in &sim.agents {
            let states: Vec<String> = slit
                .iter()
                .map(|&(x, y)| {
                    (0..6)
                        .map(|z| match a.map.state(Coord::new(x, y, z)) {
                            CellState::Unknown => '?',
                            CellState::Free => '.',
                            CellState::Occupied => '#',
                        })
                        .collect()
                })
                .collect();
            eprintln!(
                "  a{} slit cols {:?} my_seq {:?} stamp {} frontiers {}",
                a.state.id,
                states,
                a.mirror.my_seq,
                a.mirror.stamp,
                a.map.frontier_count(),
            );
            for (uid, rec) in &a.mirror.records {
                eprintln!(
                    "    mirror unit {} status {:?} owner {:?} anchor ({:4.1},{:4.1},{:4.1})",
                    uid, rec.status, rec.owner, rec.anchor.x, rec.anchor.y, rec.anchor.z
                );
            }
        }
        eprintln!("  referee ledger:");
        for u in sim.referee.ledger.units() {
            eprintln!(
                "    unit {} status {:?} owner {:?} voxels {}",
                u.record.id,
                u.record.status,
                u.record.owner,
                u.voxels.len()
            );
        }
        eprintln!("  host ledgers:");
        for a in &sim.agents {
            let live: Vec<(u64, explore_core::tasks::TaskStatus, Option<AgentId>, usize)> = a
                .ledger
                .units()
                .map(|u| (u.record.id, u.record.status, u.record.owner, u.voxels.len()))
                .collect();
            eprintln!("    a{} rev {} units {:?}", a.state.id, a.ledger.revision(), live);
        }
    }
}
