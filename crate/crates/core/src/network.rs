//! Static road network: grid generation, approach adjacency and routing.
//!
//! A network is a set of nodes (signalized intersections plus fringe nodes
//! at the boundary) joined by directed segments. Every segment that ends at
//! an intersection is an approach for two movements of that intersection:
//! the through movement, served by the segment's through lanes, and the
//! left movement, served by a dedicated pocket at the downstream end.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;
pub const METERS_PER_MILE: f64 = 1609.344;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Heading {
    East,
    West,
    North,
    South,
}

impl Heading {
    pub fn left(self) -> Heading {
        match self {
            Heading::East => Heading::North,
            Heading::North => Heading::West,
            Heading::West => Heading::South,
            Heading::South => Heading::East,
        }
    }

    pub fn right(self) -> Heading {
        self.left().left().left()
    }

    pub fn opposite(self) -> Heading {
        self.left().left()
    }

    fn from_delta(dx: f64, dy: f64) -> Heading {
        if dx.abs() >= dy.abs() {
            if dx > 0.0 {
                Heading::East
            } else {
                Heading::West
            }
        } else if dy > 0.0 {
            Heading::North
        } else {
            Heading::South
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Turn {
    Through,
    Left,
    Right,
    UTurn,
}

impl Turn {
    pub fn between(incoming: Heading, outgoing: Heading) -> Turn {
        if incoming == outgoing {
            Turn::Through
        } else if incoming.left() == outgoing {
            Turn::Left
        } else if incoming.right() == outgoing {
            Turn::Right
        } else {
            Turn::UTurn
        }
    }
}

/// One of the eight controlled movements of a four-way intersection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Movement {
    Ebt,
    Wbt,
    Nbt,
    Sbt,
    Ebl,
    Wbl,
    Nbl,
    Sbl,
}

impl Movement {
    pub const ALL: [Movement; 8] = [
        Movement::Ebt,
        Movement::Wbt,
        Movement::Nbt,
        Movement::Sbt,
        Movement::Ebl,
        Movement::Wbl,
        Movement::Nbl,
        Movement::Sbl,
    ];

    pub const THROUGH: [Movement; 4] = [Movement::Ebt, Movement::Wbt, Movement::Nbt, Movement::Sbt];

    pub fn new(heading: Heading, left: bool) -> Movement {
        match (heading, left) {
            (Heading::East, false) => Movement::Ebt,
            (Heading::West, false) => Movement::Wbt,
            (Heading::North, false) => Movement::Nbt,
            (Heading::South, false) => Movement::Sbt,
            (Heading::East, true) => Movement::Ebl,
            (Heading::West, true) => Movement::Wbl,
            (Heading::North, true) => Movement::Nbl,
            (Heading::South, true) => Movement::Sbl,
        }
    }

    pub fn heading(self) -> Heading {
        match self {
            Movement::Ebt | Movement::Ebl => Heading::East,
            Movement::Wbt | Movement::Wbl => Heading::West,
            Movement::Nbt | Movement::Nbl => Heading::North,
            Movement::Sbt | Movement::Sbl => Heading::South,
        }
    }

    pub fn is_left(self) -> bool {
        matches!(self, Movement::Ebl | Movement::Wbl | Movement::Nbl | Movement::Sbl)
    }

    /// Position in [`Movement::ALL`], used to index per-movement arrays.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            Movement::Ebt => "EBT",
            Movement::Wbt => "WBT",
            Movement::Nbt => "NBT",
            Movement::Sbt => "SBT",
            Movement::Ebl => "EBL",
            Movement::Wbl => "WBL",
            Movement::Nbl => "NBL",
            Movement::Sbl => "SBL",
        }
    }
}

impl fmt::Display for Movement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

/// Opaque segment identifier; ordering of ids is the routing tie-break order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SegmentId(pub u32);

impl SegmentId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Intersection,
    Fringe,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub name: String,
    pub x: f64,
    pub y: f64,
    pub kind: NodeKind,
}

/// A directed road segment. When it ends at an intersection it carries the
/// through approach on `lane_count` lanes and a single-lane left pocket of
/// `pocket_length` meters at its downstream end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub name: String,
    pub from: NodeId,
    pub to: NodeId,
    pub length: f64,
    pub lane_count: u32,
    pub pocket_length: f64,
    pub free_flow_speed: f64,
    pub heading: Heading,
}

impl Segment {
    pub fn through_movement(&self) -> Movement {
        Movement::new(self.heading, false)
    }

    pub fn left_movement(&self) -> Movement {
        Movement::new(self.heading, true)
    }

    pub fn has_pocket(&self) -> bool {
        self.pocket_length > 0.0
    }

    pub fn pocket_start(&self) -> f64 {
        self.length - self.pocket_length
    }

    pub fn free_flow_time(&self) -> f64 {
        self.length / self.free_flow_speed
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Approach {
    pub movement: Movement,
    pub segment: SegmentId,
}

/// Ordered segments from an origin to a destination.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Route(pub Vec<SegmentId>);

impl Route {
    pub fn segments(&self) -> &[SegmentId] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    pub rows: u32,
    pub cols: u32,
    pub segment_length: f64,
    pub lane_count: u32,
    pub pocket_length: f64,
    pub free_flow_speed: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            rows: 3,
            cols: 3,
            segment_length: 500.0,
            lane_count: 2,
            pocket_length: 80.0,
            free_flow_speed: 13.89,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    nodes: Vec<Node>,
    segments: Vec<Segment>,
    subject: NodeId,
    incoming: Vec<Vec<SegmentId>>,
    outgoing: Vec<Vec<SegmentId>>,
    approaches: Vec<Vec<Approach>>,
    upstream: Vec<Option<SegmentId>>,
    names: BTreeMap<String, SegmentId>,
}

impl Network {
    /// Assembles a network from raw parts, deriving headings-based adjacency.
    pub fn from_parts(nodes: Vec<Node>, segments: Vec<Segment>, subject: NodeId) -> Result<Network> {
        if subject.0 as usize >= nodes.len() {
            return Err(Error::UnknownId(format!("node {}", subject.0)));
        }
        if nodes[subject.0 as usize].kind != NodeKind::Intersection {
            return Err(Error::Schema("subject node is not an intersection".into()));
        }
        let mut names = BTreeMap::new();
        for (i, seg) in segments.iter().enumerate() {
            validate_segment(seg, nodes.len())?;
            if names.insert(seg.name.clone(), SegmentId(i as u32)).is_some() {
                return Err(Error::Schema(format!("duplicate segment id {}", seg.name)));
            }
        }

        let mut incoming = vec![Vec::new(); nodes.len()];
        let mut outgoing = vec![Vec::new(); nodes.len()];
        for (i, seg) in segments.iter().enumerate() {
            incoming[seg.to.0 as usize].push(SegmentId(i as u32));
            outgoing[seg.from.0 as usize].push(SegmentId(i as u32));
        }

        let mut approaches = vec![Vec::new(); nodes.len()];
        for (n, node) in nodes.iter().enumerate() {
            if node.kind != NodeKind::Intersection {
                continue;
            }
            let mut seen = [false; 4];
            for &s in &incoming[n] {
                let seg = &segments[s.index()];
                let slot = seg.heading as usize;
                if seen[slot] {
                    return Err(Error::Schema(format!(
                        "intersection {} has two {:?} approaches",
                        node.name, seg.heading
                    )));
                }
                seen[slot] = true;
                if !seg.has_pocket() {
                    return Err(Error::Schema(format!(
                        "approach {} into intersection {} has no left-turn pocket",
                        seg.name, node.name
                    )));
                }
                approaches[n].push(Approach { movement: seg.through_movement(), segment: s });
                approaches[n].push(Approach { movement: seg.left_movement(), segment: s });
            }
            approaches[n].sort_by_key(|a| a.movement);
        }
        if approaches[subject.0 as usize].len() != 8 {
            return Err(Error::Schema("subject intersection must have all 8 approaches".into()));
        }

        let upstream = segments
            .iter()
            .map(|seg| {
                if nodes[seg.from.0 as usize].kind != NodeKind::Intersection {
                    return None;
                }
                incoming[seg.from.0 as usize]
                    .iter()
                    .copied()
                    .find(|&s| segments[s.index()].heading == seg.heading)
            })
            .collect();

        Ok(Network { nodes, segments, subject, incoming, outgoing, approaches, upstream, names })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.0 as usize]
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn segment(&self, id: SegmentId) -> &Segment {
        &self.segments[id.index()]
    }

    pub fn segment_ids(&self) -> impl Iterator<Item = SegmentId> + '_ {
        (0..self.segments.len() as u32).map(SegmentId)
    }

    pub fn segment_by_name(&self, name: &str) -> Result<SegmentId> {
        self.names.get(name).copied().ok_or_else(|| Error::UnknownId(name.to_string()))
    }

    pub fn node_by_name(&self, name: &str) -> Result<NodeId> {
        self.nodes
            .iter()
            .position(|n| n.name == name)
            .map(|i| NodeId(i as u32))
            .ok_or_else(|| Error::UnknownId(name.to_string()))
    }

    pub fn subject_intersection(&self) -> NodeId {
        self.subject
    }

    pub fn set_subject_intersection(&mut self, node: NodeId) -> Result<()> {
        let n = node.0 as usize;
        if n >= self.nodes.len() {
            return Err(Error::UnknownId(format!("node {}", node.0)));
        }
        if self.approaches[n].len() != 8 {
            return Err(Error::Schema("subject intersection must have all 8 approaches".into()));
        }
        self.subject = node;
        Ok(())
    }

    pub fn intersections(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.kind == NodeKind::Intersection)
            .map(|(i, _)| NodeId(i as u32))
    }

    pub fn approaches(&self, node: NodeId) -> &[Approach] {
        &self.approaches[node.0 as usize]
    }

    /// The approach segment serving `movement` at `node`, if present.
    pub fn approach_segment(&self, node: NodeId, movement: Movement) -> Option<SegmentId> {
        self.approaches(node).iter().find(|a| a.movement == movement).map(|a| a.segment)
    }

    pub fn incoming(&self, node: NodeId) -> &[SegmentId] {
        &self.incoming[node.0 as usize]
    }

    pub fn outgoing(&self, node: NodeId) -> &[SegmentId] {
        &self.outgoing[node.0 as usize]
    }

    pub fn is_intersection(&self, node: NodeId) -> bool {
        self.node(node).kind == NodeKind::Intersection
    }

    pub fn is_entry(&self, seg: SegmentId) -> bool {
        !self.is_intersection(self.segment(seg).from)
    }

    pub fn is_exit(&self, seg: SegmentId) -> bool {
        !self.is_intersection(self.segment(seg).to)
    }

    pub fn is_peripheral(&self, seg: SegmentId) -> bool {
        self.is_entry(seg) || self.is_exit(seg)
    }

    fn check(&self, seg: SegmentId) -> Result<()> {
        if seg.index() < self.segments.len() {
            Ok(())
        } else {
            Err(Error::UnknownId(format!("segment {}", seg.0)))
        }
    }

    /// Approach feeding the same direction of travel into `approach`'s
    /// upstream intersection; `None` for segments entering from the fringe.
    pub fn upstream_approach(&self, approach: SegmentId) -> Result<Option<SegmentId>> {
        self.check(approach)?;
        Ok(self.upstream[approach.index()])
    }

    /// Segments a vehicle may continue onto after `seg` (no U-turns, no
    /// continuation past fringe nodes).
    pub fn successors(&self, seg: SegmentId) -> impl Iterator<Item = SegmentId> + '_ {
        let s = self.segment(seg);
        let via = s.to;
        let heading = s.heading;
        let from = s.from;
        let open = self.is_intersection(via);
        self.outgoing(via).iter().copied().filter(move |&t| {
            let next = self.segment(t);
            open && next.to != from && Turn::between(heading, next.heading) != Turn::UTurn
        })
    }

    /// Turn a vehicle makes when moving from `seg` onto `next`.
    pub fn turn(&self, seg: SegmentId, next: SegmentId) -> Turn {
        Turn::between(self.segment(seg).heading, self.segment(next).heading)
    }

    /// Minimum-length route between two peripheral segments. Equal-length
    /// candidates are ordered by their segment id sequence.
    pub fn shortest_path(&self, origin: SegmentId, destination: SegmentId) -> Result<Route> {
        self.check(origin)?;
        self.check(destination)?;
        for s in [origin, destination] {
            if !self.is_peripheral(s) {
                return Err(Error::NotPeripheral(self.segment(s).name.clone()));
            }
        }
        self.path_between(origin, destination)
    }

    /// Shortest route forced through the given waypoint segments in order.
    pub fn route_via(&self, origin: SegmentId, via: &[SegmentId], destination: SegmentId) -> Result<Route> {
        if via.is_empty() {
            return self.shortest_path(origin, destination);
        }
        self.check(origin)?;
        self.check(destination)?;
        for s in [origin, destination] {
            if !self.is_peripheral(s) {
                return Err(Error::NotPeripheral(self.segment(s).name.clone()));
            }
        }
        let mut stops = vec![origin];
        for &v in via {
            self.check(v)?;
            stops.push(v);
        }
        stops.push(destination);
        let mut out: Vec<SegmentId> = vec![origin];
        for pair in stops.windows(2) {
            let leg = self.path_between(pair[0], pair[1])?;
            out.extend_from_slice(&leg.0[1..]);
        }
        let mut seen = std::collections::BTreeSet::new();
        if !out.iter().all(|s| seen.insert(*s)) {
            return Err(Error::Argument("waypoints force a looping route".into()));
        }
        Ok(Route(out))
    }

    fn path_between(&self, origin: SegmentId, destination: SegmentId) -> Result<Route> {
        // Label-setting search over segments, ordering labels by
        // (distance, id sequence). Lengths are positive, so the lexicographic
        // minimum is preserved under prefix extension.
        const EPS: f64 = 1e-9;
        let n = self.segments.len();
        let mut best: Vec<Option<(f64, Vec<SegmentId>)>> = vec![None; n];
        let mut done = vec![false; n];
        best[origin.index()] = Some((self.segment(origin).length, vec![origin]));

        loop {
            let mut pick: Option<usize> = None;
            for i in 0..n {
                if done[i] {
                    continue;
                }
                let Some((d, p)) = &best[i] else { continue };
                let better = match pick {
                    None => true,
                    Some(j) => {
                        let (dj, pj) = best[j].as_ref().unwrap();
                        *d < dj - EPS || ((d - dj).abs() <= EPS && p < pj)
                    }
                };
                if better {
                    pick = Some(i);
                }
            }
            let Some(u) = pick else { break };
            done[u] = true;
            if u == destination.index() {
                break;
            }
            let (du, pu) = best[u].clone().unwrap();
            for v in self.successors(SegmentId(u as u32)) {
                if done[v.index()] || pu.contains(&v) {
                    continue;
                }
                let dv = du + self.segment(v).length;
                let mut pv = pu.clone();
                pv.push(v);
                let improve = match &best[v.index()] {
                    None => true,
                    Some((d, p)) => dv < d - EPS || ((dv - d).abs() <= EPS && pv < *p),
                };
                if improve {
                    best[v.index()] = Some((dv, pv));
                }
            }
        }

        match &best[destination.index()] {
            Some((_, p)) if done[destination.index()] => Ok(Route(p.clone())),
            _ => Err(Error::NoPath {
                from: self.segment(origin).name.clone(),
                to: self.segment(destination).name.clone(),
            }),
        }
    }

    pub fn route_length(&self, route: &Route) -> f64 {
        route.0.iter().map(|&s| self.segment(s).length).sum()
    }

    /// Checks that consecutive route segments are connected and no segment repeats.
    pub fn validate_route(&self, route: &Route) -> Result<()> {
        if route.is_empty() {
            return Err(Error::Argument("empty route".into()));
        }
        for &s in &route.0 {
            self.check(s)?;
        }
        for w in route.0.windows(2) {
            if !self.successors(w[0]).any(|s| s == w[1]) {
                return Err(Error::Argument(format!(
                    "route segments {} and {} are not connected",
                    self.segment(w[0]).name,
                    self.segment(w[1]).name
                )));
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        if !route.0.iter().all(|s| seen.insert(*s)) {
            return Err(Error::Argument("route visits a segment twice".into()));
        }
        Ok(())
    }

    /// Entry segment from the fringe into the boundary intersection
    /// (`row`, `col`) travelling with `heading`. Only meaningful for grids.
    pub fn grid_entry(&self, row: u32, col: u32, heading: Heading) -> Result<SegmentId> {
        let node = self.node_by_name(&grid_node_name(row, col))?;
        self.incoming(node)
            .iter()
            .copied()
            .find(|&s| self.is_entry(s) && self.segment(s).heading == heading)
            .ok_or_else(|| Error::UnknownId(format!("entry {heading:?} into {}", grid_node_name(row, col))))
    }

    /// Exit segment from the boundary intersection (`row`, `col`) to the fringe.
    pub fn grid_exit(&self, row: u32, col: u32, heading: Heading) -> Result<SegmentId> {
        let node = self.node_by_name(&grid_node_name(row, col))?;
        self.outgoing(node)
            .iter()
            .copied()
            .find(|&s| self.is_exit(s) && self.segment(s).heading == heading)
            .ok_or_else(|| Error::UnknownId(format!("exit {heading:?} from {}", grid_node_name(row, col))))
    }

    pub fn to_document(&self) -> NetworkDocument {
        NetworkDocument {
            schema_version: SCHEMA_VERSION,
            subject_intersection: self.node(self.subject).name.clone(),
            nodes: self
                .nodes
                .iter()
                .map(|n| NodeRecord { id: n.name.clone(), x: n.x, y: n.y, kind: n.kind })
                .collect(),
            segments: self
                .segments
                .iter()
                .map(|s| SegmentRecord {
                    id: s.name.clone(),
                    from: self.node(s.from).name.clone(),
                    to: self.node(s.to).name.clone(),
                    length: s.length,
                    lane_count: s.lane_count,
                    pocket_length: s.pocket_length,
                    free_flow_speed: s.free_flow_speed,
                })
                .collect(),
            adjacency: self
                .intersections()
                .map(|n| AdjacencyRecord {
                    intersection: self.node(n).name.clone(),
                    approaches: self
                        .approaches(n)
                        .iter()
                        .map(|a| ApproachRecord {
                            movement: a.movement,
                            segment: self.segment(a.segment).name.clone(),
                            upstream: self.upstream[a.segment.index()]
                                .map(|u| self.segment(u).name.clone()),
                        })
                        .collect(),
                })
                .collect(),
        }
    }

    pub fn from_document(doc: &NetworkDocument) -> Result<Network> {
        if doc.schema_version != SCHEMA_VERSION {
            return Err(Error::SchemaVersion { found: doc.schema_version, expected: SCHEMA_VERSION });
        }
        let mut node_ix = BTreeMap::new();
        let nodes: Vec<Node> = doc
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| {
                node_ix.insert(n.id.clone(), NodeId(i as u32));
                Node { name: n.id.clone(), x: n.x, y: n.y, kind: n.kind }
            })
            .collect();
        if node_ix.len() != nodes.len() {
            return Err(Error::Schema("duplicate node id".into()));
        }
        let lookup = |name: &str| {
            node_ix.get(name).copied().ok_or_else(|| Error::Schema(format!("unknown node {name}")))
        };
        let mut segments = Vec::with_capacity(doc.segments.len());
        for s in &doc.segments {
            let from = lookup(&s.from)?;
            let to = lookup(&s.to)?;
            let (a, b) = (&nodes[from.0 as usize], &nodes[to.0 as usize]);
            segments.push(Segment {
                name: s.id.clone(),
                from,
                to,
                length: s.length,
                lane_count: s.lane_count,
                pocket_length: s.pocket_length,
                free_flow_speed: s.free_flow_speed,
                heading: Heading::from_delta(b.x - a.x, b.y - a.y),
            });
        }
        let net = Network::from_parts(nodes, segments, lookup(&doc.subject_intersection)?)?;
        if !doc.adjacency.is_empty() && net.to_document().adjacency != doc.adjacency {
            return Err(Error::Schema("adjacency does not match segment geometry".into()));
        }
        Ok(net)
    }

    pub fn load(path: &Path) -> Result<Network> {
        let text = std::fs::read_to_string(path)?;
        let doc: NetworkDocument = serde_json::from_str(&text)?;
        Network::from_document(&doc)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(&self.to_document())?)?;
        Ok(())
    }
}

fn validate_segment(seg: &Segment, node_count: usize) -> Result<()> {
    if seg.from.0 as usize >= node_count || seg.to.0 as usize >= node_count {
        return Err(Error::Schema(format!("segment {} references unknown node", seg.name)));
    }
    if !(seg.length > 0.0) || seg.lane_count == 0 || !(seg.free_flow_speed > 0.0) {
        return Err(Error::InvalidDimension(format!("segment {} geometry", seg.name)));
    }
    if !(seg.pocket_length >= 0.0 && seg.pocket_length < seg.length) {
        return Err(Error::InvalidDimension(format!(
            "segment {} pocket {} must be in [0, {})",
            seg.name, seg.pocket_length, seg.length
        )));
    }
    Ok(())
}

pub fn grid_node_name(row: u32, col: u32) -> String {
    format!("n{row}_{col}")
}

/// Builds a `rows` x `cols` grid of four-way intersections. Every boundary
/// intersection gets an entry and an exit segment to a fringe node on each
/// open side, so all intersections have eight approaches. Row 0 is the
/// northernmost row; the subject defaults to the center intersection.
pub fn build_grid(spec: &GridSpec) -> Result<Network> {
    let GridSpec { rows, cols, segment_length, lane_count, pocket_length, free_flow_speed } = *spec;
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidDimension("rows and cols must be positive".into()));
    }
    if !(segment_length > 0.0) || lane_count == 0 || !(free_flow_speed > 0.0) || !(pocket_length > 0.0) {
        return Err(Error::InvalidDimension("grid parameters must be positive".into()));
    }
    if pocket_length >= segment_length {
        return Err(Error::InvalidDimension(format!(
            "pocket length {pocket_length} must be shorter than segment length {segment_length}"
        )));
    }

    let l = segment_length;
    let mut nodes = Vec::new();
    let mut index = BTreeMap::new();
    let mut add = |nodes: &mut Vec<Node>, name: String, x: f64, y: f64, kind: NodeKind| {
        index.insert(name.clone(), NodeId(nodes.len() as u32));
        nodes.push(Node { name, x, y, kind });
    };
    for r in 0..rows {
        for c in 0..cols {
            add(&mut nodes, grid_node_name(r, c), c as f64 * l, -(r as f64) * l, NodeKind::Intersection);
        }
    }
    for c in 0..cols {
        add(&mut nodes, format!("fn{c}"), c as f64 * l, l, NodeKind::Fringe);
        add(&mut nodes, format!("fs{c}"), c as f64 * l, -(rows as f64) * l, NodeKind::Fringe);
    }
    for r in 0..rows {
        add(&mut nodes, format!("fw{r}"), -l, -(r as f64) * l, NodeKind::Fringe);
        add(&mut nodes, format!("fe{r}"), cols as f64 * l, -(r as f64) * l, NodeKind::Fringe);
    }

    let mut pairs: Vec<(String, String)> = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            let me = grid_node_name(r, c);
            let north = if r == 0 { format!("fn{c}") } else { grid_node_name(r - 1, c) };
            let south = if r + 1 == rows { format!("fs{c}") } else { grid_node_name(r + 1, c) };
            let west = if c == 0 { format!("fw{r}") } else { grid_node_name(r, c - 1) };
            let east = if c + 1 == cols { format!("fe{r}") } else { grid_node_name(r, c + 1) };
            for other in [north, east, south, west] {
                let fringe = !other.starts_with('n');
                pairs.push((other.clone(), me.clone()));
                if fringe {
                    pairs.push((me.clone(), other));
                }
            }
        }
    }
    pairs.sort();
    pairs.dedup();

    let segments = pairs
        .into_iter()
        .map(|(from, to)| {
            let (f, t) = (index[&from], index[&to]);
            let (a, b) = (&nodes[f.0 as usize], &nodes[t.0 as usize]);
            let into_intersection = b.kind == NodeKind::Intersection;
            Segment {
                name: format!("{from}-{to}"),
                from: f,
                to: t,
                length: l,
                lane_count,
                pocket_length: if into_intersection { pocket_length } else { 0.0 },
                free_flow_speed,
                heading: Heading::from_delta(b.x - a.x, b.y - a.y),
            }
        })
        .collect();

    let subject = index[&grid_node_name(rows / 2, cols / 2)];
    Network::from_parts(nodes, segments, subject)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkDocument {
    pub schema_version: u32,
    pub subject_intersection: String,
    pub nodes: Vec<NodeRecord>,
    pub segments: Vec<SegmentRecord>,
    #[serde(default)]
    pub adjacency: Vec<AdjacencyRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: String,
    pub x: f64,
    pub y: f64,
    pub kind: NodeKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRecord {
    pub id: String,
    pub from: String,
    pub to: String,
    pub length: f64,
    pub lane_count: u32,
    pub pocket_length: f64,
    pub free_flow_speed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjacencyRecord {
    pub intersection: String,
    pub approaches: Vec<ApproachRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApproachRecord {
    pub movement: Movement,
    pub segment: String,
    pub upstream: Option<String>,
}
