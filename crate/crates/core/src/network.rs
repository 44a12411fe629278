//! Network scenarios: anchors, sensors, triangulation sets and the
//! barycentric system matrices `F` (sensor-to-anchor) and `H`
//! (sensor-to-sensor).

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    self, barycentric_from_distances, distance, is_in_convex_hull, GeometryError,
    NeighborDistances, Point2, TriangleDistances, EPS_AREA,
};

/// Number of anchors; ids `1..=3`.
pub const ANCHOR_COUNT: usize = 3;
/// Tolerance on row sums of `[F H]`.
pub const ROW_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn is_anchor(self) -> bool {
        (1..=ANCHOR_COUNT as u32).contains(&self.0)
    }

    /// Row/column index of a sensor in `H` (sensor `4` is index `0`).
    pub fn sensor_index(self) -> Option<usize> {
        (self.0 > ANCHOR_COUNT as u32).then(|| (self.0 as usize) - ANCHOR_COUNT - 1)
    }

    pub fn from_sensor_index(index: usize) -> Self {
        NodeId((index + ANCHOR_COUNT + 1) as u32)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    #[serde(flatten)]
    pub position: Point2,
}

impl Node {
    pub fn new(id: u32, x: f64, y: f64) -> Self {
        Self { id: NodeId(id), position: Point2::new(x, y) }
    }
}

/// Triangulation set `N_i` of each sensor.
pub type Triangulation = BTreeMap<NodeId, [NodeId; 3]>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetworkError {
    #[error("anchor ids must be exactly 1, 2, 3 (got {0:?})")]
    BadAnchorIds(Vec<u32>),
    #[error("sensor ids must be exactly 4..={expected_max} without gaps or duplicates (got {got:?})")]
    BadSensorIds { expected_max: usize, got: Vec<u32> },
    #[error("at least one sensor is required")]
    NoSensors,
    #[error("node {0} has a non-finite coordinate")]
    NonFiniteCoordinate(NodeId),
    #[error("anchors are collinear")]
    CollinearAnchors,
    #[error("sensor {0} lies outside the anchors' convex hull")]
    OutsideAnchorHull(NodeId),
    #[error("gamma = {0} must lie in (0, 1) (1 allowed only with the unit-gain override)")]
    InvalidGamma(f64),
    #[error("unknown sensor {0}")]
    UnknownSensor(NodeId),
    #[error("invalid triangulation set for sensor {sensor}: {reason}")]
    InvalidTriangulation { sensor: NodeId, reason: String },
    #[error("sensor {0} has no triangulation set")]
    MissingTriangulation(NodeId),
    #[error("radius search parameters must be positive (initial {initial}, increment {increment})")]
    InvalidRadius { initial: f64, increment: f64 },
    #[error("no triangulation set found for sensor {0} within the network diameter")]
    NoTriangulationFound(NodeId),
    #[error("sensor {0} has no directed path from any anchor")]
    UnreachableSensor(NodeId),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ValidationOptions {
    /// Accept `gamma == 1` (classic DILOC replication).
    pub allow_unit_gamma: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkScenario {
    anchors: [Node; ANCHOR_COUNT],
    sensors: Vec<Node>,
    triangulation: Triangulation,
    gamma: f64,
    initial: BTreeMap<NodeId, Point2>,
}

impl NetworkScenario {
    /// Validates ids, anchor geometry, the anchor-hull assumption, gamma and
    /// any triangulation sets supplied. Sets may cover only some sensors; the
    /// rest can be filled by [`NetworkScenario::discover_triangulation`].
    pub fn new(
        anchors: Vec<Node>,
        mut sensors: Vec<Node>,
        triangulation: Triangulation,
        gamma: f64,
        options: ValidationOptions,
    ) -> Result<Self, NetworkError> {
        let mut anchor_ids: Vec<u32> = anchors.iter().map(|a| a.id.0).collect();
        anchor_ids.sort_unstable();
        if anchor_ids != [1, 2, 3] {
            return Err(NetworkError::BadAnchorIds(anchor_ids));
        }
        let mut anchors = anchors;
        anchors.sort_by_key(|a| a.id);
        let anchors: [Node; ANCHOR_COUNT] = [anchors[0], anchors[1], anchors[2]];

        if sensors.is_empty() {
            return Err(NetworkError::NoSensors);
        }
        sensors.sort_by_key(|s| s.id);
        let expected_max = ANCHOR_COUNT + sensors.len();
        if sensors.iter().enumerate().any(|(k, s)| s.id != NodeId::from_sensor_index(k)) {
            return Err(NetworkError::BadSensorIds {
                expected_max,
                got: sensors.iter().map(|s| s.id.0).collect(),
            });
        }
        for node in anchors.iter().chain(&sensors) {
            if !node.position.is_finite() {
                return Err(NetworkError::NonFiniteCoordinate(node.id));
            }
        }

        let [a, b, c] = anchors.map(|n| n.position);
        let anchor_sides = TriangleDistances::new(distance(a, b), distance(b, c), distance(c, a))
            .map_err(|_| NetworkError::CollinearAnchors)?;
        let area = geometry::triangle_area_from_distances(&anchor_sides)?;
        if area * area <= EPS_AREA {
            return Err(NetworkError::CollinearAnchors);
        }
        for s in &sensors {
            if !is_in_convex_hull(&NeighborDistances::from_points(s.position, [a, b, c]))? {
                return Err(NetworkError::OutsideAnchorHull(s.id));
            }
        }

        let unit_ok = options.allow_unit_gamma && gamma == 1.0;
        if !(gamma > 0.0 && gamma < 1.0) && !unit_ok {
            return Err(NetworkError::InvalidGamma(gamma));
        }

        let scenario = Self { anchors, sensors, triangulation, gamma, initial: BTreeMap::new() };
        for (&sensor, &set) in &scenario.triangulation {
            scenario.check_triangulation_set(sensor, set)?;
        }
        Ok(scenario)
    }

    /// Seeded random scenario with `sensor_count` sensors strictly inside a
    /// random anchor triangle and discovered triangulation sets.
    pub fn random(seed: u64, sensor_count: usize, gamma: f64) -> Result<Self, NetworkError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let anchors = loop {
            let pts: Vec<Point2> = (0..3)
                .map(|_| Point2::new(rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0)))
                .collect();
            let doubled = ((pts[1].x - pts[0].x) * (pts[2].y - pts[0].y)
                - (pts[2].x - pts[0].x) * (pts[1].y - pts[0].y))
                .abs();
            let longest = (0..3).map(|k| distance(pts[k], pts[(k + 1) % 3])).fold(0.0, f64::max);
            // reject slivers: area relative to the longest side squared
            if doubled / (longest * longest) > 0.25 {
                break pts;
            }
        };
        let sensors = (0..sensor_count)
            .map(|k| {
                let w = loop {
                    let (u, v): (f64, f64) = (rng.gen(), rng.gen());
                    let (lo, hi) = if u < v { (u, v) } else { (v, u) };
                    let w = [lo, hi - lo, 1.0 - hi];
                    if w.iter().all(|&x| x > 0.02) {
                        break w;
                    }
                };
                let p = w[0] * anchors[0] + w[1] * anchors[1] + w[2] * anchors[2];
                Node { id: NodeId::from_sensor_index(k), position: p }
            })
            .collect();
        let anchors = (0..3)
            .map(|k| Node { id: NodeId(k as u32 + 1), position: anchors[k] })
            .collect();
        let mut scenario = Self::new(
            anchors,
            sensors,
            Triangulation::new(),
            gamma,
            ValidationOptions::default(),
        )?;
        scenario.discover_triangulation()?;
        Ok(scenario)
    }

    pub fn anchors(&self) -> &[Node; ANCHOR_COUNT] {
        &self.anchors
    }

    pub fn anchor_positions(&self) -> [Point2; ANCHOR_COUNT] {
        self.anchors.map(|a| a.position)
    }

    pub fn sensors(&self) -> &[Node] {
        &self.sensors
    }

    pub fn sensor_count(&self) -> usize {
        self.sensors.len()
    }

    pub fn node_count(&self) -> usize {
        ANCHOR_COUNT + self.sensors.len()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn set_gamma(&mut self, gamma: f64, options: ValidationOptions) -> Result<(), NetworkError> {
        let unit_ok = options.allow_unit_gamma && gamma == 1.0;
        if !(gamma > 0.0 && gamma < 1.0) && !unit_ok {
            return Err(NetworkError::InvalidGamma(gamma));
        }
        self.gamma = gamma;
        Ok(())
    }

    pub fn triangulation(&self) -> &Triangulation {
        &self.triangulation
    }

    pub fn initial_estimates(&self) -> &BTreeMap<NodeId, Point2> {
        &self.initial
    }

    pub fn set_initial_estimates(
        &mut self,
        initial: BTreeMap<NodeId, Point2>,
    ) -> Result<(), NetworkError> {
        for (&id, p) in &initial {
            if id.sensor_index().is_none_or(|k| k >= self.sensors.len()) {
                return Err(NetworkError::UnknownSensor(id));
            }
            if !p.is_finite() {
                return Err(NetworkError::NonFiniteCoordinate(id));
            }
        }
        self.initial = initial;
        Ok(())
    }

    pub fn position(&self, id: NodeId) -> Option<Point2> {
        if id.is_anchor() {
            return Some(self.anchors[id.0 as usize - 1].position);
        }
        id.sensor_index().and_then(|k| self.sensors.get(k)).map(|s| s.position)
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.position(id).is_some()
    }

    fn sensor_position(&self, id: NodeId) -> Result<Point2, NetworkError> {
        if id.is_anchor() {
            return Err(NetworkError::UnknownSensor(id));
        }
        self.position(id).ok_or(NetworkError::UnknownSensor(id))
    }

    fn check_triangulation_set(&self, sensor: NodeId, set: [NodeId; 3]) -> Result<(), NetworkError> {
        let invalid = |reason: String| NetworkError::InvalidTriangulation { sensor, reason };
        let p = self.sensor_position(sensor)?;
        let distinct: BTreeSet<NodeId> = set.iter().copied().collect();
        if distinct.len() != 3 {
            return Err(invalid(format!("members {set:?} are not distinct")));
        }
        if distinct.contains(&sensor) {
            return Err(invalid("set contains the sensor itself".into()));
        }
        let mut pts = [Point2::default(); 3];
        for (slot, id) in pts.iter_mut().zip(set) {
            *slot = self.position(id).ok_or_else(|| invalid(format!("unknown node {id}")))?;
        }
        match is_in_convex_hull(&NeighborDistances::from_points(p, pts)) {
            Ok(true) => Ok(()),
            Ok(false) => Err(invalid("sensor is outside the convex hull of the set".into())),
            Err(e) => Err(invalid(e.to_string())),
        }
    }

    /// Largest pairwise distance between nodes.
    pub fn diameter(&self) -> f64 {
        let pts: Vec<Point2> = self.anchors.iter().chain(&self.sensors).map(|n| n.position).collect();
        let mut best = 0.0f64;
        for (k, &p) in pts.iter().enumerate() {
            for &q in &pts[k + 1..] {
                best = best.max(distance(p, q));
            }
        }
        best
    }

    /// `(initial_radius, increment)`: 1.1 times the distance to the third
    /// nearest node, stepping by 10% of that.
    pub fn default_radius_schedule(&self, sensor: NodeId) -> Result<(f64, f64), NetworkError> {
        let p = self.sensor_position(sensor)?;
        let mut d: Vec<f64> = self
            .anchors
            .iter()
            .chain(&self.sensors)
            .filter(|n| n.id != sensor)
            .map(|n| distance(p, n.position))
            .collect();
        d.sort_by(f64::total_cmp);
        let initial = 1.1 * d[2];
        Ok((initial, 0.1 * initial))
    }

    /// Fills in triangulation sets for every sensor that has none, using the
    /// default radius schedule.
    pub fn discover_triangulation(&mut self) -> Result<(), NetworkError> {
        for s in 0..self.sensors.len() {
            let id = NodeId::from_sensor_index(s);
            if self.triangulation.contains_key(&id) {
                continue;
            }
            let (initial, increment) = self.default_radius_schedule(id)?;
            let set = find_triangulation_set(self, id, initial, increment)?;
            self.triangulation.insert(id, set);
        }
        Ok(())
    }

    fn require_full_triangulation(&self) -> Result<(), NetworkError> {
        match (0..self.sensors.len())
            .map(NodeId::from_sensor_index)
            .find(|id| !self.triangulation.contains_key(id))
        {
            Some(missing) => Err(NetworkError::MissingTriangulation(missing)),
            None => Ok(()),
        }
    }
}

/// Adaptive-radius search for a triangulation set.
///
/// Neighbors within the radius are ordered by `(distance, id)` and 3-subsets
/// are tried in lexicographic order of that ordering; the radius grows by
/// `radius_increment` until a subset's convex hull contains the sensor or the
/// radius passes the network diameter.
pub fn find_triangulation_set(
    scenario: &NetworkScenario,
    sensor: NodeId,
    initial_radius: f64,
    radius_increment: f64,
) -> Result<[NodeId; 3], NetworkError> {
    // NaN must fail as well, hence the negated comparisons
    if !(initial_radius > 0.0 && radius_increment > 0.0) {
        return Err(NetworkError::InvalidRadius {
            initial: initial_radius,
            increment: radius_increment,
        });
    }
    let p = scenario.sensor_position(sensor)?;
    let mut candidates: Vec<(f64, NodeId, Point2)> = scenario
        .anchors
        .iter()
        .chain(&scenario.sensors)
        .filter(|n| n.id != sensor)
        .map(|n| (distance(p, n.position), n.id, n.position))
        .collect();
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let diameter = scenario.diameter();
    let mut radius = initial_radius;
    let mut tested = 0usize;
    loop {
        let within = candidates.partition_point(|c| c.0 < radius);
        // triples drawn only from the first `tested` candidates already failed
        for c in tested.max(2)..within {
            for a in 0..c {
                for b in a + 1..c {
                    let pts = [candidates[a].2, candidates[b].2, candidates[c].2];
                    if let Ok(true) = is_in_convex_hull(&NeighborDistances::from_points(p, pts)) {
                        return Ok([candidates[a].1, candidates[b].1, candidates[c].1]);
                    }
                }
            }
        }
        tested = within;
        if radius > diameter {
            return Err(NetworkError::NoTriangulationFound(sensor));
        }
        radius += radius_increment;
    }
}

/// One row of `[F H]`: a sensor's neighbors and barycentric weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorRow {
    pub id: NodeId,
    pub neighbors: [(NodeId, f64); 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemMatrices {
    /// `(n-3) x 3` sensor-to-anchor weights.
    pub f: DMatrix<f64>,
    /// `(n-3) x (n-3)` sensor-to-sensor weights.
    pub h: DMatrix<f64>,
    rows: Vec<SensorRow>,
}

impl SystemMatrices {
    pub fn sensor_count(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[SensorRow] {
        &self.rows
    }

    pub fn row(&self, sensor: NodeId) -> Option<&SensorRow> {
        sensor.sensor_index().and_then(|k| self.rows.get(k))
    }

    pub fn triangulation(&self) -> Triangulation {
        self.rows.iter().map(|r| (r.id, r.neighbors.map(|(n, _)| n))).collect()
    }

    /// Hop distance from the anchor set along arcs `r -> i` with positive
    /// weight; `None` for unreachable sensors.
    pub fn anchor_hops(&self) -> Vec<Option<usize>> {
        hop_distances(self.rows.iter().map(|r| {
            r.neighbors.iter().filter(|(_, w)| *w > 0.0).map(|&(n, _)| n).collect::<Vec<_>>()
        }))
    }
}

/// BFS from the merged anchor super-source. `in_neighbors[k]` lists the
/// nodes with an arc into sensor `k`.
fn hop_distances<I, N>(in_neighbors: I) -> Vec<Option<usize>>
where
    I: IntoIterator<Item = N>,
    N: IntoIterator<Item = NodeId>,
{
    let inn: Vec<Vec<NodeId>> = in_neighbors.into_iter().map(|n| n.into_iter().collect()).collect();
    let m = inn.len();
    let mut out: Vec<Vec<usize>> = vec![Vec::new(); m];
    let mut hops = vec![None; m];
    let mut queue = VecDeque::new();
    for (k, ns) in inn.iter().enumerate() {
        for &n in ns {
            match n.sensor_index() {
                Some(src) if src < m => out[src].push(k),
                Some(_) => {}
                None => {
                    if hops[k].is_none() {
                        hops[k] = Some(1);
                        queue.push_back(k);
                    }
                }
            }
        }
    }
    while let Some(k) = queue.pop_front() {
        let next = hops[k].map(|h| h + 1);
        for &t in &out[k] {
            if hops[t].is_none() {
                hops[t] = next;
                queue.push_back(t);
            }
        }
    }
    hops
}

/// Builds `F` and `H` from distances synthesized out of ground truth.
pub fn build_system_matrices(scenario: &NetworkScenario) -> Result<SystemMatrices, NetworkError> {
    scenario.require_full_triangulation()?;
    let m = scenario.sensor_count();
    let mut f = DMatrix::zeros(m, ANCHOR_COUNT);
    let mut h = DMatrix::zeros(m, m);
    let mut rows = Vec::with_capacity(m);
    for (row, sensor) in scenario.sensors.iter().enumerate() {
        let set = scenario.triangulation[&sensor.id];
        scenario.check_triangulation_set(sensor.id, set)?;
        let pts = set.map(|id| scenario.position(id).expect("checked member"));
        let weights = barycentric_from_distances(&NeighborDistances::from_points(sensor.position, pts))
            .map_err(|e| NetworkError::InvalidTriangulation {
                sensor: sensor.id,
                reason: e.to_string(),
            })?;
        let mut neighbors = [(NodeId(0), 0.0); 3];
        for ((slot, id), w) in neighbors.iter_mut().zip(set).zip(weights.0) {
            *slot = (id, w);
            match id.sensor_index() {
                Some(col) => h[(row, col)] = w,
                None => f[(row, id.0 as usize - 1)] = w,
            }
        }
        rows.push(SensorRow { id: sensor.id, neighbors });
    }
    Ok(SystemMatrices { f, h, rows })
}

/// `P`: the largest, over sensors, of the shortest directed path length from
/// the anchor set along triangulation arcs `r -> i`, `r ∈ N_i`.
pub fn anchor_to_sensor_distance_bound(scenario: &NetworkScenario) -> Result<usize, NetworkError> {
    scenario.require_full_triangulation()?;
    let hops = hop_distances(scenario.triangulation.values().map(|set| set.to_vec()));
    let mut p = 0;
    for (k, h) in hops.into_iter().enumerate() {
        p = p.max(h.ok_or(NetworkError::UnreachableSensor(NodeId::from_sensor_index(k)))?);
    }
    Ok(p)
}
