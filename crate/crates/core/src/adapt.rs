//! Metric-driven local remeshing toward a mesh that is uniform in the
//! metric, and quality measures against the alignment and
//! equidistribution conditions.
//!
//! The remesher works on a nodal metric scaled so that an equidistributed
//! element has unit edge length in the metric, then repeatedly splits long
//! edges, collapses short ones, flips edges by a metric Delaunay test and
//! optionally smooths interior vertices. The domain boundary (the unit
//! square) is preserved: boundary vertices slide only along their side and
//! the four corners are immovable.

use std::collections::BTreeMap;

use crate::la::{add, cross, scale, sub, Point, SymMat2};
use crate::mesh::TriMesh;
use crate::metric::{self, MetricField};
use crate::{Error, Result};

/// Equilateral area factor: a triangle with unit edge lengths has area
/// √3/4. Used to scale the metric so that the expected element count of a
/// unit mesh matches the target.
const UNIT_TRIANGLE_AREA: f64 = 0.433_012_701_892_219_3;

/// Split/collapse band and pass control for the remesher.
#[derive(Clone, Copy, Debug)]
pub struct AdaptConfig {
    pub target_elements: usize,
    /// Collapse edges shorter than this metric length.
    pub length_low: f64,
    /// Split edges longer than this metric length.
    pub length_high: f64,
    pub max_passes: usize,
    pub smoothing: bool,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        Self {
            target_elements: 1000,
            length_low: std::f64::consts::FRAC_1_SQRT_2,
            length_high: std::f64::consts::SQRT_2,
            max_passes: 12,
            smoothing: true,
        }
    }
}

impl AdaptConfig {
    pub fn with_target(target_elements: usize) -> Self {
        Self {
            target_elements,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.length_low > 0.0 && self.length_low < 1.0 && self.length_high > 1.0) {
            return Err(Error::Invalid(format!(
                "length thresholds must satisfy 0 < {} < 1 < {}",
                self.length_low, self.length_high
            )));
        }
        if self.target_elements < 2 {
            return Err(Error::Invalid(
                "target element count must be at least 2".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct OperationCounts {
    pub splits: usize,
    pub collapses: usize,
    pub flips: usize,
    pub smooth_moves: usize,
}

impl OperationCounts {
    pub fn topological(&self) -> usize {
        self.splits + self.collapses + self.flips
    }
}

#[derive(Debug)]
pub struct AdaptOutcome {
    pub mesh: TriMesh,
    pub passes: usize,
    /// Element count within ±30% of the target.
    pub reached_target: bool,
    pub operations: OperationCounts,
    /// Mean alignment quality before the first pass and after each pass.
    pub mean_alignment_trace: Vec<f64>,
}

/// Per-element quality against a metric field: alignment
/// `tr((F')ᵀ M F') / (d det((F')ᵀ M F')^(1/d)) >= 1` and equidistribution
/// `N ρ |K| / σ`, both equal to one on an exactly metric-uniform mesh.
#[derive(Clone, Debug)]
pub struct QualityReport {
    pub alignment: Vec<f64>,
    pub equidistribution: Vec<f64>,
    pub mean_alignment: f64,
    pub max_alignment: f64,
    pub max_aspect_ratio: f64,
}

fn alignment_quality(jac: &crate::la::Mat2, m: &SymMat2) -> f64 {
    let prod = jac.transpose().mul(&m.as_mat2()).mul(jac);
    let tr = prod.m[0][0] + prod.m[1][1];
    let det = prod.det().max(0.0);
    tr / (metric::DIMENSION * det.powf(1.0 / metric::DIMENSION))
}

pub fn quality_report(mesh: &TriMesh, field: &MetricField) -> QualityReport {
    let n = mesh.n_triangles();
    let mut alignment = Vec::with_capacity(n);
    let mut equidistribution = Vec::with_capacity(n);
    for k in 0..n {
        let g = mesh.element_geometry(k);
        alignment.push(alignment_quality(&g.jacobian, &field.tensors[k]));
        equidistribution.push(n as f64 * field.rho[k] * g.area / field.sigma);
    }
    let mean_alignment = alignment.iter().sum::<f64>() / n as f64;
    let max_alignment = alignment.iter().copied().fold(1.0, f64::max);
    QualityReport {
        alignment,
        equidistribution,
        mean_alignment,
        max_alignment,
        max_aspect_ratio: mesh.max_aspect_ratio().unwrap_or(f64::NAN),
    }
}

/// Length of the segment pq under a nodal metric, two-point trapezoid rule.
pub fn metric_edge_length(mp: &SymMat2, mq: &SymMat2, p: Point, q: Point) -> f64 {
    let e = sub(q, p);
    0.5 * (mp.quad_form(e).max(0.0).sqrt() + mq.quad_form(e).max(0.0).sqrt())
}

// side bits of the unit square
const SIDE_X0: u8 = 1;
const SIDE_X1: u8 = 2;
const SIDE_Y0: u8 = 4;
const SIDE_Y1: u8 = 8;
const GEOM_TOL: f64 = 1e-12;
const AREA_FLOOR: f64 = 1e-14;

fn side_bits(p: Point) -> u8 {
    let mut bits = 0;
    if p[0].abs() <= GEOM_TOL {
        bits |= SIDE_X0;
    }
    if (p[0] - 1.0).abs() <= GEOM_TOL {
        bits |= SIDE_X1;
    }
    if p[1].abs() <= GEOM_TOL {
        bits |= SIDE_Y0;
    }
    if (p[1] - 1.0).abs() <= GEOM_TOL {
        bits |= SIDE_Y1;
    }
    bits
}

fn snap_to_side(p: Point, bits: u8) -> Point {
    let mut q = p;
    if bits & SIDE_X0 != 0 {
        q[0] = 0.0;
    }
    if bits & SIDE_X1 != 0 {
        q[0] = 1.0;
    }
    if bits & SIDE_Y0 != 0 {
        q[1] = 0.0;
    }
    if bits & SIDE_Y1 != 0 {
        q[1] = 1.0;
    }
    q
}

struct Working {
    verts: Vec<Point>,
    /// Side bits; 0 for interior vertices, two bits for corners.
    sides: Vec<u8>,
    metric: Vec<SymMat2>,
    alive: Vec<bool>,
    tris: Vec<Option<[usize; 3]>>,
    v2t: Vec<Vec<usize>>,
    low: f64,
    high: f64,
    /// Multiplies all metric lengths; adjusted between passes to steer the
    /// element count toward the target.
    length_scale: f64,
}

impl Working {
    fn build(mesh: &TriMesh, nodal: Vec<SymMat2>) -> Result<Self> {
        let nv = mesh.n_vertices();
        let mut sides = vec![0u8; nv];
        for v in 0..nv {
            if mesh.is_boundary_vertex(v) {
                let bits = side_bits(mesh.vertex(v));
                if bits == 0 {
                    return Err(Error::Invalid(
                        "boundary vertex off the unit square; the remesher only supports the unit square domain".into(),
                    ));
                }
                sides[v] = bits;
            }
        }
        let tris: Vec<Option<[usize; 3]>> = mesh.triangles().iter().map(|t| Some(*t)).collect();
        let mut v2t = vec![Vec::new(); nv];
        for (k, t) in mesh.triangles().iter().enumerate() {
            for &v in t {
                v2t[v].push(k);
            }
        }
        Ok(Self {
            verts: mesh.vertices().to_vec(),
            sides,
            metric: nodal,
            alive: vec![true; nv],
            tris,
            v2t,
            low: 0.0,
            high: 0.0,
            length_scale: 1.0,
        })
    }

    fn edge_length(&self, a: usize, b: usize) -> f64 {
        self.length_scale
            * metric_edge_length(
                &self.metric[a],
                &self.metric[b],
                self.verts[a],
                self.verts[b],
            )
    }

    fn live_triangle_count(&self) -> usize {
        self.tris.iter().flatten().count()
    }

    /// Live edges with their incident triangle count, in deterministic
    /// (sorted vertex pair) order.
    fn collect_edges(&self) -> BTreeMap<(usize, usize), Vec<usize>> {
        let mut edges: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
        for (k, t) in self.tris.iter().enumerate() {
            let Some(t) = t else { continue };
            for s in 0..3 {
                let (a, b) = (t[s], t[(s + 1) % 3]);
                edges.entry((a.min(b), a.max(b))).or_default().push(k);
            }
        }
        edges
    }

    /// Triangles currently containing both a and b.
    fn tris_of_edge(&self, a: usize, b: usize) -> Vec<usize> {
        self.v2t[a]
            .iter()
            .copied()
            .filter(|&k| {
                self.tris[k]
                    .map(|t| t.contains(&a) && t.contains(&b))
                    .unwrap_or(false)
            })
            .collect()
    }

    fn neighbors(&self, v: usize) -> Vec<usize> {
        let mut out = Vec::new();
        for &k in &self.v2t[v] {
            if let Some(t) = self.tris[k] {
                for &w in &t {
                    if w != v {
                        out.push(w);
                    }
                }
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    fn tri_cross(&self, t: [usize; 3]) -> f64 {
        cross(
            sub(self.verts[t[1]], self.verts[t[0]]),
            sub(self.verts[t[2]], self.verts[t[0]]),
        )
    }

    fn detach(&mut self, k: usize) {
        if let Some(t) = self.tris[k].take() {
            for v in t {
                self.v2t[v].retain(|&x| x != k);
            }
        }
    }

    fn attach(&mut self, t: [usize; 3]) -> usize {
        let k = self.tris.len();
        self.tris.push(Some(t));
        for v in t {
            self.v2t[v].push(k);
        }
        k
    }

    fn split_pass(&mut self) -> usize {
        let edges = self.collect_edges();
        let mut queue: Vec<(f64, usize, usize)> = edges
            .keys()
            .map(|&(a, b)| (self.edge_length(a, b), a, b))
            .filter(|&(l, _, _)| l > self.high)
            .collect();
        queue.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
        let mut count = 0;
        for (_, a, b) in queue {
            if !self.alive[a] || !self.alive[b] {
                continue;
            }
            let incident = self.tris_of_edge(a, b);
            if incident.is_empty() {
                continue;
            }
            if self.edge_length(a, b) <= self.high {
                continue;
            }
            let on_boundary = incident.len() == 1;
            let shared = self.sides[a] & self.sides[b];
            if on_boundary && shared == 0 {
                // should not happen on a conforming unit-square mesh
                continue;
            }
            let mut mid = scale(add(self.verts[a], self.verts[b]), 0.5);
            let mid_sides = if on_boundary { shared } else { 0 };
            if mid_sides != 0 {
                mid = snap_to_side(mid, mid_sides);
            }
            let m = self.metric[a]
                .add(&self.metric[b])
                .scale(0.5)
                .floor_eigenvalues(1e-12);
            let v = self.verts.len();
            self.verts.push(mid);
            self.sides.push(mid_sides);
            self.metric.push(m);
            self.alive.push(true);
            self.v2t.push(Vec::new());
            for k in incident {
                let t = self.tris[k].unwrap();
                // rotate so the split edge is (t0, t1)
                let s = (0..3)
                    .find(|&s| {
                        (t[s] == a && t[(s + 1) % 3] == b) || (t[s] == b && t[(s + 1) % 3] == a)
                    })
                    .unwrap();
                let (p, q, r) = (t[s], t[(s + 1) % 3], t[(s + 2) % 3]);
                self.detach(k);
                self.attach([p, v, r]);
                self.attach([v, q, r]);
            }
            count += 1;
        }
        count
    }

    fn collapse_allowed(&self, a: usize, b: usize, incident: &[usize]) -> Option<(usize, usize)> {
        // returns (survivor, removed)
        let (ba, bb) = (self.sides[a] != 0, self.sides[b] != 0);
        let corner = |v: usize| self.sides[v].count_ones() >= 2;
        let survivor = if ba && bb {
            // both on the boundary: only a boundary edge along one common
            // side may collapse, otherwise the domain would be pinched
            if incident.len() != 1 || self.sides[a] & self.sides[b] == 0 {
                return None;
            }
            match (corner(a), corner(b)) {
                (true, true) => return None,
                (true, false) => a,
                (false, true) => b,
                (false, false) => {
                    if self.v2t[a].len() >= self.v2t[b].len() {
                        a
                    } else {
                        b
                    }
                }
            }
        } else if ba {
            a
        } else if bb {
            b
        } else if self.v2t[a].len() > self.v2t[b].len()
            || (self.v2t[a].len() == self.v2t[b].len() && a < b)
        {
            a
        } else {
            b
        };
        let removed = if survivor == a { b } else { a };
        Some((survivor, removed))
    }

    fn collapse_pass(&mut self) -> usize {
        let edges = self.collect_edges();
        let mut queue: Vec<(f64, usize, usize)> = edges
            .keys()
            .map(|&(a, b)| (self.edge_length(a, b), a, b))
            .filter(|&(l, _, _)| l < self.low)
            .collect();
        queue.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
        let mut count = 0;
        for (_, a, b) in queue {
            if !self.alive[a] || !self.alive[b] {
                continue;
            }
            let incident = self.tris_of_edge(a, b);
            if incident.is_empty() {
                continue;
            }
            if self.edge_length(a, b) >= self.low {
                continue;
            }
            let Some((s, r)) = self.collapse_allowed(a, b, &incident) else {
                continue;
            };
            // link condition: the common neighbourhood must be exactly the
            // opposite vertices of the incident triangles
            let na = self.neighbors(a);
            let nb = self.neighbors(b);
            let common = na.iter().filter(|v| nb.binary_search(v).is_ok()).count();
            if common != incident.len() {
                continue;
            }
            // simulate the remaining triangles of the removed vertex
            let mut ok = true;
            for &k in &self.v2t[r] {
                if incident.contains(&k) {
                    continue;
                }
                let Some(t) = self.tris[k] else { continue };
                let t_new = t.map(|v| if v == r { s } else { v });
                if self.tri_cross(t_new) <= AREA_FLOOR {
                    ok = false;
                    break;
                }
            }
            if !ok {
                continue;
            }
            for k in incident {
                self.detach(k);
            }
            let affected: Vec<usize> = self.v2t[r].clone();
            for k in affected {
                let t = self.tris[k].unwrap();
                let t_new = t.map(|v| if v == r { s } else { v });
                self.detach(k);
                self.attach(t_new);
            }
            self.alive[r] = false;
            count += 1;
        }
        count
    }

    // incircle test after transforming to the metric frame; positive when
    // d lies strictly inside the circumcircle of ccw (a, b, c)
    fn metric_incircle(&self, a: usize, b: usize, c: usize, d: usize) -> f64 {
        let m = self.metric[a]
            .add(&self.metric[b])
            .add(&self.metric[c])
            .add(&self.metric[d])
            .scale(0.25)
            .sqrt_spd();
        let tp = |v: usize| m.mul_vec(self.verts[v]);
        let (pa, pb, pc, pd) = (tp(a), tp(b), tp(c), tp(d));
        let col = |p: Point| {
            let dx = p[0] - pd[0];
            let dy = p[1] - pd[1];
            [dx, dy, dx * dx + dy * dy]
        };
        let (ra, rb, rc) = (col(pa), col(pb), col(pc));
        ra[0] * (rb[1] * rc[2] - rb[2] * rc[1]) - ra[1] * (rb[0] * rc[2] - rb[2] * rc[0])
            + ra[2] * (rb[0] * rc[1] - rb[1] * rc[0])
    }

    fn flip_pass(&mut self) -> usize {
        let mut total = 0;
        for _round in 0..10 {
            let edges = self.collect_edges();
            let mut flips = 0;
            for (&(a, b), ks) in &edges {
                if ks.len() != 2 {
                    continue;
                }
                let (k1, k2) = (ks[0], ks[1]);
                let (Some(t1), Some(t2)) = (self.tris[k1], self.tris[k2]) else {
                    continue;
                };
                if !(t1.contains(&a) && t1.contains(&b) && t2.contains(&a) && t2.contains(&b)) {
                    continue;
                }
                let c = *t1.iter().find(|v| **v != a && **v != b).unwrap();
                let d = *t2.iter().find(|v| **v != a && **v != b).unwrap();
                if c == d {
                    continue;
                }
                // skip if the flipped edge already exists elsewhere
                if !self.tris_of_edge(c, d).is_empty() {
                    continue;
                }
                // orient t1 as (a, b, c)
                let s = (0..3).find(|&s| t1[s] == a).unwrap();
                let (aa, bb) = if t1[(s + 1) % 3] == b { (a, b) } else { (b, a) };
                let new1 = [aa, d, c];
                let new2 = [d, bb, c];
                if self.tri_cross(new1) <= AREA_FLOOR || self.tri_cross(new2) <= AREA_FLOOR {
                    continue;
                }
                if self.metric_incircle(aa, bb, c, d) <= 1e-9 {
                    continue;
                }
                self.detach(k1);
                self.detach(k2);
                self.attach(new1);
                self.attach(new2);
                flips += 1;
            }
            total += flips;
            if flips == 0 {
                break;
            }
        }
        total
    }

    fn smooth_pass(&mut self) -> usize {
        let mut moved = 0;
        for v in 0..self.verts.len() {
            if !self.alive[v] || self.sides[v] != 0 || self.v2t[v].is_empty() {
                continue;
            }
            let nbrs = self.neighbors(v);
            if nbrs.len() < 3 {
                continue;
            }
            let mut wsum = 0.0;
            let mut target = [0.0, 0.0];
            for &w in &nbrs {
                let wt = self.edge_length(v, w);
                wsum += wt;
                target = add(target, scale(self.verts[w], wt));
            }
            if wsum <= 0.0 {
                continue;
            }
            let candidate = scale(add(self.verts[v], scale(target, 1.0 / wsum)), 0.5);
            let old = self.verts[v];
            self.verts[v] = candidate;
            let valid = self.v2t[v].iter().all(|&k| {
                self.tris[k]
                    .map(|t| self.tri_cross(t) > AREA_FLOOR)
                    .unwrap_or(true)
            });
            if valid {
                moved += 1;
            } else {
                self.verts[v] = old;
            }
        }
        moved
    }

    fn mean_alignment(&self) -> f64 {
        let mut sum = 0.0;
        let mut n = 0usize;
        for t in self.tris.iter().flatten() {
            let pts = [self.verts[t[0]], self.verts[t[1]], self.verts[t[2]]];
            let m = self.metric[t[0]]
                .add(&self.metric[t[1]])
                .add(&self.metric[t[2]])
                .scale(1.0 / 3.0);
            let p = crate::la::Mat2::from_columns(sub(pts[1], pts[0]), sub(pts[2], pts[0]));
            // alignment quality is invariant under the reference factor, so
            // the raw edge matrix stands in for the jacobian
            sum += alignment_quality(&p, &m);
            n += 1;
        }
        sum / n.max(1) as f64
    }

    fn compact(self) -> Result<TriMesh> {
        let mut remap = vec![usize::MAX; self.verts.len()];
        let mut verts = Vec::new();
        for (v, &alive) in self.alive.iter().enumerate() {
            if alive && !self.v2t[v].is_empty() {
                remap[v] = verts.len();
                verts.push(self.verts[v]);
            }
        }
        let tris: Vec<[usize; 3]> = self
            .tris
            .iter()
            .flatten()
            .map(|t| t.map(|v| remap[v]))
            .collect();
        TriMesh::new(verts, tris)
    }
}

/// Produces a quasi metric-uniform mesh with roughly `target_elements`
/// elements. The metric is interpolated to the vertices, scaled so unit
/// metric edge length matches the equidistributed element size, and the
/// mesh is driven into the `[length_low, length_high]` band.
pub fn adapt_mesh(
    mesh: &TriMesh,
    field: &MetricField,
    config: &AdaptConfig,
) -> Result<AdaptOutcome> {
    config.validate()?;
    if field.tensors.len() != mesh.n_triangles() {
        return Err(Error::Invalid(
            "metric field does not match the mesh".into(),
        ));
    }
    for (k, m) in field.tensors.iter().enumerate() {
        if !m.is_spd() || !m.is_finite() {
            return Err(Error::Invalid(format!(
                "metric tensor on element {k} is not SPD"
            )));
        }
    }
    let nodal = metric::nodal_metrics(mesh, field);
    // unit metric edge length at equidistribution: an equidistributed
    // element has metric area σ/N before scaling
    let factor = UNIT_TRIANGLE_AREA * config.target_elements as f64 / field.sigma;
    let scaled: Vec<SymMat2> = nodal
        .iter()
        .map(|m| m.scale(factor).floor_eigenvalues(1e-12))
        .collect();
    let mut working = Working::build(mesh, scaled)?;
    working.low = config.length_low;
    working.high = config.length_high;

    let mut ops = OperationCounts::default();
    let mut trace = vec![working.mean_alignment()];
    let mut passes = 0;
    let target = config.target_elements as f64;
    for _ in 0..config.max_passes {
        let splits = working.split_pass();
        let collapses = working.collapse_pass();
        let flips = working.flip_pass();
        let smooth_moves = if config.smoothing {
            working.smooth_pass()
        } else {
            0
        };
        ops.splits += splits;
        ops.collapses += collapses;
        ops.flips += flips;
        ops.smooth_moves += smooth_moves;
        passes += 1;
        trace.push(working.mean_alignment());
        // steer the count: lengths scale with the square root of the
        // element count ratio, clamped against oscillation
        let ratio = target / working.live_triangle_count() as f64;
        let settled = (0.95..=1.05).contains(&ratio);
        if !settled {
            let step = ratio.sqrt().clamp(0.7, 1.4);
            working.length_scale = (working.length_scale * step).clamp(0.25, 4.0);
        }
        if splits + collapses + flips == 0 && settled {
            break;
        }
    }
    let count = working.live_triangle_count();
    let target = config.target_elements as f64;
    let reached = (count as f64 - target).abs() <= 0.3 * target;
    Ok(AdaptOutcome {
        mesh: working.compact()?,
        passes,
        reached_target: reached,
        operations: ops,
        mean_alignment_trace: trace,
    })
}
