//! Spherical cap geometry, maximal separated nets, rescaled coordinate maps,
//! and the dyadic/Whitney combinatorics of the off-diagonal square.
//!
//! A cap `C(z, r)` is the set of points of `S^d` in the hemisphere of `z`
//! whose orthogonal projection onto `H_z = z^⊥` has length strictly below
//! `r`. Nets are built greedily over a deterministic quasi-uniform candidate
//! sequence (uniform angles on `S^1`, Fibonacci lattice on `S^2`), which
//! makes maximality certifiable: every candidate is within the separation
//! distance of an accepted center.

use std::collections::HashMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::quadrature::{BallGrid, BallSamples, SurfaceDensity};
use crate::util::{dist3, dot3, norm3};

const UNIT_TOL: f64 = 1e-12;

/// A spherical cap `C(z, r)` with center `z ∈ S^d` and radius `r ∈ (0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CapSpec {
    pub center: [f64; 3],
    pub radius: f64,
    pub dim: usize,
}

impl CapSpec {
    pub fn new(center: [f64; 3], radius: f64) -> Result<Self> {
        let dim = if center[2] == 0.0 { 1 } else { 2 };
        Self::with_dim(dim, center, radius)
    }

    pub fn with_dim(dim: usize, center: [f64; 3], radius: f64) -> Result<Self> {
        if (norm3(&center) - 1.0).abs() > UNIT_TOL {
            return Err(Error::domain(format!(
                "cap center is not a unit vector: |z| = {}",
                norm3(&center)
            )));
        }
        if !(radius > 0.0 && radius <= 1.0) {
            return Err(Error::domain(format!(
                "cap radius {radius} outside (0, 1]"
            )));
        }
        if dim == 1 && center[2].abs() > UNIT_TOL {
            return Err(Error::domain("d = 1 cap center must lie in R^2".into()));
        }
        Ok(CapSpec {
            center,
            radius,
            dim,
        })
    }

    pub fn north(dim: usize, radius: f64) -> Result<Self> {
        let center = if dim == 1 {
            [0.0, 1.0, 0.0]
        } else {
            [0.0, 0.0, 1.0]
        };
        Self::with_dim(dim, center, radius)
    }

    /// Membership: `p` in the hemisphere of the center and `|π_{H_z}(p)| < r`
    /// (strictly; boundary points are outside).
    pub fn contains(&self, p: &[f64; 3]) -> Result<bool> {
        if (norm3(p) - 1.0).abs() > 1e-9 {
            return Err(Error::domain(format!(
                "cap membership query for non-unit vector |p| = {}",
                norm3(p)
            )));
        }
        let c = dot3(p, &self.center);
        if c < 0.0 {
            return Ok(false);
        }
        let proj = (1.0 - c * c).max(0.0).sqrt();
        Ok(proj < self.radius)
    }

    /// Deterministic orthonormal basis of `H_z`: Gram-Schmidt over the
    /// standard basis, skipping directions nearly parallel to `z`.
    pub fn tangent_basis(&self) -> Vec<[f64; 3]> {
        let z = self.center;
        let mut basis: Vec<[f64; 3]> = Vec::with_capacity(self.dim);
        let candidates: [[f64; 3]; 3] = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let limit = self.dim + 1;
        for e in candidates.iter().take(limit) {
            // project out z and the accepted basis vectors
            let mut v = *e;
            let vz = dot3(&v, &z);
            for k in 0..3 {
                v[k] -= vz * z[k];
            }
            for b in &basis {
                let vb = dot3(&v, b);
                for k in 0..3 {
                    v[k] -= vb * b[k];
                }
            }
            let n = norm3(&v);
            if n > 0.1 {
                basis.push([v[0] / n, v[1] / n, v[2] / n]);
                if basis.len() == self.dim {
                    return basis;
                }
            }
        }
        // fallback: z is near a skipped axis; retry with relaxed threshold
        for e in candidates.iter().take(limit) {
            let mut v = *e;
            let vz = dot3(&v, &z);
            for k in 0..3 {
                v[k] -= vz * z[k];
            }
            for b in &basis {
                let vb = dot3(&v, b);
                for k in 0..3 {
                    v[k] -= vb * b[k];
                }
            }
            let n = norm3(&v);
            if n > 1e-8 {
                basis.push([v[0] / n, v[1] / n, v[2] / n]);
                if basis.len() == self.dim {
                    return basis;
                }
            }
        }
        basis
    }

    /// `Ψ_z(x) = r^{-1} L_z(Π_{H_z}(x))` on the hemisphere of `z`.
    pub fn unscale(&self, x: &[f64; 3]) -> Result<[f64; 2]> {
        if dot3(x, &self.center) < -1e-12 {
            return Err(Error::domain(
                "rescaled chart evaluated outside the cap hemisphere".into(),
            ));
        }
        let basis = self.tangent_basis();
        let mut y = [0.0; 2];
        for (k, b) in basis.iter().enumerate() {
            y[k] = dot3(x, b) / self.radius;
        }
        Ok(y)
    }

    /// `Φ_C(y) = Ψ_z^{-1}(y)`: for the north pole this is
    /// `(r y, √(1 - r²|y|²))`.
    pub fn rescaled_map(&self, y: [f64; 2]) -> Result<[f64; 3]> {
        let r = self.radius;
        let y2 = y[0] * y[0] + y[1] * y[1];
        if y2 * r * r >= 1.0 {
            return Err(Error::domain(format!(
                "|y| = {} outside B(0, r^{{-1}}) for r = {r}",
                y2.sqrt()
            )));
        }
        let h = (1.0 - r * r * y2).sqrt();
        let basis = self.tangent_basis();
        let mut p = [
            h * self.center[0],
            h * self.center[1],
            h * self.center[2],
        ];
        for (k, b) in basis.iter().enumerate() {
            for i in 0..3 {
                p[i] += r * y[k] * b[i];
            }
        }
        Ok(p)
    }

    /// σ-measure of the cap (closed form; agrees with quadrature).
    pub fn sigma_measure(&self) -> f64 {
        let r = self.radius.min(1.0);
        let h = (1.0 - r * r).max(0.0).sqrt();
        match self.dim {
            1 => 2.0 * r.asin(),
            _ => 2.0 * std::f64::consts::PI * (1.0 - h),
        }
    }
}

/// Pullback `Φ*_C f(y) = r^{d/2} (f ∘ Φ_C)(y)` sampled over the image of
/// `f`'s grid under `Ψ_z`, with exactly transformed quadrature weights.
///
/// Requires `f` to be supported in the hemisphere of the cap center. For
/// cap-supported `f` and `r < 1/2` the chart factor `√(1-r²|y|²)` stays in
/// `[√3/2, 1]`, which pins `‖Φ*_C f‖² / ‖f‖²` to the same interval.
pub fn pullback(cap: &CapSpec, f: &SurfaceDensity) -> Result<BallSamples> {
    let r = cap.radius;
    let rd = r.powi(cap.dim as i32);
    let rdh = rd.sqrt();
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    let mut values = Vec::new();
    let mut max_y = 0.0f64;
    for i in 0..f.grid.len() {
        let p = &f.grid.sphere_nodes[i];
        let inside = dot3(p, &cap.center) > -1e-12;
        if !inside {
            if f.values[i].norm() > 1e-14 {
                return Err(Error::domain(
                    "pullback requires support in the cap hemisphere".into(),
                ));
            }
            continue;
        }
        let y = cap.unscale(p)?;
        let y2 = y[0] * y[0] + y[1] * y[1];
        max_y = max_y.max(y2.sqrt());
        // dσ = r^d dy / √(1-r²|y|²)  ⇒  dy = dσ √(1-r²|y|²) / r^d
        let dy = f.grid.sigma_weights[i] * (1.0 - r * r * y2).max(0.0).sqrt() / rd;
        nodes.push(y);
        weights.push(dy);
        values.push(f.values[i] * rdh);
    }
    let grid = BallGrid {
        dim: cap.dim,
        radius: max_y,
        nodes,
        weights,
    };
    Ok(BallSamples::new(Arc::new(grid), values))
}

/// A maximal `2^{-k}`-separated family of cap centers.
#[derive(Debug, Clone)]
pub struct CapNet {
    pub dim: usize,
    pub level: u32,
    pub separation: f64,
    pub centers: Vec<[f64; 3]>,
    /// Mesh of the candidate sequence the greedy pass consumed; covering is
    /// exact on the candidates and within `separation + candidate_mesh` on
    /// arbitrary points.
    pub candidate_mesh: f64,
}

/// Deterministic quasi-uniform candidate sequence on S^d.
pub fn candidate_sequence(dim: usize, count: usize) -> Vec<[f64; 3]> {
    match dim {
        1 => (0..count)
            .map(|j| {
                let phi = 2.0 * std::f64::consts::PI * j as f64 / count as f64;
                [phi.cos(), phi.sin(), 0.0]
            })
            .collect(),
        _ => {
            // Fibonacci lattice
            let golden = (1.0 + 5.0f64.sqrt()) / 2.0;
            (0..count)
                .map(|j| {
                    let z = 1.0 - 2.0 * (j as f64 + 0.5) / count as f64;
                    let rho = (1.0 - z * z).max(0.0).sqrt();
                    let phi = 2.0 * std::f64::consts::PI * j as f64 / golden;
                    [rho * phi.cos(), rho * phi.sin(), z]
                })
                .collect()
        }
    }
}

/// Spatial hash over cubic cells of the ambient space; cell size equal to the
/// query distance so only the 3^3 neighborhood must be scanned.
struct CellIndex {
    cell: f64,
    map: HashMap<(i64, i64, i64), Vec<usize>>,
}

impl CellIndex {
    fn new(cell: f64) -> Self {
        CellIndex {
            cell,
            map: HashMap::new(),
        }
    }

    fn key(&self, p: &[f64; 3]) -> (i64, i64, i64) {
        (
            (p[0] / self.cell).floor() as i64,
            (p[1] / self.cell).floor() as i64,
            (p[2] / self.cell).floor() as i64,
        )
    }

    fn insert(&mut self, p: &[f64; 3], idx: usize) {
        self.map.entry(self.key(p)).or_default().push(idx);
    }

    fn neighbors<'a>(&'a self, p: &[f64; 3], rings: i64) -> impl Iterator<Item = usize> + 'a {
        let (kx, ky, kz) = self.key(p);
        (-rings..=rings).flat_map(move |dx| {
            (-rings..=rings).flat_map(move |dy| {
                (-rings..=rings).flat_map(move |dz| {
                    self.map
                        .get(&(kx + dx, ky + dy, kz + dz))
                        .into_iter()
                        .flatten()
                        .copied()
                })
            })
        })
    }
}

impl CapNet {
    /// Greedy maximal net at level `k`: candidates are consumed in sequence
    /// order and accepted when farther than `2^{-k}` from all accepted
    /// centers. `candidate_budget` caps the candidate count; levels that
    /// would need more are an explicit resolution error.
    pub fn build(dim: usize, level: u32, candidate_budget: usize) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::domain(format!("unsupported dimension {dim}")));
        }
        let sep = 0.5f64.powi(level as i32);
        // mesh targets: fine enough that greedy maximality certifies covering
        let needed = match dim {
            1 => ((2.0 * std::f64::consts::PI / (sep / 64.0)).ceil() as usize).next_power_of_two(),
            _ => {
                let mesh_target = sep / 12.0;
                // Fibonacci mesh ≈ 3.5 / √M
                let m = (3.5 / mesh_target).powi(2).ceil() as usize;
                m.next_power_of_two()
            }
        };
        if needed > candidate_budget {
            return Err(Error::resolution(format!(
                "net level {level} needs {needed} candidates, budget is {candidate_budget}"
            )));
        }
        let candidates = candidate_sequence(dim, needed);
        let mesh = match dim {
            1 => 2.0 * std::f64::consts::PI / needed as f64,
            _ => 3.5 / (needed as f64).sqrt(),
        };
        let mut centers: Vec<[f64; 3]> = Vec::new();
        let mut index = CellIndex::new(sep);
        for p in &candidates {
            let mut ok = true;
            for ci in index.neighbors(p, 1) {
                if dist3(p, &centers[ci]) <= sep {
                    ok = false;
                    break;
                }
            }
            if ok {
                centers.push(*p);
                index.insert(p, centers.len() - 1);
            }
        }
        Ok(CapNet {
            dim,
            level,
            separation: sep,
            centers,
            candidate_mesh: mesh,
        })
    }

    /// Doubled covering caps `C(z_k^j, 2^{-k+1})`, radius clamped to 1.
    pub fn covering_caps(&self) -> Result<Vec<CapSpec>> {
        let radius = (2.0 * self.separation).min(1.0);
        self.centers
            .iter()
            .map(|z| CapSpec::with_dim(self.dim, *z, radius))
            .collect()
    }

    /// Minimum pairwise distance among centers (∞ when below two centers).
    pub fn min_pairwise_distance(&self) -> f64 {
        // centers farther than one cell apart in every axis are guaranteed
        // beyond the cell size, so only the 3^3 neighborhood matters
        let mut index = CellIndex::new(self.separation);
        for (i, p) in self.centers.iter().enumerate() {
            index.insert(p, i);
        }
        let mut min = f64::INFINITY;
        for (i, p) in self.centers.iter().enumerate() {
            for j in index.neighbors(p, 1) {
                if j != i {
                    min = min.min(dist3(p, &self.centers[j]));
                }
            }
        }
        min.min(self.separation * 2.0)
    }

    /// Largest distance from any test point to its nearest center.
    pub fn covering_radius(&self, points: &[[f64; 3]]) -> f64 {
        let mut index = CellIndex::new(self.separation);
        for (i, p) in self.centers.iter().enumerate() {
            index.insert(p, i);
        }
        let mut max = 0.0f64;
        for p in points {
            let mut best = f64::INFINITY;
            let mut rings = 1;
            loop {
                for j in index.neighbors(p, rings) {
                    best = best.min(dist3(p, &self.centers[j]));
                }
                // a hit within `rings-1` cells cannot be beaten from outside
                if best <= (rings - 1) as f64 * self.separation || rings > 8 {
                    break;
                }
                rings += 1;
            }
            if best.is_infinite() {
                best = self
                    .centers
                    .iter()
                    .map(|c| dist3(p, c))
                    .fold(f64::INFINITY, f64::min);
            }
            max = max.max(best);
        }
        max
    }

    /// Maximum number of doubled caps containing any one test point.
    pub fn overlap_census(&self, points: &[[f64; 3]]) -> Result<usize> {
        let caps = self.covering_caps()?;
        let radius = (2.0 * self.separation).min(1.0);
        // chord bound for membership: |p - z|² = 2(1 - p·z) ≤ 2(1 - √(1-ρ²))
        let chord = (2.0 * (1.0 - (1.0 - radius * radius).max(0.0).sqrt())).sqrt();
        let mut index = CellIndex::new(self.separation);
        for (i, z) in self.centers.iter().enumerate() {
            index.insert(z, i);
        }
        let rings = (chord / self.separation).ceil() as i64 + 1;
        let mut max_count = 0usize;
        for p in points {
            let mut count = 0usize;
            if rings <= 6 {
                for j in index.neighbors(p, rings) {
                    if caps[j].contains(p)? {
                        count += 1;
                    }
                }
            } else {
                for cap in &caps {
                    if cap.contains(p)? {
                        count += 1;
                    }
                }
            }
            max_count = max_count.max(count);
        }
        Ok(max_count)
    }
}

/// Build a cap net with the default candidate budget.
pub fn build_cap_net(dim: usize, level: u32) -> Result<CapNet> {
    CapNet::build(dim, level, 1 << 21)
}

/// A dyadic cube `index·2^{-level} + [0, 2^{-level})^d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize)]
pub struct DyadicCube {
    pub dim: usize,
    pub level: u32,
    pub index: [i64; 2],
}

impl DyadicCube {
    pub fn side(&self) -> f64 {
        0.5f64.powi(self.level as i32)
    }

    pub fn low_corner(&self) -> [f64; 2] {
        let s = self.side();
        [self.index[0] as f64 * s, self.index[1] as f64 * s]
    }

    pub fn contains(&self, p: &[f64; 2]) -> bool {
        let s = self.side();
        let lo = self.low_corner();
        (0..self.dim).all(|k| p[k] >= lo[k] && p[k] < lo[k] + s)
    }

    pub fn parent(&self) -> DyadicCube {
        DyadicCube {
            dim: self.dim,
            level: self.level - 1,
            index: [self.index[0].div_euclid(2), self.index[1].div_euclid(2)],
        }
    }

    /// Closures intersect (shared face, edge, corner, or equality).
    pub fn adjacent(&self, other: &DyadicCube) -> bool {
        debug_assert_eq!(self.level, other.level);
        (0..self.dim).all(|k| (self.index[k] - other.index[k]).abs() <= 1)
    }

    /// The Whitney relation: not adjacent but with adjacent parents.
    pub fn whitney_related(&self, other: &DyadicCube) -> bool {
        !self.adjacent(other) && self.parent().adjacent(&other.parent())
    }

    /// Inside [-1/2, 1/2]^d.
    pub fn in_unit_box(&self) -> bool {
        let half = 1i64 << (self.level - 1);
        (0..self.dim).all(|k| self.index[k] >= -half && self.index[k] < half)
    }
}

/// An ordered Whitney pair of same-level cubes.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct WhitneyPair {
    pub first: DyadicCube,
    pub second: DyadicCube,
    pub level: u32,
}

/// Whitney decomposition of `[-1/2,1/2]^d × [-1/2,1/2]^d` minus the diagonal
/// neighborhood of width `2^{-depth}` (reported, not silently dropped).
///
/// A pair at separation `l` tiles at the first cube level where the two
/// points separate, which can be as deep as the level of side `2^{-depth-1}`
/// when `l` is just above `2^{-depth}`; cube levels therefore run one past
/// `depth`.
#[derive(Debug, Clone)]
pub struct WhitneyDecomposition {
    pub dim: usize,
    pub depth: u32,
    pub pairs: Vec<WhitneyPair>,
    pub unresolved_width: f64,
}

pub fn whitney_pairs(dim: usize, depth: u32) -> Result<WhitneyDecomposition> {
    if dim != 1 && dim != 2 {
        return Err(Error::domain(format!("unsupported dimension {dim}")));
    }
    if depth < 1 {
        return Err(Error::domain("whitney depth must be ≥ 1".into()));
    }
    let mut pairs = Vec::new();
    for level in 1..=depth + 1 {
        let half = 1i64 << (level - 1);
        let axis: Vec<i64> = (-half..half).collect();
        let cubes: Vec<DyadicCube> = if dim == 1 {
            axis.iter()
                .map(|&i| DyadicCube {
                    dim,
                    level,
                    index: [i, 0],
                })
                .collect()
        } else {
            axis.iter()
                .flat_map(|&i| {
                    axis.iter().map(move |&j| DyadicCube {
                        dim,
                        level,
                        index: [i, j],
                    })
                })
                .collect()
        };
        for a in &cubes {
            // parents within one cell per axis bound the candidate range
            for b in &cubes {
                if (0..dim).any(|k| (a.index[k] - b.index[k]).abs() > 4) {
                    continue;
                }
                if a.whitney_related(b) {
                    pairs.push(WhitneyPair {
                        first: *a,
                        second: *b,
                        level,
                    });
                }
            }
        }
    }
    Ok(WhitneyDecomposition {
        dim,
        depth,
        pairs,
        unresolved_width: 0.5f64.powi(depth as i32),
    })
}

impl WhitneyDecomposition {
    /// Product cells containing `(a, b)`.
    pub fn locate(&self, a: &[f64; 2], b: &[f64; 2]) -> Vec<&WhitneyPair> {
        self.pairs
            .iter()
            .filter(|p| p.first.contains(a) && p.second.contains(b))
            .collect()
    }
}

/// Deterministic sample points on S^d for certificates.
pub fn sphere_sample(dim: usize, count: usize, seed: u64) -> Vec<[f64; 3]> {
    use rand::Rng;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            if dim == 1 {
                let phi: f64 = rng.gen_range(0.0..2.0 * std::f64::consts::PI);
                [phi.cos(), phi.sin(), 0.0]
            } else {
                let z: f64 = rng.gen_range(-1.0..1.0);
                let phi: f64 = rng.gen_range(0.0..2.0 * std::f64::consts::PI);
                let rho = (1.0 - z * z).sqrt();
                [rho * phi.cos(), rho * phi.sin(), z]
            }
        })
        .collect()
}

/// Evaluate a density against the rescaled chart of a cap to get uniform
/// profile samples; used by the decomposition pipeline.
pub fn density_on_cap(
    f: &SurfaceDensity,
    cap: &CapSpec,
    ball: &Arc<BallGrid>,
) -> Result<BallSamples> {
    // nearest-node transfer is only valid when the density grid is the
    // cap-adapted image of `ball`; callers arrange exactly that.
    if f.grid.len() != ball.len() {
        return Err(Error::domain(
            "density grid is not aligned with the requested ball grid".into(),
        ));
    }
    let r = cap.radius;
    let rdh = r.powi(cap.dim as i32).sqrt();
    let mut values = Vec::with_capacity(ball.len());
    for (i, y) in ball.nodes.iter().enumerate() {
        let y2 = y[0] * y[0] + y[1] * y[1];
        let scale = rdh / (1.0 - r * r * y2).powf(0.25);
        values.push(f.values[i] * scale);
    }
    Ok(BallSamples::new(ball.clone(), values))
}
