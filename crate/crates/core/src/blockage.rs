//! Geometric blockage detection for the links between array elements and the RIS.
//!
//! Obstacles are discs in the horizontal plane (vertical extent `z +/- radius` when the
//! elevation gate is on). Seen from an element, an obstacle at horizontal distance `d` and
//! azimuth `alpha` blocks the azimuth cone `[alpha - asin(r/d), alpha + asin(r/d)]`.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::angular::{AngularInterval, AngularSet, ArrayLayout, SpatialConvention};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Blockage {
    pub center: [f64; 3],
    pub radius: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BlockageScene {
    pub obstacles: Vec<Blockage>,
    /// Widening applied to every blocked cone, radians.
    #[serde(default)]
    pub guard_rad: f64,
    /// Only count a link as blocked when it crosses the obstacle's vertical extent.
    #[serde(default)]
    pub elevation_gate: bool,
}

/// Operation counts of one detection pass.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectionCounters {
    /// Element-RIS-obstacle link predicates evaluated.
    pub predicate_evals: u64,
    /// Cone intervals handed to the per-element merge.
    pub intervals_merged: u64,
}

/// Blocked and available azimuths of an array, plus link statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockageMap {
    pub blocked: AngularSet,
    pub available: AngularSet,
    pub fov: AngularInterval,
    /// Every direction in the field of view is blocked.
    pub outage: bool,
    /// Number of element-RIS links crossing at least one obstacle.
    pub blocked_links: usize,
    pub counters: DetectionCounters,
}

impl BlockageMap {
    /// Fraction of the field of view that is blocked.
    pub fn blocked_fraction(&self) -> f64 {
        self.blocked.measure() / self.fov.width()
    }
}

fn horizontal_distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    (b[0] - a[0]).hypot(b[1] - a[1])
}

/// Horizontal distance from the obstacle centre to the line through `ma` and `ris`.
pub fn perpendicular_distance(ma: [f64; 3], ris: [f64; 3], obstacle: &Blockage) -> Result<f64> {
    let (mx, my, rx, ry) = (ma[0], ma[1], ris[0], ris[1]);
    let (ox, oy) = (obstacle.center[0], obstacle.center[1]);
    let base = (ry - my).hypot(rx - mx);
    if base < 1e-12 {
        return Err(Error::Geometry("array element and RIS element coincide horizontally".into()));
    }
    Ok(((ry - my) * ox - (rx - mx) * oy + rx * my - mx * ry).abs() / base)
}

/// Whether the segment from `ma` to `ris` passes through the obstacle.
pub fn link_blocked(ma: [f64; 3], ris: [f64; 3], obstacle: &Blockage, elevation_gate: bool) -> Result<bool> {
    let perp = perpendicular_distance(ma, ris, obstacle)?;
    let (dx, dy) = (ris[0] - ma[0], ris[1] - ma[1]);
    let (cx, cy) = (obstacle.center[0] - ma[0], obstacle.center[1] - ma[1]);
    let t = ((cx * dx + cy * dy) / (dx * dx + dy * dy)).clamp(0.0, 1.0);
    let closest = (cx - t * dx).hypot(cy - t * dy);
    let crosses = perp < obstacle.radius && closest < obstacle.radius;
    if !crosses || !elevation_gate {
        return Ok(crosses);
    }
    let z = ma[2] + t * (ris[2] - ma[2]);
    Ok((z - obstacle.center[2]).abs() <= obstacle.radius)
}

/// Azimuths from `ma` occluded by `obstacle`, clipped to `fov`.
///
/// The whole field of view is returned when `ma` lies inside the disc.
pub fn blocked_interval(ma: [f64; 3], obstacle: &Blockage, fov: AngularInterval) -> AngularSet {
    let d = horizontal_distance(ma, obstacle.center);
    if d <= obstacle.radius {
        return fov.into();
    }
    let alpha = (obstacle.center[1] - ma[1]).atan2(obstacle.center[0] - ma[0]);
    let delta = (obstacle.radius / d).asin();
    let cones = (-1..=1).filter_map(|k| {
        let shift = 2.0 * PI * k as f64;
        let lo = (alpha - delta + shift).max(fov.lo);
        let hi = (alpha + delta + shift).min(fov.hi);
        (lo < hi).then_some(AngularInterval { lo, hi })
    });
    AngularSet::from_intervals(cones)
}

/// Blocked and available azimuths seen from a single point.
pub fn available_angles(ma: [f64; 3], fov: AngularInterval, scene: &BlockageScene) -> BlockageMap {
    let blocked = AngularSet::from_intervals(
        scene.obstacles.iter().flat_map(|o| blocked_interval(ma, o, fov).intervals().to_vec()),
    );
    finish_map(blocked, fov, scene.guard_rad, 0, DetectionCounters::default())
}

fn finish_map(
    blocked: AngularSet,
    fov: AngularInterval,
    guard: f64,
    blocked_links: usize,
    counters: DetectionCounters,
) -> BlockageMap {
    let fov_set = AngularSet::from(fov);
    let blocked = blocked.expand(guard).intersection(&fov_set);
    let available = fov_set.subtract(&blocked);
    let outage = available.measure() <= 1e-12 * fov.width();
    BlockageMap { blocked, available, fov, outage, blocked_links, counters }
}

/// Independent ray test: does the ray from `ma` at `azimuth` hit any obstacle?
pub fn oracle_is_blocked(ma: [f64; 3], azimuth: f64, scene: &BlockageScene) -> bool {
    let (ux, uy) = (azimuth.cos(), azimuth.sin());
    scene.obstacles.iter().any(|o| {
        let (cx, cy) = (o.center[0] - ma[0], o.center[1] - ma[1]);
        if cx * cx + cy * cy <= o.radius * o.radius {
            return true;
        }
        let along = cx * ux + cy * uy;
        if along <= 0.0 {
            return false;
        }
        let across = cx * uy - cy * ux;
        across.abs() < o.radius
    })
}

/// Blockage map of a whole array towards a RIS.
///
/// Every element-RIS-obstacle link predicate is evaluated, so the cost is `M * N * O`. With the
/// elevation gate on, an obstacle contributes its cone for an element only if it blocks at least
/// one of that element's links in height as well.
pub fn detect_blockage(
    layout: &ArrayLayout,
    ris: &ArrayLayout,
    scene: &BlockageScene,
    fov: AngularInterval,
) -> Result<BlockageMap> {
    let mut counters = DetectionCounters::default();
    let mut blocked_links = 0;
    let mut cones = Vec::new();
    for &ma in layout.positions() {
        let mut link_hit = vec![false; ris.len()];
        for o in &scene.obstacles {
            let mut relevant = !scene.elevation_gate;
            for (n, &r) in ris.positions().iter().enumerate() {
                counters.predicate_evals += 1;
                if link_blocked(ma, r, o, scene.elevation_gate)? {
                    link_hit[n] = true;
                    relevant = true;
                }
            }
            if relevant {
                let iv = blocked_interval(ma, o, fov);
                counters.intervals_merged += iv.intervals().len() as u64;
                cones.extend_from_slice(iv.intervals());
            }
        }
        blocked_links += link_hit.iter().filter(|&&b| b).count();
    }
    Ok(finish_map(AngularSet::from_intervals(cones), fov, scene.guard_rad, blocked_links, counters))
}

/// Union of the cones seen from every element, without link predicates.
pub fn array_blocked_set(layout: &ArrayLayout, scene: &BlockageScene, fov: AngularInterval) -> BlockageMap {
    let cones = layout.positions().iter().flat_map(|&ma| {
        scene.obstacles.iter().flat_map(move |o| blocked_interval(ma, o, fov).intervals().to_vec())
    });
    finish_map(AngularSet::from_intervals(cones), fov, scene.guard_rad, 0, DetectionCounters::default())
}

/// Parameters for random obstacle placement.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlacementSpec {
    /// Target blocked fraction of the field of view measured in spatial frequency.
    pub density: f64,
    pub tolerance: f64,
    pub min_distance_m: f64,
    pub max_distance_m: f64,
    /// Largest spatial-frequency fraction a single obstacle may add.
    pub max_chunk: f64,
}

impl Default for PlacementSpec {
    fn default() -> Self {
        Self { density: 0.3, tolerance: 0.01, min_distance_m: 3.0, max_distance_m: 10.0, max_chunk: 0.5 }
    }
}

/// Blocked fraction of the field of view in spatial frequency.
pub fn spatial_blocked_fraction(map: &BlockageMap, convention: SpatialConvention) -> f64 {
    convention.spatial_set(&map.blocked).measure() / 2.0
}

/// Drops random discs around the array until the spatial-frequency blocked fraction is within
/// `tolerance` of `density`.
pub fn place_for_density<R: Rng + ?Sized>(
    rng: &mut R,
    layout: &ArrayLayout,
    spec: &PlacementSpec,
) -> Result<BlockageScene> {
    if !(0.0..=1.0).contains(&spec.density) {
        return Err(Error::invalid(format!("density {} outside [0, 1]", spec.density)));
    }
    if spec.min_distance_m <= 0.0 || spec.max_distance_m < spec.min_distance_m {
        return Err(Error::invalid("obstacle distance range must be positive and ordered"));
    }
    let conv = layout.convention();
    let fov = conv.fov();
    let origin = layout.reference();
    let mut scene = BlockageScene::default();
    if spec.density <= spec.tolerance {
        return Ok(scene);
    }
    if spec.density >= 1.0 - spec.tolerance {
        scene.obstacles.push(Blockage { center: origin, radius: 1.0 });
        return Ok(scene);
    }
    let mut current = 0.0;
    for _ in 0..20_000 {
        if (current - spec.density).abs() <= spec.tolerance {
            return Ok(scene);
        }
        let remaining = spec.density - current;
        let u_center = rng.gen_range(-1.0..1.0);
        let az = conv.to_azimuth(u_center);
        let chunk = rng.gen_range(0.7..1.0) * remaining.min(spec.max_chunk).max(spec.tolerance);
        let slope = (1.0 - u_center * u_center).sqrt().max(0.05);
        let half_width = (chunk / slope).min(1.2);
        let distance = rng.gen_range(spec.min_distance_m..=spec.max_distance_m);
        let center = [origin[0] + distance * az.cos(), origin[1] + distance * az.sin(), origin[2]];
        let candidate = Blockage { center, radius: distance * half_width.sin() };
        scene.obstacles.push(candidate);
        let frac = spatial_blocked_fraction(&array_blocked_set(layout, &scene, fov), conv);
        if frac <= spec.density + spec.tolerance {
            current = frac;
        } else {
            scene.obstacles.pop();
        }
    }
    Err(Error::invalid(format!("could not reach blocked fraction {}", spec.density)))
}
