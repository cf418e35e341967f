//! Array geometry, steering vectors and sets of angular intervals.
//!
//! Directions live in two coordinates. World azimuth is measured in radians counter-clockwise
//! from the +x axis in the horizontal plane. Spatial frequency `u` is the cosine of the angle
//! between a direction and the array axis, so a half-wavelength uniform linear array has the
//! steering vector `(1/sqrt(M)) [1, e^{j pi u}, ..., e^{j pi (M-1) u}]`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CMat, CVec};

/// Orientation of the array axis, which fixes how azimuth maps to spatial frequency.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpatialConvention {
    /// Axis along +x, `u = cos(azimuth)`, field of view `[0, pi]`.
    #[default]
    Cos,
    /// Axis along +y, `u = sin(azimuth)`, field of view `[-pi/2, pi/2]`.
    Sin,
}

impl SpatialConvention {
    pub fn axis(self) -> [f64; 2] {
        match self {
            SpatialConvention::Cos => [1.0, 0.0],
            SpatialConvention::Sin => [0.0, 1.0],
        }
    }

    /// In-plane unit vector perpendicular to the axis, pointing into the field of view.
    pub fn normal(self) -> [f64; 2] {
        match self {
            SpatialConvention::Cos => [0.0, 1.0],
            SpatialConvention::Sin => [1.0, 0.0],
        }
    }

    /// Azimuth half-plane on which the azimuth-to-`u` map is one-to-one.
    pub fn fov(self) -> AngularInterval {
        match self {
            SpatialConvention::Cos => AngularInterval { lo: 0.0, hi: PI },
            SpatialConvention::Sin => AngularInterval { lo: -PI / 2.0, hi: PI / 2.0 },
        }
    }

    pub fn to_spatial(self, azimuth: f64) -> f64 {
        match self {
            SpatialConvention::Cos => azimuth.cos(),
            SpatialConvention::Sin => azimuth.sin(),
        }
    }

    pub fn to_azimuth(self, u: f64) -> f64 {
        let u = u.clamp(-1.0, 1.0);
        match self {
            SpatialConvention::Cos => u.acos(),
            SpatialConvention::Sin => u.asin(),
        }
    }

    /// Maps a set of azimuths (clipped to the field of view) to spatial frequencies.
    pub fn spatial_set(self, azimuths: &AngularSet) -> AngularSet {
        let clipped = azimuths.intersection(&AngularSet::from(self.fov()));
        let mapped = clipped.intervals().iter().filter_map(|iv| {
            let (a, b) = (self.to_spatial(iv.lo), self.to_spatial(iv.hi));
            AngularInterval::new(a.min(b), a.max(b)).ok()
        });
        AngularSet::from_intervals(mapped)
    }

    /// Inverse of [`SpatialConvention::spatial_set`].
    pub fn azimuth_set(self, spatial: &AngularSet) -> AngularSet {
        let mapped = spatial.intervals().iter().filter_map(|iv| {
            let (a, b) = (self.to_azimuth(iv.lo), self.to_azimuth(iv.hi));
            AngularInterval::new(a.min(b), a.max(b)).ok()
        });
        AngularSet::from_intervals(mapped)
    }
}

/// Element positions of an antenna array. Element 0 is the phase reference.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArrayLayout {
    positions: Vec<[f64; 3]>,
    wavelength: f64,
    convention: SpatialConvention,
}

/// A direction handed to [`steering_vector`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Direction {
    /// World azimuth in the horizontal plane, radians.
    Azimuth(f64),
    /// Spatial frequency on the field-of-view side of the array.
    Spatial(f64),
    /// Unit vector in world coordinates.
    Vector([f64; 3]),
}

impl ArrayLayout {
    pub fn new(
        positions: Vec<[f64; 3]>,
        wavelength: f64,
        convention: SpatialConvention,
    ) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::invalid("array needs at least one element"));
        }
        if !(wavelength > 0.0 && wavelength.is_finite()) {
            return Err(Error::invalid(format!("wavelength must be positive, got {wavelength}")));
        }
        if positions.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::invalid("element positions must be finite"));
        }
        Ok(Self { positions, wavelength, convention })
    }

    /// Half-wavelength uniform linear array with element 0 at `origin`.
    ///
    /// Elements step along the negative axis so that the general steering formula reduces to
    /// `e^{+j pi m u}` on element `m`.
    pub fn ula(
        elements: usize,
        wavelength: f64,
        origin: [f64; 3],
        convention: SpatialConvention,
    ) -> Result<Self> {
        let [ax, ay] = convention.axis();
        let step = wavelength / 2.0;
        let positions = (0..elements)
            .map(|m| {
                let d = -(m as f64) * step;
                [origin[0] + d * ax, origin[1] + d * ay, origin[2]]
            })
            .collect();
        Self::new(positions, wavelength, convention)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[[f64; 3]] {
        &self.positions
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }

    pub fn convention(&self) -> SpatialConvention {
        self.convention
    }

    pub fn reference(&self) -> [f64; 3] {
        self.positions[0]
    }

    /// Same array shifted rigidly by `offset`.
    pub fn translated(&self, offset: [f64; 3]) -> Self {
        let positions = self
            .positions
            .iter()
            .map(|p| [p[0] + offset[0], p[1] + offset[1], p[2] + offset[2]])
            .collect();
        Self { positions, ..self.clone() }
    }

    /// Unit vector in the horizontal plane with spatial frequency `u`.
    pub fn spatial_direction(&self, u: f64) -> Result<[f64; 3]> {
        if !(-1.0..=1.0).contains(&u) {
            return Err(Error::invalid(format!("spatial frequency {u} outside [-1, 1]")));
        }
        let [ax, ay] = self.convention.axis();
        let [nx, ny] = self.convention.normal();
        let s = (1.0 - u * u).max(0.0).sqrt();
        Ok([u * ax + s * nx, u * ay + s * ny, 0.0])
    }

    pub fn steering_u(&self, u: f64) -> Result<CVec> {
        steering_vector(self, Direction::Spatial(u))
    }

    /// Columns are steering vectors at each spatial frequency in `us`.
    pub fn steering_matrix(&self, us: &[f64]) -> Result<CMat> {
        let mut a = CMat::zeros(self.len(), us.len());
        for (j, &u) in us.iter().enumerate() {
            a.set_column(j, &self.steering_u(u)?);
        }
        Ok(a)
    }
}

/// Unit-norm far-field response `(1/sqrt(M)) exp(-j 2 pi / lambda <b_m - b_0, d>)`.
pub fn steering_vector(layout: &ArrayLayout, direction: Direction) -> Result<CVec> {
    let d = match direction {
        Direction::Azimuth(az) => {
            if !az.is_finite() {
                return Err(Error::invalid("azimuth must be finite"));
            }
            [az.cos(), az.sin(), 0.0]
        }
        Direction::Spatial(u) => layout.spatial_direction(u)?,
        Direction::Vector(v) => {
            let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            if (n - 1.0).abs() > 1e-9 {
                return Err(Error::invalid(format!("direction must be a unit vector, norm {n}")));
            }
            v
        }
    };
    let k = 2.0 * PI / layout.wavelength;
    let b0 = layout.reference();
    let amp = 1.0 / (layout.len() as f64).sqrt();
    Ok(CVec::from_iterator(
        layout.len(),
        layout.positions.iter().map(|b| {
            let proj = (b[0] - b0[0]) * d[0] + (b[1] - b0[1]) * d[1] + (b[2] - b0[2]) * d[2];
            Complex64::from_polar(amp, -k * proj)
        }),
    ))
}

/// Spatial-frequency steering vector of a half-wavelength ULA, independent of placement.
pub fn ula_steering(elements: usize, u: f64) -> CVec {
    let amp = 1.0 / (elements as f64).sqrt();
    CVec::from_iterator(elements, (0..elements).map(|m| Complex64::from_polar(amp, PI * m as f64 * u)))
}

/// Centre of DFT beam `k` out of `m` in spatial frequency.
pub fn dft_center(m: usize, k: usize) -> f64 {
    -1.0 + (2 * k + 1) as f64 / m as f64
}

/// `m` orthonormal ULA beams at the DFT spatial frequencies, one per column.
pub fn dft_codebook(m: usize) -> Result<CMat> {
    if m == 0 {
        return Err(Error::invalid("DFT codebook needs at least one beam"));
    }
    let mut c = CMat::zeros(m, m);
    for k in 0..m {
        c.set_column(k, &ula_steering(m, dft_center(m, k)));
    }
    Ok(c)
}

/// Half-open interval `[lo, hi)` with `lo < hi`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AngularInterval {
    pub lo: f64,
    pub hi: f64,
}

impl AngularInterval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) || lo >= hi || hi - lo > 2.0 * PI + 1e-12 {
            return Err(Error::invalid(format!("invalid interval [{lo}, {hi})")));
        }
        Ok(Self { lo, hi })
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x < self.hi
    }
}

/// Finite union of sorted, disjoint, non-adjacent half-open intervals.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AngularSet {
    intervals: Vec<AngularInterval>,
}

impl From<AngularInterval> for AngularSet {
    fn from(iv: AngularInterval) -> Self {
        Self { intervals: vec![iv] }
    }
}

impl AngularSet {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Normalises arbitrary intervals: sorts them and merges overlapping or touching ones.
    pub fn from_intervals<I: IntoIterator<Item = AngularInterval>>(items: I) -> Self {
        let mut v: Vec<AngularInterval> = items.into_iter().collect();
        v.sort_by(|a, b| a.lo.total_cmp(&b.lo));
        let mut out: Vec<AngularInterval> = Vec::with_capacity(v.len());
        for iv in v {
            match out.last_mut() {
                Some(last) if iv.lo <= last.hi => last.hi = last.hi.max(iv.hi),
                _ => out.push(iv),
            }
        }
        Self { intervals: out }
    }

    pub fn intervals(&self) -> &[AngularInterval] {
        &self.intervals
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn measure(&self) -> f64 {
        self.intervals.iter().map(AngularInterval::width).sum()
    }

    pub fn contains(&self, x: f64) -> bool {
        let idx = self.intervals.partition_point(|iv| iv.hi <= x);
        self.intervals.get(idx).is_some_and(|iv| iv.contains(x))
    }

    pub fn union(&self, other: &AngularSet) -> AngularSet {
        Self::from_intervals(self.intervals.iter().chain(&other.intervals).copied())
    }

    pub fn intersection(&self, other: &AngularSet) -> AngularSet {
        let (a, b) = (&self.intervals, &other.intervals);
        let (mut i, mut j) = (0, 0);
        let mut out = Vec::new();
        while i < a.len() && j < b.len() {
            let lo = a[i].lo.max(b[j].lo);
            let hi = a[i].hi.min(b[j].hi);
            if lo < hi {
                out.push(AngularInterval { lo, hi });
            }
            if a[i].hi < b[j].hi {
                i += 1;
            } else {
                j += 1;
            }
        }
        Self::from_intervals(out)
    }

    pub fn subtract(&self, other: &AngularSet) -> AngularSet {
        let mut out = Vec::new();
        for iv in &self.intervals {
            let mut lo = iv.lo;
            for cut in &other.intervals {
                if cut.hi <= lo {
                    continue;
                }
                if cut.lo >= iv.hi {
                    break;
                }
                if cut.lo > lo {
                    out.push(AngularInterval { lo, hi: cut.lo });
                }
                lo = lo.max(cut.hi);
                if lo >= iv.hi {
                    break;
                }
            }
            if lo < iv.hi {
                out.push(AngularInterval { lo, hi: iv.hi });
            }
        }
        Self::from_intervals(out)
    }

    /// Widens every interval by `guard` on both sides.
    pub fn expand(&self, guard: f64) -> AngularSet {
        if guard <= 0.0 {
            return self.clone();
        }
        Self::from_intervals(
            self.intervals.iter().map(|iv| AngularInterval { lo: iv.lo - guard, hi: iv.hi + guard }),
        )
    }

    /// Translates every interval by `delta`.
    pub fn shift(&self, delta: f64) -> AngularSet {
        Self::from_intervals(
            self.intervals.iter().map(|iv| AngularInterval { lo: iv.lo + delta, hi: iv.hi + delta }),
        )
    }

    /// Smallest interval containing the set.
    pub fn hull(&self) -> Option<AngularInterval> {
        Some(AngularInterval { lo: self.intervals.first()?.lo, hi: self.intervals.last()?.hi })
    }
}

/// Role of a grid sample in a beam-pattern fit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SampleTag {
    InSector,
    Blocked,
    Sidelobe,
}

/// Uniform cell-centred samples of the field of view, tagged against a sector and a blocked set.
#[derive(Clone, Debug, PartialEq)]
pub struct AngularGrid {
    samples: Vec<f64>,
    tags: Vec<SampleTag>,
    fov: AngularInterval,
}

impl AngularGrid {
    /// `density` samples per unit of the field-of-view coordinate.
    pub fn uniform(fov: AngularInterval, density: f64) -> Result<Self> {
        if !(density > 0.0 && density.is_finite()) {
            return Err(Error::invalid(format!("grid density must be positive, got {density}")));
        }
        let n = (density * fov.width()).round().max(1.0) as usize;
        let h = fov.width() / n as f64;
        let samples = (0..n).map(|i| fov.lo + (i as f64 + 0.5) * h).collect();
        Ok(Self { samples, tags: vec![SampleTag::Sidelobe; n], fov })
    }

    /// Re-tags samples. Blocked takes precedence over in-sector.
    pub fn retag(&mut self, sector: &AngularSet, blocked: &AngularSet) {
        for (t, &u) in self.tags.iter_mut().zip(&self.samples) {
            *t = if blocked.contains(u) {
                SampleTag::Blocked
            } else if sector.contains(u) {
                SampleTag::InSector
            } else {
                SampleTag::Sidelobe
            };
        }
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn tags(&self) -> &[SampleTag] {
        &self.tags
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn spacing(&self) -> f64 {
        self.fov.width() / self.samples.len() as f64
    }

    pub fn fov(&self) -> AngularInterval {
        self.fov
    }

    pub fn count(&self, tag: SampleTag) -> usize {
        self.tags.iter().filter(|&&t| t == tag).count()
    }

    /// Union of the grid cells whose index satisfies `keep`.
    pub fn cells_where(&self, mut keep: impl FnMut(usize) -> bool) -> AngularSet {
        let h = self.spacing();
        AngularSet::from_intervals((0..self.len()).filter(|&i| keep(i)).map(|i| AngularInterval {
            lo: self.fov.lo + i as f64 * h,
            hi: self.fov.lo + (i + 1) as f64 * h,
        }))
    }
}

/// Grid over `fov` at `density` samples per unit, tagged against `sector` and `blocked`.
pub fn grid_sample(
    sector: &AngularSet,
    blocked: &AngularSet,
    fov: AngularInterval,
    density: f64,
) -> Result<AngularGrid> {
    let mut grid = AngularGrid::uniform(fov, density)?;
    grid.retag(sector, blocked);
    Ok(grid)
}
