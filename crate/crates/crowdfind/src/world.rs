//! Synthetic deployment: detector and lost-tag placement in a square region,
//! a uniform-grid spatial index for radius queries, per-round dummy-tag
//! election, and the coarse zones visible to the service provider.

use std::collections::BTreeSet;
use std::io::{BufRead, Write};

use rand::{Rng, RngCore};

use crate::error::{Error, Result};
use crate::protocol::{Pseudonym, TagId};

/// A point in the square region, in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Location {
    pub x: f64,
    pub y: f64,
}

impl Location {
    pub fn distance(&self, other: &Location) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// How the detector population is placed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Placement {
    /// Exactly `detector_count` detectors, i.i.d. uniform over the square.
    Uniform,
    /// Total count drawn as Poisson(detector_count), then placed uniformly;
    /// the exact spatial Poisson process on the region.
    PoissonTotal,
}

/// Deployment parameters.
#[derive(Debug, Clone, Copy)]
pub struct WorldParams {
    pub detector_count: usize,
    /// Side length of the square region, meters.
    pub side: f64,
    /// Transmission range of detectors and the tag, meters.
    pub radius: f64,
    /// Provider-visible zone granularity, meters.
    pub zone_size: f64,
    pub placement: Placement,
    /// False when running the false-positive experiment (no tag present).
    pub with_tag: bool,
}

/// Immutable snapshot of one deployed world.
#[derive(Debug, Clone)]
pub struct Deployment {
    side: f64,
    radius: f64,
    zone_size: f64,
    detectors: Vec<Location>,
    lost_tag: Option<(TagId, Location)>,
    grid: UniformGrid,
}

/// Dummy tags elected for one (round, broadcaster) pair.
#[derive(Debug, Clone)]
pub struct DummyElection {
    /// (detector index, fresh pseudonym), in detector-index order.
    pub members: Vec<(usize, Pseudonym)>,
}

/// Samples Poisson(lambda) by Knuth's product method, splitting large means
/// so the running product never underflows.
fn sample_poisson(lambda: f64, rng: &mut impl RngCore) -> usize {
    if lambda <= 0.0 {
        return 0;
    }
    if lambda > 500.0 {
        let half = lambda / 2.0;
        return sample_poisson(half, rng) + sample_poisson(lambda - half, rng);
    }
    let limit = (-lambda).exp();
    let mut product: f64 = 1.0;
    let mut count = 0usize;
    loop {
        product *= rng.random_range(0.0..1.0f64);
        if product <= limit {
            return count;
        }
        count += 1;
    }
}

/// Places detectors and (unless in false-positive mode) the lost tag.
pub fn deploy(params: &WorldParams, rng: &mut impl RngCore) -> Result<Deployment> {
    if params.side <= 0.0 {
        return Err(Error::invalid("region side must be positive"));
    }
    if params.radius <= 0.0 {
        return Err(Error::invalid("transmission radius must be positive"));
    }
    if params.zone_size <= 0.0 {
        return Err(Error::invalid("zone size must be positive"));
    }
    if params.detector_count == 0 {
        return Err(Error::invalid("detector count must be at least 1"));
    }

    let count = match params.placement {
        Placement::Uniform => params.detector_count,
        Placement::PoissonTotal => sample_poisson(params.detector_count as f64, rng),
    };
    let mut detectors = Vec::with_capacity(count);
    for _ in 0..count {
        detectors.push(Location {
            x: rng.random_range(0.0..=params.side),
            y: rng.random_range(0.0..=params.side),
        });
    }
    let lost_tag = if params.with_tag {
        let id = TagId::random(rng);
        let loc = Location {
            x: rng.random_range(0.0..=params.side),
            y: rng.random_range(0.0..=params.side),
        };
        Some((id, loc))
    } else {
        None
    };
    let grid = UniformGrid::build(params.side, params.radius, &detectors);
    Ok(Deployment {
        side: params.side,
        radius: params.radius,
        zone_size: params.zone_size,
        detectors,
        lost_tag,
        grid,
    })
}

impl Deployment {
    pub fn detector_count(&self) -> usize {
        self.detectors.len()
    }

    pub fn side(&self) -> f64 {
        self.side
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn location(&self, detector: usize) -> Result<Location> {
        self.detectors
            .get(detector)
            .copied()
            .ok_or_else(|| Error::invalid(format!("detector index {detector} out of range")))
    }

    pub fn lost_tag(&self) -> Option<(TagId, Location)> {
        self.lost_tag
    }

    /// Detectors within the closed ball of radius R around `center`.
    pub fn detectors_within(&self, center: Location) -> Vec<usize> {
        self.grid.within(center, self.radius, &self.detectors)
    }

    /// The detectors within distance R of detector `d`, excluding `d`.
    /// Distance exactly R counts as a neighbor.
    pub fn neighbors(&self, detector: usize) -> Result<Vec<usize>> {
        let center = self.location(detector)?;
        let mut found = self.detectors_within(center);
        found.retain(|&i| i != detector);
        Ok(found)
    }

    /// The detectors covering the lost tag; empty in false-positive mode.
    pub fn covering_detectors(&self) -> Vec<usize> {
        match self.lost_tag {
            Some((_, loc)) => self.detectors_within(loc),
            None => Vec::new(),
        }
    }

    /// Elects the dummy tags for one (round, broadcaster) pair: each hearing
    /// neighbor joins independently with probability q under a fresh
    /// pseudonym. The broadcaster never elects itself.
    pub fn elect_dummies(
        &self,
        broadcaster: usize,
        q: f64,
        rng: &mut impl RngCore,
    ) -> Result<DummyElection> {
        if !(0.0..=1.0).contains(&q) {
            return Err(Error::invalid("dummy probability must lie in [0, 1]"));
        }
        let mut members = Vec::new();
        for neighbor in self.neighbors(broadcaster)? {
            if rng.random_bool(q) {
                members.push((neighbor, Pseudonym::random(rng)));
            } else {
                // keep the stream aligned so election draws stay one-per-neighbor
                let _ = rng.next_u64();
            }
        }
        Ok(DummyElection { members })
    }

    /// Grid-cell coordinates of a detector at zone granularity. This is all
    /// the provider ever learns about a detector's position.
    pub fn zone_of(&self, detector: usize) -> Result<(u32, u32)> {
        let loc = self.location(detector)?;
        Ok((
            (loc.x / self.zone_size).floor() as u32,
            (loc.y / self.zone_size).floor() as u32,
        ))
    }

    pub fn zones(&self) -> Vec<(u32, u32)> {
        (0..self.detectors.len())
            .map(|d| self.zone_of(d).expect("index in range"))
            .collect()
    }

    /// Writes the deployment in the flat debug format: a `# side radius
    /// zone_size` header, one `index x y` line per detector, and a final
    /// `tag x y` line when the lost tag is present.
    pub fn write_flat(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "# {} {} {}", self.side, self.radius, self.zone_size)?;
        for (i, loc) in self.detectors.iter().enumerate() {
            writeln!(w, "{} {} {}", i, loc.x, loc.y)?;
        }
        if let Some((_, loc)) = self.lost_tag {
            writeln!(w, "tag {} {}", loc.x, loc.y)?;
        }
        Ok(())
    }

    /// Reads the flat debug format back. The tag id is not serialized; a
    /// placeholder id is used so geometry round-trips exactly.
    pub fn read_flat(r: impl BufRead) -> Result<Deployment> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::invalid("empty deployment file"))??;
        let header = header
            .strip_prefix("# ")
            .ok_or_else(|| Error::invalid("missing deployment header"))?;
        let mut parts = header.split_whitespace();
        let mut next_f64 = |name: &str| -> Result<f64> {
            parts
                .next()
                .ok_or_else(|| Error::invalid(format!("missing {name} in header")))?
                .parse::<f64>()
                .map_err(|e| Error::invalid(format!("bad {name}: {e}")))
        };
        let side = next_f64("side")?;
        let radius = next_f64("radius")?;
        let zone_size = next_f64("zone_size")?;
        let mut detectors = Vec::new();
        let mut lost_tag = None;
        for line in lines {
            let line = line?;
            let mut fields = line.split_whitespace();
            let first = match fields.next() {
                Some(f) => f,
                None => continue,
            };
            let x: f64 = fields
                .next()
                .ok_or_else(|| Error::invalid("missing x"))?
                .parse()
                .map_err(|e| Error::invalid(format!("bad x: {e}")))?;
            let y: f64 = fields
                .next()
                .ok_or_else(|| Error::invalid("missing y"))?
                .parse()
                .map_err(|e| Error::invalid(format!("bad y: {e}")))?;
            if first == "tag" {
                lost_tag = Some((TagId::from_raw(0), Location { x, y }));
            } else {
                detectors.push(Location { x, y });
            }
        }
        let grid = UniformGrid::build(side, radius, &detectors);
        Ok(Deployment {
            side,
            radius,
            zone_size,
            detectors,
            lost_tag,
            grid,
        })
    }
}

/// Uniform spatial hash with cell size equal to the query radius, so a
/// radius query inspects at most the 3x3 block around the query cell.
#[derive(Debug, Clone)]
struct UniformGrid {
    cell: f64,
    cols: usize,
    rows: usize,
    cells: Vec<Vec<usize>>,
}

impl UniformGrid {
    fn build(side: f64, cell: f64, points: &[Location]) -> UniformGrid {
        let cols = (side / cell).ceil().max(1.0) as usize;
        let rows = cols;
        let mut cells = vec![Vec::new(); cols * rows];
        let mut grid = UniformGrid {
            cell,
            cols,
            rows,
            cells: Vec::new(),
        };
        for (i, p) in points.iter().enumerate() {
            let (cx, cy) = grid.cell_of(*p);
            cells[cy * cols + cx].push(i);
        }
        grid.cells = cells;
        grid
    }

    fn cell_of(&self, p: Location) -> (usize, usize) {
        let cx = ((p.x / self.cell) as usize).min(self.cols - 1);
        let cy = ((p.y / self.cell) as usize).min(self.rows - 1);
        (cx, cy)
    }

    fn within(&self, center: Location, radius: f64, points: &[Location]) -> Vec<usize> {
        let (cx, cy) = self.cell_of(center);
        let mut found = Vec::new();
        let x_lo = cx.saturating_sub(1);
        let y_lo = cy.saturating_sub(1);
        let x_hi = (cx + 1).min(self.cols - 1);
        let y_hi = (cy + 1).min(self.rows - 1);
        for gy in y_lo..=y_hi {
            for gx in x_lo..=x_hi {
                for &i in &self.cells[gy * self.cols + gx] {
                    if points[i].distance(&center) <= radius {
                        found.push(i);
                    }
                }
            }
        }
        found.sort_unstable();
        found
    }
}

/// Brute-force radius query used as the oracle for the grid index.
pub fn brute_force_within(points: &[Location], center: Location, radius: f64) -> BTreeSet<usize> {
    points
        .iter()
        .enumerate()
        .filter(|(_, p)| p.distance(&center) <= radius)
        .map(|(i, _)| i)
        .collect()
}
