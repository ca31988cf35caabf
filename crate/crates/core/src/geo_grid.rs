//! Regular planar grids, time axes and grid-to-county assignment.
//!
//! Everything in the core works in a flat plane measured in kilometres.
//! Longitude/latitude inputs are converted once, at the boundary, with
//! [`GeoOrigin::to_planar`].

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, parse_err, Error, Result};

/// Kilometres per degree of latitude.
pub const KM_PER_DEGREE: f64 = 111.32;

/// A planar point in kilometres.
pub type Point = (f64, f64);

/// Regular grid of square cells. Cell `id = j * nx + i` has its centre at
/// `origin + (i + 0.5, j + 0.5) * cell_size`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub origin: Point,
    pub nx: usize,
    pub ny: usize,
    pub cell_size: f64,
}

impl Grid {
    pub fn new(origin: Point, nx: usize, ny: usize, cell_size: f64) -> Result<Self> {
        let g = Grid {
            origin,
            nx,
            ny,
            cell_size,
        };
        g.validate("grid")?;
        Ok(g)
    }

    pub fn validate(&self, field: &str) -> Result<()> {
        if self.nx == 0 {
            return Err(invalid(format!("{field}.nx"), "must be at least 1"));
        }
        if self.ny == 0 {
            return Err(invalid(format!("{field}.ny"), "must be at least 1"));
        }
        if !(self.cell_size > 0.0 && self.cell_size.is_finite()) {
            return Err(invalid(
                format!("{field}.cell_size_km"),
                "must be positive and finite",
            ));
        }
        if !(self.origin.0.is_finite() && self.origin.1.is_finite()) {
            return Err(invalid(format!("{field}.origin_km"), "must be finite"));
        }
        Ok(())
    }

    pub fn n_cells(&self) -> usize {
        self.nx * self.ny
    }

    pub fn cell_area(&self) -> f64 {
        self.cell_size * self.cell_size
    }

    pub fn check_cell(&self, cell: usize) -> Result<()> {
        if cell < self.n_cells() {
            Ok(())
        } else {
            Err(invalid(
                "cell_id",
                format!("{cell} is outside [0, {})", self.n_cells()),
            ))
        }
    }

    /// Centre of `cell`. The id is not checked; see [`Grid::check_cell`].
    #[inline]
    pub fn center(&self, cell: usize) -> Point {
        let i = cell % self.nx;
        let j = cell / self.nx;
        (
            self.origin.0 + (i as f64 + 0.5) * self.cell_size,
            self.origin.1 + (j as f64 + 0.5) * self.cell_size,
        )
    }

    /// Lower-left and upper-right corners of `cell`.
    pub fn cell_bounds(&self, cell: usize) -> (Point, Point) {
        let i = (cell % self.nx) as f64;
        let j = (cell / self.nx) as f64;
        let lo = (
            self.origin.0 + i * self.cell_size,
            self.origin.1 + j * self.cell_size,
        );
        (lo, (lo.0 + self.cell_size, lo.1 + self.cell_size))
    }

    /// Euclidean distance from the centre of `cell` to `center`.
    pub fn radial_distance(&self, cell: usize, center: Point) -> Result<f64> {
        self.check_cell(cell)?;
        let (x, y) = self.center(cell);
        Ok((x - center.0).hypot(y - center.1))
    }
}

/// Equally spaced observation times `t0 + k * dt` for `k < n_steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeAxis {
    pub t0: f64,
    pub n_steps: usize,
    pub dt: f64,
}

impl TimeAxis {
    pub fn new(t0: f64, n_steps: usize, dt: f64) -> Result<Self> {
        let t = TimeAxis { t0, n_steps, dt };
        t.validate("times")?;
        Ok(t)
    }

    /// Hourly axis starting at zero.
    pub fn hourly(n_steps: usize) -> Self {
        TimeAxis {
            t0: 0.0,
            n_steps,
            dt: 1.0,
        }
    }

    pub fn validate(&self, field: &str) -> Result<()> {
        if self.n_steps == 0 {
            return Err(invalid(format!("{field}.n_steps"), "must be at least 1"));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(invalid(format!("{field}.dt_h"), "must be positive"));
        }
        if !self.t0.is_finite() {
            return Err(invalid(format!("{field}.t0_h"), "must be finite"));
        }
        Ok(())
    }

    /// Total duration `T = n_steps * dt`.
    pub fn duration(&self) -> f64 {
        self.n_steps as f64 * self.dt
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    /// Hours elapsed since `t0` at step `k`.
    pub fn elapsed(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    /// Index of the step closest to absolute time `t`, if it lies on the axis.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let k = ((t - self.t0) / self.dt).round();
        if k < 0.0 || k >= self.n_steps as f64 {
            return None;
        }
        let k = k as usize;
        ((self.time(k) - t).abs() <= 1e-6 * self.dt).then_some(k)
    }
}

/// Reference point for the degree-to-kilometre conversion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoOrigin {
    pub lon: f64,
    pub lat: f64,
}

impl GeoOrigin {
    /// Planar offset of (`lon`, `lat`) from the origin. Longitude differences
    /// are scaled by the cosine of the origin latitude so that a regular
    /// degree grid maps to a regular planar grid.
    pub fn to_planar(&self, lon: f64, lat: f64) -> Point {
        let kx = KM_PER_DEGREE * self.lat.to_radians().cos();
        ((lon - self.lon) * kx, (lat - self.lat) * KM_PER_DEGREE)
    }
}

/// A named set of grid cells with its household count and asset density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct County {
    pub name: String,
    pub cells: Vec<usize>,
    pub households: u64,
    /// Kilometres of line per km² of land.
    pub asset_density: f64,
}

/// Counties sharing one grid. Cells are disjoint across counties and the
/// counties are kept sorted by name.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CountySet {
    pub counties: Vec<County>,
}

impl CountySet {
    pub fn new(mut counties: Vec<County>, grid: &Grid) -> Result<Self> {
        counties.sort_by(|a, b| a.name.cmp(&b.name));
        let mut owner: HashMap<usize, &str> = HashMap::new();
        for (k, c) in counties.iter().enumerate() {
            if k > 0 && counties[k - 1].name == c.name {
                return Err(invalid("counties", format!("duplicate county {}", c.name)));
            }
            if c.cells.is_empty() {
                return Err(invalid(
                    format!("counties.{}", c.name),
                    "county has no cells",
                ));
            }
            if !(c.asset_density >= 0.0 && c.asset_density.is_finite()) {
                return Err(invalid(
                    format!("counties.{}.asset_density", c.name),
                    "must be non-negative",
                ));
            }
            for &cell in &c.cells {
                grid.check_cell(cell)?;
                if let Some(prev) = owner.insert(cell, &c.name) {
                    return Err(invalid(
                        "counties",
                        format!("cell {cell} belongs to both {prev} and {}", c.name),
                    ));
                }
            }
        }
        Ok(CountySet { counties })
    }

    pub fn get(&self, name: &str) -> Option<&County> {
        self.counties
            .binary_search_by(|c| c.name.as_str().cmp(name))
            .ok()
            .map(|k| &self.counties[k])
    }

    pub fn len(&self) -> usize {
        self.counties.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counties.is_empty()
    }

    /// Reads a fixture with header
    /// `county,cell_id,households,asset_density_km_per_km2`.
    pub fn load_fixture(path: impl AsRef<Path>, grid: &Grid) -> Result<Self> {
        let path = path.as_ref();
        let shown = path.display().to_string();
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_path(path)?;
        let expected = ["county", "cell_id", "households", "asset_density_km_per_km2"];
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(parse_err(
                &shown,
                1,
                format!("expected header {}", expected.join(",")),
            ));
        }
        let mut by_name: BTreeMap<String, County> = BTreeMap::new();
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line());
            let name = rec[0].to_string();
            let cell: usize = rec[1]
                .trim()
                .parse()
                .map_err(|_| parse_err(&shown, line, format!("bad cell_id {:?}", &rec[1])))?;
            let households: u64 = rec[2].trim().parse().map_err(|_| {
                parse_err(&shown, line, format!("bad households {:?}", &rec[2]))
            })?;
            let density: f64 = rec[3].trim().parse().map_err(|_| {
                parse_err(&shown, line, format!("bad asset density {:?}", &rec[3]))
            })?;
            let entry = by_name.entry(name.clone()).or_insert_with(|| County {
                name: name.clone(),
                cells: Vec::new(),
                households,
                asset_density: density,
            });
            if entry.households != households || entry.asset_density != density {
                return Err(parse_err(
                    &shown,
                    line,
                    format!("households/density for county {name} differ from earlier rows"),
                ));
            }
            entry.cells.push(cell);
        }
        CountySet::new(by_name.into_values().collect(), grid).map_err(|e| match e {
            Error::Invalid { field, message } => parse_err(shown, 0, format!("{field}: {message}")),
            other => other,
        })
    }
}

/// County outline used by [`assign_cells_to_counties`].
#[derive(Debug, Clone, PartialEq)]
pub struct CountyPolygon {
    pub name: String,
    /// Simple polygon, either orientation, without a repeated closing vertex.
    pub ring: Vec<Point>,
    pub households: u64,
    pub asset_density: f64,
}

/// Signed shoelace area.
pub fn polygon_area(ring: &[Point]) -> f64 {
    let n = ring.len();
    let mut s = 0.0;
    for k in 0..n {
        let (x0, y0) = ring[k];
        let (x1, y1) = ring[(k + 1) % n];
        s += x0 * y1 - x1 * y0;
    }
    0.5 * s
}

/// Area of `ring` inside the axis-aligned rectangle `[lo, hi]`, by
/// Sutherland–Hodgman clipping against the four rectangle edges.
pub fn clipped_area(ring: &[Point], lo: Point, hi: Point) -> f64 {
    let mut poly: Vec<Point> = ring.to_vec();
    // (axis, bound, keep_greater)
    let edges = [(0, lo.0, true), (0, hi.0, false), (1, lo.1, true), (1, hi.1, false)];
    for (axis, bound, keep_greater) in edges {
        if poly.is_empty() {
            break;
        }
        let coord = |p: &Point| if axis == 0 { p.0 } else { p.1 };
        let inside = |p: &Point| {
            if keep_greater {
                coord(p) >= bound
            } else {
                coord(p) <= bound
            }
        };
        let cross = |a: &Point, b: &Point| {
            let t = (bound - coord(a)) / (coord(b) - coord(a));
            if axis == 0 {
                (bound, a.1 + t * (b.1 - a.1))
            } else {
                (a.0 + t * (b.0 - a.0), bound)
            }
        };
        let mut out = Vec::with_capacity(poly.len() + 4);
        for k in 0..poly.len() {
            let cur = poly[k];
            let prev = poly[(k + poly.len() - 1) % poly.len()];
            match (inside(&prev), inside(&cur)) {
                (true, true) => out.push(cur),
                (true, false) => out.push(cross(&prev, &cur)),
                (false, true) => {
                    out.push(cross(&prev, &cur));
                    out.push(cur);
                }
                (false, false) => {}
            }
        }
        poly = out;
    }
    polygon_area(&poly).abs()
}

/// Assigns every cell to the county covering at least half of its area.
///
/// Exact 50/50 splits go to the lexicographically smaller name. Cells that no
/// county covers by half (open water, say) stay unassigned, and counties that
/// end up with no cells are left out of the result.
pub fn assign_cells_to_counties(grid: &Grid, polygons: &[CountyPolygon]) -> Result<CountySet> {
    const REL_TOL: f64 = 1e-9;
    let mut sorted: Vec<&CountyPolygon> = polygons.iter().collect();
    sorted.sort_by(|a, b| a.name.cmp(&b.name));
    let mut bboxes = Vec::with_capacity(sorted.len());
    for p in &sorted {
        if p.ring.len() < 3 || polygon_area(&p.ring).abs() <= 0.0 {
            return Err(invalid(
                format!("counties.{}.polygon", p.name),
                "degenerate polygon with zero area",
            ));
        }
        let (mut lo, mut hi) = ((f64::INFINITY, f64::INFINITY), (f64::NEG_INFINITY, f64::NEG_INFINITY));
        for &(x, y) in &p.ring {
            lo = (lo.0.min(x), lo.1.min(y));
            hi = (hi.0.max(x), hi.1.max(y));
        }
        bboxes.push((lo, hi));
    }

    let half = 0.5 * grid.cell_area();
    let mut cells: Vec<Vec<usize>> = vec![Vec::new(); sorted.len()];
    for cell in 0..grid.n_cells() {
        let (lo, hi) = grid.cell_bounds(cell);
        let mut best: Option<(usize, f64)> = None;
        for (k, p) in sorted.iter().enumerate() {
            let (blo, bhi) = bboxes[k];
            if bhi.0 <= lo.0 || blo.0 >= hi.0 || bhi.1 <= lo.1 || blo.1 >= hi.1 {
                continue;
            }
            let a = clipped_area(&p.ring, lo, hi);
            // Strictly larger wins; ties keep the earlier (smaller) name.
            if best.map_or(true, |(_, b)| a > b * (1.0 + REL_TOL)) {
                best = Some((k, a));
            }
        }
        if let Some((k, a)) = best {
            if a >= half * (1.0 - REL_TOL) {
                cells[k].push(cell);
            }
        }
    }

    let counties = sorted
        .iter()
        .zip(cells)
        .filter(|(_, c)| !c.is_empty())
        .map(|(p, c)| County {
            name: p.name.clone(),
            cells: c,
            households: p.households,
            asset_density: p.asset_density,
        })
        .collect();
    CountySet::new(counties, grid)
}

/// Arithmetic mean of `field` over the county's cells.
pub fn county_average(field: &[f64], county: &County) -> Result<f64> {
    if county.cells.is_empty() {
        return Err(invalid(
            format!("counties.{}", county.name),
            "county has no cells",
        ));
    }
    let mut cells = county.cells.clone();
    cells.sort_unstable();
    let mut sum = 0.0;
    for &c in &cells {
        let v = field.get(c).ok_or_else(|| {
            invalid("field", format!("no value for cell {c} of county {}", county.name))
        })?;
        sum += v;
    }
    Ok(sum / cells.len() as f64)
}
