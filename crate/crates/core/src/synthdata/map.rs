use rand::Rng;

use crate::error::{Error, Result};

/// Number of whole-layout retries before building generation gives up.
pub const PLACEMENT_ATTEMPTS: usize = 1000;

/// Geometry and propagation parameters of one synthetic map family.
#[derive(Debug, Clone, PartialEq)]
pub struct MapSpec {
    pub height: usize,
    pub width: usize,
    pub meters_per_cell: f64,
    pub n_buildings: usize,
    /// Inclusive range of building side lengths, in cells.
    pub building_size_range: (usize, usize),
    /// Pathloss at the reference distance, dB.
    pub pl0_db: f64,
    pub path_exponent: f64,
    /// Extra loss per building cell crossed by the line of sight, dB.
    pub wall_loss_db: f64,
    /// Loss that maps to normalized value 0.
    pub max_pl_db: f64,
    /// Reference distance in cells; shorter distances are clamped to it.
    pub reference_distance: f64,
}

impl Default for MapSpec {
    fn default() -> Self {
        Self {
            height: 16,
            width: 16,
            meters_per_cell: 4.0,
            n_buildings: 5,
            building_size_range: (2, 4),
            pl0_db: 40.0,
            path_exponent: 3.0,
            wall_loss_db: 6.0,
            max_pl_db: 110.0,
            reference_distance: 1.0,
        }
    }
}

impl MapSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(format!("map spec: {msg}")));
        if self.height < 8 || self.width < 8 {
            return bad("height and width must be at least 8");
        }
        if self.height > u16::MAX as usize || self.width > u16::MAX as usize {
            return bad("height and width must fit in 16 bits");
        }
        if !(self.meters_per_cell > 0.0) {
            return bad("meters_per_cell must be positive");
        }
        if !(self.path_exponent > 0.0) {
            return bad("path_exponent must be positive");
        }
        if !(self.wall_loss_db >= 0.0) {
            return bad("wall_loss_db must be non-negative");
        }
        if !(self.max_pl_db > self.pl0_db) {
            return bad("max_pl_db must exceed pl0_db");
        }
        if !(self.reference_distance > 0.0) {
            return bad("reference_distance must be positive");
        }
        let (lo, hi) = self.building_size_range;
        if lo == 0 || lo > hi {
            return bad("building_size_range must satisfy 1 <= min <= max");
        }
        Ok(())
    }

    /// Side length of the square area in meters along x (columns).
    pub fn extent_x_m(&self) -> f64 {
        self.width as f64 * self.meters_per_cell
    }

    pub fn extent_y_m(&self) -> f64 {
        self.height as f64 * self.meters_per_cell
    }
}

/// Row-major occupancy grid, 1 = building.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BuildingMap {
    pub height: usize,
    pub width: usize,
    pub cells: Vec<u8>,
}

impl BuildingMap {
    pub fn empty(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            cells: vec![0; height * width],
        }
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.cells[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, v: u8) {
        self.cells[row * self.width + col] = v;
    }

    pub fn occupied(&self) -> usize {
        self.cells.iter().filter(|&&c| c != 0).count()
    }

    pub fn free_cells(&self) -> Vec<(usize, usize)> {
        (0..self.height)
            .flat_map(|r| (0..self.width).map(move |c| (r, c)))
            .filter(|&(r, c)| self.get(r, c) == 0)
            .collect()
    }
}

/// Places `n_buildings` axis-aligned rectangles (overlap allowed). A layout
/// that leaves no free cell is redrawn, up to [`PLACEMENT_ATTEMPTS`] times.
pub fn generate_building_map<R: Rng + ?Sized>(rng: &mut R, spec: &MapSpec) -> Result<BuildingMap> {
    spec.validate()?;
    let (lo, hi) = spec.building_size_range;
    for _ in 0..PLACEMENT_ATTEMPTS {
        let mut map = BuildingMap::empty(spec.height, spec.width);
        for _ in 0..spec.n_buildings {
            let bh = rng.random_range(lo..=hi).min(spec.height);
            let bw = rng.random_range(lo..=hi).min(spec.width);
            let r0 = rng.random_range(0..=spec.height - bh);
            let c0 = rng.random_range(0..=spec.width - bw);
            for r in r0..r0 + bh {
                for c in c0..c0 + bw {
                    map.set(r, c, 1);
                }
            }
        }
        if map.occupied() < map.cells.len() {
            return Ok(map);
        }
    }
    Err(Error::NoFreeCell {
        attempts: PLACEMENT_ATTEMPTS,
    })
}

/// Uniformly random free cell.
pub fn place_transmitter<R: Rng + ?Sized>(rng: &mut R, building: &BuildingMap) -> Result<(usize, usize)> {
    let free = building.free_cells();
    if free.is_empty() {
        return Err(Error::NoFreeCell { attempts: 0 });
    }
    Ok(free[rng.random_range(0..free.len())])
}

/// Cells on the Bresenham line from `a` to `b`, both endpoints included.
pub fn line_cells(a: (usize, usize), b: (usize, usize)) -> Vec<(usize, usize)> {
    let (mut r, mut c) = (a.0 as i64, a.1 as i64);
    let (r1, c1) = (b.0 as i64, b.1 as i64);
    let dr = (r1 - r).abs();
    let dc = -(c1 - c).abs();
    let sr = if r < r1 { 1 } else { -1 };
    let sc = if c < c1 { 1 } else { -1 };
    let mut err = dr + dc;
    let mut out = Vec::with_capacity((dr.max(-dc) + 1) as usize);
    loop {
        out.push((r as usize, c as usize));
        if r == r1 && c == c1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dc {
            err += dc;
            r += sr;
        }
        if e2 <= dr {
            err += dr;
            c += sc;
        }
    }
    out
}

/// Building cells strictly between `tx` and `cell` on their Bresenham line.
pub fn walls_between(building: &BuildingMap, tx: (usize, usize), cell: (usize, usize)) -> usize {
    let line = line_cells(tx, cell);
    if line.len() <= 2 {
        return 0;
    }
    line[1..line.len() - 1]
        .iter()
        .filter(|&&(r, c)| building.get(r, c) != 0)
        .count()
}

/// Unnormalized loss in dB from `tx` to `cell`.
pub fn raw_loss_db(building: &BuildingMap, tx: (usize, usize), cell: (usize, usize), spec: &MapSpec) -> f64 {
    let dr = cell.0 as f64 - tx.0 as f64;
    let dc = cell.1 as f64 - tx.1 as f64;
    let d = (dr * dr + dc * dc).sqrt().max(spec.reference_distance);
    spec.pl0_db
        + 10.0 * spec.path_exponent * (d / spec.reference_distance).log10()
        + spec.wall_loss_db * walls_between(building, tx, cell) as f64
}

/// Normalized received-power map in `[0, 1]`; the transmitter cell is 1.
///
/// Each cell's loss is the log-distance term plus `wall_loss_db` for every
/// building cell strictly between the transmitter and the cell on the
/// Bresenham line joining them. The loss is mapped to
/// `clamp(1 - (L - pl0) / (max_pl - pl0), 0, 1)`.
pub fn compute_pathloss(building: &BuildingMap, tx: (usize, usize), spec: &MapSpec) -> Result<Vec<f64>> {
    if tx.0 >= building.height || tx.1 >= building.width {
        return Err(Error::InvalidArgument(format!("transmitter {tx:?} out of bounds")));
    }
    if building.get(tx.0, tx.1) != 0 {
        return Err(Error::InvalidArgument(format!("transmitter {tx:?} inside a building")));
    }
    let span = spec.max_pl_db - spec.pl0_db;
    let mut out = Vec::with_capacity(building.height * building.width);
    for r in 0..building.height {
        for c in 0..building.width {
            let v = if (r, c) == tx {
                1.0
            } else {
                let l = raw_loss_db(building, tx, (r, c), spec);
                (1.0 - (l - spec.pl0_db) / span).clamp(0.0, 1.0)
            };
            out.push(v);
        }
    }
    Ok(out)
}
