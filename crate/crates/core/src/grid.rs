//! Discrete occupancy world: cell indices, occupancy states, local windows and
//! the conversions between metric positions and grid cells.
//!
//! Cells are half-open squares `[k·res, (k+1)·res)` so every in-extent point
//! maps to exactly one cell. `grid_to_world` returns the cell center.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("position ({x:.3}, {y:.3}) lies outside the grid extent")]
    OutOfBounds { x: f64, y: f64 },
    #[error("cell {0} is outside the grid")]
    CellOutOfBounds(GridIndex),
    #[error("window size {size} exceeds grid dimensions {width}x{height}")]
    WindowTooLarge { size: usize, width: usize, height: usize },
    #[error("window size {0} is below the minimum of 3")]
    WindowTooSmall(usize),
    #[error("invalid grid: {0}")]
    Invalid(String),
    #[error("map parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Column/row index of a grid cell. Serialized as an `[i, j]` pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "(i32, i32)", into = "(i32, i32)")]
pub struct GridIndex {
    pub i: i32,
    pub j: i32,
}

impl GridIndex {
    pub const fn new(i: i32, j: i32) -> Self {
        Self { i, j }
    }

    pub fn offset(self, di: i32, dj: i32) -> Self {
        Self::new(self.i + di, self.j + dj)
    }

    /// Chebyshev (8-connected hop) distance.
    pub fn chebyshev(self, other: GridIndex) -> i32 {
        (self.i - other.i).abs().max((self.j - other.j).abs())
    }

    /// Euclidean distance in cells.
    pub fn cell_distance(self, other: GridIndex) -> f64 {
        let di = f64::from(self.i - other.i);
        let dj = f64::from(self.j - other.j);
        di.hypot(dj)
    }

    pub fn is_adjacent8(self, other: GridIndex) -> bool {
        self != other && self.chebyshev(other) == 1
    }
}

impl From<(i32, i32)> for GridIndex {
    fn from((i, j): (i32, i32)) -> Self {
        Self::new(i, j)
    }
}

impl From<GridIndex> for (i32, i32) {
    fn from(g: GridIndex) -> Self {
        (g.i, g.j)
    }
}

impl fmt::Display for GridIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.i, self.j)
    }
}

/// The eight grid moves of the global planner, in tie-break order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GlobalAction {
    E,
    EN,
    N,
    NW,
    W,
    WS,
    S,
    SE,
}

impl GlobalAction {
    pub const ALL: [GlobalAction; 8] = [
        GlobalAction::E,
        GlobalAction::EN,
        GlobalAction::N,
        GlobalAction::NW,
        GlobalAction::W,
        GlobalAction::WS,
        GlobalAction::S,
        GlobalAction::SE,
    ];

    /// Unit offset `(di, dj)`; north is +j.
    pub const fn offset(self) -> (i32, i32) {
        match self {
            GlobalAction::E => (1, 0),
            GlobalAction::EN => (1, 1),
            GlobalAction::N => (0, 1),
            GlobalAction::NW => (-1, 1),
            GlobalAction::W => (-1, 0),
            GlobalAction::WS => (-1, -1),
            GlobalAction::S => (0, -1),
            GlobalAction::SE => (1, -1),
        }
    }

    pub fn apply(self, idx: GridIndex) -> GridIndex {
        let (di, dj) = self.offset();
        idx.offset(di, dj)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[repr(u8)]
pub enum Occupancy {
    #[default]
    Free = 0,
    Obstacle = 1,
    Human = 2,
}

impl Occupancy {
    pub fn is_free(self) -> bool {
        self == Occupancy::Free
    }
}

/// Dense row-major occupancy grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyGrid {
    width: usize,
    height: usize,
    resolution: f64,
    cells: Vec<Occupancy>,
}

/// Grid resolution used throughout the experiments (meters per cell).
pub const DEFAULT_RESOLUTION: f64 = 0.75;

impl OccupancyGrid {
    pub fn new(width: usize, height: usize, resolution: f64) -> Result<Self, GridError> {
        if width == 0 || height == 0 {
            return Err(GridError::Invalid(format!("empty grid {width}x{height}")));
        }
        if !(resolution > 0.0 && resolution.is_finite()) {
            return Err(GridError::Invalid(format!("resolution {resolution} must be positive")));
        }
        Ok(Self {
            width,
            height,
            resolution,
            cells: vec![Occupancy::Free; width * height],
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn cells(&self) -> &[Occupancy] {
        &self.cells
    }

    pub fn in_bounds(&self, idx: GridIndex) -> bool {
        idx.i >= 0 && idx.j >= 0 && (idx.i as usize) < self.width && (idx.j as usize) < self.height
    }

    fn offset_of(&self, idx: GridIndex) -> Option<usize> {
        self.in_bounds(idx)
            .then(|| idx.j as usize * self.width + idx.i as usize)
    }

    /// Occupancy at `idx`; `None` outside the grid.
    pub fn get(&self, idx: GridIndex) -> Option<Occupancy> {
        self.offset_of(idx).map(|o| self.cells[o])
    }

    pub fn is_free(&self, idx: GridIndex) -> bool {
        self.get(idx) == Some(Occupancy::Free)
    }

    /// In bounds and not a static obstacle. Human cells count as passable.
    pub fn is_traversable(&self, idx: GridIndex) -> bool {
        matches!(self.get(idx), Some(Occupancy::Free | Occupancy::Human))
    }

    pub fn set(&mut self, idx: GridIndex, occ: Occupancy) -> Result<(), GridError> {
        let o = self.offset_of(idx).ok_or(GridError::CellOutOfBounds(idx))?;
        self.cells[o] = occ;
        Ok(())
    }

    /// Copy of the grid with `humans` marked [`Occupancy::Human`]. Cells that
    /// are obstacles or out of bounds are skipped.
    pub fn with_humans(&self, humans: &[GridIndex]) -> OccupancyGrid {
        let mut out = self.clone();
        for &h in humans {
            if let Some(o) = out.offset_of(h) {
                if out.cells[o] == Occupancy::Free {
                    out.cells[o] = Occupancy::Human;
                }
            }
        }
        out
    }

    pub fn free_cells(&self) -> impl Iterator<Item = GridIndex> + '_ {
        self.indices().filter(move |&c| self.is_free(c))
    }

    pub fn indices(&self) -> impl Iterator<Item = GridIndex> {
        let (w, h) = (self.width as i32, self.height as i32);
        (0..h).flat_map(move |j| (0..w).map(move |i| GridIndex::new(i, j)))
    }

    pub fn world_to_grid(&self, x: f64, y: f64) -> Result<GridIndex, GridError> {
        let fi = (x / self.resolution).floor();
        let fj = (y / self.resolution).floor();
        if !(fi >= 0.0 && fj >= 0.0 && fi < self.width as f64 && fj < self.height as f64) {
            return Err(GridError::OutOfBounds { x, y });
        }
        Ok(GridIndex::new(fi as i32, fj as i32))
    }

    /// Center of the cell in meters.
    pub fn grid_to_world(&self, idx: GridIndex) -> (f64, f64) {
        (
            (f64::from(idx.i) + 0.5) * self.resolution,
            (f64::from(idx.j) + 0.5) * self.resolution,
        )
    }

    /// In-bounds 8-neighbors of `idx`, labeled with the move that reaches them.
    pub fn neighbors8(&self, idx: GridIndex) -> Vec<(GridIndex, GlobalAction)> {
        GlobalAction::ALL
            .iter()
            .map(|&a| (a.apply(idx), a))
            .filter(|(n, _)| self.in_bounds(*n))
            .collect()
    }

    /// A `size`×`size` window around `center`, shifted toward the interior
    /// near the borders so the full window always fits.
    pub fn local_window(&self, center: GridIndex, size: usize) -> Result<LocalWindow, GridError> {
        if size < 3 {
            return Err(GridError::WindowTooSmall(size));
        }
        if size > self.width || size > self.height {
            return Err(GridError::WindowTooLarge {
                size,
                width: self.width,
                height: self.height,
            });
        }
        if !self.in_bounds(center) {
            return Err(GridError::CellOutOfBounds(center));
        }
        let half = (size / 2) as i32;
        let oi = (center.i - half).clamp(0, (self.width - size) as i32);
        let oj = (center.j - half).clamp(0, (self.height - size) as i32);
        let origin = GridIndex::new(oi, oj);
        let mut view = Vec::with_capacity(size * size);
        for dj in 0..size as i32 {
            for di in 0..size as i32 {
                view.push(self.get(origin.offset(di, dj)).unwrap_or(Occupancy::Obstacle));
            }
        }
        Ok(LocalWindow { origin, size, view })
    }
}

impl FromStr for OccupancyGrid {
    type Err = GridError;

    /// Parses the text map format: a `width height resolution` header, then
    /// `height` rows of `width` characters (`.` free, `#` obstacle). The first
    /// row listed is the top row (largest `j`).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut lines = s.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (hline, header) = lines.next().ok_or(GridError::Parse {
            line: 1,
            msg: "missing header".into(),
        })?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        let bad_header = |msg: &str| GridError::Parse {
            line: hline + 1,
            msg: msg.to_string(),
        };
        if parts.len() != 3 {
            return Err(bad_header("expected `width height resolution`"));
        }
        let width: usize = parts[0].parse().map_err(|_| bad_header("bad width"))?;
        let height: usize = parts[1].parse().map_err(|_| bad_header("bad height"))?;
        let resolution: f64 = parts[2].parse().map_err(|_| bad_header("bad resolution"))?;
        let mut grid = OccupancyGrid::new(width, height, resolution)
            .map_err(|e| bad_header(&e.to_string()))?;

        let mut rows = 0usize;
        for (lineno, line) in lines {
            if rows == height {
                return Err(GridError::Parse {
                    line: lineno + 1,
                    msg: format!("more than {height} rows"),
                });
            }
            let row: Vec<char> = line.trim_end().chars().collect();
            if row.len() != width {
                return Err(GridError::Parse {
                    line: lineno + 1,
                    msg: format!("expected {width} cells, found {}", row.len()),
                });
            }
            let j = (height - 1 - rows) as i32;
            for (i, ch) in row.into_iter().enumerate() {
                let occ = match ch {
                    '.' => Occupancy::Free,
                    '#' => Occupancy::Obstacle,
                    other => {
                        return Err(GridError::Parse {
                            line: lineno + 1,
                            msg: format!("invalid cell character {other:?}"),
                        })
                    }
                };
                grid.cells[j as usize * width + i] = occ;
            }
            rows += 1;
        }
        if rows != height {
            return Err(GridError::Parse {
                line: s.lines().count(),
                msg: format!("expected {height} rows, found {rows}"),
            });
        }
        Ok(grid)
    }
}

impl fmt::Display for OccupancyGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} {} {}", self.width, self.height, self.resolution)?;
        for j in (0..self.height).rev() {
            for i in 0..self.width {
                let c = match self.cells[j * self.width + i] {
                    Occupancy::Free => '.',
                    Occupancy::Obstacle => '#',
                    Occupancy::Human => 'H',
                };
                write!(f, "{c}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// Square sub-grid around the robot.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalWindow {
    pub origin: GridIndex,
    pub size: usize,
    pub view: Vec<Occupancy>,
}

impl LocalWindow {
    pub fn contains(&self, idx: GridIndex) -> bool {
        let s = self.size as i32;
        idx.i >= self.origin.i
            && idx.j >= self.origin.j
            && idx.i < self.origin.i + s
            && idx.j < self.origin.j + s
    }

    /// Occupancy of a global cell inside the window.
    pub fn get(&self, idx: GridIndex) -> Option<Occupancy> {
        self.contains(idx).then(|| {
            let li = (idx.i - self.origin.i) as usize;
            let lj = (idx.j - self.origin.j) as usize;
            self.view[lj * self.size + li]
        })
    }

    /// Nearest in-window cell.
    pub fn clamp(&self, idx: GridIndex) -> GridIndex {
        let s = self.size as i32;
        GridIndex::new(
            idx.i.clamp(self.origin.i, self.origin.i + s - 1),
            idx.j.clamp(self.origin.j, self.origin.j + s - 1),
        )
    }
}
