//! Plain-text maze layouts and exact point-vs-wall collision.
//!
//! Layout files use one character per cell: `#` wall, `.` free, `S` start
//! region, `G` goal region. Cell `(row, col)` covers
//! `[col·s, (col+1)·s] × [row·s, (row+1)·s]` for cell size `s`; anything
//! outside the grid counts as wall.

use std::collections::VecDeque;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Cell {
    Wall,
    Free,
    Start,
    Goal,
}

/// Axis-aligned rectangle `[x0, x1] × [y0, y1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub fn strictly_contains(&self, x: f64, y: f64) -> bool {
        x > self.x0 && x < self.x1 && y > self.y0 && y < self.y1
    }
}

pub type CellIndex = (usize, usize);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridLayout {
    rows: usize,
    cols: usize,
    cells: Vec<Cell>,
    cell_size: f64,
}

impl GridLayout {
    pub fn parse(text: &str, cell_size: f64) -> Result<Self> {
        Self::parse_named(text, cell_size, Path::new("<layout>"))
    }

    pub fn load(path: &Path, cell_size: f64) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse_named(&text, cell_size, path)
    }

    fn parse_named(text: &str, cell_size: f64, path: &Path) -> Result<Self> {
        let err = |line: usize, msg: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            msg,
        };
        if !(cell_size > 0.0) {
            return Err(err(0, format!("cell size must be positive, got {cell_size}")));
        }
        let lines: Vec<&str> = text.lines().map(str::trim_end).filter(|l| !l.is_empty()).collect();
        let cols = lines.first().map(|l| l.chars().count()).unwrap_or(0);
        if cols == 0 {
            return Err(err(1, "empty layout".into()));
        }
        let mut cells = Vec::with_capacity(lines.len() * cols);
        for (i, line) in lines.iter().enumerate() {
            if line.chars().count() != cols {
                return Err(err(i + 1, format!("row has {} cells, expected {cols}", line.chars().count())));
            }
            for ch in line.chars() {
                cells.push(match ch {
                    '#' => Cell::Wall,
                    '.' => Cell::Free,
                    'S' => Cell::Start,
                    'G' => Cell::Goal,
                    other => return Err(err(i + 1, format!("unknown cell character `{other}`"))),
                });
            }
        }
        let layout = Self {
            rows: lines.len(),
            cols,
            cells,
            cell_size,
        };
        if layout.free_cells().is_empty() {
            return Err(err(1, "layout has no free cells".into()));
        }
        Ok(layout)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn cell(&self, r: usize, c: usize) -> Cell {
        self.cells[r * self.cols + c]
    }

    fn is_wall(&self, r: isize, c: isize) -> bool {
        if r < 0 || c < 0 || r as usize >= self.rows || c as usize >= self.cols {
            return true;
        }
        self.cell(r as usize, c as usize) == Cell::Wall
    }

    pub fn free_cells(&self) -> Vec<CellIndex> {
        self.cells_where(|c| c != Cell::Wall)
    }

    /// `S` cells, or every free cell when the layout marks none.
    pub fn start_cells(&self) -> Vec<CellIndex> {
        let s = self.cells_where(|c| c == Cell::Start);
        if s.is_empty() {
            self.free_cells()
        } else {
            s
        }
    }

    /// `G` cells, or every free cell when the layout marks none.
    pub fn goal_cells(&self) -> Vec<CellIndex> {
        let g = self.cells_where(|c| c == Cell::Goal);
        if g.is_empty() {
            self.free_cells()
        } else {
            g
        }
    }

    fn cells_where(&self, pred: impl Fn(Cell) -> bool) -> Vec<CellIndex> {
        (0..self.rows)
            .flat_map(|r| (0..self.cols).map(move |c| (r, c)))
            .filter(|&(r, c)| pred(self.cell(r, c)))
            .collect()
    }

    pub fn cell_center(&self, (r, c): CellIndex) -> [f64; 2] {
        [(c as f64 + 0.5) * self.cell_size, (r as f64 + 0.5) * self.cell_size]
    }

    /// Cell containing `p` (points on a face belong to the lower-index cell
    /// only if the upper one is a wall).
    pub fn cell_of(&self, p: [f64; 2]) -> Option<CellIndex> {
        let candidates = |v: f64| -> Vec<isize> {
            let f = v / self.cell_size;
            if f == f.floor() {
                vec![f as isize, f as isize - 1]
            } else {
                vec![f.floor() as isize]
            }
        };
        for r in candidates(p[1]) {
            for c in candidates(p[0]) {
                if !self.is_wall(r, c) {
                    return Some((r as usize, c as usize));
                }
            }
        }
        None
    }

    /// Indices of the one or two grid lines' cells touching coordinate `v`.
    fn touching(&self, v: f64) -> [Option<isize>; 2] {
        let f = v / self.cell_size;
        if f == f.floor() {
            [Some(f as isize - 1), Some(f as isize)]
        } else {
            [Some(f.floor() as isize), None]
        }
    }

    /// True when every cell whose closure contains `p` is a wall, i.e. `p`
    /// lies in the interior of the wall region.
    pub fn in_wall_interior(&self, p: [f64; 2]) -> bool {
        let rows = self.touching(p[1]);
        let cols = self.touching(p[0]);
        rows.iter()
            .flatten()
            .all(|&r| cols.iter().flatten().all(|&c| self.is_wall(r, c)))
    }

    fn column_blocked(&self, c: isize, y: f64) -> bool {
        self.touching(y).iter().flatten().all(|&r| self.is_wall(r, c))
    }

    fn row_blocked(&self, r: isize, x: f64) -> bool {
        self.touching(x).iter().flatten().all(|&c| self.is_wall(r, c))
    }

    /// Moves from `from` toward `to` along one axis, stopping at the face of
    /// the first blocked cell line. Returns the final coordinate and whether
    /// motion was blocked.
    fn sweep(&self, from: f64, to: f64, blocked: impl Fn(isize) -> bool) -> (f64, bool) {
        let s = self.cell_size;
        let f = from / s;
        let on_line = f == f.floor();
        if to > from {
            let mut c = if on_line { f as isize } else { f.floor() as isize + 1 };
            loop {
                let face = c as f64 * s;
                if face >= to {
                    return (to, false);
                }
                if blocked(c) {
                    return (face, true);
                }
                c += 1;
            }
        } else if to < from {
            let mut c = if on_line { f as isize - 1 } else { f.floor() as isize - 1 };
            loop {
                let face = (c + 1) as f64 * s;
                if face <= to {
                    return (to, false);
                }
                if blocked(c) {
                    return (face, true);
                }
                c -= 1;
            }
        } else {
            (from, false)
        }
    }

    pub fn sweep_x(&self, x0: f64, x1: f64, y: f64) -> (f64, bool) {
        self.sweep(x0, x1, |c| self.column_blocked(c, y))
    }

    pub fn sweep_y(&self, y0: f64, y1: f64, x: f64) -> (f64, bool) {
        self.sweep(y0, y1, |r| self.row_blocked(r, x))
    }

    /// Wall cells merged into maximal horizontal runs.
    pub fn wall_rects(&self) -> Vec<Rect> {
        let s = self.cell_size;
        let mut out = Vec::new();
        for r in 0..self.rows {
            let mut c = 0;
            while c < self.cols {
                if self.cell(r, c) == Cell::Wall {
                    let start = c;
                    while c < self.cols && self.cell(r, c) == Cell::Wall {
                        c += 1;
                    }
                    out.push(Rect {
                        x0: start as f64 * s,
                        y0: r as f64 * s,
                        x1: c as f64 * s,
                        y1: (r + 1) as f64 * s,
                    });
                } else {
                    c += 1;
                }
            }
        }
        out
    }

    /// Shortest 4-connected path length (in length units) from `from` to
    /// every cell; walls and unreachable cells are `None`.
    pub fn geodesic_from(&self, from: CellIndex) -> Vec<Option<f64>> {
        let mut dist: Vec<Option<usize>> = vec![None; self.rows * self.cols];
        if self.cell(from.0, from.1) == Cell::Wall {
            return vec![None; self.rows * self.cols];
        }
        let mut queue = VecDeque::from([from]);
        dist[from.0 * self.cols + from.1] = Some(0usize);
        while let Some((r, c)) = queue.pop_front() {
            let d = dist[r * self.cols + c].expect("visited");
            let nbrs = [(r as isize - 1, c as isize), (r as isize + 1, c as isize), (r as isize, c as isize - 1), (r as isize, c as isize + 1)];
            for (nr, nc) in nbrs {
                if self.is_wall(nr, nc) {
                    continue;
                }
                let idx = nr as usize * self.cols + nc as usize;
                if dist[idx].is_none() {
                    dist[idx] = Some(d + 1);
                    queue.push_back((nr as usize, nc as usize));
                }
            }
        }
        dist.into_iter().map(|d| d.map(|v| v as f64 * self.cell_size)).collect()
    }

    pub fn separation(&self, a: CellIndex, b: CellIndex) -> Option<f64> {
        self.geodesic_from(a)[b.0 * self.cols + b.1]
    }

    pub fn extent(&self) -> [f64; 2] {
        [self.cols as f64 * self.cell_size, self.rows as f64 * self.cell_size]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const U: &str = "#####\n#S..#\n###.#\n#GGG#\n#####\n";

    #[test]
    fn parses_and_classifies_cells() {
        let g = GridLayout::parse(U, 1.0).unwrap();
        assert_eq!((g.rows(), g.cols()), (5, 5));
        assert_eq!(g.start_cells(), vec![(1, 1)]);
        assert_eq!(g.goal_cells(), vec![(3, 1), (3, 2), (3, 3)]);
        assert_eq!(g.free_cells().len(), 7);
    }

    #[test]
    fn rejects_ragged_and_unknown() {
        assert!(GridLayout::parse("###\n#.\n###", 1.0).is_err());
        assert!(GridLayout::parse("###\n#x#\n###", 1.0).is_err());
        assert!(GridLayout::parse("###\n###", 1.0).is_err());
    }

    #[test]
    fn u_maze_geodesics_run_four_five_six_to_far_side() {
        let g = GridLayout::parse(U, 1.0).unwrap();
        let d: Vec<f64> = g.goal_cells().iter().map(|&c| g.separation((1, 1), c).unwrap()).collect();
        assert_eq!(d, vec![6.0, 5.0, 4.0]);
    }

    #[test]
    fn sweep_stops_at_wall_face() {
        let g = GridLayout::parse(U, 1.0).unwrap();
        // moving right along row 1 hits the border wall at x = 4
        assert_eq!(g.sweep_x(3.5, 4.3, 1.5), (4.0, true));
        // the wall between rows 1 and 3 spans columns 1..=2
        assert_eq!(g.sweep_y(1.5, 2.2, 1.5), (2.0, true));
        // column 3 is open downwards
        assert_eq!(g.sweep_y(1.5, 2.2, 3.5), (2.2, false));
        // sliding along the top face of the inner wall is not blocked by the seam between cells
        assert_eq!(g.sweep_x(1.2, 2.6, 2.0), (2.6, false));
    }

    #[test]
    fn interior_test_handles_seams() {
        let g = GridLayout::parse(U, 1.0).unwrap();
        assert!(g.in_wall_interior([2.0, 2.5])); // seam between two wall cells
        assert!(!g.in_wall_interior([2.0, 2.0])); // on the wall's face
        assert!(!g.in_wall_interior([3.0, 2.5])); // wall cell beside open column
    }

    #[test]
    fn bundled_layouts_are_connected() {
        for text in [
            include_str!("../../mazes/point_reach.txt"),
            include_str!("../../mazes/u_maze.txt"),
            include_str!("../../mazes/u4_maze.txt"),
            include_str!("../../mazes/u5_maze.txt"),
            include_str!("../../mazes/big_maze.txt"),
        ] {
            let g = GridLayout::parse(text, 1.0).unwrap();
            let start = g.start_cells()[0];
            let d = g.geodesic_from(start);
            for (r, c) in g.free_cells() {
                assert!(d[r * g.cols() + c].is_some(), "cell ({r},{c}) unreachable");
            }
        }
    }
}
