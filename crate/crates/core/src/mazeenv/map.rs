use std::fmt;

/// One grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cell {
    Free,
    /// Wall with a color id in `0..=6`.
    Wall(u8),
}

impl Cell {
    pub fn is_wall(self) -> bool {
        matches!(self, Cell::Wall(_))
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MapError {
    #[error("map text is empty")]
    Empty,
    #[error("row {row} has {got} cells, expected {expected}")]
    NonRectangular {
        row: usize,
        expected: usize,
        got: usize,
    },
    #[error("unknown character {ch:?} at row {row}, column {col}")]
    UnknownChar { ch: char, row: usize, col: usize },
    #[error("map has no goal cell 'G'")]
    MissingGoal,
    #[error("map has more than one goal cell")]
    MultipleGoals,
    #[error("map has no start cell 'S'")]
    NoStart,
    #[error("boundary cell at row {row}, column {col} is not a wall")]
    OpenBoundary { row: usize, col: usize },
    #[error("bad header line {0:?}")]
    BadHeader(String),
}

/// Immutable grid world. Cell `(col, row)` covers
/// `[col*cell_size, (col+1)*cell_size] x [row*cell_size, (row+1)*cell_size]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MazeMap {
    pub name: String,
    width: usize,
    height: usize,
    cells: Vec<Cell>,
    pub cell_size: f64,
    start_cells: Vec<(usize, usize)>,
    goal_cell: (usize, usize),
}

impl MazeMap {
    /// Parses the text map format: optional `key = value` header lines
    /// (`cellsize`, `name`), then one line per grid row using `#` (wall color 0),
    /// `A`..`F` (wall colors 1-6), `.` (free), `S` (start) and `G` (goal).
    pub fn parse(text: &str) -> Result<Self, MapError> {
        let mut name = String::from("unnamed");
        let mut cell_size = 1.0;
        let mut rows: Vec<&str> = Vec::new();
        for line in text.lines() {
            let trimmed = line.trim_end();
            if trimmed.trim().is_empty() {
                continue;
            }
            if rows.is_empty() && trimmed.contains('=') {
                let (k, v) = trimmed
                    .split_once('=')
                    .ok_or_else(|| MapError::BadHeader(trimmed.into()))?;
                match k.trim() {
                    "cellsize" | "cell_size" => {
                        cell_size = v
                            .trim()
                            .parse::<f64>()
                            .ok()
                            .filter(|c| *c > 0.0 && c.is_finite())
                            .ok_or_else(|| MapError::BadHeader(trimmed.into()))?;
                    }
                    "name" => name = v.trim().to_string(),
                    _ => return Err(MapError::BadHeader(trimmed.into())),
                }
                continue;
            }
            rows.push(trimmed.trim_start());
        }
        if rows.is_empty() {
            return Err(MapError::Empty);
        }
        let width = rows[0].chars().count();
        let height = rows.len();
        let mut cells = Vec::with_capacity(width * height);
        let mut start_cells = Vec::new();
        let mut goal = None;
        for (row, line) in rows.iter().enumerate() {
            let got = line.chars().count();
            if got != width {
                return Err(MapError::NonRectangular {
                    row,
                    expected: width,
                    got,
                });
            }
            for (col, ch) in line.chars().enumerate() {
                let cell = match ch {
                    '#' => Cell::Wall(0),
                    'A'..='F' => Cell::Wall(ch as u8 - b'A' + 1),
                    '.' => Cell::Free,
                    'S' => {
                        start_cells.push((col, row));
                        Cell::Free
                    }
                    'G' => {
                        if goal.replace((col, row)).is_some() {
                            return Err(MapError::MultipleGoals);
                        }
                        Cell::Free
                    }
                    _ => return Err(MapError::UnknownChar { ch, row, col }),
                };
                cells.push(cell);
            }
        }
        let goal_cell = goal.ok_or(MapError::MissingGoal)?;
        if start_cells.is_empty() {
            return Err(MapError::NoStart);
        }
        for row in 0..height {
            for col in 0..width {
                let boundary = row == 0 || col == 0 || row + 1 == height || col + 1 == width;
                if boundary && !cells[row * width + col].is_wall() {
                    return Err(MapError::OpenBoundary { row, col });
                }
            }
        }
        Ok(Self {
            name,
            width,
            height,
            cells,
            cell_size,
            start_cells,
            goal_cell,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Cell at `(col, row)`; anything outside the grid counts as a wall.
    pub fn cell(&self, col: i64, row: i64) -> Cell {
        if col < 0 || row < 0 || col >= self.width as i64 || row >= self.height as i64 {
            return Cell::Wall(0);
        }
        self.cells[row as usize * self.width + col as usize]
    }

    pub fn is_free(&self, col: i64, row: i64) -> bool {
        self.cell(col, row) == Cell::Free
    }

    pub fn start_cells(&self) -> &[(usize, usize)] {
        &self.start_cells
    }

    pub fn goal_cell(&self) -> (usize, usize) {
        self.goal_cell
    }

    /// World coordinates of a cell center.
    pub fn cell_center(&self, (col, row): (usize, usize)) -> (f64, f64) {
        (
            (col as f64 + 0.5) * self.cell_size,
            (row as f64 + 0.5) * self.cell_size,
        )
    }

    pub fn goal_point(&self) -> (f64, f64) {
        self.cell_center(self.goal_cell)
    }

    /// Grid cell containing a world point.
    pub fn cell_of(&self, x: f64, y: f64) -> (i64, i64) {
        (
            (x / self.cell_size).floor() as i64,
            (y / self.cell_size).floor() as i64,
        )
    }

    pub fn free_cells(&self) -> Vec<(usize, usize)> {
        (0..self.height)
            .flat_map(|r| (0..self.width).map(move |c| (c, r)))
            .filter(|&(c, r)| self.cells[r * self.width + c] == Cell::Free)
            .collect()
    }

    pub fn wall_count(&self) -> usize {
        self.cells.iter().filter(|c| c.is_wall()).count()
    }

    /// World-space extent `(width_m, height_m)`.
    pub fn extent(&self) -> (f64, f64) {
        (
            self.width as f64 * self.cell_size,
            self.height as f64 * self.cell_size,
        )
    }

    pub fn diagonal(&self) -> f64 {
        let (w, h) = self.extent();
        w.hypot(h)
    }

    /// Does a disc of `radius` centered at `(x, y)` touch any wall cell?
    pub fn disc_hits_wall(&self, x: f64, y: f64, radius: f64) -> bool {
        const CONTACT_EPS: f64 = 1e-9;
        let cs = self.cell_size;
        let (c0, r0) = self.cell_of(x - radius, y - radius);
        let (c1, r1) = self.cell_of(x + radius, y + radius);
        for row in r0..=r1 {
            for col in c0..=c1 {
                if !self.cell(col, row).is_wall() {
                    continue;
                }
                let (lx, ly) = (col as f64 * cs, row as f64 * cs);
                let nx = x.clamp(lx, lx + cs);
                let ny = y.clamp(ly, ly + cs);
                if (x - nx).hypot(y - ny) <= radius + CONTACT_EPS {
                    return true;
                }
            }
        }
        false
    }

    /// Length in meters of the shortest 4-connected path of free cells from
    /// `from` to the goal, measured between cell centers.
    pub fn shortest_path_length(&self, from: (usize, usize)) -> Option<f64> {
        let idx = |(c, r): (usize, usize)| r * self.width + c;
        let mut dist = vec![usize::MAX; self.cells.len()];
        let mut queue = std::collections::VecDeque::new();
        dist[idx(from)] = 0;
        queue.push_back(from);
        while let Some((c, r)) = queue.pop_front() {
            if (c, r) == self.goal_cell {
                return Some(dist[idx((c, r))] as f64 * self.cell_size);
            }
            let d = dist[idx((c, r))];
            for (dc, dr) in [(1i64, 0i64), (-1, 0), (0, 1), (0, -1)] {
                let (nc, nr) = (c as i64 + dc, r as i64 + dr);
                if self.is_free(nc, nr) {
                    let n = (nc as usize, nr as usize);
                    if dist[idx(n)] == usize::MAX {
                        dist[idx(n)] = d + 1;
                        queue.push_back(n);
                    }
                }
            }
        }
        None
    }
}

impl fmt::Display for MazeMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "name = {}", self.name)?;
        writeln!(f, "cellsize = {}", self.cell_size)?;
        for row in 0..self.height {
            for col in 0..self.width {
                let ch = if (col, row) == self.goal_cell {
                    'G'
                } else if self.start_cells.contains(&(col, row)) {
                    'S'
                } else {
                    match self.cells[row * self.width + col] {
                        Cell::Free => '.',
                        Cell::Wall(0) => '#',
                        Cell::Wall(k) => (b'A' + k - 1) as char,
                    }
                };
                write!(f, "{ch}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_goal() {
        assert_eq!(MazeMap::parse("###\n#S#\n###"), Err(MapError::MissingGoal));
    }

    #[test]
    fn counts_free_cells() {
        let m = MazeMap::parse("#####\n#S..#\n#...#\n#..G#\n#####").unwrap();
        assert_eq!(m.free_cells().len(), 9);
        assert_eq!(m.wall_count(), 16);
        assert_eq!(m.start_cells(), &[(1, 1)]);
        assert_eq!(m.goal_cell(), (3, 3));
    }

    #[test]
    fn distinct_errors() {
        assert!(matches!(
            MazeMap::parse("####\n#SG\n####"),
            Err(MapError::NonRectangular { row: 1, .. })
        ));
        assert!(matches!(
            MazeMap::parse("####\n#SX#\n#G.#\n####"),
            Err(MapError::UnknownChar { ch: 'X', .. })
        ));
        assert_eq!(
            MazeMap::parse("####\n#.G#\n####"),
            Err(MapError::NoStart)
        );
        assert!(matches!(
            MazeMap::parse("####\n#SG.\n####"),
            Err(MapError::OpenBoundary { row: 1, col: 3 })
        ));
        assert_eq!(MazeMap::parse("\n\n"), Err(MapError::Empty));
        assert!(matches!(
            MazeMap::parse("colour = red\n###\n#SG#\n###"),
            Err(MapError::BadHeader(_))
        ));
    }

    #[test]
    fn header_and_colors() {
        let m = MazeMap::parse("cellsize = 0.5\nname = tiny\n#AB#\n#SG#\n#CF#\n####").unwrap();
        assert_eq!(m.cell_size, 0.5);
        assert_eq!(m.name, "tiny");
        assert_eq!(m.cell(1, 0), Cell::Wall(1));
        assert_eq!(m.cell(2, 2), Cell::Wall(6));
        assert_eq!(m.goal_point(), (1.25, 0.75));
        let again = MazeMap::parse(&m.to_string()).unwrap();
        assert_eq!(again, m);
    }

    #[test]
    fn bfs_path_length() {
        let m = MazeMap::parse("#####\n#S#G#\n#.#.#\n#...#\n#####").unwrap();
        assert_eq!(m.shortest_path_length((1, 1)), Some(6.0));
    }

    #[test]
    fn disc_contact() {
        let m = MazeMap::parse("#####\n#S..#\n#..G#\n#####").unwrap();
        assert!(!m.disc_hits_wall(2.5, 1.5, 0.15));
        assert!(m.disc_hits_wall(1.1, 1.5, 0.15));
        assert!(m.disc_hits_wall(3.85, 1.5, 0.15));
    }
}
