//! Conforming triangular meshes with full cell/edge topology.
//!
//! Local edge `l` of a cell is the edge opposite its vertex `l`, traversed
//! from vertex `l+1` to vertex `l+2` (counterclockwise). Global edges are
//! stored as `(lo, hi)` vertex pairs; edge traces are parameterized from
//! `lo` to `hi`.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub type Point = [f64; 2];

/// Axis-aligned rectangle `[x0, x1] x [y0, y1]`.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub const UNIT: Rect = Rect {
        x0: 0.0,
        y0: 0.0,
        x1: 1.0,
        y1: 1.0,
    };

    pub fn area(&self) -> f64 {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }
}

#[derive(Clone, Debug)]
pub struct Mesh {
    vertices: Vec<Point>,
    vertex_markers: Vec<i32>,
    cells: Vec<[usize; 3]>,
    edges: Vec<[usize; 2]>,
    /// Adjacent cells per edge; the second entry is `usize::MAX` on the boundary.
    edge_cells: Vec<[usize; 2]>,
    cell_edges: Vec<[usize; 3]>,
    /// +1 when local edge `l` runs `lo -> hi`, -1 otherwise.
    cell_edge_signs: Vec<[f64; 3]>,
    cell_normals: Vec<[Point; 3]>,
    cell_areas: Vec<f64>,
    cell_diameters: Vec<f64>,
    edge_lengths: Vec<f64>,
}

const NO_CELL: usize = usize::MAX;

/// Summary counts of a mesh.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TopologyReport {
    pub cells: usize,
    pub edges: usize,
    pub interior_edges: usize,
    pub boundary_edges: usize,
    pub min_h: f64,
    pub max_h: f64,
}

impl Mesh {
    /// Uniform mesh of `nx * ny` grid cells, each split along the diagonal
    /// from its lower-left to its upper-right corner.
    ///
    /// Vertices are numbered lexicographically by `(x, y)`.
    pub fn uniform(nx: usize, ny: usize, rect: Rect) -> Result<Mesh> {
        if nx == 0 || ny == 0 {
            return Err(Error::InvalidArgument(format!(
                "cell counts must be positive, got {nx} x {ny}"
            )));
        }
        if !(rect.x1 > rect.x0 && rect.y1 > rect.y0) || !rect.area().is_finite() {
            return Err(Error::InvalidArgument(format!(
                "degenerate rectangle {rect:?}"
            )));
        }
        let dx = (rect.x1 - rect.x0) / nx as f64;
        let dy = (rect.y1 - rect.y0) / ny as f64;
        let vid = |i: usize, j: usize| i * (ny + 1) + j;

        let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
        let mut markers = Vec::with_capacity((nx + 1) * (ny + 1));
        for i in 0..=nx {
            for j in 0..=ny {
                let x = if i == nx { rect.x1 } else { rect.x0 + i as f64 * dx };
                let y = if j == ny { rect.y1 } else { rect.y0 + j as f64 * dy };
                vertices.push([x, y]);
                let on_boundary = i == 0 || j == 0 || i == nx || j == ny;
                markers.push(on_boundary as i32);
            }
        }
        let mut cells = Vec::with_capacity(2 * nx * ny);
        for i in 0..nx {
            for j in 0..ny {
                let (v00, v10, v11, v01) = (vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1));
                cells.push([v00, v10, v11]);
                cells.push([v00, v11, v01]);
            }
        }
        Mesh::from_cells(vertices, markers, cells)
    }

    /// Builds the topology from raw connectivity, validating it.
    pub fn from_cells(vertices: Vec<Point>, vertex_markers: Vec<i32>, cells: Vec<[usize; 3]>) -> Result<Mesh> {
        if vertex_markers.len() != vertices.len() {
            return Err(Error::InvalidArgument("one marker per vertex required".into()));
        }
        let nv = vertices.len();
        let mut cell_areas = Vec::with_capacity(cells.len());
        for (c, cell) in cells.iter().enumerate() {
            if let Some(&v) = cell.iter().find(|&&v| v >= nv) {
                return Err(Error::Connectivity {
                    cell: c,
                    message: format!("references missing vertex {v} (mesh has {nv})"),
                });
            }
            if cell[0] == cell[1] || cell[1] == cell[2] || cell[0] == cell[2] {
                return Err(Error::Connectivity {
                    cell: c,
                    message: "repeated vertex".into(),
                });
            }
            let [a, b, d] = cell.map(|v| vertices[v]);
            let area = 0.5 * ((b[0] - a[0]) * (d[1] - a[1]) - (b[1] - a[1]) * (d[0] - a[0]));
            if !(area > 0.0) {
                return Err(Error::Geometry {
                    cell: c,
                    message: format!("inverted or degenerate cell (signed area {area:e})"),
                });
            }
            cell_areas.push(area);
        }

        // Collect (lo, hi) keys, then number edges in sorted key order.
        let mut incidence: HashMap<[usize; 2], Vec<(usize, usize)>> = HashMap::new();
        for (c, cell) in cells.iter().enumerate() {
            for l in 0..3 {
                let (a, b) = (cell[(l + 1) % 3], cell[(l + 2) % 3]);
                incidence.entry([a.min(b), a.max(b)]).or_default().push((c, l));
            }
        }
        let mut keys: Vec<[usize; 2]> = incidence.keys().copied().collect();
        keys.sort_unstable();

        let mut cell_edges = vec![[0usize; 3]; cells.len()];
        let mut cell_edge_signs = vec![[0.0f64; 3]; cells.len()];
        let mut edge_cells = Vec::with_capacity(keys.len());
        for (e, key) in keys.iter().enumerate() {
            let users = &incidence[key];
            if users.len() > 2 {
                return Err(Error::Connectivity {
                    cell: users[2].0,
                    message: format!("edge ({}, {}) shared by {} cells", key[0], key[1], users.len()),
                });
            }
            let mut signs = [0.0; 2];
            for (slot, &(c, l)) in users.iter().enumerate() {
                let a = cells[c][(l + 1) % 3];
                let sign = if a == key[0] { 1.0 } else { -1.0 };
                cell_edges[c][l] = e;
                cell_edge_signs[c][l] = sign;
                signs[slot] = sign;
            }
            if users.len() == 2 && signs[0] == signs[1] {
                return Err(Error::Connectivity {
                    cell: users[1].0,
                    message: format!("edge ({}, {}) traversed in the same direction by two cells", key[0], key[1]),
                });
            }
            let mut adj = [users[0].0, users.get(1).map_or(NO_CELL, |u| u.0)];
            if adj[1] != NO_CELL && adj[1] < adj[0] {
                adj.swap(0, 1);
            }
            edge_cells.push(adj);
        }

        let edge_lengths: Vec<f64> = keys
            .iter()
            .map(|&[a, b]| dist(vertices[a], vertices[b]))
            .collect();
        let mut cell_normals = Vec::with_capacity(cells.len());
        let mut cell_diameters = Vec::with_capacity(cells.len());
        for cell in &cells {
            let mut normals = [[0.0; 2]; 3];
            let mut hk = 0.0f64;
            for (l, n) in normals.iter_mut().enumerate() {
                let a = vertices[cell[(l + 1) % 3]];
                let b = vertices[cell[(l + 2) % 3]];
                let len = dist(a, b);
                *n = [(b[1] - a[1]) / len, -(b[0] - a[0]) / len];
                hk = hk.max(len);
            }
            cell_normals.push(normals);
            cell_diameters.push(hk);
        }

        Ok(Mesh {
            vertices,
            vertex_markers,
            cells,
            edges: keys,
            edge_cells,
            cell_edges,
            cell_edge_signs,
            cell_normals,
            cell_areas,
            cell_diameters,
            edge_lengths,
        })
    }

    /// Reads the node/cell file pair described in the README.
    pub fn import(node_file: &Path, cell_file: &Path) -> Result<Mesh> {
        let nodes = read_table(node_file, 4)?;
        let mut vertices = vec![[0.0; 2]; nodes.len()];
        let mut markers = vec![0; nodes.len()];
        let mut seen = vec![false; nodes.len()];
        for (line, fields) in &nodes {
            let idx = parse_index(node_file, *line, &fields[0], nodes.len())?;
            if std::mem::replace(&mut seen[idx], true) {
                return Err(parse_err(node_file, *line, format!("duplicate node index {idx}")));
            }
            vertices[idx] = [parse_f64(node_file, *line, &fields[1])?, parse_f64(node_file, *line, &fields[2])?];
            markers[idx] = fields[3]
                .parse()
                .map_err(|_| parse_err(node_file, *line, format!("bad boundary marker {:?}", fields[3])))?;
        }

        let rows = read_table(cell_file, 4)?;
        let mut cells = vec![[0usize; 3]; rows.len()];
        let mut seen = vec![false; rows.len()];
        for (line, fields) in &rows {
            let idx = parse_index(cell_file, *line, &fields[0], rows.len())?;
            if std::mem::replace(&mut seen[idx], true) {
                return Err(parse_err(cell_file, *line, format!("duplicate cell index {idx}")));
            }
            for k in 0..3 {
                cells[idx][k] = fields[k + 1]
                    .parse()
                    .map_err(|_| parse_err(cell_file, *line, format!("bad vertex index {:?}", fields[k + 1])))?;
            }
        }
        Mesh::from_cells(vertices, markers, cells)
    }

    /// Writes the mesh in the format read by [`Mesh::import`].
    pub fn export(&self, node_file: &Path, cell_file: &Path) -> Result<()> {
        let mut s = format!("{}\n", self.vertices.len());
        for (i, (v, m)) in self.vertices.iter().zip(&self.vertex_markers).enumerate() {
            let _ = writeln!(s, "{i} {:.17e} {:.17e} {m}", v[0], v[1]);
        }
        fs::write(node_file, s).map_err(|e| Error::io(node_file, e))?;
        let mut s = format!("{}\n", self.cells.len());
        for (i, c) in self.cells.iter().enumerate() {
            let _ = writeln!(s, "{i} {} {} {}", c[0], c[1], c[2]);
        }
        fs::write(cell_file, s).map_err(|e| Error::io(cell_file, e))
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn vertex_markers(&self) -> &[i32] {
        &self.vertex_markers
    }

    pub fn cells(&self) -> &[[usize; 3]] {
        &self.cells
    }

    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    pub fn cell_vertices(&self, cell: usize) -> [Point; 3] {
        self.cells[cell].map(|v| self.vertices[v])
    }

    pub fn cell_edges(&self, cell: usize) -> [usize; 3] {
        self.cell_edges[cell]
    }

    pub fn cell_edge_signs(&self, cell: usize) -> [f64; 3] {
        self.cell_edge_signs[cell]
    }

    /// Outward unit normals of the three local edges.
    pub fn cell_normals(&self, cell: usize) -> [Point; 3] {
        self.cell_normals[cell]
    }

    pub fn cell_area(&self, cell: usize) -> f64 {
        self.cell_areas[cell]
    }

    /// Diameter `h_K`, the longest edge of the cell.
    pub fn cell_diameter(&self, cell: usize) -> f64 {
        self.cell_diameters[cell]
    }

    pub fn cell_centroid(&self, cell: usize) -> Point {
        let [a, b, c] = self.cell_vertices(cell);
        [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
    }

    /// Global mesh size `h = max h_K`.
    pub fn h(&self) -> f64 {
        self.cell_diameters.iter().copied().fold(0.0, f64::max)
    }

    pub fn edge_length(&self, edge: usize) -> f64 {
        self.edge_lengths[edge]
    }

    pub fn edge_endpoints(&self, edge: usize) -> [Point; 2] {
        self.edges[edge].map(|v| self.vertices[v])
    }

    /// The one or two cells adjacent to an edge, lower index first.
    pub fn edge_cells(&self, edge: usize) -> (usize, Option<usize>) {
        let [a, b] = self.edge_cells[edge];
        (a, (b != NO_CELL).then_some(b))
    }

    pub fn is_boundary_edge(&self, edge: usize) -> bool {
        self.edge_cells[edge][1] == NO_CELL
    }

    /// Unit normal `n_e`, pointing from the lower-numbered adjacent cell to
    /// the higher-numbered one (outward on the boundary).
    pub fn edge_normal(&self, edge: usize) -> Point {
        let cell = self.edge_cells[edge][0];
        let l = self.local_edge_index(cell, edge).expect("edge adjacency is consistent");
        self.cell_normals[cell][l]
    }

    pub fn local_edge_index(&self, cell: usize, edge: usize) -> Option<usize> {
        self.cell_edges[cell].iter().position(|&e| e == edge)
    }

    pub fn boundary_edges(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.edges.len()).filter(|&e| self.is_boundary_edge(e))
    }

    pub fn topology_report(&self) -> TopologyReport {
        let boundary = self.boundary_edges().count();
        TopologyReport {
            cells: self.num_cells(),
            edges: self.num_edges(),
            interior_edges: self.num_edges() - boundary,
            boundary_edges: boundary,
            min_h: self.cell_diameters.iter().copied().fold(f64::INFINITY, f64::min),
            max_h: self.h(),
        }
    }
}

fn dist(a: Point, b: Point) -> f64 {
    (b[0] - a[0]).hypot(b[1] - a[1])
}

fn parse_err(path: &Path, line: usize, message: String) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    }
}

fn parse_f64(path: &Path, line: usize, s: &str) -> Result<f64> {
    s.parse().map_err(|_| parse_err(path, line, format!("bad coordinate {s:?}")))
}

fn parse_index(path: &Path, line: usize, s: &str, count: usize) -> Result<usize> {
    let idx: usize = s.parse().map_err(|_| parse_err(path, line, format!("bad index {s:?}")))?;
    if idx >= count {
        return Err(parse_err(path, line, format!("index {idx} out of range (count {count})")));
    }
    Ok(idx)
}

/// Reads a count header followed by exactly `count` rows of `width` fields.
/// Blank lines are skipped. Returns `(line number, fields)` pairs.
fn read_table(path: &Path, width: usize) -> Result<Vec<(usize, Vec<String>)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    let (hline, header) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "empty file".into()))?;
    let count: usize = header
        .parse()
        .map_err(|_| parse_err(path, hline, format!("bad count header {header:?}")))?;
    let mut rows = Vec::with_capacity(count);
    for (line, l) in lines {
        let fields: Vec<String> = l.split_whitespace().map(str::to_owned).collect();
        if fields.len() != width {
            return Err(parse_err(path, line, format!("expected {width} fields, found {}", fields.len())));
        }
        rows.push((line, fields));
    }
    if rows.len() != count {
        return Err(parse_err(path, hline, format!("header says {count} rows, found {}", rows.len())));
    }
    Ok(rows)
}
