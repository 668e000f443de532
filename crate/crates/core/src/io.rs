//! Mesh file I/O: Triangle-style `.node`/`.ele` text pairs, legacy-VTK
//! export and SVG wireframe export.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::la::SymMat2;
use crate::mesh::TriMesh;
use crate::{Error, Result};

fn stem_of(path: &Path) -> PathBuf {
    match path.extension().and_then(|e| e.to_str()) {
        Some("node") | Some("ele") => path.with_extension(""),
        _ => path.to_path_buf(),
    }
}

/// Writes `<stem>.node` and `<stem>.ele`. Indices are 1-based, the node
/// file carries a boundary marker column. Coordinates are printed with the
/// shortest representation that round-trips exactly.
pub fn write_mesh(path: &Path, mesh: &TriMesh) -> Result<()> {
    let stem = stem_of(path);
    let mut node = String::new();
    writeln!(node, "{} 2 0 1", mesh.n_vertices()).unwrap();
    for (i, p) in mesh.vertices().iter().enumerate() {
        let marker = if mesh.is_boundary_vertex(i) { 1 } else { 0 };
        writeln!(node, "{} {} {} {}", i + 1, p[0], p[1], marker).unwrap();
    }
    fs::write(stem.with_extension("node"), node)?;

    let mut ele = String::new();
    writeln!(ele, "{} 3 0", mesh.n_triangles()).unwrap();
    for (k, t) in mesh.triangles().iter().enumerate() {
        writeln!(ele, "{} {} {} {}", k + 1, t[0] + 1, t[1] + 1, t[2] + 1).unwrap();
    }
    fs::write(stem.with_extension("ele"), ele)?;
    Ok(())
}

struct Tokens<'a> {
    // (line number, whitespace tokens), comments and blank lines skipped
    lines: Vec<(usize, Vec<&'a str>)>,
    pos: usize,
}

impl<'a> Tokens<'a> {
    fn new(text: &'a str) -> Self {
        let lines = text
            .lines()
            .enumerate()
            .filter_map(|(i, l)| {
                let body = l.split('#').next().unwrap_or("").trim();
                if body.is_empty() {
                    None
                } else {
                    Some((i + 1, body.split_whitespace().collect()))
                }
            })
            .collect();
        Self { lines, pos: 0 }
    }

    fn next_line(&mut self) -> Option<(usize, &[&'a str])> {
        let item = self.lines.get(self.pos)?;
        self.pos += 1;
        Some((item.0, &item.1))
    }
}

fn parse<T: std::str::FromStr>(tok: &str, line: usize, what: &str) -> Result<T> {
    tok.parse().map_err(|_| Error::Parse {
        line,
        message: format!("cannot parse {what} from '{tok}'"),
    })
}

/// Reads a `<stem>.node`/`<stem>.ele` pair; `path` may be the stem or
/// either file.
pub fn read_mesh(path: &Path) -> Result<TriMesh> {
    let stem = stem_of(path);
    let node_text = fs::read_to_string(stem.with_extension("node"))?;
    let ele_text = fs::read_to_string(stem.with_extension("ele"))?;

    let mut toks = Tokens::new(&node_text);
    let (hline, header) = toks.next_line().ok_or(Error::Parse {
        line: 1,
        message: "empty node file".into(),
    })?;
    let n_vertices: usize = parse(header[0], hline, "vertex count")?;
    let mut vertices = Vec::with_capacity(n_vertices);
    for _ in 0..n_vertices {
        let (line, t) = toks.next_line().ok_or(Error::Parse {
            line: hline,
            message: format!("node file ended before {n_vertices} vertices"),
        })?;
        if t.len() < 3 {
            return Err(Error::Parse {
                line,
                message: "expected 'index x y [marker]'".into(),
            });
        }
        let x: f64 = parse(t[1], line, "x coordinate")?;
        let y: f64 = parse(t[2], line, "y coordinate")?;
        vertices.push([x, y]);
    }

    let mut toks = Tokens::new(&ele_text);
    let (hline, header) = toks.next_line().ok_or(Error::Parse {
        line: 1,
        message: "empty ele file".into(),
    })?;
    let n_triangles: usize = parse(header[0], hline, "triangle count")?;
    let mut triangles = Vec::with_capacity(n_triangles);
    for _ in 0..n_triangles {
        let (line, t) = toks.next_line().ok_or(Error::Parse {
            line: hline,
            message: format!("ele file ended before {n_triangles} triangles"),
        })?;
        if t.len() < 4 {
            return Err(Error::Parse {
                line,
                message: "expected 'index v1 v2 v3'".into(),
            });
        }
        let mut tri = [0usize; 3];
        for (slot, tok) in tri.iter_mut().zip(&t[1..4]) {
            let v: usize = parse(tok, line, "vertex index")?;
            if v == 0 || v > n_vertices {
                return Err(Error::Parse {
                    line,
                    message: format!("vertex index {v} out of range 1..={n_vertices}"),
                });
            }
            *slot = v - 1;
        }
        triangles.push(tri);
    }

    TriMesh::new(vertices, triangles)
}

/// Legacy-VTK (ASCII, UNSTRUCTURED_GRID, cell type 5) export with optional
/// point scalars, cell scalars and cell tensors.
pub fn write_vtk(
    path: &Path,
    mesh: &TriMesh,
    point_scalars: &[(&str, &[f64])],
    cell_scalars: &[(&str, &[f64])],
    cell_tensors: &[(&str, &[SymMat2])],
) -> Result<()> {
    let mut out = String::new();
    out.push_str("# vtk DataFile Version 3.0\n");
    out.push_str("anisoadapt mesh\n");
    out.push_str("ASCII\n");
    out.push_str("DATASET UNSTRUCTURED_GRID\n");
    writeln!(out, "POINTS {} double", mesh.n_vertices()).unwrap();
    for p in mesh.vertices() {
        writeln!(out, "{} {} 0", p[0], p[1]).unwrap();
    }
    writeln!(
        out,
        "CELLS {} {}",
        mesh.n_triangles(),
        4 * mesh.n_triangles()
    )
    .unwrap();
    for t in mesh.triangles() {
        writeln!(out, "3 {} {} {}", t[0], t[1], t[2]).unwrap();
    }
    writeln!(out, "CELL_TYPES {}", mesh.n_triangles()).unwrap();
    for _ in 0..mesh.n_triangles() {
        out.push_str("5\n");
    }
    if !point_scalars.is_empty() {
        writeln!(out, "POINT_DATA {}", mesh.n_vertices()).unwrap();
        for (name, values) in point_scalars {
            writeln!(out, "SCALARS {name} double 1").unwrap();
            out.push_str("LOOKUP_TABLE default\n");
            for v in *values {
                writeln!(out, "{v}").unwrap();
            }
        }
    }
    if !cell_scalars.is_empty() || !cell_tensors.is_empty() {
        writeln!(out, "CELL_DATA {}", mesh.n_triangles()).unwrap();
        for (name, values) in cell_scalars {
            writeln!(out, "SCALARS {name} double 1").unwrap();
            out.push_str("LOOKUP_TABLE default\n");
            for v in *values {
                writeln!(out, "{v}").unwrap();
            }
        }
        for (name, tensors) in cell_tensors {
            writeln!(out, "TENSORS {name} double").unwrap();
            for t in *tensors {
                writeln!(out, "{} {} 0", t.xx, t.xy).unwrap();
                writeln!(out, "{} {} 0", t.xy, t.yy).unwrap();
                out.push_str("0 0 0\n");
            }
        }
    }
    fs::write(path, out)?;
    Ok(())
}

/// SVG wireframe export, one polygon per element, optionally coloured by a
/// per-element scalar (blue = low, red = high).
pub fn write_svg(path: &Path, mesh: &TriMesh, cell_values: Option<&[f64]>) -> Result<()> {
    let size = 800.0;
    let margin = 10.0;
    let (mut xmin, mut xmax, mut ymin, mut ymax) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for p in mesh.vertices() {
        xmin = xmin.min(p[0]);
        xmax = xmax.max(p[0]);
        ymin = ymin.min(p[1]);
        ymax = ymax.max(p[1]);
    }
    let span = (xmax - xmin).max(ymax - ymin).max(1e-300);
    let s = (size - 2.0 * margin) / span;
    let map = |p: [f64; 2]| (margin + s * (p[0] - xmin), margin + s * (ymax - p[1]));

    let (vmin, vmax) = match cell_values {
        Some(v) => v
            .iter()
            .fold((f64::MAX, f64::MIN), |(lo, hi), &x| (lo.min(x), hi.max(x))),
        None => (0.0, 1.0),
    };

    let mut out = String::new();
    writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {size} {size}\">"
    )
    .unwrap();
    for (k, _) in mesh.triangles().iter().enumerate() {
        let pts = mesh.triangle_points(k);
        let fill = match cell_values {
            Some(values) => {
                let t = if vmax > vmin {
                    (values[k] - vmin) / (vmax - vmin)
                } else {
                    0.0
                };
                let r = (255.0 * t).round() as u8;
                let b = (255.0 * (1.0 - t)).round() as u8;
                format!("rgb({r},80,{b})")
            }
            None => "none".to_string(),
        };
        let coords: Vec<String> = pts
            .iter()
            .map(|&p| {
                let (x, y) = map(p);
                format!("{x:.2},{y:.2}")
            })
            .collect();
        writeln!(
            out,
            "<polygon points=\"{}\" fill=\"{}\" stroke=\"black\" stroke-width=\"0.4\"/>",
            coords.join(" "),
            fill
        )
        .unwrap();
    }
    out.push_str("</svg>\n");
    fs::write(path, out)?;
    Ok(())
}
