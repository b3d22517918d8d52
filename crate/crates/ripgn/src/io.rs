//! Text formats for meshes and datasets, nodal CSV, 16-bit PGM rasters and
//! run summaries.
//!
//! Mesh and dataset files are whitespace-separated sections introduced by a
//! keyword and a count:
//!
//! ```text
//! radius 0.12
//! nodes 3
//! 0 0
//! ...
//! triangles 1
//! 0 1 2
//! electrodes 1
//! 2 0 1 1 2        # edge count, then node pairs
//! ```
//!
//! A dataset file is a mesh followed by `noise_rel`, `seed`,
//! `simulation_nodes`, `measurements <m>` and optionally `sigma_true <n>`.

use std::fmt::Write as _;
use std::path::Path;

use ripgn_core::geometry::Mesh2D;

use crate::dataset::Dataset;
use crate::error::{io_err, HarnessError, Result};

pub const RASTER_SIZE: usize = 256;

struct Lines<'a> {
    origin: &'a str,
    items: Vec<(usize, Vec<&'a str>)>,
    pos: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str, origin: &'a str) -> Self {
        let items = text
            .lines()
            .enumerate()
            .filter_map(|(i, l)| {
                let tokens: Vec<&str> = l.split('#').next().unwrap_or("").split_whitespace().collect();
                (!tokens.is_empty()).then_some((i + 1, tokens))
            })
            .collect();
        Self { origin, items, pos: 0 }
    }

    fn err(&self, msg: impl Into<String>) -> HarnessError {
        let line = self.items.get(self.pos.min(self.items.len().saturating_sub(1))).map_or(0, |l| l.0);
        HarnessError::Parse { origin: self.origin.to_string(), line, msg: msg.into() }
    }

    fn next(&mut self) -> Result<&[&'a str]> {
        let item = self.items.get(self.pos).ok_or_else(|| self.err("unexpected end of file"))?;
        self.pos += 1;
        Ok(&item.1)
    }

    fn peek_key(&self) -> Option<&'a str> {
        self.items.get(self.pos).map(|l| l.1[0])
    }

    fn num<T: std::str::FromStr>(&self, token: &str) -> Result<T> {
        token.parse().map_err(|_| {
            let line = self.items.get(self.pos.saturating_sub(1)).map_or(0, |l| l.0);
            HarnessError::Parse { origin: self.origin.to_string(), line, msg: format!("invalid number `{token}`") }
        })
    }

    /// `key value`.
    fn keyed<T: std::str::FromStr>(&mut self, key: &str) -> Result<T> {
        let tokens = self.next()?.to_vec();
        match tokens[..] {
            [k, v] if k == key => self.num(v),
            _ => {
                self.pos -= 1;
                Err(self.err(format!("expected `{key} <value>`")))
            }
        }
    }

    /// `n` rows of exactly `width` numbers.
    fn rows<T: std::str::FromStr + Copy>(&mut self, n: usize, width: usize) -> Result<Vec<Vec<T>>> {
        (0..n)
            .map(|_| {
                let tokens = self.next()?.to_vec();
                if tokens.len() != width {
                    self.pos -= 1;
                    return Err(self.err(format!("expected {width} values")));
                }
                tokens.iter().map(|t| self.num(t)).collect()
            })
            .collect()
    }

    fn values(&mut self, n: usize) -> Result<Vec<f64>> {
        Ok(self.rows(n, 1)?.into_iter().map(|r| r[0]).collect())
    }
}

fn read_mesh_section(lines: &mut Lines<'_>) -> Result<Mesh2D> {
    let radius: f64 = lines.keyed("radius")?;
    let n: usize = lines.keyed("nodes")?;
    let nodes = lines.rows::<f64>(n, 2)?.into_iter().map(|r| [r[0], r[1]]).collect();
    let m: usize = lines.keyed("triangles")?;
    let triangles = lines.rows::<usize>(m, 3)?.into_iter().map(|r| [r[0], r[1], r[2]]).collect();
    let l: usize = lines.keyed("electrodes")?;
    let mut electrodes = Vec::with_capacity(l);
    for _ in 0..l {
        let tokens = lines.next()?.to_vec();
        let count: usize = lines.num(tokens[0])?;
        if tokens.len() != 1 + 2 * count {
            return Err(lines.err(format!("electrode line needs {count} node pairs")));
        }
        let ids = tokens[1..].iter().map(|t| lines.num::<usize>(t)).collect::<Result<Vec<_>>>()?;
        electrodes.push(ids.chunks(2).map(|c| [c[0], c[1]]).collect());
    }
    Ok(Mesh2D::new(nodes, triangles, electrodes, radius)?)
}

fn write_mesh_section(mesh: &Mesh2D, out: &mut String) {
    let _ = writeln!(out, "radius {}", mesh.radius());
    let _ = writeln!(out, "nodes {}", mesh.n_nodes());
    for p in mesh.nodes() {
        let _ = writeln!(out, "{} {}", p[0], p[1]);
    }
    let _ = writeln!(out, "triangles {}", mesh.n_elements());
    for t in mesh.triangles() {
        let _ = writeln!(out, "{} {} {}", t[0], t[1], t[2]);
    }
    let _ = writeln!(out, "electrodes {}", mesh.n_electrodes());
    for edges in mesh.electrode_edges() {
        let _ = write!(out, "{}", edges.len());
        for e in edges {
            let _ = write!(out, " {} {}", e[0], e[1]);
        }
        out.push('\n');
    }
}

pub fn mesh_to_text(mesh: &Mesh2D) -> String {
    let mut out = String::new();
    write_mesh_section(mesh, &mut out);
    out
}

pub fn mesh_from_text(text: &str, origin: &str) -> Result<Mesh2D> {
    let mut lines = Lines::new(text, origin);
    let mesh = read_mesh_section(&mut lines)?;
    if lines.peek_key().is_some() {
        return Err(lines.err("trailing content after mesh"));
    }
    Ok(mesh)
}

pub fn dataset_to_text(ds: &Dataset) -> String {
    let mut out = String::new();
    write_mesh_section(&ds.inversion_mesh, &mut out);
    let _ = writeln!(out, "noise_rel {}", ds.noise_rel);
    let _ = writeln!(out, "seed {}", ds.seed);
    let _ = writeln!(out, "simulation_nodes {}", ds.simulation_nodes);
    let _ = writeln!(out, "measurements {}", ds.measurements.len());
    for v in &ds.measurements {
        let _ = writeln!(out, "{v}");
    }
    if let Some(s) = &ds.sigma_true {
        let _ = writeln!(out, "sigma_true {}", s.len());
        for v in s {
            let _ = writeln!(out, "{v}");
        }
    }
    out
}

pub fn dataset_from_text(text: &str, origin: &str) -> Result<Dataset> {
    let mut lines = Lines::new(text, origin);
    let inversion_mesh = read_mesh_section(&mut lines)?;
    let noise_rel = lines.keyed("noise_rel")?;
    let seed = lines.keyed("seed")?;
    let simulation_nodes = lines.keyed("simulation_nodes")?;
    let m: usize = lines.keyed("measurements")?;
    let measurements = lines.values(m)?;
    let sigma_true = match lines.peek_key() {
        Some("sigma_true") => {
            let n: usize = lines.keyed("sigma_true")?;
            if n != inversion_mesh.n_nodes() {
                return Err(lines.err(format!("sigma_true has {n} entries for {} nodes", inversion_mesh.n_nodes())));
            }
            Some(lines.values(n)?)
        }
        Some(_) => return Err(lines.err("unexpected section")),
        None => None,
    };
    if lines.peek_key().is_some() {
        return Err(lines.err("trailing content after dataset"));
    }
    Ok(Dataset { inversion_mesh, measurements, noise_rel, seed, simulation_nodes, sigma_true })
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(io_err(path))
}

pub fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).map_err(io_err(path))
}

pub fn read_mesh(path: &Path) -> Result<Mesh2D> {
    mesh_from_text(&read_text(path)?, &path.display().to_string())
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    dataset_from_text(&read_text(path)?, &path.display().to_string())
}

/// `node,x,y,sigma[,sigma_true]`.
pub fn nodal_csv(mesh: &Mesh2D, sigma: &[f64], truth: Option<&[f64]>) -> String {
    let mut out = String::from(if truth.is_some() { "node,x,y,sigma,sigma_true\n" } else { "node,x,y,sigma\n" });
    for (i, p) in mesh.nodes().iter().enumerate() {
        let _ = write!(out, "{i},{},{},{}", p[0], p[1], sigma[i]);
        if let Some(t) = truth {
            let _ = write!(out, ",{}", t[i]);
        }
        out.push('\n');
    }
    out
}

/// P1 interpolant of `values` at pixel centres of a `size × size` grid over
/// the bounding box `[-R, R]²`, row 0 at the top. `None` outside the mesh.
pub fn rasterize(mesh: &Mesh2D, values: &[f64], size: usize) -> Vec<Option<f64>> {
    let r = mesh.radius();
    let pixel = 2.0 * r / size as f64;
    let centre = |i: usize| -r + (i as f64 + 0.5) * pixel;
    let mut grid = vec![None; size * size];
    let nodes = mesh.nodes();
    let to_index = |v: f64| ((v + r) / pixel - 0.5).clamp(0.0, (size - 1) as f64);
    for tri in mesh.triangles() {
        let [a, b, c] = tri.map(|i| nodes[i]);
        let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
        let (xs, ys) = ([a[0], b[0], c[0]], [a[1], b[1], c[1]]);
        let (x0, x1) = (xs.iter().copied().fold(f64::INFINITY, f64::min), xs.iter().copied().fold(f64::NEG_INFINITY, f64::max));
        let (y0, y1) = (ys.iter().copied().fold(f64::INFINITY, f64::min), ys.iter().copied().fold(f64::NEG_INFINITY, f64::max));
        for col in to_index(x0).floor() as usize..=to_index(x1).ceil() as usize {
            for row_y in to_index(y0).floor() as usize..=to_index(y1).ceil() as usize {
                let (x, y) = (centre(col), centre(row_y));
                let l1 = ((b[0] - x) * (c[1] - y) - (c[0] - x) * (b[1] - y)) / det;
                let l2 = ((c[0] - x) * (a[1] - y) - (a[0] - x) * (c[1] - y)) / det;
                let l3 = 1.0 - l1 - l2;
                let tol = -1e-12;
                if l1 >= tol && l2 >= tol && l3 >= tol {
                    let v = l1 * values[tri[0]] + l2 * values[tri[1]] + l3 * values[tri[2]];
                    grid[(size - 1 - row_y) * size + col] = Some(v);
                }
            }
        }
    }
    grid
}

/// Binary 16-bit PGM. Values map linearly from `range` onto `1..=65535`;
/// nodata pixels are 0.
pub fn pgm16(grid: &[Option<f64>], size: usize, range: (f64, f64)) -> Vec<u8> {
    let mut out = format!("P5\n{size} {size}\n65535\n").into_bytes();
    let span = (range.1 - range.0).max(f64::MIN_POSITIVE);
    for v in grid {
        let level = v.map_or(0u16, |v| {
            let f = ((v - range.0) / span).clamp(0.0, 1.0);
            1 + (f * 65534.0).round() as u16
        });
        out.extend_from_slice(&level.to_be_bytes());
    }
    out
}

/// `key = value` lines in insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Summary(pub Vec<(String, String)>);

impl Summary {
    pub fn push(&mut self, key: &str, value: impl ToString) {
        self.0.push((key.to_string(), value.to_string()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn to_text(&self) -> String {
        self.0.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn parse(text: &str) -> Self {
        Summary(
            text.lines()
                .filter_map(|l| l.split_once(" = "))
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .collect(),
        )
    }
}
