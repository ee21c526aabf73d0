//! File formats for measures, costs, potentials and couplings.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::costs::{CostKind, CostSpec, ModulusSpec};
use crate::error::{Error, Result};
use crate::measures::{make_measure, DiscreteMeasure, GridInfo};
use crate::problem::{Coupling, DualPotentials};
use crate::solvers::fmt_float;

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_text(path)?).map_err(|e| Error::parse(path, e))
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable value");
    s.push('\n');
    s
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridFile {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub cells_per_axis: usize,
    pub cell_volume: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeasureFile {
    pub dim: usize,
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    /// Present for grid discretizations; enables inferred density bounds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridFile>,
}

impl MeasureFile {
    pub fn from_measure(mu: &DiscreteMeasure) -> Self {
        Self {
            dim: mu.dim(),
            points: mu.points().to_vec(),
            weights: mu.weights().to_vec(),
            grid: mu.grid().map(|g| GridFile {
                lo: g.lo.clone(),
                hi: g.hi.clone(),
                cells_per_axis: g.cells_per_axis,
                cell_volume: g.cell_volume,
            }),
        }
    }

    pub fn into_measure(self) -> Result<DiscreteMeasure> {
        if let Some((index, p)) = self.points.iter().enumerate().find(|(_, p)| p.len() != self.dim) {
            return Err(Error::PointDimension {
                index,
                expected: self.dim,
                found: p.len(),
            });
        }
        let mu = make_measure(self.points, self.weights)?;
        match self.grid {
            Some(g) => mu.with_grid(GridInfo {
                lo: g.lo,
                hi: g.hi,
                cells_per_axis: g.cells_per_axis,
                cell_volume: g.cell_volume,
            }),
            None => Ok(mu),
        }
    }
}

/// Reads a measure from JSON, or from CSV when the extension is `.csv`.
pub fn read_measure(path: &Path) -> Result<DiscreteMeasure> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        return read_measure_csv(path);
    }
    read_json::<MeasureFile>(path)?.into_measure()
}

/// CSV with header `x1,...,xd,w`, one atom per row.
pub fn read_measure_csv(path: &Path) -> Result<DiscreteMeasure> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::parse(path, e))?;
    let header = rdr.headers().map_err(|e| Error::parse(path, e))?.clone();
    let cols: Vec<&str> = header.iter().collect();
    let d = cols.len().saturating_sub(1);
    let expected: Vec<String> = (1..=d).map(|k| format!("x{k}")).chain(["w".to_string()]).collect();
    if d == 0 || cols != expected {
        return Err(Error::parse(path, format!("header must be {}", expected.join(","))));
    }
    let mut points = Vec::new();
    let mut weights = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::parse(path, e))?;
        let vals = rec
            .iter()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::parse(path, e))?;
        if vals.len() != d + 1 {
            return Err(Error::parse(path, format!("expected {} columns, got {}", d + 1, vals.len())));
        }
        weights.push(vals[d]);
        points.push(vals[..d].to_vec());
    }
    make_measure(points, weights)
}

pub fn write_measure(path: &Path, mu: &DiscreteMeasure) -> Result<()> {
    write_text(path, &to_json(&MeasureFile::from_measure(mu)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CostFileKind {
    Matrix,
    Sqeuclidean,
    Euclidean,
    Pnorm,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CostFile {
    pub kind: CostFileKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<Vec<f64>>>,
    #[serde(default, rename = "lipschitz_L", skip_serializing_if = "Option::is_none")]
    pub lipschitz_l: Option<f64>,
}

impl CostFile {
    pub fn into_spec(self, path: &Path) -> Result<CostSpec> {
        let kind = match self.kind {
            CostFileKind::Matrix => {
                let rows = self
                    .matrix
                    .ok_or_else(|| Error::parse(path, "kind \"matrix\" needs a \"matrix\" field"))?;
                let m = rows.first().map_or(0, Vec::len);
                if rows.iter().any(|r| r.len() != m) {
                    return Err(Error::parse(path, "matrix rows have different lengths"));
                }
                let flat: Vec<f64> = rows.into_iter().flatten().collect();
                let n = if m == 0 { 0 } else { flat.len() / m };
                CostKind::Matrix(ndarray::Array2::from_shape_vec((n, m), flat).map_err(|e| Error::parse(path, e))?)
            }
            CostFileKind::Sqeuclidean => CostKind::SquaredEuclidean,
            CostFileKind::Euclidean => CostKind::Euclidean,
            CostFileKind::Pnorm => {
                let p = self.p.ok_or_else(|| Error::parse(path, "kind \"pnorm\" needs \"p\""))?;
                if !(p >= 1.0) {
                    return Err(Error::parse(path, format!("p-norm exponent must be >= 1, got {p}")));
                }
                CostKind::PNorm(p)
            }
        };
        let mut spec = CostSpec::new(kind);
        spec.lipschitz_l = self.lipschitz_l;
        Ok(spec)
    }
}

pub fn read_cost(path: &Path) -> Result<CostSpec> {
    read_json::<CostFile>(path)?.into_spec(path)
}

pub fn read_modulus(path: &Path) -> Result<ModulusSpec> {
    read_json(path)
}

pub fn read_potentials(path: &Path) -> Result<DualPotentials> {
    read_json(path)
}

pub fn potentials_json(pot: &DualPotentials) -> String {
    to_json(pot)
}

/// `i,j,mass` rows for the nonzero entries, row-major.
pub fn coupling_csv(coupling: &Coupling) -> String {
    let mut out = String::from("i,j,mass\n");
    for &(i, j, w) in &coupling.entries {
        out.push_str(&format!("{i},{j},{}\n", fmt_float(w)));
    }
    out
}

pub fn read_coupling_csv(path: &Path, n: usize, m: usize) -> Result<Coupling> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::parse(path, e))?;
    let mut entries = Vec::new();
    for rec in rdr.deserialize::<(usize, usize, f64)>() {
        let (i, j, w) = rec.map_err(|e| Error::parse(path, e))?;
        if i >= n || j >= m {
            return Err(Error::parse(path, format!("cell ({i},{j}) outside {n}x{m}")));
        }
        entries.push((i, j, w));
    }
    Ok(Coupling { n, m, entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{grid_discretize, GridBox};

    #[test]
    fn measure_roundtrip_keeps_grid() {
        let dir = tempfile::tempdir().unwrap();
        let mu = grid_discretize(|x: &[f64]| 1.0 + x[0], &GridBox::interval(0.0, 1.0).unwrap(), 4).unwrap();
        let path = dir.path().join("m.json");
        write_measure(&path, &mu).unwrap();
        let back = read_measure(&path).unwrap();
        assert_eq!(back, mu);
        assert_eq!(back.grid_density_bounds(), mu.grid_density_bounds());
    }

    #[test]
    fn csv_measure() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        fs::write(&path, "x1,x2,w\n0,0,0.25\n1,0,0.75\n").unwrap();
        let mu = read_measure(&path).unwrap();
        assert_eq!(mu.dim(), 2);
        assert_eq!(mu.weights(), &[0.25, 0.75]);
        fs::write(&path, "a,w\n0,1\n").unwrap();
        assert!(matches!(read_measure(&path), Err(Error::Parse { .. })));
    }

    #[test]
    fn cost_kinds() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        fs::write(&path, r#"{"kind":"matrix","matrix":[[0,1],[1,0]],"lipschitz_L":2}"#).unwrap();
        let spec = read_cost(&path).unwrap();
        assert!(matches!(spec.kind, CostKind::Matrix(ref c) if c.dim() == (2, 2)));
        assert_eq!(spec.lipschitz_l, Some(2.0));
        fs::write(&path, r#"{"kind":"pnorm"}"#).unwrap();
        assert!(read_cost(&path).is_err());
        fs::write(&path, r#"{"kind":"pnorm","p":1.5}"#).unwrap();
        assert!(matches!(read_cost(&path).unwrap().kind, CostKind::PNorm(p) if p == 1.5));
    }

    #[test]
    fn coupling_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let c = Coupling {
            n: 2,
            m: 2,
            entries: vec![(0, 0, 0.375), (0, 1, 0.125), (1, 1, 0.1 + 0.2)],
        };
        let path = dir.path().join("pi.csv");
        write_text(&path, &coupling_csv(&c)).unwrap();
        assert_eq!(read_coupling_csv(&path, 2, 2).unwrap(), c);
    }
}
