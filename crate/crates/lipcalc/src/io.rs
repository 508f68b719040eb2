//! Plain-text file formats: CSV for tables and fields, JSON for specs,
//! configs and reports. Points are always referred to by their string id.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use lipcalc_core::derivations::{JacobiField, StencilDerivation};
use lipcalc_core::differentiability::Chart;
use lipcalc_core::kuhn::LatticeField;
use lipcalc_core::linalg::Matrix;
use lipcalc_core::space::generate_space;
use lipcalc_core::{FiniteMetricMeasureSpace, ScalarField, SpaceSpec};

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).with_context(|| format!("cannot open {}", path.display()))?))
}

fn create(path: &Path) -> Result<File> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        }
    }
    File::create(path).with_context(|| format!("cannot create {}", path.display()))
}

fn parse_f64(s: &str, what: &str) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|_| anyhow!("{what}: `{s}` is not a number"))
}

fn point_index(space: &FiniteMetricMeasureSpace, id: &str) -> Result<usize> {
    space.index_of(id.trim()).ok_or_else(|| anyhow!("unknown point id `{id}`"))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_reader(open(path)?).with_context(|| format!("invalid JSON in {}", path.display()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    Ok(())
}

/// Serializes string records to CSV bytes.
pub fn csv_bytes(header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.into_inner().map_err(|e| anyhow!("csv flush: {e}"))
}

fn header(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

fn records(path: &Path) -> Result<(Vec<String>, Vec<csv::StringRecord>)> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(open(path)?);
    let head = r.headers()?.iter().map(|s| s.to_string()).collect();
    let rows = r.records().collect::<std::result::Result<Vec<_>, _>>().with_context(|| format!("malformed CSV in {}", path.display()))?;
    Ok((head, rows))
}

fn expect_header(path: &Path, got: &[String], want: &[&str]) -> Result<()> {
    if got.len() != want.len() || got.iter().zip(want).any(|(a, b)| a != b) {
        bail!("{}: expected header `{}`, found `{}`", path.display(), want.join(","), got.join(","));
    }
    Ok(())
}

/// Distance matrix: a header row of ids, then one row of distances per id.
pub fn read_distance_matrix(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let (ids, rows) = records(path)?;
    let mut matrix = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        if row.len() != ids.len() {
            bail!("{}: row {} has {} entries, expected {}", path.display(), i + 1, row.len(), ids.len());
        }
        matrix.push(row.iter().map(|v| parse_f64(v, "distance")).collect::<Result<Vec<_>>>()?);
    }
    if matrix.len() != ids.len() {
        bail!("{}: {} ids but {} rows", path.display(), ids.len(), matrix.len());
    }
    Ok((ids, matrix))
}

/// Weights: `point_id,weight`.
pub fn read_weights(path: &Path, ids: &[String]) -> Result<Vec<f64>> {
    let (head, rows) = records(path)?;
    expect_header(path, &head, &["point_id", "weight"])?;
    let index: BTreeMap<&str, usize> = ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let mut w = vec![f64::NAN; ids.len()];
    for row in &rows {
        let i = *index.get(&row[0]).ok_or_else(|| anyhow!("unknown point id `{}` in weights", &row[0]))?;
        w[i] = parse_f64(&row[1], "weight")?;
    }
    if let Some(i) = w.iter().position(|v| v.is_nan()) {
        bail!("no weight for point `{}`", ids[i]);
    }
    Ok(w)
}

/// Loads a space from a `SpaceSpec` JSON file or a distance-matrix CSV with
/// optional weights (uniform when absent).
pub fn read_space(path: &Path, weights: Option<&Path>) -> Result<(FiniteMetricMeasureSpace, Option<SpaceSpec>)> {
    if path.extension().is_some_and(|e| e == "json") {
        let spec: SpaceSpec = read_json(path)?;
        let space = generate_space(&spec)?;
        let space = match weights {
            Some(w) => space.with_weights(read_weights(w, space.ids())?)?,
            None => space,
        };
        return Ok((space, Some(spec)));
    }
    let (ids, matrix) = read_distance_matrix(path)?;
    let w = match weights {
        Some(w) => read_weights(w, &ids)?,
        None => vec![1.0; ids.len()],
    };
    Ok((FiniteMetricMeasureSpace::from_distance_matrix(ids, matrix, w)?, None))
}

pub fn distance_matrix_csv(space: &FiniteMetricMeasureSpace) -> Result<Vec<u8>> {
    let n = space.len();
    csv_bytes(space.ids(), (0..n).map(|i| (0..n).map(|j| space.dist(i, j).to_string()).collect()))
}

pub fn weights_csv(space: &FiniteMetricMeasureSpace) -> Result<Vec<u8>> {
    csv_bytes(&header(&["point_id", "weight"]), (0..space.len()).map(|i| vec![space.ids()[i].clone(), space.weight(i).to_string()]))
}

/// Field restricted to the listed points: `point_id,value`.
pub fn read_partial_field(space: &FiniteMetricMeasureSpace, path: &Path) -> Result<Vec<(usize, f64)>> {
    let (head, rows) = records(path)?;
    expect_header(path, &head, &["point_id", "value"])?;
    rows.iter().map(|r| Ok((point_index(space, &r[0])?, parse_f64(&r[1], "value")?))).collect()
}

pub fn read_field(space: &FiniteMetricMeasureSpace, path: &Path) -> Result<ScalarField> {
    let mut v = vec![f64::NAN; space.len()];
    for (i, x) in read_partial_field(space, path)? {
        v[i] = x;
    }
    if let Some(i) = v.iter().position(|x| x.is_nan()) {
        bail!("{}: no value for point `{}`", path.display(), space.ids()[i]);
    }
    Ok(ScalarField::new(v)?)
}

pub fn field_csv(space: &FiniteMetricMeasureSpace, f: &[f64]) -> Result<Vec<u8>> {
    csv_bytes(&header(&["point_id", "value"]), f.iter().enumerate().map(|(i, v)| vec![space.ids()[i].clone(), v.to_string()]))
}

/// Stencil: `x_id,y_id,weight`, one row per nonzero weight.
pub fn stencil_csv(space: &FiniteMetricMeasureSpace, d: &StencilDerivation) -> Result<Vec<u8>> {
    let ids = space.ids();
    let rows = d.stencils.iter().enumerate().flat_map(|(x, st)| st.iter().map(move |&(y, w)| vec![ids[x].clone(), ids[y].clone(), w.to_string()]));
    csv_bytes(&header(&["x_id", "y_id", "weight"]), rows)
}

pub fn read_stencil(space: &FiniteMetricMeasureSpace, path: &Path, radius: f64) -> Result<StencilDerivation> {
    let (head, rows) = records(path)?;
    expect_header(path, &head, &["x_id", "y_id", "weight"])?;
    let mut st = vec![Vec::new(); space.len()];
    for r in &rows {
        let x = point_index(space, &r[0])?;
        st[x].push((point_index(space, &r[1])?, parse_f64(&r[2], "weight")?));
    }
    let d = StencilDerivation::from_parts(space, radius, st);
    d.check_locality(space)?;
    Ok(d)
}

/// Jacobi field: `point,i,j,value` with `i` the derivation and `j` the generator.
pub fn jacobi_csv(space: &FiniteMetricMeasureSpace, jf: &JacobiField) -> Result<Vec<u8>> {
    let mut rows = Vec::new();
    for (x, a) in jf.matrices.iter().enumerate() {
        for i in 0..a.rows() {
            for j in 0..a.cols() {
                rows.push(vec![space.ids()[x].clone(), i.to_string(), j.to_string(), a[(i, j)].to_string()]);
            }
        }
    }
    csv_bytes(&header(&["point", "i", "j", "value"]), rows)
}

pub fn read_jacobi(space: &FiniteMetricMeasureSpace, path: &Path) -> Result<JacobiField> {
    let (head, rows) = records(path)?;
    expect_header(path, &head, &["point", "i", "j", "value"])?;
    let mut entries = Vec::with_capacity(rows.len());
    let (mut m, mut n) = (0, 0);
    for r in &rows {
        let x = point_index(space, &r[0])?;
        let i: usize = r[1].parse().context("row index")?;
        let j: usize = r[2].parse().context("column index")?;
        m = m.max(i + 1);
        n = n.max(j + 1);
        entries.push((x, i, j, parse_f64(&r[3], "value")?));
    }
    let mut mats = vec![Matrix::zeros(m, n); space.len()];
    for (x, i, j, v) in entries {
        mats[x][(i, j)] = v;
    }
    Ok(JacobiField::from_matrices(m, n, mats)?)
}

/// Differentials: `point,component,value`.
pub fn differentials_csv(space: &FiniteMetricMeasureSpace, values: &[(usize, Vec<f64>)]) -> Result<Vec<u8>> {
    let rows = values.iter().flat_map(|(x, df)| df.iter().enumerate().map(move |(c, v)| vec![space.ids()[*x].clone(), c.to_string(), v.to_string()]));
    csv_bytes(&header(&["point", "component", "value"]), rows)
}

pub fn read_differentials(space: &FiniteMetricMeasureSpace, path: &Path) -> Result<BTreeMap<usize, Vec<f64>>> {
    let (head, rows) = records(path)?;
    expect_header(path, &head, &["point", "component", "value"])?;
    let mut out: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for r in &rows {
        let x = point_index(space, &r[0])?;
        let c: usize = r[1].parse().context("component")?;
        let v = out.entry(x).or_default();
        if v.len() <= c {
            v.resize(c + 1, 0.0);
        }
        v[c] = parse_f64(&r[2], "value")?;
    }
    Ok(out)
}

/// Lattice field: `k0,…,k{N−1},value` keyed by integer lattice coordinates.
pub fn read_lattice(path: &Path) -> Result<(usize, LatticeField)> {
    let (head, rows) = records(path)?;
    let dim = head.len().checked_sub(1).filter(|&d| d > 0).ok_or_else(|| anyhow!("{}: lattice CSV needs k0..,value", path.display()))?;
    if head[dim] != "value" || (0..dim).any(|i| head[i] != format!("k{i}")) {
        bail!("{}: expected header k0,…,k{},value", path.display(), dim - 1);
    }
    let mut f = LatticeField::new();
    for r in &rows {
        let key = (0..dim).map(|i| r[i].parse::<i64>().with_context(|| format!("lattice index `{}`", &r[i]))).collect::<Result<Vec<_>>>()?;
        f.insert(key, parse_f64(&r[dim], "value")?);
    }
    Ok((dim, f))
}

pub fn lattice_csv(dim: usize, f: &LatticeField) -> Result<Vec<u8>> {
    let mut head: Vec<String> = (0..dim).map(|i| format!("k{i}")).collect();
    head.push("value".into());
    csv_bytes(&head, f.iter().map(|(k, v)| k.iter().map(|x| x.to_string()).chain([v.to_string()]).collect()))
}

/// Embedding: `point_id,z0,…,z{n−1}`.
pub fn embedding_csv(space: &FiniteMetricMeasureSpace, images: &[Vec<f64>]) -> Result<Vec<u8>> {
    let dim = images.first().map_or(0, Vec::len);
    let mut head = vec!["point_id".to_string()];
    head.extend((0..dim).map(|i| format!("z{i}")));
    csv_bytes(&head, images.iter().enumerate().map(|(x, z)| std::iter::once(space.ids()[x].clone()).chain(z.iter().map(|v| v.to_string())).collect()))
}

pub fn read_embedding(space: &FiniteMetricMeasureSpace, path: &Path) -> Result<Vec<Vec<f64>>> {
    let (head, rows) = records(path)?;
    if head.first().map(String::as_str) != Some("point_id") {
        bail!("{}: embedding CSV must start with point_id", path.display());
    }
    let mut out = vec![Vec::new(); space.len()];
    for r in &rows {
        let x = point_index(space, &r[0])?;
        out[x] = r.iter().skip(1).map(|v| parse_f64(v, "coordinate")).collect::<Result<_>>()?;
    }
    if let Some(x) = out.iter().position(|z| z.len() != head.len() - 1) {
        bail!("{}: missing or short row for point `{}`", path.display(), space.ids()[x]);
    }
    Ok(out)
}

/// Where a chart coordinate comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CoordinateSource {
    /// Ambient coordinate of a generated space.
    Axis { axis: usize },
    /// Field CSV, relative to the chart file.
    Field { path: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartSpec {
    /// Point ids; every point when absent.
    #[serde(default)]
    pub points: Option<Vec<String>>,
    pub coordinates: Vec<CoordinateSource>,
}

impl ChartSpec {
    pub fn resolve(&self, space: &FiniteMetricMeasureSpace, base: &Path) -> Result<Chart> {
        let points = match &self.points {
            Some(ids) => ids.iter().map(|id| point_index(space, id)).collect::<Result<Vec<_>>>()?,
            None => (0..space.len()).collect(),
        };
        let coords = self
            .coordinates
            .iter()
            .map(|c| match c {
                CoordinateSource::Axis { axis } => Ok(ScalarField::coordinate(space, *axis)?),
                CoordinateSource::Field { path } => read_field(space, &base.join(path)),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Chart::new(space, points, coords)?)
    }
}

pub fn read_chart(space: &FiniteMetricMeasureSpace, path: &Path) -> Result<Chart> {
    let spec: ChartSpec = read_json(path)?;
    spec.resolve(space, path.parent().unwrap_or(Path::new(".")))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    create(path)?.write_all(bytes).with_context(|| format!("cannot write {}", path.display()))
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    let mut v = Vec::new();
    open(path)?.read_to_end(&mut v)?;
    Ok(v)
}
