//! CSV dumps of bridge paths and lifted frames.
//!
//! Paths: `path_id, t, coord_0, ..., coord_{k-1}` with chart coordinates,
//! one row per (path, grid time). Lifts: `path_id, t` followed by the frame
//! entries row-major (`e{i}_{k}` is ambient component `k` of frame vector
//! `i`). Floats are written in shortest round-trip form.

use std::io::{Read, Write};

use crate::bridge::{BridgePath, BridgeSpec, TimeGrid};
use crate::error::{Error, Result};
use crate::geometry::{ManifoldModel, Point};
use crate::lift::LiftPath;

pub struct PathWriter<W: Write> {
    inner: csv::Writer<W>,
    width: Option<usize>,
}

impl<W: Write> PathWriter<W> {
    pub fn new(w: W) -> Self {
        Self { inner: csv::Writer::from_writer(w), width: None }
    }

    pub fn write(&mut self, path_id: u64, path: &BridgePath) -> Result<()> {
        let k = path.spec.model.chart_len();
        match self.width {
            None => {
                let mut header = vec!["path_id".to_string(), "t".to_string()];
                header.extend((0..k).map(|i| format!("coord_{i}")));
                self.inner.write_record(&header)?;
                self.width = Some(k);
            }
            Some(w) if w != k => return Err(Error::Precondition(format!("mixed chart widths {w} and {k}"))),
            _ => {}
        }
        let id = path_id.to_string();
        for (t, p) in path.grid.times().iter().zip(&path.points) {
            let mut row = Vec::with_capacity(k + 2);
            row.push(id.clone());
            row.push(t.to_string());
            row.extend(p.coords.iter().map(f64::to_string));
            self.inner.write_record(&row)?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.inner.flush()?;
        self.inner.into_inner().map_err(|e| Error::Io(e.into_error()))
    }
}

pub struct LiftWriter<W: Write> {
    inner: csv::Writer<W>,
    width: Option<usize>,
}

impl<W: Write> LiftWriter<W> {
    pub fn new(w: W) -> Self {
        Self { inner: csv::Writer::from_writer(w), width: None }
    }

    pub fn write(&mut self, path_id: u64, lift: &LiftPath) -> Result<()> {
        let model = &lift.base_path.spec.model;
        let (m, k) = (model.dim, model.chart_len());
        match self.width {
            None => {
                let mut header = vec!["path_id".to_string(), "t".to_string()];
                header.extend((0..m).flat_map(|i| (0..k).map(move |c| format!("e{i}_{c}"))));
                self.inner.write_record(&header)?;
                self.width = Some(m * k);
            }
            Some(w) if w != m * k => return Err(Error::Precondition(format!("mixed frame widths {w} and {}", m * k))),
            _ => {}
        }
        let id = path_id.to_string();
        for (t, f) in lift.base_path.grid.times().iter().zip(&lift.frames) {
            let mut row = Vec::with_capacity(m * k + 2);
            row.push(id.clone());
            row.push(t.to_string());
            row.extend(f.entries().iter().map(f64::to_string));
            self.inner.write_record(&row)?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.inner.flush()?;
        self.inner.into_inner().map_err(|e| Error::Io(e.into_error()))
    }
}

/// Raw rows of one path as read back from CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct PathRecord {
    pub path_id: u64,
    pub times: Vec<f64>,
    pub coords: Vec<Vec<f64>>,
}

impl PathRecord {
    /// Rebuilds a bridge path on `model`; the endpoints are the first and
    /// last rows.
    pub fn to_bridge_path(&self, model: ManifoldModel) -> Result<BridgePath> {
        let points: Vec<Point> = self.coords.iter().map(|c| model.point(c)).collect::<Result<_>>()?;
        let grid = TimeGrid::from_times(self.times.clone())?;
        let spec = BridgeSpec::new(model, points[0].clone(), points.last().unwrap().clone(), grid.horizon())?;
        Ok(BridgePath {
            spec,
            grid,
            points,
            stream_id: 0,
            terminal_snap: false,
            capped_steps: 0,
            stability_warning: false,
        })
    }
}

/// Reads a path CSV; rows of one path must be contiguous.
pub fn read_paths<R: Read>(r: R) -> Result<Vec<PathRecord>> {
    let mut rdr = csv::Reader::from_reader(r);
    let headers = rdr.headers()?.clone();
    let k = headers.len().checked_sub(2).filter(|k| *k > 0).ok_or_else(|| Error::Config("path CSV needs coordinate columns".into()))?;
    if &headers[0] != "path_id" || &headers[1] != "t" || (0..k).any(|i| headers[i + 2] != format!("coord_{i}")) {
        return Err(Error::Config("path CSV header must be path_id, t, coord_0, ...".into()));
    }
    let mut out: Vec<PathRecord> = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let bad = |what: &str| Error::Config(format!("row {}: bad {what}", line + 2));
        let id: u64 = rec[0].trim().parse().map_err(|_| bad("path_id"))?;
        let t: f64 = rec[1].trim().parse().map_err(|_| bad("t"))?;
        let c: Vec<f64> = (0..k).map(|i| rec[i + 2].trim().parse().map_err(|_| bad("coordinate"))).collect::<Result<_>>()?;
        match out.last_mut() {
            Some(p) if p.path_id == id => {
                p.times.push(t);
                p.coords.push(c);
            }
            _ => {
                if out.iter().any(|p| p.path_id == id) {
                    return Err(Error::Config(format!("rows of path {id} are not contiguous")));
                }
                out.push(PathRecord { path_id: id, times: vec![t], coords: vec![c] });
            }
        }
    }
    if out.is_empty() {
        return Err(Error::Config("path CSV has no rows".into()));
    }
    Ok(out)
}

/// Guesses the model behind chart coordinates of width `k`: unit vectors in
/// R³ are read as the sphere, points on the hyperboloid as H3, and anything
/// else of width 1 to 4 as Euclidean space. Width 1 is always Euclidean, so
/// circle paths need an explicit model.
pub fn infer_model(records: &[PathRecord]) -> Result<ManifoldModel> {
    let k = records[0].coords[0].len();
    let all = |m: &ManifoldModel| records.iter().all(|r| r.coords.iter().all(|c| m.point(c).is_ok()));
    let candidates = match k {
        3 => vec![ManifoldModel::sphere2()],
        4 => vec![ManifoldModel::hyperbolic3()],
        _ => vec![],
    };
    for m in candidates {
        if all(&m) {
            return Ok(m);
        }
    }
    ManifoldModel::euclidean(k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bridge::sample_bridge_exact;
    use crate::lift::{horizontal_lift, Frame};
    use crate::rng::RngStream;

    #[test]
    fn paths_round_trip_bit_exactly() {
        let m = ManifoldModel::sphere2();
        let y = m.point_from_input(&[1.0, 0.3]).unwrap();
        let spec = BridgeSpec::new(m, m.origin(), y, 1.0).unwrap();
        let grid = TimeGrid::uniform(1.0, 7).unwrap();
        let paths: Vec<BridgePath> = (0..3).map(|i| sample_bridge_exact(&spec, &grid, &mut RngStream::new(1, "io", i)).unwrap()).collect();
        let mut w = PathWriter::new(Vec::new());
        for (i, p) in paths.iter().enumerate() {
            w.write(i as u64, p).unwrap();
        }
        let bytes = w.finish().unwrap();
        let recs = read_paths(bytes.as_slice()).unwrap();
        assert_eq!(recs.len(), 3);
        assert_eq!(infer_model(&recs).unwrap(), m);
        for (r, p) in recs.iter().zip(&paths) {
            let back = r.to_bridge_path(m).unwrap();
            assert_eq!(back.points, p.points);
            assert_eq!(back.grid.times(), p.grid.times());
        }
    }

    #[test]
    fn lift_rows_are_row_major_frames() {
        let m = ManifoldModel::hyperbolic3();
        let y = m.point_from_input(&[0.5, 0.0, 0.2]).unwrap();
        let spec = BridgeSpec::new(m, m.origin(), y, 1.0).unwrap();
        let path = sample_bridge_exact(&spec, &TimeGrid::uniform(1.0, 4).unwrap(), &mut RngStream::new(2, "io", 0)).unwrap();
        let lift = horizontal_lift(&path, &Frame::canonical(&m, &path.points[0])).unwrap();
        let mut w = LiftWriter::new(Vec::new());
        w.write(5, &lift).unwrap();
        let text = String::from_utf8(w.finish().unwrap()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 6);
        assert!(lines[0].starts_with("path_id,t,e0_0,e0_1,e0_2,e0_3,e1_0"));
        assert_eq!(lines[1].split(',').count(), 2 + 12);
        let first: Vec<f64> = lines[1].split(',').skip(2).map(|s| s.parse().unwrap()).collect();
        assert_eq!(first, lift.frames[0].entries());
    }

    #[test]
    fn malformed_csv_is_rejected() {
        assert!(read_paths("path_id,t\n".as_bytes()).is_err());
        assert!(read_paths("id,t,coord_0\n0,0,1\n".as_bytes()).is_err());
        assert!(read_paths("path_id,t,coord_0\n0,0,1\n1,0,1\n0,1,2\n".as_bytes()).is_err());
        assert!(read_paths("path_id,t,coord_0\n0,zero,1\n".as_bytes()).is_err());
    }
}
