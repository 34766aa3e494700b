use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use crate::linalg::Mat;
use crate::{Error, PoseSequence, Real, Result};

struct Columns {
    frame: usize,
    keypoint: usize,
    coords: Vec<usize>,
    confidence: Option<usize>,
}

fn locate(headers: &csv::StringRecord, path: &Path, need_frame: bool) -> Result<Columns> {
    let find = |name: &str| headers.iter().position(|h| h.trim().eq_ignore_ascii_case(name));
    let missing = |name: &str| Error::Format { path: path.to_path_buf(), message: format!("missing `{name}` column") };
    let frame = if need_frame { find("frame").ok_or_else(|| missing("frame"))? } else { usize::MAX };
    let keypoint = find("keypoint").ok_or_else(|| missing("keypoint"))?;
    let mut coords = vec![find("x").ok_or_else(|| missing("x"))?, find("y").ok_or_else(|| missing("y"))?];
    if let Some(z) = find("z") {
        coords.push(z);
    }
    Ok(Columns { frame, keypoint, coords, confidence: find("confidence") })
}

fn reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    if file.metadata().map(|m| m.len() == 0).unwrap_or(false) {
        return Err(Error::Format { path: path.to_path_buf(), message: "file is empty".into() });
    }
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file))
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse { path: path.to_path_buf(), line, message: message.into() }
}

struct Row {
    frame: i64,
    keypoint: String,
    xyz: Option<Vec<f64>>,
    confidence: f64,
    line: usize,
}

/// Reads `frame,keypoint,x,y[,z][,confidence]`. Frames run contiguously from
/// the smallest to the largest index seen; absent (frame, keypoint) pairs and
/// rows with empty coordinates are masked.
pub(super) fn read_pose_csv<F: Real>(path: &Path, rate: f64) -> Result<PoseSequence<F>> {
    let mut rdr = reader(path)?;
    let headers = rdr.headers().map_err(|e| parse_err(path, 1, e.to_string()))?.clone();
    let cols = locate(&headers, path, true)?;
    let dims = cols.coords.len();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(path, line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let field = |i: usize| rec.get(i).unwrap_or("");
        let frame: i64 = field(cols.frame)
            .parse()
            .map_err(|_| parse_err(path, line, format!("bad frame index `{}`", field(cols.frame))))?;
        if frame < 0 {
            return Err(parse_err(path, line, "negative frame index"));
        }
        let keypoint = field(cols.keypoint).to_string();
        if keypoint.is_empty() {
            return Err(parse_err(path, line, "empty keypoint label"));
        }
        let raw: Vec<&str> = cols.coords.iter().map(|&i| field(i)).collect();
        let xyz = if raw.iter().all(|s| s.is_empty()) {
            None
        } else {
            let v = raw
                .iter()
                .map(|s| s.parse::<f64>().map_err(|_| parse_err(path, line, format!("bad coordinate `{s}`"))))
                .collect::<Result<Vec<f64>>>()?;
            v.iter().all(|c| c.is_finite()).then_some(v)
        };
        let confidence = match cols.confidence.map(field) {
            None | Some("") => 1.0,
            Some(s) => {
                let c: f64 = s.parse().map_err(|_| parse_err(path, line, format!("bad confidence `{s}`")))?;
                if !(0.0..=1.0).contains(&c) {
                    return Err(parse_err(path, line, format!("confidence {c} outside [0, 1]")));
                }
                c
            }
        };
        rows.push(Row { frame, keypoint, xyz, confidence, line });
    }
    if rows.is_empty() {
        return Err(Error::Format { path: path.to_path_buf(), message: "no data rows".into() });
    }
    let mut labels = Vec::new();
    let mut index = HashMap::new();
    for r in &rows {
        if !index.contains_key(&r.keypoint) {
            index.insert(r.keypoint.clone(), labels.len());
            labels.push(r.keypoint.clone());
        }
    }
    let first = rows.iter().map(|r| r.frame).min().unwrap();
    let last = rows.iter().map(|r| r.frame).max().unwrap();
    let n_frames = (last - first + 1) as usize;
    let mut p = PoseSequence::empty(n_frames, labels, dims, rate)?;
    let mut seen = vec![false; n_frames * p.n_keypoints()];
    for r in rows {
        let f = (r.frame - first) as usize;
        let k = index[&r.keypoint];
        let slot = f * p.n_keypoints() + k;
        if std::mem::replace(&mut seen[slot], true) {
            return Err(parse_err(path, r.line, format!("duplicate row for frame {} keypoint `{}`", r.frame, r.keypoint)));
        }
        let conf = F::lit(r.confidence);
        match r.xyz {
            Some(v) => {
                let v: Vec<F> = v.into_iter().map(F::lit).collect();
                p.set_point(f, k, &v, conf);
            }
            None => {
                p.confidence[slot] = conf;
                p.valid[slot] = false;
            }
        }
    }
    Ok(p)
}

fn num<F: Real>(v: F) -> String {
    // shortest round-trip representation
    v.to_f64_lossy().to_string()
}

/// Writes every (frame, keypoint) pair; masked points get empty coordinates.
pub fn write_pose_csv<F: Real>(p: &PoseSequence<F>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("frame,keypoint,x,y");
    if p.dims == 3 {
        out.push_str(",z");
    }
    out.push_str(",confidence\n");
    let label_fields: Vec<String> = p
        .keypoint_labels
        .iter()
        .map(|l| {
            let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
            w.write_field(l).expect("in-memory write");
            String::from_utf8(w.into_inner().expect("in-memory write")).expect("utf-8")
        })
        .collect();
    for f in 0..p.n_frames() {
        for (k, label) in label_fields.iter().enumerate() {
            out.push_str(&format!("{f},{label}"));
            let valid = p.is_valid(f, k);
            for &c in p.point(f, k) {
                out.push(',');
                if valid {
                    out.push_str(&num(c));
                }
            }
            out.push(',');
            out.push_str(&num(p.confidence_at(f, k)));
            out.push('\n');
        }
    }
    let mut file = super::create_file(path)?;
    file.write_all(out.as_bytes()).and_then(|_| file.flush()).map_err(|e| Error::io(path, e))
}

/// Writes a labelled point set (`keypoint,x,y[,z]`), e.g. an alignment template.
pub fn write_points_csv<F: Real>(labels: &[String], points: &Mat<F>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if labels.len() != points.rows {
        return Err(Error::ShapeMismatch(format!("{} labels for {} points", labels.len(), points.rows)));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["keypoint", "x", "y"];
    if points.cols == 3 {
        header.push("z");
    }
    let fail = |e: csv::Error| Error::invalid(format!("csv encoding: {e}"));
    w.write_record(&header).map_err(fail)?;
    for (i, l) in labels.iter().enumerate() {
        let mut rec = vec![l.clone()];
        rec.extend(points.row(i).iter().map(|&v| num(v)));
        w.write_record(&rec).map_err(fail)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
    let mut file = super::create_file(path)?;
    file.write_all(&bytes).and_then(|_| file.flush()).map_err(|e| Error::io(path, e))
}

pub fn read_points_csv<F: Real>(path: impl AsRef<Path>) -> Result<(Vec<String>, Mat<F>)> {
    let path = path.as_ref();
    let mut rdr = reader(path)?;
    let headers = rdr.headers().map_err(|e| parse_err(path, 1, e.to_string()))?.clone();
    let cols = locate(&headers, path, false)?;
    let mut labels = Vec::new();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| parse_err(path, e.position().map_or(0, |p| p.line() as usize), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        labels.push(rec.get(cols.keypoint).unwrap_or("").to_string());
        let row = cols
            .coords
            .iter()
            .map(|&i| {
                let s = rec.get(i).unwrap_or("");
                s.parse::<f64>().map(F::lit).map_err(|_| parse_err(path, line, format!("bad coordinate `{s}`")))
            })
            .collect::<Result<Vec<F>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Format { path: path.to_path_buf(), message: "no points".into() });
    }
    let cols = rows[0].len();
    Ok((labels, Mat::from_rows(rows.len(), cols, rows.concat())))
}

/// Reads named numeric columns of a table (e.g. a features CSV) as series.
/// Empty cells become masked samples.
pub fn read_series_csv<F: Real>(path: impl AsRef<Path>, columns: &[&str], rate: f64) -> Result<Vec<crate::Series<F>>> {
    let path = path.as_ref();
    let mut rdr = reader(path)?;
    let headers = rdr.headers().map_err(|e| parse_err(path, 1, e.to_string()))?.clone();
    let idx = columns
        .iter()
        .map(|c| {
            headers.iter().position(|h| h == *c).ok_or_else(|| Error::Format {
                path: path.to_path_buf(),
                message: format!("missing `{c}` column"),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut data: Vec<Vec<Option<F>>> = vec![Vec::new(); columns.len()];
    for rec in rdr.records() {
        let rec = rec.map_err(|e| parse_err(path, e.position().map_or(0, |p| p.line() as usize), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        for (d, &i) in data.iter_mut().zip(&idx) {
            let s = rec.get(i).unwrap_or("");
            d.push(if s.is_empty() {
                None
            } else {
                let v: f64 = s.parse().map_err(|_| parse_err(path, line, format!("bad value `{s}`")))?;
                if !v.is_finite() {
                    return Err(parse_err(path, line, format!("non-finite value `{s}`")));
                }
                Some(F::lit(v))
            });
        }
    }
    if data.first().is_none_or(|d| d.is_empty()) {
        return Err(Error::Format { path: path.to_path_buf(), message: "no rows".into() });
    }
    data.iter().map(|d| crate::Series::from_options(d, rate)).collect()
}
