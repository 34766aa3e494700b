use std::path::{Path, PathBuf};

use serde_json::Value;

use super::LoadOptions;
use crate::{Error, PoseSequence, Real, Result};

/// One frame's keypoints for the selected person, as a flat number list, or
/// `None` when nobody was detected.
type FrameData = Option<Vec<f64>>;

fn parse_file(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    if text.trim().is_empty() {
        return Err(Error::Format { path: path.to_path_buf(), message: "file is empty".into() });
    }
    serde_json::from_str(&text).map_err(|e| Error::Parse { path: path.to_path_buf(), line: e.line(), message: e.to_string() })
}

fn frame_data(v: &Value, opts: &LoadOptions, path: &Path, name: &str) -> Result<FrameData> {
    let fmt = |m: String| Error::Format { path: path.to_path_buf(), message: format!("{name}: {m}") };
    let people = v
        .get("people")
        .and_then(Value::as_array)
        .ok_or_else(|| fmt("missing `people` array".into()))?;
    let Some(person) = people.get(opts.person) else {
        return Ok(None);
    };
    let Some(arr) = person.get(&opts.json_key) else {
        return Err(fmt(format!("person {} has no `{}` array", opts.person, opts.json_key)));
    };
    let arr = arr.as_array().ok_or_else(|| fmt(format!("`{}` is not an array", opts.json_key)))?;
    if arr.is_empty() {
        return Ok(None);
    }
    arr.iter()
        .map(|x| x.as_f64().ok_or_else(|| fmt(format!("non-numeric entry `{x}`"))))
        .collect::<Result<Vec<f64>>>()
        .map(Some)
}

fn json_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Format { path: dir.to_path_buf(), message: "no .json frame files".into() });
    }
    Ok(files)
}

/// Reads a directory of per-frame files (sorted by name), or a single file
/// holding one frame object, an array of frame objects, or `{"frames": [...]}`.
pub(super) fn read_pose_json<F: Real>(path: &Path, opts: &LoadOptions) -> Result<PoseSequence<F>> {
    let mut frames: Vec<(String, FrameData)> = Vec::new();
    if path.is_dir() {
        for file in json_files(path)? {
            let name = file.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            let v = parse_file(&file)?;
            frames.push((name.clone(), frame_data(&v, opts, &file, &name)?));
        }
    } else {
        let v = parse_file(path)?;
        let list = match &v {
            Value::Array(a) => a.as_slice(),
            Value::Object(o) if o.contains_key("frames") => o["frames"]
                .as_array()
                .map(Vec::as_slice)
                .ok_or_else(|| Error::Format { path: path.to_path_buf(), message: "`frames` is not an array".into() })?,
            _ => std::slice::from_ref(&v),
        };
        for (i, fv) in list.iter().enumerate() {
            let name = format!("frame {i}");
            frames.push((name.clone(), frame_data(fv, opts, path, &name)?));
        }
    }
    if frames.is_empty() {
        return Err(Error::Format { path: path.to_path_buf(), message: "no frames".into() });
    }
    let (stride, dims) = if opts.json_key.ends_with("_3d") { (4, 3) } else { (3, 2) };
    let Some(len) = frames.iter().find_map(|(_, d)| d.as_ref().map(Vec::len)) else {
        return Err(Error::Format { path: path.to_path_buf(), message: format!("person {} never detected", opts.person) });
    };
    if len % stride != 0 {
        return Err(Error::Format {
            path: path.to_path_buf(),
            message: format!("`{}` length {len} is not a multiple of {stride}", opts.json_key),
        });
    }
    let k = len / stride;
    let mut p = PoseSequence::empty(frames.len(), (0..k).map(|i| i.to_string()).collect(), dims, opts.rate)?;
    for (f, (name, data)) in frames.iter().enumerate() {
        let Some(data) = data else { continue };
        if data.len() != len {
            return Err(Error::Format {
                path: path.to_path_buf(),
                message: format!("{name}: {} keypoints, expected {k}", data.len() / stride),
            });
        }
        for (kp, chunk) in data.chunks(stride).enumerate() {
            let c = chunk[stride - 1];
            // pose estimators report undetected points with zero confidence
            if c > 0.0 && chunk.iter().all(|v| v.is_finite()) {
                let xyz: Vec<F> = chunk[..dims].iter().map(|&v| F::lit(v)).collect();
                p.set_point(f, kp, &xyz, F::lit(c.min(1.0)));
            }
        }
    }
    Ok(p)
}
