//! File input and output: pose CSV and per-frame pose JSON readers, the
//! pose CSV writer, tabular metric output and PGM matrix images.

mod csv_pose;
mod json_pose;
mod pgm;
mod table;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, PoseSequence, Real, Result};

pub use csv_pose::{read_points_csv, read_series_csv, write_points_csv, write_pose_csv};
pub use pgm::{write_grid_pgm, write_matrix_pgm, DIFF_GAINED, DIFF_LOST, DIFF_UNCHANGED};
pub use table::{format_float, Cell, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PoseFormat {
    Csv,
    PoseJson,
}

impl PoseFormat {
    /// Guesses the format from the path: directories and `.json` files are
    /// pose JSON, everything else CSV.
    pub fn detect(path: &Path) -> Self {
        let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        if path.is_dir() || is_json {
            PoseFormat::PoseJson
        } else {
            PoseFormat::Csv
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LoadOptions {
    /// `None` detects the format from the path.
    pub format: Option<PoseFormat>,
    /// Sampling rate in Hz.
    pub rate: f64,
    /// Which detected person to read from pose JSON.
    pub person: usize,
    /// Keypoint array name in pose JSON. Names ending in `_3d` hold
    /// `(x, y, z, c)` quadruples, all others `(x, y, c)` triples.
    pub json_key: String,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            format: None,
            rate: 60.0,
            person: 0,
            json_key: "pose_keypoints_2d".to_string(),
        }
    }
}

impl LoadOptions {
    pub fn with_rate(rate: f64) -> Self {
        LoadOptions { rate, ..Default::default() }
    }
}

/// Reads a pose recording. Confidence defaults to 1 where the source has
/// none; frames without a detection come back fully masked.
pub fn load_pose<F: Real>(path: impl AsRef<Path>, opts: &LoadOptions) -> Result<PoseSequence<F>> {
    let path = path.as_ref();
    if !(opts.rate > 0.0 && opts.rate.is_finite()) {
        return Err(Error::invalid(format!("sampling rate must be positive, got {}", opts.rate)));
    }
    match opts.format.unwrap_or_else(|| PoseFormat::detect(path)) {
        PoseFormat::Csv => csv_pose::read_pose_csv(path, opts.rate),
        PoseFormat::PoseJson => json_pose::read_pose_json(path, opts),
    }
}

/// Writes a metrics table; rows must match the header width.
pub fn write_metrics_csv(table: &Table, path: impl AsRef<Path>) -> Result<()> {
    table.write(path.as_ref())
}

pub(crate) fn create_file(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    std::fs::File::create(path)
        .map(std::io::BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Mat;
    use proptest::prelude::*;

    fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn series_columns_with_blanks() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "f.csv", "frame,time,a,b\n0,0,1.5,\n1,0.1,2,3\n");
        let s = read_series_csv::<f64>(&p, &["b", "a"], 10.0).unwrap();
        assert_eq!(s[0].mask, vec![false, true]);
        assert_eq!(s[1].values, vec![1.5, 2.0]);
        assert!(read_series_csv::<f64>(&p, &["c"], 10.0).unwrap_err().is_validation());
        let bad = write(dir.path(), "g.csv", "a\n1\nx\n");
        assert!(matches!(read_series_csv::<f64>(&bad, &["a"], 10.0), Err(Error::Parse { line: 3, .. })));
    }

    #[test]
    fn csv_with_z_gives_three_dims_and_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "a.csv",
            "frame,keypoint,x,y,z,confidence\n0,head,0.1,0.2,0.3,0.9\n0,hand,1,2,3,1\n1,head,0.4,0.5,0.6,0.8\n1,hand,4,5,6,0.7\n",
        );
        let s: PoseSequence<f64> = load_pose(&p, &LoadOptions::with_rate(30.0)).unwrap();
        assert_eq!((s.n_frames(), s.n_keypoints(), s.dims), (2, 2, 3));
        assert_eq!(s.point(1, 1), &[4.0, 5.0, 6.0]);
        assert_eq!(s.confidence_at(1, 0), 0.8);
        let out = dir.path().join("b.csv");
        write_pose_csv(&s, &out).unwrap();
        let back: PoseSequence<f64> = load_pose(&out, &LoadOptions::with_rate(30.0)).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn missing_frames_and_empty_coordinates_are_masked() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "a.csv", "frame,keypoint,x,y\n0,a,1,1\n0,b,2,2\n1,a,,\n3,a,5,5\n3,b,6,6\n");
        let s: PoseSequence<f64> = load_pose(&p, &LoadOptions::with_rate(10.0)).unwrap();
        assert_eq!(s.n_frames(), 4);
        assert_eq!(s.valid, vec![true, true, false, false, false, false, true, true]);
        assert_eq!(s.confidence_at(0, 0), 1.0);
    }

    #[test]
    fn malformed_row_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "a.csv", "frame,keypoint,x,y\n0,a,1,1\n1,a,oops,1\n");
        let e = load_pose::<f64>(&p, &LoadOptions::with_rate(10.0)).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 3, .. }), "{e}");
        assert!(e.is_validation());
        let p = write(dir.path(), "dup.csv", "frame,keypoint,x,y\n0,a,1,1\n0,a,1,1\n");
        assert!(matches!(load_pose::<f64>(&p, &LoadOptions::with_rate(10.0)), Err(Error::Parse { line: 3, .. })));
    }

    #[test]
    fn empty_file_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        for name in ["e.csv", "e.json"] {
            let p = write(dir.path(), name, "");
            assert!(load_pose::<f64>(&p, &LoadOptions::with_rate(10.0)).is_err());
        }
        let p = write(dir.path(), "h.csv", "frame,keypoint,x,y\n");
        assert!(load_pose::<f64>(&p, &LoadOptions::with_rate(10.0)).is_err());
    }

    fn face_frame(k: usize, shift: f64, people: usize) -> String {
        let kp: Vec<String> = (0..k).map(|i| format!("{},{},0.9", i as f64 + shift, 2.0 * i as f64)).collect();
        let person = format!("{{\"face_keypoints_2d\":[{}]}}", kp.join(","));
        let list = vec![person; people].join(",");
        format!("{{\"version\":1.3,\"people\":[{list}]}}")
    }

    #[test]
    fn face_json_directory() {
        let dir = tempfile::tempdir().unwrap();
        for f in 0..5 {
            let people = if f == 2 { 0 } else { 1 };
            write(dir.path(), &format!("clip_{f:012}_keypoints.json"), &face_frame(70, f as f64, people));
        }
        let opts = LoadOptions { json_key: "face_keypoints_2d".into(), ..LoadOptions::with_rate(60.0) };
        let s: PoseSequence<f64> = load_pose(dir.path(), &opts).unwrap();
        assert_eq!((s.n_frames(), s.n_keypoints(), s.dims), (5, 70, 2));
        assert!((0..70).all(|k| !s.is_valid(2, k)));
        assert_eq!(s.point(3, 10), &[13.0, 20.0]);
        assert_eq!(s.base.rate, 60.0);
    }

    #[test]
    fn json_keypoint_count_mismatch_names_frame() {
        let dir = tempfile::tempdir().unwrap();
        let text = format!("[{},{}]", face_frame(5, 0.0, 1), face_frame(4, 0.0, 1));
        let p = write(dir.path(), "rec.json", &text);
        let opts = LoadOptions { json_key: "face_keypoints_2d".into(), ..LoadOptions::with_rate(60.0) };
        let e = load_pose::<f64>(&p, &opts).unwrap_err().to_string();
        assert!(e.contains("frame 1"), "{e}");
    }

    #[test]
    fn json_person_selection_and_zero_confidence() {
        let dir = tempfile::tempdir().unwrap();
        let text = r#"{"frames":[{"people":[{"pose_keypoints_2d":[1,1,0.5, 0,0,0]},{"pose_keypoints_2d":[7,7,1, 8,8,1]}]}]}"#;
        let p = write(dir.path(), "r.json", text);
        let s: PoseSequence<f64> = load_pose(&p, &LoadOptions::with_rate(25.0)).unwrap();
        assert_eq!(s.valid, vec![true, false]);
        let second: PoseSequence<f64> = load_pose(&p, &LoadOptions { person: 1, ..LoadOptions::with_rate(25.0) }).unwrap();
        assert_eq!(second.point(0, 1), &[8.0, 8.0]);
        let bad = write(dir.path(), "bad.json", "{\"people\": [\n1,");
        assert!(matches!(load_pose::<f64>(&bad, &LoadOptions::with_rate(25.0)), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn points_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        let m = Mat::from_rows(2, 3, vec![0.1, 0.2, 0.3, -1.0, 1e-17, 3.0]);
        write_points_csv(&["a".to_string(), "b,c".to_string()], &m, &p).unwrap();
        let (labels, back) = read_points_csv::<f64>(&p).unwrap();
        assert_eq!(labels, vec!["a", "b,c"]);
        assert_eq!(back, m);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn csv_round_trip_is_exact(vals in proptest::collection::vec(-1e6f64..1e6, 24), mask in proptest::collection::vec(any::<bool>(), 12), conf in 0.0f64..=1.0) {
            let mut s = PoseSequence::<f64>::empty(4, vec!["p".into(), "q q".into(), "r".into()], 2, 50.0).unwrap();
            for f in 0..4 {
                for k in 0..3 {
                    let i = f * 3 + k;
                    s.set_point(f, k, &vals[2 * i..2 * i + 2], conf);
                    if !mask[i] {
                        s.set_valid(f, k, false);
                        s.point_mut(f, k).fill(0.0);
                    }
                }
            }
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("x.csv");
            write_pose_csv(&s, &p).unwrap();
            let back: PoseSequence<f64> = load_pose(&p, &LoadOptions::with_rate(50.0)).unwrap();
            prop_assert_eq!(back, s);
        }
    }
}
