use std::io::Write;
use std::path::Path;

use crate::recurrence::RecurrenceMatrix;
use crate::{Error, Real, Result};

/// Grey levels for difference maps.
pub const DIFF_UNCHANGED: u8 = 255;
pub const DIFF_LOST: u8 = 0;
pub const DIFF_GAINED: u8 = 128;

/// Binary (P5) greyscale image of a `rows × cols` grid. Matrix row 0 is
/// drawn at the bottom and column 0 on the left, so time runs up and right.
pub fn write_grid_pgm(path: impl AsRef<Path>, rows: usize, cols: usize, level: impl Fn(usize, usize) -> u8) -> Result<()> {
    let path = path.as_ref();
    if rows == 0 || cols == 0 {
        return Err(Error::invalid("cannot write an empty image"));
    }
    let mut buf = format!("P5\n{cols} {rows}\n255\n").into_bytes();
    buf.reserve(rows * cols);
    for i in (0..rows).rev() {
        buf.extend((0..cols).map(|j| level(i, j)));
    }
    let mut f = super::create_file(path)?;
    f.write_all(&buf).and_then(|_| f.flush()).map_err(|e| Error::io(path, e))
}

/// Recurrence plot: 255 for recurrent cells, 0 otherwise.
pub fn write_matrix_pgm<F: Real>(m: &RecurrenceMatrix<F>, path: impl AsRef<Path>) -> Result<()> {
    write_grid_pgm(path, m.rows, m.cols, |i, j| if m.get(i, j) { 255 } else { 0 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_is_drawn_as_anti_raster_diagonal() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("id.pgm");
        let m = RecurrenceMatrix::<f64>::from_fn(3, 3, None, |i, j| i == j);
        write_matrix_pgm(&m, &p).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        let header = b"P5\n3 3\n255\n";
        assert_eq!(&bytes[..header.len()], header);
        assert_eq!(&bytes[header.len()..], &[0, 0, 255, 0, 255, 0, 255, 0, 0]);
    }

    #[test]
    fn tri_level_map() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.pgm");
        let codes = [[0u8, 1], [2, 0]];
        let lvl = |c: u8| [DIFF_UNCHANGED, DIFF_LOST, DIFF_GAINED][c as usize];
        write_grid_pgm(&p, 2, 2, |i, j| lvl(codes[i][j])).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        assert_eq!(&bytes[bytes.len() - 4..], &[128, 255, 255, 0]);
        assert!(write_grid_pgm(dir.path().join("e.pgm"), 0, 3, |_, _| 0).is_err());
    }
}
