use super::RecurrenceMatrix;
use crate::Real;

/// A maximal run of recurrent cells along a diagonal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct DiagonalLine {
    /// Column minus row; positive above the main diagonal.
    pub offset: isize,
    /// Row of the first cell.
    pub start: usize,
    pub length: usize,
}

/// Number of lines per length; index 0 is unused.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LineHistogram {
    pub counts: Vec<u64>,
}

impl LineHistogram {
    fn from_lengths(lengths: impl Iterator<Item = usize>) -> Self {
        let mut counts = Vec::new();
        for l in lengths {
            if counts.len() <= l {
                counts.resize(l + 1, 0);
            }
            counts[l] += 1;
        }
        LineHistogram { counts }
    }

    pub fn count(&self, length: usize) -> u64 {
        self.counts.get(length).copied().unwrap_or(0)
    }

    /// `(length, count)` pairs with a nonzero count and length ≥ `l_min`.
    pub fn iter_from(&self, l_min: usize) -> impl Iterator<Item = (usize, u64)> + '_ {
        self.counts.iter().enumerate().skip(l_min.max(1)).filter(|(_, &c)| c > 0).map(|(l, &c)| (l, c))
    }

    pub fn n_lines(&self, l_min: usize) -> u64 {
        self.iter_from(l_min).map(|(_, c)| c).sum()
    }

    /// Recurrent cells covered by lines of length ≥ `l_min`.
    pub fn n_points(&self, l_min: usize) -> u64 {
        self.iter_from(l_min).map(|(l, c)| l as u64 * c).sum()
    }

    pub fn max_length(&self) -> usize {
        self.counts.iter().rposition(|&c| c > 0).unwrap_or(0)
    }
}

/// Runs of consecutive rows, tracked per key (diagonal or column).
struct Runs {
    last: Vec<usize>,
    start: Vec<usize>,
}

const NONE: usize = usize::MAX;

impl Runs {
    fn new(keys: usize) -> Self {
        Runs { last: vec![NONE; keys], start: vec![0; keys] }
    }

    /// Records a recurrent cell at `row` on `key`; returns a finished run
    /// `(start, length)` if this cell does not continue the previous one.
    fn push(&mut self, key: usize, row: usize) -> Option<(usize, usize)> {
        let last = self.last[key];
        self.last[key] = row;
        if last != NONE && last + 1 == row {
            return None;
        }
        let done = (last != NONE).then(|| (self.start[key], last - self.start[key] + 1));
        self.start[key] = row;
        done
    }

    fn finish(self) -> impl Iterator<Item = (usize, usize, usize)> {
        self.last
            .into_iter()
            .zip(self.start)
            .enumerate()
            .filter(|(_, (l, _))| *l != NONE)
            .map(|(k, (l, s))| (k, s, l - s + 1))
    }
}

/// All maximal diagonal runs, sorted by offset then start row. The Theiler
/// band of auto matrices holds no recurrent cells, so it yields no lines.
pub fn diagonal_lines<F: Real>(m: &RecurrenceMatrix<F>) -> Vec<DiagonalLine> {
    let shift = m.rows.saturating_sub(1);
    let key_of = |i: usize, j: usize| j + shift - i;
    let offset_of = |k: usize| k as isize - shift as isize;
    let mut runs = Runs::new(m.rows + m.cols);
    let mut out = Vec::new();
    for i in 0..m.rows {
        for j in m.row_ones(i) {
            let k = key_of(i, j);
            if let Some((start, length)) = runs.push(k, i) {
                out.push(DiagonalLine { offset: offset_of(k), start, length });
            }
        }
    }
    out.extend(runs.finish().map(|(k, start, length)| DiagonalLine { offset: offset_of(k), start, length }));
    out.sort_unstable();
    out
}

/// Maximal vertical runs as `(column, start_row, length)`.
pub fn vertical_lines<F: Real>(m: &RecurrenceMatrix<F>) -> Vec<(usize, usize, usize)> {
    let mut runs = Runs::new(m.cols);
    let mut out = Vec::new();
    for i in 0..m.rows {
        for j in m.row_ones(i) {
            if let Some((start, length)) = runs.push(j, i) {
                out.push((j, start, length));
            }
        }
    }
    out.extend(runs.finish());
    out.sort_unstable();
    out
}

/// Raw diagonal line-length histogram over the whole matrix, all lengths.
pub fn diagonal_histogram<F: Real>(m: &RecurrenceMatrix<F>) -> LineHistogram {
    LineHistogram::from_lengths(diagonal_lines(m).into_iter().map(|l| l.length))
}

/// Raw vertical line-length histogram over all columns, all lengths.
pub fn vertical_histogram<F: Real>(m: &RecurrenceMatrix<F>) -> LineHistogram {
    LineHistogram::from_lengths(vertical_lines(m).into_iter().map(|l| l.2))
}
