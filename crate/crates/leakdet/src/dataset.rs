//! PSD spectrogram datasets and leak annotations.
//!
//! A [`Spectrogram`] is a rectangular matrix of non-negative power spectral
//! density values with rows indexed by frequency bin and columns by
//! one-second frames. A [`LeakAnnotation`] is an ordered list of inclusive
//! `[start, end]` second intervals that expands to a per-second 0/1 label
//! vector. Both are immutable after construction and safe to share across
//! threads.
//!
//! File formats:
//! - spectrogram: plain-text matrix, one frequency bin per line, columns
//!   (seconds) separated by whitespace or commas (auto-detected on load);
//! - annotation: one `start,end` line per interval, `#` starts a comment.

use std::path::Path;

use crate::{Error, Result};

/// Sampling rate of the industrial recordings, Hz.
pub const DEFAULT_SAMPLE_RATE_HZ: f64 = 131_072.0;
/// Highest frequency covered by the PSD rows, Hz.
pub const DEFAULT_MAX_FREQ_HZ: f64 = 65_536.0;
/// Frequency bins per recording.
pub const DEFAULT_N_BINS: usize = 5_000;

/// PSD matrix with its sampling metadata. Rows are frequency bins, columns
/// are one-second frames. Bin `k` covers `[k*bin_width, (k+1)*bin_width)` Hz.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    /// Bin-major storage: `psd[bin * duration_s + t]`.
    psd: Vec<f64>,
    n_bins: usize,
    duration_s: usize,
    sample_rate_hz: f64,
    max_freq_hz: f64,
}

impl Spectrogram {
    /// Builds a spectrogram from bin rows, validating rectangularity and
    /// that every cell is finite and non-negative.
    pub fn from_rows(rows: &[Vec<f64>], sample_rate_hz: f64, max_freq_hz: f64) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Format("spectrogram has no rows".into()));
        }
        let duration_s = rows[0].len();
        if duration_s == 0 {
            return Err(Error::Format("spectrogram rows are empty".into()));
        }
        let mut psd = Vec::with_capacity(rows.len() * duration_s);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != duration_s {
                return Err(Error::Format(format!(
                    "ragged matrix: row {} has {} columns, expected {}",
                    i,
                    row.len(),
                    duration_s
                )));
            }
            psd.extend_from_slice(row);
        }
        Self::from_flat(psd, rows.len(), duration_s, sample_rate_hz, max_freq_hz)
    }

    /// Builds a spectrogram from bin-major flat storage.
    pub fn from_flat(
        psd: Vec<f64>,
        n_bins: usize,
        duration_s: usize,
        sample_rate_hz: f64,
        max_freq_hz: f64,
    ) -> Result<Self> {
        if n_bins == 0 || duration_s == 0 {
            return Err(Error::Format("spectrogram must be non-empty".into()));
        }
        if psd.len() != n_bins * duration_s {
            return Err(Error::Format(format!(
                "flat PSD length {} does not match {} bins x {} seconds",
                psd.len(),
                n_bins,
                duration_s
            )));
        }
        let rate_ok = |v: f64| v.is_finite() && v > 0.0;
        if !rate_ok(max_freq_hz) || !rate_ok(sample_rate_hz) {
            return Err(Error::Validation(
                "sample rate and max frequency must be positive".into(),
            ));
        }
        for (i, &v) in psd.iter().enumerate() {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Validation(format!(
                    "PSD cell (bin {}, second {}) is {} (must be finite and >= 0)",
                    i / duration_s,
                    i % duration_s,
                    v
                )));
            }
        }
        Ok(Spectrogram {
            psd,
            n_bins,
            duration_s,
            sample_rate_hz,
            max_freq_hz,
        })
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn duration_s(&self) -> usize {
        self.duration_s
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn max_freq_hz(&self) -> f64 {
        self.max_freq_hz
    }

    /// Width of one frequency bin in Hz. Derived, not stored: the default
    /// layout (65536 Hz over 5000 rows) gives a non-integer 13.1072 Hz.
    pub fn bin_width_hz(&self) -> f64 {
        self.max_freq_hz / self.n_bins as f64
    }

    /// Center frequency of bin `k` in Hz.
    pub fn bin_center_hz(&self, bin: usize) -> f64 {
        (bin as f64 + 0.5) * self.bin_width_hz()
    }

    /// The per-second series of one frequency bin.
    pub fn bin_row(&self, bin: usize) -> &[f64] {
        &self.psd[bin * self.duration_s..(bin + 1) * self.duration_s]
    }

    pub fn value(&self, bin: usize, t: usize) -> f64 {
        self.psd[bin * self.duration_s + t]
    }

    /// Serializes the matrix as plain text, one bin row per line,
    /// space-separated. Values are written in shortest round-trip decimal,
    /// so a load of the saved file reproduces every cell bit-exactly.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::with_capacity(self.psd.len() * 8);
        for bin in 0..self.n_bins {
            let row = self.bin_row(bin);
            for (t, v) in row.iter().enumerate() {
                if t > 0 {
                    out.push(' ');
                }
                push_f64(&mut out, *v);
            }
            out.push('\n');
        }
        crate::fsutil::write_atomic(path, out.as_bytes())
    }
}

fn push_f64(out: &mut String, v: f64) {
    use std::fmt::Write;
    write!(out, "{}", v).expect("string write");
}

/// Loads a plain-text PSD matrix. The column separator (whitespace or comma)
/// is auto-detected per line. `expected_bins` cross-checks the row count.
pub fn load_spectrogram(path: &Path, expected_bins: Option<usize>) -> Result<Spectrogram> {
    load_spectrogram_with_meta(
        path,
        expected_bins,
        DEFAULT_SAMPLE_RATE_HZ,
        DEFAULT_MAX_FREQ_HZ,
    )
}

/// [`load_spectrogram`] with explicit sampling metadata, for datasets that
/// do not follow the default 131072 Hz / 65536 Hz layout.
pub fn load_spectrogram_with_meta(
    path: &Path,
    expected_bins: Option<usize>,
    sample_rate_hz: f64,
    max_freq_hz: f64,
) -> Result<Spectrogram> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let cells: Vec<&str> = if line.contains(',') {
            line.split(',').map(str::trim).collect()
        } else {
            line.split_whitespace().collect()
        };
        let mut row = Vec::with_capacity(cells.len());
        for cell in cells {
            let v: f64 = cell.parse().map_err(|_| {
                Error::Format(format!(
                    "{}:{}: cannot parse {:?} as a number",
                    path.display(),
                    lineno + 1,
                    cell
                ))
            })?;
            row.push(v);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Format(format!("{}: empty file", path.display())));
    }
    if let Some(expected) = expected_bins {
        if rows.len() != expected {
            return Err(Error::Format(format!(
                "{}: expected {} frequency bins, found {}",
                path.display(),
                expected,
                rows.len()
            )));
        }
    }
    Spectrogram::from_rows(&rows, sample_rate_hz, max_freq_hz)
}

/// Ordered, non-overlapping leak intervals in inclusive seconds.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LeakAnnotation {
    intervals: Vec<(usize, usize)>,
}

impl LeakAnnotation {
    /// Validates that every interval has `start <= end` and that the list is
    /// sorted and non-overlapping.
    pub fn new(intervals: Vec<(usize, usize)>) -> Result<Self> {
        for &(start, end) in &intervals {
            if start > end {
                return Err(Error::Validation(format!(
                    "interval [{start}:{end}] has start > end"
                )));
            }
        }
        for w in intervals.windows(2) {
            let (_, prev_end) = w[0];
            let (next_start, _) = w[1];
            if next_start <= prev_end {
                return Err(Error::Validation(format!(
                    "intervals out of order or overlapping near second {next_start}"
                )));
            }
        }
        Ok(LeakAnnotation { intervals })
    }

    pub fn empty() -> Self {
        LeakAnnotation::default()
    }

    pub fn intervals(&self) -> &[(usize, usize)] {
        &self.intervals
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    /// Total labeled seconds: sum of `end - start + 1` over intervals.
    pub fn labeled_seconds(&self) -> usize {
        self.intervals.iter().map(|&(s, e)| e - s + 1).sum()
    }

    /// Parses `start,end` lines; `#` comments and blank lines are skipped.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut intervals = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split(',').map(str::trim);
            let parse = |s: Option<&str>| -> Result<usize> {
                s.and_then(|v| v.parse().ok()).ok_or_else(|| {
                    Error::Format(format!(
                        "{}:{}: expected \"start,end\", got {:?}",
                        path.display(),
                        lineno + 1,
                        raw
                    ))
                })
            };
            let start = parse(parts.next())?;
            let end = parse(parts.next())?;
            if parts.next().is_some() {
                return Err(Error::Format(format!(
                    "{}:{}: trailing fields in {:?}",
                    path.display(),
                    lineno + 1,
                    raw
                )));
            }
            intervals.push((start, end));
        }
        LeakAnnotation::new(intervals)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::from("# leak intervals, inclusive seconds: start,end\n");
        for &(start, end) in &self.intervals {
            out.push_str(&format!("{start},{end}\n"));
        }
        crate::fsutil::write_atomic(path, out.as_bytes())
    }
}

/// Expands intervals to a 0/1 vector of length `duration_s`; a second is 1
/// iff it lies inside any interval, endpoints inclusive.
pub fn expand_labels(ann: &LeakAnnotation, duration_s: usize) -> Result<Vec<u8>> {
    let mut labels = vec![0u8; duration_s];
    for &(start, end) in ann.intervals() {
        if end >= duration_s {
            return Err(Error::Validation(format!(
                "interval [{start}:{end}] exceeds duration {duration_s}"
            )));
        }
        for label in &mut labels[start..=end] {
            *label = 1;
        }
    }
    Ok(labels)
}

/// Reconstructs (merged) intervals from a 0/1 label vector.
pub fn intervals_from_labels(labels: &[u8]) -> Vec<(usize, usize)> {
    let mut intervals = Vec::new();
    let mut open: Option<usize> = None;
    for (t, &label) in labels.iter().enumerate() {
        match (label, open) {
            (1, None) => open = Some(t),
            (0, Some(start)) => {
                intervals.push((start, t - 1));
                open = None;
            }
            _ => {}
        }
    }
    if let Some(start) = open {
        intervals.push((start, labels.len() - 1));
    }
    intervals
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn write_tmp(content: &str) -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.psd");
        std::fs::write(&path, content).unwrap();
        (dir, path)
    }

    #[test]
    fn loads_single_row() {
        let (_d, path) = write_tmp("0 0 0\n");
        let spec = load_spectrogram(&path, None).unwrap();
        assert_eq!(spec.n_bins(), 1);
        assert_eq!(spec.duration_s(), 3);
        assert!(spec.bin_row(0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn detects_comma_separator() {
        let (_d, path) = write_tmp("1.5,2.5\n3.5,4.5\n");
        let spec = load_spectrogram(&path, Some(2)).unwrap();
        assert_eq!(spec.value(1, 0), 3.5);
        assert_eq!(spec.value(0, 1), 2.5);
    }

    #[test]
    fn ragged_rows_are_a_format_error() {
        let (_d, path) = write_tmp("1 2 3\n4 5\n");
        match load_spectrogram(&path, None) {
            Err(Error::Format(msg)) => assert!(msg.contains("ragged")),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn negative_and_nan_cells_are_validation_errors() {
        let (_d, path) = write_tmp("1 -2\n3 4\n");
        assert!(matches!(
            load_spectrogram(&path, None),
            Err(Error::Validation(_))
        ));
        let (_d2, path2) = write_tmp("1 NaN\n3 4\n");
        assert!(matches!(
            load_spectrogram(&path2, None),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn empty_file_is_a_format_error() {
        let (_d, path) = write_tmp("");
        assert!(matches!(
            load_spectrogram(&path, None),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn expected_bins_mismatch_is_reported() {
        let (_d, path) = write_tmp("1 2\n3 4\n");
        assert!(matches!(
            load_spectrogram(&path, Some(3)),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn save_load_round_trip_is_bit_exact() {
        let rows = vec![
            vec![0.1, 13.1072, 1e-300],
            vec![3.0, std::f64::consts::PI, 65536.0],
        ];
        let spec = Spectrogram::from_rows(&rows, 131072.0, 65536.0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("round.psd");
        spec.save(&path).unwrap();
        let back = load_spectrogram(&path, Some(2)).unwrap();
        for bin in 0..2 {
            for t in 0..3 {
                assert_eq!(
                    spec.value(bin, t).to_bits(),
                    back.value(bin, t).to_bits(),
                    "cell ({bin},{t})"
                );
            }
        }
    }

    const LEAK_PROCESS_INTERVALS: [(usize, usize); 4] =
        [(1191, 1276), (1370, 1450), (1796, 1886), (1990, 2081)];
    const LEAK_NOPROCESS_INTERVALS: [(usize, usize); 3] =
        [(2300, 2348), (2623, 2670), (2783, 2833)];

    /// Independent oracle: labeled seconds = sum of (end - start + 1).
    fn interval_sum(intervals: &[(usize, usize)]) -> usize {
        intervals.iter().map(|&(s, e)| e - s + 1).sum()
    }

    #[test]
    fn leak_process_labels_sum_to_interval_arithmetic() {
        let expected = interval_sum(&LEAK_PROCESS_INTERVALS);
        assert_eq!(expected, 350); // 86 + 81 + 91 + 92
        let ann = LeakAnnotation::new(LEAK_PROCESS_INTERVALS.to_vec()).unwrap();
        let labels = expand_labels(&ann, 3096).unwrap();
        assert_eq!(labels.iter().map(|&l| l as usize).sum::<usize>(), expected);
        assert_eq!(labels.len(), 3096);
    }

    #[test]
    fn leak_noprocess_labels_sum_to_interval_arithmetic() {
        let expected = interval_sum(&LEAK_NOPROCESS_INTERVALS);
        assert_eq!(expected, 148); // 49 + 48 + 51, inclusive endpoints
        let ann = LeakAnnotation::new(LEAK_NOPROCESS_INTERVALS.to_vec()).unwrap();
        let labels = expand_labels(&ann, 3069).unwrap();
        assert_eq!(labels.iter().map(|&l| l as usize).sum::<usize>(), expected);
    }

    #[test]
    fn empty_annotation_expands_to_zeros() {
        let labels = expand_labels(&LeakAnnotation::empty(), 10).unwrap();
        assert_eq!(labels, vec![0u8; 10]);
    }

    #[test]
    fn interval_beyond_duration_is_a_bounds_error() {
        let ann = LeakAnnotation::new(vec![(5, 12)]).unwrap();
        assert!(matches!(expand_labels(&ann, 12), Err(Error::Validation(_))));
        assert!(expand_labels(&ann, 13).is_ok());
    }

    #[test]
    fn rejects_unsorted_and_overlapping_intervals() {
        assert!(LeakAnnotation::new(vec![(10, 20), (5, 8)]).is_err());
        assert!(LeakAnnotation::new(vec![(10, 20), (20, 25)]).is_err());
        assert!(LeakAnnotation::new(vec![(10, 8)]).is_err());
        assert!(LeakAnnotation::new(vec![(10, 20), (21, 25)]).is_ok());
    }

    #[test]
    fn annotation_file_round_trip_with_comments() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ann.intervals");
        std::fs::write(&path, "# header\n10,20\n30,31 # inline\n\n").unwrap();
        let ann = LeakAnnotation::load(&path).unwrap();
        assert_eq!(ann.intervals(), &[(10, 20), (30, 31)]);
        ann.save(&path).unwrap();
        let back = LeakAnnotation::load(&path).unwrap();
        assert_eq!(ann, back);
    }

    proptest! {
        /// Round trip: labels -> intervals equals the merged input intervals.
        #[test]
        fn label_round_trip_reconstructs_merged_intervals(
            raw in proptest::collection::vec((0usize..200, 0usize..8), 0..6)
        ) {
            // build sorted non-overlapping (possibly adjacent) intervals
            let mut intervals: Vec<(usize, usize)> = Vec::new();
            let mut cursor = 0usize;
            for (gap, len) in raw {
                let start = cursor + gap + 1;
                let end = start + len;
                intervals.push((start, end));
                cursor = end;
            }
            let ann = LeakAnnotation::new(intervals.clone()).unwrap();
            let duration = cursor + 5;
            let labels = expand_labels(&ann, duration).unwrap();
            prop_assert_eq!(
                labels.iter().map(|&l| l as usize).sum::<usize>(),
                ann.labeled_seconds()
            );
            // merge adjacent input intervals for comparison
            let mut merged: Vec<(usize, usize)> = Vec::new();
            for (s, e) in intervals {
                match merged.last_mut() {
                    Some(last) if s == last.1 + 1 => last.1 = e,
                    _ => merged.push((s, e)),
                }
            }
            prop_assert_eq!(intervals_from_labels(&labels), merged);
        }
    }
}
