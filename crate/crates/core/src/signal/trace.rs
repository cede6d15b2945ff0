//! Triaxial accelerometer traces: CSV ingestion with linear-interpolation
//! resampling, and full-precision CSV export.

use std::path::Path;

use super::SignalError;

/// A uniformly sampled triaxial accelerometer recording.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorTrace {
    /// Samples per second.
    pub sample_rate: f64,
    /// (ax, ay, az) in m/s².
    pub samples: Vec<[f64; 3]>,
    /// Opaque owner label.
    pub subject_id: String,
}

impl SensorTrace {
    pub fn new(sample_rate: f64, samples: Vec<[f64; 3]>, subject_id: impl Into<String>) -> Self {
        Self {
            sample_rate,
            samples,
            subject_id: subject_id.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate
    }

    /// One axis (0 = x, 1 = y, 2 = z) as a contiguous series.
    pub fn axis(&self, a: usize) -> Vec<f64> {
        self.samples.iter().map(|s| s[a]).collect()
    }

    /// Acceleration magnitude per sample.
    pub fn magnitude(&self) -> Vec<f64> {
        self.samples
            .iter()
            .map(|s| (s[0] * s[0] + s[1] * s[1] + s[2] * s[2]).sqrt())
            .collect()
    }

    /// Write `t,ax,ay,az` rows; floats use shortest round-trip formatting so a
    /// re-ingest reproduces the trace bit-for-bit.
    pub fn write_csv(&self, path: &Path) -> Result<(), SignalError> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["t", "ax", "ay", "az"])?;
        for (i, s) in self.samples.iter().enumerate() {
            let t = i as f64 / self.sample_rate;
            w.write_record([
                t.to_string(),
                s[0].to_string(),
                s[1].to_string(),
                s[2].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Read a `t,ax,ay,az` CSV and resample it onto a uniform grid by linear
/// interpolation. `resample_to` picks the output rate; `None` infers the mean
/// rate from the timestamps (and skips interpolation entirely when the input
/// is already uniform, preserving values exactly).
pub fn ingest_csv(path: &Path, resample_to: Option<f64>) -> Result<SensorTrace, SignalError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let headers = reader.headers()?.clone();
    let mut col = [usize::MAX; 4];
    const NAMES: [&str; 4] = ["t", "ax", "ay", "az"];
    for (i, h) in headers.iter().enumerate() {
        for (j, name) in NAMES.iter().enumerate() {
            if h.eq_ignore_ascii_case(name) {
                col[j] = i;
            }
        }
    }
    let missing: Vec<String> = NAMES
        .iter()
        .zip(col)
        .filter(|(_, c)| *c == usize::MAX)
        .map(|(n, _)| n.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(SignalError::MissingColumns { missing });
    }

    let mut times = Vec::new();
    let mut values: Vec<[f64; 3]> = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let record = record?;
        let row = idx + 1;
        let parse = |c: usize, column: &'static str| -> Result<f64, SignalError> {
            let raw = record.get(c).unwrap_or("");
            let v: f64 = raw.parse().map_err(|_| SignalError::BadNumber {
                row,
                column,
                value: raw.to_string(),
            })?;
            if !v.is_finite() {
                return Err(SignalError::NonFinite { row, column });
            }
            Ok(v)
        };
        let t = parse(col[0], "t")?;
        if let Some(&prev) = times.last() {
            if t <= prev {
                return Err(SignalError::NonMonotoneTime { row, t, prev });
            }
        }
        times.push(t);
        values.push([parse(col[1], "ax")?, parse(col[2], "ay")?, parse(col[3], "az")?]);
    }
    if times.is_empty() {
        return Err(SignalError::EmptyFile {
            path: path.display().to_string(),
        });
    }

    let subject_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "trace".to_string());

    if times.len() == 1 {
        let rate = resample_to.unwrap_or(1.0);
        if !(rate.is_finite() && rate > 0.0) {
            return Err(SignalError::BadSampleRate(rate));
        }
        return Ok(SensorTrace::new(rate, values, subject_id));
    }

    let span = times[times.len() - 1] - times[0];
    let rate = resample_to.unwrap_or((times.len() - 1) as f64 / span);
    if !(rate.is_finite() && rate > 0.0) {
        return Err(SignalError::BadSampleRate(rate));
    }

    // Already uniform at the requested rate: keep the raw values untouched.
    let step = 1.0 / rate;
    let uniform = times
        .iter()
        .enumerate()
        .all(|(i, &t)| (t - (times[0] + i as f64 * step)).abs() <= 1e-9 * step.max(1.0));
    if uniform {
        return Ok(SensorTrace::new(rate, values, subject_id));
    }

    // Grid from t0 to the last timestamp; the epsilon absorbs rounding when the
    // span is an exact multiple of the step.
    let n_out = ((span * rate) * (1.0 + 1e-12) + 1e-9).floor() as usize + 1;
    let mut out = Vec::with_capacity(n_out);
    let mut k = 0usize; // left neighbor cursor; grid times are non-decreasing
    for j in 0..n_out {
        let t = times[0] + j as f64 * step;
        while k + 2 < times.len() && times[k + 1] < t {
            k += 1;
        }
        let (t0, t1) = (times[k], times[k + 1]);
        let w = ((t - t0) / (t1 - t0)).clamp(0.0, 1.0);
        let (a, b) = (values[k], values[k + 1]);
        out.push([
            a[0] + w * (b[0] - a[0]),
            a[1] + w * (b[1] - a[1]),
            a[2] + w * (b[2] - a[2]),
        ]);
    }
    Ok(SensorTrace::new(rate, out, subject_id))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write as _;

    fn write_file(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        let mut f = std::fs::File::create(&p).unwrap();
        f.write_all(body.as_bytes()).unwrap();
        p
    }

    #[test]
    fn four_row_file_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_file(
            &dir,
            "s1.csv",
            "t,ax,ay,az\n0.0,0.1,0.2,9.8\n0.02,0.15,0.18,9.9\n0.04,0.2,0.16,9.7\n0.06,0.12,0.2,9.81\n",
        );
        let tr = ingest_csv(&p, None).unwrap();
        assert_eq!(tr.len(), 4);
        assert_eq!(tr.subject_id, "s1");
        assert!((tr.sample_rate - 50.0).abs() < 1e-9);
        // Uniform input: values survive untouched.
        assert_eq!(tr.samples[2], [0.2, 0.16, 9.7]);
    }

    #[test]
    fn export_then_ingest_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let samples: Vec<[f64; 3]> = (0..64)
            .map(|i| {
                let t = i as f64 * 0.02;
                [(7.3 * t).sin(), (3.1 * t).cos() * 0.25, 9.81 + 0.1 * t]
            })
            .collect();
        let orig = SensorTrace::new(50.0, samples, "rt");
        let p = dir.path().join("rt.csv");
        orig.write_csv(&p).unwrap();
        let back = ingest_csv(&p, None).unwrap();
        assert_eq!(back.sample_rate, 50.0);
        assert_eq!(back.samples, orig.samples);
    }

    #[test]
    fn downsampling_matches_interpolation_oracle() {
        let dir = tempfile::tempdir().unwrap();
        // 100 Hz source with a curvy profile so interpolation actually blends.
        let mut body = String::from("t,ax,ay,az\n");
        let src: Vec<(f64, f64)> = (0..=100)
            .map(|i| {
                let t = i as f64 / 100.0;
                (t, (2.0 * t).sin() + 0.3 * t * t)
            })
            .collect();
        for (t, v) in &src {
            body.push_str(&format!("{t},{v},{},{}\n", v * 0.5, v - 1.0));
        }
        let p = write_file(&dir, "hundred.csv", &body);
        let tr = ingest_csv(&p, Some(50.0)).unwrap();
        assert_eq!(tr.len(), 51);
        for (j, s) in tr.samples.iter().enumerate() {
            let t = j as f64 / 50.0;
            // Oracle: scan for the bracketing source pair and lerp directly.
            let i = src.iter().rposition(|(ts, _)| *ts <= t + 1e-15).unwrap();
            let expect = if i + 1 == src.len() {
                src[i].1
            } else {
                let (t0, v0) = src[i];
                let (t1, v1) = src[i + 1];
                v0 + (t - t0) / (t1 - t0) * (v1 - v0)
            };
            assert!((s[0] - expect).abs() < 1e-12, "sample {j}: {} vs {expect}", s[0]);
        }
    }

    #[test]
    fn backwards_time_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_file(&dir, "bad.csv", "t,ax,ay,az\n0.0,1,2,3\n0.2,1,2,3\n0.1,1,2,3\n");
        match ingest_csv(&p, None) {
            Err(SignalError::NonMonotoneTime { row, .. }) => assert_eq!(row, 3),
            other => panic!("expected NonMonotoneTime, got {other:?}"),
        }
    }

    #[test]
    fn missing_columns_are_named() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_file(&dir, "cols.csv", "t,ax,speed\n0.0,1,2\n");
        match ingest_csv(&p, None) {
            Err(SignalError::MissingColumns { missing }) => {
                assert_eq!(missing, vec!["ay".to_string(), "az".to_string()]);
            }
            other => panic!("expected MissingColumns, got {other:?}"),
        }
    }

    #[test]
    fn header_only_file_is_empty() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_file(&dir, "empty.csv", "t,ax,ay,az\n");
        assert!(matches!(ingest_csv(&p, None), Err(SignalError::EmptyFile { .. })));
    }

    #[test]
    fn unparsable_cell_is_reported_with_position() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_file(&dir, "nan.csv", "t,ax,ay,az\n0.0,1,2,3\n0.1,1,x,3\n");
        match ingest_csv(&p, None) {
            Err(SignalError::BadNumber { row, column, value }) => {
                assert_eq!((row, column, value.as_str()), (2, "ay", "x"));
            }
            other => panic!("expected BadNumber, got {other:?}"),
        }
    }
}
