//! File formats: time-series/label/alert CSV and the versioned
//! model/design container.
//!
//! All floats are written with 17 significant digits (`{:.16e}`), which
//! round-trips `f64` bit-exactly. The model container ends with a
//! `sha256` line over everything above it; a mismatch on load is an
//! error, not a warning.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use sha2::{Digest, Sha256};

use crate::design::ResidualDesign;
use crate::detect::{AlertInterval, StreamKind};
use crate::error::{Error, Result};
use crate::eval::{LabelClass, LabelSet};
use crate::model::{LdsModel, PatternMatrix, SampleInterval, TimeSeries};
use crate::sysid::IdMethod;

fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingArtifact(path.display().to_string())
        } else {
            Error::io(path.display().to_string(), e)
        }
    })
}

fn write_string(path: &Path, content: &str) -> Result<()> {
    std::fs::write(path, content).map_err(|e| Error::io(path.display().to_string(), e))
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

fn parse_f64(path: &Path, line_no: usize, token: &str) -> Result<f64> {
    token
        .parse::<f64>()
        .map_err(|_| parse_err(path, line_no, format!("expected a number, got '{token}'")))
}

fn parse_usize(path: &Path, line_no: usize, token: &str) -> Result<usize> {
    token
        .parse::<usize>()
        .map_err(|_| parse_err(path, line_no, format!("expected an index, got '{token}'")))
}

// ---------------------------------------------------------------- series ---

/// Writes `t,<ch1>,...,<chm>` rows, one per sample. A seed, when
/// given, is recorded as a leading `# seed=N` comment.
pub fn write_timeseries_csv(path: &Path, series: &TimeSeries, seed: Option<u64>) -> Result<()> {
    let mut out = String::new();
    if let Some(s) = seed {
        let _ = writeln!(out, "# seed={s}");
    }
    out.push('t');
    for name in series.channel_names() {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    let y = series.samples();
    for t in 0..series.len() {
        let _ = write!(out, "{t}");
        for ch in 0..series.channels() {
            let _ = write!(out, ",{}", fmt_f64(y[(t, ch)]));
        }
        out.push('\n');
    }
    write_string(path, &out)
}

/// Reads a series CSV; the sampling rate comes from configuration.
pub fn read_timeseries_csv(path: &Path, rate_hz: f64) -> Result<TimeSeries> {
    let content = read_to_string(path)?;
    let mut lines = content
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.starts_with('#'));
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "empty file"))?;
    let mut fields = header.split(',');
    if fields.next() != Some("t") {
        return Err(parse_err(path, 1, "header must start with 't'"));
    }
    let names: Vec<String> = fields.map(|s| s.to_string()).collect();
    if names.is_empty() {
        return Err(parse_err(path, 1, "no channel columns in header"));
    }
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let t_field = fields
            .next()
            .ok_or_else(|| parse_err(path, line_no, "missing sample index"))?;
        let t = parse_usize(path, line_no, t_field)?;
        if t != rows.len() {
            return Err(parse_err(
                path,
                line_no,
                format!("sample index {t} out of order (expected {})", rows.len()),
            ));
        }
        let vals: Vec<f64> = fields
            .map(|f| parse_f64(path, line_no, f))
            .collect::<Result<_>>()?;
        if vals.len() != names.len() {
            return Err(parse_err(
                path,
                line_no,
                format!("{} values for {} channels", vals.len(), names.len()),
            ));
        }
        rows.push(vals);
    }
    if rows.is_empty() {
        return Err(parse_err(path, 1, "no samples"));
    }
    let mat = DMatrix::from_fn(rows.len(), names.len(), |i, j| rows[i][j]);
    TimeSeries::new(mat, rate_hz, names)
}

// ---------------------------------------------------------------- labels ---

/// Writes `class,start,end` rows for both label sets.
pub fn write_labels_csv(
    path: &Path,
    pattern: &LabelSet,
    other: &LabelSet,
    seed: Option<u64>,
) -> Result<()> {
    let mut out = String::new();
    if let Some(s) = seed {
        let _ = writeln!(out, "# seed={s}");
    }
    out.push_str("class,start,end\n");
    for set in [pattern, other] {
        for iv in set.intervals() {
            let _ = writeln!(out, "{},{},{}", set.class(), iv.start, iv.end);
        }
    }
    write_string(path, &out)
}

/// Reads label CSV back into `(pattern, other)` sets.
pub fn read_labels_csv(path: &Path) -> Result<(LabelSet, LabelSet)> {
    let content = read_to_string(path)?;
    let mut pattern = Vec::new();
    let mut other = Vec::new();
    let mut saw_header = false;
    for (idx, line) in content.lines().enumerate() {
        let line_no = idx + 1;
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        if !saw_header {
            if line != "class,start,end" {
                return Err(parse_err(path, line_no, "expected header 'class,start,end'"));
            }
            saw_header = true;
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 3 {
            return Err(parse_err(path, line_no, "expected 3 fields"));
        }
        let class: LabelClass = parts[0]
            .parse()
            .map_err(|e: Error| parse_err(path, line_no, e.to_string()))?;
        let start = parse_usize(path, line_no, parts[1])?;
        let end = parse_usize(path, line_no, parts[2])?;
        let iv = SampleInterval::new(start, end)
            .map_err(|e| parse_err(path, line_no, e.to_string()))?;
        match class {
            LabelClass::Pattern => pattern.push(iv),
            LabelClass::Other => other.push(iv),
        }
    }
    Ok((
        LabelSet::new(pattern, LabelClass::Pattern)?,
        LabelSet::new(other, LabelClass::Other)?,
    ))
}

// ---------------------------------------------------------------- alerts ---

/// Writes `stream,start,end,peak_stat` rows.
pub fn write_alerts_csv(path: &Path, alerts: &[AlertInterval], seed: Option<u64>) -> Result<()> {
    let mut out = String::new();
    if let Some(s) = seed {
        let _ = writeln!(out, "# seed={s}");
    }
    out.push_str("stream,start,end,peak_stat\n");
    for a in alerts {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            a.stream,
            a.start(),
            a.end(),
            fmt_f64(a.peak_stat)
        );
    }
    write_string(path, &out)
}

pub fn read_alerts_csv(path: &Path) -> Result<Vec<AlertInterval>> {
    let content = read_to_string(path)?;
    let mut alerts = Vec::new();
    let mut saw_header = false;
    for (idx, line) in content.lines().enumerate() {
        let line_no = idx + 1;
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        if !saw_header {
            if line != "stream,start,end,peak_stat" {
                return Err(parse_err(path, line_no, "expected header 'stream,start,end,peak_stat'"));
            }
            saw_header = true;
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 4 {
            return Err(parse_err(path, line_no, "expected 4 fields"));
        }
        let stream: StreamKind = parts[0]
            .parse()
            .map_err(|e: Error| parse_err(path, line_no, e.to_string()))?;
        let start = parse_usize(path, line_no, parts[1])?;
        let end = parse_usize(path, line_no, parts[2])?;
        let peak = parse_f64(path, line_no, parts[3])?;
        alerts.push(AlertInterval {
            interval: SampleInterval::new(start, end)
                .map_err(|e| parse_err(path, line_no, e.to_string()))?,
            stream,
            peak_stat: peak,
        });
    }
    Ok(alerts)
}

// ------------------------------------------------------- model container ---

/// A persisted model, optionally with its residual design.
#[derive(Debug, Clone)]
pub struct ModelArtifact {
    pub model: LdsModel,
    pub rate_hz: f64,
    /// Identification method, when the model was learned from data.
    pub method: Option<IdMethod>,
    pub design: Option<ResidualDesign>,
    /// Seed of the run that produced this artifact.
    pub seed: Option<u64>,
}

fn push_matrix(out: &mut String, tag: &str, m: &DMatrix<f64>) {
    let _ = writeln!(out, "{tag} {} {}", m.nrows(), m.ncols());
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| fmt_f64(m[(i, j)])).collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
}

struct BlockReader<'a> {
    path: &'a Path,
    lines: Vec<&'a str>,
    pos: usize,
}

impl<'a> BlockReader<'a> {
    fn next_line(&mut self) -> Result<(usize, &'a str)> {
        while self.pos < self.lines.len() {
            let line = self.lines[self.pos];
            self.pos += 1;
            if !line.trim().is_empty() {
                return Ok((self.pos, line));
            }
        }
        Err(parse_err(self.path, self.lines.len(), "unexpected end of file"))
    }

    fn peek_tag(&self) -> Option<&'a str> {
        self.lines
            .get(self.pos)
            .map(|l| l.split_whitespace().next().unwrap_or(""))
    }

    fn matrix(&mut self, tag: &str) -> Result<DMatrix<f64>> {
        let (line_no, header) = self.next_line()?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 3 || parts[0] != tag {
            return Err(parse_err(
                self.path,
                line_no,
                format!("expected '{tag} <rows> <cols>', got '{header}'"),
            ));
        }
        let rows = parse_usize(self.path, line_no, parts[1])?;
        let cols = parse_usize(self.path, line_no, parts[2])?;
        let mut m = DMatrix::zeros(rows, cols);
        for i in 0..rows {
            let (line_no, line) = self.next_line()?;
            let vals: Vec<&str> = line.split_whitespace().collect();
            if vals.len() != cols {
                return Err(parse_err(
                    self.path,
                    line_no,
                    format!("expected {cols} values, got {}", vals.len()),
                ));
            }
            for (j, v) in vals.iter().enumerate() {
                m[(i, j)] = parse_f64(self.path, line_no, v)?;
            }
        }
        Ok(m)
    }
}

fn sha256_hex(body: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(body.as_bytes());
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Serializes the artifact; bit-exact round-trip via [`read_model_file`].
pub fn write_model_file(path: &Path, artifact: &ModelArtifact) -> Result<()> {
    let mut body = String::from("osad-model v1\n");
    let _ = writeln!(
        body,
        "method {}",
        artifact
            .method
            .map(|m| m.to_string())
            .unwrap_or_else(|| "given".into())
    );
    if let Some(seed) = artifact.seed {
        let _ = writeln!(body, "seed {seed}");
    }
    let _ = writeln!(body, "rate_hz {}", fmt_f64(artifact.rate_hz));
    let _ = writeln!(body, "rank {}", artifact.model.state_dim());
    let _ = writeln!(body, "n {}", artifact.model.state_dim());
    let _ = writeln!(body, "m {}", artifact.model.obs_dim());
    push_matrix(&mut body, "A", artifact.model.a());
    push_matrix(&mut body, "C", artifact.model.c());
    if let Some(design) = &artifact.design {
        let _ = writeln!(body, "design p {}", design.residual_dim());
        push_matrix(&mut body, "W", design.w());
        push_matrix(&mut body, "F", design.f());
    }
    let hash = sha256_hex(&body);
    let _ = writeln!(body, "sha256 {hash}");
    write_string(path, &body)
}

pub fn read_model_file(path: &Path) -> Result<ModelArtifact> {
    let content = read_to_string(path)?;
    // split off and verify the trailing hash line
    let hash_pos = content
        .rfind("sha256 ")
        .ok_or_else(|| parse_err(path, 1, "missing sha256 line"))?;
    let (body, hash_line) = content.split_at(hash_pos);
    let stored = hash_line.trim().strip_prefix("sha256 ").unwrap_or("");
    if sha256_hex(body) != stored {
        return Err(Error::HashMismatch(path.display().to_string()));
    }

    let mut reader = BlockReader {
        path,
        lines: body.lines().collect(),
        pos: 0,
    };
    let (line_no, magic) = reader.next_line()?;
    if magic != "osad-model v1" {
        return Err(parse_err(path, line_no, "not an 'osad-model v1' file"));
    }
    let mut method = None;
    let mut rate_hz = crate::model::DEFAULT_RATE_HZ;
    let mut seed = None;
    loop {
        let (line_no, line) = reader.next_line()?;
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some("method") => {
                let v = parts
                    .next()
                    .ok_or_else(|| parse_err(path, line_no, "missing method"))?;
                method = if v == "given" { None } else { Some(v.parse()?) };
            }
            Some("rate_hz") => {
                let v = parts
                    .next()
                    .ok_or_else(|| parse_err(path, line_no, "missing rate"))?;
                rate_hz = parse_f64(path, line_no, v)?;
            }
            Some("seed") => {
                let v = parts
                    .next()
                    .ok_or_else(|| parse_err(path, line_no, "missing seed"))?;
                seed = Some(v.parse::<u64>().map_err(|_| {
                    parse_err(path, line_no, format!("expected a seed, got '{v}'"))
                })?);
            }
            Some("rank") | Some("n") | Some("m") => {} // carried by the blocks
            Some("A") => {
                reader.pos -= 1;
                break;
            }
            other => {
                return Err(parse_err(
                    path,
                    line_no,
                    format!("unexpected field '{}'", other.unwrap_or("")),
                ));
            }
        }
    }
    let a = reader.matrix("A")?;
    let c = reader.matrix("C")?;
    let model = LdsModel::new(a.clone(), c.clone())?;

    let design = if reader.peek_tag() == Some("design") {
        let (line_no, line) = reader.next_line()?;
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 3 || parts[0] != "design" || parts[1] != "p" {
            return Err(parse_err(path, line_no, "expected 'design p <dim>'"));
        }
        let w = reader.matrix("W")?;
        let f = reader.matrix("F")?;
        Some(ResidualDesign::new(&a, &c, w, f)?)
    } else {
        None
    };

    Ok(ModelArtifact {
        model,
        rate_hz,
        method,
        design,
        seed,
    })
}

// ------------------------------------------------------------- pattern ---

pub fn write_pattern_file(path: &Path, pattern: &PatternMatrix) -> Result<()> {
    let mut body = String::from("osad-pattern v1\n");
    push_matrix(&mut body, "P", pattern.matrix());
    let hash = sha256_hex(&body);
    let _ = writeln!(body, "sha256 {hash}");
    write_string(path, &body)
}

pub fn read_pattern_file(path: &Path) -> Result<PatternMatrix> {
    let content = read_to_string(path)?;
    let hash_pos = content
        .rfind("sha256 ")
        .ok_or_else(|| parse_err(path, 1, "missing sha256 line"))?;
    let (body, hash_line) = content.split_at(hash_pos);
    let stored = hash_line.trim().strip_prefix("sha256 ").unwrap_or("");
    if sha256_hex(body) != stored {
        return Err(Error::HashMismatch(path.display().to_string()));
    }
    let mut reader = BlockReader {
        path,
        lines: body.lines().collect(),
        pos: 0,
    };
    let (line_no, magic) = reader.next_line()?;
    if magic != "osad-pattern v1" {
        return Err(parse_err(path, line_no, "not an 'osad-pattern v1' file"));
    }
    PatternMatrix::new(reader.matrix("P")?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;
    use tempfile::tempdir;

    use crate::design::{design_for_pattern, FDesignMethod};

    #[test]
    fn float_format_round_trips() {
        for v in [
            0.1,
            -3.0e-17,
            std::f64::consts::PI,
            1.0 / 3.0,
            6.02e23,
            -0.0,
        ] {
            let s = fmt_f64(v);
            let back: f64 = s.parse().unwrap();
            assert_eq!(back.to_bits(), v.to_bits(), "{v} -> {s} -> {back}");
        }
    }

    #[test]
    fn series_round_trip_is_bit_exact() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("y.csv");
        let mat = DMatrix::from_fn(20, 3, |i, j| ((i * 3 + j) as f64 * 0.377).sin() / 3.0);
        let series = TimeSeries::with_default_names(mat, 200.0).unwrap();
        write_timeseries_csv(&path, &series, Some(7)).unwrap();
        let back = read_timeseries_csv(&path, 200.0).unwrap();
        assert_eq!(series.samples(), back.samples());
        assert_eq!(series.channel_names(), back.channel_names());
    }

    #[test]
    fn series_parse_errors_carry_line_numbers() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "t,ch1\n0,1.0\n1,oops\n").unwrap();
        match read_timeseries_csv(&path, 200.0) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn labels_round_trip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("labels.csv");
        let pattern = LabelSet::new(
            vec![SampleInterval::new(10, 20).unwrap()],
            LabelClass::Pattern,
        )
        .unwrap();
        let other = LabelSet::new(
            vec![
                SampleInterval::new(30, 40).unwrap(),
                SampleInterval::new(50, 55).unwrap(),
            ],
            LabelClass::Other,
        )
        .unwrap();
        write_labels_csv(&path, &pattern, &other, None).unwrap();
        let (p2, o2) = read_labels_csv(&path).unwrap();
        assert_eq!(pattern.intervals(), p2.intervals());
        assert_eq!(other.intervals(), o2.intervals());
    }

    #[test]
    fn alerts_round_trip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("alerts.csv");
        let alerts = vec![AlertInterval {
            interval: SampleInterval::new(5, 9).unwrap(),
            stream: StreamKind::Selective,
            peak_stat: 12.25,
        }];
        write_alerts_csv(&path, &alerts, Some(1)).unwrap();
        let back = read_alerts_csv(&path).unwrap();
        assert_eq!(alerts, back);
    }

    #[test]
    fn model_container_round_trips_with_design() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("model.osad");
        let a = dmatrix![0.5, 0.3; 0.3, 0.2];
        let c = DMatrix::identity(2, 2);
        let model = LdsModel::new(a, c).unwrap();
        let pattern = PatternMatrix::new(dmatrix![1.0, 1.0; 2.0, 2.0]).unwrap();
        let design = design_for_pattern(&model, &pattern, None, FDesignMethod::Left).unwrap();
        let artifact = ModelArtifact {
            model: model.clone(),
            rate_hz: 200.0,
            method: Some(IdMethod::Subspace),
            design: Some(design.clone()),
            seed: Some(7),
        };
        write_model_file(&path, &artifact).unwrap();
        let back = read_model_file(&path).unwrap();
        assert_eq!(back.model.a(), model.a());
        assert_eq!(back.model.c(), model.c());
        assert_eq!(back.rate_hz, 200.0);
        assert_eq!(back.method, Some(IdMethod::Subspace));
        assert_eq!(back.seed, Some(7));
        let d2 = back.design.unwrap();
        assert_eq!(d2.w(), design.w());
        assert_eq!(d2.f(), design.f());
        assert_eq!(d2.a_f(), design.a_f());
    }

    #[test]
    fn tampered_model_file_is_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("model.osad");
        let model = LdsModel::new(dmatrix![0.5;], dmatrix![1.0;]).unwrap();
        let artifact = ModelArtifact {
            model,
            rate_hz: 200.0,
            method: None,
            design: None,
            seed: None,
        };
        write_model_file(&path, &artifact).unwrap();
        let content = std::fs::read_to_string(&path).unwrap();
        let tampered = content.replace("5.0", "5.1");
        assert_ne!(content, tampered);
        std::fs::write(&path, tampered).unwrap();
        assert!(matches!(
            read_model_file(&path),
            Err(Error::HashMismatch(_))
        ));
    }

    #[test]
    fn pattern_file_round_trips() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("pattern.osad");
        let p = PatternMatrix::new(dmatrix![1.0, 1.0; 2.0, 2.0]).unwrap();
        write_pattern_file(&path, &p).unwrap();
        let back = read_pattern_file(&path).unwrap();
        assert_eq!(back.matrix(), p.matrix());
    }

    #[test]
    fn missing_file_is_a_missing_artifact() {
        assert!(matches!(
            read_model_file(Path::new("/nonexistent/model.osad")),
            Err(Error::MissingArtifact(_))
        ));
    }
}
