use std::collections::HashSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Dataset, Label, Record};
use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub const SCHEMA_VERSION: u32 = 1;

const FIXED_COLUMNS: [&str; 4] = ["sample_id", "frame_idx", "label", "anomaly_type"];

/// Sidecar JSON describing a dataset CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub n_signals: usize,
    pub sample_rate_hz: f64,
    pub n_records: usize,
}

/// `data.csv` → `data.manifest.json`.
pub fn manifest_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("manifest.json")
}

/// Writes the CSV and its manifest. Floats use the shortest decimal form
/// that parses back to the same bits.
pub fn save_records(dataset: &Dataset, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let n = dataset.n_signals;
    let mut header: Vec<String> = FIXED_COLUMNS.iter().map(|s| s.to_string()).collect();
    header.extend((0..n).map(|j| format!("sig_{j}")));
    writeln!(w, "{}", header.join(","))?;
    for r in &dataset.records {
        if r.sample_id.contains(',') || r.sample_id.contains('"') {
            return Err(Error::Data(format!("sample id {:?} contains a delimiter", r.sample_id)));
        }
        let kind = r.anomaly_type.as_deref().unwrap_or("");
        for t in 0..r.len() {
            write!(w, "{},{},{},{}", r.sample_id, t, r.label.as_str(), kind)?;
            for v in r.frames.row(t) {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
    }
    w.flush()?;

    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        n_signals: n,
        sample_rate_hz: dataset.sample_rate_hz,
        n_records: dataset.records.len(),
    };
    let mut m = serde_json::to_string_pretty(&manifest)?;
    m.push('\n');
    std::fs::write(manifest_path(path), m)?;
    Ok(())
}

struct Pending {
    sample_id: String,
    label: Label,
    anomaly_type: Option<String>,
    data: Vec<f64>,
    frames: usize,
}

/// Parses a dataset CSV. The sidecar manifest, when present, supplies the
/// sample rate and must agree on `N`; without it the rate defaults to 100 Hz.
pub fn load_records(path: &Path) -> Result<Dataset> {
    let manifest: Option<Manifest> = match std::fs::read_to_string(manifest_path(path)) {
        Ok(s) => Some(serde_json::from_str(&s)?),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => None,
        Err(e) => return Err(e.into()),
    };
    if let Some(m) = &manifest {
        if m.schema_version != SCHEMA_VERSION {
            return Err(Error::Data(format!("unsupported manifest schema version {}", m.schema_version)));
        }
    }
    let sample_rate = manifest.as_ref().map_or(100.0, |m| m.sample_rate_hz);

    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let headers = reader.headers()?.clone();
    if headers.len() <= FIXED_COLUMNS.len() {
        return Err(Error::DataRow { row: 1, msg: "header has no signal columns".into() });
    }
    for (i, name) in FIXED_COLUMNS.iter().enumerate() {
        if headers.get(i) != Some(name) {
            return Err(Error::DataRow { row: 1, msg: format!("missing column `{name}` at position {i}") });
        }
    }
    let n = headers.len() - FIXED_COLUMNS.len();
    for j in 0..n {
        let expected = format!("sig_{j}");
        if headers.get(FIXED_COLUMNS.len() + j) != Some(expected.as_str()) {
            return Err(Error::DataRow { row: 1, msg: format!("missing column `{expected}`") });
        }
    }
    if let Some(m) = &manifest {
        if m.n_signals != n {
            return Err(Error::Data(format!("manifest declares {} signals, CSV has {n}", m.n_signals)));
        }
    }

    let mut records = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    let mut current: Option<Pending> = None;

    let finish = |p: Pending, records: &mut Vec<Record>| -> Result<()> {
        let frames = Matrix::new(p.frames, n, p.data)?;
        let mut r = Record::new(p.sample_id, frames, p.anomaly_type, sample_rate)?;
        r.label = p.label;
        records.push(r);
        Ok(())
    };

    for result in reader.records() {
        let rec = result?;
        let row = rec.position().map_or(0, |p| p.line() as usize);
        let err = |msg: String| Error::DataRow { row, msg };
        if rec.len() != n + FIXED_COLUMNS.len() {
            return Err(err(format!("expected {} fields, found {}", n + FIXED_COLUMNS.len(), rec.len())));
        }
        let sample_id = &rec[0];
        let frame_idx: usize = rec[1].parse().map_err(|_| err(format!("frame_idx `{}` is not an index", &rec[1])))?;
        let label = match &rec[2] {
            "normal" => Label::Normal,
            "anomalous" => Label::Anomalous,
            other => return Err(err(format!("unknown label `{other}`"))),
        };
        let anomaly_type = if rec[3].is_empty() { None } else { Some(rec[3].to_string()) };
        if (label == Label::Normal) != anomaly_type.is_none() {
            return Err(err("label must be `normal` exactly when anomaly_type is empty".into()));
        }

        let same = current.as_ref().is_some_and(|p| p.sample_id == sample_id);
        if !same {
            if let Some(p) = current.take() {
                finish(p, &mut records)?;
            }
            if !seen.insert(sample_id.to_string()) {
                return Err(err(format!("rows of sample `{sample_id}` are not contiguous")));
            }
            current = Some(Pending {
                sample_id: sample_id.to_string(),
                label,
                anomaly_type: anomaly_type.clone(),
                data: Vec::new(),
                frames: 0,
            });
        }
        let p = current.as_mut().expect("set above");
        if p.label != label || p.anomaly_type != anomaly_type {
            return Err(err(format!("sample `{sample_id}` changes label mid-record")));
        }
        if frame_idx != p.frames {
            return Err(err(format!("frame_idx {frame_idx} out of order, expected {}", p.frames)));
        }
        for j in 0..n {
            let cell = &rec[FIXED_COLUMNS.len() + j];
            let v: f64 = cell.trim().parse().map_err(|_| err(format!("sig_{j} value `{cell}` is not numeric")))?;
            if !v.is_finite() {
                return Err(err(format!("sig_{j} value `{cell}` is not finite")));
            }
            p.data.push(v);
        }
        p.frames += 1;
    }
    if let Some(p) = current.take() {
        finish(p, &mut records)?;
    }
    Dataset::new(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    fn header(n: usize) -> String {
        let mut h = "sample_id,frame_idx,label,anomaly_type".to_string();
        for j in 0..n {
            h.push_str(&format!(",sig_{j}"));
        }
        h
    }

    #[test]
    fn parses_two_samples() {
        let dir = tempfile::tempdir().unwrap();
        let mut body = header(12) + "\n";
        for id in ["a", "b"] {
            for t in 0..300 {
                body.push_str(&format!("{id},{t},normal,"));
                for j in 0..12 {
                    body.push_str(&format!(",{}", t * 12 + j));
                }
                body.push('\n');
            }
        }
        let ds = load_records(&write(dir.path(), "d.csv", &body)).unwrap();
        assert_eq!(ds.records.len(), 2);
        assert_eq!(ds.records[1].len(), 300);
        assert_eq!(ds.n_signals, 12);
        assert_eq!(ds.records[0].frames.get(299, 11), (299 * 12 + 11) as f64);
    }

    #[test]
    fn nan_cell_names_row() {
        let dir = tempfile::tempdir().unwrap();
        let body = format!("{}\na,0,normal,,1,2\na,1,normal,,NaN,2\n", header(2));
        let err = load_records(&write(dir.path(), "d.csv", &body)).unwrap_err();
        assert!(matches!(err, Error::DataRow { row: 3, .. }), "{err}");
    }

    #[test]
    fn anomaly_type_marks_anomalous() {
        let dir = tempfile::tempdir().unwrap();
        let body = format!("{}\nx,0,anomalous,collision_foam,1\nx,1,anomalous,collision_foam,2\n", header(1));
        let ds = load_records(&write(dir.path(), "d.csv", &body)).unwrap();
        assert_eq!(ds.records[0].label, Label::Anomalous);
        assert_eq!(ds.records[0].anomaly_type.as_deref(), Some("collision_foam"));
    }

    #[test]
    fn schema_violations() {
        let dir = tempfile::tempdir().unwrap();
        let cases = [
            ("missing", "sample_id,frame_idx,label,sig_0\na,0,normal,1\n"),
            ("text", &format!("{}\na,0,normal,,abc\n", header(1))),
            ("ragged", &format!("{}\na,0,normal,,1\na,1,normal,,1,2\n", header(1))),
            ("noncontig", &format!("{}\na,0,normal,,1\nb,0,normal,,1\na,1,normal,,1\n", header(1))),
            ("gap", &format!("{}\na,0,normal,,1\na,2,normal,,1\n", header(1))),
            ("mislabeled", &format!("{}\na,0,normal,spike,1\n", header(1))),
        ];
        for (name, body) in cases {
            let p = write(dir.path(), &format!("{name}.csv"), body);
            assert!(load_records(&p).is_err(), "{name} should fail");
        }
    }

    #[test]
    fn manifest_must_agree() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "d.csv", &format!("{}\na,0,normal,,1\n", header(1)));
        std::fs::write(manifest_path(&p), r#"{"schema_version":1,"n_signals":3,"sample_rate_hz":50.0,"n_records":1}"#)
            .unwrap();
        assert!(load_records(&p).is_err());
        std::fs::write(manifest_path(&p), r#"{"schema_version":1,"n_signals":1,"sample_rate_hz":50.0,"n_records":1}"#)
            .unwrap();
        assert_eq!(load_records(&p).unwrap().sample_rate_hz, 50.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn save_then_load_is_identity(
            shapes in prop::collection::vec((1usize..12, any::<bool>()), 1..5),
            n in 1usize..5,
            seed in any::<u64>(),
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let records: Vec<Record> = shapes
                .iter()
                .enumerate()
                .map(|(i, &(len, anomalous))| {
                    // wide dynamic range exercises the shortest round-trip formatting
                    let data = (0..len * n).map(|_| rng.random_range(-1.0f64..1.0) * 10f64.powi(rng.random_range(-8..8))).collect();
                    let kind = anomalous.then(|| "spike".to_string());
                    Record::new(format!("r{i}"), Matrix::new(len, n, data).unwrap(), kind, 50.0).unwrap()
                })
                .collect();
            let ds = Dataset::new(records).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("d.csv");
            save_records(&ds, &path).unwrap();
            let back = load_records(&path).unwrap();
            prop_assert_eq!(back.records, ds.records);
            prop_assert_eq!(back.sample_rate_hz, 50.0);
        }
    }
}
