//! Landmark datasets in JSON or CSV.
//!
//! JSON: `{"groups": [{"name", "landmarks": K, "dims": D, "specimens": [[[x, y], ...], ...]}]}`.
//! CSV: one row per `(group, specimen, landmark)` with header
//! `group,specimen,landmark,x1,...,xD`; landmarks are numbered from 1.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Mat;

#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkSample {
    pub name: String,
    pub specimens: Vec<Mat>,
}

impl LandmarkSample {
    pub fn k(&self) -> usize {
        self.specimens.first().map_or(0, |x| x.nrows())
    }

    pub fn d(&self) -> usize {
        self.specimens.first().map_or(0, |x| x.ncols())
    }

    pub fn n(&self) -> usize {
        self.specimens.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataFormat {
    Json,
    Csv,
}

impl DataFormat {
    /// `.csv` means CSV, anything else JSON.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => DataFormat::Csv,
            _ => DataFormat::Json,
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonDataset {
    groups: Vec<JsonGroup>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonGroup {
    name: String,
    landmarks: usize,
    dims: usize,
    specimens: Vec<Vec<Vec<f64>>>,
}

pub fn load_dataset(path: &Path, format: DataFormat) -> Result<Vec<LandmarkSample>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let parsed = match format {
        DataFormat::Json => parse_json(&text),
        DataFormat::Csv => parse_csv(&text),
    };
    parsed.map_err(|e| match e {
        Error::Data(m) => Error::Data(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn parse_json(text: &str) -> Result<Vec<LandmarkSample>> {
    let ds: JsonDataset = serde_json::from_str(text).map_err(|e| Error::Data(format!("malformed JSON: {e}")))?;
    let mut out = Vec::with_capacity(ds.groups.len());
    for g in ds.groups {
        let mut specimens = Vec::with_capacity(g.specimens.len());
        for (s, rows) in g.specimens.iter().enumerate() {
            if rows.len() != g.landmarks {
                return Err(Error::Data(format!(
                    "group '{}' specimen {}: {} landmarks, expected {}",
                    g.name,
                    s + 1,
                    rows.len(),
                    g.landmarks
                )));
            }
            for (l, row) in rows.iter().enumerate() {
                if row.len() != g.dims {
                    return Err(Error::Data(format!(
                        "group '{}' specimen {} landmark {}: {} coordinates, expected {}",
                        g.name,
                        s + 1,
                        l + 1,
                        row.len(),
                        g.dims
                    )));
                }
            }
            specimens.push(Mat::from_fn(g.landmarks, g.dims, |i, j| rows[i][j]));
        }
        out.push(LandmarkSample { name: g.name, specimens });
    }
    validate(&out)?;
    Ok(out)
}

pub fn parse_csv(text: &str) -> Result<Vec<LandmarkSample>> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| Error::Data(format!("CSV header: {e}")))?
        .clone();
    let fixed = ["group", "specimen", "landmark"];
    if header.len() < 4 || header.iter().take(3).zip(fixed).any(|(h, f)| !h.eq_ignore_ascii_case(f)) {
        return Err(Error::Data(format!(
            "CSV header must be group,specimen,landmark,x1..xD, got '{}'",
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let d = header.len() - 3;

    // (group, [(specimen, [(landmark, coords, row)])]) in order of appearance
    type Specimen = (String, Vec<(usize, Vec<f64>, usize)>);
    let mut groups: Vec<(String, Vec<Specimen>)> = Vec::new();
    for (idx, rec) in reader.records().enumerate() {
        let row = idx + 2;
        let rec = rec.map_err(|e| Error::Data(format!("CSV row {row}: {e}")))?;
        if rec.iter().all(str::is_empty) {
            continue;
        }
        let (group, specimen) = (rec.get(0).unwrap_or(""), rec.get(1).unwrap_or(""));
        if rec.len() != header.len() {
            return Err(Error::Data(format!(
                "CSV row {row} (group '{group}', specimen '{specimen}'): {} fields, expected {}",
                rec.len(),
                header.len()
            )));
        }
        let landmark: usize = rec[2].parse().ok().filter(|&l| l >= 1).ok_or_else(|| {
            Error::Data(format!("CSV row {row}, column 3: landmark '{}' is not a positive integer", &rec[2]))
        })?;
        let mut coords = Vec::with_capacity(d);
        for c in 0..d {
            let raw = &rec[3 + c];
            let v: f64 = raw.parse().map_err(|_| {
                Error::Data(format!("CSV row {row}, column {} ({}): '{raw}' is not a number", 4 + c, &header[3 + c]))
            })?;
            coords.push(v);
        }
        let gi = match groups.iter().position(|(g, _)| g == group) {
            Some(i) => i,
            None => {
                groups.push((group.to_string(), Vec::new()));
                groups.len() - 1
            }
        };
        let specs = &mut groups[gi].1;
        let si = match specs.iter().position(|(s, _)| s == specimen) {
            Some(i) => i,
            None => {
                specs.push((specimen.to_string(), Vec::new()));
                specs.len() - 1
            }
        };
        specs[si].1.push((landmark, coords, row));
    }

    let mut out = Vec::with_capacity(groups.len());
    for (name, specs) in groups {
        let mut specimens = Vec::with_capacity(specs.len());
        for (sname, mut rows) in specs {
            rows.sort_by_key(|r| r.0);
            let k = rows.len();
            for (expect, (l, _, row)) in rows.iter().enumerate() {
                if *l != expect + 1 {
                    return Err(Error::Data(format!(
                        "group '{name}' specimen '{sname}' (CSV row {row}): landmarks must be numbered 1..{k} without gaps or repeats, found {l}"
                    )));
                }
            }
            specimens.push(Mat::from_fn(k, d, |i, j| rows[i].1[j]));
        }
        out.push(LandmarkSample { name, specimens });
    }
    validate(&out)?;
    Ok(out)
}

/// Uniform `K x D` with `K > D`, at least two specimens per group, unique
/// group names and finite coordinates.
pub fn validate(groups: &[LandmarkSample]) -> Result<()> {
    let first = groups
        .iter()
        .find_map(|g| g.specimens.first())
        .ok_or_else(|| Error::Data("dataset has no specimens".into()))?;
    let (k, d) = first.shape();
    for (gi, g) in groups.iter().enumerate() {
        if groups[..gi].iter().any(|h| h.name == g.name) {
            return Err(Error::Data(format!("group name '{}' is used twice", g.name)));
        }
        if g.n() < 2 {
            return Err(Error::Data(format!("group '{}' has {} specimen(s), need at least 2", g.name, g.n())));
        }
        for (s, x) in g.specimens.iter().enumerate() {
            if x.shape() != (k, d) {
                return Err(Error::Data(format!(
                    "group '{}' specimen {} is {}x{}, expected {k}x{d}",
                    g.name,
                    s + 1,
                    x.nrows(),
                    x.ncols()
                )));
            }
            if let Some(t) = x.iter().position(|v| !v.is_finite()) {
                return Err(Error::Data(format!(
                    "group '{}' specimen {} landmark {} coordinate {} is not finite",
                    g.name,
                    s + 1,
                    t % k + 1,
                    t / k + 1
                )));
            }
        }
    }
    if d == 0 || k <= d {
        return Err(Error::Data(format!("need more landmarks than dimensions, got K = {k}, D = {d}")));
    }
    Ok(())
}

pub fn to_json(groups: &[LandmarkSample]) -> String {
    let ds = JsonDataset {
        groups: groups
            .iter()
            .map(|g| JsonGroup {
                name: g.name.clone(),
                landmarks: g.k(),
                dims: g.d(),
                specimens: g.specimens.iter().map(crate::linalg::to_rows).collect(),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&ds).expect("dataset serialises")
}

/// Specimens are labelled `1..n`; floats use the shortest round-trip form.
pub fn to_csv(groups: &[LandmarkSample]) -> Result<String> {
    let d = groups.first().map_or(0, LandmarkSample::d);
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["group".to_string(), "specimen".into(), "landmark".into()];
    header.extend((1..=d).map(|c| format!("x{c}")));
    let csv_err = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(&header).map_err(csv_err)?;
    for g in groups {
        for (s, x) in g.specimens.iter().enumerate() {
            for l in 0..x.nrows() {
                let mut rec = vec![g.name.clone(), (s + 1).to_string(), (l + 1).to_string()];
                rec.extend(x.row(l).iter().map(|v| format!("{v}")));
                w.write_record(&rec).map_err(csv_err)?;
            }
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
}

/// Summary line per group, for logs.
pub fn describe(groups: &[LandmarkSample]) -> String {
    let mut s = String::new();
    for g in groups {
        let _ = writeln!(s, "{}: n = {}, K = {}, D = {}", g.name, g.n(), g.k(), g.d());
    }
    s
}
