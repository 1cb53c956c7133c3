//! Per-sample MOS tables from a `sample_id,axis,score` CSV.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use scenetone_core::evaluation::{format_mos, mos_mean, mos_variance, MosAxis, MosSample};
use serde::Serialize;

use crate::error::{Context, Error, Result};

const COLUMNS: [&str; 3] = ["sample_id", "axis", "score"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MosRow {
    pub sample_id: String,
    pub axis: &'static str,
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    /// `"m ± s"`.
    pub mos: String,
}

pub fn read_scores(path: &Path) -> Result<Vec<MosRow>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io("opening scores", path, e))?;
    parse_scores(file, path)
}

/// Rows appear in order of first occurrence of each `(sample, axis)`.
pub fn parse_scores<R: Read>(input: R, path: &Path) -> Result<Vec<MosRow>> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).trim(csv::Trim::All).from_reader(input);
    let bad = |line: u64, m: String| Error::Validation(format!("{}: line {line}: {m}", path.display()));
    let headers = reader.headers().map_err(|e| bad(1, e.to_string()))?.clone();
    let mut cols = [0usize; 3];
    for (slot, name) in cols.iter_mut().zip(COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| bad(1, format!("missing column '{name}' (expected header sample_id,axis,score)")))?;
    }

    let mut order: Vec<(String, MosAxis)> = Vec::new();
    let mut groups: BTreeMap<(String, &'static str), MosSample> = BTreeMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            bad(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != headers.len() {
            return Err(bad(line, format!("expected {} fields, found {}", headers.len(), record.len())));
        }
        let id = &record[cols[0]];
        if id.is_empty() {
            return Err(bad(line, "empty sample_id".into()));
        }
        let axis = MosAxis::parse(&record[cols[1]])
            .ok_or_else(|| bad(line, format!("axis must be valence or arousal, found '{}'", &record[cols[1]])))?;
        let score: f64 = record[cols[2]]
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| bad(line, format!("score '{}' is not a number", &record[cols[2]])))?;
        let key = (id.to_owned(), axis.as_str());
        groups
            .entry(key)
            .or_insert_with(|| {
                order.push((id.to_owned(), axis));
                MosSample { scores: Vec::new(), axis }
            })
            .scores
            .push(score);
    }
    if order.is_empty() {
        return Err(bad(1, "no score rows".into()));
    }
    order
        .into_iter()
        .map(|(id, axis)| {
            let sample = &groups[&(id.clone(), axis.as_str())];
            let what = || format!("MOS of {id} {}", axis.as_str());
            let mean = mos_mean(sample).context(what)?;
            let std = if sample.scores.len() < 2 { 0.0 } else { mos_variance(sample).context(what)?.sqrt() };
            Ok(MosRow {
                n: sample.scores.len(),
                mean,
                std,
                mos: format_mos(sample).context(what)?,
                axis: axis.as_str(),
                sample_id: id,
            })
        })
        .collect()
}

/// CSV table `sample_id,axis,n,mean,std,mos`.
pub fn render_csv(rows: &[MosRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["sample_id", "axis", "n", "mean", "std", "mos"]).expect("in-memory write");
    for r in rows {
        w.write_record([&r.sample_id, r.axis, &r.n.to_string(), &r.mean.to_string(), &r.std.to_string(), &r.mos])
            .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("UTF-8 input")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Vec<MosRow>> {
        parse_scores(text.as_bytes(), Path::new("scores.csv"))
    }

    #[test]
    fn groups_in_first_seen_order() {
        let rows = parse("sample_id,axis,score\ns2,valence,6\ns1,arousal,6\ns2,valence,7\ns2,valence,8\n").unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!((rows[0].sample_id.as_str(), rows[0].mos.as_str()), ("s2", "7.00 ± 1.00"));
        assert_eq!(rows[1].mos, "6.00 ± 0.00");
        assert!(render_csv(&rows).starts_with("sample_id,axis,n,mean,std,mos\ns2,valence,3,7,1,7.00 ± 1.00\n"));
    }

    #[test]
    fn errors_carry_line_numbers() {
        let err = parse("sample_id,score\ns1,6\n").unwrap_err().to_string();
        assert!(err.contains("line 1") && err.contains("axis"), "{err}");
        let err = parse("sample_id,axis,score\ns1,valence,6\ns1,valence\n").unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
        let err = parse("sample_id,axis,score\ns1,valence,6\ns1,joy,6\n").unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
        let err = parse("sample_id,axis,score\ns1,valence,x\n").unwrap_err().to_string();
        assert!(err.contains("line 2"), "{err}");
    }
}
