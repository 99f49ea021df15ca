//! Text form of the training records: one row per impression.
//!
//! Header: `query_id,city,listing_id,position,booked,clicked,long_view_seconds`
//! followed by the schema's feature names. Consecutive rows with the same
//! query id form one record, so a record with no impressions has no CSV form.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use super::{Impression, RecordSchema, SearchRecord};
use crate::error::{Error, Result};

const FIXED_COLUMNS: [&str; 7] = [
    "query_id",
    "city",
    "listing_id",
    "position",
    "booked",
    "clicked",
    "long_view_seconds",
];

pub fn write_csv_records(records: &[SearchRecord], schema: &RecordSchema, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    let header: Vec<&str> = FIXED_COLUMNS
        .iter()
        .copied()
        .chain(schema.feature_names.iter().map(String::as_str))
        .collect();
    writeln!(w, "{}", header.join(",")).map_err(io)?;
    for r in records {
        for imp in &r.impressions {
            if imp.features.len() != schema.len() {
                return Err(Error::Schema(format!(
                    "query {} listing {}: {} features, schema has {}",
                    r.query_id,
                    imp.listing_id,
                    imp.features.len(),
                    schema.len()
                )));
            }
            write!(
                w,
                "{},{},{},{},{},{},{}",
                r.query_id,
                r.city,
                imp.listing_id,
                imp.position,
                imp.booked as u8,
                imp.clicked as u8,
                imp.long_view_seconds
            )
            .map_err(io)?;
            for f in &imp.features {
                write!(w, ",{f}").map_err(io)?;
            }
            writeln!(w).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, line: u64) -> Result<T> {
    let raw = &rec[i];
    raw.parse().map_err(|_| Error::Csv {
        line,
        message: format!("cannot parse `{raw}` in column {}", i + 1),
    })
}

fn flag(rec: &csv::StringRecord, i: usize, line: u64) -> Result<bool> {
    match &rec[i] {
        "0" => Ok(false),
        "1" => Ok(true),
        other => Err(Error::Csv {
            line,
            message: format!("flag column {} must be 0 or 1, got `{other}`", i + 1),
        }),
    }
}

pub fn read_csv_records(path: impl AsRef<Path>, schema: &RecordSchema) -> Result<Vec<SearchRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(BufReader::with_capacity(1 << 16, file));
    let csv_err = |e: csv::Error| Error::Csv {
        line: e.position().map_or(0, |p| p.line()),
        message: e.to_string(),
    };
    let header = rdr.headers().map_err(csv_err)?.clone();
    let expected: Vec<&str> = FIXED_COLUMNS
        .iter()
        .copied()
        .chain(schema.feature_names.iter().map(String::as_str))
        .collect();
    if header.iter().ne(expected.iter().copied()) {
        return Err(Error::Schema(format!(
            "csv header `{}` does not match schema `{}`",
            header.iter().collect::<Vec<_>>().join(","),
            expected.join(",")
        )));
    }
    let k = schema.len();
    let mut records: Vec<SearchRecord> = Vec::new();
    let mut row = csv::StringRecord::new();
    loop {
        match rdr.read_record(&mut row) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => return Err(csv_err(e)),
        }
        let line = row.position().map_or(0, |p| p.line());
        let query_id: u64 = field(&row, 0, line)?;
        let city: u32 = field(&row, 1, line)?;
        let mut features = Vec::with_capacity(k);
        for j in 0..k {
            features.push(field::<f32>(&row, FIXED_COLUMNS.len() + j, line)?);
        }
        let imp = Impression {
            listing_id: field(&row, 2, line)?,
            position: field(&row, 3, line)?,
            booked: flag(&row, 4, line)?,
            clicked: flag(&row, 5, line)?,
            long_view_seconds: field(&row, 6, line)?,
            features,
        };
        match records.last_mut() {
            Some(r) if r.query_id == query_id => r.impressions.push(imp),
            _ => records.push(SearchRecord {
                query_id,
                city,
                impressions: vec![imp],
            }),
        }
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Vec<SearchRecord> {
        let imp = |id, pos, booked, f: f32| Impression {
            listing_id: id,
            position: pos,
            clicked: booked,
            long_view_seconds: if booked { 61.25 } else { 0.0 },
            booked,
            features: vec![f, -f / 3.0],
        };
        vec![
            SearchRecord {
                query_id: 3,
                city: 1,
                impressions: vec![imp(10, 0, false, 0.1), imp(11, 1, true, 1e-7)],
            },
            SearchRecord {
                query_id: 4,
                city: 0,
                impressions: vec![imp(10, 0, true, 12345.678)],
            },
        ]
    }

    #[test]
    fn round_trip_matches_binary() {
        let dir = tempfile::tempdir().unwrap();
        let schema = RecordSchema::new(&["x", "y"]);
        let p = dir.path().join("r.csv");
        write_csv_records(&sample(), &schema, &p).unwrap();
        assert_eq!(read_csv_records(&p, &schema).unwrap(), sample());
    }

    #[test]
    fn header_mismatch_is_schema_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        write_csv_records(&sample(), &RecordSchema::new(&["x", "y"]), &p).unwrap();
        let err = read_csv_records(&p, &RecordSchema::new(&["x", "z"])).unwrap_err();
        assert!(matches!(err, Error::Schema(_)));
    }

    #[test]
    fn ragged_row_names_its_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        std::fs::write(
            &p,
            "query_id,city,listing_id,position,booked,clicked,long_view_seconds,x\n1,0,5,0,1,1,0,0.5\n1,0,6,1,0,0,0\n",
        )
        .unwrap();
        match read_csv_records(&p, &RecordSchema::new(&["x"])) {
            Err(Error::Csv { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected csv error, got {other:?}"),
        }
    }
}
