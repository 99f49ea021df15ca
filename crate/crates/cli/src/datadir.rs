use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use rankforge::data::{
    read_records, write_csv_records, write_records, City, Listing, Marketplace, Query, RecordSchema, SearchRecord,
};
use serde::{Deserialize, Serialize};

pub const MARKETPLACE_FILE: &str = "marketplace.json";
pub const RECORDS_FILE: &str = "records.abrk";
pub const CSV_FILE: &str = "records.csv";

#[derive(Serialize, Deserialize)]
struct MarketplaceMeta {
    cities: Vec<City>,
    listings: Vec<Listing>,
    queries: Vec<Query>,
}

/// A generated data directory, loaded.
pub struct DataDir {
    pub cities: Vec<City>,
    pub listings: Vec<Listing>,
    pub queries: Vec<Query>,
    pub schema: RecordSchema,
    pub records: Vec<SearchRecord>,
}

impl DataDir {
    pub fn city_names(&self) -> Vec<String> {
        self.cities.iter().map(|c| c.name.clone()).collect()
    }
}

/// Writes the marketplace metadata and binary records (and CSV when asked);
/// returns the file names written.
pub fn write_data_dir(dir: &Path, m: &Marketplace, csv: bool) -> Result<Vec<&'static str>> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let meta = MarketplaceMeta {
        cities: m.cities.clone(),
        listings: m.listings.clone(),
        queries: m.queries.clone(),
    };
    fs::write(dir.join(MARKETPLACE_FILE), serde_json::to_vec(&meta)?)?;
    write_records(&m.records, &m.schema, dir.join(RECORDS_FILE))?;
    let mut files = vec![MARKETPLACE_FILE, RECORDS_FILE];
    if csv {
        write_csv_records(&m.records, &m.schema, dir.join(CSV_FILE))?;
        files.push(CSV_FILE);
    }
    Ok(files)
}

pub fn load_data_dir(dir: &Path) -> Result<DataDir> {
    let meta_path = dir.join(MARKETPLACE_FILE);
    let meta: MarketplaceMeta =
        serde_json::from_slice(&fs::read(&meta_path).with_context(|| format!("reading {}", meta_path.display()))?)
            .with_context(|| format!("parsing {}", meta_path.display()))?;
    let (schema, records) = read_records(dir.join(RECORDS_FILE))?;
    Ok(DataDir {
        cities: meta.cities,
        listings: meta.listings,
        queries: meta.queries,
        schema,
        records,
    })
}
