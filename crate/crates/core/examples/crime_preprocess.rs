//! Loads Communities & Crime and prints the preprocessing report.
//!
//! Usage: `cargo run --example crime_preprocess -- path/to/communities.data`

use std::path::PathBuf;

use eopfair::data::load_communities;

fn main() {
    let path: PathBuf = std::env::args().nth(1).unwrap_or_else(|| "data/communities.data".into()).into();
    let (ds, report) = match load_communities(&path) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("{e}");
            std::process::exit(2);
        }
    };
    println!("raw rows        {}", report.raw_rows);
    println!("rows dropped    {}", report.rows_dropped);
    println!("candidate cols  {}", report.candidate_features);
    println!("sparse dropped  {}", report.columns_dropped.len());
    println!("imputed cells   {}", report.imputed_cells);
    println!("features        {} (last is the group indicator)", ds.k());
    println!("group sizes     {:?}", report.group_sizes);
    println!("target scale    {}", report.target_scale);
}
