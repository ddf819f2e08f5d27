//! Reads a raw trace with its own column names, drops malformed rows,
//! applies the default range filter and reports the MT/MCR correlation.

use callscale::features::{extract, pearson};
use callscale::trace::{
    filter_ranges, ingest_csv, write_csv, Provenance, Schema, DEFAULT_MCR_BOUNDS,
    DEFAULT_MT_BOUNDS,
};

const RAW: &str = "\
ts,service,pod,rt_ms,calls_per_s
0,cart,cart-0,12.5,3.2
0,cart,cart-1,14.0,3.9
30,cart,cart-0,not-a-number,4.0
30,search,search-0,220.0,21.0
60,search,search-0,240.0,22.5
60,search,search-1,-3.0,20.0
90,auth,auth-0,0.004,1.0
90,auth,auth-0,3.0,0.9
";

fn main() -> callscale::Result<()> {
    let schema = Schema {
        timestamp: "ts".into(),
        microservice: "service".into(),
        container: "pod".into(),
        mt: "rt_ms".into(),
        mcr: "calls_per_s".into(),
    };
    let ingested = ingest_csv(RAW.as_bytes(), &schema, Provenance::File("inline".into()))?;
    println!(
        "{} valid rows, {} skipped",
        ingested.dataset.len(),
        ingested.skipped
    );

    let filtered = filter_ranges(&ingested.dataset, DEFAULT_MT_BOUNDS, DEFAULT_MCR_BOUNDS)?;
    println!("{} rows inside the default MT/MCR ranges", filtered.len());

    let features = extract(&filtered)?;
    println!("pearson(mt, mcr) = {:.3}", pearson(&features)?);

    println!("\ncanonical CSV:");
    write_csv(&filtered, std::io::stdout().lock(), &Schema::default())
}
