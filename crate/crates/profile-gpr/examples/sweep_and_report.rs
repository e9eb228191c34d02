//! A miniature benchmark sweep: a few cases from the stratified desk
//! preset, two methods, a resumable results database, and the summary
//! tables built from it.
//!
//! Run with: cargo run --example sweep_and_report

use profile_gpr::bench::{
    desk_cases, read_records, run_sweep, summaries_to_csv, summarize, worst_fits, MethodSpec,
    SweepOptions,
};

fn main() {
    let cases: Vec<_> = desk_cases().into_iter().take(6).collect();
    let methods = [MethodSpec::EbGibbs, MethodSpec::EbChangePoint];
    let dir = std::env::temp_dir().join("profile-gpr-sweep-demo");
    std::fs::create_dir_all(&dir).unwrap();
    let db = dir.join("records.csv");
    let _ = std::fs::remove_file(&db);

    let opts = SweepOptions::default();
    let records = run_sweep(&cases, &methods, &db, &opts).unwrap();
    println!("swept {} cases x {} methods -> {} records", cases.len(), methods.len(), records.len());
    println!("database: {}", db.display());

    // The database is append-only and keyed by (method, case seed), so a
    // second run finds nothing to do and leaves the file untouched.
    let before = std::fs::read(&db).unwrap();
    run_sweep(&cases, &methods, &db, &opts).unwrap();
    assert_eq!(std::fs::read(&db).unwrap(), before);
    println!("rerun left the database byte-identical (resume semantics)");

    let loaded = read_records(&db).unwrap();
    let rows = summarize(&loaded, Some("regime")).unwrap();
    println!("\nmean RMSE by regime:\n{}", summaries_to_csv(&rows));

    // The worst fit per method, refit with both methods for comparison.
    let bundles = worst_fits(&loaded, 1, &methods, &opts.run).unwrap();
    for b in &bundles {
        println!("worst case for {}: seed {} rmse {:.5}", b.method, b.seed, b.rmse);
        for f in &b.fits {
            println!("  refit {:<10} rmse {:.5}", f.method, f.rmse.unwrap());
        }
    }
}
