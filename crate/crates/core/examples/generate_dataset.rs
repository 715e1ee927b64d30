//! Sample option inputs, price them exactly, filter, split and save.
//!
//!     cargo run --example generate_dataset -- 20000 out.csv

use annpricer::dataset::{generate, load_csv, save_csv, split, SamplingRanges};

fn main() -> annpricer::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(20_000);
    let out = args.next().unwrap_or_else(|| {
        std::env::temp_dir().join("annpricer_dataset.csv").to_string_lossy().into_owned()
    });

    let ranges = SamplingRanges::default();
    for (name, b) in ranges.fields() {
        println!("{name:>6} in [{}, {}]", b.lower, b.upper);
    }
    let ds = split(generate(n, &ranges, 42)?, 0.8, 42)?;
    let stats = ds.provenance.as_ref().map(|p| p.stats).unwrap_or_default();
    println!(
        "requested {}, kept {} ({} below floor, {} above cap)",
        stats.requested, stats.kept, stats.below_floor, stats.above_cap
    );
    println!("train {} / test {}", ds.train_indices().len(), ds.test_indices().len());

    save_csv(&ds, &out)?;
    let back = load_csv(&out)?;
    assert_eq!(back.samples, ds.samples);
    println!("wrote {out} and read it back unchanged");
    Ok(())
}
