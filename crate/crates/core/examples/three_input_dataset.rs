//! Writes the bundled three-input CSV used by the CLI tests.
//!
//! Inputs loosely mimic a station record (dew point in C, wind speed in m/s,
//! surface pressure in hPa); the forecast error is two-piece Gaussian with
//! scales driven by wind and pressure.
//!
//!     cargo run -p accrue-core --example three_input_dataset -- out.csv

use accrue_core::io::write_pairs_file;
use accrue_core::seed::seeded_rng;
use accrue_core::special::std_normal_quantile;
use accrue_core::{Dataset, DistributionParams, PairRecord};
use rand::Rng;

fn main() -> accrue_core::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "three_input.csv".into());
    let mut rng = seeded_rng(2024);
    let normal = |rng: &mut accrue_core::seed::SeededRng| {
        std_normal_quantile(accrue_core::distributions::open_unit(rng))
    };
    let mut records = Vec::with_capacity(3000);
    for _ in 0..3000 {
        let dew = 10.0 + 6.0 * normal(&mut rng);
        let wind = rng.random_range(0.0..15.0);
        let pressure = 1013.0 + 8.0 * normal(&mut rng);
        let m = 15.0 + 0.5 * dew;
        let s1 = 0.6 + 0.06 * wind;
        let s2 = 1.0 + 0.5 * (1.0 + ((pressure - 1013.0) / 8.0).tanh());
        let e = DistributionParams::two_piece_gaussian(s1, s2)?.sample(&mut rng);
        records.push(PairRecord::new(vec![dew, wind, pressure], m, m + e)?);
    }
    write_pairs_file(std::path::Path::new(&out), &Dataset::new(3, records)?)?;
    eprintln!("wrote {out}");
    Ok(())
}
