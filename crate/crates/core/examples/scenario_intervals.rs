//! PAC transition intervals from noise samples via binomial-tail bounds.

use imdp_synth::abstraction::Partition;
use imdp_synth::geometry::HyperRectangle;
use imdp_synth::noise::NoiseSource;
use imdp_synth::scenario::{binomial_lower, binomial_upper, build_interval_table, confidence_budget};
use nalgebra::{DMatrix, DVector};

fn main() -> imdp_synth::Result<()> {
    for (n, k) in [(25, 25), (100, 50), (3200, 40), (3200, 0)] {
        let side = 0.005;
        println!(
            "N = {n:>4}, {k:>4} inside: [{:.5}, {:.5}]",
            binomial_lower(n, k, side)?,
            binomial_upper(n, k, side)?
        );
    }

    let partition = Partition::new(HyperRectangle::symmetric(1, 4.0)?, vec![8])?;
    let noise = NoiseSource::gaussian(DVector::zeros(1), DMatrix::from_element(1, 1, 0.25))?;
    let samples = noise.sample_set(1000, 7)?;
    let beta = confidence_budget(0.99, partition.num_regions(), partition.num_locations())?;
    let targets: Vec<DVector<f64>> = (0..partition.num_regions())
        .map(|s| DVector::from_vec(partition.center(s)))
        .collect();
    let table = build_interval_table(&targets, &samples, &partition, beta)?;
    println!("beta per interval {beta:.3e}, {} intervals", table.interval_count());
    for (a, row) in table.rows.iter().enumerate().take(3) {
        println!("action {a} -> target {:+.1}", targets[a][0]);
        for e in &row.entries {
            let name = if e.successor == partition.sink() { "sink".to_string() } else { e.successor.to_string() };
            println!("  {name:>4}: [{:.4}, {:.4}]", e.lower, e.upper);
        }
    }
    Ok(())
}
