//! Fractional max pooling: pseudorandom disjoint regions of width 1 or 2
//! shrink a map by a non-integer ratio, and the gradient flows back only
//! to each region's maximum.
//!
//! Run with `cargo run --example fractional_pooling`.

use gramstyle::network::FMP_RATIO;
use gramstyle::tensor::{fractional_max_pool, pool_backward, PoolRegions};
use gramstyle::Tensor;

fn main() -> gramstyle::Result<()> {
    let regions = PoolRegions::generate(11, 11, FMP_RATIO, 3)?;
    println!("row boundaries {:?}", regions.rows);
    println!("col boundaries {:?}", regions.cols);
    println!("11x11 pools to {:?}", regions.output_shape());

    let x = Tensor::<f64>::from_fn(&[1, 11, 11], |i| ((i * 37) % 23) as f64);
    let pooled = fractional_max_pool(&x, FMP_RATIO, 3)?;
    let (_, h, w) = pooled.value.chw()?;
    for r in 0..h {
        let row: Vec<String> = pooled.value.data()[r * w..(r + 1) * w]
            .iter()
            .map(|v| format!("{v:>3}"))
            .collect();
        println!("{}", row.join(""));
    }

    let grad = pool_backward(&pooled.switches, &Tensor::full(&[1, h, w], 1.0))?;
    println!(
        "gradient reaches {} of {} inputs",
        grad.data().iter().filter(|&&g| g != 0.0).count(),
        x.len()
    );

    for (k, seed) in [1u64, 2, 3].iter().enumerate() {
        let r = PoolRegions::generate(25, 25, FMP_RATIO, *seed)?;
        println!("seed {seed} (stage {k}): 25 -> {:?}, rows {:?}", r.output_shape(), r.rows);
    }
    Ok(())
}
