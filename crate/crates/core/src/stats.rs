//! Schedule-independent parallel accumulation.
//!
//! Work items are grouped into fixed-size chunks. Each chunk is summed
//! sequentially, chunks run in parallel, and the chunk totals are folded in
//! chunk order. The floating-point result is therefore identical for any
//! rayon pool size.

use rayon::prelude::*;

use crate::error::Result;

pub(crate) const CHUNK: usize = 32;

/// Sums `width` accumulators over items `0..n`. `f(i, acc)` adds item `i`'s
/// contribution into `acc`.
pub(crate) fn chunked_sum<F>(n: usize, width: usize, f: F) -> Result<Vec<f64>>
where
    F: Fn(usize, &mut [f64]) -> Result<()> + Sync,
{
    let chunks = n.div_ceil(CHUNK);
    let partials: Vec<Result<Vec<f64>>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = vec![0.0; width];
            for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
                f(i, &mut acc)?;
            }
            Ok(acc)
        })
        .collect();
    let mut total = vec![0.0; width];
    for part in partials {
        for (t, p) in total.iter_mut().zip(part?) {
            *t += p;
        }
    }
    Ok(total)
}

/// Sample mean and standard error of the mean from a sum and a sum of squares.
pub(crate) fn mean_and_se(sum: f64, sum_sq: f64, n: usize) -> (f64, f64) {
    let nf = n as f64;
    let mean = sum / nf;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = ((sum_sq - nf * mean * mean) / (nf - 1.0)).max(0.0);
    (mean, (var / nf).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunked_sum_matches_between_pools() {
        let run = |threads: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| {
                    chunked_sum(1000, 2, |i, acc| {
                        let x = (i as f64 * 0.37).sin() * 1e-3 + 1.0 / (i as f64 + 1.0);
                        acc[0] += x;
                        acc[1] += x * x;
                        Ok(())
                    })
                    .unwrap()
                })
        };
        let a = run(1);
        let b = run(8);
        assert_eq!(a[0].to_bits(), b[0].to_bits());
        assert_eq!(a[1].to_bits(), b[1].to_bits());
    }

    #[test]
    fn mean_and_se_of_constant_sample() {
        let (m, se) = mean_and_se(10.0, 20.0, 5);
        assert_eq!(m, 2.0);
        assert!(se.abs() < 1e-12);
    }
}
