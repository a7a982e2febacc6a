//! Order-preserving map over a slice, parallel when the `parallel` feature is on.
//!
//! Every data-parallel loop in the crate (batch runs, mutation sweeps, codec
//! sweeps) goes through [`map_ordered`], so the sequential fallback is one
//! code path and output order never depends on scheduling.

/// Map `f` over `items`, returning results in input order.
///
/// `parallelism` is the number of worker threads. `1` always runs on the
/// calling thread. Without the `parallel` feature the value is ignored and
/// the map is sequential.
pub fn map_ordered<T, R, F>(items: &[T], parallelism: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    if parallelism <= 1 || items.len() <= 1 {
        return items.iter().map(f).collect();
    }
    imp::map_parallel(items, parallelism, f)
}

/// Whether this build dispatches to a thread pool at all.
pub const fn is_parallel_build() -> bool {
    cfg!(feature = "parallel")
}

#[cfg(feature = "parallel")]
mod imp {
    use rayon::prelude::*;

    pub(super) fn map_parallel<T, R, F>(items: &[T], parallelism: usize, f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        match rayon::ThreadPoolBuilder::new().num_threads(parallelism).build() {
            Ok(pool) => pool.install(|| items.par_iter().map(&f).collect()),
            Err(err) => {
                tracing::warn!(%err, "thread pool unavailable, running sequentially");
                items.iter().map(f).collect()
            }
        }
    }
}

#[cfg(not(feature = "parallel"))]
mod imp {
    pub(super) fn map_parallel<T, R, F>(items: &[T], _parallelism: usize, f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        items.iter().map(f).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved_for_any_parallelism() {
        let items: Vec<u64> = (0..500).collect();
        let expected: Vec<u64> = items.iter().map(|x| x * x).collect();
        for p in [1, 2, 8, 64] {
            assert_eq!(map_ordered(&items, p, |x| x * x), expected);
        }
    }

    #[test]
    fn empty_input() {
        let items: Vec<u8> = Vec::new();
        assert!(map_ordered(&items, 4, |x| *x).is_empty());
    }
}
