//! Data-parallel helpers with a sequential fallback when the `parallel`
//! feature is disabled. Reduction order is fixed so results are identical
//! with any thread count.

/// Batch items are folded in fixed-size chunks; chunk results merge in chunk
/// order, so floating-point accumulation order does not depend on scheduling.
pub(crate) const GRAD_CHUNK: usize = 16;

#[cfg(feature = "parallel")]
pub(crate) fn map_indexed<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    items
        .par_iter()
        .enumerate()
        .map(|(i, item)| f(i, item))
        .collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn map_indexed<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    F: Fn(usize, &T) -> R,
{
    items
        .iter()
        .enumerate()
        .map(|(i, item)| f(i, item))
        .collect()
}

/// Fold `items` into per-chunk accumulators (chunks of [`GRAD_CHUNK`]), then
/// merge the chunk accumulators left to right. `fold` receives the item's
/// global index.
#[cfg(feature = "parallel")]
pub(crate) fn chunked_fold<T, A, I, F, M>(items: &[T], init: I, fold: F, merge: M) -> Option<A>
where
    T: Sync,
    A: Send,
    I: Fn() -> A + Sync + Send,
    F: Fn(&mut A, usize, &T) + Sync + Send,
    M: Fn(&mut A, A),
{
    use rayon::prelude::*;
    let chunks: Vec<A> = items
        .par_chunks(GRAD_CHUNK)
        .enumerate()
        .map(|(ci, chunk)| {
            let mut acc = init();
            for (j, item) in chunk.iter().enumerate() {
                fold(&mut acc, ci * GRAD_CHUNK + j, item);
            }
            acc
        })
        .collect();
    let mut iter = chunks.into_iter();
    let mut total = iter.next()?;
    for acc in iter {
        merge(&mut total, acc);
    }
    Some(total)
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn chunked_fold<T, A, I, F, M>(items: &[T], init: I, fold: F, merge: M) -> Option<A>
where
    I: Fn() -> A,
    F: Fn(&mut A, usize, &T),
    M: Fn(&mut A, A),
{
    let chunks: Vec<A> = items
        .chunks(GRAD_CHUNK)
        .enumerate()
        .map(|(ci, chunk)| {
            let mut acc = init();
            for (j, item) in chunk.iter().enumerate() {
                fold(&mut acc, ci * GRAD_CHUNK + j, item);
            }
            acc
        })
        .collect();
    let mut iter = chunks.into_iter();
    let mut total = iter.next()?;
    for acc in iter {
        merge(&mut total, acc);
    }
    Some(total)
}
