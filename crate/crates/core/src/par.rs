//! Order-preserving parallel map over scoped threads.
//!
//! Work is split into contiguous chunks, one per worker, and the per-chunk
//! outputs are concatenated in input order. Results are therefore identical
//! for any worker count as long as the mapped function is pure.

/// Applies `f` to disjoint contiguous chunks of `items` on up to `workers`
/// threads and concatenates the outputs in chunk order.
pub fn par_map_chunks<T, U, F>(items: &[T], workers: usize, f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&[T]) -> Vec<U> + Sync,
{
    let workers = workers.max(1);
    if workers == 1 || items.len() < 2 {
        return f(items);
    }
    let chunk = items.len().div_ceil(workers);
    let mut out = Vec::with_capacity(items.len());
    std::thread::scope(|scope| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|slice| scope.spawn(|| f(slice)))
            .collect();
        for h in handles {
            out.extend(h.join().expect("worker thread panicked"));
        }
    });
    out
}
