//! Data-parallel helpers. With the `parallel` feature these fan out on the
//! rayon pool; without it they run the same closures sequentially. Results
//! always come back in input order so reductions are scheduling-independent.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Map `f` over `0..len`, preserving order.
pub fn map_range<R, F>(len: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..len).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..len).map(f).collect()
    }
}

/// Map `f` over a slice, preserving order.
pub fn map_slice<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Map then fold with an associative, commutative combiner. Partial results
/// are combined in index order.
pub fn map_reduce<R, F, G>(len: usize, identity: R, f: F, combine: G) -> R
where
    R: Send + Clone,
    F: Fn(usize) -> R + Sync + Send,
    G: Fn(R, R) -> R,
{
    map_range(len, f).into_iter().fold(identity, combine)
}

/// Whether the crate was built with the rayon backend.
pub const fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}
