//! Map helpers that run on rayon when the `parallel` feature is on.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Maps `f` over `items` and returns results in input order.
pub(crate) fn map_ordered<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
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
