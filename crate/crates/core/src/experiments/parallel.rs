//! Data-parallel map over independent work items.
//!
//! Sweep repeats are embarrassingly parallel and each one derives its own
//! RNG streams, so results are identical whether they run on one thread or
//! many. The `parallel` feature (on by default) fans work out with rayon;
//! without it the same helper runs sequentially.

use crate::{Error, Result};

/// Pin the rayon pool size. Call before the first parallel command; once the
/// global pool exists the size cannot change, and asking again for a
/// different size is an error. Without the `parallel` feature any request
/// other than 1 is rejected.
#[cfg(feature = "parallel")]
pub fn set_thread_count(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidInput("thread count must be at least 1".into()));
    }
    match rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
        Ok(()) => Ok(()),
        Err(_) if rayon::current_num_threads() == n => Ok(()),
        Err(_) => Err(Error::InvalidInput(format!(
            "thread pool already initialized with {} threads",
            rayon::current_num_threads()
        ))),
    }
}

#[cfg(not(feature = "parallel"))]
pub fn set_thread_count(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidInput("thread count must be at least 1".into()));
    }
    if n != 1 {
        return Err(Error::InvalidInput(
            "built without the parallel feature; only 1 thread is available".into(),
        ));
    }
    Ok(())
}

/// Apply `f` to every index in `0..n`, preserving order, failing on the
/// first error (by index, so failures are deterministic too).
#[cfg(feature = "parallel")]
pub(crate) fn try_map_indexed<T, F>(n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    use rayon::prelude::*;
    let results: Vec<Result<T>> = (0..n).into_par_iter().map(f).collect();
    results.into_iter().collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn try_map_indexed<T, F>(n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    (0..n).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_preserves_order() {
        let out = try_map_indexed(100, |i| Ok(i * i)).unwrap();
        assert_eq!(out.len(), 100);
        assert!(out.iter().enumerate().all(|(i, &v)| v == i * i));
    }

    #[test]
    fn map_surfaces_errors() {
        let out = try_map_indexed(10, |i| {
            if i == 7 {
                Err(Error::InvalidInput("boom".into()))
            } else {
                Ok(i)
            }
        });
        assert!(out.is_err());
    }

    #[test]
    fn zero_threads_is_rejected() {
        assert!(set_thread_count(0).is_err());
    }
}
