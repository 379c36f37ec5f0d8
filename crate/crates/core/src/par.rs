//! Per-unit fan-out. With the `parallel` feature work is spread over a rayon
//! pool; without it (or with a single job) units run in order on the caller's
//! thread. Results are always returned in unit order.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Worker-count request. `None` means one worker per available core.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Jobs(pub Option<usize>);

impl Jobs {
    pub const SERIAL: Jobs = Jobs(Some(1));

    pub fn is_serial(&self) -> bool {
        !cfg!(feature = "parallel") || self.0 == Some(1)
    }
}

pub fn map_indexed<R, F>(n: usize, jobs: Jobs, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    if jobs.is_serial() {
        return (0..n).map(f).collect();
    }
    #[cfg(feature = "parallel")]
    {
        let run = || (0..n).into_par_iter().map(&f).collect();
        match jobs.0 {
            Some(k) => match rayon::ThreadPoolBuilder::new().num_threads(k).build() {
                Ok(pool) => pool.install(run),
                Err(e) => {
                    log::warn!("could not build a {k}-thread pool ({e}); using the global pool");
                    run()
                }
            },
            None => run(),
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

pub fn try_map_indexed<R, E, F>(n: usize, jobs: Jobs, f: F) -> Result<Vec<R>, E>
where
    R: Send,
    E: Send,
    F: Fn(usize) -> Result<R, E> + Sync + Send,
{
    map_indexed(n, jobs, f).into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved() {
        let serial = map_indexed(1000, Jobs::SERIAL, |i| i * i);
        let parallel = map_indexed(1000, Jobs(Some(4)), |i| i * i);
        let default = map_indexed(1000, Jobs::default(), |i| i * i);
        assert_eq!(serial, parallel);
        assert_eq!(serial, default);
    }

    #[test]
    fn first_error_in_unit_order() {
        let r: Result<Vec<usize>, usize> =
            try_map_indexed(100, Jobs(Some(3)), |i| if i % 40 == 39 { Err(i) } else { Ok(i) });
        assert_eq!(r, Err(39));
    }
}
