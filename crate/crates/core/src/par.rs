//! Fan-out helper that switches between rayon and a plain loop.

/// How independent jobs (sessions, seeds) are executed. Results are always
/// returned in input order, so the choice never changes outputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// Falls back to sequential when built without the `parallel` feature.
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Self::Parallel
        } else {
            Self::Sequential
        }
    }
}

pub fn par_map<T, R, F>(exec: Execution, items: Vec<T>, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            items.into_par_iter().map(f).collect()
        }
        _ => items.into_iter().map(f).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_modes_preserve_order() {
        let input: Vec<u64> = (0..100).collect();
        let seq = par_map(Execution::Sequential, input.clone(), |x| x * x);
        let par = par_map(Execution::Parallel, input, |x| x * x);
        assert_eq!(seq, par);
        assert_eq!(seq[9], 81);
    }
}
