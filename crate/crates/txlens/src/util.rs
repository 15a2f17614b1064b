//! Small execution helpers shared across the pipeline.

/// Whether batch work runs on the rayon pool or on the current thread.
///
/// With the `parallel` feature disabled, `Parallel` quietly degrades to
/// sequential execution so callers do not need their own feature gates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecMode {
    Sequential,
    /// Run on a rayon pool; `workers` bounds the pool size, defaulting to
    /// the number of available CPUs.
    Parallel { workers: Option<usize> },
}

impl ExecMode {
    pub fn parallel_enabled(&self) -> bool {
        matches!(self, ExecMode::Parallel { .. }) && cfg!(feature = "parallel")
    }
}

/// Maps `f` over a slice, preserving input order in the output.
#[cfg(feature = "parallel")]
pub fn map_slice<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

/// Maps `f` over a slice, preserving input order in the output.
#[cfg(not(feature = "parallel"))]
pub fn map_slice<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    items.iter().map(f).collect()
}

/// Runs `f`, honouring the execution mode: on a bounded rayon pool for
/// `Parallel { workers: Some(n) }`, on the default pool for unbounded
/// parallel runs, and inline otherwise.
#[cfg(feature = "parallel")]
pub fn run_in_mode<R: Send>(mode: ExecMode, f: impl FnOnce() -> R + Send) -> R {
    match mode {
        ExecMode::Parallel { workers: Some(n) } if n > 0 => {
            match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
                Ok(pool) => pool.install(f),
                Err(e) => {
                    log::warn!("failed to build a {n}-thread pool ({e}), using the default pool");
                    f()
                }
            }
        }
        _ => f(),
    }
}

/// Runs `f`, honouring the execution mode: on a bounded rayon pool for
/// `Parallel { workers: Some(n) }`, on the default pool for unbounded
/// parallel runs, and inline otherwise.
#[cfg(not(feature = "parallel"))]
pub fn run_in_mode<R: Send>(_mode: ExecMode, f: impl FnOnce() -> R + Send) -> R {
    f()
}

/// Maps `f` over a slice sequentially regardless of features; used where
/// determinism matters more than speed.
pub fn map_slice_seq<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U,
{
    items.iter().map(f).collect()
}

/// Truncates `text` to at most `budget` characters, appending a marker when
/// anything was dropped. Splits on a char boundary.
pub fn truncate_with_marker(text: &str, budget: usize) -> String {
    const MARKER: &str = "\n[truncated]";
    if text.chars().count() <= budget {
        return text.to_string();
    }
    let kept: String = text.chars().take(budget).collect();
    format!("{kept}{MARKER}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_slice_preserves_order() {
        let items: Vec<u32> = (0..100).collect();
        let doubled = map_slice(&items, |x| x * 2);
        assert_eq!(doubled, (0..100).map(|x| x * 2).collect::<Vec<_>>());
    }

    #[test]
    fn truncation_appends_marker_only_when_needed() {
        assert_eq!(truncate_with_marker("short", 10), "short");
        let long = "a".repeat(20);
        let cut = truncate_with_marker(&long, 10);
        assert_eq!(cut, format!("{}\n[truncated]", "a".repeat(10)));
    }

    #[test]
    fn truncation_respects_char_boundaries() {
        let text = "héllo wörld, ünïcode everywhere";
        let cut = truncate_with_marker(text, 5);
        assert!(cut.starts_with("héllo"));
    }

    #[test]
    fn run_in_mode_returns_closure_result() {
        let sum: u64 = run_in_mode(ExecMode::Sequential, || (1..=10).sum());
        assert_eq!(sum, 55);
        let sum: u64 = run_in_mode(ExecMode::Parallel { workers: Some(2) }, || (1..=10).sum());
        assert_eq!(sum, 55);
    }
}
