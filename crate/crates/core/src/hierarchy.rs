//! The score-hierarchy contract shared by all engines.
//!
//! Levels are indexed from `0` (cheapest surrogate) to `level_count() - 1`
//! (the high-fidelity score, whose bound is identically zero). For every
//! surrogate level `k` and every `x` the implementation guarantees
//! `|φ_top(x) − φ_k(x)| ≤ c · ε_k(x)` with `c = error_constant()`.

/// Score and certified bound of one level at one point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LevelEval {
    pub score: f64,
    pub bound: f64,
}

pub trait ScoreHierarchy: Sync {
    fn level_count(&self) -> usize;

    /// Dimension `p` of the parameter space.
    fn dimension(&self) -> usize;

    fn evaluate(&self, x: &[f64], level: usize) -> LevelEval;

    /// Strictly increasing cost proxy (the reduced dimension `d_k`).
    fn cost_rank(&self, level: usize) -> usize;

    /// Constant `c` propagating model-error bounds to score errors.
    fn error_constant(&self) -> f64 {
        1.0
    }

    fn top_level(&self) -> usize {
        self.level_count() - 1
    }

    fn high_fidelity(&self, x: &[f64]) -> f64 {
        self.evaluate(x, self.top_level()).score
    }
}

/// A view onto a subset of the levels of another hierarchy. The subset must
/// contain the top level and be strictly increasing.
pub struct LevelSubset<'a, H: ?Sized> {
    inner: &'a H,
    levels: Vec<usize>,
}

impl<'a, H: ScoreHierarchy + ?Sized> LevelSubset<'a, H> {
    pub fn new(inner: &'a H, levels: Vec<usize>) -> Self {
        assert!(!levels.is_empty());
        assert!(
            levels.windows(2).all(|w| w[0] < w[1]),
            "levels must increase"
        );
        assert_eq!(
            *levels.last().unwrap(),
            inner.top_level(),
            "subset must end at the top level"
        );
        LevelSubset { inner, levels }
    }

    /// The high-fidelity level alone (`K = 0`).
    pub fn high_fidelity_only(inner: &'a H) -> Self {
        Self::new(inner, vec![inner.top_level()])
    }
}

impl<H: ScoreHierarchy + ?Sized> ScoreHierarchy for LevelSubset<'_, H> {
    fn level_count(&self) -> usize {
        self.levels.len()
    }
    fn dimension(&self) -> usize {
        self.inner.dimension()
    }
    fn evaluate(&self, x: &[f64], level: usize) -> LevelEval {
        self.inner.evaluate(x, self.levels[level])
    }
    fn cost_rank(&self, level: usize) -> usize {
        self.inner.cost_rank(self.levels[level])
    }
    fn error_constant(&self) -> f64 {
        self.inner.error_constant()
    }
}
