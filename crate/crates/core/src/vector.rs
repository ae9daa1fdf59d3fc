//! Small dense-vector helpers shared by fusion and retrieval.
//!
//! Features are stored as `f32` (the interchange precision) while all
//! reductions accumulate in `f64`.

/// Dot product accumulated in `f64`.
#[inline]
pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum()
}

#[inline]
pub fn norm(a: &[f32]) -> f64 {
    dot(a, a).sqrt()
}

/// Cosine similarity, clamped to `[-1, 1]`. Zero vectors give 0.
pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let denom = norm(a) * norm(b);
    if denom == 0.0 {
        return 0.0;
    }
    (dot(a, b) / denom).clamp(-1.0, 1.0)
}

/// Tolerance under which a vector already counts as unit length. Keeps
/// normalization idempotent on stored float32 payloads.
pub const UNIT_TOLERANCE: f64 = 1e-6;

/// Scales `v` to unit L2 norm. Returns `false` for zero or non-finite input.
pub fn normalize_in_place(v: &mut [f32]) -> bool {
    if v.iter().any(|x| !x.is_finite()) {
        return false;
    }
    let n = norm(v);
    if n == 0.0 || !n.is_finite() {
        return false;
    }
    if (n - 1.0).abs() > UNIT_TOLERANCE {
        for x in v.iter_mut() {
            *x = (*x as f64 / n) as f32;
        }
    }
    true
}

/// Normalized copy of an `f64` accumulator.
pub fn normalized_f32(v: &[f64]) -> Vec<f32> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n == 0.0 {
        return vec![0.0; v.len()];
    }
    v.iter().map(|x| (x / n) as f32).collect()
}

/// Folds `sample` into `mean`, which currently averages `count` samples:
/// `mean := (count * mean + sample) / (count + 1)`.
pub fn running_mean_update(mean: &mut [f32], count: u32, sample: &[f32]) {
    let n = count as f64;
    for (m, &g) in mean.iter_mut().zip(sample) {
        *m = ((n * *m as f64 + g as f64) / (n + 1.0)) as f32;
    }
}
