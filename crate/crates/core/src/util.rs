/// Relative slack used when rounding `fraction * n` to a count, so that
/// products like `0.7 * 10 = 7.000000000000001` still count as 7.
const COUNT_SLACK: f64 = 1e-9;

/// `ceil(fraction * n)` clamped to `[1, n]` (0 when `n == 0`).
pub(crate) fn ceil_count(fraction: f64, n: usize) -> usize {
    if n == 0 {
        return 0;
    }
    let x = fraction * n as f64;
    let k = (x - COUNT_SLACK * x.abs().max(1.0)).ceil();
    (k.max(1.0) as usize).min(n)
}

/// `round(fraction * n)` (halves away from zero), not clamped.
pub(crate) fn round_count(fraction: f64, n: usize) -> usize {
    let x = fraction * n as f64;
    (x + COUNT_SLACK * x.abs().max(1.0)).round().max(0.0) as usize
}

pub(crate) fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ceil_count_absorbs_representation_error() {
        assert_eq!(ceil_count(0.7, 10), 7);
        assert_eq!(ceil_count(0.3, 10), 3);
        assert_eq!(ceil_count(0.35, 10), 4);
        assert_eq!(ceil_count(0.75, 4), 3);
        assert_eq!(ceil_count(0.9, 1), 1);
        assert_eq!(ceil_count(0.01, 5), 1);
        assert_eq!(ceil_count(1.0, 5), 5);
        assert_eq!(ceil_count(0.5, 0), 0);
    }

    #[test]
    fn round_count_matches_arithmetic() {
        assert_eq!(round_count(0.8, 10), 8);
        assert_eq!(round_count(0.8, 7), 6);
        assert_eq!(round_count(0.5, 5), 3);
        assert_eq!(round_count(0.8, 2), 2);
    }
}
