use crate::stats::quantile_sorted;

/// Clamps values to the `p_lo` and `p_hi` sample quantiles (linear
/// interpolation between order statistics).
pub fn winsorize(values: &[f64], p_lo: f64, p_hi: f64) -> Vec<f64> {
    assert!(0.0 <= p_lo && p_lo < p_hi && p_hi <= 1.0, "winsorization bounds out of order");
    if values.is_empty() {
        return Vec::new();
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let lo = quantile_sorted(&sorted, p_lo);
    let hi = quantile_sorted(&sorted, p_hi);
    values.iter().map(|v| v.clamp(lo, hi)).collect()
}

/// Indices of values inside the `[p_lo, p_hi]` quantile band.
pub fn trim_mask(values: &[f64], p_lo: f64, p_hi: f64) -> Vec<bool> {
    if values.is_empty() {
        return Vec::new();
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let lo = quantile_sorted(&sorted, p_lo);
    let hi = quantile_sorted(&sorted, p_hi);
    values.iter().map(|v| *v >= lo && *v <= hi).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_to_hundred_at_five_percent() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        let w = winsorize(&v, 0.05, 0.95);
        // h = 99 * 0.05 = 4.95 -> 5 + 0.95 * 1
        assert!((w[0] - 5.95).abs() < 1e-12);
        assert!((w[99] - 95.05).abs() < 1e-12);
        assert_eq!(w[50], 51.0);
    }

    #[test]
    fn identity_and_constant() {
        let v = vec![3.0, -1.0, 7.5];
        assert_eq!(winsorize(&v, 0.0, 1.0), v);
        assert_eq!(winsorize(&[2.0; 5], 0.1, 0.9), vec![2.0; 5]);
        assert!(winsorize(&[], 0.01, 0.99).is_empty());
    }

    #[test]
    fn trimming() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        let m = trim_mask(&v, 0.05, 0.95);
        assert_eq!(m.iter().filter(|b| **b).count(), 90);
    }
}
