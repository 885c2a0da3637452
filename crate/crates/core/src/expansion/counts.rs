use super::Strategy;

/// Closed-form expansion counts at depth `l`:
///
/// * Pruning: `(4k + 3knl) * l`
/// * NoPruning: `sum_{i=1..l} i^2 (4k + 3knl)`
/// * FullNode: `(2k(k+1))^l`
///
/// Saturates at `u128::MAX`.
pub fn theoretical_counts(strategy: Strategy, k: u64, n: u64, l: u64) -> u128 {
    let (k, n, l) = (k as u128, n as u128, l as u128);
    let per_layer = (4 * k).saturating_add(3u128.saturating_mul(k).saturating_mul(n).saturating_mul(l));
    match strategy {
        Strategy::Pruning => per_layer.saturating_mul(l),
        Strategy::NoPruning => (1..=l).fold(0u128, |acc, i| acc.saturating_add((i * i).saturating_mul(per_layer))),
        Strategy::FullNode => {
            let base = 2 * k * (k + 1);
            let exp = u32::try_from(l).unwrap_or(u32::MAX);
            base.checked_pow(exp).unwrap_or(u128::MAX)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_values() {
        assert_eq!(theoretical_counts(Strategy::Pruning, 3, 4, 4), 624);
        assert_eq!(theoretical_counts(Strategy::NoPruning, 3, 4, 4), 4680);
        assert_eq!(theoretical_counts(Strategy::FullNode, 3, 4, 4), 331_776);
        assert_eq!(theoretical_counts(Strategy::FullNode, 3, 4, 2), 576);
        assert_eq!(theoretical_counts(Strategy::FullNode, 3, 4, 1), 24);
    }

    #[test]
    fn full_node_saturates() {
        assert_eq!(theoretical_counts(Strategy::FullNode, 1000, 1, 1000), u128::MAX);
    }
}
