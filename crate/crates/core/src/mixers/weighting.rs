/// Down-weighting factor for joint actions the central critic does not favour.
pub const DEFAULT_ALPHA: f64 = 0.75;

/// Centrally-weighted importance of a sample: full weight when the target
/// beats the critic's value of the greedy joint action or the sample already
/// takes that action, `alpha` otherwise.
pub fn wqmix_weight(y: f64, qhat_at_ustar: f64, u: &[usize], u_star: &[usize], alpha: f64) -> f64 {
    if y > qhat_at_ustar || u == u_star {
        1.0
    } else {
        alpha
    }
}

/// Same rule with the episodic-memory target in place of the TD target.
pub fn wqmix_em_weight(e: f64, qhat_at_ustar: f64, u: &[usize], u_star: &[usize], alpha: f64) -> f64 {
    wqmix_weight(e, qhat_at_ustar, u, u_star, alpha)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        let (u, other) = ([0usize, 1], [1usize, 1]);
        assert_eq!(wqmix_weight(2.0, 1.5, &u, &other, DEFAULT_ALPHA), 1.0);
        assert_eq!(wqmix_weight(1.0, 1.5, &u, &other, DEFAULT_ALPHA), 0.75);
        assert_eq!(wqmix_weight(-9.0, 1.5, &u, &u, DEFAULT_ALPHA), 1.0);
        assert_eq!(wqmix_em_weight(2.0, 1.5, &u, &other, DEFAULT_ALPHA), 1.0);
        assert_eq!(wqmix_em_weight(1.0, 1.5, &u, &other, DEFAULT_ALPHA), 0.75);
        assert_eq!(wqmix_em_weight(1.0, 1.5, &u, &u, DEFAULT_ALPHA), 1.0);
    }
}
