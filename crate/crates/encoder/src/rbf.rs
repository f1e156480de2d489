//! Radial basis distance encoding.

use crate::EncoderConfig;

/// Inclusive uniform grid of `rbf_k` centers on `[0, rbf_cutoff]`.
pub fn rbf_centers(cfg: &EncoderConfig) -> Vec<f64> {
    let step = cfg.rbf_cutoff / (cfg.rbf_k - 1) as f64;
    (0..cfg.rbf_k).map(|k| k as f64 * step).collect()
}

/// Encodes a distance as `exp(-beta * (d - mu_k)^2)` over the center grid.
///
/// Distances beyond the cutoff are not clamped; the responses simply decay.
pub fn rbf_encode(d: f64, cfg: &EncoderConfig) -> Vec<f64> {
    rbf_centers(cfg)
        .into_iter()
        .map(|mu| (-cfg.rbf_beta * (d - mu) * (d - mu)).exp())
        .collect()
}

/// Writes the encoding of `d` into `out` (len `rbf_k`) given precomputed
/// centers; allocation-free path for batch building.
pub fn rbf_encode_into(d: f64, centers: &[f64], beta: f64, out: &mut [f64]) {
    for (o, mu) in out.iter_mut().zip(centers) {
        *o = (-beta * (d - mu) * (d - mu)).exp();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_is_inclusive() {
        let cfg = EncoderConfig::default();
        assert_eq!(rbf_centers(&cfg), vec![0.0, 2.5, 5.0, 7.5, 10.0]);
    }

    #[test]
    fn exact_center_hits_one() {
        let cfg = EncoderConfig::default();
        for (k, mu) in rbf_centers(&cfg).into_iter().enumerate() {
            let e = rbf_encode(mu, &cfg);
            assert_eq!(e[k], 1.0);
            assert!(e.iter().all(|v| *v > 0.0 && *v <= 1.0));
        }
    }

    #[test]
    fn neighboring_center_response_matches_beta() {
        let cfg = EncoderConfig::default();
        // d = 2.5 seen from the center at 0: exp(-0.08 * 6.25) = exp(-0.5).
        let e = rbf_encode(2.5, &cfg);
        assert!((e[0] - (-0.5f64).exp()).abs() < 1e-12);
    }
}
