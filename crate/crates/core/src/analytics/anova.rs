use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use super::AnalyticsError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnovaResult {
    pub df_between: usize,
    pub df_within: usize,
    pub ss_between: f64,
    pub ss_within: f64,
    /// `+inf` when the groups differ but have no spread of their own.
    pub f: f64,
    pub p_value: f64,
}

/// Classical one-way ANOVA.
pub fn one_way_anova(samples: &[Vec<f64>]) -> Result<AnovaResult, AnalyticsError> {
    let k = samples.len();
    if k < 2 {
        return Err(AnalyticsError::DegenerateInput(format!("{k} groups, need at least 2")));
    }
    if samples.iter().any(Vec::is_empty) {
        return Err(AnalyticsError::DegenerateInput("empty group".into()));
    }
    let n: usize = samples.iter().map(Vec::len).sum();
    if n <= k {
        return Err(AnalyticsError::DegenerateInput("no within-group degrees of freedom".into()));
    }
    let grand = samples.iter().flatten().sum::<f64>() / n as f64;
    let mut ss_between = 0.0;
    let mut ss_within = 0.0;
    for g in samples {
        let mean = g.iter().sum::<f64>() / g.len() as f64;
        ss_between += g.len() as f64 * (mean - grand).powi(2);
        ss_within += g.iter().map(|x| (x - mean).powi(2)).sum::<f64>();
    }
    let (df_between, df_within) = (k - 1, n - k);
    let (d1, d2) = (df_between as f64, df_within as f64);

    let (f, p_value) = if ss_within == 0.0 {
        if ss_between > 0.0 {
            (f64::INFINITY, 0.0)
        } else {
            (0.0, 1.0)
        }
    } else {
        let f = (ss_between / d1) / (ss_within / d2);
        // Upper tail of F(d1, d2) as a regularized incomplete beta.
        (f, beta_reg(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * f)))
    };
    Ok(AnovaResult {
        df_between,
        df_within,
        ss_between,
        ss_within,
        f,
        p_value,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn hand_computed_fixture() {
        // Means 1.5, 3.5, 5.5 around 3.5: SS_b = 2*4 + 0 + 2*4 = 16, MS_b = 8.
        // SS_w = 6 * 0.25 = 1.5, MS_w = 0.5. F = 16.
        let r = one_way_anova(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap();
        assert_eq!((r.df_between, r.df_within), (2, 3));
        assert!((r.f - 16.0).abs() < 1e-9);
        assert!((r.ss_between - 16.0).abs() < 1e-12);
        assert!((r.ss_within - 1.5).abs() < 1e-12);
    }

    #[test]
    fn constant_groups_give_zero() {
        let r = one_way_anova(&[vec![2.0, 2.0], vec![2.0, 2.0, 2.0]]).unwrap();
        assert_eq!(r.f, 0.0);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn separated_constant_groups_give_infinity() {
        let r = one_way_anova(&[vec![1.0, 1.0], vec![2.0, 2.0]]).unwrap();
        assert!(r.f.is_infinite());
        assert_eq!(r.p_value, 0.0);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(one_way_anova(&[vec![1.0, 2.0]]).is_err());
        assert!(one_way_anova(&[vec![1.0], vec![]]).is_err());
        assert!(one_way_anova(&[vec![1.0], vec![2.0]]).is_err());
    }

    fn pooled_t(a: &[f64], b: &[f64]) -> f64 {
        let mean = |x: &[f64]| x.iter().sum::<f64>() / x.len() as f64;
        let (ma, mb) = (mean(a), mean(b));
        let ss = |x: &[f64], m: f64| x.iter().map(|v| (v - m).powi(2)).sum::<f64>();
        let (na, nb) = (a.len() as f64, b.len() as f64);
        let sp2 = (ss(a, ma) + ss(b, mb)) / (na + nb - 2.0);
        (ma - mb) / (sp2 * (1.0 / na + 1.0 / nb)).sqrt()
    }

    #[test]
    fn two_groups_match_t_squared() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..100 {
            let na = rng.random_range(2..30);
            let nb = rng.random_range(2..30);
            let a: Vec<f64> = (0..na).map(|_| rng.random_range(-5.0..5.0)).collect();
            let b: Vec<f64> = (0..nb).map(|_| rng.random_range(-4.0..6.0)).collect();
            let f = one_way_anova(&[a.clone(), b.clone()]).unwrap().f;
            let t2 = pooled_t(&a, &b).powi(2);
            assert!(((f - t2) / t2).abs() < 1e-9, "F {f} vs t^2 {t2}");
        }
    }

    /// Upper F tail by Simpson integration of the beta density, with the
    /// normalising constant integrated the same way.
    fn p_by_quadrature(d1: f64, d2: f64, f: f64) -> f64 {
        let (a, b) = (d2 / 2.0, d1 / 2.0);
        let density = |t: f64| t.powf(a - 1.0) * (1.0 - t).powf(b - 1.0);
        let simpson = |lo: f64, hi: f64| {
            let n = 200_000;
            let h = (hi - lo) / n as f64;
            let mut s = density(lo) + density(hi);
            for i in 1..n {
                let w = if i % 2 == 1 { 4.0 } else { 2.0 };
                s += w * density(lo + i as f64 * h);
            }
            s * h / 3.0
        };
        let x = d2 / (d2 + d1 * f);
        simpson(0.0, x) / simpson(0.0, 1.0)
    }

    #[test]
    fn p_value_matches_numerical_integration() {
        let cases = [
            (vec![1.0, 2.0, 2.5], vec![3.0, 4.0, 3.5], vec![5.0, 6.0, 4.0]),
            (vec![0.0, 1.0, 0.0, 1.0], vec![1.0, 1.0, 0.0, 1.0], vec![0.0, 0.0, 0.0, 1.0]),
            (vec![10.0, 12.0, 9.0], vec![11.0, 10.5, 9.5], vec![10.2, 10.1, 12.5]),
        ];
        for (a, b, c) in cases {
            let r = one_way_anova(&[a, b, c]).unwrap();
            let oracle = p_by_quadrature(r.df_between as f64, r.df_within as f64, r.f);
            assert!((r.p_value - oracle).abs() < 1e-8, "p {} vs {oracle}", r.p_value);
        }
    }
}
