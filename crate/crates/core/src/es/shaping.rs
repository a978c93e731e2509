use crate::error::{input, Result};

/// Centered ranks `rank / (n - 1) - 0.5`, ties sharing their average rank.
pub fn shape_scores(raw: &[f64]) -> Result<Vec<f64>> {
    let n = raw.len();
    if n < 2 {
        return Err(input("rank shaping needs at least two scores"));
    }
    if raw.iter().any(|x| x.is_nan()) {
        return Err(input("cannot rank NaN scores"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| raw[a].total_cmp(&raw[b]));
    let mut shaped = vec![0.0; n];
    let denom = (n - 1) as f64;
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && raw[order[end]] == raw[order[start]] {
            end += 1;
        }
        // positions start..end share rank (start + end - 1) / 2
        let rank = (start + end - 1) as f64 / 2.0;
        let value = rank / denom - 0.5;
        for &i in &order[start..end] {
            shaped[i] = value;
        }
        start = end;
    }
    Ok(shaped)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Independent route: rank of x = #{y < x} + (#{y == x} - 1) / 2.
    fn counting_oracle(raw: &[f64]) -> Vec<f64> {
        let n = raw.len() as f64;
        raw.iter()
            .map(|x| {
                let less = raw.iter().filter(|y| *y < x).count() as f64;
                let equal = raw.iter().filter(|y| *y == x).count() as f64;
                (less + (equal - 1.0) / 2.0) / (n - 1.0) - 0.5
            })
            .collect()
    }

    #[test]
    fn examples() {
        assert_eq!(shape_scores(&[5.0, 1.0, 9.0]).unwrap(), vec![0.0, -0.5, 0.5]);
        assert_eq!(shape_scores(&[4.0, 4.0, 4.0]).unwrap(), vec![0.0, 0.0, 0.0]);
        assert_eq!(shape_scores(&[1.0, 2.0]).unwrap(), vec![-0.5, 0.5]);
        let tied = shape_scores(&[2.0, 1.0, 1.0, 3.0]).unwrap();
        for (a, b) in tied.iter().zip([1.0 / 6.0, -1.0 / 3.0, -1.0 / 3.0, 0.5]) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(shape_scores(&[1.0]).is_err());
    }

    #[test]
    fn infinities_rank_at_the_ends() {
        let s = shape_scores(&[f64::INFINITY, 0.0, f64::NEG_INFINITY]).unwrap();
        assert_eq!(s, vec![0.5, 0.0, -0.5]);
    }

    proptest! {
        #[test]
        fn centered_bounded_and_matches_counting(raw in proptest::collection::vec(-5i32..5, 2..60)) {
            let raw: Vec<f64> = raw.into_iter().map(f64::from).collect();
            let s = shape_scores(&raw).unwrap();
            prop_assert!(s.iter().all(|v| (-0.5..=0.5).contains(v)));
            prop_assert!(s.iter().sum::<f64>().abs() < 1e-12);
            let o = counting_oracle(&raw);
            for (a, b) in s.iter().zip(&o) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn monotone_transform_invariant(raw in proptest::collection::vec(-100.0f64..100.0, 2..40)) {
            let t: Vec<f64> = raw.iter().map(|x| x.exp()).collect();
            prop_assert_eq!(shape_scores(&raw).unwrap(), shape_scores(&t).unwrap());
        }
    }
}
