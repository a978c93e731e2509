use super::noise::{NoiseTable, Sign};
use crate::error::{input, structure, Result};
use crate::policy::ParameterVector;

/// Variance-rescaled search-gradient estimate
/// `g = 1/(n sigma) * sum_i shaped_i * sign_i * eps(index_i)`.
///
/// Terms are accumulated in ascending noise index, positive sign before
/// negative, whatever order the inputs arrive in; coefficients sharing a
/// noise index are combined before touching the table slice. This makes the
/// result bitwise independent of evaluation order and makes a mirrored pair
/// with equal scores cancel exactly.
pub fn estimate_update(
    shaped: &[f64],
    noise_indices: &[usize],
    signs: &[Sign],
    sigma: f64,
    table: &NoiseTable,
    genome_len: usize,
) -> Result<ParameterVector> {
    let n = shaped.len();
    if noise_indices.len() != n || signs.len() != n {
        return Err(structure(format!(
            "{n} scores but {} noise indices and {} signs",
            noise_indices.len(),
            signs.len()
        )));
    }
    if n == 0 {
        return Err(structure("no evaluations to estimate from"));
    }
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(input("sigma must be positive"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| (noise_indices[i], signs[i], i));

    let mut grad = vec![0.0; genome_len];
    let mut i = 0;
    while i < n {
        let index = noise_indices[order[i]];
        let mut coef = 0.0;
        while i < n && noise_indices[order[i]] == index {
            coef += shaped[order[i]] * signs[order[i]].value();
            i += 1;
        }
        if coef != 0.0 {
            let eps = table.slice(index, genome_len)?;
            for (g, e) in grad.iter_mut().zip(eps) {
                *g += coef * e;
            }
        } else {
            table.slice(index, genome_len)?;
        }
    }
    let scale = 1.0 / (n as f64 * sigma);
    grad.iter_mut().for_each(|g| *g *= scale);
    ParameterVector::new(grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_scores_zero_gradient() {
        let t = NoiseTable::build(99, 64);
        let g = estimate_update(&[0.0; 4], &[0, 0, 5, 5], &[Sign::Pos, Sign::Neg, Sign::Pos, Sign::Neg], 0.1, &t, 8)
            .unwrap();
        assert!(g.as_slice().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn one_dimensional_pair_arithmetic() {
        let t = NoiseTable::from_vec(0, vec![2.0]);
        let g = estimate_update(&[0.5, -0.5], &[0, 0], &[Sign::Pos, Sign::Neg], 0.1, &t, 1).unwrap();
        // (0.5*2 + (-0.5)*(-2)) / (2*0.1)
        assert!((g.as_slice()[0] - 10.0).abs() < 1e-12);
    }

    #[test]
    fn equal_mirrored_scores_cancel() {
        let t = NoiseTable::build(5, 64);
        let g = estimate_update(&[0.3, 0.3], &[10, 10], &[Sign::Pos, Sign::Neg], 0.05, &t, 20).unwrap();
        assert!(g.as_slice().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn arrival_order_does_not_matter() {
        let t = NoiseTable::build(8, 256);
        let shaped = [0.5, -0.1, 0.2, -0.5, 0.1, -0.2];
        let idx = [40, 40, 3, 3, 17, 17];
        let signs = [Sign::Pos, Sign::Neg, Sign::Pos, Sign::Neg, Sign::Pos, Sign::Neg];
        let a = estimate_update(&shaped, &idx, &signs, 0.05, &t, 30).unwrap();
        let perm = [5, 2, 0, 4, 1, 3];
        let s2: Vec<f64> = perm.iter().map(|&i| shaped[i]).collect();
        let i2: Vec<usize> = perm.iter().map(|&i| idx[i]).collect();
        let g2: Vec<Sign> = perm.iter().map(|&i| signs[i]).collect();
        let b = estimate_update(&s2, &i2, &g2, 0.05, &t, 30).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn length_mismatch_is_structural() {
        let t = NoiseTable::build(8, 64);
        assert!(estimate_update(&[0.1, 0.2], &[1], &[Sign::Pos, Sign::Neg], 0.1, &t, 4).is_err());
    }
}
