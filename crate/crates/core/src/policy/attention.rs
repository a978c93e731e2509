use super::LN_EPS;
use crate::error::{structure, Result};

/// Scaled dot-product attention over `len` rows of width `dim` (row-major).
///
/// Logits are scaled by `1/sqrt(dim)`. With `causal`, row `i` only sees rows
/// `0..=i`; masked positions are never evaluated, so their weight is exactly
/// zero.
pub fn attention(
    queries: &[f64],
    keys: &[f64],
    values: &[f64],
    len: usize,
    dim: usize,
    causal: bool,
) -> Result<Vec<f64>> {
    let n = len * dim;
    if dim == 0 || queries.len() != n || keys.len() != n || values.len() != n {
        return Err(structure(format!("attention expects three {len}x{dim} inputs")));
    }
    let scale = 1.0 / (dim as f64).sqrt();
    let mut out = vec![0.0; n];
    let mut scores = Vec::with_capacity(len);
    for i in 0..len {
        let upto = if causal { i + 1 } else { len };
        attend_row(
            &queries[i * dim..(i + 1) * dim],
            keys,
            values,
            dim,
            0,
            upto,
            scale,
            &mut scores,
            &mut out[i * dim..(i + 1) * dim],
        );
    }
    Ok(out)
}

/// One output row: softmax over keys `0..upto` of `q . k_j * scale`, then the
/// weighted sum of values. Rows of `keys`/`values` are `stride` apart and the
/// head occupies columns `offset..offset + q.len()`.
#[allow(clippy::too_many_arguments)]
#[inline]
pub(crate) fn attend_row(
    q: &[f64],
    keys: &[f64],
    values: &[f64],
    stride: usize,
    offset: usize,
    upto: usize,
    scale: f64,
    scores: &mut Vec<f64>,
    out: &mut [f64],
) {
    let dim = q.len();
    scores.clear();
    let mut max = f64::NEG_INFINITY;
    for j in 0..upto {
        let k = &keys[j * stride + offset..j * stride + offset + dim];
        let s = q.iter().zip(k).map(|(a, b)| a * b).sum::<f64>() * scale;
        max = max.max(s);
        scores.push(s);
    }
    let mut total = 0.0;
    for s in scores.iter_mut() {
        *s = (*s - max).exp();
        total += *s;
    }
    out.iter_mut().for_each(|o| *o = 0.0);
    for (j, s) in scores.iter().enumerate() {
        let w = s / total;
        let v = &values[j * stride + offset..j * stride + offset + dim];
        for (o, vi) in out.iter_mut().zip(v) {
            *o += w * vi;
        }
    }
}

/// `out = gain * (x - mean) / sqrt(var + eps) + bias` with population variance.
pub fn layer_norm(x: &[f64], gain: &[f64], bias: &[f64], out: &mut [f64]) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let inv = 1.0 / (var + LN_EPS).sqrt();
    for i in 0..x.len() {
        out[i] = gain[i] * (x[i] - mean) * inv + bias[i];
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn singleton_returns_value() {
        let out = attention(&[3.0, -1.0], &[0.5, 9.0], &[1.25, -7.0], 1, 2, false).unwrap();
        assert_eq!(out, vec![1.25, -7.0]);
    }

    #[test]
    fn equal_logits_average_values() {
        // zero queries make every logit equal
        let q = [0.0; 4];
        let k = [1.0, 2.0, 3.0, 4.0];
        let v = [2.0, 4.0, 6.0, 10.0];
        let out = attention(&q, &k, &v, 2, 2, false).unwrap();
        for row in out.chunks(2) {
            assert!((row[0] - 4.0).abs() < 1e-15 && (row[1] - 7.0).abs() < 1e-15);
        }
    }

    #[test]
    fn causal_rows_ignore_later_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut mk = || (0..12).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>();
        let (q, k, v) = (mk(), mk(), mk());
        let base = attention(&q, &k, &v, 3, 4, true).unwrap();
        let (mut q2, mut k2, mut v2) = (q.clone(), k.clone(), v.clone());
        for i in 8..12 {
            q2[i] += 1.5;
            k2[i] -= 2.0;
            v2[i] *= 3.0;
        }
        let moved = attention(&q2, &k2, &v2, 3, 4, true).unwrap();
        assert_eq!(&base[..8], &moved[..8]);
        assert_ne!(&base[8..], &moved[8..]);
    }

    #[test]
    fn shape_checks() {
        assert!(attention(&[0.0; 3], &[0.0; 4], &[0.0; 4], 2, 2, true).is_err());
    }

    #[test]
    fn layer_norm_standardizes() {
        let mut out = [0.0; 4];
        layer_norm(&[1.0, 2.0, 3.0, 4.0], &[1.0; 4], &[0.0; 4], &mut out);
        assert!(out.iter().sum::<f64>().abs() < 1e-12);
        let var = out.iter().map(|v| v * v).sum::<f64>() / 4.0;
        assert!((var - 1.0).abs() < 1e-4);
    }
}
