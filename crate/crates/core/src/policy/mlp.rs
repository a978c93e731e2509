use super::weights::mlp_layers;
use super::{ParameterVector, PolicyKind, PolicySpec};
use crate::error::{input, structure, Result};

#[derive(Default)]
pub(crate) struct MlpScratch {
    a: Vec<f64>,
    b: Vec<f64>,
}

/// Tanh MLP; the output layer is tanh-squashed into (-1, 1).
pub fn mlp_forward(spec: &PolicySpec, params: &ParameterVector, observation: &[f64]) -> Result<Vec<f64>> {
    let mut out = vec![0.0; spec.act_dim];
    mlp_forward_into(spec, params.as_slice(), observation, &mut MlpScratch::default(), &mut out)?;
    Ok(out)
}

pub(crate) fn mlp_forward_into(
    spec: &PolicySpec,
    params: &[f64],
    observation: &[f64],
    scratch: &mut MlpScratch,
    action: &mut [f64],
) -> Result<()> {
    if spec.kind != PolicyKind::Mlp {
        return Err(structure("mlp_forward called with a non-MLP spec"));
    }
    if observation.len() != spec.obs_dim || action.len() != spec.act_dim {
        return Err(structure("observation/action length differs from spec"));
    }
    if observation.iter().any(|x| !x.is_finite()) {
        return Err(input("observation is not finite"));
    }
    let layers = mlp_layers(spec, params)?;
    let MlpScratch { a, b } = scratch;
    a.clear();
    a.extend_from_slice(observation);
    for layer in &layers {
        b.resize(layer.outputs, 0.0);
        layer.apply(a, b);
        for v in b.iter_mut() {
            *v = v.tanh();
        }
        std::mem::swap(a, b);
    }
    action.copy_from_slice(a);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::param_count;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_params_give_zero_action() {
        let spec = PolicySpec::mlp(4, &[8], 2);
        let p = ParameterVector::zeros(param_count(&spec));
        assert_eq!(mlp_forward(&spec, &p, &[0.3, -2.0, 5.0, 1.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn saturates_with_large_bias() {
        let spec = PolicySpec::mlp(1, &[], 1);
        let p = ParameterVector::new(vec![0.0, 5.0]).unwrap();
        let a = mlp_forward(&spec, &p, &[123.0]).unwrap();
        assert!(a[0] >= 0.999 && a[0] < 1.0);
    }

    #[test]
    fn rejects_non_finite_observation() {
        let spec = PolicySpec::mlp(2, &[], 1);
        let p = ParameterVector::zeros(3);
        assert!(matches!(mlp_forward(&spec, &p, &[0.0, f64::NAN]), Err(crate::Error::Input(_))));
    }

    /// Plain nested-loop reference with its own indexing.
    fn oracle(obs: &[f64], w1: &[Vec<f64>], b1: &[f64], w2: &[Vec<f64>], b2: &[f64]) -> Vec<f64> {
        let h: Vec<f64> = (0..b1.len())
            .map(|j| (b1[j] + (0..obs.len()).map(|i| w1[j][i] * obs[i]).sum::<f64>()).tanh())
            .collect();
        (0..b2.len())
            .map(|k| (b2[k] + (0..h.len()).map(|j| w2[k][j] * h[j]).sum::<f64>()).tanh())
            .collect()
    }

    #[test]
    fn matches_dense_algebra_oracle() {
        let spec = PolicySpec::mlp(4, &[8], 2);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let w1: Vec<Vec<f64>> = (0..8).map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let b1: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let w2: Vec<Vec<f64>> = (0..2).map(|_| (0..8).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let b2: Vec<f64> = (0..2).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut flat = Vec::new();
        w1.iter().for_each(|r| flat.extend(r));
        flat.extend(&b1);
        w2.iter().for_each(|r| flat.extend(r));
        flat.extend(&b2);
        let p = ParameterVector::new(flat).unwrap();
        let obs = [0.7, -0.2, 0.05, 1.3];
        let got = mlp_forward(&spec, &p, &obs).unwrap();
        let want = oracle(&obs, &w1, &b1, &w2, &b2);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() <= 1e-12, "{g} vs {w}");
        }
    }
}
