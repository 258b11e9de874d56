/// Generalized advantage estimates and returns for one trajectory segment.
///
/// `dones[t]` marks that the episode ended after step `t`; `bootstrap` is the
/// value of the observation following the last step.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap: f64,
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(rewards.len(), values.len());
    assert_eq!(rewards.len(), dones.len());
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut next_adv = 0.0;
    let mut next_value = bootstrap;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_value * live - values[t];
        next_adv = delta + gamma * lambda * live * next_adv;
        adv[t] = next_adv;
        next_value = values[t];
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, returns)
}

/// Rescale to zero mean and unit (population) standard deviation.
pub fn normalize(xs: &mut [f64]) {
    if xs.len() < 2 {
        return;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    if std < 1e-12 {
        xs.iter_mut().for_each(|x| *x -= mean);
        return;
    }
    xs.iter_mut().for_each(|x| *x = (*x - mean) / std);
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    /// Direct O(T²) expansion: A_t = Σ_k (γλ)^k δ_{t+k}, truncated at the
    /// first episode boundary.
    fn brute_force(r: &[f64], v: &[f64], d: &[bool], boot: f64, g: f64, l: f64) -> Vec<f64> {
        let n = r.len();
        let value_after = |t: usize| if t + 1 < n { v[t + 1] } else { boot };
        let delta: Vec<f64> = (0..n)
            .map(|t| r[t] + if d[t] { 0.0 } else { g * value_after(t) } - v[t])
            .collect();
        (0..n)
            .map(|t| {
                let mut sum = 0.0;
                let mut w = 1.0;
                for k in t..n {
                    sum += w * delta[k];
                    if d[k] {
                        break;
                    }
                    w *= g * l;
                }
                sum
            })
            .collect()
    }

    #[test]
    fn matches_brute_force() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        for _ in 0..100 {
            let n = 50;
            let r: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
            let v: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
            let d: Vec<bool> = (0..n).map(|_| rng.random_bool(0.1)).collect();
            let boot = rng.random_range(-5.0..5.0);
            let g = rng.random_range(0.8..1.0);
            let l = rng.random_range(0.0..1.0);
            let (a, ret) = compute_gae(&r, &v, &d, boot, g, l);
            let oracle = brute_force(&r, &v, &d, boot, g, l);
            for t in 0..n {
                assert!((a[t] - oracle[t]).abs() < 1e-10);
                assert_eq!(ret[t], a[t] + v[t]);
            }
        }
    }

    #[test]
    fn lambda_zero_is_td_error() {
        let r = [1.0, -2.0, 0.5];
        let v = [0.3, 0.1, -0.4];
        let (a, _) = compute_gae(&r, &v, &[false, true, false], 2.0, 0.9, 0.0);
        assert_eq!(a[0], 1.0 + 0.9 * 0.1 - 0.3);
        assert_eq!(a[1], -2.0 - 0.1);
        assert_eq!(a[2], 0.5 + 0.9 * 2.0 + 0.4);
    }

    #[test]
    fn monte_carlo_limit() {
        let r = [1.0, 2.0, 3.0, 4.0];
        let (a, _) = compute_gae(&r, &[0.0; 4], &[false; 4], 0.0, 1.0, 1.0);
        assert_eq!(a, vec![10.0, 9.0, 7.0, 4.0]);
    }

    proptest! {
        #[test]
        fn normalized_moments(xs in prop::collection::vec(-1e3f64..1e3, 2..200)) {
            let mut ys = xs.clone();
            normalize(&mut ys);
            let n = ys.len() as f64;
            let mean = ys.iter().sum::<f64>() / n;
            prop_assert!(mean.abs() < 1e-10);
            let spread = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                - xs.iter().cloned().fold(f64::INFINITY, f64::min);
            if spread > 1e-6 {
                let std = (ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n).sqrt();
                prop_assert!((std - 1.0).abs() < 1e-10);
            }
        }
    }
}
