/// Generalized advantage estimation over one segment.
///
/// `dones[t]` marks that transition `t` ended its episode; `bootstrap` is
/// the value of the observation following the last transition. Returns
/// `(advantages, returns)`.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap: f64,
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    debug_assert_eq!(values.len(), n);
    debug_assert_eq!(dones.len(), n);
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

/// Shifts and scales to zero mean and unit (population) standard deviation.
pub fn normalize_advantages(adv: &mut [f64]) {
    if adv.is_empty() {
        return;
    }
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    adv.iter_mut().for_each(|a| *a = (*a - mean) / (std + 1e-8));
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_terminal_step() {
        let (a, r) = compute_gae(&[1.0], &[0.3], &[true], 5.0, 0.99, 0.95);
        assert!((a[0] - 0.7).abs() < 1e-15);
        assert!((r[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn lambda_zero_is_td_error() {
        let rewards = [0.1, -0.2, 0.3, 0.0];
        let values = [0.5, 0.4, -0.1, 0.2];
        let dones = [false, true, false, false];
        let (a, _) = compute_gae(&rewards, &values, &dones, 0.7, 0.9, 0.0);
        let next = [0.4, 0.0, 0.2, 0.7];
        for t in 0..4 {
            let live = if dones[t] { 0.0 } else { 1.0 };
            let delta = rewards[t] + 0.9 * next[t] * live - values[t];
            assert!((a[t] - delta).abs() < 1e-15);
        }
    }

    #[test]
    fn lambda_one_is_monte_carlo() {
        let r = [1.0, 0.0, 2.0];
        let v = [0.5, 0.25, -1.0];
        let (_, ret) = compute_gae(&r, &v, &[false; 3], 3.0, 0.9, 1.0);
        let mc = 1.0 + 0.9 * 0.0 + 0.81 * 2.0 + 0.729 * 3.0;
        assert!((ret[0] - mc).abs() < 1e-12);
    }

    #[test]
    fn normalization_moments() {
        let mut a: Vec<f64> = (0..100).map(|i| (i as f64 * 0.7).sin() * 3.0 + 1.0).collect();
        normalize_advantages(&mut a);
        let mean = a.iter().sum::<f64>() / 100.0;
        let std = (a.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 100.0).sqrt();
        assert!(mean.abs() < 1e-9);
        assert!((std - 1.0).abs() < 1e-6);
    }
}
