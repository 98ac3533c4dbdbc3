use super::BreadthError;
use crate::stats::quantile_sorted;
use serde::{Deserialize, Serialize};

pub const KDE_GRID_POINTS: usize = 512;

/// Density evaluated on an even grid, normalised to unit trapezoid area.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Kde {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    pub pilot_bandwidth: f64,
}

impl Kde {
    pub fn integral(&self) -> f64 {
        trapezoid(&self.grid, &self.density)
    }

    /// Indices of strict interior local maxima.
    pub fn local_maxima(&self) -> Vec<usize> {
        (1..self.density.len() - 1)
            .filter(|&i| self.density[i] > self.density[i - 1] && self.density[i] >= self.density[i + 1])
            .collect()
    }
}

fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2).zip(y.windows(2)).map(|(xw, yw)| (xw[1] - xw[0]) * (yw[0] + yw[1]) / 2.0).sum()
}

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

fn gaussian(z: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * z * z).exp()
}

fn silverman(sorted: &[f64]) -> f64 {
    let n = sorted.len() as f64;
    let mean = sorted.iter().sum::<f64>() / n;
    let sd = (sorted.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let iqr = quantile_sorted(sorted, 0.75) - quantile_sorted(sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    0.9 * spread * n.powf(-0.2)
}

/// Abramson adaptive Gaussian KDE on the values as given. The pilot uses
/// Silverman's bandwidth; each point's bandwidth is then scaled by
/// `(pilot(x_i) / g)^(-1/2)` where `g` is the geometric mean of pilot values.
pub fn abramson_kde_raw(xs: &[f64]) -> Result<Kde, BreadthError> {
    if xs.len() < 10 {
        return Err(BreadthError::InsufficientData(format!("kde needs 10 observations, got {}", xs.len())));
    }
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted[0] == sorted[sorted.len() - 1] {
        return Err(BreadthError::DegenerateBandwidth);
    }
    let n = sorted.len() as f64;
    let h = silverman(&sorted);
    let pilot: Vec<f64> = sorted
        .iter()
        .map(|&x| sorted.iter().map(|&y| gaussian((x - y) / h)).sum::<f64>() / (n * h))
        .collect();
    let log_g = pilot.iter().map(|p| p.ln()).sum::<f64>() / n;
    let g = log_g.exp();
    let bw: Vec<f64> = pilot.iter().map(|&p| h * (p / g).powf(-0.5)).collect();
    let reach = 3.0 * bw.iter().copied().fold(0.0, f64::max);
    let (lo, hi) = (sorted[0] - reach, sorted[sorted.len() - 1] + reach);
    let step = (hi - lo) / (KDE_GRID_POINTS - 1) as f64;
    let grid: Vec<f64> = (0..KDE_GRID_POINTS).map(|i| lo + step * i as f64).collect();
    let mut density: Vec<f64> = grid
        .iter()
        .map(|&t| sorted.iter().zip(&bw).map(|(&x, &b)| gaussian((t - x) / b) / b).sum::<f64>() / n)
        .collect();
    let area = trapezoid(&grid, &density);
    density.iter_mut().for_each(|d| *d /= area);
    Ok(Kde { grid, density, pilot_bandwidth: h })
}

/// Adaptive KDE of `log10 k`.
pub fn abramson_kde(ks: &[f64]) -> Result<Kde, BreadthError> {
    if let Some(k) = ks.iter().find(|k| !(**k > 0.0)) {
        return Err(BreadthError::InsufficientData(format!("non-positive k {k}")));
    }
    let logs: Vec<f64> = ks.iter().map(|k| k.log10()).collect();
    abramson_kde_raw(&logs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, LogNormal};

    #[test]
    fn normalised_on_any_input() {
        let ks: Vec<f64> = [1, 1, 1, 2, 2, 3, 5, 8, 13, 40, 41].iter().map(|&k| k as f64).collect();
        let kde = abramson_kde(&ks).unwrap();
        assert_eq!(kde.grid.len(), KDE_GRID_POINTS);
        assert!((kde.integral() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn degenerate_and_short_inputs() {
        assert_eq!(abramson_kde(&[3.0; 20]), Err(BreadthError::DegenerateBandwidth));
        assert!(matches!(abramson_kde(&[1.0, 2.0]), Err(BreadthError::InsufficientData(_))));
    }

    #[test]
    fn separated_spikes_are_bimodal() {
        let mut xs = vec![1.0; 30];
        xs.extend(vec![1000.0; 30]);
        xs.push(1.1);
        xs.push(900.0);
        let kde = abramson_kde(&xs).unwrap();
        assert_eq!(kde.local_maxima().len(), 2);
    }

    #[test]
    fn recovers_lognormal_density() {
        // log10 of LogNormal(mu, sigma) is Normal(mu / ln10, sigma / ln10).
        let (mu, sigma) = (1.0, 0.8);
        let dist = LogNormal::new(mu, sigma).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let xs: Vec<f64> = (0..4000).map(|_| dist.sample(&mut rng)).collect();
        let kde = abramson_kde(&xs).unwrap();
        let (m, s) = (mu / std::f64::consts::LN_10, sigma / std::f64::consts::LN_10);
        let truth = |t: f64| gaussian((t - m) / s) / s;
        let peak = truth(m);
        // Central 80% of the mass: within +-1.2816 sd.
        let mut worst: f64 = 0.0;
        for (&t, &d) in kde.grid.iter().zip(&kde.density) {
            if (t - m).abs() <= 1.2816 * s {
                worst = worst.max((d - truth(t)).abs());
            }
        }
        assert!(worst < 0.1 * peak, "sup error {worst} vs peak {peak}");
    }
}
