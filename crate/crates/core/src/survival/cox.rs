use super::{SurvivalError, SurvivalObs};
use crate::linalg::{invert_spd, solve_spd, Matrix};
use crate::stats::{normal_quantile, IntervalEstimate};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

const MAX_ITER: usize = 100;
const BETA_TOL: f64 = 1e-8;
/// Standardised coefficients beyond this magnitude signal a monotone likelihood.
const DIVERGENCE_BOUND: f64 = 25.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Ties {
    Efron,
    Breslow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoxTerm {
    pub name: String,
    pub coefficient: f64,
    pub se: f64,
    pub hazard_ratio: f64,
    pub wald_ci: IntervalEstimate,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoxFit {
    pub terms: Vec<CoxTerm>,
    pub concordance: f64,
    pub log_likelihood: f64,
    pub null_log_likelihood: f64,
    pub n: usize,
    pub events: usize,
    pub ties: Ties,
    pub iterations: usize,
}

impl CoxFit {
    pub fn term(&self, name: &str) -> Option<&CoxTerm> {
        self.terms.iter().find(|t| t.name == name)
    }
}

/// Subjects grouped by distinct time, latest first, for risk-set sweeps.
struct Design<'a> {
    obs: &'a [SurvivalObs],
    x: &'a [Vec<f64>],
    /// Indices sorted by descending time.
    order: Vec<usize>,
}

impl<'a> Design<'a> {
    fn new(obs: &'a [SurvivalObs], x: &'a [Vec<f64>]) -> Self {
        let mut order: Vec<usize> = (0..obs.len()).collect();
        order.sort_by(|&a, &b| obs[b].time.total_cmp(&obs[a].time));
        Design { obs, x, order }
    }

    /// Partial log-likelihood, gradient and observed information at `beta`.
    fn evaluate(&self, beta: &[f64], ties: Ties, want_derivs: bool) -> (f64, Vec<f64>, Matrix) {
        let p = beta.len();
        let mut ll = 0.0;
        let mut grad = vec![0.0; p];
        let mut info = vec![vec![0.0; p]; p];
        let (mut s0, mut s1, mut s2) = (0.0, vec![0.0; p], vec![vec![0.0; p]; p]);
        let mut i = 0;
        while i < self.order.len() {
            let t = self.obs[self.order[i]].time;
            let mut j = i;
            let (mut d0, mut d1, mut d2) = (0.0, vec![0.0; p], vec![vec![0.0; p]; p]);
            let mut d = 0usize;
            while j < self.order.len() && self.obs[self.order[j]].time == t {
                let k = self.order[j];
                let xk = &self.x[k];
                let eta: f64 = xk.iter().zip(beta).map(|(a, b)| a * b).sum();
                let w = eta.exp();
                s0 += w;
                for a in 0..p {
                    s1[a] += w * xk[a];
                    if want_derivs {
                        for b in 0..p {
                            s2[a][b] += w * xk[a] * xk[b];
                        }
                    }
                }
                if self.obs[k].event {
                    d += 1;
                    ll += eta;
                    d0 += w;
                    for a in 0..p {
                        grad[a] += xk[a];
                        d1[a] += w * xk[a];
                        if want_derivs {
                            for b in 0..p {
                                d2[a][b] += w * xk[a] * xk[b];
                            }
                        }
                    }
                }
                j += 1;
            }
            for l in 0..d {
                let f = match ties {
                    Ties::Efron => l as f64 / d as f64,
                    Ties::Breslow => 0.0,
                };
                let den = s0 - f * d0;
                ll -= den.ln();
                if want_derivs {
                    let m: Vec<f64> = (0..p).map(|a| (s1[a] - f * d1[a]) / den).collect();
                    for a in 0..p {
                        grad[a] -= m[a];
                        for b in 0..p {
                            info[a][b] += (s2[a][b] - f * d2[a][b]) / den - m[a] * m[b];
                        }
                    }
                }
            }
            i = j;
        }
        (ll, grad, info)
    }
}

/// Partial log-likelihood on raw covariates.
pub fn cox_partial_loglik(obs: &[SurvivalObs], x: &[Vec<f64>], beta: &[f64], ties: Ties) -> f64 {
    Design::new(obs, x).evaluate(beta, ties, false).0
}

/// Harrell's C. A pair is comparable when the shorter time is an event, or
/// when times tie and only one member had the event (that member ranks first).
pub fn concordance(obs: &[SurvivalObs], risk: &[f64]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..obs.len() {
        if !obs[i].event {
            continue;
        }
        for j in 0..obs.len() {
            if i == j {
                continue;
            }
            let comparable = obs[i].time < obs[j].time || (obs[i].time == obs[j].time && !obs[j].event);
            if comparable {
                den += 1.0;
                if risk[i] > risk[j] {
                    num += 1.0;
                } else if risk[i] == risk[j] {
                    num += 0.5;
                }
            }
        }
    }
    if den == 0.0 { 0.5 } else { num / den }
}

/// Flags constant columns and columns in the span of earlier ones
/// (modified Gram-Schmidt on centred columns).
fn check_rank(cols: &[Vec<f64>], names: &[String]) -> Result<(), SurvivalError> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut basis_names: Vec<&str> = Vec::new();
    for (col, name) in cols.iter().zip(names) {
        let norm0 = col.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm0 == 0.0 {
            return Err(SurvivalError::Collinear { columns: vec![name.clone()] });
        }
        let mut r = col.clone();
        for b in &basis {
            let dot: f64 = r.iter().zip(b).map(|(x, y)| x * y).sum();
            r.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
        }
        let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < 1e-8 * norm0 {
            let mut columns: Vec<String> = basis_names.iter().map(|s| s.to_string()).collect();
            columns.push(name.clone());
            return Err(SurvivalError::Collinear { columns });
        }
        basis.push(r.iter().map(|v| v / norm).collect());
        basis_names.push(name);
    }
    Ok(())
}

/// Proportional-hazards fit by Newton-Raphson with step halving. Covariates
/// are centred and scaled internally; results are reported on the input scale.
pub fn cox_fit_matrix(
    obs: &[SurvivalObs],
    x: &[Vec<f64>],
    names: &[String],
    ties: Ties,
) -> Result<CoxFit, SurvivalError> {
    let n = obs.len();
    let p = names.len();
    if x.len() != n || x.iter().any(|r| r.len() != p) {
        return Err(SurvivalError::Degenerate("design matrix shape does not match".into()));
    }
    let events = obs.iter().filter(|o| o.event).count();
    if events < 2 {
        return Err(SurvivalError::InsufficientData(format!("cox needs 2 events, got {events}")));
    }
    let means: Vec<f64> = (0..p).map(|a| x.iter().map(|r| r[a]).sum::<f64>() / n as f64).collect();
    let cols: Vec<Vec<f64>> = (0..p).map(|a| x.iter().map(|r| r[a] - means[a]).collect()).collect();
    check_rank(&cols, names)?;
    let sds: Vec<f64> =
        cols.iter().map(|c| (c.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt()).collect();
    let z: Vec<Vec<f64>> = (0..n).map(|i| (0..p).map(|a| cols[a][i] / sds[a]).collect()).collect();
    let design = Design::new(obs, &z);

    let mut beta = vec![0.0; p];
    let (null_ll, mut grad, mut info) = design.evaluate(&beta, ties, true);
    let mut ll = null_ll;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < MAX_ITER {
        iterations += 1;
        let step = solve_spd(&info, &grad)
            .ok_or_else(|| SurvivalError::Divergence(format!("information matrix singular at iteration {iterations}")))?;
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let cand: Vec<f64> = beta.iter().zip(&step).map(|(b, s)| b + scale * s).collect();
            let (cll, cg, ci) = design.evaluate(&cand, ties, true);
            if cll.is_finite() && cll >= ll - 1e-12 * ll.abs().max(1.0) {
                accepted = Some((cand, cll, cg, ci));
                break;
            }
            scale /= 2.0;
        }
        let Some((cand, cll, cg, ci)) = accepted else {
            converged = true;
            break;
        };
        let delta = beta.iter().zip(&cand).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        beta = cand;
        ll = cll;
        grad = cg;
        info = ci;
        if beta.iter().any(|b| b.abs() > DIVERGENCE_BOUND) {
            return Err(SurvivalError::Divergence(format!(
                "coefficients diverging (monotone likelihood); standardised beta = {beta:?}, loglik = {ll}"
            )));
        }
        if delta < BETA_TOL {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(SurvivalError::Divergence(format!("no convergence in {MAX_ITER} iterations; beta = {beta:?}")));
    }
    let cov = invert_spd(&info).ok_or_else(|| SurvivalError::Divergence("information matrix singular at optimum".into()))?;
    let zq = normal_quantile(0.975);
    let normal = Normal::standard();
    let terms = (0..p)
        .map(|a| {
            let coefficient = beta[a] / sds[a];
            let se = cov[a][a].sqrt() / sds[a];
            CoxTerm {
                name: names[a].clone(),
                coefficient,
                se,
                hazard_ratio: coefficient.exp(),
                wald_ci: IntervalEstimate {
                    point: coefficient.exp(),
                    lo: (coefficient - zq * se).exp(),
                    hi: (coefficient + zq * se).exp(),
                    confidence: 0.95,
                },
                p_value: (2.0 * normal.sf((coefficient / se).abs())).min(1.0),
            }
        })
        .collect();
    let risk: Vec<f64> = z.iter().map(|r| r.iter().zip(&beta).map(|(a, b)| a * b).sum()).collect();
    Ok(CoxFit {
        terms,
        concordance: concordance(obs, &risk),
        log_likelihood: ll,
        null_log_likelihood: null_ll,
        n,
        events,
        ties,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Exp};

    fn ob(time: f64, event: bool) -> SurvivalObs {
        SurvivalObs { time, event }
    }

    fn simulate(n: usize, beta: f64, seed: u64) -> (Vec<SurvivalObs>, Vec<Vec<f64>>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cens = Exp::new(0.3).unwrap();
        let mut obs = Vec::new();
        let mut x = Vec::new();
        for _ in 0..n {
            let xi = f64::from(u8::from(rng.random_bool(0.5)));
            let t = Exp::new((beta * xi).exp()).unwrap().sample(&mut rng);
            let c = cens.sample(&mut rng);
            obs.push(ob(t.min(c), t <= c));
            x.push(vec![xi]);
        }
        (obs, x)
    }

    fn grid_max(obs: &[SurvivalObs], x: &[Vec<f64>], ties: Ties) -> f64 {
        (-4000..=4000).map(|i| cox_partial_loglik(obs, x, &[f64::from(i) * 1e-3], ties)).fold(f64::NEG_INFINITY, f64::max)
    }

    #[test]
    fn beats_grid_search_on_small_problems() {
        let mut fitted = 0;
        for seed in 0..10 {
            let (obs, x) = simulate(20, 0.7, seed);
            let mut xs = x.clone();
            // Introduce ties in time to exercise both approximations.
            let obs: Vec<SurvivalObs> = obs.iter().map(|o| ob((o.time * 4.0).ceil(), o.event)).collect();
            xs.iter_mut().enumerate().for_each(|(i, r)| r[0] += (i % 3) as f64 * 0.1);
            for ties in [Ties::Efron, Ties::Breslow] {
                let Ok(fit) = cox_fit_matrix(&obs, &xs, &["x".into()], ties) else { continue };
                let at_fit = cox_partial_loglik(&obs, &xs, &[fit.terms[0].coefficient], ties);
                assert!(at_fit >= grid_max(&obs, &xs, ties) - 1e-6);
                assert!(at_fit >= cox_partial_loglik(&obs, &xs, &[0.0], ties));
                fitted += 1;
            }
        }
        assert!(fitted >= 15);
    }

    #[test]
    fn recovers_planted_log_hazard_ratio() {
        let mut z: Vec<f64> = (0..100)
            .map(|seed| {
                let (obs, x) = simulate(200, 0.7, 1000 + seed);
                let t = cox_fit_matrix(&obs, &x, &["x".into()], Ties::Efron).unwrap().terms.remove(0);
                (t.coefficient - 0.7).abs() / t.se
            })
            .collect();
        z.sort_by(f64::total_cmp);
        assert!(z[50] < 2.0);
    }

    #[test]
    fn efron_equals_breslow_without_ties() {
        let (obs, x) = simulate(60, 0.5, 4);
        let e = cox_fit_matrix(&obs, &x, &["x".into()], Ties::Efron).unwrap();
        let b = cox_fit_matrix(&obs, &x, &["x".into()], Ties::Breslow).unwrap();
        assert!((e.terms[0].coefficient - b.terms[0].coefficient).abs() < 1e-9);
    }

    #[test]
    fn reported_quantities_are_consistent() {
        let (obs, x) = simulate(300, 0.7, 9);
        let fit = cox_fit_matrix(&obs, &x, &["x".into()], Ties::Efron).unwrap();
        let t = &fit.terms[0];
        assert_eq!(t.hazard_ratio, t.coefficient.exp());
        assert!((t.wald_ci.lo - (t.coefficient - 1.959963984540054 * t.se).exp()).abs() < 1e-9);
        assert!(fit.concordance > 0.5);
        assert!(fit.log_likelihood >= fit.null_log_likelihood);
    }

    #[test]
    fn collinearity_is_named() {
        let obs: Vec<SurvivalObs> = (0..10).map(|i| ob(f64::from(i), i % 2 == 0)).collect();
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![f64::from(i), 2.0 * f64::from(i) + 1.0]).collect();
        match cox_fit_matrix(&obs, &x, &["a".into(), "b".into()], Ties::Efron) {
            Err(SurvivalError::Collinear { columns }) => assert_eq!(columns, vec!["a", "b"]),
            other => panic!("{other:?}"),
        }
        let zero: Vec<Vec<f64>> = (0..10).map(|_| vec![0.0]).collect();
        assert!(matches!(
            cox_fit_matrix(&obs, &zero, &["z".into()], Ties::Efron),
            Err(SurvivalError::Collinear { .. })
        ));
    }

    #[test]
    fn perfect_separation_diverges() {
        let obs: Vec<SurvivalObs> = (0..10).map(|i| ob(f64::from(i + 1), true)).collect();
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![if i < 5 { 1.0 } else { 0.0 }]).collect();
        assert!(matches!(cox_fit_matrix(&obs, &x, &["x".into()], Ties::Efron), Err(SurvivalError::Divergence(_))));
    }

    #[test]
    fn concordance_of_null_model_is_half() {
        let mut acc = 0.0;
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let obs: Vec<SurvivalObs> = (0..50).map(|_| ob(rng.random::<f64>(), rng.random_bool(0.7))).collect();
            let risk: Vec<f64> = (0..50).map(|_| rng.random::<f64>()).collect();
            acc += concordance(&obs, &risk);
        }
        assert!((acc / 20.0 - 0.5).abs() < 0.05);
        let obs = [ob(1.0, true), ob(2.0, true), ob(3.0, false)];
        assert_eq!(concordance(&obs, &[0.0; 3]), 0.5);
        assert_eq!(concordance(&obs, &[3.0, 2.0, 1.0]), 1.0);
    }
}
