use super::{BmcParams, ModelError};

/// Step cap for [`mixing_time`].
pub const MIXING_MAX_STEPS: usize = 100_000;

/// Distinguishability of the hardest pair of clusters.
///
/// For an ordered pair `i ≠ j` the candidate value is
///
/// ```text
/// Σ_k (1/α_i) (π_i p_ik ln(p_ik / p_jk) + π_k p_ki ln(p_ki α_j / (p_kj α_i))) + (π_j/α_j − π_i/α_i)
/// ```
///
/// with `0·ln(0/q) = 0` and `q·ln(q/0) = +∞`. The result is the minimum over
/// all ordered pairs with `i ≠ j`; a single-cluster model has no pair and
/// yields `+∞`.
pub fn information_quantity(params: &BmcParams) -> Result<f64, ModelError> {
    let pi = params.stationary()?;
    Ok(information_quantity_with(&params.p, &params.alpha, &pi))
}

pub(crate) fn information_quantity_with(p: &[Vec<f64>], alpha: &[f64], pi: &[f64]) -> f64 {
    let k = p.len();
    let mut best = f64::INFINITY;
    for i in 0..k {
        for j in 0..k {
            if i == j {
                continue;
            }
            let mut sum = 0.0;
            for m in 0..k {
                sum += xlogratio(pi[i] * p[i][m], p[i][m], p[j][m]);
                sum += xlogratio(pi[m] * p[m][i], p[m][i] * alpha[j], p[m][j] * alpha[i]);
            }
            let value = sum / alpha[i] + (pi[j] / alpha[j] - pi[i] / alpha[i]);
            best = best.min(value);
        }
    }
    best
}

/// `weight · ln(num / den)` with the zero conventions above. `weight` is
/// zero exactly when `num` is.
fn xlogratio(weight: f64, num: f64, den: f64) -> f64 {
    if num == 0.0 || weight == 0.0 {
        0.0
    } else if den == 0.0 {
        f64::INFINITY
    } else {
        weight * (num / den).ln()
    }
}

/// First `t ≥ 1` at which the worst-case total-variation distance between
/// the `t`-step kernel and the stationary law is at most `1/4`.
///
/// For a block Markov chain `d_TV(Π, P^t_x)` depends on `x` only through
/// `σ(x)`, so the recursion runs on the `K×K` cluster chain. The boundary is
/// inclusive (with `1e-12` slack), which makes the two-cluster symmetric
/// family match `⌈ln 2 / ln(1/(2p₀−1))⌉` exactly, including when that ratio
/// is an integer.
pub fn mixing_time(params: &BmcParams) -> Result<usize, ModelError> {
    let pi = params.stationary()?;
    let k = params.k;
    let p = &params.p;
    let mut power = p.clone();
    for t in 1..=MIXING_MAX_STEPS {
        let worst = power
            .iter()
            .map(|row| 0.5 * row.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum::<f64>())
            .fold(0.0, f64::max);
        if worst <= 0.25 + 1e-12 {
            return Ok(t);
        }
        let mut next = vec![vec![0.0; k]; k];
        for i in 0..k {
            for m in 0..k {
                let w = power[i][m];
                if w == 0.0 {
                    continue;
                }
                for j in 0..k {
                    next[i][j] += w * p[m][j];
                }
            }
        }
        power = next;
    }
    Err(ModelError::NoMixing(MIXING_MAX_STEPS))
}
