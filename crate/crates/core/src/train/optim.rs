//! Deterministic full-batch optimizers: L-BFGS with Armijo backtracking and
//! Adam. Both operate on a flat variable vector through the [`Objective`]
//! trait and report the loss value at each accepted iterate.

use super::TrainError;
use std::collections::VecDeque;

/// A differentiable objective: writes the gradient into `grad` and returns
/// the loss at `x`.
pub trait Objective {
    fn eval(&mut self, x: &[f64], grad: &mut [f64]) -> f64;
}

const ARMIJO_C: f64 = 1e-4;
const BACKTRACK_SHRINK: f64 = 0.5;
const MAX_BACKTRACKS: usize = 30;

struct HistoryPair {
    s: Vec<f64>,
    y: Vec<f64>,
    rho: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Two-loop recursion: approximate inverse-Hessian product `H g`.
fn two_loop(history: &VecDeque<HistoryPair>, grad: &[f64]) -> Vec<f64> {
    let mut q = grad.to_vec();
    let mut alphas = Vec::with_capacity(history.len());
    for pair in history.iter().rev() {
        let alpha = pair.rho * dot(&pair.s, &q);
        for (qi, yi) in q.iter_mut().zip(&pair.y) {
            *qi -= alpha * yi;
        }
        alphas.push(alpha);
    }
    if let Some(last) = history.back() {
        let gamma = dot(&last.s, &last.y) / dot(&last.y, &last.y);
        for qi in q.iter_mut() {
            *qi *= gamma;
        }
    }
    for (pair, alpha) in history.iter().zip(alphas.iter().rev()) {
        let beta = pair.rho * dot(&pair.y, &q);
        for (qi, si) in q.iter_mut().zip(&pair.s) {
            *qi += (alpha - beta) * si;
        }
    }
    q
}

/// Minimize with limited-memory BFGS. Iterations count accepted steps; the
/// loss sequence is nonincreasing because only Armijo-satisfying steps are
/// taken. Returns the loss at the start plus after every accepted step.
pub fn lbfgs(
    obj: &mut dyn Objective,
    x: &mut [f64],
    history_size: usize,
    max_iters: usize,
) -> Result<Vec<f64>, TrainError> {
    let n = x.len();
    let mut grad = vec![0.0; n];
    let mut f = obj.eval(x, &mut grad);
    if !f.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(TrainError::Diverged { iteration: 0 });
    }
    let mut losses = Vec::with_capacity(max_iters + 1);
    losses.push(f);

    let mut history: VecDeque<HistoryPair> = VecDeque::with_capacity(history_size);
    let mut iter = 0;
    while iter < max_iters {
        if inf_norm(&grad) < 1e-13 {
            break;
        }
        let mut direction = {
            let mut d = two_loop(&history, &grad);
            for di in d.iter_mut() {
                *di = -*di;
            }
            d
        };
        let mut slope = dot(&grad, &direction);
        if !(slope < 0.0) {
            // not a descent direction: drop the history, fall back to
            // steepest descent
            history.clear();
            for (di, gi) in direction.iter_mut().zip(&grad) {
                *di = -gi;
            }
            slope = dot(&grad, &direction);
            if !(slope < 0.0) {
                break;
            }
        }

        // unit step once curvature information exists, scaled first step
        let mut alpha = if history.is_empty() {
            (1.0 / inf_norm(&grad).max(1.0)).min(1.0)
        } else {
            1.0
        };

        let mut x_new = vec![0.0; n];
        let mut grad_new = vec![0.0; n];
        let mut accepted = false;
        for _ in 0..=MAX_BACKTRACKS {
            for ((xn, xi), di) in x_new.iter_mut().zip(x.iter()).zip(&direction) {
                *xn = xi + alpha * di;
            }
            let f_new = obj.eval(&x_new, &mut grad_new);
            if f_new.is_finite() && f_new <= f + ARMIJO_C * alpha * slope {
                // curvature-guarded history update
                let s: Vec<f64> = x_new.iter().zip(x.iter()).map(|(a, b)| a - b).collect();
                let y: Vec<f64> = grad_new.iter().zip(grad.iter()).map(|(a, b)| a - b).collect();
                let sy = dot(&s, &y);
                if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
                    if history.len() == history_size {
                        history.pop_front();
                    }
                    history.push_back(HistoryPair { rho: 1.0 / sy, s, y });
                }
                x.copy_from_slice(&x_new);
                grad.copy_from_slice(&grad_new);
                f = f_new;
                accepted = true;
                break;
            }
            alpha *= BACKTRACK_SHRINK;
        }
        if !accepted {
            if history.is_empty() {
                // steepest descent cannot improve either: stalled
                break;
            }
            history.clear();
            continue; // retry the iteration with a fresh direction
        }
        iter += 1;
        losses.push(f);
    }
    Ok(losses)
}

/// Plain Adam with fixed iteration count. The returned iterate is the best
/// one seen, so the final loss never exceeds the starting loss.
#[allow(clippy::too_many_arguments)]
pub fn adam(
    obj: &mut dyn Objective,
    x: &mut [f64],
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    max_iters: usize,
) -> Result<Vec<f64>, TrainError> {
    let n = x.len();
    let mut grad = vec![0.0; n];
    let mut m = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut f = obj.eval(x, &mut grad);
    if !f.is_finite() {
        return Err(TrainError::Diverged { iteration: 0 });
    }
    let mut losses = vec![f];
    let mut best = x.to_vec();
    let mut best_f = f;
    for k in 1..=max_iters {
        for i in 0..n {
            m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
            let m_hat = m[i] / (1.0 - beta1.powi(k as i32));
            let v_hat = v[i] / (1.0 - beta2.powi(k as i32));
            x[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        f = obj.eval(x, &mut grad);
        if !f.is_finite() {
            return Err(TrainError::Diverged { iteration: k });
        }
        if f < best_f {
            best_f = f;
            best.copy_from_slice(x);
        }
        losses.push(f);
    }
    x.copy_from_slice(&best);
    losses.push(best_f);
    Ok(losses)
}
