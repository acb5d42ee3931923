//! Discrete soft actor-critic objectives, generic over the scalar type so
//! gradients can be checked in `f64`.

use super::{Batch, Mlp};
use crate::error::{Error, Result};
use crate::nn::{log_softmax_rows, softmax_rows, Real, Tape, Tensor};

/// Loss value and one gradient tensor per parameter, in parameter order.
#[derive(Debug, Clone)]
pub struct LossGrad<T> {
    pub value: T,
    pub grads: Vec<Tensor<T>>,
}

/// Output of [`q_loss`]: gradients for both online heads.
#[derive(Debug, Clone)]
pub struct TwinLossGrad<T> {
    pub value: T,
    pub grads_q1: Vec<Tensor<T>>,
    pub grads_q2: Vec<Tensor<T>>,
}

pub fn elementwise_min<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| x.min(y)).collect();
    Tensor::new(a.shape(), data).expect("same shape")
}

/// Mean over rows of `-sum_a p log p`.
pub fn mean_entropy<T: Real>(logits: &Tensor<T>) -> T {
    let p = softmax_rows(logits);
    let lp = log_softmax_rows(logits);
    let rows = logits.shape()[0];
    let s: T = p.data().iter().zip(lp.data()).map(|(&a, &b)| a * b).sum();
    -s / T::from_f64(rows as f64)
}

/// `mean_b sum_a pi(a|s) (kappa log pi(a|s) - min(q1, q2)(s, a))`, with the
/// critics treated as constants.
pub fn policy_loss<T: Real>(policy: &Mlp<T>, q1: &Mlp<T>, q2: &Mlp<T>, states: &Tensor<T>, kappa: T) -> Result<LossGrad<T>> {
    let q = elementwise_min(&q1.forward(states)?, &q2.forward(states)?);
    let mut tape = Tape::new();
    let vars = policy.params().bind(&mut tape);
    let x = tape.constant(states.clone());
    let logits = policy.forward_on_tape(&mut tape, &vars, x)?;
    if tape.value(logits).shape() != q.shape() {
        return Err(Error::invalid("policy and critic action counts differ"));
    }
    let p = tape.softmax(logits);
    let logp = tape.log_softmax(logits);
    let qc = tape.constant(q);
    let scaled = tape.scale(logp, kappa);
    let inner = tape.sub(scaled, qc)?;
    let weighted = tape.mul(p, inner)?;
    let total = tape.sum(weighted);
    let loss = tape.scale(total, T::ONE / T::from_f64(states.shape()[0] as f64));
    let g = tape.backward(loss)?;
    Ok(LossGrad {
        value: tape.value(loss).item(),
        grads: vars.iter().map(|&v| g.get(v).cloned().unwrap_or_else(|| Tensor::zeros(tape.value(v).shape()))).collect(),
    })
}

/// Soft Bellman targets `r + gamma (1 - done) sum_a pi(a|s') (minQ'(s', a) - kappa log pi(a|s'))`.
pub fn soft_targets<T: Real>(
    policy: &Mlp<T>,
    q1_target: &Mlp<T>,
    q2_target: &Mlp<T>,
    batch: &Batch<T>,
    gamma: T,
    kappa: T,
) -> Result<Vec<T>> {
    let logits = policy.forward(&batch.next_states)?;
    let p = softmax_rows(&logits);
    let lp = log_softmax_rows(&logits);
    let q = elementwise_min(&q1_target.forward(&batch.next_states)?, &q2_target.forward(&batch.next_states)?);
    let a = logits.shape()[1];
    Ok((0..batch.len())
        .map(|i| {
            if batch.dones[i] {
                return batch.rewards[i];
            }
            let row = i * a..(i + 1) * a;
            let v: T = p.data()[row.clone()]
                .iter()
                .zip(&q.data()[row.clone()])
                .zip(&lp.data()[row])
                .map(|((&pi, &qi), &li)| pi * (qi - kappa * li))
                .sum();
            batch.rewards[i] + gamma * v
        })
        .collect())
}

/// `0.5 mean (q1(s,a) - y)^2 + 0.5 mean (q2(s,a) - y)^2`.
#[allow(clippy::too_many_arguments)]
pub fn q_loss<T: Real>(
    q1: &Mlp<T>,
    q2: &Mlp<T>,
    q1_target: &Mlp<T>,
    q2_target: &Mlp<T>,
    policy: &Mlp<T>,
    batch: &Batch<T>,
    gamma: T,
    kappa: T,
) -> Result<TwinLossGrad<T>> {
    let y = soft_targets(policy, q1_target, q2_target, batch, gamma, kappa)?;
    let mut tape = Tape::new();
    let v1 = q1.params().bind(&mut tape);
    let v2 = q2.params().bind(&mut tape);
    let x = tape.constant(batch.states.clone());
    let yv = tape.constant(Tensor::new(&[y.len()], y)?);
    let half = T::from_f64(0.5);
    let mut heads = Vec::with_capacity(2);
    for (net, vars) in [(q1, &v1), (q2, &v2)] {
        let out = net.forward_on_tape(&mut tape, vars, x)?;
        let taken = tape.gather(out, &batch.actions)?;
        let mse = tape.mse_loss(taken, yv)?;
        heads.push(tape.scale(mse, half));
    }
    let loss = tape.add(heads[0], heads[1])?;
    let g = tape.backward(loss)?;
    let collect = |vars: &[crate::nn::Var]| {
        vars.iter()
            .map(|&v| g.get(v).cloned().unwrap_or_else(|| Tensor::zeros(tape.value(v).shape())))
            .collect()
    };
    Ok(TwinLossGrad {
        value: tape.value(loss).item(),
        grads_q1: collect(&v1),
        grads_q2: collect(&v2),
    })
}
