//! Central-difference gradient checking in `f64`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Padding, ParamSet, Tape, Tensor, Var};
use crate::agent::{policy_loss, q_loss, Batch, Mlp};
use crate::error::Result;

pub const FD_STEP: f64 = 1e-6;

/// Numerical gradient of `f` with respect to every element of `inputs`.
pub fn numeric_gradient(inputs: &[Tensor<f64>], h: f64, mut f: impl FnMut(&[Tensor<f64>]) -> Result<f64>) -> Result<Vec<Tensor<f64>>> {
    let mut work = inputs.to_vec();
    let mut out = Vec::with_capacity(inputs.len());
    for k in 0..inputs.len() {
        let mut g = Tensor::zeros(inputs[k].shape());
        for i in 0..inputs[k].len() {
            let x0 = inputs[k].data()[i];
            work[k].data_mut()[i] = x0 + h;
            let up = f(&work)?;
            work[k].data_mut()[i] = x0 - h;
            let down = f(&work)?;
            work[k].data_mut()[i] = x0;
            g.data_mut()[i] = (up - down) / (2.0 * h);
        }
        out.push(g);
    }
    Ok(out)
}

/// Largest per-tensor `|a - n| / max(|a| + |n|, floor)` in the 2-norm.
pub fn relative_error(analytic: &[Tensor<f64>], numeric: &[Tensor<f64>], floor: f64) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| {
            let diff: f64 = a.data().iter().zip(n.data()).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
            diff / (a.sq_norm().sqrt() + n.sq_norm().sqrt()).max(floor)
        })
        .fold(0.0, f64::max)
}

/// Builds `build` on a tape with every input as a parameter and compares
/// the backward pass against central differences.
pub fn check_tape_gradients(
    inputs: &[Tensor<f64>],
    h: f64,
    build: impl Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
) -> Result<f64> {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let loss = build(&mut tape, &vars)?;
    let g = tape.backward(loss)?;
    let analytic: Vec<Tensor<f64>> = vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| g.get(v).cloned().unwrap_or_else(|| Tensor::zeros(t.shape())))
        .collect();
    let numeric = numeric_gradient(inputs, h, |xs| {
        let mut t = Tape::new();
        let vs: Vec<Var> = xs.iter().map(|x| t.param(x.clone())).collect();
        let l = build(&mut t, &vs)?;
        Ok(t.value(l).item())
    })?;
    Ok(relative_error(&analytic, &numeric, 1e-8))
}

fn uniform(shape: &[usize], lo: f64, hi: f64, rng: &mut impl Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(lo..hi)).collect()).expect("shape")
}

/// Values at least `gap` away from zero, either sign.
fn off_zero(shape: &[usize], gap: f64, rng: &mut impl Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let v = rng.random_range(gap..1.0);
            if rng.random::<bool>() {
                v
            } else {
                -v
            }
        })
        .collect();
    Tensor::new(shape, data).expect("shape")
}

/// Reduces `y` to a scalar through fixed random weights, so every output
/// element gets a distinct upstream gradient.
fn project(t: &mut Tape<f64>, y: Var, w: &Tensor<f64>) -> Result<Var> {
    let c = t.constant(w.clone());
    let p = t.mul(y, c)?;
    Ok(t.sum(p))
}

/// Checks every tape operation on random inputs drawn from `seed`.
/// Returns `(op, relative error)` pairs.
pub fn tape_op_suite(seed: u64) -> Result<Vec<(&'static str, f64)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = &mut rng;
    let mut out = Vec::new();
    let (b, i, o) = (r.random_range(1..4), r.random_range(1..6), r.random_range(1..5));
    let w = uniform(&[b, o], -1.0, 1.0, r);
    let inputs = [uniform(&[b, i], -1.0, 1.0, r), uniform(&[o, i], -1.0, 1.0, r), uniform(&[o], -1.0, 1.0, r)];
    out.push(("linear", check_tape_gradients(&inputs, FD_STEP, |t, v| {
        let y = t.linear(v[0], v[1], v[2])?;
        project(t, y, &w)
    })?));

    for (name, stride, padding) in [
        ("conv2d-zero", 1, Padding::Zero),
        ("conv2d-mirror", 1, Padding::Mirror),
        ("conv2d-stride2", 2, Padding::Mirror),
    ] {
        let (n, ci, co) = (r.random_range(1..3), r.random_range(1..4), r.random_range(1..4));
        let k = if r.random::<bool>() { 3 } else { 1 };
        let (h, wd) = (r.random_range(3..7), r.random_range(3..7));
        let inputs = [uniform(&[n, ci, h, wd], -1.0, 1.0, r), uniform(&[co, ci, k, k], -1.0, 1.0, r), uniform(&[co], -1.0, 1.0, r)];
        let mut probe = Tape::new();
        let vs: Vec<Var> = inputs.iter().map(|x| probe.constant(x.clone())).collect();
        let y = probe.conv2d(vs[0], vs[1], vs[2], stride, padding)?;
        let pw = uniform(probe.value(y).shape(), -1.0, 1.0, r);
        out.push((name, check_tape_gradients(&inputs, FD_STEP, |t, v| {
            let y = t.conv2d(v[0], v[1], v[2], stride, padding)?;
            project(t, y, &pw)
        })?));
    }

    let shape = [r.random_range(1..4), r.random_range(2..6)];
    let pw = uniform(&shape, -1.0, 1.0, r);
    let a = off_zero(&shape, 0.05, r);
    out.push(("relu", check_tape_gradients(&[a], FD_STEP, |t, v| {
        let y = t.relu(v[0]);
        project(t, y, &pw)
    })?));
    let pair = [uniform(&shape, -1.0, 1.0, r), uniform(&shape, -1.0, 1.0, r)];
    out.push(("add", check_tape_gradients(&pair, FD_STEP, |t, v| {
        let y = t.add(v[0], v[1])?;
        project(t, y, &pw)
    })?));
    out.push(("sub", check_tape_gradients(&pair, FD_STEP, |t, v| {
        let y = t.sub(v[0], v[1])?;
        project(t, y, &pw)
    })?));
    out.push(("mul", check_tape_gradients(&pair, FD_STEP, |t, v| {
        let y = t.mul(v[0], v[1])?;
        project(t, y, &pw)
    })?));
    let s = r.random_range(-2.0..2.0);
    out.push(("scale", check_tape_gradients(&pair[..1], FD_STEP, |t, v| {
        let y = t.scale(v[0], s);
        project(t, y, &pw)
    })?));
    // keep clear of both clamp corners
    let c = uniform(&shape, -0.5, 1.5, r).map(|v| if v.abs() < 0.02 || (v - 1.0).abs() < 0.02 { v + 0.05 } else { v });
    out.push(("clamp01", check_tape_gradients(&[c], FD_STEP, |t, v| {
        let y = t.clamp01(v[0]);
        project(t, y, &pw)
    })?));
    let logits = uniform(&shape, -3.0, 3.0, r);
    out.push(("softmax", check_tape_gradients(std::slice::from_ref(&logits), FD_STEP, |t, v| {
        let y = t.softmax(v[0]);
        project(t, y, &pw)
    })?));
    out.push(("log_softmax", check_tape_gradients(std::slice::from_ref(&logits), FD_STEP, |t, v| {
        let y = t.log_softmax(v[0]);
        project(t, y, &pw)
    })?));
    let index: Vec<usize> = (0..shape[0]).map(|_| r.random_range(0..shape[1])).collect();
    let gw = uniform(&[shape[0]], -1.0, 1.0, r);
    out.push(("gather", check_tape_gradients(std::slice::from_ref(&logits), FD_STEP, |t, v| {
        let y = t.gather(v[0], &index)?;
        project(t, y, &gw)
    })?));
    let base = uniform(&shape, -1.0, 1.0, r);
    let apart = [base.clone(), {
        let d = off_zero(&shape, 0.05, r);
        let data = base.data().iter().zip(d.data()).map(|(x, y)| x + y).collect();
        Tensor::new(&shape, data)?
    }];
    out.push(("l1_loss", check_tape_gradients(&apart, FD_STEP, |t, v| t.l1_loss(v[0], v[1]))?));
    out.push(("mse_loss", check_tape_gradients(&pair, FD_STEP, |t, v| t.mse_loss(v[0], v[1]))?));
    out.push(("mean", check_tape_gradients(&pair[..1], FD_STEP, |t, v| {
        let y = t.mul(v[0], v[0])?;
        Ok(t.mean(y))
    })?));
    out.push(("sum", check_tape_gradients(&pair[..1], FD_STEP, |t, v| {
        let y = t.mul(v[0], v[0])?;
        Ok(t.sum(y))
    })?));

    // residual conv block as used by the restoration nets
    let (h, wd) = (r.random_range(3..6), r.random_range(3..6));
    let inputs = [
        uniform(&[1, 3, h, wd], 0.2, 0.8, r),
        uniform(&[4, 3, 3, 3], -0.3, 0.3, r),
        uniform(&[4], -0.1, 0.1, r),
        uniform(&[3, 4, 3, 3], -0.3, 0.3, r),
        uniform(&[3], -0.1, 0.1, r),
    ];
    let target = uniform(&[1, 3, h, wd], 0.0, 1.0, r);
    out.push(("residual-block", check_tape_gradients(&inputs, FD_STEP, |t, v| {
        let h1 = t.conv2d(v[0], v[1], v[2], 1, Padding::Mirror)?;
        let a1 = t.relu(h1);
        let res = t.conv2d(a1, v[3], v[4], 1, Padding::Mirror)?;
        let y = t.add(v[0], res)?;
        let y = t.clamp01(y);
        let tg = t.constant(target.clone());
        t.mse_loss(y, tg)
    })?));
    Ok(out)
}

fn with_values(base: &ParamSet<f64>, values: &[Tensor<f64>]) -> ParamSet<f64> {
    let mut p = base.clone();
    for (i, v) in values.iter().enumerate() {
        *p.value_mut(i) = v.clone();
    }
    p
}

fn values(p: &ParamSet<f64>) -> Vec<Tensor<f64>> {
    p.iter().map(|q| q.value.clone()).collect()
}

/// Checks both soft actor-critic losses against central differences on a
/// random batch. Returns `(policy error, critic error)`.
pub fn sac_loss_suite(seed: u64) -> Result<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = &mut rng;
    let (f, a, hidden, b) = (r.random_range(2..7), r.random_range(2..6), r.random_range(3..8), r.random_range(1..5));
    let depth = r.random_range(2..4);
    // random biases keep pre-activations off the ReLU kink at zero
    let mlp = |depth: usize, r: &mut ChaCha8Rng| {
        let m = Mlp::<f64>::new(f, hidden, a, depth, r);
        let vals: Vec<Tensor<f64>> = m
            .params()
            .iter()
            .map(|p| if p.name.ends_with("bias") { uniform(p.value.shape(), -0.5, 0.5, r) } else { p.value.clone() })
            .collect();
        Mlp::from_params(with_values(m.params(), &vals))
    };
    let policy = mlp(depth, r);
    let nets: Vec<Mlp<f64>> = (0..4).map(|_| mlp(2, r)).collect();
    let kappa = r.random_range(0.01..1.0);
    let gamma = r.random_range(0.5..1.0);
    let states = uniform(&[b, f], -1.0, 1.0, r);
    let batch = Batch {
        states: states.clone(),
        actions: (0..b).map(|_| r.random_range(0..a)).collect(),
        rewards: (0..b).map(|_| r.random_range(-1.0..1.0)).collect(),
        next_states: uniform(&[b, f], -1.0, 1.0, r),
        dones: (0..b).map(|_| r.random::<bool>()).collect(),
    };

    let pl = policy_loss(&policy, &nets[0], &nets[1], &states, kappa)?;
    let numeric = numeric_gradient(&values(policy.params()), FD_STEP, |xs| {
        let p = Mlp::from_params(with_values(policy.params(), xs));
        Ok(policy_loss(&p, &nets[0], &nets[1], &states, kappa)?.value)
    })?;
    let pe = relative_error(&pl.grads, &numeric, 1e-8);

    let ql = q_loss(&nets[0], &nets[1], &nets[2], &nets[3], &policy, &batch, gamma, kappa)?;
    let n1 = nets[0].params().len();
    let mut joint = values(nets[0].params());
    joint.extend(values(nets[1].params()));
    let numeric = numeric_gradient(&joint, FD_STEP, |xs| {
        let q1 = Mlp::from_params(with_values(nets[0].params(), &xs[..n1]));
        let q2 = Mlp::from_params(with_values(nets[1].params(), &xs[n1..]));
        Ok(q_loss(&q1, &q2, &nets[2], &nets[3], &policy, &batch, gamma, kappa)?.value)
    })?;
    let mut analytic = ql.grads_q1;
    analytic.extend(ql.grads_q2);
    let qe = relative_error(&analytic, &numeric, 1e-8);
    Ok((pe, qe))
}
