//! Gradient correctness against independent oracles: central finite
//! differences, and a from-scratch plain-MLP implementation for the
//! identity-layer equivalences.

use ifedavg_core::matrix::Matrix;
use ifedavg_core::nn::{
    backward, forward, loss_weighted_nll, FOutMode, PersonalParams, SharedParams, WOut, HIDDEN1,
    HIDDEN2,
};
use ifedavg_core::rng::Rng;

const EPS: f64 = 1e-5;
const REL_TOL: f64 = 1e-4;

fn rel_err(a: f64, n: f64) -> f64 {
    let diff = (a - n).abs();
    // Central differences resolve the loss to about ulp(loss)/(2*eps) ~ 1e-11;
    // differences below that are indistinguishable from FD rounding noise.
    if diff < 1e-10 {
        return 0.0;
    }
    diff / a.abs().max(n.abs()).max(1e-12)
}

struct Instance {
    shared: SharedParams,
    personal: PersonalParams,
    batch: Matrix,
    targets: Vec<u32>,
    weights: Vec<f64>,
}

fn random_instance(rng: &mut Rng, fout: FOutMode) -> Instance {
    let d = 1 + rng.below(8);
    let k = 2 + rng.below(3);
    let b = 1 + rng.below(16);
    let shared = SharedParams::init(d, k, rng);
    let mut personal = PersonalParams::identity(d, k, true, fout);
    // move the personal layers off identity so their gradients are generic
    for v in &mut personal.b_in {
        *v = rng.uniform_in(-0.5, 0.5);
    }
    for v in &mut personal.w_in {
        *v = rng.uniform_in(0.5, 1.5);
    }
    for v in &mut personal.b_out {
        *v = rng.uniform_in(-0.5, 0.5);
    }
    personal.w_out = match personal.w_out {
        WOut::Vector(ref w) => {
            WOut::Vector(w.iter().map(|_| rng.uniform_in(0.5, 1.5)).collect())
        }
        WOut::Scalar(_) => WOut::Scalar(rng.uniform_in(0.5, 1.5)),
    };
    let mut batch = Matrix::zeros(b, d);
    for v in batch.as_mut_slice() {
        *v = rng.normal();
    }
    let targets: Vec<u32> = (0..b).map(|_| rng.below(k) as u32).collect();
    let weights: Vec<f64> = (0..k).map(|_| rng.uniform_in(0.5, 1.5)).collect();
    Instance { shared, personal, batch, targets, weights }
}

fn loss_of(inst: &Instance) -> f64 {
    let mut rng = Rng::from_seed(0);
    let (logits, _) =
        forward(&inst.shared, &inst.personal, &inst.batch, true, 0.0, &mut rng).unwrap();
    loss_weighted_nll(&logits, &inst.targets, &inst.weights).unwrap()
}

fn central_diff(inst: &mut Instance, read: impl Fn(&Instance) -> f64, write: impl Fn(&mut Instance, f64)) -> f64 {
    let orig = read(inst);
    write(inst, orig + EPS);
    let plus = loss_of(inst);
    write(inst, orig - EPS);
    let minus = loss_of(inst);
    write(inst, orig);
    (plus - minus) / (2.0 * EPS)
}

fn check_instance(inst: &mut Instance) -> (usize, f64) {
    let mut rng = Rng::from_seed(0);
    let (_, cache) =
        forward(&inst.shared, &inst.personal, &inst.batch, true, 0.0, &mut rng).unwrap();
    let (_, grads) =
        backward(&inst.shared, &inst.personal, &cache, &inst.targets, &inst.weights).unwrap();

    let mut checked = 0usize;
    let mut worst: f64 = 0.0;
    let mut check = |analytic: f64, numeric: f64| {
        checked += 1;
        let e = rel_err(analytic, numeric);
        if e > worst {
            worst = e;
        }
        assert!(
            e < REL_TOL,
            "gradient mismatch: analytic {analytic}, numeric {numeric}, rel {e}"
        );
    };

    // shared tensors
    for t in 0..6 {
        let len = grads.shared.tensors()[t].len();
        for i in 0..len {
            let analytic = grads.shared.tensors()[t][i];
            let numeric = central_diff(
                inst,
                |inst| inst.shared.tensors()[t][i],
                |inst, v| inst.shared.tensors_mut()[t][i] = v,
            );
            check(analytic, numeric);
        }
    }
    // personal vectors
    for i in 0..inst.personal.b_in.len() {
        let analytic = grads.b_in.as_ref().unwrap()[i];
        let numeric = central_diff(inst, |x| x.personal.b_in[i], |x, v| x.personal.b_in[i] = v);
        check(analytic, numeric);
        let analytic = grads.w_in.as_ref().unwrap()[i];
        let numeric = central_diff(inst, |x| x.personal.w_in[i], |x, v| x.personal.w_in[i] = v);
        check(analytic, numeric);
    }
    if inst.personal.train_b_out {
        for i in 0..inst.personal.b_out.len() {
            let analytic = grads.b_out.as_ref().unwrap()[i];
            let numeric =
                central_diff(inst, |x| x.personal.b_out[i], |x, v| x.personal.b_out[i] = v);
            check(analytic, numeric);
        }
    }
    match grads.w_out.as_ref().unwrap() {
        WOut::Vector(g) => {
            for (i, &analytic) in g.iter().enumerate() {
                let numeric = central_diff(
                    inst,
                    |x| match &x.personal.w_out {
                        WOut::Vector(w) => w[i],
                        _ => unreachable!(),
                    },
                    |x, v| {
                        if let WOut::Vector(w) = &mut x.personal.w_out {
                            w[i] = v
                        }
                    },
                );
                check(analytic, numeric);
            }
        }
        WOut::Scalar(analytic) => {
            let numeric = central_diff(
                inst,
                |x| match x.personal.w_out {
                    WOut::Scalar(w) => w,
                    _ => unreachable!(),
                },
                |x, v| x.personal.w_out = WOut::Scalar(v),
            );
            check(*analytic, numeric);
        }
    }
    (checked, worst)
}

#[test]
fn analytic_gradients_match_finite_differences() {
    let mut rng = Rng::from_seed(0x9d0f);
    let mut total = 0usize;
    for trial in 0..12 {
        let fout = match trial % 3 {
            0 => FOutMode::Both,
            1 => FOutMode::ScalarWeight,
            _ => FOutMode::Both,
        };
        let mut inst = random_instance(&mut rng, fout);
        let (checked, _) = check_instance(&mut inst);
        total += checked;
    }
    assert!(total > 10_000, "checked only {total} parameters");
}

// ---------------------------------------------------------------------------
// Plain-MLP oracle: an independent per-sample implementation of the bare
// shared network (no personalization layers at all).
// ---------------------------------------------------------------------------

struct PlainGrads {
    w1: Vec<Vec<f64>>,
    b1: Vec<f64>,
    w2: Vec<Vec<f64>>,
    b2: Vec<f64>,
    w3: Vec<Vec<f64>>,
    b3: Vec<f64>,
}

fn plain_forward_sample(p: &SharedParams, x: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut h1 = vec![0.0; HIDDEN1];
    for j in 0..HIDDEN1 {
        let mut acc = p.b1[j];
        for (kx, &xv) in x.iter().enumerate() {
            acc += xv * p.w1.get(kx, j);
        }
        h1[j] = acc.tanh();
    }
    let mut h2 = vec![0.0; HIDDEN2];
    for j in 0..HIDDEN2 {
        let mut acc = p.b2[j];
        for (kx, &hv) in h1.iter().enumerate() {
            acc += hv * p.w2.get(kx, j);
        }
        h2[j] = acc.tanh();
    }
    let mut out = vec![0.0; p.k];
    for j in 0..p.k {
        let mut acc = p.b3[j];
        for (kx, &hv) in h2.iter().enumerate() {
            acc += hv * p.w3.get(kx, j);
        }
        out[j] = acc;
    }
    (h1, h2, out)
}

fn plain_backward(
    p: &SharedParams,
    batch: &Matrix,
    targets: &[u32],
    weights: &[f64],
) -> PlainGrads {
    let d = p.d;
    let k = p.k;
    let b = batch.rows();
    let mut g = PlainGrads {
        w1: vec![vec![0.0; HIDDEN1]; d],
        b1: vec![0.0; HIDDEN1],
        w2: vec![vec![0.0; HIDDEN2]; HIDDEN1],
        b2: vec![0.0; HIDDEN2],
        w3: vec![vec![0.0; k]; HIDDEN2],
        b3: vec![0.0; k],
    };
    for r in 0..b {
        let x = batch.row(r);
        let (h1, h2, logits) = plain_forward_sample(p, x);
        // log-softmax gradient, weighted, averaged over the batch
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + logits.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        let y = targets[r] as usize;
        let wy = weights[y] / b as f64;
        let mut dz3: Vec<f64> = logits.iter().map(|v| (v - lse).exp()).collect();
        dz3[y] -= 1.0;
        for v in &mut dz3 {
            *v *= wy;
        }
        for j in 0..k {
            g.b3[j] += dz3[j];
            for (kx, &hv) in h2.iter().enumerate() {
                g.w3[kx][j] += hv * dz3[j];
            }
        }
        let mut dh2 = vec![0.0; HIDDEN2];
        for (kx, dv) in dh2.iter_mut().enumerate() {
            let mut acc = 0.0;
            for j in 0..k {
                acc += dz3[j] * p.w3.get(kx, j);
            }
            *dv = acc * (1.0 - h2[kx] * h2[kx]);
        }
        for j in 0..HIDDEN2 {
            g.b2[j] += dh2[j];
            for (kx, &hv) in h1.iter().enumerate() {
                g.w2[kx][j] += hv * dh2[j];
            }
        }
        let mut dh1 = vec![0.0; HIDDEN1];
        for (kx, dv) in dh1.iter_mut().enumerate() {
            let mut acc = 0.0;
            for j in 0..HIDDEN2 {
                acc += dh2[j] * p.w2.get(kx, j);
            }
            *dv = acc * (1.0 - h1[kx] * h1[kx]);
        }
        for j in 0..HIDDEN1 {
            g.b1[j] += dh1[j];
            for (kx, &xv) in x.iter().enumerate() {
                g.w1[kx][j] += xv * dh1[j];
            }
        }
    }
    g
}

#[test]
fn identity_layers_match_the_bare_network_bitwise() {
    let mut rng = Rng::from_seed(31);
    let shared = SharedParams::init(5, 3, &mut rng);
    let personal = PersonalParams::identity(5, 3, true, FOutMode::None);
    let mut batch = Matrix::zeros(7, 5);
    for v in batch.as_mut_slice() {
        *v = rng.normal();
    }
    let mut fwd_rng = Rng::from_seed(0);
    let (logits, _) = forward(&shared, &personal, &batch, false, 0.0, &mut fwd_rng).unwrap();
    for r in 0..batch.rows() {
        let (_, _, plain) = plain_forward_sample(&shared, batch.row(r));
        for j in 0..3 {
            assert_eq!(
                logits.get(r, j).to_bits(),
                plain[j].to_bits(),
                "row {r} logit {j}: {} vs {}",
                logits.get(r, j),
                plain[j]
            );
        }
    }
}

#[test]
fn frozen_personal_layers_give_plain_mlp_gradients() {
    let mut rng = Rng::from_seed(32);
    let shared = SharedParams::init(4, 2, &mut rng);
    let personal = PersonalParams::frozen_identity(4, 2);
    let mut batch = Matrix::zeros(6, 4);
    for v in batch.as_mut_slice() {
        *v = rng.normal();
    }
    let targets: Vec<u32> = (0..6).map(|_| rng.below(2) as u32).collect();
    let weights = vec![0.8, 1.2];

    let mut fwd_rng = Rng::from_seed(0);
    let (_, cache) = forward(&shared, &personal, &batch, true, 0.0, &mut fwd_rng).unwrap();
    let (_, grads) = backward(&shared, &personal, &cache, &targets, &weights).unwrap();
    assert!(grads.b_in.is_none() && grads.w_in.is_none());

    let plain = plain_backward(&shared, &batch, &targets, &weights);
    for j in 0..2 {
        assert_eq!(grads.shared.b3[j].to_bits(), plain.b3[j].to_bits());
    }
    for kx in 0..4 {
        for j in 0..128 {
            assert_eq!(
                grads.shared.w1.get(kx, j).to_bits(),
                plain.w1[kx][j].to_bits(),
                "w1[{kx}][{j}]"
            );
        }
    }
    for kx in 0..128 {
        for j in 0..64 {
            assert_eq!(grads.shared.w2.get(kx, j).to_bits(), plain.w2[kx][j].to_bits());
        }
    }
    for kx in 0..64 {
        for j in 0..2 {
            assert_eq!(grads.shared.w3.get(kx, j).to_bits(), plain.w3[kx][j].to_bits());
        }
    }
    for j in 0..128 {
        assert_eq!(grads.shared.b1[j].to_bits(), plain.b1[j].to_bits());
    }
    for j in 0..64 {
        assert_eq!(grads.shared.b2[j].to_bits(), plain.b2[j].to_bits());
    }
}

#[test]
fn input_affine_stays_element_wise() {
    // perturbing b_in[j] moves f_in output only in slot j
    let mut rng = Rng::from_seed(33);
    let shared = SharedParams::init(4, 2, &mut rng);
    let mut personal = PersonalParams::identity(4, 2, true, FOutMode::None);
    let batch = Matrix::from_rows(&[vec![0.3, -0.4, 0.9, 0.1]]).unwrap();
    let mut r = Rng::from_seed(0);
    let (_, base) = forward(&shared, &personal, &batch, true, 0.0, &mut r).unwrap();
    personal.b_in[2] += 0.7;
    let mut r = Rng::from_seed(0);
    let (_, moved) = forward(&shared, &personal, &batch, true, 0.0, &mut r).unwrap();
    for j in 0..4 {
        if j == 2 {
            assert_ne!(base.fin_out.get(0, j), moved.fin_out.get(0, j));
        } else {
            assert_eq!(base.fin_out.get(0, j).to_bits(), moved.fin_out.get(0, j).to_bits());
        }
    }
}
