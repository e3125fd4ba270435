//! Finite-difference gradient verification.

use crate::{Error, Result};

use super::{Tape, Tensor, Var};

/// Compare the analytic gradient of `f` at `x` against central differences.
///
/// `f` builds a scalar loss from a single leaf; it is re-invoked on a fresh
/// tape for every perturbed input, so it must be a pure function of that
/// leaf (this is checked by evaluating the unperturbed loss twice and
/// requiring bit-equal results). Returns the maximum over components of
///
/// `|analytic - numeric| / max(1, |analytic|, |numeric|)`.
pub fn grad_check<F>(f: F, x: &Tensor, eps: f64) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    if eps <= 0.0 {
        return Err(Error::contract(format!("grad_check: eps {eps} must be > 0")));
    }

    let eval = |t: &Tensor| -> Result<f64> {
        let mut tape = Tape::new();
        let leaf = tape.leaf(t);
        let loss = f(&mut tape, leaf)?;
        if tape.data(loss).len() != 1 {
            return Err(Error::contract(format!(
                "grad_check: f must return a scalar, got shape {:?}",
                tape.shape(loss)
            )));
        }
        Ok(tape.data(loss)[0])
    };

    let l0 = eval(x)?;
    let l1 = eval(x)?;
    if l0.to_bits() != l1.to_bits() {
        return Err(Error::contract(
            "grad_check: f is not deterministic (two evaluations disagree)",
        ));
    }

    // Analytic pass.
    let mut tape = Tape::new();
    let leaf = tape.leaf(x);
    let loss = f(&mut tape, leaf)?;
    tape.backward(loss)?;
    let analytic = tape.grad(leaf).to_vec();

    // Central differences, one component at a time.
    let mut max_rel = 0.0f64;
    let mut probe = x.clone();
    for i in 0..x.numel() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + eps;
        let lp = eval(&probe)?;
        probe.data_mut()[i] = orig - eps;
        let lm = eval(&probe)?;
        probe.data_mut()[i] = orig;

        let numeric = (lp - lm) / (2.0 * eps);
        let a = analytic[i];
        let rel = (a - numeric).abs() / 1.0f64.max(a.abs()).max(numeric.abs());
        if rel > max_rel {
            max_rel = rel;
        }
    }
    Ok(max_rel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::rc::Rc;

    const EPS: f64 = 1e-5;
    const TOL: f64 = 1e-4;

    fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
        let n = shape.iter().product();
        let data = (0..n).map(|_| rng.gen_range(-1.5..1.5)).collect();
        Tensor::from_vec(shape, data).unwrap()
    }

    #[test]
    fn per_op_gradients_match_central_differences() {
        for seed in 0..5u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let m = rng.gen_range(2..=5);
            let n = rng.gen_range(2..=6);
            let x = random_tensor(&mut rng, &[m, n]);

            // Fixed co-operands so f stays a pure function of the leaf.
            let other = random_tensor(&mut rng, &[m, n]);
            let weight = random_tensor(&mut rng, &[n, m]);
            let bias = random_tensor(&mut rng, &[n]);
            let gamma = random_tensor(&mut rng, &[n]);
            let beta = random_tensor(&mut rng, &[n]);
            let labels: Vec<usize> = (0..m).map(|_| rng.gen_range(0..n)).collect();

            let cases: Vec<(&str, Box<dyn Fn(&mut Tape, Var) -> crate::Result<Var>>)> = vec![
                ("add", {
                    let other = other.clone();
                    Box::new(move |t, v| {
                        let o = t.leaf(&other);
                        let y = t.add(v, o)?;
                        Ok(t.sum(y))
                    })
                }),
                ("mul", {
                    let other = other.clone();
                    Box::new(move |t, v| {
                        let o = t.leaf(&other);
                        let y = t.mul(v, o)?;
                        Ok(t.sum(y))
                    })
                }),
                ("scale", Box::new(|t, v| {
                    let y = t.scale(v, -1.75);
                    Ok(t.sum(y))
                })),
                ("matmul", {
                    let weight = weight.clone();
                    Box::new(move |t, v| {
                        let w = t.leaf(&weight);
                        let y = t.matmul(v, w)?;
                        Ok(t.sum(y))
                    })
                }),
                ("transpose", Box::new(|t, v| {
                    let y = t.transpose(v)?;
                    let y2 = t.tanh(y);
                    Ok(t.sum(y2))
                })),
                ("add_row_bias", {
                    let bias = bias.clone();
                    Box::new(move |t, v| {
                        let b = t.leaf(&bias);
                        let y = t.add_row_bias(v, b)?;
                        let y2 = t.tanh(y);
                        Ok(t.sum(y2))
                    })
                }),
                ("row_softmax", Box::new(|t, v| {
                    let y = t.row_softmax(v)?;
                    let sq = t.mul(y, y)?;
                    Ok(t.sum(sq))
                })),
                ("layer_norm", {
                    let (gamma, beta) = (gamma.clone(), beta.clone());
                    Box::new(move |t, v| {
                        let g = t.leaf(&gamma);
                        let b = t.leaf(&beta);
                        let y = t.layer_norm(v, g, b, 1e-5)?;
                        let sq = t.mul(y, y)?;
                        Ok(t.sum(sq))
                    })
                }),
                ("tanh", Box::new(|t, v| {
                    let y = t.tanh(v);
                    Ok(t.sum(y))
                })),
                ("gelu", Box::new(|t, v| {
                    let y = t.gelu(v);
                    Ok(t.sum(y))
                })),
                ("gather_rows", Box::new(move |t, v| {
                    let y = t.gather_rows(v, &[0, m - 1, 0])?;
                    let y2 = t.tanh(y);
                    Ok(t.sum(y2))
                })),
                ("slice_concat", Box::new(move |t, v| {
                    // n >= 2, so both halves are nonempty.
                    let n1 = n / 2;
                    let a = t.slice_cols(v, 0, n1)?;
                    let b = t.slice_cols(v, n1, n - n1)?;
                    let y = t.concat_cols(&[b, a])?;
                    let y2 = t.tanh(y);
                    Ok(t.sum(y2))
                })),
                ("cross_entropy", {
                    let labels = labels.clone();
                    Box::new(move |t, v| t.cross_entropy(v, &labels))
                }),
                ("masked_exp_row_normalize", Box::new(move |t, v| {
                    // Deterministic mask with a guaranteed nonzero per row.
                    let mut mask = vec![0.0; m * n];
                    for i in 0..m {
                        for j in 0..n {
                            mask[i * n + j] = if (i + 2 * j) % 3 != 0 { 1.0 } else { 0.0 };
                        }
                        mask[i * n] = 1.0;
                    }
                    let y = t.masked_exp(v, Rc::new(mask), vec![0.0; m])?;
                    let p = t.row_normalize(y)?;
                    let sq = t.mul(p, p)?;
                    Ok(t.sum(sq))
                })),
            ];

            for (name, f) in cases {
                let err = grad_check(&f, &x, EPS).unwrap();
                assert!(
                    err < TOL,
                    "op {name} seed {seed}: max rel grad error {err} >= {TOL}"
                );
            }
        }
    }

    #[test]
    fn rejects_nondeterministic_functions() {
        use std::cell::Cell;
        let counter = Cell::new(0.0f64);
        let f = move |t: &mut Tape, v: Var| {
            counter.set(counter.get() + 1.0);
            let y = t.scale(v, counter.get());
            Ok(t.sum(y))
        };
        let x = Tensor::from_vec(&[1, 2], vec![1.0, 2.0]).unwrap();
        assert!(grad_check(f, &x, EPS).is_err());
    }

    #[test]
    fn rejects_non_scalar_outputs() {
        let f = |_: &mut Tape, v: Var| Ok(v);
        let x = Tensor::from_vec(&[1, 2], vec![1.0, 2.0]).unwrap();
        assert!(grad_check(f, &x, EPS).is_err());
    }
}
