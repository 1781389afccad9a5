//! Central finite-difference gradient checking.
//!
//! Lives in the library (not test code) so both unit tests and the
//! acceptance suite can drive it; it never touches the analytic backward
//! path other than to compare against it.

use super::{Scalar, Tensor};
use crate::error::Result;

/// Max relative error between the analytic gradient of `f` w.r.t. each
/// tensor in `params` and a central finite difference with step `h`.
///
/// `f` must rebuild the computation from the current parameter values on
/// every call and return a scalar loss tensor.
pub fn max_rel_error<T, F>(params: &[Tensor<T>], f: F, h: T) -> Result<T>
where
    T: Scalar,
    F: Fn() -> Result<Tensor<T>>,
{
    for p in params {
        p.zero_grad();
    }
    let loss = f()?;
    loss.backward()?;
    let analytic: Vec<Vec<T>> = params
        .iter()
        .map(|p| p.grad().expect("parameter has gradient"))
        .collect();

    let floor = T::from_f64_(1e-6);
    let mut worst = T::zero();
    for (p, pg) in params.iter().zip(&analytic) {
        let base = p.data();
        for j in 0..base.len() {
            let mut d = base.clone();
            d[j] = base[j] + h;
            p.set_data(d.clone())?;
            let up = f()?.item()?;
            d[j] = base[j] - h;
            p.set_data(d)?;
            let down = f()?.item()?;
            p.set_data(base.clone())?;
            let numeric = (up - down) / (h + h);
            let denom = pg[j].abs().max(numeric.abs()).max(floor);
            let rel = (pg[j] - numeric).abs() / denom;
            if rel > worst {
                worst = rel;
            }
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    fn rand_vec32(rng: &mut ChaCha8Rng, n: usize) -> Vec<f32> {
        (0..n).map(|_| rng.gen_range(-1.0f32..1.0)).collect()
    }

    /// Every differentiable op, 64-bit, h = 1e-6, rel err < 1e-6.
    #[test]
    fn all_ops_gradcheck_f64() {
        for seed in 0..10u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);

            let a = Tensor::<f64>::param(&[4, 5], rand_vec(&mut rng, 20)).unwrap();
            let b = Tensor::<f64>::param(&[5, 3], rand_vec(&mut rng, 15)).unwrap();
            let e = max_rel_error(&[a.clone(), b.clone()], || {
                a.matmul(&b)?.sum_all()
            }, 1e-6)
            .unwrap();
            assert!(e < 1e-6, "matmul seed {seed}: {e}");

            let bt = Tensor::<f64>::param(&[3, 5], rand_vec(&mut rng, 15)).unwrap();
            let e = max_rel_error(&[a.clone(), bt.clone()], || {
                a.matmul_nt(&bt)?.sum_all()
            }, 1e-6)
            .unwrap();
            assert!(e < 1e-6, "matmul_nt seed {seed}: {e}");

            let x = Tensor::<f64>::param(&[4, 5], rand_vec(&mut rng, 20)).unwrap();
            let w = Tensor::<f64>::param(&[4, 5], rand_vec(&mut rng, 20)).unwrap();
            let e = max_rel_error(&[x.clone(), w.clone()], || {
                // weighted softmax output so every entry matters
                x.softmax_rows()?.mul(&w)?.sum_all()
            }, 1e-6)
            .unwrap();
            assert!(e < 1e-6, "softmax seed {seed}: {e}");

            let x = Tensor::<f64>::param(&[4, 5], rand_vec(&mut rng, 20)).unwrap();
            let e = max_rel_error(std::slice::from_ref(&x), || x.elu()?.mul(&x)?.sum_all(), 1e-6).unwrap();
            assert!(e < 1e-6, "elu seed {seed}: {e}");

            let x = Tensor::<f64>::param(&[6, 2], rand_vec(&mut rng, 12)).unwrap();
            let k = Tensor::<f64>::param(&[3, 2, 3], rand_vec(&mut rng, 18)).unwrap();
            let w = Tensor::<f64>::from_vec(&[6, 3], rand_vec(&mut rng, 18)).unwrap();
            let e = max_rel_error(&[x.clone(), k.clone()], || {
                x.conv1d(&k)?.mul(&w)?.sum_all()
            }, 1e-6)
            .unwrap();
            assert!(e < 1e-6, "conv1d seed {seed}: {e}");

            let x = Tensor::<f64>::param(&[7, 3], rand_vec(&mut rng, 21)).unwrap();
            let w = Tensor::<f64>::from_vec(&[4, 3], rand_vec(&mut rng, 12)).unwrap();
            let e = max_rel_error(std::slice::from_ref(&x), || {
                x.maxpool1d()?.mul(&w)?.sum_all()
            }, 1e-6)
            .unwrap();
            assert!(e < 1e-6, "maxpool seed {seed}: {e}");

            let x = Tensor::<f64>::param(&[4, 5], rand_vec(&mut rng, 20)).unwrap();
            let g = Tensor::<f64>::param(&[5], rand_vec(&mut rng, 5)).unwrap();
            let bb = Tensor::<f64>::param(&[5], rand_vec(&mut rng, 5)).unwrap();
            let w = Tensor::<f64>::from_vec(&[4, 5], rand_vec(&mut rng, 20)).unwrap();
            let e = max_rel_error(&[x.clone(), g.clone(), bb.clone()], || {
                x.layer_norm(&g, &bb)?.mul(&w)?.sum_all()
            }, 1e-6)
            .unwrap();
            assert!(e < 1e-6, "layer_norm seed {seed}: {e}");

            let logits = Tensor::<f64>::param(&[4, 5], rand_vec(&mut rng, 20)).unwrap();
            let labels = [0usize, 3, 1, 4];
            let e = max_rel_error(std::slice::from_ref(&logits), || logits.cross_entropy(&labels), 1e-6)
                .unwrap();
            assert!(e < 1e-6, "cross_entropy seed {seed}: {e}");

            let x = Tensor::<f64>::param(&[4, 5], rand_vec(&mut rng, 20)).unwrap();
            let bias = Tensor::<f64>::param(&[5], rand_vec(&mut rng, 5)).unwrap();
            let w = Tensor::<f64>::from_vec(&[4, 5], rand_vec(&mut rng, 20)).unwrap();
            let e = max_rel_error(&[x.clone(), bias.clone()], || {
                x.add_bias(&bias)?.mul(&w)?.sum_all()
            }, 1e-6)
            .unwrap();
            assert!(e < 1e-6, "add_bias seed {seed}: {e}");

            let x = Tensor::<f64>::param(&[4, 3], rand_vec(&mut rng, 12)).unwrap();
            let w = Tensor::<f64>::from_vec(&[1, 3], rand_vec(&mut rng, 3)).unwrap();
            let e = max_rel_error(std::slice::from_ref(&x), || {
                x.mean_rows()?.mul(&w)?.sum_all()
            }, 1e-6)
            .unwrap();
            assert!(e < 1e-6, "mean_rows seed {seed}: {e}");

            let sel = Tensor::<f64>::param(&[2, 3], rand_vec(&mut rng, 6)).unwrap();
            let fil = Tensor::<f64>::param(&[1, 3], rand_vec(&mut rng, 3)).unwrap();
            let w = Tensor::<f64>::from_vec(&[5, 3], rand_vec(&mut rng, 15)).unwrap();
            let e = max_rel_error(&[sel.clone(), fil.clone()], || {
                Tensor::compose_rows(&sel, &fil, &[3, 0], 5)?.mul(&w)?.sum_all()
            }, 1e-6)
            .unwrap();
            assert!(e < 1e-6, "compose_rows seed {seed}: {e}");
        }
    }

    /// 32-bit mode: h = 1e-3 over 10 seeds. The bound is 1e-2 because f32
    /// rounding of the objective (~1e-7 relative) divided by 2h already
    /// costs a few 1e-3 of relative error; the 1e-6 bound in the f64 test
    /// above is what certifies the backward formulas.
    #[test]
    fn core_ops_gradcheck_f32() {
        for seed in 0..10u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let a = Tensor::<f32>::param(&[4, 5], rand_vec32(&mut rng, 20)).unwrap();
            let b = Tensor::<f32>::param(&[5, 3], rand_vec32(&mut rng, 15)).unwrap();
            let e = max_rel_error(&[a.clone(), b.clone()], || {
                a.matmul(&b)?.sum_all()
            }, 1e-3)
            .unwrap();
            assert!(e < 1e-2, "matmul f32 seed {seed}: {e}");

            let logits = Tensor::<f32>::param(&[4, 5], rand_vec32(&mut rng, 20)).unwrap();
            let e = max_rel_error(std::slice::from_ref(&logits), || logits.cross_entropy(&[1, 0, 4, 2]), 1e-3)
                .unwrap();
            assert!(e < 1e-2, "cross_entropy f32 seed {seed}: {e}");

            let x = Tensor::<f32>::param(&[4, 5], rand_vec32(&mut rng, 20)).unwrap();
            let g = Tensor::<f32>::param(&[5], rand_vec32(&mut rng, 5)).unwrap();
            let bb = Tensor::<f32>::param(&[5], rand_vec32(&mut rng, 5)).unwrap();
            let w = Tensor::<f32>::from_vec(&[4, 5], rand_vec32(&mut rng, 20)).unwrap();
            // larger step for layer_norm: its input gradients nearly cancel,
            // so the difference quotient needs more signal above f32 rounding
            let e = max_rel_error(&[x.clone(), g.clone(), bb.clone()], || {
                x.layer_norm(&g, &bb)?.mul(&w)?.sum_all()
            }, 1e-2)
            .unwrap();
            assert!(e < 2e-2, "layer_norm f32 seed {seed}: {e}");
        }
    }
}
