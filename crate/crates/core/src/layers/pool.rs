use super::{check_grad_shape, check_rank, LayerError, LayerSpec};
use crate::tensor::{Scalar, Tensor, TensorError};

/// Non-overlapping max pooling with stride equal to the window.
///
/// Rows and columns that do not fill a whole window are dropped. Ties inside
/// a window go to the first element in row-major scan order, and that is the
/// position the gradient is routed to.
#[derive(Debug, Clone)]
pub struct MaxPool2d {
    pub window: (usize, usize),
    cache: Option<PoolCache>,
}

#[derive(Debug, Clone)]
struct PoolCache {
    input_shape: [usize; 4],
    /// Flat input index of the winner of each output element.
    argmax: Vec<usize>,
}

impl MaxPool2d {
    pub fn new(window: (usize, usize)) -> Self {
        Self { window, cache: None }
    }

    pub fn spec(&self) -> LayerSpec {
        LayerSpec::MaxPool2d { window: self.window }
    }

    /// Winning input indices from the last training forward pass.
    pub fn cached_argmax(&self) -> Option<&[usize]> {
        self.cache.as_ref().map(|c| c.argmax.as_slice())
    }

    pub fn forward<F: Scalar>(&self, input: &Tensor<F>) -> Result<Tensor<F>, LayerError> {
        self.pool(input).map(|(t, _)| t)
    }

    pub fn forward_train<F: Scalar>(&mut self, input: &Tensor<F>) -> Result<Tensor<F>, LayerError> {
        let (out, argmax) = self.pool(input)?;
        let s = input.shape();
        self.cache = Some(PoolCache { input_shape: [s[0], s[1], s[2], s[3]], argmax });
        Ok(out)
    }

    fn pool<F: Scalar>(&self, input: &Tensor<F>) -> Result<(Tensor<F>, Vec<usize>), LayerError> {
        check_rank(input, 4, "maxpool2d")?;
        let &[batch, h, w, c] = input.shape() else { unreachable!() };
        let (ph, pw) = self.window;
        if ph == 0 || pw == 0 || h < ph || w < pw {
            return Err(TensorError::Shape(format!("window {ph}x{pw} does not fit input {h}x{w}")).into());
        }
        let (oh, ow) = (h / ph, w / pw);
        let x = input.data();
        let mut out = Vec::with_capacity(batch * oh * ow * c);
        let mut argmax = Vec::with_capacity(out.capacity());
        for b in 0..batch {
            for oy in 0..oh {
                for ox in 0..ow {
                    for ch in 0..c {
                        let mut best_idx = ((b * h + oy * ph) * w + ox * pw) * c + ch;
                        let mut best = x[best_idx];
                        for ky in 0..ph {
                            for kx in 0..pw {
                                let idx = ((b * h + oy * ph + ky) * w + ox * pw + kx) * c + ch;
                                if x[idx] > best {
                                    best = x[idx];
                                    best_idx = idx;
                                }
                            }
                        }
                        out.push(best);
                        argmax.push(best_idx);
                    }
                }
            }
        }
        Ok((Tensor::from_vec(&[batch, oh, ow, c], out)?, argmax))
    }

    pub fn backward<F: Scalar>(&mut self, grad_out: &Tensor<F>) -> Result<Tensor<F>, LayerError> {
        let cache = self.cache.take().ok_or(LayerError::MissingCache("maxpool2d"))?;
        let [b, h, w, c] = cache.input_shape;
        let (ph, pw) = self.window;
        check_grad_shape(grad_out, &[b, h / ph, w / pw, c], "maxpool2d")?;
        let mut grad_in = Tensor::zeros(&cache.input_shape)?;
        let gi = grad_in.data_mut();
        for (&idx, &g) in cache.argmax.iter().zip(grad_out.data()) {
            gi[idx] += g;
        }
        Ok(grad_in)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn picks_window_maximum() {
        let x = Tensor::from_values(&[1, 2, 2, 1], &[1.0, 2.0, 3.0, 4.0]).unwrap();
        let mut pool = MaxPool2d::new((2, 2));
        let y = pool.forward_train(&x).unwrap();
        assert_eq!(y.shape(), &[1, 1, 1, 1]);
        assert_eq!(y.data(), &[4.0]);
        let g = pool.backward(&Tensor::from_values(&[1, 1, 1, 1], &[1.0]).unwrap()).unwrap();
        assert_eq!(g.data(), &[0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn floor_rule_drops_trailing_rows() {
        let pool = MaxPool2d::new((2, 2));
        let y = pool.forward(&Tensor::<f32>::zeros(&[1, 26, 26, 3]).unwrap()).unwrap();
        assert_eq!(y.shape(), &[1, 13, 13, 3]);
        let mut x = Tensor::<f32>::zeros(&[1, 11, 11, 1]).unwrap();
        // A large value in the dropped last row/column never wins.
        x.data_mut()[10 * 11 + 3] = 100.0;
        x.data_mut()[4 * 11 + 10] = 100.0;
        let y = pool.forward(&x).unwrap();
        assert_eq!(y.shape(), &[1, 5, 5, 1]);
        assert_eq!(y.max_abs(), 0.0);
    }

    #[test]
    fn ties_route_to_first_element() {
        let x = Tensor::from_values(&[1, 2, 2, 1], &[7.0, 7.0, 7.0, 7.0]).unwrap();
        let mut pool = MaxPool2d::new((2, 2));
        pool.forward_train(&x).unwrap();
        assert_eq!(pool.cached_argmax().unwrap(), &[0]);
        let g = pool.backward(&Tensor::from_values(&[1, 1, 1, 1], &[2.5]).unwrap()).unwrap();
        assert_eq!(g.data(), &[2.5, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn window_larger_than_input_fails() {
        let pool = MaxPool2d::new((3, 3));
        assert!(pool.forward(&Tensor::<f32>::zeros(&[1, 2, 8, 1]).unwrap()).is_err());
        let mut pool = MaxPool2d::new((2, 2));
        let g = Tensor::<f32>::zeros(&[1, 1, 1, 1]).unwrap();
        assert!(matches!(pool.backward(&g), Err(LayerError::MissingCache(_))));
    }

    #[test]
    fn argmax_indices_stay_inside_their_window() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (b, h, w, c) = (2, 7, 9, 3);
        let x: Vec<f64> = (0..b * h * w * c).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x = Tensor::from_vec(&[b, h, w, c], x).unwrap();
        let mut pool = MaxPool2d::new((2, 3));
        let y = pool.forward_train(&x).unwrap();
        let (oh, ow) = (h / 2, w / 3);
        for (o, &idx) in pool.cached_argmax().unwrap().iter().enumerate() {
            let ch = o % c;
            let ox = (o / c) % ow;
            let oy = (o / c / ow) % oh;
            let n = o / c / ow / oh;
            let (ich, ix, iy, inn) = (idx % c, (idx / c) % w, (idx / c / w) % h, idx / c / w / h);
            assert_eq!((inn, ich), (n, ch));
            assert!((oy * 2..oy * 2 + 2).contains(&iy));
            assert!((ox * 3..ox * 3 + 3).contains(&ix));
            assert_eq!(x.data()[idx], y.data()[o]);
        }
    }

    #[test]
    fn backward_conserves_gradient_mass() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x: Vec<f64> = (0..2 * 6 * 6 * 2).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x = Tensor::from_vec(&[2, 6, 6, 2], x).unwrap();
        let mut pool = MaxPool2d::new((2, 2));
        let y = pool.forward_train(&x).unwrap();
        // Small integers sum exactly in any order.
        let g: Vec<f64> = (0..y.len()).map(|_| rng.gen_range(-50..50) as f64).collect();
        let g = Tensor::from_vec(y.shape(), g).unwrap();
        let gi = pool.backward(&g).unwrap();
        assert_eq!(gi.data().iter().sum::<f64>(), g.data().iter().sum::<f64>());
        let mut routed: Vec<f64> = gi.data().iter().copied().filter(|v| *v != 0.0).collect();
        let mut sent: Vec<f64> = g.data().iter().copied().filter(|v| *v != 0.0).collect();
        routed.sort_by(f64::total_cmp);
        sent.sort_by(f64::total_cmp);
        assert_eq!(routed, sent);
    }
}
