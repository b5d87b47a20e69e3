//! One-hidden-layer perceptron with a softmax output, trained by mini-batch
//! gradient descent on cross-entropy.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpHyper {
    pub hidden: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
}

impl Default for MlpHyper {
    fn default() -> Self {
        MlpHyper { hidden: 300, epochs: 100, learning_rate: 0.01, batch_size: 32 }
    }
}

/// `softmax(W2 · relu(W1 · x + b1) + b2)`; weights row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp<T> {
    pub inputs: usize,
    pub hidden: usize,
    pub outputs: usize,
    pub w1: Vec<T>,
    pub b1: Vec<T>,
    pub w2: Vec<T>,
    pub b2: Vec<T>,
}

/// Gradients in the same layout as the parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<T> {
    pub w1: Vec<T>,
    pub b1: Vec<T>,
    pub w2: Vec<T>,
    pub b2: Vec<T>,
}

impl<T: Real> Gradients<T> {
    fn zeros(m: &Mlp<T>) -> Self {
        Gradients {
            w1: vec![T::zero(); m.w1.len()],
            b1: vec![T::zero(); m.b1.len()],
            w2: vec![T::zero(); m.w2.len()],
            b2: vec![T::zero(); m.b2.len()],
        }
    }

    pub fn flatten(&self) -> Vec<T> {
        [&self.w1[..], &self.b1, &self.w2, &self.b2].concat()
    }
}

pub fn softmax<T: Real>(z: &[T]) -> Vec<T> {
    let max = z.iter().copied().fold(T::neg_infinity(), T::max);
    let e: Vec<T> = z.iter().map(|&v| (v - max).exp()).collect();
    let s: T = e.iter().copied().sum();
    e.into_iter().map(|v| v / s).collect()
}

impl<T: Real> Mlp<T> {
    /// He-uniform hidden weights, Glorot-uniform output weights, zero biases.
    pub fn new(inputs: usize, hidden: usize, outputs: usize, rng: &mut impl Rng) -> Self {
        let mut uniform = |n: usize, limit: f64| -> Vec<T> {
            (0..n).map(|_| T::lit(rng.gen_range(-limit..limit))).collect()
        };
        let w1 = uniform(hidden * inputs, (6.0 / inputs as f64).sqrt());
        let w2 = uniform(outputs * hidden, (6.0 / (hidden + outputs) as f64).sqrt());
        Mlp {
            inputs,
            hidden,
            outputs,
            w1,
            b1: vec![T::zero(); hidden],
            w2,
            b2: vec![T::zero(); outputs],
        }
    }

    fn hidden_pre(&self, x: &[T]) -> Vec<T> {
        (0..self.hidden)
            .map(|h| {
                let row = &self.w1[h * self.inputs..(h + 1) * self.inputs];
                row.iter().zip(x).fold(self.b1[h], |acc, (&w, &v)| acc + w * v)
            })
            .collect()
    }

    fn logits(&self, act: &[T]) -> Vec<T> {
        (0..self.outputs)
            .map(|o| {
                let row = &self.w2[o * self.hidden..(o + 1) * self.hidden];
                row.iter().zip(act).fold(self.b2[o], |acc, (&w, &a)| acc + w * a)
            })
            .collect()
    }

    pub fn forward(&self, x: &[T]) -> Vec<T> {
        let act: Vec<T> = self.hidden_pre(x).into_iter().map(|z| z.max(T::zero())).collect();
        softmax(&self.logits(&act))
    }

    /// Mean cross-entropy over `batch` and its gradient.
    pub fn loss_and_gradients(&self, batch: &[(&[T], usize)]) -> (T, Gradients<T>) {
        let mut g = Gradients::zeros(self);
        let mut loss = T::zero();
        let tiny = T::min_positive_value();
        for &(x, label) in batch {
            let pre = self.hidden_pre(x);
            let act: Vec<T> = pre.iter().map(|&z| z.max(T::zero())).collect();
            let p = softmax(&self.logits(&act));
            loss -= p[label].max(tiny).ln();

            let dz2: Vec<T> = p
                .iter()
                .enumerate()
                .map(|(o, &po)| if o == label { po - T::one() } else { po })
                .collect();
            for (o, &d) in dz2.iter().enumerate() {
                g.b2[o] += d;
                let grow = &mut g.w2[o * self.hidden..(o + 1) * self.hidden];
                for (gw, &a) in grow.iter_mut().zip(&act) {
                    *gw += d * a;
                }
            }
            for h in 0..self.hidden {
                if pre[h] <= T::zero() {
                    continue;
                }
                let mut da = T::zero();
                for (o, &d) in dz2.iter().enumerate() {
                    da += self.w2[o * self.hidden + h] * d;
                }
                g.b1[h] += da;
                let grow = &mut g.w1[h * self.inputs..(h + 1) * self.inputs];
                for (gw, &v) in grow.iter_mut().zip(x) {
                    *gw += da * v;
                }
            }
        }
        let n = T::from_count(batch.len().max(1));
        for v in g.w1.iter_mut().chain(&mut g.b1).chain(&mut g.w2).chain(&mut g.b2) {
            *v /= n;
        }
        (loss / n, g)
    }

    pub fn parameters(&self) -> Vec<T> {
        [&self.w1[..], &self.b1, &self.w2, &self.b2].concat()
    }

    pub fn set_parameters(&mut self, flat: &[T]) {
        let (a, rest) = flat.split_at(self.w1.len());
        let (b, rest) = rest.split_at(self.b1.len());
        let (c, d) = rest.split_at(self.w2.len());
        self.w1.copy_from_slice(a);
        self.b1.copy_from_slice(b);
        self.w2.copy_from_slice(c);
        self.b2.copy_from_slice(d);
    }

    fn step(&mut self, g: &Gradients<T>, lr: T) {
        for (p, &d) in self.w1.iter_mut().zip(&g.w1) {
            *p -= lr * d;
        }
        for (p, &d) in self.b1.iter_mut().zip(&g.b1) {
            *p -= lr * d;
        }
        for (p, &d) in self.w2.iter_mut().zip(&g.w2) {
            *p -= lr * d;
        }
        for (p, &d) in self.b2.iter_mut().zip(&g.b2) {
            *p -= lr * d;
        }
    }

    /// Runs `hyper.epochs` epochs, reshuffling every epoch, and returns the
    /// mean loss of each epoch as measured before its updates.
    pub fn fit(&mut self, data: &[(Vec<T>, usize)], hyper: &MlpHyper, rng: &mut impl Rng) -> Vec<T> {
        let lr = T::lit(hyper.learning_rate);
        let batch_size = hyper.batch_size.max(1);
        let mut order: Vec<usize> = (0..data.len()).collect();
        let mut history = Vec::with_capacity(hyper.epochs);
        for _ in 0..hyper.epochs {
            order.shuffle(rng);
            let mut epoch_loss = T::zero();
            for chunk in order.chunks(batch_size) {
                let batch: Vec<(&[T], usize)> = chunk.iter().map(|&i| (data[i].0.as_slice(), data[i].1)).collect();
                let (loss, g) = self.loss_and_gradients(&batch);
                epoch_loss += loss * T::from_count(chunk.len());
                self.step(&g, lr);
            }
            history.push(epoch_loss / T::from_count(data.len().max(1)));
        }
        history
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn softmax_is_a_distribution() {
        let p = softmax(&[1000.0f64, 1000.0, -5.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((p[0] - p[1]).abs() < 1e-12);
    }

    #[test]
    fn parameter_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut m = Mlp::<f64>::new(2, 4, 2, &mut rng);
        let flat = m.parameters();
        let doubled: Vec<f64> = flat.iter().map(|v| v * 2.0).collect();
        m.set_parameters(&doubled);
        assert_eq!(m.parameters(), doubled);
    }

    #[test]
    fn learns_a_separable_problem() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data: Vec<(Vec<f64>, usize)> = (0..200)
            .map(|i| {
                let x = i as f64 / 200.0;
                (vec![x, 1.0 - x], usize::from(x > 0.5))
            })
            .collect();
        let mut m = Mlp::new(2, 16, 2, &mut rng);
        let hyper = MlpHyper { hidden: 16, epochs: 300, learning_rate: 0.1, batch_size: 16 };
        m.fit(&data, &hyper, &mut rng);
        let correct = data.iter().filter(|(x, y)| crate::scalar::argmax(&m.forward(x)) == *y).count();
        assert!(correct >= 190, "{correct}");
    }
}
