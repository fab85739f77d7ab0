use super::matrix::Matrix;
use super::tape::Gradients;
use crate::scalar::Scalar;

/// Adam with bias correction and optional global-norm gradient clipping.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub learning_rate: T,
    pub beta1: T,
    pub beta2: T,
    pub epsilon: T,
    pub clip_norm: Option<T>,
    step: i32,
    first: Vec<Matrix<T>>,
    second: Vec<Matrix<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(learning_rate: T) -> Self {
        Adam {
            learning_rate,
            beta1: T::of(0.9),
            beta2: T::of(0.999),
            epsilon: T::of(1e-8),
            clip_norm: None,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn with_clip_norm(mut self, clip: Option<T>) -> Self {
        self.clip_norm = clip;
        self
    }

    pub fn steps_taken(&self) -> i32 {
        self.step
    }

    /// Updates `params[i]` with gradient slot `i`; slots without a gradient still decay their moments.
    pub fn step<'p>(&mut self, params: impl IntoIterator<Item = &'p mut Matrix<T>>, grads: &Gradients<T>) {
        self.step += 1;
        let scale = match self.clip_norm {
            Some(c) => {
                let n = grads.norm();
                if n > c { c / n } else { T::one() }
            }
            None => T::one(),
        };
        let bc1 = T::one() - self.beta1.powi(self.step);
        let bc2 = T::one() - self.beta2.powi(self.step);
        for (i, p) in params.into_iter().enumerate() {
            if self.first.len() <= i {
                self.first.push(Matrix::zeros(p.rows(), p.cols()));
                self.second.push(Matrix::zeros(p.rows(), p.cols()));
            }
            let Some(g) = grads.get(i) else { continue };
            let m = self.first[i].as_mut_slice();
            let v = self.second[i].as_mut_slice();
            for (((w, &gi), mi), vi) in p.as_mut_slice().iter_mut().zip(g.as_slice()).zip(m).zip(v) {
                let gi = gi * scale;
                *mi = self.beta1 * *mi + (T::one() - self.beta1) * gi;
                *vi = self.beta2 * *vi + (T::one() - self.beta2) * gi * gi;
                let mhat = *mi / bc1;
                let vhat = *vi / bc2;
                *w -= self.learning_rate * mhat / (vhat.sqrt() + self.epsilon);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = Matrix::from_vec(1, 2, vec![1.0f64, -1.0]);
        let mut g = Gradients::default();
        g.add(0, &Matrix::from_vec(1, 2, vec![0.5, -3.0]));
        let mut adam = Adam::new(0.1);
        adam.step([&mut p], &g);
        assert!((p[(0, 0)] - 0.9).abs() < 1e-6);
        assert!((p[(0, 1)] + 0.9).abs() < 1e-6);
    }

    #[test]
    fn minimizes_quadratic() {
        let mut p = Matrix::from_vec(1, 1, vec![5.0f64]);
        let mut adam = Adam::new(0.1);
        for _ in 0..500 {
            let mut g = Gradients::default();
            g.add(0, &p.map(|x| 2.0 * (x - 2.0)));
            adam.step([&mut p], &g);
        }
        assert!((p[(0, 0)] - 2.0).abs() < 1e-2);
    }
}
