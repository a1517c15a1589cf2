//! Logistic regression trained by full-batch gradient descent.
//!
//! Parameter vectors are laid out `[w_0, .., w_{d-1}, bias]`. Multi-class
//! problems use one-vs-rest; two classes use a single model for class 1.

pub const LEARNING_RATE: f64 = 0.1;
pub const EPOCHS: usize = 500;

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn score(params: &[f64], x: &[f64]) -> f64 {
    let d = x.len();
    params[..d].iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + params[d]
}

/// Mean binary cross-entropy of `params` on `(x, y)`, `y ∈ {0, 1}`.
pub fn loss(params: &[f64], x: &[Vec<f64>], y: &[f64]) -> f64 {
    let total: f64 = x
        .iter()
        .zip(y)
        .map(|(row, &t)| {
            let z = score(params, row);
            // log(1 + e^z) - t z, stable for large |z|
            let softplus = if z > 0.0 { z + (-z).exp().ln_1p() } else { z.exp().ln_1p() };
            softplus - t * z
        })
        .sum();
    total / x.len() as f64
}

/// Gradient of [`loss`] with respect to `params`.
pub fn gradient(params: &[f64], x: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let d = params.len() - 1;
    let mut g = vec![0.0; d + 1];
    for (row, &t) in x.iter().zip(y) {
        let err = sigmoid(score(params, row)) - t;
        for (gi, v) in g[..d].iter_mut().zip(row) {
            *gi += err * v;
        }
        g[d] += err;
    }
    let n = x.len() as f64;
    g.iter_mut().for_each(|v| *v /= n);
    g
}

/// Zero-initialized gradient descent, [`LEARNING_RATE`] for [`EPOCHS`] epochs.
pub fn fit_binary(x: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let d = x.first().map_or(0, Vec::len);
    let mut params = vec![0.0; d + 1];
    for _ in 0..EPOCHS {
        let g = gradient(&params, x, y);
        for (p, gi) in params.iter_mut().zip(&g) {
            *p -= LEARNING_RATE * gi;
        }
    }
    params
}

/// Class probabilities-like scores; one row of parameters per binary model.
#[derive(Debug, Clone, PartialEq)]
pub struct OneVsRest {
    pub n_classes: usize,
    pub rows: Vec<Vec<f64>>,
}

impl OneVsRest {
    /// `labels` are class indices in `0..n_classes`.
    pub fn fit(x: &[Vec<f64>], labels: &[usize], n_classes: usize) -> Self {
        let rows = if n_classes == 2 {
            let y: Vec<f64> = labels.iter().map(|&l| (l == 1) as u8 as f64).collect();
            vec![fit_binary(x, &y)]
        } else {
            (0..n_classes)
                .map(|c| {
                    let y: Vec<f64> = labels.iter().map(|&l| (l == c) as u8 as f64).collect();
                    fit_binary(x, &y)
                })
                .collect()
        };
        OneVsRest { n_classes, rows }
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        if self.n_classes == 2 {
            return (sigmoid(score(&self.rows[0], x)) >= 0.5) as usize;
        }
        let mut best = 0;
        let mut best_p = f64::NEG_INFINITY;
        for (c, row) in self.rows.iter().enumerate() {
            let p = sigmoid(score(row, x));
            if p > best_p {
                best = c;
                best_p = p;
            }
        }
        best
    }
}
