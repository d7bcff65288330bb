//! Toy recurrent models whose matrices are held to an operator-norm bound.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Spectral norm by power iteration on `AᵀA`. Runs at least 50 iterations
/// and stops once the estimate settles.
pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() || a.iter().all(|&x| x == 0.0) {
        return 0.0;
    }
    let ata = a.transpose() * a;
    let n = ata.ncols();
    // fixed, non-symmetric start so no singular direction is orthogonal by accident
    let mut v = DVector::from_fn(n, |i, _| 1.0 + (i as f64 * 0.618_033_988_7).fract());
    v /= v.norm();
    let mut estimate = 0.0;
    for iter in 0..10_000 {
        let next = &ata * &v;
        let norm = next.norm();
        if norm == 0.0 {
            return 0.0;
        }
        v = next / norm;
        let settled = (norm - estimate).abs() <= 1e-15 * norm;
        estimate = norm;
        if iter >= 50 && settled {
            break;
        }
    }
    estimate.sqrt()
}

/// Rescales `a` so its spectral norm is at most `alpha`; matrices already
/// within the bound are returned unchanged.
pub fn project_operator_norm(a: DMatrix<f64>, alpha: f64) -> DMatrix<f64> {
    let s = spectral_norm(&a);
    if s <= alpha {
        a
    } else {
        // tiny shrink absorbs the power-iteration estimate error
        let scale = alpha / s * (1.0 - 1e-12);
        a * scale
    }
}

fn gaussian(rows: usize, cols: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Stable RNN `h_t = tanh(W h_{t-1} + U x_t)`, `h_0 = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TinyRNNSpec {
    /// Time steps.
    pub t: usize,
    /// Input dimension.
    pub m: usize,
    pub hidden: usize,
    pub classes: usize,
    pub n_fc: usize,
    pub alpha: f64,
}

impl Default for TinyRNNSpec {
    fn default() -> Self {
        TinyRNNSpec {
            t: 4,
            m: 8,
            hidden: 6,
            classes: 2,
            n_fc: 1,
            alpha: 0.9,
        }
    }
}

impl TinyRNNSpec {
    /// `sqrt((C-1) T m) / C * alpha^(n_fc+1)`, multiplying `||X - X'||₂`.
    pub fn bound_constant(&self) -> f64 {
        ((self.classes - 1) as f64 * self.t as f64 * self.m as f64).sqrt() / self.classes as f64
            * self.alpha.powi(self.n_fc as i32 + 1)
    }

    /// `sqrt(C-1) / C * alpha^(n_fc+1) * sqrt(T)`, multiplying `||X - X'||_F`.
    pub fn frobenius_constant(&self) -> f64 {
        ((self.classes - 1) as f64).sqrt() / self.classes as f64
            * self.alpha.powi(self.n_fc as i32 + 1)
            * (self.t as f64).sqrt()
    }
}

#[derive(Debug, Clone)]
pub struct Encoder {
    pub w: DMatrix<f64>,
    pub u: DMatrix<f64>,
}

impl Encoder {
    pub fn random(m: usize, hidden: usize, alpha: f64, rng: &mut impl Rng) -> Self {
        Encoder {
            w: project_operator_norm(gaussian(hidden, hidden, rng), alpha),
            u: project_operator_norm(gaussian(hidden, m, rng), alpha),
        }
    }

    /// Final hidden state for tokens given as rows of `x`.
    pub fn encode(&self, x: &DMatrix<f64>) -> DVector<f64> {
        let mut h = DVector::zeros(self.w.nrows());
        for row in x.row_iter() {
            let pre = &self.w * &h + &self.u * row.transpose();
            h = pre.map(f64::tanh);
        }
        h
    }
}

/// Fully connected stack; `tanh` between layers, raw logits out.
#[derive(Debug, Clone)]
pub struct FcStack {
    pub layers: Vec<DMatrix<f64>>,
}

impl FcStack {
    pub fn random(input: usize, width: usize, classes: usize, n_fc: usize, alpha: f64, rng: &mut impl Rng) -> Self {
        let mut layers = Vec::with_capacity(n_fc);
        let mut fan_in = input;
        for l in 0..n_fc {
            let out = if l + 1 == n_fc { classes } else { width };
            layers.push(project_operator_norm(gaussian(out, fan_in, rng), alpha));
            fan_in = out;
        }
        FcStack { layers }
    }

    pub fn logits(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut z = x.clone();
        for (l, layer) in self.layers.iter().enumerate() {
            z = layer * z;
            if l + 1 < self.layers.len() {
                z = z.map(f64::tanh);
            }
        }
        z
    }
}

pub fn softmax(z: &DVector<f64>) -> DVector<f64> {
    let max = z.max();
    let e = z.map(|v| (v - max).exp());
    let s = e.sum();
    e / s
}

/// `||softmax(z) - onehot(y)||₂`.
pub fn softmax_l2_loss(z: &DVector<f64>, y: usize) -> f64 {
    let mut p = softmax(z);
    p[y] -= 1.0;
    p.norm()
}

#[derive(Debug, Clone)]
pub struct TinyRnn {
    pub encoder: Encoder,
    pub head: FcStack,
}

impl TinyRnn {
    pub fn random(spec: &TinyRNNSpec, rng: &mut impl Rng) -> Self {
        TinyRnn {
            encoder: Encoder::random(spec.m, spec.hidden, spec.alpha, rng),
            head: FcStack::random(spec.hidden, spec.hidden, spec.classes, spec.n_fc, spec.alpha, rng),
        }
    }

    pub fn loss(&self, x: &DMatrix<f64>, y: usize) -> f64 {
        softmax_l2_loss(&self.head.logits(&self.encoder.encode(x)), y)
    }
}

/// Pair classifier: per-attribute encoders, `|s - s'|` distance layer,
/// concatenation, FC stack and a two-way softmax.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ERToySpec {
    pub n_attributes: usize,
    /// Maximum number of tokens in a pair, both sides and all attributes.
    pub max_tokens: usize,
    pub m: usize,
    pub hidden: usize,
    pub n_fc: usize,
    pub alpha: f64,
    pub shared_encoder: bool,
}

impl Default for ERToySpec {
    fn default() -> Self {
        ERToySpec {
            n_attributes: 2,
            max_tokens: 10,
            m: 8,
            hidden: 6,
            n_fc: 1,
            alpha: 0.9,
            shared_encoder: false,
        }
    }
}

impl ERToySpec {
    /// `alpha^(n_fc+1) / 2 * sqrt(T̂ m)`.
    pub fn bound_constant(&self) -> f64 {
        self.alpha.powi(self.n_fc as i32 + 1) / 2.0 * ((self.max_tokens * self.m) as f64).sqrt()
    }
}

/// Token matrices of one pair: `(left, right)` per attribute.
#[derive(Debug, Clone)]
pub struct PairTokens {
    pub attributes: Vec<(DMatrix<f64>, DMatrix<f64>)>,
}

impl PairTokens {
    /// All token rows stacked into one matrix.
    pub fn stacked(&self) -> DMatrix<f64> {
        let m = self.attributes.first().map_or(0, |(l, _)| l.ncols());
        let rows: Vec<_> = self
            .attributes
            .iter()
            .flat_map(|(l, r)| l.row_iter().chain(r.row_iter()))
            .map(|r| r.into_owned())
            .collect();
        if rows.is_empty() {
            DMatrix::zeros(0, m)
        } else {
            DMatrix::from_rows(&rows)
        }
    }

    pub fn map(&self, mut f: impl FnMut(&DMatrix<f64>) -> DMatrix<f64>) -> PairTokens {
        PairTokens {
            attributes: self.attributes.iter().map(|(l, r)| (f(l), f(r))).collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ERToyModel {
    pub encoders: Vec<Encoder>,
    pub head: FcStack,
}

impl ERToyModel {
    pub fn random(spec: &ERToySpec, rng: &mut impl Rng) -> Self {
        let count = if spec.shared_encoder { 1 } else { spec.n_attributes };
        let encoders = (0..count)
            .map(|_| Encoder::random(spec.m, spec.hidden, spec.alpha, rng))
            .collect();
        let head = FcStack::random(spec.n_attributes * spec.hidden, spec.hidden, 2, spec.n_fc, spec.alpha, rng);
        ERToyModel { encoders, head }
    }

    pub fn loss(&self, pair: &PairTokens, y: usize) -> f64 {
        let mut features = Vec::new();
        for (k, (l, r)) in pair.attributes.iter().enumerate() {
            let enc = &self.encoders[k.min(self.encoders.len() - 1)];
            let d = (enc.encode(l) - enc.encode(r)).abs();
            features.extend(d.iter().copied());
        }
        softmax_l2_loss(&self.head.logits(&DVector::from_vec(features)), y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn svd_norm(a: &DMatrix<f64>) -> f64 {
        a.clone().svd(false, false).singular_values.max()
    }

    #[test]
    fn power_iteration_matches_svd() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for (r, c) in [(3, 3), (6, 8), (8, 6), (1, 5), (10, 10)] {
            let a = gaussian(r, c, &mut rng);
            let exact = svd_norm(&a);
            assert!((spectral_norm(&a) - exact).abs() <= 1e-7 * exact, "{r}x{c}");
        }
    }

    #[test]
    fn projection_examples() {
        let two = DMatrix::<f64>::identity(4, 4) * 2.0;
        let p = project_operator_norm(two, 0.9);
        assert!((svd_norm(&p) - 0.9).abs() < 1e-9);

        let zero = DMatrix::<f64>::zeros(3, 2);
        assert_eq!(project_operator_norm(zero.clone(), 0.9), zero);

        let small = DMatrix::<f64>::identity(2, 2) * 0.5;
        assert_eq!(project_operator_norm(small.clone(), 0.9), small);

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let a = gaussian(7, 5, &mut rng);
            assert!(svd_norm(&project_operator_norm(a, 0.9)) <= 0.9 + 1e-9);
        }
    }

    #[test]
    fn constants() {
        assert!((TinyRNNSpec::default().bound_constant() - 32f64.sqrt() / 2.0 * 0.81).abs() < 1e-12);
        assert!((TinyRNNSpec::default().bound_constant() - 2.291).abs() < 1e-3);
        assert!((ERToySpec::default().bound_constant() - 0.405 * 80f64.sqrt()).abs() < 1e-12);
        assert!((ERToySpec::default().bound_constant() - 3.623).abs() < 1e-3);
    }

    #[test]
    fn softmax_loss_range() {
        let z = DVector::from_vec(vec![0.0, 0.0]);
        assert!((softmax_l2_loss(&z, 0) - 0.5f64.sqrt()).abs() < 1e-15);
        let z = DVector::from_vec(vec![50.0, -50.0]);
        assert!(softmax_l2_loss(&z, 0) < 1e-12);
        assert!((softmax_l2_loss(&z, 1) - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn stacking_keeps_row_order() {
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 2.0]);
        let b = DMatrix::from_row_slice(2, 2, &[3.0, 4.0, 5.0, 6.0]);
        let pair = PairTokens {
            attributes: vec![(a, b)],
        };
        let s = pair.stacked();
        assert_eq!(s.nrows(), 3);
        assert_eq!(s[(2, 1)], 6.0);
    }
}
