//! Deferral scoring models: a linear model (the default) and a
//! one-hidden-layer variant behind the same interface, with flat parameter
//! access for the optimizer and for finite-difference gradient checks, and a
//! versioned textual checkpoint format.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::core::AugmentedScores;
use crate::error::{Error, Result};

/// Linear scorer: `scores(x) = W x + b` with `W` of shape `(n+1) x d`.
/// Closed under scaling: multiplying all parameters by `alpha > 0` leaves
/// predictions unchanged.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearDeferralModel {
    n: usize,
    d: usize,
    weights: Vec<f64>, // row-major (n+1) x d
    bias: Vec<f64>,    // n+1
}

impl LinearDeferralModel {
    pub fn new(n: usize, d: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if n < 2 || d == 0 {
            return Err(Error::ModelFormat(format!("invalid shape n={n}, d={d}")));
        }
        if weights.len() != (n + 1) * d || bias.len() != n + 1 {
            return Err(Error::ModelFormat(format!(
                "parameter length mismatch for n={n}, d={d}: weights {}, bias {}",
                weights.len(),
                bias.len()
            )));
        }
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::ModelFormat("non-finite parameter".to_string()));
        }
        Ok(Self { n, d, weights, bias })
    }

    pub fn zeros(n: usize, d: usize) -> Result<Self> {
        Self::new(n, d, vec![0.0; (n + 1) * d], vec![0.0; n + 1])
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn scores(&self, x: &[f64]) -> Result<AugmentedScores> {
        if x.len() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: x.len(),
            });
        }
        let mut values = Vec::with_capacity(self.n + 1);
        for k in 0..=self.n {
            let row = &self.weights[k * self.d..(k + 1) * self.d];
            let dot: f64 = row.iter().zip(x).map(|(w, xi)| w * xi).sum();
            values.push(dot + self.bias[k]);
        }
        AugmentedScores::new(values)
    }

    /// All parameters multiplied by `alpha`.
    pub fn scaled(&self, alpha: f64) -> Self {
        Self {
            n: self.n,
            d: self.d,
            weights: self.weights.iter().map(|w| alpha * w).collect(),
            bias: self.bias.iter().map(|b| alpha * b).collect(),
        }
    }
}

/// One-hidden-layer scorer with tanh activation:
/// `scores(x) = W2 tanh(W1 x + b1) + b2`.
#[derive(Debug, Clone, PartialEq)]
pub struct OneHiddenDeferralModel {
    n: usize,
    d: usize,
    width: usize,
    w1: Vec<f64>, // width x d
    b1: Vec<f64>, // width
    w2: Vec<f64>, // (n+1) x width
    b2: Vec<f64>, // n+1
}

impl OneHiddenDeferralModel {
    pub fn new(
        n: usize,
        d: usize,
        width: usize,
        w1: Vec<f64>,
        b1: Vec<f64>,
        w2: Vec<f64>,
        b2: Vec<f64>,
    ) -> Result<Self> {
        if n < 2 || d == 0 || width == 0 {
            return Err(Error::ModelFormat(format!(
                "invalid shape n={n}, d={d}, width={width}"
            )));
        }
        if w1.len() != width * d
            || b1.len() != width
            || w2.len() != (n + 1) * width
            || b2.len() != n + 1
        {
            return Err(Error::ModelFormat("parameter length mismatch".to_string()));
        }
        if w1.iter().chain(&b1).chain(&w2).chain(&b2).any(|v| !v.is_finite()) {
            return Err(Error::ModelFormat("non-finite parameter".to_string()));
        }
        Ok(Self { n, d, width, w1, b1, w2, b2 })
    }

    fn hidden(&self, x: &[f64]) -> Vec<f64> {
        let mut z = Vec::with_capacity(self.width);
        for j in 0..self.width {
            let row = &self.w1[j * self.d..(j + 1) * self.d];
            let a: f64 = row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>() + self.b1[j];
            z.push(a.tanh());
        }
        z
    }

    pub fn scores(&self, x: &[f64]) -> Result<AugmentedScores> {
        if x.len() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: x.len(),
            });
        }
        let z = self.hidden(x);
        let mut values = Vec::with_capacity(self.n + 1);
        for k in 0..=self.n {
            let row = &self.w2[k * self.width..(k + 1) * self.width];
            let dot: f64 = row.iter().zip(&z).map(|(w, zi)| w * zi).sum();
            values.push(dot + self.b2[k]);
        }
        AugmentedScores::new(values)
    }
}

/// A trainable deferral scorer.
#[derive(Debug, Clone, PartialEq)]
pub enum DeferralModel {
    Linear(LinearDeferralModel),
    OneHidden(OneHiddenDeferralModel),
}

impl DeferralModel {
    pub fn n(&self) -> usize {
        match self {
            Self::Linear(m) => m.n,
            Self::OneHidden(m) => m.n,
        }
    }

    pub fn d(&self) -> usize {
        match self {
            Self::Linear(m) => m.d,
            Self::OneHidden(m) => m.d,
        }
    }

    pub fn scores(&self, x: &[f64]) -> Result<AugmentedScores> {
        match self {
            Self::Linear(m) => m.scores(x),
            Self::OneHidden(m) => m.scores(x),
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            Self::Linear(m) => (m.n + 1) * m.d + m.n + 1,
            Self::OneHidden(m) => {
                m.width * m.d + m.width + (m.n + 1) * m.width + m.n + 1
            }
        }
    }

    pub fn get_param(&self, i: usize) -> f64 {
        match self {
            Self::Linear(m) => {
                let nw = m.weights.len();
                if i < nw {
                    m.weights[i]
                } else {
                    m.bias[i - nw]
                }
            }
            Self::OneHidden(m) => {
                let (a, b, c) = (m.w1.len(), m.b1.len(), m.w2.len());
                if i < a {
                    m.w1[i]
                } else if i < a + b {
                    m.b1[i - a]
                } else if i < a + b + c {
                    m.w2[i - a - b]
                } else {
                    m.b2[i - a - b - c]
                }
            }
        }
    }

    pub fn set_param(&mut self, i: usize, value: f64) {
        match self {
            Self::Linear(m) => {
                let nw = m.weights.len();
                if i < nw {
                    m.weights[i] = value;
                } else {
                    m.bias[i - nw] = value;
                }
            }
            Self::OneHidden(m) => {
                let (a, b, c) = (m.w1.len(), m.b1.len(), m.w2.len());
                if i < a {
                    m.w1[i] = value;
                } else if i < a + b {
                    m.b1[i - a] = value;
                } else if i < a + b + c {
                    m.w2[i - a - b] = value;
                } else {
                    m.b2[i - a - b - c] = value;
                }
            }
        }
    }

    /// Accumulate `d loss / d params` into `grad` (flat layout matching
    /// `get_param`/`set_param`), given the upstream `d loss / d scores`.
    pub fn accumulate_param_grad(&self, x: &[f64], dscores: &[f64], grad: &mut [f64]) {
        match self {
            Self::Linear(m) => {
                let nw = m.weights.len();
                for k in 0..=m.n {
                    let ds = dscores[k];
                    if ds == 0.0 {
                        continue;
                    }
                    let row = &mut grad[k * m.d..(k + 1) * m.d];
                    for (g, xi) in row.iter_mut().zip(x) {
                        *g += ds * xi;
                    }
                    grad[nw + k] += ds;
                }
            }
            Self::OneHidden(m) => {
                let z = m.hidden(x);
                let (a, b, c) = (m.w1.len(), m.b1.len(), m.w2.len());
                // output layer
                for k in 0..=m.n {
                    let ds = dscores[k];
                    if ds == 0.0 {
                        continue;
                    }
                    for (j, zj) in z.iter().enumerate() {
                        grad[a + b + k * m.width + j] += ds * zj;
                    }
                    grad[a + b + c + k] += ds;
                }
                // hidden layer through tanh'
                for (j, zj) in z.iter().enumerate() {
                    let mut dz = 0.0;
                    for k in 0..=m.n {
                        dz += dscores[k] * m.w2[k * m.width + j];
                    }
                    let da = dz * (1.0 - zj * zj);
                    if da == 0.0 {
                        continue;
                    }
                    for (i, xi) in x.iter().enumerate() {
                        grad[j * m.d + i] += da * xi;
                    }
                    grad[a + j] += da;
                }
            }
        }
    }

    /// Serialize to the versioned textual checkpoint format.
    pub fn to_checkpoint(&self) -> String {
        let mut out = String::from("deferral-model v1\n");
        let write_block = |out: &mut String, name: &str, rows: usize, cols: usize, data: &[f64]| {
            writeln!(out, "{name}").unwrap();
            for r in 0..rows {
                let row: Vec<String> =
                    data[r * cols..(r + 1) * cols].iter().map(|v| format!("{v}")).collect();
                writeln!(out, "{}", row.join(" ")).unwrap();
            }
        };
        match self {
            Self::Linear(m) => {
                writeln!(out, "kind linear").unwrap();
                writeln!(out, "n {}", m.n).unwrap();
                writeln!(out, "d {}", m.d).unwrap();
                write_block(&mut out, "weights", m.n + 1, m.d, &m.weights);
                write_block(&mut out, "bias", 1, m.n + 1, &m.bias);
            }
            Self::OneHidden(m) => {
                writeln!(out, "kind onehidden").unwrap();
                writeln!(out, "n {}", m.n).unwrap();
                writeln!(out, "d {}", m.d).unwrap();
                writeln!(out, "width {}", m.width).unwrap();
                write_block(&mut out, "w1", m.width, m.d, &m.w1);
                write_block(&mut out, "b1", 1, m.width, &m.b1);
                write_block(&mut out, "w2", m.n + 1, m.width, &m.w2);
                write_block(&mut out, "b2", 1, m.n + 1, &m.b2);
            }
        }
        out
    }

    pub fn from_checkpoint(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().unwrap_or_default();
        if header != "deferral-model v1" {
            return Err(Error::ModelFormat(format!(
                "unsupported header '{header}' (expected 'deferral-model v1')"
            )));
        }
        let mut kind = None;
        let mut n = None;
        let mut d = None;
        let mut width = None;
        let mut blocks: Vec<(String, Vec<f64>)> = Vec::new();
        let mut current: Option<(String, Vec<f64>)> = None;
        for line in lines {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let first = parts.next().unwrap();
            match first {
                "kind" => kind = parts.next().map(str::to_string),
                "n" | "d" | "width" => {
                    let v: usize = parts
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| Error::ModelFormat(format!("bad '{first}' line")))?;
                    match first {
                        "n" => n = Some(v),
                        "d" => d = Some(v),
                        _ => width = Some(v),
                    }
                }
                "weights" | "bias" | "w1" | "b1" | "w2" | "b2" => {
                    if let Some(block) = current.take() {
                        blocks.push(block);
                    }
                    current = Some((first.to_string(), Vec::new()));
                }
                _ => {
                    let block = current
                        .as_mut()
                        .ok_or_else(|| Error::ModelFormat("data outside a block".to_string()))?;
                    for tok in line.split_whitespace() {
                        let v: f64 = tok.parse().map_err(|_| {
                            Error::ModelFormat(format!("bad float '{tok}'"))
                        })?;
                        block.1.push(v);
                    }
                }
            }
        }
        if let Some(block) = current.take() {
            blocks.push(block);
        }
        let take = |name: &str| -> Result<Vec<f64>> {
            blocks
                .iter()
                .find(|(k, _)| k == name)
                .map(|(_, v)| v.clone())
                .ok_or_else(|| Error::ModelFormat(format!("missing block '{name}'")))
        };
        let n = n.ok_or_else(|| Error::ModelFormat("missing n".to_string()))?;
        let d = d.ok_or_else(|| Error::ModelFormat("missing d".to_string()))?;
        match kind.as_deref() {
            Some("linear") => Ok(Self::Linear(LinearDeferralModel::new(
                n,
                d,
                take("weights")?,
                take("bias")?,
            )?)),
            Some("onehidden") => {
                let width = width.ok_or_else(|| Error::ModelFormat("missing width".to_string()))?;
                Ok(Self::OneHidden(OneHiddenDeferralModel::new(
                    n,
                    d,
                    width,
                    take("w1")?,
                    take("b1")?,
                    take("w2")?,
                    take("b2")?,
                )?))
            }
            other => Err(Error::ModelFormat(format!("unknown kind {other:?}"))),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_checkpoint())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::predict;

    fn sample_linear() -> LinearDeferralModel {
        LinearDeferralModel::new(
            2,
            2,
            vec![1.0, -0.5, 0.25, 2.0, -1.0, 0.125],
            vec![0.1, -0.2, 0.3],
        )
        .unwrap()
    }

    #[test]
    fn linear_scoring() {
        let m = sample_linear();
        let s = m.scores(&[1.0, 2.0]).unwrap();
        assert!((s.value_of(1) - (1.0 - 1.0 + 0.1)).abs() < 1e-15);
        assert!((s.value_of(2) - (0.25 + 4.0 - 0.2)).abs() < 1e-15);
        assert!((s.value_of(3) - (-1.0 + 0.25 + 0.3)).abs() < 1e-15);
        assert!(m.scores(&[1.0]).is_err());
    }

    #[test]
    fn scaling_preserves_predictions() {
        let m = sample_linear();
        let scaled = m.scaled(7.5);
        for x in [[1.0, 2.0], [-3.0, 0.5], [0.0, 0.0]] {
            let a = predict(&m.scores(&x).unwrap());
            let b = predict(&scaled.scores(&x).unwrap());
            assert_eq!(a.index(), b.index());
        }
    }

    #[test]
    fn checkpoint_roundtrip_linear() {
        let m = DeferralModel::Linear(sample_linear());
        let text = m.to_checkpoint();
        let back = DeferralModel::from_checkpoint(&text).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn checkpoint_roundtrip_onehidden() {
        let m = DeferralModel::OneHidden(
            OneHiddenDeferralModel::new(
                2,
                3,
                2,
                vec![0.1, 0.2, -0.3, 0.5, -0.25, 1.0 / 3.0],
                vec![0.0, 0.125],
                vec![1.0, -1.0, 0.5, 0.25, 2.0, -0.75],
                vec![0.0, 0.1, -0.1],
            )
            .unwrap(),
        );
        let back = DeferralModel::from_checkpoint(&m.to_checkpoint()).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn checkpoint_rejects_bad_header() {
        assert!(DeferralModel::from_checkpoint("deferral-model v9\nkind linear\n").is_err());
    }

    #[test]
    fn param_roundtrip() {
        let mut m = DeferralModel::Linear(sample_linear());
        let count = m.param_count();
        assert_eq!(count, 9);
        for i in 0..count {
            let v = m.get_param(i);
            m.set_param(i, v + 1.0);
            assert_eq!(m.get_param(i), v + 1.0);
            m.set_param(i, v);
        }
    }
}
