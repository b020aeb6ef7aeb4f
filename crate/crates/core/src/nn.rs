//! Dense tanh networks with exact reverse-mode gradients, Adam, and running
//! input normalization.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Head {
    Linear,
    Sigmoid,
}

impl Head {
    fn name(self) -> &'static str {
        match self {
            Head::Linear => "linear",
            Head::Sigmoid => "sigmoid",
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    // keeps the output strictly inside (0, 1) in f64
    let z = z.clamp(-30.0, 30.0);
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Feed-forward network. Parameters are stored flat, layer by layer, as the
/// row-major `out x in` weight matrix followed by the bias vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    dims: Vec<usize>,
    head: Head,
    params: Vec<f64>,
}

/// Activations kept from a batched forward pass.
#[derive(Debug, Clone)]
pub struct Cache {
    batch: usize,
    /// acts[0] is the input, acts[k] the output of layer k (after activation).
    acts: Vec<Vec<f64>>,
}

impl Cache {
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("cache has input")
    }

    pub fn batch(&self) -> usize {
        self.batch
    }
}

impl Mlp {
    pub fn zeros(dims: &[usize], head: Head) -> Result<Mlp> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::Config(format!("invalid layer sizes {dims:?}")));
        }
        let n = dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        Ok(Mlp {
            dims: dims.to_vec(),
            head,
            params: vec![0.0; n],
        })
    }

    /// Gaussian weights with variance `gain^2 / fan_in` (`out_gain` for the
    /// last layer), zero biases.
    pub fn new(dims: &[usize], head: Head, out_gain: f64, rng: &mut Rng) -> Result<Mlp> {
        let mut net = Mlp::zeros(dims, head)?;
        let layers = net.layers();
        let mut off = 0;
        for l in 0..layers {
            let (i, o) = (dims[l], dims[l + 1]);
            let gain = if l + 1 == layers { out_gain } else { 1.0 };
            let sd = gain / (i as f64).sqrt();
            for w in &mut net.params[off..off + i * o] {
                let z: f64 = StandardNormal.sample(rng);
                *w = sd * z;
            }
            off += i * o + o;
        }
        Ok(net)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn head(&self) -> Head {
        self.head
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn layers(&self) -> usize {
        self.dims.len() - 1
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Offset of the bias vector of the last layer.
    pub fn output_bias_offset(&self) -> usize {
        self.params.len() - self.output_dim()
    }

    /// Forward a batch of `x.len() / input_dim` rows.
    pub fn forward_batch(&self, x: &[f64]) -> Result<Cache> {
        let d0 = self.input_dim();
        if x.len() % d0 != 0 {
            return Err(Error::Shape {
                expected: d0,
                got: x.len(),
            });
        }
        let batch = x.len() / d0;
        let mut acts = Vec::with_capacity(self.dims.len());
        acts.push(x.to_vec());
        let mut off = 0;
        for l in 0..self.layers() {
            let (i, o) = (self.dims[l], self.dims[l + 1]);
            let w = &self.params[off..off + i * o];
            let b = &self.params[off + i * o..off + i * o + o];
            let mut y = Vec::with_capacity(batch * o);
            for _ in 0..batch {
                y.extend_from_slice(b);
            }
            let prev = acts.last().unwrap();
            // y (batch x o) += prev (batch x i) * w^T (i x o)
            unsafe {
                matrixmultiply::dgemm(
                    batch,
                    i,
                    o,
                    1.0,
                    prev.as_ptr(),
                    i as isize,
                    1,
                    w.as_ptr(),
                    1,
                    i as isize,
                    1.0,
                    y.as_mut_ptr(),
                    o as isize,
                    1,
                );
            }
            if l + 1 < self.layers() {
                y.iter_mut().for_each(|v| *v = v.tanh());
            } else if self.head == Head::Sigmoid {
                y.iter_mut().for_each(|v| *v = sigmoid(*v));
            }
            acts.push(y);
            off += i * o + o;
        }
        Ok(Cache { batch, acts })
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::Shape {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        Ok(self.forward_batch(x)?.acts.pop().unwrap())
    }

    /// Parameter gradient of `sum(dout . output)` for the cached batch,
    /// accumulated into `grad`.
    pub fn backward_into(&self, cache: &Cache, dout: &[f64], grad: &mut [f64]) -> Result<()> {
        let batch = cache.batch;
        let out = self.output_dim();
        if dout.len() != batch * out {
            return Err(Error::Shape {
                expected: batch * out,
                got: dout.len(),
            });
        }
        if grad.len() != self.params.len() || cache.acts.len() != self.dims.len() {
            return Err(Error::Shape {
                expected: self.params.len(),
                got: grad.len(),
            });
        }
        let mut delta: Vec<f64> = match self.head {
            Head::Linear => dout.to_vec(),
            Head::Sigmoid => dout
                .iter()
                .zip(cache.output())
                .map(|(g, s)| g * s * (1.0 - s))
                .collect(),
        };
        let mut off = self.params.len();
        for l in (0..self.layers()).rev() {
            let (i, o) = (self.dims[l], self.dims[l + 1]);
            off -= i * o + o;
            let prev = &cache.acts[l];
            let (gw, gb) = grad[off..off + i * o + o].split_at_mut(i * o);
            for r in 0..batch {
                for (g, d) in gb.iter_mut().zip(&delta[r * o..(r + 1) * o]) {
                    *g += d;
                }
            }
            // gw (o x i) += delta^T (o x batch) * prev (batch x i)
            unsafe {
                matrixmultiply::dgemm(
                    o,
                    batch,
                    i,
                    1.0,
                    delta.as_ptr(),
                    1,
                    o as isize,
                    prev.as_ptr(),
                    i as isize,
                    1,
                    1.0,
                    gw.as_mut_ptr(),
                    i as isize,
                    1,
                );
            }
            if l == 0 {
                break;
            }
            let w = &self.params[off..off + i * o];
            let mut next = vec![0.0; batch * i];
            // next (batch x i) = delta (batch x o) * w (o x i)
            unsafe {
                matrixmultiply::dgemm(
                    batch,
                    o,
                    i,
                    1.0,
                    delta.as_ptr(),
                    o as isize,
                    1,
                    w.as_ptr(),
                    i as isize,
                    1,
                    0.0,
                    next.as_mut_ptr(),
                    i as isize,
                    1,
                );
            }
            for (n, a) in next.iter_mut().zip(prev) {
                *n *= 1.0 - a * a;
            }
            delta = next;
        }
        Ok(())
    }

    pub fn backward(&self, cache: &Cache, dout: &[f64]) -> Result<Vec<f64>> {
        let mut g = vec![0.0; self.params.len()];
        self.backward_into(cache, dout, &mut g)?;
        Ok(g)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(20 * self.params.len() + 64);
        s.push_str("mlp v1\n");
        s.push_str("dims");
        for d in &self.dims {
            let _ = write!(s, " {d}");
        }
        let _ = writeln!(s, "\nhead {}", self.head.name());
        for p in &self.params {
            let _ = writeln!(s, "{:016x}", p.to_bits());
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Mlp> {
        const WHAT: &str = "weight file";
        let mut lines = text.lines();
        let header = lines.next().unwrap_or_default();
        if header != "mlp v1" {
            return Err(Error::Version {
                what: WHAT,
                found: header.into(),
            });
        }
        let dims: Vec<usize> = lines
            .next()
            .and_then(|l| l.strip_prefix("dims "))
            .ok_or_else(|| Error::corrupt(WHAT, "missing dims line"))?
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| Error::corrupt(WHAT, format!("bad dim {t:?}"))))
            .collect::<Result<_>>()?;
        let head = match lines.next() {
            Some("head linear") => Head::Linear,
            Some("head sigmoid") => Head::Sigmoid,
            other => return Err(Error::corrupt(WHAT, format!("bad head line {other:?}"))),
        };
        let mut net = Mlp::zeros(&dims, head).map_err(|e| Error::corrupt(WHAT, e.to_string()))?;
        let n = net.params.len();
        for (k, p) in net.params.iter_mut().enumerate() {
            let line = lines
                .next()
                .ok_or_else(|| Error::corrupt(WHAT, format!("truncated at parameter {k} of {n}")))?;
            *p = parse_hex_f64(line).ok_or_else(|| Error::corrupt(WHAT, format!("bad parameter {line:?}")))?;
        }
        if lines.any(|l| !l.trim().is_empty()) {
            return Err(Error::corrupt(WHAT, "trailing data"));
        }
        Ok(net)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, &self.to_text())
    }

    pub fn load(path: &Path) -> Result<Mlp> {
        Mlp::from_text(&read_file(path)?)
    }
}

pub fn parse_hex_f64(s: &str) -> Option<f64> {
    let s = s.trim();
    if s.len() != 16 {
        return None;
    }
    u64::from_str_radix(s, 16).ok().map(f64::from_bits)
}

pub(crate) fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_file(path: &Path) -> Result<String> {
    match std::fs::read_to_string(path) {
        Ok(s) => Ok(s),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(Error::MissingArtifact(path.into())),
        Err(e) => Err(Error::io(path, e)),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Adam {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    /// One bias-corrected Adam update of `params` along `grad`.
    pub fn update(&mut self, params: &mut [f64], grad: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grad.len() != self.m.len() {
            return Err(Error::Shape {
                expected: self.m.len(),
                got: grad.len(),
            });
        }
        if let Some(k) = grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::TrainingDiverged(format!("non-finite gradient at parameter {k}")));
        }
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step as i32);
        let c2 = 1.0 - self.beta2.powi(self.step as i32);
        for (((p, g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
        }
        Ok(())
    }
}

/// Running mean and variance (Welford) used to standardize observations.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    count: f64,
    mean: Vec<f64>,
    m2: Vec<f64>,
    clip: f64,
}

impl Normalizer {
    pub fn new(dim: usize) -> Normalizer {
        Normalizer {
            count: 0.0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
            clip: 10.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn count(&self) -> f64 {
        self.count
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn update(&mut self, x: &[f64]) {
        debug_assert_eq!(x.len(), self.mean.len());
        self.count += 1.0;
        for ((m, s), v) in self.mean.iter_mut().zip(&mut self.m2).zip(x) {
            let d = v - *m;
            *m += d / self.count;
            *s += d * (v - *m);
        }
    }

    pub fn std(&self, i: usize) -> f64 {
        if self.count < 2.0 {
            return 1.0;
        }
        (self.m2[i] / self.count).sqrt().max(1e-4)
    }

    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        for (i, (o, v)) in out.iter_mut().zip(x).enumerate() {
            *o = ((v - self.mean[i]) / self.std(i)).clamp(-self.clip, self.clip);
        }
    }

    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        self.apply(x, &mut out);
        out
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("norm v1\ndim {}\n{:016x}\n", self.dim(), self.count.to_bits());
        for (m, v) in self.mean.iter().zip(&self.m2) {
            let _ = writeln!(s, "{:016x} {:016x}", m.to_bits(), v.to_bits());
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Normalizer> {
        const WHAT: &str = "normalizer file";
        let mut lines = text.lines();
        let header = lines.next().unwrap_or_default();
        if header != "norm v1" {
            return Err(Error::Version {
                what: WHAT,
                found: header.into(),
            });
        }
        let dim: usize = lines
            .next()
            .and_then(|l| l.strip_prefix("dim "))
            .and_then(|d| d.parse().ok())
            .ok_or_else(|| Error::corrupt(WHAT, "bad dim line"))?;
        let mut n = Normalizer::new(dim);
        n.count = lines
            .next()
            .and_then(parse_hex_f64)
            .ok_or_else(|| Error::corrupt(WHAT, "bad count line"))?;
        for i in 0..dim {
            let line = lines.next().ok_or_else(|| Error::corrupt(WHAT, "truncated"))?;
            let mut it = line.split_whitespace().map(parse_hex_f64);
            match (it.next().flatten(), it.next().flatten()) {
                (Some(m), Some(v)) => {
                    n.mean[i] = m;
                    n.m2[i] = v;
                }
                _ => return Err(Error::corrupt(WHAT, format!("bad line {line:?}"))),
            }
        }
        Ok(n)
    }
}

/// Worst relative error between backpropagated and central-difference
/// gradients of `0.5 * |y|^2` over the batch `x`. Gradients smaller than
/// 1e-5 are compared absolutely, since rounding dominates the quotient there.
pub fn gradient_check(net: &Mlp, x: &[f64], h: f64) -> Result<f64> {
    let cache = net.forward_batch(x)?;
    let dout = cache.output().to_vec();
    let g = net.backward(&cache, &dout)?;
    let loss = |n: &Mlp| -> Result<f64> { Ok(n.forward_batch(x)?.output().iter().map(|y| 0.5 * y * y).sum()) };
    let mut worst: f64 = 0.0;
    let mut p = net.clone();
    for k in 0..net.param_count() {
        let orig = p.params[k];
        p.params[k] = orig + h;
        let lp = loss(&p)?;
        p.params[k] = orig - h;
        let lm = loss(&p)?;
        p.params[k] = orig;
        let fd = (lp - lm) / (2.0 * h);
        worst = worst.max((fd - g[k]).abs() / fd.abs().max(g[k].abs()).max(1e-5));
    }
    Ok(worst)
}

/// Fisher-Yates shuffle driven by the given stream.
pub fn shuffle(idx: &mut [usize], rng: &mut Rng) {
    for i in (1..idx.len()).rev() {
        let j = rng.random_range(0..=i);
        idx.swap(i, j);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;

    #[test]
    fn gradients_match_finite_differences() {
        let mut r = rng::from_seed(1);
        for (dims, head) in [
            (vec![5, 7, 6, 3], Head::Linear),
            (vec![4, 8, 8, 1], Head::Sigmoid),
            (vec![3, 2], Head::Linear),
        ] {
            for draw in 0..3 {
                let net = Mlp::new(&dims, head, 1.0, &mut r).unwrap();
                let x: Vec<f64> = (0..dims[0] * 4).map(|_| r.random_range(-1.5..1.5)).collect();
                let err = gradient_check(&net, &x, 1e-5).unwrap();
                assert!(err <= 1e-6, "{dims:?} draw {draw}: {err}");
            }
        }
    }

    #[test]
    fn zero_network_outputs() {
        let mut net = Mlp::zeros(&[3, 4, 2], Head::Linear).unwrap();
        assert_eq!(net.forward(&[1.0, -2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
        net.head = Head::Sigmoid;
        let o = net.output_bias_offset();
        net.params[o] = 0.7;
        let y = net.forward(&[1.0, -2.0, 3.0]).unwrap();
        assert!((y[0] - 1.0 / (1.0 + (-0.7f64).exp())).abs() < 1e-15);
        assert_eq!(y[1], 0.5);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let net = Mlp::zeros(&[3, 2], Head::Linear).unwrap();
        assert!(matches!(net.forward(&[1.0]), Err(Error::Shape { .. })));
        let cache = net.forward_batch(&[0.0; 6]).unwrap();
        assert!(net.backward(&cache, &[0.0; 3]).is_err());
    }

    #[test]
    fn zero_output_gradient_gives_zero_grads() {
        let mut r = rng::from_seed(3);
        let net = Mlp::new(&[4, 5, 2], Head::Sigmoid, 1.0, &mut r).unwrap();
        let cache = net.forward_batch(&[0.3; 8]).unwrap();
        let g = net.backward(&cache, &[0.0; 4]).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn batch_rows_match_single_forward() {
        let mut r = rng::from_seed(8);
        let net = Mlp::new(&[6, 16, 16, 3], Head::Linear, 1.0, &mut r).unwrap();
        let x: Vec<f64> = (0..6 * 5).map(|_| r.random_range(-1.0..1.0)).collect();
        let batch = net.forward_batch(&x).unwrap();
        for row in 0..5 {
            let y = net.forward(&x[row * 6..(row + 1) * 6]).unwrap();
            for k in 0..3 {
                assert!((y[k] - batch.output()[row * 3 + k]).abs() < 1e-14);
            }
        }
        assert_eq!(net.forward(&x[..6]).unwrap(), net.forward(&x[..6]).unwrap());
    }

    #[test]
    fn save_load_round_trip_is_exact() {
        let mut r = rng::from_seed(4);
        let net = Mlp::new(&[5, 9, 2], Head::Sigmoid, 0.5, &mut r).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.mlp");
        net.save(&path).unwrap();
        let back = Mlp::load(&path).unwrap();
        for _ in 0..100 {
            let x: Vec<f64> = (0..5).map(|_| r.random_range(-3.0..3.0)).collect();
            let (a, b) = (net.forward(&x).unwrap(), back.forward(&x).unwrap());
            assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        }
    }

    #[test]
    fn bad_weight_files_are_rejected() {
        let net = Mlp::zeros(&[2, 3, 1], Head::Linear).unwrap();
        let text = net.to_text();
        let wrong = text.replacen("mlp v1", "mlp v2", 1);
        assert!(matches!(Mlp::from_text(&wrong), Err(Error::Version { .. })));
        let cut: String = text.lines().take(6).map(|l| format!("{l}\n")).collect();
        assert!(matches!(Mlp::from_text(&cut), Err(Error::Corrupt { .. })));
        let missing = Mlp::load(Path::new("/nonexistent/x.mlp"));
        assert!(matches!(missing, Err(Error::MissingArtifact(_))));
    }

    #[test]
    fn adam_first_step_moves_by_lr_against_sign() {
        let mut p = vec![1.0, -2.0, 0.5];
        let g = vec![0.3, -4.0, 1e-3];
        let mut opt = Adam::new(3, 1e-3);
        opt.update(&mut p, &g).unwrap();
        // bias-corrected m = g, v = g^2, so the step is lr * g / (|g| + eps)
        let expect = [1.0 - 1e-3 * 0.3 / (0.3 + 1e-8), -2.0 + 1e-3 * 4.0 / (4.0 + 1e-8), 0.5 - 1e-3 * 1e-3 / (1e-3 + 1e-8)];
        for k in 0..3 {
            assert!((p[k] - expect[k]).abs() < 1e-15, "{k}");
        }
        assert_eq!(opt.step, 1);
    }

    #[test]
    fn adam_zero_gradient_leaves_params() {
        let mut p = vec![1.0, 2.0];
        let mut opt = Adam::new(2, 0.1);
        opt.update(&mut p, &[0.0, 0.0]).unwrap();
        assert_eq!(p, vec![1.0, 2.0]);
        assert_eq!(opt.step, 1);
        assert!(matches!(
            opt.update(&mut p, &[f64::NAN, 0.0]),
            Err(Error::TrainingDiverged(_))
        ));
    }

    #[test]
    fn adam_converges_on_quadratic_bowl() {
        let centre = [3.0, -1.0, 0.25, 7.0];
        let scale = [1.0, 10.0, 0.1, 2.0];
        let mut p = vec![0.0; 4];
        let mut opt = Adam::new(4, 0.05);
        let loss = |p: &[f64]| -> f64 { (0..4).map(|i| scale[i] * (p[i] - centre[i]).powi(2)).sum() };
        let mut steps = 0;
        while loss(&p) >= 1e-8 && steps < 5000 {
            let g: Vec<f64> = (0..4).map(|i| 2.0 * scale[i] * (p[i] - centre[i])).collect();
            opt.update(&mut p, &g).unwrap();
            steps += 1;
        }
        assert!(loss(&p) < 1e-8, "loss {} after {steps}", loss(&p));
    }

    #[test]
    fn normalizer_matches_two_pass_statistics() {
        let mut r = rng::from_seed(6);
        let xs: Vec<[f64; 2]> = (0..500).map(|_| [r.random_range(-2.0..5.0), r.random_range(10.0..11.0)]).collect();
        let mut n = Normalizer::new(2);
        xs.iter().for_each(|x| n.update(x));
        for d in 0..2 {
            let mean = xs.iter().map(|x| x[d]).sum::<f64>() / 500.0;
            let var = xs.iter().map(|x| (x[d] - mean).powi(2)).sum::<f64>() / 500.0;
            assert!((n.mean()[d] - mean).abs() < 1e-12);
            assert!((n.std(d) - var.sqrt()).abs() < 1e-12);
        }
        let back = Normalizer::from_text(&n.to_text()).unwrap();
        assert_eq!(back, n);
    }

    proptest! {
        #[test]
        fn sigmoid_head_stays_inside_unit_interval(
            seed in 0u64..1000,
            x in proptest::collection::vec(-1e3f64..1e3, 4),
        ) {
            let mut r = rng::from_seed(seed);
            let net = Mlp::new(&[4, 8, 1], Head::Sigmoid, 1.0, &mut r).unwrap();
            let y = net.forward(&x).unwrap()[0];
            prop_assert!(y > 0.0 && y < 1.0);
        }
    }
}
