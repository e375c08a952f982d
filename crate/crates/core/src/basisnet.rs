//! The sin-activated fully connected network whose last ("subspace") layer
//! supplies the basis functions, with exact spatial gradients and the
//! boundary / decay envelope.
//!
//! Every layer, including the subspace layer, computes `y = sin(W y_prev + b)`.
//! Spatial derivatives are propagated forward alongside the values: the
//! Jacobian of layer `l` is `diag(cos z_l) W_l J_{l-1}`. For a batch of `n`
//! points the value rows and the `d` Jacobian-column rows are stacked into one
//! `(d+1)·n × width` matrix so each layer costs a single matrix product.

use std::io::{Read, Write};

use ndarray::{s, Array1, Array2, ArrayView2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    /// Number of basis functions `M`.
    pub subspace_width: usize,
}

impl Architecture {
    pub fn new(input_dim: usize, hidden: Vec<usize>, subspace_width: usize) -> Result<Self> {
        let arch = Self {
            input_dim,
            hidden,
            subspace_width,
        };
        arch.validate()?;
        Ok(arch)
    }

    /// Three hidden layers of 100 neurons.
    pub fn standard(input_dim: usize, subspace_width: usize) -> Result<Self> {
        Self::new(input_dim, vec![100; 3], subspace_width)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.subspace_width == 0 || self.hidden.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "all layer widths must be positive: {self:?}"
            )));
        }
        Ok(())
    }

    /// Input, hidden and subspace widths in order.
    pub fn widths(&self) -> Vec<usize> {
        let mut w = Vec::with_capacity(self.hidden.len() + 2);
        w.push(self.input_dim);
        w.extend_from_slice(&self.hidden);
        w.push(self.subspace_width);
        w
    }

    pub fn param_count(&self) -> usize {
        self.widths().windows(2).map(|p| p[1] * (p[0] + 1)).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// `out × in`
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

/// All weights and biases. The flat view lists, layer by layer, the weight
/// matrix in row-major order followed by the bias.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub arch: Architecture,
    pub layers: Vec<DenseLayer>,
    pub seed: u64,
}

/// Uniform `[-1/√fan_in, 1/√fan_in]` for every weight and bias.
pub fn init_params(arch: &Architecture, seed: u64) -> Result<NetworkParams> {
    arch.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let widths = arch.widths();
    let layers = widths
        .windows(2)
        .map(|p| {
            let (fan_in, fan_out) = (p[0], p[1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let weight = Array2::from_shape_simple_fn((fan_out, fan_in), || {
                rng.random_range(-bound..=bound)
            });
            let bias = Array1::from_shape_simple_fn(fan_out, || rng.random_range(-bound..=bound));
            DenseLayer { weight, bias }
        })
        .collect();
    Ok(NetworkParams {
        arch: arch.clone(),
        layers,
        seed,
    })
}

impl NetworkParams {
    pub fn flatten(&self) -> Array1<f64> {
        let mut out = Vec::with_capacity(self.arch.param_count());
        for layer in &self.layers {
            out.extend(layer.weight.iter());
            out.extend(layer.bias.iter());
        }
        Array1::from_vec(out)
    }

    pub fn from_flat(arch: &Architecture, seed: u64, flat: &[f64]) -> Result<Self> {
        arch.validate()?;
        if flat.len() != arch.param_count() {
            return Err(Error::InvalidArgument(format!(
                "flat parameter vector has length {}, architecture needs {}",
                flat.len(),
                arch.param_count()
            )));
        }
        let mut offset = 0;
        let layers = arch
            .widths()
            .windows(2)
            .map(|p| {
                let (fan_in, fan_out) = (p[0], p[1]);
                let nw = fan_in * fan_out;
                let weight =
                    Array2::from_shape_vec((fan_out, fan_in), flat[offset..offset + nw].to_vec())
                        .expect("shape matches slice length");
                offset += nw;
                let bias = Array1::from_vec(flat[offset..offset + fan_out].to_vec());
                offset += fan_out;
                DenseLayer { weight, bias }
            })
            .collect();
        Ok(Self {
            arch: arch.clone(),
            layers,
            seed,
        })
    }

    /// Overwrites the parameters from a flat vector in [`flatten`](Self::flatten) order.
    pub fn assign_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.arch.param_count());
        let mut offset = 0;
        for layer in &mut self.layers {
            for w in layer.weight.iter_mut().chain(layer.bias.iter_mut()) {
                *w = flat[offset];
                offset += 1;
            }
        }
    }

    /// Checkpoint format (all integers little-endian):
    ///
    /// ```text
    /// magic    8 bytes  "RSNNPAR1"
    /// d        u32
    /// L        u32      number of hidden layers
    /// widths   L × u32
    /// M        u32
    /// seed     u64
    /// count    u64      number of parameters
    /// params   count × f64 (little-endian), flat order
    /// ```
    pub fn write_to(&self, mut out: impl Write) -> Result<()> {
        out.write_all(CHECKPOINT_MAGIC)?;
        out.write_all(&(self.arch.input_dim as u32).to_le_bytes())?;
        out.write_all(&(self.arch.hidden.len() as u32).to_le_bytes())?;
        for &h in &self.arch.hidden {
            out.write_all(&(h as u32).to_le_bytes())?;
        }
        out.write_all(&(self.arch.subspace_width as u32).to_le_bytes())?;
        out.write_all(&self.seed.to_le_bytes())?;
        let flat = self.flatten();
        out.write_all(&(flat.len() as u64).to_le_bytes())?;
        for v in flat.iter() {
            out.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from(mut input: impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let mut u32_buf = [0u8; 4];
        let mut read_u32 = |input: &mut dyn Read| -> Result<usize> {
            input.read_exact(&mut u32_buf)?;
            Ok(u32::from_le_bytes(u32_buf) as usize)
        };
        let d = read_u32(&mut input)?;
        let n_hidden = read_u32(&mut input)?;
        let hidden = (0..n_hidden)
            .map(|_| read_u32(&mut input))
            .collect::<Result<Vec<_>>>()?;
        let m = read_u32(&mut input)?;
        let mut u64_buf = [0u8; 8];
        input.read_exact(&mut u64_buf)?;
        let seed = u64::from_le_bytes(u64_buf);
        input.read_exact(&mut u64_buf)?;
        let count = u64::from_le_bytes(u64_buf) as usize;
        let arch = Architecture::new(d, hidden, m)?;
        if count != arch.param_count() {
            return Err(Error::Checkpoint(format!(
                "header declares {count} parameters, architecture needs {}",
                arch.param_count()
            )));
        }
        let mut flat = Vec::with_capacity(count);
        for _ in 0..count {
            input.read_exact(&mut u64_buf)?;
            flat.push(f64::from_le_bytes(u64_buf));
        }
        Self::from_flat(&arch, seed, &flat)
    }
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"RSNNPAR1";

/// Fixed output-combination coefficients, `M × k`; column `i` defines the
/// trial function `v_i = Σ_j w[j][i] φ_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientSet {
    pub w: Array2<f64>,
}

impl CoefficientSet {
    pub fn k(&self) -> usize {
        self.w.ncols()
    }
}

/// All ones for a single output, otherwise uniform on `[-1, 1]`.
pub fn init_coefficients(m: usize, k: usize, seed: u64) -> Result<CoefficientSet> {
    if m == 0 || k == 0 {
        return Err(Error::InvalidArgument(
            "coefficient set needs M, k >= 1".into(),
        ));
    }
    if k == 1 {
        return Ok(CoefficientSet {
            w: Array2::ones((m, 1)),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    Ok(CoefficientSet {
        w: Array2::from_shape_simple_fn((m, k), || rng.random_range(-1.0..=1.0)),
    })
}

/// Multiplier applied to every basis function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Envelope {
    /// `∏ (x_i − a_i)(b_i − x_i)`, zero on the boundary of the box.
    BoxBubble {
        lower: Vec<f64>,
        upper: Vec<f64>,
    },
    /// `exp(−½ xᵀx)`.
    Gaussian,
    None,
}

impl Envelope {
    pub fn unit_box(d: usize) -> Self {
        Envelope::BoxBubble {
            lower: vec![0.0; d],
            upper: vec![1.0; d],
        }
    }

    /// Value and gradient (written into `grad`) at `x`.
    pub fn eval(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        match self {
            Envelope::BoxBubble { lower, upper } => {
                let factors: Vec<f64> = x
                    .iter()
                    .zip(lower.iter().zip(upper))
                    .map(|(&xi, (&a, &b))| (xi - a) * (b - xi))
                    .collect();
                let value = factors.iter().product();
                for (i, g) in grad.iter_mut().enumerate() {
                    let others: f64 = factors
                        .iter()
                        .enumerate()
                        .filter(|&(j, _)| j != i)
                        .map(|(_, f)| f)
                        .product();
                    *g = others * (lower[i] + upper[i] - 2.0 * x[i]);
                }
                value
            }
            Envelope::Gaussian => {
                let value = (-0.5 * x.iter().map(|v| v * v).sum::<f64>()).exp();
                for (g, &xi) in grad.iter_mut().zip(x) {
                    *g = -xi * value;
                }
                value
            }
            Envelope::None => {
                grad.fill(0.0);
                1.0
            }
        }
    }

    /// Envelope values `(n)` and gradients `(n × d)` at every row of `points`.
    pub fn sample(&self, points: ArrayView2<f64>) -> (Array1<f64>, Array2<f64>) {
        let (n, d) = points.dim();
        let mut f = Array1::zeros(n);
        let mut df = Array2::zeros((n, d));
        let mut x = vec![0.0; d];
        for (i, row) in points.rows().into_iter().enumerate() {
            x.iter_mut().zip(row.iter()).for_each(|(a, b)| *a = *b);
            let mut g = vec![0.0; d];
            f[i] = self.eval(&x, &mut g);
            df.row_mut(i).assign(&Array1::from_vec(g));
        }
        (f, df)
    }
}

/// Basis values and spatial gradients at a set of points, envelope applied.
#[derive(Debug, Clone)]
pub struct BasisEval {
    /// `n × M`
    pub values: Array2<f64>,
    /// One `n × M` matrix per spatial dimension.
    pub gradients: Vec<Array2<f64>>,
}

impl BasisEval {
    pub fn n_points(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_basis(&self) -> usize {
        self.values.ncols()
    }

    pub fn dim(&self) -> usize {
        self.gradients.len()
    }

    /// Columns of the expansion `Σ_j coeffs[j][c] φ_j` at every point, with gradients.
    pub fn combine(&self, coeffs: ArrayView2<f64>) -> BasisEval {
        BasisEval {
            values: self.values.dot(&coeffs),
            gradients: self.gradients.iter().map(|g| g.dot(&coeffs)).collect(),
        }
    }

    /// Rows `range` of every field.
    pub fn rows(&self, start: usize, end: usize) -> BasisEval {
        BasisEval {
            values: self.values.slice(s![start..end, ..]).to_owned(),
            gradients: self
                .gradients
                .iter()
                .map(|g| g.slice(s![start..end, ..]).to_owned())
                .collect(),
        }
    }

    pub(crate) fn first_non_finite_row(&self) -> Option<usize> {
        let mut worst: Option<usize> = None;
        for field in std::iter::once(&self.values).chain(self.gradients.iter()) {
            if let Some((i, _)) = field
                .rows()
                .into_iter()
                .enumerate()
                .find(|(_, r)| r.iter().any(|v| !v.is_finite()))
            {
                worst = Some(worst.map_or(i, |w| w.min(i)));
            }
        }
        worst
    }
}

/// Per-layer intermediates retained for the reverse pass.
#[derive(Debug, Clone)]
struct LayerCache {
    /// Stacked pre-activations: rows `0..n` hold `z`, block `k+1` holds `W J_{k}`.
    pre: Array2<f64>,
    /// Stacked outputs: rows `0..n` hold `sin z`, block `k+1` holds `∂y/∂x_k`.
    out: Array2<f64>,
}

/// A forward pass over a batch of points with everything the reverse pass needs.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    n: usize,
    d: usize,
    input: Array2<f64>,
    layers: Vec<LayerCache>,
    env_value: Array1<f64>,
    env_grad: Array2<f64>,
}

impl ForwardPass {
    /// Approximate memory held by the caches, in bytes.
    pub fn cache_bytes(&self) -> usize {
        8 * self
            .layers
            .iter()
            .map(|l| l.pre.len() + l.out.len())
            .sum::<usize>()
    }

    /// Basis values and gradients with the envelope applied.
    pub fn basis(&self) -> BasisEval {
        let (n, d) = (self.n, self.d);
        let out = &self.layers.last().expect("at least one layer").out;
        let y = out.slice(s![0..n, ..]);
        let f = self.env_value.view().insert_axis(Axis(1));
        let values = &y * &f;
        let gradients = (0..d)
            .map(|k| {
                let jk = out.slice(s![(k + 1) * n..(k + 2) * n, ..]);
                let dfk = self.env_grad.column(k).insert_axis(Axis(1));
                &jk * &f + &y * &dfk
            })
            .collect();
        BasisEval { values, gradients }
    }

    /// Reverse pass. Given cotangents of the enveloped basis values and
    /// gradients (each `n × M`), accumulates `∂ℒ/∂θ` into `grad` in flat order.
    pub fn backward(
        &self,
        params: &NetworkParams,
        values_bar: ArrayView2<f64>,
        gradients_bar: &[Array2<f64>],
        grad: &mut [f64],
    ) {
        let (n, d) = (self.n, self.d);
        assert_eq!(gradients_bar.len(), d);
        assert_eq!(grad.len(), params.arch.param_count());
        let width = params.arch.subspace_width;

        // Through the envelope: v = y f, g_k = J_k f + y ∂_k f.
        let f = self.env_value.view().insert_axis(Axis(1));
        let mut out_bar = Array2::<f64>::zeros(((d + 1) * n, width));
        {
            let mut ybar = out_bar.slice_mut(s![0..n, ..]);
            ybar.assign(&(&values_bar * &f));
            for (k, gbar) in gradients_bar.iter().enumerate() {
                let dfk = self.env_grad.column(k).insert_axis(Axis(1));
                ybar += &(gbar * &dfk);
            }
        }
        for (k, gbar) in gradients_bar.iter().enumerate() {
            out_bar
                .slice_mut(s![(k + 1) * n..(k + 2) * n, ..])
                .assign(&(gbar * &f));
        }

        let offsets = layer_offsets(&params.arch);
        for (l, layer) in params.layers.iter().enumerate().rev() {
            let cache = &self.layers[l];
            let z = cache.pre.slice(s![0..n, ..]);
            let sin_z = cache.out.slice(s![0..n, ..]);
            let cos_z = z.mapv(f64::cos);
            let mut pre_bar = Array2::<f64>::zeros(cache.pre.raw_dim());
            {
                let (mut zbar, mut pbar) = pre_bar.view_mut().split_at(Axis(0), n);
                Zip::from(&mut zbar)
                    .and(&out_bar.slice(s![0..n, ..]))
                    .and(&cos_z)
                    .for_each(|zb, &yb, &c| *zb = yb * c);
                for k in 0..d {
                    let rows = s![(k + 1) * n..(k + 2) * n, ..];
                    let jbar = out_bar.slice(rows);
                    let p = cache.pre.slice(rows);
                    Zip::from(&mut zbar)
                        .and(&jbar)
                        .and(&p)
                        .and(&sin_z)
                        .for_each(|zb, &jb, &pk, &sz| *zb -= jb * pk * sz);
                    Zip::from(pbar.slice_mut(s![k * n..(k + 1) * n, ..]))
                        .and(&jbar)
                        .and(&cos_z)
                        .for_each(|pb, &jb, &c| *pb = jb * c);
                }
            }
            let input = if l == 0 {
                &self.input
            } else {
                &self.layers[l - 1].out
            };
            let w_bar = pre_bar.t().dot(input);
            let b_bar = pre_bar.slice(s![0..n, ..]).sum_axis(Axis(0));
            let (start, fan_out, fan_in) = offsets[l];
            let nw = fan_out * fan_in;
            for (dst, src) in grad[start..start + nw].iter_mut().zip(w_bar.iter()) {
                *dst += src;
            }
            for (dst, src) in grad[start + nw..start + nw + fan_out]
                .iter_mut()
                .zip(b_bar.iter())
            {
                *dst += src;
            }
            if l > 0 {
                out_bar = pre_bar.dot(&layer.weight);
            }
        }
    }
}

/// `(flat offset, fan_out, fan_in)` per layer.
fn layer_offsets(arch: &Architecture) -> Vec<(usize, usize, usize)> {
    let mut offset = 0;
    arch.widths()
        .windows(2)
        .map(|p| {
            let entry = (offset, p[1], p[0]);
            offset += p[1] * (p[0] + 1);
            entry
        })
        .collect()
}

/// Forward pass with caches over all rows of `points`.
pub fn forward(
    params: &NetworkParams,
    envelope: &Envelope,
    points: ArrayView2<f64>,
) -> Result<ForwardPass> {
    let (n, d) = points.dim();
    if d != params.arch.input_dim {
        return Err(Error::InvalidArgument(format!(
            "points have dimension {d}, network expects {}",
            params.arch.input_dim
        )));
    }
    let mut input = Array2::<f64>::zeros(((d + 1) * n, d));
    input.slice_mut(s![0..n, ..]).assign(&points);
    for k in 0..d {
        input.slice_mut(s![(k + 1) * n..(k + 2) * n, k]).fill(1.0);
    }

    let mut layers: Vec<LayerCache> = Vec::with_capacity(params.layers.len());
    for layer in &params.layers {
        let prev = layers.last().map_or(&input, |c| &c.out);
        let mut pre = prev.dot(&layer.weight.t());
        pre.slice_mut(s![0..n, ..])
            .rows_mut()
            .into_iter()
            .for_each(|mut r| r += &layer.bias);
        let mut out = Array2::<f64>::zeros(pre.raw_dim());
        let z = pre.slice(s![0..n, ..]);
        let cos_z = z.mapv(f64::cos);
        out.slice_mut(s![0..n, ..]).assign(&z.mapv(f64::sin));
        for k in 0..d {
            let rows = s![(k + 1) * n..(k + 2) * n, ..];
            Zip::from(out.slice_mut(rows))
                .and(&pre.slice(rows))
                .and(&cos_z)
                .for_each(|o, &p, &c| *o = c * p);
        }
        layers.push(LayerCache { pre, out });
    }
    let (env_value, env_grad) = envelope.sample(points);
    Ok(ForwardPass {
        n,
        d,
        input,
        layers,
        env_value,
        env_grad,
    })
}

/// Enveloped basis values and gradients at every row of `points`.
pub fn eval_basis(
    params: &NetworkParams,
    envelope: &Envelope,
    points: ArrayView2<f64>,
) -> Result<BasisEval> {
    let eval = forward(params, envelope, points)?.basis();
    if let Some(index) = eval.first_non_finite_row() {
        return Err(Error::NonFinite {
            what: "basis evaluation",
            index,
        });
    }
    Ok(eval)
}

/// [`eval_basis`] over row blocks of at most `chunk` points; identical output.
pub fn eval_basis_chunked(
    params: &NetworkParams,
    envelope: &Envelope,
    points: ArrayView2<f64>,
    chunk: usize,
) -> Result<BasisEval> {
    let n = points.nrows();
    let chunk = chunk.max(1);
    let m = params.arch.subspace_width;
    let d = params.arch.input_dim;
    let mut values = Array2::zeros((n, m));
    let mut gradients = vec![Array2::zeros((n, m)); d];
    let mut start = 0;
    while start < n {
        let end = (start + chunk).min(n);
        let part =
            eval_basis(params, envelope, points.slice(s![start..end, ..])).map_err(
                |e| match e {
                    Error::NonFinite { what, index } => Error::NonFinite {
                        what,
                        index: index + start,
                    },
                    other => other,
                },
            )?;
        values.slice_mut(s![start..end, ..]).assign(&part.values);
        for (g, pg) in gradients.iter_mut().zip(&part.gradients) {
            g.slice_mut(s![start..end, ..]).assign(pg);
        }
        start = end;
    }
    Ok(BasisEval { values, gradients })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn small_net(seed: u64) -> NetworkParams {
        init_params(&Architecture::new(2, vec![7, 5], 4).unwrap(), seed).unwrap()
    }

    #[test]
    fn param_count_matches_layer_formula() {
        let arch = Architecture::standard(2, 300).unwrap();
        let expected = (2 * 100 + 100) + 2 * (100 * 100 + 100) + (100 * 300 + 300);
        assert_eq!(arch.param_count(), expected);
        assert_eq!(expected, 50_800);
        let p = init_params(&arch, 1).unwrap();
        assert_eq!(p.flatten().len(), expected);
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let arch = Architecture::standard(2, 30).unwrap();
        let a = init_params(&arch, 1).unwrap();
        let b = init_params(&arch, 1).unwrap();
        assert_eq!(a.flatten(), b.flatten());
        let c = init_params(&arch, 2).unwrap();
        assert_ne!(a.flatten(), c.flatten());
        let bound = 1.0 / 2f64.sqrt();
        assert!(a.layers[0].weight.iter().all(|w| w.abs() <= bound));
        assert!(a.layers[0].bias.iter().all(|w| w.abs() <= bound));
        assert!(a.layers[1].weight.iter().all(|w| w.abs() <= 0.1));
    }

    #[test]
    fn flat_round_trip() {
        let p = small_net(4);
        let q = NetworkParams::from_flat(&p.arch, p.seed, p.flatten().as_slice().unwrap()).unwrap();
        assert_eq!(p, q);
        let mut r = small_net(5);
        r.assign_flat(p.flatten().as_slice().unwrap());
        assert_eq!(r.flatten(), p.flatten());
    }

    #[test]
    fn checkpoint_round_trip() {
        let p = small_net(6);
        let mut buf = Vec::new();
        p.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..8], b"RSNNPAR1");
        assert_eq!(
            buf.len(),
            8 + 4 + 4 + 2 * 4 + 4 + 8 + 8 + 8 * p.arch.param_count()
        );
        let q = NetworkParams::read_from(buf.as_slice()).unwrap();
        assert_eq!(p, q);
        buf[0] = b'X';
        assert!(NetworkParams::read_from(buf.as_slice()).is_err());
    }

    #[test]
    fn coefficients() {
        let c = init_coefficients(5, 1, 1).unwrap();
        assert_eq!(c.w, Array2::<f64>::ones((5, 1)));
        let a = init_coefficients(5, 3, 1).unwrap();
        let b = init_coefficients(5, 3, 1).unwrap();
        assert_eq!(a, b);
        assert!(a.w.iter().all(|v| (-1.0..=1.0).contains(v)));
        assert!(init_coefficients(0, 3, 1).is_err());
    }

    #[test]
    fn bubble_vanishes_on_boundary() {
        let p = init_params(&Architecture::standard(2, 12).unwrap(), 3).unwrap();
        let pts = array![[0.0, 0.37], [1.0, 0.5], [0.2, 0.0], [0.9, 1.0]];
        let e = eval_basis(&p, &Envelope::unit_box(2), pts.view()).unwrap();
        assert!(e.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn analytic_sin_network() {
        // d = 1, no hidden layer, W = 1, b = 0: φ(x) = sin(x).
        let arch = Architecture::new(1, vec![], 1).unwrap();
        let p = NetworkParams::from_flat(&arch, 0, &[1.0, 0.0]).unwrap();
        let pts = array![[0.0], [0.3]];
        let e = eval_basis(&p, &Envelope::None, pts.view()).unwrap();
        assert_eq!(e.values[[0, 0]], 0.0);
        assert_eq!(e.gradients[0][[0, 0]], 1.0);
        assert_abs_diff_eq!(e.values[[1, 0]], 0.3f64.sin(), epsilon = 1e-16);
        assert_abs_diff_eq!(e.gradients[0][[1, 0]], 0.3f64.cos(), epsilon = 1e-16);
    }

    fn fd_check(envelope: &Envelope, pts: &Array2<f64>) {
        let p = small_net(8);
        let e = eval_basis(&p, envelope, pts.view()).unwrap();
        let h = 1e-5;
        let mut worst = 0.0f64;
        for i in 0..pts.nrows() {
            for k in 0..2 {
                let mut plus = pts.row(i).to_owned().insert_axis(Axis(0));
                let mut minus = plus.clone();
                plus[[0, k]] += h;
                minus[[0, k]] -= h;
                let fp = eval_basis(&p, envelope, plus.view()).unwrap().values;
                let fm = eval_basis(&p, envelope, minus.view()).unwrap().values;
                for j in 0..p.arch.subspace_width {
                    let fd = (fp[[0, j]] - fm[[0, j]]) / (2.0 * h);
                    let an = e.gradients[k][[i, j]];
                    worst = worst.max((fd - an).abs() / an.abs().max(1e-2));
                }
            }
        }
        assert!(worst <= 1e-6, "{envelope:?}: worst relative error {worst}");
    }

    #[test]
    fn gradients_match_finite_differences() {
        let pts = array![[0.13, 0.71], [0.5, 0.5], [0.91, 0.07], [0.33, 0.29]];
        fd_check(&Envelope::None, &pts);
        fd_check(&Envelope::unit_box(2), &pts);
        fd_check(
            &Envelope::BoxBubble {
                lower: vec![-1.0, 0.0],
                upper: vec![2.0, 3.0],
            },
            &pts,
        );
        let wide = pts.mapv(|v| 4.0 * v - 2.0);
        fd_check(&Envelope::Gaussian, &wide);
    }

    #[test]
    fn unenveloped_values_bounded_and_deterministic() {
        let p = small_net(9);
        let pts =
            Array2::from_shape_fn((50, 2), |(i, k)| (i as f64 * 0.37 + k as f64) * 3.1 - 20.0);
        let a = eval_basis(&p, &Envelope::None, pts.view()).unwrap();
        let b = eval_basis(&p, &Envelope::None, pts.view()).unwrap();
        assert!(a.values.iter().all(|v| v.abs() <= 1.0));
        assert_eq!(a.values, b.values);
        assert_eq!(a.gradients, b.gradients);
    }

    #[test]
    fn chunked_evaluation_is_identical() {
        let p = small_net(10);
        let pts = Array2::from_shape_fn((37, 2), |(i, k)| ((i * 7 + k * 3) % 11) as f64 / 11.0);
        let full = eval_basis(&p, &Envelope::unit_box(2), pts.view()).unwrap();
        let chunked = eval_basis_chunked(&p, &Envelope::unit_box(2), pts.view(), 8).unwrap();
        assert_eq!(full.values, chunked.values);
        assert_eq!(full.gradients, chunked.gradients);
    }

    #[test]
    fn non_finite_points_are_reported() {
        let p = small_net(11);
        let pts = array![[0.1, 0.2], [f64::NAN, 0.3]];
        match eval_basis(&p, &Envelope::None, pts.view()).unwrap_err() {
            Error::NonFinite { index, .. } => assert_eq!(index, 1),
            e => panic!("unexpected {e}"),
        }
        assert!(eval_basis(&p, &Envelope::None, array![[0.1]].view()).is_err());
    }
}
