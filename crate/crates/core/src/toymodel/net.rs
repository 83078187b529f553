use rand::Rng;
use rand_distr::{Distribution, Normal};

/// Fully connected ReLU network with a two-unit output `[mean, log_var]`.
///
/// All parameters live in one flat vector: for each layer the row-major
/// weight matrix `(out, in)` followed by the bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    pub params: Vec<f64>,
}

/// Per-hidden-layer dropout masks, each entry `0` or `1/(1-p)`.
pub type Masks = Vec<Vec<f64>>;

/// Intermediate values of one forward pass, kept for backprop.
#[derive(Debug, Clone, Default)]
pub struct Cache {
    /// Input to each layer (post-activation, post-mask).
    inputs: Vec<Vec<f64>>,
    /// Pre-activation of each hidden layer.
    pre: Vec<Vec<f64>>,
}

/// Initial log-variance predicted by the untrained network.
pub const INIT_LOG_VAR: f64 = -4.605_170_185_988_091; // ln 0.01

impl Mlp {
    /// He-initialised hidden layers; the mean head uses `N(0, 1/fan_in)`, the
    /// log-variance head starts at zero weights and bias `ln 0.01`.
    pub fn new<R: Rng + ?Sized>(input: usize, hidden: &[usize], rng: &mut R) -> Self {
        let mut sizes = vec![input];
        sizes.extend_from_slice(hidden);
        sizes.push(2);
        let n: usize = sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        let mut params = Vec::with_capacity(n);
        let layers = sizes.len() - 1;
        for l in 0..layers {
            let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
            let last = l + 1 == layers;
            let sd = if last { (1.0 / fan_in as f64).sqrt() } else { (2.0 / fan_in as f64).sqrt() };
            let normal = Normal::new(0.0, sd).expect("valid normal");
            for o in 0..fan_out {
                for _ in 0..fan_in {
                    let w = normal.sample(rng);
                    params.push(if last && o == 1 { 0.0 } else { w });
                }
            }
            for o in 0..fan_out {
                params.push(if last && o == 1 { INIT_LOG_VAR } else { 0.0 });
            }
        }
        Mlp { sizes, params }
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn hidden_sizes(&self) -> &[usize] {
        &self.sizes[1..self.sizes.len() - 1]
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    fn layers(&self) -> usize {
        self.sizes.len() - 1
    }

    /// Offset of layer `l`'s weight matrix and of its bias.
    fn offsets(&self, l: usize) -> (usize, usize) {
        let w: usize = self.sizes[..=l]
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum();
        (w, w + self.sizes[l] * self.sizes[l + 1])
    }

    /// Draws dropout masks for one forward pass.
    pub fn sample_masks<R: Rng + ?Sized>(&self, p: f64, rng: &mut R) -> Masks {
        let keep = 1.0 - p;
        self.hidden_sizes()
            .iter()
            .map(|&h| {
                (0..h)
                    .map(|_| {
                        if p == 0.0 || rng.random::<f64>() < keep {
                            1.0 / keep
                        } else {
                            0.0
                        }
                    })
                    .collect()
            })
            .collect()
    }

    pub fn forward(&self, x: &[f64], masks: Option<&Masks>, cache: &mut Cache) -> [f64; 2] {
        let layers = self.layers();
        cache.inputs.clear();
        cache.pre.clear();
        let mut cur = x.to_vec();
        for l in 0..layers {
            let (wo, bo) = self.offsets(l);
            let (nin, nout) = (self.sizes[l], self.sizes[l + 1]);
            let mut next = vec![0.0; nout];
            for (o, v) in next.iter_mut().enumerate() {
                let row = &self.params[wo + o * nin..wo + (o + 1) * nin];
                *v = self.params[bo + o] + row.iter().zip(&cur).map(|(w, a)| w * a).sum::<f64>();
            }
            cache.inputs.push(cur);
            if l + 1 < layers {
                cache.pre.push(next.clone());
                for (i, v) in next.iter_mut().enumerate() {
                    *v = v.max(0.0);
                    if let Some(m) = masks {
                        *v *= m[l][i];
                    }
                }
            }
            cur = next;
        }
        [cur[0], cur[1]]
    }

    /// Accumulates `∂L/∂θ` into `grad` given `∂L/∂[mean, log_var]` for the
    /// pass recorded in `cache`.
    pub fn backward(&self, cache: &Cache, masks: Option<&Masks>, dout: [f64; 2], grad: &mut [f64]) {
        let layers = self.layers();
        let mut delta = dout.to_vec();
        for l in (0..layers).rev() {
            let (wo, bo) = self.offsets(l);
            let (nin, nout) = (self.sizes[l], self.sizes[l + 1]);
            let input = &cache.inputs[l];
            for o in 0..nout {
                let d = delta[o];
                grad[bo + o] += d;
                let row = &mut grad[wo + o * nin..wo + (o + 1) * nin];
                for (g, a) in row.iter_mut().zip(input) {
                    *g += d * a;
                }
            }
            if l == 0 {
                break;
            }
            let mut prev = vec![0.0; nin];
            for (i, p) in prev.iter_mut().enumerate() {
                let mut s = 0.0;
                for (o, d) in delta.iter().enumerate() {
                    s += self.params[wo + o * nin + i] * d;
                }
                let pre = cache.pre[l - 1][i];
                let mask = masks.map_or(1.0, |m| m[l - 1][i]);
                *p = if pre > 0.0 { s * mask } else { 0.0 };
            }
            delta = prev;
        }
    }

    pub fn sq_norm(&self) -> f64 {
        self.params.iter().map(|p| p * p).sum()
    }
}

/// Per-sample heteroscedastic loss `e^{-s}(y - μ)² + s` and its gradient with
/// respect to `[μ, s]`.
pub fn sample_loss(y: f64, out: [f64; 2]) -> (f64, [f64; 2]) {
    let [mu, log_var] = out;
    let r = y - mu;
    let inv = (-log_var).exp();
    (inv * r * r + log_var, [-2.0 * inv * r, 1.0 - inv * r * r])
}

/// Mean per-sample loss over a batch plus `λ‖θ‖²`, with its full gradient.
/// `masks[i]` is the dropout mask of the `i`-th batch element.
pub fn batch_loss_grad(
    net: &Mlp,
    xs: &[f64],
    ys: &[f64],
    masks: &[Option<Masks>],
    weight_decay: f64,
    grad: &mut [f64],
) -> f64 {
    grad.iter_mut().for_each(|g| *g = 0.0);
    let mut cache = Cache::default();
    let scale = 1.0 / xs.len() as f64;
    let mut loss = 0.0;
    for ((&x, &y), m) in xs.iter().zip(ys).zip(masks) {
        let out = net.forward(&[x], m.as_ref(), &mut cache);
        let (l, d) = sample_loss(y, out);
        loss += l;
        net.backward(&cache, m.as_ref(), [d[0] * scale, d[1] * scale], grad);
    }
    for (g, p) in grad.iter_mut().zip(&net.params) {
        *g += 2.0 * weight_decay * p;
    }
    loss * scale + weight_decay * net.sq_norm()
}
