//! Parameter storage and the layer building blocks the network is made of.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::tensor::{Graph, Real, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(usize);

/// Named parameter tensors in creation order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<T: Real> {
    names: Vec<String>,
    values: Vec<Tensor<T>>,
}

impl<T: Real> Default for ParamStore<T> {
    fn default() -> Self {
        ParamStore {
            names: Vec::new(),
            values: Vec::new(),
        }
    }
}

impl<T: Real> ParamStore<T> {
    pub fn add(&mut self, name: String, value: Tensor<T>) -> ParamId {
        debug_assert!(!self.names.contains(&name), "duplicate parameter {name}");
        self.names.push(name);
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.values[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    pub fn values(&self) -> &[Tensor<T>] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.values
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Total number of scalar parameters.
    pub fn count(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    /// Scalar parameters whose name starts with `prefix`.
    pub fn count_prefix(&self, prefix: &str) -> usize {
        self.iter()
            .filter(|(n, _)| n.starts_with(prefix))
            .map(|(_, t)| t.len())
            .sum()
    }

    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        ParamStore {
            names: self.names.clone(),
            values: self.values.iter().map(Tensor::cast).collect(),
        }
    }
}

/// Draws initial weights. Values are sampled in `f64` so that `f32` and
/// `f64` models built from one seed agree up to rounding.
pub struct Init {
    rng: ChaCha8Rng,
}

impl Init {
    pub fn new(seed: u64) -> Self {
        Init {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Uniform in `[-bound, bound]`.
    pub fn uniform<T: Real>(&mut self, shape: [usize; 4], bound: f64) -> Tensor<T> {
        let n = shape.iter().product();
        let data = (0..n)
            .map(|_| T::c(self.rng.random_range(-bound..=bound)))
            .collect();
        Tensor::from_vec(shape, data)
    }
}

/// Binds a parameter store onto a fresh graph.
pub struct Session<T> {
    pub g: Graph<T>,
    params: Vec<Var>,
}

impl<T: Real> Session<T> {
    /// `trainable` decides whether parameters receive gradients.
    pub fn new(store: &ParamStore<T>, trainable: bool) -> Self {
        let mut g = Graph::new();
        let params = store
            .values()
            .iter()
            .map(|t| {
                if trainable {
                    g.param(t.clone())
                } else {
                    g.constant(t.clone())
                }
            })
            .collect();
        Session { g, params }
    }

    #[inline]
    pub fn p(&self, id: ParamId) -> Var {
        self.params[id.0]
    }

    pub fn param_vars(&self) -> &[Var] {
        &self.params
    }

    /// The pointwise nonlinearity used throughout the network.
    pub fn act(&mut self, x: Var) -> Var {
        self.g.silu(x)
    }
}

/// 2-D convolution with bias and "same" padding (`k / 2`).
#[derive(Debug, Clone)]
pub struct Conv2d {
    weight: ParamId,
    bias: ParamId,
    pub cin: usize,
    pub cout: usize,
    pub kernel: usize,
    pub stride: usize,
}

impl Conv2d {
    pub fn new<T: Real>(
        store: &mut ParamStore<T>,
        init: &mut Init,
        name: &str,
        cin: usize,
        cout: usize,
        kernel: usize,
        stride: usize,
    ) -> Self {
        let fan_in = (cin * kernel * kernel) as f64;
        let bound = 1.0 / fan_in.sqrt();
        let weight = store.add(
            format!("{name}.weight"),
            init.uniform([cout, cin, kernel, kernel], bound),
        );
        let bias = store.add(format!("{name}.bias"), init.uniform([1, cout, 1, 1], bound));
        Conv2d {
            weight,
            bias,
            cin,
            cout,
            kernel,
            stride,
        }
    }

    pub fn param_count(cin: usize, cout: usize, kernel: usize) -> usize {
        cout * cin * kernel * kernel + cout
    }

    pub fn forward<T: Real>(&self, s: &mut Session<T>, x: Var) -> Var {
        let (w, b) = (s.p(self.weight), s.p(self.bias));
        s.g.conv2d(x, w, Some(b), self.stride, self.kernel / 2)
    }

    /// `act(conv(x))`.
    pub fn forward_act<T: Real>(&self, s: &mut Session<T>, x: Var) -> Var {
        let y = self.forward(s, x);
        s.act(y)
    }
}

/// `x + conv2(act(conv1(x)))`.
#[derive(Debug, Clone)]
pub struct ResBlock {
    conv1: Conv2d,
    conv2: Conv2d,
}

impl ResBlock {
    pub fn new<T: Real>(store: &mut ParamStore<T>, init: &mut Init, name: &str, c: usize) -> Self {
        ResBlock {
            conv1: Conv2d::new(store, init, &format!("{name}.conv1"), c, c, 3, 1),
            conv2: Conv2d::new(store, init, &format!("{name}.conv2"), c, c, 3, 1),
        }
    }

    pub fn forward<T: Real>(&self, s: &mut Session<T>, x: Var) -> Var {
        let h = self.conv1.forward_act(s, x);
        let h = self.conv2.forward(s, h);
        s.g.add(x, h)
    }
}

/// Three stacked convolutions (3×3, 3×3, 1×1) whose hidden widths are chosen
/// to match a target parameter count. Stands in for an ablated module.
#[derive(Debug, Clone)]
pub struct PlainBlock {
    convs: [Conv2d; 3],
}

impl PlainBlock {
    pub fn param_count(cin: usize, hidden: (usize, usize), cout: usize) -> usize {
        Conv2d::param_count(cin, hidden.0, 3)
            + Conv2d::param_count(hidden.0, hidden.1, 3)
            + Conv2d::param_count(hidden.1, cout, 1)
    }

    /// Hidden widths whose parameter count is closest to `target`.
    pub fn widths_for(target: usize, cin: usize, cout: usize) -> (usize, usize) {
        let mut best = (1, 1);
        let mut best_err = usize::MAX;
        let k1_max = (target / (9 * cin + 1)).max(1);
        for k1 in 1..=k1_max {
            let k2_max = (target / (9 * k1 + 1)).max(1);
            for k2 in 1..=k2_max {
                let err = Self::param_count(cin, (k1, k2), cout).abs_diff(target);
                if err < best_err {
                    best_err = err;
                    best = (k1, k2);
                }
            }
        }
        best
    }

    pub fn new<T: Real>(
        store: &mut ParamStore<T>,
        init: &mut Init,
        name: &str,
        cin: usize,
        hidden: (usize, usize),
        cout: usize,
    ) -> Self {
        PlainBlock {
            convs: [
                Conv2d::new(store, init, &format!("{name}.conv1"), cin, hidden.0, 3, 1),
                Conv2d::new(store, init, &format!("{name}.conv2"), hidden.0, hidden.1, 3, 1),
                Conv2d::new(store, init, &format!("{name}.conv3"), hidden.1, cout, 1, 1),
            ],
        }
    }

    pub fn forward<T: Real>(&self, s: &mut Session<T>, x: Var) -> Var {
        let h = self.convs[0].forward_act(s, x);
        let h = self.convs[1].forward_act(s, h);
        self.convs[2].forward(s, h)
    }
}
