//! Reference implementations and helpers shared by the integration tests.
//! The oracles are deliberately naive: nested loops, no shared code with the
//! library beyond plain data types.

#![allow(dead_code)]

use egvd::events::{Event, EventStream, SimConfig};
use egvd::frame::Plane;
use egvd::nn::{ParamStore, Session};
use egvd::tensor::{Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_plane(r: &mut ChaCha8Rng, w: usize, h: usize) -> Plane {
    Plane {
        width: w,
        height: h,
        data: (0..w * h).map(|_| r.random::<f32>()).collect(),
    }
}

pub fn random_tensor(r: &mut ChaCha8Rng, shape: [usize; 4], lo: f64, hi: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| r.random_range(lo..hi)).collect())
}

/// A random stream with events spread over `[t0, t1]`.
pub fn random_stream(r: &mut ChaCha8Rng, w: u16, h: u16, t0: u64, t1: u64, n: usize) -> EventStream {
    let events = (0..n)
        .map(|_| {
            Event::new(
                r.random_range(0..w),
                r.random_range(0..h),
                r.random_range(t0..=t1),
                if r.random::<bool>() { 1 } else { -1 },
            )
        })
        .collect();
    EventStream::new(w, h, t0, t1, events).unwrap()
}

/// Pixel-at-a-time event simulator: walks each pixel's log-intensity
/// trajectory on its own and collects its threshold crossings.
pub fn simulate_oracle(frames: &[(u64, Plane)], cfg: &SimConfig) -> Vec<Event> {
    let (w, h) = (frames[0].1.width, frames[0].1.height);
    let c = cfg.contrast_threshold;
    let log = |v: f32| (v as f64 + cfg.log_eps).ln();
    let mut out = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let mut reference = log(frames[0].1.data[i]);
            let mut last_fire: Option<u64> = None;
            for k in 1..frames.len() {
                let (ta, tb) = (frames[k - 1].0, frames[k].0);
                let la = log(frames[k - 1].1.data[i]);
                let lb = log(frames[k].1.data[i]);
                if lb == la {
                    continue;
                }
                let up = lb > la;
                loop {
                    let level = if up { reference + c } else { reference - c };
                    let reached = if up { lb - level >= -1e-9 } else { level - lb >= -1e-9 };
                    if !reached {
                        break;
                    }
                    let frac = ((level - la) / (lb - la)).clamp(0.0, 1.0);
                    let t = ta + (frac * (tb - ta) as f64).floor() as u64;
                    reference = level;
                    if last_fire.is_none_or(|l| t >= l + cfg.refractory_us) {
                        last_fire = Some(t);
                        out.push(Event::new(x as u16, y as u16, t, if up { 1 } else { -1 }));
                    }
                }
            }
        }
    }
    out.sort_by(|a, b| (a.t, a.y, a.x, a.p).cmp(&(b.t, b.y, b.x, b.p)));
    out
}

/// Voxel grid by brute force: every bin visits every event.
pub fn voxel_oracle(s: &EventStream, bins: usize) -> Vec<f64> {
    let (w, h) = (s.width as usize, s.height as usize);
    let mut grid = vec![0.0; bins * h * w];
    let span = (s.t_end - s.t_start) as f64;
    for b in 0..bins {
        for e in &s.events {
            let ts = if span > 0.0 {
                (bins - 1) as f64 * (e.t - s.t_start) as f64 / span
            } else {
                0.0
            };
            let wgt = (1.0 - (b as f64 - ts).abs()).max(0.0);
            grid[(b * h + e.y as usize) * w + e.x as usize] += e.p as f64 * wgt;
        }
    }
    grid
}

/// Windowed SSIM by explicit loops over every valid window position, with
/// a Gaussian window built from scratch. Inputs are (C, H, W).
pub fn ssim_oracle(a: &[f32], b: &[f32], ch: usize, h: usize, w: usize) -> f64 {
    let (win, sigma) = (11usize, 1.5f64);
    let r = (win / 2) as f64;
    let mut kern = vec![0.0; win * win];
    for i in 0..win {
        for j in 0..win {
            let (dy, dx) = (i as f64 - r, j as f64 - r);
            kern[i * win + j] = (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp();
        }
    }
    let total: f64 = kern.iter().sum();
    kern.iter_mut().for_each(|k| *k /= total);
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let mut acc = 0.0;
    for c in 0..ch {
        let px = |img: &[f32], y: usize, x: usize| img[(c * h + y) * w + x] as f64;
        let mut sum = 0.0;
        let mut count = 0;
        for y0 in 0..=h - win {
            for x0 in 0..=w - win {
                let (mut ma, mut mb) = (0.0, 0.0);
                for i in 0..win {
                    for j in 0..win {
                        ma += kern[i * win + j] * px(a, y0 + i, x0 + j);
                        mb += kern[i * win + j] * px(b, y0 + i, x0 + j);
                    }
                }
                let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
                for i in 0..win {
                    for j in 0..win {
                        let k = kern[i * win + j];
                        let (da, db) = (px(a, y0 + i, x0 + j) - ma, px(b, y0 + i, x0 + j) - mb);
                        va += k * da * da;
                        vb += k * db * db;
                        cov += k * da * db;
                    }
                }
                sum += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                count += 1;
            }
        }
        acc += sum / count as f64;
    }
    acc / ch as f64
}

pub struct FdReport {
    pub checked: usize,
    pub failures: Vec<String>,
    pub worst: f64,
}

pub const FD_EPS: f64 = 1e-4;
pub const FD_RTOL: f64 = 1e-3;
/// Absolute slack for gradients that are zero up to rounding.
pub const FD_ATOL: f64 = 1e-8;

/// Compares backprop gradients with central differences. `f` maps the bound
/// inputs to one or more outputs; the scalar checked is a fixed random
/// weighting of all outputs. Up to `per_input` coordinates of every input
/// and `per_param` coordinates of up to `max_params` used parameters are
/// probed.
pub fn fd_check(
    store: &ParamStore<f64>,
    inputs: &[Tensor<f64>],
    f: &dyn Fn(&mut Session<f64>, &[Var]) -> Vec<Var>,
    per_input: usize,
    max_params: usize,
    per_param: usize,
    seed: u64,
) -> FdReport {
    let eval = |store: &ParamStore<f64>, inputs: &[Tensor<f64>], trainable: bool| {
        let mut s = Session::new(store, trainable);
        let vars: Vec<Var> = inputs.iter().map(|t| s.g.param(t.clone())).collect();
        let outs = f(&mut s, &vars);
        let mut wr = rng(seed ^ 0xF00D);
        let mut total: Option<Var> = None;
        for o in outs {
            let shape = s.g.shape(o);
            let wt = s.g.constant(random_tensor(&mut wr, shape, -1.0, 1.0));
            let prod = s.g.mul(o, wt);
            let term = s.g.sum(prod);
            total = Some(match total {
                Some(t) => s.g.add(t, term),
                None => term,
            });
        }
        (s, vars, total.expect("at least one output"))
    };
    let value = |store: &ParamStore<f64>, inputs: &[Tensor<f64>]| {
        let (s, _, l) = eval(store, inputs, false);
        s.g.value(l).data[0]
    };

    let (s, vars, loss) = eval(store, inputs, true);
    let grads = s.g.backward(loss);
    let mut r = rng(seed);
    let mut report = FdReport {
        checked: 0,
        failures: Vec::new(),
        worst: 0.0,
    };
    let mut judge = |what: String, analytic: f64, numeric: f64| {
        let err = (analytic - numeric).abs();
        let scale = analytic.abs().max(numeric.abs());
        report.checked += 1;
        if scale > 0.0 {
            report.worst = report.worst.max(err / scale);
        }
        if err > FD_RTOL * scale + FD_ATOL {
            report.failures.push(format!("{what}: analytic {analytic:e} vs numeric {numeric:e}"));
        }
    };

    for (k, (v, t)) in vars.iter().zip(inputs).enumerate() {
        let g = grads.get(*v).expect("input gradient").clone();
        for _ in 0..per_input.min(t.len()) {
            let i = r.random_range(0..t.len());
            let mut plus = inputs.to_vec();
            plus[k].data[i] += FD_EPS;
            let mut minus = inputs.to_vec();
            minus[k].data[i] -= FD_EPS;
            let num = (value(store, &plus) - value(store, &minus)) / (2.0 * FD_EPS);
            judge(format!("input {k}[{i}]"), g.data[i], num);
        }
    }

    let used: Vec<(usize, Tensor<f64>)> = s
        .param_vars()
        .iter()
        .enumerate()
        .filter_map(|(p, v)| grads.get(*v).map(|g| (p, g.clone())))
        .collect();
    let mut picks: Vec<usize> = (0..used.len()).collect();
    for i in 0..picks.len() {
        let j = r.random_range(i..picks.len());
        picks.swap(i, j);
    }
    for &u in picks.iter().take(max_params) {
        let (p, ref g) = used[u];
        let name = store.names()[p].clone();
        for _ in 0..per_param.min(g.len()) {
            let i = r.random_range(0..g.len());
            let mut plus = store.clone();
            plus.values_mut()[p].data[i] += FD_EPS;
            let mut minus = store.clone();
            minus.values_mut()[p].data[i] -= FD_EPS;
            let num = (value(&plus, inputs) - value(&minus, inputs)) / (2.0 * FD_EPS);
            judge(format!("{name}[{i}]"), g.data[i], num);
        }
    }
    report
}

/// One finite-difference check per module and loss kind, all in `f64` on
/// inputs no larger than 16×16.
pub fn gradient_cases() -> Vec<(&'static str, Box<dyn Fn() -> FdReport>)> {
    use egvd::metrics::{multiscale_loss, LossKind, LossScales, LossSpec};
    use egvd::model::layers::{Decoder, Eamd, EventAttention, Mmf};
    use egvd::model::{Egvd, Hooks, ModelConfig};
    use egvd::nn::Init;

    let c = 4;
    let mut cases: Vec<(&'static str, Box<dyn Fn() -> FdReport>)> = Vec::new();
    cases.push((
        "eamd",
        Box::new(move || {
            let mut store = ParamStore::default();
            let m = Eamd::new(&mut store, &mut Init::new(1), "eamd", c, true);
            let mut r = rng(11);
            let inputs: Vec<_> = (0..5).map(|_| random_tensor(&mut r, [1, c, 8, 8], -1.0, 1.0)).collect();
            let hooks = Hooks::default();
            fd_check(
                &store,
                &inputs,
                &|s, v| {
                    let o = m.forward(s, &hooks, [v[0], v[1], v[2]], Some([v[3], v[4]]));
                    vec![o.frame, o.event.expect("event output"), o.mask]
                },
                4,
                12,
                2,
                1,
            )
        }),
    ));
    cases.push((
        "rea",
        Box::new(move || {
            let mut store = ParamStore::default();
            let m = EventAttention::new(&mut store, &mut Init::new(2), "rea", c, true);
            let mut r = rng(12);
            let inputs = vec![random_tensor(&mut r, [1, c, 6, 6], -1.0, 1.0)];
            let hooks = Hooks::default();
            fd_check(&store, &inputs, &|s, v| vec![m.forward(s, &hooks, v[0])], 8, 12, 2, 2)
        }),
    ));
    cases.push((
        "mmf",
        Box::new(move || {
            let mut store = ParamStore::default();
            let m = Mmf::new(&mut store, &mut Init::new(3), "mmf", c);
            let mut r = rng(13);
            let inputs: Vec<_> = (0..2).map(|_| random_tensor(&mut r, [1, c, 8, 8], -1.0, 1.0)).collect();
            fd_check(&store, &inputs, &|s, v| vec![m.forward(s, v[0], v[1])], 6, 12, 2, 3)
        }),
    ));
    cases.push((
        "pas",
        Box::new(move || {
            let cfg = ModelConfig {
                base_channels: c,
                ..ModelConfig::default()
            };
            let (net, store) = Egvd::init::<f64>(cfg, 4).expect("model");
            let mut r = rng(14);
            let inputs = vec![
                random_tensor(&mut r, [1, c, 16, 16], -1.0, 1.0),
                random_tensor(&mut r, [1, c, 16, 16], -1.0, 1.0),
                random_tensor(&mut r, [1, 4 * c, 4, 4], -0.5, 0.5),
                random_tensor(&mut r, [1, 4 * c, 4, 4], -0.5, 0.5),
            ];
            fd_check(
                &store,
                &inputs,
                &|s, v| {
                    let (pyr, _, (h, cell)) = net.pas(s, v[0], Some(v[1]), (v[2], v[3]));
                    vec![pyr[0], pyr[1], pyr[2], h, cell]
                },
                4,
                16,
                2,
                4,
            )
        }),
    ));
    cases.push((
        "reconstruct",
        Box::new(move || {
            let mut store = ParamStore::default();
            let d = Decoder::new(&mut store, &mut Init::new(5), "recon", c, true);
            let mut r = rng(15);
            let inputs = vec![
                random_tensor(&mut r, [1, c, 16, 16], -1.0, 1.0),
                random_tensor(&mut r, [1, 2 * c, 8, 8], -1.0, 1.0),
                random_tensor(&mut r, [1, 4 * c, 4, 4], -1.0, 1.0),
                random_tensor(&mut r, [1, 3, 4, 4], 0.0, 1.0),
                random_tensor(&mut r, [1, 3, 8, 8], 0.0, 1.0),
                random_tensor(&mut r, [1, 3, 16, 16], 0.0, 1.0),
            ];
            let hooks = Hooks::default();
            fd_check(
                &store,
                &inputs,
                &|s, v| d.forward(s, &hooks, [v[0], v[1], v[2]], [v[3], v[4], v[5]], false).images.to_vec(),
                3,
                16,
                2,
                5,
            )
        }),
    ));
    for (name, kind) in [("loss neg_ssim", LossKind::NegSsim), ("loss mae", LossKind::Mae), ("loss mse", LossKind::Mse)] {
        cases.push((
            name,
            Box::new(move || {
                let store = ParamStore::default();
                let mut r = rng(16);
                let inputs = vec![
                    random_tensor(&mut r, [2, 3, 4, 4], 0.0, 1.0),
                    random_tensor(&mut r, [2, 3, 8, 8], 0.0, 1.0),
                    random_tensor(&mut r, [2, 3, 16, 16], 0.0, 1.0),
                ];
                let gt = [[2, 3, 4, 4], [2, 3, 8, 8], [2, 3, 16, 16]].map(|sh| random_tensor(&mut r, sh, 0.0, 1.0));
                fd_check(
                    &store,
                    &inputs,
                    &|s, v| {
                        let g = gt.clone().map(|t| s.g.constant(t));
                        let spec = LossSpec {
                            kind,
                            scales: LossScales::Multi,
                        };
                        vec![multiscale_loss(&mut s.g, v, &g, spec)]
                    },
                    10,
                    0,
                    0,
                    6,
                )
            }),
        ));
    }
    cases
}
