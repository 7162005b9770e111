//! Test-only oracles, written independently of the library's matrix code.

#![allow(dead_code)]

use chaoscast::model::{ModelParams, PositionalEncoding};

/// Look up a tensor of `p` by name.
pub fn tensor<'a>(p: &'a ModelParams, name: &str) -> &'a [f64] {
    let t = p
        .layout()
        .tensors
        .iter()
        .find(|t| t.name == name)
        .unwrap_or_else(|| panic!("no tensor {name}"));
    let len: usize = t.shape.iter().product();
    &p.data[t.offset..t.offset + len]
}

fn matvec(x: &[f64], w: &[f64], b: &[f64], cols: usize) -> Vec<f64> {
    (0..cols)
        .map(|c| b[c] + x.iter().enumerate().map(|(r, xr)| xr * w[r * cols + c]).sum::<f64>())
        .collect()
}

fn norm(x: &[f64], g: &[f64], b: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let mu = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n;
    x.iter().enumerate().map(|(i, v)| (v - mu) / (var + 1e-5).sqrt() * g[i] + b[i]).collect()
}

fn gelu(x: f64) -> f64 {
    let c = (2.0 / std::f64::consts::PI).sqrt();
    0.5 * x * (1.0 + (c * (x + 0.044715 * x.powi(3))).tanh())
}

/// Straight-line scalar evaluation of the decoder for one sequence.
pub fn scalar_forward(p: &ModelParams, x: &[[f64; 3]]) -> Vec<[f64; 3]> {
    let cfg = *p.config();
    let d = cfg.d_model;
    let dh = d / cfg.n_heads;
    let t_len = x.len();
    let mut h: Vec<Vec<f64>> = x
        .iter()
        .enumerate()
        .map(|(t, xt)| {
            let mut v = matvec(xt, tensor(p, "embed.w"), tensor(p, "embed.b"), d);
            for (c, vc) in v.iter_mut().enumerate() {
                *vc += match cfg.positional {
                    PositionalEncoding::Learned => tensor(p, "pos")[t * d + c],
                    PositionalEncoding::Sinusoidal => {
                        let i = (c / 2) as f64;
                        let angle = t as f64 / 10_000f64.powf(2.0 * i / d as f64);
                        if c % 2 == 0 { angle.sin() } else { angle.cos() }
                    }
                };
            }
            v
        })
        .collect();
    for l in 0..cfg.n_layers {
        let n = |s: &str| format!("layers.{l}.{s}");
        let a: Vec<Vec<f64>> = h.iter().map(|r| norm(r, tensor(p, &n("ln1.gain")), tensor(p, &n("ln1.bias")))).collect();
        let proj = |w: &str, b: &str| -> Vec<Vec<f64>> {
            a.iter().map(|r| matvec(r, tensor(p, &n(w)), tensor(p, &n(b)), d)).collect()
        };
        let (q, k, v) = (proj("attn.w_q", "attn.b_q"), proj("attn.w_k", "attn.b_k"), proj("attn.w_v", "attn.b_v"));
        let mut o = vec![vec![0.0; d]; t_len];
        for head in 0..cfg.n_heads {
            let cols = head * dh..(head + 1) * dh;
            for i in 0..t_len {
                let scores: Vec<f64> = (0..=i)
                    .map(|j| cols.clone().map(|c| q[i][c] * k[j][c]).sum::<f64>() / (dh as f64).sqrt())
                    .collect();
                let m = scores.iter().cloned().fold(f64::MIN, f64::max);
                let e: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
                let z: f64 = e.iter().sum();
                for c in cols.clone() {
                    o[i][c] = (0..=i).map(|j| e[j] / z * v[j][c]).sum();
                }
            }
        }
        for i in 0..t_len {
            let att = matvec(&o[i], tensor(p, &n("attn.w_o")), tensor(p, &n("attn.b_o")), d);
            for c in 0..d {
                h[i][c] += att[c];
            }
            let m = norm(&h[i], tensor(p, &n("ln2.gain")), tensor(p, &n("ln2.bias")));
            let u = matvec(&m, tensor(p, &n("ffn.w_1")), tensor(p, &n("ffn.b_1")), cfg.d_ff);
            let g: Vec<f64> = u.into_iter().map(gelu).collect();
            let f = matvec(&g, tensor(p, &n("ffn.w_2")), tensor(p, &n("ffn.b_2")), d);
            for c in 0..d {
                h[i][c] += f[c];
            }
        }
    }
    h.iter()
        .map(|r| {
            let y = matvec(r, tensor(p, "out.w"), tensor(p, "out.b"), 3);
            [y[0], y[1], y[2]]
        })
        .collect()
}

/// Deterministic pseudo-random normal-ish values (Box–Muller on a tiny LCG),
/// to avoid sharing the library's RNG plumbing.
pub struct TestRng(u64);

impl TestRng {
    pub fn new(seed: u64) -> Self {
        Self(seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407))
    }

    pub fn uniform(&mut self) -> f64 {
        self.0 = self.0.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((self.0 >> 11) as f64 + 0.5) / (1u64 << 53) as f64
    }

    pub fn normal(&mut self) -> f64 {
        let (u1, u2) = (self.uniform(), self.uniform());
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }
}
