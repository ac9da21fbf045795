//! A small residual convolutional noise predictor with its own reverse mode.
//!
//! Layer vocabulary: 3x3 "same" convolutions, SiLU, dense layers for the
//! timestep embedding, per-channel bias injection and residual adds.
//!
//! ```text
//! h   = conv_in([x_t, PE(uv)])
//! e   = silu(dense_e(sinusoid(t)))
//! for each block k:
//!     h = h + conv_k2(silu(conv_k1(silu(h)) + dense_k(e)))
//! eps = conv_out(silu(h))
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::encoding::encoded_channels;
use crate::error::{Error, Result};
use crate::grid::Grid;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchDescriptor {
    pub data_channels: usize,
    pub hidden: usize,
    pub blocks: usize,
    pub time_embed: usize,
    /// `None` disables conditioning; `Some(0)` feeds raw UV only.
    pub pe_bands: Option<usize>,
    #[serde(default = "default_activation")]
    pub activation: String,
}

fn default_activation() -> String {
    "silu".into()
}

impl Default for ArchDescriptor {
    fn default() -> Self {
        Self {
            data_channels: 7,
            hidden: 16,
            blocks: 2,
            time_embed: 16,
            pe_bands: Some(6),
            activation: default_activation(),
        }
    }
}

impl ArchDescriptor {
    pub fn cond_channels(&self) -> usize {
        self.pe_bands.map_or(0, encoded_channels)
    }

    pub fn input_channels(&self) -> usize {
        self.data_channels + self.cond_channels()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("invalid architecture: {m}")));
        if self.data_channels == 0 {
            return bad("data_channels must be positive");
        }
        if self.hidden == 0 {
            return bad("hidden must be positive");
        }
        if self.time_embed == 0 || !self.time_embed.is_multiple_of(2) {
            return bad("time_embed must be a positive even number");
        }
        if self.pe_bands.is_some_and(|f| f > 16) {
            return bad("pe_bands above 16 exceeds f64 resolution of the encoding");
        }
        if self.activation != "silu" {
            return bad("only the silu activation is supported");
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        Layout::new(self).total
    }

    /// Human-readable layer list.
    pub fn layers(&self) -> Vec<String> {
        let mut v = vec![
            format!("conv3x3 {} -> {}", self.input_channels(), self.hidden),
            format!("dense {} -> {} silu (timestep)", self.time_embed, self.time_embed),
        ];
        for k in 0..self.blocks {
            v.push(format!(
                "block {k}: silu, conv3x3 {h} -> {h}, +dense {e} -> {h}, silu, conv3x3 {h} -> {h}, residual",
                h = self.hidden,
                e = self.time_embed
            ));
        }
        v.push(format!("silu, conv3x3 {} -> {}", self.hidden, self.data_channels));
        v
    }
}

#[derive(Debug, Clone, Copy)]
struct ConvP {
    cin: usize,
    cout: usize,
    w: usize,
    b: usize,
}

impl ConvP {
    fn k(&self) -> usize {
        self.cin * 9
    }
}

#[derive(Debug, Clone, Copy)]
struct DenseP {
    din: usize,
    dout: usize,
    w: usize,
    b: usize,
}

#[derive(Debug, Clone)]
struct Layout {
    conv_in: ConvP,
    emb: DenseP,
    blocks: Vec<(DenseP, ConvP, ConvP)>,
    conv_out: ConvP,
    total: usize,
}

impl Layout {
    fn new(arch: &ArchDescriptor) -> Self {
        let mut off = 0;
        let mut conv = |cin, cout| {
            let p = ConvP {
                cin,
                cout,
                w: off,
                b: off + cout * cin * 9,
            };
            off += cout * cin * 9 + cout;
            p
        };
        let conv_in = conv(arch.input_channels(), arch.hidden);
        let mut blocks = Vec::new();
        for _ in 0..arch.blocks {
            let c1 = conv(arch.hidden, arch.hidden);
            let c2 = conv(arch.hidden, arch.hidden);
            blocks.push((c1, c2));
        }
        let conv_out = conv(arch.hidden, arch.data_channels);
        let mut dense = |din, dout| {
            let p = DenseP {
                din,
                dout,
                w: off,
                b: off + din * dout,
            };
            off += din * dout + dout;
            p
        };
        let emb = dense(arch.time_embed, arch.time_embed);
        let blocks = blocks
            .into_iter()
            .map(|(c1, c2)| (dense(arch.time_embed, arch.hidden), c1, c2))
            .collect();
        Self {
            conv_in,
            emb,
            blocks,
            conv_out,
            total: off,
        }
    }
}

/// Activations recorded by the forward pass.
pub struct Tape {
    h: usize,
    w: usize,
    cols_in: Vec<f64>,
    temb: Vec<f64>,
    emb_pre: Vec<f64>,
    emb: Vec<f64>,
    blocks: Vec<BlockTape>,
    h_out: Vec<f64>,
    cols_out: Vec<f64>,
}

struct BlockTape {
    h_in: Vec<f64>,
    cols_a: Vec<f64>,
    u_pre: Vec<f64>,
    cols_u: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseNet {
    arch: ArchDescriptor,
    layout_total: usize,
    params: Vec<f64>,
}

impl NoiseNet {
    /// Randomly initialized network.
    pub fn new(arch: ArchDescriptor, seed: u64) -> Result<Self> {
        arch.validate()?;
        let layout = Layout::new(&arch);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = vec![0.0; layout.total];
        let mut fill = |start: usize, len: usize, std: f64, params: &mut [f64]| {
            for p in &mut params[start..start + len] {
                let z: f64 = StandardNormal.sample(&mut rng);
                *p = z * std;
            }
        };
        let conv_init = |c: &ConvP| (c.w, c.cout * c.k(), (1.0 / c.k() as f64).sqrt());
        let (s, l, std) = conv_init(&layout.conv_in);
        fill(s, l, std, &mut params);
        for (d, c1, c2) in &layout.blocks {
            let (s, l, std) = conv_init(c1);
            fill(s, l, std, &mut params);
            let (s, l, std) = conv_init(c2);
            fill(s, l, 0.5 * std, &mut params);
            fill(d.w, d.din * d.dout, (1.0 / d.din as f64).sqrt(), &mut params);
        }
        let (s, l, std) = conv_init(&layout.conv_out);
        fill(s, l, 0.5 * std, &mut params);
        let e = layout.emb;
        fill(e.w, e.din * e.dout, (1.0 / e.din as f64).sqrt(), &mut params);
        Ok(Self {
            arch,
            layout_total: layout.total,
            params,
        })
    }

    pub fn from_params(arch: ArchDescriptor, params: Vec<f64>) -> Result<Self> {
        arch.validate()?;
        let total = arch.param_count();
        if params.len() != total {
            return Err(Error::Format(format!(
                "architecture expects {total} parameters, got {}",
                params.len()
            )));
        }
        Ok(Self {
            arch,
            layout_total: total,
            params,
        })
    }

    pub fn arch(&self) -> &ArchDescriptor {
        &self.arch
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.layout_total
    }

    fn layout(&self) -> Layout {
        Layout::new(&self.arch)
    }

    fn check_inputs(&self, x: &Grid, cond: Option<&Grid>) -> Result<()> {
        if x.channels() != self.arch.data_channels {
            return Err(Error::Dimension(format!(
                "network expects {} data channels, got {}",
                self.arch.data_channels,
                x.channels()
            )));
        }
        let want = self.arch.cond_channels();
        match cond {
            None if want == 0 => Ok(()),
            None => Err(Error::Dimension(format!("network expects a {want}-channel condition"))),
            Some(c) if c.channels() != want => Err(Error::Dimension(format!(
                "network expects {want} condition channels, got {}",
                c.channels()
            ))),
            Some(c) if (c.height(), c.width()) != (x.height(), x.width()) => Err(Error::Dimension(format!(
                "condition size {}x{} differs from state {}x{}",
                c.height(),
                c.width(),
                x.height(),
                x.width()
            ))),
            Some(_) => Ok(()),
        }
    }

    pub fn forward(&self, x: &Grid, cond: Option<&Grid>, t: usize) -> Result<Grid> {
        Ok(self.forward_tape(x, cond, t)?.0)
    }

    pub fn forward_tape(&self, x: &Grid, cond: Option<&Grid>, t: usize) -> Result<(Grid, Tape)> {
        self.check_inputs(x, cond)?;
        let lay = self.layout();
        let p = &self.params;
        let (h, w) = (x.height(), x.width());
        let hw = h * w;

        let mut input = Vec::with_capacity(self.arch.input_channels() * hw);
        input.extend_from_slice(x.data());
        if let Some(c) = cond {
            if self.arch.cond_channels() > 0 {
                input.extend_from_slice(c.data());
            }
        }
        let cols_in = im2col(&input, lay.conv_in.cin, h, w);
        let mut hid = conv_apply(p, &lay.conv_in, &cols_in, hw);

        let temb = timestep_features(t, self.arch.time_embed);
        let emb_pre = dense_apply(p, &lay.emb, &temb);
        let emb: Vec<f64> = emb_pre.iter().map(|&v| silu(v)).collect();

        let mut blocks = Vec::with_capacity(lay.blocks.len());
        for (d, c1, c2) in &lay.blocks {
            let h_in = hid.clone();
            let a: Vec<f64> = h_in.iter().map(|&v| silu(v)).collect();
            let cols_a = im2col(&a, c1.cin, h, w);
            let mut u_pre = conv_apply(p, c1, &cols_a, hw);
            let bias = dense_apply(p, d, &emb);
            for (ch, b) in bias.iter().enumerate() {
                for v in &mut u_pre[ch * hw..(ch + 1) * hw] {
                    *v += b;
                }
            }
            let u: Vec<f64> = u_pre.iter().map(|&v| silu(v)).collect();
            let cols_u = im2col(&u, c2.cin, h, w);
            let v = conv_apply(p, c2, &cols_u, hw);
            for (hv, vv) in hid.iter_mut().zip(&v) {
                *hv += vv;
            }
            blocks.push(BlockTape {
                h_in,
                cols_a,
                u_pre,
                cols_u,
            });
        }
        let hs: Vec<f64> = hid.iter().map(|&v| silu(v)).collect();
        let cols_out = im2col(&hs, lay.conv_out.cin, h, w);
        let y = conv_apply(p, &lay.conv_out, &cols_out, hw);
        let tape = Tape {
            h,
            w,
            cols_in,
            temb,
            emb_pre,
            emb,
            blocks,
            h_out: hid,
            cols_out,
        };
        Ok((Grid::from_vec(self.arch.data_channels, h, w, y)?, tape))
    }

    /// Reverse pass. Returns the gradient with respect to the data channels
    /// of the input; accumulates parameter gradients into `param_grad` when
    /// given.
    pub fn backward(&self, tape: &Tape, dy: &Grid, mut param_grad: Option<&mut [f64]>) -> Grid {
        let lay = self.layout();
        let p = &self.params;
        let (h, w) = (tape.h, tape.w);
        let hw = h * w;

        let dcols = conv_backward(
            p,
            &lay.conv_out,
            &tape.cols_out,
            dy.data(),
            hw,
            param_grad.as_deref_mut(),
        );
        let dhs = col2im(&dcols, lay.conv_out.cin, h, w);
        let mut dh: Vec<f64> = dhs.iter().zip(&tape.h_out).map(|(g, &x)| g * dsilu(x)).collect();

        let mut demb = vec![0.0; self.arch.time_embed];
        for ((d, c1, c2), bt) in lay.blocks.iter().zip(&tape.blocks).rev() {
            let dcols_u = conv_backward(p, c2, &bt.cols_u, &dh, hw, param_grad.as_deref_mut());
            let du: Vec<f64> = col2im(&dcols_u, c2.cin, h, w)
                .iter()
                .zip(&bt.u_pre)
                .map(|(g, &x)| g * dsilu(x))
                .collect();
            if let Some(g) = param_grad.as_deref_mut() {
                let dbias: Vec<f64> = du.chunks(hw).map(|c| c.iter().sum()).collect();
                dense_backward(p, d, &tape.emb, &dbias, g, &mut demb);
            }
            let dcols_a = conv_backward(p, c1, &bt.cols_a, &du, hw, param_grad.as_deref_mut());
            let da = col2im(&dcols_a, c1.cin, h, w);
            for ((dhv, g), &x) in dh.iter_mut().zip(&da).zip(&bt.h_in) {
                *dhv += g * dsilu(x);
            }
        }

        let dcols_in = conv_backward(p, &lay.conv_in, &tape.cols_in, &dh, hw, param_grad.as_deref_mut());
        if let Some(g) = param_grad {
            let demb_pre: Vec<f64> = demb.iter().zip(&tape.emb_pre).map(|(d, &x)| d * dsilu(x)).collect();
            let mut sink = vec![0.0; lay.emb.din];
            dense_backward(p, &lay.emb, &tape.temb, &demb_pre, g, &mut sink);
        }
        let dx = col2im(&dcols_in, lay.conv_in.cin, h, w);
        let dc = self.arch.data_channels;
        Grid::from_vec(dc, h, w, dx[..dc * hw].to_vec()).expect("sizes agree")
    }

    /// `upstream^T d eps / dx` by reverse mode.
    pub fn input_vjp(&self, x: &Grid, cond: Option<&Grid>, t: usize, upstream: &Grid) -> Result<Grid> {
        let (y, tape) = self.forward_tape(x, cond, t)?;
        y.check_same_shape(upstream, "vjp upstream")?;
        Ok(self.backward(&tape, upstream, None))
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[inline]
fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

#[inline]
fn dsilu(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

/// Sinusoidal features of an integer timestep.
pub fn timestep_features(t: usize, dim: usize) -> Vec<f64> {
    let half = dim / 2;
    let mut out = vec![0.0; dim];
    for i in 0..half {
        let freq = (-(10000f64).ln() * i as f64 / half as f64).exp();
        let a = t as f64 * freq;
        out[i] = a.sin();
        out[half + i] = a.cos();
    }
    out
}

/// Row-major `c = op(a) op(b) + beta c` with `op(a)` of size `m x k`.
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: &[f64], a_t: bool, b: &[f64], b_t: bool, c: &mut [f64], beta: f64) {
    debug_assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the slices cover the strided extents checked above.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn im2col(input: &[f64], cin: usize, h: usize, w: usize) -> Vec<f64> {
    let hw = h * w;
    let mut cols = vec![0.0; cin * 9 * hw];
    for ci in 0..cin {
        let plane = &input[ci * hw..(ci + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &mut cols[(ci * 9 + ky * 3 + kx) * hw..][..hw];
                let x_lo = 1usize.saturating_sub(kx);
                let x_hi = (w + 1 - kx).min(w);
                if x_lo >= x_hi {
                    continue;
                }
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let src = sy as usize * w + x_lo + kx - 1;
                    row[y * w + x_lo..y * w + x_hi].copy_from_slice(&plane[src..src + (x_hi - x_lo)]);
                }
            }
        }
    }
    cols
}

fn col2im(cols: &[f64], cin: usize, h: usize, w: usize) -> Vec<f64> {
    let hw = h * w;
    let mut out = vec![0.0; cin * hw];
    for ci in 0..cin {
        let plane = &mut out[ci * hw..(ci + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &cols[(ci * 9 + ky * 3 + kx) * hw..][..hw];
                let x_lo = 1usize.saturating_sub(kx);
                let x_hi = (w + 1 - kx).min(w);
                if x_lo >= x_hi {
                    continue;
                }
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let dst = sy as usize * w + x_lo + kx - 1;
                    for (d, s) in plane[dst..dst + (x_hi - x_lo)]
                        .iter_mut()
                        .zip(&row[y * w + x_lo..y * w + x_hi])
                    {
                        *d += s;
                    }
                }
            }
        }
    }
    out
}

fn conv_apply(p: &[f64], c: &ConvP, cols: &[f64], hw: usize) -> Vec<f64> {
    let mut out = vec![0.0; c.cout * hw];
    for (o, chunk) in out.chunks_mut(hw).enumerate() {
        chunk.fill(p[c.b + o]);
    }
    gemm(c.cout, c.k(), hw, &p[c.w..], false, cols, false, &mut out, 1.0);
    out
}

/// Returns `d cols`; accumulates weight/bias gradients when asked.
fn conv_backward(p: &[f64], c: &ConvP, cols: &[f64], dout: &[f64], hw: usize, grad: Option<&mut [f64]>) -> Vec<f64> {
    if let Some(g) = grad {
        gemm(
            c.cout,
            hw,
            c.k(),
            dout,
            false,
            cols,
            true,
            &mut g[c.w..c.w + c.cout * c.k()],
            1.0,
        );
        for (o, chunk) in dout.chunks(hw).enumerate() {
            g[c.b + o] += chunk.iter().sum::<f64>();
        }
    }
    let mut dcols = vec![0.0; c.k() * hw];
    gemm(c.k(), c.cout, hw, &p[c.w..], true, dout, false, &mut dcols, 0.0);
    dcols
}

fn dense_apply(p: &[f64], d: &DenseP, x: &[f64]) -> Vec<f64> {
    (0..d.dout)
        .map(|o| {
            let row = &p[d.w + o * d.din..d.w + (o + 1) * d.din];
            p[d.b + o] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
        })
        .collect()
}

fn dense_backward(p: &[f64], d: &DenseP, x: &[f64], dy: &[f64], g: &mut [f64], dx: &mut [f64]) {
    for o in 0..d.dout {
        g[d.b + o] += dy[o];
        for i in 0..d.din {
            g[d.w + o * d.din + i] += dy[o] * x[i];
            dx[i] += dy[o] * p[d.w + o * d.din + i];
        }
    }
}
