//! Depth generator (U-Net) and its critic.

use crate::blocks::{Conv2dLayer, DeconvBlock, DeconvConfig, DoConv, SelfAttention2d};
use crate::error::{invalid, Result};
use crate::graph::{Graph, Var};
use crate::ops::{Activation, Conv2dSpec, InterpMode, PoolMode};
use crate::param::ParamStore;
use crate::{Scalar, Tensor};

use super::network::ModelOptions;
use super::profile::ScaleProfile;

fn shape4(op: &str, s: &[usize]) -> Result<[usize; 4]> {
    match s {
        &[n, c, h, w] => Ok([n, c, h, w]),
        _ => Err(invalid(format!("{op}: expected [N,C,H,W], got {s:?}"))),
    }
}

/// RGB frame to depth map in `[0, 1]`.
///
/// Encoder: a full-resolution stem and four stride-2 stages. Decoder: three
/// upsampling blocks over the stage skips (self-attention on the innermost),
/// then a bilinear resize to full resolution, a dense skip from the stem and
/// a small conv head squashed by a sigmoid.
#[derive(Clone, Debug)]
pub struct UNetGenerator<T: Scalar> {
    pub store: ParamStore<T>,
    pub act: Activation,
    pub stem: Conv2dLayer,
    pub down: Vec<Conv2dLayer>,
    pub up: Vec<DeconvBlock>,
    pub refine: Conv2dLayer,
    pub head: Conv2dLayer,
}

impl<T: Scalar> UNetGenerator<T> {
    pub fn forward<U: Scalar>(&self, g: &mut Graph<'_, U>, x: Var) -> Result<Var> {
        let [_, c, h, w] = shape4("generator", g.shape(x))?;
        if c != 3 {
            return Err(invalid(format!("generator expects 3 input channels, got {c}")));
        }
        if h % 16 != 0 || w % 16 != 0 {
            return Err(invalid(format!("generator input extents {h}x{w} must be multiples of 16")));
        }
        let conv_act = |g: &mut Graph<'_, U>, l: &Conv2dLayer, v: Var| -> Result<Var> {
            let y = l.forward(g, v)?;
            Ok(g.shifted_leaky_relu(y, self.act))
        };
        let stem = conv_act(g, &self.stem, x)?;
        let mut skips = vec![stem];
        for l in &self.down {
            let prev = *skips.last().unwrap();
            skips.push(conv_act(g, l, prev)?);
        }
        // skips: stem, H/2, H/4, H/8, H/16
        let mut y = skips[4];
        for (block, &skip) in self.up.iter().zip(skips[1..4].iter().rev()) {
            y = block.forward(g, y, skip)?;
        }
        let y = g.interpolate(y, (h, w), InterpMode::Bilinear)?;
        let y = g.concat(&[y, skips[0]], 1)?;
        let y = conv_act(g, &self.refine, y)?;
        let y = self.head.forward(g, y)?;
        Ok(g.sigmoid(y))
    }

    /// Eval-mode depth for a batch of frames.
    pub fn predict(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g = Graph::new(&self.store);
        let v = g.input(x.clone());
        let y = self.forward(&mut g, v)?;
        Ok(g.value(y).clone())
    }
}

pub fn build_unet_generator<T: Scalar>(profile: &ScaleProfile, opts: &ModelOptions) -> Result<UNetGenerator<T>> {
    profile.validate()?;
    let init = opts.initializer();
    let w = profile.generator_widths;
    let mut store = ParamStore::new();
    let stem = Conv2dLayer::new(&mut store, &init, "gen.stem", Conv2dSpec::same(3, w[0], 3))?;
    let down = (0..4)
        .map(|i| {
            let spec = Conv2dSpec::same(w[i], w[i + 1], 3).with_stride((2, 2));
            Conv2dLayer::new(&mut store, &init, &format!("gen.down{i}"), spec)
        })
        .collect::<Result<Vec<_>>>()?;
    let up = (0..3)
        .map(|i| {
            let (cin, cskip) = (w[4 - i], w[3 - i]);
            let mut cfg = DeconvConfig::new(cin, cskip, cskip).with_attention(i == 0);
            cfg.act = opts.act;
            DeconvBlock::new(&mut store, &init, &format!("gen.up{i}"), cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    let refine = Conv2dLayer::new(&mut store, &init, "gen.refine", Conv2dSpec::same(w[1] + w[0], w[0], 3))?;
    let head = Conv2dLayer::new(&mut store, &init, "gen.head", Conv2dSpec::new(w[0], 1, (1, 1)))?;
    Ok(UNetGenerator {
        store,
        act: opts.act,
        stem,
        down,
        up,
        refine,
        head,
    })
}

/// Scores depth maps as real (high) or generated (low).
#[derive(Clone, Debug)]
pub struct Critic<T: Scalar> {
    pub store: ParamStore<T>,
    pub entry: DoConv,
    pub inner: DoConv,
    pub attention: Option<SelfAttention2d>,
    pub down: Vec<DoConv>,
    pub head: Conv2dLayer,
}

impl<T: Scalar> Critic<T> {
    /// Per-location logits `[N,1,h,w]`.
    pub fn score_map<U: Scalar>(&self, g: &mut Graph<'_, U>, x: Var) -> Result<Var> {
        let [_, c, h, w] = shape4("critic", g.shape(x))?;
        if c != 1 || h < 8 || w < 8 {
            return Err(invalid(format!("critic expects [N,1,H,W] with H,W >= 8, got {:?}", g.shape(x))));
        }
        let a = self.entry.forward(g, x)?;
        let b = self.inner.forward(g, a)?;
        let mut y = g.concat(&[a, b], 1)?;
        if let Some(att) = &self.attention {
            y = att.forward(g, y)?;
        }
        for d in &self.down {
            y = d.forward(g, y)?;
        }
        self.head.forward(g, y)
    }

    /// One logit per image: the score map averaged over its grid.
    pub fn forward<U: Scalar>(&self, g: &mut Graph<'_, U>, x: Var) -> Result<Var> {
        let m = self.score_map(g, x)?;
        let [n, _, h, w] = shape4("critic", g.shape(m))?;
        let m = g.reshape(m, &[n, 1, 1, h, w])?;
        let m = g.adaptive_pool3d(m, PoolMode::Avg, (1, 1, 1))?;
        g.reshape(m, &[n, 1])
    }
}

pub fn build_critic<T: Scalar>(profile: &ScaleProfile, opts: &ModelOptions, attention: bool) -> Result<Critic<T>> {
    profile.validate()?;
    let init = opts.initializer();
    let [c0, c1, c2] = profile.critic_widths;
    let p = profile.critic_dropout;
    let mut store = ParamStore::new();
    let stride2 = |cin, cout| Conv2dSpec::same(cin, cout, 3).with_stride((2, 2));
    let entry = DoConv::new(&mut store, &init, "critic.entry", stride2(1, c0), 0.0, opts.act)?;
    let inner = DoConv::new(&mut store, &init, "critic.inner", Conv2dSpec::same(c0, c0, 3), p, opts.act)?;
    let attention = if attention {
        Some(SelfAttention2d::new(&mut store, &init, "critic.attn", 2 * c0)?)
    } else {
        None
    };
    let down = vec![
        DoConv::new(&mut store, &init, "critic.down0", stride2(2 * c0, c1), p, opts.act)?,
        DoConv::new(&mut store, &init, "critic.down1", stride2(c1, c2), p, opts.act)?,
    ];
    let head = Conv2dLayer::new(&mut store, &init, "critic.head", Conv2dSpec::same(c2, 1, 3))?;
    Ok(Critic {
        store,
        entry,
        inner,
        attention,
        down,
        head,
    })
}
