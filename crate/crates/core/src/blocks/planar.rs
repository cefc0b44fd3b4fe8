//! 2-D blocks used by the depth generator and its critic.

use crate::error::{invalid, Error, Result};
use crate::graph::{Graph, Var};
use crate::init::Initializer;
use crate::ops::{Activation, Conv2dSpec, InterpMode, PoolMode};
use crate::param::{ParamId, ParamStore};
use crate::{Scalar, Tensor};

use super::layers::Conv2dLayer;

fn shape4(op: &str, s: &[usize]) -> Result<[usize; 4]> {
    match s {
        &[n, c, h, w] => Ok([n, c, h, w]),
        _ => Err(invalid(format!("{op}: expected [N,C,H,W], got {s:?}"))),
    }
}

/// Self-attention over all `H*W` positions with a learned residual gain
/// `gamma` that starts at zero.
#[derive(Clone, Debug)]
pub struct SelfAttention2d {
    pub channels: usize,
    pub query: Conv2dLayer,
    pub key: Conv2dLayer,
    pub value: Conv2dLayer,
    pub gamma: ParamId,
}

impl SelfAttention2d {
    pub fn key_channels(channels: usize) -> usize {
        (channels / 8).max(1)
    }

    pub fn new<T: Scalar>(store: &mut ParamStore<T>, init: &Initializer, name: &str, channels: usize) -> Result<Self> {
        if channels == 0 {
            return Err(invalid("self-attention needs at least one channel"));
        }
        let ck = Self::key_channels(channels);
        Ok(Self {
            channels,
            query: Conv2dLayer::new(store, init, &format!("{name}.query"), Conv2dSpec::new(channels, ck, (1, 1)))?,
            key: Conv2dLayer::new(store, init, &format!("{name}.key"), Conv2dSpec::new(channels, ck, (1, 1)))?,
            value: Conv2dLayer::new(store, init, &format!("{name}.value"), Conv2dSpec::new(channels, channels, (1, 1)))?,
            gamma: store.add(format!("{name}.gamma"), Tensor::scalar(T::zero()))?,
        })
    }

    /// Returns the output and the `[N, HW, HW]` attention map whose row `i`
    /// holds the weights position `i` assigns to every position.
    pub fn forward_with_map<T: Scalar>(&self, g: &mut Graph<'_, T>, x: Var) -> Result<(Var, Var)> {
        let [n, c, h, w] = shape4("self_attention_2d", g.shape(x))?;
        let hw = h * w;
        let ck = Self::key_channels(self.channels);
        let q = self.query.forward(g, x)?;
        let q = g.reshape(q, &[n, ck, hw])?;
        let k = self.key.forward(g, x)?;
        let k = g.reshape(k, &[n, ck, hw])?;
        let v = self.value.forward(g, x)?;
        let v = g.reshape(v, &[n, c, hw])?;
        let scores = g.bmm(q, k, true, false)?;
        let beta = g.softmax(scores)?;
        let o = g.bmm(v, beta, false, true)?;
        let o = g.reshape(o, &[n, c, h, w])?;
        let gamma = g.param(self.gamma)?;
        let o = g.scale(gamma, o)?;
        Ok((g.add(x, o)?, beta))
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<'_, T>, x: Var) -> Result<Var> {
        self.forward_with_map(g, x).map(|(y, _)| y)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DeconvConfig {
    pub in_channels: usize,
    pub skip_channels: usize,
    pub out_channels: usize,
    /// Channels after the sub-pixel shuffle; defaults to half the input.
    pub up_channels: Option<usize>,
    pub attention: bool,
    pub act: Activation,
}

impl DeconvConfig {
    pub fn new(in_channels: usize, skip_channels: usize, out_channels: usize) -> Self {
        Self {
            in_channels,
            skip_channels,
            out_channels,
            up_channels: None,
            attention: false,
            act: Activation::default(),
        }
    }

    pub fn with_attention(mut self, on: bool) -> Self {
        self.attention = on;
        self
    }
}

/// Upsampling decoder stage: ICNR conv, pixel shuffle, right/bottom
/// replicate pad and 2x2 blur, nearest resize onto the skip grid, then a
/// 3x3 conv over the concatenation.
#[derive(Clone, Debug)]
pub struct DeconvBlock {
    pub config: DeconvConfig,
    pub shuffle: Conv2dLayer,
    pub fuse: Conv2dLayer,
    pub attention: Option<SelfAttention2d>,
}

impl DeconvBlock {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, init: &Initializer, name: &str, config: DeconvConfig) -> Result<Self> {
        let up = config.up_channels.unwrap_or((config.in_channels / 2).max(1));
        if config.in_channels == 0 || config.skip_channels == 0 || config.out_channels == 0 || up == 0 {
            return Err(invalid(format!("deconv block channels must be positive: {config:?}")));
        }
        let shuffle = Conv2dLayer::new_icnr(store, init, &format!("{name}.shuffle"), Conv2dSpec::new(config.in_channels, up * 4, (1, 1)), 2)?;
        // padding is done by replication in forward, so border constants survive
        let fuse = Conv2dLayer::new(store, init, &format!("{name}.fuse"), Conv2dSpec::new(up + config.skip_channels, config.out_channels, (3, 3)))?;
        let attention = if config.attention {
            Some(SelfAttention2d::new(store, init, &format!("{name}.attn"), config.out_channels)?)
        } else {
            None
        };
        Ok(Self {
            config: DeconvConfig { up_channels: Some(up), ..config },
            shuffle,
            fuse,
            attention,
        })
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<'_, T>, x: Var, skip: Var) -> Result<Var> {
        let [_, _, h, w] = shape4("deconv_block", g.shape(x))?;
        let [_, _, hs, ws] = shape4("deconv_block skip", g.shape(skip))?;
        if hs < 2 * h || ws < 2 * w {
            return Err(invalid(format!("deconv_block: skip extents {hs}x{ws} smaller than upsampled {}x{}", 2 * h, 2 * w)));
        }
        let y = self.shuffle.forward(g, x)?;
        let y = g.pixel_shuffle(y, 2)?;
        let y = g.pad_replicate(y, &[(0, 1), (0, 1)])?;
        let y = g.pool2d(y, PoolMode::Avg, 2, 1)?;
        let y = g.interpolate(y, (hs, ws), InterpMode::Nearest)?;
        if g.shape(y)[2..] != [hs, ws] {
            return Err(Error::Internal(format!("deconv_block: resized to {:?}, skip is {hs}x{ws}", g.shape(y))));
        }
        let y = g.concat(&[y, skip], 1)?;
        let y = g.pad_replicate(y, &[(1, 1), (1, 1)])?;
        let y = self.fuse.forward(g, y)?;
        let y = g.shifted_leaky_relu(y, self.config.act);
        match &self.attention {
            Some(a) => a.forward(g, y),
            None => Ok(y),
        }
    }
}

/// Channel dropout, conv, activation.
#[derive(Clone, Debug)]
pub struct DoConv {
    pub conv: Conv2dLayer,
    pub p: f64,
    pub act: Activation,
}

impl DoConv {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, init: &Initializer, name: &str, spec: Conv2dSpec, p: f64, act: Activation) -> Result<Self> {
        if !(0.0..1.0).contains(&p) {
            return Err(invalid(format!("doconv dropout must lie in [0, 1), got {p}")));
        }
        Ok(Self {
            conv: Conv2dLayer::new(store, init, &format!("{name}.conv"), spec)?,
            p,
            act,
        })
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<'_, T>, x: Var) -> Result<Var> {
        let y = g.dropout2d(x, self.p)?;
        let y = self.conv.forward(g, y)?;
        Ok(g.shifted_leaky_relu(y, self.act))
    }
}
