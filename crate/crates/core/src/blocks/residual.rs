//! Residual 3-D blocks: pseudo-3D variant A and the bottleneck rC3D block.

use crate::error::{invalid, Result};
use crate::graph::{Graph, Var};
use crate::init::Initializer;
use crate::ops::{Activation, ConvSpec, PoolMode, PoolSpec};
use crate::param::ParamStore;
use crate::Scalar;

use super::layers::Conv3dLayer;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ResidualConfig {
    pub in_channels: usize,
    pub out_channels: usize,
    /// Branch width; each block has its own default when `None`.
    pub mid_channels: Option<usize>,
    pub act: Activation,
}

impl ResidualConfig {
    pub fn new(in_channels: usize, out_channels: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            mid_channels: None,
            act: Activation::default(),
        }
    }

    pub fn with_mid(mut self, mid: usize) -> Self {
        self.mid_channels = Some(mid);
        self
    }

    pub fn with_act(mut self, act: Activation) -> Self {
        self.act = act;
        self
    }

    fn validate(&self, mid: usize) -> Result<()> {
        if self.in_channels == 0 || self.out_channels == 0 || mid == 0 {
            return Err(invalid(format!(
                "block channels must be positive: in {} out {} mid {mid}",
                self.in_channels, self.out_channels
            )));
        }
        Ok(())
    }
}

fn pw(c_in: usize, c_out: usize) -> ConvSpec {
    ConvSpec::new(c_in, c_out, (1, 1, 1))
}

fn shape5(op: &str, s: &[usize]) -> Result<[usize; 5]> {
    match s {
        &[n, c, t, h, w] => Ok([n, c, t, h, w]),
        _ => Err(invalid(format!("{op}: expected [N,C,T,H,W], got {s:?}"))),
    }
}

/// Identity path: plain when the channel counts agree, 1x1x1 conv otherwise.
fn resize_path<T: Scalar>(store: &mut ParamStore<T>, init: &Initializer, name: &str, cfg: &ResidualConfig) -> Result<Option<Conv3dLayer>> {
    if cfg.in_channels == cfg.out_channels {
        return Ok(None);
    }
    Conv3dLayer::new(store, init, &format!("{name}.resize"), pw(cfg.in_channels, cfg.out_channels)).map(Some)
}

fn join<T: Scalar>(g: &mut Graph<'_, T>, x: Var, branch: Var, resize: Option<&Conv3dLayer>, act: Activation) -> Result<Var> {
    let id = match resize {
        Some(l) => l.forward(g, x)?,
        None => x,
    };
    let sum = g.add(id, branch)?;
    Ok(g.shifted_leaky_relu(sum, act))
}

/// Pseudo-3D block A: a factorised 1x3x3 spatial then 3x1x1 temporal filter
/// between two pointwise convs, added to the identity.
#[derive(Clone, Debug)]
pub struct P3dBlockA {
    pub config: ResidualConfig,
    pub expand: Conv3dLayer,
    pub spatial: Conv3dLayer,
    pub temporal: Conv3dLayer,
    pub blend: Conv3dLayer,
    pub resize: Option<Conv3dLayer>,
}

impl P3dBlockA {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, init: &Initializer, name: &str, config: ResidualConfig) -> Result<Self> {
        let mid = config.mid_channels.unwrap_or(config.out_channels);
        config.validate(mid)?;
        let (c, co) = (config.in_channels, config.out_channels);
        Ok(Self {
            expand: Conv3dLayer::new(store, init, &format!("{name}.expand"), pw(c, mid))?,
            spatial: Conv3dLayer::new(store, init, &format!("{name}.spatial"), ConvSpec::same(mid, mid, (1, 3, 3)))?,
            temporal: Conv3dLayer::new(store, init, &format!("{name}.temporal"), ConvSpec::same(mid, mid, (3, 1, 1)))?,
            blend: Conv3dLayer::new(store, init, &format!("{name}.blend"), pw(mid, co))?,
            resize: resize_path(store, init, name, &config)?,
            config,
        })
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<'_, T>, x: Var) -> Result<Var> {
        let act = self.config.act;
        let mut h = x;
        for layer in [&self.expand, &self.spatial, &self.temporal] {
            let y = layer.forward(g, h)?;
            h = g.shifted_leaky_relu(y, act);
        }
        let branch = self.blend.forward(g, h)?;
        join(g, x, branch, self.resize.as_ref(), act)
    }

    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let [n, c, t, h, w] = shape5("p3d_block_a", input)?;
        if c != self.config.in_channels {
            return Err(invalid(format!("p3d_block_a: expected {} channels, got {c}", self.config.in_channels)));
        }
        // the factorised kernels need no minimum extent thanks to padding
        Ok(vec![n, self.config.out_channels, t, h, w])
    }

    /// Zeroes the branch's last conv, leaving `act(identity)`.
    pub fn zero_branch_terminal<T: Scalar>(&self, store: &mut ParamStore<T>) {
        self.blend.zero(store);
    }

    pub fn param_count(&self) -> usize {
        let branch = [&self.expand, &self.spatial, &self.temporal, &self.blend].iter().map(|l| l.param_count()).sum::<usize>();
        branch + self.resize.as_ref().map_or(0, |l| l.param_count())
    }
}

/// Bottleneck block: compress to `c_mid`, joint 3x3x3 filter, decompress.
/// With `pool` set it is followed by spatial-only 2x2 max pooling.
#[derive(Clone, Debug)]
pub struct Rc3dBlock {
    pub config: ResidualConfig,
    pub compress: Conv3dLayer,
    pub joint: Conv3dLayer,
    pub decompress: Conv3dLayer,
    pub resize: Option<Conv3dLayer>,
    pub pool: bool,
}

impl Rc3dBlock {
    pub fn default_mid(out_channels: usize) -> usize {
        (out_channels / 4).max(1)
    }

    pub fn new<T: Scalar>(store: &mut ParamStore<T>, init: &Initializer, name: &str, config: ResidualConfig, pool: bool) -> Result<Self> {
        let mid = config.mid_channels.unwrap_or(Self::default_mid(config.out_channels));
        config.validate(mid)?;
        let (c, co) = (config.in_channels, config.out_channels);
        Ok(Self {
            compress: Conv3dLayer::new(store, init, &format!("{name}.compress"), pw(c, mid))?,
            joint: Conv3dLayer::new(store, init, &format!("{name}.joint"), ConvSpec::same(mid, mid, (3, 3, 3)))?,
            decompress: Conv3dLayer::new(store, init, &format!("{name}.decompress"), pw(mid, co))?,
            resize: resize_path(store, init, name, &config)?,
            pool,
            config,
        })
    }

    pub fn pool_spec() -> PoolSpec {
        PoolSpec::new(PoolMode::Max, (1, 2, 2))
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<'_, T>, x: Var) -> Result<Var> {
        let act = self.config.act;
        let a = self.compress.forward(g, x)?;
        let a = g.shifted_leaky_relu(a, act);
        let b = self.joint.forward(g, a)?;
        let b = g.shifted_leaky_relu(b, act);
        let branch = self.decompress.forward(g, b)?;
        let y = join(g, x, branch, self.resize.as_ref(), act)?;
        if self.pool {
            g.pool3d(y, &Self::pool_spec())
        } else {
            Ok(y)
        }
    }

    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let [n, c, t, h, w] = shape5("rc3d_block", input)?;
        if c != self.config.in_channels {
            return Err(invalid(format!("rc3d_block: expected {} channels, got {c}", self.config.in_channels)));
        }
        let (t, h, w) = if self.pool { Self::pool_spec().output_extents((t, h, w))? } else { (t, h, w) };
        Ok(vec![n, self.config.out_channels, t, h, w])
    }

    pub fn zero_branch_terminal<T: Scalar>(&self, store: &mut ParamStore<T>) {
        self.decompress.zero(store);
    }

    pub fn param_count(&self) -> usize {
        let branch = [&self.compress, &self.joint, &self.decompress].iter().map(|l| l.param_count()).sum::<usize>();
        branch + self.resize.as_ref().map_or(0, |l| l.param_count())
    }
}

/// Channel concatenation of global max and global average pooling:
/// `[N,C,T,H,W] -> [N,2C,1,1,1]`, max half first.
pub fn stack_pool<T: Scalar>(g: &mut Graph<'_, T>, x: Var) -> Result<Var> {
    let mx = g.adaptive_pool3d(x, PoolMode::Max, (1, 1, 1))?;
    let av = g.adaptive_pool3d(x, PoolMode::Avg, (1, 1, 1))?;
    g.concat(&[mx, av], 1)
}
