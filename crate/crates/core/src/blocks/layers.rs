//! Parameter-holding primitives the blocks are assembled from.

use crate::error::Result;
use crate::graph::{Graph, Var};
use crate::init::Initializer;
use crate::ops::{Conv2dSpec, ConvSpec};
use crate::param::{ParamId, ParamStore};
use crate::{Scalar, Tensor};

fn zero_param<T: Scalar>(store: &mut ParamStore<T>, id: ParamId) {
    store.value_mut(id).data_mut().iter_mut().for_each(|v| *v = T::zero());
}

#[derive(Clone, Debug)]
pub struct Conv3dLayer {
    pub weight: ParamId,
    pub bias: ParamId,
    pub spec: ConvSpec,
}

impl Conv3dLayer {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, init: &Initializer, name: &str, spec: ConvSpec) -> Result<Self> {
        let wname = format!("{name}.weight");
        let w = init.kaiming(&wname, &spec.weight_shape(), spec.fan_in())?;
        let weight = store.add(wname, w)?;
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(&[spec.out_channels])?)?;
        Ok(Self { weight, bias, spec })
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<'_, T>, x: Var) -> Result<Var> {
        let w = g.param(self.weight)?;
        let b = g.param(self.bias)?;
        g.conv3d(x, w, b, &self.spec)
    }

    pub fn zero<T: Scalar>(&self, store: &mut ParamStore<T>) {
        zero_param(store, self.weight);
        zero_param(store, self.bias);
    }

    pub fn param_count(&self) -> usize {
        self.spec.weight_count() + self.spec.out_channels
    }
}

#[derive(Clone, Debug)]
pub struct Conv2dLayer {
    pub weight: ParamId,
    pub bias: ParamId,
    pub spec: Conv2dSpec,
}

impl Conv2dLayer {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, init: &Initializer, name: &str, spec: Conv2dSpec) -> Result<Self> {
        let wname = format!("{name}.weight");
        let w = init.kaiming(&wname, &spec.weight_shape(), spec.fan_in())?;
        Self::with_weight(store, name, spec, w)
    }

    /// Conv whose weight is ICNR-initialized for a following `pixel_shuffle(r)`.
    pub fn new_icnr<T: Scalar>(store: &mut ParamStore<T>, init: &Initializer, name: &str, spec: Conv2dSpec, r: usize) -> Result<Self> {
        let w = init.icnr(&format!("{name}.weight"), &spec.weight_shape(), r, spec.fan_in())?;
        Self::with_weight(store, name, spec, w)
    }

    fn with_weight<T: Scalar>(store: &mut ParamStore<T>, name: &str, spec: Conv2dSpec, w: Tensor<T>) -> Result<Self> {
        let weight = store.add(format!("{name}.weight"), w)?;
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(&[spec.out_channels])?)?;
        Ok(Self { weight, bias, spec })
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<'_, T>, x: Var) -> Result<Var> {
        let w = g.param(self.weight)?;
        let b = g.param(self.bias)?;
        g.conv2d(x, w, b, &self.spec)
    }

    pub fn zero<T: Scalar>(&self, store: &mut ParamStore<T>) {
        zero_param(store, self.weight);
        zero_param(store, self.bias);
    }
}

#[derive(Clone, Debug)]
pub struct LinearLayer {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_features: usize,
    pub out_features: usize,
}

impl LinearLayer {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, init: &Initializer, name: &str, in_features: usize, out_features: usize) -> Result<Self> {
        let wname = format!("{name}.weight");
        let w = init.kaiming(&wname, &[out_features, in_features], in_features)?;
        let weight = store.add(wname, w)?;
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(&[out_features])?)?;
        Ok(Self {
            weight,
            bias,
            in_features,
            out_features,
        })
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<'_, T>, x: Var) -> Result<Var> {
        let w = g.param(self.weight)?;
        let b = g.param(self.bias)?;
        g.linear(x, w, b)
    }

    pub fn param_count(&self) -> usize {
        self.in_features * self.out_features + self.out_features
    }
}
