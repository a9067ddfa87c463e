use crate::error::Result;
use crate::nn::{Init, ParamHandle, ParamStore, Session, StatsHandle};
use crate::tensor::ops::{self, BatchNormOptions};
use crate::tensor::{Real, Tensor, Var};

#[derive(Clone, Debug)]
pub struct Conv2d {
    pub weight: ParamHandle,
    pub bias: Option<ParamHandle>,
    pub stride: usize,
    pub padding: usize,
}

impl Conv2d {
    pub fn new<T: Real>(
        store: &mut ParamStore<T>,
        name: &str,
        cin: usize,
        cout: usize,
        kernel: usize,
        stride: usize,
    ) -> Result<Self> {
        let weight = store.register(
            &format!("{name}.weight"),
            &[cout, cin, kernel, kernel],
            Init::HeNormal { fan_in: cin * kernel * kernel },
        )?;
        let bias = store.register(&format!("{name}.bias"), &[cout], Init::Zeros)?;
        Ok(Self { weight, bias: Some(bias), stride, padding: kernel / 2 })
    }

    /// Convolution with no bias term, for use directly ahead of a batch norm.
    pub fn without_bias<T: Real>(
        store: &mut ParamStore<T>,
        name: &str,
        cin: usize,
        cout: usize,
        kernel: usize,
        stride: usize,
    ) -> Result<Self> {
        let weight = store.register(
            &format!("{name}.weight"),
            &[cout, cin, kernel, kernel],
            Init::HeNormal { fan_in: cin * kernel * kernel },
        )?;
        Ok(Self { weight, bias: None, stride, padding: kernel / 2 })
    }

    pub fn forward<'t, T: Real>(&self, s: &mut Session<'t, '_, T>, x: Var<'t, T>) -> Result<Var<'t, T>> {
        let w = s.param(self.weight);
        let b = match self.bias {
            Some(h) => s.param(h),
            None => s.tape().constant(Tensor::zeros(&[w.shape()[0]])),
        };
        ops::conv2d(x, w, b, self.stride, self.padding)
    }

    pub fn handles(&self) -> Vec<ParamHandle> {
        std::iter::once(self.weight).chain(self.bias).collect()
    }
}

/// Stride-2 transposed convolution that exactly doubles the spatial extent.
#[derive(Clone, Debug)]
pub struct ConvTranspose2d {
    pub weight: ParamHandle,
    pub bias: ParamHandle,
}

impl ConvTranspose2d {
    pub fn new<T: Real>(store: &mut ParamStore<T>, name: &str, cin: usize, cout: usize) -> Result<Self> {
        let weight = store.register(
            &format!("{name}.weight"),
            &[cin, cout, 3, 3],
            Init::HeNormal { fan_in: cin * 9 },
        )?;
        let bias = store.register(&format!("{name}.bias"), &[cout], Init::Zeros)?;
        Ok(Self { weight, bias })
    }

    pub fn forward<'t, T: Real>(&self, s: &mut Session<'t, '_, T>, x: Var<'t, T>) -> Result<Var<'t, T>> {
        let (w, b) = (s.param(self.weight), s.param(self.bias));
        ops::conv_transpose2d(x, w, b)
    }

    pub fn handles(&self) -> Vec<ParamHandle> {
        vec![self.weight, self.bias]
    }
}

#[derive(Clone, Debug)]
pub struct BatchNorm2d {
    pub gamma: ParamHandle,
    pub beta: ParamHandle,
    pub stats: StatsHandle,
    pub opts: BatchNormOptions,
}

impl BatchNorm2d {
    pub fn new<T: Real>(store: &mut ParamStore<T>, name: &str, channels: usize, opts: BatchNormOptions) -> Result<Self> {
        let gamma = store.register(&format!("{name}.gamma"), &[channels], Init::Ones)?;
        let beta = store.register(&format!("{name}.beta"), &[channels], Init::Zeros)?;
        let stats = store.register_stats(&format!("{name}.running"), channels)?;
        Ok(Self { gamma, beta, stats, opts })
    }

    pub fn forward<'t, T: Real>(&self, s: &mut Session<'t, '_, T>, x: Var<'t, T>) -> Result<Var<'t, T>> {
        let (g, b) = (s.param(self.gamma), s.param(self.beta));
        let mode = s.mode();
        let opts = self.opts;
        ops::batch_norm(x, g, b, s.stats_mut(self.stats), mode, opts)
    }

    pub fn handles(&self) -> Vec<ParamHandle> {
        vec![self.gamma, self.beta]
    }
}
