use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layers::{self, Activation, ConvDims, LayerKind, LayerSpec};
use super::params::ParamStore;
use super::tensor::{Real, Tensor};
use super::NumError;

/// Extra flat input concatenated onto the flattened input of a Dense layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuxInput {
    pub dim: usize,
    pub layer: usize,
}

/// A feed-forward stack of layers. Parameters live in a separate [`ParamStore`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    input_shape: Vec<usize>,
    layers: Vec<LayerSpec>,
    aux: Option<AuxInput>,
}

/// Activations saved by [`Network::forward`]: the input and output of every layer.
#[derive(Debug, Clone)]
pub struct ForwardCache<T = f32> {
    inputs: Vec<Tensor<T>>,
    outputs: Vec<Tensor<T>>,
}

impl<T: Real> ForwardCache<T> {
    /// On/off pattern of every ReLU unit in the pass.
    pub fn relu_pattern(&self, net: &Network) -> Vec<bool> {
        net.layers
            .iter()
            .zip(&self.outputs)
            .filter(|(l, _)| l.activation == Activation::ReLU)
            .flat_map(|(_, y)| y.data().iter().map(|v| *v > T::zero()))
            .collect()
    }
}

pub struct Gradients<T = f32> {
    pub params: ParamStore<T>,
    pub input: Tensor<T>,
    pub aux: Option<Tensor<T>>,
}

pub fn weight_name(layer: usize) -> String {
    format!("layer{layer}.weight")
}

pub fn bias_name(layer: usize) -> String {
    format!("layer{layer}.bias")
}

impl Network {
    /// Validates the layer chain for a per-sample `input_shape` (`[c, h, w]` or `[d]`).
    pub fn new(
        input_shape: Vec<usize>,
        layers: Vec<LayerSpec>,
        aux: Option<AuxInput>,
    ) -> Result<Self, NumError> {
        let net = Self {
            input_shape,
            layers,
            aux,
        };
        if let Some(a) = aux {
            match net.layers.get(a.layer).map(|l| l.kind) {
                Some(LayerKind::Dense { .. }) => {}
                _ => {
                    return Err(NumError::Config(format!(
                        "aux input must feed a Dense layer, layer {} is not one",
                        a.layer
                    )))
                }
            }
        }
        net.layer_shapes()?;
        Ok(net)
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn aux(&self) -> Option<AuxInput> {
        self.aux
    }

    pub fn output_shape(&self) -> Vec<usize> {
        self.layer_shapes()
            .expect("validated at construction")
            .pop()
            .expect("at least the input shape")
    }

    pub fn output_len(&self) -> usize {
        self.output_shape().iter().product()
    }

    /// Per-sample shapes: the network input followed by each layer's output.
    pub fn layer_shapes(&self) -> Result<Vec<Vec<usize>>, NumError> {
        let mut shapes = vec![self.input_shape.clone()];
        for (i, layer) in self.layers.iter().enumerate() {
            let cur = shapes.last().unwrap();
            let mut flat: usize = cur.iter().product();
            if let Some(a) = self.aux.filter(|a| a.layer == i) {
                flat += a.dim;
            }
            let next = match layer.kind {
                LayerKind::Conv(g) => {
                    let (c, h, w) = chw(cur).ok_or_else(|| mismatch(i, layer, cur))?;
                    if c != g.in_ch {
                        return Err(mismatch(i, layer, cur));
                    }
                    let (oh, ow) = g.conv_out(h, w).ok_or_else(|| mismatch(i, layer, cur))?;
                    vec![g.out_ch, oh, ow]
                }
                LayerKind::Deconv(g) => {
                    let (c, h, w) = chw(cur).ok_or_else(|| mismatch(i, layer, cur))?;
                    if c != g.in_ch {
                        return Err(mismatch(i, layer, cur));
                    }
                    let (oh, ow) = g.deconv_out(h, w).ok_or_else(|| mismatch(i, layer, cur))?;
                    vec![g.out_ch, oh, ow]
                }
                LayerKind::Dense { in_dim, out_dim } => {
                    if flat != in_dim {
                        return Err(mismatch(i, layer, cur));
                    }
                    vec![out_dim]
                }
                LayerKind::Unflatten {
                    channels,
                    height,
                    width,
                } => {
                    if flat != channels * height * width {
                        return Err(mismatch(i, layer, cur));
                    }
                    vec![channels, height, width]
                }
            };
            shapes.push(next);
        }
        Ok(shapes)
    }

    /// Fresh parameters: He-uniform for ReLU layers, Xavier-uniform otherwise, zero biases.
    pub fn init_params<R: Rng + ?Sized>(&self, rng: &mut R) -> ParamStore<f32> {
        let mut store = ParamStore::new();
        for (i, layer) in self.layers.iter().enumerate() {
            let Some((wshape, bshape)) = layer.param_shapes() else {
                continue;
            };
            let (fan_in, fan_out) = layer.fans();
            let limit = match layer.activation {
                Activation::ReLU => (6.0 / fan_in as f64).sqrt(),
                _ => (6.0 / (fan_in + fan_out) as f64).sqrt(),
            } as f32;
            let n: usize = wshape.iter().product();
            let w: Vec<f32> = (0..n).map(|_| rng.random_range(-limit..=limit)).collect();
            store
                .insert(weight_name(i), Tensor::new(wshape, w).expect("shape"))
                .expect("unique");
            store
                .insert(bias_name(i), Tensor::zeros(&bshape))
                .expect("unique");
        }
        store
    }

    pub fn check_params<T: Real>(&self, params: &ParamStore<T>) -> Result<(), NumError> {
        for (i, layer) in self.layers.iter().enumerate() {
            if let Some((ws, bs)) = layer.param_shapes() {
                for (name, shape) in [(weight_name(i), ws), (bias_name(i), bs)] {
                    let t = params.get(&name)?;
                    if t.shape() != shape.as_slice() {
                        return Err(NumError::ShapeMismatch {
                            context: name,
                            expected: shape,
                            got: t.shape().to_vec(),
                        });
                    }
                }
            }
        }
        Ok(())
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .filter_map(|l| l.param_shapes())
            .map(|(w, b)| w.iter().product::<usize>() + b.iter().product::<usize>())
            .sum()
    }

    /// Runs a batch `[n, ..input_shape]` (plus `[n, aux_dim]` when configured).
    pub fn forward<T: Real>(
        &self,
        params: &ParamStore<T>,
        input: &Tensor<T>,
        aux: Option<&Tensor<T>>,
    ) -> Result<(Tensor<T>, ForwardCache<T>), NumError> {
        let shapes = self.layer_shapes()?;
        let n = input.batch();
        if input.shape()[1..] != shapes[0][..] {
            return Err(NumError::ShapeMismatch {
                context: "network input".into(),
                expected: batched(n, &shapes[0]),
                got: input.shape().to_vec(),
            });
        }
        self.check_aux(n, aux)?;
        let mut scratch = Vec::new();
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut outputs: Vec<Tensor<T>> = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let prev = outputs.last().unwrap_or(input);
            let x = match (self.aux, aux) {
                (Some(a), Some(extra)) if a.layer == i => concat_rows(prev, extra),
                _ => prev.clone(),
            };
            let in_shape = &shapes[i];
            let out_shape = batched(n, &shapes[i + 1]);
            let mut y = Tensor::zeros(&out_shape);
            match layer.kind {
                LayerKind::Conv(g) => {
                    let d = ConvDims {
                        h: in_shape[1],
                        w: in_shape[2],
                        oh: out_shape[2],
                        ow: out_shape[3],
                    };
                    layers::conv_forward(
                        x.data(),
                        n,
                        &g,
                        &d,
                        params.get(&weight_name(i))?.data(),
                        params.get(&bias_name(i))?.data(),
                        y.data_mut(),
                        &mut scratch,
                    );
                }
                LayerKind::Deconv(g) => {
                    let d = ConvDims {
                        h: in_shape[1],
                        w: in_shape[2],
                        oh: out_shape[2],
                        ow: out_shape[3],
                    };
                    layers::deconv_forward(
                        x.data(),
                        n,
                        &g,
                        &d,
                        params.get(&weight_name(i))?.data(),
                        params.get(&bias_name(i))?.data(),
                        y.data_mut(),
                        &mut scratch,
                    );
                }
                LayerKind::Dense { in_dim, out_dim } => {
                    layers::dense_forward(
                        x.data(),
                        n,
                        in_dim,
                        out_dim,
                        params.get(&weight_name(i))?.data(),
                        params.get(&bias_name(i))?.data(),
                        y.data_mut(),
                    );
                }
                LayerKind::Unflatten { .. } => {
                    y.data_mut().copy_from_slice(x.data());
                }
            }
            if layer.activation != Activation::Identity {
                let act = layer.activation;
                y.data_mut().iter_mut().for_each(|v| *v = act.apply(*v));
            }
            inputs.push(x);
            outputs.push(y);
        }
        let out = outputs.last().cloned().unwrap_or_else(|| input.clone());
        Ok((out, ForwardCache { inputs, outputs }))
    }

    /// Convenience forward that drops the cache.
    pub fn predict<T: Real>(
        &self,
        params: &ParamStore<T>,
        input: &Tensor<T>,
        aux: Option<&Tensor<T>>,
    ) -> Result<Tensor<T>, NumError> {
        Ok(self.forward(params, input, aux)?.0)
    }

    /// Backpropagates `dout` (same shape as the forward output) through the cached pass.
    pub fn backward<T: Real>(
        &self,
        params: &ParamStore<T>,
        cache: &ForwardCache<T>,
        dout: &Tensor<T>,
    ) -> Result<Gradients<T>, NumError> {
        self.backward_impl(params, cache, dout, true)
    }

    /// Like [`Network::backward`] but skips the gradient with respect to the
    /// network input; `Gradients::input` is then all zeros.
    pub fn param_gradients<T: Real>(
        &self,
        params: &ParamStore<T>,
        cache: &ForwardCache<T>,
        dout: &Tensor<T>,
    ) -> Result<ParamStore<T>, NumError> {
        Ok(self.backward_impl(params, cache, dout, false)?.params)
    }

    fn backward_impl<T: Real>(
        &self,
        params: &ParamStore<T>,
        cache: &ForwardCache<T>,
        dout: &Tensor<T>,
        input_grad: bool,
    ) -> Result<Gradients<T>, NumError> {
        if cache.outputs.len() != self.layers.len() {
            return Err(NumError::CacheMismatch(format!(
                "cache has {} layers, network has {}",
                cache.outputs.len(),
                self.layers.len()
            )));
        }
        let last = cache.outputs.last().ok_or_else(|| {
            NumError::CacheMismatch("backward through an empty network".into())
        })?;
        if last.shape() != dout.shape() {
            return Err(NumError::ShapeMismatch {
                context: "upstream gradient".into(),
                expected: last.shape().to_vec(),
                got: dout.shape().to_vec(),
            });
        }
        let shapes = self.layer_shapes()?;
        let n = dout.batch();
        let mut grads = ParamStore::new();
        let mut layer_grads: Vec<Option<(Tensor<T>, Tensor<T>)>> = vec![None; self.layers.len()];
        let mut scratch = Vec::new();
        let mut dcols = Vec::new();
        let mut g = dout.clone();
        let mut daux = None;
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let x = &cache.inputs[i];
            let y = &cache.outputs[i];
            if x.batch() != n {
                return Err(NumError::CacheMismatch(format!("layer {i} batch size")));
            }
            if layer.activation != Activation::Identity {
                let act = layer.activation;
                for (gv, &yv) in g.data_mut().iter_mut().zip(y.data()) {
                    *gv = *gv * act.grad_from_output(yv);
                }
            }
            let mut dx = Tensor::zeros(x.shape());
            let want_dx = input_grad || i > 0;
            let in_shape = &shapes[i];
            let out_shape = &shapes[i + 1];
            match layer.kind {
                LayerKind::Conv(geom) => {
                    let (wshape, bshape) = layer.param_shapes().unwrap();
                    let mut dw = Tensor::zeros(&wshape);
                    let mut db = Tensor::zeros(&bshape);
                    let d = ConvDims {
                        h: in_shape[1],
                        w: in_shape[2],
                        oh: out_shape[1],
                        ow: out_shape[2],
                    };
                    layers::conv_backward(
                        x.data(),
                        n,
                        &geom,
                        &d,
                        params.get(&weight_name(i))?.data(),
                        g.data(),
                        dw.data_mut(),
                        db.data_mut(),
                        want_dx.then_some(dx.data_mut()),
                        &mut scratch,
                        &mut dcols,
                    );
                    layer_grads[i] = Some((dw, db));
                }
                LayerKind::Deconv(geom) => {
                    let (wshape, bshape) = layer.param_shapes().unwrap();
                    let mut dw = Tensor::zeros(&wshape);
                    let mut db = Tensor::zeros(&bshape);
                    let d = ConvDims {
                        h: in_shape[1],
                        w: in_shape[2],
                        oh: out_shape[1],
                        ow: out_shape[2],
                    };
                    layers::deconv_backward(
                        x.data(),
                        n,
                        &geom,
                        &d,
                        params.get(&weight_name(i))?.data(),
                        g.data(),
                        dw.data_mut(),
                        db.data_mut(),
                        want_dx.then_some(dx.data_mut()),
                        &mut scratch,
                    );
                    layer_grads[i] = Some((dw, db));
                }
                LayerKind::Dense { in_dim, out_dim } => {
                    let (wshape, bshape) = layer.param_shapes().unwrap();
                    let mut dw = Tensor::zeros(&wshape);
                    let mut db = Tensor::zeros(&bshape);
                    layers::dense_backward(
                        x.data(),
                        n,
                        in_dim,
                        out_dim,
                        params.get(&weight_name(i))?.data(),
                        g.data(),
                        dw.data_mut(),
                        db.data_mut(),
                        want_dx.then_some(dx.data_mut()),
                    );
                    layer_grads[i] = Some((dw, db));
                }
                LayerKind::Unflatten { .. } => {
                    dx.data_mut().copy_from_slice(g.data());
                }
            }
            // Split off the aux columns and restore the previous layer's shape.
            if let Some(a) = self.aux.filter(|a| a.layer == i) {
                let (main, extra) = split_rows(&dx, a.dim);
                daux = Some(extra);
                dx = main;
            }
            g = dx.reshape(batched(n, in_shape))?;
        }
        for (i, lg) in layer_grads.into_iter().enumerate() {
            if let Some((dw, db)) = lg {
                grads.insert(weight_name(i), dw)?;
                grads.insert(bias_name(i), db)?;
            }
        }
        Ok(Gradients {
            params: grads,
            input: g,
            aux: daux,
        })
    }

    fn check_aux<T: Real>(&self, n: usize, aux: Option<&Tensor<T>>) -> Result<(), NumError> {
        match (self.aux, aux) {
            (None, None) => Ok(()),
            (Some(a), Some(t)) if t.shape() == [n, a.dim] => Ok(()),
            (Some(a), Some(t)) => Err(NumError::ShapeMismatch {
                context: "aux input".into(),
                expected: vec![n, a.dim],
                got: t.shape().to_vec(),
            }),
            (Some(a), None) => Err(NumError::ShapeMismatch {
                context: "aux input missing".into(),
                expected: vec![n, a.dim],
                got: vec![],
            }),
            (None, Some(t)) => Err(NumError::ShapeMismatch {
                context: "unexpected aux input".into(),
                expected: vec![],
                got: t.shape().to_vec(),
            }),
        }
    }
}

fn chw(shape: &[usize]) -> Option<(usize, usize, usize)> {
    match shape {
        [c, h, w] => Some((*c, *h, *w)),
        _ => None,
    }
}

fn batched(n: usize, shape: &[usize]) -> Vec<usize> {
    let mut v = vec![n];
    v.extend_from_slice(shape);
    v
}

fn mismatch(i: usize, layer: &LayerSpec, got: &[usize]) -> NumError {
    NumError::LayerShape {
        layer: i,
        kind: format!("{:?}", layer.kind),
        input: got.to_vec(),
    }
}

fn concat_rows<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    let n = a.batch();
    let (da, db) = (a.item_len(), b.item_len());
    let mut data = Vec::with_capacity(n * (da + db));
    for i in 0..n {
        data.extend_from_slice(a.item(i));
        data.extend_from_slice(b.item(i));
    }
    Tensor::new(vec![n, da + db], data).expect("consistent sizes")
}

fn split_rows<T: Real>(t: &Tensor<T>, tail: usize) -> (Tensor<T>, Tensor<T>) {
    let n = t.batch();
    let d = t.item_len();
    let head = d - tail;
    let mut a = Vec::with_capacity(n * head);
    let mut b = Vec::with_capacity(n * tail);
    for i in 0..n {
        let row = t.item(i);
        a.extend_from_slice(&row[..head]);
        b.extend_from_slice(&row[head..]);
    }
    (
        Tensor::new(vec![n, head], a).expect("consistent sizes"),
        Tensor::new(vec![n, tail], b).expect("consistent sizes"),
    )
}
