use super::network::{Gradients, Network};
use super::params::ParamStore;
use super::tensor::{Real, Tensor};
use super::NumError;

/// Scalar loss over a network output, evaluable in either precision.
pub trait ScalarLoss {
    /// Loss value and its gradient with respect to `output`.
    fn eval<T: Real>(&self, output: &Tensor<T>) -> (T, Tensor<T>);
}

/// Mean squared error against a fixed target.
pub struct MseLoss {
    pub target: Vec<f64>,
}

impl ScalarLoss for MseLoss {
    fn eval<T: Real>(&self, output: &Tensor<T>) -> (T, Tensor<T>) {
        let n = T::of_f64(output.len() as f64);
        let mut loss = T::zero();
        let mut grad = Tensor::zeros(output.shape());
        for ((g, &y), &t) in grad
            .data_mut()
            .iter_mut()
            .zip(output.data())
            .zip(&self.target)
        {
            let d = y - T::of_f64(t);
            loss += d * d / n;
            *g = (d + d) / n;
        }
        (loss, grad)
    }
}

/// `sum_i w_i * y_i`: a linear probe whose gradient is `w`.
pub struct LinearLoss {
    pub weights: Vec<f64>,
}

impl ScalarLoss for LinearLoss {
    fn eval<T: Real>(&self, output: &Tensor<T>) -> (T, Tensor<T>) {
        let mut loss = T::zero();
        let mut grad = Tensor::zeros(output.shape());
        for ((g, &y), &w) in grad
            .data_mut()
            .iter_mut()
            .zip(output.data())
            .zip(&self.weights)
        {
            loss += y * T::of_f64(w);
            *g = T::of_f64(w);
        }
        (loss, grad)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradReport {
    /// `(parameter name, max relative error)` in store order. The input
    /// gradient is reported under the name `"input"`.
    pub errors: Vec<(String, f64)>,
    /// Elements skipped because a `±h` probe flipped some ReLU unit.
    pub skipped_kinks: usize,
    pub tol: f64,
    pub pass: bool,
}

impl GradReport {
    pub fn max_error(&self) -> f64 {
        self.errors.iter().map(|(_, e)| *e).fold(0.0, f64::max)
    }
}

/// Relative error with an absolute floor so that near-zero pairs do not blow up.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-4)
}

/// Compares the f32 analytic backward pass against central finite differences
/// computed with an f64 forward pass.
pub fn grad_check<L: ScalarLoss>(
    net: &Network,
    params: &ParamStore<f32>,
    input: &Tensor<f32>,
    aux: Option<&Tensor<f32>>,
    loss: &L,
    h: f64,
    tol: f64,
) -> Result<GradReport, NumError> {
    grad_check_with(net, params, input, aux, loss, h, tol, |p, x, a| {
        let (out, cache) = net.forward(p, x, a)?;
        let (_, dout) = loss.eval(&out);
        net.backward(p, &cache, &dout)
    })
}

/// [`grad_check`] with a caller-supplied analytic gradient routine.
#[allow(clippy::too_many_arguments)]
pub fn grad_check_with<L, F>(
    net: &Network,
    params: &ParamStore<f32>,
    input: &Tensor<f32>,
    aux: Option<&Tensor<f32>>,
    loss: &L,
    h: f64,
    tol: f64,
    analytic: F,
) -> Result<GradReport, NumError>
where
    L: ScalarLoss,
    F: Fn(&ParamStore<f32>, &Tensor<f32>, Option<&Tensor<f32>>) -> Result<Gradients<f32>, NumError>,
{
    let grads = analytic(params, input, aux)?;
    let p64: ParamStore<f64> = params.cast();
    let x64: Tensor<f64> = input.cast();
    let a64: Option<Tensor<f64>> = aux.map(|a| a.cast());
    let eval = |p: &ParamStore<f64>, x: &Tensor<f64>| -> Result<(f64, Vec<bool>), NumError> {
        let (out, cache) = net.forward(p, x, a64.as_ref())?;
        Ok((loss.eval(&out).0, cache.relu_pattern(net)))
    };
    let (_, base_pattern) = eval(&p64, &x64)?;
    let mut skipped_kinks = 0;
    // Central difference, or None when the probe straddles a ReLU kink.
    let central = |up: (f64, Vec<bool>), down: (f64, Vec<bool>)| -> Option<f64> {
        (up.1 == base_pattern && down.1 == base_pattern).then(|| (up.0 - down.0) / (2.0 * h))
    };

    let mut errors = Vec::new();
    let names: Vec<String> = params.names().map(str::to_string).collect();
    let mut probe = p64.clone();
    for name in &names {
        let g = grads.params.get(name)?;
        let mut worst = 0.0f64;
        for i in 0..g.len() {
            let orig = probe.get(name)?.data()[i];
            probe.get_mut(name)?.data_mut()[i] = orig + h;
            let up = eval(&probe, &x64)?;
            probe.get_mut(name)?.data_mut()[i] = orig - h;
            let down = eval(&probe, &x64)?;
            probe.get_mut(name)?.data_mut()[i] = orig;
            match central(up, down) {
                Some(numeric) => worst = worst.max(relative_error(g.data()[i] as f64, numeric)),
                None => skipped_kinks += 1,
            }
        }
        errors.push((name.clone(), worst));
    }

    let mut xp = x64.clone();
    let mut worst = 0.0f64;
    for i in 0..xp.len() {
        let orig = xp.data()[i];
        xp.data_mut()[i] = orig + h;
        let up = eval(&p64, &xp)?;
        xp.data_mut()[i] = orig - h;
        let down = eval(&p64, &xp)?;
        xp.data_mut()[i] = orig;
        match central(up, down) {
            Some(numeric) => {
                worst = worst.max(relative_error(grads.input.data()[i] as f64, numeric))
            }
            None => skipped_kinks += 1,
        }
    }
    errors.push(("input".to_string(), worst));

    let pass = errors.iter().all(|(_, e)| *e <= tol);
    Ok(GradReport {
        errors,
        skipped_kinks,
        tol,
        pass,
    })
}

/// Finite-difference check of an arbitrary scalar function of a parameter store.
/// `eval` returns the f64 loss and an activation pattern; probes that change the
/// pattern are skipped as kink crossings.
pub fn check_store_gradients<F>(
    params: &ParamStore<f32>,
    analytic: &ParamStore<f32>,
    h: f64,
    tol: f64,
    mut eval: F,
) -> Result<GradReport, NumError>
where
    F: FnMut(&ParamStore<f64>) -> Result<(f64, Vec<bool>), NumError>,
{
    params.check_compatible(analytic)?;
    let mut probe: ParamStore<f64> = params.cast();
    let (_, base) = eval(&probe)?;
    let mut skipped_kinks = 0;
    let mut errors = Vec::new();
    let names: Vec<String> = params.names().map(str::to_string).collect();
    for name in &names {
        let g = analytic.get(name)?;
        let mut worst = 0.0f64;
        for i in 0..g.len() {
            let orig = probe.get(name)?.data()[i];
            probe.get_mut(name)?.data_mut()[i] = orig + h;
            let up = eval(&probe)?;
            probe.get_mut(name)?.data_mut()[i] = orig - h;
            let down = eval(&probe)?;
            probe.get_mut(name)?.data_mut()[i] = orig;
            if up.1 != base || down.1 != base {
                skipped_kinks += 1;
                continue;
            }
            let numeric = (up.0 - down.0) / (2.0 * h);
            worst = worst.max(relative_error(g.data()[i] as f64, numeric));
        }
        errors.push((name.clone(), worst));
    }
    let pass = errors.iter().all(|(_, e)| *e <= tol);
    Ok(GradReport {
        errors,
        skipped_kinks,
        tol,
        pass,
    })
}
