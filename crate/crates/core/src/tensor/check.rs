use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{ParamStore, Tape, Tensor, TensorError, Var};

/// Gradient entries smaller than this are compared on an absolute scale.
const RELATIVE_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub checked: usize,
    pub passed: bool,
}

fn discrepancy(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

fn scalar_of(v: Var<'_>) -> Result<f64, TensorError> {
    let t = v.value();
    if t.len() != 1 {
        return Err(TensorError::InvalidArgument(format!("grad_check needs a scalar, got {:?}", t.shape())));
    }
    let y = t.item();
    if !y.is_finite() {
        return Err(TensorError::NonFinite(format!("function value {y}")));
    }
    Ok(y)
}

/// Compares the tape gradient of scalar `f` at `x` against central
/// differences with step `eps`. Passes when every entry's relative
/// discrepancy is at most `tol`.
pub fn grad_check<F>(f: F, x: &Tensor, eps: f64, tol: f64) -> Result<GradCheck, TensorError>
where
    F: for<'t> Fn(&'t Tape, Var<'t>) -> Result<Var<'t>, TensorError>,
{
    let eval = |point: Tensor| -> Result<f64, TensorError> {
        let tape = Tape::new();
        let v = tape.var(point);
        scalar_of(f(&tape, v)?)
    };
    let tape = Tape::new();
    let v = tape.var(x.clone());
    let out = f(&tape, v)?;
    scalar_of(out)?;
    let grads = tape.backward(out)?;
    let analytic = grads.wrt(v).cloned().unwrap_or_else(|| Tensor::zeros(x.rows(), x.cols()));

    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        let mut plus = x.clone();
        plus.data_mut()[i] += eps;
        let mut minus = x.clone();
        minus.data_mut()[i] -= eps;
        let numeric = (eval(plus)? - eval(minus)?) / (2.0 * eps);
        worst = worst.max(discrepancy(analytic.data()[i], numeric));
    }
    Ok(GradCheck { max_rel_error: worst, checked: x.len(), passed: worst <= tol })
}

/// Gradient check over the parameters of a model. `samples_per_param`
/// limits how many coordinates of each parameter are perturbed (chosen with
/// `seed`); `None` checks all of them.
pub fn grad_check_params<F>(
    f: F,
    store: &mut ParamStore,
    eps: f64,
    tol: f64,
    samples_per_param: Option<usize>,
    seed: u64,
) -> Result<GradCheck, TensorError>
where
    F: for<'t> Fn(&'t Tape, &ParamStore) -> Result<Var<'t>, TensorError>,
{
    let analytic = {
        let tape = Tape::new();
        let out = f(&tape, store)?;
        scalar_of(out)?;
        let grads = tape.backward(out)?;
        store
            .ids()
            .map(|id| {
                grads.param(id).cloned().unwrap_or_else(|| {
                    let v = &store.get(id).value;
                    Tensor::zeros(v.rows(), v.cols())
                })
            })
            .collect::<Vec<_>>()
    };
    let eval = |store: &ParamStore| -> Result<f64, TensorError> {
        let tape = Tape::new();
        scalar_of(f(&tape, store)?)
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    let ids: Vec<_> = store.ids().collect();
    for (k, id) in ids.into_iter().enumerate() {
        let len = store.get(id).value.len();
        let coords: Vec<usize> = match samples_per_param {
            Some(n) if n < len => sample(&mut rng, len, n).into_vec(),
            _ => (0..len).collect(),
        };
        for i in coords {
            let original = store.get(id).value.data()[i];
            store.get_mut(id).value.data_mut()[i] = original + eps;
            let up = eval(store);
            store.get_mut(id).value.data_mut()[i] = original - eps;
            let down = eval(store);
            store.get_mut(id).value.data_mut()[i] = original;
            let numeric = (up? - down?) / (2.0 * eps);
            worst = worst.max(discrepancy(analytic[k].data()[i], numeric));
            checked += 1;
        }
    }
    Ok(GradCheck { max_rel_error: worst, checked, passed: worst <= tol })
}
