use crate::autodiff::{Graph, NodeId, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Compares reverse-mode gradients of a scalar graph against central
/// differences of step `h`.
///
/// `build` receives a fresh graph and the parameter node holding `point`
/// and must return the scalar output. The result is
/// `max_i |analytic_i − numeric_i| / max(1, |analytic_i|)`.
pub fn grad_check<T, F>(build: F, point: &Tensor<T>, h: T) -> Result<T>
where
    T: Scalar,
    F: Fn(&mut Graph<T>, NodeId) -> Result<NodeId>,
{
    let mut g = Graph::new();
    let x = g.param(point.clone());
    let root = build(&mut g, x)?;
    g.backward(root)?;
    let analytic = g
        .grad(x)
        .cloned()
        .unwrap_or_else(|| Tensor::zeros(point.shape()));

    let eval = |p: Tensor<T>| -> Result<T> {
        let mut g = Graph::new();
        let x = g.constant(p);
        let root = build(&mut g, x)?;
        let v = g.value(root);
        if !v.is_scalar() {
            return Err(Error::Contract(
                "grad_check builder must return a scalar".into(),
            ));
        }
        Ok(v.item())
    };

    let two_h = h + h;
    let mut worst = T::zero();
    for i in 0..point.len() {
        let mut plus = point.clone();
        plus.data_mut()[i] += h;
        let mut minus = point.clone();
        minus.data_mut()[i] -= h;
        let numeric = (eval(plus)? - eval(minus)?) / two_h;
        let a = analytic.data()[i];
        let err = (a - numeric).abs() / a.abs().max(T::one());
        if err > worst {
            worst = err;
        }
    }
    Ok(worst)
}

/// Smallest relu input magnitude in the graph `build` produces at `point`,
/// or `None` if it contains no relu.
pub fn relu_margin<T, F>(build: F, point: &Tensor<T>) -> Result<Option<T>>
where
    T: Scalar,
    F: Fn(&mut Graph<T>, NodeId) -> Result<NodeId>,
{
    let mut g = Graph::new();
    let x = g.constant(point.clone());
    build(&mut g, x)?;
    Ok(g.relu_margin())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_form_is_exact() {
        let q = Tensor::<f64>::from_f64(vec![3, 3], &[2., 1., 0., 1., 3., 1., 0., 1., 4.]).unwrap();
        let p = Tensor::from_f64(vec![3, 1], &[0.5, -1.2, 2.0]).unwrap();
        let err = grad_check(
            |g, x| {
                let qn = g.constant(q.clone());
                let qx = g.matmul(qn, x)?;
                let prod = g.mul(x, qx)?;
                g.sum(prod)
            },
            &p,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn relu_away_from_kink() {
        let p = Tensor::<f64>::from_f64(vec![4], &[-0.7, 0.3, 1.5, -2.0]).unwrap();
        let err = grad_check(
            |g, x| {
                let r = g.relu(x)?;
                let sq = g.mul(r, r)?;
                g.sum(sq)
            },
            &p,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-6, "{err}");
        let margin = relu_margin(|g, x| g.relu(x), &p).unwrap().unwrap();
        assert!((margin - 0.3).abs() < 1e-15);
    }
}
