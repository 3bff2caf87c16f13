use crate::error::Result;
use crate::net::ParamSet;

/// Classical momentum update, applied in place:
/// `v <- momentum * v - lr * g`, then `theta <- theta + v`.
pub fn sgd_momentum_step(
    params: &mut ParamSet,
    grads: &ParamSet,
    velocity: &mut ParamSet,
    learning_rate: f64,
    momentum: f64,
) -> Result<()> {
    params.expect_same_layout(grads)?;
    params.expect_same_layout(velocity)?;
    for (((_, p), (_, g)), (_, v)) in params.iter_mut().zip(grads.iter()).zip(velocity.iter_mut()) {
        for ((pv, &gv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(v.data_mut()) {
            *vv = momentum * *vv - learning_rate * gv;
            *pv += *vv;
        }
    }
    Ok(())
}
