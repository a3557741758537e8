use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update of `params` in place; `t` is the 1-based
/// step count. Rejects non-finite gradients before touching anything.
pub fn adam_step(
    params: &mut [f32],
    grads: &[f32],
    m: &mut [f32],
    v: &mut [f32],
    cfg: &AdamConfig,
    lr: f32,
    t: u64,
) -> Result<()> {
    let n = params.len();
    if grads.len() != n || m.len() != n || v.len() != n {
        return Err(Error::Shape("adam buffers differ in length".into()));
    }
    if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFinite {
            what: format!("gradient element {i}"),
            iteration: t as usize,
        });
    }
    let t = t.max(1) as i32;
    let c1 = 1.0 - f64::from(cfg.beta1).powi(t);
    let c2 = 1.0 - f64::from(cfg.beta2).powi(t);
    for i in 0..n {
        let g = grads[i];
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
        let mh = f64::from(m[i]) / c1;
        let vh = f64::from(v[i]) / c2;
        params[i] -= (f64::from(lr) * mh / (vh.sqrt() + f64::from(cfg.eps))) as f32;
    }
    Ok(())
}
