use serde::{Deserialize, Serialize};

use super::TrainError;

/// Per-layer sparsity targets. A ratio is the fraction of a layer's weights
/// REMOVED, so a layer of `P` weights keeps `k = (1 − r)·P`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparsityPlan {
    /// Target ratio per weight layer; a single entry applies to every layer.
    pub final_ratio: Vec<f64>,
    /// Ratio at the first thresholding event, same layout as `final_ratio`.
    /// Defaults to half of the final ratio.
    #[serde(default)]
    pub start_ratio: Option<Vec<f64>>,
}

impl SparsityPlan {
    /// Same final ratio for all layers, default progressive start.
    pub fn uniform(ratio: f64) -> Self {
        Self {
            final_ratio: vec![ratio],
            start_ratio: None,
        }
    }

    /// Same ratio from the first event onwards (no ramp).
    pub fn constant(ratio: f64) -> Self {
        Self {
            final_ratio: vec![ratio],
            start_ratio: Some(vec![ratio]),
        }
    }

    fn pick(v: &[f64], layer: usize) -> f64 {
        if v.len() == 1 {
            v[0]
        } else {
            v[layer]
        }
    }

    pub fn final_for(&self, layer: usize) -> f64 {
        Self::pick(&self.final_ratio, layer)
    }

    pub fn start_for(&self, layer: usize) -> f64 {
        match &self.start_ratio {
            Some(v) => Self::pick(v, layer),
            None => self.final_for(layer) / 2.0,
        }
    }

    /// Checks the plan against the number of weight layers it will drive.
    pub fn validate(&self, weight_layers: usize) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::Plan(m));
        for (name, v) in [("final_ratio", Some(&self.final_ratio)), ("start_ratio", self.start_ratio.as_ref())] {
            let Some(v) = v else { continue };
            if v.len() != 1 && v.len() != weight_layers {
                return bad(format!(
                    "{name} has {} entries; expected 1 or {weight_layers}",
                    v.len()
                ));
            }
        }
        for l in 0..weight_layers {
            let (r0, rt) = (self.start_for(l), self.final_for(l));
            if !(0.0..1.0).contains(&rt) {
                return bad(format!("final ratio {rt} for weight layer {l} not in [0, 1)"));
            }
            if !(0.0..=rt).contains(&r0) {
                return bad(format!(
                    "start ratio {r0} for weight layer {l} not in [0, {rt}]"
                ));
            }
        }
        Ok(())
    }

    /// Ratio of weight layer `layer` at schedule time `t` of `horizon`.
    pub fn ratio_at(&self, layer: usize, t: usize, horizon: usize) -> f64 {
        progressive_ratio(self.start_for(layer), self.final_for(layer), t, horizon)
    }
}

/// Linear ramp `r(t) = r(0) + t·(r(T) − r(0))/T`; `T = 0` gives `r(T)`.
pub fn progressive_ratio(start: f64, end: f64, t: usize, horizon: usize) -> f64 {
    if horizon == 0 || t >= horizon {
        return end;
    }
    start + t as f64 * (end - start) / horizon as f64
}

/// `k = max(1, round((1 − r)·P))`, rounding half away from zero.
///
/// The flag reports that the unclamped budget was zero.
pub fn budget(ratio: f64, params: usize) -> (usize, bool) {
    let k = ((1.0 - ratio) * params as f64).round() as usize;
    if k == 0 {
        (1, true)
    } else {
        (k.min(params), false)
    }
}

/// Budget of weight layer `layer` (with `params` weights) at schedule time `t`.
pub fn layer_budget(plan: &SparsityPlan, layer: usize, params: usize, t: usize, horizon: usize) -> usize {
    let ratio = plan.ratio_at(layer, t, horizon);
    let (k, clamped) = budget(ratio, params);
    if clamped {
        log::warn!("budget for weight layer {layer} (ratio {ratio}, {params} weights) rounds to 0; using 1");
    }
    k
}
