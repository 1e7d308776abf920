use std::f64::consts::PI;

use super::TrainConfig;

/// Geometric warmup from `lr_start` to `lr_peak` over `warmup_steps`, then
/// cosine decay from `lr_peak` to exactly 0 at `total_steps`.
pub fn learning_rate(step: u64, config: &TrainConfig) -> f64 {
    let warmup = config.warmup_steps;
    let total = config.total_steps;
    if step < warmup {
        let frac = step as f64 / warmup as f64;
        return config.lr_start * (config.lr_peak / config.lr_start).powf(frac);
    }
    if step >= total {
        return 0.0;
    }
    let progress = (step - warmup) as f64 / (total - warmup) as f64;
    0.5 * config.lr_peak * (1.0 + (PI * progress).cos())
}
