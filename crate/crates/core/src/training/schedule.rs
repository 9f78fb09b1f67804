use std::f64::consts::PI;

/// Linear scaling rule: `base × batch / 256`.
pub fn scaled_lr(base_lr: f64, batch_size: usize) -> f64 {
    base_lr * batch_size as f64 / 256.0
}

/// Linear warmup from 0 to `peak` over `warmup` steps, then cosine decay to 0 at
/// `total`.
pub fn cosine_lr(step: usize, total: usize, warmup: usize, peak: f64) -> f64 {
    if step < warmup {
        return peak * step as f64 / warmup as f64;
    }
    if total <= warmup {
        return peak;
    }
    let progress = ((step - warmup) as f64 / (total - warmup) as f64).min(1.0);
    peak * ((PI * progress).cos() + 1.0) / 2.0
}
