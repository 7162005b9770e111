use std::f64::consts::PI;

/// Learning rate after `samples_seen` samples: a linear ramp from zero to
/// `base_lr` over the first `warmup_frac` of the run, then a half-cosine down
/// to zero at `total_samples`.
pub fn lr_schedule(samples_seen: u64, total_samples: u64, warmup_frac: f64, base_lr: f64) -> f64 {
    let total = total_samples as f64;
    let seen = (samples_seen as f64).min(total);
    let warm = warmup_frac * total;
    if seen < warm {
        base_lr * seen / warm
    } else if total <= warm {
        base_lr
    } else {
        let progress = (seen - warm) / (total - warm);
        base_lr * 0.5 * (1.0 + (PI * progress).cos())
    }
}
