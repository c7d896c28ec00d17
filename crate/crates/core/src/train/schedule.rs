/// Step decay: `base` before `ceil(E/2)`, `base/10` before `ceil(3E/4)`,
/// `base/100` afterwards.
pub fn lr_at(epoch: usize, total_epochs: usize, base_lr: f64) -> f64 {
    let first = total_epochs.div_ceil(2);
    let second = (3 * total_epochs).div_ceil(4);
    if epoch < first {
        base_lr
    } else if epoch < second {
        base_lr / 10.0
    } else {
        base_lr / 100.0
    }
}
