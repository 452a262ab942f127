/// Lowest learning rate the halving schedule will use.
pub const LR_FLOOR: f64 = 1e-6;
/// Highest learning rate the halving schedule accepts.
pub const LR_CEILING: f64 = 1e-1;

/// What an epoch's validation loss did to the schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LrEvent {
    Improved,
    Halved,
    /// No improvement while already at the floor: training should stop.
    Exhausted,
}

/// Halve-on-plateau learning-rate schedule confined to `[1e-6, 1e-1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrSchedule {
    pub current_lr: f64,
    pub best_val_loss: f64,
    pub floor: f64,
    pub ceiling: f64,
}

impl LrSchedule {
    /// Starts at `initial_lr`, clamped into the schedule range.
    pub fn new(initial_lr: f64) -> Self {
        Self {
            current_lr: initial_lr.clamp(LR_FLOOR, LR_CEILING),
            best_val_loss: f64::INFINITY,
            floor: LR_FLOOR,
            ceiling: LR_CEILING,
        }
    }

    /// Halves the rate (down to the floor) when `epoch_val_loss` fails to beat
    /// the best loss so far; otherwise records the new best.
    pub fn update(&mut self, epoch_val_loss: f64) -> LrEvent {
        if epoch_val_loss < self.best_val_loss {
            self.best_val_loss = epoch_val_loss;
            return LrEvent::Improved;
        }
        if self.current_lr <= self.floor {
            return LrEvent::Exhausted;
        }
        self.current_lr = (self.current_lr / 2.0).max(self.floor);
        LrEvent::Halved
    }
}
