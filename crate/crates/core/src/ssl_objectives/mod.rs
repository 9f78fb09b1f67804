//! The five joint-embedding objectives with their projector/predictor shapes,
//! momentum encoder and negative-key queue.

mod heads;
mod losses;
mod momentum;

pub use heads::{Heads, Method, MlpSpec, DESK_DIVISOR};
pub use losses::{
    barlow_twins_loss, byol_loss, infonce_loss, mean_row_cosine, ntxent_loss, simsiam_loss, BARLOW_LAMBDA,
    BARLOW_SCALE, DEFAULT_TEMPERATURE,
};
pub use momentum::{ema_update, moco_step, momentum_at, EmaState, KeyQueue, MocoState};
