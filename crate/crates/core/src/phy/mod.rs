//! Link-level simulation: polar-coded, interleaved Gray QAM streams sent
//! through the designed precoders and received by MMSE-SIC.

pub mod interleave;
pub mod link;
pub mod mcs;
pub mod polar;
pub mod qam;

pub use interleave::{deinterleave, interleave};
pub use link::{
    design_stream_rates, max_min_throughput, mmse_sic_receive, simulate_frames, transmit, Frame,
    FrameResult, LinkPlan, LinkSettings, StreamPlan, SYMBOLS_PER_FRAME,
};
pub use mcs::{select_mcs, McsEntry, McsTable, StreamMcs};
pub use polar::{
    construct_frozen_set, polar_decode_scl, polar_encode, polar_transform, DecodeOutput,
    PolarCodeConfig,
};
pub use qam::{bits_per_symbol, compute_llrs, qam_gray_table, qam_map};
