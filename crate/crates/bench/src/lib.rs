//! Fixtures shared by the benchmarks.

use ptcb_core::gates;
use ptcb_core::noise::{sample_member, EnsembleParams};
use ptcb_core::ptm::ptm_unitary;
use ptcb_core::{PtcbModel, SpamSpec, TransferMatrix};

pub fn toffoli() -> TransferMatrix {
    ptm_unitary(&gates::toffoli(), 3).expect("Toffoli is unitary")
}

/// Toffoli with ensemble member `index` as its noise.
pub fn noisy_toffoli(index: usize, spam: SpamSpec) -> PtcbModel {
    let member = sample_member(index, 3, &EnsembleParams::default(), 0).expect("default ensemble is valid");
    PtcbModel::new(toffoli(), &member.channel, spam).expect("matching dimensions")
}
