//! Shared-trunk networks with one or more classifier branches.

mod arch;
pub mod checkpoint;
mod network;

pub use arch::{default_arch, desk_arch, ArchScale, ArchSpec, BlockSpec};
pub use network::{param_count, BranchId, NetLayout, Pipeline, SplitNetwork};
