//! Region translation: scope resolution, kernel outlining, data-clause and
//! reduction lowering, launch emission, and final source assembly.

mod assemble;
mod data;
mod geometry;
mod hoist;
mod kernel;
mod launch;
mod reduction;
mod scope;

pub use assemble::{assemble_output, output_file_names, LoweredRegion, OutputFile};
pub use data::{data_env, lower_data_clauses, DataBlock, DataEnvEntry};
pub use geometry::{
    map_parallelism, AccLevel, CmpOp, LaunchGeometry, ParallelLoop, ParallelismMapping,
};
pub use hoist::{hoist_declarations, HoistedDecl};
pub use kernel::{construct_kernel, IndexDef, KernelParam, KernelSpec, ReductionSpec};
pub use launch::lower_kernel_launch;
pub use reduction::{identity_literal, lower_reduction, render_op, ReductionLowering};
pub use scope::{
    infer_transfer_size, resolve_scope, Binding, BindingKind, BindingOrigin, ElemSize,
    ScopeBindings, SizeExpr, TransferSize, BUILTIN_DEVICE_FNS, HOST_ONLY_FNS,
};
