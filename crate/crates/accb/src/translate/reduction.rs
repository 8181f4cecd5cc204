//! Two-level reduction lowering: a block-local tree over shared scratch on
//! the device producing one partial per block, merged on the host.

use crate::accvalidate::ReductionOp;
use crate::backends::{Target, TargetProfile};
use crate::cfront::{BaseType, CType};

use super::kernel::{KernelSpec, ReductionSpec};

/// `op`'s identity element, spelled as a C literal of `ty`.
pub fn identity_literal(op: ReductionOp, ty: &CType) -> String {
    let float_like = matches!(ty.base, BaseType::Float | BaseType::Double);
    match (op, float_like) {
        (ReductionOp::Add, false) => "0".into(),
        (ReductionOp::Add, true) => "0.0".into(),
        (ReductionOp::Mul, false) => "1".into(),
        (ReductionOp::Mul, true) => "1.0".into(),
        (ReductionOp::Max, _) => match ty.base {
            BaseType::Float => "-FLT_MAX".into(),
            BaseType::Double => "-DBL_MAX".into(),
            BaseType::Char => "CHAR_MIN".into(),
            BaseType::Short => "SHRT_MIN".into(),
            BaseType::Long => "LONG_MIN".into(),
            BaseType::UChar | BaseType::UShort | BaseType::UInt | BaseType::ULong => "0".into(),
            _ => "INT_MIN".into(),
        },
        (ReductionOp::Min, _) => match ty.base {
            BaseType::Float => "FLT_MAX".into(),
            BaseType::Double => "DBL_MAX".into(),
            BaseType::Char => "CHAR_MAX".into(),
            BaseType::Short => "SHRT_MAX".into(),
            BaseType::Long => "LONG_MAX".into(),
            BaseType::UChar => "UCHAR_MAX".into(),
            BaseType::UShort => "USHRT_MAX".into(),
            BaseType::UInt => "UINT_MAX".into(),
            BaseType::ULong => "ULONG_MAX".into(),
            _ => "INT_MAX".into(),
        },
    }
}

/// Combine two operand renderings under `op`.
pub fn render_op(op: ReductionOp, a: &str, b: &str) -> String {
    match op {
        ReductionOp::Add => format!("{a} + {b}"),
        ReductionOp::Mul => format!("{a} * {b}"),
        ReductionOp::Max => format!("(({a}) > ({b}) ? ({a}) : ({b}))"),
        ReductionOp::Min => format!("(({a}) < ({b}) ? ({a}) : ({b}))"),
    }
}

#[derive(Debug, Clone)]
pub struct ReductionLowering {
    /// Emitted at the end of the kernel body (after the guard), where every
    /// thread of the block participates.
    pub kernel_epilogue: String,
    /// Emitted on the host after launch completion: reads the partials back
    /// and folds them into the original variable.
    pub host_merge: String,
}

/// Lower one reduction clause against a constructed kernel. The kernel side
/// holds a per-thread private copy initialized to the identity; the epilogue
/// tree-reduces a block-shared scratch array with a block-wide barrier
/// between halving steps, writing one partial per block. The stride starts
/// at the next power of two so any block size folds completely.
pub fn lower_reduction(
    spec: &KernelSpec,
    red: &ReductionSpec,
    profile: &TargetProfile,
) -> ReductionLowering {
    let threads = spec.geometry.block_threads();
    let pow2 = threads.next_power_of_two();
    let dims = spec.geometry.dims;
    let ty = red.ty.spelling();
    let scr = format!("__accb_scr_{}", red.var);

    let kernel_epilogue = match profile.target {
        Target::Serial => {
            // Scratch arrives as an argument; the fold is a later phase in
            // the launch loops.
            format!(
                "  {{\n    long __accb_tid = {tid};\n    {scr}[__accb_tid] = {v};\n  }}\n",
                tid = profile.flat_tid(dims),
                v = red.var,
            )
        }
        _ => {
            let fold = render_op(
                red.op,
                &format!("{scr}[__accb_tid]"),
                &format!("{scr}[__accb_tid + __accb_s]"),
            );
            format!(
                "  {shared}{ty} {scr}[{threads}];\n  {{\n    int __accb_tid = {tid};\n    {scr}[__accb_tid] = {v};\n    {barrier}\n    for (int __accb_s = {half}; __accb_s > 0; __accb_s >>= 1) {{\n      if (__accb_tid < __accb_s && __accb_tid + __accb_s < {threads}) {{\n        {scr}[__accb_tid] = {fold};\n      }}\n      {barrier}\n    }}\n    if (__accb_tid == 0) {{ {partials}[{bid}] = {scr}[0]; }}\n  }}\n",
                shared = profile.shared_decl_prefix,
                tid = profile.flat_tid(dims),
                v = red.var,
                barrier = profile.barrier,
                half = pow2 / 2,
                partials = red.partials,
                bid = profile.flat_block(dims),
            )
        }
    };

    // The merge folds every block partial into the original host variable,
    // preserving its pre-region value as the fold seed.
    let d2h = match profile.target {
        Target::Opencl => format!(
            "{}(&__accb_cl, __accb_host_{v}, {p}, __accb_gtotal * sizeof({ty}), 0);",
            profile.d2h_fn,
            v = red.var,
            p = red.partials,
        ),
        _ => format!(
            "{}(__accb_host_{v}, {p}, __accb_gtotal * sizeof({ty}), 0);",
            profile.d2h_fn,
            v = red.var,
            p = red.partials,
        ),
    };
    let host_merge = format!(
        "{ty}* __accb_host_{v} = ({ty}*)malloc(__accb_gtotal * sizeof({ty}));\n{d2h}\n{{\n  long __accb_b;\n  for (__accb_b = 0; __accb_b < __accb_gtotal; ++__accb_b) {{\n    {v} = {fold};\n  }}\n}}\nfree(__accb_host_{v});\n{free_partials}\n",
        v = red.var,
        fold = render_op(red.op, &red.var.to_string(), &format!("__accb_host_{}[__accb_b]", red.var)),
        free_partials = profile.free_call(&red.partials),
    );

    ReductionLowering {
        kernel_epilogue,
        host_merge,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identities() {
        let int = CType::new(BaseType::Int);
        let float = CType::new(BaseType::Float);
        assert_eq!(identity_literal(ReductionOp::Add, &int), "0");
        assert_eq!(identity_literal(ReductionOp::Mul, &int), "1");
        assert_eq!(identity_literal(ReductionOp::Max, &int), "INT_MIN");
        assert_eq!(identity_literal(ReductionOp::Min, &int), "INT_MAX");
        assert_eq!(identity_literal(ReductionOp::Max, &float), "-FLT_MAX");
        assert_eq!(identity_literal(ReductionOp::Min, &float), "FLT_MAX");
    }

    #[test]
    fn op_rendering() {
        assert_eq!(render_op(ReductionOp::Add, "a", "b"), "a + b");
        assert_eq!(render_op(ReductionOp::Max, "a", "b"), "((a) > (b) ? (a) : (b))");
    }
}
