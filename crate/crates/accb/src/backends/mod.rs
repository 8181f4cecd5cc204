//! Target backends: rendering kernels, runtime preludes, and launch blocks
//! for the cuda, opencl, and serial-reference targets.

mod cuda;
mod exec;
mod opencl;
mod serial;

pub use exec::{execute_serial, ExecOutput};

use crate::cfront::CType;
use crate::translate::{lower_reduction, KernelSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    Cuda,
    Opencl,
    Serial,
}

impl Target {
    pub fn parse(s: &str) -> Option<Target> {
        match s {
            "cuda" => Some(Target::Cuda),
            "opencl" => Some(Target::Opencl),
            "serial" => Some(Target::Serial),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Target::Cuda => "cuda",
            Target::Opencl => "opencl",
            Target::Serial => "serial",
        }
    }
}

/// Per-target renderings consumed by kernel emission, data-clause lowering,
/// and launch lowering. The serial profile renders device concepts as plain
/// host constructs: block/thread indices become loop variables, block-shared
/// scratch a per-block stack array, and the reduction barrier a phase split
/// between the thread loop and the fold.
#[derive(Debug, Clone)]
pub struct TargetProfile {
    pub target: Target,
    pub kernel_qualifier: &'static str,
    /// Prefix on array (device-pointer) kernel parameters.
    pub array_param_prefix: &'static str,
    pub block_local_id: [&'static str; 2],
    pub block_id: [&'static str; 2],
    pub block_extent: [&'static str; 2],
    pub grid_extent: [&'static str; 2],
    pub barrier: &'static str,
    /// Declaration prefix for block-shared scratch; empty for serial, which
    /// passes scratch as a kernel argument instead.
    pub shared_decl_prefix: &'static str,
    pub alloc_fn: &'static str,
    pub h2d_fn: &'static str,
    pub d2h_fn: &'static str,
    pub free_fn: &'static str,
    pub present_fn: &'static str,
    pub register_fn: &'static str,
    pub unregister_fn: &'static str,
}

impl TargetProfile {
    pub fn for_target(target: Target) -> TargetProfile {
        match target {
            Target::Cuda => cuda::profile(),
            Target::Opencl => opencl::profile(),
            Target::Serial => serial::profile(),
        }
    }

    /// Global thread index expression along one dimension.
    pub fn global_id(&self, dim: usize) -> String {
        format!(
            "{} + {} * {}",
            self.block_local_id[dim], self.block_id[dim], self.block_extent[dim]
        )
    }

    /// Thread id flattened across the block.
    pub fn flat_tid(&self, dims: u8) -> String {
        if dims >= 2 {
            format!(
                "{} * {} + {}",
                self.block_local_id[1], self.block_extent[0], self.block_local_id[0]
            )
        } else {
            self.block_local_id[0].to_string()
        }
    }

    /// Block id flattened across the grid.
    pub fn flat_block(&self, dims: u8) -> String {
        if dims >= 2 {
            format!(
                "{} * {} + {}",
                self.block_id[1], self.grid_extent[0], self.block_id[0]
            )
        } else {
            self.block_id[0].to_string()
        }
    }

    /// Type of a device handle for arrays of `elem`.
    pub fn handle_type(&self, elem: &CType) -> String {
        match self.target {
            Target::Opencl => "cl_mem".to_string(),
            _ => format!("{}*", elem.spelling()),
        }
    }

    pub fn alloc_call(&self, bytes: &str) -> String {
        match self.target {
            Target::Opencl => format!("{}(&__accb_cl, {bytes})", self.alloc_fn),
            _ => format!("{}({bytes})", self.alloc_fn),
        }
    }

    pub fn handle_decl(&self, var: &str, elem: &CType, alloc_bytes: &str) -> String {
        let handle = format!("{var}__dev");
        match self.target {
            Target::Opencl => format!("cl_mem {handle} = {};", self.alloc_call(alloc_bytes)),
            _ => format!(
                "{}* {handle} = ({}*){};",
                elem.spelling(),
                elem.spelling(),
                self.alloc_call(alloc_bytes)
            ),
        }
    }

    pub fn h2d_call(&self, var: &str, bytes: &str, offset: &str) -> String {
        match self.target {
            Target::Opencl => format!(
                "{}(&__accb_cl, {var}__dev, {var}, {bytes}, {offset});",
                self.h2d_fn
            ),
            _ => format!("{}({var}__dev, {var}, {bytes}, {offset});", self.h2d_fn),
        }
    }

    pub fn d2h_call(&self, var: &str, bytes: &str, offset: &str) -> String {
        match self.target {
            Target::Opencl => format!(
                "{}(&__accb_cl, {var}, {var}__dev, {bytes}, {offset});",
                self.d2h_fn
            ),
            _ => format!("{}({var}, {var}__dev, {bytes}, {offset});", self.d2h_fn),
        }
    }

    pub fn free_call(&self, handle: &str) -> String {
        format!("{}({handle});", self.free_fn)
    }

    pub fn register_call(&self, name: &str, handle: &str) -> String {
        match self.target {
            Target::Opencl => format!("{}(\"{name}\", (void*){handle});", self.register_fn),
            _ => format!("{}(\"{name}\", {handle});", self.register_fn),
        }
    }

    pub fn unregister_call(&self, name: &str) -> String {
        format!("{}(\"{name}\");", self.unregister_fn)
    }

    pub fn present_decl(&self, var: &str, elem: &CType) -> String {
        match self.target {
            Target::Opencl => format!(
                "cl_mem {var}__dev = (cl_mem){}(\"{var}\");",
                self.present_fn
            ),
            _ => format!(
                "{}* {var}__dev = ({}*){}(\"{var}\");",
                elem.spelling(),
                elem.spelling(),
                self.present_fn
            ),
        }
    }
}

/// Self-contained runtime helpers prepended to every generated host file.
pub fn emit_host_runtime(profile: &TargetProfile) -> String {
    match profile.target {
        Target::Cuda => cuda::prelude(),
        Target::Opencl => opencl::prelude(),
        Target::Serial => serial::prelude(),
    }
}

/// Marker separating the fixed runtime prelude from translated code; site
/// counting starts after it.
pub const PRELUDE_END_MARKER: &str = "/* end accb runtime */";

/// Placeholder the opencl prelude embeds for the kernel-source file name.
pub fn opencl_source_placeholder() -> &'static str {
    opencl::CL_SOURCE_PLACEHOLDER
}

/// Kernel signature without trailing `;` or body.
pub fn kernel_signature(spec: &KernelSpec, profile: &TargetProfile) -> String {
    let mut params: Vec<String> = Vec::new();
    for p in &spec.params {
        if p.is_array {
            params.push(format!(
                "{}{}* {}",
                profile.array_param_prefix,
                p.ty.spelling(),
                p.name
            ));
        } else {
            params.push(format!("{} {}", p.ty.spelling(), p.name));
        }
    }
    match profile.target {
        Target::Serial => {
            let dims = spec.geometry.dims as usize;
            for d in 0..dims {
                params.push(format!("long __accb_b{d}"));
            }
            for d in 0..dims {
                params.push(format!("long __accb_t{d}"));
            }
            for d in 0..dims {
                params.push(format!("long __accb_B{d}"));
            }
            for r in &spec.reductions {
                params.push(format!("{}* __accb_scr_{}", r.ty.spelling(), r.var));
            }
        }
        _ => {
            for r in &spec.reductions {
                params.push(format!(
                    "{}{}* {}",
                    profile.array_param_prefix,
                    r.ty.spelling(),
                    r.partials
                ));
            }
        }
    }
    format!(
        "{} {}({})",
        profile.kernel_qualifier,
        spec.name,
        params.join(", ")
    )
}

/// Render a complete kernel definition for the target.
pub fn emit_kernel(spec: &KernelSpec, profile: &TargetProfile) -> String {
    let mut out = String::new();
    out.push_str(&kernel_signature(spec, profile));
    out.push_str(" {\n");

    for r in &spec.reductions {
        out.push_str(&format!(
            "  {} {} = {};\n",
            r.ty.spelling(),
            r.var,
            crate::translate::identity_literal(r.op, &r.ty)
        ));
    }
    for idx in &spec.index_defs {
        out.push_str(&format!(
            "  {} {} = ({}) + ({}) * ({});\n",
            idx.ty,
            idx.name,
            idx.lower,
            idx.step,
            profile.global_id(idx.dim as usize)
        ));
    }
    match &spec.guard {
        Some(guard) => {
            out.push_str(&format!("  if ({guard}) {{\n"));
            for p in &spec.private_decls {
                out.push_str(&format!("    {p}\n"));
            }
            for line in spec.body.trim().lines() {
                out.push_str("    ");
                out.push_str(line.trim_end());
                out.push('\n');
            }
            out.push_str("  }\n");
        }
        None => {
            for p in &spec.private_decls {
                out.push_str(&format!("  {p}\n"));
            }
            for line in spec.body.trim().lines() {
                out.push_str("  ");
                out.push_str(line.trim_end());
                out.push('\n');
            }
        }
    }
    for r in &spec.reductions {
        let lowering = lower_reduction(spec, r, profile);
        out.push_str(&lowering.kernel_epilogue);
    }
    out.push_str("}\n");
    out
}

/// The target-specific invocation inside a lowered launch block. Grid extent
/// variables `__accb_g0`/`__accb_g1` are in scope, as are `{var}__partials`
/// handles for reductions.
pub fn launch_core(spec: &KernelSpec, profile: &TargetProfile, args: &[String]) -> String {
    match profile.target {
        Target::Cuda => cuda::launch_core(spec, args),
        Target::Opencl => opencl::launch_core(spec, args),
        Target::Serial => serial::launch_core(spec, args),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cfront::BaseType;
    use crate::translate::{CmpOp, IndexDef, KernelParam, LaunchGeometry, ParallelLoop};
    use crate::translate::ReductionSpec;

    fn golden_spec() -> KernelSpec {
        let loops = vec![
            ParallelLoop {
                index: "i".into(),
                lower: "0".into(),
                upper: "LEN".into(),
                cmp: CmpOp::Lt,
                step: 1,
                cond: "i<LEN".into(),
                decl_ty: None,
                loc: Default::default(),
            },
            ParallelLoop {
                index: "j".into(),
                lower: "0".into(),
                upper: "LEN".into(),
                cmp: CmpOp::Lt,
                step: 1,
                cond: "j<LEN".into(),
                decl_ty: None,
                loc: Default::default(),
            },
        ];
        KernelSpec {
            name: "__accb_kernel_1".into(),
            region_id: 1,
            params: vec![
                KernelParam {
                    name: "a".into(),
                    ty: CType::new(BaseType::Float),
                    is_array: true,
                },
                KernelParam {
                    name: "LEN".into(),
                    ty: CType::new(BaseType::Int),
                    is_array: false,
                },
            ],
            index_defs: vec![
                IndexDef {
                    ty: "int".into(),
                    name: "i".into(),
                    lower: "0".into(),
                    step: 1,
                    dim: 0,
                },
                IndexDef {
                    ty: "int".into(),
                    name: "j".into(),
                    lower: "0".into(),
                    step: 1,
                    dim: 1,
                },
            ],
            guard: Some("(i<LEN) && (j<LEN)".into()),
            body: "a[i*LEN+j] = 1.0f;".into(),
            private_decls: vec![],
            reductions: vec![],
            geometry: LaunchGeometry {
                dims: 2,
                block: vec![16, 16],
                loops,
            },
            hoisted: vec![],
        }
    }

    #[test]
    fn cuda_kernel_matches_reference_shape() {
        let profile = TargetProfile::for_target(Target::Cuda);
        let text = emit_kernel(&golden_spec(), &profile);
        assert!(text.starts_with("__global__ void __accb_kernel_1(float* a, int LEN)"));
        assert!(text.contains("int i = (0) + (1) * (threadIdx.x + blockIdx.x * blockDim.x);"));
        assert!(text.contains("int j = (0) + (1) * (threadIdx.y + blockIdx.y * blockDim.y);"));
        assert!(text.contains("if ((i<LEN) && (j<LEN))"));
    }

    #[test]
    fn serial_kernel_takes_explicit_geometry_args() {
        let profile = TargetProfile::for_target(Target::Serial);
        let text = emit_kernel(&golden_spec(), &profile);
        assert!(text.contains(
            "static void __accb_kernel_1(float* a, int LEN, long __accb_b0, long __accb_b1, long __accb_t0, long __accb_t1, long __accb_B0, long __accb_B1)"
        ));
        assert!(text.contains("int i = (0) + (1) * (__accb_t0 + __accb_b0 * __accb_B0);"));
    }

    #[test]
    fn opencl_kernel_uses_global_ids_and_qualifiers() {
        let profile = TargetProfile::for_target(Target::Opencl);
        let text = emit_kernel(&golden_spec(), &profile);
        assert!(text.starts_with("__kernel void __accb_kernel_1(__global float* a, int LEN)"));
        assert!(text.contains("get_local_id(0) + get_group_id(0) * get_local_size(0)"));
    }

    #[test]
    fn reduction_epilogue_uses_profile_renderings() {
        let mut spec = golden_spec();
        spec.geometry = LaunchGeometry {
            dims: 1,
            block: vec![256],
            loops: vec![spec.geometry.loops[0].clone()],
        };
        spec.index_defs.truncate(1);
        spec.guard = Some("i<LEN".into());
        spec.reductions = vec![ReductionSpec {
            var: "s".into(),
            ty: CType::new(BaseType::Int),
            op: crate::accvalidate::ReductionOp::Add,
            partials: "s__partials".into(),
        }];
        for target in [Target::Cuda, Target::Opencl, Target::Serial] {
            let profile = TargetProfile::for_target(target);
            let text = emit_kernel(&spec, &profile);
            assert!(text.contains("int s = 0;"), "{target:?}: {text}");
            match target {
                Target::Cuda => {
                    assert!(text.contains("__shared__ int __accb_scr_s[256];"));
                    assert!(text.contains("__syncthreads();"));
                    assert!(text.contains("s__partials["));
                }
                Target::Opencl => {
                    assert!(text.contains("__local int __accb_scr_s[256];"));
                    assert!(text.contains("barrier(CLK_LOCAL_MEM_FENCE);"));
                }
                Target::Serial => {
                    // Store only; the fold runs as a phase in the launch loops.
                    assert!(text.contains("__accb_scr_s[__accb_tid] = s;"));
                    assert!(!text.contains("__shared__"));
                }
            }
        }
    }

    #[test]
    fn profile_totality_over_golden_spec() {
        let spec = golden_spec();
        for target in [Target::Cuda, Target::Opencl, Target::Serial] {
            let profile = TargetProfile::for_target(target);
            let kernel = emit_kernel(&spec, &profile);
            let args = vec!["a__dev".to_string(), "LEN".to_string()];
            let core = launch_core(&spec, &profile, &args);
            let runtime = emit_host_runtime(&profile);
            let all = format!("{kernel}\n{core}\n{runtime}");
            assert!(all.contains(profile.kernel_qualifier), "{target:?} qualifier");
            assert!(all.contains(profile.block_local_id[0]), "{target:?} tid");
            assert!(all.contains(profile.block_id[0]), "{target:?} bid");
            assert!(all.contains(profile.block_extent[0]), "{target:?} bdim");
            assert!(all.contains(profile.alloc_fn), "{target:?} alloc");
            assert!(all.contains(profile.h2d_fn), "{target:?} h2d");
            assert!(all.contains(profile.d2h_fn), "{target:?} d2h");
            assert!(all.contains(profile.free_fn), "{target:?} free");
            assert!(all.contains(profile.present_fn), "{target:?} present");
            assert!(runtime.contains(PRELUDE_END_MARKER));
        }
    }

    #[test]
    fn serial_launch_core_nests_block_and_thread_loops() {
        let spec = golden_spec();
        let profile = TargetProfile::for_target(Target::Serial);
        let args = vec!["a__dev".to_string(), "LEN".to_string()];
        let core = launch_core(&spec, &profile, &args);
        // 2 grid dims x 2 block dims = 4 nested loops.
        assert_eq!(core.matches("for (long __accb_b").count(), 2);
        assert_eq!(core.matches("for (long __accb_t").count(), 2);
        assert!(core.contains(
            "__accb_kernel_1(a__dev, LEN, __accb_b0, __accb_b1, __accb_t0, __accb_t1, 16, 16);"
        ));
    }
}
