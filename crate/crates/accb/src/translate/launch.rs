//! Launch lowering: iteration counts, the zero-trip gate, grid arithmetic,
//! reduction partials management, and the target invocation.

use crate::backends::{launch_core, TargetProfile};
use crate::diag::Diagnostic;

use super::kernel::KernelSpec;
use super::reduction::lower_reduction;

/// Emit the host block that launches a constructed kernel: arguments in
/// parameter order, geometry from the spec, synchronization after, and the
/// partials array bracketing plus host merge when reductions exist.
/// Zero-trip loops skip the launch at run time.
pub fn lower_kernel_launch(
    spec: &KernelSpec,
    profile: &TargetProfile,
    args: &[String],
) -> Result<String, Diagnostic> {
    let geom = &spec.geometry;
    let dims = geom.dims;
    let mut out = String::from("{\n");

    // Iteration counts; a one-thread region launches a single point.
    if geom.loops.is_empty() {
        out.push_str("long __accb_n0 = 1;\n");
    } else {
        for (d, lp) in geom.loops.iter().enumerate() {
            out.push_str(&format!("long __accb_n{d} = {};\n", lp.count_expr()));
        }
    }
    let gate = if dims >= 2 {
        "__accb_n0 > 0 && __accb_n1 > 0"
    } else {
        "__accb_n0 > 0"
    };
    out.push_str(&format!("if ({gate}) {{\n"));
    for d in 0..dims as usize {
        out.push_str(&format!(
            "long __accb_g{d} = {};\n",
            geom.grid_expr(d, &format!("__accb_n{d}"))
        ));
    }
    if !spec.reductions.is_empty() {
        if dims >= 2 {
            out.push_str("long __accb_gtotal = __accb_g0 * __accb_g1;\n");
        } else {
            out.push_str("long __accb_gtotal = __accb_g0;\n");
        }
        for r in &spec.reductions {
            let bytes = format!("__accb_gtotal * sizeof({})", r.ty.spelling());
            match profile.target {
                crate::backends::Target::Opencl => out.push_str(&format!(
                    "cl_mem {} = {};\n",
                    r.partials,
                    profile.alloc_call(&bytes)
                )),
                _ => out.push_str(&format!(
                    "{ty}* {} = ({ty}*){};\n",
                    r.partials,
                    profile.alloc_call(&bytes),
                    ty = r.ty.spelling()
                )),
            }
        }
    }

    out.push_str(&launch_core(spec, profile, args));

    for r in &spec.reductions {
        let lowering = lower_reduction(spec, r, profile);
        out.push_str(&lowering.host_merge);
    }
    out.push_str("}\n}\n");
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::Target;
    use crate::translate::geometry::map_parallelism;
    use crate::translate::kernel::construct_kernel;
    use crate::translate::scope::{resolve_scope, tests::pipeline};

    fn lowered(src: &str, region_id: u32, target: Target) -> (KernelSpec, String) {
        let (norm, ast, table) = pipeline(src);
        let region = table.by_id(region_id).unwrap();
        let scope = resolve_scope(region, &ast, &norm).unwrap();
        let geom = map_parallelism(region).unwrap();
        let spec = construct_kernel(region, &scope, &geom).unwrap();
        let profile = TargetProfile::for_target(target);
        let args: Vec<String> = spec
            .params
            .iter()
            .map(|p| {
                if p.is_array {
                    format!("{}__dev", p.name)
                } else {
                    p.name.clone()
                }
            })
            .collect();
        let block = lower_kernel_launch(&spec, &profile, &args).unwrap();
        (spec, block)
    }

    const MATMUL: &str = "\
int main(){ int i,j,LEN; float *a,*b,*c;
#pragma acc data copy(a[0:LEN*LEN],b[0:LEN*LEN],c[0:LEN*LEN])
#pragma acc kernels
#pragma acc loop independent
for(i=0; i<LEN; ++i){
#pragma acc loop independent
for(j=0; j<LEN; ++j){
float sum=0;
for(int l=0; l<LEN; ++l){ sum += a[i*LEN+l]*b[l*LEN+j]; }
c[i*LEN+j]=sum;
}
}
return 0; }
";

    #[test]
    fn cuda_launch_matches_reference_structure() {
        let (_, block) = lowered(MATMUL, 1, Target::Cuda);
        assert!(block.contains("dim3 __accb_block(16, 16);"));
        assert!(block
            .contains("__accb_kernel_1<<<__accb_grid, __accb_block>>>(a__dev, b__dev, c__dev, LEN);"));
        assert!(block.contains("cudaDeviceSynchronize"));
        assert!(block.contains("if (__accb_n0 > 0 && __accb_n1 > 0)"));
    }

    #[test]
    fn zero_trip_gate_guards_the_launch() {
        let src = "\
int main(){ int i,n; float a[4];
#pragma acc kernels copy(a[0:4])
#pragma acc loop independent
for(i=0;i<n;++i){ a[i]=1; }
return 0; }
";
        let (_, block) = lowered(src, 0, Target::Serial);
        assert!(block.contains("if (__accb_n0 > 0)"));
        let launch_pos = block.find("__accb_kernel_0(").unwrap();
        let gate_pos = block.find("if (__accb_n0 > 0)").unwrap();
        assert!(gate_pos < launch_pos);
    }

    #[test]
    fn reduction_brackets_partials_and_merges_on_host() {
        let src = "\
int main(){ int i,s;
#pragma acc kernels
#pragma acc loop independent reduction(+:s)
for(i=1;i<=1024;++i){ s += i; }
return 0; }
";
        let (spec, block) = lowered(src, 0, Target::Serial);
        assert_eq!(spec.reductions.len(), 1);
        assert!(block.contains("int* s__partials = (int*)acc_alloc(__accb_gtotal * sizeof(int));"));
        assert!(block.contains("acc_copy_d2h(__accb_host_s, s__partials"));
        assert!(block.contains("s = s + __accb_host_s[__accb_b];"));
        assert!(block.contains("acc_free(s__partials);"));
        let alloc = block.find("s__partials = ").unwrap();
        let launch = block.find("__accb_kernel_0(").unwrap();
        let free = block.find("acc_free(s__partials)").unwrap();
        assert!(alloc < launch && launch < free);
    }
}
