//! Serial-reference target: geometry interpreted as nested host loops,
//! blocks outer and threads inner, so generated programs are runnable
//! correctness oracles on any host.

use super::TargetProfile;
use crate::translate::{render_op, KernelSpec};

pub fn profile() -> TargetProfile {
    TargetProfile {
        target: super::Target::Serial,
        kernel_qualifier: "static void",
        array_param_prefix: "",
        block_local_id: ["__accb_t0", "__accb_t1"],
        block_id: ["__accb_b0", "__accb_b1"],
        block_extent: ["__accb_B0", "__accb_B1"],
        grid_extent: ["__accb_g0", "__accb_g1"],
        barrier: "/* barrier: phase split */",
        shared_decl_prefix: "",
        alloc_fn: "acc_alloc",
        h2d_fn: "acc_copy_h2d",
        d2h_fn: "acc_copy_d2h",
        free_fn: "acc_free",
        present_fn: "acc_present_lookup",
        register_fn: "acc_register",
        unregister_fn: "acc_unregister",
    }
}

pub fn prelude() -> String {
    format!(
        r#"#include <stdio.h>
#include <stdlib.h>
#include <string.h>
#include <math.h>
#include <limits.h>
#include <float.h>

static void* acc_alloc(size_t bytes) {{
    void* p = malloc(bytes ? bytes : 1);
    if (!p) {{
        fprintf(stderr, "accb: device allocation of %lu bytes failed\n",
                (unsigned long)bytes);
        exit(70);
    }}
    return p;
}}
static void acc_free(void* handle) {{
    free(handle);
}}
static void acc_copy_h2d(void* dst, const void* src, size_t bytes, size_t offset) {{
    memcpy((char*)dst + offset, (const char*)src + offset, bytes);
}}
static void acc_copy_d2h(void* dst, const void* src, size_t bytes, size_t offset) {{
    memcpy((char*)dst + offset, (const char*)src + offset, bytes);
}}
{registry}
{marker}
"#,
        registry = super::cuda::registry_helpers(),
        marker = super::PRELUDE_END_MARKER,
    )
}

/// Block loops outside, thread loops inside; the per-thread kernel runs to
/// completion before the block-local reduction fold, which realizes the
/// barrier as a phase split.
pub fn launch_core(spec: &KernelSpec, args: &[String]) -> String {
    let dims = spec.geometry.dims;
    let block = &spec.geometry.block;
    let threads: u32 = block.iter().product();
    let mut out = String::new();

    if dims >= 2 {
        out.push_str("for (long __accb_b1 = 0; __accb_b1 < __accb_g1; ++__accb_b1)\n");
    }
    out.push_str("for (long __accb_b0 = 0; __accb_b0 < __accb_g0; ++__accb_b0)\n{\n");
    for r in &spec.reductions {
        out.push_str(&format!(
            "  {} __accb_scr_{}[{}];\n",
            r.ty.spelling(),
            r.var,
            threads
        ));
    }
    if dims >= 2 {
        out.push_str(&format!(
            "  for (long __accb_t1 = 0; __accb_t1 < {}; ++__accb_t1)\n",
            block[1]
        ));
    }
    out.push_str(&format!(
        "  for (long __accb_t0 = 0; __accb_t0 < {}; ++__accb_t0)\n  {{\n",
        block[0]
    ));
    let mut all_args = args.to_vec();
    all_args.push("__accb_b0".to_string());
    if dims >= 2 {
        all_args.push("__accb_b1".to_string());
    }
    all_args.push("__accb_t0".to_string());
    if dims >= 2 {
        all_args.push("__accb_t1".to_string());
    }
    all_args.push(block[0].to_string());
    if dims >= 2 {
        all_args.push(block[1].to_string());
    }
    for r in &spec.reductions {
        all_args.push(format!("__accb_scr_{}", r.var));
    }
    out.push_str(&format!("    {}({});\n", spec.name, all_args.join(", ")));
    out.push_str("  }\n");

    // Phase 2: block-local tree fold over the scratch array, halving the
    // stride each step, then one partial per block.
    let pow2 = threads.next_power_of_two();
    for r in &spec.reductions {
        let scr = format!("__accb_scr_{}", r.var);
        out.push_str(&format!(
            "  {{\n    long __accb_s;\n    for (__accb_s = {half}; __accb_s > 0; __accb_s >>= 1) {{\n      long __accb_t;\n      for (__accb_t = 0; __accb_t < __accb_s; ++__accb_t) {{\n        if (__accb_t + __accb_s < {threads}) {{\n          {scr}[__accb_t] = {fold};\n        }}\n      }}\n    }}\n  }}\n",
            half = pow2 / 2,
            fold = render_op(r.op, &format!("{scr}[__accb_t]"), &format!("{scr}[__accb_t + __accb_s]")),
        ));
        let bidx = if dims >= 2 {
            "__accb_b1 * __accb_g0 + __accb_b0"
        } else {
            "__accb_b0"
        };
        out.push_str(&format!("  {}[{}] = {scr}[0];\n", r.partials, bidx));
    }
    out.push_str("}\n");
    out
}
