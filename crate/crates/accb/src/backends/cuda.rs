//! CUDA-style target: grid/block launches, device API memory helpers.

use super::TargetProfile;
use crate::translate::KernelSpec;

pub fn profile() -> TargetProfile {
    TargetProfile {
        target: super::Target::Cuda,
        kernel_qualifier: "__global__ void",
        array_param_prefix: "",
        block_local_id: ["threadIdx.x", "threadIdx.y"],
        block_id: ["blockIdx.x", "blockIdx.y"],
        block_extent: ["blockDim.x", "blockDim.y"],
        grid_extent: ["gridDim.x", "gridDim.y"],
        barrier: "__syncthreads();",
        shared_decl_prefix: "__shared__ ",
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
#include <cuda_runtime.h>

static void acc_check(cudaError_t err, const char* what) {{
    if (err != cudaSuccess) {{
        fprintf(stderr, "accb: %s: %s\n", what, cudaGetErrorString(err));
        exit(70);
    }}
}}
static void* acc_alloc(size_t bytes) {{
    void* p = 0;
    acc_check(cudaMalloc(&p, bytes ? bytes : 1), "device allocation");
    return p;
}}
static void acc_free(void* handle) {{
    acc_check(cudaFree(handle), "device free");
}}
static void acc_copy_h2d(void* dst, const void* src, size_t bytes, size_t offset) {{
    acc_check(cudaMemcpy((char*)dst + offset, (const char*)src + offset, bytes,
                         cudaMemcpyHostToDevice), "host-to-device copy");
}}
static void acc_copy_d2h(void* dst, const void* src, size_t bytes, size_t offset) {{
    acc_check(cudaMemcpy((char*)dst + offset, (const char*)src + offset, bytes,
                         cudaMemcpyDeviceToHost), "device-to-host copy");
}}
{registry}
{marker}
"#,
        registry = registry_helpers(),
        marker = super::PRELUDE_END_MARKER,
    )
}

/// Host-side name -> device-handle table backing present().
pub fn registry_helpers() -> String {
    r#"#define ACC_PRESENT_MAX 256
static const char* acc_present_names[ACC_PRESENT_MAX];
static void* acc_present_handles[ACC_PRESENT_MAX];
static int acc_present_count = 0;
static void acc_register(const char* name, void* handle) {
    if (acc_present_count < ACC_PRESENT_MAX) {
        acc_present_names[acc_present_count] = name;
        acc_present_handles[acc_present_count] = handle;
        acc_present_count++;
    }
}
static void acc_unregister(const char* name) {
    int i;
    for (i = acc_present_count - 1; i >= 0; --i) {
        if (strcmp(acc_present_names[i], name) == 0) {
            acc_present_names[i] = acc_present_names[acc_present_count - 1];
            acc_present_handles[i] = acc_present_handles[acc_present_count - 1];
            acc_present_count--;
            return;
        }
    }
}
static void* acc_present_lookup(const char* name) {
    int i;
    for (i = acc_present_count - 1; i >= 0; --i) {
        if (strcmp(acc_present_names[i], name) == 0) return acc_present_handles[i];
    }
    fprintf(stderr, "accb: present(%s): no live device allocation\n", name);
    exit(71);
    return 0;
}"#
    .to_string()
}

pub fn launch_core(spec: &KernelSpec, args: &[String]) -> String {
    let mut out = String::new();
    let dims = spec.geometry.dims;
    if dims >= 2 {
        out.push_str("dim3 __accb_grid((unsigned)__accb_g0, (unsigned)__accb_g1);\n");
        out.push_str(&format!(
            "dim3 __accb_block({}, {});\n",
            spec.geometry.block[0], spec.geometry.block[1]
        ));
    } else {
        out.push_str("dim3 __accb_grid((unsigned)__accb_g0);\n");
        out.push_str(&format!("dim3 __accb_block({});\n", spec.geometry.block[0]));
    }
    let mut all_args = args.to_vec();
    for r in &spec.reductions {
        all_args.push(r.partials.clone());
    }
    out.push_str(&format!(
        "{}<<<__accb_grid, __accb_block>>>({});\n",
        spec.name,
        all_args.join(", ")
    ));
    out.push_str("acc_check(cudaDeviceSynchronize(), \"kernel launch\");\n");
    out
}
