//! OpenCL-style target: explicit context/queue threaded through the memory
//! helpers; kernel source lives in a `.cl` sidecar loaded at run time from a
//! path resolved relative to the executable.

use super::TargetProfile;
use crate::translate::KernelSpec;

/// Placeholder in the prelude that assembly replaces with the sidecar name.
pub const CL_SOURCE_PLACEHOLDER: &str = "__ACCB_CL_SOURCE__";

pub fn profile() -> TargetProfile {
    TargetProfile {
        target: super::Target::Opencl,
        kernel_qualifier: "__kernel void",
        array_param_prefix: "__global ",
        block_local_id: ["get_local_id(0)", "get_local_id(1)"],
        block_id: ["get_group_id(0)", "get_group_id(1)"],
        block_extent: ["get_local_size(0)", "get_local_size(1)"],
        grid_extent: ["get_num_groups(0)", "get_num_groups(1)"],
        barrier: "barrier(CLK_LOCAL_MEM_FENCE);",
        shared_decl_prefix: "__local ",
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
#include <unistd.h>
#define CL_TARGET_OPENCL_VERSION 120
#include <CL/cl.h>

typedef struct {{
    cl_platform_id platform;
    cl_device_id device;
    cl_context context;
    cl_command_queue queue;
    cl_program program;
    int ready;
}} __accb_cl_state;
static __accb_cl_state __accb_cl;

static const char* __accb_cl_source_file = "{placeholder}";

static void acc_cl_check(cl_int err, const char* what) {{
    if (err != CL_SUCCESS) {{
        fprintf(stderr, "accb: %s: OpenCL error %d\n", what, (int)err);
        exit(70);
    }}
}}

/* Kernel source is looked up next to the executable first, then by the
   embedded name alone. */
static char* acc_cl_read_source(size_t* out_len) {{
    char path[4096];
    FILE* f = 0;
    long n = readlink("/proc/self/exe", path, sizeof(path) - 1);
    if (n > 0) {{
        path[n] = 0;
        char* slash = strrchr(path, '/');
        if (slash && (size_t)(slash - path) + strlen(__accb_cl_source_file) + 2 < sizeof(path)) {{
            strcpy(slash + 1, __accb_cl_source_file);
            f = fopen(path, "rb");
        }}
    }}
    if (!f) f = fopen(__accb_cl_source_file, "rb");
    if (!f) {{
        fprintf(stderr, "accb: cannot open kernel source '%s'\n", __accb_cl_source_file);
        exit(70);
    }}
    fseek(f, 0, SEEK_END);
    long size = ftell(f);
    fseek(f, 0, SEEK_SET);
    char* buf = (char*)malloc((size_t)size + 1);
    if (fread(buf, 1, (size_t)size, f) != (size_t)size) {{
        fprintf(stderr, "accb: short read on kernel source\n");
        exit(70);
    }}
    buf[size] = 0;
    fclose(f);
    *out_len = (size_t)size;
    return buf;
}}

static void acc_cl_init(__accb_cl_state* s) {{
    if (s->ready) return;
    acc_cl_check(clGetPlatformIDs(1, &s->platform, 0), "platform");
    cl_int err = clGetDeviceIDs(s->platform, CL_DEVICE_TYPE_GPU, 1, &s->device, 0);
    if (err != CL_SUCCESS) {{
        acc_cl_check(clGetDeviceIDs(s->platform, CL_DEVICE_TYPE_ALL, 1, &s->device, 0),
                     "device");
    }}
    s->context = clCreateContext(0, 1, &s->device, 0, 0, &err);
    acc_cl_check(err, "context");
    s->queue = clCreateCommandQueue(s->context, s->device, 0, &err);
    acc_cl_check(err, "queue");
    size_t len = 0;
    char* src = acc_cl_read_source(&len);
    const char* srcs[1];
    srcs[0] = src;
    s->program = clCreateProgramWithSource(s->context, 1, srcs, &len, &err);
    acc_cl_check(err, "program");
    err = clBuildProgram(s->program, 1, &s->device, "", 0, 0);
    if (err != CL_SUCCESS) {{
        char log[16384];
        clGetProgramBuildInfo(s->program, s->device, CL_PROGRAM_BUILD_LOG,
                              sizeof(log), log, 0);
        fprintf(stderr, "accb: kernel build failed:\n%s\n", log);
        exit(70);
    }}
    free(src);
    s->ready = 1;
}}

static cl_mem acc_alloc(__accb_cl_state* s, size_t bytes) {{
    acc_cl_init(s);
    cl_int err = 0;
    cl_mem m = clCreateBuffer(s->context, CL_MEM_READ_WRITE, bytes ? bytes : 1, 0, &err);
    acc_cl_check(err, "device allocation");
    return m;
}}
static void acc_free(cl_mem handle) {{
    acc_cl_check(clReleaseMemObject(handle), "device free");
}}
static void acc_copy_h2d(__accb_cl_state* s, cl_mem dst, const void* src, size_t bytes,
                         size_t offset) {{
    acc_cl_check(clEnqueueWriteBuffer(s->queue, dst, CL_TRUE, offset, bytes,
                                      (const char*)src + offset, 0, 0, 0),
                 "host-to-device copy");
}}
static void acc_copy_d2h(__accb_cl_state* s, void* dst, cl_mem src, size_t bytes,
                         size_t offset) {{
    acc_cl_check(clEnqueueReadBuffer(s->queue, src, CL_TRUE, offset, bytes,
                                     (char*)dst + offset, 0, 0, 0),
                 "device-to-host copy");
}}
static cl_kernel acc_get_kernel(__accb_cl_state* s, const char* name) {{
    cl_int err = 0;
    acc_cl_init(s);
    cl_kernel k = clCreateKernel(s->program, name, &err);
    acc_cl_check(err, "kernel lookup");
    return k;
}}
{registry}
{marker}
"#,
        placeholder = CL_SOURCE_PLACEHOLDER,
        registry = super::cuda::registry_helpers(),
        marker = super::PRELUDE_END_MARKER,
    )
}

pub fn launch_core(spec: &KernelSpec, args: &[String]) -> String {
    let dims = spec.geometry.dims;
    let block = &spec.geometry.block;
    let mut out = String::new();
    out.push_str(&format!(
        "cl_kernel __accb_k = acc_get_kernel(&__accb_cl, \"{}\");\n",
        spec.name
    ));
    let mut idx = 0usize;
    for (p, arg) in spec.params.iter().zip(args.iter()) {
        if p.is_array {
            out.push_str(&format!(
                "clSetKernelArg(__accb_k, {idx}, sizeof(cl_mem), &{arg});\n"
            ));
        } else {
            out.push_str(&format!(
                "clSetKernelArg(__accb_k, {idx}, sizeof({ty}), &{arg});\n",
                ty = p.ty.spelling()
            ));
        }
        idx += 1;
    }
    for r in &spec.reductions {
        out.push_str(&format!(
            "clSetKernelArg(__accb_k, {idx}, sizeof(cl_mem), &{});\n",
            r.partials
        ));
        idx += 1;
    }
    if dims >= 2 {
        out.push_str(&format!(
            "size_t __accb_local[2] = {{ {}, {} }};\n",
            block[0], block[1]
        ));
        out.push_str(&format!(
            "size_t __accb_global[2] = {{ (size_t)__accb_g0 * {}, (size_t)__accb_g1 * {} }};\n",
            block[0], block[1]
        ));
        out.push_str(
            "acc_cl_check(clEnqueueNDRangeKernel(__accb_cl.queue, __accb_k, 2, 0, __accb_global, __accb_local, 0, 0, 0), \"kernel launch\");\n",
        );
    } else {
        out.push_str(&format!("size_t __accb_local[1] = {{ {} }};\n", block[0]));
        out.push_str(&format!(
            "size_t __accb_global[1] = {{ (size_t)__accb_g0 * {} }};\n",
            block[0]
        ));
        out.push_str(
            "acc_cl_check(clEnqueueNDRangeKernel(__accb_cl.queue, __accb_k, 1, 0, __accb_global, __accb_local, 0, 0, 0), \"kernel launch\");\n",
        );
    }
    out.push_str("acc_cl_check(clFinish(__accb_cl.queue), \"kernel completion\");\n");
    out.push_str("clReleaseKernel(__accb_k);\n");
    out
}
