//! Final source assembly: runtime prelude, hoisted declarations, kernels,
//! forward declarations, and host code with dummy calls spliced out.

use crate::backends::{emit_host_runtime, emit_kernel, kernel_signature, Target, TargetProfile};
use crate::diag::{Diagnostic, ErrorCode, Location};

use super::hoist::HoistedDecl;
use super::kernel::KernelSpec;

#[derive(Debug, Clone, PartialEq)]
pub struct OutputFile {
    pub name: String,
    pub text: String,
}

/// One region's lowered replacement for its dummy call.
#[derive(Debug, Clone)]
pub struct LoweredRegion {
    pub id: u32,
    pub dummy_call: String,
    pub block: String,
}

/// Output names per target: `<stem>_ipmacc.cu` for cuda,
/// `<stem>_ipmacc.c` (+ `<stem>_ipmacc.cl` sidecar) for opencl,
/// `<stem>_ipmacc.c` for serial.
pub fn output_file_names(stem: &str, target: Target) -> Vec<String> {
    match target {
        Target::Cuda => vec![format!("{stem}_ipmacc.cu")],
        Target::Opencl => vec![format!("{stem}_ipmacc.c"), format!("{stem}_ipmacc.cl")],
        Target::Serial => vec![format!("{stem}_ipmacc.c")],
    }
}

/// Splice lowered blocks into host code and wrap everything into the final
/// compilable file set for the target.
pub fn assemble_output(
    host: &str,
    regions: &[LoweredRegion],
    hoisted: &[HoistedDecl],
    kernels: &[KernelSpec],
    profile: &TargetProfile,
    stem: &str,
) -> Result<Vec<OutputFile>, Diagnostic> {
    // Parent regions splice before their children, so ascending id order
    // lands nested dummy calls in the text before they are replaced.
    let mut spliced = host.to_string();
    let mut by_id: Vec<&LoweredRegion> = regions.iter().collect();
    by_id.sort_by_key(|r| r.id);
    for r in by_id {
        match spliced.matches(&r.dummy_call).count() {
            1 => spliced = spliced.replacen(&r.dummy_call, &r.block, 1),
            n => {
                return Err(Diagnostic::error(
                    ErrorCode::EInternal,
                    Location::default(),
                    format!("dummy call {} occurs {n} times, expected exactly 1", r.dummy_call),
                ));
            }
        }
    }
    if spliced.contains("__accb_region_") {
        return Err(Diagnostic::error(
            ErrorCode::EInternal,
            Location::default(),
            "unreplaced dummy call remains in host code",
        ));
    }

    let names = output_file_names(stem, profile.target);
    let mut host_file = String::new();
    host_file.push_str(&emit_host_runtime(profile));
    host_file.push('\n');

    match profile.target {
        Target::Opencl => {
            // Kernels and their hoisted support live in the .cl sidecar; the
            // host file only embeds the sidecar's name.
            let cl_name = names[1].clone();
            host_file = host_file.replace(crate::backends::opencl_source_placeholder(), &cl_name);
            host_file.push_str(&spliced);
            if !host_file.ends_with('\n') {
                host_file.push('\n');
            }

            let mut cl = String::new();
            for h in hoisted {
                cl.push_str(&h.text);
                cl.push_str("\n\n");
            }
            for k in kernels {
                cl.push_str(&format!("{};\n", kernel_signature(k, profile)));
            }
            cl.push('\n');
            for k in kernels {
                cl.push_str(&emit_kernel(k, profile));
                cl.push('\n');
            }
            Ok(vec![
                OutputFile {
                    name: names[0].clone(),
                    text: host_file,
                },
                OutputFile {
                    name: cl_name,
                    text: cl,
                },
            ])
        }
        Target::Cuda | Target::Serial => {
            if !hoisted.is_empty() {
                host_file.push_str("/* declarations hoisted for device code */\n");
                for h in hoisted {
                    if h.is_type {
                        host_file.push_str(&h.text);
                        host_file.push('\n');
                    } else if profile.target == Target::Cuda {
                        host_file.push_str("__device__ ");
                        host_file.push_str(&h.text);
                        host_file.push('\n');
                    } else {
                        // Serial shares one definition with the host code;
                        // a forward declaration suffices here.
                        if let Some(proto) = &h.prototype {
                            host_file.push_str(proto);
                            host_file.push('\n');
                        }
                    }
                }
                host_file.push('\n');
            }
            if !kernels.is_empty() {
                host_file.push_str("/* forward declarations */\n");
                for k in kernels {
                    host_file.push_str(&format!("{};\n", kernel_signature(k, profile)));
                }
                host_file.push('\n');
                for k in kernels {
                    host_file.push_str(&emit_kernel(k, profile));
                    host_file.push('\n');
                }
            }
            host_file.push_str(&spliced);
            if !host_file.ends_with('\n') {
                host_file.push('\n');
            }
            Ok(vec![OutputFile {
                name: names[0].clone(),
                text: host_file,
            }])
        }
    }
}
