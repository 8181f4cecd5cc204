//! Data-clause lowering: device allocation, transfers, and deallocation
//! around a region's inner code.

use crate::accvalidate::{ClauseKind, ClauseVar};
use crate::backends::TargetProfile;
use crate::cfront::{Ast, VarDecl};
use crate::diag::{Diagnostic, ErrorCode};
use crate::irdoc::{Region, RegionTable};

use super::scope::{element_type, find_decl_at, infer_transfer_size, TransferSize};

/// One variable's slot in a region's data environment.
#[derive(Debug, Clone)]
pub struct DataEnvEntry {
    pub var: String,
    pub kind: ClauseKind,
    pub clause_var: ClauseVar,
    pub decl: VarDecl,
    pub transfer: Option<TransferSize>,
    /// Region id of the directive that owns this clause.
    pub owner: u32,
}

/// The data environment governing a region: entries from enclosing data
/// directives (outermost first), then the region's own clauses.
pub fn data_env(region: &Region, ast: &Ast) -> Result<Vec<DataEnvEntry>, Diagnostic> {
    let mut env = Vec::new();
    for d in region
        .inherited
        .iter()
        .chain(std::iter::once(&region.directive))
    {
        for c in &d.clauses {
            if !c.kind.is_data_clause() {
                continue;
            }
            for v in &c.vars {
                let decl = find_decl_at(ast, d.pragma_tok, &v.name)
                    .map(|(decl, _)| decl.clone())
                    .ok_or_else(|| {
                        Diagnostic::error(
                            ErrorCode::EUnbound,
                            v.loc,
                            format!("'{}' in data clause is not declared", v.name),
                        )
                    })?;
                let transfer = infer_transfer_size(&decl, v);
                env.push(DataEnvEntry {
                    var: v.name.clone(),
                    kind: c.kind,
                    clause_var: v.clone(),
                    decl,
                    transfer,
                    owner: region.id,
                });
            }
        }
    }
    Ok(env)
}

/// Lowered bracketing for one region's own data clauses.
#[derive(Debug, Clone, Default)]
pub struct DataBlock {
    /// Allocations, registrations, and host-to-device transfers.
    pub pre: Vec<String>,
    /// Device-to-host transfers, deregistrations, and frees.
    pub post: Vec<String>,
}

/// Emit the data management bracketing for the region's own directive:
/// allocation and inbound copies before the inner code, outbound copies and
/// deallocation after. `present` emits a registry lookup and no transfers.
pub fn lower_data_clauses(
    region: &Region,
    ast: &Ast,
    table: &RegionTable,
    profile: &TargetProfile,
) -> Result<DataBlock, Diagnostic> {
    let mut block = DataBlock::default();
    for c in &region.directive.clauses {
        if !c.kind.is_data_clause() {
            continue;
        }
        for v in &c.vars {
            let decl = find_decl_at(ast, region.directive.pragma_tok, &v.name)
                .map(|(decl, _)| decl.clone())
                .ok_or_else(|| {
                    Diagnostic::error(
                        ErrorCode::EUnbound,
                        v.loc,
                        format!("'{}' in data clause is not declared", v.name),
                    )
                })?;
            let elem = element_type(&decl);
            if c.kind == ClauseKind::Present {
                check_present_has_allocation(region, table, &v.name).map_err(|mut d| {
                    d.location = v.loc;
                    d
                })?;
                block.pre.push(profile.present_decl(&v.name, &elem));
                continue;
            }
            let transfer = infer_transfer_size(&decl, v).ok_or_else(|| {
                Diagnostic::error(
                    ErrorCode::ESize,
                    v.loc,
                    format!(
                        "size of '{}' is unknown: add [start:count] bounds or use a fixed-size array",
                        v.name
                    ),
                )
            })?;
            let bytes = transfer.transfer_bytes();
            let offset = transfer.offset_bytes();
            block
                .pre
                .push(profile.handle_decl(&v.name, &elem, &transfer.alloc_bytes()));
            block.pre.push(
                profile.register_call(&v.name, &format!("{}__dev", v.name)),
            );
            if matches!(c.kind, ClauseKind::Copy | ClauseKind::Copyin) {
                block.pre.push(profile.h2d_call(&v.name, &bytes, &offset));
            }
            if matches!(c.kind, ClauseKind::Copy | ClauseKind::Copyout) {
                block.post.push(profile.d2h_call(&v.name, &bytes, &offset));
            }
            block.post.push(profile.unregister_call(&v.name));
            block
                .post
                .push(profile.free_call(&format!("{}__dev", v.name)));
        }
    }
    Ok(block)
}

/// `present(x)` requires a live enclosing allocation. Lexically enclosing
/// regions are checked directly; an allocation in any other region is
/// accepted statically (the call chain decides at run time).
fn check_present_has_allocation(
    region: &Region,
    table: &RegionTable,
    name: &str,
) -> Result<(), Diagnostic> {
    let allocates = |clauses: &[crate::accvalidate::Clause]| {
        clauses.iter().any(|c| {
            matches!(
                c.kind,
                ClauseKind::Copy | ClauseKind::Copyin | ClauseKind::Copyout | ClauseKind::Create
            ) && c.vars.iter().any(|v| v.name == name)
        })
    };
    if region.inherited.iter().any(|d| allocates(&d.clauses)) {
        return Ok(());
    }
    if table
        .iter()
        .filter(|r| r.id != region.id)
        .any(|r| allocates(&r.directive.clauses))
    {
        return Ok(());
    }
    Err(Diagnostic::error(
        ErrorCode::EPresent,
        region.directive.loc,
        format!("present('{name}') has no live enclosing allocation"),
    ))
}
