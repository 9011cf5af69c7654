//! Shapes of the helper objects an instrumentation agent leaves in the heap.
//!
//! `ObjAndCtx { obj, ctx }` ties an object to the receiver of the method that
//! allocated it. `EdgeCtx { callerCtx, calleeCtx }` is allocated at a call;
//! its allocation trace is `[EdgeCtx.<init>, callee, caller, ...]`.
//! `ClassData { name, loader, bytecode }` keeps the defining bytes of a
//! loaded class.

use serde::{Deserialize, Serialize};

pub const OBJ_FIELD: &str = "obj";
pub const CTX_FIELD: &str = "ctx";
pub const CALLER_CTX_FIELD: &str = "callerCtx";
pub const CALLEE_CTX_FIELD: &str = "calleeCtx";
pub const NAME_FIELD: &str = "name";
pub const LOADER_FIELD: &str = "loader";
pub const BYTECODE_FIELD: &str = "bytecode";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnricherNames {
    pub obj_ctx_class: String,
    pub edge_ctx_class: String,
    pub class_data_class: String,
}

impl Default for EnricherNames {
    fn default() -> Self {
        EnricherNames {
            obj_ctx_class: "heapdl.ObjAndCtx".into(),
            edge_ctx_class: "heapdl.EdgeCtx".into(),
            class_data_class: "heapdl.ClassData".into(),
        }
    }
}

/// True when `actual` is `configured`, or `configured` preceded by a package
/// prefix, so relocated (shaded) copies of the helper classes still match.
pub fn name_matches(actual: &str, configured: &str) -> bool {
    actual == configured
        || actual
            .strip_suffix(configured)
            .is_some_and(|prefix| prefix.ends_with('.'))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suffix_match_needs_a_package_boundary() {
        assert!(name_matches("heapdl.ObjAndCtx", "heapdl.ObjAndCtx"));
        assert!(name_matches("shaded.heapdl.ObjAndCtx", "heapdl.ObjAndCtx"));
        assert!(!name_matches("xheapdl.ObjAndCtx", "heapdl.ObjAndCtx"));
        assert!(!name_matches("heapdl.ObjAndCtx2", "heapdl.ObjAndCtx"));
    }
}
