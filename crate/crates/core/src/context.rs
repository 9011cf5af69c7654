//! Call edges and context tuples recovered from traces and helper objects.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::abstraction::{AbstractionConfig, AbstractionTable};
use crate::enricher::{self, name_matches, EnricherNames};
use crate::heap::{ConcreteObject, FieldValue, FrameView, HeapGraph, ObjectKind};
use crate::hprof::{Id, Warning};

pub const PADDING: &str = "<<immutable-context>>";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ContextError {
    #[error("{class} object {object} is malformed: {message}")]
    EnricherShapeMismatch { class: String, object: Id, message: String },
    #[error("context chain revisits object {0}")]
    CycleDetected(Id),
}

#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ContextTuple(pub Vec<String>);

impl ContextTuple {
    pub fn empty() -> Self {
        ContextTuple(Vec::new())
    }

    pub fn padding(n: usize) -> Self {
        ContextTuple(vec![PADDING.to_owned(); n])
    }

    fn padded_to(mut self, n: usize) -> Self {
        self.0.resize(n, PADDING.to_owned());
        self
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for ContextTuple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}]", self.0.join(", "))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Flavor {
    Insensitive,
    CallSite,
    Object,
    Type,
}

impl fmt::Display for Flavor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Flavor::Insensitive => "insensitive",
            Flavor::CallSite => "call-site",
            Flavor::Object => "object",
            Flavor::Type => "type",
        })
    }
}

impl FromStr for Flavor {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "insensitive" => Ok(Flavor::Insensitive),
            "call-site" | "callsite" => Ok(Flavor::CallSite),
            "object" => Ok(Flavor::Object),
            "type" => Ok(Flavor::Type),
            _ => Err(format!("unknown sensitivity flavor {s:?} (expected insensitive, call-site, object or type)")),
        }
    }
}

/// Flavor plus calling-context depth `n` and heap-context depth `m`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct SensitivityConfig {
    pub flavor: Flavor,
    pub n: usize,
    pub m: usize,
}

impl SensitivityConfig {
    pub const INSENSITIVE: SensitivityConfig = SensitivityConfig { flavor: Flavor::Insensitive, n: 0, m: 0 };

    pub fn new(flavor: Flavor, n: usize, m: usize) -> Result<Self, String> {
        if flavor == Flavor::Insensitive && (n, m) != (0, 0) {
            return Err("insensitive analysis takes no context depths".into());
        }
        Ok(SensitivityConfig { flavor, n, m })
    }

    pub fn is_insensitive(&self) -> bool {
        self.flavor == Flavor::Insensitive
    }
}

impl Default for SensitivityConfig {
    fn default() -> Self {
        Self::INSENSITIVE
    }
}

impl fmt::Display for SensitivityConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.flavor, self.n, self.m)
    }
}

/// `insensitive`, or `flavor:n:m` such as `object:2:1`.
impl FromStr for SensitivityConfig {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        let depth = |p: &str| p.parse::<usize>().map_err(|_| format!("bad context depth {p:?} in {s:?}"));
        match parts.as_slice() {
            [flavor] => SensitivityConfig::new(flavor.parse()?, 0, 0),
            [flavor, n, m] => SensitivityConfig::new(flavor.parse()?, depth(n)?, depth(m)?),
            _ => Err(format!("expected flavor:n:m, got {s:?}")),
        }
    }
}

/// Invocation-site identifier: caller signature and source line.
pub fn invocation_id(caller: &str, line: Option<u32>) -> String {
    match line {
        Some(l) => format!("{caller}/{l}"),
        None => format!("{caller}/-"),
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DynCallEdge {
    pub caller_method: String,
    pub caller_line: Option<u32>,
    pub callee_method: String,
    pub caller_ctx: ContextTuple,
    pub callee_ctx: ContextTuple,
}

impl DynCallEdge {
    pub fn invocation(&self) -> String {
        invocation_id(&self.caller_method, self.caller_line)
    }

    /// The edge with its contexts dropped.
    pub fn insensitive(&self) -> DynCallEdge {
        DynCallEdge { caller_ctx: ContextTuple::empty(), callee_ctx: ContextTuple::empty(), ..self.clone() }
    }
}

fn frame_edge(callee: &FrameView, caller: &FrameView) -> DynCallEdge {
    DynCallEdge {
        caller_method: caller.signature(),
        caller_line: caller.line,
        callee_method: callee.signature(),
        caller_ctx: ContextTuple::empty(),
        callee_ctx: ContextTuple::empty(),
    }
}

/// Every successive frame pair of every trace, as context-free edges.
pub fn edges_from_traces(graph: &HeapGraph) -> BTreeSet<DynCallEdge> {
    graph
        .traces
        .values()
        .flat_map(|t| t.frames.windows(2).map(|w| frame_edge(&w[0], &w[1])))
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct EdgeBinding {
    pub edge_obj: Id,
    pub caller_ctx: Option<Id>,
    pub callee_ctx: Option<Id>,
    /// Allocation trace of the helper, `[helper ctor, callee, caller, ...]`.
    pub frames: Vec<FrameView>,
    /// The trace is missing or too short to name a caller.
    pub degenerate: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EnricherBindings {
    /// Object to the receiver of its allocating method.
    pub obj_ctx: BTreeMap<Id, Id>,
    pub edges: Vec<EdgeBinding>,
    /// Ids of all helper objects; they are bookkeeping, not program state.
    pub helpers: BTreeSet<Id>,
    pub warnings: Vec<Warning>,
}

fn ref_field(
    class: &str,
    obj: &ConcreteObject,
    field: &str,
    warnings: &mut Vec<Warning>,
) -> Result<Option<Id>, ContextError> {
    let mismatch = |message: String| ContextError::EnricherShapeMismatch { class: class.to_owned(), object: obj.id, message };
    if obj.kind() != ObjectKind::Instance {
        return Err(mismatch("not an instance".into()));
    }
    match obj.field(field) {
        None => Err(mismatch(format!("no field {field}"))),
        Some(FieldValue::Primitive(_)) => Err(mismatch(format!("field {field} is not a reference"))),
        Some(FieldValue::Null) => Ok(None),
        Some(FieldValue::Object(id)) => Ok(Some(*id)),
        Some(FieldValue::Dangling(id)) => {
            warnings.push(Warning::new(format!("{class} {}: {field} points at missing object {id}", obj.id)));
            Ok(None)
        }
    }
}

pub fn is_helper_class(name: &str, names: &EnricherNames) -> bool {
    [&names.obj_ctx_class, &names.edge_ctx_class, &names.class_data_class]
        .iter()
        .any(|n| name_matches(name, n))
}

/// Finds the helper objects in the heap and reads their links.
pub fn recognize_enrichers(graph: &HeapGraph, names: &EnricherNames) -> Result<EnricherBindings, ContextError> {
    let mut b = EnricherBindings::default();
    for obj in graph.objects.values() {
        if obj.kind() == ObjectKind::Instance && is_helper_class(&obj.type_name, names) {
            b.helpers.insert(obj.id);
        }
    }
    let of_class = |configured: &str| -> Vec<_> {
        graph
            .objects
            .values()
            .filter(|o| o.kind() == ObjectKind::Instance && name_matches(&o.type_name, configured))
            .collect()
    };

    for obj in of_class(&names.obj_ctx_class) {
        let class = obj.type_name.as_str();
        let target = ref_field(class, obj, enricher::OBJ_FIELD, &mut b.warnings)?;
        let ctx = ref_field(class, obj, enricher::CTX_FIELD, &mut b.warnings)?;
        let (Some(target), Some(ctx)) = (target, ctx) else { continue };
        match b.obj_ctx.get(&target) {
            Some(&prev) if prev != ctx => b.warnings.push(Warning::new(format!(
                "object {target} has contexts {prev} and {ctx}; keeping {prev}"
            ))),
            Some(_) => {}
            None => {
                b.obj_ctx.insert(target, ctx);
            }
        }
    }

    for obj in of_class(&names.edge_ctx_class) {
        let class = obj.type_name.as_str();
        let caller_ctx = ref_field(class, obj, enricher::CALLER_CTX_FIELD, &mut b.warnings)?;
        let callee_ctx = ref_field(class, obj, enricher::CALLEE_CTX_FIELD, &mut b.warnings)?;
        let frames = graph.alloc_trace(obj).map(|t| t.frames.clone()).unwrap_or_default();
        let degenerate = frames.len() < 3;
        b.edges.push(EdgeBinding { edge_obj: obj.id, caller_ctx, callee_ctx, frames, degenerate });
    }
    Ok(b)
}

/// A call recorded by an edge helper: the callee is the helper trace's
/// second frame, the caller its third.
#[derive(Clone, Debug, PartialEq)]
pub struct RecordedCall<'b> {
    pub edge: DynCallEdge,
    pub binding: &'b EdgeBinding,
}

pub fn edges_from_edgectx(bindings: &EnricherBindings) -> (Vec<RecordedCall<'_>>, Vec<Warning>) {
    let mut calls = Vec::new();
    let mut warnings = Vec::new();
    for b in &bindings.edges {
        if b.degenerate {
            warnings.push(Warning::new(format!(
                "edge helper {} has a trace of {} frame(s); skipped",
                b.edge_obj,
                b.frames.len()
            )));
            continue;
        }
        calls.push(RecordedCall { edge: frame_edge(&b.frames[1], &b.frames[2]), binding: b });
    }
    (calls, warnings)
}

/// Everything context computation reads.
#[derive(Clone, Copy)]
pub struct ContextInputs<'a> {
    pub graph: &'a HeapGraph,
    pub table: &'a AbstractionTable,
    pub bindings: &'a EnricherBindings,
    pub abstraction: &'a AbstractionConfig,
}

impl ContextInputs<'_> {
    fn alpha(&self, id: Id, flavor: Flavor) -> String {
        match flavor {
            Flavor::Type => self.table.allocator_class(id).to_owned(),
            _ => self.table.key(id).map_or_else(|| format!("<missing {id}>"), str::to_owned),
        }
    }

    fn is_commonplace(&self, id: Id) -> bool {
        self.graph.object(id).is_some_and(|o| self.abstraction.is_commonplace(&o.type_name))
    }

    /// `alpha(start), alpha(beta(start)), ...`, `len` components at most.
    fn chain(&self, start: Id, len: usize, flavor: Flavor, mut seen: BTreeSet<Id>) -> Result<Vec<String>, ContextError> {
        let mut out = Vec::new();
        let mut cur = Some(start);
        while let Some(id) = cur.filter(|_| out.len() < len) {
            if !seen.insert(id) {
                return Err(ContextError::CycleDetected(id));
            }
            out.push(self.alpha(id, flavor));
            cur = self.bindings.obj_ctx.get(&id).copied();
        }
        Ok(out)
    }
}

pub fn call_site_component(frame: &FrameView) -> String {
    match frame.line {
        Some(l) => format!("{}@{l}", frame.signature()),
        None => format!("{}@-", frame.signature()),
    }
}

/// Call-site context of the method at `frames[at]`: the call sites below it.
pub fn call_site_context(frames: &[FrameView], at: usize, n: usize) -> ContextTuple {
    ContextTuple(frames.iter().skip(at + 1).take(n).map(call_site_component).collect()).padded_to(n)
}

/// Heap context of an object, `m` components long.
pub fn heap_context(inputs: &ContextInputs<'_>, obj: Id, sens: &SensitivityConfig) -> Result<ContextTuple, ContextError> {
    let m = sens.m;
    if sens.is_insensitive() || m == 0 {
        return Ok(ContextTuple::empty());
    }
    if inputs.is_commonplace(obj) {
        return Ok(ContextTuple::padding(m));
    }
    match sens.flavor {
        Flavor::CallSite => {
            let trace = inputs.graph.object(obj).and_then(|o| inputs.graph.alloc_trace(o));
            Ok(match (trace, inputs.table.alloc.get(&obj)) {
                (Some(t), Some(info)) => call_site_context(&t.frames, info.frame_index, m),
                _ => ContextTuple::padding(m),
            })
        }
        flavor => {
            let Some(&first) = inputs.bindings.obj_ctx.get(&obj) else {
                return Ok(ContextTuple::padding(m));
            };
            let comps = inputs.chain(first, m, flavor, BTreeSet::from([obj]))?;
            Ok(ContextTuple(comps).padded_to(m))
        }
    }
}

/// Calling context of a method invoked on receiver `ctx_obj` (object and
/// type flavors). No receiver means a static or unrecorded call.
pub fn calling_context(inputs: &ContextInputs<'_>, ctx_obj: Option<Id>, sens: &SensitivityConfig) -> Result<ContextTuple, ContextError> {
    let n = sens.n;
    if sens.is_insensitive() || n == 0 {
        return Ok(ContextTuple::empty());
    }
    let Some(r) = ctx_obj else {
        return Ok(ContextTuple::padding(n));
    };
    Ok(ContextTuple(inputs.chain(r, n, sens.flavor, BTreeSet::new())?).padded_to(n))
}

/// Contexts for a whole heap under one sensitivity setting.
#[derive(Clone, Debug, Default)]
pub struct Contexts {
    pub sensitivity: SensitivityConfig,
    /// Heap context per object; absent for helper objects.
    pub heap: BTreeMap<Id, ContextTuple>,
    pub edges: BTreeSet<DynCallEdge>,
    /// Methods seen on any trace outside the helper classes.
    pub frame_methods: BTreeSet<String>,
    pub warnings: Vec<Warning>,
}

impl Contexts {
    pub fn heap_of(&self, id: Id) -> ContextTuple {
        self.heap.get(&id).cloned().unwrap_or_else(|| self.padding_heap())
    }

    pub fn padding_heap(&self) -> ContextTuple {
        ContextTuple::padding(if self.sensitivity.is_insensitive() { 0 } else { self.sensitivity.m })
    }

    pub fn padding_call(&self) -> ContextTuple {
        ContextTuple::padding(if self.sensitivity.is_insensitive() { 0 } else { self.sensitivity.n })
    }
}

/// Edges are the union of trace-derived and helper-recorded calls. Frames of
/// the helper classes never appear. Under object and type flavors a trace
/// edge only gets padding contexts, so it is dropped when a helper already
/// recorded the same call with real contexts.
pub fn compute_contexts(
    inputs: &ContextInputs<'_>,
    sens: &SensitivityConfig,
    names: &EnricherNames,
) -> Result<Contexts, ContextError> {
    let mut out = Contexts { sensitivity: *sens, ..Default::default() };
    let helper_frame = |f: &FrameView| is_helper_class(&f.class_name, names);

    for obj in inputs.graph.objects.values() {
        if !inputs.bindings.helpers.contains(&obj.id) {
            out.heap.insert(obj.id, heap_context(inputs, obj.id, sens)?);
        }
    }

    let (recorded, warnings) = edges_from_edgectx(inputs.bindings);
    out.warnings.extend(warnings);
    let mut recorded_plain = BTreeSet::new();
    for call in &recorded {
        let frames = &call.binding.frames;
        let (caller_ctx, callee_ctx) = match sens.flavor {
            Flavor::Insensitive => (ContextTuple::empty(), ContextTuple::empty()),
            Flavor::CallSite => (call_site_context(frames, 2, sens.n), call_site_context(frames, 1, sens.n)),
            _ => (
                calling_context(inputs, call.binding.caller_ctx, sens)?,
                calling_context(inputs, call.binding.callee_ctx, sens)?,
            ),
        };
        recorded_plain.insert(call.edge.clone());
        out.edges.insert(DynCallEdge { caller_ctx, callee_ctx, ..call.edge.clone() });
    }

    for trace in inputs.graph.traces.values() {
        let frames = &trace.frames;
        for f in frames {
            if !helper_frame(f) {
                out.frame_methods.insert(f.signature());
            }
        }
        for i in 0..frames.len().saturating_sub(1) {
            let (callee, caller) = (&frames[i], &frames[i + 1]);
            if helper_frame(callee) || helper_frame(caller) {
                continue;
            }
            let plain = frame_edge(callee, caller);
            let (caller_ctx, callee_ctx) = match sens.flavor {
                Flavor::Insensitive => (ContextTuple::empty(), ContextTuple::empty()),
                Flavor::CallSite => (call_site_context(frames, i + 1, sens.n), call_site_context(frames, i, sens.n)),
                _ if recorded_plain.contains(&plain) => continue,
                _ => (ContextTuple::padding(sens.n), ContextTuple::padding(sens.n)),
            };
            out.edges.insert(DynCallEdge { caller_ctx, callee_ctx, ..plain });
        }
    }
    Ok(out)
}
