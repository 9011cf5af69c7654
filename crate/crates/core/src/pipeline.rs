//! The whole dump-to-facts run, shared by the command line and tests.

use serde::{Deserialize, Serialize};

use crate::abstraction::{abstraction_table, AbstractionConfig, AbstractionTable};
use crate::code::CodeModel;
use crate::context::{compute_contexts, recognize_enrichers, ContextError, ContextInputs, Contexts, EnricherBindings, SensitivityConfig};
use crate::enricher::EnricherNames;
use crate::facts::{collect_class_data, compute_facts, merged_code_inputs, ClassData, FactSet};
use crate::heap::{build_heap, HeapGraph};
use crate::hprof::{parse_dump, HprofError, Warning};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub abstraction: AbstractionConfig,
    #[serde(skip)]
    pub sensitivity: SensitivityConfig,
    pub enrichers: EnricherNames,
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Dump(#[from] HprofError),
    #[error(transparent)]
    Context(#[from] ContextError),
}

pub struct Analysis {
    pub graph: HeapGraph,
    pub code: CodeModel,
    pub table: AbstractionTable,
    pub bindings: EnricherBindings,
    pub contexts: Contexts,
}

impl Analysis {
    /// Reader, resolver, code model, helper and context warnings, in that order.
    pub fn warnings(&self) -> Vec<&Warning> {
        self.graph
            .warnings
            .iter()
            .chain(&self.code.warnings)
            .chain(&self.bindings.warnings)
            .chain(&self.contexts.warnings)
            .collect()
    }

    pub fn facts(&self, cfg: &PipelineConfig) -> FactSet {
        compute_facts(&self.graph, &self.table, &self.bindings, &self.contexts, &cfg.enrichers)
    }
}

pub fn analyze_graph(graph: HeapGraph, code: CodeModel, cfg: &PipelineConfig) -> Result<Analysis, ContextError> {
    let table = abstraction_table(&graph, &code, &cfg.abstraction);
    let bindings = recognize_enrichers(&graph, &cfg.enrichers)?;
    let inputs = ContextInputs { graph: &graph, table: &table, bindings: &bindings, abstraction: &cfg.abstraction };
    let contexts = compute_contexts(&inputs, &cfg.sensitivity, &cfg.enrichers)?;
    Ok(Analysis { graph, code, table, bindings, contexts })
}

pub fn analyze(dump: &[u8], code: CodeModel, cfg: &PipelineConfig) -> Result<Analysis, PipelineError> {
    let raw = parse_dump(dump)?;
    Ok(analyze_graph(build_heap(&raw), code, cfg)?)
}

/// Adds the classes kept in the heap by the agent to the static code model.
/// Loader directory names need object abstractions, which are computed here
/// against the static model alone.
pub fn with_recovered_classes(graph: &HeapGraph, code: CodeModel, cfg: &PipelineConfig) -> Result<(CodeModel, Vec<ClassData>), ContextError> {
    let table = abstraction_table(graph, &code, &cfg.abstraction);
    let (classes, warnings) = collect_class_data(graph, &table, &cfg.enrichers)?;
    let mut merged = if classes.is_empty() { code } else { merged_code_inputs(code, &classes) };
    merged.warnings.extend(warnings);
    Ok((merged, classes))
}
