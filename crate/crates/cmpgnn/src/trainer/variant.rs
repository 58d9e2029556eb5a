//! Training-variant registry: the full model and its ablations behind a
//! common trait, looked up by name from config or CLI.
//!
//! Variants differ in which loss terms they keep and how cross-domain edges
//! are chosen each epoch; everything else in the epoch loop is shared.

use crate::bridger::{random_insert_baseline, score_and_select, stream_rng, CandidateTable, InsertionDecision};
use crate::error::{Error, Result};
use crate::numkernel::DenseMatrix;

/// Inputs available to an epoch's edge-selection step.
pub struct SelectionContext<'a> {
    /// Link-predictor embeddings of the combined graph (absent when the
    /// variant skips the predictor).
    pub z_c: Option<&'a DenseMatrix>,
    pub table: &'a CandidateTable,
    pub h_s_pre: &'a DenseMatrix,
    pub h_t_pre: &'a DenseMatrix,
    pub threshold: f64,
    /// Global index of the first target node.
    pub offset: usize,
    pub epoch: usize,
    pub seed: u64,
    /// Pair budget for sampling-based selection (the per-epoch scoring
    /// budget, `K * N_T`).
    pub budget: usize,
}

pub trait TrainingVariant: Send + Sync {
    fn name(&self) -> &'static str;

    /// Run the link predictor: reconstruction loss plus predictor-scored
    /// insertion.
    fn uses_link_predictor(&self) -> bool;

    /// Include the contrastive mutual-information term.
    fn uses_mi(&self) -> bool;

    /// Choose this epoch's cross-domain edges. Returns all considered
    /// decisions (accepted and not) and the number of predictor
    /// evaluations spent.
    fn select_insertions(&self, ctx: &SelectionContext<'_>) -> Result<(Vec<InsertionDecision>, u64)>;
}

/// The complete model: all four losses, predictor-scored insertion.
pub struct FullVariant;

/// Encoder + classifier only: classification and entropy losses, no link
/// predictor, no contrastive term, and no edges ever inserted.
pub struct GcnDaVariant;

/// Link predictor omitted: random cross-domain pairs above the similarity
/// threshold are inserted with weight 1 (same scoring budget per epoch).
pub struct RandomLinkVariant;

/// Full model minus the mutual-information term.
pub struct NoMiVariant;

impl TrainingVariant for FullVariant {
    fn name(&self) -> &'static str {
        "full"
    }
    fn uses_link_predictor(&self) -> bool {
        true
    }
    fn uses_mi(&self) -> bool {
        true
    }
    fn select_insertions(&self, ctx: &SelectionContext<'_>) -> Result<(Vec<InsertionDecision>, u64)> {
        let z_c = ctx
            .z_c
            .ok_or_else(|| Error::Validation("predictor embeddings missing".into()))?;
        Ok(score_and_select(z_c, ctx.table, ctx.offset, ctx.threshold))
    }
}

impl TrainingVariant for GcnDaVariant {
    fn name(&self) -> &'static str {
        "gcn_da"
    }
    fn uses_link_predictor(&self) -> bool {
        false
    }
    fn uses_mi(&self) -> bool {
        false
    }
    fn select_insertions(&self, _ctx: &SelectionContext<'_>) -> Result<(Vec<InsertionDecision>, u64)> {
        Ok((Vec::new(), 0))
    }
}

impl TrainingVariant for RandomLinkVariant {
    fn name(&self) -> &'static str {
        "random_link"
    }
    fn uses_link_predictor(&self) -> bool {
        false
    }
    fn uses_mi(&self) -> bool {
        true
    }
    fn select_insertions(&self, ctx: &SelectionContext<'_>) -> Result<(Vec<InsertionDecision>, u64)> {
        let mut rng = stream_rng(ctx.seed, ctx.epoch as u64, 0, super::TAG_RANDOM_LINK);
        Ok((
            random_insert_baseline(
                ctx.h_s_pre,
                ctx.h_t_pre,
                ctx.threshold,
                ctx.budget,
                ctx.offset,
                &mut rng,
            ),
            0,
        ))
    }
}

impl TrainingVariant for NoMiVariant {
    fn name(&self) -> &'static str {
        "no_mi"
    }
    fn uses_link_predictor(&self) -> bool {
        true
    }
    fn uses_mi(&self) -> bool {
        false
    }
    fn select_insertions(&self, ctx: &SelectionContext<'_>) -> Result<(Vec<InsertionDecision>, u64)> {
        FullVariant.select_insertions(ctx)
    }
}

static REGISTRY: [&dyn TrainingVariant; 4] =
    [&FullVariant, &GcnDaVariant, &RandomLinkVariant, &NoMiVariant];

/// All registered variants, in ablation-report order.
pub fn registry() -> &'static [&'static dyn TrainingVariant] {
    &REGISTRY
}

pub fn variant_names() -> Vec<&'static str> {
    REGISTRY.iter().map(|v| v.name()).collect()
}

/// Look a variant up by its registered name.
pub fn lookup(name: &str) -> Result<&'static dyn TrainingVariant> {
    REGISTRY
        .iter()
        .copied()
        .find(|v| v.name() == name)
        .ok_or_else(|| {
            Error::Validation(format!(
                "unknown training variant '{}' (registered: {})",
                name,
                variant_names().join(", ")
            ))
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_lookup_by_name() {
        for name in ["full", "gcn_da", "random_link", "no_mi"] {
            assert_eq!(lookup(name).unwrap().name(), name);
        }
        assert!(matches!(lookup("bogus"), Err(Error::Validation(_))));
    }

    #[test]
    fn variant_flags() {
        assert!(lookup("full").unwrap().uses_link_predictor());
        assert!(lookup("full").unwrap().uses_mi());
        assert!(!lookup("gcn_da").unwrap().uses_link_predictor());
        assert!(!lookup("gcn_da").unwrap().uses_mi());
        assert!(!lookup("random_link").unwrap().uses_link_predictor());
        assert!(lookup("random_link").unwrap().uses_mi());
        assert!(lookup("no_mi").unwrap().uses_link_predictor());
        assert!(!lookup("no_mi").unwrap().uses_mi());
    }
}
