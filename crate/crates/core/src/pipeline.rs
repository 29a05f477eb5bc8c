//! Inference pipeline: encode a document, compute marginals, rank sentences,
//! extract the tree and decode a summary.

use serde::{Deserialize, Serialize};

use crate::corpus::Document;
use crate::discourse::{
    build_stochastic, discourse_rank, extract_tree, rerank_root, DiscourseTree, TreeWeighting,
};
use crate::error::Result;
use crate::model::Model;
use crate::numkit::Mat;
use crate::reconstructor::{beam_search, parent_embeddings};
use crate::structattn::{score_matrix, tree_marginals, Marginals};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryOptions {
    pub use_discourse_rank: bool,
    pub lambda: f64,
    pub beam_size: usize,
    pub max_summary_len: usize,
    pub tree_weighting: TreeWeighting,
}

impl Default for SummaryOptions {
    fn default() -> Self {
        SummaryOptions {
            use_discourse_rank: true,
            lambda: 0.9,
            beam_size: 10,
            max_summary_len: 20,
            tree_weighting: TreeWeighting::LogProduct,
        }
    }
}

/// Generated summary plus the induced tree and sentence ranks.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DocumentSummary {
    pub id: String,
    pub summary_tokens: Vec<u32>,
    pub tree: DiscourseTree,
    pub ranks: Vec<f64>,
}

/// Marginals of a document under the current model.
pub fn document_marginals(model: &Model, doc: &Document) -> Result<Marginals> {
    let embeddings = crate::encoder::encode_document(doc, model);
    let structure: Vec<Mat> = embeddings.iter().map(|e| e.structure.clone()).collect();
    tree_marginals(&score_matrix(&structure, &model.scorer))
}

/// Full single-document inference.
pub fn summarize(model: &Model, doc: &Document, opts: &SummaryOptions) -> Result<DocumentSummary> {
    let embeddings = crate::encoder::encode_document(doc, model);
    let structure: Vec<Mat> = embeddings.iter().map(|e| e.structure.clone()).collect();
    let semantic: Vec<Mat> = embeddings.iter().map(|e| e.semantic.clone()).collect();
    let a = tree_marginals(&score_matrix(&structure, &model.scorer))?;

    let ranks = discourse_rank(&build_stochastic(&a), opts.lambda)?;
    let root_row = if opts.use_discourse_rank {
        Some(rerank_root(&a, &ranks)?)
    } else {
        None
    };
    let parents = parent_embeddings(&a, &semantic, &model.combiner, root_row.as_deref());
    let summary_tokens = beam_search(model, &parents[0], opts.beam_size, opts.max_summary_len);
    let tree = extract_tree(&a, opts.tree_weighting);
    Ok(DocumentSummary {
        id: doc.id.clone(),
        summary_tokens,
        tree,
        ranks,
    })
}
