//! Embedding matrices, task ground truth, and their on-disk formats.
//!
//! Embeddings are never normalized here; cosine scoring normalizes at
//! similarity time only.

mod bundle;
mod emb;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use bundle::{
    load_task_bundle, save_task_bundle, BundlePaths, ClassificationBundle, ClusteringBundle,
    Qrel, RetrievalBundle, StsBundle, StsPair, TaskBundle,
};
pub use emb::{decode, encode, load_embeddings, save_embeddings};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptType {
    Classification,
    Clustering,
    RetrievalQuery,
    RetrievalPassage,
    Sts,
    None,
}

impl PromptType {
    pub const ALL: [PromptType; 6] = [
        PromptType::Classification,
        PromptType::Clustering,
        PromptType::RetrievalQuery,
        PromptType::RetrievalPassage,
        PromptType::Sts,
        PromptType::None,
    ];

    /// Header byte used by the EMB1 format.
    pub fn code(self) -> u8 {
        Self::ALL.iter().position(|&p| p == self).unwrap() as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PromptType::Classification => "classification",
            PromptType::Clustering => "clustering",
            PromptType::RetrievalQuery => "retrieval_query",
            PromptType::RetrievalPassage => "retrieval_passage",
            PromptType::Sts => "sts",
            PromptType::None => "none",
        }
    }
}

impl fmt::Display for PromptType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PromptType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::param("prompt_type", format!("unknown prompt type `{s}`")))
    }
}

/// One row per text. `source_tag` is free text (the file path when loaded).
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingMatrix {
    pub matrix: Matrix,
    pub prompt_type: PromptType,
    pub source_tag: String,
}

impl EmbeddingMatrix {
    pub fn new(matrix: Matrix, prompt_type: PromptType) -> Self {
        Self {
            matrix,
            prompt_type,
            source_tag: String::new(),
        }
    }

    pub fn with_tag(mut self, tag: impl Into<String>) -> Self {
        self.source_tag = tag.into();
        self
    }

    pub fn rows(&self) -> usize {
        self.matrix.rows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.cols()
    }

    /// Same prompt type and tag, different values.
    pub fn replace_matrix(&self, matrix: Matrix) -> Self {
        Self {
            matrix,
            prompt_type: self.prompt_type,
            source_tag: self.source_tag.clone(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Classification,
    Clustering,
    Retrieval,
    Sts,
}

impl TaskKind {
    pub const ALL: [TaskKind; 4] = [
        TaskKind::Classification,
        TaskKind::Clustering,
        TaskKind::Retrieval,
        TaskKind::Sts,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::Classification => "classification",
            TaskKind::Clustering => "clustering",
            TaskKind::Retrieval => "retrieval",
            TaskKind::Sts => "sts",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::param("task", format!("unknown task kind `{s}`")))
    }
}
