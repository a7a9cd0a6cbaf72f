//! Deterministic offline backend: majority vote over the cosine-nearest
//! in-context examples.
//!
//! The backend re-parses the fixed prompt layout, embeds the example and
//! query texts with the local embedder, and answers each query with the
//! majority label among its `vote_k` nearest examples (ties and zero-shot
//! prompts answer 0). Predictions depend on which examples are in the
//! prompt, so selection quality is observable end to end without any
//! remote model.

use std::sync::Arc;

use crate::dataset::Schema;
use crate::error::Result;
use crate::predictor::{Backend, CLASSIFY_HEADER, EXAMPLES_HEADER};
use crate::vectorstore::{cosine, Embedder, LocalEmbedder};

pub struct MockKnnBackend {
    embedder: Arc<LocalEmbedder>,
    label_name: String,
    positive_surface: String,
    vote_k: usize,
}

impl MockKnnBackend {
    pub fn new(schema: &Schema, embedder: Arc<LocalEmbedder>, vote_k: usize) -> MockKnnBackend {
        MockKnnBackend {
            embedder,
            label_name: schema.label_name.clone(),
            positive_surface: schema.label_positive_value.clone(),
            vote_k: vote_k.max(1),
        }
    }

    fn ice_label(&self, ice_text: &str) -> u8 {
        // The label is the trailing ", <label_name> is <surface>" field.
        let Some((_, tail)) = ice_text.rsplit_once(", ") else {
            return 0;
        };
        let Some((key, value)) = tail.split_once(" is ") else {
            return 0;
        };
        if key != self.label_name {
            return 0;
        }
        // Anything that is not the positive surface (including junk) votes 0,
        // mirroring the invalid-prediction convention.
        u8::from(value == self.positive_surface)
    }

    fn vote(&self, query: &str, ices: &[(Vec<f64>, u8)]) -> Result<u8> {
        if ices.is_empty() {
            return Ok(0);
        }
        let q = self.embedder.embed(query)?;
        let mut scored: Vec<(f64, usize)> = ices
            .iter()
            .enumerate()
            .map(|(idx, (vector, _))| (cosine(&q.0, vector), idx))
            .collect();
        scored.sort_by(|a, b| b.0.partial_cmp(&a.0).expect("finite similarity").then(a.1.cmp(&b.1)));
        let take = self.vote_k.min(ices.len());
        let ones = scored[..take]
            .iter()
            .filter(|(_, idx)| ices[*idx].1 == 1)
            .count();
        Ok(u8::from(ones * 2 > take))
    }
}

impl Backend for MockKnnBackend {
    fn id(&self) -> String {
        format!(
            "mock-knn:vote_k={},dim={}",
            self.vote_k,
            self.embedder.dimension()
        )
    }

    fn complete(&self, prompt: &str) -> Result<String> {
        let (ice_texts, query_texts) = parse_prompt(prompt);
        let ices: Vec<(Vec<f64>, u8)> = ice_texts
            .iter()
            .map(|text| Ok((self.embedder.embed(text)?.0, self.ice_label(text))))
            .collect::<Result<_>>()?;
        let mut lines = Vec::with_capacity(query_texts.len());
        for query in &query_texts {
            lines.push(self.vote(query, &ices)?.to_string());
        }
        Ok(lines.join("\n"))
    }
}

/// Recovers (example texts, query texts) from the fixed prompt layout.
fn parse_prompt(prompt: &str) -> (Vec<String>, Vec<String>) {
    #[derive(PartialEq)]
    enum Section {
        Preamble,
        Examples,
        Queries,
    }
    let mut section = Section::Preamble;
    let mut ices = Vec::new();
    let mut queries = Vec::new();
    for line in prompt.lines() {
        if line == EXAMPLES_HEADER {
            section = Section::Examples;
            continue;
        }
        if line == CLASSIFY_HEADER {
            section = Section::Queries;
            continue;
        }
        if line.is_empty() {
            if section == Section::Examples {
                section = Section::Preamble;
            }
            continue;
        }
        match section {
            Section::Examples => ices.push(line.to_string()),
            Section::Queries => queries.push(strip_number(line).to_string()),
            Section::Preamble => {}
        }
    }
    (ices, queries)
}

fn strip_number(line: &str) -> &str {
    match line.split_once(". ") {
        Some((prefix, rest)) if prefix.chars().all(|c| c.is_ascii_digit()) => rest,
        _ => line,
    }
}
