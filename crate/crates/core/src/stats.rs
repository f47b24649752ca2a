//! Token-frequency tables for comparing description corpora.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::features::tokenize;

const STOPWORDS: &[&str] = &[
    "a", "an", "and", "are", "as", "at", "be", "by", "for", "from", "if", "in", "into", "is", "it", "its", "of", "on",
    "or", "so", "that", "the", "then", "this", "to", "while", "with", "you", "your",
];

#[derive(Debug, Clone, PartialEq)]
pub struct TokenFrequencies {
    pub name: String,
    pub total_tokens: usize,
    /// Sorted by descending count, ties by token.
    pub counts: Vec<(String, usize)>,
}

impl TokenFrequencies {
    pub fn from_texts<'a>(name: impl Into<String>, texts: impl IntoIterator<Item = &'a str>, drop_stopwords: bool) -> Self {
        let mut map: HashMap<String, usize> = HashMap::new();
        let mut total = 0;
        for text in texts {
            for tok in tokenize(text) {
                if drop_stopwords && STOPWORDS.contains(&tok.as_str()) {
                    continue;
                }
                total += 1;
                *map.entry(tok).or_default() += 1;
            }
        }
        let mut counts: Vec<(String, usize)> = map.into_iter().collect();
        counts.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        TokenFrequencies { name: name.into(), total_tokens: total, counts }
    }

    pub fn share(&self, rank: usize) -> Option<f64> {
        self.counts.get(rank).map(|(_, c)| *c as f64 / self.total_tokens as f64)
    }
}

/// Top-`n` tokens of each corpus side by side, with their share of tokens.
pub fn frequency_table(corpora: &[TokenFrequencies], n: usize) -> String {
    const CELL: usize = 24;
    let mut out = format!("{:>4}", "rank");
    for c in corpora {
        let _ = write!(out, "  {:<CELL$}", format!("{} ({} tokens)", c.name, c.total_tokens));
    }
    out.push('\n');
    let rows = corpora.iter().map(|c| c.counts.len().min(n)).max().unwrap_or(0);
    for rank in 0..rows {
        let _ = write!(out, "{:>4}", rank + 1);
        for c in corpora {
            let cell = match (c.counts.get(rank), c.share(rank)) {
                (Some((tok, count)), Some(share)) => format!("{tok} {count} ({:.1}%)", 100.0 * share),
                _ => String::new(),
            };
            let _ = write!(out, "  {cell:<CELL$}");
        }
        out.truncate(out.trim_end().len());
        out.push('\n');
    }
    out
}
