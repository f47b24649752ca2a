use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{evaluate, EvalError, EvalOptions, RetrievalReport};
use crate::data::{Manifest, VariantKind};
use crate::features::EmbeddingStore;
use crate::train::{train, TrainConfig, TrainError};

/// Which single factors to knock out, one row each, next to the full model.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Toggles {
    /// Adds a row without the cycle loss.
    pub cyclic: bool,
    /// Adds a row trained on the Original variant only.
    pub variants: bool,
    /// Adds one row per paraphrase count.
    pub paraphrases: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub label: String,
    pub config: TrainConfig,
    pub paraphrases: usize,
    pub final_loss: Option<f64>,
    pub report: RetrievalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    /// Side-by-side recall table, one line per row.
    pub fn to_table(&self) -> String {
        let ks: Vec<usize> = self.rows.first().map(|r| r.report.recalls.iter().map(|(k, _)| *k).collect()).unwrap_or_default();
        let width = self.rows.iter().map(|r| r.label.len()).max().unwrap_or(0).max(5);
        let mut out = format!("{:<width$}", "model");
        for k in &ks {
            let _ = write!(out, " {:>7}", format!("R@{k}"));
        }
        let _ = writeln!(out, " {:>10}", "loss");
        for row in &self.rows {
            let _ = write!(out, "{:<width$}", row.label);
            for (_, r) in &row.report.recalls {
                let _ = write!(out, " {:>7.2}", r * 100.0);
            }
            match row.final_loss {
                Some(l) => {
                    let _ = writeln!(out, " {l:>10.4}");
                }
                None => {
                    let _ = writeln!(out, " {:>10}", "-");
                }
            }
        }
        out
    }
}

fn with_paraphrases(manifest: &Manifest, p: usize) -> Result<Manifest, TrainError> {
    if p == 0 || p > manifest.paraphrase_count {
        return Err(TrainError::Config(format!(
            "paraphrase count {p} is outside 1..={} available in the manifest",
            manifest.paraphrase_count
        )));
    }
    let mut m = manifest.clone();
    m.paraphrase_count = p;
    for r in &mut m.records {
        r.truncate_paraphrases(p);
    }
    Ok(m)
}

/// Trains and evaluates the full configuration plus one model per toggle,
/// all from the same seed. `base_paraphrases` defaults to the manifest's.
pub fn ablation_run(
    manifest: &Manifest,
    store: &EmbeddingStore,
    base: &TrainConfig,
    toggles: &Toggles,
    base_paraphrases: Option<usize>,
    gallery_ids: &[String],
    options: &EvalOptions,
) -> Result<AblationTable, EvalError> {
    let base_p = base_paraphrases.unwrap_or(manifest.paraphrase_count);
    let mut plan = vec![("full".to_string(), base.clone(), base_p)];
    if toggles.cyclic {
        plan.push(("(-) cyclic".into(), TrainConfig { cyclic_enabled: false, ..base.clone() }, base_p));
    }
    if toggles.variants {
        let cfg = TrainConfig { variants: vec![VariantKind::Original], ..base.clone() };
        plan.push(("(-) swap & mirror".into(), cfg, base_p));
    }
    for &p in &toggles.paraphrases {
        plan.push((format!("P={p}"), base.clone(), p));
    }

    let mut rows = Vec::with_capacity(plan.len());
    for (label, cfg, p) in plan {
        let m = with_paraphrases(manifest, p)?;
        log::info!("ablation row `{label}`: training {} epochs", cfg.epochs);
        let outcome = train(&m, store, &cfg, None)?;
        let report = evaluate(&m, store, &outcome.params, gallery_ids, options)?;
        rows.push(AblationRow { label, config: cfg, paraphrases: p, final_loss: outcome.loss_curve.last().copied(), report });
    }
    Ok(AblationTable { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, SynthConfig};

    fn world() -> crate::synth::SynthWorld {
        generate(&SynthConfig {
            dim: 8,
            gallery_size: 16,
            train_pairs: 12,
            test_pairs: 6,
            paraphrases: 3,
            raw_dim: 64,
            ..SynthConfig::default()
        })
    }

    fn cfg() -> TrainConfig {
        TrainConfig { epochs: 2, batch_size: 8, learning_rate: 1e-2, raw_dim: 64, ..TrainConfig::default() }
    }

    #[test]
    fn empty_toggles_give_one_row() {
        let w = world();
        let t = ablation_run(&w.manifest, &w.store, &cfg(), &Toggles::default(), None, &w.gallery, &EvalOptions::default())
            .unwrap();
        assert_eq!(t.rows.len(), 1);
        assert_eq!(t.rows[0].label, "full");
    }

    #[test]
    fn rows_follow_toggles() {
        let w = world();
        let toggles = Toggles { cyclic: true, variants: true, paraphrases: vec![1, 3] };
        let t = ablation_run(&w.manifest, &w.store, &cfg(), &toggles, None, &w.gallery, &EvalOptions::default()).unwrap();
        let labels: Vec<&str> = t.rows.iter().map(|r| r.label.as_str()).collect();
        assert_eq!(labels, ["full", "(-) cyclic", "(-) swap & mirror", "P=1", "P=3"]);
        assert!(!t.rows[1].config.cyclic_enabled);
        assert_eq!(t.rows[2].config.variants, vec![VariantKind::Original]);
        assert_eq!(t.to_table().lines().count(), 6);
    }

    #[test]
    fn too_many_paraphrases_is_an_error() {
        let w = world();
        let toggles = Toggles { paraphrases: vec![5], ..Toggles::default() };
        assert!(ablation_run(&w.manifest, &w.store, &cfg(), &toggles, None, &w.gallery, &EvalOptions::default()).is_err());
    }
}
