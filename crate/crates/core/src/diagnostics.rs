//! Codebook utilization and SID diversity statistics.
//!
//! All estimators are plug-in (empirical frequencies, no smoothing) and use
//! natural logarithms, so perplexity is `exp(entropy)` in nats.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::hash::Hash;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sid_table::SidTable;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub sid_entropy: f64,
    pub layer_perplexities: Vec<f64>,
    pub avg_perplexity: f64,
    pub min_perplexity: f64,
    pub mean_top1_load: f64,
    pub corpus_size: usize,
}

fn entropy_of_counts<T: Eq + Hash>(items: impl Iterator<Item = T>) -> (f64, usize, usize) {
    let mut counts: HashMap<T, usize> = HashMap::new();
    let mut n = 0;
    for it in items {
        *counts.entry(it).or_default() += 1;
        n += 1;
    }
    // sort counts so the sum is independent of hash iteration order
    let mut cs: Vec<usize> = counts.into_values().collect();
    cs.sort_unstable();
    let nf = n as f64;
    let h = cs
        .iter()
        .map(|&c| {
            let p = c as f64 / nf;
            -p * p.ln()
        })
        .sum::<f64>();
    let max = cs.last().copied().unwrap_or(0);
    (h.max(0.0), max, n)
}

fn check_nonempty(table: &SidTable) -> Result<()> {
    if table.is_empty() {
        return Err(Error::Data("empty SID table".into()));
    }
    Ok(())
}

fn check_layer(table: &SidTable, layer: usize) -> Result<()> {
    if layer == 0 || layer > table.layers() {
        return Err(Error::Dimension(format!(
            "layer {layer} outside 1..={}",
            table.layers()
        )));
    }
    Ok(())
}

/// Entropy in nats of the distribution over complete SID tuples.
pub fn sid_entropy(table: &SidTable) -> Result<f64> {
    check_nonempty(table)?;
    Ok(entropy_of_counts(table.codes.iter()).0)
}

/// `exp(entropy)` of code usage at a 1-based `layer`.
pub fn layer_perplexity(table: &SidTable, layer: usize) -> Result<f64> {
    check_nonempty(table)?;
    check_layer(table, layer)?;
    let (h, _, _) = entropy_of_counts(table.codes.iter().map(|c| c[layer - 1]));
    Ok(h.exp())
}

/// Share of items on the most used code at a 1-based `layer`.
pub fn top1_load(table: &SidTable, layer: usize) -> Result<f64> {
    check_nonempty(table)?;
    check_layer(table, layer)?;
    let (_, max, n) = entropy_of_counts(table.codes.iter().map(|c| c[layer - 1]));
    Ok(max as f64 / n as f64)
}

pub fn codebook_report(table: &SidTable) -> Result<DiagnosticsReport> {
    check_nonempty(table)?;
    let layers = table.layers();
    let layer_perplexities = (1..=layers)
        .map(|l| layer_perplexity(table, l))
        .collect::<Result<Vec<_>>>()?;
    let loads = (1..=layers).map(|l| top1_load(table, l)).collect::<Result<Vec<_>>>()?;
    Ok(DiagnosticsReport {
        sid_entropy: sid_entropy(table)?,
        avg_perplexity: layer_perplexities.iter().sum::<f64>() / layers as f64,
        min_perplexity: layer_perplexities.iter().copied().fold(f64::INFINITY, f64::min),
        mean_top1_load: loads.iter().sum::<f64>() / layers as f64,
        layer_perplexities,
        corpus_size: table.len(),
    })
}

fn min_max_normalize(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi > lo {
        values.iter().map(|v| (v - lo) / (hi - lo)).collect()
    } else {
        vec![1.0; values.len()]
    }
}

pub const LANDSCAPE_HEADER: &str = "name,sid_entropy,avg_ppl,min_ppl,mean_top1,inv_norm_top1,norm_min_ppl";

/// CSV rows for a set of named reports. The two normalized columns are
/// min-max scaled over the given set (`inv_norm_top1 = 1 - normalized
/// top-1 load`); a set with no spread normalizes to 1.0.
pub fn landscape_csv(reports: &[(String, DiagnosticsReport)]) -> Result<String> {
    if reports.is_empty() {
        return Err(Error::Usage("landscape needs at least one report".into()));
    }
    let tops: Vec<f64> = reports.iter().map(|(_, r)| r.mean_top1_load).collect();
    let ppls: Vec<f64> = reports.iter().map(|(_, r)| r.min_perplexity).collect();
    let norm_top = min_max_normalize(&tops);
    let inv_top: Vec<f64> = if reports.len() == 1 || norm_top.iter().all(|&v| v == 1.0) {
        vec![1.0; reports.len()]
    } else {
        norm_top.iter().map(|v| 1.0 - v).collect()
    };
    let norm_ppl = min_max_normalize(&ppls);
    let mut out = String::from(LANDSCAPE_HEADER);
    out.push('\n');
    for (k, (name, r)) in reports.iter().enumerate() {
        let _ = writeln!(
            out,
            "{name},{},{},{},{},{},{}",
            r.sid_entropy, r.avg_perplexity, r.min_perplexity, r.mean_top1_load, inv_top[k], norm_ppl[k]
        );
    }
    Ok(out)
}

pub fn export_landscape(reports: &[(String, DiagnosticsReport)], path: &Path) -> Result<()> {
    let csv = landscape_csv(reports)?;
    fs::write(path, csv).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(codes: Vec<Vec<usize>>) -> SidTable {
        let ids = (0..codes.len()).map(|i| i.to_string()).collect();
        SidTable::new(ids, codes).unwrap()
    }

    #[test]
    fn entropy_cases() {
        assert_eq!(sid_entropy(&table(vec![vec![1, 2]; 5])).unwrap(), 0.0);
        let t = table(vec![vec![0, 0], vec![0, 0], vec![1, 1], vec![1, 1]]);
        assert!((sid_entropy(&t).unwrap() - 2f64.ln()).abs() < 1e-12);
        let t = table((0..7).map(|i| vec![i, 0]).collect());
        assert!((sid_entropy(&t).unwrap() - 7f64.ln()).abs() < 1e-12);
        assert!(sid_entropy(&table(vec![])).is_err());
    }

    #[test]
    fn perplexity_and_load_cases() {
        let point = table(vec![vec![3]; 4]);
        assert_eq!(layer_perplexity(&point, 1).unwrap(), 1.0);
        assert_eq!(top1_load(&point, 1).unwrap(), 1.0);
        let two = table(vec![vec![0], vec![0], vec![1], vec![1]]);
        assert!((layer_perplexity(&two, 1).unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(top1_load(&two, 1).unwrap(), 0.5);
        let uni = table((0..512).map(|i| vec![i % 256]).collect());
        assert!((layer_perplexity(&uni, 1).unwrap() - 256.0).abs() < 1e-9);
        assert_eq!(top1_load(&uni, 1).unwrap(), 1.0 / 256.0);
        assert!(layer_perplexity(&two, 2).is_err());
        assert!(layer_perplexity(&two, 0).is_err());
    }

    #[test]
    fn singleton_report() {
        let r = codebook_report(&table(vec![vec![4, 5, 6]])).unwrap();
        assert_eq!(r.sid_entropy, 0.0);
        assert_eq!(r.layer_perplexities, vec![1.0; 3]);
        assert_eq!(r.mean_top1_load, 1.0);
    }

    #[test]
    fn landscape_normalization() {
        let mk = |min_ppl: f64, top: f64| DiagnosticsReport {
            sid_entropy: 1.0,
            layer_perplexities: vec![min_ppl],
            avg_perplexity: min_ppl,
            min_perplexity: min_ppl,
            mean_top1_load: top,
            corpus_size: 10,
        };
        let csv = landscape_csv(&[("a".into(), mk(2.0, 0.5)), ("b".into(), mk(4.0, 0.25))]).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], LANDSCAPE_HEADER);
        assert!(lines[1].ends_with(",0,0"));
        assert!(lines[2].ends_with(",1,1"));
        let csv = landscape_csv(&[("solo".into(), mk(3.0, 0.4))]).unwrap();
        assert!(csv.lines().nth(1).unwrap().ends_with(",1,1"));
        assert!(landscape_csv(&[]).is_err());
    }
}
