use std::collections::HashMap;
use std::str::FromStr;

use crate::corpus::{ResponseRecord, ResponseTable};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BoldAggregation {
    #[default]
    Mean,
    Median,
}

impl FromStr for BoldAggregation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mean" => Ok(BoldAggregation::Mean),
            "median" => Ok(BoldAggregation::Median),
            other => Err(Error::Config(format!("unknown bold_aggregation `{other}`"))),
        }
    }
}

/// How region-labelled BOLD rows enter the regression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RegionMode {
    /// One row per key, aggregated across regions.
    #[default]
    Aggregate,
    /// Every region keeps its own row (sharing the key's predictors).
    Stacked,
}

impl FromStr for RegionMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "aggregate" | "average" | "mean" => Ok(RegionMode::Aggregate),
            "stacked" | "stack" => Ok(RegionMode::Stacked),
            other => Err(Error::Config(format!("unknown region mode `{other}`"))),
        }
    }
}

/// Collapses per-region values into a single response.
pub fn aggregate_bold(values: &[f64], mode: BoldAggregation) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Precondition("no region values to aggregate".into()));
    }
    Ok(match mode {
        BoldAggregation::Mean => values.iter().sum::<f64>() / values.len() as f64,
        BoldAggregation::Median => {
            let mut v = values.to_vec();
            v.sort_by(f64::total_cmp);
            let m = v.len() / 2;
            if v.len() % 2 == 1 {
                v[m]
            } else {
                0.5 * (v[m - 1] + v[m])
            }
        }
    })
}

/// Merges rows that differ only in `region`, in order of first appearance.
/// Tables without region labels pass through unchanged.
pub fn aggregate_regions(table: &ResponseTable, mode: BoldAggregation) -> Result<ResponseTable> {
    if table.records().iter().all(|r| r.region.is_none()) {
        return Ok(table.clone());
    }
    let mut order: Vec<ResponseRecord> = Vec::new();
    let mut values: Vec<Vec<f64>> = Vec::new();
    let mut slot: HashMap<_, usize> = HashMap::new();
    for r in table.records() {
        let mut base = r.clone();
        base.region = None;
        let key = base.row_key();
        let i = *slot.entry(key).or_insert_with(|| {
            order.push(base);
            values.push(Vec::new());
            order.len() - 1
        });
        let v = r
            .response
            .ok_or_else(|| Error::Precondition(format!("BOLD row {} has no response", r.row_key())))?;
        values[i].push(v);
    }
    let records = order
        .into_iter()
        .zip(values)
        .map(|(mut rec, vals)| {
            rec.response = Some(aggregate_bold(&vals, mode)?);
            Ok(rec)
        })
        .collect::<Result<Vec<_>>>()?;
    ResponseTable::new(table.kind(), records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{CorpusKind, Flags};
    use rand::{Rng, SeedableRng};

    #[test]
    fn mean_cases() {
        assert_eq!(aggregate_bold(&[0.7], BoldAggregation::Mean).unwrap(), 0.7);
        assert!((aggregate_bold(&[0.2, 0.4, 0.6], BoldAggregation::Mean).unwrap() - 0.4).abs() < 1e-15);
        assert!(aggregate_bold(&[], BoldAggregation::Mean).is_err());
        assert_eq!(aggregate_bold(&[3.0, -1.0, 10.0, 0.0], BoldAggregation::Median).unwrap(), 1.5);
    }

    #[test]
    fn random_sets_match_mean_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(50);
        for _ in 0..50 {
            let n = rng.random_range(1..20);
            let v: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
            let mut acc = 0.0;
            for x in &v {
                acc += x;
            }
            let oracle = acc / n as f64;
            assert!((aggregate_bold(&v, BoldAggregation::Mean).unwrap() - oracle).abs() < 1e-12);
        }
    }

    #[test]
    fn regions_collapse_per_key() {
        let rec = |sent: u32, region: &str, v: f64| ResponseRecord {
            subject_id: "s".into(),
            doc_id: "exp2".into(),
            sentence_id: sent,
            word_index: 0,
            word_text: String::new(),
            response: Some(v),
            onset_time: None,
            word_position: None,
            region: Some(region.into()),
            flags: Flags::empty(),
        };
        let t = ResponseTable::new(
            CorpusKind::FmriSentence,
            vec![rec(0, "a", 0.2), rec(1, "a", 1.0), rec(0, "b", 0.4), rec(0, "c", 0.6), rec(1, "b", 3.0)],
        )
        .unwrap();
        let agg = aggregate_regions(&t, BoldAggregation::Mean).unwrap();
        assert_eq!(agg.len(), 2);
        assert!((agg.records()[0].response.unwrap() - 0.4).abs() < 1e-15);
        assert_eq!(agg.records()[1].response, Some(2.0));
        assert!(agg.records().iter().all(|r| r.region.is_none()));
    }
}
