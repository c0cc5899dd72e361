//! Datasets for deferral training: a synthetic generator with a
//! margin-separated linear witness achieving exactly zero deferral loss,
//! and CSV ingestion of datasets carrying expert predictions or explicit
//! cost rows.
//!
//! CSV schema: header row required; feature columns numeric; `label` and
//! `expert` columns are integers in `1..=n`; alternatively per-label cost
//! columns `cost_1..cost_n` select explicit-table cost mode. An optional
//! `split` column with values `train`/`val`/`test` overrides the seeded
//! 70/10/20 shuffle.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::core::{predict, CostContext, CostSpec};
use crate::error::{Error, Result};
use crate::model::LinearDeferralModel;

/// Disjoint and covering index sets for train/validation/test.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitIndices {
    /// Seeded shuffle into 70/10/20.
    pub fn seeded(len: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut idx: Vec<usize> = (0..len).collect();
        idx.shuffle(&mut rng);
        let n_train = ((len as f64) * 0.7).round() as usize;
        let n_val = ((len as f64) * 0.1).round() as usize;
        let train = idx[..n_train].to_vec();
        let val = idx[n_train..(n_train + n_val).min(len)].to_vec();
        let test = idx[(n_train + n_val).min(len)..].to_vec();
        Self { train, val, test }
    }
}

/// Per-example expert information.
#[derive(Debug, Clone, PartialEq)]
pub enum ExpertInfo {
    /// Expert predictions in `1..=n`.
    Predictions(Vec<usize>),
    /// Per-label cost rows, entries in [0, 1], each of length `n`.
    CostRows(Vec<Vec<f64>>),
}

/// Examples with features, true labels, expert information and split
/// indices. Immutable once constructed.
#[derive(Debug, Clone, PartialEq)]
pub struct DeferralDataset {
    n: usize,
    d: usize,
    features: Vec<Vec<f64>>,
    labels: Vec<usize>,
    expert: ExpertInfo,
    split: SplitIndices,
}

impl DeferralDataset {
    pub fn new(
        n: usize,
        d: usize,
        features: Vec<Vec<f64>>,
        labels: Vec<usize>,
        expert: ExpertInfo,
        split: SplitIndices,
    ) -> Result<Self> {
        let m = features.len();
        if labels.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: labels.len(),
            });
        }
        for row in &features {
            if row.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: row.len(),
                });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidSyntheticConfig(
                    "non-finite feature".to_string(),
                ));
            }
        }
        for &y in &labels {
            if y == 0 || y > n {
                return Err(Error::LabelOutOfRange { label: y, max: n });
            }
        }
        match &expert {
            ExpertInfo::Predictions(preds) => {
                if preds.len() != m {
                    return Err(Error::DimensionMismatch {
                        expected: m,
                        got: preds.len(),
                    });
                }
                for &g in preds {
                    if g == 0 || g > n {
                        return Err(Error::LabelOutOfRange { label: g, max: n });
                    }
                }
            }
            ExpertInfo::CostRows(rows) => {
                if rows.len() != m {
                    return Err(Error::DimensionMismatch {
                        expected: m,
                        got: rows.len(),
                    });
                }
                for row in rows {
                    if row.len() != n {
                        return Err(Error::DimensionMismatch {
                            expected: n,
                            got: row.len(),
                        });
                    }
                    if let Some(&bad) = row.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                        return Err(Error::CostOutOfRange(bad));
                    }
                }
            }
        }
        let mut seen = vec![false; m];
        for &i in split
            .train
            .iter()
            .chain(&split.val)
            .chain(&split.test)
        {
            if i >= m || seen[i] {
                return Err(Error::InvalidSyntheticConfig(
                    "splits must be disjoint and within range".to_string(),
                ));
            }
            seen[i] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::InvalidSyntheticConfig(
                "splits must cover every example".to_string(),
            ));
        }
        Ok(Self {
            n,
            d,
            features,
            labels,
            expert,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn features(&self, i: usize) -> &[f64] {
        &self.features[i]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn expert_pred(&self, i: usize) -> Option<usize> {
        match &self.expert {
            ExpertInfo::Predictions(p) => Some(p[i]),
            ExpertInfo::CostRows(_) => None,
        }
    }

    pub fn cost_row(&self, i: usize) -> Option<&[f64]> {
        match &self.expert {
            ExpertInfo::Predictions(_) => None,
            ExpertInfo::CostRows(rows) => Some(&rows[i]),
        }
    }

    pub fn expert(&self) -> &ExpertInfo {
        &self.expert
    }

    pub fn split(&self) -> &SplitIndices {
        &self.split
    }

    /// The natural cost mode for the stored expert information.
    pub fn default_cost_spec(&self) -> CostSpec {
        match &self.expert {
            ExpertInfo::Predictions(_) => CostSpec::ExpertError,
            ExpertInfo::CostRows(_) => CostSpec::ExplicitTable,
        }
    }

    /// Deferral cost of example `i` under the given cost mode.
    pub fn cost_of_example(&self, i: usize, spec: &CostSpec) -> Result<f64> {
        let ctx = CostContext {
            expert_pred: self.expert_pred(i),
            table_row: self.cost_row(i),
        };
        spec.cost_of(ctx, self.labels[i])
    }
}

/// Configuration for the synthetic realizable generator.
#[derive(Debug, Clone, Copy)]
pub struct SyntheticConfig {
    pub n: usize,
    pub d: usize,
    /// Cluster centers sampled per argmax region of the witness.
    pub clusters_per_region: usize,
    pub cluster_std: f64,
    pub samples: usize,
    /// Fraction of samples drawn from deferral-region clusters.
    pub defer_fraction: f64,
    /// Minimum witness margin (top score minus runner-up) retained.
    pub margin: f64,
    pub seed: u64,
}

impl SyntheticConfig {
    fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::InvalidSyntheticConfig(msg.to_string()));
        if self.n < 2 {
            return fail("n must be >= 2");
        }
        if self.d == 0 {
            return fail("d must be >= 1");
        }
        if self.clusters_per_region == 0 {
            return fail("clusters_per_region must be >= 1");
        }
        if self.samples == 0 {
            return fail("samples must be >= 1");
        }
        if !(0.0..=1.0).contains(&self.defer_fraction) {
            return fail("defer_fraction must lie in [0, 1]");
        }
        if !(self.margin > 0.0) {
            return fail("margin must be > 0");
        }
        if self.cluster_std < 0.0 {
            return fail("cluster_std must be >= 0");
        }
        Ok(())
    }
}

const CENTER_SCALE: f64 = 2.0;
const MAX_OVERSAMPLING: usize = 100;

struct WitnessEval {
    argmax: usize, // 1-based over 1..=n+1
    margin: f64,
    best_class: usize, // 1-based argmax over 1..=n only
}

fn eval_witness(witness: &LinearDeferralModel, x: &[f64]) -> Result<WitnessEval> {
    let scores = witness.scores(x)?;
    let pred = predict(&scores);
    let values = scores.values();
    let top = values[pred.index() - 1];
    let mut second = f64::NEG_INFINITY;
    for (k, v) in values.iter().enumerate() {
        if k != pred.index() - 1 && *v > second {
            second = *v;
        }
    }
    let mut best_class = 1;
    for y in 2..=witness.n() {
        if values[y - 1] > values[best_class - 1] {
            best_class = y;
        }
    }
    Ok(WitnessEval {
        argmax: pred.index(),
        margin: top - second,
        best_class,
    })
}

/// Generate a realizable dataset together with its linear witness.
///
/// Cluster centers are accepted into the argmax region of a random linear
/// witness; points are kept only when their own witness margin reaches the
/// configured threshold, so realizability is strict rather than boundary.
/// On deferral clusters the expert matches the true label (so deferring
/// costs nothing), and the true label is the witness's best class score
/// there; on class clusters the true label is the witness argmax and the
/// expert is wrong with probability one half.
pub fn gen_realizable(cfg: &SyntheticConfig) -> Result<(DeferralDataset, LinearDeferralModel)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let dim = cfg.n + 1;
    let w_std = 1.0 / (cfg.d as f64).sqrt();
    let weights: Vec<f64> = (0..dim * cfg.d)
        .map(|_| w_std * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let witness = LinearDeferralModel::new(cfg.n, cfg.d, weights, vec![0.0; dim])?;

    let defer_count = ((cfg.samples as f64) * cfg.defer_fraction).round() as usize;
    let class_count = cfg.samples - defer_count;

    // Fill per-region cluster-center quotas by rejection.
    let want_defer_clusters = if defer_count > 0 { cfg.clusters_per_region } else { 0 };
    let want_class_clusters = if class_count > 0 { cfg.clusters_per_region } else { 0 };
    let mut defer_centers: Vec<Vec<f64>> = Vec::new();
    let mut class_centers: Vec<(Vec<f64>, usize)> = Vec::new(); // (center, region label)
    let mut class_quota = vec![0usize; cfg.n];
    let total_quota = want_defer_clusters + want_class_clusters * cfg.n;
    let center_margin = cfg.margin + cfg.cluster_std;
    let mut attempts = 0usize;
    let max_center_attempts = 1000 * total_quota.max(1);
    while defer_centers.len() < want_defer_clusters
        || class_quota.iter().any(|&q| q < want_class_clusters)
    {
        attempts += 1;
        if attempts > max_center_attempts {
            return Err(Error::RejectionSamplingFailed {
                stage: "sampling cluster centers".to_string(),
                attempts,
            });
        }
        let center: Vec<f64> = (0..cfg.d)
            .map(|_| CENTER_SCALE * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let eval = eval_witness(&witness, &center)?;
        if eval.margin < center_margin {
            continue;
        }
        if eval.argmax == cfg.n + 1 {
            if defer_centers.len() < want_defer_clusters {
                defer_centers.push(center);
            }
        } else if class_quota[eval.argmax - 1] < want_class_clusters {
            class_quota[eval.argmax - 1] += 1;
            class_centers.push((center, eval.argmax));
        }
    }

    let mut features = Vec::with_capacity(cfg.samples);
    let mut labels = Vec::with_capacity(cfg.samples);
    let mut experts = Vec::with_capacity(cfg.samples);

    let sample_point = |center: &[f64], rng: &mut ChaCha8Rng| -> Vec<f64> {
        center
            .iter()
            .map(|c| c + cfg.cluster_std * rng.sample::<f64, _>(StandardNormal))
            .collect()
    };

    let mut produced = 0usize;
    let mut tries = 0usize;
    while produced < defer_count {
        tries += 1;
        if tries > MAX_OVERSAMPLING * defer_count {
            return Err(Error::RejectionSamplingFailed {
                stage: "sampling deferral-region points".to_string(),
                attempts: tries,
            });
        }
        let cluster = rng.gen_range(0..defer_centers.len());
        let x = sample_point(&defer_centers[cluster], &mut rng);
        let eval = eval_witness(&witness, &x)?;
        if eval.argmax != cfg.n + 1 || eval.margin < cfg.margin {
            continue;
        }
        features.push(x);
        labels.push(eval.best_class);
        experts.push(eval.best_class);
        produced += 1;
    }

    produced = 0;
    tries = 0;
    while produced < class_count {
        tries += 1;
        if tries > MAX_OVERSAMPLING * class_count {
            return Err(Error::RejectionSamplingFailed {
                stage: "sampling class-region points".to_string(),
                attempts: tries,
            });
        }
        let (center, region) = &class_centers[rng.gen_range(0..class_centers.len())];
        let x = sample_point(center, &mut rng);
        let eval = eval_witness(&witness, &x)?;
        if eval.argmax != *region || eval.margin < cfg.margin {
            continue;
        }
        let label = eval.argmax;
        let expert = if rng.gen_bool(0.5) {
            label
        } else {
            // uniform over the wrong labels
            let mut g = rng.gen_range(1..cfg.n);
            if g >= label {
                g += 1;
            }
            g
        };
        features.push(x);
        labels.push(label);
        experts.push(expert);
        produced += 1;
    }

    let split = SplitIndices::seeded(features.len(), cfg.seed.wrapping_add(1));
    let dataset = DeferralDataset::new(
        cfg.n,
        cfg.d,
        features,
        labels,
        ExpertInfo::Predictions(experts),
        split,
    )?;

    // Postcondition: the witness achieves exactly zero deferral loss.
    for i in 0..dataset.len() {
        let scores = witness.scores(dataset.features(i))?;
        let c = dataset.cost_of_example(i, &CostSpec::ExpertError)?;
        let loss = crate::losses::deferral_loss(&scores, dataset.label(i), c)?;
        if loss != 0.0 {
            return Err(Error::WitnessNotRealizable { example: i, loss });
        }
    }
    Ok((dataset, witness))
}

/// Column layout for [`load_csv`]. When a field is `None`/empty the column
/// is inferred from the header: `label` is required; `expert` or
/// `cost_1..cost_n` select the cost mode; `split` (values train/val/test)
/// overrides the seeded shuffle; every remaining column is a feature.
#[derive(Debug, Clone, Default)]
pub struct CsvSchema {
    pub feature_cols: Vec<String>,
    pub label_col: Option<String>,
    pub expert_col: Option<String>,
    pub cost_cols: Vec<String>,
    pub split_col: Option<String>,
}

fn find_col(headers: &[String], name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::MissingColumn(name.to_string()))
}

/// Load a dataset from CSV. Splits come from the `split` column when
/// present, else from a 70/10/20 shuffle seeded by `seed`.
pub fn load_csv(path: &Path, schema: &CsvSchema, seed: u64) -> Result<DeferralDataset> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();

    let label_name = schema.label_col.clone().unwrap_or_else(|| "label".to_string());
    let label_idx = find_col(&headers, &label_name)?;

    let expert_name = match &schema.expert_col {
        Some(name) => Some(name.clone()),
        None if schema.cost_cols.is_empty() && headers.iter().any(|h| h == "expert") => {
            Some("expert".to_string())
        }
        None => None,
    };
    let expert_idx = expert_name.as_deref().map(|n| find_col(&headers, n)).transpose()?;

    let cost_names: Vec<String> = if !schema.cost_cols.is_empty() {
        schema.cost_cols.clone()
    } else if expert_idx.is_none() {
        let mut found = Vec::new();
        let mut k = 1;
        while headers.iter().any(|h| *h == format!("cost_{k}")) {
            found.push(format!("cost_{k}"));
            k += 1;
        }
        found
    } else {
        Vec::new()
    };
    let cost_idx: Vec<usize> = cost_names
        .iter()
        .map(|n| find_col(&headers, n))
        .collect::<Result<_>>()?;
    if expert_idx.is_none() && cost_idx.is_empty() {
        return Err(Error::MissingColumn(
            "expert (or cost_1..cost_n)".to_string(),
        ));
    }

    let split_name = match &schema.split_col {
        Some(name) => Some(name.clone()),
        None if headers.iter().any(|h| h == "split") => Some("split".to_string()),
        None => None,
    };
    let split_idx = split_name.as_deref().map(|n| find_col(&headers, n)).transpose()?;

    let feature_idx: Vec<usize> = if !schema.feature_cols.is_empty() {
        schema
            .feature_cols
            .iter()
            .map(|n| find_col(&headers, n))
            .collect::<Result<_>>()?
    } else {
        let used: Vec<usize> = [Some(label_idx), expert_idx, split_idx]
            .into_iter()
            .flatten()
            .chain(cost_idx.iter().copied())
            .collect();
        (0..headers.len()).filter(|i| !used.contains(i)).collect()
    };
    if feature_idx.is_empty() {
        return Err(Error::MissingColumn("at least one feature".to_string()));
    }

    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut experts: Vec<usize> = Vec::new();
    let mut cost_rows: Vec<Vec<f64>> = Vec::new();
    let mut split_tags: Vec<String> = Vec::new();

    for (row_idx, record) in reader.records().enumerate() {
        let row_no = row_idx + 2; // header is line 1
        let record = record?;
        let field = |col: usize| -> Result<&str> {
            record.get(col).ok_or_else(|| Error::MalformedRow {
                row: row_no,
                column: headers[col].clone(),
                message: "missing field".to_string(),
            })
        };
        let parse_f64 = |col: usize| -> Result<f64> {
            field(col)?.trim().parse().map_err(|_| Error::MalformedRow {
                row: row_no,
                column: headers[col].clone(),
                message: format!("cannot parse '{}' as a number", record.get(col).unwrap_or("")),
            })
        };
        let parse_usize = |col: usize| -> Result<usize> {
            field(col)?.trim().parse().map_err(|_| Error::MalformedRow {
                row: row_no,
                column: headers[col].clone(),
                message: format!(
                    "cannot parse '{}' as a positive integer",
                    record.get(col).unwrap_or("")
                ),
            })
        };
        let row: Vec<f64> = feature_idx
            .iter()
            .map(|&c| parse_f64(c))
            .collect::<Result<_>>()?;
        features.push(row);
        labels.push(parse_usize(label_idx)?);
        if let Some(e) = expert_idx {
            experts.push(parse_usize(e)?);
        }
        if !cost_idx.is_empty() {
            cost_rows.push(cost_idx.iter().map(|&c| parse_f64(c)).collect::<Result<_>>()?);
        }
        if let Some(s) = split_idx {
            split_tags.push(field(s)?.trim().to_string());
        }
    }

    let n = if !cost_idx.is_empty() {
        cost_idx.len()
    } else {
        labels
            .iter()
            .chain(experts.iter())
            .copied()
            .max()
            .unwrap_or(0)
            .max(2)
    };

    let split = if let Some(s) = split_idx {
        let mut train = Vec::new();
        let mut val = Vec::new();
        let mut test = Vec::new();
        for (i, tag) in split_tags.iter().enumerate() {
            match tag.as_str() {
                "train" => train.push(i),
                "val" => val.push(i),
                "test" => test.push(i),
                other => {
                    return Err(Error::MalformedRow {
                        row: i + 2,
                        column: headers[s].clone(),
                        message: format!("unknown split tag '{other}'"),
                    })
                }
            }
        }
        SplitIndices { train, val, test }
    } else {
        SplitIndices::seeded(features.len(), seed)
    };

    let expert = if !cost_idx.is_empty() {
        ExpertInfo::CostRows(cost_rows)
    } else {
        ExpertInfo::Predictions(experts)
    };
    DeferralDataset::new(n, feature_idx.len(), features, labels, expert, split)
}

/// Write a dataset in the documented CSV schema (features `f0..`, `label`,
/// `expert` or `cost_1..cost_n`, and a `split` column).
pub fn write_csv(dataset: &DeferralDataset, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = (0..dataset.d()).map(|j| format!("f{j}")).collect();
    header.push("label".to_string());
    match dataset.expert() {
        ExpertInfo::Predictions(_) => header.push("expert".to_string()),
        ExpertInfo::CostRows(_) => {
            for k in 1..=dataset.n() {
                header.push(format!("cost_{k}"));
            }
        }
    }
    header.push("split".to_string());
    writer.write_record(&header)?;

    let mut tags = vec!["test"; dataset.len()];
    for &i in &dataset.split().train {
        tags[i] = "train";
    }
    for &i in &dataset.split().val {
        tags[i] = "val";
    }
    for i in 0..dataset.len() {
        let mut row: Vec<String> = dataset.features(i).iter().map(|v| format!("{v}")).collect();
        row.push(dataset.label(i).to_string());
        match dataset.expert() {
            ExpertInfo::Predictions(p) => row.push(p[i].to_string()),
            ExpertInfo::CostRows(rows) => {
                for v in &rows[i] {
                    row.push(format!("{v}"));
                }
            }
        }
        row.push(tags[i].to_string());
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn small_cfg() -> SyntheticConfig {
        SyntheticConfig {
            n: 3,
            d: 6,
            clusters_per_region: 2,
            cluster_std: 0.25,
            samples: 400,
            defer_fraction: 0.3,
            margin: 0.5,
            seed: 11,
        }
    }

    #[test]
    fn generator_is_deterministic() {
        let (a, wa) = gen_realizable(&small_cfg()).unwrap();
        let (b, wb) = gen_realizable(&small_cfg()).unwrap();
        assert_eq!(a, b);
        assert_eq!(wa, wb);
    }

    #[test]
    fn witness_achieves_zero_loss_on_every_split() {
        let (data, witness) = gen_realizable(&small_cfg()).unwrap();
        for i in 0..data.len() {
            let s = witness.scores(data.features(i)).unwrap();
            let c = data.cost_of_example(i, &CostSpec::ExpertError).unwrap();
            assert_eq!(
                crate::losses::deferral_loss(&s, data.label(i), c).unwrap(),
                0.0
            );
        }
        // both deferral and class samples are present
        let deferred = (0..data.len())
            .filter(|&i| {
                crate::core::predict(&witness.scores(data.features(i)).unwrap())
                    .is_deferral(data.n())
            })
            .count();
        assert!(deferred > 0 && deferred < data.len());
    }

    #[test]
    fn splits_are_disjoint_and_cover() {
        let (data, _) = gen_realizable(&small_cfg()).unwrap();
        let s = data.split();
        assert_eq!(s.train.len() + s.val.len() + s.test.len(), data.len());
        let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
        all.sort_unstable();
        all.dedup();
        assert_eq!(all.len(), data.len());
        assert!((s.train.len() as f64 / data.len() as f64 - 0.7).abs() < 0.02);
    }

    #[test]
    fn expert_cost_consistency() {
        let (data, _) = gen_realizable(&small_cfg()).unwrap();
        for i in 0..data.len() {
            let c = data.cost_of_example(i, &CostSpec::ExpertError).unwrap();
            let expected = if data.expert_pred(i).unwrap() != data.label(i) {
                1.0
            } else {
                0.0
            };
            assert_eq!(c, expected);
        }
    }

    #[test]
    fn zero_defer_fraction_gives_pure_classification() {
        let mut cfg = small_cfg();
        cfg.defer_fraction = 0.0;
        let (data, witness) = gen_realizable(&cfg).unwrap();
        for i in 0..data.len() {
            let pred = crate::core::predict(&witness.scores(data.features(i)).unwrap());
            assert!(!pred.is_deferral(data.n()));
            assert_eq!(pred.index(), data.label(i));
        }
    }

    #[test]
    fn impossible_margin_fails_with_diagnostic() {
        let mut cfg = small_cfg();
        cfg.margin = 1e6;
        assert!(matches!(
            gen_realizable(&cfg),
            Err(Error::RejectionSamplingFailed { .. })
        ));
    }

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f.flush().unwrap();
        f
    }

    #[test]
    fn csv_smoke_with_expert_column() {
        let mut content = String::from("f0,f1,f2,f3,label,expert\n");
        for i in 0..10 {
            content.push_str(&format!(
                "{}.5,0.25,-1.0,{},{},{}\n",
                i,
                i,
                (i % 3) + 1,
                (i % 2) + 1
            ));
        }
        let f = write_temp(&content);
        let data = load_csv(f.path(), &CsvSchema::default(), 3).unwrap();
        assert_eq!(data.len(), 10);
        assert_eq!(data.d(), 4);
        assert_eq!(data.n(), 3); // inferred from max label
        assert!(data.expert_pred(0).is_some());
        assert_eq!(data.default_cost_spec(), CostSpec::ExpertError);
    }

    #[test]
    fn csv_cost_columns_select_table_mode() {
        let content = "\
f0,f1,label,cost_1,cost_2
0.1,0.2,1,0.0,0.9
0.3,0.4,2,0.37,0.0
0.5,0.6,1,1.0,0.5
";
        let f = write_temp(content);
        let data = load_csv(f.path(), &CsvSchema::default(), 3).unwrap();
        assert_eq!(data.n(), 2);
        assert_eq!(data.default_cost_spec(), CostSpec::ExplicitTable);
        assert_eq!(
            data.cost_of_example(1, &CostSpec::ExplicitTable).unwrap(),
            0.0
        );
        assert_eq!(
            data.cost_of_example(0, &CostSpec::ExplicitTable).unwrap(),
            0.0
        );
    }

    #[test]
    fn csv_malformed_row_names_row_and_column() {
        let content = "f0,label,expert\n0.5,1,1\noops,2,1\n";
        let f = write_temp(content);
        let err = load_csv(f.path(), &CsvSchema::default(), 0).unwrap_err();
        match err {
            Error::MalformedRow { row, column, .. } => {
                assert_eq!(row, 3);
                assert_eq!(column, "f0");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn csv_missing_label_column() {
        let content = "f0,expert\n0.5,1\n";
        let f = write_temp(content);
        assert!(matches!(
            load_csv(f.path(), &CsvSchema::default(), 0),
            Err(Error::MissingColumn(_))
        ));
    }

    #[test]
    fn csv_split_column_respected() {
        let content = "\
f0,label,expert,split
0.1,1,1,train
0.2,2,2,val
0.3,1,2,test
0.4,2,1,train
";
        let f = write_temp(content);
        let data = load_csv(f.path(), &CsvSchema::default(), 0).unwrap();
        assert_eq!(data.split().train, vec![0, 3]);
        assert_eq!(data.split().val, vec![1]);
        assert_eq!(data.split().test, vec![2]);
    }

    #[test]
    fn csv_roundtrip_preserves_dataset() {
        let (data, _) = gen_realizable(&SyntheticConfig {
            samples: 60,
            ..small_cfg()
        })
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        write_csv(&data, &path).unwrap();
        let back = load_csv(&path, &CsvSchema::default(), 99).unwrap();
        assert_eq!(back.len(), data.len());
        assert_eq!(back.n(), data.n());
        assert_eq!(back.label(5), data.label(5));
        assert_eq!(back.expert_pred(5), data.expert_pred(5));
        // split membership survives the round trip (order is by row)
        let sorted = |v: &[usize]| {
            let mut s = v.to_vec();
            s.sort_unstable();
            s
        };
        assert_eq!(sorted(&back.split().train), sorted(&data.split().train));
        assert_eq!(sorted(&back.split().val), sorted(&data.split().val));
        for j in 0..data.d() {
            assert_eq!(back.features(7)[j], data.features(7)[j]);
        }
    }
}
