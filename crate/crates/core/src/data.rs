//! Loading and preprocessing of the Communities & Crime table, plus seeded
//! toy instances for solver tests.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use thiserror::Error;

use crate::domain::{Dataset, DomainError, GroupId, Instance, TaskMode};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("row {row} has {found} cells, expected {expected}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("column {0} not found")]
    MissingColumn(String),
    #[error("column {0} has no observed values")]
    ColumnFullyMissing(String),
    #[error("no rows remain after dropping unknown targets")]
    NoRows,
    #[error("row {row}, column {column}: {value:?} is not a number")]
    NotNumeric {
        row: usize,
        column: String,
        value: String,
    },
    #[error("snapshot header must end with group,target")]
    SnapshotHeader,
    #[error(transparent)]
    Domain(#[from] DomainError),
}

/// The 128 columns of the raw UCI distribution, in file order.
pub const COMMUNITIES_COLUMNS: [&str; 128] = [
    "state", "county", "community", "communityname", "fold", "population", "householdsize",
    "racepctblack", "racePctWhite", "racePctAsian", "racePctHisp", "agePct12t21", "agePct12t29",
    "agePct16t24", "agePct65up", "numbUrban", "pctUrban", "medIncome", "pctWWage", "pctWFarmSelf",
    "pctWInvInc", "pctWSocSec", "pctWPubAsst", "pctWRetire", "medFamInc", "perCapInc",
    "whitePerCap", "blackPerCap", "indianPerCap", "AsianPerCap", "OtherPerCap", "HispPerCap",
    "NumUnderPov", "PctPopUnderPov", "PctLess9thGrade", "PctNotHSGrad", "PctBSorMore",
    "PctUnemployed", "PctEmploy", "PctEmplManu", "PctEmplProfServ", "PctOccupManu",
    "PctOccupMgmtProf", "MalePctDivorce", "MalePctNevMarr", "FemalePctDiv", "TotalPctDiv",
    "PersPerFam", "PctFam2Par", "PctKids2Par", "PctYoungKids2Par", "PctTeen2Par",
    "PctWorkMomYoungKids", "PctWorkMom", "NumIlleg", "PctIlleg", "NumImmig", "PctImmigRecent",
    "PctImmigRec5", "PctImmigRec8", "PctImmigRec10", "PctRecentImmig", "PctRecImmig5",
    "PctRecImmig8", "PctRecImmig10", "PctSpeakEnglOnly", "PctNotSpeakEnglWell",
    "PctLargHouseFam", "PctLargHouseOccup", "PersPerOccupHous", "PersPerOwnOccHous",
    "PersPerRentOccHous", "PctPersOwnOccup", "PctPersDenseHous", "PctHousLess3BR", "MedNumBR",
    "HousVacant", "PctHousOccup", "PctHousOwnOcc", "PctVacantBoarded", "PctVacMore6Mos",
    "MedYrHousBuilt", "PctHousNoPhone", "PctWOFullPlumb", "OwnOccLowQuart", "OwnOccMedVal",
    "OwnOccHiQuart", "RentLowQ", "RentMedian", "RentHighQ", "MedRent", "MedRentPctHousInc",
    "MedOwnCostPctInc", "MedOwnCostPctIncNoMtg", "NumInShelters", "NumStreet", "PctForeignBorn",
    "PctBornSameState", "PctSameHouse85", "PctSameCity85", "PctSameState85", "LemasSwornFT",
    "LemasSwFTPerPop", "LemasSwFTFieldOps", "LemasSwFTFieldPerPop", "LemasTotalReq",
    "LemasTotReqPerPop", "PolicReqPerOffic", "PolicPerPop", "RacialMatchCommPol", "PctPolicWhite",
    "PctPolicBlack", "PctPolicHisp", "PctPolicAsian", "PctPolicMinor", "OfficAssgnDrugUnits",
    "NumKindsDrugsSeiz", "PolicAveOTWorked", "LandArea", "PopDens", "PctUsePubTrans", "PolicCars",
    "PolicOperBudg", "LemasPctPolicOnPatr", "LemasGangUnitDeploy", "LemasPctOfficDrugUn",
    "PolicBudgPerPop", "ViolentCrimesPerPop",
];

const IDENTIFIERS: [&str; 5] = ["state", "county", "community", "communityname", "fold"];
const TARGET: &str = "ViolentCrimesPerPop";
const RACE_COLUMNS: [&str; 3] = ["racepctblack", "racePctAsian", "racePctHisp"];

/// How a delimited text file is laid out.
#[derive(Debug, Clone, PartialEq)]
pub struct TableFormat {
    pub delimiter: u8,
    pub has_header: bool,
    /// Column names for headerless files.
    pub column_names: Option<Vec<String>>,
    pub missing_markers: Vec<String>,
}

impl TableFormat {
    /// Raw UCI file: comma separated, no header, `?` for missing.
    pub fn communities_raw() -> Self {
        TableFormat {
            delimiter: b',',
            has_header: false,
            column_names: Some(COMMUNITIES_COLUMNS.iter().map(|s| s.to_string()).collect()),
            missing_markers: vec!["?".into()],
        }
    }

    /// Comma separated with a header row; `?` and empty cells are missing.
    pub fn header_csv() -> Self {
        TableFormat {
            delimiter: b',',
            has_header: true,
            column_names: None,
            missing_markers: vec!["?".into(), "".into()],
        }
    }

    /// Header CSV when the first line names the target column, raw UCI otherwise.
    pub fn detect(path: &Path) -> Result<Self, DataError> {
        let f = File::open(path).map_err(|e| io_err(path, e))?;
        let mut first = String::new();
        BufReader::new(f)
            .read_line(&mut first)
            .map_err(|e| io_err(path, e))?;
        if first.split(',').any(|c| c.trim() == TARGET) {
            Ok(Self::header_csv())
        } else {
            Ok(Self::communities_raw())
        }
    }
}

fn io_err(path: &Path, source: std::io::Error) -> DataError {
    DataError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Rectangular table of string cells; `None` marks a missing value.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Option<String>>>,
}

impl RawTable {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn cell(&self, row: usize, col: usize) -> Option<&str> {
        self.rows[row][col].as_deref()
    }
}

pub fn load_table(path: &Path, format: &TableFormat) -> Result<RawTable, DataError> {
    let f = File::open(path).map_err(|e| io_err(path, e))?;
    parse_table(f, format)
}

pub fn parse_table<R: Read>(reader: R, format: &TableFormat) -> Result<RawTable, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(format.delimiter)
        .has_headers(format.has_header)
        .flexible(true)
        .from_reader(reader);
    let mut columns = match &format.column_names {
        Some(c) => c.clone(),
        None => Vec::new(),
    };
    if format.has_header {
        let header: Vec<String> = rdr.headers()?.iter().map(|s| s.trim().to_string()).collect();
        if columns.is_empty() {
            columns = header;
        }
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if columns.is_empty() {
            columns = (0..rec.len()).map(|j| format!("c{j}")).collect();
        }
        if rec.len() != columns.len() {
            return Err(DataError::RaggedRow {
                row: i,
                expected: columns.len(),
                found: rec.len(),
            });
        }
        rows.push(
            rec.iter()
                .map(|c| {
                    let c = c.trim();
                    (!format.missing_markers.iter().any(|m| m == c)).then(|| c.to_string())
                })
                .collect(),
        );
    }
    Ok(RawTable { columns, rows })
}

/// Which columns play which part in preprocessing.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnRoles {
    pub target: String,
    /// Summed to decide group membership.
    pub group_columns: Vec<String>,
    /// Group 1 when the sum is strictly above this.
    pub group_threshold: f64,
    pub identifiers: Vec<String>,
    /// Candidate features. `None` means every column that is not the target,
    /// an identifier or a group column.
    pub features: Option<Vec<String>>,
    /// Columns missing in strictly more than this fraction of rows are dropped.
    pub missing_threshold: f64,
}

impl ColumnRoles {
    pub fn communities() -> Self {
        let skip: Vec<&str> = IDENTIFIERS
            .iter()
            .chain(RACE_COLUMNS.iter())
            .chain([TARGET].iter())
            .copied()
            .collect();
        ColumnRoles {
            target: TARGET.into(),
            group_columns: RACE_COLUMNS.iter().map(|s| s.to_string()).collect(),
            group_threshold: 0.5,
            identifiers: IDENTIFIERS.iter().map(|s| s.to_string()).collect(),
            features: Some(
                COMMUNITIES_COLUMNS
                    .iter()
                    .filter(|c| !skip.contains(c))
                    .map(|s| s.to_string())
                    .collect(),
            ),
            missing_threshold: 0.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PreprocessReport {
    pub raw_rows: usize,
    pub rows_dropped: usize,
    pub retained_rows: usize,
    /// Descriptive columns found before any column is dropped, including the
    /// group columns.
    pub descriptive_columns: usize,
    /// Candidate feature columns (descriptive minus group columns).
    pub candidate_features: usize,
    pub columns_dropped: Vec<String>,
    pub zero_variance_dropped: Vec<String>,
    pub imputed_cells: usize,
    pub target_scale: f64,
    pub group_sizes: BTreeMap<GroupId, usize>,
    /// Final feature count including the appended group indicator.
    pub features: usize,
}

fn numeric(raw: &RawTable, row: usize, col: usize) -> Result<Option<f64>, DataError> {
    match raw.cell(row, col) {
        None => Ok(None),
        Some(s) => s.parse::<f64>().map(Some).map_err(|_| DataError::NotNumeric {
            row,
            column: raw.columns[col].clone(),
            value: s.to_string(),
        }),
    }
}

fn column_of(raw: &RawTable, rows: &[usize], col: usize) -> Result<Vec<Option<f64>>, DataError> {
    rows.iter().map(|&r| numeric(raw, r, col)).collect()
}

fn mean_impute(values: &[Option<f64>], name: &str) -> Result<(Vec<f64>, usize), DataError> {
    let seen: Vec<f64> = values.iter().flatten().copied().collect();
    if seen.is_empty() {
        return Err(DataError::ColumnFullyMissing(name.to_string()));
    }
    let mean = seen.iter().sum::<f64>() / seen.len() as f64;
    let missing = values.len() - seen.len();
    Ok((values.iter().map(|v| v.unwrap_or(mean)).collect(), missing))
}

/// Centers to mean 0 and scales to population variance 1. `None` for a
/// constant column.
pub fn standardize(col: &[f64]) -> Option<Vec<f64>> {
    let n = col.len() as f64;
    let mean = col.iter().sum::<f64>() / n;
    let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    if var <= 0.0 || !var.is_finite() {
        return None;
    }
    let sd = var.sqrt();
    let mut out: Vec<f64> = col.iter().map(|v| (v - mean) / sd).collect();
    // One corrective pass removes the rounding left by the first.
    let m2 = out.iter().sum::<f64>() / n;
    out.iter_mut().for_each(|v| *v -= m2);
    let s2 = (out.iter().map(|v| v * v).sum::<f64>() / n).sqrt();
    out.iter_mut().for_each(|v| *v /= s2);
    Some(out)
}

/// Drops unknown targets, drops sparse columns, mean-imputes, standardizes,
/// rescales and flips the target, assigns groups and appends the group
/// indicator as the last feature.
pub fn preprocess_communities(raw: &RawTable, roles: &ColumnRoles) -> Result<(Dataset, PreprocessReport), DataError> {
    let find = |name: &str| raw.column_index(name).ok_or_else(|| DataError::MissingColumn(name.to_string()));
    let target_col = find(&roles.target)?;
    let group_cols: Vec<usize> = roles.group_columns.iter().map(|c| find(c)).collect::<Result<_, _>>()?;

    let is_special = |name: &String| {
        *name == roles.target || roles.identifiers.contains(name) || roles.group_columns.contains(name)
    };
    let candidates: Vec<usize> = match &roles.features {
        Some(list) => list.iter().filter_map(|c| raw.column_index(c)).collect(),
        None => (0..raw.columns.len()).filter(|&j| !is_special(&raw.columns[j])).collect(),
    };

    // 1. unknown targets
    let kept: Vec<usize> = (0..raw.n_rows()).filter(|&r| raw.cell(r, target_col).is_some()).collect();
    if kept.is_empty() {
        return Err(DataError::NoRows);
    }
    let n = kept.len();

    // 2. sparse columns
    let mut columns_dropped = Vec::new();
    let mut retained = Vec::new();
    for &j in &candidates {
        let missing = kept.iter().filter(|&&r| raw.cell(r, j).is_none()).count();
        if missing as f64 > roles.missing_threshold * n as f64 {
            columns_dropped.push(raw.columns[j].clone());
        } else {
            retained.push(j);
        }
    }

    // 3 and 4. impute and standardize
    let mut imputed_cells = 0;
    let mut features: Vec<Vec<f64>> = Vec::new();
    let mut names = Vec::new();
    let mut zero_variance_dropped = Vec::new();
    for &j in &retained {
        let (col, missing) = mean_impute(&column_of(raw, &kept, j)?, &raw.columns[j])?;
        imputed_cells += missing;
        match standardize(&col) {
            Some(s) => {
                features.push(s);
                names.push(raw.columns[j].clone());
            }
            None => zero_variance_dropped.push(raw.columns[j].clone()),
        }
    }

    // 5. scale then flip the target
    let target: Vec<f64> = column_of(raw, &kept, target_col)?.into_iter().flatten().collect();
    let scale = target.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let target: Vec<f64> = if scale > 0.0 {
        target.iter().map(|t| 1.0 - t / scale).collect()
    } else {
        vec![1.0; n]
    };

    // 6. groups
    let mut share = vec![0.0; n];
    for &j in &group_cols {
        let (col, _) = mean_impute(&column_of(raw, &kept, j)?, &raw.columns[j])?;
        share.iter_mut().zip(col).for_each(|(s, v)| *s += v);
    }
    let groups: Vec<GroupId> = share
        .iter()
        .map(|&s| GroupId(u32::from(s > roles.group_threshold)))
        .collect();

    // 7. z as last feature
    names.push("z".into());
    let k = names.len();
    let instances: Vec<Instance> = (0..n)
        .map(|i| {
            let mut x: Vec<f64> = features.iter().map(|c| c[i]).collect();
            x.push(f64::from(groups[i].0));
            Instance::new(x, groups[i], target[i])
        })
        .collect();
    let ds = Dataset::new(k, instances, TaskMode::Regression)?.with_feature_names(names)?;
    let report = PreprocessReport {
        raw_rows: raw.n_rows(),
        rows_dropped: raw.n_rows() - n,
        retained_rows: n,
        descriptive_columns: candidates.len() + group_cols.len(),
        candidate_features: candidates.len(),
        columns_dropped,
        zero_variance_dropped,
        imputed_cells,
        target_scale: scale,
        group_sizes: ds.group_index().iter().map(|(g, r)| (*g, r.len())).collect(),
        features: k,
    };
    Ok((ds, report))
}

/// Loads a Communities & Crime file in either supported layout and
/// preprocesses it with the standard column roles.
pub fn load_communities(path: &Path) -> Result<(Dataset, PreprocessReport), DataError> {
    let raw = load_table(path, &TableFormat::detect(path)?)?;
    preprocess_communities(&raw, &ColumnRoles::communities())
}

/// Writes `features..., group, target` with a header row.
pub fn write_snapshot<W: std::io::Write>(ds: &Dataset, out: W) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = ds.feature_names().to_vec();
    header.push("group".into());
    header.push("target".into());
    w.write_record(&header)?;
    for inst in ds.instances() {
        let mut rec: Vec<String> = inst.features.iter().map(|v| v.to_string()).collect();
        rec.push(inst.group.to_string());
        rec.push(inst.target.to_string());
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| DataError::Csv(e.into()))?;
    Ok(())
}

pub fn read_snapshot<R: Read>(input: R) -> Result<Dataset, DataError> {
    let raw = parse_table(input, &TableFormat::header_csv())?;
    let m = raw.columns.len();
    if m < 2 || raw.columns[m - 2] != "group" || raw.columns[m - 1] != "target" {
        return Err(DataError::SnapshotHeader);
    }
    let k = m - 2;
    let mut instances = Vec::with_capacity(raw.n_rows());
    for r in 0..raw.n_rows() {
        let mut vals = Vec::with_capacity(m);
        for j in 0..m {
            vals.push(numeric(&raw, r, j)?.ok_or_else(|| DataError::NotNumeric {
                row: r,
                column: raw.columns[j].clone(),
                value: String::new(),
            })?);
        }
        instances.push(Instance::new(vals[..k].to_vec(), vals[k] as u32, vals[k + 1]));
    }
    Ok(Dataset::new(k, instances, TaskMode::Regression)?.with_feature_names(raw.columns[..k].to_vec())?)
}

/// Planted weights used by [`make_toy_instance`], uniform on `[-1, 1]`.
pub fn toy_planted_weights(seed: u64, k: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..k).map(|_| rng.random_range(-1.0..=1.0)).collect()
}

/// `n = split.0 + split.1` rows with standard normal features and
/// `y = θ*·x + noise·N(0,1)`; the first `split.0` rows form group 0.
pub fn make_toy_instance(seed: u64, k: usize, split: (usize, usize), noise: f64) -> Result<Dataset, DataError> {
    let theta = toy_planted_weights(seed, k);
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x9e37_79b9_7f4a_7c15));
    let n = split.0 + split.1;
    let instances = (0..n)
        .map(|i| {
            let x: Vec<f64> = (0..k).map(|_| rng.sample(StandardNormal)).collect();
            let e: f64 = rng.sample(StandardNormal);
            let y = theta.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() + noise * e;
            Instance::new(x, u32::from(i >= split.0), y)
        })
        .collect();
    Ok(Dataset::with_groups(
        k,
        instances,
        TaskMode::Regression,
        &[GroupId(0), GroupId(1)],
    )?)
}
