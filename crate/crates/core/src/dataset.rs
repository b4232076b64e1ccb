//! Fused trial + observational data: loading, eligibility, partitioning.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::regress::{Design, INTERCEPT};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnitRecord {
    pub y: f64,
    pub a: u8,
    pub s: u8,
    pub covariates: Vec<f64>,
    pub v_star: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum CompareOp {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

impl CompareOp {
    pub fn holds(self, lhs: f64, rhs: f64) -> bool {
        match self {
            CompareOp::Lt => lhs < rhs,
            CompareOp::Le => lhs <= rhs,
            CompareOp::Gt => lhs > rhs,
            CompareOp::Ge => lhs >= rhs,
            CompareOp::Eq => lhs == rhs,
            CompareOp::Ne => lhs != rhs,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            CompareOp::Lt => "<",
            CompareOp::Le => "<=",
            CompareOp::Gt => ">",
            CompareOp::Ge => ">=",
            CompareOp::Eq => "==",
            CompareOp::Ne => "!=",
        }
    }
}

impl TryFrom<String> for CompareOp {
    type Error = String;

    fn try_from(s: String) -> std::result::Result<Self, String> {
        Ok(match s.trim() {
            "<" => CompareOp::Lt,
            "<=" | "≤" => CompareOp::Le,
            ">" => CompareOp::Gt,
            ">=" | "≥" => CompareOp::Ge,
            "==" | "=" => CompareOp::Eq,
            "!=" | "≠" => CompareOp::Ne,
            other => return Err(format!("unknown comparison operator `{other}`")),
        })
    }
}

impl From<CompareOp> for String {
    fn from(op: CompareOp) -> String {
        op.symbol().to_string()
    }
}

impl fmt::Display for CompareOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

/// Single-variable threshold rule; a unit satisfies it when `var op threshold`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    pub var: String,
    pub op: CompareOp,
    pub threshold: f64,
}

/// Conjunction of rules: eligible iff every rule holds.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EligibilityCriteria {
    pub rules: Vec<Rule>,
}

impl EligibilityCriteria {
    pub fn new(rules: Vec<Rule>) -> Self {
        Self { rules }
    }

    /// Resolves rule variables against the schema.
    pub fn bind(&self, schema: &[String]) -> Result<Vec<(usize, CompareOp, f64)>> {
        self.rules
            .iter()
            .map(|r| {
                let j = schema
                    .iter()
                    .position(|c| *c == r.var)
                    .ok_or_else(|| Error::UnknownCovariate(r.var.clone()))?;
                Ok((j, r.op, r.threshold))
            })
            .collect()
    }
}

fn violates(bound: &[(usize, CompareOp, f64)], covariates: &[f64]) -> u8 {
    u8::from(bound.iter().any(|&(j, op, t)| !op.holds(covariates[j], t)))
}

/// 1 iff the record violates any rule.
pub fn apply_criteria(record: &UnitRecord, schema: &[String], criteria: &EligibilityCriteria) -> Result<u8> {
    if record.covariates.len() != schema.len() {
        return Err(Error::DimensionMismatch { expected: schema.len(), found: record.covariates.len() });
    }
    Ok(violates(&criteria.bind(schema)?, &record.covariates))
}

/// Column mapping for CSV input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaConfig {
    pub y: String,
    pub a: String,
    pub s: String,
    #[serde(default)]
    pub v_star: Option<String>,
    pub covariates: Vec<String>,
    #[serde(default)]
    pub criteria: Vec<Rule>,
}

impl SchemaConfig {
    /// Mapping used for exported datasets.
    pub fn standard(covariates: &[String], criteria: &EligibilityCriteria) -> Self {
        Self {
            y: "y".into(),
            a: "a".into(),
            s: "s".into(),
            v_star: Some("v_star".into()),
            covariates: covariates.to_vec(),
            criteria: criteria.rules.clone(),
        }
    }

    pub fn eligibility(&self) -> EligibilityCriteria {
        EligibilityCriteria::new(self.criteria.clone())
    }
}

/// Validated trial + observational rows. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedDataset {
    rct: Vec<UnitRecord>,
    os: Vec<UnitRecord>,
    schema: Vec<String>,
    criteria: EligibilityCriteria,
}

fn check_binary(v: u8, what: &str, row: usize) -> Result<()> {
    if v > 1 {
        return Err(Error::InvalidInput(format!("`{what}` must be 0 or 1 (row {row})")));
    }
    Ok(())
}

impl FusedDataset {
    /// Validates and builds the dataset. Rows are numbered RCT first, then OS.
    pub fn new(
        schema: Vec<String>,
        rct: Vec<UnitRecord>,
        os: Vec<UnitRecord>,
        criteria: EligibilityCriteria,
    ) -> Result<Self> {
        if rct.is_empty() {
            return Err(Error::EmptySubset("no RCT rows".into()));
        }
        if os.is_empty() {
            return Err(Error::EmptySubset("no OS rows".into()));
        }
        let bound = criteria.bind(&schema)?;
        for (row, r) in rct.iter().chain(&os).enumerate() {
            let row = row + 1;
            if r.covariates.len() != schema.len() {
                return Err(Error::DimensionMismatch { expected: schema.len(), found: r.covariates.len() });
            }
            if !r.y.is_finite() {
                return Err(Error::NonNumeric { row, column: "y".into() });
            }
            if let Some(j) = r.covariates.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonNumeric { row, column: schema[j].clone() });
            }
            check_binary(r.a, "a", row)?;
            check_binary(r.s, "s", row)?;
            check_binary(r.v_star, "v_star", row)?;
            let derived = violates(&bound, &r.covariates);
            if r.s == 1 {
                if row > rct.len() {
                    return Err(Error::InvalidInput(format!("OS row {row} has s = 1")));
                }
                if r.v_star == 1 || derived == 1 {
                    return Err(Error::IneligibleRctUnit { row });
                }
            } else {
                if row <= rct.len() {
                    return Err(Error::InvalidInput(format!("RCT row {row} has s = 0")));
                }
                if !bound.is_empty() && derived != r.v_star {
                    return Err(Error::VStarMismatch { row, given: r.v_star, derived });
                }
            }
        }
        for arm in [0u8, 1] {
            if !rct.iter().any(|r| r.a == arm) {
                return Err(Error::EmptyArm(format!("RCT has no units with a = {arm}")));
            }
        }
        Ok(Self { rct, os, schema, criteria })
    }

    pub fn rct(&self) -> &[UnitRecord] {
        &self.rct
    }

    pub fn os(&self) -> &[UnitRecord] {
        &self.os
    }

    pub fn schema(&self) -> &[String] {
        &self.schema
    }

    pub fn criteria(&self) -> &EligibilityCriteria {
        &self.criteria
    }

    /// RCT size.
    pub fn n(&self) -> usize {
        self.rct.len()
    }

    /// Eligible OS rows.
    pub fn n0(&self) -> usize {
        self.os.iter().filter(|r| r.v_star == 0).count()
    }

    /// Ineligible OS rows.
    pub fn n1(&self) -> usize {
        self.os.len() - self.n0()
    }

    /// OS size.
    pub fn big_n(&self) -> usize {
        self.os.len()
    }

    pub fn p0n(&self) -> f64 {
        self.n0() as f64 / self.big_n() as f64
    }

    pub fn p1n(&self) -> f64 {
        1.0 - self.p0n()
    }

    pub fn rct_sample(&self) -> Sample {
        Sample::from_records(self.rct.iter(), &self.schema)
    }

    pub fn os_sample(&self) -> Sample {
        Sample::from_records(self.os.iter(), &self.schema)
    }

    pub fn eligible_sample(&self) -> Sample {
        Sample::from_records(self.os.iter().filter(|r| r.v_star == 0), &self.schema)
    }

    pub fn ineligible_sample(&self) -> Sample {
        Sample::from_records(self.os.iter().filter(|r| r.v_star == 1), &self.schema)
    }

    /// Rebuilds from parts that are already known to be valid.
    pub(crate) fn from_parts_unchecked(&self, rct: Vec<UnitRecord>, os: Vec<UnitRecord>) -> Self {
        Self { rct, os, schema: self.schema.clone(), criteria: self.criteria.clone() }
    }

    /// Writes the dataset in the standard column layout, full precision.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["y".to_string(), "a".into(), "s".into(), "v_star".into()];
        header.extend(self.schema.iter().cloned());
        wr.write_record(&header)?;
        for r in self.rct.iter().chain(&self.os) {
            let mut rec = vec![r.y.to_string(), r.a.to_string(), r.s.to_string(), r.v_star.to_string()];
            rec.extend(r.covariates.iter().map(|v| v.to_string()));
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn export_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn standard_schema(&self) -> SchemaConfig {
        SchemaConfig::standard(&self.schema, &self.criteria)
    }
}

/// Eligible and ineligible OS rows, in input order.
pub fn split_by_eligibility(data: &FusedDataset) -> (Vec<UnitRecord>, Vec<UnitRecord>) {
    data.os.iter().cloned().partition(|r| r.v_star == 0)
}

pub fn load_csv(path: &Path, cfg: &SchemaConfig) -> Result<FusedDataset> {
    read_csv(std::fs::File::open(path)?, cfg)
}

pub fn read_csv<R: Read>(reader: R, cfg: &SchemaConfig) -> Result<FusedDataset> {
    let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rd.headers()?.clone();
    let col = |name: &str| {
        header.iter().position(|h| h == name).ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let iy = col(&cfg.y)?;
    let ia = col(&cfg.a)?;
    let is = col(&cfg.s)?;
    let iv = cfg.v_star.as_deref().map(col).transpose()?;
    let ix: Vec<usize> = cfg.covariates.iter().map(|c| col(c)).collect::<Result<_>>()?;
    let criteria = cfg.eligibility();
    let bound = criteria.bind(&cfg.covariates)?;

    let mut rct = Vec::new();
    let mut os = Vec::new();
    for (k, rec) in rd.records().enumerate() {
        let rec = rec?;
        let row = k + 1;
        let num = |i: usize, name: &str| -> Result<f64> {
            rec.get(i)
                .and_then(|s| s.parse::<f64>().ok())
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::NonNumeric { row, column: name.to_string() })
        };
        let bin = |i: usize, name: &str| -> Result<u8> {
            let v = num(i, name)?;
            if v == 0.0 || v == 1.0 {
                Ok(v as u8)
            } else {
                Err(Error::InvalidInput(format!("`{name}` must be 0 or 1 (row {row})")))
            }
        };
        let y = num(iy, &cfg.y)?;
        let a = bin(ia, &cfg.a)?;
        let s = bin(is, &cfg.s)?;
        let covariates: Vec<f64> =
            ix.iter().zip(&cfg.covariates).map(|(&i, c)| num(i, c)).collect::<Result<_>>()?;
        let derived = violates(&bound, &covariates);
        let v_star = match (iv, &cfg.v_star) {
            (Some(i), Some(name)) => {
                let given = bin(i, name)?;
                if s == 0 && !bound.is_empty() && given != derived {
                    return Err(Error::VStarMismatch { row, given, derived });
                }
                given
            }
            _ => derived,
        };
        if s == 1 && (v_star == 1 || derived == 1) {
            return Err(Error::IneligibleRctUnit { row });
        }
        let r = UnitRecord { y, a, s, covariates, v_star };
        if s == 1 {
            rct.push(r);
        } else {
            os.push(r);
        }
    }
    FusedDataset::new(cfg.covariates.clone(), rct, os, criteria)
}

/// Column-oriented view of a set of rows, the form every estimator consumes.
#[derive(Debug, Clone)]
pub struct Sample {
    pub y: Vec<f64>,
    pub a: Vec<f64>,
    /// Covariates without intercept, one column per schema entry.
    pub x: Matrix,
    pub names: Vec<String>,
}

impl Sample {
    pub fn from_records<'a, I>(records: I, schema: &[String]) -> Self
    where
        I: IntoIterator<Item = &'a UnitRecord>,
    {
        let p = schema.len();
        let mut y = Vec::new();
        let mut a = Vec::new();
        let mut data = Vec::new();
        for r in records {
            y.push(r.y);
            a.push(f64::from(r.a));
            data.extend_from_slice(&r.covariates);
        }
        let n = y.len();
        Self { y, a, x: Matrix::from_row_major(n, p, data), names: schema.to_vec() }
    }

    pub fn new(y: Vec<f64>, a: Vec<f64>, x: Matrix, names: Vec<String>) -> Result<Self> {
        if a.len() != y.len() || x.nrows() != y.len() {
            return Err(Error::DimensionMismatch { expected: y.len(), found: a.len().min(x.nrows()) });
        }
        if names.len() != x.ncols() {
            return Err(Error::DimensionMismatch { expected: x.ncols(), found: names.len() });
        }
        Ok(Self { y, a, x, names })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let j = self.names.iter().position(|n| n == name).ok_or_else(|| Error::UnknownCovariate(name.into()))?;
        Ok(self.x.column(j))
    }

    /// `[1, X]`.
    pub fn design(&self) -> Design {
        self.design_with(&[])
    }

    /// `[1, extra..., X]`.
    pub fn design_with(&self, extra: &[(&str, &[f64])]) -> Design {
        let n = self.len();
        let p = 1 + extra.len() + self.x.ncols();
        let mut m = Matrix::zeros(n, p);
        for i in 0..n {
            m.set(i, 0, 1.0);
            for (k, (_, col)) in extra.iter().enumerate() {
                m.set(i, 1 + k, col[i]);
            }
            for (j, v) in self.x.row(i).iter().enumerate() {
                m.set(i, 1 + extra.len() + j, *v);
            }
        }
        let mut names = vec![INTERCEPT.to_string()];
        names.extend(extra.iter().map(|e| e.0.to_string()));
        names.extend(self.names.iter().cloned());
        Design { x: m, names }
    }

    pub fn arm(&self, arm: u8) -> Vec<usize> {
        let t = f64::from(arm);
        (0..self.len()).filter(|&i| self.a[i] == t).collect()
    }

    pub fn select(&self, idx: &[usize]) -> Sample {
        Sample {
            y: idx.iter().map(|&i| self.y[i]).collect(),
            a: idx.iter().map(|&i| self.a[i]).collect(),
            x: self.x.select_rows(idx),
            names: self.names.clone(),
        }
    }
}
