//! Snapshot parsing and serialisation.
//!
//! The schema follows a DefiLlama-style yields export: `pool`, `project`,
//! `chain`, `symbol`, `underlyingTokens`, `tvlUsd`, `apy`, `apyBase`,
//! `apyReward`, `stablecoin`, `timestamp`. Four optional extension columns
//! carry what that export leaves implicit: `inputTokens` (overrides splitting
//! `symbol` on `-`), `outputToken`, `outputTokenAddress` and `category`
//! (overrides the category map).

use std::collections::{BTreeMap, HashSet};
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, NaiveDate, NaiveDateTime, SecondsFormat, TimeZone, Utc};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::Value;

use super::category::CategoryMap;
use super::record::PoolRecord;
use crate::error::{Error, Result};
use crate::token::{Category, TokenRef};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SnapshotFormat {
    Json,
    Csv,
}

impl SnapshotFormat {
    /// Guesses the format from a file extension (`.csv` or JSON otherwise).
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => SnapshotFormat::Csv,
            _ => SnapshotFormat::Json,
        }
    }
}

impl FromStr for SnapshotFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "json" | "jsonl" | "ndjson" => Ok(SnapshotFormat::Json),
            "csv" => Ok(SnapshotFormat::Csv),
            _ => Err(Error::Config(format!("unknown snapshot format `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ParseOptions {
    /// Timestamp assigned to rows without one. Rows lacking a timestamp are
    /// rejected when this is `None`.
    pub default_time: Option<DateTime<Utc>>,
}

/// A rejected row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub line: usize,
    pub pool_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct ParseOutcome {
    pub records: Vec<PoolRecord>,
    pub diagnostics: Vec<Diagnostic>,
}

type Row = BTreeMap<String, Value>;

pub fn parse_snapshot<R: Read>(
    mut source: R,
    format: SnapshotFormat,
    categories: &CategoryMap,
    opts: &ParseOptions,
) -> Result<ParseOutcome> {
    let mut text = String::new();
    source.read_to_string(&mut text)?;

    // (line, row-or-error)
    let rows: Vec<(usize, std::result::Result<Row, String>)> = match format {
        SnapshotFormat::Json => text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                let row = match serde_json::from_str::<Value>(l) {
                    Ok(Value::Object(m)) => Ok(m.into_iter().collect()),
                    Ok(_) => Err("row is not a JSON object".to_string()),
                    Err(e) => Err(format!("malformed JSON: {e}")),
                };
                (i + 1, row)
            })
            .collect(),
        SnapshotFormat::Csv => csv_rows(&text)?,
    };

    let parsed: Vec<(usize, std::result::Result<PoolRecord, (String, String)>)> = rows
        .into_par_iter()
        .map(|(line, row)| {
            let rec = match row {
                Ok(row) => parse_row(&row, categories, opts),
                Err(reason) => Err((String::new(), reason)),
            };
            (line, rec)
        })
        .collect();

    let mut out = ParseOutcome::default();
    let mut seen: HashSet<(String, DateTime<Utc>)> = HashSet::new();
    for (line, rec) in parsed {
        match rec {
            Ok(rec) => {
                if !seen.insert((rec.pool_id.clone(), rec.observed_at)) {
                    out.diagnostics.push(Diagnostic {
                        line,
                        pool_id: rec.pool_id,
                        reason: "duplicate pool observation".into(),
                    });
                } else {
                    out.records.push(rec);
                }
            }
            Err((pool_id, reason)) => out.diagnostics.push(Diagnostic { line, pool_id, reason }),
        }
    }
    if out.records.is_empty() {
        return Err(Error::EmptyInput { rejected: out.diagnostics.len() });
    }
    Ok(out)
}

pub fn parse_snapshot_file(
    path: impl AsRef<Path>,
    format: Option<SnapshotFormat>,
    categories: &CategoryMap,
    opts: &ParseOptions,
) -> Result<ParseOutcome> {
    let path = path.as_ref();
    let format = format.unwrap_or_else(|| SnapshotFormat::from_path(path));
    parse_snapshot(std::fs::File::open(path)?, format, categories, opts)
}

fn csv_rows(text: &str) -> Result<Vec<(usize, std::result::Result<Row, String>)>> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = rdr.headers()?.clone();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        match rec {
            Ok(rec) => {
                let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
                if rec.len() != headers.len() {
                    rows.push((line, Err(format!("expected {} fields, found {}", headers.len(), rec.len()))));
                    continue;
                }
                let row: Row = headers
                    .iter()
                    .zip(rec.iter())
                    .filter(|(_, v)| !v.is_empty())
                    .map(|(h, v)| (h.to_string(), Value::String(v.to_string())))
                    .collect();
                rows.push((line, Ok(row)));
            }
            Err(e) => {
                let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
                if let csv::ErrorKind::Io(_) = e.kind() {
                    return Err(e.into());
                }
                rows.push((line, Err(format!("malformed CSV row: {e}"))));
            }
        }
    }
    Ok(rows)
}

fn get_str(row: &Row, key: &str) -> Option<String> {
    match row.get(key)? {
        Value::String(s) if !s.trim().is_empty() => Some(s.trim().to_string()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

fn get_f64(row: &Row, key: &str) -> std::result::Result<Option<f64>, String> {
    let v = match row.get(key) {
        None | Some(Value::Null) => return Ok(None),
        Some(Value::Number(n)) => n.as_f64(),
        Some(Value::String(s)) if s.trim().is_empty() => return Ok(None),
        Some(Value::String(s)) => s.trim().parse::<f64>().ok(),
        Some(_) => None,
    };
    match v {
        Some(x) if x.is_finite() => Ok(Some(x)),
        _ => Err(format!("invalid numeric value for {key}")),
    }
}

fn get_bool(row: &Row, key: &str) -> std::result::Result<bool, String> {
    match row.get(key) {
        None | Some(Value::Null) => Ok(false),
        Some(Value::Bool(b)) => Ok(*b),
        Some(Value::Number(n)) => Ok(n.as_f64().unwrap_or(0.0) != 0.0),
        Some(Value::String(s)) => match s.trim().to_ascii_lowercase().as_str() {
            "true" | "1" | "yes" => Ok(true),
            "false" | "0" | "no" | "" => Ok(false),
            _ => Err(format!("invalid boolean for {key}")),
        },
        Some(_) => Err(format!("invalid boolean for {key}")),
    }
}

fn get_list(row: &Row, key: &str) -> Option<Vec<String>> {
    let items: Vec<String> = match row.get(key)? {
        Value::Array(a) => a
            .iter()
            .map(|v| match v {
                Value::String(s) => s.trim().to_string(),
                Value::Null => String::new(),
                other => other.to_string(),
            })
            .collect(),
        Value::String(s) => s.split(';').map(|p| p.trim().to_string()).collect(),
        _ => return None,
    };
    Some(items)
}

fn parse_time(row: &Row, opts: &ParseOptions) -> std::result::Result<DateTime<Utc>, String> {
    let raw = match row.get("timestamp") {
        None | Some(Value::Null) => None,
        Some(Value::Number(n)) => {
            let secs = n.as_i64().ok_or("invalid timestamp")?;
            return Utc.timestamp_opt(secs, 0).single().ok_or_else(|| "invalid timestamp".to_string());
        }
        Some(Value::String(s)) if s.trim().is_empty() => None,
        Some(Value::String(s)) => Some(s.trim().to_string()),
        Some(_) => return Err("invalid timestamp".into()),
    };
    let Some(raw) = raw else {
        return opts.default_time.ok_or_else(|| "missing timestamp".to_string());
    };
    if let Ok(t) = DateTime::parse_from_rfc3339(&raw) {
        return Ok(t.with_timezone(&Utc));
    }
    if let Ok(t) = NaiveDateTime::parse_from_str(&raw, "%Y-%m-%dT%H:%M:%S%.f") {
        return Ok(t.and_utc());
    }
    if let Ok(d) = NaiveDate::parse_from_str(&raw, "%Y-%m-%d") {
        return Ok(d.and_hms_opt(0, 0, 0).expect("midnight").and_utc());
    }
    if let Ok(secs) = raw.parse::<i64>() {
        if let Some(t) = Utc.timestamp_opt(secs, 0).single() {
            return Ok(t);
        }
    }
    Err("invalid timestamp".into())
}

fn parse_row(
    row: &Row,
    categories: &CategoryMap,
    opts: &ParseOptions,
) -> std::result::Result<PoolRecord, (String, String)> {
    let pool_id = get_str(row, "pool").unwrap_or_default();
    let fail = |reason: &str| (pool_id.clone(), reason.to_string());
    if pool_id.is_empty() {
        return Err(fail("missing pool id"));
    }
    let protocol = get_str(row, "project").ok_or_else(|| fail("missing project"))?;
    let chain = get_str(row, "chain").ok_or_else(|| fail("missing chain"))?;

    let symbols: Vec<String> = match get_list(row, "inputTokens") {
        Some(list) => list,
        None => {
            let symbol = get_str(row, "symbol").ok_or_else(|| fail("missing symbol"))?;
            symbol.split('-').map(|s| s.trim().to_string()).collect()
        }
    };
    if symbols.is_empty() || symbols.iter().any(|s| s.is_empty()) {
        return Err(fail("empty token symbol"));
    }
    let addresses = get_list(row, "underlyingTokens").filter(|a| a.len() == symbols.len());
    let mut input_tokens = Vec::with_capacity(symbols.len());
    for (i, sym) in symbols.iter().enumerate() {
        let mut t = TokenRef::new(sym.as_str(), chain.as_str());
        if let Some(addrs) = &addresses {
            t = t.with_address(addrs[i].as_str());
        }
        if input_tokens.iter().any(|u: &TokenRef| u.key() == t.key()) {
            return Err(fail("duplicate input token"));
        }
        input_tokens.push(t);
    }

    let output_token = get_str(row, "outputToken").map(|s| {
        let t = TokenRef::new(s, chain.as_str());
        match get_str(row, "outputTokenAddress") {
            Some(a) => t.with_address(a),
            None => t,
        }
    });

    let category = match get_str(row, "category") {
        Some(c) => c.parse::<Category>().map_err(|_| fail("unknown category"))?,
        None => categories.get(&protocol),
    };

    let tvl_usd = get_f64(row, "tvlUsd").map_err(|_| fail("invalid TVL"))?.ok_or_else(|| fail("missing TVL"))?;
    if tvl_usd < 0.0 {
        return Err(fail("negative TVL"));
    }
    let apy_total = get_f64(row, "apy").map_err(|e| fail(&e))?;
    let apy_base = get_f64(row, "apyBase").map_err(|e| fail(&e))?;
    let apy_reward = get_f64(row, "apyReward").map_err(|e| fail(&e))?;
    let is_stablecoin = get_bool(row, "stablecoin").map_err(|e| fail(&e))?;
    let observed_at = parse_time(row, opts).map_err(|e| fail(&e))?;

    let mut rec = PoolRecord {
        pool_id: pool_id.clone(),
        protocol,
        category,
        chain,
        input_tokens,
        output_token,
        tvl_usd,
        apy_total,
        apy_base,
        apy_reward,
        is_stablecoin,
        observed_at,
        apy_inconsistent: false,
    };
    rec.check_apy_consistency();
    Ok(rec)
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct JsonRow<'a> {
    pool: &'a str,
    project: &'a str,
    chain: &'a str,
    symbol: String,
    input_tokens: Vec<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    underlying_tokens: Option<Vec<&'a str>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    output_token: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    output_token_address: Option<&'a str>,
    category: &'a str,
    tvl_usd: f64,
    apy: Option<f64>,
    apy_base: Option<f64>,
    apy_reward: Option<f64>,
    stablecoin: bool,
    timestamp: String,
}

const CSV_HEADER: [&str; 15] = [
    "pool",
    "project",
    "chain",
    "symbol",
    "inputTokens",
    "underlyingTokens",
    "outputToken",
    "outputTokenAddress",
    "category",
    "tvlUsd",
    "apy",
    "apyBase",
    "apyReward",
    "stablecoin",
    "timestamp",
];

fn underlying(rec: &PoolRecord) -> Option<Vec<&str>> {
    rec.input_tokens.iter().map(|t| t.address.as_deref()).collect()
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// Writes records in the ingest schema; parsing the output with the same
/// category map yields field-identical records.
pub fn write_snapshot<W: Write>(records: &[PoolRecord], format: SnapshotFormat, mut out: W) -> Result<()> {
    match format {
        SnapshotFormat::Json => {
            for rec in records {
                let row = JsonRow {
                    pool: &rec.pool_id,
                    project: &rec.protocol,
                    chain: &rec.chain,
                    symbol: rec.input_tokens.iter().map(|t| t.symbol.as_str()).collect::<Vec<_>>().join("-"),
                    input_tokens: rec.input_tokens.iter().map(|t| t.symbol.as_str()).collect(),
                    underlying_tokens: underlying(rec),
                    output_token: rec.output_token.as_ref().map(|t| t.symbol.as_str()),
                    output_token_address: rec.output_token.as_ref().and_then(|t| t.address.as_deref()),
                    category: rec.category.as_str(),
                    tvl_usd: rec.tvl_usd,
                    apy: rec.apy_total,
                    apy_base: rec.apy_base,
                    apy_reward: rec.apy_reward,
                    stablecoin: rec.is_stablecoin,
                    timestamp: rec.observed_at.to_rfc3339_opts(SecondsFormat::AutoSi, true),
                };
                serde_json::to_writer(&mut out, &row)?;
                out.write_all(b"\n")?;
            }
        }
        SnapshotFormat::Csv => {
            let mut w = csv::Writer::from_writer(out);
            w.write_record(CSV_HEADER)?;
            for rec in records {
                let symbols: Vec<&str> = rec.input_tokens.iter().map(|t| t.symbol.as_str()).collect();
                w.write_record([
                    rec.pool_id.clone(),
                    rec.protocol.clone(),
                    rec.chain.clone(),
                    symbols.join("-"),
                    symbols.join(";"),
                    underlying(rec).map(|a| a.join(";")).unwrap_or_default(),
                    rec.output_token.as_ref().map(|t| t.symbol.clone()).unwrap_or_default(),
                    rec.output_token.as_ref().and_then(|t| t.address.clone()).unwrap_or_default(),
                    rec.category.as_str().to_string(),
                    rec.tvl_usd.to_string(),
                    fmt_opt(rec.apy_total),
                    fmt_opt(rec.apy_base),
                    fmt_opt(rec.apy_reward),
                    rec.is_stablecoin.to_string(),
                    rec.observed_at.to_rfc3339_opts(SecondsFormat::AutoSi, true),
                ])?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

/// Writes diagnostics as CSV `line,pool_id,reason`.
pub fn write_diagnostics<W: Write>(diagnostics: &[Diagnostic], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["line", "pool_id", "reason"])?;
    for d in diagnostics {
        w.write_record([d.line.to_string(), d.pool_id.clone(), d.reason.clone()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lido_map() -> CategoryMap {
        let mut m = CategoryMap::new();
        m.insert("lido", Category::LiquidStaking).unwrap();
        m
    }

    fn opts() -> ParseOptions {
        ParseOptions { default_time: Some(Utc.with_ymd_and_hms(2025, 12, 1, 0, 0, 0).unwrap()) }
    }

    #[test]
    fn maps_fields_and_looks_up_category() {
        let src = r#"{"pool":"p1","project":"lido","chain":"Ethereum","symbol":"STETH","tvlUsd":2.9e10,"apy":3.2}"#;
        let out = parse_snapshot(src.as_bytes(), SnapshotFormat::Json, &lido_map(), &opts()).unwrap();
        assert!(out.diagnostics.is_empty());
        let r = &out.records[0];
        assert_eq!(r.pool_id, "p1");
        assert_eq!(r.category, Category::LiquidStaking);
        assert_eq!(r.input_tokens, vec![TokenRef::new("STETH", "Ethereum")]);
        assert_eq!(r.tvl_usd, 2.9e10);
        assert_eq!(r.apy_total, Some(3.2));
        assert!(r.output_token.is_none());
    }

    #[test]
    fn negative_tvl_is_rejected() {
        let src = "{\"pool\":\"p0\",\"project\":\"lido\",\"chain\":\"Ethereum\",\"symbol\":\"ETH\",\"tvlUsd\":1,\"apy\":1}\n\
                   {\"pool\":\"p1\",\"project\":\"lido\",\"chain\":\"Ethereum\",\"symbol\":\"STETH\",\"tvlUsd\":\"-5\",\"apy\":3.2}\n";
        let out = parse_snapshot(src.as_bytes(), SnapshotFormat::Json, &lido_map(), &opts()).unwrap();
        assert_eq!(out.records.len(), 1);
        assert_eq!(out.diagnostics, vec![Diagnostic { line: 2, pool_id: "p1".into(), reason: "negative TVL".into() }]);
    }

    #[test]
    fn zero_valid_rows_is_an_error() {
        let src = "{\"pool\":\"p1\",\"project\":\"x\",\"chain\":\"Ethereum\",\"symbol\":\"A\",\"tvlUsd\":-1}\n";
        let err = parse_snapshot(src.as_bytes(), SnapshotFormat::Json, &lido_map(), &opts()).unwrap_err();
        assert!(matches!(err, Error::EmptyInput { rejected: 1 }));
    }

    #[test]
    fn inconsistent_apy_split_is_flagged_not_dropped() {
        let src = "pool,project,chain,symbol,tvlUsd,apy,apyBase,apyReward,timestamp\n\
                   p1,aave-v3,Ethereum,USDC,100,5.0,3.0,1.0,2024-01-01\n\
                   p2,aave-v3,Ethereum,DAI,100,4.0,3.0,1.0,2024-01-01\n";
        let out = parse_snapshot(src.as_bytes(), SnapshotFormat::Csv, &lido_map(), &ParseOptions::default()).unwrap();
        assert_eq!(out.records.len(), 2);
        assert!(out.records[0].apy_inconsistent);
        assert!(!out.records[1].apy_inconsistent);
    }

    #[test]
    fn missing_timestamp_without_default_is_rejected() {
        let src = "pool,project,chain,symbol,tvlUsd\np1,aave,Ethereum,USDC,10\np2,aave,Ethereum,DAI,10,\n";
        let err = parse_snapshot(src.as_bytes(), SnapshotFormat::Csv, &lido_map(), &ParseOptions::default()).unwrap_err();
        assert!(matches!(err, Error::EmptyInput { rejected: 2 }));
    }

    #[test]
    fn multi_asset_symbol_splits_and_aligns_addresses() {
        let src = r#"{"pool":"p","project":"uniswap-v3","chain":"Ethereum","symbol":"USDC-WETH","underlyingTokens":["0xA","0xB"],"tvlUsd":10,"timestamp":"2024-03-05T10:00:00Z"}"#;
        let out = parse_snapshot(src.as_bytes(), SnapshotFormat::Json, &CategoryMap::new(), &ParseOptions::default())
            .unwrap();
        let r = &out.records[0];
        assert_eq!(r.input_tokens.len(), 2);
        assert_eq!(r.input_tokens[1].address.as_deref(), Some("0xb"));
    }

    #[test]
    fn duplicate_inputs_are_rejected() {
        let src = r#"{"pool":"p","project":"x","chain":"Ethereum","symbol":"USDC-usdc","tvlUsd":10,"timestamp":"2024-03-05"}
{"pool":"q","project":"x","chain":"Ethereum","symbol":"USDC","tvlUsd":10,"timestamp":"2024-03-05"}"#;
        let out = parse_snapshot(src.as_bytes(), SnapshotFormat::Json, &CategoryMap::new(), &ParseOptions::default())
            .unwrap();
        assert_eq!(out.diagnostics[0].reason, "duplicate input token");
    }

    #[test]
    fn non_utf8_source_is_an_io_error() {
        let bytes: &[u8] = &[0xff, 0xfe, 0x00];
        let err = parse_snapshot(bytes, SnapshotFormat::Json, &CategoryMap::new(), &ParseOptions::default())
            .unwrap_err();
        assert!(matches!(err, Error::Io(_)));
    }
}
