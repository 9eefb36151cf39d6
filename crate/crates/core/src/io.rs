//! Versioned CSV artifacts and JSON helpers.
//!
//! Every CSV starts with `# dragtrack-<kind> v<N>`, followed by optional
//! `# key=value` metadata lines and then a header row. Readers refuse any
//! other kind or version.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::drag_chain::DeltaSample;
use crate::dynamics::EntryState;
use crate::montecarlo::RunOutcome;
use crate::reference::{BankSchedule, ReferenceProfile};
use crate::sim::{LogRecord, TrajectoryLog};
use crate::{Error, Result};

pub const PROFILE_VERSION: u32 = 1;
pub const LOG_VERSION: u32 = 1;
pub const DELTA_VERSION: u32 = 1;
pub const SCATTER_VERSION: u32 = 1;

const PROFILE_COLUMNS: [&str; 4] = ["t", "Dstar", "Dstar_dot", "Dstar_ddot"];
const LOG_COLUMNS: [&str; 27] = [
    "t",
    "r",
    "lon",
    "lat",
    "v",
    "gamma",
    "chi",
    "h",
    "s",
    "D",
    "D_dot",
    "Dstar",
    "Dstar_dot",
    "Dstar_ddot",
    "x1",
    "x2",
    "sigma",
    "u_raw",
    "u",
    "saturated",
    "held",
    "xhat1",
    "xhat2",
    "f",
    "g0",
    "energy",
    "D_tilde",
];
const DELTA_COLUMNS: [&str; 3] = ["t", "x1", "delta"];

struct Document<'a> {
    meta: Vec<(&'a str, &'a str)>,
    body: &'a str,
}

fn split_document<'a>(text: &'a str, kind: &str, version: u32) -> Result<Document<'a>> {
    let mut lines = text.split_inclusive('\n');
    let first = lines.next().unwrap_or("").trim_end();
    let tag = format!("# dragtrack-{kind} v");
    let found = first
        .strip_prefix(&tag)
        .ok_or_else(|| Error::Format(format!("expected a '{tag}{version}' header line, found '{first}'")))?;
    if found.trim().parse::<u32>().ok() != Some(version) {
        return Err(Error::Format(format!(
            "unsupported {kind} version '{}' (this build reads v{version})",
            found.trim()
        )));
    }
    let mut offset = first.len();
    offset += text[offset..].len() - text[offset..].trim_start_matches(['\r', '\n']).len();
    let mut meta = Vec::new();
    for line in lines {
        let Some(comment) = line.strip_prefix('#') else { break };
        offset += line.len();
        if let Some((k, v)) = comment.trim().split_once('=') {
            meta.push((k.trim(), v.trim()));
        }
    }
    Ok(Document {
        meta,
        body: &text[offset..],
    })
}

fn meta_value<'a>(doc: &Document<'a>, key: &str) -> Option<&'a str> {
    doc.meta.iter().find(|(k, _)| *k == key).map(|(_, v)| *v)
}

fn meta_f64(doc: &Document, key: &str) -> Result<f64> {
    let v = meta_value(doc, key).ok_or_else(|| Error::Format(format!("missing metadata '{key}'")))?;
    v.parse()
        .map_err(|_| Error::Format(format!("metadata '{key}' is not a number: '{v}'")))
}

fn read_rows(body: &str, columns: &[&str]) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(body.as_bytes());
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    if header != columns {
        return Err(Error::Format(format!(
            "unexpected columns {header:?}, expected {columns:?}"
        )));
    }
    rdr.records()
        .enumerate()
        .map(|(i, rec)| {
            let rec = rec?;
            rec.iter()
                .map(|field| {
                    field
                        .parse::<f64>()
                        .map_err(|_| Error::Format(format!("row {}: '{field}' is not a number", i + 1)))
                })
                .collect()
        })
        .collect()
}

fn write_header(out: &mut Vec<u8>, kind: &str, version: u32, meta: &[(&str, String)]) -> Result<()> {
    writeln!(out, "# dragtrack-{kind} v{version}")?;
    for (k, v) in meta {
        writeln!(out, "# {k}={v}")?;
    }
    Ok(())
}

fn write_rows<I>(mut out: Vec<u8>, columns: &[&str], rows: I) -> Result<Vec<u8>>
where
    I: IntoIterator<Item = Vec<String>>,
{
    {
        let mut w = csv::Writer::from_writer(&mut out);
        w.write_record(columns)?;
        for row in rows {
            w.write_record(&row)?;
        }
        w.flush()?;
    }
    Ok(out)
}

fn num(x: f64) -> String {
    // shortest representation that parses back to the same bits
    format!("{x}")
}

pub fn profile_to_csv(profile: &ReferenceProfile) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    let mut meta = vec![
        ("s_target_m", num(profile.s_target)),
        ("terminal_altitude_m", num(profile.terminal_altitude)),
        ("terminal_velocity_mps", num(profile.terminal_velocity)),
    ];
    if let Some(s) = &profile.schedule {
        meta.push(("schedule", serde_json::to_string(s)?));
    }
    write_header(&mut out, "profile", PROFILE_VERSION, &meta)?;
    let rows = (0..profile.knots.len()).map(|i| {
        vec![
            num(profile.knots[i]),
            num(profile.d_star[i]),
            num(profile.d_star_dot[i]),
            num(profile.d_star_ddot[i]),
        ]
    });
    write_rows(out, &PROFILE_COLUMNS, rows)
}

pub fn profile_from_csv(text: &str) -> Result<ReferenceProfile> {
    let doc = split_document(text, "profile", PROFILE_VERSION)?;
    let schedule = meta_value(&doc, "schedule")
        .map(serde_json::from_str::<BankSchedule>)
        .transpose()?;
    let rows = read_rows(doc.body, &PROFILE_COLUMNS)?;
    let column = |j: usize| rows.iter().map(|r| r[j]).collect::<Vec<_>>();
    let profile = ReferenceProfile {
        knots: column(0),
        d_star: column(1),
        d_star_dot: column(2),
        d_star_ddot: column(3),
        s_target: meta_f64(&doc, "s_target_m")?,
        terminal_altitude: meta_f64(&doc, "terminal_altitude_m")?,
        terminal_velocity: meta_f64(&doc, "terminal_velocity_mps")?,
        schedule,
    };
    profile.validate()?;
    Ok(profile)
}

pub fn log_to_csv(log: &TrajectoryLog) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    write_header(&mut out, "log", LOG_VERSION, &[("rows", log.len().to_string())])?;
    let flag = |b: bool| if b { "1".to_string() } else { "0".to_string() };
    let rows = log.records.iter().map(|r| {
        let s = &r.state;
        let mut row: Vec<String> = [
            r.t,
            s.r,
            s.lon,
            s.lat,
            s.v,
            s.gamma,
            s.chi,
            r.h,
            r.s,
            r.drag,
            r.drag_rate,
            r.d_star,
            r.d_star_dot,
            r.d_star_ddot,
            r.x1,
            r.x2,
            r.sigma,
            r.u_raw,
            r.u,
        ]
        .into_iter()
        .map(num)
        .collect();
        row.push(flag(r.saturated));
        row.push(flag(r.held));
        row.extend([r.xhat1, r.xhat2, r.f, r.g0, r.energy, r.x1].into_iter().map(num));
        row
    });
    write_rows(out, &LOG_COLUMNS, rows)
}

pub fn log_from_csv(text: &str) -> Result<TrajectoryLog> {
    let doc = split_document(text, "log", LOG_VERSION)?;
    let rows = read_rows(doc.body, &LOG_COLUMNS)?;
    let records = rows
        .into_iter()
        .map(|c| LogRecord {
            t: c[0],
            state: EntryState {
                r: c[1],
                lon: c[2],
                lat: c[3],
                v: c[4],
                gamma: c[5],
                chi: c[6],
            },
            h: c[7],
            s: c[8],
            drag: c[9],
            drag_rate: c[10],
            d_star: c[11],
            d_star_dot: c[12],
            d_star_ddot: c[13],
            x1: c[14],
            x2: c[15],
            sigma: c[16],
            u_raw: c[17],
            u: c[18],
            saturated: c[19] != 0.0,
            held: c[20] != 0.0,
            xhat1: c[21],
            xhat2: c[22],
            f: c[23],
            g0: c[24],
            energy: c[25],
        })
        .collect();
    Ok(TrajectoryLog { records })
}

pub fn delta_samples_to_csv(samples: &[DeltaSample]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    write_header(&mut out, "delta", DELTA_VERSION, &[])?;
    let rows = samples.iter().map(|s| vec![num(s.t), num(s.x1), num(s.delta)]);
    write_rows(out, &DELTA_COLUMNS, rows)
}

pub fn delta_samples_from_csv(text: &str) -> Result<Vec<DeltaSample>> {
    let doc = split_document(text, "delta", DELTA_VERSION)?;
    Ok(read_rows(doc.body, &DELTA_COLUMNS)?
        .into_iter()
        .map(|c| DeltaSample {
            t: c[0],
            x1: c[1],
            delta: c[2],
        })
        .collect())
}

/// Downrange vs. altitude error per completed run, in km.
pub fn scatter_to_csv(outcomes: &[RunOutcome]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    write_header(&mut out, "scatter", SCATTER_VERSION, &[])?;
    let rows = outcomes.iter().filter(|o| o.completed()).map(|o| {
        let s = o.summary.as_ref().expect("completed runs carry a summary");
        let d = &o.dispersions;
        vec![
            o.index.to_string(),
            num(s.downrange_error / 1000.0),
            num(s.altitude_error / 1000.0),
            num(d.dm_frac),
            num(d.drho_frac),
            num(d.d_cl_frac),
            num(d.d_cd_frac),
        ]
    });
    write_rows(
        out,
        &[
            "run",
            "downrange_error_km",
            "altitude_error_km",
            "dm_frac",
            "drho_frac",
            "dcl_frac",
            "dcd_frac",
        ],
        rows,
    )
}

pub fn to_json_pretty<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(value)?;
    out.push(b'\n');
    Ok(out)
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, bytes)?;
    Ok(())
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))
}

pub fn read_profile(path: &Path) -> Result<ReferenceProfile> {
    profile_from_csv(&read_text(path)?)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&read_text(path)?)?)
}
