//! CSV and JSON emission. Every number is written with 17 significant
//! digits and every file carries the config hash.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::partition::LevelStats;
use crate::sampling::ExponentTrace;
use crate::spectrum::SpectrumRow;

pub const TOOL_NAME: &str = "mfx";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// `x` with 17 significant digits; `NaN`, `inf`, `-inf` otherwise.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "NaN".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// Pretty-printing JSON formatter that writes floats as [`fmt_f64`].
/// Non-finite floats never reach it (serde_json emits `null`).
struct FixedDigits<'a>(PrettyFormatter<'a>);

impl Formatter for FixedDigits<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        w.write_all(fmt_f64(value).as_bytes())
    }

    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, value as f64)
    }

    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }

    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }

    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }

    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }

    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }

    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

pub fn to_json_bytes<T: Serialize + ?Sized>(value: &T) -> io::Result<Vec<u8>> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, FixedDigits(PrettyFormatter::new()));
    value.serialize(&mut ser).map_err(io::Error::other)?;
    buf.push(b'\n');
    Ok(buf)
}

/// Wrapper written as the top level of every JSON file.
#[derive(Serialize)]
pub struct Document<'a, T: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    pub config_sha256: &'a str,
    pub data: &'a T,
}

impl<'a, T: Serialize> Document<'a, T> {
    pub fn new(command: &'a str, config_sha256: &'a str, data: &'a T) -> Self {
        Document { tool: TOOL_NAME, version: TOOL_VERSION, command, config_sha256, data }
    }
}

pub fn write_json<T: Serialize>(path: &Path, doc: &Document<'_, T>) -> io::Result<()> {
    fs::write(path, to_json_bytes(doc)?)
}

/// CSV body: a `# config_sha256=` line, the header, then the rows.
pub fn csv_bytes(config_sha256: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Vec<u8> {
    let mut out = format!("# config_sha256={config_sha256}\n{}\n", header.join(","));
    for row in rows {
        debug_assert_eq!(row.len(), header.len());
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out.into_bytes()
}

pub const PARTITION_HEADER: [&str; 5] = ["n", "q", "log2_sum", "tau_hat", "a_n"];
pub const SAMPLE_HEADER: [&str; 4] = ["seed", "depth", "mu_exponent", "nu_exponent"];
pub const SPECTRUM_HEADER: [&str; 11] =
    ["alpha", "q", "q_tilde", "h_r", "h_r_tilde", "b_star", "B_star", "c1", "c2", "c3", "packing_valid"];

pub fn partition_row(s: &LevelStats) -> Vec<String> {
    vec![s.n.to_string(), fmt_f64(s.q), fmt_f64(s.log2_sum), fmt_f64(s.tau_hat), s.a_n.to_string()]
}

pub fn sample_rows(t: &ExponentTrace) -> impl Iterator<Item = Vec<String>> + '_ {
    let seed = t.seed.map(|s| s.to_string()).unwrap_or_default();
    t.depths
        .iter()
        .zip(t.mu_exponents.iter().zip(&t.nu_exponents))
        .map(move |(d, (m, n))| vec![seed.clone(), d.to_string(), fmt_f64(*m), fmt_f64(*n)])
}

pub fn spectrum_row(r: &SpectrumRow) -> Vec<String> {
    let b = &r.branch;
    let c = &r.conditions;
    vec![
        fmt_f64(b.alpha),
        fmt_f64(b.q),
        fmt_f64(b.q_tilde),
        fmt_f64(b.h_r),
        fmt_f64(b.h_r_tilde),
        fmt_f64(r.b_star),
        fmt_f64(r.big_b_star),
        c.c1.to_string(),
        c.c2.to_string(),
        c.c3.to_string(),
        r.packing_valid.to_string(),
    ]
}
