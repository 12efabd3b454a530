use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};

use super::Method;
use crate::dpt::{LiouvillianSpectrum, SpinDistribution};
use crate::error::{Error, Result};
use crate::subspace::{SubspaceMoments, WignerGrid};

pub const MOMENTS_HEADER: [&str; 8] =
    ["two_s", "s_tilde", "sz_mean", "sz2_mean", "photon_mean", "method", "converged", "residual"];
pub const DISTRIBUTION_HEADER: [&str; 4] = ["two_s", "s_tilde", "p", "p_scaled"];
pub const SPECTRUM_HEADER: [&str; 4] = ["index", "re_lambda", "im_lambda", "source"];
pub const WIGNER_HEADER: [&str; 3] = ["x", "p", "W"];

/// 17 significant digits, enough to round-trip any f64.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

/// Pretty JSON whose floats carry 17 significant digits.
struct Digits17<'a>(PrettyFormatter<'a>);

impl Formatter for Digits17<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, v: f64) -> io::Result<()> {
        w.write_all(fmt_f64(v).as_bytes())
    }
    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, v: f32) -> io::Result<()> {
        self.write_f64(w, v as f64)
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

pub fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Digits17(PrettyFormatter::new()));
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

/// Write through a temporary file in the same directory and rename into place,
/// so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(
        ".{name}.{}.{}.tmp",
        std::process::id(),
        TMP_COUNTER.fetch_add(1, Ordering::Relaxed)
    ));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, to_json(value)?.as_bytes())
}

fn csv_string(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("CSV fields are UTF-8"))
}

pub fn moments_csv(n_atoms: u32, rows: &[SubspaceMoments], method: Method) -> Result<String> {
    csv_string(
        &MOMENTS_HEADER,
        rows.iter().map(|m| {
            vec![
                m.two_s.to_string(),
                fmt_f64(m.two_s as f64 / n_atoms as f64),
                fmt_f64(m.sz_mean),
                fmt_f64(m.sz2_mean),
                fmt_f64(m.photon_mean),
                method.tag().to_string(),
                m.converged.to_string(),
                fmt_f64(m.residual),
            ]
        }),
    )
}

pub fn distribution_csv(p: &SpinDistribution) -> Result<String> {
    let scaled = p.scaled();
    csv_string(
        &DISTRIBUTION_HEADER,
        p.subspaces.iter().zip(&p.p).zip(&scaled).map(|((s, &w), &ws)| {
            vec![s.two_s.to_string(), fmt_f64(s.s_tilde()), fmt_f64(w), fmt_f64(ws)]
        }),
    )
}

pub fn spectrum_csv(s: &LiouvillianSpectrum) -> Result<String> {
    csv_string(
        &SPECTRUM_HEADER,
        s.eigenvalues
            .iter()
            .enumerate()
            .map(|(i, z)| vec![i.to_string(), fmt_f64(z.re), fmt_f64(z.im), s.source.tag().to_string()]),
    )
}

pub fn wigner_csv(g: &WignerGrid) -> Result<String> {
    let xs = g.spec.xs();
    let ps = g.spec.ps();
    let mut rows = Vec::with_capacity(xs.len() * ps.len());
    for (i, x) in xs.iter().enumerate() {
        for (j, p) in ps.iter().enumerate() {
            rows.push(vec![fmt_f64(*x), fmt_f64(*p), fmt_f64(g.w[[i, j]])]);
        }
    }
    csv_string(&WIGNER_HEADER, rows)
}

/// Header and rows of a CSV document.
pub fn read_csv(text: &str) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers()?.iter().map(str::to_string).collect();
    let rows = r.records().map(|rec| rec.map(|r| r.iter().map(str::to_string).collect())).collect::<std::result::Result<_, _>>()?;
    Ok((header, rows))
}

/// Parse `key = value` lines; `#` starts a comment, blank lines are skipped.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config { line: n + 1, msg: format!("expected key=value, got `{line}`") })?;
        let key = k.trim().replace('_', "-");
        if key.is_empty() {
            return Err(Error::Config { line: n + 1, msg: "empty key".into() });
        }
        out.insert(key, v.trim().to_string());
    }
    Ok(out)
}
