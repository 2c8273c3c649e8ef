//! CSV and SVG output for analysis results.
//!
//! CSV files open with `# key=value` comment lines describing the run, then
//! a header row. Floats are written in shortest round-trip form so a table
//! read back with [`PatternTable::from_csv`] is bit-identical.

use std::fmt::Write as _;

use crate::analysis::energy::EnergyBalance;
use crate::analysis::pattern::{DeviationMap, PatternKind, PatternTable};
use crate::analysis::proximity::ProximityCurve;
use crate::error::{Error, Result};
use crate::filters::IntegratorMode;
use crate::geometry::MicParams;

fn params_header(out: &mut String, p: &MicParams, mode: IntegratorMode) {
    let _ = writeln!(out, "# m={:?}", p.m);
    let _ = writeln!(out, "# d={:?}", p.d);
    let _ = writeln!(out, "# fs={:?}", p.fs);
    let _ = writeln!(out, "# c0={:?}", p.c0);
    let _ = writeln!(out, "# g={:?}", p.g);
    let _ = writeln!(out, "# integrator={mode}");
}

fn join(v: &[f64]) -> String {
    v.iter()
        .map(|x| format!("{x:?}"))
        .collect::<Vec<_>>()
        .join(";")
}

impl PatternTable {
    pub fn to_csv(&self) -> Result<String> {
        self.check_shape()?;
        let mut out = String::new();
        let kind = match self.kind {
            PatternKind::Monochromatic => "monochromatic",
            PatternKind::Subband => "subband",
        };
        let _ = writeln!(out, "# kind={kind}");
        let source = match self.kind {
            PatternKind::Monochromatic => "formula",
            PatternKind::Subband => "engine",
        };
        let _ = writeln!(out, "# source={source}");
        params_header(&mut out, &self.params, self.integrator);
        if let Some(edges) = &self.band_edges {
            let _ = writeln!(out, "# band_edges={}", join(edges));
        }
        let multi = self.distances.len() > 1;
        if !multi {
            let _ = writeln!(out, "# r={:?}", self.distances[0]);
            out.push_str("angle_deg,freq_hz,magnitude\n");
        } else {
            out.push_str("angle_deg,freq_hz,r_m,magnitude\n");
        }
        for (a, theta) in self.angles.iter().enumerate() {
            for (fi, f) in self.frequencies.iter().enumerate() {
                for (ri, r) in self.distances.iter().enumerate() {
                    let deg = theta.to_degrees();
                    let v = self.get(a, fi, ri);
                    if multi {
                        let _ = writeln!(out, "{deg:?},{f:?},{r:?},{v:?}");
                    } else {
                        let _ = writeln!(out, "{deg:?},{f:?},{v:?}");
                    }
                }
            }
        }
        Ok(out)
    }

    /// Parses the output of [`PatternTable::to_csv`].
    pub fn from_csv(text: &str) -> Result<Self> {
        let bad =
            |line: usize, what: &str| Error::Invalid(format!("pattern csv line {line}: {what}"));
        let mut meta = std::collections::HashMap::new();
        let mut header: Option<Vec<&str>> = None;
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(kv) = line.strip_prefix('#') {
                let (k, v) = kv
                    .trim()
                    .split_once('=')
                    .ok_or_else(|| bad(i + 1, "expected key=value"))?;
                meta.insert(k.trim().to_string(), v.trim().to_string());
                continue;
            }
            if header.is_none() {
                header = Some(line.split(',').map(str::trim).collect());
                continue;
            }
            let vals = line
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|_| bad(i + 1, "not a number"))
                })
                .collect::<Result<Vec<f64>>>()?;
            if vals.len() != header.as_ref().map_or(0, Vec::len) {
                return Err(bad(i + 1, "wrong column count"));
            }
            rows.push(vals);
        }
        let header =
            header.ok_or_else(|| Error::Invalid("pattern csv has no header row".into()))?;
        let multi = match header.as_slice() {
            ["angle_deg", "freq_hz", "magnitude"] => false,
            ["angle_deg", "freq_hz", "r_m", "magnitude"] => true,
            _ => {
                return Err(Error::Invalid(format!(
                    "unexpected pattern csv header {header:?}"
                )))
            }
        };
        let num = |k: &str| -> Result<f64> {
            meta.get(k)
                .ok_or_else(|| Error::Invalid(format!("pattern csv is missing '# {k}='")))?
                .parse::<f64>()
                .map_err(|_| Error::Invalid(format!("pattern csv: '{k}' is not a number")))
        };
        let kind = match meta.get("kind").map(String::as_str) {
            Some("monochromatic") => PatternKind::Monochromatic,
            Some("subband") => PatternKind::Subband,
            other => {
                return Err(Error::Invalid(format!(
                    "pattern csv: unknown kind {other:?}"
                )))
            }
        };
        let integrator = meta
            .get("integrator")
            .ok_or_else(|| Error::Invalid("pattern csv is missing '# integrator='".into()))?
            .parse::<IntegratorMode>()
            .map_err(|e| Error::Invalid(format!("pattern csv: {e}")))?;
        let params = MicParams {
            m: num("m")?,
            d: num("d")?,
            g: num("g")?,
            c0: num("c0")?,
            fs: num("fs")?,
        };
        let band_edges = meta
            .get("band_edges")
            .map(|s| {
                s.split(';')
                    .map(|x| {
                        x.parse::<f64>()
                            .map_err(|_| Error::Invalid("pattern csv: bad band edge".into()))
                    })
                    .collect::<Result<Vec<f64>>>()
            })
            .transpose()?;

        // grids in first-seen order; rows are written angle-major
        let mut angles_deg: Vec<f64> = Vec::new();
        let mut freqs: Vec<f64> = Vec::new();
        let mut dists: Vec<f64> = Vec::new();
        let push_unique = |v: &mut Vec<f64>, x: f64| {
            if !v.iter().any(|&y| y.to_bits() == x.to_bits()) {
                v.push(x);
            }
        };
        for row in &rows {
            push_unique(&mut angles_deg, row[0]);
            push_unique(&mut freqs, row[1]);
            if multi {
                push_unique(&mut dists, row[2]);
            }
        }
        if !multi {
            dists.push(num("r")?);
        }
        let magnitude: Vec<f64> = rows.iter().map(|r| *r.last().unwrap()).collect();
        let table = PatternTable {
            kind,
            angles: angles_deg.iter().map(|d| d.to_radians()).collect(),
            frequencies: freqs,
            band_edges,
            distances: dists,
            magnitude,
            integrator,
            params,
        };
        table.check_shape()?;
        Ok(table)
    }

    /// Polar plot with one closed curve per frequency at the first distance.
    /// `theta = 0` points up.
    pub fn to_svg(&self) -> Result<String> {
        self.check_shape()?;
        const SIZE: f64 = 400.0;
        const COLORS: [&str; 6] = [
            "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
        ];
        let c = SIZE / 2.0;
        let radius = c - 20.0;
        let peak = self.magnitude.iter().copied().fold(0.0, f64::max);
        let scale = if peak > 0.0 { radius / peak } else { 0.0 };
        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
        );
        for ring in [0.25, 0.5, 0.75, 1.0] {
            let _ = writeln!(
                out,
                r##"<circle cx="{c}" cy="{c}" r="{:.2}" fill="none" stroke="#ccc"/>"##,
                radius * ring
            );
        }
        for fi in 0..self.frequencies.len() {
            let mut d = String::new();
            for (a, theta) in self.angles.iter().enumerate() {
                let v = self.get(a, fi, 0) * scale;
                let (x, y) = (c + v * theta.sin(), c - v * theta.cos());
                let _ = write!(d, "{}{x:.2},{y:.2} ", if a == 0 { "M" } else { "L" });
            }
            d.push('Z');
            let _ = writeln!(
                out,
                r#"<path d="{d}" fill="none" stroke="{}"><title>{} Hz</title></path>"#,
                COLORS[fi % COLORS.len()],
                self.frequencies[fi]
            );
        }
        out.push_str("</svg>\n");
        Ok(out)
    }
}

impl ProximityCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        params_header(&mut out, &self.params, self.integrator);
        let _ = writeln!(out, "# theta_deg={:?}", self.theta.to_degrees());
        let _ = writeln!(out, "# f_low={:?}", self.f_low);
        let _ = writeln!(out, "# f_ref={:?}", self.f_ref);
        out.push_str("r_m,boost_db\n");
        for (r, b) in self.distances.iter().zip(&self.boost_db) {
            let _ = writeln!(out, "{r:?},{b:?}");
        }
        out
    }
}

impl DeviationMap {
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        params_header(&mut out, &self.params, self.integrator);
        out.push_str("freq_hz,r_m,max_deviation\n");
        for (fi, f) in self.frequencies.iter().enumerate() {
            for (ri, r) in self.distances.iter().enumerate() {
                let _ = writeln!(out, "{f:?},{r:?},{:?}", self.get(fi, ri));
            }
        }
        out
    }
}

impl EnergyBalance {
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# fs={:?}", self.fs);
        let _ = writeln!(out, "# frame_s={:?}", self.frame_duration);
        out.push_str("frame,time_s,band_hz,energy\n");
        for f in &self.frames {
            let t = f.index as f64 * self.frame_duration;
            let _ = writeln!(out, "{},{t:?},total,{:?}", f.index, f.total);
            for (b, e) in f.bands.iter().enumerate() {
                let _ = writeln!(out, "{},{t:?},{},{e:?}", f.index, self.bands.centers()[b]);
            }
        }
        out
    }
}
