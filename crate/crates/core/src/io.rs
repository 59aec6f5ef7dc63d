//! Text formats: comma-separated tables with `# key = value` preambles, and
//! whitespace-separated field maps.
//!
//! Numbers are written in the shortest form that parses back to the same
//! value, so a file written here reads and writes back byte-identical.

use std::fmt::Write as _;
use std::path::Path;

use crate::dynamics::{Grid2, Transient};
use crate::error::{Error, Result};
use crate::holeburn::SaturationPoint;
use crate::spectrum::{Metadata, SpectrumScan};

/// Column layout of one table kind: required names, then optional ones.
struct Columns {
    required: &'static [&'static str],
    optional: &'static [&'static str],
}

const SCAN: Columns = Columns { required: &["detuning_MHz", "signal"], optional: &["sigma"] };
const TRANSIENT: Columns = Columns { required: &["time_us", "counts"], optional: &[] };
const RATIO: Columns = Columns { required: &["dark_time_ms", "ratio"], optional: &["sigma"] };
const SATURATION: Columns = Columns { required: &["total_power", "hole_fwhm_MHz", "sigma"], optional: &[] };

struct Table {
    metadata: Metadata,
    columns: Vec<Vec<f64>>,
}

fn parse_table(text: &str, layout: &Columns) -> Result<Table> {
    let mut metadata = Metadata::default();
    let mut body_start = 0;
    let mut header_line = 0;
    for (i, line) in text.split_inclusive('\n').enumerate() {
        let trimmed = line.trim();
        if let Some(rest) = trimmed.strip_prefix('#') {
            if let Some((k, v)) = rest.split_once('=') {
                metadata.set(k.trim(), v.trim());
            }
        } else if !trimmed.is_empty() {
            header_line = i + 1;
            break;
        }
        body_start += line.len();
    }
    if header_line == 0 {
        return Err(Error::Parse { line: 1, reason: "no header row".into() });
    }

    let mut reader =
        csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(&text.as_bytes()[body_start..]);
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Parse { line: header_line, reason: e.to_string() })?
        .iter()
        .map(str::to_owned)
        .collect();
    let width = header.len();
    let expected = layout.required.len()..=layout.required.len() + layout.optional.len();
    let names_ok =
        header.iter().zip(layout.required.iter().chain(layout.optional)).all(|(h, want)| h.eq_ignore_ascii_case(want));
    if !expected.contains(&width) || !names_ok {
        let mut want = layout.required.join(",");
        for o in layout.optional {
            want.push_str(&format!("[,{o}]"));
        }
        return Err(Error::Parse {
            line: header_line,
            reason: format!("expected header `{want}`, found `{}`", header.join(",")),
        });
    }

    let mut columns = vec![Vec::new(); width];
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize) + header_line - 1;
            let reason = match e.kind() {
                csv::ErrorKind::UnequalLengths { len, .. } => format!("expected {width} columns, found {len}"),
                _ => e.to_string(),
            };
            Error::Parse { line, reason }
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize) + header_line - 1;
        for (c, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                line,
                reason: format!("column `{}`: `{field}` is not a number", header[c]),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse { line, reason: format!("column `{}` is not finite", header[c]) });
            }
            columns[c].push(v);
        }
    }
    if columns[0].is_empty() {
        return Err(Error::Parse { line: header_line + 1, reason: "no data rows".into() });
    }
    Ok(Table { metadata, columns })
}

fn write_table(metadata: &Metadata, header: &[&str], columns: &[&[f64]]) -> String {
    let mut out = String::new();
    for (k, v) in metadata.iter() {
        let _ = writeln!(out, "# {k} = {v}");
    }
    out.push_str(&header.join(","));
    out.push('\n');
    for row in 0..columns.first().map_or(0, |c| c.len()) {
        for (c, col) in columns.iter().enumerate() {
            if c > 0 {
                out.push(',');
            }
            push_number(&mut out, col[row]);
        }
        out.push('\n');
    }
    out
}

/// Plain decimal for moderate magnitudes, exponent form otherwise; both
/// parse back to the same bits.
fn push_number(out: &mut String, v: f64) {
    let a = v.abs();
    if a == 0.0 || (1e-4..1e15).contains(&a) {
        let _ = write!(out, "{v}");
    } else {
        let _ = write!(out, "{v:e}");
    }
}

fn number(v: f64) -> String {
    let mut s = String::new();
    push_number(&mut s, v);
    s
}

pub fn parse_scan(text: &str) -> Result<SpectrumScan> {
    let mut t = parse_table(text, &SCAN)?;
    let sigma = (t.columns.len() == 3).then(|| t.columns.pop().unwrap_or_default());
    let signal = t.columns.pop().unwrap_or_default();
    let detuning = t.columns.pop().unwrap_or_default();
    let scan = SpectrumScan { detuning_mhz: detuning, signal, sigma, metadata: t.metadata };
    scan.validate()?;
    Ok(scan)
}

pub fn format_scan(scan: &SpectrumScan) -> String {
    match &scan.sigma {
        Some(s) => {
            write_table(&scan.metadata, &["detuning_MHz", "signal", "sigma"], &[&scan.detuning_mhz, &scan.signal, s])
        }
        None => write_table(&scan.metadata, &["detuning_MHz", "signal"], &[&scan.detuning_mhz, &scan.signal]),
    }
}

pub fn parse_transient(text: &str) -> Result<Transient> {
    let t = parse_table(text, &TRANSIENT)?;
    let [time, counts]: [Vec<f64>; 2] = t.columns.try_into().map_err(|_| Error::Data("bad transient table".into()))?;
    let mut tr = Transient::new(time, counts)?;
    if let Some(b) = t.metadata.get_f64("background") {
        tr.background = b;
    }
    Ok(tr)
}

pub fn format_transient(t: &Transient) -> String {
    write_table(&Metadata::default(), &["time_us", "counts"], &[&t.time_us, &t.counts])
}

/// Polarization ratio against dark time.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioSeries {
    pub dark_time_ms: Vec<f64>,
    pub ratio: Vec<f64>,
    pub sigma: Option<Vec<f64>>,
}

impl RatioSeries {
    pub fn points(&self) -> Vec<(f64, f64)> {
        self.dark_time_ms.iter().copied().zip(self.ratio.iter().copied()).collect()
    }
}

pub fn parse_ratios(text: &str) -> Result<RatioSeries> {
    let mut t = parse_table(text, &RATIO)?;
    let sigma = (t.columns.len() == 3).then(|| t.columns.pop().unwrap_or_default());
    if let Some(s) = &sigma {
        if let Some(i) = s.iter().position(|v| !(*v > 0.0)) {
            return Err(Error::Data(format!("sigma must be positive (row {})", i + 1)));
        }
    }
    let ratio = t.columns.pop().unwrap_or_default();
    let dark = t.columns.pop().unwrap_or_default();
    if let Some(i) = dark.iter().position(|v| *v < 0.0) {
        return Err(Error::Data(format!("negative dark time (row {})", i + 1)));
    }
    Ok(RatioSeries { dark_time_ms: dark, ratio, sigma })
}

pub fn format_ratios(r: &RatioSeries) -> String {
    match &r.sigma {
        Some(s) => {
            write_table(&Metadata::default(), &["dark_time_ms", "ratio", "sigma"], &[&r.dark_time_ms, &r.ratio, s])
        }
        None => write_table(&Metadata::default(), &["dark_time_ms", "ratio"], &[&r.dark_time_ms, &r.ratio]),
    }
}

pub fn parse_saturation(text: &str) -> Result<Vec<SaturationPoint>> {
    let t = parse_table(text, &SATURATION)?;
    (0..t.columns[0].len()).map(|i| SaturationPoint::new(t.columns[0][i], t.columns[1][i], t.columns[2][i])).collect()
}

pub fn format_saturation(points: &[SaturationPoint]) -> String {
    let p: Vec<f64> = points.iter().map(|p| p.total_power).collect();
    let w: Vec<f64> = points.iter().map(|p| p.hole_fwhm).collect();
    let s: Vec<f64> = points.iter().map(|p| p.sigma).collect();
    write_table(&Metadata::default(), &["total_power", "hole_fwhm_MHz", "sigma"], &[&p, &w, &s])
}

/// Plot-ready curve: `x,y,model_y,residual`.
pub fn format_curve(x: &[f64], y: &[f64], model: &[f64]) -> String {
    let residual: Vec<f64> = y.iter().zip(model).map(|(a, b)| a - b).collect();
    write_table(&Metadata::default(), &["x", "y", "model_y", "residual"], &[x, y, model, &residual])
}

/// `nx ny dx_nm dy_nm` on the first non-comment line, then `nx * ny`
/// values in row-major order, any whitespace between them.
pub fn parse_grid(text: &str) -> Result<Grid2> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| {
        let t = l.trim();
        !t.is_empty() && !t.starts_with('#')
    });
    let (hline, header) = lines.next().ok_or(Error::Parse { line: 1, reason: "empty map".into() })?;
    let h: Vec<&str> = header.split_whitespace().collect();
    let bad_header = || Error::Parse { line: hline + 1, reason: "expected `nx ny dx_nm dy_nm`".into() };
    if h.len() != 4 {
        return Err(bad_header());
    }
    let nx: usize = h[0].parse().map_err(|_| bad_header())?;
    let ny: usize = h[1].parse().map_err(|_| bad_header())?;
    let dx: f64 = h[2].parse().map_err(|_| bad_header())?;
    let dy: f64 = h[3].parse().map_err(|_| bad_header())?;
    let mut values = Vec::with_capacity(nx * ny);
    for (i, line) in lines {
        for tok in line.split_whitespace() {
            let v: f64 =
                tok.parse().map_err(|_| Error::Parse { line: i + 1, reason: format!("`{tok}` is not a number") })?;
            values.push(v);
        }
    }
    Grid2::new(nx, ny, dx, dy, values)
}

pub fn format_grid(g: &Grid2) -> String {
    let mut out = format!("{} {} {} {}\n", g.nx, g.ny, number(g.dx_nm), number(g.dy_nm));
    for row in g.values.chunks(g.nx.max(1)) {
        let line: Vec<String> = row.iter().map(|&v| number(v)).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

pub fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

pub fn read_scan(path: &Path) -> Result<SpectrumScan> {
    parse_scan(&read_to_string(path)?).map_err(|e| with_path(path, e))
}

pub fn read_transient(path: &Path) -> Result<Transient> {
    parse_transient(&read_to_string(path)?).map_err(|e| with_path(path, e))
}

pub fn read_ratios(path: &Path) -> Result<RatioSeries> {
    parse_ratios(&read_to_string(path)?).map_err(|e| with_path(path, e))
}

pub fn read_saturation(path: &Path) -> Result<Vec<SaturationPoint>> {
    parse_saturation(&read_to_string(path)?).map_err(|e| with_path(path, e))
}

pub fn read_grid(path: &Path) -> Result<Grid2> {
    parse_grid(&read_to_string(path)?).map_err(|e| with_path(path, e))
}

fn with_path(path: &Path, e: Error) -> Error {
    match e {
        Error::Parse { line, reason } => Error::Parse { line, reason: format!("{}: {reason}", path.display()) },
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const CANONICAL: &str = "# temperature_K = 1.3\n# field_mT = 0\n# pump_power = 0.5\ndetuning_MHz,signal,sigma\n-1.5,0.25,0.01\n0,0.125,0.01\n2,1e-7,0.02\n";

    #[test]
    fn scan_round_trip_is_byte_identical() {
        let s = parse_scan(CANONICAL).unwrap();
        assert_eq!(s.metadata.get_f64("temperature_K"), Some(1.3));
        assert_eq!(s.signal[2], 1e-7);
        assert_eq!(format_scan(&s), CANONICAL);
    }

    #[test]
    fn errors_name_the_row() {
        let bad = "# a = 1\ndetuning_MHz,signal\n0,1\n1,2,3\n";
        match parse_scan(bad) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("{other:?}"),
        }
        let bad = "detuning_MHz,signal\n0,1\n1,abc\n";
        match parse_scan(bad) {
            Err(Error::Parse { line, reason }) => {
                assert_eq!(line, 3);
                assert!(reason.contains("signal"));
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_scan("time,signal\n0,1\n"), Err(Error::Parse { line: 1, .. })));
        assert!(parse_scan("detuning_MHz,signal\n1,1\n0,1\n").is_err());
        assert!(parse_transient("").is_err());
        assert!(parse_transient("time_us,counts\n").is_err());
    }

    #[test]
    fn other_tables() {
        let t = parse_transient("time_us,counts\n0,10\n0.5,4\n1,2\n").unwrap();
        assert_eq!(t.counts, vec![10.0, 4.0, 2.0]);
        assert_eq!(format_transient(&t), "time_us,counts\n0,10\n0.5,4\n1,2\n");
        let r = parse_ratios("dark_time_ms,ratio\n1,0.9\n1,0.92\n40,0.6\n").unwrap();
        assert_eq!(r.points()[1], (1.0, 0.92));
        assert_eq!(format_ratios(&r), "dark_time_ms,ratio\n1,0.9\n1,0.92\n40,0.6\n");
        let s = parse_saturation("total_power,hole_fwhm_MHz,sigma\n1,140,3\n10,200,4\n").unwrap();
        assert_eq!(s[1].hole_fwhm, 200.0);
        assert_eq!(format_saturation(&s), "total_power,hole_fwhm_MHz,sigma\n1,140,3\n10,200,4\n");
    }

    #[test]
    fn grid_round_trip() {
        let text = "# mode purcell\n3 2 10 12.5\n1 2 3\n4 5 6.5\n";
        let g = parse_grid(text).unwrap();
        assert_eq!(g.values[5], 6.5);
        assert_eq!(format_grid(&g), "3 2 10 12.5\n1 2 3\n4 5 6.5\n");
        assert!(parse_grid("3 2 10 10\n1 2 3\n4 5\n").is_err());
        assert!(matches!(parse_grid("3 2 10\n"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse_grid("1 2 1 1\n1\nx\n"), Err(Error::Parse { line: 3, .. })));
    }

    #[test]
    fn curve_columns() {
        let c = format_curve(&[0.0, 1.0], &[1.0, 2.0], &[0.5, 2.5]);
        assert_eq!(c, "x,y,model_y,residual\n0,1,0.5,0.5\n1,2,2.5,-0.5\n");
    }

    proptest! {
        #[test]
        fn written_scans_round_trip(
            steps in proptest::collection::vec(1e-6f64..1e3, 1..40),
            start in -1e4f64..1e4,
            seed in any::<u64>(),
        ) {
            let mut x = vec![start];
            for s in &steps {
                let next = x[x.len() - 1] + s;
                prop_assume!(next > x[x.len() - 1]);
                x.push(next);
            }
            let y: Vec<f64> = x.iter().enumerate().map(|(i, v)| (v * 1.37 + (seed % 97) as f64 + i as f64).sin() * 1e3).collect();
            let mut scan = SpectrumScan::new(x, y).unwrap();
            scan.metadata.set("field_mT", 213.8);
            let text = format_scan(&scan);
            let back = parse_scan(&text).unwrap();
            prop_assert_eq!(&back, &scan);
            prop_assert_eq!(format_scan(&back), text);
        }
    }
}
