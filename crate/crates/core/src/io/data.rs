use std::collections::{BTreeMap, HashMap};
use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::model::Individual;

/// Ingestion switches.
#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    /// Drop malformed rows (and individuals left without a partner table
    /// entry) instead of failing; every drop is reported in
    /// [`LoadedData::skipped`].
    pub skip_bad_rows: bool,
}

/// A row dropped under [`LoadOptions::skip_bad_rows`].
#[derive(Debug, Clone, PartialEq)]
pub struct SkippedRow {
    pub file: String,
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct LoadedData {
    /// Sorted by id.
    pub individuals: Vec<Individual>,
    pub skipped: Vec<SkippedRow>,
}

struct Sink<'a> {
    file: String,
    skip: bool,
    skipped: &'a mut Vec<SkippedRow>,
}

impl Sink<'_> {
    /// Records a bad row, or turns it into an error when skipping is off.
    fn bad(&mut self, line: usize, reason: String) -> Result<()> {
        if !self.skip {
            return Err(Error::Ingestion {
                file: self.file.clone(),
                line,
                msg: reason,
            });
        }
        self.skipped.push(SkippedRow {
            file: self.file.clone(),
            line,
            reason,
        });
        Ok(())
    }
}

fn reader<R: Read>(src: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(src)
}

fn headers<R: Read>(rdr: &mut csv::Reader<R>, file: &str) -> Result<Vec<String>> {
    let h = rdr.headers().map_err(|e| csv_error(e, file))?;
    if h.is_empty() || h.iter().all(str::is_empty) {
        return Err(Error::Ingestion {
            file: file.into(),
            line: 1,
            msg: "missing header row".into(),
        });
    }
    Ok(h.iter().map(|s| s.to_ascii_lowercase()).collect())
}

fn csv_error(e: csv::Error, file: &str) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    Error::Ingestion {
        file: file.into(),
        line,
        msg: e.to_string(),
    }
}

fn column(headers: &[String], name: &str, file: &str) -> Result<usize> {
    headers.iter().position(|h| h == name).ok_or_else(|| Error::Ingestion {
        file: file.into(),
        line: 1,
        msg: format!("header lacks a `{name}` column"),
    })
}

fn number(cell: &str, name: &str) -> std::result::Result<f64, String> {
    match cell.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        Ok(v) => Err(format!("{name} = {v} is not finite")),
        Err(_) => Err(format!("{name} = `{cell}` is not a number")),
    }
}

type Series = BTreeMap<String, Vec<(f64, f64, usize)>>;

fn read_long<R: Read>(src: R, sink: &mut Sink) -> Result<Series> {
    let file = sink.file.clone();
    let mut rdr = reader(src);
    let h = headers(&mut rdr, &file)?;
    let (ci, ct, cy) = (column(&h, "id", &file)?, column(&h, "time", &file)?, column(&h, "y", &file)?);
    let mut series = Series::new();
    let mut record = csv::StringRecord::new();
    loop {
        match rdr.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => return Err(csv_error(e, &file)),
        }
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != h.len() {
            sink.bad(line, format!("expected {} fields, found {}", h.len(), record.len()))?;
            continue;
        }
        let id = &record[ci];
        if id.is_empty() {
            sink.bad(line, "empty id".into())?;
            continue;
        }
        let parsed = number(&record[ct], "time").and_then(|t| number(&record[cy], "y").map(|y| (t, y)));
        let (t, y) = match parsed {
            Ok(v) => v,
            Err(msg) => {
                sink.bad(line, msg)?;
                continue;
            }
        };
        series.entry(id.to_string()).or_default().push((t, y, line));
    }
    for (id, rows) in series.iter_mut() {
        rows.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.2.cmp(&b.2)));
        let mut kept: Vec<(f64, f64, usize)> = Vec::with_capacity(rows.len());
        for &row in rows.iter() {
            if let Some(prev) = kept.last().filter(|p| p.0 == row.0) {
                sink.bad(
                    row.2,
                    format!("duplicate observation for id {id} at time {} (first on line {})", row.0, prev.2),
                )?;
                continue;
            }
            kept.push(row);
        }
        *rows = kept;
    }
    Ok(series)
}

struct OutcomeRow {
    d: f64,
    w: Vec<f64>,
    line: usize,
}

fn read_outcomes<R: Read>(src: R, sink: &mut Sink) -> Result<HashMap<String, OutcomeRow>> {
    let file = sink.file.clone();
    let mut rdr = reader(src);
    let h = headers(&mut rdr, &file)?;
    let (ci, cd) = (column(&h, "id", &file)?, column(&h, "d", &file)?);
    let mut w_cols: Vec<usize> = (0..h.len()).filter(|&c| c != ci && c != cd).collect();
    // The intercept leads when present; otherwise it is prepended.
    let intercept = h.iter().position(|n| n == "intercept");
    if let Some(c) = intercept {
        w_cols.retain(|&x| x != c);
        w_cols.insert(0, c);
    }
    let mut out = HashMap::new();
    let mut record = csv::StringRecord::new();
    loop {
        match rdr.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => return Err(csv_error(e, &file)),
        }
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != h.len() {
            sink.bad(line, format!("expected {} fields, found {}", h.len(), record.len()))?;
            continue;
        }
        let id = record[ci].to_string();
        if id.is_empty() {
            sink.bad(line, "empty id".into())?;
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, String> =
            std::iter::once(cd).chain(w_cols.iter().copied()).map(|c| number(&record[c], &h[c])).collect();
        let values = match parsed {
            Ok(v) => v,
            Err(msg) => {
                sink.bad(line, msg)?;
                continue;
            }
        };
        if let Some(prev) = out.get(&id).map(|r: &OutcomeRow| r.line) {
            sink.bad(line, format!("second outcome row for id {id} (first on line {prev})"))?;
            continue;
        }
        let mut w = values[1..].to_vec();
        if intercept.is_none() {
            w.insert(0, 1.0);
        }
        out.insert(id, OutcomeRow { d: values[0], w, line });
    }
    Ok(out)
}

fn join(long: Series, mut outcomes: HashMap<String, OutcomeRow>, long_sink: &mut Sink, out_file: &str) -> Result<Vec<Individual>> {
    let mut individuals = Vec::with_capacity(long.len());
    for (id, rows) in long {
        let Some(o) = outcomes.remove(&id) else {
            let line = rows.first().map_or(0, |r| r.2);
            long_sink.bad(line, format!("id {id} has no outcome row in {out_file}"))?;
            continue;
        };
        if rows.is_empty() {
            continue;
        }
        let (times, y) = rows.iter().map(|r| (r.0, r.1)).unzip();
        individuals.push(Individual::new(id, times, y, o.d, o.w)?);
    }
    let mut orphans: Vec<(String, usize)> = outcomes.into_iter().map(|(id, o)| (id, o.line)).collect();
    orphans.sort_by_key(|o| o.1);
    let mut sink = Sink {
        file: out_file.to_string(),
        skip: long_sink.skip,
        skipped: &mut *long_sink.skipped,
    };
    for (id, line) in orphans {
        sink.bad(line, format!("orphan outcome: id {id} has no longitudinal rows"))?;
    }
    Ok(individuals)
}

/// Reads a dataset from a long-format table (`id,time,y`, one observation
/// per row, any order) and an outcome table (`id,d` followed by optional
/// covariate columns). Rows are grouped by id and sorted by time. A column
/// named `intercept` is used as the first covariate; without one a constant
/// 1 is prepended. Individuals come back sorted by id.
pub fn load_dataset(long: &Path, outcomes: &Path) -> Result<Vec<Individual>> {
    load_dataset_with(long, outcomes, &LoadOptions::default()).map(|d| d.individuals)
}

pub fn load_dataset_with(long: &Path, outcomes: &Path, opts: &LoadOptions) -> Result<LoadedData> {
    let open = |p: &Path| {
        std::fs::File::open(p).map_err(|e| Error::Ingestion {
            file: p.display().to_string(),
            line: 0,
            msg: e.to_string(),
        })
    };
    let (lf, of) = (open(long)?, open(outcomes)?);
    let mut skipped = Vec::new();
    let long_name = long.display().to_string();
    let out_name = outcomes.display().to_string();
    let series = read_long(
        lf,
        &mut Sink {
            file: long_name.clone(),
            skip: opts.skip_bad_rows,
            skipped: &mut skipped,
        },
    )?;
    let rows = read_outcomes(
        of,
        &mut Sink {
            file: out_name.clone(),
            skip: opts.skip_bad_rows,
            skipped: &mut skipped,
        },
    )?;
    let individuals = join(
        series,
        rows,
        &mut Sink {
            file: long_name,
            skip: opts.skip_bad_rows,
            skipped: &mut skipped,
        },
        &out_name,
    )?;
    if individuals.is_empty() {
        return Err(Error::Data("no individuals left after ingestion".into()));
    }
    Ok(LoadedData { individuals, skipped })
}

/// Writes the two tables read by [`load_dataset`]. Numbers use the shortest
/// representation that parses back to the same value.
pub fn write_dataset(data: &[Individual], long: &Path, outcomes: &Path) -> Result<()> {
    write_atomic(long, |w| {
        writeln!(w, "id,time,y")?;
        for ind in data {
            for (t, y) in ind.times.iter().zip(&ind.y) {
                writeln!(w, "{},{t},{y}", ind.id)?;
            }
        }
        Ok(())
    })?;
    let k = data.iter().map(|d| d.covariates.len()).max().unwrap_or(1);
    write_atomic(outcomes, |w| {
        write!(w, "id,d,intercept")?;
        for j in 2..=k {
            write!(w, ",w{j}")?;
        }
        writeln!(w)?;
        for ind in data {
            write!(w, "{},{}", ind.id, ind.outcome)?;
            for c in &ind.covariates {
                write!(w, ",{c}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    })
}
