use std::collections::HashMap;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::model::{ErrorModel, Family};
use crate::sampler::{parameter_names, parameter_values, state_from_values, BlockTally, ChainMeta, ChainStore, Schedule, Tallies};

const FORMAT_TAG: &str = "joint-nlme-chain 1";

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

/// `chain.csv` → `chain_x.csv`: the random effects, one column per
/// individual and component.
pub fn x_companion_path(path: &Path) -> PathBuf {
    sibling(path, "_x.csv")
}

/// `chain.csv` → `chain.meta`: seed, schedule, model choice, ids and
/// acceptance tallies as `key = value` lines.
pub fn meta_path(path: &Path) -> PathBuf {
    sibling(path, ".meta")
}

/// 17 significant digits: parses back to the identical binary value.
fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn tally_text(t: &BlockTally) -> String {
    format!("{},{},{}", t.proposed, t.accepted, t.fallbacks)
}

/// Writes the draws, the random-effect companion and the metadata sidecar,
/// each atomically. Wall-clock time is not written.
pub fn persist_chain(store: &ChainStore, path: &Path) -> Result<()> {
    let (p, q, r) = store.dims();
    let names = parameter_names(p, q, r);
    let meta = &store.meta;
    if let Some(bad) = meta.ids.iter().find(|id| id.is_empty() || id.contains([',', '|', '\n', '\r'])) {
        return Err(Error::Data(format!("id `{bad}` cannot be written to a chain file")));
    }
    write_atomic(&meta_path(path), |w| {
        writeln!(w, "format = {FORMAT_TAG}")?;
        writeln!(w, "seed = {}", meta.seed)?;
        writeln!(w, "iterations = {}", meta.schedule.iterations)?;
        writeln!(w, "burn_in = {}", meta.schedule.burn_in)?;
        writeln!(w, "thin = {}", meta.schedule.thin)?;
        writeln!(w, "family = {}", meta.family)?;
        writeln!(w, "error_model = {}", meta.error_model)?;
        writeln!(w, "draws = {}", store.len())?;
        writeln!(w, "dims = {p},{q},{r}")?;
        writeln!(w, "ids = {}", meta.ids.join(","))?;
        for (name, t) in meta.tallies.blocks() {
            writeln!(w, "tally.{name} = {}", tally_text(&t))?;
        }
        Ok(())
    })?;
    write_atomic(path, |w| {
        writeln!(w, "iteration,{}", names.join(","))?;
        for (it, s) in store.iterations.iter().zip(&store.draws) {
            write!(w, "{it}")?;
            for v in parameter_values(s) {
                write!(w, ",{}", num(v))?;
            }
            writeln!(w)?;
        }
        Ok(())
    })?;
    write_atomic(&x_companion_path(path), |w| {
        write!(w, "iteration")?;
        for id in &meta.ids {
            for j in 1..=q {
                write!(w, ",x[{j}|{id}]")?;
            }
        }
        writeln!(w)?;
        for (it, s) in store.iterations.iter().zip(&store.draws) {
            write!(w, "{it}")?;
            for v in s.x.iter() {
                write!(w, ",{}", num(*v))?;
            }
            writeln!(w)?;
        }
        Ok(())
    })
}

fn format_err(file: &Path, line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Format {
        line,
        msg: format!("{}: {msg}", file.display()),
    }
}

fn read_meta(path: &Path) -> Result<(HashMap<String, (String, usize)>, String)> {
    let text = std::fs::read_to_string(path)?;
    let mut map = HashMap::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format_err(path, n + 1, "expected key = value"))?;
        map.insert(k.trim().to_string(), (v.trim().to_string(), n + 1));
    }
    Ok((map, text))
}

struct Meta<'a> {
    path: &'a Path,
    map: HashMap<String, (String, usize)>,
    lines: usize,
}

impl Meta<'_> {
    fn raw(&self, key: &str) -> Result<(&str, usize)> {
        self.map
            .get(key)
            .map(|(v, l)| (v.as_str(), *l))
            .ok_or_else(|| format_err(self.path, self.lines + 1, format!("missing key `{key}`")))
    }

    fn get<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let (v, line) = self.raw(key)?;
        v.parse()
            .map_err(|_| format_err(self.path, line, format!("bad value `{v}` for `{key}`")))
    }

    fn list<T: std::str::FromStr>(&self, key: &str) -> Result<Vec<T>> {
        let (v, line) = self.raw(key)?;
        v.split(',')
            .map(|s| s.trim().parse())
            .collect::<std::result::Result<Vec<T>, _>>()
            .map_err(|_| format_err(self.path, line, format!("bad list `{v}` for `{key}`")))
    }
}

/// Numeric table with an `iteration` first column; checks header and field
/// counts line by line.
fn read_table(path: &Path, expected_header: &[String], rows: usize) -> Result<(Vec<usize>, Vec<Vec<f64>>)> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let header: Vec<&str> = match lines.next() {
        Some((_, h)) => h.split(',').collect(),
        None => return Err(format_err(path, 1, "empty file")),
    };
    if header.first() != Some(&"iteration") || header[1..] != expected_header.iter().map(String::as_str).collect::<Vec<_>>()[..] {
        return Err(format_err(
            path,
            1,
            format!("column mismatch: expected {} value columns after `iteration`", expected_header.len()),
        ));
    }
    let mut its = Vec::with_capacity(rows);
    let mut values = Vec::with_capacity(rows);
    let mut last = 1;
    for (n, line) in lines {
        last = n + 1;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != header.len() {
            return Err(format_err(
                path,
                n + 1,
                format!("expected {} fields, found {}", header.len(), fields.len()),
            ));
        }
        let it = fields[0]
            .parse()
            .map_err(|_| format_err(path, n + 1, format!("bad iteration `{}`", fields[0])))?;
        let row = fields[1..]
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| format_err(path, n + 1, e))?;
        its.push(it);
        values.push(row);
    }
    if its.len() != rows {
        return Err(format_err(
            path,
            last + 1,
            format!("expected {rows} draws, found {} (truncated file?)", its.len()),
        ));
    }
    Ok((its, values))
}

/// Reads a chain written by [`persist_chain`].
pub fn load_chain(path: &Path) -> Result<ChainStore> {
    let mpath = meta_path(path);
    let (map, text) = read_meta(&mpath)?;
    let meta = Meta {
        path: &mpath,
        map,
        lines: text.lines().count(),
    };
    let (tag, line) = meta.raw("format")?;
    if tag != FORMAT_TAG {
        return Err(format_err(&mpath, line, format!("unsupported format `{tag}`")));
    }
    let dims: Vec<usize> = meta.list("dims")?;
    let [p, q, r] = dims[..] else {
        return Err(format_err(&mpath, meta.raw("dims")?.1, "dims needs three entries"));
    };
    let draws: usize = meta.get("draws")?;
    let ids: Vec<String> = {
        let (v, _) = meta.raw("ids")?;
        if v.is_empty() {
            Vec::new()
        } else {
            v.split(',').map(|s| s.trim().to_string()).collect()
        }
    };
    let mut tallies = Tallies::default();
    for (name, slot) in [
        ("x", &mut tallies.x),
        ("alpha", &mut tallies.alpha),
        ("beta", &mut tallies.beta),
        ("rho", &mut tallies.rho),
        ("alpha_rw", &mut tallies.alpha_rw),
        ("beta_rw", &mut tallies.beta_rw),
        ("rho_rw", &mut tallies.rho_rw),
    ] {
        let key = format!("tally.{name}");
        let v: Vec<u64> = meta.list(&key)?;
        let [proposed, accepted, fallbacks] = v[..] else {
            return Err(format_err(&mpath, meta.raw(&key)?.1, "tally needs three counts"));
        };
        *slot = BlockTally {
            proposed,
            accepted,
            fallbacks,
        };
    }
    let chain_meta = ChainMeta {
        seed: meta.get("seed")?,
        schedule: Schedule::new(meta.get("iterations")?, meta.get("burn_in")?, meta.get("thin")?),
        family: meta.get::<Family>("family")?,
        error_model: meta.get::<ErrorModel>("error_model")?,
        ids,
        tallies,
        wall_clock_secs: 0.0,
    };

    let names = parameter_names(p, q, r);
    let (iterations, rows) = read_table(path, &names, draws)?;
    let xpath = x_companion_path(path);
    let x_names: Vec<String> = chain_meta
        .ids
        .iter()
        .flat_map(|id| (1..=q).map(move |j| format!("x[{j}|{id}]")))
        .collect();
    let (x_its, x_rows) = read_table(&xpath, &x_names, draws)?;
    let m = chain_meta.ids.len();
    let mut states = Vec::with_capacity(draws);
    for (k, (row, xrow)) in rows.iter().zip(&x_rows).enumerate() {
        if x_its[k] != iterations[k] {
            return Err(format_err(&xpath, k + 2, "iteration does not match the draws file"));
        }
        let x = DMatrix::from_column_slice(q, m, xrow);
        states.push(state_from_values(row, p, q, r, x).map_err(|e| format_err(path, k + 2, e))?);
    }
    Ok(ChainStore {
        draws: states,
        iterations,
        meta: chain_meta,
    })
}
