use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde_json::{json, Value};

use scami::algebra::{centered_samples, expand_core, tuple_sum, CoreGraph};
use scami::eval::{
    gen_dataset as generate, mre, nn_classify, precision_recall, synthetic_source, Domain, LabeledDataset, Standardizer,
};
use scami::invariants::{candidate_invariants, describe as describe_table, independence_analysis, scami24_catalog};
use scami::moments::{central_moments, load_raster, Orders, Raster};
use scami::numfmt::to_json_string;
use scami::transforms::{apply_pair, sample_transforms, transform_moments, TransformKind, TransformPair};
use scami::Error;

use crate::{GenOpts, ImageOpts};

/// Relative tolerance of `expand --check-oracle`.
const ORACLE_TOLERANCE: f64 = 1e-9;
/// Side length of the synthetic source used when no image is given.
const SYNTHETIC_SIZE: usize = 256;

pub enum Status {
    Pass,
    Negative,
}

fn meta(command: &str, seed: Option<u64>, config: Value) -> Value {
    json!({
        "tool": env!("CARGO_BIN_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "seed": seed,
        "config": config,
    })
}

fn check_input(path: &Path) -> Result<()> {
    if !path.is_file() {
        bail!("input file {} does not exist", path.display());
    }
    Ok(())
}

fn check_output(path: Option<&Path>) -> Result<()> {
    if let Some(p) = path {
        let parent = p
            .parent()
            .filter(|d| !d.as_os_str().is_empty())
            .unwrap_or(Path::new("."));
        if !parent.is_dir() {
            bail!("output directory {} does not exist", parent.display());
        }
    }
    Ok(())
}

fn write_text(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("cannot write {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn orders(opts: &ImageOpts) -> Result<Orders> {
    match opts.orders[..] {
        [p, c] => Ok(Orders::new(p, c)),
        _ => bail!("--orders takes two values"),
    }
}

fn load(path: &Path, mask_black: bool) -> Result<Raster> {
    let r = load_raster(path)?;
    Ok(if mask_black { r.mask_black() } else { r })
}

fn parse_kind(kind: &str) -> Result<TransformKind> {
    kind.parse().map_err(|e: Error| anyhow!(e))
}

fn path_str(p: Option<&Path>) -> Value {
    p.map_or(Value::Null, |p| json!(p.display().to_string()))
}

pub fn expand(core: &str, check_oracle: Option<usize>, seed: u64, out: Option<&Path>) -> Result<Status> {
    check_output(out)?;
    let graph: CoreGraph = match core.parse() {
        Ok(g) => g,
        Err(Error::Parse { pos, message }) => {
            eprintln!("{core}");
            eprintln!("{}^ {message}", " ".repeat(pos));
            bail!("cannot parse core at column {pos}");
        }
        Err(e) => return Err(e.into()),
    };
    let poly = expand_core(&graph);
    let mut status = Status::Pass;
    let oracle = match check_oracle {
        None => Value::Null,
        Some(size) => {
            if size == 0 {
                bail!("--check-oracle needs a positive size");
            }
            let raster = Raster::random(size, size, seed)?;
            let keys = poly.keys();
            let shape = keys.iter().map(|k| k.shape_order()).max().unwrap_or(0);
            let color = keys.iter().map(|k| k.color_order()).max().unwrap_or(0);
            let table = central_moments(&raster, Orders::new(shape as u8, color as u8))?;
            let symbolic = poly.evaluate(&table)?;
            let brute = tuple_sum(&graph, &centered_samples(&raster));
            let rel = (symbolic - brute).abs() / brute.abs().max(f64::MIN_POSITIVE);
            let pass = rel <= ORACLE_TOLERANCE || (symbolic - brute).abs() <= 1e-12;
            if !pass {
                eprintln!("oracle mismatch: symbolic {symbolic:e}, tuple sum {brute:e}");
                status = Status::Negative;
            }
            json!({"size": size, "symbolic": symbolic, "tuple_sum": brute, "relative_error": rel, "pass": pass})
        }
    };
    let report = json!({
        "meta": meta("expand", Some(seed), json!({"core": core, "check_oracle": check_oracle})),
        "core": graph.to_dsl(),
        "num_points": graph.num_points(),
        "terms": poly.to_records(),
        "oracle": oracle,
    });
    write_text(&to_json_string(&report), out)?;
    Ok(status)
}

pub fn describe(image: &Path, opts: &ImageOpts, out: Option<&Path>) -> Result<Status> {
    check_input(image)?;
    check_output(out)?;
    let orders = orders(opts)?;
    let raster = load(image, opts.mask_black)?;
    let table = central_moments(&raster, orders)?;
    let d = describe_table(scami24_catalog(), &table)?;
    if !d.all_valid() {
        log::warn!("{}: color-degenerate image, descriptor is invalid", image.display());
    }
    let report = json!({
        "meta": meta("describe", None, json!({
            "image": image.display().to_string(),
            "mask_black": opts.mask_black,
            "orders": opts.orders,
        })),
        "area": table.area,
        "descriptor": d.to_json(),
    });
    write_text(&to_json_string(&report), out)?;
    Ok(Status::Pass)
}

#[allow(clippy::too_many_arguments)]
pub fn invariance(
    image: Option<&Path>,
    kind: &str,
    transforms: Option<&Path>,
    per_source: usize,
    seed: u64,
    moment_domain: bool,
    opts: &ImageOpts,
    out: Option<&Path>,
) -> Result<Status> {
    if let Some(p) = image {
        check_input(p)?;
    }
    if let Some(p) = transforms {
        check_input(p)?;
    }
    check_output(out)?;
    let orders = orders(opts)?;
    let pairs: Vec<TransformPair> = match transforms {
        Some(p) => serde_json::from_str(&fs::read_to_string(p)?).with_context(|| format!("{}", p.display()))?,
        None => {
            if per_source == 0 {
                bail!("--per-source must be at least 1");
            }
            sample_transforms(parse_kind(kind)?, per_source, seed)
        }
    };
    let source = match image {
        Some(p) => load(p, opts.mask_black)?,
        None => synthetic_source(0, SYNTHETIC_SIZE)?,
    };
    let table = central_moments(&source, orders)?;
    let catalog = scami24_catalog();
    let reference = describe_table(catalog, &table)?;
    let variants = pairs
        .iter()
        .map(|t| {
            let m = if moment_domain {
                transform_moments(&table, &t.shape, &t.color)?
            } else {
                central_moments(&apply_pair(&source, t)?, orders)?
            };
            describe_table(catalog, &m)
        })
        .collect::<scami::Result<Vec<_>>>()?;
    let report = mre(&reference, &variants)?;
    let config = json!({
        "image": path_str(image),
        "kind": if transforms.is_some() { Value::Null } else { json!(kind) },
        "transforms": path_str(transforms),
        "per_source": pairs.len(),
        "moment_domain": moment_domain,
        "mask_black": opts.mask_black,
        "orders": opts.orders,
        "out": path_str(out),
    });
    let result = json!({
        "meta": meta("invariance", Some(seed), config),
        "reference": reference.to_json(),
        "report": report.to_json(),
    });
    print!("{}", to_json_string(&result));
    if let Some(p) = out {
        write_text(&report.to_csv(), Some(p))?;
    }
    Ok(Status::Pass)
}

pub fn independence(catalog: bool, samples: usize, seed: u64, out: Option<&Path>) -> Result<Status> {
    check_output(out)?;
    if samples == 0 {
        bail!("--samples must be at least 1");
    }
    let defs = if catalog {
        scami24_catalog().to_vec()
    } else {
        candidate_invariants()
    };
    let summary = independence_analysis(&defs, samples, seed)?;
    let mut result = summary.to_json(&defs);
    result["jacobian_stable"] = json!(summary.jacobian.is_stable());
    result["num_variables"] = json!(summary.jacobian.num_variables);
    result["meta"] = meta(
        "independence",
        Some(seed),
        json!({"catalog": catalog, "samples": samples}),
    );
    write_text(&to_json_string(&result), out)?;
    Ok(Status::Pass)
}

fn synthetic_dataset(gen: &GenOpts, seed: u64) -> Result<LabeledDataset> {
    let sources: Vec<Raster> = (0..gen.sources as u64)
        .map(|i| synthetic_source(i, gen.size))
        .collect::<scami::Result<_>>()?;
    let report = generate(
        &sources,
        parse_kind(&gen.kind)?,
        gen.per_source,
        seed,
        domain(gen.moment_domain),
    )?;
    Ok(report.dataset)
}

fn domain(moment: bool) -> Domain {
    if moment {
        Domain::Moment
    } else {
        Domain::Pixel
    }
}

/// Reads a dataset written by `gen-dataset`, bare or wrapped with metadata.
fn read_dataset(path: &Path) -> Result<LabeledDataset> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let value: Value = serde_json::from_str(&text).with_context(|| format!("{}", path.display()))?;
    let inner = value.get("dataset").unwrap_or(&value);
    Ok(LabeledDataset::from_json(inner)?)
}

fn gen_config(gen: &GenOpts) -> Value {
    json!({
        "kind": gen.kind,
        "per_source": gen.per_source,
        "moment_domain": gen.moment_domain,
        "sources": gen.sources,
        "size": gen.size,
    })
}

pub fn classify(
    dataset: Option<&Path>,
    gen: &GenOpts,
    train_frac: f64,
    repeats: usize,
    signed_log: bool,
    out: Option<&Path>,
) -> Result<Status> {
    if let Some(p) = dataset {
        check_input(p)?;
    }
    check_output(out)?;
    if repeats == 0 {
        bail!("--repeats must be at least 1");
    }
    let loaded = dataset.map(read_dataset).transpose()?;
    let mut runs = Vec::with_capacity(repeats);
    let mut per_class = std::collections::BTreeMap::<usize, (usize, usize)>::new();
    for r in 0..repeats as u64 {
        let seed = gen.seed + r;
        let ds = match &loaded {
            Some(d) => d.clone(),
            None => synthetic_dataset(gen, seed)?,
        };
        let (train, test) = ds.split(train_frac, seed)?;
        let report = nn_classify(&train, &test, signed_log)?;
        for &(label, correct, total) in &report.per_class {
            let e = per_class.entry(label).or_default();
            e.0 += correct;
            e.1 += total;
        }
        runs.push(
            json!({"seed": seed, "train": train.items.len(), "test": test.items.len(), "accuracy": report.accuracy}),
        );
    }
    let mean = runs
        .iter()
        .map(|r| r["accuracy"].as_f64().unwrap_or(f64::NAN))
        .sum::<f64>()
        / repeats as f64;
    let mut config = if dataset.is_some() { json!({}) } else { gen_config(gen) };
    config["dataset"] = path_str(dataset);
    config["train_frac"] = json!(train_frac);
    config["repeats"] = json!(repeats);
    config["signed_log"] = json!(signed_log);
    config["out"] = path_str(out);
    let result = json!({
        "meta": meta("classify", Some(gen.seed), config),
        "runs": runs,
        "mean_accuracy": mean,
    });
    print!("{}", to_json_string(&result));
    if let Some(p) = out {
        let mut csv = String::from("label,correct,total,accuracy\n");
        for (label, (c, t)) in per_class {
            csv.push_str(&format!(
                "{label},{c},{t},{}\n",
                scami::numfmt::fmt_f64(c as f64 / t as f64)
            ));
        }
        write_text(&csv, Some(p))?;
    }
    Ok(Status::Pass)
}

pub fn retrieve(
    dataset: Option<&Path>,
    gen: &GenOpts,
    query: usize,
    signed_log: bool,
    out: Option<&Path>,
) -> Result<Status> {
    if let Some(p) = dataset {
        check_input(p)?;
    }
    check_output(out)?;
    let ds = match dataset {
        Some(p) => read_dataset(p)?,
        None => synthetic_dataset(gen, gen.seed)?,
    };
    if query >= ds.items.len() {
        bail!("query index {query} out of range ({} items)", ds.items.len());
    }
    let q = &ds.items[query];
    let rest: Vec<_> = ds
        .items
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != query)
        .map(|(_, it)| it)
        .collect();
    if rest.is_empty() {
        bail!("database is empty once the query is removed");
    }
    let rows: Vec<&[f64]> = rest.iter().map(|it| it.descriptor.values.as_slice()).collect();
    let std = Standardizer::fit(&rows, signed_log)?;
    let db: Vec<(Vec<f64>, usize)> = rest
        .iter()
        .map(|it| (std.apply(&it.descriptor.values), it.label))
        .collect();
    let curve = precision_recall(&std.apply(&q.descriptor.values), &db, q.label)?;
    if curve.no_relevant {
        log::warn!("no item in the database shares the query label {}", q.label);
    }
    let mut config = if dataset.is_some() { json!({}) } else { gen_config(gen) };
    config["dataset"] = path_str(dataset);
    config["query"] = json!(query);
    config["signed_log"] = json!(signed_log);
    config["out"] = path_str(out);
    let result = json!({
        "meta": meta("retrieve", Some(gen.seed), config),
        "query_label": q.label,
        "no_relevant": curve.no_relevant,
        "points": curve.points.iter().map(|&(r, p)| json!({"recall": r, "precision": p})).collect::<Vec<_>>(),
    });
    print!("{}", to_json_string(&result));
    if let Some(p) = out {
        write_text(&curve.to_csv(), Some(p))?;
    }
    Ok(Status::Pass)
}

pub fn gen_dataset(images: &[PathBuf], gen: &GenOpts, mask_black: bool, out: Option<&Path>) -> Result<Status> {
    for p in images {
        check_input(p)?;
    }
    check_output(out)?;
    let sources: Vec<Raster> = if images.is_empty() {
        (0..gen.sources as u64)
            .map(|i| synthetic_source(i, gen.size))
            .collect::<scami::Result<_>>()?
    } else {
        images.iter().map(|p| load(p, mask_black)).collect::<Result<_>>()?
    };
    let report = generate(
        &sources,
        parse_kind(&gen.kind)?,
        gen.per_source,
        gen.seed,
        domain(gen.moment_domain),
    )?;
    let mut config = gen_config(gen);
    config["images"] = json!(images.iter().map(|p| p.display().to_string()).collect::<Vec<_>>());
    config["mask_black"] = json!(mask_black);
    let result = json!({
        "meta": meta("gen-dataset", Some(gen.seed), config),
        "flagged": report.flagged,
        "dataset": report.dataset.to_json(),
    });
    write_text(&to_json_string(&result), out)?;
    Ok(Status::Pass)
}
