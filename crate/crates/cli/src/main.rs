use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use num_rational::Ratio;
use serde::Serialize;
use serde_json::{json, Value};

use parakahler::builder::{
    assemble_immersion, cross_decompose_h, pde_decompose, verify_immersion, CrossConfig, PdeConfig,
    SeparableDecomposition, VerifyOptions,
};
use parakahler::classification::{
    classify_rational, counterexample_grid, counterexample_potential, veronese_decomposition, veronese_domain,
};
use parakahler::diastasis::{DiastasisField, HFunction};
use parakahler::domain::BoxDomain;
use parakahler::dsl::PotentialExpr;
use parakahler::separability::{build_index_set, sample_rank, IndexSetOptions};
use parakahler::spaceforms::SpaceFormModel;
use parakahler::PkError;

const EXIT_OK: u8 = 0;
const EXIT_USAGE: u8 = 1;
const EXIT_VERIFY_FAILED: u8 = 2;
const EXIT_NOT_FINITE: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "pk", version, about = "Para-Kähler immersions into space forms")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Decide whether S_c^n immerses into some S_b^N.
    Classify(CurvatureArgs),
    /// Build an immersion and verify it.
    Construct(ConstructArgs),
    /// Build an immersion from (c, b, n) and check it against a source.
    Verify(ConstructArgs),
    /// Sampled separable rank of H_c for a potential.
    Rank(RankArgs),
    /// Nested-domain ranks of the bump counterexample.
    Counterexample(CounterArgs),
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Relative tolerance.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// "lo,hi" per variable; a single value is reused for every variable.
    #[arg(long, allow_hyphen_values = true)]
    domain: Vec<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Args, Debug, Clone)]
struct CurvatureArgs {
    /// Source curvature (decimal or p/q).
    #[arg(long, allow_hyphen_values = true)]
    c: Option<String>,
    /// Target curvature (decimal or p/q).
    #[arg(long, allow_hyphen_values = true)]
    b: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug, Clone)]
struct ConstructArgs {
    #[command(flatten)]
    curv: CurvatureArgs,
    #[arg(long, value_enum, default_value_t = Method::Cross)]
    method: Method,
    /// Source potential in the DSL.
    #[arg(long)]
    potential: Option<String>,
    /// Tolerance of the hereditary check.
    #[arg(long, default_value_t = 1e-9)]
    verify_tol: f64,
    #[arg(long, default_value_t = 100)]
    samples: usize,
}

#[derive(Args, Debug, Clone)]
struct RankArgs {
    #[arg(long)]
    potential: String,
    /// Curvature of the H transform.
    #[arg(long, allow_hyphen_values = true, default_value = "0")]
    c: String,
    #[arg(long)]
    n: Option<usize>,
    /// Sample points per block.
    #[arg(long, default_value_t = 16)]
    samples: usize,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug, Clone)]
struct CounterArgs {
    #[arg(long, default_value_t = 3)]
    imax: u32,
    #[arg(long, default_value_t = 120)]
    samples: usize,
    #[command(flatten)]
    common: Common,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum Format {
    Json,
    Csv,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum Method {
    Cross,
    Pde,
    Veronese,
}

/// Resolved configuration, embedded in every report.
#[derive(Debug, Clone, Serialize)]
struct RunConfig {
    command: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    potential: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    c: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    b: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    method: Option<Method>,
    #[serde(skip_serializing_if = "Option::is_none")]
    domain: Option<BoxDomain>,
    tol: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    verify_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    samples: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    imax: Option<u32>,
    seed: u64,
    format: Format,
}

impl RunConfig {
    fn new(command: &'static str, common: &Common, tol: f64) -> Self {
        Self {
            command,
            potential: None,
            c: None,
            b: None,
            n: None,
            method: None,
            domain: None,
            tol,
            verify_tol: None,
            samples: None,
            imax: None,
            seed: common.seed,
            format: common.format,
        }
    }
}

struct Outcome {
    code: u8,
    result: Value,
}

impl Outcome {
    fn new(code: u8, result: Value) -> Self {
        Self { code, result }
    }
}

fn parse_curvature(text: &str) -> Result<Ratio<i64>> {
    let t = text.trim();
    if let Ok(r) = t.parse::<Ratio<i64>>() {
        if *r.denom() == 0 {
            bail!("curvature {t:?} has zero denominator");
        }
        return Ok(r);
    }
    if let Some((int, frac)) = t.split_once('.') {
        let digits = frac.len() as u32;
        if digits <= 15 && frac.chars().all(|ch| ch.is_ascii_digit()) {
            let neg = int.starts_with('-');
            let whole: i64 = if int.is_empty() || int == "-" || int == "+" { 0 } else { int.parse()? };
            let scale = 10i64.pow(digits);
            let f: i64 = if frac.is_empty() { 0 } else { frac.parse()? };
            let num = whole.abs().checked_mul(scale).and_then(|w| w.checked_add(f)).ok_or_else(|| anyhow!("curvature {t:?} overflows"))?;
            return Ok(Ratio::new(if neg { -num } else { num }, scale));
        }
    }
    let x: f64 = t.parse().with_context(|| format!("curvature {t:?} is neither a decimal nor p/q"))?;
    Ratio::approximate_float(x).ok_or_else(|| anyhow!("curvature {t:?} cannot be represented"))
}

fn ratio_text(r: &Ratio<i64>) -> String {
    r.to_string()
}

fn ratio_f64(r: &Ratio<i64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

fn parse_domain(specs: &[String], n: usize) -> Result<Option<BoxDomain>> {
    if specs.is_empty() {
        return Ok(None);
    }
    let mut lo = Vec::new();
    let mut hi = Vec::new();
    for s in specs {
        let (a, b) = s.split_once(',').ok_or_else(|| anyhow!("domain {s:?} must be \"lo,hi\""))?;
        let a: f64 = a.trim().parse().with_context(|| format!("bad domain bound in {s:?}"))?;
        let b: f64 = b.trim().parse().with_context(|| format!("bad domain bound in {s:?}"))?;
        lo.push(a);
        hi.push(b);
    }
    if specs.len() == 1 && n > 1 {
        lo = vec![lo[0]; n];
        hi = vec![hi[0]; n];
    }
    if lo.len() != n {
        bail!("{} domain intervals given for {n} variables", lo.len());
    }
    Ok(Some(BoxDomain::new(lo, hi)?))
}

fn positive_tol(tol: Option<f64>, default: f64) -> Result<f64> {
    let t = tol.unwrap_or(default);
    if !(t > 0.0 && t.is_finite()) {
        bail!("tolerance must be positive, got {t}");
    }
    Ok(t)
}

/// Largest variable index mentioned in a potential.
fn infer_nvars(text: &str) -> usize {
    let bytes = text.as_bytes();
    let mut best = 0;
    for prefix in ["xi", "eta"] {
        let mut start = 0;
        while let Some(pos) = text[start..].find(prefix) {
            let mut i = start + pos + prefix.len();
            let d0 = i;
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            if i > d0 {
                best = best.max(text[d0..i].parse::<usize>().unwrap_or(0));
            }
            start = i.max(start + pos + 1);
        }
    }
    best.max(1)
}

fn required<T: Clone>(v: &Option<T>, flag: &str, command: &str) -> Result<T> {
    v.clone().ok_or_else(|| anyhow!("{command} needs --{flag}"))
}

fn run_classify(a: &CurvatureArgs) -> Result<(RunConfig, Outcome)> {
    let c = parse_curvature(&required(&a.c, "c", "classify")?)?;
    let b = parse_curvature(&required(&a.b, "b", "classify")?)?;
    let n = required(&a.n, "n", "classify")?;
    let mut cfg = RunConfig::new("classify", &a.common, positive_tol(a.common.tol, 1e-9)?);
    cfg.c = Some(ratio_text(&c));
    cfg.b = Some(ratio_text(&b));
    cfg.n = Some(n);
    let v = classify_rational((*c.numer(), *c.denom()), (*b.numer(), *b.denom()), n)?;
    Ok((cfg, Outcome::new(EXIT_OK, serde_json::to_value(v)?)))
}

fn not_finite(err: &PkError) -> bool {
    matches!(err, PkError::NotFiniteRank { .. } | PkError::RankNotCertified { .. })
}

fn decompose(
    method: Method,
    h: &HFunction,
    domain: &BoxDomain,
    tol: f64,
    seed: u64,
) -> std::result::Result<SeparableDecomposition, PkError> {
    match method {
        Method::Cross => cross_decompose_h(h, domain, &CrossConfig { tol, seed, ..CrossConfig::default() }),
        Method::Pde => {
            let opts = IndexSetOptions { seed, ..IndexSetOptions::new(domain.clone()) };
            let set = build_index_set(h, 10, &opts)?;
            if !set.stabilized {
                return Err(PkError::RankNotCertified { cap: set.scanned_degree, size: set.N() });
            }
            pde_decompose(h, &set, domain, &PdeConfig { seed, ..PdeConfig::default() })
        }
        Method::Veronese => unreachable!("handled by the caller"),
    }
}

fn run_construct(a: &ConstructArgs, verify_mode: bool) -> Result<(RunConfig, Outcome)> {
    let name = if verify_mode { "verify" } else { "construct" };
    let common = &a.curv.common;
    let tol = positive_tol(common.tol, 1e-9)?;
    if !(a.verify_tol > 0.0) {
        bail!("--verify-tol must be positive");
    }
    let mut cfg = RunConfig::new(name, common, tol);
    cfg.method = Some(a.method);
    cfg.verify_tol = Some(a.verify_tol);
    cfg.samples = Some(a.samples);
    cfg.potential = a.potential.clone();

    let b = parse_curvature(&a.curv.b.clone().unwrap_or_else(|| "0".into()))?;
    cfg.b = Some(ratio_text(&b));
    let bf = ratio_f64(&b);

    // construct with --potential builds from that potential; verify uses it as
    // the source the immersion is checked against
    let from_potential = a.potential.is_some() && !verify_mode;
    let mut result = serde_json::Map::new();

    let (n, c) = if from_potential {
        let text = a.potential.as_deref().unwrap_or_default();
        let n = a.curv.n.unwrap_or_else(|| infer_nvars(text));
        if a.method == Method::Veronese {
            bail!("--method veronese builds from (c, b, n), not from a potential");
        }
        (n, None)
    } else {
        let c = parse_curvature(&required(&a.curv.c, "c", name)?)?;
        let n = required(&a.curv.n, "n", name)?;
        cfg.c = Some(ratio_text(&c));
        let verdict = classify_rational((*c.numer(), *c.denom()), (*b.numer(), *b.denom()), n)?;
        let exists = verdict.exists;
        let reason = verdict.reason;
        result.insert("verdict".into(), serde_json::to_value(&verdict)?);
        if !exists {
            result.insert("reason".into(), serde_json::to_value(reason)?);
            cfg.n = Some(n);
            cfg.domain = parse_domain(&common.domain, n)?;
            return Ok((cfg, Outcome::new(EXIT_NOT_FINITE, Value::Object(result))));
        }
        (n, Some(c))
    };
    cfg.n = Some(n);
    let domain = match parse_domain(&common.domain, n)? {
        Some(d) => d,
        None if from_potential => BoxDomain::cube(n, 0.5),
        None => veronese_domain(n),
    };
    cfg.domain = Some(domain.clone());

    let model_source = |c: &Ratio<i64>| DiastasisField::from_model(ratio_f64(c), n, domain.clone());
    let build_source = match (&c, from_potential) {
        (_, true) => DiastasisField::new(PotentialExpr::parse(a.potential.as_deref().unwrap_or_default(), n)?, domain.clone())?,
        (Some(c), false) => model_source(c)?,
        (None, false) => unreachable!(),
    };

    let dec = if a.method == Method::Veronese {
        let c = c.as_ref().expect("model source");
        if *c.numer() == 0 {
            bail!("--method veronese needs nonzero curvatures");
        }
        let p = (b / c).to_integer();
        veronese_decomposition(n, p as u32, domain.clone())?
    } else {
        let h = HFunction::transform(build_source.clone(), bf);
        match decompose(a.method, &h, &domain, tol, common.seed) {
            Ok(d) => d,
            Err(e) if not_finite(&e) => {
                result.insert("reason".into(), json!("not_finite_rank_within_cap"));
                result.insert("error".into(), json!(e.to_string()));
                return Ok((cfg, Outcome::new(EXIT_NOT_FINITE, Value::Object(result))));
            }
            Err(e) => return Err(e.into()),
        }
    };
    result.insert("decomposition".into(), serde_json::to_value(dec.summary())?);
    if dec.N() == 0 {
        result.insert("immersion".into(), Value::Null);
        return Ok((cfg, Outcome::new(EXIT_OK, Value::Object(result))));
    }
    let target = SpaceFormModel::new(bf, dec.N())?;
    let imm = assemble_immersion(&dec, target)?;
    result.insert("immersion".into(), serde_json::to_value(imm.summary())?);

    let check_source = if verify_mode {
        match &a.potential {
            Some(text) => DiastasisField::new(PotentialExpr::parse(text, n)?, domain.clone())?,
            None => build_source,
        }
    } else {
        build_source
    };
    let report = verify_immersion(
        &imm,
        &check_source,
        &VerifyOptions { samples: a.samples, seed: common.seed, hereditary_tol: a.verify_tol, ..VerifyOptions::default() },
    )?;
    let code = if report.passed { EXIT_OK } else { EXIT_VERIFY_FAILED };
    result.insert("verification".into(), serde_json::to_value(&report)?);
    Ok((cfg, Outcome::new(code, Value::Object(result))))
}

fn run_rank(a: &RankArgs) -> Result<(RunConfig, Outcome)> {
    let tol = positive_tol(a.common.tol, 1e-8)?;
    let n = a.n.unwrap_or_else(|| infer_nvars(&a.potential));
    let c = parse_curvature(&a.c)?;
    if a.samples < 2 {
        bail!("--samples must be at least 2");
    }
    let domain = parse_domain(&a.common.domain, n)?.unwrap_or_else(|| BoxDomain::cube(n, 0.5));
    let mut cfg = RunConfig::new("rank", &a.common, tol);
    cfg.potential = Some(a.potential.clone());
    cfg.c = Some(ratio_text(&c));
    cfg.n = Some(n);
    cfg.samples = Some(a.samples);
    cfg.domain = Some(domain.clone());

    let field = DiastasisField::new(PotentialExpr::parse(&a.potential, n)?, domain.clone())?;
    let h = HFunction::transform(field, ratio_f64(&c));
    let xs = domain.probe_points(a.samples, a.common.seed);
    let ys = domain.probe_points(a.samples, a.common.seed.wrapping_add(1));
    let rank = sample_rank(|x: &[f64], y: &[f64]| h.eval(x, y), &xs, &ys, tol)?;
    let saturated = rank >= a.samples;
    let mut result = json!({ "rank": rank, "sample_size": a.samples, "saturated": saturated });
    let code = if saturated {
        result["reason"] = json!("not_finite_rank_within_cap");
        EXIT_NOT_FINITE
    } else {
        EXIT_OK
    };
    Ok((cfg, Outcome::new(code, result)))
}

fn run_counterexample(a: &CounterArgs) -> Result<(RunConfig, Outcome)> {
    let tol = positive_tol(a.common.tol, 1e-8)?;
    let mut cfg = RunConfig::new("counterexample", &a.common, tol);
    cfg.imax = Some(a.imax);
    cfg.samples = Some(a.samples);
    let pot = counterexample_potential(a.imax);
    cfg.potential = Some(pot.to_string());
    let hi = a.imax as f64 + 0.9;
    let domain = BoxDomain::interval(-2.0, hi);
    cfg.domain = Some(domain.clone());
    let h = HFunction::transform(DiastasisField::new(pot, domain)?, 0.0);
    let eta = BoxDomain::interval(-1.0, 1.0).probe_points(16, 0);
    let rank_on = |lo: f64, hi: f64| -> Result<usize> {
        let xs = counterexample_grid(lo, hi, a.samples, a.imax, 0.1);
        Ok(sample_rank(|x: &[f64], y: &[f64]| h.eval(x, y), &xs, &eta, tol)?)
    };
    let mut nested = Vec::new();
    for i in 0..=a.imax {
        let hi = i as f64 + 0.9;
        nested.push(json!({ "i": i, "domain": [-2.0, hi], "rank": rank_on(-2.0, hi)? }));
    }
    let ranks: Vec<usize> = nested.iter().map(|v| v["rank"].as_u64().unwrap_or(0) as usize).collect();
    let unit_increments = ranks.windows(2).all(|w| w[1] == w[0] + 1);
    let restricted = rank_on(-2.0, -0.5)?;
    let restriction_drops = restricted < ranks[0];
    let result = json!({
        "nested": nested,
        "unit_increments": unit_increments,
        "restricted": { "domain": [-2.0, -0.5], "rank": restricted },
        "restriction_drops_rank": restriction_drops,
    });
    let code = if unit_increments && restriction_drops { EXIT_OK } else { EXIT_VERIFY_FAILED };
    Ok((cfg, Outcome::new(code, result)))
}

fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    let key = |k: &str| if prefix.is_empty() { k.to_string() } else { format!("{prefix}.{k}") };
    match v {
        Value::Object(m) => {
            for (k, v) in m {
                flatten(&key(k), v, out);
            }
        }
        Value::Array(a) => {
            for (i, v) in a.iter().enumerate() {
                flatten(&key(&i.to_string()), v, out);
            }
        }
        Value::String(s) => out.push((prefix.to_string(), s.clone())),
        Value::Null => out.push((prefix.to_string(), String::new())),
        other => out.push((prefix.to_string(), other.to_string())),
    }
}

fn render(report: &Value, format: Format) -> Result<Vec<u8>> {
    match format {
        Format::Json => {
            let mut s = serde_json::to_vec_pretty(report)?;
            s.push(b'\n');
            Ok(s)
        }
        Format::Csv => {
            let mut rows = Vec::new();
            flatten("", report, &mut rows);
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["key", "value"])?;
            for (k, v) in rows {
                w.write_record([k, v])?;
            }
            Ok(w.into_inner()?)
        }
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("cannot create a file in {}", dir.display()))?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

fn run(cli: &Cli) -> Result<u8> {
    let (common, outcome) = match &cli.command {
        Command::Classify(a) => (&a.common, run_classify(a)?),
        Command::Construct(a) => (&a.curv.common, run_construct(a, false)?),
        Command::Verify(a) => (&a.curv.common, run_construct(a, true)?),
        Command::Rank(a) => (&a.common, run_rank(a)?),
        Command::Counterexample(a) => (&a.common, run_counterexample(a)?),
    };
    let (cfg, out) = outcome;
    let report = json!({ "config": cfg, "result": out.result, "exit_code": out.code });
    let bytes = render(&report, common.format)?;
    match &common.out {
        Some(p) => write_atomic(p, &bytes)?,
        None => std::io::stdout().write_all(&bytes)?,
    }
    Ok(out.code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}
