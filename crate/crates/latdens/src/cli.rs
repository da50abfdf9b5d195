//! Command-line front end: lattice descriptor parsing, subcommand dispatch,
//! JSON/CSV emission, seed-derived randomized suites, and a persistent
//! result cache.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Parser, Subcommand, ValueEnum};
use num_traits::ToPrimitive;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::finiteq::{
    brute_count_isotropic_subspaces, brute_order_orthogonal, count_isotropic_subspaces,
    order_orthogonal, FiniteQuadSpace,
};
use crate::geometry::{
    check_local_modularity, horizontal_degree, hor_set, intersection_number, is_coisotropic,
    quasi_canonical_degree, type_two_overlattice_count, VertexLatticeCtx,
};
use crate::oracle::{count_naive, density_oracle};
use crate::overlattice::enumerate_integral_overlattices;
use crate::padic::{PrimeCtx, QuadLattice};
use crate::qmat::{q_int, q_pow, Q};
use crate::siegel::{
    check_functional_equation, check_functional_equation_flat, den_flat_at_1, den_flat_poly,
    den_poly, fe_sign, induction_check, pden, random_lattice, whittaker_derivative,
    whittaker_value,
};

#[derive(Parser)]
#[command(
    name = "latdens",
    version,
    about = "Exact local representation densities, normalized local Siegel series, central \
             derivatives, and lattice-combinatorial intersection quantities for quadratic \
             lattices over Z_p (p odd)"
)]
struct Cli {
    /// Odd prime p
    #[arg(long, global = true)]
    p: Option<u64>,
    /// Character sign ε of the ambient self-dual space (+1 or −1)
    #[arg(long, global = true, allow_hyphen_values = true)]
    epsilon: Option<i32>,
    /// Output format
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Seed for all randomized suites (fully determines them)
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads for randomized suites (output is identical for any value)
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Persistent JSON cache of den/pden results (env SIEGEL_CACHE overrides)
    #[arg(long, global = true)]
    cache_path: Option<PathBuf>,
    /// Step limit for the brute-force oracle
    #[arg(long, global = true, default_value_t = 100_000_000)]
    budget: u64,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum, PartialEq)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Cmd {
    /// Fundamental invariants and classification data of a lattice
    Invariants {
        #[arg(long)]
        gram: String,
    },
    /// All integral overlattices L ⊆ L′ ⊆ L′^∨
    Overlattices {
        #[arg(long)]
        gram: String,
    },
    /// Normalized local Siegel series Den^ε(X, L) and its primitive part
    Den {
        #[arg(long)]
        gram: String,
    },
    /// Central derivative ∂Den^ε(L)
    Pden {
        #[arg(long)]
        gram: String,
    },
    /// Functional-equation suite over seed-derived random lattices
    FeCheck {
        #[arg(long)]
        random: usize,
        #[arg(long, default_value_t = 4)]
        max_rank: usize,
        #[arg(long, default_value_t = 3)]
        max_val: i64,
    },
    /// Rank-induction identity suite over seed-derived random pairs
    InductionCheck {
        #[arg(long)]
        random: usize,
        #[arg(long, default_value_t = 3)]
        max_rank: usize,
        #[arg(long, default_value_t = 2)]
        max_val: i64,
    },
    /// Brute-force representation-density oracle
    Oracle {
        #[arg(long)]
        m_gram: String,
        #[arg(long)]
        l_gram: String,
        /// Fixed precision level instead of automatic stabilization
        #[arg(long, short = 'N')]
        n: Option<u32>,
    },
    /// Horizontal overlattices and the horizontal degree
    Horizontal {
        #[arg(long)]
        gram: String,
    },
    /// Arithmetic intersection number with realizability flag
    Int {
        #[arg(long)]
        gram: String,
    },
    /// Vertex-lattice data: discriminant form and type-2 neighbor count
    Vertex {
        #[arg(long)]
        gram: String,
    },
    /// Indicator-combination local modularity check for a vertex lattice
    ModularityCheck {
        #[arg(long)]
        gram: String,
    },
    /// Weighted coset-counting identities on random lattices of given type/val
    CountingCheck {
        #[arg(long)]
        t: usize,
        #[arg(long)]
        val: i64,
        #[arg(long)]
        trials: usize,
    },
    /// Whittaker-normalized value and central derivative
    Whittaker {
        #[arg(long)]
        gram: String,
        #[arg(long, default_value_t = 0)]
        k: u32,
    },
    /// Rerun the frozen worked examples and report a pass count
    Selftest {
        #[arg(value_enum, default_value_t = Suite::All)]
        suite: Suite,
    },
}

#[derive(Clone, Copy, ValueEnum, PartialEq)]
enum Suite {
    All,
    FiniteQuad,
    Siegel,
    Geometry,
    Counting,
}

pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    0
                }
                _ => {
                    eprint!("{e}");
                    2
                }
            };
        }
    };
    if let Some(jobs) = cli.jobs {
        // ignore failure: the global pool may already exist in-process
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global();
    }
    match dispatch(&cli) {
        Ok(report) => {
            if let Err(e) = emit(&report, cli.format) {
                eprintln!("error: {e}");
                return 2;
            }
            0
        }
        Err(Error::IdentityViolated { witness }) => {
            println!("{}", json!({ "error": "identity violated", "witness": witness }));
            1
        }
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn dispatch(cli: &Cli) -> Result<Value> {
    match &cli.cmd {
        Cmd::Invariants { gram } => cmd_invariants(cli, gram),
        Cmd::Overlattices { gram } => cmd_overlattices(cli, gram),
        Cmd::Den { gram } => cmd_den(cli, gram),
        Cmd::Pden { gram } => cmd_pden(cli, gram),
        Cmd::FeCheck {
            random,
            max_rank,
            max_val,
        } => cmd_fe_check(cli, *random, *max_rank, *max_val),
        Cmd::InductionCheck {
            random,
            max_rank,
            max_val,
        } => cmd_induction_check(cli, *random, *max_rank, *max_val),
        Cmd::Oracle { m_gram, l_gram, n } => cmd_oracle(cli, m_gram, l_gram, *n),
        Cmd::Horizontal { gram } => cmd_horizontal(cli, gram),
        Cmd::Int { gram } => cmd_int(cli, gram),
        Cmd::Vertex { gram } => cmd_vertex(cli, gram),
        Cmd::ModularityCheck { gram } => cmd_modularity(cli, gram),
        Cmd::CountingCheck { t, val, trials } => cmd_counting_check(cli, *t, *val, *trials),
        Cmd::Whittaker { gram, k } => cmd_whittaker(cli, gram, *k),
        Cmd::Selftest { suite } => cmd_selftest(*suite),
    }
}

fn require_p(cli: &Cli) -> Result<PrimeCtx> {
    match cli.p {
        Some(p) => PrimeCtx::new(p),
        None => Err(Error::Invalid("missing required flag --p".into())),
    }
}

fn require_eps(cli: &Cli) -> Result<i32> {
    match cli.epsilon {
        Some(e) if e == 1 || e == -1 => Ok(e),
        Some(e) => Err(Error::Invalid(format!(
            "--epsilon must be 1 or -1, got {e}"
        ))),
        None => Err(Error::Invalid("missing required flag --epsilon".into())),
    }
}

fn eps_list(cli: &Cli) -> Result<Vec<i32>> {
    match cli.epsilon {
        None => Ok(vec![1, -1]),
        Some(_) => Ok(vec![require_eps(cli)?]),
    }
}

// ---------------------------------------------------------------------------
// lattice descriptor parsing

/// Parse a lattice descriptor: either `diag(a,b,...)` with rational entries,
/// or a JSON Gram matrix (`[["1","0"],["0","3"]]`, numbers allowed), or a
/// JSON object `{"p": 3, "gram": [[...]]}`.
pub fn parse_lattice(ctx: PrimeCtx, descriptor: &str) -> Result<QuadLattice> {
    let s = descriptor.trim();
    if let Some(rest) = s.strip_prefix("diag(") {
        let inner = rest.strip_suffix(')').ok_or(Error::Parse {
            offset: s.len(),
            message: "expected closing ')' in diag(...)".into(),
        })?;
        let base = descriptor.find("diag(").unwrap() + 5;
        let mut entries = Vec::new();
        let mut pos = 0usize;
        for piece in inner.split(',') {
            let trimmed = piece.trim();
            let offset = base + pos + (piece.len() - piece.trim_start().len());
            let q = Q::from_str(trimmed).map_err(|e| Error::Parse {
                offset,
                message: format!("bad rational entry {trimmed:?}: {e}"),
            })?;
            entries.push(q);
            pos += piece.len() + 1;
        }
        return QuadLattice::from_diag_entries(ctx, &entries);
    }
    if s.starts_with('[') || s.starts_with('{') {
        let v: Value = serde_json::from_str(s).map_err(|e| Error::Parse {
            offset: e.column().saturating_sub(1),
            message: e.to_string(),
        })?;
        let rows = if v.is_array() {
            v.clone()
        } else {
            if let Some(pj) = v.get("p").and_then(Value::as_u64) {
                if pj != ctx.p {
                    return Err(Error::CtxMismatch(pj, ctx.p));
                }
            }
            v.get("gram")
                .cloned()
                .ok_or_else(|| Error::Parse {
                    offset: 0,
                    message: "JSON object must contain a \"gram\" field".into(),
                })?
        };
        let rows = rows.as_array().ok_or_else(|| Error::Parse {
            offset: 0,
            message: "gram must be an array of rows".into(),
        })?;
        let mut gram = Vec::new();
        for row in rows {
            let row = row.as_array().ok_or_else(|| Error::Parse {
                offset: 0,
                message: "gram rows must be arrays".into(),
            })?;
            let mut out = Vec::new();
            for cell in row {
                let q = match cell {
                    Value::Number(n) if n.is_i64() => q_int(n.as_i64().unwrap()),
                    Value::String(t) => Q::from_str(t.trim()).map_err(|e| Error::Parse {
                        offset: 0,
                        message: format!("bad rational entry {t:?}: {e}"),
                    })?,
                    other => {
                        return Err(Error::Parse {
                            offset: 0,
                            message: format!("bad gram entry {other}"),
                        })
                    }
                };
                out.push(q);
            }
            gram.push(out);
        }
        return QuadLattice::new(ctx, gram);
    }
    Err(Error::Parse {
        offset: 0,
        message: "expected diag(...) shorthand or a JSON Gram matrix".into(),
    })
}

fn q_json(x: &Q) -> Value {
    if x.is_integer() {
        if let Some(n) = x.to_integer().to_i64() {
            return Value::from(n);
        }
    }
    Value::String(x.to_string())
}

fn gram_json(l: &QuadLattice) -> Value {
    Value::Array(
        l.gram
            .iter()
            .map(|row| Value::Array(row.iter().map(|c| Value::String(c.to_string())).collect()))
            .collect(),
    )
}

/// Emit a report on stdout: compact JSON, or a two-line RFC-4180 CSV with
/// the same top-level fields (non-scalar values are JSON-encoded in cells).
fn emit(report: &Value, format: Format) -> Result<()> {
    match format {
        Format::Json => {
            println!("{report}");
            Ok(())
        }
        Format::Csv => {
            let obj = report.as_object().ok_or_else(|| {
                Error::Invalid("CSV output requires an object-shaped report".into())
            })?;
            let mut w = csv::Writer::from_writer(vec![]);
            let headers: Vec<&str> = obj.keys().map(String::as_str).collect();
            let cells: Vec<String> = obj
                .values()
                .map(|v| match v {
                    Value::String(s) => s.clone(),
                    Value::Null => String::new(),
                    other => other.to_string(),
                })
                .collect();
            w.write_record(&headers)
                .and_then(|_| w.write_record(&cells))
                .map_err(|e| Error::Invalid(format!("csv: {e}")))?;
            let bytes = w
                .into_inner()
                .map_err(|e| Error::Invalid(format!("csv: {e}")))?;
            print!("{}", String::from_utf8_lossy(&bytes));
            Ok(())
        }
    }
}

// ---------------------------------------------------------------------------
// persistent result cache

fn cache_file(cli: &Cli) -> Option<PathBuf> {
    std::env::var_os("SIEGEL_CACHE")
        .map(PathBuf::from)
        .or_else(|| cli.cache_path.clone())
}

fn cache_load(path: &Option<PathBuf>) -> BTreeMap<String, Value> {
    path.as_ref()
        .and_then(|p| std::fs::read_to_string(p).ok())
        .and_then(|s| serde_json::from_str(&s).ok())
        .unwrap_or_default()
}

fn cache_store(path: &Option<PathBuf>, map: &BTreeMap<String, Value>) {
    if let Some(p) = path {
        if let Ok(body) = serde_json::to_string(map) {
            if let Err(e) = std::fs::write(p, body) {
                eprintln!("warning: could not write cache {}: {e}", p.display());
            }
        }
    }
}

fn with_cache<F>(cli: &Cli, key: String, compute: F) -> Result<Value>
where
    F: FnOnce() -> Result<Value>,
{
    let path = cache_file(cli);
    let mut map = cache_load(&path);
    if let Some(hit) = map.get(&key) {
        return Ok(hit.clone());
    }
    let value = compute()?;
    if path.is_some() {
        map.insert(key, value.clone());
        cache_store(&path, &map);
    }
    Ok(value)
}

// ---------------------------------------------------------------------------
// subcommands

fn cmd_invariants(cli: &Cli, gram: &str) -> Result<Value> {
    let ctx = require_p(cli)?;
    let l = parse_lattice(ctx, gram)?;
    let inv = l.invariants();
    Ok(json!({
        "p": ctx.p,
        "gram": gram_json(&l),
        "rank": inv.rank,
        "fundamental_invariants": l.fundamental_invariants()?,
        "val": inv.val,
        "type": inv.typ,
        "det_class": inv.det_class,
        "disc_class": inv.disc_class,
        "chi": inv.chi,
        "hasse": inv.hasse,
    }))
}

fn cmd_overlattices(cli: &Cli, gram: &str) -> Result<Value> {
    let ctx = require_p(cli)?;
    let l = parse_lattice(ctx, gram)?;
    let entries: Vec<Value> = enumerate_integral_overlattices(&l, false)?
        .iter()
        .map(|e| {
            json!({
                "index_exponent": e.ell,
                "type": e.t,
                "val": e.val,
                "basis": gram_json(&QuadLattice { ctx, gram: e.basis.clone() }),
            })
        })
        .collect();
    Ok(json!({
        "p": ctx.p,
        "gram": gram_json(&l),
        "count": entries.len(),
        "overlattices": entries,
    }))
}

fn cmd_den(cli: &Cli, gram: &str) -> Result<Value> {
    let ctx = require_p(cli)?;
    let eps = require_eps(cli)?;
    let l = parse_lattice(ctx, gram)?;
    let key = format!("den:{}:{}:{}", ctx.p, eps, l.isometry_key());
    with_cache(cli, key, || {
        let poly = den_poly(&l, eps)?;
        let flat = den_flat_poly(&l, eps)?;
        Ok(json!({
            "p": ctx.p,
            "epsilon": eps,
            "gram": gram_json(&l),
            "coefficients": poly.to_strings(),
            "flat_coefficients": flat.to_strings(),
            "flat_value_at_1": q_json(&den_flat_at_1(&l, eps)?),
            "fe_sign": fe_sign(&l, eps)?,
        }))
    })
}

fn cmd_pden(cli: &Cli, gram: &str) -> Result<Value> {
    let ctx = require_p(cli)?;
    let eps = require_eps(cli)?;
    let l = parse_lattice(ctx, gram)?;
    let key = format!("pden:{}:{}:{}", ctx.p, eps, l.isometry_key());
    with_cache(cli, key, || {
        Ok(json!({
            "pden": q_json(&pden(&l, eps)?),
            "fe_sign": fe_sign(&l, eps)?,
        }))
    })
}

/// Counter-based per-job generator: stream i of the seeded ChaCha8 state.
fn job_rng(seed: u64, i: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(i);
    rng
}

fn first_error(results: Vec<Result<()>>) -> Result<usize> {
    let n = results.len();
    for r in results {
        r?;
    }
    Ok(n)
}

fn cmd_fe_check(cli: &Cli, random: usize, max_rank: usize, max_val: i64) -> Result<Value> {
    let ctx = require_p(cli)?;
    let eps_set = eps_list(cli)?;
    let results: Vec<Result<()>> = (0..random)
        .into_par_iter()
        .map(|i| {
            let mut rng = job_rng(cli.seed, i as u64);
            let rank = 1 + (i % max_rank);
            let l = random_lattice(ctx, &mut rng, rank, max_val);
            for &eps in &eps_set {
                check_functional_equation(&l, eps)?;
                check_functional_equation_flat(&l, eps)?;
            }
            Ok(())
        })
        .collect();
    let passed = first_error(results)?;
    Ok(json!({ "passed": passed }))
}

fn cmd_induction_check(cli: &Cli, random: usize, max_rank: usize, max_val: i64) -> Result<Value> {
    let ctx = require_p(cli)?;
    let eps_set = eps_list(cli)?;
    let results: Vec<Result<()>> = (0..random)
        .into_par_iter()
        .map(|i| {
            use rand::Rng;
            let mut rng = job_rng(cli.seed, i as u64);
            let rank = 1 + (i % max_rank);
            let l_flat = random_lattice(ctx, &mut rng, rank, max_val);
            let a_max = l_flat
                .fundamental_invariants()?
                .into_iter()
                .max()
                .unwrap_or(0);
            let unit = if rng.gen_bool(0.5) { 1 } else { ctx.r as i64 };
            let c = q_int(unit) * q_pow(ctx.p, a_max + 2 + rng.gen_range(0..=1));
            for &eps in &eps_set {
                induction_check(&l_flat, &c, eps)?;
            }
            Ok(())
        })
        .collect();
    let passed = first_error(results)?;
    Ok(json!({ "passed": passed }))
}

fn cmd_oracle(cli: &Cli, m_gram: &str, l_gram: &str, n: Option<u32>) -> Result<Value> {
    let ctx = require_p(cli)?;
    let m_lat = parse_lattice(ctx, m_gram)?;
    let l_lat = parse_lattice(ctx, l_gram)?;
    match n {
        Some(k) => {
            let count = count_naive(&m_lat, &l_lat, k, cli.budget)?;
            Ok(json!({
                "p": ctx.p,
                "precision": k,
                "count": count.to_string(),
            }))
        }
        None => {
            let r = density_oracle(&m_lat, &l_lat, cli.budget)?;
            Ok(json!({
                "p": ctx.p,
                "density": q_json(&r.density),
                "n_used": r.n_used,
                "stabilized": r.stabilized,
            }))
        }
    }
}

fn cmd_horizontal(cli: &Cli, gram: &str) -> Result<Value> {
    let ctx = require_p(cli)?;
    let eps = require_eps(cli)?;
    let l = parse_lattice(ctx, gram)?;
    let entries: Vec<Value> = hor_set(&l, eps)?
        .iter()
        .map(|e| {
            json!({
                "index_exponent": e.ell,
                "type": e.t,
                "val": e.val,
            })
        })
        .collect();
    Ok(json!({
        "p": ctx.p,
        "epsilon": eps,
        "gram": gram_json(&l),
        "coisotropic": is_coisotropic(&l, eps),
        "horizontal_count": entries.len(),
        "horizontal": entries,
        "horizontal_degree": q_json(&horizontal_degree(&l, eps)?),
        "flat_value_at_1": q_json(&den_flat_at_1(&l, eps)?),
    }))
}

fn cmd_int(cli: &Cli, gram: &str) -> Result<Value> {
    let ctx = require_p(cli)?;
    let eps = require_eps(cli)?;
    let l = parse_lattice(ctx, gram)?;
    let r = intersection_number(&l, eps)?;
    Ok(json!({
        "p": ctx.p,
        "epsilon": eps,
        "gram": gram_json(&l),
        "value": q_json(&r.value),
        "realizable": r.realizable,
    }))
}

fn cmd_vertex(cli: &Cli, gram: &str) -> Result<Value> {
    let ctx = require_p(cli)?;
    let l = parse_lattice(ctx, gram)?;
    let v = VertexLatticeCtx::new(&l)?;
    Ok(json!({
        "p": ctx.p,
        "gram": gram_json(&l),
        "type": 2 * v.d + 2,
        "discriminant_dim": v.w_diag.len(),
        "discriminant_sgn": v.w_space.sgn(),
        "type_two_overlattices": type_two_overlattice_count(&v),
    }))
}

fn cmd_modularity(cli: &Cli, gram: &str) -> Result<Value> {
    let ctx = require_p(cli)?;
    let l = parse_lattice(ctx, gram)?;
    let v = VertexLatticeCtx::new(&l)?;
    check_local_modularity(&v)?;
    Ok(json!({
        "p": ctx.p,
        "gram": gram_json(&l),
        "passed": true,
    }))
}

fn cmd_counting_check(cli: &Cli, t: usize, val: i64, trials: usize) -> Result<Value> {
    use crate::counting::{check_counting_even, check_counting_odd};
    let ctx = require_p(cli)?;
    if t < 2 || val < t as i64 {
        return Err(Error::Invalid(
            "counting-check requires --t ≥ 2 and --val ≥ t".into(),
        ));
    }
    let profiles = scale_profiles(t, val);
    let results: Vec<Result<()>> = (0..trials)
        .into_par_iter()
        .map(|i| {
            use rand::Rng;
            let mut rng = job_rng(cli.seed, i as u64);
            let scales = &profiles[rng.gen_range(0..profiles.len())];
            let profile: Vec<(i64, i32)> = scales
                .iter()
                .map(|&a| (a, if rng.gen_bool(0.5) { 1 } else { -1 }))
                .collect();
            let l = QuadLattice::from_profile(ctx, &profile)?;
            let chi = l.chi();
            if t % 2 == 1 {
                let ss: &[i32] = if chi == 0 { &[1, -1] } else { &[1] };
                for &s in ss {
                    check_counting_odd(&l, s)?;
                }
            } else {
                let ss: &[i32] = if chi == 0 { &[1, -1] } else { &[chi] };
                for &s in ss {
                    check_counting_even(&l, s)?;
                }
            }
            Ok(())
        })
        .collect();
    let passed = first_error(results)?;
    Ok(json!({ "passed": passed, "t": t, "val": val }))
}

/// All sorted scale vectors (a_1 ≤ … ≤ a_t), a_i ≥ 1, summing to val.
fn scale_profiles(t: usize, val: i64) -> Vec<Vec<i64>> {
    fn rec(t: usize, val: i64, min: i64, acc: &mut Vec<i64>, out: &mut Vec<Vec<i64>>) {
        if t == 0 {
            if val == 0 {
                out.push(acc.clone());
            }
            return;
        }
        let mut a = min;
        while a * t as i64 <= val {
            acc.push(a);
            rec(t - 1, val - a, a, acc, out);
            acc.pop();
            a += 1;
        }
    }
    let mut out = Vec::new();
    rec(t, val, 1, &mut Vec::new(), &mut out);
    out
}

fn cmd_whittaker(cli: &Cli, gram: &str, k: u32) -> Result<Value> {
    let ctx = require_p(cli)?;
    let eps = require_eps(cli)?;
    let l = parse_lattice(ctx, gram)?;
    let sign = fe_sign(&l, eps)?;
    let derivative = if sign == -1 {
        q_json(&whittaker_derivative(&l, eps)?)
    } else {
        Value::Null
    };
    Ok(json!({
        "p": ctx.p,
        "epsilon": eps,
        "gram": gram_json(&l),
        "k": k,
        "value": q_json(&whittaker_value(&l, eps, k)?),
        "fe_sign": sign,
        "derivative": derivative,
    }))
}

// ---------------------------------------------------------------------------
// selftest

fn cmd_selftest(suite: Suite) -> Result<Value> {
    let mut passed = 0usize;
    if matches!(suite, Suite::All | Suite::FiniteQuad) {
        passed += selftest_finite_quad()?;
    }
    if matches!(suite, Suite::All | Suite::Siegel) {
        passed += selftest_siegel()?;
    }
    if matches!(suite, Suite::All | Suite::Geometry) {
        passed += selftest_geometry()?;
    }
    if matches!(suite, Suite::All | Suite::Counting) {
        passed += selftest_counting()?;
    }
    Ok(json!({ "passed": passed }))
}

fn fail(witness: String) -> Error {
    Error::IdentityViolated { witness }
}

fn selftest_finite_quad() -> Result<usize> {
    let mut passed = 0usize;
    for m in 1..=4usize {
        for chi0 in [1i32, -1] {
            let v = match FiniteQuadSpace::nondegenerate(3, m, chi0) {
                Ok(v) => v,
                Err(_) => continue,
            };
            let o = order_orthogonal(&v)?;
            let ob = brute_order_orthogonal(&v)?;
            if o != ob {
                return Err(fail(format!(
                    "orthogonal group order {o} ≠ brute {ob} at m={m} chi0={chi0}"
                )));
            }
            passed += 1;
            for b in 1..=(m / 2).min(2) {
                let c = count_isotropic_subspaces(&v, b)?;
                let cb = brute_count_isotropic_subspaces(&v, b)?;
                if c != cb {
                    return Err(fail(format!(
                        "isotropic {b}-subspace count {c} ≠ brute {cb} at m={m} chi0={chi0}"
                    )));
                }
                passed += 1;
            }
        }
    }
    Ok(passed)
}

fn selftest_siegel() -> Result<usize> {
    let mut passed = 0usize;
    for p in [3u64, 5, 7] {
        let ctx = PrimeCtx::new(p)?;
        let q = q_int(p as i64);
        let l = QuadLattice::from_profile(ctx, &[(1, 1), (1, 1), (1, 1)])?;
        for eps in [1i32, -1] {
            // Den^ε(X, diag(p,p,p)) = 1 + εqX + qX² + εX³
            let poly = den_poly(&l, eps)?;
            let e = q_int(eps as i64);
            let expect = [q_int(1), &e * &q, q.clone(), e.clone()];
            for (i, c) in expect.iter().enumerate() {
                if &poly.coeff(i) != c {
                    return Err(fail(format!(
                        "Den coefficient {i} mismatch at p={p}, eps={eps}"
                    )));
                }
            }
            passed += 1;
        }
        // ∂Den^−(diag(p,p,p)) = 3 − q
        let d = pden(&l, -1)?;
        if d != q_int(3) - &q {
            return Err(fail(format!("pden(diag(p,p,p)) ≠ 3−q at p={p}")));
        }
        passed += 1;
        if fe_sign(&l, -1)? != -1 {
            return Err(fail(format!("fe_sign(diag(p,p,p), −1) ≠ −1 at p={p}")));
        }
        passed += 1;
    }
    Ok(passed)
}

fn selftest_geometry() -> Result<usize> {
    let mut passed = 0usize;
    let ctx = PrimeCtx::new(3)?;
    let q = q_int(3);
    // quasi-canonical degrees: 1, q^s + q^{s−1}, 2, 2q^s
    if quasi_canonical_degree(ctx, 0, false)? != q_int(1)
        || quasi_canonical_degree(ctx, 2, false)? != q_pow(3, 2) + q_pow(3, 1)
        || quasi_canonical_degree(ctx, 0, true)? != q_int(2)
        || quasi_canonical_degree(ctx, 2, true)? != q_int(2) * q_pow(3, 2)
    {
        return Err(fail("quasi-canonical degree table mismatch".into()));
    }
    passed += 1;
    // diag(p², p): horizontal degree = 2·Den^♭(1) = 4q + 2
    let l = QuadLattice::from_profile(ctx, &[(2, 1), (1, 1)])?;
    let hd = horizontal_degree(&l, 1)?;
    if hd != q_int(4) * &q + q_int(2) || hd != q_int(2) * den_flat_at_1(&l, 1)? {
        return Err(fail("horizontal degree of diag(p²,p) mismatch".into()));
    }
    passed += 1;
    // type-2 neighbor count q² + 1 for a type-4 vertex lattice with χ(W) = −1
    for profile in [
        vec![(0i64, 1i32), (1, 1), (1, 1), (1, 1), (1, 1)],
        vec![(0, 1), (1, 1), (1, 1), (1, 1), (1, -1)],
        vec![(0, -1), (1, 1), (1, 1), (1, 1), (1, 1)],
    ] {
        let lam = QuadLattice::from_profile(ctx, &profile)?;
        let v = match VertexLatticeCtx::new(&lam) {
            Ok(v) => v,
            Err(_) => continue,
        };
        if v.w_space.sgn() == -1 && type_two_overlattice_count(&v) != 10 {
            return Err(fail("type-2 neighbor count ≠ q²+1".into()));
        }
        passed += 1;
    }
    Ok(passed)
}

fn selftest_counting() -> Result<usize> {
    use crate::counting::mu_profile;
    let mut passed = 0usize;
    for p in [3u64, 5] {
        let ctx = PrimeCtx::new(p)?;
        // vertex base case, odd t = 3: (1, 0, q² − 1)
        let l = QuadLattice::from_profile(ctx, &[(1, 1), (1, 1), (1, 1)])?;
        let mu = mu_profile(&l)?;
        if (mu.mu_plus, mu.mu_zero, mu.mu_minus) != (1, 0, p * p - 1) {
            return Err(fail(format!("odd vertex base case mismatch at p={p}")));
        }
        passed += 1;
        // vertex base case, even t = 2, s = χ(L)
        let l = QuadLattice::from_profile(ctx, &[(1, 1), (1, 1)])?;
        let s = l.chi() as i64;
        let mu = mu_profile(&l)?;
        let expect = ((p as i64) - s) * (1 + s);
        if (mu.mu_plus, mu.mu_zero) != (1, 0) || mu.mu_minus as i64 != expect {
            return Err(fail(format!("even vertex base case mismatch at p={p}")));
        }
        passed += 1;
        // near-vertex base case, even t = 2: (1, q−1, q^{t−1}−q) = (1, q−1, 0)
        let l = QuadLattice::from_profile(ctx, &[(1, 1), (2, 1)])?;
        let mu = mu_profile(&l)?;
        if (mu.mu_plus, mu.mu_zero, mu.mu_minus) != (1, p - 1, 0) {
            return Err(fail(format!("even near-vertex base case mismatch at p={p}")));
        }
        passed += 1;
    }
    Ok(passed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx3() -> PrimeCtx {
        PrimeCtx::new(3).unwrap()
    }

    #[test]
    fn parse_diag_shorthand() {
        let l = parse_lattice(ctx3(), "diag(1,3,27)").unwrap();
        assert_eq!(l.fundamental_invariants().unwrap(), vec![0, 1, 3]);
    }

    #[test]
    fn parse_json_gram_forms() {
        let l = parse_lattice(ctx3(), r#"[["1","0"],["0","3"]]"#).unwrap();
        assert_eq!(l.fundamental_invariants().unwrap(), vec![0, 1]);
        let l2 = parse_lattice(ctx3(), r#"{"p":3,"gram":[[1,0],[0,3]]}"#).unwrap();
        assert_eq!(l2.gram, l.gram);
        assert!(matches!(
            parse_lattice(ctx3(), r#"{"p":5,"gram":[[1]]}"#),
            Err(Error::CtxMismatch(5, 3))
        ));
    }

    #[test]
    fn parse_error_reports_offset() {
        match parse_lattice(ctx3(), "diag(1,x/2,9)") {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, 7),
            other => panic!("expected parse error, got {other:?}"),
        }
        assert!(matches!(
            parse_lattice(ctx3(), "diag(1,2"),
            Err(Error::Parse { .. })
        ));
        assert!(matches!(
            parse_lattice(ctx3(), "hello"),
            Err(Error::Parse { offset: 0, .. })
        ));
    }

    #[test]
    fn selftest_suites_pass() {
        assert!(selftest_finite_quad().unwrap() > 0);
        assert!(selftest_siegel().unwrap() > 0);
        assert!(selftest_geometry().unwrap() > 0);
        assert!(selftest_counting().unwrap() > 0);
    }

    #[test]
    fn round_trip_descriptor() {
        let l = parse_lattice(ctx3(), "diag(1,3,27)").unwrap();
        let emitted = gram_json(&l).to_string();
        let l2 = parse_lattice(ctx3(), &emitted).unwrap();
        assert_eq!(l.gram, l2.gram);
    }
}
