mod report;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;
use serde_json::{json, Value};

use modfisher::acceptance::{run_suite, DEFAULT_SEED};
use modfisher::brownian::{expand_state, two_point_display_holds, verify_gradient_expansion};
use modfisher::conjugate::{
    chi_star, cramer_rao_audit, self_adjoint_defect, solve_conjugate_at, BasisSpec,
};
use modfisher::core_cp::{factoriality_bound, verify_core_theorem, CoreLetter, CoreWord};
use modfisher::derivation::verify_xileftright;
use modfisher::model::{kms_deviation, load_model_json, DEFAULT_TOLERANCE};
use modfisher::moments::{brute_force_oracle, state_value, ORACLE_MAX_LEN};
use modfisher::{Error, Family, GenId, ModelSpec, NcPoly, TimeTag, Word};

use report::{model_digest, to_json, RunReport};

/// Coefficients below this magnitude are omitted from printed expansions.
const PRINT_CUTOFF: f64 = 1e-12;

#[derive(Parser)]
#[command(
    name = "modfisher",
    version,
    about = "Conjugate variables and free Fisher information under a modular flow"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Model config JSON; the built-in two-atom model when omitted.
    #[arg(long, global = true)]
    model: Option<PathBuf>,
    /// Tolerance for asserted residuals.
    #[arg(long, global = true, default_value_t = DEFAULT_TOLERANCE)]
    tol: f64,
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Comma-separated rational basis times.
    #[arg(
        long,
        global = true,
        allow_hyphen_values = true,
        default_value = "-1,-1/2,0,1/2,1"
    )]
    grid: String,
    /// Maximal basis word length.
    #[arg(long, global = true, default_value_t = 3)]
    degree: usize,
    /// Worker threads; all cores when omitted.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Include the wall time in the JSON report.
    #[arg(long, global = true)]
    wall_time: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Detailed balance and the KMS identity of each two-point function.
    CheckKms {
        #[arg(long, default_value_t = 101)]
        points: usize,
        /// The grid covers [-range, range].
        #[arg(long, default_value_t = 5.0)]
        range: f64,
    },
    /// φ of a word, cross-checked against partition enumeration.
    Moment {
        #[arg(long, allow_hyphen_values = true)]
        word: String,
    },
    /// Galerkin solve for the conjugate variable of one generator.
    Conjugate {
        #[arg(long)]
        gen: Option<String>,
        /// Solve for the generator at this time.
        #[arg(long, default_value = "0", allow_hyphen_values = true)]
        time: String,
    },
    /// Free Fisher information of a family of generators.
    Fisher {
        /// Comma-separated generator names; all generators when omitted.
        #[arg(long)]
        gens: Option<String>,
    },
    /// Cramér–Rao audit `Φ*·φ(ΣX²)²` against `n²`.
    CramerRao {
        #[arg(long)]
        gens: Option<String>,
    },
    /// Non-microstates free entropy by quadrature along the Brownian path.
    ChiStar {
        #[arg(long)]
        gens: Option<String>,
        #[arg(long, default_value = "0,0.25,0.5,0.75,1,1.5,2,3,4")]
        eps: String,
        /// Ignore quadrature points beyond this value.
        #[arg(long, default_value_t = f64::INFINITY)]
        tail_cutoff: f64,
    },
    /// `φ(PξQ) = φ̂(P·Y·∂Q) + φ̂(∂P·Y·Q)` with the solved ξ.
    VerifyLemma2 {
        #[arg(long)]
        gen: Option<String>,
        /// Word for P; `1` is the identity.
        #[arg(long, allow_hyphen_values = true)]
        p: String,
        #[arg(long, allow_hyphen_values = true)]
        q: String,
    },
    /// `E(ζ*Q) = ⟨1⊗1, δ_X(Q)⟩_η` in the core for a word with `U:t` tokens.
    VerifyCore {
        #[arg(long)]
        gen: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        q: String,
    },
    /// ε-expansion of a word along `X + √ε·Y`.
    Brownian {
        #[arg(long, allow_hyphen_values = true)]
        word: String,
        #[arg(long, default_value_t = 1)]
        order: u32,
        /// Time for the two-point display check.
        #[arg(long, default_value = "1", allow_hyphen_values = true)]
        time: String,
    },
    /// Lower bound `4α²(1−α)²/δ²`.
    Bound {
        #[arg(long, allow_hyphen_values = true)]
        alpha: f64,
        #[arg(long, allow_hyphen_values = true)]
        delta: f64,
    },
    /// The full acceptance battery.
    Suite,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::CheckKms { .. } => "check-kms",
            Command::Moment { .. } => "moment",
            Command::Conjugate { .. } => "conjugate",
            Command::Fisher { .. } => "fisher",
            Command::CramerRao { .. } => "cramer-rao",
            Command::ChiStar { .. } => "chi-star",
            Command::VerifyLemma2 { .. } => "verify-lemma2",
            Command::VerifyCore { .. } => "verify-core",
            Command::Brownian { .. } => "brownian",
            Command::Bound { .. } => "bound",
            Command::Suite => "suite",
        }
    }
}

#[derive(Default)]
struct Outcome {
    inputs: BTreeMap<String, Value>,
    outputs: BTreeMap<String, Value>,
    tolerances: BTreeMap<String, f64>,
    checks: BTreeMap<String, bool>,
    summary: Vec<String>,
}

impl Outcome {
    fn input(&mut self, k: &str, v: impl Into<Value>) {
        self.inputs.insert(k.into(), v.into());
    }

    fn output(&mut self, k: &str, v: impl Into<Value>) {
        self.outputs.insert(k.into(), v.into());
    }

    fn check_below(&mut self, k: &str, value: f64, tol: f64) {
        self.tolerances.insert(k.into(), tol);
        self.checks.insert(k.into(), value < tol);
        self.summary
            .push(format!("{k}: {value:.3e} (tol {tol:.1e})"));
    }
}

struct Ctx {
    model: ModelSpec,
    tol: f64,
    seed: u64,
    grid: Vec<TimeTag>,
    degree: usize,
}

impl Ctx {
    fn generator(&self, name: Option<&str>) -> modfisher::Result<GenId> {
        match name {
            None => Ok(GenId(0)),
            Some(n) => self
                .model
                .gen_id(n)
                .ok_or_else(|| Error::Config(format!("unknown generator `{n}`"))),
        }
    }

    fn generators(&self, names: Option<&str>) -> modfisher::Result<Vec<GenId>> {
        match names {
            None => Ok(self.model.gen_ids().collect()),
            Some(list) => list
                .split(',')
                .map(|n| self.generator(Some(n.trim())))
                .collect(),
        }
    }

    fn basis(&self, gens: Vec<GenId>) -> BasisSpec {
        BasisSpec::new(self.grid.clone(), self.degree, gens)
    }

    fn name(&self, g: GenId) -> &str {
        &self.model.gen(g).name
    }

    fn x_word(&self, text: &str) -> modfisher::Result<Word> {
        let text = text.trim();
        if text == "1" {
            return Ok(Word::empty());
        }
        let w = self.model.parse_word(text)?;
        if let Some(&l) = w.letters().iter().find(|l| l.family != Family::X) {
            return Err(Error::Family(l));
        }
        Ok(w)
    }

    fn core_word(&self, text: &str) -> modfisher::Result<CoreWord> {
        let mut letters = Vec::new();
        for tok in text.split_whitespace() {
            match tok.strip_prefix("U:") {
                Some(t) if self.model.gen_id("U").is_none() => {
                    letters.push(CoreLetter::U(t.parse()?))
                }
                _ => {
                    let l = self.model.parse_letter(tok)?;
                    if l.family != Family::X {
                        return Err(Error::Family(l));
                    }
                    letters.push(CoreLetter::X(l));
                }
            }
        }
        CoreWord::unit(letters)
    }

    fn poly_json(&self, p: &NcPoly) -> Value {
        Value::Array(
            p.terms()
                .filter(|(_, c)| c.norm() >= PRINT_CUTOFF)
                .map(|(w, c)| json!({ "word": self.model.format_word(w), "coefficient": complex(*c) }))
                .collect(),
        )
    }
}

fn complex(c: Complex64) -> Value {
    json!([c.re, c.im])
}

fn parse_grid(text: &str) -> modfisher::Result<Vec<TimeTag>> {
    text.split(',')
        .map(|t| t.trim().parse::<TimeTag>())
        .collect()
}

fn parse_floats(text: &str) -> modfisher::Result<Vec<f64>> {
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::Parse(format!("not a number: `{t}`")))
        })
        .collect()
}

fn load_model(path: Option<&PathBuf>) -> modfisher::Result<ModelSpec> {
    match path {
        None => Ok(ModelSpec::two_atom()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?;
            load_model_json(&text)
        }
    }
}

fn run(ctx: &Ctx, cmd: &Command) -> modfisher::Result<Outcome> {
    let mut o = Outcome::default();
    let m = &ctx.model;
    match cmd {
        Command::CheckKms { points, range } => {
            if *points < 2 || !(range.is_finite() && *range > 0.0) {
                return Err(Error::Grid(
                    "need at least 2 points and a positive finite range".into(),
                ));
            }
            o.input("points", *points);
            o.input("range", *range);
            let grid: Vec<f64> = (0..*points)
                .map(|k| -range + 2.0 * range * k as f64 / (*points - 1) as f64)
                .collect();
            let mut gens = Vec::new();
            for g in m.gen_ids() {
                let spec = m.gen(g);
                let balanced = spec.check_detailed_balance().is_ok();
                let dev = kms_deviation(spec, &grid);
                o.checks
                    .insert(format!("{}.detailed_balance", spec.name), balanced);
                o.check_below(&format!("{}.kms_deviation", spec.name), dev, ctx.tol);
                gens.push(json!({ "name": spec.name, "detailed_balance": balanced, "max_deviation": dev }));
            }
            o.output("generators", gens);
        }
        Command::Moment { word } => {
            let w = m.parse_word(word)?;
            o.input("word", m.format_word(&w));
            let sv = state_value(m, &w);
            o.output("value", complex(sv.value));
            o.output("partition_count", sv.partition_count);
            o.summary.push(format!(
                "phi = {} ({} partitions)",
                sv.value, sv.partition_count
            ));
            if w.len() <= ORACLE_MAX_LEN {
                let oracle = brute_force_oracle(m, &w)?;
                o.output("oracle", complex(oracle));
                o.check_below("oracle_difference", (oracle - sv.value).norm(), ctx.tol);
            }
        }
        Command::Conjugate { gen, time } => {
            let g = ctx.generator(gen.as_deref())?;
            let t: TimeTag = time.parse()?;
            o.input("gen", ctx.name(g));
            o.input("time", t.to_string());
            let sol = solve_conjugate_at(m, g, t, &ctx.basis(vec![g]))?;
            o.output("xi", ctx.poly_json(&sol.xi()));
            o.output("xi_norm_sq", sol.xi_norm_sq);
            o.output("phi_star", sol.phi_star);
            o.output("residual", sol.residual);
            o.output("basis_len", sol.basis.len());
            o.output("independent", sol.independent.len());
            o.output("gram_condition", sol.gram_condition);
            o.summary.push(format!("phi_star = {:.12}", sol.phi_star));
            o.check_below("residual", sol.residual, ctx.tol);
            o.check_below("self_adjoint_defect", self_adjoint_defect(m, &sol), ctx.tol);
        }
        Command::Fisher { gens } => {
            let gens = ctx.generators(gens.as_deref())?;
            o.input(
                "gens",
                gens.iter().map(|&g| ctx.name(g)).collect::<Vec<_>>(),
            );
            let basis = ctx.basis(gens.clone());
            let mut total = 0.0;
            let mut per = BTreeMap::new();
            for &g in &gens {
                let sol = solve_conjugate_at(m, g, TimeTag::ZERO, &basis)?;
                total += sol.phi_star;
                per.insert(ctx.name(g).to_string(), json!(sol.phi_star));
                o.check_below(&format!("{}.residual", ctx.name(g)), sol.residual, ctx.tol);
            }
            o.output("phi_star", total);
            o.output("per_generator", Value::Object(per.into_iter().collect()));
            o.summary.push(format!("phi_star = {total:.12}"));
        }
        Command::CramerRao { gens } => {
            let gens = ctx.generators(gens.as_deref())?;
            o.input(
                "gens",
                gens.iter().map(|&g| ctx.name(g)).collect::<Vec<_>>(),
            );
            let r = cramer_rao_audit(m, &gens, &ctx.grid, ctx.degree)?;
            o.output("audit", serde_json::to_value(&r)?);
            o.summary
                .push(format!("lhs = {:.12}, rhs = {}, {}", r.lhs, r.rhs, r.note));
            if let Some(passed) = r.passed {
                o.tolerances
                    .insert("cramer_rao".into(), modfisher::conjugate::CRAMER_RAO_TOL);
                o.checks.insert("cramer_rao".into(), passed);
            }
        }
        Command::ChiStar {
            gens,
            eps,
            tail_cutoff,
        } => {
            let gens = ctx.generators(gens.as_deref())?;
            let eps = parse_floats(eps)?;
            o.input(
                "gens",
                gens.iter().map(|&g| ctx.name(g)).collect::<Vec<_>>(),
            );
            o.input("eps", eps.clone());
            o.input(
                "tail_cutoff",
                if tail_cutoff.is_finite() {
                    json!(tail_cutoff)
                } else {
                    json!("inf")
                },
            );
            let r = chi_star(m, &gens, &eps, *tail_cutoff, &ctx.grid, ctx.degree)?;
            o.summary
                .push(format!("chi_star = {:.12} (tail {:.3e})", r.value, r.tail));
            o.output("chi_star", serde_json::to_value(&r)?);
        }
        Command::VerifyLemma2 { gen, p, q } => {
            let g = ctx.generator(gen.as_deref())?;
            let (pw, qw) = (ctx.x_word(p)?, ctx.x_word(q)?);
            o.input("gen", ctx.name(g));
            o.input("p", m.format_word(&pw));
            o.input("q", m.format_word(&qw));
            let xi = solve_conjugate_at(m, g, TimeTag::ZERO, &ctx.basis(vec![g]))?.xi();
            let r = verify_xileftright(m, g, &NcPoly::from_word(pw), &NcPoly::from_word(qw), &xi)?;
            o.output("residual", r);
            o.check_below("residual", r, ctx.tol);
        }
        Command::VerifyCore { gen, q } => {
            let g = ctx.generator(gen.as_deref())?;
            let cw = ctx.core_word(q)?;
            o.input("gen", ctx.name(g));
            o.input("q", q.split_whitespace().collect::<Vec<_>>().join(" "));
            let zeta = solve_conjugate_at(m, g, TimeTag::ZERO, &ctx.basis(vec![g]))?.xi();
            let r = verify_core_theorem(m, g, &cw, &zeta)?;
            o.output("residual", r);
            o.check_below("residual", r, ctx.tol);
        }
        Command::Brownian { word, order, time } => {
            let w = ctx.x_word(word)?;
            let t: TimeTag = time.parse()?;
            o.input("word", m.format_word(&w));
            o.input("order", *order);
            o.input("time", t.to_string());
            let e = expand_state(m, &w, *order)?;
            let coeffs: Vec<Value> = e
                .coefficients
                .iter()
                .map(|(k, c)| json!({ "half_power": k, "value": complex(*c) }))
                .collect();
            o.output("expansion", coeffs);
            let mut conjugates = BTreeMap::new();
            let mut gens: Vec<GenId> = w.letters().iter().map(|l| l.gen).collect();
            gens.sort();
            gens.dedup();
            for &g in &gens {
                let sol = solve_conjugate_at(m, g, TimeTag::ZERO, &ctx.basis(vec![g]))?;
                conjugates.insert(g, sol.xi());
            }
            let r = verify_gradient_expansion(m, &w, &conjugates)?;
            o.output("gradient_residual", r);
            o.check_below("gradient_residual", r, ctx.tol);
            for g in m.gen_ids() {
                let holds = two_point_display_holds(m, g, t)?;
                o.checks
                    .insert(format!("{}.two_point_display", ctx.name(g)), holds);
            }
        }
        Command::Bound { alpha, delta } => {
            o.input("alpha", *alpha);
            o.input("delta", *delta);
            let b = factoriality_bound(*alpha, *delta)?;
            o.output("bound", b);
            o.summary.push(format!("bound = {b}"));
        }
        Command::Suite => {
            o.input("seed", ctx.seed);
            let report = run_suite(ctx.seed);
            for r in &report.results {
                o.checks.insert(format!("criterion_{:02}", r.id), r.passed);
                let status = if r.passed { "PASS" } else { "FAIL" };
                o.summary.push(format!(
                    "criterion {:>2} [{status}] {}: {}",
                    r.id, r.name, r.detail
                ));
            }
            o.output("results", serde_json::to_value(&report.results)?);
        }
    }
    Ok(o)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let start = Instant::now();
    let c = &cli.common;
    if let Some(jobs) = c.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let setup = || -> modfisher::Result<Ctx> {
        if !(c.tol.is_finite() && c.tol > 0.0) {
            return Err(Error::Config(format!(
                "tolerance must be positive, got {}",
                c.tol
            )));
        }
        Ok(Ctx {
            model: load_model(c.model.as_ref())?,
            tol: c.tol,
            seed: c.seed,
            grid: parse_grid(&c.grid)?,
            degree: c.degree,
        })
    };
    let outcome = setup().and_then(|ctx| run(&ctx, &cli.command).map(|o| (ctx, o)));
    let (ctx, o) = match outcome {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let elapsed = start.elapsed().as_secs_f64();
    let mut inputs = o.inputs;
    inputs.insert(
        "grid".into(),
        json!(ctx.grid.iter().map(|t| t.to_string()).collect::<Vec<_>>()),
    );
    inputs.insert("degree".into(), json!(ctx.degree));
    let mut tolerances = o.tolerances;
    tolerances.insert("tol".into(), ctx.tol);
    let passed = o.checks.values().all(|&b| b);
    let report = RunReport {
        command: cli.command.name().to_string(),
        model_digest: model_digest(&ctx.model),
        inputs: Value::Object(inputs.into_iter().collect()),
        outputs: Value::Object(o.outputs.into_iter().collect()),
        tolerances,
        checks: o.checks,
        passed,
        wall_time_seconds: c.wall_time.then_some(elapsed),
    };
    match to_json(&report) {
        Ok(text) => println!("{text}"),
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    for line in &o.summary {
        eprintln!("{line}");
    }
    eprintln!(
        "{}: {} in {elapsed:.2}s",
        report.command,
        if passed { "pass" } else { "FAIL" }
    );
    if passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
