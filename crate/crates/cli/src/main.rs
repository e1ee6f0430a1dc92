use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use wsumq_core::analysis::{check_scalar_expression, check_scalar_program, ScalarReport};
use wsumq_core::eval::{run_program, AnswerView, ExprEvaluator, Mode};
use wsumq_core::fnn::{gen_3sat_network, gen_split_network, CnfFormula, Fnn};
use wsumq_core::structure::all_tuples;
use wsumq_core::syntax::{builtin, parse_expression_unit, parse_program, Builtin, Expr, Program, Var};
use wsumq_core::transform::{simultaneous_induction, translate_program, DomainPrecondition, TransformKind};
use wsumq_core::weight::{parse_rational_list, rational_to_string};
use wsumq_core::error::SyntaxError;
use wsumq_core::{Assignment, Vocabulary, WeightedStructure};

/// Exact evaluator for weighted first-order queries with fixpoints, and a
/// toolkit for ReLU networks.
///
/// PROGRAM and EXPR arguments are file paths or `builtin:NAME`
/// (eval_recursive, eval_depth_bounded:L, floyd_warshall,
/// floyd_warshall_functional, squaring, acyclicity).
#[derive(Parser, Debug)]
#[command(name = "wsumq", version, arg_required_else_help = true)]
struct Cli {
    /// Fixpoint semantics for strata.
    #[arg(long, global = true, value_enum, default_value_t = ModeArg::Functional)]
    mode: ModeArg,
    /// Print one line per fixpoint round to stderr.
    #[arg(long, global = true)]
    trace: bool,
    /// Largest arity loose2func may produce.
    #[arg(long, global = true, default_value_t = 12, value_parser = clap::value_parser!(u32).range(1..))]
    arity_cap: u32,
    /// Output format; parse, check and transform default to text, the rest to json.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Functional,
    Loose,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Functional => Mode::Functional,
            ModeArg::Loose => Mode::Loose,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Text,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum KindArg {
    Func2loose,
    Loose2func,
    Simind,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse a program or expression and print it back.
    Parse {
        source: String,
        /// Read the file as a single expression rather than a program.
        #[arg(long)]
        expr: bool,
    },
    /// Static checks; exits 1 when a check fails.
    Check {
        /// Check membership in the scalar fragment.
        #[arg(long, required = true)]
        scalar: bool,
        source: String,
        #[arg(long)]
        expr: bool,
    },
    /// Evaluate an expression on a structure. Free variables not bound by
    /// --bind are enumerated.
    Eval {
        expr: String,
        structure: PathBuf,
        /// Bindings such as `x=a,y=b`.
        #[arg(long, default_value = "")]
        bind: String,
    },
    /// Run a program on a structure and print its answer.
    Run {
        program: String,
        structure: PathBuf,
        /// Answer symbol; defaults to the program's.
        #[arg(long)]
        answer: Option<String>,
    },
    /// Translate a program between semantics or collapse it to one ifp term.
    Transform {
        #[arg(long, value_enum)]
        kind: KindArg,
        program: String,
        #[arg(long)]
        answer: Option<String>,
        #[arg(short = 'o', long = "output")]
        output: Option<PathBuf>,
    },
    /// Network operations.
    #[command(subcommand)]
    Fnn(FnnCommand),
}

#[derive(Args, Debug)]
struct NetOut {
    net: PathBuf,
    #[arg(short = 'o', long = "output")]
    output: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum FnnCommand {
    /// Exact forward pass.
    Forward {
        net: PathBuf,
        /// Comma-separated rationals, one per input.
        #[arg(long, allow_hyphen_values = true)]
        input: String,
    },
    /// Quotient by the depth-wise equivalence.
    Reduce(NetOut),
    /// Encode as a weighted structure over E, In, Out, b, w, val.
    Encode {
        net: PathBuf,
        /// Input values for `val`.
        #[arg(long, allow_hyphen_values = true)]
        val: Option<String>,
        #[arg(short = 'o', long = "output")]
        output: Option<PathBuf>,
    },
    /// Canonical quasi-order as a list of classes.
    Order { net: PathBuf },
    /// Check |r|, q <= P(node count) for every weight r/q.
    Bounded {
        net: PathBuf,
        /// Coefficients of P, highest degree first.
        #[arg(long)]
        poly: String,
        /// Check the reduced network instead.
        #[arg(long)]
        reduced: bool,
    },
    /// Replace each edge of natural weight a by a parallel unit nodes.
    Split(NetOut),
    /// Network that is nonzero somewhere iff the DIMACS CNF is satisfiable.
    #[command(name = "gadget-3sat")]
    Gadget3sat {
        cnf: PathBuf,
        #[arg(short = 'o', long = "output")]
        output: Option<PathBuf>,
    },
    /// Network extracting the first n bits of its input.
    GadgetSplit {
        #[arg(long)]
        bits: usize,
        #[arg(short = 'o', long = "output")]
        output: Option<PathBuf>,
    },
}

enum Source {
    Program(Program),
    Expr(Vocabulary, Expr),
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn load_builtin(spec: &str) -> Result<Source> {
    let (name, param) = match spec.split_once(':') {
        Some((n, l)) => (n, Some(l.parse::<usize>().map_err(|_| anyhow!("bad builtin parameter `{l}`"))?)),
        None => (spec, None),
    };
    let params: HashMap<String, usize> = param.map(|l| ("l".to_string(), l)).into_iter().collect();
    Ok(match builtin(name, &params)? {
        Builtin::Program(p) => Source::Program(p),
        Builtin::Expr(e) => {
            let vocab = if name == "squaring" {
                Vocabulary::new().rel("E", 2)
            } else {
                wsumq_core::syntax::builtins::fnn_vocabulary()
            };
            Source::Expr(vocab, e)
        }
    })
}

fn load_source(arg: &str, force_expr: bool) -> Result<Source> {
    if let Some(name) = arg.strip_prefix("builtin:") {
        return load_builtin(name);
    }
    let text = read(Path::new(arg))?;
    if force_expr {
        let (v, e) = parse_expression_unit(&text, &Vocabulary::new()).with_context(|| arg.to_string())?;
        return Ok(Source::Expr(v, e));
    }
    match parse_program(&text, &Vocabulary::new()) {
        Ok(p) => Ok(Source::Program(p)),
        Err(program_err) => match parse_expression_unit(&text, &Vocabulary::new()) {
            Ok((v, e)) => Ok(Source::Expr(v, e)),
            Err(expr_err) => {
                let at = |e: &SyntaxError| match e {
                    SyntaxError::Parse(p) => Some((p.line, p.col)),
                    SyntaxError::Validation(_) => None,
                };
                // Report the reading that got further; a validation error
                // means the text did parse.
                let use_expr = match (at(&program_err), at(&expr_err)) {
                    (_, None) => true,
                    (Some(p), Some(e)) => e > p,
                    (None, Some(_)) => false,
                };
                Err(anyhow!("{arg}: {}", if use_expr { expr_err } else { program_err }))
            }
        },
    }
}

fn load_program(arg: &str) -> Result<Program> {
    match load_source(arg, false)? {
        Source::Program(p) => Ok(p),
        Source::Expr(..) => bail!("{arg}: expected a program, found an expression"),
    }
}

fn load_structure(path: &Path) -> Result<WeightedStructure> {
    WeightedStructure::from_json(&read(path)?).with_context(|| path.display().to_string())
}

fn load_net(path: &Path) -> Result<Fnn> {
    Fnn::from_json(&read(path)?).with_context(|| path.display().to_string())
}

fn with_answer(p: Program, answer: Option<&str>) -> Result<Program> {
    match answer {
        None => Ok(p),
        Some(a) if p.strata.iter().any(|s| s.intensional.contains(a)) => Ok(Program { answer: a.to_string(), ..p }),
        Some(a) => bail!("answer symbol `{a}` is not defined by any stratum"),
    }
}

fn declarations(v: &Vocabulary) -> String {
    v.iter().map(|(n, i)| format!("{} {}/{};\n", i.kind, n, i.arity)).collect()
}

/// Stdout output; `emit` always ends with a newline.
struct Out {
    format: Format,
    buf: String,
}

impl Out {
    fn emit(&mut self, s: &str) {
        self.buf.push_str(s);
        if !s.ends_with('\n') {
            self.buf.push('\n');
        }
    }

    fn json(&mut self, v: &Value) {
        self.emit(&serde_json::to_string_pretty(v).expect("json value serializes"));
    }
}

fn write_or_emit(out: &mut Out, path: &Option<PathBuf>, content: &str) -> Result<()> {
    match path {
        Some(p) => {
            let mut c = content.to_string();
            if !c.ends_with('\n') {
                c.push('\n');
            }
            fs::write(p, c).with_context(|| format!("cannot write {}", p.display()))
        }
        None => {
            out.emit(content);
            Ok(())
        }
    }
}

fn report_json(r: &ScalarReport) -> Value {
    json!({
        "scalar": r.is_scalar(),
        "violations": r.violations.iter().map(|v| json!({"path": v.path, "reason": v.reason.to_string()})).collect::<Vec<_>>(),
    })
}

fn answer_text(view: &AnswerView) -> String {
    match view {
        AnswerView::Bool(b) => b.to_string(),
        AnswerView::Relation { name, tuples, .. } => {
            tuples.iter().map(|t| format!("{name}({})\n", t.join(","))).collect()
        }
        AnswerView::Function { name, entries, .. } => {
            entries.iter().map(|(t, w)| format!("{name}({}) = {w}\n", t.join(","))).collect()
        }
    }
}

fn execute(cli: &Cli, out: &mut Out) -> Result<ExitCode> {
    let mode: Mode = cli.mode.into();
    let cap = cli.arity_cap as usize;
    let format_or = |d: Format| cli.format.unwrap_or(d);
    match &cli.command {
        Command::Parse { source, expr } => {
            out.format = format_or(Format::Text);
            match load_source(source, *expr)? {
                Source::Program(p) => match out.format {
                    Format::Text => out.emit(&p.to_string()),
                    Format::Json => out.json(&json!({
                        "kind": "program",
                        "strata": p.strata.len(),
                        "answer": p.answer,
                        "text": p.to_string(),
                    })),
                },
                Source::Expr(v, e) => match out.format {
                    Format::Text => out.emit(&format!("{}{e}", declarations(&v))),
                    Format::Json => out.json(&json!({
                        "kind": if e.is_formula() { "formula" } else { "term" },
                        "freeVariables": e.free_vars().into_iter().collect::<Vec<_>>(),
                        "text": e.to_string(),
                    })),
                },
            }
        }
        Command::Check { scalar: _, source, expr } => {
            out.format = format_or(Format::Text);
            let report = match load_source(source, *expr)? {
                Source::Program(p) => check_scalar_program(&p),
                Source::Expr(_, e) => check_scalar_expression(&e),
            };
            match out.format {
                Format::Text if report.is_scalar() => out.emit("scalar"),
                Format::Text => report.violations.iter().for_each(|v| out.emit(&v.to_string())),
                Format::Json => out.json(&report_json(&report)),
            }
            return Ok(if report.is_scalar() { ExitCode::SUCCESS } else { ExitCode::FAILURE });
        }
        Command::Eval { expr, structure, bind } => {
            out.format = format_or(Format::Json);
            let s = load_structure(structure)?;
            let e = match load_source(expr, false)? {
                Source::Expr(_, e) => e,
                Source::Program(_) => bail!("{expr}: expected an expression, found a program"),
            };
            let a = Assignment::parse(bind, s.universe())?;
            let vars: Vec<Var> = e.free_vars().into_iter().collect();
            let open: Vec<&Var> = vars.iter().filter(|v| a.get(v).is_none()).collect();
            let mut ev = ExprEvaluator::new(&e, &s, &vars)?;
            let mut rows = Vec::new();
            for t in all_tuples(s.size(), open.len()) {
                let mut full = a.clone();
                for (v, &x) in open.iter().zip(&t) {
                    full.set(v, x);
                }
                let tuple: Vec<_> = vars.iter().map(|v| full.get(v).expect("every variable bound")).collect();
                rows.push((s.named_tuple(&t), ev.eval(&tuple)));
            }
            if open.is_empty() {
                let value = rows.pop().expect("one row").1;
                match out.format {
                    Format::Text => out.emit(&value.to_string()),
                    Format::Json => out.json(&json!({ "value": value.to_string() })),
                }
            } else {
                let names: Vec<&str> = open.iter().map(|v| v.as_str()).collect();
                match out.format {
                    Format::Text => {
                        for (t, v) in &rows {
                            let binds: Vec<String> = names.iter().zip(t).map(|(n, x)| format!("{n}={x}")).collect();
                            out.emit(&format!("{}: {v}", binds.join(",")));
                        }
                    }
                    Format::Json => out.json(&json!({
                        "variables": names,
                        "rows": rows.iter().map(|(t, v)| json!({"tuple": t, "value": v.to_string()})).collect::<Vec<_>>(),
                    })),
                }
            }
        }
        Command::Run { program, structure, answer } => {
            out.format = format_or(Format::Json);
            let p = with_answer(load_program(program)?, answer.as_deref())?;
            let s = load_structure(structure)?;
            let (_, view, traces) = run_program(&p, &s, mode)?;
            if cli.trace {
                let mut err = std::io::stderr().lock();
                for (i, t) in traces.iter().enumerate() {
                    writeln!(err, "stratum {i}:\n{t}").ok();
                }
            }
            match out.format {
                Format::Text => out.emit(&answer_text(&view)),
                Format::Json => out.json(&view.to_json()),
            }
        }
        Command::Transform { kind, program, answer, output } => {
            out.format = format_or(Format::Text);
            let p = with_answer(load_program(program)?, answer.as_deref())?;
            let (text, preserved, pre) = match kind {
                KindArg::Simind => {
                    let [st] = p.strata.as_slice() else {
                        bail!("simultaneous induction applies to single-stratum programs; this one has {}", p.strata.len())
                    };
                    let res = simultaneous_induction(st, &p.answer)?;
                    let vars: Vec<&str> = res.output.free_vars.iter().map(|v| v.as_str()).collect();
                    let text = format!(
                        "# free variables: {}\n{}{}\n",
                        vars.join(", "),
                        declarations(&st.extensional),
                        res.output.expr
                    );
                    (text, res.preserved_symbols, res.precondition)
                }
                KindArg::Func2loose | KindArg::Loose2func => {
                    let k = if *kind == KindArg::Func2loose {
                        TransformKind::FunctionalToLoose
                    } else {
                        TransformKind::LooseToFunctional
                    };
                    let res = translate_program(&p, k, cap)?;
                    (res.output.to_string(), res.preserved_symbols, res.precondition)
                }
            };
            if pre != DomainPrecondition::None {
                eprintln!("note: equivalence holds on structures satisfying {pre}");
            }
            match out.format {
                Format::Text => write_or_emit(out, output, &text)?,
                Format::Json => {
                    let doc = json!({ "output": text, "preservedSymbols": preserved, "precondition": pre.to_string() });
                    write_or_emit(out, output, &serde_json::to_string_pretty(&doc)?)?;
                }
            }
        }
        Command::Fnn(cmd) => {
            out.format = format_or(Format::Json);
            fnn(cmd, out)?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn fnn(cmd: &FnnCommand, out: &mut Out) -> Result<()> {
    match cmd {
        FnnCommand::Forward { net, input } => {
            let y = load_net(net)?.forward(&parse_rational_list(input)?)?;
            let y: Vec<String> = y.iter().map(rational_to_string).collect();
            match out.format {
                Format::Text => out.emit(&y.join(",")),
                Format::Json => out.json(&json!(y)),
            }
        }
        FnnCommand::Reduce(NetOut { net, output }) => {
            let red = load_net(net)?.reduce();
            let net_json: Value = serde_json::from_str(&red.net.to_json())?;
            match (output, out.format) {
                (Some(_), Format::Text) => {
                    write_or_emit(out, output, &red.net.to_json())?;
                    red.class_of.iter().for_each(|(n, c)| out.emit(&format!("{n} -> {c}")));
                }
                (Some(_), Format::Json) => {
                    write_or_emit(out, output, &red.net.to_json())?;
                    out.json(&json!({ "classOf": red.class_of }));
                }
                (None, _) => out.json(&json!({ "net": net_json, "classOf": red.class_of })),
            }
        }
        FnnCommand::Encode { net, val, output } => {
            let val = val.as_deref().map(parse_rational_list).transpose()?;
            let s = load_net(net)?.to_weighted_structure(val.as_deref())?;
            write_or_emit(out, output, &s.to_json())?;
        }
        FnnCommand::Order { net } => {
            let order = load_net(net)?.canonical_order();
            match out.format {
                Format::Text => order.iter().for_each(|c| out.emit(&c.join(" "))),
                Format::Json => out.json(&json!(order)),
            }
        }
        FnnCommand::Bounded { net, poly, reduced } => {
            let coeffs = poly
                .split(',')
                .map(|c| c.trim().parse::<u64>().map_err(|_| anyhow!("bad coefficient `{c}`")))
                .collect::<Result<Vec<_>>>()?;
            let res = load_net(net)?.check_p_bounded(&coeffs, *reduced);
            match out.format {
                Format::Text => out.emit(&match &res.witness {
                    None => format!("bounded (n = {}, P(n) = {})", res.size, res.bound),
                    Some(w) => format!("unbounded (n = {}, P(n) = {}): {w}", res.size, res.bound),
                }),
                Format::Json => out.json(&json!({
                    "bounded": res.ok,
                    "size": res.size,
                    "bound": res.bound.to_string(),
                    "witness": res.witness.map(|w| w.to_string()),
                })),
            }
        }
        FnnCommand::Split(NetOut { net, output }) => {
            let split = load_net(net)?.split_edges()?;
            write_or_emit(out, output, &split.to_json())?;
        }
        FnnCommand::Gadget3sat { cnf, output } => {
            let phi = CnfFormula::from_dimacs(&read(cnf)?).with_context(|| cnf.display().to_string())?;
            write_or_emit(out, output, &gen_3sat_network(&phi)?.to_json())?;
        }
        FnnCommand::GadgetSplit { bits, output } => {
            write_or_emit(out, output, &gen_split_network(*bits)?.to_json())?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .with_target(false)
        .without_time()
        .init();
    let cli = Cli::parse();
    let mut out = Out { format: Format::Json, buf: String::new() };
    let code = match execute(&cli, &mut out) {
        Ok(code) => code,
        Err(e) => {
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    };
    let mut stdout = std::io::stdout().lock();
    stdout.write_all(out.buf.as_bytes()).ok();
    code
}
