mod args;
mod report;

use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use clap::Parser;
use hdsafe_core::ir::{parse_program, Program, SecurityClass};
use hdsafe_core::leakage::{self, Sampling, Verdict, EXHAUSTIVE_BITS};
use hdsafe_core::model::lower::{lower, render_asm, Lowered};
use hdsafe_core::model::{
    add_implied_constraints, add_security_constraints, build_base_model, check, ExtendedModel, ImpliedOptions,
    Solution,
};
use hdsafe_core::oracle;
use hdsafe_core::secsets::{self, SecuritySets};
use hdsafe_core::solver::{self, Clock, SolveBudget, SolveOutcome, Status};
use hdsafe_core::target::{load_target, preset, TargetDesc};
use hdsafe_core::typeinf::{infer_types, TypeEnv};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use args::{Cli, Command, CompileArgs, ModelArgs, OracleArgs, SimulateArgs, SolveArgs};

const EXIT_INPUT: u8 = 2;
const EXIT_INFEASIBLE: u8 = 3;
const EXIT_TIMEOUT: u8 = 4;
const EXIT_LEAKY: u8 = 5;
const EXIT_DISCREPANCY: u8 = 6;

/// A failure with its exit code.
#[derive(Debug)]
struct Fail {
    code: u8,
    msg: String,
}

fn fail(code: u8, msg: impl Into<String>) -> Fail {
    Fail { code, msg: msg.into() }
}

type Res<T> = Result<T, Fail>;

struct WallClock {
    deadline: Option<Instant>,
}

impl Clock for WallClock {
    fn expired(&self) -> bool {
        self.deadline.is_some_and(|d| Instant::now() >= d)
    }
}

fn read_program(path: &Path) -> Res<Program> {
    let text = fs::read_to_string(path).map_err(|e| fail(EXIT_INPUT, format!("{}: {e}", path.display())))?;
    parse_program(&text).map_err(|e| fail(EXIT_INPUT, format!("{}:{e}", path.display())))
}

fn read_target(name: &str) -> Res<TargetDesc> {
    let path = Path::new(name);
    if path.exists() {
        let text = fs::read_to_string(path).map_err(|e| fail(EXIT_INPUT, format!("{name}: {e}")))?;
        return load_target(&text).map_err(|e| fail(EXIT_INPUT, format!("{name}: {e}")));
    }
    preset(name).map_err(|_| fail(EXIT_INPUT, format!("{name}: no such file or target preset")))
}

struct Models {
    program: Program,
    env: TypeEnv,
    sets: SecuritySets,
    base: ExtendedModel,
    /// The model that is solved: base, or base plus security constraints.
    model: ExtendedModel,
    secure: bool,
    implied: bool,
}

fn build(cli: &Cli, m: &ModelArgs, s: &SolveArgs) -> Res<Models> {
    let program = read_program(&m.input)?;
    let target = read_target(&cli.target)?;
    let env = infer_types(&program);
    let base = build_base_model(&program, &target, m.copies).map_err(|e| fail(EXIT_INFEASIBLE, format!("infeasible: {e}")))?;
    let sets = secsets::compute(&env, &base.func);
    let secure = !s.insecure;
    let implied = secure && !s.no_implied;
    let model = if secure {
        let sec = add_security_constraints(base.clone(), &sets);
        if implied {
            add_implied_constraints(sec, &sets, ImpliedOptions::default())
        } else {
            sec
        }
    } else {
        base.clone()
    };
    Ok(Models { program, env, sets, base, model, secure, implied })
}

fn run_solver(models: &Models, s: &SolveArgs) -> Res<(SolveOutcome, f64)> {
    let clock = WallClock { deadline: s.budget_seconds.map(|x| Instant::now() + Duration::from_secs_f64(x)) };
    let budget = SolveBudget::nodes(s.budget_nodes);
    let start = Instant::now();
    let out = solver::solve(&models.model, budget, &clock);
    let secs = start.elapsed().as_secs_f64();
    match out.status {
        Status::Optimal | Status::Feasible => Ok((out, secs)),
        Status::Timeout => Err(fail(EXIT_TIMEOUT, "timeout: no solution within the budget")),
        Status::Infeasible => {
            let family = solver::diagnose(&models.model, budget, &clock).unwrap_or("unknown");
            let msg = match family {
                "base" => "infeasible: the program does not fit the target (base constraints)".to_string(),
                "security" => "infeasible: the security constraints conflict jointly".to_string(),
                fam => format!("infeasible: {fam} constraints cannot be satisfied"),
            };
            Err(fail(EXIT_INFEASIBLE, msg))
        }
    }
}

fn status_name(s: Status) -> &'static str {
    match s {
        Status::Optimal => "optimal",
        Status::Feasible => "feasible",
        Status::Infeasible => "infeasible",
        Status::Timeout => "timeout",
    }
}

fn class_count(p: &Program, c: SecurityClass) -> usize {
    p.inputs.iter().filter(|(_, k)| *k == c).count()
}

fn sampling_for(p: &Program, seed: u64, samples: u64) -> (Sampling, String) {
    let bits = p.width * class_count(p, SecurityClass::Random) as u32;
    if bits <= EXHAUSTIVE_BITS {
        (Sampling::Exhaustive, "exhaustive".into())
    } else {
        (Sampling::MonteCarlo { samples, seed }, format!("monte-carlo {samples} samples, seed {seed:#x}"))
    }
}

/// All-zero against all-one secrets, then `extra` seeded random pairs.
fn secret_pairs(p: &Program, extra: usize, rng: &mut ChaCha8Rng) -> Vec<[Vec<u64>; 2]> {
    let n = class_count(p, SecurityClass::Secret);
    let mask = hdsafe_core::ir::word_mask(p.width);
    let mut pairs = vec![[vec![0; n], vec![mask; n]]];
    for _ in 0..extra {
        let a = (0..n).map(|_| rng.gen::<u64>() & mask).collect();
        let b = (0..n).map(|_| rng.gen::<u64>() & mask).collect();
        pairs.push([a, b]);
    }
    pairs
}

fn verify(
    low: &Lowered,
    p: &Program,
    pairs: &[[Vec<u64>; 2]],
    public: &[u64],
    seed: u64,
    samples: u64,
) -> Res<Vec<(Verdict, report::VerdictJson)>> {
    let (sampling, label) = sampling_for(p, seed, samples);
    pairs
        .iter()
        .map(|[a, b]| {
            let v = leakage::check_equivalence(low, public, (a, b), sampling)
                .map_err(|e| fail(EXIT_INPUT, format!("verification: {e}")))?;
            let j = report::verdict_json(&v, [a.clone(), b.clone()], public.to_vec(), label.clone());
            Ok((v, j))
        })
        .collect()
}

fn print_json<T: Serialize>(v: &T) {
    println!("{}", serde_json::to_string_pretty(v).expect("report serializes"));
}

fn write(path: &Path, text: &str) -> Res<()> {
    fs::write(path, text).map_err(|e| fail(1, format!("{}: {e}", path.display())))
}

fn compile(cli: &Cli, a: &CompileArgs) -> Res<()> {
    let models = build(cli, &a.model, &a.solve)?;
    let name = models.program.name.clone();
    fs::create_dir_all(&a.out_dir).map_err(|e| fail(1, format!("{}: {e}", a.out_dir.display())))?;
    if a.dump_model {
        write(&a.out_dir.join(format!("{name}.model.txt")), &report::model_text(&models.model))?;
    }
    let (out, secs) = run_solver(&models, &a.solve)?;
    let sol = out.best.clone().expect("solution present");
    debug_assert_eq!(check(&models.model, &sol), Ok(()));
    let asm = render_asm(&models.model, &sol);
    let asm_path = a.out_dir.join(format!("{name}.s"));
    write(&asm_path, &asm)?;
    if a.dump_solution {
        let text = serde_json::to_string_pretty(&sol).expect("solution serializes");
        write(&a.out_dir.join(format!("{name}.solution.json")), &text)?;
    }
    let mut verdicts = Vec::new();
    let mut leaky = false;
    if a.verify {
        let mut rng = ChaCha8Rng::seed_from_u64(cli.seed);
        let mask = hdsafe_core::ir::word_mask(models.program.width);
        let public: Vec<u64> =
            (0..class_count(&models.program, SecurityClass::Public)).map(|_| rng.gen::<u64>() & mask).collect();
        let pairs = secret_pairs(&models.program, a.verify_pairs, &mut rng);
        let low = lower(&models.model, &sol);
        for (v, j) in verify(&low, &models.program, &pairs, &public, cli.seed, 20_000)? {
            leaky |= !v.is_equivalent();
            verdicts.push(j);
        }
    }
    let rep = report::Report {
        program: name.clone(),
        target: models.model.target.name.clone(),
        mode: if models.secure { "secure" } else { "insecure" },
        implied: models.implied,
        objective: sol.objective,
        secure: models.secure,
        asm: asm_path.file_name().unwrap().to_string_lossy().into_owned(),
        types: report::types_json(&models.env, &models.base.func),
        sets: report::sets_json(&models.sets),
        solver: report::solver_json(status_name(out.status), &out.stats, secs),
        verdicts,
    };
    let text = serde_json::to_string_pretty(&rep).expect("report serializes");
    write(&a.out_dir.join(format!("{name}.report.json")), &text)?;
    if cli.json {
        println!("{text}");
    } else {
        print!("{asm}");
        eprintln!(
            "{name}: {} cycles, {} ({} mode)",
            sol.objective,
            status_name(out.status),
            if models.secure { "secure" } else { "insecure" }
        );
        for v in &rep.verdicts {
            eprintln!("verify {:?} vs {:?}: {}", v.secrets[0], v.secrets[1], v.verdict);
        }
    }
    if leaky && models.secure {
        return Err(fail(EXIT_LEAKY, "verification failed: the generated code leaks"));
    }
    Ok(())
}

fn analyze(cli: &Cli, a: &args::AnalyzeArgs) -> Res<()> {
    let solve = SolveArgs { secure: true, insecure: false, no_implied: true, budget_seconds: None, budget_nodes: 0 };
    let models = build(cli, &a.model, &solve)?;
    print_json(&report::analysis(&models.env, &models.base.func, a.model.copies, &models.sets));
    Ok(())
}

#[derive(Serialize)]
struct Simulation {
    program: String,
    objective: i32,
    asm: String,
    inputs: Vec<u64>,
    outputs: Vec<u64>,
    expected: Vec<u64>,
    trace: Vec<TraceEntry>,
    verdict: Option<report::VerdictJson>,
}

#[derive(Serialize)]
struct TraceEntry {
    instruction: usize,
    kind: &'static str,
    hw: u32,
}

fn parse_words(s: &str) -> Res<Vec<u64>> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',').map(|w| args::parse_word(w).map_err(|e| fail(EXIT_INPUT, e))).collect()
}

fn simulate(cli: &Cli, a: &SimulateArgs) -> Res<()> {
    let models = build(cli, &a.model, &a.solve)?;
    let p = &models.program;
    let sol: Solution = match &a.solution {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| fail(EXIT_INPUT, format!("{}: {e}", path.display())))?;
            let sol: Solution =
                serde_json::from_str(&text).map_err(|e| fail(EXIT_INPUT, format!("{}: {e}", path.display())))?;
            if let Err(v) = check(&models.base, &sol) {
                return Err(fail(EXIT_INPUT, format!("{}: not a valid solution: {v}", path.display())));
            }
            sol
        }
        None => run_solver(&models, &a.solve)?.0.best.expect("solution present"),
    };
    let low = lower(&models.model, &sol);
    let inputs = if a.inputs.is_empty() { vec![0; p.inputs.len()] } else { a.inputs.clone() };
    if inputs.len() != p.inputs.len() {
        return Err(fail(EXIT_INPUT, format!("expected {} inputs, got {}", p.inputs.len(), inputs.len())));
    }
    let (st, trace) = leakage::run(&low, &inputs).map_err(|e| fail(EXIT_INPUT, e.to_string()))?;
    let vals = p.eval(&inputs);
    let verdict = match &a.secrets {
        None => None,
        Some(s) => {
            let (x, y) = s.split_once('/').ok_or_else(|| fail(EXIT_INPUT, "--secrets expects `a,b/c,d`"))?;
            let pair = [parse_words(x)?, parse_words(y)?];
            let mut v = verify(&low, p, std::slice::from_ref(&pair), &a.public, cli.seed, a.samples)?;
            Some(v.remove(0).1)
        }
    };
    print_json(&Simulation {
        program: p.name.clone(),
        objective: sol.objective,
        asm: render_asm(&models.model, &sol),
        inputs,
        outputs: leakage::outputs(&low, &st),
        expected: p.outputs.iter().map(|t| vals[t.index()]).collect(),
        trace: trace
            .iter()
            .map(|e| TraceEntry {
                instruction: e.position,
                kind: match e.kind {
                    leakage::LeakKind::Rot => "register",
                    leakage::LeakKind::Mre => "bus",
                },
                hw: e.value,
            })
            .collect(),
        verdict,
    });
    Ok(())
}

#[derive(Serialize)]
struct OracleJson {
    program: String,
    target: String,
    bound: usize,
    operations: usize,
    candidates: u64,
    insecure: oracle::ModelCount,
    secure: oracle::ModelCount,
    predicate_checks: u64,
    discrepancies: Vec<String>,
}

fn run_oracle(cli: &Cli, a: &OracleArgs) -> Res<()> {
    let solve = SolveArgs { secure: true, insecure: false, no_implied: true, budget_seconds: None, budget_nodes: 0 };
    let models = build(cli, &a.model, &solve)?;
    let r = oracle::cross_check(
        &[&models.base, &models.model],
        a.bound,
        SolveBudget::default(),
        &solver::NoClock,
        a.count_limit,
    )
    .map_err(|e| fail(EXIT_INPUT, e.to_string()))?;
    let ok = r.discrepancies.is_empty();
    print_json(&OracleJson {
        program: models.program.name.clone(),
        target: models.base.target.name.clone(),
        bound: a.bound,
        operations: r.ops,
        candidates: r.candidates,
        insecure: r.models[0].clone(),
        secure: r.models[1].clone(),
        predicate_checks: r.predicate_checks,
        discrepancies: r.discrepancies,
    });
    if ok {
        Ok(())
    } else {
        Err(fail(EXIT_DISCREPANCY, "oracle and solver disagree"))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let r = match &cli.command {
        Command::Compile(a) => compile(&cli, a),
        Command::Analyze(a) => analyze(&cli, a),
        Command::Simulate(a) => simulate(&cli, a),
        Command::Oracle(a) => run_oracle(&cli, a),
    };
    match r {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            if cli.json {
                eprintln!("{}", serde_json::json!({ "error": f.msg, "exit": f.code }));
            } else {
                eprintln!("hdsafe: {}", f.msg);
            }
            ExitCode::from(f.code)
        }
    }
}
