use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cutchoose::dsl::ALGORITHM_1;
use cutchoose::{parse_rational, rat, Rational};
use serde_json::Value;
use tempfile::TempDir;

struct Sandbox {
    dir: TempDir,
}

impl Sandbox {
    fn new() -> Self {
        Sandbox { dir: tempfile::tempdir().unwrap() }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn write(&self, name: &str, text: &str) -> PathBuf {
        let p = self.path(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    fn uniform(&self, n: usize) -> PathBuf {
        let agent = r#"{"strictly_positive":true,"segments":[{"to":"1","density":"1"}]}"#;
        self.write(&format!("uniform{n}.json"), &format!(r#"{{"agents":[{}]}}"#, vec![agent; n].join(",")))
    }

    fn cmd(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_cutchoose"))
            .args(args)
            .current_dir(self.dir.path())
            .env_remove("CUTCHOOSE_THREADS")
            .output()
            .unwrap()
    }

    fn ok(&self, args: &[&str]) -> Value {
        let out = self.cmd(args);
        assert_eq!(out.status.code(), Some(0), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        serde_json::from_slice(&out.stdout).unwrap()
    }
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn q(v: &Value) -> Rational {
    parse_rational(v.as_str().unwrap()).unwrap()
}

fn schema(name: &str) -> jsonschema::JSONSchema {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("schemas").join(format!("{name}.schema.json"));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    jsonschema::JSONSchema::compile(&v).unwrap()
}

fn assert_schema(name: &str, doc: &Value) {
    let compiled = schema(name);
    let msgs: Vec<String> = match compiled.validate(doc) {
        Ok(()) => return,
        Err(errors) => errors.map(|e| format!("{} at {}", e, e.instance_path)).collect(),
    };
    panic!("{name} schema violations: {msgs:?}");
}

fn utilities(report: &Value) -> Vec<Rational> {
    report["outcome"]["utilities"].as_array().unwrap().iter().map(q).collect()
}

#[test]
fn validate_exit_codes() {
    let sb = Sandbox::new();
    let good = sb.write("alg1.gcc", ALGORITHM_1);
    assert_eq!(sb.cmd(&["validate", s(&good)]).status.code(), Some(0));

    let bad = sb.write(
        "alg2.gcc",
        "agents 1;\ncut 1 in {[0,1]} as x;\nif x < 1/2 {\n  choose 1 from {[0,x]} as c;\n}\n",
    );
    let out = sb.cmd(&["validate", s(&bad)]);
    assert_eq!(out.status.code(), Some(1));
    let text = String::from_utf8_lossy(&out.stderr) + String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("NumericLiteralInCondition"), "{text}");
    assert!(text.contains("alg2.gcc:3:"), "{text}");

    assert_eq!(sb.cmd(&["validate", "missing.gcc"]).status.code(), Some(2));
}

#[test]
fn validate_lists_every_violation() {
    let sb = Sandbox::new();
    let f = sb.write("two.gcc", "agents 1;\ncut 1 in {[0,1]} as x;\ncut 1 in {[0,1]} as x;\nchoose 1 from {[0,x]} as c;\nif chose(c,3) {\n  choose 1 from {[x,1]} as d;\n}\n");
    let out = sb.cmd(&["validate", s(&f)]);
    assert_eq!(out.status.code(), Some(1));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(stdout.lines().count(), 2, "{stdout}");
    assert!(stdout.contains("two.gcc:3:1: DuplicateLabelOnPath"), "{stdout}");
    assert!(stdout.contains("ChoseIndexOutOfRange"), "{stdout}");
}

#[test]
fn run_cut_and_choose_honest_on_uniform() {
    let sb = Sandbox::new();
    sb.cmd(&["generate", "--protocol", "cc", "-o", "cc.gcc"]);
    let u = sb.uniform(2);
    let r = sb.ok(&["run", "cc.gcc", "--profile", s(&u), "--honest"]);
    assert_schema("run_report", &r);
    assert_eq!(utilities(&r), vec![rat(1, 2), rat(1, 2)]);
    assert_eq!(r["fairness"]["flags"]["proportional"], true);
    assert_eq!(r["program"]["n_agents"], 2);
}

#[test]
fn run_orr_honest_is_eps_envy_free() {
    let sb = Sandbox::new();
    sb.cmd(&["generate", "--protocol", "orr", "--n", "3", "--eps", "1/4", "-o", "orr.gcc"]);
    let text = std::fs::read_to_string(sb.path("orr.gcc")).unwrap();
    assert!(text.starts_with("# generated by cutchoose: protocol=orr n=3 eps=1/4"));
    for seed in ["1", "2", "3"] {
        sb.cmd(&["generate", "--random-profile", "--n", "3", "--seed", seed, "-o", "rand.json"]);
        let r = sb.ok(&["run", "orr.gcc", "--profile", "rand.json", "--honest"]);
        assert_eq!(r["fairness"]["eps_used"], "1/4");
        assert_eq!(r["fairness"]["flags"]["eps_envy_free"], true, "seed {seed}");
        assert_eq!(r["program"]["oblivious"], true);
    }
}

#[test]
fn thieves_strategy_table_reproduces_target() {
    let sb = Sandbox::new();
    sb.cmd(&["generate", "--random-profile", "--n", "2", "--seed", "4", "-o", "p.json"]);
    let out = sb.cmd(&[
        "generate", "--protocol", "thieves", "--n", "2", "-o", "thieves2.gcc", "--strategies-out", "ne_Z.json",
        "--profile", "p.json",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table: Value = serde_json::from_str(&std::fs::read_to_string(sb.path("ne_Z.json")).unwrap()).unwrap();
    assert_schema("strategy_table", &table);

    let z = sb.ok(&["oracle", "ef-search", "--n", "2", "--resolution", "24", "--profile", "p.json"]);
    assert_schema("oracle_report", &z);
    let r = sb.ok(&["run", "thieves2.gcc", "--profile", "p.json", "--strategies", "ne_Z.json"]);
    let alloc: Vec<Value> = r["outcome"]["allocation"].as_array().unwrap().iter().map(|p| p[0].clone()).collect();
    assert_eq!(Value::Array(alloc), z["search"]["allocation"]);
    assert_eq!(r["inputs"]["strategies"]["path"], "ne_Z.json");
}

#[test]
fn solve_algorithm_1() {
    let sb = Sandbox::new();
    let f = sb.write("alg1.gcc", ALGORITHM_1);
    let u = sb.uniform(1);
    let r = sb.ok(&["solve", s(&f), "--profile", s(&u), "--eps", "1/4"]);
    assert_schema("solve_report", &r);
    let u1 = q(&r["certificate"]["utilities"][0]);
    assert!(u1 >= rat(3, 4) && u1 < rat(1, 1), "{u1}");
    assert_eq!(r["certificate"]["tiebreak_id"], "lowest-index");
    assert_eq!(r["strategy_table"]["complete"], true);
}

#[test]
fn solve_cut_and_choose_with_audit() {
    let sb = Sandbox::new();
    sb.cmd(&["generate", "--protocol", "cc", "-o", "cc.gcc"]);
    let u = sb.uniform(2);
    let out = sb.cmd(&["solve", "cc.gcc", "--profile", s(&u), "--eps", "1/4", "--audit", "-o", "cert.json"]);
    assert!(out.status.success() && out.stdout.is_empty());
    let cert: Value = serde_json::from_str(&std::fs::read_to_string(sb.path("cert.json")).unwrap()).unwrap();
    assert_schema("solve_report", &cert);
    for a in cert["regret"]["per_agent"].as_array().unwrap() {
        assert!(q(&a["max_gain"]) <= rat(1, 4));
    }

    // The certificate's table replays through `run`.
    let run = sb.ok(&["run", "cc.gcc", "--profile", s(&u), "--strategies", "cert.json"]);
    let want: Vec<Rational> = cert["certificate"]["utilities"].as_array().unwrap().iter().map(q).collect();
    assert_eq!(utilities(&run), want);
}

#[test]
fn solve_choose_only_program() {
    let sb = Sandbox::new();
    let f = sb.write("triv.gcc", "agents 1;\nchoose 1 from {[0,1]} as c;\n");
    let u = sb.uniform(1);
    let r = sb.ok(&["solve", s(&f), "--profile", s(&u), "--eps", "1/4", "--audit"]);
    assert_schema("solve_report", &r);
    assert_eq!(r["certificate"]["utilities"][0], "1");
    assert_eq!(r["regret"]["max_gain"], "0");
}

#[test]
fn solve_budget_exceeded_reports_estimate() {
    let sb = Sandbox::new();
    let f = sb.write("alg1.gcc", ALGORITHM_1);
    let u = sb.uniform(1);
    let out = sb.cmd(&["solve", s(&f), "--profile", s(&u), "--eps", "1/4", "--budget", "10"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("estimate"), "{err}");
}

fn strip_time(mut v: Value) -> Value {
    v.as_object_mut().unwrap().remove("wall_time_ms");
    v
}

#[test]
fn reports_are_deterministic_across_thread_counts() {
    let sb = Sandbox::new();
    sb.cmd(&["generate", "--protocol", "ds", "--n", "2", "-o", "ds.gcc"]);
    sb.cmd(&["generate", "--random-profile", "--n", "2", "--seed", "9", "-o", "p.json"]);
    let args = ["solve", "ds.gcc", "--profile", "p.json", "--eps", "1/2", "--audit"];
    let one = strip_time(sb.ok(&args));
    let again = strip_time(sb.ok(&args));
    assert_eq!(one, again);
    let mut four = args.to_vec();
    four.extend(["--threads", "4"]);
    assert_eq!(one, strip_time(sb.ok(&four)));
}

#[test]
fn random_profiles_depend_only_on_seed() {
    let sb = Sandbox::new();
    sb.cmd(&["generate", "--random-profile", "--n", "3", "--seed", "7", "-o", "a.json"]);
    sb.cmd(&["generate", "--random-profile", "--n", "3", "--seed", "7", "-o", "b.json"]);
    sb.cmd(&["generate", "--random-profile", "--n", "3", "--seed", "8", "-o", "c.json"]);
    let read = |n: &str| std::fs::read_to_string(sb.path(n)).unwrap();
    assert_eq!(read("a.json"), read("b.json"));
    assert_ne!(read("a.json"), read("c.json"));
    assert_schema("profile", &serde_json::from_str(&read("a.json")).unwrap());
}

#[test]
fn audit_flags_regret_above_eps() {
    let sb = Sandbox::new();
    sb.cmd(&["generate", "--protocol", "cc", "-o", "cc.gcc"]);
    sb.cmd(&["generate", "--random-profile", "--n", "2", "--seed", "3", "-o", "p.json"]);
    let out = sb.cmd(&["audit", "cc.gcc", "--profile", "p.json", "--honest", "--eps", "1/100"]);
    assert_eq!(out.status.code(), Some(1));
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_schema("audit_report", &r);
    assert!(q(&r["regret"]["max_gain"]) > rat(1, 100));

    let r = sb.ok(&["audit", "cc.gcc", "--profile", "p.json", "--honest", "--eps", "1/2", "--depth", "1"]);
    assert!(r["regret"]["audited_nodes"].as_u64().unwrap() > 1);
}

#[test]
fn audit_thieves_on_zero_envy_target() {
    let sb = Sandbox::new();
    sb.cmd(&["generate", "--protocol", "thieves", "--n", "2", "-o", "th.gcc"]);
    let u = sb.uniform(2);
    let r = sb.ok(&["audit", "th.gcc", "--profile", s(&u), "--honest", "--eps", "0", "--grid", "64"]);
    assert_eq!(r["regret"]["max_gain"], "0");
    assert_eq!(r["fairness"]["flags"]["envy_free"], true);
}

#[test]
fn replayed_trace_gives_same_outcome() {
    let sb = Sandbox::new();
    sb.cmd(&["generate", "--protocol", "sc", "--n", "3", "-o", "sc.gcc"]);
    sb.cmd(&["generate", "--random-profile", "--n", "3", "--seed", "2", "-o", "p.json"]);
    let run = sb.ok(&["run", "sc.gcc", "--profile", "p.json", "--honest"]);
    assert_eq!(run["fairness"]["flags"]["envy_free"], true);
    sb.write("trace.json", &run["trace"].to_string());
    let replay = sb.ok(&["run", "sc.gcc", "--profile", "p.json", "--replay", "trace.json"]);
    assert_eq!(replay["outcome"], run["outcome"]);
    let audit = sb.ok(&["audit", "sc.gcc", "--profile", "p.json", "--replay", "trace.json"]);
    assert_schema("audit_report", &audit);
    assert_eq!(audit["outcome"], run["outcome"]);
    assert!(audit.get("regret").is_none());
}

#[test]
fn honest_rejects_edited_programs() {
    let sb = Sandbox::new();
    sb.cmd(&["generate", "--protocol", "cc", "-o", "cc.gcc"]);
    let text = std::fs::read_to_string(sb.path("cc.gcc")).unwrap();
    sb.write("cc.gcc", &text.replace("choose 2", "choose 1"));
    let u = sb.uniform(2);
    assert_eq!(sb.cmd(&["run", "cc.gcc", "--profile", s(&u), "--honest"]).status.code(), Some(1));

    let plain = sb.write("plain.gcc", &text.lines().skip(1).collect::<Vec<_>>().join("\n"));
    assert_eq!(sb.cmd(&["run", s(&plain), "--profile", s(&u), "--honest"]).status.code(), Some(2));
}

#[test]
fn usage_errors_exit_2() {
    let sb = Sandbox::new();
    assert_eq!(sb.cmd(&["generate", "--protocol", "nope", "-o", "x.gcc"]).status.code(), Some(2));
    assert_eq!(sb.cmd(&["generate", "--protocol", "cc", "--n", "3", "-o", "x.gcc"]).status.code(), Some(2));
    assert_eq!(sb.cmd(&["solve"]).status.code(), Some(2));
    sb.cmd(&["generate", "--protocol", "cc", "-o", "cc.gcc"]);
    let u = sb.uniform(2);
    assert_eq!(sb.cmd(&["run", "cc.gcc", "--profile", s(&u)]).status.code(), Some(2));
    assert_eq!(sb.cmd(&["solve", "cc.gcc", "--profile", s(&u), "--eps", "0"]).status.code(), Some(2));
}

#[test]
fn inputs_are_hashed() {
    let sb = Sandbox::new();
    sb.cmd(&["generate", "--protocol", "cc", "-o", "cc.gcc"]);
    let u = sb.uniform(2);
    let r = sb.ok(&["run", "cc.gcc", "--profile", s(&u), "--honest"]);
    let h = r["inputs"]["program"]["sha256"].as_str().unwrap();
    assert_eq!(h.len(), 64);
    let again = sb.ok(&["run", "cc.gcc", "--profile", s(&u), "--honest"]);
    assert_eq!(strip_time(r.clone()), strip_time(again));
}
