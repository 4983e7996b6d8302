//! Python bindings. Rationals cross the boundary as `fractions.Fraction`
//! (anything whose `str()` is `p/q` or an integer is accepted as input) and
//! reports come back as plain dicts.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use rand::SeedableRng;

use cutchoose::auditor::{self, DeviationGrids, SubtreeAudit};
use cutchoose::dsl::{self, CompiledProgram, ProtocolProgram};
use cutchoose::engine::{self, Action, DecisionNode, NodeKind, Strategy, StrategyTable};
use cutchoose::protocols::{self, GeneratedProtocol, ProtocolKind};
use cutchoose::rational::fmt_rational;
use cutchoose::solver::{self, SolveOptions, DEFAULT_BUDGET};
use cutchoose::{parse_rational, Interval, Piece, Rational, ValuationProfile};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn to_rational(x: &Bound<'_, PyAny>) -> PyResult<Rational> {
    parse_rational(&x.str()?.to_cow()?).map_err(value_err)
}

fn fraction<'py>(py: Python<'py>, r: &Rational) -> PyResult<Bound<'py, PyAny>> {
    py.import("fractions")?.getattr("Fraction")?.call1((fmt_rational(r),))
}

fn to_py<'py>(py: Python<'py>, v: &serde_json::Value) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (v.to_string(),))
}

/// Valuation profile: one piecewise-constant density per agent.
#[pyclass(name = "Profile", module = "cutchoose_py", frozen)]
struct PyProfile {
    inner: ValuationProfile,
}

#[pymethods]
impl PyProfile {
    #[staticmethod]
    fn uniform(n: usize) -> Self {
        PyProfile { inner: ValuationProfile::uniform(n) }
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyProfile { inner: ValuationProfile::from_json(text).map_err(value_err)? })
    }

    #[staticmethod]
    #[pyo3(signature = (n, seed=0))]
    fn random(n: usize, seed: u64) -> Self {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        PyProfile { inner: ValuationProfile::random(n, &mut rng) }
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    /// Value agent `agent` (1-based) puts on `[lo, hi]`.
    fn eval<'py>(
        &self,
        py: Python<'py>,
        agent: usize,
        lo: &Bound<'py, PyAny>,
        hi: &Bound<'py, PyAny>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let d = self.density(agent)?;
        let iv = Interval::new(to_rational(lo)?, to_rational(hi)?).map_err(value_err)?;
        fraction(py, &d.eval(&iv))
    }

    /// Leftmost `y` with value `alpha` on `[x, y]` for agent `agent`.
    fn mark<'py>(
        &self,
        py: Python<'py>,
        agent: usize,
        x: &Bound<'py, PyAny>,
        alpha: &Bound<'py, PyAny>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let d = self.density(agent)?;
        fraction(py, &d.mark(&to_rational(x)?, &to_rational(alpha)?).map_err(value_err)?)
    }

    fn __repr__(&self) -> String {
        format!("Profile(n={})", self.inner.n())
    }
}

impl PyProfile {
    fn density(&self, agent: usize) -> PyResult<&cutchoose::PiecewiseDensity> {
        if agent == 0 || agent > self.inner.n() {
            return Err(value_err(format!("agent {agent} out of range 1..{}", self.inner.n())));
        }
        Ok(self.inner.agent(agent))
    }
}

/// A parsed and validated protocol.
#[pyclass(name = "Program", module = "cutchoose_py", frozen)]
struct PyProgram {
    ast: ProtocolProgram,
    compiled: CompiledProgram,
}

#[pymethods]
impl PyProgram {
    #[new]
    fn new(text: &str) -> PyResult<Self> {
        let ast = dsl::parse(text).map_err(value_err)?;
        let compiled = CompiledProgram::new(&ast).map_err(|vs| {
            value_err(vs.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("\n"))
        })?;
        Ok(PyProgram { ast, compiled })
    }

    #[getter]
    fn n_agents(&self) -> usize {
        self.compiled.n_agents
    }

    /// `(operations, cuts)` on the longest path.
    fn count_operations(&self) -> (usize, usize) {
        dsl::count_operations(&self.ast)
    }

    fn is_oblivious(&self) -> bool {
        dsl::is_oblivious(&self.ast)
    }

    /// Plays the program; `strategies` holds one callable per agent, each
    /// taking a node dict and returning a cut point or an option index.
    #[pyo3(signature = (profile, strategies, eps=None))]
    fn run<'py>(
        &self,
        py: Python<'py>,
        profile: &PyProfile,
        strategies: Vec<Py<PyAny>>,
        eps: Option<&Bound<'py, PyAny>>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let wrapped: Vec<Callback> = strategies.into_iter().map(Callback).collect();
        let refs: Vec<&dyn Strategy> = wrapped.iter().map(|s| s as &dyn Strategy).collect();
        let eps = eps.map(to_rational).transpose()?.unwrap_or_default();
        let run = py.detach(|| engine::run(&self.compiled, &profile.inner, &refs)).map_err(runtime_err)?;
        run_report(py, &run, &profile.inner, &eps)
    }

    /// Approximate subgame-perfect equilibrium on grids for `eps`.
    #[pyo3(signature = (profile, eps, budget=None, audit=false))]
    fn solve<'py>(
        &self,
        py: Python<'py>,
        profile: &PyProfile,
        eps: &Bound<'py, PyAny>,
        budget: Option<u128>,
        audit: bool,
    ) -> PyResult<Bound<'py, PyAny>> {
        let eps = to_rational(eps)?;
        let opts = SolveOptions { budget: budget.unwrap_or(DEFAULT_BUDGET), ..Default::default() };
        let compiled = &self.compiled;
        let inner = &profile.inner;
        let out = py.detach(|| -> Result<serde_json::Value, String> {
            let sol = solver::solve(compiled, inner, &eps, &opts).map_err(|e| e.to_string())?;
            let mut doc = serde_json::json!({
                "certificate": sol.certificate.to_json(),
                "table_size": sol.profile.len(),
            });
            let s = sol.profile.strategies();
            let s: Vec<&dyn Strategy> = s.iter().map(|x| x as &dyn Strategy).collect();
            let run = engine::run(compiled, inner, &s).map_err(|e| e.to_string())?;
            doc["outcome"] = outcome_json(&run.outcome);
            if audit {
                let grids = DeviationGrids::refining(&sol.grids);
                let r = auditor::audit_regret(compiled, inner, &s, &grids, &SubtreeAudit::default())
                    .map_err(|e| e.to_string())?;
                doc["regret"] = r.to_json();
            }
            Ok(doc)
        });
        to_py(py, &out.map_err(runtime_err)?)
    }

    fn __str__(&self) -> String {
        self.ast.to_string()
    }
}

/// A builtin protocol together with its honest strategies.
#[pyclass(name = "Protocol", module = "cutchoose_py", frozen)]
struct PyProtocol {
    inner: GeneratedProtocol,
}

#[pymethods]
impl PyProtocol {
    /// `code` is one of cc, ds, ep, sc, thieves, orr.
    #[new]
    #[pyo3(signature = (code, n=2, eps=None))]
    fn new(code: &str, n: usize, eps: Option<&Bound<'_, PyAny>>) -> PyResult<Self> {
        let kind = ProtocolKind::from_code(code).ok_or_else(|| value_err(format!("unknown protocol {code}")))?;
        let eps = eps.map(to_rational).transpose()?;
        Ok(PyProtocol { inner: protocols::generate(kind, n, eps).map_err(value_err)? })
    }

    #[getter]
    fn name(&self) -> &str {
        &self.inner.name
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n
    }

    fn program(&self) -> PyProgram {
        PyProgram { ast: self.inner.program.clone(), compiled: self.inner.compiled.clone() }
    }

    /// Runs the honest strategies; fairness flags use the protocol's eps
    /// unless one is given.
    #[pyo3(signature = (profile, eps=None))]
    fn run_honest<'py>(
        &self,
        py: Python<'py>,
        profile: &PyProfile,
        eps: Option<&Bound<'py, PyAny>>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let eps = match eps {
            Some(e) => to_rational(e)?,
            None => self.inner.eps.clone().unwrap_or_default(),
        };
        let honest = self.inner.honest(&profile.inner).map_err(value_err)?;
        let refs: Vec<&dyn Strategy> = honest.iter().map(|b| b.as_ref()).collect();
        let run = engine::run(&self.inner.compiled, &profile.inner, &refs).map_err(runtime_err)?;
        run_report(py, &run, &profile.inner, &eps)
    }

    /// Honest on-path decisions as a strategy table dict.
    fn honest_table<'py>(&self, py: Python<'py>, profile: &PyProfile) -> PyResult<Bound<'py, PyAny>> {
        let honest = self.inner.honest(&profile.inner).map_err(value_err)?;
        let refs: Vec<&dyn Strategy> = honest.iter().map(|b| b.as_ref()).collect();
        let (table, _) = StrategyTable::record(&self.inner.compiled, &profile.inner, &refs).map_err(runtime_err)?;
        to_py(py, &table.to_json())
    }

    /// Best-response regret of the honest strategies on a uniform
    /// deviation grid with `grid + 1` points.
    #[pyo3(signature = (profile, grid=64, depth=0))]
    fn audit_honest<'py>(
        &self,
        py: Python<'py>,
        profile: &PyProfile,
        grid: usize,
        depth: usize,
    ) -> PyResult<Bound<'py, PyAny>> {
        let honest = self.inner.honest(&profile.inner).map_err(value_err)?;
        let refs: Vec<&dyn Strategy> = honest.iter().map(|b| b.as_ref()).collect();
        let opts = SubtreeAudit { depth, ..SubtreeAudit::default() };
        let r = auditor::audit_regret(&self.inner.compiled, &profile.inner, &refs, &DeviationGrids::uniform(grid), &opts)
            .map_err(runtime_err)?;
        to_py(py, &r.to_json())
    }

    fn __repr__(&self) -> String {
        format!("Protocol({:?}, n={})", self.inner.name, self.inner.n)
    }
}

/// Fairness of an allocation given as one list of `(lo, hi)` pairs per agent.
#[pyfunction]
#[pyo3(signature = (allocation, profile, eps=None))]
fn check_fairness<'py>(
    py: Python<'py>,
    allocation: Vec<Vec<(Bound<'py, PyAny>, Bound<'py, PyAny>)>>,
    profile: &PyProfile,
    eps: Option<&Bound<'py, PyAny>>,
) -> PyResult<Bound<'py, PyAny>> {
    let mut pieces = Vec::new();
    for agent in &allocation {
        let ivs = agent
            .iter()
            .map(|(lo, hi)| Interval::new(to_rational(lo)?, to_rational(hi)?).map_err(value_err))
            .collect::<PyResult<Vec<_>>>()?;
        pieces.push(Piece::new(ivs).map_err(value_err)?);
    }
    let eps = eps.map(to_rational).transpose()?.unwrap_or_default();
    to_py(py, &auditor::check_fairness(&pieces, &profile.inner, &eps).to_json())
}

/// Least-envy contiguous allocation with cuts on multiples of `1/resolution`.
#[pyfunction]
fn ef_search<'py>(py: Python<'py>, profile: &PyProfile, resolution: usize) -> PyResult<Bound<'py, PyAny>> {
    let found = auditor::find_envy_free_contiguous(&profile.inner, resolution, None).map_err(value_err)?;
    to_py(py, &found.to_json())
}

/// Problems with a protocol text, one string each; empty when valid.
#[pyfunction]
fn validate(text: &str) -> Vec<String> {
    match dsl::parse(text) {
        Ok(p) => dsl::validate(&p).iter().map(|v| v.to_string()).collect(),
        Err(e) => vec![e.to_string()],
    }
}

#[pyfunction]
fn version() -> &'static str {
    env!("CARGO_PKG_VERSION")
}

fn outcome_json(o: &engine::Outcome) -> serde_json::Value {
    let allocation: Vec<Vec<[String; 2]>> = o
        .allocation
        .iter()
        .map(|p| p.intervals().iter().map(|iv| [fmt_rational(iv.lo()), fmt_rational(iv.hi())]).collect())
        .collect();
    serde_json::json!({
        "allocation": allocation,
        "utilities": o.utilities.iter().map(fmt_rational).collect::<Vec<_>>(),
    })
}

fn run_report<'py>(
    py: Python<'py>,
    run: &engine::FinishedRun,
    profile: &ValuationProfile,
    eps: &Rational,
) -> PyResult<Bound<'py, PyAny>> {
    let fairness = auditor::check_fairness(&run.outcome.allocation, profile, eps);
    to_py(
        py,
        &serde_json::json!({
            "outcome": outcome_json(&run.outcome),
            "trace": engine::trace_to_json(&run.trace),
            "fairness": fairness.to_json(),
        }),
    )
}

/// A Python callable acting as a strategy.
struct Callback(Py<PyAny>);

impl Callback {
    fn node_dict<'py>(py: Python<'py>, node: &DecisionNode<'_>) -> PyResult<Bound<'py, PyDict>> {
        let d = PyDict::new(py);
        d.set_item("agent", node.agent())?;
        d.set_item("label", node.label())?;
        d.set_item("key", node.key())?;
        let cuts = PyDict::new(py);
        for (label, x, _) in node.cuts() {
            cuts.set_item(label, fraction(py, x)?)?;
        }
        d.set_item("cuts", cuts)?;
        let ivs = |ivs: &[Interval]| -> PyResult<Vec<(Bound<'py, PyAny>, Bound<'py, PyAny>)>> {
            ivs.iter().map(|iv| Ok((fraction(py, iv.lo())?, fraction(py, iv.hi())?))).collect()
        };
        match &node.kind {
            NodeKind::Cut { feasible, .. } => {
                d.set_item("kind", "cut")?;
                d.set_item("feasible", ivs(feasible)?)?;
            }
            NodeKind::Choose { options, .. } => {
                d.set_item("kind", "choose")?;
                let opts = options.iter().map(|p| ivs(p.intervals())).collect::<PyResult<Vec<_>>>()?;
                d.set_item("options", opts)?;
            }
        }
        Ok(d)
    }
}

impl Strategy for Callback {
    fn act(&self, node: &DecisionNode<'_>) -> Result<Action, String> {
        Python::attach(|py| -> PyResult<Action> {
            let out = self.0.bind(py).call1((Self::node_dict(py, node)?,))?;
            Ok(match node.kind {
                NodeKind::Cut { .. } => Action::Cut(to_rational(&out)?),
                NodeKind::Choose { .. } => Action::Choose(out.extract()?),
            })
        })
        .map_err(|e| e.to_string())
    }
}

#[pymodule]
fn cutchoose_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyProfile>()?;
    m.add_class::<PyProgram>()?;
    m.add_class::<PyProtocol>()?;
    m.add_function(wrap_pyfunction!(check_fairness, m)?)?;
    m.add_function(wrap_pyfunction!(ef_search, m)?)?;
    m.add_function(wrap_pyfunction!(validate, m)?)?;
    m.add_function(wrap_pyfunction!(version, m)?)?;
    m.add("ALGORITHM_1", dsl::ALGORITHM_1)?;
    Ok(())
}
