use super::*;
use crate::dsl::{parse, ALGORITHM_1};
use crate::engine::{run, step, ExecutionState, Step, Strategy};
use crate::protocols::{cut_and_choose, dubins_spanier};
use crate::rational::rat;
use crate::valuation::PiecewiseDensity;

fn compile(text: &str) -> CompiledProgram {
    CompiledProgram::new(&parse(text).unwrap()).unwrap()
}

fn uniform_grids(n: usize, k: usize) -> GridFamily {
    build_grids(&ValuationProfile::uniform(n), &rat(1, 2), 4, k).unwrap()
}

#[test]
fn map_points_keeps_equal_points_together() {
    let g = uniform_grids(1, 3);
    let (a, b) = (rat(3, 10), rat(3, 10));
    let out = g.map_points(&[(&a, 1), (&b, 2)]);
    assert_eq!(out[0], out[1]);
    assert_eq!(g.finest()[out[0] as usize], rat(5, 16));
}

#[test]
fn map_points_squeezes_between_neighbours() {
    let g = uniform_grids(1, 3);
    // Three cuts inside one G_1 cell still get distinct ordered images.
    let (a, b, c) = (rat(1, 100), rat(2, 100), rat(3, 100));
    let out = g.map_points(&[(&a, 1), (&b, 2), (&c, 3)]);
    assert!(out[0] < out[1] && out[1] < out[2], "{out:?}");
    assert!(out[1] % g.stride(2) == 0 && out[2] % g.stride(3) == 0);
}

#[test]
fn key_string_matches_engine_keys_on_path() {
    let p = compile(ALGORITHM_1);
    let profile = ValuationProfile::uniform(1);
    let grids = uniform_grids(1, 3);
    let (table, _) = backward_induction(&p, &profile, &grids, TieBreak::LowestIndex).unwrap();
    let keys: Vec<String> = table.table().into_iter().map(|(k, _)| k).collect();
    let strategies = table.strategies();
    let run = run(&p, &profile, &[&strategies[0] as &dyn Strategy]).unwrap();
    let mut state = ExecutionState::new(&p).unwrap();
    for entry in &run.trace {
        let node = state.node(&p).unwrap().unwrap();
        if matches!(node.kind, crate::engine::NodeKind::Cut { .. }) {
            assert!(keys.contains(&node.key()), "missing {}", node.key());
        }
        match step(&state, &p, &profile, &entry.action()).unwrap() {
            Step::Next(s) => state = s,
            Step::Done(_) => break,
        }
    }
}

#[test]
fn solver_strategy_reproduces_grid_play() {
    let cc = cut_and_choose();
    let profile =
        ValuationProfile::new(vec![PiecewiseDensity::from_weights(&[3, 1]).unwrap(), PiecewiseDensity::uniform()]).unwrap();
    let sol = solve(&cc.compiled, &profile, &rat(1, 4), &SolveOptions::default()).unwrap();
    let s = sol.profile.strategies();
    let refs: Vec<&dyn Strategy> = s.iter().map(|x| x as &dyn Strategy).collect();
    let r = run(&cc.compiled, &profile, &refs).unwrap();
    assert_eq!(r.outcome.utilities, sol.certificate.utilities);
}

#[test]
fn lifted_strategy_handles_off_grid_history() {
    // Agent 1 cuts off the grid; agent 2's lifted choice still picks the
    // piece it prefers.
    let cc = cut_and_choose();
    let profile = ValuationProfile::uniform(2);
    let sol = solve(&cc.compiled, &profile, &rat(1, 4), &SolveOptions::default()).unwrap();
    let s = sol.profile.strategies();
    let cutter = |node: &crate::engine::DecisionNode<'_>| match node.kind {
        crate::engine::NodeKind::Cut { .. } => Ok(crate::engine::Action::Cut(rat(7, 10))),
        _ => Ok(crate::engine::Action::Choose(0)),
    };
    let r = run(&cc.compiled, &profile, &[&cutter as &dyn Strategy, &s[1]]).unwrap();
    assert_eq!(r.outcome.utilities[1], rat(7, 10));
}

#[test]
fn thread_split_is_deterministic() {
    let ds = dubins_spanier(2).unwrap();
    let profile = ValuationProfile::uniform(2);
    let one = solve(&ds.compiled, &profile, &rat(1, 2), &SolveOptions::default()).unwrap();
    let four = solve(&ds.compiled, &profile, &rat(1, 2), &SolveOptions { threads: 4, ..Default::default() }).unwrap();
    assert_eq!(one.certificate.utilities, four.certificate.utilities);
    assert_eq!(one.certificate.node_count, four.certificate.node_count);
    assert_eq!(one.profile.table(), four.profile.table());
}

#[test]
fn budget_is_enforced() {
    let ds = dubins_spanier(3).unwrap();
    let profile = ValuationProfile::uniform(3);
    let err = solve(&ds.compiled, &profile, &rat(1, 8), &SolveOptions { budget: 1000, ..Default::default() });
    assert!(matches!(err, Err(SolverError::BudgetExceeded { budget: 1000, .. })));
}

#[test]
fn too_few_grids_is_rejected() {
    let p = compile(ALGORITHM_1);
    let grids = uniform_grids(1, 2);
    let err = backward_induction(&p, &ValuationProfile::uniform(1), &grids, TieBreak::LowestIndex);
    assert!(matches!(err, Err(SolverError::CutOrdinalExceedsK { ordinal: 3, k: 2 })));
}
