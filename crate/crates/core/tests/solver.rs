mod common;

use common::*;
use cutchoose::dsl::ALGORITHM_1;
use cutchoose::protocols::{cut_and_choose, dubins_spanier};
use cutchoose::solver::*;
use cutchoose::{rat, PiecewiseDensity, Rational, ValuationProfile};
use num_traits::{One, Zero};
use proptest::prelude::*;
use rand::Rng;

fn r(n: i64, d: i64) -> Rational {
    rat(n, d)
}

fn uniform_family() -> GridFamily {
    build_grids(&ValuationProfile::uniform(2), &r(1, 2), 4, 3).unwrap()
}

#[test]
fn uniform_grids_double() {
    let g = uniform_family();
    assert_eq!(g.threshold, r(1, 16));
    assert_eq!(g.sizes(), vec![17, 33, 65]);
    assert_eq!(g.grids[0], (0..=16).map(|k| r(k, 16)).collect::<Vec<_>>());
    assert_eq!(g.grids[2], (0..=64).map(|k| r(k, 64)).collect::<Vec<_>>());
}

#[test]
fn skewed_single_agent_grid() {
    let profile = ValuationProfile::new(vec![PiecewiseDensity::from_weights(&[3, 1]).unwrap()]).unwrap();
    let g = build_grids(&profile, &Rational::one(), 2, 1).unwrap();
    assert_eq!(g.threshold, r(1, 4));
    assert_eq!(g.grids[0], vec![r(0, 1), r(1, 6), r(1, 3), r(1, 2), r(1, 1)]);
}

#[test]
fn no_cuts_no_grids() {
    let g = build_grids(&ValuationProfile::uniform(2), &r(1, 2), 1, 0).unwrap();
    assert!(g.grids.is_empty());
    assert!(g.finest().is_empty());
}

#[test]
fn grid_errors() {
    let u = ValuationProfile::uniform(1);
    assert!(matches!(build_grids(&u, &Rational::zero(), 2, 1), Err(SolverError::DegenerateEps(_))));
    assert!(matches!(build_grids(&u, &r(-1, 2), 2, 1), Err(SolverError::DegenerateEps(_))));
    assert!(matches!(build_grids(&u, &r(1, 2), 0, 0), Err(SolverError::BadParameters(_))));
    assert!(matches!(build_grids(&u, &r(1, 2), 2, 3), Err(SolverError::BadParameters(_))));
}

#[test]
fn map_history_examples() {
    let g = uniform_family();
    assert_eq!(map_history(&[r(6, 25), r(13, 50)], &g), vec![r(1, 4), r(9, 32)]);
    assert_eq!(map_history(&[r(0, 1)], &g), vec![r(0, 1)]);
    assert_eq!(map_history(&[r(1, 1), r(0, 1)], &g), vec![r(1, 1), r(0, 1)]);
    let on_grid = vec![r(3, 16), r(5, 32), r(63, 64)];
    assert_eq!(map_history(&on_grid, &g), on_grid);
}

#[test]
fn algorithm_1_has_no_exact_optimum() {
    let p = compile(ALGORITHM_1);
    let u = ValuationProfile::uniform(1);
    let mut last = Rational::zero();
    for (den, want) in [(2, r(31, 32)), (4, r(63, 64))] {
        let sol = solve(&p, &u, &r(1, den), &SolveOptions::default()).unwrap();
        let got = sol.certificate.utilities[0].clone();
        assert_eq!(got, want);
        assert!(got >= Rational::one() - r(1, den) && got < Rational::one());
        assert!(got >= last);
        last = got;
        assert_eq!(sol.certificate.per_agent_regret_bound, vec![r(1, den)]);
    }
}

#[test]
fn algorithm_1_matches_enumeration() {
    let p = compile(ALGORITHM_1);
    let u = ValuationProfile::uniform(1);
    let g = uniform_family();
    let (table, cert) = backward_induction(&p, &u, &g, TieBreak::LowestIndex).unwrap();
    assert_eq!(cert.utilities, exhaustive(&p, &u, &g));
    // Leftmost tie-break: first cut at 0, the second at the first point
    // that leaves [y, 1] as the better piece.
    let root = table.table().into_iter().find(|(k, _)| k.starts_with("0#0")).unwrap();
    assert_eq!(root.1, TableAction::Cut(Rational::zero()));
}

#[test]
fn cut_and_choose_halves() {
    let cc = cut_and_choose();
    let u = ValuationProfile::uniform(2);
    let sol = solve(&cc.compiled, &u, &r(1, 4), &SolveOptions::default()).unwrap();
    assert_eq!(sol.grids.sizes(), vec![25]);
    assert_eq!(sol.certificate.utilities, vec![r(1, 2), r(1, 2)]);
    let root = sol.profile.table().into_iter().find(|(k, _)| k.starts_with("0#0")).unwrap();
    assert_eq!(root.1, TableAction::Cut(r(1, 2)));
    assert_eq!(sol.certificate.utilities, exhaustive(&cc.compiled, &u, &sol.grids));
}

#[test]
fn single_choose_takes_everything() {
    let p = compile("agents 1; choose 1 from {[0,1]} as c;");
    let u = ValuationProfile::uniform(1);
    let sol = solve(&p, &u, &r(1, 4), &SolveOptions::default()).unwrap();
    assert_eq!(sol.certificate.utilities, vec![Rational::one()]);
    assert!(sol.grids.grids.is_empty());
}

#[test]
fn tree_size_estimates() {
    let g = uniform_family();
    assert_eq!(estimate_tree_size(&compile(ALGORITHM_1), &g), 17 * 33 * 65 * 2);
    assert_eq!(estimate_tree_size(&compile("agents 1;"), &g), 1);
    assert!(estimate_tree_size(&cut_and_choose().compiled, &g) <= 17 * 2);
}

#[test]
fn certificate_json_fields() {
    let cc = cut_and_choose();
    let sol = solve(&cc.compiled, &ValuationProfile::uniform(2), &r(1, 2), &SolveOptions::default()).unwrap();
    let v = sol.certificate.to_json();
    for key in ["utilities", "per_agent_regret_bound", "grid_stats", "node_count", "tiebreak_id", "eps"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    assert_eq!(v["tiebreak_id"], "lowest-index");
    assert_eq!(v["utilities"][0], "1/2");
}

#[test]
fn choose_any_matches_enumeration() {
    let p = compile(
        "agents 2;
         cut 1 in {[0,1]} as a;
         cut 2 in {[0,1]} as b;
         choose 2 any as p1;
         choose 1 any as p2;
         choose 2 any as p3;",
    );
    let profile = ValuationProfile::new(vec![
        PiecewiseDensity::from_weights(&[1, 3]).unwrap(),
        PiecewiseDensity::from_weights(&[2, 1, 1]).unwrap(),
    ])
    .unwrap();
    let g = grids_from(vec![r(0, 1), r(1, 3), r(1, 1)], 2);
    let (_, cert) = backward_induction(&p, &profile, &g, TieBreak::LowestIndex).unwrap();
    assert_eq!(cert.utilities, exhaustive(&p, &profile, &g));
}

#[test]
fn dubins_spanier_two_matches_enumeration() {
    let ds = dubins_spanier(2).unwrap();
    let mut rng = seeded(7);
    for _ in 0..3 {
        let profile = ValuationProfile::random(2, &mut rng);
        let g = grids_from(vec![r(0, 1), r(1, 4), r(2, 3), r(1, 1)], 2);
        let (_, cert) = backward_induction(&ds.compiled, &profile, &g, TieBreak::LowestIndex).unwrap();
        assert_eq!(cert.utilities, exhaustive(&ds.compiled, &profile, &g));
    }
}

fn small_g1<R: Rng>(rng: &mut R) -> Vec<Rational> {
    let mut g = vec![Rational::zero()];
    if rng.gen_bool(0.7) {
        g.push(r(rng.gen_range(1..8), 8));
    }
    g.push(Rational::one());
    g
}

/// Sign pattern of every ordered pair.
fn pattern(xs: &[Rational]) -> Vec<std::cmp::Ordering> {
    let mut out = Vec::new();
    for a in xs {
        for b in xs {
            out.push(a.cmp(b));
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn grid_invariants(seed in any::<u64>(), den in 1i64..6, f_n in 1usize..5, k in 0usize..4) {
        prop_assume!(k <= f_n);
        let profile = ValuationProfile::random(rand::thread_rng().gen_range(1..4), &mut seeded(seed));
        let g = build_grids(&profile, &r(1, den), f_n, k).unwrap();
        prop_assert_eq!(g.grids.len(), k);
        prop_assert_eq!(&g.threshold, &(r(1, den) / Rational::from_integer((2 * f_n as i64).into())));
        for (i, grid) in g.grids.iter().enumerate() {
            prop_assert!(grid.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(grid[0].is_zero() && grid.last().unwrap().is_one());
            for w in grid.windows(2) {
                let iv = cutchoose::Interval::new(w[0].clone(), w[1].clone()).unwrap();
                for d in profile.agents() {
                    prop_assert!(d.eval(&iv) <= g.threshold);
                }
            }
            if i > 0 {
                let prev = &g.grids[i - 1];
                prop_assert!(prev.iter().all(|x| grid.binary_search(x).is_ok()));
                for w in prev.windows(2) {
                    let inside = grid.iter().filter(|x| &w[0] < *x && *x < &w[1]).count();
                    prop_assert_eq!(inside, 1);
                }
            }
        }
    }

    #[test]
    fn map_history_preserves_order(seed in any::<u64>(), len in 1usize..5) {
        let mut rng = seeded(seed);
        let profile = ValuationProfile::random(2, &mut rng);
        let g = build_grids(&profile, &r(1, 2), 4, 4).unwrap();
        let mut cuts: Vec<Rational> = Vec::new();
        for _ in 0..len {
            let x = match rng.gen_range(0..6) {
                0 => Rational::zero(),
                1 => Rational::one(),
                2 if !cuts.is_empty() => cuts[rng.gen_range(0..cuts.len())].clone(),
                _ => r(rng.gen_range(0..=40), 40),
            };
            cuts.push(x);
        }
        let m = map_history(&cuts, &g);
        prop_assert_eq!(pattern(&cuts), pattern(&m));
        for (x, y) in cuts.iter().zip(&m) {
            prop_assert_eq!(x.is_zero(), y.is_zero());
            prop_assert_eq!(x.is_one(), y.is_one());
            prop_assert!(g.grids[cuts.iter().position(|c| std::ptr::eq(c, x)).unwrap()].binary_search(y).is_ok());
            // One cell of G_1 on either side at worst.
            let iv = cutchoose::Interval::spanning(x.clone(), y.clone()).unwrap();
            for d in profile.agents() {
                prop_assert!(d.eval(&iv) <= &g.threshold * Rational::from_integer(2.into()));
            }
        }
        prop_assert_eq!(map_history(&m, &g), m.clone());
        // A lone cut lands in its own cell.
        let single = map_history(&cuts[..1], &g);
        let iv = cutchoose::Interval::spanning(cuts[0].clone(), single[0].clone()).unwrap();
        for d in profile.agents() {
            prop_assert!(d.eval(&iv) <= g.threshold);
        }
    }

    #[test]
    fn backward_induction_equals_enumeration(seed in any::<u64>()) {
        let mut rng = seeded(seed);
        let n = rng.gen_range(1..=2);
        let program = random_program(&mut rng, n, 3);
        let compiled = cutchoose::dsl::CompiledProgram::new(&program).unwrap();
        let profile = ValuationProfile::random(n, &mut rng);
        let g = grids_from(small_g1(&mut rng), compiled.max_cuts);
        prop_assert!(g.grids.iter().all(|x| x.len() <= 9));
        let (_, cert) = backward_induction(&compiled, &profile, &g, TieBreak::LowestIndex).unwrap();
        prop_assert_eq!(cert.utilities, exhaustive(&compiled, &profile, &g), "{}", program);
    }
}
