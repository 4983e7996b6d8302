use super::*;
use crate::rational::rat;
use crate::valuation::{Interval, Piece, PiecewiseDensity, ValuationProfile};

fn pieces(bounds: &[(i64, i64, i64, i64)]) -> Vec<Piece> {
    bounds
        .iter()
        .map(|&(a, b, c, d)| Piece::single(Interval::new(rat(a, b), rat(c, d)).unwrap()))
        .collect()
}

fn skewed_vs_uniform() -> ValuationProfile {
    ValuationProfile::new(vec![PiecewiseDensity::from_weights(&[3, 1]).unwrap(), PiecewiseDensity::uniform()]).unwrap()
}

#[test]
fn fairness_of_even_split() {
    let r = check_fairness(&pieces(&[(0, 1, 1, 2), (1, 2, 1, 1)]), &ValuationProfile::uniform(2), &rat(0, 1));
    assert!(r.proportional_margin.iter().all(|m| *m == rat(0, 1)));
    assert!(r.envy_matrix.iter().flatten().all(|e| *e <= rat(0, 1)));
    assert!(r.proportional && r.eps_proportional && r.envy_free && r.eps_envy_free);
}

#[test]
fn fairness_of_uneven_thirds() {
    let r = check_fairness(
        &pieces(&[(0, 1, 1, 2), (1, 2, 3, 4), (3, 4, 1, 1)]),
        &ValuationProfile::uniform(3),
        &rat(1, 4),
    );
    assert_eq!(r.envy_matrix[1][0], rat(1, 4));
    assert!(!r.envy_free);
    assert!(!r.proportional);
    assert_eq!(r.proportional_margin[1], rat(-1, 12));
    assert_eq!(r.proportional_margin[2], rat(-1, 12));
    assert_eq!(r.max_envy(), rat(1, 4));
}

#[test]
fn eps_proportional_boundary() {
    // Agent 1 holds exactly 1/3 - 1/4 = 1/12, which meets the bound.
    let r = check_fairness(
        &pieces(&[(0, 1, 1, 12), (1, 12, 1, 2), (1, 2, 1, 1)]),
        &ValuationProfile::uniform(3),
        &rat(1, 4),
    );
    assert_eq!(r.proportional_margin[0], rat(1, 12) - rat(1, 3));
    assert!(r.eps_proportional);
    assert!(!r.proportional);
    let r = check_fairness(
        &pieces(&[(0, 1, 1, 13), (1, 13, 1, 2), (1, 2, 1, 1)]),
        &ValuationProfile::uniform(3),
        &rat(1, 4),
    );
    assert!(!r.eps_proportional);
}

#[test]
fn ef_search_uniform_pair() {
    for res in [2, 4, 10, 24] {
        let found = find_envy_free_contiguous(&ValuationProfile::uniform(2), res, None).unwrap();
        assert_eq!(found.cuts, vec![rat(1, 2)]);
        assert!(found.envy_free());
    }
}

#[test]
fn ef_search_skewed_pair() {
    let found = find_envy_free_contiguous(&skewed_vs_uniform(), 12, Some(rat(0, 1))).unwrap();
    assert_eq!(found.cuts, vec![rat(1, 3)]);
    assert_eq!(found.allocation.pieces[0], Interval::new(rat(0, 1), rat(1, 3)).unwrap());
    assert_eq!(found.allocation.pieces[1], Interval::new(rat(1, 3), rat(1, 1)).unwrap());
}

#[test]
fn ef_search_uniform_thirds() {
    let found = find_envy_free_contiguous(&ValuationProfile::uniform(3), 12, None).unwrap();
    assert_eq!(found.cuts, vec![rat(1, 3), rat(2, 3)]);
    assert_eq!(found.max_envy, rat(0, 1));
}

#[test]
fn ef_search_reports_infeasible_bound() {
    // Odd resolution cannot split a uniform cake evenly.
    let err = find_envy_free_contiguous(&ValuationProfile::uniform(2), 3, Some(rat(0, 1))).unwrap_err();
    assert!(matches!(err, AuditError::InfeasibleResolution { .. }));
    let found = find_envy_free_contiguous(&ValuationProfile::uniform(2), 3, Some(rat(1, 3))).unwrap();
    assert_eq!(found.max_envy, rat(1, 3));
}

#[test]
fn ef_search_rejects_large_n() {
    assert!(find_envy_free_contiguous(&ValuationProfile::uniform(4), 8, None).is_err());
}
