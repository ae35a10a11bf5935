use twmc::discounted::{solve_discounted_simple, solve_discounted_td, DiscountedSpec};
use twmc::hitting::{solve_hitting_simple, solve_hitting_td};
use twmc::io::{parse_mc, parse_td, write_mc, write_td};
use twmc::meanpayoff::solve_mean_payoff;
use twmc::td::{replay_schedule, schedule, validate_td, Step};
use twmc::TargetSet;

const MC: &str = include_str!("fixtures/nine.mc");
const TD: &str = include_str!("fixtures/nine.td");

/// Hand-solved: x2 = (2·x2 + 3.5)/6, everything else follows.
const HIT: [f64; 9] = [23.0 / 24.0, 23.0 / 24.0, 7.0 / 8.0, 19.0 / 24.0, 1.0, 1.0, 0.5, 1.0, 0.0];

fn value_iteration_oracle(mc: &twmc::MarkovChain, lambda: f64) -> Vec<f64> {
    let n = mc.vertex_count();
    let mut v = vec![0.0; n];
    for _ in 0..2000 {
        v = (0..n).map(|u| mc.row(u).iter().map(|t| t.weight * (t.reward + lambda * v[t.dst])).sum()).collect();
    }
    v
}

#[test]
fn parses_and_validates() {
    let f = parse_mc(MC).unwrap();
    let td = parse_td(TD).unwrap();
    assert_eq!(f.mc.vertex_count(), 9);
    assert_eq!(f.mc.edge_count(), 16);
    assert_eq!(f.targets.as_deref(), Some(&[5][..]));
    assert_eq!(f.lambda, Some(0.9));
    assert_eq!(td.width(), 2);
    assert!(validate_td(9, &f.mc.skeleton(), &td).is_empty());
    assert_eq!(parse_mc(&write_mc(&f.mc, f.targets.as_deref(), f.lambda)).unwrap(), f);
    assert_eq!(parse_td(&write_td(&td)).unwrap(), td);
}

#[test]
fn trace_starts_with_vertex_then_bag() {
    let f = parse_mc(MC).unwrap();
    let td = parse_td(TD).unwrap();
    let s = schedule(&td, &[]).unwrap();
    // label 9 is id 8; bag 1 holds labels {7, 9}
    assert_eq!(s.steps[0], Step::EliminateVertex { vertex: 8, bag: 1 });
    assert_eq!(s.steps[1], Step::RemoveBag(1));
    assert!(replay_schedule(9, &f.mc.skeleton(), &td, &s, &[]).is_empty());
}

#[test]
fn hitting_matches_hand_solution() {
    let f = parse_mc(MC).unwrap();
    let td = parse_td(TD).unwrap();
    let t = TargetSet::single(5);
    let (a, sa) = solve_hitting_td(&f.mc, &t, &td).unwrap();
    let (b, _) = solve_hitting_simple(&f.mc, &t).unwrap();
    for u in 0..9 {
        assert!((a.prob[u] - HIT[u]).abs() < 1e-12, "td {u}: {}", a.prob[u]);
        assert!((b.prob[u] - HIT[u]).abs() < 1e-12, "simple {u}: {}", b.prob[u]);
    }
    assert_eq!(sa.lemma_violations, 0);
    assert!(sa.max_neighborhood <= 3);
}

#[test]
fn discounted_matches_iteration() {
    let f = parse_mc(MC).unwrap();
    let td = parse_td(TD).unwrap();
    let spec = DiscountedSpec::new(0.9).unwrap();
    let oracle = value_iteration_oracle(&f.mc, 0.9);
    let (a, _) = solve_discounted_td(&f.mc, spec, &td).unwrap();
    let (b, _) = solve_discounted_simple(&f.mc, spec).unwrap();
    assert_eq!(a.gadget_value, 1.0);
    for u in 0..9 {
        assert!((a.value[u] - oracle[u]).abs() < 1e-9, "td {u}");
        assert!((b.value[u] - oracle[u]).abs() < 1e-9, "simple {u}");
    }
    assert!((a.value[8] - 10.0).abs() < 1e-12);
}

#[test]
fn mean_payoff_is_absorbing_reward() {
    let f = parse_mc(MC).unwrap();
    let td = parse_td(TD).unwrap();
    let (r, _) = solve_mean_payoff(&f.mc, &td).unwrap();
    for u in 0..9 {
        assert!((r.value[u] - 1.0).abs() < 1e-12);
    }
}
