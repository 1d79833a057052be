//! The demo's operations, exercised natively.

use memevo_core::evolution::MutationOp;
use memevo_core::genome::{validate, CellType};
use memevo_demo::{cell_response, parse_op, EvolutionSession, GenomeExplorer};

#[test]
fn cell_responses_are_bounded_and_reproducible() {
    for cell in CellType::ALL {
        let r = cell_response(cell, 80, 0.8, 3);
        assert_eq!(r.state.len(), 80);
        assert_eq!(r.params.len(), cell.param_count());
        assert!(r.state.iter().all(|s| s.is_finite() && s.abs() <= 1.0 + 1e-12), "{cell}");
        assert_eq!(r.state, cell_response(cell, 80, 0.8, 3).state);
        let unlooped = cell_response(cell, 80, 0.0, 3);
        assert_eq!(r.state[0], unlooped.state[0], "{cell}: the loop has nothing to feed back at the first step");
        assert_ne!(r.state[79], unlooped.state[79], "{cell}");
    }
}

#[test]
fn every_operator_name_parses_and_keeps_the_genome_valid() {
    let mut explorer = GenomeExplorer::new(3, 11).unwrap();
    for round in 0..40 {
        for op in MutationOp::ALL {
            let name = serde_json::to_value(op).unwrap();
            let parsed = parse_op(name.as_str().unwrap()).unwrap();
            assert_eq!(parsed, op);
            explorer.apply_op(op);
            assert!(validate(explorer.genome()).is_ok(), "round {round} after {op:?}");
        }
    }
    assert!(parse_op("grow_wings").is_err());
    assert!(explorer.dump().contains("output"));
}

#[test]
fn session_runs_to_its_budget() {
    let mut session = EvolutionSession::create(vec![CellType::Simple, CellType::Lstm], 16, 5).unwrap();
    let mut last = session.status();
    assert!(!last.done);
    while !last.done {
        let next = session.advance(3).unwrap();
        assert!(next.evaluated >= last.evaluated);
        if let (Some(a), Some(b)) = (last.best, next.best) {
            assert!(b <= a);
        }
        last = next;
    }
    assert_eq!(last.evaluated, 16);
    assert!(last.best.unwrap().is_finite());
    assert!(last.persistence > 0.0);
}
