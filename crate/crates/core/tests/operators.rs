//! Statistical and structural checks of the mutation and crossover operators.

mod common;

use std::collections::HashSet;

use memevo_core::evolution::{
    add_edge, add_node_at, crossover_with, degree_stats, enable_edge, merge_node, mutate, split_edge, split_node,
    MutationOp, OperatorConfig, OperatorError,
};
use memevo_core::genome::{reachable_set, seed_genome, validate, InnovationRegistry, NodeKind, RnnGenome};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn enabled_weights(g: &RnnGenome) -> Vec<f64> {
    g.edges
        .iter()
        .filter(|e| e.enabled)
        .map(|e| e.weight)
        .chain(g.recurrent_edges.iter().filter(|e| e.enabled).map(|e| e.weight))
        .collect()
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (mean, xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n)
}

#[test]
fn enable_edge_picks_uniformly_among_disabled() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut registry = InnovationRegistry::default();
    let mut parent = seed_genome(4, 1, &mut registry, &mut rng).unwrap();
    for e in &mut parent.edges[..3] {
        e.enabled = false;
    }
    let config = OperatorConfig::default();
    let trials = 10_000;
    let mut counts = [0usize; 3];
    for _ in 0..trials {
        let child = enable_edge(&parent, &config, &mut rng).unwrap();
        let now_on: Vec<usize> = (0..3).filter(|&i| child.edges[i].enabled).collect();
        assert_eq!(now_on.len(), 1);
        counts[now_on[0]] += 1;
    }
    let expected = trials as f64 / 3.0;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    // 99.9th percentile of chi-squared with two degrees of freedom.
    assert!(chi2 < 13.82, "counts {counts:?}, chi2 {chi2}");
}

#[test]
fn repeated_splits_add_one_node_each() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut registry = InnovationRegistry::default();
    let mut g = seed_genome(3, 1, &mut registry, &mut rng).unwrap();
    let config = OperatorConfig::default();
    for _ in 0..200 {
        let before = g.nodes.len();
        g = split_edge(&g, &mut registry, &config, &mut rng).unwrap();
        assert_eq!(g.nodes.len(), before + 1);
        validate(&g).unwrap();
    }
}

#[test]
fn new_edge_weights_follow_parent_moments() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut registry = InnovationRegistry::default();
    let mut parent = seed_genome(6, 1, &mut registry, &mut rng).unwrap();
    let config = OperatorConfig::default();
    for _ in 0..4 {
        parent = split_edge(&parent, &mut registry, &config, &mut rng).unwrap();
    }
    for (i, e) in parent.edges.iter_mut().enumerate() {
        e.weight = 0.3 + 0.1 * (i as f64 - 4.0);
    }
    let (mu, var) = mean_var(&enabled_weights(&parent));
    let old: HashSet<u32> = parent.edges.iter().map(|e| e.innovation_id).collect();
    let mut drawn = Vec::new();
    while drawn.len() < 10_000 {
        if let Ok(child) = add_edge(&parent, &mut registry, &config, &mut rng) {
            let added = child.edges.iter().find(|e| !old.contains(&e.innovation_id)).expect("one new edge");
            drawn.push(added.weight);
        }
    }
    let (m, v) = mean_var(&drawn);
    let se = (var / drawn.len() as f64).sqrt();
    assert!((m - mu).abs() < 4.0 * se, "mean {m} vs parent {mu}");
    assert!((v / var - 1.0).abs() < 0.06, "variance {v} vs parent {var}");
}

/// Probability mass of a normal on `[a, b]`, by Simpson's rule on the density.
fn normal_mass(mean: f64, sd: f64, a: f64, b: f64) -> f64 {
    let pdf = |x: f64| (-(x - mean).powi(2) / (2.0 * sd * sd)).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt());
    let steps = 2000;
    let h = (b - a) / steps as f64;
    let mut sum = pdf(a) + pdf(b);
    for k in 1..steps {
        sum += pdf(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    sum * h / 3.0
}

/// Mean of `clamp(round(X), lo, hi)` for `X ~ Normal(mean, var)`.
fn clamped_rounded_mean((mean, var): (f64, f64), lo: usize, hi: usize) -> f64 {
    let sd = var.sqrt();
    let far = mean.abs() + 12.0 * sd + 1.0;
    (lo..=hi)
        .map(|k| {
            let a = if k == lo { -far } else { k as f64 - 0.5 };
            let b = if k == hi { far } else { k as f64 + 0.5 };
            k as f64 * normal_mass(mean, sd, a, b)
        })
        .sum()
}

#[test]
fn added_node_degrees_track_parent_degrees() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut registry = InnovationRegistry::default();
    let config = OperatorConfig::default();
    let mut parent = seed_genome(8, 3, &mut registry, &mut rng).unwrap();
    for _ in 0..6 {
        parent = split_edge(&parent, &mut registry, &config, &mut rng).unwrap();
    }
    let [in_stats, out_stats, _] = degree_stats(&parent);
    let lower = parent.nodes.iter().filter(|n| n.enabled && n.depth < 0.45).count();
    let upper = parent.nodes.iter().filter(|n| n.enabled && n.depth > 0.45).count();

    let known: HashSet<u32> = parent.nodes.iter().map(|n| n.innovation_id).collect();
    let (mut fan_in, mut fan_out) = (Vec::new(), Vec::new());
    for _ in 0..10_000 {
        let child = add_node_at(&parent, 0.45, &mut registry, &config, &mut rng).unwrap();
        let id = child.nodes.iter().find(|n| !known.contains(&n.innovation_id)).unwrap().innovation_id;
        fan_in.push(child.edges.iter().filter(|e| e.target == id).count() as f64);
        fan_out.push(child.edges.iter().filter(|e| e.source == id).count() as f64);
    }
    let (m_in, v_in) = mean_var(&fan_in);
    let (m_out, v_out) = mean_var(&fan_out);
    let want_in = clamped_rounded_mean(in_stats, 1, lower);
    let want_out = clamped_rounded_mean(out_stats, 1, upper);
    let tol = |v: f64| 5.0 * (v / 1e4).sqrt() + 1e-3;
    assert!((m_in - want_in).abs() < tol(v_in), "in-degree {m_in} vs {want_in}");
    assert!((m_out - want_out).abs() < tol(v_out), "out-degree {m_out} vs {want_out}");
}

#[test]
fn splits_and_merges_stay_valid() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let mut registry = InnovationRegistry::default();
    let config = OperatorConfig::default();
    let pool = common::mutated_pool(&mut rng, &mut registry, 4, 40, 25);
    let (mut split_ok, mut merge_ok) = (0, 0);
    for i in 0..10_000 {
        let parent = &pool[i % pool.len()];
        match split_node(parent, &mut registry, &config, &mut rng) {
            Ok(child) => {
                validate(&child).unwrap();
                split_ok += 1;
            }
            Err(OperatorError::NotApplicable(_) | OperatorError::Discarded(_)) => {}
        }
        match merge_node(parent, &mut registry, &config, &mut rng) {
            Ok(child) => {
                validate(&child).unwrap();
                merge_ok += 1;
            }
            Err(OperatorError::NotApplicable(_) | OperatorError::Discarded(_)) => {}
        }
    }
    assert!(split_ok > 1000 && merge_ok > 1000, "split {split_ok}, merge {merge_ok}");
}

#[test]
fn every_operator_yields_valid_children() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let mut registry = InnovationRegistry::default();
    let config = OperatorConfig::default();
    let pool = common::mutated_pool(&mut rng, &mut registry, 3, 30, 30);
    for op in MutationOp::ALL {
        for parent in &pool {
            for _ in 0..50 {
                if let Ok(child) = mutate(op, parent, &mut registry, &config, &mut rng) {
                    assert!(validate(&child).is_ok(), "{op:?} produced an invalid child");
                }
            }
        }
    }
}

/// Builds a parent whose hidden nodes hang off the shared seed through
/// splits only, so two parents grown apart share nothing but the seed.
fn split_parent(seed: &RnnGenome, registry: &mut InnovationRegistry, rng: &mut ChaCha8Rng, splits: usize) -> RnnGenome {
    let config = OperatorConfig::default();
    let mut g = seed.clone();
    for _ in 0..splits {
        g = split_edge(&g, registry, &config, rng).unwrap();
    }
    g
}

#[test]
fn crossover_keeps_union_of_reachable_structure() {
    let config = OperatorConfig::default();
    for case in 0..200u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + case);
        let mut registry = InnovationRegistry::default();
        let seed = seed_genome(rng.random_range(1..=3), 1, &mut registry, &mut rng).unwrap();
        let (na, nb) = (rng.random_range(1..=3), rng.random_range(1..=3));
        let a = split_parent(&seed, &mut registry, &mut rng, na);
        let b = split_parent(&seed, &mut registry, &mut rng, nb);
        assert!(a.nodes.len() <= 10 && b.nodes.len() <= 10);
        let child = crossover_with(&a, &b, &config, || 0.5).unwrap().child;

        let mut want_nodes: HashSet<u32> = HashSet::new();
        let mut want_edges: HashSet<u32> = HashSet::new();
        for p in [&a, &b] {
            let r = reachable_set(p);
            want_nodes.extend(r.nodes.iter().copied());
            want_nodes.extend(p.nodes.iter().filter(|n| n.kind != NodeKind::Hidden).map(|n| n.innovation_id));
            want_edges.extend(r.edges.iter().copied());
        }
        let got_nodes: HashSet<u32> = child.nodes.iter().map(|n| n.innovation_id).collect();
        assert_eq!(got_nodes, want_nodes, "case {case}");
        let got_enabled: HashSet<u32> = child.edges.iter().filter(|e| e.enabled).map(|e| e.innovation_id).collect();
        assert_eq!(got_enabled, want_edges, "case {case}");
        validate(&child).unwrap();
    }
}

#[test]
fn crossover_weight_law() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let mut registry = InnovationRegistry::default();
    let config = OperatorConfig::default();
    let seed = seed_genome(3, 1, &mut registry, &mut rng).unwrap();
    let better = split_parent(&seed, &mut registry, &mut rng, 2);
    let mut worse = better.clone();
    for e in &mut worse.edges {
        e.weight += rng.random_range(-1.0..1.0);
    }
    for n in &mut worse.nodes {
        for p in n.params.as_mut_slice() {
            *p += rng.random_range(-1.0..1.0);
        }
    }
    let weight_of = |g: &RnnGenome, id: u32| g.edges.iter().find(|e| e.innovation_id == id).unwrap().weight;
    let at = |r: f64| crossover_with(&better, &worse, &config, || r).unwrap().child;
    let (zero, one, half) = (at(0.0), at(1.0), at(0.5));
    for e in &better.edges {
        let (w1, w2) = (e.weight, weight_of(&worse, e.innovation_id));
        assert_eq!(weight_of(&zero, e.innovation_id), w1);
        assert_eq!(weight_of(&one, e.innovation_id), w2);
        assert!((weight_of(&half, e.innovation_id) - (0.5 * (w2 - w1) + w1)).abs() < 1e-15);
    }
    for n in &better.nodes {
        let find = |g: &RnnGenome| g.node(n.innovation_id).unwrap().params.as_slice().to_vec();
        assert_eq!(find(&zero), find(&better));
        assert_eq!(find(&one), find(&worse));
    }
    let same = crossover_with(&better, &better, &config, || rng.random_range(-0.5..1.5)).unwrap().child;
    assert_eq!(enabled_weights(&same), enabled_weights(&better));
}
