use proptest::prelude::*;
use sfq_core::fidelity::{average_fidelity, cardinal_states, GateEvaluator};
use sfq_core::format;
use sfq_core::linalg::unitarity_defect;
use sfq_core::model::build_static;
use sfq_core::propagation::{build_propagators, evolve_sequence, sequence_unitary};
use sfq_core::seqopt::{make_seed, mutations, SeedConfig};
use sfq_core::{GateSpec, PopulationBasis, PulseShape, SweepParam, SweepSpec, TransmonParams, Trit, TritSequence};

fn trit() -> impl Strategy<Value = Trit> {
    prop_oneof![Just(Trit::Minus), Just(Trit::Zero), Just(Trit::Plus)]
}

fn sequence(max: usize) -> impl Strategy<Value = Vec<Trit>> {
    proptest::collection::vec(trit(), 1..=max)
}

fn params() -> impl Strategy<Value = TransmonParams> {
    (3.0..7.0f64, 0.2..0.3f64, 0.021..0.033f64).prop_map(|(f, mu, th)| TransmonParams::new(f, mu, th).with_dim(9))
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn text_forms_round_trip(symbols in sequence(300)) {
        let seq = TritSequence::new(symbols.clone(), 25.0).unwrap();
        prop_assert_eq!(format::parse_sequence(&seq.to_string(), 25.0).unwrap(), seq.clone());
        let commas = symbols.iter().map(|t| t.value().to_string()).collect::<Vec<_>>().join(", ");
        prop_assert_eq!(format::parse_sequence(&commas, 25.0).unwrap(), seq.clone());
        let json = serde_json::to_string(&seq).unwrap();
        prop_assert_eq!(serde_json::from_str::<TritSequence>(&json).unwrap(), seq);
    }

    #[test]
    fn mutation_set_is_complete(symbols in sequence(60)) {
        let seq = TritSequence::new(symbols, 25.0).unwrap();
        let children = mutations(&seq);
        prop_assert_eq!(children.len(), 2 * seq.len());
        let distinct: std::collections::HashSet<String> = children.iter().map(|c| c.to_string()).collect();
        prop_assert_eq!(distinct.len(), children.len());
        for c in &children {
            let diffs = c.symbols().iter().zip(seq.symbols()).filter(|(a, b)| a != b).count();
            prop_assert_eq!(diffs, 1);
        }
    }

    #[test]
    fn evolution_is_unitary(p in params(), symbols in sequence(150), fc in prop_oneof![Just(25.0), Just(40.0)]) {
        let m = build_static(&p).unwrap();
        let props = build_propagators(&m, fc, &PulseShape::Delta, p.theta).unwrap();
        let seq = TritSequence::new(symbols, fc).unwrap();
        let u = sequence_unitary(&props, &seq).unwrap();
        prop_assert!(unitarity_defect(&u) < 1e-10);
        for psi in cardinal_states(m.dim()) {
            let tr = evolve_sequence(&props, &seq, &psi, Some(PopulationBasis::Fock)).unwrap();
            prop_assert!(tr.max_norm_defect() < 1e-9);
        }
    }

    #[test]
    fn fidelity_is_bounded_and_negation_symmetric(p in params(), symbols in sequence(120)) {
        let m = build_static(&p).unwrap();
        let gate = GateSpec::default();
        let ev = GateEvaluator::new(&m, 25.0, &PulseShape::Delta, &gate).unwrap();
        let seq = TritSequence::new(symbols, 25.0).unwrap();
        let f = ev.fidelity(&seq, p.theta).unwrap();
        prop_assert!((0.0..=1.0 + 1e-12).contains(&f.fidelity));
        prop_assert!((0.0..=1.0).contains(&f.leakage));
        // The evaluator agrees with the full-unitary path.
        let props = build_propagators(&m, 25.0, &PulseShape::Delta, p.theta).unwrap();
        let full = average_fidelity(&sequence_unitary(&props, &seq).unwrap(), &gate, true);
        prop_assert!((full.fidelity - f.fidelity).abs() < 1e-10);
        // Flipping every pulse polarity is a pi rotation about Z of the
        // drive axis; it maps a Y gate to a -Y gate.
        let neg = ev.fidelity(&seq.negated(), p.theta).unwrap();
        let flipped = GateEvaluator::new(&m, 25.0, &PulseShape::Delta, &GateSpec::new(gate.axis, -gate.angle)).unwrap();
        prop_assert!((flipped.fidelity(&seq, p.theta).unwrap().fidelity - neg.fidelity).abs() < 1e-10);
    }

    #[test]
    fn seed_only_fires_above_threshold(p in params(), a_th in 0.05..0.95f64, m in 1usize..200) {
        let cfg = SeedConfig { a_th, ..SeedConfig::default() };
        let seq = make_seed(&p, 25.0, m, &cfg).unwrap();
        prop_assert_eq!(seq.len(), m);
        let higher = make_seed(&p, 25.0, m, &SeedConfig { a_th: (a_th + 0.04).min(1.0), ..cfg.clone() }).unwrap();
        prop_assert!(higher.pulse_count() <= seq.pulse_count());
    }

    #[test]
    fn sweep_grid_is_centred(center in -10.0..10.0f64, half in 1e-4..1.0f64, k in 1usize..50) {
        let spec = SweepSpec { parameter: SweepParam::Mu, center, half_range: half, points: 2 * k + 1 };
        let g = spec.grid();
        prop_assert_eq!(g.len(), 2 * k + 1);
        prop_assert_eq!(g[k], center);
        prop_assert!((g[0] - (center - half)).abs() < 1e-12 && (g[2 * k] - (center + half)).abs() < 1e-12);
        prop_assert!(g.windows(2).all(|w| w[1] > w[0]));
    }
}
