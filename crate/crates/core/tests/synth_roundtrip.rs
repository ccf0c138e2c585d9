use zigbee_infer::analysis::{AnalysisConfig, Analyzer};
use zigbee_infer::mapper::LogicalType;
use zigbee_infer::synth::{evaluate, generate, model_for, Archetype, HubKind, Predictions, ScenarioConfig};

fn all_archetypes(seed: u64) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::new(seed, 400.0, HubKind::SmartThings);
    for a in Archetype::ALL {
        cfg = cfg.with_device(model_for(a).id);
    }
    cfg.random_events = 16;
    cfg
}

fn run(cfg: &ScenarioConfig) -> (zigbee_infer::synth::EvalReport, zigbee_infer::analysis::Analysis, zigbee_infer::synth::Generated) {
    let g = generate(cfg).unwrap();
    let a = Analyzer::new(AnalysisConfig::default()).analyze_frames(&g.frames);
    let pred = Predictions {
        capture_id: g.truth.capture_id.clone(),
        identifications: a.identifications.clone(),
        signature_matches: Vec::new(),
    };
    (evaluate(&pred, &g.truth).unwrap(), a, g)
}

#[test]
fn clean_scenarios_recover_every_event() {
    for seed in 0..10 {
        let (r, a, g) = run(&all_archetypes(seed));
        for o in r.outcomes.iter().filter(|o| !o.correct) {
            let e = &g.truth.events[o.event];
            eprintln!("seed {seed}: missed {:?} {:?} at {} node {:#06x} -> {:?}", e.archetype, e.event, e.time, e.node, o.identification.map(|i| &a.identifications[i]));
        }
        assert_eq!(r.events.tp, 16, "seed {seed}");
        assert_eq!(r.events.fn_, 0, "seed {seed}");
        assert_eq!(r.events.fp, 0, "seed {seed}");
    }
}

#[test]
fn roles_are_recovered() {
    let (_, a, g) = run(&all_archetypes(3));
    for n in &g.truth.nodes {
        assert_eq!(a.map.ltype_of(n.addr), n.ltype, "{:#06x}", n.addr);
    }
    assert_eq!(a.map.ltype_of(0), LogicalType::ZC);
}

#[test]
fn seed_determinism() {
    let cfg = all_archetypes(11);
    let a = generate(&cfg).unwrap();
    let b = generate(&cfg).unwrap();
    assert_eq!(a.frames, b.frames);
    assert_eq!(a.truth, b.truth);
    assert_eq!(a.truth.frames.len(), a.frames.len());
}
