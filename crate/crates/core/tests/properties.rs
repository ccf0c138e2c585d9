use proptest::prelude::*;
use rand::{RngCore, SeedableRng};

use zigbee_infer::analysis::Analyzer;
use zigbee_infer::burst::{dedup, segment_bursts, BurstFrame, Direction};
use zigbee_infer::capture::mac::fcs;
use zigbee_infer::capture::{parse_frame, LinkType, PcapReader, PcapWriter, RawFrame};
use zigbee_infer::inference::{score, OuiClass, OuiTable, Resolution};
use zigbee_infer::signature::{correlate, extract_signature, SignatureStore, Tolerance};
use zigbee_infer::synth::{catalog, generate, model_for, Archetype, HubKind, Metrics, ScenarioConfig};

fn scenario(seed: u64) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::new(seed, 150.0, HubKind::ALL[seed as usize % 4]);
    for a in Archetype::ALL {
        cfg = cfg.with_device(model_for(a).id);
    }
    cfg.random_events = 6;
    cfg.noise_rate = 0.3;
    cfg.retransmission_rate = 0.2;
    cfg
}

fn resolution() -> impl Strategy<Value = Resolution> {
    prop_oneof![
        Just(Resolution::Unidentified),
        Just(Resolution::Uncertain),
        Just(Resolution::Indistinct),
        Just(Resolution::Identified),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pcap_round_trip(frames in prop::collection::vec((0u64..5_000_000, prop::collection::vec(any::<u8>(), 0..127)), 0..40)) {
        let mut t = 1_600_000_000_000_000u64;
        let raws: Vec<RawFrame> = frames
            .into_iter()
            .enumerate()
            .map(|(index, (dt, bytes))| {
                t += dt;
                RawFrame { index, timestamp_us: t, bytes, link_type: LinkType::Ieee802154WithFcs }
            })
            .collect();
        let mut w = PcapWriter::new(Vec::new(), LinkType::Ieee802154WithFcs).unwrap();
        for r in &raws {
            w.write_frame(r.timestamp_us, &r.bytes).unwrap();
        }
        let buf = w.finish().unwrap();
        let back: Vec<RawFrame> = PcapReader::new(&buf[..]).unwrap().collect::<Result<_, _>>().unwrap();
        prop_assert_eq!(back, raws);
    }

    #[test]
    fn score_is_bounded_sum(dt in resolution(), et in resolution(), klass in prop::option::of(prop_oneof![Just(OuiClass::Real), Just(OuiClass::Soc), Just(OuiClass::Private)])) {
        let s = score(dt, et, klass);
        prop_assert!((0.0..=5.0).contains(&s.total));
        prop_assert_eq!(s.total, s.m + s.dt + s.et);
        prop_assert_eq!(s.m, if klass == Some(OuiClass::Real) { 1.0 } else { 0.0 });
    }

    #[test]
    fn metrics_identities(tp in 0u64..10_000, fn_ in 0u64..10_000) {
        prop_assume!(tp + fn_ > 0);
        let m = Metrics { tp, fn_, fp: 0, tn: 0 };
        prop_assert!((m.tpr().unwrap() + m.fnr().unwrap() - 1.0).abs() < 1e-12);
        prop_assert_eq!(m.tpr().unwrap(), m.accuracy().unwrap());
    }

    #[test]
    fn segmentation_partitions_frames(gaps in prop::collection::vec(0u64..2_000_000, 0..60), gap_us in 1u64..1_500_000) {
        let mut t = 0;
        let frames: Vec<BurstFrame> = gaps
            .iter()
            .enumerate()
            .map(|(index, &g)| {
                t += g;
                BurstFrame { index, timestamp_us: t, dir: Direction::FromNode, src: 7, dst: 0, apl_len: 20, broadcast: false }
            })
            .collect();
        let bursts = segment_bursts(&frames, 7, gap_us);
        let flat: Vec<usize> = bursts.iter().flat_map(|b| b.indices()).collect();
        prop_assert_eq!(flat, (0..frames.len()).collect::<Vec<_>>());
        for b in &bursts {
            for w in b.frames.windows(2) {
                prop_assert!(w[1].timestamp_us - w[0].timestamp_us < gap_us);
            }
        }
        for w in bursts.windows(2) {
            prop_assert!(w[1].start_us - w[0].end_us >= gap_us);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn dedup_is_idempotent(seed in 0u64..1_000) {
        let g = generate(&scenario(seed)).unwrap();
        let records: Vec<_> = g.frames.iter().filter_map(|r| parse_frame(r).ok()).collect();
        let once = dedup(&records);
        prop_assert!(once.len() < records.len());
        prop_assert_eq!(dedup(&once), once);
    }

    #[test]
    fn generation_is_deterministic_and_fully_labeled(seed in 0u64..1_000) {
        let cfg = scenario(seed);
        let a = generate(&cfg).unwrap();
        let b = generate(&cfg).unwrap();
        prop_assert_eq!(&a.frames, &b.frames);
        prop_assert_eq!(&a.truth, &b.truth);
        prop_assert_eq!(a.truth.frames.len(), a.frames.len());
        prop_assert!(a.frames.windows(2).all(|w| w[0].timestamp_us <= w[1].timestamp_us));
        prop_assert!(a.frames.iter().all(|f| f.bytes.len() <= 127));
    }

    #[test]
    fn padding_only_lengthens_by_the_drawn_pad(seed in 0u64..1_000) {
        let base_cfg = scenario(seed);
        let mut pad_cfg = base_cfg.clone();
        pad_cfg.countermeasures.pad_random_0_3 = true;
        let base = generate(&base_cfg).unwrap();
        let padded = generate(&pad_cfg).unwrap();
        prop_assert_eq!(base.frames.len(), padded.frames.len());
        for ((b, p), label) in base.frames.iter().zip(&padded.frames).zip(&padded.truth.frames) {
            prop_assert_eq!(b.timestamp_us, p.timestamp_us);
            prop_assert!(label.pad <= 3);
            let (bl, pl) = (parse_frame(b).unwrap().apl_len(), parse_frame(p).unwrap().apl_len());
            prop_assert_eq!(bl.map(|l| l + label.pad as u16), pl);
        }
    }

    #[test]
    fn verdicts_ignore_ciphertext(seed in 0u64..1_000) {
        let g = generate(&scenario(seed)).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let mut scrambled = g.frames.clone();
        for f in scrambled.iter_mut() {
            let Some(apl) = parse_frame(f).unwrap().apl_len() else { continue };
            let end = f.bytes.len() - 2;
            let start = end - 4 - apl as usize;
            rng.fill_bytes(&mut f.bytes[start..end]);
            let c = fcs(&f.bytes[..end]);
            f.bytes[end..].copy_from_slice(&c.to_le_bytes());
        }
        let analyzer = Analyzer::default();
        let a = analyzer.analyze_frames(&g.frames);
        let b = analyzer.analyze_frames(&scrambled);
        prop_assert_eq!(a.identifications, b.identifications);
        prop_assert_eq!(a.bursts, b.bursts);
    }

    #[test]
    fn extracted_signature_matches_its_own_capture(model in 0usize..11, seed in 0u64..1_000) {
        let m = &catalog()[model];
        let hub = HubKind::SmartThings;
        let g = generate(&ScenarioConfig::new(seed, 3.0 * 3600.0, hub).with_device(m.id)).unwrap();
        let a = Analyzer::default().analyze_frames(&g.frames);
        let oui = OuiTable::default();
        let tol = Tolerance::default();
        let node = g.truth.nodes[1].addr;
        let sig = extract_signature(&a, node, "self", None, &oui, &tol).unwrap();
        let store = SignatureStore { signatures: vec![sig] };
        let c = correlate(&a, &store, &oui, &tol);
        prop_assert_eq!(c.matches.len(), 1);
        prop_assert_eq!(c.matches[0].node, node);
    }
}
