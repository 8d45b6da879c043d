use kakeya_core::io::{parse_family_config, PhaseSource};
use kakeya_core::scalar::rat;
use kakeya_core::tubes::{build_family, nominal_tube_volume, tubes_in_set, union_measure, AnchorRule, FamilySpec};
use kakeya_core::{ExactPhase, Phase};

fn with_half_box(p: ExactPhase) -> ExactPhase {
    Phase::new(p.n(), p.jet().clone(), p.center().to_vec(), rat(1, 2)).unwrap()
}

fn compressed() -> (ExactPhase, AnchorRule) {
    let path = format!("{}/fixtures/bourgain_compressed.json", env!("CARGO_MANIFEST_DIR"));
    let cfg = parse_family_config(&std::fs::read_to_string(path).unwrap()).unwrap();
    let PhaseSource::Inline(p) = cfg.phase else { panic!("inline phase expected") };
    (p.to_phase().unwrap(), cfg.anchors)
}

#[test]
fn union_measure_is_stable_under_grid_refinement() {
    let p = with_half_box(ExactPhase::standard(3, 4).unwrap());
    let fam = build_family(&p, &FamilySpec::new(1.0 / 16.0, 0.25, AnchorRule::Fixed { anchor: vec![0.0, 0.0] })).unwrap();
    let coarse = union_measure(&fam, 1.0 / 64.0).unwrap();
    let fine = union_measure(&fam, 1.0 / 128.0).unwrap();
    assert!((coarse / fine - 1.0).abs() < 0.1, "{coarse} vs {fine}");
}

#[test]
fn single_tube_in_four_dimensions() {
    let p = with_half_box(ExactPhase::standard(4, 4).unwrap());
    let fam = build_family(&p, &FamilySpec::new(0.1, 2.0, AnchorRule::Fixed { anchor: vec![0.0; 3] })).unwrap();
    assert_eq!(fam.tubes.len(), 1);
    let h = 0.02;
    let got = union_measure(&fam, h).unwrap();
    let want = nominal_tube_volume(&fam, h);
    assert!((got / want - 1.0).abs() < 0.2, "{got} vs {want}");
}

#[test]
fn compressed_family_lies_near_a_surface() {
    let (p, anchors) = compressed();
    for delta in [1.0 / 16.0, 1.0 / 32.0] {
        let fam = build_family(&p, &FamilySpec::new(delta, delta * 1.0625, anchors.clone())).unwrap();
        let h = delta / 4.0;
        // Every centreline satisfies x1 = t x2; the disc and the cell add at most 2 delta + h.
        let width = 2.0 * delta + h;
        let inside = |q: &[f64]| (q[0] - q[2] * q[1]).abs() <= width;
        let slab = 2.0 * width;
        let c = tubes_in_set(&fam, h, inside, slab).unwrap();
        assert_eq!(c.count, c.total, "delta = {delta}");
    }
}

#[test]
fn compressed_union_shrinks_and_straight_union_does_not() {
    let (p, anchors) = compressed();
    let straight = with_half_box(ExactPhase::standard(3, 4).unwrap());
    let measure = |p: &ExactPhase, a: &AnchorRule, delta: f64| {
        let fam = build_family(p, &FamilySpec::new(delta, delta * 1.0625, a.clone())).unwrap();
        union_measure(&fam, delta / 4.0).unwrap()
    };
    let fixed = AnchorRule::Fixed { anchor: vec![0.0, 0.0] };
    let shrink = measure(&p, &anchors, 1.0 / 32.0) / measure(&p, &anchors, 1.0 / 16.0);
    let keep = measure(&straight, &fixed, 1.0 / 32.0) / measure(&straight, &fixed, 1.0 / 16.0);
    assert!(shrink < 0.6, "compressed ratio {shrink}");
    assert!(keep > 0.85, "straight ratio {keep}");
}
