use gentween::nn::rf::{dense_keyframe_span, measure, Probed};
use gentween::nn::{NetworkSpec, Weights};

fn setup() -> (NetworkSpec, Weights) {
    let spec = NetworkSpec::new(57, 16).unwrap();
    let w = Weights::init(&spec, 9);
    (spec, w)
}

#[test]
fn probes_agree_with_interval_chaining() {
    let (spec, w) = setup();
    for (which, len) in [
        (Probed::Encoder, 512),
        (Probed::Decoder, 16),
        (Probed::DnaEncoder, 9),
        (Probed::Discriminator, 512),
        (Probed::PathPredictor, 512),
        (Probed::Bottleneck, 1024),
    ] {
        let r = measure(&spec, &w, which, len).unwrap();
        assert_eq!(r.analytic, r.probed, "{}: {r:?}", which.name());
    }
}

#[test]
fn headline_fields() {
    let (spec, w) = setup();
    assert_eq!(
        measure(&spec, &w, Probed::Discriminator, 512)
            .unwrap()
            .probed,
        190
    );
    assert_eq!(
        measure(&spec, &w, Probed::Bottleneck, 1024).unwrap().probed,
        318
    );
    assert_eq!(measure(&spec, &w, Probed::DnaEncoder, 9).unwrap().probed, 1);
}

#[test]
fn dense_span_covers_both_neighbours() {
    let (spec, w) = setup();
    let span = dense_keyframe_span(&spec, &w, 1024, 319).unwrap();
    assert_eq!(span.frames, 636, "{span:?}");
}
