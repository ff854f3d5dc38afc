use protoglyph::analysis::difference_map;
use protoglyph::synth::{generate_corpus, SynthSpec};
use protoglyph::typesetter::{finetune_prototypes, train_reference, TrainConfig};

fn spec() -> SynthSpec {
    SynthSpec {
        alphabet: "abcde".into(),
        delta_chars: "a".into(),
        documents_per_subtype: 2,
        reference_per_subtype: 1,
        lines_per_document: 20,
        intensity_noise: 0.01,
        seed: 11,
        ..SynthSpec::default()
    }
}

#[test]
fn finetuning_on_the_training_corpus_is_a_fixed_point() {
    let corpus = generate_corpus(&spec()).unwrap();
    let lines = corpus.lines_of("A1");
    let reference = train_reference(&lines, &TrainConfig::default())
        .unwrap()
        .model;
    let tuned = finetune_prototypes(&reference, &lines, &TrainConfig::finetune())
        .unwrap()
        .model;
    for (a, b) in tuned.prototypes.iter().zip(&reference.prototypes) {
        let mae = a.image.mean_abs_diff(&b.image).unwrap();
        assert!(mae < 1e-3, "{}: {mae}", a.char_id);
    }
}

#[test]
fn single_stroke_edit_stays_local() {
    let corpus = generate_corpus(&spec()).unwrap();
    let mut all = corpus.lines_of("A1");
    all.extend(corpus.lines_of("B1"));
    let reference = train_reference(&all, &TrainConfig::default())
        .unwrap()
        .model;
    let cfg = TrainConfig::finetune();
    let mut a_lines = corpus.lines_of("A1");
    a_lines.extend(corpus.lines_of("A2"));
    let mut b_lines = corpus.lines_of("B1");
    b_lines.extend(corpus.lines_of("B2"));
    let ref_a = finetune_prototypes(&reference, &a_lines, &cfg)
        .unwrap()
        .model;
    let ref_b = finetune_prototypes(&reference, &b_lines, &cfg)
        .unwrap()
        .model;
    let truth_a = &corpus.truth.subtype_prototypes["A"];
    let truth_b = &corpus.truth.subtype_prototypes["B"];
    for ((pa, pb), (ta, tb)) in ref_a
        .prototypes
        .iter()
        .zip(&ref_b.prototypes)
        .zip(truth_a.iter().zip(truth_b))
    {
        let diff = difference_map(&pa.image, &pb.image).unwrap();
        let mass: f64 = diff.signed.iter().map(|v| v.abs()).sum();
        if pa.char_id != 'a' {
            assert!(
                mass / (diff.signed.len() as f64) < 0.01,
                "{}: {mass}",
                pa.char_id
            );
            continue;
        }
        let edited: Vec<bool> = ta
            .image
            .data()
            .iter()
            .zip(tb.image.data())
            .map(|(x, y)| (x - y).abs() > 0.05)
            .collect();
        let inside: f64 = diff
            .signed
            .iter()
            .zip(&edited)
            .filter(|(_, e)| **e)
            .map(|(v, _)| v.abs())
            .sum();
        assert!(
            inside / mass > 0.8,
            "edit mass inside edited region {inside} / {mass}"
        );
    }
}

#[test]
fn training_is_deterministic_and_error_does_not_rise() {
    let corpus = generate_corpus(&spec()).unwrap();
    let lines = corpus.lines_of("B2");
    let a = train_reference(&lines, &TrainConfig::default()).unwrap();
    let b = train_reference(&lines, &TrainConfig::default()).unwrap();
    assert_eq!(a.model.content_id(), b.model.content_id());
    assert_eq!(a.alignments, b.alignments);
    let tuned =
        finetune_prototypes(&a.model, &corpus.lines_of("B1"), &TrainConfig::finetune()).unwrap();
    for w in tuned.history.windows(2) {
        assert!(w[1] <= w[0] * (1.0 + 1e-9), "{:?}", tuned.history);
    }
    let h = &a.history;
    assert!(h.last().unwrap() < &h[0], "{h:?}");
}
