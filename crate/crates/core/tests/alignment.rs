use fdcae_core::corpus::{build_corpus, frame_labels, CorpusConfig, PhoneInventory, Split};
use fdcae_core::hmm::{flat_start, viterbi_train, HmmTopology, TrainUtt};
use fdcae_core::signal::{extract_mfcc, read_wav, MfccConfig};

#[test]
fn gmm_alignment_matches_generator_timing() {
    let dir = tempfile::tempdir().unwrap();
    let inv = PhoneInventory::default();
    let set = build_corpus(&CorpusConfig::default(), dir.path(), &inv).unwrap();
    let cfg = MfccConfig::default();
    let mut utts = Vec::new();
    for (corpus, split) in [("adult", Split::Train), ("child", Split::Train)] {
        let m = set.get(corpus, split).unwrap();
        for r in &m.records {
            let w = read_wav(m.wav_path(r)).unwrap();
            let f = extract_mfcc(&w, &cfg).unwrap();
            let truth = frame_labels(
                &set.timings[&r.utt_id],
                f.num_frames(),
                cfg.window_samples(16000),
                cfg.shift_samples(16000),
            );
            utts.push((r.utt_id.clone(), f.frames, inv.encode(&r.transcript).unwrap(), truth));
        }
    }
    let data: Vec<TrainUtt> = utts
        .iter()
        .map(|(id, f, tr, _)| TrainUtt { id, feats: f.view(), transcript: tr })
        .collect();
    let topo = HmmTopology::standard(inv.len());
    let m0 = flat_start(&topo, &data).unwrap();
    let (model, log) = viterbi_train(&m0, &data, 15).unwrap();
    for l in &log {
        eprintln!("iter {} loglik/frame {:.4} split {}", l.iter, l.loglik / l.frames as f64, l.split);
    }
    let (mut hit, mut total) = (0usize, 0usize);
    for (_, f, tr, truth) in &utts {
        let (path, _) = model.force_align(f.view(), tr).unwrap();
        hit += path
            .iter()
            .zip(truth)
            .filter(|(s, p)| topo.phone_of(**s) == **p)
            .count();
        total += truth.len();
    }
    let acc = hit as f64 / total as f64;
    eprintln!("frame phone accuracy {acc:.4}");
    assert!(acc >= 0.9, "accuracy {acc}");
}
