use emochat::evaluation::{
    bleu_n, distinct_n, emotion_accuracy, fleiss_kappa, matched_pca_distance, metric_report, pca_project, read_human_scores, summarize_human_scores,
    AccuracyMode,
};
use emochat::{EmotionCategory, EmotionVector, Error};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn toks(s: &str) -> Vec<&str> {
    s.split_whitespace().collect()
}

#[test]
fn distinct_examples() {
    assert!((distinct_n(&[toks("a a a")], 1).unwrap() - 1.0 / 3.0).abs() < 1e-15);
    assert_eq!(distinct_n(&[toks("a b"), toks("c d")], 2).unwrap(), 1.0);
    assert!(matches!(distinct_n(&[toks("a")], 2), Err(Error::UndefinedMetric(_))));
}

#[test]
fn bleu_three_pair_worksheet() {
    let hyp = [toks("the cat sat"), toks("a dog ran far"), toks("hi")];
    let refs = [toks("the cat sat down"), toks("the dog ran"), toks("hi there")];
    // unigrams: 3 of 3, 2 of 4 ("dog", "ran"), 1 of 1 -> 6 / 8
    // bigrams: 2 of 2, 1 of 3 ("dog ran"), 0 of 0 -> 3 / 5
    // c = 8, r = 9 -> BP = exp(1 - 9/8)
    let bp = (1.0f64 - 9.0 / 8.0).exp();
    let b1 = bp * 0.75;
    let b2 = bp * (0.75f64 * 0.6).sqrt();
    assert!((bleu_n(&hyp, &refs, 1).unwrap() - b1).abs() < 1e-12);
    assert!((bleu_n(&hyp, &refs, 2).unwrap() - b2).abs() < 1e-12);
}

#[test]
fn bleu_disjoint_vocabularies_use_smoothed_closed_form() {
    let hyp = [toks("a b c"), toks("d e")];
    let refs = [toks("x y z"), toks("w v")];
    // zero matches: p_1 = 1 / (5 + 1), p_2 = 1 / (3 + 1); c = r so BP = 1
    let b1 = 1.0 / 6.0;
    let b2 = (1.0f64 / 6.0 * 1.0 / 4.0).sqrt();
    assert!((bleu_n(&hyp, &refs, 1).unwrap() - b1).abs() < 1e-15);
    assert!((bleu_n(&hyp, &refs, 2).unwrap() - b2).abs() < 1e-15);
    assert!(matches!(bleu_n::<Vec<&str>, &str>(&[], &[], 1), Err(Error::UndefinedMetric(_))));
}

#[test]
fn kappa_examples() {
    // perfect agreement over varied categories
    assert_eq!(fleiss_kappa(&[vec![3, 0], vec![0, 3], vec![3, 0]]).unwrap(), 1.0);
    // 2 raters splitting every binary item: P_bar = 0, P_e = 1/2 -> kappa = -1
    assert!((fleiss_kappa(&[vec![1, 1], vec![1, 1], vec![1, 1]]).unwrap() + 1.0).abs() < 1e-15);
    // 4 items, 3 raters, 3 categories
    let m = vec![vec![3, 0, 0], vec![1, 2, 0], vec![0, 1, 2], vec![1, 1, 1]];
    // P_i = (sum n^2 - 3) / 6: 1, 1/3, 1/3, 0 -> P_bar = 5/12
    // p_j = 5/12, 4/12, 3/12 -> P_e = 50/144
    let (pb, pe) = (5.0 / 12.0, 50.0 / 144.0);
    assert!((fleiss_kappa(&m).unwrap() - (pb - pe) / (1.0 - pe)).abs() < 1e-15);
    assert_eq!(fleiss_kappa(&[vec![2, 0], vec![2, 0]]).unwrap(), 1.0);
    assert!(matches!(fleiss_kappa(&[vec![2, 0], vec![1, 2]]), Err(Error::Validation(_))));
}

#[test]
fn human_scores_summary_matches_tally() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut csv = String::from("id,semantic,emotion\n");
    let (mut s, mut e, mut q) = (0, 0, 0);
    for i in 0..200 {
        let (a, b) = (rng.gen_range(0..2u8), rng.gen_range(0..2u8));
        s += a as usize;
        e += b as usize;
        q += (a == 1 && b == 1) as usize;
        csv.push_str(&format!("ex{i},{a},{b}\n"));
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scores.csv");
    std::fs::write(&path, csv).unwrap();
    let scores = read_human_scores(&path).unwrap();
    let sum = summarize_human_scores(&scores).unwrap();
    assert_eq!(sum.count, 200);
    assert_eq!(sum.semantic, s as f64 / 200.0);
    assert_eq!(sum.emotion, e as f64 / 200.0);
    assert_eq!(sum.quality, q as f64 / 200.0);
    assert!(sum.quality <= sum.semantic.min(sum.emotion));

    std::fs::write(&path, "id,semantic,emotion\na,1,2\n").unwrap();
    assert!(read_human_scores(&path).is_err());
}

#[test]
fn accuracy_examples() {
    let gold = EmotionVector::one_hot(EmotionCategory::Angry);
    let hit = EmotionVector([0.9, 0.1, 0.1, 0.2, 0.1, 0.1]);
    let miss = EmotionVector([0.1, 0.1, 0.1, 0.8, 0.1, 0.1]);
    assert_eq!(emotion_accuracy(&[hit, miss], &[gold, gold], AccuracyMode::ArgmaxInGold).unwrap(), 0.5);
    let dual = EmotionVector::label(&[EmotionCategory::Like, EmotionCategory::Sad]).unwrap();
    assert_eq!(emotion_accuracy(&[miss], &[dual], AccuracyMode::ArgmaxInGold).unwrap(), 1.0);
    assert_eq!(emotion_accuracy(&[miss], &[dual], AccuracyMode::ExactMatch).unwrap(), 0.0);
    assert!(emotion_accuracy(&[], &[], AccuracyMode::ArgmaxInGold).is_err());
}

#[test]
fn pca_examples() {
    let same = vec![vec![0.3; 6]; 4];
    let p = pca_project(&same, 2).unwrap();
    assert!(p.coords.iter().flatten().all(|&x| x == 0.0));
    let two = vec![vec![0.0, 1.0, 2.0], vec![2.0, 1.0, 0.0]];
    let p = pca_project(&two, 2).unwrap();
    assert!((p.coords[0][0] + p.coords[1][0]).abs() < 1e-12);
    assert!(p.coords.iter().all(|c| c[1].abs() < 1e-12));
    assert!(p.variances[0] >= p.variances[1]);
    assert!(pca_project(&two[..1], 2).is_err());

    // identical sample sets are at distance zero
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let a: Vec<Vec<f64>> = (0..10).map(|_| (0..6).map(|_| rng.gen::<f64>()).collect()).collect();
    assert!(matched_pca_distance(&a, &a).unwrap() < 1e-12);
}

#[test]
fn report_on_identical_corpora_is_perfect_bleu() {
    let h: Vec<Vec<String>> = ["good morning friend", "so happy today"]
        .iter()
        .map(|s| s.split_whitespace().map(String::from).collect())
        .collect();
    let r = metric_report(&h, &h).unwrap();
    assert_eq!((r.bleu_1, r.bleu_2), (1.0, 1.0));
    assert_eq!(r.distinct_1, 1.0);
    assert_eq!(r.examples.len(), 2);
}
