use flagtrick::experiment::{run_outlier_scores, ExperimentConfig, Problem};

#[test]
fn digits_like_flag_margin_beats_grassmann_in_most_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig {
        problem: Problem::Rsr,
        signature: vec![1, 2, 5],
        data: "gen:digits".into(),
        seeds: (0..10).collect(),
        out: dir.path().to_path_buf(),
        ..Default::default()
    };
    let rep = run_outlier_scores(&cfg).unwrap();
    let mut wins = 0;
    for (seed, r) in &rep.seeds {
        let s = r.as_ref().unwrap();
        let (g, f) = (s.grassmann_margin.unwrap(), s.flag_margin.unwrap());
        println!("seed {seed}: grassmann margin {g:.4}, flag margin {f:.4}");
        wins += usize::from(f > g);
    }
    println!("flag margin larger in {wins}/10 seeds");
    assert!(wins >= 8, "flag margin larger in only {wins}/10 seeds");
}
