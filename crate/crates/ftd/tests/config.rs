use ftd::config::{Origin, RunConfig, Selection, KEYS};
use ftd_core::buffer::TeacherMode;
use ftd_core::models::Norm;

fn parse(text: &str, overrides: &[&str]) -> Result<RunConfig, ftd::config::ConfigError> {
    let overrides: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
    RunConfig::from_parts(Some(("run.json", text)), &overrides)
}

#[test]
fn defaults_are_valid_and_every_key_round_trips() {
    let cfg = RunConfig::default();
    let text = serde_json::to_string_pretty(&cfg.to_json()).unwrap();
    let back = parse(&text, &[]).unwrap();
    assert_eq!(back, cfg);
    assert_eq!(cfg.entries().len(), KEYS.len());
}

#[test]
fn values_and_overrides_apply_in_order() {
    let cfg = parse(
        "{\n  \"buffer.mode\": \"ftd\",\n  \"buffer.count\": 3,\n  \"nas.norms\": [\"batch\"]\n}",
        &["buffer.count=4", "distill.teacher=mtt", "dataset.noise=0.5"],
    )
    .unwrap();
    assert_eq!(cfg.buffer.mode, Selection::Ftd);
    assert_eq!(cfg.buffer.count, 4);
    assert_eq!(cfg.distill.teacher.modes(), vec![TeacherMode::Sgd]);
    assert_eq!(cfg.nas.norms, vec![Norm::Batch]);
    assert_eq!(cfg.dataset.noise, Some(0.5));
}

#[test]
fn unknown_keys_report_their_line() {
    let err = parse("{\n  \"seed\": 1,\n\n  \"buffer.rhoo\": 0.1\n}", &[]).unwrap_err();
    assert_eq!(err.origin, Origin::File { path: "run.json".into(), line: 4 });
    assert_eq!(err.key.as_deref(), Some("buffer.rhoo"));
    assert!(err.to_string().starts_with("run.json:4: `buffer.rhoo`: unknown key"), "{err}");

    let nested = parse("{\"buffer\": {\"rho\": 0.1}}", &[]).unwrap_err();
    assert!(nested.message.contains("dotted keys"));

    let flag = parse("{}", &["eval.seed=3"]).unwrap_err();
    assert_eq!(flag.origin, Origin::Override);
}

#[test]
fn type_and_range_errors_report_their_line() {
    let err = parse("{\n\"buffer.lr\": \"fast\"\n}", &[]).unwrap_err();
    assert_eq!(err.origin, Origin::File { path: "run.json".into(), line: 2 });
    let err = parse("{\n\"seed\": 0,\n\"buffer.alpha\": 1.5\n}", &[]).unwrap_err();
    assert_eq!(err.origin, Origin::File { path: "run.json".into(), line: 3 });
    assert!(err.message.contains("[0, 1]"));
    let err = parse("{}", &["buffer.rho=-1"]).unwrap_err();
    assert_eq!((err.origin, err.key.as_deref()), (Origin::Override, Some("buffer.rho")));
    // a default that becomes invalid because of another key
    let err = parse("{\"buffer.epochs\": 3}", &[]).unwrap_err();
    assert_eq!(err.key.as_deref(), Some("distill.max_start_epoch"));
    assert_eq!(err.origin, Origin::Default);
    let err = parse("{\n\"seed\": 1,,\n}", &[]).unwrap_err();
    assert_eq!(err.origin, Origin::File { path: "run.json".into(), line: 2 });
    assert!(parse("{}", &["nas.topk=[1]"]).is_err());
    assert!(parse("{}", &["no-equals-sign"]).is_err());
}

#[test]
fn hash_tracks_results_not_locations() {
    let a = RunConfig::default();
    let mut b = a.clone();
    b.output_dir = "elsewhere".into();
    b.threads = 7;
    assert_eq!(a.hash(), b.hash());
    b.buffer.rho = 0.03;
    assert_ne!(a.hash(), b.hash());
    let again = parse("{\"buffer.rho\": 0.03}", &[]).unwrap();
    assert_eq!(again.hash(), b.hash());
}

#[test]
fn phase_seeds_are_derived_and_paired() {
    let cfg = RunConfig::default();
    let other = RunConfig { seed: 1, ..cfg.clone() };
    assert_ne!(cfg.teacher(0).seed, cfg.teacher(1).seed);
    assert_ne!(cfg.teacher(0).seed, other.teacher(0).seed);
    assert_ne!(cfg.distillation().seed, cfg.synthetic_seed());
    assert_eq!(cfg.eval_seeds().len(), cfg.eval.seeds);
    assert_eq!(cfg.ablation_starts(), vec![0, 2, 4, 6, 8, 10]);
    assert_eq!(cfg.search_space().len(), 405);
}
