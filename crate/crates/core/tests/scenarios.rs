use dcm::scenario::{rendezvous_five, spreading_team, stretched_five, ScenarioFile};
use dcm::sim::run;

#[test]
fn shipped_scenarios_match_their_generators() {
    let cases = [
        (include_str!("../scenarios/rendezvous.toml"), rendezvous_five(0)),
        (include_str!("../scenarios/stretched.toml"), stretched_five(0)),
        (include_str!("../scenarios/team10.toml"), spreading_team(10, 0, 700)),
    ];
    for (text, generated) in cases {
        assert_eq!(ScenarioFile::parse(text, &[]).unwrap(), generated);
    }
}

#[test]
fn runs_replay_bit_for_bit() {
    let file = ScenarioFile::parse(include_str!("../scenarios/stretched.toml"), &["steps=150".into()]).unwrap();
    let s = file.build().unwrap();
    let (a, b) = (run(&s).unwrap(), run(&s).unwrap());
    assert_eq!(a.records, b.records);
    assert_eq!(a.final_x, b.final_x);
}

#[test]
fn seed_changes_the_field() {
    let a = rendezvous_five(0).build().unwrap();
    let b = rendezvous_five(1).build().unwrap();
    let (ra, rb) = (run(&a).unwrap(), run(&b).unwrap());
    assert_ne!(ra.records.last().unwrap().x, rb.records.last().unwrap().x);
}
