use ruleflex_core::prompt::{render_prompt, PromptStrategy, TRIAGE_OBJECTIVE};

const GOLDEN: &str = include_str!("golden/few_shot_medical.txt");

#[test]
fn few_shot_medical_matches_golden() {
    let p = render_prompt(PromptStrategy::FewShot, "Medical", TRIAGE_OBJECTIVE).unwrap();
    assert_eq!(p.messages.len(), 1);
    assert_eq!(p.messages[0].role, "user");
    assert_eq!(p.text(), GOLDEN.trim_end_matches('\n'));
}

#[test]
fn rendering_is_deterministic_and_domain_sensitive() {
    for s in PromptStrategy::ALL {
        let a = render_prompt(s, "Medical", TRIAGE_OBJECTIVE).unwrap();
        let b = render_prompt(s, "Medical", TRIAGE_OBJECTIVE).unwrap();
        assert_eq!(a.hash(), b.hash());
        assert!(!a.text().contains("{domain}") && !a.text().contains("{objective}"));
        let c = render_prompt(s, "Finance", TRIAGE_OBJECTIVE).unwrap();
        assert_ne!(a.hash(), c.hash());
    }
}

#[test]
fn braces_in_arguments_are_not_expanded() {
    let p = render_prompt(PromptStrategy::Imitation, "{objective}", "plain").unwrap();
    assert!(p.text().contains("{objective}"));
}
