//! Rendered prompts must match the checked-in goldens byte for byte.

use std::path::PathBuf;

use rubricate_core::promptgen::{PromptContext, PromptPlan, Strategy};
use rubricate_core::Rubric;

fn fixture_context() -> PromptContext {
    PromptContext {
        playlist_name: "MIT 18.06 Linear Algebra, Spring 2005".into(),
        video_name: "21. Eigenvalues and Eigenvectors".into(),
        comment_text: "Best video I have watched so far, I was with him all the way and my concentration never dipped."
            .into(),
    }
}

fn golden(strategy: Strategy, key: &str) -> String {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/goldens")
        .join(strategy.as_str())
        .join(format!("{key}.txt"));
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

#[test]
fn all_prompts_match_goldens() {
    let rubric = Rubric::sight_v1();
    let mut checked = 0;
    for strategy in Strategy::ALL {
        let plan = PromptPlan::shipped(&rubric, strategy).unwrap();
        for key in rubric.keys() {
            let rendered = plan.render(key, &fixture_context()).unwrap();
            let expected = golden(strategy, key);
            assert!(
                rendered.text == expected,
                "{strategy}/{key} differs from golden\n--- rendered\n{}\n--- golden\n{}",
                rendered.text,
                expected
            );
            checked += 1;
        }
    }
    assert_eq!(checked, 27);
}

#[test]
fn pedagogy_zero_shot_golden_text() {
    let expected = "Consider a YouTube comment from the math MIT OCW video below:\n\
Playlist name: MIT 18.06 Linear Algebra, Spring 2005\n\
Video name: 21. Eigenvalues and Eigenvectors\n\
Comment: Best video I have watched so far, I was with him all the way and my concentration never dipped.\n\
\n\
If the statement below is true, please respond \"true\"; otherwise, please respond \"false\":\n\
The comment mentions the teacher’s instructional method, which includes but is not limited to the use of examples, applications, worked out problems, proofs, visualizations, elaboration, and analogies.";
    assert_eq!(golden(Strategy::ZeroShot, "pedagogy"), expected);
}
