//! Participant-facing text: instruction pages and the comprehension quiz.

use signalgame_core::gridworld::{Cents, UtilityParams};
use signalgame_protocol::{InstructionsView, QuizQuestion, QuizSubmission, QuizView};

pub fn instructions(params: &UtilityParams, bonus_cap: Cents, practice_trials: u32, experiment_trials: u32) -> InstructionsView {
    let pages = vec![
        "You are the signaler. Each round shows a grid with you, a partner (the receiver), \
         colored shapes, and walls. One shape is highlighted: that is the target."
            .to_string(),
        format!(
            "The team earns {} when someone reaches the target. Every step either of you takes costs {}.",
            params.reward, params.step_cost
        ),
        "You may walk to the target yourself, or send the receiver exactly one signal: a color \
         or a shape. The receiver only sees your signal, not the target, and walks to a shape \
         that matches it."
            .to_string(),
        "After each round a review box shows the cost and reward. During practice it also \
         tells you when a better choice was available."
            .to_string(),
        format!(
            "There are {practice_trials} practice rounds followed by {experiment_trials} rounds that count. \
             Your bonus is what the team earns in counted rounds, never below zero and at most {bonus_cap}."
        ),
    ];
    InstructionsView {
        pages,
        reward: params.reward,
        step_cost: params.step_cost,
        bonus_cap,
        practice_trials,
        experiment_trials,
    }
}

const QUESTIONS: [(&str, &str, [&str; 3], usize); 3] = [
    (
        "signals",
        "How many signals can you send in one round?",
        ["One", "Two", "As many as I like"],
        0,
    ),
    (
        "receiver_sees",
        "What does the receiver know when choosing where to go?",
        ["Which shape is the target", "Only the signal I sent", "Nothing at all"],
        1,
    ),
    (
        "step_cost",
        "Who pays for the steps the receiver takes?",
        ["Nobody", "Only the receiver", "The team, out of the same bonus"],
        2,
    ),
];

pub fn quiz() -> QuizView {
    QuizView {
        questions: QUESTIONS
            .iter()
            .map(|(id, prompt, options, _)| QuizQuestion {
                id: id.to_string(),
                prompt: prompt.to_string(),
                options: options.iter().map(|o| o.to_string()).collect(),
            })
            .collect(),
    }
}

/// All questions answered with the correct option text.
pub fn quiz_correct(submission: &QuizSubmission) -> bool {
    QUESTIONS
        .iter()
        .all(|(id, _, options, answer)| submission.answers.get(*id).map(String::as_str) == Some(options[*answer]))
}

/// A submission that passes the quiz; handy for scripted clients.
pub fn correct_answers() -> QuizSubmission {
    QuizSubmission {
        answers: QUESTIONS
            .iter()
            .map(|(id, _, options, answer)| (id.to_string(), options[*answer].to_string()))
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quiz_grading() {
        assert!(quiz_correct(&correct_answers()));
        let mut wrong = correct_answers();
        wrong.answers.insert("signals".into(), "Two".into());
        assert!(!quiz_correct(&wrong));
        assert!(!quiz_correct(&QuizSubmission::default()));
    }
}
