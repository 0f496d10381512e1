//! Fixed instruction and starter-message wording.

/// Frame rate the describer is asked to analyse the source clip at.
pub const ANALYSIS_FPS: u32 = 16;

/// Instruction sent to the describer to obtain the seed prompt.
pub fn initial_instruction(duration_secs: f64) -> String {
    format!(
        "Reverse engineer the {duration_secs:.1} second video to create a clear and descriptive prompt \
         that can be used to reproduce the video with a text-to-video model. Return the prompt only. \
         Include temporal sequencing."
    )
}

/// First message of an assisted rewrite conversation.
pub fn assist_starter(creative_goal: &str, prompt: &str) -> String {
    format!(
        "I want to repurpose my video. My goal is to {creative_goal}. Here is the text-to-video prompt \
         of my original video: {prompt}. Help me rewrite the prompt\u{2026}"
    )
}

/// Request for an image-editing instruction that produces a new first frame.
///
/// The published wording elides text between the goal and the request
/// (shown as `...`); only the quoted fragments are reproduced.
pub fn first_frame_request(creative_goal: &str) -> String {
    format!(
        "I want to repurpose my video. My goal is {creative_goal}... Suggest an image-editing prompt \
         to get the first frame of my new video."
    )
}

/// Marker the first-frame request always contains.
pub const FIRST_FRAME_MARKER: &str = "Suggest an image-editing prompt";

/// Instruction for the comparator role. Replies must be a JSON document
/// `{"discrepancies":[{"category":..,"description":..}],"revised_prompt":..}`.
pub fn comparison_instruction(current_prompt: &str) -> String {
    format!(
        "Compare the original video with the generated video. List the semantic differences as JSON \
         objects with a category (object, color, lighting, composition, motion, pacing, other) and a \
         description, then provide a revised, improved prompt that would make the generated video \
         match the original. The prompt used for the generated video was:\n{current_prompt}\n\
         Reply with JSON only: {{\"discrepancies\": [...], \"revised_prompt\": \"...\"}}"
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn initial_instruction_exact() {
        assert_eq!(
            initial_instruction(8.0),
            "Reverse engineer the 8.0 second video to create a clear and descriptive prompt that can be \
             used to reproduce the video with a text-to-video model. Return the prompt only. Include \
             temporal sequencing."
        );
        assert!(initial_instruction(6.25).starts_with("Reverse engineer the 6.2 second video"));
    }

    #[test]
    fn assist_starter_exact() {
        let m = assist_starter("make it pixel art", "A dog runs.");
        assert!(m.starts_with("I want to repurpose my video. My goal is to make it pixel art."));
        assert_eq!(
            m,
            "I want to repurpose my video. My goal is to make it pixel art. Here is the text-to-video \
             prompt of my original video: A dog runs.. Help me rewrite the prompt\u{2026}"
        );
    }

    #[test]
    fn first_frame_request_exact() {
        assert_eq!(
            first_frame_request("a watercolor look"),
            "I want to repurpose my video. My goal is a watercolor look... Suggest an image-editing \
             prompt to get the first frame of my new video."
        );
    }
}
