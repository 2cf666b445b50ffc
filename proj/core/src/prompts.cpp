#include "procrit/prompts.hpp"

#include <array>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "procrit/errors.hpp"

namespace procrit {

namespace {

const std::string kRolloutSystem = R"(You are an expert AI assistant that explains your reasoning step by step.
For each step, provide a title that describes what you're doing in that step, along with the content.
Decide if you need another step or if you're ready to give the final answer.
Respond in JSON format with 'title', 'content', and 'next_action' (either 'continue' or 'final_answer') keys.
USE AT LEAST 2 STEPS OF REASONING.
Decide confidently and never respond with "not enough context", "cannot determine", or any form of hedging. YOU CAN BE WRONG. WHEN YOU SAY YOU ARE RE-EXAMINING, ACTUALLY RE-EXAMINE, AND USE ANOTHER APPROACH TO DO SO. DO NOT JUST SAY YOU ARE RE-EXAMINING. USE AT LEAST 3 METHODS TO DERIVE THE ANSWER. USE BEST PRACTICES.
Example of a valid JSON response:
{"title": "Identifying Key Information", "content": "To begin solving this problem, we need to carefully examine the given information and identify the crucial elements that will guide our solution process. This involves...", "next_action": "continue"}
Strictly follow the JSON response format. The response should start with {. DO NOT START WITH "```json" OR ANYTHING ELSE.
)";

const std::string kRolloutFollowup = R"(Continue with exactly one new reasoning step.
Return a valid JSON object with keys: title, content, next_action.
Please provide an one-more different step analysis here that you believe is likely to answer the question correctly.
Do not provide the final answer yet unless you have already produced at least 2 reasoning steps.
If you are not done, set next_action to continue.
)";

const std::string kDraft = R"(### Question

<image>

Text: {text}

Does the composite message of this image-text pair qualify as ironic/sarcastic?

### Instruction

1. Output step-by-step analysis strictly within <think>...</think> tags.

Requirements:
- Decide the necessary number of steps (recommended: 3-5)
- Assign each step a clear, incisive title (e.g., "Step2: Pragmatic intent decoding.")
- For each step, explicitly select an analytical perspective that is:
  - most relevant to the characteristics of the specific image-text pair
  - logically builds upon / responds to the findings and open questions from previous steps
- Provide concise, critical, evidence-focused analysis under each step (avoid speculation, prioritize observable multimodal cues)

2. After completing all steps, output the final answer within <answer>...</answer> tags using one of the following options only:
- yes (sarcasm or irony is present)
- no (sarcasm or irony is not present)
)";

const std::string kFixedDraft = R"(### Question

<image>

Text: {text}

Does the composite message of this image-text pair qualify as ironic/sarcastic?

### Instruction

1. Output the analysis strictly within <think>...</think> tags.

Use exactly only the following three fixed perspectives, in this exact order and with these exact step titles:

Step1: Surface-Level Discrepancy Analysis.
Analyze whether there is an obvious mismatch, exaggeration, reversal, or unexpected contrast between the image and the text at the surface level.

Step2: Semantic Relation Analysis.
Analyze how the text semantically relates to the image: whether it reinforces the image, contradicts it, reframes it, mocks it, or creates an implied meaning beyond the literal content.

Step3: Sentiment & Tone Analysis.
Analyze the tone, attitude, emotional polarity, and pragmatic intent of the text in relation to the image, focusing on whether the speaker's apparent attitude signals sarcasm or irony.

2. After completing the three steps, output the final answer within <answer>...</answer> tags using one of the following options only:
- yes (sarcasm or irony is present)
- no (sarcasm or irony is not present)
)";

const std::string kGenericDraft = R"(### Question

<image>

Text: {text}

Does the composite message of this image-text pair qualify as ironic/sarcastic?

### Instruction

Analyze the image-text pair with a chain of thought, then determine whether it is sarcastic.

1. Output the analysis strictly within <think>...</think> tags.
Detailed analysis and reasoning steps supporting the conclusion.

2. After completing the three steps, output the final answer within <answer>...</answer> tags using one of the following options only:
- yes (sarcasm or irony is present)
- no (sarcasm or irony is not present)
)";

const std::string kCritic = R"(You are an expert evaluator for multimodal sarcasm/irony detection reasoning.

You are given an image-text pair along with a reasoning chain and concluded answer that analyzes whether this pair conveys sarcasm/irony.

### Input

Text: {text}

Reasoning and answer:

{reasoning}

### Your task

Evaluate the quality of this reasoning process --- whether it correctly understood what is happening in this image-text pair and built a sound argument.

A correct conclusion does not guarantee a high score --- evaluate the reasoning process itself, not just whether the answer matches.

Focus on:
1. Interpretation accuracy (primary) --- Does the reasoning correctly interpret the combined meaning of the image-text pair and explain WHY it is or isn't sarcastic?
2. Cross-modal reasoning --- Does it connect image and text into joint reasoning? For sarcastic pairs: does it identify how they contradict or recontextualize each other to create irony? For non-sarcastic pairs: does it show how they reinforce the same tone and real meaning?
3. Reasoning coherence and efficiency --- Does the evidence chain build logically toward the conclusion, with each step contributing a concrete cue or reasoning move? Penalize unsupported leaps, contradictions, and filler steps that do not serve the final judgment.

Rate the reasoning on a 0-2 scale.

### Scoring rubric

0 = Misunderstanding --- the reasoning does not correctly understand this image-text pair. Common patterns:
- Treating any image-text contrast as automatic sarcasm
- Confusing playful banter, humor, or jokes with sarcasm
- Treating sarcasm-related words as proof of sarcastic intent
- Assuming positive wording must be sincere, ignoring image contradiction
- Missing subtle sarcasm due to a narrow definition
- Analyzing text in isolation without considering the image
- Treating absence of exaggeration as evidence of sincerity

1 = Partial understanding --- the reasoning is on the right track but the analysis is weak. Common patterns:
- Identifies some relevant cues but misses others
- Stays surface-level without explaining cross-modal interaction
- Includes filler, detours, or redundant steps
- Has logical gaps or weak connections between steps

2 = Strong understanding --- The reasoning clearly interprets what this pair is trying to express, precisely pinpoints the specific elements that create the sarcastic/non-sarcastic effect, and builds on joint image-text reasoning. Key cues are not missed, and the conclusion follows naturally.

Feedback (2-4 sentences): Briefly note what was done well or poorly. If the reasoning is weak or wrong, point out what was missed, misread, or insufficiently supported and indicate what the reasoning should have focused on instead.

### Output format

<feedback>your feedback</feedback>

<score>[0-2]</score>
)";

const std::string kRevise = R"(Re-answer the original question from scratch. Using the reviewer's feedback below as reference, write a completely new analysis instead of editing or extending your previous one. Use the same output format.

Feedback: {feedback}
)";

constexpr std::array<const char*, 3> kPlaceholders = {"text", "reasoning", "feedback"};

}  // namespace

std::string template_file_name(TemplateId id) {
    switch (id) {
        case TemplateId::RolloutSystem: return "rollout_system.txt";
        case TemplateId::RolloutFollowup: return "rollout_followup.txt";
        case TemplateId::Draft: return "draft_dynamic.txt";
        case TemplateId::FixedDraft: return "draft_fixed.txt";
        case TemplateId::GenericDraft: return "draft_generic.txt";
        case TemplateId::Critic: return "critic.txt";
        case TemplateId::Revise: return "revise.txt";
    }
    throw ValidationError("unknown template id");
}

const std::string& default_template_body(TemplateId id) {
    switch (id) {
        case TemplateId::RolloutSystem: return kRolloutSystem;
        case TemplateId::RolloutFollowup: return kRolloutFollowup;
        case TemplateId::Draft: return kDraft;
        case TemplateId::FixedDraft: return kFixedDraft;
        case TemplateId::GenericDraft: return kGenericDraft;
        case TemplateId::Critic: return kCritic;
        case TemplateId::Revise: return kRevise;
    }
    throw ValidationError("unknown template id");
}

std::string render_prompt(const PromptTemplate& tmpl, const Sample& sample,
                          const std::map<std::string, std::string>& context) {
    std::map<std::string, std::string> values = context;
    values.emplace("text", sample.text);

    std::string out = tmpl.body;
    for (const char* name : kPlaceholders) {
        const std::string marker = std::string("{") + name + "}";
        std::size_t pos = out.find(marker);
        if (pos == std::string::npos) continue;
        const auto it = values.find(name);
        if (it == values.end()) throw MissingPlaceholder(name);
        while (pos != std::string::npos) {
            out.replace(pos, marker.size(), it->second);
            pos = out.find(marker, pos + it->second.size());
        }
    }
    return out;
}

std::vector<ContentPart> build_user_parts(const std::string& rendered,
                                          const std::optional<std::string>& image_ref) {
    static const std::string kMarker = "<image>";
    std::vector<ContentPart> parts;
    const std::size_t pos = rendered.find(kMarker);

    if (pos == std::string::npos) {
        if (image_ref) parts.push_back(ContentPart::image(*image_ref));
        parts.push_back(ContentPart::text(rendered));
        return parts;
    }

    std::string before = rendered.substr(0, pos);
    std::string after = rendered.substr(pos + kMarker.size());
    if (!image_ref) {
        parts.push_back(ContentPart::text(before + after));
        return parts;
    }
    if (!trim_copy(before).empty()) parts.push_back(ContentPart::text(std::move(before)));
    parts.push_back(ContentPart::image(*image_ref));
    if (!trim_copy(after).empty()) parts.push_back(ContentPart::text(std::move(after)));
    return parts;
}

PromptLibrary::PromptLibrary(std::string override_dir) : override_dir_(std::move(override_dir)) {}

PromptTemplate PromptLibrary::get(TemplateId id) const {
    if (!override_dir_.empty()) {
        const std::filesystem::path path =
            std::filesystem::path(override_dir_) / template_file_name(id);
        std::ifstream in(path);
        if (in) {
            std::ostringstream buf;
            buf << in.rdbuf();
            return PromptTemplate{id, buf.str()};
        }
    }
    return PromptTemplate{id, default_template_body(id)};
}

TemplateId PromptLibrary::draft_template_for(TemplateMode mode) {
    switch (mode) {
        case TemplateMode::Dynamic: return TemplateId::Draft;
        case TemplateMode::Fixed: return TemplateId::FixedDraft;
        case TemplateMode::Generic: return TemplateId::GenericDraft;
    }
    return TemplateId::Draft;
}

}  // namespace procrit
