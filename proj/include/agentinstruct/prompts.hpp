#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "agentinstruct/task.hpp"
#include "agentinstruct/util.hpp"

namespace agentinstruct {

struct PromptTemplate {
    enum class Source { inferred, provided };
    std::string text;  // slots left blank, e.g. "Passage: \n\nSentiment:"
    Source source = Source::inferred;
};

// Per-family delimiter record.  Chat-tuned families insert a role-transition
// designation between the task text and the reasoning cue; the plain family
// separates them with a blank line.  Formatting applies to the reasoning
// stage only; the answer stage is raw concatenation.
struct ModelFamilyFormat {
    std::string family = "plain";
    std::string pre_user;
    std::string post_user_reasoning = "\n\n";
    std::optional<std::string> system_preamble;
};

inline ModelFamilyFormat plain_family() { return {}; }

// The instruction-close designation is part of the prompt text; the opening
// special tokens and the (empty) system message are the serving layer's job.
inline ModelFamilyFormat llama2_family() {
    ModelFamilyFormat fmt;
    fmt.family = "llama2";
    fmt.post_user_reasoning = " [/INST] ";
    fmt.system_preamble = "";
    return fmt;
}

inline std::optional<ModelFamilyFormat> family_from_name(std::string_view name) {
    if (name == "plain" || name.empty()) return plain_family();
    if (name == "llama2" || name == "llama-2") return llama2_family();
    return std::nullopt;
}

// The directive strings are configuration: the defaults below are the stock
// prompts, and the named presets are the studied alternates.  Swapping a
// preset changes only the directive span of the assembled prompt.
struct PromptStyle {
    std::string reasoning_directive =
        "Follow the instructions to generate an explanation that reasons towards the correct "
        "answer to the task above. End the explanation with the correct answer.";
    std::string reasoning_cue = "Explanation:";
    std::string answer_generation =
        "Therefore, the answer to the task is below. Give the answer in the shortest form "
        "possible that will still be correct.";
    std::string answer_classification =
        "Therefore, the correct label among {labels} (just the label) to the original task is "
        "below.";
    std::string answer_multichoice =
        "Therefore, the correct multiple choice label (just the letter) to the task is below.";
    std::string cot_trigger = "Let's think step by step.";
    bool instance_before_instructions = false;
};

inline std::optional<PromptStyle> prompt_style_preset(std::string_view name) {
    PromptStyle style;
    if (name == "default" || name.empty()) {
        return style;
    }
    if (name == "step-by-step-explanation") {
        style.reasoning_directive =
            "Let's think step-by-step according to the instructions. End with the correct answer.";
        return style;
    }
    if (name == "step-by-step-first") {
        style.reasoning_directive = "Let's think step-by-step according to the instructions.";
        style.reasoning_cue = "First,";
        return style;
    }
    if (name == "use-instructions") {
        style.reasoning_directive = "Use the instructions to guide you towards your answer.";
        return style;
    }
    if (name == "explanation-only") {
        style.reasoning_directive = "";
        return style;
    }
    if (name == "shortest-form-answer-tag") {
        style.answer_generation =
            "Therefore, the answer to the task is below. Give the answer in the shortest form "
            "possible that will still be correct. \nAnswer:";
        return style;
    }
    if (name == "plain-answer") {
        style.answer_generation = "Therefore, the answer to the task is below.\nAnswer:";
        return style;
    }
    if (name == "therefore-answer-is") {
        style.answer_generation = "Therefore, the answer is";
        return style;
    }
    if (name == "instance-first") {
        style.instance_before_instructions = true;
        return style;
    }
    return std::nullopt;
}

inline PromptStyle prompt_style_from_json(const nlohmann::json& j, PromptStyle base = {}) {
    if (j.contains("reasoning_directive")) {
        base.reasoning_directive = j.at("reasoning_directive").get<std::string>();
    }
    if (j.contains("reasoning_cue")) base.reasoning_cue = j.at("reasoning_cue").get<std::string>();
    if (j.contains("answer_generation")) {
        base.answer_generation = j.at("answer_generation").get<std::string>();
    }
    if (j.contains("answer_classification")) {
        base.answer_classification = j.at("answer_classification").get<std::string>();
    }
    if (j.contains("answer_multichoice")) {
        base.answer_multichoice = j.at("answer_multichoice").get<std::string>();
    }
    if (j.contains("cot_trigger")) base.cot_trigger = j.at("cot_trigger").get<std::string>();
    if (j.contains("instance_before_instructions")) {
        base.instance_before_instructions = j.at("instance_before_instructions").get<bool>();
    }
    return base;
}

// The task-config document may carry a catalog of named presets alongside the
// built-in ones; catalog entries win on name clashes.
inline std::map<std::string, PromptStyle> load_prompt_presets(const nlohmann::json& task_config_doc) {
    std::map<std::string, PromptStyle> presets;
    if (!task_config_doc.is_object() || !task_config_doc.contains("prompt_presets")) {
        return presets;
    }
    const auto& catalog = task_config_doc.at("prompt_presets");
    if (!catalog.is_object()) {
        throw ConfigError("'prompt_presets' must be an object of named preset records");
    }
    for (const auto& [name, record] : catalog.items()) {
        presets[name] = prompt_style_from_json(record);
    }
    return presets;
}

// Meta-prompt that asks a model to abstract a fill-in-the-blanks template
// from a handful of raw instances.
inline std::string build_template_inference_prompt(const std::vector<std::string>& examples) {
    if (examples.empty()) {
        throw std::invalid_argument("template inference needs at least one example input");
    }
    if (examples.size() > 10) {
        throw std::invalid_argument("template inference takes at most 10 example inputs");
    }
    std::string numbered;
    for (size_t i = 0; i < examples.size(); ++i) {
        if (i > 0) numbered += "\n\n";
        numbered += std::to_string(i + 1) + ". " + examples[i];
    }
    return "Given the following instances from a dataset, please isolate the structure of each "
           "instance such that a general template is created. Do not include any specific "
           "information, just what each instance looks like before its specific information was "
           "filled in (the template should have empty brackets in the spots that are different "
           "for each instance). We will use this to write our own instances that must follow the "
           "same format. Remember to be as general as possible; there are likely some instances "
           "in the dataset that are quite different than the ones presented here.\n"
           "Example Instances:\n\n" +
           numbered + "\n\nFormat:";
}

// Label list as it appears in the agent prompt: 'Negative', 'Positive'
inline std::string render_quoted_labels(const std::vector<std::string>& labels) {
    std::string out;
    for (size_t i = 0; i < labels.size(); ++i) {
        if (i > 0) out += ", ";
        out += "'" + labels[i] + "'";
    }
    return out;
}

// Label set as interpolated into the answer extraction prompt, declared
// order: {'Negative', 'Positive'}
inline std::string render_label_set(const std::vector<std::string>& labels) {
    return "{" + render_quoted_labels(labels) + "}";
}

inline std::string render_possible_outputs(const TaskSpec& task) {
    if (!task.labels.empty()) {
        return render_quoted_labels(task.labels);
    }
    if (task.category.kind == TaskKind::multichoice) {
        return "multiple choice";
    }
    return task.output_type.empty() ? "generation" : task.output_type;
}

inline std::string build_agent_prompt(const std::string& dataset_name,
                                      const std::string& prompt_template,
                                      const std::string& possible_outputs) {
    return "The dataset name is " + dataset_name +
           ". Use your resources to ask a series of simple questions to create instructions for "
           "the dataset. These instructions will be prepended to the prompt template during "
           "inference to help a large language model answer the prompt correctly. Include "
           "detailed tips on what topics to know and steps on how to answer the questions. For "
           "each instance, the model will apply these instructions to create an explanation that "
           "guides it towards the correct answer.\n"
           "Prompt Template (use for reference but no need to include in the instructions):\n" +
           prompt_template + "\nPossible outputs:\n" + possible_outputs;
}

inline std::string build_agent_prompt(const TaskSpec& task, const PromptTemplate& tmpl) {
    return build_agent_prompt(task.agent_name(), tmpl.text, render_possible_outputs(task));
}

enum class PromptMode { zero_shot, zero_shot_cot, agentinstruct, few_shot };

inline std::string prompt_mode_name(PromptMode mode) {
    switch (mode) {
        case PromptMode::zero_shot: return "zero-shot";
        case PromptMode::zero_shot_cot: return "zero-shot-cot";
        case PromptMode::agentinstruct: return "agentinstruct";
        case PromptMode::few_shot: return "few-shot";
    }
    return "zero-shot";
}

inline std::optional<PromptMode> prompt_mode_from_name(std::string_view name) {
    if (name == "zero-shot" || name == "zero_shot") return PromptMode::zero_shot;
    if (name == "zero-shot-cot" || name == "zero_shot_cot") return PromptMode::zero_shot_cot;
    if (name == "agentinstruct") return PromptMode::agentinstruct;
    if (name == "few-shot" || name == "few_shot") return PromptMode::few_shot;
    return std::nullopt;
}

namespace detail {

inline std::string reasoning_tail(const PromptStyle& style, const ModelFamilyFormat& family) {
    std::string tail;
    if (!style.reasoning_directive.empty()) {
        tail += "\n" + style.reasoning_directive;
    }
    tail += family.post_user_reasoning + style.reasoning_cue;
    return tail;
}

inline std::string instruction_scaffold(const std::string& instruction_block,
                                        const std::string& instance_input,
                                        const PromptStyle& style,
                                        const ModelFamilyFormat& family) {
    std::string body;
    if (style.instance_before_instructions) {
        body = instance_input + "\n\nInstructions:\n" + instruction_block;
    } else {
        body = "Instructions:\n" + instruction_block + "\n\n" + instance_input;
    }
    return family.pre_user +
           "You will be provided instructions for completing a task followed by a task to "
           "complete.\n\n" +
           body + reasoning_tail(style, family);
}

}  // namespace detail

// Stage-1 prompt.  agentinstruct wraps the task-specific instructions around
// the instance; zero-shot-cot puts the fixed trigger in the instruction slot;
// zero-shot is the bare instance; few-shot prepends completed shots.
inline std::string build_reasoning_prompt(
    PromptMode mode, const std::optional<std::string>& instructions,
    const std::string& instance_input,
    const std::vector<std::pair<std::string, std::string>>& shots = {},
    const ModelFamilyFormat& family = {}, const PromptStyle& style = {}) {
    switch (mode) {
        case PromptMode::agentinstruct:
            if (!instructions) {
                throw std::invalid_argument("agentinstruct mode requires instructions");
            }
            return detail::instruction_scaffold(*instructions, instance_input, style, family);
        case PromptMode::zero_shot_cot:
            return detail::instruction_scaffold(style.cot_trigger, instance_input, style, family);
        case PromptMode::zero_shot:
            return instance_input;
        case PromptMode::few_shot: {
            if (shots.empty()) {
                throw std::invalid_argument("few-shot mode requires shots");
            }
            std::string out;
            for (const auto& [input, reference] : shots) {
                out += input + " " + reference + "\n\n";
            }
            out += instance_input;
            return out;
        }
    }
    return instance_input;
}

// Stage-2 prompt: the full stage-1 prompt, its output, then the category's
// extraction directive.  No truncation, no family formatting.
inline std::string build_answer_prompt(const TaskCategory& category,
                                       const std::string& reasoning_prompt,
                                       const std::string& reasoning_output,
                                       const std::vector<std::string>& labels = {},
                                       const PromptStyle& style = {}) {
    std::string directive;
    switch (category.kind) {
        case TaskKind::generation:
            directive = style.answer_generation;
            break;
        case TaskKind::classification: {
            if (labels.empty()) {
                throw std::invalid_argument("classification answer prompt requires labels");
            }
            directive = style.answer_classification;
            size_t slot = directive.find("{labels}");
            if (slot != std::string::npos) {
                directive.replace(slot, 8, render_label_set(labels));
            }
            break;
        }
        case TaskKind::multichoice:
            directive = style.answer_multichoice;
            break;
    }
    return reasoning_prompt + reasoning_output + "\n\n" + directive;
}

// Bundles stage 1 with a builder for stage 2 so callers cannot lose the
// prefix property between the stages.
struct PromptBundle {
    std::string reasoning_prompt;
    TaskCategory category;
    std::vector<std::string> labels;
    PromptStyle style;

    std::string answer_prompt(const std::string& reasoning_output) const {
        return build_answer_prompt(category, reasoning_prompt, reasoning_output, labels, style);
    }
};

}  // namespace agentinstruct
