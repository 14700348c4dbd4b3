#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "agentinstruct/evidence.hpp"
#include "agentinstruct/gateway.hpp"
#include "agentinstruct/prompts.hpp"
#include "agentinstruct/task.hpp"
#include "agentinstruct/util.hpp"

namespace agentinstruct {

class AgentFailureError : public std::runtime_error {
public:
    explicit AgentFailureError(const std::string& what) : std::runtime_error(what) {}
};

enum class AgentAction { ask_about_dataset, finish };

inline std::string agent_action_name(AgentAction a) {
    return a == AgentAction::finish ? "finish" : "ask_about_dataset";
}

struct AgentStep {
    std::string thought;
    AgentAction action = AgentAction::ask_about_dataset;
    std::string action_input;
    std::optional<std::string> observation;  // absent for finish steps
};

struct AgentTranscript {
    std::vector<AgentStep> steps;
    std::vector<std::string> raw_completions;  // verbatim backend outputs
};

struct AgentConfig {
    int max_steps = 8;
    int max_reruns = 3;
    double temperature = 0.3;
    bool use_alias = true;
    int max_new_tokens = 1024;
    std::optional<long long> seed;
};

struct InstructionArtifact {
    std::string task_name;  // always the true name, never the alias
    std::string instructions;
    AgentTranscript transcript;
    PromptTemplate tmpl;
    std::string created_by;
    long long instruction_token_count = 0;
    bool token_count_approximate = true;
};

struct ParsedAgentOutput {
    std::string thought;
    std::string action_name;  // as written by the model
    std::string action_input;
    std::optional<AgentAction> action;  // empty when the name is outside the action space
};

// Recognizes "Thought: ... Action: <name>[<input>]" and the finish forms
// ("Action: finish[...]" or a "Final Answer:" block).  Anything the model
// appends after an ask action line (hallucinated observations included) is
// discarded.
inline std::optional<ParsedAgentOutput> parse_agent_output(const std::string& completion) {
    size_t action_pos = std::string::npos;
    size_t final_pos = std::string::npos;
    {
        size_t line_start = 0;
        while (line_start <= completion.size()) {
            size_t line_end = completion.find('\n', line_start);
            if (line_end == std::string::npos) line_end = completion.size();
            std::string_view line(completion.data() + line_start, line_end - line_start);
            std::string_view stripped = line.substr(line.find_first_not_of(" \t") ==
                                                            std::string_view::npos
                                                        ? line.size()
                                                        : line.find_first_not_of(" \t"));
            size_t offset = line_start + (line.size() - stripped.size());
            if (action_pos == std::string::npos && starts_with(stripped, "Action:")) {
                action_pos = offset;
            }
            if (final_pos == std::string::npos && starts_with(stripped, "Final Answer:")) {
                final_pos = offset;
            }
            if (line_end == completion.size()) break;
            line_start = line_end + 1;
        }
    }

    if (action_pos == std::string::npos && final_pos == std::string::npos) {
        return std::nullopt;
    }

    ParsedAgentOutput out;
    size_t marker = std::min(action_pos, final_pos);
    std::string before = completion.substr(0, marker);
    size_t thought_tag = before.find("Thought:");
    out.thought = trim(thought_tag == std::string::npos
                           ? before
                           : before.substr(thought_tag + std::string("Thought:").size()));

    if (final_pos != std::string::npos && final_pos < action_pos) {
        out.action_name = "finish";
        out.action = AgentAction::finish;
        out.action_input = trim(completion.substr(final_pos + std::string("Final Answer:").size()));
        return out;
    }

    std::string rest = completion.substr(action_pos + std::string("Action:").size());
    size_t bracket = rest.find('[');
    if (bracket == std::string::npos) {
        return std::nullopt;
    }
    out.action_name = trim(rest.substr(0, bracket));
    std::string payload = rest.substr(bracket + 1);
    if (out.action_name == "finish" || out.action_name == "Finish") {
        out.action = AgentAction::finish;
        size_t close = payload.rfind(']');
        out.action_input =
            trim(close == std::string::npos ? payload : payload.substr(0, close));
    } else {
        if (out.action_name == "Ask_about_dataset" || out.action_name == "ask_about_dataset") {
            out.action = AgentAction::ask_about_dataset;
        }
        size_t close = payload.find(']');
        size_t line_end = payload.find('\n');
        size_t cut = std::min(close, line_end);
        out.action_input = trim(cut == std::string::npos ? payload : payload.substr(0, cut));
    }
    return out;
}

// ReAct scratchpad: one Thought/Action/Observation block per completed step.
inline std::string render_scratchpad(const std::vector<AgentStep>& steps) {
    std::string out;
    for (const auto& step : steps) {
        out += "Thought: " + step.thought + "\n";
        out += "Action: ";
        out += step.action == AgentAction::finish ? "finish" : "Ask_about_dataset";
        out += "[" + step.action_input + "]\n";
        if (step.observation) {
            out += "Observation: " + *step.observation + "\n";
        }
    }
    return out;
}

enum class AblationMode { full, no_examples, no_label_description };

inline std::optional<AblationMode> ablation_mode_from_name(std::string_view name) {
    if (name == "full") return AblationMode::full;
    if (name == "no_examples" || name == "no-examples") return AblationMode::no_examples;
    if (name == "no_label_description" || name == "no-label-description") {
        return AblationMode::no_label_description;
    }
    return std::nullopt;
}

struct AgentInput {
    std::vector<std::string> examples;  // input-only, no references attached
    std::string possible_outputs;
};

inline AgentInput ablate_agent_input(const TaskSpec& task, const std::vector<std::string>& examples,
                                     AblationMode mode) {
    AgentInput input;
    input.examples = mode == AblationMode::no_examples ? std::vector<std::string>{} : examples;
    if (mode == AblationMode::no_label_description) {
        switch (task.category.kind) {
            case TaskKind::classification: input.possible_outputs = "classification"; break;
            case TaskKind::multichoice: input.possible_outputs = "multiple choice"; break;
            case TaskKind::generation: input.possible_outputs = "generation"; break;
        }
    } else {
        input.possible_outputs = render_possible_outputs(task);
    }
    return input;
}

struct AgentDeps {
    Gateway* gateway = nullptr;
    std::string agent_backend_id;
    std::string template_backend_id;  // often the same backend as the agent
    std::string qa_backend_id;
    SearchClient* search = nullptr;
    PageFetcher* fetcher = nullptr;
    Embedder* embedder = nullptr;
    ScrapeOptions scrape;
    QaToolOptions qa;
};

namespace detail {

inline PromptTemplate infer_template(const std::vector<std::string>& examples,
                                     const AgentDeps& deps) {
    if (examples.empty()) {
        PromptTemplate tmpl;
        tmpl.text = "(no prompt template provided)";
        tmpl.source = PromptTemplate::Source::provided;
        return tmpl;
    }
    CompletionRequest request;
    request.prompt = build_template_inference_prompt(examples);
    request.params.temperature = 0.0;
    request.params.max_new_tokens = 256;
    request.backend_id = deps.template_backend_id;
    PromptTemplate tmpl;
    tmpl.text = trim(deps.gateway->complete(request).text);
    tmpl.source = PromptTemplate::Source::inferred;
    return tmpl;
}

}  // namespace detail

// The whole pipeline for one task: infer a prompt template from the examples,
// search and index the web evidence, then loop Thought/Action/Observation
// until the finish action yields instructions.  A run that never finishes is
// rerun with a fresh seed, up to config.max_reruns times.
inline InstructionArtifact run_agent(const TaskSpec& task, const AgentInput& input,
                                     const AgentConfig& config, const AgentDeps& deps,
                                     ScrapeReport* scrape_report = nullptr) {
    if (config.max_steps < 1) {
        throw std::invalid_argument("agent needs max_steps >= 1");
    }
    PromptTemplate tmpl = detail::infer_template(input.examples, deps);
    const std::string query = config.use_alias ? task.agent_name() : task.name;
    EvidenceIndex index = build_evidence_index(query, *deps.search, *deps.fetcher, *deps.embedder,
                                               deps.scrape, scrape_report);
    const std::string dataset_name = config.use_alias ? task.agent_name() : task.name;
    const std::string agent_prompt =
        build_agent_prompt(dataset_name, tmpl.text, input.possible_outputs);

    for (int attempt = 0; attempt <= config.max_reruns; ++attempt) {
        long long attempt_seed =
            static_cast<long long>(mix_seed(static_cast<uint64_t>(config.seed.value_or(0)),
                                            static_cast<uint64_t>(attempt)));
        AgentTranscript transcript;
        auto call_agent = [&](const std::string& prompt) {
            CompletionRequest request;
            request.prompt = prompt;
            request.params.temperature = config.temperature;
            request.params.max_new_tokens = config.max_new_tokens;
            request.params.seed = attempt_seed;
            request.backend_id = deps.agent_backend_id;
            std::string text = deps.gateway->complete(request).text;
            transcript.raw_completions.push_back(text);
            return text;
        };

        bool attempt_failed = false;
        while (static_cast<int>(transcript.steps.size()) < config.max_steps && !attempt_failed) {
            std::string prompt = agent_prompt;
            if (!transcript.steps.empty()) {
                prompt += "\n\n" + render_scratchpad(transcript.steps);
            }
            std::string completion = call_agent(prompt);
            auto parsed = parse_agent_output(completion);
            if (!parsed || !parsed->action) {
                // One nudge per step, then the attempt counts as failed.
                std::string nudge = prompt + completion +
                                    "\nRespond with a Thought followed by an Action.\n";
                completion = call_agent(nudge);
                parsed = parse_agent_output(completion);
                if (!parsed || !parsed->action) {
                    attempt_failed = true;
                    break;
                }
            }
            if (*parsed->action == AgentAction::finish) {
                if (trim(parsed->action_input).empty()) {
                    attempt_failed = true;
                    break;
                }
                AgentStep step;
                step.thought = parsed->thought;
                step.action = AgentAction::finish;
                step.action_input = parsed->action_input;
                transcript.steps.push_back(step);

                InstructionArtifact artifact;
                artifact.task_name = task.name;
                artifact.instructions = parsed->action_input;
                artifact.transcript = std::move(transcript);
                artifact.tmpl = tmpl;
                artifact.created_by = deps.agent_backend_id;
                artifact.instruction_token_count = approx_token_count(artifact.instructions);
                artifact.token_count_approximate = true;
                return artifact;
            }
            AgentStep step;
            step.thought = parsed->thought;
            step.action = AgentAction::ask_about_dataset;
            step.action_input = parsed->action_input;
            try {
                step.observation = answer_question(index, parsed->action_input, *deps.gateway,
                                                   deps.qa_backend_id, *deps.embedder, deps.qa);
            } catch (const std::exception& e) {
                step.observation = std::string("Tool error: ") + e.what();
            }
            transcript.steps.push_back(std::move(step));
        }
    }
    throw AgentFailureError("agent produced no instructions for task '" + task.name + "' after " +
                            std::to_string(config.max_reruns + 1) + " attempts");
}

inline InstructionArtifact run_agent(const TaskSpec& task, const std::vector<std::string>& examples,
                                     const AgentConfig& config, const AgentDeps& deps,
                                     ScrapeReport* scrape_report = nullptr) {
    return run_agent(task, ablate_agent_input(task, examples, AblationMode::full), config, deps,
                     scrape_report);
}

// --- artifact persistence -------------------------------------------------

inline nlohmann::ordered_json artifact_to_json(const InstructionArtifact& artifact) {
    nlohmann::ordered_json j;
    j["task_name"] = artifact.task_name;
    j["instructions"] = artifact.instructions;
    nlohmann::ordered_json tj;
    tj["text"] = artifact.tmpl.text;
    tj["source"] =
        artifact.tmpl.source == PromptTemplate::Source::inferred ? "inferred" : "provided";
    j["template"] = tj;
    nlohmann::ordered_json steps = nlohmann::ordered_json::array();
    for (const auto& step : artifact.transcript.steps) {
        nlohmann::ordered_json sj;
        sj["thought"] = step.thought;
        sj["action"] = agent_action_name(step.action);
        sj["action_input"] = step.action_input;
        if (step.observation) sj["observation"] = *step.observation;
        steps.push_back(sj);
    }
    j["steps"] = steps;
    j["raw_completions"] = artifact.transcript.raw_completions;
    j["created_by"] = artifact.created_by;
    j["instruction_token_count"] = artifact.instruction_token_count;
    j["token_count_approximate"] = artifact.token_count_approximate;
    return j;
}

inline InstructionArtifact artifact_from_json(const nlohmann::json& j) {
    InstructionArtifact artifact;
    artifact.task_name = j.at("task_name").get<std::string>();
    artifact.instructions = j.at("instructions").get<std::string>();
    if (artifact.instructions.empty()) {
        throw ConfigError("instruction artifact for '" + artifact.task_name +
                          "' has empty instructions");
    }
    if (j.contains("template")) {
        artifact.tmpl.text = j.at("template").value("text", "");
        artifact.tmpl.source = j.at("template").value("source", "inferred") == "provided"
                                   ? PromptTemplate::Source::provided
                                   : PromptTemplate::Source::inferred;
    }
    for (const auto& sj : j.value("steps", nlohmann::json::array())) {
        AgentStep step;
        step.thought = sj.value("thought", "");
        step.action = sj.value("action", "ask_about_dataset") == "finish"
                          ? AgentAction::finish
                          : AgentAction::ask_about_dataset;
        step.action_input = sj.value("action_input", "");
        if (sj.contains("observation")) step.observation = sj.at("observation").get<std::string>();
        artifact.transcript.steps.push_back(std::move(step));
    }
    if (j.contains("raw_completions")) {
        artifact.transcript.raw_completions = j.at("raw_completions").get<std::vector<std::string>>();
    }
    artifact.created_by = j.value("created_by", "");
    artifact.instruction_token_count = j.value("instruction_token_count", 0LL);
    artifact.token_count_approximate = j.value("token_count_approximate", true);
    return artifact;
}

inline std::filesystem::path artifact_path(const std::filesystem::path& dir,
                                           const std::string& task_name) {
    return dir / (sanitize_name(task_name) + ".json");
}

inline void save_artifact(const std::filesystem::path& dir, const InstructionArtifact& artifact) {
    write_file_atomic(artifact_path(dir, artifact.task_name),
                      artifact_to_json(artifact).dump(2) + "\n");
}

inline std::optional<InstructionArtifact> load_artifact(const std::filesystem::path& dir,
                                                        const std::string& task_name) {
    std::filesystem::path path = artifact_path(dir, task_name);
    if (!std::filesystem::exists(path)) return std::nullopt;
    try {
        return artifact_from_json(nlohmann::json::parse(read_file(path)));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("instruction artifact " + path.string() + " is unreadable: " + e.what());
    }
}

}  // namespace agentinstruct
