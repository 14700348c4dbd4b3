#pragma once

#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "agentinstruct/metrics.hpp"
#include "agentinstruct/text.hpp"
#include "agentinstruct/util.hpp"

namespace agentinstruct {

enum class TaskKind { generation, classification, multichoice };

inline std::string task_kind_name(TaskKind k) {
    switch (k) {
        case TaskKind::generation: return "generation";
        case TaskKind::classification: return "classification";
        case TaskKind::multichoice: return "multichoice";
    }
    return "generation";
}

inline std::optional<TaskKind> task_kind_from_name(std::string_view name) {
    if (name == "generation") return TaskKind::generation;
    if (name == "classification") return TaskKind::classification;
    if (name == "multichoice" || name == "multi-choice" || name == "multiple-choice") {
        return TaskKind::multichoice;
    }
    return std::nullopt;
}

// Reasoning overlaps generation and classification and changes nothing at
// inference time; it only affects reporting.
struct TaskCategory {
    TaskKind kind = TaskKind::generation;
    bool is_reasoning = false;
};

struct GenerationParams {
    double temperature = 0.0;
    std::optional<int> top_k;
    int max_new_tokens = 64;
    std::vector<std::string> stop_sequences;
    std::optional<long long> seed;

    bool operator==(const GenerationParams&) const = default;
};

struct TaskSpec {
    std::string name;
    std::optional<std::string> alias;
    TaskCategory category;
    std::vector<std::string> labels;        // classification / multichoice
    std::string output_type;                // generation, e.g. "generation"
    MetricId metric = MetricId::QEM;
    GenerationParams reasoning_params;
    GenerationParams answer_params;
    ParserId parser = ParserId::identity;
    std::optional<std::string> subset_of;

    const std::string& agent_name() const { return alias ? *alias : name; }
};

enum class Split { train, test };

struct Instance {
    std::string input;
    std::vector<std::string> references;
    Split split = Split::test;
};

inline std::vector<std::string> validate_task_spec(const TaskSpec& spec) {
    std::vector<std::string> violations;
    if (spec.name.empty()) {
        violations.push_back("task name must not be empty");
    }
    if (spec.category.kind == TaskKind::classification && spec.labels.empty()) {
        violations.push_back("classification task '" + spec.name + "' must declare labels");
    }
    if (spec.category.kind == TaskKind::generation && spec.output_type.empty()) {
        violations.push_back("generation task '" + spec.name +
                             "' must declare an output-type description");
    }
    if (spec.category.kind == TaskKind::multichoice && spec.parser != ParserId::first_letter) {
        violations.push_back("multichoice task '" + spec.name +
                             "' must use the first-letter parser");
    }
    if (spec.reasoning_params.temperature < 0.0 || spec.answer_params.temperature < 0.0) {
        violations.push_back("task '" + spec.name + "' has a negative temperature");
    }
    if (spec.reasoning_params.max_new_tokens <= 0 || spec.answer_params.max_new_tokens <= 0) {
        violations.push_back("task '" + spec.name + "' has a non-positive token limit");
    }
    return violations;
}

namespace detail {

inline GenerationParams params_from_json(const nlohmann::json& j, GenerationParams defaults,
                                         const std::string& task, const char* field) {
    GenerationParams p = defaults;
    if (!j.contains(field)) return p;
    const auto& pj = j.at(field);
    if (!pj.is_object()) {
        throw ConfigError("task '" + task + "': field '" + field + "' must be an object");
    }
    if (pj.contains("temperature")) p.temperature = pj.at("temperature").get<double>();
    if (pj.contains("top_k")) p.top_k = pj.at("top_k").get<int>();
    if (pj.contains("max_new_tokens")) p.max_new_tokens = pj.at("max_new_tokens").get<int>();
    if (pj.contains("stop_sequences")) {
        p.stop_sequences = pj.at("stop_sequences").get<std::vector<std::string>>();
    }
    if (pj.contains("seed")) p.seed = pj.at("seed").get<long long>();
    return p;
}

inline nlohmann::ordered_json params_to_json(const GenerationParams& p) {
    nlohmann::ordered_json j;
    j["temperature"] = p.temperature;
    if (p.top_k) j["top_k"] = *p.top_k;
    j["max_new_tokens"] = p.max_new_tokens;
    if (!p.stop_sequences.empty()) j["stop_sequences"] = p.stop_sequences;
    if (p.seed) j["seed"] = *p.seed;
    return j;
}

}  // namespace detail

inline TaskSpec task_from_json(const nlohmann::json& j) {
    if (!j.contains("name") || !j.at("name").is_string()) {
        throw ConfigError("task declaration is missing a 'name' string");
    }
    TaskSpec spec;
    spec.name = j.at("name").get<std::string>();
    if (j.contains("alias")) spec.alias = j.at("alias").get<std::string>();
    std::string kind = j.value("category", "generation");
    auto parsed_kind = task_kind_from_name(kind);
    if (!parsed_kind) {
        throw ConfigError("task '" + spec.name + "': unknown category '" + kind + "'");
    }
    spec.category.kind = *parsed_kind;
    spec.category.is_reasoning = j.value("reasoning", false);
    if (j.contains("labels")) spec.labels = j.at("labels").get<std::vector<std::string>>();
    spec.output_type = j.value("output_type",
                               spec.category.kind == TaskKind::generation ? "generation" : "");
    std::string metric = j.value("metric", "QEM");
    auto parsed_metric = metric_id_from_name(metric);
    if (!parsed_metric) {
        throw ConfigError("task '" + spec.name + "': unknown metric '" + metric + "'");
    }
    spec.metric = *parsed_metric;
    std::string parser = j.value(
        "parser", spec.category.kind == TaskKind::multichoice ? "first-letter" : "identity");
    auto parsed_parser = parser_id_from_name(parser);
    if (!parsed_parser) {
        throw ConfigError("task '" + spec.name + "': unknown parser '" + parser + "'");
    }
    spec.parser = *parsed_parser;
    GenerationParams reasoning_defaults;
    reasoning_defaults.max_new_tokens = 512;  // reasoning stage default
    spec.reasoning_params =
        detail::params_from_json(j, reasoning_defaults, spec.name, "reasoning_params");
    GenerationParams answer_defaults;
    answer_defaults.max_new_tokens = 64;  // answer stage default when unspecified
    spec.answer_params = detail::params_from_json(j, answer_defaults, spec.name, "answer_params");
    if (j.contains("subset_of")) spec.subset_of = j.at("subset_of").get<std::string>();
    return spec;
}

inline nlohmann::ordered_json task_to_json(const TaskSpec& spec) {
    nlohmann::ordered_json j;
    j["name"] = spec.name;
    if (spec.alias) j["alias"] = *spec.alias;
    j["category"] = task_kind_name(spec.category.kind);
    j["reasoning"] = spec.category.is_reasoning;
    if (!spec.labels.empty()) j["labels"] = spec.labels;
    if (!spec.output_type.empty()) j["output_type"] = spec.output_type;
    j["metric"] = metric_id_name(spec.metric);
    j["parser"] = parser_id_name(spec.parser);
    j["reasoning_params"] = detail::params_to_json(spec.reasoning_params);
    j["answer_params"] = detail::params_to_json(spec.answer_params);
    if (spec.subset_of) j["subset_of"] = *spec.subset_of;
    return j;
}

inline std::vector<TaskSpec> parse_tasks(const std::string& text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("task config is not valid JSON: ") + e.what());
    }
    const nlohmann::json* list = &doc;
    if (doc.is_object()) {
        if (!doc.contains("tasks")) {
            throw ConfigError("task config object must contain a 'tasks' array");
        }
        list = &doc.at("tasks");
    }
    if (!list->is_array()) {
        throw ConfigError("task config must be an array of task declarations");
    }
    std::vector<TaskSpec> tasks;
    std::set<std::string> seen;
    for (const auto& entry : *list) {
        TaskSpec spec = task_from_json(entry);
        if (!seen.insert(spec.name).second) {
            throw ConfigError("duplicate task name '" + spec.name + "'");
        }
        auto violations = validate_task_spec(spec);
        if (!violations.empty()) {
            throw ConfigError("task '" + spec.name + "': " + violations.front());
        }
        tasks.push_back(std::move(spec));
    }
    return tasks;
}

inline std::vector<TaskSpec> load_tasks(const std::filesystem::path& path) {
    return parse_tasks(read_file(path));
}

inline std::string serialize_tasks(const std::vector<TaskSpec>& tasks) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& t : tasks) arr.push_back(task_to_json(t));
    nlohmann::ordered_json doc;
    doc["tasks"] = arr;
    return doc.dump(2) + "\n";
}

// One instance per line: {"input": ..., "references": [...], "split": ...}.
inline std::vector<Instance> parse_instances(const std::string& text, const std::string& origin) {
    std::vector<Instance> instances;
    size_t line_no = 0;
    for (const auto& line : split_lines(text)) {
        ++line_no;
        if (trim(line).empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(origin + ":" + std::to_string(line_no) +
                              ": invalid instance JSON: " + e.what());
        }
        Instance inst;
        if (!j.contains("input") || !j.at("input").is_string()) {
            throw ConfigError(origin + ":" + std::to_string(line_no) +
                              ": instance needs an 'input' string");
        }
        inst.input = j.at("input").get<std::string>();
        if (j.contains("references")) {
            inst.references = j.at("references").get<std::vector<std::string>>();
        }
        std::string split = j.value("split", "test");
        if (split == "train") {
            inst.split = Split::train;
        } else if (split == "test") {
            inst.split = Split::test;
        } else {
            throw ConfigError(origin + ":" + std::to_string(line_no) + ": unknown split '" +
                              split + "'");
        }
        if (inst.split == Split::test && inst.references.empty()) {
            throw ConfigError(origin + ":" + std::to_string(line_no) +
                              ": test instance has no references");
        }
        instances.push_back(std::move(inst));
    }
    return instances;
}

inline std::vector<Instance> load_instances(const std::filesystem::path& path) {
    return parse_instances(read_file(path), path.string());
}

}  // namespace agentinstruct
