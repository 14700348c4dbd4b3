#pragma once

#include <json.hpp>

#include "agentinstruct/harness.hpp"
#include "helpers.hpp"

namespace testutil {

using namespace agentinstruct;

// Three tasks x four instances, fully scripted: a math generation task, a
// sentiment classification task and a multi-choice task.
struct PipelineFixture {
    std::vector<TaskSpec> tasks;
    std::map<std::string, std::vector<Instance>> instances;
    std::map<std::string, std::string> instructions;
    std::map<std::string, std::vector<std::string>> answers;  // scripted stage-2 outputs

    PipelineFixture() {
        TaskSpec math;
        math.name = "math";
        math.category = {TaskKind::generation, true};
        math.output_type = "generation";
        math.metric = MetricId::QEM;
        math.parser = ParserId::first_number;
        tasks.push_back(math);

        TaskSpec sentiment;
        sentiment.name = "sentiment";
        sentiment.category = {TaskKind::classification, false};
        sentiment.labels = {"Negative", "Positive"};
        sentiment.metric = MetricId::QEM;
        sentiment.parser = ParserId::identity;
        tasks.push_back(sentiment);

        TaskSpec choice;
        choice.name = "choice";
        choice.category = {TaskKind::multichoice, false};
        choice.metric = MetricId::EM;
        choice.parser = ParserId::first_letter;
        tasks.push_back(choice);

        instructions["math"] = "1. Read the problem.\n\n2. Compute the result.";
        instructions["sentiment"] = "1. Read the passage.\n\n2. Pick the sentiment.";
        instructions["choice"] = "1. Read the options.\n\n2. Pick one letter.";

        for (int i = 0; i < 4; ++i) {
            Instance inst;
            inst.input = "Problem " + std::to_string(i) + ": compute.";
            inst.references = {"42"};
            instances["math"].push_back(inst);
        }
        answers["math"] = {"Answer: 42", "Answer: 41", "Answer: 42 apples", "Answer: none"};

        for (int i = 0; i < 4; ++i) {
            Instance inst;
            inst.input = "Passage " + std::to_string(i) + ".\n\nSentiment:";
            inst.references = {i % 2 == 0 ? "Positive" : "Negative"};
            instances["sentiment"].push_back(inst);
        }
        answers["sentiment"] = {"Sentiment: Positive", "Negative", "Positive.", "Positive"};

        for (int i = 0; i < 4; ++i) {
            Instance inst;
            inst.input = "Question " + std::to_string(i) + "\nA. x\nB. y\nC. z";
            inst.references = {"B"};
            instances["choice"].push_back(inst);
        }
        answers["choice"] = {"Answer: B", "Answer: (B", "C", "Answer: b is correct"};
    }

    const TaskSpec& spec(const std::string& name) const {
        for (const auto& t : tasks) {
            if (t.name == name) return t;
        }
        throw std::logic_error("no task " + name);
    }

    void write_artifacts(const std::filesystem::path& dir) const {
        for (const auto& [name, text] : instructions) {
            InstructionArtifact artifact;
            artifact.task_name = name;
            artifact.instructions = text;
            artifact.created_by = "fixture";
            artifact.instruction_token_count = approx_token_count(text);
            save_artifact(dir, artifact);
        }
    }

    std::shared_ptr<ScriptedBackend> script() const {
        auto backend = std::make_shared<ScriptedBackend>("model");
        for (const auto& task : tasks) {
            for (size_t i = 0; i < instances.at(task.name).size(); ++i) {
                std::string rp = build_reasoning_prompt(PromptMode::agentinstruct,
                                                        instructions.at(task.name),
                                                        instances.at(task.name)[i].input);
                std::string reasoning = "Reasoning for " + task.name + " " + std::to_string(i);
                backend->register_exact(rp, reasoning);
                backend->register_exact(
                    build_answer_prompt(task.category, rp, reasoning, task.labels),
                    answers.at(task.name)[i]);
            }
        }
        return backend;
    }

    std::vector<EvalTask> eval_tasks(const RunConfig& config) const {
        std::vector<EvalTask> out;
        for (const auto& t : tasks) out.push_back(make_eval_task(t, instances.at(t.name), config));
        return out;
    }

    // expected per-task mean score, derived by applying the scoring oracles
    // to the scripted outputs directly
    double expected_score(const std::string& name) const {
        const TaskSpec& task = spec(name);
        double total = 0;
        for (size_t i = 0; i < instances.at(name).size(); ++i) {
            std::string parsed = parse_for_task(task, answers.at(name)[i]);
            total += score_prediction(task.metric, parsed, instances.at(name)[i].references);
        }
        return total / static_cast<double>(instances.at(name).size());
    }

    RunConfig config(const std::filesystem::path& dir, const std::string& tag) const {
        RunConfig c;
        for (const auto& t : tasks) c.tasks.push_back(t.name);
        c.mode.mode = PromptMode::agentinstruct;
        c.backend_id = "model";
        c.instructions_dir = dir / "artifacts";
        c.cache_dir = dir / ("cache_" + tag);
        c.results_path = dir / ("results_" + tag + ".jsonl");
        c.workers = 4;
        c.seed = 1;
        return c;
    }
};

std::string results_modulo_ms(const std::filesystem::path& path, bool drop_cache_hits = false) {
    std::string out;
    for (const auto& line : split_lines(read_file(path))) {
        if (trim(line).empty()) continue;
        auto j = nlohmann::json::parse(line);
        j.erase("ms");
        if (drop_cache_hits) j.erase("cache_hits");
        out += j.dump() + "\n";
    }
    return out;
}


}  // namespace testutil
