#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "agentinstruct/agent.hpp"
#include "agentinstruct/gateway.hpp"
#include "agentinstruct/prompts.hpp"
#include "agentinstruct/task.hpp"
#include "agentinstruct/text.hpp"

namespace agentinstruct {

struct SelfConsistencyCfg {
    int n = 3;
    double temperature = 0.7;
    std::optional<int> top_k = 40;
};

struct RunMode {
    PromptMode mode = PromptMode::zero_shot;
    int shot_count = 5;  // few-shot only
    std::optional<SelfConsistencyCfg> self_consistency;
};

struct RawPrediction {
    std::string reasoning_text;  // empty for single-stage modes
    std::string answer_text;
    std::string parsed_answer;
    std::string reasoning_prompt;  // exactly as sent; empty for single-stage modes
    std::string answer_prompt;
    bool reasoning_cache_hit = false;
    bool answer_cache_hit = false;
    bool errored = false;
    std::string error;
};

// Optional per-run parameter overrides (self-consistency sampling, the
// --temperature-override flag).  Unset fields keep the task's values.
struct SamplingOverride {
    std::optional<double> temperature;
    std::optional<int> top_k;
    std::optional<long long> seed;

    GenerationParams apply(GenerationParams params) const {
        if (temperature) params.temperature = *temperature;
        if (top_k) params.top_k = *top_k;
        if (seed) params.seed = *seed;
        return params;
    }
};

// yes/no parser target labels, read off the task's declared label set.
inline std::pair<std::string, std::string> yes_no_labels(const TaskSpec& task) {
    std::string affirmative = "True";
    std::string negative = "False";
    for (const auto& label : task.labels) {
        std::string n = normalize(label);
        if (n == "true" || n == "yes") affirmative = label;
        if (n == "false" || n == "no") negative = label;
    }
    return {affirmative, negative};
}

inline std::string parse_for_task(const TaskSpec& task, const std::string& answer_text) {
    auto [affirmative, negative] = yes_no_labels(task);
    return parse_answer(task.parser, answer_text, affirmative, negative);
}

// One instance through the two-stage chain (or a single call for the
// zero-shot and few-shot modes).  Backend failures mark the prediction as
// errored instead of aborting the run.
inline RawPrediction run_instance(
    const TaskSpec& task, const Instance& instance, const RunMode& mode,
    const InstructionArtifact* artifact, Gateway& gateway, const std::string& backend_id,
    const ModelFamilyFormat& family = {}, const PromptStyle& style = {},
    const std::vector<std::pair<std::string, std::string>>& shots = {},
    const SamplingOverride& sampling = {}) {
    RawPrediction prediction;
    if (mode.mode == PromptMode::agentinstruct && artifact == nullptr) {
        throw ConfigError("agentinstruct mode needs an instruction artifact for task '" +
                          task.name + "'");
    }
    try {
        bool two_stage =
            mode.mode == PromptMode::agentinstruct || mode.mode == PromptMode::zero_shot_cot;
        if (two_stage) {
            std::optional<std::string> instructions;
            if (artifact) instructions = artifact->instructions;
            prediction.reasoning_prompt = build_reasoning_prompt(mode.mode, instructions,
                                                                 instance.input, {}, family, style);
            CompletionRequest stage1;
            stage1.prompt = prediction.reasoning_prompt;
            stage1.params = sampling.apply(task.reasoning_params);
            stage1.backend_id = backend_id;
            CompletionOutcome out1 = gateway.complete_meta(stage1);
            prediction.reasoning_text = out1.result.text;
            prediction.reasoning_cache_hit = out1.cache_hit;

            prediction.answer_prompt =
                build_answer_prompt(task.category, prediction.reasoning_prompt,
                                    prediction.reasoning_text, task.labels, style);
        } else {
            prediction.answer_prompt = build_reasoning_prompt(
                mode.mode, std::nullopt, instance.input,
                mode.mode == PromptMode::few_shot ? shots : std::vector<std::pair<std::string, std::string>>{},
                family, style);
        }
        CompletionRequest stage2;
        stage2.prompt = prediction.answer_prompt;
        stage2.params = sampling.apply(task.answer_params);
        stage2.backend_id = backend_id;
        CompletionOutcome out2 = gateway.complete_meta(stage2);
        prediction.answer_text = out2.result.text;
        prediction.answer_cache_hit = out2.cache_hit;
        prediction.parsed_answer = parse_for_task(task, prediction.answer_text);
    } catch (const ConfigError&) {
        throw;  // misconfiguration fails fast; it would fail every instance
    } catch (const std::exception& e) {
        prediction.errored = true;
        prediction.error = e.what();
    }
    return prediction;
}

// Majority vote over parsed answers.  Equality is over normalized text, ties
// break uniformly at random from the lexicographically sorted tied set, so
// the outcome is deterministic in the seed and independent of sample order.
inline std::string majority_vote(const std::vector<std::string>& parsed_answers,
                                 uint64_t rng_seed) {
    if (parsed_answers.empty()) return "";
    std::map<std::string, int> counts;
    for (const auto& p : parsed_answers) ++counts[normalize(p)];
    int best = 0;
    for (const auto& [_, c] : counts) best = std::max(best, c);
    std::vector<std::string> tied;
    for (const auto& [key, c] : counts) {
        if (c == best) tied.push_back(key);  // std::map iterates keys in sorted order
    }
    std::string winner_key;
    if (tied.size() == 1) {
        winner_key = tied.front();
    } else {
        std::mt19937_64 rng(mix_seed(rng_seed, 0x7125));
        winner_key = tied[rng() % tied.size()];
    }
    std::string representative;
    bool found = false;
    for (const auto& p : parsed_answers) {
        if (normalize(p) != winner_key) continue;
        if (!found || p < representative) {
            representative = p;
            found = true;
        }
    }
    return representative;
}

// Samples n independent runs with seeds derived from rng_seed and votes over
// the parsed answers of the samples that survived.
inline RawPrediction run_self_consistency(
    const TaskSpec& task, const Instance& instance, const RunMode& mode,
    const InstructionArtifact* artifact, Gateway& gateway, const std::string& backend_id,
    const SelfConsistencyCfg& cfg, uint64_t rng_seed, const ModelFamilyFormat& family = {},
    const PromptStyle& style = {},
    const std::vector<std::pair<std::string, std::string>>& shots = {}) {
    if (cfg.n < 1) {
        throw std::invalid_argument("self-consistency needs n >= 1");
    }
    std::vector<RawPrediction> samples;
    samples.reserve(static_cast<size_t>(cfg.n));
    for (int i = 0; i < cfg.n; ++i) {
        SamplingOverride sampling;
        sampling.temperature = cfg.temperature;
        sampling.top_k = cfg.top_k;
        sampling.seed = static_cast<long long>(mix_seed(rng_seed, static_cast<uint64_t>(i)));
        samples.push_back(run_instance(task, instance, mode, artifact, gateway, backend_id,
                                       family, style, shots, sampling));
    }
    std::vector<std::string> votes;
    for (const auto& s : samples) {
        if (!s.errored) votes.push_back(s.parsed_answer);
    }
    if (votes.empty()) {
        RawPrediction prediction;
        prediction.errored = true;
        prediction.error = "all " + std::to_string(cfg.n) + " samples errored; last: " +
                           samples.back().error;
        return prediction;
    }
    std::string winner = majority_vote(votes, rng_seed);
    for (const auto& s : samples) {
        if (!s.errored && s.parsed_answer == winner) {
            RawPrediction prediction = s;
            prediction.parsed_answer = winner;
            return prediction;
        }
    }
    RawPrediction prediction = samples.front();
    prediction.parsed_answer = winner;
    return prediction;
}

}  // namespace agentinstruct
