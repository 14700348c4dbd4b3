#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "agentinstruct/agent.hpp"
#include "agentinstruct/metrics.hpp"
#include "agentinstruct/runner.hpp"
#include "agentinstruct/task.hpp"

namespace agentinstruct {

struct RunConfig {
    std::vector<std::string> tasks;  // names; empty means every declared task
    RunMode mode;
    std::string backend_id;
    std::string agent_backend_id;
    std::filesystem::path instructions_dir;
    std::filesystem::path cache_dir;
    std::filesystem::path results_path;
    std::optional<int> max_instances;  // head-of-file truncation of the test split
    int workers = 4;
    long long seed = 0;
    bool resume = false;
    std::optional<double> temperature_override;
    ModelFamilyFormat family;
    PromptStyle style;
};

struct EvalRecord {
    std::string task;
    int instance_index = 0;
    std::string mode;
    std::string backend_id;
    std::string parsed_answer;
    std::string metric;
    double score = 0.0;
    bool errored = false;
    bool reasoning_cache_hit = false;
    bool answer_cache_hit = false;
    long long ms = 0;
};

inline nlohmann::ordered_json eval_record_to_json(const EvalRecord& r) {
    nlohmann::ordered_json j;
    j["task"] = r.task;
    j["instance_index"] = r.instance_index;
    j["mode"] = r.mode;
    j["backend_id"] = r.backend_id;
    j["parsed_answer"] = r.parsed_answer;
    j["metric"] = r.metric;
    j["score"] = r.score;
    j["errored"] = r.errored;
    j["cache_hits"] = {r.reasoning_cache_hit, r.answer_cache_hit};
    j["ms"] = r.ms;
    return j;
}

inline EvalRecord eval_record_from_json(const nlohmann::json& j) {
    EvalRecord r;
    r.task = j.at("task").get<std::string>();
    r.instance_index = j.at("instance_index").get<int>();
    r.mode = j.value("mode", "");
    r.backend_id = j.value("backend_id", "");
    r.parsed_answer = j.value("parsed_answer", "");
    r.metric = j.value("metric", "");
    r.score = j.value("score", 0.0);
    r.errored = j.value("errored", false);
    if (j.contains("cache_hits") && j.at("cache_hits").is_array() &&
        j.at("cache_hits").size() == 2) {
        r.reasoning_cache_hit = j.at("cache_hits")[0].get<bool>();
        r.answer_cache_hit = j.at("cache_hits")[1].get<bool>();
    }
    r.ms = j.value("ms", 0LL);
    return r;
}

inline std::vector<EvalRecord> load_results(const std::filesystem::path& path) {
    std::vector<EvalRecord> records;
    if (!std::filesystem::exists(path)) return records;
    size_t line_no = 0;
    for (const auto& line : split_lines(read_file(path))) {
        ++line_no;
        if (trim(line).empty()) continue;
        try {
            records.push_back(eval_record_from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(path.string() + ":" + std::to_string(line_no) +
                              ": bad result record: " + e.what());
        }
    }
    return records;
}

struct TaskScore {
    std::string task;
    TaskKind kind = TaskKind::generation;
    bool reasoning = false;
    std::optional<std::string> family;  // parent name for subset tasks
    double score = 0.0;
    int instances = 0;
    int errors = 0;
};

struct Report {
    std::string mode;
    std::string backend_id;
    std::vector<TaskScore> tasks;
    std::map<std::string, double> family_scores;     // parent -> macro average over subsets
    std::map<std::string, double> category_averages; // generation / classification / reasoning
    double overall = 0.0;
    long long instances = 0;
    long long errors = 0;
    long long cache_hits = 0;
    long long backend_calls = 0;
};

// Category aggregates treat a subset family as one dataset (its macro
// average); reasoning overlaps the other two categories.
inline void finalize_report(Report& report) {
    struct Dataset {
        TaskKind kind;
        bool reasoning;
        double score;
    };
    std::map<std::string, std::map<std::string, double>> families;
    std::vector<Dataset> datasets;
    for (const auto& t : report.tasks) {
        if (t.family) {
            families[*t.family][t.task] = t.score;
        } else {
            datasets.push_back({t.kind, t.reasoning, t.score});
        }
    }
    for (const auto& [parent, members] : families) {
        double avg = macro_average(members);
        report.family_scores[parent] = avg;
        TaskKind kind = TaskKind::classification;
        bool reasoning = false;
        for (const auto& t : report.tasks) {
            if (t.family && *t.family == parent) {
                kind = t.kind;
                reasoning = t.reasoning;
                break;
            }
        }
        datasets.push_back({kind, reasoning, avg});
    }
    double total = 0.0;
    std::map<std::string, std::pair<double, int>> cats;
    for (const auto& d : datasets) {
        total += d.score;
        std::string cat = d.kind == TaskKind::generation ? "generation" : "classification";
        cats[cat].first += d.score;
        cats[cat].second += 1;
        if (d.reasoning) {
            cats["reasoning"].first += d.score;
            cats["reasoning"].second += 1;
        }
    }
    for (const auto& [name, acc] : cats) {
        report.category_averages[name] = acc.first / acc.second;
    }
    report.overall = datasets.empty() ? 0.0 : total / static_cast<double>(datasets.size());
}

inline nlohmann::ordered_json report_to_json(const Report& report) {
    nlohmann::ordered_json j;
    j["mode"] = report.mode;
    j["backend_id"] = report.backend_id;
    nlohmann::ordered_json tasks = nlohmann::ordered_json::array();
    for (const auto& t : report.tasks) {
        nlohmann::ordered_json tj;
        tj["task"] = t.task;
        tj["category"] = task_kind_name(t.kind);
        tj["reasoning"] = t.reasoning;
        if (t.family) tj["family"] = *t.family;
        tj["score"] = t.score;
        tj["instances"] = t.instances;
        tj["errors"] = t.errors;
        tasks.push_back(tj);
    }
    j["tasks"] = tasks;
    j["family_scores"] = report.family_scores;
    j["category_averages"] = report.category_averages;
    j["overall"] = report.overall;
    nlohmann::ordered_json counts;
    counts["instances"] = report.instances;
    counts["errors"] = report.errors;
    counts["cache_hits"] = report.cache_hits;
    counts["backend_calls"] = report.backend_calls;
    j["counts"] = counts;
    return j;
}

inline std::string render_report_text(const Report& report) {
    std::ostringstream out;
    out << "mode: " << report.mode << "   backend: " << report.backend_id << "\n";
    out << "task                              score  instances  errors\n";
    for (const auto& t : report.tasks) {
        out << "  " << t.task;
        for (size_t i = t.task.size(); i < 32; ++i) out << ' ';
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%6.4f  %9d  %6d", t.score, t.instances, t.errors);
        out << buf << "\n";
    }
    for (const auto& [parent, score] : report.family_scores) {
        out << "  " << parent << " (macro average): " << score << "\n";
    }
    for (const auto& [cat, avg] : report.category_averages) {
        out << "category " << cat << ": " << avg << "\n";
    }
    out << "overall: " << report.overall << "\n";
    out << "instances=" << report.instances << " errors=" << report.errors
        << " cache_hits=" << report.cache_hits << " backend_calls=" << report.backend_calls
        << "\n";
    return out.str();
}

// --- instruction generation phase ------------------------------------------

struct GenerateResult {
    std::map<std::string, InstructionArtifact> artifacts;
    std::map<std::string, std::string> failures;  // task -> reason
    int agent_invocations = 0;
};

// Runs the agent once per task that has no stored artifact; stored artifacts
// are reused untouched.  Per-task failures are recorded and the rest proceed.
inline GenerateResult generate_instructions(
    const std::vector<TaskSpec>& tasks,
    const std::map<std::string, std::vector<std::string>>& examples_per_task,
    const AgentConfig& config, const AgentDeps& deps, const std::filesystem::path& out_dir,
    AblationMode ablation = AblationMode::full) {
    GenerateResult result;
    std::filesystem::create_directories(out_dir);
    for (const auto& task : tasks) {
        try {
            if (auto existing = load_artifact(out_dir, task.name)) {
                result.artifacts[task.name] = *existing;
                continue;
            }
            std::vector<std::string> examples;
            if (auto it = examples_per_task.find(task.name); it != examples_per_task.end()) {
                examples = it->second;
            }
            AgentInput input = ablate_agent_input(task, examples, ablation);
            ++result.agent_invocations;
            InstructionArtifact artifact = run_agent(task, input, config, deps);
            save_artifact(out_dir, artifact);
            result.artifacts[task.name] = std::move(artifact);
        } catch (const std::exception& e) {
            result.failures[task.name] = e.what();
        }
    }
    return result;
}

// --- evaluation phase -------------------------------------------------------

struct EvalTask {
    TaskSpec spec;
    std::vector<Instance> instances;  // test split, already truncated
    std::vector<std::pair<std::string, std::string>> shots;
};

namespace detail {

inline std::vector<std::pair<std::string, std::string>> sample_shots(
    const std::vector<Instance>& all, int count, uint64_t seed, const std::string& task_name) {
    std::vector<const Instance*> train;
    for (const auto& inst : all) {
        if (inst.split == Split::train && !inst.references.empty()) train.push_back(&inst);
    }
    std::vector<std::pair<std::string, std::string>> shots;
    if (train.empty() || count <= 0) return shots;
    std::mt19937_64 rng(mix_seed(seed, fnv1a64(task_name)));
    std::vector<size_t> order(train.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    size_t take = std::min<size_t>(static_cast<size_t>(count), train.size());
    order.resize(take);
    std::sort(order.begin(), order.end());  // keep corpus order within the sample
    for (size_t idx : order) {
        shots.emplace_back(train[idx]->input, train[idx]->references.front());
    }
    return shots;
}

}  // namespace detail

// Prepares one task's evaluation inputs from the full instance list.
inline EvalTask make_eval_task(const TaskSpec& spec, const std::vector<Instance>& all,
                               const RunConfig& config) {
    EvalTask task;
    task.spec = spec;
    for (const auto& inst : all) {
        if (inst.split == Split::test) task.instances.push_back(inst);
    }
    if (config.max_instances && static_cast<int>(task.instances.size()) > *config.max_instances) {
        task.instances.resize(static_cast<size_t>(*config.max_instances));
    }
    if (config.mode.mode == PromptMode::few_shot) {
        task.shots = detail::sample_shots(all, config.mode.shot_count,
                                          static_cast<uint64_t>(config.seed), spec.name);
    }
    return task;
}

// Streams one EvalRecord per instance to config.results_path (append-only
// JSONL, completion order = submission order), skipping instances already
// present when resuming.  The instruction agent is never invoked here.
inline Report run_eval(const std::vector<EvalTask>& tasks, const RunConfig& config,
                       Gateway& gateway) {
    gateway.set_cache_dir(config.cache_dir);
    for (const auto& t : tasks) {
        if (t.spec.metric == MetricId::RR10 || t.spec.metric == MetricId::NDCG10) {
            throw ConfigError("task '" + t.spec.name + "' uses " + metric_id_name(t.spec.metric) +
                              ", which scores rankings; this runner scores per-instance "
                              "predictions only");
        }
    }

    // Fail fast before any backend call if an artifact is missing.
    std::map<std::string, InstructionArtifact> artifacts;
    if (config.mode.mode == PromptMode::agentinstruct) {
        if (config.instructions_dir.empty()) {
            throw ConfigError("agentinstruct mode needs an instructions directory");
        }
        for (const auto& t : tasks) {
            auto artifact = load_artifact(config.instructions_dir, t.spec.name);
            if (!artifact) {
                throw ConfigError("no instruction artifact for task '" + t.spec.name + "' in " +
                                  config.instructions_dir.string() +
                                  "; run the instruct phase first");
            }
            artifacts[t.spec.name] = std::move(*artifact);
        }
    }

    std::set<std::pair<std::string, int>> done;
    std::vector<EvalRecord> existing;
    if (config.resume) {
        existing = load_results(config.results_path);
        for (const auto& r : existing) done.insert({r.task, r.instance_index});
    } else if (std::filesystem::exists(config.results_path)) {
        std::filesystem::remove(config.results_path);
    }

    struct Item {
        const EvalTask* task;
        const Instance* instance;
        int index;
    };
    std::vector<Item> items;
    for (const auto& t : tasks) {
        for (size_t i = 0; i < t.instances.size(); ++i) {
            if (done.count({t.spec.name, static_cast<int>(i)})) continue;
            items.push_back({&t, &t.instances[i], static_cast<int>(i)});
        }
    }

    uint64_t calls_before = gateway.backend_calls();
    uint64_t hits_before = gateway.cache_hits();

    std::vector<std::optional<EvalRecord>> slots(items.size());
    std::mutex mutex;
    std::condition_variable ready;
    std::atomic<size_t> next{0};

    auto evaluate_item = [&](const Item& item) {
        auto started = std::chrono::steady_clock::now();
        const TaskSpec& spec = item.task->spec;
        const InstructionArtifact* artifact = nullptr;
        if (auto it = artifacts.find(spec.name); it != artifacts.end()) artifact = &it->second;
        SamplingOverride sampling;
        if (config.temperature_override) sampling.temperature = *config.temperature_override;
        RawPrediction prediction;
        if (config.mode.self_consistency) {
            uint64_t instance_seed = mix_seed(static_cast<uint64_t>(config.seed),
                                              fnv1a64(spec.name) ^
                                                  static_cast<uint64_t>(item.index));
            prediction = run_self_consistency(spec, *item.instance, config.mode, artifact, gateway,
                                              config.backend_id, *config.mode.self_consistency,
                                              instance_seed, config.family, config.style,
                                              item.task->shots);
        } else {
            prediction = run_instance(spec, *item.instance, config.mode, artifact, gateway,
                                      config.backend_id, config.family, config.style,
                                      item.task->shots, sampling);
        }
        EvalRecord record;
        record.task = spec.name;
        record.instance_index = item.index;
        record.mode = prompt_mode_name(config.mode.mode);
        record.backend_id = config.backend_id;
        record.parsed_answer = prediction.parsed_answer;
        record.metric = metric_id_name(spec.metric);
        record.errored = prediction.errored;
        record.score = prediction.errored
                           ? 0.0
                           : score_prediction(spec.metric, prediction.parsed_answer,
                                              item.instance->references);
        record.reasoning_cache_hit = prediction.reasoning_cache_hit;
        record.answer_cache_hit = prediction.answer_cache_hit;
        record.ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                        std::chrono::steady_clock::now() - started)
                        .count();
        return record;
    };

    auto worker = [&] {
        while (true) {
            size_t i = next.fetch_add(1);
            if (i >= items.size()) break;
            EvalRecord record = evaluate_item(items[i]);
            {
                std::lock_guard<std::mutex> lock(mutex);
                slots[i] = std::move(record);
            }
            ready.notify_all();
        }
    };

    int worker_count = std::max(1, std::min<int>(config.workers,
                                                 static_cast<int>(std::max<size_t>(items.size(), 1))));
    std::vector<std::thread> threads;
    threads.reserve(static_cast<size_t>(worker_count));
    for (int i = 0; i < worker_count; ++i) threads.emplace_back(worker);

    // Single writer appends in submission order: deterministic files and a
    // resumable prefix if the run is interrupted.
    std::vector<EvalRecord> fresh;
    {
        if (config.results_path.has_parent_path()) {
            std::filesystem::create_directories(config.results_path.parent_path());
        }
        std::ofstream out(config.results_path, std::ios::app | std::ios::binary);
        if (!out) throw ConfigError("cannot open results file " + config.results_path.string());
        for (size_t i = 0; i < items.size(); ++i) {
            std::unique_lock<std::mutex> lock(mutex);
            ready.wait(lock, [&] { return slots[i].has_value(); });
            EvalRecord record = std::move(*slots[i]);
            lock.unlock();
            out << eval_record_to_json(record).dump() << "\n";
            out.flush();
            fresh.push_back(std::move(record));
        }
    }
    for (auto& t : threads) t.join();

    std::vector<EvalRecord> all_records = std::move(existing);
    all_records.insert(all_records.end(), fresh.begin(), fresh.end());

    Report report;
    report.mode = prompt_mode_name(config.mode.mode);
    report.backend_id = config.backend_id;
    for (const auto& t : tasks) {
        TaskScore ts;
        ts.task = t.spec.name;
        ts.kind = t.spec.category.kind;
        ts.reasoning = t.spec.category.is_reasoning;
        ts.family = t.spec.subset_of;
        double total = 0.0;
        for (const auto& r : all_records) {
            if (r.task != t.spec.name) continue;
            ++ts.instances;
            total += r.score;
            if (r.errored) ++ts.errors;
        }
        ts.score = ts.instances == 0 ? 0.0 : total / ts.instances;
        report.instances += ts.instances;
        report.errors += ts.errors;
        report.tasks.push_back(std::move(ts));
    }
    report.cache_hits = static_cast<long long>(gateway.cache_hits() - hits_before);
    report.backend_calls = static_cast<long long>(gateway.backend_calls() - calls_before);
    finalize_report(report);
    return report;
}

// --- mode comparison --------------------------------------------------------

struct ModeComparison {
    std::vector<std::string> labels;                       // one per report
    std::vector<std::string> tasks;
    std::map<std::string, std::map<std::string, double>> scores;  // task -> label -> score
    std::map<std::string, std::string> best;               // task -> label ("" = tie)
    std::map<std::string, int> wins;
    std::map<std::string, double> winning_rate;            // strict wins / tasks
    std::map<std::string, double> average_delta;           // vs the first report
};

inline ModeComparison compare_modes(const std::vector<Report>& reports) {
    if (reports.empty()) {
        throw ConfigError("compare_modes needs at least one report");
    }
    ModeComparison cmp;
    std::set<std::string> base_tasks;
    for (const auto& t : reports.front().tasks) base_tasks.insert(t.task);
    for (const auto& r : reports) {
        std::set<std::string> names;
        for (const auto& t : r.tasks) names.insert(t.task);
        if (names != base_tasks) {
            throw ConfigError("compare_modes: reports cover different task sets");
        }
        std::string label = r.mode + "@" + r.backend_id;
        while (std::find(cmp.labels.begin(), cmp.labels.end(), label) != cmp.labels.end()) {
            label += "'";
        }
        cmp.labels.push_back(label);
    }
    for (const auto& t : reports.front().tasks) cmp.tasks.push_back(t.task);

    for (size_t i = 0; i < reports.size(); ++i) {
        for (const auto& t : reports[i].tasks) {
            cmp.scores[t.task][cmp.labels[i]] = t.score;
        }
        cmp.wins[cmp.labels[i]] = 0;
    }
    for (const auto& task : cmp.tasks) {
        double best_score = 0.0;
        std::string best_label;
        bool tie = false;
        for (const auto& label : cmp.labels) {
            double s = cmp.scores[task][label];
            if (best_label.empty() || s > best_score) {
                best_score = s;
                best_label = label;
                tie = false;
            } else if (s == best_score) {
                tie = true;
            }
        }
        cmp.best[task] = tie ? "" : best_label;
        if (!tie) ++cmp.wins[best_label];
    }
    for (const auto& label : cmp.labels) {
        cmp.winning_rate[label] =
            cmp.tasks.empty() ? 0.0
                              : static_cast<double>(cmp.wins[label]) /
                                    static_cast<double>(cmp.tasks.size());
    }
    std::map<std::string, double> averages;
    for (size_t i = 0; i < reports.size(); ++i) {
        double total = 0.0;
        for (const auto& t : reports[i].tasks) total += t.score;
        averages[cmp.labels[i]] = reports[i].tasks.empty()
                                      ? 0.0
                                      : total / static_cast<double>(reports[i].tasks.size());
    }
    double baseline = averages[cmp.labels.front()];
    for (const auto& label : cmp.labels) {
        cmp.average_delta[label] = averages[label] - baseline;
    }
    return cmp;
}

inline std::string render_comparison_text(const ModeComparison& cmp) {
    std::ostringstream out;
    out << "task";
    for (const auto& label : cmp.labels) out << "\t" << label;
    out << "\tbest\n";
    for (const auto& task : cmp.tasks) {
        out << task;
        for (const auto& label : cmp.labels) {
            out << "\t" << cmp.scores.at(task).at(label);
        }
        auto best = cmp.best.at(task);
        out << "\t" << (best.empty() ? "(tie)" : best) << "\n";
    }
    for (const auto& label : cmp.labels) {
        out << label << ": wins=" << cmp.wins.at(label) << " winning_rate="
            << cmp.winning_rate.at(label) * 100.0 << "% avg_delta=" << cmp.average_delta.at(label)
            << "\n";
    }
    return out.str();
}

}  // namespace agentinstruct
