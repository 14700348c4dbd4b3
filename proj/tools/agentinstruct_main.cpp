// Command-line front end: `instruct` generates one instruction artifact per
// task with the web-grounded agent; `eval` runs the two-stage inference and
// scores it.  Exit codes: 0 success, 1 partial (some tasks failed or errored),
// 2 configuration error.

#include <cstdlib>
#include <iostream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "agentinstruct/agentinstruct.hpp"
#include "agentinstruct/http.hpp"

namespace ai = agentinstruct;

namespace {

std::vector<ai::TaskSpec> select_tasks(const std::vector<ai::TaskSpec>& all,
                                       const std::vector<std::string>& only) {
    if (only.empty()) return all;
    std::vector<ai::TaskSpec> out;
    for (const auto& name : only) {
        bool found = false;
        for (const auto& t : all) {
            if (t.name == name) {
                out.push_back(t);
                found = true;
                break;
            }
        }
        if (!found) throw ai::ConfigError("unknown task '" + name + "'");
    }
    return out;
}

std::vector<ai::Instance> load_task_instances(const std::filesystem::path& dir,
                                              const std::string& task_name) {
    std::filesystem::path path = dir / (ai::sanitize_name(task_name) + ".jsonl");
    if (!std::filesystem::exists(path)) {
        throw ai::ConfigError("no instance file for task '" + task_name + "' at " +
                              path.string());
    }
    return ai::load_instances(path);
}

struct InstructArgs {
    std::string tasks_file;
    std::vector<std::string> only;
    std::string backends_file;
    std::string agent_backend;
    std::string template_backend;
    std::string qa_backend;
    std::string out_dir;
    std::string ablation = "full";
    int max_steps = 8;
    int reruns = 3;
    double temperature = 0.3;
    bool no_alias = false;
    std::string instances_dir;
    int num_examples = 5;
    std::string search_script;
    std::string search_endpoint;
    std::string search_key_env = "BING_SEARCH_KEY";
    std::string page_map;
    std::string cache_dir;
    long long seed = 0;
};

int run_instruct(const InstructArgs& args) {
    auto tasks = select_tasks(ai::load_tasks(args.tasks_file), args.only);

    ai::Gateway gateway;
    if (!args.cache_dir.empty()) gateway.set_cache_dir(args.cache_dir);
    ai::register_backends_from_config(gateway, args.backends_file);
    if (!gateway.has_backend(args.agent_backend)) {
        throw ai::ConfigError("agent backend '" + args.agent_backend + "' is not declared");
    }

    std::unique_ptr<ai::SearchClient> search;
    if (!args.search_script.empty()) {
        search = std::make_unique<ai::ScriptedSearchClient>(
            nlohmann::json::parse(ai::read_file(args.search_script)));
    } else if (!args.search_endpoint.empty()) {
        search = std::make_unique<ai::HttpSearchClient>(args.search_endpoint, args.search_key_env);
    } else {
        throw ai::ConfigError("instruct needs --search-script or --search-endpoint");
    }

    std::unique_ptr<ai::PageFetcher> fetcher;
    if (!args.page_map.empty()) {
        std::filesystem::path map_path = args.page_map;
        fetcher = std::make_unique<ai::FilePageFetcher>(
            nlohmann::json::parse(ai::read_file(map_path)), map_path.parent_path());
    } else {
        fetcher = std::make_unique<ai::HttpPageFetcher>();
    }

    ai::HashedBagEmbedder embedder;

    ai::AgentDeps deps;
    deps.gateway = &gateway;
    deps.agent_backend_id = args.agent_backend;
    deps.template_backend_id =
        args.template_backend.empty() ? args.agent_backend : args.template_backend;
    deps.qa_backend_id = args.qa_backend.empty() ? args.agent_backend : args.qa_backend;
    deps.search = search.get();
    deps.fetcher = fetcher.get();
    deps.embedder = &embedder;

    ai::AgentConfig config;
    config.max_steps = args.max_steps;
    config.max_reruns = args.reruns;
    config.temperature = args.temperature;
    config.use_alias = !args.no_alias;
    config.seed = args.seed;

    auto ablation = ai::ablation_mode_from_name(args.ablation);
    if (!ablation) throw ai::ConfigError("unknown ablation mode '" + args.ablation + "'");

    std::map<std::string, std::vector<std::string>> examples;
    if (*ablation != ai::AblationMode::no_examples && !args.instances_dir.empty()) {
        for (const auto& task : tasks) {
            std::vector<std::string> inputs;
            for (const auto& inst : load_task_instances(args.instances_dir, task.name)) {
                if (inst.split == ai::Split::train &&
                    static_cast<int>(inputs.size()) < args.num_examples) {
                    inputs.push_back(inst.input);
                }
            }
            examples[task.name] = std::move(inputs);
        }
    }

    ai::GenerateResult result =
        ai::generate_instructions(tasks, examples, config, deps, args.out_dir, *ablation);

    for (const auto& [name, artifact] : result.artifacts) {
        std::cout << "instructions ready for " << name << " ("
                  << artifact.instruction_token_count << " tokens approx, "
                  << artifact.transcript.steps.size() << " steps)\n";
    }
    for (const auto& [name, reason] : result.failures) {
        std::cerr << "FAILED " << name << ": " << reason << "\n";
    }
    std::cout << "agent invocations: " << result.agent_invocations << "\n";
    return result.failures.empty() ? 0 : 1;
}

struct EvalArgs {
    std::string tasks_file;
    std::vector<std::string> only;
    std::string backends_file;
    std::string mode = "zero-shot";
    std::string backend;
    std::string instructions_dir;
    std::string instances_dir;
    std::string results = "results.jsonl";
    std::string cache_dir;
    int self_consistency = 0;
    double temperature_override = -1.0;
    int workers = 4;
    long long seed = 0;
    bool resume = false;
    std::string report = "text";
    int max_instances = 0;
    std::string family = "plain";
    std::string prompt_preset = "default";
    int shots = 5;
};

int run_eval_cmd(const EvalArgs& args) {
    auto tasks = select_tasks(ai::load_tasks(args.tasks_file), args.only);
    if (args.instances_dir.empty()) {
        throw ai::ConfigError("eval needs --instances-dir");
    }

    ai::RunConfig config;
    for (const auto& t : tasks) config.tasks.push_back(t.name);
    auto mode = ai::prompt_mode_from_name(args.mode);
    if (!mode) throw ai::ConfigError("unknown mode '" + args.mode + "'");
    config.mode.mode = *mode;
    config.mode.shot_count = args.shots;
    if (args.self_consistency > 0) {
        ai::SelfConsistencyCfg sc;
        sc.n = args.self_consistency;
        config.mode.self_consistency = sc;
    }
    config.backend_id = args.backend;
    config.instructions_dir = args.instructions_dir;
    config.cache_dir = args.cache_dir;
    config.results_path = args.results;
    if (args.max_instances > 0) config.max_instances = args.max_instances;
    config.workers = args.workers;
    config.seed = args.seed;
    config.resume = args.resume;
    if (args.temperature_override >= 0.0) config.temperature_override = args.temperature_override;
    auto family = ai::family_from_name(args.family);
    if (!family) throw ai::ConfigError("unknown model family '" + args.family + "'");
    config.family = *family;
    // presets declared in the task-config document shadow the built-ins
    auto catalog =
        ai::load_prompt_presets(nlohmann::json::parse(ai::read_file(args.tasks_file)));
    if (auto it = catalog.find(args.prompt_preset); it != catalog.end()) {
        config.style = it->second;
    } else if (auto style = ai::prompt_style_preset(args.prompt_preset)) {
        config.style = *style;
    } else {
        throw ai::ConfigError("unknown prompt preset '" + args.prompt_preset + "'");
    }

    ai::Gateway gateway;
    if (!args.cache_dir.empty()) gateway.set_cache_dir(args.cache_dir);
    ai::register_backends_from_config(gateway, args.backends_file);
    if (!gateway.has_backend(config.backend_id)) {
        throw ai::ConfigError("backend '" + config.backend_id + "' is not declared");
    }

    std::vector<ai::EvalTask> eval_tasks;
    for (const auto& task : tasks) {
        eval_tasks.push_back(
            ai::make_eval_task(task, load_task_instances(args.instances_dir, task.name), config));
    }

    ai::Report report = ai::run_eval(eval_tasks, config, gateway);
    if (args.report == "json") {
        std::cout << ai::report_to_json(report).dump(2) << "\n";
    } else {
        std::cout << ai::render_report_text(report);
    }
    return report.errors > 0 ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"web-grounded instruction generation and two-stage reasoning evaluation"};
    app.require_subcommand(1);

    InstructArgs instruct_args;
    CLI::App* instruct = app.add_subcommand(
        "instruct", "run the agent once per task to generate instruction artifacts");
    instruct->add_option("--tasks", instruct_args.tasks_file, "task-config JSON file")->required();
    instruct->add_option("--only", instruct_args.only, "restrict to these task names");
    instruct->add_option("--backends", instruct_args.backends_file, "backends config JSON")
        ->required();
    instruct->add_option("--agent-backend", instruct_args.agent_backend, "backend id for the agent")
        ->required();
    instruct->add_option("--template-backend", instruct_args.template_backend,
                         "backend id for prompt-template inference (default: agent backend)");
    instruct->add_option("--qa-backend", instruct_args.qa_backend,
                         "backend id answering the QA tool (default: agent backend)");
    instruct->add_option("--out-dir", instruct_args.out_dir, "instruction artifact directory")
        ->required();
    instruct->add_option("--ablation", instruct_args.ablation,
                         "full|no_examples|no_label_description");
    instruct->add_option("--max-steps", instruct_args.max_steps, "agent step budget");
    instruct->add_option("--reruns", instruct_args.reruns, "pipeline reruns when no finish");
    instruct->add_option("--temperature", instruct_args.temperature, "agent temperature");
    instruct->add_flag("--no-alias", instruct_args.no_alias, "never substitute task aliases");
    instruct->add_option("--instances-dir", instruct_args.instances_dir,
                         "instance JSONL directory for input-only examples");
    instruct->add_option("--num-examples", instruct_args.num_examples,
                         "input-only examples per task");
    instruct->add_option("--search-script", instruct_args.search_script,
                         "scripted search results JSON (query -> urls)");
    instruct->add_option("--search-endpoint", instruct_args.search_endpoint,
                         "live web-search endpoint");
    instruct->add_option("--search-key-env", instruct_args.search_key_env,
                         "environment variable holding the search key");
    instruct->add_option("--page-map", instruct_args.page_map,
                         "JSON map url -> local html file for offline runs");
    instruct->add_option("--cache-dir", instruct_args.cache_dir, "completion cache directory");
    instruct->add_option("--seed", instruct_args.seed, "base seed for agent sampling");

    EvalArgs eval_args;
    CLI::App* eval = app.add_subcommand("eval", "run inference over task instances and score it");
    eval->add_option("--tasks", eval_args.tasks_file, "task-config JSON file")->required();
    eval->add_option("--only", eval_args.only, "restrict to these task names");
    eval->add_option("--backends", eval_args.backends_file, "backends config JSON")->required();
    eval->add_option("--mode", eval_args.mode,
                     "zero-shot|zero-shot-cot|agentinstruct|few-shot");
    eval->add_option("--backend", eval_args.backend, "backend id for reasoning")->required();
    eval->add_option("--instructions-dir", eval_args.instructions_dir,
                     "instruction artifact directory (agentinstruct mode)");
    eval->add_option("--instances-dir", eval_args.instances_dir, "instance JSONL directory")
        ->required();
    eval->add_option("--results", eval_args.results, "results JSONL path");
    eval->add_option("--cache-dir", eval_args.cache_dir, "completion cache directory");
    eval->add_option("--self-consistency", eval_args.self_consistency,
                     "sample N paths and majority-vote");
    eval->add_option("--temperature-override", eval_args.temperature_override,
                     "override the per-task temperatures");
    eval->add_option("--workers", eval_args.workers, "concurrent instance workers");
    eval->add_option("--seed", eval_args.seed, "run seed");
    eval->add_flag("--resume", eval_args.resume, "skip instances already in the results file");
    eval->add_option("--report", eval_args.report, "text|json");
    eval->add_option("--max-instances", eval_args.max_instances,
                     "evaluate at most N test instances per task");
    eval->add_option("--family", eval_args.family, "model family format (plain|llama2)");
    eval->add_option("--prompt-preset", eval_args.prompt_preset, "named prompt preset");
    eval->add_option("--shots", eval_args.shots, "few-shot shot count");

    CLI11_PARSE(app, argc, argv);

    try {
        if (instruct->parsed()) return run_instruct(instruct_args);
        if (eval->parsed()) return run_eval_cmd(eval_args);
    } catch (const ai::ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
