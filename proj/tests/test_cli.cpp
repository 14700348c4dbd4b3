#include <doctest.h>

#include <cstdlib>
#include <json.hpp>
#include <sstream>
#include <sys/wait.h>

#include "agentinstruct/harness.hpp"
#include "helpers.hpp"

#ifndef AGENTINSTRUCT_CLI_PATH
#define AGENTINSTRUCT_CLI_PATH "agentinstruct"
#endif

using namespace agentinstruct;

namespace {

int run_cli(const std::string& args, const std::filesystem::path& log) {
    std::ostringstream cmd;
    cmd << AGENTINSTRUCT_CLI_PATH << " " << args << " > " << log << " 2>&1";
    int status = std::system(cmd.str().c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

struct CliEvalSetup {
    testutil::TempDir tmp{"cli"};

    CliEvalSetup() {
        write_file(tmp.path() / "tasks.json", R"({"tasks": [{
            "name": "math", "category": "generation", "metric": "QEM",
            "parser": "first-number", "answer_params": {"max_new_tokens": 10}}]})");
        std::string jsonl;
        for (int i = 0; i < 3; ++i) {
            nlohmann::ordered_json j;
            j["input"] = "Q" + std::to_string(i);
            j["references"] = {std::to_string(i)};
            j["split"] = "test";
            jsonl += j.dump() + "\n";
        }
        std::filesystem::create_directories(tmp.path() / "instances");
        write_file(tmp.path() / "instances" / "math.jsonl", jsonl);

        nlohmann::ordered_json script = nlohmann::ordered_json::array();
        for (int i = 0; i < 3; ++i) {
            script.push_back({{"match", "exact"},
                              {"prompt", "Q" + std::to_string(i)},
                              {"response", "Answer: " + std::to_string(i)}});
        }
        write_file(tmp.path() / "script.json", script.dump());
        write_file(tmp.path() / "backends.json",
                   R"({"backends": [{"id": "m", "kind": "scripted", "script": "script.json"}]})");
    }

    std::string base_eval(const std::string& backend = "m") const {
        std::ostringstream s;
        s << "eval --tasks " << (tmp.path() / "tasks.json") << " --backends "
          << (tmp.path() / "backends.json") << " --backend " << backend << " --instances-dir "
          << (tmp.path() / "instances") << " --results " << (tmp.path() / "results.jsonl");
        return s.str();
    }
};

}  // namespace

TEST_CASE("cli: zero-shot eval end to end with a json report") {
    CliEvalSetup setup;
    int code = run_cli(setup.base_eval() + " --mode zero-shot --report json",
                       setup.tmp.path() / "log.txt");
    CHECK(code == 0);

    auto report = nlohmann::json::parse(read_file(setup.tmp.path() / "log.txt"));
    CHECK(report.at("mode") == "zero-shot");
    CHECK(report.at("counts").at("instances") == 3);
    CHECK(report.at("counts").at("errors") == 0);
    CHECK(report.at("tasks")[0].at("score") == 1.0);

    auto records = load_results(setup.tmp.path() / "results.jsonl");
    REQUIRE(records.size() == 3);
    CHECK(records[0].parsed_answer == "0");
}

TEST_CASE("cli: configuration errors exit with code 2") {
    CliEvalSetup setup;
    auto log = setup.tmp.path() / "log.txt";
    CHECK(run_cli(setup.base_eval() + " --mode warp-drive", log) == 2);
    CHECK(run_cli(setup.base_eval("ghost") + " --mode zero-shot", log) == 2);
    CHECK(run_cli(setup.base_eval() + " --mode agentinstruct", log) == 2);  // no artifacts

    std::ostringstream instruct;
    instruct << "instruct --tasks " << (setup.tmp.path() / "tasks.json") << " --backends "
             << (setup.tmp.path() / "backends.json")
             << " --agent-backend m --out-dir " << (setup.tmp.path() / "artifacts");
    // neither --search-script nor --search-endpoint
    CHECK(run_cli(instruct.str(), log) == 2);
}

TEST_CASE("cli: missing required flags fail parsing") {
    testutil::TempDir tmp("cli_parse");
    CHECK(run_cli("eval", tmp.path() / "log.txt") != 0);
    CHECK(run_cli("", tmp.path() / "log.txt") != 0);
    CHECK(run_cli("--help", tmp.path() / "log.txt") == 0);
}

TEST_CASE("cli: errored instances flip the exit code to partial") {
    CliEvalSetup setup;
    // an instance file with one off-script input
    std::string extra = read_file(setup.tmp.path() / "instances" / "math.jsonl");
    extra += nlohmann::json({{"input", "off-script"}, {"references", {"9"}}, {"split", "test"}})
                 .dump() +
             "\n";
    write_file(setup.tmp.path() / "instances" / "math.jsonl", extra);
    int code = run_cli(setup.base_eval() + " --mode zero-shot", setup.tmp.path() / "log.txt");
    CHECK(code == 1);
}
