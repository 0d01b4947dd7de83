#pragma once

#include <map>
#include <string>
#include <vector>

#include "noboxlab/cli/config.hpp"

namespace noboxlab {

enum class Command {
    finetune,          // margin fine-tune a surrogate
    train_gen,         // train the perturbation generator against a surrogate
    attack,            // craft adversarial images with a trained generator
    eval,              // score an attacker against a target
    adv_train,         // train a target (PGD-adversarially or standard)
    audit,             // class-margin audit of a surrogate on a dataset
    export_emb,        // dump surrogate embeddings as CSV
    ablate_proportion  // full pipeline across tuning-data proportions
};

const char* command_name(Command c);
Command command_from_name(const std::string& name);

// What a finished (or failed, or dry) run left behind. Artifact paths are
// relative to the run directory; write() refuses to record paths that do not
// exist. The file lands atomically.
struct RunManifest {
    std::string run_id;
    std::string command;
    std::string config_hash;
    std::string status;      // "ok" | "failed" | "dry"
    std::string started_at;  // UTC, ISO-8601
    std::string finished_at;
    std::vector<std::string> artifacts;
    std::map<std::string, std::string> disjointness;  // check -> verdict
    std::string tool_version;
    std::string error;  // nonempty only when status == "failed"

    void write(const std::string& path) const;
    static RunManifest read(const std::string& path);
};

// Executes one command under the given configuration:
//   1. validates the config (missing/malformed keys and dangling paths raise
//      ValidationError before any compute),
//   2. claims the run directory <root>/<run id> (never overwrites; the root
//      comes from out.dir, else $NOBOXLAB_OUT, else "runs"),
//   3. runs the command with fixed seeds, collecting artifacts,
//   4. writes <run dir>/manifest.json.
// A dry run stops after step 2, printing the plan and writing a manifest
// marked "dry" with no artifacts. Mid-run failures write a partial manifest
// marked "failed" and rethrow.
RunManifest run_pipeline(const RunConfig& cfg, Command cmd,
                         bool dry_run = false);

// Full command-line surface: noboxlab <command> --config <path> [--config
// <path>]... [--set key=value]... [--seed N] [--dry-run]. Returns the
// process exit code: 0 success, 2 validation error, 3 disjointness refusal,
// 4 runtime failure.
int cli_main(int argc, const char* const* argv);

}  // namespace noboxlab
